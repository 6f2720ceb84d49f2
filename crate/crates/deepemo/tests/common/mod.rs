#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use deepemo::audio_file::write_wav_pcm16;
use deepemo_core::dataset::{EmotionLabel, RavdessFields};
use deepemo_core::synth::tone;

pub fn binary() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_deepemo"));
    cmd.env_remove(deepemo::config::CACHE_DIR_ENV);
    cmd
}

/// Runs the CLI with `args`, returning the raw output.
pub fn run(args: &[&str]) -> Output {
    binary().args(args).output().expect("binary runs")
}

pub fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

pub fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// Writes `per_class` synthetic tones for every emotion, one actor per variant.
pub fn write_corpus(dir: &Path, per_class: usize) -> Vec<PathBuf> {
    std::fs::create_dir_all(dir).unwrap();
    let mut paths = Vec::new();
    for label in EmotionLabel::ALL {
        for variant in 0..per_class {
            let name = RavdessFields::speech(label, variant as u8 + 1).file_name();
            let path = dir.join(name);
            write_wav_pcm16(&path, &tone(label.index(), variant as u32)).unwrap();
            paths.push(path);
        }
    }
    paths
}

pub fn path_str(p: &Path) -> &str {
    p.to_str().expect("utf-8 temp path")
}
