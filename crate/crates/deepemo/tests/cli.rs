mod common;

use std::fs;
use std::path::Path;

use common::{binary, path_str, run, stderr, stdout, write_corpus};
use deepemo::reports::{parse_metrics, read_manifest, METRICS_HEADER};

fn cached_features(dir: &Path) -> usize {
    fs::read_dir(dir)
        .unwrap()
        .filter(|e| {
            e.as_ref()
                .unwrap()
                .path()
                .extension()
                .is_some_and(|x| x == "mspc")
        })
        .count()
}

fn corpus(root: &Path) -> String {
    write_corpus(&root.join("data"), 2);
    path_str(&root.join("data")).to_owned()
}

#[test]
fn help_and_version_exit_zero() {
    for args in [&["--help"][..], &["--version"], &["train", "--help"]] {
        let out = run(args);
        assert_eq!(out.status.code(), Some(0), "{args:?}");
        assert!(!stdout(&out).is_empty());
    }
    assert!(stdout(&run(&["train", "--help"])).contains("[default: 0.00003]"));
}

#[test]
fn usage_errors_exit_one() {
    for args in [
        &["bogus"][..],
        &["train", "--epochs", "many"],
        &["train", "--n-fft", "1000"],
        &["render", "missing.wav", "x.pgm", "--hop", "0"],
    ] {
        let out = run(args);
        assert_eq!(out.status.code(), Some(1), "{args:?}: {}", stderr(&out));
    }
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, "epochz = 3\n").unwrap();
    let out = run(&["train", "--config", path_str(&cfg)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("epochz"));
}

#[test]
fn data_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope");
    let out = run(&["features", "--dataset-root", path_str(&missing)]);
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));

    let empty = dir.path().join("empty");
    fs::create_dir(&empty).unwrap();
    fs::write(empty.join("not-ravdess.wav"), b"RIFF").unwrap();
    let out = run(&[
        "features",
        "--dataset-root",
        path_str(&empty),
        "--cache-dir",
        path_str(&dir.path().join("c")),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("1 skipped"), "{}", stderr(&out));

    let junk = dir.path().join("junk.demo");
    fs::write(&junk, b"not a checkpoint").unwrap();
    let wav = dir.path().join("a.wav");
    deepemo::audio_file::write_wav_pcm16(&wav, &deepemo_core::synth::tone(0, 0)).unwrap();
    let out = run(&["predict", path_str(&wav), "--checkpoint", path_str(&junk)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(
        stderr(&out).starts_with("error: checkpoint:"),
        "{}",
        stderr(&out)
    );
}

#[test]
fn features_cache_is_reused() {
    let dir = tempfile::tempdir().unwrap();
    let data = corpus(dir.path());
    fs::write(Path::new(&data).join("readme.wav"), b"junk").unwrap();
    let cache = path_str(&dir.path().join("cache")).to_owned();
    let args = ["features", "--dataset-root", &data, "--cache-dir", &cache];

    let first = run(&args);
    assert!(first.status.success(), "{}", stderr(&first));
    let text = stdout(&first);
    assert!(text.contains("SKIP"), "{text}");
    assert!(text.contains("16 computed, 0 cached"), "{text}");
    let rows =
        read_manifest(fs::File::open(dir.path().join("cache/manifest.csv")).unwrap()).unwrap();
    assert_eq!(rows.len(), 16);
    assert!(fs::read_to_string(dir.path().join("cache/skipped.txt"))
        .unwrap()
        .contains("readme.wav"));

    let second = run(&args);
    assert!(stdout(&second).contains("0 computed, 16 cached"));
}

#[test]
fn cache_dir_env_and_config_layering() {
    let dir = tempfile::tempdir().unwrap();
    let data = corpus(dir.path());
    let env_cache = dir.path().join("env-cache");
    let out = binary()
        .args(["features", "--dataset-root", &data])
        .env(deepemo::config::CACHE_DIR_ENV, &env_cache)
        .current_dir(dir.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(cached_features(&env_cache), 16);

    // A config file outranks the environment; a flag outranks the file.
    let file_cache = dir.path().join("file-cache");
    let cfg = dir.path().join("run.cfg");
    fs::write(
        &cfg,
        format!("cache_dir = {}\nn_mels = 32\n", file_cache.display()),
    )
    .unwrap();
    let out = binary()
        .args([
            "features",
            "--dataset-root",
            &data,
            "--config",
            path_str(&cfg),
            "--n-mels",
            "16",
        ])
        .env(deepemo::config::CACHE_DIR_ENV, &env_cache)
        .current_dir(dir.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&out).contains("16 computed"));
    assert_eq!(cached_features(&file_cache), 16);
}

#[test]
fn zero_epochs_writes_header_and_initial_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let data = corpus(dir.path());
    let out_dir = dir.path().join("out");
    let out = run(&[
        "train",
        "--dataset-root",
        &data,
        "--cache-dir",
        path_str(&dir.path().join("cache")),
        "--out-dir",
        path_str(&out_dir),
        "--arch",
        "resnet_tiny",
        "--epochs",
        "0",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(
        fs::read_to_string(out_dir.join("metrics.csv")).unwrap(),
        format!("{}\n", METRICS_HEADER.join(","))
    );
    let cp = deepemo::checkpoint_file::load(&out_dir.join("last.demo")).unwrap();
    assert_eq!(cp.meta.epoch, 0);
    assert!(cp.meta.features.is_some());
}

#[test]
fn train_eval_predict_render_round() {
    let dir = tempfile::tempdir().unwrap();
    let data = corpus(dir.path());
    let out_dir = dir.path().join("out");
    let out_s = path_str(&out_dir).to_owned();
    let cache = path_str(&dir.path().join("cache")).to_owned();
    let common = [
        "--dataset-root",
        &data,
        "--cache-dir",
        &cache,
        "--train-fraction",
        "0.5",
    ];

    let mut train = vec![
        "train",
        "--out-dir",
        &out_s,
        "--arch",
        "resnet_tiny",
        "--epochs",
        "3",
        "--lr",
        "0.001",
    ];
    train.extend(common);
    let out = run(&train);
    assert!(out.status.success(), "{}", stderr(&out));
    let history = parse_metrics(fs::File::open(out_dir.join("metrics.csv")).unwrap()).unwrap();
    assert_eq!(history.len(), 3);
    assert!(history.iter().all(|m| m.val_accuracy.is_some()));
    assert!(out_dir.join("best.demo").exists());

    let checkpoint = path_str(&out_dir.join("best.demo")).to_owned();
    let mut eval = vec![
        "eval",
        "--checkpoint",
        &checkpoint,
        "--out-dir",
        &out_s,
        "--split",
        "all",
    ];
    eval.extend(common);
    let out = run(&eval);
    assert!(out.status.success(), "{}", stderr(&out));
    let confusion = fs::read_to_string(out_dir.join("confusion_all.csv")).unwrap();
    assert_eq!(confusion.lines().count(), 9);
    let counted: u32 = confusion
        .lines()
        .skip(1)
        .flat_map(|l| l.split(',').skip(1).map(|c| c.parse::<u32>().unwrap()))
        .sum();
    assert_eq!(counted, 16);

    let wav = Path::new(&data).join("03-01-05-01-01-01-01.wav");
    let image = dir.path().join("angry.png");
    let out = run(&[
        "predict",
        path_str(&wav),
        "--checkpoint",
        &checkpoint,
        "--k",
        "3",
        "--image",
        path_str(&image),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("rank,label,probability"), "{text}");
    assert_eq!(
        text.lines()
            .filter(|l| l.starts_with(|c: char| c.is_ascii_digit()))
            .count(),
        3
    );
    assert_eq!(&fs::read(&image).unwrap()[1..4], b"PNG");

    let pgm = dir.path().join("angry.pgm");
    let out = run(&["render", path_str(&wav), path_str(&pgm)]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(fs::read(&pgm).unwrap().starts_with(b"P5\n"));
}
