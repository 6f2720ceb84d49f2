//! File formats, dataset tooling and the command line for `deepemo`.
//!
//! The numerical pipeline lives in `deepemo-core`; this crate adds the
//! pieces that touch the file system: WAV files, DEMO checkpoints, MSPC
//! feature caches, PGM/PNG images, CSV reports and the `deepemo` binary.

pub mod audio_file;
pub mod checkpoint_file;
pub mod cli;
pub mod commands;
pub mod config;
pub mod dataset;
pub mod image_file;
pub mod mspc;
pub mod reports;

pub use deepemo_core as core;
