//! Batch entry points of the `mono3d` binary.
//!
//! [`dispatch`] parses arguments, resolves the run configuration, echoes it to
//! `<out>/config.txt` and runs one subcommand. Exit codes: 0 on success, 1 on
//! usage or validation errors, 2 on I/O errors.

pub mod commands;
pub mod config;
pub mod render;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};
use mono3d_core::codec::CodecError;
use mono3d_core::kitti::KittiError;
use mono3d_toytrain::ToyError;
use thiserror::Error;

pub use config::RunConfig;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Invalid(String),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Invalid(_) => 1,
            CliError::Io(_) => 2,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<KittiError> for CliError {
    fn from(e: KittiError) -> Self {
        match e {
            KittiError::Io { .. } => CliError::Io(e.to_string()),
            e => CliError::Invalid(e.to_string()),
        }
    }
}

impl From<CodecError> for CliError {
    fn from(e: CodecError) -> Self {
        match e {
            CodecError::Io(_) => CliError::Io(e.to_string()),
            e => CliError::Invalid(e.to_string()),
        }
    }
}

impl From<ToyError> for CliError {
    fn from(e: ToyError) -> Self {
        match e {
            ToyError::Io(_) | ToyError::Codec(CodecError::Io(_)) => CliError::Io(e.to_string()),
            e => CliError::Invalid(e.to_string()),
        }
    }
}

impl From<image::ImageError> for CliError {
    fn from(e: image::ImageError) -> Self {
        match e {
            image::ImageError::IoError(_) => CliError::Io(e.to_string()),
            e => CliError::Invalid(e.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "mono3d", version, about = "Keypoint-based monocular 3D detection tools")]
pub struct Cli {
    /// Flat `key = value` configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the `seed` key.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Caps the number of worker threads.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Per-class dimension and depth statistics of a KITTI-layout dataset.
    Stats {
        #[arg(long)]
        data: PathBuf,
    },
    /// Encodes labels into training targets.
    Encode {
        #[arg(long)]
        data: PathBuf,
        /// Also write the ideal network outputs for each frame.
        #[arg(long)]
        ideal: bool,
    },
    /// Decodes stored output maps into KITTI detection files.
    Decode {
        /// Directory of `<id>.m3dp` output maps.
        #[arg(long)]
        outputs: PathBuf,
        /// Directory of `<id>.txt` calibration files.
        #[arg(long)]
        calib: PathBuf,
    },
    /// Average precision of detections against labels.
    Eval {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        dets: PathBuf,
    },
    /// Depth error of detections per 10 m depth bin.
    DepthReport {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        dets: PathBuf,
    },
    /// Trains the toy model on synthetic scenes.
    TrainToy,
    /// Trains the toy model once per loss variant and seed.
    Ablate,
    /// Finite-difference check of the toy model gradient.
    Gradcheck {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Draws boxes on images and writes bird's-eye plots.
    Render {
        /// KITTI-layout dataset; synthetic scenes are drawn when absent.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        dets: Option<PathBuf>,
        /// Toy model used to detect objects in synthetic scenes.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
}

/// Runs the command line `args` (program name first) and returns the exit code.
pub fn dispatch<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    let text = match &cli.config {
        Some(p) => std::fs::read_to_string(p).map_err(|e| CliError::Io(format!("{}: {e}", p.display())))?,
        None => String::new(),
    };
    let mut cfg = RunConfig::parse(&text)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    let cfg = cfg.resolve()?;
    std::fs::create_dir_all(&cli.out).map_err(|e| CliError::Io(format!("{}: {e}", cli.out.display())))?;
    std::fs::write(cli.out.join("config.txt"), cfg.to_text())?;
    let out = cli.out.clone();
    mono3d_core::exec::with_jobs(cli.jobs, move || commands::execute(&cli.command, &cfg, &out))
}
