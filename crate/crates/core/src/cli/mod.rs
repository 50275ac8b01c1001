//! The `pce` command-line front end.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.

mod analyze;
mod commands;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::error::PceError;
use crate::trainer::TrainConfig;

pub use analyze::{
    analyze_report, DISCRIMINATOR_CONVENTION, DISCRIMINATOR_TOLERANCE, GENERATOR_CONVENTION,
    PUBLISHED_DISCRIMINATOR_PARAMS, PUBLISHED_GENERATOR_PARAMS, PUBLISHED_RF,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "pce",
    version,
    about = "Pixel context encoder: dilated-convolution inpainting"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print the receptive-field table and parameter counts.
    Analyze {
        #[arg(long, default_value_t = 4)]
        n_dilated: usize,
        #[arg(long, default_value_t = 128)]
        base_filters: usize,
    },
    /// Train on the `train` split of a manifest.
    Train {
        #[arg(long)]
        manifest: PathBuf,
        /// Continue from this checkpoint; its configuration snapshot is the base.
        #[arg(long)]
        resume: Option<PathBuf>,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Inpaint one image and write ground truth, input, output and a triptych.
    Infer {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        image: PathBuf,
        /// Mask image (white = missing) instead of task geometry.
        #[arg(long)]
        mask_image: Option<PathBuf>,
        #[arg(long, default_value = "png")]
        format: ImageFormat,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Place an image at the centre of a larger canvas and generate the border.
    Extrapolate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        image: PathBuf,
        #[arg(long, default_value = "png")]
        format: ImageFormat,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Score a checkpoint on a manifest split and write metric tables.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, default_value = "test")]
        split: String,
        /// Also score the mean-fill baseline on the same masks.
        #[arg(long)]
        baseline: bool,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Run the finite-difference gradient suite in 64-bit arithmetic.
    Gradcheck {
        #[arg(long, default_value_t = 20)]
        cases: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Write a procedural image corpus and its manifest.
    Synth {
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 2000)]
        count: usize,
        /// Number of trailing images tagged `test`.
        #[arg(long, default_value_t = 200)]
        holdout: usize,
        #[arg(long, default_value_t = 64)]
        size: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum ImageFormat {
    Png,
    Ppm,
}

impl ImageFormat {
    pub fn extension(self) -> &'static str {
        match self {
            ImageFormat::Png => "png",
            ImageFormat::Ppm => "ppm",
        }
    }
}

/// Configuration file plus one flag per configuration key; flags win.
#[derive(Debug, Clone, Default, Args)]
pub struct ConfigArgs {
    /// `key = value` configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
    /// Extra `key=value` override, repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    #[arg(long)]
    pub task: Option<String>,
    #[arg(long)]
    pub image_size: Option<String>,
    #[arg(long)]
    pub region_size: Option<String>,
    #[arg(long)]
    pub overlap: Option<String>,
    #[arg(long)]
    pub fill: Option<String>,
    #[arg(long)]
    pub fill_mean: Option<String>,
    #[arg(long)]
    pub flip: Option<String>,
    #[arg(long)]
    pub lambda: Option<String>,
    #[arg(long)]
    pub gan: Option<String>,
    #[arg(long)]
    pub lr: Option<String>,
    #[arg(long)]
    pub beta1: Option<String>,
    #[arg(long)]
    pub beta2: Option<String>,
    #[arg(long)]
    pub eps: Option<String>,
    #[arg(long)]
    pub batch: Option<String>,
    #[arg(long)]
    pub max_steps: Option<String>,
    #[arg(long)]
    pub plateau_window: Option<String>,
    #[arg(long)]
    pub plateau_tolerance: Option<String>,
    #[arg(long)]
    pub checkpoint_every: Option<String>,
    #[arg(long)]
    pub seed: Option<String>,
    /// Single-threaded, fixed reduction order (the only mode this build has).
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub deterministic: Option<String>,
    #[arg(long)]
    pub base_filters: Option<String>,
    #[arg(long)]
    pub n_dilated: Option<String>,
    #[arg(long)]
    pub disc_base: Option<String>,
}

impl ConfigArgs {
    fn flag_values(&self) -> Vec<(&'static str, &Option<String>)> {
        vec![
            ("task", &self.task),
            ("image_size", &self.image_size),
            ("region_size", &self.region_size),
            ("overlap", &self.overlap),
            ("fill", &self.fill),
            ("fill_mean", &self.fill_mean),
            ("flip", &self.flip),
            ("lambda", &self.lambda),
            ("gan", &self.gan),
            ("lr", &self.lr),
            ("beta1", &self.beta1),
            ("beta2", &self.beta2),
            ("eps", &self.eps),
            ("batch", &self.batch),
            ("max_steps", &self.max_steps),
            ("plateau_window", &self.plateau_window),
            ("plateau_tolerance", &self.plateau_tolerance),
            ("checkpoint_every", &self.checkpoint_every),
            ("seed", &self.seed),
            ("deterministic", &self.deterministic),
            ("base_filters", &self.base_filters),
            ("n_dilated", &self.n_dilated),
            ("disc_base", &self.disc_base),
        ]
    }

    /// Layers the config file, then `--set` pairs, then named flags onto `base`.
    pub fn resolve(&self, mut base: TrainConfig) -> crate::Result<TrainConfig> {
        if let Some(path) = &self.config {
            let text = std::fs::read_to_string(path).map_err(|e| PceError::io(path, e))?;
            base.apply_text(&text)
                .map_err(|e| PceError::Config(format!("{}: {e}", path.display())))?;
        }
        for pair in &self.set {
            let (k, v) = pair.split_once('=').ok_or_else(|| {
                PceError::Config(format!("--set expects KEY=VALUE, got {pair:?}"))
            })?;
            base.set(k, v)?;
        }
        for (key, value) in self.flag_values() {
            if let Some(v) = value {
                base.set(key, v)?;
            }
        }
        Ok(base)
    }
}

/// Exit code for a library error.
pub fn exit_code(err: &PceError) -> i32 {
    match err {
        PceError::Config(_) => EXIT_USAGE,
        PceError::Numeric(_) => EXIT_NUMERIC,
        PceError::Shape(_)
        | PceError::Io { .. }
        | PceError::Format { .. }
        | PceError::Unsupported(_)
        | PceError::Uninitialized(_)
        | PceError::Checkpoint(_) => EXIT_DATA,
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match commands::dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
