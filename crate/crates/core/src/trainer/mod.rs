//! Optimisation, the adversarial training loop, checkpoints and evaluation.

mod adam;
mod checkpoint;
mod config;
mod eval;
mod plateau;
mod run;
mod sampler;
mod state;
mod step;

pub use adam::{AdamConfig, AdamState, Moments};
pub use checkpoint::{Checkpoint, FORMAT_VERSION, MAGIC};
pub use config::{TrainConfig, CONFIG_KEYS};
pub use eval::{
    evaluate, score_image, EvalItem, EvalReport, EvalRow, EvalSettings, Inpainter, MeanFill,
    Perfect,
};
pub use plateau::Plateau;
pub use run::{
    checkpoint_path, initial_state, train_loop, StopReason, TrainOutcome, FINAL_CHECKPOINT,
    LOG_FILE,
};
pub use sampler::{Batch, TrainData};
pub use state::{mix_seed, TrainState};
pub use step::{train_step, StepReport};
