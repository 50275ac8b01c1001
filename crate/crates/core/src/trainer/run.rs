use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::data::channel_mean;
use crate::error::{PceError, Result};

use super::config::TrainConfig;
use super::sampler::TrainData;
use super::state::TrainState;
use super::step::{train_step, StepReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    MaxSteps,
    Plateau,
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub state: TrainState,
    pub reports: Vec<StepReport>,
    pub stop: StopReason,
    /// Every checkpoint written, in order; the last is the final state.
    pub checkpoints: Vec<PathBuf>,
}

pub fn checkpoint_path(out_dir: &Path, step: u64) -> PathBuf {
    out_dir.join(format!("step-{step:08}.ckpt"))
}

pub const FINAL_CHECKPOINT: &str = "final.ckpt";
pub const LOG_FILE: &str = "train.log";

/// Fresh state for `config`, measuring the fill mean from `data` if unset.
pub fn initial_state(mut config: TrainConfig, data: &TrainData) -> Result<TrainState> {
    if config.fill_mean.is_none() {
        config.fill_mean = Some(channel_mean(data.images()));
    }
    TrainState::new(config)
}

/// Runs updates until `max_steps` or the plateau rule fires.
///
/// Writes `step-N.ckpt` at step 0 of a fresh run and every
/// `checkpoint_every` steps, `final.ckpt` at the end, and appends one line
/// per step to `train.log`.
pub fn train_loop(
    mut state: TrainState,
    data: &mut TrainData,
    out_dir: &Path,
) -> Result<TrainOutcome> {
    fs::create_dir_all(out_dir).map_err(|e| PceError::io(out_dir, e))?;
    let log_path = out_dir.join(LOG_FILE);
    let mut log = OpenOptions::new()
        .create(true)
        .append(true)
        .open(&log_path)
        .map_err(|e| PceError::io(&log_path, e))?;
    let mut checkpoints = Vec::new();
    let mut save = |state: &TrainState, path: PathBuf| -> Result<()> {
        state.to_checkpoint().save(&path)?;
        log::info!("wrote {}", path.display());
        checkpoints.push(path);
        Ok(())
    };
    if state.step == 0 {
        save(&state, checkpoint_path(out_dir, 0))?;
    }
    let cfg = state.config.clone();
    let fill = state.fill_values();
    let mask = cfg.mask_spec();
    let start = Instant::now();
    let mut reports = Vec::new();
    let mut stop = StopReason::MaxSteps;
    while state.step < cfg.max_steps {
        let batch = data.batch(state.step, cfg.batch, cfg.seed, &mask, cfg.flip, fill)?;
        let report = train_step(&mut state, &batch)?;
        writeln!(log, "{report} wall={:.3}", start.elapsed().as_secs_f64())
            .map_err(|e| PceError::io(&log_path, e))?;
        log::debug!("{report}");
        reports.push(report);
        let plateaued = state.plateau.push(report.l1);
        if state.step % cfg.checkpoint_every == 0 {
            save(&state, checkpoint_path(out_dir, state.step))?;
        }
        if plateaued {
            log::info!("masked L1 plateaued at step {}", state.step);
            stop = StopReason::Plateau;
            break;
        }
    }
    save(&state, out_dir.join(FINAL_CHECKPOINT))?;
    Ok(TrainOutcome {
        state,
        reports,
        stop,
        checkpoints,
    })
}
