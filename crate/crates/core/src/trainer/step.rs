use std::fmt;

use crate::error::{PceError, Result};
use crate::loss::{discriminator_loss, generator_adv_loss, masked_l1};
use crate::model::{composite, composite_backward};
use crate::tensor::{add, Tensor4};

use super::sampler::Batch;
use super::state::TrainState;

/// Losses measured during one update, before the parameters moved.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepReport {
    /// 1-based index of the completed step.
    pub step: u64,
    pub l1: f64,
    pub adv: f64,
    pub d_loss: f64,
}

impl fmt::Display for StepReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "step={} l1={:.8} adv={:.8} d_loss={:.8}",
            self.step, self.l1, self.adv, self.d_loss
        )
    }
}

fn finite(name: &str, v: f32) -> Result<f64> {
    if v.is_finite() {
        Ok(v as f64)
    } else {
        Err(PceError::Numeric(format!("{name} is {v}")))
    }
}

/// One discriminator update on the real and composited fake batch, then one
/// generator update on `lambda * L1 + (1 - lambda) * adv`.
pub fn train_step(state: &mut TrainState, batch: &Batch) -> Result<StepReport> {
    let lambda = state.config.lambda as f32;
    let variant = state.config.gan;
    state.generator.stack.zero_grad();
    state.discriminator.stack.zero_grad();

    let (y, g_cache) = state.generator.forward_train(&batch.input)?;
    let fake = composite(&y, &batch.real, &batch.mask)?;

    let d_loss = finite(
        "discriminator loss",
        discriminator_loss(&mut state.discriminator, &batch.real, &fake)?,
    )?;
    state
        .d_adam
        .step(state.discriminator.stack.params_mut("d"))?;

    let l1 = masked_l1(&fake, &batch.real, &batch.mask)?;
    let adv = generator_adv_loss(&mut state.discriminator, &fake, variant)?;
    let report = StepReport {
        step: state.step + 1,
        l1: finite("masked L1", l1.value)?,
        adv: finite("adversarial loss", adv.value)?,
        d_loss,
    };
    let grad_fake = add(
        &l1.grad.map(|g| g * lambda),
        &adv.grad.map(|g| g * (1.0 - lambda)),
    )?;
    let grad_y: Tensor4<f32> = composite_backward(&grad_fake, &batch.mask)?;
    state.generator.backward(&g_cache, &grad_y)?;
    state.g_adam.step(state.generator.stack.params_mut("g"))?;

    state.step += 1;
    Ok(report)
}
