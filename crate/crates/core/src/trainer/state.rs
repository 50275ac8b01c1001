use std::collections::HashMap;

use crate::error::{PceError, Result};
use crate::model::{Discriminator, Generator, Param};
use crate::tensor::{BnStats, Tensor4};

use super::adam::{AdamState, Moments};
use super::checkpoint::Checkpoint;
use super::config::TrainConfig;
use super::plateau::Plateau;

/// Everything that evolves during training.
#[derive(Debug, Clone)]
pub struct TrainState {
    /// Snapshot with `fill_mean` resolved.
    pub config: TrainConfig,
    pub generator: Generator<f32>,
    pub discriminator: Discriminator<f32>,
    pub g_adam: AdamState<f32>,
    pub d_adam: AdamState<f32>,
    pub plateau: Plateau,
    pub step: u64,
}

/// SplitMix64 finaliser, used to derive independent seeds.
pub fn mix_seed(a: u64, b: u64) -> u64 {
    let mut z = a ^ b
        .wrapping_add(0x9E37_79B9_7F4A_7C15)
        .wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl TrainState {
    /// Fresh models for `config`, which must have `fill_mean` set.
    pub fn new(config: TrainConfig) -> Result<Self> {
        config.validate()?;
        if config.fill_mean.is_none() {
            return Err(PceError::config(
                "fill_mean must be resolved before building a training state",
            ));
        }
        let generator = Generator::build(config.generator_config(), mix_seed(config.seed, 1))?;
        let discriminator =
            Discriminator::build(config.discriminator_config(), mix_seed(config.seed, 2))?;
        Ok(TrainState {
            g_adam: AdamState::new(config.adam_config()),
            d_adam: AdamState::new(config.adam_config()),
            plateau: Plateau::new(config.plateau_window, config.plateau_tolerance)?,
            generator,
            discriminator,
            config,
            step: 0,
        })
    }

    pub fn fill_values(&self) -> [f64; 3] {
        self.config
            .fill
            .values(self.config.fill_mean.unwrap_or([0.5; 3]))
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut tensors = Vec::new();
        let mut scalars = Vec::new();
        for (name, p) in self
            .generator
            .stack
            .params("g")
            .into_iter()
            .chain(self.discriminator.stack.params("d"))
        {
            tensors.push((name, p.value.clone()));
        }
        for (name, s) in self
            .generator
            .stack
            .stats("g")
            .into_iter()
            .chain(self.discriminator.stack.stats("d"))
        {
            let c = s.channels();
            tensors.push((
                format!("{name}.running_mean"),
                Tensor4::from_vec([1, c, 1, 1], s.mean.clone()).expect("stats shape"),
            ));
            tensors.push((
                format!("{name}.running_var"),
                Tensor4::from_vec([1, c, 1, 1], s.var.clone()).expect("stats shape"),
            ));
            scalars.push((format!("{name}.updates"), s.updates));
        }
        for (prefix, adam) in [("adam.g", &self.g_adam), ("adam.d", &self.d_adam)] {
            scalars.push((format!("{prefix}.step"), adam.step));
            for (name, m) in &adam.moments {
                tensors.push((format!("{prefix}.{name}.m"), m.m.clone()));
                tensors.push((format!("{prefix}.{name}.v"), m.v.clone()));
            }
        }
        for (i, l) in self.plateau.history().enumerate() {
            scalars.push((format!("plateau.{i}"), l.to_bits()));
        }
        Checkpoint {
            step: self.step,
            config: self.config.to_text(),
            tensors,
            scalars,
        }
    }

    /// Rebuilds the state; every stored tensor must be consumed and every
    /// model tensor must be present with a matching shape.
    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        let config = TrainConfig::from_text(&ckpt.config)?;
        let mut state = TrainState::new(config)?;
        state.step = ckpt.step;
        let mut tensors: HashMap<&str, &Tensor4<f32>> =
            ckpt.tensors.iter().map(|(n, t)| (n.as_str(), t)).collect();
        let scalars: HashMap<&str, u64> =
            ckpt.scalars.iter().map(|(n, v)| (n.as_str(), *v)).collect();
        let mut take = |name: &str, shape: [usize; 4]| -> Result<Tensor4<f32>> {
            let t = tensors
                .remove(name)
                .ok_or_else(|| PceError::Checkpoint(format!("missing tensor {name}")))?;
            if t.shape() != shape {
                return Err(PceError::Checkpoint(format!(
                    "{name}: stored shape {:?}, model expects {shape:?}",
                    t.shape()
                )));
            }
            Ok(t.clone())
        };
        let scalar = |name: &str| -> Result<u64> {
            scalars
                .get(name)
                .copied()
                .ok_or_else(|| PceError::Checkpoint(format!("missing scalar {name}")))
        };
        let restore_params = |params: Vec<(String, &mut Param<f32>)>,
                              take: &mut dyn FnMut(&str, [usize; 4]) -> Result<Tensor4<f32>>|
         -> Result<()> {
            for (name, p) in params {
                p.value = take(&name, p.value.shape())?;
            }
            Ok(())
        };
        restore_params(state.generator.stack.params_mut("g"), &mut take)?;
        restore_params(state.discriminator.stack.params_mut("d"), &mut take)?;
        let restore_stats = |stats: Vec<(String, &mut BnStats<f32>)>,
                             take: &mut dyn FnMut(&str, [usize; 4]) -> Result<Tensor4<f32>>|
         -> Result<()> {
            for (name, s) in stats {
                let c = s.channels();
                s.mean = take(&format!("{name}.running_mean"), [1, c, 1, 1])?.into_vec();
                s.var = take(&format!("{name}.running_var"), [1, c, 1, 1])?.into_vec();
                s.updates = scalar(&format!("{name}.updates"))?;
            }
            Ok(())
        };
        restore_stats(state.generator.stack.stats_mut("g"), &mut take)?;
        restore_stats(state.discriminator.stack.stats_mut("d"), &mut take)?;
        let shapes: Vec<(String, [usize; 4])> = state
            .generator
            .stack
            .params("g")
            .into_iter()
            .chain(state.discriminator.stack.params("d"))
            .map(|(n, p)| (n, p.value.shape()))
            .collect();
        for (prefix, adam) in [("adam.g", &mut state.g_adam), ("adam.d", &mut state.d_adam)] {
            adam.step = scalar(&format!("{prefix}.step"))?;
            if adam.step == 0 {
                continue;
            }
            for (name, shape) in shapes.iter().filter(|(n, _)| n.starts_with(&prefix[5..])) {
                let m = take(&format!("{prefix}.{name}.m"), *shape)?;
                let v = take(&format!("{prefix}.{name}.v"), *shape)?;
                adam.moments.insert(name.clone(), Moments { m, v });
            }
        }
        let mut i = 0;
        while let Some(bits) = scalars.get(format!("plateau.{i}").as_str()) {
            state.plateau.push(f64::from_bits(*bits));
            i += 1;
        }
        drop(take);
        if let Some(extra) = tensors.keys().next() {
            return Err(PceError::Checkpoint(format!("unexpected tensor {extra}")));
        }
        Ok(state)
    }
}
