//! Training configuration as plain `key = value` text.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::data::{Fill, MaskSpec, Task};
use crate::error::{PceError, Result};
use crate::loss::{GanVariant, LossConfig};
use crate::model::{receptive_field_table, DiscriminatorConfig, GeneratorConfig};

use super::adam::AdamConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub task: Task,
    pub image_size: usize,
    pub region_size: usize,
    pub overlap: usize,
    pub fill: Fill,
    /// Per-channel fill on `[0, 1]`; measured from the training split when unset.
    pub fill_mean: Option<[f64; 3]>,
    /// Random horizontal mirroring of training crops.
    pub flip: bool,
    pub lambda: f64,
    pub gan: GanVariant,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub batch: usize,
    pub max_steps: u64,
    pub plateau_window: usize,
    pub plateau_tolerance: f64,
    pub checkpoint_every: u64,
    pub seed: u64,
    pub deterministic: bool,
    pub base_filters: usize,
    pub n_dilated: usize,
    pub disc_base: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let adam = AdamConfig::default();
        TrainConfig {
            task: Task::Center,
            image_size: 256,
            region_size: 128,
            overlap: 4,
            fill: Fill::Mean,
            fill_mean: None,
            flip: true,
            lambda: 0.999,
            gan: GanVariant::NonSaturating,
            lr: adam.lr,
            beta1: adam.beta1,
            beta2: adam.beta2,
            eps: adam.eps,
            batch: 8,
            max_steps: 100_000,
            plateau_window: 1000,
            plateau_tolerance: 0.005,
            checkpoint_every: 1000,
            seed: 0,
            deterministic: true,
            base_filters: 128,
            n_dilated: 4,
            disc_base: 64,
        }
    }
}

/// Every accepted key, in snapshot order.
pub const CONFIG_KEYS: &[&str] = &[
    "task",
    "image_size",
    "region_size",
    "overlap",
    "fill",
    "fill_mean",
    "flip",
    "lambda",
    "gan",
    "lr",
    "beta1",
    "beta2",
    "eps",
    "batch",
    "max_steps",
    "plateau_window",
    "plateau_tolerance",
    "checkpoint_every",
    "seed",
    "deterministic",
    "base_filters",
    "n_dilated",
    "disc_base",
];

fn parse<V: std::str::FromStr>(key: &str, value: &str) -> Result<V> {
    value
        .parse()
        .map_err(|_| PceError::config(format!("{key}: cannot parse {value:?}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(PceError::config(format!(
            "{key}: expected true or false, got {value:?}"
        ))),
    }
}

impl TrainConfig {
    /// Sets one key; `-` and `_` are interchangeable in key names.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.trim().replace('-', "_");
        let value = value.trim();
        let k = key.as_str();
        match k {
            "task" => self.task = value.parse()?,
            "image_size" => self.image_size = parse(k, value)?,
            "region_size" => self.region_size = parse(k, value)?,
            "overlap" => self.overlap = parse(k, value)?,
            "fill" => self.fill = value.parse()?,
            "fill_mean" => {
                self.fill_mean = if value.is_empty() || value == "auto" {
                    None
                } else {
                    let parts: Vec<f64> = value
                        .split(',')
                        .map(|p| parse(k, p.trim()))
                        .collect::<Result<_>>()?;
                    let rgb: [f64; 3] = parts.try_into().map_err(|_| {
                        PceError::config(format!("fill_mean: expected r,g,b, got {value:?}"))
                    })?;
                    Some(rgb)
                }
            }
            "flip" => self.flip = parse_bool(k, value)?,
            "lambda" => self.lambda = parse(k, value)?,
            "gan" => self.gan = value.parse()?,
            "lr" => self.lr = parse(k, value)?,
            "beta1" => self.beta1 = parse(k, value)?,
            "beta2" => self.beta2 = parse(k, value)?,
            "eps" => self.eps = parse(k, value)?,
            "batch" => self.batch = parse(k, value)?,
            "max_steps" => self.max_steps = parse(k, value)?,
            "plateau_window" => self.plateau_window = parse(k, value)?,
            "plateau_tolerance" => self.plateau_tolerance = parse(k, value)?,
            "checkpoint_every" => self.checkpoint_every = parse(k, value)?,
            "seed" => self.seed = parse(k, value)?,
            "deterministic" => self.deterministic = parse_bool(k, value)?,
            "base_filters" => self.base_filters = parse(k, value)?,
            "n_dilated" => self.n_dilated = parse(k, value)?,
            "disc_base" => self.disc_base = parse(k, value)?,
            _ => {
                return Err(PceError::config(format!(
                    "unknown configuration key {key:?}"
                )))
            }
        }
        Ok(())
    }

    /// Applies `key = value` lines on top of `self`. `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                PceError::config(format!("line {}: expected key = value, got {raw:?}", i + 1))
            })?;
            self.set(k, v)
                .map_err(|e| PceError::config(format!("line {}: {e}", i + 1)))?;
        }
        Ok(())
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = TrainConfig::default();
        cfg.apply_text(text)?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| PceError::io(path, e))?;
        Self::from_text(&text)
    }

    /// Canonical text form; `from_text(to_text())` reproduces `self` exactly.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for key in CONFIG_KEYS {
            let _ = writeln!(s, "{key} = {}", self.value_of(key));
        }
        s
    }

    fn value_of(&self, key: &str) -> String {
        match key {
            "task" => self.task.to_string(),
            "image_size" => self.image_size.to_string(),
            "region_size" => self.region_size.to_string(),
            "overlap" => self.overlap.to_string(),
            "fill" => self.fill.to_string(),
            "fill_mean" => match self.fill_mean {
                Some([r, g, b]) => format!("{r:?},{g:?},{b:?}"),
                None => "auto".into(),
            },
            "flip" => self.flip.to_string(),
            "lambda" => format!("{:?}", self.lambda),
            "gan" => self.gan.to_string(),
            "lr" => format!("{:?}", self.lr),
            "beta1" => format!("{:?}", self.beta1),
            "beta2" => format!("{:?}", self.beta2),
            "eps" => format!("{:?}", self.eps),
            "batch" => self.batch.to_string(),
            "max_steps" => self.max_steps.to_string(),
            "plateau_window" => self.plateau_window.to_string(),
            "plateau_tolerance" => format!("{:?}", self.plateau_tolerance),
            "checkpoint_every" => self.checkpoint_every.to_string(),
            "seed" => self.seed.to_string(),
            "deterministic" => self.deterministic.to_string(),
            "base_filters" => self.base_filters.to_string(),
            "n_dilated" => self.n_dilated.to_string(),
            "disc_base" => self.disc_base.to_string(),
            _ => unreachable!("unlisted key {key}"),
        }
    }

    pub fn mask_spec(&self) -> MaskSpec {
        MaskSpec {
            task: self.task,
            image_size: self.image_size,
            region: self.region_size,
            overlap: self.overlap,
        }
    }

    pub fn generator_config(&self) -> GeneratorConfig {
        GeneratorConfig::default()
            .with_base_filters(self.base_filters)
            .with_dilated_layers(self.n_dilated)
    }

    pub fn discriminator_config(&self) -> DiscriminatorConfig {
        DiscriminatorConfig::with_base(self.disc_base)
    }

    pub fn loss_config(&self) -> LossConfig {
        LossConfig {
            lambda: self.lambda,
            gan_variant: self.gan,
        }
    }

    pub fn adam_config(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.mask_spec().validate()?;
        self.loss_config().validate()?;
        self.adam_config().validate()?;
        let g = self.generator_config();
        g.validate()?;
        self.discriminator_config().validate()?;
        if self.batch == 0 {
            return Err(PceError::config("batch must be >= 1"));
        }
        if self.plateau_window < 2 {
            return Err(PceError::config(format!(
                "plateau_window {} must be >= 2",
                self.plateau_window
            )));
        }
        if self.checkpoint_every == 0 {
            return Err(PceError::config("checkpoint_every must be >= 1"));
        }
        let f = g.downsample_factor();
        if self.image_size % f != 0 {
            return Err(PceError::config(format!(
                "image_size {} is not divisible by {f}",
                self.image_size
            )));
        }
        if let Some(rgb) = self.fill_mean {
            if rgb.iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(PceError::config(format!(
                    "fill_mean {rgb:?} outside [0, 1]"
                )));
            }
        }
        if self.task != Task::Extrapolate {
            let rf = receptive_field_table(&g)?
                .last()
                .map(|r| r.receptive_field)
                .unwrap_or(1);
            if rf < self.region_size {
                return Err(PceError::config(format!(
                    "encoder receptive field {rf} is smaller than region {}; add dilated layers",
                    self.region_size
                )));
            }
        }
        Ok(())
    }
}
