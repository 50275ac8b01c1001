use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{PceError, Result};
use crate::tensor::{ConvSpec, Scalar, Tensor4};

use super::init::xavier_init;
use super::stack::{Activation, ConvLayer, ConvStack, ForwardCache, Param};

/// PatchGAN discriminator: a plain convolution stack whose final layer emits
/// one real/fake logit per patch.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscriminatorConfig {
    pub in_channels: usize,
    pub kernel: usize,
    pub channel_schedule: Vec<usize>,
    pub strides: Vec<usize>,
    pub alpha: f64,
    pub bias: bool,
}

impl Default for DiscriminatorConfig {
    fn default() -> Self {
        Self::with_base(64)
    }
}

impl DiscriminatorConfig {
    /// Five layers with `base, 2*base, 4*base, 8*base, 1` filters.
    pub fn with_base(base: usize) -> Self {
        DiscriminatorConfig {
            in_channels: 3,
            kernel: 3,
            channel_schedule: vec![base, base * 2, base * 4, base * 8, 1],
            strides: vec![2, 2, 2, 2, 1],
            alpha: 0.2,
            bias: true,
        }
    }

    pub fn layers(&self) -> usize {
        self.channel_schedule.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.channel_schedule.is_empty() {
            return Err(PceError::config("discriminator needs at least one layer"));
        }
        if self.channel_schedule.len() != self.strides.len() {
            return Err(PceError::config(format!(
                "{} discriminator channel entries but {} strides",
                self.channel_schedule.len(),
                self.strides.len()
            )));
        }
        if self
            .channel_schedule
            .iter()
            .chain(&self.strides)
            .any(|&v| v == 0)
        {
            return Err(PceError::config(
                "discriminator channels and strides must be >= 1",
            ));
        }
        if self.kernel % 2 == 0 {
            return Err(PceError::config("discriminator kernel must be odd"));
        }
        if !(0.0..1.0).contains(&self.alpha) {
            return Err(PceError::config(format!(
                "LeakyReLU slope {} outside [0, 1)",
                self.alpha
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Discriminator<T> {
    pub config: DiscriminatorConfig,
    pub stack: ConvStack<T>,
}

impl<T: Scalar> Discriminator<T> {
    pub fn build(config: DiscriminatorConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = config.layers();
        let mut cin = config.in_channels;
        let mut layers = Vec::with_capacity(n);
        for (i, (&cout, &stride)) in config
            .channel_schedule
            .iter()
            .zip(&config.strides)
            .enumerate()
        {
            let spec = ConvSpec::strided(cin, cout, config.kernel, stride);
            layers.push(ConvLayer {
                spec,
                upsample: false,
                weight: Param::new(xavier_init(spec.weight_shape(), &mut rng)),
                bias: config
                    .bias
                    .then(|| Param::new(Tensor4::zeros([1, cout, 1, 1]))),
                norm: None,
                activation: if i + 1 == n {
                    Activation::Identity
                } else {
                    Activation::LeakyRelu(config.alpha)
                },
            });
            cin = cout;
        }
        Ok(Discriminator {
            config,
            stack: ConvStack::new(layers),
        })
    }

    /// Patch logits for `x`; the cache feeds [`Self::backward`].
    pub fn forward(&mut self, x: &Tensor4<T>) -> Result<(Tensor4<T>, ForwardCache<T>)> {
        self.stack.forward_train(x)
    }

    pub fn judge(&self, x: &Tensor4<T>) -> Result<Tensor4<T>> {
        self.stack.forward_eval(x)
    }

    pub fn backward(
        &mut self,
        cache: &ForwardCache<T>,
        grad_output: &Tensor4<T>,
        accumulate: bool,
    ) -> Result<Tensor4<T>> {
        self.stack.backward(cache, grad_output, accumulate)
    }

    /// Spatial size of the judgement map for an `h x w` input.
    pub fn output_size(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        let mut hw = (h, w);
        for l in &self.stack.layers {
            hw = (l.spec.output_size(hw.0)?, l.spec.output_size(hw.1)?);
        }
        Ok(hw)
    }
}
