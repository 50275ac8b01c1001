use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{PceError, Result};
use crate::tensor::{BatchNormConfig, ConvSpec, Scalar, Tensor4};

use super::init::{identity_init, xavier_init};
use super::stack::{Activation, ConvLayer, ConvStack, ForwardCache, Norm, Param};
use super::Mode;

/// Longest supported dilation schedule (dilation 2^8 = 256).
pub const MAX_DILATED_LAYERS: usize = 8;

/// Architecture of the inpainting generator.
///
/// Encoder: `downsample_layers` stride-2 convolutions, then one stride-1
/// dilated convolution per entry of `dilation_schedule`. Decoder:
/// `decoder_layers` convolutions, the last `downsample_layers` of which are
/// preceded by nearest-neighbour upsampling; the final one maps to
/// `out_channels`.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorConfig {
    pub in_channels: usize,
    pub base_filters: usize,
    pub kernel: usize,
    pub downsample_layers: usize,
    pub dilation_schedule: Vec<usize>,
    pub decoder_layers: usize,
    pub out_channels: usize,
    pub batch_norm: BatchNormConfig,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            in_channels: 3,
            base_filters: 128,
            kernel: 3,
            downsample_layers: 2,
            dilation_schedule: Self::exponential_schedule(4),
            decoder_layers: 3,
            out_channels: 3,
            batch_norm: BatchNormConfig::default(),
        }
    }
}

impl GeneratorConfig {
    /// Dilations 2, 4, 8, ... for `n` layers.
    pub fn exponential_schedule(n: usize) -> Vec<usize> {
        (1..=n).map(|i| 1usize << i).collect()
    }

    pub fn with_dilated_layers(mut self, n: usize) -> Self {
        self.dilation_schedule = Self::exponential_schedule(n);
        self
    }

    pub fn with_base_filters(mut self, filters: usize) -> Self {
        self.base_filters = filters;
        self
    }

    pub fn n_dilated(&self) -> usize {
        self.dilation_schedule.len()
    }

    /// Total spatial downsampling of the encoder.
    pub fn downsample_factor(&self) -> usize {
        1 << self.downsample_layers
    }

    pub fn validate(&self) -> Result<()> {
        if self.in_channels == 0 || self.base_filters == 0 || self.out_channels == 0 {
            return Err(PceError::config("channel counts must be >= 1"));
        }
        if self.kernel == 0 || self.kernel % 2 == 0 {
            return Err(PceError::config(format!(
                "kernel must be odd, got {}",
                self.kernel
            )));
        }
        if self.dilation_schedule.len() > MAX_DILATED_LAYERS {
            return Err(PceError::config(format!(
                "dilation schedule has {} layers; at most {MAX_DILATED_LAYERS} are supported",
                self.dilation_schedule.len()
            )));
        }
        if self.dilation_schedule.iter().any(|&d| d == 0) {
            return Err(PceError::config("dilation rates must be >= 1"));
        }
        if self.decoder_layers < self.downsample_layers + 1 {
            return Err(PceError::config(format!(
                "{} decoder layers cannot undo {} downsampling layers",
                self.decoder_layers, self.downsample_layers
            )));
        }
        Ok(())
    }

    fn layer_specs(&self) -> Vec<(ConvSpec, bool, bool)> {
        // (spec, upsample before, is dilated)
        let k = self.kernel;
        let f = self.base_filters;
        let mut specs = Vec::new();
        for i in 0..self.downsample_layers {
            let cin = if i == 0 { self.in_channels } else { f };
            specs.push((ConvSpec::strided(cin, f, k, 2), false, false));
        }
        for &d in &self.dilation_schedule {
            let cin = if specs.is_empty() {
                self.in_channels
            } else {
                f
            };
            specs.push((ConvSpec::same(cin, f, k, d), false, true));
        }
        for j in 0..self.decoder_layers {
            let cin = if specs.is_empty() {
                self.in_channels
            } else {
                f
            };
            let cout = if j + 1 == self.decoder_layers {
                self.out_channels
            } else {
                f
            };
            let upsample = j >= self.decoder_layers - self.downsample_layers;
            specs.push((ConvSpec::same(cin, cout, k, 1), upsample, false));
        }
        specs
    }
}

/// Dilated-convolution inpainting network.
#[derive(Debug, Clone, PartialEq)]
pub struct Generator<T> {
    pub config: GeneratorConfig,
    pub stack: ConvStack<T>,
}

impl<T: Scalar> Generator<T> {
    /// Builds the layer stack. Dilated layers start as identity maps,
    /// the remaining convolutions are Xavier-initialised from `seed`.
    pub fn build(config: GeneratorConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let specs = config.layer_specs();
        let last = specs.len() - 1;
        let mut layers = Vec::with_capacity(specs.len());
        for (i, (spec, upsample, dilated)) in specs.into_iter().enumerate() {
            let weight = if dilated && spec.in_channels == spec.out_channels {
                identity_init(spec.weight_shape())?
            } else {
                xavier_init(spec.weight_shape(), &mut rng)
            };
            let is_last = i == last;
            layers.push(ConvLayer {
                spec,
                upsample,
                weight: Param::new(weight),
                bias: None,
                norm: (!is_last).then(|| Norm::new(spec.out_channels, config.batch_norm)),
                activation: if is_last {
                    Activation::Identity
                } else {
                    Activation::Elu
                },
            });
        }
        Ok(Generator {
            config,
            stack: ConvStack::new(layers),
        })
    }

    fn check_input(&self, x: &Tensor4<T>) -> Result<()> {
        let [_, c, h, w] = x.shape();
        if c != self.config.in_channels {
            return Err(PceError::shape(format!(
                "generator expects {} input channels, got {:?}",
                self.config.in_channels,
                x.shape()
            )));
        }
        let f = self.config.downsample_factor();
        if h % f != 0 || w % f != 0 {
            return Err(PceError::shape(format!(
                "image {h}x{w} is not divisible by the downsampling factor {f}"
            )));
        }
        Ok(())
    }

    pub fn forward_train(&mut self, x: &Tensor4<T>) -> Result<(Tensor4<T>, ForwardCache<T>)> {
        self.check_input(x)?;
        self.stack.forward_train(x)
    }

    pub fn forward_eval(&self, x: &Tensor4<T>) -> Result<Tensor4<T>> {
        self.check_input(x)?;
        self.stack.forward_eval(x)
    }

    /// Forward pass in either mode; the train-mode cache is dropped.
    pub fn forward(&mut self, x: &Tensor4<T>, mode: Mode) -> Result<Tensor4<T>> {
        match mode {
            Mode::Train => self.forward_train(x).map(|(y, _)| y),
            Mode::Eval => self.forward_eval(x),
        }
    }

    pub fn backward(
        &mut self,
        cache: &ForwardCache<T>,
        grad_output: &Tensor4<T>,
    ) -> Result<Tensor4<T>> {
        self.stack.backward(cache, grad_output, true)
    }

    /// Number of convolution layers.
    pub fn depth(&self) -> usize {
        self.stack.layers.len()
    }
}

fn check_mask<T: Scalar>(y: &Tensor4<T>, x: &Tensor4<T>, mask: &Tensor4<T>) -> Result<()> {
    if y.shape() != x.shape() {
        return Err(PceError::shape(format!(
            "composite: output {:?} and image {:?} differ",
            y.shape(),
            x.shape()
        )));
    }
    let [n, _, h, w] = x.shape();
    if mask.shape() != [n, 1, h, w] {
        return Err(PceError::shape(format!(
            "composite: mask {:?} does not cover image {:?}",
            mask.shape(),
            x.shape()
        )));
    }
    Ok(())
}

/// `M * y + (1 - M) * x`: keeps generated pixels only where the mask is set.
///
/// For binary masks the result equals `x` bit-for-bit outside the mask.
pub fn composite<T: Scalar>(
    y: &Tensor4<T>,
    x: &Tensor4<T>,
    mask: &Tensor4<T>,
) -> Result<Tensor4<T>> {
    check_mask(y, x, mask)?;
    let [n, c, _, _] = x.shape();
    let plane = x.plane();
    let mut out = x.clone();
    for b in 0..n {
        let m = mask.item(b);
        let yi = y.item(b);
        let dst = out.item_mut(b);
        for ch in 0..c {
            for p in 0..plane {
                let mv = m[p];
                let i = ch * plane + p;
                if mv == T::one() {
                    dst[i] = yi[i];
                } else if mv != T::zero() {
                    dst[i] = mv * yi[i] + (T::one() - mv) * dst[i];
                }
            }
        }
    }
    Ok(out)
}

/// Gradient of [`composite`] with respect to the generator output `y`.
pub fn composite_backward<T: Scalar>(grad: &Tensor4<T>, mask: &Tensor4<T>) -> Result<Tensor4<T>> {
    crate::tensor::mul(grad, mask)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::conv2d_forward;

    fn small() -> GeneratorConfig {
        GeneratorConfig::default().with_base_filters(4)
    }

    #[test]
    fn default_stack_layout() {
        let g = Generator::<f32>::build(small(), 0).unwrap();
        assert_eq!(g.depth(), 9);
        let bn = g.stack.layers.iter().filter(|l| l.norm.is_some()).count();
        assert_eq!(bn, 8);
        let last = g.stack.layers.last().unwrap();
        assert!(last.norm.is_none());
        assert_eq!(last.activation, Activation::Identity);
        assert_eq!(last.spec.out_channels, 3);
        let dil: Vec<usize> = g.stack.layers.iter().map(|l| l.spec.dilation).collect();
        assert_eq!(dil, vec![1, 1, 2, 4, 8, 16, 1, 1, 1]);
        let ups: Vec<bool> = g.stack.layers.iter().map(|l| l.upsample).collect();
        assert_eq!(
            ups,
            vec![false, false, false, false, false, false, false, true, true]
        );
    }

    #[test]
    fn spatial_trajectory_for_256() {
        let g = Generator::<f32>::build(small(), 0).unwrap();
        let mut size = 256;
        let mut trace = vec![size];
        for l in &g.stack.layers {
            if l.upsample {
                size *= 2;
            }
            size = l.spec.output_size(size).unwrap();
            trace.push(size);
        }
        assert_eq!(trace, vec![256, 128, 64, 64, 64, 64, 64, 64, 128, 256]);
    }

    #[test]
    fn same_seed_is_bit_identical() {
        let a = Generator::<f32>::build(small(), 42).unwrap();
        let b = Generator::<f32>::build(small(), 42).unwrap();
        let c = Generator::<f32>::build(small(), 43).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn dilated_layers_start_as_identity() {
        let g = Generator::<f32>::build(small(), 3).unwrap();
        let x = Tensor4::from_fn([2, 4, 16, 16], |[n, c, y, xx]| {
            ((n * 5 + c * 3 + y * 7 + xx) % 11) as f32 - 5.0
        });
        for layer in g.stack.layers.iter().filter(|l| l.spec.dilation > 1) {
            let out = conv2d_forward(&x, &layer.weight.value, None, &layer.spec).unwrap();
            assert_eq!(out, x);
        }
    }

    #[test]
    fn rejects_long_schedule_and_bad_dims() {
        let cfg = small().with_dilated_layers(MAX_DILATED_LAYERS + 1);
        assert!(Generator::<f32>::build(cfg, 0).is_err());
        let g = Generator::<f32>::build(small(), 0).unwrap();
        assert!(g.forward_eval(&Tensor4::zeros([1, 3, 18, 16])).is_err());
        assert!(g.forward_eval(&Tensor4::zeros([1, 1, 16, 16])).is_err());
    }

    #[test]
    fn eval_before_training_is_uninitialized() {
        let g = Generator::<f32>::build(small(), 0).unwrap();
        let err = g.forward_eval(&Tensor4::zeros([1, 3, 16, 16])).unwrap_err();
        assert!(matches!(err, PceError::Uninitialized(_)));
    }

    #[test]
    fn output_matches_input_dims() {
        let mut g = Generator::<f32>::build(small(), 0).unwrap();
        for (h, w) in [(16, 16), (32, 24), (8, 12)] {
            let x = Tensor4::from_fn([2, 3, h, w], |[_, c, y, xx]| (c + y + xx) as f32 / 40.0);
            let y = g.forward(&x, Mode::Train).unwrap();
            assert_eq!(y.shape(), [2, 3, h, w]);
            let ye = g.forward(&x, Mode::Eval).unwrap();
            assert_eq!(ye.shape(), [2, 3, h, w]);
        }
    }

    #[test]
    fn composite_selects_by_mask() {
        let x = Tensor4::from_fn([1, 3, 4, 4], |[_, c, y, xx]| (c * 16 + y * 4 + xx) as f32);
        let y = x.map(|v| -v - 1.0);
        let zeros = Tensor4::zeros([1, 1, 4, 4]);
        let ones = Tensor4::filled([1, 1, 4, 4], 1.0);
        assert_eq!(composite(&y, &x, &zeros).unwrap(), x);
        assert_eq!(composite(&y, &x, &ones).unwrap(), y);
        let m = Tensor4::from_fn([1, 1, 4, 4], |[_, _, r, c]| ((r + c) % 3 == 0) as u8 as f32);
        let out = composite(&y, &x, &m).unwrap();
        for c in 0..3 {
            for r in 0..4 {
                for col in 0..4 {
                    let expect = if m.get(0, 0, r, col) == 1.0 {
                        y.get(0, c, r, col)
                    } else {
                        x.get(0, c, r, col)
                    };
                    assert_eq!(out.get(0, c, r, col), expect);
                }
            }
        }
        assert!(composite(&y, &x, &Tensor4::zeros([1, 1, 4, 3])).is_err());
    }
}
