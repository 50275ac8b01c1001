use crate::error::{PceError, Result};
use crate::tensor::{
    batchnorm_backward, batchnorm_eval, batchnorm_train, conv2d_backward, conv2d_forward, elu,
    elu_backward, leaky_relu, leaky_relu_backward, upsample_nearest_x2,
    upsample_nearest_x2_backward, BatchNormCache, BatchNormConfig, BnStats, ConvSpec, Scalar,
    Tensor4,
};

/// A trainable tensor and its accumulated gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct Param<T> {
    pub value: Tensor4<T>,
    pub grad: Tensor4<T>,
}

impl<T: Scalar> Param<T> {
    pub fn new(value: Tensor4<T>) -> Self {
        let grad = Tensor4::zeros(value.shape());
        Param { value, grad }
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(T::zero());
    }

    fn accumulate(&mut self, g: &[T]) {
        debug_assert_eq!(g.len(), self.grad.len());
        for (a, &b) in self.grad.data_mut().iter_mut().zip(g) {
            *a += b;
        }
    }
}

/// Per-channel affine batch norm with running statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct Norm<T> {
    pub gamma: Param<T>,
    pub beta: Param<T>,
    pub stats: BnStats<T>,
    pub config: BatchNormConfig,
}

impl<T: Scalar> Norm<T> {
    pub fn new(channels: usize, config: BatchNormConfig) -> Self {
        Norm {
            gamma: Param::new(Tensor4::filled([1, channels, 1, 1], T::one())),
            beta: Param::new(Tensor4::zeros([1, channels, 1, 1])),
            stats: BnStats::new(channels),
            config,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Activation {
    Identity,
    Elu,
    LeakyRelu(f64),
}

/// `[upsample x2] -> conv -> [batch norm] -> activation`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer<T> {
    pub spec: ConvSpec,
    pub upsample: bool,
    pub weight: Param<T>,
    pub bias: Option<Param<T>>,
    pub norm: Option<Norm<T>>,
    pub activation: Activation,
}

struct LayerCache<T> {
    conv_input: Tensor4<T>,
    bn: Option<BatchNormCache<T>>,
    act_input: Tensor4<T>,
}

/// Activations saved by a train-mode forward pass.
pub struct ForwardCache<T> {
    layers: Vec<LayerCache<T>>,
}

/// An ordered stack of [`ConvLayer`]s with explicit forward and backward passes.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvStack<T> {
    pub layers: Vec<ConvLayer<T>>,
}

fn activate<T: Scalar>(x: &Tensor4<T>, act: Activation) -> Tensor4<T> {
    match act {
        Activation::Identity => x.clone(),
        Activation::Elu => elu(x),
        Activation::LeakyRelu(a) => leaky_relu(x, T::of(a)),
    }
}

impl<T: Scalar> ConvStack<T> {
    pub fn new(layers: Vec<ConvLayer<T>>) -> Self {
        ConvStack { layers }
    }

    fn conv(layer: &ConvLayer<T>, x: &Tensor4<T>) -> Result<Tensor4<T>> {
        conv2d_forward(
            x,
            &layer.weight.value,
            layer.bias.as_ref().map(|b| b.value.data()),
            &layer.spec,
        )
    }

    /// Train-mode forward. Updates batch-norm running statistics.
    pub fn forward_train(&mut self, input: &Tensor4<T>) -> Result<(Tensor4<T>, ForwardCache<T>)> {
        let mut x = input.clone();
        let mut caches = Vec::with_capacity(self.layers.len());
        for layer in &mut self.layers {
            let conv_input = if layer.upsample {
                upsample_nearest_x2(&x)
            } else {
                x
            };
            let mut z = Self::conv(layer, &conv_input)?;
            let mut bn = None;
            if let Some(norm) = &mut layer.norm {
                let (y, cache) = batchnorm_train(
                    &z,
                    norm.gamma.value.data(),
                    norm.beta.value.data(),
                    &mut norm.stats,
                    &norm.config,
                )?;
                z = y;
                bn = Some(cache);
            }
            x = activate(&z, layer.activation);
            caches.push(LayerCache {
                conv_input,
                bn,
                act_input: z,
            });
        }
        Ok((x, ForwardCache { layers: caches }))
    }

    /// Eval-mode forward using running statistics; leaves the stack untouched.
    pub fn forward_eval(&self, input: &Tensor4<T>) -> Result<Tensor4<T>> {
        let mut x = input.clone();
        for layer in &self.layers {
            if layer.upsample {
                x = upsample_nearest_x2(&x);
            }
            let mut z = Self::conv(layer, &x)?;
            if let Some(norm) = &layer.norm {
                z = batchnorm_eval(
                    &z,
                    norm.gamma.value.data(),
                    norm.beta.value.data(),
                    &norm.stats,
                    &norm.config,
                )?;
            }
            x = activate(&z, layer.activation);
        }
        Ok(x)
    }

    /// Backpropagates `grad_output` through the stack and returns the input gradient.
    ///
    /// Parameter gradients are added to each [`Param::grad`] only when
    /// `accumulate` is set.
    pub fn backward(
        &mut self,
        cache: &ForwardCache<T>,
        grad_output: &Tensor4<T>,
        accumulate: bool,
    ) -> Result<Tensor4<T>> {
        if cache.layers.len() != self.layers.len() {
            return Err(PceError::shape(format!(
                "forward cache has {} layers, stack has {}",
                cache.layers.len(),
                self.layers.len()
            )));
        }
        let mut g = grad_output.clone();
        for (layer, lc) in self.layers.iter_mut().zip(&cache.layers).rev() {
            g = match layer.activation {
                Activation::Identity => g,
                Activation::Elu => elu_backward(&lc.act_input, &g)?,
                Activation::LeakyRelu(a) => leaky_relu_backward(&lc.act_input, &g, T::of(a))?,
            };
            if let (Some(norm), Some(bc)) = (&mut layer.norm, &lc.bn) {
                let grads = batchnorm_backward(bc, norm.gamma.value.data(), &g)?;
                if accumulate {
                    norm.gamma.accumulate(&grads.gamma);
                    norm.beta.accumulate(&grads.beta);
                }
                g = grads.input;
            }
            let grads = conv2d_backward(&lc.conv_input, &layer.weight.value, &g, &layer.spec)?;
            if accumulate {
                layer.weight.accumulate(grads.weights.data());
                if let Some(bias) = &mut layer.bias {
                    bias.accumulate(&grads.bias);
                }
            }
            g = if layer.upsample {
                upsample_nearest_x2_backward(&grads.input)?
            } else {
                grads.input
            };
        }
        Ok(g)
    }

    pub fn zero_grad(&mut self) {
        for (_, p) in self.params_mut("") {
            p.zero_grad();
        }
    }

    /// Trainable parameters in a fixed order, named `{prefix}.{layer}.{kind}`.
    pub fn params_mut(&mut self, prefix: &str) -> Vec<(String, &mut Param<T>)> {
        let mut out = Vec::new();
        for (i, layer) in self.layers.iter_mut().enumerate() {
            out.push((format!("{prefix}.{i}.weight"), &mut layer.weight));
            if let Some(b) = &mut layer.bias {
                out.push((format!("{prefix}.{i}.bias"), b));
            }
            if let Some(n) = &mut layer.norm {
                out.push((format!("{prefix}.{i}.bn.gamma"), &mut n.gamma));
                out.push((format!("{prefix}.{i}.bn.beta"), &mut n.beta));
            }
        }
        out
    }

    pub fn params(&self, prefix: &str) -> Vec<(String, &Param<T>)> {
        let mut out = Vec::new();
        for (i, layer) in self.layers.iter().enumerate() {
            out.push((format!("{prefix}.{i}.weight"), &layer.weight));
            if let Some(b) = &layer.bias {
                out.push((format!("{prefix}.{i}.bias"), b));
            }
            if let Some(n) = &layer.norm {
                out.push((format!("{prefix}.{i}.bn.gamma"), &n.gamma));
                out.push((format!("{prefix}.{i}.bn.beta"), &n.beta));
            }
        }
        out
    }

    /// Batch-norm running statistics, named `{prefix}.{layer}.bn`.
    pub fn stats_mut(&mut self, prefix: &str) -> Vec<(String, &mut BnStats<T>)> {
        self.layers
            .iter_mut()
            .enumerate()
            .filter_map(|(i, l)| {
                l.norm
                    .as_mut()
                    .map(|n| (format!("{prefix}.{i}.bn"), &mut n.stats))
            })
            .collect()
    }

    pub fn stats(&self, prefix: &str) -> Vec<(String, &BnStats<T>)> {
        self.layers
            .iter()
            .enumerate()
            .filter_map(|(i, l)| {
                l.norm
                    .as_ref()
                    .map(|n| (format!("{prefix}.{i}.bn"), &n.stats))
            })
            .collect()
    }

    /// Number of trainable scalars actually held by the stack.
    pub fn trainable_parameters(&self) -> usize {
        self.params("").iter().map(|(_, p)| p.len()).sum()
    }
}
