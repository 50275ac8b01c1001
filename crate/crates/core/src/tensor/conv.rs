//! Zero-padded, strided, dilated 2-D convolution.
//!
//! The fast path lowers each batch item to an im2col matrix and calls GEMM.
//! [`conv2d_forward_reference`] is the direct six-loop definition; the two
//! paths agree up to floating-point reassociation.

use crate::error::{PceError, Result};

use super::{Scalar, Tensor4};

/// Geometry of one square-kernel convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub dilation: usize,
    pub padding: usize,
}

impl ConvSpec {
    /// Stride-1 convolution whose zero padding preserves spatial size.
    pub fn same(in_channels: usize, out_channels: usize, kernel: usize, dilation: usize) -> Self {
        ConvSpec {
            in_channels,
            out_channels,
            kernel,
            stride: 1,
            dilation,
            padding: dilation * (kernel.saturating_sub(1)) / 2,
        }
    }

    /// Undilated convolution with the given stride and `(kernel - 1) / 2` padding.
    pub fn strided(in_channels: usize, out_channels: usize, kernel: usize, stride: usize) -> Self {
        ConvSpec {
            in_channels,
            out_channels,
            kernel,
            stride,
            dilation: 1,
            padding: kernel.saturating_sub(1) / 2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.in_channels == 0 || self.out_channels == 0 {
            return Err(PceError::config(format!(
                "convolution channels must be >= 1, got {} -> {}",
                self.in_channels, self.out_channels
            )));
        }
        if self.kernel == 0 || self.kernel % 2 == 0 {
            return Err(PceError::config(format!(
                "convolution kernel must be odd, got {}",
                self.kernel
            )));
        }
        if self.stride == 0 || self.dilation == 0 {
            return Err(PceError::config("stride and dilation must be >= 1"));
        }
        Ok(())
    }

    /// Spatial extent covered by one kernel application.
    pub fn effective_kernel(&self) -> usize {
        self.dilation * (self.kernel - 1) + 1
    }

    /// Output length along one axis for an input of length `size`.
    pub fn output_size(&self, size: usize) -> Result<usize> {
        let padded = size + 2 * self.padding;
        let span = self.effective_kernel();
        if padded < span {
            return Err(PceError::shape(format!(
                "input extent {size} (padded {padded}) is smaller than the effective kernel {span}"
            )));
        }
        Ok((padded - span) / self.stride + 1)
    }

    pub fn weight_shape(&self) -> [usize; 4] {
        [
            self.out_channels,
            self.in_channels,
            self.kernel,
            self.kernel,
        ]
    }

    fn check(&self, input: [usize; 4], weights: [usize; 4]) -> Result<(usize, usize)> {
        self.validate()?;
        if weights != self.weight_shape() {
            return Err(PceError::shape(format!(
                "filter bank {weights:?} does not match conv spec {:?}",
                self.weight_shape()
            )));
        }
        if input[1] != self.in_channels {
            return Err(PceError::shape(format!(
                "input {input:?} has {} channels but filter bank {weights:?} expects {}",
                input[1], self.in_channels
            )));
        }
        Ok((self.output_size(input[2])?, self.output_size(input[3])?))
    }
}

/// Gradients produced by [`conv2d_backward`].
#[derive(Debug, Clone)]
pub struct ConvGrads<T> {
    pub input: Tensor4<T>,
    pub weights: Tensor4<T>,
    /// Per-output-channel sum of the output gradient.
    pub bias: Vec<T>,
}

/// Lowers one `(c, h, w)` item to a `(c*k*k) x (oh*ow)` column matrix.
fn im2col<T: Scalar>(
    item: &[T],
    h: usize,
    w: usize,
    spec: &ConvSpec,
    oh: usize,
    ow: usize,
    cols: &mut [T],
) {
    let k = spec.kernel;
    let p = oh * ow;
    let pad = spec.padding as isize;
    for ci in 0..spec.in_channels {
        let plane = &item[ci * h * w..(ci + 1) * h * w];
        for ky in 0..k {
            for kx in 0..k {
                let row = (ci * k + ky) * k + kx;
                let dst = &mut cols[row * p..(row + 1) * p];
                let dy = (ky * spec.dilation) as isize - pad;
                let dx = (kx * spec.dilation) as isize - pad;
                for oy in 0..oh {
                    let iy = (oy * spec.stride) as isize + dy;
                    let seg = &mut dst[oy * ow..(oy + 1) * ow];
                    if iy < 0 || iy >= h as isize {
                        seg.fill(T::zero());
                        continue;
                    }
                    let src = &plane[iy as usize * w..(iy as usize + 1) * w];
                    for (ox, v) in seg.iter_mut().enumerate() {
                        let ix = (ox * spec.stride) as isize + dx;
                        *v = if ix < 0 || ix >= w as isize {
                            T::zero()
                        } else {
                            src[ix as usize]
                        };
                    }
                }
            }
        }
    }
}

/// Scatter-adds a column matrix back into a `(c, h, w)` gradient item.
fn col2im<T: Scalar>(
    cols: &[T],
    h: usize,
    w: usize,
    spec: &ConvSpec,
    oh: usize,
    ow: usize,
    item: &mut [T],
) {
    let k = spec.kernel;
    let p = oh * ow;
    let pad = spec.padding as isize;
    for ci in 0..spec.in_channels {
        let plane = &mut item[ci * h * w..(ci + 1) * h * w];
        for ky in 0..k {
            for kx in 0..k {
                let row = (ci * k + ky) * k + kx;
                let src = &cols[row * p..(row + 1) * p];
                let dy = (ky * spec.dilation) as isize - pad;
                let dx = (kx * spec.dilation) as isize - pad;
                for oy in 0..oh {
                    let iy = (oy * spec.stride) as isize + dy;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let dst = &mut plane[iy as usize * w..(iy as usize + 1) * w];
                    for ox in 0..ow {
                        let ix = (ox * spec.stride) as isize + dx;
                        if ix >= 0 && ix < w as isize {
                            dst[ix as usize] += src[oy * ow + ox];
                        }
                    }
                }
            }
        }
    }
}

/// Convolves `input` with the `(out, in, k, k)` filter bank `weights`.
pub fn conv2d_forward<T: Scalar>(
    input: &Tensor4<T>,
    weights: &Tensor4<T>,
    bias: Option<&[T]>,
    spec: &ConvSpec,
) -> Result<Tensor4<T>> {
    let (oh, ow) = spec.check(input.shape(), weights.shape())?;
    if let Some(b) = bias {
        if b.len() != spec.out_channels {
            return Err(PceError::shape(format!(
                "bias of length {} for {} output channels",
                b.len(),
                spec.out_channels
            )));
        }
    }
    let [n, _, h, w] = input.shape();
    let kk = spec.in_channels * spec.kernel * spec.kernel;
    let p = oh * ow;
    let mut out = Tensor4::zeros([n, spec.out_channels, oh, ow]);
    let mut cols = vec![T::zero(); kk * p];
    for b in 0..n {
        im2col(input.item(b), h, w, spec, oh, ow, &mut cols);
        let dst = out.item_mut(b);
        T::gemm(
            spec.out_channels,
            kk,
            p,
            weights.data(),
            kk as isize,
            1,
            &cols,
            p as isize,
            1,
            T::zero(),
            dst,
        );
        if let Some(bias) = bias {
            for (o, &bv) in bias.iter().enumerate() {
                dst[o * p..(o + 1) * p].iter_mut().for_each(|v| *v += bv);
            }
        }
    }
    Ok(out)
}

/// Direct-summation convolution. Slow; used to validate the GEMM path.
pub fn conv2d_forward_reference<T: Scalar>(
    input: &Tensor4<T>,
    weights: &Tensor4<T>,
    bias: Option<&[T]>,
    spec: &ConvSpec,
) -> Result<Tensor4<T>> {
    let (oh, ow) = spec.check(input.shape(), weights.shape())?;
    let [n, _, h, w] = input.shape();
    let mut out = Tensor4::zeros([n, spec.out_channels, oh, ow]);
    for b in 0..n {
        for o in 0..spec.out_channels {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = T::zero();
                    for ci in 0..spec.in_channels {
                        for ky in 0..spec.kernel {
                            let iy = (oy * spec.stride + ky * spec.dilation) as isize
                                - spec.padding as isize;
                            if iy < 0 || iy >= h as isize {
                                continue;
                            }
                            for kx in 0..spec.kernel {
                                let ix = (ox * spec.stride + kx * spec.dilation) as isize
                                    - spec.padding as isize;
                                if ix < 0 || ix >= w as isize {
                                    continue;
                                }
                                acc += weights.get(o, ci, ky, kx)
                                    * input.get(b, ci, iy as usize, ix as usize);
                            }
                        }
                    }
                    if let Some(bias) = bias {
                        acc += bias[o];
                    }
                    out.set(b, o, oy, ox, acc);
                }
            }
        }
    }
    Ok(out)
}

/// Adjoint of [`conv2d_forward`] with respect to input, weights and bias.
pub fn conv2d_backward<T: Scalar>(
    input: &Tensor4<T>,
    weights: &Tensor4<T>,
    grad_output: &Tensor4<T>,
    spec: &ConvSpec,
) -> Result<ConvGrads<T>> {
    let (oh, ow) = spec.check(input.shape(), weights.shape())?;
    let [n, _, h, w] = input.shape();
    let expected = [n, spec.out_channels, oh, ow];
    if grad_output.shape() != expected {
        return Err(PceError::shape(format!(
            "output gradient {:?} does not match forward output {expected:?}",
            grad_output.shape()
        )));
    }
    let kk = spec.in_channels * spec.kernel * spec.kernel;
    let p = oh * ow;
    let mut grad_input = Tensor4::zeros(input.shape());
    let mut grad_weights = Tensor4::zeros(weights.shape());
    let mut grad_bias = vec![T::zero(); spec.out_channels];
    let mut cols = vec![T::zero(); kk * p];
    let mut grad_cols = vec![T::zero(); kk * p];
    for b in 0..n {
        let gout = grad_output.item(b);
        for (o, gb) in grad_bias.iter_mut().enumerate() {
            *gb += gout[o * p..(o + 1) * p].iter().copied().sum::<T>();
        }
        im2col(input.item(b), h, w, spec, oh, ow, &mut cols);
        // dW (out x kk) += dY (out x p) * cols^T (p x kk)
        T::gemm(
            spec.out_channels,
            p,
            kk,
            gout,
            p as isize,
            1,
            &cols,
            1,
            p as isize,
            T::one(),
            grad_weights.data_mut(),
        );
        // dcols (kk x p) = W^T (kk x out) * dY (out x p)
        T::gemm(
            kk,
            spec.out_channels,
            p,
            weights.data(),
            1,
            kk as isize,
            gout,
            p as isize,
            1,
            T::zero(),
            &mut grad_cols,
        );
        col2im(&grad_cols, h, w, spec, oh, ow, grad_input.item_mut(b));
    }
    Ok(ConvGrads {
        input: grad_input,
        weights: grad_weights,
        bias: grad_bias,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn identity_bank(c: usize, k: usize) -> Tensor4<f32> {
        Tensor4::from_fn([c, c, k, k], |[o, i, y, x]| {
            if o == i && y == k / 2 && x == k / 2 {
                1.0
            } else {
                0.0
            }
        })
    }

    #[test]
    fn identity_filters_pass_input_through() {
        let input = Tensor4::from_fn([1, 8, 16, 16], |[_, c, y, x]| {
            ((c * 31 + y * 7 + x) % 13) as f32 * 0.25 - 1.0
        });
        let spec = ConvSpec::same(8, 8, 3, 4);
        assert_eq!(spec.padding, 4);
        let out = conv2d_forward(&input, &identity_bank(8, 3), None, &spec).unwrap();
        assert_eq!(out, input);
    }

    #[test]
    fn ones_filter_counts_taps_under_zero_padding() {
        let input = Tensor4::<f32>::filled([1, 1, 5, 5], 1.0);
        let weights = Tensor4::<f32>::filled([1, 1, 3, 3], 1.0);
        let out = conv2d_forward(&input, &weights, None, &ConvSpec::same(1, 1, 3, 1)).unwrap();
        assert_eq!(out.get(0, 0, 2, 2), 9.0);
        for (y, x) in [(0, 0), (0, 4), (4, 0), (4, 4)] {
            assert_eq!(out.get(0, 0, y, x), 4.0);
        }
        assert_eq!(out.get(0, 0, 0, 2), 6.0);
    }

    #[test]
    fn channel_mismatch_names_both_shapes() {
        let input = Tensor4::<f32>::zeros([1, 4, 8, 8]);
        let weights = Tensor4::<f32>::zeros([2, 3, 3, 3]);
        let spec = ConvSpec::same(3, 2, 3, 1);
        let msg = conv2d_forward(&input, &weights, None, &spec)
            .unwrap_err()
            .to_string();
        assert!(msg.contains("[1, 4, 8, 8]"), "{msg}");
        assert!(msg.contains("[2, 3, 3, 3]"), "{msg}");
    }

    #[test]
    fn even_kernel_rejected() {
        let spec = ConvSpec::same(1, 1, 4, 1);
        assert!(spec.validate().is_err());
    }

    #[test]
    fn stride_two_output_size() {
        let spec = ConvSpec::strided(3, 4, 3, 2);
        assert_eq!(spec.output_size(9).unwrap(), 5);
        assert_eq!(spec.output_size(256).unwrap(), 128);
        assert_eq!(spec.output_size(1).unwrap(), 1);
    }

    #[test]
    fn zero_output_gradient_gives_zero_gradients() {
        let input = Tensor4::from_fn([2, 2, 5, 5], |[n, c, y, x]| (n + c + y * x) as f64);
        let weights = Tensor4::from_fn([3, 2, 3, 3], |[o, i, y, x]| (o + i + y + x) as f64);
        let spec = ConvSpec::same(2, 3, 3, 2);
        let g = conv2d_backward(&input, &weights, &Tensor4::zeros([2, 3, 5, 5]), &spec).unwrap();
        assert!(g.input.data().iter().all(|&v| v == 0.0));
        assert!(g.weights.data().iter().all(|&v| v == 0.0));
        assert!(g.bias.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_pixel_weight_gradient_is_scalar_chain_rule() {
        // 1x1 input: only the centre tap sees data, the rest reads zero padding.
        let input = Tensor4::<f64>::from_vec([1, 1, 1, 1], vec![1.5]).unwrap();
        let weights = Tensor4::<f64>::filled([1, 1, 3, 3], 0.3);
        let grad_out = Tensor4::<f64>::from_vec([1, 1, 1, 1], vec![-2.0]).unwrap();
        let g = conv2d_backward(&input, &weights, &grad_out, &ConvSpec::same(1, 1, 3, 1)).unwrap();
        assert_eq!(g.weights.get(0, 0, 1, 1), 1.5 * -2.0);
        assert_eq!(g.weights.sum(), 1.5 * -2.0);
        assert_eq!(g.input.get(0, 0, 0, 0), 0.3 * -2.0);
        assert_eq!(g.bias, vec![-2.0]);
    }

    #[test]
    fn grad_output_shape_checked() {
        let input = Tensor4::<f32>::zeros([1, 1, 4, 4]);
        let weights = Tensor4::<f32>::zeros([1, 1, 3, 3]);
        let bad = Tensor4::<f32>::zeros([1, 1, 3, 4]);
        assert!(conv2d_backward(&input, &weights, &bad, &ConvSpec::same(1, 1, 3, 1)).is_err());
    }

    #[test]
    fn bias_is_added_per_channel() {
        let input = Tensor4::<f32>::zeros([1, 1, 3, 3]);
        let weights = Tensor4::<f32>::zeros([2, 1, 3, 3]);
        let out = conv2d_forward(
            &input,
            &weights,
            Some(&[1.0, -2.0]),
            &ConvSpec::same(1, 2, 3, 1),
        )
        .unwrap();
        assert!(out.item(0)[..9].iter().all(|&v| v == 1.0));
        assert!(out.item(0)[9..].iter().all(|&v| v == -2.0));
    }
}
