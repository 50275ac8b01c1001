//! Per-channel batch normalisation over the `(n, h, w)` axes.

use crate::error::{PceError, Result};

use super::{Scalar, Tensor4};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatchNormConfig {
    pub eps: f64,
    /// Weight of the newest batch in the running-statistics moving average.
    pub momentum: f64,
}

impl Default for BatchNormConfig {
    fn default() -> Self {
        BatchNormConfig {
            eps: 1e-5,
            momentum: 0.1,
        }
    }
}

/// Running mean/variance used in eval mode.
#[derive(Debug, Clone, PartialEq)]
pub struct BnStats<T> {
    pub mean: Vec<T>,
    pub var: Vec<T>,
    /// Number of train-mode batches folded into the averages.
    pub updates: u64,
}

impl<T: Scalar> BnStats<T> {
    pub fn new(channels: usize) -> Self {
        BnStats {
            mean: vec![T::zero(); channels],
            var: vec![T::one(); channels],
            updates: 0,
        }
    }

    pub fn channels(&self) -> usize {
        self.mean.len()
    }
}

/// Saved forward state needed by [`batchnorm_backward`].
#[derive(Debug, Clone)]
pub struct BatchNormCache<T> {
    xhat: Tensor4<T>,
    inv_std: Vec<T>,
}

#[derive(Debug, Clone)]
pub struct BatchNormGrads<T> {
    pub input: Tensor4<T>,
    pub gamma: Vec<T>,
    pub beta: Vec<T>,
}

fn check_affine<T: Scalar>(
    input: &Tensor4<T>,
    gamma: &[T],
    beta: &[T],
    channels: usize,
) -> Result<()> {
    let c = input.channels();
    if gamma.len() != c || beta.len() != c || channels != c {
        return Err(PceError::shape(format!(
            "batch norm over {:?} with gamma {}, beta {}, stats {}",
            input.shape(),
            gamma.len(),
            beta.len(),
            channels
        )));
    }
    Ok(())
}

/// Train-mode forward: normalises with batch statistics and updates `stats`.
pub fn batchnorm_train<T: Scalar>(
    input: &Tensor4<T>,
    gamma: &[T],
    beta: &[T],
    stats: &mut BnStats<T>,
    config: &BatchNormConfig,
) -> Result<(Tensor4<T>, BatchNormCache<T>)> {
    check_affine(input, gamma, beta, stats.channels())?;
    let [n, c, h, w] = input.shape();
    let plane = h * w;
    let count = n * plane;
    if count < 2 {
        return Err(PceError::shape(format!(
            "train-mode batch norm needs at least 2 values per channel, input is {:?}",
            input.shape()
        )));
    }
    let m = T::of(count as f64);
    let eps = T::of(config.eps);
    let momentum = T::of(config.momentum);
    let mut out = Tensor4::zeros(input.shape());
    let mut xhat = Tensor4::zeros(input.shape());
    let mut inv_std = vec![T::zero(); c];
    for ch in 0..c {
        let mut sum = T::zero();
        for b in 0..n {
            sum += input.item(b)[ch * plane..(ch + 1) * plane]
                .iter()
                .copied()
                .sum::<T>();
        }
        let mean = sum / m;
        let mut sq = T::zero();
        for b in 0..n {
            for &v in &input.item(b)[ch * plane..(ch + 1) * plane] {
                let d = v - mean;
                sq += d * d;
            }
        }
        let var = sq / m;
        let istd = T::one() / (var + eps).sqrt();
        inv_std[ch] = istd;
        for b in 0..n {
            let range = ch * plane..(ch + 1) * plane;
            let src = &input.item(b)[range.clone()];
            let xh = &mut xhat.item_mut(b)[range.clone()];
            for (dst, &v) in xh.iter_mut().zip(src) {
                *dst = (v - mean) * istd;
            }
            let o = &mut out.item_mut(b)[range.clone()];
            for (dst, &v) in o.iter_mut().zip(&xhat.item(b)[range]) {
                *dst = gamma[ch] * v + beta[ch];
            }
        }
        let unbiased = sq / (m - T::one());
        stats.mean[ch] = (T::one() - momentum) * stats.mean[ch] + momentum * mean;
        stats.var[ch] = (T::one() - momentum) * stats.var[ch] + momentum * unbiased;
    }
    stats.updates += 1;
    Ok((out, BatchNormCache { xhat, inv_std }))
}

/// Eval-mode forward using the running statistics.
pub fn batchnorm_eval<T: Scalar>(
    input: &Tensor4<T>,
    gamma: &[T],
    beta: &[T],
    stats: &BnStats<T>,
    config: &BatchNormConfig,
) -> Result<Tensor4<T>> {
    check_affine(input, gamma, beta, stats.channels())?;
    if stats.updates == 0 {
        return Err(PceError::Uninitialized(
            "batch norm running statistics have never been updated; run train mode first".into(),
        ));
    }
    let [n, c, h, w] = input.shape();
    let plane = h * w;
    let eps = T::of(config.eps);
    let mut out = input.clone();
    for b in 0..n {
        let item = out.item_mut(b);
        for ch in 0..c {
            let scale = gamma[ch] / (stats.var[ch] + eps).sqrt();
            let shift = beta[ch] - stats.mean[ch] * scale;
            item[ch * plane..(ch + 1) * plane]
                .iter_mut()
                .for_each(|v| *v = *v * scale + shift);
        }
    }
    Ok(out)
}

/// Backward pass of [`batchnorm_train`].
pub fn batchnorm_backward<T: Scalar>(
    cache: &BatchNormCache<T>,
    gamma: &[T],
    grad_output: &Tensor4<T>,
) -> Result<BatchNormGrads<T>> {
    if grad_output.shape() != cache.xhat.shape() {
        return Err(PceError::shape(format!(
            "batch norm gradient {:?} does not match forward {:?}",
            grad_output.shape(),
            cache.xhat.shape()
        )));
    }
    let [n, c, h, w] = grad_output.shape();
    let plane = h * w;
    let m = T::of((n * plane) as f64);
    let mut grad_input = Tensor4::zeros(grad_output.shape());
    let mut grad_gamma = vec![T::zero(); c];
    let mut grad_beta = vec![T::zero(); c];
    for ch in 0..c {
        let range = ch * plane..(ch + 1) * plane;
        let mut sum_g = T::zero();
        let mut sum_gx = T::zero();
        for b in 0..n {
            let g = &grad_output.item(b)[range.clone()];
            let xh = &cache.xhat.item(b)[range.clone()];
            for (&gv, &xv) in g.iter().zip(xh) {
                sum_g += gv;
                sum_gx += gv * xv;
            }
        }
        grad_gamma[ch] = sum_gx;
        grad_beta[ch] = sum_g;
        let k = gamma[ch] * cache.inv_std[ch] / m;
        for b in 0..n {
            let g = &grad_output.item(b)[range.clone()];
            let xh = &cache.xhat.item(b)[range.clone()];
            let dst = &mut grad_input.item_mut(b)[range.clone()];
            for ((d, &gv), &xv) in dst.iter_mut().zip(g).zip(xh) {
                *d = k * (m * gv - sum_g - xv * sum_gx);
            }
        }
    }
    Ok(BatchNormGrads {
        input: grad_input,
        gamma: grad_gamma,
        beta: grad_beta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Tensor4<f64> {
        Tensor4::from_fn([3, 2, 4, 5], |[n, c, y, x]| {
            ((n * 37 + c * 11 + y * 5 + x * 3) % 17) as f64 * 0.3 + c as f64 * 4.0
        })
    }

    #[test]
    fn train_output_is_standardised() {
        let x = sample();
        let mut stats = BnStats::new(2);
        let (y, _) = batchnorm_train(
            &x,
            &[1.0, 1.0],
            &[0.0, 0.0],
            &mut stats,
            &Default::default(),
        )
        .unwrap();
        for ch in 0..2 {
            let vals: Vec<f64> = (0..3)
                .flat_map(|b| y.item(b)[ch * 20..(ch + 1) * 20].to_vec())
                .collect();
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / vals.len() as f64;
            assert!(mean.abs() < 1e-4);
            assert!((var - 1.0).abs() < 1e-4);
        }
        assert_eq!(stats.updates, 1);
    }

    #[test]
    fn constant_channel_maps_to_beta() {
        let x = Tensor4::<f64>::filled([2, 1, 3, 3], 7.25);
        let mut stats = BnStats::new(1);
        let (y, _) = batchnorm_train(&x, &[3.0], &[0.5], &mut stats, &Default::default()).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn eval_before_update_is_rejected() {
        let x = sample();
        let stats = BnStats::new(2);
        let err =
            batchnorm_eval(&x, &[1.0; 2], &[0.0; 2], &stats, &Default::default()).unwrap_err();
        assert!(matches!(err, PceError::Uninitialized(_)));
    }

    #[test]
    fn train_rejects_single_value_per_channel() {
        let x = Tensor4::<f64>::filled([1, 2, 1, 1], 1.0);
        let mut stats = BnStats::new(2);
        assert!(
            batchnorm_train(&x, &[1.0; 2], &[0.0; 2], &mut stats, &Default::default()).is_err()
        );
        assert_eq!(stats.updates, 0);
    }

    #[test]
    fn running_stats_follow_moving_average() {
        let x = sample();
        let mut stats = BnStats::new(2);
        let cfg = BatchNormConfig::default();
        batchnorm_train(&x, &[1.0; 2], &[0.0; 2], &mut stats, &cfg).unwrap();
        let vals: Vec<f64> = (0..3).flat_map(|b| x.item(b)[..20].to_vec()).collect();
        let mean = vals.iter().sum::<f64>() / 60.0;
        let unbiased = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 59.0;
        assert!((stats.mean[0] - 0.1 * mean).abs() < 1e-12);
        assert!((stats.var[0] - (0.9 + 0.1 * unbiased)).abs() < 1e-12);
        // Eval after one update uses those statistics.
        let y = batchnorm_eval(&x, &[1.0; 2], &[0.0; 2], &stats, &cfg).unwrap();
        let expect = (x.get(0, 0, 0, 0) - stats.mean[0]) / (stats.var[0] + 1e-5).sqrt();
        assert!((y.get(0, 0, 0, 0) - expect).abs() < 1e-12);
    }
}
