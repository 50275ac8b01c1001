//! Masked reconstruction loss, PatchGAN adversarial losses and their weighted sum.
//!
//! Every loss returns its value together with the gradient with respect to
//! its first tensor argument.

use log::warn;

use crate::error::{PceError, Result};
use crate::model::Discriminator;
use crate::tensor::{Scalar, Tensor4};

/// Floor applied inside every `ln` of a judgement probability.
pub const LOG_EPS: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GanVariant {
    /// Generator minimises `ln(1 - D(fake))`.
    Minimax,
    /// Generator minimises `-ln D(fake)`.
    NonSaturating,
}

impl std::str::FromStr for GanVariant {
    type Err = PceError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "minimax" => Ok(GanVariant::Minimax),
            "non_saturating" | "non-saturating" => Ok(GanVariant::NonSaturating),
            other => Err(PceError::config(format!("unknown GAN variant `{other}`"))),
        }
    }
}

impl std::fmt::Display for GanVariant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            GanVariant::Minimax => "minimax",
            GanVariant::NonSaturating => "non_saturating",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossConfig {
    /// Weight of the reconstruction term; `1 - lambda` weights the adversarial term.
    pub lambda: f64,
    pub gan_variant: GanVariant,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            lambda: 0.999,
            gan_variant: GanVariant::NonSaturating,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(PceError::config(format!(
                "lambda must lie in [0, 1], got {}",
                self.lambda
            )));
        }
        Ok(())
    }
}

/// A scalar loss and its gradient.
#[derive(Debug, Clone)]
pub struct LossGrad<T> {
    pub value: T,
    pub grad: Tensor4<T>,
}

/// Mean absolute error over masked elements: `|M * (output - target)|_1 / count(M)`.
///
/// `mask` is `(n, 1, h, w)` and broadcast across channels. An empty mask
/// yields zero loss and zero gradient.
pub fn masked_l1<T: Scalar>(
    output: &Tensor4<T>,
    target: &Tensor4<T>,
    mask: &Tensor4<T>,
) -> Result<LossGrad<T>> {
    let [n, c, h, w] = output.shape();
    if target.shape() != output.shape() || mask.shape() != [n, 1, h, w] {
        return Err(PceError::shape(format!(
            "masked L1 over output {:?}, target {:?}, mask {:?}",
            output.shape(),
            target.shape(),
            mask.shape()
        )));
    }
    let plane = h * w;
    let weight: T = mask.data().iter().copied().sum::<T>() * T::of(c as f64);
    let mut grad = Tensor4::zeros(output.shape());
    if weight == T::zero() {
        warn!("masked L1 evaluated with an empty mask; returning 0");
        return Ok(LossGrad {
            value: T::zero(),
            grad,
        });
    }
    let mut total = T::zero();
    for b in 0..n {
        let m = mask.item(b);
        let o = output.item(b);
        let t = target.item(b);
        let g = grad.item_mut(b);
        for ch in 0..c {
            for p in 0..plane {
                let mv = m[p];
                if mv == T::zero() {
                    continue;
                }
                let i = ch * plane + p;
                let d = o[i] - t[i];
                total += mv * d.abs();
                g[i] = mv * sign(d) / weight;
            }
        }
    }
    Ok(LossGrad {
        value: total / weight,
        grad,
    })
}

fn sign<T: Scalar>(v: T) -> T {
    if v > T::zero() {
        T::one()
    } else if v < T::zero() {
        -T::one()
    } else {
        T::zero()
    }
}

pub fn sigmoid<T: Scalar>(z: T) -> T {
    T::one() / (T::one() + (-z).exp())
}

/// `-mean ln(max(p, eps))` with `p = sigmoid(z)` and its gradient in `z`.
fn neg_log_sigmoid_mean<T: Scalar>(logits: &Tensor4<T>) -> (T, Tensor4<T>) {
    let eps = T::of(LOG_EPS);
    let count = T::of(logits.len() as f64);
    let mut total = T::zero();
    let mut grad = Tensor4::zeros(logits.shape());
    for (g, &z) in grad.data_mut().iter_mut().zip(logits.data()) {
        let p = sigmoid(z);
        if p > eps {
            total -= p.ln();
            *g = -(T::one() - p) / count;
        } else {
            total -= eps.ln();
        }
    }
    (total / count, grad)
}

/// `-mean ln(max(1 - p, eps))` with `p = sigmoid(z)` and its gradient in `z`.
fn neg_log_one_minus_sigmoid_mean<T: Scalar>(logits: &Tensor4<T>) -> (T, Tensor4<T>) {
    let eps = T::of(LOG_EPS);
    let count = T::of(logits.len() as f64);
    let mut total = T::zero();
    let mut grad = Tensor4::zeros(logits.shape());
    for (g, &z) in grad.data_mut().iter_mut().zip(logits.data()) {
        let p = sigmoid(z);
        let q = T::one() - p;
        if q > eps {
            total -= q.ln();
            *g = p / count;
        } else {
            total -= eps.ln();
        }
    }
    (total / count, grad)
}

/// Discriminator loss on patch logits:
/// `-[mean ln D(real) + mean ln(1 - D(fake))]`.
///
/// Returns the value and the gradients with respect to both logit maps.
pub fn discriminator_loss_from_logits<T: Scalar>(
    real_logits: &Tensor4<T>,
    fake_logits: &Tensor4<T>,
) -> (T, Tensor4<T>, Tensor4<T>) {
    let (lr, gr) = neg_log_sigmoid_mean(real_logits);
    let (lf, gf) = neg_log_one_minus_sigmoid_mean(fake_logits);
    (lr + lf, gr, gf)
}

/// Generator adversarial loss on the fake patch logits, averaged over patches.
pub fn generator_adv_loss_from_logits<T: Scalar>(
    fake_logits: &Tensor4<T>,
    variant: GanVariant,
) -> LossGrad<T> {
    match variant {
        GanVariant::NonSaturating => {
            let (value, grad) = neg_log_sigmoid_mean(fake_logits);
            LossGrad { value, grad }
        }
        GanVariant::Minimax => {
            let (v, g) = neg_log_one_minus_sigmoid_mean(fake_logits);
            LossGrad {
                value: -v,
                grad: g.map(|x| -x),
            }
        }
    }
}

/// Evaluates the discriminator loss on a real and a composited fake batch and
/// adds its parameter gradients into `d`.
pub fn discriminator_loss<T: Scalar>(
    d: &mut Discriminator<T>,
    real: &Tensor4<T>,
    fake_composited: &Tensor4<T>,
) -> Result<T> {
    let (real_logits, real_cache) = d.forward(real)?;
    let (fake_logits, fake_cache) = d.forward(fake_composited)?;
    let (value, g_real, g_fake) = discriminator_loss_from_logits(&real_logits, &fake_logits);
    d.backward(&real_cache, &g_real, true)?;
    d.backward(&fake_cache, &g_fake, true)?;
    Ok(value)
}

/// Generator adversarial loss and its gradient with respect to the composited
/// fake batch. Discriminator parameters and gradients are left untouched.
pub fn generator_adv_loss<T: Scalar>(
    d: &mut Discriminator<T>,
    fake_composited: &Tensor4<T>,
    variant: GanVariant,
) -> Result<LossGrad<T>> {
    let (logits, cache) = d.forward(fake_composited)?;
    let LossGrad { value, grad } = generator_adv_loss_from_logits(&logits, variant);
    let grad = d.backward(&cache, &grad, false)?;
    Ok(LossGrad { value, grad })
}

/// `lambda * l1 + (1 - lambda) * adv`.
pub fn total_loss(l1: f64, adv: f64, config: &LossConfig) -> f64 {
    config.lambda * l1 + (1.0 - config.lambda) * adv
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::DiscriminatorConfig;

    #[test]
    fn hand_evaluated_two_by_two() {
        let x = Tensor4::<f64>::zeros([1, 1, 2, 2]);
        let out = Tensor4::from_vec([1, 1, 2, 2], vec![3.0, 9.0, 9.0, 9.0]).unwrap();
        let m = Tensor4::from_vec([1, 1, 2, 2], vec![1.0, 0.0, 0.0, 0.0]).unwrap();
        let l = masked_l1(&out, &x, &m).unwrap();
        // scalar loop oracle
        let mut acc = 0.0;
        let mut cnt = 0.0;
        for i in 0..4 {
            acc += m.data()[i] * (out.data()[i] - x.data()[i]).abs();
            cnt += m.data()[i];
        }
        assert_eq!(l.value, 3.0);
        assert_eq!(l.value, acc / cnt);
        assert_eq!(l.grad.data(), &[1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn zero_for_perfect_output_and_empty_mask() {
        let x = Tensor4::from_fn([2, 3, 4, 4], |[n, c, y, xx]| (n + c + y + xx) as f32);
        let m = Tensor4::filled([2, 1, 4, 4], 1.0);
        assert_eq!(masked_l1(&x, &x, &m).unwrap().value, 0.0);
        let other = x.map(|v| v * 3.0 + 1.0);
        let empty = masked_l1(&other, &x, &Tensor4::zeros([2, 1, 4, 4])).unwrap();
        assert_eq!(empty.value, 0.0);
        assert!(empty.grad.data().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn half_everywhere_gives_two_ln_two() {
        let zeros = Tensor4::<f64>::zeros([2, 1, 3, 3]);
        let (v, _, _) = discriminator_loss_from_logits(&zeros, &zeros);
        assert!((v - 2.0 * std::f64::consts::LN_2).abs() < 1e-12);
        assert!((v - 1.3863).abs() < 1e-4);
    }

    #[test]
    fn optimal_discriminator_approaches_zero() {
        let real = Tensor4::<f64>::filled([1, 1, 2, 2], 30.0);
        let fake = Tensor4::<f64>::filled([1, 1, 2, 2], -30.0);
        let (v, gr, gf) = discriminator_loss_from_logits(&real, &fake);
        assert!(v < 1e-12);
        assert!(gr.data().iter().all(|g| g.abs() < 1e-12));
        assert!(gf.data().iter().all(|g| g.abs() < 1e-12));
    }

    #[test]
    fn clamped_log_is_finite() {
        let real = Tensor4::<f32>::filled([1, 1, 1, 1], -200.0);
        let fake = Tensor4::<f32>::filled([1, 1, 1, 1], 200.0);
        let (v, _, _) = discriminator_loss_from_logits(&real, &fake);
        assert!(v.is_finite());
        assert!((v as f64 - 2.0 * -(LOG_EPS.ln())).abs() < 1e-3);
    }

    #[test]
    fn variants_differ_in_sign_convention() {
        let z = Tensor4::<f64>::filled([1, 1, 1, 1], 0.0);
        let ns = generator_adv_loss_from_logits(&z, GanVariant::NonSaturating);
        let mm = generator_adv_loss_from_logits(&z, GanVariant::Minimax);
        assert!((ns.value - std::f64::consts::LN_2).abs() < 1e-12);
        assert!((mm.value + std::f64::consts::LN_2).abs() < 1e-12);
        // Both push the logit up.
        assert!(ns.grad.data()[0] < 0.0 && mm.grad.data()[0] < 0.0);
    }

    #[test]
    fn total_loss_weighting() {
        let cfg = LossConfig::default();
        assert!((total_loss(0.2, 1.4, &cfg) - 0.2012).abs() < 1e-12);
        let l1_only = LossConfig { lambda: 1.0, ..cfg };
        assert_eq!(total_loss(0.2, 1.4, &l1_only), 0.2);
        let adv_only = LossConfig { lambda: 0.0, ..cfg };
        assert_eq!(total_loss(0.2, 1.4, &adv_only), 1.4);
        assert!(LossConfig { lambda: 1.5, ..cfg }.validate().is_err());
        assert!(LossConfig {
            lambda: -0.1,
            ..cfg
        }
        .validate()
        .is_err());
    }

    #[test]
    fn generator_adv_loss_leaves_discriminator_alone() {
        let mut d = Discriminator::<f64>::build(DiscriminatorConfig::with_base(2), 5).unwrap();
        let before = d.clone();
        let fake = Tensor4::from_fn([1, 3, 16, 16], |[_, c, y, x]| {
            ((c + y * x) % 5) as f64 / 5.0
        });
        let g = generator_adv_loss(&mut d, &fake, GanVariant::NonSaturating).unwrap();
        assert_eq!(d, before);
        assert_eq!(g.grad.shape(), fake.shape());
    }
}
