//! Finite-difference verification of every backward kernel.
//!
//! Each check draws random small problems, contracts the forward output with
//! a random projection `r` to obtain a scalar, and compares the analytic
//! gradient (backward fed with `r`) to central differences of that scalar.
//! The error reported is the norm-wise relative error
//! `|analytic - numeric|_2 / max(|analytic|_2, |numeric|_2)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::loss::{self, GanVariant};
use crate::model::{ConvStack, Discriminator, DiscriminatorConfig, Generator, GeneratorConfig};
use crate::tensor::{
    batchnorm_backward, batchnorm_train, conv2d_backward, conv2d_forward, elu, elu_backward,
    leaky_relu, leaky_relu_backward, upsample_nearest_x2, upsample_nearest_x2_backward,
    BatchNormConfig, BnStats, ConvSpec, Scalar, Tensor4,
};

/// Outcome of one named check over several random cases.
#[derive(Debug, Clone)]
pub struct CheckResult {
    pub name: String,
    pub cases: usize,
    pub max_rel_error: f64,
    pub tolerance: f64,
}

impl CheckResult {
    pub fn passed(&self) -> bool {
        self.max_rel_error <= self.tolerance
    }
}

#[derive(Debug, Clone, Default)]
pub struct GradcheckReport {
    pub results: Vec<CheckResult>,
}

impl GradcheckReport {
    pub fn passed(&self) -> bool {
        self.results.iter().all(CheckResult::passed)
    }

    pub fn render(&self) -> String {
        let mut s = format!(
            "{:<28} {:>6} {:>12} {:>10}  status\n",
            "check", "cases", "max rel err", "tolerance"
        );
        for r in &self.results {
            s.push_str(&format!(
                "{:<28} {:>6} {:>12.3e} {:>10.0e}  {}\n",
                r.name,
                r.cases,
                r.max_rel_error,
                r.tolerance,
                if r.passed() { "PASS" } else { "FAIL" }
            ));
        }
        s
    }
}

/// Finite-difference step and pass threshold for one precision.
#[derive(Debug, Clone, Copy)]
pub struct Tolerance {
    pub step: f64,
    pub rel: f64,
}

impl Tolerance {
    /// 64-bit: step 1e-5, relative error 1e-5.
    pub const F64: Tolerance = Tolerance {
        step: 1e-5,
        rel: 1e-5,
    };
    /// 32-bit: step 1e-2, relative error 1e-3.
    pub const F32: Tolerance = Tolerance {
        step: 1e-2,
        rel: 1e-3,
    };
}

/// Norm-wise relative error between two gradient vectors.
pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    let diff: f64 = analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).powi(2))
        .sum::<f64>()
        .sqrt();
    let na = analytic.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nn = numeric.iter().map(|a| a * a).sum::<f64>().sqrt();
    let denom = na.max(nn);
    if denom == 0.0 {
        0.0
    } else {
        diff / denom
    }
}

/// Central differences of `f` with respect to every element of `x`.
pub fn numerical_gradient<T: Scalar>(
    x: &Tensor4<T>,
    step: f64,
    mut f: impl FnMut(&Tensor4<T>) -> f64,
) -> Vec<f64> {
    let mut probe = x.clone();
    let mut grad = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let orig = probe.data()[i];
        let plus = orig + T::of(step);
        let minus = orig - T::of(step);
        probe.data_mut()[i] = plus;
        let fp = f(&probe);
        probe.data_mut()[i] = minus;
        let fm = f(&probe);
        probe.data_mut()[i] = orig;
        grad.push((fp - fm) / (plus - minus).as_f64());
    }
    grad
}

fn as_f64<T: Scalar>(v: &[T]) -> Vec<f64> {
    v.iter().map(|x| x.as_f64()).collect()
}

/// `sum(t * r)` accumulated in f64.
fn project<T: Scalar>(t: &Tensor4<T>, r: &Tensor4<T>) -> f64 {
    t.data()
        .iter()
        .zip(r.data())
        .map(|(a, b)| a.as_f64() * b.as_f64())
        .sum()
}

fn uniform<T: Scalar>(rng: &mut ChaCha8Rng, shape: [usize; 4], lo: f64, hi: f64) -> Tensor4<T> {
    Tensor4::from_fn(shape, |_| T::of(rng.gen_range(lo..hi)))
}

/// Uniform values in `[-1, 1]` with `|x| >= gap`, keeping clear of activation kinks.
fn away_from_zero<T: Scalar>(rng: &mut ChaCha8Rng, shape: [usize; 4], gap: f64) -> Tensor4<T> {
    Tensor4::from_fn(shape, |_| {
        let m = rng.gen_range(gap..1.0);
        T::of(if rng.gen_bool(0.5) { m } else { -m })
    })
}

/// Gradient check of a convolution with the given stride and dilation.
pub fn check_conv<T: Scalar>(
    cases: usize,
    stride: usize,
    dilation: usize,
    tol: Tolerance,
    rng: &mut ChaCha8Rng,
) -> Result<f64> {
    let mut worst = 0.0f64;
    for _ in 0..cases {
        let cin = rng.gen_range(1..=3);
        let cout = rng.gen_range(1..=3);
        let (lo, hi) = if dilation <= 4 {
            (3, 8)
        } else {
            (dilation - 2, dilation + 3)
        };
        let h = rng.gen_range(lo..=hi);
        let w = rng.gen_range(lo..=hi);
        let n = rng.gen_range(1..=2);
        let spec = ConvSpec {
            in_channels: cin,
            out_channels: cout,
            kernel: 3,
            stride,
            dilation,
            padding: dilation,
        };
        let x: Tensor4<T> = uniform(rng, [n, cin, h, w], -1.0, 1.0);
        let wts: Tensor4<T> = uniform(rng, spec.weight_shape(), -1.0, 1.0);
        let bias: Tensor4<T> = uniform(rng, [1, cout, 1, 1], -1.0, 1.0);
        let out = conv2d_forward(&x, &wts, Some(bias.data()), &spec)?;
        let r: Tensor4<T> = uniform(rng, out.shape(), -1.0, 1.0);
        let g = conv2d_backward(&x, &wts, &r, &spec)?;

        let f = |xx: &Tensor4<T>, ww: &Tensor4<T>, bb: &Tensor4<T>| {
            project(
                &conv2d_forward(xx, ww, Some(bb.data()), &spec).expect("conv"),
                &r,
            )
        };
        let nx = numerical_gradient(&x, tol.step, |p| f(p, &wts, &bias));
        let nw = numerical_gradient(&wts, tol.step, |p| f(&x, p, &bias));
        let nb = numerical_gradient(&bias, tol.step, |p| f(&x, &wts, p));
        worst = worst
            .max(relative_error(&as_f64(g.input.data()), &nx))
            .max(relative_error(&as_f64(g.weights.data()), &nw))
            .max(relative_error(&as_f64(&g.bias), &nb));
    }
    Ok(worst)
}

pub fn check_elu<T: Scalar>(cases: usize, tol: Tolerance, rng: &mut ChaCha8Rng) -> Result<f64> {
    let mut worst = 0.0f64;
    for _ in 0..cases {
        let shape = [
            rng.gen_range(1..=2),
            rng.gen_range(1..=3),
            rng.gen_range(1..=8),
            rng.gen_range(1..=8),
        ];
        let x: Tensor4<T> = away_from_zero(rng, shape, 0.05);
        let x = x.map(|v| v * T::of(3.0));
        let r: Tensor4<T> = uniform(rng, shape, -1.0, 1.0);
        let analytic = elu_backward(&x, &r)?;
        let numeric = numerical_gradient(&x, tol.step, |p| project(&elu(p), &r));
        worst = worst.max(relative_error(&as_f64(analytic.data()), &numeric));
    }
    Ok(worst)
}

pub fn check_leaky_relu<T: Scalar>(
    cases: usize,
    tol: Tolerance,
    rng: &mut ChaCha8Rng,
) -> Result<f64> {
    let alpha = T::of(0.2);
    let mut worst = 0.0f64;
    for _ in 0..cases {
        let shape = [
            rng.gen_range(1..=2),
            rng.gen_range(1..=3),
            rng.gen_range(1..=8),
            rng.gen_range(1..=8),
        ];
        let x: Tensor4<T> = away_from_zero(rng, shape, 0.05);
        let r: Tensor4<T> = uniform(rng, shape, -1.0, 1.0);
        let analytic = leaky_relu_backward(&x, &r, alpha)?;
        let numeric = numerical_gradient(&x, tol.step, |p| project(&leaky_relu(p, alpha), &r));
        worst = worst.max(relative_error(&as_f64(analytic.data()), &numeric));
    }
    Ok(worst)
}

pub fn check_batchnorm<T: Scalar>(
    cases: usize,
    tol: Tolerance,
    rng: &mut ChaCha8Rng,
) -> Result<f64> {
    let cfg = BatchNormConfig::default();
    let mut worst = 0.0f64;
    for _ in 0..cases {
        let c = rng.gen_range(1..=3);
        let shape = [
            rng.gen_range(1..=3),
            c,
            rng.gen_range(2..=6),
            rng.gen_range(2..=6),
        ];
        let x: Tensor4<T> = uniform(rng, shape, -2.0, 2.0);
        let gamma: Tensor4<T> = uniform(rng, [1, c, 1, 1], 0.5, 1.5);
        let beta: Tensor4<T> = uniform(rng, [1, c, 1, 1], -0.5, 0.5);
        let r: Tensor4<T> = uniform(rng, shape, -1.0, 1.0);
        let mut stats = BnStats::new(c);
        let (_, cache) = batchnorm_train(&x, gamma.data(), beta.data(), &mut stats, &cfg)?;
        let g = batchnorm_backward(&cache, gamma.data(), &r)?;
        let f = |xx: &Tensor4<T>, gg: &Tensor4<T>, bb: &Tensor4<T>| {
            let mut s = BnStats::new(c);
            let (y, _) = batchnorm_train(xx, gg.data(), bb.data(), &mut s, &cfg).expect("bn");
            project(&y, &r)
        };
        let nx = numerical_gradient(&x, tol.step, |p| f(p, &gamma, &beta));
        let ng = numerical_gradient(&gamma, tol.step, |p| f(&x, p, &beta));
        let nb = numerical_gradient(&beta, tol.step, |p| f(&x, &gamma, p));
        worst = worst
            .max(relative_error(&as_f64(g.input.data()), &nx))
            .max(relative_error(&as_f64(&g.gamma), &ng))
            .max(relative_error(&as_f64(&g.beta), &nb));
    }
    Ok(worst)
}

pub fn check_upsample<T: Scalar>(
    cases: usize,
    tol: Tolerance,
    rng: &mut ChaCha8Rng,
) -> Result<f64> {
    let mut worst = 0.0f64;
    for _ in 0..cases {
        let shape = [
            rng.gen_range(1..=2),
            rng.gen_range(1..=3),
            rng.gen_range(1..=8),
            rng.gen_range(1..=8),
        ];
        let x: Tensor4<T> = uniform(rng, shape, -1.0, 1.0);
        let [n, c, h, w] = shape;
        let r: Tensor4<T> = uniform(rng, [n, c, 2 * h, 2 * w], -1.0, 1.0);
        let analytic = upsample_nearest_x2_backward(&r)?;
        let numeric = numerical_gradient(&x, tol.step, |p| project(&upsample_nearest_x2(p), &r));
        worst = worst.max(relative_error(&as_f64(analytic.data()), &numeric));
    }
    Ok(worst)
}

fn random_mask<T: Scalar>(rng: &mut ChaCha8Rng, shape: [usize; 4]) -> Tensor4<T> {
    let mut m = Tensor4::from_fn(shape, |_| {
        if rng.gen_bool(0.5) {
            T::one()
        } else {
            T::zero()
        }
    });
    m.data_mut()[0] = T::one();
    m
}

pub fn check_masked_l1<T: Scalar>(
    cases: usize,
    tol: Tolerance,
    rng: &mut ChaCha8Rng,
) -> Result<f64> {
    let mut worst = 0.0f64;
    for _ in 0..cases {
        let [n, h, w] = [
            rng.gen_range(1..=2),
            rng.gen_range(2..=8),
            rng.gen_range(2..=8),
        ];
        let x: Tensor4<T> = uniform(rng, [n, 3, h, w], 0.0, 1.0);
        let offset: Tensor4<T> = away_from_zero(rng, [n, 3, h, w], 0.05);
        let y = crate::tensor::add(&x, &offset)?;
        let m: Tensor4<T> = random_mask(rng, [n, 1, h, w]);
        let analytic = loss::masked_l1(&y, &x, &m)?;
        let numeric = numerical_gradient(&y, tol.step, |p| {
            loss::masked_l1(p, &x, &m).expect("l1").value.as_f64()
        });
        worst = worst.max(relative_error(&as_f64(analytic.grad.data()), &numeric));
    }
    Ok(worst)
}

fn tiny_discriminator<T: Scalar>(rng: &mut ChaCha8Rng) -> Result<Discriminator<T>> {
    let cfg = DiscriminatorConfig {
        channel_schedule: vec![3, 4, 1],
        strides: vec![2, 2, 1],
        ..DiscriminatorConfig::with_base(2)
    };
    let mut d = Discriminator::build(cfg, rng.gen())?;
    for layer in &mut d.stack.layers {
        if let Some(b) = &mut layer.bias {
            b.value = uniform(rng, b.value.shape(), -0.2, 0.2);
        }
    }
    Ok(d)
}

/// Gradient of the generator adversarial loss with respect to the composited fake batch.
pub fn check_generator_adv<T: Scalar>(
    cases: usize,
    variant: GanVariant,
    tol: Tolerance,
    rng: &mut ChaCha8Rng,
) -> Result<f64> {
    let mut worst = 0.0f64;
    for _ in 0..cases {
        let mut d = tiny_discriminator::<T>(rng)?;
        let size = rng.gen_range(4..=8);
        let n = rng.gen_range(1..=2);
        let fake: Tensor4<T> = uniform(rng, [n, 3, size, size], 0.0, 1.0);
        let analytic = loss::generator_adv_loss(&mut d, &fake, variant)?;
        let numeric = numerical_gradient(&fake, tol.step, |p| {
            let logits = d.judge(p).expect("judge");
            loss::generator_adv_loss_from_logits(&logits, variant)
                .value
                .as_f64()
        });
        worst = worst.max(relative_error(&as_f64(analytic.grad.data()), &numeric));
    }
    Ok(worst)
}

/// Parameter gradients of the discriminator loss.
pub fn check_discriminator_loss<T: Scalar>(
    cases: usize,
    tol: Tolerance,
    rng: &mut ChaCha8Rng,
) -> Result<f64> {
    let mut worst = 0.0f64;
    for _ in 0..cases {
        let mut d = tiny_discriminator::<T>(rng)?;
        let size = rng.gen_range(4..=8);
        let n = rng.gen_range(1..=2);
        let real: Tensor4<T> = uniform(rng, [n, 3, size, size], 0.0, 1.0);
        let fake: Tensor4<T> = uniform(rng, [n, 3, size, size], 0.0, 1.0);
        d.stack.zero_grad();
        loss::discriminator_loss(&mut d, &real, &fake)?;
        let value = |dd: &Discriminator<T>| {
            let lr = dd.judge(&real).expect("judge");
            let lf = dd.judge(&fake).expect("judge");
            loss::discriminator_loss_from_logits(&lr, &lf).0.as_f64()
        };
        worst = worst.max(check_stack_params(&d, |dd| &mut dd.stack, value, tol.step));
    }
    Ok(worst)
}

/// Compares every accumulated parameter gradient in `model` with central
/// differences of `value`.
fn check_stack_params<M: Clone, T: Scalar>(
    model: &M,
    stack: impl Fn(&mut M) -> &mut ConvStack<T>,
    value: impl Fn(&M) -> f64,
    step: f64,
) -> f64 {
    let mut worst = 0.0f64;
    let mut base = model.clone();
    let names: Vec<(String, Vec<f64>)> = stack(&mut base)
        .params_mut("p")
        .into_iter()
        .map(|(name, p)| (name, as_f64(p.grad.data())))
        .collect();
    for (idx, (_, analytic)) in names.iter().enumerate() {
        let mut numeric = Vec::with_capacity(analytic.len());
        for i in 0..analytic.len() {
            let eval = |delta: f64| {
                let mut m = model.clone();
                let mut params = stack(&mut m).params_mut("p");
                let p = &mut params[idx].1;
                let v = p.value.data()[i];
                p.value.data_mut()[i] = v + T::of(delta);
                value(&m)
            };
            numeric.push((eval(step) - eval(-step)) / (2.0 * step));
        }
        worst = worst.max(relative_error(analytic, &numeric));
    }
    worst
}

/// End-to-end backward through a tiny generator: input and every parameter.
pub fn check_generator_stack<T: Scalar>(
    cases: usize,
    tol: Tolerance,
    rng: &mut ChaCha8Rng,
) -> Result<f64> {
    let mut worst = 0.0f64;
    for _ in 0..cases {
        let cfg = GeneratorConfig {
            base_filters: 2,
            dilation_schedule: vec![2, 4],
            ..GeneratorConfig::default()
        };
        let mut g = Generator::<T>::build(cfg, rng.gen())?;
        // Perturb identity-initialised filters and affine terms so every path carries signal.
        for (_, p) in g.stack.params_mut("g") {
            let noise: Tensor4<T> = uniform(rng, p.value.shape(), -0.3, 0.3);
            p.value = crate::tensor::add(&p.value, &noise)?;
        }
        let x: Tensor4<T> = uniform(rng, [2, 3, 8, 8], 0.0, 1.0);
        let (y, cache) = g.forward_train(&x)?;
        let r: Tensor4<T> = uniform(rng, y.shape(), -1.0, 1.0);
        g.stack.zero_grad();
        let gx = g.backward(&cache, &r)?;
        let value = |m: &Generator<T>| {
            let mut m = m.clone();
            project(&m.forward_train(&x).expect("forward").0, &r)
        };
        let nx = numerical_gradient(&x, tol.step, |p| {
            let mut m = g.clone();
            project(&m.forward_train(p).expect("forward").0, &r)
        });
        worst = worst.max(relative_error(&as_f64(gx.data()), &nx));
        worst = worst.max(check_stack_params(&g, |m| &mut m.stack, value, tol.step));
    }
    Ok(worst)
}

/// Runs every check at the given precision.
pub fn run_suite<T: Scalar>(cases: usize, seed: u64, tol: Tolerance) -> Result<GradcheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut results = Vec::new();
    let mut push = |name: String, err: f64| {
        results.push(CheckResult {
            name,
            cases,
            max_rel_error: err,
            tolerance: tol.rel,
        })
    };
    push(
        "conv stride 2".into(),
        check_conv::<T>(cases, 2, 1, tol, &mut rng)?,
    );
    for d in [1, 2, 4, 8, 16] {
        push(
            format!("conv dilation {d}"),
            check_conv::<T>(cases, 1, d, tol, &mut rng)?,
        );
    }
    push("elu".into(), check_elu::<T>(cases, tol, &mut rng)?);
    push(
        "leaky relu".into(),
        check_leaky_relu::<T>(cases, tol, &mut rng)?,
    );
    push(
        "batch norm (train)".into(),
        check_batchnorm::<T>(cases, tol, &mut rng)?,
    );
    push(
        "nearest upsample x2".into(),
        check_upsample::<T>(cases, tol, &mut rng)?,
    );
    push(
        "masked l1".into(),
        check_masked_l1::<T>(cases, tol, &mut rng)?,
    );
    push(
        "generator adv (non-sat)".into(),
        check_generator_adv::<T>(cases, GanVariant::NonSaturating, tol, &mut rng)?,
    );
    push(
        "generator adv (minimax)".into(),
        check_generator_adv::<T>(cases, GanVariant::Minimax, tol, &mut rng)?,
    );
    push(
        "discriminator loss".into(),
        check_discriminator_loss::<T>(cases, tol, &mut rng)?,
    );
    push(
        "generator stack".into(),
        check_generator_stack::<T>(cases.min(5), tol, &mut rng)?,
    );
    Ok(GradcheckReport { results })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relative_error_basics() {
        assert_eq!(relative_error(&[0.0, 0.0], &[0.0, 0.0]), 0.0);
        assert_eq!(relative_error(&[1.0, 0.0], &[1.0, 0.0]), 0.0);
        assert!((relative_error(&[2.0], &[1.0]) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn numerical_gradient_of_quadratic() {
        let x = Tensor4::<f64>::from_vec([1, 1, 1, 3], vec![1.0, -2.0, 0.5]).unwrap();
        let g = numerical_gradient(&x, 1e-4, |t| t.data().iter().map(|v| v * v / 2.0).sum());
        for (a, b) in g.iter().zip(x.data()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn broken_backward_is_detected() {
        // A deliberately wrong gradient must exceed the tolerance.
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x: Tensor4<f64> = away_from_zero(&mut rng, [1, 2, 3, 3], 0.05);
        let r: Tensor4<f64> = uniform(&mut rng, [1, 2, 3, 3], -1.0, 1.0);
        let wrong = leaky_relu_backward(&x, &r, 0.3).unwrap();
        let numeric = numerical_gradient(&x, 1e-5, |p| project(&leaky_relu(p, 0.2), &r));
        assert!(relative_error(&as_f64(wrong.data()), &numeric) > 1e-3);
    }

    #[test]
    fn quick_suite_passes_in_f64() {
        let report = run_suite::<f64>(2, 11, Tolerance::F64).unwrap();
        assert!(report.passed(), "{}", report.render());
    }
}
