use rand::distributions::Open01;
use rand::Rng;

use crate::error::{PceError, Result};
use crate::tensor::{Scalar, Tensor4};

/// Glorot uniform bound `sqrt(6 / (fan_in + fan_out))` for an `(out, in, k, k)` bank.
pub fn xavier_bound(shape: [usize; 4]) -> f64 {
    let [out, inp, kh, kw] = shape;
    let fan_in = inp * kh * kw;
    let fan_out = out * kh * kw;
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

/// Samples a filter bank uniformly from the open interval `(-bound, bound)`.
pub fn xavier_init<T: Scalar, R: Rng + ?Sized>(shape: [usize; 4], rng: &mut R) -> Tensor4<T> {
    let bound = xavier_bound(shape);
    let limit = T::of(bound);
    Tensor4::from_fn(shape, |_| loop {
        let u: f64 = rng.sample(Open01);
        let v = T::of((2.0 * u - 1.0) * bound);
        if v.abs() < limit {
            break v;
        }
    })
}

/// Filter bank whose convolution is the identity map at any dilation:
/// a unit centre tap wherever output channel equals input channel.
pub fn identity_init<T: Scalar>(shape: [usize; 4]) -> Result<Tensor4<T>> {
    let [out, inp, kh, kw] = shape;
    if out != inp {
        return Err(PceError::config(format!(
            "identity initialisation needs equal channel counts, got {out} out / {inp} in"
        )));
    }
    if kh % 2 == 0 || kw % 2 == 0 {
        return Err(PceError::config(format!(
            "identity initialisation needs an odd kernel, got {kh}x{kw}"
        )));
    }
    Ok(Tensor4::from_fn(shape, |[o, i, y, x]| {
        if o == i && y == kh / 2 && x == kw / 2 {
            T::one()
        } else {
            T::zero()
        }
    }))
}
