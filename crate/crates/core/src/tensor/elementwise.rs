//! Binary elementwise ops with optional channel broadcasting of the right operand.

use crate::error::{PceError, Result};

use super::{Scalar, Tensor4};

fn broadcast<T: Scalar>(
    a: &Tensor4<T>,
    b: &Tensor4<T>,
    op: &str,
    f: impl Fn(T, T) -> T,
) -> Result<Tensor4<T>> {
    let [n, c, h, w] = a.shape();
    let [bn, bc, bh, bw] = b.shape();
    if bn != n || bh != h || bw != w || !(bc == c || bc == 1) {
        return Err(PceError::shape(format!(
            "{op}: {:?} is not broadcastable onto {:?}",
            b.shape(),
            a.shape()
        )));
    }
    if bc == c {
        let data = a
            .data()
            .iter()
            .zip(b.data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        return Tensor4::from_vec(a.shape(), data);
    }
    let plane = h * w;
    let mut out = a.clone();
    for item in 0..n {
        let bm = b.item(item);
        let dst = out.item_mut(item);
        for ch in 0..c {
            for (v, &m) in dst[ch * plane..(ch + 1) * plane].iter_mut().zip(bm) {
                *v = f(*v, m);
            }
        }
    }
    Ok(out)
}

pub fn mul<T: Scalar>(a: &Tensor4<T>, b: &Tensor4<T>) -> Result<Tensor4<T>> {
    broadcast(a, b, "mul", |x, y| x * y)
}

pub fn add<T: Scalar>(a: &Tensor4<T>, b: &Tensor4<T>) -> Result<Tensor4<T>> {
    broadcast(a, b, "add", |x, y| x + y)
}

pub fn sub<T: Scalar>(a: &Tensor4<T>, b: &Tensor4<T>) -> Result<Tensor4<T>> {
    broadcast(a, b, "sub", |x, y| x - y)
}

/// `1 - a`, the complement of a binary mask.
pub fn one_minus<T: Scalar>(a: &Tensor4<T>) -> Tensor4<T> {
    a.map(|v| T::one() - v)
}
