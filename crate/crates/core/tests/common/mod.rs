#![allow(dead_code)]

use pce::tensor::{ConvSpec, Tensor4};

/// Direct definition of zero-padded, strided, dilated cross-correlation, in f64.
pub fn conv_oracle(x: &Tensor4<f32>, w: &Tensor4<f32>, bias: &[f32], spec: &ConvSpec) -> Vec<f64> {
    let [n, c, h, wd] = x.shape();
    let [o, _, k, _] = w.shape();
    let span = spec.dilation * (k - 1) + 1;
    let oh = (h + 2 * spec.padding - span) / spec.stride + 1;
    let ow = (wd + 2 * spec.padding - span) / spec.stride + 1;
    let mut out = Vec::with_capacity(n * o * oh * ow);
    for b in 0..n {
        for oc in 0..o {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = bias[oc] as f64;
                    for ic in 0..c {
                        for ky in 0..k {
                            for kx in 0..k {
                                let iy = (oy * spec.stride + ky * spec.dilation) as i64
                                    - spec.padding as i64;
                                let ix = (ox * spec.stride + kx * spec.dilation) as i64
                                    - spec.padding as i64;
                                if iy < 0 || ix < 0 || iy >= h as i64 || ix >= wd as i64 {
                                    continue;
                                }
                                acc += x.get(b, ic, iy as usize, ix as usize) as f64
                                    * w.get(oc, ic, ky, kx) as f64;
                            }
                        }
                    }
                    out.push(acc);
                }
            }
        }
    }
    out
}

/// `||a - b|| / ||b||` with `b` as the reference.
pub fn relative_l2(a: &[f32], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(&x, &y)| (x as f64 - y).powi(2)).sum();
    let norm: f64 = b.iter().map(|y| y * y).sum();
    diff.sqrt() / norm.sqrt().max(f64::MIN_POSITIVE)
}
