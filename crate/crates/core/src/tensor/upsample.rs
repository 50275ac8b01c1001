use crate::error::{PceError, Result};

use super::{Scalar, Tensor4};

/// Nearest-neighbour upsampling by two: each pixel becomes a 2x2 block.
pub fn upsample_nearest_x2<T: Scalar>(input: &Tensor4<T>) -> Tensor4<T> {
    let [n, c, h, w] = input.shape();
    let mut out = Tensor4::zeros([n, c, 2 * h, 2 * w]);
    let src = input.data();
    let dst = out.data_mut();
    let ow = 2 * w;
    for plane in 0..n * c {
        let s = &src[plane * h * w..(plane + 1) * h * w];
        let d = &mut dst[plane * 4 * h * w..(plane + 1) * 4 * h * w];
        for y in 0..h {
            for x in 0..w {
                let v = s[y * w + x];
                let top = 2 * y * ow + 2 * x;
                d[top] = v;
                d[top + 1] = v;
                d[top + ow] = v;
                d[top + ow + 1] = v;
            }
        }
    }
    out
}

/// Sums each 2x2 block of the output gradient into one input-gradient pixel.
pub fn upsample_nearest_x2_backward<T: Scalar>(grad_output: &Tensor4<T>) -> Result<Tensor4<T>> {
    let [n, c, oh, ow] = grad_output.shape();
    if oh % 2 != 0 || ow % 2 != 0 {
        return Err(PceError::shape(format!(
            "upsample gradient {:?} has odd spatial dims",
            grad_output.shape()
        )));
    }
    let (h, w) = (oh / 2, ow / 2);
    let mut out = Tensor4::zeros([n, c, h, w]);
    let src = grad_output.data();
    let dst = out.data_mut();
    for plane in 0..n * c {
        let s = &src[plane * oh * ow..(plane + 1) * oh * ow];
        let d = &mut dst[plane * h * w..(plane + 1) * h * w];
        for y in 0..h {
            for x in 0..w {
                let top = 2 * y * ow + 2 * x;
                d[y * w + x] = s[top] + s[top + 1] + s[top + ow] + s[top + ow + 1];
            }
        }
    }
    Ok(out)
}
