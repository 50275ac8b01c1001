//! Replacing masked pixels before they reach the generator.

use std::fmt;
use std::str::FromStr;

use crate::error::{PceError, Result};
use crate::tensor::{Scalar, Tensor4};

use super::image::Image;
use super::mask::Mask;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Fill {
    /// Per-channel mean of the training set.
    #[default]
    Mean,
    Zero,
}

impl FromStr for Fill {
    type Err = PceError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean" => Ok(Fill::Mean),
            "zero" => Ok(Fill::Zero),
            _ => Err(PceError::config(format!(
                "unknown fill {s:?} (expected mean or zero)"
            ))),
        }
    }
}

impl fmt::Display for Fill {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Fill::Mean => "mean",
            Fill::Zero => "zero",
        })
    }
}

impl Fill {
    /// Values written into masked pixels, on the `[0, 1]` scale.
    pub fn values(self, dataset_mean: [f64; 3]) -> [f64; 3] {
        match self {
            Fill::Mean => dataset_mean,
            Fill::Zero => [0.0; 3],
        }
    }
}

/// Per-channel mean of a set of images on the `[0, 1]` scale.
pub fn channel_mean<'a>(images: impl IntoIterator<Item = &'a Image>) -> [f64; 3] {
    let mut sum = [0u64; 3];
    let mut count = 0u64;
    for img in images {
        for px in img.pixels().chunks_exact(3) {
            for c in 0..3 {
                sum[c] += px[c] as u64;
            }
        }
        count += (img.width() * img.height()) as u64;
    }
    if count == 0 {
        return [0.5; 3];
    }
    sum.map(|s| s as f64 / count as f64 / 255.0)
}

/// Overwrites masked pixels of a `(n, 3, h, w)` batch with `values`.
/// `mask` is `(n, 1, h, w)`; pixels where it is zero are left bit-identical.
pub fn corrupt_tensor<T: Scalar>(
    x: &Tensor4<T>,
    mask: &Tensor4<T>,
    values: [f64; 3],
) -> Result<Tensor4<T>> {
    let [n, c, h, w] = x.shape();
    if c != 3 || mask.shape() != [n, 1, h, w] {
        return Err(PceError::shape(format!(
            "corrupting {:?} with mask {:?}",
            x.shape(),
            mask.shape()
        )));
    }
    let plane = h * w;
    let mut out = x.clone();
    for b in 0..n {
        let m = mask.item(b);
        let dst = out.item_mut(b);
        for (ch, &v) in values.iter().enumerate() {
            let v = T::of(v);
            for p in 0..plane {
                if m[p] != T::zero() {
                    dst[ch * plane + p] = v;
                }
            }
        }
    }
    Ok(out)
}

/// Network input for one image: `(1, 3, h, w)` on `[0, 1]` with masked pixels filled.
pub fn corrupt<T: Scalar>(
    x: &Image,
    mask: &Mask,
    fill: Fill,
    dataset_mean: [f64; 3],
) -> Result<Tensor4<T>> {
    if (x.width(), x.height()) != (mask.width(), mask.height()) {
        return Err(PceError::shape(format!(
            "image {}x{} with mask {}x{}",
            x.width(),
            x.height(),
            mask.width(),
            mask.height()
        )));
    }
    corrupt_tensor(&x.to_tensor(), &mask.to_tensor(), fill.values(dataset_mean))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn img() -> Image {
        Image::from_fn(8, 8, |x, y| [(x * 30) as u8, (y * 30) as u8, 200])
    }

    #[test]
    fn empty_mask_is_identity() {
        let x = img();
        let t = corrupt::<f32>(&x, &Mask::zeros(8, 8), Fill::Mean, [0.3; 3]).unwrap();
        assert_eq!(t, x.to_tensor());
    }

    #[test]
    fn full_mask_zero_fill() {
        let t = corrupt::<f32>(&img(), &Mask::ones(8, 8), Fill::Zero, [0.3; 3]).unwrap();
        assert!(t.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn mean_fill_matches_dataset_mean() {
        let images = [img(), Image::filled(8, 8, [10, 20, 30])];
        let mean = channel_mean(&images);
        let mut m = Mask::zeros(8, 8);
        m.fill_rect(2, 2, 4, 4, true);
        let t = corrupt::<f64>(&images[0], &m, Fill::Mean, mean).unwrap();
        for c in 0..3 {
            let mut s = 0.0;
            for y in 2..6 {
                for x in 2..6 {
                    s += t.get(0, c, y, x);
                }
            }
            assert!((s / 16.0 - mean[c]).abs() < 1e-6);
        }
        assert!("median".parse::<Fill>().is_err());
    }
}
