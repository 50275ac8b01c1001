//! RMSE and PSNR on the 8-bit scale.

use crate::error::{PceError, Result};

use super::image::Image;
use super::mask::Mask;

/// Root-mean-square difference over all channels of the pixels selected by
/// `region` (every pixel when `None`).
pub fn rmse(a: &Image, b: &Image, region: Option<&Mask>) -> Result<f64> {
    if (a.width(), a.height()) != (b.width(), b.height()) {
        return Err(PceError::shape(format!(
            "comparing {}x{} with {}x{}",
            a.width(),
            a.height(),
            b.width(),
            b.height()
        )));
    }
    if let Some(m) = region {
        if (m.width(), m.height()) != (a.width(), a.height()) {
            return Err(PceError::shape(format!(
                "{}x{} region for {}x{} images",
                m.width(),
                m.height(),
                a.width(),
                a.height()
            )));
        }
    }
    let mut sum = 0.0;
    let mut count = 0usize;
    for (p, (pa, pb)) in a
        .pixels()
        .chunks_exact(3)
        .zip(b.pixels().chunks_exact(3))
        .enumerate()
    {
        if region.is_some_and(|m| !m.bits()[p]) {
            continue;
        }
        for c in 0..3 {
            let d = pa[c] as f64 - pb[c] as f64;
            sum += d * d;
        }
        count += 3;
    }
    if count == 0 {
        return Err(PceError::config("metric region selects no pixels"));
    }
    Ok((sum / count as f64).sqrt())
}

/// `20 log10(255 / rmse)`; `+inf` for a perfect match.
pub fn psnr(rmse: f64) -> f64 {
    if rmse == 0.0 {
        f64::INFINITY
    } else {
        20.0 * (255.0 / rmse).log10()
    }
}
