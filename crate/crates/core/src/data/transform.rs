//! Resize, crop and the train/eval preprocessing pipelines.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{PceError, Result};

use super::image::{hflip, Image};

/// Bilinear sample of channel `c` at continuous pixel-centre coordinates:
/// `(0, 0)` is the centre of the top-left pixel. Coordinates are clamped
/// to the image.
pub fn sample_bilinear(image: &Image, x: f64, y: f64, c: usize) -> f64 {
    let x = x.clamp(0.0, (image.width() - 1) as f64);
    let y = y.clamp(0.0, (image.height() - 1) as f64);
    let x0 = x.floor() as usize;
    let y0 = y.floor() as usize;
    let x1 = (x0 + 1).min(image.width() - 1);
    let y1 = (y0 + 1).min(image.height() - 1);
    let fx = x - x0 as f64;
    let fy = y - y0 as f64;
    let p = |xx, yy| image.get(xx, yy, c) as f64;
    let top = p(x0, y0) * (1.0 - fx) + p(x1, y0) * fx;
    let bottom = p(x0, y1) * (1.0 - fx) + p(x1, y1) * fx;
    top * (1.0 - fy) + bottom * fy
}

/// Bilinear resize to exactly `width x height` with half-pixel alignment.
pub fn resize_to(image: &Image, width: usize, height: usize) -> Result<Image> {
    if width == 0 || height == 0 {
        return Err(PceError::shape(format!("resize target {width}x{height}")));
    }
    if (width, height) == (image.width(), image.height()) {
        return Ok(image.clone());
    }
    let sx = image.width() as f64 / width as f64;
    let sy = image.height() as f64 / height as f64;
    Ok(Image::from_fn(width, height, |x, y| {
        let u = (x as f64 + 0.5) * sx - 0.5;
        let v = (y as f64 + 0.5) * sy - 0.5;
        let mut px = [0u8; 3];
        for (c, p) in px.iter_mut().enumerate() {
            *p = sample_bilinear(image, u, v, c).round().clamp(0.0, 255.0) as u8;
        }
        px
    }))
}

/// Output dimensions when the shortest side becomes `shortest`, keeping aspect ratio.
pub fn shortest_side_dims(width: usize, height: usize, shortest: usize) -> (usize, usize) {
    if width <= height {
        let h = (height as f64 * shortest as f64 / width as f64).round() as usize;
        (shortest, h.max(shortest))
    } else {
        let w = (width as f64 * shortest as f64 / height as f64).round() as usize;
        (w.max(shortest), shortest)
    }
}

/// Bilinear resize so the shortest side equals `shortest`.
pub fn resize_bilinear(image: &Image, shortest: usize) -> Result<Image> {
    let (w, h) = shortest_side_dims(image.width(), image.height(), shortest);
    resize_to(image, w, h)
}

fn check_crop(image: &Image, size: usize) -> Result<()> {
    if size == 0 || image.width() < size || image.height() < size {
        return Err(PceError::shape(format!(
            "cannot take a {size}x{size} crop from a {}x{} image",
            image.width(),
            image.height()
        )));
    }
    Ok(())
}

/// Square crop at a position drawn uniformly from `rng`.
pub fn random_crop_with<R: Rng>(image: &Image, size: usize, rng: &mut R) -> Result<Image> {
    check_crop(image, size)?;
    let x0 = rng.gen_range(0..=image.width() - size);
    let y0 = rng.gen_range(0..=image.height() - size);
    image.crop(x0, y0, size, size)
}

pub fn random_crop(image: &Image, size: usize, seed: u64) -> Result<Image> {
    random_crop_with(image, size, &mut ChaCha8Rng::seed_from_u64(seed))
}

pub fn center_crop(image: &Image, size: usize) -> Result<Image> {
    check_crop(image, size)?;
    image.crop(
        (image.width() - size) / 2,
        (image.height() - size) / 2,
        size,
        size,
    )
}

/// Training view: shortest side to `size`, random `size x size` crop, coin-flip mirror.
pub fn prepare_train<R: Rng>(image: &Image, size: usize, rng: &mut R) -> Result<Image> {
    let resized = resize_bilinear(image, size)?;
    let crop = random_crop_with(&resized, size, rng)?;
    Ok(hflip(&crop, rng.gen::<bool>()))
}

/// Evaluation view: shortest side to `size`, centre crop.
pub fn prepare_eval(image: &Image, size: usize) -> Result<Image> {
    center_crop(&resize_bilinear(image, size)?, size)
}
