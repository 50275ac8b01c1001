//! Binary corruption masks: 1 marks a missing pixel.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{PceError, Result};
use crate::tensor::{Scalar, Tensor4};

use super::image::Image;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Task {
    Center,
    Random,
    Extrapolate,
}

impl FromStr for Task {
    type Err = PceError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "center" | "centre" => Ok(Task::Center),
            "random" => Ok(Task::Random),
            "extrapolate" => Ok(Task::Extrapolate),
            _ => Err(PceError::config(format!(
                "unknown task {s:?} (expected center, random or extrapolate)"
            ))),
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Task::Center => "center",
            Task::Random => "random",
            Task::Extrapolate => "extrapolate",
        })
    }
}

/// Square-image mask geometry.
///
/// For inpainting, `region` is the removed square and `overlap` shrinks the
/// corrupted area by that many pixels on every side. For extrapolation,
/// `region` is the provided central square and everything else is missing.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MaskSpec {
    pub task: Task,
    pub image_size: usize,
    pub region: usize,
    pub overlap: usize,
}

impl MaskSpec {
    pub fn validate(&self) -> Result<()> {
        let MaskSpec {
            task,
            image_size,
            region,
            overlap,
        } = *self;
        if image_size == 0 || region == 0 {
            return Err(PceError::config("image and region sizes must be >= 1"));
        }
        match task {
            Task::Center | Task::Random => {
                if region > image_size {
                    return Err(PceError::config(format!(
                        "region {region} larger than image {image_size}"
                    )));
                }
                if 2 * overlap >= region {
                    return Err(PceError::config(format!(
                        "overlap {overlap} leaves nothing of region {region}"
                    )));
                }
            }
            Task::Extrapolate => {
                if region >= image_size {
                    return Err(PceError::config(format!(
                        "extrapolation region {region} must be smaller than image {image_size}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Side of the square whose pixels are corrupted (inpainting) or kept (extrapolation).
    pub fn hole_side(&self) -> usize {
        match self.task {
            Task::Center | Task::Random => self.region - 2 * self.overlap,
            Task::Extrapolate => self.region,
        }
    }

    /// Closed-form popcount of the mask.
    pub fn masked_area(&self) -> usize {
        let s = self.hole_side() * self.hole_side();
        match self.task {
            Task::Center | Task::Random => s,
            Task::Extrapolate => self.image_size * self.image_size - s,
        }
    }

    pub fn masked_fraction(&self) -> f64 {
        self.masked_area() as f64 / (self.image_size * self.image_size) as f64
    }
}

/// Single-channel binary mask, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl Mask {
    pub fn zeros(width: usize, height: usize) -> Self {
        Mask {
            width,
            height,
            bits: vec![false; width * height],
        }
    }

    pub fn ones(width: usize, height: usize) -> Self {
        Mask {
            width,
            height,
            bits: vec![true; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.bits[y * self.width + x] = v;
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn popcount(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn fill_rect(&mut self, x0: usize, y0: usize, w: usize, h: usize, v: bool) {
        for y in y0..(y0 + h).min(self.height) {
            for x in x0..(x0 + w).min(self.width) {
                self.set(x, y, v);
            }
        }
    }

    /// Pixels brighter than mid-grey in any channel are missing.
    pub fn from_image(image: &Image) -> Self {
        let mut m = Mask::zeros(image.width(), image.height());
        for y in 0..image.height() {
            for x in 0..image.width() {
                m.set(x, y, image.rgb(x, y).iter().any(|&v| v > 127));
            }
        }
        m
    }

    pub fn to_image(&self) -> Image {
        Image::from_fn(self.width, self.height, |x, y| {
            if self.get(x, y) {
                [255; 3]
            } else {
                [0; 3]
            }
        })
    }

    /// `(1, 1, h, w)` tensor of zeros and ones.
    pub fn to_tensor<T: Scalar>(&self) -> Tensor4<T> {
        let data = self
            .bits
            .iter()
            .map(|&b| if b { T::one() } else { T::zero() })
            .collect();
        Tensor4::from_vec([1, 1, self.height, self.width], data).expect("mask dimensions")
    }
}

/// Builds the mask for `spec`; only the random task consumes `rng`.
pub fn make_mask_with<R: Rng>(spec: &MaskSpec, rng: &mut R) -> Result<Mask> {
    spec.validate()?;
    let size = spec.image_size;
    let side = spec.hole_side();
    let mask = match spec.task {
        Task::Center => {
            let mut m = Mask::zeros(size, size);
            let o = (size - spec.region) / 2 + spec.overlap;
            m.fill_rect(o, o, side, side, true);
            m
        }
        Task::Random => {
            let mut m = Mask::zeros(size, size);
            let x0 = rng.gen_range(0..=size - spec.region) + spec.overlap;
            let y0 = rng.gen_range(0..=size - spec.region) + spec.overlap;
            m.fill_rect(x0, y0, side, side, true);
            m
        }
        Task::Extrapolate => {
            let mut m = Mask::ones(size, size);
            let o = (size - side) / 2;
            m.fill_rect(o, o, side, side, false);
            m
        }
    };
    Ok(mask)
}

pub fn make_mask(spec: &MaskSpec, seed: u64) -> Result<Mask> {
    make_mask_with(spec, &mut ChaCha8Rng::seed_from_u64(seed))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(task: Task, image_size: usize, region: usize, overlap: usize) -> MaskSpec {
        MaskSpec {
            task,
            image_size,
            region,
            overlap,
        }
    }

    #[test]
    fn center_with_overlap() {
        let m = make_mask(&spec(Task::Center, 256, 128, 4), 0).unwrap();
        assert_eq!(m.popcount(), 14400);
        assert!(m.get(68, 68) && m.get(187, 187));
        assert!(!m.get(67, 68) && !m.get(188, 187));
    }

    #[test]
    fn center_quarter() {
        let s = spec(Task::Center, 256, 128, 0);
        assert_eq!(make_mask(&s, 0).unwrap().popcount() * 4, 256 * 256);
        assert_eq!(s.masked_fraction(), 0.25);
    }

    #[test]
    fn extrapolate_keeps_nine_sixteenths() {
        let s = spec(Task::Extrapolate, 256, 192, 0);
        let m = make_mask(&s, 0).unwrap();
        assert_eq!(m.popcount(), 256 * 256 - 192 * 192);
        assert_eq!((256 * 256 - m.popcount()) * 16, 256 * 256 * 9);
        assert_eq!(s.masked_fraction(), 7.0 / 16.0);
        assert!(!m.get(32, 32) && m.get(31, 32) && !m.get(223, 223) && m.get(224, 223));
    }

    #[test]
    fn random_respects_border() {
        let s = spec(Task::Random, 64, 32, 4);
        for seed in 0..200 {
            let m = make_mask(&s, seed).unwrap();
            assert_eq!(m.popcount(), s.masked_area());
            for y in 0..64 {
                for x in 0..64 {
                    if m.get(x, y) {
                        assert!((4..60).contains(&x) && (4..60).contains(&y));
                    }
                }
            }
        }
    }

    #[test]
    fn geometry_violations() {
        assert!(make_mask(&spec(Task::Center, 64, 80, 0), 0).is_err());
        assert!(make_mask(&spec(Task::Center, 64, 8, 4), 0).is_err());
        assert!(make_mask(&spec(Task::Extrapolate, 64, 64, 0), 0).is_err());
        assert!("middle".parse::<Task>().is_err());
    }
}
