//! Procedural image corpus: smooth two-colour gradients overlaid with a few
//! flat discs and rectangles. Every image is a pure function of `(seed, index)`.

use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{PceError, Result};

use super::codec::{save_image, write_atomic};
use super::image::Image;
use super::manifest::{render_manifest, Split};

enum Shape {
    Disc { cx: f64, cy: f64, r: f64 },
    Rect { x0: f64, y0: f64, x1: f64, y1: f64 },
}

impl Shape {
    fn contains(&self, x: f64, y: f64) -> bool {
        match *self {
            Shape::Disc { cx, cy, r } => (x - cx).powi(2) + (y - cy).powi(2) <= r * r,
            Shape::Rect { x0, y0, x1, y1 } => x >= x0 && x <= x1 && y >= y0 && y <= y1,
        }
    }
}

fn colour<R: Rng>(rng: &mut R) -> [f64; 3] {
    [rng.gen(), rng.gen(), rng.gen()].map(|v: f64| 20.0 + 215.0 * v)
}

pub fn synth_image(seed: u64, index: u64, size: usize) -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    let a = colour(&mut rng);
    let b = colour(&mut rng);
    let angle = rng.gen_range(0.0..std::f64::consts::TAU);
    let (dx, dy) = (angle.cos(), angle.sin());
    let s = size as f64;
    let shapes: Vec<(Shape, [f64; 3])> = (0..rng.gen_range(1..=3))
        .map(|_| {
            let shape = if rng.gen::<bool>() {
                Shape::Disc {
                    cx: rng.gen_range(0.0..s),
                    cy: rng.gen_range(0.0..s),
                    r: rng.gen_range(0.1 * s..0.3 * s),
                }
            } else {
                let x0 = rng.gen_range(0.0..0.8 * s);
                let y0 = rng.gen_range(0.0..0.8 * s);
                Shape::Rect {
                    x0,
                    y0,
                    x1: x0 + rng.gen_range(0.15 * s..0.5 * s),
                    y1: y0 + rng.gen_range(0.15 * s..0.5 * s),
                }
            };
            (shape, colour(&mut rng))
        })
        .collect();
    Image::from_fn(size, size, |x, y| {
        let (u, v) = (x as f64 + 0.5, y as f64 + 0.5);
        let t = (((u / s - 0.5) * dx + (v / s - 0.5) * dy) + 0.75) / 1.5;
        let mut px = [0.0; 3];
        for c in 0..3 {
            px[c] = a[c] * (1.0 - t) + b[c] * t;
        }
        for (shape, col) in &shapes {
            if shape.contains(u, v) {
                px = *col;
            }
        }
        px.map(|p| p.round().clamp(0.0, 255.0) as u8)
    })
}

/// Writes `count` PNG images plus `manifest.txt` into `dir`. The last
/// `holdout` images are tagged `test`. Returns the manifest path.
pub fn write_corpus(
    dir: &Path,
    count: usize,
    holdout: usize,
    size: usize,
    seed: u64,
) -> Result<PathBuf> {
    if holdout > count {
        return Err(PceError::config(format!(
            "holdout {holdout} exceeds corpus size {count}"
        )));
    }
    fs::create_dir_all(dir).map_err(|e| PceError::io(dir, e))?;
    let mut names = Vec::with_capacity(count);
    for i in 0..count {
        let name = format!("img{i:05}.png");
        save_image(&synth_image(seed, i as u64, size), dir.join(&name))?;
        names.push(name);
    }
    let text = render_manifest(names.iter().enumerate().map(|(i, n)| {
        let split = if i >= count - holdout {
            Split::Test
        } else {
            Split::Train
        };
        (n.as_str(), split)
    }));
    let manifest = dir.join("manifest.txt");
    write_atomic(&manifest, text.as_bytes())?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_varied() {
        assert_eq!(synth_image(3, 7, 32), synth_image(3, 7, 32));
        assert_ne!(synth_image(3, 7, 32), synth_image(3, 8, 32));
        assert_ne!(synth_image(3, 7, 32), synth_image(4, 7, 32));
    }
}
