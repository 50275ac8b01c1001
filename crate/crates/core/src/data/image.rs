use crate::error::{PceError, Result};
use crate::tensor::{Scalar, Tensor4};

/// 8-bit RGB image, pixels interleaved row by row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Image {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl Image {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(PceError::shape(format!(
                "image dimensions {width}x{height}"
            )));
        }
        if pixels.len() != width * height * 3 {
            return Err(PceError::shape(format!(
                "{} bytes for a {width}x{height} RGB image",
                pixels.len()
            )));
        }
        Ok(Image {
            width,
            height,
            pixels,
        })
    }

    pub fn filled(width: usize, height: usize, rgb: [u8; 3]) -> Self {
        let pixels = rgb
            .iter()
            .copied()
            .cycle()
            .take(width * height * 3)
            .collect();
        Image {
            width,
            height,
            pixels,
        }
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> [u8; 3],
    ) -> Self {
        let mut pixels = Vec::with_capacity(width * height * 3);
        for y in 0..height {
            for x in 0..width {
                pixels.extend_from_slice(&f(x, y));
            }
        }
        Image {
            width,
            height,
            pixels,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> u8 {
        self.pixels[(y * self.width + x) * 3 + c]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, c: usize, v: u8) {
        self.pixels[(y * self.width + x) * 3 + c] = v;
    }

    pub fn rgb(&self, x: usize, y: usize) -> [u8; 3] {
        let i = (y * self.width + x) * 3;
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    /// `(1, 3, h, w)` tensor scaled to `[0, 1]`.
    pub fn to_tensor<T: Scalar>(&self) -> Tensor4<T> {
        let scale = T::of(1.0 / 255.0);
        Tensor4::from_fn([1, 3, self.height, self.width], |[_, c, y, x]| {
            T::of(self.get(x, y, c) as f64) * scale
        })
    }

    /// Quantises batch item `item` of a `[0, 1]` tensor back to 8 bits.
    pub fn from_tensor<T: Scalar>(t: &Tensor4<T>, item: usize) -> Result<Self> {
        let [n, c, h, w] = t.shape();
        if c != 3 || item >= n {
            return Err(PceError::shape(format!(
                "cannot take RGB item {item} from tensor {:?}",
                t.shape()
            )));
        }
        Ok(Image::from_fn(w, h, |x, y| {
            let mut px = [0u8; 3];
            for (ch, p) in px.iter_mut().enumerate() {
                let v = t.get(item, ch, y, x).as_f64().clamp(0.0, 1.0);
                *p = (v * 255.0).round() as u8;
            }
            px
        }))
    }

    /// Copy of the `size_w x size_h` window whose top-left corner is `(x0, y0)`.
    pub fn crop(&self, x0: usize, y0: usize, size_w: usize, size_h: usize) -> Result<Self> {
        if x0 + size_w > self.width || y0 + size_h > self.height || size_w == 0 || size_h == 0 {
            return Err(PceError::shape(format!(
                "crop {size_w}x{size_h} at ({x0}, {y0}) exceeds {}x{} image",
                self.width, self.height
            )));
        }
        Ok(Image::from_fn(size_w, size_h, |x, y| {
            self.rgb(x0 + x, y0 + y)
        }))
    }

    /// Pastes `other` with its top-left corner at `(x0, y0)`.
    pub fn paste(&mut self, other: &Image, x0: usize, y0: usize) -> Result<()> {
        if x0 + other.width > self.width || y0 + other.height > self.height {
            return Err(PceError::shape(format!(
                "cannot paste {}x{} at ({x0}, {y0}) into {}x{}",
                other.width, other.height, self.width, self.height
            )));
        }
        for y in 0..other.height {
            let src = &other.pixels[y * other.width * 3..(y + 1) * other.width * 3];
            let start = ((y0 + y) * self.width + x0) * 3;
            self.pixels[start..start + src.len()].copy_from_slice(src);
        }
        Ok(())
    }

    /// Places images side by side, top-aligned, on a black background.
    pub fn hstack(images: &[&Image]) -> Result<Self> {
        let width = images.iter().map(|i| i.width).sum();
        let height = images.iter().map(|i| i.height).max().unwrap_or(0);
        let mut out = Image::new(width, height.max(1), vec![0; width * height.max(1) * 3])?;
        let mut x0 = 0;
        for img in images {
            out.paste(img, x0, 0)?;
            x0 += img.width;
        }
        Ok(out)
    }
}

/// Mirrors the image about its vertical axis when `flip` is set.
pub fn hflip(image: &Image, flip: bool) -> Image {
    if !flip {
        return image.clone();
    }
    Image::from_fn(image.width, image.height, |x, y| {
        image.rgb(image.width - 1 - x, y)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp() -> Image {
        Image::from_fn(5, 3, |x, y| [(x * 40) as u8, (y * 60) as u8, (x * y) as u8])
    }

    #[test]
    fn double_flip_is_identity() {
        let img = ramp();
        assert_eq!(hflip(&hflip(&img, true), true), img);
        assert_eq!(hflip(&img, false), img);
    }

    #[test]
    fn flip_swaps_outer_columns() {
        let img = ramp();
        let f = hflip(&img, true);
        for y in 0..3 {
            assert_eq!(f.rgb(0, y), img.rgb(4, y));
            assert_eq!(f.rgb(4, y), img.rgb(0, y));
        }
    }

    #[test]
    fn symmetric_image_is_fixed_point() {
        let img = Image::from_fn(6, 4, |x, y| {
            let d = x.min(5 - x);
            [(d * 30) as u8, y as u8, 7]
        });
        assert_eq!(hflip(&img, true), img);
    }

    #[test]
    fn tensor_roundtrip_is_exact() {
        let img = Image::from_fn(7, 4, |x, y| {
            [(x * 37 + y) as u8, 255 - (x * 11) as u8, (y * 85) as u8]
        });
        let t = img.to_tensor::<f32>();
        assert_eq!(t.shape(), [1, 3, 4, 7]);
        assert_eq!(Image::from_tensor(&t, 0).unwrap(), img);
    }

    #[test]
    fn crop_and_paste() {
        let img = ramp();
        let c = img.crop(1, 1, 3, 2).unwrap();
        assert_eq!(c.rgb(0, 0), img.rgb(1, 1));
        assert!(img.crop(3, 0, 3, 1).is_err());
        let mut canvas = Image::filled(8, 8, [0, 0, 0]);
        canvas.paste(&c, 4, 5).unwrap();
        assert_eq!(canvas.rgb(6, 6), img.rgb(3, 2));
    }
}
