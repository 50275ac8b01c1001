//! PPM (P6/P5, maxval 255) and 8-bit PNG reading and writing.

use std::fs;
use std::io::Cursor;
use std::path::Path;

use crate::error::{PceError, Result};

use super::image::Image;

const PNG_MAGIC: &[u8] = b"\x89PNG\r\n\x1a\n";

fn format_err(offset: usize, reason: impl Into<String>) -> PceError {
    PceError::Format {
        offset,
        reason: reason.into(),
    }
}

struct HeaderCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl HeaderCursor<'_> {
    fn skip_space_and_comments(&mut self) {
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b' ' | b'\t' | b'\n' | b'\r' | 0x0b | 0x0c => self.pos += 1,
                b'#' => {
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                _ => break,
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<usize> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(format_err(start, format!("expected {what}")));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| format_err(start, format!("{what} out of range")))
    }
}

/// Decodes a binary PPM (P6) or PGM (P5) byte stream; grey is replicated to RGB.
pub fn decode_ppm(bytes: &[u8]) -> Result<Image> {
    if bytes.len() < 2 || bytes[0] != b'P' || !(bytes[1] == b'6' || bytes[1] == b'5') {
        return Err(format_err(0, "missing P6/P5 magic number"));
    }
    let channels = if bytes[1] == b'6' { 3 } else { 1 };
    let mut cur = HeaderCursor { bytes, pos: 2 };
    let width = cur.number("width")?;
    let height = cur.number("height")?;
    let maxval_at = cur.pos;
    let maxval = cur.number("maxval")?;
    if maxval != 255 {
        return Err(format_err(
            maxval_at,
            format!("maxval {maxval} unsupported (only 255)"),
        ));
    }
    if width == 0 || height == 0 {
        return Err(format_err(2, format!("zero-sized image {width}x{height}")));
    }
    match bytes.get(cur.pos) {
        Some(b) if b.is_ascii_whitespace() => cur.pos += 1,
        _ => return Err(format_err(cur.pos, "expected whitespace after maxval")),
    }
    let expected = width
        .checked_mul(height)
        .and_then(|v| v.checked_mul(channels))
        .ok_or_else(|| format_err(2, "image dimensions overflow"))?;
    let payload = &bytes[cur.pos..];
    if payload.len() < expected {
        return Err(format_err(
            bytes.len(),
            format!("truncated payload: {} of {expected} bytes", payload.len()),
        ));
    }
    let payload = &payload[..expected];
    let pixels = if channels == 3 {
        payload.to_vec()
    } else {
        payload.iter().flat_map(|&g| [g, g, g]).collect()
    };
    Image::new(width, height, pixels)
}

pub fn encode_ppm(image: &Image) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", image.width(), image.height()).into_bytes();
    out.extend_from_slice(image.pixels());
    out
}

pub fn decode_png(bytes: &[u8]) -> Result<Image> {
    let png_err = |e: png::DecodingError| format_err(0, format!("png: {e}"));
    let mut decoder = png::Decoder::new(Cursor::new(bytes));
    decoder.set_transformations(png::Transformations::EXPAND | png::Transformations::STRIP_16);
    let mut reader = decoder.read_info().map_err(png_err)?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| format_err(0, "png: image too large"))?;
    let mut buf = vec![0; size];
    let info = reader.next_frame(&mut buf).map_err(png_err)?;
    let (w, h) = (info.width as usize, info.height as usize);
    let channels = match info.color_type {
        png::ColorType::Grayscale => 1,
        png::ColorType::GrayscaleAlpha => 2,
        png::ColorType::Rgb => 3,
        png::ColorType::Rgba => 4,
        png::ColorType::Indexed => {
            return Err(PceError::Unsupported("indexed PNG after expansion".into()))
        }
    };
    let mut pixels = Vec::with_capacity(w * h * 3);
    for row in buf.chunks(info.line_size).take(h) {
        for px in row[..w * channels].chunks(channels) {
            match channels {
                1 | 2 => pixels.extend_from_slice(&[px[0], px[0], px[0]]),
                _ => pixels.extend_from_slice(&px[..3]),
            }
        }
    }
    Image::new(w, h, pixels)
}

pub fn encode_png(image: &Image) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, image.width() as u32, image.height() as u32);
        enc.set_color(png::ColorType::Rgb);
        enc.set_depth(png::BitDepth::Eight);
        let mut writer = enc
            .write_header()
            .map_err(|e| PceError::Unsupported(format!("png encode: {e}")))?;
        writer
            .write_image_data(image.pixels())
            .map_err(|e| PceError::Unsupported(format!("png encode: {e}")))?;
        writer
            .finish()
            .map_err(|e| PceError::Unsupported(format!("png encode: {e}")))?;
    }
    Ok(out)
}

/// Decodes PPM/PGM or PNG, chosen by magic bytes.
pub fn decode_image(bytes: &[u8]) -> Result<Image> {
    if bytes.starts_with(PNG_MAGIC) {
        decode_png(bytes)
    } else if bytes.first() == Some(&b'P') {
        decode_ppm(bytes)
    } else {
        Err(format_err(0, "not a PPM or PNG file"))
    }
}

pub fn load_image(path: impl AsRef<Path>) -> Result<Image> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| PceError::io(path, e))?;
    decode_image(&bytes).map_err(|e| match e {
        PceError::Format { offset, reason } => PceError::Format {
            offset,
            reason: format!("{}: {reason}", path.display()),
        },
        other => other,
    })
}

/// Writes `.png`, or PPM for `.ppm`/`.pnm`. The file appears atomically:
/// bytes go to a sibling temporary file that is renamed into place.
pub fn save_image(image: &Image, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase);
    let bytes = match ext.as_deref() {
        Some("png") => encode_png(image)?,
        Some("ppm") | Some("pnm") => encode_ppm(image),
        _ => {
            return Err(PceError::Unsupported(format!(
                "{}: unknown image extension (use .ppm or .png)",
                path.display()
            )))
        }
    };
    write_atomic(path, &bytes)
}

/// Writes via a sibling temporary file renamed into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let file_name = path
        .file_name()
        .ok_or_else(|| PceError::config(format!("{} is not a file path", path.display())))?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(file_name);
    tmp_name.push(format!(".tmp{}", std::process::id()));
    let tmp = path.with_file_name(tmp_name);
    if let Err(e) = fs::write(&tmp, bytes) {
        let _ = fs::remove_file(&tmp);
        return Err(PceError::io(&tmp, e));
    }
    fs::rename(&tmp, path).map_err(|e| {
        let _ = fs::remove_file(&tmp);
        PceError::io(path, e)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decodes_known_two_by_two() {
        let mut bytes = b"P6\n# comment\n2 2\n255\n".to_vec();
        bytes.extend_from_slice(&[255, 0, 0, 0, 255, 0, 0, 0, 255, 10, 20, 30]);
        let img = decode_ppm(&bytes).unwrap();
        assert_eq!((img.width(), img.height()), (2, 2));
        assert_eq!(img.rgb(0, 0), [255, 0, 0]);
        assert_eq!(img.rgb(1, 0), [0, 255, 0]);
        assert_eq!(img.rgb(0, 1), [0, 0, 255]);
        assert_eq!(img.rgb(1, 1), [10, 20, 30]);
    }

    #[test]
    fn ppm_roundtrip_is_byte_identical() {
        let mut bytes = b"P6\n3 2\n255\n".to_vec();
        bytes.extend((0..18).map(|i| (i * 14) as u8));
        assert_eq!(encode_ppm(&decode_ppm(&bytes).unwrap()), bytes);
    }

    #[test]
    fn greyscale_is_replicated() {
        let mut bytes = b"P5 2 1 255 ".to_vec();
        bytes.extend_from_slice(&[7, 200]);
        let img = decode_ppm(&bytes).unwrap();
        assert_eq!(img.rgb(1, 0), [200, 200, 200]);
    }

    #[test]
    fn truncated_payload_reports_offset() {
        let mut bytes = b"P6\n2 2\n255\n".to_vec();
        bytes.extend_from_slice(&[1, 2, 3]);
        match decode_ppm(&bytes).unwrap_err() {
            PceError::Format { offset, reason } => {
                assert_eq!(offset, bytes.len());
                assert!(reason.contains("3 of 12"), "{reason}");
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn bad_headers_rejected() {
        assert!(decode_ppm(b"P3\n1 1\n255\n").is_err());
        assert!(decode_ppm(b"P6\n1 1\n65535\n\0\0\0\0\0\0").is_err());
        assert!(decode_ppm(b"P6\nx 1\n255\n").is_err());
        assert!(decode_image(b"hello world").is_err());
    }

    #[test]
    fn png_roundtrip() {
        let img = Image::from_fn(5, 3, |x, y| [(x * 50) as u8, (y * 80) as u8, 9]);
        let back = decode_png(&encode_png(&img).unwrap()).unwrap();
        assert_eq!(back, img);
    }
}
