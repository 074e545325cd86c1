//! 8-bit luminance images and binary PGM ingestion.

use crate::error::{Error, Result};

/// Smallest width and height accepted for hashing.
pub const MIN_HASH_DIM: usize = 64;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LuminanceImage {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl LuminanceImage {
    /// Wraps a row-major luminance buffer.
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
        let expected = width * height;
        if pixels.len() != expected {
            return Err(Error::PixelCount { expected, actual: pixels.len() });
        }
        Ok(Self { width, height, pixels })
    }

    /// Converts interleaved 8-bit RGB to luminance with BT.601 weights.
    pub fn from_rgb8(width: usize, height: usize, rgb: &[u8]) -> Result<Self> {
        let expected = width * height * 3;
        if rgb.len() != expected {
            return Err(Error::PixelCount { expected, actual: rgb.len() });
        }
        let pixels = rgb
            .chunks_exact(3)
            .map(|p| {
                let y = 0.299 * f64::from(p[0]) + 0.587 * f64::from(p[1]) + 0.114 * f64::from(p[2]);
                y.round().clamp(0.0, 255.0) as u8
            })
            .collect();
        Ok(Self { width, height, pixels })
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> u8) -> Self {
        let mut pixels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y));
            }
        }
        Self { width, height, pixels }
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

    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * self.width + x]
    }

    pub(crate) fn check_hashable(&self) -> Result<()> {
        if self.width < MIN_HASH_DIM || self.height < MIN_HASH_DIM {
            return Err(Error::ImageTooSmall { width: self.width, height: self.height });
        }
        Ok(())
    }

    /// Parses a binary (P5) PGM. 16-bit samples are scaled down to 8 bits.
    pub fn from_pgm(data: &[u8]) -> Result<Self> {
        let mut pos = 0;
        let magic = next_token(data, &mut pos)?;
        if magic != b"P5" {
            return Err(Error::MalformedPgm("missing P5 magic".into()));
        }
        let width = parse_usize(next_token(data, &mut pos)?)?;
        let height = parse_usize(next_token(data, &mut pos)?)?;
        let maxval = parse_usize(next_token(data, &mut pos)?)?;
        if maxval == 0 || maxval > 65535 {
            return Err(Error::MalformedPgm(format!("maxval {maxval} out of range")));
        }
        // exactly one whitespace byte separates the header from the raster
        pos += 1;
        let count = width * height;
        let raster = data.get(pos..).unwrap_or_default();
        let pixels: Vec<u8> = if maxval < 256 {
            if raster.len() < count {
                return Err(Error::MalformedPgm("truncated raster".into()));
            }
            raster[..count]
                .iter()
                .map(|&v| ((u32::from(v) * 255 + maxval as u32 / 2) / maxval as u32).min(255) as u8)
                .collect()
        } else {
            if raster.len() < count * 2 {
                return Err(Error::MalformedPgm("truncated raster".into()));
            }
            raster[..count * 2]
                .chunks_exact(2)
                .map(|c| {
                    let v = u32::from(u16::from_be_bytes([c[0], c[1]]));
                    ((v * 255 + maxval as u32 / 2) / maxval as u32).min(255) as u8
                })
                .collect()
        };
        Self::new(width, height, pixels)
    }

    pub fn to_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.pixels);
        out
    }
}

fn next_token<'a>(data: &'a [u8], pos: &mut usize) -> Result<&'a [u8]> {
    loop {
        while *pos < data.len() && data[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < data.len() && data[*pos] == b'#' {
            while *pos < data.len() && data[*pos] != b'\n' {
                *pos += 1;
            }
            continue;
        }
        break;
    }
    let start = *pos;
    while *pos < data.len() && !data[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    if start == *pos {
        return Err(Error::MalformedPgm("unexpected end of header".into()));
    }
    Ok(&data[start..*pos])
}

fn parse_usize(tok: &[u8]) -> Result<usize> {
    std::str::from_utf8(tok)
        .ok()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::MalformedPgm(format!("bad header field {:?}", String::from_utf8_lossy(tok))))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pgm_roundtrip() {
        let img = LuminanceImage::from_fn(70, 65, |x, y| ((x * 3 + y * 7) % 256) as u8);
        let parsed = LuminanceImage::from_pgm(&img.to_pgm()).unwrap();
        assert_eq!(parsed, img);
    }

    #[test]
    fn pgm_with_comment_and_16_bit() {
        let mut data = b"P5\n# a comment\n2 1\n65535\n".to_vec();
        data.extend_from_slice(&[0xff, 0xff, 0x00, 0x00]);
        let img = LuminanceImage::from_pgm(&data).unwrap();
        assert_eq!(img.pixels(), &[255, 0]);
    }

    #[test]
    fn pgm_rejects_garbage() {
        assert!(LuminanceImage::from_pgm(b"P6\n1 1\n255\n\0\0\0").is_err());
        assert!(LuminanceImage::from_pgm(b"P5\n4 4\n255\n\0").is_err());
        assert!(LuminanceImage::from_pgm(b"P5\n").is_err());
    }

    #[test]
    fn buffer_length_checked() {
        assert!(matches!(
            LuminanceImage::new(64, 64, vec![0; 10]),
            Err(Error::PixelCount { expected: 4096, actual: 10 })
        ));
    }

    #[test]
    fn rgb_uses_bt601() {
        let img = LuminanceImage::from_rgb8(1, 1, &[255, 0, 0]).unwrap();
        assert_eq!(img.pixels(), &[76]);
        let img = LuminanceImage::from_rgb8(1, 1, &[200, 200, 200]).unwrap();
        assert_eq!(img.pixels(), &[200]);
    }
}
