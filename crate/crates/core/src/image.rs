//! RGB images with `f64` channels and binary PPM (P6) persistence.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    /// Row-major RGB triples.
    pub data: Vec<f64>,
}

impl Image {
    pub fn new(width: usize, height: usize) -> Self {
        Self::filled(width, height, [0.0; 3])
    }

    pub fn filled(width: usize, height: usize, rgb: [f64; 3]) -> Self {
        let mut data = Vec::with_capacity(3 * width * height);
        for _ in 0..width * height {
            data.extend_from_slice(&rgb);
        }
        Self { width, height, data }
    }

    pub fn from_pixels(width: usize, height: usize, pixels: &[[f64; 3]]) -> Result<Self> {
        if pixels.len() != width * height {
            return Err(Error::Shape(format!(
                "{} pixels for a {width}x{height} image",
                pixels.len()
            )));
        }
        Ok(Self {
            width,
            height,
            data: pixels.iter().flatten().copied().collect(),
        })
    }

    pub fn n_pixels(&self) -> usize {
        self.width * self.height
    }

    pub fn pixel(&self, row: usize, col: usize) -> [f64; 3] {
        let i = 3 * (row * self.width + col);
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn set_pixel(&mut self, row: usize, col: usize, rgb: [f64; 3]) {
        let i = 3 * (row * self.width + col);
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    /// Pixel `index` in row-major order.
    pub fn pixel_at(&self, index: usize) -> [f64; 3] {
        let i = 3 * index;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn pixels(&self) -> impl Iterator<Item = [f64; 3]> + '_ {
        self.data.chunks_exact(3).map(|c| [c[0], c[1], c[2]])
    }

    /// 8-bit quantization: `round(255 * clamp(c, 0, 1))`.
    pub fn to_bytes(&self) -> Vec<u8> {
        self.data
            .iter()
            .map(|c| (255.0 * c.clamp(0.0, 1.0)).round() as u8)
            .collect()
    }

    pub fn encode_ppm(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend(self.to_bytes());
        out
    }

    pub fn decode_ppm(bytes: &[u8]) -> Result<Self> {
        let bad = |r: &str| Error::format("PPM image", r);
        let mut pos = 0;
        let mut fields = Vec::with_capacity(4);
        while fields.len() < 4 {
            // Skip whitespace and comments between header tokens.
            while pos < bytes.len() && (bytes[pos].is_ascii_whitespace() || bytes[pos] == b'#') {
                if bytes[pos] == b'#' {
                    while pos < bytes.len() && bytes[pos] != b'\n' {
                        pos += 1;
                    }
                } else {
                    pos += 1;
                }
            }
            let start = pos;
            while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if start == pos {
                return Err(bad("truncated header"));
            }
            fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| bad("non-ASCII header"))?);
        }
        if fields[0] != "P6" {
            return Err(bad("magic is not P6"));
        }
        let parse = |s: &str| s.parse::<usize>().map_err(|_| bad("bad header number"));
        let (width, height, maxval) = (parse(fields[1])?, parse(fields[2])?, parse(fields[3])?);
        if maxval != 255 {
            return Err(bad("only maxval 255 is supported"));
        }
        // Exactly one whitespace byte separates the header from the raster.
        pos += 1;
        let n = 3 * width * height;
        if bytes.len() < pos + n {
            return Err(bad("truncated raster"));
        }
        let data = bytes[pos..pos + n].iter().map(|&b| b as f64 / 255.0).collect();
        Ok(Self { width, height, data })
    }

    pub fn write_ppm(&self, path: &Path) -> Result<()> {
        fs::write(path, self.encode_ppm()).map_err(|e| Error::io(path, e))
    }

    pub fn read_ppm(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::decode_ppm(&bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantization_rule() {
        let img = Image::from_pixels(2, 1, &[[0.0, 1.0, 0.5], [-0.3, 1.7, 0.2]]).unwrap();
        assert_eq!(img.to_bytes(), vec![0, 255, 128, 0, 255, 51]);
    }

    #[test]
    fn ppm_round_trip_of_quantized_image() {
        let img = Image::from_pixels(2, 2, &[[0.0, 0.2, 0.4], [1.0, 0.6, 0.8], [0.1, 0.3, 0.5], [0.7, 0.9, 1.0]]).unwrap();
        let bytes = img.encode_ppm();
        assert!(bytes.starts_with(b"P6\n2 2\n255\n"));
        let back = Image::decode_ppm(&bytes).unwrap();
        assert_eq!(back.to_bytes(), img.to_bytes());
        assert_eq!(back.encode_ppm(), bytes);
    }

    #[test]
    fn rejects_other_formats() {
        assert!(Image::decode_ppm(b"P3\n1 1\n255\n0 0 0").is_err());
        assert!(Image::decode_ppm(b"P6\n2 2\n255\n\x00").is_err());
    }
}
