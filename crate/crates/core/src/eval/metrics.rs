//! Reconstruction quality and sample diversity.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;

/// Peak signal-to-noise ratio for unit-range channels.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Psnr {
    Finite(f64),
    /// Zero mean squared error.
    Infinite,
}

impl Psnr {
    pub fn from_mse(mse: f64) -> Self {
        if mse == 0.0 {
            Psnr::Infinite
        } else {
            Psnr::Finite(10.0 * (1.0 / mse).log10())
        }
    }

    /// Decibels, with the infinite flag mapped to `f64::INFINITY`.
    pub fn db(self) -> f64 {
        match self {
            Psnr::Finite(v) => v,
            Psnr::Infinite => f64::INFINITY,
        }
    }

    pub fn is_infinite(self) -> bool {
        self == Psnr::Infinite
    }
}

fn check_dims(a: &Image, b: &Image) -> Result<()> {
    if a.width != b.width || a.height != b.height {
        return Err(Error::Shape(format!(
            "images are {}x{} and {}x{}",
            a.width, a.height, b.width, b.height
        )));
    }
    Ok(())
}

/// Mean squared error over all pixels and channels.
pub fn mse(a: &Image, b: &Image) -> Result<f64> {
    check_dims(a, b)?;
    let n = a.data.len().max(1) as f64;
    Ok(a.data.iter().zip(&b.data).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / n)
}

/// Mean squared error over the listed row-major pixels.
pub fn masked_mse(a: &Image, b: &Image, pixels: &[usize]) -> Result<f64> {
    check_dims(a, b)?;
    if pixels.is_empty() {
        return Err(Error::InvalidArgument("no pixels to compare".into()));
    }
    let mut sum = 0.0;
    for &i in pixels {
        let (p, q) = (a.pixel_at(i), b.pixel_at(i));
        sum += (0..3).map(|c| (p[c] - q[c]) * (p[c] - q[c])).sum::<f64>();
    }
    Ok(sum / (3 * pixels.len()) as f64)
}

pub fn psnr(a: &Image, b: &Image) -> Result<Psnr> {
    Ok(Psnr::from_mse(mse(a, b)?))
}

/// Unbiased per-pixel variance across samples, averaged over channels,
/// and its mean over pixels.
pub fn per_pixel_variance(samples: &[Image]) -> Result<(Vec<f64>, f64)> {
    if samples.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "per-pixel variance needs at least 2 samples, got {}",
            samples.len()
        )));
    }
    let first = &samples[0];
    for s in &samples[1..] {
        check_dims(first, s)?;
    }
    let n = samples.len() as f64;
    let len = first.data.len();
    let mut mean = vec![0.0; len];
    for s in samples {
        for (m, v) in mean.iter_mut().zip(&s.data) {
            *m += v / n;
        }
    }
    let mut var = vec![0.0; len];
    for s in samples {
        for ((acc, v), m) in var.iter_mut().zip(&s.data).zip(&mean) {
            *acc += (v - m) * (v - m);
        }
    }
    let per_pixel: Vec<f64> = var
        .chunks_exact(3)
        .map(|c| c.iter().sum::<f64>() / (3.0 * (n - 1.0)))
        .collect();
    let scalar = per_pixel.iter().sum::<f64>() / per_pixel.len().max(1) as f64;
    Ok((per_pixel, scalar))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn psnr_examples() {
        let a = Image::filled(3, 2, [0.2, 0.4, 0.6]);
        assert!(psnr(&a, &a).unwrap().is_infinite());
        let b = Image::filled(3, 2, [0.3, 0.5, 0.7]);
        let p = psnr(&a, &b).unwrap().db();
        assert!((p - 20.0).abs() < 1e-9, "{p}");
        assert_eq!(psnr(&a, &b).unwrap(), psnr(&b, &a).unwrap());
        let zero = Image::filled(2, 2, [0.0; 3]);
        let one = Image::filled(2, 2, [1.0; 3]);
        assert_eq!(psnr(&zero, &one).unwrap(), Psnr::Finite(0.0));
        assert!(psnr(&a, &zero).is_err());
    }

    #[test]
    fn variance_examples() {
        let zero = Image::filled(2, 2, [0.0; 3]);
        let one = Image::filled(2, 2, [1.0; 3]);
        let (map, mean) = per_pixel_variance(&[zero.clone(), one.clone()]).unwrap();
        assert!(map.iter().all(|&v| v == 0.5));
        assert_eq!(mean, 0.5);
        let (_, same) = per_pixel_variance(&[one.clone(), one.clone(), one.clone()]).unwrap();
        assert_eq!(same, 0.0);
        assert!(per_pixel_variance(&[one]).is_err());
    }
}
