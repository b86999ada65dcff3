//! Real-valued periodic square images.
//!
//! Pixel `(i, j)` sits at position `(i / n, j / n)` on the unit torus; the
//! first index runs along x₁ and the second along x₂. Storage is row-major.

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    n: usize,
    pixels: Vec<f64>,
}

pub(crate) fn check_side(n: usize) -> Result<()> {
    if n < 8 || n % 2 != 0 {
        return Err(Error::InvalidSize(n));
    }
    Ok(())
}

impl Image {
    pub fn new(n: usize, pixels: Vec<f64>) -> Result<Self> {
        check_side(n)?;
        if pixels.len() != n * n {
            return Err(Error::SizeMismatch {
                expected: n * n,
                found: pixels.len(),
            });
        }
        if pixels.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Self { n, pixels })
    }

    pub fn zeros(n: usize) -> Result<Self> {
        Self::new(n, vec![0.0; n * n])
    }

    pub fn constant(n: usize, value: f64) -> Result<Self> {
        Self::new(n, vec![value; n * n])
    }

    /// Builds an image from a function of the integer pixel coordinates.
    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut pixels = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                pixels.push(f(i, j));
            }
        }
        Self::new(n, pixels)
    }

    /// Internal constructor for buffers produced by this crate's own arithmetic.
    pub(crate) fn from_raw(n: usize, pixels: Vec<f64>) -> Self {
        debug_assert_eq!(pixels.len(), n * n);
        Self { n, pixels }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn into_pixels(self) -> Vec<f64> {
        self.pixels
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.pixels[i * self.n + j]
    }

    /// Periodic access with signed coordinates.
    #[inline]
    pub fn get_wrapped(&self, i: i64, j: i64) -> f64 {
        let n = self.n as i64;
        let i = i.rem_euclid(n) as usize;
        let j = j.rem_euclid(n) as usize;
        self.pixels[i * self.n + j]
    }

    pub fn norm(&self) -> f64 {
        self.pixels.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn dot(&self, other: &Image) -> Result<f64> {
        self.check_same(other)?;
        Ok(self
            .pixels
            .iter()
            .zip(&other.pixels)
            .map(|(a, b)| a * b)
            .sum())
    }

    pub fn mean(&self) -> f64 {
        self.pixels.iter().sum::<f64>() / self.pixels.len() as f64
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.pixels
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }

    pub fn add(&self, other: &Image) -> Result<Image> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Image) -> Result<Image> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn scale(&self, s: f64) -> Image {
        Image::from_raw(self.n, self.pixels.iter().map(|v| v * s).collect())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Image {
        Image::from_raw(self.n, self.pixels.iter().map(|&v| f(v)).collect())
    }

    /// Circular shift: `out(i, j) = self(i - di, j - dj)`.
    pub fn shifted(&self, di: i64, dj: i64) -> Image {
        let n = self.n;
        Image::from_fn(n, |i, j| self.get_wrapped(i as i64 - di, j as i64 - dj))
            .expect("shift preserves validity")
    }

    /// Moves the logical origin (pixel 0) to the centre pixel `(n/2, n/2)`.
    pub fn centered(&self) -> Image {
        let h = (self.n / 2) as i64;
        self.shifted(h, h)
    }

    /// Stable content hash (first 8 bytes of SHA-256 over `n` and the pixel bits).
    pub fn hash(&self) -> u64 {
        use sha2::{Digest, Sha256};
        let mut h = Sha256::new();
        h.update((self.n as u64).to_le_bytes());
        for v in &self.pixels {
            h.update(v.to_le_bytes());
        }
        u64::from_le_bytes(h.finalize()[..8].try_into().expect("digest has 32 bytes"))
    }

    pub(crate) fn check_same(&self, other: &Image) -> Result<()> {
        if self.n != other.n {
            return Err(Error::SizeMismatch {
                expected: self.n,
                found: other.n,
            });
        }
        Ok(())
    }

    fn zip_with(&self, other: &Image, f: impl Fn(f64, f64) -> f64) -> Result<Image> {
        self.check_same(other)?;
        Ok(Image::from_raw(
            self.n,
            self.pixels
                .iter()
                .zip(&other.pixels)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        ))
    }
}
