//! Unitary 2-D DFT on the periodic grid and the projections onto the known
//! and missing frequency subspaces.
//!
//! Convention: `c_k = (1/n) Σ_j g(j) exp(-2πi k·j/n)` with `k ∈ {-n/2, …, n/2-1}²`.
//! The transform is an isometry, so `‖g‖₂ = ‖c‖₂` and the DC coefficient is
//! `n · mean(g)`.

use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fft;
use crate::image::{check_side, Image};
use crate::mask::FreqMask;

/// Relative tolerance used when checking Hermitian symmetry.
pub const HERMITIAN_TOL: f64 = 1e-9;

/// Complex coefficients on the centered frequency grid.
///
/// Storage follows FFT order (frequency `k` lives at index `k mod n`); use the
/// centered accessors rather than the raw buffer unless you need speed.
#[derive(Clone, Debug, PartialEq)]
pub struct Spectrum {
    n: usize,
    coeffs: Vec<Complex64>,
}

/// Maps a signed frequency to its storage slot along one axis.
#[inline]
pub fn slot(n: usize, k: i64) -> usize {
    k.rem_euclid(n as i64) as usize
}

/// Inverse of [`slot`]: storage slot to centered frequency.
#[inline]
pub fn freq(n: usize, a: usize) -> i64 {
    if a < n / 2 {
        a as i64
    } else {
        a as i64 - n as i64
    }
}

/// Storage index of the conjugate partner `-k` of storage index `idx`.
#[inline]
pub(crate) fn mirror_index(n: usize, idx: usize) -> usize {
    let (a, b) = (idx / n, idx % n);
    ((n - a) % n) * n + (n - b) % n
}

impl Spectrum {
    pub fn zeros(n: usize) -> Result<Self> {
        check_side(n)?;
        Ok(Self {
            n,
            coeffs: vec![Complex64::default(); n * n],
        })
    }

    /// Builds a spectrum from a function of the centered frequency.
    pub fn from_fn(n: usize, f: impl Fn(i64, i64) -> Complex64) -> Result<Self> {
        let mut s = Self::zeros(n)?;
        for a in 0..n {
            for b in 0..n {
                s.coeffs[a * n + b] = f(freq(n, a), freq(n, b));
            }
        }
        Ok(s)
    }

    pub(crate) fn from_raw(n: usize, coeffs: Vec<Complex64>) -> Self {
        debug_assert_eq!(coeffs.len(), n * n);
        Self { n, coeffs }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Raw coefficients in FFT storage order.
    pub fn raw(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub(crate) fn raw_mut(&mut self) -> &mut [Complex64] {
        &mut self.coeffs
    }

    #[inline]
    pub fn index(&self, k1: i64, k2: i64) -> usize {
        slot(self.n, k1) * self.n + slot(self.n, k2)
    }

    #[inline]
    pub fn frequency(&self, idx: usize) -> (i64, i64) {
        (freq(self.n, idx / self.n), freq(self.n, idx % self.n))
    }

    #[inline]
    pub fn get(&self, k1: i64, k2: i64) -> Complex64 {
        self.coeffs[self.index(k1, k2)]
    }

    #[inline]
    pub fn set(&mut self, k1: i64, k2: i64, c: Complex64) {
        let i = self.index(k1, k2);
        self.coeffs[i] = c;
    }

    pub fn norm(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Largest `|c_{-k} - conj(c_k)|` over the grid.
    pub fn hermitian_deviation(&self) -> f64 {
        let n = self.n;
        (0..n * n)
            .map(|i| (self.coeffs[mirror_index(n, i)] - self.coeffs[i].conj()).norm())
            .fold(0.0, f64::max)
    }

    /// Checks Hermitian symmetry relative to the largest coefficient magnitude.
    pub fn check_hermitian(&self) -> Result<()> {
        let scale = self.coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max);
        let dev = self.hermitian_deviation();
        if dev > HERMITIAN_TOL * scale.max(f64::MIN_POSITIVE) && dev > 0.0 {
            return Err(Error::NonHermitian { deviation: dev });
        }
        Ok(())
    }

    /// Zeroes every coefficient outside `mask`.
    pub fn restrict(&self, mask: &FreqMask) -> Result<Spectrum> {
        mask.check_side(self.n)?;
        let coeffs = self
            .coeffs
            .iter()
            .zip(mask.raw())
            .map(|(&c, &keep)| if keep { c } else { Complex64::default() })
            .collect();
        Ok(Spectrum::from_raw(self.n, coeffs))
    }
}

/// Unitary forward transform.
pub fn dft2(img: &Image) -> Spectrum {
    let n = img.n();
    let mut data: Vec<Complex64> = img
        .pixels()
        .iter()
        .map(|&v| Complex64::new(v, 0.0))
        .collect();
    fft::plan(n).forward(&mut data);
    let s = 1.0 / n as f64;
    data.iter_mut().for_each(|c| *c *= s);
    Spectrum::from_raw(n, data)
}

/// Unitary inverse transform; rejects spectra that are not Hermitian.
pub fn idft2(spec: &Spectrum) -> Result<Image> {
    spec.check_hermitian()?;
    Ok(idft2_unchecked(spec))
}

/// Inverse transform keeping the real part, for spectra Hermitian by construction.
pub(crate) fn idft2_unchecked(spec: &Spectrum) -> Image {
    let n = spec.n();
    let mut data = spec.raw().to_vec();
    fft::plan(n).inverse(&mut data);
    let s = 1.0 / n as f64;
    Image::from_raw(n, data.iter().map(|c| c.re * s).collect())
}

/// `F⁻¹(χ_M F(img))`: orthogonal projection onto images with spectrum in the mask.
pub fn project_known(img: &Image, mask: &FreqMask) -> Result<Image> {
    mask.check_side(img.n())?;
    let spec = dft2(img).restrict(mask)?;
    Ok(idft2_unchecked(&spec))
}

/// `img - project_known(img)`: projection onto the missing frequencies.
pub fn project_missing(img: &Image, mask: &FreqMask) -> Result<Image> {
    mask.check_side(img.n())?;
    let mut spec = dft2(img);
    for (c, &keep) in spec.raw_mut().iter_mut().zip(mask.raw()) {
        if keep {
            *c = Complex64::default();
        }
    }
    Ok(idft2_unchecked(&spec))
}
