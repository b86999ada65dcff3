//! Frequency masks and the real coordinate system they induce.

use rustfft::num_complex::Complex64;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::image::{check_side, Image};
use crate::spectrum::{self, dft2, freq, mirror_index, slot, Spectrum};

/// Set `M` of known Fourier coefficients.
///
/// Always symmetric under `k ↦ -k`, and never contains a Nyquist frequency
/// (a component equal to `-n/2`), since those have no conjugate partner.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FreqMask {
    n: usize,
    known: Vec<bool>,
}

#[inline]
fn is_nyquist_slot(n: usize, idx: usize) -> bool {
    idx / n == n / 2 || idx % n == n / 2
}

impl FreqMask {
    /// Builds a mask from a predicate on centered frequencies. The result is
    /// symmetrized (`known(k) := known(k) || known(-k)`) and Nyquist-cleared.
    pub fn from_fn(n: usize, f: impl Fn(i64, i64) -> bool) -> Result<Self> {
        check_side(n)?;
        let mut known = vec![false; n * n];
        for a in 0..n {
            for b in 0..n {
                known[a * n + b] = f(freq(n, a), freq(n, b));
            }
        }
        Self::from_storage(n, known, true)
    }

    /// Builds a mask from a grid in FFT storage order. An asymmetric grid is an
    /// error unless `symmetrize` is set.
    pub(crate) fn from_storage(n: usize, mut known: Vec<bool>, symmetrize: bool) -> Result<Self> {
        check_side(n)?;
        if known.len() != n * n {
            return Err(Error::SizeMismatch {
                expected: n * n,
                found: known.len(),
            });
        }
        let asymmetric = (0..n * n).any(|i| known[i] != known[mirror_index(n, i)]);
        if asymmetric {
            if !symmetrize {
                return Err(Error::AsymmetricMask);
            }
            let snapshot = known.clone();
            for (i, k) in known.iter_mut().enumerate() {
                *k = snapshot[i] || snapshot[mirror_index(n, i)];
            }
        }
        let mut cleared = 0usize;
        for (i, k) in known.iter_mut().enumerate() {
            if *k && is_nyquist_slot(n, i) {
                *k = false;
                cleared += 1;
            }
        }
        if cleared > 0 {
            log::warn!("cleared {cleared} Nyquist frequencies from mask");
        }
        Ok(Self { n, known })
    }

    /// Builds a mask from a display-order grid (row `r`, column `c` hold
    /// frequency `(r - n/2, c - n/2)`).
    pub fn from_display(n: usize, grid: &[bool], symmetrize: bool) -> Result<Self> {
        check_side(n)?;
        if grid.len() != n * n {
            return Err(Error::SizeMismatch {
                expected: n * n,
                found: grid.len(),
            });
        }
        let h = (n / 2) as i64;
        let mut known = vec![false; n * n];
        for r in 0..n {
            for c in 0..n {
                let idx = slot(n, r as i64 - h) * n + slot(n, c as i64 - h);
                known[idx] = grid[r * n + c];
            }
        }
        Self::from_storage(n, known, symmetrize)
    }

    /// Display-order grid, DC at `(n/2, n/2)`.
    pub fn to_display(&self) -> Vec<bool> {
        let n = self.n;
        let h = (n / 2) as i64;
        let mut grid = vec![false; n * n];
        for r in 0..n {
            for c in 0..n {
                grid[r * n + c] = self.is_known(r as i64 - h, c as i64 - h);
            }
        }
        grid
    }

    pub fn full(n: usize) -> Result<Self> {
        Self::from_fn(n, |_, _| true)
    }

    pub fn dc_only(n: usize) -> Result<Self> {
        Self::from_fn(n, |k1, k2| k1 == 0 && k2 == 0)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Membership flags in FFT storage order.
    pub fn raw(&self) -> &[bool] {
        &self.known
    }

    #[inline]
    pub fn is_known(&self, k1: i64, k2: i64) -> bool {
        self.known[slot(self.n, k1) * self.n + slot(self.n, k2)]
    }

    pub fn count(&self) -> usize {
        self.known.iter().filter(|&&k| k).count()
    }

    pub fn is_nyquist(&self, k1: i64, k2: i64) -> bool {
        let h = (self.n / 2) as i64;
        k1.rem_euclid(self.n as i64) == h || k2.rem_euclid(self.n as i64) == h
    }

    /// Known frequencies in storage order.
    pub fn frequencies(&self) -> Vec<(i64, i64)> {
        let n = self.n;
        (0..n * n)
            .filter(|&i| self.known[i])
            .map(|i| (freq(n, i / n), freq(n, i % n)))
            .collect()
    }

    pub fn union(&self, other: &FreqMask) -> Result<FreqMask> {
        self.check_side(other.n)?;
        let known = self
            .known
            .iter()
            .zip(&other.known)
            .map(|(a, b)| *a || *b)
            .collect();
        Ok(FreqMask { n: self.n, known })
    }

    /// Stable content hash (first 8 bytes of SHA-256 over `n` and the flags).
    pub fn hash(&self) -> u64 {
        let mut h = Sha256::new();
        h.update((self.n as u64).to_le_bytes());
        let bytes: Vec<u8> = self.known.iter().map(|&k| k as u8).collect();
        h.update(&bytes);
        let digest = h.finalize();
        u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
    }

    pub(crate) fn check_side(&self, n: usize) -> Result<()> {
        if self.n != n {
            return Err(Error::SizeMismatch {
                expected: self.n,
                found: n,
            });
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Coord {
    /// Self-conjugate frequency (DC or a Nyquist corner): one real coordinate.
    Real(usize),
    /// Conjugate pair `{k, -k}`: `(√2·Re c_k, √2·Im c_k)`.
    Pair(usize, usize),
}

/// Real orthonormal coordinates on the space of real images whose spectrum
/// is supported in a symmetric frequency set.
///
/// `pack` and `unpack` are mutually inverse linear isometries between such
/// spectra and `ℝ^dof`.
#[derive(Clone, Debug)]
pub struct MaskBasis {
    n: usize,
    support: Vec<bool>,
    coords: Vec<Coord>,
    dof: usize,
}

impl MaskBasis {
    /// Coordinates on `𝓜`, the span of the known frequencies.
    pub fn known(mask: &FreqMask) -> Self {
        Self::from_support(mask.n, mask.known.clone())
    }

    /// Coordinates on `𝓜⊥`, the span of every frequency outside the mask
    /// (Nyquist frequencies included).
    pub fn missing(mask: &FreqMask) -> Self {
        Self::from_support(mask.n, mask.known.iter().map(|k| !k).collect())
    }

    fn from_support(n: usize, support: Vec<bool>) -> Self {
        let mut coords = Vec::new();
        let mut dof = 0;
        for idx in 0..n * n {
            if !support[idx] {
                continue;
            }
            let m = mirror_index(n, idx);
            debug_assert!(support[m], "support must be symmetric");
            if m == idx {
                coords.push(Coord::Real(idx));
                dof += 1;
            } else if idx < m {
                coords.push(Coord::Pair(idx, m));
                dof += 2;
            }
        }
        Self {
            n,
            support,
            coords,
            dof,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dof(&self) -> usize {
        self.dof
    }

    /// Whether storage index `idx` lies in the support.
    pub fn contains(&self, idx: usize) -> bool {
        self.support[idx]
    }

    pub fn pack(&self, spec: &Spectrum) -> Result<Vec<f64>> {
        if spec.n() != self.n {
            return Err(Error::SizeMismatch {
                expected: self.n,
                found: spec.n(),
            });
        }
        let c = spec.raw();
        let scale = c.iter().map(|z| z.norm()).fold(0.0, f64::max);
        let tol = spectrum::HERMITIAN_TOL * scale;
        for coord in &self.coords {
            let dev = match *coord {
                Coord::Real(i) => c[i].im.abs(),
                Coord::Pair(i, m) => (c[m] - c[i].conj()).norm(),
            };
            if dev > tol && dev > 0.0 {
                return Err(Error::NonHermitian { deviation: dev });
            }
        }
        Ok(self.pack_raw(c))
    }

    fn pack_raw(&self, c: &[Complex64]) -> Vec<f64> {
        let s = std::f64::consts::SQRT_2;
        let mut out = Vec::with_capacity(self.dof);
        for coord in &self.coords {
            match *coord {
                Coord::Real(i) => out.push(c[i].re),
                Coord::Pair(i, m) => {
                    // average the two halves so round-off asymmetry cancels
                    let z = (c[i] + c[m].conj()) * 0.5;
                    out.push(s * z.re);
                    out.push(s * z.im);
                }
            }
        }
        out
    }

    pub fn unpack(&self, v: &[f64]) -> Result<Spectrum> {
        if v.len() != self.dof {
            return Err(Error::DimensionMismatch {
                expected: self.dof,
                found: v.len(),
            });
        }
        let n = self.n;
        let mut c = vec![Complex64::default(); n * n];
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let mut it = v.iter();
        for coord in &self.coords {
            match *coord {
                Coord::Real(i) => c[i] = Complex64::new(*it.next().unwrap(), 0.0),
                Coord::Pair(i, m) => {
                    let re = *it.next().unwrap() * s;
                    let im = *it.next().unwrap() * s;
                    c[i] = Complex64::new(re, im);
                    c[m] = Complex64::new(re, -im);
                }
            }
        }
        Ok(Spectrum::from_raw(n, c))
    }

    /// `pack(dft2(img))`; the spectrum of a real image is Hermitian by construction.
    pub fn pack_image(&self, img: &Image) -> Vec<f64> {
        self.pack_raw(dft2(img).raw())
    }

    /// `idft2(unpack(v))`.
    pub fn unpack_image(&self, v: &[f64]) -> Result<Image> {
        Ok(spectrum::idft2_unchecked(&self.unpack(v)?))
    }
}
