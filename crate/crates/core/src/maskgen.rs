//! Generators for the frequency masks used in the experiments.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::image::check_side;
use crate::mask::FreqMask;
use crate::spectrum::slot;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BandNorm {
    Max,
    Euclidean,
}

/// Union of annuli `r_lo ≤ ‖k‖ < r_hi` in frequency-index units.
#[derive(Clone, Debug, PartialEq)]
pub struct BandSpec {
    pub bands: Vec<(f64, f64)>,
    pub norm: BandNorm,
}

impl BandSpec {
    pub fn new(bands: Vec<(f64, f64)>, norm: BandNorm) -> Self {
        Self { bands, norm }
    }

    /// Low-pass core plus two rings in max-norm; meant for 128×128 grids.
    pub fn standard() -> Self {
        Self::new(vec![(0.0, 8.0), (20.0, 28.0), (44.0, 52.0)], BandNorm::Max)
    }

    fn validate(&self, n: usize) -> Result<()> {
        let mut sorted = self.bands.clone();
        sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
        for &(lo, hi) in &sorted {
            if !(lo >= 0.0 && lo < hi && hi <= (n / 2) as f64) {
                return Err(Error::BandOutOfRange { lo, hi, n });
            }
        }
        for w in sorted.windows(2) {
            if w[1].0 < w[0].1 {
                return Err(Error::InvalidParameter(format!(
                    "bands ({}, {}) and ({}, {}) overlap",
                    w[0].0, w[0].1, w[1].0, w[1].1
                )));
            }
        }
        Ok(())
    }

    fn radius(&self, k1: i64, k2: i64) -> f64 {
        match self.norm {
            BandNorm::Max => k1.abs().max(k2.abs()) as f64,
            BandNorm::Euclidean => ((k1 * k1 + k2 * k2) as f64).sqrt(),
        }
    }
}

pub fn band_mask(n: usize, spec: &BandSpec) -> Result<FreqMask> {
    check_side(n)?;
    spec.validate(n)?;
    FreqMask::from_fn(n, |k1, k2| {
        let r = spec.radius(k1, k2);
        spec.bands.iter().any(|&(lo, hi)| r >= lo && r < hi)
    })
}

/// `count` unit vectors at equispaced angles `2πi / count`.
pub fn equispaced_directions(count: usize) -> Vec<[f64; 2]> {
    (0..count)
        .map(|i| {
            let t = 2.0 * PI * i as f64 / count as f64;
            [t.cos(), t.sin()]
        })
        .collect()
}

/// Grid scale mapping the ball of radius `2k` onto radius `n/2 - 1` in index units.
pub fn default_grid_scale(n: usize, k_wave: f64) -> f64 {
    (n as f64 / 2.0 - 1.0) * PI / k_wave
}

/// Index-space frequency `grid_scale · k (x̂ - d) / 2π` of one (incident, observed) pair.
pub fn scattering_frequency(
    k_wave: f64,
    d: [f64; 2],
    x_hat: [f64; 2],
    grid_scale: f64,
) -> [f64; 2] {
    let s = grid_scale * k_wave / (2.0 * PI);
    [s * (x_hat[0] - d[0]), s * (x_hat[1] - d[1])]
}

/// Nearest grid point of a continuous index-space frequency; fails outside the grid.
pub(crate) fn nearest_cell(n: usize, f: [f64; 2]) -> Result<(i64, i64)> {
    let h = (n / 2) as i64;
    let k1 = f[0].round() as i64;
    let k2 = f[1].round() as i64;
    if k1.abs() > h || k2.abs() > h {
        return Err(Error::OutOfGrid(k1, k2));
    }
    Ok((k1, k2))
}

/// Mask of the grid cells hit by the Born far-field frequencies `k (x̂ - d)`.
pub fn scattering_mask(
    n: usize,
    k_wave: f64,
    dirs_in: &[[f64; 2]],
    dirs_out: &[[f64; 2]],
    grid_scale: f64,
) -> Result<FreqMask> {
    check_side(n)?;
    if dirs_in.is_empty() || dirs_out.is_empty() {
        return Err(Error::InvalidParameter(
            "need at least one direction".into(),
        ));
    }
    if !(k_wave > 0.0 && grid_scale > 0.0) {
        return Err(Error::InvalidParameter(
            "k_wave and grid_scale must be positive".into(),
        ));
    }
    let mut known = vec![false; n * n];
    for d in dirs_in {
        for x in dirs_out {
            let (k1, k2) = nearest_cell(n, scattering_frequency(k_wave, *d, *x, grid_scale))?;
            known[slot(n, k1) * n + slot(n, k2)] = true;
        }
    }
    FreqMask::from_storage(n, known, true)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LineStyle {
    /// Lines through the origin at equispaced angles in `[0, π)`.
    Radial,
    /// Equispaced lines parallel to the `k₁` axis.
    Parallel,
}

/// Fourier-slice style mask made of `n_lines` lines `2·half_width + 1` cells thick.
pub fn tomography_mask(
    n: usize,
    n_lines: usize,
    style: LineStyle,
    half_width: usize,
) -> Result<FreqMask> {
    check_side(n)?;
    if n_lines == 0 {
        return Err(Error::InvalidParameter("n_lines must be at least 1".into()));
    }
    let reach = half_width as f64 + 0.5;
    match style {
        LineStyle::Radial => {
            let dirs: Vec<(f64, f64)> = (0..n_lines)
                .map(|i| {
                    let t = PI * i as f64 / n_lines as f64;
                    (t.cos(), t.sin())
                })
                .collect();
            FreqMask::from_fn(n, |k1, k2| {
                dirs.iter()
                    .any(|&(c, s)| (k2 as f64 * c - k1 as f64 * s).abs() < reach)
            })
        }
        LineStyle::Parallel => {
            let spacing = n as f64 / n_lines as f64;
            let offsets: Vec<f64> = (0..n_lines)
                .map(|i| ((i as f64 - (n_lines as f64 - 1.0) / 2.0) * spacing).round())
                .collect();
            FreqMask::from_fn(n, |_, k2| {
                offsets.iter().any(|&o| (k2 as f64 - o).abs() < reach)
            })
        }
    }
}
