//! Born-approximation scattering data.
//!
//! Under the Born approximation the far field for incident direction `d`
//! and observation direction `x̂` is the Fourier transform of the scatterer
//! indicator at `k (x̂ - d)`. The image spans `grid_scale` physical length
//! units, so that frequency lands at index-space frequency
//! `ν = grid_scale · k (x̂ - d) / 2π`, and samples are normalized like
//! [`dft2`](crate::dft2): `(1/n) Σ_j χ(j) exp(-2πi ν·j/n)`.

use std::f64::consts::PI;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};
use crate::image::{check_side, Image};
use crate::mask::FreqMask;
use crate::maskgen::{nearest_cell, scattering_frequency};
use crate::spectrum::{mirror_index, slot, Spectrum};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Shape {
    /// Centre and radius in unit-square coordinates (first coordinate along x₁).
    Disk { cx: f64, cy: f64, r: f64, amp: f64 },
    /// Axis-aligned rectangle `[x0, x1) × [y0, y1)`.
    Rect {
        x0: f64,
        y0: f64,
        x1: f64,
        y1: f64,
        amp: f64,
    },
}

impl Shape {
    fn contains(&self, x: f64, y: f64) -> bool {
        match *self {
            Shape::Disk { cx, cy, r, .. } => (x - cx).powi(2) + (y - cy).powi(2) < r * r,
            Shape::Rect { x0, y0, x1, y1, .. } => x >= x0 && x < x1 && y >= y0 && y < y1,
        }
    }

    fn amp(&self) -> f64 {
        match *self {
            Shape::Disk { amp, .. } | Shape::Rect { amp, .. } => amp,
        }
    }

    fn validate(&self) -> Result<()> {
        let inside = |v: f64| (0.0..=1.0).contains(&v);
        let ok = match *self {
            Shape::Disk { cx, cy, r, amp } => {
                r > 0.0
                    && inside(cx - r)
                    && inside(cx + r)
                    && inside(cy - r)
                    && inside(cy + r)
                    && amp.is_finite()
            }
            Shape::Rect {
                x0,
                y0,
                x1,
                y1,
                amp,
            } => {
                x0 < x1 && y0 < y1 && [x0, y0, x1, y1].iter().all(|&v| inside(v)) && amp.is_finite()
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!(
                "shape {self} leaves the unit square or is degenerate"
            )))
        }
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Shape::Disk { cx, cy, r, amp } => write!(f, "disk {cx} {cy} {r} {amp}"),
            Shape::Rect {
                x0,
                y0,
                x1,
                y1,
                amp,
            } => write!(f, "rect {x0} {y0} {x1} {y1} {amp}"),
        }
    }
}

/// Parses a wave number such as `9.42`, `3pi` or `pi`.
pub fn parse_wave_number(s: &str) -> Result<f64> {
    let t = s.trim();
    let bad = || Error::Parse(format!("bad wave number {s:?}"));
    let v = match t.strip_suffix("pi") {
        Some("") => PI,
        Some(head) => head.trim().parse::<f64>().map_err(|_| bad())? * PI,
        None => t.parse::<f64>().map_err(|_| bad())?,
    };
    if !(v > 0.0 && v.is_finite()) {
        return Err(bad());
    }
    Ok(v)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScatterScene {
    pub n: usize,
    pub shapes: Vec<Shape>,
    /// Radians per physical length unit.
    pub k_wave: f64,
}

impl ScatterScene {
    pub fn new(n: usize, shapes: Vec<Shape>, k_wave: f64) -> Result<Self> {
        check_side(n)?;
        if !(k_wave > 0.0 && k_wave.is_finite()) {
            return Err(Error::InvalidParameter("k_wave must be positive".into()));
        }
        for s in &shapes {
            s.validate()?;
        }
        Ok(Self { n, shapes, k_wave })
    }

    pub fn wavelength(&self) -> f64 {
        2.0 * PI / self.k_wave
    }

    /// Reads a scene description: `#` comments, optional `n <side>` and
    /// `k <wave number>` lines, then one shape per line
    /// (`disk cx cy r amp` or `rect x0 y0 x1 y1 amp`). `n` and `k` default to
    /// the given values when absent.
    pub fn parse(text: &str, default_n: usize, default_k: f64) -> Result<Self> {
        let mut n = default_n;
        let mut k = default_k;
        let mut shapes = Vec::new();
        for (ln, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let tok: Vec<&str> = line.split_whitespace().collect();
            let err = |msg: &str| Error::Parse(format!("scene line {}: {msg}", ln + 1));
            let nums = |count: usize| -> Result<Vec<f64>> {
                if tok.len() != count + 1 {
                    return Err(err(&format!("expected {count} numbers after {:?}", tok[0])));
                }
                tok[1..]
                    .iter()
                    .map(|t| {
                        t.parse::<f64>()
                            .map_err(|_| err(&format!("bad number {t:?}")))
                    })
                    .collect()
            };
            match tok[0] {
                "n" if tok.len() == 2 => n = tok[1].parse().map_err(|_| err("bad size"))?,
                "k" if tok.len() == 2 => k = parse_wave_number(tok[1])?,
                "disk" => {
                    let v = nums(4)?;
                    shapes.push(Shape::Disk {
                        cx: v[0],
                        cy: v[1],
                        r: v[2],
                        amp: v[3],
                    });
                }
                "rect" => {
                    let v = nums(5)?;
                    shapes.push(Shape::Rect {
                        x0: v[0],
                        y0: v[1],
                        x1: v[2],
                        y1: v[3],
                        amp: v[4],
                    });
                }
                other => return Err(err(&format!("unknown directive {other:?}"))),
            }
        }
        Self::new(n, shapes, k)
    }

    pub fn load(path: impl AsRef<Path>, default_n: usize, default_k: f64) -> Result<Self> {
        Self::parse(&fs::read_to_string(path)?, default_n, default_k)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("n {}\nk {}\n", self.n, self.k_wave);
        for s in &self.shapes {
            out.push_str(&s.to_string());
            out.push('\n');
        }
        out
    }
}

/// Pixelized indicator: pixel `(i, j)` covers `[i/n, (i+1)/n) × [j/n, (j+1)/n)`
/// and takes the summed amplitude of the shapes containing its centre.
pub fn render_scene(scene: &ScatterScene) -> Image {
    let n = scene.n;
    Image::from_fn(n, |i, j| {
        let x = (i as f64 + 0.5) / n as f64;
        let y = (j as f64 + 0.5) / n as f64;
        scene
            .shapes
            .iter()
            .filter(|s| s.contains(x, y))
            .map(|s| s.amp())
            .sum()
    })
    .expect("finite amplitudes")
}

/// One far-field measurement.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FarFieldSample {
    pub d: [f64; 2],
    pub x_hat: [f64; 2],
    /// Index-space frequency.
    pub nu: [f64; 2],
    pub value: Complex64,
}

/// Exact nonuniform transform of `img` at the index-space frequency `nu`.
pub fn nonuniform_coefficient(img: &Image, nu: [f64; 2]) -> Complex64 {
    let n = img.n();
    let w1: Vec<Complex64> = (0..n)
        .map(|i| Complex64::from_polar(1.0, -2.0 * PI * nu[0] * i as f64 / n as f64))
        .collect();
    let w2: Vec<Complex64> = (0..n)
        .map(|j| Complex64::from_polar(1.0, -2.0 * PI * nu[1] * j as f64 / n as f64))
        .collect();
    let mut acc = Complex64::default();
    for i in 0..n {
        let mut row = Complex64::default();
        for j in 0..n {
            let v = img.get(i, j);
            if v != 0.0 {
                row += w2[j] * v;
            }
        }
        acc += w1[i] * row;
    }
    acc / n as f64
}

/// Far field of the rendered scene for every (incident, observed) pair.
pub fn far_field(
    scene: &ScatterScene,
    dirs_in: &[[f64; 2]],
    dirs_out: &[[f64; 2]],
    grid_scale: f64,
) -> Result<Vec<FarFieldSample>> {
    for d in dirs_in.iter().chain(dirs_out) {
        if ((d[0] * d[0] + d[1] * d[1]).sqrt() - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParameter(format!(
                "direction {d:?} is not a unit vector"
            )));
        }
    }
    if !(grid_scale > 0.0) {
        return Err(Error::InvalidParameter(
            "grid_scale must be positive".into(),
        ));
    }
    let chi = render_scene(scene);
    let pairs: Vec<([f64; 2], [f64; 2])> = dirs_in
        .iter()
        .flat_map(|d| dirs_out.iter().map(move |x| (*d, *x)))
        .collect();
    Ok(pairs
        .par_iter()
        .map(|&(d, x_hat)| {
            let nu = scattering_frequency(scene.k_wave, d, x_hat, grid_scale);
            FarFieldSample {
                d,
                x_hat,
                nu,
                value: nonuniform_coefficient(&chi, nu),
            }
        })
        .collect())
}

/// Gridded far-field data.
#[derive(Clone, Debug)]
pub struct GriddedData {
    pub spectrum: Spectrum,
    pub mask: FreqMask,
    /// Samples that fell outside the grid and were dropped.
    pub out_of_range: usize,
}

/// Nearest-cell gridding: collisions are averaged, each hit cell's mirror is
/// filled with the conjugate, and cells hit from both sides get the average of
/// `c(k)` and `conj(c(-k))`. Self-conjugate cells keep the real part; Nyquist
/// cells are dropped along with the mask entry.
pub fn grid_far_field(samples: &[FarFieldSample], n: usize) -> Result<GriddedData> {
    check_side(n)?;
    let mut sum = vec![Complex64::default(); n * n];
    let mut count = vec![0usize; n * n];
    let mut out_of_range = 0;
    for s in samples {
        match nearest_cell(n, s.nu) {
            Ok((k1, k2)) => {
                let idx = slot(n, k1) * n + slot(n, k2);
                sum[idx] += s.value;
                count[idx] += 1;
            }
            Err(_) => out_of_range += 1,
        }
    }
    if out_of_range > 0 {
        log::warn!("{out_of_range} far-field samples fell outside the grid and were dropped");
    }
    let h = (n / 2) as i64;
    let is_nyquist = |idx: usize| {
        let (a, b) = (idx / n, idx % n);
        a as i64 == h || b as i64 == h
    };
    let mut coeffs = vec![Complex64::default(); n * n];
    let mut known = vec![false; n * n];
    for idx in 0..n * n {
        let m = mirror_index(n, idx);
        if is_nyquist(idx) || (count[idx] == 0 && count[m] == 0) {
            continue;
        }
        let avg = |i: usize| sum[i] / count[i] as f64;
        let c = match (count[idx] > 0, count[m] > 0) {
            (true, true) => (avg(idx) + avg(m).conj()) * 0.5,
            (true, false) => avg(idx),
            _ => avg(m).conj(),
        };
        coeffs[idx] = if m == idx {
            Complex64::new(c.re, 0.0)
        } else {
            c
        };
        known[idx] = true;
    }
    if count
        .iter()
        .enumerate()
        .any(|(i, &c)| c > 0 && is_nyquist(i))
    {
        log::warn!("far-field samples on Nyquist frequencies were dropped");
    }
    Ok(GriddedData {
        spectrum: Spectrum::from_raw(n, coeffs),
        mask: FreqMask::from_storage(n, known, false)?,
        out_of_range,
    })
}

/// Adds i.i.d. complex Gaussian noise on the masked coefficients, makes it
/// Hermitian, and rescales it to have ℓ²-norm exactly `sigma_rel · reference_norm`.
pub fn add_noise(
    spec: &Spectrum,
    mask: &FreqMask,
    sigma_rel: f64,
    reference_norm: f64,
    seed: u64,
) -> Result<Spectrum> {
    if !(sigma_rel >= 0.0) {
        return Err(Error::InvalidParameter(
            "noise level must be non-negative".into(),
        ));
    }
    mask.check_side(spec.n())?;
    if sigma_rel == 0.0 {
        return Ok(spec.clone());
    }
    let n = spec.n();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let raw: Vec<Complex64> = (0..n * n)
        .map(|_| {
            let re: f64 = StandardNormal.sample(&mut rng);
            let im: f64 = StandardNormal.sample(&mut rng);
            Complex64::new(re, im)
        })
        .collect();
    let mut noise = vec![Complex64::default(); n * n];
    for idx in 0..n * n {
        if mask.raw()[idx] {
            let m = mirror_index(n, idx);
            noise[idx] = (raw[idx] + raw[m].conj()) * 0.5;
        }
    }
    let norm = noise.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
    let mut out = spec.clone();
    if norm > 0.0 {
        let scale = sigma_rel * reference_norm / norm;
        for (c, e) in out.raw_mut().iter_mut().zip(&noise) {
            *c += e * scale;
        }
    }
    Ok(out)
}

impl FromStr for ScatterScene {
    type Err = Error;

    /// Parses a scene that names its own `n` and `k`.
    fn from_str(s: &str) -> Result<Self> {
        let scene = Self::parse(s, 0, 1.0);
        match scene {
            Err(Error::InvalidSize(0)) => Err(Error::Parse("scene lacks an `n` line".into())),
            other => other,
        }
    }
}
