//! Mask-adapted atoms: unit-norm images with spectrum inside the mask that
//! minimize the moment `Σ |φ(x)|² ‖x‖₂^p`, each orthogonal to its predecessors.
//!
//! In packed coordinates on `𝓜` the moment is the quadratic form of a
//! symmetric positive semidefinite operator, so the atoms are its eigenvectors
//! for the smallest eigenvalues.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::eigen::lobpcg;
use crate::error::{Error, Result};
use crate::image::Image;
use crate::mask::{FreqMask, MaskBasis};
use crate::spectrum::dft2;

/// `‖x‖₂^p` on the periodic box `[-1/2, 1/2)²`, stored with the origin at pixel 0.
#[derive(Clone, Debug, PartialEq)]
pub struct MomentWeight {
    n: usize,
    p: f64,
    weights: Vec<f64>,
}

#[inline]
fn wrap(i: usize, n: usize) -> i64 {
    if i < n / 2 {
        i as i64
    } else {
        i as i64 - n as i64
    }
}

pub fn moment_weights(n: usize, p: f64) -> Result<MomentWeight> {
    if n < 2 || n % 2 != 0 {
        return Err(Error::InvalidSize(n));
    }
    if !(p > 1.0) {
        return Err(Error::InvalidParameter(format!(
            "moment exponent must exceed 1, got {p}"
        )));
    }
    let mut weights = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            let x1 = wrap(i, n) as f64 / n as f64;
            let x2 = wrap(j, n) as f64 / n as f64;
            weights.push((x1 * x1 + x2 * x2).powf(p / 2.0));
        }
    }
    Ok(MomentWeight { n, p, weights })
}

impl MomentWeight {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn values(&self) -> &[f64] {
        &self.weights
    }

    /// Weight at the signed offset `(di, dj)` from the origin.
    pub fn at_offset(&self, di: i64, dj: i64) -> f64 {
        let n = self.n as i64;
        self.weights[(di.rem_euclid(n) * n + dj.rem_euclid(n)) as usize]
    }

    /// Upper bound on the operator norm of the moment form.
    pub fn max(&self) -> f64 {
        self.weights.iter().cloned().fold(0.0, f64::max)
    }
}

/// `pack(F(w · F⁻¹(unpack(v))))`.
pub fn apply_form(v: &[f64], basis: &MaskBasis, w: &MomentWeight) -> Result<Vec<f64>> {
    if basis.n() != w.n {
        return Err(Error::SizeMismatch {
            expected: basis.n(),
            found: w.n,
        });
    }
    let phi = basis.unpack_image(v)?;
    let weighted: Vec<f64> = phi
        .pixels()
        .iter()
        .zip(&w.weights)
        .map(|(a, b)| a * b)
        .collect();
    Ok(basis.pack_image(&Image::from_raw(w.n, weighted)))
}

fn apply_block(m: &DMatrix<f64>, basis: &MaskBasis, w: &MomentWeight) -> DMatrix<f64> {
    let cols: Vec<Vec<f64>> = (0..m.ncols())
        .into_par_iter()
        .map(|j| {
            let v: Vec<f64> = m.column(j).iter().copied().collect();
            apply_form(&v, basis, w).expect("dimensions checked by caller")
        })
        .collect();
    DMatrix::from_fn(m.nrows(), m.ncols(), |r, c| cols[c][r])
}

#[derive(Clone, Debug, PartialEq)]
pub struct AtomParams {
    pub p: f64,
    pub count: usize,
    /// Residual tolerance relative to the operator-norm bound `max w`.
    pub tol: f64,
    pub max_iter: usize,
    /// Seed of the random starting block.
    pub seed: u64,
}

impl Default for AtomParams {
    fn default() -> Self {
        Self {
            p: 4.0,
            count: 18,
            tol: 1e-8,
            max_iter: 3000,
            seed: 0,
        }
    }
}

/// Orthonormal atoms ordered by increasing moment.
#[derive(Clone, Debug, PartialEq)]
pub struct AtomSet {
    n: usize,
    p: f64,
    mask_hash: u64,
    atoms: Vec<Image>,
    moments: Vec<f64>,
}

impl AtomSet {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn mask_hash(&self) -> u64 {
        self.mask_hash
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    /// Atoms with their logical origin at pixel `(0, 0)`.
    pub fn atoms(&self) -> &[Image] {
        &self.atoms
    }

    pub fn moments(&self) -> &[f64] {
        &self.moments
    }

    /// Keeps the first `count` atoms.
    pub fn truncated(&self, count: usize) -> AtomSet {
        let count = count.min(self.len());
        AtomSet {
            atoms: self.atoms[..count].to_vec(),
            moments: self.moments[..count].to_vec(),
            ..self.clone()
        }
    }
}

/// Flips `img` so its value at the origin is non-negative, falling back to
/// the first pixel (row-major) whose magnitude exceeds 1e-12.
fn fix_sign(img: Image) -> Image {
    let px = img.pixels();
    let pivot = if px[0].abs() >= 1e-12 {
        px[0]
    } else {
        px.iter().copied().find(|v| v.abs() > 1e-12).unwrap_or(0.0)
    };
    if pivot < 0.0 {
        img.scale(-1.0)
    } else {
        img
    }
}

/// Computes the `params.count` atoms of smallest moment for `mask`.
pub fn compute_atoms(mask: &FreqMask, params: &AtomParams) -> Result<AtomSet> {
    let basis = MaskBasis::known(mask);
    let dof = basis.dof();
    if params.count == 0 || params.count > dof {
        return Err(Error::TooManyAtoms {
            requested: params.count,
            dof,
        });
    }
    let w = moment_weights(mask.n(), params.p)?;
    let norm_bound = w.max();
    let width = (params.count + (params.count / 2).max(4)).min(dof);

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let x0 = DMatrix::from_fn(dof, width, |_, _| rng.random_range(-1.0..1.0));

    let pairs = lobpcg(
        |m| apply_block(m, &basis, &w),
        x0,
        params.count,
        params.tol * norm_bound,
        params.max_iter,
    )?;
    if let Some(&next) = pairs.block_values.get(params.count) {
        let last = pairs.values[params.count - 1];
        if next - last < 1e-6 * norm_bound {
            log::warn!(
                "atom count {} splits a near-degenerate eigenspace (gap {:.2e})",
                params.count,
                next - last
            );
        }
    }
    log::debug!(
        "atoms converged after {} block iterations",
        pairs.iterations
    );

    let mut atoms = Vec::with_capacity(params.count);
    let mut moments = Vec::with_capacity(params.count);
    for j in 0..params.count {
        let v: Vec<f64> = pairs.vectors.column(j).iter().copied().collect();
        let phi = fix_sign(basis.unpack_image(&v)?);
        let m: f64 = phi
            .pixels()
            .iter()
            .zip(w.values())
            .map(|(a, b)| a * a * b)
            .sum();
        atoms.push(phi);
        moments.push(m);
    }
    Ok(AtomSet {
        n: mask.n(),
        p: params.p,
        mask_hash: mask.hash(),
        atoms,
        moments,
    })
}

/// Display images for one atom.
#[derive(Clone, Debug)]
pub struct AtomView {
    /// The atom, shifted so its origin sits at the centre pixel.
    pub atom: Image,
    /// `log(max(|F(φ)|, 1e-12))`, DC at the centre pixel.
    pub log_spectrum: Image,
}

pub const LOG_FLOOR: f64 = 1e-12;

pub fn atom_report(set: &AtomSet) -> Vec<AtomView> {
    set.atoms
        .iter()
        .map(|phi| {
            let spec = dft2(phi);
            let n = set.n;
            let h = (n / 2) as i64;
            let log_spectrum = Image::from_fn(n, |r, c| {
                spec.get(r as i64 - h, c as i64 - h)
                    .norm()
                    .max(LOG_FLOOR)
                    .ln()
            })
            .expect("finite by construction");
            AtomView {
                atom: phi.centered(),
                log_spectrum,
            }
        })
        .collect()
}

const SFA1_MAGIC: &[u8; 4] = b"SFA1";

/// SFA1 container: magic, `u32 n`, `u32 count`, `f64 p`, `u64 mask hash`,
/// then the atoms as `f64` grids and finally the moments (little-endian).
pub fn encode_sfa1(set: &AtomSet) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(SFA1_MAGIC);
    out.extend_from_slice(&(set.n as u32).to_le_bytes());
    out.extend_from_slice(&(set.len() as u32).to_le_bytes());
    out.extend_from_slice(&set.p.to_le_bytes());
    out.extend_from_slice(&set.mask_hash.to_le_bytes());
    for a in &set.atoms {
        for v in a.pixels() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    for m in &set.moments {
        out.extend_from_slice(&m.to_le_bytes());
    }
    out
}

pub fn decode_sfa1(bytes: &[u8]) -> Result<AtomSet> {
    let header = 4 + 4 + 4 + 8 + 8;
    if bytes.len() < header || &bytes[..4] != SFA1_MAGIC {
        return Err(Error::Parse("missing SFA1 header".into()));
    }
    let n = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let count = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let p = f64::from_le_bytes(bytes[12..20].try_into().unwrap());
    let mask_hash = u64::from_le_bytes(bytes[20..28].try_into().unwrap());
    let expected = header + 8 * (count * n * n + count);
    if bytes.len() != expected {
        return Err(Error::Parse(format!(
            "SFA1 file has {} bytes, expected {expected}",
            bytes.len()
        )));
    }
    let vals: Vec<f64> = bytes[header..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let mut atoms = Vec::with_capacity(count);
    for a in 0..count {
        atoms.push(Image::new(n, vals[a * n * n..(a + 1) * n * n].to_vec())?);
    }
    let moments = vals[count * n * n..].to_vec();
    Ok(AtomSet {
        n,
        p,
        mask_hash,
        atoms,
        moments,
    })
}

pub fn save_atoms(set: &AtomSet, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_sfa1(set))?;
    Ok(())
}

pub fn load_atoms(path: impl AsRef<Path>) -> Result<AtomSet> {
    decode_sfa1(&fs::read(path)?)
}

/// On-disk atom store keyed by (mask hash, p, count).
#[derive(Clone, Debug)]
pub struct AtomCache {
    dir: PathBuf,
}

impl AtomCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    pub fn path_for(&self, mask: &FreqMask, p: f64, count: usize) -> PathBuf {
        self.dir
            .join(format!("atoms-{:016x}-p{}-n{}.sfa", mask.hash(), p, count))
    }

    pub fn get_or_compute(&self, mask: &FreqMask, params: &AtomParams) -> Result<AtomSet> {
        let path = self.path_for(mask, params.p, params.count);
        if path.exists() {
            let set = load_atoms(&path)?;
            if set.mask_hash == mask.hash() && set.p == params.p && set.len() == params.count {
                return Ok(set);
            }
            log::warn!("ignoring stale atom cache entry {}", path.display());
        }
        let set = compute_atoms(mask, params)?;
        fs::create_dir_all(&self.dir)?;
        save_atoms(&set, &path)?;
        Ok(set)
    }
}
