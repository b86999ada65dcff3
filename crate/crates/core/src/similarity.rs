//! Patch distances and the weighted patch graph.
//!
//! Three distances are supported: the atom distance (Euclidean distance
//! between the atom responses at two points), the oracle distance (patch SSD
//! on a reference image) and the plain SSD on the corrupted image. Distances
//! are measured on the torus; patch centers live on a stride-`ε` lattice.

use std::collections::HashSet;
use std::fmt::{self, Write as _};
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use rustfft::num_complex::Complex64;

use crate::atoms::AtomSet;
use crate::error::{Error, Result};
use crate::image::Image;
use crate::spectrum::{dft2, idft2_unchecked, Spectrum};

/// Atom responses `g_n(x) = Σ_y g(y) φ_n(y - x)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ResponseStack {
    n: usize,
    responses: Vec<Image>,
    source_hash: u64,
}

impl ResponseStack {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn depth(&self) -> usize {
        self.responses.len()
    }

    pub fn responses(&self) -> &[Image] {
        &self.responses
    }

    pub fn source_hash(&self) -> u64 {
        self.source_hash
    }

    /// Response vector at pixel `(i, j)`.
    pub fn feature(&self, i: usize, j: usize) -> Vec<f64> {
        self.responses.iter().map(|r| r.get(i, j)).collect()
    }
}

pub fn filter_responses(g: &Image, atoms: &AtomSet) -> Result<ResponseStack> {
    if g.n() != atoms.n() {
        return Err(Error::SizeMismatch {
            expected: atoms.n(),
            found: g.n(),
        });
    }
    let n = g.n();
    let gs = dft2(g);
    let scale = n as f64;
    let responses = atoms
        .atoms()
        .iter()
        .map(|phi| {
            let ps = dft2(phi);
            let prod: Vec<Complex64> = gs
                .raw()
                .iter()
                .zip(ps.raw())
                .map(|(a, b)| a * b.conj() * scale)
                .collect();
            idft2_unchecked(&Spectrum::from_raw(n, prod))
        })
        .collect();
    Ok(ResponseStack {
        n,
        responses,
        source_hash: g.hash(),
    })
}

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    sq_dist(a, b).sqrt()
}

#[inline]
fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Atom distance between two pixels.
pub fn dist_atom(stack: &ResponseStack, xk: (usize, usize), xl: (usize, usize)) -> f64 {
    euclid(&stack.feature(xk.0, xk.1), &stack.feature(xl.0, xl.1))
}

fn patch(img: &Image, x: (usize, usize), rho: usize) -> Vec<f64> {
    let r = (rho / 2) as i64;
    let mut out = Vec::with_capacity(rho * rho);
    for di in -r..=r {
        for dj in -r..=r {
            out.push(img.get_wrapped(x.0 as i64 + di, x.1 as i64 + dj));
        }
    }
    out
}

/// Root sum of squared differences between the `ρ×ρ` patches centered at
/// `x_k` and `x_ℓ` (periodic wrap).
pub fn dist_ssd(img: &Image, xk: (usize, usize), xl: (usize, usize), rho: usize) -> Result<f64> {
    check_rho(rho)?;
    Ok(euclid(&patch(img, xk, rho), &patch(img, xl, rho)))
}

fn check_rho(rho: usize) -> Result<()> {
    if rho == 0 || rho % 2 == 0 {
        return Err(Error::InvalidParameter(format!(
            "patch size must be odd, got {rho}"
        )));
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum MetricKind {
    /// δ¹: atom responses of the corrupted image.
    Atom,
    /// δ²: patch SSD on the clean reference image.
    Oracle,
    /// δ³: patch SSD on the corrupted image.
    Ssd,
}

impl fmt::Display for MetricKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MetricKind::Atom => "atom",
            MetricKind::Oracle => "oracle",
            MetricKind::Ssd => "ssd",
        })
    }
}

impl FromStr for MetricKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "atom" => Ok(MetricKind::Atom),
            "oracle" => Ok(MetricKind::Oracle),
            "ssd" => Ok(MetricKind::Ssd),
            other => Err(Error::Parse(format!("unknown metric {other:?}"))),
        }
    }
}

/// What distances are measured on.
#[derive(Clone, Copy, Debug)]
pub enum MetricInput<'a> {
    Atom(&'a ResponseStack),
    Oracle(&'a Image),
    Ssd(&'a Image),
}

impl MetricInput<'_> {
    pub fn kind(&self) -> MetricKind {
        match self {
            MetricInput::Atom(_) => MetricKind::Atom,
            MetricInput::Oracle(_) => MetricKind::Oracle,
            MetricInput::Ssd(_) => MetricKind::Ssd,
        }
    }

    pub fn n(&self) -> usize {
        match self {
            MetricInput::Atom(s) => s.n(),
            MetricInput::Oracle(img) | MetricInput::Ssd(img) => img.n(),
        }
    }

    /// Feature vectors of the given points, flattened; the distance between
    /// two points is the Euclidean distance between their features.
    fn features(&self, points: &[(usize, usize)], rho: usize) -> (usize, Vec<f64>) {
        let dim = match self {
            MetricInput::Atom(s) => s.depth(),
            _ => rho * rho,
        };
        let rows: Vec<Vec<f64>> = points
            .par_iter()
            .map(|&x| match self {
                MetricInput::Atom(s) => s.feature(x.0, x.1),
                MetricInput::Oracle(img) | MetricInput::Ssd(img) => patch(img, x, rho),
            })
            .collect();
        (dim, rows.concat())
    }

    /// Distance between two pixels.
    pub fn distance(&self, xk: (usize, usize), xl: (usize, usize), rho: usize) -> Result<f64> {
        match self {
            MetricInput::Atom(s) => Ok(dist_atom(s, xk, xl)),
            MetricInput::Oracle(img) | MetricInput::Ssd(img) => dist_ssd(img, xk, xl, rho),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GraphParams {
    /// Search window radius (max-norm, pixels).
    pub eta: usize,
    /// Patch side, odd.
    pub rho: usize,
    /// Lattice stride.
    pub eps: usize,
    /// Matches kept per center.
    pub m0: usize,
    /// Selectivity of the weights `exp(-δ/h)`.
    pub h: f64,
}

impl GraphParams {
    pub fn validate(&self) -> Result<()> {
        check_rho(self.rho)?;
        if self.eps == 0 || self.eps > self.rho {
            return Err(Error::InvalidParameter(format!(
                "stride must satisfy 1 ≤ ε ≤ ρ (ε = {}, ρ = {})",
                self.eps, self.rho
            )));
        }
        if self.eta < self.eps {
            return Err(Error::InvalidParameter(format!(
                "window radius η = {} is smaller than the stride ε = {}",
                self.eta, self.eps
            )));
        }
        if !(self.h > 0.0 && self.h.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "h must be positive, got {}",
                self.h
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Edge {
    pub k: (usize, usize),
    pub l: (usize, usize),
    pub delta: f64,
    pub weight: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PatchGraph {
    pub n: usize,
    pub metric: MetricKind,
    pub params: GraphParams,
    pub centers: Vec<(usize, usize)>,
    pub edges: Vec<Edge>,
}

/// Max-norm distance on the torus.
fn torus_dist(n: usize, a: (usize, usize), b: (usize, usize)) -> usize {
    let d = |x: usize, y: usize| {
        let t = x.abs_diff(y);
        t.min(n - t)
    };
    d(a.0, b.0).max(d(a.1, b.1))
}

fn lattice(n: usize, eps: usize) -> Vec<usize> {
    (0..n).step_by(eps).collect()
}

/// Keeps the `m` smallest `(d², index)` pairs, ordered.
fn push_best(best: &mut Vec<(f64, usize)>, m: usize, d2: f64, idx: usize) {
    if best.len() == m {
        match best.last() {
            Some(&(worst, _)) if d2 >= worst => return,
            _ => {}
        }
        best.pop();
    }
    let at = best.partition_point(|&(d, _)| d <= d2);
    best.insert(at, (d2, idx));
}

pub fn build_graph(input: MetricInput<'_>, params: &GraphParams) -> Result<PatchGraph> {
    params.validate()?;
    let n = input.n();
    let axis = lattice(n, params.eps);
    let la = axis.len();
    let centers: Vec<(usize, usize)> = axis
        .iter()
        .flat_map(|&i| axis.iter().map(move |&j| (i, j)))
        .collect();
    let (dim, feats) = input.features(&centers, params.rho);
    let feat = |c: usize| &feats[c * dim..(c + 1) * dim];

    // per-axis lattice indices within η on the torus, ascending
    let near: Vec<Vec<usize>> = (0..la)
        .map(|a| {
            (0..la)
                .filter(|&b| {
                    let t = axis[a].abs_diff(axis[b]);
                    t.min(n - t) <= params.eta
                })
                .collect()
        })
        .collect();

    let rows: Vec<Vec<(f64, usize)>> = (0..centers.len())
        .into_par_iter()
        .map(|c| {
            let (a, b) = (c / la, c % la);
            let fc = feat(c);
            let mut best = Vec::with_capacity(params.m0 + 1);
            if params.m0 == 0 {
                return best;
            }
            for &ra in &near[a] {
                for &cb in &near[b] {
                    let o = ra * la + cb;
                    if o == c || torus_dist(n, centers[c], centers[o]) < params.eps {
                        continue;
                    }
                    push_best(&mut best, params.m0, sq_dist(fc, feat(o)), o);
                }
            }
            best
        })
        .collect();

    let mut seen = HashSet::new();
    let mut edges = Vec::new();
    for (c, row) in rows.iter().enumerate() {
        for &(d2, o) in row {
            if seen.insert((c.min(o), c.max(o))) {
                let delta = d2.sqrt();
                edges.push(Edge {
                    k: centers[c],
                    l: centers[o],
                    delta,
                    weight: (-delta / params.h).exp().max(f64::MIN_POSITIVE),
                });
            }
        }
    }
    Ok(PatchGraph {
        n,
        metric: input.kind(),
        params: *params,
        centers,
        edges,
    })
}

/// The `count` nearest stride-`stride` lattice points to `x` (anywhere on the
/// torus), ties broken by row-major order. `stride = 1` searches every pixel.
pub fn best_matches(
    input: MetricInput<'_>,
    x: (usize, usize),
    count: usize,
    rho: usize,
    stride: usize,
) -> Result<Vec<((usize, usize), f64)>> {
    let n = input.n();
    if stride == 0 || x.0 % stride != 0 || x.1 % stride != 0 || x.0 >= n || x.1 >= n {
        return Err(Error::InvalidParameter(format!(
            "{x:?} is not a lattice point of stride {stride}"
        )));
    }
    if count == 0 {
        return Ok(Vec::new());
    }
    if !matches!(input, MetricInput::Atom(_)) {
        check_rho(rho)?;
    }
    let axis = lattice(n, stride);
    let points: Vec<(usize, usize)> = axis
        .iter()
        .flat_map(|&i| axis.iter().map(move |&j| (i, j)))
        .collect();
    let (dim, feats) = input.features(&points, rho);
    let me = points
        .iter()
        .position(|&p| p == x)
        .expect("x is a lattice point");
    let fx = &feats[me * dim..(me + 1) * dim];
    let mut best = Vec::with_capacity(count + 1);
    for (o, _) in points.iter().enumerate() {
        if o != me {
            push_best(
                &mut best,
                count,
                sq_dist(fx, &feats[o * dim..(o + 1) * dim]),
                o,
            );
        }
    }
    Ok(best
        .into_iter()
        .map(|(d2, o)| (points[o], d2.sqrt()))
        .collect())
}

/// Text serialization: a header line with the parameters, then one
/// `k_x k_y l_x l_y delta weight` row per edge.
pub fn encode_graph(g: &PatchGraph) -> String {
    let p = &g.params;
    let mut out = format!(
        "sfgraph n={} metric={} eta={} rho={} eps={} m0={} h={}\n",
        g.n, g.metric, p.eta, p.rho, p.eps, p.m0, p.h
    );
    for e in &g.edges {
        writeln!(
            out,
            "{} {} {} {} {} {}",
            e.k.0, e.k.1, e.l.0, e.l.1, e.delta, e.weight
        )
        .unwrap();
    }
    out
}

fn field<T: FromStr>(header: &[(String, String)], key: &str) -> Result<T> {
    let v = header
        .iter()
        .find(|(k, _)| k == key)
        .map(|(_, v)| v)
        .ok_or_else(|| Error::Parse(format!("graph header lacks {key}")))?;
    v.parse()
        .map_err(|_| Error::Parse(format!("bad value {v:?} for {key}")))
}

pub fn decode_graph(text: &str) -> Result<PatchGraph> {
    let mut lines = text.lines();
    let head = lines.next().unwrap_or_default();
    let mut parts = head.split_whitespace();
    if parts.next() != Some("sfgraph") {
        return Err(Error::Parse("missing sfgraph header".into()));
    }
    let header: Vec<(String, String)> = parts
        .filter_map(|kv| {
            kv.split_once('=')
                .map(|(k, v)| (k.to_string(), v.to_string()))
        })
        .collect();
    let n: usize = field(&header, "n")?;
    let metric: MetricKind = field(&header, "metric")?;
    let params = GraphParams {
        eta: field(&header, "eta")?,
        rho: field(&header, "rho")?,
        eps: field(&header, "eps")?,
        m0: field(&header, "m0")?,
        h: field(&header, "h")?,
    };
    params.validate()?;
    let mut edges = Vec::new();
    for (ln, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let tok: Vec<&str> = line.split_whitespace().collect();
        if tok.len() != 6 {
            return Err(Error::Parse(format!(
                "edge line {} has {} fields",
                ln + 2,
                tok.len()
            )));
        }
        let u = |s: &str| -> Result<usize> {
            let v: usize = s
                .parse()
                .map_err(|_| Error::Parse(format!("bad coordinate {s:?}")))?;
            if v >= n {
                return Err(Error::Parse(format!("coordinate {v} outside a {n}-grid")));
            }
            Ok(v)
        };
        let f = |s: &str| -> Result<f64> {
            s.parse()
                .map_err(|_| Error::Parse(format!("bad number {s:?}")))
        };
        edges.push(Edge {
            k: (u(tok[0])?, u(tok[1])?),
            l: (u(tok[2])?, u(tok[3])?),
            delta: f(tok[4])?,
            weight: f(tok[5])?,
        });
    }
    let axis = lattice(n, params.eps);
    let centers = axis
        .iter()
        .flat_map(|&i| axis.iter().map(move |&j| (i, j)))
        .collect();
    Ok(PatchGraph {
        n,
        metric,
        params,
        centers,
        edges,
    })
}

pub fn save_graph(g: &PatchGraph, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_graph(g))?;
    Ok(())
}

pub fn load_graph(path: impl AsRef<Path>) -> Result<PatchGraph> {
    decode_graph(&fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> GraphParams {
        GraphParams {
            eta: 4,
            rho: 3,
            eps: 2,
            m0: 3,
            h: 10.0,
        }
    }

    #[test]
    fn push_best_keeps_order_and_first_on_ties() {
        let mut b = Vec::new();
        for (d, i) in [(3.0, 0), (1.0, 1), (1.0, 2), (0.5, 3), (1.0, 4)] {
            push_best(&mut b, 3, d, i);
        }
        assert_eq!(b, vec![(0.5, 3), (1.0, 1), (1.0, 2)]);
    }

    #[test]
    fn single_pixel_difference() {
        let mut img = Image::zeros(8).unwrap().into_pixels();
        img[2 * 8 + 2] = 4.0;
        let img = Image::new(8, img).unwrap();
        assert_eq!(dist_ssd(&img, (2, 2), (5, 5), 3).unwrap(), 4.0);
        assert_eq!(dist_ssd(&img, (5, 5), (5, 5), 3).unwrap(), 0.0);
        assert!(dist_ssd(&img, (5, 5), (5, 5), 4).is_err());
    }

    #[test]
    fn constant_image_gives_unit_weights() {
        let img = Image::constant(16, 3.0).unwrap();
        let g = build_graph(MetricInput::Ssd(&img), &params()).unwrap();
        assert_eq!(g.centers.len(), 64);
        let mut degree = std::collections::HashMap::new();
        for e in &g.edges {
            assert_eq!(e.weight, 1.0);
            *degree.entry(e.k).or_insert(0) += 1;
        }
        assert!(degree.values().all(|&d| d <= 3));
        // the first center keeps all of its matches
        assert_eq!(degree[&(0, 0)], 3);
    }

    #[test]
    fn edges_respect_window_and_stride() {
        let img = Image::from_fn(16, |i, j| ((i * 7 + j * 3) % 5) as f64).unwrap();
        let g = build_graph(MetricInput::Ssd(&img), &params()).unwrap();
        for e in &g.edges {
            let d = torus_dist(16, e.k, e.l);
            assert!((2..=4).contains(&d));
            assert!(e.weight > 0.0 && e.weight <= 1.0);
        }
    }

    #[test]
    fn invalid_params_are_rejected() {
        let img = Image::zeros(16).unwrap();
        for p in [
            GraphParams { eps: 5, ..params() },
            GraphParams { eta: 1, ..params() },
            GraphParams { rho: 4, ..params() },
            GraphParams { h: 0.0, ..params() },
        ] {
            assert!(build_graph(MetricInput::Ssd(&img), &p).is_err());
        }
    }

    #[test]
    fn graph_text_round_trip() {
        let img = Image::from_fn(16, |i, j| ((i * j) % 7) as f64 * 1.37).unwrap();
        let g = build_graph(MetricInput::Oracle(&img), &params()).unwrap();
        let back = decode_graph(&encode_graph(&g)).unwrap();
        assert_eq!(back, g);
        assert!(decode_graph("nope").is_err());
    }

    #[test]
    fn best_matches_edge_cases() {
        let img = Image::from_fn(16, |i, j| [0.0, 1.0, 2.0, 1.0][j % 4] + 10.0 * i as f64).unwrap();
        assert!(best_matches(MetricInput::Ssd(&img), (0, 0), 0, 3, 1)
            .unwrap()
            .is_empty());
        let m = best_matches(MetricInput::Ssd(&img), (0, 0), 1, 3, 1).unwrap();
        assert_eq!(m[0].0, (0, 4));
        assert_eq!(m[0].1, 0.0);
        assert!(best_matches(MetricInput::Ssd(&img), (1, 0), 1, 3, 2).is_err());
    }
}
