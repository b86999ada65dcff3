//! Minimization of the non-local patch energy over the missing frequencies.
//!
//! For an image `u` and a patch graph the energy is
//! `E(u) = Σ_e w_e Σ_t ψ(t)² |u(x_k + t) - u(x_ℓ + t)|^α`, with `t` running over
//! the `ρ×ρ` patch window and periodic wrap. The restoration is `g + v` with
//! `v` ranging over images whose spectrum vanishes on the mask.

use std::str::FromStr;
use std::time::{Duration, Instant};

use crate::atoms::AtomSet;
use crate::error::{Error, Result};
use crate::image::Image;
use crate::mask::{FreqMask, MaskBasis};
use crate::metrics::psnr;
use crate::similarity::{
    build_graph, filter_responses, GraphParams, MetricInput, MetricKind, PatchGraph,
};
use crate::spectrum::{project_known, project_missing};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Window {
    Indicator,
    /// Separable Hann profile that stays positive on the whole patch.
    Hann,
}

impl FromStr for Window {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "indicator" => Ok(Window::Indicator),
            "hann" => Ok(Window::Hann),
            other => Err(Error::Parse(format!("unknown window {other:?}"))),
        }
    }
}

/// How the constraint `v ∈ 𝓜⊥` is enforced inside conjugate gradient.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CgForm {
    /// Iterate on real coordinates of `𝓜⊥`.
    Packed,
    /// Iterate on images, projecting after every operator application.
    Projected,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolverConfig {
    /// Exponent of the patch differences, 1 or 2.
    pub alpha: u32,
    pub window: Window,
    /// Relative residual at which conjugate gradient stops.
    pub cg_tol: f64,
    pub cg_max_iter: usize,
    /// Smoothing floor for α = 1; `None` uses 1e-3 times the median
    /// absolute patch difference of the input.
    pub irls_eps: Option<f64>,
    pub irls_rounds: usize,
    pub form: CgForm,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            alpha: 2,
            window: Window::Indicator,
            cg_tol: 1e-6,
            cg_max_iter: 500,
            irls_eps: None,
            irls_rounds: 20,
            form: CgForm::Packed,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.alpha != 1 && self.alpha != 2 {
            return Err(Error::InvalidParameter(format!(
                "alpha must be 1 or 2, got {}",
                self.alpha
            )));
        }
        if !(self.cg_tol > 0.0) {
            return Err(Error::InvalidParameter("cg_tol must be positive".into()));
        }
        if let Some(e) = self.irls_eps {
            if !(e > 0.0) {
                return Err(Error::InvalidParameter("irls_eps must be positive".into()));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct RestoreResult {
    /// `g + v`.
    pub restored: Image,
    /// Correction, spectrally supported off the mask.
    pub v: Image,
    /// Energy after each iteration, starting with the energy of `g`. For
    /// α = 1 these are smoothed energies, one per reweighting round.
    pub energy_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Smoothing floor used by the α = 1 solver.
    pub irls_eps: Option<f64>,
    pub wall_time: Duration,
}

/// Squared window values over the patch, as `(di, dj, ψ²)`.
fn window_terms(rho: usize, window: Window) -> Vec<(i64, i64, f64)> {
    let r = (rho / 2) as i64;
    let profile = |t: i64| match window {
        Window::Indicator => 1.0,
        Window::Hann => 0.5 * (1.0 + (std::f64::consts::PI * t as f64 / (r + 1) as f64).cos()),
    };
    let mut out = Vec::with_capacity(rho * rho);
    for di in -r..=r {
        for dj in -r..=r {
            let psi = profile(di) * profile(dj);
            out.push((di, dj, psi * psi));
        }
    }
    out
}

/// The pixel pairs compared by the energy, in a fixed order (edge-major, then
/// window row-major), each with its coefficient `w_e ψ(t)²`.
struct Terms {
    n: usize,
    pairs: Vec<(u32, u32)>,
    coeffs: Vec<f64>,
}

impl Terms {
    fn new(graph: &PatchGraph, window: Window) -> Self {
        let n = graph.n;
        let win = window_terms(graph.params.rho, window);
        let wrap = |a: usize, d: i64| (a as i64 + d).rem_euclid(n as i64) as usize;
        let mut pairs = Vec::with_capacity(graph.edges.len() * win.len());
        let mut coeffs = Vec::with_capacity(graph.edges.len() * win.len());
        for e in &graph.edges {
            for &(di, dj, psi2) in &win {
                let a = wrap(e.k.0, di) * n + wrap(e.k.1, dj);
                let b = wrap(e.l.0, di) * n + wrap(e.l.1, dj);
                pairs.push((a as u32, b as u32));
                coeffs.push(e.weight * psi2);
            }
        }
        Self { n, pairs, coeffs }
    }

    fn diffs(&self, u: &[f64]) -> Vec<f64> {
        self.pairs
            .iter()
            .map(|&(a, b)| u[a as usize] - u[b as usize])
            .collect()
    }

    /// `Σ c_i ω_i (u_a - u_b)² `.
    fn quadratic(&self, u: &[f64], omega: Option<&[f64]>) -> f64 {
        let mut s = 0.0;
        for (i, &(a, b)) in self.pairs.iter().enumerate() {
            let d = u[a as usize] - u[b as usize];
            let c = self.coeffs[i] * omega.map_or(1.0, |o| o[i]);
            s += c * d * d;
        }
        s
    }

    /// `Q u` where `uᵀ Q u` is [`Terms::quadratic`]; accumulated sequentially
    /// so the result does not depend on scheduling.
    fn apply(&self, u: &[f64], omega: Option<&[f64]>) -> Vec<f64> {
        let mut out = vec![0.0; self.n * self.n];
        for (i, &(a, b)) in self.pairs.iter().enumerate() {
            let (a, b) = (a as usize, b as usize);
            let c = self.coeffs[i] * omega.map_or(1.0, |o| o[i]) * (u[a] - u[b]);
            out[a] += c;
            out[b] -= c;
        }
        out
    }
}

fn check_graph(u: &Image, graph: &PatchGraph) -> Result<()> {
    if u.n() != graph.n {
        return Err(Error::SizeMismatch {
            expected: graph.n,
            found: u.n(),
        });
    }
    Ok(())
}

pub fn energy(u: &Image, graph: &PatchGraph, cfg: &SolverConfig) -> Result<f64> {
    check_graph(u, graph)?;
    cfg.validate()?;
    let terms = Terms::new(graph, cfg.window);
    Ok(match cfg.alpha {
        2 => terms.quadratic(u.pixels(), None),
        _ => terms
            .diffs(u.pixels())
            .iter()
            .zip(&terms.coeffs)
            .map(|(d, c)| c * d.abs())
            .sum(),
    })
}

/// Gradient of [`energy`] with respect to the pixel values (for α = 1 the
/// subgradient with `sign(0) = 0`).
pub fn gradient(u: &Image, graph: &PatchGraph, cfg: &SolverConfig) -> Result<Image> {
    check_graph(u, graph)?;
    cfg.validate()?;
    let terms = Terms::new(graph, cfg.window);
    let px = match cfg.alpha {
        2 => terms
            .apply(u.pixels(), None)
            .into_iter()
            .map(|v| 2.0 * v)
            .collect(),
        _ => {
            let mut out = vec![0.0; terms.n * terms.n];
            for (i, &(a, b)) in terms.pairs.iter().enumerate() {
                let d = u.pixels()[a as usize] - u.pixels()[b as usize];
                let c = terms.coeffs[i] * d.signum() * (d != 0.0) as u8 as f64;
                out[a as usize] += c;
                out[b as usize] -= c;
            }
            out
        }
    };
    Ok(Image::from_raw(u.n(), px))
}

/// Hessian of the quadratic (α = 2) energy applied to `u`.
pub fn apply_hessian(u: &Image, graph: &PatchGraph, cfg: &SolverConfig) -> Result<Image> {
    check_graph(u, graph)?;
    let terms = Terms::new(graph, cfg.window);
    Ok(Image::from_raw(
        u.n(),
        terms
            .apply(u.pixels(), None)
            .into_iter()
            .map(|v| 2.0 * v)
            .collect(),
    ))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

struct CgOutcome {
    x: Vec<f64>,
    trace: Vec<f64>,
    iterations: usize,
    converged: bool,
}

/// Conjugate gradient for `A x = b` starting at `x0`, tracking the quadratic
/// `e0 - 2 bᵀx + xᵀA x` (the energy when `e0` is the energy at `x = 0`).
/// Stops once `‖b - A x‖ ≤ tol ‖b‖`.
fn conjugate_gradient(
    apply: impl Fn(&[f64]) -> Vec<f64>,
    b: &[f64],
    x0: Vec<f64>,
    e0: f64,
    tol: f64,
    max_iter: usize,
) -> CgOutcome {
    let bnorm = dot(b, b).sqrt();
    let mut x = x0;
    let ax = apply(&x);
    let mut r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
    let value = |x: &[f64], r: &[f64]| e0 - dot(b, x) - dot(r, x);
    let mut trace = vec![value(&x, &r)];
    if bnorm == 0.0 {
        return CgOutcome {
            x,
            trace,
            iterations: 0,
            converged: true,
        };
    }
    let mut p = r.clone();
    let mut rr = dot(&r, &r);
    let mut best = (trace[0], x.clone());
    for it in 0..max_iter {
        if rr.sqrt() <= tol * bnorm {
            return CgOutcome {
                x,
                trace,
                iterations: it,
                converged: true,
            };
        }
        let ap = apply(&p);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            // the residual is (numerically) orthogonal to the range
            break;
        }
        let step = rr / pap;
        for i in 0..x.len() {
            x[i] += step * p[i];
            r[i] -= step * ap[i];
        }
        let rr_new = dot(&r, &r);
        let beta = rr_new / rr;
        for i in 0..p.len() {
            p[i] = r[i] + beta * p[i];
        }
        rr = rr_new;
        let e = value(&x, &r);
        trace.push(e);
        if e < best.0 {
            best = (e, x.clone());
        }
    }
    let converged = rr.sqrt() <= tol * bnorm;
    if !converged {
        log::warn!(
            "conjugate gradient stopped at relative residual {:.3e} after {} iterations",
            rr.sqrt() / bnorm,
            trace.len() - 1
        );
        x = best.1;
    }
    CgOutcome {
        iterations: trace.len() - 1,
        x,
        trace,
        converged,
    }
}

/// Projects `g` onto the known subspace, warning when that changes it.
fn admissible(g: &Image, mask: &FreqMask) -> Result<Image> {
    let pg = project_known(g, mask)?;
    let off = g.sub(&pg)?.norm();
    if off <= 1e-12 * g.norm() {
        return Ok(g.clone());
    }
    if off > 1e-9 * g.norm() {
        log::warn!("input has energy off the mask ({off:.3e}); projecting it first");
    }
    Ok(pg)
}

/// Minimizes the weighted quadratic `Σ c ω (u_a - u_b)²` over `u = g + v`.
fn solve_weighted(
    g: &Image,
    mask: &FreqMask,
    terms: &Terms,
    omega: Option<&[f64]>,
    v0: Option<&Image>,
    cfg: &SolverConfig,
) -> Result<(Image, CgOutcome)> {
    let n = g.n();
    let e0 = terms.quadratic(g.pixels(), omega);
    let qg = terms.apply(g.pixels(), omega);
    match cfg.form {
        CgForm::Packed => {
            let basis = MaskBasis::missing(mask);
            let b: Vec<f64> = basis
                .pack_image(&Image::from_raw(n, qg))
                .into_iter()
                .map(|x| -x)
                .collect();
            let x0 = match v0 {
                Some(v) => basis.pack_image(v),
                None => vec![0.0; basis.dof()],
            };
            let apply = |z: &[f64]| {
                let v = basis.unpack_image(z).expect("dimension fixed by the basis");
                basis.pack_image(&Image::from_raw(n, terms.apply(v.pixels(), omega)))
            };
            let out = conjugate_gradient(apply, &b, x0, e0, cfg.cg_tol, cfg.cg_max_iter);
            let v = basis.unpack_image(&out.x)?;
            Ok((v, out))
        }
        CgForm::Projected => {
            let b: Vec<f64> = project_missing(&Image::from_raw(n, qg), mask)?
                .into_pixels()
                .into_iter()
                .map(|x| -x)
                .collect();
            let x0 = match v0 {
                Some(v) => project_missing(v, mask)?.into_pixels(),
                None => vec![0.0; n * n],
            };
            let apply = |x: &[f64]| {
                let v =
                    project_missing(&Image::from_raw(n, x.to_vec()), mask).expect("sizes match");
                let q = Image::from_raw(n, terms.apply(v.pixels(), omega));
                project_missing(&q, mask)
                    .expect("sizes match")
                    .into_pixels()
            };
            let out = conjugate_gradient(apply, &b, x0, e0, cfg.cg_tol, cfg.cg_max_iter);
            let v = project_missing(&Image::from_raw(n, out.x.clone()), mask)?;
            Ok((v, out))
        }
    }
}

fn check_inputs(g: &Image, mask: &FreqMask, graph: &PatchGraph) -> Result<()> {
    mask.check_side(g.n())?;
    check_graph(g, graph)
}

/// α = 2: conjugate gradient on the quadratic energy.
pub fn solve_quadratic(
    g: &Image,
    mask: &FreqMask,
    graph: &PatchGraph,
    cfg: &SolverConfig,
) -> Result<RestoreResult> {
    let start = Instant::now();
    cfg.validate()?;
    check_inputs(g, mask, graph)?;
    let g = admissible(g, mask)?;
    let terms = Terms::new(graph, cfg.window);
    let (v, out) = solve_weighted(&g, mask, &terms, None, None, cfg)?;
    Ok(RestoreResult {
        restored: g.add(&v)?,
        v,
        energy_trace: out.trace,
        iterations: out.iterations,
        converged: out.converged,
        irls_eps: None,
        wall_time: start.elapsed(),
    })
}

/// Huber-smoothed absolute value: `|d|` above `eps`, `d²/(2 eps) + eps/2` below.
fn smoothed_abs(d: f64, eps: f64) -> f64 {
    let a = d.abs();
    if a >= eps {
        a
    } else {
        d * d / (2.0 * eps) + eps / 2.0
    }
}

fn median(mut xs: Vec<f64>) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    let mid = xs.len() / 2;
    let (_, m, _) = xs.select_nth_unstable_by(mid, f64::total_cmp);
    *m
}

/// α = 1 by iteratively reweighted least squares on the Huber-smoothed
/// energy; each round solves a weighted quadratic with per-term weights
/// `1 / max(|d|, eps)`, warm-started from the previous round.
pub fn solve_l1(
    g: &Image,
    mask: &FreqMask,
    graph: &PatchGraph,
    cfg: &SolverConfig,
) -> Result<RestoreResult> {
    let start = Instant::now();
    cfg.validate()?;
    check_inputs(g, mask, graph)?;
    let g = admissible(g, mask)?;
    let n = g.n();
    let terms = Terms::new(graph, cfg.window);
    let d0: Vec<f64> = terms.diffs(g.pixels()).into_iter().map(f64::abs).collect();
    let eps = match cfg.irls_eps {
        Some(e) => e,
        None => {
            let mean = d0.iter().sum::<f64>() / d0.len().max(1) as f64;
            let m = median(d0.clone());
            if m > 0.0 {
                1e-3 * m
            } else {
                1e-3 * mean
            }
        }
    };
    let smoothed = |u: &[f64]| -> f64 {
        terms
            .diffs(u)
            .iter()
            .zip(&terms.coeffs)
            .map(|(d, c)| c * smoothed_abs(*d, eps))
            .sum()
    };
    let zero = Image::from_raw(n, vec![0.0; n * n]);
    if eps == 0.0 {
        // every compared pair already agrees
        return Ok(RestoreResult {
            restored: g.clone(),
            v: zero,
            energy_trace: vec![0.0],
            iterations: 0,
            converged: true,
            irls_eps: Some(0.0),
            wall_time: start.elapsed(),
        });
    }
    let mut v = zero;
    let mut u = g.clone();
    let mut trace = vec![smoothed(u.pixels())];
    let mut iterations = 0;
    let mut converged = false;
    for _ in 0..cfg.irls_rounds {
        let omega: Vec<f64> = terms
            .diffs(u.pixels())
            .into_iter()
            .map(|d| 1.0 / d.abs().max(eps))
            .collect();
        let (next, out) = solve_weighted(&g, mask, &terms, Some(&omega), Some(&v), cfg)?;
        iterations += out.iterations;
        let next_u = g.add(&next)?;
        let e = smoothed(next_u.pixels());
        let prev = *trace.last().expect("trace starts non-empty");
        v = next;
        u = next_u;
        trace.push(e);
        if prev - e <= 1e-6 * prev.abs() {
            converged = true;
            break;
        }
    }
    Ok(RestoreResult {
        restored: u,
        v,
        energy_trace: trace,
        iterations,
        converged,
        irls_eps: Some(eps),
        wall_time: start.elapsed(),
    })
}

/// Dispatches on `cfg.alpha`.
pub fn solve(
    g: &Image,
    mask: &FreqMask,
    graph: &PatchGraph,
    cfg: &SolverConfig,
) -> Result<RestoreResult> {
    match cfg.alpha {
        1 => solve_l1(g, mask, graph, cfg),
        _ => solve_quadratic(g, mask, graph, cfg),
    }
}

/// Result of a multi-round restoration.
#[derive(Clone, Debug)]
pub struct IteratedResult {
    pub result: RestoreResult,
    /// One result per round, in order.
    pub rounds: Vec<RestoreResult>,
    /// PSNR of each round's restoration against the ground truth, if given.
    pub round_psnr: Vec<f64>,
}

/// Rebuilds the graph before each round — from `g` in the first round and
/// from the previous restoration afterwards — and re-solves from `g`. The
/// atom metric is only allowed first: atom responses of any restoration equal
/// those of `g`, so recomputing them changes nothing.
pub fn restore_iterated(
    g: &Image,
    mask: &FreqMask,
    atoms: Option<&AtomSet>,
    params: &GraphParams,
    schedule: &[MetricKind],
    cfg: &SolverConfig,
    truth: Option<&Image>,
) -> Result<IteratedResult> {
    if schedule.is_empty() {
        return Err(Error::InvalidSchedule("schedule is empty".into()));
    }
    for (i, m) in schedule.iter().enumerate() {
        match m {
            MetricKind::Atom if i > 0 => {
                return Err(Error::InvalidSchedule(format!(
                    "round {}: the atom metric is only meaningful in the first round",
                    i + 1
                )))
            }
            MetricKind::Atom if atoms.is_none() => {
                return Err(Error::InvalidSchedule(
                    "atom round requested without atoms".into(),
                ))
            }
            MetricKind::Oracle => {
                return Err(Error::InvalidSchedule(
                    "schedules accept only atom and ssd rounds".into(),
                ))
            }
            _ => {}
        }
    }
    let g = admissible(g, mask)?;
    let mut current = g.clone();
    let mut rounds = Vec::with_capacity(schedule.len());
    let mut round_psnr = Vec::new();
    for m in schedule {
        let graph = match m {
            MetricKind::Atom => {
                let stack = filter_responses(&g, atoms.expect("checked above"))?;
                build_graph(MetricInput::Atom(&stack), params)?
            }
            _ => build_graph(MetricInput::Ssd(&current), params)?,
        };
        let res = solve(&g, mask, &graph, cfg)?;
        if let Some(t) = truth {
            round_psnr.push(psnr(&res.restored, t)?);
        }
        current = res.restored.clone();
        rounds.push(res);
    }
    Ok(IteratedResult {
        result: rounds.last().expect("schedule is non-empty").clone(),
        rounds,
        round_psnr,
    })
}
