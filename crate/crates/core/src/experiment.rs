//! End-to-end experiments: corrupt → atoms → graph → restore, with reports.
//!
//! A configuration is a list of `key = value` lines; `preset = name` loads a
//! named parameter set first and later keys override it. Each run writes the
//! float images (SFG1), 8-bit previews, spectrum renderings, `report.txt`
//! (deterministic given the configuration) and `timing.txt`.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use crate::atoms::{save_atoms, AtomCache, AtomParams, AtomSet};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::io::{export_gray, load_image, load_mask, save_mask, save_sfg1};
use crate::mask::FreqMask;
use crate::maskgen::{
    band_mask, equispaced_directions, scattering_mask, tomography_mask, BandNorm, BandSpec,
    LineStyle,
};
use crate::metrics::{psnr, render_spectrum};
use crate::scatter::{
    add_noise, far_field, grid_far_field, parse_wave_number, render_scene, ScatterScene,
};
use crate::similarity::{build_graph, filter_responses, GraphParams, MetricInput, MetricKind};
use crate::solver::{restore_iterated, solve, CgForm, RestoreResult, SolverConfig, Window};
use crate::spectrum::{dft2, idft2, project_known};
use crate::synth;
use crate::tv::{solve_tv, TvConfig};

pub const PRESETS: [&str; 9] = [
    "figToy",
    "figBarb",
    "figLen",
    "figScat",
    "figScatNoisy",
    "figScatBorn",
    "figScatParallel",
    "figRecompute",
    "figTomo",
];

/// Where the ground truth comes from.
#[derive(Clone, Debug, PartialEq)]
pub enum Source {
    /// Image file (SFG1, PGM, PNG, ...).
    File(PathBuf),
    Toy,
    Phantom,
    /// Scene file, rendered at `n`.
    SceneFile(PathBuf),
    Disks,
    /// Four bars of width 3 px at the given separation.
    Bars(usize),
}

impl Source {
    fn is_scene(&self) -> bool {
        matches!(self, Source::SceneFile(_) | Source::Disks | Source::Bars(_))
    }

    pub fn parse(s: &str, base: &Path) -> Result<Self> {
        let bad = || Error::Parse(format!("unknown source {s:?}"));
        Ok(match s.split_once(':') {
            Some(("synth", "toy")) => Source::Toy,
            Some(("synth", "phantom")) => Source::Phantom,
            Some(("synth", "disks")) => Source::Disks,
            Some(("synth", rest)) if rest.starts_with("bars") => {
                let sep = rest
                    .strip_prefix("bars")
                    .unwrap_or("")
                    .trim_start_matches(':');
                Source::Bars(if sep.is_empty() {
                    6
                } else {
                    sep.parse().map_err(|_| bad())?
                })
            }
            Some(("scene", path)) => Source::SceneFile(base.join(path)),
            Some(("file", path)) => Source::File(base.join(path)),
            Some(_) => return Err(bad()),
            None => Source::File(base.join(s)),
        })
    }
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Source::File(p) => write!(f, "file:{}", p.display()),
            Source::Toy => f.write_str("synth:toy"),
            Source::Phantom => f.write_str("synth:phantom"),
            Source::SceneFile(p) => write!(f, "scene:{}", p.display()),
            Source::Disks => f.write_str("synth:disks"),
            Source::Bars(s) => write!(f, "synth:bars:{s}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum MaskSpec {
    Band(BandSpec),
    /// Born far-field points for the configured wave number and directions.
    Scatter,
    Tomo {
        lines: usize,
        style: LineStyle,
        half_width: usize,
    },
    File(PathBuf),
}

impl MaskSpec {
    /// `band:standard`, `band:0-8,20-28[:euclid]`, `scatter`,
    /// `tomo:32[:radial|parallel[:half_width]]` or `file:path`.
    pub fn parse(s: &str, base: &Path) -> Result<Self> {
        let bad = || Error::Parse(format!("bad mask spec {s:?}"));
        let parts: Vec<&str> = s.split(':').collect();
        Ok(match parts.as_slice() {
            ["band", "standard"] => MaskSpec::Band(BandSpec::standard()),
            ["band", bands, rest @ ..] => {
                let norm = match rest {
                    [] | ["max"] => BandNorm::Max,
                    ["euclid"] => BandNorm::Euclidean,
                    _ => return Err(bad()),
                };
                let bands = bands
                    .split(',')
                    .map(|b| {
                        let (lo, hi) = b.split_once('-').ok_or_else(bad)?;
                        Ok((
                            lo.parse().map_err(|_| bad())?,
                            hi.parse().map_err(|_| bad())?,
                        ))
                    })
                    .collect::<Result<Vec<(f64, f64)>>>()?;
                MaskSpec::Band(BandSpec::new(bands, norm))
            }
            ["scatter"] => MaskSpec::Scatter,
            ["tomo", lines, rest @ ..] => {
                let lines = lines.parse().map_err(|_| bad())?;
                let style = match rest.first() {
                    None | Some(&"radial") => LineStyle::Radial,
                    Some(&"parallel") => LineStyle::Parallel,
                    _ => return Err(bad()),
                };
                let half_width = match rest.get(1) {
                    Some(w) => w.parse().map_err(|_| bad())?,
                    None => 0,
                };
                MaskSpec::Tomo {
                    lines,
                    style,
                    half_width,
                }
            }
            ["file", ..] => MaskSpec::File(base.join(&s[5..])),
            _ => return Err(bad()),
        })
    }
}

/// One restoration to run.
#[derive(Clone, Debug, PartialEq)]
pub enum Method {
    Tv,
    Oracle,
    /// Rounds of graph building and solving; a single round is a plain restoration.
    Schedule(Vec<MetricKind>),
}

impl Method {
    /// `tv`, `oracle`, or rounds joined by `+`, each optionally repeated with
    /// `*count`: `atom`, `atom+ssd`, `ssd*20`.
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "tv" => return Ok(Method::Tv),
            "oracle" => return Ok(Method::Oracle),
            _ => {}
        }
        let mut rounds = Vec::new();
        for part in s.split('+') {
            let (metric, count) = match part.split_once('*') {
                Some((m, c)) => (
                    m,
                    c.parse::<usize>()
                        .map_err(|_| Error::Parse(format!("bad repeat in {s:?}")))?,
                ),
                None => (part, 1),
            };
            let metric: MetricKind = metric.parse()?;
            if metric == MetricKind::Oracle {
                return Err(Error::InvalidSchedule(
                    "the oracle metric cannot be scheduled".into(),
                ));
            }
            rounds.extend(std::iter::repeat_n(metric, count));
        }
        if rounds.is_empty() {
            return Err(Error::InvalidSchedule(format!("empty schedule {s:?}")));
        }
        Ok(Method::Schedule(rounds))
    }

    fn uses_atoms(&self) -> bool {
        matches!(self, Method::Schedule(r) if r.contains(&MetricKind::Atom))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DataModel {
    /// Exact coefficients of the rendered ground truth on the mask.
    Project,
    /// Gridded far-field samples of the scene.
    Born,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub preset: Option<String>,
    pub source: Option<Source>,
    pub n: usize,
    pub mask: MaskSpec,
    pub data: DataModel,
    /// Relative noise level on the known coefficients.
    pub noise: f64,
    pub seed: u64,
    pub methods: Vec<(String, Method)>,
    pub graph: GraphParams,
    pub atoms: AtomParams,
    pub solver: SolverConfig,
    pub tv: TvConfig,
    pub k_wave: f64,
    pub dirs: usize,
    /// `None` maps the ball of radius `2k` onto the half-grid.
    pub grid_scale: Option<f64>,
    pub output: PathBuf,
    pub atom_cache: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            preset: None,
            source: None,
            n: 128,
            mask: MaskSpec::Band(BandSpec::standard()),
            data: DataModel::Project,
            noise: 0.0,
            seed: 0,
            methods: ["ssd", "atom", "tv"]
                .iter()
                .map(|m| (m.to_string(), Method::parse(m).unwrap()))
                .collect(),
            graph: GraphParams {
                eta: 20,
                rho: 7,
                eps: 5,
                m0: 10,
                h: 100.0,
            },
            atoms: AtomParams {
                count: 25,
                ..Default::default()
            },
            solver: SolverConfig::default(),
            tv: TvConfig::default(),
            k_wave: 3.0 * std::f64::consts::PI,
            dirs: 32,
            grid_scale: None,
            output: PathBuf::from("out"),
            atom_cache: None,
        }
    }
}

/// Graph parameters shared by the scattering experiments.
const SCATTER_GRAPH: GraphParams = GraphParams {
    eta: 100,
    rho: 5,
    eps: 3,
    m0: 6,
    h: 100.0,
};
/// Grid scale of the scattering experiments: the `2k` ball has radius 24 px at
/// `k = 3π`, so a 6 px separation is 0.56 wavelengths.
const SCATTER_GRID_SCALE: f64 = 8.0;

impl ExperimentConfig {
    pub fn preset(name: &str) -> Result<Self> {
        let mut c = Self {
            preset: Some(name.to_string()),
            ..Self::default()
        };
        let methods = |list: &[&str]| -> Vec<(String, Method)> {
            list.iter()
                .map(|m| {
                    (
                        m.to_string(),
                        Method::parse(m).expect("valid preset method"),
                    )
                })
                .collect()
        };
        let scatter = |c: &mut Self| {
            c.n = 128;
            c.mask = MaskSpec::Scatter;
            c.graph = SCATTER_GRAPH;
            c.atoms.count = 18;
            c.grid_scale = Some(SCATTER_GRID_SCALE);
            c.source = Some(Source::Disks);
        };
        match name {
            "figToy" => c.source = Some(Source::Toy),
            // user-supplied photograph; same parameters as the toy run
            "figBarb" => c.n = 256,
            "figLen" => {
                c.n = 64;
                c.graph = GraphParams {
                    eta: 20,
                    rho: 5,
                    eps: 1,
                    m0: 8,
                    h: 100.0,
                };
                c.atoms = AtomParams {
                    count: 18,
                    p: 20.0,
                    ..Default::default()
                };
                c.mask = MaskSpec::Band(BandSpec::new(
                    vec![(0.0, 4.0), (10.0, 14.0), (22.0, 26.0)],
                    BandNorm::Max,
                ));
            }
            "figScat" => scatter(&mut c),
            "figScatNoisy" => {
                scatter(&mut c);
                c.noise = 0.03;
            }
            "figScatBorn" => {
                scatter(&mut c);
                c.data = DataModel::Born;
            }
            "figScatParallel" => {
                scatter(&mut c);
                c.data = DataModel::Born;
                c.source = Some(Source::Bars(6));
            }
            "figRecompute" => {
                scatter(&mut c);
                c.methods = methods(&["atom", "ssd*20"]);
            }
            "figTomo" => {
                c.n = 240;
                c.source = Some(Source::Phantom);
                c.mask = MaskSpec::Tomo {
                    lines: 32,
                    style: LineStyle::Radial,
                    half_width: 0,
                };
                c.noise = 0.3;
                c.graph = GraphParams {
                    eta: 60,
                    rho: 9,
                    eps: 3,
                    m0: 10,
                    h: 100.0,
                };
                c.atoms.count = 18;
                c.methods = methods(&["ssd", "atom", "atom+ssd", "tv"]);
            }
            other => {
                return Err(Error::Parse(format!(
                    "unknown preset {other:?} (known: {})",
                    PRESETS.join(", ")
                )))
            }
        }
        Ok(c)
    }

    /// Applies one `key = value` setting; relative paths resolve against `base`.
    pub fn set(&mut self, key: &str, value: &str, base: &Path) -> Result<()> {
        fn num<T: FromStr>(key: &str, v: &str) -> Result<T> {
            v.parse()
                .map_err(|_| Error::Parse(format!("bad value {v:?} for {key}")))
        }
        let v = value.trim();
        match key.trim() {
            "preset" => {
                *self = Self {
                    output: self.output.clone(),
                    atom_cache: self.atom_cache.clone(),
                    ..Self::preset(v)?
                }
            }
            "input" | "image" | "scene" => self.source = Some(Source::parse(v, base)?),
            "n" => self.n = num(key, v)?,
            "mask" => self.mask = MaskSpec::parse(v, base)?,
            "data" => {
                self.data = match v {
                    "project" => DataModel::Project,
                    "born" => DataModel::Born,
                    _ => {
                        return Err(Error::Parse(format!(
                            "data must be project or born, got {v:?}"
                        )))
                    }
                }
            }
            "noise" => self.noise = num(key, v)?,
            "seed" => self.seed = num(key, v)?,
            "methods" => {
                self.methods = v
                    .split(',')
                    .map(str::trim)
                    .filter(|m| !m.is_empty())
                    .map(|m| Ok((m.to_string(), Method::parse(m)?)))
                    .collect::<Result<_>>()?
            }
            "eta" => self.graph.eta = num(key, v)?,
            "rho" => self.graph.rho = num(key, v)?,
            "eps" => self.graph.eps = num(key, v)?,
            "m0" => self.graph.m0 = num(key, v)?,
            "h" => self.graph.h = num(key, v)?,
            "n0" => self.atoms.count = num(key, v)?,
            "p" => self.atoms.p = num(key, v)?,
            "atom_tol" => self.atoms.tol = num(key, v)?,
            "atom_seed" => self.atoms.seed = num(key, v)?,
            "alpha" => self.solver.alpha = num(key, v)?,
            "window" => self.solver.window = v.parse::<Window>()?,
            "cg_tol" => self.solver.cg_tol = num(key, v)?,
            "cg_max_iter" => self.solver.cg_max_iter = num(key, v)?,
            "irls_eps" => self.solver.irls_eps = Some(num(key, v)?),
            "irls_rounds" => self.solver.irls_rounds = num(key, v)?,
            "cg_form" => {
                self.solver.form = match v {
                    "packed" => CgForm::Packed,
                    "projected" => CgForm::Projected,
                    _ => {
                        return Err(Error::Parse(format!(
                            "cg_form must be packed or projected, got {v:?}"
                        )))
                    }
                }
            }
            "tv_outer" => self.tv.outer_iters = num(key, v)?,
            "tv_inner" => self.tv.inner_iters = num(key, v)?,
            "tv_gamma" => self.tv.dr_gamma = num(key, v)?,
            "tv_tol" => self.tv.tol = num(key, v)?,
            "k" => self.k_wave = parse_wave_number(v)?,
            "dirs" => self.dirs = num(key, v)?,
            "grid_scale" => {
                self.grid_scale = if v == "auto" {
                    None
                } else {
                    Some(num(key, v)?)
                }
            }
            "output" => self.output = base.join(v),
            "atom_cache" => self.atom_cache = Some(base.join(v)),
            other => return Err(Error::Parse(format!("unknown config key {other:?}"))),
        }
        Ok(())
    }

    /// Parses `key = value` lines (`#` starts a comment). A `preset` line is
    /// applied before all other keys wherever it appears.
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut pairs = Vec::new();
        for (ln, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::Parse(format!("config line {}: expected key = value", ln + 1))
            })?;
            pairs.push((k.trim().to_string(), v.trim().to_string()));
        }
        let mut cfg = Self::default();
        for (k, v) in pairs.iter().filter(|(k, _)| k == "preset") {
            cfg.set(k, v, base)?;
        }
        for (k, v) in pairs.iter().filter(|(k, _)| k != "preset") {
            cfg.set(k, v, base)?;
        }
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&fs::read_to_string(path)?, base)
    }

    pub fn validate(&self) -> Result<()> {
        match &self.source {
            None => {
                return Err(Error::InvalidParameter(
                    "no input image or scene configured".into(),
                ))
            }
            Some(Source::File(p) | Source::SceneFile(p)) if !p.exists() => {
                return Err(Error::InvalidParameter(format!(
                    "input {} does not exist",
                    p.display()
                )))
            }
            _ => {}
        }
        if let MaskSpec::File(p) = &self.mask {
            if !p.exists() {
                return Err(Error::InvalidParameter(format!(
                    "mask {} does not exist",
                    p.display()
                )));
            }
        }
        if self.data == DataModel::Born && !self.source.as_ref().is_some_and(Source::is_scene) {
            return Err(Error::InvalidParameter(
                "born data needs a scene source".into(),
            ));
        }
        if self.data == DataModel::Born && self.mask != MaskSpec::Scatter {
            return Err(Error::InvalidParameter(
                "born data comes with the scatter mask".into(),
            ));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(Error::InvalidParameter("noise must be non-negative".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::InvalidParameter("no methods configured".into()));
        }
        self.graph.validate()?;
        self.solver.validate()?;
        self.tv.validate()?;
        Ok(())
    }

    pub fn grid_scale_value(&self) -> f64 {
        self.grid_scale
            .unwrap_or_else(|| crate::maskgen::default_grid_scale(self.n, self.k_wave))
    }

    /// The scatterer scene, when the source is one.
    pub fn scene(&self) -> Result<Option<ScatterScene>> {
        Ok(match self.source.as_ref() {
            Some(Source::SceneFile(p)) => Some(ScatterScene::load(p, self.n, self.k_wave)?),
            Some(Source::Disks) => Some(synth::disks_scene(self.n, self.k_wave)?),
            Some(Source::Bars(sep)) => Some(synth::bars_scene(self.n, 4, 3, *sep, self.k_wave)?),
            _ => None,
        })
    }

    fn truth(&self, scene: Option<&ScatterScene>) -> Result<Image> {
        match (self.source.as_ref(), scene) {
            (_, Some(s)) => Ok(render_scene(s)),
            (Some(Source::File(p)), _) => load_image(p),
            (Some(Source::Toy), _) => synth::toy_stripes(self.n),
            (Some(Source::Phantom), _) => synth::phantom(self.n),
            _ => Err(Error::InvalidParameter("no input configured".into())),
        }
    }

    pub fn build_mask(&self, n: usize) -> Result<FreqMask> {
        match &self.mask {
            MaskSpec::Band(spec) => band_mask(n, spec),
            MaskSpec::Scatter => {
                let dirs = equispaced_directions(self.dirs);
                scattering_mask(n, self.k_wave, &dirs, &dirs, self.grid_scale_value())
            }
            MaskSpec::Tomo {
                lines,
                style,
                half_width,
            } => tomography_mask(n, *lines, *style, *half_width),
            MaskSpec::File(p) => load_mask(p, false),
        }
    }
}

/// Outcome of one experiment.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Report {
    /// Deterministic `key=value` entries in output order.
    pub entries: Vec<(String, String)>,
    /// Wall-clock seconds per stage.
    pub timings: Vec<(String, f64)>,
    /// Written files, relative to the output directory.
    pub files: Vec<String>,
}

impl Report {
    fn put(&mut self, key: impl Into<String>, value: impl fmt::Display) {
        self.entries.push((key.into(), value.to_string()));
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn get_f64(&self, key: &str) -> Option<f64> {
        self.get(key).and_then(|v| v.parse().ok())
    }

    /// PSNR of a method (`corrupted` for the input) against the ground truth.
    pub fn psnr(&self, method: &str) -> Option<f64> {
        self.get_f64(&format!("psnr.{method}"))
    }

    pub fn timing(&self, key: &str) -> Option<f64> {
        self.timings.iter().find(|(k, _)| k == key).map(|(_, v)| *v)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.entries {
            out.push_str(&format!("{k}={v}\n"));
        }
        for f in &self.files {
            out.push_str(&format!("file={f}\n"));
        }
        out
    }

    pub fn timing_text(&self) -> String {
        self.timings
            .iter()
            .map(|(k, v)| format!("{k}={v:.6}\n"))
            .collect()
    }
}

/// Tags an error with the stage it came from.
fn stage<T>(name: &str, r: Result<T>) -> Result<T> {
    r.map_err(|e| Error::Stage {
        stage: name.to_string(),
        source: Box::new(e),
    })
}

/// File-name-safe version of a method label.
fn slug(name: &str) -> String {
    name.replace('+', "_then_").replace('*', "x")
}

struct Writer<'a> {
    dir: &'a Path,
    report: &'a mut Report,
}

impl Writer<'_> {
    fn image(&mut self, name: &str, img: &Image) -> Result<()> {
        for (file, res) in [
            (
                format!("{name}.sfg1"),
                save_sfg1(img, self.dir.join(format!("{name}.sfg1"))),
            ),
            (
                format!("{name}.png"),
                export_gray(img, self.dir.join(format!("{name}.png"))),
            ),
            (
                format!("{name}_spectrum.png"),
                export_gray(
                    &render_spectrum(img),
                    self.dir.join(format!("{name}_spectrum.png")),
                ),
            ),
        ] {
            res?;
            self.report.files.push(file);
        }
        Ok(())
    }
}

fn record_restoration(
    report: &mut Report,
    name: &str,
    res: &RestoreResult,
    g: &Image,
    mask: &FreqMask,
    truth: &Image,
) -> Result<()> {
    report.put(format!("psnr.{name}"), psnr(&res.restored, truth)?);
    report.put(
        format!("energy.{name}.initial"),
        res.energy_trace.first().copied().unwrap_or(0.0),
    );
    report.put(
        format!("energy.{name}.final"),
        res.energy_trace.last().copied().unwrap_or(0.0),
    );
    report.put(format!("iterations.{name}"), res.iterations);
    report.put(format!("converged.{name}"), res.converged);
    if let Some(eps) = res.irls_eps {
        report.put(format!("irls_eps.{name}"), eps);
    }
    report.put(
        format!("constraint.{name}"),
        constraint_deviation(&res.restored, g, mask)?,
    );
    Ok(())
}

/// Largest deviation of the known coefficients of `u` from those of `g`,
/// relative to `‖g‖`.
pub fn constraint_deviation(u: &Image, g: &Image, mask: &FreqMask) -> Result<f64> {
    let (su, sg) = (dft2(u), dft2(g));
    let worst = su
        .raw()
        .iter()
        .zip(sg.raw())
        .zip(mask.raw())
        .filter(|(_, &known)| known)
        .map(|((a, b), _)| (a - b).norm())
        .fold(0.0, f64::max);
    Ok(worst / g.norm().max(f64::MIN_POSITIVE))
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Report> {
    stage("config", cfg.validate())?;
    let out = cfg.output.as_path();
    stage("output", fs::create_dir_all(out).map_err(Error::from))?;
    let mut report = Report::default();
    let total = Instant::now();

    let scene = stage("input", cfg.scene())?;
    let truth = stage("input", cfg.truth(scene.as_ref()))?;
    let n = truth.n();
    report.put("preset", cfg.preset.as_deref().unwrap_or("none"));
    report.put("source", cfg.source.as_ref().expect("validated"));
    report.put("n", n);

    let t = Instant::now();
    let (mask, g_clean) = match (cfg.data, scene.as_ref()) {
        (DataModel::Born, Some(scene)) => {
            let dirs = equispaced_directions(cfg.dirs);
            let samples = stage(
                "scatter",
                far_field(scene, &dirs, &dirs, cfg.grid_scale_value()),
            )?;
            let gridded = stage("scatter", grid_far_field(&samples, n))?;
            report.put("scatter.samples", samples.len());
            report.put("scatter.out_of_range", gridded.out_of_range);
            (gridded.mask, stage("scatter", idft2(&gridded.spectrum))?)
        }
        _ => {
            let mask = stage("mask", cfg.build_mask(n))?;
            let g = stage("corrupt", project_known(&truth, &mask))?;
            (mask, g)
        }
    };
    let g = if cfg.noise > 0.0 {
        let noisy = stage(
            "corrupt",
            add_noise(&dft2(&g_clean), &mask, cfg.noise, truth.norm(), cfg.seed),
        )?;
        stage("corrupt", idft2(&noisy))?
    } else {
        g_clean
    };
    report
        .timings
        .push(("corrupt".into(), t.elapsed().as_secs_f64()));
    report.put("mask.known", mask.count());
    report.put("noise", cfg.noise);
    report.put("psnr.corrupted", stage("metrics", psnr(&g, &truth))?);

    let mut w = Writer {
        dir: out,
        report: &mut report,
    };
    stage("output", w.image("original", &truth))?;
    stage("output", w.image("corrupted", &g))?;
    stage("output", save_mask(&mask, out.join("mask.pbm")))?;
    report.files.push("mask.pbm".into());

    let atoms: Option<AtomSet> = if cfg.methods.iter().any(|(_, m)| m.uses_atoms()) {
        let t = Instant::now();
        let set = match &cfg.atom_cache {
            Some(dir) => stage(
                "atoms",
                AtomCache::new(dir).get_or_compute(&mask, &cfg.atoms),
            )?,
            None => stage("atoms", crate::atoms::compute_atoms(&mask, &cfg.atoms))?,
        };
        report
            .timings
            .push(("atoms".into(), t.elapsed().as_secs_f64()));
        stage("output", save_atoms(&set, out.join("atoms.sfa")))?;
        report.files.push("atoms.sfa".into());
        report.put("atoms.count", set.len());
        report.put("atoms.p", set.p());
        Some(set)
    } else {
        None
    };

    for (name, method) in &cfg.methods {
        let label = format!("restore {name}");
        let res = match method {
            Method::Tv => {
                let t = Instant::now();
                let r = stage(&label, solve_tv(&g, &mask, &cfg.tv))?;
                report
                    .timings
                    .push(("tv".into(), t.elapsed().as_secs_f64()));
                r
            }
            Method::Schedule(rounds) if rounds.len() > 1 => {
                let t = Instant::now();
                let it = stage(
                    &label,
                    restore_iterated(
                        &g,
                        &mask,
                        atoms.as_ref(),
                        &cfg.graph,
                        rounds,
                        &cfg.solver,
                        Some(&truth),
                    ),
                )?;
                report
                    .timings
                    .push((format!("schedule.{name}"), t.elapsed().as_secs_f64()));
                for (i, p) in it.round_psnr.iter().enumerate() {
                    report.put(format!("psnr.{name}.round{}", i + 1), p);
                }
                it.result
            }
            Method::Oracle | Method::Schedule(_) => {
                let t = Instant::now();
                let stack;
                let input = match method {
                    Method::Oracle => MetricInput::Oracle(&truth),
                    Method::Schedule(r) if r[0] == MetricKind::Atom => {
                        stack = stage(
                            &label,
                            filter_responses(&g, atoms.as_ref().expect("atoms computed")),
                        )?;
                        MetricInput::Atom(&stack)
                    }
                    _ => MetricInput::Ssd(&g),
                };
                let graph = stage(&label, build_graph(input, &cfg.graph))?;
                report
                    .timings
                    .push((format!("graph.{name}"), t.elapsed().as_secs_f64()));
                report.put(format!("edges.{name}"), graph.edges.len());
                let t = Instant::now();
                let r = stage(&label, solve(&g, &mask, &graph, &cfg.solver))?;
                report
                    .timings
                    .push((format!("solve.{name}"), t.elapsed().as_secs_f64()));
                r
            }
        };
        stage(
            &label,
            record_restoration(&mut report, name, &res, &g, &mask, &truth),
        )?;
        let mut w = Writer {
            dir: out,
            report: &mut report,
        };
        stage("output", w.image(&slug(name), &res.restored))?;
    }
    report
        .timings
        .push(("total".into(), total.elapsed().as_secs_f64()));
    report.files.push("report.txt".into());
    report.files.push("timing.txt".into());
    stage(
        "output",
        fs::write(out.join("report.txt"), report.to_text()).map_err(Error::from),
    )?;
    stage(
        "output",
        fs::write(out.join("timing.txt"), report.timing_text()).map_err(Error::from),
    )?;
    Ok(report)
}
