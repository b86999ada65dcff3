use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;

use spectrafill::atoms::{load_atoms, save_atoms, AtomCache, AtomParams};
use spectrafill::experiment::{run_experiment, ExperimentConfig, Source};
use spectrafill::io::{export_gray, load_image, load_mask, save_mask, save_sfg1};
use spectrafill::maskgen::equispaced_directions;
use spectrafill::metrics::{psnr, render_spectrum};
use spectrafill::scatter::{add_noise, far_field, grid_far_field};
use spectrafill::similarity::{
    build_graph, filter_responses, load_graph, save_graph, GraphParams, MetricInput, MetricKind,
};
use spectrafill::solver::{solve, SolverConfig, Window};
use spectrafill::tv::{solve_tv, TvConfig};
use spectrafill::{dft2, idft2, project_known, Error, Result};

/// Restore images with missing Fourier coefficients.
#[derive(Parser)]
#[command(name = "spectrafill", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a frequency mask.
    Mask {
        /// Side length.
        #[arg(long, default_value_t = 128)]
        n: usize,
        /// `band:standard`, `band:0-8,20-28[:euclid]`, `scatter` or `tomo:32[:radial|parallel[:hw]]`.
        #[arg(long, default_value = "band:standard")]
        spec: String,
        #[command(flatten)]
        scatter: ScatterArgs,
        /// Output (`.pbm` for a bitmap, anything else for text).
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Compute adapted atoms for a mask.
    Atoms {
        #[arg(long)]
        mask: PathBuf,
        #[arg(long, default_value_t = 18)]
        n0: usize,
        #[arg(long, default_value_t = 4.0)]
        p: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Reuse or fill an atom cache directory.
        #[arg(long)]
        cache: Option<PathBuf>,
        /// Also export each atom (centred) as PNG into this directory.
        #[arg(long)]
        export: Option<PathBuf>,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Build a patch graph.
    Graph {
        /// Image the distances are computed on.
        #[arg(long)]
        input: PathBuf,
        /// `atom`, `ssd` or `oracle`.
        #[arg(long, default_value = "atom")]
        metric: MetricKind,
        /// Atom file, for the atom metric.
        #[arg(long)]
        atoms: Option<PathBuf>,
        #[command(flatten)]
        graph: GraphArgs,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Restore with the non-local energy on a given graph.
    Restore {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        mask: PathBuf,
        #[arg(long)]
        graph: PathBuf,
        /// Exponent of the patch differences, 1 or 2.
        #[arg(long, default_value_t = 2)]
        alpha: u32,
        /// `indicator` or `gaussian`.
        #[arg(long, default_value = "indicator")]
        window: Window,
        #[arg(long, default_value_t = 500)]
        max_iter: usize,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Restore with total variation under the same constraint.
    Tv {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        mask: PathBuf,
        #[arg(long, default_value_t = 300)]
        iters: usize,
        #[arg(long, default_value_t = 10.0)]
        gamma: f64,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Simulate Born far-field data of a scene and grid it.
    Scatter {
        /// Scene file, `synth:disks` or `synth:bars[:separation]`.
        #[arg(long)]
        scene: String,
        #[arg(long, default_value_t = 128)]
        n: usize,
        #[command(flatten)]
        scatter: ScatterArgs,
        /// Relative noise on the gridded coefficients.
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Where to write the gridded mask.
        #[arg(long)]
        mask_out: PathBuf,
        /// Rendered ground truth.
        #[arg(long)]
        truth_out: Option<PathBuf>,
        /// Corrupted image (inverse transform of the gridded data).
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Keep only the masked coefficients of an image, optionally adding noise.
    Corrupt {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        mask: PathBuf,
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Print the PSNR (peak 255) between two images.
    Psnr { a: PathBuf, b: PathBuf },
    /// Render the log-magnitude spectrum of an image.
    Spectrum {
        input: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Run a configured experiment and print its report.
    Run {
        /// Config file of `key = value` lines.
        config: Option<PathBuf>,
        /// Start from a named preset instead of (or under) a config file.
        #[arg(long)]
        preset: Option<String>,
        /// Override a key, e.g. `--set noise=0.03`.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

#[derive(Args)]
struct ScatterArgs {
    /// Wave number, e.g. `3pi`.
    #[arg(long, default_value = "3pi")]
    k: String,
    /// Number of incident and observation directions.
    #[arg(long, default_value_t = 32)]
    dirs: usize,
    /// Grid scale; defaults to mapping the `2k` ball onto the half-grid.
    #[arg(long)]
    grid_scale: Option<f64>,
}

#[derive(Args)]
struct GraphArgs {
    #[arg(long, default_value_t = 20)]
    eta: usize,
    #[arg(long, default_value_t = 7)]
    rho: usize,
    #[arg(long, default_value_t = 5)]
    eps: usize,
    #[arg(long, default_value_t = 10)]
    m0: usize,
    #[arg(long, default_value_t = 100.0)]
    h: f64,
}

impl ScatterArgs {
    fn apply(&self, cfg: &mut ExperimentConfig) -> Result<()> {
        cfg.set("k", &self.k, Path::new("."))?;
        cfg.dirs = self.dirs;
        cfg.grid_scale = self.grid_scale;
        Ok(())
    }
}

fn write_image(img: &spectrafill::Image, path: &Path) -> Result<()> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("sfg1") | None => save_sfg1(img, path),
        _ => export_gray(img, path),
    }
}

fn run(cli: Cli) -> Result<()> {
    let here = Path::new(".");
    match cli.command {
        Command::Mask {
            n,
            spec,
            scatter,
            output,
        } => {
            let mut cfg = ExperimentConfig::default();
            cfg.set("mask", &spec, here)?;
            scatter.apply(&mut cfg)?;
            let mask = cfg.build_mask(n)?;
            save_mask(&mask, &output)?;
            println!("known={}", mask.count());
        }
        Command::Atoms {
            mask,
            n0,
            p,
            seed,
            cache,
            export,
            output,
        } => {
            let mask = load_mask(&mask, false)?;
            let params = AtomParams {
                count: n0,
                p,
                seed,
                ..Default::default()
            };
            let set = match cache {
                Some(dir) => AtomCache::new(dir).get_or_compute(&mask, &params)?,
                None => spectrafill::atoms::compute_atoms(&mask, &params)?,
            };
            save_atoms(&set, &output)?;
            for (i, m) in set.moments().iter().enumerate() {
                println!("moment.{i}={m}");
            }
            if let Some(dir) = export {
                std::fs::create_dir_all(&dir)?;
                for (i, view) in spectrafill::atoms::atom_report(&set).iter().enumerate() {
                    let (lo, hi) = view.atom.min_max();
                    let peak = hi.max(-lo).max(f64::MIN_POSITIVE);
                    export_gray(
                        &view.atom.map(|v| 127.5 + 127.5 * v / peak),
                        &dir.join(format!("atom{i:02}.png")),
                    )?;
                }
            }
        }
        Command::Graph {
            input,
            metric,
            atoms,
            graph,
            output,
        } => {
            let img = load_image(&input)?;
            let params = GraphParams {
                eta: graph.eta,
                rho: graph.rho,
                eps: graph.eps,
                m0: graph.m0,
                h: graph.h,
            };
            let stack;
            let metric_input = match metric {
                MetricKind::Atom => {
                    let path = atoms.ok_or_else(|| {
                        Error::InvalidParameter("the atom metric needs --atoms".into())
                    })?;
                    stack = filter_responses(&img, &load_atoms(path)?)?;
                    MetricInput::Atom(&stack)
                }
                // the oracle metric is SSD on a clean image
                MetricKind::Oracle => MetricInput::Oracle(&img),
                MetricKind::Ssd => MetricInput::Ssd(&img),
            };
            let g = build_graph(metric_input, &params)?;
            save_graph(&g, &output)?;
            println!("edges={}", g.edges.len());
        }
        Command::Restore {
            input,
            mask,
            graph,
            alpha,
            window,
            max_iter,
            output,
        } => {
            let g = load_image(&input)?;
            let mask = load_mask(&mask, false)?;
            let graph = load_graph(&graph)?;
            let cfg = SolverConfig {
                alpha,
                window,
                cg_max_iter: max_iter,
                ..Default::default()
            };
            let r = solve(&g, &mask, &graph, &cfg)?;
            write_image(&r.restored, &output)?;
            println!("iterations={}\nconverged={}", r.iterations, r.converged);
            println!("energy={}", r.energy_trace.last().copied().unwrap_or(0.0));
        }
        Command::Tv {
            input,
            mask,
            iters,
            gamma,
            output,
        } => {
            let g = load_image(&input)?;
            let mask = load_mask(&mask, false)?;
            let r = solve_tv(
                &g,
                &mask,
                &TvConfig {
                    outer_iters: iters,
                    dr_gamma: gamma,
                    ..Default::default()
                },
            )?;
            write_image(&r.restored, &output)?;
            println!("iterations={}\nconverged={}", r.iterations, r.converged);
        }
        Command::Scatter {
            scene,
            n,
            scatter,
            noise,
            seed,
            mask_out,
            truth_out,
            output,
        } => {
            let mut cfg = ExperimentConfig {
                n,
                ..Default::default()
            };
            scatter.apply(&mut cfg)?;
            let source = Source::parse(&scene, here)?;
            cfg.source = Some(match source {
                Source::File(p) => Source::SceneFile(p),
                s => s,
            });
            let scene = cfg
                .scene()?
                .ok_or_else(|| Error::InvalidParameter(format!("{scene:?} is not a scene")))?;
            let dirs = equispaced_directions(cfg.dirs);
            let samples = far_field(&scene, &dirs, &dirs, cfg.grid_scale_value())?;
            let gridded = grid_far_field(&samples, scene.n)?;
            let mut spec = gridded.spectrum;
            let truth = spectrafill::scatter::render_scene(&scene);
            if noise > 0.0 {
                spec = add_noise(&spec, &gridded.mask, noise, truth.norm(), seed)?;
            }
            write_image(&idft2(&spec)?, &output)?;
            save_mask(&gridded.mask, &mask_out)?;
            if let Some(p) = truth_out {
                write_image(&truth, &p)?;
            }
            println!(
                "samples={}\nknown={}\nout_of_range={}",
                samples.len(),
                gridded.mask.count(),
                gridded.out_of_range
            );
        }
        Command::Corrupt {
            input,
            mask,
            noise,
            seed,
            output,
        } => {
            let img = load_image(&input)?;
            let mask = load_mask(&mask, false)?;
            let mut g = project_known(&img, &mask)?;
            if noise > 0.0 {
                g = idft2(&add_noise(&dft2(&g), &mask, noise, img.norm(), seed)?)?;
            }
            write_image(&g, &output)?;
            println!("psnr={}", psnr(&g, &img)?);
        }
        Command::Psnr { a, b } => println!("{}", psnr(&load_image(a)?, &load_image(b)?)?),
        Command::Spectrum { input, output } => {
            export_gray(&render_spectrum(&load_image(input)?), &output)?
        }
        Command::Run {
            config,
            preset,
            overrides,
            output,
        } => {
            // a preset given on the command line takes precedence over one in the file
            let mut text = match &config {
                Some(path) => std::fs::read_to_string(path)?,
                None => String::new(),
            };
            if let Some(p) = preset {
                text.push_str(&format!("\npreset = {p}\n"));
            }
            let base = config.as_deref().and_then(Path::parent).unwrap_or(here);
            let mut cfg = ExperimentConfig::parse(&text, base)?;
            for o in &overrides {
                let (k, v) = o
                    .split_once('=')
                    .ok_or_else(|| Error::Parse(format!("override {o:?} is not key=value")))?;
                cfg.set(k, v, here)?;
            }
            if let Some(out) = output {
                cfg.output = out;
            }
            info!("writing to {}", cfg.output.display());
            let report = run_experiment(&cfg)?;
            print!("{}", report.to_text());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numerical() { 3 } else { 2 })
        }
    }
}
