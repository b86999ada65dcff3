use std::path::Path;

use spectrafill::experiment::{run_experiment, ExperimentConfig};
use spectrafill::io::{load_mask, load_sfg1};
use spectrafill::metrics::psnr;
use spectrafill::Error;

fn small_config(out: &Path) -> ExperimentConfig {
    let text = format!(
        "preset = figToy\n\
         n = 32\n\
         mask = band:0-4,8-10\n\
         methods = ssd, atom, atom+ssd, oracle, tv\n\
         eta = 6\nrho = 3\neps = 2\nm0 = 4\nn0 = 6\n\
         tv_outer = 20\n\
         noise = 0.01\nseed = 3\n\
         output = {}\n",
        out.display()
    );
    ExperimentConfig::parse(&text, Path::new(".")).unwrap()
}

#[test]
fn reports_are_deterministic_and_match_the_written_images() {
    let dir = tempfile::tempdir().unwrap();
    let a = run_experiment(&small_config(&dir.path().join("a"))).unwrap();
    let b = run_experiment(&small_config(&dir.path().join("b"))).unwrap();
    assert_eq!(a.entries, b.entries);
    assert_eq!(
        std::fs::read(dir.path().join("a/report.txt")).unwrap(),
        std::fs::read(dir.path().join("b/report.txt")).unwrap()
    );

    let out = dir.path().join("a");
    let truth = load_sfg1(out.join("original.sfg1")).unwrap();
    for (method, file) in [
        ("corrupted", "corrupted"),
        ("ssd", "ssd"),
        ("atom", "atom"),
        ("atom+ssd", "atom_then_ssd"),
        ("oracle", "oracle"),
        ("tv", "tv"),
    ] {
        let img = load_sfg1(out.join(format!("{file}.sfg1"))).unwrap();
        let reported = a.psnr(method).unwrap();
        assert!(
            (psnr(&img, &truth).unwrap() - reported).abs() < 1e-9,
            "{method}"
        );
        assert!(out.join(format!("{file}.png")).exists());
        assert!(out.join(format!("{file}_spectrum.png")).exists());
    }
    assert!(a.psnr("atom+ssd.round2").is_some());
    assert!(a.get("edges.atom").unwrap().parse::<usize>().unwrap() > 0);
    for m in ["ssd", "atom", "oracle"] {
        // restorations keep the measured coefficients
        assert!(a.get_f64(&format!("constraint.{m}")).unwrap() < 1e-8, "{m}");
    }
    let mask = load_mask(out.join("mask.pbm"), false).unwrap();
    assert_eq!(mask.count().to_string(), a.get("mask.known").unwrap());
    assert!(out.join("atoms.sfa").exists());
    assert!(a.timing("total").unwrap() > 0.0);
    let timing = std::fs::read_to_string(out.join("timing.txt")).unwrap();
    assert!(timing.contains("total="));
}

#[test]
fn scattering_run_with_born_data() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!(
        "preset = figScatParallel\nn = 64\ndirs = 16\ngrid_scale = 4\nmethods = ssd\neta = 10\noutput = {}\n",
        dir.path().display()
    );
    let cfg = ExperimentConfig::parse(&text, Path::new(".")).unwrap();
    let r = run_experiment(&cfg).unwrap();
    assert_eq!(r.get("scatter.samples"), Some("256"));
    assert!(r.psnr("ssd").unwrap() > r.psnr("corrupted").unwrap() - 1.0);
}

#[test]
fn failures_name_their_stage() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_config(dir.path());
    cfg.atoms.count = 10_000;
    match run_experiment(&cfg) {
        Err(Error::Stage { stage, source }) => {
            assert_eq!(stage, "atoms");
            assert!(matches!(*source, Error::TooManyAtoms { .. }));
        }
        other => panic!("expected a stage error, got {other:?}"),
    }
    let mut cfg = small_config(dir.path());
    cfg.source = None;
    assert!(
        matches!(run_experiment(&cfg), Err(Error::Stage { ref stage, .. }) if stage == "config")
    );
}
