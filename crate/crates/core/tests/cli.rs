use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

const TOY: &str = "\
schedule.kind=toy-linear
predictor.kind=analytic-toy
sampler.seed=11
grid.t_start=0.9
grid.t_end=0.1
";

fn run(dir: &Path, sub: &str, config: &str, extra: &[&str]) -> Output {
    let cfg = dir.join("run.cfg");
    fs::write(&cfg, config).unwrap();
    Command::new(env!("CARGO_BIN_EXE_pndm"))
        .arg(sub)
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(dir.join("out"))
        .args(extra)
        .env_remove("PNDM_SEED")
        .output()
        .unwrap()
}

fn data_rows(text: &str) -> Vec<&str> {
    text.lines().filter(|l| !l.starts_with('#')).skip(1).collect()
}

#[test]
fn below_minimum_steps_is_config_error() {
    let dir = TempDir::new().unwrap();
    let out = run(dir.path(), "sample", &format!("{TOY}sampler.method=F-PNDM\nsampler.steps=3\n"), &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("at least 4"));
}

#[test]
fn ddim_ten_steps_csv() {
    let dir = TempDir::new().unwrap();
    let out = run(dir.path(), "sample", &format!("{TOY}sampler.method=DDIM\nsampler.steps=10\n"), &["--emit-eps"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.path().join("out/trajectory.csv")).unwrap();
    assert!(csv.starts_with("# pndm "));
    assert!(csv.contains("# sampler.method=DDIM\n"));
    let rows = data_rows(&csv);
    assert_eq!(rows.len(), 11);
    assert_eq!(rows.last().unwrap().split(',').nth(2), Some("10"));
    let eps = fs::read_to_string(dir.path().join("out/eps.csv")).unwrap();
    assert_eq!(data_rows(&eps).len(), 10);
    let manifest = fs::read_to_string(dir.path().join("out/manifest.txt")).unwrap();
    assert!(manifest.contains("eval_count=10\n") && manifest.contains("wall_time_s="));
}

#[test]
fn identical_runs_are_byte_identical() {
    let cfg = format!("{TOY}sampler.method=S-PNDM\nsampler.steps=25\n");
    let (a, b) = (TempDir::new().unwrap(), TempDir::new().unwrap());
    assert!(run(a.path(), "sample", &cfg, &["--emit-eps"]).status.success());
    assert!(run(b.path(), "sample", &cfg, &["--emit-eps"]).status.success());
    for f in ["trajectory.csv", "eps.csv"] {
        assert_eq!(
            fs::read(a.path().join("out").join(f)).unwrap(),
            fs::read(b.path().join("out").join(f)).unwrap()
        );
    }
}

#[test]
fn seed_env_overrides_config() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, format!("{TOY}sampler.method=DDIM\nsampler.steps=5\n")).unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_pndm"))
        .args(["sample", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path())
        .env("PNDM_SEED", "99")
        .output()
        .unwrap();
    assert!(out.status.success());
    let csv = fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
    assert!(csv.contains("# sampler.seed=99\n"));
}

#[test]
fn singular_start_is_numerical_error() {
    let dir = TempDir::new().unwrap();
    // ᾱ(1) = 0 on the toy schedule.
    let cfg = "schedule.kind=toy-linear\npredictor.kind=analytic-toy\nsampler.method=DDIM\n\
               sampler.steps=10\ngrid.t_start=1.0\ngrid.t_end=0.0\n";
    assert_eq!(run(dir.path(), "sample", cfg, &[]).status.code(), Some(3));
}

#[test]
fn unknown_key_and_bad_usage_are_config_errors() {
    let dir = TempDir::new().unwrap();
    let out = run(dir.path(), "sample", &format!("{TOY}sampler.method=DDIM\nsampler.steps=5\nsampler.sped=1\n"), &[]);
    assert_eq!(out.status.code(), Some(2));
    let out = Command::new(env!("CARGO_BIN_EXE_pndm")).arg("frobnicate").output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let out = run(dir.path(), "sample", &format!("{TOY}sampler.method=RK45\nsampler.steps=5\n"), &[]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn probe_reports_slope_and_bounded_flag() {
    let dir = TempDir::new().unwrap();
    let out = run(dir.path(), "probe", "schedule.kind=exponential\nschedule.params.a=0\nschedule.params.b=-1\n", &[]);
    assert!(out.status.success());
    let csv = fs::read_to_string(dir.path().join("out/singularity.csv")).unwrap();
    let slope: f64 = csv
        .lines()
        .find_map(|l| l.strip_prefix("# slope="))
        .and_then(|l| l.split_whitespace().next())
        .unwrap()
        .parse()
        .unwrap();
    assert!((slope + 0.5).abs() < 0.1, "{slope}");
    assert!(csv.contains("bounded=false"));
    assert_eq!(data_rows(&csv).len(), 20);

    let out = run(dir.path(), "probe", "schedule.kind=exponential\nschedule.params.a=-1\nschedule.params.b=0\n", &[]);
    assert!(out.status.success());
    let csv = fs::read_to_string(dir.path().join("out/singularity.csv")).unwrap();
    assert!(csv.contains("bounded=true"));
}

#[test]
fn stats_pixel_pair_has_one_row_per_state() {
    let dir = TempDir::new().unwrap();
    let cfg = format!("{TOY}sampler.method=F-PNDM\nsampler.steps=12\nstats.samples=200\n");
    let out = run(dir.path(), "stats", &cfg, &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let pairs = fs::read_to_string(dir.path().join("out/pixel_pair.csv")).unwrap();
    assert_eq!(data_rows(&pairs).len(), 13);
    let band = fs::read_to_string(dir.path().join("out/norm_band.csv")).unwrap();
    for row in data_rows(&band) {
        let v: Vec<f64> = row.split(',').map(|x| x.parse().unwrap()).collect();
        assert!(v[1] <= v[2] && v[2] <= v[3], "{row}");
    }
}

#[test]
fn converge_writes_report_and_status_lines() {
    let dir = TempDir::new().unwrap();
    let cfg = format!("{TOY}converge.methods=DDIM,F-PNDM\nconverge.steps=25,50,100,250\nconverge.reference_factor=20\n");
    let out = run(dir.path(), "converge", &cfg, &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("DDIM: slope") && stdout.contains("F-PNDM: slope"));
    assert!(stdout.contains("fp-floor points excluded: "));
    let csv = fs::read_to_string(dir.path().join("out/order_report.csv")).unwrap();
    assert_eq!(data_rows(&csv).len(), 8);
}
