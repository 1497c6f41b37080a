//! Subcommands behind the `pndm` binary.
//!
//! Every output file starts with `#` comment lines carrying the tool version and
//! the full effective configuration. Numbers are written in shortest round-trip form.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::analysis::{
    estimate_order, log_spaced_desc, probe_report, trajectory_stats, OrderReport, Problem,
    ProbeReport, TrajStats,
};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::schedule::TimeGrid;
use crate::solvers::{sample, Method, SamplerSpec, Trajectory};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub const EXIT_OK: u8 = 0;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_NUMERICAL: u8 = 3;

pub fn exit_code(err: &Error) -> u8 {
    if err.is_numerical() {
        EXIT_NUMERICAL
    } else {
        EXIT_CONFIG
    }
}

const SAMPLE_KEYS: &[&str] = &[
    "schedule.kind",
    "predictor.kind",
    "sampler.method",
    "sampler.steps",
    "grid.t_start",
    "grid.t_end",
];

fn header(command: &str, config: &RunConfig) -> String {
    let mut s = format!("# pndm {VERSION} {command}\n");
    for (k, v) in config.entries() {
        let _ = writeln!(s, "# {k}={v}");
    }
    s
}

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let path = dir.join(name);
    fs::write(&path, contents)?;
    Ok(path)
}

fn join(values: impl IntoIterator<Item = f64>) -> String {
    values
        .into_iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

/// Min-steps and grid problems are reported as configuration errors.
fn as_config(e: Error) -> Error {
    match e {
        Error::Argument(m) => Error::Config(m),
        Error::Domain { t } => Error::Config(format!("time {t} outside [0, 1]")),
        other => other,
    }
}

pub fn trajectory_csv(config: &RunConfig, traj: &Trajectory) -> String {
    let mut out = header("sample", config);
    out.push_str("step,t,eval_count");
    for i in 0..traj.dim() {
        let _ = write!(out, ",x_{i}");
    }
    out.push('\n');
    for (step, ((t, x), n)) in traj.states.iter().zip(&traj.eval_counts).enumerate() {
        let _ = writeln!(out, "{step},{t},{n},{}", join(x.as_slice().iter().copied()));
    }
    out
}

pub fn eps_csv(config: &RunConfig, traj: &Trajectory) -> String {
    let mut out = header("sample", config);
    out.push_str("eval,t");
    for i in 0..traj.dim() {
        let _ = write!(out, ",e_{i}");
    }
    out.push('\n');
    for (k, (t, e)) in traj.eps_log.iter().enumerate() {
        let _ = writeln!(out, "{},{t},{}", k + 1, join(e.as_slice().iter().copied()));
    }
    out
}

/// Builds the trajectory described by a sample-style configuration.
pub fn run_configured_sample(config: &RunConfig) -> Result<Trajectory> {
    config.require(SAMPLE_KEYS)?;
    let schedule = config.schedule()?;
    let predictor_spec = config.predictor()?;
    let method = config.method()?;
    let steps = config.steps()?;
    let seed = config.seed()?;
    let (t_start, t_end) = config.t_range()?;
    let grid = TimeGrid::uniform(&schedule, steps, t_start, t_end).map_err(as_config)?;
    let predictor = predictor_spec.build(&schedule);
    let x_init = predictor_spec
        .initial_state(seed, &schedule, t_start)
        .map_err(as_config)?;
    let mut spec = SamplerSpec::new(method, &grid, &schedule, predictor.as_ref());
    spec.seed = seed;
    spec.fon_min_t = config.fon_min_t()?;
    sample(&spec, &x_init)
}

#[derive(Debug)]
pub struct SampleOutcome {
    pub trajectory: Trajectory,
    pub files: Vec<PathBuf>,
}

pub fn cmd_sample(config: &RunConfig, out_dir: &Path, emit_eps: bool) -> Result<SampleOutcome> {
    let started = Instant::now();
    let traj = run_configured_sample(config)?;
    let mut files = vec![write_file(out_dir, "trajectory.csv", &trajectory_csv(config, &traj))?];
    if emit_eps {
        files.push(write_file(out_dir, "eps.csv", &eps_csv(config, &traj))?);
    }
    let mut manifest = header("sample", config);
    let _ = writeln!(manifest, "method={}", traj.method);
    let _ = writeln!(manifest, "steps={}", traj.states.len() - 1);
    let _ = writeln!(manifest, "t_final={}", traj.final_time());
    let _ = writeln!(manifest, "eval_count={}", traj.predictor_eval_count());
    let _ = writeln!(manifest, "wall_time_s={}", started.elapsed().as_secs_f64());
    files.push(write_file(out_dir, "manifest.txt", &manifest)?);
    Ok(SampleOutcome {
        trajectory: traj,
        files,
    })
}

/// Acceptable fitted-slope interval per method.
pub fn slope_window(method: Method) -> (f64, f64) {
    match method {
        Method::Ddim | Method::FonEuler => (0.8, 1.3),
        Method::SPndm | Method::FPndm => (1.7, 2.6),
        Method::FonRk4 | Method::FonAb4 => (3.5, f64::INFINITY),
    }
}

#[derive(Debug)]
pub struct ConvergeOutcome {
    pub reports: Vec<OrderReport>,
    /// `(method, status line)` per requested method.
    pub lines: Vec<(Method, String)>,
    pub files: Vec<PathBuf>,
}

impl ConvergeOutcome {
    pub fn report(&self, method: Method) -> Option<&OrderReport> {
        self.reports.iter().find(|r| r.method == method)
    }
}

pub fn cmd_converge(config: &RunConfig, out_dir: &Path) -> Result<ConvergeOutcome> {
    config.require(&["schedule.kind", "predictor.kind", "grid.t_start", "grid.t_end"])?;
    let schedule = config.schedule()?;
    let predictor_spec = config.predictor()?;
    let seed = config.seed()?;
    let (t_start, t_end) = config.t_range()?;
    let methods = config.converge_methods()?;
    let steps = config.converge_steps()?;
    let factor = config.reference_factor()?;
    let fon_min_t = config.fon_min_t()?;
    let predictor = predictor_spec.build(&schedule);
    let x_init = predictor_spec
        .initial_state(seed, &schedule, t_start)
        .map_err(as_config)?;
    let mut problem = Problem::new(&schedule, predictor.as_ref(), x_init, t_start, t_end);
    problem.fon_min_t = fon_min_t;

    // Classical methods are not valid references near the t = 0 singularity.
    let touches_zero = t_end < fon_min_t;
    let ref_method = if touches_zero { Method::FPndm } else { Method::FonRk4 };
    let finest = steps.iter().copied().max().unwrap_or(0);
    let ref_steps = factor * finest.max(1);
    let reference = problem.run(ref_method, ref_steps).map_err(as_config)?;
    let label = format!("{ref_method} with {ref_steps} steps");

    let mut csv = header("converge", config);
    let _ = writeln!(csv, "# reference: {label}");
    csv.push_str("method,delta,error,slope\n");
    let mut reports = Vec::new();
    let mut lines = Vec::new();
    for method in methods {
        if touches_zero && !method.is_pseudo() {
            lines.push((method, format!("{method}: SKIP (grid reaches t = {t_end} below the classical clamp {fon_min_t})")));
            continue;
        }
        let report = estimate_order(&problem, method, &steps, &reference, &label).map_err(as_config)?;
        for p in &report.points {
            let _ = writeln!(csv, "{method},{},{},{}", p.delta, p.error, report.slope);
        }
        let (lo, hi) = slope_window(method);
        let pass = report.slope >= lo && report.slope <= hi;
        let window = if hi.is_finite() {
            format!("[{lo}, {hi}]")
        } else {
            format!(">= {lo}")
        };
        lines.push((
            method,
            format!(
                "{method}: slope {:.3} expected {window} {} (fp-floor points excluded: {})",
                report.slope,
                if pass { "PASS" } else { "FAIL" },
                report.excluded.len()
            ),
        ));
        reports.push(report);
    }
    let files = vec![write_file(out_dir, "order_report.csv", &csv)?];
    Ok(ConvergeOutcome {
        reports,
        lines,
        files,
    })
}

#[derive(Debug)]
pub struct ProbeOutcome {
    pub report: ProbeReport,
    pub files: Vec<PathBuf>,
}

pub fn cmd_probe(config: &RunConfig, out_dir: &Path) -> Result<ProbeOutcome> {
    config.require(&["schedule.kind"])?;
    let schedule = config.schedule()?;
    let (t_min, t_max, n) = config.probe_range()?;
    let ts = log_spaced_desc(t_min, t_max, n).map_err(as_config)?;
    let report = probe_report(&schedule, &ts)?;
    let mut csv = header("probe", config);
    let _ = writeln!(csv, "# slope={} bounded={}", report.slope, report.bounded);
    csv.push_str("t,magnitude\n");
    for (t, m) in &report.points {
        let _ = writeln!(csv, "{t},{m}");
    }
    let files = vec![write_file(out_dir, "singularity.csv", &csv)?];
    Ok(ProbeOutcome { report, files })
}

#[derive(Debug)]
pub struct StatsOutcome {
    pub stats: TrajStats,
    pub files: Vec<PathBuf>,
}

pub fn cmd_stats(config: &RunConfig, out_dir: &Path) -> Result<StatsOutcome> {
    let traj = run_configured_sample(config)?;
    let schedule = config.schedule()?;
    let dim = traj.dim();
    let source = config.stats_source(dim)?;
    let pixels = config.stats_pixels(dim)?;
    let stats = trajectory_stats(
        &traj,
        &schedule,
        &source,
        config.stats_samples()?,
        config.stats_seed()?,
        pixels,
    )
    .map_err(as_config)?;

    let mut band = header("stats", config);
    band.push_str("t,q05,q50,q95,sample_norm\n");
    for (row, (_, norm)) in stats.band.iter().zip(&stats.norms) {
        let _ = writeln!(band, "{},{},{},{},{norm}", row.t, row.q05, row.q50, row.q95);
    }
    let mut pairs = header("stats", config);
    let _ = writeln!(pairs, "# pixels={},{}", pixels.0, pixels.1);
    pairs.push_str("step,yi,yj\n");
    for (step, (a, b)) in stats.pixel_pair.iter().enumerate() {
        let _ = writeln!(pairs, "{step},{a},{b}");
    }
    let files = vec![
        write_file(out_dir, "norm_band.csv", &band)?,
        write_file(out_dir, "pixel_pair.csv", &pairs)?,
    ];
    Ok(StatsOutcome { stats, files })
}
