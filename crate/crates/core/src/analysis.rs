//! Convergence-order estimation, singularity probing and trajectory statistics.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::predictor::{forward_diffuse, gaussian_from, NoisePredictor};
use crate::schedule::{Schedule, TimeGrid};
use crate::solvers::{sample, Method, SamplerSpec, Trajectory, DEFAULT_FON_MIN_T};
use crate::state::StateVec;

/// Errors at or below this are treated as round-off and left out of slope fits.
pub const FP_FLOOR: f64 = 1e-13;

pub const MIN_ORDER_POINTS: usize = 4;

/// Refinement factor of reference solutions over the finest tested resolution.
pub const REFERENCE_FACTOR: usize = 100;

/// A fixed initial-value problem: start state, time range, schedule and predictor.
#[derive(Clone)]
pub struct Problem<'a> {
    pub schedule: &'a Schedule,
    pub predictor: &'a dyn NoisePredictor,
    pub x_init: StateVec,
    pub t_start: f64,
    pub t_end: f64,
    pub fon_min_t: f64,
}

impl<'a> Problem<'a> {
    pub fn new(
        schedule: &'a Schedule,
        predictor: &'a dyn NoisePredictor,
        x_init: StateVec,
        t_start: f64,
        t_end: f64,
    ) -> Self {
        Self {
            schedule,
            predictor,
            x_init,
            t_start,
            t_end,
            fon_min_t: DEFAULT_FON_MIN_T,
        }
    }

    /// Runs `method` with `steps` uniform steps over the problem's range.
    pub fn run(&self, method: Method, steps: usize) -> Result<Trajectory> {
        let grid = TimeGrid::uniform(self.schedule, steps, self.t_start, self.t_end)?;
        let mut spec = SamplerSpec::new(method, &grid, self.schedule, self.predictor);
        spec.fon_min_t = self.fon_min_t;
        sample(&spec, &self.x_init)
    }
}

/// Euclidean distance between the final state of a `steps`-step run and the reference's.
pub fn global_error(
    problem: &Problem<'_>,
    method: Method,
    steps: usize,
    reference: &Trajectory,
) -> Result<f64> {
    check_reference(problem, reference)?;
    let traj = problem.run(method, steps)?;
    if traj.final_time() != reference.final_time() {
        return Err(Error::Argument(format!(
            "{method} ends at t = {} but the reference ends at t = {}",
            traj.final_time(),
            reference.final_time()
        )));
    }
    Ok(traj.final_state().distance(reference.final_state()))
}

fn check_reference(problem: &Problem<'_>, reference: &Trajectory) -> Result<()> {
    if reference.start_time() != problem.t_start {
        return Err(Error::Argument(format!(
            "reference starts at t = {}, problem at t = {}",
            reference.start_time(),
            problem.t_start
        )));
    }
    if reference.states[0].1 != problem.x_init {
        return Err(Error::Argument("reference starts from a different state".into()));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrderPoint {
    pub steps: usize,
    pub delta: f64,
    pub error: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatioCheck {
    pub coarse_delta: f64,
    pub fine_delta: f64,
    /// `error(coarse) / error(fine)`.
    pub ratio: f64,
    /// `(coarse/fine)^k` for the fitted order `k`.
    pub expected: f64,
}

impl RatioCheck {
    /// Observed ratio within a factor of two of the expected one.
    pub fn passes(&self) -> bool {
        self.ratio >= self.expected / 2.0 && self.ratio <= self.expected * 2.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OrderReport {
    pub method: Method,
    /// Points used in the fit, coarsest first.
    pub points: Vec<OrderPoint>,
    /// Points dropped for lying at the round-off floor.
    pub excluded: Vec<OrderPoint>,
    pub slope: f64,
    pub intercept: f64,
    pub reference: String,
}

impl OrderReport {
    /// Error ratios between consecutive fitted points against `(δ_c/δ_f)^slope`.
    pub fn ratio_checks(&self) -> Vec<RatioCheck> {
        self.points
            .windows(2)
            .map(|w| RatioCheck {
                coarse_delta: w[0].delta,
                fine_delta: w[1].delta,
                ratio: w[0].error / w[1].error,
                expected: (w[0].delta / w[1].delta).powf(self.slope),
            })
            .collect()
    }
}

/// Ordinary least squares on `(log10 x, log10 y)`; returns `(slope, intercept)`.
pub fn fit_loglog_slope(points: &[(f64, f64)]) -> Result<(f64, f64)> {
    if points.len() < 2 {
        return Err(Error::InsufficientData {
            remaining: points.len(),
            excluded: 0,
            required: 2,
        });
    }
    if points.iter().any(|&(x, y)| !(x > 0.0 && y > 0.0)) {
        return Err(Error::Argument("log-log fit needs positive values".into()));
    }
    let n = points.len() as f64;
    let (lx, ly): (Vec<f64>, Vec<f64>) = points.iter().map(|&(x, y)| (x.log10(), y.log10())).unzip();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    if sxx == 0.0 {
        return Err(Error::Argument("log-log fit needs distinct abscissae".into()));
    }
    let slope = sxy / sxx;
    Ok((slope, my - slope * mx))
}

/// Fits the global-error convergence order of `method` over the given step counts.
///
/// `reference` must solve the same problem much more accurately, e.g. a
/// [`Problem::run`] of RK4 at `REFERENCE_FACTOR` times the finest step count.
pub fn estimate_order(
    problem: &Problem<'_>,
    method: Method,
    steps_list: &[usize],
    reference: &Trajectory,
    reference_label: &str,
) -> Result<OrderReport> {
    check_reference(problem, reference)?;
    let mut steps_sorted = steps_list.to_vec();
    steps_sorted.sort_unstable();
    steps_sorted.dedup();
    if steps_sorted.len() < MIN_ORDER_POINTS {
        return Err(Error::Argument(format!(
            "order estimation needs at least {MIN_ORDER_POINTS} distinct step counts"
        )));
    }
    let span = (problem.t_start - problem.t_end).abs();
    let (lo, hi) = (steps_sorted[0], steps_sorted[steps_sorted.len() - 1]);
    if (hi as f64) < 10.0 * lo as f64 {
        return Err(Error::Argument(format!(
            "step sizes must span at least one decade, got {lo}..{hi}"
        )));
    }

    let errors: Vec<Result<f64>> = std::thread::scope(|scope| {
        let handles: Vec<_> = steps_sorted
            .iter()
            .map(|&s| scope.spawn(move || global_error(problem, method, s, reference)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("order worker panicked"))
            .collect()
    });

    let mut points = Vec::new();
    let mut excluded = Vec::new();
    for (&steps, err) in steps_sorted.iter().zip(errors) {
        let p = OrderPoint {
            steps,
            delta: span / steps as f64,
            error: err?,
        };
        if p.error > FP_FLOOR {
            points.push(p);
        } else {
            excluded.push(p);
        }
    }
    if points.len() < MIN_ORDER_POINTS {
        return Err(Error::InsufficientData {
            remaining: points.len(),
            excluded: excluded.len(),
            required: MIN_ORDER_POINTS,
        });
    }
    let (slope, intercept) =
        fit_loglog_slope(&points.iter().map(|p| (p.delta, p.error)).collect::<Vec<_>>())?;
    Ok(OrderReport {
        method,
        points,
        excluded,
        slope,
        intercept,
        reference: reference_label.to_string(),
    })
}

/// `|ᾱ'(t)| / (2 ᾱ(t) √(1−ᾱ(t)))`, the size of the noise coefficient in the ODE.
pub fn eps_coefficient_magnitude(schedule: &Schedule, t: f64) -> Result<f64> {
    let om = schedule.one_minus_alpha_bar(t)?;
    let a = schedule.alpha_bar(t)?;
    if om <= 0.0 || a <= 0.0 {
        return Err(Error::SingularTime {
            t,
            what: "noise coefficient is unbounded where alpha_bar is 0 or 1",
        });
    }
    let d = schedule.alpha_bar_derivative(t)?;
    Ok(d.abs() / (2.0 * a * om.sqrt()))
}

pub fn singularity_probe(schedule: &Schedule, t_list: &[f64]) -> Result<Vec<(f64, f64)>> {
    t_list
        .iter()
        .map(|&t| eps_coefficient_magnitude(schedule, t).map(|m| (t, m)))
        .collect()
}

/// Log–log slopes above this count as bounded (no blow-up towards `t = 0`).
pub const BOUNDED_SLOPE: f64 = -0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeReport {
    pub points: Vec<(f64, f64)>,
    pub slope: f64,
    pub bounded: bool,
}

pub fn probe_report(schedule: &Schedule, t_list: &[f64]) -> Result<ProbeReport> {
    let points = singularity_probe(schedule, t_list)?;
    let (slope, _) = fit_loglog_slope(&points)?;
    Ok(ProbeReport {
        points,
        slope,
        bounded: slope > BOUNDED_SLOPE,
    })
}

/// `n` logarithmically spaced values from `hi` down to `lo`.
pub fn log_spaced_desc(lo: f64, hi: f64, n: usize) -> Result<Vec<f64>> {
    if !(lo > 0.0 && hi > lo && n >= 2) {
        return Err(Error::Argument(format!(
            "log spacing needs 0 < lo < hi and n >= 2, got lo = {lo}, hi = {hi}, n = {n}"
        )));
    }
    let (a, b) = (hi.log10(), lo.log10());
    let mut v: Vec<f64> = (0..n)
        .map(|i| 10f64.powf(a + (b - a) * i as f64 / (n - 1) as f64))
        .collect();
    v[0] = hi;
    v[n - 1] = lo;
    Ok(v)
}

/// Distribution of clean samples `x0` used to build reference norm bands.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DataSource {
    Zero { dim: usize },
    Uniform { dim: usize },
    Gaussian { dim: usize },
}

impl DataSource {
    pub fn dim(&self) -> usize {
        match *self {
            DataSource::Zero { dim } | DataSource::Uniform { dim } | DataSource::Gaussian { dim } => dim,
        }
    }

    pub fn draw<R: Rng>(&self, rng: &mut R) -> StateVec {
        match *self {
            DataSource::Zero { dim } => StateVec::zeros(dim),
            DataSource::Uniform { dim } => {
                StateVec::from_raw((0..dim).map(|_| rng.random_range(0.0..1.0)).collect())
            }
            DataSource::Gaussian { dim } => gaussian_from(rng, dim),
        }
    }
}

pub const MIN_BAND_SAMPLES: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BandRow {
    pub t: f64,
    pub q05: f64,
    pub q50: f64,
    pub q95: f64,
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty());
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    if lo == hi {
        sorted[lo]
    } else {
        sorted[lo] + frac * (sorted[hi] - sorted[lo])
    }
}

/// 5/50/95% quantiles of `‖√ᾱ x0 + √(1−ᾱ) ε‖` at each time.
///
/// One seeded set of `(x0, ε)` pairs is shared across all times.
pub fn norm_band(
    schedule: &Schedule,
    source: &DataSource,
    times: &[f64],
    n_samples: usize,
    seed: u64,
) -> Result<Vec<BandRow>> {
    if n_samples < MIN_BAND_SAMPLES {
        return Err(Error::Argument(format!(
            "norm band needs at least {MIN_BAND_SAMPLES} samples, got {n_samples}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pairs: Vec<(StateVec, StateVec)> = (0..n_samples)
        .map(|_| {
            let x0 = source.draw(&mut rng);
            let eps = gaussian_from(&mut rng, source.dim());
            (x0, eps)
        })
        .collect();
    times
        .iter()
        .map(|&t| {
            let mut norms = pairs
                .iter()
                .map(|(x0, eps)| forward_diffuse(x0, eps, schedule, t).map(|x| x.norm()))
                .collect::<Result<Vec<f64>>>()?;
            norms.sort_by(f64::total_cmp);
            Ok(BandRow {
                t,
                q05: quantile(&norms, 0.05),
                q50: quantile(&norms, 0.50),
                q95: quantile(&norms, 0.95),
            })
        })
        .collect()
}

/// `(x_t[i], x_t[j])` along a trajectory.
pub fn pixel_pair_curve(traj: &Trajectory, i: usize, j: usize) -> Result<Vec<(f64, f64)>> {
    let dim = traj.dim();
    if i >= dim || j >= dim {
        return Err(Error::Argument(format!(
            "pixel indices ({i}, {j}) out of range for dimension {dim}"
        )));
    }
    Ok(traj.states.iter().map(|(_, x)| (x[i], x[j])).collect())
}

/// Norm trace of a trajectory, its reference band and a pixel-pair polyline.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajStats {
    /// `(t, ‖x_t‖)` per recorded state.
    pub norms: Vec<(f64, f64)>,
    pub band: Vec<BandRow>,
    pub pixel_pair: Vec<(f64, f64)>,
}

pub fn trajectory_stats(
    traj: &Trajectory,
    schedule: &Schedule,
    source: &DataSource,
    n_samples: usize,
    seed: u64,
    pixels: (usize, usize),
) -> Result<TrajStats> {
    if source.dim() != traj.dim() {
        return Err(Error::Argument(format!(
            "data source dimension {} differs from trajectory dimension {}",
            source.dim(),
            traj.dim()
        )));
    }
    let times: Vec<f64> = traj.times().collect();
    Ok(TrajStats {
        norms: traj.states.iter().map(|(t, x)| (*t, x.norm())).collect(),
        band: norm_band(schedule, source, &times, n_samples, seed)?,
        pixel_pair: pixel_pair_curve(traj, pixels.0, pixels.1)?,
    })
}
