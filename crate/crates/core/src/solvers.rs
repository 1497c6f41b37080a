//! Classical and pseudo numerical samplers.
//!
//! Classical ("FON") methods integrate the probability-flow ODE
//!
//! ```text
//! dx/dt = ᾱ'(t) · ( x / (2ᾱ) − ε(x, t) / (2ᾱ √(1−ᾱ)) )
//! ```
//!
//! with the linear transfer `x + δ·f`. Pseudo methods keep the gradient part of a
//! classical method (a blend of `ε` evaluations) but move the state with the
//! nonlinear transfer [`phi`](crate::transfer::phi).
//!
//! All step routines take a signed `delta = t_target − t_current`; sampling runs
//! with `delta < 0`.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;
use std::sync::Mutex;

use crate::error::{Error, Result};
use crate::predictor::NoisePredictor;
use crate::schedule::{Schedule, TimeGrid};
use crate::state::StateVec;
use crate::transfer::phi;

/// Default lower bound on the final time of classical runs.
pub const DEFAULT_FON_MIN_T: f64 = 1e-3;

pub const AB4_WEIGHTS: [f64; 4] = [55.0, -59.0, 37.0, -9.0];
pub const RK4_WEIGHTS: [f64; 4] = [1.0, 2.0, 2.0, 1.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Ddim,
    FonEuler,
    FonRk4,
    FonAb4,
    SPndm,
    FPndm,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::Ddim,
        Method::FonEuler,
        Method::FonRk4,
        Method::FonAb4,
        Method::SPndm,
        Method::FPndm,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Ddim => "DDIM",
            Method::FonEuler => "FON-EULER",
            Method::FonRk4 => "FON-RK4",
            Method::FonAb4 => "FON-AB4",
            Method::SPndm => "S-PNDM",
            Method::FPndm => "F-PNDM",
        }
    }

    pub fn min_steps(self) -> usize {
        match self {
            Method::Ddim | Method::FonEuler | Method::FonRk4 => 1,
            Method::SPndm => 2,
            Method::FonAb4 | Method::FPndm => 4,
        }
    }

    /// Uses the nonlinear transfer part.
    pub fn is_pseudo(self) -> bool {
        matches!(self, Method::Ddim | Method::SPndm | Method::FPndm)
    }

    pub fn is_multistep(self) -> bool {
        matches!(self, Method::FonAb4 | Method::SPndm | Method::FPndm)
    }

    /// Predictor evaluations for a run of `steps` steps.
    pub fn expected_evals(self, steps: usize) -> usize {
        match self {
            Method::Ddim | Method::FonEuler => steps,
            Method::FonRk4 => 4 * steps,
            Method::SPndm => steps + 1,
            Method::FonAb4 | Method::FPndm => steps + 9,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::Config(format!("unknown sampler method '{s}'")))
    }
}

/// `base + Σ w_k (v_k − base) / denom`.
///
/// Equal to `(w_0·base + Σ w_k v_k) / denom` when the weights sum to `denom`, and
/// returns `base` bit-for-bit when every `v_k` equals `base`.
fn blend(base: &StateVec, others: &[(f64, &StateVec)], denom: f64) -> StateVec {
    let mut out = base.as_slice().to_vec();
    for (i, o) in out.iter_mut().enumerate() {
        let b = base[i];
        let incr: f64 = others.iter().map(|(w, v)| w * (v[i] - b)).sum();
        *o = b + incr / denom;
    }
    StateVec::from_raw(out)
}

fn require_history<'h>(history: &'h [StateVec], n: usize, what: &str) -> Result<&'h [StateVec]> {
    if history.len() < n {
        return Err(Error::Warmup(format!(
            "{what} needs {n} prior values, got {}",
            history.len()
        )));
    }
    Ok(&history[..n])
}

fn check_finite(x: StateVec, t: f64) -> Result<StateVec> {
    if x.is_finite() {
        Ok(x)
    } else {
        Err(Error::NonFinite { t })
    }
}

/// Right-hand side of the probability-flow ODE for a given noise value.
pub fn rhs_with_eps(x: &StateVec, eps: &StateVec, t: f64, schedule: &Schedule) -> Result<StateVec> {
    x.check_dim(eps, "ode rhs")?;
    let a = schedule.alpha_bar(t)?;
    let om = schedule.one_minus_alpha_bar(t)?;
    if a <= 0.0 || om <= 0.0 {
        return Err(Error::SingularTime {
            t,
            what: "ode right-hand side needs 0 < alpha_bar < 1",
        });
    }
    let d = schedule.alpha_bar_derivative(t)?;
    let c_x = d / (2.0 * a);
    let c_eps = -d / (2.0 * a * om.sqrt());
    check_finite(x.lin_comb(c_x, eps, c_eps), t)
}

pub fn ode_rhs<P: NoisePredictor + ?Sized>(
    x: &StateVec,
    t: f64,
    predictor: &P,
    schedule: &Schedule,
) -> Result<StateVec> {
    let eps = predictor.eval(x, t)?;
    rhs_with_eps(x, &eps, t, schedule)
}

/// Forward Euler: `x + δ f(x, t)`.
pub fn euler_step<P: NoisePredictor + ?Sized>(
    x: &StateVec,
    t: f64,
    delta: f64,
    predictor: &P,
    schedule: &Schedule,
) -> Result<StateVec> {
    let f = ode_rhs(x, t, predictor, schedule)?;
    check_finite(x.axpy(delta, &f), t + delta)
}

/// Classical RK4, returning the new state and the first stage slope `f(x, t)`.
pub fn rk4_step_with_slope<P: NoisePredictor + ?Sized>(
    x: &StateVec,
    t: f64,
    delta: f64,
    predictor: &P,
    schedule: &Schedule,
) -> Result<(StateVec, StateVec)> {
    let half = delta / 2.0;
    let k1 = ode_rhs(x, t, predictor, schedule)?;
    let k2 = ode_rhs(&x.axpy(half, &k1), t + half, predictor, schedule)?;
    let k3 = ode_rhs(&x.axpy(half, &k2), t + half, predictor, schedule)?;
    let k4 = ode_rhs(&x.axpy(delta, &k3), t + delta, predictor, schedule)?;
    let [_, w2, w3, w4] = RK4_WEIGHTS;
    let slope = blend(&k1, &[(w2, &k2), (w3, &k3), (w4, &k4)], 6.0);
    Ok((check_finite(x.axpy(delta, &slope), t + delta)?, k1))
}

pub fn rk4_step<P: NoisePredictor + ?Sized>(
    x: &StateVec,
    t: f64,
    delta: f64,
    predictor: &P,
    schedule: &Schedule,
) -> Result<StateVec> {
    rk4_step_with_slope(x, t, delta, predictor, schedule).map(|(x, _)| x)
}

/// Fourth-order Adams–Bashforth.
///
/// `history` holds the three previous slopes, most recent first, at spacing `delta`.
/// Returns the new state and `f(x, t)` for the caller's history.
pub fn ab4_step<P: NoisePredictor + ?Sized>(
    x: &StateVec,
    t: f64,
    delta: f64,
    history: &[StateVec],
    predictor: &P,
    schedule: &Schedule,
) -> Result<(StateVec, StateVec)> {
    let h = require_history(history, 3, "AB4")?;
    let f = ode_rhs(x, t, predictor, schedule)?;
    let slope = ab4_blend(&f, h);
    Ok((check_finite(x.axpy(delta, &slope), t + delta)?, f))
}

/// `(55 f_t − 59 f_{t−δ} + 37 f_{t−2δ} − 9 f_{t−3δ}) / 24`.
fn ab4_blend(current: &StateVec, h: &[StateVec]) -> StateVec {
    let [_, w1, w2, w3] = AB4_WEIGHTS;
    blend(current, &[(w1, &h[0]), (w2, &h[1]), (w3, &h[2])], 24.0)
}

/// Linear multistep gradient part, `history` most recent first.
pub fn plms_gradient(e_t: &StateVec, history: &[StateVec]) -> Result<StateVec> {
    let h = require_history(history, 3, "PLMS")?;
    Ok(ab4_blend(e_t, h))
}

/// Pseudo linear multistep step. Returns the new state and `e_t = ε(x, t)`.
pub fn plms_step<P: NoisePredictor + ?Sized>(
    x: &StateVec,
    t: f64,
    delta: f64,
    eps_history: &[StateVec],
    predictor: &P,
    schedule: &Schedule,
) -> Result<(StateVec, StateVec)> {
    require_history(eps_history, 3, "PLMS")?;
    let e_t = predictor.eval(x, t)?;
    let e = plms_gradient(&e_t, eps_history)?;
    let next = phi(x, &e, t, t + delta, schedule)?;
    Ok((check_finite(next, t + delta)?, e_t))
}

/// Pseudo Runge–Kutta step. Returns the new state and the first stage `e¹`.
pub fn prk_step<P: NoisePredictor + ?Sized>(
    x: &StateVec,
    t: f64,
    delta: f64,
    predictor: &P,
    schedule: &Schedule,
) -> Result<(StateVec, StateVec)> {
    let mid = t + delta / 2.0;
    let end = t + delta;
    let e1 = predictor.eval(x, t)?;
    let x1 = phi(x, &e1, t, mid, schedule)?;
    let e2 = predictor.eval(&x1, mid)?;
    let x2 = phi(x, &e2, t, mid, schedule)?;
    let e3 = predictor.eval(&x2, mid)?;
    let x3 = phi(x, &e3, t, end, schedule)?;
    let e4 = predictor.eval(&x3, end)?;
    let [_, w2, w3, w4] = RK4_WEIGHTS;
    let e = blend(&e1, &[(w2, &e2), (w3, &e3), (w4, &e4)], 6.0);
    let next = phi(x, &e, t, end, schedule)?;
    Ok((check_finite(next, end)?, e1))
}

/// Pseudo improved Euler step. Returns the new state and `e¹`.
pub fn pie_step<P: NoisePredictor + ?Sized>(
    x: &StateVec,
    t: f64,
    delta: f64,
    predictor: &P,
    schedule: &Schedule,
) -> Result<(StateVec, StateVec)> {
    let end = t + delta;
    let e1 = predictor.eval(x, t)?;
    let x1 = phi(x, &e1, t, end, schedule)?;
    let e2 = predictor.eval(&x1, end)?;
    let e = blend(&e1, &[(1.0, &e2)], 2.0);
    let next = phi(x, &e, t, end, schedule)?;
    Ok((check_finite(next, end)?, e1))
}

/// `(3 e_t − e_{t−δ}) / 2`.
pub fn plms2_gradient(e_t: &StateVec, history: &[StateVec]) -> Result<StateVec> {
    let h = require_history(history, 1, "PLMS2")?;
    Ok(blend(e_t, &[(-1.0, &h[0])], 2.0))
}

/// Pseudo second-order linear multistep step. Returns the new state and `e_t`.
pub fn plms2_step<P: NoisePredictor + ?Sized>(
    x: &StateVec,
    t: f64,
    delta: f64,
    eps_history: &[StateVec],
    predictor: &P,
    schedule: &Schedule,
) -> Result<(StateVec, StateVec)> {
    require_history(eps_history, 1, "PLMS2")?;
    let e_t = predictor.eval(x, t)?;
    let e = plms2_gradient(&e_t, eps_history)?;
    let next = phi(x, &e, t, t + delta, schedule)?;
    Ok((check_finite(next, t + delta)?, e_t))
}

/// Everything that determines a deterministic run apart from the starting point.
#[derive(Clone, Copy)]
pub struct SamplerSpec<'a> {
    pub method: Method,
    pub grid: &'a TimeGrid,
    pub seed: u64,
    pub schedule: &'a Schedule,
    pub predictor: &'a dyn NoisePredictor,
    /// Classical runs stop at `max(grid end, fon_min_t)`.
    pub fon_min_t: f64,
}

impl fmt::Debug for SamplerSpec<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SamplerSpec")
            .field("method", &self.method)
            .field("grid", &self.grid)
            .field("seed", &self.seed)
            .field("schedule", &self.schedule)
            .field("predictor", &self.predictor.name())
            .field("fon_min_t", &self.fon_min_t)
            .finish()
    }
}

impl<'a> SamplerSpec<'a> {
    pub fn new(
        method: Method,
        grid: &'a TimeGrid,
        schedule: &'a Schedule,
        predictor: &'a dyn NoisePredictor,
    ) -> Self {
        Self {
            method,
            grid,
            seed: 0,
            schedule,
            predictor,
            fon_min_t: DEFAULT_FON_MIN_T,
        }
    }

    pub fn steps(&self) -> usize {
        self.grid.steps()
    }

    pub fn validate(&self) -> Result<()> {
        let steps = self.steps();
        if steps < self.method.min_steps() {
            return Err(Error::Config(format!(
                "{} needs at least {} steps, got {steps}",
                self.method,
                self.method.min_steps()
            )));
        }
        if self.method.is_multistep() && !self.grid.is_uniform() {
            return Err(Error::Config(format!(
                "{} needs a uniform time grid",
                self.method
            )));
        }
        if !(self.fon_min_t.is_finite() && self.fon_min_t >= 0.0) {
            return Err(Error::Config(format!(
                "classical clamp time must be >= 0, got {}",
                self.fon_min_t
            )));
        }
        Ok(())
    }

    /// The grid a run actually uses: classical runs are clamped away from `t = 0`.
    pub fn effective_grid(&self) -> Result<TimeGrid> {
        if self.method.is_pseudo() || self.grid.end() >= self.fon_min_t {
            return Ok(self.grid.clone());
        }
        if self.grid.start() <= self.fon_min_t {
            return Err(Error::Config(format!(
                "grid starts at {} which is below the classical clamp time {}",
                self.grid.start(),
                self.fon_min_t
            )));
        }
        log::warn!(
            "{}: final time {} clamped to {} (the ODE right-hand side is singular near t = 0)",
            self.method,
            self.grid.end(),
            self.fon_min_t
        );
        if self.grid.is_uniform() {
            TimeGrid::uniform(self.schedule, self.steps(), self.grid.start(), self.fon_min_t)
        } else {
            let mut values = self.grid.values().to_vec();
            *values.last_mut().expect("grid is non-empty") = self.fon_min_t;
            TimeGrid::new(values).map_err(|e| Error::Config(format!("clamped grid invalid: {e}")))
        }
    }
}

/// States and predictor evaluations of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub method: Method,
    /// `(t, x_t)` in sampling order.
    pub states: Vec<(f64, StateVec)>,
    /// Cumulative predictor evaluations at each recorded state.
    pub eval_counts: Vec<usize>,
    /// Every predictor evaluation `(t, ε)` in call order.
    pub eps_log: Vec<(f64, StateVec)>,
}

impl Trajectory {
    pub fn predictor_eval_count(&self) -> usize {
        self.eps_log.len()
    }

    pub fn final_state(&self) -> &StateVec {
        &self.states.last().expect("trajectory has a start state").1
    }

    pub fn final_time(&self) -> f64 {
        self.states.last().expect("trajectory has a start state").0
    }

    pub fn start_time(&self) -> f64 {
        self.states[0].0
    }

    pub fn dim(&self) -> usize {
        self.states[0].1.dim()
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        self.states.iter().map(|(t, _)| *t)
    }
}

/// Logs every evaluation of the wrapped predictor.
struct Recorder<'a> {
    inner: &'a dyn NoisePredictor,
    log: Mutex<Vec<(f64, StateVec)>>,
}

impl Recorder<'_> {
    fn count(&self) -> usize {
        self.log.lock().expect("recorder lock").len()
    }
}

impl NoisePredictor for Recorder<'_> {
    fn eval(&self, x: &StateVec, t: f64) -> Result<StateVec> {
        let e = self.inner.eval(x, t)?;
        if e.dim() != x.dim() {
            return Err(Error::Argument(format!(
                "predictor returned dimension {} for input of dimension {}",
                e.dim(),
                x.dim()
            )));
        }
        self.log.lock().expect("recorder lock").push((t, e.clone()));
        Ok(e)
    }

    fn dim(&self) -> Option<usize> {
        self.inner.dim()
    }

    fn name(&self) -> &'static str {
        self.inner.name()
    }
}

fn push_front(history: &mut VecDeque<StateVec>, v: StateVec, keep: usize) {
    history.push_front(v);
    history.truncate(keep);
}

/// Runs the sampler described by `spec` from `x_init` at the first grid time.
pub fn sample(spec: &SamplerSpec<'_>, x_init: &StateVec) -> Result<Trajectory> {
    spec.validate()?;
    if let Some(d) = spec.predictor.dim() {
        if d != x_init.dim() {
            return Err(Error::Config(format!(
                "initial state has dimension {}, predictor expects {d}",
                x_init.dim()
            )));
        }
    }
    let grid = spec.effective_grid()?;
    let schedule = spec.schedule;
    let rec = Recorder {
        inner: spec.predictor,
        log: Mutex::new(Vec::new()),
    };
    let times = grid.values();
    let mut x = x_init.clone();
    let mut states = vec![(times[0], x.clone())];
    let mut eval_counts = vec![0];
    let mut history: VecDeque<StateVec> = VecDeque::with_capacity(4);

    for (i, w) in times.windows(2).enumerate() {
        let (t, delta) = (w[0], w[1] - w[0]);
        x = match spec.method {
            Method::Ddim => {
                let eps = rec.eval(&x, t)?;
                check_finite(phi(&x, &eps, t, t + delta, schedule)?, t + delta)?
            }
            Method::FonEuler => euler_step(&x, t, delta, &rec, schedule)?,
            Method::FonRk4 => rk4_step(&x, t, delta, &rec, schedule)?,
            Method::FonAb4 => {
                let (next, f) = if i < 3 {
                    rk4_step_with_slope(&x, t, delta, &rec, schedule)?
                } else {
                    ab4_step(&x, t, delta, history.make_contiguous(), &rec, schedule)?
                };
                push_front(&mut history, f, 3);
                next
            }
            Method::SPndm => {
                let (next, e) = if i < 1 {
                    pie_step(&x, t, delta, &rec, schedule)?
                } else {
                    plms2_step(&x, t, delta, history.make_contiguous(), &rec, schedule)?
                };
                push_front(&mut history, e, 1);
                next
            }
            Method::FPndm => {
                let (next, e) = if i < 3 {
                    prk_step(&x, t, delta, &rec, schedule)?
                } else {
                    plms_step(&x, t, delta, history.make_contiguous(), &rec, schedule)?
                };
                push_front(&mut history, e, 3);
                next
            }
        };
        states.push((w[1], x.clone()));
        eval_counts.push(rec.count());
    }

    Ok(Trajectory {
        method: spec.method,
        states,
        eval_counts,
        eps_log: rec.log.into_inner().expect("recorder lock"),
    })
}
