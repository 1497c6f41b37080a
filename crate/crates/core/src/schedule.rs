//! Variance schedules `ᾱ(t)` on normalized time `t ∈ [0, 1]` and uniform sampling grids.
//!
//! Discrete schedules map step index `i` to `t = i / N`. Between grid nodes the
//! linear-beta schedule interpolates `ln ᾱ` linearly, so node values are the exact
//! running products and the continuous curve stays strictly decreasing.

use std::f64::consts::FRAC_PI_2;
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Central finite-difference step used for schedules without a closed-form derivative.
pub const FD_STEP: f64 = 1e-5;

/// Nominal step count reported by the continuous kinds.
pub const NOMINAL_STEPS: usize = 1000;

pub const DEFAULT_BETA_START: f64 = 1e-4;
pub const DEFAULT_BETA_END: f64 = 0.02;
pub const DEFAULT_COSINE_OFFSET: f64 = 0.008;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScheduleKind {
    /// `β_i` linear from `beta_start` to `beta_end` over `steps` steps, `ᾱ_i = Π (1 - β_k)`.
    LinearBeta {
        beta_start: f64,
        beta_end: f64,
        steps: usize,
    },
    /// `ᾱ(t) = cos²(((t+s)/(1+s))·π/2) / cos²((s/(1+s))·π/2)`.
    Cosine { s: f64 },
    /// `ᾱ(t) = 1 - t`.
    ToyLinear,
    /// `ᾱ(t) = exp(a t² + b t)`.
    Exponential { a: f64, b: f64 },
}

impl ScheduleKind {
    pub fn name(&self) -> &'static str {
        match self {
            ScheduleKind::LinearBeta { .. } => "linear-beta",
            ScheduleKind::Cosine { .. } => "cosine",
            ScheduleKind::ToyLinear => "toy-linear",
            ScheduleKind::Exponential { .. } => "exponential",
        }
    }
}

/// An immutable variance schedule.
#[derive(Clone, PartialEq)]
pub struct Schedule {
    kind: ScheduleKind,
    /// `ᾱ_i` for `i = 0..=N` (linear-beta only; `ᾱ_0 = 1`).
    products: Option<Arc<[f64]>>,
    /// `ln ᾱ_i`, same indexing as `products`.
    log_products: Option<Arc<[f64]>>,
}

impl fmt::Debug for Schedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Schedule").field("kind", &self.kind).finish()
    }
}

impl Schedule {
    pub fn linear_beta(beta_start: f64, beta_end: f64, steps: usize) -> Result<Self> {
        if steps == 0 {
            return Err(Error::Argument("linear-beta needs at least one step".into()));
        }
        if !(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0) {
            return Err(Error::Argument(format!(
                "linear-beta needs 0 < beta_start <= beta_end < 1, got ({beta_start}, {beta_end})"
            )));
        }
        let mut products = Vec::with_capacity(steps + 1);
        let mut logs = Vec::with_capacity(steps + 1);
        let (mut prod, mut log) = (1.0_f64, 0.0_f64);
        products.push(prod);
        logs.push(log);
        for i in 1..=steps {
            let beta = linear_beta_at(beta_start, beta_end, steps, i);
            prod *= 1.0 - beta;
            log += (-beta).ln_1p();
            products.push(prod);
            logs.push(log);
        }
        Ok(Self {
            kind: ScheduleKind::LinearBeta {
                beta_start,
                beta_end,
                steps,
            },
            products: Some(products.into()),
            log_products: Some(logs.into()),
        })
    }

    /// Linear-beta with `β ∈ [1e-4, 0.02]` over 1000 steps.
    pub fn linear_beta_default() -> Self {
        Self::linear_beta(DEFAULT_BETA_START, DEFAULT_BETA_END, NOMINAL_STEPS)
            .expect("default linear-beta parameters are valid")
    }

    pub fn cosine(s: f64) -> Result<Self> {
        if !(s.is_finite() && s >= 0.0) {
            return Err(Error::Argument(format!("cosine offset must be >= 0, got {s}")));
        }
        Ok(Self::continuous(ScheduleKind::Cosine { s }))
    }

    pub fn toy_linear() -> Self {
        Self::continuous(ScheduleKind::ToyLinear)
    }

    /// `ᾱ(t) = exp(a t² + b t)`; must be strictly decreasing on `(0, 1]`.
    pub fn exponential(a: f64, b: f64) -> Result<Self> {
        let decreasing = b <= 0.0 && 2.0 * a + b <= 0.0 && (a, b) != (0.0, 0.0);
        if !(a.is_finite() && b.is_finite() && decreasing) {
            return Err(Error::Argument(format!(
                "exponential schedule with a = {a}, b = {b} is not strictly decreasing on [0, 1]"
            )));
        }
        Ok(Self::continuous(ScheduleKind::Exponential { a, b }))
    }

    pub fn from_kind(kind: ScheduleKind) -> Result<Self> {
        match kind {
            ScheduleKind::LinearBeta {
                beta_start,
                beta_end,
                steps,
            } => Self::linear_beta(beta_start, beta_end, steps),
            ScheduleKind::Cosine { s } => Self::cosine(s),
            ScheduleKind::ToyLinear => Ok(Self::toy_linear()),
            ScheduleKind::Exponential { a, b } => Self::exponential(a, b),
        }
    }

    fn continuous(kind: ScheduleKind) -> Self {
        Self {
            kind,
            products: None,
            log_products: None,
        }
    }

    pub fn kind(&self) -> ScheduleKind {
        self.kind
    }

    /// Training step count `N` (nominal for continuous kinds).
    pub fn n_train(&self) -> usize {
        match self.kind {
            ScheduleKind::LinearBeta { steps, .. } => steps,
            _ => NOMINAL_STEPS,
        }
    }

    pub fn check_domain(&self, t: f64) -> Result<()> {
        if t.is_finite() && (0.0..=1.0).contains(&t) {
            Ok(())
        } else {
            Err(Error::Domain { t })
        }
    }

    /// Exact running product `ᾱ_i` of a linear-beta schedule.
    pub fn alpha_bar_at_step(&self, i: usize) -> Result<f64> {
        match &self.products {
            Some(p) => p.get(i).copied().ok_or_else(|| {
                Error::Argument(format!("step {i} beyond schedule length {}", p.len() - 1))
            }),
            None => self.alpha_bar(i as f64 / self.n_train() as f64),
        }
    }

    pub fn alpha_bar(&self, t: f64) -> Result<f64> {
        self.check_domain(t)?;
        Ok(match self.kind {
            ScheduleKind::ToyLinear => 1.0 - t,
            ScheduleKind::Exponential { a, b } => (a * t * t + b * t).exp(),
            ScheduleKind::Cosine { s } => cosine_alpha_bar(s, t),
            ScheduleKind::LinearBeta { steps, .. } => {
                let products = self.products.as_ref().expect("linear-beta has a table");
                let logs = self.log_products.as_ref().expect("linear-beta has a table");
                let pos = t * steps as f64;
                let nearest = pos.round();
                if (pos - nearest).abs() <= 1e-12 * steps as f64 {
                    products[nearest as usize]
                } else {
                    let i = pos.floor() as usize;
                    let frac = pos - i as f64;
                    products[i] * (frac * (logs[i + 1] - logs[i])).exp()
                }
            }
        })
    }

    /// `1 - ᾱ(t)`, computed without cancellation where the kind allows it.
    pub fn one_minus_alpha_bar(&self, t: f64) -> Result<f64> {
        self.check_domain(t)?;
        Ok(match self.kind {
            ScheduleKind::ToyLinear => t,
            ScheduleKind::Exponential { a, b } => -(a * t * t + b * t).exp_m1(),
            _ => 1.0 - self.alpha_bar(t)?,
        })
    }

    /// `dᾱ/dt`: closed form for toy-linear and exponential, central difference otherwise.
    pub fn alpha_bar_derivative(&self, t: f64) -> Result<f64> {
        self.check_domain(t)?;
        match self.kind {
            ScheduleKind::ToyLinear => Ok(-1.0),
            ScheduleKind::Exponential { a, b } => Ok((2.0 * a * t + b) * (a * t * t + b * t).exp()),
            ScheduleKind::Cosine { .. } | ScheduleKind::LinearBeta { .. } => {
                if !(FD_STEP..=1.0 - FD_STEP).contains(&t) {
                    return Err(Error::Boundary { t, h: FD_STEP });
                }
                let up = self.alpha_bar(t + FD_STEP)?;
                let down = self.alpha_bar(t - FD_STEP)?;
                Ok((up - down) / (2.0 * FD_STEP))
            }
        }
    }
}

fn linear_beta_at(beta_start: f64, beta_end: f64, steps: usize, i: usize) -> f64 {
    if steps == 1 {
        return beta_start;
    }
    beta_start + (beta_end - beta_start) * (i - 1) as f64 / (steps - 1) as f64
}

fn cosine_alpha_bar(s: f64, t: f64) -> f64 {
    let f = |u: f64| ((u + s) / (1.0 + s) * FRAC_PI_2).cos().powi(2);
    f(t) / f(0.0)
}

/// Strictly decreasing sampling times `t_0 > t_1 > … > t_S >= 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid(Vec<f64>);

impl TimeGrid {
    /// Validates an arbitrary strictly decreasing grid inside `[0, 1]`.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::Argument("time grid needs at least two times".into()));
        }
        if let Some(&t) = values.iter().find(|t| !(t.is_finite() && (0.0..=1.0).contains(*t))) {
            return Err(Error::Domain { t });
        }
        if values.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::Argument("time grid must be strictly decreasing".into()));
        }
        Ok(Self(values))
    }

    /// `steps + 1` evenly spaced times from `t_start` down to `t_end`.
    pub fn uniform(schedule: &Schedule, steps: usize, t_start: f64, t_end: f64) -> Result<Self> {
        if steps == 0 {
            return Err(Error::Argument("step count must be >= 1".into()));
        }
        if !(t_start > t_end && t_end >= 0.0) {
            return Err(Error::Argument(format!(
                "need t_start > t_end >= 0, got [{t_start}, {t_end}]"
            )));
        }
        schedule.check_domain(t_start)?;
        schedule.check_domain(t_end)?;
        let span = t_end - t_start;
        let mut values: Vec<f64> = (0..=steps)
            .map(|i| t_start + span * (i as f64 / steps as f64))
            .collect();
        values[steps] = t_end;
        Self::new(values)
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn steps(&self) -> usize {
        self.0.len() - 1
    }

    pub fn start(&self) -> f64 {
        self.0[0]
    }

    pub fn end(&self) -> f64 {
        self.0[self.0.len() - 1]
    }

    /// Equal spacing up to a relative tolerance of `1e-9`.
    pub fn is_uniform(&self) -> bool {
        let h = (self.start() - self.end()) / self.steps() as f64;
        self.0
            .windows(2)
            .all(|w| ((w[0] - w[1]) - h).abs() <= 1e-9 * h)
    }
}
