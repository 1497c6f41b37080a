//! Noise predictors `ε(x, t)` and the forward diffusion process.
//!
//! Three analytic stand-ins for a trained network are provided: the
//! two-dimensional toy field `(sin x[0], cos x[1])`, the exact-noise oracle that
//! inverts the forward process for a known clean sample, and a constant field.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::schedule::Schedule;
use crate::state::StateVec;

/// The gradient-part function `ε(x, t)`.
///
/// Implementations must be deterministic and return a vector of the input's dimension.
pub trait NoisePredictor: Send + Sync {
    fn eval(&self, x: &StateVec, t: f64) -> Result<StateVec>;

    /// Required input dimension, if fixed.
    fn dim(&self) -> Option<usize>;

    fn name(&self) -> &'static str;
}

/// `ε(x) = (sin x[0], cos x[1])`, independent of `t`.
#[derive(Debug, Clone, Copy, Default)]
pub struct AnalyticToy;

pub fn eval_analytic_toy(x: &StateVec, _t: f64) -> Result<StateVec> {
    if x.dim() != 2 {
        return Err(Error::Argument(format!(
            "analytic toy predictor needs dimension 2, got {}",
            x.dim()
        )));
    }
    Ok(StateVec::from_raw(vec![x[0].sin(), x[1].cos()]))
}

impl NoisePredictor for AnalyticToy {
    fn eval(&self, x: &StateVec, t: f64) -> Result<StateVec> {
        eval_analytic_toy(x, t)
    }

    fn dim(&self) -> Option<usize> {
        Some(2)
    }

    fn name(&self) -> &'static str {
        "analytic-toy"
    }
}

/// Recovers the exact noise in `x` given the clean sample `x0`.
#[derive(Debug, Clone)]
pub struct ExactOracle {
    x0: StateVec,
    schedule: Schedule,
}

impl ExactOracle {
    pub fn new(x0: StateVec, schedule: Schedule) -> Self {
        Self { x0, schedule }
    }

    pub fn x0(&self) -> &StateVec {
        &self.x0
    }
}

/// `(x - √ᾱ(t)·x0) / √(1 - ᾱ(t))`.
pub fn eval_exact_oracle(
    x: &StateVec,
    t: f64,
    x0: &StateVec,
    schedule: &Schedule,
) -> Result<StateVec> {
    x.check_dim(x0, "exact oracle")?;
    let ab = schedule.alpha_bar(t)?;
    let one_minus = schedule.one_minus_alpha_bar(t)?;
    if one_minus <= 0.0 {
        return Err(Error::SingularTime {
            t,
            what: "noise is undefined where alpha_bar = 1",
        });
    }
    let (sa, sn) = (ab.sqrt(), one_minus.sqrt());
    Ok(StateVec::from_raw(
        x.as_slice()
            .iter()
            .zip(x0.as_slice())
            .map(|(xi, x0i)| (xi - sa * x0i) / sn)
            .collect(),
    ))
}

impl NoisePredictor for ExactOracle {
    fn eval(&self, x: &StateVec, t: f64) -> Result<StateVec> {
        eval_exact_oracle(x, t, &self.x0, &self.schedule)
    }

    fn dim(&self) -> Option<usize> {
        Some(self.x0.dim())
    }

    fn name(&self) -> &'static str {
        "exact-oracle"
    }
}

/// Returns `eps0` for every input.
#[derive(Debug, Clone)]
pub struct ConstantNoise {
    eps0: StateVec,
}

impl ConstantNoise {
    pub fn new(eps0: StateVec) -> Self {
        Self { eps0 }
    }

    pub fn zeros(dim: usize) -> Self {
        Self::new(StateVec::zeros(dim))
    }
}

impl NoisePredictor for ConstantNoise {
    fn eval(&self, x: &StateVec, _t: f64) -> Result<StateVec> {
        x.check_dim(&self.eps0, "constant predictor")?;
        Ok(self.eps0.clone())
    }

    fn dim(&self) -> Option<usize> {
        Some(self.eps0.dim())
    }

    fn name(&self) -> &'static str {
        "constant"
    }
}

/// `√ᾱ(t)·x0 + √(1 - ᾱ(t))·ε`.
pub fn forward_diffuse(
    x0: &StateVec,
    eps: &StateVec,
    schedule: &Schedule,
    t: f64,
) -> Result<StateVec> {
    x0.check_dim(eps, "forward diffusion")?;
    let sa = schedule.alpha_bar(t)?.sqrt();
    let sn = schedule.one_minus_alpha_bar(t)?.sqrt();
    Ok(x0.lin_comb(sa, eps, sn))
}

/// Standard normal vector from a seeded ChaCha8 stream.
pub fn gaussian_noise(seed: u64, dim: usize) -> StateVec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    gaussian_from(&mut rng, dim)
}

pub(crate) fn gaussian_from<R: Rng>(rng: &mut R, dim: usize) -> StateVec {
    StateVec::from_raw((0..dim).map(|_| rng.sample(StandardNormal)).collect())
}

/// Configuration-level description of a predictor.
#[derive(Debug, Clone, PartialEq)]
pub enum PredictorSpec {
    AnalyticToy,
    ExactOracle { x0: StateVec },
    Constant { eps0: StateVec },
}

impl PredictorSpec {
    pub fn dim(&self) -> usize {
        match self {
            PredictorSpec::AnalyticToy => 2,
            PredictorSpec::ExactOracle { x0 } => x0.dim(),
            PredictorSpec::Constant { eps0 } => eps0.dim(),
        }
    }

    pub fn build(&self, schedule: &Schedule) -> Box<dyn NoisePredictor> {
        match self {
            PredictorSpec::AnalyticToy => Box::new(AnalyticToy),
            PredictorSpec::ExactOracle { x0 } => {
                Box::new(ExactOracle::new(x0.clone(), schedule.clone()))
            }
            PredictorSpec::Constant { eps0 } => Box::new(ConstantNoise::new(eps0.clone())),
        }
    }

    /// Seeded starting point at `t_start`.
    ///
    /// The toy problem starts from `U(0, 1)²`; the exact oracle starts on the
    /// forward-process point built from standard normal noise; constant
    /// predictors start from standard normal noise.
    pub fn initial_state(&self, seed: u64, schedule: &Schedule, t_start: f64) -> Result<StateVec> {
        match self {
            PredictorSpec::AnalyticToy => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                Ok(StateVec::from_raw(
                    (0..2).map(|_| rng.random_range(0.0..1.0)).collect(),
                ))
            }
            PredictorSpec::ExactOracle { x0 } => {
                let eps = gaussian_noise(seed, x0.dim());
                forward_diffuse(x0, &eps, schedule, t_start)
            }
            PredictorSpec::Constant { eps0 } => Ok(gaussian_noise(seed, eps0.dim())),
        }
    }
}
