//! The nonlinear transfer part `φ(x, ε, t, t')` and the DDIM step built on it.
//!
//! ```text
//! φ = √ᾱ' / √ᾱ · x − (ᾱ' − ᾱ) / (√ᾱ · (√((1−ᾱ')ᾱ) + √((1−ᾱ)ᾱ'))) · ε
//! ```
//!
//! with `ᾱ = ᾱ(t)` and `ᾱ' = ᾱ(t')`. With a fixed `ε`, `φ` is the exact flow of the
//! probability-flow ODE, so a precise `ε` keeps the result on the forward-process
//! curve `√ᾱ x0 + √(1−ᾱ) ε`. `t'` may lie on either side of `t`.

use crate::error::{Error, Result};
use crate::predictor::NoisePredictor;
use crate::schedule::Schedule;
use crate::state::StateVec;

/// Coefficients `(c_x, c_eps)` with `φ = c_x·x + c_eps·ε`.
pub fn phi_coefficients(t: f64, t_next: f64, schedule: &Schedule) -> Result<(f64, f64)> {
    let a = schedule.alpha_bar(t)?;
    let a_next = schedule.alpha_bar(t_next)?;
    if a_next == a {
        return Ok((1.0, 0.0));
    }
    let om = schedule.one_minus_alpha_bar(t)?;
    let om_next = schedule.one_minus_alpha_bar(t_next)?;
    if om <= 0.0 {
        return Err(Error::SingularTime {
            t,
            what: "transfer from alpha_bar = 1 leaves the noise coefficient undetermined",
        });
    }
    if a <= 0.0 {
        return Err(Error::SingularTime {
            t,
            what: "transfer from alpha_bar = 0 divides by zero",
        });
    }
    let sa = a.sqrt();
    let c_x = a_next.sqrt() / sa;
    let c_eps = -(a_next - a) / (sa * ((om_next * a).sqrt() + (om * a_next).sqrt()));
    Ok((c_x, c_eps))
}

/// Applies the transfer part. Returns `x` unchanged when `ᾱ(t_next) = ᾱ(t)`.
pub fn phi(
    x: &StateVec,
    eps: &StateVec,
    t: f64,
    t_next: f64,
    schedule: &Schedule,
) -> Result<StateVec> {
    x.check_dim(eps, "transfer")?;
    let (c_x, c_eps) = phi_coefficients(t, t_next, schedule)?;
    if c_eps == 0.0 && c_x == 1.0 {
        return Ok(x.clone());
    }
    Ok(x.lin_comb(c_x, eps, c_eps))
}

/// One deterministic DDIM update: `φ(x, ε(x, t), t, t_next)`.
pub fn ddim_step<P: NoisePredictor + ?Sized>(
    x: &StateVec,
    t: f64,
    t_next: f64,
    predictor: &P,
    schedule: &Schedule,
) -> Result<StateVec> {
    let eps = predictor.eval(x, t)?;
    phi(x, &eps, t, t_next, schedule)
}
