//! Deterministic reverse-process stepping and its exact algebraic inverse.
//!
//! One reverse transition `t -> t_prev` writes the update as "estimate x0,
//! then re-noise to the lower level":
//!
//! ```text
//! x0_hat   = (x_t - sqrt(1 - ab_t) * eps) / sqrt(ab_t)
//! x_{t-1}  = sqrt(ab_prev) * x0_hat
//!          + sqrt(1 - ab_prev - sigma^2) * eps
//!          + sigma * z
//! ```
//!
//! With `eta = 0` the map is affine in `(x_t, eps)` and can be inverted in
//! closed form, which is what makes exact latent recovery possible.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::oracle::{Condition, DenoiserOracle};
use crate::schedule::{check_dims, check_finite, lin2, NoiseSchedule, State, TimestepPlan};

/// Estimate of the clean sample implied by a noise prediction at level t.
pub fn predict_x0(x_t: &State, eps: &State, t: usize, schedule: &NoiseSchedule) -> Result<State> {
    if t == 0 || t > schedule.t_max() {
        return Err(Error::InvalidTimestep {
            t,
            reason: format!("x0 prediction needs 1 <= t <= {}", schedule.t_max()),
        });
    }
    check_dims(x_t, eps)?;
    check_finite(x_t, "predict_x0 state")?;
    check_finite(eps, "predict_x0 eps")?;
    let ab = schedule.alpha_bar(t);
    let sab = ab.sqrt();
    let s1m = (1.0 - ab).sqrt();
    let values = x_t
        .as_slice()
        .iter()
        .zip(eps.as_slice())
        .map(|(xi, ei)| (xi - s1m * ei) / sab)
        .collect();
    let out = State::new(values)?;
    if !out.is_finite() {
        return Err(Error::NonFinite(format!(
            "x0 prediction overflowed at t = {t} (alpha_bar = {ab:e})"
        )));
    }
    Ok(out)
}

/// Classifier-free guidance combination `eps_u + s * (eps_c - eps_u)`.
/// The endpoints `s = 0` and `s = 1` return the corresponding input
/// exactly rather than through the arithmetic.
pub fn cfg_combine(eps_uncond: &State, eps_cond: &State, s: f64) -> Result<State> {
    if !s.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "guidance scale must be finite, got {s}"
        )));
    }
    check_dims(eps_uncond, eps_cond)?;
    if s == 0.0 {
        return Ok(eps_uncond.clone());
    }
    if s == 1.0 {
        return Ok(eps_cond.clone());
    }
    Ok(lin2(1.0 - s, eps_uncond, s, eps_cond))
}

/// Guided noise prediction for one state. Unconditional targets and the
/// guidance endpoints need only a single oracle query, so those cases are
/// bitwise identical to the plain prediction.
pub fn guided_eps(
    oracle: &dyn DenoiserOracle,
    x: &State,
    t: usize,
    cond: &Condition,
    guidance_scale: f64,
) -> Result<State> {
    if !guidance_scale.is_finite() || guidance_scale < 0.0 {
        return Err(Error::InvalidParameter(format!(
            "guidance scale must be finite and >= 0, got {guidance_scale}"
        )));
    }
    match cond {
        Condition::Unconditional => oracle.predict_eps(x, t, &Condition::Unconditional),
        Condition::Label(_) if guidance_scale == 1.0 => oracle.predict_eps(x, t, cond),
        Condition::Label(_) if guidance_scale == 0.0 => {
            oracle.predict_eps(x, t, &Condition::Unconditional)
        }
        Condition::Label(_) => {
            let uncond = oracle.predict_eps(x, t, &Condition::Unconditional)?;
            let cond_eps = oracle.predict_eps(x, t, cond)?;
            cfg_combine(&uncond, &cond_eps, guidance_scale)
        }
    }
}

/// One reverse transition `t -> t_prev`. `noise` is only consulted when
/// the schedule makes the step stochastic (`sigma > 0`); passing
/// `t_prev = t` returns the state unchanged.
pub fn ddim_step(
    x_t: &State,
    eps: &State,
    t: usize,
    t_prev: usize,
    schedule: &NoiseSchedule,
    noise: Option<&State>,
) -> Result<State> {
    if t_prev == t {
        check_dims(x_t, eps)?;
        return Ok(x_t.clone());
    }
    if t_prev > t {
        return Err(Error::InvalidParameter(format!(
            "reverse step needs t_prev <= t, got {t_prev} > {t}"
        )));
    }
    let x0 = predict_x0(x_t, eps, t, schedule)?;
    let ab_prev = schedule.alpha_bar(t_prev);
    let sigma = schedule.sigma(t, t_prev);
    let dir_sq = 1.0 - ab_prev - sigma * sigma;
    if dir_sq < 0.0 {
        return Err(Error::NumericDegeneracy(format!(
            "sigma = {sigma} exceeds the noise budget for t_prev = {t_prev} \
             (1 - alpha_bar = {})",
            1.0 - ab_prev
        )));
    }
    let mut out = lin2(ab_prev.sqrt(), &x0, dir_sq.sqrt(), eps);
    if sigma > 0.0 {
        let z = noise.ok_or(Error::MissingNoise(t))?;
        check_dims(x_t, z)?;
        check_finite(z, "reverse step noise")?;
        out = lin2(1.0, &out, sigma, z);
    }
    Ok(out)
}

/// Exact inverse of the deterministic reverse transition: recovers `x_t`
/// from `x_{t_prev}` given the same noise prediction. Requires `eta = 0`;
/// a stochastic step discards information and has no pointwise inverse.
pub fn ddim_inverse_step(
    x_prev: &State,
    eps: &State,
    t_prev: usize,
    t: usize,
    schedule: &NoiseSchedule,
) -> Result<State> {
    if !schedule.is_deterministic() {
        return Err(Error::StochasticSchedule {
            eta: schedule.eta(),
            context: "inversion is only defined for the deterministic sampler".into(),
        });
    }
    if t_prev >= t {
        return Err(Error::InvalidParameter(format!(
            "inverse step needs t_prev < t, got {t_prev} >= {t}"
        )));
    }
    if t > schedule.t_max() {
        return Err(Error::InvalidTimestep {
            t,
            reason: format!("schedule t_max is {}", schedule.t_max()),
        });
    }
    check_dims(x_prev, eps)?;
    check_finite(x_prev, "inverse step state")?;
    check_finite(eps, "inverse step eps")?;
    let ab_t = schedule.alpha_bar(t);
    let ab_prev = schedule.alpha_bar(t_prev);
    // same "strip noise, re-noise" shape as the forward direction, with
    // the roles of t and t_prev exchanged
    let sab_prev = ab_prev.sqrt();
    let s1m_prev = (1.0 - ab_prev).sqrt();
    let sab_t = ab_t.sqrt();
    let s1m_t = (1.0 - ab_t).sqrt();
    let values = x_prev
        .as_slice()
        .iter()
        .zip(eps.as_slice())
        .map(|(xi, ei)| sab_t * ((xi - s1m_prev * ei) / sab_prev) + s1m_t * ei)
        .collect();
    let out = State::new(values)?;
    if !out.is_finite() {
        return Err(Error::NonFinite(format!(
            "inverse step overflowed at t = {t}"
        )));
    }
    Ok(out)
}

/// Run the reverse process along a plan, querying the oracle at every
/// transition. With `eta = 0` no randomness is consumed at all, so the
/// output is a pure function of the inputs; otherwise fresh noise comes
/// from a ChaCha stream seeded with `seed`.
pub fn sample(
    x_start: &State,
    plan: &TimestepPlan,
    oracle: &dyn DenoiserOracle,
    cond: &Condition,
    guidance_scale: f64,
    schedule: &NoiseSchedule,
    seed: u64,
) -> Result<State> {
    plan.check_against(schedule)?;
    if x_start.dim() != oracle.dim() {
        return Err(Error::DimensionMismatch {
            left: x_start.dim(),
            right: oracle.dim(),
        });
    }
    check_finite(x_start, "sampler start state")?;
    let mut rng: Option<ChaCha8Rng> = None;
    let mut x = x_start.clone();
    for (t, t_prev) in plan.transitions() {
        let eps = guided_eps(oracle, &x, t, cond, guidance_scale)?;
        let noise = if schedule.sigma(t, t_prev) > 0.0 {
            let r = rng.get_or_insert_with(|| ChaCha8Rng::seed_from_u64(seed));
            Some(State::standard_normal(x.dim(), r))
        } else {
            None
        };
        x = ddim_step(&x, &eps, t, t_prev, schedule, noise.as_ref())?;
    }
    Ok(x)
}
