//! Two-stage editing: decode an inverted record toward an edit target,
//! merging the guided noise prediction with the recorded inversion noise.
//! The merge weight `lambda` trades edit strength (0 = pure guided
//! decode) against fidelity to the original sample (1 = pure replay when
//! the plans line up). Injection can be limited to every k-th step, to
//! the first step only, or cut off below a timestep floor.

use crate::error::{Error, Result};
use crate::inversion::InversionRecord;
use crate::oracle::{Condition, DenoiserOracle};
use crate::sampler::{ddim_step, guided_eps};
use crate::schedule::{check_dims, lin2, NoiseSchedule, State, TimestepPlan};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InjectionSource {
    /// Merge against the recorded prediction whose timestep is nearest
    /// to the current one.
    PerStepEps,
    /// Merge against the record's terminal latent at every injected step.
    TerminalLatent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InjectionMode {
    /// Inject on every step index divisible by `inject_every_k`.
    Continual,
    /// Inject on the first step only.
    InitialOnly,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EditConfig {
    pub lambda: f64,
    pub inject_every_k: usize,
    pub stop_fraction: f64,
    pub injection_source: InjectionSource,
    pub injection_mode: InjectionMode,
    pub guidance_scale: f64,
    pub target: Condition,
}

impl Default for EditConfig {
    fn default() -> Self {
        EditConfig {
            lambda: 0.5,
            inject_every_k: 1,
            stop_fraction: 0.0,
            injection_source: InjectionSource::PerStepEps,
            injection_mode: InjectionMode::Continual,
            guidance_scale: 3.0,
            target: Condition::Unconditional,
        }
    }
}

impl EditConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.lambda.is_finite() || !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::InvalidParameter(format!(
                "edit lambda must lie in [0, 1], got {}",
                self.lambda
            )));
        }
        if self.inject_every_k == 0 {
            return Err(Error::InvalidParameter(
                "inject_every_k must be at least 1".into(),
            ));
        }
        if !self.stop_fraction.is_finite() || !(0.0..=1.0).contains(&self.stop_fraction) {
            return Err(Error::InvalidParameter(format!(
                "stop_fraction must lie in [0, 1], got {}",
                self.stop_fraction
            )));
        }
        if !self.guidance_scale.is_finite() || self.guidance_scale < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "guidance scale must be finite and >= 0, got {}",
                self.guidance_scale
            )));
        }
        Ok(())
    }

    /// Timestep floor below which injection is disabled, relative to the
    /// top of the decode plan. `stop_fraction = 1` disables injection
    /// entirely because no planned timestep exceeds the floor.
    pub fn t_stop(&self, plan: &TimestepPlan) -> usize {
        (self.stop_fraction * plan.t_start() as f64).ceil() as usize
    }
}

/// Convex merge `(1 - lambda) * guided + lambda * injected`. Endpoints
/// return the corresponding input exactly.
pub fn merge_noise(eps_guided: &State, eps_injected: &State, lambda: f64) -> Result<State> {
    if !lambda.is_finite() || !(0.0..=1.0).contains(&lambda) {
        return Err(Error::InvalidParameter(format!(
            "merge lambda must lie in [0, 1], got {lambda}"
        )));
    }
    check_dims(eps_guided, eps_injected)?;
    if lambda == 0.0 {
        return Ok(eps_guided.clone());
    }
    if lambda == 1.0 {
        return Ok(eps_injected.clone());
    }
    Ok(lin2(1.0 - lambda, eps_guided, lambda, eps_injected))
}

/// Decode the record's terminal latent along `plan`, steering toward
/// `config.target` and injecting recorded noise where the config allows.
/// With `lambda = 0` the recorded predictions are never consulted, so the
/// output is exactly the plain guided decode.
pub fn edit(
    record: &InversionRecord,
    config: &EditConfig,
    oracle: &dyn DenoiserOracle,
    schedule: &NoiseSchedule,
    plan: &TimestepPlan,
) -> Result<State> {
    config.validate()?;
    if !schedule.is_deterministic() {
        return Err(Error::StochasticSchedule {
            eta: schedule.eta(),
            context: "editing replays the deterministic sampler".into(),
        });
    }
    plan.check_against(schedule)?;
    if record.dim() != oracle.dim() {
        return Err(Error::DimensionMismatch {
            left: record.dim(),
            right: oracle.dim(),
        });
    }
    let t_stop = config.t_stop(plan);
    let mut x = record.terminal().clone();
    for (j, (t, t_prev)) in plan.transitions().enumerate() {
        let guided = guided_eps(oracle, &x, t, &config.target, config.guidance_scale)?;
        let scheduled = match config.injection_mode {
            InjectionMode::Continual => j % config.inject_every_k == 0,
            InjectionMode::InitialOnly => j == 0,
        };
        let eps = if scheduled && t > t_stop && config.lambda > 0.0 {
            let injected = match config.injection_source {
                InjectionSource::PerStepEps => record.eps_for_timestep(t).ok_or_else(|| {
                    Error::PlanMismatch(
                        "record holds no noise predictions to inject".into(),
                    )
                })?,
                InjectionSource::TerminalLatent => record.terminal(),
            };
            merge_noise(&guided, injected, config.lambda)?
        } else {
            guided
        };
        x = ddim_step(&x, &eps, t, t_prev, schedule, None)?;
    }
    Ok(x)
}
