//! Evaluation proxies. Perceptual similarity is stood in for by
//! `exp(-mse)` and prompt alignment by an affine rescaling of the target
//! component's log-density:
//!
//! ```text
//! alignment = 1 - 2 * ||x - m_k||^2 / delta2
//! delta2    = min_{j != k} ||m_j - m_k||^2   (4 * var0 when single-component)
//! ```
//!
//! which is 1 exactly at the target mean and at most -1 at every other
//! component mean. Both proxies preserve the orderings the evaluation
//! cares about without requiring pretrained networks.

use crate::editor::{edit, EditConfig};
use crate::error::{Error, Result};
use crate::inversion::{reconstruction_mse, InversionRecord};
use crate::oracle::{Condition, DenoiserOracle, GmmWorld};
use crate::schedule::{NoiseSchedule, State, TimestepPlan};

/// Perceptual-similarity proxy: `exp(-mse)`, in (0, 1], 1 iff identical.
pub fn fidelity(x_edit: &State, x0: &State) -> Result<f64> {
    Ok((-reconstruction_mse(x_edit, x0)?).exp())
}

/// Edit-alignment proxy against the target component of a mixture world.
pub fn alignment(x_edit: &State, target: &Condition, world: &GmmWorld) -> Result<f64> {
    let k = match target {
        Condition::Label(k) => *k,
        Condition::Unconditional => {
            return Err(Error::InvalidCondition(
                "alignment needs a component label target".into(),
            ));
        }
    };
    if k >= world.n_components() {
        return Err(Error::InvalidCondition(format!(
            "label {k} out of range for a world with {} component(s)",
            world.n_components()
        )));
    }
    if x_edit.dim() != world.dim() {
        return Err(Error::DimensionMismatch {
            left: x_edit.dim(),
            right: world.dim(),
        });
    }
    let m_k = &world.means()[k];
    let delta2 = world
        .means()
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != k)
        .map(|(_, m)| m.sq_dist(m_k))
        .fold(f64::INFINITY, f64::min);
    let delta2 = if delta2.is_finite() {
        delta2
    } else {
        4.0 * world.var0()
    };
    if delta2 == 0.0 {
        return Err(Error::NumericDegeneracy(
            "mixture means coincide; alignment scale is undefined".into(),
        ));
    }
    Ok(1.0 - 2.0 * x_edit.sq_dist(m_k) / delta2)
}

/// One point on the editability-fidelity curve: run the edit, then score
/// alignment to the edit target and fidelity to the recorded original.
pub fn tradeoff_point(
    record: &InversionRecord,
    config: &EditConfig,
    oracle: &dyn DenoiserOracle,
    schedule: &NoiseSchedule,
    plan: &TimestepPlan,
    world: &GmmWorld,
) -> Result<(f64, f64)> {
    let out = edit(record, config, oracle, schedule, plan)?;
    let align = alignment(&out, &config.target, world)?;
    let fid = fidelity(&out, record.original())?;
    Ok((align, fid))
}
