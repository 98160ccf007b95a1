//! Latent-noise inversion: walk a sample back up the deterministic
//! reverse process, recording every intermediate latent and noise
//! prediction. Replaying the recorded predictions reproduces the input
//! up to float rounding because each upward transition is the exact
//! algebraic inverse of the downward one; re-predicting instead measures
//! how much the oracle's predictions drift between the two passes.
//!
//! Records serialize to a little-endian binary layout:
//!
//! ```text
//! magic    8 bytes  "IREC0001"
//! d        u64      state dimension
//! n_plan   u64      number of plan entries (latent count)
//! cond     i64      -1 = unconditional, k >= 0 = component label
//! guidance f64      guidance scale used during inversion
//! steps    n_plan * u64          plan, strictly decreasing to 0
//! latents  n_plan * d * f64      row i = latent at steps[i]
//! eps      (n_plan - 1) * d * f64  row i = prediction for steps[i] -> steps[i+1]
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::oracle::{Condition, DenoiserOracle};
use crate::sampler::{ddim_step, guided_eps, sample};
use crate::schedule::{check_dims, check_finite, NoiseSchedule, State, TimestepPlan};

const MAGIC: &[u8; 8] = b"IREC0001";
const MAX_DIM: u64 = 1_000_000;
const MAX_PLAN: u64 = 10_000_001;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReconstructionMode {
    /// Re-run the reverse process with the recorded noise predictions.
    Replay,
    /// Re-run it with fresh oracle predictions under the recorded
    /// condition and guidance scale.
    Repredict,
}

/// Everything the inversion pass saw: the plan, the latent trajectory
/// (index 0 = terminal latent, last = the original sample), and the noise
/// prediction used for each transition.
#[derive(Debug, Clone, PartialEq)]
pub struct InversionRecord {
    plan: TimestepPlan,
    latents: Vec<State>,
    recorded_eps: Vec<State>,
    cond_used: Condition,
    guidance_used: f64,
}

impl InversionRecord {
    pub fn from_parts(
        plan: TimestepPlan,
        latents: Vec<State>,
        recorded_eps: Vec<State>,
        cond_used: Condition,
        guidance_used: f64,
    ) -> Result<Self> {
        if latents.len() != plan.steps().len() {
            return Err(Error::PlanMismatch(format!(
                "{} latents for a plan with {} entries",
                latents.len(),
                plan.steps().len()
            )));
        }
        if recorded_eps.len() != plan.n_steps() {
            return Err(Error::PlanMismatch(format!(
                "{} noise predictions for a plan with {} transitions",
                recorded_eps.len(),
                plan.n_steps()
            )));
        }
        let d = latents[0].dim();
        if latents.iter().chain(&recorded_eps).any(|s| s.dim() != d) {
            return Err(Error::DimensionMismatch {
                left: d,
                right: latents
                    .iter()
                    .chain(&recorded_eps)
                    .map(State::dim)
                    .find(|&x| x != d)
                    .unwrap_or(d),
            });
        }
        if !guidance_used.is_finite() || guidance_used < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "guidance scale must be finite and >= 0, got {guidance_used}"
            )));
        }
        Ok(InversionRecord {
            plan,
            latents,
            recorded_eps,
            cond_used,
            guidance_used,
        })
    }

    pub fn plan(&self) -> &TimestepPlan {
        &self.plan
    }

    pub fn latents(&self) -> &[State] {
        &self.latents
    }

    pub fn recorded_eps(&self) -> &[State] {
        &self.recorded_eps
    }

    /// Latent at the top of the plan (the inversion output).
    pub fn terminal(&self) -> &State {
        &self.latents[0]
    }

    /// The sample the inversion started from.
    pub fn original(&self) -> &State {
        self.latents.last().unwrap()
    }

    pub fn cond_used(&self) -> &Condition {
        &self.cond_used
    }

    pub fn guidance_used(&self) -> f64 {
        self.guidance_used
    }

    pub fn dim(&self) -> usize {
        self.latents[0].dim()
    }

    /// Recorded prediction whose transition timestep is nearest to `t`,
    /// ties resolved toward the larger timestep. `None` when the record
    /// holds no transitions.
    pub fn eps_for_timestep(&self, t: usize) -> Option<&State> {
        if self.recorded_eps.is_empty() {
            return None;
        }
        let steps = self.plan.steps();
        let mut best = 0usize;
        for i in 1..self.recorded_eps.len() {
            if steps[i].abs_diff(t) < steps[best].abs_diff(t) {
                best = i;
            }
        }
        Some(&self.recorded_eps[best])
    }

    pub fn write_to(&self, w: &mut dyn Write) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&(self.dim() as u64).to_le_bytes())?;
        w.write_all(&(self.latents.len() as u64).to_le_bytes())?;
        let cond: i64 = match self.cond_used {
            Condition::Unconditional => -1,
            Condition::Label(k) => k as i64,
        };
        w.write_all(&cond.to_le_bytes())?;
        w.write_all(&self.guidance_used.to_le_bytes())?;
        for &s in self.plan.steps() {
            w.write_all(&(s as u64).to_le_bytes())?;
        }
        for state in self.latents.iter().chain(&self.recorded_eps) {
            for v in state.as_slice() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_from(r: &mut dyn Read) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::RecordFormat(
                "bad magic; not an inversion record".into(),
            ));
        }
        let d = read_u64(r)?;
        let n_plan = read_u64(r)?;
        if d == 0 || d > MAX_DIM {
            return Err(Error::RecordFormat(format!("implausible dimension {d}")));
        }
        if n_plan == 0 || n_plan > MAX_PLAN {
            return Err(Error::RecordFormat(format!(
                "implausible plan length {n_plan}"
            )));
        }
        let cond_raw = read_i64(r)?;
        let cond = match cond_raw {
            -1 => Condition::Unconditional,
            k if k >= 0 => Condition::Label(k as usize),
            k => {
                return Err(Error::RecordFormat(format!("invalid condition code {k}")));
            }
        };
        let guidance = read_f64(r)?;
        if !guidance.is_finite() || guidance < 0.0 {
            return Err(Error::RecordFormat(format!(
                "invalid guidance scale {guidance}"
            )));
        }
        let d = d as usize;
        let n_plan = n_plan as usize;
        let mut steps = Vec::with_capacity(n_plan);
        for _ in 0..n_plan {
            steps.push(read_u64(r)? as usize);
        }
        let plan = TimestepPlan::new(steps)
            .map_err(|e| Error::RecordFormat(format!("invalid stored plan: {e}")))?;
        let read_states = |r: &mut dyn Read, count: usize| -> Result<Vec<State>> {
            let mut out = Vec::with_capacity(count);
            for _ in 0..count {
                let mut values = Vec::with_capacity(d);
                for _ in 0..d {
                    let v = read_f64(r)?;
                    if !v.is_finite() {
                        return Err(Error::RecordFormat("non-finite stored value".into()));
                    }
                    values.push(v);
                }
                out.push(State::new(values)?);
            }
            Ok(out)
        };
        let latents = read_states(r, n_plan)?;
        let recorded_eps = read_states(r, n_plan - 1)?;
        InversionRecord::from_parts(plan, latents, recorded_eps, cond, guidance)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut r = BufReader::new(File::open(path)?);
        InversionRecord::read_from(&mut r)
    }
}

fn read_u64(r: &mut dyn Read) -> Result<u64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(u64::from_le_bytes(buf))
}

fn read_i64(r: &mut dyn Read) -> Result<i64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(i64::from_le_bytes(buf))
}

fn read_f64(r: &mut dyn Read) -> Result<f64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(f64::from_le_bytes(buf))
}

/// Walk `x0` up the plan, recording latents and predictions. For the
/// transition `steps[i] -> steps[i+1]` the stored prediction is the
/// oracle's output at the lower latent with the higher timestep
/// `steps[i]`, which is exactly what the upward step consumes; replaying
/// it downward therefore inverts the map term by term.
pub fn invert(
    x0: &State,
    plan: &TimestepPlan,
    oracle: &dyn DenoiserOracle,
    cond: &Condition,
    guidance_scale: f64,
    schedule: &NoiseSchedule,
) -> Result<InversionRecord> {
    if !schedule.is_deterministic() {
        return Err(Error::StochasticSchedule {
            eta: schedule.eta(),
            context: "inversion is only defined for the deterministic sampler".into(),
        });
    }
    plan.check_against(schedule)?;
    if x0.dim() != oracle.dim() {
        return Err(Error::DimensionMismatch {
            left: x0.dim(),
            right: oracle.dim(),
        });
    }
    check_finite(x0, "inversion input")?;

    let steps = plan.steps();
    let n = plan.n_steps();
    let mut latents = Vec::with_capacity(n + 1);
    let mut recorded_eps = Vec::with_capacity(n);
    let mut x = x0.clone();
    latents.push(x.clone());
    for i in (0..n).rev() {
        let (t, t_prev) = (steps[i], steps[i + 1]);
        let eps = guided_eps(oracle, &x, t, cond, guidance_scale)?;
        x = ddim_inverse(&x, &eps, t_prev, t, schedule)?;
        recorded_eps.push(eps);
        latents.push(x.clone());
    }
    latents.reverse();
    recorded_eps.reverse();
    InversionRecord::from_parts(plan.clone(), latents, recorded_eps, *cond, guidance_scale)
}

// thin alias so the loop above reads in plan order
fn ddim_inverse(
    x_prev: &State,
    eps: &State,
    t_prev: usize,
    t: usize,
    schedule: &NoiseSchedule,
) -> Result<State> {
    crate::sampler::ddim_inverse_step(x_prev, eps, t_prev, t, schedule)
}

/// Decode a record's terminal latent back to sample space.
pub fn reconstruct(
    record: &InversionRecord,
    mode: ReconstructionMode,
    oracle: Option<&dyn DenoiserOracle>,
    schedule: &NoiseSchedule,
) -> Result<State> {
    if !schedule.is_deterministic() {
        return Err(Error::StochasticSchedule {
            eta: schedule.eta(),
            context: "reconstruction replays the deterministic sampler".into(),
        });
    }
    record.plan.check_against(schedule)?;
    match mode {
        ReconstructionMode::Replay => {
            let steps = record.plan.steps();
            let mut x = record.terminal().clone();
            for (i, eps) in record.recorded_eps.iter().enumerate() {
                x = ddim_step(&x, eps, steps[i], steps[i + 1], schedule, None)?;
            }
            Ok(x)
        }
        ReconstructionMode::Repredict => {
            let oracle = oracle.ok_or(Error::MissingOracle)?;
            if oracle.dim() != record.dim() {
                return Err(Error::DimensionMismatch {
                    left: oracle.dim(),
                    right: record.dim(),
                });
            }
            sample(
                record.terminal(),
                &record.plan,
                oracle,
                &record.cond_used,
                record.guidance_used,
                schedule,
                0,
            )
        }
    }
}

/// Mean squared error per coordinate between two states.
pub fn reconstruction_mse(a: &State, b: &State) -> Result<f64> {
    check_dims(a, b)?;
    Ok(a.sq_dist(b) / a.dim() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{AnalyticDenoiser, GaussianWorld, GmmWorld, World};
    use crate::schedule::{build_linear_schedule, plan_timesteps};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn default_schedule() -> NoiseSchedule {
        build_linear_schedule(1000, 1e-4, 0.02, 0.0).unwrap()
    }

    fn gmm_oracle(schedule: &NoiseSchedule) -> AnalyticDenoiser {
        let world = World::Gmm(
            GmmWorld::new(
                vec![0.5, 0.5],
                vec![
                    State::new(vec![3.0, 0.0]).unwrap(),
                    State::new(vec![-3.0, 0.0]).unwrap(),
                ],
                1.0,
            )
            .unwrap(),
        );
        AnalyticDenoiser::new(world, schedule.clone())
    }

    fn gaussian_oracle(schedule: &NoiseSchedule) -> AnalyticDenoiser {
        let world = World::Gaussian(
            GaussianWorld::new(State::new(vec![0.5, -1.0]).unwrap(), 1.0).unwrap(),
        );
        AnalyticDenoiser::new(world, schedule.clone())
    }

    #[test]
    fn empty_plan_records_only_the_input() {
        let s = default_schedule();
        let oracle = gmm_oracle(&s);
        let plan = TimestepPlan::new(vec![0]).unwrap();
        let x0 = State::new(vec![2.5, -0.5]).unwrap();
        let rec = invert(&x0, &plan, &oracle, &Condition::Unconditional, 1.0, &s).unwrap();
        assert_eq!(rec.latents().len(), 1);
        assert!(rec.recorded_eps().is_empty());
        assert_eq!(rec.terminal(), &x0);
        assert_eq!(rec.original(), &x0);
        assert!(rec.eps_for_timestep(5).is_none());
        let back = reconstruct(&rec, ReconstructionMode::Replay, None, &s).unwrap();
        assert_eq!(back, x0);
    }

    #[test]
    fn recorded_eps_uses_higher_timestep() {
        let s = default_schedule();
        let oracle = gmm_oracle(&s);
        let plan = TimestepPlan::new(vec![400, 0]).unwrap();
        let x0 = State::new(vec![2.1, 0.3]).unwrap();
        let rec = invert(&x0, &plan, &oracle, &Condition::Label(0), 1.0, &s).unwrap();
        let want = oracle.predict_eps(&x0, 400, &Condition::Label(0)).unwrap();
        assert_eq!(rec.recorded_eps()[0], want);
    }

    #[test]
    fn latents_are_in_plan_order() {
        let s = default_schedule();
        let oracle = gmm_oracle(&s);
        let plan = plan_timesteps(1000, 4).unwrap();
        let x0 = State::new(vec![2.8, 0.1]).unwrap();
        let rec = invert(&x0, &plan, &oracle, &Condition::Unconditional, 1.0, &s).unwrap();
        assert_eq!(rec.latents().len(), 5);
        assert_eq!(rec.recorded_eps().len(), 4);
        assert_eq!(rec.original(), &x0);
        assert_ne!(rec.terminal(), &x0);
        // marginal variance grows with t, so the terminal latent should
        // look like noise rather than data
        assert!(rec.terminal().sq_dist(&x0) > 0.0);
    }

    #[test]
    fn replay_recovers_the_input() {
        let s = default_schedule();
        let oracle = gmm_oracle(&s);
        let plan = plan_timesteps(1000, 50).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let world = oracle.world().clone();
        for _ in 0..10 {
            let x0 = world
                .sample_x0(&Condition::Unconditional, &mut rng)
                .unwrap();
            let rec = invert(&x0, &plan, &oracle, &Condition::Unconditional, 1.0, &s).unwrap();
            let back = reconstruct(&rec, ReconstructionMode::Replay, None, &s).unwrap();
            assert!(back.max_abs_diff(&x0) < 1e-10);
        }
    }

    #[test]
    fn replay_beats_reprediction() {
        let s = default_schedule();
        let oracle = gaussian_oracle(&s);
        let plan = plan_timesteps(1000, 10).unwrap();
        let x0 = State::new(vec![1.2, -0.4]).unwrap();
        let rec = invert(&x0, &plan, &oracle, &Condition::Unconditional, 1.0, &s).unwrap();
        let replay = reconstruct(&rec, ReconstructionMode::Replay, None, &s).unwrap();
        let repred = reconstruct(&rec, ReconstructionMode::Repredict, Some(&oracle), &s).unwrap();
        let mse_replay = reconstruction_mse(&replay, &x0).unwrap();
        let mse_repred = reconstruction_mse(&repred, &x0).unwrap();
        assert!(mse_replay <= mse_repred);
        assert!(mse_replay < 1e-20);
    }

    #[test]
    fn full_granularity_reprediction_is_tight() {
        let s = default_schedule();
        let oracle = gaussian_oracle(&s);
        let plan = plan_timesteps(1000, 1000).unwrap();
        let x0 = State::new(vec![1.7, -1.3]).unwrap();
        let rec = invert(&x0, &plan, &oracle, &Condition::Unconditional, 1.0, &s).unwrap();
        let repred = reconstruct(&rec, ReconstructionMode::Repredict, Some(&oracle), &s).unwrap();
        assert!(reconstruction_mse(&repred, &x0).unwrap() < 1e-3);
    }

    #[test]
    fn point_mass_roundtrip_is_tight_at_coarse_granularity() {
        let s = default_schedule();
        let mu = State::new(vec![1.5, -0.5]).unwrap();
        let world = World::Gaussian(GaussianWorld::new(mu, 1e-12).unwrap());
        let oracle = AnalyticDenoiser::new(world, s.clone());
        let plan = plan_timesteps(1000, 100).unwrap();
        let x0 = State::new(vec![1.5000004, -0.4999991]).unwrap();
        let rec = invert(&x0, &plan, &oracle, &Condition::Unconditional, 1.0, &s).unwrap();
        let repred = reconstruct(&rec, ReconstructionMode::Repredict, Some(&oracle), &s).unwrap();
        assert!(repred.max_abs_diff(&x0) < 1e-3);
    }

    #[test]
    fn repredict_requires_oracle() {
        let s = default_schedule();
        let oracle = gmm_oracle(&s);
        let plan = plan_timesteps(1000, 5).unwrap();
        let x0 = State::new(vec![0.4, 0.2]).unwrap();
        let rec = invert(&x0, &plan, &oracle, &Condition::Unconditional, 1.0, &s).unwrap();
        assert!(matches!(
            reconstruct(&rec, ReconstructionMode::Repredict, None, &s),
            Err(Error::MissingOracle)
        ));
    }

    #[test]
    fn stochastic_schedules_are_rejected() {
        let s = build_linear_schedule(1000, 1e-4, 0.02, 0.3).unwrap();
        let oracle = gmm_oracle(&s);
        let plan = plan_timesteps(1000, 5).unwrap();
        let x0 = State::new(vec![0.4, 0.2]).unwrap();
        assert!(matches!(
            invert(&x0, &plan, &oracle, &Condition::Unconditional, 1.0, &s),
            Err(Error::StochasticSchedule { .. })
        ));
    }

    #[test]
    fn nearest_timestep_alignment() {
        let s = default_schedule();
        let oracle = gmm_oracle(&s);
        let x0 = State::new(vec![1.0, 1.0]).unwrap();
        let plan = TimestepPlan::new(vec![8, 4, 0]).unwrap();
        let rec = invert(&x0, &plan, &oracle, &Condition::Unconditional, 1.0, &s).unwrap();
        // transition timesteps are 8 and 4
        assert_eq!(rec.eps_for_timestep(8).unwrap(), &rec.recorded_eps()[0]);
        assert_eq!(rec.eps_for_timestep(5).unwrap(), &rec.recorded_eps()[1]);
        assert_eq!(rec.eps_for_timestep(1).unwrap(), &rec.recorded_eps()[1]);
        // equidistant between 8 and 4: prefer the larger timestep
        assert_eq!(rec.eps_for_timestep(6).unwrap(), &rec.recorded_eps()[0]);
        assert_eq!(rec.eps_for_timestep(100).unwrap(), &rec.recorded_eps()[0]);
    }

    #[test]
    fn mse_examples() {
        let a = State::new(vec![1.0, 2.0]).unwrap();
        assert_eq!(reconstruction_mse(&a, &a).unwrap(), 0.0);
        let b = State::new(vec![0.0, 0.0]).unwrap();
        let c = State::new(vec![1.0, 1.0]).unwrap();
        assert_eq!(reconstruction_mse(&b, &c).unwrap(), 1.0);
        let d = State::new(vec![3.0, 4.0]).unwrap();
        assert_eq!(reconstruction_mse(&d, &b).unwrap(), 12.5);
        let e = State::new(vec![1.0]).unwrap();
        assert!(reconstruction_mse(&a, &e).is_err());
    }

    #[test]
    fn record_roundtrips_through_bytes() {
        let s = default_schedule();
        let oracle = gmm_oracle(&s);
        let plan = plan_timesteps(1000, 7).unwrap();
        let x0 = State::new(vec![0.25, -1.5]).unwrap();
        let rec = invert(&x0, &plan, &oracle, &Condition::Label(1), 2.5, &s).unwrap();
        let mut bytes = Vec::new();
        rec.write_to(&mut bytes).unwrap();
        let back = InversionRecord::read_from(&mut bytes.as_slice()).unwrap();
        assert_eq!(back, rec);
        assert_eq!(back.cond_used(), &Condition::Label(1));
        assert_eq!(back.guidance_used(), 2.5);
    }

    #[test]
    fn record_file_roundtrip() {
        let s = default_schedule();
        let oracle = gmm_oracle(&s);
        let plan = plan_timesteps(1000, 3).unwrap();
        let x0 = State::new(vec![0.25, -1.5]).unwrap();
        let rec = invert(&x0, &plan, &oracle, &Condition::Unconditional, 1.0, &s).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sample.rec");
        rec.save(&path).unwrap();
        let back = InversionRecord::load(&path).unwrap();
        assert_eq!(back, rec);
    }

    #[test]
    fn record_read_rejects_corruption() {
        let s = default_schedule();
        let oracle = gmm_oracle(&s);
        let plan = plan_timesteps(1000, 3).unwrap();
        let x0 = State::new(vec![0.25, -1.5]).unwrap();
        let rec = invert(&x0, &plan, &oracle, &Condition::Unconditional, 1.0, &s).unwrap();
        let mut bytes = Vec::new();
        rec.write_to(&mut bytes).unwrap();

        let mut bad_magic = bytes.clone();
        bad_magic[0] = b'X';
        assert!(matches!(
            InversionRecord::read_from(&mut bad_magic.as_slice()),
            Err(Error::RecordFormat(_))
        ));

        let truncated = &bytes[..bytes.len() - 4];
        assert!(InversionRecord::read_from(&mut &truncated[..]).is_err());

        let mut bad_cond = bytes.clone();
        bad_cond[24..32].copy_from_slice(&(-2i64).to_le_bytes());
        assert!(matches!(
            InversionRecord::read_from(&mut bad_cond.as_slice()),
            Err(Error::RecordFormat(_))
        ));
    }

    #[test]
    fn from_parts_validation() {
        let plan = TimestepPlan::new(vec![10, 5, 0]).unwrap();
        let a = State::new(vec![1.0]).unwrap();
        let ok = InversionRecord::from_parts(
            plan.clone(),
            vec![a.clone(), a.clone(), a.clone()],
            vec![a.clone(), a.clone()],
            Condition::Unconditional,
            1.0,
        );
        assert!(ok.is_ok());
        let short = InversionRecord::from_parts(
            plan.clone(),
            vec![a.clone(), a.clone()],
            vec![a.clone(), a.clone()],
            Condition::Unconditional,
            1.0,
        );
        assert!(matches!(short, Err(Error::PlanMismatch(_))));
        let b = State::new(vec![1.0, 2.0]).unwrap();
        let mixed = InversionRecord::from_parts(
            plan,
            vec![a.clone(), b, a.clone()],
            vec![a.clone(), a.clone()],
            Condition::Unconditional,
            1.0,
        );
        assert!(matches!(mixed, Err(Error::DimensionMismatch { .. })));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]
            #[test]
            fn replay_identity_holds_everywhere(
                x0 in -4.0f64..4.0,
                x1 in -4.0f64..4.0,
                n in 1usize..30,
            ) {
                let s = build_linear_schedule(1000, 1e-4, 0.02, 0.0).unwrap();
                let oracle = gmm_oracle(&s);
                let plan = plan_timesteps(1000, n).unwrap();
                let x = State::new(vec![x0, x1]).unwrap();
                let rec = invert(&x, &plan, &oracle, &Condition::Unconditional, 1.0, &s).unwrap();
                let back = reconstruct(&rec, ReconstructionMode::Replay, None, &s).unwrap();
                prop_assert!(back.max_abs_diff(&x) < 1e-5);
            }
        }
    }
}
