//! Diffusion-time bookkeeping: cumulative signal levels, timestep plans,
//! and the forward corruption map. Timesteps are integers in `0..=T`
//! where `t = 0` is clean data; `alpha_bar` is stored with the `t = 0`
//! sentinel so `alpha_bar(0) == 1` holds by construction.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// A point in sample space: a fixed-dimension vector of finite f64s.
#[derive(Debug, Clone, PartialEq)]
pub struct State(Vec<f64>);

impl State {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidParameter(
                "state must have at least one coordinate".into(),
            ));
        }
        Ok(State(values))
    }

    pub fn zeros(dim: usize) -> Result<Self> {
        State::new(vec![0.0; dim])
    }

    /// Vector of i.i.d. draws from N(0, 1).
    pub fn standard_normal<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Self {
        assert!(dim >= 1, "state dimension must be at least 1");
        State((0..dim).map(|_| rng.sample(StandardNormal)).collect())
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    /// Largest coordinate-wise absolute difference. Panics on dimension
    /// mismatch; callers compare states they already know to be compatible.
    pub fn max_abs_diff(&self, other: &State) -> f64 {
        assert_eq!(self.dim(), other.dim(), "state dimensions differ");
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Squared Euclidean distance. Panics on dimension mismatch.
    pub fn sq_dist(&self, other: &State) -> f64 {
        assert_eq!(self.dim(), other.dim(), "state dimensions differ");
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b) * (a - b))
            .sum()
    }
}

impl std::ops::Index<usize> for State {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

pub(crate) fn check_dims(a: &State, b: &State) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            left: a.dim(),
            right: b.dim(),
        });
    }
    Ok(())
}

/// a*x + b*y, dimensions assumed already checked.
pub(crate) fn lin2(a: f64, x: &State, b: f64, y: &State) -> State {
    debug_assert_eq!(x.dim(), y.dim());
    State(
        x.as_slice()
            .iter()
            .zip(y.as_slice())
            .map(|(xi, yi)| a * xi + b * yi)
            .collect(),
    )
}

pub(crate) fn check_finite(x: &State, what: &str) -> Result<()> {
    if !x.is_finite() {
        return Err(Error::NonFinite(what.into()));
    }
    Ok(())
}

/// Cumulative signal schedule `alpha_bar[0..=T]` plus the stochasticity
/// knob `eta`. `alpha_bar[0] = 1` and the sequence is strictly decreasing
/// inside (0, 1), so every reverse-process coefficient below is well
/// defined for `1 <= t <= T`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    alpha_bar: Vec<f64>,
    eta: f64,
}

impl NoiseSchedule {
    pub fn new(alpha_bar: Vec<f64>, eta: f64) -> Result<Self> {
        if alpha_bar.len() < 2 {
            return Err(Error::InvalidParameter(
                "schedule needs alpha_bar for t = 0 and at least one diffusion step".into(),
            ));
        }
        if alpha_bar[0] != 1.0 {
            return Err(Error::InvalidParameter(format!(
                "alpha_bar[0] must be 1, got {}",
                alpha_bar[0]
            )));
        }
        for (t, w) in alpha_bar.windows(2).enumerate() {
            let (prev, cur) = (w[0], w[1]);
            if !cur.is_finite() || cur <= 0.0 || cur >= prev {
                return Err(Error::InvalidParameter(format!(
                    "alpha_bar must decrease strictly within (0, 1): alpha_bar[{}] = {}",
                    t + 1,
                    cur
                )));
            }
        }
        if !eta.is_finite() || eta < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "eta must be finite and >= 0, got {eta}"
            )));
        }
        Ok(NoiseSchedule { alpha_bar, eta })
    }

    /// Number of diffusion steps T; valid timesteps are `0..=T`.
    pub fn t_max(&self) -> usize {
        self.alpha_bar.len() - 1
    }

    pub fn alpha_bar(&self, t: usize) -> f64 {
        self.alpha_bar[t]
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn is_deterministic(&self) -> bool {
        self.eta == 0.0
    }

    /// Reverse-step noise scale sigma for the jump `t -> t_prev`.
    /// Exactly zero when `eta = 0` or when landing on `t_prev = 0`.
    pub fn sigma(&self, t: usize, t_prev: usize) -> f64 {
        assert!(t_prev < t && t <= self.t_max() && t >= 1);
        if self.eta == 0.0 {
            return 0.0;
        }
        let ab_t = self.alpha_bar[t];
        let ab_prev = self.alpha_bar[t_prev];
        self.eta * ((1.0 - ab_prev) / (1.0 - ab_t)).sqrt() * (1.0 - ab_t / ab_prev).sqrt()
    }
}

/// Standard linear-beta schedule: per-step rates interpolate from
/// `beta_start` to `beta_end` over steps `1..=T`, and
/// `alpha_bar[t] = prod_{s<=t} (1 - beta_s)`. With one step the rate is
/// just `beta_start`.
pub fn build_linear_schedule(
    train_steps: usize,
    beta_start: f64,
    beta_end: f64,
    eta: f64,
) -> Result<NoiseSchedule> {
    if train_steps < 1 {
        return Err(Error::InvalidParameter(
            "train_steps must be at least 1".into(),
        ));
    }
    if !(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "betas must satisfy 0 < beta_start <= beta_end < 1, got [{beta_start}, {beta_end}]"
        )));
    }
    let mut alpha_bar = Vec::with_capacity(train_steps + 1);
    alpha_bar.push(1.0);
    let mut acc = 1.0;
    for s in 1..=train_steps {
        let beta = if train_steps == 1 {
            beta_start
        } else {
            beta_start + (beta_end - beta_start) * (s - 1) as f64 / (train_steps - 1) as f64
        };
        acc *= 1.0 - beta;
        alpha_bar.push(acc);
    }
    NoiseSchedule::new(alpha_bar, eta)
}

/// Descending timestep sequence ending at 0. A plan of `[0]` alone is
/// legal and describes zero transitions.
#[derive(Debug, Clone, PartialEq)]
pub struct TimestepPlan {
    steps: Vec<usize>,
}

impl TimestepPlan {
    pub fn new(steps: Vec<usize>) -> Result<Self> {
        if steps.is_empty() {
            return Err(Error::InvalidParameter("plan must not be empty".into()));
        }
        if *steps.last().unwrap() != 0 {
            return Err(Error::InvalidParameter("plan must end at t = 0".into()));
        }
        if steps.windows(2).any(|w| w[0] <= w[1]) {
            return Err(Error::InvalidParameter(
                "plan timesteps must be strictly decreasing".into(),
            ));
        }
        Ok(TimestepPlan { steps })
    }

    pub fn steps(&self) -> &[usize] {
        &self.steps
    }

    /// Number of denoising transitions the plan describes.
    pub fn n_steps(&self) -> usize {
        self.steps.len() - 1
    }

    pub fn t_start(&self) -> usize {
        self.steps[0]
    }

    /// `(t, t_prev)` pairs in decoding order (high to low).
    pub fn transitions(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.steps.windows(2).map(|w| (w[0], w[1]))
    }

    pub fn check_against(&self, schedule: &NoiseSchedule) -> Result<()> {
        if self.t_start() > schedule.t_max() {
            return Err(Error::InvalidTimestep {
                t: self.t_start(),
                reason: format!("plan exceeds schedule t_max = {}", schedule.t_max()),
            });
        }
        Ok(())
    }
}

/// Evenly respaced plan over `train_steps` with `n_steps` transitions:
/// stride `floor(T / n)` down to 0, starting at `n * stride`.
pub fn plan_timesteps(train_steps: usize, n_steps: usize) -> Result<TimestepPlan> {
    if n_steps < 1 || n_steps > train_steps {
        return Err(Error::InvalidParameter(format!(
            "n_steps must be in 1..={train_steps}, got {n_steps}"
        )));
    }
    let stride = train_steps / n_steps;
    let steps = (0..=n_steps).rev().map(|i| i * stride).collect();
    TimestepPlan::new(steps)
}

/// Forward corruption: `sqrt(alpha_bar_t) * x0 + sqrt(1 - alpha_bar_t) * eps`.
pub fn forward_diffuse(
    x0: &State,
    eps: &State,
    t: usize,
    schedule: &NoiseSchedule,
) -> Result<State> {
    if t > schedule.t_max() {
        return Err(Error::InvalidTimestep {
            t,
            reason: format!("forward diffusion needs t <= {}", schedule.t_max()),
        });
    }
    check_dims(x0, eps)?;
    check_finite(x0, "forward_diffuse x0")?;
    check_finite(eps, "forward_diffuse eps")?;
    let ab = schedule.alpha_bar(t);
    Ok(lin2(ab.sqrt(), x0, (1.0 - ab).sqrt(), eps))
}
