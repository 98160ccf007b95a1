//! Deterministic experiment sweeps emitting CSV: reconstruction error vs
//! step count, the inversion-steps sweep and its 2-D grid, and the
//! lambda/guidance surface with its fixed-guidance tradeoff curve.
//!
//! Every sweep is a pure function of (context, lists): inputs are drawn
//! from one seeded stream, cells are evaluated independently (optionally
//! in parallel), and rows keep sweep order, so re-running a sweep yields
//! byte-identical CSV. A failing cell never drops its row; it reports
//! its reason in the trailing `error` column instead.

use rayon::prelude::*;

use crate::editor::{edit, EditConfig};
use crate::error::{Error, Result};
use crate::inversion::{invert, reconstruct, reconstruction_mse, InversionRecord, ReconstructionMode};
use crate::metrics::{alignment, fidelity};
use crate::oracle::{AnalyticDenoiser, Condition, DenoiserOracle, GmmWorld, World};
use crate::sampler::sample;
use crate::schedule::{plan_timesteps, NoiseSchedule, State};

/// Shared sweep inputs: the world and schedule under test, the source
/// distribution the seeded inputs are drawn from, and the condition the
/// inversion pass runs under.
#[derive(Debug, Clone)]
pub struct SweepContext<'a> {
    pub schedule: &'a NoiseSchedule,
    pub world: &'a World,
    pub source: Condition,
    pub inversion_cond: Condition,
    pub inversion_guidance: f64,
    pub n_inputs: usize,
    /// Plan granularity for the lambda/guidance sweeps (both stages).
    pub n_steps: usize,
    pub seed: u64,
    pub jobs: usize,
}

impl<'a> SweepContext<'a> {
    pub fn new(schedule: &'a NoiseSchedule, world: &'a World) -> Self {
        SweepContext {
            schedule,
            world,
            source: Condition::Unconditional,
            inversion_cond: Condition::Unconditional,
            inversion_guidance: 1.0,
            n_inputs: 30,
            n_steps: 100,
            seed: 0,
            jobs: 1,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n_inputs == 0 {
            return Err(Error::InvalidParameter("n_inputs must be at least 1".into()));
        }
        if self.jobs == 0 {
            return Err(Error::InvalidParameter("jobs must be at least 1".into()));
        }
        if self.n_steps == 0 || self.n_steps > self.schedule.t_max() {
            return Err(Error::InvalidParameter(format!(
                "n_steps must be in 1..={}, got {}",
                self.schedule.t_max(),
                self.n_steps
            )));
        }
        if !self.schedule.is_deterministic() {
            return Err(Error::StochasticSchedule {
                eta: self.schedule.eta(),
                context: "sweeps run the deterministic pipeline".into(),
            });
        }
        self.world.check_condition(&self.source)?;
        self.world.check_condition(&self.inversion_cond)?;
        if !self.inversion_guidance.is_finite() || self.inversion_guidance < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "inversion guidance must be finite and >= 0, got {}",
                self.inversion_guidance
            )));
        }
        Ok(())
    }

    fn draw_inputs(&self) -> Result<Vec<State>> {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(self.seed);
        (0..self.n_inputs)
            .map(|_| self.world.sample_x0(&self.source, &mut rng))
            .collect()
    }

    fn oracle(&self) -> AnalyticDenoiser {
        AnalyticDenoiser::new(self.world.clone(), self.schedule.clone())
    }

    /// Mixture view of the world for the alignment metric; a plain
    /// Gaussian becomes its single-component equivalent.
    fn gmm_view(&self) -> Result<GmmWorld> {
        match self.world {
            World::Gmm(w) => Ok(w.clone()),
            World::Gaussian(g) => GmmWorld::new(vec![1.0], vec![g.mu().clone()], g.var0()),
        }
    }

    fn metadata(&self, sweep: &str, extras: &[String], with_alignment: bool) -> Vec<String> {
        let mut lines = vec![
            format!(
                "generator = {} {}",
                env!("CARGO_PKG_NAME"),
                env!("CARGO_PKG_VERSION")
            ),
            format!("sweep = {sweep}"),
            format!("seed = {}", self.seed),
            format!("jobs = {}", self.jobs),
            format!("n_inputs = {}", self.n_inputs),
            format!("world = {}", self.world),
            format!(
                "schedule = T={} eta={} alpha_bar_T={:e}",
                self.schedule.t_max(),
                self.schedule.eta(),
                self.schedule.alpha_bar(self.schedule.t_max())
            ),
            format!("source = {}", self.source),
            format!(
                "inversion = {} guidance={}",
                self.inversion_cond, self.inversion_guidance
            ),
        ];
        lines.extend(extras.iter().cloned());
        lines.push(
            "metric mse = mean squared error per coordinate against the original sample".into(),
        );
        lines.push(
            "metric fidelity = exp(-mse); perceptual-similarity stand-in, 1 iff identical".into(),
        );
        if with_alignment {
            lines.push(
                "metric alignment = 1 - 2*||x - m_target||^2 / delta2, delta2 = min squared \
                 distance from the target mean to any other component mean (4*var0 when \
                 single-component); prompt-similarity stand-in, 1 at the target mean, <= -1 \
                 at every other component mean"
                    .into(),
            );
        }
        lines
    }
}

/// A finished sweep: `#`-prefixed metadata, a header row, and data rows.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepTable {
    comments: Vec<String>,
    columns: Vec<&'static str>,
    rows: Vec<Vec<String>>,
}

impl SweepTable {
    pub fn comments(&self) -> &[String] {
        &self.comments
    }

    pub fn columns(&self) -> &[&'static str] {
        &self.columns
    }

    pub fn rows(&self) -> &[Vec<String>] {
        &self.rows
    }

    /// Value at (row, column name), if present.
    pub fn value(&self, row: usize, column: &str) -> Option<&str> {
        let idx = self.columns.iter().position(|c| *c == column)?;
        self.rows.get(row).map(|r| r[idx].as_str())
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for line in &self.comments {
            out.push_str("# ");
            out.push_str(line);
            out.push('\n');
        }
        out.push_str(&self.columns.join(","));
        out.push('\n');
        for row in &self.rows {
            let fields: Vec<String> = row.iter().map(|f| csv_field(f)).collect();
            out.push_str(&fields.join(","));
            out.push('\n');
        }
        out
    }
}

fn csv_field(s: &str) -> String {
    if s.contains(',') || s.contains('"') || s.contains('\n') {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Evaluate independent cells, preserving input order. `jobs = 1` stays
/// on the caller thread; more jobs fan out over a dedicated pool.
fn run_cells<T, R, F>(jobs: usize, items: &[T], f: F) -> Result<Vec<R>>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Send + Sync,
{
    if jobs <= 1 {
        Ok(items.iter().map(&f).collect())
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| Error::InvalidParameter(format!("worker pool: {e}")))?;
        Ok(pool.install(|| items.par_iter().map(&f).collect()))
    }
}

fn assemble_row(
    coords: Vec<String>,
    n_metrics: usize,
    outcome: std::result::Result<Vec<String>, String>,
) -> Vec<String> {
    let mut row = coords;
    match outcome {
        Ok(fields) => {
            debug_assert_eq!(fields.len(), n_metrics);
            row.extend(fields);
            row.push(String::new());
        }
        Err(reason) => {
            row.extend(std::iter::repeat_n(String::new(), n_metrics));
            row.push(reason);
        }
    }
    row
}

/// Invert and re-predict each input at every step count, reporting the
/// spread of reconstruction error. One row per entry of `steps_list`.
pub fn sweep_reconstruction(ctx: &SweepContext, steps_list: &[usize]) -> Result<SweepTable> {
    ctx.validate()?;
    if steps_list.is_empty() {
        return Err(Error::InvalidParameter("steps_list must not be empty".into()));
    }
    let inputs = ctx.draw_inputs()?;
    let oracle = ctx.oracle();

    let cell = |n: &usize| -> std::result::Result<Vec<String>, String> {
        let plan = plan_timesteps(ctx.schedule.t_max(), *n).map_err(|e| e.to_string())?;
        let mut mses = Vec::with_capacity(inputs.len());
        for x0 in &inputs {
            let rec = invert(
                x0,
                &plan,
                &oracle,
                &ctx.inversion_cond,
                ctx.inversion_guidance,
                ctx.schedule,
            )
            .map_err(|e| e.to_string())?;
            let out = reconstruct(
                &rec,
                ReconstructionMode::Repredict,
                Some(&oracle as &dyn DenoiserOracle),
                ctx.schedule,
            )
            .map_err(|e| e.to_string())?;
            mses.push(reconstruction_mse(&out, x0).map_err(|e| e.to_string())?);
        }
        let (mean, std) = mean_std(&mses);
        Ok(vec![mean.to_string(), std.to_string()])
    };

    let outcomes = run_cells(ctx.jobs, steps_list, cell)?;
    let rows = steps_list
        .iter()
        .zip(outcomes)
        .map(|(n, outcome)| assemble_row(vec![n.to_string()], 2, outcome))
        .collect();
    let extras = vec![format!("steps_list = {steps_list:?}")];
    Ok(SweepTable {
        comments: ctx.metadata("reconstruction", &extras, false),
        columns: vec!["n_steps", "mean_mse", "std_mse", "error"],
        rows,
    })
}

/// One-axis slice of the steps grid: vary inversion granularity at a
/// fixed decoding granularity.
pub fn sweep_inversion_steps(
    ctx: &SweepContext,
    inference_steps_fixed: usize,
    inversion_steps_list: &[usize],
) -> Result<SweepTable> {
    steps_grid(
        ctx,
        "inversion_steps",
        inversion_steps_list,
        &[inference_steps_fixed],
    )
}

/// Full inversion-steps x inference-steps grid.
pub fn sweep_steps_grid(
    ctx: &SweepContext,
    inversion_steps_list: &[usize],
    inference_steps_list: &[usize],
) -> Result<SweepTable> {
    steps_grid(ctx, "grid", inversion_steps_list, inference_steps_list)
}

fn steps_grid(
    ctx: &SweepContext,
    name: &str,
    inversion_steps_list: &[usize],
    inference_steps_list: &[usize],
) -> Result<SweepTable> {
    ctx.validate()?;
    if inversion_steps_list.is_empty() || inference_steps_list.is_empty() {
        return Err(Error::InvalidParameter(
            "steps lists must not be empty".into(),
        ));
    }
    let inputs = ctx.draw_inputs()?;
    let oracle = ctx.oracle();

    // invert once per inversion granularity, share across the row
    let records: Vec<std::result::Result<Vec<InversionRecord>, String>> = inversion_steps_list
        .iter()
        .map(|n_inv| {
            let plan = plan_timesteps(ctx.schedule.t_max(), *n_inv).map_err(|e| e.to_string())?;
            inputs
                .iter()
                .map(|x0| {
                    invert(
                        x0,
                        &plan,
                        &oracle,
                        &ctx.inversion_cond,
                        ctx.inversion_guidance,
                        ctx.schedule,
                    )
                    .map_err(|e| e.to_string())
                })
                .collect()
        })
        .collect();

    let cells: Vec<(usize, usize)> = inversion_steps_list
        .iter()
        .enumerate()
        .flat_map(|(i, _)| (0..inference_steps_list.len()).map(move |j| (i, j)))
        .collect();

    let cell = |&(i, j): &(usize, usize)| -> std::result::Result<Vec<String>, String> {
        let recs = records[i].as_ref().map_err(|e| e.clone())?;
        let n_inf = inference_steps_list[j];
        let plan = plan_timesteps(ctx.schedule.t_max(), n_inf).map_err(|e| e.to_string())?;
        let mut mses = Vec::with_capacity(inputs.len());
        let mut fids = Vec::with_capacity(inputs.len());
        for (x0, rec) in inputs.iter().zip(recs) {
            let out = sample(
                rec.terminal(),
                &plan,
                &oracle,
                rec.cond_used(),
                rec.guidance_used(),
                ctx.schedule,
                0,
            )
            .map_err(|e| e.to_string())?;
            let mse = reconstruction_mse(&out, x0).map_err(|e| e.to_string())?;
            mses.push(mse);
            fids.push((-mse).exp());
        }
        let (mean_mse, _) = mean_std(&mses);
        let (mean_fid, _) = mean_std(&fids);
        Ok(vec![mean_mse.to_string(), mean_fid.to_string()])
    };

    let outcomes = run_cells(ctx.jobs, &cells, cell)?;
    let rows = cells
        .iter()
        .zip(outcomes)
        .map(|(&(i, j), outcome)| {
            assemble_row(
                vec![
                    inversion_steps_list[i].to_string(),
                    inference_steps_list[j].to_string(),
                ],
                2,
                outcome,
            )
        })
        .collect();
    let extras = vec![
        format!("inversion_steps_list = {inversion_steps_list:?}"),
        format!("inference_steps_list = {inference_steps_list:?}"),
    ];
    Ok(SweepTable {
        comments: ctx.metadata(name, &extras, false),
        columns: vec![
            "inversion_steps",
            "inference_steps",
            "mean_mse",
            "mean_fidelity",
            "error",
        ],
        rows,
    })
}

/// Lambda x guidance surface over a shared set of inverted inputs. Each
/// cell edits every input with that (lambda, s) pair and averages the
/// metrics against the edit target of `base`.
pub fn sweep_lambda_guidance(
    ctx: &SweepContext,
    lambda_list: &[f64],
    guidance_list: &[f64],
    base: &EditConfig,
) -> Result<SweepTable> {
    lambda_grid(ctx, "heatmap", lambda_list, guidance_list, base)
}

/// Fixed-guidance tradeoff curve: one row per lambda.
pub fn sweep_tradeoff(
    ctx: &SweepContext,
    lambda_list: &[f64],
    guidance: f64,
    base: &EditConfig,
) -> Result<SweepTable> {
    lambda_grid(ctx, "tradeoff", lambda_list, &[guidance], base)
}

fn lambda_grid(
    ctx: &SweepContext,
    name: &str,
    lambda_list: &[f64],
    guidance_list: &[f64],
    base: &EditConfig,
) -> Result<SweepTable> {
    ctx.validate()?;
    if lambda_list.is_empty() || guidance_list.is_empty() {
        return Err(Error::InvalidParameter(
            "lambda and guidance lists must not be empty".into(),
        ));
    }
    if base.target.label().is_none() {
        return Err(Error::InvalidCondition(
            "edit sweeps need a component label target".into(),
        ));
    }
    let gmm = ctx.gmm_view()?;
    gmm.means()
        .get(base.target.label().unwrap())
        .ok_or_else(|| {
            Error::InvalidCondition(format!(
                "target {} out of range for a world with {} component(s)",
                base.target,
                gmm.n_components()
            ))
        })?;
    let inputs = ctx.draw_inputs()?;
    let oracle = ctx.oracle();
    let plan = plan_timesteps(ctx.schedule.t_max(), ctx.n_steps)?;

    let records: std::result::Result<Vec<InversionRecord>, String> = inputs
        .iter()
        .map(|x0| {
            invert(
                x0,
                &plan,
                &oracle,
                &ctx.inversion_cond,
                ctx.inversion_guidance,
                ctx.schedule,
            )
            .map_err(|e| e.to_string())
        })
        .collect();

    let cells: Vec<(usize, usize)> = lambda_list
        .iter()
        .enumerate()
        .flat_map(|(i, _)| (0..guidance_list.len()).map(move |j| (i, j)))
        .collect();

    let cell = |&(i, j): &(usize, usize)| -> std::result::Result<Vec<String>, String> {
        let recs = records.as_ref().map_err(|e| e.clone())?;
        let config = EditConfig {
            lambda: lambda_list[i],
            guidance_scale: guidance_list[j],
            ..base.clone()
        };
        config.validate().map_err(|e| e.to_string())?;
        let mut aligns = Vec::with_capacity(inputs.len());
        let mut fids = Vec::with_capacity(inputs.len());
        let mut mses = Vec::with_capacity(inputs.len());
        for (x0, rec) in inputs.iter().zip(recs) {
            let out = edit(rec, &config, &oracle, ctx.schedule, &plan).map_err(|e| e.to_string())?;
            aligns.push(alignment(&out, &config.target, &gmm).map_err(|e| e.to_string())?);
            let mse = reconstruction_mse(&out, x0).map_err(|e| e.to_string())?;
            mses.push(mse);
            fids.push(fidelity(&out, x0).map_err(|e| e.to_string())?);
        }
        let (mean_align, _) = mean_std(&aligns);
        let (mean_fid, _) = mean_std(&fids);
        let (mean_mse, _) = mean_std(&mses);
        Ok(vec![
            mean_align.to_string(),
            mean_fid.to_string(),
            mean_mse.to_string(),
        ])
    };

    let outcomes = run_cells(ctx.jobs, &cells, cell)?;
    let rows = cells
        .iter()
        .zip(outcomes)
        .map(|(&(i, j), outcome)| {
            assemble_row(
                vec![lambda_list[i].to_string(), guidance_list[j].to_string()],
                3,
                outcome,
            )
        })
        .collect();
    let extras = vec![
        format!("lambda_list = {lambda_list:?}"),
        format!("guidance_list = {guidance_list:?}"),
        format!("edit target = {}", base.target),
        format!("plan n_steps = {}", ctx.n_steps),
        format!(
            "injection = every {} step(s), stop_fraction {}",
            base.inject_every_k, base.stop_fraction
        ),
    ];
    Ok(SweepTable {
        comments: ctx.metadata(name, &extras, true),
        columns: vec![
            "lambda",
            "guidance",
            "mean_alignment",
            "mean_fidelity",
            "mean_mse",
            "error",
        ],
        rows,
    })
}
