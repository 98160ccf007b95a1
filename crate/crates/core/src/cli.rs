//! Command-line front end: loads the flat config, builds the schedule,
//! world, and plan, and dispatches to single-shot inversion, decoding,
//! and editing or to the experiment sweeps. Commands compute their full
//! result before touching the output path, so a nonzero exit never
//! leaves a partial file behind.

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::{format_vector, Config};
use crate::editor::{edit, EditConfig, InjectionMode, InjectionSource};
use crate::error::{Error, Result};
use crate::experiments::{
    sweep_inversion_steps, sweep_lambda_guidance, sweep_reconstruction, sweep_steps_grid,
    sweep_tradeoff, SweepContext,
};
use crate::inversion::{invert, reconstruct, reconstruction_mse, InversionRecord, ReconstructionMode};
use crate::metrics::{alignment, fidelity};
use crate::oracle::{AnalyticDenoiser, Condition, DenoiserOracle, GaussianWorld, GmmWorld, World};
use crate::sampler::sample;
use crate::schedule::{build_linear_schedule, plan_timesteps, NoiseSchedule, State, TimestepPlan};

const DEFAULT_STEPS: &[usize] = &[5, 10, 25, 50, 100];
const DEFAULT_LAMBDAS: &[f64] = &[0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0];
const DEFAULT_GUIDANCES: &[f64] = &[0.0, 1.0, 2.0, 3.0, 5.0, 7.5];

#[derive(Parser, Debug)]
#[command(
    name = "invedit",
    version,
    about = "Deterministic diffusion sampling, exact latent inversion, and noise-merge editing"
)]
pub struct Cli {
    /// Flat key = value experiment configuration
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Output file (invert, reconstruct, edit) or directory (sweep)
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    /// Overrides the `seed` config key
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Overrides the `jobs` config key
    #[arg(long, global = true)]
    pub jobs: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Invert an input to its terminal latent, recording per-step noise
    Invert,
    /// Decode a record's terminal latent back to sample space
    Reconstruct {
        /// Record written by `invert`
        record: PathBuf,
        #[arg(long, value_enum, default_value = "replay")]
        mode: Mode,
    },
    /// Guided decode of a record with its noise merged back in
    Edit {
        /// Record written by `invert`
        record: PathBuf,
    },
    /// Run a named experiment sweep and write `<name>.csv` under --out
    Sweep {
        /// reconstruction | inversion_steps | grid | heatmap | tradeoff
        name: String,
    },
    /// Run the built-in invariant checks, printing PASS/FAIL per line
    Selftest,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// Replay the recorded noise predictions
    Replay,
    /// Query the oracle afresh at every step
    Repredict,
}

struct Setup {
    config: Config,
    schedule: NoiseSchedule,
    world: World,
    seed: u64,
    jobs: usize,
}

impl Setup {
    fn load(cli: &Cli) -> Result<Setup> {
        let path = cli
            .config
            .as_ref()
            .ok_or_else(|| Error::Config("missing --config".into()))?;
        let config = Config::load(path)?;
        let schedule = build_linear_schedule(
            config.usize_or("schedule.T", 1000)?,
            config.f64_or("schedule.beta_start", 1e-4)?,
            config.f64_or("schedule.beta_end", 0.02)?,
            config.f64_or("schedule.eta", 0.0)?,
        )?;
        let world = build_world(&config)?;
        let seed = match cli.seed {
            Some(s) => s,
            None => config.u64_or("seed", 0)?,
        };
        let jobs = match cli.jobs {
            Some(j) => j,
            None => config.usize_or("jobs", 1)?,
        };
        Ok(Setup {
            config,
            schedule,
            world,
            seed,
            jobs,
        })
    }

    fn oracle(&self) -> AnalyticDenoiser {
        AnalyticDenoiser::new(self.world.clone(), self.schedule.clone())
    }

    fn plan(&self) -> Result<TimestepPlan> {
        let n = self.config.usize_or("plan.n_steps", 100)?;
        plan_timesteps(self.schedule.t_max(), n)
            .map_err(|e| Error::Config(format!("key `plan.n_steps`: {e}")))
    }

    fn gmm_view(&self) -> Result<GmmWorld> {
        match &self.world {
            World::Gmm(w) => Ok(w.clone()),
            World::Gaussian(g) => GmmWorld::new(vec![1.0], vec![g.mu().clone()], g.var0()),
        }
    }

    fn condition(&self, key: &str, default: &str) -> Result<Condition> {
        let raw = self.config.str_or(key, default);
        let cond = parse_condition(raw, key)?;
        self.world
            .check_condition(&cond)
            .map_err(|e| Error::Config(format!("key `{key}`: {e}")))?;
        Ok(cond)
    }

    fn edit_config(&self) -> Result<EditConfig> {
        let cfg = &self.config;
        let defaults = EditConfig::default();
        let injection_source = match cfg.str_or("edit.injection_source", "per_step_eps") {
            "per_step_eps" => InjectionSource::PerStepEps,
            "terminal_latent" => InjectionSource::TerminalLatent,
            other => {
                return Err(Error::Config(format!(
                    "key `edit.injection_source`: expected `per_step_eps` or \
                     `terminal_latent`, got `{other}`"
                )));
            }
        };
        let injection_mode = match cfg.str_or("edit.injection_mode", "continual") {
            "continual" => InjectionMode::Continual,
            "initial_only" => InjectionMode::InitialOnly,
            other => {
                return Err(Error::Config(format!(
                    "key `edit.injection_mode`: expected `continual` or `initial_only`, \
                     got `{other}`"
                )));
            }
        };
        let config = EditConfig {
            lambda: cfg.f64_or("edit.lambda", defaults.lambda)?,
            inject_every_k: cfg.usize_or("edit.inject_every_k", defaults.inject_every_k)?,
            stop_fraction: cfg.f64_or("edit.stop_fraction", defaults.stop_fraction)?,
            injection_source,
            injection_mode,
            guidance_scale: cfg.f64_or("edit.guidance_scale", defaults.guidance_scale)?,
            target: self.condition("edit.target", "unconditional")?,
        };
        config.validate()?;
        Ok(config)
    }

    fn sweep_context(&self) -> Result<SweepContext<'_>> {
        let mut ctx = SweepContext::new(&self.schedule, &self.world);
        ctx.source = self.condition("sweep.source", "unconditional")?;
        ctx.inversion_cond = self.condition("inversion.cond", "unconditional")?;
        ctx.inversion_guidance = self.config.f64_or("inversion.guidance_scale", 1.0)?;
        ctx.n_inputs = self.config.usize_or("sweep.n_inputs", 30)?;
        ctx.n_steps = self.config.usize_or("plan.n_steps", 100)?;
        ctx.seed = self.seed;
        ctx.jobs = self.jobs;
        Ok(ctx)
    }
}

fn parse_condition(raw: &str, key: &str) -> Result<Condition> {
    if raw == "unconditional" {
        return Ok(Condition::Unconditional);
    }
    raw.parse::<usize>().map(Condition::Label).map_err(|_| {
        Error::Config(format!(
            "key `{key}`: expected `unconditional` or a component index, got `{raw}`"
        ))
    })
}

fn build_world(config: &Config) -> Result<World> {
    match config.str_or("world.kind", "gmm") {
        "gaussian" => {
            let mu = State::new(config.require_vector("world.mu")?)?;
            let var0 = config.f64_or("world.var0", 1.0)?;
            Ok(World::Gaussian(GaussianWorld::new(mu, var0)?))
        }
        "gmm" => {
            let means = if config.contains("world.means") {
                config.require_vector_list("world.means")?
            } else {
                vec![vec![3.0, 0.0], vec![-3.0, 0.0]]
            };
            let means = means
                .into_iter()
                .map(State::new)
                .collect::<Result<Vec<_>>>()
                .map_err(|e| Error::Config(format!("key `world.means`: {e}")))?;
            let weights = config
                .f64_list_or("world.weights", &vec![1.0 / means.len() as f64; means.len()])?;
            let var0 = config.f64_or("world.var0", 1.0)?;
            Ok(World::Gmm(GmmWorld::new(weights, means, var0)?))
        }
        other => Err(Error::Config(format!(
            "key `world.kind`: expected `gaussian` or `gmm`, got `{other}`"
        ))),
    }
}

fn require_out(cli: &Cli) -> Result<&Path> {
    cli.out
        .as_deref()
        .ok_or_else(|| Error::Config("missing --out".into()))
}

/// Resolve the input sample for `invert` from the `input.*` keys.
fn resolve_input(setup: &Setup) -> Result<State> {
    match setup.config.str_or("input.kind", "sample") {
        "sample" => {
            let cond = setup.condition("input.source", "unconditional")?;
            let mut rng = ChaCha8Rng::seed_from_u64(setup.seed);
            setup.world.sample_x0(&cond, &mut rng)
        }
        "vector" => State::new(setup.config.require_vector("input.vector")?),
        "record" => {
            let path = setup
                .config
                .get("input.record")
                .ok_or_else(|| Error::Config("missing key `input.record`".into()))?;
            Ok(InversionRecord::load(Path::new(path))?.original().clone())
        }
        other => Err(Error::Config(format!(
            "key `input.kind`: expected `sample`, `vector`, or `record`, got `{other}`"
        ))),
    }
}

/// Vector output in the same flat form the config uses, so results can
/// be read back with the config parser.
fn vector_file(command: &str, seed: u64, metrics: &[(String, String)], x: &State) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "# {} {}\n",
        env!("CARGO_PKG_NAME"),
        env!("CARGO_PKG_VERSION")
    ));
    out.push_str(&format!("# command = {command}\n"));
    out.push_str(&format!("# seed = {seed}\n"));
    for (key, value) in metrics {
        out.push_str(&format!("{key} = {value}\n"));
    }
    out.push_str(&format!("x = {}\n", format_vector(x.as_slice())));
    out
}

fn cmd_invert(cli: &Cli) -> Result<()> {
    let setup = Setup::load(cli)?;
    let out = require_out(cli)?;
    let plan = setup.plan()?;
    let oracle = setup.oracle();
    let x0 = resolve_input(&setup)?;
    let cond = setup.condition("inversion.cond", "unconditional")?;
    let guidance = setup.config.f64_or("inversion.guidance_scale", 1.0)?;
    let record = invert(&x0, &plan, &oracle, &cond, guidance, &setup.schedule)?;
    record.save(out)?;
    println!(
        "inverted {}-d input over {} steps ({} guidance={}) -> {}",
        record.dim(),
        plan.n_steps(),
        cond,
        guidance,
        out.display()
    );
    Ok(())
}

fn cmd_reconstruct(cli: &Cli, record_path: &Path, mode: Mode) -> Result<()> {
    let setup = Setup::load(cli)?;
    let out = require_out(cli)?;
    let record = InversionRecord::load(record_path)?;
    let oracle = setup.oracle();
    let (mode_name, result) = match mode {
        Mode::Replay => (
            "replay",
            reconstruct(&record, ReconstructionMode::Replay, None, &setup.schedule)?,
        ),
        Mode::Repredict => (
            "repredict",
            reconstruct(
                &record,
                ReconstructionMode::Repredict,
                Some(&oracle as &dyn DenoiserOracle),
                &setup.schedule,
            )?,
        ),
    };
    let mse = reconstruction_mse(&result, record.original())?;
    let metrics = vec![
        ("mode".to_string(), mode_name.to_string()),
        ("mse".to_string(), mse.to_string()),
    ];
    std::fs::write(out, vector_file("reconstruct", setup.seed, &metrics, &result))?;
    println!("reconstructed ({mode_name}) mse = {mse} -> {}", out.display());
    Ok(())
}

fn cmd_edit(cli: &Cli, record_path: &Path) -> Result<()> {
    let setup = Setup::load(cli)?;
    let out = require_out(cli)?;
    let record = InversionRecord::load(record_path)?;
    let plan = setup.plan()?;
    let oracle = setup.oracle();
    let config = setup.edit_config()?;
    let result = edit(&record, &config, &oracle, &setup.schedule, &plan)?;

    let mse = reconstruction_mse(&result, record.original())?;
    let fid = fidelity(&result, record.original())?;
    let mut metrics = vec![
        ("lambda".to_string(), config.lambda.to_string()),
        ("guidance".to_string(), config.guidance_scale.to_string()),
        ("target".to_string(), config.target.to_string()),
        ("mse".to_string(), mse.to_string()),
        ("fidelity".to_string(), fid.to_string()),
    ];
    if config.target.label().is_some() {
        let align = alignment(&result, &config.target, &setup.gmm_view()?)?;
        metrics.push(("alignment".to_string(), align.to_string()));
    }

    let mut sidecar = String::new();
    sidecar.push_str(&format!(
        "# {} {} edit metrics\n# seed = {}\n",
        env!("CARGO_PKG_NAME"),
        env!("CARGO_PKG_VERSION"),
        setup.seed
    ));
    for (key, value) in &metrics {
        sidecar.push_str(&format!("{key} = {value}\n"));
    }

    std::fs::write(out, vector_file("edit", setup.seed, &metrics, &result))?;
    let sidecar_path = out.with_extension(match out.extension() {
        Some(ext) => format!("{}.metrics", ext.to_string_lossy()),
        None => "metrics".to_string(),
    });
    std::fs::write(&sidecar_path, sidecar)?;
    println!(
        "edited toward {} (lambda={}) -> {}",
        config.target,
        config.lambda,
        out.display()
    );
    Ok(())
}

fn cmd_sweep(cli: &Cli, name: &str) -> Result<()> {
    let setup = Setup::load(cli)?;
    let out = require_out(cli)?;
    let ctx = setup.sweep_context()?;
    let cfg = &setup.config;
    let table = match name {
        "reconstruction" => {
            let steps = cfg.usize_list_or("sweep.steps_list", DEFAULT_STEPS)?;
            sweep_reconstruction(&ctx, &steps)?
        }
        "inversion_steps" => {
            let inv = cfg.usize_list_or("sweep.inversion_steps_list", DEFAULT_STEPS)?;
            let inf = cfg.usize_or("sweep.inference_steps", 50)?;
            sweep_inversion_steps(&ctx, inf, &inv)?
        }
        "grid" => {
            let inv = cfg.usize_list_or("sweep.inversion_steps_list", DEFAULT_STEPS)?;
            let inf = cfg.usize_list_or("sweep.inference_steps_list", DEFAULT_STEPS)?;
            sweep_steps_grid(&ctx, &inv, &inf)?
        }
        "heatmap" => {
            let lambdas = cfg.f64_list_or("sweep.lambda_list", DEFAULT_LAMBDAS)?;
            let guidances = cfg.f64_list_or("sweep.guidance_list", DEFAULT_GUIDANCES)?;
            sweep_lambda_guidance(&ctx, &lambdas, &guidances, &setup.edit_config()?)?
        }
        "tradeoff" => {
            let lambdas = cfg.f64_list_or("sweep.lambda_list", DEFAULT_LAMBDAS)?;
            let guidance = cfg.f64_or("sweep.guidance", 3.0)?;
            sweep_tradeoff(&ctx, &lambdas, guidance, &setup.edit_config()?)?
        }
        other => {
            return Err(Error::Config(format!(
                "unknown sweep `{other}` (expected reconstruction, inversion_steps, grid, \
                 heatmap, or tradeoff)"
            )));
        }
    };
    let csv = table.to_csv();
    std::fs::create_dir_all(out)?;
    let path = out.join(format!("{name}.csv"));
    std::fs::write(&path, csv)?;
    println!("{} rows -> {}", table.rows().len(), path.display());
    Ok(())
}

type Check = (&'static str, fn() -> std::result::Result<(), String>);

fn selftest_checks() -> Vec<Check> {
    use crate::sampler::{cfg_combine, ddim_inverse_step, ddim_step, predict_x0};
    use crate::schedule::forward_diffuse;

    fn err<T>(r: Result<T>) -> std::result::Result<T, String> {
        r.map_err(|e| e.to_string())
    }

    fn default_schedule() -> std::result::Result<NoiseSchedule, String> {
        err(build_linear_schedule(1000, 1e-4, 0.02, 0.0))
    }

    fn two_mode_world() -> std::result::Result<World, String> {
        Ok(World::Gmm(err(GmmWorld::new(
            vec![0.5, 0.5],
            vec![
                err(State::new(vec![3.0, 0.0]))?,
                err(State::new(vec![-3.0, 0.0]))?,
            ],
            1.0,
        ))?))
    }

    fn probe_states() -> std::result::Result<(State, State), String> {
        let x = err(State::new(vec![0.8, -1.4, 0.3]))?;
        let eps = err(State::new(vec![-0.2, 0.5, 1.1]))?;
        Ok((x, eps))
    }

    vec![
        ("schedule endpoints and monotone alpha_bar", || {
            let s = default_schedule()?;
            if s.alpha_bar(0) != 1.0 {
                return Err("alpha_bar(0) != 1".into());
            }
            for t in 1..=s.t_max() {
                if s.alpha_bar(t) >= s.alpha_bar(t - 1) {
                    return Err(format!("alpha_bar not decreasing at t = {t}"));
                }
            }
            let tiny = err(build_linear_schedule(1, 1e-4, 0.02, 0.0))?;
            if (tiny.alpha_bar(1) - (1.0 - 1e-4)).abs() > 1e-15 {
                return Err("T = 1 schedule must use beta_start alone".into());
            }
            Ok(())
        }),
        ("sigma vanishes for the deterministic schedule", || {
            let s = default_schedule()?;
            let plan = err(plan_timesteps(s.t_max(), 10))?;
            for (t, t_prev) in plan.transitions() {
                if s.sigma(t, t_prev) != 0.0 {
                    return Err(format!("sigma({t}, {t_prev}) != 0 at eta = 0"));
                }
            }
            let noisy = err(build_linear_schedule(1000, 1e-4, 0.02, 1.0))?;
            if noisy.sigma(2, 0) != 0.0 {
                return Err("sigma(t, 0) must be 0 for any eta".into());
            }
            if noisy.sigma(500, 400) <= 0.0 {
                return Err("eta = 1 must give positive sigma off the floor".into());
            }
            Ok(())
        }),
        ("timestep respacing", || {
            let plan = err(plan_timesteps(10, 3))?;
            if plan.steps() != [9, 6, 3, 0] {
                return Err(format!("plan(10, 3) = {:?}", plan.steps()));
            }
            let plan = err(plan_timesteps(1000, 4))?;
            if plan.steps() != [1000, 750, 500, 250, 0] {
                return Err(format!("plan(1000, 4) = {:?}", plan.steps()));
            }
            if plan_timesteps(10, 11).is_ok() {
                return Err("n_steps > T must be rejected".into());
            }
            Ok(())
        }),
        ("forward diffusion is the identity at t = 0", || {
            let s = default_schedule()?;
            let (x, eps) = probe_states()?;
            let y = err(forward_diffuse(&x, &eps, 0, &s))?;
            if y.as_slice() != x.as_slice() {
                return Err("t = 0 corruption changed the input".into());
            }
            Ok(())
        }),
        ("prediction inverts forward diffusion", || {
            let s = default_schedule()?;
            let (x0, eps) = probe_states()?;
            for t in [1, 250, 999] {
                let xt = err(forward_diffuse(&x0, &eps, t, &s))?;
                let back = err(predict_x0(&xt, &eps, t, &s))?;
                if back.max_abs_diff(&x0) > 1e-6 {
                    return Err(format!("round trip off by {} at t = {t}", back.max_abs_diff(&x0)));
                }
            }
            Ok(())
        }),
        ("reverse step identity and terminal cases", || {
            let s = default_schedule()?;
            let (x, eps) = probe_states()?;
            let same = err(ddim_step(&x, &eps, 400, 400, &s, None))?;
            if same.as_slice() != x.as_slice() {
                return Err("t_prev = t must return x_t unchanged".into());
            }
            let to_zero = err(ddim_step(&x, &eps, 400, 0, &s, None))?;
            let direct = err(predict_x0(&x, &eps, 400, &s))?;
            if to_zero.as_slice() != direct.as_slice() {
                return Err("t_prev = 0 must return the x0 prediction".into());
            }
            Ok(())
        }),
        ("inverse step round-trips", || {
            let s = default_schedule()?;
            let (x_prev, eps) = probe_states()?;
            let x_t = err(ddim_inverse_step(&x_prev, &eps, 300, 500, &s))?;
            let back = err(ddim_step(&x_t, &eps, 500, 300, &s, None))?;
            if back.max_abs_diff(&x_prev) > 1e-9 {
                return Err(format!("round trip off by {}", back.max_abs_diff(&x_prev)));
            }
            Ok(())
        }),
        ("guidance endpoints are exact clones", || {
            let (u, c) = probe_states()?;
            if err(cfg_combine(&u, &c, 0.0))?.as_slice() != u.as_slice() {
                return Err("s = 0 must clone the unconditional branch".into());
            }
            if err(cfg_combine(&u, &c, 1.0))?.as_slice() != c.as_slice() {
                return Err("s = 1 must clone the conditional branch".into());
            }
            Ok(())
        }),
        ("single-component mixture matches the plain Gaussian", || {
            use crate::oracle::{gaussian_predict_eps, gmm_predict_eps};
            let s = default_schedule()?;
            let mu = err(State::new(vec![0.5, -1.0]))?;
            let gaussian = err(GaussianWorld::new(mu.clone(), 2.0))?;
            let mixture = err(GmmWorld::new(vec![1.0], vec![mu], 2.0))?;
            let x = err(State::new(vec![1.3, 0.4]))?;
            for t in [1, 400, 1000] {
                let a = err(gaussian_predict_eps(&gaussian, &x, t, &s))?;
                let b = err(gmm_predict_eps(&mixture, &x, t, &Condition::Unconditional, &s))?;
                if a.as_slice() != b.as_slice() {
                    return Err(format!("oracles disagree at t = {t}"));
                }
            }
            Ok(())
        }),
        ("replay reconstruction is exact", || {
            let s = default_schedule()?;
            let world = two_mode_world()?;
            let oracle = AnalyticDenoiser::new(world, s.clone());
            let plan = err(plan_timesteps(s.t_max(), 50))?;
            let x0 = err(State::new(vec![2.6, -0.4]))?;
            let rec = err(invert(&x0, &plan, &oracle, &Condition::Unconditional, 1.0, &s))?;
            let back = err(reconstruct(&rec, ReconstructionMode::Replay, None, &s))?;
            let mse = err(reconstruction_mse(&back, &x0))?;
            if mse >= 1e-10 {
                return Err(format!("replay mse = {mse}"));
            }
            Ok(())
        }),
        ("lambda endpoints detach and replay", || {
            let s = default_schedule()?;
            let world = two_mode_world()?;
            let oracle = AnalyticDenoiser::new(world, s.clone());
            let plan = err(plan_timesteps(s.t_max(), 25))?;
            let x0 = err(State::new(vec![2.6, -0.4]))?;
            let rec = err(invert(&x0, &plan, &oracle, &Condition::Unconditional, 1.0, &s))?;
            let mut config = EditConfig {
                lambda: 0.0,
                target: Condition::Label(1),
                ..EditConfig::default()
            };
            let detached = err(edit(&rec, &config, &oracle, &s, &plan))?;
            let plain = err(sample(
                rec.terminal(),
                &plan,
                &oracle,
                &config.target,
                config.guidance_scale,
                &s,
                0,
            ))?;
            if detached.as_slice() != plain.as_slice() {
                return Err("lambda = 0 must equal the plain guided decode".into());
            }
            config.lambda = 1.0;
            let replayed = err(edit(&rec, &config, &oracle, &s, &plan))?;
            let mse = err(reconstruction_mse(&replayed, &x0))?;
            if mse >= 1e-10 {
                return Err(format!("lambda = 1 replay mse = {mse}"));
            }
            Ok(())
        }),
        ("record serialization round-trips", || {
            let s = default_schedule()?;
            let world = two_mode_world()?;
            let oracle = AnalyticDenoiser::new(world, s.clone());
            let plan = err(plan_timesteps(s.t_max(), 10))?;
            let x0 = err(State::new(vec![-2.2, 0.9]))?;
            let rec = err(invert(&x0, &plan, &oracle, &Condition::Label(1), 2.5, &s))?;
            let mut bytes = Vec::new();
            err(rec.write_to(&mut bytes))?;
            let copy = err(InversionRecord::read_from(&mut bytes.as_slice()))?;
            let same_latents = rec
                .latents()
                .iter()
                .zip(copy.latents())
                .all(|(a, b)| a.as_slice() == b.as_slice());
            let same_eps = rec
                .recorded_eps()
                .iter()
                .zip(copy.recorded_eps())
                .all(|(a, b)| a.as_slice() == b.as_slice());
            if !(same_latents
                && same_eps
                && copy.plan().steps() == rec.plan().steps()
                && copy.cond_used() == rec.cond_used()
                && copy.guidance_used() == rec.guidance_used())
            {
                return Err("decoded record differs from the original".into());
            }
            Ok(())
        }),
        ("metric anchors", || {
            let world = match two_mode_world()? {
                World::Gmm(w) => w,
                World::Gaussian(_) => unreachable!(),
            };
            let x = err(State::new(vec![0.7, -0.2]))?;
            if err(fidelity(&x, &x))? != 1.0 {
                return Err("fidelity at the input itself must be 1".into());
            }
            let m0 = err(State::new(vec![3.0, 0.0]))?;
            let m1 = err(State::new(vec![-3.0, 0.0]))?;
            let at_target = err(alignment(&m0, &Condition::Label(0), &world))?;
            if at_target != 1.0 {
                return Err(format!("alignment at the target mean = {at_target}"));
            }
            let at_other = err(alignment(&m1, &Condition::Label(0), &world))?;
            if (at_other + 1.0).abs() > 1e-12 {
                return Err(format!("alignment at the other mean = {at_other}"));
            }
            Ok(())
        }),
    ]
}

fn cmd_selftest() -> Result<()> {
    let mut failures = 0usize;
    for (name, check) in selftest_checks() {
        match check() {
            Ok(()) => println!("PASS {name}"),
            Err(reason) => {
                failures += 1;
                println!("FAIL {name}: {reason}");
            }
        }
    }
    if failures > 0 {
        return Err(Error::NumericDegeneracy(format!(
            "{failures} selftest check(s) failed"
        )));
    }
    Ok(())
}

pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Invert => cmd_invert(cli),
        Command::Reconstruct { record, mode } => cmd_reconstruct(cli, record, *mode),
        Command::Edit { record } => cmd_edit(cli, record),
        Command::Sweep { name } => cmd_sweep(cli, name),
        Command::Selftest => cmd_selftest(),
    }
}
