use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use memgrid::checkpoint::Checkpoint;
use memgrid::config::SystemConfig;
use memgrid::environment::{
    self, GreedyPolicy, MicrogridEnv, ProfileChannel, RandomPolicy, RenewableScenario, ZeroPolicy,
};
use memgrid::io::{self, IndexReport, RunManifest};
use memgrid::neural::finite_diff_check_summary;
use memgrid::scengen::{self, GanModel};
use memgrid::svg::LineChart;
use memgrid::td3::{self, ActorPolicy, ObservationScaler};

#[derive(Parser)]
#[command(name = "memgrid", about = "Multi-energy microgrid dispatch toolkit", version)]
struct Cli {
    /// System configuration file; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Root seed overriding the configured one.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum BaselinePolicy {
    Greedy,
    Random,
    Zero,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ResourceKind {
    Wt,
    Pv,
}

#[derive(Args)]
struct OutDir {
    /// Output directory; created if missing.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Train a dispatch agent on one day profile.
    Train {
        #[arg(long)]
        profile: PathBuf,
        #[arg(long, default_value_t = 500)]
        episodes: usize,
        #[command(flatten)]
        out: OutDir,
    },
    /// Run one episode and write the hourly dispatch ledger.
    Dispatch {
        #[arg(long)]
        profile: PathBuf,
        /// Trained agent checkpoint; otherwise a built-in policy runs.
        #[arg(long, conflicts_with = "policy")]
        checkpoint: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = BaselinePolicy::Greedy)]
        policy: BaselinePolicy,
        #[command(flatten)]
        out: OutDir,
    },
    /// Dispatch the same days under off-design and rated device models.
    CompareModels {
        /// One or more day profiles.
        #[arg(long, required = true, num_args = 1..)]
        profiles: Vec<PathBuf>,
        #[command(flatten)]
        out: OutDir,
    },
    /// Train the scenario generator on paired forecast/actual curves.
    TrainScen {
        #[arg(long)]
        paired: PathBuf,
        #[arg(long, value_enum)]
        kind: ResourceKind,
        #[command(flatten)]
        out: OutDir,
    },
    /// Sample renewable scenarios from a trained generator.
    Generate {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Profile supplying the forecast curve to condition on.
        #[arg(long)]
        profile: PathBuf,
        #[arg(long, value_enum)]
        kind: ResourceKind,
        #[arg(long, default_value_t = 100)]
        count: usize,
        #[command(flatten)]
        out: OutDir,
    },
    /// Score a scenario set against realized curves.
    EvalScen {
        #[arg(long)]
        scenarios: PathBuf,
        #[arg(long)]
        paired: PathBuf,
        #[arg(long, value_enum)]
        kind: ResourceKind,
        #[command(flatten)]
        out: OutDir,
    },
    /// Purchase envelopes across a renewable scenario set.
    Bounds {
        #[arg(long)]
        profile: PathBuf,
        /// Scenario file for the varying resource.
        #[arg(long)]
        scenarios: PathBuf,
        #[arg(long, value_enum)]
        kind: ResourceKind,
        #[arg(long, conflicts_with = "policy")]
        checkpoint: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = BaselinePolicy::Greedy)]
        policy: BaselinePolicy,
        #[command(flatten)]
        out: OutDir,
    },
    /// Apply hour:channel:value edits to a profile.
    Perturb {
        #[arg(long)]
        profile: PathBuf,
        /// Edits like `1:wt:0` or `16:pv:0`.
        #[arg(long = "edit", required = true)]
        edits: Vec<String>,
        #[command(flatten)]
        out: OutDir,
    },
    /// Finite-difference check of the network gradients.
    Gradcheck,
}

#[derive(Debug)]
enum CliError {
    /// Bad inputs: config, profile, or argument validation.
    Validation(String),
    /// Everything else.
    Runtime(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Validation(m) | CliError::Runtime(m) => f.write_str(m),
        }
    }
}

fn validation<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Validation(e.to_string())
}

fn runtime<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Runtime(e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Validation(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}

fn load_config(cli: &Cli) -> Result<SystemConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(path) => SystemConfig::load(path).map_err(validation)?,
        None => SystemConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| runtime(format!("{}: {e}", dir.display())))
}

fn rated_kw(cfg: &SystemConfig, kind: ResourceKind) -> f64 {
    match kind {
        ResourceKind::Wt => cfg.renewables.wt_rated_kw,
        ResourceKind::Pv => cfg.renewables.pv_rated_kw,
    }
}

fn kind_name(kind: ResourceKind) -> &'static str {
    match kind {
        ResourceKind::Wt => "wt",
        ResourceKind::Pv => "pv",
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let cfg = load_config(&cli)?;
    let config_path = cli.config.clone();
    match cli.command {
        Command::Train { profile, episodes, out } => {
            cmd_train(&cfg, config_path.as_deref(), &profile, episodes, &out.out)
        }
        Command::Dispatch {
            profile,
            checkpoint,
            policy,
            out,
        } => cmd_dispatch(
            &cfg,
            config_path.as_deref(),
            &profile,
            checkpoint.as_deref(),
            policy,
            &out.out,
        ),
        Command::CompareModels { profiles, out } => {
            cmd_compare(&cfg, config_path.as_deref(), &profiles, &out.out)
        }
        Command::TrainScen { paired, kind, out } => {
            cmd_train_scen(&cfg, config_path.as_deref(), &paired, kind, &out.out)
        }
        Command::Generate {
            checkpoint,
            profile,
            kind,
            count,
            out,
        } => cmd_generate(
            &cfg,
            config_path.as_deref(),
            &checkpoint,
            &profile,
            kind,
            count,
            &out.out,
        ),
        Command::EvalScen {
            scenarios,
            paired,
            kind,
            out,
        } => cmd_eval_scen(&cfg, config_path.as_deref(), &scenarios, &paired, kind, &out.out),
        Command::Bounds {
            profile,
            scenarios,
            kind,
            checkpoint,
            policy,
            out,
        } => cmd_bounds(
            &cfg,
            config_path.as_deref(),
            &profile,
            &scenarios,
            kind,
            checkpoint.as_deref(),
            policy,
            &out.out,
        ),
        Command::Perturb { profile, edits, out } => cmd_perturb(&profile, &edits, &out.out),
        Command::Gradcheck => cmd_gradcheck(&cfg),
    }
}

fn manifest_with_inputs(
    command: &str,
    cfg: &SystemConfig,
    config_path: Option<&Path>,
    inputs: &[&Path],
) -> Result<RunManifest, CliError> {
    let mut m = RunManifest::new(command, cfg.seed);
    if let Some(p) = config_path {
        m.record_input(p).map_err(runtime)?;
    }
    for p in inputs {
        m.record_input(p).map_err(runtime)?;
    }
    Ok(m)
}

fn cmd_train(
    cfg: &SystemConfig,
    config_path: Option<&Path>,
    profile_path: &Path,
    episodes: usize,
    out: &Path,
) -> Result<(), CliError> {
    let profile = io::read_profile(profile_path).map_err(validation)?;
    ensure_dir(out)?;
    let mut env = MicrogridEnv::new(cfg, profile).map_err(validation)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let result = td3::train_td3(&mut env, cfg, episodes, &mut rng).map_err(runtime)?;

    let mut ckpt = Checkpoint::new(json!({
        "seed": cfg.seed,
        "episodes": episodes,
        "scaler": serde_json::to_value(&result.scaler).map_err(runtime)?,
    }));
    ckpt.insert_network("actor", &result.agent.actor);
    ckpt.insert_network("critic1", &result.agent.critic1);
    ckpt.insert_network("critic2", &result.agent.critic2);
    ckpt.save(&out.join("agent.json")).map_err(runtime)?;
    io::write_curve(&out.join("curve.csv"), &result.curve).map_err(runtime)?;

    let mut chart = LineChart::new("Training curve", "episode", "return");
    chart.add_series(
        "return",
        result
            .curve
            .iter()
            .map(|s| (s.episode as f64, s.total_reward))
            .collect(),
    );
    std::fs::write(out.join("curve.svg"), chart.render()).map_err(runtime)?;

    let mut m = manifest_with_inputs("train", cfg, config_path, &[profile_path])?;
    for f in ["agent.json", "curve.csv", "curve.svg"] {
        m.record_output(f);
    }
    m.save(out).map_err(runtime)?;
    let last = result.curve.last().map(|s| s.total_reward).unwrap_or(0.0);
    println!("trained {episodes} episodes, final return {last:.3}");
    Ok(())
}

fn load_actor_policy(path: &Path, env: &MicrogridEnv) -> Result<ActorPolicy, CliError> {
    let ckpt = Checkpoint::load(path).map_err(validation)?;
    let actor = ckpt.network("actor").map_err(validation)?;
    let scaler: ObservationScaler = serde_json::from_value(
        ckpt.metadata
            .get("scaler")
            .cloned()
            .ok_or_else(|| CliError::Validation("checkpoint missing scaler metadata".into()))?,
    )
    .map_err(validation)?;
    Ok(ActorPolicy {
        actor,
        scaler,
        boxes: *env.boxes(),
    })
}

fn run_baseline(
    env: &mut MicrogridEnv,
    policy: BaselinePolicy,
    seed: u64,
) -> Result<environment::EpisodeTrace, CliError> {
    match policy {
        BaselinePolicy::Greedy => {
            let mut p = GreedyPolicy::new(env);
            environment::run_episode(env, &mut p).map_err(runtime)
        }
        BaselinePolicy::Random => {
            let mut p = RandomPolicy::new(*env.boxes(), seed);
            environment::run_episode(env, &mut p).map_err(runtime)
        }
        BaselinePolicy::Zero => {
            let mut p = ZeroPolicy;
            environment::run_episode(env, &mut p).map_err(runtime)
        }
    }
}

fn dispatch_chart(trace: &environment::EpisodeTrace) -> LineChart {
    let mut chart = LineChart::new("Hourly costs", "hour", "$");
    chart.add_series(
        "energy",
        trace
            .steps
            .iter()
            .enumerate()
            .map(|(h, s)| (h as f64, s.energy_cost))
            .collect(),
    );
    chart.add_series(
        "carbon",
        trace
            .steps
            .iter()
            .enumerate()
            .map(|(h, s)| (h as f64, s.carbon_cost))
            .collect(),
    );
    chart.add_series(
        "penalty",
        trace
            .steps
            .iter()
            .enumerate()
            .map(|(h, s)| (h as f64, s.penalty_cost))
            .collect(),
    );
    chart
}

fn cmd_dispatch(
    cfg: &SystemConfig,
    config_path: Option<&Path>,
    profile_path: &Path,
    checkpoint: Option<&Path>,
    policy: BaselinePolicy,
    out: &Path,
) -> Result<(), CliError> {
    let profile = io::read_profile(profile_path).map_err(validation)?;
    ensure_dir(out)?;
    let mut env = MicrogridEnv::new(cfg, profile).map_err(validation)?;
    let trace = match checkpoint {
        Some(path) => {
            let mut p = load_actor_policy(path, &env)?;
            environment::run_episode(&mut env, &mut p).map_err(runtime)?
        }
        None => run_baseline(&mut env, policy, cfg.seed)?,
    };
    io::write_trace(&out.join("trace.csv"), &trace).map_err(runtime)?;
    std::fs::write(out.join("costs.svg"), dispatch_chart(&trace).render()).map_err(runtime)?;
    io::write_json(
        &out.join("summary.json"),
        &json!({
            "total_cost": trace.total_cost(),
            "energy_cost": trace.total_energy_cost(),
            "carbon_cost": trace.total_carbon_cost(),
            "penalty_cost": trace.total_penalty_cost(),
        }),
    )
    .map_err(runtime)?;

    let mut inputs = vec![profile_path];
    if let Some(c) = checkpoint {
        inputs.push(c);
    }
    let mut m = manifest_with_inputs("dispatch", cfg, config_path, &inputs)?;
    for f in ["trace.csv", "costs.svg", "summary.json"] {
        m.record_output(f);
    }
    m.save(out).map_err(runtime)?;
    println!("total cost {:.3}", trace.total_cost());
    Ok(())
}

fn cmd_compare(
    cfg: &SystemConfig,
    config_path: Option<&Path>,
    profiles: &[PathBuf],
    out: &Path,
) -> Result<(), CliError> {
    ensure_dir(out)?;
    let mut rows = Vec::new();
    for path in profiles {
        let profile = io::read_profile(path).map_err(validation)?;
        let mut off_design = MicrogridEnv::new(cfg, profile.clone()).map_err(validation)?;
        let mut greedy = GreedyPolicy::new(&off_design);
        let off_trace = environment::run_episode(&mut off_design, &mut greedy).map_err(runtime)?;
        // Same rule under full-load constant efficiencies: identical device
        // outputs, part-load input inflation removed.
        let mut rated = MicrogridEnv::new(cfg, profile).map_err(validation)?.with_rated_models();
        let mut rated_greedy = GreedyPolicy::new(&rated);
        let rated_trace =
            environment::run_episode(&mut rated, &mut rated_greedy).map_err(runtime)?;
        rows.push(json!({
            "profile": path.display().to_string(),
            "off_design_cost": off_trace.total_cost(),
            "rated_cost": rated_trace.total_cost(),
            "gap": off_trace.total_cost() - rated_trace.total_cost(),
        }));
    }
    io::write_json(&out.join("comparison.json"), &rows).map_err(runtime)?;
    let inputs: Vec<&Path> = profiles.iter().map(PathBuf::as_path).collect();
    let mut m = manifest_with_inputs("compare-models", cfg, config_path, &inputs)?;
    m.record_output("comparison.json");
    m.save(out).map_err(runtime)?;
    for row in &rows {
        println!(
            "{}: off-design {:.3}, rated {:.3}",
            row["profile"].as_str().unwrap_or("?"),
            row["off_design_cost"].as_f64().unwrap_or(f64::NAN),
            row["rated_cost"].as_f64().unwrap_or(f64::NAN),
        );
    }
    Ok(())
}

fn cmd_train_scen(
    cfg: &SystemConfig,
    config_path: Option<&Path>,
    paired_path: &Path,
    kind: ResourceKind,
    out: &Path,
) -> Result<(), CliError> {
    let rated = rated_kw(cfg, kind);
    let data = io::read_paired_series(paired_path, rated).map_err(validation)?;
    ensure_dir(out)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (model, stats) = scengen::train_gan(&cfg.gan, &data, &mut rng).map_err(runtime)?;

    let mut ckpt = Checkpoint::new(json!({
        "seed": cfg.seed,
        "kind": kind_name(kind),
        "noise_dim": model.noise_dim,
        "horizon": model.horizon,
    }));
    ckpt.insert_network("generator", &model.generator);
    ckpt.insert_network("discriminator", &model.discriminator);
    ckpt.save(&out.join("gan.json")).map_err(runtime)?;

    let mut chart = LineChart::new("Adversarial losses", "epoch", "loss");
    chart.add_series(
        "discriminator",
        stats.iter().map(|s| (s.epoch as f64, s.d_loss)).collect(),
    );
    chart.add_series(
        "generator",
        stats.iter().map(|s| (s.epoch as f64, s.g_loss)).collect(),
    );
    std::fs::write(out.join("losses.svg"), chart.render()).map_err(runtime)?;

    let mut m = manifest_with_inputs("train-scen", cfg, config_path, &[paired_path])?;
    for f in ["gan.json", "losses.svg"] {
        m.record_output(f);
    }
    m.save(out).map_err(runtime)?;
    if let Some(last) = stats.last() {
        println!(
            "trained {} epochs, d_loss {:.4}, g_loss {:.4}",
            stats.len(),
            last.d_loss,
            last.g_loss
        );
    }
    Ok(())
}

fn load_gan(path: &Path) -> Result<GanModel, CliError> {
    let ckpt = Checkpoint::load(path).map_err(validation)?;
    let generator = ckpt.network("generator").map_err(validation)?;
    let discriminator = ckpt.network("discriminator").map_err(validation)?;
    let noise_dim = ckpt.metadata["noise_dim"]
        .as_u64()
        .ok_or_else(|| CliError::Validation("checkpoint missing noise_dim".into()))?
        as usize;
    let horizon = ckpt.metadata["horizon"]
        .as_u64()
        .ok_or_else(|| CliError::Validation("checkpoint missing horizon".into()))?
        as usize;
    Ok(GanModel {
        generator,
        discriminator,
        noise_dim,
        horizon,
    })
}

fn cmd_generate(
    cfg: &SystemConfig,
    config_path: Option<&Path>,
    checkpoint: &Path,
    profile_path: &Path,
    kind: ResourceKind,
    count: usize,
    out: &Path,
) -> Result<(), CliError> {
    let model = load_gan(checkpoint)?;
    let profile = io::read_profile(profile_path).map_err(validation)?;
    let rated = rated_kw(cfg, kind);
    let forecast_kw = match kind {
        ResourceKind::Wt => &profile.wt_kw,
        ResourceKind::Pv => &profile.pv_kw,
    };
    if forecast_kw.len() != model.horizon {
        return Err(CliError::Validation(format!(
            "profile horizon {} does not match generator horizon {}",
            forecast_kw.len(),
            model.horizon
        )));
    }
    let forecast: Vec<f64> = forecast_kw.iter().map(|v| (v / rated).clamp(0.0, 1.0)).collect();
    ensure_dir(out)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let scenarios = scengen::generate(&model, &forecast, count, &mut rng);
    io::write_scenarios(&out.join("scenarios.csv"), &scenarios, rated).map_err(runtime)?;

    let hours: Vec<f64> = (0..model.horizon).map(|h| h as f64).collect();
    let mut lo = vec![f64::INFINITY; model.horizon];
    let mut hi = vec![f64::NEG_INFINITY; model.horizon];
    for s in &scenarios {
        for h in 0..model.horizon {
            lo[h] = lo[h].min(s[h] * rated);
            hi[h] = hi[h].max(s[h] * rated);
        }
    }
    let mut chart = LineChart::new("Scenario envelope", "hour", "kW");
    chart.add_band("scenarios", hours.clone(), lo, hi);
    chart.add_series(
        "forecast",
        hours.iter().zip(forecast_kw).map(|(&h, &v)| (h, v)).collect(),
    );
    std::fs::write(out.join("scenarios.svg"), chart.render()).map_err(runtime)?;

    let mut m = manifest_with_inputs("generate", cfg, config_path, &[checkpoint, profile_path])?;
    for f in ["scenarios.csv", "scenarios.svg"] {
        m.record_output(f);
    }
    m.save(out).map_err(runtime)?;
    println!("generated {count} scenarios over {} hours", model.horizon);
    Ok(())
}

fn cmd_eval_scen(
    cfg: &SystemConfig,
    config_path: Option<&Path>,
    scenarios_path: &Path,
    paired_path: &Path,
    kind: ResourceKind,
    out: &Path,
) -> Result<(), CliError> {
    let rated = rated_kw(cfg, kind);
    let scenarios = io::read_scenarios(scenarios_path, rated).map_err(validation)?;
    let data = io::read_paired_series(paired_path, rated).map_err(validation)?;
    ensure_dir(out)?;
    let report = IndexReport {
        coverage: scengen::coverage_index(&data.actual, &scenarios).map_err(runtime)?,
        envelope_width: scengen::envelope_index(&scenarios).map_err(runtime)?,
        scenario_count: scenarios.len(),
    };
    io::write_json(&out.join("report.json"), &report).map_err(runtime)?;
    let mut m = manifest_with_inputs("eval-scen", cfg, config_path, &[scenarios_path, paired_path])?;
    m.record_output("report.json");
    m.save(out).map_err(runtime)?;
    println!(
        "coverage {:.4}, envelope width {:.4}",
        report.coverage, report.envelope_width
    );
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_bounds(
    cfg: &SystemConfig,
    config_path: Option<&Path>,
    profile_path: &Path,
    scenarios_path: &Path,
    kind: ResourceKind,
    checkpoint: Option<&Path>,
    policy: BaselinePolicy,
    out: &Path,
) -> Result<(), CliError> {
    let profile = io::read_profile(profile_path).map_err(validation)?;
    let rated = rated_kw(cfg, kind);
    let curves = io::read_scenarios(scenarios_path, rated).map_err(validation)?;
    ensure_dir(out)?;
    let env = MicrogridEnv::new(cfg, profile.clone()).map_err(validation)?;
    let scenarios: Vec<RenewableScenario> = curves
        .iter()
        .map(|c| {
            let kw: Vec<f64> = c.iter().map(|v| v * rated).collect();
            match kind {
                ResourceKind::Wt => RenewableScenario {
                    wt_kw: kw,
                    pv_kw: profile.pv_kw.clone(),
                },
                ResourceKind::Pv => RenewableScenario {
                    wt_kw: profile.wt_kw.clone(),
                    pv_kw: kw,
                },
            }
        })
        .collect();
    let bounds = match checkpoint {
        Some(path) => {
            let p = load_actor_policy(path, &env)?;
            environment::purchase_bounds(&env, &p, &scenarios, cfg.dt_hours).map_err(runtime)?
        }
        None => match policy {
            BaselinePolicy::Greedy => {
                let p = GreedyPolicy::new(&env);
                environment::purchase_bounds(&env, &p, &scenarios, cfg.dt_hours).map_err(runtime)?
            }
            BaselinePolicy::Random => {
                let p = RandomPolicy::new(*env.boxes(), cfg.seed);
                environment::purchase_bounds(&env, &p, &scenarios, cfg.dt_hours).map_err(runtime)?
            }
            BaselinePolicy::Zero => {
                environment::purchase_bounds(&env, &ZeroPolicy, &scenarios, cfg.dt_hours)
                    .map_err(runtime)?
            }
        },
    };
    io::write_bounds(&out.join("bounds.csv"), &bounds).map_err(runtime)?;
    let hours: Vec<f64> = (0..bounds.electricity_min.len()).map(|h| h as f64).collect();
    let mut chart = LineChart::new("Purchase envelopes", "hour", "kWh");
    chart.add_band(
        "electricity",
        hours.clone(),
        bounds.electricity_min.clone(),
        bounds.electricity_max.clone(),
    );
    chart.add_band(
        "gas",
        hours,
        bounds.gas_min.clone(),
        bounds.gas_max.clone(),
    );
    std::fs::write(out.join("bounds.svg"), chart.render()).map_err(runtime)?;

    let mut inputs = vec![profile_path, scenarios_path];
    if let Some(c) = checkpoint {
        inputs.push(c);
    }
    let mut m = manifest_with_inputs("bounds", cfg, config_path, &inputs)?;
    for f in ["bounds.csv", "bounds.svg"] {
        m.record_output(f);
    }
    m.save(out).map_err(runtime)?;
    println!("bounds over {} scenarios", scenarios.len());
    Ok(())
}

fn parse_edit(s: &str) -> Result<(usize, ProfileChannel, f64), CliError> {
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() != 3 {
        return Err(CliError::Validation(format!(
            "edit {s:?} must be hour:channel:value"
        )));
    }
    let hour = parts[0]
        .parse()
        .map_err(|_| CliError::Validation(format!("bad hour in edit {s:?}")))?;
    let channel = parts[1].parse().map_err(validation)?;
    let value = parts[2]
        .parse()
        .map_err(|_| CliError::Validation(format!("bad value in edit {s:?}")))?;
    Ok((hour, channel, value))
}

fn cmd_perturb(profile_path: &Path, edits: &[String], out: &Path) -> Result<(), CliError> {
    let profile = io::read_profile(profile_path).map_err(validation)?;
    let parsed: Vec<_> = edits
        .iter()
        .map(|e| parse_edit(e))
        .collect::<Result<_, _>>()?;
    let edited = environment::perturb_profile(&profile, &parsed).map_err(validation)?;
    ensure_dir(out)?;
    io::write_profile(&out.join("profile.csv"), &edited).map_err(runtime)?;
    println!("applied {} edits", parsed.len());
    Ok(())
}

fn cmd_gradcheck(cfg: &SystemConfig) -> Result<(), CliError> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let max_err = finite_diff_check_summary(&mut rng);
    println!("max relative gradient error {max_err:.3e}");
    if max_err < 1e-4 {
        Ok(())
    } else {
        Err(CliError::Runtime(format!(
            "gradient check failed: max relative error {max_err:.3e}"
        )))
    }
}
