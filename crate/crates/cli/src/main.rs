mod config;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use crowdnav_core::harness::{
    export_svg, metrics_csv, run_case, run_evaluation, summarize_seeds, Metrics, Policy,
    ReturnConvention,
};
use crowdnav_core::model::{gradient_check, ModelParams};
use crowdnav_core::sim::write_episode_log;
use crowdnav_core::trainer::{
    collect_demonstrations, rng_stream, train, Checkpoint, ReplayMemory, RngStream, Trainer,
};
use thiserror::Error;

use config::Config;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Runtime(#[from] crowdnav_core::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{0}")]
    Failed(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Config(_) => 2,
            CliError::Runtime(_) | CliError::Io { .. } | CliError::Failed(_) => 3,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
    fs::write(path, contents).map_err(io_err(path))
}

/// Model-based crowd navigation with relational graph learning.
#[derive(Debug, Parser)]
#[command(name = "crowdnav", version)]
struct Cli {
    /// TOML configuration file; command-line flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for every random stream (overrides `seed` in the config).
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Record ORCA demonstrations into a replay file.
    DemoCollect {
        #[arg(long)]
        episodes: Option<usize>,
        #[arg(long, default_value = "demos.json")]
        out: PathBuf,
    },
    /// Imitation learning followed by RL; writes weights, checkpoints and a log.
    Train {
        #[arg(long)]
        il_episodes: Option<usize>,
        #[arg(long)]
        il_epochs: Option<usize>,
        #[arg(long)]
        rl_episodes: Option<usize>,
        #[command(flatten)]
        plan: PlanArgs,
        /// Reuse demonstrations from `demo-collect` instead of collecting.
        #[arg(long)]
        demos: Option<PathBuf>,
        /// Continue from a checkpoint file.
        #[arg(long, conflicts_with = "demos")]
        resume: Option<PathBuf>,
        #[arg(long, default_value = "run")]
        out_dir: PathBuf,
    },
    /// Evaluate a policy on seeded test cases.
    Eval {
        #[command(flatten)]
        policy: PolicyArgs,
        #[arg(long)]
        cases: Option<usize>,
        /// Metrics CSV path.
        #[arg(long, default_value = "metrics.csv")]
        out: PathBuf,
        /// Per-case records as JSON lines.
        #[arg(long)]
        records: Option<PathBuf>,
        #[arg(long, value_enum)]
        return_convention: Option<ConventionArg>,
        /// Run cases one at a time.
        #[arg(long)]
        sequential: bool,
    },
    /// Run one episode and export its log and drawing.
    Rollout {
        #[command(flatten)]
        policy: PolicyArgs,
        /// Test case index; the scenario seed is `seed + case`.
        #[arg(long, default_value_t = 0)]
        case: u64,
        #[arg(long, default_value = "rollout.svg")]
        svg: PathBuf,
        #[arg(long)]
        log: Option<PathBuf>,
        /// Decision whose root action values are drawn as a heatmap.
        #[arg(long)]
        heatmap_step: Option<usize>,
    },
    /// Finite-difference check of both network stacks.
    Gradcheck {
        #[arg(long, default_value_t = 10)]
        states: usize,
        #[arg(long, default_value_t = 5)]
        humans: usize,
        #[arg(long, default_value_t = 1e-4)]
        tolerance: f64,
    },
    /// Print the default configuration.
    Config,
}

#[derive(Debug, Args)]
struct PlanArgs {
    #[arg(long)]
    depth: Option<usize>,
    #[arg(long)]
    width: Option<usize>,
}

#[derive(Debug, Args)]
struct PolicyArgs {
    #[arg(long, value_enum, default_value_t = PolicyKind::Orca)]
    policy: PolicyKind,
    /// Weight files; several evaluate independently trained runs and report mean and std.
    #[arg(long)]
    weights: Vec<PathBuf>,
    #[command(flatten)]
    plan: PlanArgs,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum PolicyKind {
    Orca,
    Rgl,
    RglLinear,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ConventionArg {
    Step,
    Episode,
}

fn load_config(cli: &Cli) -> Result<Config, CliError> {
    let mut config = match &cli.config {
        Some(path) => Config::load(path)?,
        None => Config::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    Ok(config)
}

fn apply_plan(plan: &mut crowdnav_core::planner::PlanConfig, args: &PlanArgs) {
    if let Some(d) = args.depth {
        plan.depth = d;
    }
    if let Some(w) = args.width {
        plan.width = w;
    }
}

fn load_models(config: &Config, args: &PolicyArgs) -> Result<Vec<ModelParams>, CliError> {
    if args.policy == PolicyKind::Orca {
        return Ok(Vec::new());
    }
    if args.weights.is_empty() {
        return Err(CliError::Usage(
            "--weights is required for learned policies".into(),
        ));
    }
    args.weights
        .iter()
        .map(|p| Ok(ModelParams::load(&config.model, p)?))
        .collect()
}

fn policy<'a>(kind: PolicyKind, model: Option<&'a ModelParams>, config: &Config) -> Policy<'a> {
    let plan = config.eval.plan;
    match (kind, model) {
        (PolicyKind::Rgl, Some(model)) => Policy::Rgl { model, plan },
        (PolicyKind::RglLinear, Some(model)) => Policy::RglLinear { model, plan },
        _ => Policy::Orca,
    }
}

fn print_metrics(name: &str, m: &Metrics) {
    let extra = m
        .extra_time
        .map_or_else(|| "n/a".to_string(), |t| format!("{t:.2}"));
    println!(
        "{name:<24} success {:.3}  collision {:.3}  timeout {:.3}  extra time {extra}  avg return {:.4}  max diff {:.4}  ({} cases)",
        m.success, m.collision, m.timeout, m.avg_return, m.max_diff, m.cases
    );
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut config = load_config(&cli)?;
    match cli.command {
        Command::Config => {
            print!("{}", Config::template());
            Ok(())
        }
        Command::DemoCollect { episodes, out } => {
            if let Some(n) = episodes {
                config.train.il_episodes = n;
            }
            config.validate()?;
            let memory = collect_demonstrations(
                &config.sim,
                config.train.il_episodes,
                config.train.plan.gamma,
                config.train.replay_capacity,
                &mut rng_stream(config.seed, RngStream::Demonstrations),
            )?;
            memory.save(&out)?;
            println!(
                "{} transitions from {} episodes written to {}",
                memory.len(),
                config.train.il_episodes,
                out.display()
            );
            Ok(())
        }
        Command::Train {
            il_episodes,
            il_epochs,
            rl_episodes,
            plan,
            demos,
            resume,
            out_dir,
        } => {
            if let Some(n) = il_episodes {
                config.train.il_episodes = n;
            }
            if let Some(n) = il_epochs {
                config.train.il_epochs = n;
            }
            if let Some(n) = rl_episodes {
                config.train.rl_episodes = n;
            }
            apply_plan(&mut config.train.plan, &plan);
            config.validate()?;
            fs::create_dir_all(&out_dir).map_err(io_err(&out_dir))?;
            write_file(
                &out_dir.join("config.toml"),
                toml::to_string_pretty(&config).expect("config serializes"),
            )?;
            train_command(&config, demos.as_deref(), resume.as_deref(), &out_dir)
        }
        Command::Eval {
            policy: args,
            cases,
            out,
            records,
            return_convention,
            sequential,
        } => {
            if let Some(n) = cases {
                config.eval.cases = n;
            }
            if let Some(c) = return_convention {
                config.eval.return_convention = match c {
                    ConventionArg::Step => ReturnConvention::StepAveraged,
                    ConventionArg::Episode => ReturnConvention::PerEpisode,
                };
            }
            if sequential {
                config.eval.parallel = false;
            }
            apply_plan(&mut config.eval.plan, &args.plan);
            config.validate()?;
            let models = load_models(&config, &args)?;
            let eval = config.eval.to_core(config.seed);
            let gamma = config.eval.plan.gamma;
            let mut runs = Vec::new();
            let mut all_records = Vec::new();
            let slots: Vec<Option<&ModelParams>> = if models.is_empty() {
                vec![None]
            } else {
                models.iter().map(Some).collect()
            };
            for model in slots {
                let p = policy(args.policy, model, &config);
                let (m, recs) = run_evaluation(&p, &config.sim, &eval, gamma)?;
                all_records.push(recs);
                runs.push(m);
            }
            let name = policy(args.policy, models.first(), &config).name();
            let csv = if runs.len() == 1 {
                print_metrics(&name, &runs[0]);
                metrics_csv(&[(&name, &runs[0])])
            } else {
                let s = summarize_seeds(&runs)?;
                print_metrics(&format!("{name} mean"), &s.mean);
                print_metrics(&format!("{name} std"), &s.std);
                let std_name = format!("{name} std");
                metrics_csv(&[(&name, &s.mean), (&std_name, &s.std)])
            };
            write_file(&out, csv)?;
            if let Some(path) = records {
                let mut text = String::new();
                for recs in &all_records {
                    for r in recs {
                        text.push_str(&serde_json::to_string(r).expect("record serializes"));
                        text.push('\n');
                    }
                }
                write_file(&path, text)?;
            }
            Ok(())
        }
        Command::Rollout {
            policy: args,
            case,
            svg,
            log,
            heatmap_step,
        } => {
            apply_plan(&mut config.eval.plan, &args.plan);
            config.validate()?;
            let models = load_models(&config, &args)?;
            let p = policy(args.policy, models.first(), &config);
            let record = run_case(&p, &config.sim, case as usize, config.seed + case, true)?;
            let trace = record.episode.as_ref().expect("trace requested");
            write_file(&svg, export_svg(trace, heatmap_step))?;
            if let Some(path) = log {
                let mut buf = Vec::new();
                write_episode_log(&mut buf, &trace.steps)?;
                write_file(&path, buf)?;
            }
            println!(
                "{}: {} after {} steps ({:.2} s)",
                p.name(),
                record.outcome,
                record.steps,
                record.navigation_time
            );
            Ok(())
        }
        Command::Gradcheck {
            states,
            humans,
            tolerance,
        } => {
            config.validate()?;
            let report = gradient_check(&config.model, states, humans, config.seed, tolerance)?;
            let mut failed = false;
            for (stack, blocks) in [("value", &report.value), ("prediction", &report.prediction)] {
                for b in blocks.iter() {
                    let ok = b.max_relative_error < tolerance;
                    failed |= !ok;
                    println!(
                        "{} {stack}/{} max rel err {:.3e} ({} entries, {} at kinks)",
                        if ok { "PASS" } else { "FAIL" },
                        b.name,
                        b.max_relative_error,
                        b.entries,
                        b.skipped
                    );
                }
            }
            if failed || !report.passed(tolerance) {
                return Err(CliError::Failed("gradient check failed".into()));
            }
            println!("gradient check passed");
            Ok(())
        }
    }
}

fn train_command(
    config: &Config,
    demos: Option<&Path>,
    resume: Option<&Path>,
    out_dir: &Path,
) -> Result<(), CliError> {
    let log_path = out_dir.join("training_log.jsonl");
    let every = config.train.checkpoint_every;
    let mut log = fs::OpenOptions::new()
        .create(true)
        .append(resume.is_some())
        .write(true)
        .truncate(resume.is_none())
        .open(&log_path)
        .map_err(io_err(&log_path))?;
    let mut hook = |trainer: &Trainer, record: &crowdnav_core::trainer::EpisodeRecord| {
        let line = serde_json::to_string(record).expect("record serializes");
        writeln!(log, "{line}")?;
        let done = trainer.episodes_done();
        if every > 0 && (done % every == 0 || trainer.is_done()) {
            trainer
                .checkpoint()
                .save(out_dir.join(format!("checkpoint_{done:06}.json")))?;
        }
        if done % 50 == 0 {
            let recent = &trainer.log()[done.saturating_sub(50)..];
            let wins = recent
                .iter()
                .filter(|r| r.outcome == "reached_goal")
                .count();
            eprintln!(
                "episode {done}: success {wins}/{} over the last {} episodes, epsilon {:.3}",
                recent.len(),
                recent.len(),
                record.epsilon
            );
        }
        Ok(())
    };
    let model = if let Some(path) = resume {
        let mut trainer = Trainer::resume(Checkpoint::load(path)?)?;
        while !trainer.is_done() {
            let record = trainer.run_episode()?;
            hook(&trainer, &record)?;
        }
        trainer.into_model()
    } else {
        let memory = demos.map(ReplayMemory::load).transpose()?;
        let out = train(
            &config.train,
            &config.sim,
            &config.model,
            config.seed,
            memory,
            hook,
        )?;
        let il = serde_json::to_string_pretty(&out.imitation).expect("losses serialize");
        write_file(&out_dir.join("imitation.json"), il)?;
        out.model
    };
    let weights = out_dir.join("model.json");
    model.save(&weights)?;
    println!("weights written to {}", weights.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
