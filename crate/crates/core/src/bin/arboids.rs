//! Command-line front end: training, alternating training, evaluation,
//! comparison grids, trajectory export, and config validation.

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use arboids::config::{parse_config, PolicyId, RunConfig};
use arboids::error::{Error, Result};
use arboids::eval::{
    compare_grid, eval_spawn_sector, run_episode, run_trials, write_trajectories, AttackerPolicy,
    DefenderPolicy, NamedPolicy,
};
use arboids::orchestrator::{alternating_train, train, PhaseSchedule};
use arboids::sac::Learner;

#[derive(Parser)]
#[command(
    name = "arboids",
    version,
    about = "Multi-USV target defense laboratory: simulator, heuristics, and adaptive-residual SAC"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by every subcommand that reads a run config.
#[derive(Args)]
struct ConfigArgs {
    /// JSON run config; defaults apply to missing keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Start from the reduced desk profile instead of the full-scale defaults.
    #[arg(long)]
    desk: bool,
    /// Override the config seed.
    #[arg(long)]
    seed: Option<u64>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => parse_config(path)?,
            None if self.desk => RunConfig::desk(),
            None => RunConfig::default(),
        };
        if self.config.is_some() && self.desk {
            return Err(Error::config("--config and --desk are mutually exclusive"));
        }
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train the configured defender policy against the scripted attacker.
    Train {
        #[command(flatten)]
        common: ConfigArgs,
        /// Run directory for config echo, metrics, and checkpoints.
        #[arg(long)]
        out: PathBuf,
        /// Override the configured defender policy (rp|vanilla_sac|arboids).
        #[arg(long)]
        policy: Option<String>,
        /// Override training.total_steps.
        #[arg(long)]
        steps: Option<u64>,
    },
    /// Alternating two-side training (defender first, sides alternate).
    AltTrain {
        #[command(flatten)]
        common: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        policy: Option<String>,
        /// Number of phases.
        #[arg(long, default_value_t = 5)]
        phases: usize,
        /// Decision steps per phase; defaults to total_steps / phases.
        #[arg(long)]
        phase_steps: Option<u64>,
    },
    /// Evaluate one policy over independent trials.
    Eval {
        #[command(flatten)]
        common: ConfigArgs,
        /// Policy to evaluate: boids, apf, or name=checkpoint.ckpt for
        /// rp/vanilla_sac/arboids.
        #[arg(long, default_value = "boids")]
        policy: String,
        #[arg(long, default_value_t = 100)]
        trials: u32,
        /// Override attacker agility.
        #[arg(long)]
        agility: Option<f64>,
        /// Override team size.
        #[arg(long)]
        defenders: Option<usize>,
        /// Write stats JSON here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare policies over the agility and team-size grids.
    Compare {
        #[command(flatten)]
        common: ConfigArgs,
        /// Repeatable; same syntax as eval --policy.
        #[arg(long = "policy", required = true)]
        policies: Vec<String>,
        #[arg(long, default_value_t = 50)]
        trials: u32,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Export one evaluation episode's trajectories as CSV.
    Export {
        #[command(flatten)]
        common: ConfigArgs,
        #[arg(long, default_value = "boids")]
        policy: String,
        #[arg(long)]
        agility: Option<f64>,
        #[arg(long)]
        defenders: Option<usize>,
        /// Use the evaluation spawn sector (width pi/2 on a random axis)
        /// instead of the configured sector.
        #[arg(long)]
        eval_sector: bool,
        /// CSV output path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Parse and validate a config file, echoing the resolved config.
    ValidateConfig {
        #[arg(long)]
        config: PathBuf,
    },
}

/// A parsed `--policy` value: an id plus a checkpoint for learned policies.
struct PolicySpec {
    id: PolicyId,
    learner: Option<Learner<f32>>,
}

impl PolicySpec {
    fn parse(text: &str, cfg: &RunConfig) -> Result<Self> {
        let (name, ckpt) = match text.split_once('=') {
            Some((n, c)) => (n, Some(c)),
            None => (text, None),
        };
        let id = PolicyId::parse(name)?;
        let learner = match (id.kind(), ckpt) {
            (None, None) => None,
            (None, Some(_)) => {
                return Err(Error::config(format!(
                    "policy '{name}' is scripted and takes no checkpoint"
                )));
            }
            (Some(_), None) => {
                return Err(Error::config(format!(
                    "learned policy '{name}' needs a checkpoint: --policy {name}=run/checkpoints/final.ckpt"
                )));
            }
            (Some(kind), Some(path)) => {
                let learner = Learner::<f32>::load(Path::new(path), cfg.learner.clone())?;
                if learner.kind != kind {
                    return Err(Error::config(format!(
                        "checkpoint {path} holds a {} policy, not {}",
                        learner.kind.label(),
                        name
                    )));
                }
                Some(learner)
            }
        };
        Ok(Self { id, learner })
    }

    fn as_defender<'a>(&'a self, cfg: &'a RunConfig) -> DefenderPolicy<'a> {
        match (&self.learner, self.id) {
            (Some(l), _) => DefenderPolicy::Learned(l),
            (None, PolicyId::Apf) => DefenderPolicy::Apf(&cfg.apf),
            (None, _) => DefenderPolicy::Boids,
        }
    }
}

fn write_or_print(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => {
            fs::write(path, text)?;
            Ok(())
        }
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes())?;
            stdout.write_all(b"\n")?;
            Ok(())
        }
    }
}

fn to_pretty<T: serde::Serialize>(value: &T) -> Result<String> {
    serde_json::to_string_pretty(value)
        .map_err(|e| Error::runtime(format!("serialization failed: {e}")))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train { common, out, policy, steps } => {
            let mut cfg = common.resolve()?;
            if let Some(p) = policy {
                cfg.policy = PolicyId::parse(&p)?;
            }
            if let Some(s) = steps {
                cfg.training.total_steps = s;
            }
            let report = train(&cfg, &out)?;
            log::info!(
                "trained {} steps, {} episodes, {} updates",
                report.env_steps,
                report.episodes,
                report.updates
            );
            println!("{}", to_pretty(&report)?);
            Ok(())
        }
        Command::AltTrain { common, out, policy, phases, phase_steps } => {
            let mut cfg = common.resolve()?;
            if let Some(p) = policy {
                cfg.policy = PolicyId::parse(&p)?;
            }
            let steps_each = match phase_steps {
                Some(s) => s,
                None => {
                    let p = phases.max(1) as u64;
                    (cfg.training.total_steps / p).max(1)
                }
            };
            let schedule = PhaseSchedule::alternating(phases, steps_each);
            let report = alternating_train(&cfg, &schedule, &out)?;
            println!("{}", to_pretty(&report)?);
            Ok(())
        }
        Command::Eval { common, policy, trials, agility, defenders, out } => {
            let cfg = common.resolve()?;
            let spec = PolicySpec::parse(&policy, &cfg)?;
            let stats = run_trials(
                &cfg,
                &spec.as_defender(&cfg),
                &AttackerPolicy::Apf(&cfg.apf),
                trials,
                cfg.seed,
                agility,
                defenders,
            )?;
            let (lo, hi) = stats.wilson95();
            let doc = serde_json::json!({
                "policy": spec.id.label(),
                "stats": stats,
                "success_rate": stats.success_rate(),
                "wilson95": [lo, hi],
            });
            write_or_print(out.as_deref(), &to_pretty(&doc)?)
        }
        Command::Compare { common, policies, trials, out } => {
            let cfg = common.resolve()?;
            let specs = policies
                .iter()
                .map(|p| PolicySpec::parse(p, &cfg))
                .collect::<Result<Vec<_>>>()?;
            let named: Vec<NamedPolicy<'_>> = specs
                .iter()
                .map(|s| NamedPolicy { id: s.id, policy: s.as_defender(&cfg) })
                .collect();
            let rows = compare_grid(&cfg, &named, trials, cfg.seed)?;
            write_or_print(out.as_deref(), &to_pretty(&rows)?)
        }
        Command::Export { common, policy, agility, defenders, eval_sector, out } => {
            let cfg = common.resolve()?;
            let spec = PolicySpec::parse(&policy, &cfg)?;
            let mut env_cfg = cfg.engagement.clone();
            if let Some(a) = agility {
                env_cfg.agility = a;
            }
            if let Some(n) = defenders {
                env_cfg.n_defenders = n;
            }
            env_cfg.validate()?;
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            if eval_sector {
                env_cfg.spawn_sector = eval_spawn_sector(&mut rng);
            }
            let record = run_episode(
                &env_cfg,
                &cfg.boids,
                &spec.as_defender(&cfg),
                &AttackerPolicy::Apf(&cfg.apf),
                &mut rng,
                false,
                true,
            )?;
            let file = fs::File::create(&out)?;
            write_trajectories(&record, std::io::BufWriter::new(file))?;
            log::info!(
                "wrote {} frames, outcome {}",
                record.frames.len(),
                record.outcome.label()
            );
            Ok(())
        }
        Command::ValidateConfig { config } => {
            let cfg = parse_config(&config)?;
            println!("{}", cfg.to_json_pretty()?);
            Ok(())
        }
    }
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if let Err(err) = run(cli) {
        eprintln!("error: {err}");
        std::process::exit(err.exit_code());
    }
}
