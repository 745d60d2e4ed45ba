use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use labelgan_cli::commands::{cmd_kl, cmd_run, cmd_stats, cmd_synth, Outcome};
use labelgan_cli::config::{
    read_config, to_toml, ExperimentConfig, KlConfig, SynthConfig, SyntheticConfig, DATA_DIR_ENV,
};
use labelgan_cli::{exit_code, EXIT_FAILURE, EXIT_SUCCESS};

#[derive(Parser)]
#[command(name = "labelgan", version, about = "Learn binary classifiers from label-noise corrupted data with WGANs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// TOML config file.
    #[arg(long, env = "LABELGAN_CONFIG")]
    config: PathBuf,
    /// Overrides the master seed of the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the output directory of the config.
    #[arg(long, env = "LABELGAN_OUT")]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Template {
    Run,
    Kl,
    Synth,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic two-Gaussian dataset as CSV.
    Synth(Common),
    /// Run multi-trial experiments and write the trial ledger.
    Run {
        #[command(flatten)]
        common: Common,
        /// Worker threads for independent trials.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// KL-divergence monotonicity checks and noise-rate sweep.
    Kl(Common),
    /// Friedman and Nemenyi tests over trial ledgers.
    Stats {
        /// Trial ledgers (CSV).
        #[arg(required = true)]
        ledgers: Vec<PathBuf>,
        /// Extra score files with columns dataset,scheme,rho_plus,rho_minus,trial,accuracy,am.
        #[arg(long)]
        baseline: Vec<PathBuf>,
        /// Score column to compare.
        #[arg(long, default_value = "accuracy", value_parser = ["accuracy", "am"])]
        metric: String,
        #[arg(long, env = "LABELGAN_OUT")]
        out: PathBuf,
    },
    /// Print an example config.
    Template { kind: Template },
}

fn config_dir(path: &Path) -> PathBuf {
    path.parent().map_or_else(|| PathBuf::from("."), Path::to_path_buf)
}

fn run(cli: Cli) -> anyhow::Result<Outcome> {
    match cli.command {
        Command::Synth(c) => {
            let mut cfg: SynthConfig = read_config(&c.config)?;
            if let Some(s) = c.seed {
                cfg.synthetic.seed = s;
            }
            cfg.out = c.out.or(cfg.out.map(|o| config_dir(&c.config).join(o)));
            cmd_synth(&cfg)
        }
        Command::Run { common: c, jobs } => {
            let mut cfg: ExperimentConfig = read_config(&c.config)?;
            let data_dir = std::env::var_os(DATA_DIR_ENV).map(PathBuf::from);
            cfg.resolve_paths(&config_dir(&c.config), data_dir.as_deref());
            if let Some(s) = c.seed {
                cfg.seed = s;
            }
            if let Some(o) = c.out {
                cfg.out = Some(o);
            }
            cmd_run(&cfg, jobs)
        }
        Command::Kl(c) => {
            let mut cfg: KlConfig = read_config(&c.config)?;
            cfg.out = c.out.or(cfg.out.map(|o| config_dir(&c.config).join(o)));
            cmd_kl(&cfg)
        }
        Command::Stats {
            ledgers,
            baseline,
            metric,
            out,
        } => cmd_stats(&ledgers, &baseline, &metric, &out),
        Command::Template { kind } => {
            let text = match kind {
                Template::Run => to_toml(&ExperimentConfig::example()),
                Template::Kl => to_toml(&KlConfig {
                    out: Some("runs/kl".into()),
                    ..KlConfig::default()
                }),
                Template::Synth => to_toml(&SynthConfig {
                    out: Some("runs/sd100".into()),
                    synthetic: SyntheticConfig::standard(100),
                }),
            };
            print!("{text}");
            Ok(Outcome::Success)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let code = match run(Cli::parse()) {
        Ok(Outcome::Success) => EXIT_SUCCESS,
        Ok(Outcome::TrialFailures(_)) => EXIT_FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            exit_code(&e)
        }
    };
    ExitCode::from(code as u8)
}
