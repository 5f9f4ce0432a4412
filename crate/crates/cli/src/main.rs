use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use ehris_core::harness::config::ExperimentConfig;
use ehris_core::harness::experiments::reproduce;
use ehris_core::harness::record::{self, write_csv};
use ehris_core::harness::run::{eval_seeds, evaluate, mean_efficiency, Policy, StepRow};
use ehris_core::{AgentKind, Error};

#[derive(Parser)]
#[command(name = "ehris", version, about = "Energy-harvesting UAV-RIS simulator and agents")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train the configured agent for every seed.
    Train {
        config: PathBuf,
        /// Override one key, e.g. `--set env.protocol=PS`. Repeatable.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Greedy evaluation of a trained run directory; writes eval.csv.
    Evaluate {
        run: PathBuf,
        #[arg(long, default_value_t = 2)]
        episodes: usize,
    },
    /// Train or run a comparison method with the configured environment.
    Baseline {
        config: PathBuf,
        #[arg(long, value_enum)]
        kind: BaselineKind,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Cross one key over comma-separated values and every seed.
    Sweep {
        config: PathBuf,
        /// `key=v1,v2,...`
        assignment: String,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Collect every run below a directory into one tidy CSV.
    ExportPlots {
        root: PathBuf,
        #[arg(long, default_value = "plots.csv")]
        out: PathBuf,
    },
    /// Run the protocol, algorithm and impairment experiments and print the
    /// ordering report. Exits with 4 when an ordering fails.
    Reproduce {
        config: PathBuf,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Re-execute a run directory from its snapshot and compare the metric CSVs.
    Rerun {
        run: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum BaselineKind {
    Td3,
    Ddpg,
    Search,
}

/// Failure that maps to a dedicated exit code.
#[derive(Debug)]
struct AcceptanceFailed;

impl std::fmt::Display for AcceptanceFailed {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("one or more orderings failed")
    }
}

impl std::error::Error for AcceptanceFailed {}

fn load_config(path: &Path, overrides: &[String]) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(path)?;
    for o in overrides {
        let Some((k, v)) = o.split_once('=') else {
            return Err(Error::config(o.clone(), "override must look like key=value").into());
        };
        cfg = cfg.with_override(k.trim(), v.trim())?;
    }
    Ok(cfg)
}

fn print_runs(runs: &[(PathBuf, record::RunRecord)]) {
    for (dir, r) in runs {
        let eval = r.eval_efficiency.map_or("-".to_string(), |e| format!("{e:.4}"));
        println!(
            "{}  seed={}  final_reward={:.4}  eval_efficiency={}  {:.1}s",
            dir.display(),
            r.seed,
            r.final_reward,
            eval,
            r.wall_clock_seconds
        );
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train { config, overrides } => {
            let cfg = load_config(&config, &overrides)?;
            print_runs(&record::train_all(&cfg)?);
        }
        Command::Evaluate { run, episodes } => {
            if episodes == 0 {
                bail!(Error::config("episodes", "must be >= 1"));
            }
            let rows = record::evaluate_run(&run, episodes)?;
            println!("{} slots, mean efficiency {:.4}", rows.len(), mean_efficiency(&rows));
            println!("wrote {}", run.join(record::EVAL_FILE).display());
        }
        Command::Baseline { config, kind, overrides } => {
            let mut cfg = load_config(&config, &overrides)?;
            match kind {
                BaselineKind::Td3 | BaselineKind::Ddpg => {
                    let k = if matches!(kind, BaselineKind::Td3) { AgentKind::Td3 } else { AgentKind::Ddpg };
                    cfg.agent = cfg.agent.with_kind(k);
                    cfg.name = format!("{}-{}", cfg.name, k.label());
                    print_runs(&record::train_all(&cfg)?);
                }
                BaselineKind::Search => {
                    let episodes = cfg.train.eval_episodes.max(1);
                    let rows: Vec<StepRow> =
                        evaluate(&cfg.effective_env(), &Policy::Search(&cfg.search), &eval_seeds(episodes))?;
                    let dir = cfg.output_dir.join(format!("{}-search", cfg.name));
                    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
                    std::fs::write(dir.join(record::CONFIG_FILE), cfg.to_toml_string()?)?;
                    write_csv(&dir.join(record::EVAL_FILE), &StepRow::COLUMNS, &rows)?;
                    println!("{} slots, mean efficiency {:.4}", rows.len(), mean_efficiency(&rows));
                    println!("wrote {}", dir.join(record::EVAL_FILE).display());
                }
            }
        }
        Command::Sweep { config, assignment, overrides } => {
            let cfg = load_config(&config, &overrides)?;
            let Some((key, values)) = assignment.split_once('=') else {
                bail!(Error::config(assignment.clone(), "sweep must look like key=v1,v2"));
            };
            let values: Vec<String> = values.split(',').map(|v| v.trim().to_string()).filter(|v| !v.is_empty()).collect();
            print_runs(&record::sweep(&cfg, key.trim(), &values)?);
        }
        Command::ExportPlots { root, out } => {
            let n = record::export_plots(&root, &out)?;
            println!("wrote {n} rows to {}", out.display());
        }
        Command::Reproduce { config, overrides } => {
            let cfg = load_config(&config, &overrides)?;
            let report = reproduce(&cfg, &mut |line| eprintln!("{line}"))?;
            print!("{report}");
            let dir = cfg.output_dir.join(&cfg.name);
            std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
            std::fs::write(dir.join("report.json"), serde_json::to_string_pretty(&report)?)?;
            if !report.passed() {
                return Err(AcceptanceFailed.into());
            }
        }
        Command::Rerun { run, out } => {
            let out = out.unwrap_or_else(|| run.with_extension("rerun"));
            if record::reproduce_run(&run, &out)? {
                println!("identical: {} and {}", run.display(), out.display());
            } else {
                bail!("metric files differ between {} and {}", run.display(), out.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.is::<AcceptanceFailed>() {
                ExitCode::from(4)
            } else if matches!(e.downcast_ref::<Error>(), Some(Error::Config { .. })) {
                ExitCode::from(2)
            } else {
                ExitCode::from(3)
            }
        }
    }
}
