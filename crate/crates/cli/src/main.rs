mod commands;
mod config;
mod error;
mod ingest;
mod output;
mod reproduce;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::commands::Overrides;
use crate::config::{ReproduceConfig, RunConfig};
use crate::error::{CliError, CliResult};

/// Output directory used when neither `--out` nor `io.output` is given.
const OUT_ENV: &str = "FURBI_OUT";

#[derive(Debug, Parser)]
#[command(name = "furbi", version, about = "Dependent random measures: dependence summaries, model fitting and bundled experiments")]
struct Cli {
    /// TOML (or .json) run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Total MCMC sweeps, burn-in included.
    #[arg(long, global = true)]
    iters: Option<usize>,
    #[arg(long = "burn-in", global = true)]
    burn_in: Option<usize>,
    /// Worker threads for parallel chains and replicates.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output directory (default: $FURBI_OUT, then `furbi-out`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Tie probabilities and correlations implied by a prior.
    Dependence,
    /// Fit a model to CSV data.
    Fit {
        /// Input CSV; overrides `io.input`.
        input: Option<PathBuf>,
    },
    /// Run a bundled experiment at desk scale.
    Reproduce {
        /// Experiment name; `list` prints the available ones.
        name: Option<String>,
        #[arg(long)]
        replicates: Option<usize>,
    },
}

fn out_dir(cli: &Cli, cfg: &RunConfig, default: &str) -> PathBuf {
    cli.out
        .clone()
        .or_else(|| cfg.io.output.clone())
        .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(default))
}

fn print_json<T: serde::Serialize>(value: &T) -> CliResult<()> {
    use std::io::Write;
    // A closed pipe (`furbi ... | head`) is not an error.
    let _ = writeln!(std::io::stdout(), "{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn execute(cli: Cli) -> CliResult<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Usage("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(format!("cannot set up threads: {e}")))?;
    }
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let overrides = Overrides { seed: cli.seed, iters: cli.iters, burn_in: cli.burn_in };
    match &cli.command {
        Command::Dependence => {
            let report = commands::dependence(&cfg, cli.seed)?;
            if let Some(dir) = cli.out.clone().or_else(|| cfg.io.output.clone()) {
                let mut d = output::OutDir::create(&dir)?;
                d.json("dependence.json", &report)?;
            }
            print_json(&report)
        }
        Command::Fit { input } => {
            if let Some(i) = input {
                cfg.io.input = Some(i.clone());
            }
            let Some(model) = cfg.model.as_mut() else {
                return Err(CliError::Config("fit needs a config with a [model] section (--config)".into()));
            };
            overrides.apply(model);
            let dir = out_dir(&cli, &cfg, "furbi-out");
            let summary = commands::fit(&cfg, &dir)?;
            print_json(&summary)
        }
        Command::Reproduce { name, replicates } => {
            let mut req = match (name.as_deref(), &cfg.reproduce) {
                (Some("list"), _) => {
                    return print_json(&reproduce::EXPERIMENTS);
                }
                (Some(n), Some(r)) if r.name == n => r.clone(),
                (Some(n), _) => ReproduceConfig { name: n.to_string(), replicates: None, iters: None, burn_in: None, seed: None },
                (None, Some(r)) => r.clone(),
                (None, None) => {
                    return Err(CliError::Usage(format!(
                        "name an experiment: {}",
                        reproduce::EXPERIMENTS.join(", ")
                    )))
                }
            };
            req.replicates = replicates.or(req.replicates);
            req.iters = cli.iters.or(req.iters);
            req.burn_in = cli.burn_in.or(req.burn_in);
            req.seed = cli.seed.or(req.seed);
            let req = reproduce::resolve(&req)?;
            let dir = out_dir(&cli, &cfg, &format!("furbi-out/{}", req.name));
            let summary = reproduce::reproduce(&req, &dir)?;
            print_json(&summary)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
