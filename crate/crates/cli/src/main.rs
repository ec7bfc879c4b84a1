use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use rfnet::harness::{
    check_assumptions, compare_to_theory, prepare, run_prepared, write_json, write_outputs, ExperimentConfig,
    SPECTRAL_FILE,
};
use rfnet::Error;

#[derive(Parser)]
#[command(name = "rfnet", version, about = "Distributed random-feature regression over agent networks")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Override a config value, e.g. `--set run.alpha=0.02`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    /// Exit successfully even when some runs diverge.
    #[arg(long, global = true)]
    allow_divergence: bool,
    /// Output directory; takes precedence over `output.dir` and RFNET_OUTPUT_DIR.
    #[arg(long, value_name = "DIR", global = true)]
    output_dir: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Print the spectral report and step-size feasibility as JSON.
    Analyze {
        config: PathBuf,
        /// Also write the report to this file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the Monte-Carlo experiment and write figure data.
    Simulate { config: PathBuf },
    /// Run the pool-mode experiment on a dataset file.
    ReproducePaper {
        config: PathBuf,
        /// Dataset CSV; overrides `data.path`.
        #[arg(long)]
        data_path: Option<PathBuf>,
    },
    /// Repeat `simulate` across values of one parameter.
    Sweep {
        config: PathBuf,
        /// `alpha`, `batch_size`, `features`, `agents`, or any dotted config key.
        #[arg(long)]
        param: String,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
    },
    /// Check connectivity, double stochasticity, G ranks and the feature bound.
    Validate { config: PathBuf },
}

enum Failure {
    Error(Error),
    Diverged(usize),
    Invalid,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Error(e)
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Diverged { .. } => 3,
        Error::Io(_)
        | Error::Csv(_)
        | Error::Json(_)
        | Error::MissingFile(_)
        | Error::MissingColumn(_)
        | Error::NoUsableRows
        | Error::ZeroVariance(_)
        | Error::EmptyPool => 4,
        _ => 2,
    }
}

fn param_key(param: &str) -> String {
    match param {
        "alpha" => "run.alpha".into(),
        "consensus_alpha" => "run.consensus_alpha".into(),
        "batch_size" | "c" => "run.batch_size".into(),
        "iterations" => "run.iterations".into(),
        "runs" => "run.runs".into(),
        "features" | "M" => "model.features".into(),
        "agents" | "n" => "network.agents".into(),
        "noise_std" => "synthetic.noise_std".into(),
        other => other.to_string(),
    }
}

fn load(path: &Path, global: &Global, extra: &[String]) -> Result<ExperimentConfig, Error> {
    let mut overrides = global.overrides.clone();
    overrides.extend_from_slice(extra);
    let cfg = ExperimentConfig::load(path)?.with_overrides(&overrides)?;
    cfg.validate()?;
    Ok(cfg)
}

fn output_dir(cfg: &ExperimentConfig, global: &Global) -> PathBuf {
    global.output_dir.clone().unwrap_or_else(|| cfg.output_dir())
}

fn print_json(value: &serde_json::Value) {
    println!("{}", serde_json::to_string_pretty(value).expect("json values serialize"));
}

/// Runs one experiment into `dir` and returns a summary plus the failed-run count.
fn simulate_into(cfg: &ExperimentConfig, dir: &Path) -> Result<(serde_json::Value, usize), Error> {
    let prepared = prepare::<f64>(cfg)?;
    let outcome = run_prepared(&prepared)?;
    let verdict = outcome.result.as_ref().map(compare_to_theory);
    write_outputs(dir, &prepared.output_context(), &outcome, verdict.as_ref())?;
    let spec = &prepared.spectral;
    let summary = json!({
        "output_dir": dir,
        "runs_requested": outcome.runs_requested,
        "runs_completed": outcome.result.as_ref().map_or(0, |r| r.runs),
        "diverged_runs": outcome.failures.len(),
        "alpha": spec.alpha,
        "alpha_first_moment_max": spec.alpha_first_moment_max,
        "alpha_second_moment_max": spec.alpha_second_moment_max,
        "first_moment_feasible": spec.first_moment_feasible,
        "second_moment_feasible": spec.second_moment_feasible,
        "verdict": verdict,
    });
    Ok((summary, outcome.failures.len()))
}

fn run(cli: Cli) -> Result<(), Failure> {
    let global = &cli.global;
    match cli.command {
        Command::Analyze { config, out } => {
            let cfg = load(&config, global, &[])?;
            let prepared = prepare::<f64>(&cfg)?;
            if let Some(path) = out {
                write_json(&path, &prepared.spectral)?;
            } else if let Some(dir) = &global.output_dir {
                std::fs::create_dir_all(dir).map_err(Error::from)?;
                write_json(&dir.join(SPECTRAL_FILE), &prepared.spectral)?;
            }
            print_json(&serde_json::to_value(&prepared.spectral).map_err(Error::from)?);
            Ok(())
        }
        Command::Simulate { config } => {
            let cfg = load(&config, global, &[])?;
            let (summary, failed) = simulate_into(&cfg, &output_dir(&cfg, global))?;
            print_json(&summary);
            if failed > 0 && !global.allow_divergence {
                return Err(Failure::Diverged(failed));
            }
            Ok(())
        }
        Command::ReproducePaper { config, data_path } => {
            let mut extra = vec!["mode=pool".to_string()];
            if let Some(p) = data_path {
                extra.push(format!("data.path={}", toml_string(&p.to_string_lossy())));
            }
            let cfg = load(&config, global, &extra)?;
            let (summary, failed) = simulate_into(&cfg, &output_dir(&cfg, global))?;
            print_json(&summary);
            if failed > 0 && !global.allow_divergence {
                return Err(Failure::Diverged(failed));
            }
            Ok(())
        }
        Command::Sweep { config, param, values } => {
            let key = param_key(&param);
            let base = load(&config, global, &[])?;
            let root = output_dir(&base, global);
            let mut entries = Vec::new();
            let mut failed = 0;
            for value in &values {
                let cfg = load(&config, global, &[format!("{key}={value}")])?;
                let dir = root.join(format!("{param}={value}"));
                let (summary, f) = simulate_into(&cfg, &dir)?;
                failed += f;
                let beyond = !summary["first_moment_feasible"].as_bool().unwrap_or(false);
                entries.push(json!({
                    "param": param,
                    "value": value,
                    "beyond_first_moment_range": beyond,
                    "summary": summary,
                }));
            }
            print_json(&json!(entries));
            if failed > 0 && !global.allow_divergence {
                return Err(Failure::Diverged(failed));
            }
            Ok(())
        }
        Command::Validate { config } => {
            let cfg = load(&config, global, &[])?;
            let prepared = prepare::<f64>(&cfg)?;
            let report = check_assumptions(&prepared)?;
            print_json(&serde_json::to_value(&report).map_err(Error::from)?);
            if report.passed {
                Ok(())
            } else {
                Err(Failure::Invalid)
            }
        }
    }
}

/// Quotes a string as a TOML literal for `--set`.
fn toml_string(s: &str) -> String {
    let escaped = s.replace('\\', "\\\\").replace('"', "\\\"");
    format!("\"{escaped}\"")
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Error(e)) => {
            eprintln!("{}", json!({ "error": e.kind(), "message": e.to_string() }));
            ExitCode::from(exit_code(&e))
        }
        Err(Failure::Diverged(count)) => {
            eprintln!(
                "{}",
                json!({ "error": "diverged", "message": format!("{count} run(s) diverged; see manifest.json") })
            );
            ExitCode::from(3)
        }
        Err(Failure::Invalid) => {
            eprintln!("{}", json!({ "error": "assumptions", "message": "assumption checks failed" }));
            ExitCode::from(5)
        }
    }
}
