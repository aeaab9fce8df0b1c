use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use laxhopf::cli::{self, Outcome, ScenarioConfig};
use laxhopf::{exec, Error, Result};

#[derive(Parser)]
#[command(name = "laxhopf", version, about = "Value functions by Lax-Hopf reductions, with oracles")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Scenario JSON file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory for artifacts.
    #[arg(long, default_value = "laxhopf-out")]
    out: PathBuf,
    /// Overrides the solver seed of the scenario.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (falls back to LAXHOPF_THREADS).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the scenario and write its artifacts.
    Run(Common),
    /// Run the scenario once per value of a numeric field.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Dotted path of the swept field, e.g. `state.0` or `rate.params.0`.
        #[arg(long)]
        axis: String,
        /// Comma-separated values; may be empty.
        #[arg(long, default_value = "", value_parser = parse_values)]
        values: Values,
    },
    /// Convergence study of the oracle against the formula value.
    Verify(Common),
    /// Dump the conjugate table of the scenario's cost.
    Conjugate(Common),
    /// Dump the moderation table of the scenario's cost.
    Moderate(Common),
}

#[derive(Clone, Debug)]
struct Values(Vec<f64>);

fn parse_values(s: &str) -> std::result::Result<Values, String> {
    s.split(',')
        .map(str::trim)
        .filter(|v| !v.is_empty())
        .map(|v| v.parse::<f64>().map_err(|e| format!("`{v}`: {e}")))
        .collect::<std::result::Result<_, _>>()
        .map(Values)
}

fn setup(common: &Common) {
    let threads = common
        .threads
        .or_else(|| std::env::var("LAXHOPF_THREADS").ok().and_then(|s| s.parse().ok()));
    if let Some(n) = threads.filter(|n| *n > 0) {
        exec::init_global_threads(n);
    }
}

fn load(common: &Common) -> Result<ScenarioConfig> {
    let mut cfg = cli::load_config(&common.config)?;
    if let Some(seed) = common.seed {
        cfg.solver.seed = seed;
    }
    Ok(cfg)
}

fn finish(outcome: Outcome, out: &Path) -> Result<i32> {
    outcome.write(out)?;
    println!("{}", outcome.summary);
    Ok(outcome.exit_code())
}

fn dispatch(command: Command) -> Result<i32> {
    match command {
        Command::Run(c) => {
            setup(&c);
            finish(cli::run(&load(&c)?)?, &c.out)
        }
        Command::Verify(c) => {
            setup(&c);
            finish(cli::verify(&load(&c)?)?, &c.out)
        }
        Command::Conjugate(c) => {
            setup(&c);
            finish(cli::conjugate(&load(&c)?)?, &c.out)
        }
        Command::Moderate(c) => {
            setup(&c);
            finish(cli::moderate_table(&load(&c)?)?, &c.out)
        }
        Command::Sweep { common, axis, values } => {
            setup(&common);
            let mut doc = cli::load_json(&common.config)?;
            if let Some(seed) = common.seed {
                doc.as_object_mut()
                    .ok_or_else(|| Error::Config {
                        path: String::new(),
                        message: "scenario must be a JSON object".into(),
                    })?
                    .entry("solver")
                    .or_insert_with(|| serde_json::json!({}))["seed"] = serde_json::json!(seed);
            }
            let rows = cli::sweep(&doc, &axis, &values.0)?;
            std::fs::create_dir_all(&common.out)?;
            let file = std::fs::File::create(common.out.join("sweep.csv"))?;
            cli::write_sweep_csv(file, &axis, &rows)?;
            let failed = rows.iter().filter(|r| r.exit_code != 0).count();
            println!("sweep rows={} failed={failed}", rows.len());
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let args = Cli::parse();
    match dispatch(args.command) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(cli::error_exit_code(&e) as u8)
        }
    }
}
