use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use depo_cli::config::{parse_config, ConfigError, ExperimentConfig};
use depo_cli::experiment::{
    export_fixture, parse_sweep_param, run_experiment, sweep, verify_trace, ExperimentReport, EXIT_ERROR,
    EXIT_INVARIANT, EXIT_OK,
};

const SEED_ENV: &str = "DEPO_SEED_OVERRIDE";

#[derive(Debug, Parser)]
#[command(name = "depo", version, about = "Online preference-optimization simulator")]
struct Cli {
    /// Experiment configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Maximum number of parallel runs.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    /// Output directory; overrides `output_dir` in the config.
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    /// Check a trace file against the invariant suite instead of running.
    #[arg(long, global = true, value_name = "TRACE.csv")]
    verify_only: Option<PathBuf>,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run every configured arm and seed.
    Run,
    /// Run once per combination of swept `[train]` values.
    Sweep {
        /// `key=v1,v2,...`; may be repeated.
        #[arg(long = "param", required = true)]
        params: Vec<String>,
    },
    /// Write the configured world as a fixture file.
    ExportWorld {
        /// Destination; defaults to `<output>/world.fixture`.
        #[arg(long)]
        to: Option<PathBuf>,
    },
    /// Run the invariant suite on a trace file.
    Verify { trace: PathBuf },
}

fn fail(msg: impl std::fmt::Display) -> i32 {
    eprintln!("error: {msg}");
    EXIT_ERROR
}

fn load(cli: &Cli) -> Result<ExperimentConfig, i32> {
    let Some(path) = &cli.config else {
        return Err(fail("--config PATH is required"));
    };
    let mut cfg = match parse_config(path) {
        Ok(c) => c,
        Err(ConfigError::Invalid(issues)) => {
            eprintln!("error: {} has {} problem(s):", path.display(), issues.len());
            for i in &issues {
                eprintln!("  {i}");
            }
            return Err(EXIT_ERROR);
        }
        Err(e) => return Err(fail(e)),
    };
    if let Ok(raw) = std::env::var(SEED_ENV) {
        match raw.trim().parse::<u64>() {
            Ok(seed) => cfg.override_seeds(seed),
            Err(_) => return Err(fail(format!("{SEED_ENV} must be a non-negative integer (got '{raw}')"))),
        }
    }
    if let Some(out) = &cli.output {
        cfg.output_dir = out.clone();
    }
    Ok(cfg)
}

fn report(label: &str, r: &ExperimentReport) {
    for f in &r.files {
        println!("{label}wrote {}", f.display());
    }
    for f in &r.failures {
        eprintln!("{label}invariant failure: {f}");
    }
}

fn verify(cfg: &ExperimentConfig, trace: &Path) -> i32 {
    let checks = match verify_trace(cfg, trace) {
        Ok(c) => c,
        Err(e) => return fail(e),
    };
    let mut code = EXIT_OK;
    for c in &checks {
        let status = if c.passed { "ok" } else { "FAILED" };
        let at = c.round.map_or(String::new(), |r| format!(" (round {r})"));
        let detail = if c.detail.is_empty() { String::new() } else { format!(": {}", c.detail) };
        println!("{status:6} {}{at}{detail}", c.name);
        if !c.passed {
            code = EXIT_INVARIANT;
        }
    }
    code
}

fn execute(cli: Cli) -> i32 {
    let cfg = match load(&cli) {
        Ok(c) => c,
        Err(code) => return code,
    };
    if let Some(trace) = &cli.verify_only {
        if !matches!(cli.command, None | Some(Command::Run)) {
            return fail("--verify-only cannot be combined with this subcommand");
        }
        return verify(&cfg, trace);
    }
    match cli.command.unwrap_or(Command::Run) {
        Command::Run => match run_experiment(&cfg, cli.jobs) {
            Ok(r) => {
                report("", &r);
                r.exit_code
            }
            Err(e) => fail(e),
        },
        Command::Sweep { params } => {
            let mut parsed = Vec::new();
            for p in &params {
                match parse_sweep_param(p) {
                    Ok(kv) => parsed.push(kv),
                    Err(e) => return fail(e),
                }
            }
            match sweep(&cfg, &parsed, cli.jobs) {
                Ok(results) => results.iter().fold(EXIT_OK, |code, (label, r)| {
                    report(&format!("[{label}] "), r);
                    code.max(r.exit_code)
                }),
                Err(e) => fail(e),
            }
        }
        Command::ExportWorld { to } => {
            let path = to.unwrap_or_else(|| cfg.output_dir.join("world.fixture"));
            match export_fixture(&cfg, &path) {
                Ok(()) => {
                    println!("wrote {}", path.display());
                    EXIT_OK
                }
                Err(e) => fail(e),
            }
        }
        Command::Verify { trace } => verify(&cfg, &trace),
    }
}

fn main() -> ExitCode {
    let code = execute(Cli::parse());
    ExitCode::from(code as u8)
}
