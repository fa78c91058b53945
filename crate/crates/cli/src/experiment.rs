//! Orchestration of arms × seeds, artifact emission, and the exit-status
//! contract: nonzero iff a hard invariant failed.

use std::fs;
use std::path::{Path, PathBuf};

use depo_core::driver::{read_csv, run, verify_rounds, Arm, InvariantCheck, RunSummary, RunTrace};
use depo_core::{World, WorldError};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::ExperimentConfig;

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_INVARIANT: i32 = 2;

#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    World(#[from] WorldError),
    #[error("{arm} seed {seed}: {message}")]
    Run { arm: Arm, seed: u64, message: String },
    #[error("{0}")]
    Other(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ExperimentError + '_ {
    move |source| ExperimentError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write_file(path: &Path, contents: &[u8]) -> Result<(), ExperimentError> {
    fs::write(path, contents).map_err(io_err(path))
}

pub fn trace_file_name(arm: Arm, seed: u64) -> String {
    format!("trace_{arm}_seed{seed}.csv")
}

pub fn summary_file_name(arm: Arm) -> String {
    format!("summary_{arm}.json")
}

pub const COMPARISON_FILE: &str = "comparison.csv";

#[derive(Debug, Clone, Serialize)]
pub struct Checkpoint {
    pub round: usize,
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Failure {
    pub seed: u64,
    pub invariant: String,
    pub round: Option<usize>,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct ArmSummary {
    pub arm: Arm,
    pub config: ExperimentConfig,
    pub seeds: Vec<u64>,
    pub checkpoints: Vec<Checkpoint>,
    pub invariants_ok: bool,
    pub failures: Vec<Failure>,
    pub runs: Vec<RunSummary>,
}

#[derive(Debug, Clone)]
pub struct ExperimentReport {
    pub exit_code: i32,
    pub files: Vec<PathBuf>,
    pub failures: Vec<String>,
    pub summaries: Vec<ArmSummary>,
}

pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (0.0, 0.0);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

fn pool(jobs: usize) -> Result<rayon::ThreadPool, ExperimentError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| ExperimentError::Other(e.to_string()))
}

/// Runs every (arm, seed) pair and writes one CSV per run, one summary per
/// arm, and a comparison table when more than one arm is configured.
pub fn run_experiment(cfg: &ExperimentConfig, jobs: usize) -> Result<ExperimentReport, ExperimentError> {
    let world = World::build(cfg.world.spec())?;
    let dir = &cfg.output_dir;
    fs::create_dir_all(dir).map_err(io_err(dir))?;

    let work: Vec<(Arm, u64)> = cfg
        .arms
        .iter()
        .flat_map(|&a| cfg.seeds.iter().map(move |&s| (a, s)))
        .collect();
    let traces: Vec<RunTrace> = pool(jobs)?.install(|| {
        work.par_iter()
            .map(|&(arm, seed)| {
                let trace = run(&world, &cfg.train, arm, seed).map_err(|e| ExperimentError::Run {
                    arm,
                    seed,
                    message: e.to_string(),
                })?;
                let path = dir.join(trace_file_name(arm, seed));
                write_file(&path, trace.to_csv_string().as_bytes())?;
                Ok(trace)
            })
            .collect::<Result<Vec<_>, ExperimentError>>()
    })?;

    let mut files: Vec<PathBuf> = work.iter().map(|&(a, s)| dir.join(trace_file_name(a, s))).collect();
    let mut failures = Vec::new();

    // determinism: a second execution of the first job must reproduce its bytes
    let determinism_ok = match (work.first(), traces.first()) {
        (Some(&(arm, seed)), Some(first)) => {
            let again = run(&world, &cfg.train, arm, seed).map_err(|e| ExperimentError::Run {
                arm,
                seed,
                message: e.to_string(),
            })?;
            again.to_csv_string() == first.to_csv_string()
        }
        _ => true,
    };
    if !determinism_ok {
        failures.push(format!("determinism: rerun of {} differs", trace_file_name(work[0].0, work[0].1)));
    }

    let mut summaries = Vec::new();
    for &arm in &cfg.arms {
        let runs: Vec<RunSummary> = traces.iter().filter(|t| t.arm == arm).map(RunTrace::summary).collect();
        let mut arm_failures = Vec::new();
        for r in &runs {
            for c in r.invariants.iter().filter(|c| !c.passed) {
                arm_failures.push(Failure {
                    seed: r.seed,
                    invariant: c.name.clone(),
                    round: c.round,
                    detail: c.detail.clone(),
                });
            }
        }
        if !determinism_ok && arm == work[0].0 {
            arm_failures.push(Failure {
                seed: work[0].1,
                invariant: "determinism".into(),
                round: None,
                detail: "rerun produced a different trace".into(),
            });
        }
        for f in &arm_failures {
            if f.invariant != "determinism" {
                failures.push(format!(
                    "{arm} seed {}: {} failed at round {}: {}",
                    f.seed,
                    f.invariant,
                    f.round.map_or("-".into(), |r| r.to_string()),
                    f.detail
                ));
            }
        }
        let checkpoints = runs
            .first()
            .map(|r| r.checkpoints.clone())
            .unwrap_or_default()
            .into_iter()
            .enumerate()
            .map(|(i, round)| {
                let values: Vec<f64> = runs.iter().map(|r| r.checkpoint_regret[i]).collect();
                let (mean, std) = mean_std(&values);
                Checkpoint { round, mean, std }
            })
            .collect();
        let summary = ArmSummary {
            arm,
            config: cfg.clone(),
            seeds: cfg.seeds.clone(),
            checkpoints,
            invariants_ok: arm_failures.is_empty(),
            failures: arm_failures,
            runs,
        };
        let path = dir.join(summary_file_name(arm));
        let json = serde_json::to_string_pretty(&summary).map_err(|e| ExperimentError::Other(e.to_string()))?;
        write_file(&path, (json + "\n").as_bytes())?;
        files.push(path);
        summaries.push(summary);
    }

    if cfg.arms.len() > 1 {
        let path = dir.join(COMPARISON_FILE);
        write_file(&path, comparison_table(&summaries).as_bytes())?;
        files.push(path);
    }

    Ok(ExperimentReport {
        exit_code: if failures.is_empty() { EXIT_OK } else { EXIT_INVARIANT },
        files,
        failures,
        summaries,
    })
}

/// Per arm and checkpoint: mean and std of cumulative regret, and the
/// fraction of paired seeds on which DEPO's final regret is at most this arm's.
pub fn comparison_table(summaries: &[ArmSummary]) -> String {
    let depo = summaries.iter().find(|s| s.arm == Arm::Depo);
    let mut out = String::from("arm,round,mean_cum_regret,std_cum_regret,depo_at_most_fraction\n");
    for s in summaries {
        let fraction = depo.map(|d| {
            let pairs: Vec<(f64, f64)> = d
                .runs
                .iter()
                .filter_map(|dr| {
                    s.runs
                        .iter()
                        .find(|r| r.seed == dr.seed)
                        .map(|r| (dr.cumulative_regret, r.cumulative_regret))
                })
                .collect();
            let wins = pairs.iter().filter(|(a, b)| a <= b).count();
            wins as f64 / pairs.len().max(1) as f64
        });
        for c in &s.checkpoints {
            out.push_str(&format!(
                "{},{},{:.16e},{:.16e},{}\n",
                s.arm,
                c.round,
                c.mean,
                c.std,
                fraction.map_or(String::new(), |f| format!("{f:.16e}"))
            ));
        }
    }
    out
}

/// Writes the configured world as a versioned fixture file.
pub fn export_fixture(cfg: &ExperimentConfig, path: &Path) -> Result<(), ExperimentError> {
    let world = World::build(cfg.world.spec())?;
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    write_file(path, world.to_fixture_string().as_bytes())
}

pub fn import_fixture(path: &Path) -> Result<World, ExperimentError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    Ok(World::from_fixture_str(&text)?)
}

/// Runs the hard-invariant suite on a trace file.
pub fn verify_trace(cfg: &ExperimentConfig, path: &Path) -> Result<Vec<InvariantCheck>, ExperimentError> {
    let file = fs::File::open(path).map_err(io_err(path))?;
    let rounds = read_csv(file).map_err(|m| ExperimentError::Other(format!("{}: {m}", path.display())))?;
    Ok(verify_rounds(&rounds, 2 * cfg.world.d, cfg.train.lambda))
}

/// Runs the experiment once per combination of swept values, each into its
/// own subdirectory named `key=value,...`.
pub fn sweep(
    cfg: &ExperimentConfig,
    params: &[(String, Vec<String>)],
    jobs: usize,
) -> Result<Vec<(String, ExperimentReport)>, ExperimentError> {
    let mut combos: Vec<Vec<(String, String)>> = vec![Vec::new()];
    for (key, values) in params {
        combos = combos
            .into_iter()
            .flat_map(|c| {
                values.iter().map(move |v| {
                    let mut next = c.clone();
                    next.push((key.clone(), v.clone()));
                    next
                })
            })
            .collect();
    }
    let mut out = Vec::new();
    for combo in combos {
        let mut c = cfg.clone();
        for (k, v) in &combo {
            c.set_train_param(k, v).map_err(ExperimentError::Other)?;
        }
        let label = combo.iter().map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>().join(",");
        c.output_dir = cfg.output_dir.join(&label);
        let report = run_experiment(&c, jobs)?;
        out.push((label, report));
    }
    Ok(out)
}

/// Parses `key=v1,v2,...`.
pub fn parse_sweep_param(s: &str) -> Result<(String, Vec<String>), String> {
    let (key, values) = s.split_once('=').ok_or_else(|| format!("expected key=v1,v2,... in '{s}'"))?;
    let values: Vec<String> = values.split(',').map(|v| v.trim().to_string()).filter(|v| !v.is_empty()).collect();
    if key.trim().is_empty() || values.is_empty() {
        return Err(format!("expected key=v1,v2,... in '{s}'"));
    }
    Ok((key.trim().to_string(), values))
}
