use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::{Arm, DriverConfig};
use crate::estimator::RewardEstimate;
use crate::policy::SoftmaxPolicy;

/// Column order of the per-round CSV.
pub const CSV_COLUMNS: [&str; 17] = [
    "t",
    "prompt_id",
    "y",
    "yprime",
    "winner",
    "regret_inc",
    "cum_regret",
    "bonus",
    "r_bar",
    "width_gamma",
    "beta_conf_true",
    "kappa_true",
    "B_t",
    "lambda_min",
    "quad_form",
    "coverage_ok",
    "objective",
];

/// Extra trailing column written when regret against the refreshed sampler is tracked.
pub const REFRESHED_REGRET_COLUMN: &str = "regret_inc_refreshed";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub t: usize,
    pub prompt_id: usize,
    pub y: usize,
    pub yprime: usize,
    pub winner: usize,
    /// Exact regret of `π_t` against the initial sampler.
    pub regret_inc: f64,
    pub cum_regret: f64,
    /// `b_t(x_t, y_t, y′_t)` as used in the policy update.
    pub bonus: f64,
    pub r_bar: f64,
    pub width_gamma: f64,
    pub beta_conf_true: f64,
    pub kappa_true: f64,
    pub b_t: f64,
    /// `λ_min(V_t)`.
    pub lambda_min: f64,
    /// `ψ_tᵀ V_{t−1}⁻¹ ψ_t`, the elliptical-potential increment.
    pub quad_form: f64,
    /// `|Δr* − Δr̂_t| ≤ β_t^conf·‖ψ‖_{V_t⁻¹}` on the played pair and every probe.
    pub coverage_ok: bool,
    /// Pruned objective at `π_{t+1}`.
    pub objective: f64,
    pub regret_inc_refreshed: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunTrace {
    pub arm: Arm,
    pub seed: u64,
    pub config: DriverConfig,
    pub pair_dim: usize,
    pub rounds: Vec<RoundRecord>,
    pub cumulative_regret: f64,
    pub cumulative_regret_refreshed: Option<f64>,
    pub potential_sum: f64,
    pub potential_bound: f64,
    pub coverage_failures: usize,
    pub first_coverage_failure: Option<usize>,
    /// Rounds where Newton hit its iteration cap.
    pub newton_unconverged: usize,
    /// Rounds where backtracking found no non-decreasing step.
    pub optimizer_stalls: usize,
    /// Covariance updates with `‖ψ‖ > 1`.
    pub norm_warnings: u64,
    pub final_policy: SoftmaxPolicy,
    pub final_estimate: Option<RewardEstimate<f64>>,
}

/// `2D·log(1 + T/(λD))`.
pub fn potential_bound(dim: usize, rounds: usize, lambda: f64) -> f64 {
    let d = dim as f64;
    2.0 * d * (1.0 + rounds as f64 / (lambda * d)).ln()
}

fn float(v: f64) -> String {
    format!("{v:.16e}")
}

/// Writes the trace as CSV with a header row and LF line endings.
pub fn write_csv<W: Write>(trace: &RunTrace, out: W) -> Result<(), csv::Error> {
    let with_refreshed = trace.config.track_refreshed_regret;
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    let mut header: Vec<&str> = CSV_COLUMNS.to_vec();
    if with_refreshed {
        header.push(REFRESHED_REGRET_COLUMN);
    }
    w.write_record(&header)?;
    for r in &trace.rounds {
        let mut row = vec![
            r.t.to_string(),
            r.prompt_id.to_string(),
            r.y.to_string(),
            r.yprime.to_string(),
            r.winner.to_string(),
            float(r.regret_inc),
            float(r.cum_regret),
            float(r.bonus),
            float(r.r_bar),
            float(r.width_gamma),
            float(r.beta_conf_true),
            float(r.kappa_true),
            float(r.b_t),
            float(r.lambda_min),
            float(r.quad_form),
            r.coverage_ok.to_string(),
            float(r.objective),
        ];
        if with_refreshed {
            row.push(float(r.regret_inc_refreshed.unwrap_or(f64::NAN)));
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

impl RunTrace {
    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        write_csv(self, &mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv is ascii")
    }

    pub fn summary(&self) -> RunSummary {
        let n = self.rounds.len();
        let at = |t: usize| {
            if t == 0 {
                0.0
            } else {
                self.rounds[t - 1].cum_regret
            }
        };
        let checkpoints = [n / 4, n / 2, n];
        RunSummary {
            arm: self.arm,
            seed: self.seed,
            rounds: n,
            cumulative_regret: self.cumulative_regret,
            checkpoints: checkpoints.to_vec(),
            checkpoint_regret: checkpoints.iter().map(|&t| at(t)).collect(),
            cumulative_regret_refreshed: self.cumulative_regret_refreshed,
            potential_sum: self.potential_sum,
            potential_bound: self.potential_bound,
            coverage_failures: self.coverage_failures,
            first_coverage_failure: self.first_coverage_failure,
            lambda_min_final: self.rounds.last().map_or(self.config.lambda, |r| r.lambda_min),
            kappa_true_final: self.rounds.last().map_or(0.25, |r| r.kappa_true),
            b_t_final: self.rounds.last().map_or(0.0, |r| r.b_t),
            newton_unconverged: self.newton_unconverged,
            optimizer_stalls: self.optimizer_stalls,
            norm_warnings: self.norm_warnings,
            invariants: verify_rounds(&self.rounds, self.pair_dim, self.config.lambda),
            decomposition: decomposition_report(self, self.config.alpha),
        }
    }
}

/// Parses a CSV produced by [`write_csv`].
pub fn read_csv<R: Read>(input: R) -> Result<Vec<RoundRecord>, String> {
    let mut rdr = csv::ReaderBuilder::new().from_reader(input);
    let header = rdr.headers().map_err(|e| e.to_string())?.clone();
    let names: Vec<&str> = header.iter().collect();
    let with_refreshed = match names.len() {
        17 => false,
        18 if names[17] == REFRESHED_REGRET_COLUMN => true,
        _ => return Err(format!("unexpected header: {}", names.join(","))),
    };
    if names[..17] != CSV_COLUMNS {
        return Err(format!("unexpected header: {}", names.join(",")));
    }
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| e.to_string())?;
        let line = i + 2;
        let int = |j: usize| -> Result<usize, String> {
            rec[j]
                .parse()
                .map_err(|_| format!("line {line}: column {} is not an integer", CSV_COLUMNS[j]))
        };
        let real = |j: usize| -> Result<f64, String> {
            rec[j]
                .parse()
                .map_err(|_| format!("line {line}: column {} is not a number", CSV_COLUMNS.get(j).unwrap_or(&REFRESHED_REGRET_COLUMN)))
        };
        let coverage_ok = match &rec[15] {
            "true" => true,
            "false" => false,
            other => return Err(format!("line {line}: coverage_ok must be true or false, got {other}")),
        };
        out.push(RoundRecord {
            t: int(0)?,
            prompt_id: int(1)?,
            y: int(2)?,
            yprime: int(3)?,
            winner: int(4)?,
            regret_inc: real(5)?,
            cum_regret: real(6)?,
            bonus: real(7)?,
            r_bar: real(8)?,
            width_gamma: real(9)?,
            beta_conf_true: real(10)?,
            kappa_true: real(11)?,
            b_t: real(12)?,
            lambda_min: real(13)?,
            quad_form: real(14)?,
            coverage_ok,
            objective: real(16)?,
            regret_inc_refreshed: if with_refreshed { Some(real(17)?) } else { None },
        });
    }
    Ok(out)
}

/// Outcome of one hard invariant on a trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvariantCheck {
    pub name: String,
    pub passed: bool,
    /// First offending round.
    pub round: Option<usize>,
    pub detail: String,
}

impl InvariantCheck {
    fn new(name: &str, first_bad: Option<(usize, String)>) -> Self {
        match first_bad {
            None => Self {
                name: name.into(),
                passed: true,
                round: None,
                detail: String::new(),
            },
            Some((round, detail)) => Self {
                name: name.into(),
                passed: false,
                round: Some(round),
                detail,
            },
        }
    }
}

/// Hard invariants that every trace must satisfy.
pub fn verify_rounds(rounds: &[RoundRecord], pair_dim: usize, lambda: f64) -> Vec<InvariantCheck> {
    let mut checks = Vec::new();

    checks.push(InvariantCheck::new(
        "round_numbering",
        rounds
            .iter()
            .enumerate()
            .find(|(i, r)| r.t != i + 1)
            .map(|(i, r)| (i + 1, format!("row {} has t = {}", i + 1, r.t))),
    ));

    checks.push(InvariantCheck::new(
        "regret_bounds",
        rounds
            .iter()
            .find(|r| !(r.regret_inc >= -1.0 && r.regret_inc <= 1.0))
            .map(|r| (r.t, format!("regret_inc = {}", r.regret_inc))),
    ));

    let mut prefix = 0.0;
    let mut bad = None;
    for r in rounds {
        prefix += r.regret_inc;
        if bad.is_none() && !((r.cum_regret - prefix).abs() <= 1e-9) {
            bad = Some((r.t, format!("cum_regret {} vs prefix sum {}", r.cum_regret, prefix)));
        }
    }
    checks.push(InvariantCheck::new("cumulative_regret_prefix", bad));

    checks.push(InvariantCheck::new(
        "quad_form_nonnegative",
        rounds
            .iter()
            .find(|r| !(r.quad_form >= 0.0))
            .map(|r| (r.t, format!("quad_form = {}", r.quad_form))),
    ));

    let mut potential = 0.0;
    let mut bad = None;
    for r in rounds {
        potential += r.quad_form;
        let bound = potential_bound(pair_dim, r.t, lambda);
        if bad.is_none() && potential > bound {
            bad = Some((r.t, format!("potential {potential} exceeds bound {bound}")));
        }
    }
    checks.push(InvariantCheck::new("elliptical_potential", bad));

    checks.push(InvariantCheck::new(
        "logit_bound_monotone",
        rounds
            .windows(2)
            .find(|w| w[1].b_t < w[0].b_t)
            .map(|w| (w[1].t, format!("B_t fell from {} to {}", w[0].b_t, w[1].b_t))),
    ));
    checks.push(InvariantCheck::new(
        "kappa_monotone",
        rounds
            .windows(2)
            .find(|w| w[1].kappa_true > w[0].kappa_true)
            .map(|w| (w[1].t, format!("kappa rose from {} to {}", w[0].kappa_true, w[1].kappa_true))),
    ));
    checks
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub arm: Arm,
    pub seed: u64,
    pub rounds: usize,
    pub cumulative_regret: f64,
    /// Rounds `T/4, T/2, T`.
    pub checkpoints: Vec<usize>,
    pub checkpoint_regret: Vec<f64>,
    pub cumulative_regret_refreshed: Option<f64>,
    pub potential_sum: f64,
    pub potential_bound: f64,
    pub coverage_failures: usize,
    pub first_coverage_failure: Option<usize>,
    pub lambda_min_final: f64,
    pub kappa_true_final: f64,
    pub b_t_final: f64,
    pub newton_unconverged: usize,
    pub optimizer_stalls: usize,
    pub norm_warnings: u64,
    pub invariants: Vec<InvariantCheck>,
    pub decomposition: DecompositionReport,
}

impl RunSummary {
    pub fn invariants_hold(&self) -> bool {
        self.invariants.iter().all(|c| c.passed)
    }
}

/// Empirical terms of the regret decomposition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecompositionReport {
    pub rounds: usize,
    pub alpha: f64,
    pub cumulative_regret: f64,
    /// `¼ Σ_t b_t`.
    pub bonus_term: f64,
    /// `cumulative_regret / bonus_term`; absent when the bonus term is zero.
    pub ratio: Option<f64>,
    /// `T/α`, the scale of the exploitation term; absent when `α = 0`.
    pub exploitation_scale: Option<f64>,
    pub potential_sum: f64,
    pub potential_bound: f64,
    /// First round whose prefix potential exceeds its bound.
    pub potential_violation: Option<usize>,
}

pub fn decomposition_report(trace: &RunTrace, alpha: f64) -> DecompositionReport {
    let rounds = trace.rounds.len();
    let bonus_term = 0.25 * trace.rounds.iter().map(|r| r.bonus).sum::<f64>();
    let cumulative_regret = trace.rounds.last().map_or(0.0, |r| r.cum_regret);
    let potential_sum = trace.rounds.iter().map(|r| r.quad_form).sum();
    let potential_violation = verify_rounds(&trace.rounds, trace.pair_dim, trace.config.lambda)
        .into_iter()
        .find(|c| c.name == "elliptical_potential")
        .and_then(|c| c.round);
    DecompositionReport {
        rounds,
        alpha,
        cumulative_regret,
        bonus_term,
        ratio: (bonus_term > 0.0).then(|| cumulative_regret / bonus_term),
        exploitation_scale: (alpha > 0.0).then(|| rounds as f64 / alpha),
        potential_sum,
        potential_bound: potential_bound(trace.pair_dim, rounds, trace.config.lambda),
        potential_violation,
    }
}
