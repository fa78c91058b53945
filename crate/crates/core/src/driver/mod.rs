//! The online loop: sampling, oracle queries, covariance and estimator
//! updates, policy optimization, and exact regret and diagnostic tracking.

mod run;
mod trace;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::estimator::{EstimatorError, DEFAULT_BUFFER_CAPACITY};
use crate::mathcore::{MathError, SymMatrix};
use crate::policy::{argmax_first, DeterministicPolicy, PolicyError, PolicyView, TrainConfig};
use crate::world::{World, WorldError};

pub use run::{run, run_baseline, run_depo};
pub use trace::{
    decomposition_report, potential_bound, read_csv, verify_rounds, write_csv, DecompositionReport,
    InvariantCheck, RoundRecord, RunSummary, RunTrace, CSV_COLUMNS, REFRESHED_REGRET_COLUMN,
};

/// Which learning rule drives the policy update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arm {
    /// Elliptical bonus inside the exploration term.
    Depo,
    /// `α = 0`: plain online DPO.
    Passive,
    /// Exploration term with `b ≡ 0`.
    UniformBonus,
}

impl Arm {
    pub fn name(self) -> &'static str {
        match self {
            Arm::Depo => "depo",
            Arm::Passive => "passive",
            Arm::UniformBonus => "uniform_bonus",
        }
    }
}

impl std::fmt::Display for Arm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Arm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "depo" => Ok(Arm::Depo),
            "passive" => Ok(Arm::Passive),
            "uniform_bonus" => Ok(Arm::UniformBonus),
            other => Err(format!("unknown arm '{other}' (depo|passive|uniform_bonus)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineMode {
    Passive,
    UniformBonus,
}

/// Width multiplying `√(ψᵀV⁻¹ψ)` in the policy's bonus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WidthMode {
    /// `γ_t = c_b/(r̄_t + ε)` from the radius buffer.
    Empirical,
    /// `β_t^conf` with `κ_t` from the planted parameter.
    TheoreticalTrue,
    /// `β_t^conf` with `κ̂_t` from the current estimate.
    TheoreticalPlugin,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriverConfig {
    /// Horizon `T`.
    pub rounds: usize,
    pub beta: f64,
    pub alpha: f64,
    pub lambda: f64,
    pub delta: f64,
    /// Sampler refresh interval `H`.
    pub refresh_interval: usize,
    pub c_b: f64,
    pub epsilon: f64,
    pub buffer_capacity: usize,
    pub gd_steps: usize,
    pub gd_lr: f64,
    pub width_mode: WidthMode,
    /// Use `V_{t−1}` instead of `V_t` for the empirical radius and the bonus.
    pub radius_uses_previous: bool,
    /// Size of the fixed probe set checked for coverage every round.
    pub probe_pairs: usize,
    /// Also report regret against the refreshed sampler.
    pub track_refreshed_regret: bool,
}

impl Default for DriverConfig {
    fn default() -> Self {
        let rounds = 2000;
        Self {
            rounds,
            beta: 0.03,
            alpha: sqrt_t_alpha(rounds),
            lambda: 1.0,
            delta: 0.1,
            refresh_interval: 50,
            c_b: 0.02,
            epsilon: 1e-3,
            buffer_capacity: DEFAULT_BUFFER_CAPACITY,
            gd_steps: 50,
            gd_lr: 0.5,
            width_mode: WidthMode::Empirical,
            radius_uses_previous: false,
            probe_pairs: 0,
            track_refreshed_regret: false,
        }
    }
}

/// `⌈√T⌉`.
pub fn sqrt_t_alpha(rounds: usize) -> f64 {
    (rounds as f64).sqrt().ceil()
}

impl DriverConfig {
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            beta: self.beta,
            alpha: self.alpha,
            refresh_interval: self.refresh_interval,
            gd_steps: self.gd_steps,
            gd_lr: self.gd_lr,
        }
    }

    /// Every violated constraint, not just the first.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        let mut positive = |name: &str, v: f64| {
            if !(v > 0.0 && v.is_finite()) {
                out.push(format!("{name} must be > 0 (got {v})"));
            }
        };
        positive("beta", self.beta);
        positive("lambda", self.lambda);
        positive("c_b", self.c_b);
        positive("epsilon", self.epsilon);
        positive("gd_lr", self.gd_lr);
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            out.push(format!("alpha must be >= 0 (got {})", self.alpha));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            out.push(format!("delta must lie in (0, 1) (got {})", self.delta));
        }
        if self.refresh_interval == 0 {
            out.push("H must be >= 1 (got 0)".into());
        }
        if self.buffer_capacity == 0 {
            out.push("buffer_capacity must be >= 1 (got 0)".into());
        }
        out
    }

    pub fn validate(&self) -> Result<(), DriverError> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(DriverError::Config(v.join("; ")))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StepError {
    #[error(transparent)]
    Math(#[from] MathError),
    #[error(transparent)]
    World(#[from] WorldError),
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DriverError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    World(#[from] WorldError),
    #[error("round {round}: {source}")]
    Round {
        round: usize,
        #[source]
        source: StepError,
    },
}

impl DriverError {
    pub(crate) fn at(round: usize, source: impl Into<StepError>) -> Self {
        DriverError::Round {
            round,
            source: source.into(),
        }
    }
}

/// The argmax-reward policy; ties go to the smallest response id.
pub fn comparator_policy(world: &World) -> DeterministicPolicy {
    let choices = (0..world.num_prompts())
        .map(|x| {
            let rewards: Vec<f64> = (0..world.pool_size())
                .map(|y| world.reward(x, y).expect("ids in range"))
                .collect();
            argmax_first(&rewards)
        })
        .collect();
    DeterministicPolicy::new(world.pool_size(), choices).expect("choices in range")
}

/// `P*(y ≻ y′ | x)` tabulated over all triples.
#[derive(Debug, Clone, PartialEq)]
pub struct PreferenceTable {
    num_prompts: usize,
    pool_size: usize,
    weights: Vec<f64>,
    probs: Vec<f64>,
}

impl PreferenceTable {
    pub fn new(world: &World) -> Result<Self, WorldError> {
        world.check_enumerable()?;
        let (m, k) = (world.num_prompts(), world.pool_size());
        let mut probs = Vec::with_capacity(m * k * k);
        for x in 0..m {
            for y in 0..k {
                for y2 in 0..k {
                    probs.push(world.oracle_prob_unchecked(x, y, y2));
                }
            }
        }
        Ok(Self {
            num_prompts: m,
            pool_size: k,
            weights: (0..m).map(|x| world.prompt_weight(x)).collect(),
            probs,
        })
    }

    fn check_shape(&self, p: &dyn PolicyView) -> Result<(), WorldError> {
        if p.num_prompts() != self.num_prompts || p.pool_size() != self.pool_size {
            return Err(WorldError::DimensionMismatch {
                expected: self.num_prompts * self.pool_size,
                got: p.num_prompts() * p.pool_size(),
            });
        }
        Ok(())
    }

    /// `E_{x∼ρ, y*∼π*, y∼π_t, y′∼π_sam}[P*(y* ≻ y′|x) − P*(y ≻ y′|x)]`.
    pub fn regret_increment(
        &self,
        comparator: &dyn PolicyView,
        policy: &dyn PolicyView,
        sampler: &dyn PolicyView,
    ) -> Result<f64, WorldError> {
        for p in [comparator, policy, sampler] {
            self.check_shape(p)?;
        }
        let k = self.pool_size;
        let mut total = 0.0;
        for x in 0..self.num_prompts {
            let (star, pi, sam) = (comparator.row(x), policy.row(x), sampler.row(x));
            let mut inner = 0.0;
            for y in 0..k {
                let diff = star[y] - pi[y];
                if diff == 0.0 {
                    continue;
                }
                let base = (x * k + y) * k;
                let vs_sampler: f64 = (0..k).map(|y2| sam[y2] * self.probs[base + y2]).sum();
                inner += diff * vs_sampler;
            }
            total += self.weights[x] * inner;
        }
        Ok(total)
    }
}

/// Exact one-round preference regret of `policy` against `comparator`, both
/// compared with responses from `sampler`.
pub fn regret_increment(
    world: &World,
    comparator: &dyn PolicyView,
    policy: &dyn PolicyView,
    sampler: &dyn PolicyView,
) -> Result<f64, WorldError> {
    PreferenceTable::new(world)?.regret_increment(comparator, policy, sampler)
}

/// `E_{x∼ρ, y∼π, y′∼π_sam}[ψψᵀ]` by enumeration.
pub fn second_moment(
    world: &World,
    policy: &dyn PolicyView,
    sampler: &dyn PolicyView,
) -> Result<SymMatrix<f64>, WorldError> {
    world.check_enumerable()?;
    let (m, k) = (world.num_prompts(), world.pool_size());
    for p in [policy, sampler] {
        if p.num_prompts() != m || p.pool_size() != k {
            return Err(WorldError::DimensionMismatch {
                expected: m * k,
                got: p.num_prompts() * p.pool_size(),
            });
        }
    }
    let mut acc = SymMatrix::zeros(world.pair_dim());
    for x in 0..m {
        let (pi, sam) = (policy.row(x), sampler.row(x));
        for y in 0..k {
            for y2 in 0..k {
                let w = world.prompt_weight(x) * pi[y] * sam[y2];
                if w > 0.0 {
                    acc.add_outer(world.pair_feature_unchecked(x, y, y2).psi().as_slice(), w);
                }
            }
        }
    }
    Ok(acc)
}

/// `λ_min(E[ψψᵀ])`, the diversity constant of the sampling policies.
pub fn diversity_gamma(
    world: &World,
    policy: &dyn PolicyView,
    sampler: &dyn PolicyView,
) -> Result<f64, WorldError> {
    let ev = second_moment(world, policy, sampler)?.eigenvalues()?;
    Ok(ev[0].max(0.0))
}

#[cfg(test)]
mod tests;
