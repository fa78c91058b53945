//! Tabular softmax policies over the finite response pools, the DPO loss, the
//! DEPO exploration term in exact and pruned form, gradient-ascent updates,
//! and the blocked sampler refresh.

mod objective;
mod optimize;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::estimator::PreferenceRecord;
use crate::mathcore::{log_sigmoid, MathError};
use crate::world::WorldError;

pub use objective::{
    depo_exact_bonus, depo_pruned_objective, sampled_bonus, PolicyObjective, PrunedObjective,
    SampledBonus,
};
pub use optimize::{optimize_policy, refresh_sampler, OptimizeOutcome};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PolicyError {
    #[error("invalid id: prompt {prompt}, response {response}")]
    InvalidId { prompt: usize, response: usize },
    #[error("invalid policy: {0}")]
    Invalid(String),
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("non-finite gradient at step {step}")]
    NonFiniteGradient { step: usize },
    #[error(transparent)]
    World(#[from] WorldError),
    #[error(transparent)]
    Math(#[from] MathError),
}

/// Read access to per-prompt response distributions.
pub trait PolicyView {
    fn num_prompts(&self) -> usize;
    fn pool_size(&self) -> usize;
    /// `π(·|x)` as a dense row.
    fn row(&self, x: usize) -> Vec<f64>;
}

/// `π(y_k | x_m) = softmax_k(logits[m, ·])`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoftmaxPolicy {
    num_prompts: usize,
    pool_size: usize,
    logits: Vec<f64>,
}

impl SoftmaxPolicy {
    pub fn uniform(num_prompts: usize, pool_size: usize) -> Self {
        Self {
            num_prompts,
            pool_size,
            logits: vec![0.0; num_prompts * pool_size],
        }
    }

    /// Row-major `M×K` logits.
    pub fn from_logits(num_prompts: usize, pool_size: usize, logits: Vec<f64>) -> Result<Self, PolicyError> {
        if num_prompts == 0 || pool_size == 0 {
            return Err(PolicyError::Invalid("empty policy table".into()));
        }
        if logits.len() != num_prompts * pool_size {
            return Err(PolicyError::Invalid(format!(
                "expected {} logits, got {}",
                num_prompts * pool_size,
                logits.len()
            )));
        }
        if logits.iter().any(|v| !v.is_finite()) {
            return Err(PolicyError::Invalid("non-finite logit".into()));
        }
        Ok(Self {
            num_prompts,
            pool_size,
            logits,
        })
    }

    pub fn logits(&self) -> &[f64] {
        &self.logits
    }

    pub fn logits_row(&self, x: usize) -> &[f64] {
        &self.logits[x * self.pool_size..(x + 1) * self.pool_size]
    }

    pub(crate) fn logits_mut(&mut self) -> &mut [f64] {
        &mut self.logits
    }

    pub fn check_ids(&self, x: usize, ys: &[usize]) -> Result<(), PolicyError> {
        if x >= self.num_prompts {
            return Err(PolicyError::InvalidId {
                prompt: x,
                response: ys.first().copied().unwrap_or(0),
            });
        }
        if let Some(&bad) = ys.iter().find(|&&y| y >= self.pool_size) {
            return Err(PolicyError::InvalidId {
                prompt: x,
                response: bad,
            });
        }
        Ok(())
    }

    fn same_shape(&self, other: &Self) -> Result<(), PolicyError> {
        if self.num_prompts != other.num_prompts || self.pool_size != other.pool_size {
            return Err(PolicyError::Invalid(format!(
                "shape {}x{} does not match {}x{}",
                self.num_prompts, self.pool_size, other.num_prompts, other.pool_size
            )));
        }
        Ok(())
    }

    /// `log Σ_k exp(logits[x, k])`.
    pub fn log_partition(&self, x: usize) -> f64 {
        let row = self.logits_row(x);
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
    }

    pub fn log_probs(&self, x: usize) -> Vec<f64> {
        let z = self.log_partition(x);
        self.logits_row(x).iter().map(|v| v - z).collect()
    }

    pub fn log_prob(&self, x: usize, y: usize) -> Result<f64, PolicyError> {
        self.check_ids(x, &[y])?;
        Ok(self.logits[x * self.pool_size + y] - self.log_partition(x))
    }

    pub fn probs(&self, x: usize) -> Vec<f64> {
        self.log_probs(x).into_iter().map(f64::exp).collect()
    }

    /// Inverse-CDF draw; consumes exactly one uniform.
    pub fn sample<R: Rng + ?Sized>(&self, x: usize, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (k, p) in self.probs(x).into_iter().enumerate() {
            acc += p;
            if u < acc {
                return k;
            }
        }
        self.pool_size - 1
    }

    /// Subtracts each row's maximum. Leaves every probability unchanged.
    pub fn recenter(&mut self) {
        let k = self.pool_size;
        for row in self.logits.chunks_exact_mut(k) {
            let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            row.iter_mut().for_each(|v| *v -= m);
        }
    }

    /// Index of the most probable response in each row; ties go to the smallest id.
    pub fn modes(&self) -> Vec<usize> {
        (0..self.num_prompts)
            .map(|x| argmax_first(self.logits_row(x)))
            .collect()
    }
}

impl PolicyView for SoftmaxPolicy {
    fn num_prompts(&self) -> usize {
        self.num_prompts
    }

    fn pool_size(&self) -> usize {
        self.pool_size
    }

    fn row(&self, x: usize) -> Vec<f64> {
        self.probs(x)
    }
}

/// A policy putting mass one on a single response per prompt.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeterministicPolicy {
    pool_size: usize,
    choices: Vec<usize>,
}

impl DeterministicPolicy {
    pub fn new(pool_size: usize, choices: Vec<usize>) -> Result<Self, PolicyError> {
        if let Some((x, &y)) = choices.iter().enumerate().find(|(_, &y)| y >= pool_size) {
            return Err(PolicyError::InvalidId { prompt: x, response: y });
        }
        Ok(Self { pool_size, choices })
    }

    pub fn choice(&self, x: usize) -> usize {
        self.choices[x]
    }

    pub fn choices(&self) -> &[usize] {
        &self.choices
    }
}

impl PolicyView for DeterministicPolicy {
    fn num_prompts(&self) -> usize {
        self.choices.len()
    }

    fn pool_size(&self) -> usize {
        self.pool_size
    }

    fn row(&self, x: usize) -> Vec<f64> {
        let mut row = vec![0.0; self.pool_size];
        row[self.choices[x]] = 1.0;
        row
    }
}

pub(crate) fn argmax_first(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Current, reference, and sampler policies of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyTriple {
    pub current: SoftmaxPolicy,
    reference: SoftmaxPolicy,
    pub sampler: SoftmaxPolicy,
}

impl PolicyTriple {
    /// `π_1 = π_sam = π_ref`.
    pub fn from_reference(reference: SoftmaxPolicy) -> Self {
        Self {
            current: reference.clone(),
            sampler: reference.clone(),
            reference,
        }
    }

    pub fn reference(&self) -> &SoftmaxPolicy {
        &self.reference
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// KL coefficient `β`.
    pub beta: f64,
    /// Exploration weight `α`.
    pub alpha: f64,
    /// Sampler refresh interval `H`.
    pub refresh_interval: usize,
    pub gd_steps: usize,
    pub gd_lr: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            beta: 0.03,
            alpha: 0.0,
            refresh_interval: 50,
            gd_steps: 50,
            gd_lr: 0.5,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), PolicyError> {
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(PolicyError::Config(format!("beta must be > 0, got {}", self.beta)));
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(PolicyError::Config(format!("alpha must be >= 0, got {}", self.alpha)));
        }
        if self.refresh_interval == 0 {
            return Err(PolicyError::Config("refresh interval H must be >= 1".into()));
        }
        if !(self.gd_lr > 0.0 && self.gd_lr.is_finite()) {
            return Err(PolicyError::Config(format!("gd_lr must be > 0, got {}", self.gd_lr)));
        }
        Ok(())
    }
}

/// `m_π(x; y, y′) = log π(y|x)/π_ref(y|x) − log π(y′|x)/π_ref(y′|x)`.
///
/// The log-partitions cancel, so this reads logits directly.
pub fn margin(
    policy: &SoftmaxPolicy,
    reference: &SoftmaxPolicy,
    x: usize,
    y: usize,
    y2: usize,
) -> Result<f64, PolicyError> {
    policy.same_shape(reference)?;
    policy.check_ids(x, &[y, y2])?;
    Ok(margin_unchecked(policy, reference, x, y, y2))
}

#[inline]
pub(crate) fn margin_unchecked(
    policy: &SoftmaxPolicy,
    reference: &SoftmaxPolicy,
    x: usize,
    y: usize,
    y2: usize,
) -> f64 {
    let k = policy.pool_size;
    let (p, r) = (&policy.logits, &reference.logits);
    (p[x * k + y] - r[x * k + y]) - (p[x * k + y2] - r[x * k + y2])
}

/// `Σ log σ(β·m_π(x; y^w, y^l))` over the records (higher is better).
pub fn dpo_loss(
    policy: &SoftmaxPolicy,
    reference: &SoftmaxPolicy,
    records: &[PreferenceRecord<f64>],
    beta: f64,
) -> Result<f64, PolicyError> {
    policy.same_shape(reference)?;
    let mut total = 0.0;
    for r in records {
        policy.check_ids(r.prompt_id, &[r.winner_id, r.loser_id])?;
        total += log_sigmoid(beta * margin_unchecked(policy, reference, r.prompt_id, r.winner_id, r.loser_id));
    }
    Ok(total)
}
