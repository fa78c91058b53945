//! Synthetic linear Bradley–Terry environment.
//!
//! A world holds a finite prompt set, a pool of `K` responses per prompt with
//! feature vectors `φ(x, y) ∈ R^d`, the planted parameter `θ*₊`, and the
//! stochastic preference oracle `P(y ≻ y′ | x) = σ(r*(x, y) − r*(x, y′))`.
//! A world is immutable once built.

mod fixture;
mod projection;

use std::f64::consts::FRAC_1_SQRT_2;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mathcore::{sigmoid, MathError, Real, Vector};
use crate::rng::{stream_rng, Stream};

pub use fixture::{WORLD_FORMAT, WORLD_FORMAT_VERSION};
pub use projection::{sparse_project, ProjectionMatrix};

/// Largest `M·K²` for which quantities are computed by exhaustive enumeration.
pub const ENUMERATION_BUDGET: usize = 1_000_000;

/// Noise level of the clustered generator around its `±u` centres.
const CLUSTER_NOISE: f64 = 0.03;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum WorldError {
    #[error("invalid world: {0}")]
    Invalid(String),
    #[error("infeasible reward range: spread {spread} exceeds r_max {r_max}")]
    InfeasibleShift { spread: f64, r_max: f64 },
    #[error("invalid id: prompt {prompt}, response {response}")]
    InvalidId { prompt: usize, response: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("enumeration budget exceeded: M*K^2 = {cells} > {budget}")]
    EnumerationBudget { cells: usize, budget: usize },
    #[error("empty feature list")]
    Empty,
    #[error("world file format mismatch: expected {expected} v{expected_version}, found {found} v{found_version}")]
    VersionMismatch {
        expected: String,
        expected_version: u32,
        found: String,
        found_version: u32,
    },
    #[error("malformed world file: {0}")]
    Malformed(String),
    #[error(transparent)]
    Math(#[from] MathError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureGenerator {
    /// i.i.d. standard normal features: a diverse world.
    Gaussian,
    /// Features near `±u` for one fixed direction `u`: a low-diversity world.
    Clustered,
}

impl std::str::FromStr for FeatureGenerator {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "gaussian" => Ok(Self::Gaussian),
            "clustered" => Ok(Self::Clustered),
            other => Err(format!("unknown generator '{other}' (gaussian|clustered)")),
        }
    }
}

/// Everything needed to build a world deterministically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldSpec {
    pub num_prompts: usize,
    pub pool_size: usize,
    pub feature_dim: usize,
    /// First block of `θ* = [θ*₊ ; −θ*₊]`.
    pub theta_plus: Vec<f64>,
    /// Bound on `‖θ*‖₂`.
    pub s_bound: f64,
    pub r_max: f64,
    /// Prompt distribution `ρ`.
    pub prompt_weights: Vec<f64>,
    pub seed: u64,
    pub generator: FeatureGenerator,
    /// When set, features are drawn in this dimension and sparsely projected to `feature_dim`.
    pub hidden_dim: Option<usize>,
    /// Mean-center features within each prompt before normalization.
    pub center: bool,
}

impl WorldSpec {
    /// Uniform prompts, `θ*₊` drawn from `seed` with `‖θ*‖₂ = s_bound`, `r_max = s_bound`.
    pub fn random(
        num_prompts: usize,
        pool_size: usize,
        feature_dim: usize,
        s_bound: f64,
        generator: FeatureGenerator,
        seed: u64,
    ) -> Self {
        Self {
            num_prompts,
            pool_size,
            feature_dim,
            theta_plus: random_theta_plus(feature_dim, s_bound, seed),
            s_bound,
            r_max: s_bound,
            prompt_weights: vec![1.0 / num_prompts.max(1) as f64; num_prompts],
            seed,
            generator,
            hidden_dim: None,
            center: false,
        }
    }

    pub fn validate(&self) -> Result<(), WorldError> {
        let bad = |m: &str| Err(WorldError::Invalid(m.to_string()));
        if self.num_prompts == 0 {
            return bad("num_prompts must be positive");
        }
        if self.pool_size < 2 {
            return bad("pool_size must be at least 2");
        }
        if self.feature_dim == 0 {
            return bad("feature_dim must be positive");
        }
        if self.theta_plus.len() != self.feature_dim {
            return Err(WorldError::DimensionMismatch {
                expected: self.feature_dim,
                got: self.theta_plus.len(),
            });
        }
        if self.theta_plus.iter().any(|v| !v.is_finite()) {
            return bad("theta_plus must be finite");
        }
        if !(self.s_bound > 0.0) || !self.s_bound.is_finite() {
            return bad("s_bound must be positive");
        }
        if !(self.r_max > 0.0) || !self.r_max.is_finite() {
            return bad("r_max must be positive");
        }
        // ‖θ*‖₂ = √2 ‖θ*₊‖₂
        let theta_norm = (2.0 * self.theta_plus.iter().map(|v| v * v).sum::<f64>()).sqrt();
        if theta_norm > self.s_bound * (1.0 + 1e-12) {
            return Err(WorldError::Invalid(format!(
                "||theta*|| = {theta_norm} exceeds s_bound = {}",
                self.s_bound
            )));
        }
        if self.prompt_weights.len() != self.num_prompts {
            return Err(WorldError::DimensionMismatch {
                expected: self.num_prompts,
                got: self.prompt_weights.len(),
            });
        }
        if self.prompt_weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return bad("prompt_weights must be non-negative");
        }
        let total: f64 = self.prompt_weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(WorldError::Invalid(format!(
                "prompt_weights must sum to 1, got {total}"
            )));
        }
        if self.hidden_dim == Some(0) {
            return bad("hidden_dim must be positive");
        }
        Ok(())
    }

    /// `M·K²`, the number of ordered (prompt, response, response) triples.
    pub fn triple_count(&self) -> usize {
        self.num_prompts * self.pool_size * self.pool_size
    }
}

/// `θ*₊` with direction drawn from `seed` and `‖[θ*₊; −θ*₊]‖₂ = s_bound`.
pub fn random_theta_plus(dim: usize, s_bound: f64, seed: u64) -> Vec<f64> {
    let mut rng = stream_rng(seed, Stream::WorldParameter);
    loop {
        let raw: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
        let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 1e-12 {
            let scale = s_bound * FRAC_1_SQRT_2 / norm;
            return raw.into_iter().map(|v| v * scale).collect();
        }
    }
}

/// Feature of one (prompt, response) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct ResponseFeature {
    pub prompt_id: usize,
    pub response_id: usize,
    pub phi: Vector<f64>,
}

/// Pairwise feature `ψ(x, y, y′) = [φ(x, y) ; φ(x, y′)]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PairFeature<T> {
    psi: Vector<T>,
}

impl<T: Real> PairFeature<T> {
    pub fn new(first: &Vector<T>, second: &Vector<T>) -> Result<Self, MathError> {
        if first.dim() != second.dim() {
            return Err(MathError::DimensionMismatch {
                expected: first.dim(),
                got: second.dim(),
            });
        }
        Ok(Self {
            psi: Vector::concat(first, second),
        })
    }

    pub fn from_vector(psi: Vector<T>) -> Self {
        Self { psi }
    }

    pub fn psi(&self) -> &Vector<T> {
        &self.psi
    }

    pub fn dim(&self) -> usize {
        self.psi.dim()
    }

    /// Same pair with the two blocks exchanged.
    pub fn swapped(&self) -> Self {
        Self {
            psi: self.psi.swap_halves(),
        }
    }
}

/// Result of one oracle query on `(y, y′)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PreferenceOutcome {
    pub winner: usize,
    pub loser: usize,
    /// `+1` iff the first argument won.
    pub label: i8,
}

impl PreferenceOutcome {
    pub fn first_won(&self) -> bool {
        self.label > 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct World {
    spec: WorldSpec,
    /// Row-major over (prompt, response).
    features: Vec<Vector<f64>>,
    /// `⟨θ*₊, φ(x, y)⟩` before the shift.
    linear_rewards: Vec<f64>,
    reward_shift: f64,
    theta_star: Vector<f64>,
    cumulative_weights: Vec<f64>,
}

impl World {
    /// Draws features from the configured generator and instantiates rewards.
    pub fn build(spec: WorldSpec) -> Result<Self, WorldError> {
        spec.validate()?;
        let features = generate_features(&spec)?;
        Self::from_parts(spec, features)
    }

    /// Assembles a world from explicit features (already normalized).
    pub fn from_parts(spec: WorldSpec, features: Vec<Vector<f64>>) -> Result<Self, WorldError> {
        spec.validate()?;
        let (m, k, d) = (spec.num_prompts, spec.pool_size, spec.feature_dim);
        if features.len() != m * k {
            return Err(WorldError::DimensionMismatch {
                expected: m * k,
                got: features.len(),
            });
        }
        for phi in &features {
            if phi.dim() != d {
                return Err(WorldError::DimensionMismatch {
                    expected: d,
                    got: phi.dim(),
                });
            }
            if phi.norm() > FRAC_1_SQRT_2 * (1.0 + 1e-12) {
                return Err(WorldError::Invalid(format!(
                    "feature norm {} exceeds 1/sqrt(2)",
                    phi.norm()
                )));
            }
        }
        let theta_plus = Vector::new(spec.theta_plus.clone())?;
        let linear_rewards: Vec<f64> = features
            .iter()
            .map(|phi| crate::mathcore::dot(theta_plus.as_slice(), phi.as_slice()))
            .collect();
        let lo = linear_rewards.iter().copied().fold(f64::INFINITY, f64::min);
        let shift = -lo;
        let hi = linear_rewards
            .iter()
            .map(|r| r + shift)
            .fold(f64::NEG_INFINITY, f64::max);
        if hi > spec.r_max {
            return Err(WorldError::InfeasibleShift {
                spread: hi,
                r_max: spec.r_max,
            });
        }
        let theta_star = Vector::concat(&theta_plus, &theta_plus.scale(-1.0));
        let mut acc = 0.0;
        let cumulative_weights = spec
            .prompt_weights
            .iter()
            .map(|w| {
                acc += w;
                acc
            })
            .collect();
        Ok(Self {
            spec,
            features,
            linear_rewards,
            reward_shift: shift,
            theta_star,
            cumulative_weights,
        })
    }

    pub fn spec(&self) -> &WorldSpec {
        &self.spec
    }

    pub fn num_prompts(&self) -> usize {
        self.spec.num_prompts
    }

    pub fn pool_size(&self) -> usize {
        self.spec.pool_size
    }

    pub fn feature_dim(&self) -> usize {
        self.spec.feature_dim
    }

    /// Dimension of the pairwise feature, `2d`.
    pub fn pair_dim(&self) -> usize {
        2 * self.spec.feature_dim
    }

    pub fn prompt_weight(&self, x: usize) -> f64 {
        self.spec.prompt_weights[x]
    }

    pub fn theta_star(&self) -> &Vector<f64> {
        &self.theta_star
    }

    pub fn reward_shift(&self) -> f64 {
        self.reward_shift
    }

    pub fn check_ids(&self, x: usize, ys: &[usize]) -> Result<(), WorldError> {
        if x >= self.spec.num_prompts {
            return Err(WorldError::InvalidId {
                prompt: x,
                response: ys.first().copied().unwrap_or(0),
            });
        }
        if let Some(&y) = ys.iter().find(|&&y| y >= self.spec.pool_size) {
            return Err(WorldError::InvalidId {
                prompt: x,
                response: y,
            });
        }
        Ok(())
    }

    pub fn check_enumerable(&self) -> Result<(), WorldError> {
        let cells = self.spec.triple_count();
        if cells > ENUMERATION_BUDGET {
            return Err(WorldError::EnumerationBudget {
                cells,
                budget: ENUMERATION_BUDGET,
            });
        }
        Ok(())
    }

    #[inline]
    pub(crate) fn index(&self, x: usize, y: usize) -> usize {
        x * self.spec.pool_size + y
    }

    pub fn phi(&self, x: usize, y: usize) -> Result<&Vector<f64>, WorldError> {
        self.check_ids(x, &[y])?;
        Ok(&self.features[self.index(x, y)])
    }

    pub(crate) fn phi_unchecked(&self, x: usize, y: usize) -> &Vector<f64> {
        &self.features[self.index(x, y)]
    }

    pub fn response_features(&self, x: usize) -> Result<Vec<ResponseFeature>, WorldError> {
        self.check_ids(x, &[])?;
        Ok((0..self.spec.pool_size)
            .map(|y| ResponseFeature {
                prompt_id: x,
                response_id: y,
                phi: self.phi_unchecked(x, y).clone(),
            })
            .collect())
    }

    /// Shifted reward `r*(x, y) ∈ [0, r_max]`.
    pub fn reward(&self, x: usize, y: usize) -> Result<f64, WorldError> {
        self.check_ids(x, &[y])?;
        Ok(self.linear_rewards[self.index(x, y)] + self.reward_shift)
    }

    pub fn pair_feature(&self, x: usize, y: usize, y2: usize) -> Result<PairFeature<f64>, WorldError> {
        self.check_ids(x, &[y, y2])?;
        Ok(self.pair_feature_unchecked(x, y, y2))
    }

    pub(crate) fn pair_feature_unchecked(&self, x: usize, y: usize, y2: usize) -> PairFeature<f64> {
        PairFeature {
            psi: Vector::concat(self.phi_unchecked(x, y), self.phi_unchecked(x, y2)),
        }
    }

    /// `Δr*(x; y, y′) = r*(x, y) − r*(x, y′)`. Exactly antisymmetric.
    pub fn true_gap(&self, x: usize, y: usize, y2: usize) -> Result<f64, WorldError> {
        self.check_ids(x, &[y, y2])?;
        Ok(self.gap_unchecked(x, y, y2))
    }

    #[inline]
    pub(crate) fn gap_unchecked(&self, x: usize, y: usize, y2: usize) -> f64 {
        self.linear_rewards[self.index(x, y)] - self.linear_rewards[self.index(x, y2)]
    }

    /// `⟨θ*, ψ(x, y, y′)⟩` evaluated in the pairwise space.
    pub fn gap_via_features(&self, x: usize, y: usize, y2: usize) -> Result<f64, WorldError> {
        let psi = self.pair_feature(x, y, y2)?;
        Ok(self.theta_star.dot(psi.psi())?)
    }

    /// `P*(y ≻ y′ | x) = σ(Δr*(x; y, y′))`.
    pub fn oracle_prob(&self, x: usize, y: usize, y2: usize) -> Result<f64, WorldError> {
        Ok(sigmoid(self.true_gap(x, y, y2)?))
    }

    #[inline]
    pub(crate) fn oracle_prob_unchecked(&self, x: usize, y: usize, y2: usize) -> f64 {
        sigmoid(self.gap_unchecked(x, y, y2))
    }

    /// Queries the stochastic oracle on `(y, y′)`. Self-comparisons are a fair coin.
    pub fn sample_preference<R: Rng + ?Sized>(
        &self,
        x: usize,
        y: usize,
        y2: usize,
        rng: &mut R,
    ) -> Result<PreferenceOutcome, WorldError> {
        let p = self.oracle_prob(x, y, y2)?;
        let u: f64 = rng.random();
        Ok(if u < p {
            PreferenceOutcome {
                winner: y,
                loser: y2,
                label: 1,
            }
        } else {
            PreferenceOutcome {
                winner: y2,
                loser: y,
                label: -1,
            }
        })
    }

    /// Draws a prompt from `ρ`.
    pub fn sample_prompt<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        let total = *self.cumulative_weights.last().expect("at least one prompt");
        let target = u * total;
        self.cumulative_weights
            .iter()
            .position(|&c| target < c)
            .unwrap_or(self.spec.num_prompts - 1)
    }
}

/// Subtracts the per-prompt mean; the outputs sum to zero.
pub fn center_per_prompt(features: &[ResponseFeature]) -> Result<Vec<ResponseFeature>, WorldError> {
    let first = features.first().ok_or(WorldError::Empty)?;
    let d = first.phi.dim();
    if let Some(other) = features.iter().find(|f| f.prompt_id != first.prompt_id) {
        return Err(WorldError::Invalid(format!(
            "features from prompts {} and {} cannot be centered together",
            first.prompt_id, other.prompt_id
        )));
    }
    if let Some(f) = features.iter().find(|f| f.phi.dim() != d) {
        return Err(WorldError::DimensionMismatch {
            expected: d,
            got: f.phi.dim(),
        });
    }
    let n = features.len() as f64;
    let mean: Vec<f64> = (0..d)
        .map(|i| features.iter().map(|f| f.phi[i]).sum::<f64>() / n)
        .collect();
    features
        .iter()
        .map(|f| {
            let centered = f.phi.as_slice().iter().zip(&mean).map(|(a, m)| a - m).collect();
            Ok(ResponseFeature {
                prompt_id: f.prompt_id,
                response_id: f.response_id,
                phi: Vector::new(centered)?,
            })
        })
        .collect()
}

fn generate_features(spec: &WorldSpec) -> Result<Vec<Vector<f64>>, WorldError> {
    let (m, k, d) = (spec.num_prompts, spec.pool_size, spec.feature_dim);
    let raw_dim = spec.hidden_dim.unwrap_or(d);
    let mut rng = stream_rng(spec.seed, Stream::WorldFeatures);
    let gauss = |rng: &mut rand_chacha::ChaCha8Rng| -> f64 { StandardNormal.sample(rng) };

    let axis: Vec<f64> = {
        let raw: Vec<f64> = (0..raw_dim).map(|_| gauss(&mut rng)).collect();
        let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-300);
        raw.into_iter().map(|v| v / norm).collect()
    };

    let mut raw: Vec<Vector<f64>> = Vec::with_capacity(m * k);
    for _ in 0..m * k {
        let v: Vec<f64> = match spec.generator {
            FeatureGenerator::Gaussian => (0..raw_dim).map(|_| gauss(&mut rng)).collect(),
            FeatureGenerator::Clustered => {
                let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
                axis.iter()
                    .map(|a| sign * a + CLUSTER_NOISE * gauss(&mut rng))
                    .collect()
            }
        };
        raw.push(Vector::new(v)?);
    }

    let mut features = match spec.hidden_dim {
        Some(hidden) => {
            let proj = ProjectionMatrix::new(d, hidden, spec.seed)?;
            raw.iter().map(|v| proj.project(v)).collect::<Result<Vec<_>, _>>()?
        }
        None => raw,
    };

    if spec.center {
        let mut centered = Vec::with_capacity(m * k);
        for x in 0..m {
            let block: Vec<ResponseFeature> = (0..k)
                .map(|y| ResponseFeature {
                    prompt_id: x,
                    response_id: y,
                    phi: features[x * k + y].clone(),
                })
                .collect();
            centered.extend(center_per_prompt(&block)?.into_iter().map(|f| f.phi));
        }
        features = centered;
    }

    let max_norm = features.iter().map(Vector::norm).fold(0.0, f64::max);
    if max_norm > 0.0 {
        let scale = FRAC_1_SQRT_2 / max_norm * (1.0 - 4.0 * f64::EPSILON);
        features = features.iter().map(|v| v.scale(scale)).collect();
    }
    Ok(features)
}
