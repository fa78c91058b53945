use std::collections::BTreeMap;

use rand::Rng;

use super::{margin_unchecked, PolicyError, SoftmaxPolicy};
use crate::estimator::PreferenceRecord;
use crate::mathcore::{log_sigmoid, sigmoid, sigmoid_prime, CovarianceState};
use crate::world::World;

/// A smooth objective over the policy logits, to be maximized.
pub trait PolicyObjective {
    fn value(&self, policy: &SoftmaxPolicy) -> f64;
    /// Value and gradient with respect to the row-major logits.
    fn value_and_gradient(&self, policy: &SoftmaxPolicy) -> (f64, Vec<f64>);
}

/// The pruned DEPO objective
/// `Σ_s log σ(β m_π(x_s; y_s^w, y_s^l)) + α Σ_s σ(β log(π(y′_s|x_s)/π_ref(y′_s|x_s)) + b_s)`
/// with repeated terms collapsed into weighted cells.
#[derive(Debug, Clone, PartialEq)]
pub struct PrunedObjective {
    reference: SoftmaxPolicy,
    ref_log_probs: Vec<f64>,
    beta: f64,
    alpha: f64,
    /// `(x, winner, loser, count)`.
    preferences: Vec<(usize, usize, usize, f64)>,
    /// `(x, y′, bonus, count)`.
    sampled: Vec<(usize, usize, f64, f64)>,
}

impl PrunedObjective {
    pub fn new(reference: SoftmaxPolicy, beta: f64, alpha: f64) -> Self {
        let ref_log_probs = (0..reference.num_prompts)
            .flat_map(|x| reference.log_probs(x))
            .collect();
        Self {
            reference,
            ref_log_probs,
            beta,
            alpha,
            preferences: Vec::new(),
            sampled: Vec::new(),
        }
    }

    /// Aggregates records and sampled pairs; `bonus(x, y, y′)` gives `b_t`.
    pub fn from_data(
        reference: SoftmaxPolicy,
        records: &[PreferenceRecord<f64>],
        sampled_pairs: &[(usize, usize, usize)],
        bonus: impl Fn(usize, usize, usize) -> f64,
        alpha: f64,
        beta: f64,
    ) -> Result<Self, PolicyError> {
        let mut obj = Self::new(reference, beta, alpha);
        let mut prefs: BTreeMap<(usize, usize, usize), f64> = BTreeMap::new();
        for r in records {
            obj.reference.check_ids(r.prompt_id, &[r.winner_id, r.loser_id])?;
            *prefs.entry((r.prompt_id, r.winner_id, r.loser_id)).or_default() += 1.0;
        }
        for ((x, w, l), c) in prefs {
            obj.add_preference(x, w, l, c);
        }
        if alpha != 0.0 {
            let mut pairs: BTreeMap<(usize, usize, usize), f64> = BTreeMap::new();
            for &(x, y, y2) in sampled_pairs {
                obj.reference.check_ids(x, &[y, y2])?;
                *pairs.entry((x, y, y2)).or_default() += 1.0;
            }
            for ((x, y, y2), c) in pairs {
                obj.add_sampled(x, y2, bonus(x, y, y2), c);
            }
        }
        Ok(obj)
    }

    pub fn add_preference(&mut self, x: usize, winner: usize, loser: usize, count: f64) {
        self.preferences.push((x, winner, loser, count));
    }

    pub fn add_sampled(&mut self, x: usize, y2: usize, bonus: f64, count: f64) {
        self.sampled.push((x, y2, bonus, count));
    }

    pub fn reference(&self) -> &SoftmaxPolicy {
        &self.reference
    }

    fn log_probs(policy: &SoftmaxPolicy) -> Vec<f64> {
        (0..policy.num_prompts).flat_map(|x| policy.log_probs(x)).collect()
    }
}

impl PolicyObjective for PrunedObjective {
    fn value(&self, policy: &SoftmaxPolicy) -> f64 {
        let k = policy.pool_size;
        let mut total = 0.0;
        for &(x, w, l, c) in &self.preferences {
            total += c * log_sigmoid(self.beta * margin_unchecked(policy, &self.reference, x, w, l));
        }
        if self.alpha != 0.0 && !self.sampled.is_empty() {
            let lp = Self::log_probs(policy);
            let mut bonus_sum = 0.0;
            for &(x, y2, b, c) in &self.sampled {
                let i = x * k + y2;
                bonus_sum += c * sigmoid(self.beta * (lp[i] - self.ref_log_probs[i]) + b);
            }
            total += self.alpha * bonus_sum;
        }
        total
    }

    fn value_and_gradient(&self, policy: &SoftmaxPolicy) -> (f64, Vec<f64>) {
        let k = policy.pool_size;
        let mut grad = vec![0.0; policy.logits.len()];
        let mut total = 0.0;
        for &(x, w, l, c) in &self.preferences {
            let u = self.beta * margin_unchecked(policy, &self.reference, x, w, l);
            total += c * log_sigmoid(u);
            // d/du log σ(u) = σ(−u); dm/dlogit = e_w − e_l
            let g = c * self.beta * sigmoid(-u);
            grad[x * k + w] += g;
            grad[x * k + l] -= g;
        }
        if self.alpha != 0.0 && !self.sampled.is_empty() {
            let lp = Self::log_probs(policy);
            let mut bonus_sum = 0.0;
            for &(x, y2, b, c) in &self.sampled {
                let i = x * k + y2;
                let u = self.beta * (lp[i] - self.ref_log_probs[i]) + b;
                bonus_sum += c * sigmoid(u);
                // d log π(y′|x)/d logit_j = 1{j = y′} − π(j|x)
                let g = self.alpha * c * sigmoid_prime(u) * self.beta;
                for j in 0..k {
                    grad[x * k + j] -= g * lp[x * k + j].exp();
                }
                grad[i] += g;
            }
            total += self.alpha * bonus_sum;
        }
        (total, grad)
    }
}

/// The pruned objective evaluated term by term; with `alpha = 0` this is
/// `dpo_loss` exactly.
#[allow(clippy::too_many_arguments)]
pub fn depo_pruned_objective(
    policy: &SoftmaxPolicy,
    reference: &SoftmaxPolicy,
    records: &[PreferenceRecord<f64>],
    sampled_pairs: &[(usize, usize, usize)],
    world: &World,
    state: &CovarianceState<f64>,
    width: f64,
    alpha: f64,
    beta: f64,
) -> Result<f64, PolicyError> {
    if !(alpha >= 0.0) {
        return Err(PolicyError::Config(format!("alpha must be >= 0, got {alpha}")));
    }
    let dpo = super::dpo_loss(policy, reference, records, beta)?;
    if alpha == 0.0 {
        return Ok(dpo);
    }
    let mut bonus_sum = 0.0;
    for &(x, y, y2) in sampled_pairs {
        let psi = world.pair_feature(x, y, y2)?;
        let b = width * state.quad_form(psi.psi())?.sqrt();
        let log_ratio = policy.log_prob(x, y2)? - reference.log_prob(x, y2)?;
        bonus_sum += sigmoid(beta * log_ratio + b);
    }
    Ok(dpo + alpha * bonus_sum)
}

fn check_against_world(world: &World, policies: &[&SoftmaxPolicy]) -> Result<(), PolicyError> {
    world.check_enumerable()?;
    for p in policies {
        if p.num_prompts != world.num_prompts() || p.pool_size != world.pool_size() {
            return Err(PolicyError::Invalid(format!(
                "policy shape {}x{} does not match world {}x{}",
                p.num_prompts,
                p.pool_size,
                world.num_prompts(),
                world.pool_size()
            )));
        }
    }
    Ok(())
}

/// `G_DEPO(π, b) = E_{x∼ρ, y∼π, y′∼π_sam}[σ(β m_π(x; y, y′) + b(x, y, y′))]`
/// by full enumeration, with `b = width·√(ψᵀ V⁻¹ ψ)`.
#[allow(clippy::too_many_arguments)]
pub fn depo_exact_bonus(
    policy: &SoftmaxPolicy,
    sampler: &SoftmaxPolicy,
    reference: &SoftmaxPolicy,
    world: &World,
    state: &CovarianceState<f64>,
    width: f64,
    beta: f64,
) -> Result<f64, PolicyError> {
    check_against_world(world, &[policy, sampler, reference])?;
    let mut total = 0.0;
    for x in 0..world.num_prompts() {
        let (pi, sam) = (policy.probs(x), sampler.probs(x));
        let mut inner = 0.0;
        for (y, &py) in pi.iter().enumerate() {
            for (y2, &ps) in sam.iter().enumerate() {
                let psi = world.pair_feature_unchecked(x, y, y2);
                let b = width * state.quad_form_slice(psi.psi().as_slice()).sqrt();
                let m = margin_unchecked(policy, reference, x, y, y2);
                inner += py * ps * sigmoid(beta * m + b);
            }
        }
        total += world.prompt_weight(x) * inner;
    }
    Ok(total)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampledBonus {
    pub mean: f64,
    /// Standard error of `mean`.
    pub std_err: f64,
    pub draws: usize,
}

/// Monte-Carlo counterpart of [`depo_exact_bonus`].
#[allow(clippy::too_many_arguments)]
pub fn sampled_bonus<R: Rng + ?Sized>(
    policy: &SoftmaxPolicy,
    sampler: &SoftmaxPolicy,
    reference: &SoftmaxPolicy,
    world: &World,
    state: &CovarianceState<f64>,
    width: f64,
    beta: f64,
    draws: usize,
    rng: &mut R,
) -> Result<SampledBonus, PolicyError> {
    check_against_world(world, &[policy, sampler, reference])?;
    if draws < 2 {
        return Err(PolicyError::Config("need at least two draws".into()));
    }
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for _ in 0..draws {
        let x = world.sample_prompt(rng);
        let y = policy.sample(x, rng);
        let y2 = sampler.sample(x, rng);
        let psi = world.pair_feature_unchecked(x, y, y2);
        let b = width * state.quad_form_slice(psi.psi().as_slice()).sqrt();
        let v = sigmoid(beta * margin_unchecked(policy, reference, x, y, y2) + b);
        sum += v;
        sum_sq += v * v;
    }
    let n = draws as f64;
    let mean = sum / n;
    let var = ((sum_sq - n * mean * mean) / (n - 1.0)).max(0.0);
    Ok(SampledBonus {
        mean,
        std_err: (var / n).sqrt(),
        draws,
    })
}
