//! Reward-gap estimation: the regularized logistic MLE over pairwise features,
//! local curvature, the theoretical confidence width `β_t^conf`, the
//! empirical radius `r̄_t` with its width proxy `γ_t`, and the elliptical bonus.

mod mle;
mod width;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mathcore::{MathError, Real, Vector};
use crate::world::PairFeature;

pub use mle::{fit_logistic, fit_mle, LogisticData, MleFit, NewtonOptions, DEFAULT_MAX_NEWTON_ITERS};
pub use width::{
    bonus, confidence_radius, confidence_width, empirical_width, gap_estimate, local_curvature,
    Curvature, CurvatureTracker, EmpiricalWidth, RadiusBuffer, DEFAULT_BUFFER_CAPACITY,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EstimatorError {
    #[error(transparent)]
    Math(#[from] MathError),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("objective became non-finite")]
    NonFiniteObjective,
}

/// One labelled comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct PreferenceRecord<T> {
    pub round: usize,
    pub prompt_id: usize,
    pub winner_id: usize,
    pub loser_id: usize,
    /// `ψ(x, y_w, y_l)`.
    pub psi_wl: PairFeature<T>,
    /// `ψ(x, y, y′)` in the order the responses were generated.
    pub psi_policy: PairFeature<T>,
    /// `+1` iff the first generated response won.
    pub label: i8,
}

impl<T: Real> PreferenceRecord<T> {
    pub fn new(
        round: usize,
        prompt_id: usize,
        first: usize,
        second: usize,
        label: i8,
        psi_policy: PairFeature<T>,
    ) -> Self {
        let (winner_id, loser_id, psi_wl) = if label > 0 {
            (first, second, psi_policy.clone())
        } else {
            (second, first, psi_policy.swapped())
        };
        Self {
            round,
            prompt_id,
            winner_id,
            loser_id,
            psi_wl,
            psi_policy,
            label: if label > 0 { 1 } else { -1 },
        }
    }
}

/// Snapshot of the estimator after a round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardEstimate<T> {
    pub theta_hat: Vector<T>,
    pub lambda: T,
    pub newton_iters: usize,
    pub grad_norm: T,
    /// `κ_t` from the planted parameter (simulation-only diagnostic).
    pub kappa_true: T,
    /// `κ̂_t` from `θ̂_t`.
    pub kappa_plugin: T,
    /// `B_t = max_s |⟨θ*, ψ_s⟩|`.
    pub logit_bound: T,
    pub eta: T,
    pub beta_conf: T,
    pub width_gamma: T,
    pub r_bar: T,
}

impl<T: Real> RewardEstimate<T> {
    /// `Δr̂_t = ⟨θ̂_t, ψ⟩`.
    pub fn gap_estimate(&self, psi: &PairFeature<T>) -> Result<T, EstimatorError> {
        gap_estimate(&self.theta_hat, psi)
    }
}

#[cfg(test)]
mod tests;
