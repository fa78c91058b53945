use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::EstimatorError;
use crate::mathcore::{dot, sigmoid_prime, CovarianceState, Real, Vector};
use crate::world::PairFeature;

/// Local curvature of the logistic link along a history of features.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Curvature<T> {
    /// `min_s σ′(⟨θ, ψ_s⟩)`.
    pub kappa: T,
    /// `max_s |⟨θ, ψ_s⟩|`; `kappa = σ′(logit_bound)`.
    pub logit_bound: T,
    /// Set when the history was empty and `kappa` defaulted to 1/4.
    pub empty: bool,
}

pub fn local_curvature<T: Real>(
    theta: &Vector<T>,
    history: &[PairFeature<T>],
) -> Result<Curvature<T>, EstimatorError> {
    let mut tracker = CurvatureTracker::new(theta.clone());
    for psi in history {
        tracker.observe(psi)?;
    }
    Ok(tracker.current())
}

/// Running version of [`local_curvature`] for a fixed `θ`.
#[derive(Debug, Clone, PartialEq)]
pub struct CurvatureTracker<T> {
    theta: Vector<T>,
    logit_bound: T,
    count: usize,
}

impl<T: Real> CurvatureTracker<T> {
    pub fn new(theta: Vector<T>) -> Self {
        Self {
            theta,
            logit_bound: T::zero(),
            count: 0,
        }
    }

    pub fn observe(&mut self, psi: &PairFeature<T>) -> Result<(), EstimatorError> {
        let u = self.theta.dot(psi.psi())?.abs();
        if u > self.logit_bound {
            self.logit_bound = u;
        }
        self.count += 1;
        Ok(())
    }

    pub fn current(&self) -> Curvature<T> {
        Curvature {
            kappa: sigmoid_prime(self.logit_bound),
            logit_bound: self.logit_bound,
            empty: self.count == 0,
        }
    }
}

/// `η_t = √λ·S + √(2·log(det(V_t)^{1/2} / (det(λI)^{1/2}·δ)))`.
pub fn confidence_radius<T: Real>(
    state: &CovarianceState<T>,
    s_bound: T,
    delta: T,
) -> Result<T, EstimatorError> {
    if !(delta > T::zero() && delta < T::one()) {
        return Err(EstimatorError::InvalidParameter(format!(
            "delta must lie in (0,1), got {delta}"
        )));
    }
    let log_term = (T::half() * state.log_det_ratio() - delta.ln()).max(T::zero());
    Ok(state.lambda().sqrt() * s_bound + (T::two() * log_term).sqrt())
}

/// `β_t^conf = η_t / κ_t`.
pub fn confidence_width<T: Real>(
    kappa: T,
    state: &CovarianceState<T>,
    s_bound: T,
    delta: T,
) -> Result<T, EstimatorError> {
    if !(kappa > T::zero()) || kappa > T::of(0.25) {
        return Err(EstimatorError::InvalidParameter(format!(
            "kappa must lie in (0, 0.25], got {kappa}"
        )));
    }
    let eta = confidence_radius(state, s_bound, delta)?;
    Ok(eta / kappa.max(T::of(T::CURVATURE_FLOOR)))
}

/// FIFO buffer of historical pairwise features used for the empirical radius.
#[derive(Debug, Clone, PartialEq)]
pub struct RadiusBuffer<T> {
    capacity: usize,
    entries: VecDeque<PairFeature<T>>,
}

pub const DEFAULT_BUFFER_CAPACITY: usize = 512;

impl<T: Real> RadiusBuffer<T> {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "buffer capacity must be positive");
        Self {
            capacity,
            entries: VecDeque::with_capacity(capacity),
        }
    }

    pub fn push(&mut self, psi: PairFeature<T>) {
        if self.entries.len() == self.capacity {
            self.entries.pop_front();
        }
        self.entries.push_back(psi);
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn iter(&self) -> impl Iterator<Item = &PairFeature<T>> {
        self.entries.iter()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalWidth<T> {
    /// Median of `√(ψ_sᵀ V⁻¹ ψ_s)` over the buffer.
    pub r_bar: T,
    /// `c_b / (r̄ + ε)`.
    pub width_gamma: T,
    pub empty: bool,
}

pub fn empirical_width<T: Real>(
    buffer: &RadiusBuffer<T>,
    state: &CovarianceState<T>,
    c_b: T,
    epsilon: T,
) -> Result<EmpiricalWidth<T>, EstimatorError> {
    if !(c_b > T::zero()) || !(epsilon > T::zero()) {
        return Err(EstimatorError::InvalidParameter(
            "c_b and epsilon must be > 0".into(),
        ));
    }
    if buffer.is_empty() {
        return Ok(EmpiricalWidth {
            r_bar: T::zero(),
            width_gamma: c_b / epsilon,
            empty: true,
        });
    }
    let mut radii = buffer
        .iter()
        .map(|psi| state.quad_form(psi.psi()).map(|q| q.sqrt()))
        .collect::<Result<Vec<T>, _>>()?;
    let r_bar = median(&mut radii);
    Ok(EmpiricalWidth {
        r_bar,
        width_gamma: c_b / (r_bar + epsilon),
        empty: false,
    })
}

/// Median; the mean of the two middle values for even counts.
pub(crate) fn median<T: Real>(values: &mut [T]) -> T {
    values.sort_by(|a, b| a.partial_cmp(b).expect("finite radii"));
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        T::half() * (values[n / 2 - 1] + values[n / 2])
    }
}

/// `b(ψ) = width · √(ψᵀ V⁻¹ ψ)`.
pub fn bonus<T: Real>(
    psi: &PairFeature<T>,
    state: &CovarianceState<T>,
    width: T,
) -> Result<T, EstimatorError> {
    if !(width >= T::zero()) {
        return Err(EstimatorError::InvalidParameter("width must be >= 0".into()));
    }
    Ok(width * state.quad_form(psi.psi())?.sqrt())
}

/// `⟨θ̂, ψ⟩`.
pub fn gap_estimate<T: Real>(theta: &Vector<T>, psi: &PairFeature<T>) -> Result<T, EstimatorError> {
    if theta.dim() != psi.dim() {
        return Err(EstimatorError::Math(crate::mathcore::MathError::DimensionMismatch {
            expected: theta.dim(),
            got: psi.dim(),
        }));
    }
    Ok(dot(theta.as_slice(), psi.psi().as_slice()))
}
