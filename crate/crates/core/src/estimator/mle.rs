use serde::{Deserialize, Serialize};

use super::{EstimatorError, PreferenceRecord};
use crate::mathcore::{dot, sigmoid, sigmoid_prime, softplus, Real, SymMatrix, Vector};

pub const DEFAULT_MAX_NEWTON_ITERS: usize = 100;
const MAX_HALVINGS: usize = 60;

/// Weighted logistic design: each row is a feature `ψ` with the number of
/// `z = +1` and `z = −1` labels observed on it.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LogisticData<T> {
    dim: usize,
    psis: Vec<T>,
    positives: Vec<T>,
    negatives: Vec<T>,
}

impl<T: Real> LogisticData<T> {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            psis: Vec::new(),
            positives: Vec::new(),
            negatives: Vec::new(),
        }
    }

    pub fn from_records(records: &[PreferenceRecord<T>], dim: usize) -> Result<Self, EstimatorError> {
        let mut data = Self::new(dim);
        for r in records {
            let label_weight = if r.label > 0 { (T::one(), T::zero()) } else { (T::zero(), T::one()) };
            data.push(r.psi_policy.psi(), label_weight.0, label_weight.1)?;
        }
        Ok(data)
    }

    pub fn push(&mut self, psi: &Vector<T>, positives: T, negatives: T) -> Result<(), EstimatorError> {
        if psi.dim() != self.dim {
            return Err(EstimatorError::Math(crate::mathcore::MathError::DimensionMismatch {
                expected: self.dim,
                got: psi.dim(),
            }));
        }
        self.psis.extend_from_slice(psi.as_slice());
        self.positives.push(positives);
        self.negatives.push(negatives);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.positives.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positives.is_empty()
    }

    fn rows(&self) -> impl Iterator<Item = (&[T], T, T)> + '_ {
        self.psis
            .chunks_exact(self.dim)
            .zip(self.positives.iter().zip(&self.negatives))
            .map(|(psi, (&p, &n))| (psi, p, n))
    }

    /// `Σ_s ℓ(z_s, ⟨θ, ψ_s⟩) + (λ/2)‖θ‖²` with `ℓ(z, u) = log(1 + e^{−zu})`.
    pub fn objective(&self, theta: &[T], lambda: T) -> T {
        let mut f = T::half() * lambda * dot(theta, theta);
        for (psi, pos, neg) in self.rows() {
            let u = dot(theta, psi);
            if pos != T::zero() {
                f += pos * softplus(-u);
            }
            if neg != T::zero() {
                f += neg * softplus(u);
            }
        }
        f
    }

    pub fn gradient(&self, theta: &[T], lambda: T) -> Vec<T> {
        let mut g: Vec<T> = theta.iter().map(|&t| lambda * t).collect();
        for (psi, pos, neg) in self.rows() {
            let u = dot(theta, psi);
            // d/du of pos·log(1+e^{-u}) + neg·log(1+e^{u})
            let coeff = neg * sigmoid(u) - pos * sigmoid(-u);
            for (gi, &p) in g.iter_mut().zip(psi) {
                *gi += coeff * p;
            }
        }
        g
    }

    fn hessian(&self, theta: &[T], lambda: T) -> SymMatrix<T> {
        let mut h = SymMatrix::scaled_identity(self.dim, lambda);
        for (psi, pos, neg) in self.rows() {
            let w = (pos + neg) * sigmoid_prime(dot(theta, psi));
            h.add_outer(psi, w);
        }
        h
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NewtonOptions {
    pub tolerance: f64,
    pub max_iters: usize,
}

impl NewtonOptions {
    pub fn for_scalar<T: Real>() -> Self {
        Self {
            tolerance: T::SOLVER_TOLERANCE,
            max_iters: DEFAULT_MAX_NEWTON_ITERS,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MleFit<T> {
    pub theta: Vector<T>,
    pub iterations: usize,
    /// Max-norm of the gradient at `theta`.
    pub grad_norm: T,
    pub objective: T,
    /// False when the iteration cap was hit before the tolerance.
    pub converged: bool,
}

/// Regularized logistic MLE over the records' generated orientation `ψ(x, y, y′)`
/// with labels `z`.
pub fn fit_mle<T: Real>(
    records: &[PreferenceRecord<T>],
    dim: usize,
    lambda: T,
    warm_start: Option<&Vector<T>>,
) -> Result<MleFit<T>, EstimatorError> {
    let data = LogisticData::from_records(records, dim)?;
    fit_logistic(&data, lambda, warm_start, NewtonOptions::for_scalar::<T>())
}

/// Damped Newton on the strictly convex regularized logistic objective.
pub fn fit_logistic<T: Real>(
    data: &LogisticData<T>,
    lambda: T,
    warm_start: Option<&Vector<T>>,
    options: NewtonOptions,
) -> Result<MleFit<T>, EstimatorError> {
    if !(lambda > T::zero()) {
        return Err(EstimatorError::InvalidParameter("lambda must be > 0".into()));
    }
    let dim = data.dim();
    let mut theta = match warm_start {
        Some(w) if w.dim() == dim => w.as_slice().to_vec(),
        Some(w) => {
            return Err(EstimatorError::Math(crate::mathcore::MathError::DimensionMismatch {
                expected: dim,
                got: w.dim(),
            }))
        }
        None => vec![T::zero(); dim],
    };
    let tol = T::of(options.tolerance);
    let mut f = data.objective(&theta, lambda);
    if !f.is_finite() {
        return Err(EstimatorError::NonFiniteObjective);
    }
    let mut grad = data.gradient(&theta, lambda);
    let mut gmax = max_abs(&grad);
    let mut iterations = 0;
    while gmax > tol && iterations < options.max_iters {
        iterations += 1;
        let step = data.hessian(&theta, lambda).cholesky()?.solve(&grad);
        let decrement = dot(&grad, &step);
        let quadratic_regime = T::half() * decrement <= T::of(1e-12) * (T::one() + f.abs());

        let mut scale = T::one();
        let mut accepted = None;
        for _ in 0..MAX_HALVINGS {
            let cand: Vec<T> = theta.iter().zip(&step).map(|(&t, &s)| t - scale * s).collect();
            let fc = data.objective(&cand, lambda);
            if !fc.is_finite() {
                return Err(EstimatorError::NonFiniteObjective);
            }
            if fc < f || quadratic_regime {
                accepted = Some((cand, fc));
                break;
            }
            scale = scale * T::half();
        }
        match accepted {
            Some((cand, fc)) => {
                theta = cand;
                f = fc;
            }
            // No representable decrease along the Newton direction.
            None => break,
        }
        grad = data.gradient(&theta, lambda);
        gmax = max_abs(&grad);
    }
    Ok(MleFit {
        theta: Vector::new(theta)?,
        iterations,
        grad_norm: gmax,
        objective: f,
        converged: gmax <= tol,
    })
}

fn max_abs<T: Real>(v: &[T]) -> T {
    v.iter().fold(T::zero(), |m, x| m.max(x.abs()))
}
