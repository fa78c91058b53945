use serde::{Deserialize, Serialize};

use super::linalg::SymMatrix;
use super::vector::check_dim;
use super::{MathError, Real, Vector};

/// Number of rank-1 updates between full re-factorizations of `V`.
pub const DEFAULT_REFRESH_INTERVAL: u64 = 4096;

/// Regularized covariance `V_t = λI + Σ ψ_s ψ_sᵀ` together with its inverse
/// and log-determinant, both maintained incrementally.
///
/// Updates must be applied in order by a single owner. Read-only queries on a
/// shared reference are safe from any thread.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovarianceState<T> {
    lambda: T,
    count: u64,
    v: SymMatrix<T>,
    v_inv: SymMatrix<T>,
    log_det: T,
    refresh_interval: u64,
    since_refresh: u64,
    norm_warnings: u64,
}

impl<T: Real> CovarianceState<T> {
    /// `V_0 = λI` in dimension `dim`.
    pub fn new(dim: usize, lambda: T) -> Result<Self, MathError> {
        if dim == 0 {
            return Err(MathError::Empty);
        }
        if !(lambda > T::zero()) || !lambda.is_finite() {
            return Err(MathError::InvalidRegularizer);
        }
        Ok(Self {
            lambda,
            count: 0,
            v: SymMatrix::scaled_identity(dim, lambda),
            v_inv: SymMatrix::scaled_identity(dim, T::one() / lambda),
            log_det: T::of(dim as f64) * lambda.ln(),
            refresh_interval: DEFAULT_REFRESH_INTERVAL,
            since_refresh: 0,
            norm_warnings: 0,
        })
    }

    /// Overrides how often the inverse is rebuilt from `V`; `0` disables it.
    pub fn with_refresh_interval(mut self, interval: u64) -> Self {
        self.refresh_interval = interval;
        self
    }

    pub fn dim(&self) -> usize {
        self.v.dim()
    }

    pub fn lambda(&self) -> T {
        self.lambda
    }

    /// Number of rank-1 updates applied so far.
    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn matrix(&self) -> &SymMatrix<T> {
        &self.v
    }

    pub fn inverse(&self) -> &SymMatrix<T> {
        &self.v_inv
    }

    pub fn log_det(&self) -> T {
        self.log_det
    }

    /// `log det V − D log λ`, the log of the determinant ratio against `λI`.
    pub fn log_det_ratio(&self) -> T {
        self.log_det - T::of(self.dim() as f64) * self.lambda.ln()
    }

    /// How many updates carried a feature with `‖ψ‖₂ > 1`.
    pub fn norm_warnings(&self) -> u64 {
        self.norm_warnings
    }

    /// Sherman–Morrison rank-1 update with `ψ`, plus the matrix determinant
    /// lemma for the log-determinant.
    pub fn sm_update(&mut self, psi: &Vector<T>) -> Result<(), MathError> {
        check_dim(self.dim(), psi.dim())?;
        let psi = psi.as_slice();
        if psi.iter().any(|v| !v.is_finite()) {
            return Err(MathError::NonFinite);
        }
        let norm_sq = super::vector::dot(psi, psi);
        if norm_sq > T::one() + T::epsilon() * T::of(8.0) {
            self.norm_warnings += 1;
        }
        self.count += 1;
        self.since_refresh += 1;
        if norm_sq == T::zero() {
            return Ok(());
        }

        let u = self.v_inv.mul_vec(psi);
        let q = super::vector::dot(psi, &u).max(T::zero());
        self.v.add_outer(psi, T::one());
        self.v_inv.add_outer(&u, -T::one() / (T::one() + q));
        self.log_det += q.ln_1p();

        if self.refresh_interval > 0 && self.since_refresh >= self.refresh_interval {
            self.refresh_inverse()?;
        }
        Ok(())
    }

    /// `ψᵀ V⁻¹ ψ`.
    pub fn quad_form(&self, psi: &Vector<T>) -> Result<T, MathError> {
        check_dim(self.dim(), psi.dim())?;
        Ok(self.quad_form_slice(psi.as_slice()))
    }

    pub(crate) fn quad_form_slice(&self, psi: &[T]) -> T {
        if self.count == 0 {
            return super::vector::dot(psi, psi) / self.lambda;
        }
        self.v_inv.quad(psi).max(T::zero())
    }

    /// Rebuilds `V⁻¹` and `log det V` from `V` by Cholesky factorization.
    pub fn refresh_inverse(&mut self) -> Result<(), MathError> {
        let chol = self.v.cholesky()?;
        self.v_inv = chol.inverse();
        self.log_det = chol.log_det();
        self.since_refresh = 0;
        Ok(())
    }

    /// Smallest eigenvalue of `V` from a dense symmetric eigensolve.
    pub fn min_eigenvalue(&self) -> Result<T, MathError> {
        if self.count == 0 {
            return Ok(self.lambda);
        }
        let ev = self.v.eigenvalues()?;
        Ok(ev[0])
    }

    /// Replaces `V` by an arbitrary symmetric matrix (used to probe the
    /// eigen-solver on constructed inputs). Inverse and log-det are rebuilt.
    pub fn from_matrix(v: SymMatrix<T>, lambda: T, count: u64) -> Result<Self, MathError> {
        let mut state = Self::new(v.dim(), lambda)?;
        state.v = v;
        state.count = count;
        state.refresh_inverse()?;
        Ok(state)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(x: &[f64]) -> Vector<f64> {
        Vector::new(x.to_vec()).unwrap()
    }

    #[test]
    fn initial_state() {
        let s = CovarianceState::new(3, 2.0_f64).unwrap();
        assert_eq!(s.count(), 0);
        assert_eq!(s.log_det(), 3.0 * 2.0_f64.ln());
        assert_eq!(s.inverse().get(1, 1), 0.5);
        assert_eq!(s.log_det_ratio(), 0.0);
    }

    #[test]
    fn rejects_bad_regularizer() {
        assert_eq!(
            CovarianceState::new(2, 0.0_f64).unwrap_err(),
            MathError::InvalidRegularizer
        );
        assert_eq!(
            CovarianceState::new(2, -1.0_f64).unwrap_err(),
            MathError::InvalidRegularizer
        );
    }

    #[test]
    fn rank_one_on_identity() {
        let mut s = CovarianceState::new(2, 1.0_f64).unwrap();
        s.sm_update(&v(&[1.0, 0.0])).unwrap();
        assert!((s.inverse().get(0, 0) - 0.5).abs() < 1e-15);
        assert!((s.inverse().get(1, 1) - 1.0).abs() < 1e-15);
        assert_eq!(s.inverse().get(0, 1), 0.0);
        assert!((s.log_det() - 2.0_f64.ln()).abs() < 1e-15);
        assert!((s.quad_form(&v(&[1.0, 0.0])).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn zero_update_only_counts() {
        let mut s = CovarianceState::new(2, 1.0_f64).unwrap();
        let before = s.clone();
        s.sm_update(&Vector::zeros(2)).unwrap();
        assert_eq!(s.count(), 1);
        assert_eq!(s.inverse(), before.inverse());
        assert_eq!(s.matrix(), before.matrix());
        assert_eq!(s.log_det(), before.log_det());
    }

    #[test]
    fn quad_form_at_start_is_norm_over_lambda() {
        let s = CovarianceState::new(2, 2.0_f64).unwrap();
        let psi = v(&[0.6, 0.8]);
        assert_eq!(s.quad_form(&psi).unwrap(), psi.norm_sq() / 2.0);
        assert!((s.quad_form(&psi).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(s.quad_form(&Vector::zeros(2)).unwrap(), 0.0);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let mut s = CovarianceState::new(2, 1.0_f64).unwrap();
        let err = s.sm_update(&v(&[1.0, 0.0, 0.0])).unwrap_err();
        assert_eq!(err, MathError::DimensionMismatch { expected: 2, got: 3 });
        assert!(s.quad_form(&v(&[1.0])).is_err());
    }

    #[test]
    fn oversized_features_are_counted_not_rejected() {
        let mut s = CovarianceState::new(2, 1.0_f64).unwrap();
        s.sm_update(&v(&[1.0, 1.0])).unwrap();
        assert_eq!(s.norm_warnings(), 1);
        assert_eq!(s.count(), 1);
    }

    #[test]
    fn refresh_is_idempotent_on_fresh_state() {
        let mut s = CovarianceState::new(4, 0.7_f64).unwrap();
        let fresh = s.clone();
        s.refresh_inverse().unwrap();
        assert!(s.inverse().max_abs_diff(fresh.inverse()) < 1e-12);
        assert!((s.log_det() - fresh.log_det()).abs() < 1e-12);
        let once = s.clone();
        s.refresh_inverse().unwrap();
        assert_eq!(s, once);
    }

    #[test]
    fn min_eigenvalue_cases() {
        let s = CovarianceState::new(3, 0.5_f64).unwrap();
        assert_eq!(s.min_eigenvalue().unwrap(), 0.5);
        let constructed =
            CovarianceState::from_matrix(SymMatrix::from_diagonal(&[1.0_f64, 3.0]), 1.0, 1)
                .unwrap();
        assert!((constructed.min_eigenvalue().unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn single_precision_state() {
        let mut s = CovarianceState::new(2, 1.0_f32).unwrap();
        s.sm_update(&Vector::new(vec![1.0_f32, 0.0]).unwrap()).unwrap();
        assert!((s.quad_form(&Vector::basis(2, 0)).unwrap() - 0.5).abs() < 1e-6);
    }
}
