//! Small dense symmetric linear algebra: Cholesky factorization and the
//! symmetric eigenvalue problem (Householder tridiagonalization followed by
//! implicit QL). Sized for D up to roughly a thousand.

use serde::{Deserialize, Serialize};

use super::vector::{check_dim, dot};
use super::{MathError, Real};

/// Dense symmetric matrix in row-major storage. Both triangles are stored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymMatrix<T> {
    dim: usize,
    data: Vec<T>,
}

impl<T: Real> SymMatrix<T> {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            data: vec![T::zero(); dim * dim],
        }
    }

    /// `scale · I`.
    pub fn scaled_identity(dim: usize, scale: T) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m.data[i * dim + i] = scale;
        }
        m
    }

    pub fn from_diagonal(diag: &[T]) -> Self {
        let mut m = Self::zeros(diag.len());
        for (i, &v) in diag.iter().enumerate() {
            m.data[i * diag.len() + i] = v;
        }
        m
    }

    /// Builds from row-major entries, symmetrizing by averaging the two triangles.
    pub fn from_row_major(dim: usize, entries: &[T]) -> Result<Self, MathError> {
        check_dim(dim * dim, entries.len())?;
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            for j in 0..dim {
                m.data[i * dim + j] = T::half() * (entries[i * dim + j] + entries[j * dim + i]);
            }
        }
        Ok(m)
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.dim + j]
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn as_row_major(&self) -> &[T] {
        &self.data
    }

    /// `self += weight · v vᵀ`.
    pub fn add_outer(&mut self, v: &[T], weight: T) {
        debug_assert_eq!(v.len(), self.dim);
        let n = self.dim;
        for i in 0..n {
            let wi = weight * v[i];
            if wi == T::zero() {
                continue;
            }
            let row = &mut self.data[i * n..(i + 1) * n];
            for (r, &vj) in row.iter_mut().zip(v) {
                *r += wi * vj;
            }
        }
    }

    pub fn mul_vec(&self, v: &[T]) -> Vec<T> {
        (0..self.dim).map(|i| dot(self.row(i), v)).collect()
    }

    /// `vᵀ M v`.
    pub fn quad(&self, v: &[T]) -> T {
        (0..self.dim)
            .map(|i| v[i] * dot(self.row(i), v))
            .fold(T::zero(), |a, b| a + b)
    }

    pub fn max_abs_diff(&self, other: &Self) -> T {
        self.data
            .iter()
            .zip(&other.data)
            .fold(T::zero(), |m, (&a, &b)| m.max((a - b).abs()))
    }

    /// Max-entry deviation of `self · other` from the identity.
    pub fn identity_residual(&self, other: &Self) -> T {
        let n = self.dim;
        let mut worst = T::zero();
        for i in 0..n {
            for j in 0..n {
                let mut acc = T::zero();
                for k in 0..n {
                    acc += self.get(i, k) * other.get(k, j);
                }
                let target = if i == j { T::one() } else { T::zero() };
                worst = worst.max((acc - target).abs());
            }
        }
        worst
    }

    pub fn cholesky(&self) -> Result<Cholesky<T>, MathError> {
        Cholesky::factor(self)
    }

    /// All eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> Result<Vec<T>, MathError> {
        symmetric_eigenvalues(self)
    }
}

/// Lower-triangular factor `L` with `A = L Lᵀ`.
#[derive(Debug, Clone)]
pub struct Cholesky<T> {
    dim: usize,
    lower: Vec<T>,
}

impl<T: Real> Cholesky<T> {
    pub fn factor(a: &SymMatrix<T>) -> Result<Self, MathError> {
        let n = a.dim();
        let mut l = vec![T::zero(); n * n];
        for j in 0..n {
            let mut diag = a.get(j, j);
            for k in 0..j {
                diag -= l[j * n + k] * l[j * n + k];
            }
            if !(diag > T::zero()) || !diag.is_finite() {
                return Err(MathError::NotPositiveDefinite);
            }
            let ljj = diag.sqrt();
            l[j * n + j] = ljj;
            for i in (j + 1)..n {
                let mut s = a.get(i, j);
                for k in 0..j {
                    s -= l[i * n + k] * l[j * n + k];
                }
                l[i * n + j] = s / ljj;
            }
        }
        Ok(Self { dim: n, lower: l })
    }

    pub fn log_det(&self) -> T {
        let n = self.dim;
        (0..n).map(|i| self.lower[i * n + i].ln()).sum::<T>() * T::two()
    }

    /// Solves `A x = b`.
    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let n = self.dim;
        let l = &self.lower;
        let mut y = b.to_vec();
        for i in 0..n {
            let mut s = y[i];
            for k in 0..i {
                s -= l[i * n + k] * y[k];
            }
            y[i] = s / l[i * n + i];
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in (i + 1)..n {
                s -= l[k * n + i] * y[k];
            }
            y[i] = s / l[i * n + i];
        }
        y
    }

    /// `A⁻¹ = L⁻ᵀ L⁻¹`, returned exactly symmetric.
    pub fn inverse(&self) -> SymMatrix<T> {
        let n = self.dim;
        let l = &self.lower;
        // Columns of L⁻¹ by forward substitution; stored row-major in `linv`.
        let mut linv = vec![T::zero(); n * n];
        for c in 0..n {
            linv[c * n + c] = T::one() / l[c * n + c];
            for i in (c + 1)..n {
                let mut s = T::zero();
                for k in c..i {
                    s += l[i * n + k] * linv[k * n + c];
                }
                linv[i * n + c] = -s / l[i * n + i];
            }
        }
        let mut inv = SymMatrix::zeros(n);
        for i in 0..n {
            for j in 0..=i {
                let mut s = T::zero();
                for k in i..n {
                    s += linv[k * n + i] * linv[k * n + j];
                }
                inv.data[i * n + j] = s;
                inv.data[j * n + i] = s;
            }
        }
        inv
    }
}

const QL_MAX_SWEEPS: usize = 60;

fn symmetric_eigenvalues<T: Real>(m: &SymMatrix<T>) -> Result<Vec<T>, MathError> {
    let n = m.dim();
    if n == 0 {
        return Ok(Vec::new());
    }
    let (mut d, mut e) = tridiagonalize(m);
    implicit_ql(&mut d, &mut e)?;
    d.sort_by(|a, b| a.partial_cmp(b).expect("finite eigenvalues"));
    Ok(d)
}

/// Householder reduction to tridiagonal form. Returns the diagonal and the
/// sub-diagonal (`e[i]` couples rows `i-1` and `i`, `e[0] = 0`).
fn tridiagonalize<T: Real>(m: &SymMatrix<T>) -> (Vec<T>, Vec<T>) {
    let n = m.dim();
    let mut a = m.as_row_major().to_vec();
    let mut d = vec![T::zero(); n];
    let mut e = vec![T::zero(); n];
    for i in (1..n).rev() {
        let l = i - 1;
        let mut h = T::zero();
        if l > 0 {
            let scale = (0..=l).fold(T::zero(), |s, k| s + a[i * n + k].abs());
            if scale == T::zero() {
                e[i] = a[i * n + l];
            } else {
                for k in 0..=l {
                    a[i * n + k] = a[i * n + k] / scale;
                    h += a[i * n + k] * a[i * n + k];
                }
                let f = a[i * n + l];
                let g = if f >= T::zero() { -h.sqrt() } else { h.sqrt() };
                e[i] = scale * g;
                h -= f * g;
                a[i * n + l] = f - g;
                let mut f = T::zero();
                for j in 0..=l {
                    let mut g = T::zero();
                    for k in 0..=j {
                        g += a[j * n + k] * a[i * n + k];
                    }
                    for k in (j + 1)..=l {
                        g += a[k * n + j] * a[i * n + k];
                    }
                    e[j] = g / h;
                    f += e[j] * a[i * n + j];
                }
                let hh = f / (h + h);
                for j in 0..=l {
                    let f = a[i * n + j];
                    let g = e[j] - hh * f;
                    e[j] = g;
                    for k in 0..=j {
                        let delta = f * e[k] + g * a[i * n + k];
                        a[j * n + k] -= delta;
                    }
                }
            }
        } else {
            e[i] = a[i * n + l];
        }
        d[i] = h;
    }
    e[0] = T::zero();
    for i in 0..n {
        d[i] = a[i * n + i];
    }
    (d, e)
}

/// Implicit QL with Wilkinson-style shifts on a symmetric tridiagonal matrix.
/// On return `d` holds the (unsorted) eigenvalues.
fn implicit_ql<T: Real>(d: &mut [T], e: &mut [T]) -> Result<(), MathError> {
    let n = d.len();
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = T::zero();
    let eps = T::epsilon();
    for l in 0..n {
        let mut sweeps = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= eps * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            sweeps += 1;
            if sweeps > QL_MAX_SWEEPS {
                return Err(MathError::NoConvergence);
            }
            let mut g = (d[l + 1] - d[l]) / (T::two() * e[l]);
            let mut r = g.hypot(T::one());
            g = d[m] - d[l] + e[l] / (g + r.abs().copysign(g));
            let (mut s, mut c, mut p) = (T::one(), T::one(), T::zero());
            let mut deflated = false;
            let mut i = m as isize - 1;
            while i >= l as isize {
                let iu = i as usize;
                let f = s * e[iu];
                let b = c * e[iu];
                r = f.hypot(g);
                e[iu + 1] = r;
                if r == T::zero() {
                    d[iu + 1] -= p;
                    e[m] = T::zero();
                    deflated = true;
                    break;
                }
                s = f / r;
                c = g / r;
                let gg = d[iu + 1] - p;
                r = (d[iu] - gg) * s + T::two() * c * b;
                p = s * r;
                d[iu + 1] = gg + p;
                g = c * r - b;
                i -= 1;
            }
            if deflated {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = T::zero();
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cholesky_inverse_and_logdet_of_diagonal() {
        let m = SymMatrix::from_diagonal(&[2.0_f64, 4.0, 0.5]);
        let ch = m.cholesky().unwrap();
        assert!((ch.log_det() - (4.0_f64).ln()).abs() < 1e-14);
        let inv = ch.inverse();
        assert!((inv.get(0, 0) - 0.5).abs() < 1e-15);
        assert!((inv.get(1, 1) - 0.25).abs() < 1e-15);
        assert!((inv.get(2, 2) - 2.0).abs() < 1e-15);
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let m = SymMatrix::from_row_major(2, &[1.0_f64, 2.0, 2.0, 1.0]).unwrap();
        assert_eq!(m.cholesky().unwrap_err(), MathError::NotPositiveDefinite);
    }

    #[test]
    fn solve_recovers_rhs() {
        let m = SymMatrix::from_row_major(3, &[4.0_f64, 1.0, 0.5, 1.0, 3.0, 0.2, 0.5, 0.2, 2.0])
            .unwrap();
        let x = m.cholesky().unwrap().solve(&[1.0, -2.0, 0.5]);
        let back = m.mul_vec(&x);
        for (a, b) in back.iter().zip([1.0, -2.0, 0.5]) {
            assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn eigenvalues_of_known_matrices() {
        let diag = SymMatrix::from_diagonal(&[3.0_f64, 1.0]);
        assert_eq!(diag.eigenvalues().unwrap(), vec![1.0, 3.0]);

        // [[2,1],[1,2]] has eigenvalues 1 and 3.
        let m = SymMatrix::from_row_major(2, &[2.0_f64, 1.0, 1.0, 2.0]).unwrap();
        let ev = m.eigenvalues().unwrap();
        assert!((ev[0] - 1.0).abs() < 1e-14 && (ev[1] - 3.0).abs() < 1e-14);

        // Path-graph Laplacian of size 5: eigenvalues 2 - 2cos(kπ/5).
        let n = 5;
        let mut entries = vec![0.0_f64; n * n];
        for i in 0..n {
            entries[i * n + i] = if i == 0 || i == n - 1 { 1.0 } else { 2.0 };
            if i + 1 < n {
                entries[i * n + i + 1] = -1.0;
                entries[(i + 1) * n + i] = -1.0;
            }
        }
        let ev = SymMatrix::from_row_major(n, &entries).unwrap().eigenvalues().unwrap();
        for (k, v) in ev.iter().enumerate() {
            let expected = 2.0 - 2.0 * (k as f64 * std::f64::consts::PI / n as f64).cos();
            assert!((v - expected).abs() < 1e-12, "k={k}: {v} vs {expected}");
        }
    }
}
