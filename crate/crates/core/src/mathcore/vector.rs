use std::ops::Index;

use serde::{Deserialize, Serialize};

use super::{MathError, Real};

/// Dense real vector with finite entries and positive dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Vector<T> {
    entries: Vec<T>,
}

impl<T: Real> Vector<T> {
    pub fn new(entries: Vec<T>) -> Result<Self, MathError> {
        if entries.is_empty() {
            return Err(MathError::Empty);
        }
        if entries.iter().any(|v| !v.is_finite()) {
            return Err(MathError::NonFinite);
        }
        Ok(Self { entries })
    }

    pub fn zeros(dim: usize) -> Self {
        assert!(dim > 0, "vector dimension must be positive");
        Self {
            entries: vec![T::zero(); dim],
        }
    }

    /// Unit basis vector `e_index`.
    pub fn basis(dim: usize, index: usize) -> Self {
        let mut v = Self::zeros(dim);
        v.entries[index] = T::one();
        v
    }

    /// Concatenation `[a ; b]`.
    pub fn concat(a: &Self, b: &Self) -> Self {
        let mut entries = Vec::with_capacity(a.dim() + b.dim());
        entries.extend_from_slice(&a.entries);
        entries.extend_from_slice(&b.entries);
        Self { entries }
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.entries.len()
    }

    #[inline]
    pub fn as_slice(&self) -> &[T] {
        &self.entries
    }

    pub fn into_inner(self) -> Vec<T> {
        self.entries
    }

    pub fn dot(&self, other: &Self) -> Result<T, MathError> {
        check_dim(self.dim(), other.dim())?;
        Ok(dot(&self.entries, &other.entries))
    }

    pub fn norm_sq(&self) -> T {
        dot(&self.entries, &self.entries)
    }

    pub fn norm(&self) -> T {
        self.norm_sq().sqrt()
    }

    pub fn scale(&self, factor: T) -> Self {
        Self {
            entries: self.entries.iter().map(|&v| v * factor).collect(),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.entries.iter().all(|v| *v == T::zero())
    }

    /// Swaps the two equal-length halves: `[a ; b] -> [b ; a]`.
    pub fn swap_halves(&self) -> Self {
        let half = self.dim() / 2;
        let mut entries = Vec::with_capacity(self.dim());
        entries.extend_from_slice(&self.entries[half..]);
        entries.extend_from_slice(&self.entries[..half]);
        Self { entries }
    }
}

impl<T> Index<usize> for Vector<T> {
    type Output = T;

    fn index(&self, index: usize) -> &T {
        &self.entries[index]
    }
}

#[inline]
pub(crate) fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

#[inline]
pub(crate) fn check_dim(expected: usize, got: usize) -> Result<(), MathError> {
    if expected == got {
        Ok(())
    } else {
        Err(MathError::DimensionMismatch { expected, got })
    }
}
