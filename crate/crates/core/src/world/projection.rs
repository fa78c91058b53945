use rand::Rng;
use serde::{Deserialize, Serialize};

use super::WorldError;
use crate::mathcore::Vector;
use crate::rng::{stream_rng, Stream};

/// Fixed very-sparse random projection `R^{d'} -> R^{d}`.
///
/// Each entry is `±√(s/d)` with probability `1/(2s)` each and zero otherwise,
/// so `E‖Pv‖² = ‖v‖²`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionMatrix {
    rows: usize,
    cols: usize,
    sparsity: f64,
    seed: u64,
    // per row: (column, sign)
    nonzeros: Vec<Vec<(usize, i8)>>,
}

impl ProjectionMatrix {
    /// Sparsity `s = √cols`.
    pub fn new(rows: usize, cols: usize, seed: u64) -> Result<Self, WorldError> {
        Self::with_sparsity(rows, cols, (cols as f64).sqrt(), seed)
    }

    pub fn with_sparsity(
        rows: usize,
        cols: usize,
        sparsity: f64,
        seed: u64,
    ) -> Result<Self, WorldError> {
        if rows == 0 || cols == 0 {
            return Err(WorldError::Invalid("projection dimensions must be positive".into()));
        }
        if !(sparsity >= 1.0) || !sparsity.is_finite() {
            return Err(WorldError::Invalid("projection sparsity must be >= 1".into()));
        }
        let mut rng = stream_rng(seed, Stream::Projection);
        let p_nonzero = 1.0 / sparsity;
        let nonzeros = (0..rows)
            .map(|_| {
                (0..cols)
                    .filter_map(|c| {
                        let u: f64 = rng.random();
                        if u < 0.5 * p_nonzero {
                            Some((c, 1))
                        } else if u < p_nonzero {
                            Some((c, -1))
                        } else {
                            None
                        }
                    })
                    .collect()
            })
            .collect();
        Ok(Self {
            rows,
            cols,
            sparsity,
            seed,
            nonzeros,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn sparsity(&self) -> f64 {
        self.sparsity
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn nonzero_count(&self) -> usize {
        self.nonzeros.iter().map(Vec::len).sum()
    }

    fn entry_scale(&self) -> f64 {
        (self.sparsity / self.rows as f64).sqrt()
    }

    /// `P v`.
    pub fn project(&self, v: &Vector<f64>) -> Result<Vector<f64>, WorldError> {
        if v.dim() != self.cols {
            return Err(WorldError::DimensionMismatch {
                expected: self.cols,
                got: v.dim(),
            });
        }
        let x = v.as_slice();
        let scale = self.entry_scale();
        let out = self
            .nonzeros
            .iter()
            .map(|row| {
                let acc: f64 = row
                    .iter()
                    .map(|&(c, sign)| if sign > 0 { x[c] } else { -x[c] })
                    .sum();
                acc * scale
            })
            .collect();
        Ok(Vector::new(out).expect("projection of a finite vector is finite"))
    }
}

/// `P v` for a fixed sparse projection.
pub fn sparse_project(p: &ProjectionMatrix, v: &Vector<f64>) -> Result<Vector<f64>, WorldError> {
    p.project(v)
}
