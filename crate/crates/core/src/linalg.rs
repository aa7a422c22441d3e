use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

pub(crate) struct Factor {
    pub chol: Cholesky<f64, Dyn>,
}

impl Factor {
    pub fn log_det(&self) -> f64 {
        2.0 * self.chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>()
    }

    /// Solves `L v = b` for the lower factor `L`.
    pub fn solve_lower(&self, b: &DVector<f64>) -> DVector<f64> {
        self.chol
            .l_dirty()
            .solve_lower_triangular(b)
            .expect("cholesky factor has a positive diagonal")
    }

    pub fn solve_lower_mat(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        self.chol
            .l_dirty()
            .solve_lower_triangular(b)
            .expect("cholesky factor has a positive diagonal")
    }

    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(b)
    }
}

/// Factorizes `m`, doubling an added diagonal term starting at `base_jitter`
/// until it succeeds or the term exceeds `max_jitter`.
pub(crate) fn robust_cholesky(m: DMatrix<f64>, base_jitter: f64, max_jitter: f64) -> Result<Factor> {
    let n = m.nrows();
    if let Some(chol) = Cholesky::new(m.clone()) {
        return Ok(Factor { chol });
    }
    let mut extra = base_jitter.max(f64::MIN_POSITIVE);
    while extra <= max_jitter {
        let mut a = m.clone();
        for i in 0..n {
            a[(i, i)] += extra;
        }
        if let Some(chol) = Cholesky::new(a) {
            tracing::debug!(n, extra, "cholesky needed extra jitter");
            return Ok(Factor { chol });
        }
        extra *= 2.0;
    }
    Err(Error::NotPositiveDefinite { size: n, jitter: max_jitter })
}

pub(crate) fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for a in 0..n {
        for b in 0..a {
            let v = 0.5 * (m[(a, b)] + m[(b, a)]);
            m[(a, b)] = v;
            m[(b, a)] = v;
        }
    }
}
