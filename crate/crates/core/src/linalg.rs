//! Dense symmetric positive-definite solves for the small systems
//! (`L x L`, L = basis size) used by the series estimators.

use crate::scalar::Scalar;

/// Lower Cholesky factor of a row-major `dim x dim` matrix.
#[derive(Debug, Clone)]
pub struct Cholesky<S> {
    dim: usize,
    lower: Vec<S>,
    /// Ridge that was added to the diagonal before factorizing.
    pub ridge: S,
}

impl<S: Scalar> Cholesky<S> {
    /// Returns `None` when a pivot is not safely positive.
    pub fn factor(a: &[S], dim: usize) -> Option<Self> {
        Self::factor_ridged(a, dim, S::zero())
    }

    fn factor_ridged(a: &[S], dim: usize, ridge: S) -> Option<Self> {
        debug_assert_eq!(a.len(), dim * dim);
        let max_diag = (0..dim)
            .map(|i| a[i * dim + i].abs())
            .fold(S::zero(), S::max);
        let floor = S::epsilon() * S::lit(100.0) * max_diag.max(S::min_positive_value());
        let mut l = vec![S::zero(); dim * dim];
        for i in 0..dim {
            for j in 0..=i {
                let mut sum = a[i * dim + j];
                if i == j {
                    sum = sum + ridge;
                }
                for p in 0..j {
                    sum = sum - l[i * dim + p] * l[j * dim + p];
                }
                if i == j {
                    if sum <= floor || sum.is_nan() {
                        return None;
                    }
                    l[i * dim + i] = sum.sqrt();
                } else {
                    l[i * dim + j] = sum / l[j * dim + j];
                }
            }
        }
        Some(Self {
            dim,
            lower: l,
            ridge,
        })
    }

    /// Factor `a`, retrying with diagonal ridge `base * trace / dim`
    /// multiplied by 10 on every further attempt.
    pub fn factor_with_ridge(a: &[S], dim: usize, base: S, attempts: usize) -> Option<Self> {
        if let Some(c) = Self::factor(a, dim) {
            return Some(c);
        }
        let trace: S = (0..dim).map(|i| a[i * dim + i]).sum();
        let mut ridge = base * trace.abs() / S::from_count(dim.max(1));
        if ridge <= S::zero() || ridge.is_nan() {
            ridge = base;
        }
        for _ in 0..attempts {
            if let Some(c) = Self::factor_ridged(a, dim, ridge) {
                return Some(c);
            }
            ridge = ridge * S::lit(10.0);
        }
        None
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn solve(&self, b: &[S]) -> Vec<S> {
        let n = self.dim;
        let l = &self.lower;
        let mut y = b.to_vec();
        for i in 0..n {
            let mut s = y[i];
            for p in 0..i {
                s = s - l[i * n + p] * y[p];
            }
            y[i] = s / l[i * n + i];
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for p in i + 1..n {
                s = s - l[p * n + i] * y[p];
            }
            y[i] = s / l[i * n + i];
        }
        y
    }
}
