//! Series logit estimator for the treatment propensity `P(T = 1 | X)` and
//! the instrument propensity `P(Z = 1 | X)`.
//!
//! Covariates are mapped affinely onto `[0, 1]` per coordinate before the
//! power expansion. The span of the basis is unchanged by that map, so the
//! fitted probabilities do not depend on it.

use crate::error::{Error, Result};
use crate::linalg::Cholesky;
use crate::scalar::{logistic, Scalar};

/// Multi-indices `lambda(1..L)` of a power series, ordered by total degree
/// and lexicographically (descending) within a degree.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PowerBasis {
    k: usize,
    exponents: Vec<Vec<u32>>,
}

impl PowerBasis {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.exponents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exponents.is_empty()
    }

    pub fn exponents(&self) -> &[Vec<u32>] {
        &self.exponents
    }

    pub fn max_degree(&self) -> u32 {
        self.exponents
            .iter()
            .map(|e| e.iter().sum())
            .max()
            .unwrap_or(0)
    }

    /// `R^L(u)` for an already rescaled covariate vector.
    pub fn evaluate<S: Scalar>(&self, u: &[S]) -> Vec<S> {
        let max_deg = self.max_degree() as usize;
        // powers[j][d] = u_j^d
        let powers: Vec<Vec<S>> = u
            .iter()
            .map(|&v| {
                let mut p = Vec::with_capacity(max_deg + 1);
                let mut acc = S::one();
                for _ in 0..=max_deg {
                    p.push(acc);
                    acc = acc * v;
                }
                p
            })
            .collect();
        self.exponents
            .iter()
            .map(|e| {
                e.iter()
                    .enumerate()
                    .fold(S::one(), |acc, (j, &d)| acc * powers[j][d as usize])
            })
            .collect()
    }
}

/// All multi-indices in `k` variables with total degree at most
/// `max_total_degree`; `L = C(k + d, d)`.
pub fn build_power_basis(k: usize, max_total_degree: u32) -> PowerBasis {
    fn compositions(total: u32, parts: usize, prefix: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if parts == 1 {
            prefix.push(total);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for first in (0..=total).rev() {
            prefix.push(first);
            compositions(total - first, parts - 1, prefix, out);
            prefix.pop();
        }
    }
    let mut exponents = Vec::new();
    for degree in 0..=max_total_degree {
        if k == 0 {
            if degree == 0 {
                exponents.push(Vec::new());
            }
            continue;
        }
        compositions(degree, k, &mut Vec::with_capacity(k), &mut exponents);
    }
    PowerBasis { k, exponents }
}

/// Series degree used when none is given: 1 below 200 observations, 2 below
/// 400, 3 otherwise.
pub fn default_degree(n: usize) -> u32 {
    match n {
        0..=199 => 1,
        200..=399 => 2,
        _ => 3,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogitOptions {
    /// Newton stops once the max-norm of the coefficient update is below this.
    pub tol: f64,
    pub max_iter: usize,
    /// Predictions are clipped to `[clip_epsilon, 1 - clip_epsilon]`.
    pub clip_epsilon: f64,
}

impl Default for LogitOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 100,
            clip_epsilon: 1e-3,
        }
    }
}

/// Linear predictors beyond this magnitude mean the likelihood is being
/// driven to its supremum by diverging coefficients.
const SEPARATION_ETA: f64 = 50.0;

#[derive(Debug, Clone, PartialEq)]
pub struct LogitFit<S> {
    basis: PowerBasis,
    /// Per-coordinate `(min, 1 / range)` of the training covariates.
    scaling: Vec<(S, S)>,
    coefficients: Vec<S>,
    converged: bool,
    iterations: usize,
    clip_epsilon: S,
    mean_log_likelihood: S,
}

/// Clipped probabilities for a batch of covariate vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct Predictions<S> {
    pub values: Vec<S>,
    pub clipped: usize,
}

impl<S: Scalar> LogitFit<S> {
    pub fn basis(&self) -> &PowerBasis {
        &self.basis
    }

    /// Coefficients on the rescaled basis.
    pub fn coefficients(&self) -> &[S] {
        &self.coefficients
    }

    pub fn converged(&self) -> bool {
        self.converged
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    pub fn clip_epsilon(&self) -> S {
        self.clip_epsilon
    }

    /// Sample-average Bernoulli log-likelihood at the fitted coefficients.
    pub fn mean_log_likelihood(&self) -> S {
        self.mean_log_likelihood
    }

    /// A fit with fixed coefficients on the rescaled basis; covariates are
    /// rescaled with `scaling = (min, 1 / range)` per coordinate.
    pub fn from_parts(
        basis: PowerBasis,
        scaling: Vec<(S, S)>,
        coefficients: Vec<S>,
        clip_epsilon: S,
    ) -> Result<Self> {
        if coefficients.len() != basis.len() {
            return Err(Error::DimensionMismatch {
                expected: basis.len(),
                got: coefficients.len(),
            });
        }
        if scaling.len() != basis.k() {
            return Err(Error::DimensionMismatch {
                expected: basis.k(),
                got: scaling.len(),
            });
        }
        Ok(Self {
            basis,
            scaling,
            coefficients,
            converged: true,
            iterations: 0,
            clip_epsilon,
            mean_log_likelihood: S::nan(),
        })
    }

    /// Basis vector `R^L(x)` after the stored rescaling.
    pub fn features(&self, x: &[S]) -> Result<Vec<S>> {
        if x.len() != self.basis.k() {
            return Err(Error::DimensionMismatch {
                expected: self.basis.k(),
                got: x.len(),
            });
        }
        let u: Vec<S> = x
            .iter()
            .zip(&self.scaling)
            .map(|(&v, &(lo, inv))| (v - lo) * inv)
            .collect();
        Ok(self.basis.evaluate(&u))
    }

    pub fn linear_predictor(&self, x: &[S]) -> Result<S> {
        let r = self.features(x)?;
        Ok(dot(&r, &self.coefficients))
    }

    /// Clipped probability and whether clipping was applied.
    pub fn predict_with_flag(&self, x: &[S]) -> Result<(S, bool)> {
        let p = logistic(self.linear_predictor(x)?);
        let lo = self.clip_epsilon;
        let hi = S::one() - self.clip_epsilon;
        Ok(if p < lo {
            (lo, true)
        } else if p > hi {
            (hi, true)
        } else {
            (p, false)
        })
    }

    pub fn predict_probability(&self, x: &[S]) -> Result<S> {
        self.predict_with_flag(x).map(|(p, _)| p)
    }

    pub fn predict_many<'a, I>(&self, rows: I) -> Result<Predictions<S>>
    where
        I: IntoIterator<Item = &'a [S]>,
    {
        let mut values = Vec::new();
        let mut clipped = 0;
        for x in rows {
            let (p, c) = self.predict_with_flag(x)?;
            values.push(p);
            clipped += usize::from(c);
        }
        Ok(Predictions { values, clipped })
    }
}

#[inline]
fn dot<S: Scalar>(a: &[S], b: &[S]) -> S {
    a.iter().zip(b).fold(S::zero(), |acc, (&u, &v)| acc + u * v)
}

fn max_abs<S: Scalar>(v: &[S]) -> S {
    v.iter().fold(S::zero(), |m, &x| m.max(x.abs()))
}

#[inline]
fn softplus<S: Scalar>(a: S) -> S {
    a.max(S::zero()) + (-a.abs()).exp().ln_1p()
}

/// Sample-average log-likelihood and its gradient (the score) for a
/// logistic model on an explicit design matrix.
pub fn log_likelihood_and_score<S: Scalar>(
    design: &[Vec<S>],
    labels: &[bool],
    coefficients: &[S],
) -> (S, Vec<S>) {
    let n = S::from_count(design.len());
    let mut ll = S::zero();
    let mut score = vec![S::zero(); coefficients.len()];
    for (r, &y) in design.iter().zip(labels) {
        let eta = dot(r, coefficients);
        ll = ll - if y { softplus(-eta) } else { softplus(eta) };
        let resid = if y { S::one() } else { S::zero() } - logistic(eta);
        for (s, &rv) in score.iter_mut().zip(r) {
            *s = *s + resid * rv;
        }
    }
    (ll / n, score.into_iter().map(|s| s / n).collect())
}

/// Maximum-likelihood logit on the power basis, by Newton-Raphson with
/// step halving.
pub fn fit_series_logit<S: Scalar>(
    rows: &[&[S]],
    labels: &[bool],
    basis: &PowerBasis,
    options: &LogitOptions,
) -> Result<LogitFit<S>> {
    let n = rows.len();
    if labels.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: labels.len(),
        });
    }
    let ones = labels.iter().filter(|&&l| l).count();
    if ones == 0 || ones == n {
        return Err(Error::OneClass);
    }
    if basis.len() > n {
        return Err(Error::BasisTooLarge {
            basis: basis.len(),
            rows: n,
        });
    }
    let k = basis.k();
    if let Some(r) = rows.iter().find(|r| r.len() != k) {
        return Err(Error::DimensionMismatch {
            expected: k,
            got: r.len(),
        });
    }

    let scaling: Vec<(S, S)> = (0..k)
        .map(|j| {
            let (lo, hi) = rows
                .iter()
                .fold((S::infinity(), S::neg_infinity()), |(lo, hi), r| {
                    (lo.min(r[j]), hi.max(r[j]))
                });
            let range = hi - lo;
            (
                lo,
                if range > S::zero() {
                    S::one() / range
                } else {
                    S::one()
                },
            )
        })
        .collect();
    let mut fit = LogitFit {
        basis: basis.clone(),
        scaling,
        coefficients: vec![S::zero(); basis.len()],
        converged: false,
        iterations: 0,
        clip_epsilon: S::lit(options.clip_epsilon),
        mean_log_likelihood: S::nan(),
    };
    let design: Vec<Vec<S>> = rows
        .iter()
        .map(|r| fit.features(r))
        .collect::<Result<_>>()?;

    let dim = basis.len();
    let nf = S::from_count(n);
    let tol = S::lit(options.tol);
    let (mut ll, mut score) = log_likelihood_and_score(&design, labels, &fit.coefficients);

    for iter in 1..=options.max_iter {
        let mut info = vec![S::zero(); dim * dim];
        for r in &design {
            let p = logistic(dot(r, &fit.coefficients));
            let w = p * (S::one() - p);
            for a in 0..dim {
                let wa = w * r[a];
                for b in 0..=a {
                    info[a * dim + b] = info[a * dim + b] + wa * r[b];
                }
            }
        }
        for a in 0..dim {
            for b in 0..=a {
                let v = info[a * dim + b] / nf;
                info[a * dim + b] = v;
                info[b * dim + a] = v;
            }
        }
        let chol = Cholesky::factor_with_ridge(&info, dim, S::lit(1e-8), 3)
            .ok_or(Error::Singular("logit information matrix"))?;
        let step = chol.solve(&score);

        let mut scale = S::one();
        let mut accepted = None;
        for _ in 0..40 {
            let trial: Vec<S> = fit
                .coefficients
                .iter()
                .zip(&step)
                .map(|(&b, &d)| b + scale * d)
                .collect();
            let (trial_ll, trial_score) = log_likelihood_and_score(&design, labels, &trial);
            // Near the optimum likelihood changes drop below rounding noise;
            // a smaller score then still marks progress.
            let ascent =
                trial_ll >= ll - S::epsilon() * ll.abs() || max_abs(&trial_score) < max_abs(&score);
            if trial_ll.is_finite() && ascent {
                accepted = Some((trial, trial_ll, trial_score));
                break;
            }
            scale = scale * S::lit(0.5);
        }
        let Some((next, next_ll, next_score)) = accepted else {
            // No ascent possible from here: we are at the optimum to
            // working precision.
            fit.converged = true;
            fit.iterations = iter;
            break;
        };
        let update = step
            .iter()
            .fold(S::zero(), |m, &d| m.max((scale * d).abs()));
        fit.coefficients = next;
        ll = next_ll;
        score = next_score;
        fit.iterations = iter;

        let max_eta = design
            .iter()
            .fold(S::zero(), |m, r| m.max(dot(r, &fit.coefficients).abs()));
        if max_eta > S::lit(SEPARATION_ETA) {
            return Err(Error::Separation);
        }
        if update < tol {
            fit.converged = true;
            break;
        }
    }
    fit.mean_log_likelihood = ll;
    Ok(fit)
}
