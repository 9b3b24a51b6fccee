//! Ordering with concomitants, Kaplan-Meier weights and the multivariate
//! product-limit estimator built from them.

use num_traits::{FromPrimitive, Num};

use crate::error::{Error, Result};
use crate::sample::Dataset;
use crate::scalar::{leq_all, Scalar};

/// One treatment arm (or treatment-by-instrument cell) sorted by duration.
///
/// Within tied durations, uncensored rows come first; remaining ties keep
/// their original relative order.
#[derive(Debug, Clone, PartialEq)]
pub struct OrderedSubsample<S> {
    q: Vec<S>,
    delta: Vec<bool>,
    x: Vec<Vec<S>>,
    weights: Vec<S>,
    original_index: Vec<usize>,
}

impl<S: Scalar> OrderedSubsample<S> {
    /// Sorts the given dataset rows and attaches their Kaplan-Meier weights.
    pub fn from_rows(data: &Dataset<S>, rows: &[usize]) -> Self {
        let mut sub = order_with_concomitants(data, rows);
        sub.weights = kaplan_meier_weights(&sub.delta);
        sub
    }

    pub fn len(&self) -> usize {
        self.q.len()
    }

    pub fn is_empty(&self) -> bool {
        self.q.is_empty()
    }

    pub fn q(&self) -> &[S] {
        &self.q
    }

    pub fn delta(&self) -> &[bool] {
        &self.delta
    }

    pub fn x(&self) -> &[Vec<S>] {
        &self.x
    }

    pub fn weights(&self) -> &[S] {
        &self.weights
    }

    /// Dataset row of each sorted position.
    pub fn original_index(&self) -> &[usize] {
        &self.original_index
    }

    /// Total Kaplan-Meier mass; below one when the largest duration is censored.
    pub fn mass(&self) -> S {
        self.weights.iter().copied().sum()
    }

    /// `sum_i W_i g(q_i, x_i)`.
    pub fn km_integral<F>(&self, mut g: F) -> Result<S>
    where
        F: FnMut(S, &[S]) -> S,
    {
        let mut acc = S::zero();
        for (i, ((&q, x), &w)) in self.q.iter().zip(&self.x).zip(&self.weights).enumerate() {
            let v = g(q, x);
            if !v.is_finite() {
                return Err(Error::NonFiniteIntegrand {
                    index: i,
                    q: q.as_f64(),
                });
            }
            acc = acc + w * v;
        }
        Ok(acc)
    }

    /// Multivariate product-limit CDF `sum_i W_i 1{q_i <= y} 1{x_i <= x}`.
    pub fn product_limit_cdf(&self, y: S, x: &[S]) -> S {
        self.q
            .iter()
            .zip(&self.x)
            .zip(&self.weights)
            .filter(|((&q, xi), _)| q <= y && leq_all(xi, x))
            .map(|(_, &w)| w)
            .sum()
    }

    /// Cumulative hazard `sum_i 1{q_i <= y} 1{x_i <= x} delta_i / (m - i + 1)`.
    pub fn cumulative_hazard(&self, y: S, x: &[S]) -> S {
        let m = self.len();
        (0..m)
            .filter(|&i| self.delta[i] && self.q[i] <= y && leq_all(&self.x[i], x))
            .map(|i| S::one() / S::from_count(m - i))
            .sum()
    }
}

/// Stable sort of the selected rows by `(q ascending, delta descending)`.
/// The returned subsample has zero weights until
/// [`kaplan_meier_weights`] is applied (see [`OrderedSubsample::from_rows`]).
pub fn order_with_concomitants<S: Scalar>(
    data: &Dataset<S>,
    rows: &[usize],
) -> OrderedSubsample<S> {
    let mut order = rows.to_vec();
    order.sort_by(|&a, &b| {
        let (oa, ob) = (data.get(a), data.get(b));
        oa.q.partial_cmp(&ob.q)
            .expect("validated finite durations")
            .then(ob.delta.cmp(&oa.delta))
    });
    OrderedSubsample {
        q: order.iter().map(|&i| data.get(i).q).collect(),
        delta: order.iter().map(|&i| data.get(i).delta).collect(),
        x: order.iter().map(|&i| data.get(i).x.clone()).collect(),
        weights: vec![S::zero(); order.len()],
        original_index: order,
    }
}

/// Kaplan-Meier jump attached to each sorted observation:
/// `W_i = delta_i / (m - i + 1) * prod_{j < i} ((m - j) / (m - j + 1))^delta_j`.
///
/// Generic over any numeric field so that exact rational arithmetic can be
/// used to check it.
pub fn kaplan_meier_weights<R>(delta_sorted: &[bool]) -> Vec<R>
where
    R: Num + Clone + FromPrimitive,
{
    let m = delta_sorted.len();
    let count = |v: usize| R::from_usize(v).expect("count representable");
    // The event factors telescope, leaving W_i = C_i / m with
    // C_i = prod over censored ranks j < i of (m - j + 1) / (m - j).
    let mut censored_factor = R::one();
    let mut out = Vec::with_capacity(m);
    for (idx, &d) in delta_sorted.iter().enumerate() {
        // 1-based rank i = idx + 1, so m - i + 1 = m - idx.
        let at_risk = m - idx;
        if d {
            out.push(censored_factor.clone() / count(m));
        } else {
            out.push(R::zero());
            if at_risk > 1 {
                censored_factor = censored_factor * count(at_risk) / count(at_risk - 1);
            }
        }
    }
    out
}
