//! Estimated influence functions of the weighted processes.
//!
//! For a grid point `(y, x)` the influence of observation `i` is
//! `psi_i = eta_i + alpha(X_i) (L_i - P(L = 1 | X_i))`, where `L` is the
//! treatment label (the instrument for LDTE). The `eta` part is the
//! Kaplan-Meier (Stute) representation of each arm term, built from the
//! censoring corrections `gamma0`, `gamma1`, `gamma2`; the `alpha` part
//! accounts for estimating the propensity and uses Kaplan-Meier series
//! regressions of the arm integrands on the propensity basis.
//!
//! A low-order series logit cannot absorb `alpha`, which jumps at `x`; by
//! default `alpha` is therefore replaced by its projection on the logit
//! basis, which is what the fitted propensity actually propagates.
//!
//! Sub-distribution functions are normalized by the full sample size, so
//! the survival-type denominators are `P(cell) - H_c(w)`, the share of the
//! sample in the cell with duration strictly above `w`. Where that share is
//! zero (at the largest duration of a cell) the term is dropped and counted.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::km::OrderedSubsample;
use crate::linalg::Cholesky;
use crate::process::{ArmTerm, Integrand, ProcessKind, WeightedProcess};
use crate::sample::{Dataset, EvaluationGrid};
use crate::scalar::{leq_all, Scalar};

const GRAM_RIDGE: f64 = 1e-10;
const GRAM_RIDGE_ATTEMPTS: usize = 6;

/// Empirical sub-distributions of one arm (or cell), normalized by `n`.
#[derive(Debug, Clone)]
pub struct HFunctions<S> {
    q: Vec<S>,
    delta: Vec<bool>,
    x: Vec<Vec<S>>,
    n: usize,
}

pub fn estimate_h_functions<S: Scalar>(sub: &OrderedSubsample<S>, n: usize) -> HFunctions<S> {
    HFunctions {
        q: sub.q().to_vec(),
        delta: sub.delta().to_vec(),
        x: sub.x().to_vec(),
        n,
    }
}

impl<S: Scalar> HFunctions<S> {
    fn share(&self, count: usize) -> S {
        S::from_count(count) / S::from_count(self.n)
    }

    /// `P(cell)`, the cell's share of the sample.
    pub fn cell_share(&self) -> S {
        self.share(self.q.len())
    }

    /// `H_c(w) = (1/n) #{q_i <= w}`.
    pub fn h(&self, w: S) -> S {
        self.share(self.q.iter().filter(|&&q| q <= w).count())
    }

    /// Censored part `(1/n) #{q_i <= w, delta_i = 0}`.
    pub fn h0(&self, w: S) -> S {
        self.share(
            self.q
                .iter()
                .zip(&self.delta)
                .filter(|(&q, &d)| !d && q <= w)
                .count(),
        )
    }

    /// Uncensored joint part `(1/n) #{q_i <= w, x_i <= xbar, delta_i = 1}`.
    pub fn h11(&self, w: S, xbar: &[S]) -> S {
        self.share(
            (0..self.q.len())
                .filter(|&i| self.delta[i] && self.q[i] <= w && leq_all(&self.x[i], xbar))
                .count(),
        )
    }

    /// `P(cell) - H_c(w)`.
    fn tail(&self, w: S) -> S {
        self.share(self.q.iter().filter(|&&q| q > w).count())
    }
}

/// Product-limit form of the censoring correction,
/// `prod over censored jumps v < ybar of (1 + jump / (P(cell) - H_c(v)))`.
///
/// This is the exponential of the integrated censoring hazard with the
/// integral read as a product integral; `gamma0(q_i) / m_c` then reproduces
/// the Kaplan-Meier jump at every uncensored `q_i` exactly.
pub fn gamma0<S: Scalar>(h: &HFunctions<S>, ybar: S) -> S {
    let jump = h.share(1);
    let mut acc = S::one();
    for (&v, &d) in h.q.iter().zip(&h.delta) {
        if d || v >= ybar {
            continue;
        }
        let tail = h.tail(v);
        if tail > S::zero() {
            acc = acc * (S::one() + jump / tail);
        }
    }
    acc
}

/// `(P(cell) - H_c(ybar))^{-1} sum over uncensored w > ybar of xi(w) gamma0(w) / n`.
///
/// `xi` and `g0` are aligned with the sorted subsample.
pub fn gamma1<S: Scalar>(h: &HFunctions<S>, xi: &[S], g0: &[S], ybar: S) -> S {
    let tail = h.tail(ybar);
    if tail <= S::zero() {
        return S::zero();
    }
    upper_mass(h, xi, g0, ybar) / tail
}

/// `sum over censored v < ybar of (jump / (P(cell) - H_c(v))^2) *
///  sum over uncensored w > v of xi(w) gamma0(w) / n`.
pub fn gamma2<S: Scalar>(h: &HFunctions<S>, xi: &[S], g0: &[S], ybar: S) -> S {
    let jump = h.share(1);
    let mut acc = S::zero();
    for (&v, &d) in h.q.iter().zip(&h.delta) {
        if d || v >= ybar {
            continue;
        }
        let tail = h.tail(v);
        if tail > S::zero() {
            acc = acc + jump * upper_mass(h, xi, g0, v) / (tail * tail);
        }
    }
    acc
}

fn upper_mass<S: Scalar>(h: &HFunctions<S>, xi: &[S], g0: &[S], above: S) -> S {
    let jump = h.share(1);
    (0..h.q.len())
        .filter(|&j| h.delta[j] && h.q[j] > above)
        .map(|j| jump * xi[j] * g0[j])
        .sum()
}

/// Tie structure and `gamma0` of one sorted cell; independent of the grid.
#[derive(Debug, Clone)]
struct CellLayout<S> {
    /// First sorted position with the same duration.
    group_start: Vec<usize>,
    /// First sorted position with a strictly larger duration.
    next_greater: Vec<usize>,
    gamma0: Vec<S>,
    /// Censored observations with nothing strictly above them.
    excluded: usize,
}

impl<S: Scalar> CellLayout<S> {
    fn new(sub: &OrderedSubsample<S>) -> Self {
        let q = sub.q();
        let m = q.len();
        let mut group_start = vec![0; m];
        let mut next_greater = vec![m; m];
        let mut start = 0;
        while start < m {
            let mut end = start + 1;
            while end < m && q[end] == q[start] {
                end += 1;
            }
            for i in start..end {
                group_start[i] = start;
                next_greater[i] = end;
            }
            start = end;
        }
        // Product over censored q_j < q_i of (1 + 1 / #{q > q_j}).
        let mut gamma0 = vec![S::zero(); m];
        let mut acc = S::one();
        let mut excluded = 0;
        let mut i = 0;
        while i < m {
            let end = next_greater[i];
            for g in &mut gamma0[i..end] {
                *g = acc;
            }
            let count = m - end;
            for j in i..end {
                if !sub.delta()[j] {
                    if count > 0 {
                        acc = acc * (S::one() + S::one() / S::from_count(count));
                    } else {
                        excluded += 1;
                    }
                }
            }
            i = end;
        }
        Self {
            group_start,
            next_greater,
            gamma0,
            excluded,
        }
    }
}

/// Adds `sign * eta_{c,i}` for the cell of `term` into `out` (indexed by dataset row).
fn add_term_eta<S: Scalar>(
    term: &ArmTerm<'_, S>,
    layout: &CellLayout<S>,
    integrand: Integrand,
    y: S,
    x: &[S],
    out: &mut [S],
) {
    let sub = term.sub;
    let m = sub.len();
    let delta = sub.delta();
    let xi: Vec<S> = (0..m)
        .map(|i| {
            if leq_all(&sub.x()[i], x) {
                integrand.eval(sub.q()[i], y) * term.inv_propensity[i] + term.offset
            } else {
                S::zero()
            }
        })
        .collect();
    let mut suffix = vec![S::zero(); m + 1];
    for i in (0..m).rev() {
        let a = if delta[i] {
            layout.gamma0[i] * xi[i]
        } else {
            S::zero()
        };
        suffix[i] = suffix[i + 1] + a;
    }
    let mut gamma1 = vec![S::zero(); m];
    let mut prefix = vec![S::zero(); m + 1];
    for i in 0..m {
        let upper = suffix[layout.next_greater[i]];
        let count = m - layout.next_greater[i];
        let mut c = S::zero();
        if count > 0 {
            let cnt = S::from_count(count);
            gamma1[i] = upper / cnt;
            if !delta[i] {
                c = upper / (cnt * cnt);
            }
        }
        prefix[i + 1] = prefix[i] + c;
    }
    for i in 0..m {
        let gamma2 = prefix[layout.group_start[i]];
        let eta = if delta[i] {
            xi[i] * layout.gamma0[i]
        } else {
            gamma1[i]
        } - gamma2;
        let row = sub.original_index()[i];
        out[row] = out[row] + term.sign * eta;
    }
}

/// `eta_i(y, x)` for every dataset row.
pub fn eta_column<S: Scalar>(process: &WeightedProcess<'_, S>, y: S, x: &[S]) -> Vec<S> {
    let layouts: Vec<_> = process
        .terms
        .iter()
        .map(|t| CellLayout::new(t.sub))
        .collect();
    eta_with_layouts(process, &layouts, y, x)
}

fn eta_with_layouts<S: Scalar>(
    process: &WeightedProcess<'_, S>,
    layouts: &[CellLayout<S>],
    y: S,
    x: &[S],
) -> Vec<S> {
    let y = process.effective_y(y);
    let mut out = vec![S::zero(); process.n];
    for (term, layout) in process.terms.iter().zip(layouts) {
        add_term_eta(term, layout, process.integrand, y, x, &mut out);
    }
    out
}

/// Full-sample pieces shared by the series regressions: the basis at every
/// row, the factored Gram matrix, the fitted label probabilities and labels.
#[derive(Debug, Clone)]
pub struct SeriesContext<S> {
    features: Vec<Vec<S>>,
    gram: Cholesky<S>,
    /// `(1/n) sum p (1 - p) R R^T`, the logit information matrix.
    information: Cholesky<S>,
    propensity: Vec<S>,
    labels: Vec<bool>,
    x: Vec<Vec<S>>,
}

impl<S: Scalar> SeriesContext<S> {
    /// `labels` are the treatment labels, or the instrument for LDTE.
    pub fn new(
        data: &Dataset<S>,
        fit: &crate::propensity::LogitFit<S>,
        labels: Vec<bool>,
    ) -> Result<Self> {
        let n = data.len();
        if labels.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: labels.len(),
            });
        }
        let features = data
            .observations()
            .iter()
            .map(|o| fit.features(&o.x))
            .collect::<Result<Vec<_>>>()?;
        let l = fit.basis().len();
        let mut g = vec![S::zero(); l * l];
        for r in &features {
            for a in 0..l {
                for b in 0..l {
                    g[a * l + b] = g[a * l + b] + r[a] * r[b];
                }
            }
        }
        let nn = S::from_count(n);
        for v in &mut g {
            *v = *v / nn;
        }
        let gram = Cholesky::factor_with_ridge(&g, l, S::lit(GRAM_RIDGE), GRAM_RIDGE_ATTEMPTS)
            .ok_or(Error::Singular("series Gram matrix"))?;
        let propensity = data
            .observations()
            .iter()
            .map(|o| fit.predict_probability(&o.x))
            .collect::<Result<Vec<_>>>()?;
        let mut h = vec![S::zero(); l * l];
        for (r, &p) in features.iter().zip(&propensity) {
            let v = p * (S::one() - p) / nn;
            for a in 0..l {
                for b in 0..l {
                    h[a * l + b] = h[a * l + b] + v * r[a] * r[b];
                }
            }
        }
        let information =
            Cholesky::factor_with_ridge(&h, l, S::lit(GRAM_RIDGE), GRAM_RIDGE_ATTEMPTS)
                .ok_or(Error::Singular("logit information matrix"))?;
        Ok(Self {
            features,
            gram,
            information,
            propensity,
            labels,
            x: data.observations().iter().map(|o| o.x.clone()).collect(),
        })
    }

    /// Ridge added to the Gram diagonal (zero when it was well conditioned).
    pub fn gram_ridge(&self) -> S {
        self.gram.ridge
    }

    pub fn propensity(&self) -> &[S] {
        &self.propensity
    }

    pub fn labels(&self) -> &[bool] {
        &self.labels
    }
}

/// Coefficients of the series projection of
/// `(m_c / n) sum_i W_i g(q_i; y) / pi_c(X_i) R(X_i)`.
fn series_coefficients<S: Scalar>(
    term: &ArmTerm<'_, S>,
    ctx: &SeriesContext<S>,
    integrand: Integrand,
    y: S,
) -> Vec<S> {
    let sub = term.sub;
    let l = ctx.gram.dim();
    let mut b = vec![S::zero(); l];
    for i in 0..sub.len() {
        let w = sub.weights()[i];
        if w == S::zero() {
            continue;
        }
        let v = w * integrand.eval(sub.q()[i], y) * term.inv_propensity[i];
        if v == S::zero() {
            continue;
        }
        let r = &ctx.features[sub.original_index()[i]];
        for (bk, &rk) in b.iter_mut().zip(r) {
            *bk = *bk + v * rk;
        }
    }
    for bk in &mut b {
        *bk = *bk * term.mass;
    }
    ctx.gram.solve(&b)
}

fn clamp_cdf<S: Scalar>(integrand: Integrand, v: S) -> (S, bool) {
    if integrand != Integrand::Indicator {
        return (v, false);
    }
    if v < S::zero() {
        (S::zero(), true)
    } else if v > S::one() {
        (S::one(), true)
    } else {
        (v, false)
    }
}

/// Kaplan-Meier series estimate of `E[g(Y(c); y) | X = x_query]` for the
/// cell of `term`; distribution-type integrands are clamped to `[0, 1]`.
pub fn km_series_cdf<S: Scalar>(
    term: &ArmTerm<'_, S>,
    ctx: &SeriesContext<S>,
    fit: &crate::propensity::LogitFit<S>,
    integrand: Integrand,
    y: S,
    x_query: &[S],
) -> Result<S> {
    let coef = series_coefficients(term, ctx, integrand, y);
    let r = fit.features(x_query)?;
    let v = r.iter().zip(&coef).map(|(&a, &b)| a * b).sum();
    Ok(clamp_cdf(integrand, v).0)
}

/// One cell's contribution to `alpha`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlphaPart<S> {
    /// Sign of the cell's term in the process.
    pub sign: S,
    /// Whether the cell divides by `P(L = 1 | X)` rather than its complement.
    pub label_one: bool,
    /// Series estimate of the cell integrand's conditional mean at `X_i`.
    pub cdf: S,
}

/// `alpha(X_i; y, x) = -sum_c sign_c dir_c F_c(X_i) / pi_c(X_i) 1{X_i <= x}`,
/// with `dir_c = +1` for cells weighted by `1 / p` and `-1` for `1 / (1 - p)`.
pub fn alpha_hat<S: Scalar>(parts: &[AlphaPart<S>], p: S, x_i: &[S], x: &[S]) -> S {
    if !leq_all(x_i, x) {
        return S::zero();
    }
    parts
        .iter()
        .map(|a| {
            let (pi, dir) = if a.label_one {
                (p, S::one())
            } else {
                (S::one() - p, -S::one())
            };
            -a.sign * dir * a.cdf / pi
        })
        .sum()
}

/// `alpha(X_k; y, x)` for every row, with the number of clamped series values.
pub fn alpha_column<S: Scalar>(
    process: &WeightedProcess<'_, S>,
    ctx: &SeriesContext<S>,
    y: S,
    x: &[S],
) -> (Vec<S>, usize) {
    let y = process.effective_y(y);
    let coefs: Vec<Vec<S>> = process
        .terms
        .iter()
        .map(|t| series_coefficients(t, ctx, process.integrand, y))
        .collect();
    let mut clamped = 0;
    let mut parts: Vec<AlphaPart<S>> = process
        .terms
        .iter()
        .map(|t| AlphaPart {
            sign: t.sign,
            label_one: t.label_one,
            cdf: S::zero(),
        })
        .collect();
    let out = (0..ctx.features.len())
        .map(|k| {
            if !leq_all(&ctx.x[k], x) {
                return S::zero();
            }
            for (part, coef) in parts.iter_mut().zip(&coefs) {
                let v = ctx.features[k].iter().zip(coef).map(|(&a, &b)| a * b).sum();
                let (v, c) = clamp_cdf(process.integrand, v);
                clamped += usize::from(c);
                part.cdf = v;
            }
            alpha_hat(&parts, ctx.propensity[k], &ctx.x[k], x)
        })
        .collect();
    (out, clamped)
}

/// Weighted least-squares projection of `alpha` on the logit basis:
/// `R(X)^T I^{-1} (1/n) sum_k alpha_k p_k (1 - p_k) R_k`.
pub fn project_alpha<S: Scalar>(ctx: &SeriesContext<S>, alpha: &[S]) -> Vec<S> {
    let l = ctx.information.dim();
    let nn = S::from_count(alpha.len());
    let mut rhs = vec![S::zero(); l];
    for ((r, &p), &a) in ctx.features.iter().zip(&ctx.propensity).zip(alpha) {
        if a == S::zero() {
            continue;
        }
        let v = a * p * (S::one() - p) / nn;
        for (t, &rk) in rhs.iter_mut().zip(r) {
            *t = *t + v * rk;
        }
    }
    let c = ctx.information.solve(&rhs);
    ctx.features
        .iter()
        .map(|r| r.iter().zip(&c).map(|(&a, &b)| a * b).sum())
        .collect()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct InfluenceDiagnostics {
    /// Series conditional-CDF values clamped into `[0, 1]`.
    pub clamped: usize,
    /// Censored observations at a cell maximum whose correction terms were dropped.
    pub excluded: usize,
}

/// `psi`, stored row-major as `n x n_grid`.
#[derive(Debug, Clone, PartialEq)]
pub struct InfluenceMatrix<S> {
    n: usize,
    n_grid: usize,
    psi: Vec<S>,
    kind: ProcessKind,
    diagnostics: InfluenceDiagnostics,
}

impl<S: Scalar> InfluenceMatrix<S> {
    /// Wraps a row-major `n x n_grid` matrix.
    pub fn from_rows(n: usize, n_grid: usize, psi: Vec<S>, kind: ProcessKind) -> Result<Self> {
        if psi.len() != n * n_grid {
            return Err(Error::DimensionMismatch {
                expected: n * n_grid,
                got: psi.len(),
            });
        }
        if let Some(i) = psi.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidData(format!(
                "non-finite influence value at row {}, column {}",
                i / n_grid.max(1),
                i % n_grid.max(1)
            )));
        }
        Ok(Self {
            n,
            n_grid,
            psi,
            kind,
            diagnostics: InfluenceDiagnostics::default(),
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn n_grid(&self) -> usize {
        self.n_grid
    }

    pub fn kind(&self) -> ProcessKind {
        self.kind
    }

    pub fn diagnostics(&self) -> InfluenceDiagnostics {
        self.diagnostics
    }

    pub fn get(&self, i: usize, j: usize) -> S {
        self.psi[i * self.n_grid + j]
    }

    pub fn row(&self, i: usize) -> &[S] {
        &self.psi[i * self.n_grid..(i + 1) * self.n_grid]
    }

    pub fn column(&self, j: usize) -> Vec<S> {
        (0..self.n).map(|i| self.get(i, j)).collect()
    }

    /// `(1/n) psi^T v`.
    pub fn weighted_mean(&self, v: &[S]) -> Vec<S> {
        let mut acc = vec![S::zero(); self.n_grid];
        for (i, &vi) in v.iter().enumerate().take(self.n) {
            if vi == S::zero() {
                continue;
            }
            for (a, &p) in acc.iter_mut().zip(self.row(i)) {
                *a = *a + p * vi;
            }
        }
        let nn = S::from_count(self.n);
        acc.into_iter().map(|a| a / nn).collect()
    }
}

/// Labels that multiply `alpha`: the instrument for LDTE, the treatment otherwise.
pub fn process_labels<S: Scalar>(kind: ProcessKind, data: &Dataset<S>) -> Result<Vec<bool>> {
    if kind == ProcessKind::Ldte {
        data.instrument_labels().ok_or(Error::InstrumentRequired)
    } else {
        Ok(data.treatment_labels())
    }
}

/// How the propensity-estimation term `alpha (L - p)` enters `psi`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PropensityCorrection {
    /// `alpha` projected on the logit basis with weights `p (1 - p)`: the
    /// exact first-order effect of the fitted series logit.
    #[default]
    Projected,
    /// `alpha` as is, the limit of the projection as the basis grows.
    Pointwise,
}

impl std::str::FromStr for PropensityCorrection {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "projected" => Ok(Self::Projected),
            "pointwise" => Ok(Self::Pointwise),
            other => Err(Error::Config(format!(
                "unknown propensity correction `{other}`"
            ))),
        }
    }
}

/// Materializes `psi` over the grid, one column per grid point in parallel.
///
/// For the homogeneity process the estimated ATE inside the integrand adds
/// `-G(x) (psi_ate - ate)`, where `G(x) = sum_c (m_c / n) sum_i W_i 1{X_i <= x}`.
pub fn influence_matrix<S: Scalar>(
    process: &WeightedProcess<'_, S>,
    data: &Dataset<S>,
    grid: &EvaluationGrid<S>,
    correction: PropensityCorrection,
) -> Result<InfluenceMatrix<S>> {
    let n = process.n;
    if data.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: data.len(),
        });
    }
    let ctx = SeriesContext::new(data, process.fit, process_labels(process.kind, data)?)?;
    let layouts: Vec<_> = process
        .terms
        .iter()
        .map(|t| CellLayout::new(t.sub))
        .collect();
    let excluded = layouts.iter().map(|l| l.excluded).sum();

    let column = |proc_: &WeightedProcess<'_, S>, y: S, x: &[S]| -> (Vec<S>, usize) {
        let mut col = eta_with_layouts(proc_, &layouts, y, x);
        let (mut alpha, clamped) = alpha_column(proc_, &ctx, y, x);
        if correction == PropensityCorrection::Projected {
            alpha = project_alpha(&ctx, &alpha);
        }
        for (k, c) in col.iter_mut().enumerate() {
            let l = if ctx.labels[k] { S::one() } else { S::zero() };
            *c = *c + alpha[k] * (l - ctx.propensity[k]);
        }
        (col, clamped)
    };

    let ate_psi = if process.kind == ProcessKind::Hom {
        let mut cate = process.clone();
        cate.kind = ProcessKind::Cate;
        for t in &mut cate.terms {
            t.offset = S::zero();
        }
        let inf = vec![S::infinity(); data.k()];
        let ate = process
            .ate
            .unwrap_or_else(|| cate.value_at(process.tau_bar, &inf));
        let mut col = column(&cate, process.tau_bar, &inf).0;
        for c in &mut col {
            *c = *c - ate;
        }
        Some(col)
    } else {
        None
    };

    let columns: Vec<(Vec<S>, usize)> = grid
        .points()
        .par_iter()
        .map(|p| {
            let (mut col, clamped) = column(process, p.y, &p.x);
            if let Some(ate) = &ate_psi {
                let g: S = process
                    .terms
                    .iter()
                    .map(|t| t.mass * t.sub.product_limit_cdf(S::infinity(), &p.x))
                    .sum();
                for (c, &a) in col.iter_mut().zip(ate) {
                    *c = *c - g * a;
                }
            }
            (col, clamped)
        })
        .collect();

    let n_grid = grid.len();
    let mut psi = vec![S::zero(); n * n_grid];
    let mut clamped = 0;
    for (j, (col, c)) in columns.into_iter().enumerate() {
        clamped += c;
        for (i, v) in col.into_iter().enumerate() {
            psi[i * n_grid + j] = v;
        }
    }
    let mut m = InfluenceMatrix::from_rows(n, n_grid, psi, process.kind)?;
    m.diagnostics = InfluenceDiagnostics { clamped, excluded };
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::process::Arms;
    use crate::propensity::{build_power_basis, LogitFit};
    use crate::sample::{default_grid, GridMode, Observation};

    fn obs(q: f64, delta: bool, treated: bool, x: f64) -> Observation<f64> {
        Observation {
            q,
            delta,
            treated,
            x: vec![x],
            z: None,
        }
    }

    fn constant_fit(logit: f64) -> LogitFit<f64> {
        LogitFit::from_parts(build_power_basis(1, 0), vec![(0.0, 1.0)], vec![logit], 1e-3).unwrap()
    }

    #[test]
    fn h_functions_examples() {
        let d = Dataset::new(vec![obs(1.0, true, true, 0.0), obs(2.0, true, true, 0.0)]).unwrap();
        let sub = OrderedSubsample::from_rows(&d, &[0, 1]);
        let h = estimate_h_functions(&sub, 2);
        assert_eq!(h.h(1.0), 0.5);
        assert_eq!(h.h(2.0), 1.0);
        assert_eq!(h.h0(5.0), 0.0);
        assert_eq!(h.h11(1.5, &[0.0]), 0.5);

        let d = Dataset::new(vec![
            obs(1.0, false, false, 0.0),
            obs(3.0, false, false, 0.0),
        ])
        .unwrap();
        let sub = OrderedSubsample::from_rows(&d, &[0, 1]);
        let h = estimate_h_functions(&sub, 2);
        for w in [0.0, 1.0, 2.0, 3.0] {
            assert_eq!(h.h0(w), h.h(w));
        }
    }

    #[test]
    fn gamma0_hand_value() {
        // arm q = 1 (censored), 2, 3; n = 3: tail at 1 is 2/3, jump 1/3
        let d = Dataset::new(vec![
            obs(1.0, false, true, 0.0),
            obs(2.0, true, true, 0.0),
            obs(3.0, true, true, 0.0),
        ])
        .unwrap();
        let sub = OrderedSubsample::from_rows(&d, &[0, 1, 2]);
        let h = estimate_h_functions(&sub, 3);
        assert_eq!(gamma0(&h, 1.0), 1.0);
        assert_eq!(gamma0(&h, 2.0), 1.5);
        assert_eq!(gamma0(&h, 0.5), 1.0);
    }

    #[test]
    fn gammas_vanish_without_censoring() {
        let d = Dataset::new(vec![
            obs(1.0, true, true, 0.0),
            obs(2.0, true, true, 0.0),
            obs(3.0, true, true, 0.0),
        ])
        .unwrap();
        let sub = OrderedSubsample::from_rows(&d, &[0, 1, 2]);
        let h = estimate_h_functions(&sub, 3);
        let xi = [1.0, 2.0, 3.0];
        let g0 = [1.0; 3];
        for y in [0.0, 1.0, 2.5, 9.0] {
            assert_eq!(gamma0(&h, y), 1.0);
            assert_eq!(gamma2(&h, &xi, &g0, y), 0.0);
        }
        assert_eq!(gamma1(&h, &xi, &g0, 9.0), 0.0);
    }

    #[test]
    fn alpha_examples() {
        let parts = [
            AlphaPart {
                sign: 1.0,
                label_one: true,
                cdf: 0.5,
            },
            AlphaPart {
                sign: -1.0,
                label_one: false,
                cdf: 0.5,
            },
        ];
        assert_eq!(alpha_hat(&parts, 0.5, &[0.2], &[1.0]), -2.0);
        assert_eq!(alpha_hat(&parts, 0.5, &[2.0], &[1.0]), 0.0);
    }

    #[test]
    fn degree_zero_series_is_arm_cdf() {
        let d = Dataset::new(vec![
            obs(1.0, true, true, 0.1),
            obs(2.0, true, true, 0.4),
            obs(1.5, true, false, 0.3),
            obs(0.5, true, false, 0.9),
            obs(3.0, true, false, 0.7),
        ])
        .unwrap();
        let arms = Arms::from_dataset(&d).unwrap();
        let fit = constant_fit((2.0f64 / 3.0).ln());
        let p = WeightedProcess::dte(&arms.treated, &arms.control, &fit, 5).unwrap();
        let ctx = SeriesContext::new(&d, &fit, d.treatment_labels()).unwrap();
        let f1 = km_series_cdf(&p.terms[0], &ctx, &fit, Integrand::Indicator, 1.2, &[0.5]).unwrap();
        let f0 = km_series_cdf(&p.terms[1], &ctx, &fit, Integrand::Indicator, 1.6, &[0.0]).unwrap();
        assert!((f1 - 0.5).abs() < 1e-12);
        assert!((f0 - 2.0 / 3.0).abs() < 1e-12);
        let below = km_series_cdf(&p.terms[0], &ctx, &fit, Integrand::Indicator, 0.1, &[0.5]);
        assert_eq!(below.unwrap(), 0.0);
    }

    #[test]
    fn uncensored_eta_is_xi_difference() {
        let d = Dataset::new(vec![
            obs(1.0, true, true, 0.1),
            obs(2.0, true, true, 0.4),
            obs(1.5, true, false, 0.3),
            obs(0.5, true, false, 0.9),
        ])
        .unwrap();
        let arms = Arms::from_dataset(&d).unwrap();
        let fit = constant_fit(0.2);
        let p = WeightedProcess::dte(&arms.treated, &arms.control, &fit, 4).unwrap();
        let eta = eta_column(&p, 1.5, &[0.5]);
        let pr = fit.predict_probability(&[0.0]).unwrap();
        let expected = [1.0 / pr, 0.0, -1.0 / (1.0 - pr), 0.0];
        for (a, b) in eta.iter().zip(expected) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn censored_max_is_excluded_and_counted() {
        let d = Dataset::new(vec![
            obs(1.0, true, true, 0.1),
            obs(2.0, false, true, 0.4),
            obs(1.5, true, false, 0.3),
            obs(0.5, true, false, 0.9),
        ])
        .unwrap();
        let arms = Arms::from_dataset(&d).unwrap();
        let fit = constant_fit(0.0);
        let p = WeightedProcess::dte(&arms.treated, &arms.control, &fit, 4).unwrap();
        let grid = default_grid(&d, f64::INFINITY, GridMode::SamplePairs).unwrap();
        let psi = influence_matrix(&p, &d, &grid, PropensityCorrection::Projected).unwrap();
        assert_eq!(psi.diagnostics().excluded, 1);
        assert_eq!(psi.n(), 4);
        assert_eq!(psi.n_grid(), 4);
    }
}
