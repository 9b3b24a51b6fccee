//! Kaplan-Meier weighted inverse-propensity processes and their KS / CvM
//! functionals.
//!
//! Every process here is a signed sum of terms
//! `sign * (m_c / n) * sum_i W_i (g(q_i; y) / pi_c(x_i) + offset_c) 1{x_i <= x}`
//! over arms (or treatment-by-instrument cells) `c`, where `g` is either
//! `1{q <= y}` (distribution effects) or `q 1{q <= tau_bar}` (mean effects)
//! and `pi_c` is the fitted propensity of the cell's label value.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::km::OrderedSubsample;
use crate::propensity::LogitFit;
use crate::sample::{split_by_arm, split_by_arm_instrument, Dataset, EvaluationGrid, GridMode};
use crate::scalar::{leq_all, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProcessKind {
    /// Zero conditional distribution treatment effect.
    Dte,
    /// Zero restricted conditional average treatment effect.
    Cate,
    /// Homogeneous restricted conditional average treatment effect.
    Hom,
    /// Zero local (complier) conditional distribution treatment effect.
    Ldte,
}

impl ProcessKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ProcessKind::Dte => "dte",
            ProcessKind::Cate => "cate",
            ProcessKind::Hom => "hom",
            ProcessKind::Ldte => "ldte",
        }
    }

    /// Whether the process is indexed by covariates only.
    pub fn covariate_only(self) -> bool {
        matches!(self, ProcessKind::Cate | ProcessKind::Hom)
    }
}

impl std::str::FromStr for ProcessKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dte" => Ok(ProcessKind::Dte),
            "cate" => Ok(ProcessKind::Cate),
            "hom" => Ok(ProcessKind::Hom),
            "ldte" => Ok(ProcessKind::Ldte),
            other => Err(Error::Config(format!("unknown test kind `{other}`"))),
        }
    }
}

/// The duration part `g(q; y)` of the integrand.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Integrand {
    /// `1{q <= y}`
    Indicator,
    /// `q 1{q <= y}`, with `y` the truncation point.
    TruncatedMean,
}

impl Integrand {
    #[inline]
    pub fn eval<S: Scalar>(self, q: S, y: S) -> S {
        if q > y {
            return S::zero();
        }
        match self {
            Integrand::Indicator => S::one(),
            Integrand::TruncatedMean => q,
        }
    }
}

/// Treatment arms sorted with Kaplan-Meier weights.
#[derive(Debug, Clone)]
pub struct Arms<S> {
    pub treated: OrderedSubsample<S>,
    pub control: OrderedSubsample<S>,
}

impl<S: Scalar> Arms<S> {
    pub fn from_dataset(data: &Dataset<S>) -> Result<Self> {
        let split = split_by_arm(data)?;
        Ok(Self {
            treated: OrderedSubsample::from_rows(data, &split.treated),
            control: OrderedSubsample::from_rows(data, &split.control),
        })
    }
}

/// The four treatment-by-instrument cells, each with its own weights.
#[derive(Debug, Clone)]
pub struct InstrumentCells<S> {
    /// `cells[t][z]`
    cells: [[OrderedSubsample<S>; 2]; 2],
}

impl<S: Scalar> InstrumentCells<S> {
    pub fn from_dataset(data: &Dataset<S>) -> Result<Self> {
        let split = split_by_arm_instrument(data)?;
        let sub = |t, z| OrderedSubsample::from_rows(data, split.cell(t, z));
        Ok(Self {
            cells: [
                [sub(false, false), sub(false, true)],
                [sub(true, false), sub(true, true)],
            ],
        })
    }

    /// Cells given directly; every cell must be nonempty.
    pub fn new(cells: [[OrderedSubsample<S>; 2]; 2]) -> Result<Self> {
        for (t, row) in cells.iter().enumerate() {
            for (z, c) in row.iter().enumerate() {
                if c.is_empty() {
                    return Err(Error::DegenerateInstrument(format!(
                        "cell (t={t}, z={z}) is empty"
                    )));
                }
            }
        }
        Ok(Self { cells })
    }

    /// Cells given directly, empty ones allowed. An empty cell contributes
    /// nothing; with `Z = T` this reduces the LDTE process to the DTE process.
    /// Datasets always go through [`InstrumentCells::from_dataset`], which
    /// rejects empty cells.
    pub fn with_empty_cells(cells: [[OrderedSubsample<S>; 2]; 2]) -> Self {
        Self { cells }
    }

    pub fn cell(&self, t: bool, z: bool) -> &OrderedSubsample<S> {
        &self.cells[usize::from(t)][usize::from(z)]
    }

    pub fn sizes(&self) -> [[usize; 2]; 2] {
        [
            [self.cells[0][0].len(), self.cells[0][1].len()],
            [self.cells[1][0].len(), self.cells[1][1].len()],
        ]
    }
}

/// One signed, Kaplan-Meier weighted, inverse-propensity term.
#[derive(Debug, Clone)]
pub struct ArmTerm<'a, S> {
    pub sub: &'a OrderedSubsample<S>,
    /// `+1` or `-1`.
    pub sign: S,
    /// `m_c / n`.
    pub mass: S,
    /// `true` when the term divides by `P(L = 1 | X)`, `false` for `1 - P(L = 1 | X)`.
    pub label_one: bool,
    /// `1 / pi_c(x_i)` at each sorted row.
    pub inv_propensity: Vec<S>,
    /// Constant added to `g / pi_c` (the homogeneity recentering).
    pub offset: S,
}

impl<'a, S: Scalar> ArmTerm<'a, S> {
    fn new(
        sub: &'a OrderedSubsample<S>,
        sign: S,
        label_one: bool,
        fit: &LogitFit<S>,
        n: usize,
    ) -> Result<Self> {
        let inv_propensity = sub
            .x()
            .iter()
            .map(|x| {
                let p = fit.predict_probability(x)?;
                Ok(S::one() / if label_one { p } else { S::one() - p })
            })
            .collect::<Result<Vec<S>>>()?;
        Ok(Self {
            sub,
            sign,
            mass: S::from_count(sub.len()) / S::from_count(n),
            label_one,
            inv_propensity,
            offset: S::zero(),
        })
    }

    /// `(m_c / n) sum_i W_i (g / pi_c + offset) 1{x_i <= x}` without the sign.
    pub fn value_at(&self, integrand: Integrand, y: S, x: &[S]) -> S {
        let sub = self.sub;
        let mut acc = S::zero();
        for i in 0..sub.len() {
            let w = sub.weights()[i];
            if w == S::zero() || !leq_all(&sub.x()[i], x) {
                continue;
            }
            acc = acc + w * (integrand.eval(sub.q()[i], y) * self.inv_propensity[i] + self.offset);
        }
        self.mass * acc
    }
}

/// A process assembled from its arm terms and the propensity fit it uses.
#[derive(Debug, Clone)]
pub struct WeightedProcess<'a, S> {
    pub kind: ProcessKind,
    pub integrand: Integrand,
    pub terms: Vec<ArmTerm<'a, S>>,
    pub fit: &'a LogitFit<S>,
    /// Total sample size.
    pub n: usize,
    /// Truncation point; the `y` used by the mean-type processes.
    pub tau_bar: S,
    /// Restricted ATE used to recenter the homogeneity process.
    pub ate: Option<S>,
}

impl<'a, S: Scalar> WeightedProcess<'a, S> {
    fn two_arm(
        kind: ProcessKind,
        integrand: Integrand,
        treated: &'a OrderedSubsample<S>,
        control: &'a OrderedSubsample<S>,
        fit: &'a LogitFit<S>,
        tau_bar: S,
        n: usize,
    ) -> Result<Self> {
        check_sizes(n, treated.len() + control.len())?;
        Ok(Self {
            kind,
            integrand,
            terms: vec![
                ArmTerm::new(treated, S::one(), true, fit, n)?,
                ArmTerm::new(control, -S::one(), false, fit, n)?,
            ],
            fit,
            n,
            tau_bar,
            ate: None,
        })
    }

    pub fn dte(
        treated: &'a OrderedSubsample<S>,
        control: &'a OrderedSubsample<S>,
        fit: &'a LogitFit<S>,
        n: usize,
    ) -> Result<Self> {
        Self::two_arm(
            ProcessKind::Dte,
            Integrand::Indicator,
            treated,
            control,
            fit,
            S::infinity(),
            n,
        )
    }

    pub fn cate(
        treated: &'a OrderedSubsample<S>,
        control: &'a OrderedSubsample<S>,
        fit: &'a LogitFit<S>,
        tau_bar: S,
        n: usize,
    ) -> Result<Self> {
        Self::two_arm(
            ProcessKind::Cate,
            Integrand::TruncatedMean,
            treated,
            control,
            fit,
            tau_bar,
            n,
        )
    }

    pub fn hom(
        treated: &'a OrderedSubsample<S>,
        control: &'a OrderedSubsample<S>,
        fit: &'a LogitFit<S>,
        tau_bar: S,
        n: usize,
    ) -> Result<Self> {
        let mut p = Self::two_arm(
            ProcessKind::Hom,
            Integrand::TruncatedMean,
            treated,
            control,
            fit,
            tau_bar,
            n,
        )?;
        let ate = p.raw_value(tau_bar, &vec![S::infinity(); fit.basis().k()]);
        // Treated term subtracts the ATE, control term adds it back:
        // (2t - 1) * ate inside each arm's integrand.
        p.terms[0].offset = -ate;
        p.terms[1].offset = ate;
        p.ate = Some(ate);
        Ok(p)
    }

    /// Uses the instrument propensity `qfit = P(Z = 1 | X)`.
    pub fn ldte(cells: &'a InstrumentCells<S>, qfit: &'a LogitFit<S>, n: usize) -> Result<Self> {
        let sizes = cells.sizes();
        check_sizes(n, sizes.iter().flatten().sum())?;
        let one = S::one();
        Ok(Self {
            kind: ProcessKind::Ldte,
            integrand: Integrand::Indicator,
            terms: vec![
                ArmTerm::new(cells.cell(true, true), one, true, qfit, n)?,
                ArmTerm::new(cells.cell(true, false), -one, false, qfit, n)?,
                ArmTerm::new(cells.cell(false, false), -one, false, qfit, n)?,
                ArmTerm::new(cells.cell(false, true), one, true, qfit, n)?,
            ],
            fit: qfit,
            n,
            tau_bar: S::infinity(),
            ate: None,
        })
    }

    fn raw_value(&self, y: S, x: &[S]) -> S {
        self.terms
            .iter()
            .map(|t| t.sign * t.value_at(self.integrand, y, x))
            .sum()
    }

    /// The `y` actually used at a grid point: mean-type processes always
    /// integrate up to the truncation point.
    #[inline]
    pub fn effective_y(&self, y: S) -> S {
        if self.kind.covariate_only() {
            self.tau_bar
        } else {
            y
        }
    }

    pub fn value_at(&self, y: S, x: &[S]) -> S {
        self.raw_value(self.effective_y(y), x)
    }

    pub fn evaluate(&self, grid: &EvaluationGrid<S>) -> ProcessValues<S> {
        let values = grid
            .points()
            .iter()
            .map(|p| self.value_at(p.y, &p.x))
            .collect();
        ProcessValues {
            grid: grid.clone(),
            values,
            kind: self.kind,
            tau_bar: if self.kind.covariate_only() {
                self.tau_bar
            } else {
                grid.tau_bar()
            },
        }
    }
}

fn check_sizes(n: usize, total: usize) -> Result<()> {
    if n != total {
        return Err(Error::InvalidData(format!(
            "subsample sizes sum to {total} but n = {n}"
        )));
    }
    Ok(())
}

/// Process values aligned with the grid points.
#[derive(Debug, Clone, PartialEq)]
pub struct ProcessValues<S> {
    pub grid: EvaluationGrid<S>,
    pub values: Vec<S>,
    pub kind: ProcessKind,
    pub tau_bar: S,
}

pub fn dte_process<S: Scalar>(
    treated: &OrderedSubsample<S>,
    control: &OrderedSubsample<S>,
    fit: &LogitFit<S>,
    grid: &EvaluationGrid<S>,
    n: usize,
) -> Result<ProcessValues<S>> {
    Ok(WeightedProcess::dte(treated, control, fit, n)?.evaluate(grid))
}

/// Evaluated at the covariates of `x_grid`; the grid's `y` values are ignored.
pub fn cate_process<S: Scalar>(
    treated: &OrderedSubsample<S>,
    control: &OrderedSubsample<S>,
    fit: &LogitFit<S>,
    x_grid: &EvaluationGrid<S>,
    tau_bar: S,
    n: usize,
) -> Result<ProcessValues<S>> {
    Ok(WeightedProcess::cate(treated, control, fit, tau_bar, n)?.evaluate(x_grid))
}

/// Restricted average treatment effect `E[Y(1) 1{Y(1) <= tau}] - E[Y(0) 1{Y(0) <= tau}]`.
pub fn ate_point<S: Scalar>(
    treated: &OrderedSubsample<S>,
    control: &OrderedSubsample<S>,
    fit: &LogitFit<S>,
    tau_bar: S,
    n: usize,
) -> Result<S> {
    let p = WeightedProcess::cate(treated, control, fit, tau_bar, n)?;
    Ok(p.value_at(tau_bar, &vec![S::infinity(); fit.basis().k()]))
}

pub fn hom_process<S: Scalar>(
    treated: &OrderedSubsample<S>,
    control: &OrderedSubsample<S>,
    fit: &LogitFit<S>,
    x_grid: &EvaluationGrid<S>,
    tau_bar: S,
    n: usize,
) -> Result<ProcessValues<S>> {
    Ok(WeightedProcess::hom(treated, control, fit, tau_bar, n)?.evaluate(x_grid))
}

pub fn ldte_process<S: Scalar>(
    cells: &InstrumentCells<S>,
    qfit: &LogitFit<S>,
    grid: &EvaluationGrid<S>,
    n: usize,
) -> Result<ProcessValues<S>> {
    Ok(WeightedProcess::ldte(cells, qfit, n)?.evaluate(grid))
}

/// `sqrt(n) * max |value|` over the supplied grid.
pub fn ks_statistic<S: Scalar>(p: &ProcessValues<S>, n: usize) -> S {
    ks_functional(&p.values, n)
}

/// `n * mean(value^2)`: integration of the squared process against the
/// empirical measure carried by a sample-pairs grid.
pub fn cvm_statistic<S: Scalar>(p: &ProcessValues<S>, n: usize) -> Result<S> {
    if p.grid.mode() != GridMode::SamplePairs {
        return Err(Error::CvmOnProductGrid);
    }
    Ok(cvm_functional(&p.values, n))
}

#[inline]
pub(crate) fn ks_functional<S: Scalar>(values: &[S], n: usize) -> S {
    let sup = values.iter().fold(S::zero(), |m, v| m.max(v.abs()));
    S::from_count(n).sqrt() * sup
}

#[inline]
pub(crate) fn cvm_functional<S: Scalar>(values: &[S], n: usize) -> S {
    let ss: S = values.iter().map(|&v| v * v).sum();
    S::from_count(n) * ss / S::from_count(values.len())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::propensity::build_power_basis;
    use crate::sample::{covariate_grid, default_grid, GridPoint, Observation};

    fn constant_fit(k: usize, logit: f64) -> LogitFit<f64> {
        LogitFit::from_parts(
            build_power_basis(k, 0),
            vec![(0.0, 1.0); k],
            vec![logit],
            1e-3,
        )
        .unwrap()
    }

    fn obs(q: f64, delta: bool, treated: bool, x: f64) -> Observation<f64> {
        Observation {
            q,
            delta,
            treated,
            x: vec![x],
            z: None,
        }
    }

    fn values(kind: ProcessKind, v: Vec<f64>, mode: GridMode) -> ProcessValues<f64> {
        let points = v
            .iter()
            .map(|_| GridPoint {
                y: 0.0,
                x: vec![0.0],
            })
            .collect();
        ProcessValues {
            grid: EvaluationGrid::new(points, f64::INFINITY, mode).unwrap(),
            values: v,
            kind,
            tau_bar: f64::INFINITY,
        }
    }

    #[test]
    fn identical_pair_cancels() {
        let d = Dataset::new(vec![obs(1.0, true, true, 0.3), obs(1.0, true, false, 0.3)]).unwrap();
        let arms = Arms::from_dataset(&d).unwrap();
        let fit = constant_fit(1, 0.0);
        let grid = default_grid(&d, f64::INFINITY, GridMode::FullProduct).unwrap();
        let p = dte_process(&arms.treated, &arms.control, &fit, &grid, 2).unwrap();
        assert!(p.values.iter().all(|&v| v == 0.0));
        let xg = covariate_grid(&d, f64::INFINITY, GridMode::SamplePairs).unwrap();
        let c = cate_process(&arms.treated, &arms.control, &fit, &xg, f64::INFINITY, 2).unwrap();
        assert!(c.values.iter().all(|&v| v == 0.0));
        assert_eq!(
            ate_point(&arms.treated, &arms.control, &fit, f64::INFINITY, 2).unwrap(),
            0.0
        );
    }

    #[test]
    fn one_sided_mass() {
        let d = Dataset::new(vec![
            obs(5.0, true, true, 0.0),
            obs(1.0, true, false, 0.0),
            obs(2.0, true, false, 0.0),
        ])
        .unwrap();
        let arms = Arms::from_dataset(&d).unwrap();
        let fit = constant_fit(1, 0.0);
        let p = WeightedProcess::dte(&arms.treated, &arms.control, &fit, 3).unwrap();
        // treated mass above y = 3: only the control term (2/3 * 1 / 0.5) remains
        let v = p.value_at(3.0, &[1.0]);
        assert!((v + 2.0 / 3.0 * 2.0).abs() < 1e-15);
    }

    #[test]
    fn cate_truncation_below_all_is_zero() {
        let d = Dataset::new(vec![
            obs(5.0, true, true, 0.0),
            obs(1.0, true, false, 0.0),
            obs(2.0, false, true, 0.5),
        ])
        .unwrap();
        let arms = Arms::from_dataset(&d).unwrap();
        let fit = constant_fit(1, 0.3);
        let xg = covariate_grid(&d, 0.5, GridMode::SamplePairs).unwrap();
        let c = cate_process(&arms.treated, &arms.control, &fit, &xg, 0.5, 3).unwrap();
        assert!(c.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn ate_truncation_noop_beyond_max() {
        let d = Dataset::new(vec![
            obs(5.0, true, true, 0.0),
            obs(1.0, true, false, 0.2),
            obs(2.0, false, true, 0.5),
            obs(3.0, true, false, 0.9),
        ])
        .unwrap();
        let arms = Arms::from_dataset(&d).unwrap();
        let fit = constant_fit(1, 0.3);
        let a = ate_point(&arms.treated, &arms.control, &fit, f64::INFINITY, 4).unwrap();
        let b = ate_point(&arms.treated, &arms.control, &fit, 6.0, 4).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn ks_and_cvm_examples() {
        let z = values(ProcessKind::Dte, vec![0.0; 4], GridMode::SamplePairs);
        assert_eq!(ks_statistic(&z, 10), 0.0);
        assert_eq!(cvm_statistic(&z, 10).unwrap(), 0.0);
        let v = values(ProcessKind::Dte, vec![0.1, -0.3], GridMode::SamplePairs);
        assert!((ks_statistic(&v, 100) - 3.0).abs() < 1e-12);
        let v = values(ProcessKind::Dte, vec![1.0, -1.0], GridMode::SamplePairs);
        assert_eq!(cvm_statistic(&v, 2).unwrap(), 2.0);
        let c = values(ProcessKind::Dte, vec![0.25; 5], GridMode::SamplePairs);
        assert!((cvm_statistic(&c, 40).unwrap() - 40.0 * 0.0625).abs() < 1e-12);
        let fp = values(ProcessKind::Dte, vec![0.25; 5], GridMode::FullProduct);
        assert!(matches!(
            cvm_statistic(&fp, 40),
            Err(Error::CvmOnProductGrid)
        ));
    }

    #[test]
    fn ks_invariant_to_order_and_sign() {
        let a = values(
            ProcessKind::Dte,
            vec![0.1, -0.5, 0.2],
            GridMode::SamplePairs,
        );
        let b = values(
            ProcessKind::Dte,
            vec![0.2, 0.1, -0.5],
            GridMode::SamplePairs,
        );
        let c = values(
            ProcessKind::Dte,
            vec![-0.1, 0.5, -0.2],
            GridMode::SamplePairs,
        );
        assert_eq!(ks_statistic(&a, 9), ks_statistic(&b, 9));
        assert_eq!(ks_statistic(&a, 9), ks_statistic(&c, 9));
        let d = cvm_statistic(&a, 9).unwrap() - cvm_statistic(&b, 9).unwrap();
        assert!(d.abs() < 1e-14);
    }

    #[test]
    fn ldte_mirror_cells_cancel() {
        let mk = |t: bool, z: bool, q: f64| Observation {
            z: Some(z),
            ..obs(q, true, t, 0.5)
        };
        let mut rows = Vec::new();
        for &(t, z) in &[(true, true), (true, false), (false, true), (false, false)] {
            rows.push(mk(t, z, 1.0));
            rows.push(mk(t, z, 2.0));
        }
        let d = Dataset::new(rows).unwrap();
        let cells = InstrumentCells::from_dataset(&d).unwrap();
        let qfit = constant_fit(1, 0.0);
        let grid = default_grid(&d, f64::INFINITY, GridMode::SamplePairs).unwrap();
        let p = ldte_process(&cells, &qfit, &grid, 8).unwrap();
        assert!(p.values.iter().all(|v| v.abs() < 1e-15));
    }
}
