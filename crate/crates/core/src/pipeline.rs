//! End-to-end test: propensity fit, Kaplan-Meier arms, process, influence
//! matrix and multiplier bootstrap.

use serde::{Deserialize, Serialize};

use crate::bootstrap::{
    bootstrap_replicates, summarize, BootstrapResult, MultiplierLaw, StatisticKind,
};
use crate::error::{Error, Result};
use crate::influence::{influence_matrix, InfluenceDiagnostics, PropensityCorrection};
use crate::process::{
    cvm_statistic, ks_statistic, Arms, InstrumentCells, ProcessKind, WeightedProcess,
};
use crate::propensity::{
    build_power_basis, default_degree, fit_series_logit, LogitFit, LogitOptions,
};
use crate::sample::{covariate_grid, default_grid, Dataset, EvaluationGrid, GridMode};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StatSelection {
    Ks,
    Cvm,
    #[default]
    Both,
}

impl StatSelection {
    pub fn kinds(self) -> &'static [StatisticKind] {
        match self {
            StatSelection::Ks => &[StatisticKind::Ks],
            StatSelection::Cvm => &[StatisticKind::Cvm],
            StatSelection::Both => &[StatisticKind::Ks, StatisticKind::Cvm],
        }
    }
}

impl std::str::FromStr for StatSelection {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ks" => Ok(Self::Ks),
            "cvm" => Ok(Self::Cvm),
            "both" => Ok(Self::Both),
            other => Err(Error::Config(format!("unknown statistic `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TestConfig {
    pub kind: ProcessKind,
    pub stat: StatSelection,
    /// Truncation point; `f64::INFINITY` for none.
    pub tau_bar: f64,
    /// Series degree; chosen from the sample size when `None`.
    pub degree: Option<u32>,
    pub b: usize,
    pub alpha: f64,
    pub seed: u64,
    pub grid: GridMode,
    pub law: MultiplierLaw,
    pub logit: LogitOptions,
    /// Use `(1 + #) / (B + 1)` p-values.
    pub smoothed_p: bool,
    pub correction: PropensityCorrection,
}

impl Default for TestConfig {
    fn default() -> Self {
        Self {
            kind: ProcessKind::Dte,
            stat: StatSelection::Both,
            tau_bar: f64::INFINITY,
            degree: None,
            b: 1000,
            alpha: 0.05,
            seed: 0,
            grid: GridMode::SamplePairs,
            law: MultiplierLaw::Mammen,
            logit: LogitOptions::default(),
            smoothed_p: false,
            correction: PropensityCorrection::Projected,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PropensityDiagnostics {
    pub degree: u32,
    pub basis_size: usize,
    pub converged: bool,
    pub iterations: usize,
    /// Sample rows whose fitted probability was clipped.
    pub clipped: usize,
}

/// Sample sizes of the arms, or of the `(t, z)` cells for LDTE.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sizes {
    Arms { treated: usize, control: usize },
    Cells([[usize; 2]; 2]),
}

#[derive(Debug, Clone)]
pub struct TestOutcome<S> {
    pub kind: ProcessKind,
    pub n: usize,
    pub sizes: Sizes,
    pub tau_bar: f64,
    pub propensity: PropensityDiagnostics,
    /// Kaplan-Meier mass of each term, in process order.
    pub km_mass: Vec<S>,
    pub grid_mode: GridMode,
    pub grid_size: usize,
    pub influence: InfluenceDiagnostics,
    pub ate: Option<S>,
    pub results: Vec<(StatisticKind, BootstrapResult<S>)>,
    pub alpha: f64,
    pub law: MultiplierLaw,
    pub correction: PropensityCorrection,
}

fn fit_labels<S: Scalar>(
    data: &Dataset<S>,
    labels: &[bool],
    degree: u32,
    options: &LogitOptions,
) -> Result<(LogitFit<S>, PropensityDiagnostics)> {
    let basis = build_power_basis(data.k(), degree);
    let rows = data.covariates();
    let fit = fit_series_logit(&rows, labels, &basis, options)?;
    let clipped = fit.predict_many(rows.iter().copied())?.clipped;
    let diag = PropensityDiagnostics {
        degree,
        basis_size: basis.len(),
        converged: fit.converged(),
        iterations: fit.iterations(),
        clipped,
    };
    Ok((fit, diag))
}

fn validate(config: &TestConfig) -> Result<()> {
    if config.b == 0 {
        return Err(Error::Config("B must be at least 1".into()));
    }
    if !(config.alpha > 0.0 && config.alpha < 1.0) {
        return Err(Error::Config(format!(
            "alpha = {} is not in (0, 1)",
            config.alpha
        )));
    }
    if config.tau_bar.is_nan() {
        return Err(Error::Config("tau_bar is NaN".into()));
    }
    if config.grid == GridMode::FullProduct && config.stat != StatSelection::Ks {
        return Err(Error::CvmOnProductGrid);
    }
    Ok(())
}

pub fn run_test<S: Scalar>(data: &Dataset<S>, config: &TestConfig) -> Result<TestOutcome<S>> {
    validate(config)?;
    let n = data.len();
    let degree = config.degree.unwrap_or_else(|| default_degree(n));
    let tau_bar = S::lit(config.tau_bar);

    let arms;
    let cells;
    let (label_vec, sizes) = if config.kind == ProcessKind::Ldte {
        let z = data.instrument_labels().ok_or(Error::InstrumentRequired)?;
        cells = Some(InstrumentCells::from_dataset(data)?);
        arms = None;
        (z, Sizes::Cells(cells.as_ref().expect("set above").sizes()))
    } else {
        let a = Arms::from_dataset(data)?;
        let sizes = Sizes::Arms {
            treated: a.treated.len(),
            control: a.control.len(),
        };
        arms = Some(a);
        cells = None;
        (data.treatment_labels(), sizes)
    };
    let (fit, propensity) = fit_labels(data, &label_vec, degree, &config.logit)?;

    let process = match (config.kind, &arms, &cells) {
        (ProcessKind::Dte, Some(a), _) => WeightedProcess::dte(&a.treated, &a.control, &fit, n)?,
        (ProcessKind::Cate, Some(a), _) => {
            WeightedProcess::cate(&a.treated, &a.control, &fit, tau_bar, n)?
        }
        (ProcessKind::Hom, Some(a), _) => {
            WeightedProcess::hom(&a.treated, &a.control, &fit, tau_bar, n)?
        }
        (ProcessKind::Ldte, _, Some(c)) => WeightedProcess::ldte(c, &fit, n)?,
        _ => unreachable!("subsamples built for the requested kind"),
    };
    let grid: EvaluationGrid<S> = if config.kind.covariate_only() {
        covariate_grid(data, tau_bar, config.grid)?
    } else {
        default_grid(data, tau_bar, config.grid)?
    };
    let values = process.evaluate(&grid);
    let psi = influence_matrix(&process, data, &grid, config.correction)?;
    let reps = bootstrap_replicates(&psi, config.b, config.law, config.seed);

    let mut results = Vec::new();
    for &kind in config.stat.kinds() {
        let statistic = match kind {
            StatisticKind::Ks => ks_statistic(&values, n),
            StatisticKind::Cvm => cvm_statistic(&values, n)?,
        };
        let r = summarize(
            statistic,
            reps.get(kind).to_vec(),
            config.alpha,
            config.seed,
            config.smoothed_p,
        );
        results.push((kind, r));
    }

    Ok(TestOutcome {
        kind: config.kind,
        n,
        sizes,
        tau_bar: config.tau_bar,
        propensity,
        km_mass: process.terms.iter().map(|t| t.sub.mass()).collect(),
        grid_mode: grid.mode(),
        grid_size: grid.len(),
        influence: psi.diagnostics(),
        ate: process.ate,
        results,
        alpha: config.alpha,
        law: config.law,
        correction: config.correction,
    })
}
