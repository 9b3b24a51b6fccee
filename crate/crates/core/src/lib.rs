//! Nonparametric tests for treatment effect heterogeneity when the outcome
//! is a right-censored duration.
//!
//! Each test compares Kaplan-Meier weighted, inverse-propensity weighted
//! sums across treatment arms (or treatment-by-instrument cells) over a grid
//! of `(duration, covariate)` points, summarizes the resulting process with a
//! Kolmogorov-Smirnov or Cramer-von Mises functional and calibrates it with a
//! multiplier bootstrap built on estimated influence functions.
//!
//! Numerical code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix the common double-precision instances. Kaplan-Meier weights are
//! generic over any numeric field, so they can also be computed exactly with
//! rational arithmetic.
//!
//! ```
//! use kmte::{run_test, simulate, ProcessKind, TestConfig, TestReport};
//!
//! let data = simulate::generate_design(&simulate::DesignSpec {
//!     design: simulate::DesignId::II,
//!     n: 120,
//!     censor_pct: 0.0,
//!     censor_params: None,
//!     seed: 1,
//! })
//! .unwrap();
//! let config = TestConfig { kind: ProcessKind::Dte, b: 99, seed: 7, ..TestConfig::default() };
//! let report = TestReport::from_outcome(&run_test(&data, &config).unwrap());
//! assert!(report.statistics.iter().all(|s| (0.0..=1.0).contains(&s.p_value)));
//! ```

pub mod bootstrap;
pub mod error;
pub mod influence;
pub mod km;
pub mod linalg;
pub mod pipeline;
pub mod process;
pub mod propensity;
pub mod report;
pub mod sample;
pub mod scalar;
pub mod simulate;

pub use bootstrap::{
    bootstrap_replicates, bootstrap_test, critical_value, multiplier_draw, multiplier_stream,
    p_value, MultiplierLaw, Replicates, StatisticKind,
};
pub use error::{Error, Result};
pub use influence::{
    alpha_hat, estimate_h_functions, eta_column, gamma0, gamma1, gamma2, influence_matrix,
    km_series_cdf, project_alpha, AlphaPart, InfluenceDiagnostics, PropensityCorrection,
    SeriesContext,
};
pub use km::{kaplan_meier_weights, order_with_concomitants};
pub use pipeline::{run_test, StatSelection, TestConfig};
pub use process::{
    ate_point, cate_process, cvm_statistic, dte_process, hom_process, ks_statistic, ldte_process,
    ArmTerm, Arms, InstrumentCells, Integrand, ProcessKind,
};
pub use propensity::{
    build_power_basis, default_degree, fit_series_logit, LogitOptions, PowerBasis,
};
pub use report::{TestReport, SCHEMA_VERSION};
pub use sample::{
    covariate_grid, default_grid, load_csv, read_csv, split_by_arm, split_by_arm_instrument,
    write_csv, ArmSplit, CellSplit, ColumnMap, GridMode, GridPoint,
};
pub use scalar::Scalar;

pub type Observation = sample::Observation<f64>;
pub type Dataset = sample::Dataset<f64>;
pub type EvaluationGrid = sample::EvaluationGrid<f64>;
pub type OrderedSubsample = km::OrderedSubsample<f64>;
pub type LogitFit = propensity::LogitFit<f64>;
pub type ProcessValues = process::ProcessValues<f64>;
pub type WeightedProcess<'a> = process::WeightedProcess<'a, f64>;
pub type HFunctions = influence::HFunctions<f64>;
pub type InfluenceMatrix = influence::InfluenceMatrix<f64>;
pub type BootstrapResult = bootstrap::BootstrapResult<f64>;
pub type TestOutcome = pipeline::TestOutcome<f64>;

/// Single-precision instances.
pub mod f32 {
    pub type Observation = crate::sample::Observation<f32>;
    pub type Dataset = crate::sample::Dataset<f32>;
    pub type OrderedSubsample = crate::km::OrderedSubsample<f32>;
    pub type LogitFit = crate::propensity::LogitFit<f32>;
    pub type InfluenceMatrix = crate::influence::InfluenceMatrix<f32>;
    pub type TestOutcome = crate::pipeline::TestOutcome<f32>;
}
