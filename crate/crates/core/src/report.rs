//! Machine-readable report of one test run.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::bootstrap::{critical_value, MultiplierLaw, StatisticKind};
use crate::influence::PropensityCorrection;
use crate::pipeline::{Sizes, TestOutcome};
use crate::process::ProcessKind;
use crate::sample::GridMode;
use crate::scalar::Scalar;

/// Bumped whenever a field is renamed, removed or changes meaning.
pub const SCHEMA_VERSION: u32 = 1;

/// Levels at which critical values are always reported.
pub const REPORT_LEVELS: [f64; 3] = [0.01, 0.05, 0.10];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatisticReport {
    pub statistic_type: StatisticKind,
    pub statistic: f64,
    pub p_value: f64,
    /// Keyed by level, e.g. `"0.05"`.
    pub critical_values: BTreeMap<String, f64>,
    /// `p_value <= alpha`.
    pub reject: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropensityReport {
    pub label: String,
    pub degree: u32,
    pub basis_size: usize,
    pub converged: bool,
    pub iterations: usize,
    pub clipped: usize,
    pub correction: PropensityCorrection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridReport {
    pub mode: GridMode,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfluenceReport {
    pub clamped_cdf_values: usize,
    pub excluded_points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub schema_version: u32,
    pub test: ProcessKind,
    pub statistics: Vec<StatisticReport>,
    #[serde(rename = "B")]
    pub b: usize,
    pub seed: u64,
    pub alpha: f64,
    pub multiplier: MultiplierLaw,
    pub n: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub n1: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub n0: Option<usize>,
    /// Cell sizes keyed `n00`, `n01`, `n10`, `n11` (treatment, instrument).
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub n_tz: Option<BTreeMap<String, usize>>,
    /// `null` when there is no truncation.
    pub tau_bar: Option<f64>,
    pub propensity: PropensityReport,
    /// Total Kaplan-Meier mass per arm or cell.
    pub km_mass: BTreeMap<String, f64>,
    /// Restricted ATE used to recenter the homogeneity process.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub ate: Option<f64>,
    pub grid: GridReport,
    pub influence: InfluenceReport,
}

impl TestReport {
    pub fn from_outcome<S: Scalar>(o: &TestOutcome<S>) -> Self {
        let statistics = o
            .results
            .iter()
            .map(|(kind, r)| {
                let reps: Vec<f64> = r.replicates.iter().map(|v| v.as_f64()).collect();
                let critical_values = REPORT_LEVELS
                    .iter()
                    .map(|&a| (format!("{a:.2}"), critical_value(&reps, a)))
                    .collect();
                StatisticReport {
                    statistic_type: *kind,
                    statistic: r.statistic.as_f64(),
                    p_value: r.p_value.as_f64(),
                    critical_values,
                    reject: r.p_value.as_f64() <= o.alpha,
                }
            })
            .collect();
        let (b, seed) = o
            .results
            .first()
            .map(|(_, r)| (r.b, r.seed))
            .unwrap_or((0, 0));

        let (n1, n0, n_tz, mass_keys): (_, _, _, Vec<&str>) = match o.sizes {
            Sizes::Arms { treated, control } => (
                Some(treated),
                Some(control),
                None,
                vec!["treated", "control"],
            ),
            Sizes::Cells(c) => {
                let mut m = BTreeMap::new();
                for (t, row) in c.iter().enumerate() {
                    for (z, &v) in row.iter().enumerate() {
                        m.insert(format!("n{t}{z}"), v);
                    }
                }
                // Process term order for LDTE: (1,1), (1,0), (0,0), (0,1).
                (None, None, Some(m), vec!["t1z1", "t1z0", "t0z0", "t0z1"])
            }
        };
        let km_mass = mass_keys
            .into_iter()
            .zip(&o.km_mass)
            .map(|(k, v)| (k.to_string(), v.as_f64()))
            .collect();

        TestReport {
            schema_version: SCHEMA_VERSION,
            test: o.kind,
            statistics,
            b,
            seed,
            alpha: o.alpha,
            multiplier: o.law,
            n: o.n,
            n1,
            n0,
            n_tz,
            tau_bar: o.tau_bar.is_finite().then_some(o.tau_bar),
            propensity: PropensityReport {
                label: if o.kind == ProcessKind::Ldte {
                    "instrument".into()
                } else {
                    "treatment".into()
                },
                degree: o.propensity.degree,
                basis_size: o.propensity.basis_size,
                converged: o.propensity.converged,
                iterations: o.propensity.iterations,
                clipped: o.propensity.clipped,
                correction: o.correction,
            },
            km_mass,
            ate: o.ate.map(|a| a.as_f64()),
            grid: GridReport {
                mode: o.grid_mode,
                size: o.grid_size,
            },
            influence: InfluenceReport {
                clamped_cdf_values: o.influence.clamped,
                excluded_points: o.influence.excluded,
            },
        }
    }
}
