//! Monte Carlo designs and rejection-rate studies.
//!
//! In every design `X ~ U[0, 1]`, `P(T = 1 | X) = logistic(-0.5 X)` and the
//! errors are standard normal:
//!
//! | design | `Y(0)`          | `Y(1)`           |
//! |--------|-----------------|------------------|
//! | i      | `1 + X + e0`    | `1 + X + e1`     |
//! | ii     | `1 + X + e0`    | `2 + X + e1`     |
//! | iii    | `1 + X + e1`    | `1 + 3X + e1`    |
//!
//! Design iii uses the same error in both potential outcomes. Censoring is
//! `C = a + b Exp(1)` with `a = 0` and `b` calibrated to the target share.

use std::collections::BTreeMap;
use std::io::Write;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bootstrap::{MultiplierLaw, StatisticKind};
use crate::error::{Error, Result};
use crate::pipeline::{run_test, StatSelection, TestConfig};
use crate::process::ProcessKind;
use crate::sample::{Dataset, GridMode, Observation};
use crate::scalar::logistic;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum DesignId {
    #[serde(rename = "i")]
    I,
    #[serde(rename = "ii")]
    II,
    #[serde(rename = "iii")]
    III,
}

impl DesignId {
    pub fn as_str(self) -> &'static str {
        match self {
            DesignId::I => "i",
            DesignId::II => "ii",
            DesignId::III => "iii",
        }
    }

    /// Potential outcomes `(Y(0), Y(1))` given the covariate and both errors.
    pub fn outcomes(self, x: f64, e0: f64, e1: f64) -> (f64, f64) {
        match self {
            DesignId::I => (1.0 + x + e0, 1.0 + x + e1),
            DesignId::II => (1.0 + x + e0, 2.0 + x + e1),
            DesignId::III => (1.0 + x + e1, 1.0 + 3.0 * x + e1),
        }
    }
}

impl std::str::FromStr for DesignId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "i" => Ok(DesignId::I),
            "ii" => Ok(DesignId::II),
            "iii" => Ok(DesignId::III),
            other => Err(Error::Config(format!("unknown design `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DesignSpec {
    pub design: DesignId,
    pub n: usize,
    /// Target censoring percentage; 0 means no censoring at all.
    pub censor_pct: f64,
    /// `(a, b)` of `C = a + b Exp(1)`; `None` exactly when uncensored.
    pub censor_params: Option<(f64, f64)>,
    pub seed: u64,
}

/// Propensity of the designs.
pub fn design_propensity(x: f64) -> f64 {
    logistic(-0.5 * x)
}

/// Draws `(x, t, y)` with a fixed number of generator calls per row.
fn draw_outcome<R: Rng>(design: DesignId, rng: &mut R) -> (f64, bool, f64) {
    let x: f64 = rng.random();
    let u: f64 = rng.random();
    let e0: f64 = StandardNormal.sample(rng);
    let e1: f64 = StandardNormal.sample(rng);
    let t = u < design_propensity(x);
    let (y0, y1) = design.outcomes(x, e0, e1);
    (x, t, if t { y1 } else { y0 })
}

pub fn generate_design(spec: &DesignSpec) -> Result<Dataset<f64>> {
    if spec.n == 0 {
        return Err(Error::Config("n must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let obs = (0..spec.n)
        .map(|_| {
            let (x, treated, y) = draw_outcome(spec.design, &mut rng);
            let c_draw: f64 = Exp1.sample(&mut rng);
            let (q, delta) = match spec.censor_params {
                None => (y, true),
                Some((a, b)) => {
                    let c = a + b * c_draw;
                    (y.min(c), y <= c)
                }
            };
            Observation {
                q,
                delta,
                treated,
                x: vec![x],
                z: None,
            }
        })
        .collect();
    Dataset::new(obs)
}

/// Draws used to calibrate and to check the censoring share.
pub const CALIBRATION_DRAWS: usize = 1_000_000;
const CALIBRATION_SEED: u64 = 0x6b6d_7465_6361_6c31;
const CHECK_SEED: u64 = 0x6b6d_7465_6368_6b32;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CensoringCalibration {
    pub a: f64,
    pub b: f64,
    /// Target share in percent.
    pub target_pct: f64,
    /// Share achieved on the calibration draws, in percent.
    pub fitted_pct: f64,
    /// Share achieved on independent draws, in percent.
    pub check_pct: f64,
}

/// `(Y, Exp(1))` pairs: a draw is censored iff `Y > a + b E`.
fn censoring_pairs(design: DesignId, draws: usize, seed: u64) -> Vec<(f64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..draws)
        .map(|_| {
            let (_, _, y) = draw_outcome(design, &mut rng);
            let e: f64 = Exp1.sample(&mut rng);
            (y, e)
        })
        .collect()
}

fn censored_pct(pairs: &[(f64, f64)], a: f64, b: f64) -> f64 {
    let hits = pairs.iter().filter(|&&(y, e)| y > a + b * e).count();
    100.0 * hits as f64 / pairs.len() as f64
}

/// Simulated share of `Y > a + b Exp(1)`, in percent.
pub fn censoring_share(design: DesignId, a: f64, b: f64, draws: usize, seed: u64) -> f64 {
    censored_pct(&censoring_pairs(design, draws, seed), a, b)
}

/// Fixes `a = 0` and bisects on `log b` with common random numbers, so the
/// censoring time is exponential and spread over the whole outcome range.
pub fn calibrate_censoring(design: DesignId, target_pct: f64) -> Result<CensoringCalibration> {
    if !(target_pct > 0.0 && target_pct < 100.0) {
        return Err(Error::Calibration(format!(
            "target {target_pct}% is not strictly between 0 and 100"
        )));
    }
    let pairs = censoring_pairs(design, CALIBRATION_DRAWS, CALIBRATION_SEED);
    let (mut lo, mut hi) = (1e-3f64.ln(), 1e4f64.ln());
    let pct = |log_b: f64| censored_pct(&pairs, 0.0, log_b.exp());
    if !(pct(lo) > target_pct && pct(hi) < target_pct) {
        return Err(Error::Calibration(format!(
            "scales [{}, {}] do not bracket {target_pct}%",
            lo.exp(),
            hi.exp()
        )));
    }
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if pct(mid) > target_pct {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let b = (0.5 * (lo + hi)).exp();
    Ok(CensoringCalibration {
        a: 0.0,
        b,
        target_pct,
        fitted_pct: censored_pct(&pairs, 0.0, b),
        check_pct: censoring_share(design, 0.0, b, CALIBRATION_DRAWS, CHECK_SEED),
    })
}

/// One test of a study: a process and the functionals to record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StudyTest {
    pub kind: ProcessKind,
    pub stat: StatSelection,
}

impl std::str::FromStr for StudyTest {
    type Err = Error;

    /// `dte`, `dte-ks`, `hom-cvm`, ...
    fn from_str(s: &str) -> Result<Self> {
        let (kind, stat) = match s.split_once('-') {
            Some((k, st)) => (k.parse()?, st.parse()?),
            None => (s.parse()?, StatSelection::Both),
        };
        if kind == ProcessKind::Ldte {
            return Err(Error::Config(
                "the simulation designs have no instrument; ldte cannot be studied".into(),
            ));
        }
        Ok(Self { kind, stat })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyConfig {
    pub designs: Vec<DesignId>,
    pub ns: Vec<usize>,
    pub censoring: Vec<f64>,
    pub tests: Vec<StudyTest>,
    pub r: usize,
    pub b: usize,
    pub alpha: f64,
    pub seed: u64,
    pub law: MultiplierLaw,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RejectionRow {
    pub design: DesignId,
    pub censoring: f64,
    pub n: usize,
    pub test: ProcessKind,
    pub statistic_type: StatisticKind,
    /// Share of completed replications with `p <= alpha`.
    pub rate: f64,
    /// Binomial standard error of `rate`.
    pub se: f64,
    #[serde(rename = "R")]
    pub r: usize,
    #[serde(rename = "B")]
    pub b: usize,
    pub seed: u64,
    /// Replications where estimation failed; excluded from `rate`.
    pub failed: usize,
}

/// Seeds for the data and the bootstrap of replication `rep`.
pub fn replication_seeds(master: u64, rep: usize) -> (u64, u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(rep as u64);
    (rng.next_u64(), rng.next_u64())
}

/// Rejection decisions of one replication: per test, per functional.
type RepOutcome = Option<Vec<Vec<bool>>>;

pub fn rejection_study(config: &StudyConfig) -> Result<Vec<RejectionRow>> {
    if config.r == 0 {
        return Err(Error::Config("R must be at least 1".into()));
    }
    if config.b == 0 {
        return Err(Error::Config("B must be at least 1".into()));
    }
    if config.tests.is_empty() {
        return Err(Error::Config("no tests requested".into()));
    }
    let mut calibrations: BTreeMap<(DesignId, u64), (f64, f64)> = BTreeMap::new();
    for &d in &config.designs {
        for &c in &config.censoring {
            if c != 0.0 {
                let cal = calibrate_censoring(d, c)?;
                calibrations.insert((d, c.to_bits()), (cal.a, cal.b));
            }
        }
    }

    let mut rows = Vec::new();
    for &design in &config.designs {
        for &censoring in &config.censoring {
            for &n in &config.ns {
                let params = calibrations.get(&(design, censoring.to_bits())).copied();
                let outcomes: Vec<RepOutcome> = (0..config.r)
                    .into_par_iter()
                    .map(|rep| run_replication(config, design, censoring, params, n, rep))
                    .collect();
                let failed = outcomes.iter().filter(|o| o.is_none()).count();
                let done: Vec<&Vec<Vec<bool>>> = outcomes.iter().flatten().collect();
                for (ti, test) in config.tests.iter().enumerate() {
                    for (si, &stat) in test.stat.kinds().iter().enumerate() {
                        let hits = done.iter().filter(|o| o[ti][si]).count();
                        let m = done.len();
                        let rate = if m > 0 {
                            hits as f64 / m as f64
                        } else {
                            f64::NAN
                        };
                        rows.push(RejectionRow {
                            design,
                            censoring,
                            n,
                            test: test.kind,
                            statistic_type: stat,
                            rate,
                            se: (rate * (1.0 - rate) / m as f64).sqrt(),
                            r: config.r,
                            b: config.b,
                            seed: config.seed,
                            failed,
                        });
                    }
                }
            }
        }
    }
    Ok(rows)
}

fn run_replication(
    config: &StudyConfig,
    design: DesignId,
    censoring: f64,
    censor_params: Option<(f64, f64)>,
    n: usize,
    rep: usize,
) -> RepOutcome {
    let (data_seed, boot_seed) = replication_seeds(config.seed, rep);
    let spec = DesignSpec {
        design,
        n,
        censor_pct: censoring,
        censor_params,
        seed: data_seed,
    };
    let data = generate_design(&spec).ok()?;
    config
        .tests
        .iter()
        .map(|test| {
            let tc = TestConfig {
                kind: test.kind,
                stat: test.stat,
                b: config.b,
                alpha: config.alpha,
                seed: boot_seed,
                grid: GridMode::SamplePairs,
                law: config.law,
                ..TestConfig::default()
            };
            let out = run_test(&data, &tc).ok()?;
            Some(
                out.results
                    .iter()
                    .map(|(_, r)| r.p_value <= config.alpha)
                    .collect(),
            )
        })
        .collect()
}

pub fn write_rejection_csv<W: Write>(rows: &[RejectionRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::Io {
        path: "<rejection table>".into(),
        source: e,
    })?;
    Ok(())
}

pub fn write_rejection_json<W: Write>(rows: &[RejectionRow], writer: W) -> Result<()> {
    serde_json::to_writer_pretty(writer, rows)
        .map_err(|e| Error::InvalidData(format!("serializing rejection table: {e}")))
}
