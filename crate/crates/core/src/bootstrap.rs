//! Multiplier bootstrap over a materialized influence matrix.
//!
//! Replicate `b` draws `V` from the ChaCha8 stream `b` of the given seed, so
//! the replicates do not depend on how many worker threads compute them.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::influence::InfluenceMatrix;
use crate::process::{cvm_functional, ks_functional};
use crate::sample::GridMode;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MultiplierLaw {
    /// Two-point golden-ratio law with mean 0, variance 1 and third moment 1.
    #[default]
    Mammen,
    Rademacher,
}

impl std::str::FromStr for MultiplierLaw {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mammen" => Ok(Self::Mammen),
            "rademacher" => Ok(Self::Rademacher),
            other => Err(Error::Config(format!("unknown multiplier law `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StatisticKind {
    Ks,
    Cvm,
}

impl StatisticKind {
    pub fn as_str(self) -> &'static str {
        match self {
            StatisticKind::Ks => "ks",
            StatisticKind::Cvm => "cvm",
        }
    }
}

/// The golden ratio `(sqrt 5 + 1) / 2`.
pub fn mammen_kappa() -> f64 {
    (5f64.sqrt() + 1.0) / 2.0
}

/// Support points `(1 - kappa, kappa)` and the probability of the first.
pub fn mammen_law() -> (f64, f64, f64) {
    let kappa = mammen_kappa();
    (1.0 - kappa, kappa, kappa / 5f64.sqrt())
}

fn draw_into<S: Scalar>(rng: &mut ChaCha8Rng, law: MultiplierLaw, out: &mut [S]) {
    match law {
        MultiplierLaw::Mammen => {
            let (lo, hi, p_lo) = mammen_law();
            let (lo, hi) = (S::lit(lo), S::lit(hi));
            for v in out {
                *v = if rng.random::<f64>() < p_lo { lo } else { hi };
            }
        }
        MultiplierLaw::Rademacher => {
            for v in out {
                *v = if rng.random::<bool>() {
                    S::one()
                } else {
                    -S::one()
                };
            }
        }
    }
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// `n` iid multipliers from stream 0 of `seed`.
pub fn multiplier_draw<S: Scalar>(n: usize, law: MultiplierLaw, seed: u64) -> Vec<S> {
    multiplier_stream(n, law, seed, 0)
}

/// `n` iid multipliers from an explicit stream of `seed`.
pub fn multiplier_stream<S: Scalar>(
    n: usize,
    law: MultiplierLaw,
    seed: u64,
    stream: u64,
) -> Vec<S> {
    let mut out = vec![S::zero(); n];
    draw_into(&mut stream_rng(seed, stream), law, &mut out);
    out
}

/// KS and CvM replicates computed from the same multiplier draws.
#[derive(Debug, Clone, PartialEq)]
pub struct Replicates<S> {
    pub ks: Vec<S>,
    pub cvm: Vec<S>,
}

impl<S: Scalar> Replicates<S> {
    pub fn get(&self, kind: StatisticKind) -> &[S] {
        match kind {
            StatisticKind::Ks => &self.ks,
            StatisticKind::Cvm => &self.cvm,
        }
    }
}

/// For each replicate `b`, `I* = (1/n) psi^T V_b` and its KS / CvM functionals.
pub fn bootstrap_replicates<S: Scalar>(
    psi: &InfluenceMatrix<S>,
    b: usize,
    law: MultiplierLaw,
    seed: u64,
) -> Replicates<S> {
    let n = psi.n();
    let pairs: Vec<(S, S)> = (0..b)
        .into_par_iter()
        .map_init(
            || vec![S::zero(); n],
            |v, rep| {
                draw_into(&mut stream_rng(seed, rep as u64), law, v);
                let star = psi.weighted_mean(v);
                (ks_functional(&star, n), cvm_functional(&star, n))
            },
        )
        .collect();
    let (ks, cvm) = pairs.into_iter().unzip();
    Replicates { ks, cvm }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BootstrapResult<S> {
    pub statistic: S,
    pub replicates: Vec<S>,
    pub critical_value: S,
    pub p_value: S,
    #[serde(rename = "B")]
    pub b: usize,
    pub seed: u64,
}

/// `#{r >= statistic} / B`, or `(1 + #{r >= statistic}) / (B + 1)` when smoothed.
pub fn p_value<S: Scalar>(replicates: &[S], statistic: S, smoothed: bool) -> S {
    let hits = replicates.iter().filter(|&&r| r >= statistic).count();
    if smoothed {
        S::from_count(hits + 1) / S::from_count(replicates.len() + 1)
    } else {
        S::from_count(hits) / S::from_count(replicates.len())
    }
}

/// The `ceil(B (1 - alpha))`-th order statistic (1-based, clamped to `[1, B]`).
pub fn critical_value<S: Scalar>(replicates: &[S], alpha: f64) -> S {
    let mut sorted = replicates.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite replicates"));
    let b = sorted.len();
    let rank = ((b as f64) * (1.0 - alpha) - 1e-9).ceil() as usize;
    sorted[rank.clamp(1, b) - 1]
}

pub fn summarize<S: Scalar>(
    statistic: S,
    replicates: Vec<S>,
    alpha: f64,
    seed: u64,
    smoothed: bool,
) -> BootstrapResult<S> {
    BootstrapResult {
        statistic,
        critical_value: critical_value(&replicates, alpha),
        p_value: p_value(&replicates, statistic, smoothed),
        b: replicates.len(),
        seed,
        replicates,
    }
}

/// Runs `B` multiplier replicates of one functional.
///
/// The CvM functional averages over grid points, which only integrates
/// against the empirical measure on a sample-pairs grid.
#[allow(clippy::too_many_arguments)]
pub fn bootstrap_test<S: Scalar>(
    psi: &InfluenceMatrix<S>,
    grid_mode: GridMode,
    kind: StatisticKind,
    statistic: S,
    b: usize,
    alpha: f64,
    seed: u64,
    law: MultiplierLaw,
) -> Result<BootstrapResult<S>> {
    if b == 0 {
        return Err(Error::Config("B must be at least 1".into()));
    }
    if kind == StatisticKind::Cvm && grid_mode != GridMode::SamplePairs {
        return Err(Error::CvmOnProductGrid);
    }
    let reps = bootstrap_replicates(psi, b, law, seed);
    let r = match kind {
        StatisticKind::Ks => reps.ks,
        StatisticKind::Cvm => reps.cvm,
    };
    Ok(summarize(statistic, r, alpha, seed, false))
}
