//! Observations, CSV ingestion, arm splits and evaluation grids.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// One unit: observed duration `q = min(Y, C)`, event indicator, treatment,
/// covariates and an optional binary instrument.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation<S> {
    pub q: S,
    /// `true` when the event was observed (`Y <= C`).
    pub delta: bool,
    pub treated: bool,
    pub x: Vec<S>,
    pub z: Option<bool>,
}

/// A validated sample. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<S> {
    observations: Vec<Observation<S>>,
    k: usize,
    has_instrument: bool,
}

impl<S: Scalar> Dataset<S> {
    /// Validates covariate dimension, finiteness and instrument consistency.
    ///
    /// Negative durations are accepted here (simulated designs draw Gaussian
    /// outcomes); [`load_csv`] rejects them for real data.
    pub fn new(observations: Vec<Observation<S>>) -> Result<Self> {
        let first = observations
            .first()
            .ok_or_else(|| Error::InvalidData("dataset is empty".into()))?;
        let k = first.x.len();
        let has_instrument = first.z.is_some();
        for (i, obs) in observations.iter().enumerate() {
            if obs.x.len() != k {
                return Err(Error::InvalidData(format!(
                    "observation {} has {} covariates, expected {}",
                    i + 1,
                    obs.x.len(),
                    k
                )));
            }
            if !obs.q.is_finite() || obs.x.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidData(format!(
                    "observation {} has a non-finite value",
                    i + 1
                )));
            }
            if obs.z.is_some() != has_instrument {
                return Err(Error::InvalidData(format!(
                    "observation {} disagrees on instrument presence",
                    i + 1
                )));
            }
        }
        Ok(Self {
            observations,
            k,
            has_instrument,
        })
    }

    pub fn observations(&self) -> &[Observation<S>] {
        &self.observations
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    /// Covariate dimension.
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn has_instrument(&self) -> bool {
        self.has_instrument
    }

    pub fn get(&self, i: usize) -> &Observation<S> {
        &self.observations[i]
    }

    pub fn covariates(&self) -> Vec<&[S]> {
        self.observations.iter().map(|o| o.x.as_slice()).collect()
    }

    pub fn treatment_labels(&self) -> Vec<bool> {
        self.observations.iter().map(|o| o.treated).collect()
    }

    /// Instrument labels; `None` when the dataset carries no instrument.
    pub fn instrument_labels(&self) -> Option<Vec<bool>> {
        self.observations.iter().map(|o| o.z).collect()
    }

    /// Keeps only the covariate columns in `columns`, in that order.
    pub fn select_covariates(&self, columns: &[usize]) -> Result<Self> {
        if let Some(&bad) = columns.iter().find(|&&c| c >= self.k) {
            return Err(Error::DimensionMismatch {
                expected: self.k,
                got: bad + 1,
            });
        }
        let observations = self
            .observations
            .iter()
            .map(|o| Observation {
                x: columns.iter().map(|&c| o.x[c]).collect(),
                ..o.clone()
            })
            .collect();
        Self::new(observations)
    }
}

/// Header names of the columns holding each field.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnMap {
    pub q: String,
    pub delta: String,
    pub t: String,
    pub x: Vec<String>,
    pub z: Option<String>,
}

impl Default for ColumnMap {
    fn default() -> Self {
        Self {
            q: "q".into(),
            delta: "delta".into(),
            t: "t".into(),
            x: vec!["x1".into()],
            z: None,
        }
    }
}

impl ColumnMap {
    /// The canonical `q,delta,t,x1..xk[,z]` layout written by [`write_csv`].
    pub fn canonical(k: usize, with_instrument: bool) -> Self {
        Self {
            x: (1..=k).map(|j| format!("x{j}")).collect(),
            z: with_instrument.then(|| "z".into()),
            ..Self::default()
        }
    }
}

/// Reads a dataset from a CSV file, locating columns by header name.
///
/// Row numbers in errors count data rows from 1 (the header is row 0).
pub fn load_csv<S: Scalar>(path: impl AsRef<Path>, columns: &ColumnMap) -> Result<Dataset<S>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    read_csv(file, columns)
}

pub fn read_csv<S: Scalar, R: Read>(reader: R, columns: &ColumnMap) -> Result<Dataset<S>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header = rdr.headers()?.clone();
    let locate = |name: &str| -> Result<usize> {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let q_col = locate(&columns.q)?;
    let d_col = locate(&columns.delta)?;
    let t_col = locate(&columns.t)?;
    let x_cols = columns
        .x
        .iter()
        .map(|c| locate(c))
        .collect::<Result<Vec<_>>>()?;
    let z_col = columns.z.as_deref().map(locate).transpose()?;

    let mut observations = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let record = record?;
        let row = i + 1;
        let cell = |col: usize, name: &str| -> Result<f64> {
            let raw = record.get(col).unwrap_or("");
            raw.parse::<f64>().map_err(|_| Error::InvalidCell {
                row,
                column: name.to_string(),
                message: format!("`{raw}` is not a number"),
            })
        };
        let binary = |col: usize, name: &str| -> Result<bool> {
            let v = cell(col, name)?;
            if v == 0.0 {
                Ok(false)
            } else if v == 1.0 {
                Ok(true)
            } else {
                Err(Error::InvalidCell {
                    row,
                    column: name.to_string(),
                    message: format!("value {v} is not 0 or 1"),
                })
            }
        };
        let q = cell(q_col, &columns.q)?;
        if !q.is_finite() || q < 0.0 {
            return Err(Error::InvalidCell {
                row,
                column: columns.q.clone(),
                message: format!("duration {q} must be finite and nonnegative"),
            });
        }
        let delta = binary(d_col, &columns.delta)?;
        let treated = binary(t_col, &columns.t)?;
        let x = x_cols
            .iter()
            .zip(&columns.x)
            .map(|(&c, name)| {
                let v = cell(c, name)?;
                if !v.is_finite() {
                    return Err(Error::InvalidCell {
                        row,
                        column: name.clone(),
                        message: "covariate must be finite".into(),
                    });
                }
                Ok(S::lit(v))
            })
            .collect::<Result<Vec<S>>>()?;
        let z = match (z_col, &columns.z) {
            (Some(c), Some(name)) => Some(binary(c, name)?),
            _ => None,
        };
        observations.push(Observation {
            q: S::lit(q),
            delta,
            treated,
            x,
            z,
        });
    }
    Dataset::new(observations)
}

/// Writes the canonical `q,delta,t,x1..xk[,z]` layout.
pub fn write_csv<S: Scalar, W: Write>(data: &Dataset<S>, writer: W) -> Result<()> {
    let cols = ColumnMap::canonical(data.k(), data.has_instrument());
    let mut wtr = csv::Writer::from_writer(writer);
    let mut header = vec![cols.q.clone(), cols.delta.clone(), cols.t.clone()];
    header.extend(cols.x.iter().cloned());
    header.extend(cols.z.iter().cloned());
    wtr.write_record(&header)?;
    for o in data.observations() {
        let mut rec = vec![
            o.q.to_string(),
            u8::from(o.delta).to_string(),
            u8::from(o.treated).to_string(),
        ];
        rec.extend(o.x.iter().map(|v| v.to_string()));
        if let Some(z) = o.z {
            rec.push(u8::from(z).to_string());
        }
        wtr.write_record(&rec)?;
    }
    wtr.flush().map_err(|source| Error::Io {
        path: "<writer>".into(),
        source,
    })?;
    Ok(())
}

/// Row indices of each treatment arm, in original order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArmSplit {
    pub treated: Vec<usize>,
    pub control: Vec<usize>,
}

pub fn split_by_arm<S: Scalar>(data: &Dataset<S>) -> Result<ArmSplit> {
    let (treated, control): (Vec<usize>, Vec<usize>) =
        (0..data.len()).partition(|&i| data.get(i).treated);
    if treated.is_empty() || control.is_empty() {
        return Err(Error::DegenerateDesign(format!(
            "treated arm has {} and control arm has {} observations",
            treated.len(),
            control.len()
        )));
    }
    Ok(ArmSplit { treated, control })
}

/// Row indices of the four treatment-by-instrument cells.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CellSplit {
    /// `cells[t][z]`
    cells: [[Vec<usize>; 2]; 2],
}

impl CellSplit {
    pub fn cell(&self, t: bool, z: bool) -> &[usize] {
        &self.cells[usize::from(t)][usize::from(z)]
    }

    pub fn sizes(&self) -> [[usize; 2]; 2] {
        [
            [self.cells[0][0].len(), self.cells[0][1].len()],
            [self.cells[1][0].len(), self.cells[1][1].len()],
        ]
    }
}

pub fn split_by_arm_instrument<S: Scalar>(data: &Dataset<S>) -> Result<CellSplit> {
    if !data.has_instrument() {
        return Err(Error::InstrumentRequired);
    }
    let mut cells: [[Vec<usize>; 2]; 2] = Default::default();
    for (i, o) in data.observations().iter().enumerate() {
        let z = o.z.expect("validated instrument presence");
        cells[usize::from(o.treated)][usize::from(z)].push(i);
    }
    for (t, row) in cells.iter().enumerate() {
        for (z, cell) in row.iter().enumerate() {
            if cell.is_empty() {
                return Err(Error::DegenerateInstrument(format!(
                    "cell (t={t}, z={z}) is empty"
                )));
            }
        }
    }
    Ok(CellSplit { cells })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum GridMode {
    /// The observed pairs `(Q_i, X_i)`: the support of the empirical measure.
    #[default]
    SamplePairs,
    /// Every observed `Q` crossed with every observed covariate value.
    FullProduct,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridPoint<S> {
    pub y: S,
    pub x: Vec<S>,
}

/// Points `(y, x)` at which a process is evaluated. Duplicated sample
/// pairs are kept so that averaging over the grid integrates against the
/// empirical measure.
#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationGrid<S> {
    points: Vec<GridPoint<S>>,
    tau_bar: S,
    mode: GridMode,
}

impl<S: Scalar> EvaluationGrid<S> {
    pub fn new(points: Vec<GridPoint<S>>, tau_bar: S, mode: GridMode) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyGrid(tau_bar.as_f64()));
        }
        if let Some(p) = points.iter().find(|p| p.y > tau_bar || p.y.is_nan()) {
            return Err(Error::Config(format!(
                "grid point y = {} exceeds the truncation point {}",
                p.y, tau_bar
            )));
        }
        Ok(Self {
            points,
            tau_bar,
            mode,
        })
    }

    pub fn points(&self) -> &[GridPoint<S>] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn tau_bar(&self) -> S {
        self.tau_bar
    }

    pub fn mode(&self) -> GridMode {
        self.mode
    }
}

/// Grid over `(y, x)` for the distribution-type processes.
pub fn default_grid<S: Scalar>(
    data: &Dataset<S>,
    tau_bar: S,
    mode: GridMode,
) -> Result<EvaluationGrid<S>> {
    let kept: Vec<&Observation<S>> = data
        .observations()
        .iter()
        .filter(|o| o.q <= tau_bar)
        .collect();
    if kept.is_empty() {
        return Err(Error::EmptyGrid(tau_bar.as_f64()));
    }
    let points = match mode {
        GridMode::SamplePairs => kept
            .iter()
            .map(|o| GridPoint {
                y: o.q,
                x: o.x.clone(),
            })
            .collect(),
        GridMode::FullProduct => kept
            .iter()
            .flat_map(|oy| {
                data.observations().iter().map(move |ox| GridPoint {
                    y: oy.q,
                    x: ox.x.clone(),
                })
            })
            .collect(),
    };
    EvaluationGrid::new(points, tau_bar, mode)
}

/// Covariate-only grid for the mean-type processes. Every point carries
/// `y = tau_bar`, which is exactly the truncation those integrands use.
///
/// In full-product mode the grid is the Cartesian product of the observed
/// values of each coordinate (identical to sample mode when `k = 1`).
pub fn covariate_grid<S: Scalar>(
    data: &Dataset<S>,
    tau_bar: S,
    mode: GridMode,
) -> Result<EvaluationGrid<S>> {
    let xs: Vec<Vec<S>> = match mode {
        GridMode::SamplePairs => data.observations().iter().map(|o| o.x.clone()).collect(),
        GridMode::FullProduct => {
            let mut acc: Vec<Vec<S>> = vec![Vec::new()];
            for j in 0..data.k() {
                let mut values: Vec<S> = data.observations().iter().map(|o| o.x[j]).collect();
                values.sort_by(|a, b| a.partial_cmp(b).expect("finite covariates"));
                values.dedup();
                acc = acc
                    .into_iter()
                    .flat_map(|prefix| {
                        values.iter().map(move |&v| {
                            let mut p = prefix.clone();
                            p.push(v);
                            p
                        })
                    })
                    .collect();
            }
            acc
        }
    };
    let points = xs
        .into_iter()
        .map(|x| GridPoint { y: tau_bar, x })
        .collect();
    EvaluationGrid::new(points, tau_bar, mode)
}
