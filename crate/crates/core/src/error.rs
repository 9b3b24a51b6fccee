use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("missing column `{0}` in header")]
    MissingColumn(String),

    #[error("row {row}, column `{column}`: {message}")]
    InvalidCell {
        row: usize,
        column: String,
        message: String,
    },

    #[error("invalid dataset: {0}")]
    InvalidData(String),

    #[error("degenerate design: {0}")]
    DegenerateDesign(String),

    #[error("degenerate instrument design: {0}")]
    DegenerateInstrument(String),

    #[error("instrument column required for the local distribution treatment effect test")]
    InstrumentRequired,

    #[error("evaluation grid is empty after truncation at {0}")]
    EmptyGrid(f64),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("labels contain a single class; the logit model is not identified")]
    OneClass,

    #[error("basis has {basis} terms but only {rows} observations")]
    BasisTooLarge { basis: usize, rows: usize },

    #[error("complete or quasi-complete separation detected; lower the series degree")]
    Separation,

    #[error("matrix is singular or ill-conditioned after ridge fallback ({0})")]
    Singular(&'static str),

    #[error("non-finite integrand value at sorted position {index} (q = {q})")]
    NonFiniteIntegrand { index: usize, q: f64 },

    #[error("the Cramer-von Mises functional requires a sample-pairs grid")]
    CvmOnProductGrid,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("censoring calibration failed: {0}")]
    Calibration(String),
}

impl Error {
    /// Stable machine-readable tag, used in CLI error objects.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::Csv(_) => "csv",
            Error::MissingColumn(_) => "missing_column",
            Error::InvalidCell { .. } => "invalid_cell",
            Error::InvalidData(_) => "invalid_data",
            Error::DegenerateDesign(_) => "degenerate_design",
            Error::DegenerateInstrument(_) => "degenerate_instrument",
            Error::InstrumentRequired => "instrument_required",
            Error::EmptyGrid(_) => "empty_grid",
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::OneClass => "one_class",
            Error::BasisTooLarge { .. } => "basis_too_large",
            Error::Separation => "separation",
            Error::Singular(_) => "singular",
            Error::NonFiniteIntegrand { .. } => "non_finite_integrand",
            Error::CvmOnProductGrid => "cvm_on_product_grid",
            Error::Config(_) => "config",
            Error::Calibration(_) => "calibration",
        }
    }
}
