//! Error types shared across the crate.

use thiserror::Error;

/// Failures while reading, validating or aligning panel data.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum PanelError {
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("{file}: missing required column `{column}`")]
    MissingColumn { file: String, column: String },
    #[error("{file}: unparseable rows {rows:?}: {detail}")]
    UnparseableRows {
        file: String,
        rows: Vec<usize>,
        detail: String,
    },
    #[error("no observations")]
    NoObservations,
    #[error("duplicate record for unit `{unit}` on {date}")]
    DuplicateRecord { unit: String, date: String },
    #[error("unit `{unit}` has multiple treatment dates: {dates:?}")]
    MultipleTreatmentDates { unit: String, dates: Vec<String> },
    #[error("multiple treated units: {units:?}")]
    MultipleTreatedUnits { units: Vec<String> },
    #[error("no treated unit")]
    NoTreatedUnit,
    #[error("treated unit `{0}` has no observations")]
    UnknownTreatedUnit(String),
    #[error("treated unit `{unit}` never crosses the alignment threshold {threshold}")]
    TreatedNeverCrosses { unit: String, threshold: f64 },
    #[error("treatment date {treatment} is not after the treated unit's day 1 ({day_one})")]
    NoPreTreatmentPeriod { treatment: String, day_one: String },
    #[error("treated unit `{unit}` lacks observations on epidemic day {day}")]
    TreatedCoverage { unit: String, day: usize },
    #[error("invalid sample end {t_end}: need {t0} < T_end <= {max}")]
    InvalidSampleEnd { t_end: usize, t0: usize, max: usize },
    #[error("stringency series absent for donor `{0}`; use a fixed sample-end rule")]
    StringencyAbsent(String),
    #[error("mobility sub-index `{0}` is unknown")]
    UnknownSubIndex(String),
    #[error("mobility sub-indices missing in {missing} of {total} cells (tolerance {tolerance})")]
    MobilityMissing {
        missing: usize,
        total: usize,
        tolerance: f64,
    },
    #[error("unit `{0}` is not in the panel")]
    UnknownUnit(String),
    #[error("too few donors: {found} retained, {required} required")]
    TooFewDonors { found: usize, required: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

/// Failures while assembling predictor matrices.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpecError {
    #[error("unknown specification `{0}`; valid ids: a0 a1 a2 a3 a4 a5 b1 b2 b3 b4 b5 c1 c2 c3 c4 c5")]
    UnknownSpec(String),
    #[error("spec {spec}: lag {lag} exceeds the {t0} pre-treatment periods")]
    LagExceedsPreperiod { spec: String, lag: usize, t0: usize },
    #[error("spec {spec}: no predictor rows remain")]
    EmptyPredictors { spec: String },
    #[error("static covariates missing for unit `{0}`")]
    MissingStatic(String),
    #[error("mobility index has not been built for this panel")]
    MissingMobility,
    #[error("non-finite predictor value in row `{row}` for unit `{unit}`")]
    NonFinite { row: String, unit: String },
}

/// Failures inside the weight and ridge solvers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("at least {required} donors are required, found {found}")]
    TooFewDonors { found: usize, required: usize },
    #[error("non-finite input: {0}")]
    NonFinite(String),
    #[error("simplex solver did not converge in {iterations} iterations (objective {objective:e})")]
    NotConverged { iterations: usize, objective: f64 },
    #[error("singular ridge system at lambda = 0 (centered donor predictors are rank deficient)")]
    Singular,
    #[error("invalid lambda grid: {0}")]
    InvalidGrid(String),
    #[error("cross-validation produced no finite value")]
    NoFiniteCv,
    #[error("cross-validation needs at least 3 pre-treatment periods, found {0}")]
    TooFewPeriods(usize),
    #[error("window {start}..{end} outside the available {len} periods")]
    Window { start: usize, end: usize, len: usize },
}

/// Failures in the inference layer.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum InferenceError {
    #[error("series length mismatch: {actual} actual vs {synthetic} synthetic")]
    LengthMismatch { actual: usize, synthetic: usize },
    #[error("pre-treatment length {t0} must satisfy 1 <= T0 < {len}")]
    InvalidT0 { t0: usize, len: usize },
    #[error("{0}")]
    Insufficient(String),
    #[error("alpha must lie in (0, 0.5], got {0}")]
    InvalidAlpha(f64),
    #[error("missing gap series for spec {0}")]
    MissingSpec(String),
}

/// Top-level error.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error(transparent)]
    Panel(#[from] PanelError),
    #[error(transparent)]
    Spec(#[from] SpecError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Inference(#[from] InferenceError),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
