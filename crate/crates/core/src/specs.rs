//! The sixteen predictor recipes and predictor-matrix assembly.
//!
//! Outcome predictors are indexed on the epidemic clock: `dth(i)` is the
//! outcome on day `i` of the pre-treatment window. Rows are always emitted in
//! the order outcome lags, `hsp`, `age`, `hld`, `num(.)`, `mob(.)`.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::SpecError;
use crate::panel::{AlignedPanel, UnitView};

/// Which pre-treatment outcome days enter the predictor set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LagRule {
    /// Every pre-treatment day.
    All,
    Odd,
    Even,
    /// A single row holding the mean of every pre-treatment outcome.
    MeanAll,
    /// Days `1..=floor(T0 / 2)`.
    FirstHalf,
    /// Days `1..=floor(2 T0 / 3)`: the grid's "three-fourths" recipe, which
    /// covers days 1 through 10 of a 15-day pre-period.
    Leading,
}

/// One predictor recipe of the grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictorSpec {
    pub id: &'static str,
    pub lag_rule: LagRule,
    /// `hsp`, `age`, `hld`.
    pub static_covariates: bool,
    /// `num(.)`, `mob(.)` averaged over the lag window.
    pub dynamic_covariates: bool,
}

const fn spec(
    id: &'static str,
    lag_rule: LagRule,
    static_covariates: bool,
    dynamic_covariates: bool,
) -> PredictorSpec {
    PredictorSpec {
        id,
        lag_rule,
        static_covariates,
        dynamic_covariates,
    }
}

const GRID: [PredictorSpec; 16] = [
    spec("a0", LagRule::All, false, false),
    spec("a1", LagRule::Odd, false, false),
    spec("a2", LagRule::Even, false, false),
    spec("a3", LagRule::MeanAll, false, false),
    spec("a4", LagRule::FirstHalf, false, false),
    spec("a5", LagRule::Leading, false, false),
    spec("b1", LagRule::Odd, true, false),
    spec("b2", LagRule::Even, true, false),
    spec("b3", LagRule::MeanAll, true, false),
    spec("b4", LagRule::FirstHalf, true, false),
    spec("b5", LagRule::Leading, true, false),
    spec("c1", LagRule::Odd, true, true),
    spec("c2", LagRule::Even, true, true),
    spec("c3", LagRule::MeanAll, true, true),
    spec("c4", LagRule::FirstHalf, true, true),
    spec("c5", LagRule::Leading, true, true),
];

/// All sixteen recipes in the order a0, a1..a5, b1..b5, c1..c5.
pub fn enumerate_specs() -> Vec<PredictorSpec> {
    GRID.to_vec()
}

impl FromStr for PredictorSpec {
    type Err = SpecError;

    fn from_str(s: &str) -> Result<Self, SpecError> {
        GRID.iter()
            .find(|g| g.id == s)
            .copied()
            .ok_or_else(|| SpecError::UnknownSpec(s.to_string()))
    }
}

impl fmt::Display for PredictorSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id)
    }
}

/// Outcome part of a resolved recipe.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum LagSelection {
    /// Explicit epidemic days, ascending.
    Days(Vec<usize>),
    /// Mean over the whole pre-treatment window.
    MeanAll,
}

/// A recipe with its lag rule evaluated for a concrete pre-treatment length.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResolvedSpec {
    pub id: String,
    pub lags: LagSelection,
    pub static_covariates: bool,
    pub dynamic_covariates: bool,
}

impl PredictorSpec {
    /// Evaluates the lag rule against a reference pre-treatment length.
    pub fn resolve(&self, t0: usize) -> ResolvedSpec {
        let days = |it: &mut dyn Iterator<Item = usize>| LagSelection::Days(it.collect());
        let lags = match self.lag_rule {
            LagRule::All => days(&mut (1..=t0)),
            LagRule::Odd => days(&mut (1..=t0).step_by(2)),
            LagRule::Even => days(&mut (2..=t0).step_by(2)),
            LagRule::MeanAll => LagSelection::MeanAll,
            LagRule::FirstHalf => days(&mut (1..=t0 / 2)),
            LagRule::Leading => days(&mut (1..=2 * t0 / 3)),
        };
        ResolvedSpec {
            id: self.id.to_string(),
            lags,
            static_covariates: self.static_covariates,
            dynamic_covariates: self.dynamic_covariates,
        }
    }

    /// Predictor count at pre-treatment length `t0`.
    pub fn predictor_count(&self, t0: usize) -> usize {
        self.resolve(t0).row_labels().len()
    }
}

impl ResolvedSpec {
    /// Drops lag days beyond `t0` (used when the pre-period is shortened).
    pub fn clipped_to(&self, t0: usize) -> ResolvedSpec {
        let mut out = self.clone();
        if let LagSelection::Days(d) = &mut out.lags {
            d.retain(|&x| x <= t0);
        }
        out
    }

    pub fn row_labels(&self) -> Vec<String> {
        let mut labels = match &self.lags {
            LagSelection::Days(d) => d.iter().map(|i| format!("dth({i})")).collect(),
            LagSelection::MeanAll => vec!["dth(*)".to_string()],
        };
        if self.static_covariates {
            labels.extend(["hsp", "age", "hld"].map(String::from));
        }
        if self.dynamic_covariates {
            labels.extend(["num(.)", "mob(.)"].map(String::from));
        }
        labels
    }
}

/// Row standardization applied before fitting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaling {
    pub center: Vec<f64>,
    /// 1 where a row has zero spread across units.
    pub scale: Vec<f64>,
}

/// Treated predictor vector and donor predictor matrix for one recipe.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictorMatrices {
    pub spec_id: String,
    pub row_labels: Vec<String>,
    pub donors: Vec<String>,
    /// Treated predictors in raw units.
    pub raw_x1: DVector<f64>,
    /// Donor predictors in raw units, one row per donor.
    pub raw_x0: DMatrix<f64>,
    /// Treated predictors as fitted (standardized when `scaling` is set).
    pub x1: DVector<f64>,
    pub x0: DMatrix<f64>,
    pub scaling: Option<Scaling>,
}

impl PredictorMatrices {
    pub fn n_predictors(&self) -> usize {
        self.row_labels.len()
    }

    pub fn n_donors(&self) -> usize {
        self.donors.len()
    }

    /// Builds matrices from raw rows, optionally standardizing each predictor
    /// across all units (treated included, sample SD).
    pub fn from_raw(
        spec_id: &str,
        row_labels: Vec<String>,
        donors: Vec<String>,
        raw_x1: DVector<f64>,
        raw_x0: DMatrix<f64>,
        normalize: bool,
    ) -> Self {
        let (x1, x0, scaling) = if normalize {
            let p = raw_x1.len();
            let n = raw_x0.nrows() as f64 + 1.0;
            let mut center = Vec::with_capacity(p);
            let mut scale = Vec::with_capacity(p);
            for k in 0..p {
                let col = raw_x0.column(k);
                let mean = (raw_x1[k] + col.sum()) / n;
                let ss = (raw_x1[k] - mean).powi(2)
                    + col.iter().map(|v| (v - mean).powi(2)).sum::<f64>();
                let sd = if n > 1.0 { (ss / (n - 1.0)).sqrt() } else { 0.0 };
                center.push(mean);
                scale.push(if sd > f64::EPSILON * mean.abs().max(1.0) { sd } else { 1.0 });
            }
            let x1 = DVector::from_fn(p, |k, _| (raw_x1[k] - center[k]) / scale[k]);
            let x0 = DMatrix::from_fn(raw_x0.nrows(), p, |i, k| {
                (raw_x0[(i, k)] - center[k]) / scale[k]
            });
            (x1, x0, Some(Scaling { center, scale }))
        } else {
            (raw_x1.clone(), raw_x0.clone(), None)
        };
        Self {
            spec_id: spec_id.to_string(),
            row_labels,
            donors,
            raw_x1,
            raw_x0,
            x1,
            x0,
            scaling,
        }
    }
}

fn mean_over(series: &[f64], days: &[usize]) -> f64 {
    days.iter().map(|&d| series[d - 1]).sum::<f64>() / days.len() as f64
}

fn unit_row(
    unit: &UnitView<'_>,
    spec: &ResolvedSpec,
    lag_days: &[usize],
    window: &[usize],
) -> Result<Vec<f64>, SpecError> {
    let mut row = Vec::new();
    match spec.lags {
        LagSelection::Days(_) => row.extend(lag_days.iter().map(|&d| unit.outcome[d - 1])),
        LagSelection::MeanAll => row.push(mean_over(unit.outcome, window)),
    }
    if spec.static_covariates {
        let s = unit
            .statics
            .ok_or_else(|| SpecError::MissingStatic(unit.id.to_string()))?;
        row.extend([s.hsp, s.age, s.hld]);
    }
    if spec.dynamic_covariates {
        let mob = unit.mob.ok_or(SpecError::MissingMobility)?;
        row.push(mean_over(unit.cases, window));
        row.push(mean_over(mob, window));
    }
    Ok(row)
}

/// Builds `X1` and `X0` for a recipe resolved at the panel's own `T0`.
pub fn build_predictor_matrices(
    panel: &AlignedPanel,
    spec: &PredictorSpec,
    normalize: bool,
) -> Result<PredictorMatrices, SpecError> {
    build_resolved(panel, &spec.resolve(panel.t0()), None, normalize)
}

/// Builds matrices for an already-resolved recipe, optionally leaving one
/// pre-treatment day out of every lag and averaging window.
pub fn build_resolved(
    panel: &AlignedPanel,
    spec: &ResolvedSpec,
    excluded_day: Option<usize>,
    normalize: bool,
) -> Result<PredictorMatrices, SpecError> {
    build_impl(panel, spec, excluded_day, excluded_day, normalize)
}

/// Like [`build_resolved`] but leaves the held-out day in the averaging
/// window of `dth(*)`, `num(.)` and `mob(.)`; only lag rows drop it.
pub(crate) fn build_keeping_averages(
    panel: &AlignedPanel,
    spec: &ResolvedSpec,
    excluded_day: usize,
    normalize: bool,
) -> Result<PredictorMatrices, SpecError> {
    build_impl(panel, spec, Some(excluded_day), None, normalize)
}

fn build_impl(
    panel: &AlignedPanel,
    spec: &ResolvedSpec,
    excluded_day: Option<usize>,
    excluded_from_averages: Option<usize>,
    normalize: bool,
) -> Result<PredictorMatrices, SpecError> {
    let t0 = panel.t0();
    let keep = |d: &usize| Some(*d) != excluded_day;
    let keep_avg = |d: &usize| Some(*d) != excluded_from_averages;
    let (lag_days, window): (Vec<usize>, Vec<usize>) = match &spec.lags {
        LagSelection::Days(days) => {
            if let Some(&lag) = days.iter().find(|&&d| d > t0 || d == 0) {
                return Err(SpecError::LagExceedsPreperiod {
                    spec: spec.id.clone(),
                    lag,
                    t0,
                });
            }
            let kept: Vec<usize> = days.iter().copied().filter(keep).collect();
            (kept, days.iter().copied().filter(keep_avg).collect())
        }
        LagSelection::MeanAll => (Vec::new(), (1..=t0).filter(keep_avg).collect()),
    };
    let mut labels = spec.row_labels();
    if let LagSelection::Days(_) = spec.lags {
        if let Some(x) = excluded_day {
            labels.retain(|l| *l != format!("dth({x})"));
        }
    }
    let averages = matches!(spec.lags, LagSelection::MeanAll) || spec.dynamic_covariates;
    if labels.is_empty() || (averages && window.is_empty()) {
        return Err(SpecError::EmptyPredictors {
            spec: spec.id.clone(),
        });
    }

    let treated = panel.treated_view();
    let donors = panel.donor_views();
    let x1 = unit_row(&treated, spec, &lag_days, &window)?;
    let p = x1.len();
    let mut x0 = DMatrix::zeros(donors.len(), p);
    for (i, d) in donors.iter().enumerate() {
        let row = unit_row(d, spec, &lag_days, &window)?;
        for (k, v) in row.into_iter().enumerate() {
            x0[(i, k)] = v;
        }
    }
    for (k, label) in labels.iter().enumerate() {
        if !x1[k].is_finite() {
            return Err(SpecError::NonFinite {
                row: label.clone(),
                unit: treated.id.to_string(),
            });
        }
        for (i, d) in donors.iter().enumerate() {
            if !x0[(i, k)].is_finite() {
                return Err(SpecError::NonFinite {
                    row: label.clone(),
                    unit: d.id.to_string(),
                });
            }
        }
    }
    Ok(PredictorMatrices::from_raw(
        &spec.id,
        labels,
        donors.iter().map(|d| d.id.to_string()).collect(),
        DVector::from_vec(x1),
        x0,
        normalize,
    ))
}

/// One row of a balance table in raw predictor units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BalanceRow {
    pub predictor: String,
    pub actual: f64,
    pub synth: f64,
    pub donor: f64,
}

/// Treated predictors against the weighted and the unweighted donor average.
pub fn balance_table(m: &PredictorMatrices, weights: &DVector<f64>) -> Vec<BalanceRow> {
    let synth = m.raw_x0.transpose() * weights;
    let n = m.raw_x0.nrows() as f64;
    m.row_labels
        .iter()
        .enumerate()
        .map(|(k, label)| BalanceRow {
            predictor: label.clone(),
            actual: m.raw_x1[k],
            synth: synth[k],
            donor: m.raw_x0.column(k).sum() / n,
        })
        .collect()
}
