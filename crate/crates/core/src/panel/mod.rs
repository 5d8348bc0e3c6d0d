//! Panel ingestion, validation and epidemic-day alignment.
//!
//! A [`Panel`] holds the raw long-format observations as they were read. Alignment
//! re-indexes every unit on its own epidemic clock (day 1 is the first date its
//! cumulative cases per million exceed the threshold) and produces an
//! [`AlignedPanel`], the dense form every estimator works on.

mod align;
mod load;
mod mobility;
mod sample_end;

use std::collections::BTreeMap;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::PanelError;

pub use align::{align_epidemic_day, AlignedPanel, AlignedUnit, DonorExclusion, UnitView};
pub use load::{load_panel, write_panel, ColumnSchema, StaticSchema, TreatmentOverride};
pub use mobility::{build_mobility_index, MobilityConfig, MobilityIndex};
pub use sample_end::{determine_sample_end, SampleEnd, SampleEndRule};

/// Names of the four mobility sub-indices in storage order.
pub const MOBILITY_SUBINDICES: [&str; 4] = ["grocery", "transit", "retail", "work"];

/// One (unit, date) record.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    /// Cumulative deaths per million.
    pub deaths_pm: f64,
    /// Cumulative cases per million.
    pub cases_pm: f64,
    /// Percent change vs. baseline, in [`MOBILITY_SUBINDICES`] order.
    pub mobility: [Option<f64>; 4],
    pub stringency: Option<f64>,
}

/// Time-invariant unit covariates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StaticCovariates {
    /// Hospital beds per hundred thousand.
    pub hsp: f64,
    /// Median age in years.
    pub age: f64,
    /// Average household size.
    pub hld: f64,
}

/// Data-quality note that does not invalidate the panel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationFlag {
    pub unit: String,
    pub date: Option<NaiveDate>,
    pub kind: String,
    pub message: String,
}

/// Donor dropped during alignment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExcludedDonor {
    pub unit: String,
    pub reason: DonorExclusion,
}

/// Machine-readable validation report (`excluded_donors[]`, `flags[]`).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub excluded_donors: Vec<ExcludedDonor>,
    pub flags: Vec<ValidationFlag>,
}

/// Long-format panel with exactly one treated unit.
#[derive(Debug, Clone, PartialEq)]
pub struct Panel {
    units: Vec<String>,
    calendar: Vec<NaiveDate>,
    series: Vec<BTreeMap<NaiveDate, Observation>>,
    statics: Vec<Option<StaticCovariates>>,
    treated: usize,
    treatment_date: NaiveDate,
    flags: Vec<ValidationFlag>,
}

/// Row-level input to [`Panel::new`].
#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub unit: String,
    pub date: NaiveDate,
    pub observation: Observation,
}

impl Panel {
    /// Builds and validates a panel. Units keep their order of first appearance.
    pub fn new(
        records: Vec<Record>,
        statics: &BTreeMap<String, StaticCovariates>,
        treated_unit: &str,
        treatment_date: NaiveDate,
    ) -> Result<Self, PanelError> {
        if records.is_empty() {
            return Err(PanelError::NoObservations);
        }
        let mut units: Vec<String> = Vec::new();
        let mut index: BTreeMap<String, usize> = BTreeMap::new();
        let mut series: Vec<BTreeMap<NaiveDate, Observation>> = Vec::new();
        for rec in records {
            let i = *index.entry(rec.unit.clone()).or_insert_with(|| {
                units.push(rec.unit.clone());
                series.push(BTreeMap::new());
                units.len() - 1
            });
            if series[i].insert(rec.date, rec.observation).is_some() {
                return Err(PanelError::DuplicateRecord {
                    unit: rec.unit,
                    date: rec.date.to_string(),
                });
            }
        }
        let treated = *index
            .get(treated_unit)
            .ok_or_else(|| PanelError::UnknownTreatedUnit(treated_unit.to_string()))?;

        let mut calendar: Vec<NaiveDate> = series.iter().flat_map(|s| s.keys().copied()).collect();
        calendar.sort_unstable();
        calendar.dedup();

        let statics = units.iter().map(|u| statics.get(u).copied()).collect();
        let mut panel = Panel {
            units,
            calendar,
            series,
            statics,
            treated,
            treatment_date,
            flags: Vec::new(),
        };
        panel.flags = panel.scan_flags();
        Ok(panel)
    }

    fn scan_flags(&self) -> Vec<ValidationFlag> {
        let mut flags = Vec::new();
        for (unit, s) in self.units.iter().zip(&self.series) {
            let mut prev: Option<f64> = None;
            for (date, obs) in s {
                if let Some(p) = prev {
                    if obs.deaths_pm < p {
                        flags.push(ValidationFlag {
                            unit: unit.clone(),
                            date: Some(*date),
                            kind: "non_monotone_outcome".into(),
                            message: format!(
                                "cumulative outcome falls from {p} to {}",
                                obs.deaths_pm
                            ),
                        });
                    }
                }
                prev = Some(obs.deaths_pm);
            }
        }
        for (unit, st) in self.units.iter().zip(&self.statics) {
            if st.is_none() {
                flags.push(ValidationFlag {
                    unit: unit.clone(),
                    date: None,
                    kind: "missing_static_covariates".into(),
                    message: "no row in the static covariate file".into(),
                });
            }
        }
        flags
    }

    pub fn units(&self) -> &[String] {
        &self.units
    }

    pub fn calendar(&self) -> &[NaiveDate] {
        &self.calendar
    }

    pub fn treated_unit(&self) -> &str {
        &self.units[self.treated]
    }

    pub fn treatment_date(&self) -> NaiveDate {
        self.treatment_date
    }

    pub fn flags(&self) -> &[ValidationFlag] {
        &self.flags
    }

    pub fn unit_index(&self, unit: &str) -> Option<usize> {
        self.units.iter().position(|u| u == unit)
    }

    pub fn observations(&self, unit: usize) -> &BTreeMap<NaiveDate, Observation> {
        &self.series[unit]
    }

    pub fn statics(&self, unit: usize) -> Option<&StaticCovariates> {
        self.statics[unit].as_ref()
    }

    pub(crate) fn treated_index(&self) -> usize {
        self.treated
    }

    /// Returns the panel without the named donor.
    pub fn without_unit(&self, unit: &str) -> Result<Panel, PanelError> {
        let i = self
            .unit_index(unit)
            .ok_or_else(|| PanelError::UnknownUnit(unit.to_string()))?;
        if i == self.treated {
            return Err(PanelError::InvalidConfig(
                "cannot drop the treated unit".into(),
            ));
        }
        let mut records = Vec::new();
        let mut statics = BTreeMap::new();
        for (k, u) in self.units.iter().enumerate() {
            if k == i {
                continue;
            }
            for (d, o) in &self.series[k] {
                records.push(Record {
                    unit: u.clone(),
                    date: *d,
                    observation: *o,
                });
            }
            if let Some(s) = self.statics[k] {
                statics.insert(u.clone(), s);
            }
        }
        Panel::new(records, &statics, self.treated_unit(), self.treatment_date)
    }

    /// Row-level records in unit then date order.
    pub fn records(&self) -> Vec<Record> {
        let mut out = Vec::new();
        for (u, s) in self.units.iter().zip(&self.series) {
            for (d, o) in s {
                out.push(Record {
                    unit: u.clone(),
                    date: *d,
                    observation: *o,
                });
            }
        }
        out
    }

    /// Static covariates keyed by unit.
    pub fn static_map(&self) -> BTreeMap<String, StaticCovariates> {
        self.units
            .iter()
            .zip(&self.statics)
            .filter_map(|(u, s)| s.map(|s| (u.clone(), s)))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn obs(d: f64) -> Observation {
        Observation {
            deaths_pm: d,
            cases_pm: 10.0,
            mobility: [Some(0.0); 4],
            stringency: None,
        }
    }

    fn date(s: &str) -> NaiveDate {
        s.parse().unwrap()
    }

    #[test]
    fn duplicate_record_rejected() {
        let recs = vec![
            Record {
                unit: "a".into(),
                date: date("2020-03-01"),
                observation: obs(1.0),
            },
            Record {
                unit: "a".into(),
                date: date("2020-03-01"),
                observation: obs(2.0),
            },
        ];
        let err = Panel::new(recs, &BTreeMap::new(), "a", date("2020-03-02")).unwrap_err();
        assert!(matches!(err, PanelError::DuplicateRecord { .. }));
    }

    #[test]
    fn non_monotone_outcome_is_flagged_not_repaired() {
        let recs = vec![
            Record {
                unit: "a".into(),
                date: date("2020-03-01"),
                observation: obs(2.0),
            },
            Record {
                unit: "a".into(),
                date: date("2020-03-02"),
                observation: obs(1.5),
            },
        ];
        let p = Panel::new(recs, &BTreeMap::new(), "a", date("2020-03-02")).unwrap();
        assert!(p
            .flags()
            .iter()
            .any(|f| f.kind == "non_monotone_outcome"));
        assert_eq!(p.observations(0)[&date("2020-03-02")].deaths_pm, 1.5);
    }
}
