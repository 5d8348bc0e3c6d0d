//! Epidemic-day alignment and the dense [`AlignedPanel`].

use std::sync::Arc;

use chrono::{Days, NaiveDate};
use log::{debug, info};
use serde::{Deserialize, Serialize};

use super::mobility::{compute_mobility, MobilityConfig, MobilityIndex};
use super::{ExcludedDonor, Panel, Record, StaticCovariates, ValidationFlag, ValidationReport};
use crate::error::PanelError;

/// Why a donor is not part of the estimation pool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DonorExclusion {
    NeverCrossesThreshold { threshold: f64 },
    InsufficientCoverage {
        available_days: usize,
        required_days: usize,
    },
    LeftOut,
}

/// A unit re-indexed on its own epidemic clock. Index 0 is day 1.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignedUnit {
    pub id: String,
    pub day_one: NaiveDate,
    pub outcome: Vec<f64>,
    pub cases: Vec<f64>,
    pub mobility: Vec<[Option<f64>; 4]>,
    pub stringency: Vec<Option<f64>>,
    pub statics: Option<StaticCovariates>,
    source_index: usize,
}

impl AlignedUnit {
    /// Number of consecutive observed days starting at day 1.
    pub fn available_days(&self) -> usize {
        self.outcome.len()
    }
}

/// Borrowed view of one unit over `[1, T_end]`.
#[derive(Debug, Clone, Copy)]
pub struct UnitView<'a> {
    pub id: &'a str,
    pub outcome: &'a [f64],
    pub cases: &'a [f64],
    pub mob: Option<&'a [f64]>,
    pub statics: Option<&'a StaticCovariates>,
}

/// Panel aligned on epidemic days with a fixed estimation window.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignedPanel {
    threshold: f64,
    units: Vec<AlignedUnit>,
    never_crossed: Vec<(usize, String)>,
    left_out: Vec<usize>,
    input_donors: usize,
    treated: usize,
    donors: Vec<usize>,
    excluded: Vec<ExcludedDonor>,
    t0: usize,
    t_end: usize,
    treatment_date: NaiveDate,
    mobility_config: Option<MobilityConfig>,
    pub(super) mobility: Option<Arc<MobilityIndex>>,
    flags: Vec<ValidationFlag>,
}

fn crossing(panel: &Panel, unit: usize, threshold: f64) -> Option<NaiveDate> {
    panel
        .observations(unit)
        .iter()
        .find(|(_, o)| o.cases_pm > threshold)
        .map(|(d, _)| *d)
}

fn aligned_unit(panel: &Panel, unit: usize, day_one: NaiveDate) -> AlignedUnit {
    let obs = panel.observations(unit);
    let mut u = AlignedUnit {
        id: panel.units()[unit].clone(),
        day_one,
        outcome: Vec::new(),
        cases: Vec::new(),
        mobility: Vec::new(),
        stringency: Vec::new(),
        statics: panel.statics(unit).copied(),
        source_index: unit,
    };
    let mut date = day_one;
    while let Some(o) = obs.get(&date) {
        u.outcome.push(o.deaths_pm);
        u.cases.push(o.cases_pm);
        u.mobility.push(o.mobility);
        u.stringency.push(o.stringency);
        date = match date.checked_add_days(Days::new(1)) {
            Some(d) => d,
            None => break,
        };
    }
    u
}

/// Re-indexes every unit so that day 1 is the first date its cumulative cases
/// per million exceed `threshold`.
///
/// `T0` is the number of treated-unit days before the treatment date. `T_end`
/// starts at the treated unit's last consecutively observed day; narrow it with
/// [`AlignedPanel::with_sample_end`]. Donors that never cross the threshold or
/// lack any day in `[1, T_end]` are excluded with a recorded reason.
pub fn align_epidemic_day(panel: &Panel, threshold: f64) -> Result<AlignedPanel, PanelError> {
    if !(threshold > 0.0 && threshold.is_finite()) {
        return Err(PanelError::InvalidConfig(format!(
            "alignment threshold must be positive, got {threshold}"
        )));
    }
    let treated_src = panel.treated_index();
    let mut units = Vec::new();
    let mut never_crossed = Vec::new();
    let mut treated = None;
    for i in 0..panel.units().len() {
        match crossing(panel, i, threshold) {
            Some(d) => {
                if i == treated_src {
                    treated = Some(units.len());
                }
                units.push(aligned_unit(panel, i, d));
            }
            None if i == treated_src => {
                return Err(PanelError::TreatedNeverCrosses {
                    unit: panel.treated_unit().to_string(),
                    threshold,
                })
            }
            None => never_crossed.push((i, panel.units()[i].clone())),
        }
    }
    let treated = treated.expect("treated unit crosses");
    let day_one = units[treated].day_one;
    let t0 = (panel.treatment_date() - day_one).num_days();
    if t0 < 1 {
        return Err(PanelError::NoPreTreatmentPeriod {
            treatment: panel.treatment_date().to_string(),
            day_one: day_one.to_string(),
        });
    }
    let t0 = t0 as usize;
    let t_end = units[treated].available_days();
    if t_end <= t0 {
        return Err(PanelError::InvalidSampleEnd {
            t_end,
            t0,
            max: t_end,
        });
    }
    info!(
        "aligned {} units at threshold {threshold}: day 1 of `{}` is {day_one}, T0 = {t0}",
        units.len(),
        panel.treated_unit()
    );
    let mut aligned = AlignedPanel {
        threshold,
        units,
        never_crossed,
        left_out: Vec::new(),
        input_donors: panel.units().len() - 1,
        treated,
        donors: Vec::new(),
        excluded: Vec::new(),
        t0,
        t_end,
        treatment_date: panel.treatment_date(),
        mobility_config: None,
        mobility: None,
        flags: panel.flags().to_vec(),
    };
    aligned.screen();
    Ok(aligned)
}

impl AlignedPanel {
    fn screen(&mut self) {
        let mut donors = Vec::new();
        let mut excluded: Vec<(usize, ExcludedDonor)> = self
            .never_crossed
            .iter()
            .map(|(src, id)| {
                (
                    *src,
                    ExcludedDonor {
                        unit: id.clone(),
                        reason: DonorExclusion::NeverCrossesThreshold {
                            threshold: self.threshold,
                        },
                    },
                )
            })
            .collect();
        for (i, u) in self.units.iter().enumerate() {
            if i == self.treated {
                continue;
            }
            if self.left_out.contains(&i) {
                excluded.push((
                    u.source_index,
                    ExcludedDonor {
                        unit: u.id.clone(),
                        reason: DonorExclusion::LeftOut,
                    },
                ));
            } else if u.available_days() < self.t_end {
                debug!(
                    "excluding donor `{}`: {} of {} days",
                    u.id,
                    u.available_days(),
                    self.t_end
                );
                excluded.push((
                    u.source_index,
                    ExcludedDonor {
                        unit: u.id.clone(),
                        reason: DonorExclusion::InsufficientCoverage {
                            available_days: u.available_days(),
                            required_days: self.t_end,
                        },
                    },
                ));
            } else {
                donors.push(i);
            }
        }
        excluded.sort_by_key(|(src, _)| *src);
        self.donors = donors;
        self.excluded = excluded.into_iter().map(|(_, e)| e).collect();
    }

    fn refresh_mobility(&mut self) -> Result<(), PanelError> {
        if let Some(cfg) = self.mobility_config.clone() {
            self.mobility = Some(Arc::new(compute_mobility(self, &cfg)?));
        }
        Ok(())
    }

    pub(super) fn set_mobility(&mut self, cfg: MobilityConfig, index: MobilityIndex) {
        self.mobility_config = Some(cfg);
        self.mobility = Some(Arc::new(index));
    }

    /// Restricts the window to `[1, t_end]` and re-screens donors.
    pub fn with_sample_end(&self, t_end: usize) -> Result<AlignedPanel, PanelError> {
        let max = self.units[self.treated].available_days();
        if t_end <= self.t0 || t_end > max {
            return Err(PanelError::InvalidSampleEnd {
                t_end,
                t0: self.t0,
                max,
            });
        }
        let mut out = self.clone();
        out.t_end = t_end;
        out.screen();
        out.refresh_mobility()?;
        Ok(out)
    }

    /// Drops one retained donor, recomputing anything pooled over donors.
    pub fn without_donor(&self, id: &str) -> Result<AlignedPanel, PanelError> {
        let i = self
            .donors
            .iter()
            .copied()
            .find(|&i| self.units[i].id == id)
            .ok_or_else(|| PanelError::UnknownUnit(id.to_string()))?;
        let mut out = self.clone();
        out.left_out.push(i);
        out.screen();
        out.refresh_mobility()?;
        Ok(out)
    }

    /// Re-labels donor `id` as the treated unit; the original treated unit
    /// joins the donor pool. The window is unchanged.
    pub fn with_treated(&self, id: &str) -> Result<AlignedPanel, PanelError> {
        let i = self
            .donors
            .iter()
            .copied()
            .find(|&i| self.units[i].id == id)
            .ok_or_else(|| PanelError::UnknownUnit(id.to_string()))?;
        let mut out = self.clone();
        let old = out.treated;
        out.treated = i;
        out.donors.retain(|&d| d != i);
        out.donors.push(old);
        out.donors.sort_by_key(|&d| out.units[d].source_index);
        out.treatment_date = out.units[i]
            .day_one
            .checked_add_days(Days::new(out.t0 as u64))
            .unwrap_or(out.treatment_date);
        out.refresh_mobility()?;
        Ok(out)
    }

    /// Moves the treatment to the start of day `fake_t0 + 1` and ends the
    /// sample at the true `T0`. The donor pool is kept as is.
    pub fn with_fake_treatment(&self, fake_t0: usize) -> Result<AlignedPanel, PanelError> {
        if fake_t0 == 0 || fake_t0 >= self.t0 {
            return Err(PanelError::InvalidConfig(format!(
                "fake pre-treatment length {fake_t0} must lie in [1, {})",
                self.t0
            )));
        }
        let mut out = self.clone();
        out.t_end = self.t0;
        out.t0 = fake_t0;
        out.treatment_date = out.units[out.treated]
            .day_one
            .checked_add_days(Days::new(fake_t0 as u64))
            .unwrap_or(out.treatment_date);
        out.refresh_mobility()?;
        Ok(out)
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    /// Last pre-treatment day.
    pub fn t0(&self) -> usize {
        self.t0
    }

    /// Last day of the estimation window.
    pub fn t_end(&self) -> usize {
        self.t_end
    }

    pub fn treatment_date(&self) -> NaiveDate {
        self.treatment_date
    }

    pub fn treated_id(&self) -> &str {
        &self.units[self.treated].id
    }

    pub fn donor_ids(&self) -> Vec<&str> {
        self.donors.iter().map(|&i| self.units[i].id.as_str()).collect()
    }

    pub fn n_donors(&self) -> usize {
        self.donors.len()
    }

    /// Number of donors in the input panel, retained or not.
    pub fn input_donor_count(&self) -> usize {
        self.input_donors
    }

    pub fn excluded(&self) -> &[ExcludedDonor] {
        &self.excluded
    }

    pub fn flags(&self) -> &[ValidationFlag] {
        &self.flags
    }

    pub fn validation_report(&self) -> ValidationReport {
        ValidationReport {
            excluded_donors: self.excluded.clone(),
            flags: self.flags.clone(),
        }
    }

    pub fn mobility(&self) -> Option<&MobilityIndex> {
        self.mobility.as_deref()
    }

    /// Every unit that crossed the threshold, retained or not.
    pub fn all_units(&self) -> &[AlignedUnit] {
        &self.units
    }

    pub(crate) fn retained_indices(&self) -> Vec<usize> {
        let mut v = Vec::with_capacity(self.donors.len() + 1);
        v.push(self.treated);
        v.extend(&self.donors);
        v.sort_by_key(|&i| self.units[i].source_index);
        v
    }

    pub(crate) fn treated_index(&self) -> usize {
        self.treated
    }

    fn view(&self, i: usize) -> UnitView<'_> {
        let u = &self.units[i];
        UnitView {
            id: &u.id,
            outcome: &u.outcome[..self.t_end],
            cases: &u.cases[..self.t_end],
            mob: self
                .mobility
                .as_ref()
                .and_then(|m| m.series(i))
                .map(|s| &s[..self.t_end]),
            statics: u.statics.as_ref(),
        }
    }

    pub fn treated_view(&self) -> UnitView<'_> {
        self.view(self.treated)
    }

    pub fn donor_views(&self) -> Vec<UnitView<'_>> {
        self.donors.iter().map(|&i| self.view(i)).collect()
    }

    /// Converts the retained units over `[1, T_end]` back into a calendar panel.
    pub fn to_panel(&self) -> Result<Panel, PanelError> {
        let mut records = Vec::new();
        let mut statics = std::collections::BTreeMap::new();
        for i in self.retained_indices() {
            let u = &self.units[i];
            for d in 0..self.t_end {
                records.push(Record {
                    unit: u.id.clone(),
                    date: u.day_one + Days::new(d as u64),
                    observation: super::Observation {
                        deaths_pm: u.outcome[d],
                        cases_pm: u.cases[d],
                        mobility: u.mobility[d],
                        stringency: u.stringency[d],
                    },
                });
            }
            if let Some(s) = u.statics {
                statics.insert(u.id.clone(), s);
            }
        }
        Panel::new(records, &statics, self.treated_id(), self.treatment_date)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::panel::{Observation, Record};
    use std::collections::BTreeMap;

    fn date(s: &str) -> NaiveDate {
        s.parse().unwrap()
    }

    /// `cases` per unit starting 2020-02-20, one value per day.
    fn panel(series: &[(&str, Vec<f64>)], treated: &str, treatment: &str) -> Panel {
        let start = date("2020-02-20");
        let mut recs = Vec::new();
        for (u, cases) in series {
            for (k, c) in cases.iter().enumerate() {
                recs.push(Record {
                    unit: u.to_string(),
                    date: start + Days::new(k as u64),
                    observation: Observation {
                        deaths_pm: k as f64,
                        cases_pm: *c,
                        mobility: [Some(k as f64); 4],
                        stringency: Some(10.0),
                    },
                });
            }
        }
        Panel::new(recs, &BTreeMap::new(), treated, date(treatment)).unwrap()
    }

    #[test]
    fn italy_like_calendar_gives_fifteen_pre_days() {
        // crosses 1 case/million on 2020-02-23; lockdown 2020-03-09
        let mut cases = vec![0.1, 0.2, 0.5];
        cases.extend((0..60).map(|k| 1.5 + k as f64));
        let p = panel(&[("ita", cases.clone()), ("esp", cases)], "ita", "2020-03-09");
        let a = align_epidemic_day(&p, 1.0).unwrap();
        assert_eq!(a.treated_view().outcome[0], 3.0);
        assert_eq!(a.t0(), 15);
    }

    #[test]
    fn first_observation_above_threshold_is_day_one() {
        let cases: Vec<f64> = (0..30).map(|k| 5.0 + k as f64).collect();
        let p = panel(&[("ita", cases.clone()), ("esp", cases)], "ita", "2020-03-01");
        let a = align_epidemic_day(&p, 1.0).unwrap();
        assert_eq!(a.all_units()[0].day_one, date("2020-02-20"));
        assert_eq!(a.t0(), 10);
    }

    #[test]
    fn late_crossing_donor_excluded_with_reason() {
        let early: Vec<f64> = (0..30).map(|k| 2.0 + k as f64).collect();
        let mut late = vec![0.0; 25];
        late.extend([2.0; 5]);
        let never = vec![0.0; 30];
        let p = panel(
            &[("ita", early.clone()), ("esp", early), ("late", late), ("zero", never)],
            "ita",
            "2020-03-01",
        );
        let a = align_epidemic_day(&p, 1.0).unwrap();
        assert_eq!(a.donor_ids(), vec!["esp"]);
        assert_eq!(a.excluded().len(), 2);
        assert_eq!(a.n_donors() + a.excluded().len(), a.input_donor_count());
        assert!(matches!(
            a.excluded()[0].reason,
            DonorExclusion::InsufficientCoverage {
                available_days: 5,
                ..
            }
        ));
        assert!(matches!(
            a.excluded()[1].reason,
            DonorExclusion::NeverCrossesThreshold { .. }
        ));
    }

    #[test]
    fn treated_never_crossing_is_an_error() {
        let p = panel(&[("ita", vec![0.0; 10]), ("esp", vec![3.0; 10])], "ita", "2020-02-25");
        assert!(matches!(
            align_epidemic_day(&p, 1.0).unwrap_err(),
            PanelError::TreatedNeverCrosses { .. }
        ));
    }

    #[test]
    fn sample_end_rescreens_donors() {
        let long: Vec<f64> = (0..40).map(|k| 2.0 + k as f64).collect();
        let short: Vec<f64> = (0..20).map(|k| 2.0 + k as f64).collect();
        let p = panel(&[("ita", long.clone()), ("esp", long), ("fra", short)], "ita", "2020-03-01");
        let a = align_epidemic_day(&p, 1.0).unwrap();
        assert_eq!(a.donor_ids(), vec!["esp"]);
        let b = a.with_sample_end(20).unwrap();
        assert_eq!(b.donor_ids(), vec!["esp", "fra"]);
        assert!(b.excluded().is_empty());
        assert!(a.with_sample_end(10).is_err());
    }

    #[test]
    fn alignment_is_idempotent() {
        let mut cases = vec![0.1, 0.9];
        cases.extend((0..40).map(|k| 1.5 + k as f64));
        let mut other = vec![0.0; 5];
        other.extend((0..37).map(|k| 1.1 + k as f64));
        let p = panel(&[("ita", cases), ("esp", other)], "ita", "2020-03-05");
        let a = align_epidemic_day(&p, 1.0).unwrap().with_sample_end(30).unwrap();
        let b = align_epidemic_day(&a.to_panel().unwrap(), 1.0)
            .unwrap()
            .with_sample_end(30)
            .unwrap();
        assert_eq!(a.t0(), b.t0());
        assert_eq!(a.t_end(), b.t_end());
        assert_eq!(a.donor_ids(), b.donor_ids());
        for (x, y) in a.donor_views().iter().zip(b.donor_views()) {
            assert_eq!(x.outcome, y.outcome);
            assert_eq!(x.cases, y.cases);
        }
        assert_eq!(a.treated_view().outcome, b.treated_view().outcome);
    }
}
