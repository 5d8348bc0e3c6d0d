//! Sample-end rule: the window closes when the donors' stringency index peaks.

use std::fmt;
use std::str::FromStr;

use log::info;
use serde::{Deserialize, Serialize};

use super::AlignedPanel;
use crate::error::PanelError;

/// How the last usable day is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleEndRule {
    /// Earliest donor stringency peak.
    EarliestPeak,
    /// Mean donor peak day, rounded half away from zero.
    MeanPeak,
    /// Explicit epidemic day.
    Fixed(usize),
}

impl FromStr for SampleEndRule {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "earliest-peak" => Ok(Self::EarliestPeak),
            "mean-peak" => Ok(Self::MeanPeak),
            _ => s
                .strip_prefix("fixed:")
                .and_then(|n| n.parse().ok())
                .map(Self::Fixed)
                .ok_or_else(|| {
                    format!("invalid end rule `{s}`; expected earliest-peak, mean-peak or fixed:N")
                }),
        }
    }
}

impl fmt::Display for SampleEndRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::EarliestPeak => write!(f, "earliest-peak"),
            Self::MeanPeak => write!(f, "mean-peak"),
            Self::Fixed(d) => write!(f, "fixed:{d}"),
        }
    }
}

/// Chosen window end with the per-donor peak days behind it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleEnd {
    pub t_end: usize,
    pub rule: SampleEndRule,
    /// `(donor, epidemic day of its first stringency maximum)`.
    pub peaks: Vec<(String, usize)>,
}

/// Applies `rule` to every donor that crossed the alignment threshold.
///
/// Peak days are counted on each donor's own epidemic clock over all of its
/// observed days, so late-crossing donors still contribute.
pub fn determine_sample_end(
    panel: &AlignedPanel,
    rule: SampleEndRule,
) -> Result<SampleEnd, PanelError> {
    if let SampleEndRule::Fixed(d) = rule {
        return Ok(SampleEnd {
            t_end: d,
            rule,
            peaks: Vec::new(),
        });
    }
    let treated = panel.treated_index();
    let mut peaks = Vec::new();
    for (i, u) in panel.all_units().iter().enumerate() {
        if i == treated {
            continue;
        }
        let mut best: Option<(usize, f64)> = None;
        for (d, s) in u.stringency.iter().enumerate() {
            if let Some(v) = *s {
                if best.is_none_or(|(_, b)| v > b) {
                    best = Some((d + 1, v));
                }
            }
        }
        let (day, _) = best.ok_or_else(|| PanelError::StringencyAbsent(u.id.clone()))?;
        info!("stringency of `{}` peaks on epidemic day {day}", u.id);
        peaks.push((u.id.clone(), day));
    }
    if peaks.is_empty() {
        return Err(PanelError::TooFewDonors {
            found: 0,
            required: 1,
        });
    }
    let t_end = match rule {
        SampleEndRule::EarliestPeak => peaks.iter().map(|p| p.1).min().unwrap(),
        SampleEndRule::MeanPeak => {
            let mean = peaks.iter().map(|p| p.1 as f64).sum::<f64>() / peaks.len() as f64;
            mean.round() as usize
        }
        SampleEndRule::Fixed(_) => unreachable!(),
    };
    Ok(SampleEnd { t_end, rule, peaks })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::panel::{align_epidemic_day, Observation, Panel, Record};
    use chrono::{Days, NaiveDate};
    use std::collections::BTreeMap;

    fn panel(peaks: &[usize]) -> AlignedPanel {
        let start: NaiveDate = "2020-02-01".parse().unwrap();
        let mut recs = Vec::new();
        let mut add = |u: String, peak: Option<usize>| {
            for k in 0..80usize {
                recs.push(Record {
                    unit: u.clone(),
                    date: start + Days::new(k as u64),
                    observation: Observation {
                        deaths_pm: k as f64,
                        cases_pm: 2.0 + k as f64,
                        mobility: [Some(0.0); 4],
                        stringency: peak.map(|p| 100.0 - (k as f64 + 1.0 - p as f64).abs()),
                    },
                });
            }
        };
        add("treated".into(), None);
        for (i, p) in peaks.iter().enumerate() {
            add(format!("d{i}"), Some(*p));
        }
        let p = Panel::new(recs, &BTreeMap::new(), "treated", start + Days::new(15)).unwrap();
        align_epidemic_day(&p, 1.0).unwrap()
    }

    #[test]
    fn mean_peak_is_arithmetic_mean() {
        let a = panel(&[40, 50, 60]);
        assert_eq!(determine_sample_end(&a, SampleEndRule::MeanPeak).unwrap().t_end, 50);
        assert_eq!(determine_sample_end(&a, SampleEndRule::EarliestPeak).unwrap().t_end, 40);
    }

    #[test]
    fn common_peak_wins_under_any_rule() {
        let a = panel(&[33, 33, 33]);
        for rule in [SampleEndRule::MeanPeak, SampleEndRule::EarliestPeak] {
            assert_eq!(determine_sample_end(&a, rule).unwrap().t_end, 33);
        }
    }

    #[test]
    fn fixed_rule_needs_no_stringency() {
        let start: NaiveDate = "2020-02-01".parse().unwrap();
        let recs = (0..40usize)
            .flat_map(|k| {
                ["t", "d"].map(|u| Record {
                    unit: u.into(),
                    date: start + Days::new(k as u64),
                    observation: Observation {
                        deaths_pm: 0.0,
                        cases_pm: 5.0,
                        mobility: [Some(0.0); 4],
                        stringency: None,
                    },
                })
            })
            .collect();
        let p = Panel::new(recs, &BTreeMap::new(), "t", start + Days::new(15)).unwrap();
        let a = align_epidemic_day(&p, 1.0).unwrap();
        assert!(matches!(
            determine_sample_end(&a, SampleEndRule::MeanPeak),
            Err(PanelError::StringencyAbsent(_))
        ));
        // 15 pre days + 34 post days
        let end = determine_sample_end(&a, SampleEndRule::Fixed(49)).unwrap();
        assert_eq!(end.t_end - a.t0(), 34);
    }

    #[test]
    fn rule_parsing_round_trips() {
        for s in ["earliest-peak", "mean-peak", "fixed:49"] {
            assert_eq!(s.parse::<SampleEndRule>().unwrap().to_string(), s);
        }
        assert!("fixed:x".parse::<SampleEndRule>().is_err());
    }
}
