//! CSV ingestion.

use std::collections::BTreeMap;
use std::path::Path;

use chrono::NaiveDate;

use super::{Observation, Panel, Record, StaticCovariates};
use crate::error::PanelError;

/// Column names of the long-format outcome file.
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnSchema {
    pub unit: String,
    pub date: String,
    pub deaths: String,
    pub cases: String,
    /// In [`super::MOBILITY_SUBINDICES`] order.
    pub mobility: [String; 4],
    pub stringency: String,
    /// Optional event marker: `1` on the first treated date of the treated unit.
    pub treated: String,
}

impl Default for ColumnSchema {
    fn default() -> Self {
        Self {
            unit: "unit".into(),
            date: "date".into(),
            deaths: "deaths_pm".into(),
            cases: "cases_pm".into(),
            mobility: [
                "mob_grocery".into(),
                "mob_transit".into(),
                "mob_retail".into(),
                "mob_work".into(),
            ],
            stringency: "stringency".into(),
            treated: "treated".into(),
        }
    }
}

/// Column names of the static covariate file.
#[derive(Debug, Clone, PartialEq)]
pub struct StaticSchema {
    pub unit: String,
    pub hsp: String,
    pub age: String,
    pub hld: String,
}

impl Default for StaticSchema {
    fn default() -> Self {
        Self {
            unit: "unit".into(),
            hsp: "hsp".into(),
            age: "age".into(),
            hld: "hld".into(),
        }
    }
}

/// Treated unit and date given on the command line instead of in the file.
#[derive(Debug, Clone, PartialEq)]
pub struct TreatmentOverride {
    pub unit: String,
    pub date: NaiveDate,
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> PanelError {
    PanelError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

fn column(headers: &csv::StringRecord, name: &str, file: &Path) -> Result<usize, PanelError> {
    headers
        .iter()
        .position(|h| h.trim() == name)
        .ok_or_else(|| PanelError::MissingColumn {
            file: file.display().to_string(),
            column: name.to_string(),
        })
}

fn optional_value(s: &str) -> Result<Option<f64>, ()> {
    let s = s.trim();
    if s.is_empty() || s.eq_ignore_ascii_case("na") || s.eq_ignore_ascii_case("nan") {
        return Ok(None);
    }
    s.parse::<f64>().map(Some).map_err(|_| ())
}

fn required_value(s: &str) -> Result<f64, ()> {
    match optional_value(s)? {
        Some(v) if v.is_finite() => Ok(v),
        _ => Err(()),
    }
}

/// Reads the outcome and static-covariate files into a validated [`Panel`].
///
/// The treated unit comes from `treatment` when given, otherwise from the
/// schema's `treated` column, which must mark exactly one (unit, date).
pub fn load_panel(
    outcome_file: &Path,
    covariate_file: &Path,
    schema: &ColumnSchema,
    static_schema: &StaticSchema,
    treatment: Option<&TreatmentOverride>,
) -> Result<Panel, PanelError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(outcome_file)
        .map_err(|e| io_err(outcome_file, e))?;
    let headers = rdr.headers().map_err(|e| io_err(outcome_file, e))?.clone();
    let c_unit = column(&headers, &schema.unit, outcome_file)?;
    let c_date = column(&headers, &schema.date, outcome_file)?;
    let c_deaths = column(&headers, &schema.deaths, outcome_file)?;
    let c_cases = column(&headers, &schema.cases, outcome_file)?;
    let c_mob = [
        column(&headers, &schema.mobility[0], outcome_file)?,
        column(&headers, &schema.mobility[1], outcome_file)?,
        column(&headers, &schema.mobility[2], outcome_file)?,
        column(&headers, &schema.mobility[3], outcome_file)?,
    ];
    let c_si = headers.iter().position(|h| h.trim() == schema.stringency);
    let c_treated = headers.iter().position(|h| h.trim() == schema.treated);
    if treatment.is_none() && c_treated.is_none() {
        return Err(PanelError::MissingColumn {
            file: outcome_file.display().to_string(),
            column: schema.treated.clone(),
        });
    }

    let mut records = Vec::new();
    let mut bad_rows = Vec::new();
    let mut events: BTreeMap<String, Vec<NaiveDate>> = BTreeMap::new();
    for (i, row) in rdr.records().enumerate() {
        // header is line 1
        let line = i + 2;
        let row = match row {
            Ok(r) => r,
            Err(_) => {
                bad_rows.push(line);
                continue;
            }
        };
        let get = |c: usize| row.get(c).unwrap_or("");
        let parsed = (|| -> Result<Record, ()> {
            let unit = get(c_unit).to_string();
            if unit.is_empty() {
                return Err(());
            }
            let date = NaiveDate::parse_from_str(get(c_date), "%Y-%m-%d").map_err(|_| ())?;
            let deaths_pm = required_value(get(c_deaths))?;
            let cases_pm = required_value(get(c_cases))?;
            if deaths_pm < 0.0 || cases_pm < 0.0 {
                return Err(());
            }
            let mut mobility = [None; 4];
            for (m, c) in mobility.iter_mut().zip(c_mob) {
                *m = optional_value(get(c))?;
            }
            let stringency = match c_si {
                Some(c) => optional_value(get(c))?,
                None => None,
            };
            if let Some(s) = stringency {
                if !(0.0..=100.0).contains(&s) {
                    return Err(());
                }
            }
            Ok(Record {
                unit,
                date,
                observation: Observation {
                    deaths_pm,
                    cases_pm,
                    mobility,
                    stringency,
                },
            })
        })();
        match parsed {
            Ok(rec) => {
                if let Some(c) = c_treated {
                    let flag = get(c).trim();
                    if flag == "1" || flag.eq_ignore_ascii_case("true") {
                        events.entry(rec.unit.clone()).or_default().push(rec.date);
                    }
                }
                records.push(rec);
            }
            Err(()) => bad_rows.push(line),
        }
    }
    if !bad_rows.is_empty() {
        return Err(PanelError::UnparseableRows {
            file: outcome_file.display().to_string(),
            rows: bad_rows,
            detail: "expected unit, ISO date, non-negative deaths/cases, optional numeric mobility and stringency in [0, 100]".into(),
        });
    }
    if records.is_empty() {
        return Err(PanelError::NoObservations);
    }

    let (treated_unit, treatment_date) = match treatment {
        Some(t) => (t.unit.clone(), t.date),
        None => treatment_from_events(events)?,
    };
    let statics = load_statics(covariate_file, static_schema)?;
    Panel::new(records, &statics, &treated_unit, treatment_date)
}

fn treatment_from_events(
    mut events: BTreeMap<String, Vec<NaiveDate>>,
) -> Result<(String, NaiveDate), PanelError> {
    for (unit, dates) in events.iter_mut() {
        dates.sort_unstable();
        dates.dedup();
        if dates.len() > 1 {
            return Err(PanelError::MultipleTreatmentDates {
                unit: unit.clone(),
                dates: dates.iter().map(|d| d.to_string()).collect(),
            });
        }
    }
    match events.len() {
        0 => Err(PanelError::NoTreatedUnit),
        1 => {
            let (u, d) = events.into_iter().next().unwrap();
            Ok((u, d[0]))
        }
        _ => Err(PanelError::MultipleTreatedUnits {
            units: events.into_keys().collect(),
        }),
    }
}

fn load_statics(
    path: &Path,
    schema: &StaticSchema,
) -> Result<BTreeMap<String, StaticCovariates>, PanelError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| io_err(path, e))?;
    let headers = rdr.headers().map_err(|e| io_err(path, e))?.clone();
    let c_unit = column(&headers, &schema.unit, path)?;
    let c_hsp = column(&headers, &schema.hsp, path)?;
    let c_age = column(&headers, &schema.age, path)?;
    let c_hld = column(&headers, &schema.hld, path)?;
    let mut out = BTreeMap::new();
    let mut bad_rows = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let line = i + 2;
        let Ok(row) = row else {
            bad_rows.push(line);
            continue;
        };
        let get = |c: usize| row.get(c).unwrap_or("");
        let vals = (
            required_value(get(c_hsp)),
            required_value(get(c_age)),
            required_value(get(c_hld)),
        );
        match vals {
            (Ok(hsp), Ok(age), Ok(hld)) if hsp > 0.0 && age > 0.0 && hld > 0.0 => {
                let unit = get(c_unit).to_string();
                if out
                    .insert(unit.clone(), StaticCovariates { hsp, age, hld })
                    .is_some()
                {
                    return Err(PanelError::DuplicateRecord {
                        unit,
                        date: "static".into(),
                    });
                }
            }
            _ => bad_rows.push(line),
        }
    }
    if !bad_rows.is_empty() {
        return Err(PanelError::UnparseableRows {
            file: path.display().to_string(),
            rows: bad_rows,
            detail: "expected positive numeric hsp, age, hld".into(),
        });
    }
    Ok(out)
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Writes `panel` in the layout [`load_panel`] reads with default schemas:
/// the treated unit's row on the treatment date carries `treated = 1`.
pub fn write_panel(panel: &Panel, outcome_file: &Path, covariate_file: &Path) -> Result<(), PanelError> {
    let s = ColumnSchema::default();
    let mut w = csv::Writer::from_path(outcome_file).map_err(|e| io_err(outcome_file, e))?;
    let header = [
        &s.unit, &s.date, &s.deaths, &s.cases, &s.mobility[0], &s.mobility[1], &s.mobility[2],
        &s.mobility[3], &s.stringency, &s.treated,
    ];
    w.write_record(header).map_err(|e| io_err(outcome_file, e))?;
    for r in panel.records() {
        let o = r.observation;
        let event = r.unit == panel.treated_unit() && r.date == panel.treatment_date();
        let row = [
            r.unit.clone(),
            r.date.to_string(),
            o.deaths_pm.to_string(),
            o.cases_pm.to_string(),
            cell(o.mobility[0]),
            cell(o.mobility[1]),
            cell(o.mobility[2]),
            cell(o.mobility[3]),
            cell(o.stringency),
            if event { "1" } else { "0" }.to_string(),
        ];
        w.write_record(&row).map_err(|e| io_err(outcome_file, e))?;
    }
    w.flush().map_err(|e| io_err(outcome_file, e))?;

    let ss = StaticSchema::default();
    let mut w = csv::Writer::from_path(covariate_file).map_err(|e| io_err(covariate_file, e))?;
    w.write_record([&ss.unit, &ss.hsp, &ss.age, &ss.hld])
        .map_err(|e| io_err(covariate_file, e))?;
    for (u, c) in panel.static_map() {
        w.write_record([u, c.hsp.to_string(), c.age.to_string(), c.hld.to_string()])
            .map_err(|e| io_err(covariate_file, e))?;
    }
    w.flush().map_err(|e| io_err(covariate_file, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    const HEADER: &str =
        "unit,date,deaths_pm,cases_pm,mob_grocery,mob_transit,mob_retail,mob_work,stringency,treated\n";

    fn write(dir: &tempfile::TempDir, name: &str, body: &str) -> std::path::PathBuf {
        let p = dir.path().join(name);
        std::fs::File::create(&p)
            .unwrap()
            .write_all(body.as_bytes())
            .unwrap();
        p
    }

    fn statics(dir: &tempfile::TempDir) -> std::path::PathBuf {
        write(dir, "s.csv", "unit,hsp,age,hld\nita,3.18,45.5,2.4\nesp,2.97,43.9,2.5\n")
    }

    fn load(dir: &tempfile::TempDir, body: &str) -> Result<Panel, PanelError> {
        let o = write(dir, "o.csv", body);
        load_panel(
            &o,
            &statics(dir),
            &ColumnSchema::default(),
            &StaticSchema::default(),
            None,
        )
    }

    #[test]
    fn empty_file_has_no_observations() {
        let dir = tempfile::tempdir().unwrap();
        assert_eq!(load(&dir, HEADER).unwrap_err(), PanelError::NoObservations);
    }

    #[test]
    fn multiple_treatment_dates_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let body = format!(
            "{HEADER}ita,2020-03-01,1,2,0,0,0,0,10,1\nita,2020-03-02,1,2,0,0,0,0,10,1\nesp,2020-03-01,1,2,0,0,0,0,10,0\n"
        );
        assert!(matches!(
            load(&dir, &body).unwrap_err(),
            PanelError::MultipleTreatmentDates { .. }
        ));
    }

    #[test]
    fn multiple_treated_units_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let body = format!(
            "{HEADER}ita,2020-03-01,1,2,0,0,0,0,10,1\nesp,2020-03-01,1,2,0,0,0,0,10,1\n"
        );
        assert!(matches!(
            load(&dir, &body).unwrap_err(),
            PanelError::MultipleTreatedUnits { .. }
        ));
    }

    #[test]
    fn zero_treated_units_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let body = format!("{HEADER}ita,2020-03-01,1,2,0,0,0,0,10,0\n");
        assert_eq!(load(&dir, &body).unwrap_err(), PanelError::NoTreatedUnit);
    }

    #[test]
    fn unparseable_rows_are_listed() {
        let dir = tempfile::tempdir().unwrap();
        let body = format!(
            "{HEADER}ita,2020-03-01,1,2,0,0,0,0,10,1\nita,03/02/2020,1,2,0,0,0,0,10,0\nesp,2020-03-01,x,2,0,0,0,0,10,0\n"
        );
        match load(&dir, &body).unwrap_err() {
            PanelError::UnparseableRows { rows, .. } => assert_eq!(rows, vec![3, 4]),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn missing_column_named() {
        let dir = tempfile::tempdir().unwrap();
        let body = "unit,date,deaths_pm\nita,2020-03-01,1\n";
        match load(&dir, body).unwrap_err() {
            PanelError::MissingColumn { column, .. } => assert_eq!(column, "cases_pm"),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn optional_fields_may_be_blank() {
        let dir = tempfile::tempdir().unwrap();
        let body = format!(
            "{HEADER}ita,2020-03-01,1,2,,NA,0,0,,1\nesp,2020-03-01,1,2,0,0,0,0,10,0\n"
        );
        let p = load(&dir, &body).unwrap();
        assert_eq!(p.units(), &["ita".to_string(), "esp".to_string()]);
        let o = p.observations(0).values().next().unwrap();
        assert_eq!(o.mobility[0], None);
        assert_eq!(o.mobility[1], None);
        assert_eq!(o.stringency, None);
        assert_eq!(p.statics(1).unwrap().age, 43.9);
    }
}
