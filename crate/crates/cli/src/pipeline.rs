//! Shared front half of every data command: load, align, window, mobility.

use std::collections::BTreeMap;

use ascmlab_core::estimate::{EstimatorConfig, LambdaChoice};
use ascmlab_core::panel::{
    align_epidemic_day, build_mobility_index, determine_sample_end, load_panel, AlignedPanel,
    ColumnSchema, MobilityConfig, SampleEnd, StaticSchema, TreatmentOverride,
};
use ascmlab_core::solver::{Dispersion, ScmConfig};
use ascmlab_core::specs::PredictorSpec;
use log::{info, warn};
use serde_json::{json, Value};

use crate::args::{DataArgs, EstimatorArgs};
use crate::error::{CliError, CliResult};
use crate::output::InputDigest;

pub struct Prepared {
    pub panel: AlignedPanel,
    pub sample_end: SampleEnd,
    pub inputs: Vec<InputDigest>,
}

pub fn prepare(data: &DataArgs, needs_mobility: bool) -> CliResult<Prepared> {
    let inputs = vec![
        InputDigest::of("outcome", &data.outcome)?,
        InputDigest::of("covariates", &data.covariates)?,
    ];
    let treatment = match (&data.treated, data.treatment_date) {
        (Some(unit), Some(date)) => Some(TreatmentOverride {
            unit: unit.clone(),
            date,
        }),
        _ => None,
    };
    let panel = load_panel(
        &data.outcome,
        &data.covariates,
        &ColumnSchema::default(),
        &StaticSchema::default(),
        treatment.as_ref(),
    )?;
    let aligned = align_epidemic_day(&panel, data.align_threshold)?;
    let sample_end = determine_sample_end(&aligned, data.end_rule)?;
    let windowed = if sample_end.t_end == aligned.t_end() {
        aligned
    } else {
        aligned.with_sample_end(sample_end.t_end)?
    };
    info!(
        "window: T0 = {}, T_end = {} ({}), {} donors retained",
        windowed.t0(),
        windowed.t_end(),
        sample_end.rule,
        windowed.n_donors()
    );
    let panel = match build_mobility_index(&windowed, &MobilityConfig::default()) {
        Ok(p) => p,
        Err(e) if !needs_mobility => {
            warn!("no mobility composite: {e}");
            windowed
        }
        Err(e) => return Err(e.into()),
    };
    Ok(Prepared {
        panel,
        sample_end,
        inputs,
    })
}

pub fn parse_spec(id: &str) -> CliResult<PredictorSpec> {
    Ok(id.parse::<PredictorSpec>()?)
}

pub fn estimator_config(args: &EstimatorArgs) -> CliResult<EstimatorConfig> {
    if !(args.zeta >= 0.0 && args.zeta.is_finite()) {
        return Err(CliError::Input(format!("--zeta must be a non-negative number, got {}", args.zeta)));
    }
    if !(args.alpha > 0.0 && args.alpha <= 0.5) {
        return Err(CliError::Input(format!("--alpha must lie in (0, 0.5], got {}", args.alpha)));
    }
    Ok(EstimatorConfig {
        scm: ScmConfig {
            zeta: args.zeta,
            dispersion: if args.zeta > 0.0 {
                Dispersion::Squared
            } else {
                Dispersion::None
            },
            ..ScmConfig::default()
        },
        lambda: LambdaChoice::Cv {
            rule: args.lambda_rule,
            grid: None,
        },
        normalize: args.normalize,
    })
}

/// Configuration snapshot for the manifest.
pub fn config_snapshot(data: &DataArgs, est: &EstimatorArgs, prepared: &Prepared) -> BTreeMap<String, Value> {
    let mut m = BTreeMap::new();
    m.insert("spec".into(), json!(est.spec));
    m.insert("lambda_rule".into(), json!(est.lambda_rule));
    m.insert("zeta".into(), json!(est.zeta));
    m.insert("normalize".into(), json!(est.normalize));
    m.insert("alpha".into(), json!(est.alpha));
    m.insert("align_threshold".into(), json!(data.align_threshold));
    m.insert("end_rule".into(), json!(data.end_rule.to_string()));
    m.insert("treated".into(), json!(prepared.panel.treated_id()));
    m.insert("treatment_date".into(), json!(prepared.panel.treatment_date().to_string()));
    m.insert("t0".into(), json!(prepared.panel.t0()));
    m.insert("t_end".into(), json!(prepared.panel.t_end()));
    m.insert("stringency_peaks".into(), json!(prepared.sample_end.peaks));
    m
}
