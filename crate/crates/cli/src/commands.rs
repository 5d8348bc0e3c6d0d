use std::collections::BTreeMap;
use std::fs;

use ascmlab_core::estimate::{estimate, Estimate, EstimatorConfig};
use ascmlab_core::inference::{
    in_space_placebo_with, in_time_placebo, jackknife_band_from, jackknife_plus_band,
    leave_one_out_donors, refit_without_each, run_spec_grid, IntervalBand, LooReport, PlaceboTable,
    SpecGridReport,
};
use ascmlab_core::panel::AlignedPanel;
use ascmlab_core::solver::CvResult;
use ascmlab_core::specs::{balance_table, enumerate_specs, ResolvedSpec};
use ascmlab_core::synthgen::{run_replication_study, ReplicationStudy, SyntheticFactorConfig};
use chrono::{Days, NaiveDate};
use log::{info, warn};
use nalgebra::DVector;
use serde_json::{json, Value};

use crate::args::{FitArgs, PlaceboArgs, PlaceboMode, ReportArgs, SimulateArgs};
use crate::error::{CliError, CliResult};
use crate::output::{num, opt_num, InputDigest, OutDir};
use crate::pipeline::{config_snapshot, estimator_config, parse_spec, prepare, Prepared};

fn day_one(panel: &AlignedPanel) -> NaiveDate {
    panel.treatment_date() - Days::new(panel.t0() as u64)
}

fn date_of(base: NaiveDate, day: usize) -> String {
    (base + Days::new(day as u64 - 1)).to_string()
}

fn phase(day: usize, t0: usize) -> String {
    if day <= t0 { "pre" } else { "post" }.to_string()
}

struct Ctx {
    prepared: Prepared,
    spec: ResolvedSpec,
    config: EstimatorConfig,
}

fn context(args: &FitArgs, spec_id: &str) -> CliResult<Ctx> {
    let spec = parse_spec(spec_id)?;
    let config = estimator_config(&args.estimator)?;
    let prepared = prepare(&args.data, spec.dynamic_covariates)?;
    let spec = spec.resolve(prepared.panel.t0());
    Ok(Ctx {
        prepared,
        spec,
        config,
    })
}

fn finish(out: OutDir, command: &str, args: &FitArgs, ctx: &Ctx, extra: &[(&str, Value)]) -> CliResult<()> {
    let mut config = config_snapshot(&args.data, &args.estimator, &ctx.prepared);
    for (k, v) in extra {
        config.insert(k.to_string(), v.clone());
    }
    let inputs = ctx.prepared.inputs.clone();
    let path = out.finish(command, inputs, config)?;
    info!("wrote {}", path.display());
    Ok(())
}

// ---- tables shared by fit and report -------------------------------------

fn write_weights(out: &mut OutDir, name: &str, est: &Estimate) -> CliResult<()> {
    out.csv(
        name,
        &["unit", "gamma_scm", "gamma_aug"],
        est.donors.iter().enumerate().map(|(i, d)| {
            vec![d.clone(), num(est.fit.gamma_scm[i]), num(est.fit.gamma_aug[i])]
        }),
    )
}

fn write_gaps(out: &mut OutDir, name: &str, est: &Estimate, base: NaiveDate) -> CliResult<()> {
    out.csv(
        name,
        &["day", "date", "phase", "actual", "synthetic", "gap", "synthetic_scm", "gap_scm"],
        (0..est.actual.len()).map(|i| {
            vec![
                (i + 1).to_string(),
                date_of(base, i + 1),
                phase(i + 1, est.t0),
                num(est.actual[i]),
                num(est.synthetic_aug[i]),
                num(est.gap.gap[i]),
                num(est.synthetic_scm[i]),
                num(est.gap_scm.gap[i]),
            ]
        }),
    )
}

fn write_counterfactual(
    out: &mut OutDir,
    name: &str,
    est: &Estimate,
    band: Option<&IntervalBand>,
    base: NaiveDate,
) -> CliResult<()> {
    out.csv(
        name,
        &["day", "date", "phase", "actual", "counterfactual", "lower", "upper"],
        (0..est.actual.len()).map(|i| {
            vec![
                (i + 1).to_string(),
                date_of(base, i + 1),
                phase(i + 1, est.t0),
                num(est.actual[i]),
                num(est.synthetic_aug[i]),
                opt_num(band.map(|b| b.lower[i])),
                opt_num(band.map(|b| b.upper[i])),
            ]
        }),
    )
}

fn write_intervals(out: &mut OutDir, name: &str, est: &Estimate, band: &IntervalBand) -> CliResult<()> {
    out.csv(
        name,
        &["day", "phase", "point", "lower", "upper", "gap", "gap_lower", "gap_upper"],
        (0..band.point.len()).map(|i| {
            vec![
                (i + 1).to_string(),
                phase(i + 1, est.t0),
                num(band.point[i]),
                num(band.lower[i]),
                num(band.upper[i]),
                num(est.gap.gap[i]),
                num(band.gap_lower[i]),
                num(band.gap_upper[i]),
            ]
        }),
    )
}

fn write_balance(out: &mut OutDir, name: &str, est: &Estimate) -> CliResult<()> {
    let w = DVector::from_vec(est.fit.gamma_aug.clone());
    out.csv(
        name,
        &["predictor", "actual", "synth", "donor"],
        balance_table(&est.matrices, &w)
            .into_iter()
            .map(|r| vec![r.predictor, num(r.actual), num(r.synth), num(r.donor)]),
    )
}

fn write_cv(out: &mut OutDir, name: &str, cv: &CvResult) -> CliResult<()> {
    out.csv(
        name,
        &["lambda", "cv_mse"],
        cv.lambda_grid
            .iter()
            .zip(&cv.cv_mse)
            .map(|(l, c)| vec![num(*l), num(*c)]),
    )
}

fn band_for(ctx: &Ctx, est: &Estimate, alpha: f64) -> Option<IntervalBand> {
    let refits = refit_without_each(&ctx.prepared.panel, &ctx.spec, &ctx.config, &est.donors);
    match jackknife_band_from(&ctx.prepared.panel, &ctx.spec, &ctx.config, est, &refits, alpha) {
        Ok(b) => Some(b),
        Err(e) => {
            warn!("no jackknife+ band: {e}");
            None
        }
    }
}

fn fit_summary(est: &Estimate, band: Option<&IntervalBand>) -> Value {
    json!({
        "spec": est.spec.id,
        "predictors": est.matrices.row_labels,
        "treated": est.treated,
        "donors": est.donors.len(),
        "t0": est.t0,
        "t_end": est.t_end,
        "att": est.gap.att,
        "att_scm": est.gap_scm.att,
        "pre_rmspe": est.gap.pre_rmspe,
        "post_rmspe": est.gap.post_rmspe,
        "rmspe_ratio": est.gap.rmspe_ratio,
        "pre_rmspe_scm": est.gap_scm.pre_rmspe,
        "predictor_rmse_scm": est.fit.pre_rmspe_scm,
        "predictor_rmse_aug": est.fit.pre_rmspe_aug,
        "lambda": est.fit.lambda,
        "lambda_min": est.cv.as_ref().map(|c| c.lambda_min),
        "lambda_one_se": est.cv.as_ref().map(|c| c.lambda_one_se),
        "cv_se": est.cv.as_ref().map(|c| c.se_of_min),
        "scm_objective": est.fit.scm_objective,
        "scm_iterations": est.fit.iterations,
        "sum_gamma_aug": est.fit.gamma_aug.iter().sum::<f64>(),
        "interval": band.map(|b| json!({
            "alpha": b.alpha,
            "method": b.method,
            "att_p_value": b.att_p_value,
            "n_scores": b.n_scores,
            "refits": b.refits,
        })),
    })
}

// ---- commands -------------------------------------------------------------

pub fn cmd_fit(args: &FitArgs) -> CliResult<()> {
    let ctx = context(args, &args.estimator.spec)?;
    let est = estimate(&ctx.prepared.panel, &ctx.spec, &ctx.config)?;
    let band = band_for(&ctx, &est, args.estimator.alpha);
    let base = day_one(&ctx.prepared.panel);

    let mut out = OutDir::create(&args.out)?;
    write_weights(&mut out, "weights.csv", &est)?;
    write_gaps(&mut out, "gaps.csv", &est, base)?;
    write_counterfactual(&mut out, "counterfactual.csv", &est, band.as_ref(), base)?;
    if let Some(b) = &band {
        write_intervals(&mut out, "intervals.csv", &est, b)?;
    }
    write_balance(&mut out, "balance.csv", &est)?;
    if let Some(cv) = &est.cv {
        write_cv(&mut out, "cv.csv", cv)?;
    }
    out.json("validation.json", &ctx.prepared.panel.validation_report())?;
    out.json("summary.json", &fit_summary(&est, band.as_ref()))?;
    finish(out, "fit", args, &ctx, &[])
}

fn placebo_rows(t: &PlaceboTable) -> Vec<Vec<String>> {
    let mut rows = vec![vec![
        t.treated.clone(),
        num(1.0),
        num(t.treated_att),
        num(t.p_value),
        String::new(),
        "treated".into(),
        String::new(),
    ]];
    rows.extend(t.rows.iter().map(|r| {
        vec![
            r.unit.clone(),
            num(r.rmspe_ratio),
            num(r.att),
            num(r.p_value),
            num(r.pre_rmspe),
            "donor".into(),
            r.flag.clone().unwrap_or_default(),
        ]
    }));
    rows
}

const PLACEBO_HEADER: [&str; 7] = ["unit", "rmspe_ratio", "att", "p_value", "pre_rmspe", "role", "flag"];

fn placebo_table(ctx: &Ctx, est: &Estimate) -> CliResult<PlaceboTable> {
    Ok(in_space_placebo_with(&ctx.prepared.panel, &ctx.spec, &ctx.config, est)?)
}

fn write_placebo_gaps(out: &mut OutDir, name: &str, est: &Estimate, t: &PlaceboTable) -> CliResult<()> {
    let mut header = vec!["day".to_string(), t.treated.clone()];
    let usable: Vec<_> = t.rows.iter().filter(|r| !r.gap.is_empty()).collect();
    header.extend(usable.iter().map(|r| r.unit.clone()));
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    out.csv(
        name,
        &header,
        (0..est.gap.gap.len()).map(|i| {
            let mut row = vec![(i + 1).to_string(), num(est.gap.gap[i])];
            row.extend(usable.iter().map(|r| num(r.gap[i])));
            row
        }),
    )
}

/// Fake treatment days at half, two thirds and three quarters of the pre-period.
fn default_fake_days(t0: usize) -> Vec<usize> {
    let mut d: Vec<usize> = [(1, 2), (2, 3), (3, 4)]
        .iter()
        .map(|(n, k)| t0 * n / k + 1)
        .filter(|&d| d > 3 && d <= t0)
        .collect();
    d.dedup();
    d
}

fn in_time_rows(ctx: &Ctx, fake_days: &[usize], alpha: f64) -> CliResult<(Vec<Vec<String>>, Vec<Value>)> {
    let panel = &ctx.prepared.panel;
    let mut rows = Vec::new();
    let mut meta = Vec::new();
    for &day in fake_days {
        if day < 2 {
            return Err(CliError::Input(format!("--fake-day must be at least 2, got {day}")));
        }
        let fake_t0 = day - 1;
        let p = in_time_placebo(panel, &ctx.spec, &ctx.config, fake_t0)?;
        let fake_panel = panel.with_fake_treatment(fake_t0)?;
        let band = match jackknife_plus_band(&fake_panel, &ctx.spec.clipped_to(fake_t0), &ctx.config, alpha) {
            Ok(b) => Some(b),
            Err(e) => {
                warn!("in-time placebo at day {day}: no band: {e}");
                None
            }
        };
        for (i, g) in p.gap.gap.iter().enumerate() {
            rows.push(vec![
                day.to_string(),
                (i + 1).to_string(),
                phase(i + 1, fake_t0),
                num(p.estimate.actual[i]),
                num(p.estimate.synthetic_aug[i]),
                num(*g),
                opt_num(band.as_ref().map(|b| b.gap_lower[i])),
                opt_num(band.as_ref().map(|b| b.gap_upper[i])),
            ]);
        }
        meta.push(json!({
            "fake_day": day,
            "fake_t0": fake_t0,
            "true_t0": p.true_t0,
            "att": p.gap.att,
            "lambda": p.lambda,
            "baseline_lambda": p.baseline_lambda,
            "att_p_value": band.as_ref().map(|b| b.att_p_value),
        }));
    }
    Ok((rows, meta))
}

const IN_TIME_HEADER: [&str; 8] = ["fake_day", "day", "phase", "actual", "synthetic", "gap", "gap_lower", "gap_upper"];

pub fn cmd_placebo(args: &PlaceboArgs) -> CliResult<()> {
    let ctx = context(&args.fit, &args.fit.estimator.spec)?;
    let mut out = OutDir::create(&args.fit.out)?;
    match args.mode {
        PlaceboMode::InSpace => {
            let est = estimate(&ctx.prepared.panel, &ctx.spec, &ctx.config)?;
            let table = placebo_table(&ctx, &est)?;
            out.csv("placebo.csv", &PLACEBO_HEADER, placebo_rows(&table))?;
            write_placebo_gaps(&mut out, "placebo_gaps.csv", &est, &table)?;
            out.json(
                "summary.json",
                &json!({
                    "mode": "in-space",
                    "spec": ctx.spec.id,
                    "treated": table.treated,
                    "treated_ratio": table.treated_ratio,
                    "treated_att": table.treated_att,
                    "treated_rank": table.treated_rank,
                    "denominator": table.denominator,
                    "p_value": table.p_value,
                }),
            )?;
            finish(out, "placebo", &args.fit, &ctx, &[("mode", json!("in-space"))])
        }
        PlaceboMode::InTime => {
            let days = if args.fake_days.is_empty() {
                default_fake_days(ctx.prepared.panel.t0())
            } else {
                args.fake_days.clone()
            };
            let (rows, meta) = in_time_rows(&ctx, &days, args.fit.estimator.alpha)?;
            out.csv("in_time.csv", &IN_TIME_HEADER, rows)?;
            out.json(
                "summary.json",
                &json!({ "mode": "in-time", "spec": ctx.spec.id, "placebos": meta }),
            )?;
            finish(
                out,
                "placebo",
                &args.fit,
                &ctx,
                &[("mode", json!("in-time")), ("fake_days", json!(days))],
            )
        }
    }
}

fn loo_rows(r: &LooReport) -> Vec<Vec<String>> {
    r.entries
        .iter()
        .map(|e| {
            vec![
                e.donor.clone(),
                num(e.gamma_scm),
                num(e.gamma_aug),
                e.refit.to_string(),
                opt_num(e.gap.as_ref().map(|g| g.att)),
                opt_num(e.lambda),
                e.error.clone().unwrap_or_default(),
            ]
        })
        .collect()
}

fn write_loo_gaps(out: &mut OutDir, name: &str, est: &Estimate, r: &LooReport) -> CliResult<()> {
    let mut header = vec!["day".to_string(), "baseline".into(), "loo_mean".into()];
    let usable: Vec<_> = r.entries.iter().filter(|e| e.gap.is_some()).collect();
    header.extend(usable.iter().map(|e| e.donor.clone()));
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    out.csv(
        name,
        &header,
        (0..est.gap.gap.len()).map(|i| {
            let mut row = vec![(i + 1).to_string(), num(est.gap.gap[i]), num(r.mean_gap[i])];
            row.extend(usable.iter().map(|e| num(e.gap.as_ref().unwrap().gap[i])));
            row
        }),
    )
}

const LOO_HEADER: [&str; 7] = ["donor", "gamma_scm", "gamma_aug", "refit", "att", "lambda", "error"];

pub fn cmd_loo(args: &FitArgs) -> CliResult<()> {
    let ctx = context(args, &args.estimator.spec)?;
    let est = estimate(&ctx.prepared.panel, &ctx.spec, &ctx.config)?;
    let report = leave_one_out_donors(&ctx.prepared.panel, &ctx.spec, &ctx.config, &est)?;
    let mut out = OutDir::create(&args.out)?;
    out.csv("loo.csv", &LOO_HEADER, loo_rows(&report))?;
    write_loo_gaps(&mut out, "loo_gaps.csv", &est, &report)?;
    out.json(
        "summary.json",
        &json!({
            "spec": ctx.spec.id,
            "baseline_att": report.baseline_att,
            "mean_att": report.mean_att,
            "refits": report.refits,
        }),
    )?;
    finish(out, "loo", args, &ctx, &[])
}

/// Star layout: predictor rows with `*` marks, then ATT and p-value rows.
fn star_rows(report: &SpecGridReport, t0: usize) -> Vec<Vec<String>> {
    let specs = enumerate_specs();
    let labels: Vec<Vec<String>> = specs.iter().map(|s| s.resolve(t0).row_labels()).collect();
    let mut all: Vec<String> = (1..=t0).map(|i| format!("dth({i})")).collect();
    all.extend(["dth(*)", "hsp", "age", "hld", "num(.)", "mob(.)"].map(String::from));
    let mut rows: Vec<Vec<String>> = all
        .iter()
        .map(|l| {
            let mut r = vec![l.clone()];
            r.extend(labels.iter().map(|ls| if ls.contains(l) { "*" } else { "" }.to_string()));
            r
        })
        .collect();
    let mut att = vec!["ATT".to_string()];
    let mut p = vec!["p-value".to_string()];
    for row in &report.rows {
        att.push(num(row.att));
        p.push(num(row.p_value));
    }
    rows.push(att);
    rows.push(p);
    rows
}

fn star_header() -> Vec<String> {
    let mut h = vec!["predictor".to_string()];
    h.extend(enumerate_specs().iter().map(|s| s.id.to_string()));
    h
}

fn write_spec_gaps(out: &mut OutDir, name: &str, report: &SpecGridReport) -> CliResult<()> {
    let ids: Vec<String> = report.estimates.keys().cloned().collect();
    let Some(first) = report.estimates.values().next() else {
        return Ok(());
    };
    let mut header = vec!["day".to_string()];
    header.extend(enumerate_specs().iter().filter(|s| report.estimates.contains_key(s.id)).map(|s| s.id.to_string()));
    let summary = report.summary.as_ref();
    header.extend(["mean", "median", "mad", "lower", "upper"].map(String::from));
    let header_ref: Vec<&str> = header.iter().map(String::as_str).collect();
    let order: Vec<&String> = header[1..header.len() - 5].iter().collect();
    debug_assert_eq!(order.len(), ids.len());
    out.csv(
        name,
        &header_ref,
        (0..first.gap.gap.len()).map(|i| {
            let mut row = vec![(i + 1).to_string()];
            row.extend(order.iter().map(|id| num(report.estimates[*id].gap.gap[i])));
            for f in [
                summary.map(|s| s.mean[i]),
                summary.map(|s| s.median[i]),
                summary.map(|s| s.mad[i]),
                summary.map(|s| s.lower[i]),
                summary.map(|s| s.upper[i]),
            ] {
                row.push(opt_num(f));
            }
            row
        }),
    )
}

const GRID_ROWS_HEADER: [&str; 7] = ["spec", "att", "p_value", "pre_rmspe", "lambda", "n_predictors", "error"];

fn grid_rows(report: &SpecGridReport) -> Vec<Vec<String>> {
    report
        .rows
        .iter()
        .map(|r| {
            vec![
                r.spec.clone(),
                num(r.att),
                num(r.p_value),
                num(r.pre_rmspe),
                num(r.lambda),
                r.n_predictors.to_string(),
                r.error.clone().unwrap_or_default(),
            ]
        })
        .collect()
}

pub fn cmd_spec_grid(args: &FitArgs) -> CliResult<()> {
    // the grid includes dynamic-covariate specs
    let ctx = context(args, "c1")?;
    let report = run_spec_grid(&ctx.prepared.panel, &ctx.config, args.estimator.alpha);
    let mut out = OutDir::create(&args.out)?;
    let header = star_header();
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    out.csv("spec_grid.csv", &header, star_rows(&report, ctx.prepared.panel.t0()))?;
    out.csv("spec_grid_rows.csv", &GRID_ROWS_HEADER, grid_rows(&report))?;
    write_spec_gaps(&mut out, "spec_gaps.csv", &report)?;
    let failed = report.rows.iter().filter(|r| r.error.is_some()).count();
    out.json(
        "summary.json",
        &json!({ "specs": report.rows.len(), "failed": failed, "summary_band": report.summary.is_some() }),
    )?;
    finish(out, "spec-grid", args, &ctx, &[("spec", json!("all"))])
}

pub fn cmd_simulate(args: &SimulateArgs) -> CliResult<()> {
    let (mut study, inputs) = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
            let study: ReplicationStudy = serde_json::from_str(&text)
                .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
            (study, vec![InputDigest::of("study", path)?])
        }
        None => {
            let base = SyntheticFactorConfig::preset(&args.preset).ok_or_else(|| {
                CliError::Input(format!(
                    "unknown preset `{}`; expected convex-hull, att-recovery or placebo-null",
                    args.preset
                ))
            })?;
            (
                ReplicationStudy {
                    base,
                    ..ReplicationStudy::default()
                },
                Vec::new(),
            )
        }
    };
    if let Some(seed) = args.seed {
        study.seed = seed;
        study.seeds = None;
    }
    let report = run_replication_study(&study)?;
    let mut out = OutDir::create(&args.out)?;
    out.json("study_summary.json", &report.summary)?;
    let s = &report.summary;
    out.csv(
        "study_summary.csv",
        &["metric", "value"],
        [
            ("n_replications", s.n_replications.to_string()),
            ("failures", s.failures.to_string()),
            ("true_att", num(s.true_att)),
            ("mean_att", num(s.mean_att)),
            ("att_error_mean", num(s.att_error_mean)),
            ("att_error_sd", num(s.att_error_sd)),
            ("att_error_max_abs", num(s.att_error_max_abs)),
            ("coverage_min", num(s.coverage_min)),
            ("coverage_mean", num(s.coverage_mean)),
            ("rank_one_frequency", num(s.rank_one_frequency)),
            ("n_units", s.n_units.to_string()),
        ]
        .into_iter()
        .map(|(k, v)| vec![k.to_string(), v]),
    )?;
    out.csv(
        "coverage_by_day.csv",
        &["post_day", "coverage"],
        s.coverage_by_day
            .iter()
            .enumerate()
            .map(|(i, c)| vec![(i + 1).to_string(), num(*c)]),
    )?;
    out.csv(
        "rank_histogram.csv",
        &["rank", "count"],
        s.rank_histogram
            .iter()
            .enumerate()
            .map(|(i, c)| vec![(i + 1).to_string(), c.to_string()]),
    )?;
    out.csv(
        "replications.csv",
        &[
            "replication", "seed", "true_att", "att", "att_error", "lambda", "pre_rmspe",
            "coverage", "placebo_rank", "n_units", "error",
        ],
        report.records.iter().map(|r| {
            vec![
                r.replication.to_string(),
                r.seed.to_string(),
                num(r.true_att),
                opt_num(r.att),
                opt_num(r.att_error),
                opt_num(r.lambda),
                opt_num(r.pre_rmspe),
                opt_num(r.covered.as_ref().map(|c| {
                    c.iter().filter(|&&b| b).count() as f64 / c.len().max(1) as f64
                })),
                r.placebo_rank.map(|v| v.to_string()).unwrap_or_default(),
                r.n_units.map(|v| v.to_string()).unwrap_or_default(),
                r.error.clone().unwrap_or_default(),
            ]
        }),
    )?;
    let mut config = BTreeMap::new();
    config.insert("study".to_string(), serde_json::to_value(&study)?);
    out.finish("simulate", inputs, config)?;
    Ok(())
}

pub fn cmd_report(args: &ReportArgs) -> CliResult<()> {
    let fit = &args.fit;
    let baseline_id = parse_spec(&fit.estimator.spec)?.id;
    let robust_id = parse_spec(&args.robustness_spec)?.id;
    let ctx = context(fit, "c1")?;
    let ctx = Ctx {
        spec: parse_spec(baseline_id)?.resolve(ctx.prepared.panel.t0()),
        ..ctx
    };
    let panel = &ctx.prepared.panel;
    let alpha = fit.estimator.alpha;
    let base = day_one(panel);

    let grid = run_spec_grid(panel, &ctx.config, alpha);
    let est = match grid.estimates.get(baseline_id) {
        Some(e) => e.clone(),
        None => estimate(panel, &ctx.spec, &ctx.config)?,
    };
    let band = band_for(&ctx, &est, alpha);
    let mut out = OutDir::create(&fit.out)?;

    // specification grid and its gap paths
    let header = star_header();
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    out.csv("table1_spec_grid.csv", &header, star_rows(&grid, panel.t0()))?;
    write_spec_gaps(&mut out, "fig1_spec_gaps.csv", &grid)?;

    // baseline vs robustness spec vs cross-spec summaries
    let robust = grid.estimates.get(robust_id);
    out.csv(
        "fig2_gaps.csv",
        &["day", "phase", baseline_id, robust_id, "mean", "median"],
        (0..est.gap.gap.len()).map(|i| {
            vec![
                (i + 1).to_string(),
                phase(i + 1, est.t0),
                num(est.gap.gap[i]),
                opt_num(robust.map(|r| r.gap.gap[i])),
                opt_num(grid.summary.as_ref().map(|s| s.mean[i])),
                opt_num(grid.summary.as_ref().map(|s| s.median[i])),
            ]
        }),
    )?;

    // balance, weights, counterfactual with band
    write_balance(&mut out, "table2_balance.csv", &est)?;
    write_weights(&mut out, "fig3_weights.csv", &est)?;
    write_counterfactual(&mut out, "fig4_counterfactual.csv", &est, band.as_ref(), base)?;

    // in-space placebo
    let placebo = placebo_table(&ctx, &est)?;
    out.csv("table3_placebo.csv", &PLACEBO_HEADER, placebo_rows(&placebo))?;

    // in-time placebos
    let fake_days = default_fake_days(panel.t0());
    let (rows, in_time) = in_time_rows(&ctx, &fake_days, alpha)?;
    out.csv("fig5_in_time.csv", &IN_TIME_HEADER, rows)?;

    // leave-one-out
    let loo = leave_one_out_donors(panel, &ctx.spec, &ctx.config, &est)?;
    write_loo_gaps(&mut out, "fig6_loo_gaps.csv", &est, &loo)?;
    out.csv("fig6_loo.csv", &LOO_HEADER, loo_rows(&loo))?;

    out.json(
        "summary.json",
        &json!({
            "baseline": fit_summary(&est, band.as_ref()),
            "robustness_spec": robust_id,
            "spec_grid": grid.rows,
            "placebo": {
                "treated_rank": placebo.treated_rank,
                "denominator": placebo.denominator,
                "p_value": placebo.p_value,
            },
            "in_time": in_time,
            "loo": { "mean_att": loo.mean_att, "refits": loo.refits },
        }),
    )?;
    out.json("validation.json", &panel.validation_report())?;
    finish(
        out,
        "report",
        fit,
        &ctx,
        &[("robustness_spec", json!(robust_id)), ("fake_days", json!(fake_days))],
    )
}
