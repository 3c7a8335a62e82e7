use std::path::{Path, PathBuf};

use super::config::{ExperimentConfig, Preset};
use super::run::{
    base_row, curve_rows, draw_samples, estimate_all, instances, per_instance, prepare, sampler_seed,
    sampler_settings,
};
use super::table::{aggregate, write_csv, CurveRow, QuartileRow, ResultRow, ScatterRow};
use crate::error::Result;
use crate::estimators::{EstimatorMethod, PostprocessMode};

/// Tables produced by one experiment.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExperimentOutput {
    pub rows: Vec<ResultRow>,
    pub quartiles: Vec<QuartileRow>,
    pub curves: Vec<CurveRow>,
    pub scatter: Vec<ScatterRow>,
}

impl ExperimentOutput {
    /// Writes the non-empty tables as `<prefix>-<table>.csv` under `dir`.
    pub fn write(&self, dir: &Path, prefix: &str) -> Result<Vec<PathBuf>> {
        let mut written = Vec::new();
        let path = |name: &str| dir.join(format!("{prefix}-{name}.csv"));
        if !self.rows.is_empty() {
            write_csv(&path("estimates"), &self.rows)?;
            written.push(path("estimates"));
        }
        if !self.quartiles.is_empty() {
            write_csv(&path("quartiles"), &self.quartiles)?;
            written.push(path("quartiles"));
        }
        if !self.curves.is_empty() {
            write_csv(&path("curves"), &self.curves)?;
            written.push(path("curves"));
        }
        if !self.scatter.is_empty() {
            write_csv(&path("scatter"), &self.scatter)?;
            written.push(path("scatter"));
        }
        Ok(written)
    }
}

/// Modes to evaluate: always raw, plus the configured post-processing.
fn modes(cfg: &ExperimentConfig) -> Vec<PostprocessMode> {
    match cfg.postprocess {
        PostprocessMode::Off => vec![PostprocessMode::Off],
        m => vec![PostprocessMode::Off, m],
    }
}

/// Point estimates for every instance, sampler setting and beta fraction,
/// with quartiles over instances.
pub fn run_rescaling_sweep(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    cfg.validate()?;
    let insts = instances(cfg)?;
    let settings = sampler_settings(cfg);
    let rows = per_instance(&insts, |inst| {
        let prep = prepare(inst, cfg)?;
        let mut rows = Vec::new();
        for s in &settings {
            let seed = sampler_seed(cfg, inst, s);
            let samples = draw_samples(inst, s, cfg.sampler.n_samples, seed)?;
            let est = estimate_all(inst, &prep, &samples, seed, cfg.postprocess, cfg)
                .map_err(|e| e.in_stage(format!("estimate:{}:{}", inst.id, s.tag)))?;
            for r in &est.reports {
                let mut row = base_row(inst, s, seed, cfg.postprocess);
                row.fill_estimate(r);
                rows.push(row);
            }
        }
        Ok(rows)
    })?;
    let quartiles = aggregate(&rows);
    Ok(ExperimentOutput { rows, quartiles, ..ExperimentOutput::default() })
}

/// MSE curves per instance and sampler setting, raw and post-processed from
/// the same samples, with the minimum-MSE estimates.
pub fn run_mse_beta_scan(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    cfg.validate()?;
    let cfg = &ExperimentConfig { estimators: vec![EstimatorMethod::MinMse], ..cfg.clone() };
    let insts = instances(cfg)?;
    let settings = sampler_settings(cfg);
    let pairs = per_instance(&insts, |inst| {
        let prep = prepare(inst, cfg)?;
        let mut out = Vec::new();
        for s in &settings {
            let seed = sampler_seed(cfg, inst, s);
            let samples = draw_samples(inst, s, cfg.sampler.n_samples, seed)?;
            for mode in modes(cfg) {
                let est = estimate_all(inst, &prep, &samples, seed, mode, cfg)
                    .map_err(|e| e.in_stage(format!("estimate:{}:{}", inst.id, s.tag)))?;
                let mut row = base_row(inst, s, seed, mode);
                row.fill_estimate(&est.reports[0]);
                let curves = est.curves.iter().flat_map(|c| curve_rows(&row, c)).collect::<Vec<_>>();
                out.push((row, curves));
            }
        }
        Ok(out)
    })?;
    let mut output = ExperimentOutput::default();
    for (row, curves) in pairs {
        output.rows.push(row);
        output.curves.extend(curves);
    }
    output.quartiles = aggregate(&output.rows);
    Ok(output)
}

/// Minimum-MSE against ML estimates per instance and sampler, raw and post-processed.
pub fn run_estimator_scatter(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    cfg.validate()?;
    let cfg = &ExperimentConfig { estimators: vec![EstimatorMethod::Ml, EstimatorMethod::MinMse], ..cfg.clone() };
    let insts = instances(cfg)?;
    let settings = sampler_settings(cfg);
    let pairs = per_instance(&insts, |inst| {
        let prep = prepare(inst, cfg)?;
        let mut out = Vec::new();
        for s in &settings {
            let seed = sampler_seed(cfg, inst, s);
            let samples = draw_samples(inst, s, cfg.sampler.n_samples, seed)?;
            for mode in modes(cfg) {
                let est = estimate_all(inst, &prep, &samples, seed, mode, cfg)
                    .map_err(|e| e.in_stage(format!("estimate:{}:{}", inst.id, s.tag)))?;
                let rows: Vec<ResultRow> = est
                    .reports
                    .iter()
                    .map(|r| {
                        let mut row = base_row(inst, s, seed, mode);
                        row.fill_estimate(r);
                        row
                    })
                    .collect();
                let (ml, mse) = (&est.reports[0], &est.reports[1]);
                let point = ScatterRow {
                    instance_id: inst.id.clone(),
                    size: inst.size.clone(),
                    sampler: s.tag.clone(),
                    sampler_seed: seed,
                    postprocess: mode.tag(),
                    beta_min_mse: mse.beta_hat.value(),
                    beta_ml: ml.beta_hat.value(),
                    ml_sentinel: ml.beta_hat.sentinel().map(|k| k.as_str().to_string()),
                    mse_at_min: mse.objective_at_min,
                };
                out.push((rows, point));
            }
        }
        Ok(out)
    })?;
    let mut output = ExperimentOutput::default();
    for (rows, point) in pairs {
        output.rows.extend(rows);
        output.scatter.push(point);
    }
    output.quartiles = aggregate(&output.rows);
    Ok(output)
}

pub fn run_preset(preset: Preset, cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    match preset {
        Preset::RescalingSweep => run_rescaling_sweep(cfg),
        Preset::MseScan => run_mse_beta_scan(cfg),
        Preset::EstimatorScatter => run_estimator_scatter(cfg),
    }
}
