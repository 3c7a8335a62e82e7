//! End-to-end run with on-disk caching of instances, references and samples.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::ExperimentConfig;
use super::run::{
    base_row, curve_rows, draw_samples, engine_for, estimate_all, instances, reference_grid,
    sampler_seed, sampler_settings, ExactEngine, Instance, Prepared, SamplerSetting,
};
use super::table::{aggregate, write_csv, CurveRow, ResultRow};
use crate::error::{Error, Result};
use crate::estimators::PostprocessMode;
use crate::model::io::{read_samples, write_atomic, write_model, write_samples};
use crate::model::SampleSet;
use crate::reference::{cache_key, load_reference, save_reference, ReferenceMethod};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const STATUS_FILE: &str = "status.json";

/// What happened to one stage of one instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StageState {
    Computed,
    Cached,
    Failed,
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageStatus {
    pub stage: String,
    pub state: StageState,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileEntry {
    /// Relative to the output directory.
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedEntry {
    pub instance_id: String,
    pub instance_seed: u64,
    pub sampler: String,
    pub fraction: f64,
    pub sampler_seed: u64,
}

/// Record of a pipeline run. `hash` covers everything except `stages`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    pub config: ExperimentConfig,
    pub config_hash: String,
    pub seeds: Vec<SeedEntry>,
    pub files: Vec<FileEntry>,
    pub stages: Vec<StageStatus>,
    pub hash: String,
}

#[derive(Serialize)]
struct HashedPart<'a> {
    version: &'a str,
    config_hash: &'a str,
    seeds: &'a [SeedEntry],
    files: &'a [FileEntry],
}

impl Manifest {
    fn compute_hash(&self) -> String {
        let part = HashedPart {
            version: &self.version,
            config_hash: &self.config_hash,
            seeds: &self.seeds,
            files: &self.files,
        };
        let json = serde_json::to_vec(&part).expect("manifest serializes");
        hex::encode(Sha256::digest(&json))
    }

    pub fn read(path: &Path) -> Result<Self> {
        Ok(serde_json::from_slice(&fs::read(path)?)?)
    }

    /// State of the first stage whose name starts with `prefix`.
    pub fn stage(&self, prefix: &str) -> Option<StageState> {
        self.stages.iter().find(|s| s.stage.starts_with(prefix)).map(|s| s.state)
    }
}

fn short_hash(parts: &[&[u8]]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    hex::encode(h.finalize())[..16].to_string()
}

fn file_sha(path: &Path) -> Result<String> {
    Ok(hex::encode(Sha256::digest(fs::read(path)?)))
}

struct InstanceRun {
    rows: Vec<ResultRow>,
    curves: Vec<CurveRow>,
    seeds: Vec<SeedEntry>,
    files: Vec<PathBuf>,
    stages: Vec<StageStatus>,
}

fn done(stage: String, cached: bool) -> StageStatus {
    StageStatus { stage, state: if cached { StageState::Cached } else { StageState::Computed }, message: None }
}

fn method_of(engine: Option<&ExactEngine>) -> ReferenceMethod {
    match engine {
        Some(ExactEngine::Enum(_)) => ReferenceMethod::ExactEnum,
        Some(ExactEngine::Dp(_)) => ReferenceMethod::ExactDp,
        None => ReferenceMethod::Pt,
    }
}

fn cached_reference(inst: &Instance, cfg: &ExperimentConfig, dir: &Path, run: &mut InstanceRun) -> Result<Prepared> {
    let stage = format!("reference:{}", inst.id);
    let grid = reference_grid(cfg).map_err(|e| e.in_stage(&stage))?;
    let engine = engine_for(inst, cfg).map_err(|e| e.in_stage(&stage))?;
    let key = cache_key(&inst.model.content_hash(), &grid, method_of(engine.as_ref()));
    let stem = dir.join("refs").join(&key);
    let cached = stem.with_extension("json").exists() && stem.with_extension("csv").exists();
    let reference = if cached {
        load_reference(&stem).map_err(|e| e.in_stage(&stage))?
    } else {
        let r = super::run::compute_reference(inst, engine.as_ref(), &grid, cfg).map_err(|e| e.in_stage(&stage))?;
        save_reference(&stem, &r).map_err(|e| e.in_stage(&stage))?;
        r
    };
    run.files.push(stem.with_extension("json"));
    run.files.push(stem.with_extension("csv"));
    run.stages.push(done(stage, cached));
    Ok(Prepared { reference, engine })
}

fn cached_samples(
    inst: &Instance,
    s: &SamplerSetting,
    seed: u64,
    cfg: &ExperimentConfig,
    dir: &Path,
    run: &mut InstanceRun,
) -> Result<SampleSet> {
    let stage = format!("sample:{}:{}:{}", inst.id, s.tag, s.fraction);
    let n = cfg.sampler.n_samples as u64;
    let key = short_hash(&[
        inst.model.content_hash().as_bytes(),
        s.tag.as_bytes(),
        &s.beta.to_bits().to_le_bytes(),
        &n.to_le_bytes(),
        &seed.to_le_bytes(),
    ]);
    let path = dir.join("samples").join(format!("{}-{}-{key}.bin", inst.id, s.tag));
    let cached = path.exists();
    let samples = if cached {
        read_samples(&path).map_err(|e| e.in_stage(&stage))?
    } else {
        let set = draw_samples(inst, s, cfg.sampler.n_samples, seed)?;
        write_samples(&path, &set).map_err(|e| e.in_stage(&stage))?;
        set
    };
    run.files.push(path);
    run.stages.push(done(stage, cached));
    Ok(samples)
}

fn run_instance(inst: &Instance, cfg: &ExperimentConfig, dir: &Path) -> Result<InstanceRun> {
    let mut run = InstanceRun { rows: vec![], curves: vec![], seeds: vec![], files: vec![], stages: vec![] };
    let model_path = dir.join("instances").join(format!("{}.json", inst.id));
    let cached = model_path.exists();
    if !cached {
        write_model(&model_path, &inst.model).map_err(|e| e.in_stage(format!("instance:{}", inst.id)))?;
    }
    run.files.push(model_path);
    run.stages.push(done(format!("instance:{}", inst.id), cached));

    let prep = cached_reference(inst, cfg, dir, &mut run)?;
    let modes = match cfg.postprocess {
        PostprocessMode::Off => vec![PostprocessMode::Off],
        m => vec![PostprocessMode::Off, m],
    };
    for s in sampler_settings(cfg) {
        let seed = sampler_seed(cfg, inst, &s);
        run.seeds.push(SeedEntry {
            instance_id: inst.id.clone(),
            instance_seed: inst.seed,
            sampler: s.tag.clone(),
            fraction: s.fraction,
            sampler_seed: seed,
        });
        let samples = cached_samples(inst, &s, seed, cfg, dir, &mut run)?;
        for &mode in &modes {
            let stage = format!("estimate:{}:{}:{}:{}", inst.id, s.tag, s.fraction, mode.tag());
            let est = estimate_all(inst, &prep, &samples, seed, mode, cfg).map_err(|e| e.in_stage(&stage))?;
            for r in &est.reports {
                let mut row = base_row(inst, &s, seed, mode);
                row.fill_estimate(r);
                run.rows.push(row);
            }
            let template = base_row(inst, &s, seed, mode);
            run.curves.extend(est.curves.iter().flat_map(|c| curve_rows(&template, c)));
            run.stages.push(done(stage, false));
        }
    }
    Ok(run)
}

fn relative(dir: &Path, path: &Path) -> String {
    path.strip_prefix(dir).unwrap_or(path).to_string_lossy().replace('\\', "/")
}

/// Generates instances, references, samples and estimates under `cfg.output`,
/// reusing cached instances, references and samples from earlier runs.
///
/// Writes `estimates.csv`, `quartiles.csv`, `curves.csv` and `manifest.json`.
/// When any instance fails nothing but `status.json` is written at the top
/// level and the first failure is returned.
pub fn run_full_pipeline(cfg: &ExperimentConfig) -> Result<Manifest> {
    cfg.validate()?;
    let dir = cfg.output.clone();
    let insts = instances(cfg)?;
    fs::create_dir_all(&dir)?;

    let results: Vec<Result<InstanceRun>> = insts.par_iter().map(|inst| run_instance(inst, cfg, &dir)).collect();
    let mut stages = Vec::new();
    let mut failure: Option<Error> = None;
    let mut runs = Vec::new();
    for (inst, r) in insts.iter().zip(results) {
        match r {
            Ok(run) => runs.push(run),
            Err(e) => {
                stages.push(StageStatus {
                    stage: format!("instance-run:{}", inst.id),
                    state: StageState::Failed,
                    message: Some(e.to_string()),
                });
                failure.get_or_insert(e);
            }
        }
    }
    if let Some(e) = failure {
        for run in &runs {
            stages.extend(run.stages.iter().cloned());
        }
        stages.push(StageStatus { stage: "tables".into(), state: StageState::Skipped, message: None });
        write_atomic(&dir.join(STATUS_FILE), &serde_json::to_vec_pretty(&stages)?)?;
        return Err(e);
    }

    let mut rows = Vec::new();
    let mut curves = Vec::new();
    let mut seeds = Vec::new();
    let mut paths = Vec::new();
    for run in runs {
        rows.extend(run.rows);
        curves.extend(run.curves);
        seeds.extend(run.seeds);
        paths.extend(run.files);
        stages.extend(run.stages);
    }
    let quartiles = aggregate(&rows);
    let tables = [dir.join("estimates.csv"), dir.join("quartiles.csv"), dir.join("curves.csv")];
    write_csv(&tables[0], &rows)?;
    write_csv(&tables[1], &quartiles)?;
    write_csv(&tables[2], &curves)?;
    paths.extend(tables);
    stages.push(done("tables".into(), false));

    let files = paths
        .iter()
        .map(|p| Ok(FileEntry { path: relative(&dir, p), sha256: file_sha(p)? }))
        .collect::<Result<Vec<_>>>()?;
    let mut manifest = Manifest {
        version: env!("CARGO_PKG_VERSION").to_string(),
        config: cfg.clone(),
        config_hash: cfg.hash(),
        seeds,
        files,
        stages,
        hash: String::new(),
    };
    manifest.hash = manifest.compute_hash();
    write_atomic(&dir.join(MANIFEST_FILE), &serde_json::to_vec_pretty(&manifest)?)?;
    let status = dir.join(STATUS_FILE);
    if status.exists() {
        fs::remove_file(status)?;
    }
    Ok(manifest)
}
