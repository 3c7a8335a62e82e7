//! Per-instance building blocks shared by the presets and the pipeline.

use rayon::prelude::*;

use super::config::{ExperimentConfig, ReferenceChoice};
use super::table::{CurveRow, ResultRow};
use crate::error::{Error, Result};
use crate::estimators::{
    apply_postprocessing, curve_with_postprocessing, estimate_min_kl, estimate_min_mse, estimate_ml, estimate_mlpl,
    kl_curve, mse_curve, CurveObjective, EstimatorMethod, EstimatorReport, KlCurve, MlOptions, MlplOptions,
    MseOptions, ObjectiveCurve, PostprocessMode,
};
use crate::model::io::read_model;
use crate::model::{IsingModel, SampleSet};
use crate::reference::{
    exact_boltzmann_samples, pt_stats, uniform_grid, EliminationPlan, Enumerator, HybridSource, MeanEnergySource,
    PtBudget, ReferenceStatistics, DEFAULT_ENUMERATION_CAP,
};
use crate::rng::derive_seed;
use crate::sampling::{run_sta, AnnealSchedule};
use crate::topology::{build_chimera, Coloring, TopologyGraph};

const POSTPROCESS_SALT: u64 = 0x7070;
const BOOTSTRAP_SALT: u64 = 0xb007;

/// A problem instance with the layout needed to sample it.
#[derive(Debug, Clone)]
pub struct Instance {
    pub id: String,
    pub size: String,
    pub seed: u64,
    pub model: IsingModel,
    pub graph: Option<TopologyGraph>,
    pub coloring: Coloring,
}

/// Instances named by the config, generated or read from files.
pub fn instances(cfg: &ExperimentConfig) -> Result<Vec<Instance>> {
    if !cfg.instance_files.is_empty() {
        return cfg
            .instance_files
            .iter()
            .enumerate()
            .map(|(k, path)| {
                let stage = format!("instance:{}", path.display());
                let model = read_model(path).map_err(|e| e.in_stage(&stage))?;
                let coloring = Coloring::bipartite(&model).unwrap_or_else(|| Coloring::greedy(&model));
                let stem = path.file_stem().map_or_else(|| format!("file{k}"), |s| s.to_string_lossy().into_owned());
                Ok(Instance {
                    id: format!("N{}-{stem}", model.n_spins()),
                    size: format!("N{}", model.n_spins()),
                    seed: model.meta().seed.unwrap_or(k as u64),
                    model,
                    graph: None,
                    coloring,
                })
            })
            .collect();
    }
    let mut out = Vec::new();
    for spec in &cfg.sizes {
        let graph = build_chimera(spec).map_err(|e| e.in_stage(format!("topology:{}", spec.tag())))?;
        let coloring = graph.coloring();
        for k in 0..cfg.n_instances {
            let seed = cfg.instance_seed + k as u64;
            out.push(Instance {
                id: format!("{}-{k:03}", spec.tag()),
                size: spec.tag(),
                seed,
                model: cfg.class.generate(&graph, seed),
                graph: Some(graph.clone()),
                coloring: coloring.clone(),
            });
        }
    }
    Ok(out)
}

/// Exact engine retained alongside stored statistics.
pub enum ExactEngine {
    Enum(Enumerator),
    Dp(EliminationPlan),
}

impl MeanEnergySource for ExactEngine {
    fn beta_range(&self) -> (f64, f64) {
        match self {
            ExactEngine::Enum(e) => e.beta_range(),
            ExactEngine::Dp(p) => p.beta_range(),
        }
    }

    fn mean_energy_at(&self, beta: f64) -> Result<f64> {
        match self {
            ExactEngine::Enum(e) => e.mean_energy_at(beta),
            ExactEngine::Dp(p) => p.mean_energy_at(beta),
        }
    }
}

/// Reference statistics for an instance, plus the engine when it is exact.
pub struct Prepared {
    pub reference: ReferenceStatistics,
    pub engine: Option<ExactEngine>,
}

/// Grid from 0 to `grid_max`, by default 1.5 times the hottest-to-coldest annealing beta.
pub fn reference_grid(cfg: &ExperimentConfig) -> Result<Vec<f64>> {
    let top = cfg.sampler.fractions.iter().copied().fold(0.0, f64::max) * cfg.beta_t();
    let hi = cfg.reference.grid_max.unwrap_or(1.5 * top).max(cfg.reference.grid_step);
    uniform_grid(0.0, hi, cfg.reference.grid_step)
}

pub fn engine_for(inst: &Instance, cfg: &ExperimentConfig) -> Result<Option<ExactEngine>> {
    let rc = &cfg.reference;
    let n = inst.model.n_spins();
    match rc.method {
        ReferenceChoice::ExactEnum => Ok(Some(ExactEngine::Enum(Enumerator::new(&inst.model, DEFAULT_ENUMERATION_CAP)?))),
        ReferenceChoice::ExactDp => {
            Ok(Some(ExactEngine::Dp(EliminationPlan::auto(&inst.model, inst.graph.as_ref(), rc.width_cap)?)))
        }
        ReferenceChoice::Pt => Ok(None),
        ReferenceChoice::Auto if n <= rc.enumeration_max_spins => {
            Ok(Some(ExactEngine::Enum(Enumerator::new(&inst.model, DEFAULT_ENUMERATION_CAP)?)))
        }
        ReferenceChoice::Auto => match EliminationPlan::auto(&inst.model, inst.graph.as_ref(), rc.width_cap) {
            Ok(p) => Ok(Some(ExactEngine::Dp(p))),
            Err(Error::WidthExceeded { .. }) => Ok(None),
            Err(e) => Err(e),
        },
    }
}

pub fn compute_reference(
    inst: &Instance,
    engine: Option<&ExactEngine>,
    grid: &[f64],
    cfg: &ExperimentConfig,
) -> Result<ReferenceStatistics> {
    let hash = inst.model.content_hash();
    match engine {
        Some(ExactEngine::Enum(e)) => e.statistics(grid, hash),
        Some(ExactEngine::Dp(p)) => p.statistics(grid, hash),
        None => {
            let budget = PtBudget {
                n_exchanges: cfg.reference.pt_exchanges,
                thermodynamic_integration: true,
                ..PtBudget::default()
            };
            pt_stats(&inst.model, &inst.coloring, grid, &budget, derive_seed(cfg.reference.pt_seed, &[inst.seed]))
        }
    }
}

pub fn prepare(inst: &Instance, cfg: &ExperimentConfig) -> Result<Prepared> {
    let stage = format!("reference:{}", inst.id);
    let grid = reference_grid(cfg).map_err(|e| e.in_stage(&stage))?;
    let engine = engine_for(inst, cfg).map_err(|e| e.in_stage(&stage))?;
    let reference = compute_reference(inst, engine.as_ref(), &grid, cfg).map_err(|e| e.in_stage(&stage))?;
    Ok(Prepared { reference, engine })
}

/// One sampler configuration applied to every instance.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplerSetting {
    /// `sta-<sweeps>` or `exact`.
    pub tag: String,
    /// `None` for exact Boltzmann samples.
    pub sweeps: Option<usize>,
    pub fraction: f64,
    pub beta: f64,
}

pub fn sampler_settings(cfg: &ExperimentConfig) -> Vec<SamplerSetting> {
    let beta_t = cfg.beta_t();
    let mut out = Vec::new();
    for &fraction in &cfg.sampler.fractions {
        for &s in &cfg.sampler.sweeps {
            out.push(SamplerSetting { tag: format!("sta-{s}"), sweeps: Some(s), fraction, beta: fraction * beta_t });
        }
        if cfg.sampler.exact_control {
            out.push(SamplerSetting { tag: "exact".into(), sweeps: None, fraction, beta: fraction * beta_t });
        }
    }
    out
}

/// Seed of the sampler run for one instance and setting.
pub fn sampler_seed(cfg: &ExperimentConfig, inst: &Instance, s: &SamplerSetting) -> u64 {
    derive_seed(cfg.sampler.seed, &[inst.seed, s.sweeps.map_or(u64::MAX, |x| x as u64), s.fraction.to_bits()])
}

pub fn draw_samples(inst: &Instance, s: &SamplerSetting, n: usize, seed: u64) -> Result<SampleSet> {
    let stage = format!("sample:{}:{}:{}", inst.id, s.tag, s.fraction);
    match s.sweeps {
        Some(sweeps) => AnnealSchedule::linear(s.beta, sweeps)
            .and_then(|sched| run_sta(&inst.model, &sched, n, &inst.coloring, seed)),
        None => exact_boltzmann_samples(&inst.model, s.beta, n, seed, inst.graph.as_ref()),
    }
    .map_err(|e| e.in_stage(stage))
}

/// Estimates and the curves behind them for one sample set.
pub struct Estimates {
    pub reports: Vec<EstimatorReport>,
    pub curves: Vec<ObjectiveCurve>,
}

fn ml_report(samples: &SampleSet, inst: &Instance, prep: &Prepared, opts: &MlOptions) -> Result<EstimatorReport> {
    match &prep.engine {
        Some(engine) => {
            let source = HybridSource { stored: &prep.reference, exact: engine };
            estimate_ml(samples, &inst.model, &source, opts)
        }
        None => estimate_ml(samples, &inst.model, &prep.reference, opts),
    }
}

/// Runs every configured estimator on one sample set.
pub fn estimate_all(
    inst: &Instance,
    prep: &Prepared,
    samples: &SampleSet,
    seed: u64,
    mode: PostprocessMode,
    cfg: &ExperimentConfig,
) -> Result<Estimates> {
    let pp_seed = derive_seed(seed, &[POSTPROCESS_SALT]);
    let boot_seed = derive_seed(cfg.estimator_seed, &[seed, BOOTSTRAP_SALT]);
    let processed = apply_postprocessing(samples, &inst.model, mode, &inst.coloring, pp_seed)?;
    let mse_opts = MseOptions::default();
    let mut reports = Vec::new();
    let mut curves = Vec::new();
    for &method in &cfg.estimators {
        let mut r = match method {
            EstimatorMethod::Ml => {
                let opts = MlOptions { bootstrap: cfg.bootstrap, seed: boot_seed, ..MlOptions::default() };
                ml_report(&processed, inst, prep, &opts)?
            }
            EstimatorMethod::Mlpl => {
                let opts = MlplOptions { bootstrap: cfg.bootstrap, seed: boot_seed, ..MlplOptions::default() };
                estimate_mlpl(&processed, &inst.model, &opts)?
            }
            EstimatorMethod::MinMse => {
                let curve = match mode {
                    PostprocessMode::Coupled { sweeps } => curve_with_postprocessing(
                        samples,
                        &inst.model,
                        &prep.reference,
                        &inst.coloring,
                        sweeps,
                        pp_seed,
                        CurveObjective::Mse,
                        &mse_opts,
                    )?,
                    _ => mse_curve(&processed, &inst.model, &prep.reference, &mse_opts)?,
                };
                let r = estimate_min_mse(&curve, cfg.min_mse_mode)?;
                curves.push(curve);
                r
            }
            EstimatorMethod::MinKl => {
                let kl = match mode {
                    PostprocessMode::Coupled { sweeps } => {
                        let raw = curve_with_postprocessing(
                            samples,
                            &inst.model,
                            &prep.reference,
                            &inst.coloring,
                            sweeps,
                            pp_seed,
                            CurveObjective::Kl,
                            &mse_opts,
                        )?;
                        KlCurve { raw, corrected: None, entropy: f64::NAN, entropy_jackknife: None }
                    }
                    _ => kl_curve(&processed, &inst.model, &prep.reference)?,
                };
                let r = estimate_min_kl(&kl)?;
                curves.push(kl.raw);
                curves.extend(kl.corrected);
                r
            }
        };
        r.postprocessed = mode;
        reports.push(r);
    }
    Ok(Estimates { reports, curves })
}

/// Row template for a sample set, before an estimate is filled in.
pub fn base_row(inst: &Instance, s: &SamplerSetting, seed: u64, mode: PostprocessMode) -> ResultRow {
    ResultRow {
        instance_id: inst.id.clone(),
        size: inst.size.clone(),
        instance_seed: inst.seed,
        sampler: s.tag.clone(),
        sampler_seed: seed,
        beta_t: s.beta,
        fraction: s.fraction,
        method: String::new(),
        beta_hat: None,
        sentinel: None,
        objective: None,
        se: None,
        bias: None,
        postprocess: mode.tag(),
    }
}

pub fn curve_rows(row: &ResultRow, curve: &ObjectiveCurve) -> Vec<CurveRow> {
    (0..curve.betas.len())
        .map(|k| CurveRow {
            instance_id: row.instance_id.clone(),
            size: row.size.clone(),
            sampler: row.sampler.clone(),
            sampler_seed: row.sampler_seed,
            postprocess: row.postprocess.clone(),
            objective: curve.label.clone(),
            beta: curve.betas[k],
            value: curve.values[k],
            se: curve.se.as_ref().map(|s| s[k]).filter(|s| s.is_finite()),
        })
        .collect()
}

/// Maps `f` over instances in parallel, keeping instance order.
pub fn per_instance<T, F>(instances: &[Instance], f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(&Instance) -> Result<Vec<T>> + Sync + Send,
{
    let nested = instances.par_iter().map(f).collect::<Result<Vec<_>>>()?;
    Ok(nested.into_iter().flatten().collect())
}
