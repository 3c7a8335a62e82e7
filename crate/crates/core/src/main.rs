use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;

use betafit::estimators::{EstimatorMethod, PostprocessMode};
use betafit::harness::run::{
    compute_reference, curve_rows, engine_for, estimate_all, reference_grid, ExactEngine, Instance, Prepared,
};
use betafit::harness::{run_full_pipeline, run_preset, write_csv, EstimateRow, ExperimentConfig, Preset, ResultRow};
use betafit::model::io::{read_model, read_samples, write_model, write_samples};
use betafit::reference::{cache_key, exact_boltzmann_samples, load_reference, save_reference, ReferenceMethod};
use betafit::sampling::{postprocess, run_sta, AnnealSchedule};
use betafit::topology::{build_chimera, ChimeraSpec, Coloring};
use betafit::{Error, Result};

/// Spin-glass instances, annealed samples and inverse-temperature estimates.
#[derive(Parser)]
#[command(name = "betafit", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Settings shared by every subcommand. Explicit flags win over `--set`,
/// which wins over the config file.
#[derive(Args, Clone)]
struct ConfigArgs {
    /// TOML experiment config.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Dotted-key override such as `sampler.sweeps=[20,2000]`; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a Chimera instance and write it as JSON.
    Generate {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// `ran1` or `ac3`.
        #[arg(long)]
        class: Option<String>,
        /// Lattice size such as `C4`, `4` or `2x3`.
        #[arg(long)]
        size: Option<String>,
        #[arg(long)]
        seed: u64,
        /// Ideal qubit indices to delete; repeatable.
        #[arg(long = "dead-qubit")]
        dead_qubits: Vec<usize>,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Draw annealed or exact Boltzmann samples.
    Sample {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        model: PathBuf,
        /// Terminal inverse temperature; the class default when absent.
        #[arg(long)]
        beta: Option<f64>,
        /// Anneal length in sweeps.
        #[arg(long)]
        sweeps: Option<usize>,
        /// Exact Boltzmann samples at `--beta` instead of annealing.
        #[arg(long)]
        exact: bool,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        seed: u64,
        /// Gibbs sweeps at `--beta` applied after sampling.
        #[arg(long, default_value_t = 0)]
        postprocess: usize,
        /// `.bin` for the packed format, anything else for CSV.
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Compute reference statistics on a beta grid.
    Reference {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        model: PathBuf,
        /// `auto`, `exact-enum`, `exact-dp` or `pt`.
        #[arg(long)]
        method: Option<String>,
        #[arg(long)]
        grid_step: Option<f64>,
        #[arg(long)]
        grid_max: Option<f64>,
        /// Largest instance handled by enumeration under `auto`.
        #[arg(long)]
        enum_cap: Option<usize>,
        /// Largest clique width for elimination.
        #[arg(long)]
        width_cap: Option<usize>,
        #[arg(long)]
        pt_exchanges: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Output stem; `<stem>.json` and `<stem>.csv` are written.
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Estimate the effective inverse temperature of a sample set.
    Estimate {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        samples: PathBuf,
        /// Stored reference stem; computed on the fly when absent.
        #[arg(long)]
        reference: Option<PathBuf>,
        /// Comma-separated subset of `ml,mlpl,min-mse,min-kl`.
        #[arg(long, value_delimiter = ',')]
        methods: Vec<String>,
        /// `off`, `fixed:<beta>:<sweeps>` or `coupled:<sweeps>`.
        #[arg(long)]
        postprocess: Option<String>,
        #[arg(long)]
        bootstrap: Option<usize>,
        /// Seeds bootstrap resampling and post-processing.
        #[arg(long)]
        seed: u64,
        #[arg(long, short)]
        out: PathBuf,
        /// Objective curves of the curve-based estimators.
        #[arg(long)]
        curves: Option<PathBuf>,
    },
    /// Run a canned experiment.
    Experiment {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// `rescaling-sweep`, `mse-scan` or `estimator-scatter`.
        preset: String,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Instances, references, samples and estimates with a manifest.
    Pipeline {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
}

fn load_config(args: &ConfigArgs, base: ExperimentConfig) -> Result<ExperimentConfig> {
    let mut cfg = match &args.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => base,
    };
    for kv in &args.overrides {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override `{kv}` is not KEY=VALUE")))?;
        cfg.set(k.trim(), v.trim())?;
    }
    Ok(cfg)
}

fn file_instance(path: &Path) -> Result<Instance> {
    let model = read_model(path)?;
    let coloring = Coloring::bipartite(&model).unwrap_or_else(|| Coloring::greedy(&model));
    Ok(Instance {
        id: path.file_stem().map_or_else(|| "model".into(), |s| s.to_string_lossy().into_owned()),
        size: format!("N{}", model.n_spins()),
        seed: model.meta().seed.unwrap_or(0),
        model,
        graph: None,
        coloring,
    })
}

fn method_of(engine: Option<&ExactEngine>) -> ReferenceMethod {
    match engine {
        Some(ExactEngine::Enum(_)) => ReferenceMethod::ExactEnum,
        Some(ExactEngine::Dp(_)) => ReferenceMethod::ExactDp,
        None => ReferenceMethod::Pt,
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate { cfg, class, size, seed, dead_qubits, out } => {
            let mut c = load_config(&cfg, ExperimentConfig::default())?;
            if let Some(class) = class {
                c.class = class.parse()?;
            }
            let mut spec = match size {
                Some(s) => s.parse::<ChimeraSpec>()?,
                None => c.sizes.first().cloned().ok_or_else(|| Error::Config("no size given".into()))?,
            };
            if !dead_qubits.is_empty() {
                spec = spec.with_dead_qubits(dead_qubits);
            }
            let graph = build_chimera(&spec)?;
            let model = c.class.generate(&graph, seed);
            write_model(&out, &model)?;
            info!("{} spins, {} couplers -> {}", model.n_spins(), model.edges().len(), out.display());
        }
        Command::Sample { cfg, model, beta, sweeps, exact, n, seed, postprocess: pp, out } => {
            let c = load_config(&cfg, ExperimentConfig::default())?;
            let inst = file_instance(&model)?;
            let beta = beta.unwrap_or_else(|| c.beta_t());
            let n = n.unwrap_or(c.sampler.n_samples);
            let mut set = if exact {
                exact_boltzmann_samples(&inst.model, beta, n, seed, None)?
            } else {
                let sweeps = sweeps
                    .or_else(|| c.sampler.sweeps.first().copied())
                    .ok_or_else(|| Error::Config("no sweep count given".into()))?;
                run_sta(&inst.model, &AnnealSchedule::linear(beta, sweeps)?, n, &inst.coloring, seed)?
            };
            if pp > 0 {
                set = postprocess(&set, &inst.model, beta, pp, &inst.coloring, seed ^ 0x7070)?;
            }
            write_samples(&out, &set)?;
            info!("{} samples -> {}", set.len(), out.display());
        }
        Command::Reference { cfg, model, method, grid_step, grid_max, enum_cap, width_cap, pt_exchanges, seed, out } => {
            let mut c = load_config(&cfg, ExperimentConfig::default())?;
            if let Some(m) = method {
                c.set("reference.method", &m)?;
            }
            let rc = &mut c.reference;
            rc.grid_step = grid_step.unwrap_or(rc.grid_step);
            rc.grid_max = grid_max.or(rc.grid_max);
            rc.enumeration_max_spins = enum_cap.unwrap_or(rc.enumeration_max_spins);
            rc.width_cap = width_cap.unwrap_or(rc.width_cap);
            rc.pt_exchanges = pt_exchanges.unwrap_or(rc.pt_exchanges);
            rc.pt_seed = seed.unwrap_or(rc.pt_seed);
            c.validate()?;
            let inst = file_instance(&model)?;
            let grid = reference_grid(&c)?;
            let engine = engine_for(&inst, &c)?;
            let stem = out.unwrap_or_else(|| {
                c.output.join(cache_key(&inst.model.content_hash(), &grid, method_of(engine.as_ref())))
            });
            let r = compute_reference(&inst, engine.as_ref(), &grid, &c)?;
            save_reference(&stem, &r)?;
            info!("{} reference on {} points -> {}", r.method.as_str(), r.len(), stem.display());
            println!("{}", stem.display());
        }
        Command::Estimate { cfg, model, samples, reference, methods, postprocess, bootstrap, seed, out, curves } => {
            let mut c = load_config(&cfg, ExperimentConfig::default())?;
            if !methods.is_empty() {
                c.estimators = methods.iter().map(|m| m.parse::<EstimatorMethod>()).collect::<Result<_>>()?;
            }
            if let Some(p) = postprocess {
                c.postprocess = p.parse::<PostprocessMode>()?;
            }
            c.bootstrap = bootstrap.unwrap_or(c.bootstrap);
            c.estimator_seed = seed;
            c.validate()?;
            let inst = file_instance(&model)?;
            let set = read_samples(&samples)?;
            let engine = engine_for(&inst, &c)?;
            let reference = match reference {
                Some(stem) => load_reference(&stem)?,
                None => compute_reference(&inst, engine.as_ref(), &reference_grid(&c)?, &c)?,
            };
            reference.check_model(&inst.model)?;
            let prep = Prepared { reference, engine };
            let est = estimate_all(&inst, &prep, &set, seed, c.postprocess, &c)?;
            let rows: Vec<EstimateRow> = est.reports.iter().map(EstimateRow::from).collect();
            write_csv(&out, &rows)?;
            for r in &est.reports {
                info!("{}: {}", r.method, r.beta_hat);
            }
            if let Some(path) = curves {
                let template = ResultRow {
                    instance_id: inst.id.clone(),
                    size: inst.size.clone(),
                    instance_seed: inst.seed,
                    sampler: set.meta.sampler.clone(),
                    sampler_seed: set.meta.seed.unwrap_or(0),
                    beta_t: f64::NAN,
                    fraction: f64::NAN,
                    method: String::new(),
                    beta_hat: None,
                    sentinel: None,
                    objective: None,
                    se: None,
                    bias: None,
                    postprocess: c.postprocess.tag(),
                };
                let rows: Vec<_> = est.curves.iter().flat_map(|cv| curve_rows(&template, cv)).collect();
                write_csv(&path, &rows)?;
            }
        }
        Command::Experiment { cfg, preset, out } => {
            let preset: Preset = preset.parse()?;
            let mut c = load_config(&cfg, ExperimentConfig::preset(preset))?;
            if let Some(o) = out {
                c.output = o;
            }
            let output = run_preset(preset, &c)?;
            for p in output.write(&c.output, preset.as_str())? {
                println!("{}", p.display());
            }
        }
        Command::Pipeline { cfg, out } => {
            let mut c = load_config(&cfg, ExperimentConfig::default())?;
            if let Some(o) = out {
                c.output = o;
            }
            let manifest = run_full_pipeline(&c)?;
            println!("{}", manifest.hash);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
