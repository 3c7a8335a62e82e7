use std::fmt;

use rayon::prelude::*;

use super::kernel::{randomize, GibbsKernel, SweepTable};
use crate::error::{Error, Result};
use crate::model::{IsingModel, PostProcessRecord, SampleMeta, SampleSet};
use crate::rng::{tag, tagged};
use crate::topology::Coloring;

/// Per-sweep inverse temperatures of one anneal.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnealSchedule {
    betas: Vec<f64>,
    kind: ScheduleKind,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum ScheduleKind {
    Linear { beta_t: f64 },
    Constant { beta: f64 },
    Custom,
}

impl AnnealSchedule {
    /// `beta_s = beta_t * s / (sweeps - 1)` for `s = 0..sweeps`, so the first
    /// sweep runs at 0 and the last at `beta_t`. A single sweep runs at `beta_t`.
    pub fn linear(beta_t: f64, sweeps: usize) -> Result<Self> {
        check_beta(beta_t)?;
        if sweeps == 0 {
            return Err(Error::EmptySchedule);
        }
        let betas = if sweeps == 1 {
            vec![beta_t]
        } else {
            let last = (sweeps - 1) as f64;
            (0..sweeps).map(|s| beta_t * s as f64 / last).collect()
        };
        Ok(AnnealSchedule { betas, kind: ScheduleKind::Linear { beta_t } })
    }

    pub fn constant(beta: f64, sweeps: usize) -> Result<Self> {
        check_beta(beta)?;
        if sweeps == 0 {
            return Err(Error::EmptySchedule);
        }
        Ok(AnnealSchedule { betas: vec![beta; sweeps], kind: ScheduleKind::Constant { beta } })
    }

    pub fn from_betas(betas: Vec<f64>) -> Result<Self> {
        if betas.is_empty() {
            return Err(Error::EmptySchedule);
        }
        for &b in &betas {
            check_beta(b)?;
        }
        Ok(AnnealSchedule { betas, kind: ScheduleKind::Custom })
    }

    pub fn betas(&self) -> &[f64] {
        &self.betas
    }

    pub fn sweeps(&self) -> usize {
        self.betas.len()
    }

    pub fn final_beta(&self) -> f64 {
        *self.betas.last().expect("schedules are non-empty")
    }
}

impl fmt::Display for AnnealSchedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            ScheduleKind::Linear { beta_t } => write!(f, "linear(0..{beta_t}, {} sweeps)", self.betas.len()),
            ScheduleKind::Constant { beta } => write!(f, "constant({beta}, {} sweeps)", self.betas.len()),
            ScheduleKind::Custom => write!(f, "custom({} sweeps)", self.betas.len()),
        }
    }
}

fn check_beta(beta: f64) -> Result<()> {
    if !beta.is_finite() || beta < 0.0 {
        return Err(Error::InvalidArgument(format!("beta must be finite and non-negative, got {beta}")));
    }
    Ok(())
}

/// Tables for each sweep, sharing one table across runs of equal betas.
fn schedule_tables(kernel: &GibbsKernel<'_>, betas: &[f64]) -> (Vec<SweepTable>, Vec<usize>) {
    let mut tables = Vec::new();
    let mut index = Vec::with_capacity(betas.len());
    let mut prev = f64::NAN;
    for &b in betas {
        if b != prev {
            tables.push(kernel.table(b));
            prev = b;
        }
        index.push(tables.len() - 1);
    }
    (tables, index)
}

/// Simulated thermal annealing: `n_samples` independent anneals, each from a
/// uniform random state, one blocked Gibbs sweep per schedule entry.
///
/// Sample `k` draws from its own stream of `seed`, so the output does not
/// depend on thread scheduling.
pub fn run_sta(
    model: &IsingModel,
    schedule: &AnnealSchedule,
    n_samples: usize,
    coloring: &Coloring,
    seed: u64,
) -> Result<SampleSet> {
    if n_samples == 0 {
        return Err(Error::InvalidArgument("n_samples must be at least 1".into()));
    }
    let kernel = GibbsKernel::new(model, coloring)?;
    let (tables, index) = schedule_tables(&kernel, schedule.betas());
    let n = model.n_spins();
    let mut spins = vec![0i8; n * n_samples];
    spins.par_chunks_mut(n).enumerate().for_each(|(k, state)| {
        let mut rng = tagged(seed, tag::ANNEAL, k as u64);
        randomize(state, &mut rng);
        for &t in &index {
            kernel.sweep(state, &tables[t], &mut rng);
        }
    });
    let meta = SampleMeta {
        sampler: "sta".into(),
        schedule: schedule.to_string(),
        seed: Some(seed),
        postprocess: None,
    };
    SampleSet::from_flat(model.label(), n, spins, meta)
}

/// Evolves every sample by `n_sweeps` blocked Gibbs sweeps at fixed `beta`.
///
/// Sample `k` uses a stream determined by `(seed, k)` alone, so calls at
/// different betas with the same seed share random numbers.
pub fn postprocess(
    samples: &SampleSet,
    model: &IsingModel,
    beta: f64,
    n_sweeps: usize,
    coloring: &Coloring,
    seed: u64,
) -> Result<SampleSet> {
    samples.check_model(model)?;
    check_beta(beta)?;
    let mut out = samples.clone();
    out.meta.postprocess = Some(PostProcessRecord { beta, sweeps: n_sweeps });
    if n_sweeps == 0 {
        return Ok(out);
    }
    let kernel = GibbsKernel::new(model, coloring)?;
    let table = kernel.table(beta);
    let n = model.n_spins();
    out.flat_mut().par_chunks_mut(n).enumerate().for_each(|(k, state)| {
        let mut rng = tagged(seed, tag::POSTPROCESS, k as u64);
        for _ in 0..n_sweeps {
            kernel.sweep(state, &table, &mut rng);
        }
    });
    Ok(out)
}
