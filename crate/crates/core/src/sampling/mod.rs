//! Blocked Gibbs sampling, simulated thermal annealing, post-processing and
//! parallel tempering.

mod anneal;
mod kernel;
mod tempering;

pub use anneal::{postprocess, run_sta, AnnealSchedule};
pub use kernel::{conditional_flip_prob, gibbs_sweep, GibbsKernel, SweepTable};
pub use tempering::{
    geometric_ladder, run_parallel_tempering, run_parallel_tempering_with, swap_acceptance, SwapDiagnostics,
    TemperingConfig, TemperingRun, DEFAULT_LADDER_MIN, DEFAULT_RUNGS,
};
