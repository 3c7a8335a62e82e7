use rand::Rng;

use super::kernel::{randomize, GibbsKernel, SweepTable};
use crate::error::{Error, Result};
use crate::model::{IsingModel, SampleMeta, SampleSet};
use crate::rng::{tag, tagged};
use crate::topology::Coloring;

pub const DEFAULT_LADDER_MIN: f64 = 0.1;
pub const DEFAULT_RUNGS: usize = 16;

/// Replica-exchange run parameters. The ladder is ordered hottest first.
#[derive(Debug, Clone, PartialEq)]
pub struct TemperingConfig {
    pub ladder: Vec<f64>,
    pub sweeps_per_exchange: usize,
    pub n_exchanges: usize,
    /// Exchanges discarded before recording starts.
    pub burn_in: usize,
}

impl TemperingConfig {
    fn validate(&self) -> Result<()> {
        check_ladder(&self.ladder)?;
        if self.sweeps_per_exchange == 0 {
            return Err(Error::InvalidArgument("sweeps_per_exchange must be at least 1".into()));
        }
        if self.n_exchanges <= self.burn_in {
            return Err(Error::BudgetTooSmall(format!(
                "{} exchanges leave nothing after a burn-in of {}",
                self.n_exchanges, self.burn_in
            )));
        }
        Ok(())
    }
}

pub(crate) fn check_ladder(ladder: &[f64]) -> Result<()> {
    if ladder.is_empty() {
        return Err(Error::InvalidArgument("temperature ladder is empty".into()));
    }
    if ladder.iter().any(|b| !b.is_finite() || *b < 0.0) {
        return Err(Error::InvalidArgument("ladder betas must be finite and non-negative".into()));
    }
    if ladder.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument("ladder must be strictly increasing".into()));
    }
    Ok(())
}

/// `rungs` betas spaced geometrically from `beta_min` to `beta_max`.
pub fn geometric_ladder(beta_min: f64, beta_max: f64, rungs: usize) -> Result<Vec<f64>> {
    if rungs == 0 {
        return Err(Error::InvalidArgument("ladder needs at least one rung".into()));
    }
    if rungs == 1 {
        return Ok(vec![beta_max]);
    }
    if !(beta_min > 0.0 && beta_max > beta_min && beta_max.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "geometric ladder needs 0 < beta_min < beta_max, got {beta_min}, {beta_max}"
        )));
    }
    let ratio = (beta_max / beta_min).ln() / (rungs - 1) as f64;
    let mut ladder: Vec<f64> = (0..rungs).map(|k| beta_min * (ratio * k as f64).exp()).collect();
    ladder[rungs - 1] = beta_max;
    Ok(ladder)
}

/// Acceptance counts for each adjacent rung pair `(r, r + 1)`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SwapDiagnostics {
    pub attempts: Vec<u64>,
    pub accepts: Vec<u64>,
}

impl SwapDiagnostics {
    pub fn acceptance_rates(&self) -> Vec<f64> {
        self.attempts
            .iter()
            .zip(&self.accepts)
            .map(|(&n, &a)| if n == 0 { f64::NAN } else { a as f64 / n as f64 })
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct TemperingRun {
    /// Recorded states for each rung, in ladder order.
    pub samples: Vec<SampleSet>,
    pub swaps: SwapDiagnostics,
    /// Energy of each rung after every exchange, burn-in included.
    pub energy_trace: Vec<Vec<f64>>,
}

/// `min(1, exp((beta_a - beta_b) (e_a - e_b)))`.
pub fn swap_acceptance(beta_a: f64, e_a: f64, beta_b: f64, e_b: f64) -> f64 {
    ((beta_a - beta_b) * (e_a - e_b)).exp().min(1.0)
}

/// Replica exchange, recording every post-burn-in state of every rung.
pub fn run_parallel_tempering(
    model: &IsingModel,
    coloring: &Coloring,
    config: &TemperingConfig,
    seed: u64,
) -> Result<TemperingRun> {
    let n = model.n_spins();
    let rungs = config.ladder.len();
    let recorded = config.n_exchanges - config.burn_in.min(config.n_exchanges);
    let mut buffers: Vec<Vec<i8>> = (0..rungs).map(|_| Vec::with_capacity(recorded * n)).collect();
    let mut energy_trace = vec![Vec::with_capacity(config.n_exchanges); rungs];
    let swaps = drive(model, coloring, config, seed, |t, states, energies| {
        for (r, &e) in energies.iter().enumerate() {
            energy_trace[r].push(e);
        }
        if t >= config.burn_in {
            for (buf, s) in buffers.iter_mut().zip(states) {
                buf.extend_from_slice(s);
            }
        }
    })?;
    let samples = buffers
        .into_iter()
        .zip(&config.ladder)
        .map(|(spins, &beta)| {
            let meta = SampleMeta {
                sampler: "pt".into(),
                schedule: format!(
                    "pt(beta={beta}, rungs={rungs}, sweeps/exchange={}, exchanges={}, burn-in={})",
                    config.sweeps_per_exchange, config.n_exchanges, config.burn_in
                ),
                seed: Some(seed),
                postprocess: None,
            };
            SampleSet::from_flat(model.label(), n, spins, meta)
        })
        .collect::<Result<_>>()?;
    Ok(TemperingRun { samples, swaps, energy_trace })
}

/// Replica exchange calling `observer(exchange, states, energies)` after each
/// post-burn-in exchange, with states and energies in ladder order.
pub fn run_parallel_tempering_with<F>(
    model: &IsingModel,
    coloring: &Coloring,
    config: &TemperingConfig,
    seed: u64,
    mut observer: F,
) -> Result<SwapDiagnostics>
where
    F: FnMut(usize, &[Vec<i8>], &[f64]),
{
    drive(model, coloring, config, seed, |t, states, energies| {
        if t >= config.burn_in {
            observer(t, states, energies);
        }
    })
}

fn drive<F>(model: &IsingModel, coloring: &Coloring, config: &TemperingConfig, seed: u64, mut each: F) -> Result<SwapDiagnostics>
where
    F: FnMut(usize, &[Vec<i8>], &[f64]),
{
    config.validate()?;
    let kernel = GibbsKernel::new(model, coloring)?;
    let n = model.n_spins();
    let rungs = config.ladder.len();
    let tables: Vec<SweepTable> = config.ladder.iter().map(|&b| kernel.table(b)).collect();
    let mut rngs: Vec<_> = (0..rungs).map(|r| tagged(seed, tag::TEMPERING_REPLICAS, r as u64)).collect();
    let mut swap_rng = tagged(seed, tag::TEMPERING_SWAPS, 0);
    let mut states: Vec<Vec<i8>> = rngs
        .iter_mut()
        .map(|rng| {
            let mut s = vec![0i8; n];
            randomize(&mut s, rng);
            s
        })
        .collect();
    let mut energies = vec![0.0; rungs];
    let pairs = rungs.saturating_sub(1);
    let mut diag = SwapDiagnostics { attempts: vec![0; pairs], accepts: vec![0; pairs] };

    for t in 0..config.n_exchanges {
        for r in 0..rungs {
            for _ in 0..config.sweeps_per_exchange {
                kernel.sweep(&mut states[r], &tables[r], &mut rngs[r]);
            }
            energies[r] = model.energy_unchecked(&states[r]);
        }
        let mut a = t % 2;
        while a + 1 < rungs {
            let b = a + 1;
            diag.attempts[a] += 1;
            let p = swap_acceptance(config.ladder[a], energies[a], config.ladder[b], energies[b]);
            if p >= 1.0 || swap_rng.gen::<f64>() < p {
                diag.accepts[a] += 1;
                states.swap(a, b);
                energies.swap(a, b);
            }
            a += 2;
        }
        each(t, &states, &energies);
    }
    Ok(diag)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::{build_chimera, gen_ran1, ChimeraSpec};

    #[test]
    fn equal_energies_always_swap() {
        assert_eq!(swap_acceptance(0.5, -3.0, 2.0, -3.0), 1.0);
        assert_eq!(swap_acceptance(0.5, -1.0, 2.0, -3.0), (-3.0f64).exp());
        // colder replica holding the higher energy always hands it up
        assert_eq!(swap_acceptance(0.5, -3.0, 2.0, -1.0), 1.0);
    }

    #[test]
    fn ladder_construction() {
        let l = geometric_ladder(0.1, 3.54, 16).unwrap();
        assert_eq!(l.len(), 16);
        assert!((l[0] - 0.1).abs() < 1e-15);
        assert_eq!(l[15], 3.54);
        let r: Vec<f64> = l.windows(2).map(|w| w[1] / w[0]).collect();
        for q in &r {
            assert!((q - r[0]).abs() < 1e-12);
        }
        assert_eq!(geometric_ladder(0.1, 2.0, 1).unwrap(), vec![2.0]);
        assert!(geometric_ladder(2.0, 1.0, 4).is_err());
        assert!(check_ladder(&[0.0, 1.0, 1.0]).is_err());
        assert!(check_ladder(&[]).is_err());
    }

    #[test]
    fn single_rung_is_a_plain_gibbs_chain() {
        let g = build_chimera(&ChimeraSpec::square(1)).unwrap();
        let m = gen_ran1(&g, 2);
        let cfg = TemperingConfig { ladder: vec![1.5], sweeps_per_exchange: 1, n_exchanges: 30, burn_in: 0 };
        let run = run_parallel_tempering(&m, &g.coloring(), &cfg, 11).unwrap();
        assert!(run.swaps.attempts.is_empty());
        assert_eq!(run.samples[0].len(), 30);
        // the final recorded state equals a 30-sweep chain on the same stream
        let mut state = vec![0i8; m.n_spins()];
        let mut rng = tagged(11, tag::TEMPERING_REPLICAS, 0);
        randomize(&mut state, &mut rng);
        let kernel = GibbsKernel::new(&m, &g.coloring()).unwrap();
        for _ in 0..30 {
            kernel.sweep_at(&mut state, 1.5, &mut rng);
        }
        assert_eq!(run.samples[0].state(29), &state[..]);
    }

    #[test]
    fn budget_and_determinism() {
        let g = build_chimera(&ChimeraSpec::square(1)).unwrap();
        let m = gen_ran1(&g, 2);
        let mut cfg = TemperingConfig {
            ladder: geometric_ladder(0.1, 2.0, 4).unwrap(),
            sweeps_per_exchange: 1,
            n_exchanges: 200,
            burn_in: 50,
        };
        let a = run_parallel_tempering(&m, &g.coloring(), &cfg, 1).unwrap();
        let b = run_parallel_tempering(&m, &g.coloring(), &cfg, 1).unwrap();
        assert_eq!(a.samples, b.samples);
        assert_eq!(a.samples[3].len(), 150);
        assert_eq!(a.energy_trace[0].len(), 200);
        assert_eq!(a.swaps.attempts.iter().sum::<u64>(), 300);
        for rate in a.swaps.acceptance_rates() {
            assert!(rate > 0.0 && rate <= 1.0);
        }
        cfg.burn_in = 200;
        assert!(matches!(run_parallel_tempering(&m, &g.coloring(), &cfg, 1), Err(Error::BudgetTooSmall(_))));
    }
}
