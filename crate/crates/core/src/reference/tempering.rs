use rand::Rng;

use super::{check_grid, ReferenceMethod, ReferenceStatistics, StandardErrors};
use crate::error::{Error, Result};
use crate::model::IsingModel;
use crate::rng::{tag, tagged};
use crate::sampling::{run_parallel_tempering_with, TemperingConfig};
use crate::topology::Coloring;

/// Work and error-analysis settings for [`pt_stats`].
#[derive(Debug, Clone, PartialEq)]
pub struct PtBudget {
    pub n_exchanges: usize,
    pub sweeps_per_exchange: usize,
    /// Exchanges discarded up front; a quarter of the budget when unset.
    pub burn_in: Option<usize>,
    pub blocks: usize,
    pub bootstrap_resamples: usize,
    pub thermodynamic_integration: bool,
}

impl Default for PtBudget {
    fn default() -> Self {
        PtBudget {
            n_exchanges: 20_000,
            sweeps_per_exchange: 1,
            burn_in: None,
            blocks: 50,
            bootstrap_resamples: 200,
            thermodynamic_integration: false,
        }
    }
}

impl PtBudget {
    pub fn burn_in(&self) -> usize {
        self.burn_in.unwrap_or(self.n_exchanges / 4)
    }
}

/// Running sums for one ladder rung within one block.
#[derive(Debug, Clone)]
struct BlockSums {
    count: f64,
    energy: f64,
    energy_sq: f64,
    corr: Vec<f64>,
    mag: Vec<f64>,
}

/// Parallel-tempering estimates on a ladder equal to `beta_grid`.
///
/// Standard errors come from a bootstrap over contiguous blocks of exchanges.
/// With thermodynamic integration a `beta = 0` rung is added if missing and
/// `log Z(beta) = N log 2 - int_0^beta <H> db` is accumulated by trapezoids.
pub fn pt_stats(
    model: &IsingModel,
    coloring: &Coloring,
    beta_grid: &[f64],
    budget: &PtBudget,
    seed: u64,
) -> Result<ReferenceStatistics> {
    check_grid(beta_grid)?;
    let offset = usize::from(budget.thermodynamic_integration && beta_grid[0] > 0.0);
    let ladder: Vec<f64> = std::iter::repeat_n(0.0, offset).chain(beta_grid.iter().copied()).collect();
    let burn_in = budget.burn_in();
    let recorded = budget.n_exchanges.saturating_sub(burn_in);
    if budget.blocks == 0 || recorded < budget.blocks {
        return Err(Error::BudgetTooSmall(format!(
            "{recorded} recorded exchanges after burn-in cannot fill {} blocks",
            budget.blocks
        )));
    }
    let config = TemperingConfig {
        ladder: ladder.clone(),
        sweeps_per_exchange: budget.sweeps_per_exchange,
        n_exchanges: budget.n_exchanges,
        burn_in,
    };
    let (n, m) = (model.n_spins(), model.n_couplings());
    let empty = BlockSums { count: 0.0, energy: 0.0, energy_sq: 0.0, corr: vec![0.0; m], mag: vec![0.0; n] };
    let mut sums = vec![vec![empty; budget.blocks]; ladder.len()];
    let edges = model.edges();
    let swaps = run_parallel_tempering_with(model, coloring, &config, seed, |t, states, energies| {
        let block = (t - burn_in) * budget.blocks / recorded;
        for ((rung, state), &e) in sums.iter_mut().zip(states).zip(energies) {
            let b = &mut rung[block];
            b.count += 1.0;
            b.energy += e;
            b.energy_sq += e * e;
            for (c, edge) in b.corr.iter_mut().zip(edges) {
                *c += f64::from(state[edge.i] * state[edge.j]);
            }
            for (c, &x) in b.mag.iter_mut().zip(state) {
                *c += f64::from(x);
            }
        }
    })?;

    let mean = |rung: &[BlockSums], pick: &[usize], f: &dyn Fn(&BlockSums) -> f64| {
        let (num, den) = pick.iter().fold((0.0, 0.0), |(a, c), &k| (a + f(&rung[k]), c + rung[k].count));
        num / den
    };
    let all: Vec<usize> = (0..budget.blocks).collect();
    let energy: Vec<f64> = sums.iter().map(|r| mean(r, &all, &|b| b.energy)).collect();
    let energy_sq: Vec<f64> = sums.iter().map(|r| mean(r, &all, &|b| b.energy_sq)).collect();
    let corr: Vec<Vec<f64>> = sums
        .iter()
        .map(|r| (0..m).map(|e| mean(r, &all, &|b| b.corr[e])).collect())
        .collect();
    let mag: Vec<Vec<f64>> = sums
        .iter()
        .map(|r| (0..n).map(|i| mean(r, &all, &|b| b.mag[i])).collect())
        .collect();
    let integrate = |e: &[f64]| -> Vec<f64> {
        let mut z = vec![n as f64 * std::f64::consts::LN_2];
        for k in 1..ladder.len() {
            let prev = z[k - 1];
            z.push(prev - (ladder[k] - ladder[k - 1]) * (e[k] + e[k - 1]) / 2.0);
        }
        z
    };
    let log_z = budget.thermodynamic_integration.then(|| integrate(&energy));

    // Bootstrap over blocks, drawing the same blocks for every rung.
    let mut rng = tagged(seed, tag::BOOTSTRAP, 0);
    let reps = budget.bootstrap_resamples.max(2);
    let rungs = ladder.len();
    let mut e_acc = vec![Moments::default(); rungs];
    let mut c_acc = vec![vec![Moments::default(); m]; rungs];
    let mut z_acc = vec![Moments::default(); rungs];
    let mut pick = vec![0usize; budget.blocks];
    for _ in 0..reps {
        pick.iter_mut().for_each(|k| *k = rng.gen_range(0..budget.blocks));
        let e: Vec<f64> = sums.iter().map(|r| mean(r, &pick, &|b| b.energy)).collect();
        for (r, rung) in sums.iter().enumerate() {
            e_acc[r].push(e[r]);
            for (k, acc) in c_acc[r].iter_mut().enumerate() {
                acc.push(mean(rung, &pick, &|b| b.corr[k]));
            }
        }
        if budget.thermodynamic_integration {
            for (acc, z) in z_acc.iter_mut().zip(integrate(&e)) {
                acc.push(z);
            }
        }
    }

    let keep = offset..ladder.len();
    let min_rate = swaps.acceptance_rates().into_iter().fold(f64::NAN, f64::min);
    Ok(ReferenceStatistics {
        method: ReferenceMethod::Pt,
        instance_hash: model.content_hash(),
        n_spins: n,
        edges: edges.iter().map(|e| (e.i, e.j)).collect(),
        beta_grid: beta_grid.to_vec(),
        mean_energy: energy[keep.clone()].to_vec(),
        energy_variance: Some(keep.clone().map(|k| (energy_sq[k] - energy[k] * energy[k]).max(0.0)).collect()),
        edge_correlations: corr[keep.clone()].to_vec(),
        magnetizations: mag[keep.clone()].to_vec(),
        log_z: log_z.map(|z| z[keep.clone()].to_vec()),
        standard_errors: Some(StandardErrors {
            mean_energy: e_acc[keep.clone()].iter().map(Moments::sd).collect(),
            edge_correlations: c_acc[keep.clone()].iter().map(|r| r.iter().map(Moments::sd).collect()).collect(),
            log_z: budget
                .thermodynamic_integration
                .then(|| z_acc[keep.clone()].iter().map(Moments::sd).collect()),
        }),
        notes: format!(
            "parallel tempering: {} rungs, {} exchanges x {} sweeps, burn-in {}, {} blocks, min swap acceptance {:.3}{}",
            rungs,
            budget.n_exchanges,
            budget.sweeps_per_exchange,
            burn_in,
            budget.blocks,
            min_rate,
            if budget.thermodynamic_integration { ", log Z by thermodynamic integration" } else { "" }
        ),
    })
}

/// Welford accumulator.
#[derive(Debug, Clone, Copy, Default)]
struct Moments {
    n: f64,
    mean: f64,
    m2: f64,
}

impl Moments {
    fn push(&mut self, x: f64) {
        self.n += 1.0;
        let d = x - self.mean;
        self.mean += d / self.n;
        self.m2 += d * (x - self.mean);
    }

    fn sd(&self) -> f64 {
        if self.n < 2.0 {
            return f64::NAN;
        }
        (self.m2 / (self.n - 1.0)).sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reference::Enumerator;
    use crate::topology::{build_chimera, gen_ran1, ChimeraSpec};

    #[test]
    fn agrees_with_enumeration_on_one_cell() {
        let g = build_chimera(&ChimeraSpec::square(1)).unwrap();
        let m = gen_ran1(&g, 6);
        let grid = [0.0, 0.25, 0.5, 0.75, 1.0];
        let budget = PtBudget { n_exchanges: 8000, thermodynamic_integration: true, ..PtBudget::default() };
        let r = pt_stats(&m, &g.coloring(), &grid, &budget, 2).unwrap();
        let e = Enumerator::new(&m, 28).unwrap();
        let se = r.standard_errors.as_ref().unwrap();
        for (k, &b) in grid.iter().enumerate() {
            let exact = e.stats_at(b).unwrap();
            assert!((r.mean_energy[k] - exact.mean_energy).abs() < 4.0 * se.mean_energy[k] + 1e-12);
            let z = r.log_z.as_ref().unwrap()[k];
            assert!((z - exact.log_z).abs() / exact.log_z < 0.01);
        }
        assert!((r.log_z.as_ref().unwrap()[0] - 8.0 * std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn integration_adds_a_zero_rung_and_hides_it() {
        let g = build_chimera(&ChimeraSpec::square(1)).unwrap();
        let m = gen_ran1(&g, 6);
        let budget = PtBudget { n_exchanges: 400, blocks: 10, thermodynamic_integration: true, ..PtBudget::default() };
        let r = pt_stats(&m, &g.coloring(), &[0.5, 1.0], &budget, 2).unwrap();
        assert_eq!(r.beta_grid, vec![0.5, 1.0]);
        assert_eq!(r.mean_energy.len(), 2);
        assert_eq!(r.log_z.as_ref().unwrap().len(), 2);
        r.validate().unwrap();
        let without = PtBudget { thermodynamic_integration: false, ..budget.clone() };
        assert!(pt_stats(&m, &g.coloring(), &[0.5, 1.0], &without, 2).unwrap().log_z.is_none());
        let tiny = PtBudget { n_exchanges: 20, blocks: 50, ..budget };
        assert!(matches!(pt_stats(&m, &g.coloring(), &[1.0], &tiny, 2), Err(Error::BudgetTooSmall(_))));
    }
}
