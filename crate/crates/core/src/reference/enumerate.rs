use std::collections::HashMap;

use rayon::prelude::*;

use super::{check_grid, MeanEnergySource, ReferenceMethod, ReferenceStatistics, EXACT_BETA_MAX};
use crate::error::{Error, Result};
use crate::model::{IsingModel, Quantized};

pub const DEFAULT_ENUMERATION_CAP: usize = 28;

/// Exact Boltzmann statistics at a single beta.
#[derive(Debug, Clone, PartialEq)]
pub struct PointStats {
    pub beta: f64,
    pub log_z: f64,
    pub mean_energy: f64,
    /// `Var(H)`, when the engine provides it.
    pub energy_variance: Option<f64>,
    pub edge_correlations: Vec<f64>,
    pub magnetizations: Vec<f64>,
}

/// Exhaustive summation over all `2^N` states.
///
/// Models whose parameters share a common quantum are reduced once to a
/// table of integer energy levels, each with its state count and summed
/// pair and spin products. Every beta then costs a pass over the levels.
/// Other models keep one energy per state.
#[derive(Debug, Clone)]
pub struct Enumerator {
    n: usize,
    edges: Vec<(usize, usize)>,
    repr: Repr,
}

#[derive(Debug, Clone)]
enum Repr {
    Levels {
        energies: Vec<f64>,
        counts: Vec<f64>,
        pair_sums: Vec<i64>,
        spin_sums: Vec<i64>,
    },
    States {
        energies: Vec<f64>,
    },
}

impl Enumerator {
    pub fn new(model: &IsingModel, cap: usize) -> Result<Self> {
        let n = model.n_spins();
        if n > cap || n >= 63 {
            return Err(Error::EnumerationCap { n, cap });
        }
        let edges: Vec<(usize, usize)> = model.edges().iter().map(|e| (e.i, e.j)).collect();
        let repr = match model.quantized() {
            Some(q) => level_table(model, &edges, &q),
            None => Repr::States {
                energies: (0..1u64 << n).into_par_iter().map(|s| model.energy_unchecked(&decode(s, n))).collect(),
            },
        };
        Ok(Enumerator { n, edges, repr })
    }

    pub fn n_spins(&self) -> usize {
        self.n
    }

    /// Number of distinct energies tracked, or `2^N` for float models.
    pub fn n_levels(&self) -> usize {
        match &self.repr {
            Repr::Levels { energies, .. } | Repr::States { energies } => energies.len(),
        }
    }

    pub fn stats_at(&self, beta: f64) -> Result<PointStats> {
        if !beta.is_finite() {
            return Err(Error::NonFinite(format!("beta = {beta}")));
        }
        let (n, m) = (self.n, self.edges.len());
        let (energies, counts): (&[f64], Option<&[f64]>) = match &self.repr {
            Repr::Levels { energies, counts, .. } => (energies, Some(counts)),
            Repr::States { energies } => (energies, None),
        };
        let shift = energies.iter().map(|&e| -beta * e).fold(f64::NEG_INFINITY, f64::max);
        // Boltzmann factor of one state at each level; the sums below already add up states.
        let factor: Vec<f64> = energies.iter().map(|&e| (-beta * e - shift).exp()).collect();
        let weights: Vec<f64> = match counts {
            Some(c) => factor.iter().zip(c).map(|(f, c)| f * c).collect(),
            None => factor.clone(),
        };
        let z: f64 = weights.iter().sum();
        let mean_energy = weights.iter().zip(energies).map(|(w, e)| w * e).sum::<f64>() / z;
        let energy_variance =
            weights.iter().zip(energies).map(|(w, e)| w * (e - mean_energy).powi(2)).sum::<f64>() / z;
        let mut corr = vec![0.0; m];
        let mut mag = vec![0.0; n];
        match &self.repr {
            Repr::Levels { pair_sums, spin_sums, .. } => {
                for (l, &w) in factor.iter().enumerate() {
                    for (c, &s) in corr.iter_mut().zip(&pair_sums[l * m..(l + 1) * m]) {
                        *c += w * s as f64;
                    }
                    for (c, &s) in mag.iter_mut().zip(&spin_sums[l * n..(l + 1) * n]) {
                        *c += w * s as f64;
                    }
                }
            }
            Repr::States { .. } => {
                for (s, &w) in factor.iter().enumerate() {
                    let s = s as u64;
                    for (c, &(i, j)) in corr.iter_mut().zip(&self.edges) {
                        *c += if (s >> i ^ s >> j) & 1 == 0 { w } else { -w };
                    }
                    for (k, c) in mag.iter_mut().enumerate() {
                        *c += if s >> k & 1 == 1 { w } else { -w };
                    }
                }
            }
        }
        corr.iter_mut().chain(mag.iter_mut()).for_each(|c| *c /= z);
        Ok(PointStats {
            beta,
            log_z: shift + z.ln(),
            mean_energy,
            energy_variance: Some(energy_variance),
            edge_correlations: corr,
            magnetizations: mag,
        })
    }

    pub fn statistics(&self, grid: &[f64], instance_hash: String) -> Result<ReferenceStatistics> {
        check_grid(grid)?;
        let points = grid.par_iter().map(|&b| self.stats_at(b)).collect::<Result<Vec<_>>>()?;
        Ok(ReferenceStatistics {
            method: ReferenceMethod::ExactEnum,
            instance_hash,
            n_spins: self.n,
            edges: self.edges.clone(),
            beta_grid: grid.to_vec(),
            mean_energy: points.iter().map(|p| p.mean_energy).collect(),
            log_z: Some(points.iter().map(|p| p.log_z).collect()),
            energy_variance: points.iter().map(|p| p.energy_variance).collect(),
            edge_correlations: points.iter().map(|p| p.edge_correlations.clone()).collect(),
            magnetizations: points.into_iter().map(|p| p.magnetizations).collect(),
            standard_errors: None,
            notes: format!("exhaustive sum over 2^{} states", self.n),
        })
    }
}

impl MeanEnergySource for Enumerator {
    fn beta_range(&self) -> (f64, f64) {
        (-EXACT_BETA_MAX, EXACT_BETA_MAX)
    }

    fn mean_energy_at(&self, beta: f64) -> Result<f64> {
        Ok(self.stats_at(beta)?.mean_energy)
    }
}

/// State with bit `k` of `s` set meaning spin `k` is `+1`.
pub(crate) fn decode(s: u64, n: usize) -> Vec<i8> {
    (0..n).map(|k| if s >> k & 1 == 1 { 1 } else { -1 }).collect()
}

fn level_table(model: &IsingModel, edges: &[(usize, usize)], q: &Quantized) -> Repr {
    let n = model.n_spins();
    let m = edges.len();
    let (adj_start, adj_spin, _) = model.adjacency();
    let (w, h, adj_w) = (&q.edge_weights, &q.fields, &q.adj_weights);

    // Gray-code walk from the all-down state, tracking the integer energy.
    let mut x = vec![-1i64; n];
    let mut energy: i64 = w.iter().sum::<i64>() - h.iter().sum::<i64>();
    let mut prod: Vec<i64> = vec![1; m];
    let mut level_of: HashMap<i64, usize> = HashMap::new();
    let mut energies = Vec::new();
    let mut counts: Vec<f64> = Vec::new();
    let mut pair_sums: Vec<i64> = Vec::new();
    let mut spin_sums: Vec<i64> = Vec::new();
    let mut incident: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (k, &(i, j)) in edges.iter().enumerate() {
        incident[i].push(k);
        incident[j].push(k);
    }
    for t in 0..1u64 << n {
        if t > 0 {
            let v = t.trailing_zeros() as usize;
            let mut zeta = h[v];
            for p in adj_start[v]..adj_start[v + 1] {
                zeta += adj_w[p] * x[adj_spin[p]];
            }
            energy -= 2 * x[v] * zeta;
            x[v] = -x[v];
            for &k in &incident[v] {
                prod[k] = -prod[k];
            }
        }
        let l = *level_of.entry(energy).or_insert_with(|| {
            energies.push(energy as f64 * q.quantum);
            counts.push(0.0);
            pair_sums.extend(std::iter::repeat_n(0, m));
            spin_sums.extend(std::iter::repeat_n(0, n));
            energies.len() - 1
        });
        counts[l] += 1.0;
        for (a, &p) in pair_sums[l * m..(l + 1) * m].iter_mut().zip(&prod) {
            *a += p;
        }
        for (a, &s) in spin_sums[l * n..(l + 1) * n].iter_mut().zip(&x) {
            *a += s;
        }
    }
    Repr::Levels { energies, counts, pair_sums, spin_sums }
}

/// Exact statistics by summing over every state.
pub fn exact_stats_enumeration(model: &IsingModel, beta_grid: &[f64], cap: usize) -> Result<ReferenceStatistics> {
    Enumerator::new(model, cap)?.statistics(beta_grid, model.content_hash())
}
