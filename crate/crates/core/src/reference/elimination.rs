//! Exact inference by bucket elimination over a fixed variable order.
//!
//! Eliminating `v` leaves a message over its separator `S_v`, the neighbors
//! of `v` (fill-in included) that are still present. The bucket of `v` is a
//! table over the clique `C_v = {v} ∪ S_v`; bit 0 of a clique index is `x_v`
//! and bit `t + 1` is the `t`-th separator variable. The parent of `v` is the
//! first-eliminated member of `S_v`, which turns the buckets into a junction
//! tree: every separator lies inside its parent's clique.
//!
//! The forward pass adds messages to each bucket table in log space,
//! exponentiates once against the table maximum, and keeps the bucket's
//! conditional `P(x_v | S_v)`. The backward pass turns those into clique
//! marginals, from which correlations, magnetizations and the mean energy
//! follow. The same conditionals drive an exact sampler.

use std::collections::BTreeSet;

use rand::Rng;
use rayon::prelude::*;

use super::enumerate::PointStats;
use super::{check_grid, MeanEnergySource, ReferenceMethod, ReferenceStatistics, EXACT_BETA_MAX};
use crate::error::{Error, Result};
use crate::model::{IsingModel, SampleMeta, SampleSet};
use crate::rng::{tag, tagged};
use crate::topology::TopologyGraph;

pub const DEFAULT_WIDTH_CAP: usize = 20;

/// Greedy order eliminating the variable that adds the fewest fill edges,
/// breaking ties by current degree and then index.
pub fn min_fill_order(model: &IsingModel) -> Vec<usize> {
    let n = model.n_spins();
    let mut adj = adjacency_sets(model);
    let mut alive = vec![true; n];
    let mut order = Vec::with_capacity(n);
    for _ in 0..n {
        let best = (0..n)
            .filter(|&v| alive[v])
            .min_by_key(|&v| (fill_in(&adj, v), adj[v].len(), v))
            .expect("a live variable remains");
        eliminate(&mut adj, best);
        alive[best] = false;
        order.push(best);
    }
    order
}

/// Column-by-column order from the chimera coordinates of `graph`.
pub fn column_sweep_order(graph: &TopologyGraph) -> Vec<usize> {
    graph.column_sweep_order()
}

fn adjacency_sets(model: &IsingModel) -> Vec<BTreeSet<usize>> {
    let mut adj = vec![BTreeSet::new(); model.n_spins()];
    for e in model.edges() {
        adj[e.i].insert(e.j);
        adj[e.j].insert(e.i);
    }
    adj
}

fn fill_in(adj: &[BTreeSet<usize>], v: usize) -> usize {
    let nb: Vec<usize> = adj[v].iter().copied().collect();
    let mut fill = 0;
    for (k, &a) in nb.iter().enumerate() {
        for &b in &nb[k + 1..] {
            if !adj[a].contains(&b) {
                fill += 1;
            }
        }
    }
    fill
}

/// Removes `v`, joining its neighbors into a clique; returns the neighbors.
fn eliminate(adj: &mut [BTreeSet<usize>], v: usize) -> Vec<usize> {
    let nb: Vec<usize> = std::mem::take(&mut adj[v]).into_iter().collect();
    for &a in &nb {
        adj[a].remove(&v);
        for &b in &nb {
            if a != b {
                adj[a].insert(b);
            }
        }
    }
    nb
}

#[derive(Debug, Clone)]
struct Bucket {
    var: usize,
    /// Separator variables in elimination order.
    sep: Vec<usize>,
    field: f64,
    /// `(separator position, weight)` of edges owned by this bucket.
    couplings: Vec<(usize, f64)>,
    /// Model edge indices, aligned with `couplings`.
    edge_ids: Vec<usize>,
    children: Vec<ChildLink>,
}

/// Maps clique indices of a parent onto separator indices of a child.
///
/// Stepping the clique index from `a` to `a + 1` clears the trailing ones of
/// `a` and sets the next bit, so the separator index moves by
/// `deltas[a.trailing_ones()]`.
#[derive(Debug, Clone)]
struct ChildLink {
    child: usize,
    deltas: Vec<i64>,
}

impl ChildLink {
    fn new(child: usize, child_sep: &[usize], clique: &[usize]) -> Self {
        let stride: Vec<i64> = clique
            .iter()
            .map(|u| child_sep.iter().position(|s| s == u).map_or(0, |t| 1i64 << t))
            .collect();
        let deltas = (0..stride.len())
            .map(|k| stride[k] - stride[..k].iter().sum::<i64>())
            .collect();
        ChildLink { child, deltas }
    }

    #[inline]
    fn for_each(&self, size: usize, mut f: impl FnMut(usize, usize)) {
        let mut sub: i64 = 0;
        for a in 0..size {
            f(a, sub as usize);
            if a + 1 < size {
                sub += self.deltas[a.trailing_ones() as usize];
            }
        }
    }
}

/// Symbolic elimination of a model along a fixed order.
#[derive(Debug, Clone)]
pub struct EliminationPlan {
    n: usize,
    order: Vec<usize>,
    buckets: Vec<Bucket>,
    width: usize,
    edges: Vec<(usize, usize, f64)>,
    fields: Vec<f64>,
    label: String,
}

/// Forward-pass output at one beta.
struct Forward {
    log_z: f64,
    cond: Vec<Vec<f64>>,
}

impl EliminationPlan {
    /// Builds the junction tree for `order`, failing if a separator exceeds `cap`.
    pub fn new(model: &IsingModel, order: &[usize], cap: usize) -> Result<Self> {
        let n = model.n_spins();
        let mut pos = vec![usize::MAX; n];
        for (k, &v) in order.iter().enumerate() {
            if v >= n || pos[v] != usize::MAX {
                return Err(Error::InvalidArgument("elimination order is not a permutation of the spins".into()));
            }
            pos[v] = k;
        }
        if order.len() != n {
            return Err(Error::InvalidArgument("elimination order is not a permutation of the spins".into()));
        }
        let mut adj = adjacency_sets(model);
        let mut seps = Vec::with_capacity(n);
        let mut width = 0;
        for &v in order {
            let mut sep = eliminate(&mut adj, v);
            sep.sort_by_key(|&u| pos[u]);
            width = width.max(sep.len());
            if width > cap {
                return Err(Error::WidthExceeded { width, cap });
            }
            seps.push(sep);
        }
        let mut buckets: Vec<Bucket> = order
            .iter()
            .zip(seps)
            .map(|(&v, sep)| Bucket {
                var: v,
                sep,
                field: model.fields()[v],
                couplings: Vec::new(),
                edge_ids: Vec::new(),
                children: Vec::new(),
            })
            .collect();
        for (k, e) in model.edges().iter().enumerate() {
            let (first, other) = if pos[e.i] < pos[e.j] { (e.i, e.j) } else { (e.j, e.i) };
            let b = &mut buckets[pos[first]];
            let t = b.sep.iter().position(|&u| u == other).expect("neighbors appear in the separator");
            b.couplings.push((t, e.weight));
            b.edge_ids.push(k);
        }
        for c in 0..n {
            if let Some(&p) = buckets[c].sep.first() {
                let p = pos[p];
                let clique: Vec<usize> = std::iter::once(buckets[p].var).chain(buckets[p].sep.iter().copied()).collect();
                debug_assert!(buckets[c].sep.iter().all(|u| clique.contains(u)));
                let link = ChildLink::new(c, &buckets[c].sep, &clique);
                buckets[p].children.push(link);
            }
        }
        Ok(EliminationPlan {
            n,
            order: order.to_vec(),
            buckets,
            width,
            edges: model.edges().iter().map(|e| (e.i, e.j, e.weight)).collect(),
            fields: model.fields().to_vec(),
            label: model.label().to_string(),
        })
    }

    /// The narrower of min-fill and, when a chimera layout is known, the column sweep.
    pub fn auto(model: &IsingModel, graph: Option<&TopologyGraph>, cap: usize) -> Result<Self> {
        let mut best: Option<EliminationPlan> = None;
        let mut last_err = None;
        let mut candidates = Vec::new();
        if let Some(g) = graph.filter(|g| g.n_nodes == model.n_spins()) {
            candidates.push(g.column_sweep_order());
        }
        if model.n_spins() <= 512 || candidates.is_empty() {
            candidates.push(min_fill_order(model));
        }
        for order in candidates {
            match EliminationPlan::new(model, &order, cap) {
                Ok(p) if best.as_ref().is_none_or(|b| p.width < b.width) => best = Some(p),
                Ok(_) => {}
                Err(e) => last_err = Some(e),
            }
        }
        best.ok_or_else(|| last_err.expect("at least one candidate order"))
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn order(&self) -> &[usize] {
        &self.order
    }

    fn forward(&self, beta: f64) -> Result<Forward> {
        if !beta.is_finite() {
            return Err(Error::NonFinite(format!("beta = {beta}")));
        }
        let mut messages: Vec<Option<Vec<f64>>> = vec![None; self.n];
        let mut cond = Vec::with_capacity(self.n);
        let mut log_z = 0.0;
        for (k, b) in self.buckets.iter().enumerate() {
            let ns = 1usize << b.sep.len();
            let mut field = vec![0.0; ns];
            field[0] = b.field - b.couplings.iter().map(|&(_, w)| w).sum::<f64>();
            let mut wt = vec![0.0; b.sep.len()];
            for &(t, w) in &b.couplings {
                wt[t] += w;
            }
            for s in 1..ns {
                field[s] = field[s & (s - 1)] + 2.0 * wt[s.trailing_zeros() as usize];
            }
            let mut table = vec![0.0; 2 * ns];
            for s in 0..ns {
                let e = beta * field[s];
                table[2 * s] = e;
                table[2 * s + 1] = -e;
            }
            for link in &b.children {
                let msg = messages[link.child].take().expect("children are eliminated first");
                link.for_each(table.len(), |a, sub| table[a] += msg[sub]);
            }
            let shift = table.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if !shift.is_finite() {
                return Err(Error::NonFinite(format!("elimination message at beta {beta}")));
            }
            table.iter_mut().for_each(|t| *t = (*t - shift).exp());
            let mut msg = vec![0.0; ns];
            let mut top = 0.0f64;
            for s in 0..ns {
                let m = table[2 * s] + table[2 * s + 1];
                if m > 0.0 {
                    let r = 1.0 / m;
                    table[2 * s] *= r;
                    table[2 * s + 1] *= r;
                } else {
                    table[2 * s] = 0.5;
                    table[2 * s + 1] = 0.5;
                }
                msg[s] = m;
                top = top.max(m);
            }
            if !(top > 0.0 && top.is_finite()) {
                return Err(Error::NonFinite(format!("elimination message at beta {beta}")));
            }
            let log_top = top.ln();
            msg.iter_mut().for_each(|m| *m = m.ln() - log_top);
            log_z += shift + log_top;
            if !b.sep.is_empty() {
                messages[k] = Some(msg);
            }
            cond.push(table);
        }
        Ok(Forward { log_z, cond })
    }

    /// Exact log Z, mean energy, correlations and magnetizations at `beta`.
    pub fn stats_at(&self, beta: f64) -> Result<PointStats> {
        let fwd = self.forward(beta)?;
        let mut corr = vec![0.0; self.edges.len()];
        let mut mag = vec![0.0; self.n];
        let mut sep_marginal: Vec<Option<Vec<f64>>> = vec![None; self.n];
        for k in (0..self.n).rev() {
            let b = &self.buckets[k];
            let ps = sep_marginal[k].take().unwrap_or_else(|| vec![1.0]);
            let clique: Vec<f64> = fwd.cond[k].iter().enumerate().map(|(a, &c)| ps[a >> 1] * c).collect();
            // P(x_v = +1, s) - P(x_v = -1, s)
            let diff: Vec<f64> = clique.chunks_exact(2).map(|p| p[1] - p[0]).collect();
            let m: f64 = diff.iter().sum();
            mag[b.var] = m;
            for (&(t, _), &e) in b.couplings.iter().zip(&b.edge_ids) {
                let up: f64 = diff.chunks_exact(2 << t).map(|c| c[1 << t..].iter().sum::<f64>()).sum();
                corr[e] = 2.0 * up - m;
            }
            for link in &b.children {
                let mut out = vec![0.0; 1 << self.buckets[link.child].sep.len()];
                link.for_each(clique.len(), |a, sub| out[sub] += clique[a]);
                sep_marginal[link.child] = Some(out);
            }
        }
        let mean_energy = self.edges.iter().zip(&corr).map(|(&(_, _, w), c)| w * c).sum::<f64>()
            + self.fields.iter().zip(&mag).map(|(h, m)| h * m).sum::<f64>();
        Ok(PointStats {
            beta,
            log_z: fwd.log_z,
            mean_energy,
            energy_variance: None,
            edge_correlations: corr,
            magnetizations: mag,
        })
    }

    pub fn log_z(&self, beta: f64) -> Result<f64> {
        Ok(self.forward(beta)?.log_z)
    }

    pub fn statistics(&self, grid: &[f64], instance_hash: String) -> Result<ReferenceStatistics> {
        check_grid(grid)?;
        let points = grid.par_iter().map(|&b| self.stats_at(b)).collect::<Result<Vec<_>>>()?;
        Ok(ReferenceStatistics {
            method: ReferenceMethod::ExactDp,
            instance_hash,
            n_spins: self.n,
            edges: self.edges.iter().map(|&(i, j, _)| (i, j)).collect(),
            beta_grid: grid.to_vec(),
            mean_energy: points.iter().map(|p| p.mean_energy).collect(),
            log_z: Some(points.iter().map(|p| p.log_z).collect()),
            energy_variance: None,
            edge_correlations: points.iter().map(|p| p.edge_correlations.clone()).collect(),
            magnetizations: points.into_iter().map(|p| p.magnetizations).collect(),
            standard_errors: None,
            notes: format!("bucket elimination, width {}; mean energy from clique marginals", self.width),
        })
    }

    /// Independent exact Boltzmann samples by ancestral sampling of the
    /// conditionals, last-eliminated variable first.
    pub fn sample(&self, beta: f64, n_samples: usize, seed: u64) -> Result<SampleSet> {
        let fwd = self.forward(beta)?;
        let n = self.n;
        let mut spins = vec![0i8; n * n_samples];
        spins.par_chunks_mut(n).enumerate().for_each(|(k, x)| {
            let mut rng = tagged(seed, tag::EXACT_SAMPLER, k as u64);
            for (b, cond) in self.buckets.iter().zip(&fwd.cond).rev() {
                let s = b
                    .sep
                    .iter()
                    .enumerate()
                    .fold(0usize, |s, (t, &u)| s | usize::from(x[u] == 1) << t);
                let p_up = cond[2 * s + 1];
                x[b.var] = if rng.gen::<f64>() < p_up { 1 } else { -1 };
            }
        });
        let meta = SampleMeta {
            sampler: "exact-dp".into(),
            schedule: format!("boltzmann(beta={beta})"),
            seed: Some(seed),
            postprocess: None,
        };
        SampleSet::from_flat(self.label.clone(), n, spins, meta)
    }
}

impl MeanEnergySource for EliminationPlan {
    fn beta_range(&self) -> (f64, f64) {
        (-EXACT_BETA_MAX, EXACT_BETA_MAX)
    }

    fn mean_energy_at(&self, beta: f64) -> Result<f64> {
        Ok(self.stats_at(beta)?.mean_energy)
    }
}

/// Exact statistics by bucket elimination along `elimination_order`.
pub fn exact_stats_dp(
    model: &IsingModel,
    elimination_order: &[usize],
    beta_grid: &[f64],
    cap: usize,
) -> Result<ReferenceStatistics> {
    EliminationPlan::new(model, elimination_order, cap)?.statistics(beta_grid, model.content_hash())
}
