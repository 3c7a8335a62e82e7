//! Ising models, spin states and sample sets.
//!
//! The Hamiltonian is `H(x) = sum_edges w_ij x_i x_j + sum_i h_i x_i` over
//! `x in {-1,+1}^N`. Each undirected edge is stored once and its weight is the
//! *total* coefficient of `x_i x_j`, so an asymmetric coupling matrix `J`
//! collapses to `w_ij = J_ij + J_ji`.

pub mod io;
mod samples;

use std::collections::HashSet;
use std::ops::Deref;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub use samples::{EmpiricalDistribution, PostProcessRecord, SampleMeta, SampleSet};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub i: usize,
    pub j: usize,
    pub weight: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub label: String,
    pub generator: String,
    pub seed: Option<u64>,
}

/// Pairwise Ising model with a precomputed adjacency list.
///
/// Immutable after construction, so it can be shared freely between sampler
/// threads.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "io::ModelDoc", into = "io::ModelDoc")]
pub struct IsingModel {
    n_spins: usize,
    edges: Vec<Edge>,
    fields: Vec<f64>,
    meta: ModelMeta,
    // CSR adjacency: neighbours of spin i live in adj_start[i]..adj_start[i+1]
    adj_start: Vec<usize>,
    adj_spin: Vec<usize>,
    adj_weight: Vec<f64>,
}

impl IsingModel {
    /// Builds a model, normalising each edge to `i < j`.
    ///
    /// Rejects self-loops, duplicate pairs, out-of-range indices and non-finite
    /// parameters.
    pub fn new(n_spins: usize, edges: Vec<Edge>, fields: Vec<f64>, meta: ModelMeta) -> Result<Self> {
        if fields.len() != n_spins {
            return Err(Error::DimensionMismatch {
                expected: n_spins,
                got: fields.len(),
            });
        }
        if let Some((i, h)) = fields.iter().enumerate().find(|(_, h)| !h.is_finite()) {
            return Err(Error::InvalidModel(format!("field h_{i} = {h} is not finite")));
        }
        let mut seen = HashSet::with_capacity(edges.len());
        let mut normalised = Vec::with_capacity(edges.len());
        for e in edges {
            let (i, j) = if e.i < e.j { (e.i, e.j) } else { (e.j, e.i) };
            if i == j {
                return Err(Error::InvalidModel(format!("self-loop on spin {i}")));
            }
            if j >= n_spins {
                return Err(Error::IndexOutOfRange { index: j, len: n_spins });
            }
            if !e.weight.is_finite() {
                return Err(Error::InvalidModel(format!("weight of ({i},{j}) is not finite")));
            }
            if !seen.insert((i, j)) {
                return Err(Error::InvalidModel(format!("duplicate edge ({i},{j})")));
            }
            normalised.push(Edge { i, j, weight: e.weight });
        }

        let mut degree = vec![0usize; n_spins];
        for e in &normalised {
            degree[e.i] += 1;
            degree[e.j] += 1;
        }
        let mut adj_start = Vec::with_capacity(n_spins + 1);
        adj_start.push(0);
        for d in &degree {
            adj_start.push(adj_start.last().unwrap() + d);
        }
        let mut fill = adj_start[..n_spins].to_vec();
        let mut adj_spin = vec![0usize; adj_start[n_spins]];
        let mut adj_weight = vec![0.0; adj_start[n_spins]];
        for e in &normalised {
            adj_spin[fill[e.i]] = e.j;
            adj_weight[fill[e.i]] = e.weight;
            fill[e.i] += 1;
            adj_spin[fill[e.j]] = e.i;
            adj_weight[fill[e.j]] = e.weight;
            fill[e.j] += 1;
        }

        Ok(IsingModel {
            n_spins,
            edges: normalised,
            fields,
            meta,
            adj_start,
            adj_spin,
            adj_weight,
        })
    }

    pub fn n_spins(&self) -> usize {
        self.n_spins
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    /// Number of non-zero couplings.
    pub fn n_couplings(&self) -> usize {
        self.edges.iter().filter(|e| e.weight != 0.0).count()
    }

    pub fn fields(&self) -> &[f64] {
        &self.fields
    }

    pub fn meta(&self) -> &ModelMeta {
        &self.meta
    }

    pub fn label(&self) -> &str {
        &self.meta.label
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.meta.label = label.into();
        self
    }

    pub fn has_fields(&self) -> bool {
        self.fields.iter().any(|&h| h != 0.0)
    }

    /// Neighbours of spin `i` with their coupling weights.
    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.adj_start[i]..self.adj_start[i + 1];
        self.adj_spin[r.clone()].iter().copied().zip(self.adj_weight[r].iter().copied())
    }

    pub fn degree(&self, i: usize) -> usize {
        self.adj_start[i + 1] - self.adj_start[i]
    }

    pub(crate) fn adjacency(&self) -> (&[usize], &[usize], &[f64]) {
        (&self.adj_start, &self.adj_spin, &self.adj_weight)
    }

    /// Multiplies every coupling and field by `c`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        let edges = self
            .edges
            .iter()
            .map(|e| Edge { weight: e.weight * c, ..*e })
            .collect();
        let fields = self.fields.iter().map(|h| h * c).collect();
        IsingModel::new(self.n_spins, edges, fields, self.meta.clone())
    }

    fn check_len(&self, state: &[i8]) -> Result<()> {
        if state.len() != self.n_spins {
            return Err(Error::DimensionMismatch {
                expected: self.n_spins,
                got: state.len(),
            });
        }
        Ok(())
    }

    pub fn energy(&self, state: &[i8]) -> Result<f64> {
        self.check_len(state)?;
        Ok(self.energy_unchecked(state))
    }

    pub(crate) fn energy_unchecked(&self, x: &[i8]) -> f64 {
        let pair: f64 = self
            .edges
            .iter()
            .map(|e| e.weight * f64::from(x[e.i] * x[e.j]))
            .sum();
        let single: f64 = self.fields.iter().zip(x).map(|(h, &s)| h * f64::from(s)).sum();
        pair + single
    }

    /// Effective field `zeta_i = h_i + sum_j w_ij x_j` for spin `i`.
    pub fn effective_field(&self, state: &[i8], i: usize) -> Result<f64> {
        self.check_len(state)?;
        if i >= self.n_spins {
            return Err(Error::IndexOutOfRange { index: i, len: self.n_spins });
        }
        Ok(self.effective_field_unchecked(state, i))
    }

    #[inline]
    pub(crate) fn effective_field_unchecked(&self, x: &[i8], i: usize) -> f64 {
        let mut z = self.fields[i];
        for k in self.adj_start[i]..self.adj_start[i + 1] {
            z += self.adj_weight[k] * f64::from(x[self.adj_spin[k]]);
        }
        z
    }

    pub fn effective_fields(&self, state: &[i8]) -> Result<Vec<f64>> {
        self.check_len(state)?;
        Ok((0..self.n_spins)
            .map(|i| self.effective_field_unchecked(state, i))
            .collect())
    }

    /// `energy(flip_i(x)) - energy(x)`, i.e. `-2 x_i zeta_i`.
    pub fn flip_delta(&self, state: &[i8], i: usize) -> Result<f64> {
        let z = self.effective_field(state, i)?;
        Ok(-2.0 * f64::from(state[i]) * z)
    }

    /// Integer representation of the couplings, when every weight and field
    /// is an integer multiple of a common quantum.
    pub(crate) fn quantized(&self) -> Option<Quantized> {
        let values: Vec<f64> = self
            .edges
            .iter()
            .map(|e| e.weight.abs())
            .chain(self.fields.iter().map(|h| h.abs()))
            .filter(|&v| v > 0.0)
            .collect();
        let smallest = values.iter().copied().fold(f64::INFINITY, f64::min);
        let quantum = if values.is_empty() {
            1.0
        } else {
            (1..=64).map(|d| smallest / d as f64).find(|&q| {
                values.iter().all(|&v| {
                    let r = v / q;
                    (r - r.round()).abs() <= 1e-9 * r.max(1.0)
                })
            })?
        };
        let to_int = |v: f64| (v / quantum).round() as i64;
        let edge_weights: Vec<i64> = self.edges.iter().map(|e| to_int(e.weight)).collect();
        let fields: Vec<i64> = self.fields.iter().map(|&h| to_int(h)).collect();
        let adj_weights: Vec<i64> = self.adj_weight.iter().map(|&w| to_int(w)).collect();
        let max_field = (0..self.n_spins)
            .map(|i| {
                fields[i].abs()
                    + adj_weights[self.adj_start[i]..self.adj_start[i + 1]]
                        .iter()
                        .map(|w| w.abs())
                        .sum::<i64>()
            })
            .max()
            .unwrap_or(0);
        if max_field > 1 << 16 {
            return None;
        }
        Some(Quantized {
            quantum,
            edge_weights,
            fields,
            adj_weights,
            max_field,
        })
    }

    /// Stable content hash over spins, edges and fields (metadata excluded).
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.n_spins as u64).to_le_bytes());
        for e in &self.edges {
            h.update((e.i as u64).to_le_bytes());
            h.update((e.j as u64).to_le_bytes());
            h.update(e.weight.to_bits().to_le_bytes());
        }
        for f in &self.fields {
            h.update(f.to_bits().to_le_bytes());
        }
        hex::encode(h.finalize())
    }
}

/// Couplings expressed as integers times `quantum`.
#[derive(Debug, Clone)]
pub(crate) struct Quantized {
    pub quantum: f64,
    pub edge_weights: Vec<i64>,
    pub fields: Vec<i64>,
    /// Aligned with the CSR adjacency.
    pub adj_weights: Vec<i64>,
    /// Upper bound on `|zeta_i| / quantum` over all spins and states.
    pub max_field: i64,
}

/// A configuration in `{-1,+1}^N`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<i8>", into = "Vec<i8>")]
pub struct SpinState(Vec<i8>);

impl SpinState {
    pub fn new(spins: Vec<i8>) -> Result<Self> {
        if let Some(&s) = spins.iter().find(|&&s| s != 1 && s != -1) {
            return Err(Error::InvalidSpin(i64::from(s)));
        }
        Ok(SpinState(spins))
    }

    pub fn all_up(n: usize) -> Self {
        SpinState(vec![1; n])
    }

    /// Decodes bit `k` of `bits` as spin `k` (set bit means +1).
    pub fn from_bits(bits: u64, n: usize) -> Self {
        SpinState((0..n).map(|k| if bits >> k & 1 == 1 { 1 } else { -1 }).collect())
    }

    pub fn to_bits(&self) -> u64 {
        self.0
            .iter()
            .enumerate()
            .fold(0u64, |acc, (k, &s)| if s > 0 { acc | 1 << k } else { acc })
    }

    pub fn flip(&mut self, i: usize) {
        self.0[i] = -self.0[i];
    }

    pub fn flipped(&self) -> Self {
        SpinState(self.0.iter().map(|s| -s).collect())
    }

    pub fn into_inner(self) -> Vec<i8> {
        self.0
    }
}

impl Deref for SpinState {
    type Target = [i8];
    fn deref(&self) -> &[i8] {
        &self.0
    }
}

impl TryFrom<Vec<i8>> for SpinState {
    type Error = Error;
    fn try_from(v: Vec<i8>) -> Result<Self> {
        SpinState::new(v)
    }
}

impl From<SpinState> for Vec<i8> {
    fn from(s: SpinState) -> Vec<i8> {
        s.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair(w: f64) -> IsingModel {
        IsingModel::new(2, vec![Edge { i: 0, j: 1, weight: w }], vec![0.0, 0.0], ModelMeta::default())
            .unwrap()
    }

    #[test]
    fn two_spin_energies() {
        let m = pair(1.0);
        assert_eq!(m.energy(&[1, 1]).unwrap(), 1.0);
        assert_eq!(m.energy(&[1, -1]).unwrap(), -1.0);
        assert_eq!(m.effective_fields(&[1, 1]).unwrap(), vec![1.0, 1.0]);
        assert_eq!(m.flip_delta(&[1, 1], 0).unwrap(), -2.0);
    }

    #[test]
    fn isolated_spin_with_field() {
        let m = IsingModel::new(1, vec![], vec![1.0], ModelMeta::default()).unwrap();
        assert_eq!(m.effective_fields(&[1]).unwrap(), vec![1.0]);
        assert_eq!(m.effective_fields(&[-1]).unwrap(), vec![1.0]);
        assert_eq!(m.flip_delta(&[1], 0).unwrap(), -2.0);
    }

    #[test]
    fn rejects_bad_models() {
        let meta = ModelMeta::default();
        let e = |i, j| Edge { i, j, weight: 1.0 };
        assert!(IsingModel::new(2, vec![e(0, 0)], vec![0.0; 2], meta.clone()).is_err());
        assert!(IsingModel::new(2, vec![e(0, 1), e(1, 0)], vec![0.0; 2], meta.clone()).is_err());
        assert!(IsingModel::new(2, vec![e(0, 2)], vec![0.0; 2], meta.clone()).is_err());
        assert!(IsingModel::new(2, vec![], vec![f64::NAN, 0.0], meta.clone()).is_err());
        let nan_w = Edge { i: 0, j: 1, weight: f64::INFINITY };
        assert!(IsingModel::new(2, vec![nan_w], vec![0.0; 2], meta).is_err());
    }

    #[test]
    fn reversed_edge_is_normalised() {
        let m = IsingModel::new(3, vec![Edge { i: 2, j: 0, weight: 0.5 }], vec![0.0; 3], ModelMeta::default())
            .unwrap();
        assert_eq!((m.edges()[0].i, m.edges()[0].j), (0, 2));
    }

    #[test]
    fn dimension_and_index_errors() {
        let m = pair(1.0);
        assert!(matches!(m.energy(&[1]), Err(Error::DimensionMismatch { .. })));
        assert!(matches!(m.effective_fields(&[1, 1, 1]), Err(Error::DimensionMismatch { .. })));
        assert!(matches!(m.flip_delta(&[1, 1], 2), Err(Error::IndexOutOfRange { .. })));
    }

    #[test]
    fn quantization_detects_thirds() {
        let m = IsingModel::new(
            3,
            vec![Edge { i: 0, j: 1, weight: 1.0 / 3.0 }, Edge { i: 1, j: 2, weight: -1.0 }],
            vec![0.0, 2.0 / 3.0, 0.0],
            ModelMeta::default(),
        )
        .unwrap();
        let q = m.quantized().unwrap();
        assert!((q.quantum - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(q.edge_weights, vec![1, -3]);
        assert_eq!(q.fields, vec![0, 2, 0]);
        assert_eq!(q.max_field, 6);
        let irrational = IsingModel::new(2, vec![Edge { i: 0, j: 1, weight: 1.0 }], vec![std::f64::consts::PI, 0.0], ModelMeta::default()).unwrap();
        assert!(irrational.quantized().is_none());
    }

    #[test]
    fn spin_state_validation_and_bits() {
        assert!(SpinState::new(vec![1, 0, -1]).is_err());
        let s = SpinState::from_bits(0b101, 3);
        assert_eq!(&*s, &[1, -1, 1]);
        assert_eq!(s.to_bits(), 0b101);
    }
}
