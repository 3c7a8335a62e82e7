//! Blocked Gibbs kernel.
//!
//! Spins of one color class are conditionally independent given the rest, so
//! a class can be resampled in place in any order. A sweep visits the classes
//! in their fixed order and updates every spin exactly once.

use rand::RngCore;

use crate::error::Result;
use crate::model::IsingModel;
use crate::rng::ChainRng;
use crate::topology::Coloring;

const UNIT_53: f64 = 1.0 / (1u64 << 53) as f64;

/// `P(x_i = +1 | rest) = exp(-beta zeta) / (2 cosh(beta zeta)) = 1 / (1 + exp(2 beta zeta))`.
///
/// Evaluated in the branch that never exponentiates a positive argument, so it
/// saturates cleanly to 0 or 1 instead of overflowing.
#[inline]
pub fn conditional_flip_prob(zeta: f64, beta: f64) -> f64 {
    let t = 2.0 * beta * zeta;
    if t > 0.0 {
        let e = (-t).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + t.exp())
    }
}

#[derive(Debug, Clone)]
enum Couplings {
    /// Effective fields are `k * quantum` with integer `|k| <= offset`.
    Quantized {
        quantum: f64,
        offset: i64,
        adj_weight: Vec<i32>,
        fields: Vec<i32>,
    },
    Float,
}

/// Per-beta data needed by a sweep.
#[derive(Debug, Clone)]
pub enum SweepTable {
    /// Acceptance thresholds in 32-bit fixed point indexed by `k + offset`.
    Thresholds(Vec<u32>),
    Beta(f64),
}

/// A model and coloring prepared for repeated sweeps.
#[derive(Debug, Clone)]
pub struct GibbsKernel<'m> {
    model: &'m IsingModel,
    order: Vec<u32>,
    adj_start: Vec<u32>,
    adj_spin: Vec<u32>,
    couplings: Couplings,
}

impl<'m> GibbsKernel<'m> {
    pub fn new(model: &'m IsingModel, coloring: &Coloring) -> Result<Self> {
        coloring.validate(model)?;
        let order = coloring
            .classes()
            .iter()
            .flat_map(|c| c.iter().map(|&v| v as u32))
            .collect();
        let (start, spin, _) = model.adjacency();
        let couplings = match model.quantized() {
            Some(q) if q.max_field <= i64::from(i32::MAX) => Couplings::Quantized {
                quantum: q.quantum,
                offset: q.max_field,
                adj_weight: q.adj_weights.iter().map(|&w| w as i32).collect(),
                fields: q.fields.iter().map(|&h| h as i32).collect(),
            },
            _ => Couplings::Float,
        };
        Ok(GibbsKernel {
            model,
            order,
            adj_start: start.iter().map(|&s| s as u32).collect(),
            adj_spin: spin.iter().map(|&s| s as u32).collect(),
            couplings,
        })
    }

    pub fn model(&self) -> &'m IsingModel {
        self.model
    }

    pub fn table(&self, beta: f64) -> SweepTable {
        match &self.couplings {
            Couplings::Quantized { quantum, offset, .. } => SweepTable::Thresholds(
                (-offset..=*offset)
                    .map(|k| {
                        let p = conditional_flip_prob(k as f64 * quantum, beta);
                        // p = 1 saturates one step short; the bias is below 2^-32
                        (p * (1u64 << 32) as f64).round().min(u32::MAX as f64) as u32
                    })
                    .collect(),
            ),
            Couplings::Float => SweepTable::Beta(beta),
        }
    }

    /// One blocked Gibbs sweep of `state` in place.
    #[inline]
    pub fn sweep(&self, state: &mut [i8], table: &SweepTable, rng: &mut ChainRng) {
        debug_assert_eq!(state.len(), self.model.n_spins());
        match (&self.couplings, table) {
            (Couplings::Quantized { offset, adj_weight, fields, .. }, SweepTable::Thresholds(thr)) => {
                let thr = &thr[..];
                // each 64-bit draw decides two spins
                let mut bits = 0u64;
                for (n, &v) in self.order.iter().enumerate() {
                    let v = v as usize;
                    let lo = self.adj_start[v] as usize;
                    let hi = self.adj_start[v + 1] as usize;
                    let mut k = fields[v];
                    for (&u, &w) in self.adj_spin[lo..hi].iter().zip(&adj_weight[lo..hi]) {
                        k += w * i32::from(state[u as usize]);
                    }
                    let t = thr[(i64::from(k) + offset) as usize];
                    if n & 1 == 0 {
                        bits = rng.next_u64();
                    } else {
                        bits >>= 32;
                    }
                    state[v] = 2 * i8::from((bits as u32) < t) - 1;
                }
            }
            (Couplings::Float, SweepTable::Beta(beta)) => {
                for &v in &self.order {
                    let v = v as usize;
                    let zeta = self.model.effective_field_unchecked(state, v);
                    let p = conditional_flip_prob(zeta, *beta);
                    let u = (rng.next_u64() >> 11) as f64 * UNIT_53;
                    state[v] = if u < p { 1 } else { -1 };
                }
            }
            _ => unreachable!("sweep table built for a different kernel"),
        }
    }

    pub fn sweep_at(&self, state: &mut [i8], beta: f64, rng: &mut ChainRng) {
        let table = self.table(beta);
        self.sweep(state, &table, rng);
    }
}

/// Uniform random state written into `state`.
pub(crate) fn randomize(state: &mut [i8], rng: &mut ChainRng) {
    for chunk in state.chunks_mut(64) {
        let bits = rng.next_u64();
        for (k, s) in chunk.iter_mut().enumerate() {
            *s = if bits >> k & 1 == 1 { 1 } else { -1 };
        }
    }
}

/// Applies one sweep to `state` at inverse temperature `beta`.
///
/// Builds the kernel on every call; use [`GibbsKernel`] directly in loops.
pub fn gibbs_sweep(model: &IsingModel, state: &mut [i8], beta: f64, coloring: &Coloring, rng: &mut ChainRng) -> Result<()> {
    if state.len() != model.n_spins() {
        return Err(crate::Error::DimensionMismatch {
            expected: model.n_spins(),
            got: state.len(),
        });
    }
    GibbsKernel::new(model, coloring)?.sweep_at(state, beta, rng);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Edge, ModelMeta};
    use crate::rng::substream;

    #[test]
    fn conditional_probability_values() {
        assert_eq!(conditional_flip_prob(3.7, 0.0), 0.5);
        assert_eq!(conditional_flip_prob(0.0, 12.0), 0.5);
        let expected = (-1.0f64).exp() / (2.0 * 1.0f64.cosh());
        assert!((conditional_flip_prob(1.0, 1.0) - expected).abs() < 1e-15);
        assert!((conditional_flip_prob(1.0, 1.0) - 0.1192).abs() < 1e-4);
        assert_eq!(conditional_flip_prob(1.0, 700.0), 0.0);
        assert_eq!(conditional_flip_prob(-1.0, 700.0), 1.0);
        for t in [-800.0, -20.0, -1.0, 0.3, 40.0, 800.0] {
            let p = conditional_flip_prob(t, 1.0);
            assert!((0.0..=1.0).contains(&p));
        }
    }

    #[test]
    fn single_spin_frequency() {
        let m = IsingModel::new(1, vec![], vec![1.0], ModelMeta::default()).unwrap();
        let coloring = Coloring::from_classes(vec![vec![0]]);
        let kernel = GibbsKernel::new(&m, &coloring).unwrap();
        let mut rng = substream(3, 0);
        let mut state = [1i8];
        let n = 400_000;
        let mut up = 0;
        let table = kernel.table(2.0);
        for _ in 0..n {
            kernel.sweep(&mut state, &table, &mut rng);
            up += (state[0] == 1) as usize;
        }
        let p = (-2.0f64).exp() / (2.0 * 2.0f64.cosh());
        assert!((p - 0.0180).abs() < 1e-4);
        let se = (p * (1.0 - p) / n as f64).sqrt();
        assert!((up as f64 / n as f64 - p).abs() < 4.0 * se);
    }

    #[test]
    fn quantized_and_float_paths_agree_in_distribution() {
        // same conditionals through both paths: thresholds only round at 2^-32
        let edges = vec![Edge { i: 0, j: 1, weight: 1.0 / 3.0 }, Edge { i: 1, j: 2, weight: -1.0 }];
        let m = IsingModel::new(3, edges.clone(), vec![0.0; 3], ModelMeta::default()).unwrap();
        let c = Coloring::from_classes(vec![vec![0, 2], vec![1]]);
        let k = GibbsKernel::new(&m, &c).unwrap();
        assert!(matches!(k.couplings, Couplings::Quantized { .. }));
        if let SweepTable::Thresholds(t) = k.table(0.7) {
            for (idx, &thr) in t.iter().enumerate() {
                let zeta = (idx as f64 - 4.0) / 3.0;
                let p = conditional_flip_prob(zeta, 0.7);
                assert!((f64::from(thr) / (1u64 << 32) as f64 - p).abs() <= 1.0 / (1u64 << 32) as f64);
            }
        }
    }
}
