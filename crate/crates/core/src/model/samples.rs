use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::IsingModel;
use crate::error::{Error, Result};

/// Record of a fixed-beta blocked Gibbs post-processing pass.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PostProcessRecord {
    pub beta: f64,
    pub sweeps: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SampleMeta {
    pub sampler: String,
    pub schedule: String,
    pub seed: Option<u64>,
    pub postprocess: Option<PostProcessRecord>,
}

/// A batch of spin configurations stored row-major in one flat buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    pub model_label: String,
    pub meta: SampleMeta,
    n_spins: usize,
    spins: Vec<i8>,
}

impl SampleSet {
    pub fn new(model_label: impl Into<String>, n_spins: usize, meta: SampleMeta) -> Self {
        SampleSet {
            model_label: model_label.into(),
            meta,
            n_spins,
            spins: Vec::new(),
        }
    }

    /// Wraps an existing flat buffer of `len * n_spins` spins.
    pub fn from_flat(
        model_label: impl Into<String>,
        n_spins: usize,
        spins: Vec<i8>,
        meta: SampleMeta,
    ) -> Result<Self> {
        if n_spins == 0 || !spins.len().is_multiple_of(n_spins) {
            return Err(Error::InvalidArgument(format!(
                "flat buffer of {} spins is not a whole number of {n_spins}-spin rows",
                spins.len()
            )));
        }
        if let Some(&s) = spins.iter().find(|&&s| s != 1 && s != -1) {
            return Err(Error::InvalidSpin(i64::from(s)));
        }
        Ok(SampleSet {
            model_label: model_label.into(),
            meta,
            n_spins,
            spins,
        })
    }

    pub fn from_states<I, S>(model_label: impl Into<String>, n_spins: usize, states: I, meta: SampleMeta) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[i8]>,
    {
        let mut set = SampleSet::new(model_label, n_spins, meta);
        for s in states {
            set.push(s.as_ref())?;
        }
        Ok(set)
    }

    pub fn push(&mut self, state: &[i8]) -> Result<()> {
        if state.len() != self.n_spins {
            return Err(Error::DimensionMismatch {
                expected: self.n_spins,
                got: state.len(),
            });
        }
        if let Some(&s) = state.iter().find(|&&s| s != 1 && s != -1) {
            return Err(Error::InvalidSpin(i64::from(s)));
        }
        self.spins.extend_from_slice(state);
        Ok(())
    }

    pub fn n_spins(&self) -> usize {
        self.n_spins
    }

    pub fn len(&self) -> usize {
        self.spins.len().checked_div(self.n_spins).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.spins.is_empty()
    }

    pub fn state(&self, k: usize) -> &[i8] {
        &self.spins[k * self.n_spins..(k + 1) * self.n_spins]
    }

    pub fn states(&self) -> std::slice::ChunksExact<'_, i8> {
        self.spins.chunks_exact(self.n_spins.max(1))
    }

    pub fn flat(&self) -> &[i8] {
        &self.spins
    }

    pub(crate) fn flat_mut(&mut self) -> &mut [i8] {
        &mut self.spins
    }

    pub fn check_model(&self, model: &IsingModel) -> Result<()> {
        if self.n_spins != model.n_spins() {
            return Err(Error::DimensionMismatch {
                expected: model.n_spins(),
                got: self.n_spins,
            });
        }
        Ok(())
    }

    /// Samples that estimation can work with: non-empty and matching the model.
    pub(crate) fn check_for_estimation(&self, model: &IsingModel) -> Result<()> {
        self.check_model(model)?;
        if self.is_empty() {
            return Err(Error::TooFewSamples { needed: 1, got: 0 });
        }
        Ok(())
    }

    pub fn energies(&self, model: &IsingModel) -> Result<Vec<f64>> {
        self.check_model(model)?;
        Ok(self.states().map(|s| model.energy_unchecked(s)).collect())
    }

    pub fn mean_energy(&self, model: &IsingModel) -> Result<f64> {
        self.check_for_estimation(model)?;
        let e = self.energies(model)?;
        Ok(e.iter().sum::<f64>() / e.len() as f64)
    }

    /// Empirical `<x_i x_j>` per model edge.
    pub fn edge_correlations(&self, model: &IsingModel) -> Result<Vec<f64>> {
        self.check_for_estimation(model)?;
        let mut acc = vec![0i64; model.edges().len()];
        for s in self.states() {
            for (a, e) in acc.iter_mut().zip(model.edges()) {
                *a += i64::from(s[e.i] * s[e.j]);
            }
        }
        let n = self.len() as f64;
        Ok(acc.into_iter().map(|a| a as f64 / n).collect())
    }

    pub fn magnetizations(&self) -> Vec<f64> {
        let mut acc = vec![0i64; self.n_spins];
        for s in self.states() {
            for (a, &x) in acc.iter_mut().zip(s) {
                *a += i64::from(x);
            }
        }
        let n = self.len().max(1) as f64;
        acc.into_iter().map(|a| a as f64 / n).collect()
    }

    pub fn subset(&self, indices: &[usize]) -> SampleSet {
        let mut spins = Vec::with_capacity(indices.len() * self.n_spins);
        for &k in indices {
            spins.extend_from_slice(self.state(k));
        }
        SampleSet {
            model_label: self.model_label.clone(),
            meta: self.meta.clone(),
            n_spins: self.n_spins,
            spins,
        }
    }

    /// Plug-in distribution placing mass `1/|S|` on every sample.
    pub fn empirical(&self) -> EmpiricalDistribution {
        let mut index: HashMap<&[i8], usize> = HashMap::new();
        let mut states = Vec::new();
        let mut counts: Vec<f64> = Vec::new();
        for s in self.states() {
            match index.get(s) {
                Some(&k) => counts[k] += 1.0,
                None => {
                    index.insert(s, counts.len());
                    states.extend_from_slice(s);
                    counts.push(1.0);
                }
            }
        }
        let n = self.len() as f64;
        EmpiricalDistribution {
            n_spins: self.n_spins,
            states,
            probs: counts.into_iter().map(|c| c / n).collect(),
        }
    }
}

/// Distinct states with their probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalDistribution {
    n_spins: usize,
    states: Vec<i8>,
    probs: Vec<f64>,
}

impl EmpiricalDistribution {
    /// Builds a distribution from explicit (state, weight) pairs. Weights are
    /// normalised; repeated states are allowed and simply add up.
    pub fn from_weighted<S: AsRef<[i8]>>(n_spins: usize, items: impl IntoIterator<Item = (S, f64)>) -> Result<Self> {
        let mut states = Vec::new();
        let mut probs = Vec::new();
        for (s, w) in items {
            let s = s.as_ref();
            if s.len() != n_spins {
                return Err(Error::DimensionMismatch { expected: n_spins, got: s.len() });
            }
            if !(w.is_finite() && w >= 0.0) {
                return Err(Error::InvalidArgument(format!("weight {w} is not a non-negative number")));
            }
            if w > 0.0 {
                states.extend_from_slice(s);
                probs.push(w);
            }
        }
        let total: f64 = probs.iter().sum();
        if total <= 0.0 {
            return Err(Error::TooFewSamples { needed: 1, got: 0 });
        }
        probs.iter_mut().for_each(|p| *p /= total);
        Ok(EmpiricalDistribution { n_spins, states, probs })
    }

    pub fn n_spins(&self) -> usize {
        self.n_spins
    }

    pub fn support_size(&self) -> usize {
        self.probs.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[i8], f64)> + '_ {
        self.states.chunks_exact(self.n_spins.max(1)).zip(self.probs.iter().copied())
    }

    /// Plug-in entropy `-sum p log p` in nats.
    pub fn entropy(&self) -> f64 {
        -self.probs.iter().filter(|&&p| p > 0.0).map(|&p| p * p.ln()).sum::<f64>()
    }

    pub fn mean_energy(&self, model: &IsingModel) -> Result<f64> {
        self.check(model)?;
        Ok(self.iter().map(|(s, p)| p * model.energy_unchecked(s)).sum())
    }

    pub fn edge_correlations(&self, model: &IsingModel) -> Result<Vec<f64>> {
        self.check(model)?;
        let mut acc = vec![0.0; model.edges().len()];
        for (s, p) in self.iter() {
            for (a, e) in acc.iter_mut().zip(model.edges()) {
                *a += p * f64::from(s[e.i] * s[e.j]);
            }
        }
        Ok(acc)
    }

    pub fn magnetizations(&self) -> Vec<f64> {
        let mut acc = vec![0.0; self.n_spins];
        for (s, p) in self.iter() {
            for (a, &x) in acc.iter_mut().zip(s) {
                *a += p * f64::from(x);
            }
        }
        acc
    }

    fn check(&self, model: &IsingModel) -> Result<()> {
        if self.n_spins != model.n_spins() {
            return Err(Error::DimensionMismatch {
                expected: model.n_spins(),
                got: self.n_spins,
            });
        }
        Ok(())
    }
}
