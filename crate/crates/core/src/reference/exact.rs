//! Dense probability vectors over `{-1,+1}^N` for small models.
//!
//! Index `s` encodes a state with bit `k` set when spin `k` is `+1`.

use rand::Rng;
use rayon::prelude::*;

use super::elimination::{EliminationPlan, DEFAULT_WIDTH_CAP};
use super::enumerate::decode;
use crate::error::{Error, Result};
use crate::model::{IsingModel, SampleMeta, SampleSet};
use crate::rng::{tag, tagged};
use crate::sampling::conditional_flip_prob;
use crate::topology::{Coloring, TopologyGraph};

/// Largest model held as a dense vector.
pub const DENSE_CAP: usize = 24;

/// Above this size exact samples come from the elimination sampler.
const CDF_SAMPLER_CAP: usize = 20;

fn check_dense(n: usize) -> Result<()> {
    if n > DENSE_CAP {
        return Err(Error::EnumerationCap { n, cap: DENSE_CAP });
    }
    Ok(())
}

/// `B_beta` as a dense vector.
pub fn boltzmann_vector(model: &IsingModel, beta: f64) -> Result<Vec<f64>> {
    let n = model.n_spins();
    check_dense(n)?;
    let log_w: Vec<f64> = (0..1u64 << n)
        .into_par_iter()
        .map(|s| -beta * model.energy_unchecked(&decode(s, n)))
        .collect();
    let shift = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut p: Vec<f64> = log_w.iter().map(|l| (l - shift).exp()).collect();
    let z: f64 = p.iter().sum();
    p.iter_mut().for_each(|x| *x /= z);
    Ok(p)
}

/// Pushes a distribution through one blocked Gibbs sweep at `beta`.
///
/// Each spin's update maps the pair `(s, s with spin v flipped)` to its
/// conditional split; spins within a class do not see each other, so
/// updating them one at a time equals the simultaneous class update.
pub fn propagate_sweep(model: &IsingModel, dist: &[f64], beta: f64, coloring: &Coloring) -> Result<Vec<f64>> {
    let n = model.n_spins();
    check_dense(n)?;
    if dist.len() != 1 << n {
        return Err(Error::DimensionMismatch { expected: 1 << n, got: dist.len() });
    }
    coloring.validate(model)?;
    let mut p = dist.to_vec();
    for class in coloring.classes() {
        for &v in class {
            let bit = 1usize << v;
            let nb: Vec<(usize, f64)> = model.neighbors(v).collect();
            let h = model.fields()[v];
            for s in (0..p.len()).filter(|s| s & bit == 0) {
                let zeta = nb
                    .iter()
                    .fold(h, |z, &(u, w)| if s >> u & 1 == 1 { z + w } else { z - w });
                let up = conditional_flip_prob(zeta, beta);
                let total = p[s] + p[s | bit];
                p[s | bit] = up * total;
                p[s] = (1.0 - up) * total;
            }
        }
    }
    Ok(p)
}

pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// `D_KL[p, q]`, with `0 log 0 = 0`; infinite if `p` puts mass where `q` has none.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .filter(|(a, _)| **a > 0.0)
        .map(|(&a, &b)| if b > 0.0 { a * (a / b).ln() } else { f64::INFINITY })
        .sum()
}

/// Draws states by inverting the cumulative distribution of `probs`.
pub fn sample_from_distribution(probs: &[f64], n_spins: usize, n_samples: usize, seed: u64) -> Result<SampleSet> {
    check_dense(n_spins)?;
    if probs.len() != 1 << n_spins {
        return Err(Error::DimensionMismatch { expected: 1 << n_spins, got: probs.len() });
    }
    let mut cdf = Vec::with_capacity(probs.len());
    let mut acc = 0.0;
    for &p in probs {
        if !(p >= 0.0) {
            return Err(Error::InvalidArgument("probabilities must be non-negative".into()));
        }
        acc += p;
        cdf.push(acc);
    }
    let mut spins = vec![0i8; n_spins * n_samples];
    spins.par_chunks_mut(n_spins.max(1)).enumerate().for_each(|(k, x)| {
        let mut rng = tagged(seed, tag::EXACT_SAMPLER, k as u64);
        let u = rng.gen::<f64>() * acc;
        let s = cdf.partition_point(|&c| c <= u).min(cdf.len() - 1);
        for (i, xi) in x.iter_mut().enumerate() {
            *xi = if s >> i & 1 == 1 { 1 } else { -1 };
        }
    });
    let meta = SampleMeta { sampler: "exact-cdf".into(), schedule: String::new(), seed: Some(seed), postprocess: None };
    SampleSet::from_flat("", n_spins, spins, meta)
}

/// Independent exact samples from `B_beta`: CDF inversion for small models,
/// ancestral sampling through bucket elimination otherwise.
pub fn exact_boltzmann_samples(
    model: &IsingModel,
    beta: f64,
    n_samples: usize,
    seed: u64,
    graph: Option<&TopologyGraph>,
) -> Result<SampleSet> {
    let mut set = if model.n_spins() <= CDF_SAMPLER_CAP {
        let p = boltzmann_vector(model, beta)?;
        let mut s = sample_from_distribution(&p, model.n_spins(), n_samples, seed)?;
        s.meta.schedule = format!("boltzmann(beta={beta})");
        s
    } else {
        EliminationPlan::auto(model, graph, DEFAULT_WIDTH_CAP)?.sample(beta, n_samples, seed)?
    };
    set.model_label = model.label().to_string();
    Ok(set)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Edge, ModelMeta};
    use crate::topology::{build_chimera, gen_ran1, ChimeraSpec};

    fn small_model() -> IsingModel {
        let edges = vec![
            Edge { i: 0, j: 1, weight: 1.0 },
            Edge { i: 1, j: 2, weight: -0.5 },
            Edge { i: 2, j: 3, weight: 1.5 },
            Edge { i: 0, j: 3, weight: -1.0 },
        ];
        IsingModel::new(4, edges, vec![0.2, 0.0, -0.3, 0.0], ModelMeta::default()).unwrap()
    }

    #[test]
    fn boltzmann_is_stationary() {
        let m = small_model();
        let c = Coloring::bipartite(&m).unwrap();
        for beta in [0.5, 1.0, 2.0, 4.0] {
            let b = boltzmann_vector(&m, beta).unwrap();
            let after = propagate_sweep(&m, &b, beta, &c).unwrap();
            assert!(total_variation(&b, &after) <= 1e-12);
        }
    }

    #[test]
    fn sweep_at_zero_is_uniform() {
        let m = small_model();
        let c = Coloring::bipartite(&m).unwrap();
        let mut delta = vec![0.0; 16];
        delta[5] = 1.0;
        let out = propagate_sweep(&m, &delta, 0.0, &c).unwrap();
        assert!(total_variation(&out, &[1.0 / 16.0; 16]) <= 1e-15);
    }

    #[test]
    fn divergence_basics() {
        let p = [0.5, 0.5, 0.0];
        let q = [0.25, 0.25, 0.5];
        assert!((kl_divergence(&p, &q) - 2f64.ln()).abs() < 1e-15);
        assert_eq!(kl_divergence(&q, &p), f64::INFINITY);
        assert_eq!(total_variation(&p, &q), 0.5);
    }

    #[test]
    fn cdf_sampler_frequencies() {
        let probs = [0.1, 0.2, 0.3, 0.4];
        let set = sample_from_distribution(&probs, 2, 50_000, 9).unwrap();
        let mut counts = [0usize; 4];
        for s in set.states() {
            counts[usize::from(s[0] == 1) | usize::from(s[1] == 1) << 1] += 1;
        }
        for (c, p) in counts.iter().zip(probs) {
            let se = (p * (1.0 - p) / 50_000.0f64).sqrt();
            assert!((*c as f64 / 50_000.0 - p).abs() < 4.0 * se);
        }
    }

    #[test]
    fn large_models_use_elimination() {
        let g = build_chimera(&ChimeraSpec::square(2)).unwrap();
        let m = gen_ran1(&g, 3);
        let set = exact_boltzmann_samples(&m, 1.0, 10, 1, Some(&g)).unwrap();
        assert_eq!(set.meta.sampler, "exact-dp");
        assert_eq!(set.model_label, m.label());
        assert!(boltzmann_vector(&m, 1.0).is_err());
    }
}
