use std::collections::HashMap;

use rand::Rng;
use rayon::prelude::*;

use super::{
    bisect, std_dev, BetaHat, EstimatorMethod, EstimatorReport, Root, Sentinel, DEFAULT_BOOTSTRAP,
    DEFAULT_MAX_ITERATIONS, DEFAULT_TOLERANCE,
};
use crate::error::Result;
use crate::model::{IsingModel, SampleSet};
use crate::rng::{tag, tagged};

const INITIAL_BRACKET: (f64, f64) = (1e-3, 10.0);

#[derive(Debug, Clone, PartialEq)]
pub struct MlplOptions {
    pub tolerance: f64,
    pub max_iterations: usize,
    pub bootstrap: usize,
    pub seed: u64,
}

impl Default for MlplOptions {
    fn default() -> Self {
        MlplOptions {
            tolerance: DEFAULT_TOLERANCE,
            max_iterations: DEFAULT_MAX_ITERATIONS,
            bootstrap: DEFAULT_BOOTSTRAP,
            seed: 0,
        }
    }
}

/// Counts of the local products `u = x_i zeta_i(x)` over samples and spins.
///
/// The pseudo-likelihood depends on the samples only through these counts.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalFieldHistogram {
    pub values: Vec<f64>,
    pub counts: Vec<f64>,
}

/// Logistic function without overflow.
#[inline]
fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

impl LocalFieldHistogram {
    pub fn from_samples(samples: &SampleSet, model: &IsingModel) -> Result<Self> {
        let (keys, per_sample) = local_products(samples, model)?;
        let mut counts = vec![0.0; keys.len()];
        for row in &per_sample {
            for &(k, c) in row {
                counts[k] += c as f64;
            }
        }
        Ok(LocalFieldHistogram { values: keys, counts })
    }

    /// `EM(beta) = sum u sigma(2 beta u)`, non-decreasing in beta.
    ///
    /// The log-pseudo-likelihood has derivative `-2 EM(beta)`.
    pub fn em(&self, beta: f64) -> f64 {
        self.values.iter().zip(&self.counts).map(|(&u, &c)| c * u * sigmoid(2.0 * beta * u)).sum()
    }

    fn signs(&self) -> (bool, bool) {
        let present = |f: fn(f64) -> bool| self.values.iter().zip(&self.counts).any(|(&u, &c)| c > 0.0 && f(u));
        (present(|u| u > 0.0), present(|u| u < 0.0))
    }

    /// Root of `EM` with a sentinel when no finite root exists.
    pub(crate) fn root(&self, tolerance: f64, max_iterations: usize) -> Result<(BetaHat, Option<Root>)> {
        match self.signs() {
            (false, false) => return Ok((BetaHat::Sentinel { kind: Sentinel::Undetermined, em_sign: 0.0 }, None)),
            // every move raises the energy, so the pseudo-likelihood grows without bound
            (false, true) => return Ok((BetaHat::Sentinel { kind: Sentinel::PlusInfinity, em_sign: -1.0 }, None)),
            (true, false) => return Ok((BetaHat::Sentinel { kind: Sentinel::MinusInfinity, em_sign: 1.0 }, None)),
            (true, true) => {}
        }
        let (mut lo, mut hi) = INITIAL_BRACKET;
        let (mut f_lo, mut f_hi) = (self.em(lo), self.em(hi));
        let mut step = hi - lo;
        while f_hi < 0.0 {
            (lo, f_lo) = (hi, f_hi);
            step *= 2.0;
            hi += step;
            f_hi = self.em(hi);
        }
        let mut step = lo;
        while f_lo > 0.0 {
            (hi, f_hi) = (lo, f_lo);
            step *= 2.0;
            lo -= step;
            f_lo = self.em(lo);
        }
        let root = bisect(|b| Ok(self.em(b)), lo, hi, f_lo, f_hi, tolerance, max_iterations)?;
        Ok((BetaHat::Value(root.beta), Some(root)))
    }
}

/// Distinct local products and, for each sample, `(product index, count)` pairs.
fn local_products(samples: &SampleSet, model: &IsingModel) -> Result<(Vec<f64>, Vec<Vec<(usize, u32)>>)> {
    samples.check_for_estimation(model)?;
    let n = model.n_spins();
    let q = model.quantized();
    let key_of = |x: &[i8], i: usize| -> (i64, f64) {
        let u = f64::from(x[i]) * model.effective_field_unchecked(x, i);
        match &q {
            Some(q) => ((u / q.quantum).round() as i64, u),
            None => ((u + 0.0).to_bits() as i64, u),
        }
    };
    let raw: Vec<Vec<(i64, f64)>> = samples.states().map(|x| (0..n).map(|i| key_of(x, i)).collect()).collect();
    let mut distinct: Vec<(i64, f64)> = raw.iter().flatten().copied().collect();
    distinct.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    distinct.dedup_by_key(|k| k.0);
    let index: HashMap<i64, usize> = distinct.iter().enumerate().map(|(k, &(key, _))| (key, k)).collect();
    let per_sample = raw
        .iter()
        .map(|row| {
            let mut counts: HashMap<usize, u32> = HashMap::new();
            for (key, _) in row {
                *counts.entry(index[key]).or_default() += 1;
            }
            let mut v: Vec<(usize, u32)> = counts.into_iter().collect();
            v.sort_unstable();
            v
        })
        .collect();
    let values = distinct
        .iter()
        .map(|&(key, u)| match &q {
            Some(q) => key as f64 * q.quantum,
            None => u,
        })
        .collect();
    Ok((values, per_sample))
}

/// Maximum log-pseudo-likelihood estimate with a bootstrap standard error.
pub fn estimate_mlpl(samples: &SampleSet, model: &IsingModel, opts: &MlplOptions) -> Result<EstimatorReport> {
    let (values, per_sample) = local_products(samples, model)?;
    let mut counts = vec![0.0; values.len()];
    for row in &per_sample {
        for &(k, c) in row {
            counts[k] += c as f64;
        }
    }
    let hist = LocalFieldHistogram { values, counts };
    let (beta_hat, root) = hist.root(opts.tolerance, opts.max_iterations)?;
    let mut report = EstimatorReport::new(EstimatorMethod::Mlpl, beta_hat);
    if let Some(r) = root {
        report.diagnostics.iterations = r.iterations;
        report.diagnostics.bracket = Some(r.bracket);
        report.diagnostics.em_at_bracket = Some(r.f_bracket);
        report.objective_at_min = Some(hist.em(r.beta));
    }
    if opts.bootstrap > 0 {
        let n = per_sample.len();
        let roots = (0..opts.bootstrap)
            .into_par_iter()
            .map(|r| {
                let mut rng = tagged(opts.seed, tag::BOOTSTRAP, r as u64);
                let mut counts = vec![0.0; hist.values.len()];
                for _ in 0..n {
                    for &(k, c) in &per_sample[rng.gen_range(0..n)] {
                        counts[k] += c as f64;
                    }
                }
                let h = LocalFieldHistogram { values: hist.values.clone(), counts };
                Ok(h.root(opts.tolerance, opts.max_iterations)?.0.value())
            })
            .collect::<Result<Vec<_>>>()?;
        let finite: Vec<f64> = roots.iter().flatten().copied().collect();
        report.diagnostics.bootstrap_sentinels = roots.len() - finite.len();
        report.diagnostics.bootstrap_se = std_dev(&finite);
    }
    Ok(report)
}
