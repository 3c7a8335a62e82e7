use std::collections::HashMap;
use std::ops::Range;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::SampleSet;

pub const DEFAULT_JACKKNIFE_BLOCKS: usize = 100;
const MIN_SAMPLES: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JackknifeEstimate {
    /// The statistic on all samples.
    pub estimate: f64,
    pub corrected: f64,
    /// `estimate - corrected`.
    pub bias: f64,
    pub se: f64,
    pub blocks: usize,
}

impl JackknifeEstimate {
    /// Delete-a-block jackknife allowing unequal block sizes.
    ///
    /// With equal blocks this is `B theta - (B - 1) mean(theta_-b)`; the size
    /// weights keep linear statistics exactly unbiased otherwise.
    pub(crate) fn assemble(estimate: f64, leave_outs: &[f64], ranges: &[Range<usize>]) -> Self {
        let n: usize = ranges.iter().map(|r| r.len()).sum();
        let b = leave_outs.len() as f64;
        let corrected = b * estimate
            - leave_outs.iter().zip(ranges).map(|(t, r)| (1.0 - r.len() as f64 / n as f64) * t).sum::<f64>();
        let var = leave_outs
            .iter()
            .zip(ranges)
            .map(|(t, r)| {
                let h = n as f64 / r.len() as f64;
                let pseudo = h * estimate - (h - 1.0) * t;
                (pseudo - corrected).powi(2) / (h - 1.0)
            })
            .sum::<f64>()
            / b;
        JackknifeEstimate { estimate, corrected, bias: estimate - corrected, se: var.sqrt(), blocks: leave_outs.len() }
    }
}

/// Half-open ranges of `blocks` contiguous blocks over `n` items.
pub(crate) fn block_ranges(n: usize, blocks: usize) -> Result<Vec<Range<usize>>> {
    if n < MIN_SAMPLES {
        return Err(Error::TooFewSamples { needed: MIN_SAMPLES, got: n });
    }
    if blocks < 2 {
        return Err(Error::InvalidArgument(format!("jackknife needs at least 2 blocks, got {blocks}")));
    }
    let b = blocks.min(n);
    Ok((0..b).map(|k| k * n / b..(k + 1) * n / b).collect())
}

/// Leave-one-block-out jackknife of an arbitrary statistic of a sample set.
pub fn jackknife_bias_correct<F>(samples: &SampleSet, blocks: usize, statistic: F) -> Result<JackknifeEstimate>
where
    F: Fn(&SampleSet) -> Result<f64> + Sync,
{
    let n = samples.len();
    let ranges = block_ranges(n, blocks)?;
    let full = statistic(samples)?;
    let leave_outs = ranges
        .par_iter()
        .map(|r| {
            let keep: Vec<usize> = (0..r.start).chain(r.end..n).collect();
            statistic(&samples.subset(&keep))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(JackknifeEstimate::assemble(full, &leave_outs, &ranges))
}

/// Jackknife of the plug-in entropy, updating state counts block by block.
pub fn entropy_jackknife(samples: &SampleSet, blocks: usize) -> Result<JackknifeEstimate> {
    let n = samples.len();
    let ranges = block_ranges(n, blocks)?;
    let mut index: HashMap<&[i8], usize> = HashMap::new();
    let ids: Vec<usize> = samples
        .states()
        .map(|x| {
            let next = index.len();
            *index.entry(x).or_insert(next)
        })
        .collect();
    let mut counts = vec![0usize; index.len()];
    for &id in &ids {
        counts[id] += 1;
    }
    let c_ln_c = |c: usize| if c == 0 { 0.0 } else { c as f64 * (c as f64).ln() };
    // H = ln n - (1/n) sum c ln c
    let entropy = |total: usize, s: f64| (total as f64).ln() - s / total as f64;
    let s_full: f64 = counts.iter().map(|&c| c_ln_c(c)).sum();
    let full = entropy(n, s_full);
    let mut removed: HashMap<usize, usize> = HashMap::new();
    let leave_outs: Vec<f64> = ranges
        .iter()
        .map(|r| {
            removed.clear();
            for &id in &ids[r.clone()] {
                *removed.entry(id).or_default() += 1;
            }
            let s = removed.iter().fold(s_full, |s, (&id, &k)| s - c_ln_c(counts[id]) + c_ln_c(counts[id] - k));
            entropy(n - r.len(), s)
        })
        .collect();
    Ok(JackknifeEstimate::assemble(full, &leave_outs, &ranges))
}
