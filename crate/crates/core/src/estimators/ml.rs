use rand::Rng;
use rayon::prelude::*;

use super::{
    bisect, std_dev, BetaHat, EstimatorMethod, EstimatorReport, ObjectiveCurve, Root, Sentinel, DEFAULT_BOOTSTRAP,
    DEFAULT_MAX_ITERATIONS, DEFAULT_TOLERANCE,
};
use crate::error::Result;
use crate::model::{IsingModel, SampleSet};
use crate::reference::MeanEnergySource;
use crate::rng::{tag, tagged};

#[derive(Debug, Clone, PartialEq)]
pub struct MlOptions {
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Bootstrap resamples for the standard error; 0 disables it.
    pub bootstrap: usize,
    pub seed: u64,
}

impl Default for MlOptions {
    fn default() -> Self {
        MlOptions {
            tolerance: DEFAULT_TOLERANCE,
            max_iterations: DEFAULT_MAX_ITERATIONS,
            bootstrap: DEFAULT_BOOTSTRAP,
            seed: 0,
        }
    }
}

/// Solves `EM(beta) = mean_energy - <H>_beta = 0` over the source's bracket.
///
/// `<H>_beta` is non-increasing, so `EM` is non-decreasing and a positive
/// value at the low end means the samples are hotter than anything searchable.
pub fn ml_root<S: MeanEnergySource + ?Sized>(
    mean_energy: f64,
    source: &S,
    tolerance: f64,
    max_iterations: usize,
) -> Result<(BetaHat, Option<Root>)> {
    let em = |b: f64| -> Result<f64> { Ok(mean_energy - source.mean_energy_at(b)?) };
    if let Some((lo, hi)) = source.inner_range() {
        let (f_lo, f_hi) = (em(lo)?, em(hi)?);
        if f_lo <= 0.0 && f_hi >= 0.0 {
            let root = bisect(em, lo, hi, f_lo, f_hi, tolerance, max_iterations)?;
            return Ok((BetaHat::Value(root.beta), Some(root)));
        }
    }
    let (lo, hi) = source.beta_range();
    let (f_lo, f_hi) = (em(lo)?, em(hi)?);
    // an exact zero at the edge means <H> has saturated there, e.g. at the ground state
    match (f_lo >= 0.0, f_hi <= 0.0) {
        (true, true) => return Ok((BetaHat::Sentinel { kind: Sentinel::Undetermined, em_sign: 0.0 }, None)),
        (true, false) => return Ok((BetaHat::Sentinel { kind: Sentinel::BelowGrid, em_sign: 1.0 }, None)),
        (false, true) => return Ok((BetaHat::Sentinel { kind: Sentinel::AboveGrid, em_sign: -1.0 }, None)),
        (false, false) => {}
    }
    let root = bisect(em, lo, hi, f_lo, f_hi, tolerance, max_iterations)?;
    Ok((BetaHat::Value(root.beta), Some(root)))
}

/// Maximum-likelihood (energy-matching) estimate with a bootstrap standard error.
pub fn estimate_ml<S: MeanEnergySource + Sync + ?Sized>(
    samples: &SampleSet,
    model: &IsingModel,
    source: &S,
    opts: &MlOptions,
) -> Result<EstimatorReport> {
    samples.check_for_estimation(model)?;
    let energies = samples.energies(model)?;
    let n = energies.len();
    let mean = energies.iter().sum::<f64>() / n as f64;
    let (beta_hat, root) = ml_root(mean, source, opts.tolerance, opts.max_iterations)?;
    let mut report = EstimatorReport::new(EstimatorMethod::Ml, beta_hat);
    if let Some(r) = root {
        report.diagnostics.iterations = r.iterations;
        report.diagnostics.bracket = Some(r.bracket);
        report.diagnostics.em_at_bracket = Some(r.f_bracket);
        report.objective_at_min = Some(0.0);
    }
    if let Some(grid) = source.grid() {
        let values = grid
            .iter()
            .map(|&b| Ok(mean - source.mean_energy_at(b)?))
            .collect::<Result<Vec<_>>>()?;
        report.objective_curve = Some(ObjectiveCurve { betas: grid, values, se: None, label: "em".into() });
    }
    if opts.bootstrap > 0 {
        let roots = (0..opts.bootstrap)
            .into_par_iter()
            .map(|r| {
                let mut rng = tagged(opts.seed, tag::BOOTSTRAP, r as u64);
                let m = (0..n).map(|_| energies[rng.gen_range(0..n)]).sum::<f64>() / n as f64;
                Ok(ml_root(m, source, opts.tolerance, opts.max_iterations)?.0.value())
            })
            .collect::<Result<Vec<_>>>()?;
        let finite: Vec<f64> = roots.iter().flatten().copied().collect();
        report.diagnostics.bootstrap_sentinels = roots.len() - finite.len();
        report.diagnostics.bootstrap_se = std_dev(&finite);
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ModelMeta, SampleMeta};
    use crate::reference::{exact_stats_enumeration, uniform_grid, Enumerator, HybridSource};

    fn single_spin() -> IsingModel {
        IsingModel::new(1, vec![], vec![1.0], ModelMeta::default()).unwrap()
    }

    fn one_up_three_down() -> SampleSet {
        SampleSet::from_flat("", 1, vec![1, -1, -1, -1], SampleMeta::default()).unwrap()
    }

    #[test]
    fn single_spin_inverts_tanh() {
        let m = single_spin();
        let e = Enumerator::new(&m, 28).unwrap();
        let opts = MlOptions { bootstrap: 0, ..MlOptions::default() };
        let r = estimate_ml(&one_up_three_down(), &m, &e, &opts).unwrap();
        let b = r.beta_hat.value().unwrap();
        assert!((b - 0.5f64.atanh()).abs() < 1e-9);
        assert!((b - 0.549306).abs() < 1e-5);
        let (lo, hi) = r.diagnostics.bracket.unwrap();
        assert!(lo <= b && b <= hi && hi - lo <= 1e-6);
    }

    #[test]
    fn sentinels_outside_grid() {
        let m = single_spin();
        let grid = uniform_grid(0.0, 1.0, 0.05).unwrap();
        let r = exact_stats_enumeration(&m, &grid, 28).unwrap();
        let opts = MlOptions { bootstrap: 0, ..MlOptions::default() };
        let cold = SampleSet::from_flat("", 1, vec![-1; 10], SampleMeta::default()).unwrap();
        let hot = SampleSet::from_flat("", 1, vec![1, 1, -1], SampleMeta::default()).unwrap();
        let a = estimate_ml(&cold, &m, &r, &opts).unwrap().beta_hat;
        let b = estimate_ml(&hot, &m, &r, &opts).unwrap().beta_hat;
        assert_eq!(a, BetaHat::Sentinel { kind: Sentinel::AboveGrid, em_sign: -1.0 });
        assert_eq!(b, BetaHat::Sentinel { kind: Sentinel::BelowGrid, em_sign: 1.0 });
        let inside = estimate_ml(&one_up_three_down(), &m, &r, &opts).unwrap();
        assert!((inside.beta_hat.value().unwrap() - 0.5f64.atanh()).abs() < 2e-3);
        assert_eq!(inside.objective_curve.unwrap().betas.len(), grid.len());

        let e = Enumerator::new(&m, 28).unwrap();
        let hybrid = HybridSource { stored: &r, exact: &e };
        let b = estimate_ml(&hot, &m, &hybrid, &opts).unwrap().beta_hat.value().unwrap();
        assert!((b - (-1.0f64 / 3.0).atanh()).abs() < 1e-9);
        let a = estimate_ml(&cold, &m, &hybrid, &opts).unwrap().beta_hat;
        assert_eq!(a.sentinel(), Some(Sentinel::AboveGrid));
        let inside = estimate_ml(&one_up_three_down(), &m, &hybrid, &opts).unwrap();
        assert!((inside.beta_hat.value().unwrap() - 0.5f64.atanh()).abs() < 2e-3);
    }
}
