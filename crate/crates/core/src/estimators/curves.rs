use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::jackknife::{block_ranges, entropy_jackknife, JackknifeEstimate, DEFAULT_JACKKNIFE_BLOCKS};
use super::{BetaHat, EstimatorMethod, EstimatorReport, ObjectiveCurve, PostprocessMode};
use crate::error::{Error, Result};
use crate::model::{EmpiricalDistribution, IsingModel, SampleSet};
use crate::reference::ReferenceStatistics;
use crate::sampling::postprocess;
use crate::topology::Coloring;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MinMseMode {
    #[default]
    Global,
    RightmostLocal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CurveObjective {
    Mse,
    Kl,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct MseOptions {
    /// Adds single-spin magnetizations to the averaged terms.
    pub include_magnetizations: bool,
    /// Jackknife blocks for per-point standard errors.
    pub jackknife_blocks: Option<usize>,
}

/// Plug-in KL divergence `D[P_samples, B_beta]` on the reference grid.
#[derive(Debug, Clone, PartialEq)]
pub struct KlCurve {
    pub raw: ObjectiveCurve,
    /// With the jackknife-corrected entropy in place of the plug-in one.
    pub corrected: Option<ObjectiveCurve>,
    pub entropy: f64,
    pub entropy_jackknife: Option<JackknifeEstimate>,
}

/// Empirical moments (edge products, then optionally spins) for one state.
fn moments_into(model: &IsingModel, x: &[i8], mags: bool, out: &mut [f64], weight: f64) {
    let m = model.n_couplings();
    for (o, e) in out.iter_mut().zip(model.edges()) {
        *o += weight * f64::from(x[e.i] * x[e.j]);
    }
    if mags {
        for (o, &s) in out[m..].iter_mut().zip(x) {
            *o += weight * f64::from(s);
        }
    }
}

fn reference_row(reference: &ReferenceStatistics, k: usize, mags: bool) -> Vec<f64> {
    let mut row = reference.edge_correlations[k].clone();
    if mags {
        row.extend_from_slice(&reference.magnetizations[k]);
    }
    row
}

fn mse(emp: &[f64], reference: &[f64]) -> f64 {
    emp.iter().zip(reference).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / emp.len().max(1) as f64
}

fn check_inputs(samples: &SampleSet, model: &IsingModel, reference: &ReferenceStatistics) -> Result<()> {
    samples.check_for_estimation(model)?;
    reference.check_model(model)
}

fn mse_label(opts: &MseOptions) -> String {
    if opts.include_magnetizations { "mse+mag".into() } else { "mse".into() }
}

/// Mean squared error between sample and reference correlations at each grid beta.
pub fn mse_curve(
    samples: &SampleSet,
    model: &IsingModel,
    reference: &ReferenceStatistics,
    opts: &MseOptions,
) -> Result<ObjectiveCurve> {
    check_inputs(samples, model, reference)?;
    let mags = opts.include_magnetizations;
    let dim = model.n_couplings() + if mags { model.n_spins() } else { 0 };
    let n = samples.len();
    let ranges = match opts.jackknife_blocks {
        Some(b) => block_ranges(n, b)?,
        None => vec![0..n],
    };
    let block_sums: Vec<Vec<f64>> = ranges
        .iter()
        .map(|r| {
            let mut acc = vec![0.0; dim];
            for k in r.clone() {
                moments_into(model, samples.state(k), mags, &mut acc, 1.0);
            }
            acc
        })
        .collect();
    let mut total = vec![0.0; dim];
    for b in &block_sums {
        total.iter_mut().zip(b).for_each(|(t, v)| *t += v);
    }
    let emp: Vec<f64> = total.iter().map(|t| t / n as f64).collect();
    let leave_out: Vec<Vec<f64>> = match opts.jackknife_blocks {
        Some(_) => ranges
            .iter()
            .zip(&block_sums)
            .map(|(r, b)| total.iter().zip(b).map(|(t, v)| (t - v) / (n - r.len()) as f64).collect())
            .collect(),
        None => Vec::new(),
    };
    let (values, se): (Vec<f64>, Vec<f64>) = (0..reference.len())
        .map(|k| {
            let row = reference_row(reference, k, mags);
            let full = mse(&emp, &row);
            if leave_out.is_empty() {
                return (full, f64::NAN);
            }
            let outs: Vec<f64> = leave_out.iter().map(|e| mse(e, &row)).collect();
            (full, JackknifeEstimate::assemble(full, &outs, &ranges).se)
        })
        .unzip();
    Ok(ObjectiveCurve {
        betas: reference.beta_grid.clone(),
        values,
        se: opts.jackknife_blocks.map(|_| se),
        label: mse_label(opts),
    })
}

/// MSE curve for a weighted distribution, such as an exact Boltzmann table.
pub fn mse_curve_from_distribution(
    dist: &EmpiricalDistribution,
    model: &IsingModel,
    reference: &ReferenceStatistics,
    opts: &MseOptions,
) -> Result<ObjectiveCurve> {
    reference.check_model(model)?;
    let mags = opts.include_magnetizations;
    let mut emp = vec![0.0; model.n_couplings() + if mags { model.n_spins() } else { 0 }];
    for (x, p) in dist.iter() {
        moments_into(model, x, mags, &mut emp, p);
    }
    let values = (0..reference.len()).map(|k| mse(&emp, &reference_row(reference, k, mags))).collect();
    Ok(ObjectiveCurve { betas: reference.beta_grid.clone(), values, se: None, label: mse_label(opts) })
}

fn kl_values(entropy: f64, mean_energy: f64, reference: &ReferenceStatistics) -> Result<Vec<f64>> {
    let log_z = reference.log_z()?;
    Ok(reference.beta_grid.iter().zip(log_z).map(|(&b, &z)| -entropy + b * mean_energy + z).collect())
}

/// KL curve from the plug-in distribution of `samples`, with a jackknife
/// correction of the entropy term when there are enough samples.
pub fn kl_curve(samples: &SampleSet, model: &IsingModel, reference: &ReferenceStatistics) -> Result<KlCurve> {
    check_inputs(samples, model, reference)?;
    let mean_energy = samples.mean_energy(model)?;
    let jk = match entropy_jackknife(samples, DEFAULT_JACKKNIFE_BLOCKS) {
        Ok(j) => Some(j),
        Err(Error::TooFewSamples { .. }) => None,
        Err(e) => return Err(e),
    };
    let entropy = match jk {
        Some(j) => j.estimate,
        None => samples.empirical().entropy(),
    };
    let raw = kl_values(entropy, mean_energy, reference)?;
    let corrected = jk
        .map(|j| -> Result<ObjectiveCurve> {
            Ok(ObjectiveCurve {
                betas: reference.beta_grid.clone(),
                values: kl_values(j.corrected, mean_energy, reference)?,
                se: Some(vec![j.se; reference.len()]),
                label: "kl-jackknife".into(),
            })
        })
        .transpose()?;
    Ok(KlCurve {
        raw: ObjectiveCurve { betas: reference.beta_grid.clone(), values: raw, se: None, label: "kl".into() },
        corrected,
        entropy,
        entropy_jackknife: jk,
    })
}

/// KL curve of an explicit weighted distribution.
pub fn kl_curve_from_distribution(
    dist: &EmpiricalDistribution,
    model: &IsingModel,
    reference: &ReferenceStatistics,
) -> Result<ObjectiveCurve> {
    reference.check_model(model)?;
    let values = kl_values(dist.entropy(), dist.mean_energy(model)?, reference)?;
    Ok(ObjectiveCurve { betas: reference.beta_grid.clone(), values, se: None, label: "kl".into() })
}

/// Vertex of the parabola through three neighboring grid points, clamped to them.
fn refine(curve: &ObjectiveCurve, k: usize) -> f64 {
    let (b, v) = (&curve.betas, &curve.values);
    if k == 0 || k + 1 >= b.len() {
        return b[k];
    }
    let (x0, x1, x2) = (b[k - 1], b[k], b[k + 1]);
    let (y0, y1, y2) = (v[k - 1], v[k], v[k + 1]);
    let num = (x1 - x0).powi(2) * (y1 - y2) - (x1 - x2).powi(2) * (y1 - y0);
    let den = (x1 - x0) * (y1 - y2) - (x1 - x2) * (y1 - y0);
    if den == 0.0 || !num.is_finite() || !den.is_finite() {
        return x1;
    }
    let vertex = x1 - 0.5 * num / den;
    if vertex.is_finite() { vertex.clamp(x0, x2) } else { x1 }
}

/// Grid index of the chosen minimum and whether the global fallback was used.
fn pick_minimum(curve: &ObjectiveCurve, mode: MinMseMode) -> Result<(usize, bool)> {
    if curve.values.is_empty() || curve.values.len() != curve.betas.len() {
        return Err(Error::InvalidArgument("objective curve is empty or ragged".into()));
    }
    let global = curve.argmin().ok_or_else(|| Error::NonFinite("objective curve has no finite value".into()))?;
    match mode {
        MinMseMode::Global => Ok((global, false)),
        MinMseMode::RightmostLocal => match curve.local_minimum_indices().last() {
            Some(&k) => Ok((k, false)),
            None => Ok((global, true)),
        },
    }
}

fn report_from_curve(
    method: EstimatorMethod,
    curve: &ObjectiveCurve,
    mode: MinMseMode,
) -> Result<(EstimatorReport, usize)> {
    let (k, fell_back) = pick_minimum(curve, mode)?;
    let mut report = EstimatorReport::new(method, BetaHat::Value(refine(curve, k)));
    report.objective_at_min = Some(curve.values[k]);
    report.local_minima = curve.local_minima();
    report.diagnostics.fell_back_to_global = fell_back;
    if k > 0 && k + 1 < curve.betas.len() {
        report.diagnostics.bracket = Some((curve.betas[k - 1], curve.betas[k + 1]));
    } else {
        report.diagnostics.notes.push("minimum at the grid edge".into());
    }
    if let Some(se) = &curve.se {
        report.diagnostics.jackknife_se = Some(se[k]).filter(|s| s.is_finite());
    }
    report.objective_curve = Some(curve.clone());
    Ok((report, k))
}

/// Minimizer of an MSE curve.
pub fn estimate_min_mse(curve: &ObjectiveCurve, mode: MinMseMode) -> Result<EstimatorReport> {
    Ok(report_from_curve(EstimatorMethod::MinMse, curve, mode)?.0)
}

/// Minimizer of the raw KL curve, with the jackknife entropy correction at the minimum.
pub fn estimate_min_kl(kl: &KlCurve) -> Result<EstimatorReport> {
    let (mut report, k) = report_from_curve(EstimatorMethod::MinKl, &kl.raw, MinMseMode::Global)?;
    if let (Some(c), Some(j)) = (&kl.corrected, &kl.entropy_jackknife) {
        report.diagnostics.jackknife_bias = Some(kl.raw.values[k] - c.values[k]);
        report.diagnostics.jackknife_se = Some(j.se);
    }
    Ok(report)
}

/// Objective where each grid beta sees the samples post-processed at that beta.
///
/// The KL variant uses the plain decomposition with the post-processed
/// plug-in entropy, labelled `kl-naive`.
#[allow(clippy::too_many_arguments)]
pub fn curve_with_postprocessing(
    samples: &SampleSet,
    model: &IsingModel,
    reference: &ReferenceStatistics,
    coloring: &Coloring,
    n_sweeps: usize,
    seed: u64,
    objective: CurveObjective,
    opts: &MseOptions,
) -> Result<ObjectiveCurve> {
    check_inputs(samples, model, reference)?;
    if objective == CurveObjective::Kl {
        reference.log_z()?;
    }
    let points = (0..reference.len())
        .into_par_iter()
        .map(|k| -> Result<(f64, f64)> {
            let beta = reference.beta_grid[k];
            let pp = postprocess(samples, model, beta, n_sweeps, coloring, seed)?;
            match objective {
                CurveObjective::Mse => {
                    let one = ReferenceStatistics {
                        beta_grid: vec![beta],
                        mean_energy: vec![reference.mean_energy[k]],
                        edge_correlations: vec![reference.edge_correlations[k].clone()],
                        magnetizations: vec![reference.magnetizations[k].clone()],
                        log_z: None,
                        energy_variance: None,
                        standard_errors: None,
                        ..reference.clone_header()
                    };
                    let c = mse_curve(&pp, model, &one, opts)?;
                    Ok((c.values[0], c.se.map_or(f64::NAN, |s| s[0])))
                }
                CurveObjective::Kl => {
                    let z = reference.log_z()?[k];
                    Ok((-pp.empirical().entropy() + beta * pp.mean_energy(model)? + z, f64::NAN))
                }
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let (values, se): (Vec<f64>, Vec<f64>) = points.into_iter().unzip();
    let label = match objective {
        CurveObjective::Mse => format!("{}-coupled", mse_label(opts)),
        CurveObjective::Kl => "kl-naive-coupled".into(),
    };
    let se = (objective == CurveObjective::Mse && opts.jackknife_blocks.is_some()).then_some(se);
    Ok(ObjectiveCurve { betas: reference.beta_grid.clone(), values, se, label })
}

/// Applies a post-processing mode to raw samples for the point estimators.
///
/// Coupled mode leaves samples untouched here; only the curve methods use it.
pub fn apply_postprocessing(
    samples: &SampleSet,
    model: &IsingModel,
    mode: PostprocessMode,
    coloring: &Coloring,
    seed: u64,
) -> Result<SampleSet> {
    match mode {
        PostprocessMode::Fixed { beta, sweeps } => postprocess(samples, model, beta, sweeps, coloring, seed),
        PostprocessMode::Off | PostprocessMode::Coupled { .. } => Ok(samples.clone()),
    }
}

impl ReferenceStatistics {
    /// Copy with metadata but no rows.
    fn clone_header(&self) -> ReferenceStatistics {
        ReferenceStatistics {
            method: self.method,
            instance_hash: self.instance_hash.clone(),
            n_spins: self.n_spins,
            edges: self.edges.clone(),
            beta_grid: Vec::new(),
            mean_energy: Vec::new(),
            edge_correlations: Vec::new(),
            magnetizations: Vec::new(),
            log_z: None,
            energy_variance: None,
            standard_errors: None,
            notes: self.notes.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::{estimate_ml, MlOptions};
    use crate::model::SampleMeta;
    use crate::reference::{boltzmann_vector, exact_boltzmann_samples, exact_stats_enumeration, uniform_grid};
    use crate::model::SpinState;
    use crate::sampling::{run_sta, AnnealSchedule};
    use crate::topology::{build_chimera, gen_ran1, ChimeraSpec};

    fn curve(values: Vec<f64>) -> ObjectiveCurve {
        let betas = (0..values.len()).map(|k| k as f64 * 0.5).collect();
        ObjectiveCurve { betas, values, se: None, label: String::new() }
    }

    fn small() -> (IsingModel, ReferenceStatistics) {
        let g = build_chimera(&ChimeraSpec::square(1)).unwrap();
        let m = gen_ran1(&g, 11);
        let r = exact_stats_enumeration(&m, &uniform_grid(0.0, 3.0, 0.05).unwrap(), 28).unwrap();
        (m, r)
    }

    fn uniform(n: usize, n_spins: usize, seed: u64) -> SampleSet {
        use rand::Rng;
        let mut rng = crate::rng::substream(seed, 1);
        let flat = (0..n * n_spins).map(|_| if rng.gen::<bool>() { 1 } else { -1 }).collect();
        SampleSet::from_flat("", n_spins, flat, SampleMeta::default()).unwrap()
    }

    #[test]
    fn convex_curve_modes_agree() {
        let c = curve((0..9).map(|k| (k as f64 * 0.5 - 1.7).powi(2)).collect());
        let a = estimate_min_mse(&c, MinMseMode::Global).unwrap();
        let b = estimate_min_mse(&c, MinMseMode::RightmostLocal).unwrap();
        assert!((a.beta_hat.value().unwrap() - 1.7).abs() < 1e-12);
        assert_eq!(a.beta_hat, b.beta_hat);
        assert!(!b.diagnostics.fell_back_to_global);
    }

    #[test]
    fn rightmost_local_picks_second_basin() {
        let c = curve(vec![0.1, 0.4, 0.6, 0.5, 0.3, 0.2, 0.35, 0.5]);
        assert_eq!(estimate_min_mse(&c, MinMseMode::Global).unwrap().beta_hat, BetaHat::Value(0.0));
        let r = estimate_min_mse(&c, MinMseMode::RightmostLocal).unwrap();
        let b = r.beta_hat.value().unwrap();
        assert!((2.0..=3.0).contains(&b), "{b}");
        assert_eq!(r.local_minima, vec![2.5]);
        let mono = curve(vec![0.5, 0.4, 0.3, 0.2]);
        let r = estimate_min_mse(&mono, MinMseMode::RightmostLocal).unwrap();
        assert!(r.diagnostics.fell_back_to_global);
        assert_eq!(r.beta_hat, BetaHat::Value(1.5));
    }

    #[test]
    fn uniform_samples_mse_at_zero() {
        let (m, r) = small();
        let n = 10_000;
        let s = uniform(n, m.n_spins(), 4);
        let c = mse_curve(&s, &m, &r, &MseOptions { jackknife_blocks: Some(100), ..MseOptions::default() }).unwrap();
        let ratio = c.values[0] * n as f64;
        assert!((0.5..2.0).contains(&ratio), "{ratio}");
        assert!(c.se.unwrap().iter().all(|s| s.is_finite() && *s > 0.0));
        let mut twice = s.clone();
        for x in s.states() {
            twice.push(x).unwrap();
        }
        let d = mse_curve(&twice, &m, &r, &MseOptions::default()).unwrap();
        for (a, b) in c.values.iter().zip(&d.values) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn kl_of_exact_table_vanishes_at_truth() {
        let (m, r) = small();
        let k = 40;
        let beta = r.beta_grid[k];
        let probs = boltzmann_vector(&m, beta).unwrap();
        let dist = EmpiricalDistribution::from_weighted(
            m.n_spins(),
            probs.iter().enumerate().map(|(s, &p)| (SpinState::from_bits(s as u64, m.n_spins()).into_inner(), p)),
        )
        .unwrap();
        let c = kl_curve_from_distribution(&dist, &m, &r).unwrap();
        assert_eq!(c.argmin(), Some(k));
        assert!(c.values[k].abs() < 1e-9, "{}", c.values[k]);
        let mse = mse_curve_from_distribution(&dist, &m, &r, &MseOptions::default()).unwrap();
        assert!(mse.values[k] < 1e-20);
    }

    #[test]
    fn kl_argmin_tracks_ml_root() {
        let (m, r) = small();
        let s = exact_boltzmann_samples(&m, 1.3, 5_000, 3, None).unwrap();
        let kl = kl_curve(&s, &m, &r).unwrap();
        let ml = estimate_ml(&s, &m, &r, &MlOptions { bootstrap: 0, ..MlOptions::default() }).unwrap();
        let kl_hat = estimate_min_kl(&kl).unwrap();
        let grid_min = r.beta_grid[kl.raw.argmin().unwrap()];
        assert!((grid_min - ml.beta_hat.value().unwrap()).abs() <= 0.05 + 1e-12);
        assert!((kl_hat.beta_hat.value().unwrap() - ml.beta_hat.value().unwrap()).abs() <= 0.05);
        assert!(kl_hat.diagnostics.jackknife_bias.unwrap() >= 0.0);
    }

    #[test]
    fn coupled_mse_at_zero_is_uniform_noise() {
        let (m, r) = small();
        let g = build_chimera(&ChimeraSpec::square(1)).unwrap();
        let s = run_sta(&m, &AnnealSchedule::linear(3.0, 20).unwrap(), 10_000, &g.coloring(), 8).unwrap();
        let c = curve_with_postprocessing(&s, &m, &r, &g.coloring(), 1, 21, CurveObjective::Mse, &MseOptions::default())
            .unwrap();
        let ratio = c.values[0] * s.len() as f64;
        assert!((0.5..2.0).contains(&ratio), "{ratio}");
        assert_eq!(c.label, "mse-coupled");
        let kl = curve_with_postprocessing(&s, &m, &r, &g.coloring(), 1, 21, CurveObjective::Kl, &MseOptions::default())
            .unwrap();
        assert_eq!(kl.label, "kl-naive-coupled");
    }
}
