//! Boltzmann reference statistics: mean energy, edge correlations and log Z
//! on a grid of inverse temperatures.
//!
//! Three engines produce them. Enumeration sums all `2^N` states, bucket
//! elimination handles larger graphs of small treewidth, and parallel
//! tempering estimates everything else with standard errors.

mod cache;
mod elimination;
mod enumerate;
mod exact;
mod tempering;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use cache::{cache_key, load_reference, save_reference};
pub(crate) use cache::fmt_f64;
pub use elimination::{column_sweep_order, exact_stats_dp, min_fill_order, EliminationPlan, DEFAULT_WIDTH_CAP};
pub use enumerate::{exact_stats_enumeration, Enumerator, PointStats, DEFAULT_ENUMERATION_CAP};
pub use exact::{
    boltzmann_vector, exact_boltzmann_samples, kl_divergence, propagate_sweep, sample_from_distribution,
    total_variation,
};
pub use tempering::{pt_stats, PtBudget};

use crate::error::{Error, Result};
use crate::model::IsingModel;

/// Exact engines serving as mean-energy sources search `[-EXACT_BETA_MAX, EXACT_BETA_MAX]`.
pub const EXACT_BETA_MAX: f64 = 50.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ReferenceMethod {
    #[serde(rename = "exact-enum")]
    ExactEnum,
    #[serde(rename = "exact-dp")]
    ExactDp,
    #[serde(rename = "pt")]
    Pt,
}

impl ReferenceMethod {
    pub fn is_exact(self) -> bool {
        !matches!(self, ReferenceMethod::Pt)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ReferenceMethod::ExactEnum => "exact-enum",
            ReferenceMethod::ExactDp => "exact-dp",
            ReferenceMethod::Pt => "pt",
        }
    }
}

impl fmt::Display for ReferenceMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ReferenceMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "exact-enum" | "enum" | "enumeration" => Ok(ReferenceMethod::ExactEnum),
            "exact-dp" | "dp" => Ok(ReferenceMethod::ExactDp),
            "pt" => Ok(ReferenceMethod::Pt),
            other => Err(Error::InvalidArgument(format!("unknown reference method `{other}`"))),
        }
    }
}

/// Standard errors of estimated statistics, aligned with the grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardErrors {
    pub mean_energy: Vec<f64>,
    pub edge_correlations: Vec<Vec<f64>>,
    pub log_z: Option<Vec<f64>>,
}

/// Statistics of the Boltzmann family `B_beta` at each grid point.
///
/// Correlations are indexed `[grid point][edge]` in the model's edge order.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceStatistics {
    pub method: ReferenceMethod,
    pub instance_hash: String,
    pub n_spins: usize,
    pub edges: Vec<(usize, usize)>,
    pub beta_grid: Vec<f64>,
    pub mean_energy: Vec<f64>,
    pub edge_correlations: Vec<Vec<f64>>,
    pub magnetizations: Vec<Vec<f64>>,
    pub log_z: Option<Vec<f64>>,
    /// `Var(H)` where the engine provides it.
    pub energy_variance: Option<Vec<f64>>,
    pub standard_errors: Option<StandardErrors>,
    /// Free-form provenance, such as how the mean energy was obtained.
    pub notes: String,
}

/// Reference values at one inverse temperature.
#[derive(Debug, Clone, PartialEq)]
pub struct Interpolated {
    pub beta: f64,
    pub mean_energy: f64,
    pub edge_correlations: Vec<f64>,
    pub magnetizations: Vec<f64>,
    pub log_z: Option<f64>,
}

impl ReferenceStatistics {
    pub fn len(&self) -> usize {
        self.beta_grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.beta_grid.is_empty()
    }

    pub fn beta_range(&self) -> (f64, f64) {
        (self.beta_grid[0], *self.beta_grid.last().unwrap())
    }

    pub fn log_z(&self) -> Result<&[f64]> {
        self.log_z.as_deref().ok_or(Error::LogZUnavailable)
    }

    /// Checks that the statistics were computed for `model`'s edge set.
    pub fn check_model(&self, model: &IsingModel) -> Result<()> {
        if self.n_spins != model.n_spins() {
            return Err(Error::EdgeMismatch(format!(
                "reference has {} spins, model has {}",
                self.n_spins,
                model.n_spins()
            )));
        }
        let same = self.edges.len() == model.n_couplings()
            && self.edges.iter().zip(model.edges()).all(|(&(i, j), e)| i == e.i && j == e.j);
        if !same {
            return Err(Error::EdgeMismatch("reference edge list differs from the model".into()));
        }
        Ok(())
    }

    pub(crate) fn validate(&self) -> Result<()> {
        let g = self.beta_grid.len();
        if g == 0 {
            return Err(Error::InvalidArgument("reference grid is empty".into()));
        }
        if self.beta_grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidArgument("reference grid must be strictly increasing".into()));
        }
        let m = self.edges.len();
        let ok = self.mean_energy.len() == g
            && self.edge_correlations.len() == g
            && self.edge_correlations.iter().all(|c| c.len() == m)
            && self.magnetizations.len() == g
            && self.magnetizations.iter().all(|c| c.len() == self.n_spins)
            && self.log_z.as_ref().is_none_or(|z| z.len() == g)
            && self.energy_variance.as_ref().is_none_or(|v| v.len() == g);
        if !ok {
            return Err(Error::InvalidArgument("reference arrays do not match the grid".into()));
        }
        Ok(())
    }

    /// Values at `beta`, linear in energy and correlations between grid points.
    ///
    /// log Z integrates the interpolated energy from the grid point below, so
    /// `d log Z / d beta = -<H>` holds on every segment.
    pub fn interpolate(&self, beta: f64) -> Result<Interpolated> {
        let (lo, hi) = self.beta_range();
        if !(beta >= lo && beta <= hi) {
            return Err(Error::Extrapolation { beta, lo, hi });
        }
        let g = &self.beta_grid;
        let k = match g.binary_search_by(|b| b.total_cmp(&beta)) {
            Ok(k) => {
                return Ok(Interpolated {
                    beta,
                    mean_energy: self.mean_energy[k],
                    edge_correlations: self.edge_correlations[k].clone(),
                    magnetizations: self.magnetizations[k].clone(),
                    log_z: self.log_z.as_ref().map(|z| z[k]),
                })
            }
            Err(k) => k - 1,
        };
        let t = (beta - g[k]) / (g[k + 1] - g[k]);
        let lerp = |a: f64, b: f64| a + t * (b - a);
        let mean_energy = lerp(self.mean_energy[k], self.mean_energy[k + 1]);
        let mix = |rows: &[Vec<f64>]| rows[k].iter().zip(&rows[k + 1]).map(|(&a, &b)| lerp(a, b)).collect();
        Ok(Interpolated {
            beta,
            mean_energy,
            edge_correlations: mix(&self.edge_correlations),
            magnetizations: mix(&self.magnetizations),
            log_z: self
                .log_z
                .as_ref()
                .map(|z| z[k] - (beta - g[k]) * (self.mean_energy[k] + mean_energy) / 2.0),
        })
    }
}

/// Free-function form of [`ReferenceStatistics::interpolate`].
pub fn interpolate_reference(reference: &ReferenceStatistics, beta: f64) -> Result<Interpolated> {
    reference.interpolate(beta)
}

/// Anything that can report `<H>_beta` over a bracket of betas.
pub trait MeanEnergySource {
    fn beta_range(&self) -> (f64, f64);
    fn mean_energy_at(&self, beta: f64) -> Result<f64>;

    /// Grid points where values are stored, for sources that have one.
    fn grid(&self) -> Option<Vec<f64>> {
        None
    }

    /// A cheaper sub-bracket to try before the full range.
    fn inner_range(&self) -> Option<(f64, f64)> {
        None
    }
}

/// Stored statistics inside the grid hull, an exact engine outside it.
pub struct HybridSource<'a, E: MeanEnergySource + ?Sized> {
    pub stored: &'a ReferenceStatistics,
    pub exact: &'a E,
}

impl<E: MeanEnergySource + ?Sized> MeanEnergySource for HybridSource<'_, E> {
    fn beta_range(&self) -> (f64, f64) {
        let (a, b) = self.exact.beta_range();
        let (c, d) = self.stored.beta_range();
        (a.min(c), b.max(d))
    }

    fn mean_energy_at(&self, beta: f64) -> Result<f64> {
        let (lo, hi) = self.stored.beta_range();
        if beta >= lo && beta <= hi {
            self.stored.mean_energy_at(beta)
        } else {
            self.exact.mean_energy_at(beta)
        }
    }

    fn grid(&self) -> Option<Vec<f64>> {
        Some(self.stored.beta_grid.clone())
    }

    fn inner_range(&self) -> Option<(f64, f64)> {
        Some(self.stored.beta_range())
    }
}

impl MeanEnergySource for ReferenceStatistics {
    fn beta_range(&self) -> (f64, f64) {
        ReferenceStatistics::beta_range(self)
    }

    fn mean_energy_at(&self, beta: f64) -> Result<f64> {
        Ok(self.interpolate(beta)?.mean_energy)
    }

    fn grid(&self) -> Option<Vec<f64>> {
        Some(self.beta_grid.clone())
    }
}

/// `0, step, 2 step, ...` up to `hi`, with `hi` appended if the steps miss it.
pub fn uniform_grid(lo: f64, hi: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0 && lo.is_finite() && hi.is_finite() && hi >= lo && lo >= 0.0) {
        return Err(Error::InvalidArgument(format!("bad grid [{lo}, {hi}] step {step}")));
    }
    let n = ((hi - lo) / step + 1e-9).floor() as usize;
    let mut grid: Vec<f64> = (0..=n).map(|k| lo + k as f64 * step).collect();
    let last = grid.last_mut().unwrap();
    if hi - *last > 1e-9 * step {
        grid.push(hi);
    } else {
        *last = hi;
    }
    Ok(grid)
}

pub const DEFAULT_GRID_STEP: f64 = 0.05;

/// `0` to `1.5 beta_t` in steps of 0.05.
pub fn default_beta_grid(beta_t: f64) -> Result<Vec<f64>> {
    uniform_grid(0.0, 1.5 * beta_t, DEFAULT_GRID_STEP)
}

pub(crate) fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::InvalidArgument("beta grid is empty".into()));
    }
    if grid.iter().any(|b| !b.is_finite() || *b < 0.0) {
        return Err(Error::InvalidArgument("grid betas must be finite and non-negative".into()));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument("beta grid must be strictly increasing".into()));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single_spin_reference(grid: Vec<f64>) -> ReferenceStatistics {
        ReferenceStatistics {
            method: ReferenceMethod::ExactEnum,
            instance_hash: String::new(),
            n_spins: 1,
            edges: vec![],
            mean_energy: grid.iter().map(|b| -b.tanh()).collect(),
            edge_correlations: vec![vec![]; grid.len()],
            magnetizations: grid.iter().map(|b| vec![-b.tanh()]).collect(),
            log_z: Some(grid.iter().map(|b| (2.0 * b.cosh()).ln()).collect()),
            energy_variance: None,
            standard_errors: None,
            notes: String::new(),
            beta_grid: grid,
        }
    }

    #[test]
    fn grids() {
        let g = default_beta_grid(3.54).unwrap();
        assert_eq!(g[0], 0.0);
        assert_eq!(*g.last().unwrap(), 1.5 * 3.54);
        assert!((g[1] - 0.05).abs() < 1e-15);
        assert!(g.windows(2).all(|w| w[1] > w[0] && w[1] - w[0] <= 0.05 + 1e-12));
        assert_eq!(uniform_grid(0.0, 1.0, 0.25).unwrap(), vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        assert!(uniform_grid(1.0, 0.0, 0.1).is_err());
        assert!(check_grid(&[0.0, 0.0]).is_err());
    }

    #[test]
    fn interpolation_matches_closed_form() {
        let r = single_spin_reference(uniform_grid(0.0, 3.0, 0.05).unwrap());
        r.validate().unwrap();
        let at = r.interpolate(r.beta_grid[7]).unwrap();
        assert_eq!(at.mean_energy, r.mean_energy[7]);
        assert_eq!(at.log_z, Some(r.log_z.as_ref().unwrap()[7]));
        for k in 0..r.len() - 1 {
            let mid = (r.beta_grid[k] + r.beta_grid[k + 1]) / 2.0;
            let v = r.interpolate(mid).unwrap();
            assert!((v.mean_energy + mid.tanh()).abs() < 1e-3);
            assert!((v.log_z.unwrap() - (2.0 * mid.cosh()).ln()).abs() < 1e-3);
        }
        let fine: Vec<f64> = (0..=600).map(|k| k as f64 * 0.005).collect();
        let e: Vec<f64> = fine.iter().map(|&b| r.interpolate(b).unwrap().mean_energy).collect();
        assert!(e.windows(2).all(|w| w[1] <= w[0]));
        assert!(matches!(r.interpolate(3.1), Err(Error::Extrapolation { .. })));
        assert!(r.interpolate(-0.1).is_err());
    }


    #[test]
    fn method_names_round_trip() {
        for m in [ReferenceMethod::ExactEnum, ReferenceMethod::ExactDp, ReferenceMethod::Pt] {
            assert_eq!(m.as_str().parse::<ReferenceMethod>().unwrap(), m);
        }
    }
}
