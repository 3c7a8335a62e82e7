//! Inverse-temperature estimators: energy matching (ML), pseudo-likelihood
//! (MLPL), minimum correlation MSE and minimum KL divergence.

mod curves;
mod jackknife;
mod ml;
mod mlpl;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use curves::{
    apply_postprocessing, curve_with_postprocessing, estimate_min_kl, estimate_min_mse, kl_curve,
    kl_curve_from_distribution, mse_curve, mse_curve_from_distribution, CurveObjective, KlCurve, MinMseMode, MseOptions,
};
pub use jackknife::{entropy_jackknife, jackknife_bias_correct, JackknifeEstimate, DEFAULT_JACKKNIFE_BLOCKS};
pub use ml::{estimate_ml, ml_root, MlOptions};
pub use mlpl::{estimate_mlpl, LocalFieldHistogram, MlplOptions};

use crate::error::{Error, Result};

pub const DEFAULT_TOLERANCE: f64 = 1e-6;
pub const DEFAULT_MAX_ITERATIONS: usize = 200;
pub const DEFAULT_BOOTSTRAP: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EstimatorMethod {
    #[serde(rename = "ml")]
    Ml,
    #[serde(rename = "mlpl")]
    Mlpl,
    #[serde(rename = "min-mse")]
    MinMse,
    #[serde(rename = "min-kl")]
    MinKl,
}

impl EstimatorMethod {
    pub const ALL: [EstimatorMethod; 4] =
        [EstimatorMethod::Ml, EstimatorMethod::Mlpl, EstimatorMethod::MinMse, EstimatorMethod::MinKl];

    pub fn as_str(self) -> &'static str {
        match self {
            EstimatorMethod::Ml => "ml",
            EstimatorMethod::Mlpl => "mlpl",
            EstimatorMethod::MinMse => "min-mse",
            EstimatorMethod::MinKl => "min-kl",
        }
    }
}

impl fmt::Display for EstimatorMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EstimatorMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ml" => Ok(EstimatorMethod::Ml),
            "mlpl" => Ok(EstimatorMethod::Mlpl),
            "min-mse" | "mse" => Ok(EstimatorMethod::MinMse),
            "min-kl" | "kl" => Ok(EstimatorMethod::MinKl),
            other => Err(Error::InvalidArgument(format!("unknown estimator `{other}`"))),
        }
    }
}

/// Why an estimate has no finite value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Sentinel {
    /// Samples are hotter than the lowest searchable beta.
    BelowGrid,
    /// Samples are colder than the highest searchable beta.
    AboveGrid,
    PlusInfinity,
    MinusInfinity,
    /// The objective is flat in beta.
    Undetermined,
}

impl Sentinel {
    pub fn as_str(self) -> &'static str {
        match self {
            Sentinel::BelowGrid => "below-grid",
            Sentinel::AboveGrid => "above-grid",
            Sentinel::PlusInfinity => "+inf",
            Sentinel::MinusInfinity => "-inf",
            Sentinel::Undetermined => "undetermined",
        }
    }
}

/// A point estimate or a tagged reason for its absence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BetaHat {
    Value(f64),
    /// `em_sign` is the sign of the estimating equation at the violated bracket edge.
    Sentinel { kind: Sentinel, em_sign: f64 },
}

impl BetaHat {
    pub fn value(&self) -> Option<f64> {
        match *self {
            BetaHat::Value(b) => Some(b),
            BetaHat::Sentinel { .. } => None,
        }
    }

    pub fn sentinel(&self) -> Option<Sentinel> {
        match *self {
            BetaHat::Value(_) => None,
            BetaHat::Sentinel { kind, .. } => Some(kind),
        }
    }

    /// Orders sentinels at the matching end of the real line, for medians.
    pub fn sort_key(&self) -> f64 {
        match *self {
            BetaHat::Value(b) => b,
            BetaHat::Sentinel { kind: Sentinel::AboveGrid | Sentinel::PlusInfinity, .. } => f64::INFINITY,
            BetaHat::Sentinel { kind: Sentinel::BelowGrid | Sentinel::MinusInfinity, .. } => f64::NEG_INFINITY,
            BetaHat::Sentinel { kind: Sentinel::Undetermined, .. } => f64::NAN,
        }
    }
}

impl fmt::Display for BetaHat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BetaHat::Value(b) => write!(f, "{b}"),
            BetaHat::Sentinel { kind, .. } => f.write_str(kind.as_str()),
        }
    }
}

/// How samples were post-processed before estimation.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum PostprocessMode {
    #[default]
    Off,
    /// One post-processing pass at a fixed beta.
    Fixed { beta: f64, sweeps: usize },
    /// Each grid beta evaluated on samples post-processed at that beta.
    Coupled { sweeps: usize },
}

impl PostprocessMode {
    pub fn tag(&self) -> String {
        match self {
            PostprocessMode::Off => "off".into(),
            PostprocessMode::Fixed { beta, sweeps } => format!("fixed:{beta}:{sweeps}"),
            PostprocessMode::Coupled { sweeps } => format!("coupled:{sweeps}"),
        }
    }
}

impl From<PostprocessMode> for String {
    fn from(m: PostprocessMode) -> String {
        m.tag()
    }
}

impl TryFrom<String> for PostprocessMode {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl FromStr for PostprocessMode {
    type Err = Error;

    /// `off`, `coupled`, `coupled:<sweeps>`, `fixed:<beta>` or `fixed:<beta>:<sweeps>`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidArgument(format!("bad post-processing mode `{s}`"));
        let parts: Vec<&str> = s.split(':').collect();
        let sweeps = |p: Option<&&str>| p.map_or(Ok(1), |v| v.parse::<usize>().map_err(|_| bad()));
        match parts[0] {
            "off" if parts.len() == 1 => Ok(PostprocessMode::Off),
            "coupled" if parts.len() <= 2 => Ok(PostprocessMode::Coupled { sweeps: sweeps(parts.get(1))? }),
            "fixed" if (2..=3).contains(&parts.len()) => Ok(PostprocessMode::Fixed {
                beta: parts[1].parse().map_err(|_| bad())?,
                sweeps: sweeps(parts.get(2))?,
            }),
            _ => Err(bad()),
        }
    }
}

/// An objective evaluated on a strictly increasing beta grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveCurve {
    pub betas: Vec<f64>,
    pub values: Vec<f64>,
    pub se: Option<Vec<f64>>,
    pub label: String,
}

impl ObjectiveCurve {
    /// Interior grid betas whose value is below both neighbors.
    pub fn local_minima(&self) -> Vec<f64> {
        self.local_minimum_indices().into_iter().map(|k| self.betas[k]).collect()
    }

    pub(crate) fn local_minimum_indices(&self) -> Vec<usize> {
        let v = &self.values;
        (1..v.len().saturating_sub(1)).filter(|&k| v[k] < v[k - 1] && v[k] < v[k + 1]).collect()
    }

    pub fn argmin(&self) -> Option<usize> {
        self.values
            .iter()
            .enumerate()
            .filter(|(_, v)| !v.is_nan())
            .min_by(|a, b| a.1.total_cmp(b.1))
            .map(|(k, _)| k)
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Diagnostics {
    pub iterations: usize,
    pub bracket: Option<(f64, f64)>,
    /// Estimating equation at the bracket endpoints.
    pub em_at_bracket: Option<(f64, f64)>,
    pub bootstrap_se: Option<f64>,
    /// Resamples whose estimate was a sentinel and so left out of the SE.
    pub bootstrap_sentinels: usize,
    pub jackknife_bias: Option<f64>,
    pub jackknife_se: Option<f64>,
    /// Rightmost-local search found no interior minimum and used the global one.
    pub fell_back_to_global: bool,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorReport {
    pub method: EstimatorMethod,
    pub beta_hat: BetaHat,
    pub objective_at_min: Option<f64>,
    pub objective_curve: Option<ObjectiveCurve>,
    pub local_minima: Vec<f64>,
    pub diagnostics: Diagnostics,
    pub postprocessed: PostprocessMode,
}

impl EstimatorReport {
    pub(crate) fn new(method: EstimatorMethod, beta_hat: BetaHat) -> Self {
        EstimatorReport {
            method,
            beta_hat,
            objective_at_min: None,
            objective_curve: None,
            local_minima: Vec::new(),
            diagnostics: Diagnostics::default(),
            postprocessed: PostprocessMode::Off,
        }
    }
}

/// Root of a non-decreasing function bracketed by `f(lo) <= 0 <= f(hi)`.
#[derive(Debug, Clone, Copy)]
pub struct Root {
    pub beta: f64,
    pub iterations: usize,
    pub bracket: (f64, f64),
    pub f_bracket: (f64, f64),
}

/// Bisection down to `tol`, finished by a secant step inside the last bracket.
pub(crate) fn bisect(
    f: impl Fn(f64) -> Result<f64>,
    mut lo: f64,
    mut hi: f64,
    mut f_lo: f64,
    mut f_hi: f64,
    tol: f64,
    max_iter: usize,
) -> Result<Root> {
    debug_assert!(f_lo <= 0.0 && f_hi >= 0.0);
    let mut iterations = 0;
    while hi - lo > tol && iterations < max_iter {
        let mid = 0.5 * (lo + hi);
        let fm = f(mid)?;
        iterations += 1;
        if fm == 0.0 {
            return Ok(Root { beta: mid, iterations, bracket: (lo, hi), f_bracket: (f_lo, f_hi) });
        }
        if fm < 0.0 {
            lo = mid;
            f_lo = fm;
        } else {
            hi = mid;
            f_hi = fm;
        }
    }
    let beta = if f_hi > f_lo { lo - f_lo * (hi - lo) / (f_hi - f_lo) } else { 0.5 * (lo + hi) };
    Ok(Root { beta: beta.clamp(lo, hi), iterations, bracket: (lo, hi), f_bracket: (f_lo, f_hi) })
}

/// Sample standard deviation, `None` below two values.
pub(crate) fn std_dev(xs: &[f64]) -> Option<f64> {
    if xs.len() < 2 {
        return None;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    Some((xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bisection_finds_roots() {
        let f = |b: f64| Ok(b.powi(3) - 2.0);
        let r = bisect(f, 0.0, 10.0, -2.0, 998.0, 1e-6, 200).unwrap();
        assert!((r.beta - 2f64.cbrt()).abs() < 1e-9);
        assert!(r.bracket.1 - r.bracket.0 <= 1e-6);
        assert!(r.f_bracket.0 <= 0.0 && r.f_bracket.1 >= 0.0);
        let capped = bisect(f, 0.0, 10.0, -2.0, 998.0, 1e-12, 5).unwrap();
        assert_eq!(capped.iterations, 5);
    }

    #[test]
    fn curve_minima() {
        let c = ObjectiveCurve {
            betas: vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0],
            values: vec![0.1, 0.5, 0.2, 0.6, 0.3, 0.4],
            se: None,
            label: String::new(),
        };
        assert_eq!(c.local_minima(), vec![2.0, 4.0]);
        assert_eq!(c.argmin(), Some(0));
    }

    #[test]
    fn parse_modes_and_methods() {
        assert_eq!("off".parse::<PostprocessMode>().unwrap(), PostprocessMode::Off);
        assert_eq!("coupled".parse::<PostprocessMode>().unwrap(), PostprocessMode::Coupled { sweeps: 1 });
        assert_eq!(
            "fixed:2.5:3".parse::<PostprocessMode>().unwrap(),
            PostprocessMode::Fixed { beta: 2.5, sweeps: 3 }
        );
        assert!("fixed".parse::<PostprocessMode>().is_err());
        for m in [PostprocessMode::Off, PostprocessMode::Coupled { sweeps: 4 }, PostprocessMode::Fixed { beta: 0.1, sweeps: 2 }] {
            assert_eq!(m.tag().parse::<PostprocessMode>().unwrap(), m);
            let json = serde_json::to_string(&m).unwrap();
            assert_eq!(serde_json::from_str::<PostprocessMode>(&json).unwrap(), m);
        }
        for m in EstimatorMethod::ALL {
            assert_eq!(m.as_str().parse::<EstimatorMethod>().unwrap(), m);
        }
        let s = BetaHat::Sentinel { kind: Sentinel::AboveGrid, em_sign: -1.0 };
        assert_eq!(s.sort_key(), f64::INFINITY);
        assert_eq!(s.value(), None);
        assert_eq!(s.to_string(), "above-grid");
    }
}
