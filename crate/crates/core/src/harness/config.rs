use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::estimators::{EstimatorMethod, MinMseMode, PostprocessMode};
use crate::reference::{ReferenceMethod, DEFAULT_GRID_STEP, DEFAULT_WIDTH_CAP};
use crate::topology::{ChimeraSpec, ProblemClass};

/// Canned experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    RescalingSweep,
    MseScan,
    EstimatorScatter,
}

impl Preset {
    pub fn as_str(self) -> &'static str {
        match self {
            Preset::RescalingSweep => "rescaling-sweep",
            Preset::MseScan => "mse-scan",
            Preset::EstimatorScatter => "estimator-scatter",
        }
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rescaling-sweep" | "rescaling" => Ok(Preset::RescalingSweep),
            "mse-scan" => Ok(Preset::MseScan),
            "estimator-scatter" | "scatter" => Ok(Preset::EstimatorScatter),
            other => Err(Error::Config(format!("unknown preset `{other}`"))),
        }
    }
}

/// Which engine produces reference statistics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReferenceChoice {
    /// Enumeration up to `enumeration_max_spins`, then elimination, then tempering.
    #[default]
    Auto,
    ExactEnum,
    ExactDp,
    Pt,
}

impl From<ReferenceMethod> for ReferenceChoice {
    fn from(m: ReferenceMethod) -> Self {
        match m {
            ReferenceMethod::ExactEnum => ReferenceChoice::ExactEnum,
            ReferenceMethod::ExactDp => ReferenceChoice::ExactDp,
            ReferenceMethod::Pt => ReferenceChoice::Pt,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplerConfig {
    /// Terminal inverse temperature; the class default when unset.
    pub beta_t: Option<f64>,
    /// Anneal lengths in sweeps, one sampler setting each.
    pub sweeps: Vec<usize>,
    /// Multipliers applied to `beta_t`.
    pub fractions: Vec<f64>,
    pub n_samples: usize,
    pub seed: u64,
    /// Adds exact Boltzmann samples at `beta_t` as a control sampler.
    pub exact_control: bool,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            beta_t: None,
            sweeps: vec![2000],
            fractions: vec![1.0],
            n_samples: 10_000,
            seed: 1,
            exact_control: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReferenceConfig {
    pub method: ReferenceChoice,
    pub grid_step: f64,
    /// Upper end of the grid; 1.5 times the largest annealing beta when unset.
    pub grid_max: Option<f64>,
    pub enumeration_max_spins: usize,
    pub width_cap: usize,
    pub pt_exchanges: usize,
    pub pt_seed: u64,
}

impl Default for ReferenceConfig {
    fn default() -> Self {
        ReferenceConfig {
            method: ReferenceChoice::Auto,
            grid_step: DEFAULT_GRID_STEP,
            grid_max: None,
            enumeration_max_spins: 20,
            width_cap: DEFAULT_WIDTH_CAP,
            pt_exchanges: 20_000,
            pt_seed: 17,
        }
    }
}

/// Everything an experiment or pipeline run depends on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub class: ProblemClass,
    pub sizes: Vec<ChimeraSpec>,
    pub n_instances: usize,
    /// Instance `k` of every size uses seed `instance_seed + k`.
    pub instance_seed: u64,
    /// Instance files used instead of generated instances.
    pub instance_files: Vec<PathBuf>,
    pub sampler: SamplerConfig,
    pub reference: ReferenceConfig,
    pub estimators: Vec<EstimatorMethod>,
    pub postprocess: PostprocessMode,
    pub min_mse_mode: MinMseMode,
    pub bootstrap: usize,
    pub estimator_seed: u64,
    pub output: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            class: ProblemClass::Ran1,
            sizes: vec![ChimeraSpec::square(2)],
            n_instances: 10,
            instance_seed: 1000,
            instance_files: Vec::new(),
            sampler: SamplerConfig::default(),
            reference: ReferenceConfig::default(),
            estimators: EstimatorMethod::ALL.to_vec(),
            postprocess: PostprocessMode::Off,
            min_mse_mode: MinMseMode::Global,
            bootstrap: 200,
            estimator_seed: 7,
            output: PathBuf::from("out"),
        }
    }
}

impl ExperimentConfig {
    /// Defaults for a canned experiment at desk scale.
    pub fn preset(p: Preset) -> Self {
        let base = ExperimentConfig::default();
        match p {
            Preset::RescalingSweep => ExperimentConfig {
                sampler: SamplerConfig {
                    fractions: (1..=8).map(|k| k as f64 / 8.0).collect(),
                    ..SamplerConfig::default()
                },
                estimators: vec![EstimatorMethod::Ml, EstimatorMethod::Mlpl],
                ..base
            },
            Preset::MseScan => ExperimentConfig {
                sampler: SamplerConfig { sweeps: vec![2000, 20], ..SamplerConfig::default() },
                estimators: vec![EstimatorMethod::MinMse],
                postprocess: PostprocessMode::Coupled { sweeps: 1 },
                min_mse_mode: MinMseMode::RightmostLocal,
                ..base
            },
            Preset::EstimatorScatter => ExperimentConfig {
                n_instances: 30,
                sampler: SamplerConfig { sweeps: vec![20, 2000], exact_control: true, ..SamplerConfig::default() },
                estimators: vec![EstimatorMethod::Ml, EstimatorMethod::MinMse],
                postprocess: PostprocessMode::Coupled { sweeps: 1 },
                min_mse_mode: MinMseMode::RightmostLocal,
                ..base
            },
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let c: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Sets a dotted key such as `sampler.sweeps` from a TOML value literal.
    /// Bare words that are not valid TOML are taken as strings.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let mut doc = toml::Table::try_from(&*self).map_err(|e| Error::Config(e.to_string()))?;
        let parsed: toml::Value = match toml::from_str::<toml::Table>(&format!("v = {value}")) {
            Ok(mut t) => t.remove("v").expect("key v was just parsed"),
            Err(_) => toml::Value::String(value.to_string()),
        };
        let parts: Vec<&str> = key.split('.').collect();
        let (last, path) = parts.split_last().ok_or_else(|| Error::Config("empty key".into()))?;
        let mut table = &mut doc;
        for p in path {
            table = table
                .entry(p.to_string())
                .or_insert_with(|| toml::Value::Table(toml::Table::new()))
                .as_table_mut()
                .ok_or_else(|| Error::Config(format!("`{p}` in `{key}` is not a table")))?;
        }
        table.insert(last.to_string(), parsed);
        let updated: ExperimentConfig = doc.try_into().map_err(|e: toml::de::Error| Error::Config(format!("{key}: {e}")))?;
        updated.validate()?;
        *self = updated;
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        if self.instance_files.is_empty() && (self.sizes.is_empty() || self.n_instances == 0) {
            return bad("need at least one size and one instance, or instance_files");
        }
        if self.sampler.sweeps.is_empty() && !self.sampler.exact_control {
            return bad("sampler.sweeps is empty");
        }
        if self.sampler.sweeps.contains(&0) {
            return bad("sampler.sweeps entries must be positive");
        }
        if self.sampler.fractions.is_empty() || self.sampler.fractions.iter().any(|f| !(f.is_finite() && *f >= 0.0)) {
            return bad("sampler.fractions must be non-empty and non-negative");
        }
        if self.sampler.n_samples == 0 {
            return bad("sampler.n_samples must be positive");
        }
        if let Some(b) = self.sampler.beta_t {
            if !(b.is_finite() && b >= 0.0) {
                return bad("sampler.beta_t must be a non-negative number");
            }
        }
        if !(self.reference.grid_step.is_finite() && self.reference.grid_step > 0.0) {
            return bad("reference.grid_step must be positive");
        }
        if self.estimators.is_empty() {
            return bad("estimators is empty");
        }
        Ok(())
    }

    pub fn beta_t(&self) -> f64 {
        self.sampler.beta_t.unwrap_or_else(|| self.class.default_beta_t())
    }

    /// SHA-256 of the canonical JSON form, ignoring the output directory.
    pub fn hash(&self) -> String {
        let canonical = ExperimentConfig { output: PathBuf::new(), ..self.clone() };
        let json = serde_json::to_vec(&canonical).expect("config serializes");
        hex::encode(Sha256::digest(&json))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_round_trip_and_defaults() {
        let c = ExperimentConfig::preset(Preset::MseScan);
        let text = c.to_toml().unwrap();
        assert_eq!(ExperimentConfig::from_toml(&text).unwrap(), c);
        let partial = ExperimentConfig::from_toml("class = \"ac3\"\nn_instances = 3\n[sampler]\nsweeps = [40]\n").unwrap();
        assert_eq!(partial.class, ProblemClass::Ac3);
        assert_eq!(partial.sampler.n_samples, 10_000);
        assert_eq!(partial.beta_t(), 4.82);
        assert!(ExperimentConfig::from_toml("nonsense = 1").is_err());
        assert!(ExperimentConfig::from_toml("[sampler]\nsweeps = []").is_err());
    }

    #[test]
    fn dotted_overrides() {
        let mut c = ExperimentConfig::default();
        c.set("sampler.sweeps", "[20, 40]").unwrap();
        c.set("postprocess", "coupled:2").unwrap();
        c.set("reference.method", "exact-dp").unwrap();
        c.set("output", "/tmp/x").unwrap();
        c.set("sampler.beta_t", "2.5").unwrap();
        assert_eq!(c.sampler.sweeps, vec![20, 40]);
        assert_eq!(c.postprocess, PostprocessMode::Coupled { sweeps: 2 });
        assert_eq!(c.reference.method, ReferenceChoice::ExactDp);
        assert_eq!(c.output, PathBuf::from("/tmp/x"));
        assert_eq!(c.beta_t(), 2.5);
        assert!(c.set("sampler.nope", "1").is_err());
        assert!(c.set("n_instances", "\"many\"").is_err());
        let h = c.hash();
        assert_eq!(h, c.clone().hash());
        c.set("sampler.seed", "2").unwrap();
        assert_ne!(h, c.hash());
    }
}
