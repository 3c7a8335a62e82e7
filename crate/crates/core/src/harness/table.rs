use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{BetaHat, EstimatorReport};
use crate::model::io::write_atomic;
use crate::reference::fmt_f64;

/// One estimate for one sample set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub instance_id: String,
    pub size: String,
    pub instance_seed: u64,
    pub sampler: String,
    pub sampler_seed: u64,
    pub beta_t: f64,
    pub fraction: f64,
    pub method: String,
    pub beta_hat: Option<f64>,
    pub sentinel: Option<String>,
    pub objective: Option<f64>,
    pub se: Option<f64>,
    pub bias: Option<f64>,
    pub postprocess: String,
}

impl ResultRow {
    pub fn beta(&self) -> BetaHat {
        match (&self.beta_hat, &self.sentinel) {
            (Some(b), _) => BetaHat::Value(*b),
            (None, Some(s)) => BetaHat::Sentinel { kind: parse_sentinel(s), em_sign: 0.0 },
            (None, None) => BetaHat::Sentinel { kind: crate::estimators::Sentinel::Undetermined, em_sign: 0.0 },
        }
    }

    pub(crate) fn fill_estimate(&mut self, r: &EstimatorReport) {
        self.method = r.method.as_str().into();
        self.beta_hat = r.beta_hat.value();
        self.sentinel = r.beta_hat.sentinel().map(|s| s.as_str().to_string());
        self.objective = r.objective_at_min;
        self.se = r.diagnostics.bootstrap_se.or(r.diagnostics.jackknife_se);
        self.bias = r.diagnostics.jackknife_bias;
    }
}

fn parse_sentinel(s: &str) -> crate::estimators::Sentinel {
    use crate::estimators::Sentinel::*;
    match s {
        "below-grid" => BelowGrid,
        "above-grid" => AboveGrid,
        "+inf" => PlusInfinity,
        "-inf" => MinusInfinity,
        _ => Undetermined,
    }
}

/// One estimator result without instance bookkeeping, as written by the CLI.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimateRow {
    pub method: String,
    pub beta_hat: Option<f64>,
    pub objective_at_min: Option<f64>,
    pub se: Option<f64>,
    pub bias: Option<f64>,
    pub sentinel: Option<String>,
    pub postprocess: String,
}

impl From<&EstimatorReport> for EstimateRow {
    fn from(r: &EstimatorReport) -> Self {
        EstimateRow {
            method: r.method.as_str().into(),
            beta_hat: r.beta_hat.value(),
            objective_at_min: r.objective_at_min,
            se: r.diagnostics.bootstrap_se.or(r.diagnostics.jackknife_se),
            bias: r.diagnostics.jackknife_bias,
            sentinel: r.beta_hat.sentinel().map(|s| s.as_str().to_string()),
            postprocess: r.postprocessed.tag(),
        }
    }
}

/// One point of an objective curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub instance_id: String,
    pub size: String,
    pub sampler: String,
    pub sampler_seed: u64,
    pub postprocess: String,
    pub objective: String,
    pub beta: f64,
    pub value: f64,
    pub se: Option<f64>,
}

/// Paired point estimates for one sample set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScatterRow {
    pub instance_id: String,
    pub size: String,
    pub sampler: String,
    pub sampler_seed: u64,
    pub postprocess: String,
    pub beta_min_mse: Option<f64>,
    pub beta_ml: Option<f64>,
    pub ml_sentinel: Option<String>,
    pub mse_at_min: Option<f64>,
}

/// Quartiles with linear interpolation between order statistics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quartiles {
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub n: usize,
}

impl Quartiles {
    /// NaN entries are dropped; infinities sort to the ends. Interpolating
    /// toward an infinite neighbor yields that infinity.
    pub fn of(values: &[f64]) -> Option<Self> {
        let mut v: Vec<f64> = values.iter().copied().filter(|x| !x.is_nan()).collect();
        if v.is_empty() {
            return None;
        }
        v.sort_by(f64::total_cmp);
        let q = |p: f64| {
            let h = p * (v.len() - 1) as f64;
            let (lo, hi) = (h.floor() as usize, h.ceil() as usize);
            let t = h - lo as f64;
            if lo == hi || v[lo] == v[hi] {
                v[lo]
            } else if v[lo].is_infinite() && v[hi].is_infinite() {
                if t <= 0.5 { v[lo] } else { v[hi] }
            } else if v[lo].is_infinite() {
                v[lo]
            } else if v[hi].is_infinite() {
                v[hi]
            } else {
                v[lo] + t * (v[hi] - v[lo])
            }
        };
        Some(Quartiles { q1: q(0.25), median: q(0.5), q3: q(0.75), n: v.len() })
    }
}

/// Quartiles of beta-hat over instances for one group of settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuartileRow {
    pub size: String,
    pub sampler: String,
    pub fraction: f64,
    pub beta_t: f64,
    pub method: String,
    pub postprocess: String,
    pub n_sentinel: usize,
    pub quartiles: Option<Quartiles>,
}

/// Groups rows by (size, sampler, fraction, method, post-processing) and
/// takes quartiles of beta-hat with sentinels at the matching infinity.
pub fn aggregate(rows: &[ResultRow]) -> Vec<QuartileRow> {
    let mut sorted: Vec<&ResultRow> = rows.iter().collect();
    sorted.sort_by(|a, b| a.instance_id.cmp(&b.instance_id));
    let mut groups: BTreeMap<(String, String, u64, String, String), (f64, Vec<f64>, usize)> = BTreeMap::new();
    for r in sorted {
        let key = (r.size.clone(), r.sampler.clone(), r.fraction.to_bits(), r.method.clone(), r.postprocess.clone());
        let g = groups.entry(key).or_insert((r.beta_t, Vec::new(), 0));
        let b = r.beta();
        g.1.push(b.sort_key());
        g.2 += usize::from(b.value().is_none());
    }
    let mut out: Vec<QuartileRow> = groups
        .into_iter()
        .map(|((size, sampler, fraction, method, postprocess), (beta_t, values, n_sentinel))| QuartileRow {
            size,
            sampler,
            fraction: f64::from_bits(fraction),
            beta_t,
            method,
            postprocess,
            n_sentinel,
            quartiles: Quartiles::of(&values),
        })
        .collect();
    out.sort_by(|a, b| {
        (&a.size, &a.sampler, &a.method, &a.postprocess)
            .cmp(&(&b.size, &b.sampler, &b.method, &b.postprocess))
            .then(a.fraction.total_cmp(&b.fraction))
    });
    out
}

fn opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

fn opt_s(v: &Option<String>) -> String {
    v.clone().unwrap_or_default()
}

/// Serializes rows with a fixed header; floats keep 17 significant digits.
pub trait CsvTable {
    const HEADER: &'static [&'static str];
    fn cells(&self) -> Vec<String>;
}

impl CsvTable for ResultRow {
    const HEADER: &'static [&'static str] = &[
        "instance_id", "size", "instance_seed", "sampler", "sampler_seed", "beta_t", "fraction", "method", "beta_hat",
        "sentinel", "objective", "se", "bias", "postprocess",
    ];

    fn cells(&self) -> Vec<String> {
        vec![
            self.instance_id.clone(),
            self.size.clone(),
            self.instance_seed.to_string(),
            self.sampler.clone(),
            self.sampler_seed.to_string(),
            fmt_f64(self.beta_t),
            fmt_f64(self.fraction),
            self.method.clone(),
            opt(self.beta_hat),
            opt_s(&self.sentinel),
            opt(self.objective),
            opt(self.se),
            opt(self.bias),
            self.postprocess.clone(),
        ]
    }
}

impl CsvTable for EstimateRow {
    const HEADER: &'static [&'static str] =
        &["method", "beta_hat", "objective_at_min", "se", "bias", "sentinel_flag", "postprocess"];

    fn cells(&self) -> Vec<String> {
        vec![
            self.method.clone(),
            opt(self.beta_hat),
            opt(self.objective_at_min),
            opt(self.se),
            opt(self.bias),
            opt_s(&self.sentinel),
            self.postprocess.clone(),
        ]
    }
}

impl CsvTable for CurveRow {
    const HEADER: &'static [&'static str] =
        &["instance_id", "size", "sampler", "sampler_seed", "postprocess", "objective", "beta", "value", "se"];

    fn cells(&self) -> Vec<String> {
        vec![
            self.instance_id.clone(),
            self.size.clone(),
            self.sampler.clone(),
            self.sampler_seed.to_string(),
            self.postprocess.clone(),
            self.objective.clone(),
            fmt_f64(self.beta),
            fmt_f64(self.value),
            opt(self.se),
        ]
    }
}

impl CsvTable for ScatterRow {
    const HEADER: &'static [&'static str] = &[
        "instance_id", "size", "sampler", "sampler_seed", "postprocess", "beta_min_mse", "beta_ml", "ml_sentinel",
        "mse_at_min",
    ];

    fn cells(&self) -> Vec<String> {
        vec![
            self.instance_id.clone(),
            self.size.clone(),
            self.sampler.clone(),
            self.sampler_seed.to_string(),
            self.postprocess.clone(),
            opt(self.beta_min_mse),
            opt(self.beta_ml),
            opt_s(&self.ml_sentinel),
            opt(self.mse_at_min),
        ]
    }
}

impl CsvTable for QuartileRow {
    const HEADER: &'static [&'static str] =
        &["size", "sampler", "fraction", "beta_t", "method", "postprocess", "n", "n_sentinel", "q1", "median", "q3"];

    fn cells(&self) -> Vec<String> {
        let q = self.quartiles;
        vec![
            self.size.clone(),
            self.sampler.clone(),
            fmt_f64(self.fraction),
            fmt_f64(self.beta_t),
            self.method.clone(),
            self.postprocess.clone(),
            q.map_or(0, |q| q.n).to_string(),
            self.n_sentinel.to_string(),
            opt(q.map(|q| q.q1)),
            opt(q.map(|q| q.median)),
            opt(q.map(|q| q.q3)),
        ]
    }
}

pub fn to_csv<T: CsvTable>(rows: &[T]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(T::HEADER)?;
    for r in rows {
        w.write_record(r.cells())?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

/// Writes the table through a temporary file and a rename.
pub fn write_csv<T: CsvTable>(path: &Path, rows: &[T]) -> Result<()> {
    write_atomic(path, &to_csv(rows)?)
}

/// Reads back the estimates table written by [`write_csv`].
pub fn read_result_rows(path: &Path) -> Result<Vec<ResultRow>> {
    let mut rd = csv::Reader::from_path(path)?;
    let bad = |m: String| Error::format(path, m);
    if rd.headers()?.iter().ne(ResultRow::HEADER.iter().copied()) {
        return Err(bad("unexpected header".into()));
    }
    let mut rows = Vec::new();
    for rec in rd.records() {
        let rec = rec?;
        let f = |k: usize| -> Result<f64> { rec[k].parse().map_err(|_| bad(format!("`{}` is not a number", &rec[k]))) };
        let of = |k: usize| -> Result<Option<f64>> { if rec[k].is_empty() { Ok(None) } else { f(k).map(Some) } };
        let os = |k: usize| Some(rec[k].to_string()).filter(|s| !s.is_empty());
        let u = |k: usize| -> Result<u64> { rec[k].parse().map_err(|_| bad(format!("`{}` is not an integer", &rec[k]))) };
        rows.push(ResultRow {
            instance_id: rec[0].into(),
            size: rec[1].into(),
            instance_seed: u(2)?,
            sampler: rec[3].into(),
            sampler_seed: u(4)?,
            beta_t: f(5)?,
            fraction: f(6)?,
            method: rec[7].into(),
            beta_hat: of(8)?,
            sentinel: os(9),
            objective: of(10)?,
            se: of(11)?,
            bias: of(12)?,
            postprocess: rec[13].into(),
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(id: &str, beta: Option<f64>, sentinel: Option<&str>) -> ResultRow {
        ResultRow {
            instance_id: id.into(),
            size: "C2".into(),
            instance_seed: 1,
            sampler: "sta-20".into(),
            sampler_seed: 2,
            beta_t: 3.54,
            fraction: 1.0,
            method: "ml".into(),
            beta_hat: beta,
            sentinel: sentinel.map(String::from),
            objective: Some(0.1),
            se: None,
            bias: None,
            postprocess: "off".into(),
        }
    }

    #[test]
    fn quartiles_interpolate() {
        let q = Quartiles::of(&[4.0, 1.0, 3.0, 2.0, f64::NAN]).unwrap();
        assert_eq!((q.q1, q.median, q.q3, q.n), (1.75, 2.5, 3.25, 4));
        let q = Quartiles::of(&[1.0, f64::INFINITY, 2.0]).unwrap();
        assert_eq!(q.median, 2.0);
        assert_eq!(q.q3, f64::INFINITY);
        assert!(Quartiles::of(&[]).is_none());
    }

    #[test]
    fn aggregation_counts_sentinels() {
        let rows = vec![row("b", Some(1.0), None), row("a", Some(3.0), None), row("c", None, Some("above-grid"))];
        let agg = aggregate(&rows);
        assert_eq!(agg.len(), 1);
        assert_eq!(agg[0].n_sentinel, 1);
        assert_eq!(agg[0].quartiles.unwrap().median, 3.0);
    }

    #[test]
    fn csv_round_trip() {
        let rows = vec![row("a", Some(0.1 + 0.2), None), row("b", None, Some("+inf"))];
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.csv");
        write_csv(&p, &rows).unwrap();
        assert_eq!(read_result_rows(&p).unwrap(), rows);
    }
}
