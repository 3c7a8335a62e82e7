//! Reference statistics on disk as a JSON header plus a CSV table, one row
//! per grid point.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{ReferenceMethod, ReferenceStatistics, StandardErrors};
use crate::error::{Error, Result};
use crate::model::io::write_atomic;

const FORMAT: &str = "betafit-reference";

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
    method: ReferenceMethod,
    instance_hash: String,
    n_spins: usize,
    edges: Vec<(usize, usize)>,
    rows: usize,
    has_log_z: bool,
    has_energy_variance: bool,
    has_standard_errors: bool,
    has_log_z_se: bool,
    notes: String,
}

/// Stable file stem for statistics of one instance, grid and method.
pub fn cache_key(instance_hash: &str, grid: &[f64], method: ReferenceMethod) -> String {
    let mut h = Sha256::new();
    h.update(instance_hash.as_bytes());
    for b in grid {
        h.update(b.to_bits().to_le_bytes());
    }
    h.update(method.as_str().as_bytes());
    let digest = hex::encode(h.finalize());
    format!("ref-{}-{}", method.as_str(), &digest[..16])
}

fn paths(stem: &Path) -> (PathBuf, PathBuf) {
    (stem.with_extension("json"), stem.with_extension("csv"))
}

pub(crate) fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Writes `<stem>.json` and `<stem>.csv`.
pub fn save_reference(stem: &Path, r: &ReferenceStatistics) -> Result<()> {
    r.validate()?;
    let (json_path, csv_path) = paths(stem);
    let se = r.standard_errors.as_ref();
    let header = Header {
        format: FORMAT.into(),
        version: 1,
        method: r.method,
        instance_hash: r.instance_hash.clone(),
        n_spins: r.n_spins,
        edges: r.edges.clone(),
        rows: r.len(),
        has_log_z: r.log_z.is_some(),
        has_energy_variance: r.energy_variance.is_some(),
        has_standard_errors: se.is_some(),
        has_log_z_se: se.is_some_and(|s| s.log_z.is_some()),
        notes: r.notes.clone(),
    };
    let (m, n) = (r.edges.len(), r.n_spins);
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut cols: Vec<String> = ["beta", "mean_energy", "log_z", "energy_variance", "mean_energy_se", "log_z_se"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    cols.extend((0..m).map(|e| format!("corr_{e}")));
    cols.extend((0..m).map(|e| format!("corr_se_{e}")));
    cols.extend((0..n).map(|i| format!("mag_{i}")));
    w.write_record(&cols)?;
    let opt = |v: Option<f64>| v.map(fmt_f64).unwrap_or_default();
    for k in 0..r.len() {
        let mut row = vec![
            fmt_f64(r.beta_grid[k]),
            fmt_f64(r.mean_energy[k]),
            opt(r.log_z.as_ref().map(|z| z[k])),
            opt(r.energy_variance.as_ref().map(|v| v[k])),
            opt(se.map(|s| s.mean_energy[k])),
            opt(se.and_then(|s| s.log_z.as_ref()).map(|z| z[k])),
        ];
        row.extend(r.edge_correlations[k].iter().map(|&c| fmt_f64(c)));
        row.extend((0..m).map(|e| opt(se.map(|s| s.edge_correlations[k][e]))));
        row.extend(r.magnetizations[k].iter().map(|&c| fmt_f64(c)));
        w.write_record(&row)?;
    }
    let table = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    write_atomic(&csv_path, &table)?;
    write_atomic(&json_path, &serde_json::to_vec_pretty(&header)?)?;
    Ok(())
}

/// Reads the pair written by [`save_reference`].
pub fn load_reference(stem: &Path) -> Result<ReferenceStatistics> {
    let (json_path, csv_path) = paths(stem);
    let header: Header = serde_json::from_slice(&std::fs::read(&json_path)?)?;
    if header.format != FORMAT || header.version != 1 {
        return Err(Error::format(&json_path, "not a reference header"));
    }
    let (m, n) = (header.edges.len(), header.n_spins);
    let width = 6 + 2 * m + n;
    let mut rd = csv::Reader::from_path(&csv_path)?;
    let bad = |msg: String| Error::format(&csv_path, msg);
    let mut grid = Vec::new();
    let mut energy = Vec::new();
    let mut log_z = Vec::new();
    let mut var = Vec::new();
    let mut e_se = Vec::new();
    let mut z_se = Vec::new();
    let mut corr = Vec::new();
    let mut c_se = Vec::new();
    let mut mag = Vec::new();
    for (line, rec) in rd.records().enumerate() {
        let rec = rec?;
        if rec.len() != width {
            return Err(bad(format!("row {line} has {} columns, expected {width}", rec.len())));
        }
        let num = |k: usize| -> Result<f64> {
            rec[k].parse().map_err(|_| bad(format!("row {line} column {k}: `{}` is not a number", &rec[k])))
        };
        let maybe = |k: usize, present: bool| -> Result<f64> { if present { num(k) } else { Ok(f64::NAN) } };
        grid.push(num(0)?);
        energy.push(num(1)?);
        log_z.push(maybe(2, header.has_log_z)?);
        var.push(maybe(3, header.has_energy_variance)?);
        e_se.push(maybe(4, header.has_standard_errors)?);
        z_se.push(maybe(5, header.has_log_z_se)?);
        corr.push((6..6 + m).map(num).collect::<Result<Vec<_>>>()?);
        c_se.push((6 + m..6 + 2 * m).map(|k| maybe(k, header.has_standard_errors)).collect::<Result<Vec<_>>>()?);
        mag.push((6 + 2 * m..width).map(num).collect::<Result<Vec<_>>>()?);
    }
    if grid.len() != header.rows {
        return Err(bad(format!("expected {} rows, found {}", header.rows, grid.len())));
    }
    let r = ReferenceStatistics {
        method: header.method,
        instance_hash: header.instance_hash,
        n_spins: n,
        edges: header.edges,
        beta_grid: grid,
        mean_energy: energy,
        edge_correlations: corr,
        magnetizations: mag,
        log_z: header.has_log_z.then_some(log_z),
        energy_variance: header.has_energy_variance.then_some(var),
        standard_errors: header.has_standard_errors.then(|| StandardErrors {
            mean_energy: e_se,
            edge_correlations: c_se,
            log_z: header.has_log_z_se.then_some(z_se),
        }),
        notes: header.notes,
    };
    r.validate()?;
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reference::{exact_stats_enumeration, pt_stats, PtBudget};
    use crate::topology::{build_chimera, gen_ran1, ChimeraSpec};

    #[test]
    fn round_trips_exactly() {
        let g = build_chimera(&ChimeraSpec::square(1)).unwrap();
        let m = gen_ran1(&g, 3);
        let dir = tempfile::tempdir().unwrap();
        let exact = exact_stats_enumeration(&m, &[0.0, 0.5, 1.25], 28).unwrap();
        let stem = dir.path().join(cache_key(&exact.instance_hash, &exact.beta_grid, exact.method));
        save_reference(&stem, &exact).unwrap();
        assert_eq!(load_reference(&stem).unwrap(), exact);

        let budget = PtBudget { n_exchanges: 200, blocks: 10, thermodynamic_integration: true, ..PtBudget::default() };
        let pt = pt_stats(&m, &g.coloring(), &[0.5, 1.0], &budget, 1).unwrap();
        let stem = dir.path().join("pt");
        save_reference(&stem, &pt).unwrap();
        assert_eq!(load_reference(&stem).unwrap(), pt);
    }

    #[test]
    fn keys_depend_on_all_parts() {
        let a = cache_key("abc", &[0.0, 1.0], ReferenceMethod::ExactDp);
        assert_ne!(a, cache_key("abd", &[0.0, 1.0], ReferenceMethod::ExactDp));
        assert_ne!(a, cache_key("abc", &[0.0, 1.5], ReferenceMethod::ExactDp));
        assert_ne!(a, cache_key("abc", &[0.0, 1.0], ReferenceMethod::Pt));
        assert_eq!(a, cache_key("abc", &[0.0, 1.0], ReferenceMethod::ExactDp));
    }
}
