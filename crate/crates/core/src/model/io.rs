//! File formats for instances and sample sets.
//!
//! Instances are JSON documents:
//!
//! ```json
//! {"n_spins": 3, "edges": [[0, 1, -1.0], [1, 2, 1.0]], "fields": [[2, 0.5]],
//!  "metadata": {"label": "demo", "generator": "manual", "seed": null}}
//! ```
//!
//! Sample sets come in two flavours sharing one JSON header
//! (`{"model_label", "n_spins", "meta"}`):
//!
//! * CSV: a first line `# betafit-samples <header-json>`, a column header
//!   `s0,...,s{N-1}`, then one row of `1`/`-1` per sample.
//! * Binary: magic `BFSP`, version byte `1`, `u32` spin count, `u64` sample
//!   count, `u32` header length, the header JSON, then one row per sample of
//!   `ceil(N/8)` bytes. Spin `k` is bit `k % 8` (LSB first) of byte `k / 8`; a
//!   set bit means +1 and padding bits are zero. Integers are little-endian.

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Edge, IsingModel, ModelMeta, SampleMeta, SampleSet};
use crate::error::{Error, Result};

const CSV_TAG: &str = "# betafit-samples ";
const BIN_MAGIC: &[u8; 4] = b"BFSP";
const BIN_VERSION: u8 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelDoc {
    pub n_spins: usize,
    pub edges: Vec<(usize, usize, f64)>,
    #[serde(default)]
    pub fields: Vec<(usize, f64)>,
    #[serde(default)]
    pub metadata: ModelMeta,
}

impl TryFrom<ModelDoc> for IsingModel {
    type Error = Error;

    fn try_from(doc: ModelDoc) -> Result<Self> {
        let mut fields = vec![0.0; doc.n_spins];
        for (i, h) in doc.fields {
            if i >= doc.n_spins {
                return Err(Error::IndexOutOfRange { index: i, len: doc.n_spins });
            }
            fields[i] += h;
        }
        let edges = doc
            .edges
            .into_iter()
            .map(|(i, j, weight)| Edge { i, j, weight })
            .collect();
        IsingModel::new(doc.n_spins, edges, fields, doc.metadata)
    }
}

impl From<IsingModel> for ModelDoc {
    fn from(m: IsingModel) -> Self {
        ModelDoc {
            n_spins: m.n_spins,
            edges: m.edges.iter().map(|e| (e.i, e.j, e.weight)).collect(),
            fields: m
                .fields
                .iter()
                .enumerate()
                .filter(|(_, &h)| h != 0.0)
                .map(|(i, &h)| (i, h))
                .collect(),
            metadata: m.meta,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct SampleHeader {
    model_label: String,
    n_spins: usize,
    meta: SampleMeta,
}

/// Writes `bytes` to `path` through a temporary file in the same directory
/// followed by a rename, so readers never observe a half-written file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.flush()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

pub fn write_model(path: &Path, model: &IsingModel) -> Result<()> {
    let json = serde_json::to_vec_pretty(model)?;
    write_atomic(path, &json)
}

pub fn read_model(path: &Path) -> Result<IsingModel> {
    let bytes = fs::read(path)?;
    serde_json::from_slice(&bytes).map_err(|e| Error::format(path, e.to_string()))
}

pub fn samples_to_csv(set: &SampleSet) -> Result<Vec<u8>> {
    let header = SampleHeader {
        model_label: set.model_label.clone(),
        n_spins: set.n_spins(),
        meta: set.meta.clone(),
    };
    let mut out = Vec::with_capacity(set.flat().len() * 3 + 256);
    writeln!(out, "{CSV_TAG}{}", serde_json::to_string(&header)?)?;
    let cols: Vec<String> = (0..set.n_spins()).map(|k| format!("s{k}")).collect();
    writeln!(out, "{}", cols.join(","))?;
    for s in set.states() {
        let row: Vec<&str> = s.iter().map(|&x| if x > 0 { "1" } else { "-1" }).collect();
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(out)
}

pub fn write_samples_csv(path: &Path, set: &SampleSet) -> Result<()> {
    write_atomic(path, &samples_to_csv(set)?)
}

pub fn read_samples_csv(path: &Path) -> Result<SampleSet> {
    let file = fs::File::open(path)?;
    parse_samples_csv(BufReader::new(file), path)
}

fn parse_samples_csv<R: BufRead>(mut reader: R, path: &Path) -> Result<SampleSet> {
    let mut first = String::new();
    reader.read_line(&mut first)?;
    let json = first
        .trim_end()
        .strip_prefix(CSV_TAG)
        .ok_or_else(|| Error::format(path, "missing sample header line"))?;
    let header: SampleHeader = serde_json::from_str(json).map_err(|e| Error::format(path, e.to_string()))?;
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let mut spins = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.len() != header.n_spins {
            return Err(Error::format(
                path,
                format!("row {line} has {} columns, expected {}", rec.len(), header.n_spins),
            ));
        }
        for field in rec.iter() {
            match field.trim() {
                "1" | "+1" => spins.push(1),
                "-1" => spins.push(-1),
                other => return Err(Error::format(path, format!("row {line}: bad spin `{other}`"))),
            }
        }
    }
    if spins.is_empty() {
        return Ok(SampleSet::new(header.model_label, header.n_spins, header.meta));
    }
    SampleSet::from_flat(header.model_label, header.n_spins, spins, header.meta)
}

pub fn samples_to_binary(set: &SampleSet) -> Result<Vec<u8>> {
    let header = serde_json::to_vec(&SampleHeader {
        model_label: set.model_label.clone(),
        n_spins: set.n_spins(),
        meta: set.meta.clone(),
    })?;
    let row_bytes = set.n_spins().div_ceil(8);
    let mut out = Vec::with_capacity(21 + header.len() + row_bytes * set.len());
    out.extend_from_slice(BIN_MAGIC);
    out.push(BIN_VERSION);
    out.extend_from_slice(&(set.n_spins() as u32).to_le_bytes());
    out.extend_from_slice(&(set.len() as u64).to_le_bytes());
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(&header);
    for s in set.states() {
        let mut row = vec![0u8; row_bytes];
        for (k, &x) in s.iter().enumerate() {
            if x > 0 {
                row[k / 8] |= 1 << (k % 8);
            }
        }
        out.extend_from_slice(&row);
    }
    Ok(out)
}

pub fn write_samples_binary(path: &Path, set: &SampleSet) -> Result<()> {
    write_atomic(path, &samples_to_binary(set)?)
}

pub fn read_samples_binary(path: &Path) -> Result<SampleSet> {
    let bytes = fs::read(path)?;
    parse_samples_binary(&bytes, path)
}

fn parse_samples_binary(bytes: &[u8], path: &Path) -> Result<SampleSet> {
    let bad = |msg: &str| Error::format(path, msg);
    if bytes.len() < 21 || &bytes[..4] != BIN_MAGIC {
        return Err(bad("not a binary sample file"));
    }
    if bytes[4] != BIN_VERSION {
        return Err(bad("unsupported binary sample version"));
    }
    let n_spins = u32::from_le_bytes(bytes[5..9].try_into().unwrap()) as usize;
    let n_samples = u64::from_le_bytes(bytes[9..17].try_into().unwrap()) as usize;
    let hlen = u32::from_le_bytes(bytes[17..21].try_into().unwrap()) as usize;
    let body = bytes.get(21..).ok_or_else(|| bad("truncated header"))?;
    let header_bytes = body.get(..hlen).ok_or_else(|| bad("truncated header"))?;
    let header: SampleHeader = serde_json::from_slice(header_bytes).map_err(|e| Error::format(path, e.to_string()))?;
    if header.n_spins != n_spins {
        return Err(bad("spin count in header disagrees with prefix"));
    }
    let rows = &body[hlen..];
    let row_bytes = n_spins.div_ceil(8);
    if rows.len() != row_bytes * n_samples {
        return Err(bad("row payload length does not match sample count"));
    }
    let mut spins = Vec::with_capacity(n_spins * n_samples);
    for row in rows.chunks_exact(row_bytes.max(1)).take(n_samples) {
        for k in 0..n_spins {
            spins.push(if row[k / 8] >> (k % 8) & 1 == 1 { 1 } else { -1 });
        }
    }
    if spins.is_empty() {
        return Ok(SampleSet::new(header.model_label, n_spins, header.meta));
    }
    SampleSet::from_flat(header.model_label, n_spins, spins, header.meta)
}

/// Reads a sample file, detecting binary vs CSV from the leading bytes.
pub fn read_samples(path: &Path) -> Result<SampleSet> {
    let mut head = [0u8; 4];
    let mut f = fs::File::open(path)?;
    let n = f.read(&mut head)?;
    if n == 4 && &head == BIN_MAGIC {
        read_samples_binary(path)
    } else {
        read_samples_csv(path)
    }
}

/// Writes a sample set, choosing binary for `.bin` extensions and CSV otherwise.
pub fn write_samples(path: &Path, set: &SampleSet) -> Result<()> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("bin") => write_samples_binary(path, set),
        _ => write_samples_csv(path, set),
    }
}
