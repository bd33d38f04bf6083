//! CSV datasets, proximity files and other on-disk artifacts.

use std::collections::BTreeSet;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use ndarray::{Array2, ArrayView2};

use crate::data::{CovariateKind, CovariateSpec, Schema, SurvivalDataset};
use crate::error::{Error, Result};
use crate::profile::ProfileResult;
use crate::simgen::GeneratedDataset;
use crate::survival::km_estimate;

pub const PROXIMITY_MAGIC: &[u8; 8] = b"DRSFPRX1";

/// Non-numeric columns with at most this many distinct values are read as
/// categorical.
pub const MAX_INFERRED_LEVELS: usize = 10;

const MANDATORY: [&str; 3] = ["time", "event", "treatment"];

fn csv_err(row: usize, column: &str, message: impl Into<String>) -> Error {
    Error::Csv {
        row,
        column: column.to_string(),
        message: message.into(),
    }
}

/// Reads a dataset. Columns `time`, `event` and `treatment` are required,
/// `id` is optional, every other column is a covariate. Covariates named
/// in `declared` take that kind; the rest are inferred. Rows are numbered
/// from 1, not counting the header.
pub fn ingest_csv(path: impl AsRef<Path>, declared: Option<&Schema>) -> Result<SurvivalDataset> {
    let file = fs::File::open(path.as_ref())?;
    read_csv(file, declared)
}

pub fn read_csv<R: Read>(reader: R, declared: Option<&Schema>) -> Result<SurvivalDataset> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers: Vec<String> = rdr
        .headers()
        .map_err(|e| csv_err(0, "", format!("unreadable header: {}", e)))?
        .iter()
        .map(str::to_string)
        .collect();
    if headers.is_empty() || headers.iter().all(|h| h.is_empty()) {
        return Err(csv_err(0, "", "missing header row"));
    }
    let mut seen = BTreeSet::new();
    for h in &headers {
        if !seen.insert(h.as_str()) {
            return Err(csv_err(0, h, "duplicate column"));
        }
    }
    let col = |name: &str| headers.iter().position(|h| h == name);
    let mut mandatory = [0usize; 3];
    for (k, name) in MANDATORY.iter().enumerate() {
        mandatory[k] = col(name).ok_or_else(|| csv_err(0, name, "missing mandatory column"))?;
    }
    let id_col = col("id");
    let cov_cols: Vec<usize> = (0..headers.len())
        .filter(|&c| Some(c) != id_col && !mandatory.contains(&c))
        .collect();
    if let Some(schema) = declared {
        for spec in &schema.covariates {
            if !cov_cols.iter().any(|&c| headers[c] == spec.name) {
                return Err(csv_err(0, &spec.name, "declared covariate is missing"));
            }
        }
    }

    let mut cells: Vec<Vec<String>> = Vec::new();
    for (r, rec) in rdr.records().enumerate() {
        let row = r + 1;
        let rec = rec.map_err(|e| csv_err(row, "", e.to_string()))?;
        if rec.len() != headers.len() {
            return Err(csv_err(row, "", format!("expected {} fields, found {}", headers.len(), rec.len())));
        }
        cells.push(rec.iter().map(str::to_string).collect());
    }
    if cells.is_empty() {
        return Err(Error::EmptyDataset);
    }

    let mut time = Vec::with_capacity(cells.len());
    let mut event = Vec::with_capacity(cells.len());
    let mut treatment = Vec::with_capacity(cells.len());
    let mut ids = Vec::with_capacity(cells.len());
    for (r, rec) in cells.iter().enumerate() {
        let row = r + 1;
        let t_raw = &rec[mandatory[0]];
        let t: f64 = t_raw
            .parse()
            .map_err(|_| csv_err(row, "time", format!("cannot parse {:?} as a number", t_raw)))?;
        if !t.is_finite() || t < 0.0 {
            return Err(csv_err(row, "time", format!("time must be finite and non-negative, got {}", t_raw)));
        }
        time.push(t);
        event.push(parse_flag(&rec[mandatory[1]]).ok_or_else(|| {
            csv_err(row, "event", format!("expected 0 or 1, got {:?}", rec[mandatory[1]]))
        })?);
        treatment.push(u8::from(parse_flag(&rec[mandatory[2]]).ok_or_else(|| {
            csv_err(row, "treatment", format!("expected 0 or 1, got {:?}", rec[mandatory[2]]))
        })?));
        ids.push(match id_col {
            Some(c) => rec[c].clone(),
            None => row.to_string(),
        });
    }

    let mut specs = Vec::with_capacity(cov_cols.len());
    let mut x = Array2::zeros((cells.len(), cov_cols.len()));
    for (j, &c) in cov_cols.iter().enumerate() {
        let name = &headers[c];
        for (r, rec) in cells.iter().enumerate() {
            if rec[c].is_empty() {
                return Err(csv_err(r + 1, name, "missing value"));
            }
        }
        let hint = declared.and_then(|s| s.covariates.iter().find(|spec| &spec.name == name));
        let kind = match hint {
            Some(spec) => spec.kind.clone(),
            None => infer_kind(&cells, c, name)?,
        };
        for (r, rec) in cells.iter().enumerate() {
            let raw = &rec[c];
            x[[r, j]] = match &kind {
                CovariateKind::Numeric => {
                    let v: f64 = raw
                        .parse()
                        .map_err(|_| csv_err(r + 1, name, format!("cannot parse {:?} as a number", raw)))?;
                    if !v.is_finite() {
                        return Err(csv_err(r + 1, name, "value is not finite"));
                    }
                    v
                }
                CovariateKind::Categorical { levels } => levels
                    .iter()
                    .position(|l| l == raw)
                    .ok_or_else(|| csv_err(r + 1, name, format!("unknown level {:?}", raw)))?
                    as f64,
            };
        }
        specs.push(CovariateSpec {
            name: name.clone(),
            kind,
        });
    }
    SurvivalDataset::with_ids(ids, time, event, treatment, x, Schema { covariates: specs })
}

fn parse_flag(s: &str) -> Option<bool> {
    match s {
        "0" => Some(false),
        "1" => Some(true),
        _ => None,
    }
}

fn infer_kind(cells: &[Vec<String>], c: usize, name: &str) -> Result<CovariateKind> {
    if cells.iter().all(|r| r[c].parse::<f64>().is_ok_and(f64::is_finite)) {
        return Ok(CovariateKind::Numeric);
    }
    let levels: BTreeSet<&str> = cells.iter().map(|r| r[c].as_str()).collect();
    if levels.len() <= MAX_INFERRED_LEVELS {
        return Ok(CovariateKind::Categorical {
            levels: levels.into_iter().map(str::to_string).collect(),
        });
    }
    let (r, raw) = cells
        .iter()
        .enumerate()
        .find(|(_, r)| r[c].parse::<f64>().is_err())
        .map(|(i, r)| (i + 1, r[c].clone()))
        .unwrap_or((1, String::new()));
    Err(csv_err(
        r,
        name,
        format!("cannot parse {:?} as a number and the column has more than {} distinct values", raw, MAX_INFERRED_LEVELS),
    ))
}

/// CSV in the ingest layout; numbers use the shortest exact representation
/// and categorical levels are written by name.
pub fn dataset_to_csv(data: &SurvivalDataset) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["id".to_string(), "time".into(), "event".into(), "treatment".into()];
    header.extend(data.schema().covariates.iter().map(|c| c.name.clone()));
    w.write_record(&header).map_err(csv_write)?;
    let x = data.covariates();
    for i in 0..data.n() {
        let mut rec = vec![
            data.ids()[i].clone(),
            format!("{}", data.times()[i]),
            u8::from(data.events()[i]).to_string(),
            data.treatments()[i].to_string(),
        ];
        for j in 0..data.p() {
            rec.push(match data.schema().kind(j) {
                CovariateKind::Numeric => format!("{}", x[[i, j]]),
                CovariateKind::Categorical { levels } => levels[x[[i, j]] as usize].clone(),
            });
        }
        w.write_record(&rec).map_err(csv_write)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::invalid(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::invalid(e.to_string()))
}

fn csv_write(e: csv::Error) -> Error {
    Error::invalid(format!("csv write: {}", e))
}

pub fn write_dataset_csv(path: impl AsRef<Path>, data: &SurvivalDataset) -> Result<()> {
    fs::write(path, dataset_to_csv(data)?)?;
    Ok(())
}

/// Latent truth per row: `id,region,event_time,censor_time`.
pub fn truth_to_csv(g: &GeneratedDataset) -> String {
    let mut out = String::from("id,region,event_time,censor_time\n");
    for i in 0..g.dataset.n() {
        out.push_str(&format!(
            "{},{},{},{}\n",
            g.dataset.ids()[i],
            g.region[i].as_str(),
            g.event_time[i],
            g.censor_time[i]
        ));
    }
    out
}

/// Magic, rows and columns as u64, then row-major f64, all little-endian.
pub fn proximity_to_bytes(m: ArrayView2<f64>) -> Vec<u8> {
    let mut out = Vec::with_capacity(24 + 8 * m.len());
    out.extend_from_slice(PROXIMITY_MAGIC);
    out.extend_from_slice(&(m.nrows() as u64).to_le_bytes());
    out.extend_from_slice(&(m.ncols() as u64).to_le_bytes());
    for v in m.iter() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn proximity_from_bytes(bytes: &[u8]) -> Result<Array2<f64>> {
    if bytes.len() < 24 || &bytes[..8] != PROXIMITY_MAGIC {
        return Err(Error::invalid("not a proximity file (bad magic)"));
    }
    let rows = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
    let cols = u64::from_le_bytes(bytes[16..24].try_into().expect("8 bytes")) as usize;
    let expect = rows
        .checked_mul(cols)
        .and_then(|c| c.checked_mul(8))
        .and_then(|c| c.checked_add(24))
        .ok_or_else(|| Error::invalid("proximity dimensions overflow"))?;
    if bytes.len() != expect {
        return Err(Error::invalid(format!("proximity file has {} bytes, expected {}", bytes.len(), expect)));
    }
    let values: Vec<f64> = bytes[24..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    Array2::from_shape_vec((rows, cols), values).map_err(|e| Error::invalid(e.to_string()))
}

pub fn write_proximity(path: impl AsRef<Path>, m: ArrayView2<f64>) -> Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(&proximity_to_bytes(m))?;
    Ok(())
}

pub fn read_proximity(path: impl AsRef<Path>) -> Result<Array2<f64>> {
    proximity_from_bytes(&fs::read(path)?)
}

/// Dense CSV, no header, shortest exact number representation.
pub fn proximity_to_csv(m: ArrayView2<f64>) -> String {
    let mut out = String::new();
    for row in m.rows() {
        let cells: Vec<String> = row.iter().map(|v| format!("{}", v)).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

/// Kaplan-Meier steps per leaf and arm: `leaf,arm,time,at_risk,events,survival`.
pub fn km_curves_csv(data: &SurvivalDataset, profile: &ProfileResult) -> Result<String> {
    let mut out = String::from("leaf,arm,time,at_risk,events,survival\n");
    for leaf in 0..profile.num_leaves {
        for arm in 0..2u8 {
            let rows: Vec<usize> = (0..data.n())
                .filter(|&i| profile.leaf_ids[i] == leaf && data.treatments()[i] == arm)
                .collect();
            if rows.is_empty() {
                continue;
            }
            let t: Vec<f64> = rows.iter().map(|&i| data.times()[i]).collect();
            let e: Vec<bool> = rows.iter().map(|&i| data.events()[i]).collect();
            let km = km_estimate(&t, &e)?;
            out.push_str(&format!("{},{},0,{},0,1\n", leaf, arm, rows.len()));
            for s in &km.steps {
                out.push_str(&format!("{},{},{},{},{},{:.6}\n", leaf, arm, s.time, s.at_risk, s.events, s.survival));
            }
        }
    }
    Ok(out)
}
