//! File formats: records, factor tables, benchmark reports and model files.
//!
//! Records are written with four decimals, enough to hold every simulated
//! value exactly, so emit → load → emit is byte-identical.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bench::{BenchmarkReport, ModelStatus};
use crate::error::{Error, Result};
use crate::factors::FactorTable;
use crate::models::FittedModel;
use crate::record::{MilkingDataset, MilkingRecord, Provenance, Session};
use crate::scalar::Scalar;
use crate::sim::RECORD_DECIMALS;

pub const RECORDS_HEADER: [&str; 6] = ["cow_id", "session", "interval_h", "partial_kg", "daily_kg", "dim"];
pub const FACTORS_HEADER: [&str; 6] = ["session", "bin_lo", "bin_mid", "bin_hi", "kind", "value"];
pub const REPORT_HEADER: [&str; 8] = [
    "model", "status", "variance", "bias_sq", "mse", "accuracy", "sigma2", "message",
];
pub const DIAGNOSTICS_HEADER: [&str; 14] = [
    "model", "session", "intercept", "slope", "correlation", "n", "alpha", "alpha_sd", "beta",
    "beta_sd", "b", "b_sd", "gamma", "gamma_sd",
];

pub const MODEL_FORMAT: &str = "dailyyield-model";
pub const MODEL_VERSION: u32 = 1;

fn fixed<T: Scalar>(v: T) -> String {
    format!("{:.*}", RECORD_DECIMALS as usize, v.as_f64())
}

fn opt_fixed<T: Scalar>(v: Option<T>) -> String {
    v.map(fixed).unwrap_or_default()
}

/// Shortest representation that parses back to the same `f64`.
fn exact<T: Scalar>(v: T) -> String {
    format!("{}", v.as_f64())
}

fn opt_exact<T: Scalar>(v: Option<T>) -> String {
    v.map(exact).unwrap_or_default()
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn write_records<T: Scalar, W: Write>(data: &MilkingDataset<T>, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(RECORDS_HEADER)?;
    for r in &data.records {
        w.write_record([
            r.cow_id.clone(),
            r.session.to_string(),
            fixed(r.interval_h),
            fixed(r.partial_kg),
            opt_fixed(r.daily_kg),
            opt_fixed(r.dim),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_records<T: Scalar>(data: &MilkingDataset<T>, path: &Path) -> Result<()> {
    write_records(data, BufWriter::new(File::create(path)?))
}

/// Parses a records CSV. `daily_kg` and `dim` may be absent as columns or
/// left empty per row; the other four columns are required.
pub fn read_records<T: Scalar>(bytes: &[u8], source: &str) -> Result<MilkingDataset<T>> {
    let parse_err = |line: u64, message: String| Error::Parse {
        path: source.to_string(),
        line,
        message,
    };
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(bytes);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let required = |name: &str| col(name).ok_or_else(|| parse_err(1, format!("missing column `{name}`")));
    let (c_id, c_sess, c_t, c_x) = (
        required("cow_id")?,
        required("session")?,
        required("interval_h")?,
        required("partial_kg")?,
    );
    let (c_y, c_d) = (col("daily_kg"), col("dim"));

    let mut records = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        let field = |c: usize, name: &str| {
            row.get(c)
                .ok_or_else(|| parse_err(line, format!("row has no `{name}` field")))
        };
        let number = |c: usize, name: &str| -> Result<T> {
            let s = field(c, name)?;
            s.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .map(T::lit)
                .ok_or_else(|| parse_err(line, format!("`{name}` is not a number: {s:?}")))
        };
        let optional = |c: Option<usize>, name: &str| -> Result<Option<T>> {
            match c {
                Some(c) if !field(c, name)?.is_empty() => number(c, name).map(Some),
                _ => Ok(None),
            }
        };
        let id = field(c_id, "cow_id")?;
        if id.is_empty() {
            return Err(parse_err(line, "empty cow_id".into()));
        }
        let session: Session = field(c_sess, "session")?
            .parse()
            .map_err(|e: Error| parse_err(line, e.to_string()))?;
        let rec = MilkingRecord {
            cow_id: id.to_string(),
            session,
            interval_h: number(c_t, "interval_h")?,
            partial_kg: number(c_x, "partial_kg")?,
            daily_kg: optional(c_y, "daily_kg")?,
            dim: optional(c_d, "dim")?,
        };
        rec.validate().map_err(|e| parse_err(line, e.to_string()))?;
        records.push(rec);
    }
    if records.is_empty() {
        return Err(parse_err(1, "no data rows".into()));
    }
    Ok(MilkingDataset::new(
        records,
        Provenance::File {
            path: source.to_string(),
            sha256: sha256_hex(bytes),
        },
    ))
}

pub fn load_records<T: Scalar>(path: &Path) -> Result<MilkingDataset<T>> {
    let mut bytes = Vec::new();
    File::open(path)?.read_to_end(&mut bytes)?;
    read_records(&bytes, &path.display().to_string())
}

pub const PREDICTIONS_HEADER: [&str; 6] = ["cow_id", "session", "interval_h", "partial_kg", "daily_kg", "predicted_kg"];

/// Records alongside their estimated daily yields, `estimates[i]` for record `i`.
pub fn write_predictions<T: Scalar, W: Write>(data: &MilkingDataset<T>, estimates: &[T], out: W) -> Result<()> {
    if estimates.len() != data.len() {
        return Err(Error::Usage(format!(
            "{} estimates for {} records",
            estimates.len(),
            data.len()
        )));
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(PREDICTIONS_HEADER)?;
    for (r, &y) in data.records.iter().zip(estimates) {
        w.write_record([
            r.cow_id.clone(),
            r.session.to_string(),
            fixed(r.interval_h),
            fixed(r.partial_kg),
            opt_fixed(r.daily_kg),
            fixed(y),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// One row per session and class; a missing factor leaves `value` empty.
pub fn write_factors<T: Scalar, W: Write>(table: &FactorTable<T>, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(FACTORS_HEADER)?;
    for s in Session::ALL {
        for bin in table.grid.bins() {
            w.write_record([
                s.to_string(),
                exact(bin.lo),
                exact(bin.midpoint),
                exact(bin.hi),
                table.kind.as_str().to_string(),
                opt_exact(table.entries[s.index()][bin.index]),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_report<T: Scalar, W: Write>(report: &BenchmarkReport<T>, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(REPORT_HEADER)?;
    for m in &report.models {
        let (status, message) = match &m.status {
            ModelStatus::Ok => ("ok", String::new()),
            ModelStatus::Failed(msg) => ("failed", msg.clone()),
        };
        let x = m.metrics;
        w.write_record([
            m.id.to_string(),
            status.to_string(),
            opt_exact(x.map(|x| x.variance)),
            opt_exact(x.map(|x| x.bias_sq)),
            opt_exact(x.map(|x| x.mse)),
            opt_exact(x.map(|x| x.r2_accuracy)),
            opt_exact(x.map(|x| x.sigma2)),
            message,
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Per-session regression of true on estimated yield, with the mean and SD of
/// the fitted coefficients over replicates (`alpha` is the session's own).
pub fn write_diagnostics<T: Scalar, W: Write>(report: &BenchmarkReport<T>, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(DIAGNOSTICS_HEADER)?;
    for m in &report.models {
        let Some(diag) = m.diagnostics else { continue };
        let param = |name: &str| m.params.iter().find(|p| p.name == name);
        for d in diag {
            let alpha = param(&format!("alpha_{}", d.session));
            let mut row = vec![
                m.id.to_string(),
                d.session.to_string(),
                exact(d.intercept),
                exact(d.slope),
                exact(d.correlation),
                d.n.to_string(),
            ];
            for p in [alpha, param("beta"), param("b"), param("gamma")] {
                row.push(opt_exact(p.map(|p| p.mean)));
                row.push(opt_exact(p.map(|p| p.sd)));
            }
            w.write_record(row)?;
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct ModelFile<M> {
    format: String,
    version: u32,
    model: M,
}

pub fn model_to_string<T: Scalar>(model: &FittedModel<T>) -> Result<String> {
    let file = ModelFile {
        format: MODEL_FORMAT.to_string(),
        version: MODEL_VERSION,
        model,
    };
    serde_json::to_string_pretty(&file).map_err(|e| Error::ModelFile(e.to_string()))
}

pub fn model_from_str<T: Scalar>(text: &str) -> Result<FittedModel<T>> {
    #[derive(Deserialize)]
    struct Header {
        format: String,
        version: u32,
    }
    let header: Header =
        serde_json::from_str(text).map_err(|e| Error::ModelFile(format!("unreadable model file: {e}")))?;
    if header.format != MODEL_FORMAT {
        return Err(Error::ModelFile(format!("not a model file (format `{}`)", header.format)));
    }
    if header.version != MODEL_VERSION {
        return Err(Error::ModelFile(format!(
            "model file version {} is not supported (expected {MODEL_VERSION})",
            header.version
        )));
    }
    let file: ModelFile<FittedModel<T>> =
        serde_json::from_str(text).map_err(|e| Error::ModelFile(e.to_string()))?;
    Ok(file.model)
}

pub fn save_model<T: Scalar>(model: &FittedModel<T>, path: &Path) -> Result<()> {
    let mut text = model_to_string(model)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

pub fn load_model<T: Scalar>(path: &Path) -> Result<FittedModel<T>> {
    model_from_str(&std::fs::read_to_string(path)?)
}
