use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use thiserror::Error;

use super::{Dataset, Provenance};
use crate::domain::{format_number, Diagnosis, FeatureId, FeatureKind, FeatureValue, FeatureValues, PatientRecord};

pub const DATASET_FILE: &str = "patients.csv";
pub const PROVENANCE_FILE: &str = "provenance.json";

#[derive(Debug, Error)]
pub enum CsvError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("line {line}: {msg}")]
    Row { line: u64, msg: String },
    #[error("unexpected header: {0}")]
    Header(String),
}

fn header() -> Vec<&'static str> {
    let mut h = vec!["patient_id"];
    h.extend(FeatureId::CSV_ORDER.iter().map(|f| f.canonical_name()));
    h.push("label");
    h
}

fn cell(v: &FeatureValue) -> String {
    match v {
        FeatureValue::Numeric(x) => format_number(*x),
        FeatureValue::Categorical(c) => c.clone(),
        FeatureValue::Unavailable => String::new(),
    }
}

/// Header row, one row per patient, `\n` line endings.
pub fn write_csv<W: Write>(patients: &[PatientRecord], out: W) -> Result<(), CsvError> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    w.write_record(header())?;
    for p in patients {
        let mut row = Vec::with_capacity(FeatureId::COUNT + 2);
        row.push(p.patient_id.clone());
        for f in FeatureId::CSV_ORDER {
            row.push(cell(p.value(f)));
        }
        row.push(p.gold_label.canonical_name().to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<R: Read>(input: R) -> Result<Vec<PatientRecord>, CsvError> {
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let got: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if got != header() {
        return Err(CsvError::Header(got.join(",")));
    }
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let err = |msg: String| CsvError::Row { line, msg };
        let mut values = FeatureValues::unavailable();
        for (i, f) in FeatureId::CSV_ORDER.into_iter().enumerate() {
            let text = &rec[i + 1];
            let v = if text.is_empty() {
                FeatureValue::Unavailable
            } else {
                match f.kind() {
                    FeatureKind::Categorical => FeatureValue::Categorical(text.to_string()),
                    FeatureKind::Numeric => {
                        FeatureValue::Numeric(text.parse::<f64>().map_err(|_| err(format!("{f}: not a number `{text}`")))?)
                    }
                }
            };
            values.set(f, v);
        }
        let label_text = &rec[FeatureId::COUNT + 1];
        let label = Diagnosis::from_canonical(label_text).ok_or_else(|| err(format!("unknown label `{label_text}`")))?;
        out.push(PatientRecord::new(&rec[0], values, label).map_err(|e| err(e.to_string()))?);
    }
    Ok(out)
}

/// Write `patients.csv` and `provenance.json` into `dir`.
pub fn write_dataset_dir(dataset: &Dataset, dir: &Path) -> Result<(), CsvError> {
    fs::create_dir_all(dir)?;
    let mut buf = Vec::new();
    write_csv(&dataset.patients, &mut buf)?;
    fs::write(dir.join(DATASET_FILE), buf)?;
    let mut prov = serde_json::to_string_pretty(&dataset.provenance)?;
    prov.push('\n');
    fs::write(dir.join(PROVENANCE_FILE), prov)?;
    Ok(())
}

/// Read a dataset from a directory or a CSV file; the provenance sidecar is
/// returned when present next to it.
pub fn read_dataset_dir(path: &Path) -> Result<(Vec<PatientRecord>, Option<Provenance>), CsvError> {
    let (csv_path, prov_path) = if path.is_dir() {
        (path.join(DATASET_FILE), path.join(PROVENANCE_FILE))
    } else {
        (path.to_path_buf(), path.with_file_name(PROVENANCE_FILE))
    };
    let patients = read_csv(fs::File::open(&csv_path)?)?;
    let provenance = if prov_path.exists() { Some(serde_json::from_slice(&fs::read(prov_path)?)?) } else { None };
    Ok((patients, provenance))
}
