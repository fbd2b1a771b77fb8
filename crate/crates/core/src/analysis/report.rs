use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::errors::ErrorKind;
use super::metrics::{accuracy, f1_scores, roc_auc, MetricError};
use crate::domain::{Diagnosis, PatientRecord, Transcript};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ReportError {
    #[error("no patient record for transcript {0}")]
    UnknownPatient(String),
    #[error(transparent)]
    Metric(#[from] MetricError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub policy: String,
    pub n_patients: usize,
    pub accuracy: f64,
    pub f1_macro: f64,
    pub f1_per_class: BTreeMap<Diagnosis, f64>,
    pub roc_auc_macro: f64,
    pub roc_auc_per_class: BTreeMap<Diagnosis, f64>,
    /// Classes without both positives and negatives among the gold labels.
    pub roc_auc_excluded: Vec<Diagnosis>,
    pub mean_pathway_length: f64,
    pub total_wall_time_ms: u64,
    /// Episodes ending without a diagnosis.
    pub failures: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error_taxonomy: Option<BTreeMap<ErrorKind, usize>>,
}

/// Metrics from predictions, gold labels and pathway lengths.
pub fn report_from_labels(
    policy: &str,
    predictions: &[Option<Diagnosis>],
    golds: &[Diagnosis],
    lengths: &[usize],
    wall_ms: u64,
) -> Result<RunReport, ReportError> {
    let f1 = f1_scores(predictions, golds, &Diagnosis::ALL)?;
    let auc = roc_auc(predictions, golds, &Diagnosis::ALL)?;
    Ok(RunReport {
        policy: policy.to_string(),
        n_patients: golds.len(),
        accuracy: accuracy(predictions, golds)?,
        f1_macro: f1.macro_avg,
        f1_per_class: f1.per_class.into_iter().collect(),
        roc_auc_macro: auc.macro_avg,
        roc_auc_per_class: auc.per_class.into_iter().collect(),
        roc_auc_excluded: auc.excluded,
        mean_pathway_length: lengths.iter().sum::<usize>() as f64 / lengths.len().max(1) as f64,
        total_wall_time_ms: wall_ms,
        failures: predictions.iter().filter(|p| p.is_none()).count(),
        error_taxonomy: None,
    })
}

/// Report for transcripts matched to patients by id.
pub fn build_report(
    policy: &str,
    transcripts: &[Transcript],
    patients: &[PatientRecord],
    wall_ms: u64,
) -> Result<RunReport, ReportError> {
    let by_id: HashMap<&str, &PatientRecord> = patients.iter().map(|p| (p.patient_id.as_str(), p)).collect();
    let mut golds = Vec::with_capacity(transcripts.len());
    for t in transcripts {
        let p = by_id.get(t.patient_id.as_str()).ok_or_else(|| ReportError::UnknownPatient(t.patient_id.clone()))?;
        golds.push(p.gold_label);
    }
    let preds: Vec<Option<Diagnosis>> = transcripts.iter().map(|t| t.outcome.diagnosis()).collect();
    let lengths: Vec<usize> = transcripts.iter().map(|t| t.outcome.len()).collect();
    report_from_labels(policy, &preds, &golds, &lengths, wall_ms)
}

/// Half-away-from-zero rounding to two places, at least one decimal shown.
pub fn format_metric(v: f64) -> String {
    let r = (v * 100.0).round() / 100.0;
    let mut s = format!("{r:.2}");
    if s.ends_with('0') {
        s.pop();
    }
    s
}

/// `1m 2.3s`, or `4.5s` under a minute.
pub fn format_duration_ms(ms: u64) -> String {
    let tenths = (ms + 50) / 100;
    let (m, t) = (tenths / 600, tenths % 600);
    if m == 0 {
        format!("{}.{}s", t / 10, t % 10)
    } else {
        format!("{m}m {}.{}s", t / 10, t % 10)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub name: String,
    pub accuracy: f64,
    pub f1: f64,
    pub roc_auc: f64,
    pub avg_length: Option<f64>,
    pub time_ms: Option<u64>,
}

impl TableRow {
    pub fn from_report(r: &RunReport, with_length: bool) -> Self {
        TableRow {
            name: r.policy.clone(),
            accuracy: r.accuracy,
            f1: r.f1_macro,
            roc_auc: r.roc_auc_macro,
            avg_length: with_length.then_some(r.mean_pathway_length),
            time_ms: Some(r.total_wall_time_ms),
        }
    }
}

/// Aligned table: Policy, Accuracy, F1-Score, ROC-AUC, [Avg. Length,] Time.
pub fn render_table(rows: &[TableRow]) -> String {
    let with_length = rows.iter().any(|r| r.avg_length.is_some());
    let mut header = vec!["Policy", "Accuracy", "F1-Score", "ROC-AUC"];
    if with_length {
        header.push("Avg. Length");
    }
    header.push("Time");
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            let mut cells = vec![r.name.clone(), format_metric(r.accuracy), format_metric(r.f1), format_metric(r.roc_auc)];
            if with_length {
                cells.push(r.avg_length.map_or("-".into(), format_metric));
            }
            cells.push(r.time_ms.map_or("-".into(), format_duration_ms));
            cells
        })
        .collect();
    let widths: Vec<usize> =
        (0..header.len()).map(|i| body.iter().map(|row| row[i].len()).chain([header[i].len()]).max().unwrap()).collect();
    let line = |cells: &[String]| {
        let padded: Vec<String> = cells
            .iter()
            .enumerate()
            .map(|(i, c)| if i == 0 { format!("{c:<w$}", w = widths[i]) } else { format!("{c:>w$}", w = widths[i]) })
            .collect();
        padded.join(" | ").trim_end().to_string()
    };
    let mut out = vec![line(&header.iter().map(|s| s.to_string()).collect::<Vec<_>>())];
    out.push(widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>().join("-|-"));
    out.extend(body.iter().map(|r| line(r)));
    out.join("\n") + "\n"
}

/// Table followed by per-class scores and, if present, error counts.
pub fn render_report_text(r: &RunReport) -> String {
    let mut out = render_table(&[TableRow::from_report(r, true)]);
    out.push_str(&format!("\nPatients: {}  Failed episodes: {}\n\nPer class       F1   ROC-AUC\n", r.n_patients, r.failures));
    for d in Diagnosis::ALL {
        let f1 = r.f1_per_class.get(&d).map_or("-".into(), |v| format_metric(*v));
        let auc = r.roc_auc_per_class.get(&d).map_or("n/a".into(), |v| format_metric(*v));
        out.push_str(&format!("{:<38} {f1:>6} {auc:>8}\n", d.display_name()));
    }
    if let Some(tax) = &r.error_taxonomy {
        out.push_str("\nErrors\n");
        for (k, n) in tax {
            out.push_str(&format!("{:<24} {n}\n", format!("{k:?}")));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn number_formats() {
        assert_eq!(format_metric(98.4), "98.4");
        assert_eq!(format_metric(98.2119), "98.21");
        assert_eq!(format_metric(100.0), "100.0");
        assert_eq!(format_metric(2.625), "2.63");
        assert_eq!(format_metric(1.875), "1.88");
        assert_eq!(format_metric(0.0), "0.0");
        assert_eq!(format_duration_ms(1600), "1.6s");
        assert_eq!(format_duration_ms(83_240), "1m 23.2s");
        assert_eq!(format_duration_ms(59_990), "1m 0.0s");
    }

    #[test]
    fn table_column_order() {
        let rows = [
            TableRow { name: "a".into(), accuracy: 97.5, f1: 97.5, roc_auc: 98.6, avg_length: Some(4.82), time_ms: Some(1600) },
            TableRow { name: "plain".into(), accuracy: 50.0, f1: 40.0, roc_auc: 60.0, avg_length: None, time_ms: None },
        ];
        let t = render_table(&rows);
        let header: Vec<&str> = t.lines().next().unwrap().split('|').map(str::trim).collect();
        assert_eq!(header, ["Policy", "Accuracy", "F1-Score", "ROC-AUC", "Avg. Length", "Time"]);
        assert!(t.lines().nth(2).unwrap().ends_with("4.82 | 1.6s"));
        assert!(t.lines().nth(3).unwrap().ends_with("- |    -"));
    }
}
