//! Metrics, error taxonomy, pathway comparison and Sankey export over
//! finished transcripts.

mod errors;
pub mod fixtures;
mod metrics;
mod pathways;
mod report;
mod sankey;

pub use errors::{classify_errors, episode_errors, ErrorKind, ErrorTaxonomy};
pub use metrics::{accuracy, f1_scores, rank_auc, roc_auc, ClassScores, MetricError};
pub use pathways::{
    commonest_pathways, cross_model_distance, distance_matrix, feature_of_code, levenshtein, pathway_code, BadPathwayCode,
    DistanceMatrix, NoSharedClasses, PathwayMap, PathwayString,
};
pub use report::{
    build_report, format_duration_ms, format_metric, render_report_text, render_table, report_from_labels, ReportError,
    RunReport, TableRow,
};
pub use sankey::{check_conservation, sankey_export, sankey_html, Sankey, SankeyLink, SankeyNode};

#[cfg(test)]
mod tests;
