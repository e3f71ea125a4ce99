//! JSON evaluation reports and their text rendering.

use serde::{Deserialize, Serialize};

use mcsort::evaluate::{CvReport, Metrics};

use crate::{CliError, CliResult};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ReportConfig {
    pub data: String,
    pub kind: String,
    pub method: String,
    pub form: String,
    pub policy: String,
    pub gamma: usize,
    pub directions: Vec<String>,
    pub folds: usize,
    pub repeats: usize,
    pub grid: String,
    pub seed: u64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FoldRow {
    pub fold: usize,
    pub c1: f64,
    pub c2: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub validation_accuracy: Option<f64>,
    pub metrics: Metrics,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RepetitionResult {
    pub fold_seed: u64,
    pub folds: Vec<FoldRow>,
    pub mean: Metrics,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MethodResults {
    pub kind: String,
    pub repetitions: Vec<RepetitionResult>,
    /// Unweighted mean of the repetition means.
    pub overall: Metrics,
    /// Per-fold accuracies, repetition-major: all folds of repetition 0,
    /// then repetition 1, ... Used for pairing t-tests across reports.
    pub fold_accuracies: Vec<f64>,
    pub fold_macro_f: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub schema_version: u32,
    pub config: ReportConfig,
    pub primary: MethodResults,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub baseline: Option<MethodResults>,
}

pub fn method_results(kind: &str, runs: &[(u64, CvReport)]) -> MethodResults {
    let repetitions: Vec<RepetitionResult> = runs
        .iter()
        .map(|(seed, report)| RepetitionResult {
            fold_seed: *seed,
            folds: report
                .folds
                .iter()
                .map(|f| FoldRow {
                    fold: f.fold,
                    c1: f.chosen.c1,
                    c2: f.chosen.c2,
                    k: f.chosen.k_neighbors,
                    validation_accuracy: f.chosen.validation_accuracy,
                    metrics: f.metrics.clone(),
                })
                .collect(),
            mean: report.mean.clone(),
        })
        .collect();
    let overall = mcsort::evaluate::mean_metrics(
        &repetitions.iter().map(|r| r.mean.clone()).collect::<Vec<_>>(),
    );
    let fold_accuracies = runs
        .iter()
        .flat_map(|(_, r)| r.folds.iter().map(|f| f.metrics.accuracy))
        .collect();
    let fold_macro_f = runs
        .iter()
        .flat_map(|(_, r)| r.folds.iter().map(|f| f.metrics.macro_f))
        .collect();
    MethodResults {
        kind: kind.to_string(),
        repetitions,
        overall,
        fold_accuracies,
        fold_macro_f,
    }
}

pub fn render(report: &EvaluationReport) -> String {
    let mut s = serde_json::to_string_pretty(report).expect("report serialization cannot fail");
    s.push('\n');
    s
}

pub fn parse(text: &str) -> CliResult<EvaluationReport> {
    let report: EvaluationReport = serde_json::from_str(text)?;
    if report.schema_version != REPORT_SCHEMA_VERSION {
        return Err(CliError::Other(format!(
            "unsupported report schema_version {} (this build reads {})",
            report.schema_version, REPORT_SCHEMA_VERSION
        )));
    }
    Ok(report)
}

/// Aligned per-repetition summary followed by the overall line.
pub fn render_text(results: &MethodResults) -> String {
    let mut out = String::new();
    out.push_str(&format!("{} model:\n", results.kind));
    out.push_str("  repetition  fold-seed   accuracy    macro-P    macro-R    macro-F\n");
    for (i, rep) in results.repetitions.iter().enumerate() {
        out.push_str(&format!(
            "  {:>10}  {:>9}   {:>8.4}   {:>8.4}   {:>8.4}   {:>8.4}\n",
            i + 1,
            rep.fold_seed,
            rep.mean.accuracy,
            rep.mean.macro_precision,
            rep.mean.macro_recall,
            rep.mean.macro_f,
        ));
    }
    out.push_str(&format!(
        "  overall: accuracy {:.4}, macro-P {:.4}, macro-R {:.4}, macro-F {:.4}\n",
        results.overall.accuracy,
        results.overall.macro_precision,
        results.overall.macro_recall,
        results.overall.macro_f,
    ));
    out
}
