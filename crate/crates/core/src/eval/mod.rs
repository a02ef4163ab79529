//! Metrics, class-subset and modality ablations, and the per-class
//! modality attention summary.

mod metrics;
mod report;
mod subsets;

pub use metrics::{
    accuracy, ap_over_runs, average_precision, confusion_matrix, f1_per_class, f1_with_flags, subsampled_ap,
    RunSummary,
};
pub use report::MetricsReport;
pub use subsets::{
    class_subset_eval, subset_preset, vsgaze_class, SubsetPreset, Taxonomy, GAZE_SUBSETS, VSGAZE_CLASSES,
    VSGAZE_SUBSETS,
};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::PredictionRecord;
use crate::error::Result;
use crate::model::{CsGaze, ForwardOptions, ForwardTrace, Modalities, PreparedDyad};

/// Runs the classifier over `data` in parallel; output order follows input.
pub fn predict(model: &CsGaze, data: &[PreparedDyad], opts: ForwardOptions) -> Result<Vec<(PredictionRecord, ForwardTrace)>> {
    data.par_iter()
        .map(|d| {
            let trace = model.forward(d, opts)?;
            Ok((PredictionRecord::from_logits(d.sample_id.clone(), trace.logits.clone()), trace))
        })
        .collect()
}

/// Evaluates predictions against the labels carried by `data`.
pub fn evaluate_predictions(records: &[PredictionRecord], data: &[PreparedDyad], class_names: &[String]) -> Result<MetricsReport> {
    let mut probs = Vec::with_capacity(records.len());
    let mut labels = Vec::with_capacity(records.len());
    for (r, d) in records.iter().zip(data) {
        if let Some(l) = d.label {
            probs.push(r.probabilities.clone());
            labels.push(l);
        }
    }
    MetricsReport::from_probabilities(&probs, &labels, class_names)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionRow {
    pub class: String,
    pub count: usize,
    pub s_fused: f64,
    pub f_merged: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionSummary {
    pub rows: Vec<AttentionRow>,
    /// Classes with no samples.
    pub omitted: Vec<String>,
}

impl AttentionSummary {
    pub fn row(&self, class: &str) -> Option<&AttentionRow> {
        self.rows.iter().find(|r| r.class == class)
    }
}

/// Per-class mean of the merge attention on `[S_fused, F_merged]`.
pub fn attention_report(traces: &[(ForwardTrace, usize)], class_names: &[String]) -> AttentionSummary {
    let n = class_names.len();
    let mut sums = vec![[0.0f64; 2]; n];
    let mut counts = vec![0usize; n];
    for (t, label) in traces {
        if *label < n {
            sums[*label][0] += t.merge_attention[0];
            sums[*label][1] += t.merge_attention[1];
            counts[*label] += 1;
        }
    }
    let mut rows = Vec::new();
    let mut omitted = Vec::new();
    for c in 0..n {
        if counts[c] == 0 {
            omitted.push(class_names[c].clone());
            continue;
        }
        // Renormalise so rounding never pushes a row off the simplex.
        let total = sums[c][0] + sums[c][1];
        rows.push(AttentionRow {
            class: class_names[c].clone(),
            count: counts[c],
            s_fused: sums[c][0] / total,
            f_merged: sums[c][1] / total,
        });
    }
    AttentionSummary { rows, omitted }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub modalities: String,
    pub macro_f1: f64,
    pub accuracy: f64,
    pub report: MetricsReport,
}

/// Builds the seven-row modality table; `run` trains and evaluates one wiring.
pub fn ablation_matrix<F>(mut run: F) -> Result<Vec<AblationRow>>
where
    F: FnMut(Modalities) -> Result<MetricsReport>,
{
    Modalities::TABLE
        .iter()
        .map(|&m| {
            let report = run(m)?;
            Ok(AblationRow {
                modalities: m.label(),
                macro_f1: report.macro_f1,
                accuracy: report.accuracy,
                report,
            })
        })
        .collect()
}

pub fn ablation_table(rows: &[AblationRow]) -> String {
    let mut out = format!("{:<8} {:>8} {:>8}\n", "input", "F1", "acc");
    for r in rows {
        out.push_str(&format!("{:<8} {:>8.3} {:>8.3}\n", r.modalities, r.macro_f1, r.accuracy));
    }
    out
}
