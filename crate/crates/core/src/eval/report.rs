use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::metrics::{accuracy, average_precision, confusion_matrix, f1_with_flags, RunSummary};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub class_names: Vec<String>,
    pub per_class_f1: Vec<f64>,
    /// Classes whose F1 had a zero denominator and was set to 0.
    pub degenerate_f1: Vec<String>,
    pub macro_f1: f64,
    pub accuracy: f64,
    pub confusion: Vec<Vec<usize>>,
    pub sample_count: usize,
    /// Positive-class AP for two-class reports.
    pub average_precision: Option<f64>,
    pub ap_runs: Option<RunSummary>,
}

impl MetricsReport {
    pub fn from_predictions(preds: &[usize], labels: &[usize], class_names: &[String]) -> Result<Self> {
        let n = class_names.len();
        if preds.is_empty() {
            return Err(Error::Evaluation("no samples to evaluate".into()));
        }
        let (f1, flagged) = f1_with_flags(preds, labels, n)?;
        Ok(MetricsReport {
            class_names: class_names.to_vec(),
            macro_f1: f1.iter().sum::<f64>() / n as f64,
            degenerate_f1: flagged.iter().map(|&c| class_names[c].clone()).collect(),
            per_class_f1: f1,
            accuracy: accuracy(preds, labels)?,
            confusion: confusion_matrix(preds, labels, n)?,
            sample_count: preds.len(),
            average_precision: None,
            ap_runs: None,
        })
    }

    /// Full report from probability vectors: argmax predictions, plus AP of
    /// class 1 when there are exactly two classes and a positive exists.
    pub fn from_probabilities(probabilities: &[Vec<f64>], labels: &[usize], class_names: &[String]) -> Result<Self> {
        let preds: Vec<usize> = probabilities.iter().map(|p| crate::data::argmax(p)).collect();
        let mut r = Self::from_predictions(&preds, labels, class_names)?;
        if class_names.len() == 2 && labels.contains(&1) {
            let scores: Vec<f64> = probabilities.iter().map(|p| p[1]).collect();
            let pos: Vec<bool> = labels.iter().map(|&l| l == 1).collect();
            r.average_precision = Some(average_precision(&scores, &pos)?);
        }
        Ok(r)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain struct") + "\n"
    }

    /// Plain-text table with per-class F1 and the confusion matrix.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let w = self.class_names.iter().map(|c| c.len()).max().unwrap_or(5).max(6);
        let _ = writeln!(out, "{:<w$}  {:>6}", "class", "F1");
        for (c, f) in self.class_names.iter().zip(&self.per_class_f1) {
            let flag = if self.degenerate_f1.contains(c) { " *" } else { "" };
            let _ = writeln!(out, "{c:<w$}  {f:>6.3}{flag}");
        }
        let _ = writeln!(out, "{:<w$}  {:>6.3}", "macro", self.macro_f1);
        let _ = writeln!(out, "{:<w$}  {:>6.3}", "acc", self.accuracy);
        if let Some(ap) = self.average_precision {
            let _ = writeln!(out, "{:<w$}  {ap:>6.3}", "AP");
        }
        if let Some(r) = &self.ap_runs {
            let _ = writeln!(out, "AP over {} runs: {:.3} ± {:.3}", r.values.len(), r.mean, r.std);
        }
        let _ = writeln!(out, "\nconfusion (rows = true, cols = predicted), n = {}", self.sample_count);
        let _ = write!(out, "{:<w$}", "");
        for c in &self.class_names {
            let _ = write!(out, " {c:>w$}");
        }
        out.push('\n');
        for (c, row) in self.class_names.iter().zip(&self.confusion) {
            let _ = write!(out, "{c:<w$}");
            for v in row {
                let _ = write!(out, " {v:>w$}");
            }
            out.push('\n');
        }
        if !self.degenerate_f1.is_empty() {
            out.push_str("* F1 undefined (no true or predicted samples); reported as 0\n");
        }
        out
    }
}
