use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn check(preds: &[usize], labels: &[usize], n: usize) -> Result<()> {
    if preds.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} predictions for {} labels",
            preds.len(),
            labels.len()
        )));
    }
    if let Some(bad) = preds.iter().chain(labels).find(|&&c| c >= n) {
        return Err(Error::invalid("class", format!("index {bad} out of range for {n} classes")));
    }
    Ok(())
}

/// `n × n` counts; rows are true classes, columns predicted classes.
pub fn confusion_matrix(preds: &[usize], labels: &[usize], n: usize) -> Result<Vec<Vec<usize>>> {
    check(preds, labels, n)?;
    let mut m = vec![vec![0; n]; n];
    for (&p, &l) in preds.iter().zip(labels) {
        m[l][p] += 1;
    }
    Ok(m)
}

/// Per-class F1 and the classes whose F1 denominator was zero (reported as 0).
pub fn f1_with_flags(preds: &[usize], labels: &[usize], n: usize) -> Result<(Vec<f64>, Vec<usize>)> {
    let m = confusion_matrix(preds, labels, n)?;
    let mut f1 = Vec::with_capacity(n);
    let mut degenerate = Vec::new();
    for c in 0..n {
        let tp = m[c][c];
        let fn_: usize = m[c].iter().sum::<usize>() - tp;
        let fp: usize = (0..n).map(|r| m[r][c]).sum::<usize>() - tp;
        let denom = 2 * tp + fp + fn_;
        if denom == 0 {
            degenerate.push(c);
            f1.push(0.0);
        } else {
            f1.push(2.0 * tp as f64 / denom as f64);
        }
    }
    Ok((f1, degenerate))
}

/// `F1_c = 2TP / (2TP + FP + FN)`, 0 when the denominator is 0.
pub fn f1_per_class(preds: &[usize], labels: &[usize], n: usize) -> Result<Vec<f64>> {
    Ok(f1_with_flags(preds, labels, n)?.0)
}

pub fn accuracy(preds: &[usize], labels: &[usize]) -> Result<f64> {
    if preds.len() != labels.len() || preds.is_empty() {
        return Err(Error::Shape(format!(
            "{} predictions for {} labels",
            preds.len(),
            labels.len()
        )));
    }
    let hits = preds.iter().zip(labels).filter(|(p, l)| p == l).count();
    Ok(hits as f64 / preds.len() as f64)
}

/// Step-wise area under the precision-recall curve. Samples are ranked by
/// descending score; ties keep input order.
pub fn average_precision(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::Shape(format!("{} scores for {} labels", scores.len(), labels.len())));
    }
    let positives = labels.iter().filter(|&&l| l).count();
    if positives == 0 {
        return Err(Error::Evaluation("average precision needs at least one positive".into()));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::NonFinite("scores".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).expect("no NaN"));
    let mut hits = 0usize;
    let mut ap = 0.0;
    for (k, &i) in order.iter().enumerate() {
        if labels[i] {
            hits += 1;
            ap += hits as f64 / (k + 1) as f64;
        }
    }
    Ok(ap / positives as f64)
}

/// AP of a random subsample (without replacement) of `fraction` of the
/// samples, drawn from `seed`. This is the per-run variation of the
/// multi-run AP protocol.
pub fn subsampled_ap(scores: &[f64], labels: &[bool], fraction: f64, seed: u64) -> Result<f64> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::invalid("fraction", "must lie in (0, 1]"));
    }
    if scores.len() != labels.len() {
        return Err(Error::Shape(format!("{} scores for {} labels", scores.len(), labels.len())));
    }
    let k = ((scores.len() as f64 * fraction).round() as usize).clamp(1, scores.len().max(1));
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut pick = idx[..k.min(idx.len())].to_vec();
    pick.sort_unstable();
    let s: Vec<f64> = pick.iter().map(|&i| scores[i]).collect();
    let l: Vec<bool> = pick.iter().map(|&i| labels[i]).collect();
    average_precision(&s, &l)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    pub values: Vec<f64>,
}

/// Runs `run_fn(seed)` for seeds `0..runs` (in parallel) and summarises.
pub fn ap_over_runs<F>(runs: usize, run_fn: F) -> Result<RunSummary>
where
    F: Fn(u64) -> Result<f64> + Sync,
{
    if runs == 0 {
        return Err(Error::invalid("runs", "need at least one run"));
    }
    let results: Vec<Result<f64>> = (0..runs).into_par_iter().map(|i| run_fn(i as u64)).collect();
    let mut values = Vec::with_capacity(runs);
    for (index, r) in results.into_iter().enumerate() {
        values.push(r.map_err(|e| Error::Run {
            index,
            source: Box::new(e),
        })?);
    }
    // Shifted by the first value so a constant sequence has exactly zero spread.
    let v0 = values[0];
    let mean = v0 + values.iter().map(|v| v - v0).sum::<f64>() / runs as f64;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / runs as f64;
    Ok(RunSummary {
        mean,
        std: var.sqrt(),
        values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn f1_hand_example() {
        // Class 0: TP 8, FP 2, FN 4.
        let mut preds = vec![0; 8];
        let mut labels = vec![0; 8];
        preds.extend([0, 0]);
        labels.extend([1, 1]);
        preds.extend([1, 1, 1, 1]);
        labels.extend([0, 0, 0, 0]);
        let f1 = f1_per_class(&preds, &labels, 2).unwrap();
        assert!((f1[0] - 16.0 / 22.0).abs() < 1e-15);
    }

    #[test]
    fn absent_class_is_flagged() {
        let (f1, flagged) = f1_with_flags(&[0, 1], &[0, 1], 3).unwrap();
        assert_eq!(f1, vec![1.0, 1.0, 0.0]);
        assert_eq!(flagged, vec![2]);
        assert!(f1_per_class(&[0], &[0, 1], 2).is_err());
    }

    #[test]
    fn ap_examples() {
        assert!((average_precision(&[0.9, 0.8, 0.7], &[true, false, true]).unwrap() - 2.5 / 3.0).abs() < 1e-15);
        assert_eq!(average_precision(&[0.9, 0.1, 0.5], &[true, false, true]).unwrap(), 1.0);
        assert_eq!(average_precision(&[0.3], &[true]).unwrap(), 1.0);
        assert!(average_precision(&[0.3], &[false]).is_err());
        // Ties keep input order.
        assert_eq!(average_precision(&[0.5, 0.5], &[false, true]).unwrap(), 0.5);
    }

    #[test]
    fn full_subsample_is_plain_ap() {
        let scores = [0.9, 0.8, 0.7];
        let labels = [true, false, true];
        assert_eq!(subsampled_ap(&scores, &labels, 1.0, 5).unwrap(), average_precision(&scores, &labels).unwrap());
        let a = subsampled_ap(&scores, &labels, 0.7, 1);
        assert_eq!(a.is_ok(), subsampled_ap(&scores, &labels, 0.7, 1).is_ok());
    }

    #[test]
    fn runs_summary() {
        let s = ap_over_runs(100, |seed| Ok(seed as f64 / 100.0)).unwrap();
        assert!((s.mean - 0.495).abs() < 1e-12);
        assert_eq!(ap_over_runs(10, |_| Ok(0.7)).unwrap().std, 0.0);
        let one = ap_over_runs(1, |_| Ok(0.3)).unwrap();
        assert_eq!((one.mean, one.std), (0.3, 0.0));
        let err = ap_over_runs(5, |s| if s == 3 { Err(Error::Evaluation("boom".into())) } else { Ok(1.0) })
            .unwrap_err();
        assert!(matches!(err, Error::Run { index: 3, .. }));
    }
}
