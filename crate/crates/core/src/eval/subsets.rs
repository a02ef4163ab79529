use serde::{Deserialize, Serialize};

use super::report::MetricsReport;
use crate::data::{GazeClass, PairLabel};
use crate::error::{Error, Result};

/// Three-way taxonomy used for pair-labelled data.
pub const VSGAZE_CLASSES: [&str; 3] = ["LAH", "LAEO", "SA"];

/// Collapses pair flags to a single class: LAEO first, then SA, then any
/// one-sided LAH. Pairs with no flag set have no class.
pub fn vsgaze_class(label: &PairLabel) -> Option<usize> {
    if label.laeo {
        Some(1)
    } else if label.sa {
        Some(2)
    } else if label.lah_p_to_a || label.lah_a_to_p {
        Some(0)
    } else {
        None
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Taxonomy {
    /// The five static gaze classes.
    GazePattern,
    /// LAH / LAEO / SA.
    VsGaze,
}

impl Taxonomy {
    pub fn class_names(self) -> Vec<String> {
        match self {
            Taxonomy::GazePattern => GazeClass::ALL.iter().map(|c| c.tag().to_string()).collect(),
            Taxonomy::VsGaze => VSGAZE_CLASSES.iter().map(|s| s.to_string()).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SubsetPreset {
    pub name: &'static str,
    pub taxonomy: Taxonomy,
    pub classes: &'static [usize],
}

const SHARE: usize = 0;
const MUTUAL: usize = 1;
const SINGLE: usize = 2;
const MISS: usize = 3;
const VOID: usize = 4;

/// Class combinations of the subset study on the five-class taxonomy.
pub const GAZE_SUBSETS: [SubsetPreset; 6] = [
    SubsetPreset { name: "Miss+Single", taxonomy: Taxonomy::GazePattern, classes: &[MISS, SINGLE] },
    SubsetPreset { name: "Mutual+Share", taxonomy: Taxonomy::GazePattern, classes: &[MUTUAL, SHARE] },
    SubsetPreset { name: "Mutual+Share+Void", taxonomy: Taxonomy::GazePattern, classes: &[MUTUAL, SHARE, VOID] },
    SubsetPreset { name: "Miss+Void+Single", taxonomy: Taxonomy::GazePattern, classes: &[MISS, VOID, SINGLE] },
    SubsetPreset {
        name: "Miss+Mutual+Void+Single",
        taxonomy: Taxonomy::GazePattern,
        classes: &[MISS, MUTUAL, VOID, SINGLE],
    },
    SubsetPreset {
        name: "Mutual+Share+Void+Single",
        taxonomy: Taxonomy::GazePattern,
        classes: &[MUTUAL, SHARE, VOID, SINGLE],
    },
];

/// Pairwise combinations on the LAH / LAEO / SA taxonomy.
pub const VSGAZE_SUBSETS: [SubsetPreset; 3] = [
    SubsetPreset { name: "LAH+LAEO", taxonomy: Taxonomy::VsGaze, classes: &[0, 1] },
    SubsetPreset { name: "LAH+SA", taxonomy: Taxonomy::VsGaze, classes: &[0, 2] },
    SubsetPreset { name: "LAEO+SA", taxonomy: Taxonomy::VsGaze, classes: &[1, 2] },
];

pub fn subset_preset(name: &str) -> Option<SubsetPreset> {
    GAZE_SUBSETS
        .iter()
        .chain(VSGAZE_SUBSETS.iter())
        .find(|p| p.name.eq_ignore_ascii_case(name))
        .copied()
}

/// Restricts to samples whose label lies in `subset`, renormalises each
/// probability vector over the subset and re-argmaxes. Reported class order
/// follows `subset`.
pub fn class_subset_eval(
    probabilities: &[Vec<f64>],
    labels: &[usize],
    subset: &[usize],
    class_names: &[String],
) -> Result<MetricsReport> {
    let n = class_names.len();
    if subset.len() < 2 || subset.len() > n {
        return Err(Error::invalid("subset", format!("size {} not in 2..={n}", subset.len())));
    }
    if let Some(bad) = subset.iter().find(|&&c| c >= n) {
        return Err(Error::invalid("subset", format!("class {bad} out of range for {n} classes")));
    }
    let mut seen = vec![false; n];
    for &c in subset {
        if std::mem::replace(&mut seen[c], true) {
            return Err(Error::invalid("subset", format!("class {c} listed twice")));
        }
    }
    if probabilities.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} probability rows for {} labels",
            probabilities.len(),
            labels.len()
        )));
    }
    let identity = subset.len() == n && subset.iter().enumerate().all(|(i, &c)| i == c);
    let names: Vec<String> = subset.iter().map(|&c| class_names[c].clone()).collect();
    let mut probs = Vec::new();
    let mut local_labels = Vec::new();
    for (p, &l) in probabilities.iter().zip(labels) {
        if p.len() != n {
            return Err(Error::Shape(format!("probability row of length {} for {n} classes", p.len())));
        }
        let Some(local) = subset.iter().position(|&c| c == l) else { continue };
        local_labels.push(local);
        if identity {
            probs.push(p.clone());
        } else {
            let sum: f64 = subset.iter().map(|&c| p[c]).sum();
            probs.push(subset.iter().map(|&c| if sum > 0.0 { p[c] / sum } else { 1.0 / subset.len() as f64 }).collect());
        }
    }
    if local_labels.is_empty() {
        return Err(Error::Evaluation(format!("no samples with labels in {}", names.join("+"))));
    }
    MetricsReport::from_probabilities(&probs, &local_labels, &names)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names() -> Vec<String> {
        Taxonomy::GazePattern.class_names()
    }

    #[test]
    fn full_subset_is_identity() {
        let probs = vec![
            vec![0.1, 0.2, 0.3, 0.2, 0.2],
            vec![0.5, 0.1, 0.1, 0.2, 0.1],
            vec![0.0, 0.0, 0.0, 0.0, 1.0],
        ];
        let labels = vec![2, 1, 4];
        let full = MetricsReport::from_probabilities(&probs, &labels, &names()).unwrap();
        let sub = class_subset_eval(&probs, &labels, &[0, 1, 2, 3, 4], &names()).unwrap();
        assert_eq!(full, sub);
    }

    #[test]
    fn mutual_share_perfect_within_subset() {
        // Top overall class is Void, but within {Mutual, Share} the true class wins.
        let probs = vec![vec![0.3, 0.1, 0.0, 0.0, 0.6], vec![0.1, 0.3, 0.0, 0.0, 0.6], vec![0.2; 5]];
        let labels = vec![SHARE, MUTUAL, VOID];
        let r = class_subset_eval(&probs, &labels, GAZE_SUBSETS[1].classes, &names()).unwrap();
        assert_eq!(r.per_class_f1, vec![1.0, 1.0]);
        assert_eq!(r.sample_count, 2);
    }

    #[test]
    fn rejects_bad_subsets() {
        let probs = vec![vec![0.2; 5]];
        assert!(class_subset_eval(&probs, &[0], &[0], &names()).is_err());
        assert!(class_subset_eval(&probs, &[0], &[0, 7], &names()).is_err());
        assert!(class_subset_eval(&probs, &[0], &[0, 0], &names()).is_err());
        assert!(matches!(class_subset_eval(&probs, &[0], &[1, 2], &names()), Err(Error::Evaluation(_))));
    }

    #[test]
    fn presets_resolve() {
        assert_eq!(subset_preset("laeo+sa").unwrap().classes, &[1, 2]);
        assert_eq!(subset_preset("Miss+Single").unwrap().classes, &[MISS, SINGLE]);
        assert!(subset_preset("Share+Share").is_none());
        let vs = PairLabel { lah_p_to_a: true, lah_a_to_p: true, laeo: true, sa: false };
        assert_eq!(vsgaze_class(&vs), Some(1));
        assert_eq!(vsgaze_class(&PairLabel::default()), None);
    }
}
