//! Domain types shared by every stage of the pipeline.

mod heatmap;
pub mod manifest;
pub mod records;
mod raster;

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use heatmap::{argmax_cell, build_heatmap_target, GridCell, HeatmapTarget, HEATMAP_SIDE, HEATMAP_SIGMA};
pub use manifest::{load_manifest, Manifest, ManifestSchema};
pub use raster::{crop_face, Raster, FACE_SIZE};

/// Static gaze pattern of a dyad. The discriminant is the stable index used
/// in logit vectors and confusion matrices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum GazeClass {
    Share = 0,
    Mutual = 1,
    Single = 2,
    Miss = 3,
    Void = 4,
}

impl GazeClass {
    pub const ALL: [GazeClass; 5] = [
        GazeClass::Share,
        GazeClass::Mutual,
        GazeClass::Single,
        GazeClass::Miss,
        GazeClass::Void,
    ];
    pub const COUNT: usize = 5;

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Self> {
        Self::ALL.get(index).copied()
    }

    pub fn tag(self) -> &'static str {
        match self {
            GazeClass::Share => "Share",
            GazeClass::Mutual => "Mutual",
            GazeClass::Single => "Single",
            GazeClass::Miss => "Miss",
            GazeClass::Void => "Void",
        }
    }

    /// The class obtained by exchanging the principal and associate roles.
    pub fn role_swapped(self) -> Self {
        match self {
            GazeClass::Single => GazeClass::Miss,
            GazeClass::Miss => GazeClass::Single,
            other => other,
        }
    }
}

impl fmt::Display for GazeClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for GazeClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        GazeClass::ALL
            .iter()
            .copied()
            .find(|c| c.tag().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::invalid("gaze class", format!("unknown tag {s:?}")))
    }
}

/// Pairwise social-gaze flags in the LAH / LAEO / SA taxonomy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PairLabel {
    pub lah_p_to_a: bool,
    pub lah_a_to_p: bool,
    pub laeo: bool,
    pub sa: bool,
}

impl PairLabel {
    pub fn is_consistent(&self) -> bool {
        (!self.laeo || (self.lah_p_to_a && self.lah_a_to_p)) && !(self.sa && self.laeo)
    }
}

/// Head bounding box in normalised image coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeadBox {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

impl HeadBox {
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Result<Self> {
        let b = HeadBox {
            x_min,
            y_min,
            x_max,
            y_max,
        };
        b.validate()?;
        Ok(b)
    }

    /// Checks the box invariants, naming the first offending field.
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("x_min", self.x_min),
            ("y_min", self.y_min),
            ("x_max", self.x_max),
            ("y_max", self.y_max),
        ];
        for (name, v) in fields {
            if !v.is_finite() || !(0.0..=1.0).contains(&v) {
                return Err(Error::invalid(name, format!("{v} is outside [0, 1]")));
            }
        }
        if self.x_min >= self.x_max {
            return Err(Error::invalid(
                "x_min",
                format!("x_min {} must be below x_max {}", self.x_min, self.x_max),
            ));
        }
        if self.y_min >= self.y_max {
            return Err(Error::invalid(
                "y_min",
                format!("y_min {} must be below y_max {}", self.y_min, self.y_max),
            ));
        }
        Ok(())
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn center(&self) -> [f64; 2] {
        [
            0.5 * (self.x_min + self.x_max),
            0.5 * (self.y_min + self.y_max),
        ]
    }

    /// Closed-box containment.
    pub fn contains(&self, p: [f64; 2]) -> bool {
        p[0] >= self.x_min && p[0] <= self.x_max && p[1] >= self.y_min && p[1] <= self.y_max
    }

    /// Fraction of the axis-aligned cell `[x0,x1]×[y0,y1]` covered by the box.
    pub fn coverage(&self, x0: f64, y0: f64, x1: f64, y1: f64) -> f64 {
        let w = (self.x_max.min(x1) - self.x_min.max(x0)).max(0.0);
        let h = (self.y_max.min(y1) - self.y_min.max(y0)).max(0.0);
        w * h / ((x1 - x0) * (y1 - y0))
    }
}

/// Ground-truth label carried by a dyad record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DyadLabel {
    Gaze(GazeClass),
    /// Binary looking-at-each-other flag.
    Laeo(bool),
}

impl DyadLabel {
    pub const LAEO_TAG: &'static str = "LAEO";
    pub const NOT_LAEO_TAG: &'static str = "NotLAEO";

    /// Class index within the label's own taxonomy.
    pub fn index(&self) -> usize {
        match self {
            DyadLabel::Gaze(c) => c.index(),
            DyadLabel::Laeo(flag) => usize::from(*flag),
        }
    }

    pub fn tag(&self) -> &'static str {
        match self {
            DyadLabel::Gaze(c) => c.tag(),
            DyadLabel::Laeo(true) => Self::LAEO_TAG,
            DyadLabel::Laeo(false) => Self::NOT_LAEO_TAG,
        }
    }

    pub fn parse(tag: &str) -> Result<Self> {
        if tag.eq_ignore_ascii_case(Self::LAEO_TAG) {
            Ok(DyadLabel::Laeo(true))
        } else if tag.eq_ignore_ascii_case(Self::NOT_LAEO_TAG) {
            Ok(DyadLabel::Laeo(false))
        } else {
            tag.parse().map(DyadLabel::Gaze)
        }
    }
}

/// One image with a principal/associate pair.
#[derive(Debug, Clone, PartialEq)]
pub struct DyadSample {
    pub sample_id: String,
    pub image: PathBuf,
    pub principal: HeadBox,
    pub associate: HeadBox,
    pub label: Option<DyadLabel>,
    pub context: Option<String>,
}

impl DyadSample {
    pub fn validate(&self) -> Result<()> {
        self.principal.validate()?;
        self.associate.validate()?;
        if self.principal == self.associate {
            return Err(Error::invalid(
                "associate",
                "principal and associate boxes must differ",
            ));
        }
        Ok(())
    }
}

/// One gaze-following record: a head and the point it looks at.
#[derive(Debug, Clone, PartialEq)]
pub struct GazeFollowSample {
    pub sample_id: String,
    pub image: PathBuf,
    pub head: HeadBox,
    pub gaze_point: [f64; 2],
}

impl GazeFollowSample {
    pub fn validate(&self) -> Result<()> {
        self.head.validate()?;
        for (name, v) in [("gaze_x", self.gaze_point[0]), ("gaze_y", self.gaze_point[1])] {
            if !v.is_finite() || !(0.0..=1.0).contains(&v) {
                return Err(Error::invalid(name, format!("{v} is outside [0, 1]")));
            }
        }
        Ok(())
    }
}

/// Model output for one sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub sample_id: String,
    pub logits: Vec<f64>,
    pub probabilities: Vec<f64>,
    pub predicted: usize,
}

impl PredictionRecord {
    pub fn from_logits(sample_id: impl Into<String>, logits: Vec<f64>) -> Self {
        let probabilities = softmax(&logits);
        let predicted = argmax(&probabilities);
        PredictionRecord {
            sample_id: sample_id.into(),
            logits,
            probabilities,
            predicted,
        }
    }
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Index of the first maximal entry.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn class_encoding_is_stable() {
        for (i, c) in GazeClass::ALL.iter().enumerate() {
            assert_eq!(c.index(), i);
            assert_eq!(GazeClass::from_index(i), Some(*c));
            assert_eq!(c.tag().parse::<GazeClass>().unwrap(), *c);
        }
        assert_eq!(GazeClass::from_index(5), None);
    }

    #[test]
    fn head_box_rejects_inverted_extent() {
        let err = HeadBox::new(0.5, 0.1, 0.5, 0.2).unwrap_err();
        assert!(err.to_string().contains("x_min"), "{err}");
        let err = HeadBox::new(0.1, 0.3, 0.5, 0.2).unwrap_err();
        assert!(err.to_string().contains("y_min"), "{err}");
        assert!(HeadBox::new(0.1, 0.1, 1.2, 0.2).is_err());
    }

    #[test]
    fn prediction_record_lies_on_simplex() {
        let r = PredictionRecord::from_logits("s", vec![1.0, -2.0, 0.5, 30.0, -30.0]);
        let sum: f64 = r.probabilities.iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
        assert_eq!(r.predicted, 3);
    }

    #[test]
    fn dyad_label_tags_round_trip() {
        for label in [
            DyadLabel::Gaze(GazeClass::Miss),
            DyadLabel::Laeo(true),
            DyadLabel::Laeo(false),
        ] {
            assert_eq!(DyadLabel::parse(label.tag()).unwrap(), label);
        }
    }
}
