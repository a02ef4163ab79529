use serde::{Deserialize, Serialize};

use crate::data::{GazeClass, HeadBox, PairLabel};
use crate::error::{Error, Result};

/// A disc in normalised canvas coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Disc {
    pub center: [f64; 2],
    pub radius: f64,
}

impl Disc {
    pub fn bounding_box(&self) -> HeadBox {
        HeadBox {
            x_min: (self.center[0] - self.radius).max(0.0),
            y_min: (self.center[1] - self.radius).max(0.0),
            x_max: (self.center[0] + self.radius).min(1.0),
            y_max: (self.center[1] + self.radius).min(1.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Person {
    pub center: [f64; 2],
    pub head_radius: f64,
    /// Unit gaze direction.
    pub gaze_dir: [f64; 2],
}

impl Person {
    pub fn head(&self) -> Disc {
        Disc {
            center: self.center,
            radius: self.head_radius,
        }
    }

    pub fn gaze_angle(&self) -> f64 {
        self.gaze_dir[1].atan2(self.gaze_dir[0])
    }
}

pub(crate) fn unit(angle: f64) -> [f64; 2] {
    [angle.cos(), angle.sin()]
}

/// Ray parameter of the target centre and perpendicular distance of the
/// centre from the gaze ray.
fn ray_offsets(source: &Person, target: &Disc) -> (f64, f64) {
    let d = [
        target.center[0] - source.center[0],
        target.center[1] - source.center[1],
    ];
    let u = source.gaze_dir;
    let t = d[0] * u[0] + d[1] * u[1];
    let perp = (d[0] * u[1] - d[1] * u[0]).abs();
    (t, perp)
}

/// True iff the gaze ray passes within the target radius and the target
/// centre lies in the forward half-plane.
pub fn looks_at(source: &Person, target: &Disc) -> bool {
    let (t, perp) = ray_offsets(source, target);
    t >= 0.0 && perp <= target.radius
}

/// What a person's gaze ray hits first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GazeTarget {
    OtherHead,
    Object(usize),
    None,
}

/// Applies the gaze-pattern rules with precedence
/// Mutual > Share > Single > Miss > Void. Person 0 is the principal.
pub fn derive_gp_label(persons: &[Person; 2], objects: &[Disc]) -> GazeClass {
    let [p, a] = persons;
    let p_at_a = looks_at(p, &a.head());
    let a_at_p = looks_at(a, &p.head());
    if p_at_a && a_at_p {
        return GazeClass::Mutual;
    }
    if objects.iter().any(|o| looks_at(p, o) && looks_at(a, o)) {
        return GazeClass::Share;
    }
    if p_at_a {
        GazeClass::Single
    } else if a_at_p {
        GazeClass::Miss
    } else {
        GazeClass::Void
    }
}

/// Nearest disc hit by the gaze ray of person `who`.
pub fn resolve_target(persons: &[Person; 2], objects: &[Disc], who: usize) -> GazeTarget {
    let source = &persons[who];
    let other = persons[1 - who].head();
    let mut best: Option<(f64, GazeTarget)> = None;
    let mut consider = |disc: &Disc, target: GazeTarget| {
        if looks_at(source, disc) {
            let (t, _) = ray_offsets(source, disc);
            if best.map_or(true, |(bt, _)| t < bt) {
                best = Some((t, target));
            }
        }
    };
    consider(&other, GazeTarget::OtherHead);
    for (k, o) in objects.iter().enumerate() {
        consider(o, GazeTarget::Object(k));
    }
    best.map_or(GazeTarget::None, |(_, t)| t)
}

/// Which regions count towards shared attention in [`derive_pair_labels`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum SharedAttentionMode {
    /// Only third-party head boxes.
    HeadsOnly,
    /// Third-party heads plus auxiliary object regions.
    #[default]
    HeadsAndObjects,
}

/// LAH / LAEO / SA flags from per-person gaze points and head boxes.
///
/// `third_heads` are head boxes of people outside the dyad; `objects` are
/// auxiliary regions that only count when `mode` includes them.
pub fn derive_pair_labels(
    gaze_points: &[[f64; 2]],
    head_boxes: &[HeadBox],
    third_heads: &[HeadBox],
    objects: &[HeadBox],
    mode: SharedAttentionMode,
) -> Result<PairLabel> {
    if gaze_points.len() != head_boxes.len() {
        return Err(Error::Shape(format!(
            "{} gaze points for {} head boxes",
            gaze_points.len(),
            head_boxes.len()
        )));
    }
    if gaze_points.len() != 2 {
        return Err(Error::Shape(format!(
            "pair labels need exactly two persons, got {}",
            gaze_points.len()
        )));
    }
    let (gp, ga) = (gaze_points[0], gaze_points[1]);
    let lah_p_to_a = head_boxes[1].contains(gp);
    let lah_a_to_p = head_boxes[0].contains(ga);
    let laeo = lah_p_to_a && lah_a_to_p;
    let extra: &[HeadBox] = match mode {
        SharedAttentionMode::HeadsOnly => &[],
        SharedAttentionMode::HeadsAndObjects => objects,
    };
    let shared = third_heads
        .iter()
        .chain(extra)
        .any(|r| r.contains(gp) && r.contains(ga));
    Ok(PairLabel {
        lah_p_to_a,
        lah_a_to_p,
        laeo,
        sa: shared && !laeo,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn person(x: f64, y: f64, angle_deg: f64) -> Person {
        Person {
            center: [x, y],
            head_radius: 0.06,
            gaze_dir: unit(angle_deg.to_radians()),
        }
    }

    fn disc(x: f64, y: f64, r: f64) -> Disc {
        Disc {
            center: [x, y],
            radius: r,
        }
    }

    #[test]
    fn on_axis_target_ahead_is_hit() {
        assert!(looks_at(&person(0.2, 0.5, 0.0), &disc(0.8, 0.5, 0.05)));
    }

    #[test]
    fn target_behind_is_not_hit() {
        assert!(!looks_at(&person(0.2, 0.5, 180.0), &disc(0.8, 0.5, 0.05)));
    }

    #[test]
    fn offset_target_beyond_radius_is_missed() {
        // Independent check: the closest approach of the ray y = 0.5 to the
        // point (0.8, 0.56) is the vertical offset 0.06 > 0.05.
        let src = person(0.2, 0.5, 0.0);
        let target = disc(0.8, 0.56, 0.05);
        let closest = (0..=10_000)
            .map(|i| {
                let x = 0.2 + i as f64 * 1e-4;
                ((x - 0.8f64).powi(2) + (0.5f64 - 0.56).powi(2)).sqrt()
            })
            .fold(f64::INFINITY, f64::min);
        assert!((closest - 0.06).abs() < 1e-9);
        assert!(!looks_at(&src, &target));
        assert!(looks_at(&src, &disc(0.8, 0.56, 0.0601)));
    }

    #[test]
    fn gp_label_constructions() {
        let objects = [disc(0.5, 0.15, 0.05)];
        let mutual = [person(0.2, 0.5, 0.0), person(0.8, 0.5, 180.0)];
        assert_eq!(derive_gp_label(&mutual, &objects), GazeClass::Mutual);

        let ang_p = (-0.35f64).atan2(0.3).to_degrees();
        let ang_a = (-0.35f64).atan2(-0.3).to_degrees();
        let share = [person(0.2, 0.5, ang_p), person(0.8, 0.5, ang_a)];
        assert_eq!(derive_gp_label(&share, &objects), GazeClass::Share);

        let single = [person(0.2, 0.5, 0.0), person(0.8, 0.5, 90.0)];
        assert_eq!(derive_gp_label(&single, &objects), GazeClass::Single);
        let swapped = [single[1], single[0]];
        assert_eq!(derive_gp_label(&swapped, &objects), GazeClass::Miss);

        let void = [person(0.2, 0.5, 180.0), person(0.8, 0.5, 0.0)];
        assert_eq!(derive_gp_label(&void, &objects), GazeClass::Void);
    }

    #[test]
    fn resolve_target_prefers_nearest_hit() {
        let persons = [person(0.2, 0.5, 0.0), person(0.8, 0.5, 90.0)];
        let objects = [disc(0.5, 0.5, 0.05)];
        assert_eq!(resolve_target(&persons, &objects, 0), GazeTarget::Object(0));
        assert_eq!(resolve_target(&persons, &[], 0), GazeTarget::OtherHead);
        assert_eq!(resolve_target(&persons, &objects, 1), GazeTarget::None);
    }

    fn hb(x0: f64, y0: f64, x1: f64, y1: f64) -> HeadBox {
        HeadBox::new(x0, y0, x1, y1).unwrap()
    }

    #[test]
    fn pair_label_fixtures() {
        let boxes = [hb(0.1, 0.4, 0.3, 0.6), hb(0.7, 0.4, 0.9, 0.6)];
        let object = [hb(0.45, 0.05, 0.55, 0.15)];
        let mode = SharedAttentionMode::HeadsAndObjects;

        let mutual = derive_pair_labels(&[[0.8, 0.5], [0.2, 0.5]], &boxes, &[], &object, mode).unwrap();
        assert_eq!(
            mutual,
            PairLabel {
                lah_p_to_a: true,
                lah_a_to_p: true,
                laeo: true,
                sa: false
            }
        );

        let lah = derive_pair_labels(&[[0.8, 0.5], [0.5, 0.9]], &boxes, &[], &object, mode).unwrap();
        assert_eq!(
            lah,
            PairLabel {
                lah_p_to_a: true,
                ..PairLabel::default()
            }
        );

        let sa = derive_pair_labels(&[[0.5, 0.1], [0.52, 0.12]], &boxes, &[], &object, mode).unwrap();
        assert_eq!(
            sa,
            PairLabel {
                sa: true,
                ..PairLabel::default()
            }
        );
        let heads_only =
            derive_pair_labels(&[[0.5, 0.1], [0.52, 0.12]], &boxes, &[], &object, SharedAttentionMode::HeadsOnly)
                .unwrap();
        assert!(!heads_only.sa);
        let third = derive_pair_labels(
            &[[0.5, 0.1], [0.52, 0.12]],
            &boxes,
            &object,
            &[],
            SharedAttentionMode::HeadsOnly,
        )
        .unwrap();
        assert!(third.sa);
    }

    #[test]
    fn pair_labels_reject_mismatched_lengths() {
        let boxes = [hb(0.1, 0.4, 0.3, 0.6)];
        assert!(derive_pair_labels(&[[0.1, 0.1], [0.2, 0.2]], &boxes, &[], &[], Default::default()).is_err());
    }
}
