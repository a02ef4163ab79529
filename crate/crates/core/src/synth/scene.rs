use std::f64::consts::TAU;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::geometry::{derive_gp_label, looks_at, unit, Disc, Person};
use crate::data::GazeClass;
use crate::error::{Error, Result};

/// Clearance kept between generated rays and discs they must avoid.
const RAY_MARGIN: f64 = 0.02;
/// Aimed rays pass within this fraction of the target radius.
const AIM_FRACTION: f64 = 0.5;

/// Generator settings for [`sample_scene`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneConfig {
    pub canvas: (u32, u32),
    pub head_radius: f64,
    pub object_radius: f64,
    pub min_objects: usize,
    pub max_objects: usize,
    /// Class weights in [`GazeClass`] index order; must sum to 1.
    pub class_mix: [f64; 5],
}

impl Default for SceneConfig {
    fn default() -> Self {
        SceneConfig {
            canvas: (224, 224),
            head_radius: 0.07,
            object_radius: 0.05,
            min_objects: 1,
            max_objects: 3,
            class_mix: [0.2; 5],
        }
    }
}

impl SceneConfig {
    pub fn single_class(class: GazeClass) -> Self {
        let mut mix = [0.0; 5];
        mix[class.index()] = 1.0;
        SceneConfig {
            class_mix: mix,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let sum: f64 = self.class_mix.iter().sum();
        if (sum - 1.0).abs() > 1e-9 || self.class_mix.iter().any(|w| !(*w >= 0.0)) {
            return Err(Error::invalid(
                "class_mix",
                format!("weights must be non-negative and sum to 1, got {sum}"),
            ));
        }
        if self.canvas.0 == 0 || self.canvas.1 == 0 {
            return Err(Error::invalid("canvas", "canvas must be non-empty"));
        }
        if self.min_objects > self.max_objects {
            return Err(Error::invalid("min_objects", "min_objects exceeds max_objects"));
        }
        if !(self.head_radius > 0.0) || !(self.object_radius > 0.0) {
            return Err(Error::InfeasibleConfig("radii must be positive".into()));
        }
        let (lo, hi) = self.left_x_range();
        if lo > hi {
            return Err(Error::InfeasibleConfig(format!(
                "head radius {} leaves no room for two heads",
                self.head_radius
            )));
        }
        let (ylo, yhi) = self.y_range();
        if ylo > yhi {
            return Err(Error::InfeasibleConfig(format!(
                "head radius {} does not fit vertically",
                self.head_radius
            )));
        }
        if 2.0 * self.object_radius >= 1.0 {
            return Err(Error::InfeasibleConfig("object radius too large".into()));
        }
        if self.class_mix[GazeClass::Share.index()] > 0.0 && self.max_objects == 0 {
            return Err(Error::InfeasibleConfig(
                "shared-object scenes need max_objects >= 1".into(),
            ));
        }
        Ok(())
    }

    /// Horizontal range for the left head centre; the right head mirrors it.
    fn left_x_range(&self) -> (f64, f64) {
        (self.head_radius + 0.04, 0.42 - self.head_radius)
    }

    fn y_range(&self) -> (f64, f64) {
        (self.head_radius + 0.2, 0.8 - self.head_radius)
    }
}

/// Two persons (index 0 is the principal) and a set of disc-shaped objects.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticScene {
    pub canvas: (u32, u32),
    pub persons: [Person; 2],
    pub objects: Vec<Disc>,
    pub rng_seed: u64,
}

impl SyntheticScene {
    pub fn gp_label(&self) -> GazeClass {
        derive_gp_label(&self.persons, &self.objects)
    }

    /// The same scene with principal and associate exchanged.
    pub fn role_swapped(&self) -> Self {
        SyntheticScene {
            persons: [self.persons[1], self.persons[0]],
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (i, p) in self.persons.iter().enumerate() {
            let n = (p.gaze_dir[0].powi(2) + p.gaze_dir[1].powi(2)).sqrt();
            if (n - 1.0).abs() > 1e-9 {
                return Err(Error::invalid(format!("persons[{i}].gaze_dir"), format!("norm {n}")));
            }
            if !inside(&p.head()) {
                return Err(Error::invalid(format!("persons[{i}]"), "head leaves the canvas"));
            }
        }
        if overlaps(&self.persons[0].head(), &self.persons[1].head(), 0.0) {
            return Err(Error::invalid("persons", "heads overlap"));
        }
        for (k, o) in self.objects.iter().enumerate() {
            if !inside(o) {
                return Err(Error::invalid(format!("objects[{k}]"), "object leaves the canvas"));
            }
        }
        Ok(())
    }
}

fn inside(d: &Disc) -> bool {
    d.center[0] - d.radius >= 0.0
        && d.center[0] + d.radius <= 1.0
        && d.center[1] - d.radius >= 0.0
        && d.center[1] + d.radius <= 1.0
}

fn overlaps(a: &Disc, b: &Disc, gap: f64) -> bool {
    let dx = a.center[0] - b.center[0];
    let dy = a.center[1] - b.center[1];
    (dx * dx + dy * dy).sqrt() < a.radius + b.radius + gap
}

fn angle_to(from: [f64; 2], to: [f64; 2]) -> f64 {
    (to[1] - from[1]).atan2(to[0] - from[0])
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// Direction towards `target` with a random angular jitter small enough that
/// the ray still passes within `AIM_FRACTION` of its radius.
fn aim(rng: &mut ChaCha8Rng, from: [f64; 2], target: &Disc) -> f64 {
    let d = dist(from, target.center);
    let max_jitter = (AIM_FRACTION * target.radius / d).min(1.0).asin();
    angle_to(from, target.center) + rng.gen_range(-max_jitter..=max_jitter)
}

/// Uniform direction from the angular complement of every disc in `avoid`
/// (each widened by `RAY_MARGIN`).
fn free_direction(rng: &mut ChaCha8Rng, from: [f64; 2], avoid: &[Disc]) -> Result<f64> {
    let mut blocked: Vec<(f64, f64)> = Vec::new();
    for d in avoid {
        let dd = dist(from, d.center);
        let half = ((d.radius + RAY_MARGIN) / dd).min(1.0).asin();
        let c = angle_to(from, d.center);
        let (lo, hi) = (c - half, c + half);
        // Normalise into [0, 2π), splitting wrap-around intervals.
        let lo_n = lo.rem_euclid(TAU);
        let hi_n = lo_n + (hi - lo);
        if hi_n > TAU {
            blocked.push((lo_n, TAU));
            blocked.push((0.0, hi_n - TAU));
        } else {
            blocked.push((lo_n, hi_n));
        }
    }
    blocked.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut free = Vec::new();
    let mut cursor = 0.0;
    for (lo, hi) in blocked {
        if lo > cursor {
            free.push((cursor, lo));
        }
        cursor = f64::max(cursor, hi);
    }
    if cursor < TAU {
        free.push((cursor, TAU));
    }
    let total: f64 = free.iter().map(|(a, b)| b - a).sum();
    if total <= 1e-6 {
        return Err(Error::InfeasibleConfig(
            "no unobstructed gaze direction is available".into(),
        ));
    }
    let mut pick = rng.gen_range(0.0..total);
    for (a, b) in &free {
        let w = b - a;
        if pick < w {
            return Ok(a + pick);
        }
        pick -= w;
    }
    Ok(free.last().map(|(_, b)| b - 1e-9).unwrap_or(0.0))
}

fn person_at(center: [f64; 2], radius: f64, angle: f64) -> Person {
    Person {
        center,
        head_radius: radius,
        gaze_dir: unit(angle),
    }
}

fn hits(p: &Person, discs: &[Disc]) -> Vec<usize> {
    discs
        .iter()
        .enumerate()
        .filter(|(_, d)| looks_at(p, d))
        .map(|(k, _)| k)
        .collect()
}

/// Candidate object centres on a jittered 9×9 lattice, in random order.
fn object_candidates(rng: &mut ChaCha8Rng, radius: f64) -> Vec<[f64; 2]> {
    let n = 9;
    let lo = radius + 0.01;
    let span = 1.0 - 2.0 * lo;
    let cell = span / n as f64;
    let mut out = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            let x = lo + cell * (i as f64 + rng.gen_range(0.2..0.8));
            let y = lo + cell * (j as f64 + rng.gen_range(0.2..0.8));
            out.push([x, y]);
        }
    }
    out.shuffle(rng);
    out
}

fn pick_class(rng: &mut ChaCha8Rng, mix: &[f64; 5]) -> GazeClass {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, w) in mix.iter().enumerate() {
        acc += w;
        if u < acc {
            return GazeClass::ALL[i];
        }
    }
    // Rounding slack: last class with positive weight.
    let last = mix.iter().rposition(|w| *w > 0.0).unwrap_or(4);
    GazeClass::ALL[last]
}

/// Draws the target class from the mix, then builds geometry that realises
/// it. Deterministic in `(seed, config)`.
pub fn sample_scene(seed: u64, config: &SceneConfig) -> Result<SyntheticScene> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let class = pick_class(&mut rng, &config.class_mix);
    build_scene(&mut rng, seed, config, class)
}

/// Builds a scene of the requested class.
pub fn sample_scene_of_class(seed: u64, config: &SceneConfig, class: GazeClass) -> Result<SyntheticScene> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    build_scene(&mut rng, seed, config, class)
}

fn build_scene(
    rng: &mut ChaCha8Rng,
    seed: u64,
    config: &SceneConfig,
    class: GazeClass,
) -> Result<SyntheticScene> {
    let r = config.head_radius;
    let (xlo, xhi) = config.left_x_range();
    let (ylo, yhi) = config.y_range();
    let left = [rng.gen_range(xlo..=xhi), rng.gen_range(ylo..=yhi)];
    let right = [1.0 - rng.gen_range(xlo..=xhi), rng.gen_range(ylo..=yhi)];
    let principal_left: bool = rng.gen();
    let (pc, ac) = if principal_left { (left, right) } else { (right, left) };
    let p_head = Disc { center: pc, radius: r };
    let a_head = Disc { center: ac, radius: r };

    let min_objects = if class == GazeClass::Share {
        config.min_objects.max(1)
    } else {
        config.min_objects
    };
    let n_objects = rng.gen_range(min_objects..=config.max_objects.max(min_objects));
    let ro = config.object_radius;
    let mut objects: Vec<Disc> = Vec::with_capacity(n_objects);
    let candidates = object_candidates(rng, ro);
    let clear_of_heads = |c: [f64; 2]| {
        let d = Disc { center: c, radius: ro };
        !overlaps(&d, &p_head, 0.03) && !overlaps(&d, &a_head, 0.03)
    };

    if class == GazeClass::Share {
        // The shared object must be visible to both persons past the other head.
        let shared = candidates.iter().copied().find(|&c| {
            if !clear_of_heads(c) {
                return false;
            }
            let to_obj_p = person_at(pc, r, angle_to(pc, c));
            let to_obj_a = person_at(ac, r, angle_to(ac, c));
            let widen = |h: &Disc| Disc {
                center: h.center,
                radius: h.radius + RAY_MARGIN + ro,
            };
            !looks_at(&to_obj_p, &widen(&a_head))
                && !looks_at(&to_obj_a, &widen(&p_head))
        });
        match shared {
            Some(c) => objects.push(Disc { center: c, radius: ro }),
            None => {
                return Err(Error::InfeasibleConfig(
                    "no position for a shared object".into(),
                ))
            }
        }
    }
    for c in candidates.iter().copied() {
        if objects.len() >= n_objects {
            break;
        }
        let d = Disc { center: c, radius: ro };
        if clear_of_heads(c) && objects.iter().all(|o| !overlaps(o, &d, 0.02)) {
            objects.push(d);
        }
    }
    // Shuffle so the shared object is not always index 0.
    objects.shuffle(rng);

    let all_for = |who_head: &Disc| -> Vec<Disc> {
        let mut v = vec![*who_head];
        v.extend(objects.iter().copied());
        v
    };

    let (p_angle, a_angle) = match class {
        GazeClass::Mutual => (aim(rng, pc, &a_head), aim(rng, ac, &p_head)),
        GazeClass::Share => {
            let k = objects
                .iter()
                .position(|o| {
                    let p = person_at(pc, r, angle_to(pc, o.center));
                    let a = person_at(ac, r, angle_to(ac, o.center));
                    let wa = Disc { radius: a_head.radius + RAY_MARGIN + ro, ..a_head };
                    let wp = Disc { radius: p_head.radius + RAY_MARGIN + ro, ..p_head };
                    !looks_at(&p, &wa) && !looks_at(&a, &wp)
                })
                .expect("shared object placed above");
            let target = objects[k];
            (aim(rng, pc, &target), aim(rng, ac, &target))
        }
        GazeClass::Single => {
            let pa = aim(rng, pc, &a_head);
            let p = person_at(pc, r, pa);
            let aa = secondary_direction(rng, ac, &p_head, &objects, &p)?;
            (pa, aa)
        }
        GazeClass::Miss => {
            let aa = aim(rng, ac, &p_head);
            let a = person_at(ac, r, aa);
            let pa = secondary_direction(rng, pc, &a_head, &objects, &a)?;
            (pa, aa)
        }
        GazeClass::Void => {
            let pa = if !objects.is_empty() && rng.gen_bool(0.5) {
                let k = rng.gen_range(0..objects.len());
                let cand = aim(rng, pc, &objects[k]);
                if looks_at(&person_at(pc, r, cand), &Disc { radius: r + RAY_MARGIN, ..a_head }) {
                    free_direction(rng, pc, &all_for(&a_head))?
                } else {
                    cand
                }
            } else {
                free_direction(rng, pc, &all_for(&a_head))?
            };
            let p = person_at(pc, r, pa);
            let aa = secondary_direction(rng, ac, &p_head, &objects, &p)?;
            (pa, aa)
        }
    };

    let scene = SyntheticScene {
        canvas: config.canvas,
        persons: [person_at(pc, r, p_angle), person_at(ac, r, a_angle)],
        objects,
        rng_seed: seed,
    };
    debug_assert_eq!(scene.gp_label(), class, "generator failed for seed {seed}");
    Ok(scene)
}

/// Direction for a person who must not look at `other_head` nor share an
/// object with `partner`: either an object the partner does not look at, or
/// an unobstructed direction.
fn secondary_direction(
    rng: &mut ChaCha8Rng,
    from: [f64; 2],
    other_head: &Disc,
    objects: &[Disc],
    partner: &Person,
) -> Result<f64> {
    let partner_hits = hits(partner, objects);
    let free_objects: Vec<usize> = (0..objects.len())
        .filter(|k| !partner_hits.contains(k))
        .collect();
    if !free_objects.is_empty() && rng.gen_bool(0.5) {
        let k = free_objects[rng.gen_range(0..free_objects.len())];
        let angle = aim(rng, from, &objects[k]);
        let me = person_at(from, other_head.radius, angle);
        let widened = Disc {
            radius: other_head.radius + RAY_MARGIN,
            ..*other_head
        };
        let shares = hits(&me, objects).iter().any(|k| partner_hits.contains(k));
        if !looks_at(&me, &widened) && !shares {
            return Ok(angle);
        }
    }
    let mut avoid = vec![*other_head];
    avoid.extend(objects.iter().copied());
    free_direction(rng, from, &avoid)
}
