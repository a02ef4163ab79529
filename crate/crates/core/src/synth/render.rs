use super::scene::SyntheticScene;
use crate::data::Raster;
use crate::error::{Error, Result};

pub const BACKGROUND: [f32; 3] = [0.92, 0.92, 0.9];
pub const WEDGE: [f32; 3] = [0.08, 0.08, 0.1];
/// Head colours by role: principal, associate.
pub const PERSON_COLORS: [[f32; 3]; 2] = [[0.25, 0.7, 0.35], [0.9, 0.45, 0.7]];
/// Object colours and the names used in scene descriptions.
pub const OBJECT_PALETTE: [(&str, [f32; 3]); 6] = [
    ("red", [0.85, 0.15, 0.15]),
    ("blue", [0.15, 0.3, 0.85]),
    ("orange", [0.95, 0.6, 0.1]),
    ("purple", [0.55, 0.25, 0.7]),
    ("teal", [0.1, 0.6, 0.6]),
    ("yellow", [0.9, 0.85, 0.15]),
];
/// Half opening angle of the gaze wedge drawn on each head.
pub const WEDGE_HALF_ANGLE_DEG: f64 = 35.0;

pub fn object_color(k: usize) -> (&'static str, [f32; 3]) {
    OBJECT_PALETTE[k % OBJECT_PALETTE.len()]
}

/// Rasterises a scene at `size × size`: objects as filled squares, heads as
/// discs with a dark wedge pointing along the gaze direction.
pub fn render_scene(scene: &SyntheticScene, size: usize) -> Result<Raster> {
    if size < 64 {
        return Err(Error::invalid("size", format!("render size {size} is below 64")));
    }
    let mut img = Raster::filled(size, size, BACKGROUND);
    let px = |i: usize| (i as f64 + 0.5) / size as f64;
    let cos_wedge = WEDGE_HALF_ANGLE_DEG.to_radians().cos();

    for (k, o) in scene.objects.iter().enumerate() {
        let color = object_color(k).1;
        for y in 0..size {
            let fy = px(y);
            if (fy - o.center[1]).abs() > o.radius {
                continue;
            }
            for x in 0..size {
                if (px(x) - o.center[0]).abs() <= o.radius {
                    img.set_pixel(x, y, color);
                }
            }
        }
    }
    for (i, p) in scene.persons.iter().enumerate() {
        let r = p.head_radius;
        for y in 0..size {
            let dy = px(y) - p.center[1];
            if dy.abs() > r {
                continue;
            }
            for x in 0..size {
                let dx = px(x) - p.center[0];
                let d2 = dx * dx + dy * dy;
                if d2 > r * r {
                    continue;
                }
                let d = d2.sqrt();
                let along = dx * p.gaze_dir[0] + dy * p.gaze_dir[1];
                let in_wedge = d > 0.0 && along >= cos_wedge * d;
                img.set_pixel(x, y, if in_wedge { WEDGE } else { PERSON_COLORS[i] });
            }
        }
    }
    Ok(img)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{sample_scene, SceneConfig};

    #[test]
    fn rendering_is_deterministic() {
        let s = sample_scene(7, &SceneConfig::default()).unwrap();
        assert_eq!(render_scene(&s, 128).unwrap(), render_scene(&s, 128).unwrap());
    }

    #[test]
    fn small_sizes_are_rejected() {
        let s = sample_scene(7, &SceneConfig::default()).unwrap();
        assert!(render_scene(&s, 32).is_err());
    }

    fn blobs(img: &Raster) -> usize {
        let (w, h) = (img.width(), img.height());
        let mut seen = vec![false; w * h];
        let mut count = 0;
        for start in 0..w * h {
            if seen[start] || img.pixel(start % w, start / w) == BACKGROUND {
                continue;
            }
            count += 1;
            let mut stack = vec![start];
            seen[start] = true;
            while let Some(i) = stack.pop() {
                let (x, y) = ((i % w) as i64, (i / w) as i64);
                for (nx, ny) in [(x + 1, y), (x - 1, y), (x, y + 1), (x, y - 1)] {
                    if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                        continue;
                    }
                    let j = ny as usize * w + nx as usize;
                    if !seen[j] && img.pixel(nx as usize, ny as usize) != BACKGROUND {
                        seen[j] = true;
                        stack.push(j);
                    }
                }
            }
        }
        count
    }

    #[test]
    fn object_free_scene_has_two_blobs() {
        let cfg = SceneConfig {
            min_objects: 0,
            max_objects: 0,
            class_mix: [0.0, 0.25, 0.25, 0.25, 0.25],
            ..SceneConfig::default()
        };
        for seed in 0..10 {
            let s = sample_scene(seed, &cfg).unwrap();
            assert!(s.objects.is_empty());
            assert_eq!(blobs(&render_scene(&s, 224).unwrap()), 2);
        }
    }

    #[test]
    fn wedge_centroid_recovers_gaze_direction() {
        let cfg = SceneConfig::default();
        for seed in 0..40 {
            let s = sample_scene(seed, &cfg).unwrap();
            let size = 224;
            let img = render_scene(&s, size).unwrap();
            for p in &s.persons {
                let (mut sx, mut sy, mut n) = (0.0, 0.0, 0.0);
                for y in 0..size {
                    for x in 0..size {
                        let fx = (x as f64 + 0.5) / size as f64 - p.center[0];
                        let fy = (y as f64 + 0.5) / size as f64 - p.center[1];
                        if fx * fx + fy * fy <= p.head_radius * p.head_radius
                            && img.pixel(x, y) == WEDGE
                        {
                            sx += fx;
                            sy += fy;
                            n += 1.0;
                        }
                    }
                }
                assert!(n > 0.0);
                let est = (sy / n).atan2(sx / n);
                let truth = p.gaze_angle();
                let mut diff = (est - truth).abs();
                if diff > std::f64::consts::PI {
                    diff = 2.0 * std::f64::consts::PI - diff;
                }
                assert!(diff.to_degrees() < 5.0, "seed {seed}: {est} vs {truth}");
            }
        }
    }
}
