use super::geometry::looks_at;
use super::render::object_color;
use super::scene::SyntheticScene;

/// What one person's gaze is directed at, in description terms.
enum Focus {
    Person,
    Object(usize),
    Away,
}

fn focus(scene: &SyntheticScene, who: usize) -> Focus {
    let me = &scene.persons[who];
    if looks_at(me, &scene.persons[1 - who].head()) {
        return Focus::Person;
    }
    let mut nearest: Option<(f64, usize)> = None;
    for (k, o) in scene.objects.iter().enumerate() {
        if looks_at(me, o) {
            let t = (o.center[0] - me.center[0]) * me.gaze_dir[0]
                + (o.center[1] - me.center[1]) * me.gaze_dir[1];
            if nearest.map_or(true, |(bt, _)| t < bt) {
                nearest = Some((t, k));
            }
        }
    }
    nearest.map_or(Focus::Away, |(_, k)| Focus::Object(k))
}

fn object_phrase(k: usize) -> String {
    format!("the {} box", object_color(k).0)
}

/// Templated description of how the two persons interact. Persons are named
/// by side, never by role, and the text never contains a gaze-class tag.
pub fn describe_scene(scene: &SyntheticScene) -> String {
    let (left, right) = if scene.persons[0].center[0] <= scene.persons[1].center[0] {
        (0, 1)
    } else {
        (1, 0)
    };
    let name = |who: usize| {
        if who == left {
            "the person on the left"
        } else {
            "the person on the right"
        }
    };
    let fl = focus(scene, left);
    let fr = focus(scene, right);
    let shared = scene.objects.iter().position(|o| {
        looks_at(&scene.persons[left], o) && looks_at(&scene.persons[right], o)
    });

    let relation = match (&fl, &fr, shared) {
        (Focus::Person, Focus::Person, _) => format!(
            "{} looks at {} and {} looks at {}.",
            name(left),
            name(right),
            name(right),
            name(left)
        ),
        (_, _, Some(k)) => format!(
            "{} and {} both look at {}.",
            name(left),
            name(right),
            object_phrase(k)
        ),
        _ => {
            let tail = |f: &Focus| match f {
                Focus::Away => "looks away".to_string(),
                Focus::Object(k) => format!("looks at {}", object_phrase(*k)),
                Focus::Person => unreachable!("handled by the head-directed branch"),
            };
            match (&fl, &fr) {
                (Focus::Person, other) => format!(
                    "{} looks at {}, who {}.",
                    name(left),
                    name(right),
                    tail(other)
                ),
                (other, Focus::Person) => format!(
                    "{} looks at {}, who {}.",
                    name(right),
                    name(left),
                    tail(other)
                ),
                (a, b) => format!("{} {}, and {} {}.", name(left), tail(a), name(right), tail(b)),
            }
        }
    };

    let dy = scene.persons[left].center[1] - scene.persons[right].center[1];
    let layout = if dy.abs() < 0.05 {
        "their heads are at about the same height.".to_string()
    } else if dy < 0.0 {
        format!("{} stands higher.", name(left))
    } else {
        format!("{} stands higher.", name(right))
    };
    let objects = match scene.objects.len() {
        0 => "there are no objects nearby.".to_string(),
        1 => "there is one box nearby.".to_string(),
        n => format!("there are {n} boxes nearby."),
    };
    format!("{relation} {layout} {objects}")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::GazeClass;
    use crate::synth::{sample_scene_of_class, SceneConfig};

    const LEFT_AT_RIGHT: &str = "the person on the left looks at the person on the right";
    const RIGHT_AT_LEFT: &str = "the person on the right looks at the person on the left";

    fn scene(class: GazeClass, seed: u64) -> SyntheticScene {
        sample_scene_of_class(seed, &SceneConfig::default(), class).unwrap()
    }

    #[test]
    fn mutual_mentions_both_directions() {
        for seed in 0..20 {
            let t = describe_scene(&scene(GazeClass::Mutual, seed));
            assert!(t.contains(LEFT_AT_RIGHT) && t.contains(RIGHT_AT_LEFT), "{t}");
        }
    }

    #[test]
    fn void_mentions_no_head_directed_clause() {
        for seed in 0..20 {
            let t = describe_scene(&scene(GazeClass::Void, seed));
            assert!(!t.contains("looks at the person"), "{t}");
        }
    }

    #[test]
    fn description_is_deterministic_and_tag_free() {
        for seed in 0..50 {
            for class in GazeClass::ALL {
                let s = scene(class, seed);
                let t = describe_scene(&s);
                assert_eq!(t, describe_scene(&s));
                for word in t.split(|c: char| !c.is_alphanumeric()) {
                    assert!(
                        GazeClass::ALL.iter().all(|c| !c.tag().eq_ignore_ascii_case(word)),
                        "{t}"
                    );
                }
            }
        }
    }

    #[test]
    fn single_and_miss_name_the_looker() {
        for seed in 0..20 {
            let s = scene(GazeClass::Single, seed);
            let t = describe_scene(&s);
            let principal_left = s.persons[0].center[0] < s.persons[1].center[0];
            let expected = if principal_left { LEFT_AT_RIGHT } else { RIGHT_AT_LEFT };
            assert!(t.starts_with(expected), "{t}");
            assert!(t.contains(", who"), "{t}");
        }
    }
}
