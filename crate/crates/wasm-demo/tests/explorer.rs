use csgaze_wasm_demo::{heatmap_side, heatmap_target, SceneExplorer};

#[test]
fn sampled_class_is_reported() {
    for (k, tag) in ["Share", "Mutual", "Single", "Miss", "Void"].iter().enumerate() {
        let e = SceneExplorer::sample(3, k as i32).unwrap();
        assert_eq!(e.summary().label, *tag);
    }
    assert!(SceneExplorer::sample(3, 9).is_err());
}

#[test]
fn turning_gaze_changes_the_label() {
    let mut e = SceneExplorer::sample(1, 1).unwrap();
    assert_eq!(e.summary().label, "Mutual");
    assert!(e.summary().pair_labels.lah_p_to_a);
    // Point the associate straight away from the principal.
    let p = e.head_center(0);
    let a = e.head_center(1);
    let away = (a[1] - p[1]).atan2(a[0] - p[0]).to_degrees();
    e.set_gaze_angle(1, away);
    let s = e.summary();
    assert_eq!(s.label, "Single");
    assert_eq!(s.swapped_label, "Miss");
    assert!((e.gaze_angle(1) - away).abs() < 1e-9);
}

#[test]
fn render_and_summary_are_well_formed() {
    let e = SceneExplorer::sample(7, -1).unwrap();
    assert_eq!(e.render_rgba(64).len(), 64 * 64 * 4);
    assert!(e.render_rgba(0).is_empty());
    let v: serde_json::Value = serde_json::from_str(&e.summary_json()).unwrap();
    assert!(v["context"].as_str().unwrap().len() > 10);
    assert_eq!(v["gaze_angles_deg"].as_array().unwrap().len(), 2);
}

#[test]
fn heatmap_peaks_at_the_point() {
    let n = heatmap_side();
    let h = heatmap_target(0.25, 0.75);
    assert_eq!(h.len(), n * n);
    let (argmax, _) = h.iter().enumerate().fold((0, f32::MIN), |b, (i, &v)| if v > b.1 { (i, v) } else { b });
    // round(0.25 × 63), round(0.75 × 63)
    assert_eq!((argmax % n, argmax / n), (16, 47));
    assert!(heatmap_target(1.5, 0.5).is_empty());
}
