use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::nn::Grads;

pub(crate) fn tiny_config() -> ModelConfig {
    ModelConfig {
        encoder: EncoderConfig {
            face_dim: 8,
            scene_dim: 8,
            text_dim: 8,
            text_token_cap: 6,
            attention_dim: 8,
            attention_heads: 2,
            conv_channels: [2, 4],
            vocab_buckets: 32,
            ..EncoderConfig::default()
        },
        classifier_hidden: 8,
        ..ModelConfig::default()
    }
}

fn random_dyad(seed: u64, config: &ModelConfig, label: usize) -> PreparedDyad {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scene_len = 3 * (FACE_SIZE / SCENE_POOL).pow(2);
    let face_len = 3 * (FACE_SIZE / FACE_POOL).pow(2);
    let mut v = |n: usize| (0..n).map(|_| rng.gen::<f64>()).collect::<Vec<f64>>();
    PreparedDyad {
        sample_id: format!("s{seed}"),
        scene: v(scene_len),
        faces: [v(face_len), v(face_len)],
        text: TextInput::hashed("the left person looks at the red ball near the right person", &config.encoder).unwrap(),
        label: Some(label),
    }
}

fn random_gaze(seed: u64) -> PreparedGaze {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scene_len = 3 * (FACE_SIZE / SCENE_POOL).pow(2);
    let face_len = 3 * (FACE_SIZE / FACE_POOL).pow(2);
    PreparedGaze {
        sample_id: format!("g{seed}"),
        scene: (0..scene_len).map(|_| rng.gen()).collect(),
        face: (0..face_len).map(|_| rng.gen()).collect(),
        head: HeadBox::new(0.1, 0.4, 0.25, 0.55).unwrap(),
        gaze_point: [0.7, 0.3],
    }
}

/// Small random offsets so no pre-activation sits exactly on a ReLU kink
/// (zero biases over an all-zero feature map otherwise do).
fn jitter(model: &mut CsGaze, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ids: Vec<_> = model.store.ids().collect();
    for id in ids {
        for v in model.store.get_mut(id) {
            *v += rng.gen_range(-0.05..0.05);
        }
    }
}

/// Largest relative gap between analytic and central-difference gradients.
fn max_rel_error(model: &mut CsGaze, analytic: &Grads, loss: &dyn Fn(&CsGaze) -> f64, skip: &[&str]) -> (f64, String) {
    let h = 1e-6;
    let mut worst = (0.0, String::new());
    let ids: Vec<_> = model.store.ids().collect();
    for id in ids {
        let name = model.store.tensor(id).name.clone();
        if skip.iter().any(|s| name.starts_with(s)) {
            continue;
        }
        for k in 0..model.store.get(id).len() {
            let orig = model.store.get(id)[k];
            model.store.get_mut(id)[k] = orig + h;
            let lp = loss(model);
            model.store.get_mut(id)[k] = orig - h;
            let lm = loss(model);
            model.store.get_mut(id)[k] = orig;
            let num = (lp - lm) / (2.0 * h);
            let ana = analytic.get(id)[k];
            let err = (num - ana).abs() / (num.abs() + ana.abs()).max(1e-5);
            if err > worst.0 {
                worst = (err, format!("{name}[{k}]: analytic {ana:e} numeric {num:e}"));
            }
        }
    }
    worst
}

#[test]
fn shapes_and_finiteness() {
    let cfg = tiny_config();
    let m = CsGaze::new(cfg.clone(), 1).unwrap();
    let t = m.forward(&random_dyad(3, &cfg, 0), ForwardOptions::default()).unwrap();
    assert_eq!(t.logits.len(), 5);
    assert_eq!(t.f_merged.len(), 8);
    assert_eq!(t.s_fused.len(), 8);
    assert!(t.logits.iter().all(|v| v.is_finite()));
    assert!((t.merge_attention[0] + t.merge_attention[1] - 1.0).abs() < 1e-12);
}

#[test]
fn forward_is_deterministic() {
    let cfg = tiny_config();
    let d = random_dyad(5, &cfg, 1);
    let a = CsGaze::new(cfg.clone(), 9).unwrap().forward(&d, ForwardOptions::default()).unwrap();
    let b = CsGaze::new(cfg, 9).unwrap().forward(&d, ForwardOptions::default()).unwrap();
    assert_eq!(a.logits, b.logits);
}

#[test]
fn fuse_faces_examples() {
    let mut m = CsGaze::new(tiny_config(), 0).unwrap();
    let fp = vec![1.0, 2.0, 3.0];
    let fa = vec![3.0, 0.0, -1.0];
    assert_eq!(m.fuse_faces(&fp, &fa, false).unwrap(), vec![2.0, 1.0, 1.0]);
    assert_eq!(m.fuse_faces(&fp, &fp, false).unwrap(), fp);
    assert_eq!(m.fuse_faces(&fp, &fa, true).unwrap(), vec![2.0, 1.0, 1.0]);
    let id = m.fusion.alpha_logits;
    m.store.get_mut(id).copy_from_slice(&[4f64.ln(), 0.0]);
    let a = m.fusion.alpha(&m.store, false);
    assert!((a[0] - 0.8).abs() < 1e-12 && (a[1] - 0.2).abs() < 1e-12);
    assert_eq!(m.fusion.alpha(&m.store, true), [0.5, 0.5]);
    assert!(m.fuse_faces(&fp, &fa[..2], false).is_err());
}

#[test]
fn single_text_token_gets_all_attention() {
    let cfg = tiny_config();
    let m = CsGaze::new(cfg.clone(), 2).unwrap();
    let scene = m.scene.forward(&m.store, &random_dyad(1, &cfg, 0).scene).unwrap().0;
    let text = m.text_encode("hello").unwrap();
    let (_, probs) = m.cross_attend(&scene, &text).unwrap();
    let tk = cfg.encoder.text_token_cap;
    for row in probs.chunks(tk) {
        assert!((row[0] - 1.0).abs() < 1e-12);
        assert!(row[1..].iter().all(|&p| p == 0.0));
    }
}

#[test]
fn identical_merge_tokens_split_evenly() {
    let m = CsGaze::new(tiny_config(), 4).unwrap();
    // Make the face projection the identity with zero bias.
    let mut m = m;
    let w = m.fusion.face_proj.w;
    let b = m.fusion.face_proj.b;
    for (i, v) in m.store.get_mut(w).iter_mut().enumerate() {
        *v = if i % 9 == 0 { 1.0 } else { 0.0 };
    }
    m.store.get_mut(b).iter_mut().for_each(|v| *v = 0.0);
    let x = vec![0.3, -0.2, 0.5, 0.1, 0.0, 0.9, -0.4, 0.2];
    let (_, att) = m.self_attend_merge(&x, &x).unwrap();
    assert!((att[0] - 0.5).abs() < 1e-12 && (att[1] - 0.5).abs() < 1e-12);
}

#[test]
fn zero_classifier_is_uniform() {
    let mut m = CsGaze::new(tiny_config(), 4).unwrap();
    for id in [m.fusion.output.w, m.fusion.output.b] {
        m.store.get_mut(id).iter_mut().for_each(|v| *v = 0.0);
    }
    let p = crate::data::softmax(&m.classify(&[1.0; 8]));
    assert!(p.iter().all(|&v| (v - 0.2).abs() < 1e-15));
}

#[test]
fn binary_and_ablated_wirings_run() {
    let cfg = tiny_config().with_classes(2);
    let m = CsGaze::new(cfg.clone(), 6).unwrap();
    let d = random_dyad(2, &cfg, 1);
    let opts = ForwardOptions {
        modalities: Modalities::ALL,
        fixed_equal_alpha: true,
    };
    let t = m.forward(&d, opts).unwrap();
    assert_eq!(t.logits.len(), 2);
    assert_eq!(t.alpha, [0.5, 0.5]);
    for modalities in Modalities::TABLE {
        let t = m
            .forward(&d, ForwardOptions { modalities, fixed_equal_alpha: false })
            .unwrap();
        assert!(t.logits.iter().all(|v| v.is_finite()));
        if !modalities.face {
            assert!(t.f_merged.iter().all(|&v| v == 0.0));
        }
    }
}

#[test]
fn modalities_labels_round_trip() {
    for m in Modalities::TABLE {
        assert_eq!(Modalities::parse(&m.label()).unwrap(), m);
    }
    assert!(Modalities::parse("F+X").is_err());
}

#[test]
fn dyad_gradients_match_finite_differences() {
    for (seed, direction) in [(0, CrossDirection::SceneQueriesText), (1, CrossDirection::TextQueriesScene)] {
        let cfg = ModelConfig {
            cross_direction: direction,
            ..tiny_config()
        };
        let mut m = CsGaze::new(cfg.clone(), seed).unwrap();
        jitter(&mut m, seed);
        let d = random_dyad(seed + 10, &cfg, 3);
        let opts = ForwardOptions::default();
        let mut g = Grads::zeros_like(&m.store);
        m.dyad_loss_and_grad(&d, opts, Some(&mut g)).unwrap();
        let loss = |mm: &CsGaze| mm.dyad_loss_and_grad(&d, opts, None).unwrap().0;
        let (err, at) = max_rel_error(&mut m, &g, &loss, &[HEATMAP_PREFIX]);
        assert!(err < 1e-4, "{direction:?}: {err:e} at {at}");
    }
}

#[test]
fn gaze_gradients_match_finite_differences() {
    for aux in [false, true] {
        let cfg = ModelConfig {
            aux_heads: aux,
            ..tiny_config()
        };
        let mut m = CsGaze::new(cfg, 3).unwrap();
        jitter(&mut m, 3);
        let s = random_gaze(7);
        let mut g = Grads::zeros_like(&m.store);
        m.gaze_loss_and_grad(&s, Some(&mut g)).unwrap();
        let loss = |mm: &CsGaze| mm.gaze_loss_and_grad(&s, None).unwrap();
        let (err, at) = max_rel_error(&mut m, &g, &loss, &[TEXT_PREFIX, FUSION_PREFIX]);
        assert!(err < 1e-4, "aux {aux}: {err:e} at {at}");
    }
}

#[test]
fn checkpoint_round_trip_is_bitwise() {
    let cfg = tiny_config();
    let m = CsGaze::new(cfg.clone(), 11).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    save_checkpoint(&m, PhaseTag::PretrainComplete, 42, None, &path).unwrap();
    let ck = load_checkpoint(&path).unwrap();
    assert_eq!(ck.phase, PhaseTag::PretrainComplete);
    assert_eq!(ck.step, 42);
    assert_eq!(ck.model.store, m.store);
    let d = random_dyad(1, &cfg, 0);
    let a = m.forward(&d, ForwardOptions::default()).unwrap();
    let b = ck.model.forward(&d, ForwardOptions::default()).unwrap();
    assert_eq!(a.logits, b.logits);
}

#[test]
fn corrupted_checkpoints_are_rejected() {
    let m = CsGaze::new(tiny_config(), 11).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    save_checkpoint(&m, PhaseTag::Initial, 0, None, &path).unwrap();
    let bytes = std::fs::read(&path).unwrap();
    let mut flipped = bytes.clone();
    let mid = flipped.len() / 2;
    flipped[mid] ^= 0x40;
    assert!(matches!(checkpoint::parse_checkpoint(&flipped), Err(Error::Checkpoint(_))));
    assert!(matches!(checkpoint::parse_checkpoint(&bytes[..bytes.len() - 10]), Err(Error::Checkpoint(_))));
    assert!(matches!(checkpoint::parse_checkpoint(b"nope"), Err(Error::Checkpoint(_))));
}

#[test]
fn transfer_copies_encoders_only() {
    let cfg = tiny_config();
    let src = CsGaze::new(cfg.clone(), 1).unwrap();
    let mut dst = CsGaze::new(cfg, 2).unwrap();
    dst.transfer_encoders(&src).unwrap();
    for (a, b) in src.store.tensors().iter().zip(dst.store.tensors()) {
        let encoder = [FACE_PREFIX, SCENE_PREFIX, HEATMAP_PREFIX].iter().any(|p| a.name.starts_with(p));
        let trivially_equal = a.data.iter().all(|&v| v == 0.0);
        if !trivially_equal {
            assert_eq!(a.data == b.data, encoder, "{}", a.name);
        }
    }
}
