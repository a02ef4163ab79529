//! In-memory synthetic pipeline: generate scenes, pretrain, classify,
//! evaluate. Used by the acceptance suite and the `ablate` command.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{DyadSample, GazeClass, Raster};
use crate::error::Result;
use crate::eval::{attention_report, evaluate_predictions, predict, AttentionSummary, MetricsReport, Taxonomy};
use crate::model::{Checkpoint, CsGaze, ModelConfig, Modalities, PhaseTag, PreparedDyad, PreparedGaze};
use crate::synth::{describe_scene, gazefollow_samples, render_scene, SceneConfig, SyntheticDataset};
use crate::train::{pretrain_phase1, prepare_phase2, train_phase2, TrainConfig, TrainLog};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToyConfig {
    pub train_scenes: usize,
    pub test_scenes: usize,
    pub data_seed: u64,
    pub scene: SceneConfig,
    pub model: ModelConfig,
    pub pretrain: TrainConfig,
    pub classify: TrainConfig,
}

impl Default for ToyConfig {
    fn default() -> Self {
        let mut classify = TrainConfig::classify();
        classify.batch_size = 32;
        classify.max_epochs = 40;
        let mut pretrain = TrainConfig::pretrain();
        pretrain.batch_size = 32;
        ToyConfig {
            train_scenes: 2000,
            test_scenes: 400,
            data_seed: 2024,
            scene: SceneConfig::default(),
            model: ModelConfig::compact(),
            pretrain,
            classify,
        }
    }
}

/// Prepared splits. Gaze-following samples come from the training scenes only.
#[derive(Debug, Clone)]
pub struct ToyData {
    pub train_gaze: Vec<PreparedGaze>,
    pub train: Vec<PreparedDyad>,
    pub test: Vec<PreparedDyad>,
}

fn prepare_split(set: &SyntheticDataset, model: &ModelConfig) -> Result<(Vec<PreparedDyad>, Vec<PreparedGaze>)> {
    let rows: Vec<(PreparedDyad, Vec<PreparedGaze>)> = (0..set.scenes.len())
        .into_par_iter()
        .map(|i| {
            let scene = &set.scenes[i];
            let image: Raster = render_scene(scene, crate::data::FACE_SIZE)?;
            let sample: DyadSample = set.dyad_sample(i, format!("{}.png", set.ids[i]).into());
            let dyad = PreparedDyad::new(&image, &sample, &describe_scene(scene), model)?;
            let gaze = gazefollow_samples(scene, &set.ids[i], &sample.image)
                .iter()
                .map(|g| PreparedGaze::new(&image, g))
                .collect::<Result<Vec<_>>>()?;
            Ok((dyad, gaze))
        })
        .collect::<Result<_>>()?;
    let mut dyads = Vec::with_capacity(rows.len());
    let mut gaze = Vec::new();
    for (d, g) in rows {
        dyads.push(d);
        gaze.extend(g);
    }
    Ok((dyads, gaze))
}

pub fn build_toy_data(cfg: &ToyConfig) -> Result<ToyData> {
    let train_set = SyntheticDataset::generate(cfg.train_scenes, cfg.data_seed, &cfg.scene, "train-")?;
    let test_set = SyntheticDataset::generate(cfg.test_scenes, cfg.data_seed ^ 0x7E57, &cfg.scene, "test-")?;
    let (train, train_gaze) = prepare_split(&train_set, &cfg.model)?;
    let (test, _) = prepare_split(&test_set, &cfg.model)?;
    Ok(ToyData { train_gaze, train, test })
}

/// Phase 1 for one seed; the result is shared by every phase-2 variant.
pub fn toy_pretrain(data: &ToyData, cfg: &ToyConfig, seed: u64) -> Result<Checkpoint> {
    let mut model = CsGaze::new(cfg.model.clone(), seed)?;
    let mut tc = cfg.pretrain.clone();
    tc.seed = seed;
    let log = pretrain_phase1(&mut model, &data.train_gaze, &tc)?;
    Ok(Checkpoint {
        model,
        phase: PhaseTag::PretrainComplete,
        step: log.steps,
        log: Some(log),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyOutcome {
    pub seed: u64,
    pub modalities: String,
    pub report: MetricsReport,
    pub attention: AttentionSummary,
    pub log: TrainLog,
}

/// Phase 2 from `pretrained` with the given input branches, then test-set
/// evaluation.
pub fn toy_classify(
    data: &ToyData,
    pretrained: &Checkpoint,
    cfg: &ToyConfig,
    seed: u64,
    modalities: Modalities,
) -> Result<(CsGaze, ToyOutcome)> {
    let mut tc = cfg.classify.clone();
    tc.seed = seed;
    tc.modalities = modalities;
    let mut model = prepare_phase2(Some(pretrained), cfg.model.clone(), seed, &tc)?;
    let log = train_phase2(&mut model, &data.train, &tc)?;
    let names = Taxonomy::GazePattern.class_names();
    let out = predict(&model, &data.test, tc.forward_options())?;
    let records: Vec<_> = out.iter().map(|(r, _)| r.clone()).collect();
    let report = evaluate_predictions(&records, &data.test, &names)?;
    let traces: Vec<_> = out
        .into_iter()
        .zip(&data.test)
        .filter_map(|((_, t), d)| d.label.map(|l| (t, l)))
        .collect();
    let attention = attention_report(&traces, &names);
    Ok((
        model,
        ToyOutcome {
            seed,
            modalities: modalities.label(),
            report,
            attention,
            log,
        },
    ))
}

/// Test-set class histogram in [`GazeClass`] order.
pub fn label_histogram(data: &[PreparedDyad]) -> [usize; GazeClass::COUNT] {
    let mut h = [0; GazeClass::COUNT];
    for d in data {
        if let Some(l) = d.label {
            h[l] += 1;
        }
    }
    h
}
