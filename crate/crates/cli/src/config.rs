use std::path::Path;

use anyhow::{bail, Context, Result};
use clap::ValueEnum;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use csgaze_core::experiment::ToyConfig;
use csgaze_core::model::ModelConfig;
use csgaze_core::synth::{SceneConfig, SharedAttentionMode};
use csgaze_core::train::{LossKind, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    #[default]
    Multiclass,
    Binary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSection {
    pub count: usize,
    pub render_size: usize,
    pub shared_attention: SharedAttentionMode,
    pub scene: SceneConfig,
}

impl Default for SynthSection {
    fn default() -> Self {
        SynthSection {
            count: 100,
            render_size: 224,
            shared_attention: SharedAttentionMode::default(),
            scene: SceneConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    /// Runs of the AP protocol for binary evaluation.
    pub ap_runs: usize,
    /// Fraction of the evaluation set drawn (without replacement) per run.
    pub ap_subsample: f64,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection {
            ap_runs: 100,
            ap_subsample: 0.8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblateSection {
    pub toy: ToyConfig,
    pub seeds: Vec<u64>,
}

impl Default for AblateSection {
    fn default() -> Self {
        AblateSection {
            toy: ToyConfig::default(),
            seeds: vec![0],
        }
    }
}

/// Everything a command may read; loaded from JSON, then overridden by flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub mode: Mode,
    pub model: ModelConfig,
    pub synth: SynthSection,
    pub pretrain: TrainConfig,
    pub classify: TrainConfig,
    pub eval: EvalSection,
    pub ablate: AblateSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            mode: Mode::Multiclass,
            model: ModelConfig::default(),
            synth: SynthSection::default(),
            pretrain: TrainConfig::pretrain(),
            classify: TrainConfig::classify(),
            eval: EvalSection::default(),
            ablate: AblateSection::default(),
        }
    }
}

fn overlay(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                overlay(b.entry(k).or_insert(Value::Null), v);
            }
        }
        (b, o) => *b = o,
    }
}

pub struct Overrides {
    pub seed: Option<u64>,
    pub mode: Option<Mode>,
    pub fixed_equal_alpha: bool,
    pub from_scratch: bool,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(RunConfig::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
                let user: Value = serde_json::from_str(&text).with_context(|| format!("parsing config {}", p.display()))?;
                // Overlay onto the full defaults so a partial section keeps the
                // defaults of its own field (the pretrain and classify presets differ).
                let mut merged = serde_json::to_value(RunConfig::default())?;
                overlay(&mut merged, user);
                serde_json::from_value(merged).with_context(|| format!("parsing config {}", p.display()))
            }
        }
    }

    /// Applies flag overrides (flags win) and derives dependent settings.
    pub fn resolve(mut self, o: &Overrides) -> Result<Self> {
        if let Some(seed) = o.seed {
            self.seed = seed;
        }
        if let Some(mode) = o.mode {
            self.mode = mode;
        }
        self.pretrain.seed = self.seed;
        self.classify.seed = self.seed;
        if self.mode == Mode::Binary {
            self.model.num_classes = 2;
            self.classify.loss = LossKind::BinaryCe;
            self.classify.fixed_equal_alpha = true;
        } else if self.classify.loss == LossKind::BinaryCe {
            bail!("binary cross-entropy needs --mode binary");
        }
        if o.fixed_equal_alpha {
            self.classify.fixed_equal_alpha = true;
        }
        if o.from_scratch {
            self.classify.from_scratch = true;
        }
        self.model.validate()?;
        self.pretrain.validate()?;
        self.classify.validate()?;
        Ok(self)
    }
}
