use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Widths of the encoders and attention blocks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EncoderConfig {
    pub face_dim: usize,
    pub scene_dim: usize,
    /// Fixed by the scene backbone: a 7×7 grid.
    pub scene_token_count: usize,
    pub text_dim: usize,
    pub text_token_cap: usize,
    pub attention_dim: usize,
    pub attention_heads: usize,
    /// Channels of the stem and of the later stages of both conv stacks.
    pub conv_channels: [usize; 2],
    /// Buckets of each hashed text embedding table.
    pub vocab_buckets: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            face_dim: 256,
            scene_dim: 256,
            scene_token_count: 49,
            text_dim: 256,
            text_token_cap: 40,
            attention_dim: 256,
            attention_heads: 4,
            conv_channels: [8, 16],
            vocab_buckets: 4096,
        }
    }
}

/// Which side of the scene/context cross-attention supplies the queries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CrossDirection {
    #[default]
    SceneQueriesText,
    TextQueriesScene,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub encoder: EncoderConfig,
    pub num_classes: usize,
    pub classifier_hidden: usize,
    pub cross_direction: CrossDirection,
    /// Head-location and gaze-vector regression heads during pretraining.
    pub aux_heads: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            encoder: EncoderConfig::default(),
            num_classes: 5,
            classifier_hidden: 256,
            cross_direction: CrossDirection::default(),
            aux_heads: false,
        }
    }
}

impl ModelConfig {
    /// Small widths that train in minutes on one CPU core.
    pub fn compact() -> Self {
        ModelConfig {
            encoder: EncoderConfig {
                face_dim: 32,
                scene_dim: 32,
                text_dim: 32,
                attention_dim: 32,
                vocab_buckets: 1024,
                ..EncoderConfig::default()
            },
            classifier_hidden: 32,
            ..ModelConfig::default()
        }
    }

    pub fn with_classes(mut self, n: usize) -> Self {
        self.num_classes = n;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let e = &self.encoder;
        for (name, v) in [
            ("face_dim", e.face_dim),
            ("scene_dim", e.scene_dim),
            ("text_dim", e.text_dim),
            ("text_token_cap", e.text_token_cap),
            ("attention_dim", e.attention_dim),
            ("attention_heads", e.attention_heads),
            ("vocab_buckets", e.vocab_buckets),
            ("conv_channels", e.conv_channels[0].min(e.conv_channels[1])),
            ("classifier_hidden", self.classifier_hidden),
        ] {
            if v == 0 {
                return Err(Error::invalid(name, "must be positive"));
            }
        }
        if e.attention_dim % e.attention_heads != 0 {
            return Err(Error::invalid(
                "attention_dim",
                format!("{} is not divisible by {} heads", e.attention_dim, e.attention_heads),
            ));
        }
        if e.scene_token_count != super::encoders::SCENE_GRID * super::encoders::SCENE_GRID {
            return Err(Error::invalid(
                "scene_token_count",
                format!("the scene backbone yields {} tokens", super::encoders::SCENE_GRID.pow(2)),
            ));
        }
        if self.num_classes < 2 {
            return Err(Error::invalid("num_classes", "need at least two classes"));
        }
        Ok(())
    }
}
