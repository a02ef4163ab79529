use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Grads, Init, ParamId, ParamStore};

use super::config::EncoderConfig;

/// Lowercased whitespace tokens with surrounding punctuation stripped.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|w| {
            w.trim_matches(|c: char| !c.is_alphanumeric())
                .to_lowercase()
        })
        .filter(|w| !w.is_empty())
        .collect()
}

fn fnv1a(bytes: impl IntoIterator<Item = u8>) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Encoder input for one text: hashed ids or externally computed embeddings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TextInput {
    /// Bucket ids of each word and of each (word, position) pair.
    Hashed { words: Vec<usize>, positional: Vec<usize> },
    /// Precomputed `T_t × d_t` token embeddings (padding rows ignored).
    External { embeddings: Vec<f64>, mask: Vec<bool> },
}

impl TextInput {
    pub fn hashed(text: &str, config: &EncoderConfig) -> Result<Self> {
        let tokens = tokenize(text);
        if tokens.is_empty() {
            return Err(Error::invalid("text", "context text is empty"));
        }
        let b = config.vocab_buckets as u64;
        let mut words = Vec::new();
        let mut positional = Vec::new();
        for (pos, w) in tokens.iter().take(config.text_token_cap).enumerate() {
            words.push((fnv1a(w.bytes()) % b) as usize);
            let tagged = w.bytes().chain(*b"#").chain((pos as u32).to_le_bytes());
            positional.push((fnv1a(tagged) % b) as usize);
        }
        Ok(TextInput::Hashed { words, positional })
    }

    pub fn external(embeddings: Vec<f64>, mask: Vec<bool>, config: &EncoderConfig) -> Result<Self> {
        if mask.len() != config.text_token_cap || embeddings.len() != mask.len() * config.text_dim {
            return Err(Error::Shape(format!(
                "external text embeddings must be {}x{}",
                config.text_token_cap, config.text_dim
            )));
        }
        if !mask.iter().any(|&m| m) {
            return Err(Error::invalid("mask", "external text has no valid token"));
        }
        if embeddings.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("external text embeddings".into()));
        }
        Ok(TextInput::External { embeddings, mask })
    }
}

/// `T_t × d_t` token embeddings with a validity mask.
#[derive(Debug, Clone, PartialEq)]
pub struct TextFeatures {
    pub tokens: Vec<f64>,
    pub mask: Vec<bool>,
}

/// Hashed word plus word-position embedding tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TextEncoder {
    pub words: ParamId,
    pub positional: ParamId,
    cap: usize,
    dim: usize,
}

impl TextEncoder {
    pub(crate) fn new(store: &mut ParamStore, config: &EncoderConfig) -> Self {
        let shape = [config.vocab_buckets, config.text_dim];
        TextEncoder {
            words: store.add("text.words", &shape, Init::Uniform(0.5)),
            positional: store.add("text.positional", &shape, Init::Uniform(0.5)),
            cap: config.text_token_cap,
            dim: config.text_dim,
        }
    }

    pub fn forward(&self, store: &ParamStore, input: &TextInput) -> TextFeatures {
        match input {
            TextInput::External { embeddings, mask } => TextFeatures {
                tokens: embeddings.clone(),
                mask: mask.clone(),
            },
            TextInput::Hashed { words, positional } => {
                let d = self.dim;
                let mut tokens = vec![0.0; self.cap * d];
                let mut mask = vec![false; self.cap];
                let (e, q) = (store.get(self.words), store.get(self.positional));
                for (t, (&w, &p)) in words.iter().zip(positional).enumerate() {
                    mask[t] = true;
                    for k in 0..d {
                        tokens[t * d + k] = e[w * d + k] + q[p * d + k];
                    }
                }
                TextFeatures { tokens, mask }
            }
        }
    }

    pub(crate) fn backward(&self, grads: &mut Grads, input: &TextInput, dtokens: &[f64]) {
        if let TextInput::Hashed { words, positional } = input {
            let d = self.dim;
            for (t, (&w, &p)) in words.iter().zip(positional).enumerate() {
                let g = &dtokens[t * d..(t + 1) * d];
                crate::nn::add_into(&mut grads.get_mut(self.words)[w * d..(w + 1) * d], g);
                crate::nn::add_into(&mut grads.get_mut(self.positional)[p * d..(p + 1) * d], g);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> EncoderConfig {
        EncoderConfig {
            text_token_cap: 4,
            text_dim: 3,
            vocab_buckets: 64,
            ..EncoderConfig::default()
        }
    }

    #[test]
    fn tokenizer_strips_punctuation() {
        assert_eq!(tokenize("The box, nearby."), vec!["the", "box", "nearby"]);
        assert!(tokenize(" ... ").is_empty());
    }

    #[test]
    fn truncation_and_padding() {
        let c = cfg();
        let mut s = ParamStore::new(2);
        let enc = TextEncoder::new(&mut s, &c);
        let long = enc.forward(&s, &TextInput::hashed("a b c d e f", &c).unwrap());
        assert_eq!(long.mask, vec![true; 4]);
        let one = enc.forward(&s, &TextInput::hashed("word", &c).unwrap());
        assert_eq!(one.mask.iter().filter(|&&m| m).count(), 1);
        assert!(one.tokens[3..].iter().all(|&v| v == 0.0));
        let a = enc.forward(&s, &TextInput::hashed("a b", &c).unwrap());
        let b = enc.forward(&s, &TextInput::hashed("a b", &c).unwrap());
        assert_eq!(a, b);
        assert!(TextInput::hashed("", &c).is_err());
    }

    #[test]
    fn same_word_at_different_positions_differs() {
        let c = cfg();
        let mut s = ParamStore::new(2);
        let enc = TextEncoder::new(&mut s, &c);
        let f = enc.forward(&s, &TextInput::hashed("left left", &c).unwrap());
        assert_ne!(f.tokens[0..3], f.tokens[3..6]);
    }
}
