//! Language-model contract, sampling configuration and output cleaning.
//!
//! Backends implement [`LanguageModel`]; the free functions in this module
//! ([`fine_tune`], [`generate`], [`sequence_log_prob`]) enforce the shared
//! pre- and post-conditions so backends only do the model work.

mod clean;
mod toy;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::TrainingSequence;
use crate::error::{Error, Result};

pub use clean::{clean_text, clean_text_with, CleanConfig};
pub use toy::{ToyConfig, ToyLm, Vocabulary};

/// Top-k / temperature sampling parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplingConfig {
    pub top_k: usize,
    pub temperature: f64,
    pub max_new_tokens: usize,
    pub seed: Option<u64>,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        SamplingConfig {
            top_k: 40,
            temperature: 0.7,
            max_new_tokens: 50,
            seed: None,
        }
    }
}

impl SamplingConfig {
    /// Deterministic argmax decoding.
    pub fn greedy(max_new_tokens: usize) -> Self {
        SamplingConfig {
            top_k: 1,
            temperature: 1.0,
            max_new_tokens,
            seed: Some(0),
        }
    }

    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if self.top_k < 1 {
            v.push("sampling.top_k must be >= 1".to_string());
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            v.push("sampling.temperature must be > 0".to_string());
        }
        if self.max_new_tokens < 1 {
            v.push("sampling.max_new_tokens must be >= 1".to_string());
        }
        v
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(v))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Capabilities {
    pub can_finetune: bool,
    pub can_score: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LanguageModelHandle {
    pub identifier: String,
    pub capabilities: Capabilities,
}

/// A model backend. One instance is used by one worker at a time for
/// training; scoring and generation take `&self`.
pub trait LanguageModel: Send + Sync {
    fn handle(&self) -> LanguageModelHandle;

    /// Runs `steps` optimisation steps over `sequences`.
    fn train(&mut self, sequences: &[TrainingSequence], steps: usize) -> Result<()>;

    /// Samples one continuation of `prompt`. `sample_index` distinguishes the
    /// draws of one [`generate`] call so seeded runs are reproducible.
    fn sample(&self, prompt: &str, config: &SamplingConfig, sample_index: usize) -> Result<String>;

    /// Natural-log probability of each token of `text` given `condition`.
    fn token_log_probs(&self, condition: &str, text: &str) -> Result<Vec<f64>>;

    /// Number of backend tokens in `text`.
    fn count_tokens(&self, text: &str) -> usize;

    fn save(&self, path: &Path) -> Result<()>;
}

pub fn fine_tune(
    model: &mut dyn LanguageModel,
    sequences: &[TrainingSequence],
    steps: usize,
) -> Result<LanguageModelHandle> {
    let handle = model.handle();
    if !handle.capabilities.can_finetune {
        return Err(Error::MissingCapability {
            model: handle.identifier,
            capability: "can_finetune",
        });
    }
    if sequences.is_empty() {
        return Err(Error::invalid("fine-tuning needs at least one sequence"));
    }
    if steps == 0 {
        return Err(Error::invalid("fine-tuning needs at least one step"));
    }
    model.train(sequences, steps)?;
    Ok(model.handle())
}

/// Draws exactly `n` continuations of `prompt`.
pub fn generate(
    model: &dyn LanguageModel,
    prompt: &str,
    config: &SamplingConfig,
    n: usize,
    delimiter: &str,
) -> Result<Vec<String>> {
    if prompt.trim().is_empty() {
        return Err(Error::invalid("empty prompt"));
    }
    config.validate()?;
    (0..n)
        .map(|i| {
            let out = model.sample(prompt, config, i)?;
            if !delimiter.is_empty() && out.contains(delimiter) {
                return Err(Error::Backend("output contains the prompt delimiter".into()));
            }
            Ok(out)
        })
        .collect()
}

pub fn require_scoring(model: &dyn LanguageModel) -> Result<()> {
    let handle = model.handle();
    if handle.capabilities.can_score {
        Ok(())
    } else {
        Err(Error::MissingCapability {
            model: handle.identifier,
            capability: "can_score",
        })
    }
}

/// Sum of token log-probabilities of `text` given `condition`.
pub fn sequence_log_prob(model: &dyn LanguageModel, condition: &str, text: &str) -> Result<f64> {
    require_scoring(model)?;
    if text.trim().is_empty() {
        return Err(Error::invalid("cannot score empty text"));
    }
    let total: f64 = model.token_log_probs(condition, text)?.iter().sum();
    if total > 0.0 || total.is_nan() {
        return Err(Error::Backend(format!("log-probability {total} is not <= 0")));
    }
    Ok(total)
}

/// Builds a backend from its configured id.
pub fn load_backend(backend: &str, model_path: &Path) -> Result<Box<dyn LanguageModel>> {
    match backend {
        "toy" => Ok(Box::new(ToyLm::load(model_path)?)),
        other => Err(Error::Config(vec![format!("unknown model backend `{other}`")])),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sampling_defaults() {
        let c = SamplingConfig::default();
        assert_eq!((c.top_k, c.temperature, c.max_new_tokens), (40, 0.7, 50));
        assert!(c.validate().is_ok());
        let bad = SamplingConfig {
            top_k: 0,
            temperature: 0.0,
            max_new_tokens: 0,
            seed: None,
        };
        assert_eq!(bad.violations().len(), 3);
    }

    #[test]
    fn unknown_backend() {
        assert!(matches!(load_backend("gpt9", Path::new("x")), Err(Error::Config(_))));
    }
}
