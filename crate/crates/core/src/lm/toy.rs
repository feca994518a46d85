//! A small, deterministic, trainable backend: a prompt-conditioned trigram
//! model interpolated with an unconditional bigram model and a uniform floor.
//!
//! Untrained, it is exactly uniform over its vocabulary. Each training step
//! adds the counts of one (prompt, completion) pair; the weight given to the
//! prompt-conditioned estimate of a context grows with how often that context
//! was seen, so repeated passes sharpen the model towards its training data.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use rand::distributions::{Distribution, WeightedIndex};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Capabilities, LanguageModel, LanguageModelHandle, SamplingConfig};
use crate::corpus::TrainingSequence;
use crate::error::{Error, Result};
use crate::io;

pub const EOS: &str = "<eos>";
pub const UNK: &str = "<unk>";
const BOS: u32 = u32::MAX;

/// Whitespace-token vocabulary. Index 0 is [`EOS`], index 1 is [`UNK`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
}

impl From<Vec<String>> for Vocabulary {
    fn from(tokens: Vec<String>) -> Self {
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i as u32)).collect();
        Vocabulary { tokens, index }
    }
}

impl From<Vocabulary> for Vec<String> {
    fn from(v: Vocabulary) -> Self {
        v.tokens
    }
}

impl Vocabulary {
    /// Sorted distinct whitespace tokens of `texts`, after the two specials.
    pub fn from_texts<'a>(texts: impl IntoIterator<Item = &'a str>) -> Self {
        let mut words: Vec<&str> = texts.into_iter().flat_map(str::split_whitespace).collect();
        words.sort_unstable();
        words.dedup();
        let tokens = [EOS, UNK]
            .into_iter()
            .chain(words.into_iter().filter(|w| *w != EOS && *w != UNK))
            .map(str::to_string)
            .collect::<Vec<_>>();
        Vocabulary::from(tokens)
    }

    /// A vocabulary of exactly `size` tokens (specials plus placeholders).
    pub fn synthetic(size: usize) -> Self {
        assert!(size >= 2, "vocabulary needs room for the special tokens");
        let tokens = [EOS.to_string(), UNK.to_string()]
            .into_iter()
            .chain((2..size).map(|i| format!("w{i}")))
            .collect::<Vec<_>>();
        Vocabulary::from(tokens)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> u32 {
        self.index.get(token).copied().unwrap_or(1)
    }

    pub fn token(&self, id: u32) -> &str {
        &self.tokens[id as usize]
    }

    pub fn encode(&self, text: &str) -> Vec<u32> {
        text.split_whitespace().map(|w| self.id(w)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ToyConfig {
    /// Pseudo-count controlling how fast a seen context trusts its own counts:
    /// weight = n / (n + confidence).
    pub confidence: f64,
    /// Weight of the bigram estimate against the uniform floor.
    pub bigram_weight: f64,
}

impl Default for ToyConfig {
    fn default() -> Self {
        ToyConfig {
            confidence: 1.0,
            bigram_weight: 0.5,
        }
    }
}

type Counts = BTreeMap<u32, u32>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyLm {
    identifier: String,
    config: ToyConfig,
    vocab: Vocabulary,
    /// prompt → packed (prev2, prev1) → next-token counts.
    conditional: BTreeMap<String, BTreeMap<u64, Counts>>,
    /// prev1 → next-token counts.
    bigram: BTreeMap<u32, Counts>,
    steps_trained: u64,
}

fn pack(prev2: u32, prev1: u32) -> u64 {
    (u64::from(prev2) << 32) | u64::from(prev1)
}

fn total(counts: &Counts) -> u64 {
    counts.values().map(|&c| u64::from(c)).sum()
}

impl ToyLm {
    pub fn new(identifier: impl Into<String>, vocab: Vocabulary) -> Self {
        ToyLm::with_config(identifier, vocab, ToyConfig::default())
    }

    pub fn with_config(identifier: impl Into<String>, vocab: Vocabulary, config: ToyConfig) -> Self {
        ToyLm {
            identifier: identifier.into(),
            config,
            vocab,
            conditional: BTreeMap::new(),
            bigram: BTreeMap::new(),
            steps_trained: 0,
        }
    }

    /// An untrained model whose vocabulary covers every prompt and completion.
    pub fn for_sequences(identifier: impl Into<String>, sequences: &[TrainingSequence]) -> Self {
        let vocab = Vocabulary::from_texts(
            sequences
                .iter()
                .flat_map(|s| [s.prompt.as_str(), s.completion.as_str()]),
        );
        ToyLm::new(identifier, vocab)
    }

    pub fn load(path: &Path) -> Result<Self> {
        io::read_json(path)
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn steps_trained(&self) -> u64 {
        self.steps_trained
    }

    /// Next-token distribution over the whole vocabulary.
    fn distribution(&self, prompt: &str, prev2: u32, prev1: u32) -> Vec<f64> {
        let v = self.vocab.len();
        let uniform = 1.0 / v as f64;
        let mut probs = vec![uniform; v];

        if let Some(counts) = self.bigram.get(&prev1) {
            let n = total(counts) as f64;
            let beta = self.config.bigram_weight;
            for p in probs.iter_mut() {
                *p = (1.0 - beta) * uniform;
            }
            for (&tok, &c) in counts {
                probs[tok as usize] += beta * f64::from(c) / n;
            }
        }

        if let Some(counts) = self
            .conditional
            .get(prompt)
            .and_then(|ctx| ctx.get(&pack(prev2, prev1)))
        {
            let n = total(counts) as f64;
            let lambda = n / (n + self.config.confidence);
            for p in probs.iter_mut() {
                *p *= 1.0 - lambda;
            }
            for (&tok, &c) in counts {
                probs[tok as usize] += lambda * f64::from(c) / n;
            }
        }
        probs
    }

    fn observe(&mut self, prompt: &str, completion: &str) {
        let mut ids = self.vocab.encode(completion);
        ids.push(0);
        let ctx = self.conditional.entry(prompt.to_string()).or_default();
        let (mut prev2, mut prev1) = (BOS, BOS);
        for tok in ids {
            *ctx.entry(pack(prev2, prev1)).or_default().entry(tok).or_default() += 1;
            *self.bigram.entry(prev1).or_default().entry(tok).or_default() += 1;
            prev2 = prev1;
            prev1 = tok;
        }
    }

    fn rng_for(&self, prompt: &str, config: &SamplingConfig, sample_index: usize) -> ChaCha8Rng {
        let seed = match config.seed {
            Some(s) => s,
            None => rand::random(),
        };
        let mut h = Sha256::new();
        h.update(seed.to_le_bytes());
        h.update((sample_index as u64).to_le_bytes());
        h.update(prompt.as_bytes());
        let digest = h.finalize();
        let mut bytes = [0u8; 32];
        bytes.copy_from_slice(&digest);
        ChaCha8Rng::from_seed(bytes)
    }
}

impl LanguageModel for ToyLm {
    fn handle(&self) -> LanguageModelHandle {
        LanguageModelHandle {
            identifier: self.identifier.clone(),
            capabilities: Capabilities {
                can_finetune: true,
                can_score: true,
            },
        }
    }

    fn train(&mut self, sequences: &[TrainingSequence], steps: usize) -> Result<()> {
        if sequences.is_empty() {
            return Err(Error::Backend("no sequences".into()));
        }
        for step in 0..steps {
            let seq = &sequences[step % sequences.len()];
            self.observe(&seq.prompt, &seq.completion);
        }
        self.steps_trained += steps as u64;
        Ok(())
    }

    fn sample(&self, prompt: &str, config: &SamplingConfig, sample_index: usize) -> Result<String> {
        let mut rng = self.rng_for(prompt, config, sample_index);
        let (mut prev2, mut prev1) = (BOS, BOS);
        let mut out: Vec<&str> = Vec::new();
        while out.len() < config.max_new_tokens {
            let mut probs = self.distribution(prompt, prev2, prev1);
            probs[1] = 0.0;
            if out.is_empty() {
                probs[0] = 0.0;
            }
            let mut candidates: Vec<(u32, f64)> = probs
                .iter()
                .enumerate()
                .filter(|(_, &p)| p > 0.0)
                .map(|(i, &p)| (i as u32, p.ln() / config.temperature))
                .collect();
            if candidates.is_empty() {
                break;
            }
            candidates.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
            candidates.truncate(config.top_k);
            let max = candidates[0].1;
            let weights: Vec<f64> = candidates.iter().map(|(_, l)| (l - max).exp()).collect();
            let pick = WeightedIndex::new(&weights)
                .map_err(|e| Error::Backend(e.to_string()))?
                .sample(&mut rng);
            let tok = candidates[pick].0;
            if tok == 0 {
                break;
            }
            out.push(self.vocab.token(tok));
            prev2 = prev1;
            prev1 = tok;
        }
        Ok(out.join(" "))
    }

    fn token_log_probs(&self, condition: &str, text: &str) -> Result<Vec<f64>> {
        let (mut prev2, mut prev1) = (BOS, BOS);
        let mut out = Vec::new();
        for tok in self.vocab.encode(text) {
            let probs = self.distribution(condition, prev2, prev1);
            out.push(probs[tok as usize].ln());
            prev2 = prev1;
            prev1 = tok;
        }
        Ok(out)
    }

    fn count_tokens(&self, text: &str) -> usize {
        text.split_whitespace().count()
    }

    fn save(&self, path: &Path) -> Result<()> {
        io::write_json(path, self)
    }
}
