//! Reference scorers: a lexical-overlap stub, a character n-gram STS stub, a
//! small trainable logistic classifier, and a lookup of precomputed scores.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{Scorer, ScorerKind};
use crate::error::{Error, Result};

fn words(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
}

/// Fraction of the topic's distinct words that occur in the text.
#[derive(Debug, Clone)]
pub struct LexicalOverlapScorer {
    name: String,
    kind: ScorerKind,
}

impl LexicalOverlapScorer {
    pub fn new(kind: ScorerKind) -> Self {
        assert!(!kind.is_signed(), "lexical overlap is unsigned");
        LexicalOverlapScorer {
            name: "lexical".into(),
            kind,
        }
    }
}

impl Scorer for LexicalOverlapScorer {
    fn name(&self) -> &str {
        &self.name
    }

    fn kind(&self) -> ScorerKind {
        self.kind
    }

    fn score(&self, topic: &str, text: &str) -> Result<f64> {
        let topic_words: BTreeSet<String> = words(topic).collect();
        if topic_words.is_empty() {
            return Ok(0.0);
        }
        let text_words: BTreeSet<String> = words(text).collect();
        let shared = topic_words.intersection(&text_words).count();
        Ok(shared as f64 / topic_words.len() as f64)
    }
}

/// Cosine similarity of character n-gram count vectors (lowercased,
/// whitespace-normalised, space padded). Identical inputs score exactly 1.
#[derive(Debug, Clone)]
pub struct NgramCosineSts {
    n: usize,
}

impl Default for NgramCosineSts {
    fn default() -> Self {
        NgramCosineSts { n: 3 }
    }
}

impl NgramCosineSts {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1);
        NgramCosineSts { n }
    }

    fn normalise(text: &str) -> String {
        text.split_whitespace()
            .map(str::to_lowercase)
            .collect::<Vec<_>>()
            .join(" ")
    }

    fn grams(&self, text: &str) -> BTreeMap<Vec<char>, f64> {
        let padded: Vec<char> = format!(" {text} ").chars().collect();
        let mut counts = BTreeMap::new();
        for w in padded.windows(self.n.min(padded.len())) {
            *counts.entry(w.to_vec()).or_insert(0.0) += 1.0;
        }
        counts
    }
}

impl Scorer for NgramCosineSts {
    fn name(&self) -> &str {
        "ngram-cosine"
    }

    fn kind(&self) -> ScorerKind {
        ScorerKind::Sts
    }

    fn score(&self, a: &str, b: &str) -> Result<f64> {
        let (a, b) = (Self::normalise(a), Self::normalise(b));
        if a.is_empty() || b.is_empty() {
            return Ok(0.0);
        }
        if a == b {
            return Ok(1.0);
        }
        let (ga, gb) = (self.grams(&a), self.grams(&b));
        let dot: f64 = ga.iter().filter_map(|(g, x)| gb.get(g).map(|y| x * y)).sum();
        let na: f64 = ga.values().map(|x| x * x).sum::<f64>().sqrt();
        let nb: f64 = gb.values().map(|x| x * x).sum::<f64>().sqrt();
        Ok((dot / (na * nb)).clamp(0.0, 1.0))
    }
}

/// A labelled example for [`LogisticScorer`]. For stance, `label` is true for
/// "pro".
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledText {
    pub topic: String,
    pub text: String,
    pub label: bool,
}

/// Bag-of-words logistic regression with a topic-overlap feature, trained by
/// full-batch gradient descent. Unsigned kinds output P(label); the stance
/// kind outputs 2·P(pro) − 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticScorer {
    name: String,
    kind: ScorerKind,
    bias: f64,
    overlap_weight: f64,
    weights: BTreeMap<String, f64>,
}

const OVERLAP: &str = "\u{0}overlap";

impl LogisticScorer {
    pub fn train(
        name: impl Into<String>,
        kind: ScorerKind,
        examples: &[LabeledText],
        epochs: usize,
        learning_rate: f64,
        l2: f64,
    ) -> Result<Self> {
        if examples.is_empty() {
            return Err(Error::invalid("no training examples"));
        }
        let feats: Vec<BTreeMap<String, f64>> = examples.iter().map(|e| features(&e.topic, &e.text)).collect();
        let mut model = LogisticScorer {
            name: name.into(),
            kind,
            bias: 0.0,
            overlap_weight: 0.0,
            weights: BTreeMap::new(),
        };
        let n = examples.len() as f64;
        for _ in 0..epochs {
            let mut grad: BTreeMap<&str, f64> = BTreeMap::new();
            let mut grad_bias = 0.0;
            for (f, e) in feats.iter().zip(examples) {
                let err = model.probability(f) - f64::from(u8::from(e.label));
                grad_bias += err;
                for (k, v) in f {
                    *grad.entry(k.as_str()).or_insert(0.0) += err * v;
                }
            }
            model.bias -= learning_rate * grad_bias / n;
            for (k, g) in grad {
                let w = model.weight_mut(k);
                *w -= learning_rate * (g / n + l2 * *w);
            }
        }
        Ok(model)
    }

    fn weight_mut(&mut self, key: &str) -> &mut f64 {
        if key == OVERLAP {
            &mut self.overlap_weight
        } else {
            self.weights.entry(key.to_string()).or_insert(0.0)
        }
    }

    fn probability(&self, feats: &BTreeMap<String, f64>) -> f64 {
        let z = self.bias
            + feats
                .iter()
                .map(|(k, v)| {
                    let w = if k == OVERLAP {
                        self.overlap_weight
                    } else {
                        self.weights.get(k).copied().unwrap_or(0.0)
                    };
                    w * v
                })
                .sum::<f64>();
        1.0 / (1.0 + (-z).exp())
    }
}

fn features(topic: &str, text: &str) -> BTreeMap<String, f64> {
    let mut f: BTreeMap<String, f64> = BTreeMap::new();
    let toks: Vec<String> = words(text).collect();
    let norm = (toks.len().max(1) as f64).sqrt();
    for w in &toks {
        *f.entry(w.clone()).or_insert(0.0) += 1.0 / norm;
    }
    let topic_words: BTreeSet<String> = words(topic).collect();
    if !topic_words.is_empty() {
        let shared = toks.iter().filter(|w| topic_words.contains(*w)).collect::<BTreeSet<_>>().len();
        f.insert(OVERLAP.to_string(), shared as f64 / topic_words.len() as f64);
    }
    f
}

impl Scorer for LogisticScorer {
    fn name(&self) -> &str {
        &self.name
    }

    fn kind(&self) -> ScorerKind {
        self.kind
    }

    fn score(&self, topic: &str, text: &str) -> Result<f64> {
        let p = self.probability(&features(topic, text));
        Ok(if self.kind.is_signed() { 2.0 * p - 1.0 } else { p })
    }
}

/// Serves scores computed elsewhere, keyed by (topic, text).
#[derive(Debug, Clone, Default)]
pub struct PrecomputedScorer {
    name: String,
    kind: Option<ScorerKind>,
    table: BTreeMap<(String, String), f64>,
}

impl PrecomputedScorer {
    pub fn new(name: impl Into<String>, kind: ScorerKind) -> Self {
        PrecomputedScorer {
            name: name.into(),
            kind: Some(kind),
            table: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, topic: &str, text: &str, score: f64) {
        self.table.insert((topic.to_string(), text.to_string()), score);
    }
}

impl Scorer for PrecomputedScorer {
    fn name(&self) -> &str {
        &self.name
    }

    fn kind(&self) -> ScorerKind {
        self.kind.unwrap_or(ScorerKind::ClaimDetection)
    }

    fn score(&self, topic: &str, text: &str) -> Result<f64> {
        self.table
            .get(&(topic.to_string(), text.to_string()))
            .copied()
            .ok_or_else(|| Error::Scorer {
                scorer: self.name.clone(),
                message: format!("no precomputed score for `{text}`"),
            })
    }
}
