//! Automatic metrics: perplexity, prefix ranking accuracy and sampled
//! statistics of predicted quality and stance.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::TopicRegistry;
use crate::error::{Error, Result};
use crate::io;
use crate::lm::{require_scoring, sequence_log_prob, LanguageModel};
use crate::pipeline::GeneratedText;
use crate::scoring::{absolute_stance, checked_score, Scorer, ScorerKind};

/// A (topic, claim) pair the model is scored on.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalItem {
    pub topic: String,
    pub claim: String,
}

impl EvalItem {
    pub fn new(topic: impl Into<String>, claim: impl Into<String>) -> Self {
        EvalItem {
            topic: topic.into(),
            claim: claim.into(),
        }
    }
}

/// Prefix applied to the external evaluation set's topics so they read as
/// policy statements.
pub const EXTERNAL_TOPIC_PREFIX: &str = "We should support ";

pub fn rephrase_external_topic(topic: &str) -> String {
    format!("{EXTERNAL_TOPIC_PREFIX}{topic}")
}

/// Reads an external (topic, claim) CSV with `topic` and `claim` columns, or
/// JSONL of `{"topic","claim"}`, and rephrases every topic.
pub fn load_external_claims(path: &Path) -> Result<Vec<EvalItem>> {
    let raw: Vec<EvalItem> = match path.extension().and_then(|e| e.to_str()) {
        Some("csv") => {
            let mut reader = csv::Reader::from_reader(io::open(path)?);
            reader.deserialize().collect::<std::result::Result<_, _>>()?
        }
        _ => io::read_jsonl_values(path)?,
    };
    Ok(raw
        .into_iter()
        .filter(|i| !i.claim.trim().is_empty())
        .map(|i| EvalItem::new(rephrase_external_topic(i.topic.trim()), i.claim))
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PerplexityMode {
    /// exp of the negative mean log-probability over all claim tokens.
    #[default]
    Pooled,
    /// Mean of per-claim perplexities.
    PerClaim,
}

pub fn perplexity(model: &dyn LanguageModel, items: &[EvalItem], mode: PerplexityMode) -> Result<f64> {
    let refs: Vec<&EvalItem> = items.iter().collect();
    perplexity_of(model, &refs, mode)
}

fn perplexity_of(model: &dyn LanguageModel, items: &[&EvalItem], mode: PerplexityMode) -> Result<f64> {
    require_scoring(model)?;
    if items.is_empty() {
        return Err(Error::invalid("perplexity over zero items"));
    }
    let mut total_lp = 0.0;
    let mut total_tokens = 0usize;
    let mut per_claim = 0.0;
    for item in items {
        let lp = sequence_log_prob(model, &item.topic, &item.claim)?;
        let n = model.count_tokens(&item.claim);
        total_lp += lp;
        total_tokens += n;
        per_claim += (-lp / n as f64).exp();
    }
    Ok(match mode {
        PerplexityMode::Pooled => (-total_lp / total_tokens as f64).exp(),
        PerplexityMode::PerClaim => per_claim / items.len() as f64,
    })
}

/// Fraction of claims whose real topic gives a strictly higher model score
/// than each of `n_distractors` other topics drawn from `topic_pool`.
pub fn prefix_ranking_accuracy(
    model: &dyn LanguageModel,
    items: &[EvalItem],
    topic_pool: &[String],
    n_distractors: usize,
    seed: u64,
) -> Result<f64> {
    require_scoring(model)?;
    prefix_ranking_accuracy_by(|t, c| sequence_log_prob(model, t, c), items, topic_pool, n_distractors, seed)
}

/// [`prefix_ranking_accuracy`] over an arbitrary conditional score. Distractors
/// are sampled uniformly without replacement from the pool minus the real
/// topic; a tie with the real topic counts as a miss.
pub fn prefix_ranking_accuracy_by<F>(
    score: F,
    items: &[EvalItem],
    topic_pool: &[String],
    n_distractors: usize,
    seed: u64,
) -> Result<f64>
where
    F: Fn(&str, &str) -> Result<f64>,
{
    if items.is_empty() {
        return Err(Error::invalid("prefix ranking over zero items"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut hits = 0usize;
    for item in items {
        let others: Vec<&String> = topic_pool.iter().filter(|t| **t != item.topic).collect();
        if others.len() < n_distractors {
            return Err(Error::invalid(format!(
                "topic pool has {} topics besides the real one; {n_distractors} distractors needed",
                others.len()
            )));
        }
        let real = score(&item.topic, &item.claim)?;
        let mut best_other = f64::NEG_INFINITY;
        for i in index::sample(&mut rng, others.len(), n_distractors) {
            best_other = best_other.max(score(others[i], &item.claim)?);
        }
        hits += usize::from(real > best_other);
    }
    Ok(hits as f64 / items.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

/// Two-pass mean: the residual pass makes the mean of a constant series
/// exactly that constant.
fn mean(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let m = values.iter().sum::<f64>() / n;
    m + values.iter().map(|v| v - m).sum::<f64>() / n
}

impl MeanStd {
    /// Population standard deviation.
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = mean(values);
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        MeanStd { mean, std: var.sqrt() }
    }
}

/// Index sets for `n_samples` uniform samples, each drawn without replacement
/// and capped at `len`.
pub fn sample_indices(len: usize, n_samples: usize, sample_size: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let size = sample_size.min(len);
    (0..n_samples)
        .map(|_| {
            let mut idx = index::sample(&mut rng, len, size).into_vec();
            idx.sort_unstable();
            idx
        })
        .collect()
}

/// Mean and spread of the per-sample means of `values`.
pub fn sampled_statistic(values: &[f64], n_samples: usize, sample_size: usize, seed: u64) -> Result<MeanStd> {
    if values.is_empty() || n_samples == 0 || sample_size == 0 {
        return Err(Error::invalid("sampled statistic needs values, samples and a sample size"));
    }
    let means: Vec<f64> = sample_indices(values.len(), n_samples, sample_size, seed)
        .iter()
        .map(|idx| mean(&idx.iter().map(|&i| values[i]).collect::<Vec<_>>()))
        .collect();
    Ok(MeanStd::of(&means))
}

fn sampled_metric<F>(items: &[EvalItem], config: &EvalConfig, metric: F) -> Result<MeanStd>
where
    F: Fn(&[&EvalItem]) -> Result<f64>,
{
    if items.is_empty() {
        return Err(Error::invalid("no evaluation items"));
    }
    let values = sample_indices(items.len(), config.n_samples, config.sample_size, config.seed)
        .iter()
        .map(|idx| metric(&idx.iter().map(|&i| &items[i]).collect::<Vec<_>>()))
        .collect::<Result<Vec<_>>>()?;
    Ok(MeanStd::of(&values))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub n_samples: usize,
    pub sample_size: usize,
    pub n_distractors: usize,
    pub seed: u64,
    pub perplexity_mode: PerplexityMode,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            n_samples: 10,
            sample_size: 100,
            n_distractors: 9,
            seed: 0,
            perplexity_mode: PerplexityMode::Pooled,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub model_id: Option<String>,
    pub perplexity: Option<MeanStd>,
    pub prefix_rank_acc: Option<MeanStd>,
    pub pred_quality: Option<MeanStd>,
    pub pred_stance_abs: Option<MeanStd>,
    pub n_samples: usize,
    pub sample_size: usize,
    pub seed: u64,
    pub n_external_items: usize,
    pub n_gts: usize,
    /// Metric name → failure message for metrics that could not be computed.
    pub errors: BTreeMap<String, String>,
}

impl EvalReport {
    pub fn is_partial(&self) -> bool {
        !self.errors.is_empty()
    }
}

fn gt_scores(
    gts: &[GeneratedText],
    kind: ScorerKind,
    scorers: &[&dyn Scorer],
    topics: &TopicRegistry,
) -> Result<Vec<f64>> {
    let scorer = scorers.iter().find(|s| s.kind() == kind);
    gts.iter()
        .map(|gt| match (gt.score_of(kind), scorer) {
            (Some(v), _) => Ok(v),
            (None, Some(s)) => {
                let topic = topics
                    .get(&gt.topic_id)
                    .ok_or_else(|| Error::invalid(format!("unknown topic `{}`", gt.topic_id)))?;
                checked_score(*s, &topic.text, &gt.text)
            }
            (None, None) => Err(Error::invalid(format!("`{}` has no {kind:?} score and no scorer is configured", gt.id))),
        })
        .collect()
}

/// Assembles the model-side and text-side metrics into one report. Failing
/// metrics are recorded in `errors` rather than aborting the report.
///
/// Quality and stance values come from the texts' stored scores, falling back
/// to a scorer of the matching kind.
pub fn eval_report(
    model: Option<&dyn LanguageModel>,
    gts: &[GeneratedText],
    scorers: &[&dyn Scorer],
    topics: &TopicRegistry,
    external: &[EvalItem],
    topic_pool: &[String],
    config: &EvalConfig,
) -> EvalReport {
    let mut errors = BTreeMap::new();
    let mut record = |name: &str, r: Result<MeanStd>| match r {
        Ok(v) => Some(v),
        Err(e) => {
            errors.insert(name.to_string(), e.to_string());
            None
        }
    };

    let no_model = || Error::Config(vec!["model.backend is not configured".into()]);
    let perplexity = record(
        "perplexity",
        model.ok_or_else(no_model).and_then(|m| {
            sampled_metric(external, config, |s| perplexity_of(m, s, config.perplexity_mode))
        }),
    );
    let prefix_rank_acc = record(
        "prefix_rank_acc",
        model.ok_or_else(no_model).and_then(|m| {
            require_scoring(m)?;
            sampled_metric(external, config, |s| {
                let items: Vec<EvalItem> = s.iter().map(|&i| i.clone()).collect();
                prefix_ranking_accuracy_by(
                    |t, c| sequence_log_prob(m, t, c),
                    &items,
                    topic_pool,
                    config.n_distractors,
                    config.seed,
                )
            })
        }),
    );
    let pred_quality = record(
        "pred_quality",
        gt_scores(gts, ScorerKind::Quality, scorers, topics)
            .and_then(|v| sampled_statistic(&v, config.n_samples, config.sample_size, config.seed)),
    );
    let pred_stance_abs = record(
        "pred_stance_abs",
        gt_scores(gts, ScorerKind::Stance, scorers, topics).and_then(|v| {
            let abs: Vec<f64> = v.into_iter().map(absolute_stance).collect();
            sampled_statistic(&abs, config.n_samples, config.sample_size, config.seed)
        }),
    );

    EvalReport {
        model_id: model.map(|m| m.handle().identifier),
        perplexity,
        prefix_rank_acc,
        pred_quality,
        pred_stance_abs,
        n_samples: config.n_samples,
        sample_size: config.sample_size,
        seed: config.seed,
        n_external_items: external.len(),
        n_gts: gts.len(),
        errors,
    }
}
