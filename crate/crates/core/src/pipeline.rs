//! Generation pipeline: sample per topic, clean, de-duplicate, score, and keep
//! the top-k texts of each topic.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::annotation::AggregatedLabel;
use crate::corpus::{frame_claim_aspect, frame_topic_fws, AspectTable, FramedPrompt, PromptFormat, Topic, TopicRegistry};
use crate::error::Result;
use crate::lm::{self, clean_text_with, CleanConfig, LanguageModel, SamplingConfig};
use crate::scoring::{checked_score, Scorer, ScorerKind};

/// One model output for a topic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratedText {
    pub id: String,
    pub topic_id: String,
    pub prompt_used: String,
    pub raw: String,
    pub text: String,
    /// Whitespace tokens in `text`.
    pub token_count: usize,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub framing_skipped: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cd_score: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quality_score: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stance_score: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<AggregatedLabel>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub selected: bool,
}

impl GeneratedText {
    pub fn new(id: impl Into<String>, topic_id: impl Into<String>, prompt: &str, raw: &str, clean: &CleanConfig) -> Self {
        let text = clean_text_with(raw, clean);
        GeneratedText {
            id: id.into(),
            topic_id: topic_id.into(),
            prompt_used: prompt.to_string(),
            raw: raw.to_string(),
            token_count: text.split_whitespace().count(),
            text,
            framing_skipped: false,
            cd_score: None,
            quality_score: None,
            stance_score: None,
            labels: None,
            selected: false,
        }
    }

    pub fn score_of(&self, kind: ScorerKind) -> Option<f64> {
        match kind {
            ScorerKind::ClaimDetection => self.cd_score,
            ScorerKind::Quality => self.quality_score,
            ScorerKind::Stance => self.stance_score,
            ScorerKind::Sts => None,
        }
    }

    fn set_score(&mut self, kind: ScorerKind, value: f64) {
        match kind {
            ScorerKind::ClaimDetection => self.cd_score = Some(value),
            ScorerKind::Quality => self.quality_score = Some(value),
            ScorerKind::Stance => self.stance_score = Some(value),
            ScorerKind::Sts => {}
        }
    }
}

/// How a topic is turned into a generation prompt.
#[derive(Debug, Clone, Copy)]
pub enum Framing<'a> {
    None,
    Fws,
    Aspect { table: &'a AspectTable, name: &'a str },
}

impl Framing<'_> {
    pub fn prompt(&self, topic: &Topic, format: &PromptFormat) -> Result<FramedPrompt> {
        Ok(match self {
            Framing::None => FramedPrompt {
                text: topic.text.clone(),
                framing_skipped: false,
            },
            Framing::Fws => frame_topic_fws(topic, format),
            Framing::Aspect { table, name } => FramedPrompt {
                text: frame_claim_aspect(topic, table, name, format)?,
                framing_skipped: false,
            },
        })
    }
}

#[derive(Debug, Clone)]
pub struct GenerationSettings<'a> {
    pub sampling: SamplingConfig,
    pub framing: Framing<'a>,
    pub format: PromptFormat,
    pub clean: CleanConfig,
}

impl Default for GenerationSettings<'_> {
    fn default() -> Self {
        GenerationSettings {
            sampling: SamplingConfig::default(),
            framing: Framing::None,
            format: PromptFormat::default(),
            clean: CleanConfig::default(),
        }
    }
}

pub fn gt_id(topic_id: &str, index: usize) -> String {
    format!("{topic_id}-{index:04}")
}

/// Samples `n` texts for one topic. Scores are left unset.
pub fn generate_for_topic(
    model: &dyn LanguageModel,
    topic: &Topic,
    n: usize,
    settings: &GenerationSettings<'_>,
) -> Result<Vec<GeneratedText>> {
    let prompt = settings.framing.prompt(topic, &settings.format)?;
    let raws = lm::generate(model, &prompt.text, &settings.sampling, n, &settings.format.delimiter)?;
    Ok(raws
        .iter()
        .enumerate()
        .map(|(i, raw)| {
            let mut gt = GeneratedText::new(gt_id(&topic.id, i), &topic.id, &prompt.text, raw, &settings.clean);
            gt.framing_skipped = prompt.framing_skipped;
            gt
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PoolStats {
    pub empty: usize,
    pub duplicates: usize,
}

/// Drops texts that are empty after cleaning and exact duplicates within a
/// topic (the lowest id of each duplicate group is kept).
pub fn prune_pool(gts: Vec<GeneratedText>) -> (Vec<GeneratedText>, PoolStats) {
    let mut stats = PoolStats::default();
    let mut seen: BTreeSet<(String, String)> = BTreeSet::new();
    let mut sorted = gts;
    sorted.sort_by(|a, b| a.id.cmp(&b.id));
    let kept = sorted
        .into_iter()
        .filter(|gt| {
            if gt.text.is_empty() {
                log::info!("dropping empty generation {}", gt.id);
                stats.empty += 1;
                false
            } else if !seen.insert((gt.topic_id.clone(), gt.text.clone())) {
                stats.duplicates += 1;
                false
            } else {
                true
            }
        })
        .collect();
    (kept, stats)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopicFailure {
    pub topic_id: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Selection {
    pub selected: BTreeMap<String, Vec<String>>,
    pub failures: Vec<TopicFailure>,
}

impl Selection {
    pub fn ids(&self) -> BTreeSet<String> {
        self.selected.values().flatten().cloned().collect()
    }

    pub fn total(&self) -> usize {
        self.selected.values().map(Vec::len).sum()
    }
}

/// Scores every text and marks the `k` best of each topic as selected.
///
/// Texts are ranked by score (absolute value for stance scorers), ties going
/// to the lower id. Scores are stored on the texts under the scorer's kind. A
/// scorer failure leaves that topic without a selection and is reported.
pub fn select_top_k(
    gts: &mut [GeneratedText],
    topics: &TopicRegistry,
    scorer: &dyn Scorer,
    k: usize,
) -> Selection {
    let mut by_topic: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (i, gt) in gts.iter().enumerate() {
        by_topic.entry(gt.topic_id.clone()).or_default().push(i);
    }
    let kind = scorer.kind();
    let mut selection = Selection::default();
    'topics: for (topic_id, idxs) in by_topic {
        let Some(topic) = topics.get(&topic_id) else {
            selection.failures.push(TopicFailure {
                topic_id,
                message: "unknown topic".into(),
            });
            continue;
        };
        let mut ranked = Vec::with_capacity(idxs.len());
        for &i in &idxs {
            match checked_score(scorer, &topic.text, &gts[i].text) {
                Ok(s) => ranked.push((s, i)),
                Err(e) => {
                    selection.failures.push(TopicFailure {
                        topic_id,
                        message: format!("{}: {e}", gts[i].id),
                    });
                    continue 'topics;
                }
            }
        }
        for &(s, i) in &ranked {
            gts[i].set_score(kind, s);
            gts[i].selected = false;
        }
        let rank_value = |s: f64| if kind.is_signed() { s.abs() } else { s };
        ranked.sort_by(|a, b| {
            rank_value(b.0)
                .total_cmp(&rank_value(a.0))
                .then_with(|| gts[a.1].id.cmp(&gts[b.1].id))
        });
        let chosen: Vec<String> = ranked
            .iter()
            .take(k)
            .map(|&(_, i)| {
                gts[i].selected = true;
                gts[i].id.clone()
            })
            .collect();
        selection.selected.insert(topic_id, chosen);
    }
    selection
}

/// Fills one score field on every text, without selecting.
pub fn score_all(gts: &mut [GeneratedText], topics: &TopicRegistry, scorer: &dyn Scorer) -> Result<()> {
    for gt in gts.iter_mut() {
        let topic = topics
            .get(&gt.topic_id)
            .ok_or_else(|| crate::Error::invalid(format!("unknown topic `{}`", gt.topic_id)))?;
        let s = checked_score(scorer, &topic.text, &gt.text)?;
        gt.set_score(scorer.kind(), s);
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineRun {
    pub model_id: String,
    pub topics: Vec<String>,
    pub n_per_topic: usize,
    pub k_selected: usize,
    pub sampling: SamplingConfig,
    pub outputs: Vec<GeneratedText>,
    pub selected_ids: BTreeSet<String>,
    pub pool: PoolStats,
    pub failures: Vec<TopicFailure>,
}

impl PipelineRun {
    pub fn selected(&self) -> impl Iterator<Item = &GeneratedText> {
        self.outputs.iter().filter(|g| g.selected)
    }
}

/// Generates `n` texts per topic, prunes the pool, and selects the top `k`
/// per topic. A failing topic is reported and does not stop the others.
pub fn run_pipeline(
    model: &dyn LanguageModel,
    topics: &[Topic],
    scorer: &dyn Scorer,
    n: usize,
    k: usize,
    settings: &GenerationSettings<'_>,
) -> Result<PipelineRun> {
    let registry = TopicRegistry::from_topics(topics.iter().cloned())?;
    let mut failures = Vec::new();
    let mut pool = Vec::with_capacity(topics.len() * n);
    for topic in topics {
        match generate_for_topic(model, topic, n, settings) {
            Ok(gts) => pool.extend(gts),
            Err(e) => failures.push(TopicFailure {
                topic_id: topic.id.clone(),
                message: e.to_string(),
            }),
        }
    }
    let (mut outputs, pool_stats) = prune_pool(pool);
    let selection = select_top_k(&mut outputs, &registry, scorer, k);
    failures.extend(selection.failures.iter().cloned());
    Ok(PipelineRun {
        model_id: model.handle().identifier,
        topics: topics.iter().map(|t| t.id.clone()).collect(),
        n_per_topic: n,
        k_selected: k,
        sampling: settings.sampling.clone(),
        selected_ids: selection.ids(),
        outputs,
        pool: pool_stats,
        failures,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassStats {
    pub count: usize,
    pub mean_tokens: f64,
}

/// Mean whitespace-token length per class. Requested classes with no members
/// map to `None`; texts the partition assigns to no class are ignored.
pub fn length_stats<'a, F>(gts: &'a [GeneratedText], classes: &[&str], partition: F) -> BTreeMap<String, Option<ClassStats>>
where
    F: Fn(&'a GeneratedText) -> Option<&'a str>,
{
    let mut sums: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
    for gt in gts {
        if let Some(class) = partition(gt) {
            let e = sums.entry(class).or_default();
            e.0 += 1;
            e.1 += gt.token_count;
        }
    }
    classes
        .iter()
        .map(|&c| {
            let stats = sums.get(c).map(|&(count, tokens)| ClassStats {
                count,
                mean_tokens: tokens as f64 / count as f64,
            });
            (c.to_string(), stats)
        })
        .collect()
}
