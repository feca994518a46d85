//! Crowd judgments: quality control with hidden test questions, label
//! aggregation and inter-annotator agreement.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Plausibility,
    Stance,
    Factual,
    Preference,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StanceValue {
    Pro,
    Con,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FactualValue {
    Factual,
    Opinion,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PreferenceValue {
    Generated,
    Corpus,
    Tie,
}

/// A task-typed answer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    Plausible(bool),
    Stance(StanceValue),
    Factual(FactualValue),
    Preference(PreferenceValue),
}

impl Label {
    pub fn task(&self) -> Task {
        match self {
            Label::Plausible(_) => Task::Plausibility,
            Label::Stance(_) => Task::Stance,
            Label::Factual(_) => Task::Factual,
            Label::Preference(_) => Task::Preference,
        }
    }

    fn parse(task: Task, value: serde_json::Value) -> Result<Self> {
        Ok(match task {
            Task::Plausibility => Label::Plausible(serde_json::from_value(value)?),
            Task::Stance => Label::Stance(serde_json::from_value(value)?),
            Task::Factual => Label::Factual(serde_json::from_value(value)?),
            Task::Preference => Label::Preference(serde_json::from_value(value)?),
        })
    }

    fn to_json(self) -> serde_json::Value {
        match self {
            Label::Plausible(b) => serde_json::Value::Bool(b),
            Label::Stance(s) => serde_json::to_value(s).expect("enum serializes"),
            Label::Factual(f) => serde_json::to_value(f).expect("enum serializes"),
            Label::Preference(p) => serde_json::to_value(p).expect("enum serializes"),
        }
    }
}

/// One annotator's answer to one item.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawJudgment", into = "RawJudgment")]
pub struct Judgment {
    pub annotator_id: String,
    pub item_id: String,
    pub value: Label,
    pub is_test_question: bool,
    pub gold_value: Option<Label>,
}

impl Judgment {
    pub fn new(annotator: impl Into<String>, item: impl Into<String>, value: Label) -> Self {
        Judgment {
            annotator_id: annotator.into(),
            item_id: item.into(),
            value,
            is_test_question: false,
            gold_value: None,
        }
    }

    pub fn test_question(annotator: impl Into<String>, item: impl Into<String>, value: Label, gold: Label) -> Self {
        Judgment {
            is_test_question: true,
            gold_value: Some(gold),
            ..Judgment::new(annotator, item, value)
        }
    }

    pub fn task(&self) -> Task {
        self.value.task()
    }
}

#[derive(Serialize, Deserialize)]
struct RawJudgment {
    annotator_id: String,
    item_id: String,
    task: Task,
    value: serde_json::Value,
    #[serde(default)]
    is_test_question: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    gold_value: Option<serde_json::Value>,
}

impl TryFrom<RawJudgment> for Judgment {
    type Error = Error;

    fn try_from(raw: RawJudgment) -> Result<Self> {
        let value = Label::parse(raw.task, raw.value)?;
        let gold_value = raw.gold_value.map(|g| Label::parse(raw.task, g)).transpose()?;
        if gold_value.is_some() != raw.is_test_question {
            return Err(Error::invalid("gold_value must be present exactly for test questions"));
        }
        Ok(Judgment {
            annotator_id: raw.annotator_id,
            item_id: raw.item_id,
            value,
            is_test_question: raw.is_test_question,
            gold_value,
        })
    }
}

impl From<Judgment> for RawJudgment {
    fn from(j: Judgment) -> Self {
        RawJudgment {
            annotator_id: j.annotator_id,
            item_id: j.item_id,
            task: j.value.task(),
            value: j.value.to_json(),
            is_test_question: j.is_test_question,
            gold_value: j.gold_value.map(Label::to_json),
        }
    }
}

pub fn load_judgments(path: &Path) -> Result<Vec<Judgment>> {
    io::read_jsonl_values(path)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotatorAccuracy {
    pub annotator_id: String,
    pub task: Task,
    pub correct: usize,
    pub total: usize,
}

impl AnnotatorAccuracy {
    pub fn accuracy(&self) -> f64 {
        self.correct as f64 / self.total as f64
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct FilterOutcome {
    pub judgments: Vec<Judgment>,
    pub removed: Vec<AnnotatorAccuracy>,
    /// (annotator, task) pairs kept without any test question to check them.
    pub untested: Vec<(String, Task)>,
}

/// Removes, per task, every judgment of annotators whose accuracy on that
/// task's test questions is below the task's threshold. Tasks without a
/// threshold pass through untouched.
pub fn filter_annotators(judgments: &[Judgment], thresholds: &BTreeMap<Task, f64>) -> FilterOutcome {
    let mut tally: BTreeMap<(&str, Task), (usize, usize)> = BTreeMap::new();
    let mut seen: BTreeSet<(&str, Task)> = BTreeSet::new();
    for j in judgments {
        let key = (j.annotator_id.as_str(), j.task());
        seen.insert(key);
        if let (true, Some(gold)) = (j.is_test_question, j.gold_value) {
            let e = tally.entry(key).or_default();
            e.0 += usize::from(j.value == gold);
            e.1 += 1;
        }
    }

    let mut out = FilterOutcome::default();
    let mut dropped: BTreeSet<(&str, Task)> = BTreeSet::new();
    for &(annotator, task) in &seen {
        let Some(&threshold) = thresholds.get(&task) else { continue };
        match tally.get(&(annotator, task)) {
            Some(&(correct, total)) => {
                let acc = AnnotatorAccuracy {
                    annotator_id: annotator.to_string(),
                    task,
                    correct,
                    total,
                };
                if acc.accuracy() < threshold {
                    dropped.insert((annotator, task));
                    out.removed.push(acc);
                }
            }
            None => out.untested.push((annotator.to_string(), task)),
        }
    }
    out.judgments = judgments
        .iter()
        .filter(|j| !dropped.contains(&(j.annotator_id.as_str(), j.task())))
        .cloned()
        .collect();
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AggregationConfig {
    pub min_judgments: usize,
    pub plausibility_threshold: f64,
    pub factual_threshold: f64,
}

impl Default for AggregationConfig {
    fn default() -> Self {
        AggregationConfig {
            min_judgments: 5,
            plausibility_threshold: 0.7,
            factual_threshold: 0.7,
        }
    }
}

/// Per-item labels derived from the crowd.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct AggregatedLabel {
    pub item_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plausible: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plausible_fraction: Option<f64>,
    /// Annotators who judged the item plausible.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plausible_votes: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stance: Option<StanceValue>,
    /// Annotators who assigned the item a stance (pro or con).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stance_votes: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub factual: Option<FactualValue>,
    #[serde(default)]
    pub n_plausibility: usize,
    #[serde(default)]
    pub n_stance: usize,
    #[serde(default)]
    pub n_factual: usize,
}

impl AggregatedLabel {
    fn new(item_id: &str) -> Self {
        AggregatedLabel {
            item_id: item_id.to_string(),
            ..Default::default()
        }
    }

    /// Plausible and labelled pro or con.
    pub fn is_positive(&self) -> bool {
        self.plausible == Some(true) && matches!(self.stance, Some(StanceValue::Pro | StanceValue::Con))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Insufficient {
    pub item_id: String,
    pub task: Task,
    pub n_judgments: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LabelSet {
    pub labels: BTreeMap<String, AggregatedLabel>,
    pub insufficient: Vec<Insufficient>,
    /// Items with stance judgments that were not judged plausible.
    pub not_plausible: Vec<String>,
}

impl LabelSet {
    pub fn get(&self, item: &str) -> Option<&AggregatedLabel> {
        self.labels.get(item)
    }

    /// Folds another set's fields into this one, item by item.
    pub fn merge(&mut self, other: LabelSet) {
        for (id, l) in other.labels {
            let e = self.labels.entry(id.clone()).or_insert_with(|| AggregatedLabel::new(&id));
            if l.n_plausibility > 0 {
                e.plausible = l.plausible;
                e.plausible_fraction = l.plausible_fraction;
                e.plausible_votes = l.plausible_votes;
                e.n_plausibility = l.n_plausibility;
            }
            if l.n_stance > 0 {
                e.stance = l.stance;
                e.stance_votes = l.stance_votes;
                e.n_stance = l.n_stance;
            }
            if l.n_factual > 0 {
                e.factual = l.factual;
                e.n_factual = l.n_factual;
            }
        }
        self.insufficient.extend(other.insufficient);
        self.not_plausible.extend(other.not_plausible);
    }
}

/// Non-test judgments of one task, grouped by item.
fn votes_by_item(judgments: &[Judgment], task: Task) -> BTreeMap<&str, Vec<Label>> {
    let mut out: BTreeMap<&str, Vec<Label>> = BTreeMap::new();
    for j in judgments.iter().filter(|j| !j.is_test_question && j.task() == task) {
        out.entry(j.item_id.as_str()).or_default().push(j.value);
    }
    out
}

pub fn aggregate_plausibility(judgments: &[Judgment], config: &AggregationConfig) -> LabelSet {
    let mut set = LabelSet::default();
    for (item, votes) in votes_by_item(judgments, Task::Plausibility) {
        if votes.len() < config.min_judgments {
            set.insufficient.push(Insufficient {
                item_id: item.to_string(),
                task: Task::Plausibility,
                n_judgments: votes.len(),
            });
            continue;
        }
        let positives = votes.iter().filter(|v| **v == Label::Plausible(true)).count();
        let fraction = positives as f64 / votes.len() as f64;
        let mut label = AggregatedLabel::new(item);
        label.plausible = Some(fraction >= config.plausibility_threshold);
        label.plausible_fraction = Some(fraction);
        label.plausible_votes = Some(positives);
        label.n_plausibility = votes.len();
        set.labels.insert(item.to_string(), label);
    }
    set
}

/// Plurality vote over {pro, con, none} for items judged plausible; a tie
/// for the top count yields `none`. The returned set carries the plausibility
/// fields of `plausibility` alongside the stance.
pub fn aggregate_stance(judgments: &[Judgment], plausibility: &LabelSet, config: &AggregationConfig) -> LabelSet {
    let mut set = LabelSet {
        labels: plausibility.labels.clone(),
        ..Default::default()
    };
    for (item, votes) in votes_by_item(judgments, Task::Stance) {
        match set.labels.get_mut(item) {
            Some(label) if label.plausible == Some(true) => {
                if votes.len() < config.min_judgments {
                    set.insufficient.push(Insufficient {
                        item_id: item.to_string(),
                        task: Task::Stance,
                        n_judgments: votes.len(),
                    });
                    continue;
                }
                let count = |s: StanceValue| votes.iter().filter(|v| **v == Label::Stance(s)).count();
                let tallies = [
                    (StanceValue::Pro, count(StanceValue::Pro)),
                    (StanceValue::Con, count(StanceValue::Con)),
                    (StanceValue::None, count(StanceValue::None)),
                ];
                let best = tallies.iter().map(|t| t.1).max().unwrap_or(0);
                let leaders: Vec<_> = tallies.iter().filter(|t| t.1 == best).collect();
                label.stance = Some(if leaders.len() == 1 { leaders[0].0 } else { StanceValue::None });
                label.stance_votes = Some(tallies[0].1 + tallies[1].1);
                label.n_stance = votes.len();
            }
            _ => set.not_plausible.push(item.to_string()),
        }
    }
    set
}

/// Factual/opinion label when one value reaches the threshold share.
pub fn aggregate_factual(judgments: &[Judgment], config: &AggregationConfig) -> LabelSet {
    let mut set = LabelSet::default();
    for (item, votes) in votes_by_item(judgments, Task::Factual) {
        if votes.len() < config.min_judgments {
            set.insufficient.push(Insufficient {
                item_id: item.to_string(),
                task: Task::Factual,
                n_judgments: votes.len(),
            });
            continue;
        }
        let n = votes.len() as f64;
        let share = |f: FactualValue| votes.iter().filter(|v| **v == Label::Factual(f)).count() as f64 / n;
        let mut label = AggregatedLabel::new(item);
        label.factual = [FactualValue::Factual, FactualValue::Opinion]
            .into_iter()
            .find(|&f| share(f) >= config.factual_threshold);
        label.n_factual = votes.len();
        set.labels.insert(item.to_string(), label);
    }
    set
}

/// Cohen's kappa between two label sequences over the same items.
/// When chance agreement is 1 (both raters constant and equal) kappa is 1.
pub fn cohen_kappa<T: Ord>(a: &[T], b: &[T]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::invalid(format!("label vectors differ in length: {} vs {}", a.len(), b.len())));
    }
    if a.is_empty() {
        return Err(Error::Undefined("kappa over zero shared items".into()));
    }
    let n = a.len() as f64;
    let observed = a.iter().zip(b).filter(|(x, y)| x == y).count() as f64 / n;
    let mut marg_a: BTreeMap<&T, usize> = BTreeMap::new();
    let mut marg_b: BTreeMap<&T, usize> = BTreeMap::new();
    for (x, y) in a.iter().zip(b) {
        *marg_a.entry(x).or_default() += 1;
        *marg_b.entry(y).or_default() += 1;
    }
    let expected: f64 = marg_a
        .iter()
        .map(|(k, &ca)| ca as f64 * marg_b.get(k).copied().unwrap_or(0) as f64)
        .sum::<f64>()
        / (n * n);
    if expected >= 1.0 {
        return Ok(1.0);
    }
    Ok((observed - expected) / (1.0 - expected))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KappaSummary {
    pub mean: f64,
    pub per_annotator: BTreeMap<String, f64>,
    pub min_common: usize,
    pub min_partners: usize,
}

/// Mean over qualifying annotators of their average pairwise kappa.
///
/// Two annotators are partners when they share at least `min_common` items;
/// an annotator qualifies with at least `min_partners` partners, and their
/// kappa is the mean over those partners. Test questions are ignored.
pub fn mean_annotator_kappa(
    judgments: &[Judgment],
    task: Task,
    min_common: usize,
    min_partners: usize,
) -> Result<KappaSummary> {
    let mut by_annotator: BTreeMap<&str, BTreeMap<&str, Label>> = BTreeMap::new();
    for j in judgments.iter().filter(|j| !j.is_test_question && j.task() == task) {
        by_annotator
            .entry(j.annotator_id.as_str())
            .or_default()
            .entry(j.item_id.as_str())
            .or_insert(j.value);
    }
    let annotators: Vec<&str> = by_annotator.keys().copied().collect();
    let mut pair_kappas: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for (i, &a) in annotators.iter().enumerate() {
        for &b in &annotators[i + 1..] {
            let (la, lb) = (&by_annotator[a], &by_annotator[b]);
            let (va, vb): (Vec<Label>, Vec<Label>) = la
                .iter()
                .filter_map(|(item, x)| lb.get(item).map(|y| (*x, *y)))
                .unzip();
            if va.len() >= min_common.max(1) {
                let k = cohen_kappa(&va, &vb)?;
                pair_kappas.entry(a).or_default().push(k);
                pair_kappas.entry(b).or_default().push(k);
            }
        }
    }
    let per_annotator: BTreeMap<String, f64> = pair_kappas
        .into_iter()
        .filter(|(_, ks)| ks.len() >= min_partners)
        .map(|(a, ks)| (a.to_string(), ks.iter().sum::<f64>() / ks.len() as f64))
        .collect();
    if per_annotator.is_empty() {
        return Err(Error::Undefined(format!(
            "no annotator shares {min_common} items with {min_partners} others"
        )));
    }
    Ok(KappaSummary {
        mean: per_annotator.values().sum::<f64>() / per_annotator.len() as f64,
        per_annotator,
        min_common,
        min_partners,
    })
}
