//! Novelty of generated texts against a corpus of existing claims: STS
//! matching, novelty rate, vote correlations and pairwise preference tallies.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::annotation::{Judgment, Label, LabelSet, PreferenceValue};
use crate::corpus::ClaimRecord;
use crate::error::{Error, Result};
use crate::pipeline::GeneratedText;
use crate::scoring::{checked_score, pearson, Scorer, ScorerKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    pub gt_id: String,
    pub topic_id: String,
    pub best_claim_id: String,
    pub similarity: f64,
    pub is_match: bool,
}

/// Corpus claims of one topic, each with a stable id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ClaimCorpus {
    by_topic: BTreeMap<String, Vec<(String, String)>>,
}

impl ClaimCorpus {
    /// Groups claims by topic. Claims without an id get `<topic>:<index>`
    /// where index counts that topic's claims in input order.
    pub fn from_claims(claims: &[ClaimRecord]) -> Self {
        let mut by_topic: BTreeMap<String, Vec<(String, String)>> = BTreeMap::new();
        for c in claims {
            let entry = by_topic.entry(c.topic_id.clone()).or_default();
            let id = c.id.clone().unwrap_or_else(|| format!("{}:{}", c.topic_id, entry.len()));
            entry.push((id, c.text.clone()));
        }
        ClaimCorpus { by_topic }
    }

    pub fn topic(&self, topic_id: &str) -> &[(String, String)] {
        self.by_topic.get(topic_id).map(Vec::as_slice).unwrap_or(&[])
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Matching {
    pub matches: Vec<MatchResult>,
    /// GTs whose topic has no corpus claims.
    pub skipped: Vec<String>,
}

/// Finds each text's most similar same-topic corpus claim (ties to the lower
/// claim id) and flags it as a match when similarity reaches `threshold`.
pub fn match_claims(gts: &[GeneratedText], corpus: &ClaimCorpus, sts: &dyn Scorer, threshold: f64) -> Result<Matching> {
    if sts.kind() != ScorerKind::Sts {
        return Err(Error::invalid(format!("scorer `{}` is not an STS scorer", sts.name())));
    }
    let mut out = Matching::default();
    for gt in gts {
        let candidates = corpus.topic(&gt.topic_id);
        let mut best: Option<(f64, &str)> = None;
        for (id, text) in candidates {
            let s = checked_score(sts, &gt.text, text)?;
            best = match best {
                Some((bs, bid)) if bs > s || (bs == s && bid <= id.as_str()) => Some((bs, bid)),
                _ => Some((s, id.as_str())),
            };
        }
        match best {
            Some((similarity, id)) => out.matches.push(MatchResult {
                gt_id: gt.id.clone(),
                topic_id: gt.topic_id.clone(),
                best_claim_id: id.to_string(),
                similarity,
                is_match: similarity >= threshold,
            }),
            None => out.skipped.push(gt.id.clone()),
        }
    }
    Ok(out)
}

/// Re-applies a threshold to existing matches.
pub fn rethreshold(matches: &[MatchResult], threshold: f64) -> Vec<MatchResult> {
    matches
        .iter()
        .map(|m| MatchResult {
            is_match: m.similarity >= threshold,
            ..m.clone()
        })
        .collect()
}

pub fn match_count(matches: &[MatchResult]) -> usize {
    matches.iter().filter(|m| m.is_match).count()
}

/// One minus the share of attempted texts that matched a corpus claim.
pub fn novelty_rate(matches: &[MatchResult]) -> Result<f64> {
    if matches.is_empty() {
        return Err(Error::invalid("novelty rate over zero matched texts"));
    }
    Ok(1.0 - match_count(matches) as f64 / matches.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VoteCorrelation {
    pub plausibility: f64,
    pub stance: f64,
}

/// Pearson correlation of match similarity with the number of annotators who
/// judged each text plausible and who gave it a stance.
pub fn vote_correlation(matches: &[MatchResult], labels: &LabelSet) -> Result<VoteCorrelation> {
    let mut sims = Vec::with_capacity(matches.len());
    let mut plaus = Vec::with_capacity(matches.len());
    let mut stance = Vec::with_capacity(matches.len());
    for m in matches {
        let l = labels
            .get(&m.gt_id)
            .ok_or_else(|| Error::invalid(format!("no labels for `{}`", m.gt_id)))?;
        let votes = |v: Option<usize>, what: &str| {
            v.ok_or_else(|| Error::invalid(format!("no {what} votes for `{}`", m.gt_id)))
        };
        plaus.push(votes(l.plausible_votes, "plausibility")? as f64);
        // texts not judged plausible never reach the stance task: zero stance votes
        stance.push(l.stance_votes.unwrap_or(0) as f64);
        sims.push(m.similarity);
    }
    Ok(VoteCorrelation {
        plausibility: pearson(&sims, &plaus)?,
        stance: pearson(&sims, &stance)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PreferenceCounts {
    pub generated: usize,
    pub corpus: usize,
    pub tie: usize,
}

impl PreferenceCounts {
    pub fn total(&self) -> usize {
        self.generated + self.corpus + self.tie
    }
}

/// Outcome of one pair from its votes: the side with more votes wins unless
/// its margin is at most one vote, which counts as a tie. Explicit "tie"
/// votes count for neither side.
pub fn pair_outcome(generated_votes: usize, corpus_votes: usize) -> PreferenceValue {
    if generated_votes.abs_diff(corpus_votes) <= 1 {
        PreferenceValue::Tie
    } else if generated_votes > corpus_votes {
        PreferenceValue::Generated
    } else {
        PreferenceValue::Corpus
    }
}

/// Tallies pair outcomes over preference judgments grouped by item (pair) id.
pub fn preference_summary(judgments: &[Judgment]) -> PreferenceCounts {
    let mut per_pair: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
    for j in judgments.iter().filter(|j| !j.is_test_question) {
        if let Label::Preference(p) = j.value {
            let e = per_pair.entry(j.item_id.as_str()).or_default();
            match p {
                PreferenceValue::Generated => e.0 += 1,
                PreferenceValue::Corpus => e.1 += 1,
                PreferenceValue::Tie => {}
            }
        }
    }
    let mut counts = PreferenceCounts::default();
    for (g, c) in per_pair.into_values() {
        match pair_outcome(g, c) {
            PreferenceValue::Generated => counts.generated += 1,
            PreferenceValue::Corpus => counts.corpus += 1,
            PreferenceValue::Tie => counts.tie += 1,
        }
    }
    counts
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::annotation::AggregatedLabel;
    use crate::lm::CleanConfig;
    use crate::scoring::{NgramCosineSts, PrecomputedScorer};

    fn gt(id: &str, topic: &str, text: &str) -> GeneratedText {
        GeneratedText::new(id, topic, "p", text, &CleanConfig::default())
    }

    fn claim(id: &str, topic: &str, text: &str) -> ClaimRecord {
        let mut c = ClaimRecord::new(topic, text);
        c.id = Some(id.into());
        c
    }

    #[test]
    fn identical_text_matches() {
        let corpus = ClaimCorpus::from_claims(&[claim("c2", "t", "lotteries prey on the poor"), claim("c1", "t", "something else")]);
        let gts = vec![gt("g", "t", "lotteries prey on the poor"), gt("h", "u", "no corpus")];
        let m = match_claims(&gts, &corpus, &NgramCosineSts::default(), 0.75).unwrap();
        assert_eq!(m.matches.len(), 1);
        assert_eq!(m.matches[0].best_claim_id, "c2");
        assert_eq!(m.matches[0].similarity, 1.0);
        assert!(m.matches[0].is_match);
        assert_eq!(m.skipped, vec!["h"]);

        let none = match_claims(&gts, &corpus, &NgramCosineSts::default(), 1.01).unwrap();
        assert_eq!(match_count(&none.matches), 0);
    }

    #[test]
    fn ties_go_to_lower_claim_id() {
        let corpus = ClaimCorpus::from_claims(&[claim("b", "t", "x"), claim("a", "t", "y")]);
        let mut sts = PrecomputedScorer::new("sts", ScorerKind::Sts);
        sts.insert("g", "x", 0.5);
        sts.insert("g", "y", 0.5);
        let m = match_claims(&[gt("1", "t", "g")], &corpus, &sts, 0.75).unwrap();
        assert_eq!(m.matches[0].best_claim_id, "a");
        assert!(!m.matches[0].is_match);
    }

    #[test]
    fn generated_claim_ids() {
        let corpus = ClaimCorpus::from_claims(&[ClaimRecord::new("t", "x"), ClaimRecord::new("t", "y")]);
        assert_eq!(corpus.topic("t")[1].0, "t:1");
    }

    fn results(sims: &[f64], threshold: f64) -> Vec<MatchResult> {
        sims.iter()
            .enumerate()
            .map(|(i, &s)| MatchResult {
                gt_id: format!("g{i}"),
                topic_id: "t".into(),
                best_claim_id: "c".into(),
                similarity: s,
                is_match: s >= threshold,
            })
            .collect()
    }

    #[test]
    fn novelty_arithmetic() {
        let mut sims = vec![0.9; 20];
        sims.extend(vec![0.1; 149]);
        let r = novelty_rate(&results(&sims, 0.75)).unwrap();
        assert!((r - 0.8817).abs() < 1e-4);
        assert_eq!(novelty_rate(&results(&[0.1, 0.2], 0.75)).unwrap(), 1.0);
        assert_eq!(novelty_rate(&results(&[0.8, 0.9], 0.75)).unwrap(), 0.0);
        assert!(novelty_rate(&[]).is_err());
    }

    #[test]
    fn correlations() {
        let sims = [0.1, 0.4, 0.7, 0.9];
        let matches = results(&sims, 0.75);
        let mut set = LabelSet::default();
        for (i, m) in matches.iter().enumerate() {
            set.labels.insert(
                m.gt_id.clone(),
                AggregatedLabel {
                    item_id: m.gt_id.clone(),
                    plausible_votes: Some(i + 1),
                    stance_votes: Some(4 - i),
                    ..Default::default()
                },
            );
        }
        let c = vote_correlation(&matches, &set).unwrap();
        assert!(c.plausibility > 0.9);
        assert!(c.stance < -0.9);

        // similarity exactly linear in votes
        let lin = results(&[1.0, 2.0, 3.0, 4.0], 0.75);
        let mut exact = set.clone();
        for (i, m) in lin.iter().enumerate() {
            exact.labels.get_mut(&m.gt_id).unwrap().plausible_votes = Some(i + 1);
        }
        assert!((vote_correlation(&lin, &exact).unwrap().plausibility - 1.0).abs() < 1e-12);
        assert!((vote_correlation(&lin, &exact).unwrap().stance + 1.0).abs() < 1e-12);

        assert!(vote_correlation(&results(&[0.5], 0.75), &LabelSet::default()).is_err());
    }

    #[test]
    fn seven_vote_splits() {
        // enumerate every generated/corpus split of seven votes
        for g in 0..=7usize {
            let c = 7 - g;
            let expected = match g {
                0..=2 => PreferenceValue::Corpus,
                3 | 4 => PreferenceValue::Tie,
                _ => PreferenceValue::Generated,
            };
            assert_eq!(pair_outcome(g, c), expected, "{g}:{c}");
        }
    }

    #[test]
    fn preference_tally() {
        let mut js = Vec::new();
        for pair in 0..5 {
            for a in 0..7 {
                js.push(Judgment::new(format!("a{a}"), format!("p{pair}"), Label::Preference(PreferenceValue::Generated)));
            }
        }
        assert_eq!(preference_summary(&js), PreferenceCounts { generated: 5, corpus: 0, tie: 0 });

        let split: Vec<Judgment> = (0..7)
            .map(|a| {
                let v = if a < 3 { PreferenceValue::Generated } else { PreferenceValue::Corpus };
                Judgment::new(format!("a{a}"), "q", Label::Preference(v))
            })
            .collect();
        js.extend(split);
        let counts = preference_summary(&js);
        assert_eq!(counts.tie, 1);
        assert_eq!(counts.total(), 6);
    }
}
