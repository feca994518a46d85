//! Scorer contract and evaluation of scorers as rankers of generated texts.

mod stubs;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use stubs::{LabeledText, LexicalOverlapScorer, LogisticScorer, NgramCosineSts, PrecomputedScorer};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScorerKind {
    ClaimDetection,
    Quality,
    Stance,
    Sts,
}

impl ScorerKind {
    pub fn is_signed(self) -> bool {
        self == ScorerKind::Stance
    }
}

/// A deterministic text scorer. Claim-detection, quality and STS scores lie in
/// [0, 1]; stance scores are signed (positive = supports the topic).
///
/// For [`ScorerKind::Sts`] the two arguments are the texts being compared and
/// the score is symmetric.
pub trait Scorer: Send + Sync {
    fn name(&self) -> &str;
    fn kind(&self) -> ScorerKind;
    fn score(&self, topic: &str, text: &str) -> Result<f64>;
}

/// Scores and checks the value against the kind's range contract.
pub fn checked_score(scorer: &dyn Scorer, topic: &str, text: &str) -> Result<f64> {
    let fail = |message: String| Error::Scorer {
        scorer: scorer.name().to_string(),
        message,
    };
    let s = scorer.score(topic, text)?;
    if !s.is_finite() {
        return Err(fail(format!("non-finite score {s}")));
    }
    if !scorer.kind().is_signed() && !(0.0..=1.0).contains(&s) {
        return Err(fail(format!("score {s} outside [0,1]")));
    }
    Ok(s)
}

pub fn absolute_stance(score: f64) -> f64 {
    score.abs()
}

/// Pearson correlation. Errors on unequal lengths, fewer than two points, or a
/// constant series (where the coefficient is undefined).
pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(Error::invalid(format!("length mismatch {} vs {}", xs.len(), ys.len())));
    }
    if xs.len() < 2 {
        return Err(Error::Undefined("pearson needs at least two points".into()));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Undefined("pearson on a constant series".into()));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// One labelled generated text with its per-scorer values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankItem {
    pub id: String,
    pub topic_id: String,
    /// Plausible and stance-bearing.
    pub label: bool,
    pub scores: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TopBottom {
    pub top: usize,
    pub bottom: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankEvalReport {
    pub pearson_by_scorer: BTreeMap<String, f64>,
    pub top_bottom_by_scorer: BTreeMap<String, TopBottom>,
    pub n_positive: usize,
    pub n_negative: usize,
    pub window: usize,
    pub topics_counted: usize,
    /// Topics with fewer than `2 * window` items, left out of top/bottom counts.
    pub topics_skipped: Vec<String>,
}

/// Correlates each scorer with the binary labels over all items, and counts
/// positives among the `window` highest and lowest scored items per topic.
/// Within a topic, ties in score are ordered by item id.
pub fn rank_eval(items: &[RankItem], scorers: &[&str], window: usize) -> Result<RankEvalReport> {
    let labels: Vec<f64> = items.iter().map(|i| f64::from(u8::from(i.label))).collect();
    let mut by_topic: BTreeMap<&str, Vec<&RankItem>> = BTreeMap::new();
    for item in items {
        by_topic.entry(item.topic_id.as_str()).or_default().push(item);
    }

    let mut report = RankEvalReport {
        pearson_by_scorer: BTreeMap::new(),
        top_bottom_by_scorer: BTreeMap::new(),
        n_positive: items.iter().filter(|i| i.label).count(),
        n_negative: items.iter().filter(|i| !i.label).count(),
        window,
        topics_counted: 0,
        topics_skipped: Vec::new(),
    };
    for (topic, group) in &by_topic {
        if group.len() < 2 * window {
            report.topics_skipped.push(topic.to_string());
        } else {
            report.topics_counted += 1;
        }
    }

    for &name in scorers {
        let value = |item: &RankItem| {
            item.scores.get(name).copied().ok_or_else(|| {
                Error::invalid(format!("item `{}` lacks a `{name}` score", item.id))
            })
        };
        let values = items.iter().map(value).collect::<Result<Vec<_>>>()?;
        report
            .pearson_by_scorer
            .insert(name.to_string(), pearson(&values, &labels)?);

        let mut tb = TopBottom::default();
        for group in by_topic.values().filter(|g| g.len() >= 2 * window) {
            let mut ranked = group
                .iter()
                .map(|item| Ok((value(item)?, item.id.as_str(), item.label)))
                .collect::<Result<Vec<_>>>()?;
            ranked.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(b.1)));
            tb.top += ranked[..window].iter().filter(|r| r.2).count();
            tb.bottom += ranked[ranked.len() - window..].iter().filter(|r| r.2).count();
        }
        report.top_bottom_by_scorer.insert(name.to_string(), tb);
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn stance_abs() {
        assert_eq!(absolute_stance(-0.8), 0.8);
        assert_eq!(absolute_stance(0.0), 0.0);
        assert_eq!(absolute_stance(0.99), 0.99);
    }

    #[test]
    fn pearson_examples() {
        let xs = [1.0, 2.0, 3.0, 5.0];
        assert!((pearson(&xs, &xs).unwrap() - 1.0).abs() < 1e-12);
        let neg: Vec<f64> = xs.iter().map(|x| -x).collect();
        assert!((pearson(&xs, &neg).unwrap() + 1.0).abs() < 1e-12);
        // dx = [-1,0,1], dy = [-4/3,-1/3,5/3]; sxy = 3, sxx = 2, syy = 42/9
        let expected = 3.0 / (2f64.sqrt() * (42.0f64 / 9.0).sqrt());
        assert!((expected - 0.98198).abs() < 1e-4);
        assert!((pearson(&[1.0, 2.0, 3.0], &[1.0, 2.0, 4.0]).unwrap() - expected).abs() < 1e-12);
        assert!(matches!(pearson(&[1.0, 1.0], &[1.0, 2.0]), Err(Error::Undefined(_))));
        assert!(pearson(&[1.0], &[1.0]).is_err());
        assert!(pearson(&[1.0, 2.0], &[1.0]).is_err());
    }

    proptest! {
        #[test]
        fn pearson_affine_invariant(
            xs in prop::collection::vec(-100.0f64..100.0, 3..30),
            a in 0.1f64..10.0, b in -50.0f64..50.0,
        ) {
            let ys: Vec<f64> = xs.iter().enumerate().map(|(i, x)| x * x - i as f64).collect();
            if let (Ok(r1), Ok(r2)) = (pearson(&xs, &ys), pearson(&xs.iter().map(|x| a * x + b).collect::<Vec<_>>(), &ys)) {
                prop_assert!((r1 - r2).abs() < 1e-6);
            }
        }
    }

    fn items(labels: &[(usize, bool)], score: impl Fn(usize, bool) -> f64) -> Vec<RankItem> {
        labels
            .iter()
            .enumerate()
            .map(|(i, &(topic, label))| RankItem {
                id: format!("g{i:04}"),
                topic_id: format!("t{topic}"),
                label,
                scores: [("s".to_string(), score(i, label))].into(),
            })
            .collect()
    }

    #[test]
    fn oracle_scorer() {
        let labels: Vec<(usize, bool)> = (0..40).map(|i| (i / 10, i % 3 == 0)).collect();
        let its = items(&labels, |_, l| f64::from(u8::from(l)));
        let r = rank_eval(&its, &["s"], 3).unwrap();
        assert!((r.pearson_by_scorer["s"] - 1.0).abs() < 1e-12);
        let tb = r.top_bottom_by_scorer["s"];
        // each topic has 3 or 4 positives out of 10: top-3 all positive, bottom-3 none
        assert_eq!(tb.top, 12);
        assert_eq!(tb.bottom, 0);
        assert_eq!(r.n_positive + r.n_negative, 40);
    }

    #[test]
    fn small_topics_skipped_and_missing_scores_error() {
        let labels = vec![(0, true), (0, false), (1, true), (1, false), (1, true), (1, false), (1, true), (1, false)];
        let its = items(&labels, |i, _| i as f64);
        let r = rank_eval(&its, &["s"], 3).unwrap();
        assert_eq!(r.topics_skipped, vec!["t0"]);
        assert_eq!(r.topics_counted, 1);
        assert!(rank_eval(&its, &["missing"], 3).is_err());
    }

    #[test]
    fn monotone_transform_keeps_counts() {
        let labels: Vec<(usize, bool)> = (0..60).map(|i| (i / 12, (i * 7) % 5 < 2)).collect();
        let base = items(&labels, |i, _| ((i * 37) % 11) as f64 * 0.1);
        let warped = items(&labels, |i, _| (((i * 37) % 11) as f64 * 0.1).exp() * 3.0 - 1.0);
        let a = rank_eval(&base, &["s"], 3).unwrap();
        let b = rank_eval(&warped, &["s"], 3).unwrap();
        assert_eq!(a.top_bottom_by_scorer, b.top_bottom_by_scorer);
    }

    #[test]
    fn random_scorer_balanced_counts() {
        // Monte-Carlo: random scores over balanced labels put about as many
        // positives in the top 3 as in the bottom 3.
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (mut top, mut bottom) = (0usize, 0usize);
        for _ in 0..200 {
            let mut labels: Vec<(usize, bool)> = (0..100).map(|i| (i / 10, i % 2 == 0)).collect();
            labels.shuffle(&mut rng);
            let scores: Vec<f64> = (0..100).map(|_| rng.gen()).collect();
            let its = items(&labels, |i, _| scores[i]);
            let tb = rank_eval(&its, &["s"], 3).unwrap().top_bottom_by_scorer["s"];
            top += tb.top;
            bottom += tb.bottom;
        }
        let ratio = top as f64 / bottom as f64;
        assert!((ratio - 1.0).abs() <= 0.15, "top {top} bottom {bottom}");
    }
}
