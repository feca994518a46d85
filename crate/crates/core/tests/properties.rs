use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;

use claimgen::annotation::{aggregate_plausibility, filter_annotators, AggregationConfig, Judgment, Label, PreferenceValue, Task};
use claimgen::corpus::{
    build_training_sequences, filter_by_quality, frame_topic_fws, retain_training_claims, ClaimRecord, FramingMode,
    PromptFormat, Split, Topic, TopicRegistry, TrainingSequence,
};
use claimgen::evaluation::{perplexity, EvalItem, PerplexityMode};
use claimgen::lm::{fine_tune, generate, sequence_log_prob, CleanConfig, LanguageModel, SamplingConfig, ToyLm, Vocabulary};
use claimgen::novelty::{match_claims, novelty_rate, preference_summary, rethreshold, ClaimCorpus};
use claimgen::pipeline::{select_top_k, GeneratedText};
use claimgen::scoring::{absolute_stance, rank_eval, NgramCosineSts, PrecomputedScorer, RankItem, ScorerKind};

fn claims_strategy() -> impl Strategy<Value = Vec<ClaimRecord>> {
    prop::collection::vec((0..6usize, "[a-z]{1,8}( [a-z]{1,8}){0,4}", prop::option::of(0.0..=1.0f64)), 0..40).prop_map(
        |rows| {
            rows.into_iter()
                .map(|(t, text, q)| {
                    let mut c = ClaimRecord::new(format!("t{t}"), text);
                    c.quality_score = q;
                    c
                })
                .collect()
        },
    )
}

fn registry() -> TopicRegistry {
    let split = |i: usize| [Split::Train, Split::Train, Split::Dev, Split::Test, Split::Train, Split::Test][i];
    TopicRegistry::from_topics((0..6).map(|i| Topic::new(format!("t{i}"), format!("We should ban topic{i}"), split(i))))
        .unwrap()
}

proptest! {
    #[test]
    fn quality_filter_idempotent_and_monotone(claims in claims_strategy(), a in 0.0..1.0f64, b in 0.0..1.0f64) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let once = filter_by_quality(&claims, lo).kept;
        prop_assert_eq!(&filter_by_quality(&once, lo).kept, &once);
        let strict = filter_by_quality(&claims, hi).kept;
        prop_assert!(strict.len() <= once.len());
        prop_assert!(strict.iter().all(|c| once.contains(c)));
    }

    #[test]
    fn training_sequences_one_per_claim_and_no_held_out_topic(claims in claims_strategy()) {
        let reg = registry();
        let train = retain_training_claims(&claims, &reg);
        let build = build_training_sequences(&train, &reg, FramingMode::None, None, &PromptFormat::default()).unwrap();
        prop_assert_eq!(build.sequences.len(), train.len());
        let held_out: Vec<&Topic> = reg.iter().filter(|t| t.split != Split::Train).collect();
        for s in &build.sequences {
            prop_assert!(held_out.iter().all(|t| s.prompt != t.text));
        }
    }

    #[test]
    fn fws_framing_falls_back_to_topic(text in "[A-Za-z ]{1,30}") {
        prop_assume!(!text.trim().is_empty());
        let topic = Topic::new("t", text.clone(), Split::Dev);
        let framed = frame_topic_fws(&topic, &PromptFormat::default());
        prop_assert_eq!(framed.text, text);
        prop_assert!(framed.framing_skipped);
    }

    #[test]
    fn generate_respects_count_and_length(n in 0usize..12, max in 1usize..20, seed in 0u64..1000, temp in 0.1..2.0f64) {
        let model = ToyLm::new("u", Vocabulary::synthetic(30));
        let cfg = SamplingConfig { top_k: 10, temperature: temp, max_new_tokens: max, seed: Some(seed) };
        let out = generate(&model, "a prompt", &cfg, n, "\n[CLAIM]\n").unwrap();
        prop_assert_eq!(out.len(), n);
        prop_assert!(out.iter().all(|o| model.count_tokens(o) <= max));
    }

    #[test]
    fn log_prob_additive_over_tokens(words in prop::collection::vec(0usize..12, 1..10)) {
        let seqs = vec![TrainingSequence::new("p", "w2 w3 w4 w5", &PromptFormat::default()).unwrap()];
        let mut model = ToyLm::new("m", Vocabulary::synthetic(12));
        fine_tune(&mut model, &seqs, 3).unwrap();
        let text = words.iter().map(|w| format!("w{w}")).collect::<Vec<_>>().join(" ");
        let per_token: f64 = model.token_log_probs("p", &text).unwrap().iter().sum();
        let total = sequence_log_prob(&model, "p", &text).unwrap();
        prop_assert!((per_token - total).abs() < 1e-9);
        prop_assert_eq!(model.token_log_probs("p", &text).unwrap().len(), words.len());
    }

    #[test]
    fn selection_contract(sizes in prop::collection::vec(0usize..12, 1..5), k in 1usize..9, seed in any::<u64>()) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let topics: Vec<Topic> = (0..sizes.len()).map(|i| Topic::new(format!("t{i}"), format!("topic {i}"), Split::Test)).collect();
        let reg = TopicRegistry::from_topics(topics.clone()).unwrap();
        let mut scorer = PrecomputedScorer::new("cd", ScorerKind::ClaimDetection);
        let mut gts = Vec::new();
        for (t, &n) in topics.iter().zip(&sizes) {
            for j in 0..n {
                let text = format!("text {j} of {}", t.id);
                // coarse scores so ties occur
                scorer.insert(&t.text, &text, f64::from(rng.gen_range(0..5u8)) / 4.0);
                gts.push(GeneratedText::new(format!("{}-{j:04}", t.id), &t.id, &t.text, &text, &CleanConfig::default()));
            }
        }
        let first = select_top_k(&mut gts, &reg, &scorer, k);
        let snapshot = gts.clone();
        let second = select_top_k(&mut gts, &reg, &scorer, k);
        prop_assert_eq!(&first, &second);
        prop_assert_eq!(&snapshot, &gts);
        for (t, &n) in topics.iter().zip(&sizes) {
            let pool: Vec<&GeneratedText> = gts.iter().filter(|g| g.topic_id == t.id).collect();
            let sel: Vec<&&GeneratedText> = pool.iter().filter(|g| g.selected).collect();
            prop_assert_eq!(sel.len(), k.min(n));
            if n > 0 {
                let mean = |v: Vec<f64>| v.iter().sum::<f64>() / v.len() as f64;
                let pool_mean = mean(pool.iter().map(|g| g.cd_score.unwrap()).collect());
                let sel_mean = mean(sel.iter().map(|g| g.cd_score.unwrap()).collect());
                prop_assert!(sel_mean >= pool_mean - 1e-12);
            }
            for id in first.selected.get(&t.id).into_iter().flatten() {
                prop_assert!(pool.iter().any(|g| &g.id == id));
            }
        }
    }

    #[test]
    fn absolute_stance_is_even(x in -1.0..=1.0f64) {
        prop_assert_eq!(absolute_stance(x), absolute_stance(-x));
    }

    #[test]
    fn rank_eval_counts_monotone_invariant(
        rows in prop::collection::vec((0..3usize, any::<bool>(), -1.0..1.0f64), 8..60),
        a in 0.1..5.0f64,
        b in -3.0..3.0f64,
    ) {
        let labels: BTreeSet<bool> = rows.iter().map(|r| r.1).collect();
        prop_assume!(labels.len() == 2);
        let items = |f: &dyn Fn(f64) -> f64| -> Vec<RankItem> {
            rows.iter().enumerate().map(|(i, &(t, label, s))| RankItem {
                id: format!("i{i:03}"),
                topic_id: format!("t{t}"),
                label,
                scores: BTreeMap::from([("s".to_string(), f(s))]),
            }).collect()
        };
        let raw = items(&|s| s);
        prop_assume!(raw.iter().map(|i| i.scores["s"]).any(|s| s != raw[0].scores["s"]));
        let base = rank_eval(&raw, &["s"], 3).unwrap();
        let mapped = rank_eval(&items(&|s| (a * s + b).exp()), &["s"], 3).unwrap();
        prop_assert_eq!(base.top_bottom_by_scorer, mapped.top_bottom_by_scorer);
    }

    #[test]
    fn probability_scorer_prefers_positives(rows in prop::collection::vec((0..2usize, 0.0..1.0f64), 12..60)) {
        // label is a deterministic threshold of the probability, so the
        // scorer orders positives above negatives within each topic
        let items: Vec<RankItem> = rows.iter().enumerate().map(|(i, &(t, p))| RankItem {
            id: format!("i{i:03}"),
            topic_id: format!("t{t}"),
            label: p > 0.5,
            scores: BTreeMap::from([("p".to_string(), p.sqrt())]),
        }).collect();
        let labels: BTreeSet<bool> = items.iter().map(|i| i.label).collect();
        prop_assume!(labels.len() == 2);
        let r = rank_eval(&items, &["p"], 3).unwrap();
        let tb = r.top_bottom_by_scorer["p"];
        prop_assert!(tb.top >= tb.bottom);
    }

    #[test]
    fn perplexity_at_least_one(steps in 0usize..60) {
        let fmt = PromptFormat::default();
        let items: Vec<EvalItem> = (0..5).map(|i| EvalItem::new(format!("topic {i}"), format!("claim {i} is good"))).collect();
        let seqs: Vec<TrainingSequence> = items.iter().map(|i| TrainingSequence::new(&i.topic, &i.claim, &fmt).unwrap()).collect();
        let mut model = ToyLm::for_sequences("m", &seqs);
        if steps > 0 {
            fine_tune(&mut model, &seqs, steps).unwrap();
        }
        for mode in [PerplexityMode::Pooled, PerplexityMode::PerClaim] {
            let p = perplexity(&model, &items, mode).unwrap();
            prop_assert!(p >= 1.0);
            prop_assert_eq!(p, perplexity(&model, &items, mode).unwrap());
        }
    }

    #[test]
    fn filter_annotators_idempotent(
        votes in prop::collection::vec((0..5usize, 0..6usize, any::<bool>(), any::<bool>()), 0..80),
        threshold in 0.0..1.0f64,
    ) {
        let js: Vec<Judgment> = votes.iter().map(|&(a, item, v, test)| {
            if test {
                Judgment::test_question(format!("a{a}"), format!("g{item}"), Label::Plausible(v), Label::Plausible(true))
            } else {
                Judgment::new(format!("a{a}"), format!("i{item}"), Label::Plausible(v))
            }
        }).collect();
        let thresholds = BTreeMap::from([(Task::Plausibility, threshold)]);
        let once = filter_annotators(&js, &thresholds).judgments;
        prop_assert_eq!(&filter_annotators(&once, &thresholds).judgments, &once);
    }

    #[test]
    fn plausibility_permutation_invariant_and_monotone(
        votes in prop::collection::vec((0..4usize, any::<bool>()), 0..60),
        seed in any::<u64>(),
        extra_item in 0..4usize,
    ) {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let cfg = AggregationConfig { min_judgments: 1, ..AggregationConfig::default() };
        let js: Vec<Judgment> = votes.iter().enumerate()
            .map(|(i, &(item, v))| Judgment::new(format!("a{i}"), format!("i{item}"), Label::Plausible(v)))
            .collect();
        let mut shuffled = js.clone();
        shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
        let base = aggregate_plausibility(&js, &cfg);
        prop_assert_eq!(&base.labels, &aggregate_plausibility(&shuffled, &cfg).labels);

        let mut more = js.clone();
        let item = format!("i{extra_item}");
        more.push(Judgment::new("extra", item.clone(), Label::Plausible(true)));
        let after = aggregate_plausibility(&more, &cfg);
        let before_votes = base.get(&item).and_then(|l| l.plausible_votes).unwrap_or(0);
        let after_label = after.get(&item).unwrap();
        prop_assert_eq!(after_label.plausible_votes, Some(before_votes + 1));
        let before_frac = base.get(&item).and_then(|l| l.plausible_fraction).unwrap_or(0.0);
        prop_assert!(after_label.plausible_fraction.unwrap() >= before_frac);
        if base.get(&item).and_then(|l| l.plausible) == Some(true) {
            prop_assert_eq!(after_label.plausible, Some(true));
        }
    }

    #[test]
    fn novelty_rate_bounded_and_monotone(
        texts in prop::collection::vec("[a-e]{1,4}( [a-e]{1,4}){0,3}", 1..15),
        corpus in prop::collection::vec("[a-e]{1,4}( [a-e]{1,4}){0,3}", 1..10),
        t1 in 0.0..1.0f64,
        t2 in 0.0..1.0f64,
    ) {
        let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
        let gts: Vec<GeneratedText> = texts.iter().enumerate()
            .map(|(i, t)| GeneratedText::new(format!("g{i}"), "t", "p", t, &CleanConfig::default()))
            .collect();
        let claims: Vec<ClaimRecord> = corpus.iter().map(|c| ClaimRecord::new("t", c.clone())).collect();
        let corpus = ClaimCorpus::from_claims(&claims);
        let sts = NgramCosineSts::default();
        let m = match_claims(&gts, &corpus, &sts, lo).unwrap();
        prop_assert_eq!(&m, &match_claims(&gts, &corpus, &sts, lo).unwrap());
        let r_lo = novelty_rate(&m.matches).unwrap();
        let r_hi = novelty_rate(&rethreshold(&m.matches, hi)).unwrap();
        prop_assert!((0.0..=1.0).contains(&r_lo) && (0.0..=1.0).contains(&r_hi));
        prop_assert!(r_lo <= r_hi);
    }

    #[test]
    fn preference_counts_sum_to_pairs(votes in prop::collection::vec((0..10usize, 0..3usize), 0..100)) {
        let values = [PreferenceValue::Generated, PreferenceValue::Corpus, PreferenceValue::Tie];
        let js: Vec<Judgment> = votes.iter().enumerate()
            .map(|(i, &(pair, v))| Judgment::new(format!("a{i}"), format!("pair{pair}"), Label::Preference(values[v])))
            .collect();
        let pairs: BTreeSet<usize> = votes.iter().map(|v| v.0).collect();
        prop_assert_eq!(preference_summary(&js).total(), pairs.len());
    }
}

#[test]
fn perplexity_weakly_decreases_over_epochs() {
    let fmt = PromptFormat::default();
    let items: Vec<EvalItem> = (0..8)
        .map(|i| EvalItem::new(format!("We should ban thing{i}"), format!("thing{i} harms people in case {}", i % 3)))
        .collect();
    let seqs: Vec<TrainingSequence> = items.iter().map(|i| TrainingSequence::new(&i.topic, &i.claim, &fmt).unwrap()).collect();
    let mut model = ToyLm::for_sequences("m", &seqs);
    let mut last = perplexity(&model, &items, PerplexityMode::Pooled).unwrap();
    for _ in 0..15 {
        fine_tune(&mut model, &seqs, seqs.len()).unwrap();
        let p = perplexity(&model, &items, PerplexityMode::Pooled).unwrap();
        assert!(p <= last + 1e-12, "{p} > {last}");
        last = p;
    }
}
