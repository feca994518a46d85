//! Subcommand implementations. Each reads earlier artifacts from the output
//! directory, writes its own artifacts atomically, and records a manifest.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::annotation::{
    aggregate_factual, aggregate_plausibility, aggregate_stance, filter_annotators, load_judgments,
    mean_annotator_kappa, AggregatedLabel, AnnotatorAccuracy, Insufficient, KappaSummary, LabelSet, Task,
};
use crate::config::RunConfig;
use crate::corpus::{
    apply_wiki_lookup, build_training_sequences, filter_by_quality, load_claims, load_topics, overlapping_topics,
    retain_training_claims, split_topics, AspectTable, ClaimFormat, ClaimRecord, FramingMode, Split, Topic,
    TopicRegistry, TrainingSequence, WikiLookupEntry,
};
use crate::error::{Error, Result};
use crate::evaluation::{eval_report, load_external_claims, EvalReport};
use crate::io;
use crate::lm::{fine_tune, load_backend, LanguageModel, ToyLm, Vocabulary};
use crate::manifest::Manifest;
use crate::novelty::{match_claims, novelty_rate, preference_summary, vote_correlation, ClaimCorpus, MatchResult};
use crate::pipeline::{
    generate_for_topic, length_stats, prune_pool, score_all, select_top_k, Framing, GeneratedText,
    GenerationSettings, TopicFailure,
};
use crate::report::{
    reference_dev_rows, render_lengths, render_model_table, render_novelty, render_rank_eval, ModelRow,
    NoveltySummary,
};
use crate::scoring::{LabeledText, LexicalOverlapScorer, LogisticScorer, NgramCosineSts, PrecomputedScorer};
use crate::scoring::{rank_eval, RankEvalReport, RankItem, Scorer, ScorerKind};

/// Artifact file names inside the output directory.
pub mod artifacts {
    pub const TRAIN: &str = "train.jsonl";
    pub const TOPICS: &str = "topics.jsonl";
    pub const SPLITS: &str = "splits.json";
    pub const MODEL: &str = "model.json";
    pub const GENERATED: &str = "generated.jsonl";
    pub const RANKED: &str = "ranked.jsonl";
    pub const SELECTED: &str = "selected.jsonl";
    pub const EVAL_REPORT: &str = "eval_report.json";
    pub const LABELS: &str = "labels.jsonl";
    pub const AGREEMENT: &str = "agreement.json";
    pub const RANK_EVAL: &str = "rank_eval.json";
    pub const MATCHES: &str = "matches.jsonl";
    pub const NOVELTY: &str = "novelty.json";
    pub const REPORT: &str = "report.txt";
}

use artifacts::*;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Command {
    Prepare,
    Finetune,
    Generate,
    Rank,
    Evaluate,
    Aggregate,
    Novelty,
    Report {
        /// Append the published baseline rows.
        reference: bool,
        /// Further run directories shown as extra table rows.
        compare: Vec<PathBuf>,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Prepare => "prepare",
            Command::Finetune => "finetune",
            Command::Generate => "generate",
            Command::Rank => "rank",
            Command::Evaluate => "evaluate",
            Command::Aggregate => "aggregate",
            Command::Novelty => "novelty",
            Command::Report { .. } => "report",
        }
    }
}

/// Runs one subcommand and returns the manifest it wrote.
pub fn run(command: &Command, config: &RunConfig) -> Result<Manifest> {
    config.validate()?;
    std::fs::create_dir_all(&config.out_dir)?;
    let mut manifest = Manifest::new(command.name(), config, config.sampling.seed)?;
    let ctx = Ctx { config, out: &config.out_dir };
    match command {
        Command::Prepare => ctx.prepare(&mut manifest)?,
        Command::Finetune => ctx.finetune(&mut manifest)?,
        Command::Generate => ctx.generate(&mut manifest)?,
        Command::Rank => ctx.rank(&mut manifest)?,
        Command::Evaluate => ctx.evaluate(&mut manifest)?,
        Command::Aggregate => ctx.aggregate(&mut manifest)?,
        Command::Novelty => ctx.novelty(&mut manifest)?,
        Command::Report { reference, compare } => ctx.report(&mut manifest, *reference, compare)?,
    }
    manifest.write(&config.out_dir)?;
    Ok(manifest)
}

fn required<'a>(value: &'a Option<PathBuf>, field: &str) -> Result<&'a Path> {
    value
        .as_deref()
        .ok_or_else(|| Error::Config(vec![format!("{field} must be set for this command")]))
}

fn require_file(path: &Path) -> Result<&Path> {
    if path.exists() {
        Ok(path)
    } else {
        Err(Error::MissingFile(path.to_path_buf()))
    }
}

/// Per-topic failures, serialised into the manifest.
fn failure_map(failures: &[TopicFailure]) -> BTreeMap<&str, &str> {
    failures.iter().map(|f| (f.topic_id.as_str(), f.message.as_str())).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitsArtifact {
    #[serde(flatten)]
    pub assignment: crate::corpus::SplitAssignment,
    /// Topics introduced by the claims file and placed in train.
    pub auto_registered: Vec<String>,
    /// Topics with no wiki lookup entry.
    pub unmapped: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KappaOutcome {
    pub summary: Option<KappaSummary>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementArtifact {
    pub n_judgments: usize,
    pub n_after_filter: usize,
    pub removed_annotators: Vec<AnnotatorAccuracy>,
    pub untested_annotators: Vec<(String, Task)>,
    pub kappa: BTreeMap<String, KappaOutcome>,
    pub insufficient: Vec<Insufficient>,
    pub not_plausible: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ScoreRow {
    kind: ScorerKind,
    topic: String,
    text: String,
    score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct TrainingRow {
    kind: ScorerKind,
    #[serde(flatten)]
    example: LabeledText,
}

struct Ctx<'a> {
    config: &'a RunConfig,
    out: &'a Path,
}

impl Ctx<'_> {
    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn write_jsonl<T: Serialize>(&self, m: &mut Manifest, name: &str, rows: &[T]) -> Result<()> {
        let path = self.path(name);
        io::write_jsonl(&path, rows)?;
        m.output(name, &path)
    }

    fn write_json<T: Serialize>(&self, m: &mut Manifest, name: &str, value: &T) -> Result<()> {
        let path = self.path(name);
        io::write_json(&path, value)?;
        m.output(name, &path)
    }

    fn read_artifact<T: serde::de::DeserializeOwned>(&self, m: &mut Manifest, name: &str) -> Result<Vec<T>> {
        let path = self.path(name);
        require_file(&path)?;
        m.input(name, &path)?;
        io::read_jsonl_values(&path)
    }

    /// Prepared topics, or the configured topics file when `prepare` has not run.
    fn topics(&self, m: &mut Manifest) -> Result<TopicRegistry> {
        let prepared = self.path(TOPICS);
        if prepared.exists() {
            m.input(TOPICS, &prepared)?;
            return TopicRegistry::from_topics(io::read_jsonl_values::<Topic>(&prepared)?);
        }
        let path = required(&self.config.paths.topics, "paths.topics")?;
        m.input("topics", path)?;
        load_topics(path)
    }

    /// Selected texts if ranking has run, else the whole generated pool.
    fn gts(&self, m: &mut Manifest) -> Result<Vec<GeneratedText>> {
        let name = if self.path(SELECTED).exists() { SELECTED } else { GENERATED };
        self.read_artifact(m, name)
    }

    fn aspects(&self, m: &mut Manifest) -> Result<Option<AspectTable>> {
        if self.config.pipeline.framing != FramingMode::Aspect {
            return Ok(None);
        }
        let path = required(&self.config.paths.aspects, "paths.aspects")?;
        m.input("aspects", path)?;
        AspectTable::load(path).map(Some)
    }

    fn backend(&self) -> Result<&str> {
        self.config
            .model
            .backend
            .as_deref()
            .ok_or_else(|| Error::Config(vec!["model.backend must be set for this command".into()]))
    }

    fn load_model(&self, m: &mut Manifest) -> Result<Box<dyn LanguageModel>> {
        let backend = self.backend()?;
        let path = self.path(MODEL);
        require_file(&path)?;
        m.input(MODEL, &path)?;
        load_backend(backend, &path)
    }

    fn scorer(&self, m: &mut Manifest, name: &str, kind: ScorerKind) -> Result<Box<dyn Scorer>> {
        let paths = &self.config.paths;
        match name {
            "lexical" if !kind.is_signed() => Ok(Box::new(LexicalOverlapScorer::new(kind))),
            "ngram" if kind == ScorerKind::Sts => Ok(Box::new(NgramCosineSts::default())),
            "logistic" => {
                let path = required(&paths.scorer_training, "paths.scorer_training")?;
                m.input("scorer_training", path)?;
                let examples: Vec<LabeledText> = io::read_jsonl_values::<TrainingRow>(path)?
                    .into_iter()
                    .filter(|r| r.kind == kind)
                    .map(|r| r.example)
                    .collect();
                Ok(Box::new(LogisticScorer::train(
                    format!("logistic-{kind:?}").to_lowercase(),
                    kind,
                    &examples,
                    200,
                    1.0,
                    1e-4,
                )?))
            }
            "precomputed" => {
                let path = required(&paths.precomputed_scores, "paths.precomputed_scores")?;
                m.input("precomputed_scores", path)?;
                let mut scorer = PrecomputedScorer::new(format!("precomputed-{kind:?}").to_lowercase(), kind);
                for row in io::read_jsonl_values::<ScoreRow>(path)? {
                    if row.kind == kind {
                        scorer.insert(&row.topic, &row.text, row.score);
                    }
                }
                Ok(Box::new(scorer))
            }
            other => Err(Error::Config(vec![format!("unknown {kind:?} scorer `{other}`")])),
        }
    }

    fn optional_scorers(&self, m: &mut Manifest) -> Result<Vec<Box<dyn Scorer>>> {
        let s = &self.config.scorers;
        let mut out = Vec::new();
        for (name, kind) in [(&s.quality, ScorerKind::Quality), (&s.stance, ScorerKind::Stance)] {
            if let Some(name) = name {
                out.push(self.scorer(m, name, kind)?);
            }
        }
        Ok(out)
    }

    fn prepare(&self, m: &mut Manifest) -> Result<()> {
        let cfg = self.config;
        let topics_path = required(&cfg.paths.topics, "paths.topics")?;
        let claims_path = required(&cfg.paths.claims, "paths.claims")?;
        m.input("topics", topics_path)?;
        m.input("claims", claims_path)?;
        let listed = load_topics(topics_path)?;
        let claims = load_claims(claims_path, ClaimFormat::from_path(claims_path), None)?;

        let mut registry = listed.clone();
        let mut auto_registered = Vec::new();
        for c in &claims {
            if !registry.contains(&c.topic_id) {
                registry.insert(Topic::new(&c.topic_id, &c.topic_id, Split::Train))?;
                auto_registered.push(c.topic_id.clone());
            }
        }

        let mut unmapped = Vec::new();
        if let Some(path) = &cfg.paths.wiki_lookup {
            m.input("wiki_lookup", path)?;
            let lookup: Vec<WikiLookupEntry> = io::read_jsonl_values(path)?;
            let (r, u) = apply_wiki_lookup(registry, &lookup, cfg.pipeline.drop_unmapped_topics)?;
            registry = r;
            unmapped = u;
        }

        let mut exclusions: BTreeSet<String> = match &cfg.paths.exclusions {
            Some(path) => {
                m.input("exclusions", path)?;
                io::read_json(path)?
            }
            None => BTreeSet::new(),
        };
        if cfg.pipeline.exclude_training_topics {
            // only claims keyed by something other than a listed topic id can
            // reveal an overlap with an evaluation topic
            let foreign: Vec<ClaimRecord> = claims.iter().filter(|c| !listed.contains(&c.topic_id)).cloned().collect();
            exclusions.extend(overlapping_topics(&registry, &foreign));
        }
        exclusions.retain(|id| registry.contains(id));
        let assignment = split_topics(&registry, &exclusions)?;
        let registry = assignment.apply(&registry)?;

        let mut unscored = 0;
        let scored = if cfg.pipeline.filter_quality {
            let f = filter_by_quality(&claims, cfg.thresholds.quality_filter);
            unscored = f.unscored;
            f.kept
        } else {
            claims.clone()
        };
        let mut train = retain_training_claims(&scored, &registry);
        let aspects = self.aspects(m)?;
        let mut no_aspect = 0;
        if let Some(table) = &aspects {
            let before = train.len();
            train.retain(|c| table.aspect_for_titles(&c.wiki_titles).is_some());
            no_aspect = before - train.len();
        }
        let build = build_training_sequences(&train, &registry, cfg.pipeline.framing, aspects.as_ref(), &cfg.format)?;
        if build.sequences.is_empty() {
            log::warn!("no training sequences survived filtering");
        }

        self.write_jsonl(m, TRAIN, &build.sequences)?;
        let topics: Vec<&Topic> = registry.iter().collect();
        self.write_jsonl(m, TOPICS, &topics)?;
        m.count("claims_loaded", claims.len())?;
        m.count("claims_kept", scored.len())?;
        m.count("claims_unscored", unscored)?;
        m.count("claims_without_aspect", no_aspect)?;
        m.count("training_sequences", build.sequences.len())?;
        m.count("framing_skipped", build.framing_skipped)?;
        m.count("topics_train", assignment.train.len())?;
        m.count("topics_dev", assignment.dev.len())?;
        m.count("topics_test", assignment.test.len())?;
        self.write_json(
            m,
            SPLITS,
            &SplitsArtifact {
                assignment,
                auto_registered,
                unmapped,
            },
        )
    }

    fn finetune(&self, m: &mut Manifest) -> Result<()> {
        let backend = self.backend()?;
        let sequences: Vec<TrainingSequence> = self.read_artifact(m, TRAIN)?;
        let topics = self.topics(m)?;
        let mut model: Box<dyn LanguageModel> = match backend {
            "toy" => {
                let texts = sequences
                    .iter()
                    .flat_map(|s| [s.prompt.as_str(), s.completion.as_str()])
                    .chain(topics.iter().flat_map(|t| std::iter::once(t.text.as_str()).chain(t.fws.as_deref())));
                Box::new(ToyLm::new(&self.config.model.id, Vocabulary::from_texts(texts)))
            }
            other => return Err(Error::Config(vec![format!("backend `{other}` cannot be fine-tuned here")])),
        };
        let handle = fine_tune(model.as_mut(), &sequences, self.config.model.finetune_steps)?;
        let path = self.path(MODEL);
        model.save(&path)?;
        m.output(MODEL, &path)?;
        m.count("sequences", sequences.len())?;
        m.count("steps", self.config.model.finetune_steps)?;
        m.count("model", handle.identifier)
    }

    fn generate(&self, m: &mut Manifest) -> Result<()> {
        let cfg = self.config;
        let model = self.load_model(m)?;
        let registry = self.topics(m)?;
        let topics: Vec<&Topic> = registry.in_split(cfg.pipeline.split).collect();
        if topics.is_empty() {
            return Err(Error::invalid(format!("no {:?} topics to generate for", cfg.pipeline.split)));
        }
        let aspects = self.aspects(m)?;
        let framing = match (cfg.pipeline.framing, &aspects) {
            (FramingMode::None, _) => Framing::None,
            (FramingMode::Fws, _) => Framing::Fws,
            (FramingMode::Aspect, Some(table)) => Framing::Aspect {
                table,
                name: required_str(&cfg.pipeline.aspect, "pipeline.aspect")?,
            },
            (FramingMode::Aspect, None) => unreachable!("aspect table loaded for aspect framing"),
        };
        let settings = GenerationSettings {
            sampling: cfg.sampling.clone(),
            framing,
            format: cfg.format.clone(),
            clean: cfg.clean.clone(),
        };
        let mut pool = Vec::new();
        let mut failures = Vec::new();
        for topic in &topics {
            match generate_for_topic(model.as_ref(), topic, cfg.pipeline.n_per_topic, &settings) {
                Ok(gts) => pool.extend(gts),
                Err(e) => {
                    log::warn!("topic {}: {e}", topic.id);
                    failures.push(TopicFailure {
                        topic_id: topic.id.clone(),
                        message: e.to_string(),
                    });
                }
            }
        }
        if pool.is_empty() && !failures.is_empty() {
            return Err(Error::Backend(format!("generation failed for all {} topics", failures.len())));
        }
        let (kept, stats) = prune_pool(pool);
        self.write_jsonl(m, GENERATED, &kept)?;
        m.count("topics", topics.len())?;
        m.count("generated", kept.len())?;
        m.count("pool", stats)?;
        m.count("framing_skipped", kept.iter().filter(|g| g.framing_skipped).count())?;
        m.count("failures", failure_map(&failures))
    }

    fn rank(&self, m: &mut Manifest) -> Result<()> {
        let cfg = self.config;
        let mut gts: Vec<GeneratedText> = self.read_artifact(m, GENERATED)?;
        let registry = self.topics(m)?;
        let cd = self.scorer(m, &cfg.scorers.cd, ScorerKind::ClaimDetection)?;
        for scorer in self.optional_scorers(m)? {
            score_all(&mut gts, &registry, scorer.as_ref())?;
        }
        let selection = select_top_k(&mut gts, &registry, cd.as_ref(), cfg.pipeline.k_selected);
        if selection.selected.is_empty() && !gts.is_empty() {
            return Err(Error::Scorer {
                scorer: cd.name().to_string(),
                message: format!("no topic could be ranked ({} failures)", selection.failures.len()),
            });
        }
        let selected: Vec<&GeneratedText> = gts.iter().filter(|g| g.selected).collect();
        self.write_jsonl(m, SELECTED, &selected)?;
        m.count("selected", selected.len())?;
        m.count("topics_ranked", selection.selected.len())?;
        m.count("failures", failure_map(&selection.failures))?;
        self.write_jsonl(m, RANKED, &gts)
    }

    fn evaluate(&self, m: &mut Manifest) -> Result<()> {
        let cfg = self.config;
        self.backend()
            .map_err(|_| Error::Config(vec!["model.backend must be set for evaluate".into()]))?;
        let model = self.load_model(m)?;
        let external = match &cfg.paths.external_claims {
            Some(path) => {
                m.input("external_claims", path)?;
                load_external_claims(path)?
            }
            None => Vec::new(),
        };
        let topic_pool: Vec<String> = external
            .iter()
            .map(|i| i.topic.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let gts = if self.path(SELECTED).exists() || self.path(GENERATED).exists() {
            self.gts(m)?
        } else {
            Vec::new()
        };
        let registry = self.topics(m)?;
        let scorers = self.optional_scorers(m)?;
        let refs: Vec<&dyn Scorer> = scorers.iter().map(|s| s.as_ref()).collect();
        let report = eval_report(Some(model.as_ref()), &gts, &refs, &registry, &external, &topic_pool, &cfg.evaluation);
        for (metric, err) in &report.errors {
            log::warn!("{metric}: {err}");
        }
        m.count("external_items", external.len())?;
        m.count("gts", gts.len())?;
        m.count("partial", report.is_partial())?;
        self.write_json(m, EVAL_REPORT, &report)
    }

    fn aggregate(&self, m: &mut Manifest) -> Result<()> {
        let cfg = self.config;
        let path = required(&cfg.paths.judgments, "paths.judgments")?;
        m.input("judgments", path)?;
        let judgments = load_judgments(path)?;
        let thresholds = BTreeMap::from([
            (Task::Plausibility, cfg.thresholds.annotator_plausibility),
            (Task::Stance, cfg.thresholds.annotator_stance),
        ]);
        let filtered = filter_annotators(&judgments, &thresholds);
        let agg = cfg.thresholds.aggregation();
        let plausibility = aggregate_plausibility(&filtered.judgments, &agg);
        let stance = aggregate_stance(&filtered.judgments, &plausibility, &agg);
        let mut labels = LabelSet::default();
        labels.merge(plausibility);
        labels.merge(stance);
        labels.merge(aggregate_factual(&filtered.judgments, &agg));

        let mut kappa = BTreeMap::new();
        for (name, task) in [("plausibility", Task::Plausibility), ("stance", Task::Stance), ("factual", Task::Factual)] {
            if !filtered.judgments.iter().any(|j| j.task() == task) {
                continue;
            }
            let outcome = match mean_annotator_kappa(&filtered.judgments, task, cfg.kappa.min_common, cfg.kappa.min_partners) {
                Ok(s) => KappaOutcome {
                    summary: Some(s),
                    error: None,
                },
                Err(e) => KappaOutcome {
                    summary: None,
                    error: Some(e.to_string()),
                },
            };
            kappa.insert(name.to_string(), outcome);
        }

        let rows: Vec<&AggregatedLabel> = labels.labels.values().collect();
        self.write_jsonl(m, LABELS, &rows)?;
        m.count("items", rows.len())?;
        m.count("plausible", rows.iter().filter(|l| l.plausible == Some(true)).count())?;
        m.count("positive", rows.iter().filter(|l| l.is_positive()).count())?;
        m.count("removed_annotators", filtered.removed.len())?;
        self.write_json(
            m,
            AGREEMENT,
            &AgreementArtifact {
                n_judgments: judgments.len(),
                n_after_filter: filtered.judgments.len(),
                removed_annotators: filtered.removed,
                untested_annotators: filtered.untested,
                kappa,
                insufficient: labels.insufficient.clone(),
                not_plausible: labels.not_plausible.clone(),
            },
        )?;

        if self.path(RANKED).exists() {
            let ranked: Vec<GeneratedText> = self.read_artifact(m, RANKED)?;
            match self.rank_eval(&ranked, &labels) {
                Ok(report) => self.write_json(m, RANK_EVAL, &report)?,
                Err(e) => {
                    log::warn!("scorer ranking evaluation skipped: {e}");
                    m.count("rank_eval_error", e.to_string())?;
                }
            }
        }
        Ok(())
    }

    fn rank_eval(&self, gts: &[GeneratedText], labels: &LabelSet) -> Result<RankEvalReport> {
        let items: Vec<RankItem> = gts
            .iter()
            .filter_map(|g| {
                let l = labels.get(&g.id).filter(|l| l.plausible.is_some())?;
                let mut scores = BTreeMap::new();
                for (name, v) in [
                    ("cd", g.cd_score),
                    ("quality", g.quality_score),
                    ("stance", g.stance_score.map(f64::abs)),
                ] {
                    if let Some(v) = v {
                        scores.insert(name.to_string(), v);
                    }
                }
                Some(RankItem {
                    id: g.id.clone(),
                    topic_id: g.topic_id.clone(),
                    label: l.is_positive(),
                    scores,
                })
            })
            .collect();
        let names: Vec<&str> = ["cd", "quality", "stance"]
            .into_iter()
            .filter(|n| !items.is_empty() && items.iter().all(|i| i.scores.contains_key(*n)))
            .collect();
        if names.is_empty() {
            return Err(Error::invalid("no labelled texts with scores"));
        }
        rank_eval(&items, &names, self.config.thresholds.rank_window)
    }

    fn novelty(&self, m: &mut Manifest) -> Result<()> {
        let cfg = self.config;
        let path = required(&cfg.paths.corpus, "paths.corpus")?;
        m.input("corpus", path)?;
        let claims = load_claims(path, ClaimFormat::from_path(path), None)?;
        let gts = self.gts(m)?;
        let sts = self.scorer(m, &cfg.scorers.sts, ScorerKind::Sts)?;
        let threshold = cfg.thresholds.sts_match;
        let matching = match_claims(&gts, &ClaimCorpus::from_claims(&claims), sts.as_ref(), threshold)?;
        self.write_jsonl(m, MATCHES, &matching.matches)?;

        let correlation = if self.path(LABELS).exists() {
            let rows: Vec<AggregatedLabel> = self.read_artifact(m, LABELS)?;
            let labels = LabelSet {
                labels: rows.into_iter().map(|l| (l.item_id.clone(), l)).collect(),
                ..LabelSet::default()
            };
            let labelled: Vec<MatchResult> = matching
                .matches
                .iter()
                .filter(|r| labels.get(&r.gt_id).is_some_and(|l| l.plausible_votes.is_some()))
                .cloned()
                .collect();
            vote_correlation(&labelled, &labels)
                .map_err(|e| log::warn!("vote correlation skipped: {e}"))
                .ok()
        } else {
            None
        };
        let preferences = match &cfg.paths.judgments {
            Some(path) => {
                m.input("judgments", path)?;
                let judgments = load_judgments(path)?;
                let counts = preference_summary(&judgments);
                (counts.total() > 0).then_some(counts)
            }
            None => None,
        };
        let summary = NoveltySummary {
            threshold,
            attempted: matching.matches.len(),
            matched: crate::novelty::match_count(&matching.matches),
            skipped: matching.skipped.len(),
            novelty_rate: novelty_rate(&matching.matches).ok(),
            correlation,
            preferences,
        };
        m.count("matched", summary.matched)?;
        m.count("skipped", summary.skipped)?;
        self.write_json(m, NOVELTY, &summary)
    }

    fn report(&self, m: &mut Manifest, reference: bool, compare: &[PathBuf]) -> Result<()> {
        let mut out = String::new();
        let mut rows = Vec::new();
        let mut dirs = vec![self.out.to_path_buf()];
        dirs.extend(compare.iter().cloned());
        let views = dirs.iter().map(|d| RunView::read(d, m)).collect::<Result<Vec<_>>>()?;
        for (dir, view) in dirs.iter().zip(&views) {
            let name = view
                .eval
                .as_ref()
                .and_then(|e| e.model_id.clone())
                .unwrap_or_else(|| dir.file_name().map_or_else(|| dir.display().to_string(), |n| n.to_string_lossy().into()));
            rows.push(ModelRow::from_parts(&name, view.eval.as_ref(), view.gt_labels()));
        }
        if reference {
            rows.extend(reference_dev_rows());
        }
        out.push_str(&render_model_table(&rows));

        let view = &views[0];
        let labelled: Vec<GeneratedText> = view
            .gts
            .iter()
            .filter_map(|g| {
                let l = view.labels.get(&g.id)?;
                let mut g = g.clone();
                g.labels = Some(l.clone());
                Some(g)
            })
            .collect();
        if !labelled.is_empty() {
            let stats = length_stats(&labelled, &["plausible", "implausible"], |g: &GeneratedText| {
                g.labels.as_ref().and_then(|l| l.plausible).map(|p| if p { "plausible" } else { "implausible" })
            });
            out.push('\n');
            out.push_str(&render_lengths("Mean length of labelled texts", &stats.into_iter().collect::<Vec<_>>()));
        }
        for (name, text) in [
            (RANK_EVAL, view.rank_eval.as_ref().map(render_rank_eval)),
            (NOVELTY, view.novelty.as_ref().map(render_novelty)),
        ] {
            if let Some(text) = text {
                log::debug!("including {name}");
                out.push('\n');
                out.push_str(&text);
            }
        }
        if let Some(agreement) = &view.agreement {
            out.push_str("\nAgreement\n");
            for (task, k) in &agreement.kappa {
                match (&k.summary, &k.error) {
                    (Some(s), _) => out.push_str(&format!(
                        "  {task:<12} mean kappa {:.2} over {} annotators\n",
                        s.mean,
                        s.per_annotator.len()
                    )),
                    (None, Some(e)) => out.push_str(&format!("  {task:<12} undefined: {e}\n")),
                    (None, None) => {}
                }
            }
            out.push_str(&format!(
                "  {} of {} judgments kept after annotator filtering ({} annotator/task pairs removed)\n",
                agreement.n_after_filter,
                agreement.n_judgments,
                agreement.removed_annotators.len()
            ));
        }
        let path = self.path(REPORT);
        io::write_atomic(&path, out.as_bytes())?;
        m.output(REPORT, &path)
    }
}

fn required_str<'a>(value: &'a Option<String>, field: &str) -> Result<&'a str> {
    value
        .as_deref()
        .ok_or_else(|| Error::Config(vec![format!("{field} must be set for this command")]))
}

/// Whatever artifacts a run directory holds.
struct RunView {
    eval: Option<EvalReport>,
    gts: Vec<GeneratedText>,
    labels: BTreeMap<String, AggregatedLabel>,
    rank_eval: Option<RankEvalReport>,
    novelty: Option<NoveltySummary>,
    agreement: Option<AgreementArtifact>,
}

impl RunView {
    fn read(dir: &Path, m: &mut Manifest) -> Result<Self> {
        let mut note = |name: &str| -> Result<Option<PathBuf>> {
            let path = dir.join(name);
            if path.exists() {
                m.input(&path.display().to_string(), &path)?;
                Ok(Some(path))
            } else {
                Ok(None)
            }
        };
        let eval = note(EVAL_REPORT)?.map(|p| io::read_json(&p)).transpose()?;
        let gts_path = match note(SELECTED)? {
            Some(p) => Some(p),
            None => note(GENERATED)?,
        };
        let gts = match gts_path {
            Some(p) => io::read_jsonl_values(&p)?,
            None => Vec::new(),
        };
        let labels = match note(LABELS)? {
            Some(p) => io::read_jsonl_values::<AggregatedLabel>(&p)?
                .into_iter()
                .map(|l| (l.item_id.clone(), l))
                .collect(),
            None => BTreeMap::new(),
        };
        Ok(RunView {
            eval,
            gts,
            labels,
            rank_eval: note(RANK_EVAL)?.map(|p| io::read_json(&p)).transpose()?,
            novelty: note(NOVELTY)?.map(|p| io::read_json(&p)).transpose()?,
            agreement: note(AGREEMENT)?.map(|p| io::read_json(&p)).transpose()?,
        })
    }

    /// Labels of this run's texts; all labels when no texts are present.
    fn gt_labels(&self) -> Vec<&AggregatedLabel> {
        if self.gts.is_empty() {
            return self.labels.values().collect();
        }
        self.gts.iter().filter_map(|g| self.labels.get(&g.id)).collect()
    }
}
