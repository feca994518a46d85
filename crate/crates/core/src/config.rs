//! Run configuration: one TOML file plus `section.key=value` overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::annotation::AggregationConfig;
use crate::corpus::{FramingMode, PromptFormat, Split};
use crate::error::{Error, Result};
use crate::evaluation::EvalConfig;
use crate::lm::{CleanConfig, SamplingConfig};

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub claims: Option<PathBuf>,
    pub topics: Option<PathBuf>,
    pub aspects: Option<PathBuf>,
    pub wiki_lookup: Option<PathBuf>,
    /// JSON array of topic ids to keep out of dev/test.
    pub exclusions: Option<PathBuf>,
    pub judgments: Option<PathBuf>,
    pub corpus: Option<PathBuf>,
    pub external_claims: Option<PathBuf>,
    /// Labelled texts for training logistic scorers.
    pub scorer_training: Option<PathBuf>,
    /// Fixed scores for the `precomputed` scorer.
    pub precomputed_scores: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub backend: Option<String>,
    pub id: String,
    pub finetune_steps: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            backend: None,
            id: "model".into(),
            finetune_steps: 2000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub n_per_topic: usize,
    pub k_selected: usize,
    pub framing: FramingMode,
    /// Aspect used to frame generation prompts when `framing = "aspect"`.
    pub aspect: Option<String>,
    /// Topics generated for.
    pub split: Split,
    pub filter_quality: bool,
    pub drop_unmapped_topics: bool,
    /// Move dev/test topics that also appear in the training claims to train.
    pub exclude_training_topics: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            n_per_topic: 20,
            k_selected: 7,
            framing: FramingMode::None,
            aspect: None,
            split: Split::Test,
            filter_quality: true,
            drop_unmapped_topics: false,
            exclude_training_topics: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScorerConfig {
    /// `lexical`, `logistic` or `precomputed`.
    pub cd: String,
    pub quality: Option<String>,
    pub stance: Option<String>,
    /// `ngram`.
    pub sts: String,
}

impl Default for ScorerConfig {
    fn default() -> Self {
        ScorerConfig {
            cd: "lexical".into(),
            quality: None,
            stance: None,
            sts: "ngram".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Thresholds {
    pub quality_filter: f64,
    pub plausibility: f64,
    pub factual: f64,
    pub sts_match: f64,
    pub annotator_plausibility: f64,
    pub annotator_stance: f64,
    pub min_judgments: usize,
    /// Items counted at each end of a topic's ranking.
    pub rank_window: usize,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            quality_filter: 0.9,
            plausibility: 0.7,
            factual: 0.7,
            sts_match: 0.75,
            annotator_plausibility: 0.75,
            annotator_stance: 0.80,
            min_judgments: 5,
            rank_window: 3,
        }
    }
}

impl Thresholds {
    pub fn aggregation(&self) -> AggregationConfig {
        AggregationConfig {
            min_judgments: self.min_judgments,
            plausibility_threshold: self.plausibility,
            factual_threshold: self.factual,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KappaConfig {
    pub min_common: usize,
    pub min_partners: usize,
}

impl Default for KappaConfig {
    fn default() -> Self {
        KappaConfig {
            min_common: 50,
            min_partners: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub out_dir: PathBuf,
    pub paths: Paths,
    pub model: ModelConfig,
    pub sampling: SamplingConfig,
    pub pipeline: PipelineConfig,
    pub scorers: ScorerConfig,
    pub thresholds: Thresholds,
    pub kappa: KappaConfig,
    pub evaluation: EvalConfig,
    pub format: PromptFormat,
    pub clean: CleanConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            out_dir: PathBuf::from("run"),
            paths: Paths::default(),
            model: ModelConfig::default(),
            sampling: SamplingConfig {
                seed: Some(0),
                ..SamplingConfig::default()
            },
            pipeline: PipelineConfig::default(),
            scorers: ScorerConfig::default(),
            thresholds: Thresholds::default(),
            kappa: KappaConfig::default(),
            evaluation: EvalConfig::default(),
            format: PromptFormat::default(),
            clean: CleanConfig::default(),
        }
    }
}

/// Sets `dotted.key` in a TOML table. The value is parsed as a TOML literal,
/// falling back to a plain string.
fn apply_override(root: &mut toml::Table, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Config(vec![format!("override `{assignment}` is not key=value")]))?;
    let value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let parts: Vec<&str> = key.trim().split('.').collect();
    let mut table = root;
    for part in &parts[..parts.len() - 1] {
        table = table
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| Error::Config(vec![format!("`{part}` in `{key}` is not a table")]))?;
    }
    table.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

impl RunConfig {
    pub fn from_toml_str(text: &str, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::Config(vec![e.to_string()]))?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let config: RunConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(vec![e.to_string()]))?;
        config.validate()?;
        Ok(config)
    }

    /// Loads a config file; relative paths in it resolve against its directory.
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::MissingFile(path.to_path_buf()),
            _ => Error::Io(e),
        })?;
        let mut config = RunConfig::from_toml_str(&text, overrides)?;
        if let Some(base) = path.parent() {
            config.resolve_relative_to(base);
        }
        Ok(config)
    }

    fn resolve_relative_to(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.out_dir);
        let paths = &mut self.paths;
        for p in [
            &mut paths.claims,
            &mut paths.topics,
            &mut paths.aspects,
            &mut paths.wiki_lookup,
            &mut paths.exclusions,
            &mut paths.judgments,
            &mut paths.corpus,
            &mut paths.external_claims,
            &mut paths.scorer_training,
            &mut paths.precomputed_scores,
        ]
        .into_iter()
        .flatten()
        {
            fix(p);
        }
    }

    /// Every range violation, all at once.
    pub fn violations(&self) -> Vec<String> {
        let mut v = self.sampling.violations();
        let t = &self.thresholds;
        for (name, value) in [
            ("thresholds.quality_filter", t.quality_filter),
            ("thresholds.plausibility", t.plausibility),
            ("thresholds.factual", t.factual),
            ("thresholds.annotator_plausibility", t.annotator_plausibility),
            ("thresholds.annotator_stance", t.annotator_stance),
        ] {
            if !(0.0..=1.0).contains(&value) {
                v.push(format!("{name} must be in [0,1], got {value}"));
            }
        }
        if !(t.sts_match >= 0.0 && t.sts_match.is_finite()) {
            v.push(format!("thresholds.sts_match must be >= 0, got {}", t.sts_match));
        }
        if t.min_judgments == 0 {
            v.push("thresholds.min_judgments must be >= 1".into());
        }
        if self.pipeline.n_per_topic == 0 {
            v.push("pipeline.n_per_topic must be >= 1".into());
        }
        if self.pipeline.k_selected == 0 {
            v.push("pipeline.k_selected must be >= 1".into());
        }
        if self.pipeline.framing == FramingMode::Aspect && self.paths.aspects.is_none() {
            v.push("paths.aspects is required for aspect framing".into());
        }
        if self.pipeline.framing == FramingMode::Aspect && self.pipeline.aspect.is_none() {
            v.push("pipeline.aspect is required for aspect framing".into());
        }
        if t.rank_window == 0 {
            v.push("thresholds.rank_window must be >= 1".into());
        }
        if self.model.finetune_steps == 0 {
            v.push("model.finetune_steps must be >= 1".into());
        }
        if self.evaluation.n_samples == 0 || self.evaluation.sample_size == 0 {
            v.push("evaluation.n_samples and evaluation.sample_size must be >= 1".into());
        }
        if self.format.delimiter.is_empty() {
            v.push("format.delimiter must not be empty".into());
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

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_published_settings() {
        let c = RunConfig::from_toml_str("", &[]).unwrap();
        assert_eq!(c.sampling.top_k, 40);
        assert_eq!(c.sampling.temperature, 0.7);
        assert_eq!(c.sampling.max_new_tokens, 50);
        assert_eq!((c.pipeline.n_per_topic, c.pipeline.k_selected), (20, 7));
        assert_eq!(c.thresholds.quality_filter, 0.9);
        assert_eq!(c.thresholds.plausibility, 0.7);
        assert_eq!(c.thresholds.sts_match, 0.75);
        assert_eq!((c.thresholds.annotator_plausibility, c.thresholds.annotator_stance), (0.75, 0.80));
        assert_eq!((c.kappa.min_common, c.kappa.min_partners), (50, 5));
        assert_eq!(c.evaluation.n_distractors, 9);
        assert_eq!((c.evaluation.n_samples, c.evaluation.sample_size), (10, 100));
    }

    #[test]
    fn overrides_apply() {
        let c = RunConfig::from_toml_str(
            "[pipeline]\nn_per_topic = 5\n",
            &["pipeline.k_selected=2".into(), "model.backend=toy".into(), "sampling.temperature=1.5".into()],
        )
        .unwrap();
        assert_eq!(c.pipeline.n_per_topic, 5);
        assert_eq!(c.pipeline.k_selected, 2);
        assert_eq!(c.model.backend.as_deref(), Some("toy"));
        assert_eq!(c.sampling.temperature, 1.5);
    }

    #[test]
    fn all_violations_reported() {
        let err = RunConfig::from_toml_str(
            "[thresholds]\nplausibility = 1.5\nquality_filter = -1.0\n[sampling]\ntop_k = 0\n",
            &[],
        )
        .unwrap_err();
        match err {
            Error::Config(v) => assert_eq!(v.len(), 3, "{v:?}"),
            e => panic!("{e:?}"),
        }
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(RunConfig::from_toml_str("[pipeline]\nbogus = 1\n", &[]).is_err());
        assert!(RunConfig::from_toml_str("", &["novalue".into()]).is_err());
    }
}
