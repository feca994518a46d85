//! Claim datasets: ingestion, quality filtering, topic splits and rendering
//! of (topic, claim) pairs into training sequences.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    Test,
}

/// A debatable policy statement, optionally linked to a Wikipedia page.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Topic {
    pub id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wiki_title: Option<String>,
    /// First sentence of the linked Wikipedia page.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fws: Option<String>,
    pub split: Split,
}

impl Topic {
    pub fn new(id: impl Into<String>, text: impl Into<String>, split: Split) -> Self {
        Topic {
            id: id.into(),
            text: text.into(),
            wiki_title: None,
            fws: None,
            split,
        }
    }

    pub fn with_fws(mut self, wiki_title: impl Into<String>, fws: impl Into<String>) -> Self {
        self.wiki_title = Some(wiki_title.into());
        self.fws = Some(fws.into());
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.text.trim().is_empty() {
            return Err(Error::invalid(format!("topic `{}` has empty text", self.id)));
        }
        if self.fws.is_some() && self.wiki_title.is_none() {
            return Err(Error::invalid(format!(
                "topic `{}` has a framing sentence but no wiki_title",
                self.id
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StanceLabel {
    Pro,
    Con,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Rank30k,
    Ce,
    Ln,
    Retrieved,
    #[default]
    Other,
}

/// A human-authored claim tied to a topic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClaimRecord {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    pub topic_id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quality_score: Option<f64>,
    #[serde(default, rename = "stance", skip_serializing_if = "Option::is_none")]
    pub stance_label: Option<StanceLabel>,
    #[serde(default)]
    pub source: Source,
    /// Wikipedia titles the claim references; used only for aspect framing.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub wiki_titles: Vec<String>,
}

impl ClaimRecord {
    pub fn new(topic_id: impl Into<String>, text: impl Into<String>) -> Self {
        ClaimRecord {
            id: None,
            topic_id: topic_id.into(),
            text: text.into(),
            quality_score: None,
            stance_label: None,
            source: Source::Other,
            wiki_titles: Vec::new(),
        }
    }

    pub fn with_quality(mut self, q: f64) -> Self {
        self.quality_score = Some(q);
        self
    }
}

/// Topics keyed by id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TopicRegistry {
    topics: BTreeMap<String, Topic>,
}

impl TopicRegistry {
    pub fn from_topics(topics: impl IntoIterator<Item = Topic>) -> Result<Self> {
        let mut reg = TopicRegistry::default();
        for t in topics {
            reg.insert(t)?;
        }
        Ok(reg)
    }

    pub fn insert(&mut self, topic: Topic) -> Result<()> {
        topic.validate()?;
        if self.topics.contains_key(&topic.id) {
            return Err(Error::invalid(format!("duplicate topic id `{}`", topic.id)));
        }
        self.topics.insert(topic.id.clone(), topic);
        Ok(())
    }

    pub fn get(&self, id: &str) -> Option<&Topic> {
        self.topics.get(id)
    }

    pub fn contains(&self, id: &str) -> bool {
        self.topics.contains_key(id)
    }

    pub fn len(&self) -> usize {
        self.topics.len()
    }

    pub fn is_empty(&self) -> bool {
        self.topics.is_empty()
    }

    /// Topics in id order.
    pub fn iter(&self) -> impl Iterator<Item = &Topic> {
        self.topics.values()
    }

    pub fn in_split(&self, split: Split) -> impl Iterator<Item = &Topic> {
        self.topics.values().filter(move |t| t.split == split)
    }

    pub fn into_topics(self) -> Vec<Topic> {
        self.topics.into_values().collect()
    }
}

pub fn load_topics(path: &Path) -> Result<TopicRegistry> {
    let mut reg = TopicRegistry::default();
    for (line, topic) in io::read_jsonl::<Topic>(path)? {
        reg.insert(topic).map_err(|e| Error::MalformedRow {
            path: path.to_path_buf(),
            line,
            message: e.to_string(),
        })?;
    }
    Ok(reg)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClaimFormat {
    Jsonl,
    Csv,
}

impl ClaimFormat {
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("csv") => ClaimFormat::Csv,
            _ => ClaimFormat::Jsonl,
        }
    }
}

/// Loads claims from JSONL or CSV.
///
/// CSV files may use either the native columns
/// (`topic_id,text,quality_score,stance,source`) or the public Rank-30k
/// export columns (`argument,topic,...,WA,...,stance_WA`), in which case the
/// topic text doubles as the topic id. Reported line numbers are physical
/// file lines.
pub fn load_claims(
    path: &Path,
    format: ClaimFormat,
    registry: Option<&TopicRegistry>,
) -> Result<Vec<ClaimRecord>> {
    let rows = match format {
        ClaimFormat::Jsonl => io::read_jsonl::<ClaimRecord>(path)?,
        ClaimFormat::Csv => read_claims_csv(path)?,
    };
    let mut claims = Vec::with_capacity(rows.len());
    for (line, claim) in rows {
        let bad = |message: String| Error::MalformedRow {
            path: path.to_path_buf(),
            line,
            message,
        };
        if claim.text.trim().is_empty() {
            return Err(bad("claim text is empty".into()));
        }
        if let Some(q) = claim.quality_score {
            if !(0.0..=1.0).contains(&q) {
                return Err(bad(format!("quality_score {q} outside [0,1]")));
            }
        }
        if let Some(reg) = registry {
            if !reg.contains(&claim.topic_id) {
                return Err(Error::UnknownTopic {
                    topic_id: claim.topic_id,
                    line,
                });
            }
        }
        claims.push(claim);
    }
    Ok(claims)
}

fn read_claims_csv(path: &Path) -> Result<Vec<(usize, ClaimRecord)>> {
    let mut reader = csv::Reader::from_reader(io::open(path)?);
    let headers = reader.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h.trim() == name);
    let rank30k = col("argument").is_some() && col("WA").is_some();

    let (text_col, topic_col, score_col, stance_col) = if rank30k {
        (col("argument"), col("topic"), col("WA"), col("stance_WA"))
    } else {
        (col("text"), col("topic_id"), col("quality_score"), col("stance"))
    };
    let source_col = col("source");
    let (Some(text_col), Some(topic_col)) = (text_col, topic_col) else {
        return Err(Error::MalformedRow {
            path: path.to_path_buf(),
            line: 1,
            message: "missing text/topic columns in header".into(),
        });
    };

    let mut out = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
        let bad = |message: String| Error::MalformedRow {
            path: path.to_path_buf(),
            line,
            message,
        };
        let field = |i: Option<usize>| i.and_then(|i| record.get(i)).map(str::trim).filter(|s| !s.is_empty());

        let quality_score = field(score_col)
            .map(|s| s.parse::<f64>().map_err(|e| bad(format!("bad quality score `{s}`: {e}"))))
            .transpose()?;
        let stance_label = match field(stance_col) {
            None => None,
            Some("pro") | Some("1") | Some("1.0") => Some(StanceLabel::Pro),
            Some("con") | Some("-1") | Some("-1.0") => Some(StanceLabel::Con),
            Some(other) => return Err(bad(format!("bad stance `{other}`"))),
        };
        let source = if rank30k {
            Source::Rank30k
        } else {
            match field(source_col) {
                None => Source::Other,
                Some(s) => serde_json::from_value(serde_json::Value::String(s.to_string()))
                    .map_err(|_| bad(format!("unknown source `{s}`")))?,
            }
        };
        out.push((
            line,
            ClaimRecord {
                id: None,
                topic_id: record.get(topic_col).unwrap_or("").trim().to_string(),
                text: record.get(text_col).unwrap_or("").to_string(),
                quality_score,
                stance_label,
                source,
                wiki_titles: Vec::new(),
            },
        ));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct QualityFilter {
    pub kept: Vec<ClaimRecord>,
    /// Records dropped because they carry no quality score.
    pub unscored: usize,
}

/// Keeps records whose quality score is strictly greater than `threshold`.
pub fn filter_by_quality(claims: &[ClaimRecord], threshold: f64) -> QualityFilter {
    let mut unscored = 0;
    let kept = claims
        .iter()
        .filter(|c| match c.quality_score {
            Some(q) => q > threshold,
            None => {
                unscored += 1;
                false
            }
        })
        .cloned()
        .collect();
    QualityFilter { kept, unscored }
}

/// Drops claims whose topic is not assigned to the train split (or is unknown).
pub fn retain_training_claims(claims: &[ClaimRecord], topics: &TopicRegistry) -> Vec<ClaimRecord> {
    claims
        .iter()
        .filter(|c| matches!(topics.get(&c.topic_id), Some(t) if t.split == Split::Train))
        .cloned()
        .collect()
}

/// Separators used when rendering prompts and training sequences.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PromptFormat {
    /// Between prompt and completion.
    pub delimiter: String,
    /// Appended after the completion in training sequences.
    pub end_marker: String,
    /// Between a framing sentence and the topic it precedes.
    pub fws_separator: String,
    /// Between the topic and an aspect framing sentence.
    pub aspect_separator: String,
}

impl Default for PromptFormat {
    fn default() -> Self {
        PromptFormat {
            delimiter: "\n[CLAIM]\n".into(),
            end_marker: "<|endoftext|>".into(),
            fws_separator: " ".into(),
            aspect_separator: "\n[ASPECT]\n".into(),
        }
    }
}

/// A prompt plus whether the requested framing had to be skipped.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FramedPrompt {
    pub text: String,
    pub framing_skipped: bool,
}

/// Prepends the topic's first Wikipedia sentence, when it has one.
pub fn frame_topic_fws(topic: &Topic, format: &PromptFormat) -> FramedPrompt {
    match &topic.fws {
        Some(fws) => FramedPrompt {
            text: format!("{fws}{}{}", format.fws_separator, topic.text),
            framing_skipped: false,
        },
        None => FramedPrompt {
            text: topic.text.clone(),
            framing_skipped: true,
        },
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aspect {
    pub aspect: String,
    pub wiki_titles: Vec<String>,
    pub framing_sentence: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct AspectTable {
    entries: Vec<Aspect>,
}

impl AspectTable {
    pub fn new(entries: Vec<Aspect>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for e in &entries {
            if !seen.insert(e.aspect.as_str()) {
                return Err(Error::invalid(format!("duplicate aspect `{}`", e.aspect)));
            }
            if e.framing_sentence.trim().is_empty() {
                return Err(Error::invalid(format!("aspect `{}` has empty framing sentence", e.aspect)));
            }
        }
        Ok(AspectTable { entries })
    }

    pub fn load(path: &Path) -> Result<Self> {
        AspectTable::new(io::read_jsonl_values(path)?)
    }

    pub fn get(&self, name: &str) -> Option<&Aspect> {
        self.entries.iter().find(|a| a.aspect == name)
    }

    pub fn entries(&self) -> &[Aspect] {
        &self.entries
    }

    /// First aspect (in table order) sharing a Wikipedia title with `titles`.
    pub fn aspect_for_titles(&self, titles: &[String]) -> Option<&Aspect> {
        self.entries
            .iter()
            .find(|a| a.wiki_titles.iter().any(|w| titles.contains(w)))
    }
}

/// Topic text followed by the aspect's framing sentence.
pub fn frame_claim_aspect(
    topic: &Topic,
    table: &AspectTable,
    aspect: &str,
    format: &PromptFormat,
) -> Result<String> {
    let entry = table
        .get(aspect)
        .ok_or_else(|| Error::UnknownAspect(aspect.to_string()))?;
    Ok(format!(
        "{}{}{}",
        topic.text, format.aspect_separator, entry.framing_sentence
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FramingMode {
    #[default]
    None,
    Fws,
    Aspect,
}

/// One (prompt, completion) pair rendered as a single sequence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingSequence {
    pub prompt: String,
    pub completion: String,
    pub rendered: String,
}

impl TrainingSequence {
    pub fn new(prompt: &str, completion: &str, format: &PromptFormat) -> Result<Self> {
        if prompt.contains(&format.delimiter) || completion.contains(&format.delimiter) {
            return Err(Error::invalid("prompt or completion contains the delimiter"));
        }
        Ok(TrainingSequence {
            prompt: prompt.to_string(),
            completion: completion.to_string(),
            rendered: format!("{prompt}{}{completion}{}", format.delimiter, format.end_marker),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SequenceBuild {
    pub sequences: Vec<TrainingSequence>,
    /// Claims framed without their requested context (topic had no fws).
    pub framing_skipped: usize,
}

/// Renders every claim as a training sequence.
///
/// Under [`FramingMode::Aspect`] each claim is framed by the first aspect
/// whose Wikipedia titles it references; a claim referencing none is an error,
/// so callers filter with [`AspectTable::aspect_for_titles`] beforehand.
pub fn build_training_sequences(
    claims: &[ClaimRecord],
    topics: &TopicRegistry,
    framing: FramingMode,
    aspects: Option<&AspectTable>,
    format: &PromptFormat,
) -> Result<SequenceBuild> {
    let mut out = SequenceBuild::default();
    for (idx, claim) in claims.iter().enumerate() {
        let topic = topics.get(&claim.topic_id).ok_or_else(|| Error::UnknownTopic {
            topic_id: claim.topic_id.clone(),
            line: idx + 1,
        })?;
        let prompt = match framing {
            FramingMode::None => topic.text.clone(),
            FramingMode::Fws => {
                let framed = frame_topic_fws(topic, format);
                out.framing_skipped += usize::from(framed.framing_skipped);
                framed.text
            }
            FramingMode::Aspect => {
                let table = aspects.ok_or_else(|| Error::invalid("aspect framing without an aspect table"))?;
                let aspect = table.aspect_for_titles(&claim.wiki_titles).ok_or_else(|| {
                    Error::invalid(format!("claim {} references no aspect page", idx + 1))
                })?;
                frame_claim_aspect(topic, table, &aspect.aspect, format)?
            }
        };
        out.sequences.push(TrainingSequence::new(&prompt, &claim.text, format)?);
    }
    Ok(out)
}

/// Topic text → (Wikipedia title, first sentence).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WikiLookupEntry {
    pub topic: String,
    pub wiki_title: String,
    pub fws: String,
}

/// Attaches lookup entries to topics lacking a framing sentence. Returns the
/// ids of topics without a mapping; with `drop_unmapped` they are removed.
pub fn apply_wiki_lookup(
    registry: TopicRegistry,
    lookup: &[WikiLookupEntry],
    drop_unmapped: bool,
) -> Result<(TopicRegistry, Vec<String>)> {
    let by_text: BTreeMap<&str, &WikiLookupEntry> =
        lookup.iter().map(|e| (e.topic.as_str(), e)).collect();
    let mut unmapped = Vec::new();
    let mut out = TopicRegistry::default();
    for mut topic in registry.into_topics() {
        if topic.fws.is_none() {
            match by_text.get(topic.text.as_str()) {
                Some(e) => {
                    topic.wiki_title = Some(e.wiki_title.clone());
                    topic.fws = Some(e.fws.clone());
                }
                None => {
                    unmapped.push(topic.id.clone());
                    if drop_unmapped {
                        continue;
                    }
                }
            }
        }
        out.insert(topic)?;
    }
    Ok((out, unmapped))
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SplitAssignment {
    pub train: Vec<String>,
    pub dev: Vec<String>,
    pub test: Vec<String>,
    /// Excluded dev/test topics moved to train.
    pub reassigned: Vec<String>,
    pub warnings: Vec<String>,
}

impl SplitAssignment {
    pub fn apply(&self, registry: &TopicRegistry) -> Result<TopicRegistry> {
        let mut topics = Vec::with_capacity(registry.len());
        for (ids, split) in [(&self.train, Split::Train), (&self.dev, Split::Dev), (&self.test, Split::Test)] {
            for id in ids {
                let mut t = registry
                    .get(id)
                    .cloned()
                    .ok_or_else(|| Error::invalid(format!("unknown topic `{id}`")))?;
                t.split = split;
                topics.push(t);
            }
        }
        TopicRegistry::from_topics(topics)
    }
}

/// Removes excluded topics from dev/test, moving them to train.
pub fn split_topics(topics: &TopicRegistry, exclusions: &BTreeSet<String>) -> Result<SplitAssignment> {
    if let Some(unknown) = exclusions.iter().find(|id| !topics.contains(id)) {
        return Err(Error::invalid(format!("excluded topic `{unknown}` is unknown")));
    }
    let mut out = SplitAssignment::default();
    for t in topics.iter() {
        let excluded = exclusions.contains(&t.id);
        match t.split {
            Split::Train => out.train.push(t.id.clone()),
            Split::Dev | Split::Test if excluded => {
                out.reassigned.push(t.id.clone());
                out.train.push(t.id.clone());
            }
            Split::Dev => out.dev.push(t.id.clone()),
            Split::Test => out.test.push(t.id.clone()),
        }
    }
    for (name, ids) in [("dev", &out.dev), ("test", &out.test)] {
        if ids.is_empty() {
            let msg = format!("{name} split is empty after exclusions");
            log::warn!("{msg}");
            out.warnings.push(msg);
        }
    }
    Ok(out)
}

/// Ids of topics whose text appears among `claims`' topic ids or texts,
/// matched case-insensitively. Used to exclude evaluation topics that overlap
/// a training dataset keyed by topic text.
pub fn overlapping_topics(topics: &TopicRegistry, claims: &[ClaimRecord]) -> BTreeSet<String> {
    let keys: BTreeSet<String> = claims.iter().map(|c| c.topic_id.to_lowercase()).collect();
    topics
        .iter()
        .filter(|t| t.split != Split::Train)
        .filter(|t| keys.contains(&t.text.to_lowercase()) || keys.contains(&t.id.to_lowercase()))
        .map(|t| t.id.clone())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn registry() -> TopicRegistry {
        TopicRegistry::from_topics([
            Topic::new("t1", "We should ban lotteries", Split::Train),
            Topic::new("t2", "We should increase the use of telemedicine", Split::Dev).with_fws(
                "Telemedicine",
                "Telemedicine is the distribution of health-related services and information via electronic information and telecommunication technologies.",
            ),
            Topic::new("t3", "We should abandon Gmail", Split::Test),
        ])
        .unwrap()
    }

    fn write(contents: &str, ext: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::Builder::new().suffix(ext).tempfile().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn load_three_rows() {
        let f = write(
            r#"{"topic_id":"t1","text":"a","source":"rank30k","quality_score":0.95}
{"topic_id":"t1","text":"b","source":"ce","stance":"pro"}
{"topic_id":"t2","text":"c","source":"ln"}
"#,
            ".jsonl",
        );
        let claims = load_claims(f.path(), ClaimFormat::Jsonl, Some(&registry())).unwrap();
        assert_eq!(claims.len(), 3);
        assert_eq!(claims[1].stance_label, Some(StanceLabel::Pro));
        assert_eq!(claims[0].source, Source::Rank30k);
    }

    #[test]
    fn empty_text_names_line_one() {
        let f = write(r#"{"topic_id":"t1","text":"","source":"other"}"#, ".jsonl");
        match load_claims(f.path(), ClaimFormat::Jsonl, None).unwrap_err() {
            Error::MalformedRow { line, .. } => assert_eq!(line, 1),
            e => panic!("{e:?}"),
        }
    }

    #[test]
    fn unknown_topic_rejected() {
        let f = write(r#"{"topic_id":"nope","text":"x","source":"other"}"#, ".jsonl");
        assert!(matches!(
            load_claims(f.path(), ClaimFormat::Jsonl, Some(&registry())),
            Err(Error::UnknownTopic { line: 1, .. })
        ));
    }

    #[test]
    fn missing_file() {
        assert!(matches!(
            load_claims(Path::new("/nonexistent/claims.jsonl"), ClaimFormat::Jsonl, None),
            Err(Error::MissingFile(_))
        ));
    }

    #[test]
    fn rank30k_csv_columns() {
        let f = write(
            "argument,topic,set,WA,MACE-P,stance_WA,stance_WA_conf\n\"lotteries prey on the poor, so ban them\",We should ban lotteries,train,0.93,0.8,1,1.0\nother,We should ban lotteries,dev,0.4,0.2,-1,0.8\n",
            ".csv",
        );
        let claims = load_claims(f.path(), ClaimFormat::Csv, None).unwrap();
        assert_eq!(claims.len(), 2);
        assert_eq!(claims[0].topic_id, "We should ban lotteries");
        assert_eq!(claims[0].quality_score, Some(0.93));
        assert_eq!(claims[1].stance_label, Some(StanceLabel::Con));
        assert_eq!(claims[0].source, Source::Rank30k);
    }

    #[test]
    fn native_csv_empty_text_reports_physical_line() {
        let f = write("topic_id,text,quality_score,stance,source\nt1,fine,0.5,pro,ce\nt1,,,,\n", ".csv");
        match load_claims(f.path(), ClaimFormat::Csv, None).unwrap_err() {
            Error::MalformedRow { line, .. } => assert_eq!(line, 3),
            e => panic!("{e:?}"),
        }
    }

    #[test]
    fn quality_filter_strict() {
        let claims: Vec<_> = [0.95, 0.9, 0.5, 1.0]
            .iter()
            .map(|&q| ClaimRecord::new("t1", "x").with_quality(q))
            .chain(std::iter::once(ClaimRecord::new("t1", "unscored")))
            .collect();
        let f = filter_by_quality(&claims, 0.9);
        assert_eq!(f.kept.len(), 2);
        assert_eq!(f.unscored, 1);
        assert!(filter_by_quality(&claims, 1.0).kept.is_empty());
        let scored: Vec<_> = claims[..4].to_vec();
        assert_eq!(filter_by_quality(&scored, 0.0).kept, scored);
    }

    #[test]
    fn fws_framing() {
        let reg = registry();
        let fmt = PromptFormat::default();
        let t2 = reg.get("t2").unwrap();
        let framed = frame_topic_fws(t2, &fmt);
        assert!(!framed.framing_skipped);
        assert!(framed.text.starts_with("Telemedicine is the distribution of health-related services"));
        assert!(framed.text.ends_with(" We should increase the use of telemedicine"));

        let t1 = reg.get("t1").unwrap();
        let bare = frame_topic_fws(t1, &fmt);
        assert_eq!(bare.text, t1.text);
        assert!(bare.framing_skipped);

        let mut a = t2.clone();
        a.text = "We should decrease the use of telemedicine".into();
        let pa = frame_topic_fws(&a, &fmt).text;
        let pb = frame_topic_fws(t2, &fmt).text;
        assert_ne!(pa, pb);
        assert_eq!(pa.replace("decrease", "increase"), pb);
    }

    fn aspects() -> AspectTable {
        AspectTable::new(vec![
            Aspect {
                aspect: "Economy".into(),
                wiki_titles: vec!["Economy".into(), "Tax".into()],
                framing_sentence: "Consider how this relates to the economy".into(),
            },
            Aspect {
                aspect: "Health".into(),
                wiki_titles: vec!["Health".into()],
                framing_sentence: "Consider how this relates to health".into(),
            },
        ])
        .unwrap()
    }

    #[test]
    fn aspect_framing() {
        let reg = registry();
        let fmt = PromptFormat::default();
        let t = reg.get("t1").unwrap();
        let econ = frame_claim_aspect(t, &aspects(), "Economy", &fmt).unwrap();
        assert!(econ.ends_with("Consider how this relates to the economy"));
        let health = frame_claim_aspect(t, &aspects(), "Health", &fmt).unwrap();
        assert!(econ.starts_with(&t.text) && health.starts_with(&t.text));
        assert_ne!(econ, health);
        assert!(matches!(
            frame_claim_aspect(t, &AspectTable::default(), "Economy", &fmt),
            Err(Error::UnknownAspect(_))
        ));
    }

    #[test]
    fn aspect_table_rejects_duplicates() {
        let mut e = aspects().entries().to_vec();
        e.push(e[0].clone());
        assert!(AspectTable::new(e).is_err());
    }

    #[test]
    fn training_sequences() {
        let reg = registry();
        let fmt = PromptFormat::default();
        let claims = vec![ClaimRecord::new("t1", "lotteries exploit the poor"), ClaimRecord::new("t3", "gmail scans mail")];
        let out = build_training_sequences(&claims, &reg, FramingMode::None, None, &fmt).unwrap();
        assert_eq!(out.sequences.len(), 2);
        assert_eq!(out.sequences[0].prompt, "We should ban lotteries");
        for s in &out.sequences {
            assert_eq!(s.rendered.matches(&fmt.delimiter).count(), 1);
            assert!(s.rendered.ends_with(&fmt.end_marker));
        }

        let fws = build_training_sequences(&[ClaimRecord::new("t2", "it saves lives")], &reg, FramingMode::Fws, None, &fmt).unwrap();
        assert!(fws.sequences[0].prompt.starts_with("Telemedicine is"));
        assert!(fws.sequences[0].prompt.ends_with(&reg.get("t2").unwrap().text));

        assert!(build_training_sequences(&[ClaimRecord::new("zz", "x")], &reg, FramingMode::None, None, &fmt).is_err());
    }

    #[test]
    fn aspect_training_sequences() {
        let reg = registry();
        let fmt = PromptFormat::default();
        let mut c = ClaimRecord::new("t1", "lotteries are a regressive tax");
        c.wiki_titles = vec!["Tax".into()];
        let out = build_training_sequences(&[c], &reg, FramingMode::Aspect, Some(&aspects()), &fmt).unwrap();
        assert!(out.sequences[0].prompt.ends_with("Consider how this relates to the economy"));
        assert_eq!(out.sequences[0].rendered.matches(&fmt.delimiter).count(), 1);
    }

    #[test]
    fn splits_and_exclusions() {
        let reg = registry();
        let same = split_topics(&reg, &BTreeSet::new()).unwrap();
        assert_eq!(same.dev, vec!["t2"]);
        assert_eq!(same.test, vec!["t3"]);
        assert_eq!(same.train, vec!["t1"]);

        let all: BTreeSet<String> = ["t1", "t2", "t3"].iter().map(|s| s.to_string()).collect();
        let none = split_topics(&reg, &all).unwrap();
        assert!(none.dev.is_empty() && none.test.is_empty());
        assert_eq!(none.warnings.len(), 2);
        assert_eq!(none.train.len(), 3);

        let bad: BTreeSet<String> = ["q".to_string()].into();
        assert!(split_topics(&reg, &bad).is_err());

        let applied = none.apply(&reg).unwrap();
        assert_eq!(applied.in_split(Split::Train).count(), 3);
    }

    #[test]
    fn wiki_lookup() {
        let reg = TopicRegistry::from_topics([
            Topic::new("a", "We should ban lotteries", Split::Dev),
            Topic::new("b", "We should abandon Gmail", Split::Dev),
        ])
        .unwrap();
        let lookup = vec![WikiLookupEntry {
            topic: "We should ban lotteries".into(),
            wiki_title: "Lottery".into(),
            fws: "A lottery is a form of gambling.".into(),
        }];
        let (kept, unmapped) = apply_wiki_lookup(reg.clone(), &lookup, false).unwrap();
        assert_eq!(unmapped, vec!["b"]);
        assert_eq!(kept.len(), 2);
        assert_eq!(kept.get("a").unwrap().wiki_title.as_deref(), Some("Lottery"));
        let (dropped, _) = apply_wiki_lookup(reg, &lookup, true).unwrap();
        assert_eq!(dropped.len(), 1);
    }

    #[test]
    fn topic_invariants() {
        let mut t = Topic::new("x", "text", Split::Dev);
        t.fws = Some("s".into());
        assert!(t.validate().is_err());
        assert!(Topic::new("x", " ", Split::Dev).validate().is_err());
    }
}
