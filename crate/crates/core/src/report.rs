//! Plain-text result tables.

use std::fmt::Write;

use serde::{Deserialize, Serialize};

use crate::annotation::AggregatedLabel;
use crate::evaluation::EvalReport;
use crate::novelty::{PreferenceCounts, VoteCorrelation};
use crate::pipeline::ClassStats;
use crate::scoring::RankEvalReport;

/// One row of the model comparison table.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ModelRow {
    pub model: String,
    /// Share of labelled texts judged plausible.
    pub pl: Option<f64>,
    /// Share judged plausible and stance-bearing.
    pub pl_st: Option<f64>,
    pub ppl: Option<f64>,
    pub pr: Option<f64>,
    pub p_qu: Option<f64>,
    pub p_st: Option<f64>,
}

impl ModelRow {
    pub fn from_parts<'a>(
        model: &str,
        eval: Option<&EvalReport>,
        labels: impl IntoIterator<Item = &'a AggregatedLabel>,
    ) -> Self {
        let judged: Vec<&AggregatedLabel> = labels.into_iter().filter(|l| l.plausible.is_some()).collect();
        let share = |f: &dyn Fn(&AggregatedLabel) -> bool| {
            (!judged.is_empty()).then(|| judged.iter().filter(|l| f(l)).count() as f64 / judged.len() as f64)
        };
        ModelRow {
            model: model.to_string(),
            pl: share(&|l| l.plausible == Some(true)),
            pl_st: share(&|l| l.is_positive()),
            ppl: eval.and_then(|e| e.perplexity).map(|m| m.mean),
            pr: eval.and_then(|e| e.prefix_rank_acc).map(|m| m.mean),
            p_qu: eval.and_then(|e| e.pred_quality).map(|m| m.mean),
            p_st: eval.and_then(|e| e.pred_stance_abs).map(|m| m.mean),
        }
    }
}

/// Reference rows for the four baseline models on the 35 dev topics, as
/// published alongside the LN55k / Rank-30k / CE2.3k fine-tuning data.
pub fn reference_dev_rows() -> Vec<ModelRow> {
    let row = |m: &str, pl, pl_st, ppl, pr, p_qu, p_st| ModelRow {
        model: m.to_string(),
        pl: Some(pl),
        pl_st: Some(pl_st),
        ppl: Some(ppl),
        pr: Some(pr),
        p_qu: Some(p_qu),
        p_st: Some(p_st),
    };
    vec![
        row("GPT-LN (reference)", 0.754, 0.68, 188.9, 0.69, 0.75, 0.99),
        row("GPT-ALL (reference)", 0.789, 0.623, 82.7, 0.74, 0.76, 0.97),
        row("GPT-Rank (reference)", 0.531, 0.514, 150.8, 0.75, 0.85, 0.99),
        row("GPT-Rank-CE (reference)", 0.646, 0.549, 388.4, 0.65, 0.8, 0.98),
    ]
}

fn cell(v: Option<f64>, pct: bool) -> String {
    match v {
        None => "-".into(),
        Some(x) if pct => format!("{:.1}%", x * 100.0),
        Some(x) if x.abs() >= 10.0 => format!("{x:.1}"),
        Some(x) => format!("{x:.2}"),
    }
}

pub fn render_model_table(rows: &[ModelRow]) -> String {
    let width = rows.iter().map(|r| r.model.len()).max().unwrap_or(5).max(5);
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<width$} | {:>7} | {:>7} | {:>8} | {:>5} | {:>5} | {:>5}",
        "Model", "PL", "PL+ST", "PPL", "PR", "P-QU", "P-ST"
    );
    let _ = writeln!(s, "{}", "-".repeat(width + 60));
    for r in rows {
        let _ = writeln!(
            s,
            "{:<width$} | {:>7} | {:>7} | {:>8} | {:>5} | {:>5} | {:>5}",
            r.model,
            cell(r.pl, true),
            cell(r.pl_st, true),
            cell(r.ppl, false),
            cell(r.pr, false),
            cell(r.p_qu, false),
            cell(r.p_st, false),
        );
    }
    s
}

pub fn render_rank_eval(report: &RankEvalReport) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "Scorer ranking ({} positive / {} negative; top/bottom {} over {} topics)",
        report.n_positive, report.n_negative, report.window, report.topics_counted
    );
    for (name, rho) in &report.pearson_by_scorer {
        let tb = report.top_bottom_by_scorer.get(name).copied().unwrap_or_default();
        let _ = writeln!(s, "  {name:<12} pearson {rho:>6.3}   top/bottom {}/{}", tb.top, tb.bottom);
    }
    s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoveltySummary {
    pub threshold: f64,
    pub attempted: usize,
    pub matched: usize,
    pub skipped: usize,
    pub novelty_rate: Option<f64>,
    pub correlation: Option<VoteCorrelation>,
    pub preferences: Option<PreferenceCounts>,
}

pub fn render_novelty(n: &NoveltySummary) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "Novelty: {}/{} texts match a corpus claim at similarity >= {} (novelty rate {})",
        n.matched,
        n.attempted,
        n.threshold,
        n.novelty_rate.map_or("-".into(), |r| format!("{r:.4}"))
    );
    if let Some(c) = n.correlation {
        let _ = writeln!(s, "  similarity vs votes: plausible rho {:.2}, stance rho {:.2}", c.plausibility, c.stance);
    }
    if let Some(p) = n.preferences {
        let _ = writeln!(
            s,
            "  preference over {} pairs: generated {} / corpus {} / similar {}",
            p.total(),
            p.generated,
            p.corpus,
            p.tie
        );
    }
    s
}

pub fn render_lengths(title: &str, stats: &[(String, Option<ClassStats>)]) -> String {
    let mut s = format!("{title}\n");
    for (class, st) in stats {
        let _ = match st {
            Some(st) => writeln!(s, "  {class:<12} {:>6.1} tokens (n={})", st.mean_tokens, st.count),
            None => writeln!(s, "  {class:<12} absent"),
        };
    }
    s
}
