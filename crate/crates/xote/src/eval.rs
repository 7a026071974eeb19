//! Exact-character-span precision/recall/F1, SemEval style.
//!
//! A predicted span counts as a true positive only when a gold span in the
//! same sentence has identical character offsets; partial overlaps earn
//! nothing. Counts are aggregated micro-style over the whole corpus and
//! duplicate identical spans within one sentence collapse to one (set
//! semantics). The degenerate 0/0 cases follow the SemEval scorer: empty
//! precision or recall is 0, and F1 is 0 when P + R = 0.

use crate::error::{Error, Result};
use crate::iob::TargetSpan;
use log::warn;
use serde::Serialize;
use std::collections::BTreeSet;

/// Gold or predicted spans for one sentence, keyed by sentence id.
#[derive(Debug, Clone)]
pub struct SentenceSpans {
    pub id: String,
    pub spans: Vec<TargetSpan>,
}

impl SentenceSpans {
    pub fn new(id: impl Into<String>, spans: Vec<TargetSpan>) -> SentenceSpans {
        SentenceSpans {
            id: id.into(),
            spans,
        }
    }
}

/// Micro-aggregated exact-span matching counts and derived scores.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub true_positives: usize,
    pub predicted_count: usize,
    pub gold_count: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl EvalReport {
    pub fn from_counts(tp: usize, predicted: usize, gold: usize) -> EvalReport {
        let precision = ratio(tp, predicted);
        let recall = ratio(tp, gold);
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        EvalReport {
            true_positives: tp,
            predicted_count: predicted,
            gold_count: gold,
            precision,
            recall,
            f1,
        }
    }

    /// Single-line TSV: tp, predicted, gold, P, R, F1.
    pub fn tsv_line(&self) -> String {
        format!(
            "{}\t{}\t{}\t{:.6}\t{:.6}\t{:.6}",
            self.true_positives,
            self.predicted_count,
            self.gold_count,
            self.precision,
            self.recall,
            self.f1
        )
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Exact-span micro F1 over a corpus.
///
/// `gold` and `pred` must cover the same sentence ids (in any order);
/// anything else is a contract violation listing the offending ids.
pub fn exact_span_f1(gold: &[SentenceSpans], pred: &[SentenceSpans]) -> Result<EvalReport> {
    let gold_ids: BTreeSet<&str> = gold.iter().map(|s| s.id.as_str()).collect();
    let pred_ids: BTreeSet<&str> = pred.iter().map(|s| s.id.as_str()).collect();
    if gold_ids.len() != gold.len() || pred_ids.len() != pred.len() {
        return Err(Error::Contract(
            "duplicate sentence ids in evaluation input".into(),
        ));
    }
    if gold_ids != pred_ids {
        let missing: Vec<&&str> = gold_ids.difference(&pred_ids).collect();
        let extra: Vec<&&str> = pred_ids.difference(&gold_ids).collect();
        return Err(Error::Contract(format!(
            "sentence ids do not match; missing from predictions: {missing:?}, unexpected: {extra:?}"
        )));
    }

    let pred_by_id: std::collections::HashMap<&str, &SentenceSpans> =
        pred.iter().map(|s| (s.id.as_str(), s)).collect();

    let mut tp = 0usize;
    let mut predicted = 0usize;
    let mut gold_total = 0usize;
    for g in gold {
        let p = pred_by_id[g.id.as_str()];
        let gold_set = dedup_offsets(&g.spans, &g.id, "gold");
        let pred_set = dedup_offsets(&p.spans, &p.id, "predicted");
        gold_total += gold_set.len();
        predicted += pred_set.len();
        tp += gold_set.intersection(&pred_set).count();
    }
    Ok(EvalReport::from_counts(tp, predicted, gold_total))
}

fn dedup_offsets(spans: &[TargetSpan], id: &str, side: &str) -> BTreeSet<(usize, usize)> {
    let set: BTreeSet<(usize, usize)> = spans.iter().map(|s| (s.start, s.end)).collect();
    if set.len() != spans.len() {
        warn!(
            "sentence {id}: {} duplicate {side} span(s) collapsed",
            spans.len() - set.len()
        );
    }
    set
}
