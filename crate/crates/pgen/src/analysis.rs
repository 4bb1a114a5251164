//! Evaluation artifacts as data: learning curves and word-frequency
//! comparisons between real and generated text.
//!
//! Word clouds are emitted as ranked frequency tables rather than images;
//! the similarity between two texts is the cosine over their top-k token
//! count vectors.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::trainer::EpochReport;

/// Token counts over maximal non-whitespace runs. No case folding and no
/// stopword removal; classical ghazal text is essentially punctuation-free.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FrequencyTable {
    counts: HashMap<String, u64>,
    total: u64,
}

impl FrequencyTable {
    pub fn count(&self, token: &str) -> u64 {
        self.counts.get(token).copied().unwrap_or(0)
    }

    /// Number of distinct tokens.
    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    /// Total token occurrences; equals the whitespace-split token count
    /// of the source text.
    pub fn total(&self) -> u64 {
        self.total
    }

    /// The `k` most frequent tokens, descending by count, ties ascending
    /// by code point.
    pub fn top_k(&self, k: usize) -> Vec<(&str, u64)> {
        let mut entries: Vec<(&str, u64)> =
            self.counts.iter().map(|(t, &c)| (t.as_str(), c)).collect();
        entries.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        entries.truncate(k);
        entries
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, u64)> {
        self.counts.iter().map(|(t, &c)| (t.as_str(), c))
    }
}

/// Splits on Unicode whitespace (spaces, newlines, ZWNJ is *not*
/// whitespace and stays inside tokens) and counts each token.
pub fn word_frequencies(text: &str) -> FrequencyTable {
    let mut counts: HashMap<String, u64> = HashMap::new();
    let mut total = 0;
    for token in text.split_whitespace() {
        *counts.entry(token.to_string()).or_insert(0) += 1;
        total += 1;
    }
    FrequencyTable { counts, total }
}

/// Cosine similarity between two tables restricted to their top-k
/// tokens, plus how many kept tokens they share.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityReport {
    pub cosine: f64,
    pub top_k: usize,
    pub shared_tokens: usize,
}

/// Restricts each table to its `top_k` tokens by count (ties by code
/// point) and computes the cosine over the union of kept tokens. Empty
/// tables yield cosine 0.
pub fn compare_frequencies(
    a: &FrequencyTable,
    b: &FrequencyTable,
    top_k: usize,
) -> Result<SimilarityReport> {
    if top_k == 0 {
        return Err(Error::InvalidArgument("top_k must be at least 1".into()));
    }
    let kept_a: HashMap<&str, u64> = a.top_k(top_k).into_iter().collect();
    let kept_b: HashMap<&str, u64> = b.top_k(top_k).into_iter().collect();
    let mut dot = 0.0;
    let mut shared = 0usize;
    for (token, &ca) in &kept_a {
        if let Some(&cb) = kept_b.get(token) {
            dot += ca as f64 * cb as f64;
            shared += 1;
        }
    }
    let norm = |m: &HashMap<&str, u64>| {
        m.values().map(|&c| (c as f64) * (c as f64)).sum::<f64>().sqrt()
    };
    let (na, nb) = (norm(&kept_a), norm(&kept_b));
    let cosine = if na == 0.0 || nb == 0.0 { 0.0 } else { dot / (na * nb) };
    Ok(SimilarityReport { cosine, top_k, shared_tokens: shared })
}

/// Ordered per-epoch reports; epoch indices must strictly increase.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LearningCurve {
    reports: Vec<EpochReport>,
}

impl LearningCurve {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, report: EpochReport) -> Result<()> {
        if let Some(last) = self.reports.last() {
            if report.epoch_index <= last.epoch_index {
                return Err(Error::InvalidArgument(format!(
                    "epoch {} arrived after epoch {}",
                    report.epoch_index, last.epoch_index
                )));
            }
        }
        self.reports.push(report);
        Ok(())
    }

    pub fn from_reports(reports: Vec<EpochReport>) -> Result<Self> {
        let mut curve = Self::new();
        for r in reports {
            curve.push(r)?;
        }
        Ok(curve)
    }

    pub fn reports(&self) -> &[EpochReport] {
        &self.reports
    }

    pub fn is_empty(&self) -> bool {
        self.reports.is_empty()
    }
}

/// Writes `epoch,loss,accuracy,seconds` rows, floats at six decimals,
/// UTF-8 with LF line endings.
pub fn emit_learning_curve(curve: &LearningCurve, path: impl AsRef<Path>) -> Result<()> {
    if curve.is_empty() {
        return Err(Error::InvalidArgument("learning curve is empty".into()));
    }
    let mut out = String::from("epoch,loss,accuracy,seconds\n");
    for r in curve.reports() {
        out.push_str(&format!(
            "{},{:.6},{:.6},{:.6}\n",
            r.epoch_index, r.mean_loss, r.accuracy, r.wall_seconds
        ));
    }
    let path = path.as_ref();
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Writes `token<TAB>count` rows for the top-k tokens, descending count,
/// ties by code point.
pub fn emit_frequency_table(
    table: &FrequencyTable,
    top_k: usize,
    path: impl AsRef<Path>,
) -> Result<()> {
    if top_k == 0 {
        return Err(Error::InvalidArgument("top_k must be at least 1".into()));
    }
    let mut out = String::new();
    for (token, count) in table.top_k(top_k) {
        out.push_str(&format!("{token}\t{count}\n"));
    }
    let path = path.as_ref();
    fs::write(path, out).map_err(|e| Error::io(path, e))
}
