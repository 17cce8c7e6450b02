//! Answer-quality metrics. All scores are percentages except per-case EM.
//!
//! Text is lowercased and split on whitespace for BLEU and ROUGE-R.

use std::collections::{BTreeSet, HashMap};

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("reference is empty")]
    EmptyReference,
    #[error("gold answer list is empty")]
    EmptyGold,
    #[error("BLEU order must be 1 or 4, got {0}")]
    BadOrder(usize),
}

/// Answer set of a choice-style prediction: split on `,` and `;`, trimmed,
/// inner whitespace collapsed, uppercased, empties dropped.
pub fn normalize_answer_set<S: AsRef<str>>(items: impl IntoIterator<Item = S>) -> BTreeSet<String> {
    items
        .into_iter()
        .flat_map(|s| {
            s.as_ref()
                .split([',', ';'])
                .map(|p| p.split_whitespace().collect::<Vec<_>>().join(" ").to_uppercase())
                .collect::<Vec<_>>()
        })
        .filter(|s| !s.is_empty())
        .collect()
}

/// 1 iff the prediction names exactly the full gold set, in any order.
pub fn compute_em(prediction: &str, gold: &[String]) -> Result<u8, MetricError> {
    let gold = normalize_answer_set(gold);
    if gold.is_empty() {
        return Err(MetricError::EmptyGold);
    }
    Ok(u8::from(normalize_answer_set([prediction]) == gold))
}

fn words(text: &str) -> Vec<String> {
    text.split_whitespace().map(str::to_lowercase).collect()
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *counts.entry(w).or_insert(0) += 1;
        }
    }
    counts
}

fn clipped_matches(pred: &[String], reference: &[String], n: usize) -> usize {
    let r = ngram_counts(reference, n);
    ngram_counts(pred, n).into_iter().map(|(g, c)| c.min(r.get(g).copied().unwrap_or(0))).sum()
}

/// BLEU-1 (`order = 1`) or cumulative BLEU-4 (`order = 4`).
///
/// Modified precisions are combined with a uniform geometric mean and a
/// brevity penalty `exp(1 - r/c)` when `c <= r`. Orders 2 and above use
/// add-one smoothing `(m + 1) / (t + 1)`; unigram precision is unsmoothed,
/// so no shared unigram scores 0.
pub fn compute_bleu(prediction: &str, reference: &str, order: usize) -> Result<f64, MetricError> {
    if order != 1 && order != 4 {
        return Err(MetricError::BadOrder(order));
    }
    let reference = words(reference);
    if reference.is_empty() {
        return Err(MetricError::EmptyReference);
    }
    let pred = words(prediction);
    if pred.is_empty() {
        return Ok(0.0);
    }
    let mut log_sum = 0.0;
    for n in 1..=order {
        let m = clipped_matches(&pred, &reference, n) as f64;
        let total = (pred.len() + 1).saturating_sub(n) as f64;
        if n == 1 {
            if m == 0.0 {
                return Ok(0.0);
            }
            log_sum += (m / total).ln();
        } else {
            log_sum += ((m + 1.0) / (total + 1.0)).ln();
        }
    }
    let (c, r) = (pred.len() as f64, reference.len() as f64);
    let bp = if c > r { 1.0 } else { (1.0 - r / c).exp() };
    Ok(100.0 * bp * (log_sum / order as f64).exp())
}

/// Clipped unigram recall of the reference.
pub fn compute_rouge_r(prediction: &str, reference: &str) -> Result<f64, MetricError> {
    let reference = words(reference);
    if reference.is_empty() {
        return Err(MetricError::EmptyReference);
    }
    let pred = words(prediction);
    Ok(100.0 * clipped_matches(&reference, &pred, 1) as f64 / reference.len() as f64)
}
