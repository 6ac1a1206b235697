use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest positive normalized `f64`, the default stand-in for a zero
/// n-gram precision.
pub const MIN_POSITIVE_FLOOR: f64 = 2.2250738585072014e-308;

#[derive(Debug, Clone, PartialEq)]
pub struct BleuConfig {
    /// Highest n-gram order.
    pub max_n: usize,
    /// Per-order weights; uniform `1/max_n` when `None`.
    pub weights: Option<Vec<f64>>,
    pub floor: f64,
}

impl Default for BleuConfig {
    fn default() -> Self {
        Self::with_order(4)
    }
}

impl BleuConfig {
    pub fn with_order(max_n: usize) -> Self {
        Self {
            max_n,
            weights: None,
            floor: MIN_POSITIVE_FLOOR,
        }
    }

    pub(crate) fn resolved_weights(&self) -> Result<Vec<f64>> {
        if self.max_n == 0 {
            return Err(Error::contract("BLEU order must be at least 1"));
        }
        if !(self.floor > 0.0 && self.floor <= 1.0) {
            return Err(Error::contract(format!("floor {} outside (0, 1]", self.floor)));
        }
        let weights = match &self.weights {
            None => vec![1.0 / self.max_n as f64; self.max_n],
            Some(w) => w.clone(),
        };
        if weights.len() != self.max_n {
            return Err(Error::contract(format!(
                "{} weights for order {}",
                weights.len(),
                self.max_n
            )));
        }
        let sum: f64 = weights.iter().sum();
        if weights.iter().any(|w| *w < 0.0 || !w.is_finite()) || (sum - 1.0).abs() > 1e-9 {
            return Err(Error::contract(format!("weights {weights:?} must be non-negative and sum to 1")));
        }
        Ok(weights)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BleuReport {
    pub precisions: Vec<f64>,
    pub bp: f64,
    pub bleu: f64,
    pub log_bleu: f64,
    pub weights: Vec<f64>,
    /// True where a zero precision was replaced by the floor.
    pub floored: Vec<bool>,
}

fn ngram_counts<S: AsRef<str>>(tokens: &[S], n: usize) -> HashMap<Vec<&str>, usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            let key: Vec<&str> = w.iter().map(AsRef::as_ref).collect();
            *counts.entry(key).or_insert(0) += 1;
        }
    }
    counts
}

/// Clipped n-gram matches and the candidate's n-gram count.
pub fn modified_precision<S: AsRef<str>>(candidate: &[S], references: &[Vec<S>], n: usize) -> (usize, usize) {
    assert!(n >= 1, "n-gram order must be at least 1");
    let total = (candidate.len() + 1).saturating_sub(n);
    let cand = ngram_counts(candidate, n);
    let mut max_ref: HashMap<Vec<&str>, usize> = HashMap::new();
    for r in references {
        for (gram, c) in ngram_counts(r, n) {
            let slot = max_ref.entry(gram).or_insert(0);
            *slot = (*slot).max(c);
        }
    }
    let matches = cand
        .iter()
        .map(|(gram, &c)| c.min(max_ref.get(gram).copied().unwrap_or(0)))
        .sum();
    (matches, total)
}

/// Reference length closest to `c`, the shorter one on ties.
pub fn effective_reference_length(c: usize, reference_lengths: &[usize]) -> Option<usize> {
    reference_lengths
        .iter()
        .copied()
        .min_by_key(|&r| (r.abs_diff(c), r))
}

pub fn brevity_penalty(c: usize, r: usize) -> Result<f64> {
    if c == 0 {
        return Err(Error::contract("brevity penalty needs a nonempty candidate"));
    }
    if c > r {
        Ok(1.0)
    } else {
        Ok((1.0 - r as f64 / c as f64).exp())
    }
}

pub fn bleu<S: AsRef<str>>(candidate: &[S], references: &[Vec<S>], config: &BleuConfig) -> Result<BleuReport> {
    let weights = config.resolved_weights()?;
    if candidate.is_empty() {
        return Err(Error::contract("BLEU needs a nonempty candidate"));
    }
    if references.is_empty() || references.iter().any(Vec::is_empty) {
        return Err(Error::contract("BLEU needs nonempty references"));
    }
    let c = candidate.len();
    let lengths: Vec<usize> = references.iter().map(Vec::len).collect();
    let r = effective_reference_length(c, &lengths).expect("references are nonempty");
    let bp = brevity_penalty(c, r)?;

    let mut precisions = Vec::with_capacity(config.max_n);
    let mut floored = Vec::with_capacity(config.max_n);
    let mut weighted_log = 0.0;
    for (i, &w) in weights.iter().enumerate() {
        let (m, total) = modified_precision(candidate, references, i + 1);
        let p = if total == 0 { 0.0 } else { m as f64 / total as f64 };
        let used = if p == 0.0 { config.floor } else { p };
        precisions.push(p);
        floored.push(p == 0.0);
        weighted_log += w * used.ln();
    }
    let log_bleu = (1.0 - r as f64 / c as f64).min(0.0) + weighted_log;
    Ok(BleuReport {
        precisions,
        bp,
        bleu: bp * weighted_log.exp(),
        log_bleu,
        weights,
        floored,
    })
}
