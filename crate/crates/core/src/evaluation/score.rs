use rayon::prelude::*;
use serde::Serialize;

use crate::corpus::{tokenize, Direction, LanguageId, ParallelCorpus};
use crate::error::{Error, Result};
use crate::evaluation::{bleu, BleuConfig, BleuReport};
use crate::model::translate_all;
use crate::numcore::Real;
use crate::training::Checkpoint;

const DECODE_BATCH: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SentenceScore {
    pub source: String,
    pub reference: String,
    pub candidate: String,
    /// `None` when the candidate came out empty; it then counts as 0.
    pub report: Option<BleuReport>,
}

impl SentenceScore {
    pub fn bleu(&self) -> f64 {
        self.report.as_ref().map_or(0.0, |r| r.bleu)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvaluationReport {
    pub sentences: Vec<SentenceScore>,
    /// Arithmetic mean of sentence scores, not corpus-level BLEU.
    pub mean_bleu: f64,
}

/// Translates each `(source, reference)` pair from `from` into `to` and
/// scores it. With `oracle` the model is not run and every sentence gets
/// the identity report, whatever its length.
pub fn evaluate_translation<F: Real>(
    checkpoint: &Checkpoint<F>,
    from: &LanguageId,
    to: &LanguageId,
    pairs: &[(String, String)],
    config: &BleuConfig,
    oracle: bool,
) -> Result<EvaluationReport> {
    if pairs.is_empty() {
        return Err(Error::contract("evaluation set is empty"));
    }
    let (sources, references): (Vec<&str>, Vec<&str>) =
        pairs.iter().map(|(s, r)| (s.as_str(), r.as_str())).unzip();
    let candidates = if oracle {
        references.iter().map(|r| r.to_string()).collect()
    } else {
        translate_all(
            &checkpoint.model,
            checkpoint.vocab(from)?,
            checkpoint.vocab(to)?,
            &sources,
            checkpoint.config.max_len,
            DECODE_BATCH,
        )?
    };
    let sentences = (0..sources.len())
        .into_par_iter()
        .map(|i| {
            let cand = tokenize(&candidates[i]);
            let reference = tokenize(references[i]);
            let report = if oracle {
                Some(identity_report(config)?)
            } else if cand.is_empty() {
                None
            } else {
                Some(bleu(&cand, &[reference], config)?)
            };
            Ok(SentenceScore {
                source: sources[i].to_string(),
                reference: references[i].to_string(),
                candidate: candidates[i].clone(),
                report,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mean_bleu = sentences.iter().map(SentenceScore::bleu).sum::<f64>() / sentences.len() as f64;
    Ok(EvaluationReport { sentences, mean_bleu })
}

/// [`evaluate_translation`] over one direction of a parallel corpus.
pub fn evaluate_corpus<F: Real>(
    checkpoint: &Checkpoint<F>,
    corpus: &ParallelCorpus,
    direction: Direction,
    config: &BleuConfig,
    oracle: bool,
) -> Result<EvaluationReport> {
    let (from, to) = match direction {
        Direction::AToB => (corpus.lang_a(), corpus.lang_b()),
        Direction::BToA => (corpus.lang_b(), corpus.lang_a()),
    };
    let pairs: Vec<(String, String)> = corpus
        .pairs()
        .iter()
        .map(|(a, b)| match direction {
            Direction::AToB => (a.clone(), b.clone()),
            Direction::BToA => (b.clone(), a.clone()),
        })
        .collect();
    evaluate_translation(checkpoint, from, to, &pairs, config, oracle)
}

fn identity_report(config: &BleuConfig) -> Result<BleuReport> {
    let n = config.max_n;
    Ok(BleuReport {
        precisions: vec![1.0; n],
        bp: 1.0,
        bleu: 1.0,
        log_bleu: 0.0,
        weights: config.resolved_weights()?,
        floored: vec![false; n],
    })
}
