//! Sentence-level BLEU, translation scoring and attention heatmaps.

mod bleu;
mod heatmap;
mod score;

pub use bleu::{
    bleu, brevity_penalty, effective_reference_length, modified_precision, BleuConfig,
    BleuReport, MIN_POSITIVE_FLOOR,
};
pub use heatmap::{export_attention, AttentionMap};
pub use score::{evaluate_corpus, evaluate_translation, EvaluationReport, SentenceScore};
