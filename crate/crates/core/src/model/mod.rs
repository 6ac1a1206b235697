//! The shared-parameter translation model.
//!
//! One GRU encoder and one GRU decoder serve every language. Each language
//! brings its own [`LanguagePack`]: an embedding table used on both the
//! source and target side, the attention parameters used when it is the
//! target, and an output head over its vocabulary.

mod forward;
mod inference;
mod params;

pub use forward::{
    attend, attention_keys, attention_score, decode_step, encode, forward_teacher_forced, gru_step,
    BoundAttention, BoundGate, BoundGru, BoundModel, BoundPack, DecodeState, Encoded, StepOutput,
    TeacherForced,
};
pub use inference::{argmax, greedy_decode, translate, translate_all, Decoded, Translation};
pub use params::{
    AttentionParams, GateParams, GruParams, LanguagePack, ModelDims, UniversalModel,
};
