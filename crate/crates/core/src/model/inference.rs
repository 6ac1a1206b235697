//! Greedy decoding.

use crate::corpus::{normalize, IdMatrix, LanguageId, Vocabulary, END_ID, START_ID};
use crate::error::{Error, Result};
use crate::model::{attention_keys, decode_step, encode, BoundModel, DecodeState, UniversalModel};
use crate::numcore::{Real, Tape};

/// Output of greedy decoding for one source row.
#[derive(Debug, Clone, PartialEq)]
pub struct Decoded {
    /// Emitted ids, ending with the end id unless `max_len` was hit.
    pub ids: Vec<usize>,
    /// One attention row per emitted id, each over the source positions.
    pub attention: Vec<Vec<f64>>,
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax<F: Real>(row: &[F]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Decodes every row of `source_ids` at once, feeding back the argmax
/// token until it is the end id or `max_len` tokens have been emitted.
pub fn greedy_decode<F: Real>(
    model: &UniversalModel<F>,
    source_ids: &IdMatrix,
    source_lang: &LanguageId,
    target_lang: &LanguageId,
    max_len: usize,
) -> Result<Vec<Decoded>> {
    if source_lang == target_lang {
        return Err(Error::contract(format!("cannot translate `{source_lang}` into itself")));
    }
    if max_len == 0 {
        return Err(Error::contract("max_len must be positive"));
    }
    let mut tape = Tape::new();
    let bound = BoundModel::bind(&mut tape, model, &[source_lang, target_lang], false)?;
    let encoded = encode(&mut tape, &bound, source_ids, source_lang)?;
    let pack = *bound.pack(target_lang)?;
    let keys = attention_keys(&mut tape, &pack.attention, encoded.states)?;
    let mut state = DecodeState::initial(&mut tape, &encoded, model.dims().d_h);

    let rows = source_ids.rows();
    let src_len = source_ids.cols();
    let mut prev = vec![START_ID; rows];
    let mut out = vec![
        Decoded {
            ids: Vec::new(),
            attention: Vec::new()
        };
        rows
    ];
    let mut done = vec![false; rows];
    for _ in 0..max_len {
        let step = decode_step(&mut tape, &bound, target_lang, &prev, state, &encoded, keys)?;
        let logits = tape.value(step.logits);
        let vocab = logits.shape()[1];
        let alpha = tape.value(step.alpha);
        for r in 0..rows {
            if done[r] {
                continue;
            }
            let id = argmax(&logits.data()[r * vocab..(r + 1) * vocab]);
            let weights = &alpha.data()[r * src_len..(r + 1) * src_len];
            out[r].ids.push(id);
            out[r].attention.push(weights.iter().map(|w| w.as_f64()).collect());
            prev[r] = id;
            done[r] = id == END_ID;
        }
        if done.iter().all(|&d| d) {
            break;
        }
        state = step.state;
    }
    Ok(out)
}

/// A single translated sentence with its attention.
#[derive(Debug, Clone, PartialEq)]
pub struct Translation {
    /// Normalized source tokens wrapped in the start and end markers.
    pub source_tokens: Vec<String>,
    /// Output tokens, end marker included if emitted.
    pub target_tokens: Vec<String>,
    /// `target_tokens.len()` rows over `source_tokens.len()` columns.
    pub attention: Vec<Vec<f64>>,
    /// Output text with control tokens removed.
    pub text: String,
}

/// Translates one sentence.
pub fn translate<F: Real>(
    model: &UniversalModel<F>,
    source_vocab: &Vocabulary,
    target_vocab: &Vocabulary,
    text: &str,
    max_len: usize,
) -> Result<Translation> {
    let ids = source_vocab.encode_sentence(text, max_len)?;
    let decoded = greedy_decode(
        model,
        &IdMatrix::from_rows(&[&ids]),
        source_vocab.language(),
        target_vocab.language(),
        max_len,
    )?
    .remove(0);
    let mut source_tokens = vec![marker(START_ID)];
    source_tokens.extend(normalize(text).split_whitespace().map(str::to_string));
    source_tokens.push(marker(END_ID));
    let target_tokens = decoded
        .ids
        .iter()
        .map(|&id| target_vocab.token(id).unwrap_or("<unk>").to_string())
        .collect();
    Ok(Translation {
        source_tokens,
        target_tokens,
        attention: decoded.attention,
        text: target_vocab.decode(&decoded.ids).join(" "),
    })
}

/// Translates many sentences in batches of `batch_size`.
pub fn translate_all<F: Real>(
    model: &UniversalModel<F>,
    source_vocab: &Vocabulary,
    target_vocab: &Vocabulary,
    texts: &[&str],
    max_len: usize,
    batch_size: usize,
) -> Result<Vec<String>> {
    if batch_size == 0 {
        return Err(Error::contract("batch size must be at least 1"));
    }
    let encoded = texts
        .iter()
        .map(|t| source_vocab.encode_sentence(t, max_len))
        .collect::<Result<Vec<_>>>()?;
    let mut out = Vec::with_capacity(texts.len());
    for chunk in encoded.chunks(batch_size) {
        let rows: Vec<&[usize]> = chunk.iter().map(Vec::as_slice).collect();
        let decoded = greedy_decode(
            model,
            &IdMatrix::from_rows(&rows),
            source_vocab.language(),
            target_vocab.language(),
            max_len,
        )?;
        out.extend(decoded.iter().map(|d| target_vocab.decode(&d.ids).join(" ")));
    }
    Ok(out)
}

fn marker(id: usize) -> String {
    crate::corpus::RESERVED_TOKENS[id].to_string()
}
