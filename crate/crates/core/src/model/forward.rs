//! Forward computation on a [`Tape`].
//!
//! Parameters are first bound onto the tape ([`BoundModel::bind`]); every
//! function here then works purely with tape variables, so one backward
//! pass yields gradients for the whole model.

use crate::corpus::{Batch, IdMatrix, LanguageId};
use crate::error::{Error, Result};
use crate::model::params::{AttentionParams, ModelDims, UniversalModel, GRU_SLOTS, PACK_SLOTS};
use crate::numcore::{Real, Tape, Tensor, Var};

#[derive(Debug, Clone, Copy)]
pub struct BoundGate {
    pub w: Var,
    pub u: Var,
    pub b: Var,
}

#[derive(Debug, Clone, Copy)]
pub struct BoundGru {
    pub update: BoundGate,
    pub relevance: BoundGate,
    pub candidate: BoundGate,
}

#[derive(Debug, Clone, Copy)]
pub struct BoundAttention {
    pub w_a: Var,
    pub v_a: Var,
}

#[derive(Debug, Clone, Copy)]
pub struct BoundPack {
    pub embedding: Var,
    pub head_w: Var,
    pub head_b: Var,
    pub attention: BoundAttention,
}

/// Model parameters recorded on a tape.
#[derive(Debug, Clone)]
pub struct BoundModel {
    dims: ModelDims,
    pub encoder: BoundGru,
    pub decoder: BoundGru,
    languages: Vec<LanguageId>,
    packs: Vec<Option<BoundPack>>,
    /// Aligned with [`UniversalModel::params`]; `None` for packs not bound.
    slots: Vec<Option<Var>>,
}

impl BoundModel {
    /// Records the shared GRUs plus the packs of `languages`. With
    /// `trainable` the parameters are gradient leaves, otherwise constants.
    pub fn bind<F: Real>(
        tape: &mut Tape<F>,
        model: &UniversalModel<F>,
        languages: &[&LanguageId],
        trainable: bool,
    ) -> Result<Self> {
        let mut wanted = vec![false; model.packs().len()];
        for lang in languages {
            let i = model
                .pack_index(lang)
                .ok_or_else(|| Error::UnknownLanguage(lang.to_string()))?;
            wanted[i] = true;
        }
        let slots: Vec<Option<Var>> = model
            .params()
            .into_iter()
            .enumerate()
            .map(|(i, (_, t))| {
                let pack = i.checked_sub(2 * GRU_SLOTS).map(|k| k / PACK_SLOTS);
                if pack.is_some_and(|p| !wanted[p]) {
                    return None;
                }
                Some(if trainable {
                    tape.leaf(t.clone().with_grad())
                } else {
                    tape.constant(t.clone())
                })
            })
            .collect();
        let gate = |base: usize| BoundGate {
            w: slots[base].unwrap(),
            u: slots[base + 1].unwrap(),
            b: slots[base + 2].unwrap(),
        };
        let gru = |base: usize| BoundGru {
            update: gate(base),
            relevance: gate(base + 3),
            candidate: gate(base + 6),
        };
        let packs = (0..model.packs().len())
            .map(|k| {
                let base = 2 * GRU_SLOTS + k * PACK_SLOTS;
                slots[base].map(|embedding| BoundPack {
                    embedding,
                    head_w: slots[base + 1].unwrap(),
                    head_b: slots[base + 2].unwrap(),
                    attention: BoundAttention {
                        w_a: slots[base + 3].unwrap(),
                        v_a: slots[base + 4].unwrap(),
                    },
                })
            })
            .collect();
        Ok(Self {
            dims: model.dims(),
            encoder: gru(0),
            decoder: gru(GRU_SLOTS),
            languages: model.languages(),
            packs,
            slots,
        })
    }

    pub fn dims(&self) -> ModelDims {
        self.dims
    }

    pub fn pack(&self, language: &LanguageId) -> Result<&BoundPack> {
        self.languages
            .iter()
            .position(|l| l == language)
            .and_then(|i| self.packs[i].as_ref())
            .ok_or_else(|| Error::UnknownLanguage(language.to_string()))
    }

    /// Gradients after `tape.backward`, aligned with [`UniversalModel::params`].
    pub fn gradients<F: Real>(&self, tape: &Tape<F>) -> Vec<Option<Vec<F>>> {
        self.slots
            .iter()
            .map(|s| s.and_then(|v| tape.grad(v).map(<[F]>::to_vec)))
            .collect()
    }
}

fn gate_preact<F: Real>(tape: &mut Tape<F>, g: &BoundGate, x: Var, h: Var) -> Result<Var> {
    let xw = tape.matmul(x, g.w)?;
    let hu = tape.matmul(h, g.u)?;
    let s = tape.add(xw, hu)?;
    tape.add(s, g.b)
}

/// One GRU transition:
///
/// ```text
/// z = sigmoid(x W_u + h U_u + b_u)
/// r = sigmoid(x W_r + h U_r + b_r)
/// c = tanh(x W_c + (r * h) U_c + b_c)
/// h' = z * c + (1 - z) * h
/// ```
pub fn gru_step<F: Real>(tape: &mut Tape<F>, gru: &BoundGru, x: Var, h_prev: Var) -> Result<Var> {
    let z = gate_preact(tape, &gru.update, x, h_prev)?;
    let z = tape.sigmoid(z);
    let r = gate_preact(tape, &gru.relevance, x, h_prev)?;
    let r = tape.sigmoid(r);
    let rh = tape.mul(r, h_prev)?;
    let c = gate_preact(tape, &gru.candidate, x, rh)?;
    let c = tape.tanh(c);
    // z * c + (1 - z) * h == h + z * (c - h)
    let diff = tape.sub(c, h_prev)?;
    let step = tape.mul(z, diff)?;
    tape.add(h_prev, step)
}

/// Encoder output for a batch of source rows.
#[derive(Debug, Clone)]
pub struct Encoded {
    /// `[B, T, d_h]`, one state per source position.
    pub states: Var,
    /// `[B, d_h]`, the state at each row's last non-pad position.
    pub h_final: Var,
    /// `B x T`, true at real tokens.
    pub mask: Vec<bool>,
}

pub fn encode<F: Real>(
    tape: &mut Tape<F>,
    bound: &BoundModel,
    source_ids: &IdMatrix,
    source_lang: &LanguageId,
) -> Result<Encoded> {
    let pack = *bound.pack(source_lang)?;
    let (rows, steps) = (source_ids.rows(), source_ids.cols());
    let lengths = source_ids.lengths();
    if rows == 0 || lengths.contains(&0) {
        return Err(Error::contract("every source row needs at least one token"));
    }
    let d_h = bound.dims().d_h;
    let mut h = tape.constant(Tensor::zeros(&[rows, d_h]));
    let mut per_step = Vec::with_capacity(steps);
    for t in 0..steps {
        let x = tape.gather_rows(pack.embedding, &source_ids.column(t))?;
        h = gru_step(tape, &bound.encoder, x, h)?;
        per_step.push(h);
    }
    let states = tape.stack(&per_step)?;
    let mut pick = vec![F::zero(); rows * steps];
    for (r, &len) in lengths.iter().enumerate() {
        pick[r * steps + len - 1] = F::one();
    }
    let pick = tape.constant(Tensor::new(&[rows, steps], pick)?);
    let h_final = tape.weighted_sum(pick, states)?;
    Ok(Encoded {
        states,
        h_final,
        mask: source_ids.mask(),
    })
}

/// Plain-slice attention score `v_a . (h_t * (W_a h_s))`.
pub fn attention_score<F: Real>(ap: &AttentionParams<F>, h_t: &[F], h_s: &[F]) -> Result<F> {
    let d = ap.v_a.numel();
    if h_t.len() != d || h_s.len() != d {
        return Err(Error::Shape {
            op: "attention_score",
            left: vec![h_t.len()],
            right: vec![h_s.len()],
        });
    }
    let w = ap.w_a.data();
    let v = ap.v_a.data();
    let mut score = F::zero();
    for i in 0..d {
        let projected = (0..d).fold(F::zero(), |s, j| s + w[i * d + j] * h_s[j]);
        score = score + v[i] * h_t[i] * projected;
    }
    Ok(score)
}

/// `W_a h_s` for every encoder state, laid out `[B, T, d_h]`. Computed once
/// per source batch and reused at every decoder step.
pub fn attention_keys<F: Real>(tape: &mut Tape<F>, attn: &BoundAttention, states: Var) -> Result<Var> {
    let shape = tape.shape(states).to_vec();
    let (b, t, d) = (shape[0], shape[1], shape[2]);
    let flat = tape.reshape(states, &[b * t, d])?;
    let wt = tape.transpose(attn.w_a)?;
    let proj = tape.matmul(flat, wt)?;
    tape.reshape(proj, &[b, t, d])
}

/// Masked softmax attention of `h_t` over the encoder states. Returns the
/// context vector `[B, d_h]` and the weights `[B, T]`.
pub fn attend<F: Real>(
    tape: &mut Tape<F>,
    attn: &BoundAttention,
    h_t: Var,
    keys: Var,
    states: Var,
    source_mask: &[bool],
) -> Result<(Var, Var)> {
    let t = tape.shape(keys)[1];
    if source_mask.len() != tape.shape(keys)[0] * t {
        return Err(Error::Shape {
            op: "attend mask",
            left: tape.shape(keys).to_vec(),
            right: vec![source_mask.len()],
        });
    }
    if source_mask.chunks(t).any(|row| !row.iter().any(|&k| k)) {
        return Err(Error::contract("attention row has every position masked"));
    }
    let weighted_query = tape.mul(h_t, attn.v_a)?;
    let scores = tape.batch_dot(weighted_query, keys)?;
    let scores = tape.mask_fill(scores, source_mask)?;
    let alpha = tape.softmax(scores, 1)?;
    let context = tape.weighted_sum(alpha, states)?;
    Ok((context, alpha))
}

/// Decoder recurrent state carried between steps.
#[derive(Debug, Clone, Copy)]
pub struct DecodeState {
    pub h: Var,
    /// Context from the previous step, fed back as input.
    pub context: Var,
}

impl DecodeState {
    /// Decoder starts from the encoder's final state and a zero context.
    pub fn initial<F: Real>(tape: &mut Tape<F>, encoded: &Encoded, d_h: usize) -> Self {
        let rows = tape.shape(encoded.h_final)[0];
        let context = tape.constant(Tensor::zeros(&[rows, d_h]));
        Self {
            h: encoded.h_final,
            context,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct StepOutput {
    /// `[B, V_target]`.
    pub logits: Var,
    /// `[B, T_src]`.
    pub alpha: Var,
    pub state: DecodeState,
}

/// One decoder step: embed the previous tokens, advance the GRU on
/// `[embedding ; previous context]`, attend with the new hidden state, and
/// project `[h ; context]` through the target head.
pub fn decode_step<F: Real>(
    tape: &mut Tape<F>,
    bound: &BoundModel,
    target_lang: &LanguageId,
    prev_ids: &[usize],
    state: DecodeState,
    encoded: &Encoded,
    keys: Var,
) -> Result<StepOutput> {
    let pack = *bound.pack(target_lang)?;
    let e = tape.gather_rows(pack.embedding, prev_ids)?;
    let input = tape.concat_cols(&[e, state.context])?;
    let h = gru_step(tape, &bound.decoder, input, state.h)?;
    let (context, alpha) = attend(tape, &pack.attention, h, keys, encoded.states, &encoded.mask)?;
    let features = tape.concat_cols(&[h, context])?;
    let logits = tape.matmul(features, pack.head_w)?;
    let logits = tape.add(logits, pack.head_b)?;
    Ok(StepOutput {
        logits,
        alpha,
        state: DecodeState { h, context },
    })
}

/// Outputs of a teacher-forced pass.
#[derive(Debug, Clone)]
pub struct TeacherForced {
    /// `[B, T_tgt - 1, V]`; position `j` predicts target token `j + 1`.
    pub logits: Var,
    /// `[B, T_tgt - 1, T_src]`.
    pub attention: Var,
    /// Gold ids for each logits row, flattened `B x (T_tgt - 1)`.
    pub targets: Vec<usize>,
    /// True where the gold id is a real token.
    pub mask: Vec<bool>,
}

pub fn forward_teacher_forced<F: Real>(
    tape: &mut Tape<F>,
    bound: &BoundModel,
    batch: &Batch,
) -> Result<TeacherForced> {
    let tgt = &batch.target_ids;
    if tgt.cols() < 2 {
        return Err(Error::contract("target rows need a start and at least one more token"));
    }
    let encoded = encode(tape, bound, &batch.source_ids, &batch.source_lang)?;
    let pack = *bound.pack(&batch.target_lang)?;
    let keys = attention_keys(tape, &pack.attention, encoded.states)?;
    let mut state = DecodeState::initial(tape, &encoded, bound.dims().d_h);
    let steps = tgt.cols() - 1;
    let mut logits = Vec::with_capacity(steps);
    let mut alphas = Vec::with_capacity(steps);
    for j in 0..steps {
        let out = decode_step(
            tape,
            bound,
            &batch.target_lang,
            &tgt.column(j),
            state,
            &encoded,
            keys,
        )?;
        logits.push(out.logits);
        alphas.push(out.alpha);
        state = out.state;
    }
    let logits = tape.stack(&logits)?;
    let attention = tape.stack(&alphas)?;
    let mut targets = Vec::with_capacity(tgt.rows() * steps);
    let mut mask = Vec::with_capacity(tgt.rows() * steps);
    for r in 0..tgt.rows() {
        for j in 1..=steps {
            targets.push(tgt.get(r, j));
            mask.push(batch.pad_mask_tgt[r * tgt.cols() + j]);
        }
    }
    Ok(TeacherForced {
        logits,
        attention,
        targets,
        mask,
    })
}
