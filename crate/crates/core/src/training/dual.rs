use crate::corpus::{Batch, Direction, PairBatch};
use crate::error::Result;
use crate::model::{forward_teacher_forced, BoundModel, UniversalModel};
use crate::numcore::{Real, Tape, Var};
use crate::training::AdamState;

/// Mean token cross-entropy over unmasked positions.
pub fn masked_sparse_ce<F: Real>(
    tape: &mut Tape<F>,
    logits: Var,
    targets: &[usize],
    mask: &[bool],
) -> Result<Var> {
    tape.sparse_softmax_ce(logits, targets, mask)
}

/// Losses of one dual step, before the update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepLosses {
    /// `l1 + l2`.
    pub total: f64,
    /// A to B.
    pub l1: f64,
    /// B to A.
    pub l2: f64,
}

fn direction_loss<F: Real>(tape: &mut Tape<F>, bound: &BoundModel, batch: &Batch) -> Result<Var> {
    let out = forward_teacher_forced(tape, bound, batch)?;
    masked_sparse_ce(tape, out.logits, &out.targets, &out.mask)
}

/// Loss and gradients of one direction alone.
pub fn direction_gradients<F: Real>(
    model: &UniversalModel<F>,
    batch: &Batch,
) -> Result<(f64, Vec<Option<Vec<F>>>)> {
    let mut tape = Tape::new();
    let bound = BoundModel::bind(&mut tape, model, &[&batch.source_lang, &batch.target_lang], true)?;
    let loss = direction_loss(&mut tape, &bound, batch)?;
    tape.backward(loss)?;
    Ok((tape.value(loss).data()[0].as_f64(), bound.gradients(&tape)))
}

/// Both directions on one tape, `L = L1 + L2`, one backward pass.
pub fn dual_gradients<F: Real>(
    model: &UniversalModel<F>,
    batch: &PairBatch,
) -> Result<(StepLosses, Vec<Option<Vec<F>>>)> {
    let mut tape = Tape::new();
    let bound = BoundModel::bind(&mut tape, model, &[&batch.lang_a, &batch.lang_b], true)?;
    let l1 = direction_loss(&mut tape, &bound, &batch.view(Direction::AToB))?;
    let l2 = direction_loss(&mut tape, &bound, &batch.view(Direction::BToA))?;
    let total = tape.add(l1, l2)?;
    tape.backward(total)?;
    let value = |v: Var| tape.value(v).data()[0].as_f64();
    let losses = StepLosses {
        total: value(total),
        l1: value(l1),
        l2: value(l2),
    };
    Ok((losses, bound.gradients(&tape)))
}

/// Rescales all gradients so their joint L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_global_norm<F: Real>(grads: &mut [Option<Vec<F>>], max_norm: f64) -> f64 {
    let norm = grads
        .iter()
        .flatten()
        .flat_map(|g| g.iter())
        .map(|&x| {
            let x = x.as_f64();
            x * x
        })
        .sum::<f64>()
        .sqrt();
    if norm > max_norm {
        let scale = F::from_f64_lossy(max_norm / norm);
        for g in grads.iter_mut().flatten() {
            for x in g.iter_mut() {
                *x = *x * scale;
            }
        }
    }
    norm
}

/// Block 1 (A to B) and Block 2 (B to A) on the same pairs, summed loss,
/// optional clipping, one Adam update of every touched parameter.
pub fn dual_train_step<F: Real>(
    model: &mut UniversalModel<F>,
    batch: &PairBatch,
    opt: &mut AdamState<F>,
    lr: f64,
    grad_clip: Option<f64>,
) -> Result<StepLosses> {
    let (losses, mut grads) = dual_gradients(model, batch)?;
    if let Some(max_norm) = grad_clip {
        clip_global_norm(&mut grads, max_norm);
    }
    opt.step(model, &grads, lr)?;
    Ok(losses)
}
