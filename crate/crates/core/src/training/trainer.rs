use std::path::Path;
use std::time::Instant;

use crate::corpus::{EncodedPairs, ParallelCorpus, Side, Vocabulary};
use crate::error::{Error, Result};
use crate::model::{ModelDims, UniversalModel};
use crate::numcore::{Real, Rng};
use crate::training::{atomic_write, dual_train_step, lr_schedule, AdamState, Checkpoint, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean of `L = L1 + L2` over the epoch's pairs.
    pub loss: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LossHistory {
    pub records: Vec<EpochRecord>,
}

impl LossHistory {
    /// `epoch,loss,seconds` with a header row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,loss,seconds\n");
        for r in &self.records {
            out.push_str(&format!("{},{},{:.3}\n", r.epoch, r.loss, r.seconds));
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        atomic_write(path.as_ref(), self.to_csv().as_bytes())
    }

    pub fn losses(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.loss).collect()
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<F> {
    pub checkpoint: Checkpoint<F>,
    pub history: LossHistory,
}

/// Epoch-at-a-time training state.
#[derive(Debug)]
pub struct Trainer<F> {
    config: TrainConfig,
    model: UniversalModel<F>,
    vocab_a: Vocabulary,
    vocab_b: Vocabulary,
    data: EncodedPairs,
    opt: AdamState<F>,
    shuffle_rng: Rng,
    history: LossHistory,
}

impl<F: Real> Trainer<F> {
    /// Filters the corpus to `max_len`, applies `subset`, builds both
    /// vocabularies and initializes the model from `seed`.
    pub fn new(config: &TrainConfig, corpus: &ParallelCorpus) -> Result<Self> {
        config.validate()?;
        if config.precision.bits() != F::BITS {
            return Err(Error::contract(format!(
                "config asks for {}-bit precision, trainer runs {}-bit",
                config.precision.bits(),
                F::BITS
            )));
        }
        let mut corpus = corpus.clone();
        let dropped = corpus.retain_max_len(config.max_len)?;
        if dropped > 0 {
            log::info!("dropped {dropped} pairs longer than {} ids", config.max_len);
        }
        if let Some(n) = config.subset {
            corpus.truncate(n);
        }
        let vocab_a = Vocabulary::build(&corpus, Side::A, config.max_vocab)?;
        let vocab_b = Vocabulary::build(&corpus, Side::B, config.max_vocab)?;
        let data = EncodedPairs::encode(&corpus, &vocab_a, &vocab_b, config.max_len)?;

        let mut root = Rng::new(config.seed);
        let mut init_rng = root.split();
        let shuffle_rng = root.split();
        let model = UniversalModel::glorot(
            ModelDims::new(config.d_e, config.d_h)?,
            &[
                (corpus.lang_a().clone(), vocab_a.len()),
                (corpus.lang_b().clone(), vocab_b.len()),
            ],
            &mut init_rng,
        )?;
        let opt = AdamState::new(&model);
        Ok(Self {
            config: config.clone(),
            model,
            vocab_a,
            vocab_b,
            data,
            opt,
            shuffle_rng,
            history: LossHistory::default(),
        })
    }

    pub fn model(&self) -> &UniversalModel<F> {
        &self.model
    }

    pub fn history(&self) -> &LossHistory {
        &self.history
    }

    pub fn pair_count(&self) -> usize {
        self.data.pairs.len()
    }

    pub fn epochs_done(&self) -> usize {
        self.history.records.len()
    }

    /// Snapshot of the current parameters and vocabularies.
    pub fn checkpoint(&self) -> Checkpoint<F> {
        Checkpoint {
            model: self.model.clone(),
            vocabs: vec![self.vocab_a.clone(), self.vocab_b.clone()],
            config: self.config.clone(),
        }
    }

    /// One pass over the shuffled pairs.
    pub fn run_epoch(&mut self) -> Result<EpochRecord> {
        let epoch = self.epochs_done();
        let lr = lr_schedule(&self.config, epoch);
        let start = Instant::now();
        let batches = self
            .data
            .batches(self.config.batch_size, &mut self.shuffle_rng, true)?;
        let mut weighted = 0.0;
        let mut pairs = 0usize;
        for batch in &batches {
            let losses = dual_train_step(&mut self.model, batch, &mut self.opt, lr, self.config.grad_clip)?;
            if !losses.total.is_finite() {
                return Err(Error::contract(format!("loss diverged at epoch {epoch}")));
            }
            weighted += losses.total * batch.size() as f64;
            pairs += batch.size();
        }
        let record = EpochRecord {
            epoch,
            loss: weighted / pairs as f64,
            seconds: start.elapsed().as_secs_f64(),
        };
        log::info!("epoch {} loss {:.4} ({:.1}s)", record.epoch, record.loss, record.seconds);
        self.history.records.push(record);
        Ok(record)
    }

    /// Runs the remaining epochs, calling `on_epoch` after each one.
    pub fn run<C>(&mut self, mut on_epoch: C) -> Result<()>
    where
        C: FnMut(&Self, &EpochRecord) -> Result<()>,
    {
        while self.epochs_done() < self.config.epochs {
            let record = self.run_epoch()?;
            on_epoch(self, &record)?;
        }
        Ok(())
    }

    pub fn into_outcome(self) -> TrainOutcome<F> {
        let checkpoint = self.checkpoint();
        TrainOutcome {
            checkpoint,
            history: self.history,
        }
    }
}

/// Trains from scratch for `config.epochs` epochs.
pub fn train<F: Real>(config: &TrainConfig, corpus: &ParallelCorpus) -> Result<TrainOutcome<F>> {
    let mut trainer = Trainer::new(config, corpus)?;
    trainer.run(|_, _| Ok(()))?;
    Ok(trainer.into_outcome())
}
