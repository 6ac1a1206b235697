#![allow(dead_code)]

use std::path::PathBuf;

use univec_core::corpus::{LanguageId, ParallelCorpus};
use univec_core::training::{Checkpoint, Precision, TrainConfig, Trainer};

pub fn lang(c: &str) -> LanguageId {
    LanguageId::new(c).unwrap()
}

pub fn toy_corpus() -> ParallelCorpus {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/spa_eng_toy.tsv");
    ParallelCorpus::load_tsv(path, lang("en"), lang("es")).unwrap().0
}

/// Trains on the toy corpus until the epoch loss drops below 0.05.
pub fn overfit_checkpoint() -> Checkpoint<f32> {
    let config = TrainConfig {
        epochs: 500,
        batch_size: 8,
        d_e: 32,
        d_h: 64,
        alpha: 5e-3,
        seed: 3,
        precision: Precision::F32,
        ..TrainConfig::default()
    };
    let mut trainer = Trainer::<f32>::new(&config, &toy_corpus()).unwrap();
    while trainer.epochs_done() < config.epochs {
        if trainer.run_epoch().unwrap().loss < 0.05 {
            break;
        }
    }
    trainer.checkpoint()
}
