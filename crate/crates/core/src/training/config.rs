use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub enum Precision {
    F32,
    F64,
}

impl Precision {
    pub fn bits(self) -> u32 {
        match self {
            Precision::F32 => 32,
            Precision::F64 => 64,
        }
    }
}

impl TryFrom<u32> for Precision {
    type Error = String;

    fn try_from(bits: u32) -> std::result::Result<Self, String> {
        match bits {
            32 => Ok(Precision::F32),
            64 => Ok(Precision::F64),
            other => Err(format!("precision must be 32 or 64, got {other}")),
        }
    }
}

impl From<Precision> for u32 {
    fn from(p: Precision) -> u32 {
        p.bits()
    }
}

/// Every hyperparameter of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub d_e: usize,
    pub d_h: usize,
    /// Base learning rate.
    pub alpha: f64,
    /// Per-epoch decay factor; 1 keeps the rate constant.
    pub gamma: f64,
    pub seed: u64,
    /// Longest id sequence, start and end included.
    pub max_len: usize,
    pub grad_clip: Option<f64>,
    pub precision: Precision,
    /// Train on at most this many pairs (after length filtering).
    pub subset: Option<usize>,
    /// Vocabulary cap per language, reserved ids included.
    #[serde(default)]
    pub max_vocab: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 40,
            batch_size: 64,
            d_e: 128,
            d_h: 256,
            alpha: 1e-3,
            gamma: 1.0,
            seed: 42,
            max_len: 16,
            grad_clip: Some(5.0),
            precision: Precision::F32,
            subset: None,
            max_vocab: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Contract(msg));
        if self.batch_size == 0 {
            return fail("batch_size must be positive".into());
        }
        if self.d_e == 0 || self.d_h == 0 {
            return fail("d_e and d_h must be positive".into());
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return fail(format!("alpha must be positive, got {}", self.alpha));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return fail(format!("gamma must lie in (0, 1], got {}", self.gamma));
        }
        if self.max_len < 3 {
            return fail(format!("max_len must be at least 3, got {}", self.max_len));
        }
        if let Some(c) = self.grad_clip {
            if !(c > 0.0 && c.is_finite()) {
                return fail(format!("grad_clip must be positive, got {c}"));
            }
        }
        if self.subset == Some(0) {
            return fail("subset must be positive".into());
        }
        if let Some(v) = self.max_vocab {
            if v < 5 {
                return fail(format!("max_vocab must be at least 5, got {v}"));
            }
        }
        Ok(())
    }

    /// Overlays the fields present in `patch`.
    pub fn apply(&mut self, patch: &TrainConfigPatch) {
        macro_rules! take {
            ($($f:ident),*) => { $( if let Some(v) = patch.$f.clone() { self.$f = v; } )* };
        }
        take!(epochs, batch_size, d_e, d_h, alpha, gamma, seed, max_len, grad_clip, precision, subset, max_vocab);
    }
}

/// Partial configuration, as read from a JSON config file. Keys mirror
/// [`TrainConfig`]; absent keys leave the base value alone. `grad_clip`,
/// `subset` and `max_vocab` accept `null` to clear.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfigPatch {
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub d_e: Option<usize>,
    pub d_h: Option<usize>,
    pub alpha: Option<f64>,
    pub gamma: Option<f64>,
    pub seed: Option<u64>,
    pub max_len: Option<usize>,
    #[serde(default, deserialize_with = "nullable")]
    pub grad_clip: Option<Option<f64>>,
    pub precision: Option<Precision>,
    #[serde(default, deserialize_with = "nullable")]
    pub subset: Option<Option<usize>>,
    #[serde(default, deserialize_with = "nullable")]
    pub max_vocab: Option<Option<usize>>,
}

fn nullable<'de, D, T>(d: D) -> std::result::Result<Option<Option<T>>, D::Error>
where
    D: serde::Deserializer<'de>,
    T: Deserialize<'de>,
{
    Option::<T>::deserialize(d).map(Some)
}

/// `alpha * gamma^epoch`, epochs counted from zero.
pub fn lr_schedule(config: &TrainConfig, epoch: usize) -> f64 {
    config.alpha * config.gamma.powi(epoch as i32)
}
