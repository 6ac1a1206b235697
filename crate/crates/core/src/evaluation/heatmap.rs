use std::path::Path;

use crate::error::{Error, Result};
use crate::training::atomic_write;

const ROW_TOLERANCE: f64 = 1e-5;

/// Attention weights of one translation: a row per output token, a column
/// per source token.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionMap {
    pub source_tokens: Vec<String>,
    pub target_tokens: Vec<String>,
    pub weights: Vec<Vec<f64>>,
}

impl AttentionMap {
    pub fn new(source_tokens: Vec<String>, target_tokens: Vec<String>, weights: Vec<Vec<f64>>) -> Result<Self> {
        if weights.len() != target_tokens.len() {
            return Err(Error::contract(format!(
                "{} weight rows for {} target tokens",
                weights.len(),
                target_tokens.len()
            )));
        }
        for (i, row) in weights.iter().enumerate() {
            if row.len() != source_tokens.len() {
                return Err(Error::contract(format!(
                    "row {i} has {} weights for {} source tokens",
                    row.len(),
                    source_tokens.len()
                )));
            }
            if row.iter().any(|w| w.is_nan() || *w < 0.0) {
                return Err(Error::contract(format!("row {i} has a negative or NaN weight")));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_TOLERANCE {
                return Err(Error::contract(format!("row {i} sums to {sum}")));
            }
        }
        Ok(Self {
            source_tokens,
            target_tokens,
            weights,
        })
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        let header = std::iter::once("").chain(self.source_tokens.iter().map(String::as_str));
        w.write_record(header).expect("writing to memory");
        for (label, row) in self.target_tokens.iter().zip(&self.weights) {
            let fields = std::iter::once(label.clone()).chain(row.iter().map(|v| format!("{v:.6}")));
            w.write_record(fields).expect("writing to memory");
        }
        String::from_utf8(w.into_inner().expect("flushing to memory")).expect("fields are UTF-8")
    }

    /// Parses the CSV form. Weights are read as written, so each row sums
    /// to 1 only up to the six-decimal rounding.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .from_reader(text.as_bytes());
        let mut records = r.records();
        let header = records
            .next()
            .ok_or_else(|| Error::contract("attention CSV is empty"))?
            .map_err(|e| Error::contract(format!("attention CSV: {e}")))?;
        if header.get(0) != Some("") {
            return Err(Error::contract("attention CSV header must start with an empty cell"));
        }
        let source_tokens: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
        let mut target_tokens = Vec::new();
        let mut weights = Vec::new();
        for rec in records {
            let rec = rec.map_err(|e| Error::contract(format!("attention CSV: {e}")))?;
            let mut fields = rec.iter();
            target_tokens.push(fields.next().unwrap_or_default().to_string());
            let row = fields
                .map(|f| {
                    f.parse::<f64>()
                        .map_err(|_| Error::contract(format!("attention CSV: bad weight `{f}`")))
                })
                .collect::<Result<Vec<_>>>()?;
            weights.push(row);
        }
        Self::new(source_tokens, target_tokens, weights)
    }
}

/// Writes `map` as CSV, replacing `path` atomically.
pub fn export_attention(map: &AttentionMap, path: impl AsRef<Path>) -> Result<()> {
    atomic_write(path.as_ref(), map.to_csv().as_bytes())
}
