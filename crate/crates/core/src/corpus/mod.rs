//! Tab-delimited parallel corpora, text normalization, vocabularies and
//! padded id batches.

mod batch;
mod normalize;
mod vocab;

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use batch::{make_batches, Batch, Direction, EncodedPairs, IdMatrix, PairBatch};
pub use normalize::{normalize, tokenize};
pub use vocab::{Vocabulary, END_ID, PAD_ID, RESERVED_TOKENS, START_ID, UNK_ID};

/// Short lowercase language tag such as `en` or `es`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct LanguageId(String);

impl LanguageId {
    pub fn new(code: impl Into<String>) -> Result<Self> {
        let code = code.into();
        let valid = !code.is_empty()
            && code
                .chars()
                .all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '-' || c == '_');
        if !valid {
            return Err(Error::contract(format!(
                "language code `{code}` must be a nonempty lowercase tag"
            )));
        }
        Ok(Self(code))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for LanguageId {
    type Error = Error;

    fn try_from(value: String) -> Result<Self> {
        Self::new(value)
    }
}

impl From<LanguageId> for String {
    fn from(id: LanguageId) -> String {
        id.0
    }
}

impl fmt::Display for LanguageId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Which column of the corpus.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    A,
    B,
}

/// Aligned phrase pairs between two languages, in file order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParallelCorpus {
    lang_a: LanguageId,
    lang_b: LanguageId,
    pairs: Vec<(String, String)>,
}

/// What `load_tsv` had to skip.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LoadReport {
    pub skipped_lines: usize,
}

impl ParallelCorpus {
    /// Pairs whose normalized side is empty are rejected.
    pub fn new(lang_a: LanguageId, lang_b: LanguageId, pairs: Vec<(String, String)>) -> Result<Self> {
        if lang_a == lang_b {
            return Err(Error::contract(format!(
                "corpus languages must differ, both are `{lang_a}`"
            )));
        }
        if pairs.is_empty() {
            return Err(Error::contract("corpus needs at least one pair"));
        }
        if let Some((a, b)) = pairs
            .iter()
            .find(|(a, b)| normalize(a).is_empty() || normalize(b).is_empty())
        {
            return Err(Error::contract(format!(
                "pair ({a:?}, {b:?}) is empty after normalization"
            )));
        }
        Ok(Self {
            lang_a,
            lang_b,
            pairs,
        })
    }

    /// Reads a UTF-8 file with one `phrase_a<TAB>phrase_b[<TAB>...]` pair per
    /// line. Lines with fewer than two columns, or a side that normalizes to
    /// nothing, are skipped and counted.
    pub fn load_tsv(
        path: impl AsRef<Path>,
        lang_a: LanguageId,
        lang_b: LanguageId,
    ) -> Result<(Self, LoadReport)> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut pairs = Vec::new();
        let mut report = LoadReport::default();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() {
                continue;
            }
            let mut cols = line.split('\t');
            match (cols.next(), cols.next()) {
                (Some(a), Some(b)) if !normalize(a).is_empty() && !normalize(b).is_empty() => {
                    pairs.push((a.to_string(), b.to_string()));
                }
                _ => {
                    log::warn!("{}:{}: skipping malformed line", path.display(), lineno + 1);
                    report.skipped_lines += 1;
                }
            }
        }
        if pairs.is_empty() {
            return Err(Error::EmptyCorpus(path.to_path_buf()));
        }
        Ok((
            Self {
                lang_a,
                lang_b,
                pairs,
            },
            report,
        ))
    }

    pub fn lang_a(&self) -> &LanguageId {
        &self.lang_a
    }

    pub fn lang_b(&self) -> &LanguageId {
        &self.lang_b
    }

    pub fn lang(&self, side: Side) -> &LanguageId {
        match side {
            Side::A => &self.lang_a,
            Side::B => &self.lang_b,
        }
    }

    pub fn pairs(&self) -> &[(String, String)] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn side(&self, side: Side) -> impl Iterator<Item = &str> {
        self.pairs.iter().map(move |(a, b)| match side {
            Side::A => a.as_str(),
            Side::B => b.as_str(),
        })
    }

    /// Keeps pairs whose both sides fit in `max_len` ids (start and end
    /// included). Returns the number dropped.
    pub fn retain_max_len(&mut self, max_len: usize) -> Result<usize> {
        let before = self.pairs.len();
        let limit = max_len.saturating_sub(2);
        self.pairs
            .retain(|(a, b)| tokenize(a).len() <= limit && tokenize(b).len() <= limit);
        if self.pairs.is_empty() {
            return Err(Error::contract(format!(
                "no pair fits within max_len {max_len}"
            )));
        }
        Ok(before - self.pairs.len())
    }

    /// Keeps the first `n` pairs.
    pub fn truncate(&mut self, n: usize) {
        self.pairs.truncate(n.max(1));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn lang(code: &str) -> LanguageId {
        LanguageId::new(code).unwrap()
    }

    fn write_tmp(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn language_ids_validate() {
        assert!(LanguageId::new("").is_err());
        assert!(LanguageId::new("EN").is_err());
        assert_eq!(lang("es").as_str(), "es");
    }

    #[test]
    fn loads_first_two_columns() {
        let f = write_tmp("Go.\tVe.\tCC-BY 2.0 (France) Attribution: tatoeba.org\n");
        let (corpus, report) = ParallelCorpus::load_tsv(f.path(), lang("en"), lang("es")).unwrap();
        assert_eq!(corpus.pairs(), &[("Go.".to_string(), "Ve.".to_string())]);
        assert_eq!(report.skipped_lines, 0);
    }

    #[test]
    fn empty_file_is_an_error() {
        let f = write_tmp("");
        assert!(matches!(
            ParallelCorpus::load_tsv(f.path(), lang("en"), lang("es")),
            Err(Error::EmptyCorpus(_))
        ));
    }

    #[test]
    fn malformed_lines_are_counted() {
        let f = write_tmp("Hi.\tHola.\nno tab here\n\n");
        let (corpus, report) = ParallelCorpus::load_tsv(f.path(), lang("en"), lang("es")).unwrap();
        assert_eq!(corpus.len(), 1);
        assert_eq!(report.skipped_lines, 1);
    }

    #[test]
    fn missing_file_is_io_error() {
        assert!(matches!(
            ParallelCorpus::load_tsv("/nonexistent/x.tsv", lang("en"), lang("es")),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn crlf_lines_are_accepted() {
        let f = write_tmp("Run!\tCorre.\r\nWait.\tEspera.\r\n");
        let (corpus, _) = ParallelCorpus::load_tsv(f.path(), lang("en"), lang("es")).unwrap();
        assert_eq!(corpus.pairs()[0].1, "Corre.");
        assert_eq!(corpus.len(), 2);
    }

    #[test]
    fn length_filter_and_truncate() {
        let mut c = ParallelCorpus::new(
            lang("en"),
            lang("es"),
            vec![
                ("a b".into(), "c".into()),
                ("a b c d e".into(), "f".into()),
                ("x".into(), "y".into()),
            ],
        )
        .unwrap();
        assert_eq!(c.retain_max_len(4).unwrap(), 1);
        c.truncate(1);
        assert_eq!(c.len(), 1);
    }
}
