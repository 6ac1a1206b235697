use std::collections::HashMap;
use std::path::Path;

use crate::corpus::{tokenize, LanguageId, ParallelCorpus, Side};
use crate::error::{Error, Result};

pub const PAD_ID: usize = 0;
pub const START_ID: usize = 1;
pub const END_ID: usize = 2;
pub const UNK_ID: usize = 3;

/// Surface forms of the reserved ids, in id order.
pub const RESERVED_TOKENS: [&str; 4] = ["<pad>", "<start>", "<end>", "<unk>"];

/// Dense token/id mapping for one language.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    language: LanguageId,
    token_to_id: HashMap<String, usize>,
    id_to_token: Vec<String>,
}

impl Vocabulary {
    fn from_tokens(language: LanguageId, tokens: impl IntoIterator<Item = String>) -> Result<Self> {
        let mut id_to_token: Vec<String> = RESERVED_TOKENS.iter().map(|s| s.to_string()).collect();
        let mut token_to_id: HashMap<String, usize> = id_to_token
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        for tok in tokens {
            if tok.is_empty() || tok.chars().any(char::is_whitespace) {
                return Err(Error::contract(format!("invalid vocabulary token {tok:?}")));
            }
            if token_to_id.contains_key(&tok) {
                return Err(Error::contract(format!("duplicate vocabulary token {tok:?}")));
            }
            token_to_id.insert(tok.clone(), id_to_token.len());
            id_to_token.push(tok);
        }
        Ok(Self {
            language,
            token_to_id,
            id_to_token,
        })
    }

    /// Frequency-ranked vocabulary of one corpus side. Ties go to the
    /// lexicographically smaller token; `max_size` counts the four reserved
    /// entries.
    pub fn build(corpus: &ParallelCorpus, side: Side, max_size: Option<usize>) -> Result<Self> {
        if let Some(cap) = max_size {
            if cap < 5 {
                return Err(Error::contract(format!(
                    "vocabulary cap must be at least 5, got {cap}"
                )));
            }
        }
        let mut counts: HashMap<String, usize> = HashMap::new();
        for phrase in corpus.side(side) {
            for tok in tokenize(phrase) {
                *counts.entry(tok).or_default() += 1;
            }
        }
        let mut ranked: Vec<(String, usize)> = counts
            .into_iter()
            .filter(|(t, _)| !RESERVED_TOKENS.contains(&t.as_str()))
            .collect();
        ranked.sort_by(|(ta, ca), (tb, cb)| cb.cmp(ca).then_with(|| ta.cmp(tb)));
        if let Some(cap) = max_size {
            ranked.truncate(cap - RESERVED_TOKENS.len());
        }
        Self::from_tokens(corpus.lang(side).clone(), ranked.into_iter().map(|(t, _)| t))
    }

    pub fn language(&self) -> &LanguageId {
        &self.language
    }

    pub fn len(&self) -> usize {
        self.id_to_token.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn id(&self, token: &str) -> usize {
        self.token_to_id.get(token).copied().unwrap_or(UNK_ID)
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.id_to_token.get(id).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.id_to_token
    }

    /// `[start] + ids + [end]`; rejects sentences longer than `max_len - 2`.
    pub fn encode_sentence(&self, text: &str, max_len: usize) -> Result<Vec<usize>> {
        let toks = tokenize(text);
        let limit = max_len.saturating_sub(2);
        if toks.len() > limit {
            return Err(Error::Length {
                tokens: toks.len(),
                limit,
            });
        }
        let mut ids = Vec::with_capacity(toks.len() + 2);
        ids.push(START_ID);
        ids.extend(toks.iter().map(|t| self.id(t)));
        ids.push(END_ID);
        Ok(ids)
    }

    /// Tokens for the ids, dropping pad/start/end and stopping at end.
    pub fn decode(&self, ids: &[usize]) -> Vec<String> {
        ids.iter()
            .copied()
            .take_while(|&id| id != END_ID)
            .filter(|&id| id != PAD_ID && id != START_ID)
            .map(|id| self.token(id).unwrap_or(RESERVED_TOKENS[UNK_ID]).to_string())
            .collect()
    }

    /// One token per line, line number = id.
    pub fn to_file_string(&self) -> String {
        let mut out = self.id_to_token.join("\n");
        out.push('\n');
        out
    }

    pub fn from_file_string(language: LanguageId, text: &str) -> Result<Self> {
        let mut lines = text.lines().map(|l| l.trim_end_matches('\r'));
        for (id, want) in RESERVED_TOKENS.iter().enumerate() {
            match lines.next() {
                Some(got) if got == *want => {}
                got => {
                    return Err(Error::contract(format!(
                        "vocabulary line {id} must be {want}, found {got:?}"
                    )))
                }
            }
        }
        Self::from_tokens(language, lines.map(str::to_string))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_file_string()).map_err(|e| Error::io(path, e))
    }

    pub fn load(language: LanguageId, path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_file_string(language, &text)
    }
}
