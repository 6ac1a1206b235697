use crate::corpus::{LanguageId, ParallelCorpus, Vocabulary, PAD_ID};
use crate::error::{Error, Result};
use crate::numcore::Rng;

/// Row-major matrix of token ids, right-padded with [`PAD_ID`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdMatrix {
    rows: usize,
    cols: usize,
    data: Vec<usize>,
}

impl IdMatrix {
    /// Pads every sequence to the longest one.
    pub fn from_rows(seqs: &[&[usize]]) -> Self {
        let cols = seqs.iter().map(|s| s.len()).max().unwrap_or(0);
        let mut data = vec![PAD_ID; seqs.len() * cols];
        for (r, s) in seqs.iter().enumerate() {
            data[r * cols..r * cols + s.len()].copy_from_slice(s);
        }
        Self {
            rows: seqs.len(),
            cols,
            data,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, row: usize, col: usize) -> usize {
        self.data[row * self.cols + col]
    }

    pub fn row(&self, row: usize) -> &[usize] {
        &self.data[row * self.cols..(row + 1) * self.cols]
    }

    /// Column `col` across all rows.
    pub fn column(&self, col: usize) -> Vec<usize> {
        (0..self.rows).map(|r| self.get(r, col)).collect()
    }

    /// True at non-pad positions.
    pub fn mask(&self) -> Vec<bool> {
        self.data.iter().map(|&id| id != PAD_ID).collect()
    }

    /// Unpadded length of each row.
    pub fn lengths(&self) -> Vec<usize> {
        (0..self.rows)
            .map(|r| self.row(r).iter().filter(|&&id| id != PAD_ID).count())
            .collect()
    }

    pub fn select_rows(&self, order: &[usize]) -> Self {
        let mut data = Vec::with_capacity(order.len() * self.cols);
        for &r in order {
            data.extend_from_slice(self.row(r));
        }
        Self {
            rows: order.len(),
            cols: self.cols,
            data,
        }
    }
}

/// Translation direction over a pair batch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    AToB,
    BToA,
}

impl Direction {
    pub fn reverse(self) -> Self {
        match self {
            Direction::AToB => Direction::BToA,
            Direction::BToA => Direction::AToB,
        }
    }
}

/// One direction of a batch: what the model consumes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Batch {
    pub source_ids: IdMatrix,
    pub target_ids: IdMatrix,
    pub source_lang: LanguageId,
    pub target_lang: LanguageId,
    pub pad_mask_tgt: Vec<bool>,
}

impl Batch {
    pub fn new(
        source_ids: IdMatrix,
        target_ids: IdMatrix,
        source_lang: LanguageId,
        target_lang: LanguageId,
    ) -> Result<Self> {
        if source_ids.rows() != target_ids.rows() || source_ids.rows() == 0 {
            return Err(Error::contract(format!(
                "batch needs matching nonzero row counts, got {} and {}",
                source_ids.rows(),
                target_ids.rows()
            )));
        }
        let pad_mask_tgt = target_ids.mask();
        Ok(Self {
            source_ids,
            target_ids,
            source_lang,
            target_lang,
            pad_mask_tgt,
        })
    }

    pub fn size(&self) -> usize {
        self.source_ids.rows()
    }

    pub fn source_mask(&self) -> Vec<bool> {
        self.source_ids.mask()
    }
}

/// The same pairs seen from both directions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairBatch {
    pub a_ids: IdMatrix,
    pub b_ids: IdMatrix,
    pub lang_a: LanguageId,
    pub lang_b: LanguageId,
}

impl PairBatch {
    pub fn size(&self) -> usize {
        self.a_ids.rows()
    }

    pub fn view(&self, direction: Direction) -> Batch {
        let (src, tgt, sl, tl) = match direction {
            Direction::AToB => (&self.a_ids, &self.b_ids, &self.lang_a, &self.lang_b),
            Direction::BToA => (&self.b_ids, &self.a_ids, &self.lang_b, &self.lang_a),
        };
        Batch::new(src.clone(), tgt.clone(), sl.clone(), tl.clone())
            .expect("pair batch sides have equal nonzero rows")
    }
}

/// Encodes every pair and groups them into `ceil(N / batch_size)` batches,
/// each padded to its own widest row. With `shuffle` the pair order is
/// permuted by `rng` first.
pub fn make_batches(
    corpus: &ParallelCorpus,
    vocab_a: &Vocabulary,
    vocab_b: &Vocabulary,
    batch_size: usize,
    max_len: usize,
    rng: &mut Rng,
    shuffle: bool,
) -> Result<Vec<PairBatch>> {
    let encoded = EncodedPairs::encode(corpus, vocab_a, vocab_b, max_len)?;
    encoded.batches(batch_size, rng, shuffle)
}

/// Pre-encoded id sequences, reusable across epochs.
#[derive(Debug, Clone)]
pub struct EncodedPairs {
    pub lang_a: LanguageId,
    pub lang_b: LanguageId,
    pub pairs: Vec<(Vec<usize>, Vec<usize>)>,
}

impl EncodedPairs {
    pub fn encode(
        corpus: &ParallelCorpus,
        vocab_a: &Vocabulary,
        vocab_b: &Vocabulary,
        max_len: usize,
    ) -> Result<Self> {
        let pairs = corpus
            .pairs()
            .iter()
            .map(|(a, b)| Ok((vocab_a.encode_sentence(a, max_len)?, vocab_b.encode_sentence(b, max_len)?)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            lang_a: corpus.lang_a().clone(),
            lang_b: corpus.lang_b().clone(),
            pairs,
        })
    }

    pub fn batches(&self, batch_size: usize, rng: &mut Rng, shuffle: bool) -> Result<Vec<PairBatch>> {
        if batch_size < 1 {
            return Err(Error::contract("batch size must be at least 1"));
        }
        let mut order: Vec<usize> = (0..self.pairs.len()).collect();
        if shuffle {
            rng.shuffle(&mut order);
        }
        Ok(order
            .chunks(batch_size)
            .map(|chunk| {
                let a: Vec<&[usize]> = chunk.iter().map(|&i| self.pairs[i].0.as_slice()).collect();
                let b: Vec<&[usize]> = chunk.iter().map(|&i| self.pairs[i].1.as_slice()).collect();
                PairBatch {
                    a_ids: IdMatrix::from_rows(&a),
                    b_ids: IdMatrix::from_rows(&b),
                    lang_a: self.lang_a.clone(),
                    lang_b: self.lang_b.clone(),
                }
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Side, END_ID, START_ID};

    fn setup(pairs: &[(&str, &str)]) -> (ParallelCorpus, Vocabulary, Vocabulary) {
        let c = ParallelCorpus::new(
            LanguageId::new("en").unwrap(),
            LanguageId::new("es").unwrap(),
            pairs.iter().map(|(a, b)| (a.to_string(), b.to_string())).collect(),
        )
        .unwrap();
        let va = Vocabulary::build(&c, Side::A, None).unwrap();
        let vb = Vocabulary::build(&c, Side::B, None).unwrap();
        (c, va, vb)
    }

    #[test]
    fn batch_count_and_sizes() {
        let (c, va, vb) = setup(&[("a", "x"), ("b", "y"), ("c", "z"), ("d", "w"), ("e", "v")]);
        let batches = make_batches(&c, &va, &vb, 2, 16, &mut Rng::new(0), false).unwrap();
        let sizes: Vec<usize> = batches.iter().map(PairBatch::size).collect();
        assert_eq!(sizes, vec![2, 2, 1]);
        assert!(make_batches(&c, &va, &vb, 0, 16, &mut Rng::new(0), false).is_err());
    }

    #[test]
    fn padding_layout() {
        let (c, va, vb) = setup(&[("a", "x"), ("a b c", "y")]);
        let batches = make_batches(&c, &va, &vb, 2, 16, &mut Rng::new(0), false).unwrap();
        let a = &batches[0].a_ids;
        assert_eq!(a.cols(), 5);
        assert_eq!(a.row(0), &[START_ID, va.id("a"), END_ID, PAD_ID, PAD_ID]);
        assert_eq!(a.lengths(), vec![3, 5]);
    }

    #[test]
    fn unshuffled_keeps_file_order() {
        let (c, va, vb) = setup(&[("a", "x"), ("b", "y"), ("c", "z")]);
        let batches = make_batches(&c, &va, &vb, 1, 16, &mut Rng::new(0), false).unwrap();
        let firsts: Vec<usize> = batches.iter().map(|b| b.a_ids.get(0, 1)).collect();
        assert_eq!(firsts, vec![va.id("a"), va.id("b"), va.id("c")]);
    }

    #[test]
    fn views_swap_roles() {
        let (c, va, vb) = setup(&[("a b", "x")]);
        let pb = &make_batches(&c, &va, &vb, 1, 16, &mut Rng::new(0), false).unwrap()[0];
        let fwd = pb.view(Direction::AToB);
        let back = pb.view(Direction::BToA);
        assert_eq!(fwd.source_ids, back.target_ids);
        assert_eq!(fwd.target_lang.as_str(), "es");
        assert_eq!(back.target_lang.as_str(), "en");
        assert_eq!(back.pad_mask_tgt, vec![true; 4]);
    }

    #[test]
    fn over_length_pair_is_rejected() {
        let (c, va, vb) = setup(&[("a b c d", "x")]);
        assert!(matches!(
            make_batches(&c, &va, &vb, 1, 4, &mut Rng::new(0), false),
            Err(Error::Length { .. })
        ));
    }
}
