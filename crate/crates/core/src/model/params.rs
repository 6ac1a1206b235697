use serde::{Deserialize, Serialize};

use crate::corpus::LanguageId;
use crate::error::{Error, Result};
use crate::numcore::{glorot_uniform, Real, Rng, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    /// Embedding width.
    pub d_e: usize,
    /// Hidden width shared by encoder, decoder and attention.
    pub d_h: usize,
}

impl ModelDims {
    pub fn new(d_e: usize, d_h: usize) -> Result<Self> {
        if d_e == 0 || d_h == 0 {
            return Err(Error::contract("model dims must be positive"));
        }
        Ok(Self { d_e, d_h })
    }

    /// Decoder input: target embedding plus the previous context vector.
    pub fn decoder_input(&self) -> usize {
        self.d_e + self.d_h
    }
}

/// How fresh parameters are filled.
enum Init<'a> {
    Zeros,
    Glorot(&'a mut Rng),
}

impl Init<'_> {
    /// Matrices follow the init; biases always start at zero.
    fn matrix<F: Real>(&mut self, shape: &[usize]) -> Tensor<F> {
        match self {
            Init::Zeros => Tensor::zeros(shape),
            Init::Glorot(rng) => glorot_uniform(shape, rng).expect("nonempty shape"),
        }
    }
}

/// Input weights, recurrent weights and bias of one gate.
#[derive(Debug, Clone, PartialEq)]
pub struct GateParams<F> {
    pub w: Tensor<F>,
    pub u: Tensor<F>,
    pub b: Tensor<F>,
}

impl<F: Real> GateParams<F> {
    fn init(d_in: usize, d_h: usize, init: &mut Init<'_>) -> Self {
        Self {
            w: init.matrix(&[d_in, d_h]),
            u: init.matrix(&[d_h, d_h]),
            b: Tensor::zeros(&[d_h]),
        }
    }
}

/// Update, relevance and candidate gates of a GRU cell.
#[derive(Debug, Clone, PartialEq)]
pub struct GruParams<F> {
    pub update: GateParams<F>,
    pub relevance: GateParams<F>,
    pub candidate: GateParams<F>,
}

impl<F: Real> GruParams<F> {
    fn init(d_in: usize, d_h: usize, init: &mut Init<'_>) -> Self {
        Self {
            update: GateParams::init(d_in, d_h, init),
            relevance: GateParams::init(d_in, d_h, init),
            candidate: GateParams::init(d_in, d_h, init),
        }
    }

    pub fn d_in(&self) -> usize {
        self.update.w.shape()[0]
    }

    pub fn d_h(&self) -> usize {
        self.update.w.shape()[1]
    }

    pub fn zeros(d_in: usize, d_h: usize) -> Self {
        Self::init(d_in, d_h, &mut Init::Zeros)
    }

    pub fn gates(&self) -> [(&'static str, &GateParams<F>); 3] {
        [
            ("update", &self.update),
            ("relevance", &self.relevance),
            ("candidate", &self.candidate),
        ]
    }

    fn gates_mut(&mut self) -> [(&'static str, &mut GateParams<F>); 3] {
        [
            ("update", &mut self.update),
            ("relevance", &mut self.relevance),
            ("candidate", &mut self.candidate),
        ]
    }
}

/// `score(h_t, h_s) = v_a . (h_t * (W_a h_s))`.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionParams<F> {
    pub w_a: Tensor<F>,
    pub v_a: Tensor<F>,
}

impl<F: Real> AttentionParams<F> {
    pub fn new(w_a: Tensor<F>, v_a: Tensor<F>) -> Result<Self> {
        let d = v_a.numel();
        if w_a.shape() != [d, d] || v_a.shape().len() != 1 {
            return Err(Error::Shape {
                op: "attention params",
                left: w_a.shape().to_vec(),
                right: v_a.shape().to_vec(),
            });
        }
        Ok(Self { w_a, v_a })
    }
}

/// Everything owned by one language.
#[derive(Debug, Clone, PartialEq)]
pub struct LanguagePack<F> {
    pub language: LanguageId,
    /// `V x d_e`, shared by source and target roles.
    pub embedding: Tensor<F>,
    /// `2 d_h x V`, applied to `[h ; context]`.
    pub head_w: Tensor<F>,
    pub head_b: Tensor<F>,
    pub attention: AttentionParams<F>,
}

impl<F: Real> LanguagePack<F> {
    fn init(language: LanguageId, vocab: usize, dims: ModelDims, init: &mut Init<'_>) -> Self {
        Self {
            language,
            embedding: init.matrix(&[vocab, dims.d_e]),
            head_w: init.matrix(&[2 * dims.d_h, vocab]),
            head_b: Tensor::zeros(&[vocab]),
            attention: AttentionParams {
                w_a: init.matrix(&[dims.d_h, dims.d_h]),
                v_a: init.matrix(&[dims.d_h]),
            },
        }
    }

    pub fn vocab_size(&self) -> usize {
        self.embedding.shape()[0]
    }
}

/// Parameters per pack, in canonical order.
pub(crate) const PACK_SLOTS: usize = 5;
/// Parameters per GRU, in canonical order.
pub(crate) const GRU_SLOTS: usize = 9;

#[derive(Debug, Clone, PartialEq)]
pub struct UniversalModel<F> {
    dims: ModelDims,
    pub encoder: GruParams<F>,
    pub decoder: GruParams<F>,
    packs: Vec<LanguagePack<F>>,
}

impl<F: Real> UniversalModel<F> {
    /// All parameters zero. Mostly useful in tests.
    pub fn zeros(dims: ModelDims, languages: &[(LanguageId, usize)]) -> Result<Self> {
        Self::build(dims, languages, Init::Zeros)
    }

    /// Glorot-uniform matrices, zero biases.
    pub fn glorot(dims: ModelDims, languages: &[(LanguageId, usize)], rng: &mut Rng) -> Result<Self> {
        Self::build(dims, languages, Init::Glorot(rng))
    }

    fn build(dims: ModelDims, languages: &[(LanguageId, usize)], mut init: Init<'_>) -> Result<Self> {
        let mut model = Self {
            dims,
            encoder: GruParams::init(dims.d_e, dims.d_h, &mut init),
            decoder: GruParams::init(dims.decoder_input(), dims.d_h, &mut init),
            packs: Vec::new(),
        };
        for (lang, vocab) in languages {
            model.push_pack(lang.clone(), *vocab, &mut init)?;
        }
        Ok(model)
    }

    fn push_pack(&mut self, language: LanguageId, vocab: usize, init: &mut Init<'_>) -> Result<()> {
        if self.pack_index(&language).is_some() {
            return Err(Error::contract(format!("language `{language}` registered twice")));
        }
        if vocab == 0 {
            return Err(Error::contract("vocabulary size must be positive"));
        }
        let pack = LanguagePack::init(language, vocab, self.dims, init);
        self.packs.push(pack);
        Ok(())
    }

    /// Registers another language. Shared encoder/decoder are untouched.
    pub fn add_language(&mut self, language: LanguageId, vocab: usize, rng: &mut Rng) -> Result<()> {
        self.push_pack(language, vocab, &mut Init::Glorot(rng))
    }

    /// Assembles a model from existing parts, checking every dimension.
    pub fn from_parts(
        dims: ModelDims,
        encoder: GruParams<F>,
        decoder: GruParams<F>,
        packs: Vec<LanguagePack<F>>,
    ) -> Result<Self> {
        let model = Self {
            dims,
            encoder,
            decoder,
            packs,
        };
        model.validate()?;
        Ok(model)
    }

    fn validate(&self) -> Result<()> {
        let ModelDims { d_e, d_h } = self.dims;
        let expect = |t: &Tensor<F>, shape: &[usize], what: &str| -> Result<()> {
            if t.shape() != shape {
                return Err(Error::contract(format!(
                    "{what} has shape {:?}, expected {shape:?}",
                    t.shape()
                )));
            }
            Ok(())
        };
        for (name, gru, d_in) in [
            ("encoder", &self.encoder, d_e),
            ("decoder", &self.decoder, d_e + d_h),
        ] {
            for (gate, p) in gru.gates() {
                expect(&p.w, &[d_in, d_h], &format!("{name}.{gate}.W"))?;
                expect(&p.u, &[d_h, d_h], &format!("{name}.{gate}.U"))?;
                expect(&p.b, &[d_h], &format!("{name}.{gate}.b"))?;
            }
        }
        let mut seen = std::collections::HashSet::new();
        for p in &self.packs {
            if !seen.insert(p.language.clone()) {
                return Err(Error::contract(format!("language `{}` registered twice", p.language)));
            }
            let v = p.vocab_size();
            expect(&p.embedding, &[v, d_e], "embedding")?;
            expect(&p.head_w, &[2 * d_h, v], "head.W")?;
            expect(&p.head_b, &[v], "head.b")?;
            expect(&p.attention.w_a, &[d_h, d_h], "attn.W_a")?;
            expect(&p.attention.v_a, &[d_h], "attn.v_a")?;
        }
        Ok(())
    }

    pub fn dims(&self) -> ModelDims {
        self.dims
    }

    pub fn packs(&self) -> &[LanguagePack<F>] {
        &self.packs
    }

    pub fn languages(&self) -> Vec<LanguageId> {
        self.packs.iter().map(|p| p.language.clone()).collect()
    }

    pub fn pack_index(&self, language: &LanguageId) -> Option<usize> {
        self.packs.iter().position(|p| &p.language == language)
    }

    pub fn pack(&self, language: &LanguageId) -> Result<&LanguagePack<F>> {
        self.pack_index(language)
            .map(|i| &self.packs[i])
            .ok_or_else(|| Error::UnknownLanguage(language.to_string()))
    }

    pub fn pack_mut(&mut self, language: &LanguageId) -> Result<&mut LanguagePack<F>> {
        let i = self
            .pack_index(language)
            .ok_or_else(|| Error::UnknownLanguage(language.to_string()))?;
        Ok(&mut self.packs[i])
    }

    /// Number of scalars in the shared encoder and decoder.
    pub fn shared_param_count(&self) -> usize {
        self.params()[..2 * GRU_SLOTS].iter().map(|(_, t)| t.numel()).sum()
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|(_, t)| t.numel()).sum()
    }

    /// Every parameter with its checkpoint name, in canonical order:
    /// encoder gates, decoder gates, then each language pack.
    pub fn params(&self) -> Vec<(String, &Tensor<F>)> {
        let mut out = Vec::with_capacity(2 * GRU_SLOTS + PACK_SLOTS * self.packs.len());
        for (prefix, gru) in [("encoder", &self.encoder), ("decoder", &self.decoder)] {
            for (gate, p) in gru.gates() {
                out.push((format!("{prefix}.{gate}.W"), &p.w));
                out.push((format!("{prefix}.{gate}.U"), &p.u));
                out.push((format!("{prefix}.{gate}.b"), &p.b));
            }
        }
        for p in &self.packs {
            let code = p.language.as_str();
            out.push((format!("lang.{code}.embedding"), &p.embedding));
            out.push((format!("lang.{code}.head.W"), &p.head_w));
            out.push((format!("lang.{code}.head.b"), &p.head_b));
            out.push((format!("lang.{code}.attn.W_a"), &p.attention.w_a));
            out.push((format!("lang.{code}.attn.v_a"), &p.attention.v_a));
        }
        out
    }

    /// Mutable counterpart of [`UniversalModel::params`], same order.
    pub fn params_mut(&mut self) -> Vec<(String, &mut Tensor<F>)> {
        let mut out = Vec::with_capacity(2 * GRU_SLOTS + PACK_SLOTS * self.packs.len());
        for (prefix, gru) in [("encoder", &mut self.encoder), ("decoder", &mut self.decoder)] {
            for (gate, p) in gru.gates_mut() {
                out.push((format!("{prefix}.{gate}.W"), &mut p.w));
                out.push((format!("{prefix}.{gate}.U"), &mut p.u));
                out.push((format!("{prefix}.{gate}.b"), &mut p.b));
            }
        }
        for p in &mut self.packs {
            let code = p.language.as_str().to_string();
            out.push((format!("lang.{code}.embedding"), &mut p.embedding));
            out.push((format!("lang.{code}.head.W"), &mut p.head_w));
            out.push((format!("lang.{code}.head.b"), &mut p.head_b));
            out.push((format!("lang.{code}.attn.W_a"), &mut p.attention.w_a));
            out.push((format!("lang.{code}.attn.v_a"), &mut p.attention.v_a));
        }
        out
    }
}
