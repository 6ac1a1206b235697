//! Checkpoint directories.
//!
//! Layout:
//!
//! ```text
//! <dir>/manifest.json     version, dims, languages, vocab files, tensor table, config
//! <dir>/params.bin        little-endian values of every tensor, manifest order, no padding
//! <dir>/vocab.<code>.txt  one token per line, line number = id
//! ```

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corpus::{LanguageId, Vocabulary};
use crate::error::{Error, PersistError, Result};
use crate::model::{ModelDims, UniversalModel};
use crate::numcore::Real;
use crate::training::{Precision, TrainConfig};

pub const FORMAT_VERSION: u32 = 1;
const MANIFEST: &str = "manifest.json";
const PARAMS: &str = "params.bin";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub dtype: String,
    pub file: String,
    pub byte_offset: u64,
    pub byte_length: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub d_e: usize,
    pub d_h: usize,
    pub precision: Precision,
    pub languages: Vec<LanguageId>,
    pub vocab_files: BTreeMap<String, String>,
    pub tensors: Vec<TensorEntry>,
    pub config: TrainConfig,
}

/// A model with the vocabularies and configuration that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint<F> {
    pub model: UniversalModel<F>,
    pub vocabs: Vec<Vocabulary>,
    pub config: TrainConfig,
}

fn persist(e: PersistError) -> Error {
    Error::Persist(e)
}

/// Writes `bytes` to a temporary sibling and renames it into place.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = sibling(path, "tmp");
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

fn sibling(path: &Path, tag: &str) -> PathBuf {
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    path.with_file_name(format!(".{name}.{tag}.{}", std::process::id()))
}

/// Parses and version-checks `manifest.json`.
pub fn read_manifest(dir: impl AsRef<Path>) -> Result<Manifest> {
    let path = dir.as_ref().join(MANIFEST);
    let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
    let value: serde_json::Value = serde_json::from_slice(&bytes)
        .map_err(|e| persist(PersistError::Version(format!("manifest is not valid JSON: {e}"))))?;
    match value.get("version").and_then(|v| v.as_u64()) {
        Some(v) if v == FORMAT_VERSION as u64 => {}
        Some(v) => return Err(persist(PersistError::Version(format!("version {v}, expected {FORMAT_VERSION}")))),
        None => return Err(persist(PersistError::Version("manifest has no version field".into()))),
    }
    serde_json::from_value(value).map_err(|e| persist(PersistError::Manifest(e.to_string())))
}

impl<F: Real> Checkpoint<F> {
    pub fn vocab(&self, language: &LanguageId) -> Result<&Vocabulary> {
        self.vocabs
            .iter()
            .find(|v| v.language() == language)
            .ok_or_else(|| Error::UnknownLanguage(language.to_string()))
    }

    fn manifest_and_blob(&self) -> (Manifest, Vec<u8>) {
        let mut blob = Vec::new();
        let mut tensors = Vec::new();
        for (name, t) in self.model.params() {
            let offset = blob.len() as u64;
            for &v in t.data() {
                v.write_le(&mut blob);
            }
            tensors.push(TensorEntry {
                name,
                shape: t.shape().to_vec(),
                dtype: F::DTYPE.to_string(),
                file: PARAMS.to_string(),
                byte_offset: offset,
                byte_length: blob.len() as u64 - offset,
            });
        }
        let dims = self.model.dims();
        let languages = self.model.languages();
        let vocab_files = languages
            .iter()
            .map(|l| (l.to_string(), format!("vocab.{l}.txt")))
            .collect();
        let mut config = self.config.clone();
        config.precision = if F::BITS == 32 { Precision::F32 } else { Precision::F64 };
        let manifest = Manifest {
            version: FORMAT_VERSION,
            d_e: dims.d_e,
            d_h: dims.d_h,
            precision: config.precision,
            languages,
            vocab_files,
            tensors,
            config,
        };
        (manifest, blob)
    }

    /// Writes the checkpoint directory, replacing any previous one.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        for lang in self.model.languages() {
            self.vocab(&lang)?;
        }
        let (manifest, blob) = self.manifest_and_blob();
        let staging = sibling(dir, "staging");
        if staging.exists() {
            fs::remove_dir_all(&staging).map_err(|e| Error::io(&staging, e))?;
        }
        fs::create_dir_all(&staging).map_err(|e| Error::io(&staging, e))?;
        let write = |name: &str, bytes: &[u8]| {
            let p = staging.join(name);
            fs::write(&p, bytes).map_err(|e| Error::io(&p, e))
        };
        let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        write(MANIFEST, json.as_bytes())?;
        write(PARAMS, &blob)?;
        for (lang, file) in &manifest.vocab_files {
            let vocab = self.vocab(&LanguageId::new(lang.clone())?)?;
            write(file, vocab.to_file_string().as_bytes())?;
        }
        if dir.exists() {
            let old = sibling(dir, "old");
            fs::rename(dir, &old).map_err(|e| Error::io(dir, e))?;
            fs::rename(&staging, dir).map_err(|e| Error::io(dir, e))?;
            fs::remove_dir_all(&old).map_err(|e| Error::io(&old, e))?;
        } else {
            fs::rename(&staging, dir).map_err(|e| Error::io(dir, e))?;
        }
        Ok(())
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let manifest = read_manifest(dir)?;
        if manifest.precision.bits() != F::BITS {
            return Err(persist(PersistError::Consistency(format!(
                "checkpoint stores {}-bit values, loader expects {}-bit",
                manifest.precision.bits(),
                F::BITS
            ))));
        }

        let mut vocabs = Vec::new();
        for lang in &manifest.languages {
            let file = manifest.vocab_files.get(lang.as_str()).ok_or_else(|| {
                persist(PersistError::Consistency(format!("no vocabulary file for `{lang}`")))
            })?;
            vocabs.push(Vocabulary::load(lang.clone(), dir.join(file))?);
        }
        if manifest.vocab_files.len() != manifest.languages.len() {
            return Err(persist(PersistError::Consistency(
                "vocabulary files do not match the language list".into(),
            )));
        }

        let dims = ModelDims::new(manifest.d_e, manifest.d_h)
            .map_err(|e| persist(PersistError::Manifest(e.to_string())))?;
        let sizes: Vec<(LanguageId, usize)> = vocabs
            .iter()
            .map(|v| (v.language().clone(), v.len()))
            .collect();
        let mut model = UniversalModel::<F>::zeros(dims, &sizes)
            .map_err(|e| persist(PersistError::Manifest(e.to_string())))?;

        let mut blobs: HashMap<String, Vec<u8>> = HashMap::new();
        let mut entries: HashMap<&str, &TensorEntry> = HashMap::new();
        for entry in &manifest.tensors {
            if entries.insert(entry.name.as_str(), entry).is_some() {
                return Err(persist(PersistError::Consistency(format!(
                    "tensor `{}` listed twice",
                    entry.name
                ))));
            }
            if !blobs.contains_key(&entry.file) {
                let p = dir.join(&entry.file);
                let bytes = fs::read(&p).map_err(|e| {
                    if e.kind() == std::io::ErrorKind::NotFound {
                        persist(PersistError::Consistency(format!("blob file {} missing", entry.file)))
                    } else {
                        Error::io(&p, e)
                    }
                })?;
                blobs.insert(entry.file.clone(), bytes);
            }
        }

        let mut used = 0usize;
        for (name, tensor) in model.params_mut() {
            let entry = entries.remove(name.as_str()).ok_or_else(|| {
                persist(PersistError::Consistency(format!("tensor `{name}` missing from manifest")))
            })?;
            if entry.shape != tensor.shape() || entry.dtype != F::DTYPE {
                return Err(persist(PersistError::Consistency(format!(
                    "tensor `{name}` is {:?} {}, expected {:?} {}",
                    entry.shape,
                    entry.dtype,
                    tensor.shape(),
                    F::DTYPE
                ))));
            }
            let want = (tensor.numel() * F::BYTES) as u64;
            if entry.byte_length != want {
                return Err(persist(PersistError::Consistency(format!(
                    "tensor `{name}` has byte_length {}, expected {want}",
                    entry.byte_length
                ))));
            }
            let blob = &blobs[&entry.file];
            let end = entry.byte_offset + entry.byte_length;
            if end > blob.len() as u64 {
                return Err(persist(PersistError::Truncated {
                    needed: end as usize,
                    available: blob.len(),
                }));
            }
            let bytes = &blob[entry.byte_offset as usize..end as usize];
            for (dst, chunk) in tensor.data_mut().iter_mut().zip(bytes.chunks_exact(F::BYTES)) {
                *dst = F::read_le(chunk);
            }
            used += entry.byte_length as usize;
        }
        if let Some(extra) = entries.keys().next() {
            return Err(persist(PersistError::Consistency(format!(
                "manifest lists unknown tensor `{extra}`"
            ))));
        }
        let total: usize = blobs.values().map(Vec::len).sum();
        if used != total {
            return Err(persist(PersistError::Consistency(format!(
                "blob holds {total} bytes, tensors account for {used}"
            ))));
        }
        Ok(Self {
            model,
            vocabs,
            config: manifest.config,
        })
    }
}

