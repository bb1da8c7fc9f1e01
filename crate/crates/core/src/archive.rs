//! Single-file model archive.
//!
//! Layout (little endian):
//!
//! ```text
//! magic    8 bytes  "FCMARCH\n"
//! version  u32
//! count    u32      number of sections
//! section  tag [u8; 4], length u64, payload
//! ```
//!
//! Sections: `META` (JSON: kind, labels, feature config, shapes, caller
//! metadata), `FVOC`/`FCMW` (FCM feature vocab as `index<TAB>feature` text,
//! weights as f64), `EMBV`/`EMBM` (fine-tuned embedding words as JSON and
//! matrix as f64), `LLVC`/`LLWT` (log-linear vocab and weights). Floats are
//! stored bit-exactly.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::corpus::LabelSet;
use crate::embeddings::{EmbeddingError, EmbeddingTable, UnkPolicy};
use crate::features::{FeatureConfig, FeatureError, FeatureVocab};
use crate::loglinear::LogLinearParams;
use crate::model::{FcmParams, LabelWeights, ModelError};
use crate::trainer::{FcmPart, ModelKind, RelationModel};

const MAGIC: &[u8; 8] = b"FCMARCH\n";
pub const ARCHIVE_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum ArchiveError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("not a model archive (bad magic)")]
    BadMagic,
    #[error("unsupported archive version {0} (supported: {ARCHIVE_VERSION})")]
    Version(u32),
    #[error("archive is missing section {0}")]
    MissingSection(&'static str),
    #[error("corrupt archive: {0}")]
    Corrupt(String),
    #[error("model was trained without fine-tuning; supply the embeddings it was trained with")]
    NeedsEmbeddings,
    #[error("embedding dimension {found} does not match the model's {expected}")]
    EmbeddingDim { found: usize, expected: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
}

#[derive(Debug, Serialize, Deserialize)]
struct FcmMeta {
    features: usize,
    dim: usize,
    fine_tuned: bool,
    embedded_table: bool,
    unk_policy: UnkPolicy,
}

#[derive(Debug, Serialize, Deserialize)]
struct Meta {
    kind: ModelKind,
    labels: Vec<String>,
    nil_label: Option<String>,
    feature_config: FeatureConfig,
    fcm: Option<FcmMeta>,
    loglin_features: Option<usize>,
    #[serde(default)]
    extra: serde_json::Value,
}

fn f64_bytes(values: &[f64]) -> Vec<u8> {
    values.iter().flat_map(|v| v.to_le_bytes()).collect()
}

fn bytes_f64(bytes: &[u8]) -> Result<Vec<f64>, ArchiveError> {
    if bytes.len() % 8 != 0 {
        return Err(ArchiveError::Corrupt("float section length is not a multiple of 8".into()));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect())
}

fn vocab_bytes(vocab: &FeatureVocab) -> Vec<u8> {
    let mut buf = Vec::new();
    vocab.write_tsv(&mut buf).expect("writing to a Vec cannot fail");
    buf
}

/// Serialises `model` with caller-supplied `extra` metadata (e.g. the run
/// configuration). The embedding table is stored only when fine-tuned.
pub fn write_model<W: Write>(mut out: W, model: &RelationModel, extra: &serde_json::Value) -> std::io::Result<()> {
    let mut sections: Vec<(&[u8; 4], Vec<u8>)> = Vec::new();
    let fcm_meta = model.fcm.as_ref().map(|p| FcmMeta {
        features: p.params.num_features(),
        dim: p.params.dim(),
        fine_tuned: p.params.fine_tune,
        embedded_table: p.params.fine_tune,
        unk_policy: p.params.embeddings.unk_policy(),
    });
    let meta = Meta {
        kind: model.kind,
        labels: model.labels.labels().to_vec(),
        nil_label: model.labels.nil_label().map(str::to_string),
        feature_config: model.feature_config.clone(),
        fcm: fcm_meta,
        loglin_features: model.loglin.as_ref().map(LogLinearParams::num_features),
        extra: extra.clone(),
    };
    sections.push((b"META", serde_json::to_vec(&meta)?));
    if let Some(part) = &model.fcm {
        sections.push((b"FVOC", vocab_bytes(&part.vocab)));
        sections.push((b"FCMW", f64_bytes(&part.params.weights.values())));
        if part.params.fine_tune {
            let table = &part.params.embeddings;
            sections.push((b"EMBV", serde_json::to_vec(table.words())?));
            sections.push((b"EMBM", f64_bytes(table.matrix())));
        }
    }
    if let Some(ll) = &model.loglin {
        sections.push((b"LLVC", vocab_bytes(&ll.vocab)));
        sections.push((b"LLWT", f64_bytes(&ll.values())));
    }

    out.write_all(MAGIC)?;
    out.write_all(&ARCHIVE_VERSION.to_le_bytes())?;
    out.write_all(&(sections.len() as u32).to_le_bytes())?;
    for (tag, payload) in sections {
        out.write_all(tag)?;
        out.write_all(&(payload.len() as u64).to_le_bytes())?;
        out.write_all(&payload)?;
    }
    out.flush()
}

fn read_exact<R: Read>(input: &mut R, n: usize) -> Result<Vec<u8>, ArchiveError> {
    let mut buf = vec![0; n];
    input
        .read_exact(&mut buf)
        .map_err(|e| ArchiveError::Corrupt(format!("truncated archive: {e}")))?;
    Ok(buf)
}

type Sections = BTreeMap<[u8; 4], Vec<u8>>;

fn read_sections<R: Read>(mut input: R) -> Result<Sections, ArchiveError> {
    if read_exact(&mut input, 8)? != MAGIC {
        return Err(ArchiveError::BadMagic);
    }
    let u32_at = |b: Vec<u8>| u32::from_le_bytes(b.try_into().expect("4 bytes"));
    let version = u32_at(read_exact(&mut input, 4)?);
    if version != ARCHIVE_VERSION {
        return Err(ArchiveError::Version(version));
    }
    let count = u32_at(read_exact(&mut input, 4)?);
    let mut sections = Sections::new();
    for _ in 0..count {
        let tag: [u8; 4] = read_exact(&mut input, 4)?.try_into().expect("4 bytes");
        let len = u64::from_le_bytes(read_exact(&mut input, 8)?.try_into().expect("8 bytes"));
        let len = usize::try_from(len).map_err(|_| ArchiveError::Corrupt("section too large".into()))?;
        sections.insert(tag, read_exact(&mut input, len)?);
    }
    Ok(sections)
}

fn section<'a>(sections: &'a Sections, tag: &'static str) -> Result<&'a [u8], ArchiveError> {
    let key: [u8; 4] = tag.as_bytes().try_into().expect("4-byte tag");
    sections.get(&key).map(Vec::as_slice).ok_or(ArchiveError::MissingSection(tag))
}

fn read_meta(sections: &Sections) -> Result<Meta, ArchiveError> {
    serde_json::from_slice(section(sections, "META")?).map_err(|e| ArchiveError::Corrupt(format!("META: {e}")))
}

/// The caller metadata stored by [`write_model`], without loading weights.
pub fn read_extra<R: Read>(input: R) -> Result<serde_json::Value, ArchiveError> {
    Ok(read_meta(&read_sections(input)?)?.extra)
}

/// Reads a model. `embeddings` is required when the archive holds no
/// fine-tuned table and ignored otherwise.
pub fn read_model<R: Read>(
    input: R,
    embeddings: Option<Arc<EmbeddingTable>>,
) -> Result<(RelationModel, serde_json::Value), ArchiveError> {
    let sections = read_sections(input)?;
    let section = |tag: &'static str| section(&sections, tag);

    let meta = read_meta(&sections)?;
    let labels = LabelSet::from_labels(&meta.labels, meta.nil_label.as_deref());
    if labels.len() != meta.labels.len() {
        return Err(ArchiveError::Corrupt("duplicate labels".into()));
    }

    let fcm = match &meta.fcm {
        None => None,
        Some(fm) => {
            let vocab = FeatureVocab::read_tsv(section("FVOC")?)?;
            if vocab.dimension() != fm.features {
                return Err(ArchiveError::Corrupt("FCM vocab size disagrees with META".into()));
            }
            let weights = LabelWeights::from_values(labels.len(), fm.features, fm.dim, bytes_f64(section("FCMW")?)?)?;
            let table = if fm.embedded_table {
                let words: Vec<String> = serde_json::from_slice(section("EMBV")?)
                    .map_err(|e| ArchiveError::Corrupt(format!("EMBV: {e}")))?;
                let matrix = bytes_f64(section("EMBM")?)?;
                if matrix.len() != words.len() * fm.dim {
                    return Err(ArchiveError::Corrupt("embedding matrix size disagrees with vocabulary".into()));
                }
                let rows = words.into_iter().zip(matrix.chunks_exact(fm.dim).map(<[f64]>::to_vec));
                Arc::new(EmbeddingTable::from_rows(fm.dim, rows, fm.unk_policy)?)
            } else {
                let table = embeddings.ok_or(ArchiveError::NeedsEmbeddings)?;
                if table.dim() != fm.dim {
                    return Err(ArchiveError::EmbeddingDim {
                        found: table.dim(),
                        expected: fm.dim,
                    });
                }
                table
            };
            let params = FcmParams {
                labels: labels.clone(),
                weights,
                embeddings: table,
                fine_tune: fm.fine_tuned,
            };
            params.check()?;
            Some(FcmPart { vocab, params })
        }
    };
    let loglin = match meta.loglin_features {
        None => None,
        Some(n) => {
            let vocab = FeatureVocab::read_tsv(section("LLVC")?)?;
            if vocab.dimension() != n {
                return Err(ArchiveError::Corrupt("log-linear vocab size disagrees with META".into()));
            }
            Some(LogLinearParams::from_values(labels.clone(), vocab, bytes_f64(section("LLWT")?)?)?)
        }
    };
    let model = RelationModel {
        kind: meta.kind,
        labels,
        feature_config: meta.feature_config,
        fcm,
        loglin,
    };
    Ok((model, meta.extra))
}

pub fn save_model(path: impl AsRef<Path>, model: &RelationModel, extra: &serde_json::Value) -> Result<(), ArchiveError> {
    let path = path.as_ref();
    let io_err = |source| ArchiveError::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = File::create(path).map_err(io_err)?;
    write_model(BufWriter::new(file), model, extra).map_err(io_err)
}

pub fn load_extra(path: impl AsRef<Path>) -> Result<serde_json::Value, ArchiveError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| ArchiveError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_extra(BufReader::new(file))
}

pub fn load_model(
    path: impl AsRef<Path>,
    embeddings: Option<Arc<EmbeddingTable>>,
) -> Result<(RelationModel, serde_json::Value), ArchiveError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| ArchiveError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_model(BufReader::new(file), embeddings)
}
