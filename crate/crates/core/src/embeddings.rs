//! Dense word embeddings: word2vec text loading, lookup with an
//! out-of-vocabulary policy, and persistence of fine-tuned tables.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use flate2::read::GzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;
use serde::{Deserialize, Serialize};

/// Word used for the trainable unknown row under [`UnkPolicy::DedicatedUnk`].
pub const UNK_WORD: &str = "<unk>";

#[derive(Debug, thiserror::Error)]
pub enum EmbeddingError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: embedding file is empty")]
    Empty { path: PathBuf },
    #[error("{path}, line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("embedding dimension must be positive")]
    ZeroDim,
    #[error("row {row} has {found} values, expected {expected}")]
    RowLength {
        row: usize,
        found: usize,
        expected: usize,
    },
    #[error("row {row} contains a non-finite value")]
    NonFinite { row: usize },
    #[error("duplicate word {0:?}")]
    DuplicateWord(String),
}

/// What [`EmbeddingTable::lookup`] returns for words missing from the table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum UnkPolicy {
    ZeroVector,
    #[default]
    MeanVector,
    /// A real, trainable row named `<unk>`; appended (initialised to the row
    /// mean) when the loaded file lacks one.
    DedicatedUnk,
}

/// Where a word's vector lives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum WordSlot {
    Row(usize),
    /// Not in the table and no dedicated row: resolved through the policy
    /// vector, which is a constant for training purposes.
    Unknown,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    words: Vec<String>,
    vocab: HashMap<String, usize>,
    matrix: Vec<f64>,
    unk_policy: UnkPolicy,
    unk: Vec<f64>,
}

impl EmbeddingTable {
    /// Builds a table from `(word, vector)` pairs. Duplicate words are rejected.
    pub fn from_rows<I, S>(dim: usize, rows: I, unk_policy: UnkPolicy) -> Result<Self, EmbeddingError>
    where
        I: IntoIterator<Item = (S, Vec<f64>)>,
        S: Into<String>,
    {
        if dim == 0 {
            return Err(EmbeddingError::ZeroDim);
        }
        let mut table = EmbeddingTable {
            dim,
            words: Vec::new(),
            vocab: HashMap::new(),
            matrix: Vec::new(),
            unk_policy,
            unk: vec![0.0; dim],
        };
        for (row, (word, vector)) in rows.into_iter().enumerate() {
            let word = word.into();
            if vector.len() != dim {
                return Err(EmbeddingError::RowLength {
                    row,
                    found: vector.len(),
                    expected: dim,
                });
            }
            if vector.iter().any(|v| !v.is_finite()) {
                return Err(EmbeddingError::NonFinite { row });
            }
            if table.vocab.contains_key(&word) {
                return Err(EmbeddingError::DuplicateWord(word));
            }
            table.push_row(word, &vector);
        }
        table.finish_policy();
        Ok(table)
    }

    fn push_row(&mut self, word: String, vector: &[f64]) {
        self.vocab.insert(word.clone(), self.words.len());
        self.words.push(word);
        self.matrix.extend_from_slice(vector);
    }

    fn finish_policy(&mut self) {
        if self.unk_policy == UnkPolicy::DedicatedUnk && !self.vocab.contains_key(UNK_WORD) {
            let mean = self.row_mean();
            self.push_row(UNK_WORD.to_string(), &mean);
        }
        self.refresh_unknown();
    }

    fn row_mean(&self) -> Vec<f64> {
        let mut mean = vec![0.0; self.dim];
        if self.words.is_empty() {
            return mean;
        }
        for row in self.matrix.chunks_exact(self.dim) {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        let n = self.words.len() as f64;
        mean.iter_mut().for_each(|m| *m /= n);
        mean
    }

    /// Recomputes the cached unknown vector from the current rows. Called
    /// after rows are modified (fine-tuning).
    pub fn refresh_unknown(&mut self) {
        self.unk = match self.unk_policy {
            UnkPolicy::ZeroVector => vec![0.0; self.dim],
            UnkPolicy::MeanVector => self.row_mean(),
            UnkPolicy::DedicatedUnk => match self.vocab.get(UNK_WORD) {
                Some(&r) => self.row(r).to_vec(),
                None => vec![0.0; self.dim],
            },
        };
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn unk_policy(&self) -> UnkPolicy {
        self.unk_policy
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn row_of(&self, word: &str) -> Option<usize> {
        self.vocab.get(word).copied()
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.matrix[row * self.dim..(row + 1) * self.dim]
    }

    pub fn row_mut(&mut self, row: usize) -> &mut [f64] {
        &mut self.matrix[row * self.dim..(row + 1) * self.dim]
    }

    /// The vector returned for out-of-vocabulary words.
    pub fn unknown_vector(&self) -> &[f64] {
        &self.unk
    }

    /// Exact match, then lowercase, then the policy's unknown row (if any).
    pub fn resolve(&self, word: &str) -> WordSlot {
        if let Some(&r) = self.vocab.get(word) {
            return WordSlot::Row(r);
        }
        let lower = word.to_lowercase();
        if lower != word {
            if let Some(&r) = self.vocab.get(&lower) {
                return WordSlot::Row(r);
            }
        }
        match self.unk_policy {
            UnkPolicy::DedicatedUnk => self
                .vocab
                .get(UNK_WORD)
                .map_or(WordSlot::Unknown, |&r| WordSlot::Row(r)),
            _ => WordSlot::Unknown,
        }
    }

    pub fn vector(&self, slot: WordSlot) -> &[f64] {
        match slot {
            WordSlot::Row(r) => self.row(r),
            WordSlot::Unknown => &self.unk,
        }
    }

    pub fn lookup(&self, word: &str) -> &[f64] {
        self.vector(self.resolve(word))
    }

    /// Scales every row to unit L2 norm (zero rows are left alone).
    pub fn normalize_rows(&mut self) {
        for row in self.matrix.chunks_exact_mut(self.dim) {
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 0.0 {
                row.iter_mut().for_each(|v| *v /= norm);
            }
        }
        self.refresh_unknown();
    }

    /// Raw row-major matrix, `len() * dim()` values.
    pub fn matrix(&self) -> &[f64] {
        &self.matrix
    }
}

fn open_reader(path: &Path) -> Result<Box<dyn BufRead>, EmbeddingError> {
    let file = File::open(path).map_err(|source| EmbeddingError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let inner: Box<dyn Read> = if is_gzip(path) {
        Box::new(GzDecoder::new(file))
    } else {
        Box::new(file)
    };
    Ok(Box::new(BufReader::new(inner)))
}

fn is_gzip(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("gz"))
}

fn parse_header(line: &str) -> Option<(usize, usize)> {
    let mut parts = line.split_whitespace();
    let count = parts.next()?.parse().ok()?;
    let dim = parts.next()?.parse().ok()?;
    parts.next().is_none().then_some((count, dim))
}

/// Loads a word2vec text file (`.gz` is decompressed transparently).
///
/// The optional header `count dim` is detected by its shape. Duplicate words
/// keep their first vector.
pub fn load_word2vec_text(path: impl AsRef<Path>, unk_policy: UnkPolicy) -> Result<EmbeddingTable, EmbeddingError> {
    let path = path.as_ref();
    let parse_err = |line: usize, message: String| EmbeddingError::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };

    let reader = open_reader(path)?;
    let mut dim: Option<usize> = None;
    let mut declared_count = None;
    let mut saw_content = false;
    let mut words = Vec::new();
    let mut matrix = Vec::new();
    let mut seen: HashMap<String, ()> = HashMap::new();

    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(|source| EmbeddingError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        if !saw_content {
            saw_content = true;
            if let Some((count, d)) = parse_header(&line) {
                if d == 0 {
                    return Err(parse_err(lineno, "header declares dimension 0".into()));
                }
                dim = Some(d);
                declared_count = Some(count);
                continue;
            }
        }
        let mut parts = line.split_whitespace();
        let word = parts.next().expect("non-empty line has a token");
        let mut values = Vec::with_capacity(dim.unwrap_or(0));
        for tok in parts {
            let v: f64 = tok
                .parse()
                .map_err(|_| parse_err(lineno, format!("cannot parse {tok:?} as a number")))?;
            if !v.is_finite() {
                return Err(parse_err(lineno, format!("non-finite value {tok:?}")));
            }
            values.push(v);
        }
        match dim {
            None if values.is_empty() => {
                return Err(parse_err(lineno, "word has no vector".into()));
            }
            None => dim = Some(values.len()),
            Some(d) if d != values.len() => {
                return Err(parse_err(
                    lineno,
                    format!("vector has {} values, expected {d}", values.len()),
                ));
            }
            Some(_) => {}
        }
        if seen.insert(word.to_string(), ()).is_some() {
            log::warn!("{}, line {lineno}: duplicate word {word:?} ignored", path.display());
            continue;
        }
        words.push(word.to_string());
        matrix.extend(values);
    }

    if !saw_content {
        return Err(EmbeddingError::Empty {
            path: path.to_path_buf(),
        });
    }
    let dim = dim.expect("header or first vector fixes the dimension");
    if let Some(count) = declared_count {
        if count != words.len() {
            log::warn!(
                "{}: header declares {count} words, found {}",
                path.display(),
                words.len()
            );
        }
    }
    let rows = words
        .into_iter()
        .zip(matrix.chunks_exact(dim).map(<[f64]>::to_vec));
    EmbeddingTable::from_rows(dim, rows, unk_policy)
}

/// Writes the table in word2vec text format with a `count dim` header.
/// Values are written with six decimal places, so a reload is within 5e-7.
pub fn save_embeddings(table: &EmbeddingTable, path: impl AsRef<Path>) -> Result<(), EmbeddingError> {
    let path = path.as_ref();
    let io_err = |source| EmbeddingError::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = File::create(path).map_err(io_err)?;
    let mut out: Box<dyn Write> = if is_gzip(path) {
        Box::new(GzEncoder::new(file, Compression::default()))
    } else {
        Box::new(BufWriter::new(file))
    };
    let write = |out: &mut Box<dyn Write>| -> std::io::Result<()> {
        writeln!(out, "{} {}", table.len(), table.dim())?;
        for (r, word) in table.words().iter().enumerate() {
            write!(out, "{word}")?;
            for v in table.row(r) {
                write!(out, " {v:.6}")?;
            }
            writeln!(out)?;
        }
        out.flush()
    };
    write(&mut out).map_err(io_err)
}
