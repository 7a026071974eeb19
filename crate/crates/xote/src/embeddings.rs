//! Word embedding tables: fastText text ingestion, vocabulary capping,
//! frozen lookup and orthogonal projection into a shared space.

use crate::container;
use crate::error::{Error, Result};
use crate::tensor::Matrix;
use log::warn;
use std::collections::HashMap;
use std::io::{BufRead, Read, Write};

/// Default vocabulary cap: the most frequent 50,000 words per language, in
/// embedding-file order.
pub const DEFAULT_VOCAB_CAP: usize = 50_000;

const XEMB_MAGIC: &[u8; 4] = b"XEMB";

/// An immutable per-language word -> vector table.
///
/// Vectors are frozen: nothing in the training path ever writes to them.
/// File order is preserved (fastText files list words by frequency).
#[derive(Debug, Clone)]
pub struct EmbeddingTable {
    language: String,
    dim: usize,
    vocab: Vec<String>,
    index: HashMap<String, usize>,
    vectors: Matrix,
    /// Fall back to a lowercased lookup before declaring a token OOV.
    pub lowercase_fallback: bool,
}

impl EmbeddingTable {
    pub fn new(language: impl Into<String>, dim: usize) -> EmbeddingTable {
        EmbeddingTable {
            language: language.into(),
            dim,
            vocab: Vec::new(),
            index: HashMap::new(),
            vectors: Matrix::zeros(0, dim),
            lowercase_fallback: true,
        }
    }

    pub fn language(&self) -> &str {
        &self.language
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vocab.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vocab.is_empty()
    }

    pub fn vocab(&self) -> &[String] {
        &self.vocab
    }

    pub fn vectors(&self) -> &Matrix {
        &self.vectors
    }

    pub fn word_index(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    pub fn vector(&self, idx: usize) -> &[f64] {
        self.vectors.row(idx)
    }

    /// Build from parallel word/vector lists (mostly for tests and synthetic
    /// data; real tables come from [`load_vectors`]).
    pub fn from_entries(
        language: impl Into<String>,
        dim: usize,
        entries: impl IntoIterator<Item = (String, Vec<f64>)>,
    ) -> Result<EmbeddingTable> {
        let mut table = EmbeddingTable::new(language, dim);
        let mut data: Vec<f64> = Vec::new();
        for (word, vec) in entries {
            if vec.len() != dim {
                return Err(Error::Config(format!(
                    "vector for {word:?} has dim {}, expected {dim}",
                    vec.len()
                )));
            }
            if table.index.contains_key(&word) {
                return Err(Error::Config(format!("duplicate word {word:?}")));
            }
            table.index.insert(word.clone(), table.vocab.len());
            table.vocab.push(word);
            data.extend_from_slice(&vec);
        }
        table.vectors = Matrix::from_vec(table.vocab.len(), dim, data)?;
        Ok(table)
    }

    /// Exact lookup, then (if enabled) lowercase fallback, then the zero
    /// vector. The flag reports whether the token was found in-vocabulary.
    pub fn lookup(&self, token_text: &str) -> (Vec<f64>, bool) {
        if let Some(&i) = self.index.get(token_text) {
            return (self.vectors.row(i).to_vec(), true);
        }
        if self.lowercase_fallback {
            let lower = token_text.to_lowercase();
            if lower != token_text {
                if let Some(&i) = self.index.get(lower.as_str()) {
                    return (self.vectors.row(i).to_vec(), true);
                }
            }
        }
        (vec![0.0; self.dim], false)
    }

    /// Replace every vector `v` by `v W`. `W` must be square with side
    /// `dim`; vocabulary order is preserved.
    pub fn apply_projection(&self, w: &Matrix) -> Result<EmbeddingTable> {
        if w.rows() != self.dim || w.cols() != self.dim {
            return Err(Error::Config(format!(
                "projection is {}x{}, embedding dim is {}",
                w.rows(),
                w.cols(),
                self.dim
            )));
        }
        let vectors = self.vectors.matmul(w)?;
        Ok(EmbeddingTable {
            language: self.language.clone(),
            dim: self.dim,
            vocab: self.vocab.clone(),
            index: self.index.clone(),
            vectors,
            lowercase_fallback: self.lowercase_fallback,
        })
    }

    /// Write the `.vec` text form: header line, then one word per line with
    /// its values (shortest f64 representation, which round-trips exactly).
    pub fn write_vec_text(&self, w: &mut impl Write) -> Result<()> {
        writeln!(w, "{} {}", self.vocab.len(), self.dim)?;
        for (i, word) in self.vocab.iter().enumerate() {
            write!(w, "{word}")?;
            for v in self.vectors.row(i) {
                write!(w, " {v}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    /// Binary XEMB cache: magic, version, language, vocab count, dim, the
    /// length-prefixed words, then all vectors as little-endian f32 row-major.
    pub fn write_xemb(&self, w: &mut impl Write) -> Result<()> {
        container::write_magic(w, XEMB_MAGIC)?;
        container::write_string(w, &self.language)?;
        container::write_u32(w, self.vocab.len() as u32)?;
        container::write_u32(w, self.dim as u32)?;
        for word in &self.vocab {
            container::write_string(w, word)?;
        }
        container::write_f32_values(w, self.vectors.data().iter().map(|&v| v as f32))?;
        Ok(())
    }

    pub fn read_xemb(r: &mut impl Read) -> Result<EmbeddingTable> {
        container::read_magic(r, XEMB_MAGIC)?;
        let language = container::read_string(r)?;
        let count = container::read_u32(r)? as usize;
        let dim = container::read_u32(r)? as usize;
        let mut table = EmbeddingTable::new(language, dim);
        for i in 0..count {
            let word = container::read_string(r)?;
            if table.index.insert(word.clone(), i).is_some() {
                return Err(Error::Format(format!("duplicate word {word:?} in XEMB")));
            }
            table.vocab.push(word);
        }
        let raw = container::read_f32_values(r, count * dim)?;
        table.vectors = Matrix::from_vec(count, dim, raw.into_iter().map(f64::from).collect())?;
        Ok(table)
    }
}

/// Parse a fastText `.vec` text stream, keeping the first `cap` distinct
/// words in file order.
///
/// The optional header line `<count> <dim>` is consumed when present;
/// otherwise the dimensionality is inferred from the first data line.
/// Duplicate words keep their first vector (with a warning); a line whose
/// value count disagrees with the established dimensionality, or that
/// contains a non-finite value, is a format error naming the line.
pub fn load_vectors(reader: impl BufRead, language: &str, cap: usize) -> Result<EmbeddingTable> {
    let mut dim: Option<usize> = None;
    let mut vocab: Vec<String> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut data: Vec<f64> = Vec::new();

    for (lineno, line) in reader.lines().enumerate() {
        let lineno = lineno + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split_whitespace();
        let word = fields.next().expect("non-empty line has a first field");
        let values: Vec<&str> = fields.collect();

        if lineno == 1 && values.len() == 1 {
            // Header line "<count> <dim>": exactly two integer fields.
            if let (Ok(_count), Ok(d)) = (word.parse::<usize>(), values[0].parse::<usize>()) {
                dim = Some(d);
                continue;
            }
        }

        if values.is_empty() {
            return Err(Error::Format(format!(
                "line {lineno}: no values after word"
            )));
        }
        let d = *dim.get_or_insert(values.len());
        if values.len() != d {
            return Err(Error::Format(format!(
                "line {lineno}: expected {d} values, found {}",
                values.len()
            )));
        }
        if index.contains_key(word) {
            warn!("duplicate word {word:?} at line {lineno}; keeping first occurrence");
            continue;
        }
        if vocab.len() >= cap {
            break;
        }
        let mut row = Vec::with_capacity(d);
        for v in &values {
            let x: f64 = v
                .parse()
                .map_err(|e| Error::Format(format!("line {lineno}: bad number {v:?}: {e}")))?;
            if !x.is_finite() {
                return Err(Error::Format(format!(
                    "line {lineno}: non-finite value {v:?}"
                )));
            }
            row.push(x);
        }
        index.insert(word.to_string(), vocab.len());
        vocab.push(word.to_string());
        data.extend_from_slice(&row);
    }

    let dim = dim.ok_or_else(|| Error::Format("empty embedding file".into()))?;
    let vectors = Matrix::from_vec(vocab.len(), dim, data)?;
    Ok(EmbeddingTable {
        language: language.to_string(),
        dim,
        vocab,
        index,
        vectors,
        lowercase_fallback: true,
    })
}

/// The embedding tables of all languages participating in one experiment,
/// all sharing a single vector-space dimensionality.
#[derive(Debug, Clone, Default)]
pub struct EmbeddingSet {
    tables: std::collections::BTreeMap<String, EmbeddingTable>,
}

impl EmbeddingSet {
    pub fn new() -> EmbeddingSet {
        EmbeddingSet::default()
    }

    pub fn insert(&mut self, table: EmbeddingTable) -> Result<()> {
        if let Some(existing) = self.tables.values().next() {
            if existing.dim() != table.dim() {
                return Err(Error::Config(format!(
                    "embedding dim mismatch: {} has {}, {} has {}",
                    existing.language(),
                    existing.dim(),
                    table.language(),
                    table.dim()
                )));
            }
        }
        self.tables.insert(table.language().to_string(), table);
        Ok(())
    }

    pub fn get(&self, language: &str) -> Result<&EmbeddingTable> {
        self.tables.get(language).ok_or_else(|| {
            Error::Config(format!(
                "no embedding table loaded for language {language:?}"
            ))
        })
    }

    pub fn dim(&self) -> Option<usize> {
        self.tables.values().next().map(|t| t.dim())
    }

    pub fn languages(&self) -> impl Iterator<Item = &str> {
        self.tables.keys().map(String::as_str)
    }
}
