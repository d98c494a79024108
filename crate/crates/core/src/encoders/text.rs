//! Text features: pooled word vectors or externally produced embeddings.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::io::read_embedding_matrix;
use crate::error::{Error, Result};
use crate::numerics::DenseMatrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TextMode {
    /// Mean of pre-trained word vectors (GloVe text format).
    Pooled,
    /// An `n x D` matrix produced by an external sentence encoder.
    Precomputed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TextEncoderConfig {
    pub mode: TextMode,
    /// Word-vector file for `Pooled`, embedding matrix for `Precomputed`.
    pub path: PathBuf,
    pub dim: usize,
}

impl TextEncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::Config(
                "text embedding dimension must be positive".into(),
            ));
        }
        if self.path.as_os_str().is_empty() {
            return Err(Error::Config(format!(
                "{:?} text encoder needs a file path",
                self.mode
            )));
        }
        Ok(())
    }
}

/// Lowercases, splits on whitespace, and drops URLs and @-mentions.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(str::to_lowercase)
        .filter(|t| {
            !(t.starts_with('@')
                || t.starts_with("http://")
                || t.starts_with("https://")
                || t.starts_with("www."))
        })
        .collect()
}

#[derive(Clone, Debug)]
pub struct WordVectors {
    dim: usize,
    index: HashMap<String, usize>,
    vectors: Vec<f64>,
}

impl WordVectors {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            index: HashMap::new(),
            vectors: Vec::new(),
        }
    }

    /// Adds a word; the first occurrence of a word wins.
    pub fn insert(&mut self, word: &str, vector: &[f64]) -> Result<()> {
        if vector.len() != self.dim {
            return Err(Error::Shape(format!(
                "vector for {word:?} has {} entries, expected {}",
                vector.len(),
                self.dim
            )));
        }
        if !self.index.contains_key(word) {
            self.index.insert(word.to_string(), self.index.len());
            self.vectors.extend_from_slice(vector);
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    pub fn get(&self, word: &str) -> Option<&[f64]> {
        self.index
            .get(word)
            .map(|&k| &self.vectors[k * self.dim..(k + 1) * self.dim])
    }

    /// Words with their vectors, in insertion order.
    pub fn iter(&self) -> impl Iterator<Item = (&str, &[f64])> {
        let mut words: Vec<(&str, usize)> =
            self.index.iter().map(|(w, &k)| (w.as_str(), k)).collect();
        words.sort_unstable_by_key(|&(_, k)| k);
        words
            .into_iter()
            .map(|(w, k)| (w, &self.vectors[k * self.dim..(k + 1) * self.dim]))
    }

    fn slot(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }
}

/// Reads a `token v_1 ... v_D` file. With `keep`, only listed words are
/// retained, which keeps memory bounded for large vocabularies.
pub fn read_word_vectors(path: &Path, keep: Option<&HashSet<String>>) -> Result<WordVectors> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let ingest = |line: usize, message: String| Error::Ingest {
        path: path.display().to_string(),
        line,
        message,
    };
    let mut table: Option<WordVectors> = None;
    for (k, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(' ').filter(|f| !f.is_empty()).collect();
        let dim = match &table {
            Some(t) => t.dim,
            None => fields.len().saturating_sub(1),
        };
        if dim == 0 || fields.len() < dim + 1 {
            return Err(ingest(k + 1, format!("expected a token and {dim} values")));
        }
        let split = fields.len() - dim;
        let word = fields[..split].join(" ");
        let table = table.get_or_insert_with(|| WordVectors::new(dim));
        if keep.is_some_and(|set| !set.contains(&word)) {
            continue;
        }
        let values = fields[split..]
            .iter()
            .map(|f| f.parse::<f64>())
            .collect::<std::result::Result<Vec<f64>, _>>()
            .map_err(|e| ingest(k + 1, format!("bad vector value: {e}")))?;
        table.insert(&word, &values)?;
    }
    table.ok_or_else(|| ingest(0, "no word vectors".into()))
}

/// Writes `token v_1 ... v_D` lines in insertion order.
pub fn write_word_vectors(path: &Path, table: &WordVectors) -> Result<()> {
    let mut out = String::new();
    for (word, v) in table.iter() {
        out.push_str(word);
        for x in v {
            out.push(' ');
            out.push_str(&x.to_string());
        }
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Dimension of a word-vector file, taken from its first entry.
pub fn word_vector_dim(path: &Path) -> Result<usize> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    for line in BufReader::new(file).lines() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if !line.trim().is_empty() {
            return Ok(line
                .split(' ')
                .filter(|f| !f.is_empty())
                .count()
                .saturating_sub(1));
        }
    }
    Err(Error::Ingest {
        path: path.display().to_string(),
        line: 0,
        message: "no word vectors".into(),
    })
}

/// Mean of the in-vocabulary word vectors of each user; zero when none match.
///
/// Matched vectors are summed in vocabulary order so the result does not
/// depend on token order.
pub fn pool_word_vectors(tokens: &[Vec<String>], table: &WordVectors) -> DenseMatrix {
    let dim = table.dim();
    let mut out = DenseMatrix::zeros(tokens.len(), dim);
    for (u, user_tokens) in tokens.iter().enumerate() {
        let mut slots: Vec<usize> = user_tokens
            .iter()
            .filter_map(|t| table.slot(&t.to_lowercase()))
            .collect();
        if slots.is_empty() {
            continue;
        }
        slots.sort_unstable();
        let row = out.row_mut(u);
        for &s in &slots {
            for (o, v) in row.iter_mut().zip(&table.vectors[s * dim..(s + 1) * dim]) {
                *o += v;
            }
        }
        let count = slots.len() as f64;
        row.iter_mut().for_each(|v| *v /= count);
    }
    out
}

/// Reads an embedding matrix and checks it has one row per user.
pub fn load_precomputed_embeddings(path: &Path, n: usize) -> Result<DenseMatrix> {
    let m = read_embedding_matrix(path)?;
    if m.rows() != n {
        return Err(Error::Data(format!(
            "{}: embedding matrix has {} rows, expected {n} (one per user)",
            path.display(),
            m.rows()
        )));
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table() -> WordVectors {
        let mut t = WordVectors::new(3);
        t.insert("cat", &[1.0, 2.0, 3.0]).unwrap();
        t.insert("dog", &[3.0, 0.0, -1.0]).unwrap();
        t
    }

    fn toks(s: &str) -> Vec<String> {
        tokenize(s)
    }

    #[test]
    fn tokenizer_lowercases_and_strips() {
        assert_eq!(
            tokenize("Vote NOW @someone https://t.co/x www.a.com Today"),
            vec!["vote", "now", "today"]
        );
    }

    #[test]
    fn pooling_cases() {
        let t = table();
        let pooled = pool_word_vectors(&[vec![], toks("CAT"), toks("cat dog"), toks("zebra")], &t);
        assert_eq!(pooled.row(0), &[0.0, 0.0, 0.0]);
        assert_eq!(pooled.row(1), &[1.0, 2.0, 3.0]);
        assert_eq!(pooled.row(2), &[2.0, 1.0, 1.0]);
        assert_eq!(pooled.row(3), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn pooling_ignores_token_order() {
        let t = table();
        let a = pool_word_vectors(&[toks("cat dog cat zebra")], &t);
        let b = pool_word_vectors(&[toks("zebra cat cat dog")], &t);
        assert_eq!(a, b);
    }

    #[test]
    fn word_vector_file_round_trip_and_filter() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vec.txt");
        std::fs::write(&path, "the 0.1 0.2\nvote -1 2.5\n").unwrap();
        let t = read_word_vectors(&path, None).unwrap();
        assert_eq!(t.dim(), 2);
        assert_eq!(t.get("vote"), Some(&[-1.0, 2.5][..]));
        let keep: HashSet<String> = ["vote".to_string()].into();
        assert_eq!(read_word_vectors(&path, Some(&keep)).unwrap().len(), 1);
        assert!(read_word_vectors(&dir.path().join("missing.txt"), None).is_err());
        let out = dir.path().join("out.txt");
        write_word_vectors(&out, &t).unwrap();
        let back = read_word_vectors(&out, None).unwrap();
        assert_eq!(
            back.iter().collect::<Vec<_>>(),
            t.iter().collect::<Vec<_>>()
        );
        assert_eq!(word_vector_dim(&out).unwrap(), 2);
        std::fs::write(&path, "the 0.1 0.2\nvote -1\n").unwrap();
        let err = read_word_vectors(&path, None).unwrap_err().to_string();
        assert!(err.contains(":2:"), "{err}");
    }
}
