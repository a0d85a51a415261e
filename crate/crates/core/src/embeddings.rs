//! Vocabulary, word-vector files, tokenization and embedding lookup.
//!
//! The embedding matrix is the *wem* parameter set. Row 0 is always the
//! unknown-word row, initialized to the mean of the loaded vectors.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use crate::autodiff::{Parameters, Tape, Tensor, Var};
use crate::error::{Error, Result};

pub const UNK_TOKEN: &str = "<unk>";
pub const UNK_INDEX: usize = 0;

/// Dense token-to-row mapping with the unknown token at row 0.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Default for Vocabulary {
    fn default() -> Self {
        Self::new()
    }
}

impl Vocabulary {
    /// A vocabulary holding only the unknown token.
    pub fn new() -> Self {
        let mut index = HashMap::new();
        index.insert(UNK_TOKEN.to_string(), UNK_INDEX);
        Vocabulary {
            tokens: vec![UNK_TOKEN.to_string()],
            index,
        }
    }

    /// Adds a token if absent and returns its row. Existing tokens keep
    /// their first row.
    pub fn insert(&mut self, token: &str) -> (usize, bool) {
        if let Some(&i) = self.index.get(token) {
            return (i, false);
        }
        let i = self.tokens.len();
        self.tokens.push(token.to_string());
        self.index.insert(token.to_string(), i);
        (i, true)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    /// Never true: the unknown token is always present.
    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn get(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    /// Row of `token`, falling back to the unknown row.
    pub fn id(&self, token: &str) -> usize {
        self.get(token).unwrap_or(UNK_INDEX)
    }

    pub fn ids<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<usize> {
        tokens.iter().map(|t| self.id(t.as_ref())).collect()
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }
}

/// `V x d` matrix of word vectors.
#[derive(Debug, Clone)]
pub struct EmbeddingMatrix {
    matrix: Tensor,
}

impl EmbeddingMatrix {
    pub fn new(matrix: Tensor) -> Result<Self> {
        if matrix.shape().len() != 2 {
            return Err(Error::Contract(format!(
                "embedding matrix must be 2-D, got {:?}",
                matrix.shape()
            )));
        }
        Ok(EmbeddingMatrix { matrix })
    }

    pub fn dim(&self) -> usize {
        self.matrix.shape()[1]
    }

    pub fn rows(&self) -> usize {
        self.matrix.shape()[0]
    }

    pub fn tensor(&self) -> &Tensor {
        &self.matrix
    }

    pub fn tensor_mut(&mut self) -> &mut Tensor {
        &mut self.matrix
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let d = self.dim();
        &self.matrix.values()[i * d..(i + 1) * d]
    }
}

impl Parameters for EmbeddingMatrix {
    fn named_params(&self) -> Vec<(String, &Tensor)> {
        vec![("matrix".to_string(), &self.matrix)]
    }

    fn named_params_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        vec![("matrix".to_string(), &mut self.matrix)]
    }
}

/// Result of reading a word-vector file.
#[derive(Debug, Clone)]
pub struct LoadedEmbeddings {
    pub vocab: Vocabulary,
    pub matrix: EmbeddingMatrix,
    /// Lines skipped for a wrong dimension or unparseable values.
    pub malformed: usize,
    /// Lines skipped because their token was already present.
    pub duplicates: usize,
}

/// Builds a vocabulary and matrix from `(token, vector)` entries in order,
/// prepending the unknown row as the mean of all kept vectors.
pub fn build_embeddings<I>(entries: I, dim: usize) -> Result<(Vocabulary, EmbeddingMatrix, usize)>
where
    I: IntoIterator<Item = (String, Vec<f64>)>,
{
    if dim == 0 {
        return Err(Error::Contract("embedding dimension must be positive".into()));
    }
    let mut vocab = Vocabulary::new();
    let mut values = vec![0.0; dim];
    let mut duplicates = 0;
    for (token, vector) in entries {
        if vector.len() != dim {
            return Err(Error::Contract(format!(
                "vector for {token:?} has {} values, expected {dim}",
                vector.len()
            )));
        }
        if vocab.insert(&token).1 {
            values.extend_from_slice(&vector);
        } else {
            duplicates += 1;
        }
    }
    let n = vocab.len() - 1;
    if n == 0 {
        return Err(Error::Data("no valid embedding vectors".into()));
    }
    for j in 0..dim {
        let sum: f64 = (1..=n).map(|i| values[i * dim + j]).sum();
        values[j] = sum / n as f64;
    }
    let matrix = Tensor::new(vec![n + 1, dim], values)?;
    Ok((vocab, EmbeddingMatrix::new(matrix)?, duplicates))
}

fn parse_vector_line(line: &str, expected_dim: usize) -> Option<(String, Vec<f64>)> {
    let mut fields = line.split_ascii_whitespace();
    let token = fields.next()?;
    let values: Vec<f64> = fields
        .map(|f| f.parse::<f64>().ok().filter(|v| v.is_finite()))
        .collect::<Option<_>>()?;
    (values.len() == expected_dim).then(|| (token.to_string(), values))
}

/// Parses word vectors from text: `token v1 ... vd` per line, no header.
pub fn parse_embeddings(text: &str, expected_dim: usize) -> Result<LoadedEmbeddings> {
    let mut malformed = 0;
    let mut entries = Vec::new();
    for line in text.lines() {
        if line.trim().is_empty() {
            continue;
        }
        match parse_vector_line(line, expected_dim) {
            Some(entry) => entries.push(entry),
            None => malformed += 1,
        }
    }
    if entries.is_empty() {
        return Err(Error::Data(format!(
            "no valid {expected_dim}-dimensional vectors ({malformed} malformed lines)"
        )));
    }
    let (vocab, matrix, duplicates) = build_embeddings(entries, expected_dim)?;
    if malformed > 0 {
        log::warn!("skipped {malformed} malformed embedding lines");
    }
    Ok(LoadedEmbeddings {
        vocab,
        matrix,
        malformed,
        duplicates,
    })
}

/// Reads a UTF-8 word-vector file. Invalid byte sequences are replaced.
pub fn load_embeddings(path: impl AsRef<Path>, expected_dim: usize) -> Result<LoadedEmbeddings> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_embeddings(&String::from_utf8_lossy(&bytes), expected_dim).map_err(|e| match e {
        Error::Data(msg) => Error::Data(format!("{}: {msg}", path.display())),
        other => other,
    })
}

/// Lowercases, splits on whitespace, and peels leading and trailing ASCII
/// punctuation off each word as single-character tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for word in text.to_lowercase().split_whitespace() {
        let chars: Vec<char> = word.chars().collect();
        let start = chars
            .iter()
            .position(|c| !c.is_ascii_punctuation())
            .unwrap_or(chars.len());
        let end = chars
            .iter()
            .rposition(|c| !c.is_ascii_punctuation())
            .map_or(start, |i| i + 1);
        out.extend(chars[..start].iter().map(|c| c.to_string()));
        if start < end {
            out.push(chars[start..end].iter().collect());
        }
        out.extend(chars[end.max(start)..].iter().map(|c| c.to_string()));
    }
    out
}

/// Records the `T x d` stack of rows for `tokens`; unknown tokens use row 0.
pub fn lookup<S: AsRef<str>>(
    tape: &mut Tape,
    matrix: &EmbeddingMatrix,
    vocab: &Vocabulary,
    tokens: &[S],
) -> Result<Var> {
    if tokens.is_empty() {
        return Err(Error::EmptySentence);
    }
    tape.gather_rows(matrix.tensor(), &vocab.ids(tokens))
}
