//! Binary hash vectors over the keyword vocabulary Φ and the schema vocabulary Ψ.

use std::collections::{BTreeSet, HashMap};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::keywords::{extract_keywords, Keyword, KeywordSet};
use super::lexer::{lex, TokenKind};
use super::SqlError;
use crate::corpus::{Instance, Schema};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum VocabTag {
    Keywords,
    Schema,
}

/// Indicator vector over a vocabulary, stored as a bitset. `dim` is the vocabulary
/// size at the time the vector was built.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct HashVector {
    vocab: VocabTag,
    dim: usize,
    words: Vec<u64>,
}

impl HashVector {
    pub fn empty(vocab: VocabTag, dim: usize) -> Self {
        HashVector {
            vocab,
            dim,
            words: vec![0; dim.div_ceil(64)],
        }
    }

    pub fn from_indices(vocab: VocabTag, dim: usize, indices: impl IntoIterator<Item = usize>) -> Self {
        let mut v = Self::empty(vocab, dim);
        for i in indices {
            v.set(i);
        }
        v
    }

    /// Set bit `i`. Panics if `i` is outside the vocabulary.
    pub fn set(&mut self, i: usize) {
        assert!(i < self.dim, "index {i} outside vocabulary of size {}", self.dim);
        self.words[i / 64] |= 1 << (i % 64);
    }

    pub fn contains(&self, i: usize) -> bool {
        i < self.dim && self.words[i / 64] & (1 << (i % 64)) != 0
    }

    pub fn vocab(&self) -> VocabTag {
        self.vocab
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn indices(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.dim).filter(move |&i| self.contains(i))
    }

    /// Number of positions where the two vectors differ, or `None` when they were
    /// built against different vocabularies or snapshots.
    pub fn symmetric_difference(&self, other: &HashVector) -> Option<u32> {
        if self.vocab != other.vocab || self.dim != other.dim {
            return None;
        }
        Some(
            self.words
                .iter()
                .zip(&other.words)
                .map(|(a, b)| (a ^ b).count_ones())
                .sum(),
        )
    }
}

/// Split a schema name into its tokens (`singer_id` → `singer`, `id`).
pub fn name_tokens(name: &str) -> impl Iterator<Item = String> + '_ {
    name.split(|c: char| c == '_' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
}

/// All table- and column-name tokens of a schema.
pub fn schema_tokens(schema: &Schema) -> BTreeSet<String> {
    schema
        .tables
        .iter()
        .chain(schema.columns.iter().map(|c| &c.name))
        .flat_map(|n| name_tokens(n))
        .collect()
}

#[derive(Debug, Clone, Default)]
struct VocabInner {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

/// Append-only vocabulary of schema tokens. Indices never change once assigned.
///
/// Writers append through `&mut self`; readers take a [`SchemaVocabSnapshot`], which
/// shares storage until the next append.
#[derive(Debug, Clone, Default)]
pub struct SchemaVocab {
    inner: Arc<VocabInner>,
}

impl SchemaVocab {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, token: &str) -> usize {
        if let Some(&i) = self.inner.index.get(token) {
            return i;
        }
        let inner = Arc::make_mut(&mut self.inner);
        let i = inner.tokens.len();
        inner.tokens.push(token.to_string());
        inner.index.insert(token.to_string(), i);
        i
    }

    pub fn extend_with_schema(&mut self, schema: &Schema) {
        for t in schema_tokens(schema) {
            self.insert(&t);
        }
    }

    pub fn len(&self) -> usize {
        self.inner.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inner.tokens.is_empty()
    }

    pub fn snapshot(&self) -> SchemaVocabSnapshot {
        SchemaVocabSnapshot {
            inner: Arc::clone(&self.inner),
        }
    }
}

/// Immutable view of a [`SchemaVocab`] at one point in time.
#[derive(Debug, Clone, Default)]
pub struct SchemaVocabSnapshot {
    inner: Arc<VocabInner>,
}

impl SchemaVocabSnapshot {
    pub fn len(&self) -> usize {
        self.inner.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inner.tokens.is_empty()
    }

    pub fn index_of(&self, token: &str) -> Option<usize> {
        self.inner.index.get(token).copied()
    }

    pub fn token(&self, i: usize) -> Option<&str> {
        self.inner.tokens.get(i).map(String::as_str)
    }

    pub fn from_tokens<S: AsRef<str>>(tokens: &[S]) -> Self {
        let mut v = SchemaVocab::new();
        for t in tokens {
            v.insert(t.as_ref());
        }
        v.snapshot()
    }
}

/// Where schema-hash bits come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SchemaHashSource {
    /// All table and column tokens of the instance's schema.
    #[default]
    Schema,
    /// Schema tokens mentioned in the instance's SQL; falls back to the schema for
    /// instances without SQL.
    Query,
}

/// Ψ-hash of an instance against a vocabulary snapshot.
pub fn schema_hash(
    instance: &Instance,
    schema: &Schema,
    vocab: &SchemaVocabSnapshot,
    source: SchemaHashSource,
) -> HashVector {
    let dim = vocab.len();
    let tokens: BTreeSet<String> = match (source, instance.sql()) {
        (SchemaHashSource::Query, Some(sql)) => match lex(sql) {
            Ok(toks) => toks
                .iter()
                .filter(|t| t.kind == TokenKind::Word)
                .flat_map(|t| name_tokens(&t.text).collect::<Vec<_>>())
                .collect(),
            Err(_) => schema_tokens(schema),
        },
        _ => schema_tokens(schema),
    };
    HashVector::from_indices(
        VocabTag::Schema,
        dim,
        tokens.iter().filter_map(|t| vocab.index_of(t)),
    )
}

pub fn keyword_hash(set: KeywordSet) -> HashVector {
    HashVector::from_indices(
        VocabTag::Keywords,
        Keyword::ALL.len(),
        set.iter().map(Keyword::index),
    )
}

/// Φ-hash of a SQL string.
pub fn struct_hash(sql: &str) -> Result<HashVector, SqlError> {
    Ok(keyword_hash(extract_keywords(sql)?))
}
