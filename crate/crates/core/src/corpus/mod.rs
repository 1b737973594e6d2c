//! Span-based NER data model shared by every phase: building, splitting,
//! training and evaluation all pass [`Corpus`] values around.
//!
//! Spans are token-index ranges (`start` inclusive, `end` exclusive). Tags
//! such as BIO only exist at the file boundary; see [`column`] and [`jsonl`].

pub mod column;
pub mod jsonl;
mod ops;

use std::collections::HashSet;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use ops::{compute_stats, downsample_to_mention_count, mask_types, CorpusStats};

/// Identifier of the non-entity class.
pub const O_ID: &str = "O";
/// Verbalization used for the non-entity class unless configured otherwise.
pub const DEFAULT_O_VERBALIZATION: &str = "none, not an entity";

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EntitySpan {
    pub start: usize,
    pub end: usize,
    #[serde(rename = "type")]
    pub type_id: String,
}

impl EntitySpan {
    pub fn new(start: usize, end: usize, type_id: impl Into<String>) -> Self {
        Self {
            start,
            end,
            type_id: type_id.into(),
        }
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    pub fn overlaps(&self, other: &EntitySpan) -> bool {
        self.start < other.end && other.start < self.end
    }
}

/// What to do with overlapping spans at ingest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OverlapPolicy {
    #[default]
    Reject,
    /// Keep the longest span, then the leftmost, dropping whatever it overlaps.
    Repair,
}

/// Keeps a non-overlapping subset: longest first, ties to the leftmost.
/// The result is ordered by start.
pub fn resolve_overlaps(mut spans: Vec<EntitySpan>) -> Vec<EntitySpan> {
    spans.sort_by(|a, b| b.len().cmp(&a.len()).then(a.start.cmp(&b.start)));
    let mut kept: Vec<EntitySpan> = Vec::with_capacity(spans.len());
    for span in spans {
        if kept.iter().all(|k| !k.overlaps(&span)) {
            kept.push(span);
        }
    }
    kept.sort();
    kept
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sentence {
    pub tokens: Vec<String>,
    #[serde(default)]
    pub spans: Vec<EntitySpan>,
}

impl Sentence {
    /// Builds a sentence, sorting spans by position and checking bounds and overlap.
    pub fn new(tokens: Vec<String>, spans: Vec<EntitySpan>) -> Result<Self> {
        let mut s = Self { tokens, spans };
        s.spans.sort();
        s.validate()?;
        Ok(s)
    }

    pub fn unannotated(tokens: Vec<String>) -> Self {
        Self {
            tokens,
            spans: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.tokens.is_empty() {
            return Err(Error::InvalidCorpus("sentence without tokens".into()));
        }
        for span in &self.spans {
            if span.start >= span.end || span.end > self.tokens.len() {
                return Err(Error::InvalidCorpus(format!(
                    "span ({}, {}, {}) out of bounds for sentence of length {}",
                    span.start,
                    span.end,
                    span.type_id,
                    self.tokens.len()
                )));
            }
        }
        for (i, a) in self.spans.iter().enumerate() {
            if let Some(b) = self.spans[i + 1..].iter().find(|b| a.overlaps(b)) {
                return Err(Error::InvalidCorpus(format!(
                    "overlapping spans ({}, {}, {}) and ({}, {}, {})",
                    a.start, a.end, a.type_id, b.start, b.end, b.type_id
                )));
            }
        }
        Ok(())
    }

    /// Per-token type ids; `None` marks O tokens.
    pub fn token_types(&self) -> Vec<Option<&str>> {
        let mut out = vec![None; self.tokens.len()];
        for span in &self.spans {
            for slot in &mut out[span.start..span.end] {
                *slot = Some(span.type_id.as_str());
            }
        }
        out
    }

    pub fn has_type(&self, type_id: &str) -> bool {
        self.spans.iter().any(|s| s.type_id == type_id)
    }
}

/// Ordered mapping from type id to its natural-language verbalization.
/// The O class is always present at index 0.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "IndexMap<String, String>", into = "IndexMap<String, String>")]
pub struct TypeInventory {
    entries: IndexMap<String, String>,
}

impl Default for TypeInventory {
    fn default() -> Self {
        Self::new(DEFAULT_O_VERBALIZATION)
    }
}

impl TypeInventory {
    pub fn new(o_verbalization: &str) -> Self {
        let mut entries = IndexMap::new();
        entries.insert(O_ID.to_string(), o_verbalization.to_string());
        Self { entries }
    }

    /// Inventory whose verbalizations equal the type ids.
    pub fn from_ids<I, S>(ids: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut inv = Self::default();
        for id in ids {
            let id = id.into();
            let verbalization = id.clone();
            inv.entries.entry(id).or_insert(verbalization);
        }
        inv
    }

    /// Adds a type, keeping the existing verbalization if the id is already known.
    /// Returns the index of the type.
    pub fn insert(&mut self, type_id: impl Into<String>, verbalization: impl Into<String>) -> Result<usize> {
        let type_id = type_id.into();
        let verbalization = verbalization.into();
        if type_id.is_empty() {
            return Err(Error::InvalidCorpus("empty type id".into()));
        }
        if verbalization.trim().is_empty() {
            return Err(Error::InvalidCorpus(format!("type `{type_id}` has an empty verbalization")));
        }
        let entry = self.entries.entry(type_id);
        let index = entry.index();
        entry.or_insert(verbalization);
        Ok(index)
    }

    pub fn set_verbalization(&mut self, type_id: &str, verbalization: impl Into<String>) -> Result<()> {
        let verbalization = verbalization.into();
        if verbalization.trim().is_empty() {
            return Err(Error::InvalidCorpus(format!("type `{type_id}` has an empty verbalization")));
        }
        match self.entries.get_mut(type_id) {
            Some(v) => {
                *v = verbalization;
                Ok(())
            }
            None => Err(Error::UnknownType(type_id.to_string())),
        }
    }

    pub fn contains(&self, type_id: &str) -> bool {
        self.entries.contains_key(type_id)
    }

    pub fn verbalization(&self, type_id: &str) -> Option<&str> {
        self.entries.get(type_id).map(String::as_str)
    }

    pub fn index_of(&self, type_id: &str) -> Option<usize> {
        self.entries.get_index_of(type_id)
    }

    pub fn o_verbalization(&self) -> &str {
        &self.entries[0]
    }

    /// Number of entries including O.
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    /// Number of entity types, excluding O.
    pub fn num_types(&self) -> usize {
        self.entries.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.num_types() == 0
    }

    /// All entries, O first.
    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    /// Entity types without O, in inventory order.
    pub fn types(&self) -> impl Iterator<Item = (&str, &str)> {
        self.iter().skip(1)
    }

    pub fn type_ids(&self) -> impl Iterator<Item = &str> {
        self.types().map(|(id, _)| id)
    }

    /// Restricts to `keep` ∪ {O}, preserving order.
    pub fn restrict(&self, keep: &HashSet<&str>) -> Self {
        let entries = self
            .entries
            .iter()
            .enumerate()
            .filter(|(i, (k, _))| *i == 0 || keep.contains(k.as_str()))
            .map(|(_, (k, v))| (k.clone(), v.clone()))
            .collect();
        Self { entries }
    }

    /// Stable content hash used in checkpoint manifests and reports.
    pub fn content_hash(&self) -> String {
        let mut bytes = Vec::new();
        for (k, v) in self.iter() {
            bytes.extend_from_slice(k.as_bytes());
            bytes.push(0);
            bytes.extend_from_slice(v.as_bytes());
            bytes.push(0);
        }
        crate::seed::short_hash(&bytes)
    }
}

impl TryFrom<IndexMap<String, String>> for TypeInventory {
    type Error = Error;

    fn try_from(map: IndexMap<String, String>) -> Result<Self> {
        let o = match map.get_index(0) {
            Some((k, v)) if k == O_ID => v.clone(),
            _ => return Err(Error::InvalidCorpus("inventory must start with O".into())),
        };
        let mut inv = TypeInventory::new(&o);
        for (k, v) in map.into_iter().skip(1) {
            if inv.contains(&k) {
                return Err(Error::InvalidCorpus(format!("duplicate type id `{k}`")));
            }
            inv.insert(k, v)?;
        }
        Ok(inv)
    }
}

impl From<TypeInventory> for IndexMap<String, String> {
    fn from(inv: TypeInventory) -> Self {
        inv.entries
    }
}

/// Which dataset partition a corpus was drawn from. Training refuses `Test`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Partition {
    Train,
    Test,
    #[default]
    Unspecified,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Corpus {
    pub sentences: Vec<Sentence>,
    pub inventory: TypeInventory,
    #[serde(default = "default_language")]
    pub language: String,
    #[serde(default)]
    pub provenance: String,
    #[serde(default)]
    pub partition: Partition,
}

fn default_language() -> String {
    "en".to_string()
}

impl Corpus {
    pub fn new(sentences: Vec<Sentence>, inventory: TypeInventory) -> Result<Self> {
        let corpus = Self {
            sentences,
            inventory,
            language: default_language(),
            provenance: String::new(),
            partition: Partition::Unspecified,
        };
        corpus.validate()?;
        Ok(corpus)
    }

    /// Builds a corpus whose inventory lists the observed types in order of
    /// first appearance, each verbalized by its own id.
    pub fn from_sentences(sentences: Vec<Sentence>) -> Result<Self> {
        let inventory = TypeInventory::from_ids(
            sentences
                .iter()
                .flat_map(|s| s.spans.iter().map(|sp| sp.type_id.clone())),
        );
        Self::new(sentences, inventory)
    }

    pub fn empty_like(&self) -> Self {
        Self {
            sentences: Vec::new(),
            inventory: self.inventory.clone(),
            language: self.language.clone(),
            provenance: self.provenance.clone(),
            partition: self.partition,
        }
    }

    pub fn with_partition(mut self, partition: Partition) -> Self {
        self.partition = partition;
        self
    }

    pub fn with_provenance(mut self, provenance: impl Into<String>) -> Self {
        self.provenance = provenance.into();
        self
    }

    pub fn validate(&self) -> Result<()> {
        for (i, sentence) in self.sentences.iter().enumerate() {
            sentence
                .validate()
                .map_err(|e| Error::InvalidCorpus(format!("sentence {i}: {e}")))?;
            for span in &sentence.spans {
                if span.type_id == O_ID || !self.inventory.contains(&span.type_id) {
                    return Err(Error::InvalidCorpus(format!(
                        "sentence {i}: span type `{}` is not in the inventory",
                        span.type_id
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    pub fn mention_count(&self) -> usize {
        self.sentences.iter().map(|s| s.spans.len()).sum()
    }

    /// Mentions per type in inventory order (O excluded, unused types at 0).
    pub fn type_mention_counts(&self) -> IndexMap<String, usize> {
        let mut counts: IndexMap<String, usize> =
            self.inventory.type_ids().map(|id| (id.to_string(), 0)).collect();
        for span in self.sentences.iter().flat_map(|s| &s.spans) {
            if let Some(c) = counts.get_mut(&span.type_id) {
                *c += 1;
            }
        }
        counts
    }

    /// Number of pairs of directly adjacent gold spans sharing a type.
    /// IO decoding cannot separate these.
    pub fn adjacent_same_type_pairs(&self) -> usize {
        self.sentences
            .iter()
            .map(|s| {
                s.spans
                    .windows(2)
                    .filter(|w| w[0].end == w[1].start && w[0].type_id == w[1].type_id)
                    .count()
            })
            .sum()
    }
}
