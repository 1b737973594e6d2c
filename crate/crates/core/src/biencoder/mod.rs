//! Bi-encoder tagger: one encoder embeds tokens, a second embeds label
//! verbalizations, and a token's label is the argmax of their dot products.
//!
//! Training restricts the softmax to the labels present in the current
//! batch ([`build_batch_label_space`]), optionally padded with sampled
//! negatives. The O class is encoded from its verbalization like any other
//! label unless [`ORepresentation::Learned`] is selected.
//!
//! Only the built-in `tiny-mix` encoder family ships; pre-trained encoder
//! identifiers are accepted by the config but rejected at construction.
//! [`ScoringHead`] is the extension point for other heads.

mod checkpoint;
mod encoder;
mod scoring;
mod tokenize;

use std::collections::HashMap;
use std::path::Path;
use std::sync::Mutex;

use ndarray::{Array1, Array2};
use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use crate::corpus::{EntitySpan, Sentence, TypeInventory, DEFAULT_O_VERBALIZATION};
use crate::error::{Error, Result};
use crate::seed;

pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointManifest, MANIFEST_SCHEMA_VERSION};
pub use encoder::{ForwardCache, MixLayer, SequenceEncoder};
pub use scoring::{
    build_batch_label_space, cross_entropy_with_grad, decode_spans, in_batch_cross_entropy, log_softmax, predict,
    score, softmax_rows, BatchLabelSpace, TokenScores,
};
pub use tokenize::{Encoded, SubwordTokenizer};

/// Encoder family implemented in this crate.
pub const TINY_ENCODER_ID: &str = "tiny-mix";

/// Sentences per forward pass at evaluation time.
pub const EVAL_BATCH_SIZE: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubwordPooling {
    #[default]
    First,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ORepresentation {
    /// O is encoded from its verbalization by the label encoder.
    #[default]
    Verbalized,
    /// O is a free trainable vector.
    Learned,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub token_encoder_id: String,
    pub label_encoder_id: String,
    pub hidden_size: usize,
    pub max_sequence_length: usize,
    #[serde(default)]
    pub subword_pooling: SubwordPooling,
    pub num_layers: usize,
    pub vocab_buckets: usize,
    pub piece_chars: usize,
    pub o_verbalization: String,
    #[serde(default)]
    pub o_representation: ORepresentation,
    pub init_seed: u64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            token_encoder_id: TINY_ENCODER_ID.into(),
            label_encoder_id: TINY_ENCODER_ID.into(),
            hidden_size: 64,
            max_sequence_length: 512,
            subword_pooling: SubwordPooling::First,
            num_layers: 2,
            vocab_buckets: 4096,
            piece_chars: 4,
            o_verbalization: DEFAULT_O_VERBALIZATION.into(),
            o_representation: ORepresentation::Verbalized,
            init_seed: 0,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        for id in [&self.token_encoder_id, &self.label_encoder_id] {
            if id != TINY_ENCODER_ID {
                return Err(Error::UnsupportedEncoder(id.clone()));
            }
        }
        if self.hidden_size == 0 || self.max_sequence_length == 0 {
            return Err(Error::InvalidConfig("hidden_size and max_sequence_length must be positive".into()));
        }
        if self.vocab_buckets < 2 || self.piece_chars == 0 {
            return Err(Error::InvalidConfig("vocab_buckets must be >= 2 and piece_chars >= 1".into()));
        }
        if self.o_verbalization.trim().is_empty() {
            return Err(Error::InvalidConfig("empty O verbalization".into()));
        }
        Ok(())
    }

    pub fn tokenizer(&self) -> SubwordTokenizer {
        SubwordTokenizer {
            vocab_buckets: self.vocab_buckets,
            piece_chars: self.piece_chars,
        }
    }
}

/// All trainable tensors. Also used as the gradient container.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiEncoderParams {
    pub token: SequenceEncoder,
    pub label: SequenceEncoder,
    pub o_vector: Option<Array1<f64>>,
}

impl BiEncoderParams {
    pub fn zeros_like(&self) -> Self {
        Self {
            token: self.token.zeros_like(),
            label: self.label.zeros_like(),
            o_vector: self.o_vector.as_ref().map(|v| Array1::zeros(v.raw_dim())),
        }
    }

    pub fn slices(&self) -> Vec<&[f64]> {
        let mut out = self.token.slices();
        out.extend(self.label.slices());
        if let Some(o) = &self.o_vector {
            out.push(o.as_slice().expect("standard layout"));
        }
        out
    }

    pub fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = self.token.slices_mut();
        out.extend(self.label.slices_mut());
        if let Some(o) = &mut self.o_vector {
            out.push(o.as_slice_mut().expect("standard layout"));
        }
        out
    }

    pub fn global_norm(&self) -> f64 {
        self.slices().iter().flat_map(|s| s.iter()).map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn content_hash(&self) -> String {
        let mut bytes = Vec::new();
        for s in self.slices() {
            for v in s {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
        }
        seed::short_hash(&bytes)
    }
}

/// Token vectors for a batch plus, per sentence, the row of each original
/// token (`None` when the token was truncated away).
#[derive(Debug, Clone, PartialEq)]
pub struct TokenEncoding {
    pub e_t: Array2<f64>,
    pub alignment: Vec<Vec<Option<usize>>>,
}

/// Encode/score interface shared by bi-encoder style heads.
pub trait ScoringHead {
    fn encode_tokens(&self, sentences: &[&[String]]) -> Result<TokenEncoding>;

    fn encode_labels(&self, verbalizations: &[&str]) -> Result<Array2<f64>>;

    /// Label matrix for a local label space; row 0 is O.
    fn label_matrix(&self, space: &BatchLabelSpace, inventory: &TypeInventory) -> Result<Array2<f64>>;

    fn score(&self, e_t: &Array2<f64>, e_l: &Array2<f64>) -> Result<TokenScores> {
        score(e_t, e_l)
    }

    /// Predicted spans for every sentence, scoring the full label space of
    /// `inventory` (O first).
    fn predict_spans(&self, sentences: &[Sentence], inventory: &TypeInventory) -> Result<Vec<Vec<EntitySpan>>> {
        let space = BatchLabelSpace::full(inventory);
        let e_l = self.label_matrix(&space, inventory)?;
        let mut out = Vec::with_capacity(sentences.len());
        for chunk in sentences.chunks(EVAL_BATCH_SIZE) {
            let token_lists: Vec<&[String]> = chunk.iter().map(|s| s.tokens.as_slice()).collect();
            let enc = self.encode_tokens(&token_lists)?;
            let preds = predict(&self.score(&enc.e_t, &e_l)?);
            for (sentence, align) in chunk.iter().zip(&enc.alignment) {
                let per_token: Vec<usize> = align.iter().map(|r| r.map_or(0, |r| preds[r])).collect();
                debug_assert_eq!(per_token.len(), sentence.tokens.len());
                out.push(decode_spans(&per_token, &space.local_labels));
            }
        }
        Ok(out)
    }
}

type Activations = (Array2<f64>, ForwardCache);

#[derive(Debug)]
pub struct BiEncoder {
    config: EncoderConfig,
    params: BiEncoderParams,
    tokenizer: SubwordTokenizer,
    label_cache: Mutex<HashMap<String, Array1<f64>>>,
}

impl Clone for BiEncoder {
    fn clone(&self) -> Self {
        Self {
            config: self.config.clone(),
            params: self.params.clone(),
            tokenizer: self.tokenizer,
            label_cache: Mutex::new(HashMap::new()),
        }
    }
}

impl PartialEq for BiEncoder {
    fn eq(&self, other: &Self) -> bool {
        self.config == other.config && self.params == other.params
    }
}

impl BiEncoder {
    /// Randomly initialized model, seeded by `config.init_seed`.
    pub fn new(config: EncoderConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = seed::Rng::seed_from_u64(seed::derive(config.init_seed, "encoder-init", &[]));
        let token = SequenceEncoder::new(config.vocab_buckets, config.hidden_size, config.num_layers, &mut rng);
        let label = SequenceEncoder::new(config.vocab_buckets, config.hidden_size, config.num_layers, &mut rng);
        let o_vector = match config.o_representation {
            ORepresentation::Verbalized => None,
            ORepresentation::Learned => Some(Array1::zeros(config.hidden_size)),
        };
        Self::from_params(config, BiEncoderParams { token, label, o_vector })
    }

    pub fn from_params(config: EncoderConfig, params: BiEncoderParams) -> Result<Self> {
        config.validate()?;
        let h = config.hidden_size;
        for enc in [&params.token, &params.label] {
            if enc.hidden_size() != h || enc.vocab_size() != config.vocab_buckets || enc.layers.len() != config.num_layers {
                return Err(Error::Shape("encoder parameters do not match the configuration".into()));
            }
        }
        let wants_o = config.o_representation == ORepresentation::Learned;
        if wants_o != params.o_vector.is_some() || params.o_vector.as_ref().is_some_and(|o| o.len() != h) {
            return Err(Error::Shape("O vector does not match the configured O representation".into()));
        }
        Ok(Self {
            tokenizer: config.tokenizer(),
            config,
            params,
            label_cache: Mutex::new(HashMap::new()),
        })
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.config
    }

    pub fn params(&self) -> &BiEncoderParams {
        &self.params
    }

    /// Mutable parameter access; drops cached label vectors.
    pub fn params_mut(&mut self) -> &mut BiEncoderParams {
        self.label_cache.lock().expect("label cache poisoned").clear();
        &mut self.params
    }

    fn encode_sequence_label(&self, verbalization: &str) -> Result<Array1<f64>> {
        let words: Vec<&str> = verbalization.split_whitespace().collect();
        if words.is_empty() {
            return Err(Error::Empty("label verbalization"));
        }
        let enc = self.tokenizer.encode(&words, self.config.max_sequence_length);
        Ok(self.params.label.encode(&enc.ids).row(0).to_owned())
    }

    /// Forward pass over a batch keeping activations, for training.
    fn forward_tokens(&self, sentences: &[&Sentence]) -> Result<(Vec<Encoded>, Vec<Activations>)> {
        if sentences.is_empty() {
            return Err(Error::Empty("token batch"));
        }
        let encoded: Vec<Encoded> = sentences
            .iter()
            .map(|s| self.tokenizer.encode(&s.tokens, self.config.max_sequence_length))
            .collect();
        let outputs = encoded.iter().map(|e| self.params.token.forward(&e.ids)).collect();
        Ok((encoded, outputs))
    }

    /// Mean cross-entropy over a batch in the given label space, and the
    /// gradient for every parameter. With `loss_on_o = false`, O tokens are
    /// left out of the loss. Returns `None` when no token is scored.
    pub fn loss_and_grad(
        &self,
        batch: &[&Sentence],
        space: &BatchLabelSpace,
        inventory: &TypeInventory,
        loss_on_o: bool,
    ) -> Result<Option<(f64, BiEncoderParams)>> {
        let (encoded, token_out) = self.forward_tokens(batch)?;

        // gather first-piece rows and their gold ids
        let h = self.config.hidden_size;
        let mut rows: Vec<(usize, usize)> = Vec::new();
        let mut gold: Vec<Option<usize>> = Vec::new();
        for (si, (sentence, enc)) in batch.iter().zip(&encoded).enumerate() {
            for (pos, ty) in enc.first_piece.iter().zip(sentence.token_types()) {
                let Some(pos) = *pos else { continue };
                let local = match ty {
                    None => 0,
                    Some(t) => space.local(t).ok_or_else(|| Error::UnknownType(t.to_string()))?,
                };
                rows.push((si, pos));
                gold.push((loss_on_o || local != 0).then_some(local));
            }
        }
        if gold.iter().all(Option::is_none) {
            return Ok(None);
        }
        let mut e_t = Array2::zeros((rows.len(), h));
        for (r, &(si, pos)) in rows.iter().enumerate() {
            e_t.row_mut(r).assign(&token_out[si].0.row(pos));
        }

        let verbalizations = space.verbalizations(inventory)?;
        let mut label_out = Vec::with_capacity(space.len());
        let mut e_l = Array2::zeros((space.len(), h));
        for (c, v) in verbalizations.iter().enumerate() {
            if c == 0 {
                if let Some(o) = &self.params.o_vector {
                    e_l.row_mut(0).assign(o);
                    label_out.push(None);
                    continue;
                }
            }
            let words: Vec<&str> = v.split_whitespace().collect();
            let enc = self.tokenizer.encode(&words, self.config.max_sequence_length);
            let (out, cache) = self.params.label.forward(&enc.ids);
            e_l.row_mut(c).assign(&out.row(0));
            label_out.push(Some((out.nrows(), cache)));
        }

        let scores = score(&e_t, &e_l)?;
        let (loss, dlogits) = cross_entropy_with_grad(&scores, &gold)?;
        let d_e_t = dlogits.dot(&e_l);
        let d_e_l = dlogits.t().dot(&e_t);

        let mut grads = self.params.zeros_like();
        let mut d_tokens: Vec<Array2<f64>> = token_out.iter().map(|(o, _)| Array2::zeros(o.raw_dim())).collect();
        for (r, &(si, pos)) in rows.iter().enumerate() {
            let mut row = d_tokens[si].row_mut(pos);
            row += &d_e_t.row(r);
        }
        for ((_, cache), d) in token_out.iter().zip(d_tokens) {
            self.params.token.backward(cache, d, &mut grads.token);
        }
        for (c, entry) in label_out.iter().enumerate() {
            match entry {
                None => {
                    let o = grads.o_vector.as_mut().expect("learned O vector");
                    *o += &d_e_l.row(c);
                }
                Some((len, cache)) => {
                    let mut d = Array2::zeros((*len, h));
                    d.row_mut(0).assign(&d_e_l.row(c));
                    self.params.label.backward(cache, d, &mut grads.label);
                }
            }
        }
        Ok(Some((loss, grads)))
    }

    pub fn save_label_cache(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let cache = self.label_cache.lock().expect("label cache poisoned");
        let plain: std::collections::BTreeMap<&String, Vec<f64>> = cache.iter().map(|(k, v)| (k, v.to_vec())).collect();
        crate::corpus::jsonl::write_json(dir.join(self.cache_file_name()), &plain)
    }

    /// Loads label vectors cached for exactly these parameters, if any.
    pub fn load_label_cache(&self, dir: impl AsRef<Path>) -> Result<usize> {
        let path = dir.as_ref().join(self.cache_file_name());
        if !path.exists() {
            return Ok(0);
        }
        let plain: HashMap<String, Vec<f64>> = crate::corpus::jsonl::read_json(&path)?;
        let mut cache = self.label_cache.lock().expect("label cache poisoned");
        let n = plain.len();
        for (k, v) in plain {
            if v.len() == self.config.hidden_size {
                cache.insert(k, Array1::from(v));
            }
        }
        Ok(n)
    }

    fn cache_file_name(&self) -> String {
        format!("labels-{}-{}.json", self.config.label_encoder_id, self.params.content_hash())
    }
}

impl ScoringHead for BiEncoder {
    fn encode_tokens(&self, sentences: &[&[String]]) -> Result<TokenEncoding> {
        if sentences.is_empty() {
            return Err(Error::Empty("token batch"));
        }
        let h = self.config.hidden_size;
        let mut alignment = Vec::with_capacity(sentences.len());
        let mut rows: Vec<Array1<f64>> = Vec::new();
        for tokens in sentences {
            let enc = self.tokenizer.encode(tokens, self.config.max_sequence_length);
            let out = self.params.token.encode(&enc.ids);
            let align = enc
                .first_piece
                .iter()
                .map(|p| {
                    p.map(|pos| {
                        rows.push(out.row(pos).to_owned());
                        rows.len() - 1
                    })
                })
                .collect();
            alignment.push(align);
        }
        let mut e_t = Array2::zeros((rows.len(), h));
        for (r, v) in rows.iter().enumerate() {
            e_t.row_mut(r).assign(v);
        }
        Ok(TokenEncoding { e_t, alignment })
    }

    /// Summary-position vectors, served from the cache when available.
    fn encode_labels(&self, verbalizations: &[&str]) -> Result<Array2<f64>> {
        let mut out = Array2::zeros((verbalizations.len(), self.config.hidden_size));
        for (i, v) in verbalizations.iter().enumerate() {
            let cached = self.label_cache.lock().expect("label cache poisoned").get(*v).cloned();
            let vec = match cached {
                Some(vec) => vec,
                None => {
                    let vec = self.encode_sequence_label(v)?;
                    self.label_cache
                        .lock()
                        .expect("label cache poisoned")
                        .insert(v.to_string(), vec.clone());
                    vec
                }
            };
            out.row_mut(i).assign(&vec);
        }
        Ok(out)
    }

    fn label_matrix(&self, space: &BatchLabelSpace, inventory: &TypeInventory) -> Result<Array2<f64>> {
        let verbalizations = space.verbalizations(inventory)?;
        match &self.params.o_vector {
            None => self.encode_labels(&verbalizations),
            Some(o) => {
                let mut m = Array2::zeros((space.len(), self.config.hidden_size));
                m.row_mut(0).assign(o);
                if space.len() > 1 {
                    let rest = self.encode_labels(&verbalizations[1..])?;
                    m.slice_mut(ndarray::s![1.., ..]).assign(&rest);
                }
                Ok(m)
            }
        }
    }
}
