use std::collections::HashMap;

use ndarray::{Array1, Array2, Axis};
use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::corpus::{EntitySpan, TypeInventory, O_ID};
use crate::error::{Error, Result};
use crate::seed::Rng;

/// Token-by-label logits; column 0 is O.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenScores {
    pub logits: Array2<f64>,
}

impl TokenScores {
    pub fn num_tokens(&self) -> usize {
        self.logits.nrows()
    }

    pub fn num_labels(&self) -> usize {
        self.logits.ncols()
    }
}

/// `logits = e_t · e_lᵀ`.
pub fn score(e_t: &Array2<f64>, e_l: &Array2<f64>) -> Result<TokenScores> {
    if e_t.ncols() != e_l.ncols() {
        return Err(Error::Shape(format!(
            "token vectors have {} dimensions, label vectors {}",
            e_t.ncols(),
            e_l.ncols()
        )));
    }
    Ok(TokenScores {
        logits: e_t.dot(&e_l.t()),
    })
}

/// Row-wise argmax; exact ties go to the lowest local index, so O wins them.
pub fn predict(scores: &TokenScores) -> Vec<usize> {
    scores
        .logits
        .outer_iter()
        .map(|row| {
            let mut best = 0;
            for (j, &v) in row.iter().enumerate().skip(1) {
                if v > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect()
}

pub fn log_softmax(row: ndarray::ArrayView1<f64>) -> Array1<f64> {
    let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    let lse = max + row.mapv(|v| (v - max).exp()).sum().ln();
    row.mapv(|v| v - lse)
}

/// Mean token-level cross-entropy over all rows.
pub fn in_batch_cross_entropy(scores: &TokenScores, gold: &[usize]) -> Result<f64> {
    let gold: Vec<Option<usize>> = gold.iter().copied().map(Some).collect();
    Ok(cross_entropy_with_grad(scores, &gold)?.0)
}

/// Mean cross-entropy over rows whose gold id is `Some`, and its gradient
/// with respect to the logits (excluded rows get zero gradient).
pub fn cross_entropy_with_grad(scores: &TokenScores, gold: &[Option<usize>]) -> Result<(f64, Array2<f64>)> {
    let logits = &scores.logits;
    if gold.len() != logits.nrows() {
        return Err(Error::Shape(format!(
            "{} gold ids for {} scored tokens",
            gold.len(),
            logits.nrows()
        )));
    }
    if let Some(bad) = gold.iter().flatten().find(|&&g| g >= logits.ncols()) {
        return Err(Error::Shape(format!(
            "gold id {bad} outside a label space of {}",
            logits.ncols()
        )));
    }
    let n = gold.iter().filter(|g| g.is_some()).count();
    if n == 0 {
        return Err(Error::Empty("no scored tokens in the loss"));
    }
    let mut grad = Array2::zeros(logits.raw_dim());
    let mut total = 0.0;
    for ((row, g), mut grow) in logits.outer_iter().zip(gold).zip(grad.outer_iter_mut()) {
        let Some(g) = *g else { continue };
        let lp = log_softmax(row);
        total -= lp[g];
        grow.assign(&lp.mapv(f64::exp));
        grow[g] -= 1.0;
    }
    let n = n as f64;
    grad.mapv_inplace(|v| v / n);
    Ok((total / n, grad))
}

/// Per-batch label space: O at local index 0, then the gold types of the
/// batch, then any sampled negatives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchLabelSpace {
    pub local_labels: Vec<String>,
    pub global_to_local: HashMap<String, usize>,
}

impl BatchLabelSpace {
    pub fn from_labels<I, S>(labels: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut space = Self {
            local_labels: vec![O_ID.to_string()],
            global_to_local: HashMap::from([(O_ID.to_string(), 0)]),
        };
        for l in labels {
            space.push(l.into());
        }
        space
    }

    /// Space covering a whole inventory.
    pub fn full(inventory: &TypeInventory) -> Self {
        Self::from_labels(inventory.type_ids())
    }

    fn push(&mut self, label: String) {
        if !self.global_to_local.contains_key(&label) {
            self.global_to_local.insert(label.clone(), self.local_labels.len());
            self.local_labels.push(label);
        }
    }

    pub fn len(&self) -> usize {
        self.local_labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.local_labels.is_empty()
    }

    pub fn local(&self, type_id: &str) -> Option<usize> {
        self.global_to_local.get(type_id).copied()
    }

    /// Verbalizations in local order.
    pub fn verbalizations<'a>(&self, inventory: &'a TypeInventory) -> Result<Vec<&'a str>> {
        self.local_labels
            .iter()
            .map(|l| inventory.verbalization(l).ok_or_else(|| Error::UnknownType(l.clone())))
            .collect()
    }
}

/// O plus the types present in the batch gold, in order of appearance.
/// If `negatives_m` exceeds the number of batch types, further labels are
/// drawn uniformly without replacement from the rest of the inventory until
/// the space holds `negatives_m + 1` entries or the inventory runs out.
pub fn build_batch_label_space<'a, I>(
    batch_types: I,
    inventory: &TypeInventory,
    negatives_m: usize,
    rng: &mut Rng,
) -> BatchLabelSpace
where
    I: IntoIterator<Item = &'a str>,
{
    let mut space = BatchLabelSpace::from_labels(batch_types);
    let present = space.len() - 1;
    if negatives_m > present {
        let rest: Vec<&str> = inventory.type_ids().filter(|t| space.local(t).is_none()).collect();
        let wanted = (negatives_m - present).min(rest.len());
        for i in index::sample(rng, rest.len(), wanted) {
            space.push(rest[i].to_string());
        }
    }
    space
}

/// Maximal runs of one non-O label become spans (IO decoding).
pub fn decode_spans(predictions: &[usize], local_labels: &[String]) -> Vec<EntitySpan> {
    let mut spans = Vec::new();
    let mut i = 0;
    while i < predictions.len() {
        let label = predictions[i];
        let mut j = i + 1;
        while j < predictions.len() && predictions[j] == label {
            j += 1;
        }
        if label != 0 {
            spans.push(EntitySpan::new(i, j, local_labels[label].clone()));
        }
        i = j;
    }
    spans
}

/// Row-wise softmax, for callers that want probabilities.
pub fn softmax_rows(scores: &TokenScores) -> Array2<f64> {
    let mut out = scores.logits.clone();
    for mut row in out.axis_iter_mut(Axis(0)) {
        let lp = log_softmax(row.view());
        row.assign(&lp.mapv(f64::exp));
    }
    out
}
