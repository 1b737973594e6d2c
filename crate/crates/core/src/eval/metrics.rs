use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::corpus::EntitySpan;
use crate::error::{Error, Result};

/// Pooled span counts and the derived scores.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct F1Score {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

impl F1Score {
    pub fn from_counts(tp: usize, fp: usize, fn_: usize) -> Self {
        let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Self {
            precision,
            recall,
            f1,
            tp,
            fp,
            fn_,
        }
    }
}

/// Exact-match span micro-F1: a prediction counts only when start, end and
/// type all agree with a gold span of the same sentence. Duplicate spans
/// within a sentence count once.
pub fn micro_f1(gold: &[Vec<EntitySpan>], pred: &[Vec<EntitySpan>]) -> Result<F1Score> {
    if gold.len() != pred.len() {
        return Err(Error::Shape(format!(
            "{} gold sentences but {} predicted",
            gold.len(),
            pred.len()
        )));
    }
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    for (g, p) in gold.iter().zip(pred) {
        let g: HashSet<&EntitySpan> = g.iter().collect();
        let p: HashSet<&EntitySpan> = p.iter().collect();
        let hits = g.intersection(&p).count();
        tp += hits;
        fp += p.len() - hits;
        fn_ += g.len() - hits;
    }
    Ok(F1Score::from_counts(tp, fp, fn_))
}
