use std::collections::HashSet;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{Corpus, Sentence};
use crate::error::{Error, Result};
use crate::seed;

/// Deletes every span whose type is not in `keep`; those tokens become O.
/// The inventory is restricted to `keep` ∪ {O}.
pub fn mask_types<'a, I>(corpus: &Corpus, keep: I) -> Result<Corpus>
where
    I: IntoIterator<Item = &'a str>,
{
    let keep: HashSet<&str> = keep.into_iter().collect();
    if let Some(unknown) = keep.iter().find(|id| !corpus.inventory.contains(id)) {
        return Err(Error::UnknownType(unknown.to_string()));
    }
    let sentences = corpus
        .sentences
        .iter()
        .map(|s| Sentence {
            tokens: s.tokens.clone(),
            spans: s
                .spans
                .iter()
                .filter(|sp| keep.contains(sp.type_id.as_str()))
                .cloned()
                .collect(),
        })
        .collect();
    Ok(Corpus {
        sentences,
        inventory: corpus.inventory.restrict(&keep),
        ..corpus.empty_like()
    })
}

/// Seeded sentence-level downsampling: shuffle sentence order, then take
/// sentences until the mention count first reaches `target`. Selected
/// sentences keep their original relative order.
pub fn downsample_to_mention_count(corpus: &Corpus, target: usize, seed: u64) -> Result<Corpus> {
    let available = corpus.mention_count();
    if target > available {
        return Err(Error::InsufficientMentions {
            requested: target,
            available,
        });
    }
    let mut order: Vec<usize> = (0..corpus.len()).collect();
    order.shuffle(&mut seed::rng(seed, "downsample"));

    let mut picked = Vec::new();
    let mut mentions = 0;
    for idx in order {
        if mentions >= target {
            break;
        }
        mentions += corpus.sentences[idx].spans.len();
        picked.push(idx);
    }
    picked.sort_unstable();
    Ok(Corpus {
        sentences: picked.into_iter().map(|i| corpus.sentences[i].clone()).collect(),
        ..corpus.empty_like()
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub distinct_types: usize,
    pub mention_count: usize,
    pub sentence_count: usize,
    /// Mean verbalization length in characters, O excluded.
    pub mean_label_length: f64,
    /// Population standard deviation of the same.
    pub stddev_label_length: f64,
}

pub fn compute_stats(corpus: &Corpus) -> CorpusStats {
    let lengths: Vec<f64> = corpus
        .inventory
        .types()
        .map(|(_, v)| v.chars().count() as f64)
        .collect();
    let (mean, stddev) = if lengths.is_empty() {
        (0.0, 0.0)
    } else {
        let n = lengths.len() as f64;
        let mean = lengths.iter().sum::<f64>() / n;
        let var = lengths.iter().map(|l| (l - mean).powi(2)).sum::<f64>() / n;
        (mean, var.sqrt())
    };
    CorpusStats {
        distinct_types: corpus.inventory.num_types(),
        mention_count: corpus.mention_count(),
        sentence_count: corpus.len(),
        mean_label_length: mean,
        stddev_label_length: stddev,
    }
}
