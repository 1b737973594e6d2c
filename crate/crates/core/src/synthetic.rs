//! Templated toy corpora for smoke tests and benchmarks.
//!
//! Every type is a concept word. Its entity names start with the first
//! letters of that word, so the short and long verbalizations share subword
//! pieces with the mentions while cryptic labels do not.

use indexmap::IndexMap;
use rand::seq::IndexedRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, EntitySpan, Partition, Sentence, TypeInventory};
use crate::error::{Error, Result};
use crate::fewshot::{SchemeKind, VerbalizationScheme};
use crate::seed;

const CONCEPTS: &[&str] = &[
    "city", "river", "mountain", "person", "company", "school", "hospital", "film", "book", "song", "team", "ship",
    "vehicle", "aircraft", "drug", "disease", "animal", "plant", "food", "language", "religion", "battle", "election",
    "award", "statute", "university", "museum", "church", "park", "airport", "bridge", "island", "planet", "festival",
    "software", "newspaper", "painting", "mineral", "protein", "galaxy", "railway", "canal", "volcano", "desert",
    "orchestra", "magazine", "satellite", "dynasty",
];

const SUFFIXES: &[&str] = &["ton", "vale", "ora", "ix", "berg", "ana", "ford", "ium"];
const TAILS: &[&str] = &["north", "major", "prime", "west"];

const TEMPLATES: &[&str] = &[
    "yesterday we read about {0} in the paper",
    "the committee discussed {0} at length",
    "{0} was mentioned twice during the meeting",
    "nobody expected {0} to appear here",
    "after the break {0} came up again",
    "she wrote a short note on {0}",
];

const PAIR_TEMPLATES: &[&str] = &[
    "the report compares {0} with {1}",
    "{0} and {1} were both listed",
    "we saw {0} before {1} today",
];

const FILLER: &[&str] = &[
    "the weather stayed calm all afternoon",
    "they walked home after dinner",
    "it was a quiet week overall",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    /// Frequent types used for label interpretation.
    pub n_lit_labels: usize,
    /// Rare types held out for the few-shot phase.
    pub n_fs_labels: usize,
    /// Mentions per frequent type in the train partition.
    pub lit_mentions_per_label: usize,
    /// Mentions per rare type in the train partition.
    pub fs_train_mentions_per_label: usize,
    /// Mentions per rare type in the test partition.
    pub fs_test_mentions_per_label: usize,
    /// Share of sentences without any mention.
    pub filler_rate: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n_lit_labels: 30,
            n_fs_labels: 8,
            lit_mentions_per_label: 100,
            fs_train_mentions_per_label: 12,
            fs_test_mentions_per_label: 15,
            filler_rate: 0.1,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCorpus {
    pub train: Corpus,
    pub test: Corpus,
    pub lit_types: Vec<String>,
    pub fs_types: Vec<String>,
    pub short: VerbalizationScheme,
    pub long: VerbalizationScheme,
}

fn entity_name(concept: &str, rng: &mut seed::Rng) -> Vec<String> {
    let stem: String = concept.chars().take(4).collect();
    let mut words = vec![format!("{stem}{}", SUFFIXES.choose(rng).expect("non-empty"))];
    if rng.random_bool(0.3) {
        words.push(TAILS.choose(rng).expect("non-empty").to_string());
    }
    words
}

fn fill(template: &str, names: &[Vec<String>], types: &[&str]) -> Sentence {
    let mut tokens = Vec::new();
    let mut spans = Vec::new();
    for word in template.split_whitespace() {
        let slot = match word {
            "{0}" => Some(0),
            "{1}" => Some(1),
            _ => None,
        };
        match slot {
            Some(i) => {
                let start = tokens.len();
                tokens.extend(names[i].iter().cloned());
                spans.push(EntitySpan::new(start, tokens.len(), types[i]));
            }
            None => tokens.push(word.to_string()),
        }
    }
    Sentence::new(tokens, spans).expect("templates place mentions without overlap")
}

/// Sentences realizing exactly `quota[t]` mentions of every type `t`.
fn realize(quota: &IndexMap<&str, usize>, filler_rate: f64, rng: &mut seed::Rng) -> Vec<Sentence> {
    let mut pool: Vec<&str> = quota.iter().flat_map(|(t, &n)| std::iter::repeat_n(*t, n)).collect();
    rand::seq::SliceRandom::shuffle(pool.as_mut_slice(), rng);
    let mut out = Vec::new();
    while let Some(first) = pool.pop() {
        if rng.random_bool(filler_rate) {
            out.push(Sentence::unannotated(
                FILLER.choose(rng).expect("non-empty").split(' ').map(String::from).collect(),
            ));
        }
        let second = if rng.random_bool(0.35) { pool.pop() } else { None };
        let sentence = match second {
            Some(second) => {
                let names = [entity_name(first, rng), entity_name(second, rng)];
                fill(PAIR_TEMPLATES.choose(rng).expect("non-empty"), &names, &[first, second])
            }
            None => fill(TEMPLATES.choose(rng).expect("non-empty"), &[entity_name(first, rng)], &[first]),
        };
        out.push(sentence);
    }
    out
}

fn scheme(kind: SchemeKind, types: &[&str]) -> VerbalizationScheme {
    let table = types
        .iter()
        .map(|t| {
            let v = match kind {
                SchemeKind::Long => format!("{t} entity such as a named {t} or a well known {t}"),
                _ => t.to_string(),
            };
            (t.to_string(), v)
        })
        .collect();
    VerbalizationScheme {
        version: 1,
        kind,
        table,
        seed: None,
        source: Some("synthetic".into()),
    }
}

pub fn generate(spec: &SyntheticSpec) -> Result<SyntheticCorpus> {
    let total = spec.n_lit_labels + spec.n_fs_labels;
    if total > CONCEPTS.len() {
        return Err(Error::InvalidConfig(format!("at most {} synthetic types are available", CONCEPTS.len())));
    }
    if spec.fs_train_mentions_per_label >= spec.lit_mentions_per_label {
        return Err(Error::InvalidConfig("few-shot types must be rarer than label-interpretation types".into()));
    }
    let lit_types = &CONCEPTS[..spec.n_lit_labels];
    let fs_types = &CONCEPTS[spec.n_lit_labels..total];

    let mut rng = seed::rng(spec.seed, "synthetic-train");
    let train_quota: IndexMap<&str, usize> = lit_types
        .iter()
        .map(|t| (*t, spec.lit_mentions_per_label))
        .chain(fs_types.iter().map(|t| (*t, spec.fs_train_mentions_per_label)))
        .collect();
    let train_sentences = realize(&train_quota, spec.filler_rate, &mut rng);

    let mut rng = seed::rng(spec.seed, "synthetic-test");
    let test_quota: IndexMap<&str, usize> =
        fs_types.iter().map(|t| (*t, spec.fs_test_mentions_per_label)).collect();
    let test_sentences = realize(&test_quota, spec.filler_rate, &mut rng);

    let all: Vec<&str> = lit_types.iter().chain(fs_types).copied().collect();
    let mut inventory = TypeInventory::default();
    for t in &all {
        inventory.insert(*t, *t)?;
    }
    let test_inventory = inventory.restrict(&fs_types.iter().copied().collect());
    Ok(SyntheticCorpus {
        train: Corpus::new(train_sentences, inventory)?
            .with_partition(Partition::Train)
            .with_provenance(format!("synthetic:{}", spec.seed)),
        test: Corpus::new(test_sentences, test_inventory)?
            .with_partition(Partition::Test)
            .with_provenance(format!("synthetic:{}", spec.seed)),
        lit_types: lit_types.iter().map(|s| s.to_string()).collect(),
        fs_types: fs_types.iter().map(|s| s.to_string()).collect(),
        short: scheme(SchemeKind::Short, &all),
        long: scheme(SchemeKind::Long, &all),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quotas_are_met_exactly() {
        let spec = SyntheticSpec::default();
        let c = generate(&spec).unwrap();
        let counts = c.train.type_mention_counts();
        assert!(c.lit_types.iter().all(|t| counts[t] == 100));
        assert!(c.fs_types.iter().all(|t| counts[t] == 12));
        assert_eq!(c.train.mention_count(), 30 * 100 + 8 * 12);
        assert_eq!(c.test.mention_count(), 8 * 15);
        assert_eq!(c.test.inventory.num_types(), 8);
        assert_eq!(c, generate(&spec).unwrap());
        c.long.validate().unwrap();
    }

    #[test]
    fn too_many_types_is_an_error() {
        let spec = SyntheticSpec {
            n_lit_labels: 60,
            ..Default::default()
        };
        assert!(generate(&spec).is_err());
    }
}
