use std::collections::{BTreeMap, HashSet};

use indexmap::IndexMap;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::corpus::{downsample_to_mention_count, mask_types, Corpus, Partition};
use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum SplitParams {
    /// The `n_lit` most frequent types train label interpretation, the
    /// `n_fs` least frequent are held out for few-shot fine-tuning.
    Frequency { n_lit: usize, n_fs: usize },
    /// Whole coarse classes go to one side.
    Intra { coarse_map: BTreeMap<String, String> },
    /// Fine labels are split within every coarse class.
    Inter { coarse_map: BTreeMap<String, String> },
    RandomHalf,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub seed: u64,
    #[serde(flatten)]
    pub params: SplitParams,
    /// Count FREQUENCY ranks on train and test together instead of train only.
    #[serde(default)]
    pub frequency_on_all_partitions: bool,
}

impl SplitSpec {
    pub fn new(params: SplitParams, seed: u64) -> Self {
        Self {
            seed,
            params,
            frequency_on_all_partitions: false,
        }
    }
}

/// Disjoint label sets for the two phases, each in inventory order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelSplit {
    pub lit: Vec<String>,
    pub fs: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitOutput {
    pub d_lit: Corpus,
    pub d_fs: Corpus,
    pub labels: LabelSplit,
}

/// Both phases drawn from a dataset's own partitions: label interpretation
/// data from train, support sampling from train, evaluation on test.
#[derive(Debug, Clone, PartialEq)]
pub struct PartitionedSplit {
    pub d_lit: Corpus,
    pub d_fs_train: Corpus,
    pub d_fs_test: Corpus,
    pub labels: LabelSplit,
}

fn coarse_of<'a>(coarse_map: &'a BTreeMap<String, String>, fine: &str) -> Result<&'a str> {
    coarse_map
        .get(fine)
        .map(String::as_str)
        .ok_or_else(|| Error::InvalidConfig(format!("coarse map has no entry for `{fine}`")))
}

/// Assigns every type to one side according to `spec`, using `counts`
/// (type → mentions, inventory order) for frequency ranks.
pub fn choose_labels(counts: &IndexMap<String, usize>, spec: &SplitSpec) -> Result<LabelSplit> {
    let types: Vec<&str> = counts.keys().map(String::as_str).collect();
    let mut rng = seed::rng(spec.seed, "split-labels");
    let mut lit: HashSet<&str> = HashSet::new();
    let mut fs: HashSet<&str> = HashSet::new();

    match &spec.params {
        SplitParams::Frequency { n_lit, n_fs } => {
            if n_lit + n_fs > types.len() {
                return Err(Error::InvalidConfig(format!(
                    "frequency split wants {n_lit} + {n_fs} labels but only {} exist",
                    types.len()
                )));
            }
            let mut ranked: Vec<(usize, &str)> = types.iter().copied().enumerate().collect();
            // most frequent first, ties broken by inventory order
            ranked.sort_by(|a, b| counts[b.1].cmp(&counts[a.1]).then(a.0.cmp(&b.0)));
            lit.extend(ranked[..*n_lit].iter().map(|(_, t)| *t));
            fs.extend(ranked[ranked.len() - n_fs..].iter().map(|(_, t)| *t));
        }
        SplitParams::RandomHalf => {
            let mut shuffled = types.clone();
            shuffled.shuffle(&mut rng);
            let half = shuffled.len().div_ceil(2);
            lit.extend(&shuffled[..half]);
            fs.extend(&shuffled[half..]);
        }
        SplitParams::Intra { coarse_map } => {
            let mut classes: Vec<&str> = Vec::new();
            for t in &types {
                let c = coarse_of(coarse_map, t)?;
                if !classes.contains(&c) {
                    classes.push(c);
                }
            }
            classes.shuffle(&mut rng);
            let half = classes.len().div_ceil(2);
            let lit_classes: HashSet<&str> = classes[..half].iter().copied().collect();
            for t in &types {
                if lit_classes.contains(coarse_of(coarse_map, t)?) {
                    lit.insert(t);
                } else {
                    fs.insert(t);
                }
            }
        }
        SplitParams::Inter { coarse_map } => {
            let mut by_class: IndexMap<&str, Vec<&str>> = IndexMap::new();
            for t in &types {
                by_class.entry(coarse_of(coarse_map, t)?).or_default().push(t);
            }
            // odd-sized classes hand their extra label alternately to each side
            let mut extra_to_lit = true;
            for (_, mut members) in by_class {
                members.shuffle(&mut rng);
                let mut cut = members.len() / 2;
                if members.len() % 2 == 1 {
                    if extra_to_lit {
                        cut += 1;
                    }
                    extra_to_lit = !extra_to_lit;
                }
                lit.extend(&members[..cut]);
                fs.extend(&members[cut..]);
            }
        }
    }

    let ordered = |set: &HashSet<&str>| -> Vec<String> {
        types.iter().filter(|t| set.contains(*t)).map(|t| t.to_string()).collect()
    };
    Ok(LabelSplit {
        lit: ordered(&lit),
        fs: ordered(&fs),
    })
}

/// Splits the labels of one corpus and masks each side to its own labels.
pub fn split_labels(corpus: &Corpus, spec: &SplitSpec) -> Result<SplitOutput> {
    let labels = choose_labels(&corpus.type_mention_counts(), spec)?;
    Ok(SplitOutput {
        d_lit: mask_types(corpus, labels.lit.iter().map(String::as_str))?,
        d_fs: mask_types(corpus, labels.fs.iter().map(String::as_str))?,
        labels,
    })
}

/// Like [`split_labels`], applied to a dataset's train and test partitions.
pub fn split_partitions(train: &Corpus, test: &Corpus, spec: &SplitSpec) -> Result<PartitionedSplit> {
    let mut counts = train.type_mention_counts();
    for (id, _) in test.inventory.types() {
        counts.entry(id.to_string()).or_insert(0);
    }
    if spec.frequency_on_all_partitions {
        for (id, c) in test.type_mention_counts() {
            *counts.entry(id).or_insert(0) += c;
        }
    }
    let labels = choose_labels(&counts, spec)?;
    let restrict = |c: &Corpus, keep: &[String]| {
        let present: Vec<&str> = keep.iter().map(String::as_str).filter(|t| c.inventory.contains(t)).collect();
        mask_types(c, present)
    };
    Ok(PartitionedSplit {
        d_lit: restrict(train, &labels.lit)?.with_partition(Partition::Train),
        d_fs_train: restrict(train, &labels.fs)?.with_partition(Partition::Train),
        d_fs_test: restrict(test, &labels.fs)?.with_partition(Partition::Test),
        labels,
    })
}

fn normalize(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

/// Masks every type whose verbalization matches a forbidden verbalization
/// exactly, up to case and whitespace. Near matches survive.
pub fn remove_overlap<'a, I>(litset: &Corpus, forbidden: I) -> Result<Corpus>
where
    I: IntoIterator<Item = &'a str>,
{
    let forbidden: HashSet<String> = forbidden.into_iter().map(normalize).collect();
    let keep: Vec<&str> = litset
        .inventory
        .types()
        .filter(|(_, v)| !forbidden.contains(&normalize(v)))
        .map(|(id, _)| id)
        .collect();
    mask_types(litset, keep)
}

/// Keeps a seeded choice of `n_labels` types, then downsamples sentences
/// until `annotation_budget` mentions are reached.
pub fn subset_lit_labels(d_lit: &Corpus, n_labels: usize, annotation_budget: usize, seed: u64) -> Result<Corpus> {
    let available_types = d_lit.inventory.num_types();
    if n_labels > available_types {
        return Err(Error::InvalidConfig(format!(
            "asked for {n_labels} labels but the corpus has {available_types}"
        )));
    }
    let mut types: Vec<&str> = d_lit.inventory.type_ids().collect();
    types.shuffle(&mut seed::rng(seed, "subset-labels"));
    types.truncate(n_labels);
    let masked = mask_types(d_lit, types)?;
    downsample_to_mention_count(&masked, annotation_budget, seed::derive(seed, "subset-downsample", &[]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{EntitySpan, Sentence};

    fn corpus(rows: &[&[&str]]) -> Corpus {
        let sentences = rows
            .iter()
            .map(|types| {
                let spans = types.iter().enumerate().map(|(i, t)| EntitySpan::new(2 * i, 2 * i + 1, *t)).collect();
                Sentence::new((0..2 * types.len().max(1)).map(|i| format!("w{i}")).collect(), spans).unwrap()
            })
            .collect();
        Corpus::from_sentences(sentences).unwrap()
    }

    #[test]
    fn frequency_split_takes_extremes() {
        let c = corpus(&[&["A", "A", "B"], &["A", "C", "B"], &["D", "A", "C"], &["B"]]);
        // A:4 B:3 C:2 D:1
        let out = split_labels(&c, &SplitSpec::new(SplitParams::Frequency { n_lit: 2, n_fs: 1 }, 0)).unwrap();
        assert_eq!(out.labels.lit, vec!["A", "B"]);
        assert_eq!(out.labels.fs, vec!["D"]);
        assert_eq!(out.d_fs.mention_count(), 1);
        assert_eq!(out.d_lit.mention_count(), 7);
        assert!(split_labels(&c, &SplitSpec::new(SplitParams::Frequency { n_lit: 3, n_fs: 2 }, 0)).is_err());
    }

    #[test]
    fn random_half_is_disjoint() {
        let c = corpus(&[&["A", "B"], &["C", "D"], &["A", "D"]]);
        let out = split_labels(&c, &SplitSpec::new(SplitParams::RandomHalf, 4)).unwrap();
        assert_eq!(out.labels.lit.len(), 2);
        assert_eq!(out.labels.fs.len(), 2);
        for s in &out.d_lit.sentences {
            assert!(s.spans.iter().all(|sp| out.labels.lit.contains(&sp.type_id)));
        }
        for s in &out.d_fs.sentences {
            assert!(s.spans.iter().all(|sp| out.labels.fs.contains(&sp.type_id)));
        }
        assert_eq!(out, split_labels(&c, &SplitSpec::new(SplitParams::RandomHalf, 4)).unwrap());
    }

    fn coarse(pairs: &[(&str, &str)]) -> BTreeMap<String, String> {
        pairs.iter().map(|(f, c)| (f.to_string(), c.to_string())).collect()
    }

    #[test]
    fn intra_splits_coarse_classes() {
        let fine: Vec<String> = (0..16).map(|i| format!("f{i}")).collect();
        let map: BTreeMap<String, String> = fine.iter().enumerate().map(|(i, f)| (f.clone(), format!("c{}", i % 8))).collect();
        let refs: Vec<&str> = fine.iter().map(String::as_str).collect();
        let c = corpus(&[&refs]);
        let out = split_labels(&c, &SplitSpec::new(SplitParams::Intra { coarse_map: map.clone() }, 1)).unwrap();
        let lit_classes: HashSet<_> = out.labels.lit.iter().map(|f| &map[f]).collect();
        let fs_classes: HashSet<_> = out.labels.fs.iter().map(|f| &map[f]).collect();
        assert_eq!(lit_classes.len(), 4);
        assert_eq!(fs_classes.len(), 4);
        assert!(lit_classes.is_disjoint(&fs_classes));

        let missing = coarse(&[("f0", "c0")]);
        assert!(split_labels(&c, &SplitSpec::new(SplitParams::Intra { coarse_map: missing }, 1)).is_err());
    }

    #[test]
    fn inter_stratifies_within_classes() {
        let c = corpus(&[&["a1", "a2", "a3", "b1", "b2", "b3", "c1"]]);
        let map = coarse(&[("a1", "a"), ("a2", "a"), ("a3", "a"), ("b1", "b"), ("b2", "b"), ("b3", "b"), ("c1", "c")]);
        let out = split_labels(&c, &SplitSpec::new(SplitParams::Inter { coarse_map: map.clone() }, 2)).unwrap();
        for class in ["a", "b"] {
            let l = out.labels.lit.iter().filter(|f| map[*f] == class).count();
            let f = out.labels.fs.iter().filter(|f| map[*f] == class).count();
            assert!(l >= 1 && f >= 1 && l.abs_diff(f) <= 1);
        }
        assert_eq!(out.labels.lit.len().abs_diff(out.labels.fs.len()), 1);
    }

    #[test]
    fn partitions_keep_their_roles() {
        let train = corpus(&[&["A", "B"], &["A", "C"], &["A"]]);
        let test = corpus(&[&["C", "B"]]);
        let split = split_partitions(&train, &test, &SplitSpec::new(SplitParams::Frequency { n_lit: 1, n_fs: 2 }, 0)).unwrap();
        assert_eq!(split.labels.lit, vec!["A"]);
        assert_eq!(split.d_fs_test.partition, Partition::Test);
        assert_eq!(split.d_fs_test.mention_count(), 2);
        assert_eq!(split.d_lit.mention_count(), 3);
    }

    #[test]
    fn overlap_removal_is_exact_up_to_case() {
        let c = corpus(&[&["person", "Person  Entity", "city"]]);
        let out = remove_overlap(&c, ["PERSON"]).unwrap();
        let kept: Vec<_> = out.inventory.type_ids().collect();
        assert_eq!(kept, vec!["Person  Entity", "city"]);
        assert_eq!(remove_overlap(&c, std::iter::empty()).unwrap(), c);
        let out = remove_overlap(&c, ["person entity"]).unwrap();
        assert!(!out.inventory.contains("Person  Entity"));
    }

    #[test]
    fn subset_recount() {
        // 4 labels, each sentence holds one mention
        let rows: Vec<Vec<&str>> = (0..20).map(|i| vec![["A", "B", "C", "D"][i % 4]]).collect();
        let refs: Vec<&[&str]> = rows.iter().map(|r| r.as_slice()).collect();
        let c = corpus(&refs);
        let out = subset_lit_labels(&c, 2, 5, 9).unwrap();
        assert_eq!(out.inventory.num_types(), 2);
        let kept: HashSet<&str> = out.inventory.type_ids().collect();
        let recount = out.sentences.iter().flat_map(|s| &s.spans).filter(|s| kept.contains(s.type_id.as_str())).count();
        assert_eq!(recount, out.mention_count());
        assert!(recount >= 5);

        let all = subset_lit_labels(&c, 4, 20, 9).unwrap();
        assert_eq!(all.mention_count(), 20);
        assert_eq!(all.len(), 20);

        match subset_lit_labels(&c, 1, 6, 9) {
            Err(Error::InsufficientMentions { available: 5, .. }) => {}
            other => panic!("{other:?}"),
        }
        assert!(subset_lit_labels(&c, 5, 1, 9).is_err());
    }
}
