//! Few-shot protocol: disjoint label splits with O-masking, overlap removal
//! against a large corpus, label-count subsets, k-shot support sets and
//! alternative label verbalizations.

mod split;
mod support;
mod verbalize;

pub use split::{
    choose_labels, remove_overlap, split_labels, split_partitions, subset_lit_labels, LabelSplit, PartitionedSplit,
    SplitOutput, SplitParams, SplitSpec,
};
pub use support::{sample_support_set, SupportSet};
pub use verbalize::{apply_verbalization, SchemeKind, VerbalizationScheme};
