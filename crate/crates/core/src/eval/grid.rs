use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::protocol::{mean_std, run_protocol, ProtocolConfig, ProtocolSplit, RunResult, SkippedCell};
use crate::biencoder::{BiEncoder, EncoderConfig};
use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::fewshot::{apply_verbalization, subset_lit_labels, SchemeKind, VerbalizationScheme};
use crate::seed;
use crate::trainer::TrainConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    pub n_labels: Vec<usize>,
    /// Mentions kept in every label interpretation subset.
    pub budget: usize,
    pub k_list: Vec<usize>,
    /// Seeds for the label subset (one label interpretation run each).
    pub seeds: Vec<u64>,
    pub support_seeds: Vec<u64>,
    pub encoder: EncoderConfig,
    pub lit: TrainConfig,
    pub fewshot: TrainConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub n_labels: usize,
    pub scheme: SchemeKind,
    pub mean_f1: BTreeMap<usize, f64>,
    pub stddev: BTreeMap<usize, f64>,
    /// Evaluated runs per k.
    pub runs: BTreeMap<usize, usize>,
    /// Epoch-mean training losses of each label interpretation run.
    pub lit_epoch_losses: Vec<Vec<f64>>,
    pub results: Vec<RunResult>,
    pub skipped: Vec<SkippedCell>,
}

/// Runs the protocol for every (label count, scheme) pair. For each seed,
/// `n` labels are drawn from `d_lit` and downsampled to `budget` mentions;
/// the scheme is applied to every corpus before training and evaluation.
/// The few-shot corpora stay the same across cells.
pub fn validation_grid(
    d_lit: &Corpus,
    d_fs_train: &Corpus,
    d_fs_test: &Corpus,
    schemes: &[VerbalizationScheme],
    cfg: &GridConfig,
) -> Result<Vec<GridCell>> {
    if cfg.n_labels.is_empty() || schemes.is_empty() || cfg.seeds.is_empty() {
        return Err(Error::Empty("grid label counts, schemes or seeds"));
    }
    cfg.encoder.validate()?;
    let cells: Vec<(usize, &VerbalizationScheme)> =
        cfg.n_labels.iter().flat_map(|&n| schemes.iter().map(move |s| (n, s))).collect();
    cells
        .par_iter()
        .map(|&(n, scheme)| run_cell(d_lit, d_fs_train, d_fs_test, n, scheme, cfg))
        .collect()
}

fn run_cell(
    d_lit: &Corpus,
    d_fs_train: &Corpus,
    d_fs_test: &Corpus,
    n: usize,
    scheme: &VerbalizationScheme,
    cfg: &GridConfig,
) -> Result<GridCell> {
    let fs_train = apply_verbalization(d_fs_train, scheme)?;
    let fs_test = apply_verbalization(d_fs_test, scheme)?;
    let splits = cfg
        .seeds
        .iter()
        .map(|&s| {
            let subset = subset_lit_labels(d_lit, n, cfg.budget, s)?;
            Ok(ProtocolSplit {
                split_seed: s,
                d_lit: apply_verbalization(&subset, scheme)?,
                d_fs_train: fs_train.clone(),
                d_fs_test: fs_test.clone(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let protocol = ProtocolConfig {
        k_list: cfg.k_list.clone(),
        support_seeds: cfg.support_seeds.clone(),
        lit: cfg.lit.clone(),
        fewshot: cfg.fewshot.clone(),
    };
    let factory = |split_seed: u64| {
        BiEncoder::new(EncoderConfig {
            init_seed: seed::derive(cfg.encoder.init_seed, "grid-init", &split_seed.to_le_bytes()),
            ..cfg.encoder.clone()
        })
    };
    let out = run_protocol(factory, &splits, &protocol)?;

    let mut mean_f1 = BTreeMap::new();
    let mut stddev = BTreeMap::new();
    let mut runs = BTreeMap::new();
    for &k in &cfg.k_list {
        let f1: Vec<f64> = out.results.iter().filter(|r| r.k == k).map(|r| r.f1).collect();
        if f1.is_empty() {
            continue;
        }
        let (m, s) = mean_std(&f1);
        mean_f1.insert(k, m);
        stddev.insert(k, s);
        runs.insert(k, f1.len());
    }
    log::info!("grid cell n={n} scheme={}: {:?}", scheme.kind, mean_f1);
    Ok(GridCell {
        n_labels: n,
        scheme: scheme.kind,
        mean_f1,
        stddev,
        runs,
        lit_epoch_losses: out.lit_logs.into_iter().map(|(_, l)| l.epoch_losses).collect(),
        results: out.results,
        skipped: out.skipped,
    })
}
