use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{micro_f1, F1Score};
use crate::biencoder::{BiEncoder, ScoringHead};
use crate::corpus::{Corpus, EntitySpan};
use crate::error::{Error, Result};
use crate::fewshot::{sample_support_set, PartitionedSplit};
use crate::seed;
use crate::trainer::{finetune_fewshot, train_label_interpretation, TrainConfig, TrainLog};

/// One evaluated (split seed, support seed, k) cell. Field names follow the
/// results JSONL schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub split_seed: u64,
    pub support_seed: u64,
    pub k: usize,
    #[serde(rename = "p")]
    pub precision: f64,
    #[serde(rename = "r")]
    pub recall: f64,
    pub f1: f64,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub config_hash: String,
}

impl RunResult {
    fn new(split_seed: u64, support_seed: u64, k: usize, s: F1Score, config_hash: String) -> Self {
        Self {
            split_seed,
            support_seed,
            k,
            precision: s.precision,
            recall: s.recall,
            f1: s.f1,
            tp: s.tp,
            fp: s.fp,
            fn_: s.fn_,
            config_hash,
        }
    }

    pub fn sort_key(&self) -> (u64, u64, usize) {
        (self.split_seed, self.support_seed, self.k)
    }
}

/// A cell that could not run, typically because some label has fewer than
/// k mentions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedCell {
    pub split_seed: u64,
    pub support_seed: u64,
    pub k: usize,
    pub reason: String,
}

/// The three corpora of one label split.
#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolSplit {
    pub split_seed: u64,
    pub d_lit: Corpus,
    pub d_fs_train: Corpus,
    pub d_fs_test: Corpus,
}

impl ProtocolSplit {
    pub fn from_partitioned(split_seed: u64, split: PartitionedSplit) -> Self {
        Self {
            split_seed,
            d_lit: split.d_lit,
            d_fs_train: split.d_fs_train,
            d_fs_test: split.d_fs_test,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolConfig {
    pub k_list: Vec<usize>,
    pub support_seeds: Vec<u64>,
    pub lit: TrainConfig,
    pub fewshot: TrainConfig,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        Self {
            k_list: vec![0, 1, 5, 10],
            support_seeds: vec![0, 1, 2],
            lit: TrainConfig::lit_baseline(),
            fewshot: TrainConfig::fewshot_baseline(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolOutput {
    pub results: Vec<RunResult>,
    pub skipped: Vec<SkippedCell>,
    /// Label interpretation logs, one per split seed.
    pub lit_logs: Vec<(u64, TrainLog)>,
}

/// Predicts on `test` with its full label space and scores against its gold.
pub fn evaluate(model: &BiEncoder, test: &Corpus) -> Result<F1Score> {
    let pred = model.predict_spans(&test.sentences, &test.inventory)?;
    let gold: Vec<Vec<EntitySpan>> = test.sentences.iter().map(|s| s.spans.clone()).collect();
    micro_f1(&gold, &pred)
}

fn config_hash(model: &BiEncoder, cfg: &ProtocolConfig, split: &ProtocolSplit, support_seed: u64, k: usize) -> Result<String> {
    let value = serde_json::json!({
        "encoder": model.config(),
        "lit": cfg.lit,
        "fewshot": cfg.fewshot,
        "split_seed": split.split_seed,
        "support_seed": support_seed,
        "k": k,
        "d_lit": [split.d_lit.inventory.content_hash(), split.d_lit.mention_count()],
        "d_fs_train": [split.d_fs_train.inventory.content_hash(), split.d_fs_train.mention_count()],
        "d_fs_test": [split.d_fs_test.inventory.content_hash(), split.d_fs_test.mention_count()],
    });
    Ok(seed::short_hash(serde_json::to_string(&value)?.as_bytes()))
}

enum CellOutcome {
    Done(RunResult),
    Skipped(SkippedCell),
}

fn run_split<F>(factory: &F, split: &ProtocolSplit, cfg: &ProtocolConfig) -> Result<(Vec<CellOutcome>, TrainLog)>
where
    F: Fn(u64) -> Result<BiEncoder> + Sync,
{
    let lit_cfg = TrainConfig {
        seed: seed::derive(cfg.lit.seed, "protocol-lit", &split.split_seed.to_le_bytes()),
        ..cfg.lit.clone()
    };
    let (lit_model, lit_log) = train_label_interpretation(factory(split.split_seed)?, &split.d_lit, &lit_cfg)?;
    let zero_shot = if cfg.k_list.contains(&0) {
        Some(evaluate(&lit_model, &split.d_fs_test)?)
    } else {
        None
    };

    let cells: Vec<(u64, usize)> = cfg
        .support_seeds
        .iter()
        .flat_map(|&s| cfg.k_list.iter().map(move |&k| (s, k)))
        .collect();
    let outcomes = cells
        .par_iter()
        .map(|&(support_seed, k)| -> Result<CellOutcome> {
            let hash = config_hash(&lit_model, cfg, split, support_seed, k)?;
            if k == 0 {
                let score = zero_shot.expect("computed when k = 0 is requested");
                return Ok(CellOutcome::Done(RunResult::new(split.split_seed, support_seed, 0, score, hash)));
            }
            let support = match sample_support_set(&split.d_fs_train, k, support_seed) {
                Ok(s) => s,
                Err(e @ Error::InsufficientShots { .. }) => {
                    log::warn!("split {} support {support_seed} k={k} skipped: {e}", split.split_seed);
                    return Ok(CellOutcome::Skipped(SkippedCell {
                        split_seed: split.split_seed,
                        support_seed,
                        k,
                        reason: e.to_string(),
                    }));
                }
                Err(e) => return Err(e),
            };
            let mut key = split.split_seed.to_le_bytes().to_vec();
            key.extend(support_seed.to_le_bytes());
            key.extend((k as u64).to_le_bytes());
            let fs_cfg = TrainConfig {
                seed: seed::derive(cfg.fewshot.seed, "protocol-fewshot", &key),
                ..cfg.fewshot.clone()
            };
            let (tuned, _) = finetune_fewshot(lit_model.clone(), &support, &fs_cfg)?;
            let score = evaluate(&tuned, &split.d_fs_test)?;
            Ok(CellOutcome::Done(RunResult::new(split.split_seed, support_seed, k, score, hash)))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((outcomes, lit_log))
}

/// For every split: a fresh model from `factory(split_seed)` is trained on
/// the label interpretation corpus, then for every (support seed, k) a copy
/// is fine-tuned on a k-shot support set from `d_fs_train` and evaluated on
/// `d_fs_test`. At k = 0 the trained model is evaluated directly and the
/// score is reported under every support seed.
pub fn run_protocol<F>(factory: F, splits: &[ProtocolSplit], cfg: &ProtocolConfig) -> Result<ProtocolOutput>
where
    F: Fn(u64) -> Result<BiEncoder> + Sync,
{
    if splits.is_empty() || cfg.k_list.is_empty() || cfg.support_seeds.is_empty() {
        return Err(Error::Empty("protocol splits, k list or support seeds"));
    }
    let per_split = splits
        .par_iter()
        .map(|split| run_split(&factory, split, cfg))
        .collect::<Result<Vec<_>>>()?;

    let mut out = ProtocolOutput {
        results: Vec::new(),
        skipped: Vec::new(),
        lit_logs: Vec::new(),
    };
    for (split, (outcomes, lit_log)) in splits.iter().zip(per_split) {
        out.lit_logs.push((split.split_seed, lit_log));
        for o in outcomes {
            match o {
                CellOutcome::Done(r) => out.results.push(r),
                CellOutcome::Skipped(s) => out.skipped.push(s),
            }
        }
    }
    out.results.sort_by_key(RunResult::sort_key);
    Ok(out)
}

/// Mean and sample standard deviation of F1 for one k.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KSummary {
    pub k: usize,
    pub runs: usize,
    pub mean_f1: f64,
    pub std_f1: f64,
    pub mean_precision: f64,
    pub mean_recall: f64,
}

pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

pub fn aggregate(results: &[RunResult]) -> Vec<KSummary> {
    let mut ks: Vec<usize> = results.iter().map(|r| r.k).collect();
    ks.sort_unstable();
    ks.dedup();
    ks.into_iter()
        .map(|k| {
            let rows: Vec<&RunResult> = results.iter().filter(|r| r.k == k).collect();
            let f1: Vec<f64> = rows.iter().map(|r| r.f1).collect();
            let (mean_f1, std_f1) = mean_std(&f1);
            let p: Vec<f64> = rows.iter().map(|r| r.precision).collect();
            let r: Vec<f64> = rows.iter().map(|r| r.recall).collect();
            KSummary {
                k,
                runs: rows.len(),
                mean_f1,
                std_f1,
                mean_precision: mean_std(&p).0,
                mean_recall: mean_std(&r).0,
            }
        })
        .collect()
}
