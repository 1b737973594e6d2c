//! Two training phases over a [`BiEncoder`]: label interpretation on a large
//! annotated corpus, then few-shot fine-tuning on a support set.
//!
//! Both use AdamW with decoupled weight decay, global-norm gradient clipping
//! and a linear warm-up / linear decay schedule computed over the maximum
//! number of steps. Batches are drawn from a seeded per-epoch shuffle, so two
//! runs with the same configuration produce identical loss sequences.

use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::biencoder::{build_batch_label_space, BatchLabelSpace, BiEncoder, BiEncoderParams};
use crate::corpus::jsonl::write_json;
use crate::corpus::{Corpus, Partition, Sentence, TypeInventory};
use crate::error::{Error, Result};
use crate::fewshot::SupportSet;
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopGranularity {
    #[default]
    Epoch,
    Step,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelSpaceMode {
    /// O plus the types present in the batch (and sampled negatives).
    InBatch,
    /// O plus every type of the training inventory.
    Full,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub warmup_fraction: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_epsilon: f64,
    pub clip_norm: Option<f64>,
    /// Epochs (or steps) without strict improvement of the training loss
    /// before stopping. `None` disables early stopping.
    pub early_stop_patience: Option<usize>,
    pub stop_granularity: StopGranularity,
    pub label_space: LabelSpaceMode,
    /// Target size of the in-batch space excluding O; extra slots are
    /// filled with uniformly drawn negatives.
    pub negatives_m: usize,
    pub loss_on_o: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::lit_baseline()
    }
}

impl TrainConfig {
    pub fn lit_baseline() -> Self {
        Self {
            learning_rate: 1e-5,
            epochs: 3,
            batch_size: 16,
            warmup_fraction: 0.1,
            weight_decay: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            adam_epsilon: 1e-8,
            clip_norm: Some(1.0),
            early_stop_patience: None,
            stop_granularity: StopGranularity::Epoch,
            label_space: LabelSpaceMode::InBatch,
            negatives_m: 0,
            loss_on_o: true,
            seed: 0,
        }
    }

    pub fn lit_litset() -> Self {
        Self {
            learning_rate: 1e-6,
            ..Self::lit_baseline()
        }
    }

    pub fn fewshot_baseline() -> Self {
        Self {
            epochs: 100,
            early_stop_patience: Some(5),
            label_space: LabelSpaceMode::Full,
            ..Self::lit_baseline()
        }
    }

    pub fn fewshot_litset() -> Self {
        Self {
            learning_rate: 5e-6,
            ..Self::fewshot_baseline()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return bad("epochs and batch_size must be positive");
        }
        if !(0.0..=1.0).contains(&self.warmup_fraction) {
            return bad("warmup_fraction must lie in [0, 1]");
        }
        if self.early_stop_patience == Some(0) {
            return bad("early_stop_patience must be at least 1");
        }
        if self.weight_decay < 0.0 || !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("weight_decay must be non-negative and betas in [0, 1)");
        }
        if self.clip_norm.is_some_and(|c| c <= 0.0) {
            return bad("clip_norm must be positive");
        }
        Ok(())
    }
}

pub fn steps_per_epoch(n_sentences: usize, batch_size: usize) -> usize {
    n_sentences.div_ceil(batch_size)
}

/// Piecewise-linear schedule over steps `1..=total`: rises to the peak at
/// step `ceil(warmup_fraction * total)` and falls to 0 at `total`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LrSchedule {
    pub peak: f64,
    pub warmup_steps: usize,
    pub total_steps: usize,
}

impl LrSchedule {
    pub fn new(peak: f64, warmup_fraction: f64, total_steps: usize) -> Self {
        let warmup_steps = ((warmup_fraction * total_steps as f64).ceil() as usize).clamp(1, total_steps.max(1));
        Self {
            peak,
            warmup_steps,
            total_steps,
        }
    }

    pub fn lr_at(&self, step: usize) -> f64 {
        let (w, t) = (self.warmup_steps, self.total_steps);
        if step <= w {
            self.peak * step as f64 / w as f64
        } else if step >= t {
            0.0
        } else {
            self.peak * (t - step) as f64 / (t - w) as f64
        }
    }
}

/// Tracks strict improvement of a monitored loss.
#[derive(Debug, Clone)]
pub struct EarlyStopper {
    patience: usize,
    best: f64,
    stale: usize,
}

impl EarlyStopper {
    pub fn new(patience: usize) -> Self {
        Self {
            patience,
            best: f64::INFINITY,
            stale: 0,
        }
    }

    /// Records a value; returns true when training should stop.
    pub fn observe(&mut self, loss: f64) -> bool {
        if loss < self.best {
            self.best = loss;
            self.stale = 0;
        } else {
            self.stale += 1;
        }
        self.stale >= self.patience
    }
}

struct AdamW {
    m: BiEncoderParams,
    v: BiEncoderParams,
    t: i32,
}

impl AdamW {
    fn new(params: &BiEncoderParams) -> Self {
        Self {
            m: params.zeros_like(),
            v: params.zeros_like(),
            t: 0,
        }
    }

    fn step(&mut self, params: &mut BiEncoderParams, grads: &BiEncoderParams, lr: f64, cfg: &TrainConfig) {
        self.t += 1;
        let (b1, b2) = (cfg.beta1, cfg.beta2);
        let c1 = 1.0 - b1.powi(self.t);
        let c2 = 1.0 - b2.powi(self.t);
        let tensors = params
            .slices_mut()
            .into_iter()
            .zip(grads.slices())
            .zip(self.m.slices_mut().into_iter().zip(self.v.slices_mut()));
        for ((p, g), (m, v)) in tensors {
            for i in 0..p.len() {
                m[i] = b1 * m[i] + (1.0 - b1) * g[i];
                v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
                let update = (m[i] / c1) / ((v[i] / c2).sqrt() + cfg.adam_epsilon);
                p[i] -= lr * (update + cfg.weight_decay * p[i]);
            }
        }
    }
}

fn clip(grads: &mut BiEncoderParams, max_norm: f64) -> f64 {
    let norm = grads.global_norm();
    if norm > max_norm {
        let scale = max_norm / norm;
        for s in grads.slices_mut() {
            s.iter_mut().for_each(|g| *g *= scale);
        }
    }
    norm
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub epoch: usize,
    pub batch: usize,
    pub loss: f64,
    pub lr: f64,
    pub grad_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub phase: String,
    pub steps: Vec<StepRecord>,
    pub epoch_losses: Vec<f64>,
    pub wall_clock_secs: f64,
    pub early_stop_epoch: Option<usize>,
    pub skipped: bool,
    pub config: TrainConfig,
}

#[derive(Serialize)]
struct TrainSummary<'a> {
    phase: &'a str,
    steps: usize,
    epochs: usize,
    epoch_losses: &'a [f64],
    final_loss: Option<f64>,
    wall_clock_secs: f64,
    early_stop_epoch: Option<usize>,
    skipped: bool,
    config: &'a TrainConfig,
}

impl TrainLog {
    fn empty(phase: &str, config: &TrainConfig, skipped: bool) -> Self {
        Self {
            phase: phase.to_string(),
            steps: Vec::new(),
            epoch_losses: Vec::new(),
            wall_clock_secs: 0.0,
            early_stop_epoch: None,
            skipped,
            config: config.clone(),
        }
    }

    pub fn step_losses(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.loss).collect()
    }

    /// Writes `<phase>_log.jsonl` (one record per step) and
    /// `<phase>_summary.json`.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut lines = String::new();
        for s in &self.steps {
            lines.push_str(&serde_json::to_string(s)?);
            lines.push('\n');
        }
        let path = dir.join(format!("{}_log.jsonl", self.phase));
        std::fs::write(&path, lines).map_err(|e| Error::io(&path, e))?;
        let summary = TrainSummary {
            phase: &self.phase,
            steps: self.steps.len(),
            epochs: self.epoch_losses.len(),
            epoch_losses: &self.epoch_losses,
            final_loss: self.epoch_losses.last().copied(),
            wall_clock_secs: self.wall_clock_secs,
            early_stop_epoch: self.early_stop_epoch,
            skipped: self.skipped,
            config: &self.config,
        };
        write_json(dir.join(format!("{}_summary.json", self.phase)), &summary)
    }
}

fn guard_partition(partition: Partition, phase: &str, batch: usize) -> Result<()> {
    if partition == Partition::Test {
        return Err(Error::TestLeak(format!("{phase} batch {batch}")));
    }
    Ok(())
}

fn run(
    mut model: BiEncoder,
    corpus: &Corpus,
    inventory: &TypeInventory,
    config: &TrainConfig,
    phase: &str,
) -> Result<(BiEncoder, TrainLog)> {
    config.validate()?;
    if corpus.is_empty() {
        return Err(Error::Empty("training corpus"));
    }
    let start = Instant::now();
    let per_epoch = steps_per_epoch(corpus.len(), config.batch_size);
    let schedule = LrSchedule::new(config.learning_rate, config.warmup_fraction, per_epoch * config.epochs);
    let mut optimizer = AdamW::new(model.params());
    let mut stopper = config.early_stop_patience.map(EarlyStopper::new);
    let full_space = BatchLabelSpace::full(inventory);
    let mut log = TrainLog::empty(phase, config, false);
    let mut step = 0;
    let mut order: Vec<usize> = (0..corpus.len()).collect();

    'epochs: for epoch in 1..=config.epochs {
        let mut shuffle_rng = seed::rng_for(config.seed, &format!("{phase}-shuffle"), &(epoch as u64).to_le_bytes());
        order.shuffle(&mut shuffle_rng);
        let mut negatives_rng = seed::rng_for(config.seed, &format!("{phase}-negatives"), &(epoch as u64).to_le_bytes());
        let mut epoch_loss = 0.0;
        let mut scored_batches = 0;
        for (b, chunk) in order.chunks(config.batch_size).enumerate() {
            step += 1;
            guard_partition(corpus.partition, phase, b)?;
            let batch: Vec<&Sentence> = chunk.iter().map(|&i| &corpus.sentences[i]).collect();
            let local_space;
            let space = match config.label_space {
                LabelSpaceMode::Full => &full_space,
                LabelSpaceMode::InBatch => {
                    let types = batch.iter().flat_map(|s| s.spans.iter().map(|sp| sp.type_id.as_str()));
                    local_space = build_batch_label_space(types, inventory, config.negatives_m, &mut negatives_rng);
                    &local_space
                }
            };
            let Some((loss, mut grads)) = model.loss_and_grad(&batch, space, inventory, config.loss_on_o)? else {
                continue;
            };
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss { loss, step, batch: b });
            }
            let grad_norm = match config.clip_norm {
                Some(c) => clip(&mut grads, c),
                None => grads.global_norm(),
            };
            let lr = schedule.lr_at(step);
            optimizer.step(model.params_mut(), &grads, lr, config);
            log.steps.push(StepRecord {
                step,
                epoch,
                batch: b,
                loss,
                lr,
                grad_norm,
            });
            epoch_loss += loss;
            scored_batches += 1;
            if config.stop_granularity == StopGranularity::Step {
                if let Some(s) = stopper.as_mut() {
                    if s.observe(loss) {
                        log.epoch_losses.push(epoch_loss / scored_batches as f64);
                        log.early_stop_epoch = Some(epoch);
                        break 'epochs;
                    }
                }
            }
        }
        let mean = if scored_batches > 0 { epoch_loss / scored_batches as f64 } else { 0.0 };
        log.epoch_losses.push(mean);
        log::info!("{phase} epoch {epoch}: mean loss {mean:.6}");
        if config.stop_granularity == StopGranularity::Epoch {
            if let Some(s) = stopper.as_mut() {
                if s.observe(mean) {
                    log.early_stop_epoch = Some(epoch);
                    break;
                }
            }
        }
    }
    log.wall_clock_secs = start.elapsed().as_secs_f64();
    Ok((model, log))
}

/// Label interpretation training on `d_lit` with its own inventory.
pub fn train_label_interpretation(model: BiEncoder, d_lit: &Corpus, config: &TrainConfig) -> Result<(BiEncoder, TrainLog)> {
    run(model, d_lit, &d_lit.inventory, config, "lit")
}

/// Few-shot fine-tuning on a support set. `k = 0` returns the model
/// untouched with a log marked as skipped.
pub fn finetune_fewshot(model: BiEncoder, support: &SupportSet, config: &TrainConfig) -> Result<(BiEncoder, TrainLog)> {
    config.validate()?;
    if support.k == 0 {
        return Ok((model, TrainLog::empty("fewshot", config, true)));
    }
    if support.is_empty() {
        return Err(Error::Empty("support set"));
    }
    run(model, &support.as_corpus(), &support.inventory, config, "fewshot")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::biencoder::EncoderConfig;
    use crate::corpus::EntitySpan;
    use crate::fewshot::sample_support_set;

    #[test]
    fn step_count_arithmetic() {
        assert_eq!(steps_per_epoch(10_000, 16), 625);
        assert_eq!(3 * steps_per_epoch(10_000, 16), 1875);
        assert_eq!(steps_per_epoch(17, 16), 2);
    }

    #[test]
    fn schedule_peaks_once_and_ends_at_zero() {
        let s = LrSchedule::new(1e-5, 0.1, 1875);
        assert_eq!(s.warmup_steps, 188);
        assert_eq!(s.lr_at(188), 1e-5);
        assert_eq!(s.lr_at(1875), 0.0);
        let lrs: Vec<f64> = (1..=1875).map(|i| s.lr_at(i)).collect();
        let argmax = (0..lrs.len()).filter(|&i| lrs[i] == 1e-5).collect::<Vec<_>>();
        assert_eq!(argmax, vec![187]);
        assert!(lrs[..188].windows(2).all(|w| w[0] < w[1]));
        assert!(lrs[187..].windows(2).all(|w| w[0] > w[1]));
    }

    #[test]
    fn patience_trace() {
        let losses = [1.0, 0.9, 0.9, 0.9, 0.9, 0.9, 0.9, 0.8];
        let mut s = EarlyStopper::new(5);
        let stop = losses.iter().position(|&l| s.observe(l)).map(|i| i + 1);
        assert_eq!(stop, Some(7));

        let mut s = EarlyStopper::new(5);
        assert!((0..100).all(|i| !s.observe(100.0 - i as f64)));
    }

    #[test]
    fn invalid_configs() {
        for cfg in [
            TrainConfig { learning_rate: 0.0, ..Default::default() },
            TrainConfig { early_stop_patience: Some(0), ..Default::default() },
            TrainConfig { batch_size: 0, ..Default::default() },
        ] {
            assert!(cfg.validate().is_err());
        }
        assert_eq!(TrainConfig::lit_litset().learning_rate, 1e-6);
        assert_eq!(TrainConfig::fewshot_litset().learning_rate, 5e-6);
        assert_eq!(TrainConfig::fewshot_baseline().epochs, 100);
    }

    fn toy_corpus() -> Corpus {
        let words = ["alice", "bob", "paris", "rome", "acme", "globex"];
        let types = ["PER", "PER", "LOC", "LOC", "ORG", "ORG"];
        let sentences = (0..24)
            .map(|i| {
                let w = i % words.len();
                let tokens = vec!["we".to_string(), "saw".into(), words[w].into(), "today".into()];
                Sentence::new(tokens, vec![EntitySpan::new(2, 3, types[w])]).unwrap()
            })
            .collect();
        let mut c = Corpus::from_sentences(sentences).unwrap();
        for (id, v) in [("PER", "person"), ("LOC", "location"), ("ORG", "organization")] {
            c.inventory.set_verbalization(id, v).unwrap();
        }
        c
    }

    fn tiny_model() -> BiEncoder {
        BiEncoder::new(EncoderConfig {
            hidden_size: 16,
            vocab_buckets: 128,
            ..Default::default()
        })
        .unwrap()
    }

    fn fast(cfg: TrainConfig) -> TrainConfig {
        TrainConfig {
            learning_rate: 1e-2,
            batch_size: 4,
            ..cfg
        }
    }

    #[test]
    fn training_is_reproducible_and_learns() {
        let c = toy_corpus();
        let cfg = fast(TrainConfig { epochs: 5, ..Default::default() });
        let (m1, l1) = train_label_interpretation(tiny_model(), &c, &cfg).unwrap();
        let (m2, l2) = train_label_interpretation(tiny_model(), &c, &cfg).unwrap();
        assert_eq!(l1.step_losses(), l2.step_losses());
        assert_eq!(m1, m2);
        assert_eq!(l1.steps.len(), 5 * 6);
        assert!(l1.epoch_losses[4] < l1.epoch_losses[0]);
        assert!(l1.steps.iter().all(|s| s.loss.is_finite()));
    }

    #[test]
    fn test_partition_never_trains() {
        let c = toy_corpus().with_partition(Partition::Test);
        let err = train_label_interpretation(tiny_model(), &c, &fast(TrainConfig::default())).unwrap_err();
        assert!(matches!(err, Error::TestLeak(_)));
    }

    #[test]
    fn fewshot_zero_shot_is_skipped() {
        let c = toy_corpus();
        let mut support = sample_support_set(&c, 1, 0).unwrap();
        support.k = 0;
        let m = tiny_model();
        let (out, log) = finetune_fewshot(m.clone(), &support, &TrainConfig::fewshot_baseline()).unwrap();
        assert!(log.skipped && log.steps.is_empty());
        assert_eq!(out, m);
    }

    #[test]
    fn fewshot_stops_early_or_at_cap() {
        let c = toy_corpus();
        let support = sample_support_set(&c, 2, 1).unwrap();
        let cfg = fast(TrainConfig { epochs: 30, ..TrainConfig::fewshot_baseline() });
        let (_, log) = finetune_fewshot(tiny_model(), &support, &cfg).unwrap();
        match log.early_stop_epoch {
            Some(e) => assert_eq!(log.epoch_losses.len(), e),
            None => assert_eq!(log.epoch_losses.len(), 30),
        }
        let dir = tempfile::tempdir().unwrap();
        log.write(dir.path()).unwrap();
        let lines = std::fs::read_to_string(dir.path().join("fewshot_log.jsonl")).unwrap();
        assert_eq!(lines.lines().count(), log.steps.len());
    }
}
