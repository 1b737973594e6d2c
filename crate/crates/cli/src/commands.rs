use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use litset_core::biencoder::{load_checkpoint, save_checkpoint, BiEncoder};
use litset_core::corpus::column::{read_column_corpus, TagScheme, TransitionPolicy};
use litset_core::corpus::jsonl::{load_corpus, read_jsonl_corpus, save_corpus, write_jsonl_corpus};
use litset_core::corpus::{compute_stats, Corpus, OverlapPolicy};
use litset_core::eval::{
    emit_grid_report, emit_report, evaluate as score_corpus, read_results_jsonl, validation_grid, write_results_jsonl,
    GridConfig, ReportFormat, RunResult,
};
use litset_core::fewshot::{
    apply_verbalization, sample_support_set, split_labels, split_partitions, SchemeKind, SplitParams, SplitSpec,
    VerbalizationScheme,
};
use litset_core::litset::{
    annotate_corpus, load_kb_records, load_linked_mentions, load_plain_sentences, MetaFilter, SamplingMode,
};
use litset_core::synthetic::{generate, SyntheticSpec};
use litset_core::trainer::{finetune_fewshot, train_label_interpretation, TrainConfig};
use litset_core::{seed, Error, Result};
use serde::Serialize;

use crate::config::{resolve, ExperimentConfig};
use crate::Common;

const CACHE_ENV: &str = "LITSET_CACHE_DIR";

/// `println!` that stays quiet when stdout is a closed pipe.
macro_rules! say {
    ($($arg:tt)*) => {{
        use std::io::Write as _;
        let _ = writeln!(std::io::stdout().lock(), $($arg)*);
    }};
}

fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidConfig(msg.into())
}

fn existing(flag: Option<PathBuf>, configured: &Option<PathBuf>, what: &str) -> Result<PathBuf> {
    let path = flag
        .or_else(|| configured.clone())
        .ok_or_else(|| invalid(format!("no {what} given (flag or config paths)")))?;
    if !path.exists() {
        return Err(invalid(format!("{what} {} does not exist", path.display())));
    }
    Ok(path)
}

fn output_dir(flag: Option<PathBuf>, cfg: &ExperimentConfig) -> Result<PathBuf> {
    let dir = flag
        .or_else(|| cfg.paths.output.clone())
        .ok_or_else(|| invalid("no output directory given (-o or paths.output)"))?;
    std::fs::create_dir_all(&dir).map_err(|e| Error::Io { path: dir.clone(), source: e })?;
    Ok(dir)
}

#[derive(Serialize)]
struct Snapshot<'a, A: Serialize> {
    command: &'a str,
    version: &'a str,
    arguments: &'a A,
    config: &'a ExperimentConfig,
}

fn write_snapshot<A: Serialize>(path: &Path, command: &str, args: &A, cfg: &ExperimentConfig) -> Result<()> {
    let snap = Snapshot {
        command,
        version: env!("CARGO_PKG_VERSION"),
        arguments: args,
        config: cfg,
    };
    let text = serde_json::to_string_pretty(&snap)? + "\n";
    std::fs::write(path, text).map_err(|e| Error::Io { path: path.into(), source: e })
}

fn write_json_file<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    std::fs::write(path, text).map_err(|e| Error::Io { path: path.into(), source: e })
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnScheme {
    Bio,
    Io,
}

/// A saved corpus directory, a JSONL file, or a two-column file.
fn read_corpus(path: &Path, scheme: ColumnScheme) -> Result<Corpus> {
    if path.is_dir() {
        return load_corpus(path);
    }
    if path.extension().is_some_and(|e| e == "jsonl") {
        return read_jsonl_corpus(path, OverlapPolicy::Reject);
    }
    let tags = match scheme {
        ColumnScheme::Bio => TagScheme::Bio,
        ColumnScheme::Io => TagScheme::Io,
    };
    read_column_corpus(path, tags, TransitionPolicy::Repair)
}

fn load_config(common: &Common) -> Result<ExperimentConfig> {
    resolve(ExperimentConfig::default(), common.config.as_deref(), &common.overrides)
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct TrainFlags {
    /// Hyperparameter preset: `baseline` or `litset`.
    #[arg(long, value_enum, default_value = "baseline")]
    preset: Preset,

    /// Peak learning rate [default: 1e-5 baseline; 1e-6 litset for label
    /// interpretation, 5e-6 litset for few-shot].
    #[arg(long)]
    lr: Option<f64>,

    /// Epochs [default: 3 label interpretation; 100 maximum few-shot].
    #[arg(long)]
    epochs: Option<usize>,

    /// Sentences per batch [default: 16].
    #[arg(long)]
    batch_size: Option<usize>,

    /// Early-stopping patience in epochs without improvement of the
    /// training loss [default: 5 few-shot; off for label interpretation].
    #[arg(long)]
    patience: Option<usize>,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
enum Preset {
    Baseline,
    Litset,
}

impl TrainFlags {
    /// Preset values where the configuration still has the stock defaults,
    /// then explicit flags.
    fn apply(&self, configured: &TrainConfig, stock: &TrainConfig, litset: &TrainConfig, seed: u64) -> TrainConfig {
        let mut cfg = configured.clone();
        if self.preset == Preset::Litset && cfg.learning_rate == stock.learning_rate {
            cfg.learning_rate = litset.learning_rate;
        }
        if let Some(lr) = self.lr {
            cfg.learning_rate = lr;
        }
        if let Some(e) = self.epochs {
            cfg.epochs = e;
        }
        if let Some(b) = self.batch_size {
            cfg.batch_size = b;
        }
        if let Some(p) = self.patience {
            cfg.early_stop_patience = Some(p);
        }
        cfg.seed = seed;
        cfg
    }
}

// ---------------------------------------------------------------------------

#[derive(Args, Debug, Serialize)]
pub struct BuildLitset {
    /// Knowledge-base records (JSONL: qid, instance_of, subclass_of, description).
    #[arg(long)]
    kb: Option<PathBuf>,
    /// Linked mentions (JSONL: sentence_index, start, end, qid).
    #[arg(long)]
    mentions: Option<PathBuf>,
    /// Tokenized sentences (JSONL: tokens).
    #[arg(long)]
    sentences: Option<PathBuf>,
    /// Verbalization mode: sampled, labels-only, description-only or all [default: sampled].
    #[arg(long)]
    mode: Option<String>,
    /// Sampling seed.
    #[arg(long)]
    seed: u64,
    /// Output corpus directory.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

pub fn build_litset(common: &Common, args: BuildLitset) -> Result<()> {
    let mut cfg = load_config(common)?;
    if let Some(m) = &args.mode {
        cfg.sampling.mode = m.parse::<SamplingMode>()?;
    }
    cfg.sampling.seed = args.seed;
    cfg.sampling.validate()?;
    let kb_path = existing(args.kb.clone(), &cfg.paths.kb, "knowledge-base file")?;
    let mentions_path = existing(args.mentions.clone(), &cfg.paths.mentions, "mentions file")?;
    let sentences_path = existing(args.sentences.clone(), &cfg.paths.sentences, "sentences file")?;
    let out = output_dir(args.output.clone(), &cfg)?;

    let kb = load_kb_records(&kb_path)?;
    let mentions = load_linked_mentions(&mentions_path)?;
    let sentences = load_plain_sentences(&sentences_path)?;
    let (corpus, report) = annotate_corpus(sentences, &mentions, &kb, &cfg.sampling, &MetaFilter::default())?;
    let corpus = corpus.with_provenance(format!("litset:{}", kb_path.display()));
    save_corpus(&corpus, &out)?;
    let stats = compute_stats(&corpus);
    write_json_file(&out.join("stats.json"), &stats)?;
    write_json_file(&out.join("build_report.json"), &report)?;
    write_snapshot(&out.join("resolved_config.json"), "build-litset", &args, &cfg)?;
    say!("{}", serde_json::to_string_pretty(&stats)?);
    Ok(())
}

// ---------------------------------------------------------------------------

#[derive(Args, Debug, Serialize)]
pub struct Stats {
    /// Corpus directory, JSONL file or two-column file.
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Tag scheme of column files.
    #[arg(long, value_enum, default_value = "bio")]
    tag_scheme: ColumnScheme,
    /// Also write the statistics to this file.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

pub fn stats(common: &Common, args: Stats) -> Result<()> {
    let cfg = load_config(common)?;
    let path = existing(args.corpus.clone(), &cfg.paths.corpus, "corpus")?;
    let stats = compute_stats(&read_corpus(&path, args.tag_scheme)?);
    let text = serde_json::to_string_pretty(&stats)?;
    if let Some(out) = &args.output {
        std::fs::write(out, text.clone() + "\n").map_err(|e| Error::Io { path: out.clone(), source: e })?;
        write_snapshot(&out.with_extension("config.json"), "stats", &args, &cfg)?;
    }
    say!("{text}");
    Ok(())
}

// ---------------------------------------------------------------------------

#[derive(Args, Debug, Serialize)]
pub struct Split {
    /// Corpus to split (the train partition when --test-corpus is given).
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Held-out test partition; its few-shot side becomes the evaluation set.
    #[arg(long)]
    test_corpus: Option<PathBuf>,
    /// Tag scheme of column files.
    #[arg(long, value_enum, default_value = "bio")]
    tag_scheme: ColumnScheme,
    /// frequency, random-half, intra or inter [default: from config, else random-half].
    #[arg(long)]
    mode: Option<String>,
    /// Frequency mode: number of most frequent labels for label interpretation.
    #[arg(long)]
    n_lit: Option<usize>,
    /// Frequency mode: number of least frequent labels held out.
    #[arg(long)]
    n_fs: Option<usize>,
    /// Intra/inter modes: JSON object mapping each fine label to its coarse class.
    #[arg(long)]
    coarse_map: Option<PathBuf>,
    /// Split seed.
    #[arg(long)]
    seed: u64,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

fn split_params(args: &Split, configured: &SplitParams) -> Result<SplitParams> {
    let Some(mode) = args.mode.as_deref() else {
        return Ok(configured.clone());
    };
    let coarse = || -> Result<BTreeMap<String, String>> {
        let path = args.coarse_map.as_ref().ok_or_else(|| invalid("--coarse-map is required for intra/inter"))?;
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io { path: path.clone(), source: e })?;
        Ok(serde_json::from_str(&text)?)
    };
    match mode.replace('_', "-").as_str() {
        "frequency" => Ok(SplitParams::Frequency {
            n_lit: args.n_lit.ok_or_else(|| invalid("--n-lit is required for frequency splits"))?,
            n_fs: args.n_fs.ok_or_else(|| invalid("--n-fs is required for frequency splits"))?,
        }),
        "random-half" => Ok(SplitParams::RandomHalf),
        "intra" => Ok(SplitParams::Intra { coarse_map: coarse()? }),
        "inter" => Ok(SplitParams::Inter { coarse_map: coarse()? }),
        other => Err(invalid(format!("unknown split mode `{other}`"))),
    }
}

pub fn split(common: &Common, args: Split) -> Result<()> {
    let mut cfg = load_config(common)?;
    cfg.split = split_params(&args, &cfg.split)?;
    let spec = SplitSpec::new(cfg.split.clone(), args.seed);
    let train_path = existing(args.corpus.clone(), &cfg.paths.corpus, "corpus")?;
    let out = output_dir(args.output.clone(), &cfg)?;
    let train = read_corpus(&train_path, args.tag_scheme)?;

    let test_path = args.test_corpus.clone().or_else(|| cfg.paths.test_corpus.clone());
    let labels = match test_path {
        Some(p) => {
            let test = read_corpus(&existing(Some(p), &None, "test corpus")?, args.tag_scheme)?;
            let s = split_partitions(&train, &test, &spec)?;
            save_corpus(&s.d_lit, out.join("d_lit"))?;
            save_corpus(&s.d_fs_train, out.join("d_fs_train"))?;
            save_corpus(&s.d_fs_test, out.join("d_fs_test"))?;
            s.labels
        }
        None => {
            let s = split_labels(&train, &spec)?;
            save_corpus(&s.d_lit, out.join("d_lit"))?;
            save_corpus(&s.d_fs, out.join("d_fs"))?;
            s.labels
        }
    };
    write_json_file(&out.join("labels.json"), &labels)?;
    write_snapshot(&out.join("resolved_config.json"), "split", &args, &cfg)?;
    say!("{} label-interpretation labels, {} few-shot labels", labels.lit.len(), labels.fs.len());
    Ok(())
}

// ---------------------------------------------------------------------------

#[derive(Args, Debug, Serialize)]
pub struct TrainLit {
    /// Label interpretation corpus.
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "bio")]
    tag_scheme: ColumnScheme,
    /// Verbalization table applied to the corpus before training.
    #[arg(long)]
    scheme: Option<PathBuf>,
    /// Continue from this checkpoint instead of a fresh model.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[command(flatten)]
    train: TrainFlags,
    /// Seed for initialization and batch order.
    #[arg(long)]
    seed: u64,
    /// Checkpoint directory.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

fn with_cache<T>(model: &BiEncoder, f: impl FnOnce() -> Result<T>) -> Result<T> {
    let dir = std::env::var_os(CACHE_ENV).map(PathBuf::from);
    if let Some(d) = &dir {
        let n = model.load_label_cache(d)?;
        log::debug!("loaded {n} cached label vectors from {}", d.display());
    }
    let out = f()?;
    if let Some(d) = &dir {
        model.save_label_cache(d)?;
    }
    Ok(out)
}

pub fn train_lit(common: &Common, args: TrainLit) -> Result<()> {
    let mut cfg = load_config(common)?;
    cfg.lit = args.train.apply(&cfg.lit, &TrainConfig::lit_baseline(), &TrainConfig::lit_litset(), args.seed);
    cfg.lit.validate()?;
    cfg.encoder.init_seed = args.seed;
    let corpus_path = existing(args.corpus.clone(), &cfg.paths.corpus, "corpus")?;
    let out = output_dir(args.output.clone(), &cfg)?;
    let mut corpus = read_corpus(&corpus_path, args.tag_scheme)?;
    if let Some(p) = &args.scheme {
        corpus = apply_verbalization(&corpus, &VerbalizationScheme::load(p)?)?;
    }
    let model = match args.checkpoint.clone().or_else(|| cfg.paths.checkpoint.clone()) {
        Some(p) => load_checkpoint(existing(Some(p), &None, "checkpoint")?)?.0,
        None => BiEncoder::new(cfg.encoder.clone())?,
    };
    let (model, log) = train_label_interpretation(model, &corpus, &cfg.lit)?;
    let provenance = serde_json::json!({
        "phase": "lit",
        "corpus": corpus_path,
        "corpus_provenance": corpus.provenance,
        "train": cfg.lit,
    });
    save_checkpoint(&model, &out, Some(corpus.inventory.content_hash()), provenance)?;
    log.write(&out)?;
    write_snapshot(&out.join("resolved_config.json"), "train-lit", &args, &cfg)?;
    say!("trained {} steps; epoch losses {:?}", log.steps.len(), log.epoch_losses);
    Ok(())
}

// ---------------------------------------------------------------------------

#[derive(Args, Debug, Serialize)]
pub struct Finetune {
    /// Checkpoint from train-lit.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Few-shot training corpus to sample the support set from.
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "bio")]
    tag_scheme: ColumnScheme,
    /// Mentions per label in the support set; 0 copies the checkpoint unchanged.
    #[arg(long, default_value_t = 5)]
    k: usize,
    #[command(flatten)]
    train: TrainFlags,
    /// Seed for support sampling and batch order.
    #[arg(long)]
    seed: u64,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

pub fn finetune(common: &Common, args: Finetune) -> Result<()> {
    let mut cfg = load_config(common)?;
    cfg.fewshot = args.train.apply(
        &cfg.fewshot,
        &TrainConfig::fewshot_baseline(),
        &TrainConfig::fewshot_litset(),
        seed::derive(args.seed, "cli-fewshot", &[]),
    );
    cfg.fewshot.validate()?;
    let ckpt = existing(args.checkpoint.clone(), &cfg.paths.checkpoint, "checkpoint")?;
    let corpus_path = existing(args.corpus.clone(), &cfg.paths.corpus, "corpus")?;
    let out = output_dir(args.output.clone(), &cfg)?;
    let (model, manifest) = load_checkpoint(&ckpt)?;
    let corpus = read_corpus(&corpus_path, args.tag_scheme)?;

    let support = sample_support_set(&corpus, args.k, args.seed)?;
    write_jsonl_corpus(&support.as_corpus(), out.join("support.jsonl"))?;
    let (model, log) = finetune_fewshot(model, &support, &cfg.fewshot)?;
    let provenance = serde_json::json!({
        "phase": "fewshot",
        "base_checkpoint": ckpt,
        "base_parameter_hash": manifest.parameter_hash,
        "k": args.k,
        "support_seed": args.seed,
        "exact": support.is_exact(),
        "train": cfg.fewshot,
    });
    save_checkpoint(&model, &out, Some(support.inventory.content_hash()), provenance)?;
    log.write(&out)?;
    write_snapshot(&out.join("resolved_config.json"), "finetune", &args, &cfg)?;
    if log.skipped {
        say!("k = 0: checkpoint copied without fine-tuning");
    } else {
        say!(
            "fine-tuned {} epochs on {} sentences (exact: {}); final loss {:?}",
            log.epoch_losses.len(),
            support.sentences.len(),
            support.is_exact(),
            log.epoch_losses.last()
        );
    }
    Ok(())
}

// ---------------------------------------------------------------------------

#[derive(Args, Debug, Serialize)]
pub struct Evaluate {
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Evaluation corpus; its inventory is the scored label space.
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "bio")]
    tag_scheme: ColumnScheme,
    /// Verbalization table applied to the corpus before scoring.
    #[arg(long)]
    scheme: Option<PathBuf>,
    /// k recorded with the result.
    #[arg(long, default_value_t = 0)]
    k: usize,
    /// Split seed recorded with the result.
    #[arg(long, default_value_t = 0)]
    split_seed: u64,
    /// Support seed recorded with the result.
    #[arg(long, default_value_t = 0)]
    support_seed: u64,
    /// Directory for results.jsonl and the config snapshot.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

pub fn evaluate(common: &Common, args: Evaluate) -> Result<()> {
    let cfg = load_config(common)?;
    let ckpt = existing(args.checkpoint.clone(), &cfg.paths.checkpoint, "checkpoint")?;
    let corpus_path = existing(args.corpus.clone(), &cfg.paths.test_corpus.clone().or(cfg.paths.corpus.clone()), "corpus")?;
    let (model, manifest) = load_checkpoint(&ckpt)?;
    let mut corpus = read_corpus(&corpus_path, args.tag_scheme)?;
    if let Some(p) = &args.scheme {
        corpus = apply_verbalization(&corpus, &VerbalizationScheme::load(p)?)?;
    }
    let score = with_cache(&model, || score_corpus(&model, &corpus))?;
    let hash_input = format!("{}:{}:{}", manifest.parameter_hash, corpus.inventory.content_hash(), corpus.len());
    let result = RunResult {
        split_seed: args.split_seed,
        support_seed: args.support_seed,
        k: args.k,
        precision: score.precision,
        recall: score.recall,
        f1: score.f1,
        tp: score.tp,
        fp: score.fp,
        fn_: score.fn_,
        config_hash: seed::short_hash(hash_input.as_bytes()),
    };
    if let Some(out) = args.output.clone().or_else(|| cfg.paths.output.clone()) {
        let out = output_dir(Some(out), &cfg)?;
        write_results_jsonl(std::slice::from_ref(&result), out.join("results.jsonl"))?;
        write_snapshot(&out.join("resolved_config.json"), "evaluate", &args, &cfg)?;
    }
    say!("{}", serde_json::to_string(&result)?);
    Ok(())
}

// ---------------------------------------------------------------------------

#[derive(Args, Debug, Serialize)]
pub struct Grid {
    /// Output directory of `split` with a test corpus (d_lit, d_fs_train, d_fs_test).
    #[arg(long)]
    split_dir: PathBuf,
    /// Label counts, comma separated [default: 3,5,10,30,50].
    #[arg(long, value_delimiter = ',')]
    labels: Option<Vec<usize>>,
    /// Schemes, comma separated: cryptic, short, long, identity [default: cryptic,short,long].
    #[arg(long, value_delimiter = ',')]
    schemes: Option<Vec<String>>,
    /// Verbalization table for a scheme, as NAME=PATH. Repeatable.
    #[arg(long = "scheme-table", value_name = "NAME=PATH")]
    scheme_tables: Vec<String>,
    /// Mentions kept per label interpretation subset [default: the largest
    /// budget every subset of the smallest label count can meet].
    #[arg(long)]
    budget: Option<usize>,
    /// Shot counts, comma separated [default: 0,1,5,10].
    #[arg(long, value_delimiter = ',')]
    k: Option<Vec<usize>>,
    /// Label subset seeds, comma separated [default: 0,1,2].
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// Support set seeds, comma separated [default: 0,1,2].
    #[arg(long, value_delimiter = ',')]
    support_seeds: Option<Vec<u64>>,
    #[command(flatten)]
    train: TrainFlags,
    /// Base seed for cryptic labels, initialization and batch order.
    #[arg(long)]
    seed: u64,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

fn default_budget(d_lit: &Corpus, n_min: usize) -> usize {
    let mut counts: Vec<usize> = d_lit.type_mention_counts().into_values().collect();
    counts.sort_unstable();
    counts.iter().take(n_min).sum()
}

fn build_schemes(names: &[String], tables: &BTreeMap<String, PathBuf>, inventory: &litset_core::TypeInventory, seed: u64) -> Result<Vec<VerbalizationScheme>> {
    names
        .iter()
        .map(|name| {
            let kind: SchemeKind = name.parse()?;
            if let Some(path) = tables.get(name) {
                let scheme = VerbalizationScheme::load(path)?;
                if scheme.kind != kind {
                    return Err(invalid(format!("table {} holds a {} scheme, not {kind}", path.display(), scheme.kind)));
                }
                return Ok(scheme);
            }
            match kind {
                SchemeKind::Cryptic => VerbalizationScheme::cryptic(inventory, seed::derive(seed, "cli-cryptic", &[])),
                SchemeKind::Identity => Ok(VerbalizationScheme::identity(inventory)),
                other => Err(invalid(format!("scheme `{other}` needs a table (--scheme-table {other}=PATH)"))),
            }
        })
        .collect()
}

pub fn grid(common: &Common, args: Grid) -> Result<()> {
    let mut cfg = load_config(common)?;
    if let Some(l) = &args.labels {
        cfg.grid.n_labels = l.clone();
    }
    if let Some(s) = &args.schemes {
        cfg.grid.schemes = s.clone();
    }
    for t in &args.scheme_tables {
        let (name, path) = t.split_once('=').ok_or_else(|| invalid(format!("--scheme-table `{t}` is not NAME=PATH")))?;
        cfg.grid.scheme_tables.insert(name.to_string(), PathBuf::from(path));
    }
    if let Some(k) = &args.k {
        cfg.k_list = k.clone();
    }
    if let Some(s) = &args.seeds {
        cfg.split_seeds = s.clone();
    }
    if let Some(s) = &args.support_seeds {
        cfg.support_seeds = s.clone();
    }
    cfg.lit = args.train.apply(&cfg.lit, &TrainConfig::lit_baseline(), &TrainConfig::lit_litset(), seed::derive(args.seed, "cli-lit", &[]));
    cfg.fewshot.seed = seed::derive(args.seed, "cli-fewshot", &[]);
    cfg.encoder.init_seed = args.seed;

    let dir = existing(Some(args.split_dir.clone()), &None, "split directory")?;
    let d_lit = load_corpus(dir.join("d_lit"))?;
    let fs_train = load_corpus(dir.join("d_fs_train"))?;
    let fs_test = load_corpus(dir.join("d_fs_test"))?;
    let n_min = *cfg.grid.n_labels.iter().min().ok_or(Error::Empty("label counts"))?;
    let budget = args.budget.or(cfg.grid.budget).unwrap_or_else(|| default_budget(&d_lit, n_min));
    cfg.grid.budget = Some(budget);

    let mut all = d_lit.inventory.clone();
    for (id, v) in fs_train.inventory.types().chain(fs_test.inventory.types()) {
        all.insert(id, v)?;
    }
    let schemes = build_schemes(&cfg.grid.schemes, &cfg.grid.scheme_tables, &all, args.seed)?;
    let out = output_dir(args.output.clone(), &cfg)?;
    write_snapshot(&out.join("resolved_config.json"), "grid", &args, &cfg)?;

    let grid_cfg = GridConfig {
        n_labels: cfg.grid.n_labels.clone(),
        budget,
        k_list: cfg.k_list.clone(),
        seeds: cfg.split_seeds.clone(),
        support_seeds: cfg.support_seeds.clone(),
        encoder: cfg.encoder.clone(),
        lit: cfg.lit.clone(),
        fewshot: cfg.fewshot.clone(),
    };
    let cells = validation_grid(&d_lit, &fs_train, &fs_test, &schemes, &grid_cfg)?;
    emit_grid_report(&cells, &out)?;
    let results: Vec<RunResult> = cells.iter().flat_map(|c| c.results.iter().cloned()).collect();
    write_results_jsonl(&results, out.join("results.jsonl"))?;
    say!("{}", litset_core::eval::grid_markdown(&cells).trim_end());
    Ok(())
}

// ---------------------------------------------------------------------------

#[derive(Args, Debug, Serialize)]
pub struct Report {
    /// Results JSONL files. Repeatable.
    #[arg(long, required = true)]
    results: Vec<PathBuf>,
    #[arg(long, value_enum, default_value = "markdown")]
    format: Format,
    /// Report file.
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Format {
    Csv,
    Json,
    Markdown,
}

pub fn report(common: &Common, args: Report) -> Result<()> {
    let cfg = load_config(common)?;
    let mut rows = Vec::new();
    for p in &args.results {
        rows.extend(read_results_jsonl(existing(Some(p.clone()), &None, "results file")?)?);
    }
    let format = match args.format {
        Format::Csv => ReportFormat::Csv,
        Format::Json => ReportFormat::Json,
        Format::Markdown => ReportFormat::Markdown,
    };
    emit_report(&rows, &args.output, format)?;
    let mut snapshot = args.output.clone().into_os_string();
    snapshot.push(".config.json");
    write_snapshot(Path::new(&snapshot), "report", &args, &cfg)?;
    Ok(())
}

// ---------------------------------------------------------------------------

#[derive(Args, Debug, Serialize)]
pub struct ToyCorpus {
    /// Frequent labels.
    #[arg(long, default_value_t = 30)]
    lit_labels: usize,
    /// Rare held-out labels.
    #[arg(long, default_value_t = 8)]
    fs_labels: usize,
    /// Mentions per frequent label.
    #[arg(long, default_value_t = 100)]
    mentions_per_label: usize,
    #[arg(long)]
    seed: u64,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

pub fn toy_corpus(common: &Common, args: ToyCorpus) -> Result<()> {
    let cfg = load_config(common)?;
    let out = output_dir(args.output.clone(), &cfg)?;
    let data = generate(&SyntheticSpec {
        n_lit_labels: args.lit_labels,
        n_fs_labels: args.fs_labels,
        lit_mentions_per_label: args.mentions_per_label,
        seed: args.seed,
        ..Default::default()
    })?;
    save_corpus(&data.train, out.join("train"))?;
    save_corpus(&data.test, out.join("test"))?;
    data.short.save(out.join("short.json"))?;
    data.long.save(out.join("long.json"))?;
    write_snapshot(&out.join("resolved_config.json"), "toy-corpus", &args, &cfg)?;
    say!(
        "{} train sentences, {} test sentences, {} + {} labels",
        data.train.len(),
        data.test.len(),
        data.lit_types.len(),
        data.fs_types.len()
    );
    Ok(())
}
