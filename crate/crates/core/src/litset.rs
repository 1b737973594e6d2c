//! Builds a LitSet-style corpus: entity-linking mentions are typed with
//! knowledge-base information (instance-of / subclass-of labels and the
//! free-text description), sampled per mention.
//!
//! For every mention the sampler flips a fair coin between the description
//! and the label pool. On the label branch the number of tags is drawn from
//! a geometric distribution on {1, 2, ...}, truncated at the pool size, and
//! that many distinct tags are drawn uniformly and joined with the separator.
//! Identical verbalization strings share one type id (the string itself).

use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rand::seq::index;
use rand::Rng as _;
use rand_distr::{Distribution, Geometric};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, EntitySpan, Sentence, TypeInventory};
use crate::error::{Error, Result};
use crate::seed::{self, Rng};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KbEntityRecord {
    pub qid: String,
    #[serde(default)]
    pub instance_of: Vec<String>,
    #[serde(default)]
    pub subclass_of: Vec<String>,
    #[serde(default)]
    pub description: Option<String>,
}

impl KbEntityRecord {
    pub fn description(&self) -> Option<&str> {
        self.description.as_deref().filter(|d| !d.trim().is_empty())
    }

    /// instance-of ∪ subclass-of as one flat pool, first occurrence order, no duplicates.
    pub fn tag_pool(&self) -> Vec<&str> {
        let mut seen = HashSet::new();
        self.instance_of
            .iter()
            .chain(&self.subclass_of)
            .map(|t| t.trim())
            .filter(|t| !t.is_empty() && seen.insert(*t))
            .collect()
    }

    pub fn is_usable(&self) -> bool {
        !self.qid.is_empty() && (self.description().is_some() || !self.tag_pool().is_empty())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinkedMention {
    pub sentence_index: usize,
    pub start: usize,
    pub end: usize,
    pub qid: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingMode {
    #[default]
    Sampled,
    LabelsOnly,
    DescriptionOnly,
    All,
}

impl std::str::FromStr for SamplingMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "sampled" => Ok(Self::Sampled),
            "labels_only" | "labels" => Ok(Self::LabelsOnly),
            "description_only" | "description" => Ok(Self::DescriptionOnly),
            "all" => Ok(Self::All),
            other => Err(Error::InvalidConfig(format!("unknown sampling mode `{other}`"))),
        }
    }
}

/// Whether the random stream is keyed per mention or per linked entity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingGranularity {
    #[default]
    PerMention,
    PerEntity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingConfig {
    pub mode: SamplingMode,
    #[serde(default = "default_p")]
    pub p_geometric: f64,
    pub seed: u64,
    #[serde(default = "default_separator")]
    pub tag_separator: String,
    #[serde(default)]
    pub granularity: SamplingGranularity,
}

fn default_p() -> f64 {
    0.5
}

fn default_separator() -> String {
    ", ".to_string()
}

impl SamplingConfig {
    pub fn new(mode: SamplingMode, seed: u64) -> Self {
        Self {
            mode,
            p_geometric: default_p(),
            seed,
            tag_separator: default_separator(),
            granularity: SamplingGranularity::PerMention,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.p_geometric > 0.0 && self.p_geometric < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "p_geometric must lie in (0, 1), got {}",
                self.p_geometric
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetaFilter {
    pub denylist: Vec<String>,
}

impl Default for MetaFilter {
    fn default() -> Self {
        Self {
            denylist: ["wikimedia", "disambiguation page", "list article", "template", "category"]
                .into_iter()
                .map(String::from)
                .collect(),
        }
    }
}

impl MetaFilter {
    pub fn new(denylist: Vec<String>) -> Result<Self> {
        if denylist.is_empty() {
            return Err(Error::InvalidConfig("meta filter denylist is empty".into()));
        }
        Ok(Self {
            denylist: denylist.into_iter().map(|d| d.to_lowercase()).collect(),
        })
    }

    pub fn matches(&self, text: &str) -> bool {
        let lower = text.to_lowercase();
        self.denylist.iter().any(|d| lower.contains(&d.to_lowercase()))
    }
}

/// Drops knowledge-base bookkeeping labels from both label lists.
/// The description is left untouched.
pub fn filter_meta_types(record: &KbEntityRecord, filter: &MetaFilter) -> KbEntityRecord {
    let keep = |labels: &[String]| -> Vec<String> {
        labels.iter().filter(|l| !filter.matches(l)).cloned().collect()
    };
    KbEntityRecord {
        qid: record.qid.clone(),
        instance_of: keep(&record.instance_of),
        subclass_of: keep(&record.subclass_of),
        description: record.description.clone(),
    }
}

/// Reads knowledge-base records, one JSON object per line. Unusable records
/// (no labels and no description) are skipped; later duplicates win.
pub fn load_kb_records(path: impl AsRef<Path>) -> Result<BTreeMap<String, KbEntityRecord>> {
    let path = path.as_ref();
    let mut out = BTreeMap::new();
    for_each_json_line(path, |line, record: KbEntityRecord| {
        if !record.is_usable() {
            log::warn!("{}:{line}: record `{}` has neither labels nor a description, skipped", path.display(), record.qid);
            return Ok(());
        }
        if out.insert(record.qid.clone(), record).is_some() {
            log::info!("{}:{line}: duplicate qid, keeping the later record", path.display());
        }
        Ok(())
    })?;
    Ok(out)
}

pub fn load_linked_mentions(path: impl AsRef<Path>) -> Result<Vec<LinkedMention>> {
    let mut out = Vec::new();
    for_each_json_line(path.as_ref(), |_, m: LinkedMention| {
        out.push(m);
        Ok(())
    })?;
    Ok(out)
}

#[derive(Deserialize)]
struct PlainSentence {
    tokens: Vec<String>,
}

/// Reads `{"tokens": [...]}` lines into span-less sentences.
pub fn load_plain_sentences(path: impl AsRef<Path>) -> Result<Vec<Sentence>> {
    let path = path.as_ref();
    let mut out = Vec::new();
    for_each_json_line(path, |line, s: PlainSentence| {
        if s.tokens.is_empty() {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line,
                message: "sentence without tokens".into(),
            });
        }
        out.push(Sentence::unannotated(s.tokens));
        Ok(())
    })?;
    Ok(out)
}

fn for_each_json_line<T, F>(path: &Path, mut f: F) -> Result<()>
where
    T: for<'de> Deserialize<'de>,
    F: FnMut(usize, T) -> Result<()>,
{
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let value = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: idx + 1,
            message: e.to_string(),
        })?;
        f(idx + 1, value)?;
    }
    Ok(())
}

/// Number of tags: geometric on {1, 2, ...} with success probability `p`,
/// truncated at `max_n`.
pub fn sample_tag_count(rng: &mut Rng, p: f64, max_n: usize) -> usize {
    assert!(max_n >= 1, "max_n must be at least 1");
    let failures = Geometric::new(p).expect("p in (0, 1]").sample(rng);
    usize::try_from(failures.saturating_add(1)).unwrap_or(usize::MAX).min(max_n)
}

/// Draws `n` distinct tags uniformly without replacement, in draw order.
fn pick_tags<'a>(pool: &[&'a str], n: usize, rng: &mut Rng) -> Vec<&'a str> {
    index::sample(rng, pool.len(), n).into_iter().map(|i| pool[i]).collect()
}

pub fn sample_type_verbalization(record: &KbEntityRecord, config: &SamplingConfig, rng: &mut Rng) -> Result<String> {
    let pool = record.tag_pool();
    let description = record.description();
    if pool.is_empty() && description.is_none() {
        return Err(Error::InvalidRecord(format!(
            "`{}` has neither labels nor a description",
            record.qid
        )));
    }
    let sample_labels = |rng: &mut Rng| {
        let n = sample_tag_count(rng, config.p_geometric, pool.len());
        pick_tags(&pool, n, rng).join(&config.tag_separator)
    };
    let verbalization = match config.mode {
        SamplingMode::Sampled => {
            let want_description = rng.random_bool(0.5);
            match (want_description, description) {
                (true, Some(d)) => d.to_string(),
                _ if !pool.is_empty() => sample_labels(rng),
                (_, Some(d)) => d.to_string(),
                (_, None) => unreachable!(),
            }
        }
        SamplingMode::DescriptionOnly => match description {
            Some(d) => d.to_string(),
            None => sample_labels(rng),
        },
        SamplingMode::LabelsOnly => {
            if pool.is_empty() {
                description.unwrap_or_default().to_string()
            } else {
                sample_labels(rng)
            }
        }
        SamplingMode::All => description
            .into_iter()
            .chain(pool.iter().copied())
            .collect::<Vec<_>>()
            .join(&config.tag_separator),
    };
    Ok(verbalization)
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BuildReport {
    pub mentions_in: usize,
    pub mentions_annotated: usize,
    pub unresolved_qids: usize,
    pub unusable_records: usize,
    pub collisions: usize,
}

fn mention_key(m: &LinkedMention, granularity: SamplingGranularity) -> Vec<u8> {
    match granularity {
        SamplingGranularity::PerEntity => m.qid.as_bytes().to_vec(),
        SamplingGranularity::PerMention => {
            let mut key = Vec::with_capacity(24 + m.qid.len());
            key.extend_from_slice(&(m.sentence_index as u64).to_le_bytes());
            key.extend_from_slice(&(m.start as u64).to_le_bytes());
            key.extend_from_slice(&(m.end as u64).to_le_bytes());
            key.extend_from_slice(m.qid.as_bytes());
            key
        }
    }
}

/// Turns linked mentions into typed spans.
///
/// Mentions are processed in (sentence, start, end, qid) order and each one
/// draws from a random stream keyed by the configured seed and the mention
/// itself, so the output does not depend on input order or on threading.
pub fn annotate_corpus(
    sentences: Vec<Sentence>,
    mentions: &[LinkedMention],
    kb: &BTreeMap<String, KbEntityRecord>,
    config: &SamplingConfig,
    filter: &MetaFilter,
) -> Result<(Corpus, BuildReport)> {
    config.validate()?;
    let mut report = BuildReport {
        mentions_in: mentions.len(),
        ..Default::default()
    };

    let mut ordered: Vec<&LinkedMention> = mentions.iter().collect();
    ordered.sort_by(|a, b| {
        (a.sentence_index, a.start, a.end, &a.qid).cmp(&(b.sentence_index, b.start, b.end, &b.qid))
    });
    for m in &ordered {
        let valid = sentences
            .get(m.sentence_index)
            .is_some_and(|s| m.start < m.end && m.end <= s.tokens.len());
        if !valid {
            return Err(Error::InvalidRecord(format!(
                "mention ({}, {}, {}) of `{}` does not fit its sentence",
                m.sentence_index, m.start, m.end, m.qid
            )));
        }
    }

    enum Outcome {
        Typed(String),
        Unresolved,
        Unusable,
    }
    let outcomes: Vec<Outcome> = ordered
        .par_iter()
        .map(|m| {
            let Some(record) = kb.get(&m.qid) else {
                return Ok(Outcome::Unresolved);
            };
            let mut record = filter_meta_types(record, filter);
            if record.description().is_some_and(|d| filter.matches(d)) {
                record.description = None;
            }
            if !record.is_usable() {
                return Ok(Outcome::Unusable);
            }
            let mut rng = seed::rng_for(config.seed, "litset-mention", &mention_key(m, config.granularity));
            sample_type_verbalization(&record, config, &mut rng).map(Outcome::Typed)
        })
        .collect::<Result<_>>()?;

    let mut sentences = sentences;
    for s in &mut sentences {
        s.spans.clear();
    }
    let mut inventory = TypeInventory::default();
    for (m, outcome) in ordered.iter().zip(outcomes) {
        let verbalization = match outcome {
            Outcome::Typed(v) => v,
            Outcome::Unresolved => {
                report.unresolved_qids += 1;
                continue;
            }
            Outcome::Unusable => {
                report.unusable_records += 1;
                continue;
            }
        };
        let span = EntitySpan::new(m.start, m.end, verbalization.clone());
        let sentence = &mut sentences[m.sentence_index];
        if sentence.spans.iter().any(|s| s.overlaps(&span)) {
            log::debug!(
                "mention ({}, {}, {}) of `{}` collides with an earlier mention, dropped",
                m.sentence_index,
                m.start,
                m.end,
                m.qid
            );
            report.collisions += 1;
            continue;
        }
        inventory.insert(verbalization.clone(), verbalization)?;
        sentence.spans.push(span);
        report.mentions_annotated += 1;
    }
    for s in &mut sentences {
        s.spans.sort();
    }
    if report.unresolved_qids > 0 {
        log::warn!("{} mention(s) dropped: qid not in the knowledge base", report.unresolved_qids);
    }
    let corpus = Corpus::new(sentences, inventory)?.with_provenance(format!(
        "litset mode={:?} seed={} p={}",
        config.mode, config.seed, config.p_geometric
    ));
    Ok((corpus, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    pub(crate) fn hopkins() -> KbEntityRecord {
        KbEntityRecord {
            qid: "Q1052331".into(),
            instance_of: vec![
                "teaching hospital".into(),
                "university hospital".into(),
                "Wikimedia disambiguation page".into(),
            ],
            subclass_of: vec!["hospital".into()],
            description: Some("hospital in Baltimore, Maryland".into()),
        }
    }

    #[test]
    fn meta_filter_removes_bookkeeping_labels() {
        let r = filter_meta_types(&hopkins(), &MetaFilter::default());
        assert_eq!(r.instance_of, vec!["teaching hospital", "university hospital"]);
        assert_eq!(r.description, hopkins().description);

        let clean = KbEntityRecord {
            qid: "Q1".into(),
            instance_of: vec!["mountain".into()],
            subclass_of: vec![],
            description: None,
        };
        assert_eq!(filter_meta_types(&clean, &MetaFilter::default()), clean);

        let only_meta = KbEntityRecord {
            qid: "Q2".into(),
            instance_of: vec!["Wikimedia list article".into()],
            subclass_of: vec![],
            description: Some("d".into()),
        };
        let r = filter_meta_types(&only_meta, &MetaFilter::default());
        assert!(r.instance_of.is_empty());
        assert!(r.is_usable());
        assert!(MetaFilter::new(vec![]).is_err());
    }

    #[test]
    fn description_only_is_verbatim() {
        let cfg = SamplingConfig::new(SamplingMode::DescriptionOnly, 1);
        let mut rng = Rng::seed_from_u64(0);
        assert_eq!(
            sample_type_verbalization(&hopkins(), &cfg, &mut rng).unwrap(),
            "hospital in Baltimore, Maryland"
        );
    }

    #[test]
    fn labels_only_trace_with_forced_count() {
        // Find a seed whose index draw selects positions [0, 1] in order,
        // using the sampling primitive directly, then check the joined tags.
        let pool = ["teaching hospital", "university hospital", "hospital"];
        let seed = (0u64..)
            .find(|&s| {
                let mut rng = Rng::seed_from_u64(s);
                index::sample(&mut rng, pool.len(), 2).into_vec() == vec![0, 1]
            })
            .unwrap();
        let mut rng = Rng::seed_from_u64(seed);
        assert_eq!(
            pick_tags(&pool, 2, &mut rng).join(", "),
            "teaching hospital, university hospital"
        );
    }

    #[test]
    fn falls_back_to_the_non_empty_source() {
        let r = KbEntityRecord {
            qid: "Q3".into(),
            instance_of: vec![],
            subclass_of: vec![],
            description: Some("d".into()),
        };
        let cfg = SamplingConfig::new(SamplingMode::Sampled, 0);
        let mut rng = Rng::seed_from_u64(9);
        for _ in 0..100 {
            assert_eq!(sample_type_verbalization(&r, &cfg, &mut rng).unwrap(), "d");
        }
        let cfg = SamplingConfig::new(SamplingMode::LabelsOnly, 0);
        assert_eq!(sample_type_verbalization(&r, &cfg, &mut rng).unwrap(), "d");

        let empty = KbEntityRecord {
            description: None,
            ..r
        };
        assert!(sample_type_verbalization(&empty, &cfg, &mut rng).is_err());
    }

    #[test]
    fn all_mode_lists_description_then_tags() {
        let r = filter_meta_types(&hopkins(), &MetaFilter::default());
        let cfg = SamplingConfig::new(SamplingMode::All, 0);
        let mut rng = Rng::seed_from_u64(0);
        assert_eq!(
            sample_type_verbalization(&r, &cfg, &mut rng).unwrap(),
            "hospital in Baltimore, Maryland, teaching hospital, university hospital, hospital"
        );
    }

    #[test]
    fn tag_count_truncates_and_matches_pmf() {
        let mut rng = Rng::seed_from_u64(5);
        assert!((0..1000).all(|_| sample_tag_count(&mut rng, 0.5, 1) == 1));
        let n = 40_000;
        let mut ones = 0;
        let mut twos = 0;
        for _ in 0..n {
            match sample_tag_count(&mut rng, 0.5, usize::MAX) {
                1 => ones += 1,
                2 => twos += 1,
                _ => {}
            }
        }
        assert!((ones as f64 / n as f64 - 0.5).abs() < 0.01);
        assert!((twos as f64 / n as f64 - 0.25).abs() < 0.01);
    }

    fn toks(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("w{i}")).collect()
    }

    fn kb(records: Vec<KbEntityRecord>) -> BTreeMap<String, KbEntityRecord> {
        records.into_iter().map(|r| (r.qid.clone(), r)).collect()
    }

    #[test]
    fn annotate_shares_type_ids_and_reports_drops() {
        let sentences = vec![Sentence::unannotated(toks(6)), Sentence::unannotated(toks(3))];
        let m = |s, a, b, q: &str| LinkedMention {
            sentence_index: s,
            start: a,
            end: b,
            qid: q.into(),
        };
        let mentions = vec![
            m(0, 0, 2, "Q1052331"),
            m(1, 1, 2, "Q1052331"),
            m(0, 1, 3, "Q1052331"),
            m(0, 4, 5, "Qmissing"),
        ];
        let cfg = SamplingConfig::new(SamplingMode::DescriptionOnly, 3);
        let (c, report) = annotate_corpus(sentences, &mentions, &kb(vec![hopkins()]), &cfg, &MetaFilter::default()).unwrap();
        assert_eq!(c.inventory.num_types(), 1);
        assert_eq!(c.mention_count(), 2);
        assert_eq!(report.collisions, 1);
        assert_eq!(report.unresolved_qids, 1);
        assert_eq!(c.sentences[0].spans, vec![EntitySpan::new(0, 2, "hospital in Baltimore, Maryland")]);

        let bad = vec![m(1, 2, 4, "Q1052331")];
        assert!(annotate_corpus(vec![Sentence::unannotated(toks(3)); 2], &bad, &kb(vec![hopkins()]), &cfg, &MetaFilter::default()).is_err());
    }

    #[test]
    fn annotate_is_order_independent() {
        let records: Vec<_> = (0..20)
            .map(|i| KbEntityRecord {
                qid: format!("Q{i}"),
                instance_of: (0..4).map(|j| format!("class {i}-{j}")).collect(),
                subclass_of: vec![format!("super {}", i % 3)],
                description: Some(format!("description of {i}")),
            })
            .collect();
        let kb = kb(records);
        let sentences: Vec<_> = (0..30).map(|_| Sentence::unannotated(toks(8))).collect();
        let mentions: Vec<_> = (0..30)
            .flat_map(|s| {
                (0..3).map(move |j| LinkedMention {
                    sentence_index: s,
                    start: 2 * j,
                    end: 2 * j + 1,
                    qid: format!("Q{}", (s * 3 + j) % 20),
                })
            })
            .collect();
        let cfg = SamplingConfig::new(SamplingMode::Sampled, 11);
        let (a, _) = annotate_corpus(sentences.clone(), &mentions, &kb, &cfg, &MetaFilter::default()).unwrap();
        let mut reversed = mentions.clone();
        reversed.reverse();
        let (b, _) = annotate_corpus(sentences.clone(), &reversed, &kb, &cfg, &MetaFilter::default()).unwrap();
        assert_eq!(a, b);

        // the same entity may receive different verbalizations per mention
        let q0: HashSet<_> = a
            .sentences
            .iter()
            .zip(0..)
            .flat_map(|(s, si)| s.spans.iter().enumerate().filter(move |(j, _)| (si * 3 + j) % 20 == 0).map(|(_, sp)| sp.type_id.clone()))
            .collect();
        assert!(q0.len() > 1);
    }

    #[test]
    fn load_records_skips_and_dedups() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("kb.jsonl");
        std::fs::write(
            &path,
            concat!(
                r#"{"qid":"Q1","instance_of":["a"],"subclass_of":[],"description":"first"}"#, "\n",
                r#"{"qid":"Q1","instance_of":["a"],"subclass_of":[],"description":"second"}"#, "\n",
                r#"{"qid":"Q2","instance_of":[],"subclass_of":[],"description":null}"#, "\n",
            ),
        )
        .unwrap();
        let kb = load_kb_records(&path).unwrap();
        assert_eq!(kb.len(), 1);
        assert_eq!(kb["Q1"].description.as_deref(), Some("second"));

        std::fs::write(&path, "{\"qid\":\"Q1\"}\nnot json\n").unwrap();
        assert!(matches!(load_kb_records(&path), Err(Error::Parse { line: 2, .. })));
    }
}
