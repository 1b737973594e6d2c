//! JSONL sentence files (`{"tokens": [...], "spans": [{"start", "end", "type"}]}`)
//! and corpus directories.
//!
//! A corpus directory holds `corpus.jsonl`, `inventory.json` (type id to
//! verbalization, O first) and `meta.json`. Types whose ids contain
//! whitespace, as produced by the LitSet builder, survive this format intact.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{resolve_overlaps, Corpus, OverlapPolicy, Partition, Sentence, TypeInventory};
use crate::error::{Error, Result};

pub const CORPUS_FILE: &str = "corpus.jsonl";
pub const INVENTORY_FILE: &str = "inventory.json";
pub const META_FILE: &str = "meta.json";

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CorpusMeta {
    language: String,
    provenance: String,
    partition: Partition,
}

pub fn read_sentences_jsonl(path: impl AsRef<Path>, overlaps: OverlapPolicy) -> Result<Vec<Sentence>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: idx + 1,
            message,
        };
        let mut sentence: Sentence = serde_json::from_str(&line).map_err(|e| parse_err(e.to_string()))?;
        sentence.spans.sort();
        if overlaps == OverlapPolicy::Repair {
            let before = sentence.spans.len();
            sentence.spans = resolve_overlaps(std::mem::take(&mut sentence.spans));
            if sentence.spans.len() != before {
                log::warn!(
                    "{}:{}: dropped {} overlapping span(s)",
                    path.display(),
                    idx + 1,
                    before - sentence.spans.len()
                );
            }
        }
        sentence.validate().map_err(|e| parse_err(e.to_string()))?;
        out.push(sentence);
    }
    Ok(out)
}

/// Reads a bare JSONL file; the inventory is built from observed types.
pub fn read_jsonl_corpus(path: impl AsRef<Path>, overlaps: OverlapPolicy) -> Result<Corpus> {
    Corpus::from_sentences(read_sentences_jsonl(path, overlaps)?)
}

pub fn write_jsonl_corpus(corpus: &Corpus, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for sentence in &corpus.sentences {
        serde_json::to_writer(&mut w, sentence)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn save_corpus(corpus: &Corpus, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_jsonl_corpus(corpus, dir.join(CORPUS_FILE))?;
    write_json(dir.join(INVENTORY_FILE), &corpus.inventory)?;
    write_json(
        dir.join(META_FILE),
        &CorpusMeta {
            language: corpus.language.clone(),
            provenance: corpus.provenance.clone(),
            partition: corpus.partition,
        },
    )
}

pub fn load_corpus(dir: impl AsRef<Path>) -> Result<Corpus> {
    let dir = dir.as_ref();
    let sentences = read_sentences_jsonl(dir.join(CORPUS_FILE), OverlapPolicy::Reject)?;
    let inventory: TypeInventory = read_json(dir.join(INVENTORY_FILE))?;
    let meta: Option<CorpusMeta> = if dir.join(META_FILE).exists() {
        Some(read_json(dir.join(META_FILE))?)
    } else {
        None
    };
    let mut corpus = Corpus::new(sentences, inventory)?;
    if let Some(meta) = meta {
        corpus.language = meta.language;
        corpus.provenance = meta.provenance;
        corpus.partition = meta.partition;
    }
    Ok(corpus)
}

pub(crate) fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let path = path.as_ref();
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

pub(crate) fn read_json<T: for<'de> Deserialize<'de>>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        message: e.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::EntitySpan;

    #[test]
    fn directory_round_trip_keeps_whitespace_types() {
        let dir = tempfile::tempdir().unwrap();
        let s = Sentence::new(
            vec!["Johns".into(), "Hopkins".into(), "Hospital".into()],
            vec![EntitySpan::new(0, 3, "hospital in Baltimore, Maryland")],
        )
        .unwrap();
        let c = Corpus::from_sentences(vec![s])
            .unwrap()
            .with_partition(Partition::Train)
            .with_provenance("fixture");
        save_corpus(&c, dir.path()).unwrap();
        assert_eq!(load_corpus(dir.path()).unwrap(), c);
    }

    #[test]
    fn overlap_policy_applies_at_ingest() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.jsonl");
        fs::write(
            &path,
            r#"{"tokens":["a","b","c"],"spans":[{"start":0,"end":2,"type":"X"},{"start":1,"end":3,"type":"Y"},{"start":0,"end":1,"type":"Z"}]}"#,
        )
        .unwrap();
        assert!(read_jsonl_corpus(&path, OverlapPolicy::Reject).is_err());
        let c = read_jsonl_corpus(&path, OverlapPolicy::Repair).unwrap();
        assert_eq!(c.sentences[0].spans, vec![EntitySpan::new(0, 2, "X")]);
    }

    #[test]
    fn bad_line_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.jsonl");
        fs::write(&path, "{\"tokens\":[\"a\"]}\n{oops\n").unwrap();
        assert!(matches!(
            read_jsonl_corpus(&path, OverlapPolicy::Reject),
            Err(Error::Parse { line: 2, .. })
        ));
    }
}
