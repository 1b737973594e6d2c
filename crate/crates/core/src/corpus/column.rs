//! Two-column `token tag` files, blank line between sentences.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Corpus, EntitySpan, Sentence, O_ID};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TagScheme {
    #[default]
    Bio,
    Io,
}

impl std::str::FromStr for TagScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bio" => Ok(TagScheme::Bio),
            "io" => Ok(TagScheme::Io),
            other => Err(Error::InvalidConfig(format!("unknown tag scheme `{other}`"))),
        }
    }
}

/// Handling of an `I-X` tag that does not continue an `X` entity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransitionPolicy {
    Error,
    /// Treat the tag as `B-X` and log a warning.
    #[default]
    Repair,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Tag<'a> {
    Outside,
    Begin(&'a str),
    Inside(&'a str),
}

fn parse_tag(tag: &str, scheme: TagScheme) -> Option<Tag<'_>> {
    if tag == O_ID {
        return Some(Tag::Outside);
    }
    let (prefix, label) = match tag.split_once('-') {
        Some((p, l)) if p == "B" || p == "I" => (p, l),
        _ => {
            return match scheme {
                TagScheme::Io if !tag.is_empty() => Some(Tag::Inside(tag)),
                _ => None,
            }
        }
    };
    if label.is_empty() || label == O_ID {
        return None;
    }
    Some(if prefix == "B" {
        Tag::Begin(label)
    } else {
        Tag::Inside(label)
    })
}

pub fn read_column_corpus(path: impl AsRef<Path>, scheme: TagScheme, policy: TransitionPolicy) -> Result<Corpus> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_column_corpus(&text, scheme, policy).map_err(|e| match e {
        Error::Parse { line, message, .. } => Error::Parse {
            path: path.to_path_buf(),
            line,
            message,
        },
        other => other,
    })
}

/// Parses column text. Line numbers in errors are 1-based.
pub fn parse_column_corpus(text: &str, scheme: TagScheme, policy: TransitionPolicy) -> Result<Corpus> {
    let mut sentences = Vec::new();
    let mut tokens: Vec<String> = Vec::new();
    let mut spans: Vec<EntitySpan> = Vec::new();
    // currently open entity: (start, type)
    let mut open: Option<(usize, String)> = None;

    let flush = |tokens: &mut Vec<String>, spans: &mut Vec<EntitySpan>, open: &mut Option<(usize, String)>, sentences: &mut Vec<Sentence>| {
        if let Some((start, ty)) = open.take() {
            spans.push(EntitySpan::new(start, tokens.len(), ty));
        }
        if !tokens.is_empty() {
            sentences.push(Sentence {
                tokens: std::mem::take(tokens),
                spans: std::mem::take(spans),
            });
        }
    };

    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = raw.trim();
        if line.is_empty() {
            flush(&mut tokens, &mut spans, &mut open, &mut sentences);
            continue;
        }
        if line.starts_with("-DOCSTART-") {
            continue;
        }
        let cols: Vec<&str> = line.split_whitespace().collect();
        if cols.len() != 2 {
            return Err(Error::Parse {
                path: Default::default(),
                line: lineno,
                message: format!("expected 2 columns (token, tag), found {}", cols.len()),
            });
        }
        let (token, raw_tag) = (cols[0], cols[1]);
        let tag = parse_tag(raw_tag, scheme).ok_or_else(|| Error::Parse {
            path: Default::default(),
            line: lineno,
            message: format!("malformed tag `{raw_tag}`"),
        })?;
        let pos = tokens.len();
        match tag {
            Tag::Outside => {
                if let Some((start, ty)) = open.take() {
                    spans.push(EntitySpan::new(start, pos, ty));
                }
            }
            Tag::Begin(label) => {
                if let Some((start, ty)) = open.take() {
                    spans.push(EntitySpan::new(start, pos, ty));
                }
                open = Some((pos, label.to_string()));
            }
            Tag::Inside(label) => {
                let continues = matches!(&open, Some((_, ty)) if ty == label);
                if !continues {
                    if scheme == TagScheme::Bio {
                        match policy {
                            TransitionPolicy::Error => {
                                return Err(Error::Parse {
                                    path: Default::default(),
                                    line: lineno,
                                    message: format!("illegal transition to `{raw_tag}`"),
                                })
                            }
                            TransitionPolicy::Repair => {
                                log::warn!("line {lineno}: `{raw_tag}` without a preceding B-{label}, repaired to B-{label}");
                            }
                        }
                    }
                    if let Some((start, ty)) = open.take() {
                        spans.push(EntitySpan::new(start, pos, ty));
                    }
                    open = Some((pos, label.to_string()));
                }
            }
        }
        tokens.push(token.to_string());
    }
    flush(&mut tokens, &mut spans, &mut open, &mut sentences);

    Corpus::from_sentences(sentences)
}

pub fn write_column_corpus(corpus: &Corpus, path: impl AsRef<Path>, scheme: TagScheme) -> Result<()> {
    let path = path.as_ref();
    let text = format_column_corpus(corpus, scheme)?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn format_column_corpus(corpus: &Corpus, scheme: TagScheme) -> Result<String> {
    let mut out = String::new();
    for (i, sentence) in corpus.sentences.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        let mut tags = vec![O_ID.to_string(); sentence.tokens.len()];
        for span in &sentence.spans {
            if span.type_id.chars().any(char::is_whitespace) {
                return Err(Error::InvalidCorpus(format!(
                    "type `{}` contains whitespace; use the JSONL format",
                    span.type_id
                )));
            }
            for (j, tag) in tags[span.start..span.end].iter_mut().enumerate() {
                let prefix = if j == 0 && scheme == TagScheme::Bio { "B" } else { "I" };
                *tag = format!("{prefix}-{}", span.type_id);
            }
        }
        for (token, tag) in sentence.tokens.iter().zip(&tags) {
            if token.chars().any(char::is_whitespace) || token.is_empty() {
                return Err(Error::InvalidCorpus(format!("token `{token}` cannot be written in column format")));
            }
            let _ = writeln!(out, "{token} {tag}");
        }
    }
    Ok(out)
}
