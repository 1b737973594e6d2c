use std::collections::HashSet;
use std::path::Path;

use indexmap::IndexMap;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, TypeInventory, O_ID};
use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeKind {
    Cryptic,
    Short,
    Long,
    Identity,
}

impl std::str::FromStr for SchemeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cryptic" => Ok(Self::Cryptic),
            "short" => Ok(Self::Short),
            "long" => Ok(Self::Long),
            "identity" => Ok(Self::Identity),
            other => Err(Error::InvalidConfig(format!("unknown verbalization scheme `{other}`"))),
        }
    }
}

impl std::fmt::Display for SchemeKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Self::Cryptic => "cryptic",
            Self::Short => "short",
            Self::Long => "long",
            Self::Identity => "identity",
        };
        f.write_str(s)
    }
}

/// Replacement verbalizations keyed by type id. An `O` entry, when present,
/// also replaces the non-entity verbalization.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerbalizationScheme {
    #[serde(default = "default_version")]
    pub version: u32,
    pub kind: SchemeKind,
    pub table: IndexMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
}

fn default_version() -> u32 {
    1
}

const FEWNERD_CRYPTIC: &str = include_str!("../../resources/fewnerd_cryptic.json");
const FEWNERD_SHORT: &str = include_str!("../../resources/fewnerd_short.json");
const FEWNERD_LONG: &str = include_str!("../../resources/fewnerd_long.json");

impl VerbalizationScheme {
    pub fn identity(inventory: &TypeInventory) -> Self {
        Self {
            version: default_version(),
            kind: SchemeKind::Identity,
            table: inventory.types().map(|(id, v)| (id.to_string(), v.to_string())).collect(),
            seed: None,
            source: None,
        }
    }

    /// Unique random two-letter uppercase labels for every entity type.
    pub fn cryptic(inventory: &TypeInventory, seed: u64) -> Result<Self> {
        const ALPHABET: usize = 26 * 26;
        if inventory.num_types() > ALPHABET {
            return Err(Error::InvalidConfig(format!(
                "{} types exceed the {ALPHABET} available two-letter labels",
                inventory.num_types()
            )));
        }
        let mut rng = seed::rng(seed, "cryptic-labels");
        let mut used = HashSet::new();
        let mut table = IndexMap::new();
        for id in inventory.type_ids() {
            let label = loop {
                let a = rng.random_range(b'A'..=b'Z') as char;
                let b = rng.random_range(b'A'..=b'Z') as char;
                let candidate: String = [a, b].into_iter().collect();
                if used.insert(candidate.clone()) {
                    break candidate;
                }
            };
            table.insert(id.to_string(), label);
        }
        Ok(Self {
            version: default_version(),
            kind: SchemeKind::Cryptic,
            table,
            seed: Some(seed),
            source: None,
        })
    }

    /// The bundled FewNERD extract tables (four entries each, O included).
    pub fn fewnerd_extract(kind: SchemeKind) -> Result<Self> {
        let text = match kind {
            SchemeKind::Cryptic => FEWNERD_CRYPTIC,
            SchemeKind::Short => FEWNERD_SHORT,
            SchemeKind::Long => FEWNERD_LONG,
            SchemeKind::Identity => {
                return Err(Error::InvalidConfig("no bundled identity table".into()))
            }
        };
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let scheme: Self = crate::corpus::jsonl::read_json(path)?;
        scheme.validate()?;
        Ok(scheme)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        crate::corpus::jsonl::write_json(path, self)
    }

    pub fn validate(&self) -> Result<()> {
        if let Some((id, _)) = self.table.iter().find(|(_, v)| v.trim().is_empty()) {
            return Err(Error::InvalidConfig(format!("empty verbalization for `{id}`")));
        }
        if self.kind == SchemeKind::Cryptic {
            let mut seen = HashSet::new();
            for (id, v) in self.table.iter().filter(|(id, _)| id.as_str() != O_ID) {
                let ok = v.len() == 2 && v.chars().all(|c| c.is_ascii_uppercase());
                if !ok || !seen.insert(v) {
                    return Err(Error::InvalidConfig(format!(
                        "cryptic label `{v}` for `{id}` is not a unique two-letter uppercase string"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Replaces inventory verbalizations; spans and type ids are untouched.
pub fn apply_verbalization(corpus: &Corpus, scheme: &VerbalizationScheme) -> Result<Corpus> {
    let mut out = corpus.clone();
    for id in corpus.inventory.type_ids() {
        let v = scheme
            .table
            .get(id)
            .ok_or_else(|| Error::InvalidConfig(format!("{} scheme has no entry for `{id}`", scheme.kind)))?;
        out.inventory.set_verbalization(id, v.clone())?;
    }
    if let Some(o) = scheme.table.get(O_ID) {
        out.inventory.set_verbalization(O_ID, o.clone())?;
    }
    Ok(out)
}
