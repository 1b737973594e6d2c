//! On-disk model layout: `manifest.json`, `token_encoder.json`,
//! `label_encoder.json` and, for a learned O class, `o_vector.json`.

use std::path::Path;

use ndarray::Array1;
use serde::{Deserialize, Serialize};

use super::{BiEncoder, BiEncoderParams, EncoderConfig, SequenceEncoder};
use crate::corpus::jsonl::{read_json, write_json};
use crate::error::{Error, Result};

pub const MANIFEST_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub schema_version: u32,
    pub config: EncoderConfig,
    /// Hash of the inventory the model was last trained on.
    #[serde(default)]
    pub inventory_hash: Option<String>,
    pub o_verbalization: String,
    pub parameter_hash: String,
    /// Free-form record of how the checkpoint was produced.
    #[serde(default)]
    pub provenance: serde_json::Value,
}

pub fn save_checkpoint(
    model: &BiEncoder,
    dir: impl AsRef<Path>,
    inventory_hash: Option<String>,
    provenance: serde_json::Value,
) -> Result<CheckpointManifest> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let params = model.params();
    let manifest = CheckpointManifest {
        schema_version: MANIFEST_SCHEMA_VERSION,
        config: model.config().clone(),
        inventory_hash,
        o_verbalization: model.config().o_verbalization.clone(),
        parameter_hash: params.content_hash(),
        provenance,
    };
    write_json(dir.join("token_encoder.json"), &params.token)?;
    write_json(dir.join("label_encoder.json"), &params.label)?;
    if let Some(o) = &params.o_vector {
        write_json(dir.join("o_vector.json"), o)?;
    }
    write_json(dir.join("manifest.json"), &manifest)?;
    Ok(manifest)
}

pub fn load_checkpoint(dir: impl AsRef<Path>) -> Result<(BiEncoder, CheckpointManifest)> {
    let dir = dir.as_ref();
    let manifest: CheckpointManifest = read_json(dir.join("manifest.json"))?;
    if manifest.schema_version != MANIFEST_SCHEMA_VERSION {
        return Err(Error::InvalidConfig(format!(
            "checkpoint schema version {} is not supported (expected {MANIFEST_SCHEMA_VERSION})",
            manifest.schema_version
        )));
    }
    let token: SequenceEncoder = read_json(dir.join("token_encoder.json"))?;
    let label: SequenceEncoder = read_json(dir.join("label_encoder.json"))?;
    let o_path = dir.join("o_vector.json");
    let o_vector: Option<Array1<f64>> = if o_path.exists() { Some(read_json(&o_path)?) } else { None };
    let model = BiEncoder::from_params(manifest.config.clone(), BiEncoderParams { token, label, o_vector })?;
    if model.params().content_hash() != manifest.parameter_hash {
        return Err(Error::InvalidConfig(format!(
            "checkpoint {} parameters do not match the manifest hash",
            dir.display()
        )));
    }
    Ok((model, manifest))
}
