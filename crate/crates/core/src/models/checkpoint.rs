//! Versioned JSON checkpoints. Networks serialize as layer sizes plus a flat
//! parameter array, so every float round-trips exactly.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MODEL_FORMAT: &str = "COPPKIT-MODEL-1";

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Envelope<T> {
    format: String,
    kind: String,
    model: T,
}

pub fn to_json<T: Serialize>(kind: &str, model: &T) -> Result<String> {
    Ok(serde_json::to_string(&Envelope {
        format: MODEL_FORMAT.to_string(),
        kind: kind.to_string(),
        model,
    })?)
}

pub fn from_json<T: DeserializeOwned>(kind: &str, text: &str) -> Result<T> {
    let env: Envelope<serde_json::Value> = serde_json::from_str(text)?;
    if env.format != MODEL_FORMAT {
        return Err(Error::Checkpoint(format!("unsupported format {:?}", env.format)));
    }
    if env.kind != kind {
        return Err(Error::Checkpoint(format!("expected a {kind} model, found {}", env.kind)));
    }
    Ok(serde_json::from_value(env.model)?)
}

pub fn save<T: Serialize>(path: &Path, kind: &str, model: &T) -> Result<()> {
    std::fs::write(path, to_json(kind, model)?)?;
    Ok(())
}

pub fn load<T: DeserializeOwned>(path: &Path, kind: &str) -> Result<T> {
    from_json(kind, &std::fs::read_to_string(path)?)
}
