//! Versioned checkpoint container: JSON with named arrays and config.
//!
//! Values serialize in shortest round-trip decimal form and map keys are
//! ordered, so save → load → save is byte-stable.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::NetsError;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct Container<T> {
    version: u32,
    kind: String,
    payload: T,
}

pub fn save<T: Serialize>(path: impl AsRef<Path>, kind: &str, payload: &T) -> Result<(), NetsError> {
    let c = Container {
        version: CHECKPOINT_VERSION,
        kind: kind.to_string(),
        payload,
    };
    let json =
        serde_json::to_string_pretty(&c).map_err(|e| NetsError::Checkpoint(e.to_string()))?;
    std::fs::write(path, json).map_err(|e| NetsError::Checkpoint(e.to_string()))
}

pub fn load<T: DeserializeOwned>(path: impl AsRef<Path>, kind: &str) -> Result<T, NetsError> {
    let text =
        std::fs::read_to_string(&path).map_err(|e| NetsError::Checkpoint(e.to_string()))?;
    let c: Container<T> =
        serde_json::from_str(&text).map_err(|e| NetsError::Checkpoint(e.to_string()))?;
    if c.version != CHECKPOINT_VERSION {
        return Err(NetsError::Checkpoint(format!(
            "unsupported checkpoint version {} (expected {CHECKPOINT_VERSION})",
            c.version
        )));
    }
    if c.kind != kind {
        return Err(NetsError::Checkpoint(format!(
            "checkpoint kind `{}` does not match expected `{kind}`",
            c.kind
        )));
    }
    Ok(c.payload)
}
