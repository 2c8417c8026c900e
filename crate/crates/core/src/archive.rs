//! Versioned, content-hashed JSON archives for fitted posteriors.
//!
//! An archive wraps a payload with a format tag and the sha256 of the
//! payload's canonical JSON. Loading recomputes the hash and rejects
//! mismatches, so an archive hash identifies a fitted model exactly.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::copula::CopulaPosterior;
use crate::risk::RiskPosterior;

pub const COPULA_FORMAT: &str = "copula-posterior/v1";
pub const RISK_FORMAT: &str = "risk-posterior/v1";

#[derive(Debug, Error)]
pub enum ArchiveError {
    #[error("archive format {found:?}, expected {expected:?}")]
    Format { expected: String, found: String },
    #[error("content hash mismatch: recorded {recorded}, computed {computed}")]
    HashMismatch { recorded: String, computed: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Archive<T> {
    pub format: String,
    pub content_hash: String,
    pub payload: T,
}

/// sha256 hex of the compact JSON encoding of `value`.
pub fn content_hash<T: Serialize>(value: &T) -> Result<String, ArchiveError> {
    Ok(hex::encode(Sha256::digest(serde_json::to_vec(value)?)))
}

/// sha256 hex of a file's bytes.
pub fn file_hash(path: impl AsRef<Path>) -> Result<String, std::io::Error> {
    Ok(hex::encode(Sha256::digest(std::fs::read(path)?)))
}

impl<T: Serialize> Archive<T> {
    pub fn new(format: &str, payload: T) -> Result<Self, ArchiveError> {
        Ok(Self {
            format: format.into(),
            content_hash: content_hash(&payload)?,
            payload,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ArchiveError> {
        let mut out = serde_json::to_vec(self)?;
        out.push(b'\n');
        std::fs::write(path, out)?;
        Ok(())
    }
}

impl<T: Serialize + DeserializeOwned> Archive<T> {
    pub fn load(path: impl AsRef<Path>, format: &str) -> Result<Self, ArchiveError> {
        let text = std::fs::read_to_string(path)?;
        #[derive(Deserialize)]
        struct Header {
            format: String,
        }
        let header: Header = serde_json::from_str(&text)?;
        if header.format != format {
            return Err(ArchiveError::Format {
                expected: format.into(),
                found: header.format,
            });
        }
        let a: Archive<T> = serde_json::from_str(&text)?;
        let computed = content_hash(&a.payload)?;
        if computed != a.content_hash {
            return Err(ArchiveError::HashMismatch {
                recorded: a.content_hash,
                computed,
            });
        }
        Ok(a)
    }
}

pub fn save_copula(post: &CopulaPosterior, path: impl AsRef<Path>) -> Result<String, ArchiveError> {
    let a = Archive::new(COPULA_FORMAT, post)?;
    a.save(path)?;
    Ok(a.content_hash)
}

pub fn load_copula(path: impl AsRef<Path>) -> Result<Archive<CopulaPosterior>, ArchiveError> {
    Archive::load(path, COPULA_FORMAT)
}

pub fn save_risk(post: &RiskPosterior, path: impl AsRef<Path>) -> Result<String, ArchiveError> {
    let a = Archive::new(RISK_FORMAT, post)?;
    a.save(path)?;
    Ok(a.content_hash)
}

pub fn load_risk(path: impl AsRef<Path>) -> Result<Archive<RiskPosterior>, ArchiveError> {
    Archive::load(path, RISK_FORMAT)
}
