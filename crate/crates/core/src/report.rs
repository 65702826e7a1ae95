//! Deterministic report envelopes.

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::Result;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Every report carries the command, library version, a hash of the inputs
/// and the seed.
#[derive(Debug, Clone, Serialize)]
pub struct Report<T> {
    pub command: String,
    pub version: &'static str,
    pub config_hash: String,
    pub seed: u64,
    pub result: T,
}

impl<T: Serialize> Report<T> {
    pub fn new(command: &str, config_hash: String, seed: u64, result: T) -> Self {
        Self {
            command: command.to_string(),
            version: VERSION,
            config_hash,
            seed,
            result,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        Ok(text)
    }
}

/// SHA-256 over labelled input parts, hex encoded.
pub fn config_hash<'a>(parts: impl IntoIterator<Item = (&'a str, &'a str)>) -> String {
    let mut h = Sha256::new();
    for (label, content) in parts {
        h.update(label.as_bytes());
        h.update([0u8]);
        h.update((content.len() as u64).to_le_bytes());
        h.update(content.as_bytes());
    }
    hex::encode(h.finalize())
}

/// Serialize rows as CSV with a header line.
pub fn to_csv<R: Serialize>(rows: &[R]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| crate::Error::Config(format!("csv: {e}")))?;
    }
    let bytes = w.into_inner().map_err(|e| crate::Error::Config(format!("csv: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_separates_parts() {
        let a = config_hash([("tree", "ab"), ("risk", "c")]);
        let b = config_hash([("tree", "a"), ("risk", "bc")]);
        assert_ne!(a, b);
        assert_eq!(a.len(), 64);
        assert_eq!(a, config_hash([("tree", "ab"), ("risk", "c")]));
    }

    #[test]
    fn csv_rows() {
        #[derive(Serialize)]
        struct Row {
            node: usize,
            x: f64,
        }
        let text = to_csv(&[Row { node: 0, x: 0.5 }]).unwrap();
        assert_eq!(text, "node,x\n0,0.5\n");
    }
}
