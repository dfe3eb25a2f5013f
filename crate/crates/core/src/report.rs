//! Provenance helpers shared by reports.

use serde::Serialize;
use sha2::{Digest, Sha256};

/// SHA-256 (hex) of the canonical JSON form of `value`: object keys sorted,
/// no insignificant whitespace.
pub fn canonical_digest<T: Serialize>(value: &T) -> String {
    // serde_json::Value keeps object keys in a BTreeMap, so re-serialising
    // through it sorts them.
    let canonical = serde_json::to_value(value)
        .and_then(|v| serde_json::to_vec(&v))
        .expect("value serialises to JSON");
    hex::encode(Sha256::digest(&canonical))
}

pub fn field_digest(field: &crate::field::KLField) -> String {
    canonical_digest(field)
}
