//! Canonical JSON serialization.
//!
//! Prompts, evidence packs, and config hashes all need byte-stable JSON:
//! the same value must serialize to the same bytes on every run so that
//! request hashes line up between record and replay. Routing serialization
//! through `serde_json::Value` sorts object keys (its map is a BTreeMap),
//! which is the only normalization we need on top of serde's defaults.

use serde::Serialize;

/// Serializes `value` to compact JSON with object keys sorted.
pub fn to_canonical_json<T: Serialize>(value: &T) -> String {
    let v = serde_json::to_value(value).expect("value serializes to JSON");
    serde_json::to_string(&v).expect("JSON value renders to a string")
}

/// Rounds a float to one decimal place.
///
/// Used for weather fields before they enter prompts or packs, so the
/// serialized token stream stays stable regardless of how the mean was
/// accumulated.
pub fn round1(x: f64) -> f64 {
    let r = (x * 10.0).round() / 10.0;
    if r == 0.0 {
        0.0 // collapse -0.0 so it cannot leak into serialized output
    } else {
        r
    }
}

/// Hex-encoded SHA-256 of a byte string.
pub fn sha256_hex(bytes: &[u8]) -> String {
    use sha2::{Digest, Sha256};
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    hex::encode(hasher.finalize())
}
