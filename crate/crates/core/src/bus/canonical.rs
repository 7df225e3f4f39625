//! Canonical JSON: sorted object keys, no insignificant whitespace,
//! shortest round-trip float formatting.

use serde::de::DeserializeOwned;
use serde::Serialize;

/// Serializes through `serde_json::Value`, whose map type keeps keys sorted.
pub fn to_canonical_string<T: Serialize + ?Sized>(v: &T) -> serde_json::Result<String> {
    let value = serde_json::to_value(v)?;
    serde_json::to_string(&value)
}

pub fn to_canonical_bytes<T: Serialize + ?Sized>(v: &T) -> serde_json::Result<Vec<u8>> {
    to_canonical_string(v).map(String::into_bytes)
}

pub fn from_bytes<T: DeserializeOwned>(bytes: &[u8]) -> serde_json::Result<T> {
    serde_json::from_slice(bytes)
}
