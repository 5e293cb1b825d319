//! Versioned, checksummed file container used by the embedding and centroid
//! model files.
//!
//! Layout: one header line of JSON, a newline, then the JSON payload. The
//! header records the payload's byte length and SHA-256 digest so truncation
//! and corruption are caught before the payload is parsed. Float matrices
//! inside payloads are base64 of little-endian `f32` values, row-major.

use std::fs;
use std::io::Write;
use std::path::Path;

use base64::engine::general_purpose::STANDARD;
use base64::Engine as _;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ContainerError {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("file is truncated: {0}")]
    Truncated(String),
    #[error("malformed header: {0}")]
    Header(String),
    #[error("expected a {expected} file, found {found}")]
    Kind { expected: String, found: String },
    #[error("unsupported format_version {found}; this build reads version {supported}")]
    Version { found: u32, supported: u32 },
    #[error("checksum mismatch: header says {expected}, payload hashes to {actual}")]
    Checksum { expected: String, actual: String },
    #[error("malformed payload: {0}")]
    Payload(String),
}

/// Fields every container header carries; model-specific fields live in
/// `extra` and are echoed for human inspection only.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Header<E> {
    pub kind: String,
    pub format_version: u32,
    pub payload_bytes: usize,
    pub checksum: String,
    #[serde(flatten)]
    pub extra: E,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Serializes `payload` deterministically; the bytes are what gets hashed.
pub fn payload_bytes<P: Serialize>(payload: &P) -> Vec<u8> {
    serde_json::to_vec(payload).expect("payload types serialize infallibly")
}

pub fn encode<E: Serialize, P: Serialize>(
    kind: &str,
    format_version: u32,
    extra: E,
    payload: &P,
) -> Vec<u8> {
    let body = payload_bytes(payload);
    let header = Header {
        kind: kind.to_string(),
        format_version,
        payload_bytes: body.len(),
        checksum: sha256_hex(&body),
        extra,
    };
    let mut out = serde_json::to_vec(&header).expect("header serializes");
    out.push(b'\n');
    out.extend_from_slice(&body);
    out.push(b'\n');
    out
}

pub fn decode<E: DeserializeOwned, P: DeserializeOwned>(
    bytes: &[u8],
    kind: &str,
    supported_version: u32,
) -> Result<(Header<E>, P), ContainerError> {
    let newline = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| ContainerError::Truncated("no header terminator".into()))?;
    let raw: serde_json::Value = serde_json::from_slice(&bytes[..newline])
        .map_err(|e| ContainerError::Header(e.to_string()))?;
    let found_kind = raw.get("kind").and_then(|v| v.as_str()).unwrap_or("<missing>");
    if found_kind != kind {
        return Err(ContainerError::Kind { expected: kind.into(), found: found_kind.into() });
    }
    let version = raw
        .get("format_version")
        .and_then(|v| v.as_u64())
        .ok_or_else(|| ContainerError::Header("missing format_version".into()))?;
    if version != u64::from(supported_version) {
        return Err(ContainerError::Version {
            found: u32::try_from(version).unwrap_or(u32::MAX),
            supported: supported_version,
        });
    }
    let header: Header<E> =
        serde_json::from_value(raw).map_err(|e| ContainerError::Header(e.to_string()))?;
    let rest = &bytes[newline + 1..];
    if rest.len() < header.payload_bytes {
        return Err(ContainerError::Truncated(format!(
            "payload has {} of {} bytes",
            rest.len(),
            header.payload_bytes
        )));
    }
    let body = &rest[..header.payload_bytes];
    let actual = sha256_hex(body);
    if actual != header.checksum {
        return Err(ContainerError::Checksum { expected: header.checksum, actual });
    }
    let payload = serde_json::from_slice(body).map_err(|e| ContainerError::Payload(e.to_string()))?;
    Ok((header, payload))
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<(), ContainerError> {
    let io = |source| ContainerError::Io { path: path.display().to_string(), source };
    let mut file = fs::File::create(path).map_err(io)?;
    file.write_all(bytes).map_err(io)?;
    Ok(())
}

pub fn read_file(path: &Path) -> Result<Vec<u8>, ContainerError> {
    fs::read(path).map_err(|source| ContainerError::Io { path: path.display().to_string(), source })
}

pub fn encode_f32s(values: &[f32]) -> String {
    let mut bytes = Vec::with_capacity(values.len() * 4);
    for v in values {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    STANDARD.encode(bytes)
}

pub fn decode_f32s(encoded: &str, expected_len: usize) -> Result<Vec<f32>, ContainerError> {
    let bytes = STANDARD.decode(encoded).map_err(|e| ContainerError::Payload(e.to_string()))?;
    if bytes.len() != expected_len * 4 {
        return Err(ContainerError::Payload(format!(
            "matrix holds {} bytes, expected {}",
            bytes.len(),
            expected_len * 4
        )));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Debug, Serialize, Deserialize, PartialEq)]
    struct Extra {
        dim: usize,
    }

    #[test]
    fn round_trip_and_corruption() {
        let payload = vec![1u32, 2, 3];
        let bytes = encode("test", 1, Extra { dim: 3 }, &payload);
        let (header, back): (Header<Extra>, Vec<u32>) = decode(&bytes, "test", 1).unwrap();
        assert_eq!(back, payload);
        assert_eq!(header.extra, Extra { dim: 3 });

        let mut corrupt = bytes.clone();
        let last = corrupt.len() - 3;
        corrupt[last] = b'9';
        let err = decode::<Extra, Vec<u32>>(&corrupt, "test", 1).unwrap_err();
        assert!(matches!(err, ContainerError::Checksum { .. }), "{err}");

        let err = decode::<Extra, Vec<u32>>(&bytes[..bytes.len() - 4], "test", 1).unwrap_err();
        assert!(matches!(err, ContainerError::Truncated(_)), "{err}");

        let err = decode::<Extra, Vec<u32>>(&bytes, "test", 0).unwrap_err();
        assert_eq!(err.to_string(), "unsupported format_version 1; this build reads version 0");

        let err = decode::<Extra, Vec<u32>>(&bytes, "other", 1).unwrap_err();
        assert!(matches!(err, ContainerError::Kind { .. }));
    }

    #[test]
    fn f32_encoding_is_bit_exact() {
        let values = [0.0f32, -0.0, 1.5e-38, f32::MAX, -3.25, 1.0e-45];
        let back = decode_f32s(&encode_f32s(&values), values.len()).unwrap();
        let bits = |v: &[f32]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&values), bits(&back));
        assert!(decode_f32s(&encode_f32s(&values), 5).is_err());
    }
}
