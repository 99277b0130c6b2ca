//! `FVEC` feature files: magic, `u32` version, `u32` frame count, `u32` width,
//! then `n * dim` little-endian `f32`, row-major by frame.

use std::path::Path;

use super::FeatureSequence;
use crate::error::{Error, FormatError, Result};
use crate::tensor::Tensor;

pub const FEATURE_MAGIC: [u8; 4] = *b"FVEC";
pub const FEATURE_VERSION: u32 = 1;
const HEADER_LEN: usize = 16;

pub fn encode_features(seq: &FeatureSequence) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + seq.data.numel() * 4);
    out.extend_from_slice(&FEATURE_MAGIC);
    out.extend_from_slice(&FEATURE_VERSION.to_le_bytes());
    out.extend_from_slice(&(seq.n_frames() as u32).to_le_bytes());
    out.extend_from_slice(&(seq.dim() as u32).to_le_bytes());
    for v in seq.data.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

fn u32_at(bytes: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4-byte slice"))
}

pub fn decode_features(video_id: &str, bytes: &[u8]) -> Result<FeatureSequence, FormatError> {
    if bytes.len() < HEADER_LEN {
        return Err(FormatError::Truncated {
            expected: HEADER_LEN,
            found: bytes.len(),
        });
    }
    let magic: [u8; 4] = bytes[..4].try_into().expect("4-byte slice");
    if magic != FEATURE_MAGIC {
        return Err(FormatError::BadMagic {
            expected: FEATURE_MAGIC,
            found: magic,
        });
    }
    let version = u32_at(bytes, 4);
    if version != FEATURE_VERSION {
        return Err(FormatError::UnsupportedVersion(version));
    }
    let n = u32_at(bytes, 8) as usize;
    let dim = u32_at(bytes, 12) as usize;
    if n == 0 || dim == 0 {
        return Err(FormatError::Header(format!(
            "frame count and width must be positive (n={n}, dim={dim})"
        )));
    }
    let expected = n
        .checked_mul(dim)
        .and_then(|v| v.checked_mul(4))
        .and_then(|v| v.checked_add(HEADER_LEN))
        .ok_or_else(|| FormatError::Header(format!("size overflow (n={n}, dim={dim})")))?;
    if bytes.len() < expected {
        return Err(FormatError::Truncated {
            expected,
            found: bytes.len(),
        });
    }
    if bytes.len() > expected {
        return Err(FormatError::Trailing(bytes.len() - expected));
    }
    let mut data = Vec::with_capacity(n * dim);
    for (i, chunk) in bytes[HEADER_LEN..].chunks_exact(4).enumerate() {
        let v = f32::from_le_bytes(chunk.try_into().expect("4-byte chunk"));
        if !v.is_finite() {
            return Err(FormatError::NonFinite {
                frame: i / dim,
                column: i % dim,
            });
        }
        data.push(v);
    }
    let data = Tensor::new(&[n, dim], data).expect("length checked above");
    Ok(FeatureSequence {
        video_id: video_id.to_string(),
        data,
    })
}

/// Reads a feature file; the video id is the file stem.
pub fn load_features(path: impl AsRef<Path>) -> Result<FeatureSequence> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    decode_features(&id, &bytes).map_err(|kind| Error::Format {
        path: path.to_path_buf(),
        kind,
    })
}

pub fn save_features(path: impl AsRef<Path>, seq: &FeatureSequence) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_features(seq)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> FeatureSequence {
        FeatureSequence::new(
            "v1",
            Tensor::new(&[2, 3], vec![1.0, -2.5, 3.25, 0.0, 1e-8, -7.0]).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn roundtrip_two_by_three() {
        let bytes = encode_features(&sample());
        assert_eq!(bytes.len(), 16 + 24);
        assert_eq!(decode_features("v1", &bytes).unwrap(), sample());
    }

    #[test]
    fn truncated_payload() {
        let bytes = encode_features(&sample());
        let err = decode_features("v1", &bytes[..bytes.len() - 1]).unwrap_err();
        assert_eq!(
            err,
            FormatError::Truncated {
                expected: 40,
                found: 39
            }
        );
    }

    #[test]
    fn bad_magic_and_version() {
        let mut bytes = encode_features(&sample());
        bytes[4] = 2;
        assert_eq!(
            decode_features("v1", &bytes).unwrap_err(),
            FormatError::UnsupportedVersion(2)
        );
        bytes[0] = b'X';
        assert!(matches!(
            decode_features("v1", &bytes).unwrap_err(),
            FormatError::BadMagic { .. }
        ));
    }

    #[test]
    fn nan_names_the_frame() {
        let mut bytes = encode_features(&sample());
        bytes[16 + 4 * 4..16 + 5 * 4].copy_from_slice(&f32::NAN.to_le_bytes());
        assert_eq!(
            decode_features("v1", &bytes).unwrap_err(),
            FormatError::NonFinite {
                frame: 1,
                column: 1
            }
        );
    }
}
