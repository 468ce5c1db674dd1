//! Bit-exact binary encoding for model snapshots.
//!
//! The format is used both for on-disk checkpoints and for snapshot payloads
//! inside transport frames. All integers are little-endian, all weights are
//! 64-bit IEEE-754 floats:
//!
//! ```text
//! offset  size  field
//! 0       4     magic "FCCL"
//! 4       1     format version (currently 1)
//! 5       1     level tag: 0 = global, 1 = cluster, 2 = local
//! 6       2     cluster key length k (u16; 0 unless level = cluster)
//! 8       k     cluster key (UTF-8)
//! 8+k     8     samples_learned (u64)
//! ..      8     epochs_learned (u64)
//! ..      8     round (u64)
//! ..      4     layer count L (u32)
//! per layer (L times):
//!         1     dimension count d (u8, 1..=8)
//!         4*d   dimensions (u32 each)
//! payload:
//!         8*n   layer elements in declared order, row-major, f64 LE
//! ```
//!
//! Encoding is deterministic: equal snapshots serialize to identical bytes.
//! Decoding is strict — truncated input, trailing bytes, non-finite payload
//! values and key/level mismatches are all rejected, with the byte offset of
//! the fault.

use thiserror::Error;

use crate::model::{ModelError, ModelLevel, ModelMeta, ModelSnapshot, ModelWeights, Tensor};
use crate::scalar::Scalar;

pub const MAGIC: [u8; 4] = *b"FCCL";
pub const FORMAT_VERSION: u8 = 1;

const MAX_LAYERS: u32 = 65_535;
const MAX_DIMS: u8 = 8;
const MAX_ELEMENTS: u64 = 1 << 28;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CodecError {
    #[error("snapshot is not encodable: {0}")]
    InvalidSnapshot(#[from] ModelError),
    #[error("cluster key longer than 65535 bytes")]
    KeyTooLong,
    #[error("input truncated at byte {offset}: {needed} more bytes required")]
    Truncated { offset: usize, needed: usize },
    #[error("bad magic bytes at offset 0")]
    BadMagic,
    #[error("unsupported format version {found} at byte {offset}")]
    UnsupportedVersion { found: u8, offset: usize },
    #[error("invalid level tag {found} at byte {offset}")]
    InvalidLevel { found: u8, offset: usize },
    #[error("cluster key presence contradicts level at byte {offset}")]
    KeyLevelMismatch { offset: usize },
    #[error("cluster key is not valid UTF-8 at byte {offset}")]
    InvalidKeyUtf8 { offset: usize },
    #[error("layer table at byte {offset} is out of bounds: {detail}")]
    InvalidLayerTable { offset: usize, detail: String },
    #[error("non-finite payload value at byte {offset}")]
    NonFinitePayload { offset: usize },
    #[error("{count} trailing bytes after snapshot at byte {offset}")]
    TrailingBytes { offset: usize, count: usize },
}

/// Encodes a snapshot into the documented byte format.
///
/// Fails if the snapshot violates its invariants (missing/extra cluster key,
/// non-finite weight values).
pub fn serialize_snapshot<F: Scalar>(snapshot: &ModelSnapshot<F>) -> Result<Vec<u8>, CodecError> {
    snapshot.validate()?;

    let key = snapshot.meta.cluster_key.as_deref().unwrap_or("");
    if key.len() > u16::MAX as usize {
        return Err(CodecError::KeyTooLong);
    }

    let mut out = Vec::with_capacity(64 + snapshot.weights.param_count() * 8);
    out.extend_from_slice(&MAGIC);
    out.push(FORMAT_VERSION);
    out.push(level_tag(snapshot.meta.level));
    out.extend_from_slice(&(key.len() as u16).to_le_bytes());
    out.extend_from_slice(key.as_bytes());
    out.extend_from_slice(&snapshot.meta.samples_learned.to_le_bytes());
    out.extend_from_slice(&snapshot.meta.epochs_learned.to_le_bytes());
    out.extend_from_slice(&snapshot.meta.round.to_le_bytes());
    out.extend_from_slice(&(snapshot.weights.layers.len() as u32).to_le_bytes());
    for tensor in &snapshot.weights.layers {
        out.push(tensor.shape().len() as u8);
        for dim in tensor.shape() {
            out.extend_from_slice(&(*dim as u32).to_le_bytes());
        }
    }
    for tensor in &snapshot.weights.layers {
        for value in tensor.data() {
            out.extend_from_slice(&value.as_f64().to_le_bytes());
        }
    }
    Ok(out)
}

/// Decodes a snapshot from the documented byte format.
pub fn deserialize_snapshot<F: Scalar>(bytes: &[u8]) -> Result<ModelSnapshot<F>, CodecError> {
    let mut r = Reader::new(bytes);

    if r.take(4)? != MAGIC {
        return Err(CodecError::BadMagic);
    }
    let version_offset = r.offset;
    let version = r.u8()?;
    if version != FORMAT_VERSION {
        return Err(CodecError::UnsupportedVersion {
            found: version,
            offset: version_offset,
        });
    }
    let level_offset = r.offset;
    let level = match r.u8()? {
        0 => ModelLevel::Global,
        1 => ModelLevel::Cluster,
        2 => ModelLevel::Local,
        found => {
            return Err(CodecError::InvalidLevel {
                found,
                offset: level_offset,
            })
        }
    };
    let key_offset = r.offset;
    let key_len = r.u16()? as usize;
    let key_bytes = r.take(key_len)?;
    let cluster_key = if key_len == 0 {
        None
    } else {
        Some(
            std::str::from_utf8(key_bytes)
                .map_err(|_| CodecError::InvalidKeyUtf8 { offset: key_offset })?
                .to_owned(),
        )
    };
    if (level == ModelLevel::Cluster) != cluster_key.is_some() {
        return Err(CodecError::KeyLevelMismatch { offset: key_offset });
    }

    let samples_learned = r.u64()?;
    let epochs_learned = r.u64()?;
    let round = r.u64()?;

    let table_offset = r.offset;
    let layer_count = r.u32()?;
    if layer_count > MAX_LAYERS {
        return Err(CodecError::InvalidLayerTable {
            offset: table_offset,
            detail: format!("layer count {layer_count} exceeds {MAX_LAYERS}"),
        });
    }
    let mut shapes = Vec::with_capacity(layer_count as usize);
    let mut total_elements: u64 = 0;
    for _ in 0..layer_count {
        let ndim_offset = r.offset;
        let ndim = r.u8()?;
        if ndim == 0 || ndim > MAX_DIMS {
            return Err(CodecError::InvalidLayerTable {
                offset: ndim_offset,
                detail: format!("dimension count {ndim} outside 1..={MAX_DIMS}"),
            });
        }
        let mut shape = Vec::with_capacity(ndim as usize);
        let mut elements: u64 = 1;
        for _ in 0..ndim {
            let dim = r.u32()? as u64;
            elements = elements.saturating_mul(dim);
            shape.push(dim as usize);
        }
        total_elements = total_elements.saturating_add(elements);
        if total_elements > MAX_ELEMENTS {
            return Err(CodecError::InvalidLayerTable {
                offset: ndim_offset,
                detail: format!("element count exceeds {MAX_ELEMENTS}"),
            });
        }
        shapes.push(shape);
    }

    let mut layers = Vec::with_capacity(shapes.len());
    for shape in shapes {
        let len: usize = shape.iter().product();
        let mut data = Vec::with_capacity(len);
        for _ in 0..len {
            let value_offset = r.offset;
            let value = f64::from_le_bytes(r.take(8)?.try_into().expect("length checked"));
            if !value.is_finite() {
                return Err(CodecError::NonFinitePayload {
                    offset: value_offset,
                });
            }
            data.push(F::from_f64_lossy(value));
        }
        layers.push(Tensor::new(shape, data).expect("length derived from shape"));
    }

    if r.offset != bytes.len() {
        return Err(CodecError::TrailingBytes {
            offset: r.offset,
            count: bytes.len() - r.offset,
        });
    }

    Ok(ModelSnapshot::new(
        ModelMeta {
            level,
            cluster_key,
            samples_learned,
            epochs_learned,
            round,
        },
        ModelWeights::new(layers),
    ))
}

fn level_tag(level: ModelLevel) -> u8 {
    match level {
        ModelLevel::Global => 0,
        ModelLevel::Cluster => 1,
        ModelLevel::Local => 2,
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    offset: usize,
}

impl<'a> Reader<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, offset: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], CodecError> {
        let remaining = self.bytes.len() - self.offset;
        if remaining < n {
            return Err(CodecError::Truncated {
                offset: self.offset,
                needed: n - remaining,
            });
        }
        let slice = &self.bytes[self.offset..self.offset + n];
        self.offset += n;
        Ok(slice)
    }

    fn u8(&mut self) -> Result<u8, CodecError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, CodecError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, CodecError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, CodecError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn snapshot(layers: Vec<Tensor<f64>>) -> ModelSnapshot<f64> {
        ModelSnapshot::new(
            ModelMeta {
                level: ModelLevel::Cluster,
                cluster_key: Some("location:3".into()),
                samples_learned: 1_234,
                epochs_learned: 56,
                round: 78,
            },
            ModelWeights::new(layers),
        )
    }

    #[test]
    fn single_element_snapshot_round_trips() {
        let s = ModelSnapshot::new(
            ModelMeta::global(),
            ModelWeights::new(vec![Tensor::new(vec![1], vec![0.0_f64]).unwrap()]),
        );
        let bytes = serialize_snapshot(&s).unwrap();
        let back: ModelSnapshot<f64> = deserialize_snapshot(&bytes).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn serialization_is_deterministic() {
        let s = snapshot(vec![
            Tensor::new(vec![2, 3], vec![1.5, -2.25, 0.0, -0.0, 3.5e6, 1e-300]).unwrap(),
            Tensor::new(vec![2], vec![0.1, 0.2]).unwrap(),
        ]);
        assert_eq!(serialize_snapshot(&s).unwrap(), serialize_snapshot(&s).unwrap());
    }

    #[test]
    fn nan_weight_is_an_encoding_error() {
        let s = snapshot(vec![Tensor::new(vec![2], vec![1.0, f64::NAN]).unwrap()]);
        let err = serialize_snapshot(&s).unwrap_err();
        assert_eq!(
            err,
            CodecError::InvalidSnapshot(ModelError::NonFiniteValue { layer: 0, index: 1 })
        );
    }

    #[test]
    fn two_layer_snapshot_round_trips_bit_exactly() {
        let s = snapshot(vec![
            Tensor::new(vec![3, 2], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap(),
            Tensor::new(vec![3], vec![-0.0, f64::MIN_POSITIVE, f64::MAX]).unwrap(),
        ]);
        let bytes = serialize_snapshot(&s).unwrap();
        let back: ModelSnapshot<f64> = deserialize_snapshot(&bytes).unwrap();
        assert_eq!(back, s);
        for (a, b) in s.weights.layers.iter().zip(&back.weights.layers) {
            for (x, y) in a.data().iter().zip(b.data()) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }

    #[test]
    fn empty_input_is_a_parse_error() {
        let err = deserialize_snapshot::<f64>(&[]).unwrap_err();
        assert_eq!(err, CodecError::Truncated { offset: 0, needed: 4 });
    }

    #[test]
    fn truncated_payload_is_a_parse_error_with_offset() {
        // Three declared layers, last layer's bytes removed by truncation.
        let s = snapshot(vec![
            Tensor::new(vec![1], vec![1.0]).unwrap(),
            Tensor::new(vec![1], vec![2.0]).unwrap(),
            Tensor::new(vec![1], vec![3.0]).unwrap(),
        ]);
        let bytes = serialize_snapshot(&s).unwrap();
        let cut = &bytes[..bytes.len() - 8];
        match deserialize_snapshot::<f64>(cut).unwrap_err() {
            CodecError::Truncated { offset, needed } => {
                assert_eq!(offset, cut.len());
                assert_eq!(needed, 8);
            }
            other => panic!("expected truncation error, got {other:?}"),
        }
    }

    #[test]
    fn trailing_bytes_are_rejected() {
        let s = snapshot(vec![Tensor::new(vec![1], vec![1.0]).unwrap()]);
        let mut bytes = serialize_snapshot(&s).unwrap();
        bytes.push(0);
        assert!(matches!(
            deserialize_snapshot::<f64>(&bytes).unwrap_err(),
            CodecError::TrailingBytes { count: 1, .. }
        ));
    }

    #[test]
    fn key_level_mismatch_is_rejected() {
        let s = snapshot(vec![Tensor::new(vec![1], vec![1.0]).unwrap()]);
        let mut bytes = serialize_snapshot(&s).unwrap();
        bytes[5] = 0; // rewrite level to global while a key is present
        assert!(matches!(
            deserialize_snapshot::<f64>(&bytes).unwrap_err(),
            CodecError::KeyLevelMismatch { .. }
        ));
    }

    #[test]
    fn non_finite_payload_is_rejected() {
        let s = snapshot(vec![Tensor::new(vec![1], vec![1.0]).unwrap()]);
        let mut bytes = serialize_snapshot(&s).unwrap();
        let n = bytes.len();
        bytes[n - 8..].copy_from_slice(&f64::INFINITY.to_le_bytes());
        assert!(matches!(
            deserialize_snapshot::<f64>(&bytes).unwrap_err(),
            CodecError::NonFinitePayload { .. }
        ));
    }

    #[test]
    fn f32_snapshots_round_trip_through_the_f64_wire_format() {
        let s = ModelSnapshot::new(
            ModelMeta::local(),
            ModelWeights::new(vec![Tensor::new(vec![3], vec![0.5_f32, -1.25, 3.0e-20]).unwrap()]),
        );
        let bytes = serialize_snapshot(&s).unwrap();
        let back: ModelSnapshot<f32> = deserialize_snapshot(&bytes).unwrap();
        assert_eq!(back, s);
    }
}
