//! Wire schema and framing.
//!
//! Every exchange is one length-prefixed frame: a `u32` little-endian body
//! length, then the body. A body carries the sender id (so the server can
//! attribute updates in its log), a message tag and the message payload.
//! Snapshot payloads reuse the snapshot codec byte-for-byte, so a frame
//! inspector can account for every float that crosses the wire.
//!
//! ```text
//! frame  := len:u32 body
//! body   := sender:str tag:u8 payload
//! str    := len:u16 utf8-bytes
//! ```

use fedccl_core::clustering::{ClientProfile, ClusterAssignment, ClusterLabel, DimensionKind};
use fedccl_core::codec::{deserialize_snapshot, serialize_snapshot, CodecError};
use fedccl_core::model::{ModelLevel, TrainingDelta};
use fedccl_core::Snapshot;
use thiserror::Error;

/// Upper bound on a frame body; anything larger is treated as corrupt.
pub const MAX_FRAME_LEN: usize = 64 << 20;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum WireError {
    #[error("frame truncated at byte {offset}: {needed} more bytes required")]
    Truncated { offset: usize, needed: usize },
    #[error("frame length {0} exceeds the {MAX_FRAME_LEN}-byte limit")]
    FrameTooLarge(usize),
    #[error("unknown message tag {tag} at byte {offset}")]
    UnknownTag { tag: u8, offset: usize },
    #[error("invalid enum value {value} at byte {offset}")]
    InvalidEnum { value: u8, offset: usize },
    #[error("invalid utf-8 at byte {offset}")]
    InvalidUtf8 { offset: usize },
    #[error("embedded snapshot: {0}")]
    Snapshot(#[from] CodecError),
    #[error("{count} trailing bytes after message at byte {offset}")]
    TrailingBytes { offset: usize, count: usize },
}

/// Error codes carried by [`ServerMessage::ErrorResponse`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u16)]
pub enum ErrorCode {
    DuplicateClient = 1,
    UnknownCluster = 2,
    LocalLevelRejected = 3,
    ShapeMismatch = 4,
    DegenerateAggregation = 5,
    InvalidDelta = 6,
    InvalidProfile = 7,
    Malformed = 8,
    Internal = 9,
}

impl ErrorCode {
    fn from_u16(value: u16) -> Option<Self> {
        Some(match value {
            1 => ErrorCode::DuplicateClient,
            2 => ErrorCode::UnknownCluster,
            3 => ErrorCode::LocalLevelRejected,
            4 => ErrorCode::ShapeMismatch,
            5 => ErrorCode::DegenerateAggregation,
            6 => ErrorCode::InvalidDelta,
            7 => ErrorCode::InvalidProfile,
            8 => ErrorCode::Malformed,
            9 => ErrorCode::Internal,
            _ => return None,
        })
    }
}

/// A cluster merge triggered by a registration, as reported to the client.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DimensionMerge {
    pub dimension: DimensionKind,
    pub survivor: u64,
    pub absorbed: Vec<u64>,
}

/// Every message that crosses the client/server boundary.
#[derive(Debug, Clone, PartialEq)]
pub enum ServerMessage {
    RegisterClient {
        profile: ClientProfile,
    },
    RegisterAck {
        assignments: ClusterAssignment,
        merges: Vec<DimensionMerge>,
    },
    RequestModel {
        level: ModelLevel,
        cluster_key: Option<String>,
    },
    ModelResponse {
        snapshot: Snapshot,
    },
    /// `level` must be global or cluster; local models never leave a client.
    UpdateModel {
        level: ModelLevel,
        cluster_key: Option<String>,
        snapshot: Snapshot,
        delta: TrainingDelta,
    },
    UpdateAck {
        accepted_round: u64,
    },
    ErrorResponse {
        code: ErrorCode,
        detail: String,
    },
}

impl ServerMessage {
    pub fn tag_name(&self) -> &'static str {
        match self {
            ServerMessage::RegisterClient { .. } => "RegisterClient",
            ServerMessage::RegisterAck { .. } => "RegisterAck",
            ServerMessage::RequestModel { .. } => "RequestModel",
            ServerMessage::ModelResponse { .. } => "ModelResponse",
            ServerMessage::UpdateModel { .. } => "UpdateModel",
            ServerMessage::UpdateAck { .. } => "UpdateAck",
            ServerMessage::ErrorResponse { .. } => "ErrorResponse",
        }
    }
}

/// One transported unit: who sent it plus the message.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub sender: String,
    pub message: ServerMessage,
}

const TAG_REGISTER_CLIENT: u8 = 0;
const TAG_REGISTER_ACK: u8 = 1;
const TAG_REQUEST_MODEL: u8 = 2;
const TAG_MODEL_RESPONSE: u8 = 3;
const TAG_UPDATE_MODEL: u8 = 4;
const TAG_UPDATE_ACK: u8 = 5;
const TAG_ERROR_RESPONSE: u8 = 6;

fn level_tag(level: ModelLevel) -> u8 {
    match level {
        ModelLevel::Global => 0,
        ModelLevel::Cluster => 1,
        ModelLevel::Local => 2,
    }
}

fn dimension_tag(kind: DimensionKind) -> u8 {
    match kind {
        DimensionKind::Location => 0,
        DimensionKind::Orientation => 1,
    }
}

struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn new() -> Self {
        Self { buf: Vec::new() }
    }

    fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    fn u16(&mut self, v: u16) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn string(&mut self, s: &str) {
        self.u16(s.len() as u16);
        self.buf.extend_from_slice(s.as_bytes());
    }

    fn optional_string(&mut self, s: Option<&str>) {
        self.string(s.unwrap_or(""));
    }

    fn bytes(&mut self, b: &[u8]) {
        self.buf.extend_from_slice(&(b.len() as u32).to_le_bytes());
        self.buf.extend_from_slice(b);
    }
}

/// Encodes a frame including its length prefix.
pub fn encode_frame(frame: &Frame) -> Result<Vec<u8>, WireError> {
    let mut w = Writer::new();
    w.string(&frame.sender);
    match &frame.message {
        ServerMessage::RegisterClient { profile } => {
            w.u8(TAG_REGISTER_CLIENT);
            w.string(&profile.client_id);
            w.f64(profile.latitude);
            w.f64(profile.longitude);
            w.f64(profile.orientation_azimuth);
            w.f64(profile.kwp);
        }
        ServerMessage::RegisterAck { assignments, merges } => {
            w.u8(TAG_REGISTER_ACK);
            let entries: Vec<_> = assignments.iter().collect();
            w.u8(entries.len() as u8);
            for (kind, label) in entries {
                w.u8(dimension_tag(kind));
                match label {
                    ClusterLabel::Noise => {
                        w.u8(0);
                        w.u64(0);
                    }
                    ClusterLabel::Cluster(id) => {
                        w.u8(1);
                        w.u64(id);
                    }
                }
            }
            w.u8(merges.len() as u8);
            for merge in merges {
                w.u8(dimension_tag(merge.dimension));
                w.u64(merge.survivor);
                w.u16(merge.absorbed.len() as u16);
                for id in &merge.absorbed {
                    w.u64(*id);
                }
            }
        }
        ServerMessage::RequestModel { level, cluster_key } => {
            w.u8(TAG_REQUEST_MODEL);
            w.u8(level_tag(*level));
            w.optional_string(cluster_key.as_deref());
        }
        ServerMessage::ModelResponse { snapshot } => {
            w.u8(TAG_MODEL_RESPONSE);
            w.bytes(&serialize_snapshot(snapshot)?);
        }
        ServerMessage::UpdateModel {
            level,
            cluster_key,
            snapshot,
            delta,
        } => {
            w.u8(TAG_UPDATE_MODEL);
            w.u8(level_tag(*level));
            w.optional_string(cluster_key.as_deref());
            w.bytes(&serialize_snapshot(snapshot)?);
            w.u64(delta.samples_learned);
            w.u64(delta.epochs_learned);
            w.u64(delta.round);
        }
        ServerMessage::UpdateAck { accepted_round } => {
            w.u8(TAG_UPDATE_ACK);
            w.u64(*accepted_round);
        }
        ServerMessage::ErrorResponse { code, detail } => {
            w.u8(TAG_ERROR_RESPONSE);
            w.u16(*code as u16);
            w.string(detail);
        }
    }

    let body = w.buf;
    if body.len() > MAX_FRAME_LEN {
        return Err(WireError::FrameTooLarge(body.len()));
    }
    let mut out = Vec::with_capacity(4 + body.len());
    out.extend_from_slice(&(body.len() as u32).to_le_bytes());
    out.extend_from_slice(&body);
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    offset: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], WireError> {
        let remaining = self.bytes.len() - self.offset;
        if remaining < n {
            return Err(WireError::Truncated {
                offset: self.offset,
                needed: n - remaining,
            });
        }
        let s = &self.bytes[self.offset..self.offset + n];
        self.offset += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, WireError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, WireError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, WireError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, WireError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64, WireError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn string(&mut self) -> Result<String, WireError> {
        let offset = self.offset;
        let len = self.u16()? as usize;
        let bytes = self.take(len)?;
        String::from_utf8(bytes.to_vec()).map_err(|_| WireError::InvalidUtf8 { offset })
    }

    fn optional_string(&mut self) -> Result<Option<String>, WireError> {
        let s = self.string()?;
        Ok((!s.is_empty()).then_some(s))
    }

    fn blob(&mut self) -> Result<&'a [u8], WireError> {
        let len = self.u32()? as usize;
        if len > MAX_FRAME_LEN {
            return Err(WireError::FrameTooLarge(len));
        }
        self.take(len)
    }

    fn level(&mut self) -> Result<ModelLevel, WireError> {
        let offset = self.offset;
        match self.u8()? {
            0 => Ok(ModelLevel::Global),
            1 => Ok(ModelLevel::Cluster),
            2 => Ok(ModelLevel::Local),
            value => Err(WireError::InvalidEnum { value, offset }),
        }
    }

    fn dimension(&mut self) -> Result<DimensionKind, WireError> {
        let offset = self.offset;
        match self.u8()? {
            0 => Ok(DimensionKind::Location),
            1 => Ok(DimensionKind::Orientation),
            value => Err(WireError::InvalidEnum { value, offset }),
        }
    }
}

/// Decodes one frame body (the bytes after the length prefix).
pub fn decode_frame_body(body: &[u8]) -> Result<Frame, WireError> {
    let mut r = Reader {
        bytes: body,
        offset: 0,
    };
    let sender = r.string()?;
    let tag_offset = r.offset;
    let tag = r.u8()?;
    let message = match tag {
        TAG_REGISTER_CLIENT => ServerMessage::RegisterClient {
            profile: ClientProfile {
                client_id: r.string()?,
                latitude: r.f64()?,
                longitude: r.f64()?,
                orientation_azimuth: r.f64()?,
                kwp: r.f64()?,
            },
        },
        TAG_REGISTER_ACK => {
            let n = r.u8()?;
            let mut assignments = ClusterAssignment::new();
            for _ in 0..n {
                let kind = r.dimension()?;
                let label_offset = r.offset;
                let label = match r.u8()? {
                    0 => {
                        r.u64()?;
                        ClusterLabel::Noise
                    }
                    1 => ClusterLabel::Cluster(r.u64()?),
                    value => {
                        return Err(WireError::InvalidEnum {
                            value,
                            offset: label_offset,
                        })
                    }
                };
                assignments.set(kind, label);
            }
            let merge_count = r.u8()?;
            let mut merges = Vec::with_capacity(merge_count as usize);
            for _ in 0..merge_count {
                let dimension = r.dimension()?;
                let survivor = r.u64()?;
                let absorbed_count = r.u16()?;
                let mut absorbed = Vec::with_capacity(absorbed_count as usize);
                for _ in 0..absorbed_count {
                    absorbed.push(r.u64()?);
                }
                merges.push(DimensionMerge {
                    dimension,
                    survivor,
                    absorbed,
                });
            }
            ServerMessage::RegisterAck { assignments, merges }
        }
        TAG_REQUEST_MODEL => ServerMessage::RequestModel {
            level: r.level()?,
            cluster_key: r.optional_string()?,
        },
        TAG_MODEL_RESPONSE => ServerMessage::ModelResponse {
            snapshot: deserialize_snapshot(r.blob()?)?,
        },
        TAG_UPDATE_MODEL => {
            let level = r.level()?;
            let cluster_key = r.optional_string()?;
            let snapshot = deserialize_snapshot(r.blob()?)?;
            let delta = TrainingDelta {
                samples_learned: r.u64()?,
                epochs_learned: r.u64()?,
                round: r.u64()?,
            };
            ServerMessage::UpdateModel {
                level,
                cluster_key,
                snapshot,
                delta,
            }
        }
        TAG_UPDATE_ACK => ServerMessage::UpdateAck {
            accepted_round: r.u64()?,
        },
        TAG_ERROR_RESPONSE => {
            let code_offset = r.offset;
            let raw = r.u16()?;
            let code = ErrorCode::from_u16(raw).ok_or(WireError::InvalidEnum {
                value: raw as u8,
                offset: code_offset,
            })?;
            ServerMessage::ErrorResponse {
                code,
                detail: r.string()?,
            }
        }
        tag => {
            return Err(WireError::UnknownTag {
                tag,
                offset: tag_offset,
            })
        }
    };

    if r.offset != body.len() {
        return Err(WireError::TrailingBytes {
            offset: r.offset,
            count: body.len() - r.offset,
        });
    }
    Ok(Frame { sender, message })
}

/// Splits a length-prefixed frame off the front of `bytes`, returning the
/// decoded frame and the bytes consumed.
pub fn decode_frame(bytes: &[u8]) -> Result<(Frame, usize), WireError> {
    if bytes.len() < 4 {
        return Err(WireError::Truncated {
            offset: bytes.len(),
            needed: 4 - bytes.len(),
        });
    }
    let len = u32::from_le_bytes(bytes[..4].try_into().unwrap()) as usize;
    if len > MAX_FRAME_LEN {
        return Err(WireError::FrameTooLarge(len));
    }
    if bytes.len() < 4 + len {
        return Err(WireError::Truncated {
            offset: bytes.len(),
            needed: 4 + len - bytes.len(),
        });
    }
    Ok((decode_frame_body(&bytes[4..4 + len])?, 4 + len))
}

/// Blocking frame read from a stream.
pub fn read_frame<R: std::io::Read>(reader: &mut R) -> std::io::Result<Frame> {
    let mut len_bytes = [0u8; 4];
    reader.read_exact(&mut len_bytes)?;
    let len = u32::from_le_bytes(len_bytes) as usize;
    if len > MAX_FRAME_LEN {
        return Err(std::io::Error::new(
            std::io::ErrorKind::InvalidData,
            WireError::FrameTooLarge(len).to_string(),
        ));
    }
    let mut body = vec![0u8; len];
    reader.read_exact(&mut body)?;
    decode_frame_body(&body)
        .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e.to_string()))
}

/// Blocking frame write to a stream.
pub fn write_frame<W: std::io::Write>(writer: &mut W, frame: &Frame) -> std::io::Result<()> {
    let bytes = encode_frame(frame)
        .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e.to_string()))?;
    writer.write_all(&bytes)?;
    writer.flush()
}
