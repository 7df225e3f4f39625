//! Bit-exact frame encoding.
//!
//! Layout (little-endian):
//! `"FBUS" | version u8 | msg_type u8 | timestamp_ns u64 | topic_len u16 |
//! topic | payload_len u32 | payload`

use thiserror::Error;

pub const MAGIC: [u8; 4] = *b"FBUS";
pub const VERSION: u8 = 1;
/// Size of a frame with empty topic and payload.
pub const HEADER_LEN: usize = 4 + 1 + 1 + 8 + 2 + 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[repr(u8)]
pub enum MsgType {
    Detections = 1,
    Tracks = 2,
    TaskReq = 3,
    TaskResp = 4,
    Heartbeat = 5,
    Clock = 6,
}

impl MsgType {
    pub const ALL: [MsgType; 6] = [
        MsgType::Detections,
        MsgType::Tracks,
        MsgType::TaskReq,
        MsgType::TaskResp,
        MsgType::Heartbeat,
        MsgType::Clock,
    ];

    pub fn from_u8(b: u8) -> Option<Self> {
        Self::ALL.into_iter().find(|t| *t as u8 == b)
    }

    pub fn name(self) -> &'static str {
        match self {
            MsgType::Detections => "DETECTIONS",
            MsgType::Tracks => "TRACKS",
            MsgType::TaskReq => "TASK_REQ",
            MsgType::TaskResp => "TASK_RESP",
            MsgType::Heartbeat => "HEARTBEAT",
            MsgType::Clock => "CLOCK",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BusFrame {
    pub version: u8,
    pub msg_type: MsgType,
    pub timestamp_ns: u64,
    pub topic: String,
    pub payload: Vec<u8>,
}

impl BusFrame {
    pub fn new(msg_type: MsgType, timestamp_ns: u64, topic: impl Into<String>, payload: Vec<u8>) -> Self {
        Self {
            version: VERSION,
            msg_type,
            timestamp_ns,
            topic: topic.into(),
            payload,
        }
    }

    pub fn encoded_len(&self) -> usize {
        HEADER_LEN + self.topic.len() + self.payload.len()
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum WireError {
    #[error("topic is {0} bytes, limit is 65535")]
    TopicTooLong(usize),
    #[error("payload is {0} bytes, limit is 4294967295")]
    PayloadTooLong(usize),
    #[error("bad magic {0:02x?}")]
    BadMagic([u8; 4]),
    #[error("unsupported version {0}")]
    BadVersion(u8),
    #[error("unknown msg_type {0}")]
    UnknownType(u8),
    #[error("truncated while reading {field}: need {needed} bytes, have {available}")]
    Truncated {
        field: &'static str,
        needed: usize,
        available: usize,
    },
    #[error("topic is not valid UTF-8")]
    BadTopic,
}

pub fn encode(frame: &BusFrame) -> Result<Vec<u8>, WireError> {
    let mut out = Vec::with_capacity(frame.encoded_len());
    encode_into(frame, &mut out)?;
    Ok(out)
}

pub fn encode_into(frame: &BusFrame, out: &mut Vec<u8>) -> Result<(), WireError> {
    let topic = frame.topic.as_bytes();
    let topic_len = u16::try_from(topic.len()).map_err(|_| WireError::TopicTooLong(topic.len()))?;
    let payload_len = u32::try_from(frame.payload.len())
        .map_err(|_| WireError::PayloadTooLong(frame.payload.len()))?;
    out.extend_from_slice(&MAGIC);
    out.push(frame.version);
    out.push(frame.msg_type as u8);
    out.extend_from_slice(&frame.timestamp_ns.to_le_bytes());
    out.extend_from_slice(&topic_len.to_le_bytes());
    out.extend_from_slice(topic);
    out.extend_from_slice(&payload_len.to_le_bytes());
    out.extend_from_slice(&frame.payload);
    Ok(())
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, field: &'static str) -> Result<&'a [u8], WireError> {
        let available = self.buf.len() - self.pos;
        if available < n {
            return Err(WireError::Truncated {
                field,
                needed: n,
                available,
            });
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn array<const N: usize>(&mut self, field: &'static str) -> Result<[u8; N], WireError> {
        let mut a = [0u8; N];
        a.copy_from_slice(self.take(N, field)?);
        Ok(a)
    }
}

/// Decodes one frame from the front of `buf`, returning it and the number of
/// bytes consumed. Trailing bytes are left for the caller.
pub fn decode(buf: &[u8]) -> Result<(BusFrame, usize), WireError> {
    let mut r = Reader { buf, pos: 0 };
    let magic = r.array::<4>("magic")?;
    if magic != MAGIC {
        return Err(WireError::BadMagic(magic));
    }
    let [version] = r.array::<1>("version")?;
    if version != VERSION {
        return Err(WireError::BadVersion(version));
    }
    let [ty] = r.array::<1>("msg_type")?;
    let msg_type = MsgType::from_u8(ty).ok_or(WireError::UnknownType(ty))?;
    let timestamp_ns = u64::from_le_bytes(r.array::<8>("timestamp_ns")?);
    let topic_len = u16::from_le_bytes(r.array::<2>("topic_len")?) as usize;
    let topic = std::str::from_utf8(r.take(topic_len, "topic")?)
        .map_err(|_| WireError::BadTopic)?
        .to_owned();
    let payload_len = u32::from_le_bytes(r.array::<4>("payload_len")?) as usize;
    let payload = r.take(payload_len, "payload")?.to_vec();
    Ok((
        BusFrame {
            version,
            msg_type,
            timestamp_ns,
            topic,
            payload,
        },
        r.pos,
    ))
}

/// Incremental decoder for byte streams delivered in arbitrary chunks.
#[derive(Debug, Default)]
pub struct FrameStream {
    buf: Vec<u8>,
}

impl FrameStream {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, bytes: &[u8]) {
        self.buf.extend_from_slice(bytes);
    }

    /// Returns the next complete frame, `Ok(None)` when more bytes are needed.
    pub fn next_frame(&mut self) -> Result<Option<BusFrame>, WireError> {
        match decode(&self.buf) {
            Ok((frame, used)) => {
                self.buf.drain(..used);
                Ok(Some(frame))
            }
            Err(WireError::Truncated { .. }) => Ok(None),
            Err(e) => Err(e),
        }
    }

    pub fn buffered(&self) -> usize {
        self.buf.len()
    }
}

pub fn seconds_to_ns(t: f64) -> u64 {
    if t <= 0.0 {
        0
    } else {
        (t * 1e9).round() as u64
    }
}
