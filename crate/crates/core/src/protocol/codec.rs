//! Byte-exact wire format.
//!
//! ```text
//! frame   = len:u32 | "ADGN" | version:u16 | variant:u8 | round:u64 | body
//! tensor  = rank:u8 | dim:u32 * rank | f32 * product(dims)
//!
//! variant 0  AuxBatch       node:u32 | tensor
//! variant 1  SynthBatch     node:u32 | count:u8 | (modality:u8 | tensor) * count
//! variant 2  ErrorFeedback  node:u32 | modality:u8 | adv:f32 | l1:f32 | tensor
//! variant 3  Control        tag:u8   (0 Start, 1 DiscPhaseDone, 2 Shutdown)
//! ```
//!
//! All integers and floats are little-endian. `len` counts the bytes after itself.

use std::io::{Read, Write};

use thiserror::Error;

use crate::autodiff::Tensor;

pub const MAGIC: [u8; 4] = *b"ADGN";
pub const VERSION: u16 = 1;
/// Length prefix + magic + version + variant + round.
pub const FRAME_HEADER_LEN: usize = 4 + 4 + 2 + 1 + 8;
/// Frames larger than this are refused by [`read_frame`].
pub const MAX_FRAME_LEN: u32 = 256 * 1024 * 1024;

#[derive(Debug, Error, PartialEq)]
pub enum EncodeError {
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("tensor rank {0} exceeds 255")]
    Rank(usize),
    #[error("too many channels: {0}")]
    TooManyChannels(usize),
    #[error("frame of {0} bytes exceeds the u32 length prefix")]
    TooLarge(usize),
}

#[derive(Debug, Error, PartialEq)]
pub enum DecodeError {
    #[error("truncated frame: expected {expected} bytes, got {actual}")]
    Truncated { expected: usize, actual: usize },
    #[error("magic mismatch: {0:?}")]
    MagicMismatch([u8; 4]),
    #[error("unsupported version {0}")]
    UnsupportedVersion(u16),
    #[error("unknown variant {0}")]
    UnknownVariant(u8),
    #[error("unknown control tag {0}")]
    UnknownControl(u8),
    #[error("{0} trailing bytes after message body")]
    TrailingBytes(usize),
}

/// A tensor as carried on the wire: explicit shape, `f32` entries.
#[derive(Debug, Clone, PartialEq)]
pub struct WireTensor {
    pub shape: Vec<u32>,
    pub data: Vec<f32>,
}

impl WireTensor {
    pub fn new(shape: Vec<u32>, data: Vec<f32>) -> Self {
        debug_assert_eq!(
            shape.iter().map(|&d| d as usize).product::<usize>(),
            data.len()
        );
        Self { shape, data }
    }

    /// Narrows to `f32`.
    pub fn from_tensor(t: &Tensor) -> Self {
        Self {
            shape: t.shape().iter().map(|&d| d as u32).collect(),
            data: t.data().iter().map(|&v| v as f32).collect(),
        }
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::new(
            self.shape.iter().map(|&d| d as usize).collect(),
            self.data.iter().map(|&v| f64::from(v)).collect(),
        )
        .expect("wire tensor shape is consistent")
    }

    fn encoded_len(&self) -> usize {
        1 + 4 * self.shape.len() + 4 * self.data.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Control {
    Start,
    DiscPhaseDone,
    Shutdown,
}

impl Control {
    fn tag(self) -> u8 {
        match self {
            Control::Start => 0,
            Control::DiscPhaseDone => 1,
            Control::Shutdown => 2,
        }
    }
}

/// One synthetic modality channel inside a [`Payload::SynthBatch`].
#[derive(Debug, Clone, PartialEq)]
pub struct SynthChannel {
    /// 1-based modality index.
    pub modality: u8,
    pub samples: WireTensor,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    /// Conditions sampled by a node, node → generator.
    AuxBatch { node: u32, x: WireTensor },
    /// Synthetic samples for the node's modalities, generator → node.
    SynthBatch {
        node: u32,
        channels: Vec<SynthChannel>,
    },
    /// Loss scalars and `∂L/∂ŷ` for one modality, node → generator.
    ErrorFeedback {
        node: u32,
        modality: u8,
        grad: WireTensor,
        adv: f32,
        l1: f32,
    },
    Control(Control),
}

/// Message kind, without contents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    AuxBatch,
    SynthBatch,
    ErrorFeedback,
    Control,
}

impl Variant {
    pub const ALL: [Variant; 4] = [
        Variant::AuxBatch,
        Variant::SynthBatch,
        Variant::ErrorFeedback,
        Variant::Control,
    ];

    pub fn code(self) -> u8 {
        match self {
            Variant::AuxBatch => 0,
            Variant::SynthBatch => 1,
            Variant::ErrorFeedback => 2,
            Variant::Control => 3,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::AuxBatch => "aux-batch",
            Variant::SynthBatch => "synth-batch",
            Variant::ErrorFeedback => "error-feedback",
            Variant::Control => "control",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Message {
    pub round: u64,
    pub payload: Payload,
}

impl Message {
    pub fn new(round: u64, payload: Payload) -> Self {
        Self { round, payload }
    }

    pub fn control(round: u64, c: Control) -> Self {
        Self::new(round, Payload::Control(c))
    }

    pub fn variant(&self) -> Variant {
        match self.payload {
            Payload::AuxBatch { .. } => Variant::AuxBatch,
            Payload::SynthBatch { .. } => Variant::SynthBatch,
            Payload::ErrorFeedback { .. } => Variant::ErrorFeedback,
            Payload::Control(_) => Variant::Control,
        }
    }

    /// Node named in the body, if any.
    pub fn node(&self) -> Option<u32> {
        match self.payload {
            Payload::AuxBatch { node, .. }
            | Payload::SynthBatch { node, .. }
            | Payload::ErrorFeedback { node, .. } => Some(node),
            Payload::Control(_) => None,
        }
    }

    /// Bytes of numeric content: tensor entries and loss scalars.
    pub fn payload_len(&self) -> usize {
        match &self.payload {
            Payload::AuxBatch { x, .. } => 4 * x.data.len(),
            Payload::SynthBatch { channels, .. } => {
                channels.iter().map(|c| 4 * c.samples.data.len()).sum()
            }
            Payload::ErrorFeedback { grad, .. } => 4 * grad.data.len() + 8,
            Payload::Control(_) => 0,
        }
    }

    /// Exact size of the encoded frame, including the length prefix.
    pub fn framed_len(&self) -> usize {
        FRAME_HEADER_LEN
            + match &self.payload {
                Payload::AuxBatch { x, .. } => 4 + x.encoded_len(),
                Payload::SynthBatch { channels, .. } => {
                    4 + 1
                        + channels
                            .iter()
                            .map(|c| 1 + c.samples.encoded_len())
                            .sum::<usize>()
                }
                Payload::ErrorFeedback { grad, .. } => 4 + 1 + 4 + 4 + grad.encoded_len(),
                Payload::Control(_) => 1,
            }
    }
}

fn put_tensor(buf: &mut Vec<u8>, t: &WireTensor, what: &'static str) -> Result<(), EncodeError> {
    if t.shape.len() > u8::MAX as usize {
        return Err(EncodeError::Rank(t.shape.len()));
    }
    if !t.data.iter().all(|v| v.is_finite()) {
        return Err(EncodeError::NonFinite(what));
    }
    buf.push(t.shape.len() as u8);
    for d in &t.shape {
        buf.extend_from_slice(&d.to_le_bytes());
    }
    for v in &t.data {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    Ok(())
}

pub fn encode(msg: &Message) -> Result<Vec<u8>, EncodeError> {
    let total = msg.framed_len();
    if total - 4 > u32::MAX as usize {
        return Err(EncodeError::TooLarge(total));
    }
    let mut buf = Vec::with_capacity(total);
    buf.extend_from_slice(&((total - 4) as u32).to_le_bytes());
    buf.extend_from_slice(&MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.push(msg.variant().code());
    buf.extend_from_slice(&msg.round.to_le_bytes());
    match &msg.payload {
        Payload::AuxBatch { node, x } => {
            buf.extend_from_slice(&node.to_le_bytes());
            put_tensor(&mut buf, x, "aux batch")?;
        }
        Payload::SynthBatch { node, channels } => {
            if channels.len() > u8::MAX as usize {
                return Err(EncodeError::TooManyChannels(channels.len()));
            }
            buf.extend_from_slice(&node.to_le_bytes());
            buf.push(channels.len() as u8);
            for c in channels {
                buf.push(c.modality);
                put_tensor(&mut buf, &c.samples, "synthetic batch")?;
            }
        }
        Payload::ErrorFeedback {
            node,
            modality,
            grad,
            adv,
            l1,
        } => {
            if !adv.is_finite() || !l1.is_finite() {
                return Err(EncodeError::NonFinite("feedback scalars"));
            }
            buf.extend_from_slice(&node.to_le_bytes());
            buf.push(*modality);
            buf.extend_from_slice(&adv.to_le_bytes());
            buf.extend_from_slice(&l1.to_le_bytes());
            put_tensor(&mut buf, grad, "error feedback")?;
        }
        Payload::Control(c) => buf.push(c.tag()),
    }
    debug_assert_eq!(buf.len(), total);
    Ok(buf)
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
    frame_len: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], DecodeError> {
        if self.pos + n > self.buf.len() {
            return Err(DecodeError::Truncated {
                expected: self.pos + n,
                actual: self.frame_len,
            });
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, DecodeError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, DecodeError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, DecodeError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, DecodeError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f32(&mut self) -> Result<f32, DecodeError> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn tensor(&mut self) -> Result<WireTensor, DecodeError> {
        let rank = self.u8()? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(self.u32()?);
        }
        let n = shape.iter().map(|&d| d as usize).product::<usize>();
        let bytes = self.take(n.saturating_mul(4))?;
        let data = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(WireTensor { shape, data })
    }
}

/// Decodes one complete frame, length prefix included.
pub fn decode(frame: &[u8]) -> Result<Message, DecodeError> {
    if frame.len() < 4 {
        return Err(DecodeError::Truncated {
            expected: 4,
            actual: frame.len(),
        });
    }
    let declared = u32::from_le_bytes(frame[..4].try_into().unwrap()) as usize + 4;
    if frame.len() < declared {
        return Err(DecodeError::Truncated {
            expected: declared,
            actual: frame.len(),
        });
    }
    let mut c = Cursor {
        buf: &frame[..declared],
        pos: 4,
        frame_len: frame.len(),
    };
    let magic: [u8; 4] = c.take(4)?.try_into().unwrap();
    if magic != MAGIC {
        return Err(DecodeError::MagicMismatch(magic));
    }
    let version = c.u16()?;
    if version != VERSION {
        return Err(DecodeError::UnsupportedVersion(version));
    }
    let variant = c.u8()?;
    let round = c.u64()?;
    let payload = match variant {
        0 => Payload::AuxBatch {
            node: c.u32()?,
            x: c.tensor()?,
        },
        1 => {
            let node = c.u32()?;
            let count = c.u8()? as usize;
            let mut channels = Vec::with_capacity(count);
            for _ in 0..count {
                let modality = c.u8()?;
                channels.push(SynthChannel {
                    modality,
                    samples: c.tensor()?,
                });
            }
            Payload::SynthBatch { node, channels }
        }
        2 => {
            let node = c.u32()?;
            let modality = c.u8()?;
            let adv = c.f32()?;
            let l1 = c.f32()?;
            Payload::ErrorFeedback {
                node,
                modality,
                grad: c.tensor()?,
                adv,
                l1,
            }
        }
        3 => Payload::Control(match c.u8()? {
            0 => Control::Start,
            1 => Control::DiscPhaseDone,
            2 => Control::Shutdown,
            t => return Err(DecodeError::UnknownControl(t)),
        }),
        v => return Err(DecodeError::UnknownVariant(v)),
    };
    if c.pos != declared || declared != frame.len() {
        return Err(DecodeError::TrailingBytes(frame.len() - c.pos));
    }
    Ok(Message { round, payload })
}

/// Writes an already-encoded frame.
pub fn write_frame<W: Write>(w: &mut W, frame: &[u8]) -> std::io::Result<()> {
    w.write_all(frame)?;
    w.flush()
}

/// Reads one length-prefixed frame, returning it with its prefix.
pub fn read_frame<R: Read>(r: &mut R) -> std::io::Result<Vec<u8>> {
    let mut len = [0u8; 4];
    r.read_exact(&mut len)?;
    let n = u32::from_le_bytes(len);
    if n > MAX_FRAME_LEN {
        return Err(std::io::Error::new(
            std::io::ErrorKind::InvalidData,
            format!("frame length {n} exceeds limit"),
        ));
    }
    let mut frame = vec![0u8; n as usize + 4];
    frame[..4].copy_from_slice(&len);
    r.read_exact(&mut frame[4..])?;
    Ok(frame)
}
