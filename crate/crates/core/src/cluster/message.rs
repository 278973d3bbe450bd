use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::bits::Bits;
use crate::error::{Error, Result};

/// Dimension above which `compress` switches vectors to run-length form.
pub const COMPRESS_ABOVE: usize = 10_000;

/// Frames larger than this are rejected as corrupt.
pub const MAX_FRAME: u32 = 64 << 20;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MessageKind {
    /// New best feasible value `f`.
    ImproveFeasible,
    /// New best modified value `f^M`.
    ImproveModified,
    Stop,
    /// A node's answer to a stop: its best vector.
    Final,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Message {
    pub kind: MessageKind,
    pub sender: usize,
    pub f: f64,
    pub x: Option<Bits>,
    /// Mean of the sender's probability vector.
    pub p_avg: Option<f64>,
    /// Seconds since the sender started.
    pub ts: f64,
}

impl Message {
    pub fn stop(sender: usize, ts: f64) -> Self {
        Self {
            kind: MessageKind::Stop,
            sender,
            f: 0.0,
            x: None,
            p_avg: None,
            ts,
        }
    }

    pub fn is_improvement(&self) -> bool {
        matches!(self.kind, MessageKind::ImproveFeasible | MessageKind::ImproveModified)
    }

    /// True if `self` ranks above `other`: higher value, ties to the lower sender.
    pub fn outranks(&self, other: &Message) -> bool {
        self.f > other.f || (self.f == other.f && self.sender < other.sender)
    }

    pub fn to_json(&self, compress: bool) -> Result<String> {
        let x = self.x.as_ref().map(|x| {
            if compress && x.len() > COMPRESS_ABOVE {
                x.to_rle_string()
            } else {
                x.to_bit_string()
            }
        });
        let wire = Wire {
            kind: self.kind,
            sender: self.sender,
            f: self.f,
            x,
            p_avg: self.p_avg,
            ts: self.ts,
        };
        Ok(serde_json::to_string(&wire)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let wire: Wire = serde_json::from_str(text)?;
        let x = wire.x.as_deref().map(Bits::parse).transpose()?;
        if let Some(p) = wire.p_avg {
            if !(p > 0.0 && p < 1.0) {
                return Err(Error::field("p_avg", "must lie in (0,1)"));
            }
        }
        if matches!(wire.kind, MessageKind::ImproveFeasible | MessageKind::ImproveModified | MessageKind::Final)
            && x.is_none()
        {
            return Err(Error::field("x", "required for this message kind"));
        }
        Ok(Self {
            kind: wire.kind,
            sender: wire.sender,
            f: wire.f,
            x,
            p_avg: wire.p_avg,
            ts: wire.ts,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct Wire {
    kind: MessageKind,
    sender: usize,
    f: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    x: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    p_avg: Option<f64>,
    ts: f64,
}

/// Writes one frame: a big-endian `u32` byte length, then the JSON body.
pub fn write_frame<W: Write>(out: &mut W, msg: &Message, compress: bool) -> Result<()> {
    let body = msg.to_json(compress)?;
    let len = u32::try_from(body.len()).map_err(|_| Error::Transport("message too large".into()))?;
    out.write_all(&len.to_be_bytes())?;
    out.write_all(body.as_bytes())?;
    out.flush()?;
    Ok(())
}

/// Reads one frame. `Ok(None)` on a clean end of stream.
pub fn read_frame<R: Read>(input: &mut R) -> Result<Option<Message>> {
    let mut len = [0u8; 4];
    match input.read_exact(&mut len) {
        Ok(()) => {}
        Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => return Ok(None),
        Err(e) => return Err(e.into()),
    }
    let len = u32::from_be_bytes(len);
    if len > MAX_FRAME {
        return Err(Error::Transport(format!("frame of {len} bytes exceeds limit")));
    }
    let mut body = vec![0u8; len as usize];
    input.read_exact(&mut body)?;
    let text = std::str::from_utf8(&body).map_err(|e| Error::Transport(e.to_string()))?;
    Message::from_json(text).map(Some)
}
