//! Line-delimited JSON codec for [`Message`].
//!
//! One UTF-8 JSON object per `\n`-terminated line. Encoding refuses
//! non-finite numbers, which JSON cannot carry.

use mcct_core::Message;

#[derive(Debug, thiserror::Error)]
pub enum WireError {
    #[error("malformed frame at byte {offset}: {reason}")]
    MalformedFrame { offset: usize, reason: String },
    #[error("message carries a non-finite number")]
    NonFinite,
    #[error("frame longer than {0} bytes")]
    Oversized(usize),
}

/// Longest accepted line, newline included.
pub const MAX_FRAME: usize = 1 << 20;

pub fn encode(msg: &Message) -> Result<Vec<u8>, WireError> {
    if msg.floats().iter().any(|f| !f.is_finite()) {
        return Err(WireError::NonFinite);
    }
    let mut out = serde_json::to_vec(msg).map_err(|e| WireError::MalformedFrame {
        offset: 0,
        reason: e.to_string(),
    })?;
    out.push(b'\n');
    Ok(out)
}

/// Decodes exactly one complete frame (trailing `\n` required).
pub fn decode(frame: &[u8]) -> Result<Message, WireError> {
    decode_at(frame, 0)
}

fn decode_at(frame: &[u8], base: usize) -> Result<Message, WireError> {
    let Some((&b'\n', body)) = frame.split_last() else {
        return Err(WireError::MalformedFrame {
            offset: base + frame.len(),
            reason: "frame not terminated by a newline".into(),
        });
    };
    if let Some(i) = body.iter().position(|&b| b == b'\n') {
        return Err(WireError::MalformedFrame {
            offset: base + i,
            reason: "more than one line in frame".into(),
        });
    }
    let body = body.strip_suffix(b"\r").unwrap_or(body);
    serde_json::from_slice(body).map_err(|e| WireError::MalformedFrame {
        offset: base + byte_offset(body, e.line(), e.column()),
        reason: e.to_string(),
    })
}

fn byte_offset(body: &[u8], line: usize, column: usize) -> usize {
    // serde_json reports 1-based line/column; the body has a single line
    if line <= 1 {
        column.saturating_sub(1).min(body.len())
    } else {
        body.len()
    }
}

/// Incremental decoder for a byte stream. Offsets in errors are counted
/// from the start of the stream.
#[derive(Debug, Default)]
pub struct FrameDecoder {
    buf: Vec<u8>,
    consumed: usize,
}

impl FrameDecoder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, bytes: &[u8]) {
        self.buf.extend_from_slice(bytes);
    }

    /// Next complete frame, if one is buffered. Blank lines are skipped.
    pub fn next_message(&mut self) -> Option<Result<Message, WireError>> {
        loop {
            let Some(end) = self.buf.iter().position(|&b| b == b'\n') else {
                if self.buf.len() > MAX_FRAME {
                    let n = self.buf.len();
                    self.consumed += n;
                    self.buf.clear();
                    return Some(Err(WireError::Oversized(MAX_FRAME)));
                }
                return None;
            };
            let base = self.consumed;
            let frame: Vec<u8> = self.buf.drain(..=end).collect();
            self.consumed += frame.len();
            if frame.iter().all(|b| b.is_ascii_whitespace()) {
                continue;
            }
            return Some(decode_at(&frame, base));
        }
    }

    /// Bytes received but not yet forming a whole frame.
    pub fn pending(&self) -> usize {
        self.buf.len()
    }

    /// Errors if the stream ended inside a frame.
    pub fn finish(&self) -> Result<(), WireError> {
        if self.buf.iter().all(|b| b.is_ascii_whitespace()) {
            Ok(())
        } else {
            Err(WireError::MalformedFrame {
                offset: self.consumed + self.buf.len(),
                reason: "stream ended inside a frame".into(),
            })
        }
    }
}
