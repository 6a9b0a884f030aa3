//! The classical public channel.
//!
//! Carries Bob's XOR half-code and the verification verdict. The channel is
//! public — confidentiality is not needed, since the half-code XOR reveals
//! only a parity relation — but is assumed authenticated; tampering is not
//! modeled.
//!
//! Wire format (normative, bit-exact): length-prefixed frames
//!
//! ```text
//! [4-byte BE length of the rest] [1-byte kind] [16-byte session id]
//! [8-byte BE sequence number] [payload]
//! ```
//!
//! Kinds: hello = 0, xor_halfcode = 1, verdict = 2, abort = 3. Bit sequences
//! are packed most-significant-bit first behind a 4-byte BE bit-length
//! prefix; verdict is one matched byte plus a 4-byte BE differing-bit count;
//! abort carries a UTF-8 reason. Sequence numbers increase strictly per
//! direction within a session.

use std::io::{Read, Write};
use std::net::{TcpStream, ToSocketAddrs};
use std::sync::mpsc;

use thiserror::Error;

/// Frames longer than this are rejected outright.
pub const MAX_FRAME: usize = 1 << 24;

/// Bytes of frame body before the payload: kind + session id + sequence.
const HEADER_LEN: usize = 1 + 16 + 8;

#[derive(Debug, Error)]
pub enum TransportError {
    #[error("i/o failure: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed frame: {0}")]
    Frame(String),
    #[error("protocol violation: {0}")]
    ProtocolViolation(String),
    #[error("connection closed by peer")]
    Closed,
}

/// Payload of a public-channel message.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MessageBody {
    /// Session establishment.
    Hello,
    /// Bob's XOR of his two half-codes, `key_bits/2` bits.
    XorHalfCode(Vec<bool>),
    /// Alice's comparison result and, on mismatch, how many bits differed.
    Verdict { matched: bool, differing: u32 },
    /// Session abort with a reason.
    Abort { reason: String },
}

impl MessageBody {
    fn kind_tag(&self) -> u8 {
        match self {
            MessageBody::Hello => 0,
            MessageBody::XorHalfCode(_) => 1,
            MessageBody::Verdict { .. } => 2,
            MessageBody::Abort { .. } => 3,
        }
    }
}

/// One message on the public channel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PublicMessage {
    pub session_id: u128,
    pub sequence_number: u64,
    pub body: MessageBody,
}

/// Packs bits most-significant-bit first.
pub fn pack_bits(bits: &[bool]) -> Vec<u8> {
    let mut bytes = vec![0u8; bits.len().div_ceil(8)];
    for (i, &bit) in bits.iter().enumerate() {
        if bit {
            bytes[i / 8] |= 0x80 >> (i % 8);
        }
    }
    bytes
}

/// Inverse of [`pack_bits`]; trailing pad bits must be zero.
pub fn unpack_bits(bytes: &[u8], bit_len: usize) -> Result<Vec<bool>, TransportError> {
    if bytes.len() != bit_len.div_ceil(8) {
        return Err(TransportError::Frame(format!(
            "bit payload is {} bytes but {} bits need {}",
            bytes.len(),
            bit_len,
            bit_len.div_ceil(8)
        )));
    }
    let bits: Vec<bool> = (0..bit_len)
        .map(|i| bytes[i / 8] & (0x80 >> (i % 8)) != 0)
        .collect();
    let pad = bytes.len() * 8 - bit_len;
    if pad > 0 && bytes[bytes.len() - 1] & ((1u16 << pad) as u8).wrapping_sub(1) != 0 {
        return Err(TransportError::Frame("nonzero padding bits".into()));
    }
    Ok(bits)
}

/// Encodes a message as a complete frame, length prefix included.
pub fn encode_frame(message: &PublicMessage) -> Vec<u8> {
    let payload = match &message.body {
        MessageBody::Hello => Vec::new(),
        MessageBody::XorHalfCode(bits) => {
            let mut p = (bits.len() as u32).to_be_bytes().to_vec();
            p.extend_from_slice(&pack_bits(bits));
            p
        }
        MessageBody::Verdict { matched, differing } => {
            let mut p = vec![u8::from(*matched)];
            p.extend_from_slice(&differing.to_be_bytes());
            p
        }
        MessageBody::Abort { reason } => reason.as_bytes().to_vec(),
    };

    let body_len = HEADER_LEN + payload.len();
    let mut frame = Vec::with_capacity(4 + body_len);
    frame.extend_from_slice(&(body_len as u32).to_be_bytes());
    frame.push(message.body.kind_tag());
    frame.extend_from_slice(&message.session_id.to_be_bytes());
    frame.extend_from_slice(&message.sequence_number.to_be_bytes());
    frame.extend_from_slice(&payload);
    frame
}

/// Decodes a complete frame produced by [`encode_frame`].
pub fn decode_frame(frame: &[u8]) -> Result<PublicMessage, TransportError> {
    if frame.len() < 4 {
        return Err(TransportError::Frame("frame shorter than length prefix".into()));
    }
    let declared = u32::from_be_bytes(frame[..4].try_into().expect("4 bytes")) as usize;
    if declared > MAX_FRAME {
        return Err(TransportError::Frame(format!(
            "declared length {declared} exceeds maximum {MAX_FRAME}"
        )));
    }
    if frame.len() != 4 + declared {
        return Err(TransportError::Frame(format!(
            "frame has {} body bytes but declares {declared}",
            frame.len() - 4
        )));
    }
    if declared < HEADER_LEN {
        return Err(TransportError::Frame(format!(
            "body of {declared} bytes cannot hold the {HEADER_LEN}-byte header"
        )));
    }

    let kind = frame[4];
    let session_id = u128::from_be_bytes(frame[5..21].try_into().expect("16 bytes"));
    let sequence_number = u64::from_be_bytes(frame[21..29].try_into().expect("8 bytes"));
    let payload = &frame[29..];

    let body = match kind {
        0 => {
            if !payload.is_empty() {
                return Err(TransportError::Frame("hello carries no payload".into()));
            }
            MessageBody::Hello
        }
        1 => {
            if payload.len() < 4 {
                return Err(TransportError::Frame("xor_halfcode missing bit length".into()));
            }
            let bit_len = u32::from_be_bytes(payload[..4].try_into().expect("4 bytes")) as usize;
            MessageBody::XorHalfCode(unpack_bits(&payload[4..], bit_len)?)
        }
        2 => {
            if payload.len() != 5 {
                return Err(TransportError::Frame(format!(
                    "verdict payload must be 5 bytes, got {}",
                    payload.len()
                )));
            }
            let matched = match payload[0] {
                0 => false,
                1 => true,
                other => {
                    return Err(TransportError::Frame(format!(
                        "verdict flag must be 0 or 1, got {other}"
                    )))
                }
            };
            let differing = u32::from_be_bytes(payload[1..5].try_into().expect("4 bytes"));
            MessageBody::Verdict { matched, differing }
        }
        3 => MessageBody::Abort {
            reason: String::from_utf8(payload.to_vec())
                .map_err(|_| TransportError::Frame("abort reason is not UTF-8".into()))?,
        },
        other => return Err(TransportError::Frame(format!("unknown kind tag {other}"))),
    };

    Ok(PublicMessage {
        session_id,
        sequence_number,
        body,
    })
}

/// A transport that moves whole frames between two endpoints, in order.
pub trait FramePipe {
    fn send(&mut self, frame: &[u8]) -> Result<(), TransportError>;
    fn recv(&mut self) -> Result<Vec<u8>, TransportError>;
}

/// In-process transport for deterministic single-host sessions. Frames pass
/// through the same encode/decode path as TCP.
#[derive(Debug)]
pub struct LoopbackPipe {
    tx: mpsc::Sender<Vec<u8>>,
    rx: mpsc::Receiver<Vec<u8>>,
}

/// Two connected loopback endpoints.
pub fn loopback_pair() -> (LoopbackPipe, LoopbackPipe) {
    let (tx_ab, rx_ab) = mpsc::channel();
    let (tx_ba, rx_ba) = mpsc::channel();
    (
        LoopbackPipe { tx: tx_ab, rx: rx_ba },
        LoopbackPipe { tx: tx_ba, rx: rx_ab },
    )
}

impl FramePipe for LoopbackPipe {
    fn send(&mut self, frame: &[u8]) -> Result<(), TransportError> {
        self.tx.send(frame.to_vec()).map_err(|_| TransportError::Closed)
    }

    fn recv(&mut self) -> Result<Vec<u8>, TransportError> {
        self.rx.recv().map_err(|_| TransportError::Closed)
    }
}

/// Frame transport over a TCP stream.
#[derive(Debug)]
pub struct TcpPipe {
    stream: TcpStream,
}

impl TcpPipe {
    pub fn new(stream: TcpStream) -> Result<Self, TransportError> {
        stream.set_nodelay(true)?;
        Ok(Self { stream })
    }

    pub fn connect<A: ToSocketAddrs>(addr: A) -> Result<Self, TransportError> {
        Self::new(TcpStream::connect(addr)?)
    }
}

impl FramePipe for TcpPipe {
    fn send(&mut self, frame: &[u8]) -> Result<(), TransportError> {
        self.stream.write_all(frame)?;
        self.stream.flush()?;
        Ok(())
    }

    fn recv(&mut self) -> Result<Vec<u8>, TransportError> {
        let mut len_buf = [0u8; 4];
        if let Err(e) = self.stream.read_exact(&mut len_buf) {
            return Err(if e.kind() == std::io::ErrorKind::UnexpectedEof {
                TransportError::Closed
            } else {
                TransportError::Io(e)
            });
        }
        let declared = u32::from_be_bytes(len_buf) as usize;
        if declared > MAX_FRAME {
            return Err(TransportError::Frame(format!(
                "declared length {declared} exceeds maximum {MAX_FRAME}"
            )));
        }
        let mut frame = Vec::with_capacity(4 + declared);
        frame.extend_from_slice(&len_buf);
        frame.resize(4 + declared, 0);
        if let Err(e) = self.stream.read_exact(&mut frame[4..]) {
            return Err(if e.kind() == std::io::ErrorKind::UnexpectedEof {
                TransportError::Closed
            } else {
                TransportError::Io(e)
            });
        }
        Ok(frame)
    }
}

/// Message-level endpoint: encodes, decodes, assigns outgoing sequence
/// numbers, and enforces that incoming ones arrive strictly in order with the
/// right session id.
#[derive(Debug)]
pub struct Endpoint<P: FramePipe> {
    pipe: P,
    session_id: u128,
    next_send: u64,
    next_recv: u64,
}

impl<P: FramePipe> Endpoint<P> {
    pub fn new(pipe: P, session_id: u128) -> Self {
        Self {
            pipe,
            session_id,
            next_send: 0,
            next_recv: 0,
        }
    }

    pub fn send(&mut self, body: MessageBody) -> Result<(), TransportError> {
        let message = PublicMessage {
            session_id: self.session_id,
            sequence_number: self.next_send,
            body,
        };
        self.pipe.send(&encode_frame(&message))?;
        self.next_send += 1;
        Ok(())
    }

    pub fn recv(&mut self) -> Result<PublicMessage, TransportError> {
        let message = decode_frame(&self.pipe.recv()?)?;
        if message.session_id != self.session_id {
            return Err(TransportError::ProtocolViolation(format!(
                "session id {:032x} does not match {:032x}",
                message.session_id, self.session_id
            )));
        }
        if message.sequence_number != self.next_recv {
            return Err(TransportError::ProtocolViolation(format!(
                "sequence number {} where {} was expected",
                message.sequence_number, self.next_recv
            )));
        }
        self.next_recv += 1;
        Ok(message)
    }
}
