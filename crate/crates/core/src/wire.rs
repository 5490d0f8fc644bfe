//! Deterministic binary wire encoding: length-prefixed records with a
//! one-byte variant tag, fixed-width little-endian integers, a fixed-width
//! round (64-bit counter, 16-bit owner, 1-byte kind), a 64-bit instance id,
//! a 32-byte digest and an optional payload. Map-valued fields are emitted
//! in sorted order so encoding never depends on hash iteration order and
//! trace-equivalence tests can compare raw bytes.

use thiserror::Error;

use crate::types::{Digest, InstanceId, ReplicaId, RoundId, RoundKind};

/// One protocol message. `instance` doubles as the start of an open-ended
/// range for Phase1a/Any/CatchUpRequest.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Message {
    pub sender: ReplicaId,
    pub instance: InstanceId,
    pub round: RoundId,
    pub body: Body,
}

/// A vote reported in a Phase 1b reply. Payloads ride along so the
/// coordinator can re-propose a picked value without a fetch round trip;
/// Phase 1b traffic is rare (election and recovery only).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ReportedVote {
    pub instance: InstanceId,
    pub round: RoundId,
    pub digest: Digest,
    pub payload: Vec<u8>,
}

/// A decided instance relayed during catch-up.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DecidedEntry {
    pub instance: InstanceId,
    pub digest: Digest,
    pub payload: Vec<u8>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Body {
    /// Invitation to participate in `round` for all instances >= `instance`.
    Phase1a,
    /// Promise for the header round, reporting votes at or above the invited
    /// range start.
    Phase1b { votes: Vec<ReportedVote> },
    /// Coordinator's value for one instance in the header round.
    Phase2a { digest: Digest, payload: Vec<u8> },
    /// Standing permission for proposers to vote acceptors directly in the
    /// header (fast) round, for all instances >= `instance`.
    Any,
    /// An acceptor's vote, addressed to the learners. The header round is
    /// the round voted in.
    Phase2bVote { digest: Digest },
    /// A proposer's value. Fast path: header instance/round are the target
    /// slot and the granted fast round. Classic path: sent to the
    /// coordinator with zeroed instance/round for assignment.
    Propose { digest: Digest, payload: Vec<u8> },
    /// A known decision, sent to fill gaps.
    Decided { digest: Digest, payload: Vec<u8> },
    /// Ask a peer to relay decisions from `instance` upward.
    CatchUpRequest,
    /// One rate-limited burst of relayed decisions.
    CatchUpReply { entries: Vec<DecidedEntry> },
    /// A replica believes the header instance's round has stalled; the
    /// coordinator deduplicates and recovers.
    Alert,
    Heartbeat,
}

impl Body {
    fn tag(&self) -> u8 {
        match self {
            Body::Phase1a => 1,
            Body::Phase1b { .. } => 2,
            Body::Phase2a { .. } => 3,
            Body::Any => 4,
            Body::Phase2bVote { .. } => 5,
            Body::Propose { .. } => 6,
            Body::Decided { .. } => 7,
            Body::CatchUpRequest => 8,
            Body::CatchUpReply { .. } => 9,
            Body::Alert => 10,
            Body::Heartbeat => 11,
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DecodeError {
    #[error("truncated frame")]
    Truncated,
    #[error("unknown variant tag {0}")]
    UnknownTag(u8),
    #[error("invalid round kind byte {0}")]
    BadRoundKind(u8),
    #[error("trailing bytes after frame")]
    TrailingBytes,
}

fn put_round(out: &mut Vec<u8>, r: RoundId) {
    out.extend_from_slice(&r.counter.to_le_bytes());
    out.extend_from_slice(&r.owner.0.to_le_bytes());
    out.push(r.kind.as_u8());
}

fn put_bytes(out: &mut Vec<u8>, b: &[u8]) {
    out.extend_from_slice(&(b.len() as u32).to_le_bytes());
    out.extend_from_slice(b);
}

/// Encode a message as one length-prefixed frame.
pub fn encode(m: &Message) -> Vec<u8> {
    let mut body = Vec::with_capacity(64);
    body.push(m.body.tag());
    body.extend_from_slice(&m.sender.0.to_le_bytes());
    body.extend_from_slice(&m.instance.0.to_le_bytes());
    put_round(&mut body, m.round);
    match &m.body {
        Body::Phase1a | Body::Any | Body::CatchUpRequest | Body::Alert | Body::Heartbeat => {}
        Body::Phase1b { votes } => {
            body.extend_from_slice(&(votes.len() as u32).to_le_bytes());
            for v in votes {
                body.extend_from_slice(&v.instance.0.to_le_bytes());
                put_round(&mut body, v.round);
                body.extend_from_slice(&v.digest.0);
                put_bytes(&mut body, &v.payload);
            }
        }
        Body::Phase2a { digest, payload }
        | Body::Propose { digest, payload }
        | Body::Decided { digest, payload } => {
            body.extend_from_slice(&digest.0);
            put_bytes(&mut body, payload);
        }
        Body::Phase2bVote { digest } => {
            body.extend_from_slice(&digest.0);
        }
        Body::CatchUpReply { entries } => {
            body.extend_from_slice(&(entries.len() as u32).to_le_bytes());
            for e in entries {
                body.extend_from_slice(&e.instance.0.to_le_bytes());
                body.extend_from_slice(&e.digest.0);
                put_bytes(&mut body, &e.payload);
            }
        }
    }
    let mut out = Vec::with_capacity(4 + body.len());
    out.extend_from_slice(&(body.len() as u32).to_le_bytes());
    out.extend_from_slice(&body);
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], DecodeError> {
        if self.pos + n > self.buf.len() {
            return Err(DecodeError::Truncated);
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

    fn round(&mut self) -> Result<RoundId, DecodeError> {
        let counter = self.u64()?;
        let owner = ReplicaId(self.u16()?);
        let kind_byte = self.u8()?;
        let kind = RoundKind::from_u8(kind_byte).ok_or(DecodeError::BadRoundKind(kind_byte))?;
        Ok(RoundId { counter, owner, kind })
    }

    fn digest(&mut self) -> Result<Digest, DecodeError> {
        Ok(Digest(self.take(32)?.try_into().unwrap()))
    }

    fn bytes(&mut self) -> Result<Vec<u8>, DecodeError> {
        let len = self.u32()? as usize;
        Ok(self.take(len)?.to_vec())
    }
}

/// Decode one frame produced by [`encode`]. The whole buffer must be exactly
/// one frame.
pub fn decode(buf: &[u8]) -> Result<Message, DecodeError> {
    let mut r = Reader { buf, pos: 0 };
    let len = r.u32()? as usize;
    if buf.len() != 4 + len {
        return Err(if buf.len() < 4 + len {
            DecodeError::Truncated
        } else {
            DecodeError::TrailingBytes
        });
    }
    let tag = r.u8()?;
    let sender = ReplicaId(r.u16()?);
    let instance = InstanceId(r.u64()?);
    let round = r.round()?;
    let body = match tag {
        1 => Body::Phase1a,
        2 => {
            let count = r.u32()? as usize;
            let mut votes = Vec::with_capacity(count.min(1024));
            for _ in 0..count {
                votes.push(ReportedVote {
                    instance: InstanceId(r.u64()?),
                    round: r.round()?,
                    digest: r.digest()?,
                    payload: r.bytes()?,
                });
            }
            Body::Phase1b { votes }
        }
        3 => Body::Phase2a { digest: r.digest()?, payload: r.bytes()? },
        4 => Body::Any,
        5 => Body::Phase2bVote { digest: r.digest()? },
        6 => Body::Propose { digest: r.digest()?, payload: r.bytes()? },
        7 => Body::Decided { digest: r.digest()?, payload: r.bytes()? },
        8 => Body::CatchUpRequest,
        9 => {
            let count = r.u32()? as usize;
            let mut entries = Vec::with_capacity(count.min(1024));
            for _ in 0..count {
                entries.push(DecidedEntry {
                    instance: InstanceId(r.u64()?),
                    digest: r.digest()?,
                    payload: r.bytes()?,
                });
            }
            Body::CatchUpReply { entries }
        }
        10 => Body::Alert,
        11 => Body::Heartbeat,
        t => return Err(DecodeError::UnknownTag(t)),
    };
    if r.pos != buf.len() {
        return Err(DecodeError::TrailingBytes);
    }
    Ok(Message { sender, instance, round, body })
}
