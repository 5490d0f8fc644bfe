//! Core identifiers shared by every subsystem.

use std::cmp::Ordering;
use std::fmt;

use sha2::{Digest as _, Sha256};

/// Simulated and real time are both carried as integer nanoseconds to keep
/// the discrete-event simulator free of floating-point nondeterminism.
pub type Nanos = u64;

/// Identity of one replica. Replicas are numbered `0..n`.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct ReplicaId(pub u16);

impl fmt::Display for ReplicaId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "r{}", self.0)
    }
}

/// One slot in the total order; each instance decides one batch.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Default)]
pub struct InstanceId(pub u64);

impl InstanceId {
    pub const ZERO: InstanceId = InstanceId(0);

    pub fn next(self) -> InstanceId {
        InstanceId(self.0 + 1)
    }
}

impl fmt::Display for InstanceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// Whether a round routes values through the coordinator (classic) or lets
/// proposers address acceptors directly (fast).
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub enum RoundKind {
    Classic,
    Fast,
}

impl RoundKind {
    pub fn as_u8(self) -> u8 {
        match self {
            RoundKind::Classic => 0,
            RoundKind::Fast => 1,
        }
    }

    pub fn from_u8(b: u8) -> Option<RoundKind> {
        match b {
            0 => Some(RoundKind::Classic),
            1 => Some(RoundKind::Fast),
            _ => None,
        }
    }
}

/// A round identifier: a counter paired with the owning replica so that two
/// coordinators starting recovery concurrently never produce the same round.
/// The kind is fixed for the lifetime of the round and rides along with the
/// identifier.
///
/// Ordering is by `(counter, owner)`; two rounds with equal pairs are the
/// same round (and by construction carry the same kind).
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub struct RoundId {
    pub counter: u64,
    pub owner: ReplicaId,
    pub kind: RoundKind,
}

impl RoundId {
    /// Round 0: classic, owned by the initial coordinator.
    pub const ZERO: RoundId = RoundId {
        counter: 0,
        owner: ReplicaId(0),
        kind: RoundKind::Classic,
    };

    pub fn new(counter: u64, owner: ReplicaId, kind: RoundKind) -> RoundId {
        RoundId { counter, owner, kind }
    }

    pub fn is_fast(&self) -> bool {
        self.kind == RoundKind::Fast
    }
}

impl Ord for RoundId {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.counter, self.owner)
            .cmp(&(other.counter, other.owner))
            // Kind never differs for equal (counter, owner) pairs; the
            // tiebreak only keeps Ord consistent with Eq.
            .then_with(|| self.kind.as_u8().cmp(&other.kind.as_u8()))
    }
}

impl PartialOrd for RoundId {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for RoundId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let k = match self.kind {
            RoundKind::Classic => "c",
            RoundKind::Fast => "f",
        };
        write!(f, "({},{},{})", self.counter, self.owner, k)
    }
}

/// Fixed-width content hash of a value payload.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Digest(pub [u8; 32]);

impl Digest {
    pub fn of(payload: &[u8]) -> Digest {
        let mut h = Sha256::new();
        h.update(payload);
        Digest(h.finalize().into())
    }
}

impl fmt::Debug for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in &self.0[..4] {
            write!(f, "{b:02x}")?;
        }
        write!(f, "..")
    }
}

/// A value under consensus: an opaque payload (a serialized batch) plus its
/// digest. Two values are equal iff their digests are equal; vote messages
/// carry only the digest.
#[derive(Clone, Debug)]
pub struct Value {
    pub digest: Digest,
    pub payload: Vec<u8>,
}

impl Value {
    pub fn new(payload: Vec<u8>) -> Value {
        Value {
            digest: Digest::of(&payload),
            payload,
        }
    }

    /// The gap-filling value: an empty payload, decided for instances that
    /// were started but whose proposal is unrecoverable.
    pub fn noop() -> Value {
        Value::new(Vec::new())
    }

    pub fn is_noop(&self) -> bool {
        self.payload.is_empty()
    }
}

impl PartialEq for Value {
    fn eq(&self, other: &Self) -> bool {
        self.digest == other.digest
    }
}

impl Eq for Value {}
