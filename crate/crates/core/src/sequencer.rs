//! Mapping a stream of application commands onto consensus instances:
//! batching with a depth-1 pipeline (one outstanding proposal per replica),
//! the decided-instance window with gap-free in-order delivery, and the
//! theoretical latency constants.

use std::collections::{BTreeMap, HashSet};

use thiserror::Error;

use crate::app::{Command, COMMAND_WIRE_LEN};
use crate::types::{Digest, InstanceId, ReplicaId, RoundKind, Value};

/// Fixed bytes of a batch frame before its commands.
pub const BATCH_HEADER_LEN: usize = 8 + 2 + 4;

/// The unit ordered by one consensus instance: a non-empty run of commands
/// from a single proposer. The batch id is globally unique and survives
/// re-proposal, so duplicate decisions of the same batch are detectable.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Batch {
    pub batch_id: u64,
    pub proposer: ReplicaId,
    pub commands: Vec<Command>,
}

impl Batch {
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(BATCH_HEADER_LEN + self.commands.len() * COMMAND_WIRE_LEN);
        out.extend_from_slice(&self.batch_id.to_le_bytes());
        out.extend_from_slice(&self.proposer.0.to_le_bytes());
        out.extend_from_slice(&(self.commands.len() as u32).to_le_bytes());
        for c in &self.commands {
            c.encode_into(&mut out);
        }
        out
    }

    pub fn decode(buf: &[u8]) -> Option<Batch> {
        if buf.len() < BATCH_HEADER_LEN {
            return None;
        }
        let batch_id = u64::from_le_bytes(buf[..8].try_into().unwrap());
        let proposer = ReplicaId(u16::from_le_bytes(buf[8..10].try_into().unwrap()));
        let count = u32::from_le_bytes(buf[10..14].try_into().unwrap()) as usize;
        let mut rest = &buf[BATCH_HEADER_LEN..];
        let mut commands = Vec::with_capacity(count.min(4096));
        for _ in 0..count {
            let (c, r) = Command::decode(rest)?;
            commands.push(c);
            rest = r;
        }
        if !rest.is_empty() {
            return None;
        }
        Some(Batch { batch_id, proposer, commands })
    }
}

/// Number of one-way message delays from proposal emission to the first
/// learner decision, once Phase 1 has been factorized.
pub fn theoretical_delay(mode: RoundKind) -> u32 {
    match mode {
        RoundKind::Classic => 3,
        RoundKind::Fast => 2,
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SequenceError {
    #[error("pending command bound {bound} exceeded")]
    Backpressure { bound: usize },
    #[error("conflicting decision for instance {instance}")]
    ConflictingDecision { instance: InstanceId },
}

/// Opaque handle returned by submit, resolvable to the command's delivery.
pub type TicketId = u64;

/// A sealed batch awaiting decision.
#[derive(Clone, Debug)]
pub struct PendingBatch {
    pub batch_id: u64,
    pub value: Value,
    pub tickets: Vec<TicketId>,
    /// Instance this batch was last proposed at (fast mode), if any.
    pub proposed_at: Option<InstanceId>,
}

/// Command batching with a depth-1 pipeline: while one proposal is in
/// flight, arrivals accumulate in the open batch; the open batch is sealed
/// when the in-flight one resolves or when it reaches the size cap.
#[derive(Debug)]
pub struct Batcher {
    replica: ReplicaId,
    max_batch_bytes: usize,
    pending_bound: usize,
    open: Vec<(Command, TicketId)>,
    inflight: Option<PendingBatch>,
    next_seq: u64,
    next_ticket: u64,
}

impl Batcher {
    pub fn new(replica: ReplicaId, max_batch_bytes: usize, pending_bound: usize) -> Batcher {
        Batcher {
            replica,
            max_batch_bytes,
            pending_bound,
            open: Vec::new(),
            inflight: None,
            next_seq: 0,
            next_ticket: 0,
        }
    }

    /// Ensure future batch ids start above `seq`; used after recovery so a
    /// restarted replica never reuses an id the cluster may already have
    /// delivered (which would make its new batches look like duplicates).
    pub fn bump_seq_above(&mut self, seq: u64) {
        self.next_seq = self.next_seq.max(seq + 1);
    }

    pub fn max_commands_per_batch(&self) -> usize {
        (self.max_batch_bytes - BATCH_HEADER_LEN) / COMMAND_WIRE_LEN
    }

    pub fn submit(&mut self, c: Command) -> Result<TicketId, SequenceError> {
        if self.open.len() >= self.pending_bound {
            return Err(SequenceError::Backpressure { bound: self.pending_bound });
        }
        let ticket = self.next_ticket;
        self.next_ticket += 1;
        self.open.push((c, ticket));
        Ok(ticket)
    }

    pub fn pending_commands(&self) -> usize {
        self.open.len()
    }

    pub fn inflight(&self) -> Option<&PendingBatch> {
        self.inflight.as_ref()
    }

    pub fn inflight_mut(&mut self) -> Option<&mut PendingBatch> {
        self.inflight.as_mut()
    }

    /// Seal the open batch into a new in-flight proposal, if there is no
    /// proposal outstanding and at least one command waits.
    pub fn seal(&mut self) -> Option<&PendingBatch> {
        if self.inflight.is_some() || self.open.is_empty() {
            return None;
        }
        let take = self.open.len().min(self.max_commands_per_batch());
        let rest = self.open.split_off(take);
        let (commands, tickets): (Vec<Command>, Vec<TicketId>) =
            std::mem::replace(&mut self.open, rest).into_iter().unzip();
        let batch_id = ((self.replica.0 as u64) << 48) | self.next_seq;
        self.next_seq += 1;
        let batch = Batch { batch_id, proposer: self.replica, commands };
        self.inflight = Some(PendingBatch {
            batch_id,
            value: Value::new(batch.encode()),
            tickets,
            proposed_at: None,
        });
        self.inflight.as_ref()
    }

    /// A decision containing our in-flight batch arrived; returns its
    /// tickets. Decisions for other batches leave the pipeline untouched.
    pub fn resolve(&mut self, batch_id: u64) -> Option<Vec<TicketId>> {
        if self.inflight.as_ref()?.batch_id != batch_id {
            return None;
        }
        Some(self.inflight.take().unwrap().tickets)
    }
}

/// Per-replica record of decided instances and the delivery watermark.
/// Delivery is in strictly increasing instance order with no gaps; a batch
/// decided in two instances (after a retried proposal) is delivered only the
/// first time.
#[derive(Debug, Default)]
pub struct InstanceWindow {
    decided: BTreeMap<InstanceId, (Digest, Option<Vec<u8>>)>,
    delivered: InstanceId,
    delivered_batches: HashSet<u64>,
}

impl InstanceWindow {
    /// Record a decision. Returns true if this is new information (digest or
    /// payload). A differing digest for an already-decided instance is an
    /// agreement violation.
    pub fn record_decision(
        &mut self,
        instance: InstanceId,
        digest: Digest,
        payload: Option<Vec<u8>>,
    ) -> Result<bool, SequenceError> {
        match self.decided.get_mut(&instance) {
            Some((d, _)) if *d != digest => {
                Err(SequenceError::ConflictingDecision { instance })
            }
            Some((_, p)) => {
                if p.is_none() && payload.is_some() {
                    *p = payload;
                    Ok(true)
                } else {
                    Ok(false)
                }
            }
            None => {
                self.decided.insert(instance, (digest, payload));
                Ok(true)
            }
        }
    }

    pub fn decision(&self, instance: InstanceId) -> Option<&(Digest, Option<Vec<u8>>)> {
        self.decided.get(&instance)
    }

    pub fn is_decided(&self, instance: InstanceId) -> bool {
        self.decided.contains_key(&instance)
    }

    /// Next instance to deliver; everything below it has been delivered.
    pub fn watermark(&self) -> InstanceId {
        self.delivered
    }

    pub fn max_decided(&self) -> Option<InstanceId> {
        self.decided.keys().next_back().copied()
    }

    pub fn decided_count(&self) -> usize {
        self.decided.len()
    }

    /// First instance with no decision recorded.
    pub fn first_undecided(&self) -> InstanceId {
        let mut i = self.delivered;
        while self.decided.contains_key(&i) {
            i = i.next();
        }
        i
    }

    /// Decided instances at or above `from` whose payload is known, in order.
    pub fn decided_from(&self, from: InstanceId, limit: usize) -> Vec<(InstanceId, Digest, Vec<u8>)> {
        self.decided
            .range(from..)
            .filter_map(|(i, (d, p))| p.as_ref().map(|p| (*i, *d, p.clone())))
            .take(limit)
            .collect()
    }

    /// Pop all contiguously decided batches past the watermark. Duplicate
    /// batch ids and no-op fillers are consumed but not returned.
    pub fn deliverable(&mut self) -> Vec<(InstanceId, Batch)> {
        let mut out = Vec::new();
        while let Some((digest, Some(payload))) = self.decided.get(&self.delivered) {
            let _ = digest;
            if !payload.is_empty() {
                if let Some(batch) = Batch::decode(payload) {
                    if self.delivered_batches.insert(batch.batch_id) {
                        out.push((self.delivered, batch));
                    }
                }
            }
            self.delivered = self.delivered.next();
        }
        out
    }

    pub fn batch_delivered(&self, batch_id: u64) -> bool {
        self.delivered_batches.contains(&batch_id)
    }
}
