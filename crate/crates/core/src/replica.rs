//! The replica event loop: one state machine per replica consuming decoded
//! messages, timer fires and client submissions, and emitting sends, timer
//! arms and application deliveries. All durable writes go through the ledger
//! and are flushed before the turn's actions are released, so nothing a peer
//! sees ever depends on state that could be lost in a crash.
//!
//! Role layout per replica:
//!   - acceptor: range promises plus per-instance vote state;
//!   - learner: vote tallies, the decided-instance window, the table;
//!   - proposer: the batcher and its depth-1 proposal pipeline;
//!   - coordinator (when elected): scan/grant tenure state.
//!
//! A coordinator tenure is: a classic "scan" round covering all instances at
//! or above its first undecided slot (repairing or no-op-filling everything
//! in-flight), then — when fast rounds are on — a fast "grant" round above
//! the repaired range, opened to proposers with an any-message. Recovery of
//! a stalled or collided instance is a fresh tenure, which keeps every round
//! a vanilla two-phase round.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use thiserror::Error;

use crate::app::Command;
use crate::ledger::{LedgerDelta, LedgerError, LedgerStore};
use crate::liveness::{FailureDetector, RetryCause, RetryCounters, TimeoutMode, TimeoutPolicy};
use crate::protocol::{
    acceptor_on_phase2a, coordinator_pick_value, learner_on_vote,
    AcceptorReply, AcceptorState, ProtocolError, Tally,
};
use crate::quorum::QuorumSpec;
use crate::sequencer::{Batch, Batcher, SequenceError, TicketId};
use crate::sim::SimConfig;
use crate::types::{Digest, InstanceId, Nanos, ReplicaId, RoundId, RoundKind, Value};
use crate::wire::{Body, DecidedEntry, Message, ReportedVote};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Sequence(#[from] SequenceError),
    #[error(transparent)]
    Ledger(#[from] LedgerError),
}

/// Per-replica engine configuration.
#[derive(Clone, Copy, Debug)]
pub struct EngineConfig {
    pub me: ReplicaId,
    pub n: usize,
    pub quorums: QuorumSpec,
    /// When false the engine never opens a grant round and proposers route
    /// values through the coordinator: plain coordinator-driven operation.
    pub fast_rounds: bool,
    pub policy: TimeoutPolicy,
    pub heartbeat_interval: Nanos,
    pub max_batch_bytes: usize,
    pub pending_bound: usize,
    /// Decisions per catch-up burst.
    pub catchup_chunk: usize,
    /// Pause between catch-up bursts to a lagging replica.
    pub catchup_pause: Nanos,
    /// How far behind a peer's watermark triggers a catch-up request.
    pub catchup_threshold: u64,
}

impl EngineConfig {
    pub fn new(me: ReplicaId, n: usize, quorums: QuorumSpec, fast_rounds: bool) -> EngineConfig {
        EngineConfig {
            me,
            n,
            quorums,
            fast_rounds,
            policy: TimeoutPolicy::default(),
            heartbeat_interval: 20 * crate::liveness::MILLIS,
            max_batch_bytes: 8192,
            pending_bound: 10_000,
            catchup_chunk: 64,
            catchup_pause: 2 * crate::liveness::MILLIS,
            catchup_threshold: 8,
        }
    }
}

/// What the engine asks its driver to do.
#[derive(Debug)]
pub enum Action {
    Send { to: ReplicaId, msg: Message },
    Broadcast { msg: Message },
    Timer { at: Nanos, token: u64 },
    /// A batch crossed the local delivery watermark and was applied.
    Delivered { instance: InstanceId, batch: Batch },
    /// Locally submitted commands were served (their batch delivered here).
    Resolved { tickets: Vec<TicketId> },
}

// Timer token layout: kind in the top byte, payload below.
const K_HEARTBEAT: u64 = 1;
const K_INSTANCE: u64 = 2;
const K_PROPOSAL: u64 = 3;
const K_CATCHUP_PUSH: u64 = 4;
const K_CATCHUP_STALL: u64 = 5;
const K_PHASE1: u64 = 6;

pub fn timer_token(kind: u64, data: u64) -> u64 {
    debug_assert!(data < 1 << 56);
    (kind << 56) | data
}

fn token_parts(token: u64) -> (u64, u64) {
    (token >> 56, token & ((1 << 56) - 1))
}

/// Coordinator tenure state.
#[derive(Debug)]
enum Coord {
    Idle,
    /// Classic phase 1 over `[from, ∞)`, gathering vote reports.
    Scanning {
        round: RoundId,
        from: InstanceId,
        replies: BTreeMap<ReplicaId, Vec<ReportedVote>>,
        repaired: bool,
    },
    /// Fast phase 1 over `[from, ∞)` before the any-message goes out.
    GrantWait {
        round: RoundId,
        from: InstanceId,
        replies: BTreeMap<ReplicaId, Vec<ReportedVote>>,
        opened: bool,
    },
    /// Normal operation: assigning instances (classic) or standing back
    /// while proposers use the open fast round.
    Steady { round: RoundId, next_assign: InstanceId },
}

pub struct Replica<L: LedgerStore> {
    cfg: EngineConfig,
    ledger: L,
    now: Nanos,
    actions: Vec<Action>,
    // Acceptor.
    range_promises: Vec<(RoundId, InstanceId)>,
    acceptors: BTreeMap<InstanceId, AcceptorState>,
    /// The open fast round this acceptor will vote proposals in.
    grant: Option<(RoundId, InstanceId)>,
    // Learner.
    tallies: BTreeMap<InstanceId, Tally>,
    window: crate::sequencer::InstanceWindow,
    values: HashMap<Digest, Vec<u8>>,
    table: crate::app::TableState,
    // Proposer.
    batcher: Batcher,
    tickets: HashMap<u64, Vec<TicketId>>,
    next_unused: InstanceId,
    prop_attempt: u32,
    prop_epoch: u64,
    // Coordinator.
    coord: Coord,
    max_round_counter: u64,
    counters: RetryCounters,
    assigned: HashMap<u64, InstanceId>,
    last_scan_at: Option<Nanos>,
    // Liveness.
    detector: FailureDetector,
    current_coordinator: ReplicaId,
    peer_watermark: Vec<InstanceId>,
    inst_attempts: HashMap<InstanceId, u32>,
    timed: HashSet<InstanceId>,
    catchup_out: HashMap<ReplicaId, InstanceId>,
    catchup_in: Option<ReplicaId>,
}

impl<L: LedgerStore> Replica<L> {
    pub fn new(cfg: EngineConfig, ledger: L) -> Replica<L> {
        let mut values = HashMap::new();
        let noop = Value::noop();
        values.insert(noop.digest, noop.payload);
        Replica {
            batcher: Batcher::new(cfg.me, cfg.max_batch_bytes, cfg.pending_bound),
            detector: FailureDetector::new(cfg.n, cfg.me, cfg.policy.election_timeout),
            peer_watermark: vec![InstanceId::ZERO; cfg.n],
            cfg,
            ledger,
            now: 0,
            actions: Vec::new(),
            range_promises: Vec::new(),
            acceptors: BTreeMap::new(),
            grant: None,
            tallies: BTreeMap::new(),
            window: Default::default(),
            values,
            table: Default::default(),
            tickets: HashMap::new(),
            next_unused: InstanceId::ZERO,
            prop_attempt: 0,
            prop_epoch: 0,
            coord: Coord::Idle,
            max_round_counter: 0,
            counters: RetryCounters::default(),
            assigned: HashMap::new(),
            last_scan_at: None,
            current_coordinator: ReplicaId(0),
            inst_attempts: HashMap::new(),
            timed: HashSet::new(),
            catchup_out: HashMap::new(),
            catchup_in: None,
        }
    }

    /// Rebuild a replica from its recovered ledger records. The application
    /// table is replayed from decisions; in-flight client commands are gone.
    pub fn recover(cfg: EngineConfig, ledger: L, records: &[LedgerDelta]) -> Result<Replica<L>, EngineError> {
        let mut r = Replica::new(cfg, ledger);
        for rec in records {
            match rec {
                LedgerDelta::Promise { round, from } => {
                    r.range_promises.push((*round, *from));
                    r.max_round_counter = r.max_round_counter.max(round.counter);
                }
                LedgerDelta::Vote { instance, round, digest, payload } => {
                    let st = r.acceptors.entry(*instance).or_default();
                    if st.last_vote.is_none_or(|(rr, _)| rr < *round) {
                        st.last_vote = Some((*round, *digest));
                        if st.promised.is_none_or(|p| p < *round) {
                            st.promised = Some(*round);
                        }
                    }
                    r.values.insert(*digest, payload.clone());
                    r.max_round_counter = r.max_round_counter.max(round.counter);
                    if r.next_unused <= *instance {
                        r.next_unused = instance.next();
                    }
                }
                LedgerDelta::Decision { instance, digest, payload } => {
                    r.values.insert(*digest, payload.clone());
                    r.window.record_decision(*instance, *digest, Some(payload.clone()))?;
                    if r.next_unused <= *instance {
                        r.next_unused = instance.next();
                    }
                }
            }
        }
        r.deliver_ready();
        // Recovery deliveries rebuild the table; they are not new service.
        r.actions.clear();
        // Never reuse a batch id: the cluster may have delivered batches of
        // ours that this ledger never saw (proposed but crashed before our
        // own vote), so leave a margin beyond the highest recorded one.
        let mut max_seq = None;
        for payload in r.values.values() {
            if let Some(b) = Batch::decode(payload) {
                if b.proposer == r.cfg.me {
                    let seq = b.batch_id & ((1 << 48) - 1);
                    max_seq = Some(max_seq.map_or(seq, |m: u64| m.max(seq)));
                }
            }
        }
        if let Some(m) = max_seq {
            r.batcher.bump_seq_above(m + 64);
        }
        Ok(r)
    }

    /// Arm the initial timers. Call once, before any event is handled.
    pub fn start(&mut self, now: Nanos) -> Result<Vec<Action>, EngineError> {
        self.now = now;
        // Assume every peer is alive until proven otherwise; otherwise a
        // replica (re)starting late would elect itself and disrupt a healthy
        // coordinator with a higher round.
        for p in 0..self.cfg.n as u16 {
            self.detector.heard_from(ReplicaId(p), now);
        }
        self.arm(now, timer_token(K_HEARTBEAT, 0));
        // A restarted replica asks a peer for decisions straight away.
        if self.window.decided_count() > 0 || !self.acceptors.is_empty() {
            let peer = ReplicaId((self.cfg.me.0 + 1) % self.cfg.n as u16);
            self.request_catchup(peer);
        }
        self.finish_turn()
    }

    pub fn on_message(&mut self, now: Nanos, msg: Message) -> Result<Vec<Action>, EngineError> {
        self.now = now;
        self.detector.heard_from(msg.sender, now);
        self.max_round_counter = self.max_round_counter.max(msg.round.counter);
        self.dispatch(msg)?;
        self.finish_turn()
    }

    pub fn on_timer(&mut self, now: Nanos, token: u64) -> Result<Vec<Action>, EngineError> {
        self.now = now;
        let (kind, data) = token_parts(token);
        match kind {
            K_HEARTBEAT => self.on_heartbeat_tick(),
            K_INSTANCE => self.on_instance_timer(InstanceId(data)),
            K_PROPOSAL => self.on_proposal_timer(data),
            K_CATCHUP_PUSH => self.push_catchup(ReplicaId(data as u16)),
            K_CATCHUP_STALL => self.on_catchup_stall(),
            K_PHASE1 => self.on_phase1_timer(data),
            _ => {}
        }
        self.finish_turn()
    }

    /// Submit one client command. Returns the ticket resolved when the
    /// command's batch is delivered locally.
    pub fn submit(&mut self, now: Nanos, c: Command) -> Result<(TicketId, Vec<Action>), EngineError> {
        self.now = now;
        let ticket = self.batcher.submit(c)?;
        self.seal_and_propose();
        Ok((ticket, self.finish_turn()?))
    }

    // ------------------------------------------------------------------
    // Introspection for drivers and tests.

    pub fn me(&self) -> ReplicaId {
        self.cfg.me
    }

    pub fn watermark(&self) -> InstanceId {
        self.window.watermark()
    }

    pub fn decided_count(&self) -> usize {
        self.window.decided_count()
    }

    pub fn max_decided(&self) -> Option<InstanceId> {
        self.window.max_decided()
    }

    pub fn table(&self) -> &crate::app::TableState {
        &self.table
    }

    pub fn counters(&self) -> &RetryCounters {
        &self.counters
    }

    pub fn is_coordinator(&self) -> bool {
        self.current_coordinator == self.cfg.me
    }

    /// Highest round counter seen; scan churn shows up as steady growth.
    pub fn round_counter(&self) -> u64 {
        self.max_round_counter
    }

    pub fn decision_digest(&self, i: InstanceId) -> Option<Digest> {
        self.window.decision(i).map(|(d, _)| *d)
    }

    pub fn decision_payload(&self, i: InstanceId) -> Option<&Vec<u8>> {
        self.window.decision(i).and_then(|(_, p)| p.as_ref())
    }

    pub fn pending_commands(&self) -> usize {
        self.batcher.pending_commands() + self.batcher.inflight().map_or(0, |b| b.tickets.len())
    }

    pub fn ledger(&self) -> &L {
        &self.ledger
    }

    // ------------------------------------------------------------------
    // Internal plumbing.

    fn finish_turn(&mut self) -> Result<Vec<Action>, EngineError> {
        // Group commit: everything appended this turn becomes durable before
        // any message depending on it leaves the replica.
        self.ledger.flush()?;
        Ok(std::mem::take(&mut self.actions))
    }

    fn send(&mut self, to: ReplicaId, body: Body, instance: InstanceId, round: RoundId) {
        self.actions.push(Action::Send {
            to,
            msg: Message { sender: self.cfg.me, instance, round, body },
        });
    }

    fn broadcast(&mut self, body: Body, instance: InstanceId, round: RoundId) {
        self.actions.push(Action::Broadcast {
            msg: Message { sender: self.cfg.me, instance, round, body },
        });
    }

    fn arm(&mut self, at: Nanos, token: u64) {
        self.actions.push(Action::Timer { at, token });
    }

    fn effective_range_round(&self, i: InstanceId) -> Option<RoundId> {
        self.range_promises.iter().filter(|(_, f)| *f <= i).map(|(r, _)| *r).max()
    }

    /// Per-instance acceptor state with range promises folded in.
    fn acceptor_for(&mut self, i: InstanceId) -> &mut AcceptorState {
        let eff = self.effective_range_round(i);
        let st = self.acceptors.entry(i).or_default();
        if let Some(r) = eff {
            if st.promised.is_none_or(|p| p < r) {
                st.promised = Some(r);
            }
        }
        st
    }

    fn dispatch(&mut self, msg: Message) -> Result<(), EngineError> {
        let from = msg.sender;
        match msg.body {
            Body::Phase1a => self.on_phase1a(from, msg.instance, msg.round),
            Body::Phase1b { votes } => self.on_phase1b(from, msg.round, votes),
            Body::Phase2a { digest, payload } => {
                self.on_phase2a(msg.instance, msg.round, digest, payload)
            }
            Body::Any => {
                self.on_any(msg.instance, msg.round);
                Ok(())
            }
            Body::Phase2bVote { digest } => self.on_vote(from, msg.instance, msg.round, digest),
            Body::Propose { digest, payload } => {
                if msg.round.kind == RoundKind::Fast {
                    self.on_fast_propose(from, msg.instance, msg.round, digest, payload)
                } else {
                    self.on_classic_propose(from, digest, payload)
                }
            }
            Body::Decided { digest, payload } => {
                if Digest::of(&payload) == digest {
                    self.values.insert(digest, payload.clone());
                    self.apply_decision(msg.instance, digest, Some(payload))?;
                }
                Ok(())
            }
            Body::CatchUpRequest => {
                self.catchup_out.insert(from, msg.instance);
                self.push_catchup(from);
                Ok(())
            }
            Body::CatchUpReply { entries } => self.on_catchup_reply(entries),
            Body::Alert => {
                self.on_alert(from, msg.instance);
                Ok(())
            }
            Body::Heartbeat => {
                self.peer_watermark[from.0 as usize] = msg.instance;
                self.maybe_request_catchup();
                Ok(())
            }
        }
    }

    // ------------------------------------------------------------------
    // Acceptor.

    fn on_phase1a(&mut self, from: ReplicaId, start: InstanceId, round: RoundId) -> Result<(), EngineError> {
        // Range promises only move forward; an older invitation is declined
        // by silence and the inviter's retransmit timer sorts it out.
        let newest = self.range_promises.iter().map(|(r, _)| *r).max();
        match newest {
            Some(p) if p > round => return Ok(()),
            Some(p) if p == round => {} // idempotent re-reply below
            _ => {
                self.range_promises.push((round, start));
                self.ledger.append(LedgerDelta::Promise { round, from: start });
            }
        }
        let votes: Vec<ReportedVote> = self
            .acceptors
            .range(start..)
            .filter_map(|(i, st)| {
                st.last_vote.map(|(r, d)| ReportedVote {
                    instance: *i,
                    round: r,
                    digest: d,
                    payload: self.values.get(&d).cloned().unwrap_or_default(),
                })
            })
            .collect();
        self.send(from, Body::Phase1b { votes }, start, round);
        Ok(())
    }

    fn on_phase2a(
        &mut self,
        i: InstanceId,
        round: RoundId,
        digest: Digest,
        payload: Vec<u8>,
    ) -> Result<(), EngineError> {
        self.values.insert(digest, payload.clone());
        let st = self.acceptor_for(i);
        if let Some(AcceptorReply::Vote { .. }) = acceptor_on_phase2a(st, round, digest) {
            self.ledger.append(LedgerDelta::Vote { instance: i, round, digest, payload });
            self.broadcast(Body::Phase2bVote { digest }, i, round);
        }
        self.note_started(i);
        if self.next_unused <= i {
            self.next_unused = i.next();
        }
        Ok(())
    }

    fn on_any(&mut self, from_instance: InstanceId, round: RoundId) {
        debug_assert_eq!(round.kind, RoundKind::Fast);
        if self.grant.is_some_and(|(r, _)| r > round) {
            return;
        }
        self.grant = Some((round, from_instance));
        if self.next_unused < from_instance {
            self.next_unused = from_instance;
        }
        // A new open round obsoletes any in-flight proposal made in an older
        // one: repropose at a fresh slot.
        if self.batcher.inflight().is_some() {
            self.propose_inflight();
        }
    }

    fn on_fast_propose(
        &mut self,
        from: ReplicaId,
        i: InstanceId,
        round: RoundId,
        digest: Digest,
        payload: Vec<u8>,
    ) -> Result<(), EngineError> {
        if self.next_unused <= i {
            self.next_unused = i.next();
        }
        if let Some((d, Some(p))) = self.window.decision(i) {
            // Slot already settled: tell the proposer so it can re-aim.
            let (d, p) = (*d, p.clone());
            self.send(from, Body::Decided { digest: d, payload: p }, i, round);
            return Ok(());
        }
        let Some((granted, grant_from)) = self.grant else { return Ok(()) };
        if round != granted || i < grant_from {
            return Ok(());
        }
        self.values.insert(digest, payload.clone());
        let st = self.acceptor_for(i);
        if let Some(AcceptorReply::Vote { .. }) = acceptor_on_phase2a(st, round, digest) {
            self.ledger.append(LedgerDelta::Vote { instance: i, round, digest, payload });
            self.broadcast(Body::Phase2bVote { digest }, i, round);
        }
        self.note_started(i);
        Ok(())
    }

    // ------------------------------------------------------------------
    // Learner.

    fn on_vote(
        &mut self,
        from: ReplicaId,
        i: InstanceId,
        round: RoundId,
        digest: Digest,
    ) -> Result<(), EngineError> {
        if self.next_unused <= i {
            self.next_unused = i.next();
        }
        self.note_started(i);
        if self.window.is_decided(i) && self.decision_payload(i).is_some() {
            return Ok(());
        }
        let tally = self.tallies.entry(i).or_default();
        if let Some((_, d)) = learner_on_vote(tally, from, round, digest, &self.cfg.quorums)? {
            let payload = self.values.get(&d).cloned();
            self.apply_decision(i, d, payload)?;
        }
        Ok(())
    }

    fn apply_decision(
        &mut self,
        i: InstanceId,
        digest: Digest,
        payload: Option<Vec<u8>>,
    ) -> Result<(), EngineError> {
        let had_payload = self.window.decision(i).is_some_and(|(_, p)| p.is_some());
        self.window.record_decision(i, digest, payload)?;
        let now_has = self.window.decision(i).is_some_and(|(_, p)| p.is_some());
        if !had_payload && now_has {
            let p = self.window.decision(i).and_then(|(_, p)| p.clone()).unwrap();
            self.ledger.append(LedgerDelta::Decision { instance: i, digest, payload: p.clone() });
            if let Some(batch) = Batch::decode(&p) {
                if self.batcher.inflight().is_some_and(|b| b.batch_id == batch.batch_id) {
                    self.batcher.resolve(batch.batch_id);
                    self.prop_attempt = 0;
                    self.prop_epoch += 1;
                    self.seal_and_propose();
                }
            }
        }
        self.inst_attempts.remove(&i);
        if self.next_unused <= i {
            self.next_unused = i.next();
        }
        // A decision that stole our slot means our proposal lost the race
        // there: re-aim it at a fresh slot.
        if self
            .batcher
            .inflight()
            .is_some_and(|b| b.proposed_at == Some(i) && b.value.digest != digest)
        {
            self.propose_inflight();
        }
        self.deliver_ready();
        Ok(())
    }

    fn deliver_ready(&mut self) {
        for (i, batch) in self.window.deliverable() {
            for c in &batch.commands {
                self.table.apply(c);
            }
            if batch.proposer == self.cfg.me {
                if let Some(tickets) = self.tickets.remove(&batch.batch_id) {
                    self.actions.push(Action::Resolved { tickets });
                }
            }
            self.actions.push(Action::Delivered { instance: i, batch });
        }
    }

    // ------------------------------------------------------------------
    // Proposer.

    fn seal_and_propose(&mut self) {
        if self.batcher.seal().is_none() {
            return;
        }
        let pb = self.batcher.inflight().expect("just sealed");
        self.tickets.insert(pb.batch_id, pb.tickets.clone());
        self.values.insert(pb.value.digest, pb.value.payload.clone());
        self.prop_attempt = 0;
        self.propose_inflight();
    }

    fn propose_inflight(&mut self) {
        let Some(pb) = self.batcher.inflight() else { return };
        let digest = pb.value.digest;
        let payload = pb.value.payload.clone();
        if self.cfg.fast_rounds {
            let Some((round, from)) = self.grant else {
                // No open round yet; the any-message will trigger us.
                return;
            };
            let i = self.next_unused.max(from);
            self.next_unused = i.next();
            if let Some(pb) = self.batcher.inflight_mut() {
                pb.proposed_at = Some(i);
            }
            self.broadcast(Body::Propose { digest, payload }, i, round);
            self.note_started(i);
        } else {
            let coordinator = self.current_coordinator;
            self.send(coordinator, Body::Propose { digest, payload }, InstanceId::ZERO, RoundId::ZERO);
        }
        self.prop_epoch += 1;
        let wait = self.cfg.policy.backed_off(self.prop_attempt);
        self.arm(self.now + wait, timer_token(K_PROPOSAL, self.prop_epoch));
    }

    fn on_proposal_timer(&mut self, epoch: u64) {
        if epoch != self.prop_epoch || self.batcher.inflight().is_none() {
            return;
        }
        self.prop_attempt = self.prop_attempt.saturating_add(1);
        self.propose_inflight();
    }

    // ------------------------------------------------------------------
    // Coordinator.

    fn on_classic_propose(
        &mut self,
        from: ReplicaId,
        digest: Digest,
        payload: Vec<u8>,
    ) -> Result<(), EngineError> {
        let Coord::Steady { round, next_assign } = &self.coord else { return Ok(()) };
        if self.cfg.fast_rounds {
            // Fast configurations never route proposals through us.
            return Ok(());
        }
        let round = *round;
        let i = *next_assign;
        if let Some(batch_id) = Batch::decode(&payload).map(|b| b.batch_id) {
            if let Some(prev) = self.assigned.get(&batch_id).copied() {
                match self.window.decision(prev) {
                    // Its slot settled with this batch: just tell the sender.
                    Some((d, Some(p))) if *d == digest => {
                        let (d, p) = (*d, p.clone());
                        self.send(from, Body::Decided { digest: d, payload: p }, prev, round);
                        return Ok(());
                    }
                    // The slot was repaired to something else (the original
                    // assignment round died); fall through and assign the
                    // batch a fresh slot.
                    Some(_) => {}
                    // Still in flight: the running round or the next scan
                    // will finish it.
                    None => return Ok(()),
                }
            }
            self.assigned.insert(batch_id, i);
        }
        self.coord = Coord::Steady { round, next_assign: i.next() };
        self.values.insert(digest, payload.clone());
        self.broadcast(Body::Phase2a { digest, payload }, i, round);
        Ok(())
    }

    fn start_scan(&mut self) {
        self.last_scan_at = Some(self.now);
        self.max_round_counter += 1;
        let round = RoundId::new(self.max_round_counter, self.cfg.me, RoundKind::Classic);
        let from = self.window.first_undecided();
        self.coord = Coord::Scanning { round, from, replies: BTreeMap::new(), repaired: false };
        self.broadcast(Body::Phase1a, from, round);
        self.arm(
            self.now + self.cfg.policy.round_timeout,
            timer_token(K_PHASE1, round.counter),
        );
    }

    fn on_phase1_timer(&mut self, counter: u64) {
        // Retransmit a stalled phase 1 for the round we are still running.
        let rebroadcast = match &self.coord {
            Coord::Scanning { round, from, repaired: false, .. } if round.counter == counter => {
                Some((*from, *round))
            }
            Coord::GrantWait { round, from, opened: false, .. } if round.counter == counter => {
                Some((*from, *round))
            }
            _ => None,
        };
        if let Some((from, round)) = rebroadcast {
            self.broadcast(Body::Phase1a, from, round);
            self.arm(self.now + self.cfg.policy.round_timeout, timer_token(K_PHASE1, counter));
        }
    }

    fn on_phase1b(
        &mut self,
        from: ReplicaId,
        round: RoundId,
        votes: Vec<ReportedVote>,
    ) -> Result<(), EngineError> {
        for v in &votes {
            if Digest::of(&v.payload) == v.digest {
                self.values.insert(v.digest, v.payload.clone());
            }
        }
        match &mut self.coord {
            Coord::Scanning { round: r, replies, repaired, .. } if *r == round => {
                replies.entry(from).or_insert(votes);
                if replies.len() >= self.cfg.quorums.classic && !*repaired {
                    *repaired = true;
                    self.finish_scan()?;
                }
            }
            Coord::GrantWait { round: r, replies, opened, .. } if *r == round => {
                replies.entry(from).or_insert(votes);
                if replies.len() >= self.cfg.quorums.classic && !*opened {
                    *opened = true;
                    self.open_grant()?;
                }
            }
            _ => {}
        }
        Ok(())
    }

    /// Repair every instance the scan's phase 1 revealed, then move to
    /// steady state (classic) or open a grant round above the repaired
    /// range (fast).
    fn finish_scan(&mut self) -> Result<(), EngineError> {
        let Coord::Scanning { round, from, replies, .. } = std::mem::replace(&mut self.coord, Coord::Idle)
        else {
            unreachable!("finish_scan outside scan");
        };
        let hi = self.repair_range(round, from, &replies, true)?;
        let next = hi.map_or(from, InstanceId::next);
        if self.cfg.fast_rounds {
            self.max_round_counter += 1;
            let grant_round = RoundId::new(self.max_round_counter, self.cfg.me, RoundKind::Fast);
            self.coord = Coord::GrantWait {
                round: grant_round,
                from: next,
                replies: BTreeMap::new(),
                opened: false,
            };
            self.broadcast(Body::Phase1a, next, grant_round);
            self.arm(
                self.now + self.cfg.policy.round_timeout,
                timer_token(K_PHASE1, grant_round.counter),
            );
        } else {
            self.coord = Coord::Steady { round, next_assign: next };
        }
        Ok(())
    }

    /// Grant phase 1 finished: repair any stragglers reported inside the
    /// grant range (within the fast round itself), then open it to
    /// proposers.
    fn open_grant(&mut self) -> Result<(), EngineError> {
        let Coord::GrantWait { round, from, replies, .. } = std::mem::replace(&mut self.coord, Coord::Idle)
        else {
            unreachable!("open_grant outside grant");
        };
        self.repair_range(round, from, &replies, false)?;
        self.coord = Coord::Steady { round, next_assign: from };
        self.broadcast(Body::Any, from, round);
        Ok(())
    }

    /// Re-propose picked values (and fill dead slots with no-ops) for every
    /// undecided instance at or above `from` that phase 1 reported votes
    /// for. Returns the highest instance considered.
    fn repair_range(
        &mut self,
        round: RoundId,
        from: InstanceId,
        replies: &BTreeMap<ReplicaId, Vec<ReportedVote>>,
        count_retries: bool,
    ) -> Result<Option<InstanceId>, EngineError> {
        let mut hi: Option<InstanceId> = None;
        for votes in replies.values() {
            for v in votes {
                hi = Some(hi.map_or(v.instance, |h| h.max(v.instance)));
            }
        }
        if let Some(local) = self.window.max_decided() {
            if local >= from {
                hi = Some(hi.map_or(local, |h| h.max(local)));
            }
        }
        // Instances started locally whose votes all died (e.g. rejected under
        // a competing round) are reported by nobody; without this they would
        // sit undecided below new assignments forever.
        if self.next_unused > from {
            let started = InstanceId(self.next_unused.0 - 1);
            hi = Some(hi.map_or(started, |h| h.max(started)));
        }
        let Some(hi) = hi else { return Ok(None) };
        let mut i = from;
        while i <= hi {
            if self.window.is_decided(i) {
                // Peers may lack this decision; rebroadcast it.
                if let Some((d, Some(p))) = self.window.decision(i) {
                    let (d, p) = (*d, p.clone());
                    self.broadcast(Body::Decided { digest: d, payload: p }, i, round);
                }
                i = i.next();
                continue;
            }
            let mut tally = Tally::default();
            for (rep, votes) in replies {
                let reported = votes
                    .iter()
                    .filter(|v| v.instance == i)
                    .max_by_key(|v| v.round)
                    .map(|v| (v.round, v.digest));
                tally.record_reply(*rep, reported);
            }
            if count_retries {
                self.counters.record(i, classify(&tally));
            }
            let picked = coordinator_pick_value(&tally, &self.cfg.quorums)?;
            let (digest, payload) = match picked.and_then(|d| self.values.get(&d).map(|p| (d, p.clone()))) {
                Some(dp) => dp,
                None => {
                    let noop = Value::noop();
                    (noop.digest, noop.payload)
                }
            };
            self.broadcast(Body::Phase2a { digest, payload }, i, round);
            i = i.next();
        }
        Ok(Some(hi))
    }

    // ------------------------------------------------------------------
    // Liveness.

    fn on_heartbeat_tick(&mut self) {
        self.detector.heard_from(self.cfg.me, self.now);
        self.broadcast(Body::Heartbeat, self.window.watermark(), RoundId::ZERO);
        let c = self.detector.coordinator(self.now);
        if c != self.current_coordinator {
            self.current_coordinator = c;
            if c == self.cfg.me {
                self.assigned.clear();
                self.start_scan();
            } else {
                self.coord = Coord::Idle;
            }
        } else if c == self.cfg.me && matches!(self.coord, Coord::Idle) {
            self.start_scan();
        }
        self.maybe_request_catchup();
        self.arm(self.now + self.cfg.heartbeat_interval, timer_token(K_HEARTBEAT, 0));
    }

    fn note_started(&mut self, i: InstanceId) {
        if self.window.is_decided(i) || !self.timed.insert(i) {
            return;
        }
        let watch = match self.cfg.policy.mode {
            TimeoutMode::AnyReplica => true,
            TimeoutMode::CoordinatorOnly => self.is_coordinator(),
        };
        if watch {
            let wait = self.cfg.policy.backed_off(0);
            self.arm(self.now + wait, timer_token(K_INSTANCE, i.0));
        }
    }

    fn on_instance_timer(&mut self, i: InstanceId) {
        if self.window.is_decided(i) {
            self.inst_attempts.remove(&i);
            return;
        }
        let attempt = {
            let a = self.inst_attempts.entry(i).or_insert(0);
            *a += 1;
            *a
        };
        if self.is_coordinator() {
            self.trigger_recovery();
        } else {
            self.send(self.current_coordinator, Body::Alert, i, RoundId::ZERO);
        }
        let wait = self.cfg.policy.backed_off(attempt);
        self.arm(self.now + wait, timer_token(K_INSTANCE, i.0));
    }

    fn on_alert(&mut self, from: ReplicaId, i: InstanceId) {
        // Already settled here: the alerter just missed the decision (its
        // copies were lost), so resend it instead of recovering anything.
        if let Some((digest, Some(payload))) = self.window.decision(i) {
            let (digest, payload) = (*digest, payload.clone());
            self.send(from, Body::Decided { digest, payload }, i, RoundId::ZERO);
            return;
        }
        if !self.is_coordinator() {
            return;
        }
        self.trigger_recovery();
    }

    fn trigger_recovery(&mut self) {
        match self.coord {
            Coord::Scanning { .. } | Coord::GrantWait { .. } => return,
            _ => {}
        }
        // Rate limit: one new tenure per half round-timeout.
        if self
            .last_scan_at
            .is_some_and(|t| self.now < t + self.cfg.policy.round_timeout / 2)
        {
            return;
        }
        self.start_scan();
    }

    // ------------------------------------------------------------------
    // Catch-up.

    fn maybe_request_catchup(&mut self) {
        if self.catchup_in.is_some() {
            return;
        }
        let mine = self.window.watermark();
        let best = self
            .peer_watermark
            .iter()
            .enumerate()
            .filter(|&(p, _)| p != self.cfg.me.0 as usize)
            .max_by_key(|&(_, w)| w)
            .map(|(p, w)| (ReplicaId(p as u16), *w));
        if let Some((peer, w)) = best {
            if w.0 >= mine.0 + self.cfg.catchup_threshold {
                self.request_catchup(peer);
            }
        }
    }

    fn request_catchup(&mut self, peer: ReplicaId) {
        self.catchup_in = Some(peer);
        self.send(peer, Body::CatchUpRequest, self.window.watermark(), RoundId::ZERO);
        let stall = self.cfg.policy.round_timeout.saturating_mul(4);
        self.arm(self.now + stall, timer_token(K_CATCHUP_STALL, 0));
    }

    /// Serve one burst of decisions to a lagging peer, then pause.
    fn push_catchup(&mut self, peer: ReplicaId) {
        let Some(pos) = self.catchup_out.get(&peer).copied() else { return };
        let entries: Vec<DecidedEntry> = self
            .window
            .decided_from(pos, self.cfg.catchup_chunk)
            .into_iter()
            .map(|(instance, digest, payload)| DecidedEntry { instance, digest, payload })
            .collect();
        let Some(last) = entries.last() else {
            self.catchup_out.remove(&peer);
            return;
        };
        self.catchup_out.insert(peer, last.instance.next());
        self.send(peer, Body::CatchUpReply { entries }, pos, RoundId::ZERO);
        // A short burst just means we hit our own undecided frontier (or a
        // momentary gap); keep the session alive until a burst comes back
        // empty, so one request drains everything we ever learn.
        self.arm(
            self.now + self.cfg.catchup_pause,
            timer_token(K_CATCHUP_PUSH, peer.0 as u64),
        );
    }

    fn on_catchup_reply(&mut self, entries: Vec<DecidedEntry>) -> Result<(), EngineError> {
        for e in entries {
            if Digest::of(&e.payload) != e.digest {
                continue;
            }
            self.values.insert(e.digest, e.payload.clone());
            self.apply_decision(e.instance, e.digest, Some(e.payload))?;
        }
        Ok(())
    }

    fn on_catchup_stall(&mut self) {
        self.catchup_in = None;
        self.maybe_request_catchup();
    }
}

/// Was this stalled instance a fast-round value collision, or a plain
/// timeout? Conflicting votes reported in the same fast round mean two
/// proposers raced for the slot.
fn classify(tally: &Tally) -> RetryCause {
    let mut per_round: BTreeMap<RoundId, BTreeSet<Digest>> = BTreeMap::new();
    for (round, digest) in tally.replies.values().flatten() {
        if round.kind == RoundKind::Fast {
            per_round.entry(*round).or_default().insert(*digest);
        }
    }
    if per_round.values().any(|ds| ds.len() >= 2) {
        RetryCause::Collision
    } else {
        RetryCause::Timeout
    }
}

/// Restart cost model for the simulator: reading and replaying the ledger
/// takes a base time plus a per-record time before the replica rejoins.
pub fn recovery_delay(cfg: &SimConfig, records: usize) -> Nanos {
    let _ = cfg;
    2 * crate::liveness::MILLIS + records as Nanos * 20_000
}
