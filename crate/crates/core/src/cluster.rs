//! Drives a set of replica engines over the simulated network: routes
//! messages and timers, tracks submitted operations to their local delivery,
//! and supports killing and restarting replicas from their surviving ledger
//! records. Used by the integration tests and the benchmark harness.

use std::collections::HashMap;

use crate::app::Command;
use crate::ledger::{LedgerDelta, MemLedger};
use crate::replica::{Action, EngineConfig, EngineError, Replica};
use crate::sequencer::TicketId;
use crate::sim::{Arrival, SimConfig, SimNet};
use crate::types::{InstanceId, Nanos, ReplicaId};
use crate::wire::{decode, encode};

/// One submitted operation's lifecycle.
#[derive(Clone, Copy, Debug)]
pub struct OpRecord {
    pub replica: ReplicaId,
    pub submitted: Nanos,
    pub served: Option<Nanos>,
}

/// One message emission, for trace-equivalence comparisons.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TraceRec {
    pub at: Nanos,
    pub from: ReplicaId,
    /// None = broadcast.
    pub to: Option<ReplicaId>,
    pub bytes: Vec<u8>,
}

pub struct SimCluster {
    pub net: SimNet,
    replicas: Vec<Option<Replica<MemLedger>>>,
    /// Timer indirection: the network carries an index into this table so a
    /// timer armed before a crash never reaches the restarted incarnation.
    timer_tab: Vec<(ReplicaId, u64, u64)>,
    incarnation: Vec<u64>,
    buffered: Option<(Nanos, Arrival)>,
    pub ops: Vec<OpRecord>,
    ticket_map: HashMap<(u16, TicketId), usize>,
    pub record_trace: bool,
    pub trace: Vec<TraceRec>,
    now: Nanos,
}

impl SimCluster {
    /// Build and start `n` replicas. `config` is applied per replica with
    /// only the `me` field rewritten.
    pub fn new(sim: SimConfig, config: impl Fn(ReplicaId) -> EngineConfig) -> Result<SimCluster, EngineError> {
        let n = sim.n;
        let mut c = SimCluster {
            net: SimNet::new(sim),
            replicas: Vec::new(),
            timer_tab: Vec::new(),
            incarnation: vec![0; n],
            buffered: None,
            ops: Vec::new(),
            ticket_map: HashMap::new(),
            record_trace: false,
            trace: Vec::new(),
            now: 0,
        };
        for i in 0..n {
            let id = ReplicaId(i as u16);
            c.replicas.push(Some(Replica::new(config(id), MemLedger::default())));
        }
        for i in 0..n {
            let id = ReplicaId(i as u16);
            let actions = c.replicas[i].as_mut().unwrap().start(0)?;
            c.apply(id, actions);
        }
        Ok(c)
    }

    pub fn now(&self) -> Nanos {
        self.now
    }

    pub fn n(&self) -> usize {
        self.replicas.len()
    }

    pub fn replica(&self, r: ReplicaId) -> Option<&Replica<MemLedger>> {
        self.replicas[r.0 as usize].as_ref()
    }

    pub fn is_up(&self, r: ReplicaId) -> bool {
        self.replicas[r.0 as usize].is_some()
    }

    fn apply(&mut self, me: ReplicaId, actions: Vec<Action>) {
        for a in actions {
            match a {
                Action::Send { to, msg } => {
                    let bytes = encode(&msg);
                    if self.record_trace {
                        self.trace.push(TraceRec {
                            at: self.net.now(),
                            from: me,
                            to: Some(to),
                            bytes: bytes.clone(),
                        });
                    }
                    self.net.send(me, to, bytes);
                }
                Action::Broadcast { msg } => {
                    let bytes = encode(&msg);
                    if self.record_trace {
                        self.trace.push(TraceRec {
                            at: self.net.now(),
                            from: me,
                            to: None,
                            bytes: bytes.clone(),
                        });
                    }
                    self.net.broadcast(me, &bytes);
                }
                Action::Timer { at, token } => {
                    let idx = self.timer_tab.len() as u64;
                    self.timer_tab.push((me, self.incarnation[me.0 as usize], token));
                    self.net.arm_timer(me, at.max(self.net.now()), idx);
                }
                Action::Resolved { tickets } => {
                    for t in tickets {
                        if let Some(&op) = self.ticket_map.get(&(me.0, t)) {
                            self.ops[op].served = Some(self.net.now());
                        }
                    }
                }
                Action::Delivered { .. } => {}
            }
        }
    }

    /// Submit one command at the current simulation time. Returns false if
    /// the replica is down or pushed back.
    pub fn submit(&mut self, r: ReplicaId, c: Command) -> Result<bool, EngineError> {
        let now = self.now;
        let Some(rep) = self.replicas[r.0 as usize].as_mut() else { return Ok(false) };
        match rep.submit(now, c) {
            Ok((ticket, actions)) => {
                let idx = self.ops.len();
                self.ops.push(OpRecord { replica: r, submitted: now, served: None });
                self.ticket_map.insert((r.0, ticket), idx);
                self.apply(r, actions);
                Ok(true)
            }
            Err(EngineError::Sequence(_)) => Ok(false), // backpressure
            Err(e) => Err(e),
        }
    }

    fn next_event(&mut self, t: Nanos) -> Option<(Nanos, Arrival)> {
        if let Some(buf) = self.buffered.take() {
            if buf.0 <= t {
                return Some(buf);
            }
            self.buffered = Some(buf);
            return None;
        }
        // Never pop past `t`: popping advances the network clock, and
        // anything submitted afterwards must be stamped at `t`, not at the
        // next event's time.
        if self.net.peek_at()? > t {
            return None;
        }
        self.net.pop_next()
    }

    /// Process events up to and including time `t`.
    pub fn run_until(&mut self, t: Nanos) -> Result<(), EngineError> {
        while let Some((at, ev)) = self.next_event(t) {
            if at > t {
                // A popped arrival became ready after `t` (receiver busy
                // time); hold it for the next call.
                self.buffered = Some((at, ev));
                break;
            }
            self.now = at;
            match ev {
                Arrival::Message { from: _, to, bytes } => {
                    if self.replicas[to.0 as usize].is_none() {
                        continue;
                    }
                    // Undecodable frames cannot occur from our own encoder;
                    // drop defensively rather than crash the run.
                    let Ok(msg) = decode(&bytes) else { continue };
                    let actions =
                        self.replicas[to.0 as usize].as_mut().unwrap().on_message(at, msg)?;
                    self.apply(to, actions);
                }
                Arrival::Timer { owner, token } => {
                    let (rep, inc, tok) = self.timer_tab[token as usize];
                    debug_assert_eq!(rep, owner);
                    if inc != self.incarnation[rep.0 as usize] {
                        continue;
                    }
                    if self.replicas[rep.0 as usize].is_none() {
                        continue;
                    }
                    let actions = self.replicas[rep.0 as usize].as_mut().unwrap().on_timer(at, tok)?;
                    self.apply(rep, actions);
                }
            }
        }
        self.now = self.now.max(t);
        self.net.advance_to(t);
        Ok(())
    }

    /// Crash a replica, returning its durable ledger records (the committed
    /// prefix) and the flush boundaries (committed record counts), so tests
    /// can restart from any crash point.
    pub fn kill(&mut self, r: ReplicaId) -> (Vec<LedgerDelta>, Vec<usize>) {
        let rep = self.replicas[r.0 as usize].take().expect("killing a dead replica");
        self.incarnation[r.0 as usize] += 1;
        let ledger = rep.ledger();
        (ledger.committed().to_vec(), ledger.boundaries().to_vec())
    }

    /// Restart a crashed replica from recovered ledger records.
    pub fn restart(
        &mut self,
        r: ReplicaId,
        config: EngineConfig,
        records: &[LedgerDelta],
    ) -> Result<(), EngineError> {
        assert!(self.replicas[r.0 as usize].is_none(), "restarting a live replica");
        let mut ledger = MemLedger::default();
        for rec in records {
            use crate::ledger::LedgerStore;
            ledger.append(rec.clone());
        }
        {
            use crate::ledger::LedgerStore;
            ledger.flush().expect("mem ledger flush");
        }
        let mut rep = Replica::recover(config, ledger, records)?;
        let actions = rep.start(self.now)?;
        self.replicas[r.0 as usize] = Some(rep);
        self.apply(r, actions);
        Ok(())
    }

    /// Highest instance decided anywhere.
    pub fn max_decided(&self) -> Option<InstanceId> {
        self.replicas
            .iter()
            .flatten()
            .filter_map(|r| r.max_decided())
            .max()
    }

    /// No two replicas decided different values for the same instance.
    pub fn check_agreement(&self) -> Result<(), String> {
        let Some(hi) = self.max_decided() else { return Ok(()) };
        for i in 0..=hi.0 {
            let i = InstanceId(i);
            let mut seen = None;
            for rep in self.replicas.iter().flatten() {
                if let Some(d) = rep.decision_digest(i) {
                    match seen {
                        None => seen = Some(d),
                        Some(prev) if prev != d => {
                            return Err(format!("instance {i}: divergent decisions"));
                        }
                        _ => {}
                    }
                }
            }
        }
        Ok(())
    }

    /// Every live replica that has delivered up to the cluster-wide minimum
    /// watermark has the same table digest over that prefix. With equal
    /// watermarks this is full state equality.
    pub fn check_tables_converged(&self) -> Result<(), String> {
        let mut tables: Vec<_> = self
            .replicas
            .iter()
            .flatten()
            .map(|r| (r.me(), r.watermark(), r.table().state_digest()))
            .collect();
        tables.sort_by_key(|(_, w, _)| *w);
        for pair in tables.windows(2) {
            let ((a, wa, da), (_, wb, db)) = (&pair[0], &pair[1]);
            if wa == wb && da != db {
                return Err(format!("{a}: same watermark {wa}, different table digest"));
            }
        }
        Ok(())
    }

    pub fn served_count(&self) -> usize {
        self.ops.iter().filter(|o| o.served.is_some()).count()
    }
}
