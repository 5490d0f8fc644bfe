//! Real-transport backend: every replica owns a UDP socket, messages are
//! single unreliable datagrams, and time is the wall clock. The whole
//! cluster runs in one thread so runs stay reproducible enough to compare;
//! the protocol itself provides all loss handling.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap};
use std::io::ErrorKind;
use std::net::{SocketAddr, UdpSocket};
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::harness::{generate_load, summarize, MetricsRow, PointResult, PointSpec, SECOND};
use crate::ledger::MemLedger;
use crate::liveness::{RetryCounters, TimeoutPolicy, MILLIS};
use crate::replica::{Action, EngineError, Replica};
use crate::sequencer::TicketId;
use crate::types::{Nanos, ReplicaId};
use crate::wire::{decode, encode};

/// Datagrams above this size are a send-time error; batch sizing keeps the
/// protocol far below it.
pub const MAX_DATAGRAM: usize = 60 * 1024;

#[derive(Debug, Error)]
pub enum UdpError {
    #[error("udp io: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error("message of {0} bytes exceeds the datagram cap")]
    Oversized(usize),
    #[error("failure injection is only supported on the simulator")]
    NoFailureInjection,
}

struct UdpCluster {
    sockets: Vec<UdpSocket>,
    addrs: Vec<SocketAddr>,
    replicas: Vec<Replica<MemLedger>>,
    timers: BinaryHeap<Reverse<(Nanos, u16, u64)>>,
    epoch: Instant,
    sent_bytes: u64,
}

impl UdpCluster {
    fn bind(n: usize) -> Result<UdpCluster, UdpError> {
        let mut sockets = Vec::new();
        let mut addrs = Vec::new();
        for _ in 0..n {
            let s = UdpSocket::bind("127.0.0.1:0")?;
            s.set_nonblocking(true)?;
            addrs.push(s.local_addr()?);
            sockets.push(s);
        }
        Ok(UdpCluster {
            sockets,
            addrs,
            replicas: Vec::new(),
            timers: BinaryHeap::new(),
            epoch: Instant::now(),
            sent_bytes: 0,
        })
    }

    fn now(&self) -> Nanos {
        self.epoch.elapsed().as_nanos() as Nanos
    }

    fn transmit(&mut self, me: ReplicaId, to: ReplicaId, bytes: &[u8]) -> Result<(), UdpError> {
        if bytes.len() > MAX_DATAGRAM {
            return Err(UdpError::Oversized(bytes.len()));
        }
        self.sent_bytes += bytes.len() as u64;
        match self.sockets[me.0 as usize].send_to(bytes, self.addrs[to.0 as usize]) {
            Ok(_) => Ok(()),
            // Full buffers behave like wire loss.
            Err(e) if e.kind() == ErrorKind::WouldBlock => Ok(()),
            Err(e) => Err(e.into()),
        }
    }

    fn apply(
        &mut self,
        me: ReplicaId,
        actions: Vec<Action>,
        ops: &mut [(Nanos, Option<Nanos>)],
        tickets: &mut HashMap<(u16, TicketId), usize>,
    ) -> Result<(), UdpError> {
        for a in actions {
            match a {
                Action::Send { to, msg } => self.transmit(me, to, &encode(&msg))?,
                Action::Broadcast { msg } => {
                    let bytes = encode(&msg);
                    for to in 0..self.replicas.len() as u16 {
                        self.transmit(me, ReplicaId(to), &bytes)?;
                    }
                }
                Action::Timer { at, token } => {
                    self.timers.push(Reverse((at, me.0, token)));
                }
                Action::Resolved { tickets: resolved } => {
                    let now = self.now();
                    for t in resolved {
                        if let Some(&idx) = tickets.get(&(me.0, t)) {
                            ops[idx].1 = Some(now);
                        }
                    }
                }
                Action::Delivered { .. } => {}
            }
        }
        Ok(())
    }
}

/// Run one sweep point over real UDP sockets on the loopback interface.
/// Wall-clock duration equals the spec duration plus a drain window.
pub fn run_udp_point(spec: &PointSpec) -> Result<PointResult, UdpError> {
    if spec.failure.is_some() {
        return Err(UdpError::NoFailureInjection);
    }
    let n = spec.n;
    let mut cluster = UdpCluster::bind(n)?;
    for i in 0..n {
        let me = ReplicaId(i as u16);
        let mut cfg = spec
            .algorithm
            .engine_config(me, n)
            .expect("spec validated by caller");
        // Real-network timers: looser than the simulator's.
        let mode = cfg.policy.mode;
        cfg.policy = TimeoutPolicy::from_round_timeout(200 * MILLIS);
        cfg.policy.mode = mode;
        cluster.replicas.push(Replica::new(cfg, MemLedger::default()));
    }
    let mut ops: Vec<(Nanos, Option<Nanos>)> = Vec::new();
    let mut tickets: HashMap<(u16, TicketId), usize> = HashMap::new();
    for i in 0..n {
        let me = ReplicaId(i as u16);
        let now = cluster.now();
        let actions = cluster.replicas[i].start(now).map_err(UdpError::Engine)?;
        cluster.apply(me, actions, &mut ops, &mut tickets)?;
    }

    let warmup = 300 * MILLIS;
    let load = generate_load(spec.rate, n, spec.duration_s, spec.seed);
    let mut load_iter = load.into_iter().peekable();
    let end = warmup + spec.duration_s * SECOND;
    let deadline = end + SECOND;
    let mut offered = 0u64;
    let mut rejected = 0u64;
    let mut rows: Vec<MetricsRow> = Vec::new();
    let mut next_bucket_end = warmup + SECOND;
    let mut buf = [0u8; MAX_DATAGRAM];

    loop {
        let now = cluster.now();
        if now >= deadline {
            break;
        }
        // Timers due.
        while let Some(&Reverse((at, owner, token))) = cluster.timers.peek() {
            if at > now {
                break;
            }
            cluster.timers.pop();
            let actions = cluster.replicas[owner as usize]
                .on_timer(now, token)
                .map_err(UdpError::Engine)?;
            cluster.apply(ReplicaId(owner), actions, &mut ops, &mut tickets)?;
        }
        // Inbound datagrams.
        let mut idle = true;
        for i in 0..n {
            loop {
                match cluster.sockets[i].recv_from(&mut buf) {
                    Ok((len, _)) => {
                        idle = false;
                        let Ok(msg) = decode(&buf[..len]) else { continue };
                        let now = cluster.now();
                        let actions = cluster.replicas[i]
                            .on_message(now, msg)
                            .map_err(UdpError::Engine)?;
                        cluster.apply(ReplicaId(i as u16), actions, &mut ops, &mut tickets)?;
                    }
                    Err(e) if e.kind() == ErrorKind::WouldBlock => break,
                    Err(e) => return Err(e.into()),
                }
            }
        }
        // Load arrivals.
        while let Some((t, _, _)) = load_iter.peek() {
            let due = warmup + *t;
            if due > cluster.now() || due >= end {
                if due >= end {
                    load_iter.next();
                    continue;
                }
                break;
            }
            let (_, g, cmd) = load_iter.next().unwrap();
            offered += 1;
            let r = (g % n as u16) as usize;
            let now = cluster.now();
            match cluster.replicas[r].submit(now, cmd) {
                Ok((ticket, actions)) => {
                    tickets.insert((g % n as u16, ticket), ops.len());
                    ops.push((now, None));
                    cluster.apply(ReplicaId(r as u16), actions, &mut ops, &mut tickets)?;
                }
                Err(EngineError::Sequence(_)) => rejected += 1,
                Err(e) => return Err(e.into()),
            }
            idle = false;
        }
        // Bucket snapshot.
        if cluster.now() >= next_bucket_end {
            let mut counters = RetryCounters::default();
            for r in &cluster.replicas {
                counters.merge(r.counters());
            }
            rows.push(MetricsRow {
                bucket_s: rows.len() as u64,
                served_ops: 0,
                mean_rt_ms: 0.0,
                total_inst: cluster.replicas.iter().map(|r| r.decided_count() as u64).max().unwrap_or(0),
                retried_inst: counters.retried_count() as u64,
                collisions: counters.collision_count() as u64,
                bytes: cluster.sent_bytes,
            });
            next_bucket_end += SECOND;
        }
        if idle {
            std::thread::sleep(Duration::from_micros(100));
        }
    }

    let mut served = 0u64;
    let mut per_bucket: HashMap<u64, (u64, f64)> = HashMap::new();
    for (submitted, done) in &ops {
        if let Some(at) = done {
            served += 1;
            let bucket = at.saturating_sub(warmup) / SECOND;
            let e = per_bucket.entry(bucket).or_insert((0, 0.0));
            e.0 += 1;
            e.1 += (at - submitted) as f64 / MILLIS as f64;
        }
    }
    for row in &mut rows {
        if let Some((count, rt)) = per_bucket.get(&row.bucket_s) {
            row.served_ops = *count;
            row.mean_rt_ms = rt / *count as f64;
        }
    }
    let pending = offered - served - rejected;
    let summary = summarize(&rows, spec.duration_s);
    Ok(PointResult { rows, summary, offered, served, rejected, pending, markers: None })
}
