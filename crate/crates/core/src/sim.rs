//! Deterministic discrete-event model of a switched LAN. Unicast copies
//! contend for the destination's switch output port (serialization delay per
//! byte), then cross one link of fixed latency plus optional jitter. A
//! replica's own copy of a broadcast takes the loopback fast path and never
//! touches the network. Receivers process messages serially with a
//! configurable busy time, which is what makes overload and recovery bursts
//! visible as queueing.
//!
//! Determinism: all randomness comes from one seeded stream, and the event
//! queue breaks time ties by insertion sequence.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::types::{Nanos, ReplicaId};

#[derive(Clone, Copy, Debug)]
pub struct SimConfig {
    pub n: usize,
    /// One-way propagation delay.
    pub link_latency: Nanos,
    /// Fixed per-message cost at the switch output port.
    pub ser_base: Nanos,
    /// Per-byte cost at the switch output port.
    pub ser_per_byte: Nanos,
    /// Fixed per-message receiver processing time.
    pub proc_base: Nanos,
    /// Per-byte receiver processing time.
    pub proc_per_byte: Nanos,
    /// Independent per-copy drop probability (loopback copies never drop).
    pub loss_prob: f64,
    /// Probability a copy is delivered twice.
    pub dup_prob: f64,
    /// Maximum uniform extra delay per copy.
    pub jitter: Nanos,
    /// Deliver a sender's own broadcast copy immediately instead of routing
    /// it through the switch like everyone else's.
    pub loopback_fastpath: bool,
    pub seed: u64,
}

impl SimConfig {
    /// A small idealized LAN: 50 µs links, no loss, no jitter, and a
    /// processing cost low enough that light load never queues.
    pub fn ideal(n: usize, seed: u64) -> SimConfig {
        SimConfig {
            n,
            link_latency: 50_000,
            ser_base: 0,
            ser_per_byte: 0,
            proc_base: 0,
            proc_per_byte: 0,
            loss_prob: 0.0,
            dup_prob: 0.0,
            jitter: 0,
            loopback_fastpath: true,
            seed,
        }
    }

    /// A contended LAN sized like a 100 Mbit/s switch: 80 ns/byte
    /// serialization plus per-message overheads, used by the throughput
    /// experiments.
    pub fn lan(n: usize, seed: u64) -> SimConfig {
        SimConfig {
            n,
            link_latency: 50_000,
            ser_base: 10_000,
            ser_per_byte: 80,
            proc_base: 20_000,
            proc_per_byte: 20,
            loss_prob: 0.0,
            dup_prob: 0.0,
            jitter: 0,
            loopback_fastpath: true,
            seed,
        }
    }
}

/// What the driver receives when it advances the simulation.
#[derive(Debug, PartialEq, Eq)]
pub enum Arrival {
    /// A network message is ready for processing at `to`.
    Message { from: ReplicaId, to: ReplicaId, bytes: Vec<u8> },
    /// A timer armed by `owner` fired. The token is opaque to the network.
    Timer { owner: ReplicaId, token: u64 },
}

#[derive(Debug, PartialEq, Eq)]
enum Pending {
    /// A copy that has crossed the wire but not yet claimed receiver time.
    Arrive { from: ReplicaId, to: ReplicaId, bytes: Vec<u8> },
    /// A copy whose receiver busy time has been accounted; pops as ready.
    Handle { from: ReplicaId, to: ReplicaId, bytes: Vec<u8> },
    Timer { owner: ReplicaId, token: u64 },
}

pub struct SimNet {
    cfg: SimConfig,
    now: Nanos,
    seq: u64,
    queue: BinaryHeap<Reverse<(Nanos, u64, Pending)>>,
    /// Next free time of each destination's switch output port.
    port_free: Vec<Nanos>,
    /// Next free time of each replica's receive path.
    rx_free: Vec<Nanos>,
    rng: ChaCha8Rng,
    pub sent_messages: u64,
    pub sent_bytes: u64,
    pub dropped_messages: u64,
}

// Pending participates in heap ordering only through the (time, seq) key;
// this ordering is never exercised but must exist for the tuple Ord.
impl PartialOrd for Pending {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Pending {
    fn cmp(&self, _other: &Self) -> std::cmp::Ordering {
        std::cmp::Ordering::Equal
    }
}

impl SimNet {
    pub fn new(cfg: SimConfig) -> SimNet {
        let n = cfg.n;
        SimNet {
            cfg,
            now: 0,
            seq: 0,
            queue: BinaryHeap::new(),
            port_free: vec![0; n],
            rx_free: vec![0; n],
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            sent_messages: 0,
            sent_bytes: 0,
            dropped_messages: 0,
        }
    }

    pub fn now(&self) -> Nanos {
        self.now
    }

    pub fn config(&self) -> &SimConfig {
        &self.cfg
    }

    fn push(&mut self, at: Nanos, p: Pending) {
        self.queue.push(Reverse((at, self.seq, p)));
        self.seq += 1;
    }

    /// Send one unicast copy at the current time. A self-addressed copy is
    /// delivered immediately (loopback), bypassing port, loss and jitter.
    pub fn send(&mut self, from: ReplicaId, to: ReplicaId, bytes: Vec<u8>) {
        self.sent_messages += 1;
        self.sent_bytes += bytes.len() as u64;
        if from == to && self.cfg.loopback_fastpath {
            self.push(self.now, Pending::Handle { from, to, bytes });
            return;
        }
        let mut copies = 1;
        if self.cfg.dup_prob > 0.0 && self.rng.gen_bool(self.cfg.dup_prob) {
            copies = 2;
        }
        for _ in 0..copies {
            if self.cfg.loss_prob > 0.0 && self.rng.gen_bool(self.cfg.loss_prob) {
                self.dropped_messages += 1;
                continue;
            }
            let port = &mut self.port_free[to.0 as usize];
            let depart = (*port).max(self.now);
            let tx_done =
                depart + self.cfg.ser_base + bytes.len() as Nanos * self.cfg.ser_per_byte;
            *port = tx_done;
            let jitter = if self.cfg.jitter > 0 {
                self.rng.gen_range(0..=self.cfg.jitter)
            } else {
                0
            };
            let arrival = tx_done + self.cfg.link_latency + jitter;
            self.push(arrival, Pending::Arrive { from, to, bytes: bytes.clone() });
        }
    }

    /// Send to every replica in `0..n`, including the sender's own loopback
    /// copy.
    pub fn broadcast(&mut self, from: ReplicaId, bytes: &[u8]) {
        for i in 0..self.cfg.n {
            self.send(from, ReplicaId(i as u16), bytes.to_vec());
        }
    }

    pub fn arm_timer(&mut self, owner: ReplicaId, at: Nanos, token: u64) {
        debug_assert!(at >= self.now);
        self.push(at, Pending::Timer { owner, token });
    }

    /// Time of the next queued event, without popping it. An `Arrive` entry
    /// may still turn into a later-ready `Handle` when popped.
    pub fn peek_at(&self) -> Option<Nanos> {
        self.queue.peek().map(|Reverse((at, _, _))| *at)
    }

    /// Move the clock forward to `t` with no event; lets a driver stamp
    /// injected work (submissions) at the right time.
    pub fn advance_to(&mut self, t: Nanos) {
        self.now = self.now.max(t);
    }

    /// Pop the next event, advancing the clock to its time.
    pub fn pop_next(&mut self) -> Option<(Nanos, Arrival)> {
        loop {
            let Reverse((at, _, p)) = self.queue.pop()?;
            debug_assert!(at >= self.now, "time went backwards");
            self.now = at;
            match p {
                Pending::Arrive { from, to, bytes } => {
                    // Claim receiver time, then requeue as ready.
                    let busy = &mut self.rx_free[to.0 as usize];
                    let start = (*busy).max(at);
                    let done = start
                        + self.cfg.proc_base
                        + bytes.len() as Nanos * self.cfg.proc_per_byte;
                    *busy = done;
                    self.push(done, Pending::Handle { from, to, bytes });
                }
                Pending::Handle { from, to, bytes } => {
                    return Some((at, Arrival::Message { from, to, bytes }));
                }
                Pending::Timer { owner, token } => {
                    return Some((at, Arrival::Timer { owner, token }));
                }
            }
        }
    }

    /// True when no message or timer remains.
    pub fn idle(&self) -> bool {
        self.queue.is_empty()
    }
}
