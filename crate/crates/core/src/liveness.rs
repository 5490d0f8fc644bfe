//! Failure detection and retry policy: per-instance progress timers with
//! exponential backoff, heartbeat-based coordinator election, and the
//! counters that classify why instances needed recovery rounds.

use std::collections::BTreeSet;

use crate::types::{InstanceId, Nanos, ReplicaId};

/// Who arms progress timers for an undecided instance.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum TimeoutMode {
    /// Only the current coordinator watches progress. Without fast rounds
    /// this reproduces plain coordinator-driven operation.
    CoordinatorOnly,
    /// Every replica watches; whoever fires first starts recovery. Needed
    /// with fast rounds, where a collision stalls an instance the
    /// coordinator may not even know about.
    AnyReplica,
}

/// Timer intervals, all in nanoseconds internally.
#[derive(Clone, Copy, Debug)]
pub struct TimeoutPolicy {
    /// Base wait for an undecided instance before starting recovery.
    pub round_timeout: Nanos,
    /// Silence from the coordinator before a replica claims the role.
    pub election_timeout: Nanos,
    /// Multiplier applied per consecutive retry of the same instance.
    pub backoff_factor: u32,
    /// Ceiling on the backed-off round timeout.
    pub backoff_cap: Nanos,
    pub mode: TimeoutMode,
}

pub const MILLIS: Nanos = 1_000_000;

impl Default for TimeoutPolicy {
    fn default() -> Self {
        // Simulator defaults: election at 4x the round timeout, backoff
        // doubling capped at 8x. Real-transport runs scale these up.
        TimeoutPolicy::from_round_timeout(50 * MILLIS)
    }
}

impl TimeoutPolicy {
    pub fn from_round_timeout(round_timeout: Nanos) -> TimeoutPolicy {
        TimeoutPolicy {
            round_timeout,
            election_timeout: 4 * round_timeout,
            backoff_factor: 2,
            backoff_cap: 8 * round_timeout,
            mode: TimeoutMode::AnyReplica,
        }
    }
}

impl TimeoutPolicy {
    /// Round timeout after `attempt` consecutive expiries (0 = first wait).
    pub fn backed_off(&self, attempt: u32) -> Nanos {
        let mut t = self.round_timeout;
        for _ in 0..attempt {
            t = t.saturating_mul(self.backoff_factor as Nanos);
            if t >= self.backoff_cap {
                return self.backoff_cap;
            }
        }
        t.min(self.backoff_cap)
    }
}

/// Why an instance entered recovery. Collisions are the subset of retries
/// where the coordinator's repair round observed votes for two or more
/// different values in the same fast round.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum RetryCause {
    Timeout,
    Collision,
}

/// Distinct-instance retry accounting. An instance counts once as retried
/// no matter how many recovery rounds it takes, and once as collided if any
/// of its recovery rounds saw conflicting fast votes.
#[derive(Default, Debug, Clone)]
pub struct RetryCounters {
    retried: BTreeSet<InstanceId>,
    collided: BTreeSet<InstanceId>,
}

impl RetryCounters {
    pub fn record(&mut self, instance: InstanceId, cause: RetryCause) {
        self.retried.insert(instance);
        if cause == RetryCause::Collision {
            self.collided.insert(instance);
        }
    }

    pub fn retried_count(&self) -> usize {
        self.retried.len()
    }

    pub fn collision_count(&self) -> usize {
        self.collided.len()
    }

    pub fn merge(&mut self, other: &RetryCounters) {
        self.retried.extend(other.retried.iter().copied());
        self.collided.extend(other.collided.iter().copied());
    }
}

/// Deterministic election: the lowest-numbered replica believed alive is the
/// coordinator. Every replica applies the same rule to the same local
/// evidence (heartbeat recency), so views converge once heartbeats flow.
pub fn elect_coordinator(alive: &BTreeSet<ReplicaId>) -> Option<ReplicaId> {
    alive.iter().next().copied()
}

/// Per-replica heartbeat recency tracking.
#[derive(Debug)]
pub struct FailureDetector {
    last_heard: Vec<Nanos>,
    window: Nanos,
    me: ReplicaId,
}

impl FailureDetector {
    pub fn new(n: usize, me: ReplicaId, window: Nanos) -> FailureDetector {
        FailureDetector { last_heard: vec![0; n], window, me }
    }

    pub fn heard_from(&mut self, peer: ReplicaId, now: Nanos) {
        self.last_heard[peer.0 as usize] = now;
    }

    /// The replicas currently believed alive. Self is always alive.
    pub fn alive(&self, now: Nanos) -> BTreeSet<ReplicaId> {
        self.last_heard
            .iter()
            .enumerate()
            .filter(|&(i, &t)| {
                i == self.me.0 as usize || now < self.window || t >= now - self.window
            })
            .map(|(i, _)| ReplicaId(i as u16))
            .collect()
    }

    pub fn coordinator(&self, now: Nanos) -> ReplicaId {
        elect_coordinator(&self.alive(now)).expect("self is always alive")
    }
}
