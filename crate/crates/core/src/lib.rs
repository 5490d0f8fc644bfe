//! A dual-mode consensus engine that runs both classic (coordinator-routed)
//! and fast (proposer-direct) rounds over the same code path, together with
//! the pieces needed to study it: a deterministic switched-LAN simulator, a
//! durable ledger with crash recovery and catch-up, a replicated hash table
//! application, and a benchmark harness producing per-second metrics.
//!
//! The engine is a single-threaded state machine per replica: it consumes a
//! serialized stream of message/timer events and emits outbound messages.
//! All randomness lives outside the engine (in the simulator and the load
//! generator), so a run is a pure function of its seed and configuration.

pub mod app;
pub mod cluster;
pub mod config;
pub mod harness;
pub mod ledger;
pub mod liveness;
pub mod protocol;
pub mod quorum;
pub mod replica;
pub mod sequencer;
pub mod sim;
pub mod types;
pub mod udp;
pub mod wire;

pub use quorum::{min_replicas_for_resilience, quorum_spec, QuorumSpec, Variant};
pub use types::{Digest, InstanceId, Nanos, ReplicaId, RoundId, RoundKind, Value};
