//! The benchmark harness: open-loop load generation, the five comparative
//! experiments, per-second metrics rows, failure injection with kill and
//! reintegration markers, and CSV output.

use std::collections::BTreeMap;
use std::io::Write as _;
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::app::{Command, VALUE_LEN};
use crate::cluster::SimCluster;
use crate::config::Config;
use crate::liveness::{RetryCounters, TimeoutMode, MILLIS};
use crate::quorum::{classic_with_quorum, quorum_spec, QuorumError, QuorumSpec, Variant};
use crate::replica::{recovery_delay, EngineConfig, EngineError};
use crate::sim::SimConfig;
use crate::types::{Nanos, ReplicaId};

pub const SECOND: Nanos = 1_000_000_000;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Quorum(#[from] QuorumError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("replica state diverged: {0}")]
    Diverged(String),
}

/// The algorithm configurations the experiments compare.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Algorithm {
    Paxos,
    FastLarge,
    FastSmall,
    /// Plain coordinator-driven operation forced to use `⌊2n/3⌋+1` classic
    /// quorums, isolating the cost of quorum size from the fast path.
    PaxosBigQuorum,
}

impl Algorithm {
    pub fn parse(s: &str) -> Option<Algorithm> {
        match s {
            "paxos" => Some(Algorithm::Paxos),
            "fast-large" => Some(Algorithm::FastLarge),
            "fast-small" => Some(Algorithm::FastSmall),
            "paxos-big-quorum" => Some(Algorithm::PaxosBigQuorum),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Paxos => "paxos",
            Algorithm::FastLarge => "fast-large",
            Algorithm::FastSmall => "fast-small",
            Algorithm::PaxosBigQuorum => "paxos-big-quorum",
        }
    }

    pub fn fast_rounds(self) -> bool {
        matches!(self, Algorithm::FastLarge | Algorithm::FastSmall)
    }

    pub fn quorums(self, n: usize) -> Result<QuorumSpec, QuorumError> {
        match self {
            Algorithm::Paxos => quorum_spec(n, Variant::ClassicOnly),
            Algorithm::FastLarge => quorum_spec(n, Variant::FastLargeFast),
            Algorithm::FastSmall => quorum_spec(n, Variant::FastUniform),
            Algorithm::PaxosBigQuorum => classic_with_quorum(n, 2 * n / 3 + 1),
        }
    }

    /// Progress monitoring: only fast configurations need every replica to
    /// watch for stalls (a collision can strand an instance the coordinator
    /// never heard of); classic ones leave it to the coordinator.
    pub fn timeout_mode(self) -> TimeoutMode {
        if self.fast_rounds() {
            TimeoutMode::AnyReplica
        } else {
            TimeoutMode::CoordinatorOnly
        }
    }

    /// Engine configuration for one replica of an `n`-replica cluster.
    pub fn engine_config(self, me: ReplicaId, n: usize) -> Result<EngineConfig, QuorumError> {
        let mut cfg = EngineConfig::new(me, n, self.quorums(n)?, self.fast_rounds());
        cfg.policy.mode = self.timeout_mode();
        Ok(cfg)
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum ExperimentName {
    /// Fixed rate, replica-count sweep.
    Scaleup,
    /// Fixed replicas, rate sweep.
    Speedup,
    /// Rate sweep under the oversized classic quorum.
    Quorumsize,
    /// Rate sweep on a lossy network, watching retry and collision ratios.
    Retries,
    /// Single run with a mid-run replica kill and reintegration.
    Failure,
}

impl ExperimentName {
    pub fn parse(s: &str) -> Option<ExperimentName> {
        match s {
            "scaleup" => Some(ExperimentName::Scaleup),
            "speedup" => Some(ExperimentName::Speedup),
            "quorumsize" => Some(ExperimentName::Quorumsize),
            "retries" => Some(ExperimentName::Retries),
            "failure" => Some(ExperimentName::Failure),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ExperimentName::Scaleup => "scaleup",
            ExperimentName::Speedup => "speedup",
            ExperimentName::Quorumsize => "quorumsize",
            ExperimentName::Retries => "retries",
            ExperimentName::Failure => "failure",
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub enum Transport {
    Sim,
    Udp,
}

impl Transport {
    pub fn parse(s: &str) -> Option<Transport> {
        match s {
            "sim" => Some(Transport::Sim),
            "udp" => Some(Transport::Udp),
            _ => None,
        }
    }
}

/// A whole experiment: ranges are swept, scalars are fixed.
#[derive(Clone, Debug)]
pub struct ExperimentSpec {
    pub name: ExperimentName,
    pub algorithm: Algorithm,
    pub replicas: (usize, usize),
    pub rate: (u64, u64),
    pub duration_s: u64,
    pub transport: Transport,
    pub seed: u64,
    pub overrides: Config,
}

#[derive(Clone, Copy, Debug)]
pub enum FailureTarget {
    Coordinator,
    NonCoordinator,
}

#[derive(Clone, Copy, Debug)]
pub struct FailurePlan {
    pub target: FailureTarget,
    pub at: Nanos,
    /// None = permanent failure.
    pub restart_after: Option<Nanos>,
}

/// One sweep point, fully resolved.
#[derive(Clone, Debug)]
pub struct PointSpec {
    pub algorithm: Algorithm,
    pub n: usize,
    pub rate: u64,
    pub duration_s: u64,
    pub seed: u64,
    pub sim: SimConfig,
    pub failure: Option<FailurePlan>,
    /// Engine overrides; `None` keeps the engine default.
    pub max_batch_bytes: Option<usize>,
    pub pending_bound: Option<usize>,
}

impl PointSpec {
    pub fn new(algorithm: Algorithm, n: usize, rate: u64, duration_s: u64, seed: u64) -> PointSpec {
        PointSpec {
            algorithm,
            n,
            rate,
            duration_s,
            seed,
            sim: default_sim(n, seed),
            failure: None,
            max_batch_bytes: None,
            pending_bound: None,
        }
    }
}

/// The experiment LAN: contended switch ports plus enough jitter that
/// concurrent broadcasts interleave differently per port.
pub fn default_sim(n: usize, seed: u64) -> SimConfig {
    let mut sim = SimConfig::lan(n, seed);
    sim.jitter = 2 * sim.link_latency;
    sim
}

/// One per-second metrics row. Instance counters are cumulative within the
/// run.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricsRow {
    pub bucket_s: u64,
    pub served_ops: u64,
    pub mean_rt_ms: f64,
    pub total_inst: u64,
    pub retried_inst: u64,
    pub collisions: u64,
    pub bytes: u64,
}

pub const CSV_HEADER: &str = "bucket_s,served_ops,mean_rt_ms,total_inst,retried_inst,collisions,bytes";

#[derive(Clone, Copy, Debug)]
pub struct Summary {
    /// Mean served op/s over the steady-state window (middle 80% of the run).
    pub served_rate: f64,
    pub mean_rt_ms: f64,
    pub peak_served: u64,
    pub total_inst: u64,
    pub retried: u64,
    pub collisions: u64,
    pub retried_ratio: f64,
    pub collision_ratio: f64,
}

#[derive(Debug)]
pub struct PointResult {
    pub rows: Vec<MetricsRow>,
    pub summary: Summary,
    /// Accounting: offered = served + rejected + pending.
    pub offered: u64,
    pub served: u64,
    pub rejected: u64,
    pub pending: u64,
    /// Failure runs: (kill time, local-recovery-complete time).
    pub markers: Option<(Nanos, Nanos)>,
}

/// Deterministic open-loop arrival schedule: `rate` op/s split evenly over
/// `generators`, fixed inter-arrival per generator with seeded jitter, keys
/// per-generator sequential and globally unique.
pub fn generate_load(
    rate: u64,
    generators: usize,
    duration_s: u64,
    seed: u64,
) -> Vec<(Nanos, u16, Command)> {
    assert!(rate > 0 && generators > 0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x10ad);
    let inter = SECOND * generators as u64 / rate;
    let horizon = duration_s * SECOND;
    let mut out = Vec::new();
    for g in 0..generators {
        let mut k = 0u64;
        loop {
            let base = k * inter;
            if base >= horizon {
                break;
            }
            let jitter = if inter > 4 { rng.gen_range(0..inter / 4) } else { 0 };
            let key = ((g as u64) << 40) | k;
            let mut value = [0u8; VALUE_LEN];
            for b in &mut value {
                *b = rng.gen_range(b'a'..=b'z');
            }
            out.push((base + jitter, g as u16, Command::put(key, value)));
            k += 1;
        }
    }
    out.sort_by_key(|(t, g, _)| (*t, *g));
    out
}

fn merged_counters(cluster: &SimCluster) -> RetryCounters {
    let mut all = RetryCounters::default();
    for i in 0..cluster.n() {
        if let Some(r) = cluster.replica(ReplicaId(i as u16)) {
            all.merge(r.counters());
        }
    }
    all
}

fn max_decided_count(cluster: &SimCluster) -> u64 {
    (0..cluster.n())
        .filter_map(|i| cluster.replica(ReplicaId(i as u16)))
        .map(|r| r.decided_count() as u64)
        .max()
        .unwrap_or(0)
}

/// Run one sweep point on the simulator.
pub fn run_point(spec: &PointSpec) -> Result<PointResult, HarnessError> {
    let algorithm = spec.algorithm;
    let n = spec.n;
    let (batch_cap, pending_cap) = (spec.max_batch_bytes, spec.pending_bound);
    let make = move |me: ReplicaId| {
        let mut cfg = algorithm.engine_config(me, n).expect("validated by caller");
        if let Some(b) = batch_cap {
            cfg.max_batch_bytes = b;
        }
        if let Some(p) = pending_cap {
            cfg.pending_bound = p;
        }
        cfg
    };
    // Validate once up front so a bad spec errors instead of panicking.
    algorithm.quorums(n)?;
    let mut cluster = SimCluster::new(spec.sim, make)?;

    let warmup = 200 * MILLIS;
    cluster.run_until(warmup)?;

    let load = generate_load(spec.rate, n, spec.duration_s, spec.seed);
    let mut offered = 0u64;
    let mut rejected = 0u64;
    let mut load_iter = load.into_iter().peekable();

    let mut plan = spec.failure;
    let mut killed: Option<(ReplicaId, Vec<crate::ledger::LedgerDelta>)> = None;
    let mut restart_at: Option<Nanos> = None;
    let mut markers: Option<(Nanos, Nanos)> = None;

    let mut rows = Vec::new();
    let end = warmup + spec.duration_s * SECOND;
    let drain_end = end + 2 * SECOND;
    let total_buckets = (drain_end - warmup) / SECOND;
    for bucket in 0..total_buckets {
        let bucket_end = warmup + (bucket + 1) * SECOND;
        loop {
            // Interleave failure-plan actions and load arrivals in time order.
            let next_arrival = load_iter.peek().map(|(t, _, _)| warmup + *t);
            let next_kill = plan.map(|p| warmup + p.at);
            let next_restart = restart_at;
            let next = [next_arrival, next_kill, next_restart]
                .into_iter()
                .flatten()
                .min()
                .filter(|t| *t <= bucket_end);
            let Some(t) = next else { break };
            cluster.run_until(t)?;
            if next_kill == Some(t) {
                let p = plan.take().unwrap();
                let victim = match p.target {
                    FailureTarget::Coordinator => (0..n as u16)
                        .map(ReplicaId)
                        .find(|r| cluster.replica(*r).is_some_and(|x| x.is_coordinator()))
                        .unwrap_or(ReplicaId(0)),
                    FailureTarget::NonCoordinator => (0..n as u16)
                        .map(ReplicaId)
                        .find(|r| cluster.replica(*r).is_some_and(|x| !x.is_coordinator()))
                        .expect("cluster of one"),
                };
                let (records, _) = cluster.kill(victim);
                if let Some(after) = p.restart_after {
                    // The replica is back once it has re-read and replayed
                    // its ledger; reintegration traffic starts then.
                    let recovered_at = t + after + recovery_delay(&spec.sim, records.len());
                    restart_at = Some(recovered_at);
                    markers = Some((t, recovered_at));
                    killed = Some((victim, records));
                } else {
                    markers = Some((t, Nanos::MAX));
                }
                continue;
            }
            if next_restart == Some(t) {
                restart_at = None;
                let (victim, records) = killed.take().expect("restart without kill");
                cluster.restart(victim, make(victim), &records)?;
                continue;
            }
            let (_, g, cmd) = load_iter.next().unwrap();
            if t >= end {
                continue;
            }
            offered += 1;
            // Generators fail over to the next live replica while their own
            // is down; offered load stays constant through a failure.
            let target = (0..n as u16)
                .map(|off| ReplicaId((g + off) % n as u16))
                .find(|r| cluster.is_up(*r))
                .expect("all replicas down");
            if !cluster.submit(target, cmd)? {
                rejected += 1;
            }
        }
        cluster.run_until(bucket_end)?;
        let counters = merged_counters(&cluster);
        rows.push(MetricsRow {
            bucket_s: bucket,
            served_ops: 0, // filled from op records below
            mean_rt_ms: 0.0,
            total_inst: max_decided_count(&cluster),
            retried_inst: counters.retried_count() as u64,
            collisions: counters.collision_count() as u64,
            bytes: cluster.net.sent_bytes,
        });
    }

    // Fold per-op service times into the rows.
    let mut per_bucket: BTreeMap<u64, (u64, f64)> = BTreeMap::new();
    let mut served = 0u64;
    for op in &cluster.ops {
        if let Some(at) = op.served {
            served += 1;
            let bucket = (at.saturating_sub(warmup)) / SECOND;
            let rt_ms = (at - op.submitted) as f64 / MILLIS as f64;
            let e = per_bucket.entry(bucket).or_insert((0, 0.0));
            e.0 += 1;
            e.1 += rt_ms;
        }
    }
    for row in &mut rows {
        if let Some((count, rt_sum)) = per_bucket.get(&row.bucket_s) {
            row.served_ops = *count;
            row.mean_rt_ms = rt_sum / *count as f64;
        }
    }

    cluster.check_agreement().map_err(HarnessError::Diverged)?;

    let pending = offered - served - rejected;
    let summary = summarize(&rows, spec.duration_s);
    Ok(PointResult { rows, summary, offered, served, rejected, pending, markers })
}

/// Steady-state summary over the middle of the run (first and last 10% of
/// the loaded buckets trimmed).
pub fn summarize(rows: &[MetricsRow], duration_s: u64) -> Summary {
    let trim = (duration_s as usize).div_ceil(10);
    let loaded = &rows[..rows.len().min(duration_s as usize)];
    let steady: Vec<&MetricsRow> = loaded
        .iter()
        .skip(trim)
        .take(loaded.len().saturating_sub(2 * trim))
        .collect();
    let window = if steady.is_empty() { loaded.iter().collect() } else { steady };
    let served: u64 = window.iter().map(|r| r.served_ops).sum();
    let rt_weighted: f64 = window.iter().map(|r| r.mean_rt_ms * r.served_ops as f64).sum();
    let last = rows.last();
    let total = last.map_or(0, |r| r.total_inst);
    let retried = last.map_or(0, |r| r.retried_inst);
    let collisions = last.map_or(0, |r| r.collisions);
    Summary {
        served_rate: served as f64 / window.len().max(1) as f64,
        mean_rt_ms: if served > 0 { rt_weighted / served as f64 } else { 0.0 },
        peak_served: rows.iter().map(|r| r.served_ops).max().unwrap_or(0),
        total_inst: total,
        retried,
        collisions,
        retried_ratio: ratio(retried, total),
        collision_ratio: ratio(collisions, total),
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn write_rows_csv(path: &Path, rows: &[MetricsRow]) -> std::io::Result<()> {
    let mut f = std::fs::File::create(path)?;
    writeln!(f, "{CSV_HEADER}")?;
    for r in rows {
        writeln!(
            f,
            "{},{},{:.3},{},{},{},{}",
            r.bucket_s, r.served_ops, r.mean_rt_ms, r.total_inst, r.retried_inst, r.collisions, r.bytes
        )?;
    }
    Ok(())
}

/// Expand an experiment into its sweep points.
pub fn sweep_points(spec: &ExperimentSpec) -> Vec<PointSpec> {
    let algorithm = match spec.name {
        ExperimentName::Quorumsize => Algorithm::PaxosBigQuorum,
        _ => spec.algorithm,
    };
    let mut points = Vec::new();
    match spec.name {
        ExperimentName::Scaleup => {
            for n in spec.replicas.0..=spec.replicas.1 {
                points.push(PointSpec::new(algorithm, n, spec.rate.0, spec.duration_s, spec.seed));
            }
        }
        ExperimentName::Speedup | ExperimentName::Quorumsize | ExperimentName::Retries => {
            let n = spec.replicas.0;
            for rate in rate_steps(spec.rate.0, spec.rate.1) {
                let mut p = PointSpec::new(algorithm, n, rate, spec.duration_s, spec.seed);
                if spec.name == ExperimentName::Retries {
                    p.sim.loss_prob = 0.05;
                    p.sim.dup_prob = 0.01;
                }
                points.push(p);
            }
        }
        ExperimentName::Failure => {
            let mut p =
                PointSpec::new(algorithm, spec.replicas.0, spec.rate.0, spec.duration_s, spec.seed);
            p.failure = Some(FailurePlan {
                target: FailureTarget::NonCoordinator,
                at: spec.duration_s * SECOND / 3,
                restart_after: Some(spec.duration_s * SECOND / 6),
            });
            points.push(p);
        }
    }
    for p in &mut points {
        spec.overrides.apply_sim(&mut p.sim).expect("validated config");
        p.max_batch_bytes =
            spec.overrides.get_parsed("max_batch_bytes").expect("validated config");
        p.pending_bound = spec.overrides.get_parsed("pending_bound").expect("validated config");
    }
    points
}

/// Six sweep steps from lo to hi inclusive, evenly spaced.
fn rate_steps(lo: u64, hi: u64) -> Vec<u64> {
    if hi <= lo {
        return vec![lo];
    }
    let steps = 6u64;
    (0..steps).map(|i| lo + (hi - lo) * i / (steps - 1)).collect()
}

/// Run a whole experiment, writing one CSV per point plus `summary.csv`.
pub fn run_experiment(spec: &ExperimentSpec, out: &Path) -> Result<(), HarnessError> {
    std::fs::create_dir_all(out)?;
    let mut summary_file = std::fs::File::create(out.join("summary.csv"))?;
    writeln!(
        summary_file,
        "experiment,algorithm,replicas,rate,served_rate,mean_rt_ms,peak_served,total_inst,retried,collisions,retried_ratio,collision_ratio,offered,served,rejected,pending,kill_s,reintegrated_s"
    )?;
    for point in sweep_points(spec) {
        let result = match run_point(&point) {
            Ok(r) => r,
            Err(e) => {
                // One bad point must not abort the sweep.
                eprintln!(
                    "point n={} rate={} failed: {e}",
                    point.n, point.rate
                );
                continue;
            }
        };
        let file = out.join(format!(
            "{}_{}_n{}_r{}.csv",
            spec.name.name(),
            point.algorithm.name(),
            point.n,
            point.rate
        ));
        write_rows_csv(&file, &result.rows)?;
        let s = &result.summary;
        let (kill, reint) = result
            .markers
            .map(|(k, r)| {
                (
                    format!("{:.3}", k as f64 / SECOND as f64),
                    if r == Nanos::MAX { "never".into() } else { format!("{:.3}", r as f64 / SECOND as f64) },
                )
            })
            .unwrap_or_default();
        writeln!(
            summary_file,
            "{},{},{},{},{:.1},{:.3},{},{},{},{},{:.4},{:.4},{},{},{},{},{},{}",
            spec.name.name(),
            point.algorithm.name(),
            point.n,
            point.rate,
            s.served_rate,
            s.mean_rt_ms,
            s.peak_served,
            s.total_inst,
            s.retried,
            s.collisions,
            s.retried_ratio,
            s.collision_ratio,
            result.offered,
            result.served,
            result.rejected,
            result.pending,
            kill,
            reint,
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn load_volume_and_division() {
        // 100 op/s over 4 generators for 10 s: 1000 commands, 250 each.
        let load = generate_load(100, 4, 10, 1);
        assert_eq!(load.len(), 1000);
        for g in 0..4u16 {
            assert_eq!(load.iter().filter(|(_, gg, _)| *gg == g).count(), 250);
        }
        // Deterministic.
        assert_eq!(generate_load(100, 4, 10, 1), load);
        assert_ne!(generate_load(100, 4, 10, 2), load);
        // Sorted, inside the horizon, globally unique keys.
        assert!(load.windows(2).all(|w| w[0].0 <= w[1].0));
        assert!(load.iter().all(|(t, _, _)| *t < 10 * SECOND));
        let keys: std::collections::HashSet<u64> = load.iter().map(|(_, _, c)| c.key).collect();
        assert_eq!(keys.len(), load.len());
    }

    #[test]
    fn algorithm_parse_and_quorums() {
        assert_eq!(Algorithm::parse("paxos"), Some(Algorithm::Paxos));
        assert_eq!(Algorithm::parse("nope"), None);
        let q = Algorithm::PaxosBigQuorum.quorums(9).unwrap();
        assert_eq!(q.classic, 7); // ⌊2·9/3⌋+1
        assert_eq!(q.fast, None);
        assert!(!Algorithm::PaxosBigQuorum.fast_rounds());
        assert_eq!(Algorithm::FastSmall.quorums(9).unwrap().fast, Some(7));
    }

    #[test]
    fn small_point_serves_most_load() {
        let spec = PointSpec::new(Algorithm::Paxos, 3, 200, 3, 42);
        let r = run_point(&spec).unwrap();
        assert_eq!(r.offered, 600);
        assert_eq!(r.offered, r.served + r.rejected + r.pending);
        assert!(r.served as f64 >= 0.95 * r.offered as f64, "served {}", r.served);
        assert!(r.summary.mean_rt_ms > 0.0);
        assert_eq!(r.summary.collisions, 0);
    }

    #[test]
    fn fast_point_serves_load() {
        let spec = PointSpec::new(Algorithm::FastLarge, 4, 200, 3, 7);
        let r = run_point(&spec).unwrap();
        assert_eq!(r.offered, r.served + r.rejected + r.pending);
        assert!(r.served as f64 >= 0.95 * r.offered as f64, "served {}", r.served);
        assert!(r.summary.collisions <= r.summary.retried);
    }

    #[test]
    fn summary_trims_edges() {
        let rows: Vec<MetricsRow> = (0..10)
            .map(|b| MetricsRow {
                bucket_s: b,
                served_ops: if b == 0 || b == 9 { 0 } else { 100 },
                mean_rt_ms: 1.0,
                total_inst: 10 * (b + 1),
                retried_inst: 2,
                collisions: 1,
                bytes: 0,
            })
            .collect();
        let s = summarize(&rows, 10);
        assert_eq!(s.served_rate, 100.0);
        assert_eq!(s.total_inst, 100);
        assert_eq!(s.retried_ratio, 0.02);
    }

    #[test]
    fn csv_layout() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rows.csv");
        write_rows_csv(
            &path,
            &[MetricsRow {
                bucket_s: 0,
                served_ops: 5,
                mean_rt_ms: 1.25,
                total_inst: 6,
                retried_inst: 1,
                collisions: 0,
                bytes: 1234,
            }],
        )
        .unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some(CSV_HEADER));
        assert_eq!(lines.next(), Some("0,5,1.250,6,1,0,1234"));
    }

    #[test]
    fn sweep_expansion() {
        let spec = ExperimentSpec {
            name: ExperimentName::Scaleup,
            algorithm: Algorithm::Paxos,
            replicas: (4, 8),
            rate: (500, 500),
            duration_s: 5,
            transport: Transport::Sim,
            seed: 3,
            overrides: Config::default(),
        };
        let pts = sweep_points(&spec);
        assert_eq!(pts.iter().map(|p| p.n).collect::<Vec<_>>(), vec![4, 5, 6, 7, 8]);

        let spec = ExperimentSpec { name: ExperimentName::Quorumsize, replicas: (6, 6), rate: (100, 600), ..spec };
        let pts = sweep_points(&spec);
        assert!(pts.iter().all(|p| p.algorithm == Algorithm::PaxosBigQuorum));
        assert_eq!(pts.iter().map(|p| p.rate).collect::<Vec<_>>(), vec![100, 200, 300, 400, 500, 600]);
    }
}
