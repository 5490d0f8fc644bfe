//! Message-level rules of both algorithms for a single consensus instance:
//! the acceptor voting rules, the coordinator's value-picking rule, the
//! learner's decision rule, and collision detection. These are pure state
//! transitions; the replica event loop owns message routing, durability and
//! timers.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::quorum::QuorumSpec;
use crate::types::{Digest, ReplicaId, RoundId, RoundKind};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ProtocolError {
    /// Two distinct values both reached the pick threshold: the quorum
    /// specification is unsound. Abort the run.
    #[error("two values reached the pick threshold in round {round}")]
    AmbiguousPick { round: RoundId },
    /// The same acceptor sent two different votes for the same round.
    #[error("{acceptor} voted twice with different values in round {round}")]
    ConflictingVote { acceptor: ReplicaId, round: RoundId },
}

/// Durable acceptor state for one instance.
#[derive(Clone, Default, Debug, PartialEq, Eq)]
pub struct AcceptorState {
    pub promised: Option<RoundId>,
    pub last_vote: Option<(RoundId, Digest)>,
}

/// What an acceptor emits in response to a message, if anything.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum AcceptorReply {
    /// Phase 1b: the promised round plus the last vote cast, if any.
    Promise {
        round: RoundId,
        reported: Option<(RoundId, Digest)>,
    },
    /// Phase 2b: a vote, broadcast to the learners.
    Vote { round: RoundId, digest: Digest },
}

/// Phase 1a: promise not to vote in rounds below `round`, unless already
/// committed to an equal or higher round. Re-promising the same round is
/// idempotent (the reply is resent); a lower round is declined by silence.
pub fn acceptor_on_phase1a(state: &mut AcceptorState, round: RoundId) -> Option<AcceptorReply> {
    match state.promised {
        Some(p) if p > round => None,
        Some(p) if p == round => Some(AcceptorReply::Promise { round, reported: state.last_vote }),
        _ => {
            state.promised = Some(round);
            Some(AcceptorReply::Promise { round, reported: state.last_vote })
        }
    }
}

/// Phase 2b voting rule, shared by the classic path (value from the
/// coordinator's Phase 2a) and the fast path (value from a proposer after an
/// any-message): vote iff no promise or vote in a higher round exists and no
/// vote was cast in this round yet.
pub fn acceptor_on_phase2a(
    state: &mut AcceptorState,
    round: RoundId,
    digest: Digest,
) -> Option<AcceptorReply> {
    if state.promised.is_some_and(|p| p > round) {
        return None;
    }
    if state.last_vote.is_some_and(|(r, _)| r >= round) {
        return None;
    }
    state.last_vote = Some((round, digest));
    // Voting in a round implies participation in it.
    if state.promised.is_none_or(|p| p < round) {
        state.promised = Some(round);
    }
    Some(AcceptorReply::Vote { round, digest })
}

/// Fast-path voting: a proposer's value for a fast round the coordinator has
/// opened with an any-message. The first proposal to arrive wins the
/// acceptor's vote for that round. The caller is responsible for only
/// invoking this once the any-message for `any_round` has been received.
pub fn acceptor_on_fast_propose(
    state: &mut AcceptorState,
    any_round: RoundId,
    digest: Digest,
) -> Option<AcceptorReply> {
    debug_assert_eq!(any_round.kind, RoundKind::Fast);
    acceptor_on_phase2a(state, any_round, digest)
}

/// Phase 1b replies gathered by a coordinator, and Phase 2b votes gathered by
/// a learner, for one instance. At most one entry per replica is retained.
#[derive(Clone, Default, Debug)]
pub struct Tally {
    /// Phase 1b: replier -> reported last vote (None = never voted).
    pub replies: BTreeMap<ReplicaId, Option<(RoundId, Digest)>>,
    /// Phase 2b: acceptor -> latest vote seen from it.
    pub votes: BTreeMap<ReplicaId, (RoundId, Digest)>,
}

impl Tally {
    pub fn record_reply(&mut self, from: ReplicaId, reported: Option<(RoundId, Digest)>) {
        self.replies.entry(from).or_insert(reported);
    }
}

/// The coordinator's local rule on a classic quorum of Phase 1b replies.
///
/// Let `k` be the highest round appearing in any reported vote. If `k` is
/// classic, the unique value voted in `k` must be re-proposed. If `k` is
/// fast, a value must be re-proposed iff at least `classic + fast − n`
/// repliers voted it in `k`; quorum intersection guarantees at most one
/// value can reach that threshold. `None` means the coordinator is free to
/// pick any value.
pub fn coordinator_pick_value(
    tally: &Tally,
    quorums: &QuorumSpec,
) -> Result<Option<Digest>, ProtocolError> {
    debug_assert!(tally.replies.len() >= quorums.classic, "pick before quorum");
    let k = match tally.replies.values().flatten().map(|(r, _)| *r).max() {
        Some(k) => k,
        None => return Ok(None),
    };
    let mut counts: BTreeMap<Digest, usize> = BTreeMap::new();
    for (round, digest) in tally.replies.values().flatten() {
        if *round == k {
            *counts.entry(*digest).or_default() += 1;
        }
    }
    match k.kind {
        RoundKind::Classic => {
            // All votes in a classic round carry the same value.
            debug_assert_eq!(counts.len(), 1);
            Ok(counts.keys().next().copied())
        }
        RoundKind::Fast => {
            let t = quorums.pick_threshold().expect("fast vote under classic-only quorums");
            let mut reaching = counts.iter().filter(|(_, c)| **c >= t).map(|(d, _)| *d);
            let first = reaching.next();
            if reaching.next().is_some() {
                return Err(ProtocolError::AmbiguousPick { round: k });
            }
            Ok(first)
        }
    }
}

/// Learner rule: record one Phase 2b vote (latest round per acceptor wins;
/// an identical duplicate is ignored, a differing duplicate for the same
/// round is a protocol violation) and report a decision if some round now
/// has a full quorum of votes for one value.
pub fn learner_on_vote(
    tally: &mut Tally,
    acceptor: ReplicaId,
    round: RoundId,
    digest: Digest,
    quorums: &QuorumSpec,
) -> Result<Option<(RoundId, Digest)>, ProtocolError> {
    match tally.votes.get(&acceptor) {
        Some((r, d)) if *r == round && *d != digest => {
            return Err(ProtocolError::ConflictingVote { acceptor, round });
        }
        Some((r, _)) if *r >= round => {} // stale or duplicate
        _ => {
            tally.votes.insert(acceptor, (round, digest));
        }
    }
    Ok(decision(tally, quorums))
}

/// Current decision in a tally, if any round has quorum.
pub fn decision(tally: &Tally, quorums: &QuorumSpec) -> Option<(RoundId, Digest)> {
    let mut counts: BTreeMap<(RoundId, Digest), usize> = BTreeMap::new();
    for vote in tally.votes.values() {
        *counts.entry(*vote).or_default() += 1;
    }
    counts
        .into_iter()
        .find(|((round, _), c)| *c >= quorums.size_for(round.kind))
        .map(|(rv, _)| rv)
}

/// True iff no value can still reach a fast quorum in `round`, given the
/// votes already cast and the number of live acceptors that have not voted.
pub fn detect_collision(
    tally: &Tally,
    round: RoundId,
    quorums: &QuorumSpec,
    alive: usize,
) -> bool {
    let fast = match quorums.fast {
        Some(f) => f,
        None => return false,
    };
    let mut counts: BTreeMap<Digest, usize> = BTreeMap::new();
    let mut voters = 0usize;
    for (r, d) in tally.votes.values() {
        if *r == round {
            *counts.entry(*d).or_default() += 1;
            voters += 1;
        }
    }
    if counts.is_empty() {
        return false;
    }
    let unvoted = alive.saturating_sub(voters);
    counts.values().all(|c| c + unvoted < fast)
}

/// A coordinator-owned classic round strictly above `current`, used to
/// recover a stalled or collided instance.
pub fn start_recovery_round(current: RoundId, owner: ReplicaId) -> RoundId {
    RoundId::new(current.counter + 1, owner, RoundKind::Classic)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quorum::{quorum_spec, Variant};
    use crate::types::InstanceId;

    fn d(tag: u8) -> Digest {
        Digest::of(&[tag])
    }

    fn classic(counter: u64, owner: u16) -> RoundId {
        RoundId::new(counter, ReplicaId(owner), RoundKind::Classic)
    }

    fn fast(counter: u64, owner: u16) -> RoundId {
        RoundId::new(counter, ReplicaId(owner), RoundKind::Fast)
    }

    #[test]
    fn fresh_acceptor_always_promises() {
        let mut s = AcceptorState::default();
        let r = classic(5, 1);
        assert_eq!(
            acceptor_on_phase1a(&mut s, r),
            Some(AcceptorReply::Promise { round: r, reported: None })
        );
        assert_eq!(s.promised, Some(r));
    }

    #[test]
    fn lower_invitation_is_ignored() {
        let mut s = AcceptorState { promised: Some(classic(7, 2)), last_vote: None };
        assert_eq!(acceptor_on_phase1a(&mut s, classic(5, 1)), None);
        assert_eq!(s.promised, Some(classic(7, 2)));
    }

    #[test]
    fn promise_reports_last_vote() {
        let vote = (classic(3, 1), d(1));
        let mut s = AcceptorState { promised: Some(classic(3, 1)), last_vote: Some(vote) };
        let r = classic(9, 2);
        assert_eq!(
            acceptor_on_phase1a(&mut s, r),
            Some(AcceptorReply::Promise { round: r, reported: Some(vote) })
        );
    }

    #[test]
    fn repromise_same_round_is_idempotent() {
        let mut s = AcceptorState::default();
        let r = classic(5, 1);
        let first = acceptor_on_phase1a(&mut s, r);
        let again = acceptor_on_phase1a(&mut s, r);
        assert_eq!(first, again);
    }

    #[test]
    fn vote_with_matching_promise() {
        let r = classic(5, 1);
        let mut s = AcceptorState { promised: Some(r), last_vote: None };
        assert_eq!(
            acceptor_on_phase2a(&mut s, r, d(1)),
            Some(AcceptorReply::Vote { round: r, digest: d(1) })
        );
        assert_eq!(s.last_vote, Some((r, d(1))));
    }

    #[test]
    fn vote_blocked_by_higher_promise() {
        let mut s = AcceptorState { promised: Some(classic(8, 2)), last_vote: None };
        assert_eq!(acceptor_on_phase2a(&mut s, classic(5, 1), d(1)), None);
    }

    #[test]
    fn one_vote_per_round() {
        let r = classic(5, 1);
        let mut s = AcceptorState { promised: Some(r), last_vote: Some((r, d(1))) };
        assert_eq!(acceptor_on_phase2a(&mut s, r, d(2)), None);
        assert_eq!(s.last_vote, Some((r, d(1))));
    }

    #[test]
    fn first_fast_proposal_wins() {
        let r = fast(1, 0);
        let mut s = AcceptorState::default();
        assert_eq!(
            acceptor_on_fast_propose(&mut s, r, d(1)),
            Some(AcceptorReply::Vote { round: r, digest: d(1) })
        );
        assert_eq!(acceptor_on_fast_propose(&mut s, r, d(2)), None);
        assert_eq!(s.last_vote, Some((r, d(1))));
    }

    fn tally_from(replies: &[(u16, Option<(RoundId, Digest)>)]) -> Tally {
        let mut t = Tally::default();
        for (id, rep) in replies {
            t.record_reply(ReplicaId(*id), *rep);
        }
        t
    }

    #[test]
    fn pick_with_no_prior_votes_is_free() {
        let q = quorum_spec(5, Variant::ClassicOnly).unwrap();
        let t = tally_from(&[(0, None), (1, None), (2, None)]);
        assert_eq!(coordinator_pick_value(&t, &q), Ok(None));
    }

    #[test]
    fn pick_unique_highest_classic_vote() {
        let q = quorum_spec(5, Variant::ClassicOnly).unwrap();
        let t = tally_from(&[(0, None), (1, Some((classic(3, 1), d(1)))), (2, None)]);
        assert_eq!(coordinator_pick_value(&t, &q), Ok(Some(d(1))));
    }

    #[test]
    fn fast_pick_needs_threshold() {
        // N=8, fast-large: classic 5, fast 6, t = 3.
        let q = quorum_spec(8, Variant::FastLargeFast).unwrap();
        assert_eq!(q.pick_threshold(), Ok(3));
        let k = fast(2, 0);
        let t = tally_from(&[
            (0, Some((k, d(1)))),
            (1, Some((k, d(1)))),
            (2, Some((k, d(1)))),
            (3, Some((k, d(2)))),
            (4, None),
        ]);
        assert_eq!(coordinator_pick_value(&t, &q), Ok(Some(d(1))));
        // Below threshold: free to pick.
        let t = tally_from(&[
            (0, Some((k, d(1)))),
            (1, Some((k, d(1)))),
            (2, Some((k, d(2)))),
            (3, Some((k, d(2)))),
            (4, None),
        ]);
        assert_eq!(coordinator_pick_value(&t, &q), Ok(None));
    }

    /// Brute-force: over every assignment of {none, v, w, u} to the members
    /// of a classic quorum, at most one value reaches the pick threshold.
    #[test]
    fn pick_rule_uniqueness_brute_force() {
        for n in 4..=6 {
            for variant in [Variant::FastUniform, Variant::FastLargeFast] {
                let q = quorum_spec(n, variant).unwrap();
                let k = fast(3, 0);
                let options = [None, Some(d(1)), Some(d(2)), Some(d(3))];
                let quorum = q.classic;
                let mut assignment = vec![0usize; quorum];
                'patterns: loop {
                    let t = tally_from(
                        &(0..quorum)
                            .map(|i| (i as u16, options[assignment[i]].map(|v| (k, v))))
                            .collect::<Vec<_>>(),
                    );
                    // Must never be ambiguous for any reply pattern: the
                    // threshold arithmetic itself guarantees it.
                    coordinator_pick_value(&t, &q)
                        .unwrap_or_else(|e| panic!("n={n} {variant:?}: {e}"));
                    // Odometer.
                    let mut i = 0;
                    loop {
                        if i == quorum {
                            break 'patterns;
                        }
                        assignment[i] += 1;
                        if assignment[i] < options.len() {
                            break;
                        }
                        assignment[i] = 0;
                        i += 1;
                    }
                }
            }
        }
    }

    #[test]
    fn learner_decides_on_classic_quorum() {
        let q = quorum_spec(4, Variant::ClassicOnly).unwrap();
        assert_eq!(q.classic, 3);
        let r = classic(2, 1);
        let mut t = Tally::default();
        assert_eq!(learner_on_vote(&mut t, ReplicaId(0), r, d(1), &q), Ok(None));
        assert_eq!(learner_on_vote(&mut t, ReplicaId(1), r, d(1), &q), Ok(None));
        assert_eq!(learner_on_vote(&mut t, ReplicaId(2), r, d(1), &q), Ok(Some((r, d(1)))));
    }

    #[test]
    fn split_fast_votes_do_not_decide() {
        // N=4 fast-uniform: fast quorum 3; 2-2 split never decides.
        let q = quorum_spec(4, Variant::FastUniform).unwrap();
        let r = fast(1, 0);
        let mut t = Tally::default();
        assert_eq!(learner_on_vote(&mut t, ReplicaId(0), r, d(1), &q), Ok(None));
        assert_eq!(learner_on_vote(&mut t, ReplicaId(1), r, d(1), &q), Ok(None));
        assert_eq!(learner_on_vote(&mut t, ReplicaId(2), r, d(2), &q), Ok(None));
        assert_eq!(learner_on_vote(&mut t, ReplicaId(3), r, d(2), &q), Ok(None));
        assert!(detect_collision(&t, r, &q, 4));
    }

    #[test]
    fn duplicate_vote_not_double_counted() {
        let q = quorum_spec(4, Variant::ClassicOnly).unwrap();
        let r = classic(2, 1);
        let mut t = Tally::default();
        learner_on_vote(&mut t, ReplicaId(0), r, d(1), &q).unwrap();
        learner_on_vote(&mut t, ReplicaId(0), r, d(1), &q).unwrap();
        assert_eq!(t.votes.len(), 1);
        // A differing duplicate is a protocol violation.
        assert_eq!(
            learner_on_vote(&mut t, ReplicaId(0), r, d(2), &q),
            Err(ProtocolError::ConflictingVote { acceptor: ReplicaId(0), round: r })
        );
    }

    #[test]
    fn collision_examples() {
        let q4 = quorum_spec(4, Variant::FastUniform).unwrap(); // fast 3
        let r = fast(1, 0);
        let mut t = Tally::default();
        for (id, val) in [(0, 1), (1, 1)] {
            learner_on_vote(&mut t, ReplicaId(id), r, d(val), &q4).unwrap();
        }
        // {v:2}, 2 unvoted: v may still reach 3.
        assert!(!detect_collision(&t, r, &q4, 4));
        for (id, val) in [(2, 2), (3, 2)] {
            learner_on_vote(&mut t, ReplicaId(id), r, d(val), &q4).unwrap();
        }
        // {v:2, w:2}: each value can reach at most 2 < 3.
        assert!(detect_collision(&t, r, &q4, 4));

        // N=9 fast-large: fast quorum 7; three-way 3-3-3 split collides.
        let q9 = quorum_spec(9, Variant::FastLargeFast).unwrap();
        assert_eq!(q9.fast, Some(7));
        let mut t = Tally::default();
        for id in 0..9u16 {
            learner_on_vote(&mut t, ReplicaId(id), r, d((id % 3) as u8), &q9).unwrap();
        }
        assert!(detect_collision(&t, r, &q9, 9));
    }

    /// Exhaustive over all vote splits of 4 acceptors across 3 values plus
    /// "unvoted": detect_collision is true exactly when no value's maximum
    /// achievable count reaches the fast quorum.
    #[test]
    fn collision_exhaustive_n4() {
        let q = quorum_spec(4, Variant::FastUniform).unwrap();
        let fastq = q.fast.unwrap();
        let r = fast(1, 0);
        for pattern in 0..4u32.pow(4) {
            let mut t = Tally::default();
            let mut votes = [0usize; 3];
            let mut unvoted = 0usize;
            for a in 0..4 {
                match (pattern / 4u32.pow(a)) % 4 {
                    3 => unvoted += 1,
                    v => {
                        votes[v as usize] += 1;
                        learner_on_vote(&mut t, ReplicaId(a as u16), r, d(v as u8), &q).unwrap();
                    }
                }
            }
            let any_votes = votes.iter().any(|c| *c > 0);
            let expected = any_votes && votes.iter().all(|c| *c == 0 || c + unvoted < fastq);
            assert_eq!(detect_collision(&t, r, &q, 4), expected, "pattern {pattern}");
        }
    }

    #[test]
    fn recovery_round_is_classic_and_higher() {
        let r1 = ReplicaId(1);
        assert_eq!(start_recovery_round(fast(4, 2), r1), classic(5, 1));
        assert_eq!(start_recovery_round(classic(4, 1), r1), classic(5, 1));
        // Two concurrent recoveries are distinct and totally ordered.
        let a = start_recovery_round(fast(4, 2), ReplicaId(1));
        let b = start_recovery_round(fast(4, 2), ReplicaId(2));
        assert_ne!(a, b);
        assert!(a < b);
    }

    #[test]
    fn instance_id_display() {
        assert_eq!(InstanceId(7).to_string(), "7");
    }
}
