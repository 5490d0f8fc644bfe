//! Quorum cardinalities for each algorithm variant and the resilience
//! calculator. Quorums are cardinality quorums: any subset of the given size.

use thiserror::Error;

use crate::types::RoundKind;

/// Which quorum scheme the system runs with.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Variant {
    /// Classic rounds only, majority quorums.
    ClassicOnly,
    /// Fast rounds enabled, both quorums sized `⌊2n/3⌋+1`.
    FastUniform,
    /// Fast rounds enabled, majority classic quorums and `⌈3n/4⌉` fast quorums.
    FastLargeFast,
}

impl Variant {
    pub fn is_fast(self) -> bool {
        !matches!(self, Variant::ClassicOnly)
    }

    /// Config-file spelling (`quorum_variant = classic | fast-uniform | fast-large`).
    pub fn parse(s: &str) -> Option<Variant> {
        match s {
            "classic" => Some(Variant::ClassicOnly),
            "fast-uniform" => Some(Variant::FastUniform),
            "fast-large" => Some(Variant::FastLargeFast),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::ClassicOnly => "classic",
            Variant::FastUniform => "fast-uniform",
            Variant::FastLargeFast => "fast-large",
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum QuorumError {
    #[error("replica count {n} below the minimum {min} for variant {variant}")]
    TooFewReplicas { n: usize, min: usize, variant: &'static str },
    #[error("operation requires a fast variant")]
    NotFast,
}

/// Classic and (for fast variants) fast quorum sizes for a replica count.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct QuorumSpec {
    pub n: usize,
    pub variant: Variant,
    pub classic: usize,
    pub fast: Option<usize>,
}

impl QuorumSpec {
    /// Quorum size needed to decide in a round of the given kind.
    pub fn size_for(&self, kind: RoundKind) -> usize {
        match kind {
            RoundKind::Classic => self.classic,
            // Engine configuration guarantees fast rounds only exist for
            // fast variants.
            RoundKind::Fast => self.fast.expect("fast round under classic-only quorums"),
        }
    }

    /// Per-value count among a classic quorum of Phase 1b replies that forces
    /// the coordinator to re-propose that value: `classic + fast − n`, the
    /// lower bound on the overlap of a classic quorum with any fast quorum.
    pub fn pick_threshold(&self) -> Result<usize, QuorumError> {
        let fast = self.fast.ok_or(QuorumError::NotFast)?;
        Ok(self.classic + fast - self.n)
    }

    /// The largest quorum the variant needs for progress.
    pub fn largest_progress_quorum(&self) -> usize {
        self.fast.map_or(self.classic, |f| f.max(self.classic))
    }
}

/// Quorum sizes for `n` replicas under the given variant.
pub fn quorum_spec(n: usize, variant: Variant) -> Result<QuorumSpec, QuorumError> {
    let min = match variant {
        Variant::ClassicOnly | Variant::FastUniform => 3,
        Variant::FastLargeFast => 4,
    };
    if n < min {
        return Err(QuorumError::TooFewReplicas { n, min, variant: variant.name() });
    }
    let (classic, fast) = match variant {
        Variant::ClassicOnly => (n / 2 + 1, None),
        Variant::FastUniform => (2 * n / 3 + 1, Some(2 * n / 3 + 1)),
        Variant::FastLargeFast => (n / 2 + 1, Some((3 * n).div_ceil(4))),
    };
    Ok(QuorumSpec { n, variant, classic, fast })
}

/// A classic spec with an explicitly overridden classic quorum, for the
/// larger-than-necessary-quorum experiment. The override may not go below
/// a majority.
pub fn classic_with_quorum(n: usize, classic: usize) -> Result<QuorumSpec, QuorumError> {
    let base = quorum_spec(n, Variant::ClassicOnly)?;
    assert!(classic >= base.classic && classic <= n, "classic quorum override out of range");
    Ok(QuorumSpec { classic, ..base })
}

/// Smallest `n` such that `n − f` still covers the largest quorum the
/// variant needs for progress.
pub fn min_replicas_for_resilience(f: usize, variant: Variant) -> usize {
    assert!(f >= 1);
    let mut n = match variant {
        Variant::ClassicOnly | Variant::FastUniform => 3,
        Variant::FastLargeFast => 4,
    };
    loop {
        let spec = quorum_spec(n, variant).expect("n starts at the variant minimum");
        if n >= f + spec.largest_progress_quorum() {
            return n;
        }
        n += 1;
    }
}
