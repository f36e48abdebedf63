//! Result and option types shared by all solvers.

use crate::model::{Assignment, Score};

/// What a solver is asked to establish.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Target {
    /// Decide whether some admissible answer set reaches the threshold.
    AtLeast(Score),
    /// Report the best achievable diversity.
    Maximize,
}

impl Target {
    pub fn accepts(&self, score: &Score) -> bool {
        match self {
            Target::AtLeast(d) => score >= d,
            Target::Maximize => true,
        }
    }
}

pub const DEFAULT_TABLE_CAP: u64 = 10_000_000;
pub const DEFAULT_BUDGET: u128 = 10_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SolveOptions {
    /// Admit answer multisets instead of sets of pairwise distinct answers.
    pub allow_duplicates: bool,
    pub witness: bool,
    /// Largest number of entries any DP table may hold.
    pub table_cap: u64,
    /// Largest number of candidate answer sets an exhaustive search may visit.
    pub budget: u128,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            allow_duplicates: false,
            witness: true,
            table_cap: DEFAULT_TABLE_CAP,
            budget: DEFAULT_BUDGET,
        }
    }
}

/// Size of one DP table next to its worst-case bound.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NodeStats {
    pub node: usize,
    pub entries: usize,
    pub bound: u128,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Stats {
    pub nodes: Vec<NodeStats>,
    pub answers: Option<usize>,
    pub kernel_size: Option<usize>,
    pub candidates: Option<u128>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Outcome {
    pub decision: bool,
    /// Best diversity among admissible answer sets meeting the target;
    /// `None` when the decision is negative.
    pub diversity: Option<Score>,
    /// `k` answers over the free variables, present on a positive decision
    /// when requested.
    pub witness: Option<Vec<Assignment>>,
    pub stats: Stats,
}

impl Outcome {
    pub(crate) fn negative(stats: Stats) -> Outcome {
        Outcome {
            decision: false,
            diversity: None,
            witness: None,
            stats,
        }
    }
}

/// `base^exp`, saturating.
pub(crate) fn sat_pow(base: u128, exp: usize) -> u128 {
    let mut acc: u128 = 1;
    for _ in 0..exp {
        acc = acc.saturating_mul(base);
    }
    acc
}

/// Binomial coefficient, saturating.
pub(crate) fn binomial(n: u128, r: u128) -> u128 {
    if r > n {
        return 0;
    }
    let r = r.min(n - r);
    let mut acc: u128 = 1;
    for i in 0..r {
        // exact at every step since acc * (n - i) is divisible by (i + 1)
        acc = match acc.checked_mul(n - i) {
            Some(v) => v / (i + 1),
            None => return u128::MAX,
        };
    }
    acc
}

/// Advances `idx` to the next tuple over `0..n` in lexicographic order.
/// Returns `false` after the last tuple.
pub(crate) fn next_tuple(idx: &mut [u32], n: u32) -> bool {
    for slot in idx.iter_mut().rev() {
        *slot += 1;
        if *slot < n {
            return true;
        }
        *slot = 0;
    }
    false
}
