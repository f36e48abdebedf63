//! Data-complexity pipeline: materialize all answers, shrink them with the
//! reduction rules `Red_1 … Red_m`, then search the kernel exhaustively.
//!
//! `Red_t` looks at every set `Z` of `m - t` columns. Whenever at least
//! `t!² · k^t` rows agree on `Z`, it keeps `t · k` of them that pairwise
//! differ on every other column and drops the rest. For monotone
//! aggregators this preserves the best achievable diversity, and the result
//! has at most `m!² · k^m` rows.

use std::collections::HashMap;

use itertools::Itertools;

use crate::error::{Error, Result};
use crate::model::{hamming, improves, pairs, Aggregator, Assignment, Database, Score, Value, Var};
use crate::outcome::{binomial, sat_pow, Outcome, SolveOptions, Stats, Target};
use crate::query::{BoundConjunct, Query};

/// A duplicate-free set of answer tuples over named columns, kept sorted.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AnswerRelation {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Value>>,
}

impl AnswerRelation {
    pub fn new(columns: Vec<String>, mut rows: Vec<Vec<Value>>) -> AnswerRelation {
        rows.sort();
        rows.dedup();
        AnswerRelation { columns, rows }
    }

    pub fn arity(&self) -> usize {
        self.columns.len()
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Row `i` as an assignment of `Var(0..m)`.
    pub fn assignment(&self, i: usize) -> Assignment {
        self.rows[i]
            .iter()
            .enumerate()
            .map(|(c, &v)| (Var(c as u32), v))
            .collect()
    }
}

/// Evaluates every disjunct by hash joins over its positive literals,
/// filters by the negative ones and projects onto the free variables.
pub fn materialize_answers(q: &Query, db: &Database) -> Result<AnswerRelation> {
    let mut rows = Vec::new();
    for i in 0..q.disjuncts.len() {
        let conj = q.indexed(i);
        let bound = conj.bind(db)?;
        rows.extend(evaluate(&bound));
    }
    Ok(AnswerRelation::new(q.free.clone(), rows))
}

fn evaluate(conj: &BoundConjunct<'_>) -> Vec<Vec<Value>> {
    // current intermediate result: variables and tuples over them
    let mut vars: Vec<Var> = Vec::new();
    let mut tuples: Vec<Vec<Value>> = vec![Vec::new()];
    let mut pending: Vec<usize> = (0..conj.literals.len()).filter(|&i| conj.literals[i].positive).collect();
    while !pending.is_empty() {
        // prefer a literal sharing variables with what is joined so far
        let pick = pending
            .iter()
            .position(|&i| conj.literals[i].vars.iter().any(|v| vars.contains(v)))
            .unwrap_or(0);
        let lit = &conj.literals[pending.remove(pick)];
        let shared: Vec<(usize, usize)> = lit
            .vars
            .iter()
            .enumerate()
            .filter_map(|(li, v)| vars.iter().position(|w| w == v).map(|ci| (ci, li)))
            .collect();
        let fresh: Vec<usize> = (0..lit.vars.len()).filter(|&li| !vars.contains(&lit.vars[li])).collect();
        let mut index: HashMap<Vec<Value>, Vec<Vec<Value>>> = HashMap::new();
        for sol in lit.solutions() {
            let key = shared.iter().map(|&(_, li)| sol[li]).collect();
            index.entry(key).or_default().push(sol);
        }
        let mut next = Vec::new();
        for tuple in &tuples {
            let key: Vec<Value> = shared.iter().map(|&(ci, _)| tuple[ci]).collect();
            for sol in index.get(&key).into_iter().flatten() {
                let mut joined = tuple.clone();
                joined.extend(fresh.iter().map(|&li| sol[li]));
                next.push(joined);
            }
        }
        vars.extend(fresh.iter().map(|&li| lit.vars[li]));
        tuples = next;
    }
    let slot = |v: Var| vars.iter().position(|&w| w == v).expect("safe query binds every variable");
    tuples
        .into_iter()
        .filter(|t| {
            conj.literals
                .iter()
                .filter(|l| !l.positive)
                .all(|l| l.holds(|v| t[slot(v)]))
        })
        .map(|t| (0..conj.num_free as u32).map(|v| t[slot(Var(v))]).collect())
        .collect()
}

fn factorial(n: usize) -> u128 {
    (1..=n as u128).fold(1u128, |acc, i| acc.saturating_mul(i))
}

/// Group-size threshold of `Red_t`: `t!² · k^t`.
pub fn threshold(t: usize, k: usize) -> u128 {
    let f = factorial(t);
    f.saturating_mul(f).saturating_mul(sat_pow(k as u128, t))
}

/// The kernel size bound `m!² · k^m`.
pub fn kernel_bound(m: usize, k: usize) -> u128 {
    threshold(m, k)
}

/// Rows grouped by their values on `z`, each group sorted with the `z`
/// columns first and the remaining columns after.
fn groups(rows: &[Vec<Value>], z: &[usize], rest: &[usize]) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..rows.len()).collect();
    let key = |i: usize| -> Vec<Value> { z.iter().chain(rest).map(|&c| rows[i][c]).collect() };
    order.sort_by_cached_key(|&i| key(i));
    let mut out: Vec<Vec<usize>> = Vec::new();
    for i in order {
        match out.last_mut() {
            Some(g) if z.iter().all(|&c| rows[g[0]][c] == rows[i][c]) => g.push(i),
            _ => out.push(vec![i]),
        }
    }
    out
}

/// One exhaustive application of `Red_t` (`1 ≤ t ≤ m`). Requires that all
/// groups on `m - t + 1` columns are already at most `(t-1)!² · k^(t-1)`.
pub fn apply_red_t(answers: &AnswerRelation, t: usize, k: usize) -> Result<AnswerRelation> {
    let m = answers.arity();
    if t == 0 || t > m || k == 0 {
        return Err(Error::InvalidArgument(format!("Red_{t} needs 1 <= t <= {m} and k >= 1")));
    }
    let cols: Vec<usize> = (0..m).collect();
    let limit = threshold(t - 1, k);
    for z in cols.iter().copied().combinations(m - t + 1) {
        let rest: Vec<usize> = cols.iter().copied().filter(|c| !z.contains(c)).collect();
        if let Some(g) = groups(&answers.rows, &z, &rest).iter().find(|g| g.len() as u128 > limit) {
            return Err(Error::PreconditionViolated(format!(
                "group of {} rows on columns {z:?} exceeds {limit}",
                g.len()
            )));
        }
    }
    let big = threshold(t, k);
    let keep = t * k;
    let mut rows = answers.rows.clone();
    loop {
        let mut changed = false;
        for z in cols.iter().copied().combinations(m - t) {
            let rest: Vec<usize> = cols.iter().copied().filter(|c| !z.contains(c)).collect();
            let mut drop = vec![false; rows.len()];
            for group in groups(&rows, &z, &rest) {
                if (group.len() as u128) < big {
                    continue;
                }
                let mut chosen: Vec<usize> = Vec::with_capacity(keep);
                for &i in &group {
                    if chosen.len() == keep {
                        break;
                    }
                    if chosen.iter().all(|&c| rest.iter().all(|&col| rows[c][col] != rows[i][col])) {
                        chosen.push(i);
                    }
                }
                if chosen.len() < keep {
                    return Err(Error::PreconditionViolated(format!(
                        "only {} of {keep} representatives found in a group of {}",
                        chosen.len(),
                        group.len()
                    )));
                }
                for &i in &group {
                    if !chosen.contains(&i) {
                        drop[i] = true;
                        changed = true;
                    }
                }
            }
            let mut i = 0;
            rows.retain(|_| {
                i += 1;
                !drop[i - 1]
            });
        }
        if !changed {
            break;
        }
    }
    Ok(AnswerRelation::new(answers.columns.clone(), rows))
}

/// Applies `Red_1` through `Red_m` in order.
pub fn kernelize(answers: &AnswerRelation, k: usize) -> AnswerRelation {
    let m = answers.arity();
    let mut current = answers.clone();
    if k == 0 {
        return current;
    }
    for t in 1..=m {
        current = apply_red_t(&current, t, k).expect("reductions applied in order keep their preconditions");
    }
    assert!(current.len() as u128 <= kernel_bound(m, k), "kernel exceeds its size bound");
    current
}

/// Advances strictly increasing (or, with `multiset`, non-decreasing)
/// indices over `0..n`. Returns `false` after the last combination.
fn next_combination(idx: &mut [usize], n: usize, multiset: bool) -> bool {
    let k = idx.len();
    for pos in (0..k).rev() {
        let cap = if multiset { n - 1 } else { n - k + pos };
        if idx[pos] < cap {
            idx[pos] += 1;
            let base = idx[pos];
            for (off, slot) in idx[pos + 1..].iter_mut().enumerate() {
                *slot = if multiset { base } else { base + off + 1 };
            }
            return true;
        }
    }
    false
}

/// Kernelizes (unless duplicates are allowed) and then tries every
/// k-subset, or k-multiset, of the remaining answers.
pub fn solve_fo_diverse(
    answers: &AnswerRelation,
    k: usize,
    f: &Aggregator,
    target: Target,
    opts: &SolveOptions,
) -> Result<Outcome> {
    if !f.is_monotone() {
        return Err(Error::NotMonotone(f.name().to_string()));
    }
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    let kernel = if opts.allow_duplicates {
        answers.clone()
    } else {
        kernelize(answers, k)
    };
    let n = kernel.len();
    let count = if opts.allow_duplicates {
        binomial((n + k).saturating_sub(1) as u128, k as u128)
    } else {
        binomial(n as u128, k as u128)
    };
    let mut stats = Stats {
        answers: Some(answers.len()),
        kernel_size: (!opts.allow_duplicates).then_some(n),
        candidates: Some(count),
        ..Stats::default()
    };
    if count > opts.budget {
        return Err(Error::CombinatorialBudgetExceeded {
            count,
            budget: opts.budget,
        });
    }
    if count == 0 {
        stats.candidates = Some(0);
        return Ok(Outcome::negative(stats));
    }
    let dist: Vec<Vec<u32>> = kernel
        .rows
        .iter()
        .map(|a| kernel.rows.iter().map(|b| hamming(a, b)).collect())
        .collect();
    let mut idx: Vec<usize> = if opts.allow_duplicates { vec![0; k] } else { (0..k).collect() };
    let mut best: Option<(Vec<usize>, Score)> = None;
    let mut dvec = vec![0u32; crate::model::pair_count(k)];
    loop {
        for (p, (i, j)) in pairs(k).enumerate() {
            dvec[p] = dist[idx[i]][idx[j]];
        }
        let score = f.evaluate(&dvec);
        if target.accepts(&score) && improves(&score, best.as_ref().map(|b| &b.1)) {
            best = Some((idx.clone(), score));
        }
        if !next_combination(&mut idx, n, opts.allow_duplicates) {
            break;
        }
    }
    let Some((chosen, score)) = best else {
        return Ok(Outcome::negative(stats));
    };
    let witness = opts
        .witness
        .then(|| chosen.iter().map(|&i| kernel.assignment(i)).collect());
    Ok(Outcome {
        decision: true,
        diversity: Some(score),
        witness,
        stats,
    })
}
