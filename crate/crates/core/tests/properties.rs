mod support;

use std::collections::HashSet;

use diverseq::acq::AcqSolver;
use diverseq::io::{parse_database, write_facts};
use diverseq::kernel::{kernel_bound, kernelize, materialize_answers};
use diverseq::model::{
    aggregate, compatible, delta_restricted, intersect, merge, pair_count, pairs, Aggregator, Assignment, Database,
    Payload, Score, Value, Var,
};
use diverseq::oracle::enumerate_answers;
use diverseq::parse_query;
use diverseq::query::IndexedConjunct;
use diverseq::structure::{
    make_nice, min_fill_order, order_width, primal_graph, tree_decompose, validate_decomposition, Decomposition,
    DecompositionMethod,
};
use itertools::Itertools;
use proptest::prelude::*;
use support::{random_acq, random_answers, random_cqneg, rng};

const VARS: usize = 6;

fn full_assignment() -> impl Strategy<Value = Vec<u32>> {
    prop::collection::vec(0u32..4, VARS)
}

fn subset() -> impl Strategy<Value = u32> {
    0u32..(1 << VARS)
}

fn vars_of(mask: u32) -> Vec<Var> {
    (0..VARS as u32).filter(|i| mask >> i & 1 == 1).map(Var).collect()
}

fn restrict(values: &[u32], mask: u32) -> Assignment {
    vars_of(mask).into_iter().map(|v| (v, Value(values[v.0 as usize]))).collect()
}

/// `Δ_X` over the part of `X` both assignments bind.
fn dx(a: &Assignment, b: &Assignment, x: &[Var]) -> u32 {
    let common: Vec<Var> = x.iter().copied().filter(|&v| a.contains(v) && b.contains(v)).collect();
    delta_restricted(a, b, &common).unwrap()
}

proptest! {
    #[test]
    fn delta_is_a_metric(a in full_assignment(), b in full_assignment(), c in full_assignment(), x in subset()) {
        let (a, b, c) = (restrict(&a, !0), restrict(&b, !0), restrict(&c, !0));
        let x = vars_of(x);
        let ab = delta_restricted(&a, &b, &x).unwrap();
        prop_assert_eq!(ab, delta_restricted(&b, &a, &x).unwrap());
        prop_assert_eq!(delta_restricted(&a, &a, &x).unwrap(), 0);
        let bc = delta_restricted(&b, &c, &x).unwrap();
        prop_assert!(delta_restricted(&a, &c, &x).unwrap() <= ab + bc);
    }

    #[test]
    fn delta_adds_over_a_partition(a in full_assignment(), b in full_assignment(), x1 in subset(), x2 in subset()) {
        let (a, b) = (restrict(&a, !0), restrict(&b, !0));
        let x2 = x2 & !x1;
        let whole = delta_restricted(&a, &b, &vars_of(x1 | x2)).unwrap();
        let parts = delta_restricted(&a, &b, &vars_of(x1)).unwrap() + delta_restricted(&a, &b, &vars_of(x2)).unwrap();
        prop_assert_eq!(whole, parts);
    }

    #[test]
    fn merge_distance_identity(
        g in full_assignment(),
        m in full_assignment(),
        d1 in subset(),
        d2 in subset(),
        x in subset(),
    ) {
        // restrictions of one total assignment are pairwise compatible
        let (gamma, gamma2) = (restrict(&g, d1), restrict(&g, d2));
        let (mu, mu2) = (restrict(&m, d1), restrict(&m, d2));
        prop_assert!(compatible(&gamma, &gamma2) && compatible(&mu, &mu2));
        let x = vars_of(x);
        let lhs = dx(&merge(&gamma, &gamma2).unwrap(), &merge(&mu, &mu2).unwrap(), &x);
        let rhs = dx(&gamma, &mu, &x) + dx(&gamma2, &mu2, &x) - dx(&intersect(&gamma, &gamma2), &intersect(&mu, &mu2), &x);
        prop_assert_eq!(lhs, rhs);
    }

    #[test]
    fn sum_is_strictly_and_min_weakly_monotone(d in prop::collection::vec(0u32..6, 1..7), at in 0usize..6) {
        let at = at % d.len();
        let mut up = d.clone();
        up[at] += 1;
        prop_assert!(aggregate(&Aggregator::Sum, &up) > aggregate(&Aggregator::Sum, &d));
        prop_assert!(aggregate(&Aggregator::Min, &up) >= aggregate(&Aggregator::Min, &d));
    }

    #[test]
    fn aggregates_ignore_pair_order(mut d in prop::collection::vec(0u32..6, 0..7), seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        let before = (aggregate(&Aggregator::Sum, &d), aggregate(&Aggregator::Min, &d));
        d.shuffle(&mut rng(seed));
        prop_assert_eq!(before, (aggregate(&Aggregator::Sum, &d), aggregate(&Aggregator::Min, &d)));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn rendered_queries_reparse(seed in any::<u64>()) {
        let mut r = rng(seed);
        for inst in [random_acq(&mut r, 4, 3, 4, 3), random_cqneg(&mut r, 3, 3)] {
            let again = parse_query(&inst.query.to_string()).unwrap();
            prop_assert_eq!(&again, &inst.query);
        }
    }

    #[test]
    fn fact_files_reparse(seed in any::<u64>()) {
        let inst = random_acq(&mut rng(seed), 4, 3, 4, 12);
        let text = write_facts(&inst.db);
        prop_assert_eq!(write_facts(&parse_database(&text).unwrap()), text);
    }

    #[test]
    fn kernel_is_bounded_idempotent_and_a_subset(seed in any::<u64>(), m in 1usize..=3, k in 1usize..=3) {
        let (_, answers) = random_answers(&mut rng(seed), m, 60, 4);
        let kernel = kernelize(&answers, k);
        prop_assert!(kernel.len() as u128 <= kernel_bound(m, k));
        let all: HashSet<&Vec<Value>> = answers.rows.iter().collect();
        prop_assert!(kernel.rows.iter().all(|r| all.contains(r)));
        prop_assert_eq!(kernelize(&kernel, k), kernel);
    }

    #[test]
    fn evaluators_agree(seed in any::<u64>()) {
        let mut r = rng(seed);
        for inst in [random_acq(&mut r, 4, 3, 4, 12), random_cqneg(&mut r, 3, 3)] {
            let backtracked = enumerate_answers(&inst.query, &inst.db).unwrap();
            let joined = materialize_answers(&inst.query, &inst.db).unwrap();
            prop_assert_eq!(backtracked, joined.rows);
        }
    }

    #[test]
    fn union_evaluators_agree(rows in prop::collection::vec((0u8..3, 0u8..4, 0i64..4, 0i64..4), 0..30)) {
        let q = parse_query("Q(x, y) :- A(x, y).\nQ(x, y) :- B(x, z), C(z, y).").unwrap();
        let mut db = Database::new();
        for name in ["A", "B", "C"] {
            db.declare(name, 2).unwrap();
        }
        for (rel, _, a, b) in rows {
            db.insert_fact(["A", "B", "C"][rel as usize], vec![Payload::Int(a), Payload::Int(b)]).unwrap();
        }
        prop_assert_eq!(enumerate_answers(&q, &db).unwrap(), materialize_answers(&q, &db).unwrap().rows);
    }

    #[test]
    fn nice_form_is_valid_and_keeps_width(seed in any::<u64>()) {
        let mut r = rng(seed);
        let conj = random_cqneg(&mut r, 2, 4).conj();
        for method in [DecompositionMethod::MinFill, DecompositionMethod::Exact { budget: 1_000_000 }] {
            let td = tree_decompose(&conj, method).unwrap();
            let nice = make_nice(&td);
            prop_assert_eq!(validate_decomposition(Decomposition::Nice(&nice), &conj), Ok(()));
            prop_assert_eq!(nice.width(), td.width());
        }
    }

    #[test]
    fn tables_are_closed_under_permutation(seed in any::<u64>(), k in 2usize..=3) {
        let inst = random_acq(&mut rng(seed), 3, 3, 3, 6);
        let solver = AcqSolver::build(&inst.conj(), &inst.db, k, 10_000_000).unwrap();
        let index: Vec<(usize, usize)> = pairs(k).collect();
        for t in 0..solver.nodes.len() {
            let table = solver.table(t);
            for (partials, dvec) in table.iter() {
                for perm in (0..k).permutations(k) {
                    let moved: Vec<u32> = perm.iter().map(|&i| partials[i]).collect();
                    let mut moved_d = vec![0; pair_count(k)];
                    for (p, &(i, j)) in index.iter().enumerate() {
                        let (a, b) = (perm[i].min(perm[j]), perm[i].max(perm[j]));
                        moved_d[p] = dvec[index.iter().position(|&q| q == (a, b)).unwrap()];
                    }
                    prop_assert!(table.find(&moved, &moved_d).is_some(), "node {} misses a permuted entry", t);
                }
            }
        }
    }
}

fn graph_query(n: usize, edges: &[(usize, usize)]) -> IndexedConjunct {
    let mut body: Vec<String> = edges.iter().map(|(a, b)| format!("E(v{a}, v{b})")).collect();
    body.extend((0..n).map(|i| format!("V(v{i})")));
    let head = (0..n).map(|i| format!("v{i}")).join(", ");
    parse_query(&format!("Q({head}) :- {}.", body.join(", "))).unwrap().single().unwrap()
}

fn exact_width(conj: &IndexedConjunct) -> usize {
    tree_decompose(conj, DecompositionMethod::Exact { budget: 10_000_000 }).unwrap().width()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn exact_never_exceeds_min_fill(n in 2usize..=8, edges in prop::collection::vec((0usize..8, 0usize..8), 0..16)) {
        let edges: Vec<(usize, usize)> = edges.into_iter().map(|(a, b)| (a % n, b % n)).filter(|(a, b)| a != b).collect();
        let conj = graph_query(n, &edges);
        let g = primal_graph(&conj);
        let greedy = order_width(&g, &min_fill_order(&g));
        prop_assert!(exact_width(&conj) <= greedy);
    }

    #[test]
    fn trees_have_width_one(parents in prop::collection::vec(any::<prop::sample::Index>(), 1..8)) {
        let edges: Vec<(usize, usize)> = parents.iter().enumerate().map(|(i, p)| (i + 1, p.index(i + 1))).collect();
        let conj = graph_query(parents.len() + 1, &edges);
        let g = primal_graph(&conj);
        prop_assert_eq!(exact_width(&conj), 1);
        prop_assert_eq!(order_width(&g, &min_fill_order(&g)), 1);
    }

    #[test]
    fn cliques_have_width_n_minus_one(n in 2usize..=7) {
        let edges: Vec<(usize, usize)> = (0..n).tuple_combinations().collect();
        let conj = graph_query(n, &edges);
        let g = primal_graph(&conj);
        prop_assert_eq!(exact_width(&conj), n - 1);
        prop_assert_eq!(order_width(&g, &min_fill_order(&g)), n - 1);
    }
}

#[test]
fn sum_equals_sum_of_column_diversities() {
    // δ_sum of k answers equals the sum over columns of the pairwise
    // disagreements in that column
    let mut r = rng(7);
    for _ in 0..200 {
        let (_, answers) = random_answers(&mut r, 3, 6, 3);
        if answers.len() < 3 {
            continue;
        }
        let set: Vec<Assignment> = (0..3).map(|i| answers.assignment(i)).collect();
        let x: Vec<Var> = (0..3).map(Var).collect();
        let total = diverseq::model::diversity_of_set(&Aggregator::Sum, &set, &x).unwrap();
        let by_column: i64 = x
            .iter()
            .map(|&v| {
                let col = diverseq::model::diversity_of_set(&Aggregator::Sum, &set, &[v]).unwrap();
                col.as_integer().unwrap()
            })
            .sum();
        assert_eq!(total, Score::int(by_column));
    }
}
