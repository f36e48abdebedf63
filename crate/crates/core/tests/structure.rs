mod support;

use std::collections::BTreeSet;

use diverseq::oracle::exists_join_tree;
use diverseq::parse_query;
use diverseq::query::IndexedConjunct;
use diverseq::structure::{gyo_join_tree, validate_join_tree, JoinTree, Violation};
use diverseq::Var;
use itertools::Itertools;
use rand::Rng;
use support::{random_hypergraph, rng};

fn query_of(atoms: &[Vec<usize>]) -> IndexedConjunct {
    let body = atoms
        .iter()
        .enumerate()
        .map(|(i, vs)| format!("R{i}({})", vs.iter().map(|v| format!("v{v}")).join(", ")))
        .join(", ");
    let vars: BTreeSet<usize> = atoms.iter().flatten().copied().collect();
    let head = vars.iter().map(|v| format!("v{v}")).join(", ");
    parse_query(&format!("Q({head}) :- {body}.")).unwrap().single().unwrap()
}

fn edges(conj: &IndexedConjunct) -> Vec<Vec<Var>> {
    conj.literals.iter().map(|l| l.vars.clone()).collect()
}

#[test]
fn ear_removal_matches_exhaustive_search_on_all_small_hypergraphs() {
    // every set of up to five edges or triangles over four variables
    let candidates: Vec<Vec<usize>> = (0..4)
        .tuple_combinations()
        .map(|(a, b)| vec![a, b])
        .chain((0..4).tuple_combinations().map(|(a, b, c)| vec![a, b, c]))
        .collect();
    let (mut acyclic, mut cyclic) = (0, 0);
    for size in 1..=5 {
        for atoms in candidates.iter().cloned().combinations(size) {
            let conj = query_of(&atoms);
            let tree = gyo_join_tree(&edges(&conj));
            assert_eq!(tree.is_some(), exists_join_tree(&conj), "{atoms:?}");
            match tree {
                Some(jt) => {
                    assert_eq!(validate_join_tree(&jt, &conj), Ok(()), "{atoms:?}");
                    acyclic += 1;
                }
                None => cyclic += 1,
            }
        }
    }
    assert!(acyclic > 100 && cyclic > 100, "{acyclic} acyclic, {cyclic} cyclic");
}

#[test]
fn ear_removal_is_deterministic() {
    let mut r = rng(11);
    for _ in 0..100 {
        let conj = random_hypergraph(&mut r, 5, 5);
        assert_eq!(gyo_join_tree(&edges(&conj)), gyo_join_tree(&edges(&conj)));
    }
}

/// Connectedness checked directly: the nodes holding each variable must
/// span a connected subgraph of the tree.
fn connected_everywhere(jt: &JoinTree, conj: &IndexedConjunct) -> bool {
    (0..conj.num_vars() as u32).map(Var).all(|v| {
        let holding: BTreeSet<usize> = (0..jt.len())
            .filter(|&n| conj.literals[jt.label[n]].vars.contains(&v))
            .collect();
        let Some(&start) = holding.iter().next() else { return true };
        let mut seen = BTreeSet::from([start]);
        let mut stack = vec![start];
        while let Some(n) = stack.pop() {
            let near = jt.children[n].iter().copied().chain(jt.parent[n]);
            for m in near {
                if holding.contains(&m) && seen.insert(m) {
                    stack.push(m);
                }
            }
        }
        seen == holding
    })
}

#[test]
fn validator_agrees_with_a_direct_connectedness_check() {
    let mut r = rng(12);
    let (mut broken, mut fine) = (0, 0);
    for _ in 0..400 {
        let conj = random_hypergraph(&mut r, 5, 5);
        let Some(jt) = gyo_join_tree(&edges(&conj)) else { continue };
        if jt.len() < 2 {
            continue;
        }
        // rehang a random non-root node under a random node outside its subtree
        let moved = (0..jt.len()).filter(|&n| n != jt.root).nth(r.gen_range(0..jt.len() - 1)).unwrap();
        let mut inside = BTreeSet::from([moved]);
        let mut stack = vec![moved];
        while let Some(n) = stack.pop() {
            for &c in &jt.children[n] {
                inside.insert(c);
                stack.push(c);
            }
        }
        let targets: Vec<usize> = (0..jt.len()).filter(|n| !inside.contains(n)).collect();
        let target = targets[r.gen_range(0..targets.len())];
        let mut parent = jt.parent.clone();
        parent[moved] = Some(target);
        let rewired = JoinTree::from_parents(jt.root, parent, jt.label.clone());
        let verdict = validate_join_tree(&rewired, &conj);
        if connected_everywhere(&rewired, &conj) {
            assert_eq!(verdict, Ok(()));
            fine += 1;
        } else {
            assert!(matches!(verdict, Err(Violation::Connectedness { .. })), "{verdict:?}");
            broken += 1;
        }

        let mut label = jt.label.clone();
        label[1] = label[0];
        let duplicated = JoinTree::from_parents(jt.root, jt.parent.clone(), label);
        assert!(matches!(validate_join_tree(&duplicated, &conj), Err(Violation::Bijection { .. })));
    }
    assert!(broken > 20 && fine > 20, "{broken} broken, {fine} still valid");
}
