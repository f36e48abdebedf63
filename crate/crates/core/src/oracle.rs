//! Ground truth for tests: naive answer enumeration, exhaustive diversity
//! search, brute-force graph problems, and instance generators that encode
//! Independent Set and List Coloring as diversity problems.

use std::collections::{BTreeSet, VecDeque};

use itertools::Itertools;

use crate::error::{Error, Result};
use crate::model::{hamming, Aggregator, Assignment, Database, Payload, Score, Value, Var};
use crate::outcome::{binomial, DEFAULT_BUDGET};
use crate::query::{Atom, BoundConjunct, IndexedConjunct, Literal, Query, Term};
use crate::structure::{validate_join_tree, JoinTree};

/// Simple undirected graph on vertices `1..=n`; edges stored as `(u, v)`
/// with `u < v`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Graph {
    pub n: usize,
    pub edges: BTreeSet<(usize, usize)>,
}

impl Graph {
    pub fn new(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Graph> {
        let mut set = BTreeSet::new();
        for (a, b) in edges {
            if a == b || a == 0 || b == 0 || a > n || b > n {
                return Err(Error::InvalidArgument(format!("bad edge ({a}, {b}) for {n} vertices")));
            }
            set.insert((a.min(b), a.max(b)));
        }
        Ok(Graph { n, edges: set })
    }

    pub fn complete(n: usize) -> Graph {
        Graph::new(n, (1..=n).tuple_combinations()).expect("valid edges")
    }

    pub fn complete_bipartite(n: usize) -> Graph {
        Graph::new(2 * n, (1..=n).cartesian_product(n + 1..=2 * n)).expect("valid edges")
    }

    /// Edges in lexicographic order; position `j` is edge `e_(j+1)`.
    pub fn edge_list(&self) -> Vec<(usize, usize)> {
        self.edges.iter().copied().collect()
    }

    pub fn adjacent(&self, a: usize, b: usize) -> bool {
        self.edges.contains(&(a.min(b), a.max(b)))
    }

    pub fn degree(&self, v: usize) -> usize {
        self.edges.iter().filter(|&&(a, b)| a == v || b == v).count()
    }

    pub fn neighbours(&self, v: usize) -> Vec<usize> {
        (1..=self.n).filter(|&u| self.adjacent(u, v)).collect()
    }

    /// Two-colouring by BFS; the smallest vertex of each component gets
    /// side 0. `None` if the graph has an odd cycle.
    pub fn bipartition(&self) -> Option<Vec<u8>> {
        let mut side = vec![u8::MAX; self.n + 1];
        for start in 1..=self.n {
            if side[start] != u8::MAX {
                continue;
            }
            side[start] = 0;
            let mut queue = VecDeque::from([start]);
            while let Some(v) = queue.pop_front() {
                for u in self.neighbours(v) {
                    if side[u] == u8::MAX {
                        side[u] = 1 - side[v];
                        queue.push_back(u);
                    } else if side[u] == side[v] {
                        return None;
                    }
                }
            }
        }
        Some(side)
    }
}

/// A generated diversity instance with its thresholds.
#[derive(Clone, Debug)]
pub struct Fixture {
    pub db: Database,
    pub query: Query,
    pub k: usize,
    pub d_sum: i64,
    pub d_min: i64,
}

fn var(name: &str) -> Term {
    Term::Var(name.to_string())
}

fn atom(relation: &str, terms: Vec<Term>) -> Literal {
    Literal {
        atom: Atom {
            relation: relation.to_string(),
            terms,
        },
        positive: true,
    }
}

/// Encodes "does G have an independent set of size s" over a star-shaped
/// acyclic query `R(v), R_1(v, x_1), …, R_m(v, x_m)`. Vertex `i` maps to 0
/// on edge columns it touches and to `i` elsewhere.
pub fn gen_is_query_fixture(g: &Graph, s: usize) -> Fixture {
    let edges = g.edge_list();
    let m = edges.len();
    let mut db = Database::new();
    db.declare("R", 1).expect("fresh");
    for i in 1..=g.n {
        db.insert_fact("R", vec![Payload::Int(i as i64)]).expect("arity 1");
    }
    for (j, &(a, b)) in edges.iter().enumerate() {
        let name = format!("R{}", j + 1);
        db.declare(&name, 2).expect("fresh");
        for i in 1..=g.n {
            let x = if i == a || i == b { 0 } else { i as i64 };
            db.insert_fact(&name, vec![Payload::Int(i as i64), Payload::Int(x)])
                .expect("arity 2");
        }
    }
    let mut free = vec!["v".to_string()];
    let mut body = vec![atom("R", vec![var("v")])];
    for j in 1..=m {
        let x = format!("x{j}");
        body.push(atom(&format!("R{j}"), vec![var("v"), var(&x)]));
        free.push(x);
    }
    let query = Query::new("Q", free, vec![body]).expect("well-formed");
    let pairs = (s * s.saturating_sub(1) / 2) as i64;
    Fixture {
        db,
        query,
        k: s,
        d_sum: pairs * (m as i64 + 1),
        d_min: m as i64 + 1,
    }
}

/// Encodes Independent Set on graphs of maximum degree 3 into a single
/// 5-ary relation: one row per vertex, all slots `free_i` initially; each
/// edge in turn marks the first slot that is free at both endpoints as
/// `taken_j` on both.
pub fn gen_is_data_fixture(g: &Graph, s: usize) -> Result<Fixture> {
    for v in 1..=g.n {
        let degree = g.degree(v);
        if degree > 3 {
            return Err(Error::DegreeTooHigh { vertex: v, degree });
        }
    }
    let mut rows: Vec<Vec<String>> = (1..=g.n).map(|i| vec![format!("free_{i}"); 5]).collect();
    for (j, &(a, b)) in g.edge_list().iter().enumerate() {
        let is_free = |row: &Vec<String>, t: usize| row[t].starts_with("free_");
        let t = (0..5)
            .find(|&t| is_free(&rows[a - 1], t) && is_free(&rows[b - 1], t))
            .expect("degree at most 3 leaves a common free slot");
        rows[a - 1][t] = format!("taken_{}", j + 1);
        rows[b - 1][t] = format!("taken_{}", j + 1);
    }
    let mut db = Database::new();
    db.declare("R", 5).expect("fresh");
    for row in rows {
        db.insert_fact("R", row.into_iter().map(Payload::Str).collect())?;
    }
    let vars: Vec<String> = (1..=5).map(|i| format!("x{i}")).collect();
    let body = vec![atom("R", vars.iter().map(|v| var(v)).collect())];
    let query = Query::new("Q", vars, vec![body]).expect("well-formed");
    let pairs = (s * s.saturating_sub(1) / 2) as i64;
    Ok(Fixture {
        db,
        query,
        k: s,
        d_sum: 5 * pairs,
        d_min: 5,
    })
}

/// Relation holding the constant triples for a colour list.
fn list_relation(colours: &BTreeSet<u8>) -> String {
    if colours.is_empty() {
        "R_empty".to_string()
    } else {
        format!("R_{}", colours.iter().map(u8::to_string).collect::<String>())
    }
}

/// The fixed database of the List Coloring encoding, plus an empty ternary
/// relation for empty colour lists.
pub fn list_coloring_database() -> Database {
    let mut db = Database::new();
    for mask in 1u8..8 {
        let colours: BTreeSet<u8> = (1..=3).filter(|c| mask & (1 << (c - 1)) != 0).collect();
        let name = list_relation(&colours);
        for c in &colours {
            let c = Payload::Int(i64::from(*c));
            db.insert_fact(&name, vec![c.clone(), c.clone(), c]).expect("arity 3");
        }
    }
    db.declare("R_empty", 3).expect("fresh");
    db.insert_fact("S", vec![Payload::Int(0)]).expect("arity 1");
    db.insert_fact("S_prime", vec![Payload::Int(1)]).expect("arity 1");
    db
}

/// Encodes List Coloring on a bipartite 3-regular graph as a union of two
/// acyclic rules over `x_1 … x_3n, y`, one per side of the bipartition. Two
/// answers at distance `3n + 1` exist iff the graph is list-colourable.
/// `lists[v - 1]` is the colour list of vertex `v`.
pub fn gen_uacq_fixture(g: &Graph, lists: &[BTreeSet<u8>]) -> Result<Fixture> {
    let bad = |m: String| Error::NotBipartiteOrNot3Regular(m);
    if lists.len() != g.n {
        return Err(Error::InvalidArgument(format!("{} lists for {} vertices", lists.len(), g.n)));
    }
    if lists.iter().flatten().any(|c| !(1..=3).contains(c)) {
        return Err(Error::InvalidArgument("colours must be 1, 2 or 3".into()));
    }
    if let Some(v) = (1..=g.n).find(|&v| g.degree(v) != 3) {
        return Err(bad(format!("vertex {v} has degree {}", g.degree(v))));
    }
    let side = g.bipartition().ok_or_else(|| bad("odd cycle".into()))?;
    let edges = g.edge_list();
    let n3 = edges.len();
    let rule = |part: u8, tail: &str| -> Vec<Literal> {
        let mut body = Vec::new();
        for v in (1..=g.n).filter(|&v| side[v] == part) {
            let incident: Vec<Term> = (0..n3)
                .filter(|&j| edges[j].0 == v || edges[j].1 == v)
                .map(|j| var(&format!("x{}", j + 1)))
                .collect();
            body.push(atom(&list_relation(&lists[v - 1]), incident));
        }
        body.push(atom(tail, vec![var("y")]));
        body
    };
    let mut free: Vec<String> = (1..=n3).map(|j| format!("x{j}")).collect();
    free.push("y".into());
    let query = Query::new("Q", free, vec![rule(0, "S"), rule(1, "S_prime")])?;
    let d = n3 as i64 + 1;
    Ok(Fixture {
        db: list_coloring_database(),
        query,
        k: 2,
        d_sum: d,
        d_min: d,
    })
}

/// Whether `g` has an independent set of `s` vertices.
pub fn has_independent_set(g: &Graph, s: usize) -> bool {
    (1..=g.n)
        .combinations(s)
        .any(|set| set.iter().tuple_combinations().all(|(&a, &b)| !g.adjacent(a, b)))
}

/// Whether every vertex can take a colour from its list with adjacent
/// vertices coloured differently.
pub fn is_list_colorable(g: &Graph, lists: &[BTreeSet<u8>]) -> bool {
    fn go(g: &Graph, lists: &[BTreeSet<u8>], colour: &mut Vec<u8>, v: usize) -> bool {
        if v > g.n {
            return true;
        }
        for &c in &lists[v - 1] {
            if (1..v).all(|u| !g.adjacent(u, v) || colour[u] != c) {
                colour[v] = c;
                if go(g, lists, colour, v + 1) {
                    return true;
                }
            }
        }
        false
    }
    go(g, lists, &mut vec![0; g.n + 1], 1)
}

/// All answers of `q` by backtracking over the positive literals in body
/// order, checking negative literals once their variables are bound.
/// Answers are value tuples over the head variables, sorted.
pub fn enumerate_answers(q: &Query, db: &Database) -> Result<Vec<Vec<Value>>> {
    let mut out = BTreeSet::new();
    for i in 0..q.disjuncts.len() {
        let conj = q.indexed(i);
        let bound = conj.bind(db)?;
        let mut binding = vec![None; conj.num_vars()];
        backtrack(&bound, 0, &mut binding, &mut out);
    }
    Ok(out.into_iter().collect())
}

fn backtrack(
    conj: &BoundConjunct<'_>,
    at: usize,
    binding: &mut Vec<Option<Value>>,
    out: &mut BTreeSet<Vec<Value>>,
) {
    let lookup = |b: &[Option<Value>], v: Var| b[v.0 as usize].expect("bound");
    if at == conj.literals.len() {
        let negatives_hold = conj
            .literals
            .iter()
            .filter(|l| !l.positive)
            .all(|l| l.holds(|v| lookup(binding, v)));
        if negatives_hold {
            out.insert((0..conj.num_free).map(|v| binding[v].expect("safe")).collect());
        }
        return;
    }
    let lit = &conj.literals[at];
    if !lit.positive {
        backtrack(conj, at + 1, binding, out);
        return;
    }
    for row in lit.relation.rows() {
        let saved = binding.clone();
        let mut ok = true;
        for (term, &val) in lit.terms.iter().zip(row) {
            match *term {
                crate::query::BoundTerm::Const(c) => ok &= c == Some(val),
                crate::query::BoundTerm::Var(v) => match binding[v.0 as usize] {
                    Some(prev) => ok &= prev == val,
                    None => binding[v.0 as usize] = Some(val),
                },
            }
            if !ok {
                break;
            }
        }
        if ok {
            backtrack(conj, at + 1, binding, out);
        }
        *binding = saved;
    }
}

/// Answers as assignments of `Var(0..m)`.
pub fn as_assignments(rows: &[Vec<Value>]) -> Vec<Assignment> {
    rows.iter()
        .map(|r| r.iter().enumerate().map(|(i, &v)| (Var(i as u32), v)).collect())
        .collect()
}

/// Best diversity over all k-subsets (k-multisets with `allow_duplicates`)
/// of `answers`, with the lexicographically least maximizing index tuple.
/// `None` when there are fewer than `k` answers to choose from.
pub fn bruteforce_diversity(
    answers: &[Vec<Value>],
    k: usize,
    f: &Aggregator,
    allow_duplicates: bool,
    budget: u128,
) -> Result<Option<(Score, Vec<usize>)>> {
    let n = answers.len();
    let count = if allow_duplicates {
        binomial((n + k).saturating_sub(1) as u128, k as u128)
    } else {
        binomial(n as u128, k as u128)
    };
    if count > budget {
        return Err(Error::CombinatorialBudgetExceeded { count, budget });
    }
    let score = |set: &[usize]| -> Score {
        let d: Vec<u32> = set
            .iter()
            .tuple_combinations()
            .map(|(&a, &b)| hamming(&answers[a], &answers[b]))
            .collect();
        f.evaluate(&d)
    };
    let candidates: Box<dyn Iterator<Item = Vec<usize>>> = if allow_duplicates {
        Box::new((0..n).combinations_with_replacement(k))
    } else {
        Box::new((0..n).combinations(k))
    };
    let mut best: Option<(Score, Vec<usize>)> = None;
    for set in candidates {
        let s = score(&set);
        if best.as_ref().is_none_or(|(b, _)| s > *b) {
            best = Some((s, set));
        }
    }
    Ok(best)
}

/// Decision by brute force: is the best diversity at least `d`?
pub fn bruteforce_decide(answers: &[Vec<Value>], k: usize, f: &Aggregator, d: &Score, allow_duplicates: bool) -> Result<bool> {
    Ok(bruteforce_diversity(answers, k, f, allow_duplicates, DEFAULT_BUDGET)?.is_some_and(|(s, _)| s >= *d))
}

/// Decodes a Prüfer sequence over `0..n` into an edge list.
fn prufer_edges(seq: &[usize], n: usize) -> Vec<(usize, usize)> {
    let mut degree = vec![1; n];
    for &x in seq {
        degree[x] += 1;
    }
    let mut edges = Vec::with_capacity(n - 1);
    for &x in seq {
        let leaf = (0..n).find(|&v| degree[v] == 1).expect("a leaf exists");
        edges.push((leaf, x));
        degree[leaf] -= 1;
        degree[x] -= 1;
    }
    let rest: Vec<usize> = (0..n).filter(|&v| degree[v] == 1).collect();
    edges.push((rest[0], rest[1]));
    edges
}

/// Whether any labelled tree over the atoms is a join tree, by trying all
/// `n^(n-2)` of them. Meant for at most a handful of atoms.
pub fn exists_join_tree(conj: &IndexedConjunct) -> bool {
    let n = conj.literals.len();
    if n <= 1 {
        return n == 1;
    }
    let sequences: Box<dyn Iterator<Item = Vec<usize>>> = if n == 2 {
        Box::new(std::iter::once(Vec::new()))
    } else {
        Box::new((0..n - 2).map(|_| 0..n).multi_cartesian_product())
    };
    for seq in sequences {
        let edges = prufer_edges(&seq, n);
        let mut adj = vec![Vec::new(); n];
        for &(a, b) in &edges {
            adj[a].push(b);
            adj[b].push(a);
        }
        let mut parent = vec![None; n];
        let mut seen = vec![false; n];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(v) = stack.pop() {
            for &u in &adj[v] {
                if !seen[u] {
                    seen[u] = true;
                    parent[u] = Some(v);
                    stack.push(u);
                }
            }
        }
        let jt = JoinTree::from_parents(0, parent, (0..n).collect());
        if validate_join_tree(&jt, conj).is_ok() {
            return true;
        }
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::query::parse_query;

    fn rendered(db: &Database, rows: &[Vec<Value>]) -> Vec<Vec<String>> {
        rows.iter()
            .map(|r| r.iter().map(|&v| db.payload(v).to_string()).collect())
            .collect()
    }

    #[test]
    fn k3_answers() {
        let fx = gen_is_query_fixture(&Graph::complete(3), 2);
        let answers = enumerate_answers(&fx.query, &fx.db).unwrap();
        let mut got = rendered(&fx.db, &answers);
        got.sort();
        assert_eq!(got, vec![vec!["1", "0", "0", "1"], vec!["2", "0", "2", "0"], vec!["3", "3", "0", "0"]]);
        assert_eq!((fx.k, fx.d_sum, fx.d_min), (2, 4, 4));
        assert!(!has_independent_set(&Graph::complete(3), 2));
        let best = bruteforce_diversity(&answers, 2, &Aggregator::Sum, false, 100).unwrap().unwrap();
        assert_eq!(best.0, Score::int(3));
    }

    #[test]
    fn edgeless_graph() {
        let g = Graph::new(3, []).unwrap();
        let fx = gen_is_query_fixture(&g, 3);
        let answers = enumerate_answers(&fx.query, &fx.db).unwrap();
        assert!(bruteforce_decide(&answers, 3, &Aggregator::Min, &Score::int(fx.d_min), false).unwrap());
    }

    #[test]
    fn path_rows() {
        let g = Graph::new(3, [(1, 2), (2, 3)]).unwrap();
        let fx = gen_is_data_fixture(&g, 2).unwrap();
        let rel = fx.db.relation("R").unwrap();
        let rows: Vec<Vec<String>> = rel.rows().map(|r| r.iter().map(|&v| fx.db.payload(v).to_string()).collect()).collect();
        assert_eq!(rows[0], ["taken_1", "free_1", "free_1", "free_1", "free_1"]);
        assert_eq!(rows[1], ["taken_1", "taken_2", "free_2", "free_2", "free_2"]);
        assert_eq!(rows[2], ["free_3", "taken_2", "free_3", "free_3", "free_3"]);
        let answers = enumerate_answers(&fx.query, &fx.db).unwrap();
        assert!(bruteforce_decide(&answers, 2, &Aggregator::Min, &Score::int(5), false).unwrap());
    }

    #[test]
    fn data_fixture_degree_check() {
        let star = Graph::new(5, [(1, 2), (1, 3), (1, 4), (1, 5)]).unwrap();
        assert!(matches!(
            gen_is_data_fixture(&star, 2),
            Err(Error::DegreeTooHigh { vertex: 1, degree: 4 })
        ));
        let k2 = Graph::complete(2);
        let fx = gen_is_data_fixture(&k2, 2).unwrap();
        let answers = enumerate_answers(&fx.query, &fx.db).unwrap();
        assert!(!bruteforce_decide(&answers, 2, &Aggregator::Min, &Score::int(5), false).unwrap());
    }

    #[test]
    fn list_coloring_database_contents() {
        let db = list_coloring_database();
        assert_eq!(db.relation("R_12").unwrap().len(), 2);
        assert_eq!(db.relation("R_123").unwrap().len(), 3);
        assert!(db.relation("R_empty").unwrap().is_empty());
    }

    #[test]
    fn k33_full_lists() {
        let g = Graph::complete_bipartite(3);
        let lists = vec![BTreeSet::from([1, 2, 3]); 6];
        assert!(is_list_colorable(&g, &lists));
        let fx = gen_uacq_fixture(&g, &lists).unwrap();
        assert_eq!(fx.d_sum, 10);
        let answers = enumerate_answers(&fx.query, &fx.db).unwrap();
        assert!(bruteforce_decide(&answers, 2, &Aggregator::Sum, &Score::int(10), false).unwrap());
        let mut lists = lists;
        lists[4].clear();
        assert!(!is_list_colorable(&g, &lists));
        let fx = gen_uacq_fixture(&g, &lists).unwrap();
        let answers = enumerate_answers(&fx.query, &fx.db).unwrap();
        assert!(!bruteforce_decide(&answers, 2, &Aggregator::Sum, &Score::int(10), false).unwrap());
    }

    #[test]
    fn uacq_requires_cubic_bipartite() {
        let lists = vec![BTreeSet::from([1]); 3];
        assert!(matches!(
            gen_uacq_fixture(&Graph::complete(3), &lists),
            Err(Error::NotBipartiteOrNot3Regular(_))
        ));
    }

    #[test]
    fn bruteforce_small_cases() {
        let rows = vec![vec![Value(0), Value(0)], vec![Value(0), Value(1)], vec![Value(1), Value(1)]];
        // pairwise distances 1, 2, 1
        let (best, set) = bruteforce_diversity(&rows, 2, &Aggregator::Min, false, 100).unwrap().unwrap();
        assert_eq!((best, set), (Score::int(2), vec![0, 2]));
        let (all, _) = bruteforce_diversity(&rows, 3, &Aggregator::Sum, false, 100).unwrap().unwrap();
        assert_eq!(all, Score::int(4));
        let (one, set) = bruteforce_diversity(&rows, 1, &Aggregator::Min, false, 100).unwrap().unwrap();
        assert_eq!((one, set), (Score::Unbounded, vec![0]));
        assert_eq!(bruteforce_diversity(&rows, 1, &Aggregator::Sum, false, 100).unwrap().unwrap().0, Score::int(0));
        assert!(bruteforce_diversity(&rows, 4, &Aggregator::Sum, false, 100).unwrap().is_none());
        assert!(matches!(
            bruteforce_diversity(&rows, 2, &Aggregator::Sum, false, 2),
            Err(Error::CombinatorialBudgetExceeded { count: 3, budget: 2 })
        ));
    }

    #[test]
    fn join_tree_search() {
        let tri = parse_query("Q(x) :- R(x,y), S(y,z), T(z,x).").unwrap().single().unwrap();
        assert!(!exists_join_tree(&tri));
        let path = parse_query("Q(x) :- R(x,y), S(y,z), T(z,w).").unwrap().single().unwrap();
        assert!(exists_join_tree(&path));
    }

    #[test]
    fn empty_relations_give_no_answers() {
        let db = crate::io::parse_database("R/1. S/1.").unwrap();
        let q = parse_query("Q(x) :- R(x). Q(x) :- S(x).").unwrap();
        assert!(enumerate_answers(&q, &db).unwrap().is_empty());
    }
}
