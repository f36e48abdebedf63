//! Random instance generators shared by the integration tests and the
//! acceptance harness.

#![allow(dead_code)]

use std::collections::BTreeSet;

use diverseq::kernel::AnswerRelation;
use diverseq::model::{Database, Payload, Value};
use diverseq::query::IndexedConjunct;
use diverseq::structure::{exact_order, order_width, primal_graph};
use diverseq::{parse_query, Query};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub use rand::SeedableRng;

pub type TestRng = ChaCha8Rng;

pub fn rng(seed: u64) -> TestRng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub struct Instance {
    pub db: Database,
    pub query: Query,
    pub text: String,
}

impl Instance {
    pub fn conj(&self) -> IndexedConjunct {
        self.query.single().expect("single rule")
    }
}

struct Lit {
    relation: String,
    terms: Vec<String>,
    positive: bool,
}

fn render(free: &[String], lits: &[Lit]) -> String {
    let body: Vec<String> = lits
        .iter()
        .map(|l| format!("{}{}({})", if l.positive { "" } else { "!" }, l.relation, l.terms.join(", ")))
        .collect();
    format!("Q({}) :- {}.", free.join(", "), body.join(", "))
}

fn is_var(term: &str) -> bool {
    term.starts_with('v')
}

/// Fills every relation named in `lits` with up to `max_rows` random rows
/// over `0..dom`; every relation is declared even when left empty.
fn random_database(rng: &mut TestRng, lits: &[Lit], dom: i64, max_rows: usize, density: Option<f64>) -> Database {
    let mut db = Database::new();
    let mut seen = BTreeSet::new();
    for l in lits {
        if !seen.insert(l.relation.clone()) {
            continue;
        }
        let arity = l.terms.len();
        db.declare(&l.relation, arity).expect("fresh relation");
        match density {
            Some(p) => {
                // every tuple of the full grid independently
                let total = (dom as usize).pow(arity as u32);
                for code in 0..total {
                    if rng.gen_bool(p) {
                        let mut c = code;
                        let row = (0..arity)
                            .map(|_| {
                                let v = (c % dom as usize) as i64;
                                c /= dom as usize;
                                Payload::Int(v)
                            })
                            .collect();
                        db.insert_fact(&l.relation, row).expect("arity matches");
                    }
                }
            }
            None => {
                // mostly well-filled so that joins rarely come out empty
                let rows = rng.gen_range(max_rows / 2..=max_rows);
                for _ in 0..rows {
                    let row = (0..arity).map(|_| Payload::Int(rng.gen_range(0..dom))).collect();
                    db.insert_fact(&l.relation, row).expect("arity matches");
                }
            }
        }
    }
    db
}

fn fresh(n: &mut usize) -> String {
    *n += 1;
    format!("v{}", *n - 1)
}

fn pick_free(rng: &mut TestRng, vars: &[String]) -> Vec<String> {
    let mut free: Vec<String> = vars.iter().filter(|_| rng.gen_bool(0.7)).cloned().collect();
    if free.is_empty() {
        free.push(vars.choose(rng).expect("some variable").clone());
    }
    free.shuffle(rng);
    free
}

/// A random acyclic conjunctive query grown atom by atom: each new atom
/// shares some variables with one earlier atom and is otherwise fresh, so
/// the growth order is itself a join tree.
pub fn random_acq(rng: &mut TestRng, max_atoms: usize, max_arity: usize, dom: i64, max_rows: usize) -> Instance {
    let atoms = rng.gen_range(1..=max_atoms);
    let mut lits: Vec<Lit> = Vec::new();
    let mut atom_vars: Vec<Vec<String>> = Vec::new();
    let mut next_var = 0;
    for a in 0..atoms {
        let arity = rng.gen_range(1..=max_arity);
        let mut terms: Vec<String> = Vec::new();
        if a > 0 {
            let parent = &atom_vars[rng.gen_range(0..a)];
            let share = rng.gen_range(0..=parent.len().min(arity));
            let mut shared: Vec<String> = parent.choose_multiple(rng, share).cloned().collect();
            terms.append(&mut shared);
        }
        while terms.len() < arity {
            if !terms.is_empty() && rng.gen_bool(0.1) {
                let again = terms.choose(rng).expect("nonempty").clone();
                terms.push(again);
            } else if rng.gen_bool(0.08) {
                terms.push(rng.gen_range(0..dom).to_string());
            } else {
                terms.push(fresh(&mut next_var));
            }
        }
        terms.shuffle(rng);
        if !terms.iter().any(|t| is_var(t)) {
            terms[0] = fresh(&mut next_var);
        }
        let vars: Vec<String> = terms.iter().filter(|t| is_var(t)).cloned().collect();
        let reuse = lits
            .iter()
            .filter(|l| l.terms.len() == arity)
            .map(|l| l.relation.clone())
            .collect::<Vec<_>>();
        let relation = if !reuse.is_empty() && rng.gen_bool(0.2) {
            reuse.choose(rng).expect("nonempty").clone()
        } else {
            format!("R{a}")
        };
        atom_vars.push(vars);
        lits.push(Lit {
            relation,
            terms,
            positive: true,
        });
    }
    let all: Vec<String> = (0..next_var).map(|i| format!("v{i}")).collect();
    let free = pick_free(rng, &all);
    let db = random_database(rng, &lits, dom, max_rows, None);
    let text = render(&free, &lits);
    let query = parse_query(&text).unwrap_or_else(|e| panic!("generated query `{text}` fails to parse: {e}"));
    Instance { db, query, text }
}

pub fn exact_width(conj: &IndexedConjunct) -> usize {
    let g = primal_graph(conj);
    let order = exact_order(&g, 1_000_000).expect("tiny graph");
    order_width(&g, &order)
}

/// A random safe conjunctive query with negation of treewidth at most
/// `max_width`: two or three positive literals over at most five
/// variables, and at most one negative literal per two positive ones.
pub fn random_cqneg(rng: &mut TestRng, dom: i64, max_width: usize) -> Instance {
    loop {
        let positives = rng.gen_range(2..=3);
        let pool = rng.gen_range(2..=5);
        let names: Vec<String> = (0..pool).map(|i| format!("v{i}")).collect();
        let mut lits = Vec::new();
        for p in 0..positives {
            let arity = rng.gen_range(1..=3);
            let terms = (0..arity).map(|_| names.choose(rng).expect("pool").clone()).collect();
            lits.push(Lit {
                relation: format!("P{p}"),
                terms,
                positive: true,
            });
        }
        let used: BTreeSet<String> = lits.iter().flat_map(|l| l.terms.iter().cloned()).collect();
        let used: Vec<String> = used.into_iter().collect();
        if rng.gen_bool(0.75) {
            let arity = rng.gen_range(1..=2.min(used.len()).max(1));
            let terms = (0..arity).map(|_| used.choose(rng).expect("used").clone()).collect();
            lits.push(Lit {
                relation: "N".into(),
                terms,
                positive: false,
            });
        }
        let free = pick_free(rng, &used);
        let density = rng.gen_range(0.3..0.9);
        let db = random_database(rng, &lits, dom, 0, Some(density));
        let text = render(&free, &lits);
        let query = parse_query(&text).unwrap_or_else(|e| panic!("generated query `{text}` fails to parse: {e}"));
        let inst = Instance { db, query, text };
        if exact_width(&inst.conj()) <= max_width {
            return inst;
        }
    }
}

/// Random answer relation with `m` columns over `0..dom` with at most
/// `max_rows` rows, wrapped in a database holding the interned values.
pub fn random_answers(rng: &mut TestRng, m: usize, max_rows: usize, dom: i64) -> (Database, AnswerRelation) {
    let mut db = Database::new();
    db.declare("answers", m).expect("fresh");
    let n = rng.gen_range(0..=max_rows);
    for _ in 0..n {
        let row = (0..m).map(|_| Payload::Int(rng.gen_range(0..dom))).collect();
        db.insert_fact("answers", row).expect("arity matches");
    }
    let rows: Vec<Vec<Value>> = db.relation("answers").expect("declared").rows().map(|r| r.to_vec()).collect();
    let columns = (0..m).map(|i| format!("x{i}")).collect();
    (db, AnswerRelation::new(columns, rows))
}

/// A random positive query over up to `max_vars` variables whose atoms
/// may form cycles.
pub fn random_hypergraph(rng: &mut TestRng, max_atoms: usize, max_vars: usize) -> IndexedConjunct {
    let atoms = rng.gen_range(1..=max_atoms);
    let pool = rng.gen_range(max_vars.min(3)..=max_vars);
    let names: Vec<String> = (0..pool).map(|i| format!("v{i}")).collect();
    let lits: Vec<Lit> = (0..atoms)
        .map(|a| {
            // binary atoms dominate so that cycles are common
            let arity = if rng.gen_bool(0.7) { 2 } else { rng.gen_range(1..=3) };
            Lit {
                relation: format!("R{a}"),
                terms: (0..arity).map(|_| names.choose(rng).expect("pool").clone()).collect(),
                positive: true,
            }
        })
        .collect();
    let used: BTreeSet<String> = lits.iter().flat_map(|l| l.terms.iter().cloned()).collect();
    let used: Vec<String> = used.into_iter().collect();
    let free = pick_free(rng, &used);
    parse_query(&render(&free, &lits)).expect("well-formed").single().expect("single rule")
}

/// Every simple graph on `n` labelled vertices, as edge lists over `1..=n`.
pub fn all_graphs(n: usize) -> Vec<Vec<(usize, usize)>> {
    let slots: Vec<(usize, usize)> = (1..=n).flat_map(|a| (a + 1..=n).map(move |b| (a, b))).collect();
    (0u32..1 << slots.len())
        .map(|mask| {
            slots
                .iter()
                .enumerate()
                .filter(|(i, _)| mask >> i & 1 == 1)
                .map(|(_, &e)| e)
                .collect()
        })
        .collect()
}
