//! Dynamic programming over nice tree decompositions for conjunctive queries
//! with negated atoms.
//!
//! An entry at node `t` is a k-tuple of assignments of the bag `χ(t)` plus
//! pairwise free-variable distances. It is present exactly when the tuple
//! extends to k solutions of the literals covered below `t` realizing those
//! distances.

use std::collections::HashMap;

use indexmap::map::Entry;
use indexmap::IndexMap;

use crate::acq::dp_finalize_dvecs;
use crate::error::{Error, Result};
use crate::model::{pair_count, pairs, Aggregator, Assignment, Database, Value, Var};
use crate::outcome::{next_tuple, sat_pow, NodeStats, Outcome, SolveOptions, Stats, Target};
use crate::query::{BoundConjunct, IndexedConjunct};
use crate::structure::{
    make_nice, tree_decompose, validate_tree_decomposition, DecompositionMethod, NiceTreeDecomposition, NodeKind,
    TreeDecomposition,
};

/// Entries over a bag: `k · |bag|` values (slot-major, bag order) followed
/// by the distance vector.
#[derive(Clone, Debug)]
pub struct BagTable {
    pub node: usize,
    pub bag: Vec<Var>,
    k: usize,
    entries: IndexMap<Box<[u32]>, Vec<(usize, usize)>>,
}

impl BagTable {
    fn new(node: usize, bag: Vec<Var>, k: usize) -> BagTable {
        BagTable {
            node,
            bag,
            k,
            entries: IndexMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    fn width(&self) -> usize {
        self.k * self.bag.len()
    }

    /// Raw slot-major partials and the distance vector of entry `i`.
    pub fn raw(&self, i: usize) -> (&[u32], &[u32]) {
        self.entries.get_index(i).expect("entry index").0.split_at(self.width())
    }

    /// The `k` partial assignments of entry `i`.
    pub fn partials(&self, i: usize) -> Vec<Assignment> {
        let (flat, _) = self.raw(i);
        self.to_assignments(flat)
    }

    fn to_assignments(&self, flat: &[u32]) -> Vec<Assignment> {
        let w = self.bag.len();
        (0..self.k)
            .map(|s| {
                self.bag
                    .iter()
                    .zip(&flat[s * w..(s + 1) * w])
                    .map(|(&v, &x)| (v, Value(x)))
                    .collect()
            })
            .collect()
    }

    pub fn dvec(&self, i: usize) -> &[u32] {
        self.raw(i).1
    }

    pub fn provenance(&self, i: usize) -> &[(usize, usize)] {
        &self.entries[i]
    }

    pub fn iter(&self) -> impl Iterator<Item = (Vec<Assignment>, &[u32])> + '_ {
        (0..self.len()).map(|i| (self.partials(i), self.dvec(i)))
    }

    /// Index of the entry with these partials and distances.
    pub fn find(&self, partials: &[Assignment], dvec: &[u32]) -> Option<usize> {
        let mut key = Vec::with_capacity(self.width() + dvec.len());
        for a in partials {
            key.extend(a.tuple(&self.bag)?.into_iter().map(|v| v.0));
        }
        key.extend_from_slice(dvec);
        self.entries.get_index_of(key.as_slice())
    }

    fn insert(&mut self, key: Vec<u32>, prov: Vec<(usize, usize)>, cap: u64) -> Result<()> {
        if let Entry::Vacant(slot) = self.entries.entry(key.into_boxed_slice()) {
            slot.insert(prov);
            if self.entries.len() as u64 > cap {
                return Err(Error::TableGuardExceeded { node: self.node, cap });
            }
        }
        Ok(())
    }
}

/// Instance data shared by all node operations.
pub struct CqNegContext<'db> {
    pub conj: &'db IndexedConjunct,
    bound: BoundConjunct<'db>,
    pub domain: Vec<Value>,
    pub k: usize,
    pub cap: u64,
}

impl<'db> CqNegContext<'db> {
    pub fn new(conj: &'db IndexedConjunct, db: &'db Database, k: usize, cap: u64) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidArgument("k must be at least 1".into()));
        }
        Ok(CqNegContext {
            conj,
            bound: conj.bind(db)?,
            domain: db.domain(),
            k,
            cap,
        })
    }

    fn is_free(&self, v: Var) -> bool {
        (v.0 as usize) < self.conj.num_free
    }

    /// Literals whose variables lie in `bag` and, if given, contain `z`.
    fn covered(&self, bag: &[Var], z: Option<Var>) -> Vec<usize> {
        (0..self.conj.literals.len())
            .filter(|&i| {
                let vars = &self.conj.literals[i].vars;
                vars.iter().all(|v| bag.contains(v)) && z.is_none_or(|z| vars.contains(&z))
            })
            .collect()
    }

    fn satisfies(&self, literals: &[usize], bag: &[Var], values: &[u32]) -> bool {
        literals.iter().all(|&i| {
            self.bound.literals[i].holds(|v| Value(values[bag.iter().position(|&w| w == v).expect("covered")]))
        })
    }

    fn distances(&self, bag: &[Var], flat: &[u32]) -> Vec<u32> {
        let w = bag.len();
        let free: Vec<usize> = (0..w).filter(|&p| self.is_free(bag[p])).collect();
        pairs(self.k)
            .map(|(i, j)| free.iter().filter(|&&p| flat[i * w + p] != flat[j * w + p]).count() as u32)
            .collect()
    }
}

/// All k-tuples of bag assignments satisfying the literals covered by the
/// bag.
pub fn dp_leaf(ctx: &CqNegContext<'_>, t: usize, bag: &[Var]) -> Result<BagTable> {
    let mut table = BagTable::new(t, bag.to_vec(), ctx.k);
    let n = ctx.domain.len() as u32;
    if sat_pow(u128::from(n), bag.len()) > u128::from(ctx.cap) {
        return Err(Error::TableGuardExceeded { node: t, cap: ctx.cap });
    }
    let literals = ctx.covered(bag, None);
    let mut singles: Vec<Vec<u32>> = Vec::new();
    let mut idx = vec![0u32; bag.len()];
    if n > 0 || bag.is_empty() {
        loop {
            let values: Vec<u32> = idx.iter().map(|&i| ctx.domain[i as usize].0).collect();
            if ctx.satisfies(&literals, bag, &values) {
                singles.push(values);
            }
            if !next_tuple(&mut idx, n) {
                break;
            }
        }
    }
    if singles.is_empty() {
        return Ok(table);
    }
    if sat_pow(singles.len() as u128, ctx.k) > u128::from(ctx.cap) {
        return Err(Error::TableGuardExceeded { node: t, cap: ctx.cap });
    }
    let mut pick = vec![0u32; ctx.k];
    loop {
        let mut key: Vec<u32> = pick.iter().flat_map(|&s| singles[s as usize].iter().copied()).collect();
        key.extend(ctx.distances(bag, &key));
        table.insert(key, Vec::new(), ctx.cap)?;
        if !next_tuple(&mut pick, singles.len() as u32) {
            break;
        }
    }
    Ok(table)
}

/// Extends every child entry by all value choices for `z`, one per slot,
/// that keep the newly covered literals satisfied.
pub fn dp_introduce(ctx: &CqNegContext<'_>, t: usize, child: &BagTable, z: Var) -> Result<BagTable> {
    let mut bag = child.bag.clone();
    let at = bag.partition_point(|&v| v < z);
    bag.insert(at, z);
    let mut table = BagTable::new(t, bag.clone(), ctx.k);
    let literals = ctx.covered(&bag, Some(z));
    let old_w = child.bag.len();
    let free = ctx.is_free(z);
    for ci in 0..child.len() {
        let (flat, dvec) = child.raw(ci);
        // admissible values of z per slot
        let mut options: Vec<Vec<u32>> = Vec::with_capacity(ctx.k);
        for s in 0..ctx.k {
            let base = &flat[s * old_w..(s + 1) * old_w];
            let mut values = Vec::with_capacity(old_w + 1);
            let mut ok = Vec::new();
            for d in &ctx.domain {
                values.clear();
                values.extend_from_slice(&base[..at]);
                values.push(d.0);
                values.extend_from_slice(&base[at..]);
                if ctx.satisfies(&literals, &bag, &values) {
                    ok.push(d.0);
                }
            }
            options.push(ok);
        }
        if options.iter().any(Vec::is_empty) {
            continue;
        }
        let mut pick = vec![0usize; ctx.k];
        loop {
            let beta: Vec<u32> = (0..ctx.k).map(|s| options[s][pick[s]]).collect();
            let mut key = Vec::with_capacity(table.width() + dvec.len());
            for (s, &b) in beta.iter().enumerate() {
                let base = &flat[s * old_w..(s + 1) * old_w];
                key.extend_from_slice(&base[..at]);
                key.push(b);
                key.extend_from_slice(&base[at..]);
            }
            key.extend(
                pairs(ctx.k)
                    .zip(dvec)
                    .map(|((i, j), &d)| d + u32::from(free && beta[i] != beta[j])),
            );
            table.insert(key, vec![(child.node, ci)], ctx.cap)?;
            if !advance(&mut pick, &options) {
                break;
            }
        }
    }
    Ok(table)
}

/// Next choice of one option per slot; `false` after the last.
fn advance(pick: &mut [usize], options: &[Vec<u32>]) -> bool {
    for s in (0..pick.len()).rev() {
        pick[s] += 1;
        if pick[s] < options[s].len() {
            return true;
        }
        pick[s] = 0;
    }
    false
}

/// Drops `z` from every slot; entries that become equal are merged, keeping
/// the provenance of the first.
pub fn dp_forget(t: usize, child: &BagTable, z: Var) -> BagTable {
    let at = child.bag.iter().position(|&v| v == z).expect("forgotten variable in child bag");
    let mut bag = child.bag.clone();
    bag.remove(at);
    let mut table = BagTable::new(t, bag, child.k);
    let w = child.bag.len();
    for ci in 0..child.len() {
        let (flat, dvec) = child.raw(ci);
        let mut key: Vec<u32> = (0..child.k)
            .flat_map(|s| {
                flat[s * w..(s + 1) * w]
                    .iter()
                    .enumerate()
                    .filter(|&(p, _)| p != at)
                    .map(|(_, &x)| x)
            })
            .collect();
        key.extend_from_slice(dvec);
        table.insert(key, vec![(child.node, ci)], u64::MAX).expect("no cap");
    }
    table
}

/// Pairs entries with identical partials; the bag-level distance is
/// counted on both sides and subtracted once.
pub fn dp_join(ctx: &CqNegContext<'_>, t: usize, left: &BagTable, right: &BagTable) -> Result<BagTable> {
    let mut table = BagTable::new(t, left.bag.clone(), ctx.k);
    let mut index: HashMap<&[u32], Vec<usize>> = HashMap::new();
    for ri in 0..right.len() {
        index.entry(right.raw(ri).0).or_default().push(ri);
    }
    for li in 0..left.len() {
        let (flat, ldvec) = left.raw(li);
        let Some(matches) = index.get(flat) else {
            continue;
        };
        let overlap = ctx.distances(&left.bag, flat);
        for &ri in matches {
            let rdvec = right.raw(ri).1;
            let mut key = flat.to_vec();
            key.extend((0..ldvec.len()).map(|p| ldvec[p] + rdvec[p] - overlap[p]));
            table.insert(key, vec![(left.node, li), (right.node, ri)], ctx.cap)?;
        }
    }
    Ok(table)
}

/// All tables of one instance over a nice decomposition.
pub struct CqNegSolver {
    pub decomposition: NiceTreeDecomposition,
    tables: Vec<BagTable>,
    k: usize,
    num_free: usize,
    domain_size: usize,
}

impl CqNegSolver {
    /// Builds the tables, decomposing the query with min-fill unless a
    /// decomposition is supplied.
    pub fn build(
        conj: &IndexedConjunct,
        db: &Database,
        k: usize,
        decomposition: Option<&TreeDecomposition>,
        cap: u64,
    ) -> Result<CqNegSolver> {
        let td = match decomposition {
            Some(td) => {
                validate_tree_decomposition(td, conj).map_err(Error::InvalidDecomposition)?;
                td.clone()
            }
            None => tree_decompose(conj, DecompositionMethod::MinFill)?,
        };
        let nice = make_nice(&td);
        let ctx = CqNegContext::new(conj, db, k, cap)?;
        let mut tables: Vec<Option<BagTable>> = vec![None; nice.len()];
        let m = conj.num_free as u128;
        let dom = ctx.domain.len() as u128;
        for t in nice.post_order() {
            let kids = &nice.children[t];
            let table = match nice.kinds[t] {
                NodeKind::Leaf => dp_leaf(&ctx, t, &nice.bags[t])?,
                NodeKind::Introduce(z) => dp_introduce(&ctx, t, tables[kids[0]].as_ref().expect("child done"), z)?,
                NodeKind::Forget(z) => dp_forget(t, tables[kids[0]].as_ref().expect("child done"), z),
                NodeKind::Join => dp_join(
                    &ctx,
                    t,
                    tables[kids[0]].as_ref().expect("child done"),
                    tables[kids[1]].as_ref().expect("child done"),
                )?,
            };
            debug_assert_eq!(table.bag, nice.bags[t]);
            let bound = sat_pow(dom, k * nice.bags[t].len()).saturating_mul(sat_pow(m + 1, pair_count(k)));
            assert!(table.len() as u128 <= bound, "table size bound violated at node {t}");
            tables[t] = Some(table);
        }
        Ok(CqNegSolver {
            decomposition: nice,
            tables: tables.into_iter().map(|t| t.expect("every node visited")).collect(),
            k,
            num_free: conj.num_free,
            domain_size: db.domain().len(),
        })
    }

    pub fn table(&self, t: usize) -> &BagTable {
        &self.tables[t]
    }

    pub fn root_table(&self) -> &BagTable {
        &self.tables[self.decomposition.root]
    }

    /// Per-node sizes against `|dom|^(k(ω+1)) · (|X|+1)^(k(k-1)/2)`.
    pub fn stats(&self) -> Vec<NodeStats> {
        let omega = self.decomposition.width();
        let bound = sat_pow(self.domain_size as u128, self.k * (omega + 1))
            .saturating_mul(sat_pow(self.num_free as u128 + 1, pair_count(self.k)));
        (0..self.tables.len())
            .map(|t| NodeStats {
                node: t,
                entries: self.tables[t].len(),
                bound,
            })
            .collect()
    }

    /// Answers realizing root entry `entry`, reassembled from provenance and
    /// checked against the query and the entry's distances.
    pub fn extract_witness(&self, conj: &IndexedConjunct, db: &Database, entry: usize) -> Result<Vec<Assignment>> {
        let corrupt = |m: &str| Error::CorruptProvenance(m.to_string());
        let mut gamma = vec![Assignment::new(); self.k];
        let mut stack = vec![(self.decomposition.root, entry)];
        while let Some((t, e)) = stack.pop() {
            for (s, part) in self.tables[t].partials(e).into_iter().enumerate() {
                for (v, x) in part.iter() {
                    gamma[s].bind(v, x).map_err(|_| corrupt("provenance links disagree"))?;
                }
            }
            stack.extend(self.tables[t].provenance(e).iter().copied());
        }
        let bound = conj.bind(db)?;
        for g in &gamma {
            if g.len() != conj.num_vars() {
                return Err(corrupt("reassembled assignment is partial"));
            }
            let all_hold = bound
                .literals
                .iter()
                .all(|l| l.holds(|v| g.get(v).expect("total assignment")));
            if !all_hold {
                return Err(corrupt("reassembled assignment violates the query"));
            }
        }
        let free: Vec<Var> = (0..self.num_free as u32).map(Var).collect();
        let answers: Vec<Assignment> = gamma.iter().map(|g| g.restrict(&free)).collect();
        let dist: Vec<u32> = pairs(self.k)
            .map(|(i, j)| crate::model::delta_restricted(&answers[i], &answers[j], &free).expect("bound"))
            .collect();
        if dist != self.root_table().dvec(entry) {
            return Err(corrupt("witness distances differ from the entry"));
        }
        Ok(answers)
    }

    pub fn solve(
        &self,
        conj: &IndexedConjunct,
        db: &Database,
        f: &Aggregator,
        target: Target,
        opts: &SolveOptions,
    ) -> Result<Outcome> {
        let stats = Stats {
            nodes: self.stats(),
            ..Stats::default()
        };
        let root = self.root_table();
        let best = dp_finalize_dvecs((0..root.len()).map(|i| root.dvec(i)), f, target, opts.allow_duplicates);
        let Some((entry, score)) = best else {
            return Ok(Outcome::negative(stats));
        };
        let witness = if opts.witness {
            Some(self.extract_witness(conj, db, entry)?)
        } else {
            None
        };
        Ok(Outcome {
            decision: true,
            diversity: Some(score),
            witness,
            stats,
        })
    }
}

pub fn solve_cqneg(
    conj: &IndexedConjunct,
    db: &Database,
    k: usize,
    f: &Aggregator,
    target: Target,
    decomposition: Option<&TreeDecomposition>,
    opts: &SolveOptions,
) -> Result<Outcome> {
    CqNegSolver::build(conj, db, k, decomposition, opts.table_cap)?.solve(conj, db, f, target, opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::parse_database;
    use crate::model::Score;
    use crate::query::parse_query;

    fn grid() -> (IndexedConjunct, Database) {
        let db = parse_database("R(1,1). R(1,2). R(2,1). R(2,2). S(1,1).").unwrap();
        let q = parse_query("Q(x,y) :- R(x,y), !S(x,y).").unwrap().single().unwrap();
        (q, db)
    }

    fn names(db: &Database, answers: &[Assignment]) -> Vec<String> {
        let mut out: Vec<String> = answers
            .iter()
            .map(|a| {
                a.iter()
                    .map(|(_, v)| db.payload(v).to_string())
                    .collect::<Vec<_>>()
                    .join(",")
            })
            .collect();
        out.sort();
        out
    }

    #[test]
    fn leaf_filters_by_covered_literals() {
        let (q, db) = grid();
        let ctx = CqNegContext::new(&q, &db, 1, 1000).unwrap();
        let leaf = dp_leaf(&ctx, 0, &[Var(0), Var(1)]).unwrap();
        assert_eq!(leaf.len(), 3);
        assert_eq!(names(&db, &leaf.iter().flat_map(|(p, _)| p).collect::<Vec<_>>()), ["1,2", "2,1", "2,2"]);
        let ctx2 = CqNegContext::new(&q, &db, 2, 1000).unwrap();
        let leaf2 = dp_leaf(&ctx2, 0, &[Var(0), Var(1)]).unwrap();
        assert_eq!(leaf2.len(), 9);
        for (p, d) in leaf2.iter() {
            let expect = crate::model::delta_restricted(&p[0], &p[1], &[Var(0), Var(1)]).unwrap();
            assert_eq!(d, [expect]);
        }
        // nothing covered: every assignment is admitted
        let only_x = dp_leaf(&ctx2, 0, &[Var(0)]).unwrap();
        assert_eq!(only_x.len(), 4);
    }

    #[test]
    fn introduce_checks_new_literals() {
        let (q, db) = grid();
        let ctx = CqNegContext::new(&q, &db, 2, 1000).unwrap();
        let leaf = dp_leaf(&ctx, 0, &[Var(0)]).unwrap();
        let intro = dp_introduce(&ctx, 1, &leaf, Var(1)).unwrap();
        assert_eq!(intro.len(), 9);
        assert!(intro.iter().all(|(p, _)| p.iter().all(|a| a.tuple(&[Var(0), Var(1)]) != Some(vec![Value(0), Value(0)]))));
    }

    #[test]
    fn forget_coalesces() {
        let db = parse_database("R(1,5). R(1,6).").unwrap();
        let q = parse_query("Q(x) :- R(x,y).").unwrap().single().unwrap();
        let ctx = CqNegContext::new(&q, &db, 1, 1000).unwrap();
        let leaf = dp_leaf(&ctx, 0, &[Var(0), Var(1)]).unwrap();
        assert_eq!(leaf.len(), 2);
        let forgotten = dp_forget(1, &leaf, Var(1));
        assert_eq!(forgotten.len(), 1);
        let all = dp_forget(2, &forgotten, Var(0));
        assert_eq!(all.len(), 1);
        assert!(all.partials(0)[0].is_empty());
    }

    #[test]
    fn grid_examples() {
        let (q, db) = grid();
        let opts = SolveOptions::default();
        let out = solve_cqneg(&q, &db, 2, &Aggregator::Min, Target::AtLeast(Score::int(2)), None, &opts).unwrap();
        assert!(out.decision);
        assert_eq!(names(&db, out.witness.as_ref().unwrap()), ["1,2", "2,1"]);
        let best = solve_cqneg(&q, &db, 3, &Aggregator::Sum, Target::Maximize, None, &opts).unwrap();
        assert_eq!(best.diversity, Some(Score::int(4)));
        let no = solve_cqneg(&q, &db, 3, &Aggregator::Sum, Target::AtLeast(Score::int(5)), None, &opts).unwrap();
        assert!(!no.decision);
    }

    #[test]
    fn negation_kills_everything() {
        let db = parse_database("R(1,1). R(1,2). S(1,1). S(1,2).").unwrap();
        let q = parse_query("Q(x,y) :- R(x,y), !S(x,y).").unwrap().single().unwrap();
        let out = solve_cqneg(&q, &db, 1, &Aggregator::Sum, Target::AtLeast(Score::int(0)), None, &SolveOptions::default())
            .unwrap();
        assert!(!out.decision);
    }

    #[test]
    fn join_of_two_branches() {
        let db = parse_database("A(1,1). A(1,2). B(1,3). B(1,4). C(1).").unwrap();
        let q = parse_query("Q(x,y,z) :- C(x), A(x,y), B(x,z).").unwrap().single().unwrap();
        let td = TreeDecomposition::from_parents(
            0,
            vec![vec![Var(0)], vec![Var(0), Var(1)], vec![Var(0), Var(2)]],
            vec![None, Some(0), Some(0)],
        );
        let out = solve_cqneg(&q, &db, 2, &Aggregator::Sum, Target::Maximize, Some(&td), &SolveOptions::default())
            .unwrap();
        assert_eq!(out.diversity, Some(Score::int(2)));
    }
}
