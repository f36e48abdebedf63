//! Dynamic programming over join trees of acyclic conjunctive queries.
//!
//! Each join-tree node `t` holds a table of entries `(α_1, …, α_k, d)`: one
//! partial solution of the node's atom per answer slot plus the pairwise
//! distances over the free variables that some extension within the subtree
//! rooted at `t` realizes. Tables are filled bottom-up; every entry keeps
//! links to the child entries it was built from so that a witness can be
//! reassembled at the root.
//!
//! Two specialised variants for `sum` keep only the best achievable value
//! per partial tuple: [`SumSolver`] with distinctness flags, and its
//! multiset form that admits repeated answers and stores sorted tuples only.

use std::collections::HashMap;

use indexmap::map::Entry;
use indexmap::IndexMap;

use crate::error::{Error, Result};
use crate::model::{hamming, improves, pair_count, pairs, Aggregator, Assignment, Database, Score, Value, Var};
use crate::outcome::{binomial, next_tuple, sat_pow, NodeStats, Outcome, SolveOptions, Stats, Target};
use crate::query::IndexedConjunct;
use crate::structure::{join_tree_for, JoinTree};

/// Partial solutions of one atom, sorted lexicographically by value.
#[derive(Clone, Debug)]
pub struct AcqNode {
    pub atom: usize,
    pub vars: Vec<Var>,
    pub sols: Vec<Vec<Value>>,
    free_pos: Vec<usize>,
}

impl AcqNode {
    fn new(atom: usize, vars: Vec<Var>, mut sols: Vec<Vec<Value>>, num_free: usize) -> AcqNode {
        sols.sort();
        let free_pos = (0..vars.len()).filter(|&i| (vars[i].0 as usize) < num_free).collect();
        AcqNode {
            atom,
            vars,
            sols,
            free_pos,
        }
    }

    pub fn assignment(&self, sol: u32) -> Assignment {
        self.vars
            .iter()
            .copied()
            .zip(self.sols[sol as usize].iter().copied())
            .collect()
    }

    fn free_distance(&self, a: u32, b: u32) -> u32 {
        let (a, b) = (&self.sols[a as usize], &self.sols[b as usize]);
        self.free_pos.iter().filter(|&&p| a[p] != b[p]).count() as u32
    }

    fn project(&self, sol: u32, onto: &[Var]) -> Vec<Value> {
        let row = &self.sols[sol as usize];
        onto.iter()
            .map(|v| row[self.vars.iter().position(|w| w == v).expect("shared var")])
            .collect()
    }
}

/// Projections of parent and child solutions onto their shared variables,
/// interned to small ids.
struct Link {
    parent_ids: Vec<u32>,
    child_ids: Vec<u32>,
    free_parts: Vec<Vec<Value>>,
}

impl Link {
    fn new(parent: &AcqNode, child: &AcqNode) -> Link {
        let shared: Vec<Var> = parent.vars.iter().copied().filter(|v| child.vars.contains(v)).collect();
        let free_mask: Vec<bool> = shared
            .iter()
            .map(|v| {
                let p = parent.vars.iter().position(|w| w == v).expect("shared");
                parent.free_pos.contains(&p)
            })
            .collect();
        let mut ids: HashMap<Vec<Value>, u32> = HashMap::new();
        let mut free_parts = Vec::new();
        let mut intern = |proj: Vec<Value>| -> u32 {
            let next = ids.len() as u32;
            *ids.entry(proj.clone()).or_insert_with(|| {
                free_parts.push(
                    proj.iter()
                        .zip(&free_mask)
                        .filter(|(_, &f)| f)
                        .map(|(v, _)| *v)
                        .collect(),
                );
                next
            })
        };
        let parent_ids = (0..parent.sols.len() as u32)
            .map(|s| intern(parent.project(s, &shared)))
            .collect();
        let child_ids = (0..child.sols.len() as u32)
            .map(|s| intern(child.project(s, &shared)))
            .collect();
        Link {
            parent_ids,
            child_ids,
            free_parts,
        }
    }

    fn shared_distance(&self, a: u32, b: u32) -> u32 {
        hamming(&self.free_parts[a as usize], &self.free_parts[b as usize])
    }

    fn shared_sum(&self, ids: &[u32]) -> u64 {
        pairs(ids.len())
            .map(|(i, j)| u64::from(self.shared_distance(ids[i], ids[j])))
            .sum()
    }
}

/// A table of entries `(α_1, …, α_k, d)`; partials are indices into the
/// node's sorted solutions.
#[derive(Clone, Debug)]
pub struct DpTable {
    pub node: usize,
    k: usize,
    entries: IndexMap<Box<[u32]>, Vec<(usize, usize)>>,
}

impl DpTable {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Partials and distance vector of entry `i`.
    pub fn get(&self, i: usize) -> (&[u32], &[u32]) {
        let (key, _) = self.entries.get_index(i).expect("entry index");
        key.split_at(self.k)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[u32], &[u32])> {
        self.entries.keys().map(|key| key.split_at(self.k))
    }

    /// Child entries `(child node, entry index)` this entry was built from.
    pub fn provenance(&self, i: usize) -> &[(usize, usize)] {
        &self.entries[i]
    }

    pub fn find(&self, partials: &[u32], dvec: &[u32]) -> Option<usize> {
        let key: Vec<u32> = partials.iter().chain(dvec).copied().collect();
        self.entries.get_index_of(key.as_slice())
    }

    fn insert(&mut self, key: Box<[u32]>, prov: Vec<(usize, usize)>, cap: u64) -> Result<()> {
        if let Entry::Vacant(slot) = self.entries.entry(key) {
            slot.insert(prov);
            if self.entries.len() as u64 > cap {
                return Err(Error::TableGuardExceeded { node: self.node, cap });
            }
        }
        Ok(())
    }
}

fn check_k(k: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    Ok(())
}

/// Initial table of node `t`: every k-tuple of partial solutions with its
/// pairwise free-variable distances.
pub fn dp_init(t: usize, node: &AcqNode, k: usize, cap: u64) -> Result<DpTable> {
    check_k(k)?;
    let n = node.sols.len();
    if sat_pow(n as u128, k) > u128::from(cap) {
        return Err(Error::TableGuardExceeded { node: t, cap });
    }
    let mut table = DpTable {
        node: t,
        k,
        entries: IndexMap::new(),
    };
    if n == 0 {
        return Ok(table);
    }
    let mut idx = vec![0u32; k];
    loop {
        let mut key = idx.clone();
        key.extend(pairs(k).map(|(i, j)| node.free_distance(idx[i], idx[j])));
        table.insert(key.into(), Vec::new(), cap)?;
        if !next_tuple(&mut idx, n as u32) {
            break;
        }
    }
    Ok(table)
}

/// Combines a parent table with the finished table of one child. A parent
/// entry pairs with every child entry whose partials agree with it slotwise;
/// distances add up minus the part counted on both sides.
pub fn dp_merge(
    parent_node: &AcqNode,
    parent: &DpTable,
    child_node: &AcqNode,
    child: &DpTable,
    cap: u64,
) -> Result<DpTable> {
    let k = parent.k;
    let link = Link::new(parent_node, child_node);
    let mut index: HashMap<Vec<u32>, Vec<usize>> = HashMap::new();
    for (ci, (partials, _)) in child.iter().enumerate() {
        let key = partials.iter().map(|&s| link.child_ids[s as usize]).collect();
        index.entry(key).or_default().push(ci);
    }
    let mut out = DpTable {
        node: parent.node,
        k,
        entries: IndexMap::new(),
    };
    for (pi, (partials, dvec)) in parent.iter().enumerate() {
        let ids: Vec<u32> = partials.iter().map(|&s| link.parent_ids[s as usize]).collect();
        let Some(matches) = index.get(&ids) else {
            continue;
        };
        let overlap: Vec<u32> = pairs(k).map(|(i, j)| link.shared_distance(ids[i], ids[j])).collect();
        for &ci in matches {
            let (_, cvec) = child.get(ci);
            let mut key = partials.to_vec();
            key.extend((0..dvec.len()).map(|p| dvec[p] + cvec[p] - overlap[p]));
            let mut prov = parent.provenance(pi).to_vec();
            prov.push((child.node, ci));
            out.insert(key.into(), prov, cap)?;
        }
    }
    Ok(out)
}

/// Picks the best admissible root entry: pairwise distinct unless duplicates
/// are allowed, and accepted by the target. Returns its index and score.
pub fn dp_finalize(root: &DpTable, f: &Aggregator, target: Target, allow_duplicates: bool) -> Option<(usize, Score)> {
    dp_finalize_dvecs(root.iter().map(|(_, d)| d), f, target, allow_duplicates)
}

/// Finalization over a sequence of distance vectors; the first maximum wins.
pub(crate) fn dp_finalize_dvecs<'a>(
    dvecs: impl Iterator<Item = &'a [u32]>,
    f: &Aggregator,
    target: Target,
    allow_duplicates: bool,
) -> Option<(usize, Score)> {
    let mut best: Option<(usize, Score)> = None;
    for (i, dvec) in dvecs.enumerate() {
        if !allow_duplicates && dvec.contains(&0) {
            continue;
        }
        let score = f.evaluate(dvec);
        if target.accepts(&score) && improves(&score, best.as_ref().map(|b| &b.1)) {
            best = Some((i, score));
        }
    }
    best
}

fn prepare(conj: &IndexedConjunct, db: &Database) -> Result<(JoinTree, Vec<AcqNode>)> {
    let jt = join_tree_for(conj)?;
    let bound = conj.bind(db)?;
    let nodes = (0..jt.len())
        .map(|t| {
            let atom = jt.label[t];
            let lit = &bound.literals[atom];
            AcqNode::new(atom, lit.vars.clone(), lit.solutions(), conj.num_free)
        })
        .collect();
    Ok((jt, nodes))
}

/// Read access shared by both table kinds for witness reconstruction.
trait Provenance {
    fn partials(&self, node: usize, entry: usize) -> &[u32];
    fn links(&self, node: usize, entry: usize) -> &[(usize, usize)];
}

impl Provenance for [DpTable] {
    fn partials(&self, node: usize, entry: usize) -> &[u32] {
        self[node].get(entry).0
    }

    fn links(&self, node: usize, entry: usize) -> &[(usize, usize)] {
        self[node].provenance(entry)
    }
}

impl Provenance for [SumTable] {
    fn partials(&self, node: usize, entry: usize) -> &[u32] {
        self[node].get(entry).0
    }

    fn links(&self, node: usize, entry: usize) -> &[(usize, usize)] {
        self[node].provenance(entry)
    }
}

/// Follows provenance links from a root entry and unions the partial
/// solutions per answer slot. With `match_slots`, child slots are matched to
/// parent slots by equal shared projection instead of by position.
fn reassemble<P: Provenance + ?Sized>(
    tables: &P,
    nodes: &[AcqNode],
    root: usize,
    entry: usize,
    k: usize,
    num_free: usize,
    match_slots: bool,
) -> Result<Vec<Assignment>> {
    let corrupt = |m: String| Error::CorruptProvenance(m);
    let mut gamma = vec![Assignment::new(); k];
    let mut stack = vec![(root, entry, (0..k).collect::<Vec<usize>>())];
    while let Some((t, e, slots)) = stack.pop() {
        let partials = tables.partials(t, e);
        for (p, &sol) in partials.iter().enumerate() {
            for (v, val) in nodes[t].vars.iter().zip(&nodes[t].sols[sol as usize]) {
                gamma[slots[p]]
                    .bind(*v, *val)
                    .map_err(|_| corrupt(format!("node {t} entry {e} contradicts an ancestor")))?;
            }
        }
        for &(c, ce) in tables.links(t, e) {
            let cpartials = tables.partials(c, ce);
            let child_slots = if match_slots {
                let shared: Vec<Var> = nodes[t].vars.iter().copied().filter(|v| nodes[c].vars.contains(v)).collect();
                let mut used = vec![false; k];
                let mut child_slots = vec![usize::MAX; k];
                for (p, &sol) in partials.iter().enumerate() {
                    let proj = nodes[t].project(sol, &shared);
                    let q = (0..k)
                        .find(|&q| !used[q] && nodes[c].project(cpartials[q], &shared) == proj)
                        .ok_or_else(|| corrupt(format!("node {c} entry {ce} does not match its parent")))?;
                    used[q] = true;
                    child_slots[q] = slots[p];
                }
                child_slots
            } else {
                slots.clone()
            };
            stack.push((c, ce, child_slots));
        }
    }
    let free: Vec<Var> = (0..num_free as u32).map(Var).collect();
    gamma
        .into_iter()
        .map(|g| {
            if free.iter().all(|&v| g.contains(v)) {
                Ok(g.restrict(&free))
            } else {
                Err(corrupt("reassembled answer misses a free variable".into()))
            }
        })
        .collect()
}

fn distances(answers: &[Assignment], num_free: usize) -> Vec<u32> {
    let free: Vec<Var> = (0..num_free as u32).map(Var).collect();
    pairs(answers.len())
        .map(|(i, j)| {
            let a = answers[i].tuple(&free).expect("free vars bound");
            let b = answers[j].tuple(&free).expect("free vars bound");
            hamming(&a, &b)
        })
        .collect()
}

/// Bottom-up tables for all join-tree nodes of one query instance. The
/// tables depend only on `k`; any aggregator and threshold can then be
/// evaluated against the root.
#[derive(Clone, Debug)]
pub struct AcqSolver {
    pub join_tree: JoinTree,
    pub nodes: Vec<AcqNode>,
    tables: Vec<DpTable>,
    k: usize,
    num_free: usize,
}

impl AcqSolver {
    pub fn build(conj: &IndexedConjunct, db: &Database, k: usize, cap: u64) -> Result<AcqSolver> {
        check_k(k)?;
        let (jt, nodes) = prepare(conj, db)?;
        let mut tables: Vec<Option<DpTable>> = vec![None; jt.len()];
        let m = conj.num_free as u128;
        for t in jt.post_order() {
            let mut table = dp_init(t, &nodes[t], k, cap)?;
            for &c in &jt.children[t] {
                let child = tables[c].as_ref().expect("children are finished first");
                table = dp_merge(&nodes[t], &table, &nodes[c], child, cap)?;
            }
            let bound = sat_pow(nodes[t].sols.len() as u128, k).saturating_mul(sat_pow(m + 1, pair_count(k)));
            assert!(table.len() as u128 <= bound, "table size bound violated at node {t}");
            tables[t] = Some(table);
        }
        Ok(AcqSolver {
            join_tree: jt,
            nodes,
            tables: tables.into_iter().map(|t| t.expect("every node visited")).collect(),
            k,
            num_free: conj.num_free,
        })
    }

    /// Finished table `D_t` of node `t`.
    pub fn table(&self, t: usize) -> &DpTable {
        &self.tables[t]
    }

    pub fn root_table(&self) -> &DpTable {
        &self.tables[self.join_tree.root]
    }

    pub fn stats(&self) -> Vec<NodeStats> {
        let m = self.num_free as u128;
        (0..self.tables.len())
            .map(|t| NodeStats {
                node: t,
                entries: self.tables[t].len(),
                bound: sat_pow(self.nodes[t].sols.len() as u128, self.k).saturating_mul(sat_pow(m + 1, pair_count(self.k))),
            })
            .collect()
    }

    /// Answers over the free variables realizing root entry `entry`.
    pub fn extract_witness(&self, entry: usize) -> Result<Vec<Assignment>> {
        let answers = reassemble(
            self.tables.as_slice(),
            &self.nodes,
            self.join_tree.root,
            entry,
            self.k,
            self.num_free,
            false,
        )?;
        if distances(&answers, self.num_free) != self.root_table().get(entry).1 {
            return Err(Error::CorruptProvenance("witness distances differ from the entry".into()));
        }
        Ok(answers)
    }

    pub fn solve(&self, f: &Aggregator, target: Target, opts: &SolveOptions) -> Result<Outcome> {
        let stats = Stats {
            nodes: self.stats(),
            ..Stats::default()
        };
        let Some((entry, score)) = dp_finalize(self.root_table(), f, target, opts.allow_duplicates) else {
            return Ok(Outcome::negative(stats));
        };
        let witness = if opts.witness {
            Some(self.extract_witness(entry)?)
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

/// Decides an acyclic conjunctive query with the general join-tree DP.
pub fn solve_acq(
    conj: &IndexedConjunct,
    db: &Database,
    k: usize,
    f: &Aggregator,
    target: Target,
    opts: &SolveOptions,
) -> Result<Outcome> {
    AcqSolver::build(conj, db, k, opts.table_cap)?.solve(f, target, opts)
}

/// Child `(node, entry)` links that produced an entry.
type Links = Vec<(usize, usize)>;

/// Best value per partial tuple (and distinctness flags when answers must
/// be distinct).
#[derive(Clone, Debug)]
pub struct SumTable {
    pub node: usize,
    k: usize,
    entries: IndexMap<Box<[u32]>, (u64, Links)>,
}

impl SumTable {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Partials, flags (empty in the multiset variant) and best value.
    pub fn get(&self, i: usize) -> (&[u32], &[u32], u64) {
        let (key, (value, _)) = self.entries.get_index(i).expect("entry index");
        let (partials, flags) = key.split_at(self.k);
        (partials, flags, *value)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[u32], &[u32], u64)> + '_ {
        (0..self.len()).map(|i| self.get(i))
    }

    pub fn provenance(&self, i: usize) -> &[(usize, usize)] {
        &self.entries[i].1
    }

    /// Keeps the larger value; on ties the earlier provenance stays.
    fn offer(&mut self, key: Box<[u32]>, value: u64, prov: Vec<(usize, usize)>, cap: u64) -> Result<()> {
        match self.entries.entry(key) {
            Entry::Occupied(mut slot) => {
                if value > slot.get().0 {
                    slot.insert((value, prov));
                }
            }
            Entry::Vacant(slot) => {
                slot.insert((value, prov));
                if self.entries.len() as u64 > cap {
                    return Err(Error::TableGuardExceeded { node: self.node, cap });
                }
            }
        }
        Ok(())
    }
}

/// `sum` specialisations. With `multiset` set, duplicates are admitted and
/// only non-decreasing partial tuples are stored; otherwise each entry
/// carries one flag per pair recording whether the two answers already
/// differ somewhere in the subtree.
#[derive(Clone, Debug)]
pub struct SumSolver {
    pub join_tree: JoinTree,
    pub nodes: Vec<AcqNode>,
    tables: Vec<SumTable>,
    k: usize,
    num_free: usize,
    multiset: bool,
}

impl SumSolver {
    pub fn build(conj: &IndexedConjunct, db: &Database, k: usize, multiset: bool, cap: u64) -> Result<SumSolver> {
        check_k(k)?;
        let (jt, nodes) = prepare(conj, db)?;
        let mut solver = SumSolver {
            join_tree: jt.clone(),
            nodes,
            tables: Vec::new(),
            k,
            num_free: conj.num_free,
            multiset,
        };
        let mut tables: Vec<Option<SumTable>> = vec![None; jt.len()];
        for t in jt.post_order() {
            let mut table = solver.init(t, cap)?;
            for &c in &jt.children[t] {
                let child = tables[c].as_ref().expect("children are finished first");
                table = solver.merge(&table, child, cap)?;
            }
            assert!(table.len() as u128 <= solver.bound(t), "table size bound violated at node {t}");
            tables[t] = Some(table);
        }
        solver.tables = tables.into_iter().map(|t| t.expect("every node visited")).collect();
        Ok(solver)
    }

    /// Worst-case table size at node `t`.
    pub fn bound(&self, t: usize) -> u128 {
        let n = self.nodes[t].sols.len() as u128;
        if self.multiset {
            binomial(n + self.k as u128 - 1, self.k as u128)
        } else {
            sat_pow(n, self.k).saturating_mul(sat_pow(2, pair_count(self.k)))
        }
    }

    fn init(&self, t: usize, cap: u64) -> Result<SumTable> {
        let node = &self.nodes[t];
        let k = self.k;
        let n = node.sols.len();
        if self.bound(t) > u128::from(cap) {
            return Err(Error::TableGuardExceeded { node: t, cap });
        }
        let mut table = SumTable {
            node: t,
            k,
            entries: IndexMap::new(),
        };
        if n == 0 {
            return Ok(table);
        }
        let mut idx = vec![0u32; k];
        loop {
            if !self.multiset || idx.windows(2).all(|w| w[0] <= w[1]) {
                let dist: Vec<u32> = pairs(k).map(|(i, j)| node.free_distance(idx[i], idx[j])).collect();
                let mut key = idx.clone();
                if !self.multiset {
                    key.extend(dist.iter().map(|&d| u32::from(d > 0)));
                }
                let value = dist.iter().map(|&d| u64::from(d)).sum();
                table.offer(key.into(), value, Vec::new(), cap)?;
            }
            if !next_tuple(&mut idx, n as u32) {
                break;
            }
        }
        Ok(table)
    }

    fn merge(&self, parent: &SumTable, child: &SumTable, cap: u64) -> Result<SumTable> {
        let k = self.k;
        let link = Link::new(&self.nodes[parent.node], &self.nodes[child.node]);
        let mut out = SumTable {
            node: parent.node,
            k,
            entries: IndexMap::new(),
        };
        if self.multiset {
            // best child value per multiset of shared projections
            let mut best: HashMap<Vec<u32>, (u64, usize)> = HashMap::new();
            for (ci, (partials, _, value)) in child.iter().enumerate() {
                let mut ids: Vec<u32> = partials.iter().map(|&s| link.child_ids[s as usize]).collect();
                ids.sort_unstable();
                match best.get(&ids) {
                    Some(&(v, _)) if v >= value => {}
                    _ => {
                        best.insert(ids, (value, ci));
                    }
                }
            }
            for (pi, (partials, _, value)) in parent.iter().enumerate() {
                let mut ids: Vec<u32> = partials.iter().map(|&s| link.parent_ids[s as usize]).collect();
                ids.sort_unstable();
                let Some(&(cvalue, ci)) = best.get(&ids) else {
                    continue;
                };
                let mut prov = parent.provenance(pi).to_vec();
                prov.push((child.node, ci));
                out.offer(partials.into(), value + cvalue - link.shared_sum(&ids), prov, cap)?;
            }
            return Ok(out);
        }
        let mut index: HashMap<Vec<u32>, Vec<usize>> = HashMap::new();
        for (ci, (partials, _, _)) in child.iter().enumerate() {
            let ids = partials.iter().map(|&s| link.child_ids[s as usize]).collect();
            index.entry(ids).or_default().push(ci);
        }
        for (pi, (partials, flags, value)) in parent.iter().enumerate() {
            let ids: Vec<u32> = partials.iter().map(|&s| link.parent_ids[s as usize]).collect();
            let Some(matches) = index.get(&ids) else {
                continue;
            };
            let overlap = link.shared_sum(&ids);
            for &ci in matches {
                let (_, cflags, cvalue) = child.get(ci);
                let mut key = partials.to_vec();
                key.extend(flags.iter().zip(cflags).map(|(a, b)| a | b));
                let mut prov = parent.provenance(pi).to_vec();
                prov.push((child.node, ci));
                out.offer(key.into(), value + cvalue - overlap, prov, cap)?;
            }
        }
        Ok(out)
    }

    pub fn table(&self, t: usize) -> &SumTable {
        &self.tables[t]
    }

    pub fn root_table(&self) -> &SumTable {
        &self.tables[self.join_tree.root]
    }

    pub fn stats(&self) -> Vec<NodeStats> {
        (0..self.tables.len())
            .map(|t| NodeStats {
                node: t,
                entries: self.tables[t].len(),
                bound: self.bound(t),
            })
            .collect()
    }

    /// Best admissible root entry accepted by the target.
    pub fn finalize(&self, target: Target) -> Option<(usize, Score)> {
        let mut best: Option<(usize, Score)> = None;
        for (i, (_, flags, value)) in self.root_table().iter().enumerate() {
            if flags.contains(&0) {
                continue;
            }
            let score = Score::int(value as i64);
            if target.accepts(&score) && improves(&score, best.as_ref().map(|b| &b.1)) {
                best = Some((i, score));
            }
        }
        best
    }

    pub fn extract_witness(&self, entry: usize) -> Result<Vec<Assignment>> {
        let answers = reassemble(
            self.tables.as_slice(),
            &self.nodes,
            self.join_tree.root,
            entry,
            self.k,
            self.num_free,
            self.multiset,
        )?;
        let dist = distances(&answers, self.num_free);
        let (_, flags, value) = self.root_table().get(entry);
        if dist.iter().map(|&d| u64::from(d)).sum::<u64>() != value
            || flags.iter().zip(&dist).any(|(&b, &d)| (b == 1) != (d > 0))
        {
            return Err(Error::CorruptProvenance("witness does not realize the entry".into()));
        }
        Ok(answers)
    }

    pub fn solve(&self, target: Target, opts: &SolveOptions) -> Result<Outcome> {
        let stats = Stats {
            nodes: self.stats(),
            ..Stats::default()
        };
        let Some((entry, score)) = self.finalize(target) else {
            return Ok(Outcome::negative(stats));
        };
        let witness = if opts.witness {
            Some(self.extract_witness(entry)?)
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

/// `sum` over pairwise distinct answers, with distinctness flags.
pub fn solve_acq_sum(
    conj: &IndexedConjunct,
    db: &Database,
    k: usize,
    target: Target,
    opts: &SolveOptions,
) -> Result<Outcome> {
    SumSolver::build(conj, db, k, false, opts.table_cap)?.solve(target, opts)
}

/// `sum` over answer multisets, using sorted partial tuples.
pub fn solve_acq_sum_dup(
    conj: &IndexedConjunct,
    db: &Database,
    k: usize,
    target: Target,
    opts: &SolveOptions,
) -> Result<Outcome> {
    SumSolver::build(conj, db, k, true, opts.table_cap)?.solve(target, opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::parse_database;
    use crate::query::parse_query;

    fn k2_fixture() -> (IndexedConjunct, Database) {
        let db = parse_database("R(1). R(2). R1(1,0). R1(2,0).").unwrap();
        let q = parse_query("Q(v,x1) :- R(v), R1(v,x1).").unwrap().single().unwrap();
        (q, db)
    }

    fn k3_fixture() -> (IndexedConjunct, Database) {
        let db = parse_database(
            "R(1). R(2). R(3).
             R1(1,0). R1(2,0). R1(3,3).
             R2(1,0). R2(2,2). R2(3,0).
             R3(1,1). R3(2,0). R3(3,0).",
        )
        .unwrap();
        let q = parse_query("Q(v,x1,x2,x3) :- R(v), R1(v,x1), R2(v,x2), R3(v,x3).")
            .unwrap()
            .single()
            .unwrap();
        (q, db)
    }

    fn at_least(d: i64) -> Target {
        Target::AtLeast(Score::int(d))
    }

    fn tuples(db: &Database, answers: &[Assignment]) -> Vec<Vec<String>> {
        answers
            .iter()
            .map(|a| a.iter().map(|(_, v)| db.payload(v).to_string()).collect())
            .collect()
    }

    #[test]
    fn init_enumerates_all_tuples() {
        let (q, db) = k2_fixture();
        let solver = AcqSolver::build(&q, &db, 2, 1000).unwrap();
        let t = (0..2).find(|&t| solver.nodes[t].atom == 1).unwrap();
        let table = dp_init(t, &solver.nodes[t], 2, 1000).unwrap();
        assert_eq!(table.len(), 4);
        // (1,0) vs (2,0): differs on v only
        assert!(table.find(&[0, 1], &[1]).is_some());
        let single = dp_init(t, &solver.nodes[t], 1, 1000).unwrap();
        assert_eq!(single.len(), 2);
        assert!(single.iter().all(|(_, d)| d.is_empty()));
    }

    #[test]
    fn init_guard() {
        let (q, db) = k2_fixture();
        let solver = AcqSolver::build(&q, &db, 2, 1000).unwrap();
        assert!(matches!(
            dp_init(0, &solver.nodes[0], 3, 7),
            Err(Error::TableGuardExceeded { node: 0, cap: 7 })
        ));
    }

    #[test]
    fn empty_relation_gives_empty_table() {
        let db = parse_database("R/1. S(1).").unwrap();
        let q = parse_query("Q(x) :- R(x), S(x).").unwrap().single().unwrap();
        let solver = AcqSolver::build(&q, &db, 2, 1000).unwrap();
        assert!(solver.root_table().is_empty());
        let out = solver.solve(&Aggregator::Sum, at_least(0), &SolveOptions::default()).unwrap();
        assert!(!out.decision);
    }

    #[test]
    fn k2_fixture_decisions() {
        let (q, db) = k2_fixture();
        let opts = SolveOptions::default();
        assert!(!solve_acq(&q, &db, 2, &Aggregator::Sum, at_least(2), &opts).unwrap().decision);
        let yes = solve_acq(&q, &db, 2, &Aggregator::Sum, at_least(1), &opts).unwrap();
        assert!(yes.decision);
        assert_eq!(yes.diversity, Some(Score::int(1)));
        let mut got = tuples(&db, yes.witness.as_ref().unwrap());
        got.sort();
        assert_eq!(got, vec![vec!["1", "0"], vec!["2", "0"]]);
    }

    #[test]
    fn k3_fixture_max_is_three() {
        let (q, db) = k3_fixture();
        let opts = SolveOptions::default();
        for f in [Aggregator::Sum, Aggregator::Min] {
            let out = solve_acq(&q, &db, 2, &f, Target::Maximize, &opts).unwrap();
            assert_eq!(out.diversity, Some(Score::int(3)));
            assert!(!solve_acq(&q, &db, 2, &f, at_least(4), &opts).unwrap().decision);
        }
        let out = solve_acq_sum(&q, &db, 2, Target::Maximize, &opts).unwrap();
        assert_eq!(out.diversity, Some(Score::int(3)));
    }

    #[test]
    fn isolated_vertices() {
        let db = parse_database("R(1). R(2).").unwrap();
        let q = parse_query("Q(v) :- R(v).").unwrap().single().unwrap();
        let out = solve_acq(&q, &db, 2, &Aggregator::Sum, at_least(1), &SolveOptions::default()).unwrap();
        assert!(out.decision);
    }

    #[test]
    fn identical_answers_are_pruned() {
        let db = parse_database("R(1, 5). R(1, 6).").unwrap();
        let q = parse_query("Q(x) :- R(x, y).").unwrap().single().unwrap();
        let opts = SolveOptions::default();
        assert!(!solve_acq(&q, &db, 2, &Aggregator::Sum, at_least(0), &opts).unwrap().decision);
        let dup = SolveOptions {
            allow_duplicates: true,
            ..opts
        };
        assert!(solve_acq(&q, &db, 2, &Aggregator::Sum, at_least(0), &dup).unwrap().decision);
    }

    #[test]
    fn multiset_variant() {
        let db = parse_database("R(7).").unwrap();
        let q = parse_query("Q(x) :- R(x).").unwrap().single().unwrap();
        let opts = SolveOptions::default();
        let out = solve_acq_sum_dup(&q, &db, 3, at_least(0), &opts).unwrap();
        assert!(out.decision);
        assert_eq!(out.witness.unwrap().len(), 3);

        let (q, db) = k2_fixture();
        let out = solve_acq_sum_dup(&q, &db, 3, Target::Maximize, &opts).unwrap();
        assert_eq!(out.diversity, Some(Score::int(2)));
        let solver = SumSolver::build(&q, &db, 3, true, 1000).unwrap();
        for t in 0..2 {
            // C(2 + 3 - 1, 3) = 4
            assert!(solver.table(t).len() <= 4);
        }
    }

    #[test]
    fn single_node_witness_is_the_entry() {
        let db = parse_database("R(1,2). R(3,4).").unwrap();
        let q = parse_query("Q(x,y) :- R(x,y).").unwrap().single().unwrap();
        let solver = AcqSolver::build(&q, &db, 2, 1000).unwrap();
        let (entry, _) = dp_finalize(solver.root_table(), &Aggregator::Min, at_least(2), false).unwrap();
        let w = solver.extract_witness(entry).unwrap();
        let (partials, _) = solver.root_table().get(entry);
        for (a, &p) in w.iter().zip(partials) {
            assert_eq!(*a, solver.nodes[0].assignment(p));
        }
    }
}
