//! Structural decompositions of queries: join trees via GYO ear removal, tree
//! decompositions of the primal graph, and the nice normal form used by the
//! negation-aware dynamic program.

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use crate::error::{Error, Result};
use crate::model::Var;
use crate::query::IndexedConjunct;

/// A rooted join tree. Node `t` is labeled with atom `label[t]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct JoinTree {
    pub root: usize,
    pub parent: Vec<Option<usize>>,
    pub children: Vec<Vec<usize>>,
    pub label: Vec<usize>,
}

impl JoinTree {
    pub fn len(&self) -> usize {
        self.label.len()
    }

    pub fn is_empty(&self) -> bool {
        self.label.is_empty()
    }

    /// Builds a tree from parent links (children kept in ascending order).
    pub fn from_parents(root: usize, parent: Vec<Option<usize>>, label: Vec<usize>) -> JoinTree {
        let mut children = vec![Vec::new(); parent.len()];
        for (node, p) in parent.iter().enumerate() {
            if let Some(p) = p {
                children[*p].push(node);
            }
        }
        JoinTree {
            root,
            parent,
            children,
            label,
        }
    }

    /// Nodes in post-order (children before parents, children in order).
    pub fn post_order(&self) -> Vec<usize> {
        post_order(self.root, &self.children)
    }
}

pub(crate) fn post_order(root: usize, children: &[Vec<usize>]) -> Vec<usize> {
    let mut out = Vec::with_capacity(children.len());
    let mut stack = vec![(root, 0usize)];
    while let Some((node, next)) = stack.pop() {
        if next < children[node].len() {
            stack.push((node, next + 1));
            stack.push((children[node][next], 0));
        } else {
            out.push(node);
        }
    }
    out
}

/// GYO ear removal over the given hyperedges (one per atom).
///
/// Ears are removed in ascending atom order; an ear hangs below the
/// smallest-index remaining atom that contains all of its shared variables.
/// The last atom standing becomes the root. Returns `None` iff the
/// hypergraph is cyclic.
pub fn gyo_join_tree(edges: &[Vec<Var>]) -> Option<JoinTree> {
    let n = edges.len();
    if n == 0 {
        return None;
    }
    let sets: Vec<BTreeSet<Var>> = edges.iter().map(|e| e.iter().copied().collect()).collect();
    let mut alive = vec![true; n];
    let mut parent = vec![None; n];
    let mut remaining = n;
    while remaining > 1 {
        let mut removed = false;
        for ear in 0..n {
            if !alive[ear] {
                continue;
            }
            let shared: Vec<Var> = sets[ear]
                .iter()
                .copied()
                .filter(|v| (0..n).any(|o| o != ear && alive[o] && sets[o].contains(v)))
                .collect();
            let witness = (0..n).find(|&w| w != ear && alive[w] && shared.iter().all(|v| sets[w].contains(v)));
            if let Some(w) = witness {
                parent[ear] = Some(w);
                alive[ear] = false;
                remaining -= 1;
                removed = true;
                break;
            }
        }
        if !removed {
            return None;
        }
    }
    let root = alive.iter().position(|&a| a).expect("one atom remains");
    Some(JoinTree::from_parents(root, parent, (0..n).collect()))
}

/// Join tree over the positive atoms of a single rule.
pub fn join_tree_for(conj: &IndexedConjunct) -> Result<JoinTree> {
    if !conj.is_positive() {
        return Err(Error::UnsupportedQuery("join trees require a negation-free rule".into()));
    }
    let edges: Vec<Vec<Var>> = conj.literals.iter().map(|l| l.vars.clone()).collect();
    gyo_join_tree(&edges).ok_or(Error::NotAcyclic)
}

/// A rooted tree decomposition; bags are sorted variable lists.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TreeDecomposition {
    pub bags: Vec<Vec<Var>>,
    pub parent: Vec<Option<usize>>,
    pub children: Vec<Vec<usize>>,
    pub root: usize,
}

impl TreeDecomposition {
    pub fn from_parents(root: usize, bags: Vec<Vec<Var>>, parent: Vec<Option<usize>>) -> Self {
        let mut children = vec![Vec::new(); parent.len()];
        for (node, p) in parent.iter().enumerate() {
            if let Some(p) = p {
                children[*p].push(node);
            }
        }
        let bags = bags
            .into_iter()
            .map(|mut b| {
                b.sort();
                b.dedup();
                b
            })
            .collect();
        TreeDecomposition {
            bags,
            parent,
            children,
            root,
        }
    }

    pub fn width(&self) -> usize {
        self.bags.iter().map(Vec::len).max().unwrap_or(0).saturating_sub(1)
    }

    pub fn len(&self) -> usize {
        self.bags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bags.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DecompositionMethod {
    MinFill,
    /// Branch and bound over elimination orders, visiting at most `budget`
    /// search nodes.
    Exact { budget: u64 },
}

/// Primal graph: one vertex per variable, edges between variables sharing a
/// literal.
pub fn primal_graph(conj: &IndexedConjunct) -> Vec<BTreeSet<usize>> {
    let mut adj = vec![BTreeSet::new(); conj.num_vars()];
    for lit in &conj.literals {
        for &a in &lit.vars {
            for &b in &lit.vars {
                if a != b {
                    adj[a.0 as usize].insert(b.0 as usize);
                }
            }
        }
    }
    adj
}

pub fn tree_decompose(conj: &IndexedConjunct, method: DecompositionMethod) -> Result<TreeDecomposition> {
    let graph = primal_graph(conj);
    let order = match method {
        DecompositionMethod::MinFill => min_fill_order(&graph),
        DecompositionMethod::Exact { budget } => exact_order(&graph, budget)?,
    };
    Ok(decomposition_from_order(&graph, &order))
}

/// Greedy elimination order: repeatedly eliminate the vertex whose
/// neighbourhood needs the fewest fill edges (ties: lower degree, then index).
pub fn min_fill_order(graph: &[BTreeSet<usize>]) -> Vec<usize> {
    let mut adj = graph.to_vec();
    let mut alive = vec![true; adj.len()];
    let mut order = Vec::with_capacity(adj.len());
    for _ in 0..adj.len() {
        let mut best: Option<(usize, usize, usize)> = None;
        for v in (0..adj.len()).filter(|&v| alive[v]) {
            let nb: Vec<usize> = adj[v].iter().copied().collect();
            let mut fill = 0;
            for (i, &a) in nb.iter().enumerate() {
                for &b in &nb[i + 1..] {
                    if !adj[a].contains(&b) {
                        fill += 1;
                    }
                }
            }
            let key = (fill, nb.len(), v);
            if best.is_none_or(|b| key < b) {
                best = Some(key);
            }
        }
        let (_, _, v) = best.expect("alive vertex");
        eliminate(&mut adj, v);
        alive[v] = false;
        order.push(v);
    }
    order
}

fn eliminate(adj: &mut [BTreeSet<usize>], v: usize) {
    let nb: Vec<usize> = adj[v].iter().copied().collect();
    for &a in &nb {
        adj[a].remove(&v);
        for &b in &nb {
            if a != b {
                adj[a].insert(b);
            }
        }
    }
    adj[v].clear();
}

/// Width of an elimination order: the largest neighbourhood at elimination.
pub fn order_width(graph: &[BTreeSet<usize>], order: &[usize]) -> usize {
    let mut adj = graph.to_vec();
    let mut width = 0;
    for &v in order {
        width = width.max(adj[v].len());
        eliminate(&mut adj, v);
    }
    width
}

struct ExactSearch {
    n: usize,
    budget: u64,
    visited: u64,
    best_width: usize,
    best_order: Vec<usize>,
    seen: HashMap<u64, usize>,
}

impl ExactSearch {
    fn search(&mut self, adj: &[u64], eliminated: u64, order: &mut Vec<usize>, width: usize) -> Result<()> {
        self.visited += 1;
        if self.visited > self.budget {
            return Err(Error::ExactSearchBudgetExceeded(self.budget));
        }
        let remaining = self.n - order.len();
        if remaining == 0 || remaining - 1 <= width {
            if width.max(remaining.saturating_sub(1)) < self.best_width {
                self.best_width = width.max(remaining.saturating_sub(1));
                self.best_order = order.clone();
                self.best_order.extend((0..self.n).filter(|v| eliminated & (1 << v) == 0));
            }
            return Ok(());
        }
        if let Some(&w) = self.seen.get(&eliminated) {
            if w <= width {
                return Ok(());
            }
        }
        self.seen.insert(eliminated, width);
        for v in 0..self.n {
            if eliminated & (1 << v) != 0 {
                continue;
            }
            let degree = adj[v].count_ones() as usize;
            let new_width = width.max(degree);
            if new_width >= self.best_width {
                continue;
            }
            let mut next = adj.to_vec();
            let nb = adj[v];
            for (u, row) in next.iter_mut().enumerate() {
                if nb & (1 << u) != 0 {
                    *row = (*row | nb) & !(1 << u) & !(1 << v);
                }
            }
            next[v] = 0;
            order.push(v);
            self.search(&next, eliminated | (1 << v), order, new_width)?;
            order.pop();
        }
        Ok(())
    }
}

/// Minimum-width elimination order by branch and bound, seeded with the
/// min-fill order as upper bound.
pub fn exact_order(graph: &[BTreeSet<usize>], budget: u64) -> Result<Vec<usize>> {
    let n = graph.len();
    let seed = min_fill_order(graph);
    if n > 63 {
        return Err(Error::ExactSearchBudgetExceeded(budget));
    }
    let adj: Vec<u64> = graph
        .iter()
        .map(|nb| nb.iter().fold(0u64, |m, &u| m | (1 << u)))
        .collect();
    let mut search = ExactSearch {
        n,
        budget,
        visited: 0,
        best_width: order_width(graph, &seed),
        best_order: seed,
        seen: HashMap::new(),
    };
    search.search(&adj, 0, &mut Vec::with_capacity(n), 0)?;
    Ok(search.best_order)
}

/// Bags `{v} ∪ N⁺(v)` along the order, each hung below the bag of its
/// earliest-eliminated later neighbour; redundant bags are then contracted.
pub fn decomposition_from_order(graph: &[BTreeSet<usize>], order: &[usize]) -> TreeDecomposition {
    let n = graph.len();
    if n == 0 {
        return TreeDecomposition::from_parents(0, vec![Vec::new()], vec![None]);
    }
    let mut pos = vec![0; n];
    for (i, &v) in order.iter().enumerate() {
        pos[v] = i;
    }
    let mut adj = graph.to_vec();
    let mut bags = Vec::with_capacity(n);
    let mut parent = vec![None; n];
    for (i, &v) in order.iter().enumerate() {
        let mut bag: Vec<usize> = adj[v].iter().copied().collect();
        if let Some(&next) = bag.iter().min_by_key(|&&u| pos[u]) {
            parent[i] = Some(pos[next]);
        }
        bag.push(v);
        bags.push(bag);
        eliminate(&mut adj, v);
    }
    // Disconnected components: chain their roots below the last bag.
    for p in parent.iter_mut().take(n - 1) {
        if p.is_none() {
            *p = Some(n - 1);
        }
    }
    contract(bags, parent, n - 1)
}

fn contract(mut bags: Vec<Vec<usize>>, mut parent: Vec<Option<usize>>, mut root: usize) -> TreeDecomposition {
    let mut sets: Vec<BTreeSet<usize>> = bags.iter().map(|b| b.iter().copied().collect()).collect();
    let mut alive = vec![true; bags.len()];
    loop {
        let mut changed = false;
        for c in 0..bags.len() {
            let Some(p) = parent[c].filter(|_| alive[c]) else {
                continue;
            };
            if sets[c].is_subset(&sets[p]) {
                // child absorbed into parent
                for q in parent.iter_mut() {
                    if *q == Some(c) {
                        *q = Some(p);
                    }
                }
                alive[c] = false;
                changed = true;
            } else if sets[p].is_subset(&sets[c]) {
                // parent absorbed into child: child takes the parent's place
                for (node, q) in parent.iter_mut().enumerate() {
                    if *q == Some(p) && node != c {
                        *q = Some(c);
                    }
                }
                parent[c] = parent[p];
                if root == p {
                    root = c;
                }
                alive[p] = false;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    let mut remap = vec![usize::MAX; bags.len()];
    let mut new_bags = Vec::new();
    for (i, bag) in bags.iter_mut().enumerate() {
        if alive[i] {
            remap[i] = new_bags.len();
            new_bags.push(std::mem::take(bag));
        }
    }
    sets.clear();
    let new_parent = (0..parent.len())
        .filter(|&i| alive[i])
        .map(|i| parent[i].map(|p| remap[p]))
        .collect();
    let bags = new_bags
        .into_iter()
        .map(|b| b.into_iter().map(|v| Var(v as u32)).collect())
        .collect();
    TreeDecomposition::from_parents(remap[root], bags, new_parent)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NodeKind {
    Leaf,
    Introduce(Var),
    Forget(Var),
    Join,
}

/// A nice tree decomposition: leaves plus introduce, forget and binary join
/// nodes. Leaf bags may be arbitrary.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NiceTreeDecomposition {
    pub bags: Vec<Vec<Var>>,
    pub kinds: Vec<NodeKind>,
    pub children: Vec<Vec<usize>>,
    pub root: usize,
}

impl NiceTreeDecomposition {
    pub fn width(&self) -> usize {
        self.bags.iter().map(Vec::len).max().unwrap_or(0).saturating_sub(1)
    }

    pub fn len(&self) -> usize {
        self.bags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bags.is_empty()
    }

    pub fn post_order(&self) -> Vec<usize> {
        post_order(self.root, &self.children)
    }

    /// Indices of the literals whose variables all lie in the bag of `node`.
    pub fn covered_literals(&self, node: usize, conj: &IndexedConjunct) -> Vec<usize> {
        let bag = &self.bags[node];
        conj.literals
            .iter()
            .enumerate()
            .filter(|(_, l)| l.vars.iter().all(|v| bag.contains(v)))
            .map(|(i, _)| i)
            .collect()
    }

    /// Union of the bags in the subtree rooted at `node`.
    pub fn subtree_vars(&self, node: usize) -> Vec<Var> {
        let mut vars = BTreeSet::new();
        for n in post_order(node, &self.children) {
            vars.extend(self.bags[n].iter().copied());
        }
        vars.into_iter().collect()
    }

    /// Literals whose variables all lie in the subtree rooted at `node`.
    pub fn subtree_literals(&self, node: usize, conj: &IndexedConjunct) -> Vec<usize> {
        let vars = self.subtree_vars(node);
        conj.literals
            .iter()
            .enumerate()
            .filter(|(_, l)| l.vars.iter().all(|v| vars.contains(v)))
            .map(|(i, _)| i)
            .collect()
    }

    fn push(&mut self, bag: Vec<Var>, kind: NodeKind, children: Vec<usize>) -> usize {
        self.bags.push(bag);
        self.kinds.push(kind);
        self.children.push(children);
        self.bags.len() - 1
    }
}

/// Converts a tree decomposition into nice form with the same width.
pub fn make_nice(td: &TreeDecomposition) -> NiceTreeDecomposition {
    let mut nice = NiceTreeDecomposition {
        bags: Vec::new(),
        kinds: Vec::new(),
        children: Vec::new(),
        root: 0,
    };
    let mut built: Vec<usize> = vec![usize::MAX; td.len()];
    for node in post_order(td.root, &td.children) {
        let bag = &td.bags[node];
        if td.children[node].is_empty() {
            built[node] = nice.push(bag.clone(), NodeKind::Leaf, Vec::new());
            continue;
        }
        let mut branches = Vec::new();
        for &child in &td.children[node] {
            let mut cur = built[child];
            let mut current: Vec<Var> = td.bags[child].clone();
            for &v in &td.bags[child] {
                if !bag.contains(&v) {
                    current.retain(|&w| w != v);
                    cur = nice.push(current.clone(), NodeKind::Forget(v), vec![cur]);
                }
            }
            for &v in bag {
                if !current.contains(&v) {
                    current.push(v);
                    current.sort();
                    cur = nice.push(current.clone(), NodeKind::Introduce(v), vec![cur]);
                }
            }
            branches.push(cur);
        }
        let mut acc = branches[0];
        for &b in &branches[1..] {
            acc = nice.push(bag.clone(), NodeKind::Join, vec![acc, b]);
        }
        built[node] = acc;
    }
    nice.root = built[td.root];
    nice
}

/// The first violated structural condition found by a validator.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Violation {
    NotATree(String),
    /// The labeling is not a bijection onto the atoms.
    Bijection { atom: usize, occurrences: usize },
    /// Nodes containing `var` do not induce a connected subtree.
    Connectedness { var: Var },
    /// No bag covers the variables of `literal`.
    Coverage { literal: usize },
    /// A node does not satisfy the constraint of its kind.
    Kind { node: usize, message: String },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NotATree(m) => write!(f, "not a rooted tree: {m}"),
            Violation::Bijection { atom, occurrences } => {
                write!(f, "atom {atom} labels {occurrences} nodes (expected exactly 1)")
            }
            Violation::Connectedness { var } => write!(f, "occurrences of variable v{} are disconnected", var.0),
            Violation::Coverage { literal } => write!(f, "literal {literal} is not covered by any bag"),
            Violation::Kind { node, message } => write!(f, "node {node}: {message}"),
        }
    }
}

fn check_tree(root: usize, children: &[Vec<usize>]) -> Result<(), Violation> {
    let n = children.len();
    if root >= n {
        return Err(Violation::NotATree(format!("root {root} out of range")));
    }
    let mut seen = vec![false; n];
    let mut stack = vec![root];
    while let Some(v) = stack.pop() {
        if std::mem::replace(&mut seen[v], true) {
            return Err(Violation::NotATree(format!("node {v} reached twice")));
        }
        for &c in &children[v] {
            if c >= n {
                return Err(Violation::NotATree(format!("child {c} out of range")));
            }
            stack.push(c);
        }
    }
    match seen.iter().position(|s| !s) {
        Some(v) => Err(Violation::NotATree(format!("node {v} unreachable from the root"))),
        None => Ok(()),
    }
}

/// For every variable, the nodes containing it must form a connected
/// subtree: exactly one of them may have a parent outside the set.
fn check_connected(root: usize, children: &[Vec<usize>], contents: &[Vec<Var>]) -> Result<(), Violation> {
    let mut parent = vec![None; children.len()];
    for (p, cs) in children.iter().enumerate() {
        for &c in cs {
            parent[c] = Some(p);
        }
    }
    let vars: BTreeSet<Var> = contents.iter().flatten().copied().collect();
    for var in vars {
        let tops = (0..children.len())
            .filter(|&t| contents[t].contains(&var))
            .filter(|&t| parent[t].is_none_or(|p| !contents[p].contains(&var)))
            .count();
        if tops != 1 {
            return Err(Violation::Connectedness { var });
        }
    }
    let _ = root;
    Ok(())
}

pub fn validate_join_tree(jt: &JoinTree, conj: &IndexedConjunct) -> Result<(), Violation> {
    check_tree(jt.root, &jt.children)?;
    for atom in 0..conj.literals.len() {
        let occurrences = jt.label.iter().filter(|&&l| l == atom).count();
        if occurrences != 1 {
            return Err(Violation::Bijection { atom, occurrences });
        }
    }
    if let Some(&bad) = jt.label.iter().find(|&&l| l >= conj.literals.len()) {
        return Err(Violation::Bijection {
            atom: bad,
            occurrences: 1,
        });
    }
    let contents: Vec<Vec<Var>> = jt.label.iter().map(|&l| conj.literals[l].vars.clone()).collect();
    check_connected(jt.root, &jt.children, &contents)
}

pub fn validate_tree_decomposition(td: &TreeDecomposition, conj: &IndexedConjunct) -> Result<(), Violation> {
    check_tree(td.root, &td.children)?;
    check_coverage(&td.bags, conj)?;
    check_connected(td.root, &td.children, &td.bags)
}

fn check_coverage(bags: &[Vec<Var>], conj: &IndexedConjunct) -> Result<(), Violation> {
    for (i, lit) in conj.literals.iter().enumerate() {
        if !bags.iter().any(|b| lit.vars.iter().all(|v| b.contains(v))) {
            return Err(Violation::Coverage { literal: i });
        }
    }
    // variables outside every literal still need a bag
    for v in 0..conj.num_vars() as u32 {
        if !bags.iter().any(|b| b.contains(&Var(v))) {
            return Err(Violation::Connectedness { var: Var(v) });
        }
    }
    Ok(())
}

pub fn validate_nice(ntd: &NiceTreeDecomposition, conj: &IndexedConjunct) -> Result<(), Violation> {
    check_tree(ntd.root, &ntd.children)?;
    check_coverage(&ntd.bags, conj)?;
    check_connected(ntd.root, &ntd.children, &ntd.bags)?;
    for node in 0..ntd.len() {
        let bag = &ntd.bags[node];
        let kids = &ntd.children[node];
        let fail = |message: &str| {
            Err(Violation::Kind {
                node,
                message: message.to_string(),
            })
        };
        match ntd.kinds[node] {
            NodeKind::Leaf if !kids.is_empty() => return fail("leaf with children"),
            NodeKind::Leaf => {}
            NodeKind::Introduce(z) => {
                if kids.len() != 1 {
                    return fail("introduce node needs one child");
                }
                let child = &ntd.bags[kids[0]];
                let mut expected = child.clone();
                expected.push(z);
                expected.sort();
                if child.contains(&z) || expected != *bag {
                    return fail("introduce bag is not child bag plus the variable");
                }
            }
            NodeKind::Forget(z) => {
                if kids.len() != 1 {
                    return fail("forget node needs one child");
                }
                let mut expected = bag.clone();
                expected.push(z);
                expected.sort();
                if bag.contains(&z) || expected != ntd.bags[kids[0]] {
                    return fail("forget bag is not child bag minus the variable");
                }
            }
            NodeKind::Join => {
                if kids.len() != 2 {
                    return fail("join node needs two children");
                }
                if ntd.bags[kids[0]] != *bag || ntd.bags[kids[1]] != *bag {
                    return fail("join children bags differ from the join bag");
                }
            }
        }
    }
    Ok(())
}

/// Either structure accepted by [`validate_decomposition`].
pub enum Decomposition<'a> {
    Join(&'a JoinTree),
    Nice(&'a NiceTreeDecomposition),
}

pub fn validate_decomposition(structure: Decomposition<'_>, conj: &IndexedConjunct) -> Result<(), Violation> {
    match structure {
        Decomposition::Join(jt) => validate_join_tree(jt, conj),
        Decomposition::Nice(ntd) => validate_nice(ntd, conj),
    }
}
