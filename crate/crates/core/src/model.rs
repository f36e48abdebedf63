//! Domain values, relations, database instances, partial assignments and the
//! Hamming-distance based diversity measures built on top of them.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::sync::Arc;

use indexmap::IndexSet;
use num_rational::Rational64;

use crate::error::{Error, Result};

/// The external representation of a domain constant.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Payload {
    Int(i64),
    Str(String),
}

impl Payload {
    /// Integers as digits, strings double-quoted with `\"` and `\\` escapes.
    pub fn quoted(&self) -> String {
        match self {
            Payload::Int(n) => n.to_string(),
            Payload::Str(s) => {
                let mut out = String::with_capacity(s.len() + 2);
                out.push('"');
                for c in s.chars() {
                    if c == '"' || c == '\\' {
                        out.push('\\');
                    }
                    out.push(c);
                }
                out.push('"');
                out
            }
        }
    }

    /// Integers when the text parses as one, strings otherwise.
    pub fn from_field(text: &str) -> Payload {
        match text.parse::<i64>() {
            Ok(n) => Payload::Int(n),
            Err(_) => Payload::Str(text.to_string()),
        }
    }
}

impl fmt::Display for Payload {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Payload::Int(n) => write!(f, "{n}"),
            Payload::Str(s) => f.write_str(s),
        }
    }
}

impl From<i64> for Payload {
    fn from(n: i64) -> Self {
        Payload::Int(n)
    }
}

impl From<&str> for Payload {
    fn from(s: &str) -> Self {
        Payload::Str(s.to_string())
    }
}

/// An interned domain constant. Ordering follows interning (load) order.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Value(pub u32);

/// Canonical interning table for payloads.
#[derive(Clone, Debug, Default)]
pub struct Dictionary {
    payloads: Vec<Payload>,
    index: HashMap<Payload, Value>,
}

impl Dictionary {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn intern(&mut self, payload: Payload) -> Value {
        if let Some(&v) = self.index.get(&payload) {
            return v;
        }
        let v = Value(self.payloads.len() as u32);
        self.payloads.push(payload.clone());
        self.index.insert(payload, v);
        v
    }

    pub fn lookup(&self, payload: &Payload) -> Option<Value> {
        self.index.get(payload).copied()
    }

    pub fn payload(&self, value: Value) -> &Payload {
        &self.payloads[value.0 as usize]
    }

    pub fn len(&self) -> usize {
        self.payloads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.payloads.is_empty()
    }

    pub fn values(&self) -> impl Iterator<Item = Value> + '_ {
        (0..self.payloads.len() as u32).map(Value)
    }
}

/// A named relation: a duplicate-free set of rows of a fixed arity, kept in
/// insertion order.
#[derive(Clone, Debug)]
pub struct Relation {
    name: String,
    arity: usize,
    rows: IndexSet<Box<[Value]>>,
}

impl Relation {
    pub fn new(name: impl Into<String>, arity: usize) -> Self {
        Relation {
            name: name.into(),
            arity,
            rows: IndexSet::new(),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    /// Returns `false` if the row was already present.
    pub fn insert(&mut self, row: Vec<Value>) -> Result<bool> {
        if row.len() != self.arity {
            return Err(Error::ArityMismatch {
                relation: self.name.clone(),
                expected: self.arity,
                found: row.len(),
            });
        }
        Ok(self.rows.insert(row.into_boxed_slice()))
    }

    pub fn contains(&self, row: &[Value]) -> bool {
        self.rows.contains(row)
    }

    pub fn rows(&self) -> impl Iterator<Item = &[Value]> {
        self.rows.iter().map(|r| &r[..])
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// A database instance. Only values occurring in some row are ever interned,
/// so the dictionary is exactly the active domain.
#[derive(Clone, Debug, Default)]
pub struct Database {
    dict: Dictionary,
    relations: BTreeMap<String, Relation>,
}

impl Database {
    pub fn new() -> Self {
        Self::default()
    }

    /// Declares a (possibly empty) relation.
    pub fn declare(&mut self, name: &str, arity: usize) -> Result<()> {
        match self.relations.get(name) {
            Some(rel) if rel.arity() != arity => Err(Error::ArityMismatch {
                relation: name.to_string(),
                expected: rel.arity(),
                found: arity,
            }),
            Some(_) => Ok(()),
            None => {
                self.relations
                    .insert(name.to_string(), Relation::new(name, arity));
                Ok(())
            }
        }
    }

    pub fn insert_fact(&mut self, name: &str, row: Vec<Payload>) -> Result<()> {
        self.declare(name, row.len())?;
        let values: Vec<Value> = row.into_iter().map(|p| self.dict.intern(p)).collect();
        self.relations
            .get_mut(name)
            .expect("declared above")
            .insert(values)?;
        Ok(())
    }

    pub fn relation(&self, name: &str) -> Option<&Relation> {
        self.relations.get(name)
    }

    pub fn relations(&self) -> impl Iterator<Item = &Relation> {
        self.relations.values()
    }

    pub fn dict(&self) -> &Dictionary {
        &self.dict
    }

    /// The active domain in load order.
    pub fn domain(&self) -> Vec<Value> {
        self.dict.values().collect()
    }

    pub fn payload(&self, value: Value) -> &Payload {
        self.dict.payload(value)
    }

    /// Size of the largest relation.
    pub fn max_relation_size(&self) -> usize {
        self.relations.values().map(Relation::len).max().unwrap_or(0)
    }

    fn payload_rows(&self) -> BTreeMap<&str, (usize, BTreeSet<Vec<&Payload>>)> {
        self.relations
            .iter()
            .map(|(name, rel)| {
                let rows = rel
                    .rows()
                    .map(|r| r.iter().map(|&v| self.dict.payload(v)).collect())
                    .collect();
                (name.as_str(), (rel.arity(), rows))
            })
            .collect()
    }
}

/// Two databases are equal when they hold the same relations over the same
/// payloads, irrespective of interning order.
impl PartialEq for Database {
    fn eq(&self, other: &Self) -> bool {
        self.payload_rows() == other.payload_rows()
    }
}

/// A query variable, identified by its index in the query's variable table.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(pub u32);

/// A finite partial mapping from variables to domain values.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Assignment(BTreeMap<Var, Value>);

impl Assignment {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_pairs(pairs: impl IntoIterator<Item = (Var, Value)>) -> Result<Self> {
        let mut a = Assignment::new();
        for (var, value) in pairs {
            a.bind(var, value)?;
        }
        Ok(a)
    }

    /// Binds `var`. Rebinding to the same value is a no-op, to a different
    /// one an error.
    pub fn bind(&mut self, var: Var, value: Value) -> Result<()> {
        match self.0.insert(var, value) {
            Some(old) if old != value => {
                self.0.insert(var, old);
                Err(Error::IncompatibleAssignments(format!("v{}", var.0)))
            }
            _ => Ok(()),
        }
    }

    pub fn get(&self, var: Var) -> Option<Value> {
        self.0.get(&var).copied()
    }

    pub fn contains(&self, var: Var) -> bool {
        self.0.contains_key(&var)
    }

    pub fn domain(&self) -> impl Iterator<Item = Var> + '_ {
        self.0.keys().copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (Var, Value)> + '_ {
        self.0.iter().map(|(&k, &v)| (k, v))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Restriction to the given variables (unbound ones are skipped).
    pub fn restrict(&self, vars: &[Var]) -> Assignment {
        Assignment(
            vars.iter()
                .filter_map(|&v| self.get(v).map(|val| (v, val)))
                .collect(),
        )
    }

    /// Restriction to variables satisfying `keep`.
    pub fn restrict_by(&self, keep: impl Fn(Var) -> bool) -> Assignment {
        Assignment(
            self.0
                .iter()
                .filter(|(&k, _)| keep(k))
                .map(|(&k, &v)| (k, v))
                .collect(),
        )
    }

    /// Values of `vars` in order; `None` if one of them is unbound.
    pub fn tuple(&self, vars: &[Var]) -> Option<Vec<Value>> {
        vars.iter().map(|&v| self.get(v)).collect()
    }
}

impl FromIterator<(Var, Value)> for Assignment {
    /// Later bindings win on duplicate variables.
    fn from_iter<I: IntoIterator<Item = (Var, Value)>>(iter: I) -> Self {
        Assignment(iter.into_iter().collect())
    }
}

/// Number of variables of `vars` on which `a` and `b` differ.
pub fn delta_restricted(a: &Assignment, b: &Assignment, vars: &[Var]) -> Result<u32> {
    let mut count = 0;
    for &x in vars {
        match (a.get(x), b.get(x)) {
            (Some(u), Some(v)) => count += u32::from(u != v),
            _ => return Err(Error::UnboundVariable(format!("v{}", x.0))),
        }
    }
    Ok(count)
}

/// True iff `a` and `b` agree on every variable bound by both.
pub fn compatible(a: &Assignment, b: &Assignment) -> bool {
    let (small, large) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    small
        .iter()
        .all(|(var, val)| large.get(var).is_none_or(|w| w == val))
}

/// Union of two compatible assignments.
pub fn merge(a: &Assignment, b: &Assignment) -> Result<Assignment> {
    let mut out = a.clone();
    for (var, val) in b.iter() {
        out.bind(var, val)?;
    }
    Ok(out)
}

/// `a` restricted to the variables bound by both.
pub fn intersect(a: &Assignment, b: &Assignment) -> Assignment {
    a.restrict_by(|v| b.contains(v))
}

/// An aggregated diversity value. `Unbounded` is the value of `min` over an
/// empty set of pairs and compares above every finite score.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Score {
    Finite(Rational64),
    Unbounded,
}

impl Score {
    pub fn int(n: i64) -> Score {
        Score::Finite(Rational64::from_integer(n))
    }

    pub fn as_integer(&self) -> Option<i64> {
        match self {
            Score::Finite(r) if r.is_integer() => Some(r.to_integer()),
            _ => None,
        }
    }
}

impl fmt::Display for Score {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Score::Finite(r) => write!(f, "{r}"),
            Score::Unbounded => f.write_str("inf"),
        }
    }
}

pub type AggregateFn = dyn Fn(&[u32]) -> Rational64 + Send + Sync;

/// A user-supplied aggregate over the sorted multiset of pairwise distances.
#[derive(Clone)]
pub struct CustomAggregator {
    name: String,
    monotone: bool,
    func: Arc<AggregateFn>,
}

impl fmt::Debug for CustomAggregator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomAggregator")
            .field("name", &self.name)
            .field("monotone", &self.monotone)
            .finish()
    }
}

#[derive(Clone, Debug)]
pub enum Aggregator {
    Sum,
    Min,
    Custom(CustomAggregator),
}

impl Aggregator {
    pub fn custom(
        name: impl Into<String>,
        monotone: bool,
        func: impl Fn(&[u32]) -> Rational64 + Send + Sync + 'static,
    ) -> Aggregator {
        Aggregator::Custom(CustomAggregator {
            name: name.into(),
            monotone,
            func: Arc::new(func),
        })
    }

    pub fn name(&self) -> &str {
        match self {
            Aggregator::Sum => "sum",
            Aggregator::Min => "min",
            Aggregator::Custom(c) => &c.name,
        }
    }

    pub fn is_monotone(&self) -> bool {
        match self {
            Aggregator::Sum | Aggregator::Min => true,
            Aggregator::Custom(c) => c.monotone,
        }
    }

    /// Evaluates the aggregate. The input order is irrelevant: custom
    /// functions always see the distances sorted ascending.
    pub fn evaluate(&self, distances: &[u32]) -> Score {
        match self {
            Aggregator::Sum => Score::int(distances.iter().map(|&d| i64::from(d)).sum()),
            Aggregator::Min => distances
                .iter()
                .min()
                .map_or(Score::Unbounded, |&d| Score::int(i64::from(d))),
            Aggregator::Custom(c) => {
                let mut sorted = distances.to_vec();
                sorted.sort_unstable();
                Score::Finite((c.func)(&sorted))
            }
        }
    }
}

impl std::str::FromStr for Aggregator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sum" => Ok(Aggregator::Sum),
            "min" => Ok(Aggregator::Min),
            other => Err(Error::InvalidArgument(format!("unknown aggregator {other}"))),
        }
    }
}

pub fn aggregate(f: &Aggregator, distances: &[u32]) -> Score {
    f.evaluate(distances)
}

/// Number of unordered pairs among `k` items.
pub fn pair_count(k: usize) -> usize {
    k * k.saturating_sub(1) / 2
}

/// All pairs `(i, j)` with `i < j < k`, in the order used for distance
/// vectors throughout the crate.
pub fn pairs(k: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..k).flat_map(move |i| (i + 1..k).map(move |j| (i, j)))
}

/// Aggregated pairwise distance of `answers` over the variables `vars`.
pub fn diversity_of_set(f: &Aggregator, answers: &[Assignment], vars: &[Var]) -> Result<Score> {
    let mut distances = Vec::with_capacity(pair_count(answers.len()));
    for (i, j) in pairs(answers.len()) {
        distances.push(delta_restricted(&answers[i], &answers[j], vars)?);
    }
    Ok(f.evaluate(&distances))
}

/// Hamming distance between equal-length tuples.
pub(crate) fn hamming(a: &[Value], b: &[Value]) -> u32 {
    a.iter().zip(b).filter(|(x, y)| x != y).count() as u32
}

/// Compares by aggregated score; used to keep the first maximum.
pub(crate) fn improves(candidate: &Score, best: Option<&Score>) -> bool {
    best.is_none_or(|b| candidate.cmp(b) == Ordering::Greater)
}
