//! Query ASTs for conjunctive queries, unions of them and conjunctive queries
//! with negation, plus the rule-syntax parser.
//!
//! ```text
//! # comment
//! Q(x, y) :- R(x, z), S(z, y), !T(y, 5).
//! Q(x, y) :- U(x, y).          # same head: the two rules form a union
//! ```
//!
//! Variables start with a lowercase letter or `_`; constants are integers or
//! double-quoted strings.

use std::collections::BTreeSet;
use std::fmt;

use crate::error::{Error, Position, Result};
use crate::model::{Assignment, Database, Payload, Relation, Value, Var};

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Term {
    Var(String),
    Const(Payload),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Atom {
    pub relation: String,
    pub terms: Vec<Term>,
}

impl Atom {
    /// Distinct variables in order of first occurrence.
    pub fn vars(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for t in &self.terms {
            if let Term::Var(v) = t {
                if !out.contains(&v.as_str()) {
                    out.push(v);
                }
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Literal {
    pub atom: Atom,
    pub positive: bool,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Conjunct {
    pub literals: Vec<Literal>,
    /// Body variables not in the head, in order of first occurrence.
    pub existential: Vec<String>,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum QueryKind {
    Cq,
    Ucq,
    CqNeg,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Query {
    pub head: String,
    pub free: Vec<String>,
    pub disjuncts: Vec<Conjunct>,
}

impl Query {
    /// Builds a query from rules sharing one head, checking every structural
    /// requirement the parser checks.
    pub fn new(head: impl Into<String>, free: Vec<String>, bodies: Vec<Vec<Literal>>) -> Result<Query> {
        let head = head.into();
        if bodies.is_empty() {
            return Err(Error::InvalidArgument("a query needs at least one rule".into()));
        }
        let mut seen = BTreeSet::new();
        for v in &free {
            if !seen.insert(v) {
                return Err(Error::InvalidArgument(format!("duplicate head variable {v}")));
            }
        }
        if bodies.len() > 1 && bodies.iter().flatten().any(|l| !l.positive) {
            return Err(Error::NegationInUnion);
        }
        let mut disjuncts = Vec::with_capacity(bodies.len());
        for literals in bodies {
            if literals.is_empty() {
                return Err(Error::InvalidArgument("empty rule body".into()));
            }
            let positive: BTreeSet<&str> = literals
                .iter()
                .filter(|l| l.positive)
                .flat_map(|l| l.atom.vars())
                .collect();
            for v in free.iter().map(String::as_str).chain(literals.iter().flat_map(|l| l.atom.vars())) {
                if !positive.contains(v) {
                    return Err(Error::UnsafeQuery(v.to_string()));
                }
            }
            let mut existential: Vec<String> = Vec::new();
            for v in literals.iter().flat_map(|l| l.atom.vars()) {
                if !free.iter().any(|f| f == v) && !existential.iter().any(|e| e == v) {
                    existential.push(v.to_string());
                }
            }
            disjuncts.push(Conjunct { literals, existential });
        }
        Ok(Query { head, free, disjuncts })
    }

    pub fn kind(&self) -> QueryKind {
        if self.disjuncts.iter().flat_map(|c| &c.literals).any(|l| !l.positive) {
            QueryKind::CqNeg
        } else if self.disjuncts.len() > 1 {
            QueryKind::Ucq
        } else {
            QueryKind::Cq
        }
    }

    pub fn has_negation(&self) -> bool {
        self.kind() == QueryKind::CqNeg
    }

    /// Free variables as indices, `Var(0)..Var(|X|)` in head order.
    pub fn free_vars(&self) -> Vec<Var> {
        (0..self.free.len() as u32).map(Var).collect()
    }

    /// The only disjunct, or an error for unions.
    pub fn single(&self) -> Result<IndexedConjunct> {
        if self.disjuncts.len() != 1 {
            return Err(Error::UnsupportedQuery(
                "expected a single rule, found a union".into(),
            ));
        }
        Ok(self.indexed(0))
    }

    /// The `i`-th disjunct with variables numbered: free variables first in
    /// head order, then existential ones.
    pub fn indexed(&self, i: usize) -> IndexedConjunct {
        let conj = &self.disjuncts[i];
        let var_names: Vec<String> = self.free.iter().chain(&conj.existential).cloned().collect();
        let index_of = |name: &str| Var(var_names.iter().position(|n| n == name).expect("indexed variable") as u32);
        let literals = conj
            .literals
            .iter()
            .map(|l| {
                let terms: Vec<ITerm> = l
                    .atom
                    .terms
                    .iter()
                    .map(|t| match t {
                        Term::Var(v) => ITerm::Var(index_of(v)),
                        Term::Const(p) => ITerm::Const(p.clone()),
                    })
                    .collect();
                let vars = l.atom.vars().into_iter().map(index_of).collect();
                IndexedLiteral {
                    relation: l.atom.relation.clone(),
                    terms,
                    positive: l.positive,
                    vars,
                }
            })
            .collect();
        IndexedConjunct {
            num_free: self.free.len(),
            var_names,
            literals,
        }
    }
}

fn write_term(f: &mut fmt::Formatter<'_>, t: &Term) -> fmt::Result {
    match t {
        Term::Var(v) => f.write_str(v),
        Term::Const(p) => f.write_str(&p.quoted()),
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}(", self.relation)?;
        for (i, t) in self.terms.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write_term(f, t)?;
        }
        f.write_str(")")
    }
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if !self.positive {
            f.write_str("!")?;
        }
        write!(f, "{}", self.atom)
    }
}

impl fmt::Display for Query {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for conj in &self.disjuncts {
            write!(f, "{}({}) :- ", self.head, self.free.join(", "))?;
            for (i, l) in conj.literals.iter().enumerate() {
                if i > 0 {
                    f.write_str(", ")?;
                }
                write!(f, "{l}")?;
            }
            f.write_str(".\n")?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum ITerm {
    Var(Var),
    Const(Payload),
}

/// A literal over indexed variables.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IndexedLiteral {
    pub relation: String,
    pub terms: Vec<ITerm>,
    pub positive: bool,
    /// Distinct variables in order of first occurrence.
    pub vars: Vec<Var>,
}

/// One rule body with variables numbered; `Var(i)` is free iff `i < num_free`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IndexedConjunct {
    pub num_free: usize,
    pub var_names: Vec<String>,
    pub literals: Vec<IndexedLiteral>,
}

impl IndexedConjunct {
    pub fn num_vars(&self) -> usize {
        self.var_names.len()
    }

    pub fn free_vars(&self) -> Vec<Var> {
        (0..self.num_free as u32).map(Var).collect()
    }

    pub fn is_free(&self, v: Var) -> bool {
        (v.0 as usize) < self.num_free
    }

    pub fn is_positive(&self) -> bool {
        self.literals.iter().all(|l| l.positive)
    }

    /// Resolves relations and constants against `db`.
    pub fn bind<'db>(&self, db: &'db Database) -> Result<BoundConjunct<'db>> {
        let literals = self
            .literals
            .iter()
            .map(|l| BoundLiteral::new(l, db))
            .collect::<Result<Vec<_>>>()?;
        Ok(BoundConjunct {
            num_free: self.num_free,
            num_vars: self.num_vars(),
            literals,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BoundTerm {
    Var(Var),
    /// `None` when the constant does not occur in the database.
    Const(Option<Value>),
}

#[derive(Clone, Debug)]
pub struct BoundLiteral<'db> {
    pub relation: &'db Relation,
    pub terms: Vec<BoundTerm>,
    pub positive: bool,
    pub vars: Vec<Var>,
}

impl<'db> BoundLiteral<'db> {
    fn new(lit: &IndexedLiteral, db: &'db Database) -> Result<Self> {
        let relation = db
            .relation(&lit.relation)
            .ok_or_else(|| Error::UnknownRelation(lit.relation.clone()))?;
        if relation.arity() != lit.terms.len() {
            return Err(Error::ArityMismatch {
                relation: lit.relation.clone(),
                expected: relation.arity(),
                found: lit.terms.len(),
            });
        }
        let terms = lit
            .terms
            .iter()
            .map(|t| match t {
                ITerm::Var(v) => BoundTerm::Var(*v),
                ITerm::Const(p) => BoundTerm::Const(db.dict().lookup(p)),
            })
            .collect();
        Ok(BoundLiteral {
            relation,
            terms,
            positive: lit.positive,
            vars: lit.vars.clone(),
        })
    }

    /// Whether the literal holds under `lookup`, which must bind every
    /// variable of the literal.
    pub fn holds(&self, lookup: impl Fn(Var) -> Value) -> bool {
        let mut row = Vec::with_capacity(self.terms.len());
        for t in &self.terms {
            match *t {
                BoundTerm::Var(v) => row.push(lookup(v)),
                BoundTerm::Const(Some(c)) => row.push(c),
                BoundTerm::Const(None) => return !self.positive,
            }
        }
        self.relation.contains(&row) == self.positive
    }

    /// Matches of the atom (ignoring polarity) as value tuples aligned with
    /// `self.vars`, in relation order.
    pub fn solutions(&self) -> Vec<Vec<Value>> {
        let mut out = Vec::new();
        if self.terms.iter().any(|t| matches!(t, BoundTerm::Const(None))) {
            return out;
        }
        'rows: for row in self.relation.rows() {
            let mut binding: Vec<Option<Value>> = vec![None; self.vars.len()];
            for (t, &val) in self.terms.iter().zip(row) {
                match *t {
                    BoundTerm::Const(Some(c)) => {
                        if c != val {
                            continue 'rows;
                        }
                    }
                    BoundTerm::Var(v) => {
                        let slot = &mut binding[self.vars.iter().position(|&w| w == v).expect("literal var")];
                        match slot {
                            Some(prev) if *prev != val => continue 'rows,
                            _ => *slot = Some(val),
                        }
                    }
                    BoundTerm::Const(None) => unreachable!(),
                }
            }
            let tuple: Vec<Value> = binding.into_iter().map(|b| b.expect("every var bound")).collect();
            if !out.contains(&tuple) {
                out.push(tuple);
            }
        }
        out
    }
}

#[derive(Clone, Debug)]
pub struct BoundConjunct<'db> {
    pub num_free: usize,
    pub num_vars: usize,
    pub literals: Vec<BoundLiteral<'db>>,
}

/// `sols(A, I)`: every assignment of the atom's variables that maps the atom
/// onto a row. Variables are numbered by first occurrence in the atom.
pub fn sols_atom(atom: &Atom, db: &Database) -> Result<Vec<Assignment>> {
    let q = Query {
        head: "_".into(),
        free: Vec::new(),
        disjuncts: vec![Conjunct {
            literals: vec![Literal {
                atom: atom.clone(),
                positive: true,
            }],
            existential: atom.vars().into_iter().map(str::to_string).collect(),
        }],
    };
    let indexed = q.indexed(0);
    let bound = indexed.bind(db)?;
    let lit = &bound.literals[0];
    Ok(lit
        .solutions()
        .into_iter()
        .map(|t| lit.vars.iter().copied().zip(t).collect())
        .collect())
}

// ---------------------------------------------------------------------------
// Parser

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Ident(String),
    Int(i64),
    Str(String),
    LParen,
    RParen,
    Comma,
    Dot,
    Turnstile,
    Bang,
    Slash,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Ident(s) => write!(f, "identifier `{s}`"),
            Tok::Int(n) => write!(f, "integer {n}"),
            Tok::Str(s) => write!(f, "string \"{s}\""),
            Tok::LParen => f.write_str("`(`"),
            Tok::RParen => f.write_str("`)`"),
            Tok::Comma => f.write_str("`,`"),
            Tok::Dot => f.write_str("`.`"),
            Tok::Turnstile => f.write_str("`:-`"),
            Tok::Bang => f.write_str("`!`"),
            Tok::Slash => f.write_str("`/`"),
        }
    }
}

fn syntax(pos: Position, message: impl Into<String>) -> Error {
    Error::Syntax {
        pos,
        message: message.into(),
    }
}

fn tokenize(text: &str) -> Result<Vec<(Tok, Position)>> {
    let mut toks = Vec::new();
    let mut chars = text.chars().peekable();
    let (mut line, mut column) = (1usize, 1usize);
    macro_rules! bump {
        () => {{
            let c = chars.next();
            if c == Some('\n') {
                line += 1;
                column = 1;
            } else if c.is_some() {
                column += 1;
            }
            c
        }};
    }
    while let Some(&c) = chars.peek() {
        let pos = Position { line, column };
        match c {
            '#' => {
                while let Some(&c) = chars.peek() {
                    if c == '\n' {
                        break;
                    }
                    bump!();
                }
            }
            c if c.is_whitespace() => {
                bump!();
            }
            '(' | ')' | ',' | '.' | '!' | '/' => {
                bump!();
                toks.push((
                    match c {
                        '(' => Tok::LParen,
                        ')' => Tok::RParen,
                        ',' => Tok::Comma,
                        '.' => Tok::Dot,
                        '!' => Tok::Bang,
                        _ => Tok::Slash,
                    },
                    pos,
                ));
            }
            ':' => {
                bump!();
                if chars.peek() == Some(&'-') {
                    bump!();
                    toks.push((Tok::Turnstile, pos));
                } else {
                    return Err(syntax(pos, "expected `:-`"));
                }
            }
            '"' => {
                bump!();
                let mut s = String::new();
                loop {
                    match bump!() {
                        Some('"') => break,
                        Some('\\') => match bump!() {
                            Some(e) => s.push(e),
                            None => return Err(syntax(pos, "unterminated string")),
                        },
                        Some(ch) => s.push(ch),
                        None => return Err(syntax(pos, "unterminated string")),
                    }
                }
                toks.push((Tok::Str(s), pos));
            }
            c if c.is_ascii_digit() || c == '-' => {
                let mut s = String::new();
                s.push(c);
                bump!();
                while let Some(&d) = chars.peek() {
                    if d.is_ascii_digit() {
                        s.push(d);
                        bump!();
                    } else {
                        break;
                    }
                }
                let n = s
                    .parse::<i64>()
                    .map_err(|_| syntax(pos, format!("invalid integer `{s}`")))?;
                toks.push((Tok::Int(n), pos));
            }
            c if c.is_alphabetic() || c == '_' => {
                let mut s = String::new();
                while let Some(&d) = chars.peek() {
                    if d.is_alphanumeric() || d == '_' {
                        s.push(d);
                        bump!();
                    } else {
                        break;
                    }
                }
                toks.push((Tok::Ident(s), pos));
            }
            other => return Err(syntax(pos, format!("unexpected character `{other}`"))),
        }
    }
    Ok(toks)
}

pub(crate) fn is_variable_name(s: &str) -> bool {
    s.chars().next().is_some_and(|c| c.is_lowercase() || c == '_')
}

struct Parser {
    toks: Vec<(Tok, Position)>,
    pos: usize,
    end: Position,
}

impl Parser {
    fn new(text: &str) -> Result<Parser> {
        let toks = tokenize(text)?;
        let lines = text.split('\n').count();
        let last = text.rsplit('\n').next().map_or(0, |l| l.chars().count());
        Ok(Parser {
            toks,
            pos: 0,
            end: Position {
                line: lines,
                column: last + 1,
            },
        })
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(t, _)| t)
    }

    fn here(&self) -> Position {
        self.toks.get(self.pos).map_or(self.end, |(_, p)| *p)
    }

    fn next(&mut self) -> Option<(Tok, Position)> {
        let t = self.toks.get(self.pos).cloned();
        self.pos += 1;
        t
    }

    fn at_end(&self) -> bool {
        self.pos >= self.toks.len()
    }

    fn expect(&mut self, want: Tok) -> Result<()> {
        let pos = self.here();
        match self.next() {
            Some((t, _)) if t == want => Ok(()),
            Some((t, _)) => Err(syntax(pos, format!("expected {want}, found {t}"))),
            None => Err(syntax(pos, format!("expected {want}, found end of input"))),
        }
    }

    fn ident(&mut self) -> Result<String> {
        let pos = self.here();
        match self.next() {
            Some((Tok::Ident(s), _)) => Ok(s),
            Some((t, _)) => Err(syntax(pos, format!("expected identifier, found {t}"))),
            None => Err(syntax(pos, "expected identifier, found end of input")),
        }
    }

    fn term(&mut self, allow_bare_constants: bool) -> Result<Term> {
        let pos = self.here();
        match self.next() {
            Some((Tok::Ident(s), _)) if is_variable_name(&s) && !allow_bare_constants => Ok(Term::Var(s)),
            Some((Tok::Ident(s), _)) if allow_bare_constants => Ok(Term::Const(Payload::Str(s))),
            Some((Tok::Ident(s), _)) => Err(syntax(
                pos,
                format!("`{s}` is neither a variable (lowercase initial) nor a constant"),
            )),
            Some((Tok::Int(n), _)) => Ok(Term::Const(Payload::Int(n))),
            Some((Tok::Str(s), _)) => Ok(Term::Const(Payload::Str(s))),
            Some((t, _)) => Err(syntax(pos, format!("expected a term, found {t}"))),
            None => Err(syntax(pos, "expected a term, found end of input")),
        }
    }

    fn term_list(&mut self, allow_bare_constants: bool) -> Result<Vec<Term>> {
        self.expect(Tok::LParen)?;
        let mut terms = Vec::new();
        if self.peek() == Some(&Tok::RParen) {
            self.next();
            return Ok(terms);
        }
        loop {
            terms.push(self.term(allow_bare_constants)?);
            let pos = self.here();
            match self.next() {
                Some((Tok::Comma, _)) => continue,
                Some((Tok::RParen, _)) => return Ok(terms),
                Some((t, _)) => return Err(syntax(pos, format!("expected `,` or `)`, found {t}"))),
                None => return Err(syntax(pos, "unclosed `(`")),
            }
        }
    }

    fn literal(&mut self) -> Result<Literal> {
        let positive = if self.peek() == Some(&Tok::Bang) {
            self.next();
            false
        } else {
            true
        };
        let relation = self.ident()?;
        let terms = self.term_list(false)?;
        Ok(Literal {
            atom: Atom { relation, terms },
            positive,
        })
    }

    fn rule(&mut self) -> Result<(String, Vec<String>, Position, Vec<Literal>)> {
        let head_pos = self.here();
        let head = self.ident()?;
        let mut free = Vec::new();
        for t in self.term_list(false)? {
            match t {
                Term::Var(v) if free.contains(&v) => {
                    return Err(syntax(head_pos, format!("duplicate head variable `{v}`")))
                }
                Term::Var(v) => free.push(v),
                Term::Const(_) => return Err(syntax(head_pos, "constants are not allowed in the head")),
            }
        }
        self.expect(Tok::Turnstile)?;
        let mut body = vec![self.literal()?];
        loop {
            let pos = self.here();
            match self.next() {
                Some((Tok::Comma, _)) => body.push(self.literal()?),
                Some((Tok::Dot, _)) => break,
                Some((t, _)) => return Err(syntax(pos, format!("expected `,` or `.`, found {t}"))),
                None => return Err(syntax(pos, "rule is missing its terminating `.`")),
            }
        }
        Ok((head, free, head_pos, body))
    }
}

/// Parses one query: one or more rules with identical heads.
pub fn parse_query(text: &str) -> Result<Query> {
    let mut p = Parser::new(text)?;
    let mut rules = Vec::new();
    while !p.at_end() {
        rules.push(p.rule()?);
    }
    let Some((head, free, _, _)) = rules.first().cloned() else {
        return Err(syntax(p.end, "no rule found"));
    };
    for (h, f, pos, _) in &rules[1..] {
        if *h != head || *f != free {
            return Err(Error::MismatchedHeads(format!(
                "{pos}: {h}({}) vs {head}({})",
                f.join(","),
                free.join(",")
            )));
        }
    }
    Query::new(head, free, rules.into_iter().map(|r| r.3).collect())
}

/// A fact-file statement: either a ground fact or a relation declaration
/// `R/2.`
pub(crate) enum Statement {
    Fact(String, Vec<Payload>),
    Declare(String, usize),
}

/// Parses the fact syntax `R(1, "a", b).` (bare identifiers are strings).
pub(crate) fn parse_facts(text: &str) -> Result<Vec<Statement>> {
    let mut p = Parser::new(text)?;
    let mut out = Vec::new();
    while !p.at_end() {
        let pos = p.here();
        let name = p.ident()?;
        if p.peek() == Some(&Tok::Slash) {
            p.next();
            let apos = p.here();
            match p.next() {
                Some((Tok::Int(n), _)) if n >= 0 => out.push(Statement::Declare(name, n as usize)),
                _ => return Err(syntax(apos, "expected an arity after `/`")),
            }
        } else {
            let terms = p.term_list(true)?;
            let row = terms
                .into_iter()
                .map(|t| match t {
                    Term::Const(c) => Ok(c),
                    Term::Var(v) => Err(syntax(pos, format!("variable `{v}` in a fact"))),
                })
                .collect::<Result<Vec<_>>>()?;
            out.push(Statement::Fact(name, row));
        }
        p.expect(Tok::Dot)?;
    }
    Ok(out)
}
