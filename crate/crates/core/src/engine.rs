//! Routing of a request to the right solver and JSON rendering of results.

use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use serde_json::{json, Map, Value as Json};

use crate::acq::{solve_acq, solve_acq_sum, solve_acq_sum_dup};
use crate::cqneg::solve_cqneg;
use crate::error::{Error, Result};
use crate::io::parse_decomposition;
use crate::kernel::{materialize_answers, solve_fo_diverse, AnswerRelation};
use crate::model::{Aggregator, Database, Payload, Score};
use crate::oracle::{as_assignments, bruteforce_diversity};
use crate::outcome::{Outcome, SolveOptions, Stats, Target};
use crate::query::{Query, QueryKind};
use crate::structure::{join_tree_for, gyo_join_tree};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Auto,
    Acq,
    AcqSum,
    CqNeg,
    FoKernel,
    Bruteforce,
}

impl Mode {
    pub const ALL: [Mode; 6] = [
        Mode::Auto,
        Mode::Acq,
        Mode::AcqSum,
        Mode::CqNeg,
        Mode::FoKernel,
        Mode::Bruteforce,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Mode::Auto => "auto",
            Mode::Acq => "acq",
            Mode::AcqSum => "acq-sum",
            Mode::CqNeg => "cqneg",
            Mode::FoKernel => "fo-kernel",
            Mode::Bruteforce => "bruteforce",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Mode> {
        Mode::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown mode {s}")))
    }
}

/// The data a request is evaluated over.
pub enum Input<'a> {
    Query { db: &'a Database, query: &'a Query },
    /// Precomputed answers; values are resolved through `db`.
    Answers { db: &'a Database, answers: &'a AnswerRelation },
}

impl Input<'_> {
    pub fn db(&self) -> &Database {
        match self {
            Input::Query { db, .. } | Input::Answers { db, .. } => db,
        }
    }

    fn columns(&self) -> Vec<String> {
        match self {
            Input::Query { query, .. } => query.free.clone(),
            Input::Answers { answers, .. } => answers.columns.clone(),
        }
    }
}

pub struct Request<'a> {
    pub input: Input<'a>,
    pub k: usize,
    pub target: Target,
    pub aggregator: Aggregator,
    pub mode: Mode,
    pub options: SolveOptions,
    /// Tree decomposition in text form, used by the negation-aware solver.
    pub decomposition: Option<&'a str>,
}

#[derive(Clone, Debug)]
pub struct Report {
    /// Solver that produced the outcome, e.g. `acq-sum`.
    pub routing: String,
    pub outcome: Outcome,
    pub columns: Vec<String>,
    pub elapsed: Duration,
}

/// Solver picked for a query under `mode`.
pub fn route(query: &Query, mode: Mode, aggregator: &Aggregator, allow_duplicates: bool) -> Result<&'static str> {
    let sum = matches!(aggregator, Aggregator::Sum);
    let acyclic_positive = || -> Result<()> {
        match query.kind() {
            QueryKind::Ucq => Err(Error::UnsupportedQuery("unions need --mode fo-kernel or bruteforce".into())),
            QueryKind::CqNeg => Err(Error::UnsupportedQuery("negated atoms need --mode cqneg".into())),
            QueryKind::Cq => join_tree_for(&query.single()?).map(|_| ()),
        }
    };
    let sum_variant = || if allow_duplicates { "acq-sum-dup" } else { "acq-sum" };
    Ok(match mode {
        Mode::Auto => match query.kind() {
            QueryKind::Ucq => "fo-kernel",
            QueryKind::CqNeg => "cqneg",
            QueryKind::Cq => {
                let conj = query.single()?;
                let edges: Vec<_> = conj.literals.iter().map(|l| l.vars.clone()).collect();
                match gyo_join_tree(&edges) {
                    None => "fo-kernel",
                    Some(_) if sum => sum_variant(),
                    Some(_) => "acq",
                }
            }
        },
        Mode::Acq => {
            acyclic_positive()?;
            "acq"
        }
        Mode::AcqSum => {
            if !sum {
                return Err(Error::InvalidArgument("acq-sum requires the sum aggregator".into()));
            }
            acyclic_positive()?;
            sum_variant()
        }
        Mode::CqNeg => {
            query.single()?;
            "cqneg"
        }
        Mode::FoKernel => "fo-kernel",
        Mode::Bruteforce => "bruteforce",
    })
}

/// Exhaustive search over the materialized answers.
pub fn solve_bruteforce(
    answers: &AnswerRelation,
    k: usize,
    f: &Aggregator,
    target: Target,
    opts: &SolveOptions,
) -> Result<Outcome> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    let stats = Stats {
        answers: Some(answers.len()),
        ..Stats::default()
    };
    let best = bruteforce_diversity(&answers.rows, k, f, opts.allow_duplicates, opts.budget)?;
    match best {
        Some((score, set)) if target.accepts(&score) => {
            let all = as_assignments(&answers.rows);
            Ok(Outcome {
                decision: true,
                diversity: Some(score),
                witness: opts.witness.then(|| set.iter().map(|&i| all[i].clone()).collect()),
                stats,
            })
        }
        _ => Ok(Outcome::negative(stats)),
    }
}

pub fn run(req: &Request<'_>) -> Result<Report> {
    if req.k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    let start = Instant::now();
    let (routing, outcome) = match &req.input {
        Input::Answers { answers, .. } => {
            let routing = match req.mode {
                Mode::Auto | Mode::FoKernel => "fo-kernel",
                Mode::Bruteforce => "bruteforce",
                other => {
                    return Err(Error::UnsupportedQuery(format!(
                        "mode {other} needs a query, not an answer relation"
                    )))
                }
            };
            (routing, solve_answers(routing, answers, req)?)
        }
        Input::Query { db, query } => {
            let routing = route(query, req.mode, &req.aggregator, req.options.allow_duplicates)?;
            let (f, target, opts) = (&req.aggregator, req.target, &req.options);
            let outcome = match routing {
                "acq" => solve_acq(&query.single()?, db, req.k, f, target, opts)?,
                "acq-sum" => solve_acq_sum(&query.single()?, db, req.k, target, opts)?,
                "acq-sum-dup" => solve_acq_sum_dup(&query.single()?, db, req.k, target, opts)?,
                "cqneg" => {
                    let conj = query.single()?;
                    let td = req.decomposition.map(|text| parse_decomposition(text, &conj)).transpose()?;
                    solve_cqneg(&conj, db, req.k, f, target, td.as_ref(), opts)?
                }
                _ => solve_answers(routing, &materialize_answers(query, db)?, req)?,
            };
            (routing, outcome)
        }
    };
    Ok(Report {
        routing: routing.to_string(),
        outcome,
        columns: req.input.columns(),
        elapsed: start.elapsed(),
    })
}

fn solve_answers(routing: &str, answers: &AnswerRelation, req: &Request<'_>) -> Result<Outcome> {
    if routing == "bruteforce" {
        solve_bruteforce(answers, req.k, &req.aggregator, req.target, &req.options)
    } else {
        solve_fo_diverse(answers, req.k, &req.aggregator, req.target, &req.options)
    }
}

/// JSON form of a score: integers as numbers, the unbounded score as
/// `"inf"`, other rationals as `"p/q"` strings.
pub fn score_json(score: &Score) -> Json {
    match score.as_integer() {
        Some(n) => json!(n),
        None => json!(score.to_string()),
    }
}

pub fn payload_json(p: &Payload) -> Json {
    match p {
        Payload::Int(n) => json!(n),
        Payload::Str(s) => json!(s),
    }
}

fn big(n: u128) -> Json {
    match u64::try_from(n) {
        Ok(n) => json!(n),
        Err(_) => json!(n.to_string()),
    }
}

/// Renders a report; `timing` controls whether wall time is included.
pub fn report_json(report: &Report, db: &Database, timing: bool) -> Json {
    let out = &report.outcome;
    let witness = out.witness.as_ref().map(|answers| {
        answers
            .iter()
            .map(|a| {
                let obj: Map<String, Json> = a
                    .iter()
                    .map(|(v, x)| (report.columns[v.0 as usize].clone(), payload_json(db.payload(x))))
                    .collect();
                Json::Object(obj)
            })
            .collect::<Vec<_>>()
    });
    let mut stats = Map::new();
    if let Some(n) = out.stats.answers {
        stats.insert("answers".into(), json!(n));
    }
    if let Some(n) = out.stats.kernel_size {
        stats.insert("kernel_size".into(), json!(n));
    }
    if let Some(n) = out.stats.candidates {
        stats.insert("candidates".into(), big(n));
    }
    if !out.stats.nodes.is_empty() {
        stats.insert(
            "max_table".into(),
            json!(out.stats.nodes.iter().map(|n| n.entries).max().unwrap_or(0)),
        );
        let tables: Vec<Json> = out
            .stats
            .nodes
            .iter()
            .map(|n| json!({"node": n.node, "entries": n.entries, "bound": big(n.bound)}))
            .collect();
        stats.insert("tables".into(), Json::Array(tables));
    }
    if timing {
        stats.insert("time_ms".into(), json!(report.elapsed.as_secs_f64() * 1000.0));
    }
    json!({
        "decision": if out.decision { "yes" } else { "no" },
        "diversity": out.diversity.as_ref().map(score_json),
        "witness": witness,
        "routing": report.routing,
        "stats": stats,
    })
}

pub fn error_json(err: &Error) -> Json {
    json!({"error": {"code": err.code(), "message": err.to_string()}})
}
