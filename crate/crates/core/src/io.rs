//! File formats: fact files, per-relation CSV directories, answer CSVs and
//! a small text format for tree decompositions.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::kernel::AnswerRelation;
use crate::model::{Database, Payload, Var};
use crate::query::{parse_facts, IndexedConjunct, Statement};
use crate::structure::{TreeDecomposition, Violation};

/// Parses fact syntax: `R(1, "a", b).` per fact, `R/2.` declares a possibly
/// empty relation, `#` starts a comment.
pub fn parse_database(text: &str) -> Result<Database> {
    let mut db = Database::new();
    for stmt in parse_facts(text)? {
        match stmt {
            Statement::Fact(name, row) => db.insert_fact(&name, row)?,
            Statement::Declare(name, arity) => db.declare(&name, arity)?,
        }
    }
    Ok(db)
}

fn format_error(path: &Path, e: impl ToString) -> Error {
    Error::Format {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

/// Loads a fact file, or a directory of `R.csv` files (no header; integer
/// fields become integers, anything else a string).
pub fn load_database(path: &Path) -> Result<Database> {
    if !path.is_dir() {
        let text = fs::read_to_string(path).map_err(|e| format_error(path, e))?;
        return parse_database(&text).map_err(|e| match e {
            Error::Syntax { .. } => format_error(path, e),
            other => other,
        });
    }
    let mut files: Vec<_> = fs::read_dir(path)
        .map_err(|e| format_error(path, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .collect();
    files.sort();
    let mut db = Database::new();
    for file in files {
        let name = file
            .file_stem()
            .and_then(|s| s.to_str())
            .ok_or_else(|| format_error(&file, "relation name is not valid UTF-8"))?
            .to_string();
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .from_path(&file)
            .map_err(|e| format_error(&file, e))?;
        let mut rows = 0;
        for record in reader.records() {
            let record = record.map_err(|e| format_error(&file, e))?;
            let row = record.iter().map(|f| Payload::from_field(f.trim())).collect();
            db.insert_fact(&name, row)?;
            rows += 1;
        }
        if rows == 0 {
            return Err(format_error(&file, "cannot infer the arity of an empty CSV file"));
        }
    }
    Ok(db)
}

/// Renders a database in fact syntax. Empty relations are declared.
pub fn write_facts(db: &Database) -> String {
    let mut out = String::new();
    for rel in db.relations() {
        if rel.is_empty() {
            let _ = writeln!(out, "{}/{}.", rel.name(), rel.arity());
        }
        for row in rel.rows() {
            let fields: Vec<String> = row.iter().map(|&v| db.payload(v).quoted()).collect();
            let _ = writeln!(out, "{}({}).", rel.name(), fields.join(", "));
        }
    }
    out
}

/// Writes one `R.csv` per non-empty relation into `dir`.
pub fn write_csv_dir(db: &Database, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    for rel in db.relations().filter(|r| !r.is_empty()) {
        let file = dir.join(format!("{}.csv", rel.name()));
        let mut writer = csv::WriterBuilder::new()
            .has_headers(false)
            .from_path(&file)
            .map_err(|e| format_error(&file, e))?;
        for row in rel.rows() {
            writer
                .write_record(row.iter().map(|&v| db.payload(v).to_string()))
                .map_err(|e| format_error(&file, e))?;
        }
        writer.flush()?;
    }
    Ok(())
}

/// Name of the single relation holding answers read from a CSV file.
pub const ANSWERS_RELATION: &str = "answers";

/// Reads an answer relation from CSV with a header row naming the free
/// variables. The values live in the returned database.
pub fn read_answers(path: &Path) -> Result<(Database, AnswerRelation)> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| format_error(path, e))?;
    let columns: Vec<String> = reader
        .headers()
        .map_err(|e| format_error(path, e))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let mut db = Database::new();
    db.declare(ANSWERS_RELATION, columns.len())?;
    for record in reader.records() {
        let record = record.map_err(|e| format_error(path, e))?;
        db.insert_fact(ANSWERS_RELATION, record.iter().map(|f| Payload::from_field(f.trim())).collect())?;
    }
    let rows = db
        .relation(ANSWERS_RELATION)
        .expect("declared")
        .rows()
        .map(<[_]>::to_vec)
        .collect();
    Ok((db, AnswerRelation::new(columns, rows)))
}

pub fn write_answers(db: &Database, answers: &AnswerRelation) -> Result<String> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| Error::Format {
        path: "<answers>".into(),
        message: e.to_string(),
    };
    writer.write_record(&answers.columns).map_err(io)?;
    for row in &answers.rows {
        writer
            .write_record(row.iter().map(|&v| db.payload(v).to_string()))
            .map_err(io)?;
    }
    let bytes = writer.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("CSV of UTF-8 fields"))
}

/// Parses `node <id> bag v1,v2 ; edge <id> <id> ; root <id>` (statements
/// separated by `;` or newlines). Bags name query variables.
pub fn parse_decomposition(text: &str, conj: &IndexedConjunct) -> Result<TreeDecomposition> {
    let err = |m: String| Error::Format {
        path: "<decomposition>".into(),
        message: m,
    };
    let names: HashMap<&str, Var> = conj
        .var_names
        .iter()
        .enumerate()
        .map(|(i, n)| (n.as_str(), Var(i as u32)))
        .collect();
    let mut ids: BTreeMap<String, usize> = BTreeMap::new();
    let mut bags: Vec<Vec<Var>> = Vec::new();
    let mut edges = Vec::new();
    let mut root = None;
    for stmt in text.split(['\n', ';']).map(str::trim).filter(|s| !s.is_empty() && !s.starts_with('#')) {
        let words: Vec<&str> = stmt.split_whitespace().collect();
        match words.as_slice() {
            ["node", id, "bag", rest @ ..] => {
                let bag = rest
                    .join("")
                    .split(',')
                    .filter(|s| !s.is_empty())
                    .map(|v| names.get(v).copied().ok_or_else(|| err(format!("unknown variable {v}"))))
                    .collect::<Result<Vec<_>>>()?;
                if ids.insert(id.to_string(), bags.len()).is_some() {
                    return Err(err(format!("node {id} defined twice")));
                }
                bags.push(bag);
            }
            ["node", id] => {
                ids.insert(id.to_string(), bags.len());
                bags.push(Vec::new());
            }
            ["edge", a, b] => edges.push((a.to_string(), b.to_string())),
            ["root", id] => root = Some(id.to_string()),
            _ => return Err(err(format!("unrecognised statement `{stmt}`"))),
        }
    }
    let lookup = |id: &str| ids.get(id).copied().ok_or_else(|| err(format!("unknown node {id}")));
    let mut adj = vec![Vec::new(); bags.len()];
    for (a, b) in &edges {
        let (a, b) = (lookup(a)?, lookup(b)?);
        adj[a].push(b);
        adj[b].push(a);
    }
    let root = match root {
        Some(r) => lookup(&r)?,
        None if !bags.is_empty() => 0,
        None => return Err(err("no nodes".into())),
    };
    let mut parent = vec![None; bags.len()];
    let mut seen = vec![false; bags.len()];
    let mut stack = vec![root];
    seen[root] = true;
    while let Some(v) = stack.pop() {
        for &u in &adj[v] {
            if seen[u] {
                if parent[v] != Some(u) {
                    return Err(Error::InvalidDecomposition(Violation::NotATree(format!(
                        "edges form a cycle through node {u}"
                    ))));
                }
                continue;
            }
            seen[u] = true;
            parent[u] = Some(v);
            stack.push(u);
        }
    }
    if let Some(v) = seen.iter().position(|s| !s) {
        return Err(Error::InvalidDecomposition(Violation::NotATree(format!(
            "node {v} is not connected to the root"
        ))));
    }
    if edges.len() + 1 != bags.len() {
        return Err(Error::InvalidDecomposition(Violation::NotATree("duplicate edges".into())));
    }
    Ok(TreeDecomposition::from_parents(root, bags, parent))
}

pub fn write_decomposition(td: &TreeDecomposition, conj: &IndexedConjunct) -> String {
    let mut out = String::new();
    for (i, bag) in td.bags.iter().enumerate() {
        let names: Vec<&str> = bag.iter().map(|v| conj.var_names[v.0 as usize].as_str()).collect();
        let _ = writeln!(out, "node {i} bag {}", names.join(","));
    }
    for (i, p) in td.parent.iter().enumerate() {
        if let Some(p) = p {
            let _ = writeln!(out, "edge {p} {i}");
        }
    }
    let _ = writeln!(out, "root {}", td.root);
    out
}
