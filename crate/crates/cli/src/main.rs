use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use diverseq::engine::{self, Input, Mode, Request};
use diverseq::io::{load_database, read_answers, write_facts};
use diverseq::oracle::{gen_is_data_fixture, gen_is_query_fixture, gen_uacq_fixture, Fixture, Graph};
use diverseq::outcome::{DEFAULT_BUDGET, DEFAULT_TABLE_CAP};
use diverseq::{parse_query, Aggregator, Error, Result, Score, SolveOptions, Target};

#[derive(Parser)]
#[command(name = "diverseq", version, about = "Find k diverse answers to a database query")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Decide (or maximize) the diversity of k answers.
    Solve(SolveArgs),
    /// Emit a generated instance as fact, query and parameter files.
    Gen(GenArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum AggregatorArg {
    Sum,
    Min,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Auto,
    Acq,
    AcqSum,
    Cqneg,
    FoKernel,
    Bruteforce,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OutputArg {
    Json,
    Text,
}

#[derive(Args)]
struct SolveArgs {
    /// Fact file or directory of per-relation CSV files.
    #[arg(long, required_unless_present = "answers")]
    db: Option<PathBuf>,
    /// Query file (one or more rules with identical heads).
    #[arg(long, conflicts_with = "answers", required_unless_present = "answers")]
    query: Option<PathBuf>,
    /// Precomputed answers as CSV with a header row.
    #[arg(long)]
    answers: Option<PathBuf>,
    #[arg(long)]
    k: usize,
    /// Threshold, or `max` to report the best achievable diversity.
    #[arg(long, allow_hyphen_values = true)]
    d: String,
    #[arg(long, value_enum, default_value = "sum")]
    aggregator: AggregatorArg,
    #[arg(long, value_enum, default_value = "auto")]
    mode: ModeArg,
    #[arg(long)]
    allow_duplicates: bool,
    /// Include the k answers in the report.
    #[arg(long)]
    witness: bool,
    /// Tree decomposition file for queries with negation.
    #[arg(long)]
    decomposition: Option<PathBuf>,
    #[arg(long, env = "DIVERSEQ_TABLE_CAP", default_value_t = DEFAULT_TABLE_CAP)]
    table_cap: u64,
    /// Largest number of candidate answer sets an exhaustive search may try.
    #[arg(long, default_value_t = DEFAULT_BUDGET)]
    budget: u128,
    #[arg(long, value_enum, default_value = "json")]
    output: OutputArg,
    /// Leave wall time out of the report (for reproducible output).
    #[arg(long)]
    no_timing: bool,
}

#[derive(Args)]
struct GenArgs {
    #[command(subcommand)]
    kind: GenKind,
    /// Directory receiving db.facts, query.dl and params.json.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum GenKind {
    /// Independent Set as a star-shaped acyclic query.
    IsQuery(GraphArgs),
    /// Independent Set on max-degree-3 graphs as one 5-ary relation.
    IsData(GraphArgs),
    /// List Coloring on a bipartite cubic graph as a union of two rules.
    Uacq {
        #[command(flatten)]
        graph: GraphSpec,
        /// Colour lists per vertex, comma-separated, e.g. `123,12,,3`.
        #[arg(long)]
        lists: String,
    },
}

#[derive(Args)]
struct GraphArgs {
    #[command(flatten)]
    graph: GraphSpec,
    /// Requested independent set size (becomes k).
    #[arg(long)]
    s: usize,
}

#[derive(Args)]
struct GraphSpec {
    #[arg(long)]
    vertices: usize,
    /// Edges as `1-2,2-3`.
    #[arg(long, default_value = "")]
    edges: String,
}

impl GraphSpec {
    fn graph(&self) -> Result<Graph> {
        let edges = self
            .edges
            .split(',')
            .filter(|e| !e.trim().is_empty())
            .map(|e| {
                let (a, b) = e
                    .split_once('-')
                    .ok_or_else(|| Error::InvalidArgument(format!("edge `{e}` is not of the form a-b")))?;
                let num = |s: &str| {
                    s.trim()
                        .parse::<usize>()
                        .map_err(|_| Error::InvalidArgument(format!("bad vertex `{s}`")))
                };
                Ok((num(a)?, num(b)?))
            })
            .collect::<Result<Vec<_>>>()?;
        Graph::new(self.vertices, edges)
    }
}

fn parse_target(d: &str) -> Result<Target> {
    if d == "max" {
        return Ok(Target::Maximize);
    }
    match d.parse::<i64>() {
        Ok(n) if n >= 0 => Ok(Target::AtLeast(Score::int(n))),
        _ => Err(Error::InvalidArgument(format!("--d must be a non-negative integer or `max`, got `{d}`"))),
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::Format {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

fn solve(args: &SolveArgs) -> Result<bool> {
    let target = parse_target(&args.d)?;
    if args.k == 0 {
        return Err(Error::InvalidArgument("--k must be at least 1".into()));
    }
    let aggregator = match args.aggregator {
        AggregatorArg::Sum => Aggregator::Sum,
        AggregatorArg::Min => Aggregator::Min,
    };
    let mode = match args.mode {
        ModeArg::Auto => Mode::Auto,
        ModeArg::Acq => Mode::Acq,
        ModeArg::AcqSum => Mode::AcqSum,
        ModeArg::Cqneg => Mode::CqNeg,
        ModeArg::FoKernel => Mode::FoKernel,
        ModeArg::Bruteforce => Mode::Bruteforce,
    };
    let options = SolveOptions {
        allow_duplicates: args.allow_duplicates,
        witness: args.witness,
        table_cap: args.table_cap,
        budget: args.budget,
    };
    let decomposition = args.decomposition.as_deref().map(read).transpose()?;
    let loaded_answers;
    let (db, query);
    let input = if let Some(path) = &args.answers {
        loaded_answers = read_answers(path)?;
        Input::Answers {
            db: &loaded_answers.0,
            answers: &loaded_answers.1,
        }
    } else {
        db = load_database(args.db.as_deref().expect("clap requires --db"))?;
        query = parse_query(&read(args.query.as_deref().expect("clap requires --query"))?)?;
        Input::Query { db: &db, query: &query }
    };
    let request = Request {
        input,
        k: args.k,
        target,
        aggregator,
        mode,
        options,
        decomposition: decomposition.as_deref(),
    };
    let report = engine::run(&request)?;
    let json = engine::report_json(&report, request.input.db(), !args.no_timing);
    match args.output {
        OutputArg::Json => println!("{}", serde_json::to_string_pretty(&json).expect("serializable")),
        OutputArg::Text => print_text(&json),
    }
    Ok(report.outcome.decision)
}

fn print_text(json: &serde_json::Value) {
    let field = |k: &str| match &json[k] {
        serde_json::Value::String(s) => s.clone(),
        serde_json::Value::Null => "-".into(),
        other => other.to_string(),
    };
    println!("decision:  {}", field("decision"));
    println!("diversity: {}", field("diversity"));
    println!("routing:   {}", field("routing"));
    if let Some(witness) = json["witness"].as_array() {
        for answer in witness {
            let parts: Vec<String> = answer
                .as_object()
                .expect("answers are objects")
                .iter()
                .map(|(k, v)| format!("{k}={v}"))
                .collect();
            println!("answer:    {}", parts.join(" "));
        }
    }
    for (k, v) in json["stats"].as_object().into_iter().flatten() {
        if k != "tables" {
            println!("{k}: {v}");
        }
    }
}

fn parse_lists(text: &str) -> Result<Vec<BTreeSet<u8>>> {
    text.split(',')
        .map(|list| {
            list.trim()
                .chars()
                .map(|c| match c {
                    '1'..='3' => Ok(c as u8 - b'0'),
                    _ => Err(Error::InvalidArgument(format!("colour `{c}` is not 1, 2 or 3"))),
                })
                .collect()
        })
        .collect()
}

fn generate(args: &GenArgs) -> Result<()> {
    let fixture: Fixture = match &args.kind {
        GenKind::IsQuery(g) => gen_is_query_fixture(&g.graph.graph()?, g.s),
        GenKind::IsData(g) => gen_is_data_fixture(&g.graph.graph()?, g.s)?,
        GenKind::Uacq { graph, lists } => gen_uacq_fixture(&graph.graph()?, &parse_lists(lists)?)?,
    };
    fs::create_dir_all(&args.out)?;
    fs::write(args.out.join("db.facts"), write_facts(&fixture.db))?;
    fs::write(args.out.join("query.dl"), fixture.query.to_string())?;
    let params = json!({"k": fixture.k, "d_sum": fixture.d_sum, "d_min": fixture.d_min});
    fs::write(
        args.out.join("params.json"),
        serde_json::to_string_pretty(&params).expect("serializable") + "\n",
    )?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (result, json_errors) = match &cli.command {
        Command::Solve(args) => (solve(args), args.output == OutputArg::Json),
        Command::Gen(args) => (generate(args).map(|_| true), false),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            if json_errors {
                println!("{}", serde_json::to_string_pretty(&engine::error_json(&e)).expect("serializable"));
            } else {
                eprintln!("error [{}]: {e}", e.code());
            }
            ExitCode::from(2)
        }
    }
}
