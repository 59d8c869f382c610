//! `pdb` — consistency checking and cautious query answering for
//! probabilistic databases under denial constraints.

use std::collections::BTreeSet;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use num::{One, Zero};

use pdb_engine::consistency::{
    check_consistency, model_certificate, ConsistencyError, Options, Outcome, Verdict,
};
use pdb_engine::constraint_lang::{parse_constraints, parse_query, DenialConstraint};
use pdb_engine::grounding::build_conflict_hypergraph;
use pdb_engine::hypergraph_analysis::{classify_component, components, ComponentStructure};
use pdb_engine::model::{
    load_instance, parse_rational, tuple_name, PDBInstance, Rational, TupleId,
};
use pdb_engine::query_eval::{
    answer_query, AnswerRow, Combine, QueryError, QueryOptions,
};

/// Exit code for input/parse/load failures (EX_USAGE-style).
const EXIT_BAD_INPUT: u8 = 64;
/// Exit code when the verdict or an interval is unknown within the budget.
const EXIT_UNKNOWN: u8 = 2;
const EXIT_UNKNOWN_INTERVAL: u8 = 3;

#[derive(Parser)]
#[command(
    name = "pdb",
    version,
    about = "Probabilistic databases under denial constraints: consistency and cautious querying"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Decide whether the marginal probabilities admit a model.
    Check {
        #[command(flatten)]
        common: Common,
        /// Print every per-scope rule report, not only the verdict.
        #[arg(long)]
        explain: bool,
        /// Print a model (a distribution over admissible worlds) as witness.
        #[arg(long)]
        certificate: bool,
    },
    /// Evaluate a conjunctive query to exact [pmin, pmax] intervals.
    Query {
        #[command(flatten)]
        common: Common,
        /// File containing a single query `q(x, ...) := body`.
        #[arg(long)]
        query: PathBuf,
        /// How events in distinct components are combined.
        #[arg(long, value_enum, default_value_t = CombineArg::Frechet)]
        combine: CombineArg,
    },
    /// Membership: is the answer's interval within [k1, k2]?
    Mp {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        query: PathBuf,
        #[arg(long, value_enum, default_value_t = CombineArg::Frechet)]
        combine: CombineArg,
        /// Lower probability threshold (rational, e.g. 1/4).
        #[arg(long)]
        k1: String,
        /// Upper probability threshold (rational, e.g. 1/2).
        #[arg(long)]
        k2: String,
        /// Answer values, comma-separated; omit for a boolean query.
        #[arg(long, default_value = "")]
        answer: String,
    },
    /// Print the conflict hypergraph: edges, components, classifications.
    Hypergraph {
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args)]
struct Common {
    /// Schema file (`relation Name(attr:kind, ...)` lines).
    #[arg(long)]
    schema: PathBuf,
    /// CSV data files; the file stem names the relation.
    #[arg(long, required = true, num_args = 1..)]
    data: Vec<PathBuf>,
    /// Denial-constraint file.
    #[arg(long)]
    constraints: PathBuf,
    /// Maximum component size for possible-world enumeration.
    #[arg(long, default_value_t = 20)]
    budget: usize,
    /// Output format.
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    JsonLines,
}

#[derive(Clone, Copy, ValueEnum)]
enum CombineArg {
    Frechet,
    Independent,
}

impl From<CombineArg> for Combine {
    fn from(c: CombineArg) -> Combine {
        match c {
            CombineArg::Frechet => Combine::Frechet,
            CombineArg::Independent => Combine::Independent,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_BAD_INPUT)
        }
    }
}

/// Load schema, data, and constraints; parse/load failures bubble up as
/// errors (exit 64).
fn load(common: &Common) -> Result<(PDBInstance, Vec<DenialConstraint>)> {
    let schema_text = std::fs::read_to_string(&common.schema)
        .with_context(|| format!("reading schema {}", common.schema.display()))?;
    let mut data = Vec::new();
    for path in &common.data {
        let relation = path
            .file_stem()
            .and_then(|s| s.to_str())
            .ok_or_else(|| anyhow!("data file {} has no usable name", path.display()))?
            .to_string();
        let csv = std::fs::read_to_string(path)
            .with_context(|| format!("reading data {}", path.display()))?;
        data.push((relation, csv));
    }
    let (instance, warnings) = load_instance(&schema_text, &data)?;
    for w in warnings {
        eprintln!("warning: {w}");
    }
    let constraint_text = std::fs::read_to_string(&common.constraints)
        .with_context(|| format!("reading constraints {}", common.constraints.display()))?;
    let (constraints, warnings) = parse_constraints(&constraint_text, &instance.schemas)?;
    for w in warnings {
        eprintln!("warning: {w}");
    }
    if common.budget == 0 {
        bail!("--budget must be at least 1");
    }
    Ok((instance, constraints))
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.cmd {
        Cmd::Check {
            common,
            explain,
            certificate,
        } => {
            let (instance, constraints) = load(&common)?;
            cmd_check(&common, &instance, &constraints, explain, certificate)
        }
        Cmd::Query {
            common,
            query,
            combine,
        } => {
            let (instance, constraints) = load(&common)?;
            let query_text = std::fs::read_to_string(&query)
                .with_context(|| format!("reading query {}", query.display()))?;
            let query = parse_query(&query_text, &instance.schemas)?;
            match evaluate(&common, &instance, &constraints, &query, combine)? {
                Ok(rows) => Ok(print_answers(&common, &rows)),
                Err(code) => Ok(code),
            }
        }
        Cmd::Mp {
            common,
            query,
            combine,
            k1,
            k2,
            answer,
        } => {
            let query_text = std::fs::read_to_string(&query)
                .with_context(|| format!("reading query {}", query.display()))?;
            let k1 = parse_rational(&k1).map_err(|e| anyhow!("--k1: {e}"))?;
            let k2 = parse_rational(&k2).map_err(|e| anyhow!("--k2: {e}"))?;
            if k1 < Rational::zero() || k1 > k2 || k2 > Rational::one() {
                bail!("thresholds must satisfy 0 <= k1 <= k2 <= 1");
            }
            let (instance, constraints) = load(&common)?;
            let query = parse_query(&query_text, &instance.schemas)?;
            match evaluate(&common, &instance, &constraints, &query, combine)? {
                Ok(rows) => cmd_mp(&rows, &answer, &k1, &k2),
                Err(code) => Ok(code),
            }
        }
        Cmd::Hypergraph { common } => {
            let (instance, constraints) = load(&common)?;
            cmd_hypergraph(&common, &instance, &constraints)
        }
    }
}

// ---------------------------------------------------------------------------
// check
// ---------------------------------------------------------------------------

fn outcome_name(o: Outcome) -> &'static str {
    match o {
        Outcome::Consistent => "consistent",
        Outcome::Inconsistent => "inconsistent",
        Outcome::Unknown => "unknown",
    }
}

fn check_exit(o: Outcome) -> ExitCode {
    match o {
        Outcome::Consistent => ExitCode::SUCCESS,
        Outcome::Inconsistent => ExitCode::from(1),
        Outcome::Unknown => ExitCode::from(EXIT_UNKNOWN),
    }
}

fn print_verdict(format: Format, verdict: &Verdict, explain: bool) {
    match format {
        Format::Text => {
            println!("{}", outcome_name(verdict.outcome));
            for r in &verdict.reports {
                if explain {
                    let detail = r
                        .detail
                        .as_deref()
                        .map(|d| format!(": {d}"))
                        .unwrap_or_default();
                    println!(
                        "{} [{}]: {}{detail}",
                        r.scope,
                        r.method,
                        outcome_name(r.outcome)
                    );
                } else if r.outcome != Outcome::Consistent {
                    if let Some(d) = &r.detail {
                        println!("violation: {d}");
                    }
                }
            }
        }
        Format::JsonLines => {
            println!(
                "{}",
                serde_json::json!({ "outcome": outcome_name(verdict.outcome) })
            );
            for r in &verdict.reports {
                if explain || r.outcome != Outcome::Consistent {
                    println!(
                        "{}",
                        serde_json::json!({
                            "scope": r.scope,
                            "method": r.method,
                            "outcome": outcome_name(r.outcome),
                            "detail": r.detail,
                        })
                    );
                }
            }
        }
    }
}

fn format_world(world: &BTreeSet<TupleId>) -> String {
    let names: Vec<String> = world.iter().map(|&t| tuple_name(t)).collect();
    format!("{{{}}}", names.join(", "))
}

fn cmd_check(
    common: &Common,
    instance: &PDBInstance,
    constraints: &[DenialConstraint],
    explain: bool,
    certificate: bool,
) -> Result<ExitCode> {
    let opts = Options {
        world_budget: common.budget,
    };
    let verdict = check_consistency(instance, constraints, &opts);
    print_verdict(common.format, &verdict, explain);
    if certificate && verdict.outcome == Outcome::Consistent {
        match model_certificate(instance, constraints, &opts) {
            Ok(model) => {
                for (world, mass) in &model.worlds {
                    match common.format {
                        Format::Text => println!("world {}: {}", format_world(world), mass),
                        Format::JsonLines => println!(
                            "{}",
                            serde_json::json!({
                                "world": world.iter().map(|&t| tuple_name(t)).collect::<Vec<_>>(),
                                "mass": mass.to_string(),
                            })
                        ),
                    }
                }
            }
            Err(ConsistencyError::Lp(_)) | Err(ConsistencyError::CertificateTooLarge(_)) => {
                eprintln!("certificate unavailable within the world budget");
                return Ok(ExitCode::from(EXIT_UNKNOWN));
            }
            Err(e) => bail!("certificate construction failed: {e}"),
        }
    }
    Ok(check_exit(verdict.outcome))
}

// ---------------------------------------------------------------------------
// query / mp
// ---------------------------------------------------------------------------

/// Run the query; `Err(code)` carries the exit code for inconsistent /
/// undecided instances (reported on stderr).
fn evaluate(
    common: &Common,
    instance: &PDBInstance,
    constraints: &[DenialConstraint],
    query: &pdb_engine::constraint_lang::ConjunctiveQuery,
    combine: CombineArg,
) -> Result<std::result::Result<Vec<AnswerRow>, ExitCode>> {
    let opts = QueryOptions {
        world_budget: common.budget,
        combine: combine.into(),
    };
    match answer_query(instance, constraints, query, &opts) {
        Ok(rows) => Ok(Ok(rows)),
        Err(QueryError::Inconsistent(_)) => {
            eprintln!("error: the instance is inconsistent with the constraints");
            Ok(Err(ExitCode::from(1)))
        }
        Err(QueryError::UnknownConsistency(_)) => {
            eprintln!("error: consistency is unknown within the world budget");
            Ok(Err(ExitCode::from(EXIT_UNKNOWN)))
        }
        Err(e) => bail!("query evaluation failed: {e}"),
    }
}

fn answer_label(row: &AnswerRow) -> String {
    if row.values.is_empty() {
        "true".to_string()
    } else {
        row.values
            .iter()
            .map(|v| v.to_string())
            .collect::<Vec<_>>()
            .join(",")
    }
}

fn print_answers(common: &Common, rows: &[AnswerRow]) -> ExitCode {
    let mut any_unknown = false;
    for row in rows {
        let label = answer_label(row);
        match common.format {
            Format::Text => match &row.bounds {
                Some((lo, hi)) => {
                    let marker = if row.exact { "" } else { "\t~" };
                    println!("{label}\t{lo}\t{hi}{marker}");
                }
                None => {
                    any_unknown = true;
                    println!("{label}\t?\t?");
                }
            },
            Format::JsonLines => {
                if row.bounds.is_none() {
                    any_unknown = true;
                }
                println!(
                    "{}",
                    serde_json::json!({
                        "answer": row.values.iter().map(|v| v.to_string()).collect::<Vec<_>>(),
                        "pmin": row.bounds.as_ref().map(|(lo, _)| lo.to_string()),
                        "pmax": row.bounds.as_ref().map(|(_, hi)| hi.to_string()),
                        "exact": row.exact,
                    })
                );
            }
        }
    }
    if any_unknown {
        ExitCode::from(EXIT_UNKNOWN_INTERVAL)
    } else {
        ExitCode::SUCCESS
    }
}

fn cmd_mp(rows: &[AnswerRow], answer: &str, k1: &Rational, k2: &Rational) -> Result<ExitCode> {
    let row = rows.iter().find(|r| answer_label(r) == answer
        || (answer.is_empty() && r.values.is_empty()));
    match row {
        None => {
            println!("false");
            Ok(ExitCode::from(1))
        }
        Some(row) => match &row.bounds {
            Some((lo, hi)) => {
                let ok = lo >= k1 && hi <= k2;
                println!("{}", if ok { "true" } else { "false" });
                Ok(if ok {
                    ExitCode::SUCCESS
                } else {
                    ExitCode::from(1)
                })
            }
            None => {
                eprintln!("error: the answer interval is unknown within the world budget");
                Ok(ExitCode::from(EXIT_UNKNOWN_INTERVAL))
            }
        },
    }
}

// ---------------------------------------------------------------------------
// hypergraph
// ---------------------------------------------------------------------------

fn structure_line(s: &ComponentStructure) -> String {
    match s {
        ComponentStructure::Singleton => "singleton".to_string(),
        ComponentStructure::Clique => "clique".to_string(),
        ComponentStructure::Hypertree(_) => "hypertree".to_string(),
        ComponentStructure::Ring(_) => "ring".to_string(),
        ComponentStructure::CompleteMultipartite(parts) => {
            let parts: Vec<String> = parts
                .iter()
                .map(|p| {
                    let names: Vec<String> = p.iter().map(|&t| tuple_name(t)).collect();
                    format!("{{{}}}", names.join(", "))
                })
                .collect();
            format!("complete multipartite, parts {}", parts.join(" "))
        }
        ComponentStructure::General => "general".to_string(),
    }
}

fn cmd_hypergraph(
    common: &Common,
    instance: &PDBInstance,
    constraints: &[DenialConstraint],
) -> Result<ExitCode> {
    let h = build_conflict_hypergraph(instance, constraints);
    let comps = components(&h);
    match common.format {
        Format::Text => {
            for e in &h.edges {
                let nodes: Vec<String> = e.nodes.iter().map(|&t| tuple_name(t)).collect();
                let prob = e
                    .prob
                    .as_ref()
                    .map(|p| format!(" [p={p}]"))
                    .unwrap_or_default();
                println!("edge {}: {}{prob}", e.sources.join("+"), nodes.join(", "));
            }
            for (i, c) in comps.iter().enumerate() {
                println!(
                    "component {} {}: {}",
                    i + 1,
                    format_world(&c.nodes),
                    structure_line(&classify_component(c))
                );
            }
        }
        Format::JsonLines => {
            for e in &h.edges {
                println!(
                    "{}",
                    serde_json::json!({
                        "edge": e.nodes.iter().map(|&t| tuple_name(t)).collect::<Vec<_>>(),
                        "sources": e.sources,
                        "p": e.prob.as_ref().map(|p| p.to_string()),
                    })
                );
            }
            for (i, c) in comps.iter().enumerate() {
                println!(
                    "{}",
                    serde_json::json!({
                        "component": i + 1,
                        "nodes": c.nodes.iter().map(|&t| tuple_name(t)).collect::<Vec<_>>(),
                        "structure": structure_line(&classify_component(c)),
                    })
                );
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}
