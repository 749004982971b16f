//! Command line interface for the provforge generator: generate graph
//! collections from seed traces, validate PROV files, compile rules and
//! constraints to Cypher, and compute or compare collection metrics.
//!
//! Exit codes: 0 on success, 1 on input errors (parse diagnostics go to
//! stderr), 2 when any generated graph hit the constraint non-termination
//! safety cap.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use provforge::metrics::DEFAULT_TITLE_PROPERTY;
use provforge::{
    compare, compile_rule, compute_metrics_with_title, export_create_script, generate_one,
    merge_query, parse_constraints, render_comparison_table, render_metrics_table, Constraint,
    Dialect, ExecutionParams, GenerationReport, GraphReport, HaltingReason, MetricsReport,
    ProvGraph, SeedPattern,
};

/// Documented default master seed; runs are a pure function of the seed,
/// so the default must be a constant, never entropy.
const DEFAULT_RNG_SEED: u64 = 42;

const EXIT_INPUT_ERROR: u8 = 1;
const EXIT_NON_TERMINATION: u8 = 2;

#[derive(Parser)]
#[command(
    name = "provforge",
    version,
    about = "Synthetic PROV provenance graph generator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a collection of provenance graphs from a seed trace.
    Generate(GenerateArgs),
    /// Check PROV graph files against the structural model invariants.
    Validate(ValidateArgs),
    /// Compile the seed's rewrite rules, with any constraints merged in,
    /// to Cypher queries.
    Compile(CompileArgs),
    /// Compute evaluation metrics over a generated collection.
    Stats(StatsArgs),
    /// Compare two metrics reports, control versus test.
    Compare(CompareArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Provn,
    Json,
    Cypher,
}

impl Format {
    fn extension(self) -> &'static str {
        match self {
            Format::Provn => "provn",
            Format::Json => "jsonl",
            Format::Cypher => "cypher",
        }
    }

    fn name(self) -> &'static str {
        match self {
            Format::Provn => "provn",
            Format::Json => "json",
            Format::Cypher => "cypher",
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum DialectArg {
    /// Compact count() guards over a bound relationship variable.
    Inline,
    /// size() pattern guards accepted by current Cypher.
    Strict,
}

impl From<DialectArg> for Dialect {
    fn from(d: DialectArg) -> Dialect {
        match d {
            DialectArg::Inline => Dialect::Inline,
            DialectArg::Strict => Dialect::Strict,
        }
    }
}

#[derive(Args)]
struct GenerateArgs {
    /// Seed trace in PROV-N format.
    #[arg(long)]
    seed: PathBuf,
    /// Constraint file in the constraint DSL; omit for unconstrained
    /// growth.
    #[arg(long)]
    constraints: Option<PathBuf>,
    /// Number of graphs in the collection.
    #[arg(long, default_value_t = 1)]
    graphs: u64,
    /// Node budget per graph.
    #[arg(long, default_value_t = 100)]
    max_nodes: u64,
    /// Edge budget per graph.
    #[arg(long, default_value_t = 150)]
    max_edges: u64,
    /// Longest-path height limit per graph.
    #[arg(long)]
    max_height: Option<u32>,
    /// Per-level width limit per graph.
    #[arg(long)]
    max_width: Option<u32>,
    /// Master rng seed.
    #[arg(long, env = "PROVFORGE_SEED", default_value_t = DEFAULT_RNG_SEED)]
    rng_seed: u64,
    /// Output directory for the graph files and report.json.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Serialization for the generated graphs.
    #[arg(long, value_enum, default_value_t = Format::Provn)]
    format: Format,
    /// Worker threads; graph indices have independent rng streams, so the
    /// output is identical at any parallelism.
    #[arg(long, default_value_t = 1)]
    parallel: usize,
    /// Emit the run summary as JSON instead of a table.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct ValidateArgs {
    /// Graph files to check (.provn or .jsonl).
    #[arg(required = true)]
    files: Vec<PathBuf>,
    /// Emit findings as JSON instead of one line per finding.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct CompileArgs {
    /// Seed trace in PROV-N format; its active relations select the rules.
    #[arg(long)]
    seed: PathBuf,
    /// Constraint file whose guards are merged into each rule's query.
    #[arg(long)]
    constraints: Option<PathBuf>,
    /// Cypher flavor to emit.
    #[arg(long, value_enum, default_value_t = DialectArg::Inline)]
    dialect: DialectArg,
    /// Write the queries to this file instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Emit the queries as JSON instead of annotated text.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct StatsArgs {
    /// Directory holding the collection's graph files.
    #[arg(long)]
    collection: PathBuf,
    /// Property whose distinct values define a contribution.
    #[arg(long, default_value = DEFAULT_TITLE_PROPERTY)]
    title_property: String,
    /// Write the report to this file instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Emit the report as JSON instead of a table.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct CompareArgs {
    /// Control metrics report (JSON, as written by stats).
    control: PathBuf,
    /// Test metrics report (JSON, as written by stats).
    test: PathBuf,
    /// Write the comparison to this file instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Emit the comparison as JSON instead of a table.
    #[arg(long)]
    json: bool,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            // Usage problems are input errors (exit 1); --help and
            // --version are successes.
            let code = if err.use_stderr() {
                EXIT_INPUT_ERROR
            } else {
                0
            };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Generate(args) => cmd_generate(args),
        Command::Validate(args) => cmd_validate(args),
        Command::Compile(args) => cmd_compile(args),
        Command::Stats(args) => cmd_stats(args),
        Command::Compare(args) => cmd_compare(args),
    };
    match result {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(EXIT_INPUT_ERROR)
        }
    }
}

/// Write via a sibling temp file and rename, so a crash never leaves a
/// partial file under the final name. Distinct final names get distinct
/// temp names, which keeps parallel writers race-free.
fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    let name = path
        .file_name()
        .ok_or_else(|| anyhow!("{} has no file name", path.display()))?;
    let tmp = dir
        .unwrap_or(Path::new("."))
        .join(format!(".{}.tmp", name.to_string_lossy()));
    fs::write(&tmp, contents).with_context(|| format!("writing {}", tmp.display()))?;
    fs::rename(&tmp, path)
        .with_context(|| format!("renaming {} to {}", tmp.display(), path.display()))?;
    Ok(())
}

fn read_input(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn load_seed(path: &Path) -> Result<SeedPattern> {
    let text = read_input(path)?;
    let (pattern, warnings) =
        provforge::provn::parse_seed(&text).map_err(|e| anyhow!("{}: {e}", path.display()))?;
    for w in warnings {
        eprintln!("warning: {}: {w}", path.display());
    }
    Ok(pattern)
}

fn load_constraints(path: Option<&Path>) -> Result<Vec<Constraint>> {
    match path {
        Some(p) => {
            let text = read_input(p)?;
            parse_constraints(&text).map_err(|e| anyhow!("{}: {e}", p.display()))
        }
        None => Ok(Vec::new()),
    }
}

/// Load a graph file, choosing the parser by extension.
fn load_graph(path: &Path) -> Result<ProvGraph> {
    let text = read_input(path)?;
    let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
    match ext {
        "provn" => {
            provforge::provn::parse_graph(&text).map_err(|e| anyhow!("{}: {e}", path.display()))
        }
        "jsonl" | "json" => {
            provforge::io::read_jsonl(&text).map_err(|e| anyhow!("{}: {e}", path.display()))
        }
        other => Err(anyhow!(
            "{}: unsupported graph extension {other:?} (expected .provn or .jsonl)",
            path.display()
        )),
    }
}

#[derive(Serialize)]
struct RunSummary {
    params: ExecutionParams,
    format: &'static str,
    report: GenerationReport,
}

fn cmd_generate(args: GenerateArgs) -> Result<ExitCode> {
    let pattern = load_seed(&args.seed)?;
    let constraints = load_constraints(args.constraints.as_deref())?;
    let params = ExecutionParams {
        graphs: args.graphs,
        max_nodes: args.max_nodes,
        max_edges: args.max_edges,
        max_height: args.max_height,
        max_width: args.max_width,
        rng_seed: args.rng_seed,
    };
    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;

    let workers = args.parallel.max(1);
    let reports = generate_collection(
        &pattern,
        &constraints,
        &params,
        args.format,
        &args.out,
        workers,
    )?;

    let report = GenerationReport { graphs: reports };
    let summary = RunSummary {
        params,
        format: args.format.name(),
        report,
    };
    let summary_json =
        serde_json::to_string_pretty(&summary).expect("report types serialize") + "\n";
    write_atomic(&args.out.join("report.json"), &summary_json)?;

    let non_terminating: Vec<u64> = summary
        .report
        .graphs
        .iter()
        .filter(|r| r.halting_reason == HaltingReason::NonTerminating)
        .map(|r| r.index)
        .collect();
    if args.json {
        println!(
            "{}",
            serde_json::to_string_pretty(&summary).expect("report types serialize")
        );
    } else {
        print!("{}", render_run_table(&summary, &args.out));
    }
    if non_terminating.is_empty() {
        Ok(ExitCode::SUCCESS)
    } else {
        for index in &non_terminating {
            eprintln!("graph {index} hit the non-termination safety cap; its constraints cannot be satisfied together");
        }
        Ok(ExitCode::from(EXIT_NON_TERMINATION))
    }
}

/// Generate every graph index and write its file; single worker runs
/// inline, multiple workers split the index range. Per-index rng streams
/// make the result identical either way.
fn generate_collection(
    pattern: &SeedPattern,
    constraints: &[Constraint],
    params: &ExecutionParams,
    format: Format,
    out_dir: &Path,
    workers: usize,
) -> Result<Vec<GraphReport>> {
    let one = |index: u64| -> Result<GraphReport> {
        let (graph, report) = generate_one(pattern, constraints, params, index)
            .map_err(|e| anyhow!("generating graph {index}: {e}"))?;
        let contents = match format {
            Format::Provn => provforge::provn::write_graph(&graph),
            Format::Json => provforge::io::write_jsonl(&graph),
            Format::Cypher => {
                export_create_script(&graph).map_err(|e| anyhow!("exporting graph {index}: {e}"))?
            }
        };
        let name = format!("graph-{index:05}.{}", format.extension());
        write_atomic(&out_dir.join(name), &contents)?;
        Ok(report)
    };

    if workers == 1 || params.graphs <= 1 {
        return (0..params.graphs).map(one).collect();
    }
    let mut results: Vec<Option<Result<GraphReport>>> = (0..params.graphs).map(|_| None).collect();
    std::thread::scope(|scope| {
        let mut handles = Vec::new();
        for worker in 0..workers as u64 {
            handles.push(scope.spawn(move || {
                let mut got = Vec::new();
                let mut index = worker;
                while index < params.graphs {
                    got.push((index, one(index)));
                    index += workers as u64;
                }
                got
            }));
        }
        for handle in handles {
            for (index, result) in handle.join().expect("worker panicked") {
                results[index as usize] = Some(result);
            }
        }
    });
    results
        .into_iter()
        .map(|slot| slot.expect("every index was assigned to a worker"))
        .collect()
}

fn render_run_table(summary: &RunSummary, out_dir: &Path) -> String {
    let mut out = String::new();
    writeln!(
        out,
        "{:>7} {:>7} {:>7} {:>11} halting",
        "graph", "nodes", "edges", "iterations"
    )
    .expect("string write");
    for r in &summary.report.graphs {
        writeln!(
            out,
            "{:>7} {:>7} {:>7} {:>11} {:?}",
            r.index, r.nodes, r.edges, r.iterations, r.halting_reason
        )
        .expect("string write");
    }
    let nodes: u64 = summary.report.graphs.iter().map(|r| r.nodes).sum();
    let edges: u64 = summary.report.graphs.iter().map(|r| r.edges).sum();
    writeln!(out, "{:>7} {nodes:>7} {edges:>7}", "total").expect("string write");
    writeln!(
        out,
        "wrote {} {} file(s) and report.json to {}",
        summary.report.graphs.len(),
        summary.format,
        out_dir.display()
    )
    .expect("string write");
    out
}

#[derive(Serialize)]
struct FileFindings {
    file: String,
    violations: Vec<String>,
}

fn cmd_validate(args: ValidateArgs) -> Result<ExitCode> {
    let mut findings = Vec::new();
    for path in &args.files {
        let graph = load_graph(path)?;
        let violations: Vec<String> = graph.validate().iter().map(|v| v.to_string()).collect();
        findings.push(FileFindings {
            file: path.display().to_string(),
            violations,
        });
    }
    let clean = findings.iter().all(|f| f.violations.is_empty());
    if args.json {
        println!(
            "{}",
            serde_json::to_string_pretty(&findings).expect("strings serialize")
        );
    } else {
        for f in &findings {
            if f.violations.is_empty() {
                println!("{}: ok", f.file);
            } else {
                for v in &f.violations {
                    println!("{}: {v}", f.file);
                }
            }
        }
    }
    Ok(if clean {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_INPUT_ERROR)
    })
}

fn cmd_compile(args: CompileArgs) -> Result<ExitCode> {
    let pattern = load_seed(&args.seed)?;
    let constraints = load_constraints(args.constraints.as_deref())?;
    let rules = pattern.derive_rules();
    let dialect = Dialect::from(args.dialect);
    let mut queries = Vec::with_capacity(rules.len());
    for rule in &rules {
        let compiled = if constraints.is_empty() {
            compile_rule(rule)
        } else {
            merge_query(rule, &constraints, dialect)
                .map_err(|e| anyhow!("compiling {}: {e}", rule.label()))?
        };
        queries.push(compiled);
    }
    let rendered = if args.json {
        let items: Vec<serde_json::Value> = queries
            .iter()
            .map(|q| {
                serde_json::json!({
                    "rule": q.rule,
                    "text": q.text,
                    "variables": q.variables,
                    "notes": q.notes,
                })
            })
            .collect();
        serde_json::to_string_pretty(&items).expect("strings serialize") + "\n"
    } else {
        let mut out = String::new();
        for q in &queries {
            writeln!(out, "// {}", q.rule).expect("string write");
            for note in &q.notes {
                writeln!(out, "// note: {note}").expect("string write");
            }
            writeln!(out, "{}", q.text).expect("string write");
        }
        out
    };
    emit(args.out.as_deref(), &rendered)?;
    Ok(ExitCode::SUCCESS)
}

/// Graph files of a collection directory, in name order so runs are
/// reproducible.
fn collection_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    let entries = fs::read_dir(dir).with_context(|| format!("reading {}", dir.display()))?;
    for entry in entries {
        let path = entry
            .with_context(|| format!("reading {}", dir.display()))?
            .path();
        let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
        if matches!(ext, "provn" | "jsonl") {
            files.push(path);
        }
    }
    files.sort();
    if files.is_empty() {
        return Err(anyhow!(
            "{} contains no .provn or .jsonl graph files",
            dir.display()
        ));
    }
    Ok(files)
}

fn cmd_stats(args: StatsArgs) -> Result<ExitCode> {
    let mut graphs = Vec::new();
    for path in collection_files(&args.collection)? {
        graphs.push(load_graph(&path)?);
    }
    let report = compute_metrics_with_title(&graphs, &args.title_property)
        .map_err(|e| anyhow!("{}: {e}", args.collection.display()))?;
    let rendered = if args.json {
        serde_json::to_string_pretty(&report).expect("report types serialize") + "\n"
    } else {
        render_metrics_table(&report)
    };
    emit(args.out.as_deref(), &rendered)?;
    Ok(ExitCode::SUCCESS)
}

fn load_metrics(path: &Path) -> Result<MetricsReport> {
    let text = read_input(path)?;
    serde_json::from_str(&text).map_err(|e| anyhow!("{}: {e}", path.display()))
}

fn cmd_compare(args: CompareArgs) -> Result<ExitCode> {
    let control = load_metrics(&args.control)?;
    let test = load_metrics(&args.test)?;
    let comparison = compare(&control, &test)?;
    let rendered = if args.json {
        serde_json::to_string_pretty(&comparison).expect("report types serialize") + "\n"
    } else {
        render_comparison_table(&comparison)
    };
    emit(args.out.as_deref(), &rendered)?;
    Ok(ExitCode::SUCCESS)
}

fn emit(out: Option<&Path>, rendered: &str) -> Result<()> {
    match out {
        Some(path) => write_atomic(path, rendered),
        None => {
            print!("{rendered}");
            Ok(())
        }
    }
}
