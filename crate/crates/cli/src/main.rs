mod config;
mod output;

use std::fmt::Display;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use schemalyze_core::depgraph::{self, PathRelation};
use schemalyze_core::fd::describe;
use schemalyze_core::oracle::{soundness_sweep, SweepReport};
use schemalyze_core::*;

use config::{FileConfig, Flags, Settings};

#[derive(Parser)]
#[command(name = "schemalyze", version, about = "Analyze functional dependencies across rule-defined views")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Clone)]
struct Common {
    /// Emit a single JSON document.
    #[arg(long, global = true)]
    json: bool,
    /// Maximum nesting depth of dependency identifiers.
    #[arg(long, global = true, value_parser = clap::value_parser!(u64).range(1..))]
    depth_cap: Option<u64>,
    /// Maximum node count of dependency identifiers.
    #[arg(long, global = true, value_parser = clap::value_parser!(u64).range(1..))]
    id_size_cap: Option<u64>,
    /// Identify constant constraints by their value or by their column.
    #[arg(long, global = true, value_parser = ["value", "column"])]
    const_ids: Option<String>,
    /// TOML file with defaults for these flags.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Rewrite rules so each applies one relational operator.
    Normalize { file: PathBuf },
    /// Print the extracted meta-facts.
    Facts { file: PathBuf },
    /// Reachability over the dependency graph and built-in queries.
    Graph {
        file: PathBuf,
        /// attr_dups, idb_func_pred, base_changes or tbl_dep.
        #[arg(long)]
        query: Option<String>,
        #[arg(long, requires = "query")]
        arg: Option<String>,
        /// Print the graph in DOT syntax.
        #[arg(long, conflicts_with = "query")]
        dot: bool,
    },
    /// Saturate functional dependencies.
    Fds {
        file: PathBuf,
        /// Print identifiers and keep one line per identifier.
        #[arg(long)]
        show_ids: bool,
        /// Also print potential dependencies from recursion.
        #[arg(long)]
        potential: bool,
    },
    /// Test derived dependencies on random instances.
    Check {
        file: PathBuf,
        #[command(flatten)]
        sweep: SweepArgs,
    },
    /// Everything above as one JSON document.
    All {
        file: PathBuf,
        #[command(flatten)]
        sweep: SweepArgs,
    },
}

#[derive(Args, Clone, Default)]
struct SweepArgs {
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trials: Option<usize>,
    /// Tuples per base table.
    #[arg(long)]
    size: Option<usize>,
    /// Include wall-clock timing in the report.
    #[arg(long)]
    timing: bool,
}

/// A failure with its exit code already decided.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn analysis(message: impl Into<String>) -> Failure {
        Failure {
            code: 1,
            message: message.into(),
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Failure {
        Failure::analysis(format!("error: {e:#}"))
    }
}

fn located(file: &Path, span: Option<SourceSpan>, msg: impl Display) -> Failure {
    match span {
        Some(s) => Failure::analysis(format!("{}:{}:{}: error: {msg}", file.display(), s.line, s.column)),
        None => Failure::analysis(format!("{}: error: {msg}", file.display())),
    }
}

struct Analysis {
    source: ValidatedProgram,
    normal: NormalProgram,
    facts: MetaFactBase,
}

fn load(file: &Path) -> Result<Analysis, Failure> {
    let text = std::fs::read_to_string(file)
        .map_err(|e| Failure::analysis(format!("{}: error: cannot read file: {e}", file.display())))?;
    let program = parse_program(&text).map_err(|e| located(file, Some(e.span), &e))?;
    let source = validate(program).map_err(|e| located(file, e.span(), &e))?;
    let normal = normalize(&source);
    let facts = extract(&normal).map_err(|e| located(file, None, &e))?;
    Ok(Analysis { source, normal, facts })
}

fn saturated(a: &Analysis, settings: &Settings) -> FdSet {
    let set = saturate(&a.facts, &fd_seeds(&a.normal), &settings.engine);
    if !set.diagnostics.is_empty() {
        eprintln!(
            "note: {} derivations dropped at the identifier caps (depth {}, size {})",
            set.diagnostics.len(),
            settings.engine.depth_cap,
            settings.engine.size_cap
        );
    }
    set
}

fn fd_lines(set: &FdSet, show_ids: bool, potential: bool) -> Vec<String> {
    let mut lines: Vec<String> = Vec::new();
    let mut push = |facts: &std::collections::BTreeSet<Fd>, prefix: &str| {
        let mut seen = std::collections::BTreeSet::new();
        for f in facts {
            let line = format!("{prefix}{}", describe(f, show_ids));
            if seen.insert(line.clone()) {
                lines.push(line);
            }
        }
    };
    push(&set.facts, "");
    if potential {
        push(&set.potential, "p");
    }
    lines
}

struct Checked {
    report: Result<SweepReport, Box<schemalyze_core::oracle::SoundnessViolation>>,
    millis: u128,
}

fn check(a: &Analysis, set: &FdSet, settings: &Settings) -> Checked {
    let start = Instant::now();
    let report = soundness_sweep(&a.normal.validated(), set, &settings.sweep);
    Checked {
        report,
        millis: start.elapsed().as_millis(),
    }
}

fn check_json(c: &Checked, timing: bool) -> Value {
    let mut v = match &c.report {
        Ok(r) => output::sweep_report(r),
        Err(v) => json!({ "violations": [output::violation(v)] }),
    };
    if timing {
        v["timing_ms"] = json!(c.millis);
    }
    v
}

fn settings(common: &Common, sweep: &SweepArgs, show_ids: bool) -> Result<Settings, Failure> {
    let file = match &common.config {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::default(),
    };
    let flags = Flags {
        depth_cap: common.depth_cap.map(|n| n as usize),
        env_depth_cap: std::env::var("SCHEMALYZE_DEPTH_CAP").ok(),
        id_size_cap: common.id_size_cap.map(|n| n as usize),
        const_ids: common.const_ids.clone(),
        seed: sweep.seed,
        trials: sweep.trials,
        size: sweep.size,
        json: common.json,
        show_ids,
    };
    Ok(config::merge(flags, file)?)
}

fn json_doc(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("JSON values serialize");
    s.push('\n');
    s
}

fn text_doc(lines: impl IntoIterator<Item = String>) -> String {
    lines.into_iter().map(|l| l + "\n").collect()
}

fn run(cli: Cli) -> Result<String, Failure> {
    let none = SweepArgs::default();
    match cli.command {
        Command::Normalize { file } => {
            let s = settings(&cli.common, &none, false)?;
            let a = load(&file)?;
            Ok(if s.json {
                json_doc(&output::normal_program(&a.normal))
            } else {
                render_program(&a.normal.to_program())
            })
        }
        Command::Facts { file } => {
            let s = settings(&cli.common, &none, false)?;
            let a = load(&file)?;
            Ok(if s.json {
                json_doc(&output::meta_facts(&a.facts))
            } else {
                text_doc(a.facts.lines())
            })
        }
        Command::Graph { file, query, arg, dot } => {
            let s = settings(&cli.common, &none, false)?;
            let a = load(&file)?;
            if dot {
                return Ok(depgraph::to_dot(&a.facts));
            }
            let paths = depgraph::paths(&a.facts);
            match query {
                Some(name) => {
                    let q = Query::parse(&name, arg.as_deref()).map_err(|e| Failure {
                        code: 2,
                        message: format!("error: {e}"),
                    })?;
                    let rows = depgraph::query(&a.facts, &paths, &q);
                    Ok(if s.json {
                        json_doc(&output::query_rows(&q, &rows))
                    } else {
                        text_doc(rows.iter().map(|r| format!("{}({}).", q.name(), r.join(","))))
                    })
                }
                None => Ok(if s.json {
                    json_doc(&json!({ "path": output::path_relation(&paths) }))
                } else {
                    text_doc(path_lines(&paths))
                }),
            }
        }
        Command::Fds { file, show_ids, potential } => {
            let s = settings(&cli.common, &none, show_ids)?;
            let a = load(&file)?;
            let set = saturated(&a, &s);
            Ok(if s.json {
                json_doc(&output::fd_set(&set, potential))
            } else {
                text_doc(fd_lines(&set, s.show_ids, potential))
            })
        }
        Command::Check { file, sweep } => {
            let s = settings(&cli.common, &sweep, false)?;
            let a = load(&file)?;
            let set = saturated(&a, &s);
            let c = check(&a, &set, &s);
            let out = if s.json {
                json_doc(&check_json(&c, sweep.timing))
            } else {
                check_text(&c, sweep.timing)
            };
            match &c.report {
                Ok(_) => Ok(out),
                Err(v) => {
                    print!("{out}");
                    Err(Failure::analysis(format!("{}: error: soundness violation\n{v}", file.display())))
                }
            }
        }
        Command::All { file, sweep } => {
            let s = settings(&cli.common, &sweep, false)?;
            let a = load(&file)?;
            let paths = depgraph::paths(&a.facts);
            let set = saturated(&a, &s);
            let c = check(&a, &set, &s);
            let queries: Vec<Value> = [Query::AttrDups, Query::IdbFuncPred, Query::BaseChanges(None), Query::TblDep]
                .iter()
                .map(|q| output::query_rows(q, &depgraph::query(&a.facts, &paths, q)))
                .collect();
            let doc = json!({
                "source": render_program(a.source.program()),
                "normalized": output::normal_program(&a.normal),
                "facts": output::meta_facts(&a.facts),
                "path": output::path_relation(&paths),
                "queries": queries,
                "fds": output::fd_set(&set, true),
                "check": check_json(&c, sweep.timing),
            });
            let out = json_doc(&doc);
            match &c.report {
                Ok(_) => Ok(out),
                Err(v) => {
                    print!("{out}");
                    Err(Failure::analysis(format!("{}: error: soundness violation\n{v}", file.display())))
                }
            }
        }
    }
}

fn path_lines(paths: &PathRelation) -> Vec<String> {
    paths.closure.iter().map(|(t, f)| format!("path({t},{f}).")).collect()
}

fn check_text(c: &Checked, timing: bool) -> String {
    let mut lines = Vec::new();
    match &c.report {
        Ok(r) => {
            lines.push(format!(
                "checked {} dependencies on {} instances: no violations",
                r.checked, r.trials
            ));
            if r.skipped > 0 {
                lines.push(format!("skipped {} dependencies produced by function calls", r.skipped));
            }
            for m in &r.missed {
                lines.push(format!("missed {m}"));
            }
        }
        Err(_) => lines.push("violation found".into()),
    }
    if timing {
        lines.push(format!("time {} ms", c.millis));
    }
    text_doc(lines)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(out) => {
            let mut stdout = std::io::stdout().lock();
            if stdout.write_all(out.as_bytes()).and_then(|_| stdout.flush()).is_err() {
                return ExitCode::from(1);
            }
            ExitCode::SUCCESS
        }
        Err(f) => {
            eprintln!("{}", f.message.trim_end());
            ExitCode::from(f.code)
        }
    }
}
