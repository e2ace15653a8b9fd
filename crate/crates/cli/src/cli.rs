use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};
use entitykb::bench::{run_suite_report, BenchKb, GenParams};
use entitykb::kb::KnowledgeBase;
use entitykb::ormatic::{derive_schema, export_tabular, load_graph, SqliteStore};
use serde_json::{json, Value as Json};

use crate::fitting::{run_scripted, FitSpec};
use crate::ops::{self, Result, ServiceError};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, ValueEnum)]
pub enum Format {
    #[default]
    Json,
    Table,
}

#[derive(Debug, Parser)]
#[command(name = "entitykb", about = "Object-native knowledge base tools", version)]
pub struct Cli {
    /// KB source: `demo`, `university`, an ontology JSON file or an N-Triples file.
    #[arg(long, global = true)]
    pub kb: Option<String>,
    /// SQLite database file for save and load.
    #[arg(long, global = true)]
    pub store: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, global = true, default_value_t = 10)]
    pub runs: usize,
    #[arg(long, global = true, default_value_t = 8080)]
    pub port: u16,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Import an ontology document into the KB; persists it when --store is given.
    Import { file: PathBuf },
    /// Materialize inferences; persists the result when --store is given.
    Materialize,
    /// Evaluate an EQL query.
    Query { text: String },
    /// Fit a rule tree from a session file with scripted answers.
    Fit {
        spec: PathBuf,
        /// Also write the rule module text here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Persist every individual of the KB into --store.
    Save,
    /// Load the object graph stored in --store, using --kb for the definitions.
    Load {
        /// Class whose stored rows become the roots (and the table export).
        #[arg(long)]
        class: Option<String>,
    },
    /// Run the benchmark suite; exits 1 when the backends disagree.
    Bench {
        #[arg(long, default_value = "default")]
        scale: String,
    },
    /// Serve the HTTP API.
    Serve,
}

fn store(cli: &Cli) -> Result<SqliteStore> {
    let path = cli.store.as_ref().ok_or_else(|| ServiceError::BadRequest("--store is required".into()))?;
    Ok(SqliteStore::open(path)?)
}

fn save_all(kb: &KnowledgeBase, cli: &Cli) -> Result<Json> {
    ops::save_kb(kb, &mut store(cli)?)
}

enum Output {
    Json(Json),
    Text(String),
}

fn execute(cli: &Cli) -> Result<(Output, i32)> {
    let json = |j: Json| Ok((Output::Json(j), 0));
    match &cli.command {
        Command::Import { file } => {
            let mut kb = ops::open_kb(cli.kb.as_deref(), cli.seed)?;
            let mut report = ops::import_file(file, &mut kb)?;
            if cli.store.is_some() {
                report["saved"] = save_all(&kb, cli)?;
            }
            json(report)
        }
        Command::Materialize => {
            let mut kb = ops::open_kb(cli.kb.as_deref(), cli.seed)?;
            let mut report = ops::materialize_json(&mut kb)?;
            if cli.store.is_some() {
                report["saved"] = save_all(&kb, cli)?;
            }
            json(report)
        }
        Command::Query { text } => {
            let kb = ops::open_kb(cli.kb.as_deref(), cli.seed)?;
            match cli.format {
                Format::Json => json(ops::query_json(&kb, text)?),
                Format::Table => Ok((Output::Text(ops::query_table(&kb, text)?), 0)),
            }
        }
        Command::Fit { spec, out } => {
            let text = std::fs::read_to_string(spec)?;
            let spec: FitSpec = serde_json::from_str(&text).map_err(|e| ServiceError::BadRequest(format!("fit file: {e}")))?;
            let (session, verdicts) = run_scripted(&spec)?;
            let module = session.module();
            if let Some(path) = out {
                std::fs::write(path, &module)?;
            }
            match cli.format {
                Format::Table => Ok((Output::Text(module), 0)),
                Format::Json => json(json!({
                    "name": session.name,
                    "rules": session.tree.rule_count(),
                    "verdicts": verdicts.iter().map(|v| v.to_json()).collect::<Vec<_>>(),
                    "module": module,
                })),
            }
        }
        Command::Save => {
            let kb = ops::open_kb(cli.kb.as_deref(), cli.seed)?;
            json(save_all(&kb, cli)?)
        }
        Command::Load { class } => {
            let tbox = ops::open_kb(cli.kb.as_deref(), cli.seed)?;
            let schema = derive_schema(&tbox)?;
            let st = store(cli)?;
            let loaded = load_graph(&st, &schema, &tbox, class.as_deref(), &[])?;
            if let (Format::Table, Some(c)) = (cli.format, class) {
                return Ok((Output::Text(export_tabular(&st, &schema, &loaded.kb, c)?), 0));
            }
            json(ops::loaded_json(&loaded))
        }
        Command::Bench { scale } => {
            let params = match scale.as_str() {
                "small" => GenParams::small(cli.seed),
                "default" => GenParams { seed: cli.seed, ..GenParams::default() },
                other => return Err(ServiceError::BadRequest(format!("unknown scale `{other}` (small or default)"))),
            };
            let bench = BenchKb::prepare(&params)?;
            let report = run_suite_report(&bench, &entitykb::bench::suite(), cli.runs.max(1))?;
            let code = if report.agreed() { 0 } else { 1 };
            let text = match cli.format {
                Format::Json => report.to_json_lines(),
                Format::Table => report.to_table(),
            };
            Ok((Output::Text(text), code))
        }
        Command::Serve => {
            let kb = ops::open_kb(cli.kb.as_deref(), cli.seed)?;
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(crate::service::serve(crate::service::AppState::new(kb), cli.port))
                .map_err(|e| ServiceError::BadRequest(e.to_string()))?;
            json(json!({ "status": "stopped" }))
        }
    }
}

/// Parses `args` and runs the command. Usage errors exit with 2, failures with 1.
pub fn run<I, S>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let _ = if code == 0 { write!(out, "{}", e.render()) } else { write!(err, "{}", e.render()) };
            return code;
        }
    };
    match execute(&cli) {
        Ok((Output::Json(j), code)) => {
            let _ = writeln!(out, "{j}");
            code
        }
        Ok((Output::Text(t), code)) => {
            let _ = write!(out, "{t}");
            if !t.ends_with('\n') {
                let _ = writeln!(out);
            }
            code
        }
        Err(e) => {
            let _ = writeln!(err, "{}", e.to_json());
            1
        }
    }
}
