//! `normsol`: command-line front end for the normalized-solution toolkit.
//!
//! Exit status: 0 on success, 1 on domain errors (wrong regime, bracket or
//! convergence failure), 2 on usage errors. Failures are reported as a JSON
//! document `{error_kind, message, context}` on the output stream.

mod commands;
mod config;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use normsol_core::Error;
use serde_json::{json, Value};

use crate::commands::Document;
use crate::config::{Command, RunConfig, SCHEMA_VERSION};

#[derive(Debug, Parser)]
#[command(name = "normsol", version, about = "Normalized solutions of the Sobolev-critical NLS")]
pub(crate) struct Cli {
    /// Print the resolved run configuration instead of running it.
    #[arg(long, global = true)]
    print_config: bool,
    #[command(subcommand)]
    command: Top,
}

#[derive(Debug, Subcommand)]
pub(crate) enum Top {
    /// Replay a configuration written by `--print-config`.
    Run(RunArgs),
    #[command(flatten)]
    Direct(Command),
}

#[derive(Debug, Args)]
pub(crate) struct RunArgs {
    #[arg(long)]
    config: PathBuf,
}

fn configure_threads() -> Result<(), Error> {
    if let Ok(v) = std::env::var("NLS_THREADS") {
        let n: usize = v
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| Error::InvalidParameter(format!("NLS_THREADS must be a positive integer, got `{v}`")))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::InvalidParameter(e.to_string()))?;
    }
    Ok(())
}

fn with_schema(v: Value) -> Value {
    match v {
        Value::Object(mut m) => {
            m.insert("schema_version".into(), json!(SCHEMA_VERSION));
            Value::Object(m)
        }
        other => json!({ "schema_version": SCHEMA_VERSION, "value": other }),
    }
}

fn render(doc: Document) -> Result<String, Error> {
    match doc {
        Document::Json(v) => Ok(serde_json::to_string_pretty(&with_schema(v))? + "\n"),
        Document::Csv(s) => Ok(s),
    }
}

fn emit(text: &str, out: Option<&PathBuf>) -> Result<(), Error> {
    match out {
        Some(path) => std::fs::write(path, text)?,
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes())?;
            stdout.flush()?;
        }
    }
    Ok(())
}

fn error_document(kind: &str, message: &str, context: Value) -> String {
    let doc = json!({
        "schema_version": SCHEMA_VERSION,
        "error_kind": kind,
        "message": message,
        "context": context,
    });
    serde_json::to_string_pretty(&doc).unwrap_or_default() + "\n"
}

fn fail(err: &Error, context: Value) -> ExitCode {
    let _ = emit(&error_document(err.kind(), &err.to_string(), context), None);
    ExitCode::from(if err.is_usage() { 2 } else { 1 })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let _ = emit(&error_document("usage", &e.render().to_string(), Value::Null), None);
            return ExitCode::from(2);
        }
    };
    let config = match cli.command {
        Top::Direct(command) => RunConfig::new(command),
        Top::Run(args) => match std::fs::read_to_string(&args.config).map_err(Error::from).and_then(|t| RunConfig::from_json(&t)) {
            Ok(c) => c,
            Err(e) => return fail(&e, json!({ "config": args.config })),
        },
    };
    let context = json!({ "command": config.command.name() });
    if cli.print_config {
        return match config.to_json().and_then(|t| emit(&(t + "\n"), None)) {
            Ok(()) => ExitCode::SUCCESS,
            Err(e) => fail(&e, context),
        };
    }
    if let Err(e) = configure_threads() {
        return fail(&e, context);
    }
    let result = commands::run(&config.command).and_then(render);
    match result.and_then(|text| emit(&text, config.command.output().out.as_ref())) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(&e, merge_config(context, &config)),
    }
}

fn merge_config(mut context: Value, config: &RunConfig) -> Value {
    if let (Value::Object(m), Ok(cfg)) = (&mut context, serde_json::to_value(config)) {
        m.insert("config".into(), cfg);
    }
    context
}
