//! Command-line front end: manifest in, digestibles or a report out.

use std::ffi::OsString;
use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::time::{Duration, SystemTime};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::Value;

use crate::bridge::DEFAULT_TIMEOUT;
use crate::error::{Error, Result};
use crate::explain::GlobalKind;
use crate::expose::SuiteSpec;
use crate::ingest::Manifest;
use crate::report::{canonical_json, render_html, verify_report, Digestible, Report, ReportMeta};
use crate::session::{ExplainRequest, ModelSource, ReportOptions, Session};

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_VERIFY_FAILED: i32 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Html,
}

#[derive(Debug, Parser)]
#[command(name = "explabox", version, about = "Audit black-box text classifiers and regressors")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalArgs {
    /// Project manifest (JSON) naming the data files, splits and task
    #[arg(long, global = true, value_name = "PATH")]
    pub manifest: Option<PathBuf>,

    /// Seed recorded in every provenance; all randomness derives from it
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    /// Write the output here instead of stdout
    #[arg(long, short, global = true, value_name = "PATH")]
    pub output: Option<PathBuf>,

    /// Output format
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    pub format: Format,

    /// Command line of an external model speaking the JSON-lines protocol;
    /// the built-in naive Bayes baseline is used when absent
    #[arg(long, global = true, env = "EXPLABOX_MODEL_CMD", value_name = "COMMAND")]
    pub model: Option<String>,

    /// Per-batch timeout for the external model, in seconds
    #[arg(long, global = true, default_value_t = DEFAULT_TIMEOUT.as_secs(), value_name = "SECS")]
    pub model_timeout: u64,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Descriptive statistics of one split, or of every split
    Explore {
        /// Split to describe; all splits when omitted
        #[arg(long)]
        split: Option<String>,
    },
    /// Performance metrics (and the confusion matrix for classifiers)
    Examine {
        /// Split to score; the default split when omitted
        #[arg(long)]
        split: Option<String>,
    },
    /// Local attribution for one instance, or a global summary of a split
    Explain(ExplainArgs),
    /// Robustness, security and fairness tests
    Expose(ExposeArgs),
    /// Run all four analyses with defaults and emit a full report
    Report {
        /// Record the current UTC time as created_at instead of the fixed epoch
        /// (the output is then no longer byte-reproducible)
        #[arg(long)]
        timestamp: bool,
    },
    /// Serve the HTTP API
    Serve {
        /// Address to listen on
        #[arg(long, default_value = "127.0.0.1:8080")]
        bind: SocketAddr,
    },
    /// Check a report against the schema and its content hash (exit 3 on failure)
    Verify {
        /// Report file to check
        path: PathBuf,
    },
}

#[derive(Debug, Args)]
pub struct ExplainArgs {
    /// Id of the instance to explain
    #[arg(long, conflicts_with_all = ["text", "global"])]
    pub instance: Option<String>,

    /// Free text to explain instead of a dataset instance
    #[arg(long, conflicts_with = "global")]
    pub text: Option<String>,

    /// Attribution method: kernelshap, lime or exact-shapley
    #[arg(long, default_value = "kernelshap")]
    pub method: String,

    /// Label whose probability is explained; the predicted label when omitted
    #[arg(long)]
    pub target_label: Option<String>,

    /// Method parameters as a JSON object, e.g. '{"n_samples":1000}'
    #[arg(long, value_name = "JSON")]
    pub params: Option<String>,

    /// Global summary instead of a local explanation: token-frequency,
    /// token-information, prototypes or criticisms
    #[arg(long, value_name = "KIND")]
    pub global: Option<String>,

    /// Split for global summaries; the default split when omitted
    #[arg(long)]
    pub split: Option<String>,

    /// Tokens, prototypes or criticisms to report for global summaries
    #[arg(long)]
    pub k: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ExposeArgs {
    /// Test-suite spec file (JSON) with MFT, INV and DIR tests
    #[arg(long, value_name = "PATH")]
    pub suite: Option<PathBuf>,

    /// Protected attribute to audit for group fairness
    #[arg(long, value_name = "ATTRIBUTE")]
    pub fairness: Option<String>,

    /// Positive label for classification fairness; the last label when omitted
    #[arg(long, requires = "fairness")]
    pub positive_label: Option<String>,

    /// Run the fixed security fuzzing corpus against the model
    #[arg(long)]
    pub fuzz: bool,

    /// Split for fairness audits; the default split when omitted
    #[arg(long)]
    pub split: Option<String>,
}

fn open_session(global: &GlobalArgs) -> Result<Session> {
    let path = global
        .manifest
        .as_ref()
        .ok_or_else(|| Error::invalid("--manifest is required for this subcommand"))?;
    let manifest = Manifest::from_path(path)?;
    let model = ModelSource::from_command(global.model.as_deref())?;
    Session::open(&manifest, &model, Duration::from_secs(global.model_timeout))
}

/// Wrap loose digestibles in a report so they can be rendered as HTML.
fn loose_report(session: &Session, seed: u64, digestibles: Vec<Digestible>) -> Result<Report> {
    let meta = ReportMeta::new(
        seed,
        session.manifest_hash().map(str::to_owned),
        session.dataset_hash().to_owned(),
        session.predictor().model_id().to_owned(),
    );
    Ok(Report::new(meta, digestibles)?)
}

fn render(session: &Session, global: &GlobalArgs, digestibles: Vec<Digestible>) -> Result<Vec<u8>> {
    match global.format {
        Format::Html => Ok(render_html(&loose_report(session, global.seed, digestibles)?).into_bytes()),
        Format::Json if digestibles.len() == 1 => Ok(canonical_json(&digestibles[0])?),
        Format::Json => Ok(canonical_json(&digestibles)?),
    }
}

fn emit(output: Option<&Path>, bytes: &[u8]) -> std::io::Result<()> {
    match output {
        Some(path) => std::fs::write(path, bytes),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(bytes)?;
            out.write_all(b"\n")?;
            out.flush()
        }
    }
}

enum Outcome {
    Bytes(Vec<u8>),
    Verified(bool, Vec<u8>),
    Served,
}

fn execute(cli: Cli) -> std::result::Result<Outcome, String> {
    let g = &cli.global;
    let err = |e: Error| e.to_string();
    match cli.command {
        Command::Verify { path } => {
            let bytes = std::fs::read(&path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
            let v = verify_report(&bytes);
            let out = canonical_json(&v).map_err(|e| e.to_string())?;
            Ok(Outcome::Verified(v.valid, out))
        }
        Command::Serve { bind } => {
            let session = open_session(g).map_err(err)?;
            let runtime = tokio::runtime::Runtime::new().map_err(|e| e.to_string())?;
            eprintln!("explabox: serving on http://{bind}/api/v1");
            runtime
                .block_on(crate::service::serve(session, bind))
                .map_err(|e| format!("cannot serve on {bind}: {e}"))?;
            Ok(Outcome::Served)
        }
        Command::Report { timestamp } => {
            let session = open_session(g).map_err(err)?;
            let options = ReportOptions {
                created_at: timestamp.then(|| humantime::format_rfc3339_seconds(SystemTime::now()).to_string()),
                ..ReportOptions::default()
            };
            let report = session.report(g.seed, &options).map_err(err)?;
            let bytes = match g.format {
                Format::Json => report.to_canonical_bytes().map_err(|e| e.to_string())?,
                Format::Html => render_html(&report).into_bytes(),
            };
            Ok(Outcome::Bytes(bytes))
        }
        Command::Explore { split } => {
            let session = open_session(g).map_err(err)?;
            let digestibles = match split {
                Some(s) => vec![session.stats(Some(&s)).map_err(err)?],
                None => {
                    let names: Vec<String> = session.dataset().split_names().map(str::to_owned).collect();
                    names.iter().map(|s| session.stats(Some(s))).collect::<Result<_>>().map_err(err)?
                }
            };
            render(&session, g, digestibles).map(Outcome::Bytes).map_err(err)
        }
        Command::Examine { split } => {
            let session = open_session(g).map_err(err)?;
            let mut digestibles = vec![session.metrics(split.as_deref()).map_err(err)?];
            if session.dataset().task() == crate::ingest::Task::Classification {
                digestibles.push(session.confusion(split.as_deref()).map_err(err)?);
            }
            render(&session, g, digestibles).map(Outcome::Bytes).map_err(err)
        }
        Command::Explain(a) => {
            let session = open_session(g).map_err(err)?;
            let digestible = if let Some(kind) = &a.global {
                let kind = GlobalKind::parse(kind).ok_or_else(|| format!("unknown global summary `{kind}`"))?;
                session.global(kind, a.split.as_deref(), a.k, g.seed).map_err(err)?
            } else {
                let params = a
                    .params
                    .as_deref()
                    .map(serde_json::from_str::<Value>)
                    .transpose()
                    .map_err(|e| format!("--params is not valid JSON: {e}"))?;
                session
                    .explain(&ExplainRequest {
                        method: a.method,
                        instance_id: a.instance,
                        text: a.text,
                        target_label: a.target_label,
                        params,
                        seed: g.seed,
                    })
                    .map_err(err)?
            };
            render(&session, g, vec![digestible]).map(Outcome::Bytes).map_err(err)
        }
        Command::Expose(a) => {
            if a.suite.is_none() && a.fairness.is_none() && !a.fuzz {
                return Err("expose needs at least one of --suite, --fairness or --fuzz".into());
            }
            let suite = match &a.suite {
                Some(path) => {
                    let text = std::fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
                    Some(SuiteSpec::from_json(&text).map_err(err)?)
                }
                None => None,
            };
            let session = open_session(g).map_err(err)?;
            let mut digestibles = Vec::new();
            if let Some(spec) = &suite {
                digestibles.extend(session.run_suite(spec, g.seed).map_err(err)?);
            }
            if let Some(attribute) = &a.fairness {
                let d = session.fairness(a.split.as_deref(), attribute, a.positive_label.as_deref());
                digestibles.push(d.map_err(err)?);
            }
            if a.fuzz {
                digestibles.push(session.fuzz().map_err(err)?);
            }
            render(&session, g, digestibles).map(Outcome::Bytes).map_err(err)
        }
    }
}

/// Parse `argv` (including the program name), run, and return the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let output = cli.global.output.clone();
    match execute(cli) {
        Ok(Outcome::Served) => EXIT_OK,
        Ok(Outcome::Bytes(bytes)) => match emit(output.as_deref(), &bytes) {
            Ok(()) => EXIT_OK,
            Err(e) => {
                eprintln!("explabox: cannot write output: {e}");
                EXIT_RUNTIME
            }
        },
        Ok(Outcome::Verified(valid, bytes)) => {
            if let Err(e) = emit(output.as_deref(), &bytes) {
                eprintln!("explabox: cannot write output: {e}");
                return EXIT_RUNTIME;
            }
            if valid {
                EXIT_OK
            } else {
                eprintln!("explabox: verification failed");
                EXIT_VERIFY_FAILED
            }
        }
        Err(message) => {
            eprintln!("explabox: {message}");
            EXIT_RUNTIME
        }
    }
}

#[cfg(test)]
mod tests {
    use clap::CommandFactory;

    use super::*;

    #[test]
    fn every_flag_is_documented() {
        let cmd = Cli::command();
        let mut commands = vec![&cmd];
        commands.extend(cmd.get_subcommands());
        for c in commands {
            for arg in c.get_arguments() {
                let id = arg.get_id().as_str();
                if id == "help" || id == "version" {
                    continue;
                }
                assert!(arg.get_help().is_some(), "`{}` flag `{id}` has no help", c.get_name());
            }
        }
    }

    #[test]
    fn help_lists_every_flag() {
        let mut root = Cli::command();
        root.build();
        for sub in root.get_subcommands() {
            let help = sub.clone().render_long_help().to_string();
            for arg in sub.get_arguments() {
                if let Some(long) = arg.get_long() {
                    assert!(help.contains(&format!("--{long}")), "{} help lacks --{long}", sub.get_name());
                }
            }
        }
    }

    #[test]
    fn usage_errors_exit_2() {
        assert_eq!(run(["explabox"]), EXIT_USAGE);
        assert_eq!(run(["explabox", "frobnicate"]), EXIT_USAGE);
        assert_eq!(run(["explabox", "explore", "--seed", "minus-one"]), EXIT_USAGE);
        assert_eq!(run(["explabox", "explain", "--instance", "a", "--text", "b"]), EXIT_USAGE);
    }

    #[test]
    fn runtime_errors_exit_1() {
        assert_eq!(run(["explabox", "explore"]), EXIT_RUNTIME);
        assert_eq!(run(["explabox", "explore", "--manifest", "/nonexistent/m.json"]), EXIT_RUNTIME);
        assert_eq!(run(["explabox", "verify", "/nonexistent/r.explabox.json"]), EXIT_RUNTIME);
        assert_eq!(run(["explabox", "expose", "--manifest", "m.json"]), EXIT_RUNTIME);
    }
}
