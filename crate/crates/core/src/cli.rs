//! Command-line entry points. Every command reads its inputs from files and
//! writes deterministic output: the same files, flags and seed give
//! byte-identical results.

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::Deserialize;
use thiserror::Error;

use crate::algebra::{Binding, Signature, Value};
use crate::composition::{flatten, module_to_dot, module_to_json, CompositionError};
use crate::dsl::{parse_model, print_model, DslError, Model};
use crate::explore::{explore, TYPING};
use crate::mining::{analyze, export_log, EventLog, LogError, Provenance};
use crate::runs::{simulate, Outcome, RunError, Scenario, WorkloadItem};
use crate::schema::{instantiate, schema_to_dot, Net, NetError};

#[derive(Debug, Parser)]
#[command(
    name = "heraklit",
    version,
    about = "Compose, simulate and mine modular high-level Petri nets"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Dot,
    Json,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse a model, check well-formedness and instantiate the system.
    Check {
        file: PathBuf,
        /// Structure to instantiate (all of them by default).
        #[arg(long)]
        structure: Option<String>,
    },
    /// Evaluate a composition expression and print the composite.
    Compose {
        file: PathBuf,
        /// Expression over the model's modules; the system by default.
        #[arg(long)]
        expr: Option<String>,
        #[arg(long, value_enum, default_value = "json")]
        out: Format,
    },
    /// Simulate the instantiated system and write the run as a JSON-lines log.
    Simulate {
        file: PathBuf,
        #[arg(long)]
        scenario: PathBuf,
        /// Overrides the scenario's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides the scenario's step limit.
        #[arg(long)]
        max_steps: Option<usize>,
        /// Log file; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write the partial-order run as DOT.
        #[arg(long)]
        dot: Option<PathBuf>,
        #[arg(long)]
        structure: Option<String>,
    },
    /// Explore reachable markings under a scenario's workload and check the
    /// declared invariants.
    Invariants {
        file: PathBuf,
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, default_value_t = 100_000)]
        max_states: usize,
        #[arg(long)]
        structure: Option<String>,
    },
    /// Compute statistics from a run log.
    Mine {
        log: PathBuf,
        /// JSON report file; the text table always goes to stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the flattened, instantiated system.
    Export {
        file: PathBuf,
        #[arg(long, value_enum, default_value = "json")]
        out: Format,
        #[arg(long)]
        structure: Option<String>,
    },
    /// Pretty-print a model.
    Print { file: PathBuf },
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{}:{source}", path.display())]
    Dsl { path: PathBuf, source: DslError },
    #[error("{}: {message}", path.display())]
    Scenario { path: PathBuf, message: String },
    #[error("{}: {source}", path.display())]
    Log { path: PathBuf, source: LogError },
    #[error(transparent)]
    Composition(#[from] CompositionError),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Run(#[from] RunError),
    #[error("{0}")]
    Failed(String),
    #[error(transparent)]
    Stdout(#[from] io::Error),
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct ScenarioFile {
    #[serde(default)]
    workload: Vec<WorkloadEntry>,
    #[serde(default = "default_max_steps")]
    max_steps: usize,
    #[serde(default)]
    seed: u64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct WorkloadEntry {
    transition: String,
    #[serde(default)]
    binding: BTreeMap<String, String>,
}

fn default_max_steps() -> usize {
    1000
}

/// Reads `{workload: [{transition, binding}], maxSteps, seed}`; binding
/// values are token literals of the variables' sorts.
pub fn parse_scenario(json: &str, sig: &Signature) -> Result<Scenario, String> {
    let file: ScenarioFile = serde_json::from_str(json).map_err(|e| e.to_string())?;
    let mut workload = Vec::with_capacity(file.workload.len());
    for (i, w) in file.workload.into_iter().enumerate() {
        let mut b = Binding::new();
        for (var, lit) in w.binding {
            let sort = sig
                .variables
                .get(&var)
                .ok_or_else(|| format!("workload entry {i}: unknown variable {var}"))?;
            let v = Value::parse_literal(&lit, sort).map_err(|e| format!("workload entry {i}: {var}={lit}: {e}"))?;
            b.insert(var, v);
        }
        workload.push(WorkloadItem {
            transition: w.transition,
            binding: b,
        });
    }
    Ok(Scenario::new(workload, file.max_steps, file.seed))
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_owned(),
        source,
    })
}

fn write(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|source| CliError::Io {
        path: path.to_owned(),
        source,
    })
}

fn load_model(path: &Path) -> Result<Model, CliError> {
    parse_model(&read(path)?).map_err(|source| CliError::Dsl {
        path: path.to_owned(),
        source,
    })
}

fn load_scenario(path: &Path, model: &Model) -> Result<Scenario, CliError> {
    parse_scenario(&read(path)?, &model.signature).map_err(|message| CliError::Scenario {
        path: path.to_owned(),
        message,
    })
}

fn system_net(model: &Model, structure: Option<&str>) -> Result<Net, CliError> {
    let st = model.structure(structure).ok_or_else(|| {
        CliError::Failed(match structure {
            Some(s) => format!("no structure named {s}"),
            None => "the model declares no structure".into(),
        })
    })?;
    Ok(instantiate(&flatten(&model.composed)?, st)?)
}

fn pretty(v: &serde_json::Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("json values serialize");
    s.push('\n');
    s
}

/// Runs one command, writing its primary output to `out`.
pub fn run(cli: Cli, out: &mut dyn Write) -> Result<(), CliError> {
    match cli.command {
        Command::Check { file, structure } => {
            let model = load_model(&file)?;
            let schema = flatten(&model.composed)?;
            let names: Vec<&str> = match &structure {
                Some(s) => vec![s.as_str()],
                None => model.structures.iter().map(|(n, _)| n.as_str()).collect(),
            };
            for name in &names {
                system_net(&model, Some(name))?;
            }
            writeln!(
                out,
                "ok: system {} ({} modules, {} places, {} transitions, {} invariants); instantiated with {}",
                model.system_name,
                model.modules.len(),
                schema.places.len(),
                schema.transitions.len(),
                model.invariants.len(),
                if names.is_empty() {
                    "no structure".to_owned()
                } else {
                    names.join(", ")
                }
            )?;
        }
        Command::Compose {
            file,
            expr,
            out: format,
        } => {
            let model = load_model(&file)?;
            let module = match expr {
                Some(text) => {
                    let e = model.parse_expr(&text).map_err(|source| CliError::Dsl {
                        path: PathBuf::from("<expr>"),
                        source,
                    })?;
                    model.eval(&e)?
                }
                None => model.composed.clone(),
            };
            match format {
                Format::Dot => write!(out, "{}", module_to_dot(&module))?,
                Format::Json => write!(out, "{}", pretty(&module_to_json(&module)))?,
            }
        }
        Command::Simulate {
            file,
            scenario,
            seed,
            max_steps,
            out: log_path,
            dot,
            structure,
        } => {
            let model = load_model(&file)?;
            let net = system_net(&model, structure.as_deref())?;
            let mut sc = load_scenario(&scenario, &model)?;
            if let Some(seed) = seed {
                sc.seed = seed;
            }
            if let Some(n) = max_steps {
                sc.max_steps = n;
            }
            let sim = simulate(&net, &sc)?;
            let log = export_log(
                &sim.run,
                Some(Provenance {
                    net: model.system_name.clone(),
                    seed: sc.seed,
                }),
            );
            if let Some(path) = &dot {
                write(path, &sim.run.to_dot())?;
            }
            let outcome = match sim.outcome {
                Outcome::Complete => "complete".to_owned(),
                Outcome::StepLimit => "step limit reached".to_owned(),
                Outcome::IncompleteWorkload { fired, pending } => {
                    format!("workload stuck after {fired} entries, {pending} pending")
                }
            };
            match &log_path {
                Some(path) => {
                    write(path, &log.to_jsonl())?;
                    writeln!(out, "{} events, {outcome}", log.records.len())?;
                }
                None => {
                    write!(out, "{}", log.to_jsonl())?;
                    eprintln!("{} events, {outcome}", log.records.len());
                }
            }
        }
        Command::Invariants {
            file,
            scenario,
            max_states,
            structure,
        } => {
            let model = load_model(&file)?;
            let net = system_net(&model, structure.as_deref())?;
            let sc = load_scenario(&scenario, &model)?;
            let report = explore(&net, &sc.workload, &model.invariants, max_states);
            writeln!(
                out,
                "explored {} states, {} edges{}",
                report.states,
                report.edges,
                if report.exhaustive { "" } else { " (truncated)" }
            )?;
            let names = std::iter::once(TYPING).chain(model.invariants.iter().map(|i| i.name()));
            for name in names {
                let verdict = if report.holds(name) { "holds" } else { "VIOLATED" };
                writeln!(out, "{name}: {verdict} ({} checks)", report.checks[name])?;
            }
            for v in &report.violations {
                writeln!(out, "  {}: {} at {}", v.invariant, v.detail, v.marking)?;
            }
            if !report.violations.is_empty() {
                return Err(CliError::Failed(format!(
                    "{} invariant violations",
                    report.violations.len()
                )));
            }
            if !report.exhaustive {
                return Err(CliError::Failed(format!(
                    "exploration stopped at {max_states} states; raise --max-states"
                )));
            }
        }
        Command::Mine { log, out: report_path } => {
            let text = read(&log)?;
            let events = EventLog::read_jsonl(text.as_bytes()).map_err(|source| CliError::Log {
                path: log.clone(),
                source,
            })?;
            let report = analyze(&events);
            if let Some(path) = &report_path {
                let mut json = report.to_json();
                json.push('\n');
                write(path, &json)?;
            }
            write!(out, "{}", report.to_table())?;
        }
        Command::Export {
            file,
            out: format,
            structure,
        } => {
            let model = load_model(&file)?;
            let net = system_net(&model, structure.as_deref())?;
            match format {
                Format::Dot => write!(out, "{}", schema_to_dot(&net.schema))?,
                Format::Json => write!(out, "{}", pretty(&net.to_json()))?,
            }
        }
        Command::Print { file } => {
            let model = load_model(&file)?;
            write!(out, "{}", print_model(&model))?;
        }
    }
    Ok(())
}

/// Parses `args`, runs the command and returns the process exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let stdout = io::stdout();
    let mut lock = stdout.lock();
    match run(cli, &mut lock) {
        Ok(()) => 0,
        Err(e) => {
            let _ = lock.flush();
            eprintln!("error: {e}");
            1
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::service_system::signature;

    #[test]
    fn scenario_literals_follow_variable_sorts() {
        let sc = parse_scenario(
            r#"{"workload":[{"transition":"clients.a","binding":{"c":"c1","s":"s1"}}],"maxSteps":50,"seed":7}"#,
            &signature(),
        )
        .unwrap();
        assert_eq!((sc.max_steps, sc.seed), (50, 7));
        assert_eq!(sc.workload[0].binding.get("c"), Some(&Value::atom("c1", "C")));
        assert!(parse_scenario(r#"{"workload":[{"transition":"a","binding":{"q":"x"}}]}"#, &signature()).is_err());
        assert!(parse_scenario(r#"{"steps":3}"#, &signature()).is_err());
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
