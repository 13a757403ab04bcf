//! Command-line front end: validate scenarios, run simulations, analyze
//! traces, and emit the bundled reference scenario.
//!
//! Exit codes: 0 success, 1 runtime fault, 2 invalid input (scenario or
//! arguments), 3 KPI verdict failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use mergesim::kpi;
use mergesim::world::{reference_scenario_json, Scenario};

#[derive(Parser)]
#[command(name = "mergesim", version, about = "V2X cooperative merge simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write logs, traces, and a manifest.
    Run {
        /// Scenario JSON file.
        scenario: PathBuf,
        /// Output directory (default: ./out).
        #[arg(short, long, default_value = "out")]
        out: PathBuf,
        /// Dotted-path overrides, e.g. --set simulation.random_seed=1.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
    /// Parse and validate a scenario file.
    Validate {
        /// Scenario JSON file.
        scenario: PathBuf,
    },
    /// Analyze the traces of a completed run against a use-case requirement.
    Kpi {
        /// Run directory produced by `run`.
        run_dir: PathBuf,
        /// Requirement name, e.g. "Urban Intersection".
        #[arg(long)]
        requirement: String,
    },
    /// Write the bundled reference scenario to a file.
    Init {
        /// Destination path.
        path: PathBuf,
    },
}

const EXIT_OK: u8 = 0;
const EXIT_RUNTIME: u8 = 1;
const EXIT_INVALID: u8 = 2;
const EXIT_VERDICT_FAILED: u8 = 3;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Run { scenario, out, set } => cmd_run(&scenario, &out, &set),
        Command::Validate { scenario } => cmd_validate(&scenario),
        Command::Kpi { run_dir, requirement } => cmd_kpi(&run_dir, &requirement),
        Command::Init { path } => cmd_init(&path),
    };
    match code {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(EXIT_RUNTIME)
        }
    }
}

fn load_scenario(path: &Path, overrides: &[String]) -> Result<Scenario, String> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| format!("failed to read {}: {e}", path.display()))?;
    if overrides.is_empty() {
        return Scenario::from_json(&text).map_err(|e| e.to_string());
    }
    let mut value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| format!("invalid JSON: {e}"))?;
    for entry in overrides {
        apply_override(&mut value, entry)?;
    }
    let doc = serde_json::from_value(value).map_err(|e| format!("after overrides: {e}"))?;
    Scenario::from_doc(doc).map_err(|e| e.to_string())
}

/// Applies one `dotted.path=value` override to the scenario document. Array
/// elements are addressed by index (`flows.1.max_vehicles=5`); values parse
/// as JSON first and fall back to strings.
fn apply_override(root: &mut serde_json::Value, entry: &str) -> Result<(), String> {
    let (path, raw) = entry
        .split_once('=')
        .ok_or_else(|| format!("override {entry:?} is not KEY=VALUE"))?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| serde_json::Value::String(raw.to_string()));
    let mut cursor = root;
    let segments: Vec<&str> = path.split('.').collect();
    for (i, segment) in segments.iter().enumerate() {
        let last = i + 1 == segments.len();
        match cursor {
            serde_json::Value::Object(map) => {
                if last {
                    map.insert(segment.to_string(), value);
                    return Ok(());
                }
                cursor = map
                    .get_mut(*segment)
                    .ok_or_else(|| format!("override {path:?}: no field {segment:?}"))?;
            }
            serde_json::Value::Array(items) => {
                let idx: usize = segment
                    .parse()
                    .map_err(|_| format!("override {path:?}: {segment:?} is not an index"))?;
                let slot = items
                    .get_mut(idx)
                    .ok_or_else(|| format!("override {path:?}: index {idx} out of bounds"))?;
                if last {
                    *slot = value;
                    return Ok(());
                }
                cursor = slot;
            }
            _ => return Err(format!("override {path:?}: {segment:?} is not addressable")),
        }
    }
    Err(format!("override {path:?}: empty path"))
}

fn cmd_run(scenario_path: &Path, out: &Path, overrides: &[String]) -> anyhow::Result<u8> {
    let scenario = match load_scenario(scenario_path, overrides) {
        Ok(s) => s,
        Err(msg) => {
            eprintln!("invalid scenario: {msg}");
            return Ok(EXIT_INVALID);
        }
    };
    let report = mergesim::run(&scenario, out).context("simulation failed")?;
    println!(
        "run {} finished: {} vehicles, {} messages sent, {} delivered, {} dropped",
        report.run_id,
        report.vehicles_spawned,
        report.messages_sent,
        report.messages_delivered,
        report.messages_dropped
    );
    println!("logs:      {}", report.log_dir);
    println!("positions: {}", report.position_trace);
    println!("messages:  {}", report.message_trace);
    Ok(EXIT_OK)
}

fn cmd_validate(scenario_path: &Path) -> anyhow::Result<u8> {
    match load_scenario(scenario_path, &[]) {
        Ok(scenario) => {
            println!(
                "ok: {} routes, {} flows, {} rsus, seed {}",
                scenario.routes.len(),
                scenario.doc.flows.len(),
                scenario.doc.rsus.len(),
                scenario.seed()
            );
            Ok(EXIT_OK)
        }
        Err(msg) => {
            eprintln!("invalid scenario: {msg}");
            Ok(EXIT_INVALID)
        }
    }
}

fn cmd_kpi(run_dir: &Path, requirement: &str) -> anyhow::Result<u8> {
    let req = match kpi::find_requirement(requirement) {
        Ok(r) => r,
        Err(err) => {
            eprintln!("{err}");
            return Ok(EXIT_INVALID);
        }
    };
    let scenario_path = run_dir.join("scenario.json");
    let message_trace = run_dir.join("traces").join("messages.csv");
    let position_trace = run_dir.join("traces").join("positions.csv");
    for path in [&scenario_path, &message_trace, &position_trace] {
        if !path.exists() {
            eprintln!("not a run directory: missing {}", path.display());
            return Ok(EXIT_INVALID);
        }
    }
    let scenario = Scenario::load(&scenario_path).context("run scenario copy")?;
    let (report, details) = kpi::analyze(
        &message_trace,
        &position_trace,
        &req,
        scenario.merge_zone,
        &scenario.doc.radio,
    )?;

    let kpi_dir = run_dir.join("kpi");
    std::fs::create_dir_all(&kpi_dir).context("create kpi dir")?;
    std::fs::write(kpi_dir.join("report.json"), report.to_json()).context("write report.json")?;
    std::fs::write(kpi_dir.join("report.txt"), report.to_text()).context("write report.txt")?;
    std::fs::write(kpi_dir.join("latency.csv"), kpi::latency_csv(&details))
        .context("write latency.csv")?;
    std::fs::write(
        kpi_dir.join("zone_occupancy.csv"),
        kpi::zone_occupancy_csv(&details),
    )
    .context("write zone_occupancy.csv")?;

    print!("{}", report.to_text());
    println!("reports under {}", kpi_dir.display());
    Ok(if report.pass { EXIT_OK } else { EXIT_VERDICT_FAILED })
}

fn cmd_init(path: &Path) -> anyhow::Result<u8> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).context("create parent directory")?;
        }
    }
    std::fs::write(path, reference_scenario_json())
        .with_context(|| format!("write {}", path.display()))?;
    println!("wrote reference scenario to {}", path.display());
    Ok(EXIT_OK)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides_set_nested_and_indexed_fields() {
        let mut v: serde_json::Value = serde_json::from_str(
            r#"{"simulation":{"random_seed":5},"flows":[{"max_vehicles":100}]}"#,
        )
        .unwrap();
        apply_override(&mut v, "simulation.random_seed=1").unwrap();
        apply_override(&mut v, "flows.0.max_vehicles=7").unwrap();
        assert_eq!(v["simulation"]["random_seed"], 1);
        assert_eq!(v["flows"][0]["max_vehicles"], 7);
    }

    #[test]
    fn override_without_equals_is_rejected ()  {
        let mut v = serde_json::json!({});
        assert!(apply_override(&mut v, "no-equals").is_err());
    }

    #[test]
    fn override_strings_fall_back_unquoted() {
        let mut v = serde_json::json!({"radio": {"channel": "CCH"}});
        apply_override(&mut v, "radio.channel=SCH1").unwrap();
        assert_eq!(v["radio"]["channel"], "SCH1");
    }
}
