use std::fmt;
use std::fs;
use std::path::Path;

use cfn_core::criteria::Check;
use cfn_core::CfnError;
use serde::Serialize;
use serde_json::{json, Value};

pub const VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), "+", env!("CFN_GIT_REV"));

#[derive(Debug)]
pub enum CliError {
    /// Bad flags or unusable input files.
    Config(String),
    Core(CfnError),
    Output(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Core(
                CfnError::Parse { .. }
                | CfnError::InvalidTree(_)
                | CfnError::InvalidInput(_)
                | CfnError::InvalidParameter(_)
                | CfnError::UnknownEdge(_)
                | CfnError::SameEdge(_)
                | CfnError::CapExceeded { .. },
            ) => 2,
            _ => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) | CliError::Output(m) => f.write_str(m),
            CliError::Core(e @ CfnError::CapExceeded { .. }) => {
                write!(f, "{e}; use --mode mc for trees this large")
            }
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

/// Everything a command produces: a CSV table, a JSON result and the checks
/// that `--check` gates on.
pub struct Report {
    pub csv: String,
    pub result: Value,
    pub checks: Vec<Check>,
}

impl Report {
    pub fn new<T: Serialize>(csv: String, result: &T) -> CliResult<Self> {
        let result = serde_json::to_value(result).map_err(|e| CliError::Output(e.to_string()))?;
        Ok(Report { csv, result, checks: Vec::new() })
    }

    pub fn with_checks(mut self, checks: Vec<Check>) -> Self {
        self.checks.extend(checks);
        self
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

/// Writes `<name>.csv` and `<name>.json` and prints the checks. Returns
/// whether every gated check passed.
pub fn emit<C: Serialize>(
    out: &Path,
    name: &str,
    config: &C,
    seed: u64,
    seconds: f64,
    report: &Report,
    gate: bool,
) -> CliResult<bool> {
    fs::create_dir_all(out).map_err(|e| CliError::Output(format!("cannot create {}: {e}", out.display())))?;
    let write = |file: String, body: &str| {
        let path = out.join(file);
        fs::write(&path, body).map_err(|e| CliError::Output(format!("cannot write {}: {e}", path.display())))
    };
    write(format!("{name}.csv"), &report.csv)?;
    let doc = json!({
        "command": name,
        "version": VERSION,
        "config": config,
        "seed": seed,
        "wall_clock_seconds": seconds,
        "result": report.result,
        "checks": report.checks,
        "checks_passed": report.passed(),
    });
    let text = serde_json::to_string_pretty(&doc).map_err(|e| CliError::Output(e.to_string()))?;
    write(format!("{name}.json"), &text)?;
    println!("wrote {}/{name}.csv and {name}.json ({seconds:.2}s)", out.display());
    for c in &report.checks {
        println!("  [{}] {}: {} (required {})", if c.passed { "ok" } else { "xx" }, c.name, c.measured, c.required);
    }
    Ok(!gate || report.passed())
}
