use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::Args;
use serde::Serialize;

use crate::error::{CliError, Status};

#[derive(Debug, Clone, Args, Serialize)]
pub struct OutputArgs {
    /// Write the main output here instead of stdout.
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
    /// For CSV-producing commands, also write the JSON report here.
    #[arg(long, value_name = "PATH")]
    pub report: Option<PathBuf>,
}

/// Self-describing JSON envelope around a command's result.
#[derive(Serialize)]
pub struct Report<'a, T: Serialize> {
    pub command: &'a str,
    pub config: serde_json::Value,
    pub seed: Option<u64>,
    pub version: &'static str,
    pub verdict: &'static str,
    pub result: T,
    pub wall_clock_ms: u128,
}

pub fn verdict(status: Status) -> &'static str {
    match status {
        Status::Pass => "PASS",
        Status::Fail => "FAIL",
        Status::Error => "ERROR",
    }
}

pub struct Emitter {
    pub command: &'static str,
    pub config: serde_json::Value,
    pub seed: Option<u64>,
    pub output: OutputArgs,
    started: Instant,
}

impl Emitter {
    pub fn new(command: &'static str, config: &impl Serialize, seed: Option<u64>, output: OutputArgs) -> Self {
        let config = serde_json::to_value(config).unwrap_or(serde_json::Value::Null);
        Emitter { command, config, seed, output, started: Instant::now() }
    }

    fn report_json<T: Serialize>(&self, status: Status, result: T) -> Result<String, CliError> {
        let report = Report {
            command: self.command,
            config: self.config.clone(),
            seed: self.seed,
            version: env!("CARGO_PKG_VERSION"),
            verdict: verdict(status),
            result,
            wall_clock_ms: self.started.elapsed().as_millis(),
        };
        let mut text = serde_json::to_string_pretty(&report)?;
        text.push('\n');
        Ok(text)
    }

    /// Writes the JSON report as the main output.
    pub fn json<T: Serialize>(&self, status: Status, result: T) -> Result<Status, CliError> {
        let text = self.report_json(status, result)?;
        write_to(self.output.out.as_deref(), text.as_bytes())?;
        Ok(status)
    }

    /// Writes CSV as the main output and the JSON report to `--report`, if given.
    pub fn csv<R: Serialize>(&self, status: Status, rows: &[R]) -> Result<Status, CliError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in rows {
            w.serialize(r)?;
        }
        let bytes = w.into_inner().map_err(|e| CliError::Io(e.into_error()))?;
        write_to(self.output.out.as_deref(), &bytes)?;
        if let Some(path) = &self.output.report {
            let text = self.report_json(status, rows)?;
            std::fs::write(path, text)?;
        }
        Ok(status)
    }
}

fn write_to(path: Option<&Path>, bytes: &[u8]) -> Result<(), CliError> {
    match path {
        Some(p) => std::fs::write(p, bytes)?,
        None => std::io::stdout().lock().write_all(bytes)?,
    }
    Ok(())
}
