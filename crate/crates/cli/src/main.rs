mod commands;
mod config;
mod error;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;

use crate::config::JobArgs;
use crate::error::{CliError, Status};
use crate::report::{Emitter, OutputArgs};

/// Counts equivalence classes of definable relations over truncated p-adic
/// and Laurent series rings, and fits their generating series.
#[derive(Parser)]
#[command(name = "poincare", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse a formula and print its canonical form.
    ParseCheck {
        text: Option<String>,
        #[arg(long, value_name = "PATH")]
        symbols: Option<PathBuf>,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Class counts with stability information, as JSON.
    Count {
        #[command(flatten)]
        job: JobArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Coefficient table as CSV: prime, case, n, a_n, stable.
    Series {
        #[command(flatten)]
        job: JobArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Fit a rational function to each sequence of a coefficient CSV.
    Fit {
        #[arg(long, value_name = "PATH")]
        input: PathBuf,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Fit, then factor the denominator as a product of `1 - q^a T^b`.
    Shape {
        #[arg(long, value_name = "PATH")]
        input: PathBuf,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Fit coefficients as polynomials in q and check them on the largest prime.
    Uniform {
        /// Coefficient CSV; computed from the relation when absent.
        #[arg(long, value_name = "PATH")]
        input: Option<PathBuf>,
        #[arg(long, value_name = "D")]
        degree_cap: Option<usize>,
        #[command(flatten)]
        job: JobArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Multibox summary of every class, plus the empirical multinumber bound.
    Multibox {
        /// Coordinate order as a 0-based list, e.g. `1,0`.
        #[arg(long, value_name = "LIST")]
        permutation: Option<String>,
        #[command(flatten)]
        job: JobArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Per-class masses and the class count recovered by integration.
    Classmass {
        #[command(flatten)]
        job: JobArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Run the same job in both characteristics and diff the tables.
    CompareFields {
        #[command(flatten)]
        job: JobArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
}

#[derive(Serialize)]
struct FileConfig<'a> {
    input: Option<&'a PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    degree_cap: Option<usize>,
}

fn run(cli: Cli) -> Result<Status, CliError> {
    match cli.command {
        Command::ParseCheck { text, symbols, output } => {
            #[derive(Serialize)]
            struct Config<'a> {
                text: Option<&'a str>,
                symbols: Option<&'a PathBuf>,
            }
            let emit = Emitter::new("parse-check", &Config { text: text.as_deref(), symbols: symbols.as_ref() }, None, output);
            commands::parse_check(text.as_deref(), symbols.as_deref(), &emit)
        }
        Command::Count { job, output } => commands::count(&job, &Emitter::new("count", &job, Some(job.seed), output)),
        Command::Series { job, output } => commands::series(&job, &Emitter::new("series", &job, Some(job.seed), output)),
        Command::Fit { input, output } => {
            let emit = Emitter::new("fit", &FileConfig { input: Some(&input), degree_cap: None }, None, output);
            commands::fit(&input, &emit)
        }
        Command::Shape { input, output } => {
            let emit = Emitter::new("shape", &FileConfig { input: Some(&input), degree_cap: None }, None, output);
            commands::shape(&input, &emit)
        }
        Command::Uniform { input, degree_cap, job, output } => {
            #[derive(Serialize)]
            struct Config<'a> {
                #[serde(flatten)]
                file: FileConfig<'a>,
                #[serde(flatten)]
                job: &'a JobArgs,
            }
            let config = Config { file: FileConfig { input: input.as_ref(), degree_cap }, job: &job };
            let emit = Emitter::new("uniform", &config, Some(job.seed), output);
            commands::uniform(&job, input.as_deref(), degree_cap, &emit)
        }
        Command::Multibox { permutation, job, output } => {
            #[derive(Serialize)]
            struct Config<'a> {
                permutation: Option<&'a str>,
                #[serde(flatten)]
                job: &'a JobArgs,
            }
            let emit = Emitter::new("multibox", &Config { permutation: permutation.as_deref(), job: &job }, Some(job.seed), output);
            commands::multibox_cmd(&job, permutation.as_deref(), &emit)
        }
        Command::Classmass { job, output } => {
            commands::classmass(&job, &Emitter::new("classmass", &job, Some(job.seed), output))
        }
        Command::CompareFields { job, output } => {
            commands::compare(&job, &Emitter::new("compare-fields", &job, Some(job.seed), output))
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(status) => ExitCode::from(status as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(Status::Error as u8)
        }
    }
}
