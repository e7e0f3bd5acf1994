//! Flag parsing and validation, and loading of relations.

use std::ops::RangeInclusive;
use std::path::PathBuf;

use clap::Args;
use poincare_core::equiv::{CheckOptions, PrecisionPolicy, RelationSpec, SeriesOptions, DEFAULT_SEED};
use poincare_core::localfield::is_prime;
use poincare_core::{Characteristic, Sort, SymbolTable, Var};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// Settings shared by every computing subcommand.
#[derive(Debug, Clone, Args, Serialize)]
pub struct JobArgs {
    /// Relation file: JSON with `phi`, optional `domain`, and the variable lists `x`, `y`, `params`.
    #[arg(long, value_name = "PATH")]
    pub formula: Option<PathBuf>,
    /// Analytic symbol sidecar (JSON object or array).
    #[arg(long, value_name = "PATH")]
    pub symbols: Option<PathBuf>,
    /// Shorthand for the congruence relation of a VF term, e.g. `x*y`.
    #[arg(long, value_name = "EXPR", conflicts_with = "formula")]
    pub congruence: Option<String>,
    /// Variables of the congruence term.
    #[arg(long, value_name = "LIST", default_value = "x")]
    pub vars: String,
    #[arg(long, value_name = "LIST", default_value = "3")]
    pub primes: String,
    /// `mixed`, `equal`, or both separated by a comma.
    #[arg(long, value_name = "LIST", default_value = "mixed")]
    pub case: String,
    /// Level range `a..b` (inclusive) or a single level.
    #[arg(long, value_name = "RANGE", default_value = "0..6")]
    pub n: String,
    /// `auto` (start at n + 1, escalate up to 3 more) or a fixed precision.
    #[arg(long, value_name = "auto|K", default_value = "auto")]
    pub precision: String,
    /// Bound for value-group quantifiers; defaults to the precision.
    #[arg(long, value_name = "B")]
    pub vg_bound: Option<u32>,
    #[arg(long, value_name = "S", default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    /// Count the complement of a proper domain as one more class.
    #[arg(long)]
    pub extra_class: bool,
}

/// Validated form of [`JobArgs`], apart from the relation.
pub struct Job {
    pub primes: Vec<u64>,
    pub cases: Vec<Characteristic>,
    pub n: RangeInclusive<u32>,
    pub options: SeriesOptions,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RelationFile {
    phi: String,
    #[serde(default)]
    domain: Option<String>,
    x: Vec<String>,
    y: Vec<String>,
    /// Entries `name:SORT`.
    #[serde(default = "default_params")]
    params: Vec<String>,
}

fn default_params() -> Vec<String> {
    vec!["n:VG".into()]
}

pub fn parse_primes(text: &str) -> Result<Vec<u64>, CliError> {
    let mut out = Vec::new();
    for part in text.split(',').map(str::trim) {
        let p: u64 = part.parse().map_err(|_| CliError::config("primes", format!("`{part}` is not an integer")))?;
        if !is_prime(p) {
            return Err(CliError::config("primes", format!("{p} is not prime")));
        }
        if out.contains(&p) {
            return Err(CliError::config("primes", format!("{p} listed twice")));
        }
        out.push(p);
    }
    Ok(out)
}

pub fn parse_cases(text: &str) -> Result<Vec<Characteristic>, CliError> {
    text.split(',')
        .map(|c| c.trim().parse().map_err(|_| CliError::config("case", format!("`{c}` is not mixed or equal"))))
        .collect()
}

pub fn parse_range(text: &str) -> Result<RangeInclusive<u32>, CliError> {
    let bad = || CliError::config("n", format!("`{text}` is not a level or a range a..b"));
    let (a, b) = match text.split_once("..") {
        Some((a, b)) => (a, b.trim_start_matches('=')),
        None => (text, text),
    };
    let (a, b): (u32, u32) = (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?);
    if a > b {
        return Err(CliError::config("n", format!("empty range {a}..{b}")));
    }
    Ok(a..=b)
}

pub fn parse_precision(text: &str) -> Result<PrecisionPolicy, CliError> {
    if text == "auto" {
        return Ok(PrecisionPolicy::default());
    }
    match text.parse::<u32>() {
        Ok(k) if k > 0 => Ok(PrecisionPolicy::Fixed(k)),
        _ => Err(CliError::config("precision", format!("`{text}` is not auto or a positive integer"))),
    }
}

fn parse_var(entry: &str) -> Result<Var, CliError> {
    let (name, sort) = entry
        .split_once(':')
        .ok_or_else(|| CliError::config("formula.params", format!("`{entry}` is not name:SORT")))?;
    let sort: Sort = sort.trim().parse().map_err(|_| CliError::config("formula.params", format!("bad sort in `{entry}`")))?;
    Ok(Var::new(name.trim(), sort))
}

fn load_symbols(args: &JobArgs) -> Result<SymbolTable, CliError> {
    match &args.symbols {
        None => Ok(SymbolTable::new()),
        Some(path) => {
            let text = std::fs::read_to_string(path)?;
            SymbolTable::from_json(&text).map_err(|e| CliError::config("symbols", e.to_string()))
        }
    }
}

fn load_relation(args: &JobArgs) -> Result<RelationSpec, CliError> {
    let symbols = load_symbols(args)?;
    if let Some(expr) = &args.congruence {
        let vars: Vec<&str> = args.vars.split(',').map(str::trim).filter(|v| !v.is_empty()).collect();
        return RelationSpec::congruence(expr, &vars, symbols).map_err(|e| CliError::config("congruence", e.to_string()));
    }
    let Some(path) = &args.formula else {
        return Err(CliError::config("formula", "give --formula or --congruence"));
    };
    let text = std::fs::read_to_string(path)?;
    let file: RelationFile = serde_json::from_str(&text).map_err(|e| CliError::config("formula", e.to_string()))?;
    let params = file.params.iter().map(|p| parse_var(p)).collect::<Result<Vec<_>, _>>()?;
    let x: Vec<&str> = file.x.iter().map(String::as_str).collect();
    let y: Vec<&str> = file.y.iter().map(String::as_str).collect();
    RelationSpec::parse(&file.phi, file.domain.as_deref(), &x, &y, params, symbols)
        .map_err(|e| CliError::config("formula.phi", e.to_string()))
}

impl JobArgs {
    pub fn relation(&self) -> Result<RelationSpec, CliError> {
        load_relation(self)
    }

    pub fn validate(&self) -> Result<Job, CliError> {
        let primes = parse_primes(&self.primes)?;
        let cases = parse_cases(&self.case)?;
        let n = parse_range(&self.n)?;
        let precision = parse_precision(&self.precision)?;
        if self.vg_bound == Some(0) {
            return Err(CliError::config("vg-bound", "must be positive"));
        }
        let check = CheckOptions { vg_bound: self.vg_bound, seed: self.seed, lenient: false };
        let options = SeriesOptions { precision, check, extra_class: self.extra_class };
        Ok(Job { primes, cases, n, options })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lists_and_ranges() {
        assert_eq!(parse_primes("3, 5,7").unwrap(), vec![3, 5, 7]);
        assert!(matches!(parse_primes("4"), Err(CliError::Config { ref field, .. }) if field == "primes"));
        assert!(parse_primes("3,x").is_err());
        assert_eq!(parse_range("0..6").unwrap(), 0..=6);
        assert_eq!(parse_range("2..=3").unwrap(), 2..=3);
        assert_eq!(parse_range("4").unwrap(), 4..=4);
        assert!(parse_range("5..2").is_err());
        assert_eq!(parse_precision("7").unwrap(), PrecisionPolicy::Fixed(7));
        assert!(parse_precision("0").is_err());
        assert_eq!(parse_cases("mixed,equal").unwrap(), vec![Characteristic::Mixed, Characteristic::Equal]);
    }
}
