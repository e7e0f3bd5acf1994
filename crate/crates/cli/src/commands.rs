use std::collections::BTreeMap;
use std::path::Path;

use poincare_core::equiv::{
    compare_fields, partition, series_coeffs, Coefficient, PrecisionPolicy, RelationSpec,
};
use poincare_core::motivic::{class_mass_check, count_via_integral, ClassMass};
use poincare_core::multibox::{bound_scan, multibox, FiniteSubset, MultiboxError};
use poincare_core::poly::Poly;
use poincare_core::series::{
    denominator_shape, min_recurrence, to_rationals, uniformity_fit, RationalFn, SeriesError, ShapeFactor,
};
use poincare_core::{parse_with, Characteristic, FieldSpec, SymbolTable};
use serde::{Deserialize, Serialize};

use crate::config::{parse_cases, Job, JobArgs};
use crate::error::{CliError, Status};
use crate::report::Emitter;

/// One coefficient-table row, the CSV schema shared by `series`, `fit`, `shape` and `uniform`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoefficientRow {
    pub prime: u64,
    pub case: String,
    pub n: u32,
    pub a_n: Option<u64>,
    pub stable: bool,
}

fn coefficient_status(c: &Coefficient) -> Status {
    match c {
        Coefficient::Count(cc) if cc.stable => Status::Pass,
        Coefficient::Count(_) | Coefficient::Divergent { .. } | Coefficient::NotEquivalence { .. } => Status::Fail,
        Coefficient::Error { .. } => Status::Error,
    }
}

/// Starting precision for single-precision computations at level `n`.
fn precision_for(job: &Job, n: u32) -> u32 {
    match job.options.precision {
        PrecisionPolicy::Fixed(k) => k,
        PrecisionPolicy::Auto { .. } => n + 1,
    }
}

fn compute(e: impl std::fmt::Display) -> CliError {
    CliError::compute(e)
}

pub fn parse_check(text: Option<&str>, symbols: Option<&Path>, emit: &Emitter) -> Result<Status, CliError> {
    #[derive(Serialize)]
    struct Parsed {
        canonical: Option<String>,
        free_vars: Vec<String>,
        error: Option<String>,
    }
    let Some(text) = text else {
        return Err(CliError::config("formula", "give the formula text"));
    };
    let table = match symbols {
        Some(p) => SymbolTable::from_json(&std::fs::read_to_string(p)?)
            .map_err(|e| CliError::config("symbols", e.to_string()))?,
        None => SymbolTable::new(),
    };
    let (status, parsed) = match parse_with(text, &table) {
        Ok(f) => {
            let free_vars = f.free_vars().iter().map(|v| v.to_string()).collect();
            (Status::Pass, Parsed { canonical: Some(f.to_canonical()), free_vars, error: None })
        }
        Err(e) => (Status::Fail, Parsed { canonical: None, free_vars: Vec::new(), error: Some(e.to_string()) }),
    };
    emit.json(status, parsed)
}

/// `(prime, case, n, a_n)`.
type TableRow = (u64, Characteristic, u32, Coefficient);

fn coefficient_rows(
    rel: &RelationSpec,
    job: &Job,
) -> Result<(Status, Vec<TableRow>), CliError> {
    let mut status = Status::Pass;
    let mut out = Vec::new();
    for &p in &job.primes {
        for &case in &job.cases {
            for (n, c) in series_coeffs(rel, case, p, job.n.clone(), &job.options).map_err(compute)? {
                status = status.worst(coefficient_status(&c));
                out.push((p, case, n, c));
            }
        }
    }
    Ok((status, out))
}

pub fn count(args: &JobArgs, emit: &Emitter) -> Result<Status, CliError> {
    #[derive(Serialize)]
    struct Row {
        prime: u64,
        case: Characteristic,
        n: u32,
        coefficient: Coefficient,
    }
    let job = args.validate()?;
    let rel = args.relation()?;
    let (status, rows) = coefficient_rows(&rel, &job)?;
    let rows: Vec<Row> =
        rows.into_iter().map(|(prime, case, n, coefficient)| Row { prime, case, n, coefficient }).collect();
    emit.json(status, rows)
}

pub fn series(args: &JobArgs, emit: &Emitter) -> Result<Status, CliError> {
    let job = args.validate()?;
    let rel = args.relation()?;
    let (status, rows) = coefficient_rows(&rel, &job)?;
    let rows: Vec<CoefficientRow> = rows
        .into_iter()
        .map(|(prime, case, n, c)| CoefficientRow { prime, case: case.to_string(), n, a_n: c.value(), stable: c.value().is_some() })
        .collect();
    emit.csv(status, &rows)
}

/// Sequences `a_0, a_1, ...` per `(prime, case)` from a coefficient CSV.
fn read_sequences(input: &Path) -> Result<BTreeMap<(u64, String), Vec<u64>>, CliError> {
    let mut rdr = csv::Reader::from_path(input)?;
    let mut rows: BTreeMap<(u64, String), BTreeMap<u32, Option<u64>>> = BTreeMap::new();
    for r in rdr.deserialize() {
        let r: CoefficientRow = r?;
        rows.entry((r.prime, r.case)).or_default().insert(r.n, if r.stable { r.a_n } else { None });
    }
    let mut out = BTreeMap::new();
    for (key, by_n) in rows {
        let mut seq = Vec::new();
        for (i, (&n, &a)) in by_n.iter().enumerate() {
            if n as usize != i {
                return Err(CliError::config("input", format!("p={} {}: levels must run 0, 1, 2, ...", key.0, key.1)));
            }
            let a = a.ok_or_else(|| CliError::config("input", format!("p={} {} n={n}: no stable count", key.0, key.1)))?;
            seq.push(a);
        }
        out.insert(key, seq);
    }
    if out.is_empty() {
        return Err(CliError::config("input", "no rows"));
    }
    Ok(out)
}

fn strings(p: &Poly) -> Vec<String> {
    p.coeffs().iter().map(|c| c.to_string()).collect()
}

#[derive(Serialize)]
struct Fitted {
    prime: u64,
    case: String,
    terms: usize,
    num: Vec<String>,
    den: Vec<String>,
    function: String,
}

fn fitted(prime: u64, case: &str, terms: usize, f: &RationalFn) -> Fitted {
    Fitted {
        prime,
        case: case.to_string(),
        terms,
        num: strings(f.numerator()),
        den: strings(f.denominator()),
        function: f.to_string(),
    }
}

#[derive(Serialize)]
struct Failure {
    prime: u64,
    case: String,
    error: String,
}

pub fn fit(input: &Path, emit: &Emitter) -> Result<Status, CliError> {
    #[derive(Serialize)]
    struct Out {
        fits: Vec<Fitted>,
        failures: Vec<Failure>,
    }
    let mut out = Out { fits: Vec::new(), failures: Vec::new() };
    for ((prime, case), seq) in read_sequences(input)? {
        match min_recurrence(&to_rationals(&seq)) {
            Ok(f) => out.fits.push(fitted(prime, &case, seq.len(), &f)),
            Err(e) => out.failures.push(Failure { prime, case, error: e.to_string() }),
        }
    }
    let status = if out.failures.is_empty() { Status::Pass } else { Status::Fail };
    emit.json(status, out)
}

pub fn shape(input: &Path, emit: &Emitter) -> Result<Status, CliError> {
    #[derive(Serialize)]
    struct Shaped {
        #[serde(flatten)]
        fit: Fitted,
        /// Pairs `(a, b)` of the factors `1 - q^a T^b`.
        factors: Vec<(i64, u32)>,
        residual_scalar: String,
    }
    #[derive(Serialize)]
    struct Out {
        shapes: Vec<Shaped>,
        failures: Vec<Failure>,
    }
    let pairs = |fs: &[ShapeFactor]| fs.iter().map(|f| (f.a, f.b)).collect::<Vec<_>>();
    let mut out = Out { shapes: Vec::new(), failures: Vec::new() };
    for ((prime, case), seq) in read_sequences(input)? {
        let f = match min_recurrence(&to_rationals(&seq)) {
            Ok(f) => f,
            Err(e) => {
                out.failures.push(Failure { prime, case, error: e.to_string() });
                continue;
            }
        };
        match denominator_shape(&f, prime) {
            Ok(s) => out.shapes.push(Shaped {
                fit: fitted(prime, &case, seq.len(), &f),
                factors: pairs(&s.factors),
                residual_scalar: s.residual_scalar.to_string(),
            }),
            Err(e @ SeriesError::ShapeNotFound { .. }) => out.failures.push(Failure { prime, case, error: e.to_string() }),
            Err(e) => return Err(compute(e)),
        }
    }
    let status = if out.failures.is_empty() { Status::Pass } else { Status::Fail };
    emit.json(status, out)
}

pub fn uniform(args: &JobArgs, input: Option<&Path>, degree_cap: Option<usize>, emit: &Emitter) -> Result<Status, CliError> {
    #[derive(Serialize)]
    struct Out {
        case: String,
        training: Vec<u64>,
        held_out: Option<u64>,
        degree_cap: usize,
        /// Fitted `a_n` as polynomials in `q`, from `n = 0`.
        polynomials: Vec<String>,
        error: Option<String>,
    }
    let case = *parse_cases(&args.case)?
        .first()
        .ok_or_else(|| CliError::config("case", "no case given"))?;
    let table: Vec<(u64, Vec<u64>)> = match input {
        Some(path) => read_sequences(path)?
            .into_iter()
            .filter(|((_, c), _)| *c == case.to_string())
            .map(|((p, _), seq)| (p, seq))
            .collect(),
        None => {
            let job = args.validate()?;
            if *job.n.start() != 0 {
                return Err(CliError::config("n", "uniformity needs levels from 0"));
            }
            let rel = args.relation()?;
            let mut table = Vec::new();
            for &p in &job.primes {
                let mut seq = Vec::new();
                for (n, c) in series_coeffs(&rel, case, p, job.n.clone(), &job.options).map_err(compute)? {
                    seq.push(c.value().ok_or_else(|| compute(format!("p={p} n={n}: {c:?}")))?);
                }
                table.push((p, seq));
            }
            table
        }
    };
    let top = table.iter().map(|(_, s)| s.len()).max().unwrap_or(0).saturating_sub(1);
    let cap = degree_cap.unwrap_or(top / 2);
    let rows: Vec<_> = table.iter().map(|(p, s)| (*p, to_rationals(s))).collect();
    let mut primes: Vec<u64> = table.iter().map(|(p, _)| *p).collect();
    primes.sort_unstable();
    let (status, out) = match uniformity_fit(&rows, cap) {
        Ok(fit) => (
            Status::Pass,
            Out {
                case: case.to_string(),
                training: fit.training,
                held_out: Some(fit.held_out),
                degree_cap: cap,
                polynomials: fit.polynomials.iter().map(|p| p.display_in("q")).collect(),
                error: None,
            },
        ),
        Err(e @ SeriesError::UniformityRejected { .. }) => (
            Status::Fail,
            Out {
                case: case.to_string(),
                training: primes[..primes.len().saturating_sub(1)].to_vec(),
                held_out: primes.last().copied(),
                degree_cap: cap,
                polynomials: Vec::new(),
                error: Some(e.to_string()),
            },
        ),
        Err(e) => return Err(CliError::config("primes", e.to_string())),
    };
    emit.json(status, out)
}

pub fn multibox_cmd(args: &JobArgs, permutation: Option<&str>, emit: &Emitter) -> Result<Status, CliError> {
    #[derive(Serialize)]
    struct Row {
        prime: u64,
        case: Characteristic,
        n: u32,
        precision: u32,
        classes: usize,
        /// Number of classes per multivolume.
        multivolumes: BTreeMap<String, usize>,
        /// Classes with an exponent at the precision limit.
        precision_limited: usize,
        /// Largest product of `Multinumber_m` over classes and points of their multiboxes.
        max_upper_product: Option<u64>,
        error: Option<String>,
    }
    #[derive(Serialize)]
    struct Scan {
        case: Characteristic,
        q: u64,
        per_prime: Vec<(u64, u64)>,
        growth_warning: bool,
    }
    #[derive(Serialize)]
    struct Out {
        rows: Vec<Row>,
        bound_scans: Vec<Scan>,
    }
    let job = args.validate()?;
    let rel = args.relation()?;
    let perm: Option<Vec<usize>> = permutation
        .map(|t| {
            t.split(',')
                .map(|s| s.trim().parse::<usize>().map_err(|_| CliError::config("permutation", format!("`{t}`"))))
                .collect()
        })
        .transpose()?;
    let mut status = Status::Pass;
    let mut out = Out { rows: Vec::new(), bound_scans: Vec::new() };
    for &prime in &job.primes {
        for &case in &job.cases {
            for n in job.n.clone() {
                let precision = precision_for(&job, n);
                let spec = FieldSpec::new(case, prime, precision).map_err(compute)?;
                let part = partition(&rel, &spec, &[n as i64]).map_err(compute)?;
                let mut row = Row {
                    prime,
                    case,
                    n,
                    precision,
                    classes: part.classes.len(),
                    multivolumes: BTreeMap::new(),
                    precision_limited: 0,
                    max_upper_product: Some(0),
                    error: None,
                };
                for class in &part.classes {
                    let mut x = FiniteSubset::from_boxes(spec, part.arity, part.level, class.iter().cloned()).map_err(compute)?;
                    if let Some(p) = &perm {
                        x = x.permute(p).map_err(|e| CliError::config("permutation", e.to_string()))?;
                    }
                    let report = multibox(&x).map_err(compute)?;
                    *row.multivolumes.entry(report.multivolume.to_string()).or_default() += 1;
                    if report.precision_limited.iter().any(|&f| f) {
                        row.precision_limited += 1;
                    }
                    for b in report.mb.boxes() {
                        let mut prod = 1u64;
                        for m in 1..=part.arity {
                            match report.multinumber_upper(b, m) {
                                Ok(k) => prod *= k,
                                Err(e @ MultiboxError::PrecisionInconclusive { .. }) => {
                                    row.error = Some(e.to_string());
                                    row.max_upper_product = None;
                                }
                                Err(e) => return Err(compute(e)),
                            }
                        }
                        if let Some(best) = row.max_upper_product.as_mut() {
                            *best = (*best).max(prod);
                        }
                    }
                }
                if row.error.is_some() {
                    status = status.worst(Status::Fail);
                }
                out.rows.push(row);
            }
        }
    }
    if perm.is_none() {
        for &case in &job.cases {
            let scan = bound_scan(&rel, case, &job.primes, job.n.clone()).map_err(compute)?;
            out.bound_scans.push(Scan { case, q: scan.q, per_prime: scan.per_prime, growth_warning: scan.growth_warning });
        }
    }
    emit.json(status, out)
}

pub fn classmass(args: &JobArgs, emit: &Emitter) -> Result<Status, CliError> {
    #[derive(Serialize)]
    struct Row {
        prime: u64,
        case: Characteristic,
        n: u32,
        precision: u32,
        classes: Vec<ClassMass>,
        all_one: bool,
        integral: String,
        count: u64,
        matches: bool,
    }
    let job = args.validate()?;
    let rel = args.relation()?;
    let mut status = Status::Pass;
    let mut rows = Vec::new();
    for &prime in &job.primes {
        for &case in &job.cases {
            for n in job.n.clone() {
                let spec = FieldSpec::new(case, prime, precision_for(&job, n)).map_err(compute)?;
                let z = [n as i64];
                let report = class_mass_check(&rel, &spec, &z).map_err(compute)?;
                let civ = count_via_integral(&rel, &spec, &z).map_err(compute)?;
                if !report.all_one || !civ.matches {
                    status = Status::Fail;
                }
                rows.push(Row {
                    prime,
                    case,
                    n,
                    precision: report.precision,
                    classes: report.classes,
                    all_one: report.all_one,
                    integral: civ.integral.to_string(),
                    count: civ.count,
                    matches: civ.matches,
                });
            }
        }
    }
    emit.json(status, rows)
}

pub fn compare(args: &JobArgs, emit: &Emitter) -> Result<Status, CliError> {
    let job = args.validate()?;
    let rel = args.relation()?;
    let rows = compare_fields(&rel, &job.primes, job.n.clone(), &job.options).map_err(compute)?;
    let status = if rows.iter().all(|r| r.agree) { Status::Pass } else { Status::Fail };
    emit.json(status, rows)
}
