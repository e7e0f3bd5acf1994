//! Oracles and check routines shared by the property suites and the
//! acceptance runner. Checks return `Err` with a description instead of
//! panicking.
#![allow(dead_code)]

use std::collections::BTreeSet;

use poincare_core::equiv::{
    check_equivalence, check_equivalence_with, Axiom, CheckOptions, EquivalenceVerdict, RelationSpec,
};
use poincare_core::eval::{eval, Environment, EvalVerdict};
use poincare_core::multibox::{multibox, FiniteSubset, Multivolume};
use poincare_core::{parse, Characteristic, FieldSpec, Formula, SymbolTable, Var};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Check = Result<(), String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

pub const CASES: [Characteristic; 2] = [Characteristic::Mixed, Characteristic::Equal];

// ---- truncated rings ----

fn digits(mut a: u64, p: u64, n: u32) -> Vec<u64> {
    (0..n)
        .map(|_| {
            let d = a % p;
            a /= p;
            d
        })
        .collect()
}

fn undigits(d: &[u64], p: u64) -> u64 {
    d.iter().rev().fold(0, |acc, &x| acc * p + x)
}

/// Schoolbook product in `Z/p^N` or `F_p[t]/t^N`, independent of the library.
pub fn oracle_mul(case: Characteristic, p: u64, n: u32, a: u64, b: u64) -> u64 {
    match case {
        Characteristic::Mixed => ((a as u128 * b as u128) % (p as u128).pow(n)) as u64,
        Characteristic::Equal => {
            let (da, db) = (digits(a, p, n), digits(b, p, n));
            let mut out = vec![0u64; n as usize];
            for i in 0..n as usize {
                for j in 0..n as usize - i {
                    out[i + j] = (out[i + j] + da[i] * db[j]) % p;
                }
            }
            undigits(&out, p)
        }
    }
}

pub fn oracle_add(case: Characteristic, p: u64, n: u32, a: u64, b: u64) -> u64 {
    match case {
        Characteristic::Mixed => (a + b) % p.pow(n),
        Characteristic::Equal => {
            let d: Vec<u64> = digits(a, p, n).iter().zip(digits(b, p, n)).map(|(x, y)| (x + y) % p).collect();
            undigits(&d, p)
        }
    }
}

/// Arithmetic against the oracles, with ord/ac multiplicativity and the
/// ultrametric inequality, over every pair at `p <= 3`, `N <= 3`.
pub fn ord_ac_exhaustive() -> Check {
    for case in CASES {
        for p in [2u64, 3] {
            for n in 1..=3u32 {
                let spec = FieldSpec::new(case, p, n).map_err(|e| e.to_string())?;
                for a in 0..spec.size() {
                    for b in 0..spec.size() {
                        let at = format!("{case} p={p} N={n} a={a} b={b}");
                        let ab = spec.mul_raw(a, b);
                        ensure!(ab == oracle_mul(case, p, n, a, b), "product at {at}");
                        match (spec.ord_raw(a), spec.ord_raw(b)) {
                            (Some(i), Some(j)) if i + j < n => {
                                ensure!(spec.ord_raw(ab) == Some(i + j), "ord of product at {at}");
                                ensure!(spec.ac_raw(ab) == spec.ac_raw(a) * spec.ac_raw(b) % p, "ac of product at {at}");
                            }
                            _ => ensure!(spec.ord_raw(ab).is_none(), "product should vanish at {at}"),
                        }
                        let s = spec.add_raw(a, b);
                        ensure!(s == oracle_add(case, p, n, a, b), "sum at {at}");
                        let lower = match (spec.ord_raw(a), spec.ord_raw(b)) {
                            (Some(i), Some(j)) => Some(i.min(j)),
                            (x, None) | (None, x) => x,
                        };
                        if let (Some(o), Some(l)) = (spec.ord_raw(s), lower) {
                            ensure!(o >= l, "ultrametric inequality at {at}");
                        }
                        ensure!(spec.add_raw(spec.sub_raw(a, b), b) == a, "subtraction at {at}");
                    }
                }
            }
        }
    }
    Ok(())
}

// ---- parser fuzz ----

const TOKENS: &[&str] = &[
    "x:VF", "y:VF", "x", "y", "n:VG", "n", "u:RF", "u", "ord(", "ac(", "(", ")", "+", "-", "*", "^", "2", "0",
    "1", "-3", "=", "<", ">", "<=", ">=", "/\\", "\\/", "~", "->", "E", "A", "z:VF.", "v:RF.", "m:VG.", ".", ":",
    "VF", "RF", "VG", "f(", ",", " ", "@", "99999999999999999999",
];

const SEEDS: &[&str] = &[
    "E y:VF. ord(x:VF - y) >= n:VG",
    "ord(x:VF * y:VF) >= n:VG /\\ ord(x - y) >= n",
    "A u:RF. E v:RF. u = v^2 \\/ u = 2 * v^2",
    "~(a:VG = 1 \\/ a < 2) -> (b:VG = a -> b = 3)",
    "ac(x:VF - (y:VF - 1)) = -1",
    "E m:VG. ord(x:VF) = m /\\ m <= 2 * n:VG - -3",
];

const MUTATIONS: &[char] = &['(', ')', '+', '-', '*', '^', '=', '<', '>', '.', ':', '~', '/', '\\', ' ', 'x', 'y', 'n', '0'];

/// A seed formula with a few characters deleted, duplicated or replaced.
fn mutated_seed(rng: &mut ChaCha8Rng) -> String {
    let mut chars: Vec<char> = SEEDS[rng.gen_range(0..SEEDS.len())].chars().collect();
    for _ in 0..rng.gen_range(0..3) {
        let i = rng.gen_range(0..chars.len());
        match rng.gen_range(0..3) {
            0 => {
                chars.remove(i);
            }
            1 => chars.insert(i, chars[i]),
            _ => chars[i] = *MUTATIONS.choose(rng).unwrap(),
        }
    }
    chars.into_iter().collect()
}

fn random_input(rng: &mut ChaCha8Rng) -> String {
    if rng.gen_bool(0.4) {
        return mutated_seed(rng);
    }
    if rng.gen_bool(0.2) {
        let len = rng.gen_range(0..40);
        return (0..len).map(|_| char::from_u32(rng.gen_range(0x20..0x7f)).unwrap_or('?')).collect();
    }
    let len = rng.gen_range(0..24);
    let mut s = String::new();
    for _ in 0..len {
        s.push_str(TOKENS[rng.gen_range(0..TOKENS.len())]);
        if rng.gen_bool(0.5) {
            s.push(' ');
        }
    }
    s
}

/// Feeds `count` random inputs to the parser; every accepted input must
/// round-trip through the canonical printer. Returns the number accepted.
pub fn parser_fuzz(count: usize, seed: u64) -> Result<usize, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut accepted = 0;
    for _ in 0..count {
        let text = random_input(&mut rng);
        let outcome = std::panic::catch_unwind(|| parse(&text));
        let Ok(parsed) = outcome else {
            return Err(format!("parser panicked on {text:?}"));
        };
        if let Ok(f) = parsed {
            accepted += 1;
            let printed = f.to_canonical();
            match parse(&printed) {
                Ok(g) if g == f => {}
                Ok(_) => return Err(format!("{text:?} printed as {printed:?} reparses differently")),
                Err(e) => return Err(format!("{text:?} printed as {printed:?}: {e}")),
            }
        }
    }
    Ok(accepted)
}

// ---- evaluation ----

/// Formulas in the free variables `x, y : VF` and `n : VG`.
pub const MONOTONE_CORPUS: &[&str] = &[
    "ord(x:VF - y:VF) >= n:VG",
    "ord(x:VF) = n:VG",
    "ord(x:VF * y:VF) < n:VG + 1",
    "ac(x:VF) = ac(y:VF)",
    "x:VF = y:VF",
    "~(x:VF = y:VF) \\/ ord(x) >= n:VG",
    "E z:VF. ord(x:VF - z) >= n:VG /\\ ord(z - y:VF) >= n",
    "A z:VF. ord(z - x:VF) >= n:VG -> ord(z - y:VF) >= n",
    "E m:VG. ord(x:VF) = m /\\ m >= n:VG",
    "A m:VG. m < ord(x:VF - y:VF) -> m < n:VG + 2",
    "E u:RF. ac(x:VF) = u * u /\\ ord(y:VF) <= n:VG",
    "ac(x:VF + y:VF) = ac(x) + ac(y) \\/ ord(x) < n:VG",
];

fn verdict(f: &Formula, spec: &FieldSpec, x: u64, y: u64, n: i64) -> Result<EvalVerdict, String> {
    let env = Environment::new()
        .vf("x", spec.from_repr(x).map_err(|e| e.to_string())?)
        .vf("y", spec.from_repr(y).map_err(|e| e.to_string())?)
        .vg("n", n);
    eval(f, &env, spec).map_err(|e| e.to_string())
}

/// A stable verdict at precision `N` persists, unchanged, on every lift to `N + 1`.
pub fn monotone_stability() -> Check {
    for text in MONOTONE_CORPUS {
        let f = parse(text).map_err(|e| e.to_string())?;
        for case in CASES {
            for (p, top) in [(2u64, 4u32), (3, 3)] {
                for prec in 1..top {
                    let spec = FieldSpec::new(case, p, prec).map_err(|e| e.to_string())?;
                    let finer = spec.with_precision(prec + 1).map_err(|e| e.to_string())?;
                    let step = spec.size();
                    for n in -1..=prec as i64 + 1 {
                        for x in 0..spec.size() {
                            for y in 0..spec.size() {
                                let v = verdict(&f, &spec, x, y, n)?;
                                if !v.stable {
                                    continue;
                                }
                                for i in 0..p {
                                    for j in 0..p {
                                        let w = verdict(&f, &finer, x + i * step, y + j * step, n)?;
                                        ensure!(
                                            w.stable && w.value == v.value,
                                            "{text} {case} p={p} N={prec} x={x} y={y} n={n}: {v:?} then {w:?}"
                                        );
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(())
}

// ---- equivalence axioms ----

/// Relations that each break exactly one axiom, with that axiom.
pub const BROKEN: &[(&str, Axiom)] = &[
    // ord(0) is never a finite n, so no point is related to itself.
    ("ord(x:VF - y:VF) = n:VG", Axiom::Reflexivity),
    // x ~ x - 1 but not x - 1 ~ x.
    ("ord(x:VF - y:VF) >= n:VG \\/ ord(x - y - 1) >= n", Axiom::Symmetry),
    // 0 ~ 1 ~ 2 but 0 and 2 are unrelated for p >= 3.
    ("ord(x:VF - y:VF) >= n:VG \\/ ord(x - y - 1) >= n \\/ ord(y - x - 1) >= n", Axiom::Transitivity),
];

pub fn broken_relation(phi: &str) -> RelationSpec {
    RelationSpec::parse(phi, None, &["x"], &["y"], vec![Var::vg("n")], SymbolTable::new()).unwrap()
}

fn related(rel: &RelationSpec, spec: &FieldSpec, x: u64, y: u64, n: i64) -> Result<bool, String> {
    let v = verdict(&rel.phi, spec, x, y, n)?;
    ensure!(v.stable, "undecided relation at x={x} y={y}");
    Ok(v.value)
}

/// Re-evaluates the relation on the reported witnesses.
pub fn confirm_counterexample(
    rel: &RelationSpec,
    spec: &FieldSpec,
    n: i64,
    verdict: &EquivalenceVerdict,
    expect: Axiom,
) -> Check {
    let EquivalenceVerdict::Counterexample(cex) = verdict else {
        return Err(format!("{} not caught at {spec:?}", rel.phi));
    };
    ensure!(cex.axiom == expect, "{}: reported {:?}, expected {expect:?}", rel.phi, cex.axiom);
    // Witnesses print as `(r)` with `r` the representative.
    let w: Vec<u64> = cex
        .witnesses
        .iter()
        .map(|s| s.trim_matches(|c| c == '(' || c == ')').parse::<u64>().map_err(|e| format!("{s}: {e}")))
        .collect::<Result<_, _>>()?;
    let r = |a, b| related(rel, spec, a, b, n);
    let holds = match expect {
        Axiom::Reflexivity => !r(w[0], w[0])?,
        Axiom::Symmetry => r(w[0], w[1])? && !r(w[1], w[0])?,
        Axiom::Transitivity => r(w[0], w[1])? && r(w[1], w[2])? && !r(w[0], w[2])?,
    };
    ensure!(holds, "{}: witnesses {:?} do not violate {expect:?}", rel.phi, cex.witnesses);
    Ok(())
}

/// Each broken relation is caught exhaustively at `p = 3, N = 3` and by the
/// sampler at `N = 7` for every given seed.
pub fn broken_relations_caught(seeds: &[u64]) -> Check {
    let small = FieldSpec::mixed(3, 3).unwrap();
    let large = FieldSpec::mixed(3, 7).unwrap();
    for &(phi, axiom) in BROKEN {
        let rel = broken_relation(phi);
        let v = check_equivalence(&rel, &small, &[2]).map_err(|e| e.to_string())?;
        confirm_counterexample(&rel, &small, 2, &v, axiom)?;
        for &seed in seeds {
            let opts = CheckOptions { seed, ..CheckOptions::default() };
            let v = check_equivalence_with(&rel, &large, &[3], &opts).map_err(|e| e.to_string())?;
            confirm_counterexample(&rel, &large, 3, &v, axiom).map_err(|e| format!("seed {seed}: {e}"))?;
        }
    }
    Ok(())
}

// ---- multiboxes ----

pub type Boxes = BTreeSet<Vec<u64>>;

/// Ball prefixes of radius `r` wholly inside the residue set `fiber` (level `level`).
pub fn contained_balls(p: u64, level: u32, r: u32, fiber: &BTreeSet<u64>) -> Vec<u64> {
    let pr = p.pow(r);
    (0..pr).filter(|&c| (0..p.pow(level - r)).all(|k| fiber.contains(&(c + k * pr)))).collect()
}

/// Brute-force maximal multiballs for arity 1 or 2: scans volume tuples from
/// the colex-largest down and collects every multiball of the first one realised.
pub fn multibox_oracle(p: u64, level: u32, arity: usize, set: &Boxes) -> (Vec<u32>, Boxes) {
    let side = p.pow(level);
    let fiber_of = |x1: u64| -> BTreeSet<u64> { set.iter().filter(|b| b[0] == x1).map(|b| b[1]).collect() };
    if arity == 1 {
        let all: BTreeSet<u64> = set.iter().map(|b| b[0]).collect();
        for r in 0..=level {
            let balls = contained_balls(p, level, r, &all);
            if !balls.is_empty() {
                let pr = p.pow(r);
                let mb = all.iter().filter(|&&x| balls.contains(&(x % pr))).map(|&x| vec![x]).collect();
                return (vec![r], mb);
            }
        }
        unreachable!("a nonempty set contains its level boxes")
    }
    for r2 in 0..=level {
        for r1 in 0..=level {
            let pr1 = p.pow(r1);
            let good = |x1: u64| !contained_balls(p, level, r2, &fiber_of(x1)).is_empty();
            let centers: Vec<u64> = (0..pr1).filter(|&c| (0..side / pr1).all(|k| good(c + k * pr1))).collect();
            if centers.is_empty() {
                continue;
            }
            let pr2 = p.pow(r2);
            let mut mb = Boxes::new();
            for x1 in (0..side).filter(|x1| centers.contains(&(x1 % pr1))) {
                let fiber = fiber_of(x1);
                let balls = contained_balls(p, level, r2, &fiber);
                mb.extend(fiber.iter().filter(|&&w| balls.contains(&(w % pr2))).map(|&w| vec![x1, w]));
            }
            return (vec![r1, r2], mb);
        }
    }
    unreachable!("a nonempty set contains its level boxes")
}

/// A nonempty union of fibered balls plus scattered boxes.
pub fn random_box_union(rng: &mut ChaCha8Rng, p: u64, level: u32, arity: usize) -> Boxes {
    let side = p.pow(level);
    let cells = side.pow(arity as u32);
    let point = |code: u64| -> Vec<u64> { (0..arity).map(|i| code / side.pow(i as u32) % side).collect() };
    let mut out = Boxes::new();
    for _ in 0..rng.gen_range(1..4) {
        let c: Vec<u64> = (0..arity).map(|_| rng.gen_range(0..side)).collect();
        let r: Vec<u32> = (0..arity).map(|_| rng.gen_range(0..=level)).collect();
        let slope = rng.gen_range(0..p);
        for code in 0..cells {
            let x = point(code);
            let in1 = x[0] % p.pow(r[0]) == c[0] % p.pow(r[0]);
            let in2 = arity == 1 || {
                let m = p.pow(r[1]);
                (x[1] + m * side - slope * x[0] % m) % m == c[1] % m
            };
            if in1 && in2 {
                out.insert(x);
            }
        }
    }
    let sprinkle = rng.gen_range(0.0..0.1);
    for code in 0..cells {
        if rng.gen_bool(sprinkle) {
            out.insert(point(code));
        }
    }
    out
}

/// Compares `multibox` with the oracle on one set, then checks `MB ⊆ X`,
/// idempotence and the last-coordinate multinumber.
pub fn multibox_agrees(spec: FieldSpec, level: u32, arity: usize, boxes: &Boxes) -> Check {
    let p = spec.p();
    let x = FiniteSubset::from_boxes(spec, arity, level, boxes.iter().cloned()).map_err(|e| e.to_string())?;
    let report = multibox(&x).map_err(|e| e.to_string())?;
    let (exps, mb) = multibox_oracle(p, level, arity, boxes);
    let at = format!("p={p} L={level} n={arity} |X|={}", boxes.len());
    ensure!(report.multivolume == Multivolume(exps.clone()), "{at}: multivolume {} vs {exps:?}", report.multivolume);
    ensure!(report.mb.boxes() == &mb, "{at}: multibox differs from the oracle");
    ensure!(report.mb.boxes().is_subset(x.boxes()), "{at}: MB(X) not inside X");
    let again = multibox(&report.mb).map_err(|e| e.to_string())?;
    ensure!(again.mb == report.mb && again.multivolume == report.multivolume, "{at}: not idempotent");
    let r_last = *report.multivolume.0.last().unwrap();
    for b in report.mb.boxes() {
        let fiber: BTreeSet<u64> = report
            .mb
            .boxes()
            .iter()
            .filter(|c| c[..arity - 1] == b[..arity - 1])
            .map(|c| c[arity - 1])
            .collect();
        let count = contained_balls(p, level, r_last, &fiber).len() as u64;
        let got = report.multinumber(b, arity).map_err(|e| e.to_string())?;
        ensure!(got == count, "{at}: multinumber {got} vs {count} at {b:?}");
    }
    Ok(())
}

/// Every nonempty subset where there are at most `2^16` of them, and
/// `samples` seeded random box-unions elsewhere, for `p in {2, 3}`,
/// `n <= 2`, `L <= 3`. Returns the number of sets checked.
pub fn multibox_sweep(samples: usize, seed: u64) -> Result<usize, String> {
    let mut checked = 0;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for p in [2u64, 3] {
        for arity in 1..=2usize {
            for level in 1..=3u32 {
                let side = p.pow(level);
                let cells = side.pow(arity as u32);
                let point = |code: u64| -> Vec<u64> { (0..arity).map(|i| code / side.pow(i as u32) % side).collect() };
                for case in CASES {
                    let spec = FieldSpec::new(case, p, 3).map_err(|e| e.to_string())?;
                    if cells <= 16 {
                        for mask in 1u64..(1 << cells) {
                            let boxes = (0..cells).filter(|c| mask >> c & 1 == 1).map(point).collect();
                            multibox_agrees(spec, level, arity, &boxes)?;
                            checked += 1;
                        }
                    } else {
                        for _ in 0..samples {
                            let boxes = random_box_union(&mut rng, p, level, arity);
                            multibox_agrees(spec, level, arity, &boxes)?;
                            checked += 1;
                        }
                    }
                }
            }
        }
    }
    Ok(checked)
}

/// `(m^2 x O) u (O x m)` at `p = 3, N = 3`: projecting the multibox gives
/// `m^2`, the multibox of the projection is `O`.
pub fn projection_witness() -> Check {
    let spec = FieldSpec::mixed(3, 3).unwrap();
    let x = FiniteSubset::from_predicate(spec, 2, 3, |v| v[0] % 9 == 0 || v[1] % 3 == 0).map_err(|e| e.to_string())?;
    let report = multibox(&x).map_err(|e| e.to_string())?;
    ensure!(report.multivolume == Multivolume(vec![2, 0]), "multivolume {}", report.multivolume);
    let projected = report.mb.project(1);
    let direct = multibox(&x.project(1)).map_err(|e| e.to_string())?;
    ensure!(direct.multivolume == Multivolume(vec![0]), "projection multivolume {}", direct.multivolume);
    ensure!(projected.len() == 3 && direct.mb.len() == 27, "sizes {} and {}", projected.len(), direct.mb.len());
    ensure!(projected != direct.mb, "projection commuted with MB");
    Ok(())
}
