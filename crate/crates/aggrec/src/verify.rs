//! Cross-checks behind `--verify`: the three evaluation modes against each
//! other, and the engine against a reference oracle when the program has a
//! recognizable shape.

use std::collections::BTreeMap;

use aggrec_core::oracle::{kmeans_reference, markov_reference};
use aggrec_core::{evaluate_program, EvalMode, EvalOptions, EvalResult, FactSet, Program, Value};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Status {
    Pass,
    Fail(String),
    Skip(String),
}

#[derive(Clone, Debug)]
pub struct Check {
    pub name: &'static str,
    pub status: Status,
}

impl Check {
    pub fn line(&self) -> String {
        match &self.status {
            Status::Pass => format!("{}: PASS", self.name),
            Status::Fail(why) => format!("{}: FAIL ({why})", self.name),
            Status::Skip(why) => format!("{}: SKIP ({why})", self.name),
        }
    }

    pub fn failed(&self) -> bool {
        matches!(self.status, Status::Fail(_))
    }
}

/// Float fields may differ by `rel` relative to the larger magnitude;
/// everything else must match exactly.
pub fn values_close(a: &Value, b: &Value, rel: f64) -> bool {
    match (a, b) {
        (Value::Float(x), Value::Float(y)) => {
            x == y || (x - y).abs() <= rel * x.abs().max(y.abs()).max(f64::MIN_POSITIVE)
        }
        (Value::Pair(p), Value::Pair(q)) => {
            values_close(&p.0, &q.0, rel) && values_close(&p.1, &q.1, rel)
        }
        _ => a == b,
    }
}

/// Compares two fact sets predicate by predicate; describes the first
/// difference found.
pub fn compare_facts(a: &FactSet, b: &FactSet, rel: f64) -> Result<(), String> {
    let preds: std::collections::BTreeSet<_> = a.predicates().chain(b.predicates()).collect();
    for p in preds {
        let x: Vec<_> = a.tuples(p.name()).collect();
        let y: Vec<_> = b.tuples(p.name()).collect();
        if x.len() != y.len() {
            return Err(format!("{p}: {} facts vs {}", x.len(), y.len()));
        }
        for (s, t) in x.iter().zip(&y) {
            let same =
                s.len() == t.len() && s.iter().zip(t.iter()).all(|(u, v)| values_close(u, v, rel));
            if !same {
                return Err(format!("{p}: {s:?} vs {t:?}"));
            }
        }
    }
    Ok(())
}

pub const MODE_TOLERANCE: f64 = 1e-9;

fn mode_check(
    name: &'static str,
    base: &EvalResult,
    p: &Program,
    edb: &FactSet,
    opts: &EvalOptions,
    mode: EvalMode,
) -> Check {
    let o = EvalOptions {
        mode,
        trace: false,
        ..opts.clone()
    };
    let status = match evaluate_program(p, edb, &o) {
        Ok(r) => match compare_facts(&base.facts, &r.facts, MODE_TOLERANCE) {
            Ok(()) => Status::Pass,
            Err(d) => Status::Fail(d),
        },
        Err(e) => Status::Fail(e.to_string()),
    };
    Check { name, status }
}

/// Runs every check. `base` is the completed-mode result for `p`.
pub fn verify(p: &Program, edb: &FactSet, opts: &EvalOptions, base: &EvalResult) -> Vec<Check> {
    let mut checks = vec![
        mode_check(
            "completed==stratified_rewrite",
            base,
            p,
            edb,
            opts,
            EvalMode::StratifiedRewrite,
        ),
        mode_check("completed==naive", base, p, edb, opts, EvalMode::Naive),
    ];
    let oracle = if is_markov(p) {
        markov_check(edb, base)
    } else if is_kmeans(p) {
        kmeans_check(edb, base)
    } else {
        Status::Skip("no reference oracle for this program".into())
    };
    checks.push(Check {
        name: "engine==oracle",
        status: oracle,
    });
    checks
}

fn has(p: &Program, name: &str, arity: usize) -> bool {
    p.arity(&aggrec_core::Predicate::new(name)) == Some(arity)
}

fn is_markov(p: &Program) -> bool {
    has(p, "mov", 3) && has(p, "next", 3) && p.idb_predicates().contains("next")
}

fn is_kmeans(p: &Program) -> bool {
    has(p, "point", 3) && has(p, "init", 3) && has(p, "center", 4) && has(p, "mindist", 3)
}

fn num(v: &Value) -> Result<f64, String> {
    v.as_f64().ok_or_else(|| format!("{v} is not a number"))
}

/// Populations at every stage against power iteration from the engine's
/// own stage-0 vector.
pub fn markov_check(edb: &FactSet, r: &EvalResult) -> Status {
    match markov_diff(edb, r) {
        Ok(()) => Status::Pass,
        Err(e) => Status::Fail(e),
    }
}

fn markov_diff(edb: &FactSet, r: &EvalResult) -> Result<(), String> {
    let mut cities: Vec<Value> = Vec::new();
    for t in edb.tuples("mov") {
        cities.extend([t[0].clone(), t[1].clone()]);
    }
    cities.sort();
    cities.dedup();
    let ix = |v: &Value| cities.iter().position(|c| c == v).expect("city");
    let n = cities.len();
    let mut m = vec![vec![0.0; n]; n];
    for t in edb.tuples("mov") {
        m[ix(&t[0])][ix(&t[1])] += num(&t[2])?;
    }
    let mut stages: BTreeMap<i64, Vec<f64>> = BTreeMap::new();
    for t in r.facts.tuples("next") {
        let j = t[0].as_int().ok_or("non-integer stage")?;
        stages.entry(j).or_insert_with(|| vec![0.0; n])[ix(&t[1])] = num(&t[2])?;
    }
    let Some((&first, init)) = stages.iter().next() else {
        return Err("no next facts".into());
    };
    let last = *stages.keys().next_back().expect("non-empty");
    let trace = markov_reference(&m, init, (last - first) as usize).map_err(|e| e.to_string())?;
    for (j, v) in &stages {
        let want = &trace[(j - first) as usize];
        for c in 0..n {
            if !values_close(&Value::Float(v[c]), &Value::Float(want[c]), MODE_TOLERANCE) {
                return Err(format!("stage {j}, {}: {} vs {}", cities[c], v[c], want[c]));
            }
        }
    }
    Ok(())
}

/// Per-stage assignments and centers against Lloyd's algorithm started
/// from the same `init` facts.
pub fn kmeans_check(edb: &FactSet, r: &EvalResult) -> Status {
    match kmeans_diff(edb, r) {
        Ok(()) => Status::Pass,
        Err(e) => Status::Fail(e),
    }
}

fn kmeans_diff(edb: &FactSet, r: &EvalResult) -> Result<(), String> {
    let (points, pnos, dims) = coords(edb.tuples("point"))?;
    let (centers, cnos, cdims) = coords(edb.tuples("init"))?;
    if dims != cdims {
        return Err("points and centers use different dimensions".into());
    }
    let trace = kmeans_reference(&points, &centers, 10_000).map_err(|e| e.to_string())?;
    let mut assigned: BTreeMap<i64, BTreeMap<Value, Value>> = BTreeMap::new();
    for t in r.facts.tuples("mindist") {
        let j = t[0].as_int().ok_or("non-integer stage")?;
        let (_, cno) = aggrec_core::value::decd(&t[2]).map_err(|e| e.to_string())?;
        assigned.entry(j).or_default().insert(t[1].clone(), cno);
    }
    let stages = assigned.len();
    let n = trace.assignments.len();
    // the engine halts one stage earlier when the centers repeat before
    // the assignment does
    let early = stages + 1 == n && n >= 2 && trace.assignments[n - 1] == trace.assignments[n - 2];
    if stages != n && !early {
        return Err(format!(
            "engine ran {stages} assignment stages, oracle {}",
            trace.assignments.len()
        ));
    }
    for (k, (j, a)) in assigned.iter().enumerate() {
        for (pi, pno) in pnos.iter().enumerate() {
            let want = &cnos[trace.assignments[k][pi]];
            if a.get(pno) != Some(want) {
                return Err(format!(
                    "stage {j}: point {pno} assigned to {:?}, oracle {want}",
                    a.get(pno)
                ));
            }
        }
        for t in r.facts.tuples("center").filter(|t| t[0] == Value::Int(*j)) {
            let c = cnos
                .iter()
                .position(|x| *x == t[1])
                .ok_or("unknown center")?;
            let d = dims
                .iter()
                .position(|x| *x == t[2])
                .ok_or("unknown dimension")?;
            let want = trace.centers[k][c][d];
            if !values_close(
                &Value::Float(num(&t[3])?),
                &Value::Float(want),
                MODE_TOLERANCE,
            ) {
                return Err(format!(
                    "stage {j}: center {} dim {} is {} vs {want}",
                    t[1], t[2], t[3]
                ));
            }
        }
    }
    Ok(())
}

type Coords = (Vec<Vec<f64>>, Vec<Value>, Vec<Value>);

/// `(id, dim, val)` facts as dense vectors, ids and dims sorted.
fn coords<'a>(facts: impl Iterator<Item = &'a Vec<Value>>) -> Result<Coords, String> {
    let mut by_id: BTreeMap<Value, BTreeMap<Value, f64>> = BTreeMap::new();
    for t in facts {
        by_id
            .entry(t[0].clone())
            .or_default()
            .insert(t[1].clone(), num(&t[2])?);
    }
    let dims: Vec<Value> = by_id
        .values()
        .next()
        .map(|m| m.keys().cloned().collect())
        .unwrap_or_default();
    let mut rows = Vec::new();
    for (id, m) in &by_id {
        if m.keys().ne(dims.iter()) {
            return Err(format!("{id} does not have every dimension"));
        }
        rows.push(m.values().copied().collect());
    }
    Ok((rows, by_id.into_keys().collect(), dims))
}
