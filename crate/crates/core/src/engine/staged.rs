//! Stage-at-a-time evaluation of a component with aggregates in recursion.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use super::plan::{fire, CompiledRule};
use super::relation::{Relation, Row};
use super::{EvalError, Evaluator, PredicateDelta, StratumStats, Tuple};
use crate::model::{Head, Literal, Predicate};
use crate::stratifier::StagedComponent;
use crate::value::{abs_f64, Value};

type Slices = BTreeMap<i64, Relation>;

enum Source {
    Db(Predicate),
    Slice(Predicate, i64),
    All(Predicate),
    Empty,
}

struct Stager<'e, 'a> {
    ev: &'e mut Evaluator<'a>,
    c: &'e StagedComponent,
    slices: BTreeMap<Predicate, Slices>,
    /// Every stage of each predicate in one relation; naive mode only.
    all: BTreeMap<Predicate, Relation>,
    /// Seed facts of every stage, restored when a stage is rolled back.
    seeded: BTreeMap<Predicate, Slices>,
    rules: Vec<CompiledRule>,
    /// Derivation count per aggregate rule at the previous stage.
    derivs_seen: BTreeMap<usize, u64>,
    drift_reported: BTreeSet<usize>,
    st: StratumStats,
}

pub(super) fn evaluate(
    ev: &mut Evaluator<'_>,
    stratum: usize,
    preds: &[Predicate],
    c: &StagedComponent,
) -> Result<StratumStats, EvalError> {
    let rules = c
        .recursive_rules
        .iter()
        .map(|&r| ev.compile(r, None))
        .collect();
    let mut s = Stager {
        ev,
        c,
        slices: preds.iter().map(|q| (q.clone(), Slices::new())).collect(),
        all: preds
            .iter()
            .map(|q| (q.clone(), Relation::default()))
            .collect(),
        seeded: BTreeMap::new(),
        rules,
        derivs_seen: BTreeMap::new(),
        drift_reported: BTreeSet::new(),
        st: StratumStats::default(),
    };
    let mut pending: BTreeSet<i64> = BTreeSet::new();
    for &ri in &c.seed_rules {
        let cr = s.ev.compile(ri, None);
        let f = s.ev.fire_full(&cr)?;
        s.st.derivations += f.derivations;
        let q = s.ev.program.rules[ri].head.predicate().clone();
        for row in f.rows {
            let t = s.stage_of(&q, &row)?;
            pending.insert(t);
            if s.ev.naive {
                s.all.get_mut(&q).expect("member").insert(row.clone());
            }
            s.slices
                .get_mut(&q)
                .expect("member")
                .entry(t)
                .or_default()
                .insert(row);
        }
    }
    s.seeded = s.slices.clone();

    let max_lag = c.max_lag();
    let mut derived = 0usize;
    let mut equal_run = 0i64;
    let mut last: Option<i64> = None;
    while let Some(t) = pending.pop_first() {
        let produced = s.stage(t)?;
        let any = s
            .slices
            .values()
            .any(|sl| sl.get(&t).is_some_and(|r| !r.is_empty()));
        if produced > 0 {
            derived += 1;
            if derived > s.ev.opts.max_iterations {
                s.rollback(t);
                s.ev.limit_reached = true;
                break;
            }
        }
        if !any {
            continue;
        }
        if s.same_as_previous(t) {
            equal_run += 1;
            if equal_run >= max_lag {
                s.rollback(t);
                if s.ev.opts.trace {
                    s.ev.trace
                        .push(format!("stratum {stratum} stage {t}: converged"));
                }
                break;
            }
        } else {
            equal_run = 0;
        }
        s.st.iterations += 1;
        last = Some(t);
        if s.ev.opts.trace {
            let sizes: Vec<String> = s
                .slices
                .iter()
                .map(|(q, sl)| format!("{q}={}", sl.get(&t).map_or(0, |r| r.len())))
                .collect();
            s.ev.trace.push(format!(
                "stratum {stratum} stage {t}: {}; derivations {}",
                sizes.join(" "),
                s.st.derivations
            ));
        }
        for &l in &c.positive_lags {
            pending.insert(t + l);
        }
        s.record_peak();
        if s.ev.opts.retain_latest {
            let keep = t + 1 - max_lag;
            for sl in s.slices.values_mut() {
                *sl = sl.split_off(&keep);
            }
        }
    }
    s.finish(last);
    Ok(s.st)
}

impl Stager<'_, '_> {
    fn stage_of(&self, q: &Predicate, row: &Row) -> Result<i64, EvalError> {
        let pos = self.c.stage_position(q).expect("staged predicate");
        match &row[pos] {
            Value::Int(t) => Ok(*t),
            other => Err(EvalError::NonIntegerStage {
                predicate: q.clone(),
                value: other.clone(),
            }),
        }
    }

    /// Evaluates stage `t` layer by layer; returns the number of new facts
    /// derived by recursive rules.
    fn stage(&mut self, t: i64) -> Result<usize, EvalError> {
        let mut produced = 0;
        for layer in self.c.layers.clone() {
            let members: Vec<usize> = (0..self.rules.len())
                .filter(|&i| {
                    let ri = self.rules[i].index;
                    layer.contains(self.ev.program.rules[ri].head.predicate())
                })
                .collect();
            let cyclic = members.iter().any(|&i| {
                let ri = self.rules[i].index;
                self.ev.program.rules[ri]
                    .body
                    .iter()
                    .enumerate()
                    .any(|(li, l)| {
                        matches!(l, Literal::Positive(a) if layer.contains(&a.predicate))
                            && self.c.lags.get(&(ri, li)) == Some(&0)
                    })
            });
            loop {
                let mut added = 0;
                for &i in &members {
                    added += self.fire_at(i, t)?;
                }
                produced += added;
                if !cyclic || added == 0 {
                    break;
                }
            }
        }
        Ok(produced)
    }

    fn fire_at(&mut self, i: usize, t: i64) -> Result<usize, EvalError> {
        let ri = self.rules[i].index;
        let program = self.ev.program;
        let rule = &program.rules[ri];
        let naive = self.ev.naive;
        let mut plan = Vec::with_capacity(rule.body.len());
        for (li, lit) in rule.body.iter().enumerate() {
            let src = match lit {
                Literal::Positive(a) if self.slices.contains_key(&a.predicate) => {
                    let lag = self.c.lags[&(ri, li)];
                    let sl = &self.slices[&a.predicate];
                    if naive {
                        Source::All(a.predicate.clone())
                    } else if sl.get(&(t - lag)).is_some_and(|r| !r.is_empty()) {
                        Source::Slice(a.predicate.clone(), t - lag)
                    } else {
                        return Ok(0);
                    }
                }
                Literal::Positive(a) | Literal::Negative(a) => {
                    self.ev.db.entry(a.predicate.clone()).or_default();
                    Source::Db(a.predicate.clone())
                }
                _ => Source::Empty,
            };
            plan.push(src);
        }
        let cr = &self.rules[i];
        for (li, cols) in cr.index_needs() {
            match &plan[li] {
                Source::Db(q) => self.ev.db.get_mut(q).expect("created").ensure_index(cols),
                Source::Slice(q, s) => self
                    .slices
                    .get_mut(q)
                    .and_then(|sl| sl.get_mut(s))
                    .expect("non-empty slice")
                    .ensure_index(cols),
                Source::All(q) => self.all.get_mut(q).expect("member").ensure_index(cols),
                Source::Empty => {}
            }
        }
        let empty = Relation::default();
        let sources: Vec<&Relation> = plan
            .iter()
            .map(|s| match s {
                Source::Db(q) => &self.ev.db[q],
                Source::Slice(q, s) => &self.slices[q][s],
                Source::All(q) => &self.all[q],
                Source::Empty => &empty,
            })
            .collect();
        let f = fire(cr, &sources)?;
        drop(sources);
        self.st.derivations += f.derivations;
        if matches!(rule.head, Head::Aggregate(_)) {
            self.note_derivations(ri, t, f.derivations);
        }
        let q = rule.head.predicate().clone();
        let mut added = 0;
        for row in f.rows {
            if self.stage_of(&q, &row)? != t {
                continue;
            }
            if naive {
                self.all.get_mut(&q).expect("member").insert(row.clone());
            }
            let sl = self.slices.get_mut(&q).expect("member");
            if sl.entry(t).or_default().insert(row) {
                added += 1;
            }
        }
        Ok(added)
    }

    fn note_derivations(&mut self, ri: usize, t: i64, n: u64) {
        if self.ev.naive || n == 0 {
            return;
        }
        if let Some(prev) = self.derivs_seen.insert(ri, n) {
            if prev != n && self.drift_reported.insert(ri) {
                self.ev.warnings.push(format!(
                    "rule {ri}: derivations per stage changed from {prev} to {n} at stage {t}"
                ));
            }
        }
    }

    /// Stage `t` equals the closest earlier stage with the stage column
    /// ignored, on every non-continuous predicate.
    fn same_as_previous(&self, t: i64) -> bool {
        let eps = self.ev.opts.convergence_epsilon;
        let mut compared = false;
        for (q, sl) in &self.slices {
            if self.is_continuous(q) {
                continue;
            }
            let pos = self.c.stage_position(q).expect("staged predicate");
            let now = sl.get(&t);
            let before = sl.range(..t).next_back().map(|(_, r)| r);
            let strip = |r: Option<&Relation>| -> Vec<Tuple> {
                let mut v: Vec<Tuple> = r
                    .into_iter()
                    .flat_map(|r| r.iter())
                    .map(|row| {
                        let mut x = row.to_vec();
                        x.remove(pos);
                        x
                    })
                    .collect();
                v.sort();
                v
            };
            let (a, b) = (strip(now), strip(before));
            if a.len() != b.len() {
                return false;
            }
            if !a.iter().zip(&b).all(|(x, y)| close(x, y, eps)) {
                return false;
            }
            compared = true;
        }
        compared
    }

    fn is_continuous(&self, q: &Predicate) -> bool {
        self.ev.program.rules.iter().any(|r| {
            r.head.predicate() == q && matches!(&r.head, Head::Aggregate(a) if a.is_continuous())
        })
    }

    fn rollback(&mut self, t: i64) {
        for (q, sl) in self.slices.iter_mut() {
            match self.seeded.get(q).and_then(|s| s.get(&t)) {
                Some(seed) => {
                    sl.insert(t, seed.clone());
                }
                None => {
                    sl.remove(&t);
                }
            }
        }
    }

    fn record_peak(&mut self) {
        for (q, sl) in &self.slices {
            let held: usize = sl.values().map(|r| r.len()).sum();
            let peak = self.ev.stats.peak_retained.entry(q.clone()).or_default();
            *peak = (*peak).max(held);
        }
    }

    fn finish(&mut self, last: Option<i64>) {
        self.record_peak();
        for (q, sl) in core::mem::take(&mut self.slices) {
            let rel = self.ev.db.entry(q.clone()).or_default();
            let mut total = BTreeSet::new();
            for r in sl.values() {
                for row in r.iter() {
                    rel.insert(row.clone());
                    total.insert(row.to_vec());
                }
            }
            let stage = sl
                .iter()
                .rev()
                .find(|(s, r)| !r.is_empty() && last.is_none_or(|l| **s <= l))
                .map(|(s, _)| *s);
            let frontier = stage
                .and_then(|s| sl.get(&s))
                .map(|r| r.iter().map(|x| x.to_vec()).collect())
                .unwrap_or_default();
            if let Some(s) = stage {
                self.ev.stats.final_stage.insert(q.clone(), s);
            }
            self.ev.deltas.predicates.insert(
                q,
                PredicateDelta {
                    total,
                    frontier,
                    stage,
                },
            );
        }
    }
}

fn close(x: &[Value], y: &[Value], eps: f64) -> bool {
    x.len() == y.len()
        && x.iter().zip(y).all(|(a, b)| match (a, b) {
            (Value::Float(p), Value::Float(q)) => p == q || abs_f64(p - q) <= eps,
            (Value::Pair(p), Value::Pair(q)) => close(
                &[p.0.clone(), p.1.clone()],
                &[q.0.clone(), q.1.clone()],
                eps,
            ),
            _ => a == b,
        })
}
