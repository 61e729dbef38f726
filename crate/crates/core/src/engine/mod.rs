//! Stratum-by-stratum bottom-up evaluation.
//!
//! Non-recursive strata are evaluated once. Recursive strata without
//! aggregation in the cycle run a semi-naive fixpoint (or a naive one on
//! request). Staged strata (aggregates inside recursion, admitted by the
//! stratifier) are evaluated one stage at a time: every aggregate group of
//! a stage is finalized as soon as the join producing the stage is
//! exhausted.

mod plan;
mod relation;
mod staged;

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;
use core::fmt;

use thiserror::Error;

use crate::aggregates::AggregateError;
use crate::model::{AggKind, AggPhase, Head, Literal, Predicate, Program, Term};
use crate::stratifier::{
    self, stratified_rewrite, RewriteError, StratifyError, StratumKind, StratumPlan,
};
use crate::value::{Value, ValueError};
use plan::{compile, fire, CompiledRule};
use relation::{Relation, Row};

pub type Tuple = Vec<Value>;

/// Ground facts by predicate, without duplicates.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct FactSet {
    relations: BTreeMap<Predicate, BTreeSet<Tuple>>,
}

impl FactSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Returns false if the fact was already present.
    pub fn insert(&mut self, predicate: impl Into<Predicate>, tuple: Tuple) -> bool {
        self.relations
            .entry(predicate.into())
            .or_default()
            .insert(tuple)
    }

    pub fn get(&self, predicate: &str) -> Option<&BTreeSet<Tuple>> {
        self.relations.get(&Predicate::new(predicate))
    }

    /// Facts of `predicate`, in sorted order.
    pub fn tuples(&self, predicate: &str) -> impl Iterator<Item = &Tuple> {
        self.get(predicate).into_iter().flatten()
    }

    pub fn count(&self, predicate: &str) -> usize {
        self.get(predicate).map_or(0, |s| s.len())
    }

    pub fn len(&self) -> usize {
        self.relations.values().map(|s| s.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn predicates(&self) -> impl Iterator<Item = &Predicate> {
        self.relations.keys()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Predicate, &BTreeSet<Tuple>)> {
        self.relations.iter()
    }

    pub fn extend(&mut self, other: FactSet) {
        for (p, ts) in other.relations {
            self.relations.entry(p).or_default().extend(ts);
        }
    }

    /// Keeps only the predicates for which `keep` holds.
    pub fn retain(&mut self, mut keep: impl FnMut(&Predicate) -> bool) {
        self.relations.retain(|p, _| keep(p));
    }

    /// Facts restricted to `predicates`.
    pub fn restricted<'a>(&self, predicates: impl IntoIterator<Item = &'a Predicate>) -> FactSet {
        let mut out = FactSet::new();
        for p in predicates {
            if let Some(ts) = self.relations.get(p) {
                out.relations.insert(p.clone(), ts.clone());
            }
        }
        out
    }
}

impl fmt::Display for FactSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (p, ts) in &self.relations {
            for t in ts {
                write!(f, "{p}(")?;
                for (i, v) in t.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{v}")?;
                }
                f.write_str(").\n")?;
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum EvalMode {
    /// Stage-by-stage evaluation, aggregates finalized at join exhaustion.
    #[default]
    Completed,
    /// Evaluate the output of [`stratified_rewrite`] under plain
    /// stratified semantics.
    StratifiedRewrite,
    /// Like `Completed`, but every round joins full relations.
    Naive,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalOptions {
    pub mode: EvalMode,
    /// Upper bound on fixpoint rounds (plain recursion) or derived stages
    /// (staged recursion).
    pub max_iterations: usize,
    /// Two stages whose float columns differ by at most this much count as
    /// equal when testing for convergence.
    pub convergence_epsilon: f64,
    pub trace: bool,
    /// Drop stages that no rule can read any more.
    pub retain_latest: bool,
    /// Answer `f(max<J>) :- p(J, _, ..)` over a staged `p` from the last
    /// stage instead of scanning `p`.
    pub final_delta: bool,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            mode: EvalMode::Completed,
            max_iterations: 1000,
            convergence_epsilon: 0.0,
            trace: false,
            retain_latest: false,
            final_delta: true,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct StratumStats {
    /// Rounds (or stages) that produced at least one new fact.
    pub iterations: usize,
    pub derivations: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct EvalStats {
    /// Complete body instantiations over all rules.
    pub derivation_attempts: u64,
    pub strata: Vec<StratumStats>,
    /// Largest number of facts of a staged predicate held at once.
    pub peak_retained: BTreeMap<Predicate, usize>,
    /// Last stage kept for each staged predicate.
    pub final_stage: BTreeMap<Predicate, i64>,
}

impl EvalStats {
    pub fn iterations(&self) -> usize {
        self.strata.iter().map(|s| s.iterations).sum()
    }
}

/// Fixpoint bookkeeping of one recursive predicate.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct PredicateDelta {
    pub total: BTreeSet<Tuple>,
    /// Facts added by the last productive round (the last stage, for
    /// staged predicates).
    pub frontier: BTreeSet<Tuple>,
    pub stage: Option<i64>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct DeltaState {
    pub predicates: BTreeMap<Predicate, PredicateDelta>,
}

/// Facts of the last delta of `predicate`: for a staged predicate, the
/// facts of its highest stage.
pub fn extract_final_delta(predicate: &str, state: &DeltaState) -> FactSet {
    let mut out = FactSet::new();
    if let Some(d) = state.predicates.get(&Predicate::new(predicate)) {
        for t in &d.frontier {
            out.insert(predicate, t.clone());
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalResult {
    /// Every IDB predicate of the program.
    pub facts: FactSet,
    /// Set when a fixpoint was cut short by `max_iterations`.
    pub limit_reached: bool,
    pub stats: EvalStats,
    pub trace: Vec<String>,
    pub deltas: DeltaState,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error(transparent)]
    Stratify(#[from] StratifyError),
    #[error(transparent)]
    Rewrite(#[from] RewriteError),
    #[error("rule {rule}: {error}")]
    Rule { rule: usize, error: ValueError },
    #[error("rule {rule}: {error}")]
    Aggregate { rule: usize, error: AggregateError },
    #[error("stage column of {predicate} holds {value}, expected an integer")]
    NonIntegerStage { predicate: Predicate, value: Value },
    #[error("facts supplied for {0}, which is defined by rules")]
    EdbConflict(Predicate),
    #[error("facts for {predicate} have arity {found}, expected {expected}")]
    EdbArity {
        predicate: Predicate,
        expected: usize,
        found: usize,
    },
    #[error("max_iterations must be at least 1")]
    InvalidOptions,
}

pub fn evaluate_program(
    p: &Program,
    edb: &FactSet,
    opts: &EvalOptions,
) -> Result<EvalResult, EvalError> {
    match opts.mode {
        EvalMode::Completed | EvalMode::Naive => {
            let plan = stratifier::plan(p)?;
            run(p, &plan, edb, opts, opts.mode == EvalMode::Naive)
        }
        EvalMode::StratifiedRewrite => {
            let rewritten = stratified_rewrite(p)?;
            let mut res = evaluate_stratified_rewrite(&rewritten, edb, opts)?;
            let idb = p.idb_predicates();
            res.facts.retain(|q| idb.contains(q));
            res.deltas.predicates.retain(|q, _| idb.contains(q));
            Ok(res)
        }
    }
}

/// Evaluates an already rewritten program under plain stratified
/// semantics.
pub fn evaluate_stratified_rewrite(
    rewritten: &Program,
    edb: &FactSet,
    opts: &EvalOptions,
) -> Result<EvalResult, EvalError> {
    let plan = stratifier::plan(rewritten)?;
    run(rewritten, &plan, edb, opts, false)
}

pub(crate) fn to_row(t: &[Value]) -> Row {
    Arc::from(t)
}

struct Evaluator<'a> {
    program: &'a Program,
    opts: &'a EvalOptions,
    plan: &'a StratumPlan,
    naive: bool,
    db: BTreeMap<Predicate, Relation>,
    stats: EvalStats,
    trace: Vec<String>,
    warnings: Vec<String>,
    deltas: DeltaState,
    limit_reached: bool,
}

fn run(
    p: &Program,
    plan: &StratumPlan,
    edb: &FactSet,
    opts: &EvalOptions,
    naive: bool,
) -> Result<EvalResult, EvalError> {
    if opts.max_iterations == 0 {
        return Err(EvalError::InvalidOptions);
    }
    let idb = p.idb_predicates();
    let schemas = p.schemas();
    let mut db: BTreeMap<Predicate, Relation> = BTreeMap::new();
    for (q, ts) in edb.iter() {
        let Some(&arity) = schemas.get(q) else {
            continue;
        };
        if idb.contains(q) {
            return Err(EvalError::EdbConflict(q.clone()));
        }
        let rel = db.entry(q.clone()).or_default();
        for t in ts {
            if t.len() != arity {
                return Err(EvalError::EdbArity {
                    predicate: q.clone(),
                    expected: arity,
                    found: t.len(),
                });
            }
            rel.insert(to_row(t));
        }
    }
    let mut ev = Evaluator {
        program: p,
        opts,
        plan,
        naive,
        db,
        stats: EvalStats::default(),
        trace: Vec::new(),
        warnings: Vec::new(),
        deltas: DeltaState::default(),
        limit_reached: false,
    };
    for (i, stratum) in plan.strata.iter().enumerate() {
        let st = match &stratum.kind {
            StratumKind::NonRecursive => ev.non_recursive(i, &stratum.rules)?,
            StratumKind::Recursive => ev.fixpoint(i, &stratum.predicates, &stratum.rules)?,
            StratumKind::Staged(c) => staged::evaluate(&mut ev, i, &stratum.predicates, c)?,
        };
        ev.stats.derivation_attempts += st.derivations;
        ev.stats.strata.push(st);
    }
    let mut facts = FactSet::new();
    for q in &idb {
        let set = facts.relations.entry(q.clone()).or_default();
        if let Some(rel) = ev.db.get(q) {
            set.extend(rel.iter().map(|r| r.to_vec()));
        }
    }
    Ok(EvalResult {
        facts,
        limit_reached: ev.limit_reached,
        stats: ev.stats,
        trace: ev.trace,
        deltas: ev.deltas,
        warnings: ev.warnings,
    })
}

impl Evaluator<'_> {
    fn compile(&self, rule: usize, first: Option<usize>) -> CompiledRule {
        compile(rule, &self.program.rules[rule], first)
    }

    fn body_predicate(&self, rule: usize, lit: usize) -> Option<&Predicate> {
        match &self.program.rules[rule].body[lit] {
            Literal::Positive(a) | Literal::Negative(a) => Some(&a.predicate),
            _ => None,
        }
    }

    /// Evaluates `cr` with every body atom reading the full relation.
    fn fire_full(&mut self, cr: &CompiledRule) -> Result<plan::Firing, EvalError> {
        let rule = &self.program.rules[cr.index];
        for lit in &rule.body {
            if let Literal::Positive(a) | Literal::Negative(a) = lit {
                self.db.entry(a.predicate.clone()).or_default();
            }
        }
        for (lit, cols) in cr.index_needs() {
            let q = self
                .body_predicate(cr.index, lit)
                .expect("atom literal")
                .clone();
            self.db
                .get_mut(&q)
                .expect("created above")
                .ensure_index(cols);
        }
        let empty = Relation::default();
        let sources: Vec<&Relation> = rule
            .body
            .iter()
            .map(|lit| match lit {
                Literal::Positive(a) | Literal::Negative(a) => &self.db[&a.predicate],
                _ => &empty,
            })
            .collect();
        fire(cr, &sources)
    }

    fn insert_all(&mut self, q: &Predicate, rows: impl IntoIterator<Item = Row>) -> Vec<Row> {
        let rel = self.db.entry(q.clone()).or_default();
        rows.into_iter().filter(|r| rel.insert(r.clone())).collect()
    }

    fn non_recursive(
        &mut self,
        stratum: usize,
        rules: &[usize],
    ) -> Result<StratumStats, EvalError> {
        let mut st = StratumStats::default();
        let mut produced: BTreeMap<Predicate, Vec<Row>> = BTreeMap::new();
        for &ri in rules {
            let head = self.program.rules[ri].head.predicate().clone();
            if let Some(row) = self.final_delta_shortcut(ri) {
                if self.opts.trace {
                    self.trace.push(alloc::format!(
                        "stratum {stratum}: {head} answered from the final delta"
                    ));
                }
                produced.entry(head).or_default().extend(row);
                continue;
            }
            let cr = self.compile(ri, None);
            let f = self.fire_full(&cr)?;
            st.derivations += f.derivations;
            produced.entry(head).or_default().extend(f.rows);
        }
        let mut sizes = Vec::new();
        for (q, rows) in produced {
            let new = self.insert_all(&q, rows);
            sizes.push(alloc::format!("{q}={}", new.len()));
            if !new.is_empty() {
                st.iterations = 1;
            }
        }
        if self.opts.trace {
            self.trace.push(alloc::format!(
                "stratum {stratum} round 1: {}; derivations {}",
                sizes.join(" "),
                st.derivations
            ));
        }
        Ok(st)
    }

    /// `f(max<J>) :- p(J, _, ..)` with `J` the stage column of a staged `p`.
    fn final_delta_shortcut(&self, ri: usize) -> Option<Option<Row>> {
        if self.naive || !self.opts.final_delta {
            return None;
        }
        let rule = &self.program.rules[ri];
        let Head::Aggregate(agg) = &rule.head else {
            return None;
        };
        if agg.kind != AggKind::Max || agg.phase != AggPhase::Final || !agg.group_args.is_empty() {
            return None;
        }
        let [Literal::Positive(atom)] = rule.body.as_slice() else {
            return None;
        };
        let s = self.plan.stage_position(&atom.predicate)?;
        let others_free = atom.args.iter().enumerate().all(|(c, t)| match t {
            Term::Variable(v) if c == s => *v == agg.var,
            Term::Variable(v) => *v != agg.var && atom.args.iter().filter(|u| *u == t).count() == 1,
            _ => false,
        });
        if !others_free {
            return None;
        }
        let d = self.deltas.predicates.get(&atom.predicate)?;
        Some(d.stage.map(|j| to_row(&[Value::Int(j)])))
    }

    fn fixpoint(
        &mut self,
        stratum: usize,
        preds: &[Predicate],
        rules: &[usize],
    ) -> Result<StratumStats, EvalError> {
        let members: BTreeSet<&Predicate> = preds.iter().collect();
        let recursive_lits = |ri: usize| -> Vec<usize> {
            self.program.rules[ri]
                .body
                .iter()
                .enumerate()
                .filter_map(|(i, l)| match l {
                    Literal::Positive(a) if members.contains(&a.predicate) => Some(i),
                    _ => None,
                })
                .collect()
        };
        let mut st = StratumStats::default();
        let mut last_delta: BTreeMap<Predicate, Vec<Row>> = BTreeMap::new();
        let mut round = 0usize;

        // round 1: rules without recursive atoms
        let mut delta: BTreeMap<Predicate, Relation> = BTreeMap::new();
        let plans: Vec<(usize, Vec<usize>)> =
            rules.iter().map(|&r| (r, recursive_lits(r))).collect();
        let naive_plans: Vec<CompiledRule> = if self.naive {
            rules.iter().map(|&r| self.compile(r, None)).collect()
        } else {
            Vec::new()
        };
        for (ri, lits) in &plans {
            if lits.is_empty() {
                let cr = self.compile(*ri, None);
                let f = self.fire_full(&cr)?;
                st.derivations += f.derivations;
                let q = self.program.rules[*ri].head.predicate().clone();
                let new = self.insert_all(&q, f.rows);
                delta.entry(q).or_default();
                for r in new {
                    delta
                        .get_mut(self.program.rules[*ri].head.predicate())
                        .expect("entry")
                        .insert(r);
                }
            }
        }
        let mut old: BTreeMap<Predicate, Relation> = preds
            .iter()
            .map(|q| (q.clone(), Relation::default()))
            .collect();
        for q in preds {
            delta.entry(q.clone()).or_default();
        }
        let variants: Vec<(usize, usize, CompiledRule)> = plans
            .iter()
            .flat_map(|(ri, lits)| lits.iter().map(move |&l| (*ri, l)))
            .map(|(ri, l)| (ri, l, self.compile(ri, Some(l))))
            .collect();

        loop {
            let produced: usize = delta.values().map(|r| r.len()).sum();
            if produced == 0 {
                break;
            }
            round += 1;
            st.iterations = round;
            for (q, r) in &delta {
                if !r.is_empty() {
                    last_delta.insert(q.clone(), r.iter().cloned().collect());
                }
            }
            if self.opts.trace {
                let sizes: Vec<String> = delta
                    .iter()
                    .map(|(q, r)| alloc::format!("{q}={}", r.len()))
                    .collect();
                self.trace.push(alloc::format!(
                    "stratum {stratum} round {round}: {}; derivations {}",
                    sizes.join(" "),
                    st.derivations
                ));
            }
            if round >= self.opts.max_iterations {
                self.limit_reached = true;
                break;
            }
            let mut fresh: BTreeMap<Predicate, Vec<Row>> = BTreeMap::new();
            if self.naive {
                for cr in &naive_plans {
                    if recursive_lits(cr.index).is_empty() {
                        continue;
                    }
                    let f = self.fire_full(cr)?;
                    st.derivations += f.derivations;
                    let q = self.program.rules[cr.index].head.predicate().clone();
                    fresh.entry(q).or_default().extend(f.rows);
                }
            } else {
                for (ri, first, cr) in &variants {
                    let rule = &self.program.rules[*ri];
                    for (lit, cols) in cr.index_needs() {
                        let q = self.body_predicate(*ri, lit).expect("atom literal").clone();
                        let rel = if !members.contains(&q)
                            || !matches!(rule.body[lit], Literal::Positive(_))
                        {
                            self.db.entry(q).or_default()
                        } else if lit == *first {
                            delta.get_mut(&q).expect("member")
                        } else if lit < *first {
                            old.get_mut(&q).expect("member")
                        } else {
                            self.db.entry(q).or_default()
                        };
                        rel.ensure_index(cols);
                    }
                    for lit in &rule.body {
                        if let Literal::Positive(a) | Literal::Negative(a) = lit {
                            self.db.entry(a.predicate.clone()).or_default();
                        }
                    }
                    let empty = Relation::default();
                    let sources: Vec<&Relation> = rule
                        .body
                        .iter()
                        .enumerate()
                        .map(|(i, lit)| match lit {
                            Literal::Positive(a) if members.contains(&a.predicate) => {
                                if i == *first {
                                    &delta[&a.predicate]
                                } else if i < *first {
                                    &old[&a.predicate]
                                } else {
                                    &self.db[&a.predicate]
                                }
                            }
                            Literal::Positive(a) | Literal::Negative(a) => &self.db[&a.predicate],
                            _ => &empty,
                        })
                        .collect();
                    let f = fire(cr, &sources)?;
                    st.derivations += f.derivations;
                    fresh
                        .entry(rule.head.predicate().clone())
                        .or_default()
                        .extend(f.rows);
                }
            }
            // old := total before this round; total ∪= new; delta := new
            for (q, d) in core::mem::take(&mut delta) {
                let o = old.get_mut(&q).expect("member");
                for r in d.iter() {
                    o.insert(r.clone());
                }
            }
            for q in preds {
                let rows = fresh.remove(q).unwrap_or_default();
                let new = self.insert_all(q, rows);
                delta.insert(q.clone(), Relation::from_rows(new));
            }
        }
        for q in preds {
            let total: BTreeSet<Tuple> = self
                .db
                .get(q)
                .map(|r| r.iter().map(|x| x.to_vec()).collect())
                .unwrap_or_default();
            let frontier = last_delta
                .remove(q)
                .map(|v| v.into_iter().map(|x| x.to_vec()).collect())
                .unwrap_or_default();
            self.deltas.predicates.insert(
                q.clone(),
                PredicateDelta {
                    total,
                    frontier,
                    stage: None,
                },
            );
        }
        Ok(st)
    }
}
