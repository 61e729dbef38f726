//! Rules compiled to nested-loop join plans over slot-indexed bindings.

use alloc::boxed::Box;
use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec::Vec;

use super::relation::{Relation, Row};
use super::EvalError;
use crate::aggregates::Accumulator;
use crate::model::{
    schedule_body, AggKind, AggPhase, BuiltinKind, Head, Literal, Rule, StepKind, Term, Var,
};
use crate::value::{arith, compare, decd, encd, ArithOp, CmpOp, Value, ValueError};

#[derive(Clone, Debug)]
pub(crate) enum CTerm {
    Slot(usize),
    Const(Value),
    Arith(ArithOp, Box<CTerm>, Box<CTerm>),
}

impl CTerm {
    fn eval(&self, b: &[Option<Value>]) -> Result<Value, ValueError> {
        match self {
            CTerm::Slot(s) => b[*s]
                .clone()
                .ok_or_else(|| ValueError::UnboundVariable(alloc::format!("#{s}"))),
            CTerm::Const(v) => Ok(v.clone()),
            CTerm::Arith(op, l, r) => arith(*op, &l.eval(b)?, &r.eval(b)?),
        }
    }
}

/// How one column of a matched tuple relates to the binding.
#[derive(Clone, Debug)]
pub(crate) enum Pat {
    /// First occurrence of a variable: bind it.
    Bind(usize),
    /// Known before the match: part of the lookup key.
    Key(CTerm),
    /// Repeated variable bound earlier in the same tuple.
    Same(usize),
    /// Anonymous variable under negation.
    Any,
}

#[derive(Clone, Debug)]
pub(crate) struct Match {
    pub literal: usize,
    pats: Vec<Pat>,
    pub key_cols: Vec<usize>,
}

#[derive(Clone, Debug)]
enum CStep {
    Scan(Match),
    Negation(Match),
    Test(CmpOp, CTerm, CTerm),
    Assign(usize, CTerm),
    Encd { d: CTerm, id: CTerm, out: Pat },
    Decd { p: CTerm, d: Pat, id: Pat },
}

#[derive(Clone, Debug)]
enum CHead {
    Atom(Vec<CTerm>),
    Final {
        group: Vec<CTerm>,
        position: usize,
        kind: AggKind,
        var: usize,
    },
    Continuous {
        group: Vec<CTerm>,
        kind: AggKind,
        var: usize,
        scope: Vec<usize>,
    },
}

#[derive(Clone, Debug)]
pub(crate) struct CompiledRule {
    pub index: usize,
    nslots: usize,
    head: CHead,
    steps: Vec<CStep>,
}

struct Compiler {
    slots: BTreeMap<Var, usize>,
    bound: BTreeSet<usize>,
}

impl Compiler {
    fn term(&self, t: &Term) -> CTerm {
        match t {
            Term::Variable(v) => CTerm::Slot(self.slots[v]),
            Term::Constant(c) => CTerm::Const(c.clone()),
            Term::Arith(op, l, r) => {
                CTerm::Arith(*op, Box::new(self.term(l)), Box::new(self.term(r)))
            }
        }
    }

    /// Patterns for a tuple of terms; binds fresh variables.
    fn pats(&mut self, literal: usize, args: &[Term]) -> Match {
        let mut local: BTreeSet<usize> = BTreeSet::new();
        let mut pats = Vec::with_capacity(args.len());
        let mut key_cols = Vec::new();
        for (c, t) in args.iter().enumerate() {
            let pat = match t {
                Term::Variable(v) => match self.slots.get(v) {
                    None => Pat::Any,
                    Some(&s) if self.bound.contains(&s) => Pat::Key(CTerm::Slot(s)),
                    Some(&s) if local.contains(&s) => Pat::Same(s),
                    Some(&s) => {
                        local.insert(s);
                        Pat::Bind(s)
                    }
                },
                other => Pat::Key(self.term(other)),
            };
            if matches!(pat, Pat::Key(_)) {
                key_cols.push(c);
            }
            pats.push(pat);
        }
        self.bound.extend(local);
        Match {
            literal,
            pats,
            key_cols,
        }
    }
}

pub(crate) fn compile(index: usize, rule: &Rule, first: Option<usize>) -> CompiledRule {
    let schedule = schedule_body(&rule.body, first).expect("program is safe");
    let bound_vars: BTreeSet<Var> = schedule
        .iter()
        .flat_map(|s| s.binds.iter().cloned())
        .collect();
    let slots: BTreeMap<Var, usize> = rule
        .body_vars()
        .into_iter()
        .filter(|v| bound_vars.contains(v))
        .enumerate()
        .map(|(i, v)| (v, i))
        .collect();
    let nslots = slots.len();
    let mut c = Compiler {
        slots,
        bound: BTreeSet::new(),
    };
    let mut steps = Vec::with_capacity(schedule.len());
    for step in &schedule {
        let lit = &rule.body[step.literal];
        let cs = match (&step.kind, lit) {
            (StepKind::Scan, Literal::Positive(a)) => CStep::Scan(c.pats(step.literal, &a.args)),
            (StepKind::Negation, Literal::Negative(a)) => {
                CStep::Negation(c.pats(step.literal, &a.args))
            }
            (StepKind::Test, Literal::Compare(op, l, r)) => CStep::Test(*op, c.term(l), c.term(r)),
            (StepKind::Assign { target_is_left }, Literal::Compare(_, l, r)) => {
                let (target, expr) = if *target_is_left { (l, r) } else { (r, l) };
                let v = target.as_var().expect("assignment target is a variable");
                let e = c.term(expr);
                let s = c.slots[v];
                c.bound.insert(s);
                CStep::Assign(s, e)
            }
            (StepKind::Builtin, Literal::Builtin(BuiltinKind::Encd, [d, id, out])) => {
                let (d, id) = (c.term(d), c.term(id));
                let m = c.pats(step.literal, core::slice::from_ref(out));
                CStep::Encd {
                    d,
                    id,
                    out: m.pats.into_iter().next().expect("one pattern"),
                }
            }
            (StepKind::Builtin, Literal::Builtin(BuiltinKind::Decd, [p, d, id])) => {
                let p = c.term(p);
                let m = c.pats(step.literal, &[d.clone(), id.clone()]);
                let mut it = m.pats.into_iter();
                CStep::Decd {
                    p,
                    d: it.next().expect("two patterns"),
                    id: it.next().expect("two patterns"),
                }
            }
            _ => unreachable!("scheduler step kind matches its literal"),
        };
        steps.push(cs);
    }
    let head = match &rule.head {
        Head::Atom(a) => CHead::Atom(a.args.iter().map(|t| c.term(t)).collect()),
        Head::Aggregate(agg) => {
            let group = agg.group_args.iter().map(|t| c.term(t)).collect();
            let var = c.slots[&agg.var];
            match &agg.phase {
                AggPhase::Final => CHead::Final {
                    group,
                    position: agg.position,
                    kind: agg.kind,
                    var,
                },
                AggPhase::Continuous { shared_by } => CHead::Continuous {
                    group,
                    kind: agg.kind,
                    var,
                    scope: shared_by.iter().map(|v| c.slots[v]).collect(),
                },
            }
        }
    };
    CompiledRule {
        index,
        nslots,
        head,
        steps,
    }
}

impl CompiledRule {
    /// Lookups performed by this plan: `(literal, indexed columns)`.
    pub(crate) fn index_needs(&self) -> impl Iterator<Item = (usize, &[usize])> {
        self.steps.iter().filter_map(|s| match s {
            CStep::Scan(m) | CStep::Negation(m) => Some((m.literal, m.key_cols.as_slice())),
            _ => None,
        })
    }
}

type Emit<'f> = dyn FnMut(&[Option<Value>]) -> Result<(), EvalError> + 'f;

struct Run<'a, 'f> {
    rule: &'a CompiledRule,
    sources: &'a [&'a Relation],
    binding: Vec<Option<Value>>,
    count: u64,
    emit: &'f mut Emit<'f>,
}

impl<'a> Run<'a, '_> {
    fn err(&self, e: ValueError) -> EvalError {
        EvalError::Rule {
            rule: self.rule.index,
            error: e,
        }
    }

    fn key(&self, m: &Match) -> Result<Vec<Value>, EvalError> {
        m.pats
            .iter()
            .filter_map(|p| match p {
                Pat::Key(t) => Some(t.eval(&self.binding).map_err(|e| self.err(e))),
                _ => None,
            })
            .collect()
    }

    /// Binds the pattern against `vals`; returns the slots it bound, or
    /// `None` on mismatch (after undoing partial binds).
    fn bind(
        &mut self,
        pats: &[Pat],
        vals: &[Value],
        check_keys: bool,
    ) -> Result<Option<Vec<usize>>, EvalError> {
        let mut newly = Vec::new();
        for (p, v) in pats.iter().zip(vals) {
            let ok = match p {
                Pat::Bind(s) => {
                    self.binding[*s] = Some(v.clone());
                    newly.push(*s);
                    true
                }
                Pat::Same(s) => self.binding[*s].as_ref() == Some(v),
                Pat::Key(t) if check_keys => t.eval(&self.binding).map_err(|e| self.err(e))? == *v,
                Pat::Key(_) | Pat::Any => true,
            };
            if !ok {
                for s in &newly {
                    self.binding[*s] = None;
                }
                return Ok(None);
            }
        }
        Ok(Some(newly))
    }

    fn go(&mut self, i: usize) -> Result<(), EvalError> {
        let rule: &'a CompiledRule = self.rule;
        let Some(step) = rule.steps.get(i) else {
            self.count += 1;
            return (self.emit)(&self.binding);
        };
        match step {
            CStep::Scan(m) => {
                let rel: &'a Relation = self.sources[m.literal];
                if m.key_cols.is_empty() {
                    for row in rel.iter() {
                        self.try_row(m, row, i)?;
                    }
                } else {
                    let key = self.key(m)?;
                    for row in rel.lookup(&m.key_cols, &key) {
                        self.try_row(m, row, i)?;
                    }
                }
                Ok(())
            }
            CStep::Negation(m) => {
                let rel = self.sources[m.literal];
                let found = if m.key_cols.len() == m.pats.len() {
                    let key = self.key(m)?;
                    rel.contains(&key)
                } else if m.key_cols.is_empty() {
                    !rel.is_empty()
                } else {
                    let key = self.key(m)?;
                    !rel.lookup(&m.key_cols, &key).is_empty()
                };
                if found {
                    Ok(())
                } else {
                    self.go(i + 1)
                }
            }
            CStep::Test(op, l, r) => {
                let a = l.eval(&self.binding).map_err(|e| self.err(e))?;
                let b = r.eval(&self.binding).map_err(|e| self.err(e))?;
                if compare(*op, &a, &b).map_err(|e| self.err(e))? {
                    self.go(i + 1)
                } else {
                    Ok(())
                }
            }
            CStep::Assign(s, e) => {
                let v = e.eval(&self.binding).map_err(|e| self.err(e))?;
                self.binding[*s] = Some(v);
                let r = self.go(i + 1);
                self.binding[*s] = None;
                r
            }
            CStep::Encd { d, id, out } => {
                let d = d.eval(&self.binding).map_err(|e| self.err(e))?;
                let id = id.eval(&self.binding).map_err(|e| self.err(e))?;
                let packed = encd(&d, &id);
                self.with(core::slice::from_ref(out), &[packed], i)
            }
            CStep::Decd { p, d, id } => {
                let p = p.eval(&self.binding).map_err(|e| self.err(e))?;
                let (a, b) = decd(&p).map_err(|e| self.err(e))?;
                self.with(&[d.clone(), id.clone()], &[a, b], i)
            }
        }
    }

    fn try_row(&mut self, m: &Match, row: &Row, i: usize) -> Result<(), EvalError> {
        if let Some(newly) = self.bind(&m.pats, row, false)? {
            self.go(i + 1)?;
            for s in newly {
                self.binding[s] = None;
            }
        }
        Ok(())
    }

    fn with(&mut self, pats: &[Pat], vals: &[Value], i: usize) -> Result<(), EvalError> {
        if let Some(newly) = self.bind(pats, vals, true)? {
            self.go(i + 1)?;
            for s in newly {
                self.binding[s] = None;
            }
        }
        Ok(())
    }
}

/// Calls `emit` once per complete body instantiation; returns the count.
fn derivations(
    rule: &CompiledRule,
    sources: &[&Relation],
    emit: &mut Emit<'_>,
) -> Result<u64, EvalError> {
    let mut run = Run {
        rule,
        sources,
        binding: alloc::vec![None; rule.nslots],
        count: 0,
        emit,
    };
    run.go(0)?;
    Ok(run.count)
}

pub(crate) struct Firing {
    pub rows: Vec<Row>,
    pub derivations: u64,
}

fn full(b: &[Option<Value>]) -> Vec<Value> {
    b.iter()
        .map(|v| v.clone().expect("all body variables bound"))
        .collect()
}

/// Evaluates one rule against `sources` (indexed by body literal) and
/// returns its head tuples. Aggregates are grouped, accumulated in sorted
/// derivation order and finalized once the join is exhausted.
pub(crate) fn fire(rule: &CompiledRule, sources: &[&Relation]) -> Result<Firing, EvalError> {
    let err = |e: ValueError| EvalError::Rule {
        rule: rule.index,
        error: e,
    };
    let agg_err = |e| EvalError::Aggregate {
        rule: rule.index,
        error: e,
    };
    let eval_all = |ts: &[CTerm], b: &[Option<Value>]| -> Result<Vec<Value>, EvalError> {
        ts.iter().map(|t| t.eval(b).map_err(err)).collect()
    };
    match &rule.head {
        CHead::Atom(args) => {
            let mut rows = Vec::new();
            let n = derivations(rule, sources, &mut |b| {
                rows.push(Row::from(eval_all(args, b)?));
                Ok(())
            })?;
            Ok(Firing {
                rows,
                derivations: n,
            })
        }
        CHead::Final {
            group,
            position,
            kind,
            var,
        } => {
            let mut groups: BTreeMap<Vec<Value>, BTreeMap<Vec<Value>, Value>> = BTreeMap::new();
            let n = derivations(rule, sources, &mut |b| {
                let g = eval_all(group, b)?;
                let v = b[*var].clone().expect("aggregated variable bound");
                groups.entry(g).or_default().insert(full(b), v);
                Ok(())
            })?;
            let mut rows = Vec::with_capacity(groups.len());
            for (mut g, contribs) in groups {
                let mut acc = Accumulator::new(*kind);
                for v in contribs.values() {
                    acc.accumulate(v).map_err(agg_err)?;
                }
                g.insert(*position, acc.finalize().map_err(agg_err)?);
                rows.push(Row::from(g));
            }
            Ok(Firing {
                rows,
                derivations: n,
            })
        }
        CHead::Continuous {
            group,
            kind,
            var,
            scope,
        } => {
            type Contribs = BTreeMap<Vec<Value>, (Vec<Value>, Value)>;
            let mut scopes: BTreeMap<Vec<Value>, Contribs> = BTreeMap::new();
            let n = derivations(rule, sources, &mut |b| {
                let s: Vec<Value> = scope
                    .iter()
                    .map(|&k| b[k].clone().expect("bound"))
                    .collect();
                let g = eval_all(group, b)?;
                let v = b[*var].clone().expect("aggregated variable bound");
                scopes.entry(s).or_default().insert(full(b), (g, v));
                Ok(())
            })?;
            let mut rows = Vec::new();
            for contribs in scopes.into_values() {
                let mut accs: BTreeMap<Vec<Value>, Accumulator> = BTreeMap::new();
                for (k, (g, v)) in contribs.into_values().enumerate() {
                    accs.entry(g)
                        .or_insert_with(|| Accumulator::new(*kind))
                        .accumulate(&v)
                        .map_err(agg_err)?;
                    for (g, acc) in &accs {
                        let mut row = g.clone();
                        row.push(acc.current().map_err(agg_err)?);
                        row.push(Value::Int(k as i64 + 1));
                        rows.push(Row::from(row));
                    }
                }
            }
            Ok(Firing {
                rows,
                derivations: n,
            })
        }
    }
}
