//! Terms, atoms, rules and programs.

use alloc::boxed::Box;
use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::sync::Arc;
use alloc::vec::Vec;
use core::fmt;

use thiserror::Error;

use crate::value::{arith, ArithOp, CmpOp, Value, ValueError};

/// A predicate name.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Predicate(Arc<str>);

impl Predicate {
    pub fn new(name: &str) -> Self {
        Predicate(Arc::from(name))
    }

    pub fn name(&self) -> &str {
        &self.0
    }
}

impl core::borrow::Borrow<str> for Predicate {
    fn borrow(&self) -> &str {
        &self.0
    }
}

impl fmt::Debug for Predicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Display for Predicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for Predicate {
    fn from(s: &str) -> Self {
        Predicate::new(s)
    }
}

/// A rule variable. Anonymous `_` occurrences get distinct internal names
/// of the form `_#n` and print back as `_`.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Var(Arc<str>);

impl Var {
    pub fn new(name: &str) -> Self {
        Var(Arc::from(name))
    }

    pub(crate) fn anonymous(n: usize) -> Self {
        Var(Arc::from(alloc::format!("_#{n}").as_str()))
    }

    pub fn name(&self) -> &str {
        &self.0
    }

    pub fn is_anonymous(&self) -> bool {
        self.0.starts_with("_#")
    }
}

impl fmt::Debug for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_anonymous() {
            f.write_str("_")
        } else {
            f.write_str(&self.0)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Term {
    Variable(Var),
    Constant(Value),
    Arith(ArithOp, Box<Term>, Box<Term>),
}

impl Term {
    pub fn var(name: &str) -> Self {
        Term::Variable(Var::new(name))
    }

    pub fn constant(v: impl Into<Value>) -> Self {
        Term::Constant(v.into())
    }

    pub fn arith(op: ArithOp, l: Term, r: Term) -> Self {
        Term::Arith(op, Box::new(l), Box::new(r))
    }

    pub fn as_var(&self) -> Option<&Var> {
        match self {
            Term::Variable(v) => Some(v),
            _ => None,
        }
    }

    /// Appends the variables of this term, in order of occurrence.
    pub fn collect_vars(&self, out: &mut Vec<Var>) {
        match self {
            Term::Variable(v) => out.push(v.clone()),
            Term::Constant(_) => {}
            Term::Arith(_, l, r) => {
                l.collect_vars(out);
                r.collect_vars(out);
            }
        }
    }

    pub fn vars(&self) -> Vec<Var> {
        let mut out = Vec::new();
        self.collect_vars(&mut out);
        out
    }
}

pub type Binding = BTreeMap<Var, Value>;

/// Evaluates a term under a variable binding.
pub fn eval_term(t: &Term, binding: &Binding) -> Result<Value, ValueError> {
    match t {
        Term::Constant(v) => Ok(v.clone()),
        Term::Variable(v) => binding
            .get(v)
            .cloned()
            .ok_or_else(|| ValueError::UnboundVariable(v.to_string())),
        Term::Arith(op, l, r) => arith(*op, &eval_term(l, binding)?, &eval_term(r, binding)?),
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Atom {
    pub predicate: Predicate,
    pub args: Vec<Term>,
}

impl Atom {
    pub fn new(predicate: impl Into<Predicate>, args: Vec<Term>) -> Self {
        Atom {
            predicate: predicate.into(),
            args,
        }
    }

    pub fn vars(&self) -> Vec<Var> {
        let mut out = Vec::new();
        for a in &self.args {
            a.collect_vars(&mut out);
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum AggKind {
    Count,
    Sum,
    Avg,
    Min,
    Max,
}

impl AggKind {
    pub const ALL: [AggKind; 5] = [
        AggKind::Count,
        AggKind::Sum,
        AggKind::Avg,
        AggKind::Min,
        AggKind::Max,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AggKind::Count => "count",
            AggKind::Sum => "sum",
            AggKind::Avg => "avg",
            AggKind::Min => "min",
            AggKind::Max => "max",
        }
    }

    pub fn from_name(s: &str) -> Option<(AggKind, bool)> {
        let (continuous, base) = match s.strip_prefix('c') {
            Some(rest) if rest != "ount" => (true, rest),
            _ => (false, s),
        };
        let kind = AggKind::ALL.into_iter().find(|k| k.name() == base)?;
        Some((kind, continuous))
    }
}

/// Whether an aggregate head emits the completed value once per group, or
/// the running state after every consumed derivation.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum AggPhase {
    Final,
    /// Emits `(group.., running value, running count)` after each step. The
    /// running count is shared by all groups agreeing on `shared_by`.
    Continuous {
        shared_by: Vec<Var>,
    },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AggregateHead {
    pub predicate: Predicate,
    pub group_args: Vec<Term>,
    /// Argument index of the aggregate within the head.
    pub position: usize,
    pub kind: AggKind,
    pub var: Var,
    pub phase: AggPhase,
}

impl AggregateHead {
    pub fn arity(&self) -> usize {
        match self.phase {
            AggPhase::Final => self.group_args.len() + 1,
            AggPhase::Continuous { .. } => self.group_args.len() + 2,
        }
    }

    pub fn is_continuous(&self) -> bool {
        matches!(self.phase, AggPhase::Continuous { .. })
    }

    /// Head columns produced by the aggregate rather than by group terms.
    pub fn output_columns(&self) -> core::ops::Range<usize> {
        match self.phase {
            AggPhase::Final => self.position..self.position + 1,
            AggPhase::Continuous { .. } => self.position..self.position + 2,
        }
    }

    /// Group term that lands in head column `col`, if `col` is a group column.
    pub fn group_term_at(&self, col: usize) -> Option<&Term> {
        let out = self.output_columns();
        if out.contains(&col) {
            None
        } else if col < out.start {
            self.group_args.get(col)
        } else {
            self.group_args.get(col - out.len())
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Head {
    Atom(Atom),
    Aggregate(AggregateHead),
}

impl Head {
    pub fn predicate(&self) -> &Predicate {
        match self {
            Head::Atom(a) => &a.predicate,
            Head::Aggregate(a) => &a.predicate,
        }
    }

    pub fn arity(&self) -> usize {
        match self {
            Head::Atom(a) => a.args.len(),
            Head::Aggregate(a) => a.arity(),
        }
    }

    pub fn aggregate(&self) -> Option<&AggregateHead> {
        match self {
            Head::Aggregate(a) => Some(a),
            Head::Atom(_) => None,
        }
    }

    /// Term in head column `col`; `None` for aggregate output columns.
    pub fn term_at(&self, col: usize) -> Option<&Term> {
        match self {
            Head::Atom(a) => a.args.get(col),
            Head::Aggregate(a) => a.group_term_at(col),
        }
    }

    /// Variables the body must bind.
    pub fn required_vars(&self) -> Vec<Var> {
        let mut out = Vec::new();
        match self {
            Head::Atom(a) => {
                for t in &a.args {
                    t.collect_vars(&mut out);
                }
            }
            Head::Aggregate(a) => {
                for t in &a.group_args {
                    t.collect_vars(&mut out);
                }
                out.push(a.var.clone());
                if let AggPhase::Continuous { shared_by } = &a.phase {
                    out.extend(shared_by.iter().cloned());
                }
            }
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BuiltinKind {
    /// `encd(Distance, Id, Packed)`
    Encd,
    /// `decd(Packed, Distance, Id)`
    Decd,
}

impl BuiltinKind {
    pub fn name(self) -> &'static str {
        match self {
            BuiltinKind::Encd => "encd",
            BuiltinKind::Decd => "decd",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "encd" => Some(BuiltinKind::Encd),
            "decd" => Some(BuiltinKind::Decd),
            _ => None,
        }
    }

    /// Argument positions that must be bound before the call.
    pub fn inputs(self) -> &'static [usize] {
        match self {
            BuiltinKind::Encd => &[0, 1],
            BuiltinKind::Decd => &[0],
        }
    }

    pub fn outputs(self) -> &'static [usize] {
        match self {
            BuiltinKind::Encd => &[2],
            BuiltinKind::Decd => &[1, 2],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Literal {
    Positive(Atom),
    Negative(Atom),
    Compare(CmpOp, Term, Term),
    Builtin(BuiltinKind, [Term; 3]),
}

impl Literal {
    pub fn vars(&self) -> Vec<Var> {
        let mut out = Vec::new();
        match self {
            Literal::Positive(a) | Literal::Negative(a) => {
                for t in &a.args {
                    t.collect_vars(&mut out);
                }
            }
            Literal::Compare(_, l, r) => {
                l.collect_vars(&mut out);
                r.collect_vars(&mut out);
            }
            Literal::Builtin(_, args) => {
                for t in args {
                    t.collect_vars(&mut out);
                }
            }
        }
        out
    }

    pub fn positive_atom(&self) -> Option<&Atom> {
        match self {
            Literal::Positive(a) => Some(a),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Rule {
    pub head: Head,
    pub body: Vec<Literal>,
}

impl Rule {
    /// Body variables in order of first written occurrence.
    pub fn body_vars(&self) -> Vec<Var> {
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        for lit in &self.body {
            for v in lit.vars() {
                if seen.insert(v.clone()) {
                    out.push(v);
                }
            }
        }
        out
    }
}

/// How a scheduled body literal is executed.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum StepKind {
    Scan,
    Negation,
    Test,
    /// `target = expr` where `target` is the side that gets bound.
    Assign {
        target_is_left: bool,
    },
    Builtin,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Step {
    pub literal: usize,
    pub kind: StepKind,
    /// Variables first bound by this step.
    pub binds: Vec<Var>,
}

/// Orders body literals for left-to-right evaluation.
///
/// Positive atoms run in written order (with `first` rotated to the front);
/// every other literal runs as soon as the variables it needs are bound.
/// Returns the offending variable when some literal can never run.
pub fn schedule_body(body: &[Literal], first: Option<usize>) -> Result<Vec<Step>, Var> {
    let mut bound: BTreeSet<Var> = BTreeSet::new();
    let mut remaining: Vec<usize> = (0..body.len()).collect();
    let mut steps = Vec::with_capacity(body.len());

    let is_bound = |bound: &BTreeSet<Var>, t: &Term| t.vars().iter().all(|v| bound.contains(v));

    if let Some(f) = first {
        remaining.retain(|&i| i != f);
        let atom = body[f]
            .positive_atom()
            .expect("rotated literal must be a positive atom");
        let binds = scan_binds(atom, &bound);
        bound.extend(binds.iter().cloned());
        steps.push(Step {
            literal: f,
            kind: StepKind::Scan,
            binds,
        });
    }

    while !remaining.is_empty() {
        let mut chosen: Option<(usize, StepKind, Vec<Var>)> = None;
        for (pos, &i) in remaining.iter().enumerate() {
            let ready = match &body[i] {
                Literal::Positive(_) => None,
                Literal::Negative(a) => a
                    .vars()
                    .iter()
                    .all(|v| v.is_anonymous() || bound.contains(v))
                    .then(|| (StepKind::Negation, Vec::new())),
                Literal::Compare(op, l, r) => {
                    if is_bound(&bound, l) && is_bound(&bound, r) {
                        Some((StepKind::Test, Vec::new()))
                    } else if *op == CmpOp::Eq {
                        match (l, r) {
                            (Term::Variable(v), other)
                                if !bound.contains(v) && is_bound(&bound, other) =>
                            {
                                Some((
                                    StepKind::Assign {
                                        target_is_left: true,
                                    },
                                    alloc::vec![v.clone()],
                                ))
                            }
                            (other, Term::Variable(v))
                                if !bound.contains(v) && is_bound(&bound, other) =>
                            {
                                Some((
                                    StepKind::Assign {
                                        target_is_left: false,
                                    },
                                    alloc::vec![v.clone()],
                                ))
                            }
                            _ => None,
                        }
                    } else {
                        None
                    }
                }
                Literal::Builtin(kind, args) => {
                    let inputs_ready = kind.inputs().iter().all(|&k| is_bound(&bound, &args[k]));
                    let mut binds = Vec::new();
                    let mut outputs_ok = true;
                    for &k in kind.outputs() {
                        match &args[k] {
                            Term::Variable(v) if !bound.contains(v) => {
                                if !binds.contains(v) {
                                    binds.push(v.clone());
                                }
                            }
                            t => outputs_ok &= is_bound(&bound, t),
                        }
                    }
                    (inputs_ready && outputs_ok).then_some((StepKind::Builtin, binds))
                }
            };
            if let Some((kind, binds)) = ready {
                chosen = Some((pos, kind, binds));
                break;
            }
        }
        if chosen.is_none() {
            // no filter is ready: take the next positive atom in written order
            for (pos, &i) in remaining.iter().enumerate() {
                if let Literal::Positive(a) = &body[i] {
                    let ready = a.args.iter().all(|t| match t {
                        Term::Arith(..) => is_bound(&bound, t),
                        _ => true,
                    });
                    if ready {
                        chosen = Some((pos, StepKind::Scan, scan_binds(a, &bound)));
                        break;
                    }
                }
            }
        }
        match chosen {
            Some((pos, kind, binds)) => {
                let i = remaining.remove(pos);
                bound.extend(binds.iter().cloned());
                steps.push(Step {
                    literal: i,
                    kind,
                    binds,
                });
            }
            None => {
                let i = remaining[0];
                let culprit = body[i]
                    .vars()
                    .into_iter()
                    .find(|v| {
                        !bound.contains(v)
                            && !(v.is_anonymous() && matches!(body[i], Literal::Negative(_)))
                    })
                    .expect("unschedulable literal has an unbound variable");
                return Err(culprit);
            }
        }
    }
    Ok(steps)
}

fn scan_binds(atom: &Atom, bound: &BTreeSet<Var>) -> Vec<Var> {
    let mut binds = Vec::new();
    for t in &atom.args {
        if let Term::Variable(v) = t {
            if !bound.contains(v) && !binds.contains(v) {
                binds.push(v.clone());
            }
        }
    }
    binds
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProgramError {
    #[error("predicate {predicate} used with arity {found}, expected {expected}")]
    ArityMismatch {
        predicate: Predicate,
        expected: usize,
        found: usize,
    },
    #[error("rule {rule} is unsafe: variable {variable} is not bound by a positive body atom")]
    SafetyViolation { rule: usize, variable: String },
    #[error("rule {rule}: {message}")]
    InvalidAggregate { rule: usize, message: String },
    #[error("rule {rule}: {name} is a builtin and cannot be defined by rules")]
    ReservedPredicate { rule: usize, name: String },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Program {
    pub rules: Vec<Rule>,
    /// Predicates only read by rules, with their arity. Facts for these come
    /// from fact files.
    pub edb_schemas: BTreeMap<Predicate, usize>,
}

impl Program {
    /// Validates arities, aggregate heads and rule safety.
    pub fn new(rules: Vec<Rule>) -> Result<Program, ProgramError> {
        let mut arities: BTreeMap<Predicate, usize> = BTreeMap::new();
        let mut check = |p: &Predicate, n: usize| match arities.get(p) {
            Some(&m) if m != n => Err(ProgramError::ArityMismatch {
                predicate: p.clone(),
                expected: m,
                found: n,
            }),
            Some(_) => Ok(()),
            None => {
                arities.insert(p.clone(), n);
                Ok(())
            }
        };
        let mut idb = BTreeSet::new();
        for (i, rule) in rules.iter().enumerate() {
            let hp = rule.head.predicate();
            if BuiltinKind::from_name(hp.name()).is_some() {
                return Err(ProgramError::ReservedPredicate {
                    rule: i,
                    name: hp.name().into(),
                });
            }
            check(hp, rule.head.arity())?;
            idb.insert(hp.clone());
            for lit in &rule.body {
                if let Literal::Positive(a) | Literal::Negative(a) = lit {
                    check(&a.predicate, a.args.len())?;
                }
            }
            if let Head::Aggregate(agg) = &rule.head {
                validate_aggregate(i, agg)?;
            }
            let steps =
                schedule_body(&rule.body, None).map_err(|v| ProgramError::SafetyViolation {
                    rule: i,
                    variable: v.to_string(),
                })?;
            let bound: BTreeSet<Var> = steps.iter().flat_map(|s| s.binds.iter().cloned()).collect();
            if let Some(v) = rule
                .head
                .required_vars()
                .into_iter()
                .find(|v| !bound.contains(v))
            {
                return Err(ProgramError::SafetyViolation {
                    rule: i,
                    variable: v.to_string(),
                });
            }
        }
        let edb_schemas = arities
            .into_iter()
            .filter(|(p, _)| !idb.contains(p))
            .collect();
        Ok(Program { rules, edb_schemas })
    }

    pub fn idb_predicates(&self) -> BTreeSet<Predicate> {
        self.rules
            .iter()
            .map(|r| r.head.predicate().clone())
            .collect()
    }

    pub fn arity(&self, p: &Predicate) -> Option<usize> {
        if let Some(n) = self.edb_schemas.get(p) {
            return Some(*n);
        }
        self.rules
            .iter()
            .find(|r| r.head.predicate() == p)
            .map(|r| r.head.arity())
    }

    /// Every predicate mentioned anywhere, with its arity.
    pub fn schemas(&self) -> BTreeMap<Predicate, usize> {
        let mut out = self.edb_schemas.clone();
        for r in &self.rules {
            out.insert(r.head.predicate().clone(), r.head.arity());
        }
        out
    }
}

fn validate_aggregate(rule: usize, agg: &AggregateHead) -> Result<(), ProgramError> {
    let invalid = |message: String| Err(ProgramError::InvalidAggregate { rule, message });
    if agg.group_args.iter().any(|t| t.vars().contains(&agg.var)) {
        return invalid(alloc::format!(
            "aggregated variable {} also appears among the group arguments",
            agg.var
        ));
    }
    if agg.position > agg.group_args.len() {
        return invalid("aggregate position out of range".into());
    }
    if let AggPhase::Continuous { shared_by } = &agg.phase {
        if agg.position != agg.group_args.len() {
            return invalid("a continuous aggregate must be the last head argument".into());
        }
        let group_vars: Vec<Var> = agg.group_args.iter().flat_map(|t| t.vars()).collect();
        if let Some(v) = shared_by.iter().find(|v| !group_vars.contains(v)) {
            return invalid(alloc::format!(
                "shared-count variable {v} is not a group argument"
            ));
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Pretty printing. The output re-parses to an identical Program.

fn fmt_term(t: &Term, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    match t {
        Term::Variable(v) => write!(f, "{v}"),
        Term::Constant(c) => write!(f, "{c}"),
        Term::Arith(op, l, r) => {
            let p = op.precedence();
            let wrap = |child: &Term, strict: bool| match child {
                Term::Arith(cop, ..) => {
                    if strict {
                        cop.precedence() <= p
                    } else {
                        cop.precedence() < p
                    }
                }
                _ => false,
            };
            let paren = |child: &Term, w: bool, f: &mut fmt::Formatter<'_>| {
                if w {
                    f.write_str("(")?;
                    fmt_term(child, f)?;
                    f.write_str(")")
                } else {
                    fmt_term(child, f)
                }
            };
            paren(l, wrap(l, false), f)?;
            write!(f, " {} ", op.symbol())?;
            paren(r, wrap(r, true), f)
        }
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt_term(self, f)
    }
}

fn fmt_args(args: &[Term], f: &mut fmt::Formatter<'_>) -> fmt::Result {
    for (i, a) in args.iter().enumerate() {
        if i > 0 {
            f.write_str(", ")?;
        }
        write!(f, "{a}")?;
    }
    Ok(())
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.predicate)?;
        if !self.args.is_empty() {
            f.write_str("(")?;
            fmt_args(&self.args, f)?;
            f.write_str(")")?;
        }
        Ok(())
    }
}

impl fmt::Display for AggregateHead {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}(", self.predicate)?;
        let mut first = true;
        let mut sep = |f: &mut fmt::Formatter<'_>| {
            if !first {
                f.write_str(", ")?;
            }
            first = false;
            Ok(())
        };
        for i in 0..=self.group_args.len() {
            if i == self.position {
                sep(f)?;
                match &self.phase {
                    AggPhase::Final => write!(f, "{}<{}>", self.kind.name(), self.var)?,
                    AggPhase::Continuous { shared_by } => {
                        write!(f, "c{}<{}", self.kind.name(), self.var)?;
                        for (k, v) in shared_by.iter().enumerate() {
                            f.write_str(if k == 0 { " | " } else { ", " })?;
                            write!(f, "{v}")?;
                        }
                        f.write_str(">")?;
                    }
                }
            }
            if let Some(t) = self.group_args.get(i) {
                sep(f)?;
                write!(f, "{t}")?;
            }
        }
        f.write_str(")")
    }
}

impl fmt::Display for Head {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Head::Atom(a) => write!(f, "{a}"),
            Head::Aggregate(a) => write!(f, "{a}"),
        }
    }
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Literal::Positive(a) => write!(f, "{a}"),
            Literal::Negative(a) => write!(f, "not {a}"),
            Literal::Compare(op, l, r) => write!(f, "{l} {} {r}", op.symbol()),
            Literal::Builtin(kind, args) => {
                write!(f, "{}(", kind.name())?;
                fmt_args(args, f)?;
                f.write_str(")")
            }
        }
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.head)?;
        if !self.body.is_empty() {
            f.write_str(" :- ")?;
            for (i, l) in self.body.iter().enumerate() {
                if i > 0 {
                    f.write_str(", ")?;
                }
                write!(f, "{l}")?;
            }
        }
        f.write_str(".")
    }
}

impl fmt::Display for Program {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for r in &self.rules {
            writeln!(f, "{r}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn bind(pairs: &[(&str, Value)]) -> Binding {
        pairs
            .iter()
            .map(|(k, v)| (Var::new(k), v.clone()))
            .collect()
    }

    #[test]
    fn eval_term_examples() {
        let c_plus_1 = Term::arith(ArithOp::Add, Term::var("C"), Term::constant(1));
        assert_eq!(
            eval_term(&c_plus_1, &bind(&[("C", 0.into())])),
            Ok(Value::Int(1))
        );

        let flow = Term::arith(ArithOp::Mul, Term::var("Pop"), Term::var("Perc"));
        let b = bind(&[("Pop", 100000.into()), ("Perc", Value::Float(0.1))]);
        assert_eq!(eval_term(&flow, &b), Ok(Value::Float(10000.0)));

        let avg = Term::arith(ArithOp::Div, Term::var("S"), Term::var("C"));
        assert_eq!(
            eval_term(&avg, &bind(&[("S", 7.into()), ("C", 2.into())])),
            Ok(Value::Float(3.5))
        );
    }

    #[test]
    fn eval_term_errors() {
        let t = Term::arith(ArithOp::Add, Term::var("X"), Term::constant(1));
        assert_eq!(
            eval_term(&t, &Binding::new()),
            Err(ValueError::UnboundVariable("X".into()))
        );
        assert!(matches!(
            eval_term(&t, &bind(&[("X", "a".into())])),
            Err(ValueError::TypeMismatch { .. })
        ));
        let d = Term::arith(ArithOp::Div, Term::var("X"), Term::constant(0));
        assert_eq!(
            eval_term(&d, &bind(&[("X", 4.into())])),
            Err(ValueError::DivisionByZero)
        );
    }

    #[test]
    fn scheduling_delays_filters_until_bound() {
        // J1 <= 3 is written before J1 = J + 1
        let body = vec![
            Literal::Positive(Atom::new("p", vec![Term::var("J")])),
            Literal::Compare(CmpOp::Le, Term::var("J1"), Term::constant(3)),
            Literal::Compare(
                CmpOp::Eq,
                Term::var("J1"),
                Term::arith(ArithOp::Add, Term::var("J"), Term::constant(1)),
            ),
        ];
        let steps = schedule_body(&body, None).unwrap();
        let order: Vec<usize> = steps.iter().map(|s| s.literal).collect();
        assert_eq!(order, vec![0, 2, 1]);
        assert_eq!(
            steps[1].kind,
            StepKind::Assign {
                target_is_left: true
            }
        );
    }

    #[test]
    fn unbound_negated_variable_is_reported() {
        let body = vec![Literal::Negative(Atom::new("p", vec![Term::var("Y")]))];
        assert_eq!(schedule_body(&body, None), Err(Var::new("Y")));
    }

    #[test]
    fn anonymous_variables_in_negation_are_wildcards() {
        let body = vec![
            Literal::Positive(Atom::new("q", vec![Term::var("X")])),
            Literal::Negative(Atom::new(
                "p",
                vec![Term::var("X"), Term::Variable(Var::anonymous(1))],
            )),
        ];
        assert!(schedule_body(&body, None).is_ok());
    }

    #[test]
    fn continuous_kind_names() {
        assert_eq!(AggKind::from_name("csum"), Some((AggKind::Sum, true)));
        assert_eq!(AggKind::from_name("count"), Some((AggKind::Count, false)));
        assert_eq!(AggKind::from_name("ccount"), Some((AggKind::Count, true)));
        assert_eq!(AggKind::from_name("cmax"), Some((AggKind::Max, true)));
        assert_eq!(AggKind::from_name("total"), None);
    }
}
