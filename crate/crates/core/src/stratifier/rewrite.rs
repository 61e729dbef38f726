//! Source-to-source rewrite of staged aggregates into stratified rules.
//!
//! For a recursive aggregate rule `n` defining `h`, the rewrite emits
//!
//! ```text
//! sharedcount_h_n(count<V>) :- <body with stage and value columns projected away>.
//! h_acc_n(G.., cagg<X | J>)  :- <original body>.
//! h(.., V, ..)               :- h_acc_n(G.., V, C), sharedcount_h_n(C).
//! ```
//!
//! The first rule counts, below the recursion, how many derivations one
//! stage of the rule has. The continuous accumulator emits the running
//! value of every group after each derivation together with the running
//! derivation count of the stage, and the last rule keeps the values
//! reached when that count equals the precomputed one.
//!
//! The projected bodies read `p_keys` relations: each component predicate
//! `p` projected onto its columns that are neither the stage nor an
//! aggregate result, defined by projecting every rule for `p` the same way.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use thiserror::Error;

use super::{plan, StagedComponent, StratifyError, StratumKind};
use crate::model::{
    schedule_body, AggKind, AggPhase, AggregateHead, Atom, Head, Literal, Predicate, Program,
    ProgramError, Rule, StepKind, Term, Var,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RewriteError {
    #[error(transparent)]
    Stratify(#[from] StratifyError),
    #[error("rule {rule} is not pre-countable: literal {literal} filters on an aggregated value")]
    NotPreCountable { rule: usize, literal: usize },
    #[error("rewritten program is invalid: {0}")]
    Program(#[from] ProgramError),
}

const STAGE: u8 = 1;
const VALUE: u8 = 2;

struct Component<'a> {
    staged: &'a StagedComponent,
    value_cols: BTreeMap<Predicate, BTreeSet<usize>>,
    keys: BTreeMap<Predicate, Predicate>,
}

impl Component<'_> {
    fn contains(&self, p: &Predicate) -> bool {
        self.staged.stage_positions.contains_key(p)
    }

    fn key_cols(&self, p: &Predicate, arity: usize) -> Vec<usize> {
        let s = self.staged.stage_positions[p];
        let vals = &self.value_cols[p];
        (0..arity)
            .filter(|c| *c != s && !vals.contains(c))
            .collect()
    }

    fn taints(&self, rule: &Rule) -> BTreeMap<Var, u8> {
        let mut t: BTreeMap<Var, u8> = BTreeMap::new();
        for lit in &rule.body {
            if let Literal::Positive(a) = lit {
                if !self.contains(&a.predicate) {
                    continue;
                }
                let s = self.staged.stage_positions[&a.predicate];
                for (c, arg) in a.args.iter().enumerate() {
                    let bit = if c == s {
                        STAGE
                    } else if self.value_cols[&a.predicate].contains(&c) {
                        VALUE
                    } else {
                        0
                    };
                    for v in arg.vars() {
                        *t.entry(v).or_default() |= bit;
                    }
                }
            }
        }
        let steps = schedule_body(&rule.body, None).expect("program is safe");
        for step in &steps {
            let lit = &rule.body[step.literal];
            let inputs = match (&step.kind, lit) {
                (StepKind::Assign { target_is_left }, Literal::Compare(_, l, r)) => {
                    if *target_is_left {
                        r.vars()
                    } else {
                        l.vars()
                    }
                }
                (StepKind::Builtin, Literal::Builtin(kind, args)) => {
                    kind.inputs().iter().flat_map(|&k| args[k].vars()).collect()
                }
                _ => continue,
            };
            let bits = inputs
                .iter()
                .fold(0, |acc, v| acc | t.get(v).copied().unwrap_or(0));
            for v in &step.binds {
                *t.entry(v.clone()).or_default() |= bits;
            }
        }
        t
    }
}

fn taint_of(t: &BTreeMap<Var, u8>, vars: &[Var]) -> u8 {
    vars.iter()
        .fold(0, |acc, v| acc | t.get(v).copied().unwrap_or(0))
}

/// Body with component atoms replaced by their key projections, tainted
/// assignments and stage-only filters dropped. `Err(literal)` when a kept
/// literal would need an aggregated value.
fn project_body(
    c: &Component<'_>,
    p: &Program,
    rule: &Rule,
    head_vars: &[Var],
) -> Result<Vec<Literal>, usize> {
    let t = c.taints(rule);
    let steps = schedule_body(&rule.body, None).expect("program is safe");
    let mut keep = alloc::vec![None; rule.body.len()];
    for step in &steps {
        let i = step.literal;
        let lit = &rule.body[i];
        let bits = taint_of(&t, &lit.vars());
        let out = match (&step.kind, lit) {
            (StepKind::Scan, Literal::Positive(a)) if c.contains(&a.predicate) => {
                let arity = p.arity(&a.predicate).unwrap_or(a.args.len());
                let args: Vec<Term> = c
                    .key_cols(&a.predicate, arity)
                    .into_iter()
                    .map(|k| a.args[k].clone())
                    .collect();
                let vars: Vec<Var> = args.iter().flat_map(|x| x.vars()).collect();
                if taint_of(&t, &vars) != 0 {
                    return Err(i);
                }
                Some(Literal::Positive(Atom::new(
                    c.keys[&a.predicate].clone(),
                    args,
                )))
            }
            (StepKind::Scan | StepKind::Negation, _) => {
                if bits != 0 {
                    return Err(i);
                }
                Some(lit.clone())
            }
            (StepKind::Assign { .. }, _) => (bits == 0).then(|| lit.clone()),
            (StepKind::Builtin, Literal::Builtin(..)) => (bits == 0).then(|| lit.clone()),
            (StepKind::Test, _) | (StepKind::Builtin, _) => match bits {
                0 => Some(lit.clone()),
                STAGE => None,
                _ => return Err(i),
            },
        };
        keep[i] = out.map(|l| {
            (
                l,
                matches!(step.kind, StepKind::Assign { .. }),
                step.binds.clone(),
            )
        });
    }
    // assignments nobody reads any more
    let mut kept: Vec<(Literal, bool, Vec<Var>)> = keep.into_iter().flatten().collect();
    loop {
        let unused = kept.iter().position(|(_, assign, binds)| {
            *assign
                && binds.iter().all(|v| {
                    !head_vars.contains(v)
                        && kept
                            .iter()
                            .filter(|(_, _, b)| b != binds)
                            .all(|(l, _, _)| !l.vars().contains(v))
                })
        });
        match unused {
            Some(i) => {
                kept.remove(i);
            }
            None => break,
        }
    }
    Ok(kept.into_iter().map(|(l, _, _)| l).collect())
}

struct Names {
    taken: BTreeSet<String>,
}

impl Names {
    fn fresh(&mut self, base: &str) -> Predicate {
        let mut name = String::from(base);
        while self.taken.contains(&name) {
            name.push('_');
        }
        self.taken.insert(name.clone());
        Predicate::new(&name)
    }
}

fn fresh_var(rule: &Rule, base: &str) -> Var {
    let used: BTreeSet<String> = rule
        .body_vars()
        .into_iter()
        .chain(rule.head.required_vars())
        .map(|v| v.name().to_string())
        .collect();
    let mut name = String::from(base);
    while used.contains(&name) {
        name.push('_');
    }
    Var::new(&name)
}

/// Rewrites staged aggregate rules into plain stratified rules, as
/// described in the module docs. Programs without staged components are
/// returned unchanged.
pub fn stratified_rewrite(p: &Program) -> Result<Program, RewriteError> {
    let plan = plan(p)?;
    let mut names = Names {
        taken: p.schemas().keys().map(|q| q.name().to_string()).collect(),
    };
    let mut replaced: BTreeMap<usize, Vec<Rule>> = BTreeMap::new();
    let mut lower: Vec<Rule> = Vec::new();

    for stratum in &plan.strata {
        let StratumKind::Staged(staged) = &stratum.kind else {
            continue;
        };
        let mut comp = Component {
            staged,
            value_cols: BTreeMap::new(),
            keys: BTreeMap::new(),
        };
        for q in &stratum.predicates {
            let cols: BTreeSet<usize> = stratum
                .rules
                .iter()
                .filter_map(|&i| p.rules[i].head.aggregate())
                .filter(|a| &a.predicate == q)
                .flat_map(|a| a.output_columns())
                .collect();
            comp.value_cols.insert(q.clone(), cols);
            comp.keys
                .insert(q.clone(), names.fresh(&alloc::format!("{q}_keys")));
        }
        // columns computed from aggregated values are values too
        loop {
            let mut changed = false;
            for &ri in &stratum.rules {
                let rule = &p.rules[ri];
                let Head::Atom(h) = &rule.head else { continue };
                let t = comp.taints(rule);
                let s = staged.stage_positions[&h.predicate];
                for (col, arg) in h.args.iter().enumerate() {
                    if col != s
                        && taint_of(&t, &arg.vars()) & VALUE != 0
                        && comp
                            .value_cols
                            .get_mut(&h.predicate)
                            .expect("member")
                            .insert(col)
                    {
                        changed = true;
                    }
                }
            }
            if !changed {
                break;
            }
        }

        // key projections
        let mut key_rules: Vec<Rule> = Vec::new();
        for &ri in &stratum.rules {
            let rule = &p.rules[ri];
            let hp = rule.head.predicate();
            let t = comp.taints(rule);
            let head_args: Vec<Term> = comp
                .key_cols(hp, rule.head.arity())
                .into_iter()
                .map(|k| {
                    rule.head
                        .term_at(k)
                        .expect("key column is a group column")
                        .clone()
                })
                .collect();
            let head_vars: Vec<Var> = head_args.iter().flat_map(|a| a.vars()).collect();
            if taint_of(&t, &head_vars) != 0 {
                continue;
            }
            if let Ok(body) = project_body(&comp, p, rule, &head_vars) {
                let kr = Rule {
                    head: Head::Atom(Atom::new(comp.keys[hp].clone(), head_args)),
                    body,
                };
                if !key_rules.contains(&kr) {
                    key_rules.push(kr);
                }
            }
        }
        lower.extend(key_rules);

        for &ri in &staged.recursive_rules {
            let rule = &p.rules[ri];
            let Head::Aggregate(agg) = &rule.head else {
                continue;
            };
            let h = &agg.predicate;
            let n = ri;
            let keybody = project_body(&comp, p, rule, &[])
                .map_err(|literal| RewriteError::NotPreCountable { rule: ri, literal })?;

            let sc = names.fresh(&alloc::format!("sharedcount_{h}_{n}"));
            let probe = Rule {
                head: Head::Atom(Atom::new(sc.clone(), Vec::new())),
                body: keybody.clone(),
            };
            let sc_head = match probe.body_vars().into_iter().find(|v| !v.is_anonymous()) {
                Some(v) => Head::Aggregate(AggregateHead {
                    predicate: sc.clone(),
                    group_args: Vec::new(),
                    position: 0,
                    kind: AggKind::Count,
                    var: v,
                    phase: AggPhase::Final,
                }),
                None => Head::Atom(Atom::new(sc.clone(), alloc::vec![Term::constant(1)])),
            };
            lower.push(Rule {
                head: sc_head,
                body: keybody,
            });

            // continuous accumulator over the original body
            let s = staged.stage_positions[h];
            let s_idx = if s < agg.position { s } else { s - 1 };
            let mut group_args = agg.group_args.clone();
            let mut body = rule.body.clone();
            let stage_var = match &group_args[s_idx] {
                Term::Variable(v) if !v.is_anonymous() => v.clone(),
                other => {
                    let v = fresh_var(rule, "Stage");
                    body.push(Literal::Compare(
                        crate::value::CmpOp::Eq,
                        Term::Variable(v.clone()),
                        other.clone(),
                    ));
                    group_args[s_idx] = Term::Variable(v.clone());
                    v
                }
            };
            let acc = names.fresh(&alloc::format!("{h}_acc_{n}"));
            let k = group_args.len();
            let acc_rule = Rule {
                head: Head::Aggregate(AggregateHead {
                    predicate: acc.clone(),
                    group_args,
                    position: k,
                    kind: agg.kind,
                    var: agg.var.clone(),
                    phase: AggPhase::Continuous {
                        shared_by: alloc::vec![stage_var],
                    },
                }),
                body,
            };

            let g: Vec<Term> = (0..k).map(|i| Term::var(&alloc::format!("G{i}"))).collect();
            let (v, c) = (Term::var("V"), Term::var("C"));
            let mut acc_args = g.clone();
            acc_args.push(v.clone());
            acc_args.push(c.clone());
            let mut head_args = g;
            head_args.insert(agg.position, v);
            let emit_rule = Rule {
                head: Head::Atom(Atom::new(h.clone(), head_args)),
                body: alloc::vec![
                    Literal::Positive(Atom::new(acc, acc_args)),
                    Literal::Positive(Atom::new(sc, alloc::vec![c])),
                ],
            };
            replaced.insert(ri, alloc::vec![acc_rule, emit_rule]);
        }
    }

    if replaced.is_empty() {
        return Ok(p.clone());
    }
    let mut rules = lower;
    for (i, r) in p.rules.iter().enumerate() {
        match replaced.remove(&i) {
            Some(rs) => rules.extend(rs),
            None => rules.push(r.clone()),
        }
    }
    Ok(Program::new(rules)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parser::parse_program;

    #[test]
    fn non_recursive_program_unchanged() {
        let p = parse_program("qs(X, sum<Y>) :- pairs(X, Y).").unwrap();
        assert_eq!(stratified_rewrite(&p).unwrap(), p);
    }

    #[test]
    fn markov_rewrite() {
        let p = parse_program(
            "next(0, Cit, sum<In>) :- mov(Cit, Cit, _), In = 100000.
             next(J1, To, sum<In>) :- next(J, Cit, Pop), mov(Cit, To, Perc), In = Pop * Perc, J1 = J + 1, J1 <= 1000.",
        )
        .unwrap();
        let rw = stratified_rewrite(&p).unwrap();
        let text = alloc::format!("{rw}");
        assert_eq!(
            text,
            "next_keys(Cit) :- mov(Cit, Cit, _).\n\
             next_keys(To) :- next_keys(Cit), mov(Cit, To, Perc).\n\
             sharedcount_next_1(count<Cit>) :- next_keys(Cit), mov(Cit, To, Perc).\n\
             next(0, Cit, sum<In>) :- mov(Cit, Cit, _), In = 100000.\n\
             next_acc_1(J1, To, csum<In | J1>) :- next(J, Cit, Pop), mov(Cit, To, Perc), In = Pop * Perc, J1 = J + 1, J1 <= 1000.\n\
             next(G0, G1, V) :- next_acc_1(G0, G1, V, C), sharedcount_next_1(C).\n"
        );
    }

    #[test]
    fn value_filter_is_not_precountable() {
        let p = parse_program(
            "next(0, C, sum<P>) :- city(C), P = 1.
             next(J1, C, sum<P>) :- next(J, C, P), P > 3, J1 = J + 1.",
        )
        .unwrap();
        assert_eq!(
            stratified_rewrite(&p),
            Err(RewriteError::NotPreCountable {
                rule: 1,
                literal: 1
            })
        );
    }
}
