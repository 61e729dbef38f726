//! Stage-argument analysis for aggregates inside recursion.
//!
//! A recursive component is admitted when each of its predicates has a
//! stage column such that, in every recursive rule, the head stage equals
//! each component body atom's stage plus a non-negative constant (the lag),
//! and no cycle made only of lag-0 edges passes through an aggregate. Then
//! each aggregate group belongs to one stage, and the derivations feeding a
//! stage are complete once the lower stages are.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec::Vec;
use core::fmt;

use petgraph::algo::tarjan_scc;
use petgraph::graph::DiGraph;

use super::StagedComponent;
use crate::model::{Head, Literal, Predicate, Program, Rule, Term, Var};
use crate::value::{ArithOp, CmpOp, Value};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct PccEvidence {
    /// Stage column of the rule's head predicate.
    pub stage_position: usize,
    /// Smallest lag between the head stage and a component body atom.
    pub increment: i64,
}

impl fmt::Display for PccEvidence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "stage position {}, increment {:+}",
            self.stage_position, self.increment
        )
    }
}

/// Why a component has no admissible stage assignment. Ordered by how far
/// the best candidate assignment got; the largest is reported.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum PccRejection {
    NoStageArgument,
    StageNotInGroupKey,
    NonConstantIncrement,
    NonIncreasingStage,
}

impl fmt::Display for PccRejection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PccRejection::NoStageArgument => "no stage argument",
            PccRejection::StageNotInGroupKey => "stage not in group key",
            PccRejection::NonConstantIncrement => "non-constant stage increment",
            PccRejection::NonIncreasingStage => "non-increasing stage",
        })
    }
}

enum Offset {
    Const(i64),
    NonConstant,
}

fn int_const(t: &Term) -> Option<i64> {
    match t {
        Term::Constant(Value::Int(c)) => Some(*c),
        _ => None,
    }
}

/// Expressions equal to variable `x` according to the equalities in `body`.
fn definitions(x: &Var, body: &[Literal]) -> Vec<Term> {
    let mut out = Vec::new();
    let is_x = |t: &Term| t.as_var() == Some(x);
    for lit in body {
        let Literal::Compare(CmpOp::Eq, l, r) = lit else {
            continue;
        };
        for (a, b) in [(l, r), (r, l)] {
            if is_x(a) {
                out.push(b.clone());
            } else if let Term::Variable(y) = a {
                // y = x + c, y = c + x, y = x - c
                let solved = match b {
                    Term::Arith(ArithOp::Add, u, v) if is_x(u) => int_const(v).map(|c| (y, -c)),
                    Term::Arith(ArithOp::Add, u, v) if is_x(v) => int_const(u).map(|c| (y, -c)),
                    Term::Arith(ArithOp::Sub, u, v) if is_x(u) => int_const(v).map(|c| (y, c)),
                    _ => None,
                };
                if let Some((y, c)) = solved {
                    out.push(Term::arith(
                        ArithOp::Add,
                        Term::Variable(y.clone()),
                        Term::constant(c),
                    ));
                }
            }
        }
    }
    out
}

/// Offset of `t` relative to variable `base`, following equalities.
fn offset(t: &Term, base: &Var, body: &[Literal], visited: &mut Vec<Var>) -> Option<Offset> {
    match t {
        Term::Variable(x) if x == base => Some(Offset::Const(0)),
        Term::Variable(x) => {
            if visited.contains(x) {
                return None;
            }
            visited.push(x.clone());
            let mut found = None;
            for d in definitions(x, body) {
                match offset(&d, base, body, visited) {
                    Some(Offset::Const(c)) => {
                        found = Some(Offset::Const(c));
                        break;
                    }
                    Some(Offset::NonConstant) => found = Some(Offset::NonConstant),
                    None => {}
                }
            }
            visited.pop();
            found
        }
        Term::Constant(_) => None,
        Term::Arith(op, a, b) => {
            let ra = offset(a, base, body, visited);
            let rb = offset(b, base, body, visited);
            match (op, ra, rb) {
                (ArithOp::Add, Some(Offset::Const(x)), None) if int_const(b).is_some() => {
                    Some(Offset::Const(x + int_const(b)?))
                }
                (ArithOp::Add, None, Some(Offset::Const(y))) if int_const(a).is_some() => {
                    Some(Offset::Const(int_const(a)? + y))
                }
                (ArithOp::Sub, Some(Offset::Const(x)), None) if int_const(b).is_some() => {
                    Some(Offset::Const(x - int_const(b)?))
                }
                (_, None, None) => None,
                _ => Some(Offset::NonConstant),
            }
        }
    }
}

fn component_atoms<'r>(
    rule: &'r Rule,
    members: &BTreeSet<Predicate>,
) -> Vec<(usize, &'r crate::model::Atom)> {
    rule.body
        .iter()
        .enumerate()
        .filter_map(|(i, l)| match l {
            Literal::Positive(a) if members.contains(&a.predicate) => Some((i, a)),
            _ => None,
        })
        .collect()
}

fn is_aggregate(rule: &Rule) -> bool {
    matches!(rule.head, Head::Aggregate(_))
}

/// Lags for one candidate stage assignment.
fn lags_for(
    p: &Program,
    rules: &[usize],
    members: &BTreeSet<Predicate>,
    stage: &BTreeMap<Predicate, usize>,
) -> Result<BTreeMap<(usize, usize), i64>, PccRejection> {
    let mut lags = BTreeMap::new();
    for &ri in rules {
        let rule = &p.rules[ri];
        let atoms = component_atoms(rule, members);
        if atoms.is_empty() {
            continue;
        }
        let hp = rule.head.predicate();
        let head_term = rule
            .head
            .term_at(stage[hp])
            .expect("stage candidates exclude aggregate columns");
        for (li, atom) in atoms {
            let body_var = match &atom.args[stage[&atom.predicate]] {
                Term::Variable(v) if !v.is_anonymous() => v,
                _ => return Err(PccRejection::NonConstantIncrement),
            };
            match offset(head_term, body_var, &rule.body, &mut Vec::new()) {
                Some(Offset::Const(c)) if c < 0 => return Err(PccRejection::NonIncreasingStage),
                Some(Offset::Const(c)) => {
                    lags.insert((ri, li), c);
                }
                Some(Offset::NonConstant) => return Err(PccRejection::NonConstantIncrement),
                None if is_aggregate(rule) => return Err(PccRejection::StageNotInGroupKey),
                None => return Err(PccRejection::NonConstantIncrement),
            }
        }
    }
    Ok(lags)
}

/// Strongly connected components of the lag-0 graph, in evaluation order,
/// plus whether any cyclic one contains an aggregate edge.
fn lag_zero_layers(
    p: &Program,
    preds: &[Predicate],
    lags: &BTreeMap<(usize, usize), i64>,
) -> (Vec<Vec<Predicate>>, bool) {
    let mut g: DiGraph<usize, bool> = DiGraph::new();
    let nodes: Vec<_> = (0..preds.len()).map(|i| g.add_node(i)).collect();
    let at = |q: &Predicate| preds.binary_search(q).expect("component predicate");
    for (&(ri, li), &lag) in lags {
        if lag != 0 {
            continue;
        }
        let rule = &p.rules[ri];
        let Literal::Positive(a) = &rule.body[li] else {
            continue;
        };
        let from = nodes[at(rule.head.predicate())];
        let to = nodes[at(&a.predicate)];
        g.add_edge(from, to, is_aggregate(rule));
    }
    let mut bad = false;
    let mut layers = Vec::new();
    for scc in tarjan_scc(&g) {
        let cyclic = scc.len() > 1 || g.find_edge(scc[0], scc[0]).is_some();
        if cyclic {
            for e in g.edge_indices() {
                let (a, b) = g.edge_endpoints(e).expect("edge exists");
                if scc.contains(&a) && scc.contains(&b) && g[e] {
                    bad = true;
                }
            }
        }
        let mut layer: Vec<Predicate> = scc.iter().map(|&n| preds[g[n]].clone()).collect();
        layer.sort();
        layers.push(layer);
    }
    (layers, bad)
}

const SEARCH_LIMIT: usize = 1 << 16;

pub(crate) fn analyze_component(
    p: &Program,
    members: &BTreeSet<Predicate>,
) -> Result<(StagedComponent, BTreeMap<usize, PccEvidence>), PccRejection> {
    let preds: Vec<Predicate> = members.iter().cloned().collect();
    let rules: Vec<usize> = (0..p.rules.len())
        .filter(|&i| members.contains(p.rules[i].head.predicate()))
        .collect();

    // candidate stage columns: every column not produced by an aggregate
    let mut candidates: Vec<Vec<usize>> = Vec::new();
    for q in &preds {
        let arity = p.arity(q).unwrap_or(0);
        let excluded: BTreeSet<usize> = rules
            .iter()
            .filter_map(|&i| p.rules[i].head.aggregate())
            .filter(|a| &a.predicate == q)
            .flat_map(|a| a.output_columns())
            .collect();
        let cols: Vec<usize> = (0..arity).filter(|c| !excluded.contains(c)).collect();
        if cols.is_empty() {
            return Err(PccRejection::NoStageArgument);
        }
        candidates.push(cols);
    }

    let mut choice = alloc::vec![0usize; preds.len()];
    let mut worst = PccRejection::NoStageArgument;
    for _ in 0..SEARCH_LIMIT {
        let stage: BTreeMap<Predicate, usize> = preds
            .iter()
            .zip(&choice)
            .enumerate()
            .map(|(i, (q, &c))| (q.clone(), candidates[i][c]))
            .collect();
        match lags_for(p, &rules, members, &stage) {
            Ok(lags) => {
                let (layers, bad) = lag_zero_layers(p, &preds, &lags);
                if bad {
                    worst = worst.max(PccRejection::NonIncreasingStage);
                } else {
                    return Ok(build(p, &rules, members, stage, lags, layers));
                }
            }
            Err(why) => worst = worst.max(why),
        }
        // odometer, first predicate most significant
        let mut k = preds.len();
        loop {
            if k == 0 {
                return Err(worst);
            }
            k -= 1;
            choice[k] += 1;
            if choice[k] < candidates[k].len() {
                break;
            }
            choice[k] = 0;
        }
    }
    Err(worst)
}

fn build(
    p: &Program,
    rules: &[usize],
    members: &BTreeSet<Predicate>,
    stage_positions: BTreeMap<Predicate, usize>,
    lags: BTreeMap<(usize, usize), i64>,
    layers: Vec<Vec<Predicate>>,
) -> (StagedComponent, BTreeMap<usize, PccEvidence>) {
    let mut seed_rules = Vec::new();
    let mut recursive_rules = Vec::new();
    let mut evidence = BTreeMap::new();
    for &ri in rules {
        let rule = &p.rules[ri];
        let atoms = component_atoms(rule, members);
        if atoms.is_empty() {
            seed_rules.push(ri);
            continue;
        }
        recursive_rules.push(ri);
        if is_aggregate(rule) {
            let increment = atoms
                .iter()
                .map(|(li, _)| lags[&(ri, *li)])
                .min()
                .unwrap_or(0);
            evidence.insert(
                ri,
                PccEvidence {
                    stage_position: stage_positions[rule.head.predicate()],
                    increment,
                },
            );
        }
    }
    let positive_lags = lags.values().copied().filter(|&l| l > 0).collect();
    (
        StagedComponent {
            stage_positions,
            lags,
            seed_rules,
            recursive_rules,
            layers,
            positive_lags,
        },
        evidence,
    )
}

/// Stage evidence for one aggregate rule of a recursive component.
pub fn check_pcc(
    p: &Program,
    rule: usize,
    component: &BTreeSet<Predicate>,
) -> Result<PccEvidence, PccRejection> {
    let (staged, evidence) = analyze_component(p, component)?;
    if let Some(ev) = evidence.get(&rule) {
        return Ok(*ev);
    }
    let head = p.rules[rule].head.predicate();
    Ok(PccEvidence {
        stage_position: staged.stage_positions.get(head).copied().unwrap_or(0),
        increment: 0,
    })
}
