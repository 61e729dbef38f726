//! Predicate dependency graph and stratification.
//!
//! Negation and aggregation are non-monotonic edges and normally force the
//! body predicate into a strictly lower stratum. An aggregate edge may stay
//! inside a recursive component when the component carries a stage
//! argument that every recursive rule advances by a constant (see
//! [`check_pcc`]); such a component is evaluated stage by stage.

mod pcc;
mod rewrite;

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::fmt::Write as _;

use petgraph::algo::tarjan_scc;
use petgraph::graph::{DiGraph, NodeIndex};
use thiserror::Error;

use crate::model::{Head, Literal, Predicate, Program};

pub use pcc::{check_pcc, PccEvidence, PccRejection};
pub use rewrite::{stratified_rewrite, RewriteError};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EdgeKind {
    Positive,
    Negative,
    Aggregate,
}

/// `from` depends on `to`: `to` occurs in the body of a rule defining `from`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Edge {
    pub from: Predicate,
    pub to: Predicate,
    pub kind: EdgeKind,
    /// Rules contributing this edge.
    pub rules: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DependencyGraph {
    pub nodes: Vec<Predicate>,
    pub edges: Vec<Edge>,
}

impl DependencyGraph {
    pub fn has_edge(&self, from: &str, to: &str, kind: EdgeKind) -> bool {
        self.edges
            .iter()
            .any(|e| e.from.name() == from && e.to.name() == to && e.kind == kind)
    }

    fn node_index(&self, p: &Predicate) -> usize {
        self.nodes
            .binary_search(p)
            .expect("predicate is a graph node")
    }
}

pub fn build_dependency_graph(p: &Program) -> DependencyGraph {
    let mut nodes: BTreeSet<Predicate> = p.edb_schemas.keys().cloned().collect();
    let mut edges: BTreeMap<(Predicate, Predicate, EdgeKind), Vec<usize>> = BTreeMap::new();
    for (i, rule) in p.rules.iter().enumerate() {
        let head = rule.head.predicate();
        nodes.insert(head.clone());
        let aggregating = matches!(&rule.head, Head::Aggregate(a) if !a.is_continuous());
        for lit in &rule.body {
            let (atom, kind) = match lit {
                Literal::Positive(a) if aggregating => (a, EdgeKind::Aggregate),
                Literal::Positive(a) => (a, EdgeKind::Positive),
                Literal::Negative(a) => (a, EdgeKind::Negative),
                _ => continue,
            };
            nodes.insert(atom.predicate.clone());
            let rules = edges
                .entry((head.clone(), atom.predicate.clone(), kind))
                .or_default();
            if rules.last() != Some(&i) {
                rules.push(i);
            }
        }
    }
    DependencyGraph {
        nodes: nodes.into_iter().collect(),
        edges: edges
            .into_iter()
            .map(|((from, to, kind), rules)| Edge {
                from,
                to,
                kind,
                rules,
            })
            .collect(),
    }
}

/// Evaluation recipe for a component whose predicates carry a stage column.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StagedComponent {
    /// Stage column of every predicate in the component.
    pub stage_positions: BTreeMap<Predicate, usize>,
    /// `(rule, literal)` → head stage minus body stage, for every body atom
    /// over a component predicate.
    pub lags: BTreeMap<(usize, usize), i64>,
    /// Rules without component atoms in the body.
    pub seed_rules: Vec<usize>,
    pub recursive_rules: Vec<usize>,
    /// Evaluation order of the component's predicates within one stage.
    pub layers: Vec<Vec<Predicate>>,
    /// Distinct positive lags.
    pub positive_lags: BTreeSet<i64>,
}

impl StagedComponent {
    pub fn max_lag(&self) -> i64 {
        self.positive_lags.iter().next_back().copied().unwrap_or(1)
    }

    pub fn stage_position(&self, p: &Predicate) -> Option<usize> {
        self.stage_positions.get(p).copied()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum StratumKind {
    NonRecursive,
    /// Recursive without aggregation inside the cycle: plain fixpoint.
    Recursive,
    Staged(StagedComponent),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Stratum {
    pub predicates: Vec<Predicate>,
    pub rules: Vec<usize>,
    pub kind: StratumKind,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StratumPlan {
    pub strata: Vec<Stratum>,
    /// Stratum index of every rule, by rule index.
    pub rule_assignment: Vec<usize>,
    pub pcc_evidence: BTreeMap<usize, PccEvidence>,
}

impl StratumPlan {
    pub fn stratum_of(&self, p: &Predicate) -> Option<usize> {
        self.strata.iter().position(|s| s.predicates.contains(p))
    }

    /// Stage column of `p` if it belongs to a staged component.
    pub fn stage_position(&self, p: &Predicate) -> Option<usize> {
        self.strata.iter().find_map(|s| match &s.kind {
            StratumKind::Staged(c) => c.stage_position(p),
            _ => None,
        })
    }

    /// Text rendering: one line per stratum, then one line per rule with
    /// stage evidence.
    pub fn explain(&self, p: &Program) -> String {
        let mut out = String::new();
        for (i, s) in self.strata.iter().enumerate() {
            let names: Vec<&str> = s.predicates.iter().map(|p| p.name()).collect();
            let kind = match &s.kind {
                StratumKind::NonRecursive => String::from("non-recursive"),
                StratumKind::Recursive => String::from("recursive"),
                StratumKind::Staged(c) => {
                    let cols: Vec<String> = c
                        .stage_positions
                        .iter()
                        .map(|(p, k)| alloc::format!("{p}/{k}"))
                        .collect();
                    alloc::format!("staged on {}", cols.join(", "))
                }
            };
            let _ = writeln!(out, "stratum {i} [{kind}]: {}", names.join(", "));
            for &r in &s.rules {
                if let Some(ev) = self.pcc_evidence.get(&r) {
                    let _ = writeln!(out, "  rule {r}: {}  % {ev}", p.rules[r]);
                }
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum CycleReason {
    Negation,
    Aggregate(PccRejection),
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum StratifyError {
    #[error("not stratifiable: {} in cycle {}", describe(.reason), render_cycle(.cycle))]
    NotStratifiable {
        cycle: Vec<Predicate>,
        reason: CycleReason,
    },
}

fn describe(r: &CycleReason) -> String {
    match r {
        CycleReason::Negation => String::from("negation"),
        CycleReason::Aggregate(why) => alloc::format!("aggregate ({why})"),
    }
}

fn render_cycle(c: &[Predicate]) -> String {
    let names: Vec<&str> = c.iter().map(|p| p.name()).collect();
    names.join(" -> ")
}

impl fmt::Display for CycleReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&describe(self))
    }
}

/// Shortest path `from -> .. -> to` along graph edges restricted to `within`.
fn path_within(
    g: &DependencyGraph,
    within: &BTreeSet<Predicate>,
    from: &Predicate,
    to: &Predicate,
) -> Vec<Predicate> {
    let mut prev: BTreeMap<Predicate, Predicate> = BTreeMap::new();
    let mut queue = alloc::collections::VecDeque::from([from.clone()]);
    let mut seen = BTreeSet::from([from.clone()]);
    while let Some(n) = queue.pop_front() {
        if &n == to {
            break;
        }
        for e in g
            .edges
            .iter()
            .filter(|e| e.from == n && within.contains(&e.to))
        {
            if seen.insert(e.to.clone()) {
                prev.insert(e.to.clone(), n.clone());
                queue.push_back(e.to.clone());
            }
        }
    }
    let mut path = alloc::vec![to.clone()];
    let mut cur = to.clone();
    while &cur != from {
        match prev.get(&cur) {
            Some(p) => {
                cur = p.clone();
                path.push(cur.clone());
            }
            None => break,
        }
    }
    path.reverse();
    path
}

/// Cycle through edge `e`, written `e.from -> e.to -> .. -> e.from`.
fn cycle_through(g: &DependencyGraph, within: &BTreeSet<Predicate>, e: &Edge) -> Vec<Predicate> {
    let mut cycle = alloc::vec![e.from.clone()];
    if e.from == e.to {
        cycle.push(e.to.clone());
    } else {
        cycle.extend(path_within(g, within, &e.to, &e.from));
    }
    cycle
}

/// Strongly connected components of `g` in evaluation order: every
/// component comes after the components it depends on.
pub(crate) fn components(g: &DependencyGraph) -> Vec<Vec<Predicate>> {
    let mut dg: DiGraph<usize, ()> = DiGraph::new();
    let idx: Vec<NodeIndex> = (0..g.nodes.len()).map(|i| dg.add_node(i)).collect();
    for e in &g.edges {
        let a = idx[g.node_index(&e.from)];
        let b = idx[g.node_index(&e.to)];
        if dg.find_edge(a, b).is_none() {
            dg.add_edge(a, b, ());
        }
    }
    tarjan_scc(&dg)
        .into_iter()
        .map(|scc| {
            let mut preds: Vec<Predicate> =
                scc.into_iter().map(|n| g.nodes[dg[n]].clone()).collect();
            preds.sort();
            preds
        })
        .collect()
}

pub fn stratify(g: &DependencyGraph, p: &Program) -> Result<StratumPlan, StratifyError> {
    let idb = p.idb_predicates();
    let mut strata = Vec::new();
    let mut rule_assignment = alloc::vec![usize::MAX; p.rules.len()];
    let mut pcc_evidence = BTreeMap::new();

    for comp in components(g) {
        if !comp.iter().any(|q| idb.contains(q)) {
            continue;
        }
        let members: BTreeSet<Predicate> = comp.iter().cloned().collect();
        let inner: Vec<&Edge> = g
            .edges
            .iter()
            .filter(|e| members.contains(&e.from) && members.contains(&e.to))
            .collect();
        if let Some(e) = inner.iter().find(|e| e.kind == EdgeKind::Negative) {
            return Err(StratifyError::NotStratifiable {
                cycle: cycle_through(g, &members, e),
                reason: CycleReason::Negation,
            });
        }
        let rules: Vec<usize> = (0..p.rules.len())
            .filter(|&i| members.contains(p.rules[i].head.predicate()))
            .collect();
        let continuous_in_cycle = rules.iter().any(|&i| {
            let r = &p.rules[i];
            matches!(&r.head, Head::Aggregate(a) if a.is_continuous())
                && r.body
                    .iter()
                    .any(|l| matches!(l, Literal::Positive(a) if members.contains(&a.predicate)))
        });
        let aggregate_edge = inner.iter().find(|e| e.kind == EdgeKind::Aggregate);
        let kind = if aggregate_edge.is_some() || continuous_in_cycle {
            match pcc::analyze_component(p, &members) {
                Ok((staged, evidence)) => {
                    pcc_evidence.extend(evidence);
                    StratumKind::Staged(staged)
                }
                Err(why) => {
                    let cycle = match aggregate_edge {
                        Some(e) => cycle_through(g, &members, e),
                        None => {
                            let e = inner
                                .first()
                                .expect("recursive component has an inner edge");
                            cycle_through(g, &members, e)
                        }
                    };
                    return Err(StratifyError::NotStratifiable {
                        cycle,
                        reason: CycleReason::Aggregate(why),
                    });
                }
            }
        } else if !inner.is_empty() {
            StratumKind::Recursive
        } else {
            StratumKind::NonRecursive
        };
        for &r in &rules {
            rule_assignment[r] = strata.len();
        }
        strata.push(Stratum {
            predicates: comp,
            rules,
            kind,
        });
    }
    Ok(StratumPlan {
        strata,
        rule_assignment,
        pcc_evidence,
    })
}

/// Builds the dependency graph and stratifies in one call.
pub fn plan(p: &Program) -> Result<StratumPlan, StratifyError> {
    stratify(&build_dependency_graph(p), p)
}
