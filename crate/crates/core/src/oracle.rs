//! Slow reference implementations used to check the engine.
//!
//! The aggregate oracles build every permutation of the input set by
//! literal application of list-based Horn clauses and read the aggregate
//! off the complete permutations. Nothing here shares code with the
//! engine's accumulators.

use alloc::collections::BTreeSet;
use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

use crate::value::{abs_f64, arith, semantic_cmp, ArithOp, Value, ValueError};

/// Largest set the permutation oracles accept.
pub const HORN_SIZE_LIMIT: usize = 7;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error("set of size {size} exceeds the oracle limit of {limit}")]
    SizeLimit { size: usize, limit: usize },
    #[error("row {row} of the transition matrix sums to {sum}, not 1")]
    NonStochasticRow { row: usize, sum: f64 },
    #[error("dimension mismatch: {0}")]
    Shape(&'static str),
    #[error(transparent)]
    Value(#[from] ValueError),
}

pub type Permutation = Vec<Value>;

fn check_size(s: &BTreeSet<Value>) -> Result<(), OracleError> {
    if s.len() > HORN_SIZE_LIMIT {
        return Err(OracleError::SizeLimit {
            size: s.len(),
            limit: HORN_SIZE_LIMIT,
        });
    }
    Ok(())
}

/// Least fixpoint of
/// ```text
/// f(init(X), [X])   :- p(X).
/// f(step(A, X), [X|L]) :- p(X), f(A, L), new(X, L).
/// ```
/// where `new(X, L)` holds when `X` does not occur in `L`.
fn horn_fold<A: Ord + Clone>(
    s: &BTreeSet<Value>,
    init: impl Fn(&Value) -> Result<A, OracleError>,
    step: impl Fn(&A, &Value) -> Result<A, OracleError>,
) -> Result<BTreeSet<(A, Permutation)>, OracleError> {
    check_size(s)?;
    let mut facts: BTreeSet<(A, Permutation)> = BTreeSet::new();
    for x in s {
        facts.insert((init(x)?, vec![x.clone()]));
    }
    let mut delta: Vec<(A, Permutation)> = facts.iter().cloned().collect();
    while !delta.is_empty() {
        let mut next = Vec::new();
        for x in s {
            for (a, l) in &delta {
                if l.contains(x) {
                    continue;
                }
                let mut l1 = vec![x.clone()];
                l1.extend(l.iter().cloned());
                let fact = (step(a, x)?, l1);
                if facts.insert(fact.clone()) {
                    next.push(fact);
                }
            }
        }
        delta = next;
    }
    Ok(facts)
}

/// Continuous count: every `(k, permutation prefix)` pair.
pub fn ccp_horn(s: &BTreeSet<Value>) -> Result<BTreeSet<(i64, Permutation)>, OracleError> {
    horn_fold(s, |_| Ok(1), |c, _| Ok(c + 1))
}

/// `final_count(C) :- ccp(C, _), C1 = C + 1, not ccp(C1, _).`
/// The empty set has no final count.
pub fn final_count_horn(s: &BTreeSet<Value>) -> Result<Option<i64>, OracleError> {
    let ccp = ccp_horn(s)?;
    let counts: BTreeSet<i64> = ccp.iter().map(|(c, _)| *c).collect();
    Ok(counts.iter().copied().find(|c| !counts.contains(&(c + 1))))
}

/// Continuous sum over every permutation; the result is the set of sums
/// reached by complete permutations (a single value for exact numbers).
pub fn csc_horn_all(s: &BTreeSet<Value>) -> Result<BTreeSet<Value>, OracleError> {
    let csc = horn_fold(
        s,
        |x| Ok(x.clone()),
        |acc, x| Ok(arith(ArithOp::Add, acc, x)?),
    )?;
    Ok(csc
        .into_iter()
        .filter(|(_, l)| l.len() == s.len())
        .map(|(v, _)| v)
        .collect())
}

/// Final sum of `s`, or `None` for the empty set.
pub fn csc_horn(s: &BTreeSet<Value>) -> Result<Option<Value>, OracleError> {
    Ok(csc_horn_all(s)?.into_iter().next())
}

/// `Avg = S / C, final_count(C)`, over the first complete sum.
pub fn avg_horn(s: &BTreeSet<Value>) -> Result<Option<Value>, OracleError> {
    let (Some(sum), Some(c)) = (csc_horn(s)?, final_count_horn(s)?) else {
        return Ok(None);
    };
    let total = sum.as_f64().ok_or(ValueError::TypeMismatch {
        op: "avg",
        left: sum.type_name(),
        right: "int",
    })?;
    Ok(Some(Value::Float(total / c as f64)))
}

fn extremum_horn(s: &BTreeSet<Value>, keep_larger: bool) -> Result<Option<Value>, OracleError> {
    // larger(X, Y, X) :- X > Y.  larger(X, Y, Y) :- X <= Y.
    let pick = |m: &Value, x: &Value| -> Result<Value, OracleError> {
        let ord = semantic_cmp(x, m)?;
        let x_wins = if keep_larger {
            ord.is_gt()
        } else {
            ord.is_lt()
        };
        Ok(if x_wins { x.clone() } else { m.clone() })
    };
    let folded = horn_fold(s, |x| Ok(x.clone()), pick)?;
    let finals: BTreeSet<Value> = folded
        .into_iter()
        .filter(|(_, l)| l.len() == s.len())
        .map(|(v, _)| v)
        .collect();
    Ok(finals.into_iter().next())
}

/// Maximum by pairwise `larger` folding over every permutation.
pub fn cmp_horn(s: &BTreeSet<Value>) -> Result<Option<Value>, OracleError> {
    extremum_horn(s, true)
}

/// Minimum, the `smaller` counterpart of [`cmp_horn`].
pub fn cmp_min_horn(s: &BTreeSet<Value>) -> Result<Option<Value>, OracleError> {
    extremum_horn(s, false)
}

/// Population vectors for steps `0..=steps` of `v ← v·P`.
pub fn markov_reference(
    transition: &[Vec<f64>],
    init: &[f64],
    steps: usize,
) -> Result<Vec<Vec<f64>>, OracleError> {
    check_stochastic(transition, init)?;
    let mut out = vec![init.to_vec()];
    for _ in 0..steps {
        let v = out.last().expect("non-empty");
        out.push(markov_step(transition, v));
    }
    Ok(out)
}

/// Iterates until no component moves by more than `epsilon`, or
/// `max_steps` steps.
pub fn markov_stationary(
    transition: &[Vec<f64>],
    init: &[f64],
    epsilon: f64,
    max_steps: usize,
) -> Result<Vec<f64>, OracleError> {
    check_stochastic(transition, init)?;
    let mut v = init.to_vec();
    for _ in 0..max_steps {
        let w = markov_step(transition, &v);
        let moved = v
            .iter()
            .zip(&w)
            .map(|(a, b)| abs_f64(a - b))
            .fold(0.0, f64::max);
        v = w;
        if moved <= epsilon {
            break;
        }
    }
    Ok(v)
}

fn check_stochastic(transition: &[Vec<f64>], init: &[f64]) -> Result<(), OracleError> {
    if transition.len() != init.len() || transition.iter().any(|r| r.len() != init.len()) {
        return Err(OracleError::Shape(
            "transition matrix must be n x n for n cities",
        ));
    }
    for (row, r) in transition.iter().enumerate() {
        let sum: f64 = r.iter().sum();
        if abs_f64(sum - 1.0) > 1e-12 {
            return Err(OracleError::NonStochasticRow { row, sum });
        }
    }
    Ok(())
}

fn markov_step(p: &[Vec<f64>], v: &[f64]) -> Vec<f64> {
    (0..v.len())
        .map(|j| (0..v.len()).map(|i| v[i] * p[i][j]).sum())
        .collect()
}

/// Lloyd iterations: `centers[i]` is used to compute `assignments[i]`,
/// and `centers[i + 1]` is the update from it.
#[derive(Clone, Debug, PartialEq)]
pub struct KMeansTrace {
    pub centers: Vec<Vec<Vec<f64>>>,
    pub assignments: Vec<Vec<usize>>,
}

impl KMeansTrace {
    pub fn final_centers(&self) -> &[Vec<f64>] {
        self.centers.last().expect("at least the initial centers")
    }
}

pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Within-cluster sum of squares of `assignment` against `centers`.
pub fn wcss(points: &[Vec<f64>], centers: &[Vec<f64>], assignment: &[usize]) -> f64 {
    points
        .iter()
        .zip(assignment)
        .map(|(p, &c)| squared_distance(p, &centers[c]))
        .sum()
}

/// Textbook Lloyd's algorithm. Ties go to the smaller center index; a
/// center that loses all its points stays where it was. Stops when an
/// assignment repeats or after `max_iters` updates.
pub fn kmeans_reference(
    points: &[Vec<f64>],
    init_centers: &[Vec<f64>],
    max_iters: usize,
) -> Result<KMeansTrace, OracleError> {
    if points.is_empty() || init_centers.is_empty() {
        return Err(OracleError::Shape("need at least one point and one center"));
    }
    let dims = init_centers[0].len();
    if points.iter().chain(init_centers).any(|p| p.len() != dims) {
        return Err(OracleError::Shape(
            "all points and centers need the same dimension",
        ));
    }
    let mut trace = KMeansTrace {
        centers: vec![init_centers.to_vec()],
        assignments: Vec::new(),
    };
    loop {
        let centers = trace.final_centers().to_vec();
        let assignment: Vec<usize> = points
            .iter()
            .map(|p| {
                let mut best = 0;
                for (k, c) in centers.iter().enumerate().skip(1) {
                    if squared_distance(p, c) < squared_distance(p, &centers[best]) {
                        best = k;
                    }
                }
                best
            })
            .collect();
        let repeated = trace.assignments.last() == Some(&assignment);
        trace.assignments.push(assignment.clone());
        if repeated || trace.assignments.len() > max_iters {
            break;
        }
        let mut next = centers.clone();
        for (k, c) in next.iter_mut().enumerate() {
            let members: Vec<&Vec<f64>> = points
                .iter()
                .zip(&assignment)
                .filter(|(_, &a)| a == k)
                .map(|(p, _)| p)
                .collect();
            if members.is_empty() {
                continue;
            }
            for (d, x) in c.iter_mut().enumerate() {
                *x = members.iter().map(|p| p[d]).sum::<f64>() / members.len() as f64;
            }
        }
        trace.centers.push(next);
    }
    Ok(trace)
}
