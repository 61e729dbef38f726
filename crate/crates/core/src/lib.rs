//! Bottom-up Datalog evaluation with aggregates in recursion.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, the command
//! line and everything touching the operating system live in the `aggrec`
//! crate.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod aggregates;
pub mod engine;
pub mod model;
pub mod oracle;
pub mod parser;
pub mod stratifier;
pub mod value;

pub use aggregates::{Accumulator, AggregateError};
pub use engine::{
    evaluate_program, evaluate_stratified_rewrite, extract_final_delta, DeltaState, EvalError,
    EvalMode, EvalOptions, EvalResult, EvalStats, FactSet, Tuple,
};
pub use model::{
    eval_term, AggKind, AggPhase, AggregateHead, Atom, Head, Literal, Predicate, Program,
    ProgramError, Rule, Term, Var,
};
pub use parser::{parse_program, ParseError, SourceSpan};
pub use stratifier::{
    build_dependency_graph, check_pcc, stratified_rewrite, stratify, DependencyGraph, EdgeKind,
    PccEvidence, PccRejection, StratifyError, StratumPlan,
};
pub use value::{compare, ArithOp, CmpOp, Value, ValueError};
