//! Running state of the five aggregate kinds.
//!
//! An [`Accumulator`] consumes one contribution at a time (the continuous
//! phase) and yields its final value once the caller knows the input is
//! exhausted (the completion phase).

use core::cmp::Ordering;

use thiserror::Error;

use crate::model::AggKind;
use crate::value::{arith, semantic_cmp, ArithOp, Value, ValueError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AggregateError {
    #[error(transparent)]
    Value(#[from] ValueError),
    #[error("{0} over an empty group")]
    EmptyGroup(&'static str),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Accumulator {
    kind: AggKind,
    n: u64,
    /// Running sum for sum/avg, current extremum for min/max.
    value: Option<Value>,
}

impl Accumulator {
    pub fn new(kind: AggKind) -> Self {
        Accumulator {
            kind,
            n: 0,
            value: None,
        }
    }

    pub fn kind(&self) -> AggKind {
        self.kind
    }

    /// Number of contributions consumed so far.
    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn accumulate(&mut self, v: &Value) -> Result<(), AggregateError> {
        let next = match (self.kind, &self.value) {
            (AggKind::Count, _) => None,
            (AggKind::Sum | AggKind::Avg, None) => {
                if !v.is_numeric() {
                    return Err(ValueError::TypeMismatch {
                        op: "sum",
                        left: v.type_name(),
                        right: "number",
                    }
                    .into());
                }
                Some(v.clone())
            }
            (AggKind::Sum | AggKind::Avg, Some(s)) => Some(arith(ArithOp::Add, s, v)?),
            (AggKind::Min | AggKind::Max, None) => Some(v.clone()),
            (AggKind::Min, Some(m)) => Some(match semantic_cmp(v, m)? {
                Ordering::Less => v.clone(),
                _ => m.clone(),
            }),
            (AggKind::Max, Some(m)) => Some(match semantic_cmp(v, m)? {
                Ordering::Greater => v.clone(),
                _ => m.clone(),
            }),
        };
        self.value = next;
        self.n += 1;
        Ok(())
    }

    /// Consuming form of [`Accumulator::accumulate`].
    pub fn with(mut self, v: &Value) -> Result<Self, AggregateError> {
        self.accumulate(v)?;
        Ok(self)
    }

    /// Running value after the contributions seen so far.
    pub fn current(&self) -> Result<Value, AggregateError> {
        self.finalize()
    }

    pub fn finalize(&self) -> Result<Value, AggregateError> {
        match self.kind {
            AggKind::Count => Ok(Value::Int(self.n as i64)),
            AggKind::Sum => Ok(self.value.clone().unwrap_or(Value::Int(0))),
            AggKind::Avg => {
                let s = self
                    .value
                    .as_ref()
                    .ok_or(AggregateError::EmptyGroup("avg"))?;
                let s = s.as_f64().unwrap_or(f64::NAN);
                Ok(Value::Float(s / self.n as f64))
            }
            AggKind::Min | AggKind::Max => self
                .value
                .clone()
                .ok_or(AggregateError::EmptyGroup(self.kind.name())),
        }
    }
}

/// Folds `values` in the given order and finalizes.
pub fn aggregate<'a>(
    kind: AggKind,
    values: impl IntoIterator<Item = &'a Value>,
) -> Result<Value, AggregateError> {
    let mut acc = Accumulator::new(kind);
    for v in values {
        acc.accumulate(v)?;
    }
    acc.finalize()
}
