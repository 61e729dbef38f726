//! Runtime constants and their arithmetic.
//!
//! A [`Value`] is dynamically typed. Two orders exist side by side:
//!
//! * the *storage* order ([`Ord`]), total across variants, used to keep
//!   relations sorted and output deterministic;
//! * the *semantic* order ([`compare`]), used by comparison goals in rule
//!   bodies, which refuses to compare symbols against numbers.
//!
//! Within a single variant the two orders agree.

use alloc::string::String;
use alloc::sync::Arc;
use core::cmp::Ordering;
use core::fmt;

use thiserror::Error;

/// An immutable string constant.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Symbol(Arc<str>);

impl Symbol {
    pub fn new(s: &str) -> Self {
        Symbol(Arc::from(s))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Debug for Symbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", &*self.0)
    }
}

impl fmt::Display for Symbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for Symbol {
    fn from(s: &str) -> Self {
        Symbol::new(s)
    }
}

#[derive(Clone, Debug)]
pub enum Value {
    Int(i64),
    Float(f64),
    Symbol(Symbol),
    /// Lexicographically ordered pair built by `encd`.
    Pair(Arc<(Value, Value)>),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ValueError {
    #[error("type mismatch: cannot {op} {left} and {right}")]
    TypeMismatch {
        op: &'static str,
        left: &'static str,
        right: &'static str,
    },
    #[error("division by zero")]
    DivisionByZero,
    #[error("integer overflow in {0}")]
    Overflow(&'static str),
    #[error("unbound variable {0}")]
    UnboundVariable(String),
}

impl Value {
    pub fn symbol(s: &str) -> Self {
        Value::Symbol(Symbol::new(s))
    }

    pub fn pair(first: Value, second: Value) -> Self {
        Value::Pair(Arc::new((first, second)))
    }

    pub fn type_name(&self) -> &'static str {
        match self {
            Value::Int(_) => "int",
            Value::Float(_) => "float",
            Value::Symbol(_) => "symbol",
            Value::Pair(_) => "pair",
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Value::Int(i) => Some(*i as f64),
            Value::Float(x) => Some(*x),
            _ => None,
        }
    }

    pub fn as_int(&self) -> Option<i64> {
        match self {
            Value::Int(i) => Some(*i),
            _ => None,
        }
    }

    pub fn as_pair(&self) -> Option<(&Value, &Value)> {
        match self {
            Value::Pair(p) => Some((&p.0, &p.1)),
            _ => None,
        }
    }

    pub fn is_numeric(&self) -> bool {
        matches!(self, Value::Int(_) | Value::Float(_))
    }

    fn rank(&self) -> u8 {
        match self {
            Value::Int(_) => 0,
            Value::Float(_) => 1,
            Value::Symbol(_) => 2,
            Value::Pair(_) => 3,
        }
    }
}

impl PartialEq for Value {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Value {}

impl PartialOrd for Value {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Value {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (Value::Int(a), Value::Int(b)) => a.cmp(b),
            (Value::Float(a), Value::Float(b)) => a.total_cmp(b),
            (Value::Symbol(a), Value::Symbol(b)) => a.cmp(b),
            (Value::Pair(a), Value::Pair(b)) => a.0.cmp(&b.0).then_with(|| a.1.cmp(&b.1)),
            _ => self.rank().cmp(&other.rank()),
        }
    }
}

impl From<i64> for Value {
    fn from(i: i64) -> Self {
        Value::Int(i)
    }
}

impl From<f64> for Value {
    fn from(x: f64) -> Self {
        Value::Float(x)
    }
}

impl From<&str> for Value {
    fn from(s: &str) -> Self {
        Value::symbol(s)
    }
}

/// True when `s` can be written without quotes as a symbol constant.
pub fn is_bare_symbol(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_ascii_lowercase() => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_') && !crate::parser::is_reserved_word(s)
}

impl fmt::Display for Value {
    /// Program-text rendering: floats use the shortest round-trip form and
    /// always carry a `.` or an exponent, so they re-parse as floats.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Int(i) => write!(f, "{i}"),
            Value::Float(x) => write!(f, "{x:?}"),
            Value::Symbol(s) if is_bare_symbol(s.as_str()) => f.write_str(s.as_str()),
            Value::Symbol(s) => {
                f.write_str("\"")?;
                for c in s.as_str().chars() {
                    match c {
                        '"' => f.write_str("\\\"")?,
                        '\\' => f.write_str("\\\\")?,
                        '\n' => f.write_str("\\n")?,
                        '\t' => f.write_str("\\t")?,
                        c => write!(f, "{c}")?,
                    }
                }
                f.write_str("\"")
            }
            Value::Pair(p) => write!(f, "({}, {})", p.0, p.1),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ArithOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl ArithOp {
    pub fn symbol(self) -> &'static str {
        match self {
            ArithOp::Add => "+",
            ArithOp::Sub => "-",
            ArithOp::Mul => "*",
            ArithOp::Div => "/",
        }
    }

    pub(crate) fn precedence(self) -> u8 {
        match self {
            ArithOp::Add | ArithOp::Sub => 1,
            ArithOp::Mul | ArithOp::Div => 2,
        }
    }
}

/// Applies an arithmetic operator.
///
/// Int op Int stays Int (checked for overflow) except for inexact division,
/// which promotes to Float. Any Float operand promotes the result to Float.
pub fn arith(op: ArithOp, a: &Value, b: &Value) -> Result<Value, ValueError> {
    match (a, b) {
        (Value::Int(x), Value::Int(y)) => {
            let (x, y) = (*x, *y);
            let r = match op {
                ArithOp::Add => x.checked_add(y).ok_or(ValueError::Overflow("+"))?,
                ArithOp::Sub => x.checked_sub(y).ok_or(ValueError::Overflow("-"))?,
                ArithOp::Mul => x.checked_mul(y).ok_or(ValueError::Overflow("*"))?,
                ArithOp::Div => {
                    if y == 0 {
                        return Err(ValueError::DivisionByZero);
                    }
                    match x.checked_rem(y) {
                        Some(0) => x.checked_div(y).ok_or(ValueError::Overflow("/"))?,
                        Some(_) => return Ok(Value::Float(x as f64 / y as f64)),
                        None => return Err(ValueError::Overflow("/")),
                    }
                }
            };
            Ok(Value::Int(r))
        }
        _ => {
            let (Some(x), Some(y)) = (a.as_f64(), b.as_f64()) else {
                return Err(ValueError::TypeMismatch {
                    op: op.symbol(),
                    left: a.type_name(),
                    right: b.type_name(),
                });
            };
            Ok(Value::Float(match op {
                ArithOp::Add => x + y,
                ArithOp::Sub => x - y,
                ArithOp::Mul => x * y,
                ArithOp::Div => {
                    if y == 0.0 {
                        return Err(ValueError::DivisionByZero);
                    }
                    x / y
                }
            }))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum CmpOp {
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
    Ne,
}

impl CmpOp {
    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
            CmpOp::Eq => "=",
            CmpOp::Ne => "!=",
        }
    }
}

/// Semantic ordering used by comparison goals.
pub fn semantic_cmp(a: &Value, b: &Value) -> Result<Ordering, ValueError> {
    match (a, b) {
        (Value::Int(x), Value::Int(y)) => Ok(x.cmp(y)),
        (Value::Symbol(x), Value::Symbol(y)) => Ok(x.cmp(y)),
        (Value::Pair(x), Value::Pair(y)) => {
            Ok(semantic_cmp(&x.0, &y.0)?.then(semantic_cmp(&x.1, &y.1)?))
        }
        _ if a.is_numeric() && b.is_numeric() => {
            // both numeric, at least one float
            let (x, y) = (a.as_f64().unwrap_or(0.0), b.as_f64().unwrap_or(0.0));
            Ok(x.total_cmp(&y))
        }
        _ => Err(ValueError::TypeMismatch {
            op: "compare",
            left: a.type_name(),
            right: b.type_name(),
        }),
    }
}

pub fn compare(op: CmpOp, a: &Value, b: &Value) -> Result<bool, ValueError> {
    let ord = semantic_cmp(a, b)?;
    Ok(match op {
        CmpOp::Lt => ord == Ordering::Less,
        CmpOp::Le => ord != Ordering::Greater,
        CmpOp::Gt => ord == Ordering::Greater,
        CmpOp::Ge => ord != Ordering::Less,
        CmpOp::Eq => ord == Ordering::Equal,
        CmpOp::Ne => ord != Ordering::Equal,
    })
}

/// Packs a distance and an identifier into one lexicographically ordered
/// value: the distance dominates, the identifier breaks ties.
pub fn encd(distance: &Value, id: &Value) -> Value {
    Value::pair(distance.clone(), id.clone())
}

pub fn decd(packed: &Value) -> Result<(Value, Value), ValueError> {
    match packed {
        Value::Pair(p) => Ok((p.0.clone(), p.1.clone())),
        other => Err(ValueError::TypeMismatch {
            op: "decd",
            left: other.type_name(),
            right: "pair",
        }),
    }
}

pub(crate) fn abs_f64(x: f64) -> f64 {
    if x < 0.0 {
        -x
    } else {
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use alloc::vec::Vec;

    #[test]
    fn int_division_is_exact_or_promotes() {
        assert_eq!(arith(ArithOp::Div, &6.into(), &3.into()), Ok(Value::Int(2)));
        assert_eq!(
            arith(ArithOp::Div, &7.into(), &2.into()),
            Ok(Value::Float(3.5))
        );
        assert_eq!(
            arith(ArithOp::Div, &7.into(), &0.into()),
            Err(ValueError::DivisionByZero)
        );
        assert_eq!(
            arith(ArithOp::Div, &Value::Float(1.0), &Value::Float(0.0)),
            Err(ValueError::DivisionByZero)
        );
    }

    #[test]
    fn overflow_is_an_error() {
        assert_eq!(
            arith(ArithOp::Add, &i64::MAX.into(), &1.into()),
            Err(ValueError::Overflow("+"))
        );
        assert_eq!(
            arith(ArithOp::Div, &i64::MIN.into(), &(-1).into()),
            Err(ValueError::Overflow("/"))
        );
    }

    #[test]
    fn mixed_arithmetic_promotes() {
        assert_eq!(
            arith(ArithOp::Mul, &100000.into(), &Value::Float(0.1)),
            Ok(Value::Float(10000.0))
        );
        assert!(matches!(
            arith(ArithOp::Add, &Value::symbol("a"), &1.into()),
            Err(ValueError::TypeMismatch { .. })
        ));
    }

    #[test]
    fn comparisons() {
        assert_eq!(compare(CmpOp::Gt, &3.into(), &3.into()), Ok(false));
        let p = Value::pair(Value::Float(1.2), 7.into());
        let q = Value::pair(Value::Float(3.5), 2.into());
        assert_eq!(compare(CmpOp::Lt, &p, &q), Ok(true));
        assert_eq!(compare(CmpOp::Ne, &"a".into(), &"b".into()), Ok(true));
        assert_eq!(compare(CmpOp::Eq, &1.into(), &Value::Float(1.0)), Ok(true));
        assert!(compare(CmpOp::Lt, &"a".into(), &1.into()).is_err());
    }

    #[test]
    fn encd_round_trip_and_order() {
        let packed = encd(&Value::Float(3.5), &2.into());
        assert_eq!(decd(&packed), Ok((Value::Float(3.5), Value::Int(2))));
        assert!(decd(&Value::Int(3)).is_err());
        let mut vs = [
            encd(&Value::Float(1.0), &5.into()),
            encd(&Value::Float(1.0), &3.into()),
            encd(&Value::Float(2.0), &1.into()),
            encd(&Value::Float(1.5), &9.into()),
        ];
        vs.sort();
        let ids: Vec<_> = vs.iter().map(|v| decd(v).unwrap().1).collect();
        assert_eq!(
            ids,
            vec![Value::Int(3), Value::Int(5), Value::Int(9), Value::Int(1)]
        );
    }

    #[test]
    fn display_round_trips_floats() {
        assert_eq!(alloc::format!("{}", Value::Float(100000.0)), "100000.0");
        assert_eq!(alloc::format!("{}", Value::Float(1e-7)), "1e-7");
        assert_eq!(alloc::format!("{}", Value::symbol("a b")), "\"a b\"");
        assert_eq!(alloc::format!("{}", Value::symbol("abc")), "abc");
        assert_eq!(alloc::format!("{}", Value::symbol("not")), "\"not\"");
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn value() -> impl Strategy<Value = Value> {
            let leaf = prop_oneof![
                any::<i64>().prop_map(Value::Int),
                any::<f64>().prop_map(Value::Float),
                "[a-z]{0,4}".prop_map(|s| Value::symbol(&s)),
            ];
            leaf.prop_recursive(2, 8, 2, |inner| {
                (inner.clone(), inner).prop_map(|(a, b)| Value::pair(a, b))
            })
        }

        proptest! {
            #[test]
            fn storage_sort_is_idempotent(mut vs in proptest::collection::vec(value(), 0..20)) {
                vs.sort();
                let once = vs.clone();
                vs.sort();
                prop_assert_eq!(once, vs);
            }

            #[test]
            fn semantic_order_agrees_with_storage_within_variant(a in any::<i64>(), b in any::<i64>()) {
                let (x, y) = (Value::Int(a), Value::Int(b));
                prop_assert_eq!(semantic_cmp(&x, &y).unwrap(), x.cmp(&y));
            }
        }
    }
}
