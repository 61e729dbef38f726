//! Program text parser.
//!
//! Concrete syntax (see `docs/grammar.md` for the full EBNF):
//!
//! ```text
//! % Markov kernel
//! next(0, Cit, sum<In>) :- mov(Cit, Cit, _), In = 100000.
//! next(J1, To, sum<In>) :- next(J, Cit, Pop), mov(Cit, To, Perc),
//!                          In = Pop * Perc, J1 = J + 1, J1 <= 1000.
//! ```

use alloc::boxed::Box;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use thiserror::Error;

use crate::model::{
    AggKind, AggPhase, AggregateHead, Atom, BuiltinKind, Head, Literal, Predicate, Program,
    ProgramError, Rule, Term, Var,
};
use crate::value::{ArithOp, CmpOp, Value};

/// 1-based position of a token in the source text.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SourceSpan {
    pub line: usize,
    pub column: usize,
    pub length: usize,
}

impl fmt::Display for SourceSpan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.column)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseError {
    #[error("syntax error at {span}: {message}")]
    Syntax { span: SourceSpan, message: String },
    #[error(transparent)]
    Program(#[from] ProgramError),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("malformed value {0:?}")]
pub struct MalformedValue(pub String);

pub(crate) fn is_reserved_word(s: &str) -> bool {
    s == "not"
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Ident(String),
    Var(String),
    Int(String),
    Float(f64),
    Str(String),
    LParen,
    RParen,
    Comma,
    Dot,
    If,
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
    Ne,
    Plus,
    Minus,
    Star,
    Slash,
    Bar,
    LAngle,
    RAngle,
    Eof,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Ident(s) | Tok::Var(s) | Tok::Int(s) => alloc::format!("`{s}`"),
            Tok::Float(x) => alloc::format!("`{x}`"),
            Tok::Str(s) => alloc::format!("{s:?}"),
            Tok::Eof => "end of input".into(),
            other => alloc::format!("`{}`", other.punct()),
        }
    }

    fn punct(&self) -> &'static str {
        match self {
            Tok::LParen => "(",
            Tok::RParen => ")",
            Tok::Comma => ",",
            Tok::Dot => ".",
            Tok::If => ":-",
            Tok::Lt => "<",
            Tok::Le => "<=",
            Tok::Gt => ">",
            Tok::Ge => ">=",
            Tok::Eq => "=",
            Tok::Ne => "!=",
            Tok::Plus => "+",
            Tok::Minus => "-",
            Tok::Star => "*",
            Tok::Slash => "/",
            Tok::Bar => "|",
            Tok::LAngle => "⟨",
            Tok::RAngle => "⟩",
            _ => "?",
        }
    }
}

struct Lexer<'a> {
    chars: core::iter::Peekable<core::str::CharIndices<'a>>,
    src: &'a str,
    line: usize,
    col: usize,
}

impl<'a> Lexer<'a> {
    fn new(src: &'a str) -> Self {
        Lexer {
            chars: src.char_indices().peekable(),
            src,
            line: 1,
            col: 1,
        }
    }

    fn bump(&mut self) -> Option<char> {
        let (_, c) = self.chars.next()?;
        if c == '\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }

    fn peek(&mut self) -> Option<char> {
        self.chars.peek().map(|&(_, c)| c)
    }

    fn peek2(&self) -> Option<char> {
        let mut it = self.chars.clone();
        it.next();
        it.next().map(|(_, c)| c)
    }

    fn offset(&mut self) -> usize {
        self.chars.peek().map_or(self.src.len(), |&(i, _)| i)
    }

    fn tokens(mut self) -> Result<Vec<(Tok, SourceSpan)>, ParseError> {
        let mut out = Vec::new();
        loop {
            // whitespace and % comments
            while let Some(c) = self.peek() {
                if c.is_whitespace() {
                    self.bump();
                } else if c == '%' {
                    while let Some(c) = self.peek() {
                        if c == '\n' {
                            break;
                        }
                        self.bump();
                    }
                } else {
                    break;
                }
            }
            let (line, column) = (self.line, self.col);
            let start = self.offset();
            let Some(c) = self.peek() else {
                out.push((
                    Tok::Eof,
                    SourceSpan {
                        line,
                        column,
                        length: 0,
                    },
                ));
                return Ok(out);
            };
            let err = |message: String| ParseError::Syntax {
                span: SourceSpan {
                    line,
                    column,
                    length: 1,
                },
                message,
            };
            let tok = if c.is_ascii_alphabetic() || c == '_' {
                while matches!(self.peek(), Some(c) if c.is_ascii_alphanumeric() || c == '_') {
                    self.bump();
                }
                let word = &self.src[start..self.offset()];
                if c.is_ascii_lowercase() {
                    Tok::Ident(word.into())
                } else {
                    Tok::Var(word.into())
                }
            } else if c.is_ascii_digit() {
                self.number()?
            } else if c == '"' {
                self.bump();
                let mut s = String::new();
                loop {
                    match self.bump() {
                        None => return Err(err("unterminated string".into())),
                        Some('"') => break,
                        Some('\\') => match self.bump() {
                            Some('n') => s.push('\n'),
                            Some('t') => s.push('\t'),
                            Some(c @ ('"' | '\\')) => s.push(c),
                            _ => return Err(err("invalid escape in string".into())),
                        },
                        Some(c) => s.push(c),
                    }
                }
                Tok::Str(s)
            } else {
                self.bump();
                match c {
                    '(' => Tok::LParen,
                    ')' => Tok::RParen,
                    ',' => Tok::Comma,
                    '.' => Tok::Dot,
                    '+' => Tok::Plus,
                    '-' => Tok::Minus,
                    '*' | '×' => Tok::Star,
                    '/' => Tok::Slash,
                    '|' => Tok::Bar,
                    '=' => Tok::Eq,
                    '≤' => Tok::Le,
                    '≥' => Tok::Ge,
                    '≠' => Tok::Ne,
                    '⟨' => Tok::LAngle,
                    '⟩' => Tok::RAngle,
                    ':' if self.peek() == Some('-') => {
                        self.bump();
                        Tok::If
                    }
                    '!' if self.peek() == Some('=') => {
                        self.bump();
                        Tok::Ne
                    }
                    '<' => match self.peek() {
                        Some('=') => {
                            self.bump();
                            Tok::Le
                        }
                        Some('>') => {
                            self.bump();
                            Tok::Ne
                        }
                        _ => Tok::Lt,
                    },
                    '>' if self.peek() == Some('=') => {
                        self.bump();
                        Tok::Ge
                    }
                    '>' => Tok::Gt,
                    other => return Err(err(alloc::format!("unexpected character {other:?}"))),
                }
            };
            let length = self.src[start..self.offset()].chars().count();
            out.push((
                tok,
                SourceSpan {
                    line,
                    column,
                    length,
                },
            ));
        }
    }

    fn number(&mut self) -> Result<Tok, ParseError> {
        let (line, column) = (self.line, self.col);
        let start = self.offset();
        let digits = |lx: &mut Self| {
            while matches!(lx.peek(), Some(c) if c.is_ascii_digit()) {
                lx.bump();
            }
        };
        digits(self);
        let mut is_float = false;
        if self.peek() == Some('.') && matches!(self.peek2(), Some(c) if c.is_ascii_digit()) {
            is_float = true;
            self.bump();
            digits(self);
        }
        if matches!(self.peek(), Some('e' | 'E')) {
            let next = self.peek2();
            let signed = matches!(next, Some('+' | '-'));
            let mut it = self.chars.clone();
            it.next();
            if signed {
                it.next();
            }
            if matches!(it.next(), Some((_, c)) if c.is_ascii_digit()) {
                is_float = true;
                self.bump();
                if signed {
                    self.bump();
                }
                digits(self);
            }
        }
        let text = &self.src[start..self.offset()];
        if is_float {
            text.parse::<f64>()
                .map(Tok::Float)
                .map_err(|_| ParseError::Syntax {
                    span: SourceSpan {
                        line,
                        column,
                        length: text.len(),
                    },
                    message: alloc::format!("invalid float literal {text}"),
                })
        } else {
            Ok(Tok::Int(text.into()))
        }
    }
}

struct Parser {
    toks: Vec<(Tok, SourceSpan)>,
    pos: usize,
    anon: usize,
}

type PResult<T> = Result<T, ParseError>;

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].0
    }

    fn peek_at(&self, k: usize) -> &Tok {
        let i = (self.pos + k).min(self.toks.len() - 1);
        &self.toks[i].0
    }

    fn span(&self) -> SourceSpan {
        self.toks[self.pos].1
    }

    fn next(&mut self) -> Tok {
        let t = self.toks[self.pos].0.clone();
        if self.pos < self.toks.len() - 1 {
            self.pos += 1;
        }
        t
    }

    fn error<T>(&self, message: impl Into<String>) -> PResult<T> {
        Err(ParseError::Syntax {
            span: self.span(),
            message: message.into(),
        })
    }

    fn expect(&mut self, tok: Tok) -> PResult<()> {
        if *self.peek() == tok {
            self.next();
            Ok(())
        } else {
            self.error(alloc::format!(
                "expected `{}`, found {}",
                tok.punct(),
                self.peek().describe()
            ))
        }
    }

    fn program(&mut self) -> PResult<Vec<Rule>> {
        let mut rules = Vec::new();
        while *self.peek() != Tok::Eof {
            rules.push(self.clause()?);
        }
        Ok(rules)
    }

    fn clause(&mut self) -> PResult<Rule> {
        self.anon = 0;
        let head = self.head()?;
        let mut body = Vec::new();
        if *self.peek() == Tok::If {
            self.next();
            loop {
                body.push(self.literal()?);
                if *self.peek() == Tok::Comma {
                    self.next();
                } else {
                    break;
                }
            }
        }
        self.expect(Tok::Dot)?;
        Ok(Rule { head, body })
    }

    fn predicate_name(&mut self) -> PResult<String> {
        match self.next() {
            Tok::Ident(s) => Ok(s),
            other => {
                self.pos -= 1;
                self.error(alloc::format!(
                    "expected a predicate name, found {}",
                    other.describe()
                ))
            }
        }
    }

    fn head(&mut self) -> PResult<Head> {
        let name = self.predicate_name()?;
        let predicate = Predicate::new(&name);
        if *self.peek() != Tok::LParen {
            return Ok(Head::Atom(Atom::new(predicate, Vec::new())));
        }
        self.next();
        let mut group_args = Vec::new();
        let mut aggregate: Option<(usize, AggKind, Var, AggPhase, SourceSpan)> = None;
        if *self.peek() != Tok::RParen {
            loop {
                let span = self.span();
                let agg = match (self.peek(), self.peek_at(1)) {
                    (Tok::Ident(s), Tok::Lt | Tok::LAngle) => AggKind::from_name(s),
                    _ => None,
                };
                if let Some((kind, continuous)) = agg {
                    self.next();
                    self.next();
                    let var = self.variable()?;
                    let phase = if continuous {
                        let mut shared_by = Vec::new();
                        if *self.peek() == Tok::Bar {
                            self.next();
                            loop {
                                shared_by.push(self.variable()?);
                                if *self.peek() == Tok::Comma {
                                    self.next();
                                } else {
                                    break;
                                }
                            }
                        }
                        AggPhase::Continuous { shared_by }
                    } else {
                        AggPhase::Final
                    };
                    match self.next() {
                        Tok::Gt | Tok::RAngle => {}
                        other => {
                            self.pos -= 1;
                            return self.error(alloc::format!(
                                "expected `>` closing the aggregate, found {}",
                                other.describe()
                            ));
                        }
                    }
                    if aggregate.is_some() {
                        return Err(ParseError::Syntax {
                            span,
                            message: "at most one aggregate per head".into(),
                        });
                    }
                    aggregate = Some((group_args.len(), kind, var, phase, span));
                } else {
                    group_args.push(self.term()?);
                }
                if *self.peek() == Tok::Comma {
                    self.next();
                } else {
                    break;
                }
            }
        }
        self.expect(Tok::RParen)?;
        Ok(match aggregate {
            None => Head::Atom(Atom::new(predicate, group_args)),
            Some((position, kind, var, phase, _)) => Head::Aggregate(AggregateHead {
                predicate,
                group_args,
                position,
                kind,
                var,
                phase,
            }),
        })
    }

    fn variable(&mut self) -> PResult<Var> {
        match self.next() {
            Tok::Var(s) => Ok(self.make_var(&s)),
            other => {
                self.pos -= 1;
                self.error(alloc::format!(
                    "expected a variable, found {}",
                    other.describe()
                ))
            }
        }
    }

    fn make_var(&mut self, s: &str) -> Var {
        if s == "_" {
            self.anon += 1;
            Var::anonymous(self.anon)
        } else {
            Var::new(s)
        }
    }

    fn literal(&mut self) -> PResult<Literal> {
        if let Tok::Ident(s) = self.peek() {
            if s == "not" {
                self.next();
                let atom = self.atom()?;
                if BuiltinKind::from_name(atom.predicate.name()).is_some() {
                    return self.error("builtins cannot be negated");
                }
                return Ok(Literal::Negative(atom));
            }
            let starts_atom = matches!(self.peek_at(1), Tok::LParen | Tok::Comma | Tok::Dot);
            if starts_atom {
                let span = self.span();
                let atom = self.atom()?;
                if let Some(kind) = BuiltinKind::from_name(atom.predicate.name()) {
                    let Ok(args) = <[Term; 3]>::try_from(atom.args) else {
                        return Err(ParseError::Syntax {
                            span,
                            message: alloc::format!("{} takes exactly 3 arguments", kind.name()),
                        });
                    };
                    return Ok(Literal::Builtin(kind, args));
                }
                return Ok(Literal::Positive(atom));
            }
        }
        let left = self.term()?;
        let op = match self.next() {
            Tok::Lt => CmpOp::Lt,
            Tok::Le => CmpOp::Le,
            Tok::Gt => CmpOp::Gt,
            Tok::Ge => CmpOp::Ge,
            Tok::Eq => CmpOp::Eq,
            Tok::Ne => CmpOp::Ne,
            other => {
                self.pos -= 1;
                return self.error(alloc::format!(
                    "expected a comparison operator, found {}",
                    other.describe()
                ));
            }
        };
        let right = self.term()?;
        Ok(Literal::Compare(op, left, right))
    }

    fn atom(&mut self) -> PResult<Atom> {
        let name = self.predicate_name()?;
        let mut args = Vec::new();
        if *self.peek() == Tok::LParen {
            self.next();
            if *self.peek() != Tok::RParen {
                loop {
                    args.push(self.term()?);
                    if *self.peek() == Tok::Comma {
                        self.next();
                    } else {
                        break;
                    }
                }
            }
            self.expect(Tok::RParen)?;
        }
        Ok(Atom::new(Predicate::new(&name), args))
    }

    fn term(&mut self) -> PResult<Term> {
        let mut left = self.product()?;
        loop {
            let op = match self.peek() {
                Tok::Plus => ArithOp::Add,
                Tok::Minus => ArithOp::Sub,
                _ => return Ok(left),
            };
            self.next();
            let right = self.product()?;
            left = Term::Arith(op, Box::new(left), Box::new(right));
        }
    }

    fn product(&mut self) -> PResult<Term> {
        let mut left = self.unary()?;
        loop {
            let op = match self.peek() {
                Tok::Star => ArithOp::Mul,
                Tok::Slash => ArithOp::Div,
                _ => return Ok(left),
            };
            self.next();
            let right = self.unary()?;
            left = Term::Arith(op, Box::new(left), Box::new(right));
        }
    }

    fn unary(&mut self) -> PResult<Term> {
        if *self.peek() != Tok::Minus {
            return self.primary();
        }
        self.next();
        match self.peek().clone() {
            Tok::Int(digits) => {
                let span = self.span();
                self.next();
                let neg = alloc::format!("-{digits}");
                neg.parse::<i64>()
                    .map(Term::constant)
                    .map_err(|_| ParseError::Syntax {
                        span,
                        message: alloc::format!("integer literal {neg} out of range"),
                    })
            }
            Tok::Float(x) => {
                self.next();
                Ok(Term::Constant(Value::Float(-x)))
            }
            _ => {
                let inner = self.unary()?;
                Ok(Term::arith(ArithOp::Sub, Term::constant(0), inner))
            }
        }
    }

    fn primary(&mut self) -> PResult<Term> {
        let span = self.span();
        match self.next() {
            Tok::Var(s) => Ok(Term::Variable(self.make_var(&s))),
            Tok::Int(digits) => {
                digits
                    .parse::<i64>()
                    .map(Term::constant)
                    .map_err(|_| ParseError::Syntax {
                        span,
                        message: alloc::format!("integer literal {digits} out of range"),
                    })
            }
            Tok::Float(x) => Ok(Term::Constant(Value::Float(x))),
            Tok::Str(s) => Ok(Term::Constant(Value::symbol(&s))),
            Tok::Ident(s) if is_reserved_word(&s) => Err(ParseError::Syntax {
                span,
                message: alloc::format!("`{s}` is a keyword; quote it to use it as a symbol"),
            }),
            Tok::Ident(s) => Ok(Term::Constant(Value::symbol(&s))),
            Tok::LParen => {
                let t = self.term()?;
                self.expect(Tok::RParen)?;
                Ok(t)
            }
            other => {
                self.pos -= 1;
                self.error(alloc::format!(
                    "expected a term, found {}",
                    other.describe()
                ))
            }
        }
    }
}

/// Parses and validates a program.
pub fn parse_program(text: &str) -> Result<Program, ParseError> {
    let toks = Lexer::new(text).tokens()?;
    let mut p = Parser {
        toks,
        pos: 0,
        anon: 0,
    };
    let rules = p.program()?;
    Ok(Program::new(rules)?)
}

/// Parses a single rule without program-level validation.
pub fn parse_rule(text: &str) -> Result<Rule, ParseError> {
    let toks = Lexer::new(text).tokens()?;
    let mut p = Parser {
        toks,
        pos: 0,
        anon: 0,
    };
    let rule = p.clause()?;
    if *p.peek() != Tok::Eof {
        return p.error("trailing input after rule");
    }
    Ok(rule)
}

/// Interprets one field of a fact file: integral literals become Int,
/// literals with `.` or an exponent become Float, anything else a Symbol.
/// A field that starts like a number but is not one is malformed.
pub fn parse_value_token(raw: &str) -> Result<Value, MalformedValue> {
    let s = raw.trim();
    if s.is_empty() {
        return Err(MalformedValue(raw.to_string()));
    }
    let body = s.strip_prefix(['-', '+']).unwrap_or(s);
    let numeric_start = body.starts_with(|c: char| c.is_ascii_digit())
        || (body.starts_with('.') && body[1..].starts_with(|c: char| c.is_ascii_digit()));
    if !numeric_start {
        if body.len() != s.len() {
            return Err(MalformedValue(raw.to_string()));
        }
        return Ok(Value::symbol(s));
    }
    if body.bytes().all(|b| b.is_ascii_digit()) {
        return s
            .parse::<i64>()
            .map(Value::Int)
            .map_err(|_| MalformedValue(raw.to_string()));
    }
    let float_chars = body
        .bytes()
        .all(|b| b.is_ascii_digit() || matches!(b, b'.' | b'e' | b'E' | b'+' | b'-'));
    if float_chars {
        if let Ok(x) = s.parse::<f64>() {
            return Ok(Value::Float(x));
        }
    }
    Err(MalformedValue(raw.to_string()))
}
