//! Symbolic terms mirroring [`crate::value`].
//!
//! A term is an atom, the XOR identity `Zero`, a hash, an XOR multiset or a
//! concatenation list. [`Term::normalize`] computes the canonical form under
//! the XOR axioms (associativity, commutativity, unit, nilpotence): XOR
//! children are flattened, sorted and pair-cancelled, and nested
//! concatenations are flattened. Two terms are equal modulo XOR iff their
//! canonical forms are syntactically equal.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::value::{concat, Value, ValueSpace};

#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Term {
    Zero,
    Atom(String),
    Hash(Box<Term>),
    Xor(Vec<Term>),
    Concat(Vec<Term>),
}

impl Term {
    pub fn atom(label: &str) -> Term {
        Term::Atom(label.to_string())
    }

    /// Canonical hash node.
    pub fn hash(t: Term) -> Term {
        Term::Hash(Box::new(t.normalize()))
    }

    /// Canonical XOR of two terms.
    pub fn xor(a: Term, b: Term) -> Term {
        Term::Xor(vec![a, b]).normalize()
    }

    /// Canonical XOR of many terms.
    pub fn xor_all<I: IntoIterator<Item = Term>>(parts: I) -> Term {
        Term::Xor(parts.into_iter().collect()).normalize()
    }

    /// Canonical concatenation.
    pub fn concat<I: IntoIterator<Item = Term>>(parts: I) -> Term {
        Term::Concat(parts.into_iter().collect()).normalize()
    }

    /// `h(a || b || ...)`, the shape almost every token takes.
    pub fn h<I: IntoIterator<Item = Term>>(parts: I) -> Term {
        Term::hash(Term::concat(parts))
    }

    /// True for terms that denote a single `W`-byte value.
    pub fn is_value_typed(&self) -> bool {
        !matches!(self, Term::Concat(parts) if parts.len() != 1)
    }

    pub fn normalize(&self) -> Term {
        match self {
            Term::Zero | Term::Atom(_) => self.clone(),
            Term::Hash(inner) => Term::Hash(Box::new(inner.normalize())),
            Term::Concat(parts) => {
                let mut flat = Vec::with_capacity(parts.len());
                for p in parts {
                    match p.normalize() {
                        Term::Concat(inner) => flat.extend(inner),
                        other => flat.push(other),
                    }
                }
                if flat.len() == 1 {
                    flat.pop().unwrap()
                } else {
                    Term::Concat(flat)
                }
            }
            Term::Xor(parts) => {
                let mut flat = Vec::with_capacity(parts.len());
                for p in parts {
                    match p.normalize() {
                        Term::Xor(inner) => flat.extend(inner),
                        Term::Zero => {}
                        other => flat.push(other),
                    }
                }
                flat.sort();
                let mut kept: Vec<Term> = Vec::with_capacity(flat.len());
                for t in flat {
                    if kept.last() == Some(&t) {
                        kept.pop();
                    } else {
                        kept.push(t);
                    }
                }
                match kept.len() {
                    0 => Term::Zero,
                    1 => kept.pop().unwrap(),
                    _ => Term::Xor(kept),
                }
            }
        }
    }

    pub fn is_canonical(&self) -> bool {
        *self == self.normalize()
    }

    /// Non-XOR summands of a canonical term (`Zero` has none).
    pub fn factors(&self) -> Vec<&Term> {
        match self {
            Term::Zero => Vec::new(),
            Term::Xor(parts) => parts.iter().collect(),
            other => vec![other],
        }
    }

    /// All subterms, including `self`.
    pub fn subterms(&self) -> Vec<&Term> {
        let mut out = Vec::new();
        let mut stack = vec![self];
        while let Some(t) = stack.pop() {
            out.push(t);
            match t {
                Term::Hash(inner) => stack.push(inner),
                Term::Xor(parts) | Term::Concat(parts) => stack.extend(parts.iter()),
                Term::Zero | Term::Atom(_) => {}
            }
        }
        out
    }

    /// Evaluates the term in `space`, looking atoms up in `assignment`.
    pub fn evaluate(
        &self,
        space: &ValueSpace,
        assignment: &HashMap<String, Value>,
    ) -> Result<Vec<u8>, EvalError> {
        match self {
            Term::Zero => Ok(space.zero().as_bytes().to_vec()),
            Term::Atom(label) => assignment
                .get(label)
                .map(|v| v.as_bytes().to_vec())
                .ok_or_else(|| EvalError::Unassigned(label.clone())),
            Term::Hash(inner) => {
                let bytes = inner.evaluate(space, assignment)?;
                Ok(space.hash_bytes(&bytes).as_bytes().to_vec())
            }
            Term::Concat(parts) => {
                let mut values = Vec::with_capacity(parts.len());
                for p in parts {
                    values.push(Value::from_bytes(p.evaluate_value(space, assignment)?));
                }
                concat(values.iter())
                    .map(|b| b.as_bytes().to_vec())
                    .map_err(|_| EvalError::IllTyped("empty concatenation".into()))
            }
            Term::Xor(parts) => {
                let mut acc = space.zero();
                for p in parts {
                    acc = acc.xor(&Value::from_bytes(p.evaluate_value(space, assignment)?));
                }
                Ok(acc.as_bytes().to_vec())
            }
        }
    }

    fn evaluate_value(
        &self,
        space: &ValueSpace,
        assignment: &HashMap<String, Value>,
    ) -> Result<Vec<u8>, EvalError> {
        let bytes = self.evaluate(space, assignment)?;
        if bytes.len() != space.width {
            return Err(EvalError::IllTyped(format!(
                "{self} is {} bytes where a {}-byte value is required",
                bytes.len(),
                space.width
            )));
        }
        Ok(bytes)
    }

    /// Evaluates a value-typed term to a [`Value`].
    pub fn evaluate_to_value(
        &self,
        space: &ValueSpace,
        assignment: &HashMap<String, Value>,
    ) -> Result<Value, EvalError> {
        self.evaluate_value(space, assignment).map(Value::from_bytes)
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EvalError {
    #[error("atom `{0}` has no assigned value")]
    Unassigned(String),
    #[error("ill-typed term: {0}")]
    IllTyped(String),
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn list(f: &mut fmt::Formatter<'_>, head: &str, parts: &[Term]) -> fmt::Result {
            write!(f, "({head}")?;
            for p in parts {
                write!(f, " {p}")?;
            }
            write!(f, ")")
        }
        match self {
            Term::Zero => write!(f, "zero"),
            Term::Atom(label) => write!(f, "{label}"),
            Term::Hash(inner) => write!(f, "(hash {inner})"),
            Term::Xor(parts) => list(f, "xor", parts),
            Term::Concat(parts) => list(f, "concat", parts),
        }
    }
}

impl fmt::Debug for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ParseError {
    #[error("unexpected end of input")]
    UnexpectedEnd,
    #[error("unexpected `{0}`")]
    Unexpected(String),
    #[error("unknown operator `{0}`")]
    UnknownOperator(String),
    #[error("`{0}` expects {1}")]
    Arity(String, &'static str),
    #[error("trailing input after term")]
    Trailing,
}

fn tokenize(s: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut current = String::new();
    for c in s.chars() {
        match c {
            '(' | ')' => {
                if !current.is_empty() {
                    tokens.push(std::mem::take(&mut current));
                }
                tokens.push(c.to_string());
            }
            c if c.is_whitespace() => {
                if !current.is_empty() {
                    tokens.push(std::mem::take(&mut current));
                }
            }
            c => current.push(c),
        }
    }
    if !current.is_empty() {
        tokens.push(current);
    }
    tokens
}

fn parse_tokens(tokens: &[String], pos: &mut usize) -> Result<Term, ParseError> {
    let tok = tokens.get(*pos).ok_or(ParseError::UnexpectedEnd)?;
    *pos += 1;
    match tok.as_str() {
        ")" => Err(ParseError::Unexpected(")".into())),
        "(" => {
            let op = tokens.get(*pos).ok_or(ParseError::UnexpectedEnd)?.clone();
            *pos += 1;
            let mut args = Vec::new();
            loop {
                match tokens.get(*pos).map(String::as_str) {
                    None => return Err(ParseError::UnexpectedEnd),
                    Some(")") => {
                        *pos += 1;
                        break;
                    }
                    Some(_) => args.push(parse_tokens(tokens, pos)?),
                }
            }
            match op.as_str() {
                "hash" => {
                    if args.len() != 1 {
                        return Err(ParseError::Arity(op, "exactly one argument"));
                    }
                    Ok(Term::Hash(Box::new(args.pop().unwrap())))
                }
                "xor" => Ok(Term::Xor(args)),
                "concat" => {
                    if args.is_empty() {
                        return Err(ParseError::Arity(op, "at least one argument"));
                    }
                    Ok(Term::Concat(args))
                }
                other => Err(ParseError::UnknownOperator(other.to_string())),
            }
        }
        "zero" => Ok(Term::Zero),
        atom => Ok(Term::Atom(atom.to_string())),
    }
}

impl FromStr for Term {
    type Err = ParseError;

    /// Parses the s-expression form, e.g. `(xor (hash (concat ID Krc)) N1)`.
    /// The result is not normalized.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let tokens = tokenize(s);
        let mut pos = 0;
        let term = parse_tokens(&tokens, &mut pos)?;
        if pos != tokens.len() {
            return Err(ParseError::Trailing);
        }
        Ok(term)
    }
}

impl serde::Serialize for Term {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}
