//! Boolean guard expressions over named variables.
//!
//! ```text
//! expr  := or
//! or    := and ('|' and)*
//! and   := unary ('&' unary)*
//! unary := '!' unary | '(' expr ')' | 'true' | 'false' | ident | '"' label '"'
//! ```

use std::collections::BTreeSet;
use std::fmt;
use thiserror::Error;

use crate::bits::Bits;

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Expr {
    True,
    False,
    Var(String),
    Not(Box<Expr>),
    And(Vec<Expr>),
    Or(Vec<Expr>),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("column {col}: {msg}")]
pub struct ExprError {
    pub col: usize,
    pub msg: String,
}

impl Expr {
    pub fn var(name: impl Into<String>) -> Self {
        Expr::Var(name.into())
    }

    pub fn not(e: Expr) -> Self {
        Expr::Not(Box::new(e))
    }

    /// Conjunction of literals given as `(variable, polarity)` pairs.
    pub fn conj<I, S>(lits: I) -> Self
    where
        I: IntoIterator<Item = (S, bool)>,
        S: Into<String>,
    {
        let parts: Vec<Expr> = lits
            .into_iter()
            .map(|(v, pos)| {
                let e = Expr::Var(v.into());
                if pos {
                    e
                } else {
                    Expr::not(e)
                }
            })
            .collect();
        match parts.len() {
            0 => Expr::True,
            1 => parts.into_iter().next().expect("one element"),
            _ => Expr::And(parts),
        }
    }

    pub fn vars(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_vars(&mut out);
        out
    }

    fn collect_vars(&self, out: &mut BTreeSet<String>) {
        match self {
            Expr::True | Expr::False => {}
            Expr::Var(v) => {
                out.insert(v.clone());
            }
            Expr::Not(e) => e.collect_vars(out),
            Expr::And(es) | Expr::Or(es) => es.iter().for_each(|e| e.collect_vars(out)),
        }
    }

    /// Literal set of a conjunction of literals, `None` for other shapes.
    pub fn literals(&self) -> Option<BTreeSet<(String, bool)>> {
        fn lit(e: &Expr) -> Option<(String, bool)> {
            match e {
                Expr::Var(v) => Some((v.clone(), true)),
                Expr::Not(inner) => match inner.as_ref() {
                    Expr::Var(v) => Some((v.clone(), false)),
                    _ => None,
                },
                _ => None,
            }
        }
        match self {
            Expr::True => Some(BTreeSet::new()),
            Expr::And(es) => es.iter().map(lit).collect(),
            e => lit(e).map(|l| BTreeSet::from([l])),
        }
    }

    pub fn eval(&self, value: &impl Fn(&str) -> bool) -> bool {
        match self {
            Expr::True => true,
            Expr::False => false,
            Expr::Var(v) => value(v),
            Expr::Not(e) => !e.eval(value),
            Expr::And(es) => es.iter().all(|e| e.eval(value)),
            Expr::Or(es) => es.iter().any(|e| e.eval(value)),
        }
    }

    /// Resolves variable names to indices; unknown names are returned as errors.
    pub fn compile(&self, index: &impl Fn(&str) -> Option<usize>) -> Result<Compiled, String> {
        Ok(match self {
            Expr::True => Compiled::True,
            Expr::False => Compiled::False,
            Expr::Var(v) => Compiled::Var(index(v).ok_or_else(|| v.clone())?),
            Expr::Not(e) => Compiled::Not(Box::new(e.compile(index)?)),
            Expr::And(es) => Compiled::And(
                es.iter()
                    .map(|e| e.compile(index))
                    .collect::<Result<_, _>>()?,
            ),
            Expr::Or(es) => Compiled::Or(
                es.iter()
                    .map(|e| e.compile(index))
                    .collect::<Result<_, _>>()?,
            ),
        })
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::True => f.write_str("true"),
            Expr::False => f.write_str("false"),
            Expr::Var(v) => f.write_str(v),
            Expr::Not(e) => match e.as_ref() {
                Expr::And(_) | Expr::Or(_) => write!(f, "!({e})"),
                _ => write!(f, "!{e}"),
            },
            Expr::And(es) | Expr::Or(es) => {
                let op = if matches!(self, Expr::And(_)) { " & " } else { " | " };
                for (i, e) in es.iter().enumerate() {
                    if i > 0 {
                        f.write_str(op)?;
                    }
                    match e {
                        Expr::And(_) | Expr::Or(_) => write!(f, "({e})")?,
                        _ => write!(f, "{e}")?,
                    }
                }
                Ok(())
            }
        }
    }
}

/// An [`Expr`] over variable indices, evaluated on a [`Bits`] valuation.
#[derive(Clone, Debug, PartialEq)]
pub enum Compiled {
    True,
    False,
    Var(usize),
    Not(Box<Compiled>),
    And(Vec<Compiled>),
    Or(Vec<Compiled>),
}

impl Compiled {
    #[inline]
    pub fn eval(&self, s: &Bits) -> bool {
        match self {
            Compiled::True => true,
            Compiled::False => false,
            Compiled::Var(i) => s.get(*i),
            Compiled::Not(e) => !e.eval(s),
            Compiled::And(es) => es.iter().all(|e| e.eval(s)),
            Compiled::Or(es) => es.iter().any(|e| e.eval(s)),
        }
    }
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl Parser<'_> {
    fn ws(&mut self) {
        while self.src.get(self.pos).is_some_and(|c| c.is_ascii_whitespace()) {
            self.pos += 1;
        }
    }

    fn err<T>(&self, msg: impl Into<String>) -> Result<T, ExprError> {
        Err(ExprError {
            col: self.pos + 1,
            msg: msg.into(),
        })
    }

    fn eat(&mut self, c: u8) -> bool {
        self.ws();
        if self.src.get(self.pos) == Some(&c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn or(&mut self) -> Result<Expr, ExprError> {
        let mut parts = vec![self.and()?];
        while self.eat(b'|') {
            parts.push(self.and()?);
        }
        Ok(if parts.len() == 1 {
            parts.pop().expect("one element")
        } else {
            Expr::Or(parts)
        })
    }

    fn and(&mut self) -> Result<Expr, ExprError> {
        let mut parts = vec![self.unary()?];
        while self.eat(b'&') {
            parts.push(self.unary()?);
        }
        Ok(if parts.len() == 1 {
            parts.pop().expect("one element")
        } else {
            Expr::And(parts)
        })
    }

    fn unary(&mut self) -> Result<Expr, ExprError> {
        self.ws();
        if self.eat(b'!') {
            return Ok(Expr::not(self.unary()?));
        }
        if self.eat(b'(') {
            let e = self.or()?;
            if !self.eat(b')') {
                return self.err("expected `)`");
            }
            return Ok(e);
        }
        if self.eat(b'"') {
            let start = self.pos;
            while self.src.get(self.pos).is_some_and(|&c| c != b'"') {
                self.pos += 1;
            }
            if self.pos >= self.src.len() {
                return Err(ExprError {
                    col: start,
                    msg: "unterminated quoted label".into(),
                });
            }
            let name = String::from_utf8_lossy(&self.src[start..self.pos]).into_owned();
            self.pos += 1;
            if name.is_empty() {
                return Err(ExprError {
                    col: start,
                    msg: "empty label".into(),
                });
            }
            return Ok(Expr::Var(name));
        }
        let start = self.pos;
        while self
            .src
            .get(self.pos)
            .is_some_and(|&c| c.is_ascii_alphanumeric() || c == b'_')
        {
            self.pos += 1;
        }
        if start == self.pos {
            return match self.src.get(self.pos) {
                Some(&c) => self.err(format!("unexpected `{}`", c as char)),
                None => self.err("unexpected end of input"),
            };
        }
        let word = String::from_utf8_lossy(&self.src[start..self.pos]).into_owned();
        Ok(match word.as_str() {
            "true" => Expr::True,
            "false" => Expr::False,
            _ => Expr::Var(word),
        })
    }
}

pub fn parse_expr(text: &str) -> Result<Expr, ExprError> {
    let mut p = Parser {
        src: text.as_bytes(),
        pos: 0,
    };
    let e = p.or()?;
    p.ws();
    if p.pos < p.src.len() {
        return p.err(format!("unexpected `{}`", p.src[p.pos] as char));
    }
    Ok(e)
}
