//! rPATL formulas and their parser.
//!
//! ```text
//! formula   := conj ('|' conj)*
//! conj      := unary ('&' unary)*
//! unary     := '!' unary | '(' formula ')' | 'true' | 'false' | '"' label '"' | coalition ptail
//! coalition := '<<' id (',' id)* '>>'
//! ptail     := ('P' bound | 'Pmax=?' | 'Pmin=?') '[' path ']'
//!            | 'R' ('{' name '}')? (bound | 'max=?' | 'min=?') '[' 'F' formula ']'
//! path      := 'X' formula | 'F' formula | formula 'U' formula | formula 'U<=' int formula
//! bound     := ('<' | '<=' | '>' | '>=') number
//! ```

use crate::game::Player;
use std::collections::BTreeSet;
use std::fmt;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("column {col}: {msg}")]
pub struct FormulaError {
    pub col: usize,
    pub msg: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Cmp {
    Lt,
    Le,
    Gt,
    Ge,
}

impl Cmp {
    pub fn holds(self, value: f64, bound: f64) -> bool {
        match self {
            Cmp::Lt => value < bound,
            Cmp::Le => value <= bound,
            Cmp::Gt => value > bound,
            Cmp::Ge => value >= bound,
        }
    }

    /// Lower bounds are guaranteed by maximizing, upper bounds by minimizing.
    pub fn opt(self) -> Opt {
        match self {
            Cmp::Gt | Cmp::Ge => Opt::Max,
            Cmp::Lt | Cmp::Le => Opt::Min,
        }
    }
}

impl fmt::Display for Cmp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Cmp::Lt => "<",
            Cmp::Le => "<=",
            Cmp::Gt => ">",
            Cmp::Ge => ">=",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Opt {
    Max,
    Min,
}

impl Opt {
    pub fn flip(self) -> Opt {
        match self {
            Opt::Max => Opt::Min,
            Opt::Min => Opt::Max,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Query {
    Value(Opt),
    Bound(Cmp, f64),
}

impl Query {
    pub fn opt(self) -> Opt {
        match self {
            Query::Value(o) => o,
            Query::Bound(c, _) => c.opt(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct Coalition(pub BTreeSet<Player>);

impl Coalition {
    pub fn of(players: &[Player]) -> Self {
        Coalition(players.iter().copied().collect())
    }

    pub fn contains(&self, p: Player) -> bool {
        self.0.contains(&p)
    }
}

impl fmt::Display for Coalition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<&str> = self
            .0
            .iter()
            .map(|p| match p {
                Player::Attacker => "att",
                Player::Defender => "def",
            })
            .collect();
        write!(f, "<<{}>>", names.join(","))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum StateFormula {
    True,
    Atom(String),
    Not(Box<StateFormula>),
    And(Box<StateFormula>, Box<StateFormula>),
    Or(Box<StateFormula>, Box<StateFormula>),
    Prob {
        coalition: Coalition,
        query: Query,
        path: PathFormula,
    },
    Reward {
        coalition: Coalition,
        reward: Option<String>,
        query: Query,
        target: Box<StateFormula>,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub enum PathFormula {
    Next(Box<StateFormula>),
    Until(Box<StateFormula>, Box<StateFormula>),
    BoundedUntil(Box<StateFormula>, Box<StateFormula>, u64),
}

pub type RpatlFormula = StateFormula;

impl StateFormula {
    pub fn atoms(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.visit(&mut |f| {
            if let StateFormula::Atom(a) = f {
                out.insert(a.clone());
            }
        });
        out
    }

    pub fn reward_names(&self) -> BTreeSet<Option<String>> {
        let mut out = BTreeSet::new();
        self.visit(&mut |f| {
            if let StateFormula::Reward { reward, .. } = f {
                out.insert(reward.clone());
            }
        });
        out
    }

    pub fn coalitions(&self) -> Vec<Coalition> {
        let mut out = Vec::new();
        self.visit(&mut |f| match f {
            StateFormula::Prob { coalition, .. } | StateFormula::Reward { coalition, .. } => {
                out.push(coalition.clone())
            }
            _ => {}
        });
        out
    }

    /// True if some path formula uses `X` or a step-bounded until.
    pub fn has_step_operators(&self) -> bool {
        let mut found = false;
        self.visit(&mut |f| {
            if let StateFormula::Prob { path, .. } = f {
                if matches!(path, PathFormula::Next(_) | PathFormula::BoundedUntil(..)) {
                    found = true;
                }
            }
        });
        found
    }

    fn visit(&self, f: &mut impl FnMut(&StateFormula)) {
        f(self);
        match self {
            StateFormula::True | StateFormula::Atom(_) => {}
            StateFormula::Not(a) => a.visit(f),
            StateFormula::And(a, b) | StateFormula::Or(a, b) => {
                a.visit(f);
                b.visit(f);
            }
            StateFormula::Prob { path, .. } => match path {
                PathFormula::Next(a) => a.visit(f),
                PathFormula::Until(a, b) | PathFormula::BoundedUntil(a, b, _) => {
                    a.visit(f);
                    b.visit(f);
                }
            },
            StateFormula::Reward { target, .. } => target.visit(f),
        }
    }

    pub fn is_numeric_query(&self) -> bool {
        matches!(
            self,
            StateFormula::Prob {
                query: Query::Value(_),
                ..
            } | StateFormula::Reward {
                query: Query::Value(_),
                ..
            }
        )
    }
}

fn opt_name(o: Opt) -> &'static str {
    match o {
        Opt::Max => "max",
        Opt::Min => "min",
    }
}

impl fmt::Display for StateFormula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sub = |f: &mut fmt::Formatter<'_>, x: &StateFormula| match x {
            StateFormula::And(..) | StateFormula::Or(..) => write!(f, "({x})"),
            _ => write!(f, "{x}"),
        };
        match self {
            StateFormula::True => f.write_str("true"),
            StateFormula::Atom(a) => write!(f, "\"{a}\""),
            StateFormula::Not(a) => {
                f.write_str("!")?;
                sub(f, a)
            }
            StateFormula::And(a, b) | StateFormula::Or(a, b) => {
                sub(f, a)?;
                f.write_str(if matches!(self, StateFormula::And(..)) { " & " } else { " | " })?;
                sub(f, b)
            }
            StateFormula::Prob {
                coalition,
                query,
                path,
            } => {
                write!(f, "{coalition} ")?;
                match query {
                    Query::Value(o) => write!(f, "P{}=? ", opt_name(*o))?,
                    Query::Bound(c, b) => write!(f, "P{c}{b} ")?,
                }
                f.write_str("[ ")?;
                match path {
                    PathFormula::Next(a) => {
                        f.write_str("X ")?;
                        sub(f, a)?
                    }
                    PathFormula::Until(a, b) if **a == StateFormula::True => {
                        f.write_str("F ")?;
                        sub(f, b)?
                    }
                    PathFormula::Until(a, b) => {
                        sub(f, a)?;
                        f.write_str(" U ")?;
                        sub(f, b)?
                    }
                    PathFormula::BoundedUntil(a, b, k) => {
                        sub(f, a)?;
                        write!(f, " U<={k} ")?;
                        sub(f, b)?
                    }
                }
                f.write_str(" ]")
            }
            StateFormula::Reward {
                coalition,
                reward,
                query,
                target,
            } => {
                write!(f, "{coalition} R")?;
                if let Some(r) = reward {
                    write!(f, "{{\"{r}\"}}")?;
                }
                match query {
                    Query::Value(o) => write!(f, "{}=? ", opt_name(*o))?,
                    Query::Bound(c, b) => write!(f, "{c}{b} ")?,
                }
                f.write_str("[ F ")?;
                sub(f, target)?;
                f.write_str(" ]")
            }
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

    fn err<T>(&self, msg: impl Into<String>) -> Result<T, FormulaError> {
        Err(FormulaError {
            col: self.pos + 1,
            msg: msg.into(),
        })
    }

    fn found(&self) -> String {
        match self.src.get(self.pos) {
            Some(&c) => format!("`{}`", c as char),
            None => "end of input".into(),
        }
    }

    fn eat(&mut self, s: &str) -> bool {
        self.ws();
        if self.src[self.pos..].starts_with(s.as_bytes()) {
            self.pos += s.len();
            true
        } else {
            false
        }
    }

    /// Consumes a keyword only when it is not the prefix of a longer identifier.
    fn keyword(&mut self, kw: &str) -> bool {
        self.ws();
        let end = self.pos + kw.len();
        if self.src[self.pos..].starts_with(kw.as_bytes())
            && !self
                .src
                .get(end)
                .is_some_and(|c| c.is_ascii_alphanumeric() || *c == b'_')
        {
            self.pos = end;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, s: &str) -> Result<(), FormulaError> {
        if self.eat(s) {
            Ok(())
        } else {
            let found = self.found();
            self.err(format!("expected `{s}`, found {found}"))
        }
    }

    fn ident(&mut self) -> Result<String, FormulaError> {
        self.ws();
        let start = self.pos;
        while self
            .src
            .get(self.pos)
            .is_some_and(|c| c.is_ascii_alphanumeric() || *c == b'_')
        {
            self.pos += 1;
        }
        if start == self.pos {
            let found = self.found();
            return self.err(format!("expected an identifier, found {found}"));
        }
        Ok(String::from_utf8_lossy(&self.src[start..self.pos]).into_owned())
    }

    fn quoted(&mut self) -> Result<String, FormulaError> {
        self.ws();
        let open = self.pos;
        self.expect("\"")?;
        let start = self.pos;
        while self.src.get(self.pos).is_some_and(|&c| c != b'"') {
            self.pos += 1;
        }
        if self.pos >= self.src.len() {
            return Err(FormulaError {
                col: open + 1,
                msg: "unterminated label".into(),
            });
        }
        let s = String::from_utf8_lossy(&self.src[start..self.pos]).into_owned();
        self.pos += 1;
        if s.is_empty() {
            return Err(FormulaError {
                col: open + 1,
                msg: "empty label".into(),
            });
        }
        Ok(s)
    }

    fn number(&mut self) -> Result<(f64, usize), FormulaError> {
        self.ws();
        let start = self.pos;
        while self
            .src
            .get(self.pos)
            .is_some_and(|c| c.is_ascii_digit() || matches!(c, b'.' | b'e' | b'E' | b'-' | b'+'))
        {
            self.pos += 1;
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).unwrap_or("");
        match text.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok((v, start + 1)),
            _ => Err(FormulaError {
                col: start + 1,
                msg: format!("expected a number, found `{text}`"),
            }),
        }
    }

    fn formula(&mut self) -> Result<StateFormula, FormulaError> {
        let mut f = self.conj()?;
        while self.eat("|") {
            f = StateFormula::Or(Box::new(f), Box::new(self.conj()?));
        }
        Ok(f)
    }

    fn conj(&mut self) -> Result<StateFormula, FormulaError> {
        let mut f = self.unary()?;
        while self.eat("&") {
            f = StateFormula::And(Box::new(f), Box::new(self.unary()?));
        }
        Ok(f)
    }

    fn unary(&mut self) -> Result<StateFormula, FormulaError> {
        self.ws();
        if self.eat("!") {
            return Ok(StateFormula::Not(Box::new(self.unary()?)));
        }
        if self.eat("<<") {
            return self.operator();
        }
        if self.eat("(") {
            let f = self.formula()?;
            self.expect(")")?;
            return Ok(f);
        }
        if self.keyword("true") {
            return Ok(StateFormula::True);
        }
        if self.keyword("false") {
            return Ok(StateFormula::Not(Box::new(StateFormula::True)));
        }
        if self.src.get(self.pos) == Some(&b'"') {
            return Ok(StateFormula::Atom(self.quoted()?));
        }
        let found = self.found();
        self.err(format!("expected a state formula, found {found}"))
    }

    fn coalition(&mut self) -> Result<Coalition, FormulaError> {
        let mut players = BTreeSet::new();
        if self.eat(">>") {
            return Ok(Coalition(players));
        }
        loop {
            self.ws();
            let col = self.pos + 1;
            let name = self.ident()?;
            let p = match name.as_str() {
                "def" | "D" | "defender" => Player::Defender,
                "att" | "A" | "attacker" => Player::Attacker,
                _ => {
                    return Err(FormulaError {
                        col,
                        msg: format!("unknown player `{name}`"),
                    })
                }
            };
            players.insert(p);
            if self.eat(">>") {
                return Ok(Coalition(players));
            }
            self.expect(",")?;
        }
    }

    fn bound(&mut self) -> Result<Option<(Cmp, f64, usize)>, FormulaError> {
        let cmp = if self.eat("<=") {
            Cmp::Le
        } else if self.eat(">=") {
            Cmp::Ge
        } else if self.eat("<") {
            Cmp::Lt
        } else if self.eat(">") {
            Cmp::Gt
        } else {
            return Ok(None);
        };
        let (v, col) = self.number()?;
        Ok(Some((cmp, v, col)))
    }

    fn operator(&mut self) -> Result<StateFormula, FormulaError> {
        let coalition = self.coalition()?;
        self.ws();
        if self.eat("P") {
            let query = if self.eat("max=?") {
                Query::Value(Opt::Max)
            } else if self.eat("min=?") {
                Query::Value(Opt::Min)
            } else if let Some((c, b, col)) = self.bound()? {
                if !(0.0..=1.0).contains(&b) {
                    return Err(FormulaError {
                        col,
                        msg: format!("probability bound {b} outside [0,1]"),
                    });
                }
                Query::Bound(c, b)
            } else {
                let found = self.found();
                return self.err(format!("expected `max=?`, `min=?` or a bound, found {found}"));
            };
            self.expect("[")?;
            let path = self.path()?;
            self.expect("]")?;
            return Ok(StateFormula::Prob {
                coalition,
                query,
                path,
            });
        }
        if self.eat("R") {
            let reward = if self.eat("{") {
                self.ws();
                let name = if self.src.get(self.pos) == Some(&b'"') {
                    self.quoted()?
                } else {
                    self.ident()?
                };
                self.expect("}")?;
                Some(name)
            } else {
                None
            };
            let query = if self.eat("max=?") {
                Query::Value(Opt::Max)
            } else if self.eat("min=?") {
                Query::Value(Opt::Min)
            } else if let Some((c, b, _)) = self.bound()? {
                Query::Bound(c, b)
            } else {
                let found = self.found();
                return self.err(format!("expected `max=?`, `min=?` or a bound, found {found}"));
            };
            self.expect("[")?;
            if !self.keyword("F") {
                let found = self.found();
                return self.err(format!("reward operators take `F`, found {found}"));
            }
            let target = self.formula()?;
            self.expect("]")?;
            return Ok(StateFormula::Reward {
                coalition,
                reward,
                query,
                target: Box::new(target),
            });
        }
        let found = self.found();
        self.err(format!("expected `P` or `R`, found {found}"))
    }

    fn path(&mut self) -> Result<PathFormula, FormulaError> {
        if self.keyword("X") {
            return Ok(PathFormula::Next(Box::new(self.formula()?)));
        }
        if self.keyword("F") {
            return Ok(PathFormula::Until(
                Box::new(StateFormula::True),
                Box::new(self.formula()?),
            ));
        }
        let lhs = self.formula()?;
        self.ws();
        if self.eat("U<=") {
            self.ws();
            let start = self.pos;
            while self.src.get(self.pos).is_some_and(|c| c.is_ascii_digit()) {
                self.pos += 1;
            }
            let k: u64 = std::str::from_utf8(&self.src[start..self.pos])
                .unwrap_or("")
                .parse()
                .map_err(|_| FormulaError {
                    col: start + 1,
                    msg: "expected a step bound".into(),
                })?;
            let rhs = self.formula()?;
            return Ok(PathFormula::BoundedUntil(Box::new(lhs), Box::new(rhs), k));
        }
        if self.keyword("U") {
            let rhs = self.formula()?;
            return Ok(PathFormula::Until(Box::new(lhs), Box::new(rhs)));
        }
        let found = self.found();
        self.err(format!("expected `U` or `U<=k`, found {found}"))
    }
}

pub fn parse(text: &str) -> Result<RpatlFormula, FormulaError> {
    let mut p = Parser {
        src: text.as_bytes(),
        pos: 0,
    };
    let f = p.formula()?;
    p.ws();
    if p.pos < p.src.len() {
        let found = p.found();
        return p.err(format!("unexpected {found}"));
    }
    Ok(f)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defender_probability_query() {
        let f = parse(r#"<<def>> Pmax=? [ F "attackerBlocked" ]"#).unwrap();
        match &f {
            StateFormula::Prob {
                coalition,
                query: Query::Value(Opt::Max),
                path: PathFormula::Until(l, r),
            } => {
                assert_eq!(coalition, &Coalition::of(&[Player::Defender]));
                assert_eq!(**l, StateFormula::True);
                assert_eq!(**r, StateFormula::Atom("attackerBlocked".into()));
            }
            other => panic!("{other:?}"),
        }
        assert_eq!(parse(&f.to_string()).unwrap(), f);
    }

    #[test]
    fn reward_queries() {
        let f = parse(r#"<<att>> R{"aCosts"}max=? [ F "DoS_plycent02" ]"#).unwrap();
        assert!(matches!(
            &f,
            StateFormula::Reward { reward: Some(r), query: Query::Value(Opt::Max), .. } if r == "aCosts"
        ));
        assert_eq!(parse(&f.to_string()).unwrap(), f);
        let g = parse(r#"<<def>> Rmin=? [F "b"]"#).unwrap();
        assert!(matches!(g, StateFormula::Reward { reward: None, .. }));
        let h = parse(r#"<<D>> R{dCosts}<=10 [F "b"]"#).unwrap();
        assert!(matches!(h, StateFormula::Reward { query: Query::Bound(Cmp::Le, b), .. } if b == 10.0));
    }

    #[test]
    fn boolean_and_nested() {
        assert_eq!(parse("true").unwrap(), StateFormula::True);
        let f = parse(r#"!"a" & <<def>> P>=0.5 [ "a" U<=3 ("b" | "c") ]"#).unwrap();
        assert!(f.has_step_operators());
        assert_eq!(parse(&f.to_string()).unwrap(), f);
        assert!(parse(r#"<<def,att>> P<0.2 [ X "a" ]"#).unwrap().has_step_operators());
        assert_eq!(
            parse(r#"<<def>> Pmin=? [ F "goal" ]"#).unwrap().atoms(),
            BTreeSet::from(["goal".to_string()])
        );
    }

    #[test]
    fn errors_are_positioned() {
        for (src, col) in [
            ("<<def>> Pmax=? [ F \"a\"", 23),
            ("<<def>> P>=1.5 [ F \"a\" ]", 12),
            ("<<bob>> Pmax=? [ F \"a\" ]", 3),
            ("<<def>> Q", 9),
            ("<<def>> Rmin=? [ X \"a\" ]", 18),
            ("\"a\" &", 6),
            ("\"a", 1),
            ("<<def>> Pmax=? [ \"a\" W \"b\" ]", 22),
            ("\"a\" \"b\"", 5),
        ] {
            let err = parse(src).unwrap_err();
            assert_eq!(err.col, col, "{src}: {err}");
        }
    }
}
