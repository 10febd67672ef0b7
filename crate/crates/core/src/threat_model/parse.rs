//! Line-oriented Horn-clause reader.
//!
//! ```text
//! % comment
//! hacl('internet','web','tcp',80).                      [score=1.0]
//! netAccess(h,p,n) :- hacl(s,h,p,n), attackerLocated(s). [id=direct_access, score=0.92, cost=3]
//! ```
//!
//! Names starting with a lowercase letter or `_` are variables; constants
//! start with an uppercase letter or a digit, or are quoted.

use super::{AttackModel, Fact, HornRule, Predicate, Span, Term};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("{span}: syntax error: {msg}")]
    Syntax { span: Span, msg: String },
    #[error("{span}: unsafe rule {rule}: head variable `{var}` does not occur in the body")]
    UnsafeRule { span: Span, rule: String, var: String },
    #[error("{span}: predicate {name} used with arity {found}, previously {expected}")]
    ArityMismatch {
        span: Span,
        name: String,
        expected: usize,
        found: usize,
    },
    #[error("{span}: primitive predicate {name} appears as a rule head")]
    PrimitiveAsHead { span: Span, name: String },
    #[error("{span}: fact {atom} is not ground")]
    NonGroundFact { span: Span, atom: String },
    #[error("{span}: {key}={value} is out of range")]
    OutOfRange { span: Span, key: String, value: f64 },
    #[error("{span}: duplicate rule id {id}")]
    DuplicateRuleId { span: Span, id: String },
}

impl ModelError {
    pub fn span(&self) -> Span {
        match self {
            ModelError::Syntax { span, .. }
            | ModelError::UnsafeRule { span, .. }
            | ModelError::ArityMismatch { span, .. }
            | ModelError::PrimitiveAsHead { span, .. }
            | ModelError::NonGroundFact { span, .. }
            | ModelError::OutOfRange { span, .. }
            | ModelError::DuplicateRuleId { span, .. } => *span,
        }
    }
}

struct Cursor {
    chars: Vec<char>,
    pos: usize,
    line: usize,
}

impl Cursor {
    fn new(src: &str, line: usize) -> Self {
        Cursor {
            chars: src.chars().collect(),
            pos: 0,
            line,
        }
    }

    fn span(&self) -> Span {
        Span {
            line: self.line,
            col: self.pos + 1,
        }
    }

    fn err<T>(&self, msg: impl Into<String>) -> Result<T, ModelError> {
        Err(ModelError::Syntax {
            span: self.span(),
            msg: msg.into(),
        })
    }

    fn skip_ws(&mut self) {
        while self.chars.get(self.pos).is_some_and(|c| c.is_whitespace()) {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<char> {
        self.skip_ws();
        self.chars.get(self.pos).copied()
    }

    fn eat(&mut self, c: char) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: char) -> Result<(), ModelError> {
        if self.eat(c) {
            Ok(())
        } else {
            match self.peek() {
                Some(found) => self.err(format!("expected `{c}`, found `{found}`")),
                None => self.err(format!("expected `{c}`, found end of line")),
            }
        }
    }

    fn at_end(&mut self) -> bool {
        self.peek().is_none()
    }

    fn word(&mut self) -> Option<String> {
        self.skip_ws();
        let start = self.pos;
        while self
            .chars
            .get(self.pos)
            .is_some_and(|&c| c.is_alphanumeric() || matches!(c, '_' | '.' | '-'))
        {
            // a trailing '.' terminates the clause rather than extending the word
            if self.chars[self.pos] == '.'
                && !self
                    .chars
                    .get(self.pos + 1)
                    .is_some_and(|c| c.is_alphanumeric() || *c == '_')
            {
                break;
            }
            self.pos += 1;
        }
        (self.pos > start).then(|| self.chars[start..self.pos].iter().collect())
    }

    fn quoted(&mut self) -> Result<Option<String>, ModelError> {
        let Some(q) = self.peek().filter(|&c| c == '\'' || c == '"') else {
            return Ok(None);
        };
        let open = self.span();
        self.pos += 1;
        let mut out = String::new();
        loop {
            match self.chars.get(self.pos) {
                None => {
                    return Err(ModelError::Syntax {
                        span: open,
                        msg: "unterminated quoted constant".into(),
                    })
                }
                Some(&c) if c == q => {
                    self.pos += 1;
                    return Ok(Some(out));
                }
                Some(&c) => {
                    out.push(c);
                    self.pos += 1;
                }
            }
        }
    }

    fn ident(&mut self, what: &str) -> Result<String, ModelError> {
        self.skip_ws();
        match self.word() {
            Some(w) if w.starts_with(|c: char| c.is_alphabetic() || c == '_') => Ok(w),
            Some(w) => self.err(format!("expected {what}, found `{w}`")),
            None => match self.peek() {
                Some(c) => self.err(format!("expected {what}, found `{c}`")),
                None => self.err(format!("expected {what}, found end of line")),
            },
        }
    }

    fn term(&mut self) -> Result<Term, ModelError> {
        if let Some(s) = self.quoted()? {
            return Ok(Term::Const(s));
        }
        match self.word() {
            Some(w) if w.starts_with(|c: char| c.is_lowercase() || c == '_') => Ok(Term::Var(w)),
            Some(w) => Ok(Term::Const(w)),
            None => match self.peek() {
                Some(c) => self.err(format!("expected a term, found `{c}`")),
                None => self.err("expected a term, found end of line"),
            },
        }
    }

    fn atom(&mut self) -> Result<(Predicate, Span), ModelError> {
        self.skip_ws();
        let span = self.span();
        let name = self.ident("a predicate name")?;
        let mut args = Vec::new();
        if self.eat('(') && !self.eat(')') {
            loop {
                args.push(self.term()?);
                if self.eat(')') {
                    break;
                }
                self.expect(',')?;
            }
        }
        Ok((Predicate { name, args }, span))
    }

    fn number(&mut self) -> Result<f64, ModelError> {
        self.skip_ws();
        let span = self.span();
        let w = self.word().unwrap_or_default();
        w.parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or(ModelError::Syntax {
                span,
                msg: format!("expected a number, found `{w}`"),
            })
    }
}

struct Clause {
    head: (Predicate, Span),
    body: Vec<(Predicate, Span)>,
    annotations: BTreeMap<String, (Annotation, Span)>,
    span: Span,
}

enum Annotation {
    Num(f64),
    Text(String),
}

fn strip_comment(line: &str) -> &str {
    let mut quote = None;
    for (i, c) in line.char_indices() {
        match (quote, c) {
            (None, '\'' | '"') => quote = Some(c),
            (Some(q), c) if c == q => quote = None,
            (None, '%' | '#') => return &line[..i],
            _ => {}
        }
    }
    line
}

fn parse_clause(cur: &mut Cursor) -> Result<Clause, ModelError> {
    let span = {
        cur.skip_ws();
        cur.span()
    };
    let head = cur.atom()?;
    let mut body = Vec::new();
    if cur.eat(':') {
        cur.expect('-')?;
        loop {
            body.push(cur.atom()?);
            if !cur.eat(',') {
                break;
            }
        }
    }
    cur.expect('.')?;
    let mut annotations = BTreeMap::new();
    if cur.eat('[') && !cur.eat(']') {
        loop {
            cur.skip_ws();
            let kspan = cur.span();
            let key = cur.ident("an annotation key")?;
            cur.expect('=')?;
            let value = if key == "id" {
                match cur.quoted()? {
                    Some(s) => Annotation::Text(s),
                    None => Annotation::Text(cur.ident("a rule id")?),
                }
            } else {
                Annotation::Num(cur.number()?)
            };
            if annotations.insert(key.clone(), (value, kspan)).is_some() {
                return Err(ModelError::Syntax {
                    span: kspan,
                    msg: format!("annotation `{key}` given twice"),
                });
            }
            if cur.eat(']') {
                break;
            }
            cur.expect(',')?;
        }
    }
    if !cur.at_end() {
        return cur.err("unexpected trailing input");
    }
    Ok(Clause {
        head,
        body,
        annotations,
        span,
    })
}

fn num_annotation(
    clause: &Clause,
    key: &str,
    default: f64,
    max: f64,
) -> Result<f64, ModelError> {
    match clause.annotations.get(key) {
        None => Ok(default),
        Some((Annotation::Num(v), span)) => {
            if *v < 0.0 || *v > max {
                Err(ModelError::OutOfRange {
                    span: *span,
                    key: key.into(),
                    value: *v,
                })
            } else {
                Ok(*v)
            }
        }
        Some((Annotation::Text(_), span)) => Err(ModelError::Syntax {
            span: *span,
            msg: format!("annotation `{key}` must be numeric"),
        }),
    }
}

fn check_annotation_keys(clause: &Clause, allowed: &[&str]) -> Result<(), ModelError> {
    for (key, (_, span)) in &clause.annotations {
        if !allowed.contains(&key.as_str()) {
            return Err(ModelError::Syntax {
                span: *span,
                msg: format!("unknown annotation `{key}`"),
            });
        }
    }
    Ok(())
}

/// Parses a whole attack model: rules and facts, one clause per line.
pub fn parse_attack_model(text: &str) -> Result<AttackModel, ModelError> {
    let mut clauses = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = strip_comment(raw);
        if line.trim().is_empty() {
            continue;
        }
        let mut cur = Cursor::new(line, i + 1);
        clauses.push(parse_clause(&mut cur)?);
    }

    let mut model = AttackModel::default();
    let check_arity = |p: &Predicate, span: Span, model: &mut AttackModel| {
        match model.arities.get(&p.name) {
            Some(&a) if a != p.arity() => Err(ModelError::ArityMismatch {
                span,
                name: p.name.clone(),
                expected: a,
                found: p.arity(),
            }),
            _ => {
                model.arities.insert(p.name.clone(), p.arity());
                Ok(())
            }
        }
    };

    for c in &clauses {
        check_arity(&c.head.0, c.head.1, &mut model)?;
        for (b, s) in &c.body {
            check_arity(b, *s, &mut model)?;
        }
        if !c.body.is_empty() {
            model.derived.insert(c.head.0.name.clone());
        }
    }

    for c in &clauses {
        if c.body.is_empty() {
            check_annotation_keys(c, &["score"])?;
            let (atom, span) = &c.head;
            if model.derived.contains(&atom.name) {
                return Err(ModelError::PrimitiveAsHead {
                    span: *span,
                    name: atom.name.clone(),
                });
            }
            if !atom.is_ground() {
                return Err(ModelError::NonGroundFact {
                    span: *span,
                    atom: atom.to_string(),
                });
            }
            let score = match c.annotations.contains_key("score") {
                true => Some(num_annotation(c, "score", 1.0, 1.0)?),
                false => None,
            };
            model.primitives.insert(atom.name.clone());
            model.facts.push(Fact {
                atom: atom.clone(),
                score,
                span: c.span,
            });
            continue;
        }

        check_annotation_keys(c, &["score", "cost", "damage", "id"])?;
        let id = match c.annotations.get("id") {
            Some((Annotation::Text(s), _)) => s.clone(),
            _ => format!("r{}", model.rules.len() + 1),
        };
        if model.rules.iter().any(|r| r.id == id) {
            return Err(ModelError::DuplicateRuleId { span: c.span, id });
        }
        for var in c.head.0.vars() {
            if !c.body.iter().any(|(b, _)| b.vars().any(|v| v == var)) {
                return Err(ModelError::UnsafeRule {
                    span: c.head.1,
                    rule: id,
                    var: var.to_string(),
                });
            }
        }
        for (b, _) in &c.body {
            if !model.derived.contains(&b.name) {
                model.primitives.insert(b.name.clone());
            }
        }
        model.rules.push(HornRule {
            id,
            body: c.body.iter().map(|(b, _)| b.clone()).collect(),
            head: c.head.0.clone(),
            base_score: num_annotation(c, "score", 1.0, 1.0)?,
            attack_cost: num_annotation(c, "cost", 0.0, f64::INFINITY)?,
            damage: num_annotation(c, "damage", 0.0, f64::INFINITY)?,
            span: c.span,
        });
    }
    Ok(model)
}

/// Parses a single ground atom such as `execCode('web',root)`.
///
/// A trailing `.` is optional.
pub fn parse_fact(text: &str) -> Result<Predicate, ModelError> {
    let mut cur = Cursor::new(text, 1);
    let (atom, span) = cur.atom()?;
    cur.eat('.');
    if !cur.at_end() {
        return cur.err("unexpected trailing input");
    }
    if !atom.is_ground() {
        return Err(ModelError::NonGroundFact {
            span,
            atom: atom.to_string(),
        });
    }
    Ok(atom)
}

#[cfg(test)]
mod tests {
    use super::*;

    const ILLEGAL_ACCESS: &str = "\
illegalAccessToFile(fs,write,ex) :- execCode(ex,u), localFileProtection(h,u,write,fs), \
hasAccount(u,h), fileOnHost(fs,h), canAccessFile(h,u,write,fs). [score=0.8]
";

    #[test]
    fn five_body_rule() {
        let m = parse_attack_model(ILLEGAL_ACCESS).unwrap();
        assert_eq!(m.rules.len(), 1);
        let r = &m.rules[0];
        assert_eq!(r.body.len(), 5);
        assert_eq!(r.head.name, "illegalAccessToFile");
        assert_eq!(r.head.arity(), 3);
        assert_eq!(r.base_score, 0.8);
        assert_eq!(r.id, "r1");
        assert!(m.derived.contains("illegalAccessToFile"));
        assert!(m.primitives.contains("execCode"));
    }

    #[test]
    fn single_fact_model() {
        let m = parse_attack_model("hacl(A, B).\n").unwrap();
        assert!(m.rules.is_empty());
        assert_eq!(m.facts.len(), 1);
        assert_eq!(m.facts[0].atom, Predicate::ground("hacl", &["A", "B"]));
    }

    #[test]
    fn unsafe_rule_reports_head_position() {
        let err = parse_attack_model("\n  p(x, y) :- q(x).\n").unwrap_err();
        assert!(matches!(err, ModelError::UnsafeRule { ref var, .. } if var == "y"));
        assert_eq!(err.span(), Span { line: 2, col: 3 });
    }

    #[test]
    fn arity_mismatch() {
        let err = parse_attack_model("p(x) :- q(x).\nq(A, B).\n").unwrap_err();
        assert!(matches!(
            err,
            ModelError::ArityMismatch { expected: 1, found: 2, .. }
        ));
        assert_eq!(err.span().line, 2);
    }

    #[test]
    fn primitive_as_head() {
        let err = parse_attack_model("p(x) :- q(x).\np(A).\n").unwrap_err();
        assert!(matches!(err, ModelError::PrimitiveAsHead { .. }));
    }

    #[test]
    fn annotations_and_quotes() {
        let m = parse_attack_model(
            "down(h) :- vul(h, 'cve-2018-5390'), svc(h,'', \"centos7.5\"). [id=remote_DOS, score=0.74, cost=2.5, damage=5.9] % trailing\n",
        )
        .unwrap();
        let r = &m.rules[0];
        assert_eq!(r.id, "remote_DOS");
        assert_eq!(r.attack_cost, 2.5);
        assert_eq!(r.damage, 5.9);
        assert_eq!(r.body[1].args[1], Term::Const(String::new()));
        assert_eq!(r.body[1].args[2], Term::Const("centos7.5".into()));
    }

    #[test]
    fn comment_markers_inside_quotes_are_kept() {
        let m = parse_attack_model("f('a%b', 'c#d'). # done\n").unwrap();
        assert_eq!(m.facts[0].atom, Predicate::ground("f", &["a%b", "c#d"]));
    }

    #[test]
    fn syntax_errors_carry_columns() {
        for (src, col) in [
            ("p(A", 4),
            ("p(A) q(B).", 6),
            ("p(A) :- .", 9),
            ("p('A).", 3),
            ("p(A). [score=x]", 14),
            ("p(A). [score=1.5]", 8),
            ("p(A). [weight=1]", 8),
        ] {
            let err = parse_attack_model(src).unwrap_err();
            assert_eq!(err.span(), Span { line: 1, col }, "{src}: {err}");
        }
    }

    #[test]
    fn non_ground_fact() {
        assert!(matches!(
            parse_attack_model("p(x).").unwrap_err(),
            ModelError::NonGroundFact { .. }
        ));
        assert!(parse_fact("goal(x)").is_err());
        assert_eq!(
            parse_fact("goal('h1').").unwrap(),
            Predicate::ground("goal", &["h1"])
        );
    }
}
