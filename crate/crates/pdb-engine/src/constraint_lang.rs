//! Surface language for denial constraints and conjunctive queries:
//! abstract syntax, parser, pretty-printer and syntactic classification.
//!
//! Constraint syntax, one per line:
//! `name: ![Atom, ..., builtin, ...] [@ prob]` (the name and probability are
//! optional). Query syntax: `q(x, ...) := Atom, ..., builtin, ...`.
//! Variables are lowercase-initial identifiers; string constants are quoted
//! with `"` or `'`; numeric constants are bare. `#` starts a comment.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use num::One;

use crate::model::{parse_rational, DomainKind, Rational, RelationSchema, Value};

/// Errors raised while parsing or classifying constraints and queries.
#[derive(Debug, thiserror::Error)]
pub enum LangError {
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("line {line}: unknown relation `{relation}`")]
    UnknownRelation { line: usize, relation: String },
    #[error("line {line}: relation `{relation}` has arity {expected}, found {found} arguments")]
    ArityMismatch {
        line: usize,
        relation: String,
        expected: usize,
        found: usize,
    },
    #[error("line {line}: variable `{var}` is used with conflicting kinds ({a} and {b})")]
    KindConflict {
        line: usize,
        var: String,
        a: DomainKind,
        b: DomainKind,
    },
    #[error("line {line}: comparison mixes a string with a number")]
    CrossKindComparison { line: usize },
    #[error("line {line}: constant `{value}` does not fit kind {kind}")]
    ConstantKind {
        line: usize,
        value: String,
        kind: DomainKind,
    },
    #[error("line {line}: variable `{var}` in a comparison does not occur in any atom")]
    UnsafeVariable { line: usize, var: String },
    #[error("line {line}: head variable `{var}` does not occur in the body")]
    UnsafeHeadVariable { line: usize, var: String },
    #[error("line {line}: a denial constraint needs at least one relational atom")]
    NoAtoms { line: usize },
    #[error("line {line}: constraint probability {prob} is not in (0, 1]")]
    BadConstraintProbability { line: usize, prob: String },
    #[error("duplicate constraint name `{0}`")]
    DuplicateName(String),
}

/// A term: variable or constant.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum Term {
    Var(String),
    Const(Value),
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Var(v) => write!(f, "{v}"),
            Term::Const(Value::Str(s)) => write!(f, "\"{s}\""),
            Term::Const(v) => write!(f, "{v}"),
        }
    }
}

/// Comparison operator of a builtin predicate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CmpOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl CmpOp {
    pub fn eval(self, ord: std::cmp::Ordering) -> bool {
        use std::cmp::Ordering::*;
        match self {
            CmpOp::Eq => ord == Equal,
            CmpOp::Ne => ord != Equal,
            CmpOp::Lt => ord == Less,
            CmpOp::Le => ord != Greater,
            CmpOp::Gt => ord == Greater,
            CmpOp::Ge => ord != Less,
        }
    }
}

impl fmt::Display for CmpOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            CmpOp::Eq => "=",
            CmpOp::Ne => "!=",
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
        };
        write!(f, "{s}")
    }
}

/// A relational atom `R(t1, ..., tk)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Atom {
    pub relation: String,
    pub terms: Vec<Term>,
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}(", self.relation)?;
        for (i, t) in self.terms.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{t}")?;
        }
        write!(f, ")")
    }
}

/// A builtin comparison `left op right`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BuiltinPredicate {
    pub left: Term,
    pub op: CmpOp,
    pub right: Term,
}

impl BuiltinPredicate {
    /// Both sides constants: the predicate is independent of any binding.
    pub fn is_degenerate(&self) -> bool {
        matches!(
            (&self.left, &self.right),
            (Term::Const(_), Term::Const(_))
        )
    }

    /// At least one constant side.
    pub fn has_constant_side(&self) -> bool {
        matches!(&self.left, Term::Const(_)) || matches!(&self.right, Term::Const(_))
    }
}

impl fmt::Display for BuiltinPredicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {}", self.left, self.op, self.right)
    }
}

/// A denial constraint `name: ![atoms..., builtins...]` with an optional
/// probability (`None` = deterministic, i.e. probability 1).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DenialConstraint {
    pub name: String,
    pub atoms: Vec<Atom>,
    pub builtins: Vec<BuiltinPredicate>,
    pub prob: Option<Rational>,
}

impl DenialConstraint {
    /// Number of relational atoms.
    pub fn arity(&self) -> usize {
        self.atoms.len()
    }

    /// Relation names mentioned, deduplicated.
    pub fn relations(&self) -> BTreeSet<&str> {
        self.atoms.iter().map(|a| a.relation.as_str()).collect()
    }

    /// Builtins whose two sides are both constants.
    pub fn degenerate_builtins(&self) -> Vec<&BuiltinPredicate> {
        self.builtins.iter().filter(|b| b.is_degenerate()).collect()
    }
}

impl fmt::Display for DenialConstraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: ![", self.name)?;
        let mut first = true;
        for a in &self.atoms {
            if !first {
                write!(f, ", ")?;
            }
            first = false;
            write!(f, "{a}")?;
        }
        for b in &self.builtins {
            write!(f, ", {b}")?;
        }
        write!(f, "]")?;
        if let Some(p) = &self.prob {
            write!(f, " @ {p}")?;
        }
        Ok(())
    }
}

/// A conjunctive query `head(x, ...) := atoms..., builtins...`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConjunctiveQuery {
    pub head_name: String,
    pub head_vars: Vec<String>,
    pub atoms: Vec<Atom>,
    pub builtins: Vec<BuiltinPredicate>,
}

impl ConjunctiveQuery {
    pub fn is_boolean(&self) -> bool {
        self.head_vars.is_empty()
    }

    /// Variables of the body occurring in atoms.
    pub fn body_vars(&self) -> BTreeSet<&str> {
        self.atoms
            .iter()
            .flat_map(|a| a.terms.iter())
            .filter_map(|t| match t {
                Term::Var(v) => Some(v.as_str()),
                Term::Const(_) => None,
            })
            .collect()
    }

    /// True when some body variable is projected away (not in the head).
    pub fn has_projection(&self) -> bool {
        self.body_vars()
            .iter()
            .any(|v| !self.head_vars.iter().any(|h| h == v))
    }
}

impl fmt::Display for ConjunctiveQuery {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}({}) := ", self.head_name, self.head_vars.join(", "))?;
        let mut first = true;
        for a in &self.atoms {
            if !first {
                write!(f, ", ")?;
            }
            first = false;
            write!(f, "{a}")?;
        }
        for b in &self.builtins {
            write!(f, ", {b}")?;
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Tokenizer
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Str(String),
    Num(String),
    Bang,
    LBracket,
    RBracket,
    LParen,
    RParen,
    Comma,
    Colon,
    ColonDash, // :=
    At,
    Op(CmpOp),
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Ident(s) => write!(f, "`{s}`"),
            Tok::Str(s) => write!(f, "\"{s}\""),
            Tok::Num(s) => write!(f, "`{s}`"),
            Tok::Bang => write!(f, "`!`"),
            Tok::LBracket => write!(f, "`[`"),
            Tok::RBracket => write!(f, "`]`"),
            Tok::LParen => write!(f, "`(`"),
            Tok::RParen => write!(f, "`)`"),
            Tok::Comma => write!(f, "`,`"),
            Tok::Colon => write!(f, "`:`"),
            Tok::ColonDash => write!(f, "`:=`"),
            Tok::At => write!(f, "`@`"),
            Tok::Op(op) => write!(f, "`{op}`"),
        }
    }
}

fn tokenize(line: usize, src: &str) -> Result<Vec<Tok>, LangError> {
    let err = |msg: String| LangError::Parse { line, msg };
    let mut toks = Vec::new();
    let chars: Vec<char> = src.chars().collect();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        match c {
            c if c.is_whitespace() => i += 1,
            '#' => break,
            '(' => {
                toks.push(Tok::LParen);
                i += 1;
            }
            ')' => {
                toks.push(Tok::RParen);
                i += 1;
            }
            '[' => {
                toks.push(Tok::LBracket);
                i += 1;
            }
            ']' => {
                toks.push(Tok::RBracket);
                i += 1;
            }
            ',' => {
                toks.push(Tok::Comma);
                i += 1;
            }
            '@' => {
                toks.push(Tok::At);
                i += 1;
            }
            ':' => {
                if chars.get(i + 1) == Some(&'=') {
                    toks.push(Tok::ColonDash);
                    i += 2;
                } else {
                    toks.push(Tok::Colon);
                    i += 1;
                }
            }
            '!' => {
                if chars.get(i + 1) == Some(&'=') {
                    toks.push(Tok::Op(CmpOp::Ne));
                    i += 2;
                } else {
                    toks.push(Tok::Bang);
                    i += 1;
                }
            }
            '=' => {
                toks.push(Tok::Op(CmpOp::Eq));
                i += 1;
            }
            '<' => {
                if chars.get(i + 1) == Some(&'=') {
                    toks.push(Tok::Op(CmpOp::Le));
                    i += 2;
                } else {
                    toks.push(Tok::Op(CmpOp::Lt));
                    i += 1;
                }
            }
            '>' => {
                if chars.get(i + 1) == Some(&'=') {
                    toks.push(Tok::Op(CmpOp::Ge));
                    i += 2;
                } else {
                    toks.push(Tok::Op(CmpOp::Gt));
                    i += 1;
                }
            }
            '"' | '\'' => {
                let quote = c;
                let mut s = String::new();
                i += 1;
                loop {
                    match chars.get(i) {
                        Some(&ch) if ch == quote => {
                            i += 1;
                            break;
                        }
                        Some(&ch) => {
                            s.push(ch);
                            i += 1;
                        }
                        None => return Err(err("unterminated string literal".into())),
                    }
                }
                toks.push(Tok::Str(s));
            }
            c if c.is_ascii_digit()
                || (c == '-' && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit())) =>
            {
                let start = i;
                i += 1;
                while i < chars.len()
                    && (chars[i].is_ascii_digit() || chars[i] == '/' || chars[i] == '.')
                {
                    i += 1;
                }
                toks.push(Tok::Num(chars[start..i].iter().collect()));
            }
            c if c.is_alphabetic() || c == '_' => {
                let start = i;
                while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_') {
                    i += 1;
                }
                toks.push(Tok::Ident(chars[start..i].iter().collect()));
            }
            other => return Err(err(format!("unexpected character `{other}`"))),
        }
    }
    Ok(toks)
}

// ---------------------------------------------------------------------------
// Parser
// ---------------------------------------------------------------------------

struct Parser<'a> {
    line: usize,
    toks: &'a [Tok],
    pos: usize,
    schemas: &'a [RelationSchema],
}

impl<'a> Parser<'a> {
    fn err(&self, msg: impl Into<String>) -> LangError {
        LangError::Parse {
            line: self.line,
            msg: msg.into(),
        }
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos)
    }

    fn next(&mut self) -> Option<&Tok> {
        let t = self.toks.get(self.pos);
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn expect(&mut self, tok: Tok) -> Result<(), LangError> {
        let line = self.line;
        match self.next() {
            Some(t) if *t == tok => Ok(()),
            Some(t) => Err(LangError::Parse {
                line,
                msg: format!("expected {tok}, found {t}"),
            }),
            None => Err(LangError::Parse {
                line,
                msg: format!("expected {tok}, found end of line"),
            }),
        }
    }

    fn schema(&self, relation: &str) -> Result<&'a RelationSchema, LangError> {
        self.schemas
            .iter()
            .find(|s| s.name == relation)
            .ok_or_else(|| LangError::UnknownRelation {
                line: self.line,
                relation: relation.to_string(),
            })
    }

    /// A term inside an atom at a position of known kind.
    fn atom_term(&mut self, kind: DomainKind) -> Result<Term, LangError> {
        let line = self.line;
        match self.next().cloned() {
            Some(Tok::Ident(name)) => {
                if name.chars().next().is_some_and(|c| c.is_lowercase() || c == '_') {
                    Ok(Term::Var(name))
                } else {
                    Err(LangError::Parse {
                        line,
                        msg: format!(
                            "`{name}` is not a variable (variables start lowercase); \
                             quote it to make it a string constant"
                        ),
                    })
                }
            }
            Some(Tok::Str(s)) => match kind {
                DomainKind::String => Ok(Term::Const(Value::Str(s))),
                DomainKind::Integer => s
                    .parse()
                    .map(|i| Term::Const(Value::Int(i)))
                    .map_err(|_| LangError::ConstantKind {
                        line,
                        value: s,
                        kind,
                    }),
                DomainKind::Rational => parse_rational(&s)
                    .map(|r| Term::Const(Value::Rat(r)))
                    .map_err(|_| LangError::ConstantKind {
                        line,
                        value: s,
                        kind,
                    }),
            },
            Some(Tok::Num(n)) => match kind {
                DomainKind::String => Err(LangError::ConstantKind {
                    line,
                    value: n,
                    kind,
                }),
                DomainKind::Integer => n
                    .parse()
                    .map(|i| Term::Const(Value::Int(i)))
                    .map_err(|_| LangError::ConstantKind {
                        line,
                        value: n,
                        kind,
                    }),
                DomainKind::Rational => parse_rational(&n)
                    .map(|r| Term::Const(Value::Rat(r)))
                    .map_err(|_| LangError::ConstantKind {
                        line,
                        value: n,
                        kind,
                    }),
            },
            Some(t) => Err(LangError::Parse {
                line,
                msg: format!("expected a term, found {t}"),
            }),
            None => Err(LangError::Parse {
                line,
                msg: "expected a term, found end of line".into(),
            }),
        }
    }

    /// An atom `R(t1, ..., tk)`, checked against the schema.
    fn atom(&mut self, relation: String) -> Result<Atom, LangError> {
        let schema = self.schema(&relation)?;
        self.expect(Tok::LParen)?;
        let mut terms = Vec::new();
        loop {
            let kind = schema
                .attributes
                .get(terms.len())
                .map(|(_, k)| *k)
                .unwrap_or(DomainKind::String); // arity error raised below
            terms.push(self.atom_term(kind)?);
            match self.next().cloned() {
                Some(Tok::Comma) => continue,
                Some(Tok::RParen) => break,
                Some(t) => return Err(self.err(format!("expected `,` or `)`, found {t}"))),
                None => return Err(self.err("expected `,` or `)`, found end of line")),
            }
        }
        if terms.len() != schema.arity() {
            return Err(LangError::ArityMismatch {
                line: self.line,
                relation,
                expected: schema.arity(),
                found: terms.len(),
            });
        }
        Ok(Atom { relation, terms })
    }

    /// A term on the side of a comparison: variable or untyped constant.
    fn cmp_term(&mut self) -> Result<Term, LangError> {
        let line = self.line;
        match self.next().cloned() {
            Some(Tok::Ident(name)) => {
                if name.chars().next().is_some_and(|c| c.is_lowercase() || c == '_') {
                    Ok(Term::Var(name))
                } else {
                    Err(LangError::Parse {
                        line,
                        msg: format!("`{name}` is not a variable; quote string constants"),
                    })
                }
            }
            Some(Tok::Str(s)) => Ok(Term::Const(Value::Str(s))),
            Some(Tok::Num(n)) => parse_rational(&n)
                .map(|r| {
                    if r.is_integer() {
                        Term::Const(Value::Int(r.to_integer()))
                    } else {
                        Term::Const(Value::Rat(r))
                    }
                })
                .map_err(|_| LangError::Parse {
                    line,
                    msg: format!("bad numeric literal `{n}`"),
                }),
            Some(t) => Err(LangError::Parse {
                line,
                msg: format!("expected a term, found {t}"),
            }),
            None => Err(LangError::Parse {
                line,
                msg: "expected a term, found end of line".into(),
            }),
        }
    }

    /// Parse a comma-separated body of atoms and builtins until `end`
    /// (or end of line when `end` is None).
    fn body(
        &mut self,
        end: Option<&Tok>,
    ) -> Result<(Vec<Atom>, Vec<BuiltinPredicate>), LangError> {
        let mut atoms = Vec::new();
        let mut builtins = Vec::new();
        loop {
            // An item is either `Ident(` (atom) or a comparison.
            let is_atom = matches!(
                (self.peek(), self.toks.get(self.pos + 1)),
                (Some(Tok::Ident(_)), Some(Tok::LParen))
            );
            if is_atom {
                let relation = match self.next().cloned() {
                    Some(Tok::Ident(name)) => name,
                    _ => unreachable!(),
                };
                atoms.push(self.atom(relation)?);
            } else {
                let left = self.cmp_term()?;
                let op = match self.next().cloned() {
                    Some(Tok::Op(op)) => op,
                    Some(t) => {
                        return Err(self.err(format!("expected a comparison operator, found {t}")))
                    }
                    None => {
                        return Err(self.err("expected a comparison operator, found end of line"))
                    }
                };
                let right = self.cmp_term()?;
                builtins.push(BuiltinPredicate { left, op, right });
            }
            match (self.peek(), end) {
                (Some(Tok::Comma), _) => {
                    self.pos += 1;
                }
                (Some(t), Some(e)) if t == e => break,
                (None, None) => break,
                (Some(t), _) => {
                    return Err(self.err(format!("unexpected {t}")));
                }
                (None, Some(e)) => {
                    return Err(self.err(format!("expected {e}, found end of line")));
                }
            }
        }
        Ok((atoms, builtins))
    }
}

/// Kind of a constraint/query variable, inferred from its atom positions.
fn variable_kinds(
    line: usize,
    atoms: &[Atom],
    schemas: &[RelationSchema],
) -> Result<BTreeMap<String, DomainKind>, LangError> {
    let mut kinds: BTreeMap<String, DomainKind> = BTreeMap::new();
    for atom in atoms {
        let schema = schemas
            .iter()
            .find(|s| s.name == atom.relation)
            .expect("atom relations were checked during parsing");
        for (term, (_, kind)) in atom.terms.iter().zip(&schema.attributes) {
            if let Term::Var(v) = term {
                match kinds.get(v) {
                    None => {
                        kinds.insert(v.clone(), *kind);
                    }
                    Some(k) if kind_compatible(*k, *kind) => {}
                    Some(&k) => {
                        return Err(LangError::KindConflict {
                            line,
                            var: v.clone(),
                            a: k,
                            b: *kind,
                        })
                    }
                }
            }
        }
    }
    Ok(kinds)
}

/// Integer and rational interoperate numerically; string stands alone.
fn kind_compatible(a: DomainKind, b: DomainKind) -> bool {
    match (a, b) {
        (DomainKind::String, DomainKind::String) => true,
        (DomainKind::String, _) | (_, DomainKind::String) => false,
        _ => true,
    }
}

fn term_kind(term: &Term, kinds: &BTreeMap<String, DomainKind>) -> Option<DomainKind> {
    match term {
        Term::Var(v) => kinds.get(v).copied(),
        Term::Const(Value::Str(_)) => Some(DomainKind::String),
        Term::Const(Value::Int(_)) => Some(DomainKind::Integer),
        Term::Const(Value::Rat(_)) => Some(DomainKind::Rational),
    }
}

/// Safety and kind checks shared by constraints and queries.
fn check_body(
    line: usize,
    atoms: &[Atom],
    builtins: &[BuiltinPredicate],
    schemas: &[RelationSchema],
) -> Result<(), LangError> {
    let kinds = variable_kinds(line, atoms, schemas)?;
    for b in builtins {
        for term in [&b.left, &b.right] {
            if let Term::Var(v) = term {
                if !kinds.contains_key(v) {
                    return Err(LangError::UnsafeVariable {
                        line,
                        var: v.clone(),
                    });
                }
            }
        }
        let (lk, rk) = (
            term_kind(&b.left, &kinds).expect("checked above"),
            term_kind(&b.right, &kinds).expect("checked above"),
        );
        if !kind_compatible(lk, rk) {
            return Err(LangError::CrossKindComparison { line });
        }
    }
    Ok(())
}

/// Parse a constraints file (one constraint per line).
///
/// Returns the constraints plus warnings (e.g. for degenerate builtins whose
/// two sides are both constants).
pub fn parse_constraints(
    text: &str,
    schemas: &[RelationSchema],
) -> Result<(Vec<DenialConstraint>, Vec<String>), LangError> {
    let mut constraints: Vec<DenialConstraint> = Vec::new();
    let mut warnings = Vec::new();
    let mut auto = 0usize;
    for (lineno, raw) in text.lines().enumerate() {
        let line = lineno + 1;
        let toks = tokenize(line, raw)?;
        if toks.is_empty() {
            continue;
        }
        let mut p = Parser {
            line,
            toks: &toks,
            pos: 0,
            schemas,
        };
        // Optional `name:` prefix.
        let name = if matches!(
            (p.peek(), toks.get(1)),
            (Some(Tok::Ident(_)), Some(Tok::Colon))
        ) {
            let name = match p.next().cloned() {
                Some(Tok::Ident(n)) => n,
                _ => unreachable!(),
            };
            p.pos += 1; // colon
            name
        } else {
            auto += 1;
            format!("ic{auto}")
        };
        p.expect(Tok::Bang)?;
        p.expect(Tok::LBracket)?;
        let (atoms, builtins) = p.body(Some(&Tok::RBracket))?;
        p.expect(Tok::RBracket)?;
        let prob = if p.peek() == Some(&Tok::At) {
            p.pos += 1;
            match p.next().cloned() {
                Some(Tok::Num(n)) => {
                    let r = parse_rational(&n).map_err(|_| p.err("bad probability literal"))?;
                    if r <= Rational::from(num::BigInt::from(0)) || r > Rational::one() {
                        return Err(LangError::BadConstraintProbability {
                            line,
                            prob: n.clone(),
                        });
                    }
                    if r.is_one() {
                        None
                    } else {
                        Some(r)
                    }
                }
                _ => return Err(p.err("expected a probability after `@`")),
            }
        } else {
            None
        };
        if p.peek().is_some() {
            return Err(p.err("trailing tokens after constraint"));
        }
        if atoms.is_empty() {
            return Err(LangError::NoAtoms { line });
        }
        check_body(line, &atoms, &builtins, schemas)?;
        if constraints.iter().any(|c| c.name == name) {
            return Err(LangError::DuplicateName(name));
        }
        let c = DenialConstraint {
            name,
            atoms,
            builtins,
            prob,
        };
        for b in c.degenerate_builtins() {
            warnings.push(format!(
                "{}: builtin `{b}` compares two constants (degenerate)",
                c.name
            ));
        }
        constraints.push(c);
    }
    Ok((constraints, warnings))
}

/// Parse a conjunctive query `q(x, ...) := Atom, ..., builtin, ...`.
pub fn parse_query(
    text: &str,
    schemas: &[RelationSchema],
) -> Result<ConjunctiveQuery, LangError> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l))
        .filter(|(_, l)| {
            let l = l.split('#').next().unwrap_or("").trim();
            !l.is_empty()
        });
    let (line, src) = lines.next().ok_or(LangError::Parse {
        line: 1,
        msg: "empty query".into(),
    })?;
    if let Some((extra, _)) = lines.next() {
        return Err(LangError::Parse {
            line: extra,
            msg: "a query file must contain a single query".into(),
        });
    }
    let toks = tokenize(line, src)?;
    let mut p = Parser {
        line,
        toks: &toks,
        pos: 0,
        schemas,
    };
    let head_name = match p.next().cloned() {
        Some(Tok::Ident(n)) => n,
        Some(t) => return Err(p.err(format!("expected query head, found {t}"))),
        None => return Err(p.err("expected query head")),
    };
    p.expect(Tok::LParen)?;
    let mut head_vars = Vec::new();
    if p.peek() != Some(&Tok::RParen) {
        loop {
            match p.next().cloned() {
                Some(Tok::Ident(v))
                    if v.chars().next().is_some_and(|c| c.is_lowercase() || c == '_') =>
                {
                    head_vars.push(v)
                }
                Some(t) => return Err(p.err(format!("expected a head variable, found {t}"))),
                None => return Err(p.err("expected a head variable")),
            }
            match p.next().cloned() {
                Some(Tok::Comma) => continue,
                Some(Tok::RParen) => {
                    p.pos -= 1;
                    break;
                }
                Some(t) => return Err(p.err(format!("expected `,` or `)`, found {t}"))),
                None => return Err(p.err("expected `,` or `)`")),
            }
        }
    }
    p.expect(Tok::RParen)?;
    p.expect(Tok::ColonDash)?;
    let (atoms, builtins) = p.body(None)?;
    if atoms.is_empty() {
        return Err(LangError::NoAtoms { line });
    }
    check_body(line, &atoms, &builtins, schemas)?;
    let q = ConjunctiveQuery {
        head_name,
        head_vars,
        atoms,
        builtins,
    };
    let body_vars = q.body_vars();
    for v in &q.head_vars {
        if !body_vars.contains(v.as_str()) {
            return Err(LangError::UnsafeHeadVariable {
                line,
                var: v.clone(),
            });
        }
    }
    Ok(q)
}

// ---------------------------------------------------------------------------
// Classification
// ---------------------------------------------------------------------------

/// Most specific syntactic class of a single constraint.
/// `Fd` refines `BinaryEgd` refines `GeneralDenial`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ClassTag {
    /// A functional dependency over one relation: the shared variable
    /// positions (`lhs`) determine the compared positions (`rhs`).
    Fd {
        relation: String,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    /// Two atoms, variables only, `!=`-only builtins.
    BinaryEgd,
    GeneralDenial,
}

/// Classification of a constraint: most specific tag plus the orthogonal
/// join-free flag and the arity (atom count).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConstraintClass {
    pub tag: ClassTag,
    pub join_free: bool,
    pub arity: usize,
}

/// A constraint is join-free when no variable occurs in more than one atom
/// position and every builtin involves at least one constant.
fn is_join_free(c: &DenialConstraint) -> bool {
    let mut seen: BTreeSet<&str> = BTreeSet::new();
    for atom in &c.atoms {
        for term in &atom.terms {
            if let Term::Var(v) = term {
                if !seen.insert(v) {
                    return false;
                }
            }
        }
    }
    c.builtins.iter().all(|b| b.has_constant_side())
}

/// Binary EGD: exactly two atoms, all atom terms are variables, at least one
/// builtin, and every builtin is `!=` between two distinct variables.
fn is_binary_egd(c: &DenialConstraint) -> bool {
    c.atoms.len() == 2
        && c.atoms
            .iter()
            .all(|a| a.terms.iter().all(|t| matches!(t, Term::Var(_))))
        && !c.builtins.is_empty()
        && c.builtins.iter().all(|b| {
            b.op == CmpOp::Ne
                && matches!((&b.left, &b.right), (Term::Var(l), Term::Var(r)) if l != r)
        })
}

/// FD pattern: a binary EGD over a single relation where shared variables
/// pair up position-wise (the LHS) and every builtin compares the two atoms'
/// variables at one matching position (the RHS).
fn fd_pattern(c: &DenialConstraint) -> Option<(String, Vec<usize>, Vec<usize>)> {
    if !is_binary_egd(c) {
        return None;
    }
    let (a1, a2) = (&c.atoms[0], &c.atoms[1]);
    if a1.relation != a2.relation || a1.terms.len() != a2.terms.len() {
        return None;
    }
    let var = |t: &Term| match t {
        Term::Var(v) => v.clone(),
        Term::Const(_) => unreachable!("binary EGDs contain no constants"),
    };
    let v1: Vec<String> = a1.terms.iter().map(var).collect();
    let v2: Vec<String> = a2.terms.iter().map(var).collect();
    // Every variable must occur at exactly one position per atom, and a
    // variable shared between the atoms must sit at the same position.
    let mut occurrences: BTreeMap<&str, Vec<(usize, usize)>> = BTreeMap::new();
    for (i, v) in v1.iter().enumerate() {
        occurrences.entry(v).or_default().push((0, i));
    }
    for (i, v) in v2.iter().enumerate() {
        occurrences.entry(v).or_default().push((1, i));
    }
    let mut lhs = Vec::new();
    for (_, occ) in &occurrences {
        match occ.as_slice() {
            [_] => {}
            [(0, i), (1, j)] if i == j => lhs.push(*i),
            _ => return None,
        }
    }
    lhs.sort_unstable();
    let mut rhs = Vec::new();
    for b in &c.builtins {
        let (l, r) = match (&b.left, &b.right) {
            (Term::Var(l), Term::Var(r)) => (l, r),
            _ => unreachable!(),
        };
        // The two sides must be the position-i variables of the two atoms,
        // in either order, at a non-shared position.
        let pos = (0..v1.len()).find(|&i| {
            (&v1[i] == l && &v2[i] == r) || (&v1[i] == r && &v2[i] == l)
        })?;
        if lhs.contains(&pos) || rhs.contains(&pos) {
            return None;
        }
        rhs.push(pos);
    }
    rhs.sort_unstable();
    Some((a1.relation.clone(), lhs, rhs))
}

/// Classify a single constraint.
pub fn classify(c: &DenialConstraint) -> ConstraintClass {
    let tag = if let Some((relation, lhs, rhs)) = fd_pattern(c) {
        ClassTag::Fd { relation, lhs, rhs }
    } else if is_binary_egd(c) {
        ClassTag::BinaryEgd
    } else {
        ClassTag::GeneralDenial
    };
    ConstraintClass {
        tag,
        join_free: is_join_free(c),
        arity: c.arity(),
    }
}

/// Classification of a whole constraint set, in decreasing specificity.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SetClass {
    /// Every constraint is an FD and no two FDs share a relation.
    /// (The empty set qualifies trivially.)
    OneFdPerRelation,
    /// Every constraint is join-free or a binary EGD, and the relation sets
    /// of distinct constraints are pairwise disjoint.
    DisjointJoinFreeOrBegd,
    General,
}

/// Classify a constraint set.
pub fn classify_set(constraints: &[DenialConstraint]) -> SetClass {
    let classes: Vec<ConstraintClass> = constraints.iter().map(classify).collect();
    let mut fd_relations: BTreeSet<&str> = BTreeSet::new();
    let mut one_fd = true;
    for (c, class) in constraints.iter().zip(&classes) {
        match &class.tag {
            ClassTag::Fd { relation, .. } => {
                if !fd_relations.insert(relation) {
                    one_fd = false;
                }
                let _ = c;
            }
            _ => one_fd = false,
        }
    }
    if one_fd {
        return SetClass::OneFdPerRelation;
    }
    let each_ok = classes
        .iter()
        .all(|cl| cl.join_free || matches!(cl.tag, ClassTag::BinaryEgd | ClassTag::Fd { .. }));
    let disjoint = {
        let mut seen: BTreeSet<&str> = BTreeSet::new();
        constraints
            .iter()
            .all(|c| c.relations().iter().all(|r| seen.insert(r)))
    };
    if each_ok && disjoint {
        return SetClass::DisjointJoinFreeOrBegd;
    }
    SetClass::General
}
