//! LTL syntax, parsing, negation normal form, and a positional reference
//! semantics over ultimately periodic words.
//!
//! The reference semantics (`eval_lasso`, [`BoundedOracle`]) never touches
//! automata. It is the ground truth the synthesized monitors are checked
//! against.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LtlError {
    #[error("syntax error at line {line}, column {column}: expected {}, found {found}", expected.join(" | "))]
    Syntax {
        line: usize,
        column: usize,
        expected: Vec<&'static str>,
        found: String,
    },
    #[error("unknown operator `{op}` at line {line}, column {column}")]
    UnknownOperator {
        line: usize,
        column: usize,
        op: String,
    },
    #[error("invalid identifier `{0}`")]
    InvalidIdentifier(String),
    #[error("lasso loop must contain at least one letter")]
    EmptyLoop,
    #[error("loop bound must be at least 1")]
    ZeroLoopBound,
    #[error("combinatorial budget exceeded: {extensions} loop words over {atoms} atoms (limit {limit})")]
    BudgetExceeded {
        atoms: usize,
        extensions: u128,
        limit: u128,
    },
}

/// Returns true if `s` matches `[A-Za-z][A-Za-z0-9_]*`.
pub fn is_ident(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() => chars.all(|c| c.is_ascii_alphanumeric() || c == '_'),
        _ => false,
    }
}

/// An atomic proposition, optionally grounded to a component or connector
/// (`isUnknown@Query_Service`).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Proposition {
    name: String,
    target: Option<String>,
}

impl Proposition {
    pub fn new(name: &str) -> Result<Self, LtlError> {
        if !is_ident(name) {
            return Err(LtlError::InvalidIdentifier(name.to_string()));
        }
        Ok(Self {
            name: name.to_string(),
            target: None,
        })
    }

    pub fn grounded(name: &str, target: &str) -> Result<Self, LtlError> {
        let mut p = Self::new(name)?;
        if !is_ident(target) {
            return Err(LtlError::InvalidIdentifier(target.to_string()));
        }
        p.target = Some(target.to_string());
        Ok(p)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn target(&self) -> Option<&str> {
        self.target.as_deref()
    }
}

impl fmt::Display for Proposition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.target {
            Some(t) => write!(f, "{}@{}", self.name, t),
            None => f.write_str(&self.name),
        }
    }
}

/// The set of grounded proposition names true at one observation instant.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Letter(BTreeSet<String>);

impl Letter {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.0.contains(name)
    }

    pub fn insert(&mut self, name: impl Into<String>) {
        self.0.insert(name.into());
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.0.iter().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Builds the letter selected by the bits of `mask` over `alphabet`.
    pub fn from_mask(alphabet: &[Proposition], mask: usize) -> Self {
        alphabet
            .iter()
            .enumerate()
            .filter(|(i, _)| mask & (1 << i) != 0)
            .map(|(_, p)| p.to_string())
            .collect()
    }
}

impl<S: Into<String>> FromIterator<S> for Letter {
    fn from_iter<I: IntoIterator<Item = S>>(iter: I) -> Self {
        Self(iter.into_iter().map(Into::into).collect())
    }
}

impl fmt::Display for Letter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (i, name) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            f.write_str(name)?;
        }
        f.write_str("}")
    }
}

impl FromStr for Letter {
    type Err = LtlError;

    /// Parses the `{a,b@c}` form produced by `Display`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let inner = s
            .trim()
            .strip_prefix('{')
            .and_then(|r| r.strip_suffix('}'))
            .ok_or_else(|| LtlError::InvalidIdentifier(s.to_string()))?;
        let mut letter = Letter::empty();
        for part in inner.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let valid = match part.split_once('@') {
                Some((n, t)) => is_ident(n) && is_ident(t),
                None => is_ident(part),
            };
            if !valid {
                return Err(LtlError::InvalidIdentifier(part.to_string()));
            }
            letter.insert(part);
        }
        Ok(letter)
    }
}

/// Three-valued verdict of a finite prefix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Top,
    Bottom,
    Inconclusive,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Top => "top",
            Verdict::Bottom => "bottom",
            Verdict::Inconclusive => "inconclusive",
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Verdict {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "top" => Ok(Verdict::Top),
            "bottom" => Ok(Verdict::Bottom),
            "inconclusive" => Ok(Verdict::Inconclusive),
            other => Err(format!("unknown verdict `{other}`")),
        }
    }
}

/// LTL abstract syntax tree.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum LtlFormula {
    True,
    False,
    Atom(Proposition),
    Not(Box<LtlFormula>),
    And(Box<LtlFormula>, Box<LtlFormula>),
    Or(Box<LtlFormula>, Box<LtlFormula>),
    Implies(Box<LtlFormula>, Box<LtlFormula>),
    Next(Box<LtlFormula>),
    Until(Box<LtlFormula>, Box<LtlFormula>),
    Release(Box<LtlFormula>, Box<LtlFormula>),
    Globally(Box<LtlFormula>),
    Finally(Box<LtlFormula>),
}

use LtlFormula as F;

impl LtlFormula {
    /// Ungrounded atom; panics on an invalid identifier.
    pub fn atom(name: &str) -> Self {
        F::Atom(Proposition::new(name).expect("valid identifier"))
    }

    #[allow(clippy::should_implement_trait)]
    pub fn not(f: LtlFormula) -> Self {
        F::Not(Box::new(f))
    }

    pub fn and(a: LtlFormula, b: LtlFormula) -> Self {
        F::And(Box::new(a), Box::new(b))
    }

    pub fn or(a: LtlFormula, b: LtlFormula) -> Self {
        F::Or(Box::new(a), Box::new(b))
    }

    pub fn implies(a: LtlFormula, b: LtlFormula) -> Self {
        F::Implies(Box::new(a), Box::new(b))
    }

    pub fn next(f: LtlFormula) -> Self {
        F::Next(Box::new(f))
    }

    pub fn until(a: LtlFormula, b: LtlFormula) -> Self {
        F::Until(Box::new(a), Box::new(b))
    }

    pub fn release(a: LtlFormula, b: LtlFormula) -> Self {
        F::Release(Box::new(a), Box::new(b))
    }

    pub fn globally(f: LtlFormula) -> Self {
        F::Globally(Box::new(f))
    }

    pub fn finally(f: LtlFormula) -> Self {
        F::Finally(Box::new(f))
    }

    pub fn children(&self) -> Vec<&LtlFormula> {
        match self {
            F::True | F::False | F::Atom(_) => vec![],
            F::Not(a) | F::Next(a) | F::Globally(a) | F::Finally(a) => vec![a],
            F::And(a, b) | F::Or(a, b) | F::Implies(a, b) | F::Until(a, b) | F::Release(a, b) => {
                vec![a, b]
            }
        }
    }

    /// Node count.
    pub fn size(&self) -> usize {
        1 + self.children().iter().map(|c| c.size()).sum::<usize>()
    }

    pub fn atoms(&self) -> BTreeSet<Proposition> {
        let mut out = BTreeSet::new();
        self.collect_atoms(&mut out);
        out
    }

    fn collect_atoms(&self, out: &mut BTreeSet<Proposition>) {
        if let F::Atom(p) = self {
            out.insert(p.clone());
        }
        for c in self.children() {
            c.collect_atoms(out);
        }
    }

    /// Rewrites every atom through `f`, leaving the temporal structure intact.
    pub fn map_atoms(&self, f: &mut dyn FnMut(&Proposition) -> Proposition) -> LtlFormula {
        let mut b = |x: &LtlFormula| Box::new(x.map_atoms(f));
        match self {
            F::True => F::True,
            F::False => F::False,
            F::Atom(p) => F::Atom(f(p)),
            F::Not(a) => F::Not(b(a)),
            F::Next(a) => F::Next(b(a)),
            F::Globally(a) => F::Globally(b(a)),
            F::Finally(a) => F::Finally(b(a)),
            F::And(x, y) => F::And(b(x), b(y)),
            F::Or(x, y) => F::Or(b(x), b(y)),
            F::Implies(x, y) => F::Implies(b(x), b(y)),
            F::Until(x, y) => F::Until(b(x), b(y)),
            F::Release(x, y) => F::Release(b(x), b(y)),
        }
    }

    /// Negation normal form: `Not` only directly above atoms, no `Implies`.
    pub fn to_nnf(&self) -> LtlFormula {
        nnf(self, false)
    }

    pub fn is_nnf(&self) -> bool {
        match self {
            F::Not(a) => matches!(**a, F::Atom(_)),
            F::Implies(..) => false,
            _ => self.children().iter().all(|c| c.is_nnf()),
        }
    }
}

fn nnf(f: &LtlFormula, neg: bool) -> LtlFormula {
    let bx = |g: &LtlFormula, n: bool| Box::new(nnf(g, n));
    match (f, neg) {
        (F::True, false) | (F::False, true) => F::True,
        (F::True, true) | (F::False, false) => F::False,
        (F::Atom(_), false) => f.clone(),
        (F::Atom(_), true) => F::Not(Box::new(f.clone())),
        (F::Not(a), n) => nnf(a, !n),
        (F::And(a, b), false) => F::And(bx(a, false), bx(b, false)),
        (F::And(a, b), true) => F::Or(bx(a, true), bx(b, true)),
        (F::Or(a, b), false) => F::Or(bx(a, false), bx(b, false)),
        (F::Or(a, b), true) => F::And(bx(a, true), bx(b, true)),
        (F::Implies(a, b), false) => F::Or(bx(a, true), bx(b, false)),
        (F::Implies(a, b), true) => F::And(bx(a, false), bx(b, true)),
        (F::Next(a), n) => F::Next(bx(a, n)),
        (F::Until(a, b), false) => F::Until(bx(a, false), bx(b, false)),
        (F::Until(a, b), true) => F::Release(bx(a, true), bx(b, true)),
        (F::Release(a, b), false) => F::Release(bx(a, false), bx(b, false)),
        (F::Release(a, b), true) => F::Until(bx(a, true), bx(b, true)),
        (F::Globally(a), false) => F::Globally(bx(a, false)),
        (F::Globally(a), true) => F::Finally(bx(a, true)),
        (F::Finally(a), false) => F::Finally(bx(a, false)),
        (F::Finally(a), true) => F::Globally(bx(a, true)),
    }
}

/// Prints in the surface grammar. Binary nodes are always parenthesized so
/// the output reparses to the same tree regardless of associativity.
impl fmt::Display for LtlFormula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            F::True => f.write_str("true"),
            F::False => f.write_str("false"),
            F::Atom(p) => write!(f, "{p}"),
            F::Not(a) => write!(f, "!{a}"),
            F::Next(a) => write!(f, "X {a}"),
            F::Globally(a) => write!(f, "G {a}"),
            F::Finally(a) => write!(f, "F {a}"),
            F::And(a, b) => write!(f, "({a} && {b})"),
            F::Or(a, b) => write!(f, "({a} || {b})"),
            F::Implies(a, b) => write!(f, "({a} -> {b})"),
            F::Until(a, b) => write!(f, "({a} U {b})"),
            F::Release(a, b) => write!(f, "({a} R {b})"),
        }
    }
}

impl FromStr for LtlFormula {
    type Err = LtlError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse(s)
    }
}

// ---------------------------------------------------------------------------
// Parser
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Ident(String),
    True,
    False,
    Not,
    And,
    Or,
    Implies,
    Globally,
    Finally,
    Next,
    Until,
    Release,
    At,
    LParen,
    RParen,
    Eof,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("identifier `{s}`"),
            Tok::True => "`true`".into(),
            Tok::False => "`false`".into(),
            Tok::Not => "`!`".into(),
            Tok::And => "`&&`".into(),
            Tok::Or => "`||`".into(),
            Tok::Implies => "`->`".into(),
            Tok::Globally => "`G`".into(),
            Tok::Finally => "`F`".into(),
            Tok::Next => "`X`".into(),
            Tok::Until => "`U`".into(),
            Tok::Release => "`R`".into(),
            Tok::At => "`@`".into(),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
            Tok::Eof => "end of input".into(),
        }
    }
}

#[derive(Debug, Clone)]
struct Spanned {
    tok: Tok,
    line: usize,
    column: usize,
}

/// Operators from other LTL dialects that this grammar deliberately omits.
const FOREIGN_OPERATORS: &[&str] = &["W", "M", "V"];

fn lex(text: &str) -> Result<Vec<Spanned>, LtlError> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0, 1, 1);
    while i < chars.len() {
        let c = chars[i];
        let (start_line, start_col) = (line, col);
        let push = |out: &mut Vec<Spanned>, tok| {
            out.push(Spanned {
                tok,
                line: start_line,
                column: start_col,
            })
        };
        if c == '\n' {
            i += 1;
            line += 1;
            col = 1;
            continue;
        }
        if c.is_whitespace() {
            i += 1;
            col += 1;
            continue;
        }
        if c.is_ascii_alphabetic() {
            let mut j = i;
            while j < chars.len() && (chars[j].is_ascii_alphanumeric() || chars[j] == '_') {
                j += 1;
            }
            let word: String = chars[i..j].iter().collect();
            let tok = match word.as_str() {
                "true" => Tok::True,
                "false" => Tok::False,
                "G" => Tok::Globally,
                "F" => Tok::Finally,
                "X" => Tok::Next,
                "U" => Tok::Until,
                "R" => Tok::Release,
                _ => Tok::Ident(word),
            };
            push(&mut out, tok);
            col += j - i;
            i = j;
            continue;
        }
        let two: String = chars[i..(i + 2).min(chars.len())].iter().collect();
        let (tok, width) = match (c, two.as_str()) {
            (_, "&&") => (Tok::And, 2),
            (_, "||") => (Tok::Or, 2),
            (_, "->") => (Tok::Implies, 2),
            ('!', _) => (Tok::Not, 1),
            ('@', _) => (Tok::At, 1),
            ('(', _) => (Tok::LParen, 1),
            (')', _) => (Tok::RParen, 1),
            _ => {
                let op = if "<=>&|-".contains(c) && two.len() == 2 && !two.ends_with(char::is_whitespace) {
                    two
                } else {
                    c.to_string()
                };
                return Err(LtlError::UnknownOperator {
                    line,
                    column: col,
                    op,
                });
            }
        };
        push(&mut out, tok);
        i += width;
        col += width;
    }
    out.push(Spanned {
        tok: Tok::Eof,
        line,
        column: col,
    });
    Ok(out)
}

struct Parser {
    toks: Vec<Spanned>,
    pos: usize,
}

const EXPECT_OPERAND: &[&str] = &["`!`", "`G`", "`F`", "`X`", "`true`", "`false`", "identifier", "`(`"];

impl Parser {
    fn peek(&self) -> &Spanned {
        &self.toks[self.pos]
    }

    fn bump(&mut self) -> Spanned {
        let t = self.toks[self.pos].clone();
        if t.tok != Tok::Eof {
            self.pos += 1;
        }
        t
    }

    fn error(&self, expected: &[&'static str]) -> LtlError {
        let t = self.peek();
        if let Tok::Ident(name) = &t.tok {
            if FOREIGN_OPERATORS.contains(&name.as_str()) && expected.contains(&"`&&`") {
                return LtlError::UnknownOperator {
                    line: t.line,
                    column: t.column,
                    op: name.clone(),
                };
            }
        }
        LtlError::Syntax {
            line: t.line,
            column: t.column,
            expected: expected.to_vec(),
            found: t.tok.describe(),
        }
    }

    fn binary(&mut self) -> Result<LtlFormula, LtlError> {
        let mut lhs = self.unary()?;
        loop {
            match self.peek().tok {
                Tok::And => {
                    self.bump();
                    lhs = F::and(lhs, self.unary()?);
                }
                Tok::Or => {
                    self.bump();
                    lhs = F::or(lhs, self.unary()?);
                }
                // Right-associative: the operator takes the whole remaining chain.
                Tok::Implies => {
                    self.bump();
                    return Ok(F::implies(lhs, self.binary()?));
                }
                Tok::Until => {
                    self.bump();
                    return Ok(F::until(lhs, self.binary()?));
                }
                Tok::Release => {
                    self.bump();
                    return Ok(F::release(lhs, self.binary()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn unary(&mut self) -> Result<LtlFormula, LtlError> {
        match self.peek().tok {
            Tok::Not => {
                self.bump();
                Ok(F::not(self.unary()?))
            }
            Tok::Globally => {
                self.bump();
                Ok(F::globally(self.unary()?))
            }
            Tok::Finally => {
                self.bump();
                Ok(F::finally(self.unary()?))
            }
            Tok::Next => {
                self.bump();
                Ok(F::next(self.unary()?))
            }
            _ => self.primary(),
        }
    }

    fn primary(&mut self) -> Result<LtlFormula, LtlError> {
        match self.peek().tok.clone() {
            Tok::True => {
                self.bump();
                Ok(F::True)
            }
            Tok::False => {
                self.bump();
                Ok(F::False)
            }
            Tok::Ident(name) => {
                self.bump();
                if self.peek().tok == Tok::At {
                    self.bump();
                    match self.peek().tok.clone() {
                        Tok::Ident(target) => {
                            self.bump();
                            Ok(F::Atom(Proposition::grounded(&name, &target)?))
                        }
                        _ => Err(self.error(&["identifier"])),
                    }
                } else {
                    Ok(F::Atom(Proposition::new(&name)?))
                }
            }
            Tok::LParen => {
                self.bump();
                let inner = self.binary()?;
                if self.peek().tok != Tok::RParen {
                    return Err(self.error(&["`&&`", "`||`", "`->`", "`U`", "`R`", "`)`"]));
                }
                self.bump();
                Ok(inner)
            }
            _ => Err(self.error(EXPECT_OPERAND)),
        }
    }
}

/// Parses a formula in the surface grammar:
///
/// ```text
/// formula := binary ;
/// binary  := unary (("&&" | "||" | "->" | "U" | "R") unary)* ;
/// unary   := ("!" | "G" | "F" | "X") unary | primary ;
/// primary := "true" | "false" | ident ("@" ident)? | "(" formula ")" ;
/// ```
///
/// All binary operators share one precedence level. `&&` and `||` fold to
/// the left; `->`, `U` and `R` take everything to their right.
pub fn parse(text: &str) -> Result<LtlFormula, LtlError> {
    let mut p = Parser {
        toks: lex(text)?,
        pos: 0,
    };
    let f = p.binary()?;
    if p.peek().tok != Tok::Eof {
        return Err(p.error(&["`&&`", "`||`", "`->`", "`U`", "`R`", "end of input"]));
    }
    Ok(f)
}

// ---------------------------------------------------------------------------
// Reference semantics
// ---------------------------------------------------------------------------

/// The infinite word `stem · loop^ω`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LassoWord {
    pub stem: Vec<Letter>,
    pub cycle: Vec<Letter>,
}

impl LassoWord {
    pub fn new(stem: Vec<Letter>, cycle: Vec<Letter>) -> Result<Self, LtlError> {
        if cycle.is_empty() {
            return Err(LtlError::EmptyLoop);
        }
        Ok(Self { stem, cycle })
    }

    pub fn len(&self) -> usize {
        self.stem.len() + self.cycle.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn letter(&self, pos: usize) -> &Letter {
        if pos < self.stem.len() {
            &self.stem[pos]
        } else {
            &self.cycle[pos - self.stem.len()]
        }
    }

    /// Successor position in the finite folded representation.
    pub fn succ(&self, pos: usize) -> usize {
        if pos + 1 == self.len() {
            self.stem.len()
        } else {
            pos + 1
        }
    }
}

/// Truth of `f` at every folded position of `w`. Until/Finally are least
/// fixpoints, Release/Globally greatest fixpoints, iterated to stability.
fn eval_positions(f: &LtlFormula, w: &LassoWord) -> Vec<bool> {
    let n = w.len();
    let fix = |init: bool, step: &dyn Fn(usize, &[bool]) -> bool| {
        let mut v = vec![init; n];
        loop {
            let mut changed = false;
            for i in (0..n).rev() {
                let nv = step(i, &v);
                if nv != v[i] {
                    v[i] = nv;
                    changed = true;
                }
            }
            if !changed {
                return v;
            }
        }
    };
    match f {
        F::True => vec![true; n],
        F::False => vec![false; n],
        F::Atom(p) => {
            let name = p.to_string();
            (0..n).map(|i| w.letter(i).contains(&name)).collect()
        }
        F::Not(a) => eval_positions(a, w).into_iter().map(|x| !x).collect(),
        F::And(a, b) => zip(eval_positions(a, w), eval_positions(b, w), |x, y| x && y),
        F::Or(a, b) => zip(eval_positions(a, w), eval_positions(b, w), |x, y| x || y),
        F::Implies(a, b) => zip(eval_positions(a, w), eval_positions(b, w), |x, y| !x || y),
        F::Next(a) => {
            let va = eval_positions(a, w);
            (0..n).map(|i| va[w.succ(i)]).collect()
        }
        F::Until(a, b) => {
            let (va, vb) = (eval_positions(a, w), eval_positions(b, w));
            fix(false, &|i, v| vb[i] || (va[i] && v[w.succ(i)]))
        }
        F::Release(a, b) => {
            let (va, vb) = (eval_positions(a, w), eval_positions(b, w));
            fix(true, &|i, v| vb[i] && (va[i] || v[w.succ(i)]))
        }
        F::Globally(a) => {
            let va = eval_positions(a, w);
            fix(true, &|i, v| va[i] && v[w.succ(i)])
        }
        F::Finally(a) => {
            let va = eval_positions(a, w);
            fix(false, &|i, v| va[i] || v[w.succ(i)])
        }
    }
}

fn zip(a: Vec<bool>, b: Vec<bool>, op: impl Fn(bool, bool) -> bool) -> Vec<bool> {
    a.into_iter().zip(b).map(|(x, y)| op(x, y)).collect()
}

/// Does `stem · loop^ω` satisfy `f`?
pub fn eval_lasso(f: &LtlFormula, w: &LassoWord) -> bool {
    eval_positions(f, w)[0]
}

/// Cap on the number of loop words a [`BoundedOracle`] enumerates.
pub const ORACLE_LOOP_BUDGET: u128 = 1 << 20;

/// Bounded three-valued reference semantics.
///
/// Considers every extension `prefix · w · v^ω` with `|w| <= stem_bound` and
/// `1 <= |v| <= loop_bound` over `2^atoms(f)`. Extensions that agree on which
/// subformulas hold at their first position are interchangeable, so the
/// oracle enumerates the loop words, evaluates each with [`eval_lasso`]'s
/// positional semantics, and folds stem letters in front by the one-step
/// expansion laws. The answer is exact relative to the bounds only.
#[derive(Debug, Clone)]
pub struct BoundedOracle {
    subformulas: Vec<LtlFormula>,
    children: Vec<Vec<usize>>,
    suffix_types: Vec<Vec<bool>>,
}

impl BoundedOracle {
    pub fn new(f: &LtlFormula, stem_bound: usize, loop_bound: usize) -> Result<Self, LtlError> {
        if loop_bound == 0 {
            return Err(LtlError::ZeroLoopBound);
        }
        let alphabet: Vec<Proposition> = f.atoms().into_iter().collect();
        let letters = 1u128 << alphabet.len().min(64);
        let loops: u128 = (1..=loop_bound as u32)
            .map(|j| letters.saturating_pow(j))
            .fold(0u128, |acc, x| acc.saturating_add(x));
        if alphabet.len() > 16 || loops > ORACLE_LOOP_BUDGET {
            return Err(LtlError::BudgetExceeded {
                atoms: alphabet.len(),
                extensions: loops,
                limit: ORACLE_LOOP_BUDGET,
            });
        }

        // Post-order subformula list; children precede parents, root last.
        let mut subformulas = Vec::new();
        let mut index = HashMap::new();
        collect_subformulas(f, &mut subformulas, &mut index);
        let children = subformulas
            .iter()
            .map(|g| g.children().iter().map(|c| index[*c]).collect())
            .collect();

        let mut oracle = Self {
            subformulas,
            children,
            suffix_types: Vec::new(),
        };

        let letter_set: Vec<Letter> = (0..1usize << alphabet.len())
            .map(|m| Letter::from_mask(&alphabet, m))
            .collect();
        let mut types = BTreeSet::new();
        for len in 1..=loop_bound {
            for_each_word(&letter_set, len, &mut |cycle| {
                let w = LassoWord {
                    stem: vec![],
                    cycle: cycle.to_vec(),
                };
                let t: Vec<bool> = oracle.subformulas.iter().map(|g| eval_lasso(g, &w)).collect();
                types.insert(t);
            });
        }
        let mut frontier: Vec<Vec<bool>> = types.iter().cloned().collect();
        for _ in 0..stem_bound {
            let mut next = Vec::new();
            for t in &frontier {
                for x in &letter_set {
                    let nt = oracle.prepend(x, t);
                    if types.insert(nt.clone()) {
                        next.push(nt);
                    }
                }
            }
            if next.is_empty() {
                break;
            }
            frontier = next;
        }
        oracle.suffix_types = types.into_iter().collect();
        Ok(oracle)
    }

    /// Subformula truth at the first position of `x · s`, given the truth
    /// vector `next` of `s`.
    fn prepend(&self, x: &Letter, next: &[bool]) -> Vec<bool> {
        let mut cur = vec![false; self.subformulas.len()];
        for (i, g) in self.subformulas.iter().enumerate() {
            let c = &self.children[i];
            cur[i] = match g {
                F::True => true,
                F::False => false,
                F::Atom(p) => x.contains(&p.to_string()),
                F::Not(_) => !cur[c[0]],
                F::And(..) => cur[c[0]] && cur[c[1]],
                F::Or(..) => cur[c[0]] || cur[c[1]],
                F::Implies(..) => !cur[c[0]] || cur[c[1]],
                F::Next(_) => next[c[0]],
                F::Until(..) => cur[c[1]] || (cur[c[0]] && next[i]),
                F::Release(..) => cur[c[1]] && (cur[c[0]] || next[i]),
                F::Globally(_) => cur[c[0]] && next[i],
                F::Finally(_) => cur[c[0]] || next[i],
            };
        }
        cur
    }

    /// Number of distinct suffix behaviours found within the bounds.
    pub fn suffix_type_count(&self) -> usize {
        self.suffix_types.len()
    }

    pub fn verdict(&self, prefix: &[Letter]) -> Verdict {
        let root = self.subformulas.len() - 1;
        let (mut some_sat, mut some_unsat) = (false, false);
        for t in &self.suffix_types {
            let mut cur = t.clone();
            for x in prefix.iter().rev() {
                cur = self.prepend(x, &cur);
            }
            if cur[root] {
                some_sat = true;
            } else {
                some_unsat = true;
            }
            if some_sat && some_unsat {
                return Verdict::Inconclusive;
            }
        }
        match (some_sat, some_unsat) {
            (true, false) => Verdict::Top,
            (false, true) => Verdict::Bottom,
            _ => Verdict::Inconclusive,
        }
    }
}

fn collect_subformulas(f: &LtlFormula, out: &mut Vec<LtlFormula>, index: &mut HashMap<LtlFormula, usize>) {
    if index.contains_key(f) {
        return;
    }
    for c in f.children() {
        collect_subformulas(c, out, index);
    }
    index.insert(f.clone(), out.len());
    out.push(f.clone());
}

/// Calls `visit` with every word of exactly `len` letters drawn from `letters`.
pub fn for_each_word(letters: &[Letter], len: usize, visit: &mut dyn FnMut(&[Letter])) {
    fn go(letters: &[Letter], len: usize, buf: &mut Vec<Letter>, visit: &mut dyn FnMut(&[Letter])) {
        if buf.len() == len {
            visit(buf);
            return;
        }
        for x in letters {
            buf.push(x.clone());
            go(letters, len, buf, visit);
            buf.pop();
        }
    }
    go(letters, len, &mut Vec::with_capacity(len), visit);
}

/// One-shot form of [`BoundedOracle::verdict`].
pub fn verdict_oracle(
    f: &LtlFormula,
    prefix: &[Letter],
    stem_bound: usize,
    loop_bound: usize,
) -> Result<Verdict, LtlError> {
    Ok(BoundedOracle::new(f, stem_bound, loop_bound)?.verdict(prefix))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn letter(names: &[&str]) -> Letter {
        names.iter().copied().collect()
    }

    fn a() -> LtlFormula {
        F::atom("a")
    }

    fn b() -> LtlFormula {
        F::atom("b")
    }

    #[test]
    fn parses_table_formulas() {
        assert_eq!(parse("G (isUnknown)").unwrap(), F::globally(F::atom("isUnknown")));
        assert_eq!(parse("true").unwrap(), F::True);
        assert_eq!(
            parse("G (isStarted && lowException)").unwrap(),
            F::globally(F::and(F::atom("isStarted"), F::atom("lowException")))
        );
    }

    #[test]
    fn grounded_atoms() {
        let f = parse("G(!isUnknown@Query_Service)").unwrap();
        let p = Proposition::grounded("isUnknown", "Query_Service").unwrap();
        assert_eq!(f, F::globally(F::not(F::Atom(p.clone()))));
        assert_eq!(p.to_string(), "isUnknown@Query_Service");
    }

    #[test]
    fn associativity() {
        assert_eq!(parse("a && b && c").unwrap(), F::and(F::and(a(), b()), F::atom("c")));
        assert_eq!(parse("a U b U c").unwrap(), F::until(a(), F::until(b(), F::atom("c"))));
        assert_eq!(parse("a -> b -> c").unwrap(), F::implies(a(), F::implies(b(), F::atom("c"))));
        assert_eq!(parse("a && b -> c").unwrap(), F::implies(F::and(a(), b()), F::atom("c")));
        assert_eq!(parse("!G a").unwrap(), F::not(F::globally(a())));
        assert_eq!(parse(" G\n F  a ").unwrap(), F::globally(F::finally(a())));
    }

    #[test]
    fn syntax_error_reports_column() {
        match parse("G((").unwrap_err() {
            LtlError::Syntax { line, column, expected, found } => {
                assert_eq!((line, column), (1, 4));
                assert!(expected.contains(&"`(`"));
                assert_eq!(found, "end of input");
            }
            e => panic!("unexpected {e:?}"),
        }
        assert!(matches!(parse("a b"), Err(LtlError::Syntax { column: 3, .. })));
        assert!(matches!(parse("a\n&& )"), Err(LtlError::Syntax { line: 2, column: 4, .. })));
    }

    #[test]
    fn unknown_operators() {
        assert!(matches!(parse("a W b"), Err(LtlError::UnknownOperator { ref op, .. }) if op == "W"));
        assert!(matches!(parse("a & b"), Err(LtlError::UnknownOperator { .. })));
        assert!(matches!(parse("a <-> b"), Err(LtlError::UnknownOperator { column: 3, .. })));
        // `W` on its own is still a usable proposition name.
        assert_eq!(parse("W").unwrap(), F::atom("W"));
    }

    #[test]
    fn unparse_reparses() {
        for text in ["G (isUnknown)", "!(a U X b) R F c", "G(a@x -> F b@y)", "false || true"] {
            let f = parse(text).unwrap();
            assert_eq!(parse(&f.to_string()).unwrap(), f);
        }
    }

    #[test]
    fn nnf_examples() {
        assert_eq!(F::not(F::globally(a())).to_nnf(), F::finally(F::not(a())));
        assert_eq!(F::not(F::and(a(), b())).to_nnf(), F::or(F::not(a()), F::not(b())));
        assert_eq!(F::not(F::until(a(), b())).to_nnf(), F::release(F::not(a()), F::not(b())));
        assert_eq!(F::not(F::True).to_nnf(), F::False);
        let f = parse("!(a -> X !(b R G a))").unwrap().to_nnf();
        assert!(f.is_nnf(), "{f}");
    }

    #[test]
    fn atoms_examples() {
        let phi2 = parse("G(isStarted && lowException)").unwrap();
        let names: Vec<String> = phi2.atoms().iter().map(|p| p.to_string()).collect();
        assert_eq!(names, ["isStarted", "lowException"]);
        assert!(F::True.atoms().is_empty());
        assert_eq!(parse("G(!isUnknown)").unwrap().atoms().len(), 1);
    }

    #[test]
    fn eval_lasso_examples() {
        let ga = F::globally(a());
        assert!(eval_lasso(&ga, &LassoWord::new(vec![], vec![letter(&["a"])]).unwrap()));
        assert!(!eval_lasso(&ga, &LassoWord::new(vec![letter(&["a"])], vec![letter(&[])]).unwrap()));
        let aub = F::until(a(), b());
        assert!(eval_lasso(&aub, &LassoWord::new(vec![letter(&["a"])], vec![letter(&["b"])]).unwrap()));
        assert!(!eval_lasso(&aub, &LassoWord::new(vec![letter(&["a"])], vec![letter(&["a"])]).unwrap()));
        let gfa = F::globally(F::finally(a()));
        let w = LassoWord::new(vec![], vec![letter(&[]), letter(&[]), letter(&["a"])]).unwrap();
        assert!(eval_lasso(&gfa, &w));
        assert!(!eval_lasso(&F::finally(F::globally(a())), &w));
        assert_eq!(LassoWord::new(vec![], vec![]), Err(LtlError::EmptyLoop));
    }

    #[test]
    fn oracle_examples() {
        let g_not_u = parse("G(!u)").unwrap();
        assert_eq!(verdict_oracle(&g_not_u, &[letter(&["u"])], 4, 4).unwrap(), Verdict::Bottom);
        assert_eq!(verdict_oracle(&g_not_u, &[letter(&[])], 4, 4).unwrap(), Verdict::Inconclusive);
        assert_eq!(verdict_oracle(&F::True, &[letter(&[])], 1, 1).unwrap(), Verdict::Top);
        assert_eq!(verdict_oracle(&F::finally(a()), &[letter(&["a"])], 4, 4).unwrap(), Verdict::Top);
        assert_eq!(verdict_oracle(&F::True, &[], 0, 0), Err(LtlError::ZeroLoopBound));
    }

    #[test]
    fn oracle_budget() {
        let wide = parse("G(a && b && c && d && e)").unwrap();
        assert!(matches!(verdict_oracle(&wide, &[], 4, 4), Err(LtlError::BudgetExceeded { atoms: 5, .. })));
        assert!(verdict_oracle(&wide, &[], 1, 2).is_ok());
    }

    #[test]
    fn letter_text_form() {
        let l = letter(&["lowException", "isStarted"]);
        assert_eq!(l.to_string(), "{isStarted,lowException}");
        assert_eq!(l.to_string().parse::<Letter>().unwrap(), l);
        assert_eq!("{}".parse::<Letter>().unwrap(), Letter::empty());
        assert!("{a b}".parse::<Letter>().is_err());
    }
}
