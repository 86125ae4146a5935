//! Boolean guard formulas over a finite signal alphabet.
//!
//! Surface syntax: identifiers, `1`, `0`, `!`, `&`, `|` and parentheses, with
//! precedence `!` > `&` > `|`. Both binary operators associate to the left.

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Largest support the tautology check will enumerate.
pub const MAX_TAUTOLOGY_SUPPORT: usize = 24;

/// Dense index of an interned signal name.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SignalId(pub u32);

impl SignalId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// Interning table for signal names.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Alphabet {
    names: Vec<String>,
    index: HashMap<String, SignalId>,
}

impl Alphabet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Returns the id of `name`, interning it on first use.
    pub fn intern(&mut self, name: &str) -> SignalId {
        if let Some(&id) = self.index.get(name) {
            return id;
        }
        let id = SignalId(self.names.len() as u32);
        self.names.push(name.to_string());
        self.index.insert(name.to_string(), id);
        id
    }

    pub fn lookup(&self, name: &str) -> Option<SignalId> {
        self.index.get(name).copied()
    }

    pub fn name(&self, id: SignalId) -> &str {
        &self.names[id.index()]
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = SignalId> + '_ {
        (0..self.names.len() as u32).map(SignalId)
    }
}

impl<S: AsRef<str>> FromIterator<S> for Alphabet {
    fn from_iter<I: IntoIterator<Item = S>>(iter: I) -> Self {
        let mut alphabet = Alphabet::new();
        for name in iter {
            alphabet.intern(name.as_ref());
        }
        alphabet
    }
}

/// Returns true for strings usable as signal, state or automaton names.
pub fn is_identifier(s: &str) -> bool {
    !s.is_empty() && s.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BoolFormula {
    Atom(SignalId),
    ConstTrue,
    ConstFalse,
    Not(Box<BoolFormula>),
    And(Box<BoolFormula>, Box<BoolFormula>),
    Or(Box<BoolFormula>, Box<BoolFormula>),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FormulaError {
    #[error("syntax error at offset {pos}: {message}")]
    Syntax { pos: usize, message: String },
    #[error("unknown signal `{0}`")]
    UnknownSignal(String),
    #[error("formula support has {0} signals, tautology check is capped at {MAX_TAUTOLOGY_SUPPORT}")]
    SupportTooLarge(usize),
}

impl BoolFormula {
    pub fn atom(id: SignalId) -> Self {
        BoolFormula::Atom(id)
    }

    #[allow(clippy::should_implement_trait)]
    pub fn not(f: BoolFormula) -> Self {
        BoolFormula::Not(Box::new(f))
    }

    pub fn and(a: BoolFormula, b: BoolFormula) -> Self {
        BoolFormula::And(Box::new(a), Box::new(b))
    }

    pub fn or(a: BoolFormula, b: BoolFormula) -> Self {
        BoolFormula::Or(Box::new(a), Box::new(b))
    }

    /// Conjunction that folds away boolean constants.
    pub fn and_simplified(a: BoolFormula, b: BoolFormula) -> Self {
        match (a, b) {
            (BoolFormula::ConstTrue, x) | (x, BoolFormula::ConstTrue) => x,
            (BoolFormula::ConstFalse, _) | (_, BoolFormula::ConstFalse) => BoolFormula::ConstFalse,
            (a, b) => BoolFormula::and(a, b),
        }
    }

    /// Disjunction that folds away boolean constants.
    pub fn or_simplified(a: BoolFormula, b: BoolFormula) -> Self {
        match (a, b) {
            (BoolFormula::ConstFalse, x) | (x, BoolFormula::ConstFalse) => x,
            (BoolFormula::ConstTrue, _) | (_, BoolFormula::ConstTrue) => BoolFormula::ConstTrue,
            (a, b) if a == b => a,
            (a, b) => BoolFormula::or(a, b),
        }
    }

    /// Evaluates the formula; `active` decides which signals are present.
    pub fn eval_with(&self, active: &dyn Fn(SignalId) -> bool) -> bool {
        match self {
            BoolFormula::Atom(s) => active(*s),
            BoolFormula::ConstTrue => true,
            BoolFormula::ConstFalse => false,
            BoolFormula::Not(f) => !f.eval_with(active),
            BoolFormula::And(a, b) => a.eval_with(active) && b.eval_with(active),
            BoolFormula::Or(a, b) => a.eval_with(active) || b.eval_with(active),
        }
    }

    pub fn eval(&self, active: &BTreeSet<SignalId>) -> bool {
        self.eval_with(&|s| active.contains(&s))
    }

    /// Evaluation against a sorted slice of active signals.
    pub fn eval_sorted(&self, active: &[SignalId]) -> bool {
        self.eval_with(&|s| active.binary_search(&s).is_ok())
    }

    pub fn support(&self) -> BTreeSet<SignalId> {
        let mut out = BTreeSet::new();
        self.collect_support(&mut out);
        out
    }

    fn collect_support(&self, out: &mut BTreeSet<SignalId>) {
        match self {
            BoolFormula::Atom(s) => {
                out.insert(*s);
            }
            BoolFormula::ConstTrue | BoolFormula::ConstFalse => {}
            BoolFormula::Not(f) => f.collect_support(out),
            BoolFormula::And(a, b) | BoolFormula::Or(a, b) => {
                a.collect_support(out);
                b.collect_support(out);
            }
        }
    }

    /// True iff the formula holds under every assignment of its support.
    pub fn is_tautology(&self) -> Result<bool, FormulaError> {
        let support: Vec<SignalId> = self.support().into_iter().collect();
        if support.len() > MAX_TAUTOLOGY_SUPPORT {
            return Err(FormulaError::SupportTooLarge(support.len()));
        }
        let n = support.len();
        for mask in 0u64..(1u64 << n) {
            let holds = self.eval_with(&|s| match support.binary_search(&s) {
                Ok(i) => mask & (1 << i) != 0,
                Err(_) => false,
            });
            if !holds {
                return Ok(false);
            }
        }
        Ok(true)
    }

    pub fn display<'a>(&'a self, alphabet: &'a Alphabet) -> impl fmt::Display + 'a {
        DisplayBool { f: self, alphabet }
    }
}

struct DisplayBool<'a> {
    f: &'a BoolFormula,
    alphabet: &'a Alphabet,
}

impl DisplayBool<'_> {
    // 0 = or, 1 = and, 2 = unary/atom
    fn write(&self, f: &BoolFormula, ctx: u8, out: &mut fmt::Formatter<'_>) -> fmt::Result {
        match f {
            BoolFormula::Atom(s) => write!(out, "{}", self.alphabet.name(*s)),
            BoolFormula::ConstTrue => write!(out, "1"),
            BoolFormula::ConstFalse => write!(out, "0"),
            BoolFormula::Not(inner) => {
                write!(out, "!")?;
                self.write(inner, 2, out)
            }
            BoolFormula::And(a, b) => {
                if ctx > 1 {
                    write!(out, "(")?;
                }
                self.write(a, 1, out)?;
                write!(out, " & ")?;
                // right operand gets parenthesised so left associativity survives
                self.write(b, 2, out)?;
                if ctx > 1 {
                    write!(out, ")")?;
                }
                Ok(())
            }
            BoolFormula::Or(a, b) => {
                if ctx > 0 {
                    write!(out, "(")?;
                }
                self.write(a, 0, out)?;
                write!(out, " | ")?;
                self.write(b, 1, out)?;
                if ctx > 0 {
                    write!(out, ")")?;
                }
                Ok(())
            }
        }
    }
}

impl fmt::Display for DisplayBool<'_> {
    fn fmt(&self, out: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.write(self.f, 0, out)
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Not,
    And,
    Or,
    LParen,
    RParen,
}

fn tokenize(text: &str) -> Result<Vec<(usize, Tok)>, FormulaError> {
    let mut out = Vec::new();
    let mut chars = text.char_indices().peekable();
    while let Some(&(pos, c)) = chars.peek() {
        match c {
            c if c.is_whitespace() => {
                chars.next();
            }
            '!' => {
                chars.next();
                out.push((pos, Tok::Not));
            }
            '&' => {
                chars.next();
                out.push((pos, Tok::And));
            }
            '|' => {
                chars.next();
                out.push((pos, Tok::Or));
            }
            '(' => {
                chars.next();
                out.push((pos, Tok::LParen));
            }
            ')' => {
                chars.next();
                out.push((pos, Tok::RParen));
            }
            c if c.is_ascii_alphanumeric() || c == '_' => {
                let mut ident = String::new();
                while let Some(&(_, c)) = chars.peek() {
                    if c.is_ascii_alphanumeric() || c == '_' {
                        ident.push(c);
                        chars.next();
                    } else {
                        break;
                    }
                }
                out.push((pos, Tok::Ident(ident)));
            }
            other => {
                return Err(FormulaError::Syntax {
                    pos,
                    message: format!("unexpected character `{other}`"),
                })
            }
        }
    }
    Ok(out)
}

struct Parser<'a> {
    toks: Vec<(usize, Tok)>,
    at: usize,
    end: usize,
    alphabet: &'a Alphabet,
}

impl Parser<'_> {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.at).map(|(_, t)| t)
    }

    fn pos(&self) -> usize {
        self.toks.get(self.at).map(|(p, _)| *p).unwrap_or(self.end)
    }

    fn syntax<T>(&self, message: impl Into<String>) -> Result<T, FormulaError> {
        Err(FormulaError::Syntax {
            pos: self.pos(),
            message: message.into(),
        })
    }

    fn or_expr(&mut self) -> Result<BoolFormula, FormulaError> {
        let mut lhs = self.and_expr()?;
        while self.peek() == Some(&Tok::Or) {
            self.at += 1;
            let rhs = self.and_expr()?;
            lhs = BoolFormula::or(lhs, rhs);
        }
        Ok(lhs)
    }

    fn and_expr(&mut self) -> Result<BoolFormula, FormulaError> {
        let mut lhs = self.unary()?;
        while self.peek() == Some(&Tok::And) {
            self.at += 1;
            let rhs = self.unary()?;
            lhs = BoolFormula::and(lhs, rhs);
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<BoolFormula, FormulaError> {
        match self.peek().cloned() {
            Some(Tok::Not) => {
                self.at += 1;
                Ok(BoolFormula::not(self.unary()?))
            }
            Some(Tok::LParen) => {
                self.at += 1;
                let inner = self.or_expr()?;
                if self.peek() != Some(&Tok::RParen) {
                    return self.syntax("expected `)`");
                }
                self.at += 1;
                Ok(inner)
            }
            Some(Tok::Ident(name)) => {
                self.at += 1;
                match name.as_str() {
                    "1" => Ok(BoolFormula::ConstTrue),
                    "0" => Ok(BoolFormula::ConstFalse),
                    _ => self
                        .alphabet
                        .lookup(&name)
                        .map(BoolFormula::Atom)
                        .ok_or(FormulaError::UnknownSignal(name)),
                }
            }
            Some(t) => self.syntax(format!("unexpected token {t:?}")),
            None => self.syntax("unexpected end of formula"),
        }
    }
}

/// Parses a guard, resolving identifiers against `alphabet`.
pub fn parse_bool_formula(text: &str, alphabet: &Alphabet) -> Result<BoolFormula, FormulaError> {
    let toks = tokenize(text)?;
    if toks.is_empty() {
        return Err(FormulaError::Syntax {
            pos: 0,
            message: "empty formula".into(),
        });
    }
    let mut parser = Parser {
        toks,
        at: 0,
        end: text.len(),
        alphabet,
    };
    let f = parser.or_expr()?;
    if parser.at != parser.toks.len() {
        return parser.syntax("trailing input");
    }
    Ok(f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pqm() -> Alphabet {
        ["q", "p", "m"].into_iter().collect()
    }

    #[test]
    fn and_binds_tighter_than_or() {
        let a = pqm();
        let f = parse_bool_formula("q | p & m", &a).unwrap();
        let (q, p, m) = (SignalId(0), SignalId(1), SignalId(2));
        assert_eq!(
            f,
            BoolFormula::or(
                BoolFormula::Atom(q),
                BoolFormula::and(BoolFormula::Atom(p), BoolFormula::Atom(m))
            )
        );
        // q alone fulfils the guard
        assert!(f.eval(&[q].into_iter().collect()));
        assert!(!f.eval(&[p].into_iter().collect()));
    }

    #[test]
    fn constants() {
        let a = pqm();
        assert_eq!(parse_bool_formula("1", &a).unwrap(), BoolFormula::ConstTrue);
        assert_eq!(parse_bool_formula("0", &a).unwrap(), BoolFormula::ConstFalse);
        assert!(BoolFormula::ConstTrue.eval(&BTreeSet::new()));
        let all: BTreeSet<_> = a.ids().collect();
        assert!(!BoolFormula::ConstFalse.eval(&all));
    }

    #[test]
    fn unknown_signal_is_named() {
        let a: Alphabet = ["q"].into_iter().collect();
        assert_eq!(
            parse_bool_formula("!(q | p)", &a),
            Err(FormulaError::UnknownSignal("p".into()))
        );
    }

    #[test]
    fn syntax_errors_report_position() {
        let a = pqm();
        match parse_bool_formula("q & (p", &a) {
            Err(FormulaError::Syntax { pos, .. }) => assert_eq!(pos, 6),
            other => panic!("{other:?}"),
        }
        match parse_bool_formula("q p", &a) {
            Err(FormulaError::Syntax { pos, .. }) => assert_eq!(pos, 2),
            other => panic!("{other:?}"),
        }
        assert!(parse_bool_formula("   ", &a).is_err());
        assert!(parse_bool_formula("q ^ p", &a).is_err());
    }

    #[test]
    fn tautologies() {
        let a = pqm();
        let q = SignalId(0);
        let lem = BoolFormula::or(BoolFormula::Atom(q), BoolFormula::not(BoolFormula::Atom(q)));
        assert!(lem.is_tautology().unwrap());
        assert!(!BoolFormula::Atom(q).is_tautology().unwrap());
        assert!(BoolFormula::ConstTrue.is_tautology().unwrap());
        assert!(!BoolFormula::ConstFalse.is_tautology().unwrap());
        let f = parse_bool_formula("p & m | !p | !m", &a).unwrap();
        assert!(f.is_tautology().unwrap());
    }

    #[test]
    fn support_scan() {
        let a = pqm();
        let f = parse_bool_formula("q | p & m", &a).unwrap();
        assert_eq!(f.support().len(), 3);
        assert!(BoolFormula::ConstTrue.support().is_empty());
        let g = parse_bool_formula("!q", &a).unwrap();
        assert_eq!(g.support(), [SignalId(0)].into_iter().collect());
    }

    #[test]
    fn tautology_cap() {
        let names: Vec<String> = (0..30).map(|i| format!("s{i}")).collect();
        let a: Alphabet = names.iter().collect();
        let f = a.ids().map(BoolFormula::Atom).reduce(BoolFormula::or).unwrap();
        assert_eq!(f.is_tautology(), Err(FormulaError::SupportTooLarge(30)));
    }

    fn arb_formula() -> impl Strategy<Value = BoolFormula> {
        let leaf = prop_oneof![
            (0u32..5).prop_map(|i| BoolFormula::Atom(SignalId(i))),
            Just(BoolFormula::ConstTrue),
            Just(BoolFormula::ConstFalse),
        ];
        leaf.prop_recursive(5, 40, 2, |inner| {
            prop_oneof![
                inner.clone().prop_map(BoolFormula::not),
                (inner.clone(), inner.clone()).prop_map(|(a, b)| BoolFormula::and(a, b)),
                (inner.clone(), inner).prop_map(|(a, b)| BoolFormula::or(a, b)),
            ]
        })
    }

    fn five() -> Alphabet {
        ["a", "b", "c", "d", "e"].into_iter().collect()
    }

    proptest! {
        #[test]
        fn negation_flips(f in arb_formula(), mask in 0u32..32) {
            let active = |s: SignalId| mask & (1 << s.0) != 0;
            prop_assert_eq!(BoolFormula::not(f.clone()).eval_with(&active), !f.eval_with(&active));
        }

        #[test]
        fn tautology_matches_full_enumeration(f in arb_formula()) {
            // enumerate over the whole five-signal alphabet, not just the support
            let brute = (0u32..32).all(|mask| f.eval_with(&|s: SignalId| mask & (1 << s.0) != 0));
            prop_assert_eq!(f.is_tautology().unwrap(), brute);
        }

        #[test]
        fn print_parse_roundtrip(f in arb_formula()) {
            let a = five();
            let text = f.display(&a).to_string();
            prop_assert_eq!(parse_bool_formula(&text, &a).unwrap(), f);
        }
    }
}
