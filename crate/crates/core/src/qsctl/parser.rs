//! Recursive-descent parser for QsCTL formulas.
//!
//! Binding strength, loosest first: `->` (right associative), `|`, `&`, then
//! the prefix operators `!`, `AG`, `AF`, `AX`, `AX@aut`, `@state`. A
//! quantifier body extends as far right as possible.

use std::collections::BTreeSet;

use super::ast::{AtomicProp, QuantRange, Quantifier, StateRef, TemporalFormula as TF};
use super::QsctlError;
use crate::rg::GlobalState;
use crate::system::CsmSystem;

const KEYWORDS: &[&str] = &[
    "AG", "AF", "AX", "A", "W", "in", "forall", "exists", "all", "proj", "FUT", "true", "false",
];

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Sym(&'static str),
}

fn tokenize(text: &str) -> Result<Vec<(usize, usize, Tok)>, QsctlError> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        if c.is_ascii_alphanumeric() || c == '_' {
            let start = i;
            while i < bytes.len() && ((bytes[i] as char).is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push((start, i, Tok::Ident(text[start..i].to_string())));
            continue;
        }
        if text[i..].starts_with("->") {
            out.push((i, i + 2, Tok::Sym("->")));
            i += 2;
            continue;
        }
        let sym = match c {
            '!' => "!",
            '&' => "&",
            '|' => "|",
            '(' => "(",
            ')' => ")",
            '[' => "[",
            ']' => "]",
            '{' => "{",
            '}' => "}",
            '<' => "<",
            '>' => ">",
            ',' => ",",
            '.' => ".",
            '@' => "@",
            ':' => ":",
            _ => {
                return Err(QsctlError::Syntax {
                    pos: i,
                    message: format!("unexpected character `{c}`"),
                })
            }
        };
        out.push((i, i + 1, Tok::Sym(sym)));
        i += 1;
    }
    Ok(out)
}

struct Parser<'a> {
    toks: Vec<(usize, usize, Tok)>,
    at: usize,
    len: usize,
    sys: &'a CsmSystem,
    scope: Vec<String>,
}

impl Parser<'_> {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.at).map(|t| &t.2)
    }

    fn peek_at(&self, k: usize) -> Option<&Tok> {
        self.toks.get(self.at + k).map(|t| &t.2)
    }

    fn pos(&self) -> usize {
        self.toks.get(self.at).map(|t| t.0).unwrap_or(self.len)
    }

    fn err<T>(&self, message: impl Into<String>) -> Result<T, QsctlError> {
        Err(QsctlError::Syntax {
            pos: self.pos(),
            message: message.into(),
        })
    }

    fn is_sym(&self, s: &str) -> bool {
        matches!(self.peek(), Some(Tok::Sym(x)) if *x == s)
    }

    fn is_kw(&self, k: &str) -> bool {
        matches!(self.peek(), Some(Tok::Ident(x)) if x == k)
    }

    fn expect_sym(&mut self, s: &str) -> Result<(), QsctlError> {
        if self.is_sym(s) {
            self.at += 1;
            Ok(())
        } else {
            self.err(format!("expected `{s}`"))
        }
    }

    fn expect_kw(&mut self, k: &str) -> Result<(), QsctlError> {
        if self.is_kw(k) {
            self.at += 1;
            Ok(())
        } else {
            self.err(format!("expected `{k}`"))
        }
    }

    fn ident(&mut self) -> Result<String, QsctlError> {
        match self.peek() {
            Some(Tok::Ident(s)) => {
                let s = s.clone();
                self.at += 1;
                Ok(s)
            }
            _ => self.err("expected identifier"),
        }
    }

    fn implies(&mut self) -> Result<TF, QsctlError> {
        let lhs = self.or()?;
        if self.is_sym("->") {
            self.at += 1;
            let rhs = self.implies()?;
            return Ok(TF::implies(lhs, rhs));
        }
        Ok(lhs)
    }

    fn or(&mut self) -> Result<TF, QsctlError> {
        let mut lhs = self.and()?;
        while self.is_sym("|") {
            self.at += 1;
            let rhs = self.and()?;
            lhs = TF::or(lhs, rhs);
        }
        Ok(lhs)
    }

    fn and(&mut self) -> Result<TF, QsctlError> {
        let mut lhs = self.unary()?;
        while self.is_sym("&") {
            self.at += 1;
            let rhs = self.unary()?;
            lhs = TF::and(lhs, rhs);
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<TF, QsctlError> {
        if self.is_sym("!") {
            self.at += 1;
            return Ok(TF::not(self.unary()?));
        }
        if self.is_sym("@") {
            self.at += 1;
            let r = self.state_ref()?;
            return Ok(TF::at(r, self.unary()?));
        }
        if self.is_kw("AG") {
            self.at += 1;
            return Ok(TF::ag(self.unary()?));
        }
        if self.is_kw("AF") {
            self.at += 1;
            return Ok(TF::af(self.unary()?));
        }
        if self.is_kw("AX") {
            let end = self.toks[self.at].1;
            self.at += 1;
            // `AX@A` with no space names an automaton; `AX @s` is next of an at-formula
            if self.is_sym("@") && self.toks[self.at].0 == end {
                self.at += 1;
                let name = self.ident()?;
                let a = self
                    .sys
                    .automaton_index(&name)
                    .ok_or(QsctlError::UnknownAutomaton(name))?;
                return Ok(TF::axa(a, self.unary()?));
            }
            return Ok(TF::ax(self.unary()?));
        }
        if self.is_kw("forall") || self.is_kw("exists") {
            let quantifier = if self.is_kw("forall") {
                Quantifier::ForAll
            } else {
                Quantifier::Exists
            };
            self.at += 1;
            let var = self.ident()?;
            if KEYWORDS.contains(&var.as_str()) {
                return self.err(format!("`{var}` is reserved"));
            }
            self.expect_kw("in")?;
            let range = self.range()?;
            self.expect_sym(":")?;
            self.scope.push(var.clone());
            let body = self.implies();
            self.scope.pop();
            return Ok(TF::quant(quantifier, var, range, body?));
        }
        self.primary()
    }

    fn primary(&mut self) -> Result<TF, QsctlError> {
        if self.is_sym("(") {
            self.at += 1;
            let f = self.implies()?;
            self.expect_sym(")")?;
            return Ok(f);
        }
        if self.is_kw("A") && matches!(self.peek_at(1), Some(Tok::Sym("["))) {
            self.at += 2;
            let hold = self.implies()?;
            self.expect_kw("W")?;
            let release = self.implies()?;
            self.expect_sym("]")?;
            return Ok(TF::aw(hold, release));
        }
        if self.is_kw("in") {
            self.at += 1;
            return Ok(TF::Atom(self.in_target()?));
        }
        let name = match self.peek() {
            Some(Tok::Ident(s)) => s.clone(),
            _ => return self.err("expected a formula"),
        };
        self.at += 1;
        match name.as_str() {
            "true" | "1" => Ok(TF::Const(true)),
            "false" | "0" => Ok(TF::Const(false)),
            k if KEYWORDS.contains(&k) => {
                self.at -= 1;
                self.err(format!("unexpected keyword `{k}`"))
            }
            _ => self
                .sys
                .alphabet
                .lookup(&name)
                .map(TF::signal)
                .ok_or(QsctlError::UnknownSignal(name)),
        }
    }

    fn in_target(&mut self) -> Result<AtomicProp, QsctlError> {
        if self.is_sym("<") {
            return Ok(AtomicProp::InState(StateRef::Fixed(self.designator()?)));
        }
        if self.is_sym("{") {
            return Ok(AtomicProp::InSet(self.designator_set()?));
        }
        if matches!(self.peek_at(1), Some(Tok::Sym("."))) {
            let (automaton, state) = self.projection()?;
            return Ok(AtomicProp::InProj { automaton, state });
        }
        Ok(AtomicProp::InState(self.var_ref()?))
    }

    fn var_ref(&mut self) -> Result<StateRef, QsctlError> {
        let name = self.ident()?;
        if self.scope.contains(&name) {
            Ok(StateRef::Var(name))
        } else {
            Err(QsctlError::UnboundVariable(name))
        }
    }

    fn state_ref(&mut self) -> Result<StateRef, QsctlError> {
        if self.is_sym("<") {
            Ok(StateRef::Fixed(self.designator()?))
        } else {
            self.var_ref()
        }
    }

    fn projection(&mut self) -> Result<(usize, usize), QsctlError> {
        let aut_name = self.ident()?;
        self.expect_sym(".")?;
        let state_name = self.ident()?;
        let a = self
            .sys
            .automaton_index(&aut_name)
            .ok_or_else(|| QsctlError::UnknownAutomaton(aut_name.clone()))?;
        let s = self.sys.automata[a]
            .state_index(&state_name)
            .ok_or(QsctlError::UnknownState {
                automaton: aut_name,
                state: state_name,
            })?;
        Ok((a, s))
    }

    fn designator(&mut self) -> Result<GlobalState, QsctlError> {
        self.expect_sym("<")?;
        let mut tuple: Vec<Option<u32>> = vec![None; self.sys.automata.len()];
        loop {
            let (a, s) = self.projection()?;
            if tuple[a].is_some() {
                return Err(QsctlError::BadDesignator(format!(
                    "automaton `{}` named twice",
                    self.sys.automata[a].name
                )));
            }
            tuple[a] = Some(s as u32);
            if self.is_sym(",") {
                self.at += 1;
                continue;
            }
            self.expect_sym(">")?;
            break;
        }
        match tuple.iter().position(Option::is_none) {
            Some(missing) => Err(QsctlError::BadDesignator(format!(
                "no component given for automaton `{}`",
                self.sys.automata[missing].name
            ))),
            None => Ok(GlobalState(tuple.into_iter().map(Option::unwrap).collect())),
        }
    }

    fn designator_set(&mut self) -> Result<BTreeSet<GlobalState>, QsctlError> {
        self.expect_sym("{")?;
        let mut set = BTreeSet::new();
        if self.is_sym("}") {
            self.at += 1;
            return Ok(set);
        }
        loop {
            set.insert(self.designator()?);
            if self.is_sym(",") {
                self.at += 1;
                continue;
            }
            self.expect_sym("}")?;
            return Ok(set);
        }
    }

    fn range(&mut self) -> Result<QuantRange, QsctlError> {
        if self.is_sym("{") {
            return Ok(QuantRange::Explicit(self.designator_set()?));
        }
        if self.is_kw("all") {
            self.at += 1;
            return Ok(QuantRange::AllStates);
        }
        if self.is_kw("proj") {
            self.at += 1;
            let (automaton, state) = self.projection()?;
            return Ok(QuantRange::Proj { automaton, state });
        }
        if self.is_kw("FUT") {
            self.at += 1;
            self.expect_sym("(")?;
            let r = self.state_ref()?;
            self.expect_sym(")")?;
            return Ok(QuantRange::Future(r));
        }
        self.err("expected a quantifier range")
    }
}

/// Parses a closed QsCTL formula; names are resolved against `sys`.
pub fn parse_temporal(text: &str, sys: &CsmSystem) -> Result<TF, QsctlError> {
    let toks = tokenize(text)?;
    if toks.is_empty() {
        return Err(QsctlError::Syntax {
            pos: 0,
            message: "empty formula".into(),
        });
    }
    let mut p = Parser {
        toks,
        at: 0,
        len: text.len(),
        sys,
        scope: Vec::new(),
    };
    let f = p.implies()?;
    if p.at != p.toks.len() {
        return p.err("trailing input");
    }
    Ok(f)
}

/// Parses a formula file: one formula per non-empty line, `#` comments.
pub fn parse_formula_file(text: &str, sys: &CsmSystem) -> Result<Vec<TF>, QsctlError> {
    text.lines()
        .enumerate()
        .filter_map(|(i, line)| {
            let body = line.split('#').next().unwrap_or("").trim();
            (!body.is_empty()).then_some((i, body))
        })
        .map(|(i, body)| {
            parse_temporal(body, sys).map_err(|e| QsctlError::Line {
                line: i + 1,
                source: Box::new(e),
            })
        })
        .collect()
}
