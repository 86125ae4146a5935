use std::collections::BTreeSet;
use std::fmt;

use crate::formula::SignalId;
use crate::rg::GlobalState;
use crate::system::CsmSystem;

/// Reference to a global state: a fixed tuple or a quantified variable.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum StateRef {
    Fixed(GlobalState),
    Var(String),
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum AtomicProp {
    /// The signal is generated in the state.
    Signal(SignalId),
    /// `in s`
    InState(StateRef),
    /// `in { s1, s2 }`; only static sets are accepted.
    InSet(BTreeSet<GlobalState>),
    /// `in A.x`: the projection on automaton `automaton` is `state`.
    InProj { automaton: usize, state: usize },
}

impl AtomicProp {
    pub fn display<'a>(&'a self, sys: &'a CsmSystem) -> impl fmt::Display + 'a {
        Shown {
            item: Item::Atom(self),
            sys,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum QuantRange {
    Explicit(BTreeSet<GlobalState>),
    AllStates,
    Proj {
        automaton: usize,
        state: usize,
    },
    /// States reachable from the given state; never static.
    Future(StateRef),
}

impl QuantRange {
    pub fn is_static(&self) -> bool {
        !matches!(self, QuantRange::Future(_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Quantifier {
    ForAll,
    Exists,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TemporalFormula {
    Const(bool),
    Atom(AtomicProp),
    Not(Box<TemporalFormula>),
    And(Box<TemporalFormula>, Box<TemporalFormula>),
    Or(Box<TemporalFormula>, Box<TemporalFormula>),
    Implies(Box<TemporalFormula>, Box<TemporalFormula>),
    AG(Box<TemporalFormula>),
    AF(Box<TemporalFormula>),
    AX(Box<TemporalFormula>),
    /// Weak until `A[ hold W release ]`.
    AW(Box<TemporalFormula>, Box<TemporalFormula>),
    /// Next step of one automaton.
    AXa(usize, Box<TemporalFormula>),
    Quant {
        quantifier: Quantifier,
        var: String,
        range: QuantRange,
        body: Box<TemporalFormula>,
    },
    At(StateRef, Box<TemporalFormula>),
}

pub use TemporalFormula as TF;

impl TemporalFormula {
    pub fn signal(s: SignalId) -> Self {
        TF::Atom(AtomicProp::Signal(s))
    }

    #[allow(clippy::should_implement_trait)]
    pub fn not(f: TF) -> Self {
        TF::Not(Box::new(f))
    }

    pub fn and(a: TF, b: TF) -> Self {
        TF::And(Box::new(a), Box::new(b))
    }

    pub fn or(a: TF, b: TF) -> Self {
        TF::Or(Box::new(a), Box::new(b))
    }

    pub fn implies(a: TF, b: TF) -> Self {
        TF::Implies(Box::new(a), Box::new(b))
    }

    pub fn ag(f: TF) -> Self {
        TF::AG(Box::new(f))
    }

    pub fn af(f: TF) -> Self {
        TF::AF(Box::new(f))
    }

    pub fn ax(f: TF) -> Self {
        TF::AX(Box::new(f))
    }

    pub fn aw(hold: TF, release: TF) -> Self {
        TF::AW(Box::new(hold), Box::new(release))
    }

    pub fn axa(automaton: usize, f: TF) -> Self {
        TF::AXa(automaton, Box::new(f))
    }

    pub fn at(s: StateRef, f: TF) -> Self {
        TF::At(s, Box::new(f))
    }

    pub fn quant(quantifier: Quantifier, var: impl Into<String>, range: QuantRange, body: TF) -> Self {
        TF::Quant {
            quantifier,
            var: var.into(),
            range,
            body: Box::new(body),
        }
    }

    /// Number of temporal operators on the deepest nesting path.
    pub fn temporal_depth(&self) -> usize {
        match self {
            TF::Const(_) | TF::Atom(_) => 0,
            TF::Not(f) | TF::At(_, f) | TF::Quant { body: f, .. } => f.temporal_depth(),
            TF::And(a, b) | TF::Or(a, b) | TF::Implies(a, b) => a.temporal_depth().max(b.temporal_depth()),
            TF::AG(f) | TF::AF(f) | TF::AX(f) | TF::AXa(_, f) => 1 + f.temporal_depth(),
            TF::AW(a, b) => 1 + a.temporal_depth().max(b.temporal_depth()),
        }
    }

    pub fn contains_next(&self) -> bool {
        match self {
            TF::Const(_) | TF::Atom(_) => false,
            TF::AX(_) | TF::AXa(..) => true,
            TF::Not(f) | TF::At(_, f) | TF::Quant { body: f, .. } | TF::AG(f) | TF::AF(f) => f.contains_next(),
            TF::And(a, b) | TF::Or(a, b) | TF::Implies(a, b) | TF::AW(a, b) => a.contains_next() || b.contains_next(),
        }
    }

    /// Replaces free occurrences of variable `var` by the fixed state `by`.
    pub fn substitute(&self, var: &str, by: &GlobalState) -> TF {
        let sub_ref = |r: &StateRef| match r {
            StateRef::Var(v) if v == var => StateRef::Fixed(by.clone()),
            other => other.clone(),
        };
        match self {
            TF::Const(_) => self.clone(),
            TF::Atom(AtomicProp::InState(r)) => TF::Atom(AtomicProp::InState(sub_ref(r))),
            TF::Atom(_) => self.clone(),
            TF::Not(f) => TF::not(f.substitute(var, by)),
            TF::And(a, b) => TF::and(a.substitute(var, by), b.substitute(var, by)),
            TF::Or(a, b) => TF::or(a.substitute(var, by), b.substitute(var, by)),
            TF::Implies(a, b) => TF::implies(a.substitute(var, by), b.substitute(var, by)),
            TF::AG(f) => TF::ag(f.substitute(var, by)),
            TF::AF(f) => TF::af(f.substitute(var, by)),
            TF::AX(f) => TF::ax(f.substitute(var, by)),
            TF::AW(a, b) => TF::aw(a.substitute(var, by), b.substitute(var, by)),
            TF::AXa(a, f) => TF::axa(*a, f.substitute(var, by)),
            TF::At(r, f) => TF::at(sub_ref(r), f.substitute(var, by)),
            TF::Quant {
                quantifier,
                var: inner,
                range,
                body,
            } => {
                let range = match range {
                    QuantRange::Future(r) => QuantRange::Future(sub_ref(r)),
                    other => other.clone(),
                };
                // an inner binder of the same name shadows `var`
                let body = if inner == var {
                    (**body).clone()
                } else {
                    body.substitute(var, by)
                };
                TF::quant(*quantifier, inner.clone(), range, body)
            }
        }
    }

    /// Parseable rendering using names from `sys`.
    pub fn display<'a>(&'a self, sys: &'a CsmSystem) -> impl fmt::Display + 'a {
        Shown {
            item: Item::Formula(self),
            sys,
        }
    }
}

enum Item<'a> {
    Formula(&'a TemporalFormula),
    Atom(&'a AtomicProp),
}

struct Shown<'a> {
    item: Item<'a>,
    sys: &'a CsmSystem,
}

fn write_ref(r: &StateRef, sys: &CsmSystem, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    match r {
        StateRef::Fixed(s) => write!(f, "{}", s.display(sys)),
        StateRef::Var(v) => write!(f, "{v}"),
    }
}

fn write_set(set: &BTreeSet<GlobalState>, sys: &CsmSystem, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    write!(f, "{{")?;
    for (i, s) in set.iter().enumerate() {
        if i > 0 {
            write!(f, ", ")?;
        }
        write!(f, "{}", s.display(sys))?;
    }
    write!(f, "}}")
}

fn write_proj(automaton: usize, state: usize, sys: &CsmSystem, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    let aut = &sys.automata[automaton];
    write!(f, "{}.{}", aut.name, aut.states[state].name)
}

fn write_atom(a: &AtomicProp, sys: &CsmSystem, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    match a {
        AtomicProp::Signal(s) => write!(f, "{}", sys.signal_name(*s)),
        AtomicProp::InState(r) => {
            write!(f, "in ")?;
            write_ref(r, sys, f)
        }
        AtomicProp::InSet(set) => {
            write!(f, "in ")?;
            write_set(set, sys, f)
        }
        AtomicProp::InProj { automaton, state } => {
            write!(f, "in ")?;
            write_proj(*automaton, *state, sys, f)
        }
    }
}

fn write_formula(x: &TemporalFormula, sys: &CsmSystem, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    let bin = |a: &TF, op: &str, b: &TF, f: &mut fmt::Formatter<'_>| -> fmt::Result {
        write!(f, "(")?;
        write_formula(a, sys, f)?;
        write!(f, " {op} ")?;
        write_formula(b, sys, f)?;
        write!(f, ")")
    };
    match x {
        TF::Const(true) => write!(f, "true"),
        TF::Const(false) => write!(f, "false"),
        TF::Atom(a) => write_atom(a, sys, f),
        TF::Not(g) => {
            write!(f, "!")?;
            write_formula(g, sys, f)
        }
        TF::And(a, b) => bin(a, "&", b, f),
        TF::Or(a, b) => bin(a, "|", b, f),
        TF::Implies(a, b) => bin(a, "->", b, f),
        TF::AG(g) => {
            write!(f, "AG ")?;
            write_formula(g, sys, f)
        }
        TF::AF(g) => {
            write!(f, "AF ")?;
            write_formula(g, sys, f)
        }
        TF::AX(g) => {
            write!(f, "AX ")?;
            write_formula(g, sys, f)
        }
        TF::AXa(a, g) => {
            write!(f, "AX@{} ", sys.automata[*a].name)?;
            write_formula(g, sys, f)
        }
        TF::AW(a, b) => {
            write!(f, "A[ ")?;
            write_formula(a, sys, f)?;
            write!(f, " W ")?;
            write_formula(b, sys, f)?;
            write!(f, " ]")
        }
        TF::At(r, g) => {
            write!(f, "@")?;
            write_ref(r, sys, f)?;
            write!(f, " ")?;
            write_formula(g, sys, f)
        }
        TF::Quant {
            quantifier,
            var,
            range,
            body,
        } => {
            let q = match quantifier {
                Quantifier::ForAll => "forall",
                Quantifier::Exists => "exists",
            };
            write!(f, "({q} {var} in ")?;
            match range {
                QuantRange::Explicit(set) => write_set(set, sys, f)?,
                QuantRange::AllStates => write!(f, "all")?,
                QuantRange::Proj { automaton, state } => {
                    write!(f, "proj ")?;
                    write_proj(*automaton, *state, sys, f)?;
                }
                QuantRange::Future(r) => {
                    write!(f, "FUT(")?;
                    write_ref(r, sys, f)?;
                    write!(f, ")")?;
                }
            }
            write!(f, ": ")?;
            write_formula(body, sys, f)?;
            write!(f, ")")
        }
    }
}

impl fmt::Display for Shown<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.item {
            Item::Formula(x) => write_formula(x, self.sys, f),
            Item::Atom(a) => write_atom(a, self.sys, f),
        }
    }
}
