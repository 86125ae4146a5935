//! Atomic-proposition sets and their completion.
//!
//! Completion adds the propositions a reduced graph needs to keep next-step
//! operators meaningful, and decides whether reduction is permitted at all.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::ast::{AtomicProp, QuantRange, StateRef, TemporalFormula as TF};
use crate::formula::SignalId;
use crate::rg::{GlobalState, Graph, StateId};
use crate::system::CsmSystem;

/// Fixed-width bit set indexed by atom position in a [`PropSet`].
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LabelSet(Vec<u64>);

impl LabelSet {
    pub fn with_capacity(bits: usize) -> Self {
        LabelSet(vec![0; bits.div_ceil(64)])
    }

    pub fn insert(&mut self, i: usize) {
        if self.0.len() <= i / 64 {
            self.0.resize(i / 64 + 1, 0);
        }
        self.0[i / 64] |= 1 << (i % 64);
    }

    pub fn remove(&mut self, i: usize) {
        if let Some(w) = self.0.get_mut(i / 64) {
            *w &= !(1 << (i % 64));
        }
    }

    pub fn contains(&self, i: usize) -> bool {
        self.0.get(i / 64).is_some_and(|w| w & (1 << (i % 64)) != 0)
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.0
            .iter()
            .enumerate()
            .flat_map(|(w, bits)| (0..64).filter(move |b| bits & (1 << b) != 0).map(move |b| w * 64 + b))
    }
}

/// A state set that cannot be skipped by reduction, kept symbolic so it can
/// be decided per state without the full graph.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Protection {
    State(GlobalState),
    Proj { automaton: usize, state: usize },
    All,
}

impl Protection {
    pub fn covers(&self, s: &GlobalState) -> bool {
        match self {
            Protection::State(t) => t == s,
            Protection::Proj { automaton, state } => s.component(*automaton) == *state,
            Protection::All => true,
        }
    }
}

/// A completed proposition set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PropSet {
    atoms: Vec<AtomicProp>,
    pub reduction_allowed: bool,
    pub protected: BTreeSet<Protection>,
    /// Automata whose next-step operator may appear anywhere in a formula.
    pub free_local_next: BTreeSet<usize>,
    /// Why reduction was disabled, when it was.
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct PropSetSummary {
    pub atoms: Vec<String>,
    pub reduction_allowed: bool,
    pub protected: Vec<String>,
    pub notes: Vec<String>,
}

impl PropSet {
    /// A proposition set over the given atoms with no protection.
    pub fn from_atoms(atoms: impl IntoIterator<Item = AtomicProp>) -> Self {
        let atoms: BTreeSet<AtomicProp> = atoms.into_iter().collect();
        PropSet {
            atoms: atoms.into_iter().collect(),
            reduction_allowed: true,
            protected: BTreeSet::new(),
            free_local_next: BTreeSet::new(),
            notes: Vec::new(),
        }
    }

    pub fn atoms(&self) -> &[AtomicProp] {
        &self.atoms
    }

    pub fn contains(&self, atom: &AtomicProp) -> bool {
        self.atoms.binary_search(atom).is_ok()
    }

    pub fn is_protected(&self, s: &GlobalState) -> bool {
        self.protected.iter().any(|p| p.covers(s))
    }

    /// Ids of protected states in `g`.
    pub fn protected_states(&self, g: &Graph) -> BTreeSet<StateId> {
        (0..g.len()).filter(|&s| self.is_protected(g.state(s))).collect()
    }

    /// Atoms true in a state with the given tuple and outputs.
    pub fn label(&self, state: &GlobalState, outputs: &[SignalId]) -> LabelSet {
        let mut set = LabelSet::with_capacity(self.atoms.len());
        for (i, atom) in self.atoms.iter().enumerate() {
            let holds = match atom {
                AtomicProp::Signal(s) => outputs.binary_search(s).is_ok(),
                AtomicProp::InState(StateRef::Fixed(t)) => t == state,
                AtomicProp::InState(StateRef::Var(_)) => false,
                AtomicProp::InSet(set) => set.contains(state),
                AtomicProp::InProj { automaton, state: p } => state.component(*automaton) == *p,
            };
            if holds {
                set.insert(i);
            }
        }
        set
    }

    /// The same set with the given atoms removed (used for fault injection).
    pub fn without_atoms(&self, drop: &[usize]) -> PropSet {
        let mut out = self.clone();
        out.atoms = self
            .atoms
            .iter()
            .enumerate()
            .filter(|(i, _)| !drop.contains(i))
            .map(|(_, a)| a.clone())
            .collect();
        out
    }

    pub fn summary(&self, sys: &CsmSystem) -> PropSetSummary {
        PropSetSummary {
            atoms: self.atoms.iter().map(|a| a.display(sys).to_string()).collect(),
            reduction_allowed: self.reduction_allowed,
            protected: self
                .protected
                .iter()
                .map(|p| match p {
                    Protection::State(s) => s.display(sys).to_string(),
                    Protection::Proj { automaton, state } => {
                        let aut = &sys.automata[*automaton];
                        format!("proj {}.{}", aut.name, aut.states[*state].name)
                    }
                    Protection::All => "all".to_string(),
                })
                .collect(),
            notes: self.notes.clone(),
        }
    }
}

/// Syntactic atoms of `f`. A membership test on a variable bound to an
/// explicit range is recorded once per range member.
pub fn collect_atoms(f: &TF) -> BTreeSet<AtomicProp> {
    let mut out = BTreeSet::new();
    collect_into(f, &mut BTreeMap::new(), &mut out);
    out
}

fn collect_into<'a>(f: &'a TF, env: &mut BTreeMap<&'a str, &'a QuantRange>, out: &mut BTreeSet<AtomicProp>) {
    match f {
        TF::Const(_) => {}
        TF::Atom(AtomicProp::InState(StateRef::Var(v))) => {
            if let Some(QuantRange::Explicit(members)) = env.get(v.as_str()) {
                out.extend(members.iter().map(|m| AtomicProp::InState(StateRef::Fixed(m.clone()))));
            }
        }
        TF::Atom(a) => {
            out.insert(a.clone());
        }
        TF::Not(g) | TF::AG(g) | TF::AF(g) | TF::AX(g) | TF::AXa(_, g) | TF::At(_, g) => collect_into(g, env, out),
        TF::And(a, b) | TF::Or(a, b) | TF::Implies(a, b) | TF::AW(a, b) => {
            collect_into(a, env, out);
            collect_into(b, env, out);
        }
        TF::Quant { var, range, body, .. } => {
            let shadowed = env.insert(var.as_str(), range);
            collect_into(body, env, out);
            match shadowed {
                Some(r) => env.insert(var.as_str(), r),
                None => env.remove(var.as_str()),
            };
        }
    }
}

/// The state a subformula is evaluated at, as far as it is statically known.
#[derive(Debug, Clone)]
enum Anchor {
    Initial,
    States(BTreeSet<GlobalState>),
    Proj { automaton: usize, state: usize },
    All,
    Dynamic,
}

struct Completion<'a> {
    sys: &'a CsmSystem,
    atoms: BTreeSet<AtomicProp>,
    protected: BTreeSet<Protection>,
    free_local_next: BTreeSet<usize>,
    notes: Vec<String>,
}

impl Completion<'_> {
    fn disable(&mut self, why: impl Into<String>) {
        let why = why.into();
        if !self.notes.contains(&why) {
            self.notes.push(why);
        }
    }

    fn all_projections(&mut self, automaton: usize) {
        for state in 0..self.sys.automata[automaton].states.len() {
            self.atoms.insert(AtomicProp::InProj { automaton, state });
        }
    }

    fn walk<'f>(&mut self, f: &'f TF, anchor: &Anchor, env: &mut BTreeMap<&'f str, &'f QuantRange>) {
        match f {
            TF::Const(_) => {}
            TF::Atom(AtomicProp::InState(StateRef::Var(v))) => match env.get(v.as_str()) {
                Some(QuantRange::Explicit(members)) => {
                    let members = members.clone();
                    self.atoms
                        .extend(members.into_iter().map(|m| AtomicProp::InState(StateRef::Fixed(m))));
                }
                Some(QuantRange::Future(_)) => {}
                _ => self.disable(format!(
                    "membership test `in {v}` ranges over an unenumerated state set"
                )),
            },
            TF::Atom(a) => {
                self.atoms.insert(a.clone());
            }
            TF::Not(g) => self.walk(g, anchor, env),
            TF::And(a, b) | TF::Or(a, b) | TF::Implies(a, b) => {
                self.walk(a, anchor, env);
                self.walk(b, anchor, env);
            }
            TF::AG(g) | TF::AF(g) => self.walk(g, &Anchor::Dynamic, env),
            TF::AW(a, b) => {
                self.walk(a, &Anchor::Dynamic, env);
                self.walk(b, &Anchor::Dynamic, env);
            }
            TF::AX(g) => {
                match anchor {
                    Anchor::Initial => {
                        let init = GlobalState(self.sys.initial_tuple());
                        self.atoms.insert(AtomicProp::InState(StateRef::Fixed(init)));
                    }
                    Anchor::States(states) => {
                        for s in states {
                            self.atoms.insert(AtomicProp::InState(StateRef::Fixed(s.clone())));
                        }
                    }
                    Anchor::Proj { .. } | Anchor::All => {
                        self.disable("next-step operator over a range whose members are not enumerated")
                    }
                    Anchor::Dynamic => self.disable("next-step operator does not refer to a static state"),
                }
                self.walk(g, &Anchor::Dynamic, env);
            }
            TF::AXa(a, g) => {
                match anchor {
                    Anchor::Initial => {
                        let init = self.sys.initial_tuple();
                        self.atoms.insert(AtomicProp::InProj {
                            automaton: *a,
                            state: init[*a] as usize,
                        });
                    }
                    Anchor::States(states) => {
                        for s in states {
                            self.atoms.insert(AtomicProp::InProj {
                                automaton: *a,
                                state: s.component(*a),
                            });
                        }
                    }
                    Anchor::Proj { automaton, state } if automaton == a => {
                        self.atoms.insert(AtomicProp::InProj {
                            automaton: *a,
                            state: *state,
                        });
                    }
                    Anchor::Proj { .. } | Anchor::All | Anchor::Dynamic => {
                        self.all_projections(*a);
                        self.free_local_next.insert(*a);
                    }
                }
                self.walk(g, &Anchor::Dynamic, env);
            }
            TF::At(r, g) => {
                let inner = match r {
                    StateRef::Fixed(s) => {
                        self.protected.insert(Protection::State(s.clone()));
                        Anchor::States([s.clone()].into_iter().collect())
                    }
                    StateRef::Var(v) => match env.get(v.as_str()) {
                        Some(QuantRange::Explicit(m)) => Anchor::States(m.clone()),
                        Some(QuantRange::Proj { automaton, state }) => Anchor::Proj {
                            automaton: *automaton,
                            state: *state,
                        },
                        Some(QuantRange::AllStates) => Anchor::All,
                        Some(QuantRange::Future(_)) | None => Anchor::Dynamic,
                    },
                };
                self.walk(g, &inner, env);
            }
            TF::Quant { var, range, body, .. } => {
                match range {
                    QuantRange::Explicit(members) => {
                        self.protected.extend(members.iter().cloned().map(Protection::State));
                    }
                    QuantRange::Proj { automaton, state } => {
                        self.protected.insert(Protection::Proj {
                            automaton: *automaton,
                            state: *state,
                        });
                    }
                    QuantRange::AllStates => {
                        self.protected.insert(Protection::All);
                    }
                    QuantRange::Future(_) => self.disable("quantifier range is not static"),
                }
                let shadowed = env.insert(var.as_str(), range);
                self.walk(body, anchor, env);
                match shadowed {
                    Some(r) => env.insert(var.as_str(), r),
                    None => env.remove(var.as_str()),
                };
            }
        }
    }
}

/// Completes the atoms of `formulas` so that reduction preserves them.
///
/// Top-level formulas are anchored at the initial state.
pub fn complete_props(formulas: &[TF], sys: &CsmSystem) -> PropSet {
    let mut c = Completion {
        sys,
        atoms: BTreeSet::new(),
        protected: BTreeSet::new(),
        free_local_next: BTreeSet::new(),
        notes: Vec::new(),
    };
    for f in formulas {
        c.atoms.extend(collect_atoms(f));
        c.walk(f, &Anchor::Initial, &mut BTreeMap::new());
    }
    PropSet {
        atoms: c.atoms.into_iter().collect(),
        reduction_allowed: c.notes.is_empty(),
        protected: c.protected,
        free_local_next: c.free_local_next,
        notes: c.notes,
    }
}
