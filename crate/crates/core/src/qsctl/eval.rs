//! Bottom-up fixpoint evaluation of QsCTL over an explicit graph.
//!
//! Quantifiers are expanded by substitution against the graph before the
//! fixpoint labeling runs, so the labeling itself only sees closed formulas.

use std::collections::{BTreeSet, VecDeque};

use super::ast::{AtomicProp, QuantRange, Quantifier, StateRef, TemporalFormula as TF};
use super::QsctlError;
use crate::rg::{GlobalState, Graph, StateId};
use crate::system::CsmSystem;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Evaluation {
    pub holds_initially: bool,
    /// Satisfaction per state id.
    pub satisfying: Vec<bool>,
}

impl Evaluation {
    pub fn satisfying_set(&self) -> BTreeSet<StateId> {
        self.satisfying
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(|(i, _)| i)
            .collect()
    }
}

pub fn evaluate(g: &Graph, f: &TF, sys: &CsmSystem) -> Result<Evaluation, QsctlError> {
    let closed = expand(g, f, sys)?;
    let satisfying = Checker { g, sys }.sat(&closed)?;
    Ok(Evaluation {
        holds_initially: satisfying[g.initial()],
        satisfying,
    })
}

fn fixed(r: &StateRef) -> Result<&GlobalState, QsctlError> {
    match r {
        StateRef::Fixed(s) => Ok(s),
        StateRef::Var(v) => Err(QsctlError::UnboundVariable(v.clone())),
    }
}

/// Tuples of the states in `g`, plus those represented by a surviving state.
fn universe(g: &Graph) -> Vec<GlobalState> {
    let mut all: Vec<GlobalState> = g.states().to_vec();
    all.extend(g.representatives().keys().cloned());
    all
}

fn range_members(g: &Graph, range: &QuantRange, sys: &CsmSystem) -> Result<Vec<GlobalState>, QsctlError> {
    match range {
        QuantRange::Explicit(set) => {
            for s in set {
                if g.resolve(s).is_none() {
                    return Err(QsctlError::StateNotInGraph(s.display(sys).to_string()));
                }
            }
            Ok(set.iter().cloned().collect())
        }
        QuantRange::AllStates => Ok(universe(g)),
        QuantRange::Proj { automaton, state } => Ok(universe(g)
            .into_iter()
            .filter(|s| s.component(*automaton) == *state)
            .collect()),
        QuantRange::Future(r) => {
            let from = fixed(r)?;
            let id = g
                .resolve(from)
                .ok_or_else(|| QsctlError::StateNotInGraph(from.display(sys).to_string()))?;
            let seen = g.reachable_from(id);
            Ok((0..g.len()).filter(|&s| seen[s]).map(|s| g.state(s).clone()).collect())
        }
    }
}

/// Replaces every quantifier by the conjunction or disjunction of its instances.
pub fn expand(g: &Graph, f: &TF, sys: &CsmSystem) -> Result<TF, QsctlError> {
    Ok(match f {
        TF::Const(_) | TF::Atom(_) => f.clone(),
        TF::Not(a) => TF::not(expand(g, a, sys)?),
        TF::And(a, b) => TF::and(expand(g, a, sys)?, expand(g, b, sys)?),
        TF::Or(a, b) => TF::or(expand(g, a, sys)?, expand(g, b, sys)?),
        TF::Implies(a, b) => TF::implies(expand(g, a, sys)?, expand(g, b, sys)?),
        TF::AG(a) => TF::ag(expand(g, a, sys)?),
        TF::AF(a) => TF::af(expand(g, a, sys)?),
        TF::AX(a) => TF::ax(expand(g, a, sys)?),
        TF::AW(a, b) => TF::aw(expand(g, a, sys)?, expand(g, b, sys)?),
        TF::AXa(k, a) => TF::axa(*k, expand(g, a, sys)?),
        TF::At(r, a) => TF::at(r.clone(), expand(g, a, sys)?),
        TF::Quant {
            quantifier,
            var,
            range,
            body,
        } => {
            let members = range_members(g, range, sys)?;
            let mut parts = Vec::with_capacity(members.len());
            for m in &members {
                parts.push(expand(g, &body.substitute(var, m), sys)?);
            }
            let (unit, join): (bool, fn(TF, TF) -> TF) = match quantifier {
                Quantifier::ForAll => (true, TF::and),
                Quantifier::Exists => (false, TF::or),
            };
            parts.into_iter().reduce(join).unwrap_or(TF::Const(unit))
        }
    })
}

struct Checker<'a> {
    g: &'a Graph,
    sys: &'a CsmSystem,
}

impl Checker<'_> {
    fn sat(&self, f: &TF) -> Result<Vec<bool>, QsctlError> {
        let n = self.g.len();
        Ok(match f {
            TF::Const(b) => vec![*b; n],
            TF::Atom(a) => self.atom(a)?,
            TF::Not(a) => self.sat(a)?.into_iter().map(|b| !b).collect(),
            TF::And(a, b) => zip(self.sat(a)?, self.sat(b)?, |x, y| x && y),
            TF::Or(a, b) => zip(self.sat(a)?, self.sat(b)?, |x, y| x || y),
            TF::Implies(a, b) => zip(self.sat(a)?, self.sat(b)?, |x, y| !x || y),
            TF::AX(a) => {
                let inner = self.sat(a)?;
                (0..n).map(|s| self.g.successors(s).iter().all(|&t| inner[t])).collect()
            }
            TF::AG(a) => {
                // AG p = not E[true U not p]
                let inner = self.sat(a)?;
                let all = vec![true; n];
                let bad: Vec<bool> = inner.iter().map(|b| !b).collect();
                self.exists_until(&all, &bad).into_iter().map(|b| !b).collect()
            }
            TF::AF(a) => self.always_eventually(&self.sat(a)?),
            TF::AW(a, b) => {
                // A[p W q] = not E[!q U (!p & !q)]
                let hold = self.sat(a)?;
                let release = self.sat(b)?;
                let path: Vec<bool> = release.iter().map(|q| !q).collect();
                let target: Vec<bool> = hold.iter().zip(&release).map(|(p, q)| !p && !q).collect();
                self.exists_until(&path, &target).into_iter().map(|b| !b).collect()
            }
            TF::AXa(k, a) => self.local_next(*k, &self.sat(a)?),
            TF::At(r, a) => {
                let s = fixed(r)?;
                let id = self
                    .g
                    .resolve(s)
                    .ok_or_else(|| QsctlError::StateNotInGraph(s.display(self.sys).to_string()))?;
                let value = self.sat(a)?[id];
                vec![value; n]
            }
            TF::Quant { .. } => return Err(QsctlError::UnexpandedQuantifier),
        })
    }

    fn atom(&self, a: &AtomicProp) -> Result<Vec<bool>, QsctlError> {
        let g = self.g;
        let n = g.len();
        Ok(match a {
            AtomicProp::Signal(sig) => (0..n).map(|s| g.outputs(s).binary_search(sig).is_ok()).collect(),
            AtomicProp::InState(r) => {
                let t = fixed(r)?;
                (0..n).map(|s| g.state(s) == t).collect()
            }
            AtomicProp::InSet(set) => (0..n).map(|s| set.contains(g.state(s))).collect(),
            AtomicProp::InProj { automaton, state } => {
                (0..n).map(|s| g.state(s).component(*automaton) == *state).collect()
            }
        })
    }

    /// Least fixpoint of `target | (path & EX Z)` by backward search.
    fn exists_until(&self, path: &[bool], target: &[bool]) -> Vec<bool> {
        let mut result = target.to_vec();
        let mut queue: VecDeque<StateId> = (0..self.g.len()).filter(|&s| target[s]).collect();
        while let Some(t) = queue.pop_front() {
            for &p in self.g.predecessors(t) {
                if !result[p] && path[p] {
                    result[p] = true;
                    queue.push_back(p);
                }
            }
        }
        result
    }

    /// Least fixpoint of `p | AX Z`, counting unsatisfied successors.
    fn always_eventually(&self, p: &[bool]) -> Vec<bool> {
        let g = self.g;
        let mut result = p.to_vec();
        let mut pending: Vec<usize> = (0..g.len()).map(|s| g.successors(s).len()).collect();
        let mut queue: VecDeque<StateId> = (0..g.len()).filter(|&s| p[s]).collect();
        while let Some(t) = queue.pop_front() {
            for &s in g.predecessors(t) {
                if result[s] {
                    continue;
                }
                pending[s] -= 1;
                if pending[s] == 0 {
                    result[s] = true;
                    queue.push_back(s);
                }
            }
        }
        result
    }

    /// Next step of automaton `k`: on every path, `p` holds at the first state
    /// whose projection on `k` differs. A state whose projection is terminal
    /// in `k` satisfies it vacuously; a path that never changes the
    /// projection otherwise refutes it.
    fn local_next(&self, k: usize, p: &[bool]) -> Vec<bool> {
        let g = self.g;
        let aut = &self.sys.automata[k];
        let proj = |s: StateId| g.state(s).component(k);
        let n = g.len();
        let mut result = vec![false; n];
        let mut dead = vec![false; n];
        let mut pending = vec![0usize; n];
        let mut queue = VecDeque::new();
        for s in 0..n {
            if aut.is_terminal(proj(s)) {
                result[s] = true;
                queue.push_back(s);
                continue;
            }
            for &t in g.successors(s) {
                if proj(t) == proj(s) {
                    pending[s] += 1;
                } else if !p[t] {
                    dead[s] = true;
                }
            }
            if !dead[s] && pending[s] == 0 {
                result[s] = true;
                queue.push_back(s);
            }
        }
        while let Some(t) = queue.pop_front() {
            for &s in g.predecessors(t) {
                if result[s] || dead[s] || proj(s) != proj(t) {
                    continue;
                }
                pending[s] -= 1;
                if pending[s] == 0 {
                    result[s] = true;
                    queue.push_back(s);
                }
            }
        }
        result
    }
}

fn zip(a: Vec<bool>, b: Vec<bool>, op: impl Fn(bool, bool) -> bool) -> Vec<bool> {
    a.into_iter().zip(b).map(|(x, y)| op(x, y)).collect()
}
