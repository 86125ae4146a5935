//! Explicit reachability graphs of lock-step CSM systems.

mod export;

pub use export::{graph_from_json, graph_to_json, to_dot, to_dot_annotated, GraphJson, GRAPH_SCHEMA_VERSION};

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::formula::{BoolFormula, SignalId};
use crate::qsctl::{LabelSet, PropSet};
use crate::system::CsmSystem;

pub type StateId = usize;

/// Default bound on the number of global states explored.
pub const DEFAULT_STATE_CAP: usize = 1_000_000;

/// Tuple of component-state indices, one per automaton in system order.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct GlobalState(pub Vec<u32>);

impl GlobalState {
    pub fn component(&self, automaton: usize) -> usize {
        self.0[automaton] as usize
    }

    /// `<A.1,B.3>` style designator.
    pub fn display<'a>(&'a self, sys: &'a CsmSystem) -> impl fmt::Display + 'a {
        DisplayState { state: self, sys }
    }
}

struct DisplayState<'a> {
    state: &'a GlobalState,
    sys: &'a CsmSystem,
}

impl fmt::Display for DisplayState<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "<")?;
        for (i, (aut, &c)) in self.sys.automata.iter().zip(&self.state.0).enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{}.{}", aut.name, aut.states[c as usize].name)?;
        }
        write!(f, ">")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GraphKind {
    /// Full reachability graph, ears included.
    Rg,
    /// Ears removed at non-terminal states.
    RgMinusAt,
    /// Reduced graph.
    Rrg,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RgError {
    #[error("state cap of {cap} exceeded ({states} states and {arcs} arcs discovered)")]
    StateCap { cap: usize, states: usize, arcs: usize },
    #[error("automaton `{automaton}` has no enabled arc in state `{state}`; the system is not complete")]
    NoEnabledArc { automaton: String, state: String },
}

/// Explicit graph over global states. Successor lists are sorted and deduplicated.
#[derive(Debug, Clone)]
pub struct Graph {
    pub kind: GraphKind,
    states: Vec<GlobalState>,
    outputs: Vec<Vec<SignalId>>,
    succ: Vec<Vec<StateId>>,
    pred: Vec<Vec<StateId>>,
    index: HashMap<GlobalState, StateId>,
    initial: StateId,
    guards: HashMap<(StateId, StateId), BoolFormula>,
    /// States removed by reduction whose role is taken by a surviving state.
    representatives: BTreeMap<GlobalState, StateId>,
}

impl Graph {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn initial(&self) -> StateId {
        self.initial
    }

    pub fn state(&self, id: StateId) -> &GlobalState {
        &self.states[id]
    }

    pub fn states(&self) -> &[GlobalState] {
        &self.states
    }

    pub fn outputs(&self, id: StateId) -> &[SignalId] {
        &self.outputs[id]
    }

    pub fn successors(&self, id: StateId) -> &[StateId] {
        &self.succ[id]
    }

    pub fn predecessors(&self, id: StateId) -> &[StateId] {
        &self.pred[id]
    }

    pub fn id_of(&self, state: &GlobalState) -> Option<StateId> {
        self.index.get(state).copied()
    }

    /// Resolves a state by tuple, falling back to its representative.
    pub fn resolve(&self, state: &GlobalState) -> Option<StateId> {
        self.id_of(state).or_else(|| self.representatives.get(state).copied())
    }

    pub fn representatives(&self) -> &BTreeMap<GlobalState, StateId> {
        &self.representatives
    }

    pub fn guard(&self, src: StateId, dst: StateId) -> Option<&BoolFormula> {
        self.guards.get(&(src, dst))
    }

    pub fn arc_count(&self) -> usize {
        self.succ.iter().map(Vec::len).sum()
    }

    pub fn arcs(&self) -> impl Iterator<Item = (StateId, StateId)> + '_ {
        self.succ
            .iter()
            .enumerate()
            .flat_map(|(s, ts)| ts.iter().map(move |&t| (s, t)))
    }

    /// Arcs as tuple pairs, for comparing graphs with different numbering.
    pub fn arc_tuples(&self) -> BTreeSet<(GlobalState, GlobalState)> {
        self.arcs()
            .map(|(s, t)| (self.states[s].clone(), self.states[t].clone()))
            .collect()
    }

    pub fn is_terminal(&self, id: StateId) -> bool {
        self.succ[id].iter().all(|&t| t == id)
    }

    pub fn is_total(&self) -> bool {
        self.succ.iter().all(|s| !s.is_empty())
    }

    /// States reachable from `from`, including `from`.
    pub fn reachable_from(&self, from: StateId) -> Vec<bool> {
        let mut seen = vec![false; self.len()];
        let mut queue = VecDeque::from([from]);
        seen[from] = true;
        while let Some(s) = queue.pop_front() {
            for &t in &self.succ[s] {
                if !seen[t] {
                    seen[t] = true;
                    queue.push_back(t);
                }
            }
        }
        seen
    }

    /// Canonical textual form: states, arcs and representatives by tuple.
    pub fn snapshot(&self, sys: &CsmSystem) -> String {
        let mut out = String::new();
        out.push_str(&format!("initial {}\n", self.states[self.initial].display(sys)));
        let mut states: Vec<&GlobalState> = self.states.iter().collect();
        states.sort();
        for s in states {
            out.push_str(&format!("state {}\n", s.display(sys)));
        }
        for (s, t) in self.arc_tuples() {
            out.push_str(&format!("arc {} -> {}\n", s.display(sys), t.display(sys)));
        }
        for (s, r) in &self.representatives {
            out.push_str(&format!(
                "repr {} => {}\n",
                s.display(sys),
                self.states[*r].display(sys)
            ));
        }
        out
    }
}

/// Incremental construction of a [`Graph`].
#[derive(Debug, Default)]
pub struct GraphBuilder {
    states: Vec<GlobalState>,
    outputs: Vec<Vec<SignalId>>,
    succ: Vec<Vec<StateId>>,
    index: HashMap<GlobalState, StateId>,
    guards: HashMap<(StateId, StateId), BoolFormula>,
    representatives: BTreeMap<GlobalState, StateId>,
}

impl GraphBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a state, returning the existing id if the tuple is known.
    pub fn add_state(&mut self, state: GlobalState, outputs: Vec<SignalId>) -> StateId {
        if let Some(&id) = self.index.get(&state) {
            return id;
        }
        let id = self.states.len();
        self.index.insert(state.clone(), id);
        self.states.push(state);
        self.outputs.push(outputs);
        self.succ.push(Vec::new());
        id
    }

    pub fn id_of(&self, state: &GlobalState) -> Option<StateId> {
        self.index.get(state).copied()
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn add_arc(&mut self, src: StateId, dst: StateId) {
        self.succ[src].push(dst);
    }

    pub fn add_guarded_arc(&mut self, src: StateId, dst: StateId, guard: BoolFormula) {
        self.succ[src].push(dst);
        let slot = self.guards.entry((src, dst)).or_insert(BoolFormula::ConstFalse);
        let prev = std::mem::replace(slot, BoolFormula::ConstFalse);
        *slot = BoolFormula::or_simplified(prev, guard);
    }

    pub fn add_representative(&mut self, skipped: GlobalState, by: StateId) {
        self.representatives.insert(skipped, by);
    }

    pub fn finish(mut self, initial: StateId, kind: GraphKind) -> Graph {
        let mut pred = vec![Vec::new(); self.states.len()];
        for (s, ts) in self.succ.iter_mut().enumerate() {
            ts.sort_unstable();
            ts.dedup();
            for &t in ts.iter() {
                pred[t].push(s);
            }
        }
        Graph {
            kind,
            states: self.states,
            outputs: self.outputs,
            succ: self.succ,
            pred,
            index: self.index,
            initial,
            guards: self.guards,
            representatives: self.representatives,
        }
    }
}

/// Union of the outputs of the component states in `g`, sorted.
pub fn outputs(g: &GlobalState, sys: &CsmSystem) -> Vec<SignalId> {
    let mut out: Vec<SignalId> = sys
        .automata
        .iter()
        .zip(&g.0)
        .flat_map(|(aut, &c)| aut.states[c as usize].outputs.iter().copied())
        .collect();
    out.sort_unstable();
    out.dedup();
    out
}

/// One lock-step transition under a fixed external assignment.
///
/// Returns each distinct successor with the disjunction of the guard
/// conjunctions that produce it, sorted by tuple.
pub fn step(
    sys: &CsmSystem,
    g: &GlobalState,
    external: &[SignalId],
) -> Result<Vec<(GlobalState, BoolFormula)>, RgError> {
    let mut active = outputs(g, sys);
    active.extend_from_slice(external);
    active.sort_unstable();
    active.dedup();

    let mut enabled: Vec<Vec<(u32, &BoolFormula)>> = Vec::with_capacity(sys.automata.len());
    for (aut, &c) in sys.automata.iter().zip(&g.0) {
        let choices: Vec<(u32, &BoolFormula)> = aut
            .outgoing(c as usize)
            .filter(|arc| arc.guard.eval_sorted(&active))
            .map(|arc| (arc.dst as u32, &arc.guard))
            .collect();
        if choices.is_empty() {
            return Err(RgError::NoEnabledArc {
                automaton: aut.name.clone(),
                state: aut.states[c as usize].name.clone(),
            });
        }
        enabled.push(choices);
    }

    let mut result: BTreeMap<GlobalState, BoolFormula> = BTreeMap::new();
    let mut pick = vec![0usize; enabled.len()];
    loop {
        let tuple = GlobalState(pick.iter().zip(&enabled).map(|(&i, e)| e[i].0).collect());
        let guard = pick
            .iter()
            .zip(&enabled)
            .map(|(&i, e)| e[i].1.clone())
            .fold(BoolFormula::ConstTrue, BoolFormula::and_simplified);
        let slot = result.entry(tuple).or_insert(BoolFormula::ConstFalse);
        let prev = std::mem::replace(slot, BoolFormula::ConstFalse);
        *slot = BoolFormula::or_simplified(prev, guard);

        // odometer over the enabled-arc choices
        let mut k = pick.len();
        loop {
            if k == 0 {
                return Ok(result.into_iter().collect());
            }
            k -= 1;
            pick[k] += 1;
            if pick[k] < enabled[k].len() {
                break;
            }
            pick[k] = 0;
        }
    }
}

/// Successors under every external assignment the environment policy allows.
pub fn successors(sys: &CsmSystem, g: &GlobalState) -> Result<Vec<(GlobalState, BoolFormula)>, RgError> {
    let mut all: BTreeMap<GlobalState, BoolFormula> = BTreeMap::new();
    for ext in sys.external_assignments() {
        for (t, guard) in step(sys, g, &ext)? {
            let slot = all.entry(t).or_insert(BoolFormula::ConstFalse);
            let prev = std::mem::replace(slot, BoolFormula::ConstFalse);
            *slot = BoolFormula::or_simplified(prev, guard);
        }
    }
    Ok(all.into_iter().collect())
}

/// Drops `state` from its own successor set unless it is the only successor.
pub fn strip_ear(state: &GlobalState, mut succ: Vec<GlobalState>) -> Vec<GlobalState> {
    if succ.len() > 1 {
        succ.retain(|t| t != state);
    }
    succ
}

/// Breadth-first closure of [`successors`] from the initial tuple.
///
/// New successors of a state are numbered in tuple order.
pub fn build_rg(sys: &CsmSystem, cap: usize) -> Result<Graph, RgError> {
    let mut b = GraphBuilder::new();
    let init = GlobalState(sys.initial_tuple());
    let init_out = outputs(&init, sys);
    let initial = b.add_state(init, init_out);
    let mut queue = VecDeque::from([initial]);
    let mut arcs = 0usize;
    while let Some(s) = queue.pop_front() {
        let tuple = b.states[s].clone();
        let succ = successors(sys, &tuple)?;
        debug_assert!(!succ.is_empty());
        for (t, guard) in succ {
            let id = match b.id_of(&t) {
                Some(id) => id,
                None => {
                    if b.len() >= cap {
                        return Err(RgError::StateCap {
                            cap,
                            states: b.len(),
                            arcs,
                        });
                    }
                    let out = outputs(&t, sys);
                    let id = b.add_state(t, out);
                    queue.push_back(id);
                    id
                }
            };
            b.add_guarded_arc(s, id, guard);
            arcs += 1;
        }
    }
    Ok(b.finish(initial, GraphKind::Rg))
}

/// Removes ears leaving non-terminal states; terminal states keep their ear.
pub fn strip_ears(g: &Graph) -> Graph {
    let mut out = g.clone();
    out.kind = GraphKind::RgMinusAt;
    for s in 0..out.succ.len() {
        if out.succ[s].len() > 1 && out.succ[s].contains(&s) {
            out.succ[s].retain(|&t| t != s);
            out.guards.remove(&(s, s));
        }
    }
    for p in out.pred.iter_mut() {
        p.clear();
    }
    for s in 0..out.succ.len() {
        for i in 0..out.succ[s].len() {
            let t = out.succ[s][i];
            out.pred[t].push(s);
        }
    }
    out
}

/// The Kripke structure used for evaluation: RG with non-terminal ears removed.
pub fn build_rg_minus_at(sys: &CsmSystem, cap: usize) -> Result<Graph, RgError> {
    build_rg(sys, cap).map(|g| strip_ears(&g))
}

/// Per-state label sets over the atoms of `props`.
pub fn label(g: &Graph, props: &PropSet) -> Vec<LabelSet> {
    (0..g.len()).map(|s| props.label(g.state(s), g.outputs(s))).collect()
}
