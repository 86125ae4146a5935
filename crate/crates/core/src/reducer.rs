//! Invisibility-based reduction of RG₋@ into a reduced reachability graph.
//!
//! Both the off-line and the on-line algorithm run the same worklist core
//! over a [`SuccessorSource`]; they differ only in where successors come
//! from, so on the same system they produce the same graph.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::convert::Infallible;

use serde::{Deserialize, Serialize};

use crate::formula::SignalId;
use crate::qsctl::{LabelSet, PropSet};
use crate::rg::{self, GlobalState, Graph, GraphBuilder, GraphKind, RgError, StateId};
use crate::stutter::{refine, Divergence};
use crate::system::CsmSystem;

pub const REPORT_SCHEMA: &str = "csm-reduction-report";
pub const REPORT_VERSION: u32 = 1;

/// Upper bound on passes when iterating to a fixpoint.
pub const MAX_PASSES: usize = 32;

#[derive(Debug, Clone)]
pub struct ReductionContext {
    pub props: PropSet,
    /// Allow skipping protected first-wave candidates jointly when together
    /// they cover every successor of the analysed state.
    pub relaxed_v: bool,
    /// Refuse to skip a state that is not stuttering-equivalent to the
    /// analysed state within its invisible neighbourhood. Turning this off
    /// gives the bare rule, which can lose branching behaviour.
    pub stutter_guard: bool,
    /// Re-run the reduction on its own output until nothing changes.
    pub fixpoint: bool,
}

impl ReductionContext {
    pub fn new(props: PropSet) -> Self {
        ReductionContext {
            props,
            relaxed_v: false,
            stutter_guard: true,
            fixpoint: false,
        }
    }

    pub fn reduction_allowed(&self) -> bool {
        self.props.reduction_allowed
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Reduce,
    Keep,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reason {
    EarI,
    EarIi,
    BackEdgeIii,
    ProtectedIv,
    ExceptionV,
    Visible,
    CycleGuardA,
    TakenGuardB,
    /// Plain application of the rule.
    Rule,
    /// The candidate branches differently from the analysed state.
    StutterClass,
}

impl Reason {
    pub fn code(self) -> &'static str {
        match self {
            Reason::EarI => "ear_i",
            Reason::EarIi => "ear_ii",
            Reason::BackEdgeIii => "back_edge_iii",
            Reason::ProtectedIv => "protected_iv",
            Reason::ExceptionV => "exception_v",
            Reason::Visible => "visible",
            Reason::CycleGuardA => "cycle_guard_a",
            Reason::TakenGuardB => "taken_guard_b",
            Reason::Rule => "rule",
            Reason::StutterClass => "stutter_class",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    /// Every verdict is reduce: the candidate leaves this path.
    Skipped,
    /// No verdict is reduce: the arc to the candidate stays.
    Kept,
    /// Only the arc back to the analysed state stays with the candidate.
    Mixed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SuccessorVerdict {
    pub target: GlobalState,
    pub verdict: Verdict,
    pub reason: Reason,
}

/// Outcome of trying to remove arc `x = (root, candidate)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Decision {
    pub root: GlobalState,
    pub candidate: GlobalState,
    /// 0 for direct successors of the root, then one more per skipped level.
    pub wave: usize,
    pub outcome: Outcome,
    pub verdicts: Vec<SuccessorVerdict>,
}

impl Decision {
    fn uniform(root: &GlobalState, candidate: &GlobalState, wave: usize, succ: &[GlobalState], reason: Reason) -> Self {
        Decision {
            root: root.clone(),
            candidate: candidate.clone(),
            wave,
            outcome: Outcome::Kept,
            verdicts: succ
                .iter()
                .map(|t| SuccessorVerdict {
                    target: t.clone(),
                    verdict: Verdict::Keep,
                    reason,
                })
                .collect(),
        }
    }

    /// The reason that decided the outcome: the first keep, else the first reduce.
    pub fn reason(&self) -> Option<Reason> {
        self.verdicts
            .iter()
            .find(|v| v.verdict == Verdict::Keep)
            .or(self.verdicts.first())
            .map(|v| v.reason)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Offline,
    Online,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReductionReport {
    pub schema: String,
    pub version: u32,
    pub mode: Mode,
    pub reduction_allowed: bool,
    pub notes: Vec<String>,
    pub states_before: usize,
    pub arcs_before: usize,
    pub states_after: usize,
    pub arcs_after: usize,
    /// `(states_before + arcs_before) / (states_after + arcs_after)`.
    pub reduction_ratio: f64,
    pub skipped_states: Vec<GlobalState>,
    pub removed_arcs: Vec<(GlobalState, GlobalState)>,
    pub added_arcs: Vec<(GlobalState, GlobalState)>,
    /// Skipped protected states and the state answering for them.
    pub representatives: Vec<(GlobalState, GlobalState)>,
    pub passes: usize,
    /// Skip attempts over all analyses.
    pub attempts: usize,
    pub peak_resident_states: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub decisions: Vec<Decision>,
}

impl ReductionReport {
    pub fn ratio_parts(&self) -> (usize, usize) {
        (
            self.states_before + self.arcs_before,
            self.states_after + self.arcs_after,
        )
    }

    /// Decisions whose outcome removed or redirected arcs.
    pub fn reductions(&self) -> impl Iterator<Item = &Decision> {
        self.decisions.iter().filter(|d| d.outcome != Outcome::Kept)
    }
}

/// Definition-1 invisibility: equal labels over the completed proposition set.
pub fn is_invisible(x: (StateId, StateId), labels: &[LabelSet]) -> bool {
    labels[x.0] == labels[x.1]
}

/// Where the reduction core gets RG₋@ successors from.
pub trait SuccessorSource {
    type Error;
    fn initial(&self) -> GlobalState;
    /// RG₋@ successors sorted by tuple.
    fn successors(&mut self, s: &GlobalState) -> Result<Vec<GlobalState>, Self::Error>;
    fn outputs(&mut self, s: &GlobalState) -> Vec<SignalId>;
    /// Called after each analysis; may drop cached data.
    fn end_analysis(&mut self) {}
    fn resident(&self) -> usize;
}

struct GraphSource<'a> {
    g: &'a Graph,
}

impl SuccessorSource for GraphSource<'_> {
    type Error = Infallible;

    fn initial(&self) -> GlobalState {
        self.g.state(self.g.initial()).clone()
    }

    fn successors(&mut self, s: &GlobalState) -> Result<Vec<GlobalState>, Infallible> {
        let id = self.g.id_of(s).expect("state of the source graph");
        let mut out: Vec<GlobalState> = self.g.successors(id).iter().map(|&t| self.g.state(t).clone()).collect();
        out.sort();
        Ok(out)
    }

    fn outputs(&mut self, s: &GlobalState) -> Vec<SignalId> {
        self.g
            .outputs(self.g.id_of(s).expect("state of the source graph"))
            .to_vec()
    }

    fn resident(&self) -> usize {
        self.g.len()
    }
}

/// Computes successors from the automata on demand, caching them only for
/// the duration of one analysis.
struct SystemSource<'a> {
    sys: &'a CsmSystem,
    cap: usize,
    cache: HashMap<GlobalState, Vec<GlobalState>>,
    discovered: HashSet<GlobalState>,
    arcs: usize,
}

impl SuccessorSource for SystemSource<'_> {
    type Error = RgError;

    fn initial(&self) -> GlobalState {
        GlobalState(self.sys.initial_tuple())
    }

    fn successors(&mut self, s: &GlobalState) -> Result<Vec<GlobalState>, RgError> {
        if let Some(succ) = self.cache.get(s) {
            return Ok(succ.clone());
        }
        let full: Vec<GlobalState> = rg::successors(self.sys, s)?.into_iter().map(|(t, _)| t).collect();
        let succ = rg::strip_ear(s, full);
        self.discovered.insert(s.clone());
        for t in &succ {
            if !self.discovered.contains(t) {
                if self.discovered.len() >= self.cap {
                    return Err(RgError::StateCap {
                        cap: self.cap,
                        states: self.discovered.len(),
                        arcs: self.arcs,
                    });
                }
                self.discovered.insert(t.clone());
            }
        }
        self.arcs += succ.len();
        self.cache.insert(s.clone(), succ.clone());
        Ok(succ)
    }

    fn outputs(&mut self, s: &GlobalState) -> Vec<SignalId> {
        rg::outputs(s, self.sys)
    }

    fn end_analysis(&mut self) {
        self.cache.clear();
    }

    fn resident(&self) -> usize {
        self.cache.len()
    }
}

/// Coarsest divergence-sensitive stuttering partition of the invisible
/// closure of a state, with every exit state kept apart from all others.
/// Being finer than the global equivalence, sharing a block here implies
/// stuttering equivalence in the whole graph.
struct Region {
    block: HashMap<GlobalState, usize>,
}

fn invisible_region<S: SuccessorSource>(src: &mut S, props: &PropSet, root: &GlobalState) -> Result<Region, S::Error> {
    let root_out = src.outputs(root);
    let root_label = props.label(root, &root_out);
    let mut nodes: Vec<GlobalState> = vec![root.clone()];
    let mut index: HashMap<GlobalState, usize> = HashMap::from([(root.clone(), 0)]);
    let mut inside: Vec<bool> = vec![true];
    let mut succ: Vec<Vec<usize>> = vec![Vec::new()];
    let mut next = 0;
    while next < nodes.len() {
        let s = next;
        next += 1;
        if !inside[s] {
            continue;
        }
        let state = nodes[s].clone();
        for t in src.successors(&state)? {
            let id = match index.get(&t) {
                Some(&id) => id,
                None => {
                    let out = src.outputs(&t);
                    let same = props.label(&t, &out) == root_label;
                    let id = nodes.len();
                    index.insert(t.clone(), id);
                    nodes.push(t);
                    inside.push(same);
                    succ.push(Vec::new());
                    id
                }
            };
            succ[s].push(id);
        }
    }
    let mut exit = 0;
    let initial: Vec<usize> = inside
        .iter()
        .map(|&i| {
            if i {
                0
            } else {
                exit += 1;
                exit
            }
        })
        .collect();
    let blocks = refine(&succ, &initial, Divergence::Sensitive);
    let block = nodes
        .into_iter()
        .zip(blocks)
        .zip(inside)
        .filter(|(_, i)| *i)
        .map(|((s, b), _)| (s, b))
        .collect();
    Ok(Region { block })
}

/// What the restrictions see about one candidate.
struct Candidate<'a> {
    root: &'a GlobalState,
    root_succ: &'a [GlobalState],
    state: &'a GlobalState,
    succ: &'a [GlobalState],
    wave: usize,
    invisible: bool,
    /// `None` when the stutter guard is off.
    same_class: Option<bool>,
    protected: bool,
    relaxed: bool,
}

/// Restrictions i–v plus the stutter guard for a single candidate.
fn judge(c: &Candidate<'_>) -> Decision {
    let keep_all = |reason| Decision::uniform(c.root, c.state, c.wave, c.succ, reason);
    if c.state == c.root {
        return keep_all(Reason::EarI);
    }
    if !c.invisible {
        return keep_all(Reason::Visible);
    }
    if c.same_class == Some(false) {
        return keep_all(Reason::StutterClass);
    }
    if c.succ == std::slice::from_ref(c.state) {
        return keep_all(Reason::EarIi);
    }
    let mut exception = false;
    if c.protected {
        let covered = c
            .root_succ
            .iter()
            .all(|t| t == c.state || c.succ.binary_search(t).is_ok());
        if c.wave == 0 && (covered || c.relaxed) {
            exception = true;
        } else {
            return keep_all(Reason::ProtectedIv);
        }
    }
    let verdicts: Vec<SuccessorVerdict> = c
        .succ
        .iter()
        .map(|t| {
            let (verdict, reason) = if t == c.root {
                (Verdict::Keep, Reason::BackEdgeIii)
            } else if exception {
                (Verdict::Reduce, Reason::ExceptionV)
            } else {
                (Verdict::Reduce, Reason::Rule)
            };
            SuccessorVerdict {
                target: t.clone(),
                verdict,
                reason,
            }
        })
        .collect();
    let reduced = verdicts.iter().filter(|v| v.verdict == Verdict::Reduce).count();
    let outcome = if reduced == verdicts.len() {
        Outcome::Skipped
    } else if reduced == 0 {
        Outcome::Kept
    } else {
        Outcome::Mixed
    };
    Decision {
        root: c.root.clone(),
        candidate: c.state.clone(),
        wave: c.wave,
        outcome,
        verdicts,
    }
}

/// Restrictions for one arc `x = (s_i, s_j)` of `g`, as a direct successor.
pub fn check_restrictions(g: &Graph, x: (StateId, StateId), ctx: &ReductionContext) -> Decision {
    let mut src = GraphSource { g };
    let root = g.state(x.0).clone();
    let state = g.state(x.1).clone();
    let Ok(root_succ) = src.successors(&root);
    let Ok(succ) = src.successors(&state);
    let label = |s: StateId| ctx.props.label(g.state(s), g.outputs(s));
    let invisible = label(x.0) == label(x.1);
    let same_class = if ctx.stutter_guard && invisible {
        let Ok(region) = invisible_region(&mut src, &ctx.props, &root);
        Some(region.block.get(&root) == region.block.get(&state))
    } else {
        None
    };
    let protected = ctx.props.is_protected(&state);
    judge(&Candidate {
        root: &root,
        root_succ: &root_succ,
        state: &state,
        succ: &succ,
        wave: 0,
        invisible,
        same_class,
        protected,
        relaxed: false,
    })
}

/// Applies one decision as a single rewriting step: reduced successor arcs
/// move to the root, `x` goes only if every verdict is reduce, and states no
/// longer reachable are dropped.
pub fn apply_reduction(g: &Graph, d: &Decision) -> Graph {
    let root = g.id_of(&d.root).expect("decision root in graph");
    let cand = g.id_of(&d.candidate).expect("decision candidate in graph");
    let mut arcs: BTreeSet<(StateId, StateId)> = g.arcs().collect();
    let mut all_reduce = true;
    for v in &d.verdicts {
        let k = g.id_of(&v.target).expect("verdict target in graph");
        match v.verdict {
            Verdict::Reduce => {
                assert_ne!(k, root, "reduction would create an ear");
                arcs.insert((root, k));
                if d.outcome == Outcome::Mixed {
                    arcs.remove(&(cand, k));
                }
            }
            Verdict::Keep => all_reduce = false,
        }
    }
    if all_reduce {
        arcs.remove(&(root, cand));
    }
    let mut representatives: BTreeMap<GlobalState, GlobalState> = g
        .representatives()
        .iter()
        .map(|(s, &by)| (s.clone(), g.state(by).clone()))
        .collect();
    if all_reduce && d.verdicts.iter().any(|v| v.reason == Reason::ExceptionV) {
        representatives.insert(d.candidate.clone(), d.root.clone());
    }
    rebuild(g, &arcs, &representatives, g.kind)
}

/// Graph over the states of `g` reachable under `arcs`, ids in BFS order.
fn rebuild(
    g: &Graph,
    arcs: &BTreeSet<(StateId, StateId)>,
    representatives: &BTreeMap<GlobalState, GlobalState>,
    kind: GraphKind,
) -> Graph {
    let mut succ: Vec<Vec<StateId>> = vec![Vec::new(); g.len()];
    for &(s, t) in arcs {
        succ[s].push(t);
    }
    let mut b = GraphBuilder::new();
    let mut map: HashMap<StateId, StateId> = HashMap::new();
    let init = b.add_state(g.state(g.initial()).clone(), g.outputs(g.initial()).to_vec());
    map.insert(g.initial(), init);
    let mut queue = std::collections::VecDeque::from([g.initial()]);
    let mut order = Vec::new();
    while let Some(s) = queue.pop_front() {
        order.push(s);
        for &t in &succ[s] {
            if let std::collections::hash_map::Entry::Vacant(e) = map.entry(t) {
                e.insert(b.add_state(g.state(t).clone(), g.outputs(t).to_vec()));
                queue.push_back(t);
            }
        }
    }
    for s in order {
        for &t in &succ[s] {
            match g.guard(s, t) {
                Some(guard) => b.add_guarded_arc(map[&s], map[&t], guard.clone()),
                None => b.add_arc(map[&s], map[&t]),
            }
        }
    }
    for (s, by) in representatives {
        if b.id_of(s).is_none() {
            if let Some(id) = b.id_of(by) {
                b.add_representative(s.clone(), id);
            }
        }
    }
    b.finish(init, kind)
}

/// Result of one pass of the core.
struct Pass {
    graph: Graph,
    decisions: Vec<Decision>,
    representatives: BTreeMap<GlobalState, GlobalState>,
    seen_states: BTreeSet<GlobalState>,
    seen_arcs: BTreeSet<(GlobalState, GlobalState)>,
    attempts: usize,
    peak_resident: usize,
}

struct Core<'a, S> {
    src: S,
    ctx: &'a ReductionContext,
    /// Extra states treated as protected, e.g. representatives of a previous pass.
    pinned: &'a BTreeSet<GlobalState>,
    preserved: Vec<GlobalState>,
    index: HashMap<GlobalState, usize>,
    targets: Vec<BTreeSet<GlobalState>>,
    dropped: HashMap<GlobalState, BTreeSet<GlobalState>>,
    representatives: BTreeMap<GlobalState, GlobalState>,
    decisions: Vec<Decision>,
    regions: Vec<Region>,
    region_of: HashMap<GlobalState, usize>,
    seen_states: BTreeSet<GlobalState>,
    seen_arcs: BTreeSet<(GlobalState, GlobalState)>,
    attempts: usize,
    peak_resident: usize,
}

impl<'a, S: SuccessorSource> Core<'a, S> {
    fn new(src: S, ctx: &'a ReductionContext, pinned: &'a BTreeSet<GlobalState>) -> Self {
        Core {
            src,
            ctx,
            pinned,
            preserved: Vec::new(),
            index: HashMap::new(),
            targets: Vec::new(),
            dropped: HashMap::new(),
            representatives: BTreeMap::new(),
            decisions: Vec::new(),
            regions: Vec::new(),
            region_of: HashMap::new(),
            seen_states: BTreeSet::new(),
            seen_arcs: BTreeSet::new(),
            attempts: 0,
            peak_resident: 0,
        }
    }

    fn preserve(&mut self, s: GlobalState) {
        if !self.index.contains_key(&s) {
            self.index.insert(s.clone(), self.preserved.len());
            self.preserved.push(s);
            self.targets.push(BTreeSet::new());
        }
    }

    fn successors(&mut self, s: &GlobalState) -> Result<Vec<GlobalState>, S::Error> {
        let succ = self.src.successors(s)?;
        if self.seen_states.insert(s.clone()) {
            for t in &succ {
                self.seen_arcs.insert((s.clone(), t.clone()));
            }
        }
        Ok(succ)
    }

    fn label(&mut self, s: &GlobalState) -> LabelSet {
        let out = self.src.outputs(s);
        self.ctx.props.label(s, &out)
    }

    fn is_protected(&self, s: &GlobalState) -> bool {
        self.ctx.props.is_protected(s) || self.pinned.contains(s)
    }

    fn region(&mut self, root: &GlobalState) -> Result<usize, S::Error> {
        if let Some(&r) = self.region_of.get(root) {
            return Ok(r);
        }
        let region = invisible_region(&mut self.src, &self.ctx.props, root)?;
        let id = self.regions.len();
        for s in region.block.keys() {
            self.region_of.entry(s.clone()).or_insert(id);
        }
        self.regions.push(region);
        Ok(id)
    }

    fn run(mut self) -> Result<Pass, S::Error> {
        let init = self.src.initial();
        self.preserve(init);
        let mut next = 0;
        while next < self.preserved.len() {
            let root = self.preserved[next].clone();
            self.analyse(next, &root)?;
            let resident = self.src.resident() + self.preserved.len();
            self.peak_resident = self.peak_resident.max(resident);
            self.src.end_analysis();
            next += 1;
        }
        self.finish()
    }

    /// Candidates of `root` in waves; fills `targets[slot]`.
    fn analyse(&mut self, slot: usize, root: &GlobalState) -> Result<(), S::Error> {
        let mut root_succ = self.successors(root)?;
        if let Some(dropped) = self.dropped.get(root) {
            root_succ.retain(|t| !dropped.contains(t));
        }
        let mut kept: BTreeSet<GlobalState> = BTreeSet::new();
        if !self.ctx.reduction_allowed() {
            kept.extend(root_succ);
            return self.commit(slot, kept);
        }
        let root_label = self.label(root);
        let region = if self.ctx.stutter_guard {
            Some(self.region(root)?)
        } else {
            None
        };
        let relaxed = if self.ctx.relaxed_v {
            self.relaxed_candidates(root, &root_succ, &root_label, region)?
        } else {
            HashSet::new()
        };
        let mut tried: HashSet<GlobalState> = HashSet::new();
        let mut wave: Vec<GlobalState> = root_succ.clone();
        let mut depth = 0;
        'waves: while !wave.is_empty() {
            let mut upcoming: BTreeSet<GlobalState> = BTreeSet::new();
            for i in 0..wave.len() {
                let c = &wave[i];
                if kept.contains(c) {
                    continue;
                }
                let succ = self.successors(c)?;
                if tried.contains(c) {
                    self.decisions
                        .push(Decision::uniform(root, c, depth, &succ, Reason::CycleGuardA));
                    kept.insert(c.clone());
                    continue;
                }
                if c != root {
                    tried.insert(c.clone());
                    self.attempts += 1;
                }
                let invisible = self.label(c) == root_label;
                if c != root && invisible && self.index.contains_key(c) {
                    // guard (b): stop searching and commit the frontier
                    let pending: Vec<GlobalState> = wave[i..].iter().chain(upcoming.iter()).cloned().collect();
                    for p in pending {
                        if p == *root || kept.contains(&p) {
                            continue;
                        }
                        let succ = self.successors(&p)?;
                        self.decisions
                            .push(Decision::uniform(root, &p, depth, &succ, Reason::TakenGuardB));
                        kept.insert(p);
                    }
                    break 'waves;
                }
                let same_class = match region {
                    Some(r) if invisible => {
                        let blocks = &self.regions[r].block;
                        Some(blocks.get(root).is_some() && blocks.get(root) == blocks.get(c))
                    }
                    _ => None,
                };
                let decision = judge(&Candidate {
                    root,
                    root_succ: &root_succ,
                    state: c,
                    succ: &succ,
                    wave: depth,
                    invisible,
                    same_class,
                    protected: self.is_protected(c),
                    relaxed: relaxed.contains(c),
                });
                match decision.outcome {
                    Outcome::Skipped => {
                        upcoming.extend(succ.iter().cloned());
                        if decision.verdicts.iter().any(|v| v.reason == Reason::ExceptionV) {
                            self.representatives.insert(c.clone(), root.clone());
                        }
                    }
                    Outcome::Kept => {
                        kept.insert(c.clone());
                    }
                    Outcome::Mixed => {
                        kept.insert(c.clone());
                        let moved: BTreeSet<GlobalState> = decision
                            .verdicts
                            .iter()
                            .filter(|v| v.verdict == Verdict::Reduce)
                            .map(|v| v.target.clone())
                            .collect();
                        upcoming.extend(moved.iter().cloned());
                        self.dropped.entry(c.clone()).or_default().extend(moved);
                    }
                }
                self.decisions.push(decision);
            }
            wave = upcoming.into_iter().collect();
            depth += 1;
        }
        self.commit(slot, kept)
    }

    /// First-wave candidates that the relaxed form of exception v admits.
    fn relaxed_candidates(
        &mut self,
        root: &GlobalState,
        root_succ: &[GlobalState],
        root_label: &LabelSet,
        region: Option<usize>,
    ) -> Result<HashSet<GlobalState>, S::Error> {
        let mut candidates = Vec::new();
        let mut covered: BTreeSet<GlobalState> = BTreeSet::new();
        for c in root_succ {
            if c == root || self.index.contains_key(c) || self.label(c) != *root_label {
                continue;
            }
            if let Some(r) = region {
                let blocks = &self.regions[r].block;
                if blocks.get(root) != blocks.get(c) {
                    continue;
                }
            }
            let succ = self.successors(c)?;
            if succ.as_slice() == std::slice::from_ref(c) || succ.contains(root) {
                continue;
            }
            covered.insert(c.clone());
            covered.extend(succ);
            candidates.push(c.clone());
        }
        let protected = candidates.iter().any(|c| self.is_protected(c));
        if candidates.len() > 1 && protected && root_succ.iter().all(|t| covered.contains(t)) {
            Ok(candidates.into_iter().collect())
        } else {
            Ok(HashSet::new())
        }
    }

    fn commit(&mut self, slot: usize, kept: BTreeSet<GlobalState>) -> Result<(), S::Error> {
        for t in &kept {
            self.preserve(t.clone());
        }
        self.targets[slot] = kept;
        Ok(())
    }

    fn finish(mut self) -> Result<Pass, S::Error> {
        let mut b = GraphBuilder::new();
        for s in self.preserved.clone() {
            let out = self.src.outputs(&s);
            b.add_state(s, out);
        }
        for (slot, targets) in self.targets.iter().enumerate() {
            for t in targets {
                let dst = self.index[t];
                debug_assert!(
                    dst != slot || targets.len() == 1,
                    "reduction created an ear at {:?}",
                    self.preserved[slot]
                );
                b.add_arc(slot, dst);
            }
        }
        self.representatives.retain(|s, _| !self.index.contains_key(s));
        for (s, by) in &self.representatives {
            b.add_representative(s.clone(), self.index[by]);
        }
        let graph = b.finish(0, GraphKind::Rrg);
        Ok(Pass {
            graph,
            decisions: self.decisions,
            representatives: self.representatives,
            seen_states: self.seen_states,
            seen_arcs: self.seen_arcs,
            attempts: self.attempts,
            peak_resident: self.peak_resident,
        })
    }
}

#[allow(clippy::too_many_arguments)]
fn report_for(
    mode: Mode,
    ctx: &ReductionContext,
    first: &Pass,
    graph: &Graph,
    decisions: Vec<Decision>,
    representatives: &BTreeMap<GlobalState, GlobalState>,
    passes: usize,
    attempts: usize,
) -> ReductionReport {
    let after_arcs = graph.arc_tuples();
    let after_states: BTreeSet<&GlobalState> = graph.states().iter().collect();
    let states_before = first.seen_states.len();
    let arcs_before = first.seen_arcs.len();
    let states_after = graph.len();
    let arcs_after = graph.arc_count();
    let denominator = (states_after + arcs_after).max(1);
    ReductionReport {
        schema: REPORT_SCHEMA.to_string(),
        version: REPORT_VERSION,
        mode,
        reduction_allowed: ctx.reduction_allowed(),
        notes: ctx.props.notes.clone(),
        states_before,
        arcs_before,
        states_after,
        arcs_after,
        reduction_ratio: (states_before + arcs_before) as f64 / denominator as f64,
        skipped_states: first
            .seen_states
            .iter()
            .filter(|s| !after_states.contains(s))
            .cloned()
            .collect(),
        removed_arcs: first.seen_arcs.difference(&after_arcs).cloned().collect(),
        added_arcs: after_arcs.difference(&first.seen_arcs).cloned().collect(),
        representatives: representatives.iter().map(|(s, by)| (s.clone(), by.clone())).collect(),
        passes,
        attempts,
        peak_resident_states: first.peak_resident,
        decisions,
    }
}

/// Further passes over the output until it stops shrinking.
fn iterate(ctx: &ReductionContext, first: Pass, mode: Mode) -> (Graph, ReductionReport) {
    let mut graph = first.graph.clone();
    let mut decisions = first.decisions.clone();
    let mut representatives = first.representatives.clone();
    let mut attempts = first.attempts;
    let mut passes = 1;
    while ctx.fixpoint && ctx.reduction_allowed() && passes < MAX_PASSES {
        let pinned: BTreeSet<GlobalState> = representatives.values().cloned().collect();
        let Ok(pass) = Core::new(GraphSource { g: &graph }, ctx, &pinned).run();
        passes += 1;
        attempts += pass.attempts;
        decisions.extend(pass.decisions);
        for by in representatives.values_mut() {
            if let Some(next) = pass.representatives.get(by) {
                *by = next.clone();
            }
        }
        representatives.extend(pass.representatives);
        let changed = pass.graph.len() != graph.len() || pass.graph.arc_count() != graph.arc_count();
        graph = pass.graph;
        if !changed {
            break;
        }
    }
    if passes > 1 {
        // representatives may have been re-targeted across passes
        let arcs: BTreeSet<(StateId, StateId)> = graph.arcs().collect();
        representatives.retain(|s, _| graph.id_of(s).is_none());
        graph = rebuild(&graph, &arcs, &representatives, GraphKind::Rrg);
    }
    let report = report_for(mode, ctx, &first, &graph, decisions, &representatives, passes, attempts);
    (graph, report)
}

/// Off-line reduction of a fully built RG₋@.
pub fn reduce_offline(g: &Graph, ctx: &ReductionContext) -> (Graph, ReductionReport) {
    let none = BTreeSet::new();
    let Ok(first) = Core::new(GraphSource { g }, ctx, &none).run();
    if !ctx.reduction_allowed() {
        let mut same = g.clone();
        same.kind = GraphKind::Rrg;
        let report = report_for(Mode::Offline, ctx, &first, &same, Vec::new(), &BTreeMap::new(), 1, 0);
        return (same, report);
    }
    iterate(ctx, first, Mode::Offline)
}

/// On-line reduction: successors are computed from the automata while
/// reducing, and only the current analysis is cached.
pub fn reduce_online(sys: &CsmSystem, ctx: &ReductionContext, cap: usize) -> Result<(Graph, ReductionReport), RgError> {
    let none = BTreeSet::new();
    let src = SystemSource {
        sys,
        cap,
        cache: HashMap::new(),
        discovered: HashSet::new(),
        arcs: 0,
    };
    let first = Core::new(src, ctx, &none).run()?;
    Ok(iterate(ctx, first, Mode::Online))
}

/// Violations of the reduction invariants found after the fact.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditReport {
    /// Self-loops of the reduced graph absent from the full one.
    pub ears_added: Vec<GlobalState>,
    /// Protected states missing from the reduced graph without exception v.
    pub protected_skipped: Vec<GlobalState>,
    /// Reducing decisions whose arc was visible.
    pub visible_removed: Vec<(GlobalState, GlobalState)>,
    /// Removed arcs that no decision accounts for.
    pub unexplained_removed: Vec<(GlobalState, GlobalState)>,
}

impl AuditReport {
    pub fn is_clean(&self) -> bool {
        self.ears_added.is_empty()
            && self.protected_skipped.is_empty()
            && self.visible_removed.is_empty()
            && self.unexplained_removed.is_empty()
    }
}

/// Checks a reduction against its decision log.
pub fn audit(full: &Graph, reduced: &Graph, report: &ReductionReport, props: &PropSet) -> AuditReport {
    let mut out = AuditReport::default();
    let full_arcs = full.arc_tuples();
    let reduced_arcs = reduced.arc_tuples();
    for (s, t) in &reduced_arcs {
        if s == t && !full_arcs.contains(&(s.clone(), t.clone())) {
            out.ears_added.push(s.clone());
        }
    }
    let label = |s: &GlobalState| {
        let id = full.id_of(s)?;
        Some(props.label(s, full.outputs(id)))
    };
    let mut explained: HashSet<(GlobalState, GlobalState)> = HashSet::new();
    let mut excepted: HashSet<GlobalState> = HashSet::new();
    for d in report.reductions() {
        if label(&d.root) != label(&d.candidate) {
            out.visible_removed.push((d.root.clone(), d.candidate.clone()));
        }
        explained.insert((d.root.clone(), d.candidate.clone()));
        for v in &d.verdicts {
            if v.verdict == Verdict::Reduce {
                explained.insert((d.candidate.clone(), v.target.clone()));
            }
        }
        if d.outcome == Outcome::Skipped && d.verdicts.iter().any(|v| v.reason == Reason::ExceptionV) {
            excepted.insert(d.candidate.clone());
        }
    }
    for s in full.states() {
        if reduced.id_of(s).is_none() && props.is_protected(s) && !excepted.contains(s) {
            out.protected_skipped.push(s.clone());
        }
    }
    for arc in full_arcs.difference(&reduced_arcs) {
        if reduced.id_of(&arc.0).is_some() && !explained.contains(arc) {
            out.unexplained_removed.push(arc.clone());
        }
    }
    out
}
