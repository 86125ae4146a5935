//! Correctness oracles for reduction: a stuttering-equivalence partition
//! over two graphs, and a differential check on a generated formula corpus.

use std::collections::{BTreeSet, HashMap};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::qsctl::{evaluate, AtomicProp, LabelSet, PropSet, Protection, QuantRange, Quantifier, StateRef, TF};
use crate::rg::{GlobalState, Graph, StateId};
use crate::stutter::{refine, Divergence};
use crate::system::CsmSystem;

pub const DIFF_SCHEMA: &str = "csm-diff-report";
pub const DIFF_VERSION: u32 = 1;

/// Blocks over the disjoint union of two graphs: ids of the first graph
/// come first, then those of the second shifted by its length.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    pub block: Vec<usize>,
    pub blocks: Vec<Vec<usize>>,
    first_len: usize,
}

impl Partition {
    pub fn of_first(&self, id: StateId) -> usize {
        self.block[id]
    }

    pub fn of_second(&self, id: StateId) -> usize {
        self.block[self.first_len + id]
    }
}

/// Coarsest divergence-blind stuttering bisimulation on `g1 ⊎ g2`, with
/// terminal states marked so they never merge with states that move on.
pub fn stuttering_classes(g1: &Graph, g2: &Graph, props: &PropSet) -> Partition {
    let n1 = g1.len();
    let mut succ: Vec<Vec<usize>> = Vec::with_capacity(n1 + g2.len());
    let mut labels: Vec<LabelSet> = Vec::with_capacity(n1 + g2.len());
    for (g, offset) in [(g1, 0), (g2, n1)] {
        for s in 0..g.len() {
            succ.push(g.successors(s).iter().map(|&t| t + offset).collect());
            labels.push(props.label(g.state(s), g.outputs(s)));
        }
    }
    let mut ids: HashMap<&LabelSet, usize> = HashMap::new();
    let initial: Vec<usize> = labels
        .iter()
        .map(|l| {
            let fresh = ids.len();
            *ids.entry(l).or_insert(fresh)
        })
        .collect();
    let block = refine(&succ, &initial, Divergence::Blind);
    let count = block.iter().copied().max().map_or(0, |m| m + 1);
    let mut blocks = vec![Vec::new(); count];
    for (s, &b) in block.iter().enumerate() {
        blocks[b].push(s);
    }
    Partition {
        block,
        blocks,
        first_len: n1,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BisimCheck {
    pub bisimilar: bool,
    /// States whose two copies fall into different blocks; the initial
    /// state comes first when it is one of them.
    pub witness: Vec<GlobalState>,
    pub blocks: usize,
}

/// Initial states share a block, and so does every state present in both.
pub fn check_bisimilar(g1: &Graph, g2: &Graph, props: &PropSet) -> BisimCheck {
    let p = stuttering_classes(g1, g2, props);
    let mut witness = Vec::new();
    if p.of_first(g1.initial()) != p.of_second(g2.initial()) {
        witness.push(g1.state(g1.initial()).clone());
    }
    for s in 0..g1.len() {
        if s == g1.initial() {
            continue;
        }
        if let Some(t) = g2.id_of(g1.state(s)) {
            if p.of_first(s) != p.of_second(t) {
                witness.push(g1.state(s).clone());
            }
        }
    }
    BisimCheck {
        bisimilar: witness.is_empty(),
        witness,
        blocks: p.blocks.len(),
    }
}

struct Generator {
    rng: ChaCha8Rng,
    atoms: Vec<AtomicProp>,
    /// Protected states of the full graph, usable as `@s` targets.
    anchors: Vec<GlobalState>,
    /// Anchors whose `in s` atom is present: `@s AX` is allowed there.
    next_anchors: Vec<GlobalState>,
    /// `(state, automaton)` pairs for anchored local next.
    local_anchors: Vec<(GlobalState, usize)>,
    free_local: Vec<usize>,
    ranges: Vec<QuantRange>,
}

impl Generator {
    fn leaf(&mut self) -> TF {
        let base = match self.atoms.choose(&mut self.rng) {
            Some(a) => TF::Atom(a.clone()),
            None => TF::Const(self.rng.gen()),
        };
        if self.rng.gen_bool(0.35) {
            TF::not(base)
        } else {
            base
        }
    }

    /// A formula of temporal depth at most `depth`; `next` allows AX.
    fn formula(&mut self, depth: usize, next: bool) -> TF {
        if depth == 0 || self.rng.gen_bool(0.15) {
            return self.leaf();
        }
        let d = depth - 1;
        loop {
            let f = match self.rng.gen_range(0..14) {
                0 => TF::not(self.formula(depth, next)),
                1 => TF::and(self.formula(d + 1, next), self.formula(d, next)),
                2 => TF::or(self.formula(d, next), self.formula(d + 1, next)),
                3 => TF::implies(self.formula(d, next), self.formula(d + 1, next)),
                4 | 5 => TF::ag(self.formula(d, next)),
                6 | 7 => TF::af(self.formula(d, next)),
                8 => TF::aw(self.formula(d, next), self.formula(d, next)),
                9 if !self.anchors.is_empty() => {
                    let s = self.anchors.choose(&mut self.rng).cloned().expect("anchor");
                    TF::at(StateRef::Fixed(s), self.formula(d + 1, next))
                }
                10 if next && !self.next_anchors.is_empty() => {
                    let s = self.next_anchors.choose(&mut self.rng).cloned().expect("anchor");
                    TF::at(StateRef::Fixed(s), TF::ax(self.formula(d, false)))
                }
                11 if !self.local_anchors.is_empty() => {
                    let (s, a) = self.local_anchors.choose(&mut self.rng).cloned().expect("anchor");
                    TF::at(StateRef::Fixed(s), TF::axa(a, self.formula(d, next)))
                }
                12 if !self.free_local.is_empty() => {
                    let a = *self.free_local.choose(&mut self.rng).expect("automaton");
                    TF::axa(a, self.formula(d, next))
                }
                13 if !self.ranges.is_empty() => {
                    let range = self.ranges.choose(&mut self.rng).cloned().expect("range");
                    let quantifier = if self.rng.gen() {
                        Quantifier::ForAll
                    } else {
                        Quantifier::Exists
                    };
                    let var = format!("v{depth}");
                    let mut body = TF::at(StateRef::Var(var.clone()), self.formula(d, false));
                    if let QuantRange::Explicit(set) = &range {
                        // `in v` is only over π_c when every member's membership atom is
                        let covered = set.iter().all(|s| self.next_anchors.contains(s));
                        if covered && self.rng.gen_bool(0.3) {
                            body = TF::or(TF::Atom(AtomicProp::InState(StateRef::Var(var.clone()))), body);
                        }
                    }
                    TF::quant(quantifier, var, range, body)
                }
                _ => continue,
            };
            return f;
        }
    }
}

/// Deterministic pseudo-random formulas over the atoms of `props`.
///
/// `@s`, explicit quantifier ranges and next operators only refer to states
/// and automata that completion covered; `full` supplies the candidates.
pub fn generate_corpus(props: &PropSet, full: &Graph, max_depth: usize, seed: u64, count: usize) -> Vec<TF> {
    let mut anchors: Vec<GlobalState> = props
        .protected_states(full)
        .into_iter()
        .map(|s| full.state(s).clone())
        .collect();
    anchors.sort();
    let next_anchors = anchors
        .iter()
        .filter(|s| props.contains(&AtomicProp::InState(StateRef::Fixed((*s).clone()))))
        .cloned()
        .collect();
    let arity = full.states().first().map_or(0, |s| s.0.len());
    let mut local_anchors = Vec::new();
    for s in &anchors {
        for a in 0..arity {
            let proj = AtomicProp::InProj {
                automaton: a,
                state: s.component(a),
            };
            if props.contains(&proj) {
                local_anchors.push((s.clone(), a));
            }
        }
    }
    let mut ranges: Vec<QuantRange> = Vec::new();
    for p in &props.protected {
        match p {
            Protection::Proj { automaton, state } => ranges.push(QuantRange::Proj {
                automaton: *automaton,
                state: *state,
            }),
            Protection::All => ranges.push(QuantRange::AllStates),
            Protection::State(_) => {}
        }
    }
    let mut g = Generator {
        rng: ChaCha8Rng::seed_from_u64(seed),
        atoms: props.atoms().to_vec(),
        anchors,
        next_anchors,
        local_anchors,
        free_local: props.free_local_next.iter().copied().collect(),
        ranges,
    };
    if !g.anchors.is_empty() {
        for _ in 0..3 {
            let k = g.rng.gen_range(1..=g.anchors.len().min(3));
            let set: BTreeSet<GlobalState> = g.anchors.choose_multiple(&mut g.rng, k).cloned().collect();
            g.ranges.push(QuantRange::Explicit(set));
        }
    }
    (0..count).map(|_| g.formula(max_depth, true)).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FormulaVerdict {
    pub formula: String,
    pub full: Option<bool>,
    pub reduced: Option<bool>,
    pub matches: bool,
    /// Shared states where the two graphs disagree.
    pub differing_states: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiffReport {
    pub schema: String,
    pub version: u32,
    pub verdicts: Vec<FormulaVerdict>,
    pub mismatches: usize,
    pub states_compared: usize,
}

/// Evaluates every formula on both graphs and compares the initial state
/// and every state present in both.
pub fn check_theorem1(full: &Graph, reduced: &Graph, sys: &CsmSystem, corpus: &[TF]) -> DiffReport {
    let shared: Vec<(StateId, StateId)> = (0..reduced.len())
        .filter_map(|r| full.id_of(reduced.state(r)).map(|f| (f, r)))
        .collect();
    let mut verdicts = Vec::with_capacity(corpus.len());
    for f in corpus {
        let text = f.display(sys).to_string();
        let a = evaluate(full, f, sys);
        let b = evaluate(reduced, f, sys);
        let v = match (a, b) {
            (Ok(a), Ok(b)) => {
                let differing_states: Vec<String> = shared
                    .iter()
                    .filter(|&&(x, y)| a.satisfying[x] != b.satisfying[y])
                    .map(|&(x, _)| full.state(x).display(sys).to_string())
                    .collect();
                FormulaVerdict {
                    formula: text,
                    full: Some(a.holds_initially),
                    reduced: Some(b.holds_initially),
                    matches: a.holds_initially == b.holds_initially && differing_states.is_empty(),
                    differing_states,
                    error: None,
                }
            }
            (a, b) => {
                let error = match (&a, &b) {
                    (Err(e), _) | (_, Err(e)) => e.to_string(),
                    _ => unreachable!(),
                };
                FormulaVerdict {
                    formula: text,
                    full: a.ok().map(|e| e.holds_initially),
                    reduced: b.ok().map(|e| e.holds_initially),
                    matches: false,
                    differing_states: Vec::new(),
                    error: Some(error),
                }
            }
        };
        verdicts.push(v);
    }
    let mismatches = verdicts.iter().filter(|v| !v.matches).count();
    DiffReport {
        schema: DIFF_SCHEMA.to_string(),
        version: DIFF_VERSION,
        verdicts,
        mismatches,
        states_compared: shared.len(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formula::SignalId;
    use crate::qsctl::complete_props;
    use crate::reducer::{reduce_offline, ReductionContext};
    use crate::rg::{build_rg_minus_at, GraphBuilder, GraphKind, DEFAULT_STATE_CAP};
    use crate::system::parse_system;
    use proptest::prelude::*;

    fn graph(n: usize, arcs: &[(usize, usize)], outputs: &[&[u32]]) -> Graph {
        let mut b = GraphBuilder::new();
        for i in 0..n {
            let out = outputs
                .get(i)
                .map(|o| o.iter().map(|&x| SignalId(x)).collect())
                .unwrap_or_default();
            b.add_state(GlobalState(vec![i as u32]), out);
        }
        for &(s, t) in arcs {
            b.add_arc(s, t);
        }
        b.finish(0, GraphKind::RgMinusAt)
    }

    fn props(signals: &[u32]) -> PropSet {
        PropSet::from_atoms(signals.iter().map(|&s| AtomicProp::Signal(SignalId(s))))
    }

    #[test]
    fn identical_graphs_are_bisimilar() {
        let g = graph(3, &[(0, 1), (1, 2), (2, 0)], &[&[0], &[], &[1]]);
        let c = check_bisimilar(&g, &g, &props(&[0, 1]));
        assert!(c.bisimilar);
        let p = stuttering_classes(&g, &g, &props(&[0, 1]));
        for s in 0..3 {
            assert_eq!(p.of_first(s), p.of_second(s));
        }
    }

    #[test]
    fn chain_and_its_reduction_share_blocks() {
        // s_i -> s_j -> s_k against s_i' -> s_k'
        let full = graph(3, &[(0, 1), (1, 2), (2, 2)], &[&[], &[], &[0]]);
        let mut b = GraphBuilder::new();
        b.add_state(GlobalState(vec![0]), vec![]);
        b.add_state(GlobalState(vec![2]), vec![SignalId(0)]);
        b.add_arc(0, 1);
        b.add_arc(1, 1);
        let reduced = b.finish(0, GraphKind::Rrg);
        let p = stuttering_classes(&full, &reduced, &props(&[0]));
        assert_eq!(p.of_first(0), p.of_first(1));
        assert_eq!(p.of_first(0), p.of_second(0));
        assert!(check_bisimilar(&full, &reduced, &props(&[0])).bisimilar);
    }

    #[test]
    fn asymmetry_guard() {
        // full: s_i -> {s_j, s_n}, s_j -> s_k; reduced: s_i' -> {s_k, s_n}
        let full = graph(4, &[(0, 1), (0, 2), (1, 3), (2, 2), (3, 3)], &[&[], &[], &[0], &[1]]);
        let mut b = GraphBuilder::new();
        b.add_state(GlobalState(vec![0]), vec![]);
        b.add_state(GlobalState(vec![2]), vec![SignalId(0)]);
        b.add_state(GlobalState(vec![3]), vec![SignalId(1)]);
        for (s, t) in [(0, 1), (0, 2), (1, 1), (2, 2)] {
            b.add_arc(s, t);
        }
        let reduced = b.finish(0, GraphKind::Rrg);
        let p = stuttering_classes(&full, &reduced, &props(&[0, 1]));
        assert_ne!(p.of_first(1), p.of_second(0));
        let c = check_bisimilar(&full, &reduced, &props(&[0, 1]));
        assert!(!c.bisimilar);
        assert_eq!(c.witness, vec![GlobalState(vec![0])]);
    }

    #[test]
    fn removed_visible_arc_is_detected() {
        let full = graph(3, &[(0, 1), (0, 2), (1, 1), (2, 2)], &[&[], &[0], &[1]]);
        let cut = graph(3, &[(0, 1), (1, 1), (2, 2)], &[&[], &[0], &[1]]);
        let c = check_bisimilar(&full, &cut, &props(&[0, 1]));
        assert!(!c.bisimilar);
        assert!(!c.witness.is_empty());
    }

    const RHOMBUS: &str = "
system rhombus
automaton A {
  state 0 init outputs { p }
  state 1 outputs { p q }
  arc 0 -> 0 when 1
  arc 0 -> 1 when 1
  arc 1 -> 1 when 1
}
automaton B {
  state 0 init
  state 1
  arc 0 -> 0 when 1
  arc 0 -> 1 when 1
  arc 1 -> 1 when 1
}
";

    #[test]
    fn corpus_is_deterministic_and_bounded() {
        let sys = parse_system(RHOMBUS).unwrap();
        let g = build_rg_minus_at(&sys, DEFAULT_STATE_CAP).unwrap();
        let f = crate::qsctl::parse_temporal("AG (p -> AF q)", &sys).unwrap();
        let props = complete_props(&[f], &sys);
        let a = generate_corpus(&props, &g, 3, 7, 200);
        let b = generate_corpus(&props, &g, 3, 7, 200);
        assert_eq!(a, b);
        assert!(a.iter().all(|f| f.temporal_depth() <= 3));
        assert!(a.iter().any(|f| f.temporal_depth() == 3));
        let shallow = generate_corpus(&props, &g, 0, 1, 50);
        for f in &shallow {
            let inner = match f {
                TF::Not(x) => &**x,
                x => x,
            };
            assert!(matches!(inner, TF::Atom(_)), "{}", f.display(&sys));
        }
    }

    #[test]
    fn corpus_uses_next_only_where_completed() {
        let sys = parse_system(RHOMBUS).unwrap();
        let g = build_rg_minus_at(&sys, DEFAULT_STATE_CAP).unwrap();
        let f = crate::qsctl::parse_temporal("@<A.0,B.0> AX p & AG AX@B q", &sys).unwrap();
        let props = complete_props(&[f], &sys);
        assert!(props.reduction_allowed);
        let corpus = generate_corpus(&props, &g, 3, 3, 300);
        assert!(corpus.iter().any(|f| f.contains_next()));
    }

    #[test]
    fn rhombus_reduction_passes_the_differential_check() {
        let sys = parse_system(RHOMBUS).unwrap();
        let g = build_rg_minus_at(&sys, DEFAULT_STATE_CAP).unwrap();
        let f = crate::qsctl::parse_temporal("AG p", &sys).unwrap();
        let props = complete_props(&[f], &sys);
        let (r, _) = reduce_offline(&g, &ReductionContext::new(props.clone()));
        assert!(r.len() < g.len());
        let corpus = generate_corpus(&props, &g, 3, 11, 200);
        let d = check_theorem1(&g, &r, &sys, &corpus);
        assert_eq!(d.mismatches, 0, "{:?}", d.verdicts.iter().find(|v| !v.matches));
        assert!(check_bisimilar(&g, &r, &props).bisimilar);
    }

    #[test]
    fn identical_graphs_never_mismatch() {
        let sys = parse_system(RHOMBUS).unwrap();
        let g = build_rg_minus_at(&sys, DEFAULT_STATE_CAP).unwrap();
        let props = complete_props(&[crate::qsctl::parse_temporal("AX AX q", &sys).unwrap()], &sys);
        let (r, _) = reduce_offline(&g, &ReductionContext::new(props.clone()));
        let corpus = generate_corpus(&props, &g, 2, 5, 50);
        assert_eq!(check_theorem1(&g, &r, &sys, &corpus).mismatches, 0);
    }

    #[test]
    fn lost_branch_is_caught_by_the_corpus() {
        // the bare rule on s_i -> {s_j, s_n}, s_j -> s_k
        let sys = parse_system(
            "
system branch
automaton A {
  state i init
  state j
  state n outputs { n }
  state k outputs { k }
  arc i -> j when 1
  arc i -> n when 1
  arc j -> k when 1
  arc n -> n when 1
  arc k -> k when 1
}
",
        )
        .unwrap();
        let g = build_rg_minus_at(&sys, DEFAULT_STATE_CAP).unwrap();
        let f = crate::qsctl::parse_temporal("AG (n | k | !n)", &sys).unwrap();
        let props = complete_props(&[f], &sys);
        let literal = ReductionContext {
            stutter_guard: false,
            ..ReductionContext::new(props.clone())
        };
        let (bare, _) = reduce_offline(&g, &literal);
        assert_eq!(bare.len(), g.len() - 1);
        let probe = crate::qsctl::parse_temporal("!AG !(!n & !k & AG !n)", &sys).unwrap();
        let d = check_theorem1(&g, &bare, &sys, &[probe]);
        assert_eq!(d.mismatches, 1);
        assert!(!check_bisimilar(&g, &bare, &props).bisimilar);
        let (guarded, _) = reduce_offline(&g, &ReductionContext::new(props));
        assert_eq!(guarded.len(), g.len());
    }

    /// Naive greatest-fixpoint branching bisimulation on one graph, with
    /// terminal states redirected to a fresh sink carrying its own label.
    fn naive_classes(succ: &[Vec<usize>], labels: &[usize]) -> Vec<Vec<bool>> {
        let n = succ.len();
        let sink = n;
        let mut next: Vec<Vec<usize>> = succ
            .iter()
            .enumerate()
            .map(|(s, ts)| if ts.as_slice() == [s] { vec![sink] } else { ts.clone() })
            .collect();
        next.push(vec![sink]);
        let mut lab = labels.to_vec();
        lab.push(usize::MAX);
        let m = n + 1;
        let mut rel = vec![vec![false; m]; m];
        for x in 0..m {
            for y in 0..m {
                rel[x][y] = lab[x] == lab[y];
            }
        }
        loop {
            let mut changed = false;
            for x in 0..m {
                for y in 0..m {
                    if !rel[x][y] {
                        continue;
                    }
                    let ok = next[x].iter().all(|&x2| {
                        if rel[x2][y] {
                            return true;
                        }
                        // y moves inertly (staying related to x), then steps to match x2
                        let mut seen = vec![false; m];
                        let mut stack = vec![y];
                        seen[y] = true;
                        while let Some(u) = stack.pop() {
                            for &v in &next[u] {
                                if rel[x2][v] {
                                    return true;
                                }
                                if rel[x][v] && !seen[v] {
                                    seen[v] = true;
                                    stack.push(v);
                                }
                            }
                        }
                        false
                    });
                    if !ok {
                        rel[x][y] = false;
                        rel[y][x] = false;
                        changed = true;
                    }
                }
            }
            if !changed {
                return rel;
            }
        }
    }

    fn small_graph() -> impl Strategy<Value = (Vec<Vec<usize>>, Vec<usize>)> {
        (1usize..7).prop_flat_map(|n| {
            (
                prop::collection::vec(prop::collection::btree_set(0..n, 1..3), n),
                prop::collection::vec(0usize..2, n),
            )
                .prop_map(|(succ, labels)| (succ.into_iter().map(|s| s.into_iter().collect()).collect(), labels))
        })
    }

    proptest! {
        #[test]
        fn refinement_matches_naive_bisimulation((succ, labels) in small_graph()) {
            let blocks = refine(&succ, &labels, Divergence::Blind);
            let rel = naive_classes(&succ, &labels);
            for x in 0..succ.len() {
                for y in 0..succ.len() {
                    prop_assert_eq!(blocks[x] == blocks[y], rel[x][y], "states {} and {}", x, y);
                }
            }
        }
    }
}
