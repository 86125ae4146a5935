//! Signature-based refinement to the coarsest stuttering (branching)
//! bisimulation over an explicit successor relation.

use std::collections::HashMap;

/// How infinite stuttering inside a block is treated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Divergence {
    /// Only terminal states (sole successor is themselves) are marked.
    Blind,
    /// Any state that can stay in its block forever is marked.
    Sensitive,
}

const MARK: usize = usize::MAX;

/// Refines `initial` (a class id per node) until stable and returns the
/// final block id per node. Block ids are dense and ordered by first node.
pub fn refine(succ: &[Vec<usize>], initial: &[usize], divergence: Divergence) -> Vec<usize> {
    let n = succ.len();
    let mut block = renumber(initial);
    let mut count = block.iter().copied().max().map_or(0, |m| m + 1);
    loop {
        let comp = inert_sccs(succ, &block);
        let sigs = signatures(succ, &block, &comp, divergence);
        let mut ids: HashMap<(usize, &[usize]), usize> = HashMap::new();
        let mut next = vec![0; n];
        for s in 0..n {
            let key = (block[s], sigs[comp.of[s]].as_slice());
            let fresh = ids.len();
            next[s] = *ids.entry(key).or_insert(fresh);
        }
        let new_count = ids.len();
        block = next;
        if new_count == count {
            return block;
        }
        count = new_count;
    }
}

fn renumber(classes: &[usize]) -> Vec<usize> {
    let mut ids = HashMap::new();
    classes
        .iter()
        .map(|c| {
            let fresh = ids.len();
            *ids.entry(*c).or_insert(fresh)
        })
        .collect()
}

struct Components {
    /// Component per node.
    of: Vec<usize>,
    /// Members per component, sinks of the inert graph first.
    members: Vec<Vec<usize>>,
}

/// Tarjan over the arcs that stay inside a block.
fn inert_sccs(succ: &[Vec<usize>], block: &[usize]) -> Components {
    let n = succ.len();
    const NONE: usize = usize::MAX;
    let mut index = vec![NONE; n];
    let mut low = vec![0; n];
    let mut on_stack = vec![false; n];
    let mut stack = Vec::new();
    let mut of = vec![NONE; n];
    let mut members = Vec::new();
    let mut counter = 0;
    let mut frames: Vec<(usize, usize)> = Vec::new();
    for root in 0..n {
        if index[root] != NONE {
            continue;
        }
        frames.push((root, 0));
        index[root] = counter;
        low[root] = counter;
        counter += 1;
        stack.push(root);
        on_stack[root] = true;
        while let Some(&(v, i)) = frames.last() {
            if let Some(&w) = succ[v].get(i) {
                if let Some(top) = frames.last_mut() {
                    top.1 += 1;
                }
                if block[w] != block[v] {
                    continue;
                }
                if index[w] == NONE {
                    index[w] = counter;
                    low[w] = counter;
                    counter += 1;
                    stack.push(w);
                    on_stack[w] = true;
                    frames.push((w, 0));
                } else if on_stack[w] {
                    low[v] = low[v].min(index[w]);
                }
                continue;
            }
            frames.pop();
            if let Some(&(parent, _)) = frames.last() {
                low[parent] = low[parent].min(low[v]);
            }
            if low[v] == index[v] {
                let id = members.len();
                let mut comp = Vec::new();
                loop {
                    let w = stack.pop().expect("tarjan stack");
                    on_stack[w] = false;
                    of[w] = id;
                    comp.push(w);
                    if w == v {
                        break;
                    }
                }
                members.push(comp);
            }
        }
    }
    Components { of, members }
}

/// Sorted set of blocks reachable by an inert path followed by one step
/// out of the block, plus [`MARK`] for divergence or termination.
fn signatures(succ: &[Vec<usize>], block: &[usize], comp: &Components, divergence: Divergence) -> Vec<Vec<usize>> {
    let mut sigs: Vec<Vec<usize>> = Vec::with_capacity(comp.members.len());
    for (c, members) in comp.members.iter().enumerate() {
        let mut sig = Vec::new();
        let mut marked = match divergence {
            Divergence::Sensitive => members.len() > 1 || succ[members[0]].contains(&members[0]),
            Divergence::Blind => members.len() == 1 && succ[members[0]].as_slice() == [members[0]],
        };
        for &s in members {
            for &t in &succ[s] {
                if block[t] != block[s] {
                    sig.push(block[t]);
                } else if comp.of[t] != c {
                    // components are emitted sinks first, so this one is done
                    sig.extend_from_slice(&sigs[comp.of[t]]);
                }
            }
        }
        sig.sort_unstable();
        sig.dedup();
        if marked || sig.last() == Some(&MARK) {
            marked = true;
        }
        if marked && sig.last() != Some(&MARK) {
            sig.push(MARK);
        }
        sigs.push(sig);
    }
    sigs
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn same(b: &[usize], x: usize, y: usize) -> bool {
        b[x] == b[y]
    }

    #[test]
    fn invisible_chain_collapses() {
        // 0 -> 1 -> 2 -> 3 (3 terminal, different label)
        let succ = vec![vec![1], vec![2], vec![3], vec![3]];
        let b = refine(&succ, &[0, 0, 0, 1], Divergence::Blind);
        assert!(same(&b, 0, 1) && same(&b, 1, 2));
        assert!(!same(&b, 0, 3));
    }

    #[test]
    fn lost_branch_is_separated() {
        // 0 -> {1, 2}, 1 -> 3; labels: 0,1 equal, 2 and 3 distinct sinks
        let succ = vec![vec![1, 2], vec![3], vec![2], vec![3]];
        let b = refine(&succ, &[0, 0, 1, 2], Divergence::Blind);
        assert!(!same(&b, 0, 1));
    }

    #[test]
    fn divergence_modes_differ_on_inert_cycle() {
        // 0 <-> 1 with exit 1 -> 3, against 2 -> 3
        let succ = vec![vec![1], vec![0, 3], vec![3], vec![3]];
        let init = [0, 0, 0, 1];
        let blind = refine(&succ, &init, Divergence::Blind);
        assert!(same(&blind, 0, 2));
        let sensitive = refine(&succ, &init, Divergence::Sensitive);
        assert!(!same(&sensitive, 0, 2));
        assert!(same(&sensitive, 0, 1));
    }

    #[test]
    fn terminal_differs_from_exit() {
        let succ = vec![vec![0], vec![2], vec![2]];
        let b = refine(&succ, &[0, 0, 1], Divergence::Blind);
        assert!(!same(&b, 0, 1));
    }

    fn graph() -> impl Strategy<Value = (Vec<Vec<usize>>, Vec<usize>)> {
        (1usize..9).prop_flat_map(|n| {
            (
                prop::collection::vec(prop::collection::vec(0..n, 1..4), n),
                prop::collection::vec(0usize..2, n),
            )
        })
    }

    proptest! {
        #[test]
        fn result_is_stable_and_label_respecting((succ, labels) in graph()) {
            let mut succ = succ;
            for s in succ.iter_mut() {
                s.sort_unstable();
                s.dedup();
            }
            for mode in [Divergence::Blind, Divergence::Sensitive] {
                let b = refine(&succ, &labels, mode);
                for x in 0..succ.len() {
                    for y in 0..succ.len() {
                        if b[x] == b[y] {
                            prop_assert_eq!(labels[x], labels[y]);
                        }
                    }
                }
                // refining the result again changes nothing
                let again = refine(&succ, &b, mode);
                prop_assert_eq!(renumber(&again), renumber(&b));
            }
        }
    }
}
