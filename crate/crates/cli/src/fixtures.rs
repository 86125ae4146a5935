//! Instance families shared by the acceptance suite and `csm bench`.
//!
//! Every fixture is plain text in the system and formula formats, so tests
//! can also write it to disk and drive the binary with it.

use std::fmt::Write as _;

use anyhow::Context;
use csm_core::qsctl::{parse_formula_file, TF};
use csm_core::system::{parse_system, CsmSystem};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fixture {
    pub name: String,
    pub system: String,
    /// One formula per line.
    pub formulas: String,
}

impl Fixture {
    pub fn load(&self) -> anyhow::Result<(CsmSystem, Vec<TF>)> {
        let sys = parse_system(&self.system).with_context(|| format!("fixture {}", self.name))?;
        let formulas = parse_formula_file(&self.formulas, &sys).with_context(|| format!("fixture {}", self.name))?;
        Ok((sys, formulas))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Family {
    Chain,
    RhombusLadder,
    NearClique,
    Cycle,
}

impl Family {
    pub fn build(self, n: usize) -> Fixture {
        match self {
            Family::Chain => chain(n),
            Family::RhombusLadder => rhombus_ladder(n),
            Family::NearClique => near_clique(n),
            Family::Cycle => entered_cycle(n),
        }
    }
}

/// Two automata whose initial states output `{p q}` and `{q m}`.
pub fn two_by_two() -> Fixture {
    Fixture {
        name: "two-by-two".into(),
        system: "\
system pair
automaton A {
  state 1 init outputs { p q }
  state 2
  arc 1 -> 2 when m
  arc 1 -> 1 when !m
  arc 2 -> 1 when 1
}
automaton B {
  state 3 init outputs { q m }
  state 4
  arc 3 -> 4 when p
  arc 3 -> 3 when !p
  arc 4 -> 3 when 1
}
"
        .into(),
        formulas: "AG (p -> AF m)\n".into(),
    }
}

/// `s0 -> s1 -> ... -> sn`, only `sn` outputs `p` and it is terminal.
pub fn chain(n: usize) -> Fixture {
    let mut s = String::from("system chain\nautomaton A {\n");
    for i in 0..=n {
        let init = if i == 0 { " init" } else { "" };
        let out = if i == n { " outputs { p }" } else { "" };
        let _ = writeln!(s, "  state s{i}{init}{out}");
    }
    for i in 0..n {
        let _ = writeln!(s, "  arc s{i} -> s{} when 1", i + 1);
    }
    let _ = writeln!(s, "  arc s{n} -> s{n} when 1\n}}");
    Fixture {
        name: format!("chain-{n}"),
        system: s,
        formulas: "AF p\n".into(),
    }
}

/// Two automata that may each advance once; the product is the rhombus
/// `i -> {j1, j2, k}`, `j1 -> k`, `j2 -> k` with every state outputting `p`.
pub fn rhombus() -> Fixture {
    Fixture {
        name: "rhombus".into(),
        system: "\
system rhombus
automaton A {
  state 0 init outputs { p }
  state 1 outputs { p }
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
"
        .into(),
        formulas: "AG p\n".into(),
    }
}

/// Two automata, each a chain of `n` optional steps: an `(n+1)²` grid with
/// diagonals. Only the last state of `A` outputs `p`.
pub fn rhombus_ladder(n: usize) -> Fixture {
    let mut s = String::from("system ladder\n");
    for (name, out) in [("A", true), ("B", false)] {
        let _ = writeln!(s, "automaton {name} {{");
        for i in 0..=n {
            let init = if i == 0 { " init" } else { "" };
            let o = if out && i == n { " outputs { p }" } else { "" };
            let _ = writeln!(s, "  state s{i}{init}{o}");
        }
        for i in 0..n {
            let _ = writeln!(s, "  arc s{i} -> s{i} when 1");
            let _ = writeln!(s, "  arc s{i} -> s{} when 1", i + 1);
        }
        let _ = writeln!(s, "  arc s{n} -> s{n} when 1\n}}");
    }
    Fixture {
        name: format!("rhombus-ladder-{n}"),
        system: s,
        formulas: "AF p\n".into(),
    }
}

/// One automaton with an arc between every ordered pair of distinct states;
/// state 0 outputs `p`.
pub fn near_clique(n: usize) -> Fixture {
    let n = n.max(2);
    let mut s = String::from("system clique\nautomaton A {\n");
    for i in 0..n {
        let init = if i == 0 { " init outputs { p }" } else { "" };
        let _ = writeln!(s, "  state s{i}{init}");
    }
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let _ = writeln!(s, "  arc s{i} -> s{j} when 1");
            }
        }
    }
    s.push_str("}\n");
    Fixture {
        name: format!("near-clique-{n}"),
        system: s,
        formulas: "AG AF p\n".into(),
    }
}

/// An entry state `e` leading into the cycle `c0 -> ... -> c(k-1) -> c0`;
/// every state outputs `p`, so every arc is invisible.
pub fn entered_cycle(k: usize) -> Fixture {
    let k = k.max(1);
    let mut s = String::from("system cycle\nautomaton A {\n  state e init outputs { p }\n");
    for i in 0..k {
        let _ = writeln!(s, "  state c{i} outputs {{ p }}");
    }
    s.push_str("  arc e -> c0 when 1\n");
    for i in 0..k {
        let _ = writeln!(s, "  arc c{i} -> c{} when 1", (i + 1) % k);
    }
    s.push_str("}\n");
    Fixture {
        name: format!("cycle-{k}"),
        system: s,
        formulas: "AG p\n".into(),
    }
}

const SIGNALS: [&str; 4] = ["p", "q", "r", "m"];

fn random_guard(rng: &mut ChaCha8Rng, signals: &[&str]) -> String {
    let atom = |rng: &mut ChaCha8Rng| {
        let s = signals.choose(rng).expect("signals");
        if rng.gen_bool(0.4) {
            format!("!{s}")
        } else {
            s.to_string()
        }
    };
    match rng.gen_range(0..6) {
        0 | 1 => "1".to_string(),
        2 => atom(rng),
        3 => format!("{} & {}", atom(rng), atom(rng)),
        _ => format!("{} | {}", atom(rng), atom(rng)),
    }
}

/// A random complete system of 2–3 automata with at most 5 states each,
/// plus 1–3 formulas that give it a nontrivial completed proposition set.
pub fn random_system(seed: u64) -> Fixture {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let automata = rng.gen_range(2..=3);
    let names = ["A", "B", "C"];
    let sizes: Vec<usize> = (0..automata).map(|_| rng.gen_range(2..=5)).collect();
    let outputs: Vec<Vec<Vec<&str>>> = sizes
        .iter()
        .map(|&n| {
            (0..n)
                .map(|_| SIGNALS.iter().copied().filter(|_| rng.gen_bool(0.2)).collect())
                .collect()
        })
        .collect();
    let mut used: Vec<&str> = outputs.iter().flatten().flatten().copied().collect();
    used.sort_unstable();
    used.dedup();
    let mut s = format!("system random{seed}\n");
    for (a, &n) in sizes.iter().enumerate() {
        let _ = writeln!(s, "automaton {} {{", names[a]);
        for (i, outs) in outputs[a].iter().enumerate() {
            let init = if i == 0 { " init" } else { "" };
            let out = if outs.is_empty() {
                String::new()
            } else {
                format!(" outputs {{ {} }}", outs.join(" "))
            };
            let _ = writeln!(s, "  state {i}{init}{out}");
        }
        for i in 0..n {
            let degree = if used.is_empty() { 1 } else { rng.gen_range(1..=3) };
            // one arc always advances around the ring so every state is reachable
            let mut targets: Vec<usize> = (1..degree).map(|_| rng.gen_range(0..n)).collect();
            targets.push((i + 1) % n);
            targets.shuffle(&mut rng);
            let mut guards: Vec<String> = Vec::new();
            for &t in &targets[..degree - 1] {
                let g = random_guard(&mut rng, &used);
                let _ = writeln!(s, "  arc {i} -> {t} when {g}");
                guards.push(format!("({g})"));
            }
            let last = if guards.is_empty() {
                "1".to_string()
            } else {
                format!("!({})", guards.join(" | "))
            };
            let _ = writeln!(s, "  arc {i} -> {} when {last}", targets[degree - 1]);
        }
        s.push_str("}\n");
    }
    let tuple = |rng: &mut ChaCha8Rng| {
        let parts: Vec<String> = (0..automata)
            .map(|a| format!("{}.{}", names[a], rng.gen_range(0..sizes[a])))
            .collect();
        format!("<{}>", parts.join(","))
    };
    let initial = {
        let parts: Vec<String> = (0..automata).map(|a| format!("{}.0", names[a])).collect();
        format!("<{}>", parts.join(","))
    };
    let sig = |rng: &mut ChaCha8Rng| used.choose(rng).copied().unwrap_or("true").to_string();
    let mut formulas = String::new();
    for _ in 0..rng.gen_range(1..=3) {
        let a = sig(&mut rng);
        let b = sig(&mut rng);
        let aut = rng.gen_range(0..automata);
        let line = match rng.gen_range(0..20) {
            0..=3 => format!("AG ({a} -> AF {b})"),
            4 | 5 => format!("A[ {a} W {b} ]"),
            6 | 7 => format!("AF {a} & AG !{b}"),
            8 | 9 => format!("@{initial} AX {a}"),
            10 => format!("@{} AX {a}", tuple(&mut rng)),
            11 | 12 => format!("AG AX@{} {a}", names[aut]),
            13 => format!("@{initial} AX@{} {a}", names[aut]),
            14 | 15 => format!("forall v in {{{}, {}}}: @v AF {a}", tuple(&mut rng), tuple(&mut rng)),
            16 => format!("exists v in proj {}.0: @v {a}", names[aut]),
            17 => format!("AG {a}"),
            18 => format!("in {} | AF {a}", tuple(&mut rng)),
            _ => format!("AX AX {a}"),
        };
        formulas.push_str(&line);
        formulas.push('\n');
    }
    Fixture {
        name: format!("random-{seed}"),
        system: s,
        formulas,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use csm_core::rg::{build_rg_minus_at, DEFAULT_STATE_CAP};

    #[test]
    fn families_parse_and_build() {
        for f in [
            two_by_two(),
            chain(5),
            rhombus(),
            rhombus_ladder(3),
            near_clique(5),
            entered_cycle(4),
        ] {
            let (sys, formulas) = f.load().unwrap();
            assert!(sys.validate().passed(), "{}", f.name);
            assert!(!formulas.is_empty());
            build_rg_minus_at(&sys, DEFAULT_STATE_CAP).unwrap();
        }
    }

    #[test]
    fn family_sizes() {
        let size = |f: Fixture| {
            let (sys, _) = f.load().unwrap();
            let g = build_rg_minus_at(&sys, DEFAULT_STATE_CAP).unwrap();
            (g.len(), g.arc_count())
        };
        assert_eq!(size(chain(5)), (6, 6));
        assert_eq!(size(rhombus()), (4, 6));
        assert_eq!(size(rhombus_ladder(2)), (9, 17));
        assert_eq!(size(near_clique(4)), (4, 12));
        assert_eq!(size(entered_cycle(4)), (5, 5));
    }

    #[test]
    fn random_systems_are_complete_and_deterministic() {
        for seed in 0..100 {
            let f = random_system(seed);
            assert_eq!(f, random_system(seed));
            let (sys, _) = f.load().unwrap();
            assert!(sys.validate().passed(), "{}", f.system);
            assert!((2..=3).contains(&sys.automata.len()));
            assert!(sys.automata.iter().all(|a| a.states.len() <= 5));
        }
    }
}
