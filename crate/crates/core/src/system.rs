//! Component automata and their composition into a system.
//!
//! Text format (line oriented, `#` starts a comment):
//!
//! ```text
//! system <name>
//! external { e1 e2 }
//! automaton <name> {
//!   state <name> [init] [outputs { p q }]
//!   arc <src> -> <dst> when <bool-formula>
//! }
//! ```
//!
//! Arcs may refer to states declared later in the same automaton. Guards are
//! resolved once all outputs and external signals are known.

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::formula::{is_identifier, parse_bool_formula, Alphabet, BoolFormula, FormulaError, SignalId};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ComponentState {
    pub name: String,
    /// Moore outputs, sorted.
    pub outputs: Vec<SignalId>,
    pub is_initial: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ComponentArc {
    pub src: usize,
    pub dst: usize,
    pub guard: BoolFormula,
}

impl ComponentArc {
    pub fn is_ear(&self) -> bool {
        self.src == self.dst
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CsmAutomaton {
    pub name: String,
    pub states: Vec<ComponentState>,
    pub arcs: Vec<ComponentArc>,
    /// Arc indices leaving each state, in declaration order.
    out_arcs: Vec<Vec<usize>>,
}

impl CsmAutomaton {
    pub fn new(name: impl Into<String>, states: Vec<ComponentState>, arcs: Vec<ComponentArc>) -> Self {
        let mut out_arcs = vec![Vec::new(); states.len()];
        for (i, arc) in arcs.iter().enumerate() {
            out_arcs[arc.src].push(i);
        }
        CsmAutomaton {
            name: name.into(),
            states,
            arcs,
            out_arcs,
        }
    }

    pub fn outgoing(&self, state: usize) -> impl Iterator<Item = &ComponentArc> + '_ {
        self.out_arcs[state].iter().map(move |&i| &self.arcs[i])
    }

    pub fn state_index(&self, name: &str) -> Option<usize> {
        self.states.iter().position(|s| s.name == name)
    }

    /// Index of the first state flagged initial.
    pub fn initial(&self) -> Option<usize> {
        self.states.iter().position(|s| s.is_initial)
    }

    /// A component state all of whose outgoing arcs are ears.
    pub fn is_terminal(&self, state: usize) -> bool {
        self.outgoing(state).all(ComponentArc::is_ear)
    }

    /// Disjunction of the guards leaving `state`.
    pub fn exit_condition(&self, state: usize) -> BoolFormula {
        self.outgoing(state)
            .map(|a| a.guard.clone())
            .reduce(BoolFormula::or)
            .unwrap_or(BoolFormula::ConstFalse)
    }
}

/// How external signals are supplied to each lock-step transition.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum EnvironmentPolicy {
    /// External signals are never active.
    #[default]
    Closed,
    /// Every subset of the external signals is tried at every step.
    AllSubsets,
    /// The given external signals are permanently active.
    Fixed(BTreeSet<SignalId>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CsmSystem {
    pub name: String,
    pub alphabet: Alphabet,
    pub automata: Vec<CsmAutomaton>,
    pub external: BTreeSet<SignalId>,
    pub environment: EnvironmentPolicy,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SystemError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}: guard: {source}")]
    Guard { line: usize, source: FormulaError },
    #[error("duplicate automaton `{0}`")]
    DuplicateAutomaton(String),
    #[error("automaton `{automaton}`: duplicate state `{state}`")]
    DuplicateState { automaton: String, state: String },
    #[error("automaton `{automaton}`: arc endpoint `{state}` is not a declared state")]
    DanglingArc { automaton: String, state: String },
    #[error("automaton `{automaton}` has {count} initial states, expected exactly one")]
    InitialCount { automaton: String, count: usize },
    #[error("system declares no automata")]
    NoAutomata,
    #[error("signal `{0}` is not external")]
    NotExternal(String),
}

impl CsmSystem {
    pub fn automaton_index(&self, name: &str) -> Option<usize> {
        self.automata.iter().position(|a| a.name == name)
    }

    /// Tuple of component initial states.
    pub fn initial_tuple(&self) -> Vec<u32> {
        self.automata
            .iter()
            .map(|a| a.initial().expect("validated automaton has an initial state") as u32)
            .collect()
    }

    pub fn signal_name(&self, id: SignalId) -> &str {
        self.alphabet.name(id)
    }

    /// Replaces the environment policy, checking that fixed signals are external.
    pub fn with_environment(mut self, policy: EnvironmentPolicy) -> Result<Self, SystemError> {
        if let EnvironmentPolicy::Fixed(sigs) = &policy {
            if let Some(s) = sigs.iter().find(|s| !self.external.contains(s)) {
                return Err(SystemError::NotExternal(self.alphabet.name(*s).to_string()));
            }
        }
        self.environment = policy;
        Ok(self)
    }

    /// External assignments tried at every step under the current policy.
    pub fn external_assignments(&self) -> Vec<Vec<SignalId>> {
        match &self.environment {
            EnvironmentPolicy::Closed => vec![Vec::new()],
            EnvironmentPolicy::Fixed(s) => vec![s.iter().copied().collect()],
            EnvironmentPolicy::AllSubsets => {
                let ext: Vec<SignalId> = self.external.iter().copied().collect();
                (0u64..(1u64 << ext.len()))
                    .map(|mask| {
                        ext.iter()
                            .enumerate()
                            .filter(|(i, _)| mask & (1 << i) != 0)
                            .map(|(_, s)| *s)
                            .collect()
                    })
                    .collect()
            }
        }
    }

    pub fn validate(&self) -> ValidationReport {
        let mut automata = Vec::new();
        for aut in &self.automata {
            let initial_count = aut.states.iter().filter(|s| s.is_initial).count();
            let states = (0..aut.states.len())
                .map(|i| {
                    let verdict = match aut.exit_condition(i).is_tautology() {
                        Ok(true) => Completeness::Complete,
                        Ok(false) => Completeness::Incomplete,
                        Err(e) => Completeness::Undecided(e.to_string()),
                    };
                    StateCompleteness {
                        state: aut.states[i].name.clone(),
                        verdict,
                    }
                })
                .collect();
            automata.push(AutomatonReport {
                automaton: aut.name.clone(),
                initial_count,
                states,
            });
        }
        ValidationReport { automata }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Completeness {
    Complete,
    Incomplete,
    Undecided(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateCompleteness {
    pub state: String,
    pub verdict: Completeness,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AutomatonReport {
    pub automaton: String,
    pub initial_count: usize,
    pub states: Vec<StateCompleteness>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub automata: Vec<AutomatonReport>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.automata
            .iter()
            .all(|a| a.initial_count == 1 && a.states.iter().all(|s| s.verdict == Completeness::Complete))
    }

    /// `automaton.state` names of every state whose guards do not cover all inputs.
    pub fn incomplete_states(&self) -> Vec<String> {
        self.automata
            .iter()
            .flat_map(|a| {
                a.states
                    .iter()
                    .filter(|s| s.verdict != Completeness::Complete)
                    .map(move |s| format!("{}.{}", a.automaton, s.state))
            })
            .collect()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for a in &self.automata {
            let initial = if a.initial_count == 1 { "ok" } else { "FAIL" };
            writeln!(
                f,
                "automaton {}: initial states {} [{}]",
                a.automaton, a.initial_count, initial
            )?;
            for s in &a.states {
                match &s.verdict {
                    Completeness::Complete => writeln!(f, "  state {}: complete", s.state)?,
                    Completeness::Incomplete => writeln!(f, "  state {}: INCOMPLETE", s.state)?,
                    Completeness::Undecided(why) => writeln!(f, "  state {}: UNDECIDED ({why})", s.state)?,
                }
            }
        }
        write!(f, "{}", if self.passed() { "PASS" } else { "FAIL" })
    }
}

struct RawArc {
    line: usize,
    src: String,
    dst: String,
    guard: String,
}

struct RawAutomaton {
    name: String,
    states: Vec<(String, bool, Vec<String>)>,
    arcs: Vec<RawArc>,
}

fn strip_comment(line: &str) -> &str {
    match line.find('#') {
        Some(i) => &line[..i],
        None => line,
    }
}

/// Parses `{ a b c }` at the start of `rest`; returns the names and the remainder.
fn parse_brace_list(rest: &str, line: usize) -> Result<(Vec<String>, &str), SystemError> {
    let rest = rest.trim_start();
    let Some(body) = rest.strip_prefix('{') else {
        return Err(SystemError::Syntax {
            line,
            message: "expected `{`".into(),
        });
    };
    let Some(close) = body.find('}') else {
        return Err(SystemError::Syntax {
            line,
            message: "missing `}`".into(),
        });
    };
    let names: Vec<String> = body[..close].split_whitespace().map(str::to_string).collect();
    if let Some(bad) = names.iter().find(|n| !is_identifier(n)) {
        return Err(SystemError::Syntax {
            line,
            message: format!("`{bad}` is not an identifier"),
        });
    }
    Ok((names, &body[close + 1..]))
}

fn ident(word: Option<&str>, line: usize, what: &str) -> Result<String, SystemError> {
    match word {
        Some(w) if is_identifier(w) => Ok(w.to_string()),
        Some(w) => Err(SystemError::Syntax {
            line,
            message: format!("`{w}` is not a valid {what}"),
        }),
        None => Err(SystemError::Syntax {
            line,
            message: format!("missing {what}"),
        }),
    }
}

pub fn parse_system(text: &str) -> Result<CsmSystem, SystemError> {
    let mut name = None;
    let mut external_names: Vec<String> = Vec::new();
    let mut raw: Vec<RawAutomaton> = Vec::new();
    let mut open: Option<RawAutomaton> = None;

    for (i, full) in text.lines().enumerate() {
        let line = i + 1;
        let l = strip_comment(full).trim();
        if l.is_empty() {
            continue;
        }
        let syntax = |message: String| SystemError::Syntax { line, message };
        let mut words = l.split_whitespace();
        let head = words.next().unwrap();
        match (&mut open, head) {
            (None, "system") => {
                if name.is_some() {
                    return Err(syntax("second `system` header".into()));
                }
                name = Some(ident(words.next(), line, "system name")?);
                if words.next().is_some() {
                    return Err(syntax("trailing input after system name".into()));
                }
            }
            (None, "external") => {
                let (names, rest) = parse_brace_list(&l["external".len()..], line)?;
                if !rest.trim().is_empty() {
                    return Err(syntax("trailing input after external list".into()));
                }
                external_names.extend(names);
            }
            (None, "automaton") => {
                let aut_name = ident(words.next(), line, "automaton name")?;
                if words.next() != Some("{") || words.next().is_some() {
                    return Err(syntax("expected `automaton <name> {`".into()));
                }
                open = Some(RawAutomaton {
                    name: aut_name,
                    states: Vec::new(),
                    arcs: Vec::new(),
                });
            }
            (Some(aut), "state") => {
                let state_name = ident(words.next(), line, "state name")?;
                let mut rest = l["state".len()..].trim_start()[state_name.len()..].trim_start();
                let mut is_init = false;
                let mut outputs = Vec::new();
                while !rest.is_empty() {
                    if let Some(r) = rest.strip_prefix("init") {
                        if is_init {
                            return Err(syntax("`init` given twice".into()));
                        }
                        is_init = true;
                        rest = r.trim_start();
                    } else if let Some(r) = rest.strip_prefix("outputs") {
                        let (names, r) = parse_brace_list(r, line)?;
                        outputs.extend(names);
                        rest = r.trim_start();
                    } else {
                        return Err(syntax(format!("unexpected `{rest}` in state declaration")));
                    }
                }
                aut.states.push((state_name, is_init, outputs));
            }
            (Some(aut), "arc") => {
                let src = ident(words.next(), line, "arc source")?;
                if words.next() != Some("->") {
                    return Err(syntax("expected `->`".into()));
                }
                let dst = ident(words.next(), line, "arc target")?;
                if words.next() != Some("when") {
                    return Err(syntax("expected `when <guard>`".into()));
                }
                let guard = l.split_once(" when ").map_or("", |x| x.1).trim().to_string();
                aut.arcs.push(RawArc { line, src, dst, guard });
            }
            (Some(_), "}") => {
                if words.next().is_some() {
                    return Err(syntax("trailing input after `}`".into()));
                }
                raw.push(open.take().unwrap());
            }
            (Some(_), other) => return Err(syntax(format!("unexpected `{other}` inside automaton"))),
            (None, other) => return Err(syntax(format!("unexpected `{other}`"))),
        }
    }
    if let Some(aut) = open {
        return Err(SystemError::Syntax {
            line: text.lines().count(),
            message: format!("automaton `{}` is not closed", aut.name),
        });
    }
    let name = name.ok_or(SystemError::Syntax {
        line: 1,
        message: "missing `system <name>` header".into(),
    })?;
    if raw.is_empty() {
        return Err(SystemError::NoAutomata);
    }

    // alphabet: outputs in declaration order, then external signals
    let mut alphabet = Alphabet::new();
    for aut in &raw {
        for (_, _, outs) in &aut.states {
            for o in outs {
                alphabet.intern(o);
            }
        }
    }
    let external: BTreeSet<SignalId> = external_names.iter().map(|n| alphabet.intern(n)).collect();

    let mut seen = BTreeSet::new();
    let mut automata = Vec::new();
    for aut in raw {
        if !seen.insert(aut.name.clone()) {
            return Err(SystemError::DuplicateAutomaton(aut.name));
        }
        let mut index: HashMap<&str, usize> = HashMap::new();
        for (i, (s, _, _)) in aut.states.iter().enumerate() {
            if index.insert(s, i).is_some() {
                return Err(SystemError::DuplicateState {
                    automaton: aut.name.clone(),
                    state: s.clone(),
                });
            }
        }
        let initial_count = aut.states.iter().filter(|(_, init, _)| *init).count();
        if initial_count != 1 {
            return Err(SystemError::InitialCount {
                automaton: aut.name.clone(),
                count: initial_count,
            });
        }
        let mut arcs = Vec::new();
        for a in &aut.arcs {
            let lookup = |s: &str| {
                index.get(s).copied().ok_or_else(|| SystemError::DanglingArc {
                    automaton: aut.name.clone(),
                    state: s.to_string(),
                })
            };
            let src = lookup(&a.src)?;
            let dst = lookup(&a.dst)?;
            let guard = parse_bool_formula(&a.guard, &alphabet)
                .map_err(|source| SystemError::Guard { line: a.line, source })?;
            arcs.push(ComponentArc { src, dst, guard });
        }
        let states = aut
            .states
            .iter()
            .map(|(n, init, outs)| {
                let mut outputs: Vec<SignalId> = outs.iter().map(|o| alphabet.lookup(o).unwrap()).collect();
                outputs.sort();
                outputs.dedup();
                ComponentState {
                    name: n.clone(),
                    outputs,
                    is_initial: *init,
                }
            })
            .collect();
        automata.push(CsmAutomaton::new(aut.name, states, arcs));
    }

    Ok(CsmSystem {
        name,
        alphabet,
        automata,
        external,
        environment: EnvironmentPolicy::Closed,
    })
}

/// Renders a system back into the text format.
pub fn write_system(sys: &CsmSystem) -> String {
    let mut out = format!("system {}\n", sys.name);
    if !sys.external.is_empty() {
        let names: Vec<&str> = sys.external.iter().map(|s| sys.alphabet.name(*s)).collect();
        out.push_str(&format!("external {{ {} }}\n", names.join(" ")));
    }
    for aut in &sys.automata {
        out.push_str(&format!("automaton {} {{\n", aut.name));
        for s in &aut.states {
            out.push_str(&format!("  state {}", s.name));
            if s.is_initial {
                out.push_str(" init");
            }
            if !s.outputs.is_empty() {
                let names: Vec<&str> = s.outputs.iter().map(|o| sys.alphabet.name(*o)).collect();
                out.push_str(&format!(" outputs {{ {} }}", names.join(" ")));
            }
            out.push('\n');
        }
        for a in &aut.arcs {
            out.push_str(&format!(
                "  arc {} -> {} when {}\n",
                aut.states[a.src].name,
                aut.states[a.dst].name,
                a.guard.display(&sys.alphabet)
            ));
        }
        out.push_str("}\n");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const FIG1: &str = "
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
  arc 4 -> 3 when 1   # back
}
";

    #[test]
    fn parses_two_automata() {
        let sys = parse_system(FIG1).unwrap();
        assert_eq!(sys.name, "pair");
        assert_eq!(sys.automata.len(), 2);
        let count: usize = sys.automata.iter().map(|a| a.states.len()).sum();
        assert_eq!(count, 4);
        assert_eq!(sys.alphabet.len(), 3);
        assert_eq!(sys.initial_tuple(), vec![0, 0]);
        assert!(sys.validate().passed());
    }

    #[test]
    fn two_initial_states_rejected() {
        let text = "system s\nautomaton A {\n state a init\n state b init\n arc a -> b when 1\n arc b -> a when 1\n}\n";
        assert_eq!(
            parse_system(text),
            Err(SystemError::InitialCount {
                automaton: "A".into(),
                count: 2
            })
        );
    }

    #[test]
    fn empty_automaton_rejected() {
        let text = "system s\nautomaton A {\n}\n";
        assert!(matches!(
            parse_system(text),
            Err(SystemError::InitialCount { count: 0, .. })
        ));
    }

    #[test]
    fn structural_errors() {
        let dup = "system s\nautomaton A {\n state a init\n state a\n}\n";
        assert!(matches!(parse_system(dup), Err(SystemError::DuplicateState { .. })));
        let dangling = "system s\nautomaton A {\n state a init\n arc a -> b when 1\n}\n";
        assert!(matches!(parse_system(dangling), Err(SystemError::DanglingArc { .. })));
        let dup_aut = "system s\nautomaton A {\n state a init\n arc a -> a when 1\n}\nautomaton A {\n state a init\n arc a -> a when 1\n}\n";
        assert_eq!(parse_system(dup_aut), Err(SystemError::DuplicateAutomaton("A".into())));
        let bad_guard = "system s\nautomaton A {\n state a init\n arc a -> a when zz\n}\n";
        assert!(matches!(
            parse_system(bad_guard),
            Err(SystemError::Guard { line: 4, .. })
        ));
        assert!(matches!(
            parse_system("automaton A {\n"),
            Err(SystemError::Syntax { .. })
        ));
        assert_eq!(parse_system("system s\n"), Err(SystemError::NoAutomata));
    }

    #[test]
    fn completeness_verdicts() {
        let text = "
system s
external { g }
automaton A {
  state a init
  state b
  state c outputs { q }
  arc a -> b when g
  arc a -> c when !g
  arc b -> c when q
  arc c -> c when 1
}
";
        let sys = parse_system(text).unwrap();
        let report = sys.validate();
        assert!(!report.passed());
        assert_eq!(report.incomplete_states(), vec!["A.b".to_string()]);
        let verdicts: Vec<_> = report.automata[0].states.iter().map(|s| s.verdict.clone()).collect();
        assert_eq!(
            verdicts,
            vec![Completeness::Complete, Completeness::Incomplete, Completeness::Complete]
        );
    }

    #[test]
    fn write_then_parse_is_identity() {
        let sys = parse_system(FIG1).unwrap();
        let again = parse_system(&write_system(&sys)).unwrap();
        assert_eq!(sys, again);
    }

    #[test]
    fn environment_policies() {
        let text = "system s\nexternal { e f }\nautomaton A {\n state a init\n arc a -> a when 1\n}\n";
        let sys = parse_system(text).unwrap();
        assert_eq!(sys.external_assignments(), vec![Vec::<SignalId>::new()]);
        let all = sys.clone().with_environment(EnvironmentPolicy::AllSubsets).unwrap();
        assert_eq!(all.external_assignments().len(), 4);
        let e = sys.alphabet.lookup("e").unwrap();
        let fixed = sys
            .clone()
            .with_environment(EnvironmentPolicy::Fixed([e].into_iter().collect()))
            .unwrap();
        assert_eq!(fixed.external_assignments(), vec![vec![e]]);
    }
}
