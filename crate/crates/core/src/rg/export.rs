//! DOT and JSON renderings of reachability graphs.

use std::collections::BTreeSet;
use std::fmt::Write;

use serde::{Deserialize, Serialize};

use super::{GlobalState, Graph, GraphBuilder, GraphKind, StateId};
use crate::qsctl::PropSet;
use crate::system::CsmSystem;

pub const GRAPH_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateJson {
    pub id: StateId,
    pub name: String,
    pub components: Vec<u32>,
    pub outputs: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepresentativeJson {
    pub state: Vec<u32>,
    pub name: String,
    pub by: StateId,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphJson {
    pub schema: String,
    pub version: u32,
    pub system: String,
    pub kind: GraphKind,
    pub initial: StateId,
    pub states: Vec<StateJson>,
    pub arcs: Vec<(StateId, StateId)>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub representatives: Vec<RepresentativeJson>,
}

/// Serializable view of `g`; with `props`, each state also lists its labels.
pub fn graph_to_json(g: &Graph, sys: &CsmSystem, props: Option<&PropSet>) -> GraphJson {
    let states = (0..g.len())
        .map(|s| StateJson {
            id: s,
            name: g.state(s).display(sys).to_string(),
            components: g.state(s).0.clone(),
            outputs: g.outputs(s).iter().map(|o| sys.signal_name(*o).to_string()).collect(),
            labels: props.map(|p| {
                let label = p.label(g.state(s), g.outputs(s));
                p.atoms()
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| label.contains(*i))
                    .map(|(_, a)| a.display(sys).to_string())
                    .collect()
            }),
        })
        .collect();
    let representatives = g
        .representatives()
        .iter()
        .map(|(s, &by)| RepresentativeJson {
            state: s.0.clone(),
            name: s.display(sys).to_string(),
            by,
        })
        .collect();
    GraphJson {
        schema: "csm-graph".into(),
        version: GRAPH_SCHEMA_VERSION,
        system: sys.name.clone(),
        kind: g.kind,
        initial: g.initial(),
        states,
        arcs: g.arcs().collect(),
        representatives,
    }
}

/// Rebuilds a graph from its JSON view. Output names are resolved against `sys`.
pub fn graph_from_json(json: &GraphJson, sys: &CsmSystem) -> Result<Graph, String> {
    if json.schema != "csm-graph" || json.version != GRAPH_SCHEMA_VERSION {
        return Err(format!("unsupported graph schema {} v{}", json.schema, json.version));
    }
    let mut b = GraphBuilder::new();
    for (i, s) in json.states.iter().enumerate() {
        if s.id != i {
            return Err(format!("state ids must be dense, found {} at position {i}", s.id));
        }
        if s.components.len() != sys.automata.len() {
            return Err(format!("state {} has the wrong arity", s.id));
        }
        let mut outputs = s
            .outputs
            .iter()
            .map(|n| sys.alphabet.lookup(n).ok_or_else(|| format!("unknown signal `{n}`")))
            .collect::<Result<Vec<_>, _>>()?;
        outputs.sort_unstable();
        if b.add_state(GlobalState(s.components.clone()), outputs) != i {
            return Err(format!("state {} is listed twice", s.name));
        }
    }
    let n = json.states.len();
    if json.initial >= n {
        return Err("initial state out of range".into());
    }
    for &(s, t) in &json.arcs {
        if s >= n || t >= n {
            return Err(format!("arc ({s},{t}) out of range"));
        }
        b.add_arc(s, t);
    }
    for r in &json.representatives {
        if r.by >= n {
            return Err(format!("representative of {} out of range", r.name));
        }
        b.add_representative(GlobalState(r.state.clone()), r.by);
    }
    Ok(b.finish(json.initial, json.kind))
}

fn escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

fn node_label(g: &Graph, s: StateId, sys: &CsmSystem) -> String {
    let outs: Vec<&str> = g.outputs(s).iter().map(|o| sys.signal_name(*o)).collect();
    escape(&format!("{}\\n{{{}}}", g.state(s).display(sys), outs.join(",")))
}

/// Plain DOT rendering of a single graph.
pub fn to_dot(g: &Graph, sys: &CsmSystem) -> String {
    let mut out = String::new();
    writeln!(out, "digraph {} {{", escape(&sys.name)).unwrap();
    writeln!(out, "    node [shape=ellipse]").unwrap();
    for s in 0..g.len() {
        let shape = if s == g.initial() { " shape=doublecircle" } else { "" };
        writeln!(out, "    s{s} [label=\"{}\"{shape}]", node_label(g, s, sys)).unwrap();
    }
    for (s, t) in g.arcs() {
        writeln!(out, "    s{s} -> s{t}").unwrap();
    }
    writeln!(out, "}}").unwrap();
    out
}

/// DOT rendering of `full` with elements missing from `reduced` dashed and
/// arcs introduced by the reduction drawn bold.
pub fn to_dot_annotated(full: &Graph, reduced: &Graph, sys: &CsmSystem) -> String {
    let kept_arcs = reduced.arc_tuples();
    let full_arcs: BTreeSet<(GlobalState, GlobalState)> = full.arc_tuples();
    let mut out = String::new();
    writeln!(out, "digraph {} {{", escape(&sys.name)).unwrap();
    writeln!(out, "    node [shape=ellipse]").unwrap();
    for s in 0..full.len() {
        let mut attrs = format!("label=\"{}\"", node_label(full, s, sys));
        if s == full.initial() {
            attrs.push_str(" shape=doublecircle");
        }
        if reduced.id_of(full.state(s)).is_none() {
            attrs.push_str(" style=dashed");
        }
        writeln!(out, "    s{s} [{attrs}]").unwrap();
    }
    for (s, t) in full.arcs() {
        let key = (full.state(s).clone(), full.state(t).clone());
        let style = if kept_arcs.contains(&key) {
            ""
        } else {
            " [style=dashed]"
        };
        writeln!(out, "    s{s} -> s{t}{style}").unwrap();
    }
    for (a, b) in kept_arcs.difference(&full_arcs) {
        // both endpoints survive reduction, so they exist in the full graph
        let (Some(s), Some(t)) = (full.id_of(a), full.id_of(b)) else {
            continue;
        };
        writeln!(out, "    s{s} -> s{t} [style=bold color=blue]").unwrap();
    }
    writeln!(out, "}}").unwrap();
    out
}
