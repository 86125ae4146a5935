//! QsCTL: universal branching-time logic over reachability graphs, with
//! state quantifiers, at-state formulas and a per-automaton next operator.

mod ast;
mod eval;
mod parser;
mod props;

pub use ast::{AtomicProp, QuantRange, Quantifier, StateRef, TemporalFormula, TF};
pub use eval::{evaluate, expand, Evaluation};
pub use parser::{parse_formula_file, parse_temporal};
pub use props::{collect_atoms, complete_props, LabelSet, PropSet, PropSetSummary, Protection};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum QsctlError {
    #[error("syntax error at offset {pos}: {message}")]
    Syntax { pos: usize, message: String },
    #[error("line {line}: {source}")]
    Line { line: usize, source: Box<QsctlError> },
    #[error("unbound variable `{0}`")]
    UnboundVariable(String),
    #[error("unknown signal `{0}`")]
    UnknownSignal(String),
    #[error("unknown automaton `{0}`")]
    UnknownAutomaton(String),
    #[error("automaton `{automaton}` has no state `{state}`")]
    UnknownState { automaton: String, state: String },
    #[error("bad state designator: {0}")]
    BadDesignator(String),
    #[error("state {0} is not in the graph")]
    StateNotInGraph(String),
    #[error("quantifier left unexpanded")]
    UnexpandedQuantifier,
}
