//! Concurrent State Machines: lock-step reachability graphs, QsCTL model
//! checking and the invisibility-based graph reduction.

pub mod bisim;
pub mod formula;
pub mod qsctl;
pub mod reducer;
pub mod rg;
pub mod stutter;
pub mod system;
