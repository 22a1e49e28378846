//! Tool-calling agent runtime for multi-turn ECG dialogue.
//!
//! The crate is synchronous. Signal tools (`measure`, `classify`, `explain`)
//! are pure functions over [`signal::EcgRecord`]; the [`dialogue`] state
//! machine constrains what an [`agent`] may emit; [`mtd`] builds templated
//! corpora and [`eval`] scores agents against them.

pub mod signal;
pub mod classify;
pub mod explain;
pub mod measure;
pub mod tool;
pub mod dialogue;
pub mod agent;
pub mod mtd;
pub mod eval;
