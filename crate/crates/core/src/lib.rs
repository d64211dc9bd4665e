//! Question answering over tables with a language model.
//!
//! A run normalizes the input table, narrows it to a small table-of-focus
//! (key column, ranked columns, SQL-selected rows), grows that focus until the
//! model judges it sufficient, verbalizes it, and then answers with either
//! step-by-step text reasoning or a generated program run in a sandbox.
//!
//! All model traffic goes through [`gateway::Gateway`], which can replay
//! recorded responses so that whole runs are deterministic.

pub mod content;
pub mod eval;
pub mod gateway;
pub mod normalize;
pub mod pipeline;
pub mod reasoning;
pub mod sql;
pub mod structure;
pub mod table;
pub mod trace;

pub use pipeline::{Pipeline, PipelineConfig, RunRecord};
pub use table::Table;
