//! Scenario-driven front end for the differentiated-service menu solver:
//! scenario parsing, deterministic CSV/SVG emission and the command
//! implementations behind the `tiermenu` binary.

// `!(x > 0.0)` rejects NaN along with out-of-range values in one predicate.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod format;
pub mod run;
pub mod scenario;
