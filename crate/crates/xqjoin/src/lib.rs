//! An XQuery-to-SQL compiler built on a tabular XML encoding.
//!
//! The pipeline has five stages:
//!
//! 1. [`infoset`] shreds XML text into a pre/size/level node table (`doc`)
//!    and knows how to serialize node sets back to XML.
//! 2. [`frontend`] parses the supported XQuery fragment (`for`/`if`/path
//!    steps/general comparisons) and normalizes it to a core form with
//!    explicit `fs:ddo` and `fn:boolean` calls.
//! 3. [`compiler`] translates core expressions into a DAG of table-algebra
//!    operators via loop lifting: every subexpression becomes a plan with
//!    schema `iter|pos|item`.
//! 4. [`isolator`] rewrites the stacked plan into *join graph + plan tail*
//!    normal form, guided by the property inference in [`properties`].
//! 5. [`sqlgen`] emits a single `SELECT DISTINCT ... FROM ... WHERE ...
//!    ORDER BY` block for isolated plans (and a `WITH`-chain fallback for
//!    stacked plans).
//!
//! [`evaluator`] holds a reference interpreter for plans, an independent
//! naive XQuery evaluator used as the oracle in differential tests, and a
//! seeded random query generator. [`cli`] drives everything end to end.

pub mod algebra;
pub mod cli;
pub mod compiler;
pub mod corpus;
pub mod evaluator;
pub mod frontend;
pub mod infoset;
pub mod isolator;
pub mod properties;
pub mod sqlgen;
