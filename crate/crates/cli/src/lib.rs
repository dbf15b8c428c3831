//! Config-driven front end for the `shishkin` solver: a small expression
//! language for coefficient data, the JSON run configuration, and the
//! commands that produce CSV and JSON artifacts.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod expr;
pub mod run;

pub use config::{load_config, Command, RunConfig, SchemaError};
pub use expr::{parse_expression, ExprTree, ParseError};
pub use run::{run, CliError, Outcome, RunContext};
