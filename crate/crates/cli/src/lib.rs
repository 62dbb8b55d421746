//! Config-driven pipelines behind the `cuthmm` binary.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod error;
pub mod run;

use schemars::Schema;

/// JSON schema of the experiment config file.
pub fn config_schema() -> Schema {
    schemars::schema_for!(config::ExperimentConfig)
}

/// JSON schema of the per-command run manifests.
pub fn manifest_schema() -> Schema {
    schemars::schema_for!(run::Manifest)
}
