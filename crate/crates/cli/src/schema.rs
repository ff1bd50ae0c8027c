//! Configuration documents are checked against the JSON schemas shipped in
//! `schemas/` before they are deserialized, so every offending key is
//! reported at once.

use serde::de::DeserializeOwned;
use serde_json::Value;

use crate::error::{CliError, CliResult};

pub const SIMULATION: &str = include_str!("../schemas/simulation.schema.json");
pub const GRID: &str = include_str!("../schemas/grid.schema.json");
pub const BENCHMARK: &str = include_str!("../schemas/benchmark.schema.json");

pub fn violations(schema: &str, doc: &Value) -> Vec<String> {
    let schema: Value = serde_json::from_str(schema).expect("bundled schema is valid JSON");
    let validator = jsonschema::validator_for(&schema).expect("bundled schema compiles");
    validator
        .iter_errors(doc)
        .map(|e| {
            let path = e.instance_path().to_string();
            if path.is_empty() {
                e.to_string()
            } else {
                format!("{path}: {e}")
            }
        })
        .collect()
}

/// Parse `text`, validate it against `schema`, then deserialize.
pub fn parse<T: DeserializeOwned>(schema: &str, text: &str, what: &str) -> CliResult<T> {
    let doc: Value =
        serde_json::from_str(text).map_err(|e| CliError::Schema(vec![format!("{what} is not valid JSON: {e}")]))?;
    let problems = violations(schema, &doc);
    if !problems.is_empty() {
        return Err(CliError::Schema(problems));
    }
    serde_json::from_value(doc).map_err(|e| CliError::Schema(vec![format!("{what}: {e}")]))
}
