//! Scenario files: JSON on disk, plus the bundled presets.

use std::fs;
use std::path::{Path, PathBuf};

use mcct_core::scenario::{Scenario, ValidationError};
use sha2::{Digest, Sha256};

#[derive(Debug, thiserror::Error)]
pub enum ScenarioFileError {
    #[error("{}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{}", path.display())]
    Parse { path: PathBuf, source: serde_json::Error },
    #[error("{}", path.display())]
    Invalid { path: PathBuf, source: ValidationError },
}

/// Names accepted in place of a path.
pub const PRESETS: [&str; 2] = ["experiment_a", "experiment_b"];

pub fn preset(name: &str) -> Option<Scenario> {
    match name {
        "experiment_a" => Some(Scenario::experiment_a()),
        "experiment_b" => Some(Scenario::experiment_b()),
        _ => None,
    }
}

/// Reads and validates a scenario. A bare preset name is accepted when no
/// file of that name exists.
pub fn load(path: &Path) -> Result<Scenario, ScenarioFileError> {
    let scenario = match fs::read(path) {
        Ok(bytes) => serde_json::from_slice::<Scenario>(&bytes).map_err(|source| ScenarioFileError::Parse {
            path: path.to_owned(),
            source,
        })?,
        Err(source) => match path.to_str().and_then(preset) {
            Some(s) => s,
            None => {
                return Err(ScenarioFileError::Io {
                    path: path.to_owned(),
                    source,
                })
            }
        },
    };
    scenario.validate().map_err(|source| ScenarioFileError::Invalid {
        path: path.to_owned(),
        source,
    })?;
    Ok(scenario)
}

pub fn to_json(scenario: &Scenario) -> String {
    let mut s = serde_json::to_string_pretty(scenario).expect("scenario serializes");
    s.push('\n');
    s
}

pub fn save(path: &Path, scenario: &Scenario) -> std::io::Result<()> {
    fs::write(path, to_json(scenario))
}

/// SHA-256 of the compact JSON form, hex encoded.
pub fn hash(scenario: &Scenario) -> String {
    let bytes = serde_json::to_vec(scenario).expect("scenario serializes");
    hex::encode(Sha256::digest(bytes))
}
