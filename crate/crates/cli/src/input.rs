//! Loading instances and run files.

use std::path::{Path, PathBuf};

use serde::Deserialize;
use spn_core::ppo::TrainConfig;
use spn_core::scenarios::ScenarioSpec;
use spn_core::Problem;

use crate::error::CliError;

/// Named instances available through `--scenario`.
pub const PRESETS: &[&str] = &["m1", "switch2", "hospital2"];

pub fn preset(name: &str) -> Option<ScenarioSpec> {
    match name {
        "m1" => Some(ScenarioSpec::Mgeo1 { p_arrival: 0.5, mu0: 1.0, z_cap: 3, holding: -1.0 }),
        "switch2" => Some(ScenarioSpec::Switch { w: 2, rates: vec![vec![0.3, 0.4], vec![0.35, 0.3]], cap: 1 }),
        "hospital2" => Some(ScenarioSpec::Hospital {
            beds: vec![1, 1],
            arrival_rates: vec![0.3, 0.3],
            overflow: vec![vec![0.0, -2.0], vec![-2.0, 0.0]],
            discharge: 0.5,
            tau_max: 2,
            cap: 2,
            holding: -1.0,
        }),
        _ => None,
    }
}

/// A run file: an instance given as a scenario or an explicit network, plus
/// optional training settings and seed.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunFile {
    pub seed: Option<u64>,
    pub scenario: Option<ScenarioSpec>,
    pub network: Option<Problem>,
    pub train: Option<TrainConfig>,
}

/// The instance a command works on.
#[derive(Clone, Debug)]
pub struct Instance {
    pub problem: Problem,
    /// Present when the instance came from a generator.
    pub scenario: Option<ScenarioSpec>,
    pub seed: Option<u64>,
    pub train: Option<TrainConfig>,
}

fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))
}

fn parse_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Input(format!("cannot parse {}: {e}", path.display()))
}

/// Loads `--config`: either a bare network file (with a `schema` key) or a
/// run file.
pub fn load_config(path: &Path) -> Result<Instance, CliError> {
    let text = read(path)?;
    let table: toml::Table = toml::from_str(&text).map_err(|e| parse_err(path, e))?;
    if table.contains_key("schema") {
        let problem = Problem::from_toml(&text).map_err(|e| parse_err(path, e))?;
        return Ok(Instance { problem, scenario: None, seed: None, train: None });
    }
    let run: RunFile = toml::from_str(&text).map_err(|e| parse_err(path, e))?;
    let (problem, scenario) = match (run.network, run.scenario) {
        (Some(p), None) => (p, None),
        (None, Some(s)) => (s.build()?, Some(s)),
        _ => {
            return Err(CliError::Input(format!(
                "{}: give exactly one of [network] and [scenario]",
                path.display()
            )))
        }
    };
    Ok(Instance { problem, scenario, seed: run.seed, train: run.train })
}

/// Resolves `--scenario`: a preset name or a file holding one scenario table.
pub fn load_scenario(arg: &str) -> Result<Instance, CliError> {
    let spec = match preset(arg) {
        Some(s) => s,
        None => {
            let path = PathBuf::from(arg);
            if !path.exists() {
                return Err(CliError::Input(format!(
                    "unknown scenario {arg:?}; use one of {} or a scenario file",
                    PRESETS.join(", ")
                )));
            }
            toml::from_str(&read(&path)?).map_err(|e| parse_err(&path, e))?
        }
    };
    Ok(Instance { problem: spec.build()?, scenario: Some(spec), seed: None, train: None })
}
