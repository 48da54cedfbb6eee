//! Scenario files: schema-validated JSON in, a typed [`Scenario`] out.

use anyhow::{anyhow, Context};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};
use tmc_core::demand::InstrumentSpec;
use tmc_core::learning::LearningParams;
use tmc_core::market::MarketParams;
use tmc_core::population::PopulationConfig;
use tmc_core::scenario::{EngineParams, Scenario, ScheduledIntervention};
use tmc_core::supply::SupplyParams;

/// On-disk scenario document. Unknown keys are rejected.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub instrument: InstrumentSpec,
    pub population: PopulationConfig,
    pub market: MarketParams,
    pub supply: SupplyParams,
    #[serde(default)]
    pub learning: LearningParams,
    #[serde(default)]
    pub utility: tmc_core::demand::UtilityParams,
    #[serde(default)]
    pub engine: EngineParams,
    #[serde(default)]
    pub interventions: Vec<ScheduledIntervention>,
    pub seed: u64,
    /// Seed list for multi-seed commands; defaults to `[seed]`.
    #[serde(default)]
    pub seeds: Option<Vec<u64>>,
    /// Default output directory; `--out` overrides.
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

impl ScenarioFile {
    #[allow(dead_code)] // exercised by tests and asset generation
    pub fn from_scenario(scenario: &Scenario) -> Self {
        ScenarioFile {
            instrument: scenario.instrument.clone(),
            population: scenario.population.clone(),
            market: scenario.market.clone(),
            supply: scenario.supply.clone(),
            learning: scenario.learning,
            utility: scenario.utility,
            engine: scenario.engine.clone(),
            interventions: scenario.interventions.clone(),
            seed: scenario.seed,
            seeds: None,
            output_dir: None,
        }
    }

    pub fn into_scenario(self) -> Scenario {
        Scenario {
            instrument: self.instrument,
            population: self.population,
            market: self.market,
            supply: self.supply,
            learning: self.learning,
            utility: self.utility,
            engine: self.engine,
            interventions: self.interventions,
            seed: self.seed,
        }
    }

    pub fn seed_list(&self) -> Vec<u64> {
        match &self.seeds {
            Some(list) if !list.is_empty() => list.clone(),
            _ => vec![self.seed],
        }
    }
}

/// Configuration-stage error: schema violations, bad overrides, invalid
/// parameter values. Maps to exit code 2.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl std::error::Error for ConfigError {}

/// Parse a `key=value` override with a dotted key path.
fn parse_override(spec: &str) -> Result<(Vec<String>, serde_json::Value), ConfigError> {
    let (key, value) = spec
        .split_once('=')
        .ok_or_else(|| ConfigError(format!("override '{spec}' is not of the form key=value")))?;
    let path: Vec<String> = key.split('.').map(str::to_string).collect();
    if path.iter().any(|p| p.is_empty()) {
        return Err(ConfigError(format!("override '{spec}' has an empty path segment")));
    }
    // Values parse as JSON scalars; anything unparseable is a string.
    let value = serde_json::from_str(value)
        .unwrap_or_else(|_| serde_json::Value::String(value.to_string()));
    Ok((path, value))
}

fn apply_override(
    doc: &mut serde_json::Value,
    path: &[String],
    value: serde_json::Value,
) -> Result<(), ConfigError> {
    let mut node = doc;
    for key in &path[..path.len() - 1] {
        node = node
            .as_object_mut()
            .ok_or_else(|| ConfigError(format!("override path '{}' crosses a non-object", key)))?
            .entry(key.clone())
            .or_insert_with(|| serde_json::Value::Object(Default::default()));
    }
    node.as_object_mut()
        .ok_or_else(|| ConfigError("override target is not an object".into()))?
        .insert(path.last().unwrap().clone(), value);
    Ok(())
}

/// Load a scenario file, apply `--set` overrides and the seed/horizon
/// flags, validate, and return it with its content hash.
pub fn load_scenario_file(
    path: &Path,
    overrides: &[String],
    seed: Option<u64>,
    horizon: Option<usize>,
) -> anyhow::Result<(ScenarioFile, String)> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading scenario file {}", path.display()))?;
    let mut doc: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| anyhow!(ConfigError(format!("{path:?}: {e}"))))?;
    for spec in overrides {
        let (key_path, value) = parse_override(spec).map_err(|e| anyhow!(e))?;
        apply_override(&mut doc, &key_path, value).map_err(|e| anyhow!(e))?;
    }
    if let Some(seed) = seed {
        // The seed flag drives both the scenario streams and the population.
        apply_override(&mut doc, &["seed".into()], seed.into()).map_err(|e| anyhow!(e))?;
        apply_override(&mut doc, &["population".into(), "seed".into()], seed.into())
            .map_err(|e| anyhow!(e))?;
    }
    if let Some(h) = horizon {
        apply_override(&mut doc, &["engine".into(), "horizon".into()], h.into())
            .map_err(|e| anyhow!(e))?;
    }

    let deserializer = doc.clone();
    let file: ScenarioFile = serde_path_to_error::deserialize(&deserializer)
        .map_err(|e| anyhow!(ConfigError(format!("{}: {}", e.path(), e.inner()))))?;
    file.clone()
        .into_scenario()
        .validate()
        .map_err(|e| anyhow!(ConfigError(e.to_string())))?;

    let hash = scenario_hash(&file);
    Ok((file, hash))
}

/// Content hash of the resolved scenario document.
pub fn scenario_hash(file: &ScenarioFile) -> String {
    let canonical = serde_json::to_string(file).expect("scenario serializes");
    let digest = Sha256::digest(canonical.as_bytes());
    let mut out = String::with_capacity(64);
    for byte in digest {
        out.push_str(&format!("{byte:02x}"));
    }
    out
}
