//! Run configuration: TOML file, then `--set key=value` overrides, then
//! command flags. The resolved config is dumped next to every result.

use std::path::Path;

use serde::{Deserialize, Serialize};

use pamg_core::boundary::DEFAULT_RHO_EDGES;
use pamg_core::experiments::{desk_suite, ExperimentConfig, DEFAULT_K_GRID, DEFAULT_RNG_SEED, DEFAULT_RS_GRID};
use pamg_core::metrics::DEFAULT_MATCH_RADIUS;
use pamg_core::pamg::DEFAULT_GUIDED_K;
use pamg_core::synth::SuiteParams;
use pamg_core::{Normalization, PamgConfig, Variant};

use crate::CliError;

pub const EFFECTIVE_CONFIG: &str = "effective_config.toml";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub rng_seed: u64,
    /// Scenes per experiment suite.
    pub count: usize,
    /// Worker threads; 0 uses every core. Not dumped: results never depend on it.
    #[serde(skip_serializing)]
    pub jobs: usize,
    /// Forces the sequential code path. Not dumped, same reason.
    #[serde(skip_serializing)]
    pub sequential: bool,
    pub match_radius: f64,
    pub guided_k: f64,
    pub rs_grid: Vec<f64>,
    pub k_grid: Vec<f64>,
    pub variants: Vec<Variant>,
    pub rho_edges: Vec<f64>,
    pub normalization: Normalization,
    pub pamg: PamgConfig,
    pub suite: SuiteParams,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            rng_seed: DEFAULT_RNG_SEED,
            count: 200,
            jobs: 0,
            sequential: false,
            match_radius: DEFAULT_MATCH_RADIUS,
            guided_k: DEFAULT_GUIDED_K,
            rs_grid: DEFAULT_RS_GRID.to_vec(),
            k_grid: DEFAULT_K_GRID.to_vec(),
            variants: Variant::ALL.to_vec(),
            rho_edges: DEFAULT_RHO_EDGES.to_vec(),
            normalization: Normalization::default(),
            pamg: PamgConfig::default(),
            suite: desk_suite(),
        }
    }
}

fn parse_value(raw: &str) -> toml::Value {
    // bare words such as `variant=no_size_prior` are taken as strings
    toml::from_str::<toml::Table>(&format!("x = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("x"))
        .unwrap_or_else(|| toml::Value::String(raw.to_owned()))
}

fn apply_set(table: &mut toml::Table, assignment: &str) -> Result<(), CliError> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| CliError::Usage(format!("--set expects key=value, got {assignment:?}")))?;
    let parts: Vec<&str> = key.trim().split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(CliError::Usage(format!("bad config key {key:?}")));
    }
    let mut node = table;
    for p in &parts[..parts.len() - 1] {
        let entry = node
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        node = entry
            .as_table_mut()
            .ok_or_else(|| CliError::Usage(format!("config key {p:?} is not a table")))?;
    }
    node.insert(parts[parts.len() - 1].to_owned(), parse_value(raw.trim()));
    Ok(())
}

fn merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

impl RunConfig {
    /// Defaults, then the file, then each `key=value` in order. Partial
    /// tables keep the remaining defaults of this config, not of the
    /// nested type.
    pub fn load(path: Option<&Path>, sets: &[String]) -> Result<Self, CliError> {
        let mut table = toml::Table::try_from(RunConfig::default()).expect("defaults serialize");
        if let Some(p) = path {
            let text = std::fs::read_to_string(p)
                .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", p.display())))?;
            let file = toml::from_str::<toml::Table>(&text)
                .map_err(|e| CliError::Usage(format!("config {}: {e}", p.display())))?;
            merge(&mut table, file);
        }
        for s in sets {
            apply_set(&mut table, s)?;
        }
        let cfg: RunConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| CliError::Usage(format!("config: {e}")))?;
        cfg.experiment().validate()?;
        Ok(cfg)
    }

    pub fn experiment(&self) -> ExperimentConfig {
        ExperimentConfig {
            rng_seed: self.rng_seed,
            count: self.count,
            suite: self.suite.clone(),
            pamg: self.pamg,
            rs_grid: self.rs_grid.clone(),
            k_grid: self.k_grid.clone(),
            variants: self.variants.clone(),
            rho_edges: self.rho_edges.clone(),
        }
    }

    pub fn execution(&self) -> pamg_core::Execution {
        if self.sequential {
            pamg_core::Execution::Sequential
        } else {
            pamg_core::Execution::Parallel
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Writes `effective_config.toml` into `dir`.
    pub fn dump(&self, dir: &Path) -> Result<(), CliError> {
        crate::write(&dir.join(EFFECTIVE_CONFIG), self.to_toml().as_bytes())
    }
}
