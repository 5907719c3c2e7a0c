//! The TOML configuration file: one section per grid dimension, plus the base
//! simulation and output options.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{EffortCondition, ExperimentGrid, Intervention, RunOptions};
use crate::config::{SimulationConfig, DEFAULT_EFFORT};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    /// 20 seeds per cell.
    #[default]
    Desk,
    /// 100 seeds per cell.
    Paper,
}

impl Profile {
    pub fn seeds(self) -> usize {
        match self {
            Profile::Desk => 20,
            Profile::Paper => 100,
        }
    }

    pub fn parse(s: &str) -> Option<Profile> {
        match s {
            "desk" => Some(Profile::Desk),
            "paper" => Some(Profile::Paper),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QSection {
    pub values: Vec<f64>,
}

impl Default for QSection {
    fn default() -> Self {
        Self {
            values: vec![0.0, 1.0, 2.0, 3.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EffortSection {
    pub conditions: Vec<EffortCondition>,
}

impl Default for EffortSection {
    fn default() -> Self {
        Self {
            conditions: EffortCondition::standard(DEFAULT_EFFORT),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InterventionSection {
    pub enabled: Vec<Intervention>,
}

impl Default for InterventionSection {
    fn default() -> Self {
        Self {
            enabled: ExperimentGrid::default().interventions,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SeedSection {
    /// Seeds per cell; the profile decides when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub count: Option<usize>,
    pub overrides: BTreeMap<Intervention, usize>,
}

impl Default for SeedSection {
    fn default() -> Self {
        Self {
            count: None,
            overrides: ExperimentGrid::default().seed_overrides,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub workers: usize,
    pub keep_logs: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            workers: 1,
            keep_logs: false,
        }
    }
}

/// Fully resolved settings for a CLI invocation.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Settings {
    pub profile: Profile,
    /// Base simulation; its seed is the base seed of every cell.
    pub simulation: SimulationConfig,
    pub q: QSection,
    pub effort: EffortSection,
    pub interventions: InterventionSection,
    pub seeds: SeedSection,
    pub output: OutputSection,
}

impl Settings {
    pub fn from_toml(text: &str) -> Result<Settings> {
        toml::from_str(text).map_err(|e| Error::ConfigFile(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Settings> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Settings::from_toml(&text).map_err(|e| match e {
            Error::ConfigFile(m) => Error::ConfigFile(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("settings serialize to TOML")
    }

    pub fn seed_count(&self) -> usize {
        self.seeds.count.unwrap_or_else(|| self.profile.seeds())
    }

    pub fn grid(&self) -> ExperimentGrid {
        ExperimentGrid {
            q_values: self.q.values.clone(),
            effort_conditions: self.effort.conditions.clone(),
            interventions: self.interventions.enabled.clone(),
            seeds: self.seed_count(),
            seed_overrides: self.seeds.overrides.clone(),
            base: self.simulation.clone(),
        }
    }

    pub fn run_options(&self) -> RunOptions {
        RunOptions {
            workers: self.output.workers,
            keep_logs: self.output.keep_logs,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_round_trip() {
        let mut s = Settings::default();
        s.seeds.count = Some(3);
        s.simulation.population.q = 2.0;
        let text = s.to_toml();
        assert_eq!(Settings::from_toml(&text).unwrap(), s);
    }

    #[test]
    fn partial_file_fills_defaults() {
        let s = Settings::from_toml(
            "profile = \"paper\"\n[q]\nvalues = [3.0]\n[simulation]\nk = 50\n[simulation.population]\nsigma = 0.12\n",
        )
        .unwrap();
        assert_eq!(s.seed_count(), 100);
        assert_eq!(s.q.values, vec![3.0]);
        assert_eq!(s.simulation.k, 50);
        assert_eq!(s.simulation.population.sigma, 0.12);
        assert_eq!(s.simulation.horizon, SimulationConfig::default().horizon);
        assert_eq!(s.grid().cells().len(), 3 * 4);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = Settings::from_toml("[simulation]\nkk = 1\n").unwrap_err();
        assert_eq!(err.kind(), "config");
        assert!(err.to_string().contains("kk"));
    }

    #[test]
    fn grr_runs_fewer_seeds_by_default() {
        let s = Settings::default();
        assert_eq!(s.seed_count(), 20);
        assert_eq!(s.grid().seeds_for(Intervention::Grr), 10);
    }
}
