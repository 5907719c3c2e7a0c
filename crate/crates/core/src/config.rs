//! Simulation and population configuration.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::ConfigError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Group {
    Advantaged,
    Disadvantaged,
}

impl Group {
    pub const BOTH: [Group; 2] = [Group::Advantaged, Group::Disadvantaged];

    pub fn as_str(self) -> &'static str {
        match self {
            Group::Advantaged => "advantaged",
            Group::Disadvantaged => "disadvantaged",
        }
    }

    pub fn parse(s: &str) -> Option<Group> {
        match s {
            "advantaged" | "a" => Some(Group::Advantaged),
            "disadvantaged" | "d" => Some(Group::Disadvantaged),
            _ => None,
        }
    }

    pub fn index(self) -> usize {
        match self {
            Group::Advantaged => 0,
            Group::Disadvantaged => 1,
        }
    }
}

/// Which shape of group-conditioned feature distribution to draw from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorCase {
    /// Shared high-performer mode, lower-performer means differ, equal spread.
    EqualVarDiffMeans,
    /// Lower-performer means coincide, the disadvantaged group is more spread out.
    DiffVarEqualMeans,
    /// Both the lower-performer means and the spreads differ.
    DiffVarDiffMeans,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PopulationSpec {
    /// Mean of the high-performer mode, shared by both groups.
    pub mu_high: f64,
    /// Mean of disadvantaged lower performers.
    pub mu_d: f64,
    pub sigma: f64,
    /// Qualification gap, in units of `sigma`, between lower-performer means.
    pub q: f64,
    pub high_fraction: f64,
    pub e_a: f64,
    pub e_d: f64,
    pub generator_case: GeneratorCase,
    /// Spread multiplier for the disadvantaged group in the unequal-variance cases.
    pub variance_ratio: f64,
}

impl Default for PopulationSpec {
    fn default() -> Self {
        Self {
            mu_high: 0.7,
            mu_d: 0.3,
            sigma: 0.125,
            q: 0.0,
            high_fraction: 0.5,
            e_a: DEFAULT_EFFORT,
            e_d: DEFAULT_EFFORT,
            generator_case: GeneratorCase::EqualVarDiffMeans,
            variance_ratio: 2.0,
        }
    }
}

/// Baseline effort mean, in units of `effort_scale`.
pub const DEFAULT_EFFORT: f64 = 1.25;

impl PopulationSpec {
    /// Mean of advantaged lower performers: `mu_d + q * sigma`.
    pub fn mu_a(&self) -> f64 {
        derive_mu_a(self)
    }

    pub fn effort_mean(&self, group: Group) -> f64 {
        match group {
            Group::Advantaged => self.e_a,
            Group::Disadvantaged => self.e_d,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        finite("population.mu_high", self.mu_high)?;
        finite("population.mu_d", self.mu_d)?;
        if !(self.sigma.is_finite() && self.sigma > 0.0) {
            return Err(ConfigError::new("population.sigma", "sigma must be positive"));
        }
        if !(self.q.is_finite() && self.q >= 0.0) {
            return Err(ConfigError::new("population.q", "q must be non-negative"));
        }
        if !(0.0..=1.0).contains(&self.high_fraction) {
            return Err(ConfigError::new(
                "population.high_fraction",
                "high_fraction must lie in [0, 1]",
            ));
        }
        if !(self.e_a.is_finite() && self.e_a >= 0.0) {
            return Err(ConfigError::new("population.e_a", "e_a must be non-negative"));
        }
        if !(self.e_d.is_finite() && self.e_d >= 0.0) {
            return Err(ConfigError::new("population.e_d", "e_d must be non-negative"));
        }
        if !(self.variance_ratio.is_finite() && self.variance_ratio > 0.0) {
            return Err(ConfigError::new(
                "population.variance_ratio",
                "variance_ratio must be positive",
            ));
        }
        if self.generator_case == GeneratorCase::EqualVarDiffMeans && self.mu_a() >= self.mu_high {
            return Err(ConfigError::new(
                "population.q",
                format!(
                    "lower-performer mean mu_d + q*sigma = {} must stay below mu_high = {}",
                    self.mu_a(),
                    self.mu_high
                ),
            ));
        }
        Ok(())
    }
}

pub fn derive_mu_a(spec: &PopulationSpec) -> f64 {
    spec.mu_d + spec.q * spec.sigma
}

fn finite(field: &'static str, v: f64) -> Result<(), ConfigError> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(ConfigError::new(field, "must be finite"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selection {
    TopK,
    /// Circumstance-normalized selection: per-group quotas proportional to group size.
    Cns,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Retraining {
    None,
    /// Counterfactual data augmentation.
    Cda,
    /// Group recourse regularization.
    Grr,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Adaptation {
    CapAtRecommendation,
    Overshoot,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GrrParams {
    pub lambda: f64,
    pub learning_rate: f64,
    pub epochs: usize,
}

impl Default for GrrParams {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            learning_rate: 0.05,
            epochs: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CdaParams {
    /// Ridge penalty on the logistic weights; keeps separable sets bounded.
    pub l2: f64,
    pub max_iter: usize,
}

impl Default for CdaParams {
    fn default() -> Self {
        Self {
            l2: 1e-3,
            max_iter: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationConfig {
    pub horizon: usize,
    pub k: usize,
    pub initial_population: usize,
    pub arrivals_per_step: usize,
    pub seed: u64,
    pub selection: Selection,
    pub retraining: Retraining,
    pub adaptation: Adaptation,
    /// Multiplies both the mean and the standard deviation of effort draws.
    pub effort_scale: f64,
    pub population: PopulationSpec,
    pub grr: GrrParams,
    pub cda: CdaParams,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            horizon: 20,
            k: 100,
            initial_population: 1000,
            arrivals_per_step: 100,
            seed: 0,
            selection: Selection::TopK,
            retraining: Retraining::None,
            adaptation: Adaptation::Overshoot,
            effort_scale: DEFAULT_EFFORT_SCALE,
            population: PopulationSpec::default(),
            grr: GrrParams::default(),
            cda: CdaParams::default(),
        }
    }
}

pub const DEFAULT_EFFORT_SCALE: f64 = 0.09;

impl SimulationConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.k == 0 {
            return Err(ConfigError::new("k", "k must be positive"));
        }
        if self.initial_population == 0 {
            return Err(ConfigError::new(
                "initial_population",
                "initial_population must be positive",
            ));
        }
        if self.k > self.initial_population {
            return Err(ConfigError::new(
                "k",
                format!(
                    "k ({}) must not exceed initial_population ({})",
                    self.k, self.initial_population
                ),
            ));
        }
        if !(self.effort_scale.is_finite() && self.effort_scale > 0.0) {
            return Err(ConfigError::new("effort_scale", "effort_scale must be positive"));
        }
        if !(self.grr.lambda.is_finite() && self.grr.lambda >= 0.0) {
            return Err(ConfigError::new("grr.lambda", "lambda must be non-negative"));
        }
        if !(self.grr.learning_rate.is_finite() && self.grr.learning_rate > 0.0) {
            return Err(ConfigError::new(
                "grr.learning_rate",
                "learning_rate must be positive",
            ));
        }
        if !(self.cda.l2.is_finite() && self.cda.l2 >= 0.0) {
            return Err(ConfigError::new("cda.l2", "l2 must be non-negative"));
        }
        self.population.validate()
    }

    /// Hex digest over every field, seed included.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(canonical.as_bytes());
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Digest of the configuration with the seed blanked; identifies a grid cell.
    pub fn cell_hash(&self) -> String {
        let mut c = self.clone();
        c.seed = 0;
        c.hash()
    }

    /// Group sizes for a batch of `count` newcomers; odd counts give the extra agent
    /// to the disadvantaged group.
    pub fn split(count: usize) -> GroupSplit {
        GroupSplit {
            advantaged: count / 2,
            disadvantaged: count - count / 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GroupSplit {
    pub advantaged: usize,
    pub disadvantaged: usize,
}

impl GroupSplit {
    pub fn total(&self) -> usize {
        self.advantaged + self.disadvantaged
    }
}
