//! Experiment grid runner: expands the (effort condition, q, intervention) cross
//! product, runs every cell for a range of seeds, and aggregates the results.

mod report;
mod settings;

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::config::{Retraining, Selection, SimulationConfig, DEFAULT_EFFORT};
use crate::engine::run;
use crate::error::{Error, Result};
use crate::log::{read_run_dir, write_events, RunManifest, EVENTS_JSONL, MANIFEST};
use crate::metrics::RunMetrics;

pub use report::{
    best_index, emit_plot_data, render_table, AggregateRow, CellReport, MetricsReport, RenderedTable,
    AGENTS_FILE, CELLS_FILE, ETR_SERIES_FILE, METRICS_CSV, WEIGHTS_FILE,
};
pub use settings::{Profile, Settings};

pub const LOGS_DIR: &str = "logs";
pub const AGGREGATE_DIR: &str = "aggregate";
pub const TABLES_DIR: &str = "tables";
pub const PLOTS_DIR: &str = "plots";
/// Per-run metrics, written next to the manifest.
pub const RUN_METRICS: &str = "metrics.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Intervention {
    #[serde(rename = "baseline")]
    Baseline,
    #[serde(rename = "cns")]
    Cns,
    #[serde(rename = "cda")]
    Cda,
    #[serde(rename = "cns+cda")]
    CnsCda,
    #[serde(rename = "grr")]
    Grr,
}

impl Intervention {
    pub const ALL: [Intervention; 5] = [
        Intervention::Baseline,
        Intervention::Cns,
        Intervention::Cda,
        Intervention::CnsCda,
        Intervention::Grr,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Intervention::Baseline => "baseline",
            Intervention::Cns => "cns",
            Intervention::Cda => "cda",
            Intervention::CnsCda => "cns+cda",
            Intervention::Grr => "grr",
        }
    }

    pub fn selection(self) -> Selection {
        match self {
            Intervention::Cns | Intervention::CnsCda => Selection::Cns,
            _ => Selection::TopK,
        }
    }

    pub fn retraining(self) -> Retraining {
        match self {
            Intervention::Cda | Intervention::CnsCda => Retraining::Cda,
            Intervention::Grr => Retraining::Grr,
            _ => Retraining::None,
        }
    }

    pub fn apply(self, config: &mut SimulationConfig) {
        config.selection = self.selection();
        config.retraining = self.retraining();
    }

    /// The intervention a configuration corresponds to, if any.
    pub fn of(config: &SimulationConfig) -> Option<Intervention> {
        Intervention::ALL
            .into_iter()
            .find(|i| i.selection() == config.selection && i.retraining() == config.retraining)
    }
}

impl fmt::Display for Intervention {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Intervention {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        Intervention::ALL
            .into_iter()
            .find(|i| i.as_str() == lower)
            .ok_or_else(|| {
                Error::ConfigFile(format!(
                    "unknown intervention '{s}' (expected baseline, cns, cda, cns+cda or grr)"
                ))
            })
    }
}

/// A pair of effort means.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffortCondition {
    pub e_a: f64,
    pub e_d: f64,
}

impl EffortCondition {
    /// Equal effort, advantaged doubled, disadvantaged doubled.
    pub fn standard(e: f64) -> Vec<EffortCondition> {
        vec![
            EffortCondition { e_a: e, e_d: e },
            EffortCondition { e_a: e, e_d: e / 2.0 },
            EffortCondition { e_a: e / 2.0, e_d: e },
        ]
    }

    pub fn label(&self) -> &'static str {
        if self.e_a == self.e_d {
            "e_a=e_d"
        } else if self.e_a > self.e_d {
            "e_a>e_d"
        } else {
            "e_a<e_d"
        }
    }

    fn rank(&self) -> u8 {
        match self.label() {
            "e_a=e_d" => 0,
            "e_a>e_d" => 1,
            _ => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellKey {
    pub intervention: Intervention,
    pub q: f64,
    pub effort: EffortCondition,
}

impl CellKey {
    pub fn from_config(config: &SimulationConfig) -> Option<CellKey> {
        Some(CellKey {
            intervention: Intervention::of(config)?,
            q: config.population.q,
            effort: EffortCondition {
                e_a: config.population.e_a,
                e_d: config.population.e_d,
            },
        })
    }

    /// Table order: effort condition, then q, then intervention.
    pub fn order(&self, other: &CellKey) -> std::cmp::Ordering {
        self.effort
            .rank()
            .cmp(&other.effort.rank())
            .then(self.effort.e_a.total_cmp(&other.effort.e_a))
            .then(self.effort.e_d.total_cmp(&other.effort.e_d))
            .then(self.q.total_cmp(&other.q))
            .then(self.intervention.cmp(&other.intervention))
    }
}

/// One grid cell: a resolved configuration (seed set to the base seed) and its seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub key: CellKey,
    pub config: SimulationConfig,
    pub seeds: Vec<u64>,
}

impl Cell {
    pub fn hash(&self) -> String {
        self.config.cell_hash()
    }

    pub fn config_for(&self, seed: u64) -> SimulationConfig {
        SimulationConfig {
            seed,
            ..self.config.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentGrid {
    pub q_values: Vec<f64>,
    pub effort_conditions: Vec<EffortCondition>,
    pub interventions: Vec<Intervention>,
    pub seeds: usize,
    /// Seed counts that replace `seeds` for particular interventions.
    pub seed_overrides: BTreeMap<Intervention, usize>,
    /// Every other setting; its seed is the base seed.
    pub base: SimulationConfig,
}

impl Default for ExperimentGrid {
    fn default() -> Self {
        Self {
            q_values: vec![0.0, 1.0, 2.0, 3.0],
            effort_conditions: EffortCondition::standard(DEFAULT_EFFORT),
            interventions: vec![
                Intervention::Baseline,
                Intervention::Cns,
                Intervention::Cda,
                Intervention::CnsCda,
            ],
            seeds: Profile::Paper.seeds(),
            seed_overrides: BTreeMap::from([(Intervention::Grr, 10)]),
            base: SimulationConfig::default(),
        }
    }
}

impl ExperimentGrid {
    pub fn seeds_for(&self, intervention: Intervention) -> usize {
        self.seed_overrides
            .get(&intervention)
            .copied()
            .unwrap_or(self.seeds)
    }

    /// The cross product, in table order.
    pub fn cells(&self) -> Vec<Cell> {
        let mut cells = Vec::new();
        for effort in &self.effort_conditions {
            for &q in &self.q_values {
                for &intervention in &self.interventions {
                    let mut config = self.base.clone();
                    config.population.q = q;
                    config.population.e_a = effort.e_a;
                    config.population.e_d = effort.e_d;
                    intervention.apply(&mut config);
                    let base_seed = self.base.seed;
                    let seeds = (0..self.seeds_for(intervention) as u64)
                        .map(|i| base_seed.wrapping_add(i))
                        .collect();
                    cells.push(Cell {
                        key: CellKey {
                            intervention,
                            q,
                            effort: *effort,
                        },
                        config,
                        seeds,
                    });
                }
            }
        }
        cells
    }

    pub fn validate(&self) -> Result<()> {
        let empty = [
            ("q values", self.q_values.is_empty()),
            ("effort conditions", self.effort_conditions.is_empty()),
            ("interventions", self.interventions.is_empty()),
            ("seeds", self.seeds == 0),
        ];
        if let Some((what, _)) = empty.iter().find(|(_, e)| *e) {
            return Err(Error::Harness(format!("grid has no {what}")));
        }
        for cell in self.cells() {
            cell.config.validate()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunOptions {
    pub workers: usize,
    /// Also write the raw event logs of every run.
    pub keep_logs: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            workers: 1,
            keep_logs: false,
        }
    }
}

pub fn run_dir(out: &Path, cell_hash: &str, seed: u64) -> PathBuf {
    out.join(LOGS_DIR).join(cell_hash).join(format!("seed-{seed}"))
}

/// What a finished run leaves behind for aggregation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunDigest {
    pub seed: u64,
    pub metrics: RunMetrics,
}

#[derive(Debug, Clone)]
pub struct GridOutcome {
    pub report: MetricsReport,
    pub executed: usize,
    /// Runs whose complete outputs were already on disk.
    pub reused: usize,
    pub warnings: Vec<String>,
}

struct Task {
    cell: usize,
    seed: u64,
    /// Keep per-agent records for plot data; only the first seed of a cell does.
    sample: bool,
}

/// Runs every (cell, seed) pair not already complete under `out`, then aggregates.
pub fn run_grid(grid: &ExperimentGrid, out: &Path, options: RunOptions) -> Result<GridOutcome> {
    grid.validate()?;
    let cells = grid.cells();
    let tasks: Vec<Task> = cells
        .iter()
        .enumerate()
        .flat_map(|(i, c)| {
            c.seeds.iter().enumerate().map(move |(j, &seed)| Task {
                cell: i,
                seed,
                sample: j == 0,
            })
        })
        .collect();

    let results = map_tasks(&tasks, options.workers, |task| {
        execute(&cells[task.cell], task.seed, task.sample, out, options.keep_logs)
    })?;

    let mut executed = 0;
    let mut reused = 0;
    let mut warnings = Vec::new();
    let mut per_cell: Vec<Vec<RunDigest>> = vec![Vec::new(); cells.len()];
    for (task, result) in tasks.iter().zip(results) {
        match result {
            Ok((digest, was_reused)) => {
                if was_reused {
                    reused += 1;
                } else {
                    executed += 1;
                }
                per_cell[task.cell].push(digest);
            }
            Err(e) => warnings.push(format!(
                "cell {} seed {}: {e}",
                cells[task.cell].hash(),
                task.seed
            )),
        }
    }
    let mut entries = Vec::new();
    for (cell, digests) in cells.iter().zip(per_cell) {
        if digests.is_empty() {
            warnings.push(format!("cell {} has no completed runs", cell.hash()));
            continue;
        }
        entries.push((cell.key, cell.hash(), digests));
    }
    let report = MetricsReport::from_runs(entries);
    report.write_aggregate(&out.join(AGGREGATE_DIR))?;
    Ok(GridOutcome {
        report,
        executed,
        reused,
        warnings,
    })
}

#[cfg(feature = "parallel")]
fn map_tasks<T, R, F>(items: &[T], workers: usize, f: F) -> Result<Vec<R>>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    use rayon::prelude::*;
    if workers <= 1 {
        return Ok(items.iter().map(f).collect());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Harness(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(|| items.par_iter().map(f).collect()))
}

#[cfg(not(feature = "parallel"))]
fn map_tasks<T, R, F>(items: &[T], _workers: usize, f: F) -> Result<Vec<R>>
where
    F: Fn(&T) -> R,
{
    Ok(items.iter().map(f).collect())
}

fn execute(cell: &Cell, seed: u64, sample: bool, out: &Path, keep_logs: bool) -> Result<(RunDigest, bool)> {
    let config = cell.config_for(seed);
    let dir = run_dir(out, &cell.hash(), seed);
    if let Some(digest) = load_complete(&dir, &config) {
        return Ok((digest, true));
    }
    let log = run(&config)?;
    let mut metrics = RunMetrics::from_log(&log);
    if !sample {
        metrics.successes.clear();
        metrics.failures.clear();
    }
    let digest = RunDigest { seed, metrics };
    if keep_logs {
        write_events(&dir, &log)?;
    } else {
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    }
    write_json(&dir.join(RUN_METRICS), &digest)?;
    // Manifest last: its presence marks the run complete.
    RunManifest::for_run(&config, &log).write(&dir.join(MANIFEST))?;
    Ok((digest, false))
}

fn load_complete(dir: &Path, config: &SimulationConfig) -> Option<RunDigest> {
    let manifest = RunManifest::read(&dir.join(MANIFEST)).ok()?;
    if !manifest.complete || manifest.config_hash != config.hash() {
        return None;
    }
    read_json(&dir.join(RUN_METRICS)).ok()
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string(value)?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// Completed runs found under `out/logs`, grouped by cell.
fn completed_runs(out: &Path) -> Result<Vec<(PathBuf, RunManifest)>> {
    let logs = out.join(LOGS_DIR);
    let mut found = Vec::new();
    if !logs.is_dir() {
        return Ok(found);
    }
    let mut cell_dirs = list_dirs(&logs)?;
    cell_dirs.sort();
    for cell_dir in cell_dirs {
        for run_dir in list_dirs(&cell_dir)? {
            if let Ok(manifest) = RunManifest::read(&run_dir.join(MANIFEST)) {
                if manifest.complete {
                    found.push((run_dir, manifest));
                }
            }
        }
    }
    Ok(found)
}

fn list_dirs(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut dirs = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.is_dir() {
            dirs.push(path);
        }
    }
    Ok(dirs)
}

/// Rebuilds the report from the per-run metrics stored under `out/logs`.
pub fn collect_report(out: &Path) -> Result<MetricsReport> {
    let mut cells: BTreeMap<String, (CellKey, Vec<RunDigest>)> = BTreeMap::new();
    for (dir, manifest) in completed_runs(out)? {
        let Some(key) = CellKey::from_config(&manifest.config) else {
            continue;
        };
        let digest: RunDigest = read_json(&dir.join(RUN_METRICS))?;
        cells
            .entry(manifest.cell_hash.clone())
            .or_insert_with(|| (key, Vec::new()))
            .1
            .push(digest);
    }
    let entries = cells
        .into_iter()
        .map(|(hash, (key, mut digests))| {
            digests.sort_by_key(|d| d.seed);
            (key, hash, digests)
        })
        .collect();
    Ok(MetricsReport::from_runs(entries))
}

/// Recomputes `metrics.json` from the stored event logs, for every run that kept
/// them, and rewrites the aggregate. Returns how many runs were recomputed.
pub fn recompute_metrics(out: &Path) -> Result<usize> {
    let mut recomputed = 0;
    for (dir, manifest) in completed_runs(out)? {
        if !dir.join(EVENTS_JSONL).exists() {
            continue;
        }
        let (_, log) = read_run_dir(&dir)?;
        let previous: Option<RunDigest> = read_json(&dir.join(RUN_METRICS)).ok();
        let mut metrics = RunMetrics::from_log(&log);
        if previous.is_some_and(|p| p.metrics.successes.is_empty()) {
            metrics.successes.clear();
            metrics.failures.clear();
        }
        write_json(
            &dir.join(RUN_METRICS),
            &RunDigest {
                seed: manifest.seed,
                metrics,
            },
        )?;
        recomputed += 1;
    }
    collect_report(out)?.write_aggregate(&out.join(AGGREGATE_DIR))?;
    Ok(recomputed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interventions_round_trip() {
        for i in Intervention::ALL {
            assert_eq!(i.as_str().parse::<Intervention>().unwrap(), i);
            let mut c = SimulationConfig::default();
            i.apply(&mut c);
            assert_eq!(Intervention::of(&c), Some(i));
        }
        assert!("fair".parse::<Intervention>().is_err());
        assert_eq!("CNS+CDA".parse::<Intervention>().unwrap(), Intervention::CnsCda);
    }

    #[test]
    fn default_grid_is_the_full_cross_product() {
        let grid = ExperimentGrid::default();
        let cells = grid.cells();
        assert_eq!(cells.len(), 4 * 3 * 4);
        assert!(cells.iter().all(|c| c.seeds.len() == 100));
        let hashes: std::collections::BTreeSet<_> = cells.iter().map(|c| c.hash()).collect();
        assert_eq!(hashes.len(), cells.len());
    }

    #[test]
    fn seed_override_applies_per_intervention() {
        let grid = ExperimentGrid {
            interventions: vec![Intervention::Baseline, Intervention::Grr],
            q_values: vec![3.0],
            effort_conditions: EffortCondition::standard(1.0)[..1].to_vec(),
            seeds: 4,
            base: SimulationConfig {
                seed: 7,
                ..SimulationConfig::default()
            },
            ..ExperimentGrid::default()
        };
        let cells = grid.cells();
        assert_eq!(cells[0].seeds, vec![7, 8, 9, 10]);
        assert_eq!(cells[1].seeds.len(), 10);
        assert_eq!(cells[1].seeds[0], 7);
    }

    #[test]
    fn effort_labels() {
        let c = EffortCondition::standard(1.0);
        let labels: Vec<_> = c.iter().map(|e| e.label()).collect();
        assert_eq!(labels, ["e_a=e_d", "e_a>e_d", "e_a<e_d"]);
    }
}
