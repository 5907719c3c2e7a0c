//! Append-only event log, its flat-file encodings and the run manifest.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::agent::{Agent, AgentId};
use crate::config::{Group, SimulationConfig};
use crate::decision::{LinearScorer, RetrainNote};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Outcome {
    Positive,
    Negative,
}

impl Outcome {
    pub fn as_str(self) -> &'static str {
        match self {
            Outcome::Positive => "positive",
            Outcome::Negative => "negative",
        }
    }
}

/// One agent at one timestep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub timestep: usize,
    pub agent_id: AgentId,
    pub group: Group,
    pub features_before: Vec<f64>,
    pub score: f64,
    pub outcome: Outcome,
    pub threshold: f64,
    pub recommendation: Option<Vec<f64>>,
    pub moved_cost: f64,
    pub features_after: Vec<f64>,
}

/// An agent as it entered the world.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentSpawn {
    pub agent_id: AgentId,
    pub group: Group,
    pub features: Vec<f64>,
    pub effort_mean: f64,
    pub entry_time: usize,
}

impl From<&Agent> for AgentSpawn {
    fn from(a: &Agent) -> Self {
        Self {
            agent_id: a.id,
            group: a.group,
            features: a.features.clone(),
            effort_mean: a.effort_mean,
            entry_time: a.entry_time,
        }
    }
}

/// Per-timestep bookkeeping that is not tied to a single agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepSummary {
    pub timestep: usize,
    pub active: usize,
    pub arrivals: usize,
    pub positives: usize,
    pub threshold: Option<f64>,
    /// Score level recommendations were aimed at.
    pub recourse_target: Option<f64>,
    pub scorer: LinearScorer,
    pub retrain_note: Option<RetrainNote>,
    /// Negative agents for whom no recommendation could be produced.
    pub infeasible: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventLog {
    config_hash: String,
    seed: u64,
    spawns: Vec<AgentSpawn>,
    records: Vec<EventRecord>,
    steps: Vec<StepSummary>,
}

pub fn new_event_log(config: &SimulationConfig) -> Result<EventLog> {
    config.validate()?;
    Ok(EventLog {
        config_hash: config.hash(),
        seed: config.seed,
        spawns: Vec::new(),
        records: Vec::new(),
        steps: Vec::new(),
    })
}

impl EventLog {
    pub fn config_hash(&self) -> &str {
        &self.config_hash
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn records(&self) -> &[EventRecord] {
        &self.records
    }

    pub fn spawns(&self) -> &[AgentSpawn] {
        &self.spawns
    }

    pub fn steps(&self) -> &[StepSummary] {
        &self.steps
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Number of simulated timesteps.
    pub fn horizon(&self) -> usize {
        self.steps.len()
    }

    pub fn push_spawn(&mut self, spawn: AgentSpawn) {
        self.spawns.push(spawn);
    }

    pub fn push(&mut self, record: EventRecord) {
        debug_assert!(self.records.last().is_none_or(|r| r.timestep <= record.timestep));
        self.records.push(record);
    }

    pub fn push_step(&mut self, step: StepSummary) {
        self.steps.push(step);
    }

    /// Rebuilds every agent's final state from spawns and records alone.
    pub fn replay(&self) -> BTreeMap<AgentId, Agent> {
        let mut agents: BTreeMap<AgentId, Agent> = self
            .spawns
            .iter()
            .map(|s| {
                (
                    s.agent_id,
                    Agent::new(s.agent_id, s.group, s.features.clone(), s.effort_mean, s.entry_time),
                )
            })
            .collect();
        for r in &self.records {
            let Some(agent) = agents.get_mut(&r.agent_id) else {
                continue;
            };
            match r.outcome {
                Outcome::Positive => agent.exit_time = Some(r.timestep),
                Outcome::Negative => {
                    agent.first_negative_time.get_or_insert(r.timestep);
                }
            }
            agent.features = r.features_after.clone();
            agent.cumulative_cost += r.moved_cost;
        }
        agents
    }

    pub const CSV_HEADER: [&'static str; 11] = [
        "timestep",
        "agent_id",
        "group",
        "f0",
        "f1",
        "score",
        "outcome",
        "threshold",
        "rec0",
        "rec1",
        "moved_cost",
    ];

    /// One row per record under the fixed two-feature header.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(Self::CSV_HEADER)?;
        for r in &self.records {
            if r.features_before.len() != 2 {
                return Err(Error::ConfigFile(format!(
                    "csv export needs two features, record for agent {} has {}",
                    r.agent_id,
                    r.features_before.len()
                )));
            }
            let (rec0, rec1) = match &r.recommendation {
                Some(x) => (x[0].to_string(), x[1].to_string()),
                None => (String::new(), String::new()),
            };
            w.write_record([
                r.timestep.to_string(),
                r.agent_id.to_string(),
                r.group.as_str().to_string(),
                r.features_before[0].to_string(),
                r.features_before[1].to_string(),
                r.score.to_string(),
                r.outcome.as_str().to_string(),
                r.threshold.to_string(),
                rec0,
                rec1,
                r.moved_cost.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }

    /// Line-delimited JSON: a header line, then spawns, step summaries and events.
    pub fn write_jsonl<W: Write>(&self, out: W) -> Result<()> {
        let mut w = BufWriter::new(out);
        let mut line = |entry: &LogLine| -> Result<()> {
            serde_json::to_writer(&mut w, entry)?;
            w.write_all(b"\n").map_err(|e| Error::io("<jsonl>", e))
        };
        line(&LogLine::Header {
            config_hash: self.config_hash.clone(),
            seed: self.seed,
        })?;
        for s in &self.spawns {
            line(&LogLine::Spawn(s.clone()))?;
        }
        for s in &self.steps {
            line(&LogLine::Step(s.clone()))?;
        }
        for r in &self.records {
            line(&LogLine::Event(r.clone()))?;
        }
        w.flush().map_err(|e| Error::io("<jsonl>", e))
    }

    pub fn read_jsonl<R: std::io::Read>(input: R) -> Result<EventLog> {
        let mut log = EventLog {
            config_hash: String::new(),
            seed: 0,
            spawns: Vec::new(),
            records: Vec::new(),
            steps: Vec::new(),
        };
        for line in BufReader::new(input).lines() {
            let line = line.map_err(|e| Error::io("<jsonl>", e))?;
            if line.trim().is_empty() {
                continue;
            }
            match serde_json::from_str::<LogLine>(&line)? {
                LogLine::Header { config_hash, seed } => {
                    log.config_hash = config_hash;
                    log.seed = seed;
                }
                LogLine::Spawn(s) => log.spawns.push(s),
                LogLine::Step(s) => log.steps.push(s),
                LogLine::Event(r) => log.records.push(r),
            }
        }
        Ok(log)
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum LogLine {
    Header { config_hash: String, seed: u64 },
    Spawn(AgentSpawn),
    Step(StepSummary),
    Event(EventRecord),
}

pub const BUILD_ID: &str = concat!(env!("CARGO_PKG_NAME"), "-", env!("CARGO_PKG_VERSION"));

/// Everything needed to reproduce a run, written next to its log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub build_id: String,
    pub config_hash: String,
    pub cell_hash: String,
    pub seed: u64,
    pub config: SimulationConfig,
    pub records: usize,
    pub complete: bool,
    pub warnings: Vec<String>,
    /// Scorer at every timestep; present when retraining is active.
    pub scorer_trajectory: Option<Vec<LinearScorer>>,
}

impl RunManifest {
    pub fn for_run(config: &SimulationConfig, log: &EventLog) -> Self {
        let trajectory = (config.retraining != crate::config::Retraining::None)
            .then(|| log.steps().iter().map(|s| s.scorer.clone()).collect());
        let warnings = log
            .steps()
            .iter()
            .filter(|s| s.infeasible > 0)
            .map(|s| format!("t={}: {} agents got no feasible recommendation", s.timestep, s.infeasible))
            .collect();
        Self {
            build_id: BUILD_ID.to_string(),
            config_hash: config.hash(),
            cell_hash: config.cell_hash(),
            seed: config.seed,
            config: config.clone(),
            records: log.len(),
            complete: true,
            warnings,
            scorer_trajectory: trajectory,
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

pub const EVENTS_CSV: &str = "events.csv";
pub const EVENTS_JSONL: &str = "events.jsonl";
pub const MANIFEST: &str = "manifest.json";

/// Writes `events.csv` and `events.jsonl` into `dir`, creating it if needed.
pub fn write_events(dir: &Path, log: &EventLog) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let csv_path = dir.join(EVENTS_CSV);
    let file = fs::File::create(&csv_path).map_err(|e| Error::io(&csv_path, e))?;
    log.write_csv(BufWriter::new(file))?;
    let jsonl_path = dir.join(EVENTS_JSONL);
    let file = fs::File::create(&jsonl_path).map_err(|e| Error::io(&jsonl_path, e))?;
    log.write_jsonl(file)
}

/// Writes `events.csv`, `events.jsonl` and `manifest.json` into `dir`.
pub fn write_run_dir(dir: &Path, config: &SimulationConfig, log: &EventLog) -> Result<RunManifest> {
    write_events(dir, log)?;
    // Manifest last: its presence marks the directory complete.
    let manifest = RunManifest::for_run(config, log);
    manifest.write(&dir.join(MANIFEST))?;
    Ok(manifest)
}

pub fn read_run_dir(dir: &Path) -> Result<(RunManifest, EventLog)> {
    let manifest = RunManifest::read(&dir.join(MANIFEST))?;
    let path = dir.join(EVENTS_JSONL);
    let file = fs::File::open(&path).map_err(|e| Error::io(&path, e))?;
    let log = EventLog::read_jsonl(file)?;
    Ok((manifest, log))
}
