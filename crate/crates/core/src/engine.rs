//! The per-timestep loop: arrivals, retraining, scoring, selection, recourse and
//! adaptation, with every agent-step written to the event log.

use crate::agent::{Agent, IdAllocator};
use crate::config::{Group, Retraining, Selection, SimulationConfig};
use crate::decision::{
    retrain_cda, retrain_grr, select_cns, select_top_k, Candidate, LinearScorer, LogisticModel, RetrainNote,
    TrainingExample,
};
use crate::error::Result;
use crate::log::{new_event_log, AgentSpawn, EventLog, EventRecord, Outcome, StepSummary};
use crate::population::sample_population;
use crate::recourse::{adapt, recommend, Recommendation};
use crate::rng::RngStreams;

/// What the previous step leaves behind for retraining.
#[derive(Debug, Clone, Default)]
struct RetrainMemory {
    examples: Vec<TrainingExample>,
    recommendations: Vec<(Group, Vec<f64>)>,
    model: Option<LogisticModel>,
}

#[derive(Debug, Clone)]
pub struct WorldState {
    pub t: usize,
    pub active: Vec<Agent>,
    /// Agents that received a positive outcome, in exit order.
    pub departed: Vec<Agent>,
    pub scorer: LinearScorer,
    pub log: EventLog,
    pub config: SimulationConfig,
    rng: RngStreams,
    ids: IdAllocator,
    memory: RetrainMemory,
}

impl WorldState {
    pub fn new(config: SimulationConfig) -> Result<Self> {
        let mut log = new_event_log(&config)?;
        let mut rng = RngStreams::new(config.seed);
        let mut ids = IdAllocator::default();
        let active = sample_population(
            &config.population,
            SimulationConfig::split(config.initial_population),
            &mut rng.population_init,
            0,
            &mut ids,
        );
        for a in &active {
            log.push_spawn(AgentSpawn::from(a));
        }
        let scorer = LinearScorer::default();
        let memory = RetrainMemory {
            model: Some(LogisticModel {
                weights: scorer.weights.clone(),
                bias: scorer.bias,
            }),
            ..RetrainMemory::default()
        };
        Ok(Self {
            t: 0,
            active,
            departed: Vec::new(),
            scorer,
            log,
            config,
            rng,
            ids,
            memory,
        })
    }

    pub fn is_finished(&self) -> bool {
        self.t >= self.config.horizon
    }

    fn merge_arrivals(&mut self) -> usize {
        let batch = sample_population(
            &self.config.population,
            SimulationConfig::split(self.config.arrivals_per_step),
            &mut self.rng.arrivals,
            self.t,
            &mut self.ids,
        );
        let n = batch.len();
        for a in batch {
            self.log.push_spawn(AgentSpawn::from(&a));
            self.active.push(a);
        }
        n
    }

    fn retrain(&mut self) -> Option<RetrainNote> {
        let outcome = match self.config.retraining {
            Retraining::None => return None,
            Retraining::Cda => retrain_cda(
                &self.memory.examples,
                &self.memory.recommendations,
                &self.config.cda,
                &self.scorer,
            ),
            Retraining::Grr => {
                let warm = self.memory.model.clone().unwrap_or_else(|| LogisticModel::zeros(2));
                retrain_grr(&self.memory.examples, &self.config.grr, &warm, &self.scorer)
            }
        };
        if let Some(model) = outcome.model {
            self.memory.model = Some(model);
        }
        self.scorer = outcome.scorer;
        outcome.note
    }

    /// Advances one timestep. Does nothing once the horizon is reached.
    pub fn step(&mut self) {
        if self.is_finished() {
            return;
        }
        let t = self.t;
        let arrivals = if t > 0 { self.merge_arrivals() } else { 0 };
        let retrain_note = if t > 0 { self.retrain() } else { None };

        let candidates: Vec<Candidate> = self
            .active
            .iter()
            .map(|a| Candidate::from_agent(a, self.scorer.score(&a.features)))
            .collect();
        let selection = match self.config.selection {
            Selection::TopK => select_top_k(&candidates, self.config.k),
            Selection::Cns => select_cns(&candidates, self.config.k),
        };
        let threshold = selection.threshold;
        let target = threshold;

        let mut examples = Vec::with_capacity(self.active.len());
        let mut recommendations = Vec::new();
        let mut infeasible = 0;
        let mut still_active = Vec::with_capacity(self.active.len());
        let mut exited = Vec::new();
        for (mut agent, cand) in std::mem::take(&mut self.active).into_iter().zip(&candidates) {
            let before = agent.features.clone();
            let positive = selection.selected.contains(&agent.id);
            examples.push(TrainingExample {
                features: before.clone(),
                positive,
                group: agent.group,
            });
            let mut record = EventRecord {
                timestep: t,
                agent_id: agent.id,
                group: agent.group,
                features_before: before,
                score: cand.score,
                outcome: if positive { Outcome::Positive } else { Outcome::Negative },
                threshold: threshold.unwrap_or(f64::NAN),
                recommendation: None,
                moved_cost: 0.0,
                features_after: Vec::new(),
            };
            if positive {
                agent.exit_time = Some(t);
            } else {
                agent.first_negative_time.get_or_insert(t);
                let goal = target.expect("a negative outcome implies a nonempty selection");
                match recommend(&self.scorer, &agent.features, goal) {
                    Ok(projection) => {
                        let rec = Recommendation::issue(agent.id, t, goal, projection);
                        record.moved_cost = adapt(
                            &mut agent,
                            &rec,
                            &mut self.rng.effort,
                            self.config.effort_scale,
                            self.config.adaptation,
                        );
                        recommendations.push((agent.group, rec.target.clone()));
                        record.recommendation = Some(rec.target);
                    }
                    Err(_) => infeasible += 1,
                }
            }
            record.features_after = agent.features.clone();
            self.log.push(record);
            if positive {
                exited.push(agent);
            } else {
                still_active.push(agent);
            }
        }
        self.log.push_step(StepSummary {
            timestep: t,
            active: candidates.len(),
            arrivals,
            positives: selection.selected.len(),
            threshold,
            recourse_target: target,
            scorer: self.scorer.clone(),
            retrain_note,
            infeasible,
        });
        self.active = still_active;
        self.departed.extend(exited);
        self.memory.examples = examples;
        self.memory.recommendations = recommendations;
        self.t += 1;
    }

    pub fn run_to_end(&mut self) {
        while !self.is_finished() {
            self.step();
        }
    }

    /// All agents ever created, keyed by id, in their current state.
    pub fn all_agents(&self) -> std::collections::BTreeMap<u64, Agent> {
        self.active
            .iter()
            .chain(&self.departed)
            .map(|a| (a.id, a.clone()))
            .collect()
    }
}

/// Runs a full simulation and returns the finished world.
pub fn simulate(config: SimulationConfig) -> Result<WorldState> {
    let mut world = WorldState::new(config)?;
    world.run_to_end();
    Ok(world)
}

pub fn run(config: &SimulationConfig) -> Result<EventLog> {
    Ok(simulate(config.clone())?.log)
}
