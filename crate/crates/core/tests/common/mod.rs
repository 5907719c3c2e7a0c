//! Independent oracles and fixtures shared by the integration and acceptance suites.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use recourse_core::decision::LinearScorer;
use recourse_core::log::{new_event_log, AgentSpawn, StepSummary};
use recourse_core::metrics::MetricValue;
use recourse_core::{EventLog, EventRecord, Group, Outcome, Retraining, SimulationConfig};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// (id, group, entry step, outcomes from entry on, movement cost per outcome)
type Plan = (u64, Group, usize, Vec<Outcome>, Vec<f64>);

/// A small random log: agents enter at random steps, are rejected a random number of
/// times with random movement costs, and may or may not be accepted before the end.
pub fn random_log(seed: u64) -> EventLog {
    let mut r = rng(seed);
    let horizon = r.random_range(1..=8);
    let n_agents = r.random_range(1..=30u64);
    let mut plans: Vec<Plan> = Vec::new();
    for id in 0..n_agents {
        let group = if r.random_bool(0.5) { Group::Advantaged } else { Group::Disadvantaged };
        let entry = r.random_range(0..horizon);
        let mut outcomes = Vec::new();
        let mut costs = Vec::new();
        for _ in entry..horizon {
            if r.random_bool(0.3) {
                outcomes.push(Outcome::Positive);
                costs.push(0.0);
                break;
            }
            outcomes.push(Outcome::Negative);
            costs.push(if r.random_bool(0.2) { 0.0 } else { r.random_range(0.0..0.3) });
        }
        plans.push((id, group, entry, outcomes, costs));
    }

    let mut log = new_event_log(&SimulationConfig::default()).unwrap();
    for (id, group, entry, _, _) in &plans {
        log.push_spawn(AgentSpawn {
            agent_id: *id,
            group: *group,
            features: vec![0.5, 0.5],
            effort_mean: 1.0,
            entry_time: *entry,
        });
    }
    for t in 0..horizon {
        let mut active = 0;
        let mut positives = 0;
        for (id, group, entry, outcomes, costs) in &plans {
            let Some(i) = t.checked_sub(*entry) else { continue };
            let Some(&outcome) = outcomes.get(i) else { continue };
            active += 1;
            positives += usize::from(outcome == Outcome::Positive);
            log.push(EventRecord {
                timestep: t,
                agent_id: *id,
                group: *group,
                features_before: vec![0.5, 0.5],
                score: 0.5,
                outcome,
                threshold: 0.5,
                recommendation: None,
                moved_cost: costs[i],
                features_after: vec![0.5, 0.5],
            });
        }
        log.push_step(StepSummary {
            timestep: t,
            active,
            arrivals: 0,
            positives,
            threshold: Some(0.5),
            recourse_target: Some(0.5),
            scorer: LinearScorer::default(),
            retrain_note: None,
            infeasible: 0,
        });
    }
    log
}

/// Everything the oracle needs about one agent, rebuilt from scratch.
#[derive(Debug)]
struct Trace {
    group: Group,
    first_negative: Option<usize>,
    positive: Option<usize>,
    /// Movement costs in log order with their timesteps.
    costs: Vec<(usize, f64)>,
}

fn traces(log: &EventLog) -> BTreeMap<u64, Trace> {
    let mut out = BTreeMap::new();
    for r in log.records() {
        let tr = out.entry(r.agent_id).or_insert(Trace {
            group: r.group,
            first_negative: None,
            positive: None,
            costs: Vec::new(),
        });
        if r.outcome == Outcome::Negative && tr.first_negative.is_none() {
            tr.first_negative = Some(r.timestep);
        }
        if r.outcome == Outcome::Positive && tr.positive.is_none() {
            tr.positive = Some(r.timestep);
        }
        tr.costs.push((r.timestep, r.moved_cost));
    }
    out
}

fn naive_mean(xs: &[f64]) -> MetricValue {
    if xs.is_empty() {
        return None;
    }
    let mut s = 0.0;
    for x in xs {
        s += x;
    }
    Some(s / xs.len() as f64)
}

fn sum_before(costs: &[(usize, f64)], t: usize) -> f64 {
    let mut s = 0.0;
    for (ts, c) in costs {
        if *ts < t {
            s += c;
        }
    }
    s
}

/// (o_minus, o_plus, cost) for every recourse-successful agent of `group`, in id order.
fn successes(log: &EventLog, group: Group) -> Vec<(usize, usize, f64)> {
    let mut out = Vec::new();
    for tr in traces(log).values() {
        if tr.group != group {
            continue;
        }
        if let (Some(n), Some(p)) = (tr.first_negative, tr.positive) {
            if p > n {
                out.push((n, p, sum_before(&tr.costs, p)));
            }
        }
    }
    out
}

pub fn oracle_etr(log: &EventLog, group: Group, t: usize, cumulative: bool) -> MetricValue {
    let xs: Vec<f64> = successes(log, group)
        .into_iter()
        .filter(|(_, p, _)| if cumulative { *p <= t } else { *p == t })
        .map(|(_, _, c)| c)
        .collect();
    naive_mean(&xs)
}

pub fn oracle_ttr(log: &EventLog, group: Group, t: usize, cumulative: bool) -> MetricValue {
    let xs: Vec<f64> = successes(log, group)
        .into_iter()
        .filter(|(_, p, _)| if cumulative { *p <= t } else { *p == t })
        .map(|(n, p, _)| (p - n) as f64)
        .collect();
    naive_mean(&xs)
}

pub fn oracle_dp(log: &EventLog, t: usize) -> MetricValue {
    let (mut act_a, mut act_d, mut pos_a, mut pos_d) = (0usize, 0usize, 0usize, 0usize);
    for r in log.records() {
        if r.timestep != t {
            continue;
        }
        let positive = r.outcome == Outcome::Positive;
        match r.group {
            Group::Advantaged => {
                act_a += 1;
                pos_a += usize::from(positive);
            }
            Group::Disadvantaged => {
                act_d += 1;
                pos_d += usize::from(positive);
            }
        }
    }
    if act_a == 0 || act_d == 0 || pos_a == 0 {
        return None;
    }
    Some((pos_d as f64 / act_d as f64) / (pos_a as f64 / act_a as f64))
}

pub fn oracle_wasted(log: &EventLog, group: Group, t: usize) -> MetricValue {
    let mut xs = Vec::new();
    for tr in traces(log).values() {
        let rejected = tr.first_negative.is_some_and(|n| n <= t);
        let unresolved = tr.positive.is_none_or(|p| p > t);
        if tr.group == group && rejected && unresolved {
            xs.push(sum_before(&tr.costs, t + 1));
        }
    }
    naive_mean(&xs)
}

/// Smallest Euclidean distance from `x` to a point of the 10^-3 grid over the unit
/// square that the scorer accepts at `threshold`.
pub fn grid_projection_cost(scorer: &LinearScorer, x: &[f64], threshold: f64) -> Option<f64> {
    const N: usize = 1000;
    let mut best = f64::INFINITY;
    for i in 0..=N {
        let y0 = i as f64 / N as f64;
        let d0 = (y0 - x[0]) * (y0 - x[0]);
        if d0 >= best * best {
            continue;
        }
        for j in 0..=N {
            let y1 = j as f64 / N as f64;
            if scorer.score(&[y0, y1]) >= threshold {
                let d = (d0 + (y1 - x[1]) * (y1 - x[1])).sqrt();
                best = best.min(d);
            }
        }
    }
    best.is_finite().then_some(best)
}

/// A random scorer (weights of either sign), point and reachable threshold.
pub fn random_instance(r: &mut ChaCha8Rng) -> (LinearScorer, Vec<f64>, f64) {
    let raw = [r.random_range(-1.0..1.0), r.random_range(-1.0..1.0)];
    let scorer = LinearScorer::from_direction(&raw).unwrap_or_default();
    let x = vec![r.random::<f64>(), r.random::<f64>()];
    let best = scorer.bias + scorer.weights.iter().map(|w| w.max(0.0)).sum::<f64>();
    let here = scorer.score(&x);
    let threshold = if r.random_bool(0.1) {
        here - r.random_range(0.0..0.1)
    } else {
        r.random_range(here.min(best)..=best)
    };
    (scorer, x, threshold)
}

/// Structural invariants every finished run must satisfy.
pub fn check_run_invariants(config: &SimulationConfig, log: &EventLog) -> Result<(), String> {
    let steps = log.steps();
    if steps.len() != config.horizon {
        return Err(format!("{} step summaries for horizon {}", steps.len(), config.horizon));
    }
    let mut by_step: Vec<Vec<&EventRecord>> = vec![Vec::new(); config.horizon];
    for r in log.records() {
        by_step[r.timestep].push(r);
    }
    let mut positive_once: BTreeSet<u64> = BTreeSet::new();
    let mut active_ids: BTreeSet<u64> = log
        .spawns()
        .iter()
        .filter(|s| s.entry_time == 0)
        .map(|s| s.agent_id)
        .collect();
    for (t, records) in by_step.iter().enumerate() {
        let s = &steps[t];
        if t > 0 {
            let arrived: Vec<u64> = log
                .spawns()
                .iter()
                .filter(|sp| sp.entry_time == t)
                .map(|sp| sp.agent_id)
                .collect();
            if arrived.len() != s.arrivals {
                return Err(format!("t={t}: {} spawns logged, {} arrivals", arrived.len(), s.arrivals));
            }
            let prev = &steps[t - 1];
            if s.active != prev.active - prev.positives + s.arrivals {
                return Err(format!(
                    "t={t}: conservation broken ({} != {} - {} + {})",
                    s.active, prev.active, prev.positives, s.arrivals
                ));
            }
            active_ids.extend(arrived);
        }
        let seen: BTreeSet<u64> = records.iter().map(|r| r.agent_id).collect();
        if seen.len() != records.len() {
            return Err(format!("t={t}: an agent has two records"));
        }
        if seen != active_ids {
            return Err(format!("t={t}: records do not cover exactly the active agents"));
        }
        if records.len() != s.active {
            return Err(format!("t={t}: {} records for {} active", records.len(), s.active));
        }
        let positives: Vec<u64> = records
            .iter()
            .filter(|r| r.outcome == Outcome::Positive)
            .map(|r| r.agent_id)
            .collect();
        if positives.len() != s.positives || positives.len() != config.k.min(s.active) {
            return Err(format!("t={t}: {} positives for k={} and {} active", positives.len(), config.k, s.active));
        }
        for id in positives {
            if !positive_once.insert(id) {
                return Err(format!("t={t}: agent {id} accepted twice"));
            }
            active_ids.remove(&id);
        }
        if let Some(th) = s.threshold {
            if !(th.is_finite() && (0.0..=1.0).contains(&th)) {
                return Err(format!("t={t}: threshold {th} outside [0,1]"));
            }
        }
        if config.retraining == Retraining::None && s.scorer != steps[0].scorer {
            return Err(format!("t={t}: scorer changed without retraining"));
        }
    }
    Ok(())
}

/// Every event log written as CSV, for byte comparisons.
pub fn csv_bytes(log: &EventLog) -> Vec<u8> {
    let mut out = Vec::new();
    log.write_csv(&mut out).unwrap();
    out
}

pub fn jsonl_bytes(log: &EventLog) -> Vec<u8> {
    let mut out = Vec::new();
    log.write_jsonl(&mut out).unwrap();
    out
}
