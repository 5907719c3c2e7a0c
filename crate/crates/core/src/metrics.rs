//! Fairness-in-recourse metrics computed from event logs.
//!
//! All sums run over agents in ascending id order, so the single-pass
//! [`RunMetrics::from_log`] and the point queries ([`etr`], [`ttr`], ...) agree bit for
//! bit. A missing value (`None`) means "no data", e.g. an empty success set; it is
//! never folded into aggregates as zero.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::agent::AgentId;
use crate::config::{Group, SimulationConfig};
use crate::error::MetricsError;
use crate::log::{EventLog, Outcome};

pub type MetricValue = Option<f64>;

/// An agent that received a negative outcome and later a positive one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuccessRecord {
    pub agent_id: AgentId,
    pub group: Group,
    pub o_minus: usize,
    pub o_plus: usize,
    pub delta: usize,
    pub total_cost: f64,
}

/// An agent with at least one negative and no positive outcome by the horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureRecord {
    pub agent_id: AgentId,
    pub group: Group,
    pub total_cost: f64,
    pub steps_waited: usize,
}

fn mean(values: impl Iterator<Item = f64>) -> MetricValue {
    let mut sum = 0.0;
    let mut n = 0usize;
    for v in values {
        sum += v;
        n += 1;
    }
    (n > 0).then(|| sum / n as f64)
}

pub fn ratio(num: MetricValue, den: MetricValue) -> MetricValue {
    match (num, den) {
        (Some(n), Some(d)) if d != 0.0 => Some(n / d),
        _ => None,
    }
}

pub fn difference(a: MetricValue, b: MetricValue) -> MetricValue {
    Some(a? - b?)
}

/// Per-agent view of the log, in id order.
#[derive(Debug, Clone, Default)]
struct AgentTrack {
    group: Option<Group>,
    first_negative: Option<usize>,
    positive_at: Option<usize>,
    /// (timestep, moved_cost) in log order.
    moves: Vec<(usize, f64)>,
}

fn tracks(log: &EventLog) -> BTreeMap<AgentId, AgentTrack> {
    let mut out: BTreeMap<AgentId, AgentTrack> = BTreeMap::new();
    for r in log.records() {
        let tr = out.entry(r.agent_id).or_default();
        tr.group = Some(r.group);
        match r.outcome {
            Outcome::Negative => {
                tr.first_negative.get_or_insert(r.timestep);
            }
            Outcome::Positive => {
                tr.positive_at.get_or_insert(r.timestep);
            }
        }
        tr.moves.push((r.timestep, r.moved_cost));
    }
    out
}

fn cost_before(moves: &[(usize, f64)], t: usize) -> f64 {
    moves.iter().filter(|(ts, _)| *ts < t).map(|(_, c)| c).sum()
}

fn success_of(id: AgentId, tr: &AgentTrack) -> Option<SuccessRecord> {
    let o_minus = tr.first_negative?;
    let o_plus = tr.positive_at?;
    (o_plus > o_minus).then(|| SuccessRecord {
        agent_id: id,
        group: tr.group.expect("tracked agents have a group"),
        o_minus,
        o_plus,
        delta: o_plus - o_minus,
        total_cost: cost_before(&tr.moves, o_plus),
    })
}

/// Recourse-successful agents of `group` with their positive outcome at or before `t`.
pub fn successful_set(log: &EventLog, group: Group, t: usize) -> Vec<SuccessRecord> {
    tracks(log)
        .iter()
        .filter_map(|(id, tr)| success_of(*id, tr))
        .filter(|s| s.group == group && s.o_plus <= t)
        .collect()
}

/// Effort exerted by the agent before timestep `t`: the sum of its per-step movements.
pub fn effort_of(log: &EventLog, agent_id: AgentId, t: usize) -> Result<f64, MetricsError> {
    let mut found = false;
    let mut total = 0.0;
    for r in log.records().iter().filter(|r| r.agent_id == agent_id) {
        found = true;
        if r.timestep < t {
            total += r.moved_cost;
        }
    }
    if found || log.spawns().iter().any(|s| s.agent_id == agent_id) {
        Ok(total)
    } else {
        Err(MetricsError::UnknownAgent(agent_id))
    }
}

/// Mean effort per successful recourse event, cumulative through `t`.
pub fn etr(log: &EventLog, group: Group, t: usize) -> MetricValue {
    mean(successful_set(log, group, t).iter().map(|s| s.total_cost))
}

/// Disadvantaged over advantaged effort-to-recourse.
pub fn retr(log: &EventLog, t: usize) -> MetricValue {
    ratio(etr(log, Group::Disadvantaged, t), etr(log, Group::Advantaged, t))
}

/// Mean timesteps from first negative to positive outcome, cumulative through `t`.
pub fn ttr(log: &EventLog, group: Group, t: usize) -> MetricValue {
    mean(successful_set(log, group, t).iter().map(|s| s.delta as f64))
}

/// Disadvantaged minus advantaged time-to-recourse; positive means the
/// disadvantaged group waits longer.
pub fn dttr(log: &EventLog, t: usize) -> MetricValue {
    difference(ttr(log, Group::Disadvantaged, t), ttr(log, Group::Advantaged, t))
}

/// Acceptance-rate ratio (disadvantaged / advantaged) at step `t`.
pub fn demographic_parity(log: &EventLog, t: usize) -> MetricValue {
    let mut active = [0usize; 2];
    let mut positive = [0usize; 2];
    for r in log.records().iter().filter(|r| r.timestep == t) {
        active[r.group.index()] += 1;
        if r.outcome == Outcome::Positive {
            positive[r.group.index()] += 1;
        }
    }
    dp_from_counts(active, positive)
}

fn dp_from_counts(active: [usize; 2], positive: [usize; 2]) -> MetricValue {
    if active[0] == 0 || active[1] == 0 || positive[0] == 0 {
        return None;
    }
    let rate_a = positive[0] as f64 / active[0] as f64;
    let rate_d = positive[1] as f64 / active[1] as f64;
    Some(rate_d / rate_a)
}

/// Mean effort of agents that were rejected at least once and had not succeeded by the
/// end of step `t`, counting the movement made in response to step `t`.
pub fn wasted_effort(log: &EventLog, group: Group, t: usize) -> MetricValue {
    let tracks = tracks(log);
    mean(
        tracks
            .values()
            .filter(|tr| tr.group == Some(group))
            .filter(|tr| tr.first_negative.is_some_and(|n| n <= t) && tr.positive_at.is_none_or(|p| p > t))
            .map(|tr| cost_before(&tr.moves, t + 1)),
    )
}

/// Per-group pair of series.
pub type GroupSeries = [Vec<MetricValue>; 2];

/// Every metric series for one run, built in a single pass over the log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub horizon: usize,
    pub etr_step: GroupSeries,
    pub etr_cum: GroupSeries,
    pub ttr_step: GroupSeries,
    pub ttr_cum: GroupSeries,
    pub retr_step: Vec<MetricValue>,
    pub retr_cum: Vec<MetricValue>,
    pub dttr_step: Vec<MetricValue>,
    pub dttr_cum: Vec<MetricValue>,
    pub dp: Vec<MetricValue>,
    pub wasted: GroupSeries,
    pub successes: Vec<SuccessRecord>,
    pub failures: Vec<FailureRecord>,
    /// Scorer weights per step (first coordinate, second coordinate, bias).
    pub weights: Vec<Vec<f64>>,
}

/// Cumulative values at the horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub retr: MetricValue,
    pub dttr: MetricValue,
    pub etr: [MetricValue; 2],
    pub ttr: [MetricValue; 2],
    /// Mean over steps of the per-step demographic parity.
    pub dp: MetricValue,
    pub wasted: [MetricValue; 2],
    pub wasted_ratio: MetricValue,
    /// First step at which any scorer weight was negative.
    pub first_negative_weight: Option<usize>,
}

impl RunMetrics {
    pub fn from_log(log: &EventLog) -> Self {
        let horizon = log
            .horizon()
            .max(log.records().last().map_or(0, |r| r.timestep + 1));
        let mut state: BTreeMap<AgentId, AgentTrack> = BTreeMap::new();
        let mut successes: BTreeMap<AgentId, SuccessRecord> = BTreeMap::new();

        let mut m = RunMetrics {
            horizon,
            etr_step: Default::default(),
            etr_cum: Default::default(),
            ttr_step: Default::default(),
            ttr_cum: Default::default(),
            retr_step: Vec::with_capacity(horizon),
            retr_cum: Vec::with_capacity(horizon),
            dttr_step: Vec::with_capacity(horizon),
            dttr_cum: Vec::with_capacity(horizon),
            dp: Vec::with_capacity(horizon),
            wasted: Default::default(),
            successes: Vec::new(),
            failures: Vec::new(),
            weights: log
                .steps()
                .iter()
                .map(|s| s.scorer.weights.iter().copied().chain([s.scorer.bias]).collect())
                .collect(),
        };

        let records = log.records();
        let mut cursor = 0;
        for t in 0..horizon {
            let mut active = [0usize; 2];
            let mut positive = [0usize; 2];
            while cursor < records.len() && records[cursor].timestep == t {
                let r = &records[cursor];
                cursor += 1;
                let g = r.group.index();
                active[g] += 1;
                let tr = state.entry(r.agent_id).or_default();
                tr.group = Some(r.group);
                match r.outcome {
                    Outcome::Negative => {
                        tr.first_negative.get_or_insert(t);
                    }
                    Outcome::Positive => {
                        positive[g] += 1;
                        tr.positive_at.get_or_insert(t);
                        if let Some(s) = success_of(r.agent_id, tr) {
                            successes.insert(r.agent_id, s);
                        }
                    }
                }
                tr.moves.push((t, r.moved_cost));
            }
            m.dp.push(dp_from_counts(active, positive));

            for g in Group::BOTH {
                let gi = g.index();
                let of_group = || successes.values().filter(move |s| s.group == g);
                m.etr_step[gi].push(mean(of_group().filter(|s| s.o_plus == t).map(|s| s.total_cost)));
                m.etr_cum[gi].push(mean(of_group().map(|s| s.total_cost)));
                m.ttr_step[gi].push(mean(of_group().filter(|s| s.o_plus == t).map(|s| s.delta as f64)));
                m.ttr_cum[gi].push(mean(of_group().map(|s| s.delta as f64)));
                m.wasted[gi].push(mean(
                    state
                        .values()
                        .filter(|tr| tr.group == Some(g) && tr.first_negative.is_some() && tr.positive_at.is_none())
                        .map(|tr| tr.moves.iter().map(|(_, c)| c).sum::<f64>()),
                ));
            }
            let (a, d) = (Group::Advantaged.index(), Group::Disadvantaged.index());
            m.retr_step.push(ratio(m.etr_step[d][t], m.etr_step[a][t]));
            m.retr_cum.push(ratio(m.etr_cum[d][t], m.etr_cum[a][t]));
            m.dttr_step.push(difference(m.ttr_step[d][t], m.ttr_step[a][t]));
            m.dttr_cum.push(difference(m.ttr_cum[d][t], m.ttr_cum[a][t]));
        }

        m.successes = successes.into_values().collect();
        m.failures = state
            .iter()
            .filter(|(_, tr)| tr.first_negative.is_some() && tr.positive_at.is_none())
            .map(|(id, tr)| FailureRecord {
                agent_id: *id,
                group: tr.group.expect("tracked agents have a group"),
                total_cost: tr.moves.iter().map(|(_, c)| c).sum(),
                steps_waited: horizon - tr.first_negative.expect("filtered"),
            })
            .collect();
        m
    }

    pub fn summary(&self) -> Summary {
        let last = |s: &Vec<MetricValue>| s.last().copied().flatten();
        let wasted = [last(&self.wasted[0]), last(&self.wasted[1])];
        Summary {
            retr: last(&self.retr_cum),
            dttr: last(&self.dttr_cum),
            etr: [last(&self.etr_cum[0]), last(&self.etr_cum[1])],
            ttr: [last(&self.ttr_cum[0]), last(&self.ttr_cum[1])],
            dp: mean(self.dp.iter().flatten().copied()),
            wasted,
            wasted_ratio: ratio(wasted[1], wasted[0]),
            first_negative_weight: self
                .weights
                .iter()
                .position(|w| w[..w.len() - 1].iter().any(|v| *v < 0.0)),
        }
    }
}

/// Band inside which an effort ratio counts as acceptable under the 80% rule.
pub const FAIR_RETR_BAND: (f64, f64) = (0.8, 1.2);

pub fn retr_within_tolerance(value: f64) -> bool {
    (FAIR_RETR_BAND.0..=FAIR_RETR_BAND.1).contains(&value)
}

/// Mean and standard error over seeds, ignoring missing values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub stderr: f64,
    pub n: usize,
}

pub fn aggregate(values: impl IntoIterator<Item = MetricValue>) -> Option<Stat> {
    let xs: Vec<f64> = values.into_iter().flatten().collect();
    let n = xs.len();
    if n == 0 {
        return None;
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    let stderr = if n > 1 {
        let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64;
        (var / n as f64).sqrt()
    } else {
        0.0
    };
    Some(Stat { mean, stderr, n })
}

/// Comparison of two runs that differ only in their effort means.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Proportionality {
    pub retr_first: f64,
    pub retr_second: f64,
    /// `retr_first / retr_second`.
    pub retr_ratio: f64,
    /// `(e_d/e_a)_first / (e_d/e_a)_second`.
    pub effort_ratio: f64,
    /// Both ratios lie on the same side of 1 (or both equal 1).
    pub ordering_consistent: bool,
}

pub fn proposition1_diagnostic(
    first: (&SimulationConfig, f64),
    second: (&SimulationConfig, f64),
) -> Result<Proportionality, MetricsError> {
    let (ca, ra) = first;
    let (cb, rb) = second;
    let mut a = ca.clone();
    let mut b = cb.clone();
    for c in [&mut a, &mut b] {
        c.population.e_a = 0.0;
        c.population.e_d = 0.0;
        c.seed = 0;
    }
    if a != b {
        return Err(MetricsError::MismatchedConfigs(first_difference(&a, &b)));
    }
    let effort = |c: &SimulationConfig| c.population.e_d / c.population.e_a;
    let effort_ratio = effort(ca) / effort(cb);
    let retr_ratio = ra / rb;
    let side = |x: f64| {
        if (x - 1.0).abs() < 1e-12 {
            0
        } else if x > 1.0 {
            1
        } else {
            -1
        }
    };
    Ok(Proportionality {
        retr_first: ra,
        retr_second: rb,
        retr_ratio,
        effort_ratio,
        ordering_consistent: side(retr_ratio) == side(effort_ratio),
    })
}

fn first_difference(a: &SimulationConfig, b: &SimulationConfig) -> &'static str {
    if a.population != b.population {
        "population"
    } else if a.selection != b.selection {
        "selection"
    } else if a.retraining != b.retraining {
        "retraining"
    } else if a.k != b.k {
        "k"
    } else if a.horizon != b.horizon {
        "horizon"
    } else {
        "config"
    }
}
