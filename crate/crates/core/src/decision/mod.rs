//! Scoring, winner selection and threshold updates.

mod retrain;

pub use retrain::{
    fit_logistic_gd, fit_logistic_newton, grr_regularizer, retrain_cda, retrain_grr, LogisticModel,
    RetrainNote, RetrainOutcome, TrainingExample,
};

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::agent::{Agent, AgentId};
use crate::config::Group;

/// Linear ranker `w . x + b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearScorer {
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl Default for LinearScorer {
    fn default() -> Self {
        Self {
            weights: vec![0.5, 0.5],
            bias: 0.0,
        }
    }
}

impl LinearScorer {
    pub fn new(weights: Vec<f64>, bias: f64) -> Self {
        Self { weights, bias }
    }

    pub fn score(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.weights.len());
        self.weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + self.bias
    }

    pub fn norm_sq(&self) -> f64 {
        self.weights.iter().map(|w| w * w).sum()
    }

    /// Rescales raw weights to unit L1 norm and offsets the bias so that every
    /// point of the unit box scores inside [0, 1]. Ordering is preserved.
    pub fn from_direction(raw: &[f64]) -> Option<Self> {
        let l1: f64 = raw.iter().map(|w| w.abs()).sum();
        if !(l1.is_finite() && l1 > 0.0) {
            return None;
        }
        let mut weights: Vec<f64> = raw.iter().map(|w| w / l1).collect();
        // Make the magnitudes sum to exactly 1. The largest magnitude is at least 1/d,
        // so for d <= 2 the complement of the rest is computed without rounding and no
        // box score can round past 1.
        let largest = (0..weights.len())
            .max_by(|&i, &j| weights[i].abs().total_cmp(&weights[j].abs()).then(j.cmp(&i)))
            .expect("nonzero norm implies a weight");
        let rest: f64 = (0..weights.len()).filter(|&i| i != largest).map(|i| weights[i].abs()).sum();
        weights[largest] = (1.0 - rest).copysign(weights[largest]);
        let bias = weights.iter().map(|w| (-w).max(0.0)).sum();
        Some(Self { weights, bias })
    }

    pub fn has_negative_weight(&self) -> bool {
        self.weights.iter().any(|w| *w < 0.0)
    }
}

pub fn score_all(scorer: &LinearScorer, agents: &[Agent]) -> BTreeMap<AgentId, f64> {
    agents.iter().map(|a| (a.id, scorer.score(&a.features))).collect()
}

/// Scores closer than this are treated as tied, so that agents who land on the same
/// target are separated by the waiting-time rule and not by rounding noise.
pub const SCORE_RESOLUTION: f64 = 1e-10;

fn score_key(score: f64) -> i64 {
    (score / SCORE_RESOLUTION).round() as i64
}

/// A scored agent as seen by the selection rules.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub id: AgentId,
    pub group: Group,
    pub score: f64,
    /// Timestep of the agent's first negative outcome, if any.
    pub waiting_since: Option<usize>,
}

impl Candidate {
    pub fn from_agent(agent: &Agent, score: f64) -> Self {
        Self {
            id: agent.id,
            group: agent.group,
            score,
            waiting_since: agent.first_negative_time,
        }
    }
}

/// Higher score first; among ties the agent waiting longest, then the lower id.
pub fn priority(a: &Candidate, b: &Candidate) -> Ordering {
    score_key(b.score)
        .cmp(&score_key(a.score))
        .then_with(|| match (a.waiting_since, b.waiting_since) {
            (Some(x), Some(y)) => x.cmp(&y),
            (Some(_), None) => Ordering::Less,
            (None, Some(_)) => Ordering::Greater,
            (None, None) => Ordering::Equal,
        })
        .then_with(|| a.id.cmp(&b.id))
}

/// Strict "outranks" used by invariant checks: the score difference exceeds the
/// tie resolution.
pub fn strictly_outscores(a: f64, b: f64) -> bool {
    score_key(a) > score_key(b)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    pub selected: BTreeSet<AgentId>,
    /// Minimum score among the selected; `None` only when nobody was selected.
    pub threshold: Option<f64>,
    pub per_group_counts: BTreeMap<Group, usize>,
}

impl SelectionResult {
    fn from_picks(candidates: &[Candidate], picks: &[usize]) -> Self {
        let mut per_group_counts: BTreeMap<Group, usize> = Group::BOTH.iter().map(|g| (*g, 0)).collect();
        let mut selected = BTreeSet::new();
        let mut threshold: Option<f64> = None;
        for &i in picks {
            let c = &candidates[i];
            selected.insert(c.id);
            *per_group_counts.entry(c.group).or_default() += 1;
            threshold = Some(threshold.map_or(c.score, |t| t.min(c.score)));
        }
        Self {
            selected,
            threshold,
            per_group_counts,
        }
    }
}

fn ranked(candidates: &[Candidate]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.sort_by(|&i, &j| priority(&candidates[i], &candidates[j]));
    order
}

/// Baseline rule: the `k` best candidates win; everyone wins when fewer than `k` compete.
pub fn select_top_k(candidates: &[Candidate], k: usize) -> SelectionResult {
    let order = ranked(candidates);
    let take = k.min(order.len());
    SelectionResult::from_picks(candidates, &order[..take])
}

/// Largest-remainder apportionment of `seats` across groups of the given sizes.
/// Equal remainders go to the disadvantaged group first.
pub fn apportion(seats: usize, sizes: [usize; 2]) -> [usize; 2] {
    let total = sizes[0] + sizes[1];
    if total == 0 {
        return [0, 0];
    }
    let mut quotas = [0usize; 2];
    let mut remainders = [0usize; 2];
    for g in 0..2 {
        let exact = seats * sizes[g];
        quotas[g] = exact / total;
        remainders[g] = exact % total;
    }
    let mut leftover = seats - quotas[0] - quotas[1];
    let mut by_remainder = [1usize, 0usize];
    by_remainder.sort_by(|&x, &y| remainders[y].cmp(&remainders[x]));
    for &g in by_remainder.iter().cycle() {
        if leftover == 0 {
            break;
        }
        quotas[g] += 1;
        leftover -= 1;
    }
    quotas
}

/// Circumstance-normalized selection: each group fills a quota proportional to its
/// active size from its own best candidates.
pub fn select_cns(candidates: &[Candidate], k: usize) -> SelectionResult {
    let mut sizes = [0usize; 2];
    for c in candidates {
        sizes[c.group.index()] += 1;
    }
    let quotas = apportion(k, sizes);
    select_with_quotas(candidates, k, quotas)
}

/// Fills per-group quotas in priority order. Seats a group cannot use are refilled
/// from the best remaining candidates regardless of group.
pub fn select_with_quotas(candidates: &[Candidate], k: usize, quotas: [usize; 2]) -> SelectionResult {
    let order = ranked(candidates);
    let seats = k.min(order.len());
    let mut taken = vec![false; candidates.len()];
    let mut used = [0usize; 2];
    let mut picks = Vec::with_capacity(seats);
    for &i in &order {
        let g = candidates[i].group.index();
        if used[g] < quotas[g] && picks.len() < seats {
            used[g] += 1;
            taken[i] = true;
            picks.push(i);
        }
    }
    for &i in &order {
        if picks.len() >= seats {
            break;
        }
        if !taken[i] {
            taken[i] = true;
            picks.push(i);
        }
    }
    SelectionResult::from_picks(candidates, &picks)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cand(id: AgentId, group: Group, score: f64, waiting_since: Option<usize>) -> Candidate {
        Candidate {
            id,
            group,
            score,
            waiting_since,
        }
    }

    fn agent(id: AgentId, x: [f64; 2]) -> Agent {
        Agent::new(id, Group::Advantaged, x.to_vec(), 1.0, 0)
    }

    #[test]
    fn default_scorer_arithmetic() {
        let s = LinearScorer::default();
        assert!((s.score(&[0.4, 0.8]) - 0.6).abs() < 1e-12);
        assert_eq!(s.score(&[0.0, 0.0]), 0.0);
        assert_eq!(s.score(&[1.0, 1.0]), 1.0);
        assert!((s.score(&[0.7, 0.7]) - 0.7).abs() < 1e-12);
        let scores = score_all(&s, &[agent(3, [0.4, 0.8]), agent(9, [1.0, 1.0])]);
        assert_eq!(scores.len(), 2);
        assert_eq!(scores[&9], 1.0);
    }

    #[test]
    fn top_k_forced_ordering() {
        let c = vec![
            cand(0, Group::Advantaged, 0.9, None),
            cand(1, Group::Advantaged, 0.8, None),
            cand(2, Group::Disadvantaged, 0.7, None),
        ];
        let r = select_top_k(&c, 2);
        assert_eq!(r.selected, BTreeSet::from([0, 1]));
        assert_eq!(r.threshold, Some(0.8));
    }

    #[test]
    fn top_k_tie_goes_to_longest_waiting() {
        let c = vec![
            cand(5, Group::Advantaged, 0.8, Some(1)),
            cand(1, Group::Advantaged, 0.8, Some(3)),
            cand(2, Group::Advantaged, 0.8, None),
        ];
        let r = select_top_k(&c, 1);
        assert_eq!(r.selected, BTreeSet::from([5]));
        // Then lower id among equal waits.
        let c = vec![cand(7, Group::Advantaged, 0.8, Some(2)), cand(4, Group::Advantaged, 0.8, Some(2))];
        assert_eq!(select_top_k(&c, 1).selected, BTreeSet::from([4]));
    }

    #[test]
    fn top_k_degenerate_k() {
        let c = vec![cand(0, Group::Advantaged, 0.1, None), cand(1, Group::Disadvantaged, 0.2, None)];
        let r = select_top_k(&c, 5);
        assert_eq!(r.selected.len(), 2);
        assert_eq!(r.threshold, Some(0.1));
        assert_eq!(select_top_k(&[], 3).threshold, None);
    }

    #[test]
    fn apportionment_examples() {
        assert_eq!(apportion(100, [500, 500]), [50, 50]);
        assert_eq!(apportion(4, [750, 250]), [3, 1]);
        assert_eq!(apportion(1, [10, 10]), [0, 1]);
        assert_eq!(apportion(7, [0, 3]), [0, 7]);
        assert_eq!(apportion(10, [3, 3]), [5, 5]);
        assert_eq!(apportion(5, [0, 0]), [0, 0]);
    }

    #[test]
    fn cns_quota_by_group_size() {
        let mut c = Vec::new();
        for i in 0..750 {
            c.push(cand(i, Group::Advantaged, 0.5 + (i as f64) * 1e-4, None));
        }
        for i in 750..1000 {
            c.push(cand(i, Group::Disadvantaged, 0.1, None));
        }
        let r = select_cns(&c, 4);
        assert_eq!(r.per_group_counts[&Group::Advantaged], 3);
        assert_eq!(r.per_group_counts[&Group::Disadvantaged], 1);
        assert_eq!(r.threshold, Some(0.1));
    }

    #[test]
    fn cns_refill_from_global_order() {
        // Golden: d has one agent but a quota of two; the spare seat goes to a's
        // next-best (id 12), not to a lower-ranked a agent.
        let c = vec![
            cand(10, Group::Advantaged, 0.9, None),
            cand(11, Group::Advantaged, 0.8, None),
            cand(12, Group::Advantaged, 0.7, None),
            cand(13, Group::Advantaged, 0.6, None),
            cand(14, Group::Advantaged, 0.5, None),
            cand(20, Group::Disadvantaged, 0.2, None),
        ];
        let r = select_with_quotas(&c, 4, [2, 2]);
        assert_eq!(r.selected, BTreeSet::from([10, 11, 12, 20]));
        assert_eq!(r.per_group_counts[&Group::Advantaged], 3);
        assert_eq!(r.per_group_counts[&Group::Disadvantaged], 1);
        assert_eq!(r.threshold, Some(0.2));

        // Through the public rule: a=3, d=1, k=8 gives quotas 6/2 and everyone wins.
        let small = vec![
            cand(0, Group::Advantaged, 0.3, None),
            cand(1, Group::Advantaged, 0.2, None),
            cand(2, Group::Advantaged, 0.1, None),
            cand(3, Group::Disadvantaged, 0.05, None),
        ];
        let r = select_cns(&small, 8);
        assert_eq!(r.selected.len(), 4);
    }

    #[test]
    fn cns_within_group_ties_use_waiting_time() {
        let c = vec![
            cand(1, Group::Disadvantaged, 0.4, Some(5)),
            cand(2, Group::Disadvantaged, 0.4, Some(2)),
            cand(3, Group::Advantaged, 0.9, None),
            cand(4, Group::Advantaged, 0.8, None),
        ];
        let r = select_cns(&c, 2);
        assert_eq!(r.selected, BTreeSet::from([2, 3]));
    }

    #[test]
    fn from_direction_keeps_unit_box_scores_in_range() {
        let s = LinearScorer::from_direction(&[3.0, -1.0]).unwrap();
        assert!((s.weights[0] - 0.75).abs() < 1e-12);
        assert!((s.weights[1] + 0.25).abs() < 1e-12);
        for x in [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]] {
            let v = s.score(&x);
            assert!((0.0..=1.0).contains(&v), "{v}");
        }
        assert!(s.has_negative_weight());
        assert!(LinearScorer::from_direction(&[0.0, 0.0]).is_none());
    }
}
