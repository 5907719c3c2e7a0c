//! Minimal-cost recommendations and agent adaptation.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::agent::{Agent, AgentId};
use crate::config::Adaptation;
use crate::decision::LinearScorer;
use crate::error::RecourseError;

/// Euclidean distance between two feature vectors.
pub fn cost(x: &[f64], y: &[f64]) -> Result<f64, RecourseError> {
    if x.len() != y.len() {
        return Err(RecourseError::DimensionMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    Ok(x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recommendation {
    pub agent_id: AgentId,
    pub target: Vec<f64>,
    pub cost_to_target: f64,
    pub issued_at: usize,
    pub threshold_used: f64,
}

/// Nearest point of the unit box scoring at least `threshold`.
#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    pub target: Vec<f64>,
    pub cost: f64,
}

impl Recommendation {
    pub fn issue(agent_id: AgentId, issued_at: usize, threshold: f64, projection: Projection) -> Self {
        Self {
            agent_id,
            target: projection.target,
            cost_to_target: projection.cost,
            issued_at,
            threshold_used: threshold,
        }
    }
}

fn point_at(x: &[f64], w: &[f64], lambda: f64) -> Vec<f64> {
    x.iter().zip(w).map(|(xi, wi)| (xi + lambda * wi).clamp(0.0, 1.0)).collect()
}

/// Solves `min |x' - x|  s.t.  scorer(x') >= threshold, x' in [0,1]^d`.
///
/// The minimizer has the form `clamp(x + lambda * w)` for some `lambda >= 0`. The
/// score along that path is piecewise linear in `lambda` with a kink wherever a
/// coordinate hits a box face, so walking the kinks in order finds `lambda` exactly.
/// Without any kink before the target level this is the plain orthogonal projection
/// onto the hyperplane.
pub fn recommend(scorer: &LinearScorer, x: &[f64], threshold: f64) -> Result<Projection, RecourseError> {
    let w = &scorer.weights;
    if w.len() != x.len() {
        return Err(RecourseError::DimensionMismatch {
            left: w.len(),
            right: x.len(),
        });
    }
    if scorer.score(x) >= threshold {
        return Ok(Projection {
            target: x.to_vec(),
            cost: 0.0,
        });
    }
    let best = scorer.bias + w.iter().map(|wi| wi.max(0.0)).sum::<f64>();
    if best < threshold {
        return Err(RecourseError::Infeasible { threshold, best });
    }

    let level = threshold - scorer.bias;
    let mut kinks: Vec<(f64, usize)> = w
        .iter()
        .zip(x)
        .enumerate()
        .filter_map(|(i, (&wi, &xi))| {
            if wi > 0.0 {
                Some(((1.0 - xi) / wi, i))
            } else if wi < 0.0 {
                Some((xi / -wi, i))
            } else {
                None
            }
        })
        .collect();
    kinks.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

    let mut slope: f64 = w.iter().map(|wi| wi * wi).sum();
    let mut value: f64 = w.iter().zip(x).map(|(wi, xi)| wi * xi).sum();
    let mut at = 0.0;
    let mut lambda = None;
    for &(kink, i) in &kinks {
        if slope > 0.0 {
            let reach = value + slope * (kink - at);
            if reach >= level {
                lambda = Some(at + (level - value) / slope);
                break;
            }
            value = reach;
        }
        at = kink;
        slope -= w[i] * w[i];
    }
    // Feasibility guarantees the level is reached by the last kink.
    let mut lambda = lambda.unwrap_or(at);

    let mut target = point_at(x, w, lambda);
    let mut bump = (lambda * f64::EPSILON).max(f64::MIN_POSITIVE);
    while scorer.score(&target) < threshold {
        lambda += bump;
        bump *= 2.0;
        target = point_at(x, w, lambda);
        if !lambda.is_finite() {
            return Err(RecourseError::Infeasible { threshold, best });
        }
    }
    let cost = cost(x, &target)?;
    Ok(Projection { target, cost })
}

/// Draws `|z|` with `z ~ Normal(effort_mean * scale, scale^2)`.
pub fn sample_effort<R: Rng + ?Sized>(effort_mean: f64, scale: f64, rng: &mut R) -> f64 {
    let normal = Normal::new(effort_mean * scale, scale).expect("positive effort scale");
    normal.sample(rng).abs()
}

/// Moves `x` toward `target` by `step` and returns the new point and the distance
/// actually travelled.
pub fn move_toward(x: &[f64], target: &[f64], step: f64, mode: Adaptation) -> (Vec<f64>, f64) {
    let dist = cost(x, target).expect("matching dimensions");
    if dist == 0.0 || step <= 0.0 {
        return (x.to_vec(), 0.0);
    }
    if mode == Adaptation::CapAtRecommendation && step >= dist {
        return (target.to_vec(), dist);
    }
    let moved: Vec<f64> = x
        .iter()
        .zip(target)
        .map(|(xi, ti)| (xi + step * (ti - xi) / dist).clamp(0.0, 1.0))
        .collect();
    let travelled = cost(x, &moved).expect("matching dimensions");
    (moved, travelled)
}

/// Applies one round of effort toward a recommendation, updating the agent's
/// features and cumulative cost. Returns the displacement.
pub fn adapt<R: Rng + ?Sized>(
    agent: &mut Agent,
    rec: &Recommendation,
    rng: &mut R,
    effort_scale: f64,
    mode: Adaptation,
) -> f64 {
    let effort = sample_effort(agent.effort_mean, effort_scale, rng);
    apply_effort(agent, rec, effort, mode)
}

/// Same as [`adapt`] with an already drawn effort.
pub fn apply_effort(agent: &mut Agent, rec: &Recommendation, effort: f64, mode: Adaptation) -> f64 {
    let (moved, travelled) = move_toward(&agent.features, &rec.target, effort, mode);
    agent.features = moved;
    agent.cumulative_cost += travelled;
    travelled
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Group;
    use crate::rng::{derive_stream, StreamPurpose};

    const SQRT2: f64 = std::f64::consts::SQRT_2;

    #[test]
    fn cost_examples() {
        assert_eq!(cost(&[0.0, 0.0], &[0.0, 0.0]).unwrap(), 0.0);
        assert!((cost(&[0.4, 0.4], &[0.7, 0.7]).unwrap() - 0.3 * SQRT2).abs() < 1e-12);
        assert!(matches!(
            cost(&[0.0], &[0.0, 1.0]),
            Err(RecourseError::DimensionMismatch { left: 1, right: 2 })
        ));
    }

    #[test]
    fn projection_onto_diagonal_threshold() {
        let p = recommend(&LinearScorer::default(), &[0.4, 0.4], 0.7).unwrap();
        assert!((p.target[0] - 0.7).abs() < 1e-12);
        assert!((p.target[1] - 0.7).abs() < 1e-12);
        assert!((p.cost - 0.424264).abs() < 1e-6);
        assert!(LinearScorer::default().score(&p.target) >= 0.7);
    }

    #[test]
    fn near_threshold_costs_vanish() {
        let s = LinearScorer::default();
        for eps in [1e-3, 1e-6, 1e-9] {
            let p = recommend(&s, &[0.5, 0.5], 0.5 + eps).unwrap();
            assert!(p.cost <= 2.0 * eps, "eps {eps}: cost {}", p.cost);
        }
    }

    #[test]
    fn box_face_bends_the_path() {
        // Scorer favours x1 but x1 is already at 1; only x2 can move.
        let s = LinearScorer::new(vec![0.8, 0.2], 0.0);
        let p = recommend(&s, &[1.0, 0.0], 0.9).unwrap();
        assert_eq!(p.target[0], 1.0);
        assert!((p.target[1] - 0.5).abs() < 1e-9);
        assert!(s.score(&p.target) >= 0.9);
    }

    #[test]
    fn unreachable_threshold_is_infeasible() {
        let s = LinearScorer::new(vec![0.5, 0.5], 0.0);
        assert!(matches!(recommend(&s, &[0.2, 0.2], 1.01), Err(RecourseError::Infeasible { .. })));
    }

    #[test]
    fn negative_weights_recommend_decreasing_features() {
        let s = LinearScorer::from_direction(&[-1.0, -1.0]).unwrap();
        let p = recommend(&s, &[0.6, 0.6], 0.6).unwrap();
        assert!(p.target[0] < 0.6 && p.target[1] < 0.6);
        assert!(s.score(&p.target) >= 0.6);
    }

    #[test]
    fn folded_effort_is_non_negative() {
        let mut rng = derive_stream(3, StreamPurpose::Effort);
        assert!((0..10_000).all(|_| sample_effort(0.0, 1.0, &mut rng) >= 0.0));
    }

    #[test]
    fn folded_effort_mean_at_zero() {
        let mut rng = derive_stream(4, StreamPurpose::Effort);
        let n = 1_000_000;
        let mean = (0..n).map(|_| sample_effort(0.0, 1.0, &mut rng)).sum::<f64>() / n as f64;
        assert!((mean - (2.0 / std::f64::consts::PI).sqrt()).abs() < 0.003, "mean {mean}");
    }

    #[test]
    fn folded_effort_far_from_zero_is_unfolded() {
        let mut rng = derive_stream(5, StreamPurpose::Effort);
        let n = 200_000;
        let scale = 0.1;
        let mean = (0..n).map(|_| sample_effort(10.0, scale, &mut rng)).sum::<f64>() / n as f64;
        assert!((mean - 1.0).abs() < 0.005, "mean {mean}");
    }

    fn rec_to(target: [f64; 2], from: [f64; 2]) -> Recommendation {
        Recommendation {
            agent_id: 0,
            target: target.to_vec(),
            cost_to_target: cost(&from, &target).unwrap(),
            issued_at: 0,
            threshold_used: 0.7,
        }
    }

    #[test]
    fn capped_step_along_unit_direction() {
        let mut a = Agent::new(0, Group::Disadvantaged, vec![0.0, 0.0], 1.0, 0);
        let moved = apply_effort(&mut a, &rec_to([0.7, 0.7], [0.0, 0.0]), 0.2, Adaptation::CapAtRecommendation);
        assert!((moved - 0.2).abs() < 1e-12);
        assert!((a.features[0] - 0.141421).abs() < 1e-5);
        assert!((a.features[1] - 0.141421).abs() < 1e-5);
        assert!((a.cumulative_cost - 0.2).abs() < 1e-12);
    }

    #[test]
    fn cap_lands_exactly_on_target() {
        let mut a = Agent::new(0, Group::Advantaged, vec![0.4, 0.4], 1.0, 0);
        let rec = rec_to([0.7, 0.7], [0.4, 0.4]);
        let moved = apply_effort(&mut a, &rec, 5.0, Adaptation::CapAtRecommendation);
        assert_eq!(a.features, rec.target);
        assert_eq!(moved, rec.cost_to_target);
    }

    #[test]
    fn overshoot_passes_target() {
        let mut a = Agent::new(0, Group::Advantaged, vec![0.4, 0.4], 1.0, 0);
        let rec = rec_to([0.5, 0.5], [0.4, 0.4]);
        apply_effort(&mut a, &rec, 0.2 * SQRT2, Adaptation::Overshoot);
        assert!((a.features[0] - 0.6).abs() < 1e-12);
    }

    #[test]
    fn zero_effort_or_zero_direction_stays_put() {
        let mut a = Agent::new(0, Group::Advantaged, vec![0.4, 0.4], 1.0, 0);
        assert_eq!(apply_effort(&mut a, &rec_to([0.7, 0.7], [0.4, 0.4]), 0.0, Adaptation::CapAtRecommendation), 0.0);
        assert_eq!(apply_effort(&mut a, &rec_to([0.4, 0.4], [0.4, 0.4]), 0.3, Adaptation::Overshoot), 0.0);
        assert_eq!(a.features, vec![0.4, 0.4]);
    }
}
