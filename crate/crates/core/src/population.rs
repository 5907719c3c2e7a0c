//! Group-conditioned bimodal feature generation for initial populations and arrivals.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::agent::{Agent, IdAllocator};
use crate::config::{GeneratorCase, Group, GroupSplit, PopulationSpec, SimulationConfig};

/// Mean and standard deviation of one mixture component.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Component {
    pub mean: f64,
    pub sd: f64,
}

/// The normal component an agent of `group` draws from, high performer or not.
pub fn component(spec: &PopulationSpec, group: Group, high_performer: bool) -> Component {
    let wide = spec.sigma * spec.variance_ratio;
    if high_performer {
        return Component {
            mean: spec.mu_high,
            sd: spec.sigma,
        };
    }
    match (spec.generator_case, group) {
        (GeneratorCase::EqualVarDiffMeans, Group::Advantaged) => Component {
            mean: spec.mu_a(),
            sd: spec.sigma,
        },
        (GeneratorCase::EqualVarDiffMeans, Group::Disadvantaged) => Component {
            mean: spec.mu_d,
            sd: spec.sigma,
        },
        (GeneratorCase::DiffVarEqualMeans, Group::Advantaged) => Component {
            mean: spec.mu_d,
            sd: spec.sigma,
        },
        (GeneratorCase::DiffVarEqualMeans, Group::Disadvantaged) => Component {
            mean: spec.mu_d,
            sd: wide,
        },
        (GeneratorCase::DiffVarDiffMeans, Group::Advantaged) => Component {
            mean: spec.mu_a(),
            sd: spec.sigma,
        },
        (GeneratorCase::DiffVarDiffMeans, Group::Disadvantaged) => Component {
            mean: spec.mu_d,
            sd: wide,
        },
    }
}

pub const FEATURE_DIM: usize = 2;

/// Draws one feature vector without clamping, returning whether the high mode was used.
pub fn draw_features_unclamped<R: Rng + ?Sized>(
    spec: &PopulationSpec,
    group: Group,
    dim: usize,
    rng: &mut R,
) -> (Vec<f64>, bool) {
    let high = rng.random::<f64>() < spec.high_fraction;
    let c = component(spec, group, high);
    let normal = Normal::new(c.mean, c.sd).expect("validated spread");
    let features = (0..dim).map(|_| normal.sample(rng)).collect();
    (features, high)
}

pub fn clamp_unit(features: &mut [f64]) {
    for v in features.iter_mut() {
        *v = v.clamp(0.0, 1.0);
    }
}

/// Group order for a batch: alternating while both groups have members left, so that
/// id order (the last tie-break in selection) carries no group signal.
pub fn interleaved_groups(split: GroupSplit) -> Vec<Group> {
    let mut left = [split.advantaged, split.disadvantaged];
    let mut out = Vec::with_capacity(split.total());
    while left[0] + left[1] > 0 {
        for g in Group::BOTH {
            if left[g.index()] > 0 {
                left[g.index()] -= 1;
                out.push(g);
            }
        }
    }
    out
}

/// Samples `split.total()` agents entering at `t`, groups interleaved.
pub fn sample_population<R: Rng + ?Sized>(
    spec: &PopulationSpec,
    split: GroupSplit,
    rng: &mut R,
    t: usize,
    ids: &mut IdAllocator,
) -> Vec<Agent> {
    interleaved_groups(split)
        .into_iter()
        .map(|group| {
            let (mut features, _) = draw_features_unclamped(spec, group, FEATURE_DIM, rng);
            clamp_unit(&mut features);
            Agent::new(ids.next_id(), group, features, spec.effort_mean(group), t)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrivalBatch {
    pub timestep: usize,
    pub agents: Vec<Agent>,
}

pub fn sample_arrivals<R: Rng + ?Sized>(
    spec: &PopulationSpec,
    count: usize,
    rng: &mut R,
    t: usize,
    ids: &mut IdAllocator,
) -> ArrivalBatch {
    let agents = sample_population(spec, SimulationConfig::split(count), rng, t, ids);
    ArrivalBatch { timestep: t, agents }
}
