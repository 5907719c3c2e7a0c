//! Scorer retraining between timesteps: counterfactual data augmentation (CDA) and
//! group recourse regularization (GRR).

use serde::{Deserialize, Serialize};

use super::LinearScorer;
use crate::config::{CdaParams, GrrParams, Group};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingExample {
    pub features: Vec<f64>,
    pub positive: bool,
    pub group: Group,
}

/// Raw logistic parameters, logit = w . x + b.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl LogisticModel {
    pub fn zeros(dim: usize) -> Self {
        Self {
            weights: vec![0.0; dim],
            bias: 0.0,
        }
    }

    pub fn logit(&self, x: &[f64]) -> f64 {
        self.weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + self.bias
    }

    pub fn predict(&self, x: &[f64]) -> bool {
        self.logit(x) >= 0.0
    }

    pub fn accuracy(&self, data: &[TrainingExample]) -> f64 {
        if data.is_empty() {
            return 0.0;
        }
        let hits = data.iter().filter(|e| self.predict(&e.features) == e.positive).count();
        hits as f64 / data.len() as f64
    }

    /// Where the boundary crosses the diagonal `x = (t, t, ...)`, if it does.
    pub fn diagonal_crossing(&self) -> Option<f64> {
        let s: f64 = self.weights.iter().sum();
        (s.abs() > 1e-12).then(|| -self.bias / s)
    }

    /// The normalized scorer pointing the same way, and the score level that
    /// corresponds to the model's decision boundary.
    pub fn to_scorer(&self) -> Option<(LinearScorer, f64)> {
        let scorer = LinearScorer::from_direction(&self.weights)?;
        let l1: f64 = self.weights.iter().map(|w| w.abs()).sum();
        Some((scorer.clone(), scorer.bias - self.bias / l1))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RetrainNote {
    /// Training set held a single class; the previous scorer was kept.
    SingleClass,
    /// No negatively classified agents, so there was nothing to augment.
    NoNegatives,
    /// One group had no negatives; the regularizer was skipped this step.
    MissingGroupNegatives,
    /// The fit collapsed to zero weights; the previous scorer was kept.
    DegenerateWeights,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrainOutcome {
    pub scorer: LinearScorer,
    pub model: Option<LogisticModel>,
    /// Score level of the fitted decision boundary, in the normalized scorer's units.
    pub boundary_score: Option<f64>,
    pub note: Option<RetrainNote>,
}

impl RetrainOutcome {
    fn unchanged(previous: &LinearScorer, note: RetrainNote) -> Self {
        Self {
            scorer: previous.clone(),
            model: None,
            boundary_score: None,
            note: Some(note),
        }
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// log(1 + exp(-y z)) with y in {-1, +1}, computed without overflow.
fn log_loss(z: f64, positive: bool) -> f64 {
    let m = if positive { -z } else { z };
    if m > 0.0 {
        m + (-m).exp().ln_1p()
    } else {
        m.exp().ln_1p()
    }
}

fn has_both_classes(data: &[TrainingExample]) -> bool {
    data.iter().any(|e| e.positive) && data.iter().any(|e| !e.positive)
}

fn penalized_loss(model: &LogisticModel, data: &[TrainingExample], l2: f64) -> f64 {
    let n = data.len() as f64;
    let fit: f64 = data.iter().map(|e| log_loss(model.logit(&e.features), e.positive)).sum::<f64>() / n;
    fit + 0.5 * l2 * model.weights.iter().map(|w| w * w).sum::<f64>()
}

/// Solves `a x = b` in place by Gaussian elimination with partial pivoting.
fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col].abs() < 1e-14 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            let (top, bottom) = a.split_at_mut(row);
            for (dst, src) in bottom[0][col..].iter_mut().zip(&top[col][col..]) {
                *dst -= f * src;
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|c| a[row][c] * x[c]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    Some(x)
}

/// Ridge-penalized logistic regression by damped Newton iterations.
/// The bias is not penalized.
pub fn fit_logistic_newton(data: &[TrainingExample], l2: f64, max_iter: usize) -> LogisticModel {
    let dim = data.first().map_or(0, |e| e.features.len());
    let mut model = LogisticModel::zeros(dim);
    if data.is_empty() {
        return model;
    }
    let n = data.len() as f64;
    let p = dim + 1;
    let mut loss = penalized_loss(&model, data, l2);
    for _ in 0..max_iter {
        let mut grad = vec![0.0; p];
        let mut hess = vec![vec![0.0; p]; p];
        for e in data {
            let prob = sigmoid(model.logit(&e.features));
            let y = if e.positive { 1.0 } else { 0.0 };
            let r = prob - y;
            let s = prob * (1.0 - prob);
            let row: Vec<f64> = e.features.iter().copied().chain(std::iter::once(1.0)).collect();
            for i in 0..p {
                grad[i] += r * row[i] / n;
                for j in 0..p {
                    hess[i][j] += s * row[i] * row[j] / n;
                }
            }
        }
        for i in 0..dim {
            grad[i] += l2 * model.weights[i];
            hess[i][i] += l2;
        }
        for (i, row) in hess.iter_mut().enumerate() {
            row[i] += 1e-10;
        }
        let Some(step) = solve(hess, grad.clone()) else {
            break;
        };
        let mut scale = 1.0;
        let mut improved = false;
        for _ in 0..30 {
            let trial = LogisticModel {
                weights: (0..dim).map(|i| model.weights[i] - scale * step[i]).collect(),
                bias: model.bias - scale * step[dim],
            };
            let trial_loss = penalized_loss(&trial, data, l2);
            if trial_loss <= loss {
                improved = loss - trial_loss > 1e-14;
                model = trial;
                loss = trial_loss;
                break;
            }
            scale *= 0.5;
        }
        let grad_norm: f64 = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        if !improved || grad_norm < 1e-10 {
            break;
        }
    }
    model
}

/// Group distance penalty `(mean_dist_a - mean_dist_d)^2` over negative examples,
/// with its gradient in the weights. The bias cancels out of the difference.
/// `None` when either group has no negatives or the weights vanish.
pub fn grr_regularizer(model: &LogisticModel, data: &[TrainingExample]) -> Option<(f64, Vec<f64>)> {
    let dim = model.weights.len();
    let mut sums = [vec![0.0; dim], vec![0.0; dim]];
    let mut counts = [0usize; 2];
    for e in data.iter().filter(|e| !e.positive) {
        let g = e.group.index();
        counts[g] += 1;
        for (s, v) in sums[g].iter_mut().zip(&e.features) {
            *s += v;
        }
    }
    if counts[0] == 0 || counts[1] == 0 {
        return None;
    }
    let gap: Vec<f64> = (0..dim)
        .map(|i| sums[0][i] / counts[0] as f64 - sums[1][i] / counts[1] as f64)
        .collect();
    let norm = model.weights.iter().map(|w| w * w).sum::<f64>().sqrt();
    if norm < 1e-12 {
        return None;
    }
    let wg: f64 = model.weights.iter().zip(&gap).map(|(w, g)| w * g).sum();
    let delta = wg / norm;
    let grad = (0..dim)
        .map(|i| 2.0 * delta * (gap[i] / norm - wg * model.weights[i] / norm.powi(3)))
        .collect();
    Some((delta * delta, grad))
}

/// Full-batch gradient descent on mean logistic loss plus `lambda` times the group
/// distance penalty, warm-started from `init`.
pub fn fit_logistic_gd(
    data: &[TrainingExample],
    init: &LogisticModel,
    lambda: f64,
    learning_rate: f64,
    epochs: usize,
) -> (LogisticModel, bool) {
    let mut model = init.clone();
    if data.is_empty() {
        return (model, false);
    }
    let n = data.len() as f64;
    let dim = model.weights.len();
    let mut regularized = false;
    for _ in 0..epochs {
        let mut gw = vec![0.0; dim];
        let mut gb = 0.0;
        for e in data {
            let r = sigmoid(model.logit(&e.features)) - if e.positive { 1.0 } else { 0.0 };
            for (g, v) in gw.iter_mut().zip(&e.features) {
                *g += r * v / n;
            }
            gb += r / n;
        }
        if lambda > 0.0 {
            if let Some((_, rg)) = grr_regularizer(&model, data) {
                regularized = true;
                for (g, r) in gw.iter_mut().zip(rg) {
                    *g += lambda * r;
                }
            }
        }
        for (w, g) in model.weights.iter_mut().zip(&gw) {
            *w -= learning_rate * g;
        }
        model.bias -= learning_rate * gb;
    }
    (model, regularized)
}

/// Refits on last step's labeled agents plus each negative agent's recommended
/// point labeled positive.
pub fn retrain_cda(
    examples: &[TrainingExample],
    recommendations: &[(Group, Vec<f64>)],
    params: &CdaParams,
    previous: &LinearScorer,
) -> RetrainOutcome {
    if recommendations.is_empty() || !examples.iter().any(|e| !e.positive) {
        return RetrainOutcome::unchanged(previous, RetrainNote::NoNegatives);
    }
    let mut data = examples.to_vec();
    data.extend(recommendations.iter().map(|(group, x)| TrainingExample {
        features: x.clone(),
        positive: true,
        group: *group,
    }));
    if !has_both_classes(&data) {
        return RetrainOutcome::unchanged(previous, RetrainNote::SingleClass);
    }
    let model = fit_logistic_newton(&data, params.l2, params.max_iter);
    match model.to_scorer() {
        Some((scorer, boundary)) => RetrainOutcome {
            scorer,
            model: Some(model),
            boundary_score: Some(boundary),
            note: None,
        },
        None => RetrainOutcome::unchanged(previous, RetrainNote::DegenerateWeights),
    }
}

/// One regularized refit, continuing from the previous raw model.
pub fn retrain_grr(
    examples: &[TrainingExample],
    params: &GrrParams,
    warm_start: &LogisticModel,
    previous: &LinearScorer,
) -> RetrainOutcome {
    if !has_both_classes(examples) {
        return RetrainOutcome::unchanged(previous, RetrainNote::SingleClass);
    }
    let (model, regularized) = fit_logistic_gd(examples, warm_start, params.lambda, params.learning_rate, params.epochs);
    let note = (params.lambda > 0.0 && !regularized).then_some(RetrainNote::MissingGroupNegatives);
    match model.to_scorer() {
        Some((scorer, boundary)) => RetrainOutcome {
            scorer,
            model: Some(model),
            boundary_score: Some(boundary),
            note,
        },
        None => RetrainOutcome::unchanged(previous, RetrainNote::DegenerateWeights),
    }
}
