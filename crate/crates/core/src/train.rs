//! Minibatch training under cross-entropy and hyperparameter selection by a
//! single 70/30 split.
//!
//! Selection follows the usual recipe: extract scores once at the largest
//! candidate `J`, train every `(J, L, width, dropout)` cell on the training
//! part, score it by 0-1 error on the validation part, take the argmin, and
//! retrain the winner on all samples.

use ndarray::{s, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::predict_labels;
use crate::network::{clip_weights_in_place, Architecture, DropoutRate, NetworkParams};
use crate::projection::{Dataset, Projector};
use crate::rng::{derive_seed, rng_from_seed};

const SPLIT_STREAM: u64 = 1;
const FINAL_STREAM: u64 = 2;
const CELL_STREAM_BASE: u64 = 1 << 32;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Optimizer {
    Sgd,
    /// Adaptive moment estimation.
    Adam { beta1: f64, beta2: f64, epsilon: f64 },
}

impl Default for Optimizer {
    fn default() -> Self {
        Optimizer::Adam {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: Optimizer,
    /// Drop probability of each hidden unit during training.
    pub dropout: f64,
    pub seed: u64,
    /// Truncation constant for reported (not optimized) cross-entropy.
    pub clamp: Option<f64>,
    /// Project weights and shifts into `[-1, 1]` after every step.
    pub clip_weights: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch_size: 32,
            learning_rate: 1e-3,
            optimizer: Optimizer::default(),
            dropout: 0.0,
            seed: 0,
            clamp: None,
            clip_weights: false,
        }
    }
}

impl TrainConfig {
    fn validate(&self, n: usize) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::domain("epochs must be >= 1"));
        }
        if self.batch_size == 0 || self.batch_size > n {
            return Err(Error::domain(format!(
                "batch size {} must lie in 1..={n}",
                self.batch_size
            )));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::domain(format!(
                "learning rate {} must be finite and nonnegative",
                self.learning_rate
            )));
        }
        DropoutRate::new(self.dropout)?;
        if let Some(c0) = self.clamp {
            if !(c0 >= 2.0) {
                return Err(Error::domain(format!("clamp C0 = {c0} must be >= 2")));
            }
        }
        Ok(())
    }
}

/// Per-epoch record from [`train_with_history`].
#[derive(Debug, Clone, PartialEq)]
pub struct EpochStats {
    /// Mean cross-entropy over the whole training set at the end of the epoch.
    pub loss: f64,
}

fn check_labels(labels: &[usize], classes: usize) -> Result<()> {
    let mut counts = vec![0usize; classes];
    for &y in labels {
        if y >= classes {
            return Err(Error::domain(format!("label {y} out of range for K = {classes}")));
        }
        counts[y] += 1;
    }
    if let Some(k) = counts.iter().position(|&c| c == 0) {
        return Err(Error::domain(format!("class {k} has no training samples")));
    }
    Ok(())
}

/// Train a network on the first `arch.input_dim` columns of `scores`.
pub fn train(
    scores: ArrayView2<f64>,
    labels: &[usize],
    arch: &Architecture,
    cfg: &TrainConfig,
) -> Result<NetworkParams> {
    Ok(run(scores, labels, arch, cfg, false)?.0)
}

/// As [`train`], also reporting the full training loss after each epoch.
pub fn train_with_history(
    scores: ArrayView2<f64>,
    labels: &[usize],
    arch: &Architecture,
    cfg: &TrainConfig,
) -> Result<(NetworkParams, Vec<EpochStats>)> {
    run(scores, labels, arch, cfg, true)
}

fn run(
    scores: ArrayView2<f64>,
    labels: &[usize],
    arch: &Architecture,
    cfg: &TrainConfig,
    track: bool,
) -> Result<(NetworkParams, Vec<EpochStats>)> {
    let n = scores.nrows();
    if labels.len() != n {
        return Err(Error::domain(format!(
            "{n} score vectors but {} labels",
            labels.len()
        )));
    }
    if scores.ncols() < arch.input_dim {
        return Err(Error::domain(format!(
            "score vectors have {} entries, network needs J = {}",
            scores.ncols(),
            arch.input_dim
        )));
    }
    cfg.validate(n)?;
    check_labels(labels, arch.classes)?;

    let x = scores.slice(s![.., ..arch.input_dim]);
    let mut rng = rng_from_seed(cfg.seed);
    let mut params = NetworkParams::init(arch, &mut rng);
    let mut state = OptimizerState::new(&params, cfg.optimizer);
    let keep = 1.0 - cfg.dropout;
    let mut order: Vec<usize> = (0..n).collect();
    let mut history = Vec::new();

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for (batch_no, batch) in order.chunks(cfg.batch_size).enumerate() {
            let bx = x.select(Axis(0), batch);
            let by: Vec<usize> = batch.iter().map(|&i| labels[i]).collect();
            let masks = (cfg.dropout > 0.0).then(|| {
                arch.hidden
                    .iter()
                    .map(|&p| {
                        Array2::from_shape_fn((batch.len(), p), |_| {
                            if rng.random_bool(keep) {
                                1.0 / keep
                            } else {
                                0.0
                            }
                        })
                    })
                    .collect::<Vec<_>>()
            });
            let (loss, grad) = params
                .loss_and_gradient(bx.view(), &by, masks.as_deref())
                .map_err(|e| match e {
                    Error::Numeric(m) => {
                        Error::numeric(format!("epoch {epoch}, batch {batch_no}: {m}"))
                    }
                    other => other,
                })?;
            if !loss.is_finite() {
                return Err(Error::numeric(format!(
                    "loss is {loss} at epoch {epoch}, batch {batch_no}"
                )));
            }
            state.step(&mut params, &grad, cfg.learning_rate);
            if cfg.clip_weights {
                clip_weights_in_place(&mut params);
            }
        }
        if track {
            let (loss, _) = params.loss_and_gradient(x, labels, None)?;
            history.push(EpochStats { loss });
        }
    }
    Ok((params, history))
}

struct OptimizerState {
    kind: Optimizer,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
    steps: i32,
}

impl OptimizerState {
    fn new(params: &NetworkParams, kind: Optimizer) -> Self {
        let zeros: Vec<Vec<f64>> = params.slices().iter().map(|s| vec![0.0; s.len()]).collect();
        Self {
            kind,
            first: zeros.clone(),
            second: zeros,
            steps: 0,
        }
    }

    fn step(&mut self, params: &mut NetworkParams, grad: &NetworkParams, lr: f64) {
        self.steps += 1;
        let grads = grad.slices();
        match self.kind {
            Optimizer::Sgd => {
                for (p, g) in params.slices_mut().into_iter().zip(grads) {
                    for (pv, gv) in p.iter_mut().zip(g) {
                        *pv -= lr * gv;
                    }
                }
            }
            Optimizer::Adam {
                beta1,
                beta2,
                epsilon,
            } => {
                let c1 = 1.0 - beta1.powi(self.steps);
                let c2 = 1.0 - beta2.powi(self.steps);
                for (((p, g), m), v) in params
                    .slices_mut()
                    .into_iter()
                    .zip(grads)
                    .zip(&mut self.first)
                    .zip(&mut self.second)
                {
                    for i in 0..p.len() {
                        m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
                        v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
                        p[i] -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + epsilon);
                    }
                }
            }
        }
    }
}

/// Stratified split into `⌊0.7n⌋` training and `n - ⌊0.7n⌋` validation
/// indices, both sorted ascending.
pub fn split_70_30(labels: &[usize], seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    let n = labels.len();
    if n < 10 {
        return Err(Error::domain(format!("split needs n >= 10, got {n}")));
    }
    let classes = labels.iter().max().map_or(0, |m| m + 1);
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); classes];
    for (i, &y) in labels.iter().enumerate() {
        members[y].push(i);
    }
    let members: Vec<(usize, Vec<usize>)> = members
        .into_iter()
        .enumerate()
        .filter(|(_, m)| !m.is_empty())
        .collect();
    if let Some((k, m)) = members.iter().find(|(_, m)| m.len() < 2) {
        return Err(Error::domain(format!(
            "class {k} has {} sample(s); splitting needs at least 2",
            m.len()
        )));
    }

    let target = n * 7 / 10;
    let mut quota: Vec<usize> = members.iter().map(|(_, m)| m.len() * 7 / 10).collect();
    let mut remainder = target - quota.iter().sum::<usize>();
    // hand the leftover training slots to the largest fractional parts
    let mut by_fraction: Vec<usize> = (0..members.len()).collect();
    by_fraction.sort_by_key(|&c| (std::cmp::Reverse(members[c].1.len() * 7 % 10), c));
    while remainder > 0 {
        let before = remainder;
        for &c in &by_fraction {
            if remainder > 0 && quota[c] + 1 < members[c].1.len() {
                quota[c] += 1;
                remainder -= 1;
            }
        }
        if remainder == before {
            break;
        }
    }

    let mut rng = rng_from_seed(seed);
    let mut train = Vec::with_capacity(target);
    let mut valid = Vec::with_capacity(n - target);
    for ((_, idx), q) in members.iter().zip(quota) {
        let mut idx = idx.clone();
        idx.shuffle(&mut rng);
        train.extend_from_slice(&idx[..q]);
        valid.extend_from_slice(&idx[q..]);
    }
    train.sort_unstable();
    valid.sort_unstable();
    Ok((train, valid))
}

/// One point of the hyperparameter grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    #[serde(rename = "J")]
    pub j: usize,
    #[serde(rename = "L")]
    pub depth: usize,
    pub width: usize,
    pub dropout: f64,
}

impl Candidate {
    fn lexicographic(&self, other: &Self) -> std::cmp::Ordering {
        (self.j, self.depth, self.width)
            .cmp(&(other.j, other.depth, other.width))
            .then(self.dropout.total_cmp(&other.dropout))
    }
}

/// Candidate lists for `(J, L, width, dropout)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HyperGrid {
    #[serde(rename = "J")]
    pub j: Vec<usize>,
    #[serde(rename = "L")]
    pub depth: Vec<usize>,
    pub width: Vec<usize>,
    pub dropout: Vec<f64>,
}

impl HyperGrid {
    pub fn validate(&self) -> Result<()> {
        if self.j.is_empty() || self.depth.is_empty() || self.width.is_empty() || self.dropout.is_empty() {
            return Err(Error::domain("every hyperparameter candidate list must be nonempty"));
        }
        if self.j.iter().chain(&self.depth).chain(&self.width).any(|&v| v == 0) {
            return Err(Error::domain("J, L and width candidates must be positive"));
        }
        for &s in &self.dropout {
            DropoutRate::new(s)?;
        }
        Ok(())
    }

    pub fn max_j(&self) -> usize {
        self.j.iter().copied().max().unwrap_or(0)
    }

    /// Every cell, `J` varying slowest and dropout fastest.
    pub fn cells(&self) -> Vec<Candidate> {
        let mut out = Vec::new();
        for &j in &self.j {
            for &depth in &self.depth {
                for &width in &self.width {
                    for &dropout in &self.dropout {
                        out.push(Candidate {
                            j,
                            depth,
                            width,
                            dropout,
                        });
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct SelectionResult {
    pub chosen: Candidate,
    /// Validation 0-1 error of every cell, in [`HyperGrid::cells`] order.
    pub validation_errors: Vec<(Candidate, f64)>,
    /// The chosen cell retrained on all samples.
    pub final_params: NetworkParams,
}

/// Run selection on raw functional data: project once at `max J` with the
/// tensor Fourier basis of the dataset grid, then [`select_scores`].
pub fn select(dataset: &Dataset, grid: &HyperGrid, cfg: &TrainConfig) -> Result<SelectionResult> {
    grid.validate()?;
    let labels = dataset.labels()?;
    let projector = Projector::new(dataset.grid.clone(), grid.max_j())?;
    let scores = projector.project_all(&dataset.samples)?;
    select_scores(scores.view(), &labels, dataset.classes, grid, cfg)
}

/// Selection on precomputed scores with at least `max J` columns.
pub fn select_scores(
    scores: ArrayView2<f64>,
    labels: &[usize],
    classes: usize,
    grid: &HyperGrid,
    cfg: &TrainConfig,
) -> Result<SelectionResult> {
    grid.validate()?;
    if scores.ncols() < grid.max_j() {
        return Err(Error::domain(format!(
            "scores have {} columns, grid needs J = {}",
            scores.ncols(),
            grid.max_j()
        )));
    }
    if classes < 2 {
        return Err(Error::domain("selection needs at least two classes"));
    }
    check_labels(labels, classes)?;
    let (train_idx, valid_idx) = split_70_30(labels, derive_seed(cfg.seed, SPLIT_STREAM))?;
    let train_x = scores.select(Axis(0), &train_idx);
    let train_y: Vec<usize> = train_idx.iter().map(|&i| labels[i]).collect();
    let valid_x = scores.select(Axis(0), &valid_idx);
    let valid_y: Vec<usize> = valid_idx.iter().map(|&i| labels[i]).collect();

    let cells = grid.cells();
    let errors: Vec<f64> = cells
        .par_iter()
        .enumerate()
        .map(|(idx, cell)| -> Result<f64> {
            let arch = Architecture::uniform(cell.j, cell.depth, cell.width, classes)?;
            let cell_cfg = TrainConfig {
                dropout: cell.dropout,
                seed: derive_seed(cfg.seed, CELL_STREAM_BASE + idx as u64),
                ..cfg.clone()
            };
            let params = train(train_x.view(), &train_y, &arch, &cell_cfg)?;
            let predicted = predict_labels(&params, valid_x.slice(s![.., ..cell.j]))?;
            let wrong = predicted.iter().zip(&valid_y).filter(|(p, y)| p != y).count();
            Ok(wrong as f64 / valid_y.len() as f64)
        })
        .collect::<Result<_>>()?;

    let best = (0..cells.len())
        .min_by(|&a, &b| {
            errors[a]
                .total_cmp(&errors[b])
                .then(cells[a].lexicographic(&cells[b]))
        })
        .expect("grid is nonempty");
    let chosen = cells[best];
    let arch = Architecture::uniform(chosen.j, chosen.depth, chosen.width, classes)?;
    let final_cfg = TrainConfig {
        dropout: chosen.dropout,
        seed: derive_seed(cfg.seed, FINAL_STREAM),
        ..cfg.clone()
    };
    let final_params = train(scores, labels, &arch, &final_cfg)?;
    Ok(SelectionResult {
        chosen,
        validation_errors: cells.into_iter().zip(errors).collect(),
        final_params,
    })
}
