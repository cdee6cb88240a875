//! Classification metrics and the replicated simulation benchmark.

use std::fmt::Write as _;
use std::sync::Arc;

use ndarray::{s, ArrayView2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::Grid;
use crate::error::{Error, Result};
use crate::network::{NetworkParams, ProbabilityVector};
use crate::projection::{Projector, ScoreVector};
use crate::rng::derive_seed;
use crate::simgen::{bayes_posterior, default_test_size, generate_train_test, SimModel};
use crate::train::{select, Candidate, HyperGrid, TrainConfig};

/// Index of the largest entry; the smallest index wins ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

pub fn classify(params: &NetworkParams, scores: &ScoreVector) -> Result<usize> {
    Ok(argmax(params.forward(scores.as_slice())?.as_slice()))
}

/// Predicted labels for each row, using the first `J` columns where `J` is
/// the network input width.
pub fn predict_labels(params: &NetworkParams, scores: ArrayView2<f64>) -> Result<Vec<usize>> {
    let j = params.input_dim();
    if scores.ncols() < j {
        return Err(Error::domain(format!(
            "score vectors have {} entries, network needs J = {j}",
            scores.ncols()
        )));
    }
    let probs = params.forward_batch(scores.slice(s![.., ..j]))?;
    Ok(probs
        .rows()
        .into_iter()
        .map(|r| argmax(&r.to_vec()))
        .collect())
}

pub fn misclassification_rate(predicted: &[usize], truth: &[usize]) -> Result<f64> {
    if predicted.len() != truth.len() {
        return Err(Error::domain(format!(
            "{} predictions but {} labels",
            predicted.len(),
            truth.len()
        )));
    }
    if truth.is_empty() {
        return Err(Error::domain("misclassification rate of an empty set"));
    }
    let wrong = predicted.iter().zip(truth).filter(|(p, t)| p != t).count();
    Ok(wrong as f64 / truth.len() as f64)
}

/// Counts indexed `[true][predicted]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: Vec<Vec<usize>>,
}

impl ConfusionMatrix {
    pub fn new(classes: usize) -> Self {
        Self {
            counts: vec![vec![0; classes]; classes],
        }
    }

    pub fn from_labels(predicted: &[usize], truth: &[usize], classes: usize) -> Result<Self> {
        if predicted.len() != truth.len() {
            return Err(Error::domain(format!(
                "{} predictions but {} labels",
                predicted.len(),
                truth.len()
            )));
        }
        let mut cm = Self::new(classes);
        for (&p, &t) in predicted.iter().zip(truth) {
            if p >= classes || t >= classes {
                return Err(Error::domain(format!(
                    "label pair ({t}, {p}) out of range for K = {classes}"
                )));
            }
            cm.counts[t][p] += 1;
        }
        Ok(cm)
    }

    pub fn classes(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }

    pub fn error_rate(&self) -> f64 {
        let correct: usize = (0..self.classes()).map(|k| self.counts[k][k]).sum();
        1.0 - correct as f64 / self.total() as f64
    }

    pub fn add(&mut self, other: &ConfusionMatrix) -> Result<()> {
        if other.classes() != self.classes() {
            return Err(Error::domain("confusion matrices of different sizes"));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        Ok(())
    }
}

/// Mean over samples of `Σ_k π_k min(C0, ln(π_k / π̂_k))`.
///
/// Terms with `π_k = 0` contribute nothing; `π̂_k = 0` with `π_k > 0`
/// contributes `π_k C0`.
pub fn truncated_kl_risk(
    truth: &[ProbabilityVector],
    estimate: &[ProbabilityVector],
    c0: f64,
) -> Result<f64> {
    if !(c0 >= 2.0) {
        return Err(Error::domain(format!("C0 = {c0} must be >= 2")));
    }
    if truth.len() != estimate.len() || truth.is_empty() {
        return Err(Error::domain(format!(
            "need matching nonempty probability lists, got {} and {}",
            truth.len(),
            estimate.len()
        )));
    }
    let mut total = 0.0;
    for (p, q) in truth.iter().zip(estimate) {
        if p.len() != q.len() {
            return Err(Error::domain("probability vectors of different lengths"));
        }
        for (&pk, &qk) in p.0.iter().zip(&q.0) {
            if pk > 0.0 {
                let ratio = if qk > 0.0 { (pk / qk).ln() } else { f64::INFINITY };
                total += pk * ratio.min(c0);
            }
        }
    }
    Ok(total / truth.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub replicates: usize,
    pub seed: u64,
    /// Truncation constant for the KL risk.
    pub c0: f64,
    /// Test samples per class; `None` picks the default pairing.
    pub test_per_class: Option<usize>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            replicates: 1,
            seed: 0,
            c0: 2.0,
            test_per_class: None,
        }
    }
}

/// Test-set performance of one fitted network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub error_rate: f64,
    pub confusion: ConfusionMatrix,
    /// Present when true posteriors were supplied.
    pub kl_risk: Option<f64>,
}

/// Evaluate `params` on scored test data. `true_posteriors`, when given,
/// must align with the rows of `scores`.
pub fn evaluate(
    params: &NetworkParams,
    scores: ArrayView2<f64>,
    labels: &[usize],
    true_posteriors: Option<&[ProbabilityVector]>,
    c0: f64,
) -> Result<EvalReport> {
    let predicted = predict_labels(params, scores)?;
    let confusion = ConfusionMatrix::from_labels(&predicted, labels, params.classes())?;
    let error_rate = misclassification_rate(&predicted, labels)?;
    let kl_risk = match true_posteriors {
        None => None,
        Some(truth) => {
            let probs = params.forward_batch(scores.slice(s![.., ..params.input_dim()]))?;
            let estimate: Vec<ProbabilityVector> = probs
                .rows()
                .into_iter()
                .map(|r| ProbabilityVector(r.to_vec()))
                .collect();
            Some(truncated_kl_risk(truth, &estimate, c0)?)
        }
    };
    Ok(EvalReport {
        error_rate,
        confusion,
        kl_risk,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateResult {
    pub seed: u64,
    pub chosen: Candidate,
    pub report: EvalReport,
}

/// Replicated train/select/test runs on one simulation setting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub model: String,
    pub n_per_class: usize,
    pub m: usize,
    pub replicates: Vec<ReplicateResult>,
    pub mean_error: f64,
    /// Sample standard deviation; `None` with a single replicate.
    pub sd: Option<f64>,
    pub se: Option<f64>,
    pub mean_kl: Option<f64>,
    pub confusion: ConfusionMatrix,
}

impl BenchmarkReport {
    pub const CSV_HEADER: &'static str =
        "model_id,n_k,m,replicates,mean_error,sd,se,chosen_J,chosen_L,chosen_width,chosen_dropout";

    /// Summary row first, then one row per replicate (`replicates = 1`,
    /// `sd`/`se` empty, chosen cell filled). Summary rows leave the chosen
    /// cell empty.
    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let mut out = String::new();
        writeln!(out, "{}", Self::CSV_HEADER).unwrap();
        writeln!(
            out,
            "{},{},{},{},{},{},{},,,,",
            self.model,
            self.n_per_class,
            self.m,
            self.replicates.len(),
            self.mean_error,
            opt(self.sd),
            opt(self.se)
        )
        .unwrap();
        for r in &self.replicates {
            writeln!(
                out,
                "{},{},{},1,{},,,{},{},{},{}",
                self.model,
                self.n_per_class,
                self.m,
                r.report.error_rate,
                r.chosen.j,
                r.chosen.depth,
                r.chosen.width,
                r.chosen.dropout
            )
            .unwrap();
        }
        out
    }
}

/// Mean, sample standard deviation and standard error.
pub fn summarize(values: &[f64]) -> (f64, Option<f64>, Option<f64>) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, None, None);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let sd = var.sqrt();
    (mean, Some(sd), Some(sd / n.sqrt()))
}

/// Replicate `r` uses seed `derive_seed(eval.seed, r)` for data generation
/// and training, so results do not depend on thread scheduling. The truncated
/// KL risk is reported for all-Gaussian models.
pub fn benchmark(
    model: &SimModel,
    n_per_class: usize,
    grid: &Arc<Grid>,
    hyper: &HyperGrid,
    train_cfg: &TrainConfig,
    eval_cfg: &EvalConfig,
) -> Result<BenchmarkReport> {
    if eval_cfg.replicates == 0 {
        return Err(Error::domain("replicates must be >= 1"));
    }
    hyper.validate()?;
    let test_per_class = eval_cfg
        .test_per_class
        .unwrap_or_else(|| default_test_size(n_per_class));
    let replicates: Vec<ReplicateResult> = (0..eval_cfg.replicates)
        .into_par_iter()
        .map(|r| -> Result<ReplicateResult> {
            let seed = derive_seed(eval_cfg.seed, r as u64);
            let (train, test) = generate_train_test(model, n_per_class, test_per_class, grid, seed)?;
            let cfg = TrainConfig {
                seed: derive_seed(seed, 2),
                ..train_cfg.clone()
            };
            let selection = select(&train.dataset, hyper, &cfg)?;
            let projector = Projector::new(Arc::clone(grid), selection.chosen.j)?;
            let test_scores = projector.project_all(&test.dataset.samples)?;
            let labels = test.dataset.labels()?;
            let truth = if model.is_gaussian() {
                Some(
                    test.scores
                        .rows()
                        .into_iter()
                        .map(|xi| bayes_posterior(model, xi.as_slice().expect("row-major")))
                        .collect::<Result<Vec<_>>>()?,
                )
            } else {
                None
            };
            let report = evaluate(
                &selection.final_params,
                test_scores.view(),
                &labels,
                truth.as_deref(),
                eval_cfg.c0,
            )?;
            Ok(ReplicateResult {
                seed,
                chosen: selection.chosen,
                report,
            })
        })
        .collect::<Result<_>>()?;

    let errors: Vec<f64> = replicates.iter().map(|r| r.report.error_rate).collect();
    let (mean_error, sd, se) = summarize(&errors);
    let mean_kl = if model.is_gaussian() {
        let kls: Vec<f64> = replicates.iter().filter_map(|r| r.report.kl_risk).collect();
        Some(summarize(&kls).0)
    } else {
        None
    };
    let mut confusion = ConfusionMatrix::new(model.classes());
    for r in &replicates {
        confusion.add(&r.report.confusion)?;
    }
    Ok(BenchmarkReport {
        model: model.name.clone(),
        n_per_class,
        m: grid.len(),
        replicates,
        mean_error,
        sd,
        se,
        mean_kl,
        confusion,
    })
}
