//! Simulated three-class functional data on `[0,1]^2` and `[0,1]^3`.
//!
//! Each sample is `X(s) = Σ_j ξ_j ψ_j(s)` with fixed, non-orthogonal
//! polynomial synthesis functions `ψ_j` and class-dependent laws for the
//! score vector `ξ`:
//!
//! * 2D (`q = 5`): `ψ = (s, s', s s', s² s', s s'²)`
//! * 3D (`q = 9`): `ψ = (s₁, s₂, s₃, s₁s₂, s₁s₃, s₂s₃, s₁², s₂², s₃²)`
//!
//! Student-t laws are standard t variates with the listed degrees of freedom
//! shifted by a location vector.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use ndarray::{Array2, Axis};
use rand_distr::{Distribution, Exp, Normal, StudentT};
use serde::{Deserialize, Serialize};

use crate::basis::Grid;
use crate::error::{Error, Result};
use crate::network::{softmax, ProbabilityVector};
use crate::projection::{Dataset, FunctionalSample};
use crate::rng::{derive_seed, rng_from_seed};

/// The eight preset simulation models.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModelId {
    Gaussian2d,
    Mixed1_2d,
    Mixed2_2d,
    Mixed3_2d,
    Gaussian3d,
    Mixed1_3d,
    Mixed2_3d,
    Mixed3_3d,
}

impl ModelId {
    pub const ALL: [ModelId; 8] = [
        ModelId::Gaussian2d,
        ModelId::Mixed1_2d,
        ModelId::Mixed2_2d,
        ModelId::Mixed3_2d,
        ModelId::Gaussian3d,
        ModelId::Mixed1_3d,
        ModelId::Mixed2_3d,
        ModelId::Mixed3_3d,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelId::Gaussian2d => "2d-gaussian",
            ModelId::Mixed1_2d => "2d-mixed1",
            ModelId::Mixed2_2d => "2d-mixed2",
            ModelId::Mixed3_2d => "2d-mixed3",
            ModelId::Gaussian3d => "3d-gaussian",
            ModelId::Mixed1_3d => "3d-mixed1",
            ModelId::Mixed2_3d => "3d-mixed2",
            ModelId::Mixed3_3d => "3d-mixed3",
        }
    }

    /// Model number 1–8.
    pub fn number(self) -> usize {
        Self::ALL.iter().position(|&m| m == self).expect("listed") + 1
    }

    pub fn dim(self) -> usize {
        if self.number() <= 4 {
            2
        } else {
            3
        }
    }
}

impl fmt::Display for ModelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelId {
    type Err = Error;

    /// Accepts `2d-gaussian`-style names, `model1`..`model8`, or `1`..`8`.
    fn from_str(s: &str) -> Result<Self> {
        let lower = s.to_ascii_lowercase();
        if let Some(m) = Self::ALL.iter().find(|m| m.as_str() == lower) {
            return Ok(*m);
        }
        let digits = lower.strip_prefix("model").unwrap_or(&lower);
        match digits.parse::<usize>() {
            Ok(k @ 1..=8) => Ok(Self::ALL[k - 1]),
            _ => Err(Error::domain(format!(
                "unknown model '{s}'; expected one of {}",
                Self::ALL.map(|m| m.as_str()).join(", ")
            ))),
        }
    }
}

/// Distribution of one class's score vector (independent coordinates).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ScoreLaw {
    Gaussian { mean: Vec<f64>, sd: Vec<f64> },
    /// `ξ_j = location_j + T_j`, `T_j ~ t(dof_j)`.
    StudentT { dof: Vec<f64>, location: Vec<f64> },
    /// `ξ_j ~ Exp(rate_j)`, mean `1/rate_j`.
    Exponential { rate: Vec<f64> },
}

impl ScoreLaw {
    fn len(&self) -> usize {
        match self {
            ScoreLaw::Gaussian { mean, .. } => mean.len(),
            ScoreLaw::StudentT { dof, .. } => dof.len(),
            ScoreLaw::Exponential { rate } => rate.len(),
        }
    }

    fn validate(&self, q: usize) -> Result<()> {
        let ok = match self {
            ScoreLaw::Gaussian { mean, sd } => {
                mean.len() == q && sd.len() == q && sd.iter().all(|&s| s > 0.0)
            }
            ScoreLaw::StudentT { dof, location } => {
                dof.len() == q && location.len() == q && dof.iter().all(|&d| d >= 1.0)
            }
            ScoreLaw::Exponential { rate } => rate.len() == q && rate.iter().all(|&r| r > 0.0),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::domain(format!("invalid score law for dimension {q}: {self:?}")))
        }
    }
}

/// A three-class simulation model: spatial dimension plus one score law
/// per class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimModel {
    pub name: String,
    pub dim: usize,
    pub laws: Vec<ScoreLaw>,
}

fn gauss(mean: &[f64], sd: &[f64]) -> ScoreLaw {
    ScoreLaw::Gaussian {
        mean: mean.to_vec(),
        sd: sd.to_vec(),
    }
}

fn student(dof: impl Fn(f64) -> f64, location: f64, q: usize) -> ScoreLaw {
    ScoreLaw::StudentT {
        dof: (1..=q).map(|j| dof(j as f64)).collect(),
        location: vec![location; q],
    }
}

impl SimModel {
    pub fn preset(id: ModelId) -> Self {
        let sd2_wide = [5.0, 4.0, 3.0, 2.0, 1.0];
        let sd2_narrow = [2.5, 2.0, 1.5, 1.0, 0.5];
        let sd3_wide = [9.0, 8.0, 7.0, 6.0, 5.0, 4.0, 3.0, 2.0, 1.0];
        let sd3_mid = [5.5, 5.0, 4.5, 4.0, 3.5, 3.0, 2.5, 2.0, 1.5];
        let sd3_narrow = [4.5, 4.0, 3.5, 3.0, 2.5, 2.0, 1.5, 1.0, 0.5];
        let laws = match id {
            ModelId::Gaussian2d => vec![
                gauss(&[4.0, 4.0, 3.0, 3.0, 3.0], &[8.0, 7.0, 6.0, 5.0, 4.0]),
                gauss(&[-1.0; 5], &sd2_wide),
                gauss(&[0.0; 5], &sd2_narrow),
            ],
            ModelId::Mixed1_2d => vec![
                gauss(&[-1.0; 5], &sd2_wide),
                gauss(&[0.0; 5], &sd2_narrow),
                student(|j| 2.0 * j + 1.0, 3.0, 5),
            ],
            // the second t law belongs to class 3
            ModelId::Mixed2_2d => vec![
                gauss(&[0.0; 5], &sd2_narrow),
                student(|j| j + 1.0, 1.0, 5),
                student(|j| 2.0 * j + 1.0, 3.0, 5),
            ],
            ModelId::Mixed3_2d => vec![
                ScoreLaw::Exponential {
                    rate: vec![0.1, 0.3, 0.5, 0.7, 0.9],
                },
                student(|j| 2.0 * j + 1.0, 3.0, 5),
                gauss(&[0.0; 5], &sd2_narrow),
            ],
            ModelId::Gaussian3d => vec![
                gauss(&[2.0; 9], &sd3_wide),
                gauss(&[0.0; 9], &sd3_wide),
                gauss(&[0.0; 9], &sd3_wide.map(|s| s / 3.0)),
            ],
            // location 3 on all nine coordinates
            ModelId::Mixed1_3d => vec![
                gauss(&[-1.0; 9], &sd3_mid),
                gauss(&[0.0; 9], &sd3_narrow),
                student(|j| j + 1.0, 3.0, 9),
            ],
            // class 3 takes the t_{2j+1} law with location 0.5
            ModelId::Mixed2_3d => vec![
                gauss(&[0.0; 9], &sd3_narrow),
                student(|j| j + 1.0, -1.0, 9),
                student(|j| 2.0 * j + 1.0, 0.5, 9),
            ],
            ModelId::Mixed3_3d => vec![
                ScoreLaw::Exponential {
                    rate: (0..9).map(|j| 0.1 * (2 * j + 1) as f64).collect(),
                },
                student(|j| j + 1.0, 0.6, 9),
                gauss(&[0.0; 9], &sd3_narrow),
            ],
        };
        Self {
            name: id.as_str().to_string(),
            dim: id.dim(),
            laws,
        }
    }

    pub fn custom(name: impl Into<String>, dim: usize, laws: Vec<ScoreLaw>) -> Result<Self> {
        let q = synthesis_len(dim)?;
        if laws.len() < 2 {
            return Err(Error::domain("a model needs at least two classes"));
        }
        for law in &laws {
            law.validate(q)?;
        }
        Ok(Self {
            name: name.into(),
            dim,
            laws,
        })
    }

    pub fn classes(&self) -> usize {
        self.laws.len()
    }

    /// Number of synthesis functions, 5 in 2D and 9 in 3D.
    pub fn score_dim(&self) -> usize {
        self.laws[0].len()
    }

    pub fn is_gaussian(&self) -> bool {
        self.laws
            .iter()
            .all(|l| matches!(l, ScoreLaw::Gaussian { .. }))
    }
}

fn synthesis_len(dim: usize) -> Result<usize> {
    match dim {
        2 => Ok(5),
        3 => Ok(9),
        _ => Err(Error::domain(format!(
            "simulation models are 2- or 3-dimensional, got {dim}"
        ))),
    }
}

/// Synthesis functions `ψ_1..ψ_q` at `point`.
pub fn synthesis_basis(point: &[f64]) -> Result<Vec<f64>> {
    match *point {
        [s, t] => Ok(vec![s, t, s * t, s * s * t, s * t * t]),
        [a, b, c] => Ok(vec![a, b, c, a * b, a * c, b * c, a * a, b * b, c * c]),
        _ => Err(Error::domain(format!(
            "synthesis basis is defined in 2 or 3 dimensions, got {}",
            point.len()
        ))),
    }
}

/// `n` i.i.d. score vectors of class `class` (zero-based), one per row.
pub fn draw_scores(model: &SimModel, class: usize, n: usize, seed: u64) -> Result<Array2<f64>> {
    let law = model.laws.get(class).ok_or_else(|| {
        Error::domain(format!(
            "class {class} out of range for a {}-class model",
            model.classes()
        ))
    })?;
    let q = law.len();
    let mut rng = rng_from_seed(seed);
    let mut out = Array2::zeros((n, q));
    let bad = |e: &dyn fmt::Display| Error::domain(format!("invalid score law: {e}"));
    match law {
        ScoreLaw::Gaussian { mean, sd } => {
            let dists: Vec<Normal<f64>> = mean
                .iter()
                .zip(sd)
                .map(|(&m, &s)| Normal::new(m, s).map_err(|e| bad(&e)))
                .collect::<Result<_>>()?;
            for mut row in out.rows_mut() {
                for (v, d) in row.iter_mut().zip(&dists) {
                    *v = d.sample(&mut rng);
                }
            }
        }
        ScoreLaw::StudentT { dof, location } => {
            let dists: Vec<StudentT<f64>> = dof
                .iter()
                .map(|&d| StudentT::new(d).map_err(|e| bad(&e)))
                .collect::<Result<_>>()?;
            for mut row in out.rows_mut() {
                for ((v, d), loc) in row.iter_mut().zip(&dists).zip(location) {
                    *v = loc + d.sample(&mut rng);
                }
            }
        }
        ScoreLaw::Exponential { rate } => {
            let dists: Vec<Exp<f64>> = rate
                .iter()
                .map(|&r| Exp::new(r).map_err(|e| bad(&e)))
                .collect::<Result<_>>()?;
            for mut row in out.rows_mut() {
                for (v, d) in row.iter_mut().zip(&dists) {
                    *v = d.sample(&mut rng);
                }
            }
        }
    }
    Ok(out)
}

/// `m × q` matrix of synthesis functions at the grid nodes.
fn synthesis_matrix(model: &SimModel, grid: &Grid) -> Result<Array2<f64>> {
    if grid.dim() != model.dim {
        return Err(Error::domain(format!(
            "model is {}-dimensional, grid is {}-dimensional",
            model.dim,
            grid.dim()
        )));
    }
    let q = model.score_dim();
    let mut psi = Array2::zeros((grid.len(), q));
    for (i, p) in grid.points().enumerate() {
        for (j, v) in synthesis_basis(&p)?.into_iter().enumerate() {
            psi[(i, j)] = v;
        }
    }
    Ok(psi)
}

/// `X(node) = Σ_j ξ_j ψ_j(node)` on every grid node.
pub fn synthesize(
    scores: &[f64],
    model: &SimModel,
    grid: &Arc<Grid>,
    label: Option<usize>,
) -> Result<FunctionalSample> {
    if scores.len() != model.score_dim() {
        return Err(Error::domain(format!(
            "{} scores given, model uses {}",
            scores.len(),
            model.score_dim()
        )));
    }
    let psi = synthesis_matrix(model, grid)?;
    let values = psi.dot(&ndarray::ArrayView1::from(scores)).to_vec();
    FunctionalSample::new(values, Arc::clone(grid), label)
}

/// How the observation grid is specified.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum GridSpec {
    /// One of the standard sampling frequencies: `m ∈ {9, 25, 100, 400}` in
    /// 2D, `m ∈ {8, 27, 64, 125}` in 3D.
    Frequency(usize),
    /// Explicit per-axis point counts.
    Shape(Vec<usize>),
}

pub const FREQUENCIES_2D: [usize; 4] = [9, 25, 100, 400];
pub const FREQUENCIES_3D: [usize; 4] = [8, 27, 64, 125];

pub fn grid_for(dim: usize, spec: &GridSpec) -> Result<Grid> {
    match spec {
        GridSpec::Shape(shape) => {
            if shape.len() != dim {
                return Err(Error::domain(format!(
                    "grid shape {shape:?} is not {dim}-dimensional"
                )));
            }
            Grid::midpoint(shape)
        }
        GridSpec::Frequency(m) => {
            let supported: &[usize] = match dim {
                2 => &FREQUENCIES_2D,
                3 => &FREQUENCIES_3D,
                _ => return Err(Error::domain(format!("no standard grids in {dim} dimensions"))),
            };
            if !supported.contains(m) {
                return Err(Error::domain(format!(
                    "unsupported sampling frequency m = {m} for {dim}D; supported: {supported:?} \
                     (or give an explicit per-axis shape)"
                )));
            }
            let per_axis = (1..=*m).find(|a| a.pow(dim as u32) == *m).expect("perfect power");
            Grid::uniform(dim, per_axis)
        }
    }
}

/// Test-set size per class paired with a training size per class.
pub fn default_test_size(n_per_class: usize) -> usize {
    match n_per_class {
        200 => 100,
        350 => 150,
        700 => 300,
        n => n.div_ceil(2),
    }
}

/// A generated dataset together with the latent scores behind each sample.
#[derive(Debug, Clone)]
pub struct SimData {
    pub dataset: Dataset,
    /// `n × q`, row `i` generated sample `i`.
    pub scores: Array2<f64>,
}

/// Balanced dataset, classes in order (`n_per_class` samples of class 0,
/// then class 1, …). Class `k` draws from stream `k` of `seed`.
pub fn generate_dataset(
    model: &SimModel,
    n_per_class: usize,
    grid: &Arc<Grid>,
    seed: u64,
) -> Result<SimData> {
    if n_per_class == 0 {
        return Err(Error::domain("n_k must be >= 1"));
    }
    let psi = synthesis_matrix(model, grid)?;
    let blocks: Vec<Array2<f64>> = (0..model.classes())
        .map(|k| draw_scores(model, k, n_per_class, derive_seed(seed, k as u64)))
        .collect::<Result<_>>()?;
    let views: Vec<_> = blocks.iter().map(|b| b.view()).collect();
    let scores = ndarray::concatenate(Axis(0), &views).expect("equal widths");
    let values = scores.dot(&psi.t());
    let samples = values
        .rows()
        .into_iter()
        .enumerate()
        .map(|(i, row)| FunctionalSample::new(row.to_vec(), Arc::clone(grid), Some(i / n_per_class)))
        .collect::<Result<_>>()?;
    Ok(SimData {
        dataset: Dataset::new(Arc::clone(grid), model.classes(), samples)?,
        scores,
    })
}

/// Independent training and test sets from disjoint sub-seeds.
pub fn generate_train_test(
    model: &SimModel,
    n_per_class: usize,
    test_per_class: usize,
    grid: &Arc<Grid>,
    seed: u64,
) -> Result<(SimData, SimData)> {
    let train = generate_dataset(model, n_per_class, grid, derive_seed(seed, 0))?;
    let test = generate_dataset(model, test_per_class, grid, derive_seed(seed, 1))?;
    Ok((train, test))
}

/// Exact class posterior under equal priors for all-Gaussian models.
pub fn bayes_posterior(model: &SimModel, scores: &[f64]) -> Result<ProbabilityVector> {
    if scores.len() != model.score_dim() {
        return Err(Error::domain(format!(
            "{} scores given, model uses {}",
            scores.len(),
            model.score_dim()
        )));
    }
    let log_densities: Vec<f64> = model
        .laws
        .iter()
        .map(|law| match law {
            ScoreLaw::Gaussian { mean, sd } => Ok(scores
                .iter()
                .zip(mean)
                .zip(sd)
                .map(|((x, m), s)| {
                    let z = (x - m) / s;
                    -0.5 * z * z - s.ln()
                })
                .sum()),
            _ => Err(Error::domain(format!(
                "Bayes posterior is only available for all-Gaussian models, not '{}'",
                model.name
            ))),
        })
        .collect::<Result<_>>()?;
    Ok(softmax(&log_densities))
}

/// Monte-Carlo error rate of the Bayes rule with `n_per_class` draws per
/// class. Ties go to the smallest class index.
pub fn bayes_error_mc(model: &SimModel, n_per_class: usize, seed: u64) -> Result<f64> {
    let mut wrong = 0usize;
    for k in 0..model.classes() {
        let draws = draw_scores(model, k, n_per_class, derive_seed(seed, k as u64))?;
        for row in draws.rows() {
            let post = bayes_posterior(model, row.as_slice().expect("contiguous"))?;
            if crate::eval::argmax(post.as_slice()) != k {
                wrong += 1;
            }
        }
    }
    Ok(wrong as f64 / (n_per_class * model.classes()) as f64)
}
