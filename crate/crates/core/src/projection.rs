//! From grid-observed samples to truncated score vectors.
//!
//! Two routes are provided: integration against the fixed tensor Fourier
//! basis ([`Projector`]), which is what the classifier pipeline uses, and
//! empirical functional PCA of a sample covariance ([`empirical_fpca`]).

use std::sync::Arc;

use ndarray::{Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::basis::{design_matrix, BasisOrder, Grid};
use crate::error::{Error, Result};

/// One functional observation: values at every node of `grid` in row-major
/// order, plus an optional zero-based class label.
#[derive(Debug, Clone, PartialEq)]
pub struct FunctionalSample {
    pub values: Vec<f64>,
    pub grid: Arc<Grid>,
    pub label: Option<usize>,
}

impl FunctionalSample {
    pub fn new(values: Vec<f64>, grid: Arc<Grid>, label: Option<usize>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::domain(format!(
                "sample has {} values but the grid has {} nodes",
                values.len(),
                grid.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::domain(format!("non-finite sample value at node {i}")));
        }
        Ok(Self {
            values,
            grid,
            label,
        })
    }

    fn same_grid(&self, grid: &Grid) -> bool {
        std::ptr::eq(self.grid.as_ref(), grid) || self.grid.as_ref() == grid
    }
}

/// Samples sharing one grid, with the class count `K`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub grid: Arc<Grid>,
    pub classes: usize,
    pub samples: Vec<FunctionalSample>,
}

impl Dataset {
    pub fn new(grid: Arc<Grid>, classes: usize, samples: Vec<FunctionalSample>) -> Result<Self> {
        for (i, s) in samples.iter().enumerate() {
            if !s.same_grid(&grid) {
                return Err(Error::domain(format!("sample {i} is on a different grid")));
            }
            if let Some(label) = s.label {
                if label >= classes {
                    return Err(Error::domain(format!(
                        "sample {i} has label {label} but K = {classes}"
                    )));
                }
            }
        }
        Ok(Self {
            grid,
            classes,
            samples,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Labels of every sample; fails if any sample is unlabeled.
    pub fn labels(&self) -> Result<Vec<usize>> {
        self.samples
            .iter()
            .enumerate()
            .map(|(i, s)| {
                s.label
                    .ok_or_else(|| Error::domain(format!("sample {i} is unlabeled")))
            })
            .collect()
    }
}

/// Truncated projection scores of one sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreVector(pub Vec<f64>);

impl ScoreVector {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Precomputed quadrature map from grid values to the first `count`
/// tensor Fourier scores: `score_j = Σ_nodes w · x · φ_j`.
#[derive(Debug, Clone)]
pub struct Projector {
    grid: Arc<Grid>,
    count: usize,
    // m × J, quadrature weights folded into the basis values
    weighted: Array2<f64>,
}

impl Projector {
    pub fn new(grid: Arc<Grid>, count: usize) -> Result<Self> {
        if count == 0 {
            return Err(Error::domain("projection needs J >= 1"));
        }
        if count > grid.len() {
            log::warn!(
                "J = {count} exceeds the {} grid nodes; higher scores alias lower ones",
                grid.len()
            );
        }
        let order = BasisOrder::new(grid.dim())?;
        let mut weighted = design_matrix(&order, count, &grid)?;
        for (mut row, &w) in weighted.rows_mut().into_iter().zip(grid.weights()) {
            row *= w;
        }
        Ok(Self {
            grid,
            count,
            weighted,
        })
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn project(&self, sample: &FunctionalSample) -> Result<ScoreVector> {
        if !sample.same_grid(&self.grid) {
            return Err(Error::domain("sample grid differs from the projector grid"));
        }
        let x = ArrayView1::from(&sample.values[..]);
        Ok(ScoreVector(x.dot(&self.weighted).to_vec()))
    }

    /// Scores of every sample as an `n × J` matrix.
    pub fn project_all(&self, samples: &[FunctionalSample]) -> Result<Array2<f64>> {
        let m = self.grid.len();
        let mut values = Array2::zeros((samples.len(), m));
        for (i, s) in samples.iter().enumerate() {
            if !s.same_grid(&self.grid) {
                return Err(Error::domain(format!(
                    "sample {i} grid differs from the projector grid"
                )));
            }
            values.row_mut(i).assign(&ArrayView1::from(&s.values[..]));
        }
        Ok(values.dot(&self.weighted))
    }
}

/// First `count` tensor Fourier scores of `sample`.
pub fn project(sample: &FunctionalSample, order: &BasisOrder, count: usize) -> Result<ScoreVector> {
    if order.dim() != sample.grid.dim() {
        return Err(Error::domain(format!(
            "basis is {}-dimensional, sample grid is {}-dimensional",
            order.dim(),
            sample.grid.dim()
        )));
    }
    Projector::new(Arc::clone(&sample.grid), count)?.project(sample)
}

/// Pointwise sample mean and covariance on a common grid.
///
/// `matrix[(a, b)] = (1/n) Σ (X_i(a) - X̄(a)) (X_i(b) - X̄(b))`, without
/// quadrature weights.
#[derive(Debug, Clone)]
pub struct EmpiricalCovariance {
    /// The shared label of the samples, `None` for a pooled covariance.
    pub class: Option<usize>,
    pub mean: Vec<f64>,
    pub matrix: Array2<f64>,
    pub grid: Arc<Grid>,
}

pub fn class_covariance(samples: &[FunctionalSample]) -> Result<EmpiricalCovariance> {
    if samples.len() < 2 {
        return Err(Error::domain(format!(
            "covariance estimation needs at least 2 samples, got {}",
            samples.len()
        )));
    }
    let grid = Arc::clone(&samples[0].grid);
    if samples.iter().any(|s| !s.same_grid(&grid)) {
        return Err(Error::domain("covariance samples are on different grids"));
    }
    let n = samples.len();
    let m = grid.len();
    let mut data = Array2::zeros((n, m));
    for (i, s) in samples.iter().enumerate() {
        data.row_mut(i).assign(&ArrayView1::from(&s.values[..]));
    }
    let mean = data.mean_axis(ndarray::Axis(0)).expect("n >= 2");
    let centered = &data - &mean;
    let mut matrix = centered.t().dot(&centered) / n as f64;
    // exact symmetry
    for a in 0..m {
        for b in 0..a {
            let v = 0.5 * (matrix[(a, b)] + matrix[(b, a)]);
            matrix[(a, b)] = v;
            matrix[(b, a)] = v;
        }
    }
    let first = samples[0].label;
    let class = if samples.iter().all(|s| s.label == first) {
        first
    } else {
        None
    };
    Ok(EmpiricalCovariance {
        class,
        mean: mean.to_vec(),
        matrix,
        grid,
    })
}

/// Stopping rule for the symmetric eigensolver.
#[derive(Debug, Clone, Copy)]
pub struct EigenSettings {
    /// Relative off-diagonal Frobenius norm at which iteration stops.
    pub tolerance: f64,
    /// Maximum number of Jacobi sweeps.
    pub max_iterations: usize,
}

impl Default for EigenSettings {
    fn default() -> Self {
        Self {
            tolerance: 1e-10,
            max_iterations: 10_000,
        }
    }
}

/// Leading eigenpairs of a covariance operator under the grid inner product.
#[derive(Debug, Clone)]
pub struct Fpca {
    pub eigenvalues: Vec<f64>,
    /// `J × m`; row `j` is eigenfunction `j` at the grid nodes, normalized so
    /// that `Σ w ψ² = 1`.
    pub eigenfunctions: Array2<f64>,
    pub mean: Vec<f64>,
    pub grid: Arc<Grid>,
}

pub fn empirical_fpca(cov: &EmpiricalCovariance, count: usize) -> Result<Fpca> {
    empirical_fpca_with(cov, count, EigenSettings::default())
}

pub fn empirical_fpca_with(
    cov: &EmpiricalCovariance,
    count: usize,
    settings: EigenSettings,
) -> Result<Fpca> {
    let m = cov.grid.len();
    if count == 0 || count > m {
        return Err(Error::domain(format!(
            "FPCA truncation {count} must lie in 1..={m}"
        )));
    }
    let sqrt_w: Vec<f64> = cov.grid.weights().iter().map(|w| w.sqrt()).collect();
    // W^{1/2} Ω W^{1/2} shares its spectrum with the integral operator
    let sym = Array2::from_shape_fn((m, m), |(a, b)| sqrt_w[a] * cov.matrix[(a, b)] * sqrt_w[b]);
    let (values, vectors) = jacobi_eigen(sym, settings)?;

    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    let scale = values.iter().fold(1.0f64, |acc, v| acc.max(v.abs()));

    let mut eigenvalues = Vec::with_capacity(count);
    let mut eigenfunctions = Array2::zeros((count, m));
    for (j, &col) in order.iter().take(count).enumerate() {
        let mut lambda = values[col];
        if lambda < 0.0 {
            if lambda < -1e-10 * scale {
                return Err(Error::numeric(format!(
                    "covariance eigenvalue {lambda:.3e} is negative"
                )));
            }
            lambda = 0.0;
        }
        eigenvalues.push(lambda);
        for a in 0..m {
            eigenfunctions[(j, a)] = vectors[(a, col)] / sqrt_w[a];
        }
    }
    Ok(Fpca {
        eigenvalues,
        eigenfunctions,
        mean: cov.mean.clone(),
        grid: Arc::clone(&cov.grid),
    })
}

/// Scores of `sample` against the first `count` eigenfunctions:
/// `score_j = Σ w (x - mean) ψ_j`.
pub fn fpc_scores(sample: &FunctionalSample, fpca: &Fpca, count: usize) -> Result<ScoreVector> {
    if !sample.same_grid(&fpca.grid) {
        return Err(Error::domain("sample grid differs from the FPCA grid"));
    }
    if count > fpca.eigenvalues.len() {
        return Err(Error::domain(format!(
            "requested {count} scores, FPCA holds {}",
            fpca.eigenvalues.len()
        )));
    }
    let w = fpca.grid.weights();
    let scores = (0..count)
        .map(|j| {
            let psi = fpca.eigenfunctions.row(j);
            sample
                .values
                .iter()
                .zip(&fpca.mean)
                .zip(w)
                .zip(psi.iter())
                .map(|(((x, mu), w), p)| w * (x - mu) * p)
                .sum()
        })
        .collect();
    Ok(ScoreVector(scores))
}

/// Cyclic Jacobi rotations. Returns eigenvalues and column eigenvectors.
fn jacobi_eigen(mut a: Array2<f64>, settings: EigenSettings) -> Result<(Vec<f64>, Array2<f64>)> {
    let n = a.nrows();
    let mut v = Array2::eye(n);
    let total: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    if total == 0.0 {
        return Ok((vec![0.0; n], v));
    }
    let off_norm = |a: &Array2<f64>| -> f64 {
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    s += a[(i, j)] * a[(i, j)];
                }
            }
        }
        s.sqrt()
    };
    for _sweep in 0..settings.max_iterations {
        if off_norm(&a) <= settings.tolerance * total {
            return Ok(((0..n).map(|i| a[(i, i)]).collect(), v));
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq.abs() < f64::MIN_POSITIVE {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    Err(Error::numeric(format!(
        "Jacobi eigensolver did not converge in {} iterations",
        settings.max_iterations
    )))
}
