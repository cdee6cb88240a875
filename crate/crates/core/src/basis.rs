//! Ordered tensor Fourier basis on `[0,1]^d` and midpoint quadrature grids.
//!
//! The univariate family is `1, √2 cos(2πkt), √2 sin(2πkt)` indexed as
//! `1 ↦ 1`, `2k ↦ √2 cos(2πkt)`, `2k+1 ↦ √2 sin(2πkt)`. Tensor elements are
//! ordered by the largest per-axis index (low frequencies first), with ties
//! broken lexicographically on the multi-index.

use std::f64::consts::{PI, SQRT_2};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Value of the `index`-th univariate Fourier function at `t`.
pub fn univariate_fourier(index: usize, t: f64) -> Result<f64> {
    if index == 0 {
        return Err(Error::domain("Fourier index starts at 1"));
    }
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::domain(format!("t = {t} outside [0, 1]")));
    }
    Ok(fourier_unchecked(index, t))
}

#[inline]
fn fourier_unchecked(index: usize, t: f64) -> f64 {
    if index == 1 {
        return 1.0;
    }
    let k = (index / 2) as f64;
    let arg = 2.0 * PI * k * t;
    if index % 2 == 0 {
        SQRT_2 * arg.cos()
    } else {
        SQRT_2 * arg.sin()
    }
}

/// Graded enumeration of tensor multi-indices in `d` dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BasisOrder {
    dim: usize,
}

impl BasisOrder {
    pub fn new(dim: usize) -> Result<Self> {
        if !(1..=3).contains(&dim) {
            return Err(Error::domain(format!("basis dimension {dim} not in 1..=3")));
        }
        Ok(Self { dim })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Multi-index (one univariate index per axis, each ≥ 1) of the 1-based
    /// `rank`.
    pub fn multi_index(&self, rank: usize) -> Result<Vec<usize>> {
        if rank == 0 {
            return Err(Error::domain("basis rank starts at 1"));
        }
        let d = self.dim as u32;
        // shell M holds the M^d - (M-1)^d indices whose largest entry is M
        let mut shell = 1usize;
        while shell.pow(d) < rank {
            shell += 1;
        }
        let mut remaining = rank - (shell - 1).pow(d) - 1;
        let mut index = Vec::with_capacity(self.dim);
        let mut has_max = false;
        for axis in 0..self.dim {
            let rest = (self.dim - axis - 1) as u32;
            for v in 1..=shell {
                let hit = has_max || v == shell;
                let completions = if hit {
                    shell.pow(rest)
                } else {
                    shell.pow(rest) - (shell - 1).pow(rest)
                };
                if remaining < completions {
                    index.push(v);
                    has_max = hit;
                    break;
                }
                remaining -= completions;
            }
        }
        debug_assert_eq!(index.len(), self.dim);
        Ok(index)
    }

    /// The first `count` multi-indices, in rank order.
    pub fn first(&self, count: usize) -> Vec<Vec<usize>> {
        (1..=count)
            .map(|r| self.multi_index(r).expect("rank >= 1"))
            .collect()
    }
}

/// Product of univariate Fourier values over the multi-index of `rank`.
pub fn tensor_basis_eval(order: &BasisOrder, rank: usize, point: &[f64]) -> Result<f64> {
    if point.len() != order.dim() {
        return Err(Error::domain(format!(
            "point has {} coordinates, basis is {}-dimensional",
            point.len(),
            order.dim()
        )));
    }
    let index = order.multi_index(rank)?;
    index
        .iter()
        .zip(point)
        .try_fold(1.0, |acc, (&i, &t)| Ok(acc * univariate_fourier(i, t)?))
}

/// Rectangular grid over `[0,1]^d` with per-node quadrature weights.
///
/// Nodes are stored per axis; flat node indices are row-major (last axis
/// fastest).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    shape: Vec<usize>,
    nodes: Vec<Vec<f64>>,
    weights: Vec<f64>,
}

impl Grid {
    /// Midpoint grid: axis `a` with `n_a` points uses `(2i-1)/(2 n_a)`, and
    /// every node carries weight `1/m`.
    pub fn midpoint(shape: &[usize]) -> Result<Self> {
        if shape.is_empty() || shape.len() > 3 {
            return Err(Error::domain(format!(
                "grid dimension {} not in 1..=3",
                shape.len()
            )));
        }
        if shape.iter().any(|&n| n == 0) {
            return Err(Error::domain("grid axes need at least one point"));
        }
        let nodes: Vec<Vec<f64>> = shape
            .iter()
            .map(|&n| {
                (1..=n)
                    .map(|i| (2 * i - 1) as f64 / (2 * n) as f64)
                    .collect()
            })
            .collect();
        let m: usize = shape.iter().product();
        Ok(Self {
            shape: shape.to_vec(),
            nodes,
            weights: vec![1.0 / m as f64; m],
        })
    }

    /// Square/cubic midpoint grid with `per_axis` points on each of `dim` axes.
    pub fn uniform(dim: usize, per_axis: usize) -> Result<Self> {
        Self::midpoint(&vec![per_axis; dim])
    }

    pub fn dim(&self) -> usize {
        self.shape.len()
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    /// Sampling frequency `m`, the total node count.
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn axis_nodes(&self, axis: usize) -> &[f64] {
        &self.nodes[axis]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Per-axis positions of the flat node index.
    pub fn unravel(&self, flat: usize) -> Vec<usize> {
        let mut pos = vec![0; self.dim()];
        let mut rest = flat;
        for axis in (0..self.dim()).rev() {
            pos[axis] = rest % self.shape[axis];
            rest /= self.shape[axis];
        }
        pos
    }

    pub fn point(&self, flat: usize) -> Vec<f64> {
        self.unravel(flat)
            .iter()
            .enumerate()
            .map(|(axis, &i)| self.nodes[axis][i])
            .collect()
    }

    pub fn points(&self) -> impl Iterator<Item = Vec<f64>> + '_ {
        (0..self.len()).map(move |i| self.point(i))
    }
}

/// `m × J` matrix of basis values: entry `(node, j)` is the rank-`j+1`
/// element evaluated at the node.
pub fn design_matrix(order: &BasisOrder, count: usize, grid: &Grid) -> Result<Array2<f64>> {
    if grid.dim() != order.dim() {
        return Err(Error::domain(format!(
            "grid is {}-dimensional, basis is {}-dimensional",
            grid.dim(),
            order.dim()
        )));
    }
    let indices = order.first(count);
    let max_index = indices.iter().flatten().copied().max().unwrap_or(1);
    // tables[axis][(i - 1, node)] = φ_i(node)
    let tables: Vec<Array2<f64>> = (0..grid.dim())
        .map(|axis| {
            let nodes = grid.axis_nodes(axis);
            Array2::from_shape_fn((max_index, nodes.len()), |(i, n)| {
                fourier_unchecked(i + 1, nodes[n])
            })
        })
        .collect();
    let mut out = Array2::zeros((grid.len(), count));
    for node in 0..grid.len() {
        let pos = grid.unravel(node);
        for (j, index) in indices.iter().enumerate() {
            out[(node, j)] = index
                .iter()
                .zip(&pos)
                .enumerate()
                .map(|(axis, (&i, &p))| tables[axis][(i - 1, p)])
                .product();
        }
    }
    Ok(out)
}

/// Quadrature Gram matrix `G[a][b] = Σ w φ_a φ_b` of the first `count`
/// basis elements.
pub fn gram_matrix(order: &BasisOrder, count: usize, grid: &Grid) -> Result<Array2<f64>> {
    if count == 0 {
        return Err(Error::domain("Gram matrix needs at least one basis element"));
    }
    let phi = design_matrix(order, count, grid)?;
    let mut weighted = phi.clone();
    for (mut row, &w) in weighted.rows_mut().into_iter().zip(grid.weights()) {
        row *= w;
    }
    Ok(phi.t().dot(&weighted))
}

/// Largest entrywise deviation of a square matrix from the identity.
pub fn max_identity_deviation(m: &Array2<f64>) -> f64 {
    m.indexed_iter()
        .map(|((i, j), &v)| (v - if i == j { 1.0 } else { 0.0 }).abs())
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::HashSet;

    #[test]
    fn univariate_values() {
        assert_eq!(univariate_fourier(1, 0.37).unwrap(), 1.0);
        assert!((univariate_fourier(2, 0.0).unwrap() - SQRT_2).abs() < 1e-15);
        assert!((univariate_fourier(3, 0.25).unwrap() - SQRT_2).abs() < 1e-15);
        assert!(univariate_fourier(0, 0.5).is_err());
        assert!(univariate_fourier(2, 1.5).is_err());
        assert!(univariate_fourier(2, -0.1).is_err());
    }

    #[test]
    fn graded_enumeration_order() {
        let order = BasisOrder::new(2).unwrap();
        let expected = vec![
            vec![1, 1],
            vec![1, 2],
            vec![2, 1],
            vec![2, 2],
            vec![1, 3],
            vec![2, 3],
            vec![3, 1],
            vec![3, 2],
            vec![3, 3],
            vec![1, 4],
        ];
        assert_eq!(order.first(10), expected);

        let cube = BasisOrder::new(3).unwrap();
        assert_eq!(cube.multi_index(1).unwrap(), vec![1, 1, 1]);
        assert_eq!(cube.multi_index(8).unwrap(), vec![2, 2, 2]);
        assert_eq!(cube.multi_index(9).unwrap(), vec![1, 1, 3]);
        assert_eq!(cube.multi_index(27).unwrap(), vec![3, 3, 3]);
    }

    #[test]
    fn enumeration_is_injective_up_to_ten_thousand() {
        for d in 1..=3 {
            let order = BasisOrder::new(d).unwrap();
            let all = order.first(10_000);
            let distinct: HashSet<_> = all.iter().collect();
            assert_eq!(distinct.len(), all.len(), "d = {d}");
            for (r, index) in all.iter().enumerate() {
                let shell = *index.iter().max().unwrap();
                assert!((shell - 1).pow(d as u32) < r + 1 && r < shell.pow(d as u32));
            }
        }
    }

    #[test]
    fn tensor_eval_examples() {
        let order = BasisOrder::new(2).unwrap();
        assert_eq!(tensor_basis_eval(&order, 1, &[0.3, 0.8]).unwrap(), 1.0);
        // rank 3 is (2, 1)
        let v = tensor_basis_eval(&order, 3, &[0.0, 0.9]).unwrap();
        assert!((v - SQRT_2).abs() < 1e-15);
        let cube = BasisOrder::new(3).unwrap();
        let v = tensor_basis_eval(&cube, 8, &[0.0, 0.0, 0.0]).unwrap();
        assert!((v - 2.0 * SQRT_2).abs() < 1e-14);
        assert!(tensor_basis_eval(&order, 1, &[0.5]).is_err());
    }

    #[test]
    fn grid_layout() {
        let g = Grid::midpoint(&[2, 3]).unwrap();
        assert_eq!(g.len(), 6);
        assert!((g.weights().iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert_eq!(g.point(0), vec![0.25, 1.0 / 6.0]);
        assert_eq!(g.point(1), vec![0.25, 0.5]);
        assert_eq!(g.point(3), vec![0.75, 1.0 / 6.0]);
        assert!(Grid::midpoint(&[]).is_err());
        assert!(Grid::midpoint(&[3, 0]).is_err());
    }

    #[test]
    fn gram_of_constant_is_one() {
        let order = BasisOrder::new(2).unwrap();
        for n in [1, 2, 3, 7] {
            let g = gram_matrix(&order, 1, &Grid::uniform(2, n).unwrap()).unwrap();
            assert!((g[(0, 0)] - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn gram_nine_on_twenty_grid() {
        let order = BasisOrder::new(2).unwrap();
        let g = gram_matrix(&order, 9, &Grid::uniform(2, 20).unwrap()).unwrap();
        assert!(max_identity_deviation(&g) <= 1e-3);
        // the factor matrix is symmetric
        assert!((&g - &g.t()).iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn under_resolved_grid_shows_aliasing() {
        // Midpoint quadrature integrates these trigonometric products exactly
        // until the grid drops below the Nyquist rate.
        let order = BasisOrder::new(2).unwrap();
        let coarse = gram_matrix(&order, 9, &Grid::uniform(2, 3).unwrap()).unwrap();
        let aliased = gram_matrix(&order, 9, &Grid::uniform(2, 2).unwrap()).unwrap();
        let dev3 = max_identity_deviation(&coarse);
        let dev2 = max_identity_deviation(&aliased);
        eprintln!("Gram deviation J=9: 3x3 grid {dev3:.3e}, 2x2 grid {dev2:.3e}");
        assert!(dev2 > 0.5);
    }

    proptest! {
        #[test]
        fn tensor_eval_factorizes(rank in 1usize..400, s in 0.0f64..=1.0, t in 0.0f64..=1.0, u in 0.0f64..=1.0) {
            let order = BasisOrder::new(3).unwrap();
            let index = order.multi_index(rank).unwrap();
            let direct = tensor_basis_eval(&order, rank, &[s, t, u]).unwrap();
            let product = univariate_fourier(index[0], s).unwrap()
                * univariate_fourier(index[1], t).unwrap()
                * univariate_fourier(index[2], u).unwrap();
            prop_assert_eq!(direct, product);
        }

        #[test]
        fn diagonal_error_does_not_grow_under_refinement(rank in 1usize..50, n in 2usize..12) {
            let order = BasisOrder::new(2).unwrap();
            let index = order.multi_index(rank).unwrap();
            // below Nyquist: the highest frequency k = index/2 must be < n/2
            let k = index.iter().max().unwrap() / 2;
            prop_assume!(2 * k < n);
            let coarse = gram_matrix(&order, rank, &Grid::uniform(2, n).unwrap()).unwrap();
            let fine = gram_matrix(&order, rank, &Grid::uniform(2, 2 * n).unwrap()).unwrap();
            let r = rank - 1;
            prop_assert!((fine[(r, r)] - 1.0).abs() <= (coarse[(r, r)] - 1.0).abs() + 1e-13);
        }
    }
}
