//! Feedforward ReLU network with shift activations and a softmax head.
//!
//! For input `x ∈ R^J` the network computes
//!
//! ```text
//! f(x) = softmax(W_L σ_{V_L}(W_{L-1} … σ_{V_1}(W_0 x)))
//! ```
//!
//! where `σ_V(z) = max(z - V, 0)` componentwise. A shift vector `V` is the
//! negated bias of a conventional layer. `W_L` maps the last hidden layer to
//! `K` logits.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Floor applied to probabilities inside the training log-loss.
pub const PROB_FLOOR: f64 = 1e-12;

/// Layer widths: `J` inputs, `L = hidden.len()` hidden layers, `K` outputs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    #[serde(rename = "J")]
    pub input_dim: usize,
    #[serde(rename = "widths")]
    pub hidden: Vec<usize>,
    #[serde(rename = "K")]
    pub classes: usize,
}

impl Architecture {
    pub fn new(input_dim: usize, hidden: Vec<usize>, classes: usize) -> Result<Self> {
        if input_dim == 0 {
            return Err(Error::domain("network input width must be >= 1"));
        }
        if hidden.is_empty() {
            return Err(Error::domain("network needs at least one hidden layer"));
        }
        if hidden.iter().any(|&w| w == 0) {
            return Err(Error::domain("hidden widths must be >= 1"));
        }
        if classes < 2 {
            return Err(Error::domain("at least two classes are required"));
        }
        Ok(Self {
            input_dim,
            hidden,
            classes,
        })
    }

    /// `L` hidden layers of equal `width`.
    pub fn uniform(input_dim: usize, depth: usize, width: usize, classes: usize) -> Result<Self> {
        Self::new(input_dim, vec![width; depth], classes)
    }

    pub fn depth(&self) -> usize {
        self.hidden.len()
    }

    /// `[J, p_1, …, p_L, K]`.
    pub fn layer_dims(&self) -> Vec<usize> {
        let mut dims = Vec::with_capacity(self.hidden.len() + 2);
        dims.push(self.input_dim);
        dims.extend(&self.hidden);
        dims.push(self.classes);
        dims
    }
}

/// Per-unit drop probability `s ∈ [0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct DropoutRate(f64);

impl DropoutRate {
    pub fn new(rate: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::domain(format!("dropout rate {rate} not in [0, 1)")));
        }
        Ok(Self(rate))
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

/// Softmax output: `K` positive entries summing to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbabilityVector(pub Vec<f64>);

impl ProbabilityVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Softmax with max-logit subtraction.
pub fn softmax(logits: &[f64]) -> ProbabilityVector {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exp: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let total: f64 = exp.iter().sum();
    ProbabilityVector(exp.into_iter().map(|e| e / total).collect())
}

fn softmax_rows(logits: &mut Array2<f64>) {
    for mut row in logits.rows_mut() {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|z| (z - max).exp());
        let total = row.sum();
        row /= total;
    }
}

/// Cross-entropy `-ln p_label`, optionally truncated at `clamp`.
///
/// Without a clamp, `p_label = 0` yields `+∞`.
pub fn ce_loss(probs: &ProbabilityVector, label: usize, clamp: Option<f64>) -> f64 {
    let loss = -probs.0[label].ln();
    match clamp {
        Some(c0) => loss.min(c0),
        None => loss,
    }
}

/// Weight matrices `W_0..W_L` (`W_l` is `p_{l+1} × p_l`) and shift vectors
/// `V_1..V_L` (`shifts[l-1]` has length `p_l`).
///
/// Gradients are returned in the same shape.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    pub weights: Vec<Array2<f64>>,
    pub shifts: Vec<Array1<f64>>,
}

impl NetworkParams {
    pub fn zeros(arch: &Architecture) -> Self {
        let dims = arch.layer_dims();
        let weights = dims
            .windows(2)
            .map(|w| Array2::zeros((w[1], w[0])))
            .collect();
        let shifts = arch.hidden.iter().map(|&p| Array1::zeros(p)).collect();
        Self { weights, shifts }
    }

    /// Weights uniform on `[-1/√fan_in, 1/√fan_in]`, shifts zero.
    pub fn init<R: Rng>(arch: &Architecture, rng: &mut R) -> Self {
        let mut params = Self::zeros(arch);
        for w in &mut params.weights {
            let bound = 1.0 / (w.ncols() as f64).sqrt();
            w.mapv_inplace(|_| rng.random_range(-bound..=bound));
        }
        params
    }

    /// Assemble from explicit matrices, checking the layer shapes chain.
    pub fn from_parts(weights: Vec<Array2<f64>>, shifts: Vec<Array1<f64>>) -> Result<Self> {
        if weights.len() < 2 || shifts.len() + 1 != weights.len() {
            return Err(Error::domain(format!(
                "{} weight matrices and {} shift vectors do not form a network",
                weights.len(),
                shifts.len()
            )));
        }
        for (l, pair) in weights.windows(2).enumerate() {
            if pair[1].ncols() != pair[0].nrows() || shifts[l].len() != pair[0].nrows() {
                return Err(Error::domain(format!("layer {l} shapes do not chain")));
            }
        }
        let params = Self {
            weights: weights.into_iter().map(standard).collect(),
            shifts,
        };
        if !params.is_finite() {
            return Err(Error::domain("network parameters must be finite"));
        }
        Ok(params)
    }

    pub fn architecture(&self) -> Architecture {
        Architecture {
            input_dim: self.weights[0].ncols(),
            hidden: self.shifts.iter().map(|v| v.len()).collect(),
            classes: self.weights.last().expect("L >= 1").nrows(),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weights[0].ncols()
    }

    pub fn classes(&self) -> usize {
        self.weights.last().expect("L >= 1").nrows()
    }

    pub fn param_count(&self) -> usize {
        self.weights.iter().map(|w| w.len()).sum::<usize>()
            + self.shifts.iter().map(|v| v.len()).sum::<usize>()
    }

    pub fn is_finite(&self) -> bool {
        self.slices().iter().all(|s| s.iter().all(|v| v.is_finite()))
    }

    /// Every parameter array as a flat slice, weights first.
    pub fn slices(&self) -> Vec<&[f64]> {
        self.weights
            .iter()
            .map(|w| w.as_slice().expect("standard layout"))
            .chain(self.shifts.iter().map(|v| v.as_slice().expect("contiguous")))
            .collect()
    }

    pub fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        self.weights
            .iter_mut()
            .map(|w| w.as_slice_mut().expect("standard layout"))
            .chain(
                self.shifts
                    .iter_mut()
                    .map(|v| v.as_slice_mut().expect("contiguous")),
            )
            .collect()
    }

    /// Output logits for one input.
    pub fn logits(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim() {
            return Err(Error::domain(format!(
                "input has {} scores, network expects {}",
                x.len(),
                self.input_dim()
            )));
        }
        let batch = ArrayView2::from_shape((1, x.len()), x).expect("row vector");
        Ok(self.logits_batch(batch, None)?.row(0).to_vec())
    }

    pub fn forward(&self, x: &[f64]) -> Result<ProbabilityVector> {
        Ok(softmax(&self.logits(x)?))
    }

    /// Class probabilities for each row of `x` (`n × J`).
    pub fn forward_batch(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.input_dim() {
            return Err(Error::domain(format!(
                "inputs have {} scores, network expects {}",
                x.ncols(),
                self.input_dim()
            )));
        }
        let mut logits = self.logits_batch(x, None)?;
        softmax_rows(&mut logits);
        Ok(logits)
    }

    fn logits_batch(&self, x: ArrayView2<f64>, masks: Option<&[Array2<f64>]>) -> Result<Array2<f64>> {
        let mut a = x.to_owned();
        for (l, shift) in self.shifts.iter().enumerate() {
            let mut z = a.dot(&self.weights[l].t());
            z -= shift;
            z.mapv_inplace(|v| v.max(0.0));
            if let Some(masks) = masks {
                z *= &masks[l];
            }
            check_finite(&z, l + 1)?;
            a = z;
        }
        let out = a.dot(&self.weights[self.shifts.len()].t());
        check_finite(&out, self.shifts.len() + 1)?;
        Ok(out)
    }

    /// Mean training loss over a batch and its exact gradient.
    ///
    /// `masks[l]` multiplies the activations of hidden layer `l + 1`
    /// (`n × p_{l+1}`). The reported loss floors probabilities at
    /// [`PROB_FLOOR`]; the gradient is the unfloored softmax cross-entropy
    /// gradient.
    pub fn loss_and_gradient(
        &self,
        x: ArrayView2<f64>,
        labels: &[usize],
        masks: Option<&[Array2<f64>]>,
    ) -> Result<(f64, NetworkParams)> {
        let n = x.nrows();
        if labels.len() != n || n == 0 {
            return Err(Error::domain("batch inputs and labels must be non-empty and match"));
        }
        if x.ncols() != self.input_dim() {
            return Err(Error::domain(format!(
                "inputs have {} scores, network expects {}",
                x.ncols(),
                self.input_dim()
            )));
        }
        let k = self.classes();
        if let Some(&bad) = labels.iter().find(|&&y| y >= k) {
            return Err(Error::domain(format!("label {bad} out of range for K = {k}")));
        }
        let depth = self.shifts.len();
        if let Some(masks) = masks {
            if masks.len() != depth
                || masks
                    .iter()
                    .zip(&self.shifts)
                    .any(|(m, v)| m.dim() != (n, v.len()))
            {
                return Err(Error::domain("dropout mask shapes do not match the network"));
            }
        }

        // activations[l] is the input to W_l; pre[l] is W_l a_l - V_{l+1}
        let mut activations = Vec::with_capacity(depth + 1);
        let mut pre = Vec::with_capacity(depth);
        activations.push(x.to_owned());
        for l in 0..depth {
            let mut z = activations[l].dot(&self.weights[l].t());
            z -= &self.shifts[l];
            check_finite(&z, l + 1)?;
            let mut a = z.mapv(|v| v.max(0.0));
            if let Some(masks) = masks {
                a *= &masks[l];
            }
            pre.push(z);
            activations.push(a);
        }
        let mut probs = activations[depth].dot(&self.weights[depth].t());
        check_finite(&probs, depth + 1)?;
        softmax_rows(&mut probs);

        let loss = labels
            .iter()
            .enumerate()
            .map(|(i, &y)| -probs[(i, y)].max(PROB_FLOOR).ln())
            .sum::<f64>()
            / n as f64;

        // d loss / d logits = (p - y) / n
        let mut delta = probs;
        for (i, &y) in labels.iter().enumerate() {
            delta[(i, y)] -= 1.0;
        }
        delta /= n as f64;

        let mut grad = NetworkParams::zeros(&self.architecture());
        for l in (0..=depth).rev() {
            grad.weights[l] = standard(delta.t().dot(&activations[l]));
            if l == 0 {
                break;
            }
            let mut back = delta.dot(&self.weights[l]);
            if let Some(masks) = masks {
                back *= &masks[l - 1];
            }
            ndarray::Zip::from(&mut back)
                .and(&pre[l - 1])
                .for_each(|d, &z| {
                    if z <= 0.0 {
                        *d = 0.0;
                    }
                });
            grad.shifts[l - 1] = -back.sum_axis(Axis(0));
            delta = back;
        }
        Ok((loss, grad))
    }
}

/// Row-major copy unless already row-major; [`NetworkParams::slices`]
/// relies on it.
fn standard(a: Array2<f64>) -> Array2<f64> {
    if a.is_standard_layout() {
        a
    } else {
        a.as_standard_layout().into_owned()
    }
}

fn check_finite(values: &Array2<f64>, layer: usize) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::numeric(format!("non-finite activation at layer {layer}")))
    }
}

/// Gradient of the cross-entropy at one input. `mask` holds one multiplier
/// vector per hidden layer.
pub fn backward(
    params: &NetworkParams,
    x: &[f64],
    label: usize,
    mask: Option<&[Vec<f64>]>,
) -> Result<NetworkParams> {
    let batch = ArrayView2::from_shape((1, x.len()), x).expect("row vector");
    let masks: Option<Vec<Array2<f64>>> = match mask {
        Some(layers) => Some(
            layers
                .iter()
                .map(|m| Array2::from_shape_vec((1, m.len()), m.clone()).expect("row vector"))
                .collect(),
        ),
        None => None,
    };
    Ok(params
        .loss_and_gradient(batch, &[label], masks.as_deref())?
        .1)
}

/// Nonzero-entry count and max-entry norm over all `W_l` and `V_l`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SparsityReport {
    pub active_count: usize,
    pub total_count: usize,
    pub max_entry: f64,
}

pub fn sparsity_report(params: &NetworkParams) -> SparsityReport {
    let mut active_count = 0;
    let mut max_entry = 0.0f64;
    for slice in params.slices() {
        for &v in slice {
            if v != 0.0 {
                active_count += 1;
            }
            max_entry = max_entry.max(v.abs());
        }
    }
    SparsityReport {
        active_count,
        total_count: params.param_count(),
        max_entry,
    }
}

/// Project every weight and shift into `[-1, 1]`.
pub fn clip_weights(params: &NetworkParams) -> NetworkParams {
    let mut out = params.clone();
    clip_weights_in_place(&mut out);
    out
}

pub fn clip_weights_in_place(params: &mut NetworkParams) {
    for slice in params.slices_mut() {
        for v in slice {
            *v = v.clamp(-1.0, 1.0);
        }
    }
}
