//! Multiclass classification of multidimensional functional data.
//!
//! Samples observed on a rectangular grid over `[0,1]^d` are reduced to a
//! truncated vector of projection scores (tensor Fourier basis or empirical
//! FPCA), fed to a feedforward ReLU network with shift activations and a
//! softmax head, and trained under cross-entropy. Hyperparameters
//! `(J, L, width, dropout)` are chosen by a 70/30 data split.
//!
//! Class labels are zero-based throughout: a `K`-class problem uses labels
//! `0..K`.

pub mod basis;
pub mod error;
pub mod eval;
pub mod io;
pub mod network;
pub mod projection;
pub mod rng;
pub mod simgen;
pub mod train;

pub use basis::{BasisOrder, Grid};
pub use error::{Error, Result};
pub use eval::{BenchmarkReport, ConfusionMatrix, EvalConfig, EvalReport};
pub use network::{Architecture, NetworkParams, ProbabilityVector, SparsityReport};
pub use projection::{Dataset, FunctionalSample, Projector, ScoreVector};
pub use simgen::{ModelId, SimModel};
pub use train::{Candidate, HyperGrid, Optimizer, SelectionResult, TrainConfig};
