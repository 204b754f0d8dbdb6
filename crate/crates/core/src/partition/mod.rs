//! Fair and balanced graph partitioning.
//!
//! Two solvers share one inner routine. [`gpfb_fast`] relaxes the shard
//! indicator to an orthonormal embedding, maximizes a quadratic-plus-linear
//! trace objective over the Stiefel manifold with generalized power
//! iteration ([`gpi_solve_h`]), then discretizes with k-means.
//! [`gpfb_sr`] adds a spectral-rotation term and alternates between the
//! rotation, the embedding and a discrete indicator, which it returns
//! directly. [`random_partition`] is the baseline.

mod fast;
mod gpi;
mod kmeans;
mod metrics;
mod random;
mod rotation;
mod sr;

pub use fast::{gpfb_fast, gpfb_fast_detailed, FastOutcome};
pub use gpi::{gpi_objective, gpi_solve_h, spectral_init, spectral_shift, GpiOutcome};
pub use kmeans::{kmeans_rows, kmeans_rows_detailed, within_cluster_ss, KMeansOutcome};
pub use metrics::{
    balance_score, fairness_score, partition_scores, ratio_cut, read_partition, write_partition,
    PartitionScores,
};
pub use random::{random_partition, stratified_partition};
pub use rotation::{
    indicator_objective, normalized_degree_indicator, update_indicator, update_rotation,
    IndicatorOutcome,
};
pub use sr::{gpfb_sr, gpfb_sr_detailed, gpfb_sr_from, sr_objective, SrOutcome};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{GuideError, Result};

/// Solver settings shared by both partitioners.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpfbConfig {
    /// Weight of the fairness/balance penalty.
    pub alpha: f64,
    /// Weight of the spectral-rotation penalty (rotation solver only).
    pub beta: f64,
    pub max_outer_iters: usize,
    /// Generalized power iteration steps per embedding solve.
    pub max_inner_iters: usize,
    /// Coordinate-ascent sweeps per indicator update.
    pub max_y_iters: usize,
    /// Relative objective change that counts as converged.
    pub tol: f64,
    /// Spectral shift added to the quadratic term. `None` picks a bound that
    /// guarantees a monotone iteration.
    pub shift_gamma: Option<f64>,
    pub seed: u64,
}

impl Default for GpfbConfig {
    fn default() -> Self {
        GpfbConfig {
            alpha: 0.01,
            beta: 2.0,
            max_outer_iters: 30,
            max_inner_iters: 100,
            max_y_iters: 50,
            tol: 1e-6,
            shift_gamma: None,
            seed: 0,
        }
    }
}

impl GpfbConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(GuideError::Argument(format!("alpha must be >= 0, got {}", self.alpha)));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(GuideError::Argument(format!("beta must be >= 0, got {}", self.beta)));
        }
        if !(self.tol > 0.0) {
            return Err(GuideError::Argument(format!("tol must be > 0, got {}", self.tol)));
        }
        if self.max_outer_iters == 0 || self.max_inner_iters == 0 || self.max_y_iters == 0 {
            return Err(GuideError::Argument("iteration caps must be >= 1".into()));
        }
        if let Some(g) = self.shift_gamma {
            if !(g >= 0.0 && g.is_finite()) {
                return Err(GuideError::Argument(format!("shift must be >= 0, got {g}")));
            }
        }
        Ok(())
    }
}

/// Relaxed shard embedding with orthonormal columns.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix(pub DMatrix<f64>);

impl EmbeddingMatrix {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    /// `max |H^T H - I|`.
    pub fn orthonormality_error(&self) -> f64 {
        let k = self.0.ncols();
        let gram = self.0.tr_mul(&self.0);
        (gram - DMatrix::<f64>::identity(k, k)).abs().max()
    }
}

pub(crate) fn relative_change(old: f64, new: f64) -> f64 {
    let scale = old.abs().max(new.abs());
    if scale == 0.0 {
        0.0
    } else {
        (new - old).abs() / scale
    }
}

pub(crate) fn check_shard_count(n: usize, v: usize) -> Result<()> {
    if v < 2 {
        return Err(GuideError::Argument(format!("shard count must be >= 2, got {v}")));
    }
    if n < v {
        return Err(GuideError::Argument(format!("{n} nodes cannot fill {v} shards")));
    }
    Ok(())
}
