use nalgebra::DMatrix;

use super::{relative_change, EmbeddingMatrix, GpfbConfig};
use crate::error::{GuideError, Result};
use crate::graph::{apply_w_minus_d, LabelIndicator, LabeledGraph};
use crate::linalg::{dense_top_eigenpairs, polar_factor, random_orthonormal, top_eigenpairs, Spectrum};

const DENSE_EIGEN_LIMIT: usize = 500;

/// Result of one embedding solve.
#[derive(Debug, Clone)]
pub struct GpiOutcome {
    pub h: EmbeddingMatrix,
    /// Unshifted objective before the first step and after every step.
    pub objective_trace: Vec<f64>,
    pub gamma: f64,
    pub iterations: usize,
}

/// Upper bound on `lambda_max(D - W + alpha F F^T)` from Gershgorin discs,
/// plus a small margin. Adding it to the quadratic term makes that term
/// positive definite, which is what makes the power iteration monotone.
pub fn spectral_shift(g: &LabeledGraph, alpha: f64) -> f64 {
    let counts = g.class_counts();
    let adj = g.adjacency();
    (0..g.node_count())
        .map(|u| 2.0 * adj.weighted_degree(u) + alpha * counts[g.labels()[u]] as f64)
        .fold(0.0, f64::max)
        + 1e-3
}

/// `Tr(H^T (W - D - alpha F F^T) H) + 2 Tr(H^T B)`.
pub fn gpi_objective(
    g: &LabeledGraph,
    f: &LabelIndicator,
    b: &DMatrix<f64>,
    alpha: f64,
    h: &DMatrix<f64>,
) -> f64 {
    let degrees = g.adjacency().weighted_degrees();
    let lh = apply_w_minus_d(g.adjacency(), &degrees, h);
    let fth = f.f.tr_mul(h);
    h.dot(&lh) - alpha * fth.norm_squared() + 2.0 * h.dot(b)
}

/// Maximizes `Tr(H^T (W - D - alpha F F^T) H) + 2 Tr(H^T B)` subject to
/// `H^T H = I` by generalized power iteration: `H <- polar(P)` with
/// `P = 2 (W - D) H - 2 alpha F F^T H + 2 B + 2 gamma H`.
pub fn gpi_solve_h(
    g: &LabeledGraph,
    f: &LabelIndicator,
    b: &DMatrix<f64>,
    alpha: f64,
    h0: &EmbeddingMatrix,
    cfg: &GpfbConfig,
) -> Result<GpiOutcome> {
    let n = g.node_count();
    let v = h0.0.ncols();
    if h0.0.nrows() != n || b.shape() != (n, v) {
        return Err(GuideError::Argument(format!(
            "shape mismatch: H0 {:?}, B {:?}, graph has {n} nodes",
            h0.0.shape(),
            b.shape()
        )));
    }
    let gamma = cfg.shift_gamma.unwrap_or_else(|| spectral_shift(g, alpha));
    let degrees = g.adjacency().weighted_degrees();

    let objective = |h: &DMatrix<f64>, lh: &DMatrix<f64>, fth: &DMatrix<f64>| {
        h.dot(lh) - alpha * fth.norm_squared() + 2.0 * h.dot(b)
    };

    let mut h = h0.0.clone();
    let mut lh = apply_w_minus_d(g.adjacency(), &degrees, &h);
    let mut fth = f.f.tr_mul(&h);
    let mut trace = vec![objective(&h, &lh, &fth)];
    let mut iterations = 0;
    for it in 1..=cfg.max_inner_iters {
        let mut p = &lh * 2.0;
        p -= &f.f * &fth * (2.0 * alpha);
        p += b * 2.0;
        p += &h * (2.0 * gamma);
        h = polar_factor(&p).map_err(|e| {
            GuideError::Numerical(format!("power iteration step {it}: {e}"))
        })?;
        lh = apply_w_minus_d(g.adjacency(), &degrees, &h);
        fth = f.f.tr_mul(&h);
        let obj = objective(&h, &lh, &fth);
        let prev = *trace.last().expect("trace is never empty");
        trace.push(obj);
        iterations = it;
        if relative_change(prev, obj) < cfg.tol {
            break;
        }
    }
    Ok(GpiOutcome {
        h: EmbeddingMatrix(h),
        objective_trace: trace,
        gamma,
        iterations,
    })
}

/// Leading `v` eigenvectors of `W - D`, falling back to a seeded random
/// orthonormal matrix if the iterative eigen-solver stalls.
pub fn spectral_init(g: &LabeledGraph, v: usize, seed: u64) -> EmbeddingMatrix {
    let n = g.node_count();
    if n <= DENSE_EIGEN_LIMIT {
        let lap = g.adjacency().to_dense() - DMatrix::from_diagonal(&g.adjacency().weighted_degrees());
        let all = dense_top_eigenpairs(&lap, n, Spectrum::LargestAlgebraic);
        return EmbeddingMatrix(spread_tied_block(&all.values, &all.vectors, v, seed));
    }
    let degrees = g.adjacency().weighted_degrees();
    match top_eigenpairs(
        |x| apply_w_minus_d(g.adjacency(), &degrees, x),
        n,
        v,
        Spectrum::LargestAlgebraic,
        seed,
    ) {
        Ok(pairs) => EmbeddingMatrix(pairs.vectors),
        Err(e) => {
            log::warn!("spectral initialization fell back to a random basis: {e}");
            EmbeddingMatrix(random_orthonormal(n, v, seed))
        }
    }
}

/// Takes the first `v` of the sorted eigenvectors. When the `v`-th eigenvalue
/// is tied with eigenvalues outside the selection, the chosen vectors inside
/// the tied eigenspace are arbitrary; they are replaced by a seeded random
/// orthonormal basis of that eigenspace so that no coordinate axis is favored.
fn spread_tied_block(values: &[f64], vectors: &DMatrix<f64>, v: usize, seed: u64) -> DMatrix<f64> {
    let v = v.min(values.len());
    let mut h = vectors.columns(0, v).into_owned();
    if v == 0 || v == values.len() {
        return h;
    }
    let scale = values.iter().fold(1.0f64, |m, x| m.max(x.abs()));
    let pivot = values[v - 1];
    let tied: Vec<usize> = (0..values.len())
        .filter(|&i| (values[i] - pivot).abs() <= 1e-9 * scale)
        .collect();
    let inside: Vec<usize> = tied.iter().copied().filter(|&i| i < v).collect();
    if tied.len() == inside.len() {
        return h;
    }
    let basis = DMatrix::from_fn(vectors.nrows(), tied.len(), |r, c| vectors[(r, tied[c])]);
    let mix = random_orthonormal(tied.len(), inside.len(), seed);
    let spread = basis * mix;
    for (c, &col) in inside.iter().enumerate() {
        h.set_column(col, &spread.column(c));
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::build_label_indicator;

    fn graph(n: usize, edges: &[(usize, usize)], labels: Vec<usize>) -> LabeledGraph {
        LabeledGraph::new(
            edges.iter().map(|&(u, v)| (u, v, 1.0)),
            DMatrix::zeros(n, 1),
            labels,
            None,
        )
        .unwrap()
    }

    #[test]
    fn orthonormal_b_is_reached_in_one_step() {
        let g = graph(3, &[], vec![0, 0, 0]);
        let f = build_label_indicator(&g);
        let b = DMatrix::from_row_slice(3, 2, &[1., 0., 0., 1., 0., 0.]);
        let h0 = EmbeddingMatrix(random_orthonormal(3, 2, 1));
        let cfg = GpfbConfig {
            shift_gamma: Some(0.0),
            max_inner_iters: 1,
            ..GpfbConfig::default()
        };
        let out = gpi_solve_h(&g, &f, &b, 0.0, &h0, &cfg).unwrap();
        assert!((out.h.0 - b).abs().max() < 1e-12);
    }

    #[test]
    fn shifted_identity_is_a_fixed_point() {
        let g = graph(4, &[], vec![0, 0, 1, 1]);
        let f = build_label_indicator(&g);
        let b = DMatrix::zeros(4, 2);
        let h0 = EmbeddingMatrix(random_orthonormal(4, 2, 7));
        let cfg = GpfbConfig {
            shift_gamma: Some(0.5),
            ..GpfbConfig::default()
        };
        let out = gpi_solve_h(&g, &f, &b, 0.0, &h0, &cfg).unwrap();
        assert!((out.h.0 - &h0.0).abs().max() < 1e-12);
    }

    #[test]
    fn two_components_reach_zero_cut() {
        let g = graph(4, &[(0, 1), (2, 3)], vec![0, 1, 0, 1]);
        let f = build_label_indicator(&g);
        let b = DMatrix::zeros(4, 2);
        let h0 = EmbeddingMatrix(random_orthonormal(4, 2, 3));
        let cfg = GpfbConfig {
            max_inner_iters: 500,
            tol: 1e-14,
            ..GpfbConfig::default()
        };
        let out = gpi_solve_h(&g, &f, &b, 0.0, &h0, &cfg).unwrap();
        // oracle: the top-2 eigenvalues of W - D are both 0
        let lap = g.adjacency().to_dense() - DMatrix::from_diagonal(&g.adjacency().weighted_degrees());
        let eig = dense_top_eigenpairs(&lap, 2, Spectrum::LargestAlgebraic);
        assert!(eig.values.iter().all(|v| v.abs() < 1e-12));
        let obj = *out.objective_trace.last().unwrap();
        assert!(obj.abs() < 1e-6, "objective {obj}");
        // H spans the component indicators: each column is constant on {0,1} and on {2,3}
        let h = out.h.0;
        for c in 0..2 {
            assert!((h[(0, c)] - h[(1, c)]).abs() < 1e-3);
            assert!((h[(2, c)] - h[(3, c)]).abs() < 1e-3);
        }
    }

    #[test]
    fn objective_is_monotone_with_auto_shift() {
        let g = crate::graph::generate_sbm(&crate::graph::SbmParams {
            n: 60,
            blocks: 3,
            classes: 3,
            p_in: 0.3,
            p_out: 0.05,
            feature_dim: 2,
            homophily: 1.0,
            seed: 5,
        })
        .unwrap();
        let f = build_label_indicator(&g);
        let gm = crate::graph::guided_matrices(&g, 3).unwrap();
        let alpha = 0.5;
        let b = &f.f * &gm.m_tilde * alpha;
        let h0 = EmbeddingMatrix(random_orthonormal(60, 3, 2));
        let out = gpi_solve_h(&g, &f, &b, alpha, &h0, &GpfbConfig::default()).unwrap();
        for w in out.objective_trace.windows(2) {
            assert!(w[1] >= w[0] - 1e-9, "{} -> {}", w[0], w[1]);
        }
        assert!(out.h.orthonormality_error() < 1e-8);
        let direct = gpi_objective(&g, &f, &b, alpha, &out.h.0);
        assert!((direct - out.objective_trace.last().unwrap()).abs() < 1e-9);
    }
}
