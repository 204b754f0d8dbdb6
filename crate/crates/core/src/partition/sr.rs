use nalgebra::DMatrix;

use super::{
    check_shard_count, gpi_solve_h, normalized_degree_indicator, relative_change,
    spectral_init, stratified_partition, update_indicator, update_rotation, GpfbConfig,
};
use crate::error::{GuideError, Result};
use crate::graph::{apply_w_minus_d, build_label_indicator, guided_matrices, LabelIndicator, LabeledGraph, Partition};

#[derive(Debug, Clone)]
pub struct SrOutcome {
    pub partition: Partition,
    /// Combined objective at the start and after every outer iteration.
    pub combined_trace: Vec<f64>,
    /// Objective traces of every embedding solve.
    pub gpi_traces: Vec<Vec<f64>>,
    /// Objective traces of every indicator update.
    pub indicator_traces: Vec<Vec<f64>>,
    pub outer_iterations: usize,
}

/// Degrees regularized by one, so isolated nodes keep `(Y^T D Y)^{-1/2}` finite.
pub(crate) fn regularized_degrees(g: &LabeledGraph) -> Vec<f64> {
    g.adjacency().weighted_degrees().iter().map(|d| d + 1.0).collect()
}

/// `Tr(H^T (D - W) H) + alpha ||F^T H - M~||^2 - 2 beta Tr(R^T H^T Z(Y))`,
/// with `Z(Y) = D^{1/2} Y (Y^T D Y)^{-1/2}`. This is the rotation objective
/// with the constants `||H R||^2 = ||Z(Y)||^2 = v` dropped.
#[allow(clippy::too_many_arguments)]
pub fn sr_objective(
    g: &LabeledGraph,
    f: &LabelIndicator,
    m_tilde: &DMatrix<f64>,
    alpha: f64,
    beta: f64,
    h: &DMatrix<f64>,
    r: &DMatrix<f64>,
    y: &Partition,
    d_hat: &[f64],
) -> Result<f64> {
    let degrees = g.adjacency().weighted_degrees();
    let cut = -h.dot(&apply_w_minus_d(g.adjacency(), &degrees, h));
    let fair = (f.f.tr_mul(h) - m_tilde).norm_squared();
    let z = normalized_degree_indicator(y, d_hat)?;
    let align = (h * r).dot(&z);
    Ok(cut + alpha * fair - 2.0 * beta * align)
}

/// Fair-and-balanced partitioning with spectral rotation. Alternates the
/// rotation, embedding and indicator steps and reads the partition straight
/// off the indicator, without k-means. The indicator starts from a seeded
/// fair-and-balanced random partition.
pub fn gpfb_sr(g: &LabeledGraph, v: usize, cfg: &GpfbConfig) -> Result<Partition> {
    Ok(gpfb_sr_detailed(g, v, cfg)?.partition)
}

pub fn gpfb_sr_detailed(g: &LabeledGraph, v: usize, cfg: &GpfbConfig) -> Result<SrOutcome> {
    cfg.validate()?;
    check_shard_count(g.node_count(), v)?;
    let initial = stratified_partition(g.labels(), v, cfg.seed)?;
    gpfb_sr_from(g, initial, cfg)
}

/// Runs the alternating solver from a given starting indicator.
pub fn gpfb_sr_from(g: &LabeledGraph, initial: Partition, cfg: &GpfbConfig) -> Result<SrOutcome> {
    cfg.validate()?;
    let v = initial.num_shards();
    check_shard_count(g.node_count(), v)?;
    if initial.node_count() != g.node_count() {
        return Err(GuideError::Argument(format!(
            "initial partition covers {} nodes, graph has {}",
            initial.node_count(),
            g.node_count()
        )));
    }
    if let Some(j) = initial.first_empty_shard() {
        return Err(GuideError::Argument(format!("initial shard {j} is empty")));
    }
    let f = build_label_indicator(g);
    let gm = guided_matrices(g, v)?;
    let fair_target = &f.f * &gm.m_tilde * cfg.alpha;
    let d_hat = regularized_degrees(g);

    let mut y = initial;
    let mut h = spectral_init(g, v, cfg.seed);
    let mut r = DMatrix::<f64>::identity(v, v);
    let objective = |h: &DMatrix<f64>, r: &DMatrix<f64>, y: &Partition| {
        sr_objective(g, &f, &gm.m_tilde, cfg.alpha, cfg.beta, h, r, y, &d_hat)
    };
    let mut combined = vec![objective(h.matrix(), &r, &y)?];
    let mut gpi_traces = Vec::new();
    let mut indicator_traces = Vec::new();
    let mut outer = 0;
    for it in 1..=cfg.max_outer_iters {
        outer = it;
        r = update_rotation(h.matrix(), &d_hat, &y)?;

        let z = normalized_degree_indicator(&y, &d_hat)?;
        let b = &fair_target + z * r.transpose() * cfg.beta;
        let solved = gpi_solve_h(g, &f, &b, cfg.alpha, &h, cfg)?;
        h = solved.h;
        gpi_traces.push(solved.objective_trace);

        let step = update_indicator(h.matrix(), &r, &d_hat, &y, cfg.max_y_iters)?;
        y = step.partition;
        indicator_traces.push(step.objective_trace);

        let value = objective(h.matrix(), &r, &y)?;
        let prev = *combined.last().expect("trace is never empty");
        combined.push(value);
        if relative_change(prev, value) < cfg.tol {
            break;
        }
    }
    Ok(SrOutcome {
        partition: y,
        combined_trace: combined,
        gpi_traces,
        indicator_traces,
        outer_iterations: outer,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::partition::{gpfb_fast, partition_scores, ratio_cut};

    fn two_cliques(bridge: bool) -> LabeledGraph {
        let mut edges = Vec::new();
        for base in [0, 4] {
            for i in 0..4 {
                for j in (i + 1)..4 {
                    edges.push((base + i, base + j, 1.0));
                }
            }
        }
        if bridge {
            edges.push((3, 4, 1.0));
        }
        LabeledGraph::new(edges, DMatrix::zeros(8, 1), vec![0, 0, 1, 1, 0, 1, 0, 1], None).unwrap()
    }

    #[test]
    fn disjoint_cliques_zero_cut_and_score() {
        let g = two_cliques(false);
        let p = gpfb_sr(&g, 2, &GpfbConfig::default()).unwrap();
        assert_eq!(ratio_cut(&p, &g).unwrap(), 0.0);
        assert_eq!(partition_scores(&p, &g).unwrap().combined, 0.0);
    }

    #[test]
    fn one_outer_step_without_rotation_agrees_with_fast() {
        let g = two_cliques(true);
        let cfg = GpfbConfig {
            beta: 0.0,
            max_outer_iters: 1,
            seed: 3,
            ..GpfbConfig::default()
        };
        let sr = gpfb_sr(&g, 2, &cfg).unwrap();
        assert_eq!(sr.canonical(), gpfb_fast(&g, 2, &cfg).unwrap().canonical());
    }

    #[test]
    fn combined_objective_never_increases() {
        let g = crate::graph::generate_sbm(&crate::graph::SbmParams {
            n: 90,
            blocks: 3,
            classes: 3,
            p_in: 0.2,
            p_out: 0.03,
            feature_dim: 1,
            homophily: 0.0,
            seed: 21,
        })
        .unwrap();
        let out = gpfb_sr_detailed(&g, 3, &GpfbConfig::default()).unwrap();
        for w in out.combined_trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-8, "{} -> {}", w[0], w[1]);
        }
        assert_eq!(gpfb_sr(&g, 3, &GpfbConfig::default()).unwrap(), out.partition);
    }
}
