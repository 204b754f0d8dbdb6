use nalgebra::DMatrix;

use super::{ModelKind, ModelParams};
use crate::graph::Adjacency;

/// `S^K X` with `S = D^{-1/2} (W + I) D^{-1/2}` and `D` the degrees of `W + I`.
pub fn sgc_propagate(adj: &Adjacency, x: &DMatrix<f64>, k: usize) -> DMatrix<f64> {
    let dinv: Vec<f64> = adj
        .weighted_degrees()
        .iter()
        .map(|d| 1.0 / (d + 1.0).sqrt())
        .collect();
    let mut y = x.clone();
    for _ in 0..k {
        let mut scaled = y.clone();
        for (r, &s) in dinv.iter().enumerate() {
            scaled.row_mut(r).scale_mut(s);
        }
        let mut next = adj.matmul(&scaled) + &scaled;
        for (r, &s) in dinv.iter().enumerate() {
            next.row_mut(r).scale_mut(s);
        }
        y = next;
    }
    y
}

/// Edge-weighted mean of neighbor rows; zero for nodes without neighbors.
pub(crate) fn mean_aggregate(adj: &Adjacency, x: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(x.nrows(), x.ncols());
    for u in 0..adj.node_count() {
        let total = adj.weighted_degree(u);
        if total == 0.0 {
            continue;
        }
        for &(v, w) in adj.neighbors(u) {
            let s = w / total;
            for c in 0..x.ncols() {
                out[(u, c)] += s * x[(v, c)];
            }
        }
    }
    out
}

/// Transpose of [`mean_aggregate`].
fn mean_aggregate_t(adj: &Adjacency, y: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(y.nrows(), y.ncols());
    for u in 0..adj.node_count() {
        let total = adj.weighted_degree(u);
        if total == 0.0 {
            continue;
        }
        for &(v, w) in adj.neighbors(u) {
            let s = w / total;
            for c in 0..y.ncols() {
                out[(v, c)] += s * y[(u, c)];
            }
        }
    }
    out
}

fn concat(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(a.nrows(), a.ncols() + b.ncols());
    out.columns_mut(0, a.ncols()).copy_from(a);
    out.columns_mut(a.ncols(), b.ncols()).copy_from(b);
    out
}

fn add_bias(mut z: DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    for c in 0..z.ncols() {
        z.column_mut(c).add_scalar_mut(b[(0, c)]);
    }
    z
}

fn column_sums(m: &DMatrix<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(1, m.ncols(), |_, c| m.column(c).sum())
}

/// Row-wise softmax.
pub(crate) fn softmax(logits: &DMatrix<f64>) -> DMatrix<f64> {
    let mut p = logits.clone();
    for mut row in p.row_iter_mut() {
        let max = row.max();
        row.apply(|x| *x = (*x - max).exp());
        let total = row.sum();
        row /= total;
    }
    p
}

/// Inputs of one forward pass. For SGC `x` is already propagated.
pub(crate) struct Batch<'a> {
    pub adj: &'a Adjacency,
    pub x: &'a DMatrix<f64>,
}

struct Trace {
    c1: DMatrix<f64>,
    z1: DMatrix<f64>,
    c2: DMatrix<f64>,
}

fn forward_traced(params: &ModelParams, batch: &Batch) -> (DMatrix<f64>, Option<Trace>) {
    let t = &params.tensors;
    match params.kind {
        ModelKind::Sgc => (add_bias(batch.x * &t[0], &t[1]), None),
        ModelKind::MeanGnn => {
            let c1 = concat(batch.x, &mean_aggregate(batch.adj, batch.x));
            let z1 = add_bias(&c1 * &t[0], &t[1]);
            let h1 = z1.map(|v| v.max(0.0));
            let c2 = concat(&h1, &mean_aggregate(batch.adj, &h1));
            let logits = add_bias(&c2 * &t[2], &t[3]);
            (logits, Some(Trace { c1, z1, c2 }))
        }
    }
}

pub(crate) fn forward(params: &ModelParams, batch: &Batch) -> DMatrix<f64> {
    forward_traced(params, batch).0
}

/// Weight-matrix positions in `ModelParams::tensors`; biases are not decayed.
pub(crate) fn is_weight(kind: ModelKind, i: usize) -> bool {
    match kind {
        ModelKind::Sgc => i == 0,
        ModelKind::MeanGnn => i == 0 || i == 2,
    }
}

/// Mean cross-entropy over nodes with a target plus `wd/2 * ||W||^2`.
pub(crate) fn loss(params: &ModelParams, batch: &Batch, targets: &[Option<usize>]) -> f64 {
    let p = softmax(&forward(params, batch));
    data_loss(&p, targets) + decay_term(params)
}

fn data_loss(p: &DMatrix<f64>, targets: &[Option<usize>]) -> f64 {
    let mut total = 0.0;
    let mut m = 0usize;
    for (r, t) in targets.iter().enumerate() {
        if let Some(c) = *t {
            total -= p[(r, c)].max(f64::MIN_POSITIVE).ln();
            m += 1;
        }
    }
    total / m.max(1) as f64
}

fn decay_term(params: &ModelParams) -> f64 {
    let wd = params.hyper.weight_decay;
    params
        .tensors
        .iter()
        .enumerate()
        .filter(|(i, _)| is_weight(params.kind, *i))
        .map(|(_, t)| 0.5 * wd * t.norm_squared())
        .sum()
}

/// Loss and its gradient with respect to every tensor.
pub(crate) fn loss_and_grad(
    params: &ModelParams,
    batch: &Batch,
    targets: &[Option<usize>],
) -> (f64, Vec<DMatrix<f64>>) {
    let (logits, trace) = forward_traced(params, batch);
    let p = softmax(&logits);
    let value = data_loss(&p, targets) + decay_term(params);

    let m = targets.iter().filter(|t| t.is_some()).count().max(1) as f64;
    let mut g = p;
    for (r, t) in targets.iter().enumerate() {
        match *t {
            Some(c) => {
                g[(r, c)] -= 1.0;
                g.row_mut(r).scale_mut(1.0 / m);
            }
            None => g.row_mut(r).fill(0.0),
        }
    }

    let t = &params.tensors;
    let mut grads = match (params.kind, trace) {
        (ModelKind::Sgc, _) => vec![batch.x.tr_mul(&g), column_sums(&g)],
        (ModelKind::MeanGnn, Some(tr)) => {
            let hidden = t[1].ncols();
            let d_w2 = tr.c2.tr_mul(&g);
            let d_b2 = column_sums(&g);
            let d_c2 = &g * t[2].transpose();
            let d_h1 = d_c2.columns(0, hidden).into_owned()
                + mean_aggregate_t(batch.adj, &d_c2.columns(hidden, hidden).into_owned());
            let d_z1 = d_h1.zip_map(&tr.z1, |d, z| if z > 0.0 { d } else { 0.0 });
            vec![tr.c1.tr_mul(&d_z1), column_sums(&d_z1), d_w2, d_b2]
        }
        (ModelKind::MeanGnn, None) => unreachable!("mean aggregation forward always records a trace"),
    };
    let wd = params.hyper.weight_decay;
    for (i, grad) in grads.iter_mut().enumerate() {
        if is_weight(params.kind, i) {
            *grad += &t[i] * wd;
        }
    }
    (value, grads)
}
