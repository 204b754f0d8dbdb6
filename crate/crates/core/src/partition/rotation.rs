use nalgebra::DMatrix;

use crate::error::{GuideError, Result};
use crate::graph::Partition;

fn check_degrees(d: &[f64], n: usize) -> Result<()> {
    if d.len() != n {
        return Err(GuideError::Argument(format!("{} degrees for {n} nodes", d.len())));
    }
    if let Some(i) = d.iter().position(|&x| !(x > 0.0 && x.is_finite())) {
        return Err(GuideError::Argument(format!(
            "degree of node {i} must be positive, got {}",
            d[i]
        )));
    }
    Ok(())
}

/// `D^{1/2} Y (Y^T D Y)^{-1/2}` for a diagonal `D` given by `d`. Its columns
/// are orthonormal, so it lives on the same Stiefel manifold as the embedding.
pub fn normalized_degree_indicator(p: &Partition, d: &[f64]) -> Result<DMatrix<f64>> {
    let n = p.node_count();
    check_degrees(d, n)?;
    let mut mass = vec![0.0; p.num_shards()];
    for (i, &s) in p.assignment().iter().enumerate() {
        mass[s] += d[i];
    }
    if let Some(j) = mass.iter().position(|&m| m == 0.0) {
        return Err(GuideError::Argument(format!("shard {j} is empty")));
    }
    let mut z = DMatrix::zeros(n, p.num_shards());
    for (i, &s) in p.assignment().iter().enumerate() {
        z[(i, s)] = (d[i] / mass[s]).sqrt();
    }
    Ok(z)
}

/// Closed-form orthogonal Procrustes step: with
/// `T = H^T D^{1/2} Y (Y^T D Y)^{-1/2} = U S V^T`, returns `R = U V^T`,
/// the rotation minimizing `|| H R - D^{1/2} Y (Y^T D Y)^{-1/2} ||`.
pub fn update_rotation(h: &DMatrix<f64>, d: &[f64], y: &Partition) -> Result<DMatrix<f64>> {
    if h.nrows() != y.node_count() || h.ncols() != y.num_shards() {
        return Err(GuideError::Argument(format!(
            "embedding {:?} does not match {} nodes x {} shards",
            h.shape(),
            y.node_count(),
            y.num_shards()
        )));
    }
    let z = normalized_degree_indicator(y, d)?;
    let t = h.tr_mul(&z);
    if t.iter().any(|x| !x.is_finite()) {
        return Err(GuideError::Numerical("non-finite rotation target".into()));
    }
    let svd = t.svd(true, true);
    Ok(svd.u.expect("requested") * svd.v_t.expect("requested"))
}

/// `Tr(R^T H^T D^{1/2} Y (Y^T D Y)^{-1/2})`.
pub fn indicator_objective(h: &DMatrix<f64>, r: &DMatrix<f64>, d: &[f64], p: &Partition) -> Result<f64> {
    let z = normalized_degree_indicator(p, d)?;
    Ok((h * r).dot(&z))
}

#[derive(Debug, Clone)]
pub struct IndicatorOutcome {
    pub partition: Partition,
    /// Objective before the first sweep and after every sweep.
    pub objective_trace: Vec<f64>,
    pub sweeps: usize,
}

/// Coordinate ascent on the discrete indicator.
///
/// With `h~ = D^{1/2} H R`, each shard keeps `a_j = sum of h~_ij` and
/// `b_j = sum of d_i` over its members, so the objective is
/// `sum_j a_j / sqrt(b_j)`. Every node in turn moves to the shard with the
/// largest marginal value `c_j`; ties stay put, then go to the lowest index.
/// A move that would empty a shard is vetoed.
pub fn update_indicator(
    h: &DMatrix<f64>,
    r: &DMatrix<f64>,
    d: &[f64],
    y0: &Partition,
    max_sweeps: usize,
) -> Result<IndicatorOutcome> {
    let n = y0.node_count();
    let v = y0.num_shards();
    if h.shape() != (n, v) || r.shape() != (v, v) {
        return Err(GuideError::Argument(format!(
            "shapes H {:?}, R {:?} do not fit {n} nodes x {v} shards",
            h.shape(),
            r.shape()
        )));
    }
    check_degrees(d, n)?;
    if let Some(j) = y0.first_empty_shard() {
        return Err(GuideError::Argument(format!("initial indicator leaves shard {j} empty")));
    }
    let mut ht = h * r;
    for i in 0..n {
        let s = d[i].sqrt();
        for j in 0..v {
            ht[(i, j)] *= s;
        }
    }

    let mut assign = y0.assignment().to_vec();
    let objective = |assign: &[usize]| -> (Vec<f64>, Vec<f64>, f64) {
        let mut a = vec![0.0; v];
        let mut b = vec![0.0; v];
        for (i, &s) in assign.iter().enumerate() {
            a[s] += ht[(i, s)];
            b[s] += d[i];
        }
        let obj = a.iter().zip(&b).map(|(a, b)| a / b.sqrt()).sum();
        (a, b, obj)
    };

    let (_, _, obj0) = objective(&assign);
    let mut trace = vec![obj0];
    let mut sizes = y0.sizes();
    let mut sweeps = 0;
    for sweep in 1..=max_sweeps {
        sweeps = sweep;
        let (mut a, mut b, _) = objective(&assign);
        let mut moved = false;
        for i in 0..n {
            let cur = assign[i];
            if sizes[cur] == 1 {
                continue;
            }
            let di = d[i];
            let gain = |j: usize| -> f64 {
                let hij = ht[(i, j)];
                if j == cur {
                    a[j] / b[j].sqrt() - (a[j] - hij) / (b[j] - di).sqrt()
                } else {
                    (a[j] + hij) / (b[j] + di).sqrt() - a[j] / b[j].sqrt()
                }
            };
            let mut best = cur;
            let mut best_c = gain(cur);
            for j in 0..v {
                if j == cur {
                    continue;
                }
                let c = gain(j);
                if c > best_c + 1e-14 * (1.0 + best_c.abs()) {
                    best = j;
                    best_c = c;
                }
            }
            if best != cur {
                a[cur] -= ht[(i, cur)];
                b[cur] -= di;
                a[best] += ht[(i, best)];
                b[best] += di;
                sizes[cur] -= 1;
                sizes[best] += 1;
                assign[i] = best;
                moved = true;
            }
        }
        let (_, _, obj) = objective(&assign);
        trace.push(obj);
        if !moved {
            break;
        }
    }
    Ok(IndicatorOutcome {
        partition: Partition::new(assign, v)?,
        objective_trace: trace,
        sweeps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::random_orthonormal;

    #[test]
    fn aligned_embedding_gives_identity_rotation() {
        let p = Partition::new(vec![0, 0, 1, 1, 1, 2], 3).unwrap();
        let d = vec![1.0, 2.0, 1.0, 3.0, 1.0, 2.0];
        let z = normalized_degree_indicator(&p, &d).unwrap();
        // columns of Z are orthogonal; normalize them to get an orthonormal H
        let mut h = z.clone();
        for mut c in h.column_iter_mut() {
            let norm = c.norm();
            c /= norm;
        }
        let r = update_rotation(&h, &d, &p).unwrap();
        assert!((r - DMatrix::<f64>::identity(3, 3)).abs().max() < 1e-12);
    }

    #[test]
    fn permuted_embedding_recovers_permutation() {
        let p = Partition::new(vec![0, 1, 1, 2, 2, 2], 3).unwrap();
        let d = vec![1.0; 6];
        let z = normalized_degree_indicator(&p, &d).unwrap();
        // H = Z P with P mapping column 0->1, 1->2, 2->0
        let perm = DMatrix::from_row_slice(3, 3, &[0., 1., 0., 0., 0., 1., 1., 0., 0.]);
        let h = &z * &perm;
        let r = update_rotation(&h, &d, &p).unwrap();
        assert!((&r - perm.transpose()).abs().max() < 1e-12);
        assert!((&h * &r - z).abs().max() < 1e-12);
        let gram = r.transpose() * &r;
        assert!((gram - DMatrix::<f64>::identity(3, 3)).abs().max() < 1e-10);
    }

    #[test]
    fn rotation_never_worse_than_identity() {
        let p = Partition::new(vec![0, 1, 0, 1, 1, 0, 1], 2).unwrap();
        let d = vec![2.0, 1.0, 3.0, 1.0, 2.0, 1.0, 4.0];
        let h = random_orthonormal(7, 2, 9);
        let z = normalized_degree_indicator(&p, &d).unwrap();
        let r = update_rotation(&h, &d, &p).unwrap();
        let with_r = (&h * &r - &z).norm_squared();
        let with_i = (&h - &z).norm_squared();
        assert!(with_r <= with_i + 1e-12);
    }

    #[test]
    fn fixed_point_and_identity_cases() {
        let p = Partition::new(vec![0, 1], 2).unwrap();
        let h = DMatrix::<f64>::identity(2, 2);
        let out = update_indicator(&h, &h, &[1.0, 1.0], &p, 10).unwrap();
        assert_eq!(out.partition, p);

        let p = Partition::new(vec![0, 0, 1, 1, 2, 2], 3).unwrap();
        let d = vec![1.0; 6];
        let z = normalized_degree_indicator(&p, &d).unwrap();
        let out = update_indicator(&z, &DMatrix::identity(3, 3), &d, &p, 10).unwrap();
        assert_eq!(out.partition, p);
        assert_eq!(out.sweeps, 1);
    }

    #[test]
    fn vetoes_moves_that_empty_a_shard() {
        // node 1 strongly prefers shard 0 but is the only member of shard 1
        let h = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 1.0, 0.0, 0.5, 0.0]);
        let p = Partition::new(vec![0, 1, 0], 2).unwrap();
        let out = update_indicator(&h, &DMatrix::identity(2, 2), &[1.0; 3], &p, 10).unwrap();
        assert!(out.partition.first_empty_shard().is_none());
    }

    #[test]
    fn rejects_empty_initial_shard_and_bad_degrees() {
        let h = DMatrix::<f64>::identity(2, 2);
        let p = Partition::new(vec![0, 0], 2).unwrap();
        assert!(update_indicator(&h, &h, &[1.0, 1.0], &p, 5).is_err());
        let p = Partition::new(vec![0, 1], 2).unwrap();
        assert!(update_indicator(&h, &h, &[0.0, 1.0], &p, 5).is_err());
    }

    #[test]
    fn improves_on_start_and_matches_brute_force_objective() {
        let n = 6;
        let h = random_orthonormal(n, 2, 17);
        let r = DMatrix::<f64>::identity(2, 2);
        let d = vec![1.0; n];
        // brute force over every bipartition with both shards non-empty
        let mut all = Vec::new();
        for mask in 1u32..(1 << n) - 1 {
            let assign: Vec<usize> = (0..n).map(|i| ((mask >> i) & 1) as usize).collect();
            let p = Partition::new(assign, 2).unwrap();
            let obj: f64 = {
                let y = p.indicator();
                let yty = y.transpose() * &y;
                let scale = DMatrix::from_diagonal(&yty.diagonal().map(|x| 1.0 / x.sqrt()));
                (r.transpose() * h.transpose() * &y * scale).trace()
            };
            all.push((p, obj));
        }
        for (start, start_obj) in &all {
            let out = update_indicator(&h, &r, &d, start, 50).unwrap();
            let got = indicator_objective(&h, &r, &d, &out.partition).unwrap();
            assert!(got >= start_obj - 1e-9);
            assert!((out.objective_trace[0] - start_obj).abs() < 1e-12);
            let enumerated = all.iter().find(|(p, _)| *p == out.partition).unwrap().1;
            assert!((enumerated - got).abs() < 1e-12);
            for w in out.objective_trace.windows(2) {
                assert!(w[1] >= w[0] - 1e-9);
            }
        }
    }
}
