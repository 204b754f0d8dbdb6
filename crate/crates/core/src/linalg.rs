//! Small dense and iterative linear-algebra kernels shared by the solvers.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{GuideError, Result};

/// Which end of the spectrum [`top_eigenpairs`] returns.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Spectrum {
    LargestAlgebraic,
    LargestMagnitude,
}

/// Eigenpairs sorted by the requested [`Spectrum`] order.
#[derive(Debug, Clone)]
pub struct EigenPairs {
    pub values: Vec<f64>,
    pub vectors: DMatrix<f64>,
}

/// Orthogonal polar factor `U V^T` of the reduced SVD `P = U S V^T`.
///
/// Fails when `P` is numerically rank deficient, since the factor is then not
/// unique.
pub fn polar_factor(p: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if p.iter().any(|x| !x.is_finite()) {
        return Err(GuideError::Numerical("matrix has non-finite entries".into()));
    }
    let svd = p.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smax > 0.0) || smin <= 1e-13 * smax {
        return Err(GuideError::Numerical(format!(
            "rank-deficient matrix (singular values in [{smin:e}, {smax:e}])"
        )));
    }
    let u = svd.u.expect("left singular vectors requested");
    let v_t = svd.v_t.expect("right singular vectors requested");
    Ok(u * v_t)
}

/// Gaussian `n x k` matrix orthonormalized by QR, seeded.
pub fn random_orthonormal(n: usize, k: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = DMatrix::from_fn(n, k, |_, _| StandardNormal.sample(&mut rng));
    g.qr().q()
}

fn order(values: &[f64], which: Spectrum) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| {
        let (x, y) = (values[a], values[b]);
        let primary = match which {
            Spectrum::LargestAlgebraic => y.partial_cmp(&x),
            Spectrum::LargestMagnitude => y.abs().partial_cmp(&x.abs()),
        };
        primary
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(y.partial_cmp(&x).unwrap_or(std::cmp::Ordering::Equal))
            .then(a.cmp(&b))
    });
    idx
}

/// Dense symmetric eigen-decomposition truncated to `k` pairs.
pub fn dense_top_eigenpairs(m: &DMatrix<f64>, k: usize, which: Spectrum) -> EigenPairs {
    let n = m.nrows();
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let values: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    let idx = order(&values, which);
    let k = k.min(n);
    let mut vectors = DMatrix::zeros(n, k);
    let mut out = Vec::with_capacity(k);
    for (c, &i) in idx.iter().take(k).enumerate() {
        vectors.set_column(c, &eig.eigenvectors.column(i));
        out.push(values[i]);
    }
    EigenPairs { values: out, vectors }
}

/// Orthogonalizes the columns of `block` against `basis` (two passes) and
/// among themselves, dropping columns that collapse.
fn orthogonalize(basis: &DMatrix<f64>, block: DMatrix<f64>, drop_tol: f64) -> DMatrix<f64> {
    let mut cols: Vec<nalgebra::DVector<f64>> = Vec::new();
    for c in 0..block.ncols() {
        let mut x = block.column(c).into_owned();
        let norm0 = x.norm();
        if norm0 == 0.0 {
            continue;
        }
        for _ in 0..2 {
            if basis.ncols() > 0 {
                let coeffs = basis.tr_mul(&x);
                x -= basis * coeffs;
            }
            for q in &cols {
                let d = q.dot(&x);
                x -= q * d;
            }
        }
        let norm = x.norm();
        if norm > drop_tol * norm0.max(1.0) {
            cols.push(x / norm);
        }
    }
    if cols.is_empty() {
        DMatrix::zeros(block.nrows(), 0)
    } else {
        DMatrix::from_columns(&cols)
    }
}

fn hcat(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    if a.ncols() == 0 {
        return b.clone();
    }
    let mut out = DMatrix::zeros(a.nrows(), a.ncols() + b.ncols());
    out.columns_mut(0, a.ncols()).copy_from(a);
    out.columns_mut(a.ncols(), b.ncols()).copy_from(b);
    out
}

/// `k` extreme eigenpairs of the symmetric operator `apply` of size `n`, by a
/// restarted block Krylov method with Rayleigh-Ritz extraction.
///
/// The block width is at least `k`, so eigenvalues of multiplicity up to `k`
/// are resolved. Deterministic for a fixed `seed`.
pub fn top_eigenpairs<F>(apply: F, n: usize, k: usize, which: Spectrum, seed: u64) -> Result<EigenPairs>
where
    F: Fn(&DMatrix<f64>) -> DMatrix<f64>,
{
    let k = k.min(n);
    if k == 0 {
        return Ok(EigenPairs {
            values: Vec::new(),
            vectors: DMatrix::zeros(n, 0),
        });
    }
    let block = (k + 2).min(n);
    let max_basis = n.min((12 * block).max(60));
    let max_restarts = 400;
    let tol = 1e-9;

    let mut start = random_orthonormal(n, block, seed);
    let mut fresh_seed = seed.wrapping_add(1);
    for _ in 0..max_restarts {
        let mut q = DMatrix::<f64>::zeros(n, 0);
        let mut aq = DMatrix::<f64>::zeros(n, 0);
        let mut next = start.clone();
        loop {
            let mut new = orthogonalize(&q, next, 1e-10);
            if new.ncols() == 0 {
                // invariant subspace reached; continue from a fresh direction
                let candidate = random_orthonormal(n, block, fresh_seed);
                fresh_seed = fresh_seed.wrapping_add(1);
                new = orthogonalize(&q, candidate, 1e-10);
                if new.ncols() == 0 {
                    break;
                }
            }
            let room = max_basis - q.ncols();
            if new.ncols() > room {
                new = new.columns(0, room).into_owned();
            }
            let a_new = apply(&new);
            q = hcat(&q, &new);
            aq = hcat(&aq, &a_new);
            if q.ncols() >= max_basis || q.ncols() == n {
                break;
            }
            next = a_new;
        }

        let t = q.tr_mul(&aq);
        let pairs = dense_top_eigenpairs(&t, q.ncols(), which);
        let scale = pairs.values.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        let keep = block.min(pairs.values.len());
        let s = pairs.vectors.columns(0, keep).into_owned();
        let ritz = &q * &s;
        let a_ritz = &aq * &s;
        let mut converged = true;
        for i in 0..k.min(keep) {
            let r = a_ritz.column(i) - ritz.column(i) * pairs.values[i];
            if r.norm() > tol * scale {
                converged = false;
                break;
            }
        }
        if converged || q.ncols() == n {
            return Ok(EigenPairs {
                values: pairs.values[..k].to_vec(),
                vectors: ritz.columns(0, k).into_owned(),
            });
        }
        start = ritz;
    }
    Err(GuideError::Numerical(format!(
        "eigen-solver did not converge for {k} pairs of a {n}x{n} operator"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polar_of_orthonormal_is_identity_map() {
        let b = DMatrix::from_row_slice(3, 2, &[1., 0., 0., 1., 0., 0.]);
        let h = polar_factor(&b).unwrap();
        assert!((h - b).abs().max() < 1e-14);
    }

    #[test]
    fn polar_rejects_rank_deficient() {
        let p = DMatrix::from_row_slice(3, 2, &[1., 1., 1., 1., 0., 0.]);
        assert!(polar_factor(&p).is_err());
    }

    #[test]
    fn krylov_matches_dense() {
        let n = 80;
        let a = DMatrix::from_fn(n, n, |i, j| {
            let (i, j) = (i.min(j), i.max(j));
            (((i * 31 + j * 17) % 13) as f64 - 6.0) / 7.0
        });
        for which in [Spectrum::LargestAlgebraic, Spectrum::LargestMagnitude] {
            let dense = dense_top_eigenpairs(&a, 4, which);
            let it = top_eigenpairs(|x| &a * x, n, 4, which, 5).unwrap();
            for (x, y) in dense.values.iter().zip(&it.values) {
                assert!((x - y).abs() < 1e-7, "{which:?}: {x} vs {y}");
            }
        }
    }

    #[test]
    fn krylov_resolves_multiplicity() {
        // three isolated 2-node paths: eigenvalue 1 with multiplicity 3
        let n = 6;
        let mut a = DMatrix::zeros(n, n);
        for p in 0..3 {
            a[(2 * p, 2 * p + 1)] = 1.0;
            a[(2 * p + 1, 2 * p)] = 1.0;
        }
        let it = top_eigenpairs(|x| &a * x, n, 3, Spectrum::LargestAlgebraic, 1).unwrap();
        for v in &it.values {
            assert!((v - 1.0).abs() < 1e-9);
        }
    }
}
