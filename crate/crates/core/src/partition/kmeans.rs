use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{GuideError, Result};
use crate::graph::Partition;

const MAX_LLOYD_ITERS: usize = 300;

#[derive(Debug, Clone)]
pub struct KMeansOutcome {
    pub partition: Partition,
    pub centers: DMatrix<f64>,
    pub inertia: f64,
    pub iterations: usize,
}

fn sq_dist(x: &DMatrix<f64>, i: usize, c: &DMatrix<f64>, j: usize) -> f64 {
    x.row(i)
        .iter()
        .zip(c.row(j).iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum()
}

/// Sum of squared distances of each row to the mean of its cluster.
pub fn within_cluster_ss(x: &DMatrix<f64>, p: &Partition) -> f64 {
    let centers = means(x, p.assignment(), p.num_shards());
    (0..x.nrows())
        .map(|i| sq_dist(x, i, &centers, p.shard_of(i)))
        .sum()
}

fn means(x: &DMatrix<f64>, assign: &[usize], k: usize) -> DMatrix<f64> {
    let mut centers = DMatrix::zeros(k, x.ncols());
    let mut counts = vec![0usize; k];
    for (i, &c) in assign.iter().enumerate() {
        counts[c] += 1;
        for d in 0..x.ncols() {
            centers[(c, d)] += x[(i, d)];
        }
    }
    for (c, &cnt) in counts.iter().enumerate() {
        if cnt > 0 {
            for d in 0..x.ncols() {
                centers[(c, d)] /= cnt as f64;
            }
        }
    }
    centers
}

pub fn kmeans_rows(x: &DMatrix<f64>, k: usize, seed: u64) -> Result<Partition> {
    Ok(kmeans_rows_detailed(x, k, seed)?.partition)
}

/// Lloyd's algorithm on the rows of `x`.
///
/// Centers are seeded farthest-first: the row of largest norm, then
/// repeatedly the row farthest from every chosen center. The seed only
/// orders the scan, so it decides between rows at exactly equal distance.
/// A cluster that empties takes the row lying farthest from its own center
/// out of a cluster that can spare it.
pub fn kmeans_rows_detailed(x: &DMatrix<f64>, k: usize, seed: u64) -> Result<KMeansOutcome> {
    let n = x.nrows();
    if k == 0 || n < k {
        return Err(GuideError::Argument(format!("cannot form {k} clusters from {n} rows")));
    }
    let mut scan: Vec<usize> = (0..n).collect();
    scan.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));

    let mut chosen = Vec::with_capacity(k);
    let first = scan
        .iter()
        .copied()
        .fold(None::<(usize, f64)>, |best, i| {
            let norm = x.row(i).norm_squared();
            match best {
                Some((_, b)) if b >= norm => best,
                _ => Some((i, norm)),
            }
        })
        .expect("n >= 1")
        .0;
    chosen.push(first);
    let mut min_d: Vec<f64> = (0..n)
        .map(|i| (x.row(i) - x.row(first)).norm_squared())
        .collect();
    let mut is_chosen = vec![false; n];
    is_chosen[first] = true;
    while chosen.len() < k {
        let next = scan
            .iter()
            .copied()
            .filter(|&i| !is_chosen[i])
            .fold(None::<(usize, f64)>, |best, i| match best {
                Some((_, b)) if b >= min_d[i] => best,
                _ => Some((i, min_d[i])),
            })
            .expect("fewer centers than rows")
            .0;
        is_chosen[next] = true;
        chosen.push(next);
        for i in 0..n {
            let d = (x.row(i) - x.row(next)).norm_squared();
            if d < min_d[i] {
                min_d[i] = d;
            }
        }
    }
    let mut centers = DMatrix::zeros(k, x.ncols());
    for (c, &i) in chosen.iter().enumerate() {
        centers.set_row(c, &x.row(i));
    }

    let mut assign = vec![usize::MAX; n];
    let mut iterations = 0;
    for it in 1..=MAX_LLOYD_ITERS {
        iterations = it;
        let mut changed = false;
        for i in 0..n {
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for c in 0..k {
                let d = sq_dist(x, i, &centers, c);
                if d < best_d {
                    best_d = d;
                    best = c;
                }
            }
            if assign[i] != best {
                assign[i] = best;
                changed = true;
            }
        }
        centers = means(x, &assign, k);
        changed |= repair_empty(x, &mut assign, &mut centers, k);
        if !changed {
            break;
        }
    }
    let partition = Partition::new(assign, k)?;
    let inertia = (0..n)
        .map(|i| sq_dist(x, i, &centers, partition.shard_of(i)))
        .sum();
    Ok(KMeansOutcome {
        partition,
        centers,
        inertia,
        iterations,
    })
}

fn repair_empty(x: &DMatrix<f64>, assign: &mut [usize], centers: &mut DMatrix<f64>, k: usize) -> bool {
    let mut repaired = false;
    loop {
        let mut counts = vec![0usize; k];
        for &c in assign.iter() {
            counts[c] += 1;
        }
        let Some(empty) = counts.iter().position(|&c| c == 0) else {
            break;
        };
        let donor = (0..assign.len())
            .filter(|&i| counts[assign[i]] > 1)
            .fold(None::<(usize, f64)>, |best, i| {
                let d = sq_dist(x, i, centers, assign[i]);
                match best {
                    Some((_, b)) if b >= d => best,
                    _ => Some((i, d)),
                }
            })
            .expect("n >= k leaves a cluster with two rows")
            .0;
        assign[donor] = empty;
        centers.set_row(empty, &x.row(donor));
        repaired = true;
    }
    if repaired {
        let fresh = means(x, assign, k);
        centers.copy_from(&fresh);
    }
    repaired
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn separated_blobs() {
        let x = DMatrix::from_row_slice(
            6,
            2,
            &[0., 0., 0., 0., 0., 0., 10., 10., 10., 10., 10., 10.],
        );
        let p = kmeans_rows(&x, 2, 0).unwrap();
        assert_eq!(p.sizes(), vec![3, 3]);
        assert_eq!(p.shard_of(0), p.shard_of(2));
        assert_ne!(p.shard_of(0), p.shard_of(3));
    }

    #[test]
    fn one_cluster_per_point() {
        let x = DMatrix::from_fn(5, 2, |i, j| (i * 3 + j) as f64);
        let p = kmeans_rows(&x, 5, 0).unwrap();
        assert_eq!(p.sizes(), vec![1; 5]);
    }

    #[test]
    fn duplicate_rows_still_fill_every_cluster() {
        let x = DMatrix::from_element(4, 2, 1.0);
        let p = kmeans_rows(&x, 3, 0).unwrap();
        assert!(p.first_empty_shard().is_none());
    }

    #[test]
    fn beats_random_assignments() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        let x = DMatrix::from_fn(8, 2, |_, _| rng.random_range(-1.0..1.0));
        let p = kmeans_rows(&x, 2, 1).unwrap();
        let ours = within_cluster_ss(&x, &p);
        for _ in 0..50 {
            let mut assign: Vec<usize> = (0..8).map(|_| rng.random_range(0..2)).collect();
            assign[0] = 0;
            assign[1] = 1;
            let q = Partition::new(assign, 2).unwrap();
            assert!(ours <= within_cluster_ss(&x, &q) + 1e-12);
        }
    }

    #[test]
    fn too_few_rows() {
        assert!(kmeans_rows(&DMatrix::zeros(2, 2), 3, 0).is_err());
    }
}
