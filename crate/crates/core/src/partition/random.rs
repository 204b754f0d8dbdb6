use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{GuideError, Result};
use crate::graph::Partition;

/// Uniformly random partition by node id with sizes differing by at most one:
/// a seeded shuffle of the ids dealt round-robin to the shards.
pub fn random_partition(n: usize, v: usize, seed: u64) -> Result<Partition> {
    if v == 0 || n < v {
        return Err(GuideError::Argument(format!("cannot split {n} nodes into {v} shards")));
    }
    let mut ids: Vec<usize> = (0..n).collect();
    // Salted so that the stream differs from other generators fed the same seed.
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ 0x7261_6e64_6f6d));
    let mut assignment = vec![0; n];
    for (pos, &id) in ids.iter().enumerate() {
        assignment[id] = pos % v;
    }
    Partition::new(assignment, v)
}

/// Random partition that is as fair and balanced as the counts allow:
/// each class is shuffled and dealt round-robin, the deal continuing from
/// one class to the next, so shard sizes and every shard's class counts
/// differ by at most one.
pub fn stratified_partition(labels: &[usize], v: usize, seed: u64) -> Result<Partition> {
    let n = labels.len();
    if v == 0 || n < v {
        return Err(GuideError::Argument(format!("cannot split {n} nodes into {v} shards")));
    }
    let h = labels.iter().max().map_or(0, |m| m + 1);
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); h];
    for (i, &y) in labels.iter().enumerate() {
        by_class[y].push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x7374_7261_7469_6679);
    let mut assignment = vec![0; n];
    let mut pos = 0;
    for members in &mut by_class {
        members.shuffle(&mut rng);
        for &i in members.iter() {
            assignment[i] = pos % v;
            pos += 1;
        }
    }
    Partition::new(assignment, v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::partition::fairness_score;

    #[test]
    fn sizes_forced() {
        assert_eq!(random_partition(8, 2, 3).unwrap().sizes(), vec![4, 4]);
        let mut sizes = random_partition(7, 2, 3).unwrap().sizes();
        sizes.sort();
        assert_eq!(sizes, vec![3, 4]);
        assert_eq!(random_partition(7, 2, 3).unwrap(), random_partition(7, 2, 3).unwrap());
    }

    #[test]
    fn stratified_is_fair_and_balanced() {
        use crate::partition::balance_score;
        let labels: Vec<usize> = (0..24).map(|i| i % 3).collect();
        let p = stratified_partition(&labels, 4, 9).unwrap();
        assert_eq!(balance_score(&p), 0.0);
        assert!(fairness_score(&p, &labels, 3).unwrap().abs() < 1e-15);
        assert_eq!(p, stratified_partition(&labels, 4, 9).unwrap());
        assert_ne!(p, stratified_partition(&labels, 4, 10).unwrap());
    }

    #[test]
    fn fairness_vanishes_for_large_n() {
        let labels: Vec<usize> = (0..1000).map(|i| i % 4).collect();
        let mean: f64 = (0..100)
            .map(|seed| {
                let p = random_partition(1000, 4, seed).unwrap();
                fairness_score(&p, &labels, 4).unwrap().abs()
            })
            .sum::<f64>()
            / 100.0;
        assert!(mean < 0.1, "mean |fairness| {mean}");
    }
}
