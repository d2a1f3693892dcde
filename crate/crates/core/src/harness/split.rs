use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::rng::{derive_seed, seeded};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Test-set size per group: `round(f·N)` in total, spread over groups by
/// largest remainder of `f·n_g` (earlier groups win ties).
pub fn test_allocation(group_sizes: &[usize], test_fraction: f64) -> Vec<usize> {
    let total: usize = group_sizes.iter().sum();
    let target = (test_fraction * total as f64).round() as usize;
    let quotas: Vec<f64> = group_sizes.iter().map(|&n| test_fraction * n as f64).collect();
    let mut alloc: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let mut order: Vec<usize> = (0..group_sizes.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = quotas[a] - quotas[a].floor();
        let fb = quotas[b] - quotas[b].floor();
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    let mut missing = target.saturating_sub(alloc.iter().sum());
    for &g in order.iter().cycle().take(order.len() * 2) {
        if missing == 0 {
            break;
        }
        if alloc[g] < group_sizes[g] {
            alloc[g] += 1;
            missing -= 1;
        }
    }
    alloc
}

/// Stratified train/test split of `groups` (index lists), seeded per group.
pub fn stratified_split(groups: &[Vec<usize>], test_fraction: f64, seed: u64) -> Result<Split> {
    let sizes: Vec<usize> = groups.iter().map(Vec::len).collect();
    let alloc = test_allocation(&sizes, test_fraction);
    let mut split = Split {
        train: Vec::new(),
        test: Vec::new(),
    };
    for (g, (members, &n_test)) in groups.iter().zip(&alloc).enumerate() {
        if n_test == 0 || n_test >= members.len() {
            return Err(Error::Config(format!(
                "test_fraction {test_fraction} leaves group {g} ({} samples) without a train or test part",
                members.len()
            )));
        }
        let mut shuffled = members.clone();
        shuffled.shuffle(&mut seeded(derive_seed(&[seed, g as u64])));
        split.test.extend_from_slice(&shuffled[..n_test]);
        split.train.extend_from_slice(&shuffled[n_test..]);
    }
    split.train.sort_unstable();
    split.test.sort_unstable();
    Ok(split)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn groups(sizes: &[usize]) -> Vec<Vec<usize>> {
        let mut next = 0;
        sizes
            .iter()
            .map(|&n| {
                let g = (next..next + n).collect();
                next += n;
                g
            })
            .collect()
    }

    #[test]
    fn default_sizes() {
        assert_eq!(test_allocation(&[200, 200, 200], 0.2), vec![40, 40, 40]);
        assert_eq!(test_allocation(&[10, 11, 12], 0.25), vec![2, 3, 3]);
    }

    #[test]
    fn empty_side_is_config_error() {
        assert!(matches!(stratified_split(&groups(&[2, 10]), 0.1, 1), Err(Error::Config(_))));
    }

    #[test]
    fn seeds_change_partition() {
        let g = groups(&[50, 50]);
        let a = stratified_split(&g, 0.2, 1).unwrap();
        let b = stratified_split(&g, 0.2, 2).unwrap();
        assert_ne!(a, b);
        assert_eq!(a, stratified_split(&g, 0.2, 1).unwrap());
    }

    proptest! {
        #[test]
        fn partitions_are_disjoint_and_sized(
            sizes in proptest::collection::vec(10usize..60, 2..5),
            f in 0.15f64..0.85,
            seed in any::<u64>()
        ) {
            let g = groups(&sizes);
            let total: usize = sizes.iter().sum();
            let s = stratified_split(&g, f, seed).unwrap();
            let mut all: Vec<usize> = s.train.iter().chain(&s.test).copied().collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..total).collect::<Vec<_>>());
            prop_assert!((s.test.len() as f64 - f * total as f64).abs() <= 1.0);
        }
    }
}
