//! Independent oracles used by the integration suites. These recompute
//! expected values through different algorithms than the library code
//! they check.

use vpanel::matching::WeightMatrix;

/// Exhaustive maximum total weight over all injective row-to-column
/// assignments. Only practical for small matrices.
pub fn brute_force_max_weight(matrix: &WeightMatrix) -> f64 {
    assert!(matrix.humans <= matrix.personas, "needs m >= n");
    let mut used = vec![false; matrix.personas];
    fn recurse(matrix: &WeightMatrix, row: usize, used: &mut [bool]) -> f64 {
        if row == matrix.humans {
            return 0.0;
        }
        let mut best = f64::NEG_INFINITY;
        for col in 0..matrix.personas {
            if !used[col] {
                used[col] = true;
                let total = matrix.at(row, col) + recurse(matrix, row + 1, used);
                used[col] = false;
                if total > best {
                    best = total;
                }
            }
        }
        best
    }
    recurse(matrix, 0, &mut used)
}

/// Minimal-cost transport between two distributions given as integer
/// masses over option indices, computed by expanding each side into a
/// sorted multiset of locations and pairing by rank (the quantile
/// coupling, optimal for the |i - j| ground cost).
pub fn transport_oracle(masses_p: &[u64], masses_q: &[u64]) -> f64 {
    let total_p: u64 = masses_p.iter().sum();
    let total_q: u64 = masses_q.iter().sum();
    assert_eq!(total_p, total_q, "oracle needs equal total mass");
    assert!(total_p > 0);
    let expand = |masses: &[u64]| -> Vec<usize> {
        masses
            .iter()
            .enumerate()
            .flat_map(|(i, &m)| std::iter::repeat_n(i, m as usize))
            .collect()
    };
    let a = expand(masses_p);
    let b = expand(masses_q);
    let cost: u64 = a
        .iter()
        .zip(&b)
        .map(|(&x, &y)| (x as i64 - y as i64).unsigned_abs())
        .sum();
    cost as f64 / total_p as f64
}

#[allow(dead_code)]
pub fn masses_to_probs(masses: &[u64]) -> Vec<f64> {
    let total: u64 = masses.iter().sum();
    masses.iter().map(|&m| m as f64 / total as f64).collect()
}
