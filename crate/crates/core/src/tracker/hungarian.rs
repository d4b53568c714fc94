//! Minimum-cost rectangular assignment (shortest augmenting paths with
//! dual potentials, O(n²m)).

use crate::error::{Error, Result};

/// Solves the assignment problem on an `m x n` cost matrix given as rows.
///
/// Returns `min(m, n)` `(row, col)` pairs sorted by row, minimizing the summed
/// cost.
pub fn hungarian(cost: &[Vec<f64>]) -> Result<Vec<(usize, usize)>> {
    let m = cost.len();
    if m == 0 {
        return Ok(vec![]);
    }
    let n = cost[0].len();
    if cost.iter().any(|r| r.len() != n) {
        return Err(Error::input("cost matrix rows have unequal lengths"));
    }
    if let Some((i, j)) = cost
        .iter()
        .enumerate()
        .find_map(|(i, r)| r.iter().position(|v| !v.is_finite()).map(|j| (i, j)))
    {
        return Err(Error::input(format!("non-finite cost at ({i}, {j})")));
    }
    if n == 0 {
        return Ok(vec![]);
    }
    if m <= n {
        Ok(solve(m, n, |i, j| cost[i][j]))
    } else {
        let mut pairs: Vec<(usize, usize)> = solve(n, m, |i, j| cost[j][i])
            .into_iter()
            .map(|(c, r)| (r, c))
            .collect();
        pairs.sort_unstable();
        Ok(pairs)
    }
}

/// Core solver for `rows <= cols`.
fn solve(rows: usize, cols: usize, a: impl Fn(usize, usize) -> f64) -> Vec<(usize, usize)> {
    // 1-based arrays; index 0 of `way`/`p` is the virtual root column.
    let mut u = vec![0.0; rows + 1];
    let mut v = vec![0.0; cols + 1];
    let mut p = vec![0usize; cols + 1];
    let mut way = vec![0usize; cols + 1];
    for i in 1..=rows {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; cols + 1];
        let mut used = vec![false; cols + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=cols {
                if used[j] {
                    continue;
                }
                let cur = a(i0 - 1, j - 1) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=cols {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut pairs: Vec<(usize, usize)> = (1..=cols)
        .filter(|&j| p[j] != 0)
        .map(|j| (p[j] - 1, j - 1))
        .collect();
    pairs.sort_unstable();
    pairs
}

/// Summed cost of an assignment.
pub fn assignment_cost(cost: &[Vec<f64>], pairs: &[(usize, usize)]) -> f64 {
    pairs.iter().map(|&(i, j)| cost[i][j]).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Exhaustive minimum over injective row→column maps (rows <= cols).
    fn brute_force(cost: &[Vec<f64>]) -> f64 {
        fn rec(cost: &[Vec<f64>], row: usize, used: &mut Vec<bool>) -> f64 {
            if row == cost.len() {
                return 0.0;
            }
            let mut best = f64::INFINITY;
            for j in 0..used.len() {
                if !used[j] {
                    used[j] = true;
                    best = best.min(cost[row][j] + rec(cost, row + 1, used));
                    used[j] = false;
                }
            }
            best
        }
        let m = cost.len();
        let n = cost[0].len();
        if m <= n {
            rec(cost, 0, &mut vec![false; n])
        } else {
            let t: Vec<Vec<f64>> = (0..n)
                .map(|j| (0..m).map(|i| cost[i][j]).collect())
                .collect();
            rec(&t, 0, &mut vec![false; m])
        }
    }

    #[test]
    fn symmetric_two_by_two() {
        let c = vec![vec![1.0, 2.0], vec![2.0, 1.0]];
        let a = hungarian(&c).unwrap();
        assert_eq!(a, vec![(0, 0), (1, 1)]);
        assert_eq!(assignment_cost(&c, &a), 2.0);
    }

    #[test]
    fn singleton() {
        assert_eq!(hungarian(&[vec![5.0]]).unwrap(), vec![(0, 0)]);
    }

    #[test]
    fn rejects_nan() {
        assert!(matches!(
            hungarian(&[vec![1.0, f64::NAN]]),
            Err(Error::Input(_))
        ));
    }

    #[test]
    fn empty_inputs() {
        assert!(hungarian(&[]).unwrap().is_empty());
        assert!(hungarian(&[vec![], vec![]]).unwrap().is_empty());
    }

    proptest! {
        #[test]
        fn matches_exhaustive_search(
            m in 1usize..=6,
            n in 1usize..=6,
            seed in proptest::collection::vec(0.0f64..1.0, 36),
        ) {
            let cost: Vec<Vec<f64>> = (0..m).map(|i| (0..n).map(|j| seed[i * 6 + j]).collect()).collect();
            let a = hungarian(&cost).unwrap();
            prop_assert_eq!(a.len(), m.min(n));
            let rows: std::collections::HashSet<_> = a.iter().map(|p| p.0).collect();
            let cols: std::collections::HashSet<_> = a.iter().map(|p| p.1).collect();
            prop_assert_eq!(rows.len(), a.len());
            prop_assert_eq!(cols.len(), a.len());
            prop_assert!((assignment_cost(&cost, &a) - brute_force(&cost)).abs() < 1e-12);
        }
    }
}
