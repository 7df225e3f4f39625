//! Rectangular min-cost assignment with forbidden (infinite) cells.
//!
//! The n x m problem is embedded in an (n+m) square problem where every row
//! and column may instead pair with a dummy at cost `U`. `U` exceeds any
//! achievable change in finite cost from matching one more pair, so the
//! solution has maximum cardinality over finite cells and, among those,
//! minimum total cost. The square problem is solved with the O(N^3)
//! shortest-augmenting-path Hungarian method using row/column potentials.

use nalgebra::DMatrix;

/// Minimum-cost one-to-one assignment over finite cells. Non-finite cells
/// (infinity or NaN) are forbidden. Pairs are returned sorted by row.
pub fn assign(cost: &DMatrix<f64>) -> Vec<(usize, usize)> {
    let (n, m) = cost.shape();
    if n == 0 || m == 0 {
        return Vec::new();
    }
    let max_abs = cost
        .iter()
        .filter(|c| c.is_finite())
        .fold(None, |acc: Option<f64>, c| Some(acc.map_or(c.abs(), |a| a.max(c.abs()))));
    let Some(max_abs) = max_abs else {
        return Vec::new();
    };
    let unmatched = (n.min(m) as f64 + 1.0) * max_abs + 1.0;
    let forbidden = 3.0 * unmatched;
    let size = n + m;
    let at = |i: usize, j: usize| -> f64 {
        match (i < n, j < m) {
            (true, true) => {
                let c = cost[(i, j)];
                if c.is_finite() {
                    c
                } else {
                    forbidden
                }
            }
            (true, false) | (false, true) => unmatched,
            (false, false) => 0.0,
        }
    };
    let col_owner = hungarian_square(size, at);
    let mut pairs: Vec<(usize, usize)> = col_owner
        .iter()
        .enumerate()
        .filter_map(|(j, &i)| (i < n && j < m && cost[(i, j)].is_finite()).then_some((i, j)))
        .collect();
    pairs.sort_unstable();
    pairs
}

/// Solves a dense square assignment; returns the row owning each column.
fn hungarian_square(size: usize, a: impl Fn(usize, usize) -> f64) -> Vec<usize> {
    // 1-based potentials; index 0 is the virtual column used to start each
    // augmentation.
    let mut u = vec![0.0; size + 1];
    let mut v = vec![0.0; size + 1];
    let mut owner = vec![0usize; size + 1];
    let mut way = vec![0usize; size + 1];
    for row in 1..=size {
        owner[0] = row;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; size + 1];
        let mut used = vec![false; size + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=size {
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
            for j in 0..=size {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    owner[1..].iter().map(|&r| r - 1).collect()
}

/// Sum of the selected cells, accumulated in ascending row order.
pub fn assignment_cost(cost: &DMatrix<f64>, pairs: &[(usize, usize)]) -> f64 {
    let mut sorted = pairs.to_vec();
    sorted.sort_unstable();
    sorted.iter().map(|&(i, j)| cost[(i, j)]).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_by_two() {
        let c = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        let p = assign(&c);
        assert_eq!(p, vec![(0, 0), (1, 1)]);
        assert_eq!(assignment_cost(&c, &p), 2.0);
    }

    #[test]
    fn single_cell_and_empty() {
        assert_eq!(assign(&DMatrix::from_element(1, 1, 5.0)), vec![(0, 0)]);
        assert!(assign(&DMatrix::from_element(2, 2, f64::INFINITY)).is_empty());
        assert!(assign(&DMatrix::<f64>::zeros(0, 3)).is_empty());
        assert!(assign(&DMatrix::<f64>::zeros(3, 0)).is_empty());
    }

    #[test]
    fn prefers_cardinality_over_cheap_single() {
        // rows 0,1 both want col 0; row 1 also reaches col 1 expensively
        let inf = f64::INFINITY;
        let c = DMatrix::from_row_slice(2, 2, &[1.0, inf, 0.5, 100.0]);
        assert_eq!(assign(&c), vec![(0, 0), (1, 1)]);
    }

    #[test]
    fn cheaper_row_wins_contested_column() {
        let inf = f64::INFINITY;
        let c = DMatrix::from_row_slice(2, 1, &[5.0, 1.0]);
        assert_eq!(assign(&c), vec![(1, 0)]);
        let c = DMatrix::from_row_slice(1, 3, &[inf, 3.0, 2.0]);
        assert_eq!(assign(&c), vec![(0, 2)]);
    }

    #[test]
    fn negative_costs() {
        let c = DMatrix::from_row_slice(2, 3, &[-1.0, -5.0, 0.0, -4.0, -3.0, 2.0]);
        let p = assign(&c);
        assert_eq!(assignment_cost(&c, &p), -9.0);
    }

    #[test]
    fn nan_is_forbidden() {
        let c = DMatrix::from_row_slice(1, 2, &[f64::NAN, 4.0]);
        assert_eq!(assign(&c), vec![(0, 1)]);
    }
}
