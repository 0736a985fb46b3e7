//! Exact linear assignment and the permutation-symmetrized quadratic distance
//! between particle configurations.

use thiserror::Error;

use crate::geometry::dist_sq;
use crate::system::Configuration;

/// Largest problem accepted by [`solve_assignment`].
pub const DEFAULT_MAX_SIZE: usize = 4096;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AssignmentError {
    #[error("assignment of size {size} exceeds the limit {limit}")]
    SizeLimit { size: usize, limit: usize },
    #[error("cost matrix has a non-finite entry at ({0}, {1})")]
    NonFinite(usize, usize),
    #[error("configurations differ in shape: {0}")]
    ShapeMismatch(String),
}

/// Square matrix of non-negative assignment costs, row-major.
#[derive(Clone, Debug)]
pub struct CostMatrix {
    n: usize,
    data: Vec<f64>,
}

impl CostMatrix {
    pub fn from_fn(n: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                data.push(f(i, j));
            }
        }
        CostMatrix { n, data }
    }

    /// Entry `(i, j)` is `|u_i - v_j|²`.
    pub fn squared_distances(u: &Configuration, v: &Configuration) -> Self {
        Self::from_fn(u.n(), |i, j| dist_sq(u.particle(i), v.particle(j)))
    }

    pub fn size(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Assignment {
    /// Row `i` is matched with column `permutation[i]`.
    pub permutation: Vec<usize>,
    pub total_cost: f64,
}

pub fn solve_assignment(cost: &CostMatrix) -> Result<Assignment, AssignmentError> {
    solve_assignment_with_limit(cost, DEFAULT_MAX_SIZE)
}

/// Shortest augmenting path Hungarian method with row/column potentials,
/// `O(n³)`. Ties resolve to the lowest column index.
pub fn solve_assignment_with_limit(cost: &CostMatrix, limit: usize) -> Result<Assignment, AssignmentError> {
    let n = cost.n;
    if n > limit {
        return Err(AssignmentError::SizeLimit { size: n, limit });
    }
    if let Some(k) = cost.data.iter().position(|c| !c.is_finite()) {
        return Err(AssignmentError::NonFinite(k / n, k % n));
    }
    if n == 0 {
        return Ok(Assignment { permutation: vec![], total_cost: 0.0 });
    }

    // 1-based arrays; column 0 is the virtual source.
    let mut row_pot = vec![0.0; n + 1];
    let mut col_pot = vec![0.0; n + 1];
    let mut col_owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    let mut min_slack = vec![0.0; n + 1];
    let mut used = vec![false; n + 1];

    for row in 1..=n {
        col_owner[0] = row;
        let mut j0 = 0;
        min_slack.iter_mut().for_each(|x| *x = f64::INFINITY);
        used.iter_mut().for_each(|x| *x = false);
        loop {
            used[j0] = true;
            let i0 = col_owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost.get(i0 - 1, j - 1) - row_pot[i0] - col_pot[j];
                if cur < min_slack[j] {
                    min_slack[j] = cur;
                    way[j] = j0;
                }
                if min_slack[j] < delta {
                    delta = min_slack[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    row_pot[col_owner[j]] += delta;
                    col_pot[j] -= delta;
                } else {
                    min_slack[j] -= delta;
                }
            }
            j0 = j1;
            if col_owner[j0] == 0 {
                break;
            }
        }
        // augment along the alternating path
        loop {
            let j1 = way[j0];
            col_owner[j0] = col_owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut permutation = vec![0usize; n];
    for j in 1..=n {
        permutation[col_owner[j] - 1] = j - 1;
    }
    let total_cost = permutation.iter().enumerate().map(|(i, &j)| cost.get(i, j)).sum();
    Ok(Assignment { permutation, total_cost })
}

/// `min_σ ⟨|u - v∘σ|²⟩_N^{1/2}`, the quadratic Wasserstein distance between
/// the two empirical measures.
pub fn sym_distance(u: &Configuration, v: &Configuration) -> Result<f64, AssignmentError> {
    if u.n() != v.n() || u.dim() != v.dim() {
        return Err(AssignmentError::ShapeMismatch(format!(
            "({}, {}) vs ({}, {})",
            u.n(),
            u.dim(),
            v.n(),
            v.dim()
        )));
    }
    let cost = CostMatrix::squared_distances(u, v);
    let a = solve_assignment(&cost)?;
    // Summing the matched costs in sorted order makes the result independent
    // of which argument comes first.
    let mut terms: Vec<f64> = a.permutation.iter().enumerate().map(|(i, &j)| cost.get(i, j)).collect();
    terms.sort_by(f64::total_cmp);
    Ok((terms.iter().sum::<f64>() / u.n() as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal_zeros_give_identity() {
        let c = CostMatrix::from_fn(5, |i, j| if i == j { 0.0 } else { 1.0 + (i * j) as f64 });
        let a = solve_assignment(&c).unwrap();
        assert_eq!(a.permutation, vec![0, 1, 2, 3, 4]);
        assert_eq!(a.total_cost, 0.0);
    }

    #[test]
    fn two_by_two() {
        let c = CostMatrix::from_fn(2, |i, j| if i == j { 0.0 } else { 1.0 });
        let a = solve_assignment(&c).unwrap();
        assert_eq!(a.permutation, vec![0, 1]);
        assert_eq!(a.total_cost, 0.0);
        let c = CostMatrix::from_fn(2, |i, j| if i == j { 1.0 } else { 0.0 });
        assert_eq!(solve_assignment(&c).unwrap().permutation, vec![1, 0]);
    }

    #[test]
    fn size_limit() {
        let c = CostMatrix::from_fn(4, |_, _| 0.0);
        assert_eq!(
            solve_assignment_with_limit(&c, 3),
            Err(AssignmentError::SizeLimit { size: 4, limit: 3 })
        );
    }

    #[test]
    fn rejects_nan() {
        let c = CostMatrix::from_fn(3, |i, j| if i == 1 && j == 2 { f64::NAN } else { 0.0 });
        assert_eq!(solve_assignment(&c), Err(AssignmentError::NonFinite(1, 2)));
    }

    #[test]
    fn empty_problem() {
        let a = solve_assignment(&CostMatrix::from_fn(0, |_, _| 0.0)).unwrap();
        assert!(a.permutation.is_empty());
    }
}
