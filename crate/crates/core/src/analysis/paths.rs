//! Path-space projections and the exact `W_2` between equal-size path sets.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SpocError};
use crate::real::Real;
use crate::simulate::PathStore;

/// Largest path set the assignment solver accepts.
pub const ASSIGNMENT_CAP: usize = 512;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectedPath {
    /// The projection evaluated on the stored grid, `points * dim` values.
    pub values: Vec<f64>,
    /// False when `k` does not divide the stored resolution and the `k`-grid
    /// nodes were snapped to the nearest stored node.
    pub exact_nodes: bool,
}

/// Piecewise-linear interpolation of `path` (stored on `points` equally
/// spaced times) through its values at the `k + 1` nodes `l / k`.
pub fn path_projection_tk(path: &[f64], dim: usize, k: usize) -> Result<ProjectedPath> {
    if k == 0 {
        return Err(SpocError::Domain("projection level k must be positive".into()));
    }
    if dim == 0 || path.len() % dim != 0 || path.len() < 2 * dim {
        return Err(SpocError::Domain("path needs at least two grid points".into()));
    }
    let points = path.len() / dim;
    let cells = points - 1;
    let exact_nodes = cells % k == 0;
    // Stored-grid index of each node.
    let nodes: Vec<usize> = (0..=k)
        .map(|l| ((l * cells) as f64 / k as f64).round() as usize)
        .collect();
    let mut values = vec![0.0; path.len()];
    for l in 0..k {
        let (a, b) = (nodes[l], nodes[l + 1]);
        let end = if l + 1 == k { b } else { b.saturating_sub(1).max(a) };
        for m in a..=end {
            let s = if b > a { (m - a) as f64 / (b - a) as f64 } else { 0.0 };
            for c in 0..dim {
                values[m * dim + c] = (1.0 - s) * path[a * dim + c] + s * path[b * dim + c];
            }
        }
    }
    Ok(ProjectedPath { values, exact_nodes })
}

/// Trapezoidal `int |x_t - y_t|^2 dt` for paths sampled at `times`.
pub fn path_l2_sq(x: &[f64], y: &[f64], dim: usize, times: &[f64]) -> f64 {
    let sq = |m: usize| -> f64 {
        (0..dim)
            .map(|c| {
                let d = x[m * dim + c] - y[m * dim + c];
                d * d
            })
            .sum()
    };
    let mut acc = 0.0;
    let mut prev = sq(0);
    for m in 1..times.len() {
        let cur = sq(m);
        acc += 0.5 * (times[m] - times[m - 1]) * (prev + cur);
        prev = cur;
    }
    acc
}

/// Minimum-cost perfect matching on a square cost matrix (row-major).
/// Returns `(col_of_row, total_cost)`. Shortest augmenting paths with
/// potentials, `O(n^3)`.
pub fn hungarian(cost: &[f64], n: usize) -> Result<(Vec<usize>, f64)> {
    if cost.len() != n * n {
        return Err(SpocError::DimensionMismatch {
            expected: n * n,
            got: cost.len(),
        });
    }
    if cost.iter().any(|c| !c.is_finite()) {
        return Err(SpocError::Domain("cost matrix has non-finite entries".into()));
    }
    // 1-based arrays; column 0 is the virtual start.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut row_of = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        row_of[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = row_of[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[row_of[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if row_of[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            row_of[j0] = row_of[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut col_of = vec![0; n];
    for j in 1..=n {
        col_of[row_of[j] - 1] = j - 1;
    }
    let total = (0..n).map(|i| cost[i * n + col_of[i]]).sum();
    Ok((col_of, total))
}

fn check_pair<T: Real>(a: &PathStore<T>, b: &PathStore<T>, times: &[f64]) -> Result<()> {
    if a.count != b.count {
        return Err(SpocError::DimensionMismatch {
            expected: a.count,
            got: b.count,
        });
    }
    if a.count == 0 {
        return Err(SpocError::Domain("empty path set".into()));
    }
    if a.dim != b.dim || a.points != b.points || times.len() != a.points {
        return Err(SpocError::DimensionMismatch {
            expected: a.points * a.dim,
            got: times.len() * b.dim,
        });
    }
    if a.count > ASSIGNMENT_CAP {
        return Err(SpocError::SizeCap {
            entries: a.count * a.count,
            cap: ASSIGNMENT_CAP * ASSIGNMENT_CAP,
        });
    }
    Ok(())
}

fn as_f64<T: Real>(p: &[T]) -> Vec<f64> {
    p.iter().map(|v| v.as_f64()).collect()
}

/// Cost matrix `c_ij = int |X^i - Y^j|^2 dt`, assembled in parallel by rows.
pub fn path_cost_matrix<T: Real>(a: &PathStore<T>, b: &PathStore<T>, times: &[f64]) -> Result<Vec<f64>> {
    check_pair(a, b, times)?;
    let n = a.count;
    let bs: Vec<Vec<f64>> = (0..n).map(|j| as_f64(b.path(j))).collect();
    Ok((0..n)
        .into_par_iter()
        .flat_map_iter(|i| {
            let x = as_f64(a.path(i));
            bs.iter()
                .map(|y| path_l2_sq(&x, y, a.dim, times))
                .collect::<Vec<_>>()
        })
        .collect())
}

/// Exact `W_2` between the uniform empirical measures on two path sets
/// under the `L^2([0, T])` path metric.
pub fn path_space_w2<T: Real>(a: &PathStore<T>, b: &PathStore<T>, times: &[f64]) -> Result<f64> {
    let c = path_cost_matrix(a, b, times)?;
    let (_, total) = hungarian(&c, a.count)?;
    Ok((total / a.count as f64).max(0.0).sqrt())
}

/// `(1/n sum_i int |X^i - Y^i|^2)^{1/2}`: the cost of pairing paths by index.
pub fn identity_pairing_w2<T: Real>(a: &PathStore<T>, b: &PathStore<T>, times: &[f64]) -> Result<f64> {
    check_pair(a, b, times)?;
    let total: f64 = (0..a.count)
        .map(|i| path_l2_sq(&as_f64(a.path(i)), &as_f64(b.path(i)), a.dim, times))
        .sum();
    Ok((total / a.count as f64).sqrt())
}
