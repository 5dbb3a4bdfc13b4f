//! Transportation-problem network simplex.
//!
//! Solves `min sum_ij c_ij x_ij` subject to row sums `supply`, column sums
//! `demand`, `x >= 0`. The basis is a spanning tree of the bipartite
//! row/column graph with exactly `n + m - 1` cells (degenerate zero-flow cells
//! included). Potentials are recomputed on the tree every pivot, entering
//! cells are priced by most negative reduced cost, and the solver falls back
//! to first-negative (Bland-style) pricing after a run of degenerate pivots.

use std::collections::VecDeque;

use crate::error::{Result, SpocError};

#[derive(Debug, Clone, PartialEq)]
pub struct TransportPlan {
    pub cost: f64,
    /// Basic cells `(row, col, flow)`, zero-flow cells omitted.
    pub flows: Vec<(usize, usize, f64)>,
    pub pivots: usize,
}

const DEGENERATE_RUN: usize = 50;

pub fn solve_transport(supply: &[f64], demand: &[f64], cost: &[f64]) -> Result<TransportPlan> {
    let (n, m) = (supply.len(), demand.len());
    if n == 0 || m == 0 {
        return Err(SpocError::Domain("empty marginal".into()));
    }
    if cost.len() != n * m {
        return Err(SpocError::DimensionMismatch {
            expected: n * m,
            got: cost.len(),
        });
    }
    if supply.iter().chain(demand).any(|v| !(*v >= 0.0) || !v.is_finite()) {
        return Err(SpocError::Domain("marginals must be finite and non-negative".into()));
    }
    if cost.iter().any(|c| !c.is_finite()) {
        return Err(SpocError::Domain("cost matrix has non-finite entries".into()));
    }
    let ts: f64 = supply.iter().sum();
    let td: f64 = demand.iter().sum();
    if !(ts > 0.0) || ((ts - td) / ts).abs() > 1e-9 {
        return Err(SpocError::Domain(format!(
            "marginals have different mass: {ts} vs {td}"
        )));
    }
    let demand: Vec<f64> = demand.iter().map(|d| d * ts / td).collect();

    // North-west corner start: a staircase tree with n + m - 1 cells.
    let mut basis: Vec<(usize, usize)> = Vec::with_capacity(n + m - 1);
    let mut flow: Vec<f64> = Vec::with_capacity(n + m - 1);
    {
        let (mut i, mut j) = (0, 0);
        let mut ra = supply[0];
        let mut rb = demand[0];
        loop {
            let x = ra.min(rb);
            basis.push((i, j));
            flow.push(x);
            if i == n - 1 && j == m - 1 {
                break;
            }
            if (ra <= rb && i < n - 1) || j == m - 1 {
                rb -= x;
                i += 1;
                ra = supply[i];
            } else {
                ra -= x;
                j += 1;
                rb = demand[j];
            }
        }
    }
    debug_assert_eq!(basis.len(), n + m - 1);

    let cmax = cost.iter().fold(0.0f64, |a, c| a.max(c.abs()));
    let tol = 1e-13 * cmax.max(1e-300);
    let max_pivots = 100 * (n + m) * (n + m).max(10) + 10_000;

    let nodes = n + m;
    let mut u = vec![0.0; n];
    let mut v = vec![0.0; m];
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); nodes];
    let mut parent_edge = vec![usize::MAX; nodes];
    let mut seen = vec![false; nodes];
    let mut queue = VecDeque::with_capacity(nodes);
    let mut pivots = 0;
    let mut degenerate_run = 0;

    loop {
        for a in adj.iter_mut() {
            a.clear();
        }
        for (e, &(i, j)) in basis.iter().enumerate() {
            adj[i].push(e);
            adj[n + j].push(e);
        }
        // Potentials: u_0 = 0, u_i + v_j = c_ij along the tree.
        seen.iter_mut().for_each(|s| *s = false);
        queue.clear();
        queue.push_back(0);
        seen[0] = true;
        u[0] = 0.0;
        while let Some(node) = queue.pop_front() {
            for &e in &adj[node] {
                let (i, j) = basis[e];
                let c = cost[i * m + j];
                let other = if node < n { n + j } else { i };
                if seen[other] {
                    continue;
                }
                seen[other] = true;
                if other >= n {
                    v[j] = c - u[i];
                } else {
                    u[i] = c - v[j];
                }
                queue.push_back(other);
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(SpocError::Numeric("transport basis is not a spanning tree".into()));
        }

        // Pricing.
        let bland = degenerate_run >= DEGENERATE_RUN;
        let mut entering: Option<(usize, usize)> = None;
        let mut best = -tol;
        'scan: for i in 0..n {
            let row = &cost[i * m..(i + 1) * m];
            for j in 0..m {
                let rc = row[j] - u[i] - v[j];
                if rc < best {
                    entering = Some((i, j));
                    if bland {
                        break 'scan;
                    }
                    best = rc;
                }
            }
        }
        let Some((ei, ej)) = entering else { break };

        pivots += 1;
        if pivots > max_pivots {
            return Err(SpocError::Numeric(format!(
                "transport simplex exceeded {max_pivots} pivots"
            )));
        }

        // Tree path from row ei to column ej.
        seen.iter_mut().for_each(|s| *s = false);
        queue.clear();
        queue.push_back(ei);
        seen[ei] = true;
        let target = n + ej;
        while let Some(node) = queue.pop_front() {
            if node == target {
                break;
            }
            for &e in &adj[node] {
                let (i, j) = basis[e];
                let other = if node < n { n + j } else { i };
                if !seen[other] {
                    seen[other] = true;
                    parent_edge[other] = e;
                    queue.push_back(other);
                }
            }
        }
        // Walk back from the column; collect edges in order column -> row.
        let mut path = Vec::new();
        let mut node = target;
        while node != ei {
            let e = parent_edge[node];
            path.push(e);
            let (i, j) = basis[e];
            node = if node >= n { i } else { n + j };
        }
        // Adjacent to the entering cell on either end gets -theta; the cycle
        // alternates, and the path has odd length.
        let mut theta = f64::INFINITY;
        let mut leave = usize::MAX;
        for (k, &e) in path.iter().enumerate() {
            if k % 2 == 0 {
                let f = flow[e];
                if f < theta || (f == theta && e < leave) {
                    theta = f;
                    leave = e;
                }
            }
        }
        if theta <= 0.0 {
            degenerate_run += 1;
        } else {
            degenerate_run = 0;
        }
        for (k, &e) in path.iter().enumerate() {
            if k % 2 == 0 {
                flow[e] -= theta;
            } else {
                flow[e] += theta;
            }
        }
        basis[leave] = (ei, ej);
        flow[leave] = theta;
    }

    let mut total = 0.0;
    let mut flows = Vec::new();
    for (&(i, j), &f) in basis.iter().zip(&flow) {
        let f = f.max(0.0);
        if f > 0.0 {
            total += f * cost[i * m + j];
            flows.push((i, j, f));
        }
    }
    Ok(TransportPlan {
        cost: total,
        flows,
        pivots,
    })
}
