//! Minimum-cost bipartite assignment.

use crate::{Error, Result};

/// Cost of pairs that must not be matched. Finite so the solver stays
/// numerically well-behaved; a match at this cost is treated as "no match"
/// by the callers.
pub const FORBIDDEN: f64 = 1e9;

/// Row-major `rows × cols` cost matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl CostMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape(format!("{} entries for a {rows}×{cols} matrix", data.len())));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("cost matrix entry"));
        }
        Ok(CostMatrix { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let data = (0..rows * cols).map(|i| f(i / cols, i % cols)).collect();
        CostMatrix::new(rows, cols, data)
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    /// Column matched to each row; `None` only when `rows > cols`.
    pub row_to_col: Vec<Option<usize>>,
    pub cost: f64,
}

/// Shortest-augmenting-path solver on a square matrix (Jonker–Volgenant
/// style potentials). Returns the column of each row.
fn solve_square(n: usize, cost: impl Fn(usize, usize) -> f64) -> Vec<usize> {
    // 1-based arrays with a virtual column 0, as in the classic formulation.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
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
    let mut row_to_col = vec![0; n];
    for j in 1..=n {
        if p[j] > 0 {
            row_to_col[p[j] - 1] = j - 1;
        }
    }
    row_to_col
}

fn tolerance(reference: f64) -> f64 {
    1e-9 * reference.abs().max(1.0)
}

/// Minimum-cost assignment. Rectangular inputs are padded with zero-cost
/// dummy rows or columns. Among optimal assignments the lexicographically
/// smallest column sequence is returned (dummy columns sort last), so
/// earlier rows win ties.
pub fn hungarian(cost: &CostMatrix) -> Assignment {
    let (r, c) = (cost.rows, cost.cols);
    if r == 0 || c == 0 {
        return Assignment { row_to_col: vec![None; r], cost: 0.0 };
    }
    let n = r.max(c);
    let padded = |i: usize, j: usize| if i < r && j < c { cost.get(i, j) } else { 0.0 };
    let total = |a: &[usize]| a.iter().enumerate().map(|(i, &j)| padded(i, j)).sum::<f64>();

    let best = solve_square(n, padded);
    let optimum = total(&best);

    // Fix rows one at a time to the smallest column that still admits an
    // optimal completion.
    let mut fixed: Vec<usize> = Vec::with_capacity(n);
    for i in 0..n {
        let mut chosen = None;
        for j in 0..n {
            if fixed.contains(&j) {
                continue;
            }
            let free_rows: Vec<usize> = (i + 1..n).collect();
            let free_cols: Vec<usize> = (0..n).filter(|&k| k != j && !fixed.contains(&k)).collect();
            let sub = solve_square(free_rows.len(), |a, b| padded(free_rows[a], free_cols[b]));
            let head: f64 = fixed.iter().enumerate().map(|(a, &b)| padded(a, b)).sum::<f64>() + padded(i, j);
            let rest: f64 = sub.iter().enumerate().map(|(a, &b)| padded(free_rows[a], free_cols[b])).sum();
            if head + rest <= optimum + tolerance(optimum) {
                chosen = Some(j);
                break;
            }
        }
        // The optimal solution itself is always a candidate, so a column is
        // found; fall back to it defensively.
        fixed.push(chosen.unwrap_or(best[i]));
    }
    let row_to_col: Vec<Option<usize>> = fixed[..r].iter().map(|&j| (j < c).then_some(j)).collect();
    let cost_sum = row_to_col.iter().enumerate().filter_map(|(i, j)| j.map(|j| cost.get(i, j))).sum();
    Assignment { row_to_col, cost: cost_sum }
}
