//! Gated minimum-cost bipartite matching.

use crate::error::{Error, Result};

/// Dense `rows x cols` cost matrix with an admissibility mask.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
    admissible: Vec<bool>,
}

impl CostMatrix {
    pub fn empty(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            values: vec![0.0; rows * cols],
            admissible: vec![false; rows * cols],
        }
    }

    /// Row-major values, every finite entry admissible.
    pub fn from_values(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                expected: rows * cols,
                actual: values.len(),
            });
        }
        let admissible = values.iter().map(|v| v.is_finite()).collect();
        Ok(Self {
            rows,
            cols,
            values,
            admissible,
        })
    }

    /// Row-major values; an entry is admissible iff it is finite and `<= gate`.
    pub fn gated(rows: usize, cols: usize, values: Vec<f64>, gate: f64) -> Result<Self> {
        let mut m = Self::from_values(rows, cols, values)?;
        for (ok, v) in m.admissible.iter_mut().zip(&m.values) {
            *ok = *ok && *v <= gate;
        }
        Ok(m)
    }

    pub fn from_rows(rows: &[Vec<f64>], gate: f64) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != cols) {
            return Err(Error::DimensionMismatch {
                expected: cols,
                actual: bad.len(),
            });
        }
        Self::gated(rows.len(), cols, rows.concat(), gate)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.cols + j]
    }

    pub fn is_admissible(&self, i: usize, j: usize) -> bool {
        self.admissible[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, value: f64, admissible: bool) {
        let k = i * self.cols + j;
        self.values[k] = value;
        self.admissible[k] = admissible && value.is_finite();
    }

    /// Scales every value by `k`, keeping the mask.
    pub fn scaled(&self, k: f64) -> Self {
        Self {
            values: self.values.iter().map(|v| v * k).collect(),
            ..self.clone()
        }
    }

    /// Total cost of a set of pairs.
    pub fn total(&self, pairs: &[(usize, usize)]) -> f64 {
        pairs.iter().map(|&(i, j)| self.get(i, j)).sum()
    }
}

/// Solves the assignment over admissible entries.
///
/// Among all one-to-one matchings that use only admissible pairs, returns
/// one with the largest number of pairs and, among those, the smallest total
/// cost. Inadmissible entries are encoded as a cost large enough that no
/// optimal solution ever trades an admissible pair for one, and are dropped
/// from the result. Pairs are sorted by row. Ties are broken by scanning rows
/// and columns in increasing index order, so the output is a pure function
/// of the matrix.
pub fn solve_assignment(c: &CostMatrix) -> Vec<(usize, usize)> {
    let (rows, cols) = (c.rows, c.cols);
    if rows == 0 || cols == 0 || !c.admissible.iter().any(|&a| a) {
        return Vec::new();
    }

    let (lo, hi) = c
        .values
        .iter()
        .zip(&c.admissible)
        .filter(|(_, &a)| a)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (&v, _)| {
            (lo.min(v), hi.max(v))
        });
    let span = hi - lo;
    let forbidden = (span + 1.0) * (rows.min(cols) as f64 + 1.0);

    let transpose = rows > cols;
    let (n, m) = if transpose { (cols, rows) } else { (rows, cols) };
    let work: Vec<f64> = (0..n * m)
        .map(|k| {
            let (a, b) = (k / m, k % m);
            let (i, j) = if transpose { (b, a) } else { (a, b) };
            if c.is_admissible(i, j) {
                c.get(i, j) - lo
            } else {
                forbidden
            }
        })
        .collect();

    let row_to_col = shortest_augmenting_path(&work, n, m);

    let mut pairs: Vec<(usize, usize)> = row_to_col
        .into_iter()
        .enumerate()
        .map(|(a, b)| if transpose { (b, a) } else { (a, b) })
        .filter(|&(i, j)| c.is_admissible(i, j))
        .collect();
    pairs.sort_unstable();
    pairs
}

/// Hungarian algorithm with row/column potentials for `n <= m`.
/// Returns the column assigned to each row.
fn shortest_augmenting_path(cost: &[f64], n: usize, m: usize) -> Vec<usize> {
    debug_assert!(n <= m);
    let inf = f64::INFINITY;
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    // col_owner[j] is the 1-based row matched to 1-based column j; 0 = free.
    let mut col_owner = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];

    for row in 1..=n {
        col_owner[0] = row;
        let mut j0 = 0;
        let mut minv = vec![inf; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = col_owner[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let cur = cost[(i0 - 1) * m + (j - 1)] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[col_owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if col_owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            col_owner[j0] = col_owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut row_to_col = vec![0; n];
    for j in 1..=m {
        if col_owner[j] != 0 {
            row_to_col[col_owner[j] - 1] = j - 1;
        }
    }
    row_to_col
}
