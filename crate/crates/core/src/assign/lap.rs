//! Rectangular linear assignment by shortest augmenting paths (the
//! Jonker-Volgenant scheme without its initialization heuristics).
//!
//! For an `r × c` matrix the solver matches `min(r, c)` pairs with minimum
//! total cost. Rows are augmented one at a time with a Dijkstra-like search
//! over reduced costs `cost[i][j] - u[i] - v[j]`; dual variables are updated
//! after each augmentation so reduced costs stay non-negative.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum LapError {
    #[error("cost matrix holds {found} values, expected {rows}x{cols}")]
    Shape { rows: usize, cols: usize, found: usize },
    #[error("cost matrix contains a non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl CostMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, LapError> {
        if data.len() != rows * cols {
            return Err(LapError::Shape {
                rows,
                cols,
                found: data.len(),
            });
        }
        if let Some(p) = data.iter().position(|v| !v.is_finite()) {
            return Err(LapError::NonFinite {
                row: p / cols,
                col: p % cols,
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self, LapError> {
        let data = (0..rows * cols).map(|p| f(p / cols.max(1), p % cols.max(1))).collect();
        Self::new(rows, cols, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    fn transposed(&self) -> Self {
        let data = (0..self.rows * self.cols)
            .map(|p| {
                let (c, r) = (p / self.rows, p % self.rows);
                self.get(r, c)
            })
            .collect();
        Self {
            rows: self.cols,
            cols: self.rows,
            data,
        }
    }
}

/// Matched `(row, col)` pairs sorted by row.
#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    pub pairs: Vec<(usize, usize)>,
    pub total_cost: f64,
}

impl Assignment {
    pub fn col_for_row(&self, row: usize) -> Option<usize> {
        self.pairs.iter().find(|p| p.0 == row).map(|p| p.1)
    }
}

pub fn solve_lap(costs: &CostMatrix) -> Assignment {
    if costs.rows == 0 || costs.cols == 0 {
        return Assignment {
            pairs: Vec::new(),
            total_cost: 0.0,
        };
    }
    if costs.rows > costs.cols {
        let t = solve_lap(&costs.transposed());
        let mut pairs: Vec<(usize, usize)> = t.pairs.into_iter().map(|(c, r)| (r, c)).collect();
        pairs.sort_unstable();
        return Assignment {
            pairs,
            total_cost: t.total_cost,
        };
    }

    let (n, m) = (costs.rows, costs.cols);
    let mut u = vec![0.0f64; n];
    let mut v = vec![0.0f64; m];
    let mut col4row: Vec<Option<usize>> = vec![None; n];
    let mut row4col: Vec<Option<usize>> = vec![None; m];
    let mut shortest = vec![f64::INFINITY; m];
    let mut path = vec![0usize; m];
    let mut scanned_rows = vec![false; n];
    let mut scanned_cols = vec![false; m];
    let mut remaining: Vec<usize> = Vec::with_capacity(m);

    for cur_row in 0..n {
        shortest.fill(f64::INFINITY);
        scanned_rows.fill(false);
        scanned_cols.fill(false);
        remaining.clear();
        remaining.extend((0..m).rev());

        let mut min_val = 0.0f64;
        let mut i = cur_row;
        let sink = loop {
            scanned_rows[i] = true;
            let mut lowest = f64::INFINITY;
            let mut lowest_at = 0usize;
            for (idx, &j) in remaining.iter().enumerate() {
                let r = min_val + costs.get(i, j) - u[i] - v[j];
                if r < shortest[j] {
                    path[j] = i;
                    shortest[j] = r;
                }
                // Prefer free columns on ties so augmentation ends early.
                if shortest[j] < lowest || (shortest[j] == lowest && row4col[j].is_none()) {
                    lowest = shortest[j];
                    lowest_at = idx;
                }
            }
            min_val = lowest;
            let j = remaining.swap_remove(lowest_at);
            scanned_cols[j] = true;
            match row4col[j] {
                None => break j,
                Some(r) => i = r,
            }
        };

        u[cur_row] += min_val;
        for r in 0..n {
            if scanned_rows[r] && r != cur_row {
                let c = col4row[r].expect("scanned rows other than the current one are assigned");
                u[r] += min_val - shortest[c];
            }
        }
        for c in 0..m {
            if scanned_cols[c] {
                v[c] -= min_val - shortest[c];
            }
        }

        let mut j = sink;
        loop {
            let r = path[j];
            row4col[j] = Some(r);
            let prev = col4row[r].replace(j);
            if r == cur_row {
                break;
            }
            j = prev.expect("path rows are assigned");
        }
    }

    let pairs: Vec<(usize, usize)> = col4row
        .iter()
        .enumerate()
        .map(|(r, c)| (r, c.expect("every row is assigned when rows <= cols")))
        .collect();
    let total_cost = pairs.iter().map(|&(r, c)| costs.get(r, c)).sum();
    Assignment { pairs, total_cost }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Exhaustive minimum over all injections of the smaller side into the
    /// larger.
    pub(crate) fn brute_force(c: &CostMatrix) -> f64 {
        fn rec(c: &CostMatrix, row: usize, used: &mut Vec<bool>, acc: f64, best: &mut f64) {
            if row == c.rows() {
                *best = best.min(acc);
                return;
            }
            for col in 0..c.cols() {
                if !used[col] {
                    used[col] = true;
                    rec(c, row + 1, used, acc + c.get(row, col), best);
                    used[col] = false;
                }
            }
        }
        if c.rows() == 0 || c.cols() == 0 {
            return 0.0;
        }
        let c = if c.rows() > c.cols() { c.transposed() } else { c.clone() };
        let mut best = f64::INFINITY;
        rec(&c, 0, &mut vec![false; c.cols()], 0.0, &mut best);
        best
    }

    fn check_valid(c: &CostMatrix, a: &Assignment) {
        assert_eq!(a.pairs.len(), c.rows().min(c.cols()));
        let mut rows = std::collections::HashSet::new();
        let mut cols = std::collections::HashSet::new();
        for &(r, col) in &a.pairs {
            assert!(rows.insert(r) && cols.insert(col), "not injective: {:?}", a.pairs);
        }
    }

    #[test]
    fn two_by_two() {
        let c = CostMatrix::new(2, 2, vec![1.0, 2.0, 2.0, 1.0]).unwrap();
        let a = solve_lap(&c);
        assert_eq!(a.pairs, vec![(0, 0), (1, 1)]);
        assert_eq!(a.total_cost, 2.0);
        assert_eq!(brute_force(&c), 2.0);
    }

    #[test]
    fn zero_diagonal() {
        let c = CostMatrix::from_fn(4, 4, |r, col| if r == col { 0.0 } else { 3.0 }).unwrap();
        let a = solve_lap(&c);
        assert_eq!(a.pairs, (0..4).map(|i| (i, i)).collect::<Vec<_>>());
        assert_eq!(a.total_cost, 0.0);
    }

    #[test]
    fn wide_leaves_surplus_column() {
        let c = CostMatrix::new(2, 3, vec![0.0, 5.0, 5.0, 5.0, 0.0, 5.0]).unwrap();
        let a = solve_lap(&c);
        assert_eq!(a.pairs, vec![(0, 0), (1, 1)]);
        assert_eq!(a.total_cost, 0.0);
        assert_eq!(brute_force(&c), 0.0);
        let t = solve_lap(&c.transposed());
        assert_eq!(t.pairs, vec![(0, 0), (1, 1)]);
    }

    #[test]
    fn empty_and_errors() {
        let a = solve_lap(&CostMatrix::new(0, 3, vec![]).unwrap());
        assert!(a.pairs.is_empty());
        assert!(matches!(
            CostMatrix::new(1, 2, vec![0.0, f64::NAN]),
            Err(LapError::NonFinite { row: 0, col: 1 })
        ));
        assert!(matches!(CostMatrix::new(2, 2, vec![0.0]), Err(LapError::Shape { .. })));
    }

    proptest! {
        #[test]
        fn matches_brute_force(r in 1usize..6, c in 1usize..6, vals in proptest::collection::vec(0u8..20, 36)) {
            let m = CostMatrix::from_fn(r, c, |i, j| vals[i * 6 + j] as f64).unwrap();
            let a = solve_lap(&m);
            check_valid(&m, &a);
            prop_assert_eq!(a.total_cost, brute_force(&m));
        }

        #[test]
        fn permutation_invariant_cost(
            n in 1usize..6,
            vals in proptest::collection::vec(-5.0f64..5.0, 25),
            perm_seed in any::<u64>(),
        ) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let m = CostMatrix::from_fn(n, n + 1, |i, j| vals[(i * 5 + j) % 25]).unwrap();
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(perm_seed);
            let mut rp: Vec<usize> = (0..n).collect();
            let mut cp: Vec<usize> = (0..n + 1).collect();
            rp.shuffle(&mut rng);
            cp.shuffle(&mut rng);
            let p = CostMatrix::from_fn(n, n + 1, |i, j| m.get(rp[i], cp[j])).unwrap();
            let (a, b) = (solve_lap(&m).total_cost, solve_lap(&p).total_cost);
            prop_assert!((a - b).abs() < 1e-9);
        }
    }
}
