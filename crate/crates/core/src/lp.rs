//! Dense two-phase simplex for small problems in standard form
//! `min c·x  s.t.  A x = b, x ≥ 0`, exact or float.
//!
//! Bland's rule, so exact solves terminate on degenerate problems; float
//! solves prefer large pivots on near-ties and may hit the iteration limit
//! instead. Duals come from re-solving `Bᵀy = c_B` at the final basis.

use crate::numeric::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution<S> {
    pub x: Vec<S>,
    pub objective: S,
    /// `y` with `c - Aᵀy ≥ 0` at the optimum.
    pub duals: Vec<S>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LpOutcome<S> {
    Optimal(LpSolution<S>),
    Infeasible,
    Unbounded,
    IterationLimit,
}

impl<S> LpOutcome<S> {
    pub fn is_feasible(&self) -> bool {
        matches!(self, LpOutcome::Optimal(_) | LpOutcome::Unbounded)
    }

    pub fn optimal(self) -> Option<LpSolution<S>> {
        match self {
            LpOutcome::Optimal(s) => Some(s),
            _ => None,
        }
    }
}

struct Tableau<S> {
    rows: Vec<Vec<S>>,
    /// Reduced costs; the last entry is minus the objective value.
    z: Vec<S>,
    basis: Vec<usize>,
    n: usize,
    m: usize,
    eps: S,
}

impl<S: Scalar> Tableau<S> {
    fn rhs(&self, i: usize) -> &S {
        &self.rows[i][self.n + self.m]
    }

    fn price(&mut self, cost: &[S]) {
        let width = self.n + self.m + 1;
        let mut z: Vec<S> = (0..width)
            .map(|j| cost.get(j).cloned().unwrap_or_else(S::zero))
            .collect();
        for (i, row) in self.rows.iter().enumerate() {
            let cb = &cost[self.basis[i]];
            if cb.is_zero() {
                continue;
            }
            for (zj, t) in z.iter_mut().zip(row) {
                if !t.is_zero() {
                    *zj = zj.clone() - cb.clone() * t.clone();
                }
            }
        }
        self.z = z;
    }

    fn pivot(&mut self, r: usize, col: usize) {
        let piv = self.rows[r][col].clone();
        for v in self.rows[r].iter_mut() {
            if !v.is_zero() {
                *v = v.clone() / piv.clone();
            }
        }
        let pivot_row = std::mem::take(&mut self.rows[r]);
        let eliminate = |row: &mut Vec<S>| {
            let f = row[col].clone();
            if f.is_zero() {
                return;
            }
            for (v, p) in row.iter_mut().zip(&pivot_row) {
                if !p.is_zero() {
                    *v = v.clone() - f.clone() * p.clone();
                }
            }
        };
        for (i, row) in self.rows.iter_mut().enumerate() {
            if i != r {
                eliminate(row);
            }
        }
        eliminate(&mut self.z);
        self.rows[r] = pivot_row;
        self.basis[r] = col;
    }

    /// Runs simplex iterations over the allowed columns `0..allowed`.
    fn run(&mut self, allowed: usize, limit: usize) -> Option<bool> {
        let neg_eps = -self.eps.clone();
        for _ in 0..limit {
            let Some(col) = (0..allowed).find(|&j| self.z[j] < neg_eps) else {
                return Some(true);
            };
            let mut best: Option<(usize, S)> = None;
            for i in 0..self.m {
                let a = &self.rows[i][col];
                if *a <= self.eps {
                    continue;
                }
                let ratio = self.rhs(i).clone() / a.clone();
                // Exact: Bland's smallest-index rule on ties. Float: near-ties
                // (within eps) go to the larger pivot element first.
                let better = match &best {
                    None => true,
                    Some((bi, br)) if S::EXACT => {
                        ratio < *br || (ratio == *br && self.basis[i] < self.basis[*bi])
                    }
                    Some((bi, br)) => {
                        let slack = self.eps.clone();
                        if ratio.clone() + slack.clone() < *br {
                            true
                        } else if br.clone() + slack < ratio {
                            false
                        } else {
                            let cur = &self.rows[*bi][col];
                            *a > *cur || (*a == *cur && self.basis[i] < self.basis[*bi])
                        }
                    }
                };
                if better {
                    best = Some((i, ratio));
                }
            }
            match best {
                Some((r, _)) => self.pivot(r, col),
                None => return Some(false),
            }
        }
        None
    }
}

/// Solves `min c·x, A x = b, x ≥ 0`. `tol` is ignored in exact mode.
pub fn solve<S: Scalar>(a: &[Vec<S>], b: &[S], c: &[S], tol: f64) -> LpOutcome<S> {
    let m = a.len();
    let n = c.len();
    assert_eq!(b.len(), m, "rhs length");
    assert!(a.iter().all(|r| r.len() == n), "row length");

    let mut signs = Vec::with_capacity(m);
    let rows: Vec<Vec<S>> = a
        .iter()
        .zip(b)
        .enumerate()
        .map(|(i, (row, bi))| {
            let flip = bi.is_negative();
            signs.push(flip);
            let mut r: Vec<S> = row
                .iter()
                .map(|v| if flip { -v.clone() } else { v.clone() })
                .collect();
            r.extend((0..m).map(|k| if k == i { S::one() } else { S::zero() }));
            r.push(if flip { -bi.clone() } else { bi.clone() });
            r
        })
        .collect();

    let mut t = Tableau {
        rows,
        z: Vec::new(),
        basis: (n..n + m).collect(),
        n,
        m,
        eps: S::tolerance(tol),
    };
    let limit = 50 * (n + m) + 1000;

    let phase_one: Vec<S> = (0..n + m)
        .map(|j| if j < n { S::zero() } else { S::one() })
        .collect();
    t.price(&phase_one);
    if t.run(n + m, limit).is_none() {
        return LpOutcome::IterationLimit;
    }
    let infeasibility = -t.z[n + m].clone();
    if infeasibility > t.eps {
        return LpOutcome::Infeasible;
    }

    // Move remaining artificials out of the basis where possible; rows where
    // that fails are redundant and keep a zero-valued artificial.
    for i in 0..m {
        if t.basis[i] >= n {
            if let Some(j) = (0..n).find(|&j| t.rows[i][j].abs() > t.eps) {
                t.pivot(i, j);
            }
        }
    }

    let phase_two: Vec<S> = (0..n + m)
        .map(|j| if j < n { c[j].clone() } else { S::zero() })
        .collect();
    t.price(&phase_two);
    match t.run(n, limit) {
        None => return LpOutcome::IterationLimit,
        Some(false) => return LpOutcome::Unbounded,
        Some(true) => {}
    }

    let mut x = vec![S::zero(); n];
    for (i, &bj) in t.basis.iter().enumerate() {
        if bj < n {
            x[bj] = t.rhs(i).clone();
        }
    }
    let objective = -t.z[n + m].clone();
    let duals = basis_duals(a, c, &t.basis, n).unwrap_or_else(|| {
        (0..m)
            .map(|k| {
                let y = -t.z[n + k].clone();
                if signs[k] {
                    -y
                } else {
                    y
                }
            })
            .collect()
    });
    LpOutcome::Optimal(LpSolution {
        x,
        objective,
        duals,
    })
}

/// Solves `Bᵀ y = c_B` afresh from the original columns (artificial columns
/// are unit vectors with zero cost), which avoids the error that accumulates
/// in the tableau over many float pivots.
fn basis_duals<S: Scalar>(a: &[Vec<S>], c: &[S], basis: &[usize], n: usize) -> Option<Vec<S>> {
    let m = a.len();
    // Row k of the system is basic column basis[k].
    let mut rows: Vec<Vec<S>> = basis
        .iter()
        .map(|&j| {
            let mut row: Vec<S> = if j < n {
                (0..m).map(|i| a[i][j].clone()).collect()
            } else {
                (0..m).map(|i| if i == j - n { S::one() } else { S::zero() }).collect()
            };
            row.push(if j < n { c[j].clone() } else { S::zero() });
            row
        })
        .collect();
    for col in 0..m {
        let piv = (col..m).max_by(|&x, &y| {
            rows[x][col]
                .abs()
                .partial_cmp(&rows[y][col].abs())
                .unwrap_or(std::cmp::Ordering::Equal)
        })?;
        if rows[piv][col].is_zero() {
            return None;
        }
        rows.swap(col, piv);
        let pivot_row = rows[col].clone();
        for (r, row) in rows.iter_mut().enumerate() {
            if r == col || row[col].is_zero() {
                continue;
            }
            let f = row[col].clone() / pivot_row[col].clone();
            for (v, p) in row.iter_mut().zip(&pivot_row) {
                *v = v.clone() - f.clone() * p.clone();
            }
        }
    }
    Some((0..m).map(|i| rows[i][m].clone() / rows[i][i].clone()).collect())
}

/// Feasibility of `A x = b, x ≥ 0`.
pub fn feasible<S: Scalar>(a: &[Vec<S>], b: &[S], tol: f64) -> bool {
    let n = a.first().map_or(0, Vec::len);
    solve(a, b, &vec![S::zero(); n], tol).is_feasible()
}
