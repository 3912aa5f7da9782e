//! Thermal cones: the set of states reachable from `p`, its candidate extreme
//! points, and hull checks against the thermo-permutation images.
//!
//! For a level order `π` the saturating point puts
//! `q_{π(k)} = L_p(x_k) − L_p(x_{k−1})` with `x_k = Σ_{i≤k} g_{π(i)}`; it is the
//! greedy vertex of the set function `f(S) = L_p(g(S))`. Hull checks run a
//! column-generation LP whose pricing step is an exact maximisation over all
//! `n!` vertices (subset dynamic programming) or over all `D!` slot
//! permutations (rearrangement inequality), so nothing is sampled.

use std::cmp::Ordering;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::birkhoff::random_slot_permutation;
use crate::error::{Result, ThermoError};
use crate::gibbs::GibbsContext;
use crate::lp::{self, LpOutcome};
use crate::majorization::{beta_order_of, lorenz_curve, thermo_majorizes_by, Route};
use crate::model::Population;
use crate::numeric::{Rational, Scalar};

/// Largest level count for which all `n!` vertices are enumerated.
pub const MAX_VERTEX_LEVELS: usize = 10;
/// Largest level count for subset tables (`2^n` entries).
pub const MAX_SUBSET_LEVELS: usize = 20;

/// Half-space `normal · x ≤ offset` within the plane `Σ x = N`.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Facet {
    pub normal: Vec<f64>,
    pub offset: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThermalCone<S> {
    pub source: Population<S>,
    pub vertices: Vec<Population<S>>,
    pub hull_facets: Option<Vec<Facet>>,
}

/// `q ∈ 𝒯_p`, decided by all three majorisation routes in exact comparison
/// mode (the routes must agree; disagreement would be a bug).
pub fn cone_membership<S: Scalar>(p: &Population<S>, q: &Population<S>, ctx: &GibbsContext, tol: f64) -> Result<bool> {
    let mut verdict = None;
    for route in Route::ALL {
        if route == Route::Embedded && ctx.rational().is_none() {
            continue;
        }
        let v = thermo_majorizes_by(route, p, q, ctx, tol)?;
        match verdict {
            None => verdict = Some(v),
            Some(prev) => debug_assert_eq!(prev, v, "majorisation routes disagree"),
        }
    }
    Ok(verdict.unwrap_or(false))
}

/// `f(S) = L_p(g(S))` for every subset `S` (bit `i` set when level `i ∈ S`).
pub fn set_function<S: Scalar>(p: &Population<S>, ctx: &GibbsContext) -> Result<Vec<S>> {
    let n = ctx.n();
    if n > MAX_SUBSET_LEVELS {
        return Err(ThermoError::InvalidParameter(format!(
            "subset tables are limited to {MAX_SUBSET_LEVELS} levels"
        )));
    }
    let curve = lorenz_curve(p, ctx)?;
    let g = ctx.gibbs::<S>()?;
    let mut mass = vec![S::zero(); 1 << n];
    let mut out = vec![S::zero(); 1 << n];
    for set in 1usize..(1 << n) {
        let low = set.trailing_zeros() as usize;
        mass[set] = mass[set & (set - 1)].clone() + g[low].clone();
        out[set] = curve.eval(&mass[set]);
    }
    Ok(out)
}

/// The saturating point for level order `perm`, read off a subset table.
pub fn vertex_for_order<S: Scalar>(f: &[S], perm: &[usize]) -> Vec<S> {
    let mut q = vec![S::zero(); perm.len()];
    let mut set = 0usize;
    for &level in perm {
        let next = set | (1 << level);
        q[level] = f[next].clone() - f[set].clone();
        set = next;
    }
    q
}

fn next_permutation(perm: &mut [usize]) -> bool {
    let Some(i) = (1..perm.len()).rev().find(|&i| perm[i - 1] < perm[i]) else {
        return false;
    };
    let j = (i..perm.len()).rev().find(|&j| perm[j] > perm[i - 1]).expect("pivot exists");
    perm.swap(i - 1, j);
    perm[i..].reverse();
    true
}

fn lex_cmp<S: Scalar>(a: &[S], b: &[S]) -> Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.partial_cmp(y).unwrap_or(Ordering::Equal))
        .find(|o| o.is_ne())
        .unwrap_or(Ordering::Equal)
}

/// Distinct saturating points over all `n!` level orders.
pub fn cone_vertices<S: Scalar>(p: &Population<S>, ctx: &GibbsContext) -> Result<Vec<Population<S>>> {
    let n = ctx.n();
    if n > MAX_VERTEX_LEVELS {
        return Err(ThermoError::InvalidParameter(format!(
            "vertex enumeration is limited to {MAX_VERTEX_LEVELS} levels"
        )));
    }
    let f = set_function(p, ctx)?;
    let mut perm: Vec<usize> = (0..n).collect();
    let mut vertices = Vec::new();
    loop {
        vertices.push(vertex_for_order(&f, &perm));
        if !next_permutation(&mut perm) {
            break;
        }
    }
    vertices.sort_by(|a, b| lex_cmp(b, a));
    vertices.dedup_by(|a, b| lex_cmp(a, b).is_eq());
    Ok(vertices.into_iter().map(Population::from_vec_unchecked).collect())
}

pub fn thermal_cone<S: Scalar>(p: &Population<S>, ctx: &GibbsContext, facets: bool) -> Result<ThermalCone<S>> {
    let vertices = cone_vertices(p, ctx)?;
    let hull_facets = if facets && ctx.n() <= 4 {
        let points: Vec<Vec<f64>> = vertices.iter().map(|v| v.to_f64().into_vec()).collect();
        Some(hull_facets(&points, 1e-9))
    } else {
        None
    };
    Ok(ThermalCone {
        source: p.clone(),
        vertices,
        hull_facets,
    })
}

fn det(m: &[Vec<f64>]) -> f64 {
    match m.len() {
        0 => 1.0,
        1 => m[0][0],
        2 => m[0][0] * m[1][1] - m[0][1] * m[1][0],
        n => (0..n)
            .map(|c| {
                let minor: Vec<Vec<f64>> = m[1..]
                    .iter()
                    .map(|r| r.iter().enumerate().filter(|&(k, _)| k != c).map(|(_, v)| *v).collect())
                    .collect();
                let sign = if c % 2 == 0 { 1.0 } else { -1.0 };
                sign * m[0][c] * det(&minor)
            })
            .sum(),
    }
}

/// Vector orthogonal to the `n − 1` rows (generalised cross product).
fn cross(rows: &[Vec<f64>]) -> Vec<f64> {
    let n = rows.len() + 1;
    (0..n)
        .map(|c| {
            let minor: Vec<Vec<f64>> = rows
                .iter()
                .map(|r| r.iter().enumerate().filter(|&(k, _)| k != c).map(|(_, v)| *v).collect())
                .collect();
            let sign = if c % 2 == 0 { 1.0 } else { -1.0 };
            sign * det(&minor)
        })
        .collect()
}

fn choose(k: usize, from: usize, start: usize, acc: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
    if acc.len() == k {
        out.push(acc.clone());
        return;
    }
    for i in start..from {
        acc.push(i);
        choose(k, from, i + 1, acc, out);
        acc.pop();
    }
}

/// Facets of the hull of points lying in `Σ x = const`, by brute force over
/// `(n − 1)`-subsets. Meant for `n ≤ 4`. Returns nothing when the points do
/// not span the full `(n − 1)`-dimensional plane.
pub fn hull_facets(points: &[Vec<f64>], eps: f64) -> Vec<Facet> {
    let Some(n) = points.first().map(Vec::len) else {
        return Vec::new();
    };
    if n < 2 {
        return Vec::new();
    }
    let k = n - 1;
    let mut subsets = Vec::new();
    choose(k, points.len(), 0, &mut Vec::new(), &mut subsets);
    let mut facets: Vec<Facet> = Vec::new();
    for subset in subsets {
        let base = &points[subset[0]];
        let mut rows: Vec<Vec<f64>> = subset[1..]
            .iter()
            .map(|&i| points[i].iter().zip(base).map(|(a, b)| a - b).collect())
            .collect();
        rows.push(vec![1.0; n]);
        let normal = cross(&rows);
        let len = normal.iter().map(|v| v * v).sum::<f64>().sqrt();
        if len < eps {
            continue;
        }
        let mut normal: Vec<f64> = normal.iter().map(|v| v / len).collect();
        let side: Vec<f64> = points
            .iter()
            .map(|p| p.iter().zip(base).zip(&normal).map(|((a, b), c)| (a - b) * c).sum())
            .collect();
        let above = side.iter().any(|&s| s > eps);
        let below = side.iter().any(|&s| s < -eps);
        if above && below || (!above && !below) {
            continue;
        }
        if above {
            normal.iter_mut().for_each(|v| *v = -*v);
        }
        let offset: f64 = normal.iter().zip(base).map(|(a, b)| a * b).sum();
        let duplicate = facets.iter().any(|f| {
            (f.offset - offset).abs() < 1e-7 && f.normal.iter().zip(&normal).all(|(a, b)| (a - b).abs() < 1e-7)
        });
        if !duplicate {
            facets.push(Facet { normal, offset });
        }
    }
    facets
}

/// Minimum total slack needed to write `q` as a convex combination of columns,
/// with new columns supplied by `price(y)` (a maximiser of `y · v`). `None`
/// when the float LP breaks down; exact arithmetic always returns a value.
pub fn hull_violation<S: Scalar>(
    q: &[S],
    mut columns: Vec<Vec<S>>,
    mut price: impl FnMut(&[S]) -> Vec<S>,
) -> Option<S> {
    let n = q.len();
    let rows = n + 1;
    let mut b: Vec<S> = q.to_vec();
    b.push(S::one());
    let lp_tol = if S::EXACT { 0.0 } else { 1e-11 };
    let small = S::tolerance(1e-12);
    for _ in 0..MAX_COLUMN_ROUNDS {
        let width = columns.len() + 2 * rows;
        let mut a = vec![vec![S::zero(); width]; rows];
        for (c, col) in columns.iter().enumerate() {
            for i in 0..n {
                a[i][c] = col[i].clone();
            }
            a[n][c] = S::one();
        }
        for r in 0..rows {
            a[r][columns.len() + 2 * r] = S::one();
            a[r][columns.len() + 2 * r + 1] = -S::one();
        }
        let cost: Vec<S> = (0..width)
            .map(|c| if c < columns.len() { S::zero() } else { S::one() })
            .collect();
        let LpOutcome::Optimal(sol) = lp::solve(&a, &b, &cost, lp_tol) else {
            return None;
        };
        let objective = if sol.objective.is_negative() { S::zero() } else { sol.objective };
        if objective <= small {
            return Some(objective);
        }
        let y = &sol.duals;
        let candidate = price(&y[..n]);
        let gain = candidate
            .iter()
            .zip(y)
            .fold(y[n].clone(), |acc, (v, w)| acc + v.clone() * w.clone());
        let twin = S::tolerance(1e-14);
        let known = columns
            .iter()
            .any(|c| c.iter().zip(&candidate).all(|(u, v)| (u.clone() - v.clone()).abs() <= twin));
        if gain <= small || known {
            return Some(objective);
        }
        columns.push(candidate);
    }
    None
}

const MAX_COLUMN_ROUNDS: usize = 10_000;

/// Exact `max_π y · v(π)` over all level orders by dynamic programming over
/// subsets; returns the maximising vertex.
pub fn best_vertex<S: Scalar>(f: &[S], y: &[S]) -> Vec<S> {
    let n = y.len();
    let full = (1usize << n) - 1;
    let mut best: Vec<Option<S>> = vec![None; 1 << n];
    let mut last = vec![0usize; 1 << n];
    best[0] = Some(S::zero());
    for set in 1..=full {
        for i in 0..n {
            if set & (1 << i) == 0 {
                continue;
            }
            let prev = set ^ (1 << i);
            let Some(base) = &best[prev] else { continue };
            let value = base.clone() + y[i].clone() * (f[set].clone() - f[prev].clone());
            if best[set].as_ref().map_or(true, |b| value > *b) {
                best[set] = Some(value);
                last[set] = i;
            }
        }
    }
    let mut order = Vec::with_capacity(n);
    let mut set = full;
    while set != 0 {
        order.push(last[set]);
        set ^= 1 << last[set];
    }
    order.reverse();
    vertex_for_order(f, &order)
}

/// Exact `max_σ y · (P_σ p)` over all slot permutations: pair the embedded
/// entries with the levels' `y` values, both sorted descending.
pub fn best_pullback_image<S: Scalar>(embedded: &[S], block: &[usize], y: &[S]) -> Vec<S> {
    let mut slots: Vec<S> = embedded.to_vec();
    slots.sort_by(|a, b| b.partial_cmp(a).unwrap_or(Ordering::Equal));
    let mut targets: Vec<usize> = block.to_vec();
    targets.sort_by(|&a, &b| y[b].partial_cmp(&y[a]).unwrap_or(Ordering::Equal).then(a.cmp(&b)));
    let mut image = vec![S::zero(); y.len()];
    for (value, level) in slots.into_iter().zip(targets) {
        image[level] = image[level].clone() + value;
    }
    image
}

/// Pullback count tables `N` (row sums `d_i`, column sums `d_j`) with one
/// representative per orbit of row swaps between equal-`d` levels: rows in
/// each equal-`d` class appear in non-increasing lexicographic order.
pub fn canonical_pullback_tables(d: &[u64]) -> Vec<Vec<Vec<u64>>> {
    let n = d.len();
    let prev_in_class: Vec<Option<usize>> = (0..n).map(|i| (0..i).rev().find(|&k| d[k] == d[i])).collect();
    let mut out = Vec::new();
    let mut table = vec![vec![0u64; n]; n];
    let mut col_rem = d.to_vec();

    #[allow(clippy::too_many_arguments)]
    fn fill_row(
        i: usize,
        j: usize,
        row_rem: u64,
        d: &[u64],
        prev: &[Option<usize>],
        table: &mut Vec<Vec<u64>>,
        col_rem: &mut Vec<u64>,
        out: &mut Vec<Vec<Vec<u64>>>,
    ) {
        let n = d.len();
        if j == n {
            if row_rem != 0 {
                return;
            }
            if let Some(k) = prev[i] {
                if table[i] > table[k] {
                    return;
                }
            }
            if i + 1 == n {
                out.push(table.clone());
            } else {
                fill_row(i + 1, 0, d[i + 1], d, prev, table, col_rem, out);
            }
            return;
        }
        let hi = row_rem.min(col_rem[j]);
        let lo = if j + 1 == n { row_rem } else { 0 };
        if lo > hi {
            return;
        }
        for v in (lo..=hi).rev() {
            table[i][j] = v;
            col_rem[j] -= v;
            fill_row(i, j + 1, row_rem - v, d, prev, table, col_rem, out);
            col_rem[j] += v;
        }
        table[i][j] = 0;
    }

    fill_row(0, 0, d[0], d, &prev_in_class, &mut table, &mut col_rem, &mut out);
    out
}

/// `q_i = Σ_j N_ij p_j / d_j`.
pub fn table_image<S: Scalar>(table: &[Vec<u64>], p: &[S], d: &[u64]) -> Vec<S> {
    table
        .iter()
        .map(|row| {
            row.iter()
                .zip(p)
                .zip(d)
                .filter(|((&c, _), _)| c != 0)
                .fold(S::zero(), |acc, ((&c, pj), &dj)| acc + S::ratio(c, dj) * pj.clone())
        })
        .collect()
}

/// Permutations of equal-`d` levels must leave `f` unchanged; the hull checks
/// use this symmetry to skip images related by such swaps.
pub fn set_function_is_symmetric<S: Scalar>(f: &[S], d: &[u64], eps: f64) -> bool {
    let eps = S::tolerance(eps);
    let n = d.len();
    (0..n).all(|i| {
        (i + 1..n).filter(|&j| d[j] == d[i]).all(|j| {
            (0..f.len()).all(|set| {
                let bi = (set >> i) & 1;
                let bj = (set >> j) & 1;
                let swapped = if bi != bj { set ^ (1 << i) ^ (1 << j) } else { set };
                (f[set].clone() - f[swapped].clone()).abs() <= eps
            })
        })
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct HullOptions {
    /// Enumerate every pullback image when `D` is at most this.
    pub exhaustive_max_d: u64,
    /// Random slot permutations used beyond that.
    pub samples: usize,
    pub seed: u64,
    pub tol: f64,
}

impl Default for HullOptions {
    fn default() -> Self {
        HullOptions {
            exhaustive_max_d: 8,
            samples: 2000,
            seed: 0,
            tol: 1e-9,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HullReport {
    pub exhaustive: bool,
    pub images_checked: usize,
    pub image_violations: usize,
    pub max_image_violation: f64,
    pub vertices_checked: usize,
    pub vertex_violations: usize,
    pub max_vertex_violation: f64,
    /// LPs re-solved in exact arithmetic after the float pass flagged them.
    pub exact_rechecks: usize,
    pub symmetric: bool,
}

impl HullReport {
    pub fn passed(&self) -> bool {
        self.symmetric && self.image_violations == 0 && self.vertex_violations == 0
    }
}

/// Float first; anything the float pass cannot clear is settled exactly.
fn settle(float: Option<f64>, tol: f64, exact: impl FnOnce() -> Rational, rechecks: &mut usize) -> f64 {
    match float {
        Some(v) if v <= tol => v,
        _ => {
            *rechecks += 1;
            exact().to_f64()
        }
    }
}

/// Subset tables for `p` in both arithmetics.
pub struct ConeOracle {
    pub exact: Vec<Rational>,
    pub float: Vec<f64>,
    weights: Vec<f64>,
}

impl ConeOracle {
    pub fn new(p: &Population<Rational>, ctx: &GibbsContext) -> Result<Self> {
        let exact = set_function(p, ctx)?;
        let float = exact.iter().map(Scalar::to_f64).collect();
        Ok(ConeOracle {
            exact,
            float,
            weights: ctx.weights().to_vec(),
        })
    }

    /// Hull violation of `q` against the cone vertices in arithmetic `S`,
    /// starting from the vertex that shares `q`'s β-order.
    pub fn violation<S: Scalar>(f: &[S], q: &[S], weights: &[f64]) -> Option<S> {
        let qf: Vec<f64> = q.iter().map(Scalar::to_f64).collect();
        let own = vertex_for_order(f, &beta_order_of(&qf, weights));
        let twin = S::tolerance(1e-14);
        if own.iter().zip(q).all(|(a, b)| (a.clone() - b.clone()).abs() <= twin) {
            return Some(S::zero());
        }
        hull_violation(q, vec![own], |y| best_vertex(f, y))
    }

    pub fn float_violation(&self, q: &[f64]) -> Option<f64> {
        Self::violation(&self.float, q, &self.weights)
    }

    pub fn exact_violation(&self, q: &[Rational]) -> Rational {
        Self::violation(&self.exact, q, &self.weights).expect("exact LP always terminates")
    }

    /// Violation of `q`, exact whenever the float pass does not clear it.
    pub fn settled_violation(&self, q: &[Rational], tol: f64, rechecks: &mut usize) -> f64 {
        let qf: Vec<f64> = q.iter().map(Scalar::to_f64).collect();
        settle(self.float_violation(&qf), tol, || self.exact_violation(q), rechecks)
    }
}

/// Checks that every pullback image `P p` lies in the hull of the cone
/// vertices, and every vertex in the hull of the images.
pub fn hull_check(p: &Population<Rational>, ctx: &GibbsContext, opts: &HullOptions) -> Result<HullReport> {
    let n = ctx.n();
    let d = ctx.degeneracies()?.to_vec();
    let big_d = ctx.total()?;
    let oracle = ConeOracle::new(p, ctx)?;
    let pf = p.to_f64().into_vec();
    let symmetric = set_function_is_symmetric(&oracle.exact, &d, 0.0);
    let exhaustive = big_d <= opts.exhaustive_max_d;

    let tables: Vec<Vec<Vec<u64>>> = if exhaustive {
        canonical_pullback_tables(&d)
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        (0..opts.samples)
            .map(|_| crate::birkhoff::pullback_counts(&random_slot_permutation(ctx, &mut rng)?, ctx))
            .collect::<Result<_>>()?
    };

    let mut report = HullReport {
        exhaustive,
        images_checked: tables.len(),
        image_violations: 0,
        max_image_violation: 0.0,
        vertices_checked: 0,
        vertex_violations: 0,
        max_vertex_violation: 0.0,
        exact_rechecks: 0,
        symmetric,
    };
    for table in &tables {
        let image = table_image(table, &pf, &d);
        let violation = settle(
            oracle.float_violation(&image),
            opts.tol,
            || oracle.exact_violation(&table_image(table, p.as_slice(), &d)),
            &mut report.exact_rechecks,
        );
        report.max_image_violation = report.max_image_violation.max(violation);
        if violation > opts.tol {
            report.image_violations += 1;
        }
    }

    if n <= MAX_VERTEX_LEVELS {
        let block = crate::birkhoff::slot_blocks(ctx)?;
        let embedded_f: Vec<f64> = block.iter().map(|&i| pf[i] / d[i] as f64).collect();
        let embedded_q: Vec<Rational> = block
            .iter()
            .map(|&i| p[i].clone() / Rational::from_u64(d[i]))
            .collect();
        for order in canonical_vertex_orders(&oracle.float, &d) {
            let mut vertex = vertex_for_order(&oracle.float, &order);
            canonicalise(&mut vertex, &d);
            let start = best_pullback_image(&embedded_f, &block, &vertex);
            let float = hull_violation(&vertex, vec![start, pf.clone()], |y| {
                best_pullback_image(&embedded_f, &block, y)
            });
            let violation = settle(
                float,
                opts.tol,
                || {
                    let mut vertex = vertex_for_order(&oracle.exact, &order);
                    canonicalise(&mut vertex, &d);
                    let start = best_pullback_image(&embedded_q, &block, &vertex);
                    hull_violation(&vertex, vec![start, p.as_slice().to_vec()], |y| {
                        best_pullback_image(&embedded_q, &block, y)
                    })
                    .expect("exact LP always terminates")
                },
                &mut report.exact_rechecks,
            );
            report.vertices_checked += 1;
            report.max_vertex_violation = report.max_vertex_violation.max(violation);
            if violation > opts.tol {
                report.vertex_violations += 1;
            }
        }
    }
    Ok(report)
}

/// One level order per distinct vertex up to swaps of equal-`d` coordinates.
fn canonical_vertex_orders(f: &[f64], d: &[u64]) -> Vec<Vec<usize>> {
    let n = d.len();
    let mut perm: Vec<usize> = (0..n).collect();
    let mut seen = std::collections::HashSet::new();
    let mut out = Vec::new();
    loop {
        let mut v = vertex_for_order(f, &perm);
        canonicalise(&mut v, d);
        let key: Vec<i64> = v.iter().map(|x| (x * 1e12).round() as i64).collect();
        if seen.insert(key) {
            out.push(perm.clone());
        }
        if !next_permutation(&mut perm) {
            break;
        }
    }
    out
}

/// Sorts coordinates descending within each class of equal `d`.
pub fn canonicalise<S: Scalar>(x: &mut [S], d: &[u64]) {
    let mut classes: Vec<u64> = d.to_vec();
    classes.sort_unstable();
    classes.dedup();
    for c in classes {
        let idx: Vec<usize> = (0..d.len()).filter(|&i| d[i] == c).collect();
        let mut vals: Vec<S> = idx.iter().map(|&i| x[i].clone()).collect();
        vals.sort_by(|a, b| b.partial_cmp(a).unwrap_or(Ordering::Equal));
        for (&i, v) in idx.iter().zip(vals) {
            x[i] = v;
        }
    }
}

/// Hull-based membership: LP distance of `q` from the hull of the vertices,
/// settled exactly whenever the float pass is inconclusive.
pub fn hull_membership(p: &Population<Rational>, q: &Population<Rational>, ctx: &GibbsContext, tol: f64) -> Result<bool> {
    q.expect_len(ctx.n())?;
    let oracle = ConeOracle::new(p, ctx)?;
    let qf: Vec<f64> = q.as_slice().iter().map(Scalar::to_f64).collect();
    match oracle.float_violation(&qf) {
        Some(v) if v <= tol => Ok(true),
        Some(v) if v > CLEAR_MARGIN => Ok(false),
        _ => Ok(oracle.exact_violation(q.as_slice()).to_f64() <= tol),
    }
}

/// Float violations above this are far outside LP round-off and need no exact
/// confirmation.
const CLEAR_MARGIN: f64 = 1e-6;

/// Random population with entries `k / den`, used by tests and the CLI's
/// self-checks.
pub fn random_population<R: Rng>(n: usize, den: i64, rng: &mut R) -> Population<Rational> {
    loop {
        let raw: Vec<i64> = (0..n).map(|_| rng.gen_range(0..=den)).collect();
        let total: i64 = raw.iter().sum();
        if total > 0 {
            return Population::new(raw.iter().map(|&v| crate::numeric::rational(v, total)).collect())
                .expect("nonnegative");
        }
    }
}

/// Barycentric → Cartesian coordinates of a 3-level population in the unit
/// 2-simplex, for triangle plots.
pub fn simplex_xy(q: &[f64]) -> Option<(f64, f64)> {
    if q.len() != 3 {
        return None;
    }
    let total: f64 = q.iter().sum();
    let (b, c) = (q[1] / total, q[2] / total);
    Some((b + c / 2.0, c * 3f64.sqrt() / 2.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::birkhoff::{pull_back, random_slot_permutation};
    use crate::majorization::thermo_majorizes;
    use crate::numeric::rational;
    use proptest::prelude::*;
    use rand::Rng;

    fn pop(x: &[(i64, i64)]) -> Population<Rational> {
        Population::new(x.iter().map(|&(a, b)| rational(a, b)).collect()).unwrap()
    }

    #[test]
    fn membership_examples() {
        let ctx = GibbsContext::from_degeneracies(vec![2, 1]).unwrap();
        let p = pop(&[(1, 1), (0, 1)]);
        let g = pop(&[(2, 3), (1, 3)]);
        assert!(cone_membership(&p, &g, &ctx, 0.0).unwrap());
        assert!(cone_membership(&p, &p, &ctx, 0.0).unwrap());
        assert!(!cone_membership(&pop(&[(1, 2), (1, 2)]), &p, &ctx, 0.0).unwrap());
    }

    #[test]
    fn vertex_examples() {
        let ctx = GibbsContext::from_degeneracies(vec![2, 1]).unwrap();
        let g = pop(&[(2, 3), (1, 3)]);
        assert_eq!(cone_vertices(&g, &ctx).unwrap(), vec![g.clone()]);
        let p = pop(&[(1, 1), (0, 1)]);
        let vertices = cone_vertices(&p, &ctx).unwrap();
        assert_eq!(vertices, vec![p.clone(), pop(&[(1, 2), (1, 2)])]);
        // g = (1/3)(1,0) + (2/3)(1/2,1/2)
        let mix: Vec<Rational> = (0..2)
            .map(|i| rational(1, 3) * &vertices[0][i] + rational(2, 3) * &vertices[1][i])
            .collect();
        assert_eq!(mix, g.into_vec());
        let cone = thermal_cone(&p, &ctx, true).unwrap();
        assert_eq!(cone.hull_facets.unwrap().len(), 2);
    }

    #[test]
    fn hull_check_examples() {
        let ctx = GibbsContext::from_degeneracies(vec![2, 1]).unwrap();
        let p = pop(&[(1, 1), (0, 1)]);
        let report = hull_check(&p, &ctx, &HullOptions::default()).unwrap();
        assert!(report.passed() && report.exhaustive);
        // All 3! slot permutations give (1,0) or (1/2,1/2).
        let mut images = Vec::new();
        let mut perm = vec![0, 1, 2];
        loop {
            let t = pull_back::<Rational>(&perm, &ctx).unwrap();
            images.push(t.pulled_back.apply_population(&p).unwrap());
            if !next_permutation(&mut perm) {
                break;
            }
        }
        assert_eq!(images.len(), 6);
        assert!(images.iter().all(|q| *q == p || *q == pop(&[(1, 2), (1, 2)])));

        let g = pop(&[(2, 3), (1, 3)]);
        assert!(hull_check(&g, &ctx, &HullOptions::default()).unwrap().passed());

        let ctx3 = GibbsContext::from_degeneracies(vec![4, 2, 1]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..5 {
            let p = random_population(3, 20, &mut rng);
            let report = hull_check(&p, &ctx3, &HullOptions::default()).unwrap();
            assert!(report.passed(), "{report:?}");
            assert!(report.max_image_violation <= 1e-9);
        }
    }

    #[test]
    fn canonical_tables_cover_all_permutations() {
        for d in [vec![2, 1], vec![1, 1, 1], vec![2, 2, 1], vec![3, 1, 1]] {
            let ctx = GibbsContext::from_degeneracies(d.clone()).unwrap();
            let tables = canonical_pullback_tables(&d);
            let mut rng = ChaCha8Rng::seed_from_u64(9);
            for _ in 0..50 {
                let perm = random_slot_permutation(&ctx, &mut rng).unwrap();
                let mut counts = crate::birkhoff::pullback_counts(&perm, &ctx).unwrap();
                // Canonicalise: sort rows within equal-d classes, descending.
                let n = d.len();
                for i in 0..n {
                    for j in i + 1..n {
                        if d[i] == d[j] && counts[j] > counts[i] {
                            counts.swap(i, j);
                        }
                    }
                }
                assert!(tables.contains(&counts), "{d:?} {counts:?}");
            }
        }
        assert_eq!(canonical_pullback_tables(&[1, 1, 1]).len(), 1);
        assert_eq!(canonical_pullback_tables(&[2, 1]).len(), 2);
    }

    #[test]
    fn pricing_matches_explicit_maximum() {
        let ctx = GibbsContext::from_degeneracies(vec![3, 2, 2, 1]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = random_population(4, 30, &mut rng);
        let f: Vec<f64> = set_function(&p, &ctx).unwrap().iter().map(Scalar::to_f64).collect();
        let fq = set_function(&p, &ctx).unwrap();
        let vertices: Vec<Vec<f64>> = cone_vertices(&p, &ctx).unwrap().iter().map(|v| v.to_f64().into_vec()).collect();
        assert!(set_function_is_symmetric(&f, &[3, 2, 2, 1], 1e-12));
        for _ in 0..20 {
            let y: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let dot = |v: &[f64]| v.iter().zip(&y).map(|(a, b)| a * b).sum::<f64>();
            let explicit = vertices.iter().map(|v| dot(v)).fold(f64::NEG_INFINITY, f64::max);
            assert!((dot(&best_vertex(&f, &y)) - explicit).abs() < 1e-12);
            let yq: Vec<Rational> = y.iter().map(|&v| Rational::from_f64(v).unwrap()).collect();
            let exact: Vec<f64> = best_vertex(&fq, &yq).iter().map(Scalar::to_f64).collect();
            assert!((dot(&exact) - explicit).abs() < 1e-12);
        }
    }

    #[test]
    fn facets_of_a_triangle() {
        let pts = vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]];
        let facets = hull_facets(&pts, 1e-12);
        assert_eq!(facets.len(), 3);
        for f in &facets {
            for p in &pts {
                let s: f64 = f.normal.iter().zip(p).map(|(a, b)| a * b).sum();
                assert!(s <= f.offset + 1e-12);
            }
        }
        let (x, y) = simplex_xy(&[0.0, 0.0, 1.0]).unwrap();
        assert!((x - 0.5).abs() < 1e-15 && (y - 3f64.sqrt() / 2.0).abs() < 1e-15);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(40))]

        #[test]
        fn vertices_saturate_and_membership_matches_hull(
            d in proptest::collection::vec(1u64..5, 2..=4),
            seed in any::<u64>(),
        ) {
            let ctx = GibbsContext::from_degeneracies(d.clone()).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let p = random_population(d.len(), 12, &mut rng);
            let vertices = cone_vertices(&p, &ctx).unwrap();
            let n = d.len();
            prop_assert!(vertices.len() <= (1..=n).product::<usize>());
            let g = Population::new(ctx.gibbs_rational().unwrap()).unwrap();
            prop_assert!(cone_membership(&p, &g, &ctx, 0.0).unwrap());
            let lp = lorenz_curve(&p, &ctx).unwrap();
            for v in &vertices {
                prop_assert!(thermo_majorizes(&p, v, &ctx, 0.0).unwrap());
                let lv = lorenz_curve(v, &ctx).unwrap();
                for (x, y) in &lv.points {
                    prop_assert_eq!(&lp.eval(x), y);
                }
            }
            for _ in 0..10 {
                let q = random_population(n, 12, &mut rng);
                prop_assert_eq!(
                    hull_membership(&p, &q, &ctx, 1e-9).unwrap(),
                    thermo_majorizes(&p, &q, &ctx, 0.0).unwrap()
                );
            }
        }
    }
}
