//! Populations, column-stochastic matrices, elementary detailed-balanced
//! steps, and the predicates shared by the rest of the crate.

use crate::error::{Result, ThermoError};
use crate::gibbs::GibbsContext;
use crate::numeric::{self, Rational, Scalar};

/// Nonnegative occupation vector. The norm need not be one.
#[derive(Debug, Clone, PartialEq)]
pub struct Population<S>(Vec<S>);

impl<S: Scalar> Population<S> {
    pub fn new(x: Vec<S>) -> Result<Self> {
        if x.is_empty() {
            return Err(ThermoError::InvalidPopulation("empty vector".into()));
        }
        if let Some(i) = x.iter().position(|v| v.is_negative()) {
            return Err(ThermoError::InvalidPopulation(format!(
                "entry {i} is negative ({})",
                x[i]
            )));
        }
        if !numeric::sum(&x).is_positive() {
            return Err(ThermoError::InvalidPopulation("total weight is zero".into()));
        }
        Ok(Population(x))
    }

    /// Wraps results of internal arithmetic, which may carry float noise.
    pub(crate) fn from_vec_unchecked(x: Vec<S>) -> Self {
        Population(x)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[S] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<S> {
        self.0
    }

    pub fn norm(&self) -> S {
        numeric::sum(&self.0)
    }

    pub fn expect_len(&self, n: usize) -> Result<()> {
        if self.len() == n {
            Ok(())
        } else {
            Err(ThermoError::DimensionMismatch {
                expected: n,
                found: self.len(),
            })
        }
    }

    pub fn to_f64(&self) -> Population<f64> {
        Population(self.0.iter().map(Scalar::to_f64).collect())
    }
}

impl Population<Rational> {
    pub fn from_ints(x: &[i64]) -> Result<Self> {
        Self::new(x.iter().map(|&v| numeric::rational(v, 1)).collect())
    }
}

impl<S> std::ops::Index<usize> for Population<S> {
    type Output = S;
    fn index(&self, i: usize) -> &S {
        &self.0[i]
    }
}

/// Square matrix stored by columns: `cols[j][i] = T_{i|j}`, the probability
/// of a jump from level `j` to level `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct StochasticMatrix<S> {
    cols: Vec<Vec<S>>,
}

impl<S: Scalar> StochasticMatrix<S> {
    /// Checks the shape only; use [`validate_stochastic`] for the entries.
    pub fn from_columns(cols: Vec<Vec<S>>) -> Result<Self> {
        let n = cols.len();
        if n == 0 {
            return Err(ThermoError::InvalidParameter("empty matrix".into()));
        }
        if let Some(col) = cols.iter().find(|c| c.len() != n) {
            return Err(ThermoError::DimensionMismatch {
                expected: n,
                found: col.len(),
            });
        }
        Ok(StochasticMatrix { cols })
    }

    pub fn from_rows(rows: Vec<Vec<S>>) -> Result<Self> {
        let n = rows.len();
        if let Some(row) = rows.iter().find(|r| r.len() != n) {
            return Err(ThermoError::DimensionMismatch {
                expected: n,
                found: row.len(),
            });
        }
        let cols = (0..n)
            .map(|j| rows.iter().map(|r| r[j].clone()).collect())
            .collect();
        Self::from_columns(cols)
    }

    pub fn identity(n: usize) -> Self {
        let cols = (0..n)
            .map(|j| (0..n).map(|i| if i == j { S::one() } else { S::zero() }).collect())
            .collect();
        StochasticMatrix { cols }
    }

    /// Deterministic map sending level `j` to level `perm[j]`.
    pub fn permutation(perm: &[usize]) -> Self {
        let n = perm.len();
        let cols = perm
            .iter()
            .map(|&target| (0..n).map(|i| if i == target { S::one() } else { S::zero() }).collect())
            .collect();
        StochasticMatrix { cols }
    }

    pub fn n(&self) -> usize {
        self.cols.len()
    }

    /// `T_{i|j}`.
    pub fn get(&self, i: usize, j: usize) -> &S {
        &self.cols[j][i]
    }

    pub fn column(&self, j: usize) -> &[S] {
        &self.cols[j]
    }

    pub fn columns(&self) -> &[Vec<S>] {
        &self.cols
    }

    pub fn apply(&self, x: &[S]) -> Vec<S> {
        let n = self.n();
        let mut out = vec![S::zero(); n];
        for (j, xj) in x.iter().enumerate() {
            if xj.is_zero() {
                continue;
            }
            for (o, t) in out.iter_mut().zip(&self.cols[j]) {
                if !t.is_zero() {
                    *o = o.clone() + t.clone() * xj.clone();
                }
            }
        }
        out
    }

    pub fn apply_population(&self, p: &Population<S>) -> Result<Population<S>> {
        p.expect_len(self.n())?;
        Ok(Population::from_vec_unchecked(self.apply(p.as_slice())))
    }

    /// The matrix product `self · other` (apply `other` first).
    pub fn compose(&self, other: &Self) -> Self {
        StochasticMatrix {
            cols: other.cols.iter().map(|c| self.apply(c)).collect(),
        }
    }

    pub fn scaled_add(&mut self, weight: &S, other: &Self) {
        for (a, b) in self.cols.iter_mut().zip(&other.cols) {
            for (x, y) in a.iter_mut().zip(b) {
                *x = x.clone() + weight.clone() * y.clone();
            }
        }
    }

    pub fn zeros(n: usize) -> Self {
        StochasticMatrix {
            cols: vec![vec![S::zero(); n]; n],
        }
    }

    pub fn to_f64(&self) -> StochasticMatrix<f64> {
        StochasticMatrix {
            cols: self
                .cols
                .iter()
                .map(|c| c.iter().map(Scalar::to_f64).collect())
                .collect(),
        }
    }

    /// Largest entrywise difference.
    pub fn max_diff(&self, other: &Self) -> S {
        numeric::max_abs(
            self.cols
                .iter()
                .flatten()
                .zip(other.cols.iter().flatten())
                .map(|(a, b)| a.clone() - b.clone()),
        )
    }
}

/// Elementary detailed-balanced process on levels `lo` and `hi`, where `hi`
/// has the smaller Gibbs weight. `p_down = E_{lo|hi}`; the upward probability
/// follows from detailed balance.
#[derive(Debug, Clone, PartialEq)]
pub struct EdpStep<S> {
    pub lo: usize,
    pub hi: usize,
    pub p_down: S,
}

impl<S: Scalar> EdpStep<S> {
    pub fn new(lo: usize, hi: usize, p_down: S, ctx: &GibbsContext) -> Result<Self> {
        check_pair(lo, hi, ctx)?;
        if p_down.is_negative() || p_down > S::one() {
            return Err(ThermoError::InvalidParameter(format!(
                "p_down = {p_down} is outside [0, 1]"
            )));
        }
        Ok(EdpStep { lo, hi, p_down })
    }

    /// The extreme step with `p_down = 1`.
    pub fn thermo_transposition(lo: usize, hi: usize, ctx: &GibbsContext) -> Result<Self> {
        Self::new(lo, hi, S::one(), ctx)
    }

    /// `g_hi / g_lo = e^{-(β̄_hi - β̄_lo)}`.
    pub fn kappa(&self, ctx: &GibbsContext) -> Result<S> {
        pair_ratio(self.lo, self.hi, ctx)
    }

    /// `E_{hi|lo}`.
    pub fn p_up(&self, ctx: &GibbsContext) -> Result<S> {
        Ok(self.p_down.clone() * self.kappa(ctx)?)
    }

    pub fn to_matrix(&self, ctx: &GibbsContext) -> Result<StochasticMatrix<S>> {
        ctx.check_level(self.lo)?;
        ctx.check_level(self.hi)?;
        let up = self.p_up(ctx)?;
        let mut t = StochasticMatrix::identity(ctx.n());
        let (lo, hi) = (self.lo, self.hi);
        t.cols[lo][lo] = S::one() - up.clone();
        t.cols[lo][hi] = up;
        t.cols[hi][lo] = self.p_down.clone();
        t.cols[hi][hi] = S::one() - self.p_down.clone();
        Ok(t)
    }
}

/// Rejects pairs that are out of range, identical, degenerate, or given with
/// the heavier level as `hi`.
pub fn check_pair(lo: usize, hi: usize, ctx: &GibbsContext) -> Result<()> {
    ctx.check_level(lo)?;
    ctx.check_level(hi)?;
    let ordered = match ctx.rational() {
        Some(r) => r.d[hi] < r.d[lo],
        None => ctx.weights()[hi] < ctx.weights()[lo],
    };
    if lo == hi || !ordered {
        return Err(ThermoError::DegeneratePair { lo, hi });
    }
    Ok(())
}

pub(crate) fn pair_ratio<S: Scalar>(lo: usize, hi: usize, ctx: &GibbsContext) -> Result<S> {
    match ctx.rational() {
        Some(r) if S::EXACT => Ok(S::ratio(r.d[hi], r.d[lo])),
        _ => {
            let gap = ctx.energies()[hi] - ctx.energies()[lo];
            S::from_f64((-gap).exp()).ok_or(ThermoError::NoRationalForm)
        }
    }
}

/// A permutation of the `D` embedded slots together with its pullback to the
/// `n` levels.
#[derive(Debug, Clone, PartialEq)]
pub struct ThermoPermutation<S> {
    pub lifted_perm: Vec<usize>,
    pub pulled_back: StochasticMatrix<S>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecompositionTerm<S> {
    pub weight: S,
    pub factor: ThermoPermutation<S>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvexDecomposition<S> {
    pub terms: Vec<DecompositionTerm<S>>,
}

impl<S: Scalar> ConvexDecomposition<S> {
    pub fn n(&self) -> usize {
        self.terms
            .first()
            .map_or(0, |t| t.factor.pulled_back.n())
    }

    pub fn weights(&self) -> Vec<S> {
        self.terms.iter().map(|t| t.weight.clone()).collect()
    }

    /// `Σ λ_k P^k`.
    pub fn reconstruct(&self) -> StochasticMatrix<S> {
        let mut t = StochasticMatrix::zeros(self.n());
        for term in &self.terms {
            t.scaled_add(&term.weight, &term.factor.pulled_back);
        }
        t
    }
}

/// Entries at least `-tol` and column sums within `tol` of one.
pub fn validate_stochastic<S: Scalar>(t: &StochasticMatrix<S>, tol: f64) -> bool {
    let tol = S::tolerance(tol);
    let neg_tol = -tol.clone();
    t.columns().iter().all(|col| {
        col.iter().all(|v| *v >= neg_tol) && numeric::eq_tol(&numeric::sum(col), &S::one(), &tol)
    })
}

/// `‖Tg − g‖_∞`.
pub fn gibbs_residual<S: Scalar>(t: &StochasticMatrix<S>, ctx: &GibbsContext) -> Result<S> {
    if t.n() != ctx.n() {
        return Err(ThermoError::DimensionMismatch {
            expected: ctx.n(),
            found: t.n(),
        });
    }
    let g = ctx.gibbs::<S>()?;
    let tg = t.apply(&g);
    Ok(numeric::max_abs(
        tg.into_iter().zip(g).map(|(a, b)| a - b),
    ))
}

pub fn is_gibbs_preserving<S: Scalar>(
    t: &StochasticMatrix<S>,
    ctx: &GibbsContext,
    tol: f64,
) -> Result<bool> {
    Ok(gibbs_residual(t, ctx)? <= S::tolerance(tol))
}

/// `T_{i|j} g_j = T_{j|i} g_i` for every pair. A size mismatch is simply `false`.
pub fn is_detailed_balanced<S: Scalar>(t: &StochasticMatrix<S>, ctx: &GibbsContext, tol: f64) -> bool {
    if t.n() != ctx.n() {
        return false;
    }
    let Ok(g) = ctx.gibbs::<S>() else {
        return false;
    };
    let tol = S::tolerance(tol);
    let n = t.n();
    (0..n).all(|i| {
        (i + 1..n).all(|j| {
            let forward = t.get(i, j).clone() * g[j].clone();
            let backward = t.get(j, i).clone() * g[i].clone();
            numeric::eq_tol(&forward, &backward, &tol)
        })
    })
}
