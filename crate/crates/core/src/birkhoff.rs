//! Decomposition of Gibbs-preserving matrices into thermo-permutations.
//!
//! A Gibbs-preserving `T` lifts to a doubly stochastic matrix on the `D`
//! embedded slots, `M_{(i,a)|(j,b)} = T_{i|j} / d_i`. Birkhoff–von Neumann
//! splits `M` into slot permutations, and each permutation pulls back to an
//! `n × n` thermo-permutation. The pullback is linear and `Γ⁻¹ M Γ = T`, so
//! the weights carry over unchanged.

use std::collections::BTreeMap;

use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Result, ThermoError};
use crate::gibbs::GibbsContext;
use crate::model::{
    gibbs_residual, ConvexDecomposition, DecompositionTerm, EdpStep, Population, StochasticMatrix,
    ThermoPermutation,
};
use crate::numeric::{self, rational, Rational, Scalar};

/// `rows[r][c] = M_{r|c}` over the `D` slots; slot `s` belongs to level `block[s]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LiftedBistochastic<S> {
    pub rows: Vec<Vec<S>>,
    pub block: Vec<usize>,
}

impl<S: Scalar> LiftedBistochastic<S> {
    pub fn size(&self) -> usize {
        self.rows.len()
    }

    pub fn is_doubly_stochastic(&self, tol: f64) -> bool {
        let tol = S::tolerance(tol);
        let neg = -tol.clone();
        let one = S::one();
        let rows_ok = self
            .rows
            .iter()
            .all(|r| r.iter().all(|v| *v >= neg) && numeric::eq_tol(&numeric::sum(r), &one, &tol));
        let cols_ok = (0..self.size()).all(|c| {
            let col: Vec<S> = self.rows.iter().map(|r| r[c].clone()).collect();
            numeric::eq_tol(&numeric::sum(&col), &one, &tol)
        });
        rows_ok && cols_ok
    }
}

/// Slot-to-level map `0,0,…,1,…` with `d_i` copies of level `i`.
pub fn slot_blocks(ctx: &GibbsContext) -> Result<Vec<usize>> {
    let d = ctx.degeneracies()?;
    Ok(d.iter()
        .enumerate()
        .flat_map(|(i, &di)| std::iter::repeat(i).take(di as usize))
        .collect())
}

pub fn lift<S: Scalar>(t: &StochasticMatrix<S>, ctx: &GibbsContext, tol: f64) -> Result<LiftedBistochastic<S>> {
    let residual = gibbs_residual(t, ctx)?;
    if residual > S::tolerance(tol) {
        return Err(ThermoError::NotGibbsPreserving {
            residual: residual.to_f64(),
        });
    }
    let d = ctx.degeneracies()?;
    let block = slot_blocks(ctx)?;
    let rows = block
        .iter()
        .map(|&i| {
            let di = S::from_u64(d[i]);
            block.iter().map(|&j| t.get(i, j).clone() / di.clone()).collect()
        })
        .collect();
    Ok(LiftedBistochastic { rows, block })
}

struct Matching {
    row_of: Vec<Option<usize>>,
    col_of: Vec<Option<usize>>,
}

impl Matching {
    fn augment<S: Scalar>(&mut self, c: usize, w: &[Vec<S>], eps: &S, seen: &mut [bool]) -> bool {
        for r in 0..w.len() {
            if seen[r] || w[r][c] <= *eps {
                continue;
            }
            seen[r] = true;
            let free = match self.col_of[r] {
                None => true,
                Some(other) => self.augment(other, w, eps, seen),
            };
            if free {
                self.row_of[c] = Some(r);
                self.col_of[r] = Some(c);
                return true;
            }
        }
        false
    }
}

/// Greedy Birkhoff–von Neumann. Each term is `(weight, σ)` with `σ[c]` the
/// row hit by column `c`. The matching is repaired in place after every
/// subtraction rather than recomputed.
pub fn birkhoff_von_neumann<S: Scalar>(m: &LiftedBistochastic<S>, tol: f64) -> Result<Vec<(S, Vec<usize>)>> {
    let size = m.size();
    let eps = S::tolerance(tol);
    let mut w = m.rows.clone();
    let mut matching = Matching {
        row_of: vec![None; size],
        col_of: vec![None; size],
    };
    let mut remaining = S::one();
    let slack = S::tolerance(tol * (size * size) as f64);
    let mut terms = Vec::new();
    while remaining > slack {
        let mut complete = true;
        for c in 0..size {
            if matching.row_of[c].is_none() {
                let mut seen = vec![false; size];
                if !matching.augment(c, &w, &eps, &mut seen) {
                    complete = false;
                    break;
                }
            }
        }
        if !complete {
            if S::EXACT || terms.is_empty() {
                return Err(ThermoError::NoPerfectMatching);
            }
            break;
        }
        let perm: Vec<usize> = matching.row_of.iter().map(|r| r.expect("complete")).collect();
        let theta = perm
            .iter()
            .enumerate()
            .map(|(c, &r)| w[r][c].clone())
            .fold(None, |acc: Option<S>, v| match acc {
                Some(a) if a <= v => Some(a),
                _ => Some(v),
            })
            .expect("nonempty");
        for (c, &r) in perm.iter().enumerate() {
            w[r][c] = w[r][c].clone() - theta.clone();
            if w[r][c] <= eps {
                w[r][c] = S::zero();
                matching.row_of[c] = None;
                matching.col_of[r] = None;
            }
        }
        remaining = remaining - theta.clone();
        terms.push((theta, perm));
    }
    Ok(terms)
}

/// `P_{i|j}` = (slots of block `j` sent into block `i`) / `d_j`.
pub fn pull_back<S: Scalar>(perm: &[usize], ctx: &GibbsContext) -> Result<ThermoPermutation<S>> {
    let counts = pullback_counts(perm, ctx)?;
    let d = ctx.degeneracies()?;
    let cols = (0..ctx.n())
        .map(|j| (0..ctx.n()).map(|i| S::ratio(counts[i][j], d[j])).collect())
        .collect();
    Ok(ThermoPermutation {
        lifted_perm: perm.to_vec(),
        pulled_back: StochasticMatrix::from_columns(cols)?,
    })
}

/// `counts[i][j]` = number of block-`j` slots mapped into block `i`.
pub fn pullback_counts(perm: &[usize], ctx: &GibbsContext) -> Result<Vec<Vec<u64>>> {
    let block = slot_blocks(ctx)?;
    if perm.len() != block.len() {
        return Err(ThermoError::DimensionMismatch {
            expected: block.len(),
            found: perm.len(),
        });
    }
    let mut hit = vec![false; perm.len()];
    for &s in perm {
        if s >= perm.len() || std::mem::replace(&mut hit[s], true) {
            return Err(ThermoError::InvalidParameter("not a permutation of the slots".into()));
        }
    }
    let n = ctx.n();
    let mut counts = vec![vec![0u64; n]; n];
    for (slot, &target) in perm.iter().enumerate() {
        counts[block[target]][block[slot]] += 1;
    }
    Ok(counts)
}

/// `T = Σ λ_k P^k` with identical pullbacks merged.
pub fn decompose<S: Scalar>(t: &StochasticMatrix<S>, ctx: &GibbsContext, tol: f64) -> Result<ConvexDecomposition<S>> {
    let lifted = lift(t, ctx, tol)?;
    let terms = birkhoff_von_neumann(&lifted, tol)?;
    let mut merged: BTreeMap<Vec<Vec<u64>>, (S, Vec<usize>)> = BTreeMap::new();
    let mut order = Vec::new();
    for (weight, perm) in terms {
        let key = pullback_counts(&perm, ctx)?;
        match merged.get_mut(&key) {
            Some(entry) => entry.0 = entry.0.clone() + weight,
            None => {
                order.push(key.clone());
                merged.insert(key, (weight, perm));
            }
        }
    }
    let terms = order
        .into_iter()
        .map(|key| {
            let (weight, perm) = merged.remove(&key).expect("key present");
            Ok(DecompositionTerm {
                weight,
                factor: pull_back(&perm, ctx)?,
            })
        })
        .collect::<Result<_>>()?;
    Ok(ConvexDecomposition { terms })
}

/// One draw: pick `k ~ λ`, return `P^k p`.
pub fn sample_process<S: Scalar, R: Rng>(
    dec: &ConvexDecomposition<S>,
    p: &Population<S>,
    rng: &mut R,
) -> Result<Population<S>> {
    let k = term_sampler(dec)?.sample(rng);
    dec.terms[k].factor.pulled_back.apply_population(p)
}

fn term_sampler<S: Scalar>(dec: &ConvexDecomposition<S>) -> Result<WeightedIndex<f64>> {
    WeightedIndex::new(dec.terms.iter().map(|t| t.weight.to_f64().max(0.0)))
        .map_err(|e| ThermoError::InvalidParameter(format!("decomposition weights: {e}")))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Simulation {
    /// Draws per term.
    pub counts: Vec<u64>,
    /// Empirical mean of `P^k p` over the draws.
    pub mean: Vec<f64>,
    /// Exact `T p` from the weights, for comparison.
    pub expected: Vec<f64>,
    /// Standard error of the mean per coordinate.
    pub std_error: Vec<f64>,
}

/// Monte-Carlo estimate of `T p` from `samples` independent draws.
pub fn simulate<S: Scalar>(dec: &ConvexDecomposition<S>, p: &Population<S>, samples: u64, seed: u64) -> Result<Simulation> {
    if samples == 0 {
        return Err(ThermoError::InvalidParameter("samples must be positive".into()));
    }
    let sampler = term_sampler(dec)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut counts = vec![0u64; dec.terms.len()];
    for _ in 0..samples {
        counts[sampler.sample(&mut rng)] += 1;
    }
    let images: Vec<Vec<f64>> = dec
        .terms
        .iter()
        .map(|t| Ok(t.factor.pulled_back.apply_population(p)?.to_f64().into_vec()))
        .collect::<Result<_>>()?;
    let weights: Vec<f64> = dec.terms.iter().map(|t| t.weight.to_f64()).collect();
    let total_w: f64 = weights.iter().sum();
    let n = p.len();
    let mut mean = vec![0.0; n];
    let mut expected = vec![0.0; n];
    let mut second = vec![0.0; n];
    for ((img, &c), &w) in images.iter().zip(&counts).zip(&weights) {
        for i in 0..n {
            mean[i] += c as f64 * img[i] / samples as f64;
            expected[i] += w / total_w * img[i];
            second[i] += w / total_w * img[i] * img[i];
        }
    }
    let std_error = (0..n)
        .map(|i| ((second[i] - expected[i] * expected[i]).max(0.0) / samples as f64).sqrt())
        .collect();
    Ok(Simulation {
        counts,
        mean,
        expected,
        std_error,
    })
}

/// Uniformly random permutation of the `D` slots.
pub fn random_slot_permutation<R: Rng>(ctx: &GibbsContext, rng: &mut R) -> Result<Vec<usize>> {
    let mut perm: Vec<usize> = (0..ctx.total()? as usize).collect();
    perm.shuffle(rng);
    Ok(perm)
}

/// Convex mixture of `terms` random pullbacks with random rational weights.
pub fn random_pullback_mixture<R: Rng>(ctx: &GibbsContext, terms: usize, rng: &mut R) -> Result<StochasticMatrix<Rational>> {
    let raw: Vec<i64> = (0..terms.max(1)).map(|_| rng.gen_range(1..=20)).collect();
    let total: i64 = raw.iter().sum();
    let mut t = StochasticMatrix::zeros(ctx.n());
    for w in raw {
        let perm = random_slot_permutation(ctx, rng)?;
        let p: ThermoPermutation<Rational> = pull_back(&perm, ctx)?;
        t.scaled_add(&rational(w, total), &p.pulled_back);
    }
    Ok(t)
}

/// Product of `steps` random EDPs with `p_down` drawn from `{0, 1/k, …, 1}`.
/// Degenerate spectra without any usable pair give the identity.
pub fn random_edp_product<R: Rng>(ctx: &GibbsContext, steps: usize, rng: &mut R) -> Result<StochasticMatrix<Rational>> {
    let d = ctx.degeneracies()?;
    let pairs: Vec<(usize, usize)> = (0..d.len())
        .flat_map(|i| (0..d.len()).map(move |j| (i, j)))
        .filter(|&(i, j)| d[i] > d[j])
        .collect();
    let mut t = StochasticMatrix::identity(ctx.n());
    if pairs.is_empty() {
        return Ok(t);
    }
    for _ in 0..steps {
        let (lo, hi) = pairs[rng.gen_range(0..pairs.len())];
        let k = rng.gen_range(1..=12);
        let step = EdpStep::new(lo, hi, rational(rng.gen_range(0..=k), k), ctx)?;
        t = step.to_matrix(ctx)?.compose(&t);
    }
    Ok(t)
}
