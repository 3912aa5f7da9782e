//! Relaxation dynamics: exponential relaxation toward `N·g`, partial level
//! thermalisations (PLT), repeated EDPs on one pair, the Markovianity test for
//! EDPs, and the thermalisation predicate.

use std::cmp::Ordering;

use serde::Serialize;

use crate::error::{Result, ThermoError};
use crate::gibbs::GibbsContext;
use crate::majorization::{beta_order, curve_witness, BetaOrder, CurveWitness};
use crate::model::{check_pair, pair_ratio, EdpStep, Population};
use crate::numeric::Scalar;

/// `(x_lo, x_hi) ↦ (1 − ε)(x_lo, x_hi) + ε·N_pair·g_pair`, where `g_pair` is
/// the Gibbs state restricted to the pair.
#[derive(Debug, Clone, PartialEq)]
pub struct PltStep<S> {
    pub lo: usize,
    pub hi: usize,
    pub epsilon: S,
}

impl<S: Scalar> PltStep<S> {
    pub fn new(lo: usize, hi: usize, epsilon: S, ctx: &GibbsContext) -> Result<Self> {
        check_pair(lo, hi, ctx)?;
        if epsilon.is_negative() || epsilon > S::one() {
            return Err(ThermoError::InvalidParameter(format!("epsilon = {epsilon} is outside [0, 1]")));
        }
        Ok(PltStep { lo, hi, epsilon })
    }

    /// The same map as an EDP: `p_down = ε/(1 + κ)`.
    pub fn to_edp(&self, ctx: &GibbsContext) -> Result<EdpStep<S>> {
        let kappa: S = pair_ratio(self.lo, self.hi, ctx)?;
        EdpStep::new(self.lo, self.hi, self.epsilon.clone() / (S::one() + kappa), ctx)
    }

    /// Inverse of [`PltStep::to_edp`]; only Markovian EDPs qualify.
    pub fn from_edp(step: &EdpStep<S>, ctx: &GibbsContext) -> Result<Option<Self>> {
        let kappa: S = pair_ratio(step.lo, step.hi, ctx)?;
        let epsilon = step.p_down.clone() * (S::one() + kappa);
        if epsilon > S::one() {
            return Ok(None);
        }
        Ok(Some(PltStep::new(step.lo, step.hi, epsilon, ctx)?))
    }
}

/// `p(t) = e^{−t/ξ} p(0) + N(1 − e^{−t/ξ}) g`, with ξ a time constant.
pub fn relax(p0: &Population<f64>, t: f64, xi: f64, ctx: &GibbsContext) -> Result<Population<f64>> {
    if !(xi > 0.0 && xi.is_finite()) {
        return Err(ThermoError::InvalidParameter(format!("xi must be positive, got {xi}")));
    }
    if !(t >= 0.0) {
        return Err(ThermoError::InvalidParameter(format!("t must be nonnegative, got {t}")));
    }
    p0.expect_len(ctx.n())?;
    let keep = (-t / xi).exp();
    let norm = p0.norm();
    let x = p0
        .as_slice()
        .iter()
        .zip(ctx.weights())
        .map(|(p, g)| keep * p + norm * (1.0 - keep) * g)
        .collect();
    Ok(Population::from_vec_unchecked(x))
}

pub fn apply_plt<S: Scalar>(step: &PltStep<S>, x: &Population<S>, ctx: &GibbsContext) -> Result<Population<S>> {
    check_pair(step.lo, step.hi, ctx)?;
    x.expect_len(ctx.n())?;
    let kappa: S = pair_ratio(step.lo, step.hi, ctx)?;
    let mut out = x.as_slice().to_vec();
    let (lo, hi) = (step.lo, step.hi);
    let pair = out[lo].clone() + out[hi].clone();
    let target_lo = pair.clone() / (S::one() + kappa);
    let target_hi = pair - target_lo.clone();
    let keep = S::one() - step.epsilon.clone();
    out[lo] = keep.clone() * out[lo].clone() + step.epsilon.clone() * target_lo;
    out[hi] = keep * out[hi].clone() + step.epsilon.clone() * target_hi;
    Ok(Population::from_vec_unchecked(out))
}

fn pow<S: Scalar>(base: &S, n: u64) -> S {
    let mut result = S::one();
    let mut b = base.clone();
    let mut e = n;
    while e > 0 {
        if e & 1 == 1 {
            result = result * b.clone();
        }
        b = b.clone() * b;
        e >>= 1;
    }
    result
}

/// `n` applications of `step` in closed form:
/// `x_lo(n) = x_lo(0)(1 − λZ)^n + (N_pair/Z)(1 − (1 − λZ)^n)` with `λ = p_down`
/// and `Z = 1 + κ`.
pub fn repeated_edp_limit<S: Scalar>(step: &EdpStep<S>, x: &Population<S>, n: u64, ctx: &GibbsContext) -> Result<Population<S>> {
    check_pair(step.lo, step.hi, ctx)?;
    x.expect_len(ctx.n())?;
    let kappa: S = pair_ratio(step.lo, step.hi, ctx)?;
    let z = S::one() + kappa;
    let factor = pow(&(S::one() - step.p_down.clone() * z.clone()), n);
    let mut out = x.as_slice().to_vec();
    let (lo, hi) = (step.lo, step.hi);
    let pair = out[lo].clone() + out[hi].clone();
    let new_lo = out[lo].clone() * factor.clone() + pair.clone() / z * (S::one() - factor);
    out[hi] = pair - new_lo.clone();
    out[lo] = new_lo;
    Ok(Population::from_vec_unchecked(out))
}

/// Whether the EDP is `e^{Lt}` for a detailed-balanced generator on its pair:
/// `det = 1 − p_down(1 + κ) ≥ 0`.
pub fn is_markovian_edp<S: Scalar>(step: &EdpStep<S>, ctx: &GibbsContext) -> Result<bool> {
    let kappa: S = pair_ratio(step.lo, step.hi, ctx)?;
    Ok(step.p_down.clone() * (S::one() + kappa) <= S::one())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThermalisationVerdict {
    pub verdict: bool,
    pub majorizes: bool,
    /// No pair of levels has its ratio order strictly reversed.
    pub orders_compatible: bool,
    pub beta_order_p: Vec<usize>,
    pub beta_order_q: Vec<usize>,
    /// First Lorenz-curve elbow where `q` rises above `p`, if any.
    pub witness: Option<(f64, f64)>,
}

/// `q` is a thermalisation of `p` when `p` thermo-majorises `q` and the two
/// β-orders agree. Ties in `q` (e.g. `q = N·g`) are compatible with any order
/// of `p`, so the orders are compared as weak orders: no pair `i, j` may have
/// `p_i/g_i > p_j/g_j` while `q_i/g_i < q_j/g_j`.
pub fn is_thermalisation_of<S: Scalar>(
    p: &Population<S>,
    q: &Population<S>,
    ctx: &GibbsContext,
    tol: f64,
) -> Result<ThermalisationVerdict> {
    let CurveWitness { elbow, deficit } = curve_witness(p, q, ctx, tol)?;
    let majorizes = !deficit.is_positive() || deficit <= S::tolerance(tol);
    let g = ctx.gibbs::<S>()?;
    let eps = S::tolerance(tol);
    let cmp = |x: &[S], i: usize, j: usize| -> Ordering {
        let diff = x[i].clone() * g[j].clone() - x[j].clone() * g[i].clone();
        if diff > eps {
            Ordering::Greater
        } else if diff < -eps.clone() {
            Ordering::Less
        } else {
            Ordering::Equal
        }
    };
    let n = ctx.n();
    let (ps, qs) = (p.as_slice(), q.as_slice());
    let orders_compatible = (0..n).all(|i| {
        (0..n).all(|j| !(cmp(ps, i, j) == Ordering::Greater && cmp(qs, i, j) == Ordering::Less))
    });
    let BetaOrder { perm: beta_order_p } = beta_order(p, ctx)?;
    let BetaOrder { perm: beta_order_q } = beta_order(q, ctx)?;
    Ok(ThermalisationVerdict {
        verdict: majorizes && orders_compatible,
        majorizes,
        orders_compatible,
        beta_order_p,
        beta_order_q,
        witness: (!majorizes).then(|| (elbow.to_f64(), deficit.to_f64())),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::majorization::thermo_majorizes;
    use crate::numeric::{rational, Rational};
    use crate::synthesis::apply_edp;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn ctx21() -> GibbsContext {
        GibbsContext::from_degeneracies(vec![2, 1]).unwrap()
    }

    fn pop(x: &[(i64, i64)]) -> Population<Rational> {
        Population::new(x.iter().map(|&(a, b)| rational(a, b)).collect()).unwrap()
    }

    #[test]
    fn relax_examples() {
        let ctx = GibbsContext::from_energies_float(&[0.0, 1.0, 2.5]).unwrap();
        let p0 = Population::new(vec![0.1, 0.2, 0.7]).unwrap();
        assert_eq!(relax(&p0, 0.0, 2.0, &ctx).unwrap(), p0);
        let far = relax(&p0, 1e4, 2.0, &ctx).unwrap();
        for (a, b) in far.as_slice().iter().zip(ctx.weights()) {
            assert!((a - b).abs() < 1e-15);
        }
        let half = relax(&p0, 2.0 * 2f64.ln(), 2.0, &ctx).unwrap();
        for i in 0..3 {
            assert!((half[i] - (p0[i] / 2.0 + ctx.weights()[i] / 2.0)).abs() < 1e-15);
        }
        assert!(relax(&p0, 1.0, 0.0, &ctx).is_err());
        let a = relax(&relax(&p0, 0.3, 1.7, &ctx).unwrap(), 1.1, 1.7, &ctx).unwrap();
        let b = relax(&p0, 1.4, 1.7, &ctx).unwrap();
        assert!(a.as_slice().iter().zip(b.as_slice()).all(|(x, y)| (x - y).abs() < 1e-12));
    }

    #[test]
    fn plt_examples() {
        let ctx = ctx21();
        let x = pop(&[(1, 1), (0, 1)]);
        let half = PltStep::new(0, 1, rational(1, 2), &ctx).unwrap();
        assert_eq!(apply_plt(&half, &x, &ctx).unwrap(), pop(&[(5, 6), (1, 6)]));
        let none = PltStep::new(0, 1, rational(0, 1), &ctx).unwrap();
        assert_eq!(apply_plt(&none, &x, &ctx).unwrap(), x);
        let full = PltStep::new(0, 1, rational(1, 1), &ctx).unwrap();
        assert_eq!(apply_plt(&full, &x, &ctx).unwrap(), pop(&[(2, 3), (1, 3)]));
        assert!(matches!(
            PltStep::new(1, 0, rational(1, 2), &ctx),
            Err(ThermoError::DegeneratePair { .. })
        ));
        // Induced transitions: p_{lo|hi} = ε/(1+κ), p_{hi|lo} = εκ/(1+κ).
        let edp = half.to_edp(&ctx).unwrap();
        assert_eq!(edp.p_down, rational(1, 3));
        assert_eq!(edp.p_up(&ctx).unwrap(), rational(1, 6));
        assert_eq!(apply_edp(&edp, &x, &ctx).unwrap(), apply_plt(&half, &x, &ctx).unwrap());
        assert_eq!(PltStep::from_edp(&edp, &ctx).unwrap(), Some(half));
    }

    #[test]
    fn markovian_examples() {
        let ctx = ctx21();
        let step = |p| EdpStep::new(0, 1, p, &ctx).unwrap();
        assert!(is_markovian_edp(&step(rational(0, 1)), &ctx).unwrap());
        assert!(!is_markovian_edp(&step(rational(1, 1)), &ctx).unwrap());
        assert!(is_markovian_edp(&step(rational(2, 3)), &ctx).unwrap());
        assert!(!is_markovian_edp(&step(rational(67, 100)), &ctx).unwrap());
        assert_eq!(PltStep::from_edp(&step(rational(1, 1)), &ctx).unwrap(), None);
    }

    #[test]
    fn repeated_edp_examples() {
        let ctx = GibbsContext::from_degeneracies(vec![3, 2, 1]).unwrap();
        let x = pop(&[(1, 10), (3, 10), (6, 10)]);
        let step = EdpStep::new(0, 2, rational(1, 5), &ctx).unwrap();
        assert_eq!(repeated_edp_limit(&step, &x, 0, &ctx).unwrap(), x);
        let mut direct = x.clone();
        for n in 1..=20 {
            direct = apply_edp(&step, &direct, &ctx).unwrap();
            assert_eq!(repeated_edp_limit(&step, &x, n, &ctx).unwrap(), direct);
        }
        // λZ = 1: the pair reaches its Gibbs split after one step.
        let fixed = EdpStep::new(0, 2, rational(3, 4), &ctx).unwrap();
        let once = repeated_edp_limit(&fixed, &x, 1, &ctx).unwrap();
        assert_eq!(once, pop(&[(21, 40), (3, 10), (7, 40)]));
        assert_eq!(repeated_edp_limit(&fixed, &x, 9, &ctx).unwrap(), once);
    }

    #[test]
    fn thermalisation_examples() {
        let ctx = ctx21();
        let p = pop(&[(1, 1), (0, 1)]);
        assert!(is_thermalisation_of(&p, &p, &ctx, 0.0).unwrap().verdict);
        let v = is_thermalisation_of(&p, &pop(&[(2, 5), (3, 5)]), &ctx, 0.0).unwrap();
        assert!(!v.verdict && !v.orders_compatible && !v.majorizes);
        // Order flip alone: q = (0.55, 0.45) is reachable but reverses the ratios.
        let v = is_thermalisation_of(&p, &pop(&[(11, 20), (9, 20)]), &ctx, 0.0).unwrap();
        assert!(!v.verdict && !v.orders_compatible && v.majorizes);
        let g = pop(&[(2, 3), (1, 3)]);
        assert!(is_thermalisation_of(&p, &g, &ctx, 0.0).unwrap().verdict);
        let v = is_thermalisation_of(&g, &p, &ctx, 0.0).unwrap();
        assert!(!v.verdict && !v.majorizes && v.witness.is_some());
    }

    #[test]
    fn relaxation_is_a_thermalisation() {
        let ctx = GibbsContext::from_energies_float(&[0.0, 0.4, 1.3, 2.0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let raw: Vec<f64> = (0..4).map(|_| rng.gen_range(0.0..1.0)).collect();
            let total: f64 = raw.iter().sum();
            let p = Population::new(raw.iter().map(|v| v / total).collect()).unwrap();
            for t in [0.0, 0.1, 0.5, 1.0, 3.0, 10.0] {
                let q = relax(&p, t, 1.0, &ctx).unwrap();
                assert!(is_thermalisation_of(&p, &q, &ctx, 1e-12).unwrap().verdict);
            }
        }
    }

    /// Random PLT sequences stay inside the thermalisation set, and whenever
    /// the predicate rejects a target no random PLT sequence reaches it.
    #[test]
    fn plt_sequences_respect_the_predicate() {
        let ctx = GibbsContext::from_degeneracies(vec![4, 2, 1]).unwrap();
        let pairs = [(0, 1), (0, 2), (1, 2)];
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let random_pop = |rng: &mut ChaCha8Rng| {
            let raw: Vec<i64> = (0..3).map(|_| rng.gen_range(1..=30)).collect();
            let total: i64 = raw.iter().sum();
            Population::new(raw.iter().map(|&v| rational(v, total)).collect()).unwrap()
        };
        for _ in 0..100 {
            let p = random_pop(&mut rng);
            let mut q = p.clone();
            for _ in 0..6 {
                let (lo, hi) = pairs[rng.gen_range(0..3)];
                let eps = rational(rng.gen_range(0..=10), 10);
                q = apply_plt(&PltStep::new(lo, hi, eps, &ctx).unwrap(), &q, &ctx).unwrap();
                assert!(thermo_majorizes(&p, &q, &ctx, 0.0).unwrap());
            }
            let target = random_pop(&mut rng);
            if !is_thermalisation_of(&p, &target, &ctx, 0.0).unwrap().verdict {
                for _ in 0..50 {
                    let mut x = p.clone();
                    for _ in 0..4 {
                        let (lo, hi) = pairs[rng.gen_range(0..3)];
                        let eps = rational(rng.gen_range(0..=10), 10);
                        x = apply_plt(&PltStep::new(lo, hi, eps, &ctx).unwrap(), &x, &ctx).unwrap();
                    }
                    assert_ne!(x, target);
                }
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn plt_is_a_markovian_edp(num in 0i64..=20, d_lo in 2u64..8, seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let d_hi = rng.gen_range(1..d_lo);
            let ctx = GibbsContext::from_degeneracies(vec![d_lo, d_hi]).unwrap();
            let plt = PltStep::new(0, 1, rational(num, 20), &ctx).unwrap();
            let edp = plt.to_edp(&ctx).unwrap();
            prop_assert!(is_markovian_edp(&edp, &ctx).unwrap());
            prop_assert_eq!(PltStep::from_edp(&edp, &ctx).unwrap(), Some(plt));
            let x = pop(&[(rng.gen_range(1..10), 10), (rng.gen_range(0..10), 10)]);
            let y = apply_plt(&PltStep::new(0, 1, rational(num, 20), &ctx).unwrap(), &x, &ctx).unwrap();
            prop_assert_eq!(y, apply_edp(&edp, &x, &ctx).unwrap());
        }
    }
}
