//! Thermo-majorisation: β-ordering, Lorenz curves, the three equivalent
//! decision routes, the slot embedding, and relative entropy.

use std::cmp::Ordering;

use crate::error::{Result, ThermoError};
use crate::gibbs::GibbsContext;
use crate::lp;
use crate::model::Population;
use crate::numeric::{self, Scalar};

/// Levels listed from the largest `p_i / g_i` to the smallest.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BetaOrder {
    pub perm: Vec<usize>,
}

impl BetaOrder {
    /// `rank[level]` = position of `level` in the order.
    pub fn ranks(&self) -> Vec<usize> {
        let mut rank = vec![0; self.perm.len()];
        for (k, &level) in self.perm.iter().enumerate() {
            rank[level] = k;
        }
        rank
    }
}

/// Compares `x_i / g_i` with `x_j / g_j` without dividing.
pub(crate) fn cmp_ratio<S: Scalar>(x: &[S], g: &[S], i: usize, j: usize) -> Ordering {
    let lhs = x[i].clone() * g[j].clone();
    let rhs = x[j].clone() * g[i].clone();
    lhs.partial_cmp(&rhs).unwrap_or(Ordering::Equal)
}

/// Ratio descending, then `x_i` descending, then index ascending.
pub(crate) fn beta_order_of<S: Scalar>(x: &[S], g: &[S]) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..x.len()).collect();
    perm.sort_by(|&i, &j| {
        cmp_ratio(x, g, j, i)
            .then_with(|| x[j].partial_cmp(&x[i]).unwrap_or(Ordering::Equal))
            .then(i.cmp(&j))
    });
    perm
}

pub fn beta_order<S: Scalar>(p: &Population<S>, ctx: &GibbsContext) -> Result<BetaOrder> {
    p.expect_len(ctx.n())?;
    let g = ctx.gibbs::<S>()?;
    Ok(BetaOrder {
        perm: beta_order_of(p.as_slice(), &g),
    })
}

/// Piecewise-linear thermo-majorisation curve through `(Σ g, Σ p)` taken in
/// β-order.
#[derive(Debug, Clone, PartialEq)]
pub struct LorenzCurve<S> {
    pub points: Vec<(S, S)>,
}

impl<S: Scalar> LorenzCurve<S> {
    pub(crate) fn from_values(x: &[S], g: &[S]) -> Self {
        let order = beta_order_of(x, g);
        let mut points = Vec::with_capacity(x.len() + 1);
        let (mut gx, mut px) = (S::zero(), S::zero());
        points.push((gx.clone(), px.clone()));
        for level in order {
            gx = gx + g[level].clone();
            px = px + x[level].clone();
            points.push((gx.clone(), px.clone()));
        }
        LorenzCurve { points }
    }

    /// Linear interpolation; clamps outside `[0, 1]`.
    pub fn eval(&self, x: &S) -> S {
        let first = &self.points[0];
        if *x <= first.0 {
            return first.1.clone();
        }
        for w in self.points.windows(2) {
            let ((x0, y0), (x1, y1)) = (&w[0], &w[1]);
            if x <= x1 {
                let width = x1.clone() - x0.clone();
                if width.is_zero() {
                    return y1.clone();
                }
                let t = (x.clone() - x0.clone()) / width;
                return y0.clone() + t * (y1.clone() - y0.clone());
            }
        }
        self.points.last().expect("curve has points").1.clone()
    }

    pub fn elbows(&self) -> impl Iterator<Item = &S> {
        self.points.iter().map(|(x, _)| x)
    }

    /// Slopes never increase along the curve.
    pub fn is_concave(&self) -> bool {
        let slopes: Vec<(S, S)> = self
            .points
            .windows(2)
            .map(|w| (w[1].0.clone() - w[0].0.clone(), w[1].1.clone() - w[0].1.clone()))
            .collect();
        slopes.windows(2).all(|s| {
            let ((dx0, dy0), (dx1, dy1)) = (&s[0], &s[1]);
            dy1.clone() * dx0.clone() <= dy0.clone() * dx1.clone()
        })
    }
}

pub fn lorenz_curve<S: Scalar>(p: &Population<S>, ctx: &GibbsContext) -> Result<LorenzCurve<S>> {
    p.expect_len(ctx.n())?;
    let g = ctx.gibbs::<S>()?;
    Ok(LorenzCurve::from_values(p.as_slice(), &g))
}

/// Largest shortfall of `L_p` below `L_q`, located at an elbow of either curve.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveWitness<S> {
    pub elbow: S,
    pub deficit: S,
}

fn check_norms<S: Scalar>(p: &[S], q: &[S], tol: f64) -> Result<()> {
    if p.len() != q.len() {
        return Err(ThermoError::DimensionMismatch {
            expected: p.len(),
            found: q.len(),
        });
    }
    let (np, nq) = (numeric::sum(p), numeric::sum(q));
    if !numeric::eq_tol(&np, &nq, &S::tolerance(tol)) {
        return Err(ThermoError::NormalizationMismatch {
            left: np.to_f64(),
            right: nq.to_f64(),
        });
    }
    Ok(())
}

/// The elbow where `L_q − L_p` is largest (ties: leftmost).
pub fn curve_witness<S: Scalar>(
    p: &Population<S>,
    q: &Population<S>,
    ctx: &GibbsContext,
    tol: f64,
) -> Result<CurveWitness<S>> {
    p.expect_len(ctx.n())?;
    check_norms(p.as_slice(), q.as_slice(), tol)?;
    let g = ctx.gibbs::<S>()?;
    let lp = LorenzCurve::from_values(p.as_slice(), &g);
    let lq = LorenzCurve::from_values(q.as_slice(), &g);
    let mut elbows: Vec<S> = lp.elbows().chain(lq.elbows()).cloned().collect();
    elbows.sort_by(|a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal));
    let mut best = CurveWitness {
        elbow: S::zero(),
        deficit: S::zero(),
    };
    for x in elbows {
        let deficit = lq.eval(&x) - lp.eval(&x);
        if deficit > best.deficit {
            best = CurveWitness { elbow: x, deficit };
        }
    }
    Ok(best)
}

pub fn thermo_majorizes_curve<S: Scalar>(
    p: &Population<S>,
    q: &Population<S>,
    ctx: &GibbsContext,
    tol: f64,
) -> Result<bool> {
    Ok(curve_witness(p, q, ctx, tol)?.deficit <= S::tolerance(tol))
}

/// `Σ_j |x_j − a g_j|`, i.e. `Σ g_j |x_j/g_j − a|`.
fn abs_profile<S: Scalar>(x: &[S], g: &[S], a: &S) -> S {
    x.iter()
        .zip(g)
        .fold(S::zero(), |acc, (xj, gj)| acc + (xj.clone() - a.clone() * gj.clone()).abs())
}

/// Checks `Σ g_j |q_j/g_j − a| ≤ Σ g_j |p_j/g_j − a|` at every kink in `a`.
/// Both sides equal `a − N` for large `a`, so the finite kinks suffice.
pub fn thermo_majorizes_abs<S: Scalar>(
    p: &Population<S>,
    q: &Population<S>,
    ctx: &GibbsContext,
    tol: f64,
) -> Result<bool> {
    p.expect_len(ctx.n())?;
    check_norms(p.as_slice(), q.as_slice(), tol)?;
    let g = ctx.gibbs::<S>()?;
    let tol = S::tolerance(tol);
    let kinks = std::iter::once(S::zero()).chain(
        p.as_slice()
            .iter()
            .chain(q.as_slice())
            .zip(g.iter().chain(&g))
            .map(|(x, gj)| x.clone() / gj.clone()),
    );
    for a in kinks {
        let lhs = abs_profile(q.as_slice(), &g, &a);
        let rhs = abs_profile(p.as_slice(), &g, &a);
        if !numeric::le_tol(&lhs, &rhs, &tol) {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Splits level `i` into `d_i` slots holding `p_i / d_i` each.
pub fn embed<S: Scalar>(p: &Population<S>, ctx: &GibbsContext) -> Result<Population<S>> {
    p.expect_len(ctx.n())?;
    let d = ctx.degeneracies()?;
    let mut out = Vec::with_capacity(ctx.total()? as usize);
    for (x, &di) in p.as_slice().iter().zip(d) {
        let share = x.clone() / S::from_u64(di);
        out.extend(std::iter::repeat(share).take(di as usize));
    }
    Ok(Population::from_vec_unchecked(out))
}

/// Block sums; a left inverse of [`embed`].
pub fn unembed<S: Scalar>(y: &Population<S>, ctx: &GibbsContext) -> Result<Population<S>> {
    let d = ctx.degeneracies()?;
    y.expect_len(ctx.total()? as usize)?;
    let mut slots = y.as_slice().iter();
    let out = d
        .iter()
        .map(|&di| numeric::sum(&slots.by_ref().take(di as usize).cloned().collect::<Vec<_>>()))
        .collect();
    Ok(Population::from_vec_unchecked(out))
}

/// Classical majorisation: descending partial sums of `x` dominate those of `y`.
pub fn majorizes_classical<S: Scalar>(x: &Population<S>, y: &Population<S>, tol: f64) -> Result<bool> {
    check_norms(x.as_slice(), y.as_slice(), tol)?;
    let tol = S::tolerance(tol);
    let sorted = |v: &[S]| {
        let mut v = v.to_vec();
        v.sort_by(|a, b| b.partial_cmp(a).unwrap_or(Ordering::Equal));
        v
    };
    let (xs, ys) = (sorted(x.as_slice()), sorted(y.as_slice()));
    let (mut sx, mut sy) = (S::zero(), S::zero());
    for (a, b) in xs.into_iter().zip(ys) {
        sx = sx + a;
        sy = sy + b;
        if !numeric::le_tol(&sy, &sx, &tol) {
            return Ok(false);
        }
    }
    Ok(true)
}

pub fn thermo_majorizes_embedded<S: Scalar>(
    p: &Population<S>,
    q: &Population<S>,
    ctx: &GibbsContext,
    tol: f64,
) -> Result<bool> {
    q.expect_len(ctx.n())?;
    majorizes_classical(&embed(p, ctx)?, &embed(q, ctx)?, tol)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Route {
    Curve,
    Abs,
    Embedded,
}

impl Route {
    pub const ALL: [Route; 3] = [Route::Curve, Route::Abs, Route::Embedded];

    pub fn name(self) -> &'static str {
        match self {
            Route::Curve => "curve",
            Route::Abs => "abs",
            Route::Embedded => "embedded",
        }
    }
}

pub fn thermo_majorizes_by<S: Scalar>(
    route: Route,
    p: &Population<S>,
    q: &Population<S>,
    ctx: &GibbsContext,
    tol: f64,
) -> Result<bool> {
    match route {
        Route::Curve => thermo_majorizes_curve(p, q, ctx, tol),
        Route::Abs => thermo_majorizes_abs(p, q, ctx, tol),
        Route::Embedded => thermo_majorizes_embedded(p, q, ctx, tol),
    }
}

/// `p ≻_T q` via the Lorenz-curve route.
pub fn thermo_majorizes<S: Scalar>(
    p: &Population<S>,
    q: &Population<S>,
    ctx: &GibbsContext,
    tol: f64,
) -> Result<bool> {
    thermo_majorizes_curve(p, q, ctx, tol)
}

/// Independent check: is there a stochastic `G ≥ 0` with `Gg = g` and `Gp = q`?
/// Solved as an LP over the `n²` entries of `G`.
pub fn gibbs_preserving_map_exists<S: Scalar>(
    p: &Population<S>,
    q: &Population<S>,
    ctx: &GibbsContext,
    tol: f64,
) -> Result<bool> {
    let n = ctx.n();
    p.expect_len(n)?;
    q.expect_len(n)?;
    let g = ctx.gibbs::<S>()?;
    // Variable (i, j) ↦ column index j * n + i, holding G_{i|j}.
    let var = |i: usize, j: usize| j * n + i;
    let mut a = Vec::with_capacity(3 * n);
    let mut b = Vec::with_capacity(3 * n);
    for j in 0..n {
        let mut row = vec![S::zero(); n * n];
        for i in 0..n {
            row[var(i, j)] = S::one();
        }
        a.push(row);
        b.push(S::one());
    }
    for (target, source) in [(&g, &g), (&q.as_slice().to_vec(), &p.as_slice().to_vec())] {
        for i in 0..n {
            let mut row = vec![S::zero(); n * n];
            for j in 0..n {
                row[var(i, j)] = source[j].clone();
            }
            a.push(row);
            b.push(target[i].clone());
        }
    }
    Ok(lp::feasible(&a, &b, tol))
}

/// `S(x‖g) = Σ x_i ln(x_i / g_i)` in nats, with `0 ln 0 = 0`.
pub fn relative_entropy<S: Scalar>(x: &Population<S>, ctx: &GibbsContext) -> Result<f64> {
    x.expect_len(ctx.n())?;
    let norm = x.norm().to_f64();
    if (norm - 1.0).abs() > 1e-9 {
        return Err(ThermoError::InvalidPopulation(format!(
            "relative entropy needs a normalised population (sum {norm})"
        )));
    }
    let g = ctx.weights();
    Ok(x.as_slice()
        .iter()
        .zip(g)
        .map(|(xi, gi)| {
            let xi = xi.to_f64();
            if xi > 0.0 {
                xi * (xi / gi).ln()
            } else {
                0.0
            }
        })
        .sum())
}

/// Extraction rate `S(x‖g) / w` of a perpetuum mobile using `x` as a resource.
pub fn perpetuum_rate<S: Scalar>(x: &Population<S>, ctx: &GibbsContext, w: f64) -> Result<f64> {
    if !(w > 0.0 && w.is_finite()) {
        return Err(ThermoError::InvalidParameter(format!("work w = {w} must be positive")));
    }
    Ok(relative_entropy(x, ctx)? / w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{EdpStep, StochasticMatrix};
    use crate::numeric::{rational, Rational};
    use proptest::prelude::*;

    fn ctx21() -> GibbsContext {
        GibbsContext::from_degeneracies(vec![2, 1]).unwrap()
    }

    fn pop(x: &[(i64, i64)]) -> Population<Rational> {
        Population::new(x.iter().map(|&(a, b)| rational(a, b)).collect()).unwrap()
    }

    #[test]
    fn beta_order_examples() {
        let ctx = ctx21();
        let g = Population::new(ctx.gibbs_rational().unwrap()).unwrap();
        assert_eq!(beta_order(&g, &ctx).unwrap().perm, vec![0, 1]);
        assert_eq!(beta_order(&pop(&[(1, 1), (0, 1)]), &ctx).unwrap().perm, vec![0, 1]);
        assert_eq!(beta_order(&pop(&[(1, 5), (4, 5)]), &ctx).unwrap().perm, vec![1, 0]);
        // Equal ratios: larger population first.
        let ctx3 = GibbsContext::from_degeneracies(vec![1, 2, 1]).unwrap();
        assert_eq!(
            beta_order(&pop(&[(1, 4), (1, 2), (1, 4)]), &ctx3).unwrap().perm,
            vec![1, 0, 2]
        );
    }

    #[test]
    fn lorenz_examples() {
        let ctx = ctx21();
        let curve = lorenz_curve(&pop(&[(1, 1), (0, 1)]), &ctx).unwrap();
        assert_eq!(
            curve.points,
            vec![
                (rational(0, 1), rational(0, 1)),
                (rational(2, 3), rational(1, 1)),
                (rational(1, 1), rational(1, 1)),
            ]
        );
        assert_eq!(curve.eval(&rational(1, 3)), rational(1, 2));
        let flat = lorenz_curve(&pop(&[(2, 3), (1, 3)]), &ctx).unwrap();
        assert_eq!(flat.eval(&rational(1, 2)), rational(1, 2));
        assert!(flat.is_concave() && curve.is_concave());
    }

    #[test]
    fn three_routes_on_examples() {
        let ctx = ctx21();
        let p = pop(&[(1, 1), (0, 1)]);
        let q = pop(&[(1, 2), (1, 2)]);
        let g = pop(&[(2, 3), (1, 3)]);
        for route in Route::ALL {
            assert!(thermo_majorizes_by(route, &p, &q, &ctx, 0.0).unwrap());
            assert!(!thermo_majorizes_by(route, &q, &p, &ctx, 0.0).unwrap());
            assert!(thermo_majorizes_by(route, &q, &g, &ctx, 0.0).unwrap());
        }
        let w = curve_witness(&q, &p, &ctx, 0.0).unwrap();
        assert_eq!(w.elbow, rational(2, 3));
        assert_eq!(w.deficit, rational(1, 4));
        assert!(gibbs_preserving_map_exists(&p, &q, &ctx, 0.0).unwrap());
        assert!(!gibbs_preserving_map_exists(&q, &p, &ctx, 0.0).unwrap());
    }

    #[test]
    fn normalisation_mismatch_is_an_error() {
        let ctx = ctx21();
        let err = thermo_majorizes_curve(&pop(&[(1, 1), (0, 1)]), &pop(&[(1, 1), (1, 1)]), &ctx, 1e-9)
            .unwrap_err();
        assert!(matches!(err, ThermoError::NormalizationMismatch { .. }));
    }

    #[test]
    fn embedding_examples() {
        let ctx = ctx21();
        let e = embed(&pop(&[(3, 5), (2, 5)]), &ctx).unwrap();
        assert_eq!(e.as_slice(), &[rational(3, 10), rational(3, 10), rational(2, 5)]);
        let eg = embed(&pop(&[(2, 3), (1, 3)]), &ctx).unwrap();
        assert!(eg.as_slice().iter().all(|v| *v == rational(1, 3)));
        let e1 = embed(&pop(&[(1, 1), (0, 1)]), &ctx).unwrap();
        assert_eq!(e1.as_slice(), &[rational(1, 2), rational(1, 2), rational(0, 1)]);
        assert_eq!(unembed(&e, &ctx).unwrap(), pop(&[(3, 5), (2, 5)]));
        assert_eq!(unembed(&eg, &ctx).unwrap(), pop(&[(2, 3), (1, 3)]));
        let lumpy = pop(&[(1, 2), (1, 10), (2, 5)]);
        assert_eq!(unembed(&lumpy, &ctx).unwrap(), pop(&[(3, 5), (2, 5)]));
        assert!(unembed(&pop(&[(1, 2), (1, 2)]), &ctx).is_err());
        assert!(embed(&pop(&[(1, 1), (0, 1)]), &GibbsContext::from_energies_float(&[0.0, 1.0]).unwrap()).is_err());
    }

    #[test]
    fn classical_examples() {
        let pure = pop(&[(1, 1), (0, 1), (0, 1)]);
        let uniform = pop(&[(1, 3), (1, 3), (1, 3)]);
        assert!(majorizes_classical(&pure, &uniform, 0.0).unwrap());
        assert!(majorizes_classical(&uniform, &uniform, 0.0).unwrap());
        let x = pop(&[(1, 2), (1, 2), (0, 1)]);
        let y = pop(&[(3, 5), (1, 5), (1, 5)]);
        assert!(!majorizes_classical(&x, &y, 0.0).unwrap());
    }

    #[test]
    fn entropy_examples() {
        let ctx = make_ctx();
        let g = Population::new(ctx.weights().to_vec()).unwrap();
        assert!(relative_entropy(&g, &ctx).unwrap().abs() < 1e-15);
        let pure = Population::new(vec![1.0, 0.0]).unwrap();
        assert!((relative_entropy(&pure, &ctx).unwrap() - 1.5f64.ln()).abs() < 1e-12);
        let half = Population::new(vec![0.5, 0.5]).unwrap();
        let expected = 0.5 * 0.75f64.ln() + 0.5 * 1.5f64.ln();
        assert!((relative_entropy(&half, &ctx).unwrap() - expected).abs() < 1e-12);
        assert!((expected - 0.0589).abs() < 1e-4);
        assert!((perpetuum_rate(&pure, &ctx, 1.0).unwrap() - 0.4055).abs() < 1e-4);
        assert!(
            (perpetuum_rate(&pure, &ctx, 2.0).unwrap() * 2.0 - perpetuum_rate(&pure, &ctx, 1.0).unwrap()).abs()
                < 1e-15
        );
        assert_eq!(perpetuum_rate(&g, &ctx, 3.0).unwrap().abs() < 1e-15, true);
        assert!(perpetuum_rate(&pure, &ctx, 0.0).is_err());
    }

    fn make_ctx() -> GibbsContext {
        crate::gibbs::make_gibbs_context(&[0.0, 2f64.ln()], 100).unwrap()
    }

    fn arb_instance() -> impl Strategy<Value = (Vec<u64>, Vec<u64>, Vec<u64>)> {
        (2usize..=6).prop_flat_map(|n| {
            (
                proptest::collection::vec(1u64..12, n),
                proptest::collection::vec(0u64..6, n),
                proptest::collection::vec(0u64..6, n),
            )
        })
    }

    fn normalised(x: &[u64]) -> Option<Population<Rational>> {
        let total: u64 = x.iter().sum();
        (total > 0)
            .then(|| Population::new(x.iter().map(|&v| rational(v as i64, total as i64)).collect()).unwrap())
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(300))]

        #[test]
        fn routes_agree((d, a, b) in arb_instance()) {
            let ctx = GibbsContext::from_degeneracies(d).unwrap();
            if let (Some(p), Some(q)) = (normalised(&a), normalised(&b)) {
                let verdicts: Vec<bool> = Route::ALL
                    .iter()
                    .map(|&r| thermo_majorizes_by(r, &p, &q, &ctx, 0.0).unwrap())
                    .collect();
                prop_assert!(verdicts.iter().all(|&v| v == verdicts[0]));
                let fp = p.to_f64();
                let fq = q.to_f64();
                prop_assert!(thermo_majorizes_curve(&fp, &fq, &ctx, 1e-12).unwrap() || !verdicts[0]);
            }
        }

        #[test]
        fn curves_are_concave_and_end_at_norm((d, a, _b) in arb_instance()) {
            let ctx = GibbsContext::from_degeneracies(d).unwrap();
            let p = Population::new(a.iter().map(|&v| rational(v as i64 + 1, 3)).collect()).unwrap();
            let curve = lorenz_curve(&p, &ctx).unwrap();
            prop_assert!(curve.is_concave());
            prop_assert_eq!(&curve.points.last().unwrap().1, &p.norm());
            prop_assert_eq!(&curve.points.last().unwrap().0, &rational(1, 1));
        }

        #[test]
        fn reflexive_and_transitive(
            (d, a, _b) in arb_instance(),
            moves in proptest::collection::vec((0usize..6, 0usize..6, 0u64..=8), 1..6),
        ) {
            let ctx = GibbsContext::from_degeneracies(d.clone()).unwrap();
            let Some(p) = normalised(&a) else { return Ok(()); };
            prop_assert!(thermo_majorizes(&p, &p, &ctx, 0.0).unwrap());
            // Walk p -> q -> r with random EDPs, then check p ≻ r.
            let mut chain = vec![p.clone()];
            let mut x = p.clone();
            for &(i, j, num) in &moves {
                let (i, j) = (i % d.len(), j % d.len());
                if d[i] > d[j] {
                    let step = EdpStep::new(i, j, rational(num as i64, 8), &ctx).unwrap();
                    let t: StochasticMatrix<Rational> = step.to_matrix(&ctx).unwrap();
                    x = t.apply_population(&x).unwrap();
                    chain.push(x.clone());
                }
            }
            for w in chain.windows(2) {
                prop_assert!(thermo_majorizes(&w[0], &w[1], &ctx, 0.0).unwrap());
            }
            prop_assert!(thermo_majorizes(&p, chain.last().unwrap(), &ctx, 0.0).unwrap());
        }
    }
}
