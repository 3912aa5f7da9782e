//! Building sequences of elementary detailed-balanced steps (EDPs) that carry
//! `p` to a thermo-majorised `q`.
//!
//! The construction runs in level space with exact rationals:
//!
//! 0. **Relabel.** Levels of equal multiplicity are permuted so that `p` has
//!    the same order as `q` inside each such class (an energy-preserving
//!    relabeling, recorded in [`EdpSequence::initial_relabeling`]).
//! 1. **Reorder.** Adjacent thermo-transpositions move `p` from its own β-order
//!    to the β-order of `q`. A thermo-transposition between β-adjacent levels
//!    swaps their ratios and keeps the Lorenz curve at its upper envelope. The
//!    order of swaps is found by depth-first search over adjacent-swap words,
//!    pruning any intermediate state that stops majorising `q`.
//! 2. **Transfer.** With both vectors in a common order, the T-transform loop
//!    (largest excess position `j`, first deficit position after it) moves
//!    `min(excess, deficit)` with one EDP. Every such step is feasible and fixes
//!    at least one more coordinate, so at most `n − 1` of them are needed.
//!    No EDP couples two degenerate levels, so such a transfer is routed
//!    through a third level when that keeps every intermediate state above
//!    `q`, and otherwise fails with [`ThermoError::DegeneratePair`].
//!
//! For three or more levels there are valid pairs with no EDP sequence at all
//! (e.g. a pure state can only spread to levels in a fixed order), so the
//! search can legitimately fail with [`ThermoError::NoEdpSequence`].

use num_traits::{One, Signed, Zero};

use crate::error::{Result, ThermoError};
use crate::gibbs::GibbsContext;
use crate::majorization::{beta_order_of, cmp_ratio, curve_witness, LorenzCurve};
use crate::model::{check_pair, pair_ratio, EdpStep, Population, StochasticMatrix};
use crate::model::{is_detailed_balanced, validate_stochastic};
use crate::numeric::{Rational, Scalar};

/// Node budget of the reordering search.
pub const SEARCH_BUDGET: usize = 20_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Reorder,
    Transfer,
}

impl Phase {
    pub fn name(self) -> &'static str {
        match self {
            Phase::Reorder => "reorder",
            Phase::Transfer => "transfer",
        }
    }
}

/// One ungrouped step. `positions` are `(j_ex, j_df)` in the working order;
/// `delta` is the population moved from `from` to `to`; `lambda = 1 − p_down`
/// is the identity weight of the step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord<S> {
    pub phase: Phase,
    pub positions: (usize, usize),
    pub from: usize,
    pub to: usize,
    pub delta: S,
    pub lambda: S,
    pub step: EdpStep<S>,
}

/// Steps are applied left to right: `steps[0]` acts on `p` first.
#[derive(Debug, Clone, PartialEq)]
pub struct EdpSequence<S> {
    pub steps: Vec<EdpStep<S>>,
    pub provenance: Vec<StepRecord<S>>,
    pub grouped: bool,
    /// β-orders of the source and the target.
    pub source_order: Vec<usize>,
    pub target_order: Vec<usize>,
    /// Permutations among levels of equal multiplicity applied before and
    /// after the steps: level `j`'s population moves to `perm[j]`. An empty
    /// vector means the identity.
    pub initial_relabeling: Vec<usize>,
    pub final_relabeling: Vec<usize>,
}

/// `out[perm[j]] = x[j]`; the identity when `perm` is empty.
pub fn relabel<S: Clone>(x: &[S], perm: &[usize]) -> Vec<S> {
    if perm.is_empty() {
        return x.to_vec();
    }
    let mut out = x.to_vec();
    for (j, &target) in perm.iter().enumerate() {
        out[target] = x[j].clone();
    }
    out
}

/// Whether `perm` is a permutation that only exchanges levels of equal weight.
pub fn is_energy_preserving_relabeling(perm: &[usize], ctx: &GibbsContext) -> bool {
    if perm.is_empty() {
        return true;
    }
    let n = ctx.n();
    let mut seen = vec![false; n];
    let same = |i: usize, j: usize| match ctx.rational() {
        Some(r) => r.d[i] == r.d[j],
        None => ctx.weights()[i] == ctx.weights()[j],
    };
    perm.len() == n
        && perm.iter().enumerate().all(|(j, &t)| {
            t < n && !std::mem::replace(&mut seen[t], true) && same(j, t)
        })
}

impl<S: Scalar> EdpSequence<S> {
    pub fn ungrouped_len(&self) -> usize {
        self.provenance.len()
    }

    pub fn to_matrix(&self, ctx: &GibbsContext) -> Result<StochasticMatrix<S>> {
        let relabeling = |perm: &[usize]| {
            if perm.is_empty() {
                StochasticMatrix::identity(ctx.n())
            } else {
                StochasticMatrix::permutation(perm)
            }
        };
        let mut t = relabeling(&self.initial_relabeling);
        for step in &self.steps {
            t = step.to_matrix(ctx)?.compose(&t);
        }
        Ok(relabeling(&self.final_relabeling).compose(&t))
    }
}

/// Applies one EDP to the two levels it couples.
pub fn apply_edp<S: Scalar>(step: &EdpStep<S>, p: &Population<S>, ctx: &GibbsContext) -> Result<Population<S>> {
    check_pair(step.lo, step.hi, ctx)?;
    p.expect_len(ctx.n())?;
    let kappa: S = pair_ratio(step.lo, step.hi, ctx)?;
    let mut x = p.as_slice().to_vec();
    let flow = step.p_down.clone() * (kappa * x[step.lo].clone() - x[step.hi].clone());
    x[step.lo] = x[step.lo].clone() - flow.clone();
    x[step.hi] = x[step.hi].clone() + flow;
    Ok(Population::from_vec_unchecked(x))
}

/// The single EDP equal to applying `a` then `b` on the same pair:
/// `p_down = a + b − a·b·(1 + κ)`. Two-level EDPs commute.
pub fn compose_edps_same_pair<S: Scalar>(a: &EdpStep<S>, b: &EdpStep<S>, ctx: &GibbsContext) -> Result<EdpStep<S>> {
    if (a.lo, a.hi) != (b.lo, b.hi) {
        return Err(ThermoError::DifferentPairs((a.lo, a.hi), (b.lo, b.hi)));
    }
    let kappa: S = pair_ratio(a.lo, a.hi, ctx)?;
    let p = a.p_down.clone() + b.p_down.clone()
        - a.p_down.clone() * b.p_down.clone() * (S::one() + kappa);
    // Float rounding can leave p a hair outside [0, 1].
    let p = if p.is_negative() {
        S::zero()
    } else if p > S::one() {
        S::one()
    } else {
        p
    };
    EdpStep::new(a.lo, a.hi, p, ctx)
}

/// Merges runs of consecutive steps on the same pair.
pub fn group_steps<S: Scalar>(steps: &[EdpStep<S>], ctx: &GibbsContext) -> Result<Vec<EdpStep<S>>> {
    let mut out: Vec<EdpStep<S>> = Vec::with_capacity(steps.len());
    for step in steps {
        match out.last_mut() {
            Some(last) if (last.lo, last.hi) == (step.lo, step.hi) => {
                *last = compose_edps_same_pair(last, step, ctx)?;
            }
            _ => out.push(step.clone()),
        }
    }
    out.retain(|s| !s.p_down.is_zero());
    Ok(out)
}

/// EDP that moves `amount` from level `from` to level `to` given the current
/// state `x`, or `None` when no EDP can do it.
fn transfer_step(
    x: &[Rational],
    from: usize,
    to: usize,
    amount: &Rational,
    g: &[Rational],
    ctx: &GibbsContext,
) -> Result<Option<EdpStep<Rational>>> {
    let (lo, hi, flow) = if g[from] > g[to] {
        (from, to, amount.clone())
    } else {
        (to, from, -amount.clone())
    };
    check_pair(lo, hi, ctx)?;
    let kappa = &g[hi] / &g[lo];
    let gradient = kappa * &x[lo] - &x[hi];
    if gradient.is_zero() {
        return Ok(None);
    }
    let p_down = flow / gradient;
    if p_down.is_negative() || p_down > Rational::one() {
        return Ok(None);
    }
    Ok(Some(EdpStep { lo, hi, p_down }))
}

/// Moves `amount` from `from` to `to` via `via`, keeping every intermediate
/// state above `q`.
#[allow(clippy::too_many_arguments)]
fn detour_steps(
    x: &[Rational],
    q: &[Rational],
    from: usize,
    via: usize,
    to: usize,
    amount: &Rational,
    g: &[Rational],
    ctx: &GibbsContext,
) -> Result<Option<Vec<(usize, usize, EdpStep<Rational>)>>> {
    let mut y = x.to_vec();
    let mut steps = Vec::with_capacity(2);
    for (a, b) in [(from, via), (via, to)] {
        let Some(step) = transfer_step(&y, a, b, amount, g, ctx)? else {
            return Ok(None);
        };
        apply_exact(&mut y, &step, g);
        if !majorizes_values(&y, q, g) {
            return Ok(None);
        }
        steps.push((a, b, step));
    }
    Ok(Some(steps))
}

fn apply_exact(x: &mut [Rational], step: &EdpStep<Rational>, g: &[Rational]) -> Rational {
    let kappa = &g[step.hi] / &g[step.lo];
    let flow = &step.p_down * (kappa * &x[step.lo] - &x[step.hi]);
    x[step.lo] -= &flow;
    x[step.hi] += &flow;
    flow
}

fn majorizes_values(x: &[Rational], q: &[Rational], g: &[Rational]) -> bool {
    let lx = LorenzCurve::from_values(x, g);
    let lq = LorenzCurve::from_values(q, g);
    let ok = lx.elbows().chain(lq.elbows()).all(|e| lx.eval(e) >= lq.eval(e));
    ok
}

struct Search<'a> {
    q: &'a [Rational],
    g: &'a [Rational],
    ctx: &'a GibbsContext,
    target_rank: Vec<usize>,
    explored: usize,
    degenerate: Option<(usize, usize)>,
}

impl Search<'_> {
    /// Returns the reordering steps that bring `order` to the target order.
    fn run(&mut self, x: Vec<Rational>, order: Vec<usize>, trail: &mut Vec<StepRecord<Rational>>) -> Result<Option<Vec<Rational>>> {
        self.explored += 1;
        if !majorizes_values(&x, self.q, self.g) {
            return Ok(None);
        }
        let inversions: Vec<usize> = (0..order.len().saturating_sub(1))
            .filter(|&k| self.target_rank[order[k]] > self.target_rank[order[k + 1]])
            .collect();
        if inversions.is_empty() {
            return Ok(Some(x));
        }
        for k in inversions {
            if self.explored >= SEARCH_BUDGET {
                return Ok(None);
            }
            let (a, b) = (order[k], order[k + 1]);
            let mut y = x.clone();
            let mut pushed = false;
            if cmp_ratio(&x, self.g, a, b) != std::cmp::Ordering::Equal {
                if self.g[a] == self.g[b] {
                    self.degenerate.get_or_insert((a.min(b), a.max(b)));
                    continue;
                }
                let (lo, hi) = if self.g[a] > self.g[b] { (a, b) } else { (b, a) };
                let step = EdpStep::thermo_transposition(lo, hi, self.ctx)?;
                let flow = apply_exact(&mut y, &step, self.g);
                let (from, to, delta) = if flow.is_negative() { (hi, lo, -flow) } else { (lo, hi, flow) };
                trail.push(StepRecord {
                    phase: Phase::Reorder,
                    positions: (k, k + 1),
                    from,
                    to,
                    delta,
                    lambda: Rational::zero(),
                    step,
                });
                pushed = true;
            }
            let mut next = order.clone();
            next.swap(k, k + 1);
            if let Some(done) = self.run(y, next, trail)? {
                return Ok(Some(done));
            }
            if pushed {
                trail.pop();
            }
        }
        Ok(None)
    }
}

/// Synthesises an EDP sequence from `p` to `q` (exact rationals only).
pub fn synthesize(
    p: &Population<Rational>,
    q: &Population<Rational>,
    ctx: &GibbsContext,
    group: bool,
) -> Result<EdpSequence<Rational>> {
    let n = ctx.n();
    p.expect_len(n)?;
    q.expect_len(n)?;
    let g = ctx.gibbs_rational()?;
    let witness = curve_witness(p, q, ctx, 0.0)?;
    if witness.deficit.is_positive() {
        return Err(ThermoError::NotMajorized {
            elbow: witness.elbow.to_f64(),
            deficit: witness.deficit.to_f64(),
        });
    }
    let initial_relabeling = degenerate_relabeling(p.as_slice(), q.as_slice(), ctx.degeneracies()?);
    let relabelled = relabel(p.as_slice(), &initial_relabeling);
    let (xp, xq) = (relabelled.as_slice(), q.as_slice());

    let source_order = beta_order_of(xp, &g);
    let mut target_order: Vec<usize> = (0..n).collect();
    target_order.sort_by(|&i, &j| {
        cmp_ratio(xq, &g, j, i)
            .then_with(|| cmp_ratio(xp, &g, j, i))
            .then_with(|| xp[j].cmp(&xp[i]))
            .then(i.cmp(&j))
    });
    let mut target_rank = vec![0; n];
    for (k, &level) in target_order.iter().enumerate() {
        target_rank[level] = k;
    }

    let mut search = Search {
        q: xq,
        g: &g,
        ctx,
        target_rank,
        explored: 0,
        degenerate: None,
    };
    let mut provenance = Vec::new();
    let Some(mut x) = search.run(xp.to_vec(), source_order.clone(), &mut provenance)? else {
        if let Some((lo, hi)) = search.degenerate {
            return Err(ThermoError::DegeneratePair { lo, hi });
        }
        return Err(ThermoError::NoEdpSequence {
            explored: search.explored,
        });
    };

    // Transfer phase along the target order.
    loop {
        let diff: Vec<Rational> = target_order.iter().map(|&l| &x[l] - &xq[l]).collect();
        let Some(j) = (0..n).rev().find(|&k| diff[k].is_positive()) else {
            break;
        };
        // The first later deficit, as in the T-transform loop; later ones only
        // when that pair is degenerate and no detour through a third level
        // works.
        let mut chosen = None;
        for (attempt, k) in (j + 1..n).filter(|&k| diff[k].is_negative()).enumerate() {
            let (from, to) = (target_order[j], target_order[k]);
            let delta = diff[j].clone().min(-diff[k].clone());
            let plan = if g[from] != g[to] {
                transfer_step(&x, from, to, &delta, &g, ctx)?
                    .filter(|step| {
                        let mut y = x.clone();
                        apply_exact(&mut y, step, &g);
                        attempt == 0 || majorizes_values(&y, xq, &g)
                    })
                    .map(|step| vec![(from, to, step)])
            } else {
                (0..n)
                    .filter(|&c| g[c] != g[from])
                    .find_map(|c| detour_steps(&x, xq, from, c, to, &delta, &g, ctx).transpose())
                    .transpose()?
            };
            if let Some(plan) = plan {
                chosen = Some((k, delta, plan));
                break;
            }
        }
        let Some((k, delta, plan)) = chosen else {
            let k = (j + 1..n).find(|&k| diff[k].is_negative()).expect("a positive excess is balanced by a later deficit");
            let (from, to) = (target_order[j], target_order[k]);
            if g[from] == g[to] {
                return Err(ThermoError::DegeneratePair {
                    lo: from.min(to),
                    hi: from.max(to),
                });
            }
            return Err(ThermoError::NoEdpSequence {
                explored: search.explored,
            });
        };
        for (from, to, step) in plan {
            apply_exact(&mut x, &step, &g);
            provenance.push(StepRecord {
                phase: Phase::Transfer,
                positions: (j, k),
                from,
                to,
                delta: delta.clone(),
                lambda: Rational::one() - &step.p_down,
                step,
            });
        }
    }
    debug_assert_eq!(x.as_slice(), xq);

    let raw: Vec<EdpStep<Rational>> = provenance.iter().map(|r| r.step.clone()).collect();
    let steps = if group { group_steps(&raw, ctx)? } else { raw };
    Ok(EdpSequence {
        steps,
        provenance,
        grouped: group,
        source_order,
        target_order,
        initial_relabeling,
        final_relabeling: (0..n).collect(),
    })
}

/// Relabeling within each class of equal multiplicity that gives `p` the
/// within-class order of `q`, so no step has to exchange degenerate levels.
fn degenerate_relabeling(p: &[Rational], q: &[Rational], d: &[u64]) -> Vec<usize> {
    let n = p.len();
    let mut perm: Vec<usize> = (0..n).collect();
    let mut done = vec![false; n];
    for i in 0..n {
        if done[i] {
            continue;
        }
        let class: Vec<usize> = (i..n).filter(|&j| d[j] == d[i]).collect();
        let mut by_p = class.clone();
        by_p.sort_by(|&a, &b| p[b].cmp(&p[a]).then(a.cmp(&b)));
        let mut by_q = class.clone();
        by_q.sort_by(|&a, &b| q[b].cmp(&q[a]).then(p[b].cmp(&p[a])).then(a.cmp(&b)));
        for (&from, &to) in by_p.iter().zip(&by_q) {
            perm[from] = to;
            done[from] = true;
        }
    }
    perm
}

#[derive(Debug, Clone, PartialEq)]
pub struct SequenceReport {
    pub ok: bool,
    /// First step that is invalid or after which the state stops majorising
    /// `q`; the last step when only the end state is off.
    pub failing_step: Option<usize>,
    pub reason: Option<String>,
    /// `‖final − q‖_∞`.
    pub residual: f64,
}

/// Replays `seq` on `p`, checking every step and the end state.
pub fn verify_sequence<S: Scalar>(
    seq: &EdpSequence<S>,
    p: &Population<S>,
    q: &Population<S>,
    ctx: &GibbsContext,
    tol: f64,
) -> SequenceReport {
    let fail = |index: Option<usize>, reason: String, residual: f64| SequenceReport {
        ok: false,
        failing_step: index,
        reason: Some(reason),
        residual,
    };
    if p.len() != ctx.n() || q.len() != ctx.n() {
        return fail(None, "dimension mismatch".into(), f64::INFINITY);
    }
    for perm in [&seq.initial_relabeling, &seq.final_relabeling] {
        if !is_energy_preserving_relabeling(perm, ctx) {
            return fail(None, "relabeling mixes levels of different energy".into(), f64::INFINITY);
        }
    }
    let mut x = Population::from_vec_unchecked(relabel(p.as_slice(), &seq.initial_relabeling));
    for (i, step) in seq.steps.iter().enumerate() {
        let matrix = match EdpStep::new(step.lo, step.hi, step.p_down.clone(), ctx).and_then(|s| s.to_matrix(ctx)) {
            Ok(m) => m,
            Err(e) => return fail(Some(i), e.to_string(), f64::INFINITY),
        };
        if !validate_stochastic(&matrix, tol) || !is_detailed_balanced(&matrix, ctx, tol) {
            return fail(Some(i), "step is not a detailed-balanced stochastic matrix".into(), f64::INFINITY);
        }
        x = match apply_edp(step, &x, ctx) {
            Ok(x) => x,
            Err(e) => return fail(Some(i), e.to_string(), f64::INFINITY),
        };
        match curve_witness(&x, q, ctx, tol) {
            Ok(w) if w.deficit <= S::tolerance(tol) => {}
            Ok(_) => return fail(Some(i), "state no longer thermo-majorises the target".into(), f64::INFINITY),
            Err(e) => return fail(Some(i), e.to_string(), f64::INFINITY),
        }
    }
    let x = relabel(x.as_slice(), &seq.final_relabeling);
    let residual = x
        .as_slice()
        .iter()
        .zip(q.as_slice())
        .map(|(a, b)| (a.clone() - b.clone()).abs().to_f64())
        .fold(0.0, f64::max);
    let exact_match = x
        .as_slice()
        .iter()
        .zip(q.as_slice())
        .all(|(a, b)| (a.clone() - b.clone()).abs() <= S::tolerance(tol));
    if !exact_match {
        let last = seq.steps.len().checked_sub(1);
        return fail(last, "end state differs from the target".into(), residual);
    }
    SequenceReport {
        ok: true,
        failing_step: None,
        reason: None,
        residual,
    }
}
