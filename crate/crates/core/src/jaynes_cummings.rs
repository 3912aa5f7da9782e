//! Two-level system resonantly coupled to a thermal bosonic mode.
//!
//! After a dimensionless interaction time `s`, the de-excitation and
//! excitation probabilities are
//! `J_down(s) = Σ_{n≥1} sin²(s√n) e^{−β̄(n−1)} / Z_B` and
//! `J_up(s) = Σ_{n≥1} sin²(s√n) e^{−β̄n} / Z_B`, with `Z_B = (1 − e^{−β̄})^{−1}`.
//! Truncating after `m` terms drops at most `e^{−β̄m}` from `J_down`.

use serde::{Deserialize, Serialize};

use crate::error::{Result, ThermoError};

/// Largest truncation order accepted by [`JcParams::new`].
pub const MAX_ORDER: u64 = 1_000_000;
/// Truncation order used for the certified lower bound.
pub const LOWER_BOUND_ORDER: u64 = 12;
/// A good single interaction time for the 12-term series.
pub const REFERENCE_S: f64 = 98.92;
const GRID_MAX_S: f64 = 200.0;
const GRID_STEP: f64 = 0.01;

const PLANCK: f64 = 6.626_070_15e-34;
const BOLTZMANN: f64 = 1.380_649e-23;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JcParams {
    pub beta_bar: f64,
    pub s: f64,
    pub m: u64,
    /// `e^{−β̄m}`, an upper bound on the dropped part of `J_down`.
    pub tail_bound: f64,
}

fn check_beta(beta_bar: f64) -> Result<()> {
    if beta_bar.is_finite() && beta_bar > 0.0 {
        Ok(())
    } else {
        Err(ThermoError::InvalidParameter(format!(
            "beta_bar must be positive and finite, got {beta_bar}"
        )))
    }
}

impl JcParams {
    /// Picks `m = ⌈ln(1/tol)/β̄⌉` so that the tail is at most `tol`.
    pub fn new(beta_bar: f64, s: f64, tol: f64) -> Result<Self> {
        check_beta(beta_bar)?;
        if !(tol > 0.0 && tol < 1.0) {
            return Err(ThermoError::InvalidParameter(format!("tolerance must lie in (0,1), got {tol}")));
        }
        let needed = ((1.0 / tol).ln() / beta_bar).ceil().max(1.0);
        if needed > MAX_ORDER as f64 {
            return Err(ThermoError::TruncationTooLarge {
                needed: if needed.is_finite() { needed as u64 } else { u64::MAX },
                cap: MAX_ORDER,
            });
        }
        Self::with_order(beta_bar, s, needed as u64)
    }

    pub fn with_order(beta_bar: f64, s: f64, m: u64) -> Result<Self> {
        check_beta(beta_bar)?;
        if !(s.is_finite() && s >= 0.0) {
            return Err(ThermoError::InvalidParameter(format!("s must be finite and nonnegative, got {s}")));
        }
        Ok(JcParams {
            beta_bar,
            s,
            m,
            tail_bound: (-beta_bar * m as f64).exp(),
        })
    }
}

/// `1 − e^{−β̄}` without cancellation at small `β̄`.
fn one_minus_boltzmann(beta_bar: f64) -> f64 {
    -(-beta_bar).exp_m1()
}

fn truncated_down(beta_bar: f64, s: f64, m: u64) -> f64 {
    let r = (-beta_bar).exp();
    let mut weight = one_minus_boltzmann(beta_bar);
    let mut total = 0.0;
    for n in 1..=m {
        let sn = (s * (n as f64).sqrt()).sin();
        total += sn * sn * weight;
        weight *= r;
        if weight == 0.0 {
            break;
        }
    }
    total
}

/// `(J_up, J_down)` from the first `m` terms of each series.
pub fn j_probabilities(params: &JcParams) -> Result<(f64, f64)> {
    check_beta(params.beta_bar)?;
    let r = (-params.beta_bar).exp();
    let mut w_down = one_minus_boltzmann(params.beta_bar);
    let mut w_up = w_down * r;
    let (mut up, mut down) = (0.0, 0.0);
    for n in 1..=params.m {
        let sn = (params.s * (n as f64).sqrt()).sin();
        let s2 = sn * sn;
        down += s2 * w_down;
        up += s2 * w_up;
        w_down *= r;
        w_up *= r;
        if w_down == 0.0 {
            break;
        }
    }
    Ok((up, down))
}

/// Closed-form upper bound on `max_s J_down(s)`.
pub fn j_upper_bound(beta_bar: f64) -> f64 {
    let (small, large) = upper_bound_branches(beta_bar);
    if beta_bar <= UPPER_BOUND_SWITCH {
        small
    } else {
        large
    }
}

/// `β̄` where the two branches of [`j_upper_bound`] meet.
pub const UPPER_BOUND_SWITCH: f64 = 0.462_098_120_373_296_84;

/// Both closed forms of the upper bound, `(β̄ ≤ ln4/3 branch, β̄ > ln4/3 branch)`.
pub fn upper_bound_branches(beta_bar: f64) -> (f64, f64) {
    let small = (8.0 * (-beta_bar).exp() - (2.0 * beta_bar).exp() + (3.0 * beta_bar).exp() + 8.0) / 16.0;
    let large = (-4.0 * beta_bar).exp() - (-3.0 * beta_bar).exp() + 1.0;
    (small, large)
}

/// Largest transition probability reachable by partial level thermalisation.
pub fn plt_max(beta_bar: f64) -> f64 {
    1.0 / (1.0 + (-beta_bar).exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LowerBound {
    pub value: f64,
    /// Interaction time attaining it.
    pub s: f64,
}

fn golden_max(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> (f64, f64) {
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - phi * (b - a);
    let mut d = a + phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..60 {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + phi * (b - a);
            fd = f(d);
        }
    }
    if fc > fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

/// Best value of the 12-term series over `s = 98.92`, `s = π/2`, a grid on
/// `[0, 200]` with step 0.01, and golden-section refinement of the best grid
/// cells. Every term is nonnegative, so the truncation is a certified lower
/// bound on `max_s J_down(s)`.
pub fn j_lower_bound_search(beta_bar: f64) -> Result<LowerBound> {
    check_beta(beta_bar)?;
    let f = |s: f64| truncated_down(beta_bar, s, LOWER_BOUND_ORDER);
    let mut best = LowerBound {
        value: f(REFERENCE_S),
        s: REFERENCE_S,
    };
    let half_pi = std::f64::consts::FRAC_PI_2;
    if f(half_pi) > best.value {
        best = LowerBound {
            value: f(half_pi),
            s: half_pi,
        };
    }
    let steps = (GRID_MAX_S / GRID_STEP).round() as usize;
    let mut grid: Vec<(f64, f64)> = (0..=steps)
        .map(|k| {
            let s = k as f64 * GRID_STEP;
            (f(s), s)
        })
        .collect();
    grid.sort_by(|a, b| b.0.total_cmp(&a.0));
    for &(_, s) in grid.iter().take(8) {
        let (s_ref, v_ref) = golden_max(f, (s - GRID_STEP).max(0.0), s + GRID_STEP);
        for (s, v) in [(s, f(s)), (s_ref, v_ref)] {
            if v > best.value {
                best = LowerBound { value: v, s };
            }
        }
    }
    Ok(best)
}

pub fn j_lower_bound(beta_bar: f64) -> Result<f64> {
    Ok(j_lower_bound_search(beta_bar)?.value)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegionRow {
    pub beta_bar: f64,
    pub lower: f64,
    pub upper: f64,
    pub plt_max: f64,
    pub jc_beats_plt: bool,
}

pub fn region_row(beta_bar: f64) -> Result<RegionRow> {
    let lower = j_lower_bound(beta_bar)?;
    let plt = plt_max(beta_bar);
    Ok(RegionRow {
        beta_bar,
        lower,
        upper: j_upper_bound(beta_bar),
        plt_max: plt,
        jc_beats_plt: lower > plt,
    })
}

pub fn region_sweep(beta_grid: &[f64]) -> Result<Vec<RegionRow>> {
    beta_grid.iter().map(|&b| region_row(b)).collect()
}

/// `min, min + step, …` up to `max` (inclusive within `step/1000`), each point
/// rounded to 12 decimals so repeated runs print identical grids.
pub fn beta_grid(min: f64, max: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0 && min.is_finite() && max.is_finite() && min <= max) {
        return Err(ThermoError::InvalidParameter("grid needs min ≤ max and step > 0".into()));
    }
    let count = ((max - min) / step + 1e-3).floor() as usize;
    Ok((0..=count)
        .map(|k| ((min + k as f64 * step) * 1e12).round() / 1e12)
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum SolveOutcome {
    Found { s: f64, value: f64 },
    NotAchievable { best: f64 },
}

/// Smallest-grid-cell `s` with `J_down(s) = target` within `tol`: scans
/// `[0, 200]` for the first crossing and bisects inside it.
pub fn find_s_for_target(target: f64, beta_bar: f64, tol: f64) -> Result<SolveOutcome> {
    check_beta(beta_bar)?;
    if !(0.0..=1.0).contains(&target) {
        return Err(ThermoError::InvalidParameter(format!("target must lie in [0,1], got {target}")));
    }
    if !(tol > 0.0) {
        return Err(ThermoError::InvalidParameter("tolerance must be positive".into()));
    }
    let m = JcParams::new(beta_bar, 0.0, (tol / 4.0).min(1e-3))?.m;
    let f = |s: f64| truncated_down(beta_bar, s, m);
    if target == 0.0 {
        return Ok(SolveOutcome::Found { s: 0.0, value: 0.0 });
    }
    let steps = (GRID_MAX_S / GRID_STEP).round() as usize;
    let mut best = 0.0f64;
    let mut prev = (0.0, 0.0);
    for k in 1..=steps {
        let s = k as f64 * GRID_STEP;
        let v = f(s);
        if v >= target {
            let (mut a, mut b) = (prev.0, s);
            let mut fb = v;
            for _ in 0..200 {
                if (fb - target).abs() <= tol / 2.0 {
                    break;
                }
                let mid = 0.5 * (a + b);
                let fm = f(mid);
                if fm >= target {
                    b = mid;
                    fb = fm;
                } else {
                    a = mid;
                }
            }
            return Ok(SolveOutcome::Found { s: b, value: fb });
        }
        best = best.max(v);
        prev = (s, v);
    }
    Ok(SolveOutcome::NotAchievable { best })
}

/// Dimensionless gap `ħω/(k_B T)`. With `angular = false` the frequency is
/// read as ν in Hz (ω = 2πν, so the gap is hν/k_BT); with `angular = true` it
/// is already ω in rad/s.
pub fn beta_bar_from_physical(temperature_k: f64, frequency: f64, angular: bool) -> Result<f64> {
    if !(temperature_k > 0.0 && temperature_k.is_finite() && frequency > 0.0 && frequency.is_finite()) {
        return Err(ThermoError::InvalidParameter(
            "temperature and frequency must be positive and finite".into(),
        ));
    }
    let hbar = PLANCK / (2.0 * std::f64::consts::PI);
    let omega = if angular { frequency } else { 2.0 * std::f64::consts::PI * frequency };
    Ok(hbar * omega / (BOLTZMANN * temperature_k))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn probabilities_examples() {
        let p = JcParams::new(1.0, 0.0, 1e-12).unwrap();
        assert_eq!(j_probabilities(&p).unwrap(), (0.0, 0.0));
        let p = JcParams::new(40.0, std::f64::consts::FRAC_PI_2, 1e-12).unwrap();
        let (_, down) = j_probabilities(&p).unwrap();
        assert!((down - 1.0).abs() < 1e-15);
        assert!(matches!(JcParams::new(0.0, 1.0, 1e-9), Err(ThermoError::InvalidParameter(_))));
        assert!(matches!(JcParams::new(1e-9, 1.0, 1e-9), Err(ThermoError::TruncationTooLarge { .. })));
        let p = JcParams::new(0.5, 1.0, 1e-10).unwrap();
        assert_eq!(p.m, 47);
        assert!(p.tail_bound <= 1e-10);
    }

    #[test]
    fn upper_bound_examples() {
        let b = 4f64.ln() / 3.0;
        assert_eq!(UPPER_BOUND_SWITCH, b);
        let (first, second) = upper_bound_branches(b);
        assert!((first - second).abs() < 1e-12);
        assert!((j_upper_bound(b) - 0.907_490_131_236_859_2).abs() < 1e-12);
        assert_eq!(j_upper_bound(0.0), 1.0);
        assert!((j_upper_bound(50.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn plt_examples() {
        assert_eq!(plt_max(0.0), 0.5);
        assert!((plt_max(2f64.ln()) - 2.0 / 3.0).abs() < 1e-15);
        assert!((plt_max(60.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn lower_bound_values() {
        // Frozen reference values of the 12-term search.
        for (b, expected, tol) in [(0.1, 0.54547, 5e-5), (1.6, 0.98998, 5e-5), (6.4, 0.999_997_0, 5e-7)] {
            let lb = j_lower_bound(b).unwrap();
            assert!((lb - expected).abs() < tol, "{b}: {lb}");
        }
        assert!(j_lower_bound(1.6).unwrap() >= 0.98);
        assert!(truncated_down(1.6, REFERENCE_S, LOWER_BOUND_ORDER) >= 0.98);
        let small = region_row(0.01).unwrap();
        assert!(small.lower < small.plt_max && small.lower >= 1.0 - (-0.01f64).exp());
        assert!(region_row(10.0).unwrap().lower > 0.999);
    }

    #[test]
    fn solve_examples() {
        assert_eq!(find_s_for_target(0.0, 1.0, 1e-9).unwrap(), SolveOutcome::Found { s: 0.0, value: 0.0 });
        let SolveOutcome::Found { s, .. } = find_s_for_target(0.3, 1.0, 1e-9).unwrap() else {
            panic!("0.3 is reachable");
        };
        assert!(s < std::f64::consts::FRAC_PI_2);
        let (_, down) = j_probabilities(&JcParams::new(1.0, s, 1e-14).unwrap()).unwrap();
        assert!((down - 0.3).abs() <= 1e-9);
        assert!(j_upper_bound(0.2) < 0.999);
        assert!(matches!(
            find_s_for_target(0.999, 0.2, 1e-9).unwrap(),
            SolveOutcome::NotAchievable { best } if best < 0.999
        ));
    }

    #[test]
    fn physical_units() {
        let nu = beta_bar_from_physical(300.0, 1e13, false).unwrap();
        let omega = beta_bar_from_physical(300.0, 1e13, true).unwrap();
        assert!((nu - 1.5997).abs() < 1e-3, "{nu}");
        assert!((omega - 0.2546).abs() < 1e-3, "{omega}");
        assert!(beta_bar_from_physical(-1.0, 1.0, true).is_err());
    }

    #[test]
    fn grid_is_stable() {
        let g = beta_grid(0.05, 8.0, 0.05).unwrap();
        assert_eq!(g.len(), 160);
        assert_eq!(g[1], 0.1);
        assert_eq!(*g.last().unwrap(), 8.0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]

        #[test]
        fn detailed_balance_and_range(b in 0.05f64..8.0, s in 0.0f64..200.0) {
            let p = JcParams::new(b, s, 1e-10).unwrap();
            let (up, down) = j_probabilities(&p).unwrap();
            prop_assert!((0.0..=1.0).contains(&down));
            prop_assert!(up <= down);
            if down > 0.0 {
                prop_assert!((up / down - (-b).exp()).abs() <= 2.0 * p.tail_bound);
            }
            prop_assert!(down <= j_upper_bound(b) + p.tail_bound);
        }
    }
}
