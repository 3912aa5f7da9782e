//! Gibbs states of a finite system, in float and exact rational form.

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{Signed, ToPrimitive, Zero};

use crate::error::{Result, ThermoError};
use crate::numeric::{Rational, Scalar};

/// Upper limit on candidate denominators tried by the fallback scan.
const SCAN_LIMIT: u64 = 20_000_000;

/// Integer form of a rational Gibbs state: `g_i = d_i / D` with `D = Σ d_i`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RationalGibbs {
    pub d: Vec<u64>,
    pub total: u64,
}

/// Energies are dimensionless (`β̄_i = βħω_i`); the weights are the
/// normalised Boltzmann factors.
#[derive(Debug, Clone, PartialEq)]
pub struct GibbsContext {
    energies: Vec<f64>,
    weights: Vec<f64>,
    rational: Option<RationalGibbs>,
    exact: bool,
    sorted: bool,
}

impl GibbsContext {
    /// Context with no rational form. Only float-mode operations are available.
    pub fn from_energies_float(energies: &[f64]) -> Result<Self> {
        let weights = boltzmann_weights(energies)?;
        Ok(GibbsContext {
            sorted: is_sorted(energies),
            energies: energies.to_vec(),
            weights,
            rational: None,
            exact: false,
        })
    }

    /// Exact context from integer multiplicities, `g_i = d_i / Σ d`.
    pub fn from_degeneracies(d: Vec<u64>) -> Result<Self> {
        if d.is_empty() {
            return Err(ThermoError::EmptyEnergies);
        }
        if let Some(index) = d.iter().position(|&v| v == 0) {
            return Err(ThermoError::InvalidParameter(format!(
                "degeneracy d[{index}] must be positive"
            )));
        }
        let total = d
            .iter()
            .try_fold(0u64, |acc, &v| acc.checked_add(v))
            .ok_or(ThermoError::Overflow { bits: 64 })?;
        let weights: Vec<f64> = d.iter().map(|&v| v as f64 / total as f64).collect();
        let max_w = weights.iter().cloned().fold(f64::MIN, f64::max);
        // Energies relative to the most populated level, so the ground state sits at 0.
        let energies: Vec<f64> = d
            .iter()
            .map(|&v| (max_w * total as f64 / v as f64).ln())
            .collect();
        Ok(GibbsContext {
            sorted: is_sorted(&energies),
            energies,
            weights,
            rational: Some(RationalGibbs { d, total }),
            exact: true,
        })
    }

    /// Exact context from rational weights; they are rescaled to sum to one.
    pub fn from_rational_weights(g: &[Rational]) -> Result<Self> {
        if g.is_empty() {
            return Err(ThermoError::EmptyEnergies);
        }
        if g.iter().any(|w| w <= &Rational::zero()) {
            return Err(ThermoError::InvalidParameter(
                "Gibbs weights must be positive".into(),
            ));
        }
        let lcm = g
            .iter()
            .fold(BigInt::from(1), |acc, w| acc.lcm(w.denom()));
        let d: Option<Vec<u64>> = g
            .iter()
            .map(|w| (w.numer() * (&lcm / w.denom())).to_u64())
            .collect();
        let d = d.ok_or(ThermoError::Overflow { bits: 64 })?;
        let common = d.iter().fold(0u64, |acc, &v| acc.gcd(&v));
        Self::from_degeneracies(d.into_iter().map(|v| v / common).collect())
    }

    pub fn n(&self) -> usize {
        self.energies.len()
    }

    pub fn energies(&self) -> &[f64] {
        &self.energies
    }

    /// Float Gibbs weights.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn rational(&self) -> Option<&RationalGibbs> {
        self.rational.as_ref()
    }

    pub fn degeneracies(&self) -> Result<&[u64]> {
        self.rational
            .as_ref()
            .map(|r| r.d.as_slice())
            .ok_or(ThermoError::NoRationalForm)
    }

    pub fn total(&self) -> Result<u64> {
        self.rational
            .as_ref()
            .map(|r| r.total)
            .ok_or(ThermoError::NoRationalForm)
    }

    /// True when the weights were given as exact rationals rather than
    /// approximated from energies.
    pub fn is_exact(&self) -> bool {
        self.exact
    }

    pub fn energies_sorted(&self) -> bool {
        self.sorted
    }

    /// Gibbs weights in the requested numeric mode. Exact mode uses `d_i / D`.
    pub fn gibbs<S: Scalar>(&self) -> Result<Vec<S>> {
        if S::EXACT {
            let r = self.rational.as_ref().ok_or(ThermoError::NoRationalForm)?;
            Ok(r.d.iter().map(|&v| S::ratio(v, r.total)).collect())
        } else {
            Ok(self
                .weights
                .iter()
                .map(|&w| S::from_f64(w).expect("weights are finite"))
                .collect())
        }
    }

    /// Exact `g_i` as rationals.
    pub fn gibbs_rational(&self) -> Result<Vec<Rational>> {
        self.gibbs::<Rational>()
    }

    pub fn check_level(&self, index: usize) -> Result<()> {
        if index < self.n() {
            Ok(())
        } else {
            Err(ThermoError::LevelOutOfRange { index, n: self.n() })
        }
    }
}

/// Builds a context from dimensionless energies and attaches the best rational
/// form with `D <= max_denominator * n`.
///
/// Each weight is first approximated by a continued fraction with denominator
/// at most `max_denominator`; the approximations are put over their least
/// common denominator and renormalised. When that denominator exceeds the cap
/// the candidates `D = 1 ..= cap` are scanned for the smallest worst-case error.
pub fn make_gibbs_context(energies: &[f64], max_denominator: u64) -> Result<GibbsContext> {
    if max_denominator == 0 {
        return Err(ThermoError::InvalidParameter(
            "max_denominator must be at least 1".into(),
        ));
    }
    let weights = boltzmann_weights(energies)?;
    let cap = max_denominator
        .checked_mul(energies.len() as u64)
        .ok_or(ThermoError::Overflow { bits: 64 })?;

    let rational = continued_fraction_form(&weights, max_denominator, cap)
        .or_else(|| scan_form(&weights, cap))
        .ok_or(ThermoError::Overflow { bits: 64 })?;

    let exact = rational
        .d
        .iter()
        .zip(&weights)
        .all(|(&d, &w)| d as f64 / rational.total as f64 == w);
    Ok(GibbsContext {
        sorted: is_sorted(energies),
        energies: energies.to_vec(),
        weights,
        rational: Some(rational),
        exact,
    })
}

fn boltzmann_weights(energies: &[f64]) -> Result<Vec<f64>> {
    if energies.is_empty() {
        return Err(ThermoError::EmptyEnergies);
    }
    if let Some((index, &value)) = energies.iter().enumerate().find(|(_, e)| !e.is_finite()) {
        return Err(ThermoError::NonFiniteEnergy { index, value });
    }
    let ground = energies.iter().cloned().fold(f64::INFINITY, f64::min);
    let factors: Vec<f64> = energies.iter().map(|e| (-(e - ground)).exp()).collect();
    let z: f64 = factors.iter().sum();
    Ok(factors.into_iter().map(|f| f / z).collect())
}

fn is_sorted(xs: &[f64]) -> bool {
    xs.windows(2).all(|w| w[0] <= w[1])
}

fn continued_fraction_form(weights: &[f64], max_den: u64, cap: u64) -> Option<RationalGibbs> {
    let approx: Vec<(u64, u64)> = weights
        .iter()
        .map(|&w| limit_denominator(w, max_den))
        .collect::<Option<_>>()?;
    if approx.iter().any(|&(num, _)| num == 0) {
        return None;
    }
    let lcm = approx
        .iter()
        .try_fold(1u64, |acc, &(_, den)| acc.checked_mul(den / acc.gcd(&den)))?;
    let d: Vec<u64> = approx
        .iter()
        .map(|&(num, den)| num.checked_mul(lcm / den))
        .collect::<Option<_>>()?;
    let total = d.iter().try_fold(0u64, |acc, &v| acc.checked_add(v))?;
    if total > cap {
        return None;
    }
    let common = d.iter().fold(0u64, |acc, &v| acc.gcd(&v));
    let d: Vec<u64> = d.into_iter().map(|v| v / common).collect();
    Some(RationalGibbs {
        total: d.iter().sum(),
        d,
    })
}

fn scan_form(weights: &[f64], cap: u64) -> Option<RationalGibbs> {
    let mut best: Option<(f64, RationalGibbs)> = None;
    for k in 1..=cap.min(SCAN_LIMIT) {
        let d: Vec<u64> = weights
            .iter()
            .map(|&w| ((w * k as f64).round() as u64).max(1))
            .collect();
        let total: u64 = d.iter().sum();
        if total > cap {
            continue;
        }
        let err = d
            .iter()
            .zip(weights)
            .map(|(&v, &w)| (v as f64 / total as f64 - w).abs())
            .fold(0.0, f64::max);
        if best.as_ref().map_or(true, |(e, _)| err < *e) {
            best = Some((err, RationalGibbs { d, total }));
            if err == 0.0 {
                break;
            }
        }
    }
    best.map(|(_, r)| r)
}

/// Best rational approximation `num / den` of `x` with `den <= max_den`.
pub fn limit_denominator(x: f64, max_den: u64) -> Option<(u64, u64)> {
    if !(x.is_finite() && x >= 0.0) {
        return None;
    }
    let exact = Rational::from_float(x)?;
    let max_den = BigInt::from(max_den);
    let (mut p0, mut q0, mut p1, mut q1) = (
        BigInt::zero(),
        BigInt::from(1),
        BigInt::from(1),
        BigInt::zero(),
    );
    let (mut n, mut d) = (exact.numer().clone(), exact.denom().clone());
    if d <= max_den {
        return Some((n.to_u64()?, d.to_u64()?));
    }
    loop {
        let a = &n / &d;
        let q2 = &q0 + &a * &q1;
        if q2 > max_den {
            break;
        }
        let p2 = &p0 + &a * &p1;
        p0 = std::mem::replace(&mut p1, p2);
        q0 = std::mem::replace(&mut q1, q2);
        let rem = &n - &a * &d;
        n = std::mem::replace(&mut d, rem);
        if d.is_zero() {
            break;
        }
    }
    let k = (&max_den - &q0) / &q1;
    let bound1 = Rational::new(&p0 + &k * &p1, &q0 + &k * &q1);
    let bound2 = Rational::new(p1.clone(), q1.clone());
    let best = if (&bound2 - &exact).abs() <= (&bound1 - &exact).abs() {
        bound2
    } else {
        bound1
    };
    Some((best.numer().to_u64()?, best.denom().to_u64()?))
}
