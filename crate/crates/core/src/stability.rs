//! Back-to-back error probability over a correlated Rayleigh channel, the
//! probability of instability, and the error-probability threshold that keeps
//! the latter under a bound.

use alloc::vec::Vec;

use crate::numerics::marcum_q1_pair;
use crate::{Error, Result};

/// Lower end of the threshold search interval.
pub const PE_MIN: f64 = 1e-12;
/// Upper end of the threshold search interval.
pub const PE_MAX: f64 = 1.0 - 1e-12;

const PROBE_POINTS: usize = 64;

/// Which closed form to use for the back-to-back error probability.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PbbForm {
    /// `1 - ((1-p)/p) [Q1(θ, ρθ) - Q1(ρθ, θ)]`; equals `p` at `ρ = 0`.
    #[default]
    Corrected,
    /// `((1-p)/p) [Q1(θ, ρθ) - Q1(ρθ, θ)]`; equals `1 - p` at `ρ = 0`.
    AsPrinted,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StabilityParams {
    /// Largest number of consecutive losses the loop survives.
    pub n_max: u32,
    pub instability_bound: f64,
    pub correlation: f64,
    pub form: PbbForm,
}

impl StabilityParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_max < 1 {
            return Err(Error::Config("n_max must be at least 1".into()));
        }
        if !(self.instability_bound > 0.0 && self.instability_bound < 1.0) {
            return Err(Error::Config("instability_bound must lie in (0, 1)".into()));
        }
        if !(0.0..1.0).contains(&self.correlation) {
            return Err(Error::Config("correlation must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

/// Probability that a packet is lost given that the previous one was, for a
/// Rayleigh channel whose complex gain has lag-one correlation `rho` and
/// whose average loss probability is `expected_pe`.
pub fn p_back_to_back(expected_pe: f64, rho: f64, form: PbbForm) -> Result<f64> {
    if !(0.0..=1.0).contains(&expected_pe) {
        return Err(Error::Domain("p_back_to_back: expected_pe"));
    }
    if !(0.0..1.0).contains(&rho) {
        return Err(Error::Domain("p_back_to_back: rho"));
    }
    if expected_pe == 0.0 {
        return Ok(0.0);
    }
    if expected_pe == 1.0 {
        return Ok(1.0);
    }
    let p = expected_pe;
    // outage threshold on |h|² is -ln(1 - p)
    let theta = libm::sqrt(-2.0 * libm::log1p(-p) / (1.0 - rho * rho));
    let (q_hi, c_hi) = marcum_q1_pair(theta, rho * theta)?;
    let (q_lo, c_lo) = marcum_q1_pair(rho * theta, theta)?;
    // Q1(θ, ρθ) - Q1(ρθ, θ), from whichever pair of terms is smaller
    let bracket = if c_hi + c_lo < q_hi + q_lo { c_lo - c_hi } else { q_hi - q_lo };
    let ratio = (1.0 - p) / p * bracket;
    let value = match form {
        PbbForm::Corrected => 1.0 - ratio,
        PbbForm::AsPrinted => ratio,
    };
    Ok(value.clamp(0.0, 1.0))
}

/// Probability that the next `n_max - delta` transmissions all fail:
/// `P_bb^(n_max - delta - 1) · E[P_e]`.
pub fn p_instability(expected_pe: f64, rho: f64, n_max: u32, delta: u32, form: PbbForm) -> Result<f64> {
    if delta >= n_max {
        return Err(Error::Domain("p_instability: loss counter already at n_max"));
    }
    if !(0.0..=1.0).contains(&expected_pe) {
        return Err(Error::Domain("p_instability: expected_pe"));
    }
    if expected_pe == 0.0 {
        return Ok(0.0);
    }
    let exponent = n_max - delta - 1;
    if exponent == 0 {
        return Ok(expected_pe);
    }
    let pbb = p_back_to_back(expected_pe, rho, form)?;
    Ok((libm::pow(pbb, exponent as f64) * expected_pe).clamp(0.0, 1.0))
}

/// Largest average error probability `p` with
/// `p_instability(p, rho, n_max, delta) <= bound`, searched on
/// `[PE_MIN, PE_MAX]` to a relative width of 1e-6. Returns `PE_MIN` when
/// nothing is feasible.
///
/// Bisection relies on `p_instability` being non-decreasing in `p`; a 64-point
/// log grid is checked first and, if it is not monotone, the largest feasible
/// grid point is returned instead.
pub fn solve_pe_threshold(rho: f64, n_max: u32, delta: u32, bound: f64, form: PbbForm) -> Result<f64> {
    if delta >= n_max {
        return Err(Error::Domain("solve_pe_threshold: loss counter already at n_max"));
    }
    if !(bound > 0.0 && bound <= 1.0) {
        return Err(Error::Domain("solve_pe_threshold: bound"));
    }
    let p_us = |p: f64| p_instability(p, rho, n_max, delta, form);
    if n_max - delta == 1 {
        return Ok(bound.clamp(PE_MIN, PE_MAX));
    }
    if p_us(PE_MAX)? <= bound {
        return Ok(PE_MAX);
    }
    if p_us(PE_MIN)? > bound {
        return Ok(PE_MIN);
    }

    let ln_lo = libm::log(PE_MIN);
    let ln_hi = libm::log(PE_MAX);
    let mut grid = Vec::with_capacity(PROBE_POINTS);
    for i in 0..PROBE_POINTS {
        let p = libm::exp(ln_lo + (ln_hi - ln_lo) * i as f64 / (PROBE_POINTS - 1) as f64);
        grid.push((p, p_us(p)?));
    }
    let monotone = grid.windows(2).all(|w| w[1].1 >= w[0].1 * (1.0 - 1e-9));
    if !monotone {
        let best = grid.iter().filter(|g| g.1 <= bound).map(|g| g.0).fold(PE_MIN, f64::max);
        return Ok(best);
    }

    let mut lo = PE_MIN;
    let mut hi = PE_MAX;
    while hi - lo > 1e-6 * lo {
        let mid = libm::sqrt(lo * hi);
        let mid = if mid > lo && mid < hi { mid } else { 0.5 * (lo + hi) };
        if p_us(mid)? <= bound {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    debug_assert!(p_us(lo)? <= bound);
    Ok(lo)
}

/// Thresholds for every loss-counter value `0..n_max`, computed once per run.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdTable {
    thresholds: Vec<f64>,
}

impl ThresholdTable {
    pub fn new(params: &StabilityParams) -> Result<Self> {
        params.validate()?;
        let thresholds = (0..params.n_max)
            .map(|delta| {
                solve_pe_threshold(params.correlation, params.n_max, delta, params.instability_bound, params.form)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { thresholds })
    }

    /// Threshold for loss counter `delta`; saturates at the last entry.
    pub fn get(&self, delta: u32) -> f64 {
        let i = (delta as usize).min(self.thresholds.len() - 1);
        self.thresholds[i]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.thresholds
    }
}
