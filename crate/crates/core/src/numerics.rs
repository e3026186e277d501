//! Special functions and the Rayleigh-expectation integral.
//!
//! Everything here is a pure function of its arguments. Probabilities are
//! clamped to `[0, 1]` before they are returned because callers raise them to
//! integer powers, which amplifies any rounding drift.

use alloc::vec::Vec;

use crate::{Error, Result};

/// Bessel function of the first kind, order zero.
pub fn bessel_j0(x: f64) -> Result<f64> {
    if !x.is_finite() {
        return Err(Error::Domain("bessel_j0"));
    }
    Ok(libm::j0(x))
}

/// First-order Marcum Q function `Q1(a, b)`.
pub fn marcum_q1(a: f64, b: f64) -> Result<f64> {
    Ok(marcum_q1_pair(a, b)?.0)
}

/// Returns `(Q1(a, b), 1 - Q1(a, b))`, each summed from positive terms so
/// that whichever one is small keeps full relative precision.
///
/// With `K ~ Poisson(a²/2)` and `J ~ Poisson(b²/2)` independent,
/// `Q1(a, b) = P(J <= K)`; both halves are evaluated as a Poisson pmf
/// weighted by a Poisson cdf.
pub fn marcum_q1_pair(a: f64, b: f64) -> Result<(f64, f64)> {
    if !(a.is_finite() && b.is_finite()) || a < 0.0 || b < 0.0 {
        return Err(Error::Domain("marcum_q1"));
    }
    if b == 0.0 {
        return Ok((1.0, 0.0));
    }
    let mean_k = 0.5 * a * a;
    let mean_j = 0.5 * b * b;
    if a == 0.0 {
        return Ok((libm::exp(-mean_j), -libm::expm1(-mean_j)));
    }
    let q = weighted_poisson_cdf(mean_k, mean_j, 0);
    let c = weighted_poisson_cdf(mean_j, mean_k, 1);
    Ok((q.clamp(0.0, 1.0), c.clamp(0.0, 1.0)))
}

/// `sum_{n >= shift} pmf(n; outer) * cdf(n - shift; inner)`.
///
/// The sum starts 15 standard deviations below the outer mode; terms below
/// that are smaller than the retained ones by a factor of at least e^-100
/// because the cdf factor is non-decreasing. The sum stops once the
/// remaining outer pmf mass, which bounds the tail since cdf <= 1, falls
/// below 1e-17 of the running total.
fn weighted_poisson_cdf(outer: f64, inner: f64, shift: u64) -> f64 {
    let spread = 15.0 * libm::sqrt(outer) + 10.0;
    let start = libm::floor(outer - spread).max(0.0) as u64;
    let mut n = start.max(shift);

    let mut ln_pmf = ln_poisson_pmf(n, outer);
    // cdf of the inner variable at m = n - shift
    let mut m = n - shift;
    let mut cdf = if m == 0 { libm::exp(-inner) } else { gamma_q(m as f64 + 1.0, inner) };

    let limit = outer + 50.0 * libm::sqrt(outer) + 1000.0;
    let mut sum = 0.0;
    loop {
        sum += libm::exp(ln_pmf) * cdf.min(1.0);

        n += 1;
        m += 1;
        // direct evaluation: a running log sum loses an ulp of |ln pmf| per step
        ln_pmf = ln_poisson_pmf(n, outer);
        if inner > 0.0 {
            cdf += libm::exp(ln_poisson_pmf(m, inner));
        }

        let nf = n as f64;
        if nf > outer + 1.0 {
            let tail = libm::exp(ln_pmf) / (1.0 - outer / (nf + 1.0));
            if tail <= 1e-17 * sum || tail < 1e-300 {
                break;
            }
        }
        if nf > limit {
            break;
        }
    }
    sum
}

/// `ln(λ^n e^-λ / n!)` in the saddle-point form of Loader, which avoids the
/// cancellation between `n ln λ`, `λ` and `ln n!` for large arguments.
fn ln_poisson_pmf(n: u64, lambda: f64) -> f64 {
    if n == 0 {
        return -lambda;
    }
    let x = n as f64;
    -stirling_error(x) - deviance(x, lambda) - 0.5 * libm::log(2.0 * core::f64::consts::PI * x)
}

/// `ln n! - (n + 1/2) ln n + n - ln sqrt(2π)`.
fn stirling_error(n: f64) -> f64 {
    const S0: f64 = 1.0 / 12.0;
    const S1: f64 = 1.0 / 360.0;
    const S2: f64 = 1.0 / 1260.0;
    const S3: f64 = 1.0 / 1680.0;
    const S4: f64 = 1.0 / 1188.0;
    if n <= 15.0 {
        return libm::lgamma(n + 1.0) - (n + 0.5) * libm::log(n) + n - 0.5 * libm::log(2.0 * core::f64::consts::PI);
    }
    let nn = n * n;
    if n > 500.0 {
        (S0 - S1 / nn) / n
    } else if n > 80.0 {
        (S0 - (S1 - S2 / nn) / nn) / n
    } else if n > 35.0 {
        (S0 - (S1 - (S2 - S3 / nn) / nn) / nn) / n
    } else {
        (S0 - (S1 - (S2 - (S3 - S4 / nn) / nn) / nn) / nn) / n
    }
}

/// `x ln(x / m) + m - x`, accurate when `x` is close to `m`.
fn deviance(x: f64, m: f64) -> f64 {
    if (x - m).abs() < 0.1 * (x + m) {
        let v = (x - m) / (x + m);
        let mut s = (x - m) * v;
        let mut ej = 2.0 * x * v;
        let v2 = v * v;
        let mut j = 1.0;
        loop {
            ej *= v2;
            j += 2.0;
            let s1 = s + ej / j;
            if s1 == s {
                return s1;
            }
            s = s1;
        }
    }
    x * libm::log(x / m) + m - x
}

/// Regularized upper incomplete gamma `Q(s, x)` for `s > 0`, `x >= 0`.
pub(crate) fn gamma_q(s: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    let ln_prefactor = s * libm::log(x) - x - libm::lgamma(s);
    if x < s + 1.0 {
        // series for the lower function P(s, x)
        let mut term = 1.0 / s;
        let mut sum = term;
        let mut ap = s;
        for _ in 0..100_000 {
            ap += 1.0;
            term *= x / ap;
            sum += term;
            if term.abs() < sum.abs() * 1e-17 {
                break;
            }
        }
        (1.0 - sum * libm::exp(ln_prefactor)).clamp(0.0, 1.0)
    } else {
        // modified Lentz continued fraction
        const TINY: f64 = 1e-300;
        let mut b = x + 1.0 - s;
        let mut c = 1.0 / TINY;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..100_000 {
            let an = -(i as f64) * (i as f64 - s);
            b += 2.0;
            d = an * d + b;
            if d.abs() < TINY {
                d = TINY;
            }
            c = b + an / c;
            if c.abs() < TINY {
                c = TINY;
            }
            d = 1.0 / d;
            let delta = d * c;
            h *= delta;
            if (delta - 1.0).abs() < 1e-16 {
                break;
            }
        }
        (libm::exp(ln_prefactor) * h).clamp(0.0, 1.0)
    }
}

/// Controls [`rayleigh_expect`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureSpec {
    pub relative_tolerance: f64,
    pub max_subdivisions: usize,
    /// The integral runs over `[0, factor * gamma_b]`; the remainder is
    /// bounded analytically by `e^-factor`.
    pub tail_truncation_factor: f64,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self { relative_tolerance: 1e-9, max_subdivisions: 500, tail_truncation_factor: 40.0 }
    }
}

impl QuadratureSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.relative_tolerance > 0.0) {
            return Err(Error::Domain("QuadratureSpec::relative_tolerance"));
        }
        if !(self.tail_truncation_factor >= 20.0) {
            return Err(Error::Domain("QuadratureSpec::tail_truncation_factor"));
        }
        if self.max_subdivisions == 0 {
            return Err(Error::Domain("QuadratureSpec::max_subdivisions"));
        }
        Ok(())
    }
}

/// Expectation of `curve(γ)` when γ is exponentially distributed with mean
/// `gamma_b`, i.e. the average of an SNR-to-probability curve over Rayleigh
/// fading.
///
/// `curve` must be non-increasing on `[0, ∞)` with values in `[0, 1]`; the
/// truncated tail is then at most `curve(T·γ_b)·e^-T`, which is added back.
pub fn rayleigh_expect<F>(curve: F, gamma_b: f64, spec: &QuadratureSpec) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    spec.validate()?;
    if !(gamma_b > 0.0) || !gamma_b.is_finite() {
        return Err(Error::Domain("rayleigh_expect"));
    }
    let upper = spec.tail_truncation_factor;
    // With u = γ / γ_b = e^s the density becomes e^(s - e^s) ds on
    // (-inf, ln upper]. BLER curves are smooth in log SNR, so features near
    // γ = 0 get as much resolution as those near γ_b.
    let integrand = |s: f64| {
        let u = libm::exp(s);
        curve(u * gamma_b) * libm::exp(s - u)
    };
    let lo = LOG_LOWER_LIMIT;
    let hi = libm::log(upper);
    let width = (hi - lo) / INITIAL_PANELS as f64;
    let breaks: Vec<f64> = (0..=INITIAL_PANELS).map(|k| lo + k as f64 * width).collect();
    let (value, abs_error) =
        adaptive_gauss_kronrod(&integrand, &breaks, spec.relative_tolerance, spec.max_subdivisions)
            .map_err(|(estimate, abs_error)| Error::NonConvergent { estimate: estimate.clamp(0.0, 1.0), abs_error })?;
    let _ = abs_error;
    // mass below u = e^lo, where the curve is at most curve(0)
    let head = curve(0.0).clamp(0.0, 1.0) * -libm::expm1(-libm::exp(lo));
    let tail = curve(upper * gamma_b).clamp(0.0, 1.0) * libm::exp(-upper);
    Ok((value + head + tail).clamp(0.0, 1.0))
}

/// `ln u` at which the integration starts; the skipped mass is below 1e-26.
const LOG_LOWER_LIMIT: f64 = -60.0;
const INITIAL_PANELS: usize = 8;

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
// Gauss 7-point weights at XGK[1], XGK[3], XGK[5], XGK[7]
const WG: [f64; 4] =
    [0.129_484_966_168_869_7, 0.279_705_391_489_276_7, 0.381_830_050_505_118_9, 0.417_959_183_673_469_4];

/// One 15-point Kronrod panel; returns (integral, error estimate).
///
/// The outermost nodes leave a gap of 0.85% of the panel at either end that
/// neither rule samples. The integrand is also evaluated at both endpoints:
/// if it moves across a gap by more than across the adjacent node spacing,
/// the panel likely hides a jump there and the error estimate is raised to
/// the size of that jump times the panel width.
fn kronrod15<F: Fn(f64) -> f64>(f: &F, lo: f64, hi: f64) -> (f64, f64) {
    let center = 0.5 * (lo + hi);
    let half = 0.5 * (hi - lo);
    let fc = f(center);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    let mut outer = (0.0, 0.0);
    let mut inner = (0.0, 0.0);
    for (j, (&x, &w)) in XGK[..7].iter().zip(&WGK[..7]).enumerate() {
        let dx = half * x;
        let (left, right) = (f(center - dx), f(center + dx));
        match j {
            0 => outer = (left, right),
            1 => inner = (left, right),
            _ => {}
        }
        kronrod += w * (left + right);
        if j % 2 == 1 {
            gauss += WG[j / 2] * (left + right);
        }
    }
    let mut error = ((kronrod - gauss) * half).abs();
    for (edge, (near, next)) in [(f(lo), (outer.0, inner.0)), (f(hi), (outer.1, inner.1))] {
        let jump = (edge - near).abs();
        if jump > (near - next).abs() {
            error = error.max(jump * (hi - lo));
        }
    }
    (kronrod * half, error)
}

/// Globally adaptive Gauss–Kronrod over the panels delimited by `breaks`:
/// always bisect the panel with the largest error estimate. `Err` carries
/// the partial (estimate, error bound).
fn adaptive_gauss_kronrod<F: Fn(f64) -> f64>(
    f: &F,
    breaks: &[f64],
    relative_tolerance: f64,
    max_subdivisions: usize,
) -> core::result::Result<(f64, f64), (f64, f64)> {
    const ABS_FLOOR: f64 = 1e-300;
    let mut panels: Vec<(f64, f64, f64, f64)> = Vec::with_capacity(64);
    for w in breaks.windows(2) {
        let (v, e) = kronrod15(f, w[0], w[1]);
        panels.push((w[0], w[1], v, e));
    }
    let mut total: f64 = panels.iter().map(|p| p.2).sum();
    let mut error: f64 = panels.iter().map(|p| p.3).sum();
    let mut splits = 0;
    while error > (relative_tolerance * total.abs()).max(ABS_FLOOR) {
        if splits >= max_subdivisions {
            return Err((total, error));
        }
        let (worst, _) =
            panels
                .iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |best, (i, p)| if p.3 > best.1 { (i, p.3) } else { best });
        let (a, b, v, e) = panels.swap_remove(worst);
        let mid = 0.5 * (a + b);
        if !(mid > a && mid < b) {
            // interval can no longer be split in floating point
            return Err((total, error));
        }
        let (v1, e1) = kronrod15(f, a, mid);
        let (v2, e2) = kronrod15(f, mid, b);
        total += v1 + v2 - v;
        error += e1 + e2 - e;
        panels.push((a, mid, v1, e1));
        panels.push((mid, b, v2, e2));
        splits += 1;
        if splits % 64 == 0 {
            // resum to shed accumulated cancellation from the running updates
            total = panels.iter().map(|p| p.2).sum();
            error = panels.iter().map(|p| p.3).sum();
        }
    }
    Ok((total, error))
}
