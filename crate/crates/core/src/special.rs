//! Incomplete gamma function and the tail-bound constants that size the
//! adaptive estimators.

use std::collections::HashMap;
use std::sync::{Mutex, OnceLock};

use serde::{Deserialize, Serialize};

use crate::error::{Result, TraceError};

const LANCZOS_G: f64 = 7.0;
#[allow(clippy::excessive_precision)]
const LANCZOS_COEFFS: [f64; 9] = [
    0.999_999_999_999_809_93,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_13,
    -176.615_029_162_140_59,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_571_6e-6,
    1.505_632_735_149_311_6e-7,
];

/// `ln Gamma(x)` for `x > 0` (Lanczos approximation, reflection below 1/2).
pub fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = LANCZOS_COEFFS[0];
    for (i, &c) in LANCZOS_COEFFS.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + LANCZOS_G + 0.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

const MAX_ITER: usize = 1_000_000;
const TINY: f64 = 1e-300;

/// Regularized lower incomplete gamma function `P(s, x) = gamma(s, x) / Gamma(s)`.
///
/// Power series for `x < s + 1`, modified Lentz continued fraction for the
/// upper function otherwise.
pub fn reg_lower_gamma(s: f64, x: f64) -> Result<f64> {
    if !(s > 0.0) || !s.is_finite() {
        return Err(TraceError::Domain(format!("incomplete gamma needs s > 0, got {s}")));
    }
    if !(x >= 0.0) {
        return Err(TraceError::Domain(format!("incomplete gamma needs x >= 0, got {x}")));
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    if x.is_infinite() {
        return Ok(1.0);
    }
    let log_prefactor = -x + s * x.ln() - ln_gamma(s);
    if x < s + 1.0 {
        let mut term = 1.0 / s;
        let mut sum = term;
        let mut denom = s;
        for _ in 0..MAX_ITER {
            denom += 1.0;
            term *= x / denom;
            sum += term;
            if term.abs() < sum.abs() * f64::EPSILON * 0.5 {
                break;
            }
        }
        Ok((sum * log_prefactor.exp()).clamp(0.0, 1.0))
    } else {
        let mut b = x + 1.0 - s;
        let mut c = 1.0 / TINY;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..MAX_ITER {
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
            if (delta - 1.0).abs() < f64::EPSILON * 0.5 {
                break;
            }
        }
        Ok((1.0 - log_prefactor.exp() * h).clamp(0.0, 1.0))
    }
}

/// Parameters of the concentration bound: tolerance, failure probability and slack.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailConstants {
    pub eps: f64,
    pub delta: f64,
    pub ell: f64,
}

impl TailConstants {
    pub fn new(eps: f64, delta: f64, ell: f64) -> Result<Self> {
        if !(eps > 0.0) || !eps.is_finite() {
            return Err(TraceError::param(format!("eps must be finite and positive, got {eps}")));
        }
        if !(delta > 0.0 && delta < 1.0) {
            return Err(TraceError::param(format!("delta must lie in (0, 1), got {delta}")));
        }
        if !(ell >= 0.0) || !ell.is_finite() {
            return Err(TraceError::param(format!(
                "ell must be finite and non-negative, got {ell}"
            )));
        }
        Ok(Self { eps, delta, ell })
    }
}

/// `C(eps, delta) = 4 (1 + ell) eps^-2 log(2 / delta)`: samples per unit of `|B|_F^2`.
pub fn sample_constant(tc: &TailConstants) -> f64 {
    4.0 * (1.0 + tc.ell) * (2.0 / tc.delta).ln() / (tc.eps * tc.eps)
}

/// `ceil(4 (1 + ell) log(2 / delta) / ell^2)`, the side condition on the sample count.
pub fn min_samples_floor(delta: f64, ell: f64) -> Result<u64> {
    if !(ell > 0.0) {
        return Err(TraceError::param(
            "the guaranteed sample floor needs ell > 0 (practical mode omits it)",
        ));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(TraceError::param(format!("delta must lie in (0, 1), got {delta}")));
    }
    Ok((4.0 * (1.0 + ell) * (2.0 / delta).ln() / (ell * ell)).ceil() as u64)
}

/// Result of [`alpha_k`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlphaK {
    pub value: f64,
    /// No alpha in (0, 1) reaches the constraint; `value` was clamped to `1 - 1e-12`.
    pub clamped: bool,
}

const ALPHA_TOL: f64 = 1e-12;
const ALPHA_CLAMP: f64 = 1.0 - 1e-12;

/// Largest `alpha` in `(0, 1)` with `P(k/2, alpha k/2) <= delta`, by bisection.
///
/// `(1 / (k alpha)) |B Psi|_F^2` then over-estimates `|B|_F^2` with
/// probability at least `1 - delta` for a Gaussian `n x k` matrix `Psi`.
pub fn alpha_k(k: usize, delta: f64) -> Result<AlphaK> {
    if k == 0 {
        return Err(TraceError::param("alpha_k needs k >= 1"));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(TraceError::param(format!("delta must lie in (0, 1), got {delta}")));
    }
    let s = k as f64 / 2.0;
    let p = |alpha: f64| reg_lower_gamma(s, alpha * s);
    if p(1.0)? <= delta {
        return Ok(AlphaK {
            value: ALPHA_CLAMP,
            clamped: true,
        });
    }
    let (mut lo, mut hi) = (1e-16, 1.0);
    while hi - lo > ALPHA_TOL {
        let mid = 0.5 * (lo + hi);
        if p(mid)? <= delta {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(AlphaK {
        value: lo,
        clamped: false,
    })
}

/// Memoized [`alpha_k`]; the estimators query the same `(k, delta)` pairs over and over.
pub fn alpha_k_cached(k: usize, delta: f64) -> Result<AlphaK> {
    static CACHE: OnceLock<Mutex<HashMap<(usize, u64), AlphaK>>> = OnceLock::new();
    let cache = CACHE.get_or_init(Default::default);
    let key = (k, delta.to_bits());
    if let Some(hit) = cache.lock().expect("alpha cache poisoned").get(&key) {
        return Ok(*hit);
    }
    let value = alpha_k(k, delta)?;
    cache.lock().expect("alpha cache poisoned").insert(key, value);
    Ok(value)
}

/// Number of Frobenius probes used by the prototype estimator when none is configured.
pub fn default_frobenius_probes(delta: f64) -> usize {
    (10.0 * (2.0 / delta).ln()).ceil() as usize
}

/// `C(c) = -1/c - log(1 - 2c) / (2 c^2)` from the Hanson-Wright bound for Gaussian forms.
pub fn hanson_wright_c(c: f64) -> Result<f64> {
    if !(c > 0.0 && c < 0.5) {
        return Err(TraceError::Domain(format!(
            "Hanson-Wright constant needs c in (0, 1/2), got {c}"
        )));
    }
    Ok(-1.0 / c - (-2.0 * c).ln_1p() / (2.0 * c * c))
}

/// `2 exp(-m min{eps^2 / (4 C(c) |A|_F^2), c eps / (2 |A|_2)})`.
pub fn hw_tail_bound(frob2: f64, spec: f64, m: u64, eps: f64, c: f64) -> Result<f64> {
    if !(spec > 0.0) || frob2 < spec * spec * (1.0 - 1e-12) {
        return Err(TraceError::param(format!(
            "norms are inconsistent: |A|_F^2 = {frob2} must be at least |A|_2^2 = {} > 0",
            spec * spec
        )));
    }
    if m < 1 {
        return Err(TraceError::param("tail bound needs m >= 1"));
    }
    if !(eps > 0.0) {
        return Err(TraceError::param("tail bound needs eps > 0"));
    }
    let cc = hanson_wright_c(c)?;
    let rate = (eps * eps / (4.0 * cc * frob2)).min(c * eps / (2.0 * spec));
    Ok(2.0 * (-(m as f64) * rate).exp())
}
