//! Reproduction numbers and final-size relations.
//!
//! Mean-field: `R₀ = τ (n/N) S₀ E[T]` and `ln s = R₀ (s - 1)`.
//! Pairwise: `R₀ᵖ = ((n-1)/N) S₀ (1 - L(τ))`, with `L` the Laplace transform
//! of the recovery density, and
//! `(n-1)(s^{1/n} - 1) = R₀ᵖ (s^{(n-1)/n} - 1)`.
//!
//! `s = S∞/S₀`. Both relations always have the root `s = 1`; an interior root
//! exists iff the reproduction number exceeds 1, and is found by bisection.

use thiserror::Error;

use crate::dist::{DistError, RecoveryDistribution};

/// Bracket endpoints are kept this far from 0 and 1.
pub const BRACKET_EPS: f64 = 1e-12;

/// Largest accepted residual of a returned root.
pub const RESIDUAL_TOL: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum AnalyticsError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Dist(#[from] DistError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReproductionReport {
    pub tau: f64,
    pub degree: f64,
    pub nodes: f64,
    pub s0: f64,
    pub family: &'static str,
    pub mean: f64,
    pub variance: f64,
    pub laplace_at_tau: f64,
    pub r0: f64,
    pub r0p: f64,
}

pub fn reproduction_numbers(
    tau: f64,
    degree: f64,
    nodes: f64,
    s0: f64,
    dist: &RecoveryDistribution,
) -> Result<ReproductionReport, AnalyticsError> {
    if !(tau.is_finite() && tau >= 0.0) {
        return Err(AnalyticsError::InvalidParameter(format!("tau must be >= 0, got {tau}")));
    }
    if !(degree >= 2.0 && degree.is_finite()) {
        return Err(AnalyticsError::InvalidParameter(format!("degree must be >= 2, got {degree}")));
    }
    if !(nodes > 0.0 && nodes.is_finite() && (0.0..=nodes).contains(&s0)) {
        return Err(AnalyticsError::InvalidParameter(format!(
            "need N > 0 and 0 <= S0 <= N, got N={nodes}, S0={s0}"
        )));
    }
    let laplace = dist.laplace_pdf(tau)?;
    Ok(ReproductionReport {
        tau,
        degree,
        nodes,
        s0,
        family: dist.family(),
        mean: dist.mean(),
        variance: dist.variance(),
        laplace_at_tau: laplace,
        r0: tau * (degree / nodes) * s0 * dist.mean(),
        r0p: (degree - 1.0) / nodes * s0 * (1.0 - laplace),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    NoOutbreak,
    Outbreak,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FinalSizeResult {
    /// `S∞ / S₀`.
    pub s_inf: f64,
    pub attack_rate: f64,
    pub branch: Branch,
    pub residual: f64,
}

impl FinalSizeResult {
    fn no_outbreak() -> Self {
        Self {
            s_inf: 1.0,
            attack_rate: 0.0,
            branch: Branch::NoOutbreak,
            residual: 0.0,
        }
    }

    fn outbreak(s: f64, residual: f64) -> Self {
        Self {
            s_inf: s,
            attack_rate: 1.0 - s,
            branch: Branch::Outbreak,
            residual,
        }
    }
}

/// Root of `g` on `(BRACKET_EPS, 1 - BRACKET_EPS)`, where `g > 0` near 1
/// and `g < 0` below the root. A root under the bracket is searched for by
/// bisecting `ln s` down to the smallest normal double. Bisects until the
/// bracket stops shrinking.
fn bisect(g: impl Fn(f64) -> f64) -> (f64, f64) {
    let (mut lo, mut hi) = (BRACKET_EPS, 1.0 - BRACKET_EPS);
    let mut mid_of: fn(f64, f64) -> f64 = |a, b| 0.5 * (a + b);
    if g(lo) >= 0.0 {
        (lo, hi) = (f64::MIN_POSITIVE, BRACKET_EPS);
        mid_of = |a, b| (0.5 * (a.ln() + b.ln())).exp();
        if g(lo) >= 0.0 {
            return (lo, g(lo).abs());
        }
    }
    loop {
        let mid = mid_of(lo, hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if g(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let (glo, ghi) = (g(lo).abs(), g(hi).abs());
    if glo <= ghi {
        (lo, glo)
    } else {
        (hi, ghi)
    }
}

/// Solves `ln s = R₀ (s - 1)`.
pub fn final_size_meanfield(r0: f64) -> Result<FinalSizeResult, AnalyticsError> {
    if !(r0.is_finite() && r0 >= 0.0) {
        return Err(AnalyticsError::InvalidParameter(format!("R0 must be >= 0, got {r0}")));
    }
    if r0 <= 1.0 {
        return Ok(FinalSizeResult::no_outbreak());
    }
    let (s, residual) = bisect(|s| s.ln() - r0 * (s - 1.0));
    Ok(FinalSizeResult::outbreak(s, residual))
}

/// Solves `(n-1)(s^{1/n} - 1) = R₀ᵖ (s^{(n-1)/n} - 1)`.
pub fn final_size_pairwise(r0p: f64, degree: f64) -> Result<FinalSizeResult, AnalyticsError> {
    if !(r0p.is_finite() && r0p >= 0.0) {
        return Err(AnalyticsError::InvalidParameter(format!("R0p must be >= 0, got {r0p}")));
    }
    if !(degree >= 2.0 && degree.is_finite()) {
        return Err(AnalyticsError::InvalidParameter(format!("degree must be >= 2, got {degree}")));
    }
    if r0p <= 1.0 {
        return Ok(FinalSizeResult::no_outbreak());
    }
    let n = degree;
    // expm1 keeps the powers accurate near s = 1 when n is large.
    let g = |s: f64| {
        let l = s.ln();
        (n - 1.0) * (l / n).exp_m1() - r0p * ((n - 1.0) / n * l).exp_m1()
    };
    let (s, residual) = bisect(g);
    Ok(FinalSizeResult::outbreak(s, residual))
}
