//! Infectious-period distributions.
//!
//! A [`RecoveryDistribution`] carries the law of the time from infection to
//! recovery and exposes the quantities the models consume: density `f`,
//! survival `ξ = 1 - F`, hazard `f / ξ`, the Laplace transform of `f`,
//! moments, and sampling for the stochastic simulator.
//!
//! The fixed-duration law has no finite density. Consumers branch on
//! [`RecoveryDistribution::point_mass`] and treat the recovery as an explicit
//! delayed event.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Exp};
use thiserror::Error;

/// Relative tolerance used to decide that an age sits on a breakpoint of a
/// piecewise-defined survival function.
const BREAKPOINT_RTOL: f64 = 1e-9;

/// Below this transform argument the uniform Laplace transform switches to
/// its first-order series.
const UNIFORM_LAPLACE_SERIES_CUTOFF: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DistError {
    #[error("age must be non-negative, got {0}")]
    NegativeAge(f64),
    #[error("transform argument must be non-negative, got {0}")]
    NegativeArgument(f64),
    #[error("fixed duration {0} has no finite density; use the point-mass path")]
    PointMass(f64),
    #[error("hazard undefined at age {0}: survival is zero")]
    ZeroSurvival(f64),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("cannot parse distribution spec `{spec}`: {reason}")]
    Parse { spec: String, reason: String },
}

/// Parameterisation of a recovery-time law.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Kind {
    /// Exponential with the given rate.
    Exponential { rate: f64 },
    /// Deterministic duration.
    Fixed { duration: f64 },
    /// Sum of `shape` exponential stages each with `rate`; the mean is
    /// `shape / rate`.
    Erlang { shape: u32, rate: f64 },
    /// Uniform on `[lower, upper]` with `0 < lower < upper`.
    Uniform { lower: f64, upper: f64 },
}

/// A validated infectious-period distribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecoveryDistribution(Kind);

fn positive(name: &str, v: f64) -> Result<f64, DistError> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(DistError::InvalidParameter(format!(
            "{name} must be positive and finite, got {v}"
        )))
    }
}

fn check_age(a: f64) -> Result<(), DistError> {
    if a < 0.0 || a.is_nan() {
        Err(DistError::NegativeAge(a))
    } else {
        Ok(())
    }
}

fn near(a: f64, b: f64) -> bool {
    (a - b).abs() <= BREAKPOINT_RTOL * b.abs().max(1.0)
}

impl RecoveryDistribution {
    pub fn exponential(rate: f64) -> Result<Self, DistError> {
        Ok(Self(Kind::Exponential {
            rate: positive("rate", rate)?,
        }))
    }

    pub fn fixed(duration: f64) -> Result<Self, DistError> {
        Ok(Self(Kind::Fixed {
            duration: positive("sigma", duration)?,
        }))
    }

    /// Erlang law with `shape` stages of the given stage `rate`.
    pub fn erlang(shape: u32, rate: f64) -> Result<Self, DistError> {
        if shape == 0 {
            return Err(DistError::InvalidParameter("shape must be >= 1".into()));
        }
        Ok(Self(Kind::Erlang {
            shape,
            rate: positive("rate", rate)?,
        }))
    }

    /// Erlang law with `shape` stages and mean `1/gamma`, i.e. stage rate
    /// `shape * gamma`.
    pub fn erlang_with_mean_rate(shape: u32, gamma: f64) -> Result<Self, DistError> {
        Self::erlang(shape, f64::from(shape) * positive("gamma", gamma)?)
    }

    pub fn uniform(lower: f64, upper: f64) -> Result<Self, DistError> {
        positive("a", lower)?;
        if !(upper.is_finite() && upper > lower) {
            return Err(DistError::InvalidParameter(format!(
                "uniform bounds need 0 < a < b, got a={lower}, b={upper}"
            )));
        }
        Ok(Self(Kind::Uniform { lower, upper }))
    }

    pub fn kind(&self) -> Kind {
        self.0
    }

    /// Short lowercase name of the family: `exp`, `fixed`, `gamma`, `uniform`.
    pub fn family(&self) -> &'static str {
        match self.0 {
            Kind::Exponential { .. } => "exp",
            Kind::Fixed { .. } => "fixed",
            Kind::Erlang { .. } => "gamma",
            Kind::Uniform { .. } => "uniform",
        }
    }

    /// Location of the point mass, present only for the fixed law.
    pub fn point_mass(&self) -> Option<f64> {
        match self.0 {
            Kind::Fixed { duration } => Some(duration),
            _ => None,
        }
    }

    pub fn has_point_mass(&self) -> bool {
        self.point_mass().is_some()
    }

    /// Smallest age beyond which survival is identically zero, if any.
    pub fn support_end(&self) -> Option<f64> {
        match self.0 {
            Kind::Fixed { duration } => Some(duration),
            Kind::Uniform { upper, .. } => Some(upper),
            _ => None,
        }
    }

    /// Ages at which `ξ` or its derivative is discontinuous.
    pub fn breakpoints(&self) -> Vec<f64> {
        match self.0 {
            Kind::Fixed { duration } => vec![duration],
            Kind::Uniform { lower, upper } => vec![lower, upper],
            _ => Vec::new(),
        }
    }

    /// Density at age `a`. Zero off the support.
    pub fn pdf(&self, a: f64) -> Result<f64, DistError> {
        check_age(a)?;
        Ok(match self.0 {
            Kind::Exponential { rate } => rate * (-rate * a).exp(),
            Kind::Fixed { duration } => return Err(DistError::PointMass(duration)),
            Kind::Erlang { shape, rate } => erlang_pdf(shape, rate, a),
            Kind::Uniform { lower, upper } => {
                if a > lower && a < upper {
                    1.0 / (upper - lower)
                } else {
                    0.0
                }
            }
        })
    }

    /// Right-continuous survival `ξ(a) = P(period > a)`.
    pub fn survival(&self, a: f64) -> Result<f64, DistError> {
        check_age(a)?;
        Ok(self.survival_side(a, false))
    }

    /// Left limit `ξ(a⁻)`. Differs from [`survival`](Self::survival) only at
    /// the fixed law's breakpoint.
    pub fn survival_left(&self, a: f64) -> Result<f64, DistError> {
        check_age(a)?;
        Ok(self.survival_side(a, true))
    }

    fn survival_side(&self, a: f64, left: bool) -> f64 {
        match self.0 {
            Kind::Exponential { rate } => (-rate * a).exp(),
            Kind::Fixed { duration } => {
                let before = if left {
                    a < duration || near(a, duration)
                } else {
                    a < duration && !near(a, duration)
                };
                if before {
                    1.0
                } else {
                    0.0
                }
            }
            Kind::Erlang { shape, rate } => erlang_survival(shape, rate, a),
            Kind::Uniform { lower, upper } => {
                if a <= lower {
                    1.0
                } else if a >= upper {
                    0.0
                } else {
                    (upper - a) / (upper - lower)
                }
            }
        }
    }

    pub fn cdf(&self, a: f64) -> Result<f64, DistError> {
        Ok(1.0 - self.survival(a)?)
    }

    /// Hazard `f(a) / ξ(a)`. Undefined for the fixed law and where `ξ = 0`.
    pub fn hazard(&self, a: f64) -> Result<f64, DistError> {
        let xi = self.survival(a)?;
        if let Kind::Exponential { rate } = self.0 {
            return Ok(rate);
        }
        let f = self.pdf(a)?;
        if xi <= 0.0 {
            return Err(DistError::ZeroSurvival(a));
        }
        Ok(f / xi)
    }

    /// `∫₀^∞ f(a) e^{-τ a} da`, in closed form.
    pub fn laplace_pdf(&self, tau: f64) -> Result<f64, DistError> {
        if tau < 0.0 || tau.is_nan() {
            return Err(DistError::NegativeArgument(tau));
        }
        Ok(match self.0 {
            Kind::Exponential { rate } => rate / (rate + tau),
            Kind::Fixed { duration } => (-tau * duration).exp(),
            Kind::Erlang { shape, rate } => (rate / (rate + tau)).powi(shape as i32),
            Kind::Uniform { lower, upper } => {
                if tau < UNIFORM_LAPLACE_SERIES_CUTOFF {
                    1.0 - tau * (lower + upper) / 2.0
                } else {
                    let x = tau * (upper - lower);
                    (-tau * lower).exp() * -(-x).exp_m1() / x
                }
            }
        })
    }

    pub fn mean(&self) -> f64 {
        match self.0 {
            Kind::Exponential { rate } => 1.0 / rate,
            Kind::Fixed { duration } => duration,
            Kind::Erlang { shape, rate } => f64::from(shape) / rate,
            Kind::Uniform { lower, upper } => 0.5 * (lower + upper),
        }
    }

    pub fn variance(&self) -> f64 {
        match self.0 {
            Kind::Exponential { rate } => 1.0 / (rate * rate),
            Kind::Fixed { .. } => 0.0,
            Kind::Erlang { shape, rate } => f64::from(shape) / (rate * rate),
            Kind::Uniform { lower, upper } => (upper - lower).powi(2) / 12.0,
        }
    }

    /// Draws an infectious period. Erlang draws are sums of exponential
    /// stage durations.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self.0 {
            Kind::Exponential { rate } => Exp::new(rate).expect("validated rate").sample(rng),
            Kind::Fixed { duration } => duration,
            Kind::Erlang { shape, rate } => {
                let stage = Exp::new(rate).expect("validated rate");
                (0..shape).map(|_| stage.sample(rng)).sum()
            }
            Kind::Uniform { lower, upper } => rng.random_range(lower..upper),
        }
    }

    /// Moves every breakpoint onto the nearest multiple of `h`. Returns the
    /// adjusted law and a human-readable note when anything moved.
    pub fn snapped_to_grid(&self, h: f64) -> (Self, Option<String>) {
        let snap = |v: f64| -> f64 {
            let k = (v / h).round().max(1.0);
            k * h
        };
        let on_grid = |v: f64| near(v, (v / h).round() * h) && (v / h).round() >= 1.0;
        match self.0 {
            Kind::Fixed { duration } if !on_grid(duration) => {
                let d = snap(duration);
                (
                    Self(Kind::Fixed { duration: d }),
                    Some(format!("sigma {duration} snapped to {d} for step {h}")),
                )
            }
            Kind::Uniform { lower, upper } if !on_grid(lower) || !on_grid(upper) => {
                let (l, mut u) = (snap(lower), snap(upper));
                if u <= l {
                    u = l + h;
                }
                (
                    Self(Kind::Uniform { lower: l, upper: u }),
                    Some(format!(
                        "uniform bounds [{lower}, {upper}] snapped to [{l}, {u}] for step {h}"
                    )),
                )
            }
            _ => (*self, None),
        }
    }
}

fn erlang_pdf(shape: u32, rate: f64, a: f64) -> f64 {
    if a == 0.0 {
        return if shape == 1 { rate } else { 0.0 };
    }
    let k = f64::from(shape);
    let log_fact = (1..shape).map(|i| f64::from(i).ln()).sum::<f64>();
    (k * rate.ln() + (k - 1.0) * a.ln() - rate * a - log_fact).exp()
}

fn erlang_survival(shape: u32, rate: f64, a: f64) -> f64 {
    let x = rate * a;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..shape {
        term *= x / f64::from(k);
        sum += term;
    }
    ((-x).exp() * sum).min(1.0)
}

impl fmt::Display for RecoveryDistribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.0 {
            Kind::Exponential { rate } => write!(f, "exp:rate={rate}"),
            Kind::Fixed { duration } => write!(f, "fixed:sigma={duration}"),
            Kind::Erlang { shape, rate } => write!(f, "gamma:shape={shape},rate={rate}"),
            Kind::Uniform { lower, upper } => write!(f, "uniform:a={lower},b={upper}"),
        }
    }
}

impl FromStr for RecoveryDistribution {
    type Err = DistError;

    /// Parses `exp:rate=R`, `fixed:sigma=S`, `gamma:shape=K,rate=R` or
    /// `uniform:a=A,b=B`.
    fn from_str(spec: &str) -> Result<Self, Self::Err> {
        let fail = |reason: String| DistError::Parse {
            spec: spec.to_string(),
            reason,
        };
        let (family, rest) = spec
            .trim()
            .split_once(':')
            .ok_or_else(|| fail("expected `family:key=value,...`".into()))?;
        let mut params: Vec<(&str, &str)> = Vec::new();
        for part in rest.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (k, v) = part
                .split_once('=')
                .ok_or_else(|| fail(format!("parameter `{part}` is not key=value")))?;
            params.push((k.trim(), v.trim()));
        }
        let take = |key: &str| -> Result<f64, DistError> {
            let (_, v) = params
                .iter()
                .find(|(k, _)| *k == key)
                .ok_or_else(|| fail(format!("missing parameter `{key}`")))?;
            v.parse::<f64>()
                .map_err(|e| fail(format!("parameter `{key}`: {e}")))
        };
        let allowed: &[&str] = match family.trim() {
            "exp" => &["rate"],
            "fixed" => &["sigma"],
            "gamma" => &["shape", "rate"],
            "uniform" => &["a", "b"],
            other => return Err(fail(format!("unknown family `{other}`"))),
        };
        if let Some((k, _)) = params.iter().find(|(k, _)| !allowed.contains(k)) {
            return Err(fail(format!("unknown parameter `{k}`")));
        }
        match family.trim() {
            "exp" => Self::exponential(take("rate")?),
            "fixed" => Self::fixed(take("sigma")?),
            "gamma" => {
                let shape = take("shape")?;
                if shape < 1.0 || shape.fract() != 0.0 || shape > f64::from(u32::MAX) {
                    return Err(fail(format!("shape must be a positive integer, got {shape}")));
                }
                Self::erlang(shape as u32, take("rate")?)
            }
            _ => Self::uniform(take("a")?, take("b")?),
        }
    }
}
