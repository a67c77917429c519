//! Integration of the generalised mean-field and pairwise systems.
//!
//! Both models are advanced by one stepping core that handles systems of the
//! form
//!
//! ```text
//! x'(t) = f(t, x, y)
//! Φ'(t) = G(x, y)
//! M(t)  = ∫₀ᵗ k(t - a) φ(x(a), y(a)) e^{-(Φ(t) - Φ(a))} da
//! y'(t) = g(t, x, y) - M(t) - H(t, Φ(t))        (differential form)
//! y(t)  = M(t) + H(t, Φ(t))                     (renewal form)
//! ```
//!
//! on a uniform grid. The memory integral uses the composite trapezoid rule
//! on grid nodes, `x` and `Φ` use the trapezoid rule, and the implicit value
//! at the new node is resolved by a fixed number of fixed-point corrector
//! sweeps. The exponential weight is formed from the accumulated `Φ`, never
//! by nested quadrature.
//!
//! Kernels and boundary terms may jump at grid nodes. Every node therefore
//! carries a left and a right value, and each trapezoid panel uses the
//! one-sided values that belong to it, which keeps the rule second order
//! for step-function survival kernels.
//!
//! The epidemic models use the renewal form: `[I]` and `[SI]` are
//! convolutions of past incidence with the survival function `ξ`, which is
//! bounded even when the recovery law has a point mass.

use thiserror::Error;

use crate::dist::{DistError, Kind, RecoveryDistribution};
use crate::trajectory::Trajectory;

/// Stored exponential weights are rebased once `Φ` has grown by this much.
const REBASE_THRESHOLD: f64 = 300.0;

/// Upper bound on grid points per solve.
pub const MAX_STEPS: usize = 20_000_000;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("corrector failed to contract at t={t} (h={h}); reduce the step size")]
    StepTooLarge { t: f64, h: f64 },
    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid model parameters: {0}")]
    InvalidParams(String),
    #[error("non-finite state at t={0}")]
    NonFinite(f64),
    #[error("state left the admissible region at t={t}: {reason}")]
    InvalidState { t: f64, reason: String },
    #[error("recovery law `{0}` is not supported here: {1}")]
    Unsupported(String, String),
    #[error(transparent)]
    Dist(#[from] DistError),
}

/// Which one-sided value to use at a node where a term jumps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MemoryForm {
    Differential,
    Renewal,
}

/// One-sided limits `(k(age⁻), k(age⁺))` of a memory kernel.
pub type KernelLimits = (f64, f64);

/// A system handled by the stepping core. `D` is the dimension of the
/// ordinary part `x`.
pub trait IdeSystem<const D: usize> {
    fn form(&self) -> MemoryForm;

    /// `x'`.
    fn drift(&self, t: f64, x: &[f64; D], y: f64) -> [f64; D];

    /// Local term `g` of the differential form.
    fn local(&self, _t: f64, _x: &[f64; D], _y: f64) -> f64 {
        0.0
    }

    /// Integrand `G` of the cumulative exponent `Φ`.
    fn rate(&self, _x: &[f64; D], _y: f64) -> f64 {
        0.0
    }

    /// Memory source `φ(x(a), y(a))`.
    fn source(&self, x: &[f64; D], y: f64) -> f64;

    /// Memory kernel as a function of age.
    fn kernel(&self, age: f64) -> KernelLimits;

    /// Boundary term `H(t, Φ(t))`.
    fn boundary(&self, _t: f64, _phi: f64, _side: Side) -> f64 {
        0.0
    }

    /// Rejects inadmissible states after each step.
    fn validate(&self, _t: f64, _x: &[f64; D], _y: f64) -> Result<(), String> {
        Ok(())
    }
}

/// Initial distribution of infection ages.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialAges {
    /// All initial infecteds have age zero.
    Newborn,
    /// Density of initial infecteds over age, tabulated on `ages` (ascending,
    /// starting at 0); its integral is the initial number of infecteds.
    Profile { ages: Vec<f64>, density: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub h: f64,
    pub t_end: f64,
    pub corrector_iters: usize,
    pub initial: InitialAges,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            h: 1e-2,
            t_end: 25.0,
            corrector_iters: 3,
            initial: InitialAges::Newborn,
        }
    }
}

impl SolverConfig {
    pub fn new(h: f64, t_end: f64) -> Self {
        Self {
            h,
            t_end,
            ..Self::default()
        }
    }

    pub fn newborn(&self) -> bool {
        self.initial == InitialAges::Newborn
    }

    /// Number of steps; `t_end` is rounded to the nearest grid multiple.
    pub fn steps(&self) -> Result<usize, SolverError> {
        if !(self.h.is_finite() && self.h > 0.0) {
            return Err(SolverError::InvalidConfig(format!("h must be > 0, got {}", self.h)));
        }
        if !(self.t_end.is_finite() && self.t_end > 0.0) {
            return Err(SolverError::InvalidConfig(format!(
                "t_end must be > 0, got {}",
                self.t_end
            )));
        }
        if self.corrector_iters == 0 {
            return Err(SolverError::InvalidConfig("corrector_iters must be >= 1".into()));
        }
        let steps = (self.t_end / self.h).round();
        if steps < 1.0 || steps >= MAX_STEPS as f64 {
            return Err(SolverError::InvalidConfig(format!(
                "t_end/h = {steps} outside [1, {MAX_STEPS})"
            )));
        }
        Ok(steps as usize)
    }
}

/// Tabulated kernel limits at ages `i * h`.
#[derive(Debug, Clone)]
pub struct KernelTable {
    below: Vec<f64>,
    above: Vec<f64>,
    /// One past the last index with a nonzero entry.
    support: usize,
}

impl KernelTable {
    pub fn tabulate(len: usize, h: f64, k: impl Fn(f64) -> KernelLimits) -> Self {
        let (below, above): (Vec<f64>, Vec<f64>) = (0..len).map(|i| k(i as f64 * h)).unzip();
        let support = (0..len)
            .rev()
            .find(|&i| below[i] != 0.0 || above[i] != 0.0)
            .map_or(0, |i| i + 1);
        Self {
            below,
            above,
            support,
        }
    }

    pub fn len(&self) -> usize {
        self.below.len()
    }

    pub fn is_empty(&self) -> bool {
        self.below.is_empty()
    }
}

/// Grid history and quadrature state of the stepping core.
#[derive(Debug, Clone)]
pub struct IdeHistory<const D: usize> {
    h: f64,
    form: MemoryForm,
    kernel: KernelTable,
    pub x: Vec<[f64; D]>,
    /// `y(t_m⁻)`.
    pub y_left: Vec<f64>,
    /// `y(t_m⁺)`.
    pub y_right: Vec<f64>,
    pub phi: Vec<f64>,
    /// `y'(t_m⁺)` for the differential form.
    dy_right: Vec<f64>,
    /// `e^{Φ_j - Φ_ref}`.
    ephi: Vec<f64>,
    phi_ref: f64,
    /// Right source times weight, `φ(x_j, y_j⁺) e^{Φ_j - Φ_ref}`.
    src_right: Vec<f64>,
    /// Left source times weight; zero at the first node.
    src_left: Vec<f64>,
}

impl<const D: usize> IdeHistory<D> {
    /// Initialises the history at `t = 0`. In renewal form `y0` is ignored
    /// and replaced by the boundary term.
    pub fn new<S: IdeSystem<D>>(system: &S, x0: [f64; D], y0: f64, h: f64, capacity: usize) -> Self {
        let form = system.form();
        let kernel = KernelTable::tabulate(capacity + 1, h, |a| system.kernel(a));
        let (y_l, y_r) = match form {
            MemoryForm::Renewal => (
                system.boundary(0.0, 0.0, Side::Right),
                system.boundary(0.0, 0.0, Side::Right),
            ),
            MemoryForm::Differential => (y0, y0),
        };
        let mut hist = Self {
            h,
            form,
            kernel,
            x: Vec::with_capacity(capacity + 1),
            y_left: Vec::with_capacity(capacity + 1),
            y_right: Vec::with_capacity(capacity + 1),
            phi: Vec::with_capacity(capacity + 1),
            dy_right: Vec::with_capacity(capacity + 1),
            ephi: Vec::with_capacity(capacity + 1),
            phi_ref: 0.0,
            src_right: Vec::with_capacity(capacity + 1),
            src_left: Vec::with_capacity(capacity + 1),
        };
        hist.x.push(x0);
        hist.y_left.push(y_l);
        hist.y_right.push(y_r);
        hist.phi.push(0.0);
        hist.ephi.push(1.0);
        hist.src_right.push(system.source(&x0, y_r));
        hist.src_left.push(0.0);
        let dy0 = match form {
            MemoryForm::Differential => {
                system.local(0.0, &x0, y_r) - system.boundary(0.0, 0.0, Side::Right)
            }
            MemoryForm::Renewal => 0.0,
        };
        hist.dy_right.push(dy0);
        hist
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    /// Index of the latest node.
    pub fn last(&self) -> usize {
        self.x.len() - 1
    }

    pub fn time(&self, m: usize) -> f64 {
        m as f64 * self.h
    }

    /// Memory contribution of nodes `0..=m` to the integral at node `m + 1`,
    /// scaled to `Φ_m`.
    fn history_sum(&self) -> f64 {
        let m = self.last();
        let target = m + 1;
        let start = (target + 1).saturating_sub(self.kernel.support);
        let mut acc = 0.0;
        for j in start..=m {
            let age = target - j;
            acc += self.kernel.below[age] * self.src_right[j] + self.kernel.above[age] * self.src_left[j];
        }
        0.5 * self.h * acc / self.ephi[m]
    }

    fn rebase_if_needed(&mut self) {
        let m = self.last();
        if self.phi[m] - self.phi_ref <= REBASE_THRESHOLD {
            return;
        }
        let factor = (self.phi_ref - self.phi[m]).exp();
        for v in self
            .ephi
            .iter_mut()
            .chain(self.src_right.iter_mut())
            .chain(self.src_left.iter_mut())
        {
            *v *= factor;
        }
        self.phi_ref = self.phi[m];
    }
}

fn axpy<const D: usize>(base: &[f64; D], scale: f64, a: &[f64; D], b: &[f64; D]) -> [f64; D] {
    let mut out = *base;
    for k in 0..D {
        out[k] += scale * (a[k] + b[k]);
    }
    out
}

/// Advances the history by one step of size `h`.
pub fn generic_ide_step<const D: usize, S: IdeSystem<D>>(
    hist: &mut IdeHistory<D>,
    system: &S,
    corrector_iters: usize,
) -> Result<(), SolverError> {
    let h = hist.h;
    let m = hist.last();
    if m + 1 >= hist.kernel.len() {
        return Err(SolverError::InvalidConfig("history capacity exhausted".into()));
    }
    hist.rebase_if_needed();
    let t0 = hist.time(m);
    let t1 = hist.time(m + 1);
    let x0 = hist.x[m];
    let y0 = hist.y_right[m];
    let phi0 = hist.phi[m];
    let f0 = system.drift(t0, &x0, y0);
    let g0 = system.rate(&x0, y0);
    let past = hist.history_sum();
    let k0 = hist.kernel.above[0];
    let half = 0.5 * h;

    // Predictor: explicit Euler for x and Φ, constant extrapolation for y
    // (renewal) or explicit Euler (differential).
    let mut x1 = axpy(&x0, h, &f0, &[0.0; D]);
    let mut phi1 = phi0 + h * g0;
    let mut y1 = match hist.form {
        MemoryForm::Renewal => y0,
        MemoryForm::Differential => y0 + h * hist.dy_right[m],
    };
    let mut last_delta = f64::INFINITY;
    let mut dy1 = 0.0;
    for iter in 0..corrector_iters {
        let f1 = system.drift(t1, &x1, y1);
        let x_new = axpy(&x0, half, &f0, &f1);
        let phi_new = phi0 + half * (g0 + system.rate(&x1, y1));
        let memory = (phi0 - phi_new).exp() * past + half * k0 * system.source(&x_new, y1);
        let y_new = match hist.form {
            MemoryForm::Renewal => memory + system.boundary(t1, phi_new, Side::Left),
            MemoryForm::Differential => {
                dy1 = system.local(t1, &x_new, y1) - memory - system.boundary(t1, phi_new, Side::Left);
                y0 + half * (hist.dy_right[m] + dy1)
            }
        };
        let mut delta = (y_new - y1).abs();
        for k in 0..D {
            delta = delta.max((x_new[k] - x1[k]).abs());
        }
        let scale = 1.0 + y_new.abs() + x_new.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if iter >= 1 && delta > last_delta && delta > 1e-10 * scale {
            return Err(SolverError::StepTooLarge { t: t1, h });
        }
        last_delta = delta;
        x1 = x_new;
        phi1 = phi_new;
        y1 = y_new;
    }

    if !y1.is_finite() || !phi1.is_finite() || x1.iter().any(|v| !v.is_finite()) {
        return Err(SolverError::NonFinite(t1));
    }
    let (y_left, y_right, dy_right) = match hist.form {
        MemoryForm::Renewal => {
            let jump = system.boundary(t1, phi1, Side::Right) - system.boundary(t1, phi1, Side::Left);
            (y1, y1 + jump, 0.0)
        }
        MemoryForm::Differential => {
            let jump = system.boundary(t1, phi1, Side::Left) - system.boundary(t1, phi1, Side::Right);
            (y1, y1, dy1 + jump)
        }
    };
    system
        .validate(t1, &x1, y_right)
        .map_err(|reason| SolverError::InvalidState { t: t1, reason })?;

    let ephi1 = (phi1 - hist.phi_ref).exp();
    hist.x.push(x1);
    hist.y_left.push(y_left);
    hist.y_right.push(y_right);
    hist.phi.push(phi1);
    hist.dy_right.push(dy_right);
    hist.ephi.push(ephi1);
    hist.src_right.push(system.source(&x1, y_right) * ephi1);
    hist.src_left.push(system.source(&x1, y_left) * ephi1);
    Ok(())
}

/// Runs the stepping core over `[0, cfg.t_end]`.
pub fn integrate<const D: usize, S: IdeSystem<D>>(
    system: &S,
    x0: [f64; D],
    y0: f64,
    cfg: &SolverConfig,
) -> Result<IdeHistory<D>, SolverError> {
    let steps = cfg.steps()?;
    let mut hist = IdeHistory::new(system, x0, y0, cfg.h, steps);
    for _ in 0..steps {
        generic_ide_step(&mut hist, system, cfg.corrector_iters)?;
    }
    Ok(hist)
}

/// Trapezoidal convolution `∫₀^{t_m} k(t_m - a) s(a) da` for every node,
/// with one-sided kernel and source values.
pub fn convolve(kernel: &KernelTable, h: f64, source_left: &[f64], source_right: &[f64]) -> Vec<f64> {
    let len = source_left.len();
    let mut out = vec![0.0; len];
    for (m, slot) in out.iter_mut().enumerate().skip(1) {
        let start = (m + 1).saturating_sub(kernel.support);
        let mut acc = 0.0;
        for j in start..=m {
            let age = m - j;
            if j < m {
                acc += kernel.below[age] * source_right[j];
            }
            if j > 0 {
                acc += kernel.above[age] * source_left[j];
            }
        }
        *slot = 0.5 * h * acc;
    }
    out
}

/// Epidemic and network parameters shared by the deterministic models.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub tau: f64,
    pub dist: RecoveryDistribution,
    /// Degree `n` of the regular network.
    pub degree: f64,
    /// Number of nodes `N`.
    pub nodes: f64,
    pub s0: f64,
    pub i0: f64,
}

impl ModelParams {
    /// Parameters with `S₀ = N - I₀`.
    pub fn new(tau: f64, dist: RecoveryDistribution, degree: f64, nodes: f64, i0: f64) -> Result<Self, SolverError> {
        let p = Self {
            tau,
            dist,
            degree,
            nodes,
            s0: nodes - i0,
            i0,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), SolverError> {
        let bad = |m: String| Err(SolverError::InvalidParams(m));
        if !(self.tau.is_finite() && self.tau >= 0.0) {
            return bad(format!("tau must be >= 0, got {}", self.tau));
        }
        if !(self.degree >= 2.0 && self.nodes > self.degree) {
            return bad(format!("need 2 <= n < N, got n={}, N={}", self.degree, self.nodes));
        }
        if !(self.s0 > 0.0 && self.i0 >= 0.0 && self.s0 + self.i0 <= self.nodes * (1.0 + 1e-12)) {
            return bad(format!(
                "need S0 > 0, I0 >= 0, S0 + I0 <= N; got S0={}, I0={}",
                self.s0, self.i0
            ));
        }
        Ok(())
    }

    /// `[SS]` implied by the first integral at a given `[S]`.
    pub fn ss_from_first_integral(&self, s: f64) -> f64 {
        let n = self.degree;
        (n / self.nodes) * self.s0.powf(2.0 / n) * s.max(0.0).powf(2.0 * (n - 1.0) / n)
    }

    /// `U = [SS] / [S]^{2(n-1)/n}`.
    pub fn first_integral(&self, s: f64, ss: f64) -> f64 {
        ss / s.powf(2.0 * (self.degree - 1.0) / self.degree)
    }
}

/// Initial-cohort bookkeeping: fraction of the initial infecteds still
/// infectious at each node, and the initial number infected.
struct Cohort {
    surviving_left: Vec<f64>,
    surviving_right: Vec<f64>,
    i0: f64,
}

impl Cohort {
    fn build(dist: &RecoveryDistribution, initial: &InitialAges, i0: f64, h: f64, steps: usize) -> Result<Self, SolverError> {
        match initial {
            InitialAges::Newborn => {
                let mut left = Vec::with_capacity(steps + 1);
                let mut right = Vec::with_capacity(steps + 1);
                for m in 0..=steps {
                    let t = m as f64 * h;
                    left.push(dist.survival_left(t)?);
                    right.push(dist.survival(t)?);
                }
                Ok(Self {
                    surviving_left: left,
                    surviving_right: right,
                    i0,
                })
            }
            InitialAges::Profile { ages, density } => {
                if !matches!(dist.kind(), Kind::Exponential { .. } | Kind::Erlang { .. }) {
                    return Err(SolverError::Unsupported(
                        dist.to_string(),
                        "tabulated initial ages need a survival function that never vanishes".into(),
                    ));
                }
                if ages.len() != density.len() || ages.len() < 2 || ages[0] != 0.0 {
                    return Err(SolverError::InvalidConfig(
                        "age profile needs matching ascending ages starting at 0".into(),
                    ));
                }
                if ages.windows(2).any(|w| w[1] <= w[0]) || density.iter().any(|&d| d < 0.0) {
                    return Err(SolverError::InvalidConfig(
                        "age profile ages must increase and densities be >= 0".into(),
                    ));
                }
                let trap = |f: &dyn Fn(usize) -> f64| -> f64 {
                    ages.windows(2)
                        .enumerate()
                        .map(|(k, w)| 0.5 * (w[1] - w[0]) * (f(k) + f(k + 1)))
                        .sum()
                };
                let total = trap(&|k| density[k]);
                let mut surv = Vec::with_capacity(steps + 1);
                for m in 0..=steps {
                    let t = m as f64 * h;
                    let remaining = trap(&|k| {
                        let b = ages[k];
                        density[k] * dist.survival(b + t).unwrap_or(0.0) / dist.survival(b).unwrap_or(1.0)
                    });
                    surv.push(if total > 0.0 { remaining / total } else { 0.0 });
                }
                Ok(Self {
                    surviving_left: surv.clone(),
                    surviving_right: surv,
                    i0: total,
                })
            }
        }
    }

    fn surviving(&self, t: f64, h: f64, side: Side) -> f64 {
        let m = ((t / h).round() as usize).min(self.surviving_left.len() - 1);
        match side {
            Side::Left => self.surviving_left[m],
            Side::Right => self.surviving_right[m],
        }
    }
}

fn survival_kernel(dist: &RecoveryDistribution) -> impl Fn(f64) -> KernelLimits + '_ {
    move |a| {
        (
            dist.survival_left(a).expect("non-negative age"),
            dist.survival(a).expect("non-negative age"),
        )
    }
}

fn cdf_kernel(dist: &RecoveryDistribution) -> impl Fn(f64) -> KernelLimits + '_ {
    move |a| {
        (
            1.0 - dist.survival_left(a).expect("non-negative age"),
            1.0 - dist.survival(a).expect("non-negative age"),
        )
    }
}

/// Solution of a deterministic model on the step grid.
#[derive(Debug, Clone)]
pub struct ModelSolution {
    /// Right-continuous values at every grid node.
    pub trajectory: Trajectory,
    /// Cumulative exponent `Φ(t)`; zero for the mean-field model.
    pub phi: Vec<f64>,
    /// Grid-snapping notes.
    pub warnings: Vec<String>,
}

/// Mean-field model in renewal form: `x = S`, `y = I`.
struct MeanField<'a> {
    p: &'a ModelParams,
    beta: f64,
    cohort: &'a Cohort,
    h: f64,
}

impl IdeSystem<1> for MeanField<'_> {
    fn form(&self) -> MemoryForm {
        MemoryForm::Renewal
    }

    fn drift(&self, _t: f64, x: &[f64; 1], y: f64) -> [f64; 1] {
        [-self.beta * x[0] * y]
    }

    fn source(&self, x: &[f64; 1], y: f64) -> f64 {
        self.beta * x[0] * y
    }

    fn kernel(&self, age: f64) -> KernelLimits {
        survival_kernel(&self.p.dist)(age)
    }

    fn boundary(&self, t: f64, _phi: f64, side: Side) -> f64 {
        self.cohort.i0 * self.cohort.surviving(t, self.h, side)
    }

    fn validate(&self, _t: f64, x: &[f64; 1], _y: f64) -> Result<(), String> {
        if x[0] > 0.0 {
            Ok(())
        } else {
            Err(format!("S = {} <= 0", x[0]))
        }
    }
}

fn prepare(p: &ModelParams, cfg: &SolverConfig) -> Result<(ModelParams, Vec<String>, usize), SolverError> {
    p.validate()?;
    let steps = cfg.steps()?;
    let (dist, note) = p.dist.snapped_to_grid(cfg.h);
    let mut q = p.clone();
    q.dist = dist;
    Ok((q, note.into_iter().collect(), steps))
}

/// Solves `S' = -τ(n/N) S I` with `I` from its renewal equation.
pub fn solve_meanfield(p: &ModelParams, cfg: &SolverConfig) -> Result<ModelSolution, SolverError> {
    let (p, warnings, steps) = prepare(p, cfg)?;
    let h = cfg.h;
    let cohort = Cohort::build(&p.dist, &cfg.initial, p.i0, h, steps)?;
    let beta = p.tau * p.degree / p.nodes;
    let sys = MeanField {
        p: &p,
        beta,
        cohort: &cohort,
        h,
    };
    let hist = integrate(&sys, [p.s0], 0.0, cfg)?;

    let incidence = |ys: &[f64]| -> Vec<f64> {
        hist.x.iter().zip(ys).map(|(x, &y)| beta * x[0] * y).collect()
    };
    let (inc_l, inc_r) = (incidence(&hist.y_left), incidence(&hist.y_right));
    let cdf = KernelTable::tabulate(steps + 1, h, cdf_kernel(&p.dist));
    let recovered = convolve(&cdf, h, &inc_l, &inc_r);

    let mut tr = Trajectory::with_capacity(h, steps + 1);
    let pair = p.degree / p.nodes;
    for (m, rec) in recovered.iter().enumerate().take(steps + 1) {
        let s = hist.x[m][0];
        let i = hist.y_right[m];
        let r = rec + cohort.i0 * (1.0 - cohort.surviving_right[m]);
        tr.push(hist.time(m), s, i, r, pair * s * i, pair * s * s);
    }
    Ok(ModelSolution {
        trajectory: tr,
        phi: hist.phi,
        warnings,
    })
}

/// How the pairwise solver obtains `[SS]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SsMode {
    /// From the first integral `[SS] = (n/N)[S]₀^{2/n}[S]^{2(n-1)/n}`.
    #[default]
    FirstIntegral,
    /// Integrated alongside `[S]` from its own closed equation.
    Integrated,
}

struct Pairwise<'a> {
    p: &'a ModelParams,
    cohort: &'a Cohort,
    h: f64,
    /// `(n-1)/n`.
    closure: f64,
    si0_scale: f64,
}

impl Pairwise<'_> {
    fn rate_of(&self, s: f64, si: f64) -> f64 {
        self.p.tau * self.closure * si / s + self.p.tau
    }

    fn infection_source(&self, s: f64, ss: f64, si: f64) -> f64 {
        self.p.tau * self.closure * ss * si / s
    }

    fn boundary_value(&self, t: f64, phi: f64, side: Side) -> f64 {
        self.si0_scale * (-phi).exp() * self.cohort.surviving(t, self.h, side)
    }

    fn check(&self, s: f64, si: f64) -> Result<(), String> {
        if s > 0.0 && si.is_finite() {
            Ok(())
        } else {
            Err(format!("[S] = {s} must stay positive"))
        }
    }
}

impl IdeSystem<1> for Pairwise<'_> {
    fn form(&self) -> MemoryForm {
        MemoryForm::Renewal
    }

    fn drift(&self, _t: f64, _x: &[f64; 1], y: f64) -> [f64; 1] {
        [-self.p.tau * y]
    }

    fn rate(&self, x: &[f64; 1], y: f64) -> f64 {
        self.rate_of(x[0], y)
    }

    fn source(&self, x: &[f64; 1], y: f64) -> f64 {
        self.infection_source(x[0], self.p.ss_from_first_integral(x[0]), y)
    }

    fn kernel(&self, age: f64) -> KernelLimits {
        survival_kernel(&self.p.dist)(age)
    }

    fn boundary(&self, t: f64, phi: f64, side: Side) -> f64 {
        self.boundary_value(t, phi, side)
    }

    fn validate(&self, _t: f64, x: &[f64; 1], y: f64) -> Result<(), String> {
        self.check(x[0], y)
    }
}

/// Pairwise system with `x = ([S], [SS])`.
struct PairwiseFull<'a>(Pairwise<'a>);

impl IdeSystem<2> for PairwiseFull<'_> {
    fn form(&self) -> MemoryForm {
        MemoryForm::Renewal
    }

    fn drift(&self, _t: f64, x: &[f64; 2], y: f64) -> [f64; 2] {
        let p = self.0.p;
        [-p.tau * y, -2.0 * p.tau * self.0.closure * x[1] * y / x[0]]
    }

    fn rate(&self, x: &[f64; 2], y: f64) -> f64 {
        self.0.rate_of(x[0], y)
    }

    fn source(&self, x: &[f64; 2], y: f64) -> f64 {
        self.0.infection_source(x[0], x[1], y)
    }

    fn kernel(&self, age: f64) -> KernelLimits {
        survival_kernel(&self.0.p.dist)(age)
    }

    fn boundary(&self, t: f64, phi: f64, side: Side) -> f64 {
        self.0.boundary_value(t, phi, side)
    }

    fn validate(&self, _t: f64, x: &[f64; 2], y: f64) -> Result<(), String> {
        self.0.check(x[0], y)
    }
}

/// Solves the reduced pairwise system: `[S]' = -τ[SI]` with `[SI]` from its
/// renewal equation, `[SS]` from the first integral, and `[I]`, `[R]` as
/// convolutions of the incidence `τ[SI]` with `ξ` and `1 - ξ`.
pub fn solve_pairwise(p: &ModelParams, cfg: &SolverConfig) -> Result<ModelSolution, SolverError> {
    solve_pairwise_with(p, cfg, SsMode::FirstIntegral)
}

pub fn solve_pairwise_with(p: &ModelParams, cfg: &SolverConfig, mode: SsMode) -> Result<ModelSolution, SolverError> {
    let (p, warnings, steps) = prepare(p, cfg)?;
    let h = cfg.h;
    let cohort = Cohort::build(&p.dist, &cfg.initial, p.i0, h, steps)?;
    let n = p.degree;
    let base = Pairwise {
        p: &p,
        cohort: &cohort,
        h,
        closure: (n - 1.0) / n,
        si0_scale: (n / p.nodes) * p.s0 * cohort.i0,
    };

    let (s, ss, si_left, si_right, phi) = match mode {
        SsMode::FirstIntegral => {
            let hist = integrate(&base, [p.s0], 0.0, cfg)?;
            let s: Vec<f64> = hist.x.iter().map(|x| x[0]).collect();
            let ss: Vec<f64> = s.iter().map(|&v| p.ss_from_first_integral(v)).collect();
            (s, ss, hist.y_left, hist.y_right, hist.phi)
        }
        SsMode::Integrated => {
            let ss0 = (n / p.nodes) * p.s0 * p.s0;
            let sys = PairwiseFull(base);
            let hist = integrate(&sys, [p.s0, ss0], 0.0, cfg)?;
            let s: Vec<f64> = hist.x.iter().map(|x| x[0]).collect();
            let ss = hist.x.iter().map(|x| x[1]).collect();
            (s, ss, hist.y_left, hist.y_right, hist.phi)
        }
    };

    let inc_l: Vec<f64> = si_left.iter().map(|v| p.tau * v).collect();
    let inc_r: Vec<f64> = si_right.iter().map(|v| p.tau * v).collect();
    let surv = KernelTable::tabulate(steps + 1, h, survival_kernel(&p.dist));
    let cdf = KernelTable::tabulate(steps + 1, h, cdf_kernel(&p.dist));
    let infected = convolve(&surv, h, &inc_l, &inc_r);
    let recovered = convolve(&cdf, h, &inc_l, &inc_r);

    let mut tr = Trajectory::with_capacity(h, steps + 1);
    for m in 0..=steps {
        let surviving = cohort.surviving_right[m];
        tr.push(
            m as f64 * h,
            s[m],
            infected[m] + cohort.i0 * surviving,
            recovered[m] + cohort.i0 * (1.0 - surviving),
            si_right[m],
            ss[m],
        );
    }
    Ok(ModelSolution {
        trajectory: tr,
        phi,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    /// `y' = -y` in differential form with no memory.
    struct Decay;

    impl IdeSystem<1> for Decay {
        fn form(&self) -> MemoryForm {
            MemoryForm::Differential
        }
        fn drift(&self, _t: f64, _x: &[f64; 1], _y: f64) -> [f64; 1] {
            [0.0]
        }
        fn local(&self, _t: f64, _x: &[f64; 1], y: f64) -> f64 {
            -y
        }
        fn source(&self, _x: &[f64; 1], _y: f64) -> f64 {
            0.0
        }
        fn kernel(&self, _age: f64) -> KernelLimits {
            (0.0, 0.0)
        }
    }

    /// `y' = -∫ γ e^{-γ(t-a)} y(a) da`, i.e. `y'' + γy' + γy = 0`.
    struct ExpMemory {
        gamma: f64,
    }

    impl IdeSystem<1> for ExpMemory {
        fn form(&self) -> MemoryForm {
            MemoryForm::Differential
        }
        fn drift(&self, _t: f64, _x: &[f64; 1], _y: f64) -> [f64; 1] {
            [0.0]
        }
        fn source(&self, _x: &[f64; 1], y: f64) -> f64 {
            y
        }
        fn kernel(&self, age: f64) -> KernelLimits {
            let v = self.gamma * (-self.gamma * age).exp();
            (v, v)
        }
    }

    fn exp_memory_exact(gamma: f64, t: f64) -> f64 {
        let w = (gamma - gamma * gamma / 4.0).sqrt();
        (-gamma * t / 2.0).exp() * ((w * t).cos() + gamma / (2.0 * w) * (w * t).sin())
    }

    fn sup_error(h: f64, run: impl Fn(&SolverConfig) -> Vec<f64>, exact: impl Fn(f64) -> f64) -> f64 {
        let cfg = SolverConfig::new(h, 4.0);
        run(&cfg)
            .iter()
            .enumerate()
            .map(|(m, y)| (y - exact(m as f64 * h)).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn ode_reduction_is_second_order() {
        let run = |cfg: &SolverConfig| integrate(&Decay, [0.0], 1.0, cfg).unwrap().y_right;
        let e1 = sup_error(0.02, run, |t| (-t).exp());
        let e2 = sup_error(0.01, run, |t| (-t).exp());
        let order = (e1 / e2).log2();
        assert!((order - 2.0).abs() < 0.2, "order {order}");
    }

    #[test]
    fn linear_memory_matches_closed_form() {
        let sys = ExpMemory { gamma: 1.0 };
        let run = |cfg: &SolverConfig| integrate(&sys, [0.0], 1.0, cfg).unwrap().y_right;
        let exact = |t| exp_memory_exact(1.0, t);
        let e1 = sup_error(0.02, run, exact);
        let e2 = sup_error(0.01, run, exact);
        assert!(e2 < 1e-4, "error {e2}");
        let order = (e1 / e2).log2();
        assert!((order - 2.0).abs() < 0.3, "order {order}");
    }

    fn fig_params(dist: &str, i0: f64) -> ModelParams {
        ModelParams::new(0.35, dist.parse().unwrap(), 15.0, 1000.0, i0).unwrap()
    }

    #[test]
    fn disease_free_state_is_stationary() {
        let cfg = SolverConfig::new(0.05, 10.0);
        for dist in ["exp:rate=0.6667", "fixed:sigma=1.5", "uniform:a=1,b=2"] {
            let p = fig_params(dist, 0.0);
            for sol in [solve_meanfield(&p, &cfg).unwrap(), solve_pairwise(&p, &cfg).unwrap()] {
                let tr = sol.trajectory;
                assert!(tr.s.iter().all(|&s| s == 1000.0));
                assert!(tr.i.iter().all(|&i| i == 0.0));
            }
        }
    }

    #[test]
    fn meanfield_exponential_matches_classical_ode() {
        let p = fig_params("exp:rate=0.6666666666666666", 5.0);
        let cfg = SolverConfig::new(1e-3, 20.0);
        let sol = solve_meanfield(&p, &cfg).unwrap().trajectory;
        // Independent RK4 on S' = -βSI, I' = βSI - γI with a much finer step.
        let (beta, gamma) = (0.35 * 15.0 / 1000.0, 2.0 / 3.0);
        let rhs = |s: f64, i: f64| (-beta * s * i, beta * s * i - gamma * i);
        let (mut s, mut i) = (995.0, 5.0);
        let sub = 4;
        let dt = 1e-3 / sub as f64;
        let mut worst = 0.0f64;
        for m in 0..sol.len() {
            worst = worst.max((sol.s[m] - s).abs()).max((sol.i[m] - i).abs());
            for _ in 0..sub {
                let k1 = rhs(s, i);
                let k2 = rhs(s + 0.5 * dt * k1.0, i + 0.5 * dt * k1.1);
                let k3 = rhs(s + 0.5 * dt * k2.0, i + 0.5 * dt * k2.1);
                let k4 = rhs(s + dt * k3.0, i + dt * k3.1);
                s += dt / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0);
                i += dt / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1);
            }
        }
        assert!(worst < 1e-4 * 1000.0, "sup error {worst}");
    }

    #[test]
    fn pairwise_conserves_nodes() {
        let cfg = SolverConfig::new(0.01, 25.0);
        for dist in ["exp:rate=0.6667", "fixed:sigma=1.5", "gamma:shape=3,rate=2", "uniform:a=1,b=2"] {
            let sol = solve_pairwise(&fig_params(dist, 5.0), &cfg).unwrap().trajectory;
            for m in 0..sol.len() {
                let total = sol.s[m] + sol.i[m] + sol.r[m];
                assert!((total - 1000.0).abs() < 1.0, "{dist}: total {total} at {}", sol.t[m]);
            }
            assert!(sol.s.windows(2).all(|w| w[1] <= w[0]));
            assert!(sol.min_value() > -1e-9);
        }
    }

    #[test]
    fn integrated_ss_keeps_first_integral() {
        let p = fig_params("gamma:shape=3,rate=2", 5.0);
        let drift = |h: f64| {
            let sol = solve_pairwise_with(&p, &SolverConfig::new(h, 25.0), SsMode::Integrated)
                .unwrap()
                .trajectory;
            let u0 = p.first_integral(sol.s[0], sol.ss[0]);
            sol.s
                .iter()
                .zip(&sol.ss)
                .map(|(&s, &ss)| (p.first_integral(s, ss) / u0 - 1.0).abs())
                .fold(0.0, f64::max)
        };
        let (coarse, fine) = (drift(1e-2), drift(5e-3));
        assert!(fine < 1e-3, "drift {fine}");
        assert!(coarse / fine > 3.5, "drift ratio {}", coarse / fine);
    }

    #[test]
    fn off_grid_breakpoints_are_snapped_with_warning() {
        let p = fig_params("fixed:sigma=1.503", 5.0);
        let sol = solve_pairwise(&p, &SolverConfig::new(0.01, 5.0)).unwrap();
        assert_eq!(sol.warnings.len(), 1);
    }

    #[test]
    fn oversized_step_is_rejected() {
        let p = ModelParams::new(50.0, "exp:rate=1".parse().unwrap(), 15.0, 1000.0, 5.0).unwrap();
        let err = solve_pairwise(&p, &SolverConfig::new(0.5, 5.0)).unwrap_err();
        assert!(
            matches!(err, SolverError::StepTooLarge { .. } | SolverError::InvalidState { .. } | SolverError::NonFinite(_)),
            "{err}"
        );
    }

    #[test]
    fn age_profile_needs_positive_survival() {
        let mut cfg = SolverConfig::new(0.01, 1.0);
        cfg.initial = InitialAges::Profile {
            ages: vec![0.0, 1.0],
            density: vec![5.0, 5.0],
        };
        let p = fig_params("uniform:a=1,b=2", 5.0);
        assert!(matches!(solve_pairwise(&p, &cfg), Err(SolverError::Unsupported(..))));
    }

    #[test]
    fn narrow_age_profile_approaches_newborn() {
        let p = fig_params("exp:rate=0.6667", 5.0);
        let newborn = solve_pairwise(&p, &SolverConfig::new(0.01, 10.0)).unwrap().trajectory;
        let mut cfg = SolverConfig::new(0.01, 10.0);
        let width = 1e-4;
        cfg.initial = InitialAges::Profile {
            ages: vec![0.0, width, 2.0 * width],
            density: vec![0.0, 5.0 / width, 0.0],
        };
        let aged = solve_pairwise(&p, &cfg).unwrap().trajectory;
        assert_relative_eq!(aged.i[0], 5.0, max_relative = 1e-12);
        let (pk_a, _) = aged.peak_prevalence();
        let (pk_n, _) = newborn.peak_prevalence();
        assert_relative_eq!(pk_a, pk_n, max_relative = 1e-3);
    }
}
