//! Reference models for recovery laws that reduce the pairwise system to
//! ordinary or delay differential equations.
//!
//! * exponential recovery: the classical four-equation pairwise ODE;
//! * fixed duration `σ`: delay equations solved by the method of steps;
//! * Erlang recovery: a linear chain of `K` stages for nodes and links;
//! * uniform on `[A, B]`: distributed delays over the window `[t - B, t - A]`.
//!
//! All use fixed-step RK4 on the same grid as the generic solver. Delayed
//! values between grid nodes come from cubic Hermite interpolation of the
//! stored history, which keeps the scheme fourth order when delays are grid
//! multiples. Regime switches (delay activation, window clipping, newborn
//! jumps) are decided by step index, never by comparing floating times.
//!
//! `[SS]` is integrated from its own equation in every model, so the first
//! integral is an independent check here rather than a construction.

use crate::dist::Kind;
use crate::trajectory::Trajectory;
use crate::volterra::{ModelParams, ModelSolution, SolverConfig, SolverError};

/// Node history of an RK4 run: one-sided values and derivatives per node.
#[derive(Debug, Clone)]
pub struct DelayBuffer {
    dim: usize,
    h: f64,
    left: Vec<f64>,
    right: Vec<f64>,
    dleft: Vec<f64>,
    dright: Vec<f64>,
}

impl DelayBuffer {
    fn new(dim: usize, h: f64, capacity: usize) -> Self {
        let cap = dim * (capacity + 1);
        Self {
            dim,
            h,
            left: Vec::with_capacity(cap),
            right: Vec::with_capacity(cap),
            dleft: Vec::with_capacity(cap),
            dright: Vec::with_capacity(cap),
        }
    }

    pub fn nodes(&self) -> usize {
        self.right.len() / self.dim
    }

    /// Right-continuous value of component `c` at node `j`.
    pub fn node(&self, j: usize, c: usize) -> f64 {
        self.right[j * self.dim + c]
    }

    /// Value of component `c` at `(j + theta) h`, interpolated on panel `j`
    /// from the right limit at node `j` and the left limit at node `j + 1`.
    pub fn at(&self, j: usize, theta: f64, c: usize) -> f64 {
        if theta == 0.0 {
            return self.right[j * self.dim + c];
        }
        let (a, b) = (j * self.dim + c, (j + 1) * self.dim + c);
        let (y0, m0, y1, m1) = (self.right[a], self.dright[a], self.left[b], self.dleft[b]);
        let t2 = theta * theta;
        let t3 = t2 * theta;
        (2.0 * t3 - 3.0 * t2 + 1.0) * y0
            + (t3 - 2.0 * t2 + theta) * self.h * m0
            + (-2.0 * t3 + 3.0 * t2) * y1
            + (t3 - t2) * self.h * m1
    }

    /// Value at `(k + theta) h - lag * h`, with `k >= lag`.
    fn lagged(&self, k: usize, lag: usize, theta: f64, c: usize) -> f64 {
        self.at(k - lag, theta, c)
    }
}

/// Integrates `y' = rhs(step, theta, y, history)` with classical RK4.
///
/// `rhs` receives the index of the step being taken, so any regime switch
/// at a node applies to the whole following step. `jump` may modify the
/// state at a node after it is reached; the pre-jump value is kept as the
/// node's left limit.
fn rk4_with_history<R, J>(y0: Vec<f64>, h: f64, steps: usize, rhs: R, jump: J) -> Result<DelayBuffer, SolverError>
where
    R: Fn(usize, f64, &[f64], &DelayBuffer, &mut [f64]),
    J: Fn(usize, &mut [f64]),
{
    let d = y0.len();
    let mut buf = DelayBuffer::new(d, h, steps);
    let mut y = y0;
    let (mut k1, mut k2, mut k3, mut k4) = (vec![0.0; d], vec![0.0; d], vec![0.0; d], vec![0.0; d]);
    let mut tmp = vec![0.0; d];
    buf.left.extend_from_slice(&y);
    buf.dleft.extend(std::iter::repeat_n(0.0, d));
    for k in 0..steps {
        rhs(k, 0.0, &y, &buf, &mut k1);
        buf.right.extend_from_slice(&y);
        buf.dright.extend_from_slice(&k1);
        for c in 0..d {
            tmp[c] = y[c] + 0.5 * h * k1[c];
        }
        rhs(k, 0.5, &tmp, &buf, &mut k2);
        for c in 0..d {
            tmp[c] = y[c] + 0.5 * h * k2[c];
        }
        rhs(k, 0.5, &tmp, &buf, &mut k3);
        for c in 0..d {
            tmp[c] = y[c] + h * k3[c];
        }
        rhs(k, 1.0, &tmp, &buf, &mut k4);
        for c in 0..d {
            y[c] += h / 6.0 * (k1[c] + 2.0 * k2[c] + 2.0 * k3[c] + k4[c]);
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(SolverError::NonFinite((k + 1) as f64 * h));
        }
        rhs(k, 1.0, &y, &buf, &mut tmp);
        buf.left.extend_from_slice(&y);
        buf.dleft.extend_from_slice(&tmp);
        jump(k + 1, &mut y);
    }
    // Derivative at the final node uses the last step's regime.
    buf.right.extend_from_slice(&y);
    let last = buf.dleft[steps * d..].to_vec();
    buf.dright.extend_from_slice(&last);
    Ok(buf)
}

// Component layout shared by the pairwise reference models.
const S: usize = 0;
const SS: usize = 1;
const I: usize = 2;
const SI: usize = 3;
const R: usize = 4;
const PHI: usize = 5;
const BASE_DIM: usize = 6;

struct Pair {
    tau: f64,
    closure: f64,
    si0: f64,
    ss0: f64,
}

impl Pair {
    fn new(p: &ModelParams) -> Self {
        let n = p.degree;
        Self {
            tau: p.tau,
            closure: (n - 1.0) / n,
            si0: (n / p.nodes) * p.s0 * p.i0,
            ss0: (n / p.nodes) * p.s0 * p.s0,
        }
    }

    fn initial(&self, p: &ModelParams, dim: usize) -> Vec<f64> {
        let mut y = vec![0.0; dim];
        y[S] = p.s0;
        y[SS] = self.ss0;
        y[I] = p.i0;
        y[SI] = self.si0;
        y
    }

    /// `τ(n-1)/n [SS][SI]/[S]`.
    fn beta(&self, s: f64, ss: f64, si: f64) -> f64 {
        self.tau * self.closure * ss * si / s
    }

    /// `τ(n-1)/n [SI]/[S] + τ`.
    fn loss(&self, s: f64, si: f64) -> f64 {
        self.tau * self.closure * si / s + self.tau
    }

    /// Derivatives common to every model; recovery terms are added by the
    /// caller.
    fn transmission(&self, y: &[f64], out: &mut [f64]) {
        let (s, ss, si) = (y[S], y[SS], y[SI]);
        let inc = self.tau * si;
        out[S] = -inc;
        out[SS] = -2.0 * self.tau * self.closure * ss * si / s;
        out[I] = inc;
        out[SI] = self.beta(s, ss, si) - self.loss(s, si) * si;
        out[R] = 0.0;
        out[PHI] = self.loss(s, si);
    }
}

fn to_solution(buf: &DelayBuffer, h: f64, warnings: Vec<String>) -> ModelSolution {
    let nodes = buf.nodes();
    let mut tr = Trajectory::with_capacity(h, nodes);
    let mut phi = Vec::with_capacity(nodes);
    for j in 0..nodes {
        tr.push(
            j as f64 * h,
            buf.node(j, S),
            buf.node(j, I),
            buf.node(j, R),
            buf.node(j, SI),
            buf.node(j, SS),
        );
        phi.push(buf.node(j, PHI));
    }
    ModelSolution {
        trajectory: tr,
        phi,
        warnings,
    }
}

fn unsupported(p: &ModelParams, what: &str) -> SolverError {
    SolverError::Unsupported(p.dist.to_string(), format!("this model needs {what} recovery"))
}

/// Grid multiple of a delay; delays must cover at least one step.
fn lag_steps(value: f64, h: f64) -> Result<usize, SolverError> {
    let k = (value / h).round();
    if k < 1.0 {
        return Err(SolverError::InvalidConfig(format!(
            "delay {value} is shorter than the step {h}"
        )));
    }
    Ok(k as usize)
}

fn setup(p: &ModelParams, h: f64, t_end: f64) -> Result<(ModelParams, usize, Vec<String>), SolverError> {
    p.validate()?;
    let steps = SolverConfig::new(h, t_end).steps()?;
    let (dist, note) = p.dist.snapped_to_grid(h);
    let mut q = p.clone();
    q.dist = dist;
    Ok((q, steps, note.into_iter().collect()))
}

/// Classical pairwise ODE for exponential recovery with rate `γ`.
pub fn solve_markovian_pairwise(p: &ModelParams, h: f64, t_end: f64) -> Result<ModelSolution, SolverError> {
    let (p, steps, warnings) = setup(p, h, t_end)?;
    let Kind::Exponential { rate: gamma } = p.dist.kind() else {
        return Err(unsupported(&p, "exponential"));
    };
    let pair = Pair::new(&p);
    let rhs = |_k: usize, _th: f64, y: &[f64], _b: &DelayBuffer, out: &mut [f64]| {
        pair.transmission(y, out);
        out[I] -= gamma * y[I];
        out[SI] -= gamma * y[SI];
        out[R] = gamma * y[I];
    };
    let buf = rk4_with_history(pair.initial(&p, BASE_DIM), h, steps, rhs, |_, _| {})?;
    Ok(to_solution(&buf, h, warnings))
}

/// Delay system for a fixed infectious period `σ`.
///
/// Before `σ` nobody recovers. From `σ` on, incidence from `t - σ` leaves
/// `[I]`, and the links created at `t - σ` that are still `S-I` leave
/// `[SI]`, discounted by `e^{-(Φ(t) - Φ(t - σ))}`. At `t = σ` the initial
/// cohort recovers at once.
pub fn solve_fixed_delay_pairwise(p: &ModelParams, h: f64, t_end: f64) -> Result<ModelSolution, SolverError> {
    let (p, steps, warnings) = setup(p, h, t_end)?;
    let Kind::Fixed { duration } = p.dist.kind() else {
        return Err(unsupported(&p, "fixed-duration"));
    };
    let lag = lag_steps(duration, h)?;
    let pair = Pair::new(&p);
    let rhs = |k: usize, th: f64, y: &[f64], b: &DelayBuffer, out: &mut [f64]| {
        pair.transmission(y, out);
        if k >= lag {
            let at = |c| b.lagged(k, lag, th, c);
            let (s, ss, si, phi) = (at(S), at(SS), at(SI), at(PHI));
            let outflow = pair.tau * si;
            out[I] -= outflow;
            out[R] = outflow;
            out[SI] -= pair.beta(s, ss, si) * (phi - y[PHI]).exp();
        }
    };
    let (i0, si0) = (p.i0, pair.si0);
    let jump = |node: usize, y: &mut [f64]| {
        if node == lag {
            y[I] -= i0;
            y[R] += i0;
            y[SI] -= si0 * (-y[PHI]).exp();
        }
    };
    let buf = rk4_with_history(pair.initial(&p, BASE_DIM), h, steps, rhs, jump)?;
    Ok(to_solution(&buf, h, warnings))
}

/// Erlang chain solution with the per-stage series.
#[derive(Debug, Clone)]
pub struct GammaChainSolution {
    pub solution: ModelSolution,
    /// `[I_j](t)` for `j = 1..=K`.
    pub stage_i: Vec<Vec<f64>>,
    /// `[SI_j](t)` for `j = 1..=K`.
    pub stage_si: Vec<Vec<f64>>,
}

/// Linear chain for Erlang(`K`, rate `r`) recovery.
///
/// Nodes and links pass through `K` stages at rate `r`; new `S-I` links
/// enter stage 1 and every stage loses links at the aggregate rate
/// `τ(n-1)/n [SI]/[S] + τ`.
pub fn solve_gamma_chain(p: &ModelParams, h: f64, t_end: f64) -> Result<GammaChainSolution, SolverError> {
    let (p, steps, warnings) = setup(p, h, t_end)?;
    let Kind::Erlang { shape, rate } = p.dist.kind() else {
        return Err(unsupported(&p, "Erlang"));
    };
    let stages = shape as usize;
    let pair = Pair::new(&p);
    let i_at = |j: usize| BASE_DIM + j;
    let si_at = |j: usize| BASE_DIM + stages + j;
    let dim = BASE_DIM + 2 * stages;

    let mut y0 = pair.initial(&p, dim);
    y0[i_at(0)] = p.i0;
    y0[si_at(0)] = pair.si0;
    let rhs = |_k: usize, _th: f64, y: &[f64], _b: &DelayBuffer, out: &mut [f64]| {
        let si: f64 = (0..stages).map(|j| y[si_at(j)]).sum();
        let mut agg = y.to_vec();
        agg[SI] = si;
        pair.transmission(&agg, out);
        let loss = pair.loss(y[S], si);
        for j in 0..stages {
            let (inflow_i, inflow_si) = if j == 0 {
                (pair.tau * si, pair.beta(y[S], y[SS], si))
            } else {
                (rate * y[i_at(j - 1)], rate * y[si_at(j - 1)])
            };
            out[i_at(j)] = inflow_i - rate * y[i_at(j)];
            out[si_at(j)] = inflow_si - (loss + rate) * y[si_at(j)];
        }
        // Aggregates are carried for output only.
        out[I] = pair.tau * si - rate * y[i_at(stages - 1)];
        out[SI] = (0..stages).map(|j| out[si_at(j)]).sum();
        out[R] = rate * y[i_at(stages - 1)];
    };
    let buf = rk4_with_history(y0, h, steps, rhs, |_, _| {})?;
    let mut solution = to_solution(&buf, h, warnings);
    let nodes = buf.nodes();
    let series = |c: usize| (0..nodes).map(|m| buf.node(m, c)).collect::<Vec<f64>>();
    let stage_i: Vec<Vec<f64>> = (0..stages).map(|j| series(i_at(j))).collect();
    let stage_si: Vec<Vec<f64>> = (0..stages).map(|j| series(si_at(j))).collect();
    // Report aggregates as exact stage sums.
    for m in 0..nodes {
        solution.trajectory.i[m] = stage_i.iter().map(|v| v[m]).sum();
        solution.trajectory.si[m] = stage_si.iter().map(|v| v[m]).sum();
    }
    Ok(GammaChainSolution {
        solution,
        stage_i,
        stage_si,
    })
}

/// Distributed-delay system for recovery uniform on `[A, B]`.
///
/// Recoveries at `t` come from incidence over the window
/// `[max(0, t - B), max(0, t - A)]` with weight `1/(B - A)`; since
/// `∫ τ[SI] = [S]₀ - [S]`, the node term is a difference of `[S]` values.
/// The link term uses `C(t) = ∫₀ᵗ β e^{Φ}`, so the window integral of
/// `β e^{-(Φ(t) - Φ(u))}` is `e^{-Φ(t)} (C(t - A) - C(t - B))`. The initial
/// cohort recovers at rate `1/(B - A)` while `A ≤ t ≤ B`.
pub fn solve_uniform_delay_pairwise(p: &ModelParams, h: f64, t_end: f64) -> Result<ModelSolution, SolverError> {
    let (p, steps, warnings) = setup(p, h, t_end)?;
    let Kind::Uniform { lower, upper } = p.dist.kind() else {
        return Err(unsupported(&p, "uniform"));
    };
    let (ka, kb) = (lag_steps(lower, h)?, lag_steps(upper, h)?);
    if kb <= ka {
        return Err(SolverError::InvalidConfig(format!(
            "uniform window [{lower}, {upper}] collapses on a grid of step {h}"
        )));
    }
    let width = upper - lower;
    let pair = Pair::new(&p);
    const C: usize = BASE_DIM;
    let (s0, i0, si0) = (p.s0, p.i0, pair.si0);
    let rhs = |k: usize, th: f64, y: &[f64], b: &DelayBuffer, out: &mut [f64]| {
        pair.transmission(y, out);
        let beta = pair.beta(y[S], y[SS], y[SI]);
        out[C] = beta * y[PHI].exp();
        if k < ka {
            return;
        }
        let near = |c| b.lagged(k, ka, th, c);
        let (s_near, c_near) = (near(S), near(C));
        let (s_far, c_far, newborn) = if k < kb {
            (s0, 0.0, 1.0)
        } else {
            (b.lagged(k, kb, th, S), b.lagged(k, kb, th, C), 0.0)
        };
        let node_out = (s_far - s_near) / width + newborn * i0 / width;
        out[I] -= node_out;
        out[R] = node_out;
        out[SI] -= (-y[PHI]).exp() * ((c_near - c_far) / width + newborn * si0 / width);
    };
    let buf = rk4_with_history(pair.initial(&p, BASE_DIM + 1), h, steps, rhs, |_, _| {})?;
    Ok(to_solution(&buf, h, warnings))
}

/// Reference pairwise solution for whichever recovery law is given.
pub fn solve_reference_pairwise(p: &ModelParams, h: f64, t_end: f64) -> Result<ModelSolution, SolverError> {
    match p.dist.kind() {
        Kind::Exponential { .. } => solve_markovian_pairwise(p, h, t_end),
        Kind::Fixed { .. } => solve_fixed_delay_pairwise(p, h, t_end),
        Kind::Erlang { .. } => solve_gamma_chain(p, h, t_end).map(|g| g.solution),
        Kind::Uniform { .. } => solve_uniform_delay_pairwise(p, h, t_end),
    }
}

// Mean-field layout.
const MF_S: usize = 0;
const MF_I: usize = 1;
const MF_R: usize = 2;

fn meanfield_solution(buf: &DelayBuffer, p: &ModelParams, h: f64, warnings: Vec<String>) -> ModelSolution {
    let pair = p.degree / p.nodes;
    let nodes = buf.nodes();
    let mut tr = Trajectory::with_capacity(h, nodes);
    for j in 0..nodes {
        let (s, i) = (buf.node(j, MF_S), buf.node(j, MF_I));
        tr.push(j as f64 * h, s, i, buf.node(j, MF_R), pair * s * i, pair * s * s);
    }
    ModelSolution {
        trajectory: tr,
        phi: vec![0.0; nodes],
        warnings,
    }
}

/// Classical mean-field SIR ODE with exponential recovery.
pub fn solve_markovian_meanfield(p: &ModelParams, h: f64, t_end: f64) -> Result<ModelSolution, SolverError> {
    let (p, steps, warnings) = setup(p, h, t_end)?;
    let Kind::Exponential { rate: gamma } = p.dist.kind() else {
        return Err(unsupported(&p, "exponential"));
    };
    let beta = p.tau * p.degree / p.nodes;
    let rhs = |_k: usize, _th: f64, y: &[f64], _b: &DelayBuffer, out: &mut [f64]| {
        let inc = beta * y[MF_S] * y[MF_I];
        out[MF_S] = -inc;
        out[MF_I] = inc - gamma * y[MF_I];
        out[MF_R] = gamma * y[MF_I];
    };
    let buf = rk4_with_history(vec![p.s0, p.i0, 0.0], h, steps, rhs, |_, _| {})?;
    Ok(meanfield_solution(&buf, &p, h, warnings))
}

/// Mean-field delay equation for a fixed infectious period `σ`, including
/// the recovery of the initial cohort at `t = σ`.
pub fn solve_fixed_delay_meanfield(p: &ModelParams, h: f64, t_end: f64) -> Result<ModelSolution, SolverError> {
    let (p, steps, warnings) = setup(p, h, t_end)?;
    let Kind::Fixed { duration } = p.dist.kind() else {
        return Err(unsupported(&p, "fixed-duration"));
    };
    let lag = lag_steps(duration, h)?;
    let beta = p.tau * p.degree / p.nodes;
    let rhs = |k: usize, th: f64, y: &[f64], b: &DelayBuffer, out: &mut [f64]| {
        let inc = beta * y[MF_S] * y[MF_I];
        out[MF_S] = -inc;
        out[MF_I] = inc;
        out[MF_R] = 0.0;
        if k >= lag {
            let past = beta * b.lagged(k, lag, th, MF_S) * b.lagged(k, lag, th, MF_I);
            out[MF_I] -= past;
            out[MF_R] = past;
        }
    };
    let i0 = p.i0;
    let jump = |node: usize, y: &mut [f64]| {
        if node == lag {
            y[MF_I] -= i0;
            y[MF_R] += i0;
        }
    };
    let buf = rk4_with_history(vec![p.s0, p.i0, 0.0], h, steps, rhs, jump)?;
    Ok(meanfield_solution(&buf, &p, h, warnings))
}
