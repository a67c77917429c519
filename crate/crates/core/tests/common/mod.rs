//! Independent oracles shared by the integration tests.

#![allow(dead_code)]

use netsir::{Graph, NodeState};
use rand::Rng;

/// Adaptive Simpson quadrature of `f` on `[a, b]` to absolute tolerance `tol`.
pub fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson(fa: f64, fm: f64, fb: f64, a: f64, b: f64) -> f64 {
        (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    }
    #[allow(clippy::too_many_arguments)]
    fn recurse(
        f: &dyn Fn(f64) -> f64,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = simpson(fa, flm, fm, a, m);
        let right = simpson(fm, frm, fb, m, b);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        recurse(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
            + recurse(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
    }
    // Pre-split so that narrow features are not missed by the first probes.
    const PANELS: usize = 64;
    let w = (b - a) / PANELS as f64;
    (0..PANELS)
        .map(|k| {
            let (lo, hi) = (a + k as f64 * w, a + (k + 1) as f64 * w);
            let (fa, fb) = (f(lo), f(hi));
            let fm = f(0.5 * (lo + hi));
            recurse(f, lo, hi, fa, fm, fb, simpson(fa, fm, fb, lo, hi), tol / PANELS as f64, 50)
        })
        .sum()
}

/// Composite Simpson rule on uniformly spaced samples; an odd panel count
/// ends with the 3/8 rule.
pub fn simpson_samples(y: &[f64], h: f64) -> f64 {
    let panels = y.len().saturating_sub(1);
    match panels {
        0 => 0.0,
        1 => 0.5 * h * (y[0] + y[1]),
        _ => {
            let (even, tail) = if panels.is_multiple_of(2) { (panels, 0) } else { (panels - 3, 3) };
            let mut acc = 0.0;
            for k in (0..even).step_by(2) {
                acc += h / 3.0 * (y[k] + 4.0 * y[k + 1] + y[k + 2]);
            }
            if tail == 3 {
                let k = even;
                acc += 3.0 * h / 8.0 * (y[k] + 3.0 * y[k + 1] + 3.0 * y[k + 2] + y[k + 3]);
            }
            acc
        }
    }
}

/// Markovian SIR on a graph by the direct Gillespie method: every S node
/// with `k` infected neighbours is infected at rate `τk`, every I node
/// recovers at rate `γ`. Returns the number of nodes ever infected.
pub fn gillespie_final_size<R: Rng>(g: &Graph, tau: f64, gamma: f64, initial: &[usize], rng: &mut R) -> usize {
    let n = g.num_nodes();
    let mut state = vec![NodeState::Susceptible; n];
    let mut pressure = vec![0u32; n];
    let mut infected: Vec<usize> = Vec::new();
    let mut total_pressure = 0u64;
    let mut ever = 0;
    let infect = |u: usize,
                      state: &mut Vec<NodeState>,
                      pressure: &mut Vec<u32>,
                      infected: &mut Vec<usize>,
                      total: &mut u64| {
        state[u] = NodeState::Infected;
        *total -= pressure[u] as u64;
        infected.push(u);
        for &v in g.neighbors(u) {
            let v = v as usize;
            if state[v] == NodeState::Susceptible {
                pressure[v] += 1;
                *total += 1;
            }
        }
    };
    for &u in initial {
        infect(u, &mut state, &mut pressure, &mut infected, &mut total_pressure);
        ever += 1;
    }
    while !infected.is_empty() {
        let rate_inf = tau * total_pressure as f64;
        let rate_rec = gamma * infected.len() as f64;
        if rng.random::<f64>() * (rate_inf + rate_rec) < rate_rec {
            let k = rng.random_range(0..infected.len());
            let u = infected.swap_remove(k);
            state[u] = NodeState::Recovered;
            for &v in g.neighbors(u) {
                let v = v as usize;
                if state[v] == NodeState::Susceptible {
                    pressure[v] -= 1;
                    total_pressure -= 1;
                }
            }
        } else {
            // Pick a susceptible node with probability proportional to its
            // infected-neighbour count.
            let mut target = rng.random_range(0..total_pressure);
            let mut chosen = usize::MAX;
            for v in 0..n {
                if state[v] == NodeState::Susceptible {
                    let p = pressure[v] as u64;
                    if target < p {
                        chosen = v;
                        break;
                    }
                    target -= p;
                }
            }
            infect(chosen, &mut state, &mut pressure, &mut infected, &mut total_pressure);
            ever += 1;
        }
    }
    ever
}

/// Two-sample Kolmogorov-Smirnov statistic.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / a.len() as f64 - j as f64 / b.len() as f64).abs());
    }
    d
}

/// One-sample KS statistic against a continuous CDF.
pub fn ks_one_sample(sample: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut x = sample.to_vec();
    x.sort_by(f64::total_cmp);
    let n = x.len() as f64;
    x.iter()
        .enumerate()
        .map(|(k, &v)| {
            let c = cdf(v);
            (c - k as f64 / n).abs().max(((k + 1) as f64 / n - c).abs())
        })
        .fold(0.0, f64::max)
}

/// Asymptotic Kolmogorov critical value at the 1% level.
pub const KS_C_1PCT: f64 = 1.628;
