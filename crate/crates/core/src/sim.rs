//! Event-driven stochastic SIR simulation on a fixed network.
//!
//! Transmission along each S–I link is Markovian with rate `τ`; the
//! infectious period follows an arbitrary [`RecoveryDistribution`]. When a
//! node is infected its recovery time is drawn once, and one exponential
//! transmission clock is drawn for every susceptible neighbour. Candidate
//! infections are validated when popped: they fire only if the target is
//! still susceptible and the source is still infectious. Stale events are
//! dropped lazily.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use thiserror::Error;

use crate::dist::RecoveryDistribution;
use crate::graph::{Graph, GraphError, NodeState};
use crate::par::{self, Execution};
use crate::trajectory::Trajectory;

pub const DEFAULT_DT_OUT: f64 = 0.1;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid epidemic parameters: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// Transmission rate, recovery law, initial infecteds and horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct EpidemicParams {
    pub tau: f64,
    pub dist: RecoveryDistribution,
    pub initial_infected: usize,
    pub t_end: f64,
}

impl EpidemicParams {
    pub fn new(
        tau: f64,
        dist: RecoveryDistribution,
        initial_infected: usize,
        t_end: f64,
    ) -> Result<Self, SimError> {
        let p = Self {
            tau,
            dist,
            initial_infected,
            t_end,
        };
        if !(tau.is_finite() && tau >= 0.0) {
            return Err(SimError::InvalidParams(format!("tau must be >= 0, got {tau}")));
        }
        if !(t_end.is_finite() && t_end > 0.0) {
            return Err(SimError::InvalidParams(format!("t_end must be > 0, got {t_end}")));
        }
        Ok(p)
    }

    pub fn check_population(&self, nodes: usize) -> Result<(), SimError> {
        if self.initial_infected > nodes {
            return Err(SimError::InvalidParams(format!(
                "{} initial infecteds exceed {nodes} nodes",
                self.initial_infected
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    Infection { source: u32, target: u32 },
    Recovery { node: u32 },
}

#[derive(Debug, Clone, Copy)]
pub struct Event {
    pub time: f64,
    seq: u64,
    pub kind: EventKind,
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Event {}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

// Reversed so that `BinaryHeap` pops the earliest event first.
impl Ord for Event {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .time
            .total_cmp(&self.time)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

/// Result of one realisation.
#[derive(Debug, Clone)]
pub struct SimOutcome {
    pub trajectory: Trajectory,
    /// Nodes ever infected, including the initial ones, up to `t_end`.
    pub total_infected: usize,
    pub last_infection: f64,
    pub last_recovery: f64,
    pub events_fired: usize,
}

struct Counts {
    s: i64,
    i: i64,
    r: i64,
    si: i64,
    ss: i64,
}

struct Engine<'g> {
    graph: &'g Graph,
    state: Vec<NodeState>,
    recover_at: Vec<f64>,
    queue: BinaryHeap<Event>,
    seq: u64,
    counts: Counts,
}

impl<'g> Engine<'g> {
    fn new(graph: &'g Graph) -> Self {
        let n = graph.num_nodes();
        Self {
            graph,
            state: vec![NodeState::Susceptible; n],
            recover_at: vec![f64::INFINITY; n],
            queue: BinaryHeap::new(),
            seq: 0,
            counts: Counts {
                s: n as i64,
                i: 0,
                r: 0,
                si: 0,
                ss: graph.directed_edge_count() as i64,
            },
        }
    }

    fn push(&mut self, time: f64, kind: EventKind) {
        self.seq += 1;
        self.queue.push(Event {
            time,
            seq: self.seq,
            kind,
        });
    }

    fn infect<R: Rng>(&mut self, u: usize, t: f64, p: &EpidemicParams, clock: &Option<Exp<f64>>, rng: &mut R) {
        self.state[u] = NodeState::Infected;
        self.counts.s -= 1;
        self.counts.i += 1;
        let graph = self.graph;
        for &v in graph.neighbors(u) {
            match self.state[v as usize] {
                NodeState::Susceptible => {
                    self.counts.ss -= 2;
                    self.counts.si += 1;
                }
                NodeState::Infected => self.counts.si -= 1,
                NodeState::Recovered => {}
            }
        }
        let rec = t + p.dist.sample(rng);
        self.recover_at[u] = rec;
        self.push(rec, EventKind::Recovery { node: u as u32 });
        if let Some(clock) = clock {
            for &v in graph.neighbors(u) {
                if self.state[v as usize] == NodeState::Susceptible {
                    let when = t + clock.sample(rng);
                    if when < rec {
                        self.push(
                            when,
                            EventKind::Infection {
                                source: u as u32,
                                target: v,
                            },
                        );
                    }
                }
            }
        }
    }

    fn recover(&mut self, u: usize) {
        self.state[u] = NodeState::Recovered;
        self.counts.i -= 1;
        self.counts.r += 1;
        for &v in self.graph.neighbors(u) {
            if self.state[v as usize] == NodeState::Susceptible {
                self.counts.si -= 1;
            }
        }
    }
}

/// Simulates one realisation. Initial infecteds are drawn uniformly without
/// replacement and start with age zero; counts are sampled onto
/// `t_k = k * dt_out` with the last event carried forward.
pub fn run_single(graph: &Graph, p: &EpidemicParams, dt_out: f64, seed: u64) -> Result<SimOutcome, SimError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    run_single_with(graph, p, dt_out, &mut rng)
}

pub fn run_single_with<R: Rng>(
    graph: &Graph,
    p: &EpidemicParams,
    dt_out: f64,
    rng: &mut R,
) -> Result<SimOutcome, SimError> {
    p.check_population(graph.num_nodes())?;
    if !(dt_out.is_finite() && dt_out > 0.0) {
        return Err(SimError::InvalidParams(format!("dt_out must be > 0, got {dt_out}")));
    }
    let clock = if p.tau > 0.0 {
        Some(Exp::new(p.tau).map_err(|e| SimError::InvalidParams(e.to_string()))?)
    } else {
        None
    };
    let points = (p.t_end / dt_out + 1e-9).floor() as usize + 1;
    let mut traj = Trajectory::with_capacity(dt_out, points);
    let mut engine = Engine::new(graph);

    for u in index::sample(rng, graph.num_nodes(), p.initial_infected).into_iter() {
        engine.infect(u, 0.0, p, &clock, rng);
    }

    let mut next_grid = 0usize;
    let mut emit_until = |traj: &mut Trajectory, c: &Counts, t_limit: f64, inclusive: bool| {
        while next_grid < points {
            let t = next_grid as f64 * dt_out;
            if t > t_limit || (!inclusive && t == t_limit) {
                break;
            }
            traj.push(t, c.s as f64, c.i as f64, c.r as f64, c.si as f64, c.ss as f64);
            next_grid += 1;
        }
    };

    let mut total_infected = p.initial_infected;
    let mut last_infection = 0.0f64;
    let mut last_recovery = 0.0f64;
    let mut fired = 0usize;
    while let Some(ev) = engine.queue.pop() {
        if ev.time > p.t_end {
            break;
        }
        emit_until(&mut traj, &engine.counts, ev.time, false);
        match ev.kind {
            EventKind::Infection { source, target } => {
                let (s, v) = (source as usize, target as usize);
                if engine.state[v] == NodeState::Susceptible
                    && engine.state[s] == NodeState::Infected
                    && ev.time < engine.recover_at[s]
                {
                    engine.infect(v, ev.time, p, &clock, rng);
                    total_infected += 1;
                    last_infection = ev.time;
                    fired += 1;
                }
            }
            EventKind::Recovery { node } => {
                engine.recover(node as usize);
                last_recovery = ev.time;
                fired += 1;
            }
        }
        debug_assert_eq!(
            engine.counts.s + engine.counts.i + engine.counts.r,
            graph.num_nodes() as i64
        );
    }
    emit_until(&mut traj, &engine.counts, p.t_end, true);

    Ok(SimOutcome {
        trajectory: traj,
        total_infected,
        last_infection,
        last_recovery,
        events_fired: fired,
    })
}

/// Where each ensemble member gets its network.
#[derive(Debug, Clone, Copy)]
pub enum GraphSource<'a> {
    Shared(&'a Graph),
    /// A new random regular graph per run.
    Fresh { nodes: usize, degree: usize },
}

#[derive(Debug, Clone, Copy)]
pub struct EnsembleConfig {
    pub runs: usize,
    pub base_seed: u64,
    pub dt_out: f64,
    pub exec: Execution,
    /// Keep every member trajectory in the result.
    pub keep_runs: bool,
}

impl EnsembleConfig {
    pub fn new(runs: usize, base_seed: u64) -> Self {
        Self {
            runs,
            base_seed,
            dt_out: DEFAULT_DT_OUT,
            exec: Execution::default(),
            keep_runs: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Ensemble {
    pub mean: Trajectory,
    pub std: Trajectory,
    /// Nodes ever infected in each run.
    pub final_sizes: Vec<usize>,
    pub runs: Vec<Trajectory>,
}

/// Random stream for run `run` of an ensemble: streams `2k` drive the
/// epidemic, streams `2k + 1` build fresh graphs.
pub fn run_rng(base_seed: u64, run: usize, graph_stream: bool) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(base_seed);
    rng.set_stream(2 * run as u64 + u64::from(graph_stream));
    rng
}

/// Runs independent realisations and returns the pointwise mean and standard
/// deviation. Output depends only on the inputs, not on the execution mode.
pub fn run_ensemble(source: GraphSource<'_>, p: &EpidemicParams, cfg: &EnsembleConfig) -> Result<Ensemble, SimError> {
    if cfg.runs == 0 {
        return Err(SimError::InvalidParams("runs must be >= 1".into()));
    }
    let results = par::map_indexed(cfg.runs, cfg.exec, |k| -> Result<SimOutcome, SimError> {
        let mut rng = run_rng(cfg.base_seed, k, false);
        match source {
            GraphSource::Shared(g) => run_single_with(g, p, cfg.dt_out, &mut rng),
            GraphSource::Fresh { nodes, degree } => {
                let mut grng = run_rng(cfg.base_seed, k, true);
                let g = Graph::random_regular_with(nodes, degree, &mut grng)?;
                run_single_with(&g, p, cfg.dt_out, &mut rng)
            }
        }
    });
    let outcomes: Vec<SimOutcome> = results.into_iter().collect::<Result<_, _>>()?;
    let final_sizes = outcomes.iter().map(|o| o.total_infected).collect();
    let runs: Vec<Trajectory> = outcomes.into_iter().map(|o| o.trajectory).collect();
    let (mean, std) = Trajectory::mean_and_std(&runs);
    Ok(Ensemble {
        mean,
        std,
        final_sizes,
        runs: if cfg.keep_runs { runs } else { Vec::new() },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn exp_params(i0: usize) -> EpidemicParams {
        EpidemicParams::new(0.35, RecoveryDistribution::exponential(2.0 / 3.0).unwrap(), i0, 25.0).unwrap()
    }

    #[test]
    fn no_infecteds_means_no_events() {
        let g = Graph::random_regular(100, 4, 1).unwrap();
        let out = run_single(&g, &exp_params(0), 0.1, 5).unwrap();
        assert_eq!(out.events_fired, 0);
        assert!(out.trajectory.s.iter().all(|&s| s == 100.0));
        assert_eq!(out.trajectory.len(), 251);
    }

    #[test]
    fn conservation_and_monotonicity() {
        let g = Graph::random_regular(500, 6, 2).unwrap();
        for dist in ["exp:rate=0.6667", "fixed:sigma=1.5", "gamma:shape=3,rate=2", "uniform:a=1,b=2"] {
            let p = EpidemicParams::new(0.5, dist.parse().unwrap(), 5, 40.0).unwrap();
            let out = run_single(&g, &p, 0.1, 17).unwrap();
            let tr = &out.trajectory;
            for k in 0..tr.len() {
                assert_eq!(tr.s[k] + tr.i[k] + tr.r[k], 500.0);
                assert!(tr.si[k] >= 0.0 && tr.ss[k] >= 0.0);
            }
            assert!(tr.s.windows(2).all(|w| w[1] <= w[0]));
            assert!(tr.r.windows(2).all(|w| w[1] >= w[0]));
        }
    }

    #[test]
    fn incremental_pair_counts_match_recount() {
        // Stop at several horizons and recount pairs from scratch.
        let g = Graph::random_regular(200, 5, 3).unwrap();
        for t_end in [0.5, 1.0, 2.0, 4.0] {
            let p = EpidemicParams::new(0.8, RecoveryDistribution::uniform(1.0, 2.0).unwrap(), 3, t_end).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(4);
            let mut engine = Engine::new(&g);
            let clock = Some(Exp::new(p.tau).unwrap());
            for u in index::sample(&mut rng, 200, 3).into_iter() {
                engine.infect(u, 0.0, &p, &clock, &mut rng);
            }
            while let Some(ev) = engine.queue.pop() {
                if ev.time > t_end {
                    break;
                }
                match ev.kind {
                    EventKind::Infection { source, target } => {
                        if engine.state[target as usize] == NodeState::Susceptible
                            && engine.state[source as usize] == NodeState::Infected
                        {
                            engine.infect(target as usize, ev.time, &p, &clock, &mut rng);
                        }
                    }
                    EventKind::Recovery { node } => engine.recover(node as usize),
                }
            }
            let c = g.count_pairs(&engine.state).unwrap();
            assert_eq!(c.si as i64, engine.counts.si);
            assert_eq!(c.ss as i64, engine.counts.ss);
        }
    }

    #[test]
    fn fixed_recovery_ends_within_sigma_of_last_infection() {
        let g = Graph::random_regular(300, 6, 8).unwrap();
        let p = EpidemicParams::new(0.4, RecoveryDistribution::fixed(1.5).unwrap(), 4, 1e6).unwrap();
        let out = run_single(&g, &p, 1000.0, 1).unwrap();
        assert!(out.last_recovery.is_finite());
        assert!(out.last_recovery <= out.last_infection + 1.5 + 1e-12);
    }

    #[test]
    fn ensemble_is_deterministic_and_mode_independent() {
        let p = exp_params(5);
        let mut cfg = EnsembleConfig::new(8, 42);
        let source = GraphSource::Fresh { nodes: 200, degree: 6 };
        cfg.exec = Execution::Parallel;
        let a = run_ensemble(source, &p, &cfg).unwrap();
        let b = run_ensemble(source, &p, &cfg).unwrap();
        cfg.exec = Execution::Sequential;
        let c = run_ensemble(source, &p, &cfg).unwrap();
        assert_eq!(a.mean, b.mean);
        assert_eq!(a.mean, c.mean);
        assert_eq!(a.std, c.std);
    }

    #[test]
    fn single_run_ensemble_equals_run() {
        let g = Graph::random_regular(200, 6, 1).unwrap();
        let p = exp_params(5);
        let cfg = EnsembleConfig::new(1, 9);
        let ens = run_ensemble(GraphSource::Shared(&g), &p, &cfg).unwrap();
        let mut rng = run_rng(9, 0, false);
        let single = run_single_with(&g, &p, cfg.dt_out, &mut rng).unwrap();
        assert_eq!(ens.mean, single.trajectory);
        assert!(ens.std.i.iter().all(|&v| v == 0.0));
        assert!(run_ensemble(GraphSource::Shared(&g), &p, &EnsembleConfig::new(0, 1)).is_err());
    }
}
