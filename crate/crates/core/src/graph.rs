//! Random regular networks and pair counting.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::io::{self, BufRead};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

/// Full restarts allowed before generation gives up.
const MAX_RESTARTS: usize = 200;

/// Consecutive rejected stub pairs before the remaining stubs are checked for
/// a feasible pairing.
const STUCK_PROBE: usize = 64;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("N*n must be even (N={nodes}, n={degree})")]
    OddStubCount { nodes: usize, degree: usize },
    #[error("degree {degree} must be smaller than the node count {nodes}")]
    DegreeTooLarge { nodes: usize, degree: usize },
    #[error("no simple {degree}-regular graph found on {nodes} nodes after {restarts} restarts")]
    Infeasible {
        nodes: usize,
        degree: usize,
        restarts: usize,
    },
    #[error("state vector has {got} entries, graph has {expected} nodes")]
    SizeMismatch { expected: usize, got: usize },
    #[error("malformed edge list: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Compartment of a single node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NodeState {
    Susceptible,
    Infected,
    Recovered,
}

/// Ordered-pair tallies: each undirected link contributes to both
/// orientations, so `ss` and `ii` count every link twice and `si` once.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct PairCounts {
    pub ss: u64,
    pub si: u64,
    pub ii: u64,
}

/// Undirected simple graph where every node has the same degree.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    degree: usize,
    seed: u64,
    adjacency: Vec<Vec<u32>>,
}

impl Graph {
    /// Samples an `n`-regular simple graph on `nodes` vertices.
    ///
    /// Stubs are paired at random; a pair that would create a self-loop or a
    /// parallel edge is rejected and redrawn. When the leftover stubs admit no
    /// valid pairing the whole construction restarts.
    pub fn random_regular(nodes: usize, degree: usize, seed: u64) -> Result<Self, GraphError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut g = Self::random_regular_with(nodes, degree, &mut rng)?;
        g.seed = seed;
        Ok(g)
    }

    pub fn random_regular_with<R: Rng + ?Sized>(
        nodes: usize,
        degree: usize,
        rng: &mut R,
    ) -> Result<Self, GraphError> {
        if !(nodes * degree).is_multiple_of(2) {
            return Err(GraphError::OddStubCount { nodes, degree });
        }
        if degree >= nodes && !(degree == 0 && nodes > 0) {
            return Err(GraphError::DegreeTooLarge { nodes, degree });
        }
        for _ in 0..MAX_RESTARTS {
            if let Some(adjacency) = try_pairing(nodes, degree, rng) {
                return Ok(Self {
                    degree,
                    seed: 0,
                    adjacency,
                });
            }
        }
        Err(GraphError::Infeasible {
            nodes,
            degree,
            restarts: MAX_RESTARTS,
        })
    }

    /// Builds a graph from an explicit undirected edge list.
    pub fn from_edges(nodes: usize, edges: &[(u32, u32)]) -> Result<Self, GraphError> {
        let mut adjacency = vec![Vec::new(); nodes];
        let mut seen = HashSet::with_capacity(edges.len());
        for &(a, b) in edges {
            if a == b || a as usize >= nodes || b as usize >= nodes {
                return Err(GraphError::Parse(format!("invalid edge {a} {b}")));
            }
            if !seen.insert((a.min(b), a.max(b))) {
                return Err(GraphError::Parse(format!("duplicate edge {a} {b}")));
            }
            adjacency[a as usize].push(b);
            adjacency[b as usize].push(a);
        }
        for list in &mut adjacency {
            list.sort_unstable();
        }
        let degree = adjacency.first().map_or(0, Vec::len);
        Ok(Self {
            degree,
            seed: 0,
            adjacency,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.adjacency.len()
    }

    /// Degree of node 0; equal to every node's degree for generated graphs.
    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn neighbors(&self, node: usize) -> &[u32] {
        &self.adjacency[node]
    }

    pub fn directed_edge_count(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum()
    }

    pub fn edges(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        self.adjacency.iter().enumerate().flat_map(|(i, list)| {
            list.iter()
                .filter(move |&&j| (i as u32) < j)
                .map(move |&j| (i as u32, j))
        })
    }

    /// Checks symmetry, simplicity and regularity. Returns a description of
    /// the first violation.
    pub fn check_invariants(&self) -> Result<(), String> {
        for (i, list) in self.adjacency.iter().enumerate() {
            if list.len() != self.degree {
                return Err(format!("node {i} has degree {}", list.len()));
            }
            if list.windows(2).any(|w| w[0] >= w[1]) {
                return Err(format!("node {i} has unsorted or repeated neighbours"));
            }
            for &j in list {
                if j as usize == i {
                    return Err(format!("self-loop at {i}"));
                }
                if self.adjacency[j as usize].binary_search(&(i as u32)).is_err() {
                    return Err(format!("edge {i}->{j} has no reverse"));
                }
            }
        }
        if self.directed_edge_count() != self.num_nodes() * self.degree {
            return Err("directed edge count differs from N*n".into());
        }
        Ok(())
    }

    /// Ordered pair counts for the given node states.
    pub fn count_pairs(&self, states: &[NodeState]) -> Result<PairCounts, GraphError> {
        if states.len() != self.num_nodes() {
            return Err(GraphError::SizeMismatch {
                expected: self.num_nodes(),
                got: states.len(),
            });
        }
        let mut c = PairCounts::default();
        for (i, list) in self.adjacency.iter().enumerate() {
            let si = states[i];
            for &j in list {
                match (si, states[j as usize]) {
                    (NodeState::Susceptible, NodeState::Susceptible) => c.ss += 1,
                    (NodeState::Susceptible, NodeState::Infected) => c.si += 1,
                    (NodeState::Infected, NodeState::Infected) => c.ii += 1,
                    _ => {}
                }
            }
        }
        Ok(c)
    }

    /// Edge-list text: a `# N n seed` header, then one `i j` line per edge
    /// with `i < j`.
    pub fn to_edge_list(&self) -> String {
        let mut out = format!("# {} {} {}\n", self.num_nodes(), self.degree, self.seed);
        for (i, j) in self.edges() {
            let _ = writeln!(out, "{i} {j}");
        }
        out
    }

    pub fn read_edge_list<R: BufRead>(reader: R) -> Result<Self, GraphError> {
        let mut lines = reader.lines();
        let header = lines
            .next()
            .ok_or_else(|| GraphError::Parse("empty input".into()))??;
        let fields: Vec<&str> = header
            .strip_prefix('#')
            .ok_or_else(|| GraphError::Parse("missing `# N n seed` header".into()))?
            .split_whitespace()
            .collect();
        let [n_str, deg_str, seed_str] = fields[..] else {
            return Err(GraphError::Parse(format!("bad header `{header}`")));
        };
        let parse = |s: &str| {
            s.parse::<u64>()
                .map_err(|e| GraphError::Parse(format!("header field `{s}`: {e}")))
        };
        let nodes = parse(n_str)? as usize;
        let degree = parse(deg_str)? as usize;
        let seed = parse(seed_str)?;
        let mut edges = Vec::with_capacity(nodes * degree / 2);
        for line in lines {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut it = line.split_whitespace().map(str::parse::<u32>);
            match (it.next(), it.next(), it.next()) {
                (Some(Ok(a)), Some(Ok(b)), None) if a < b => edges.push((a, b)),
                _ => return Err(GraphError::Parse(format!("bad edge line `{line}`"))),
            }
        }
        let mut g = Self::from_edges(nodes, &edges)?;
        if g.adjacency.iter().any(|l| l.len() != degree) {
            return Err(GraphError::Parse(format!("graph is not {degree}-regular")));
        }
        g.degree = degree;
        g.seed = seed;
        Ok(g)
    }
}

fn try_pairing<R: Rng + ?Sized>(nodes: usize, degree: usize, rng: &mut R) -> Option<Vec<Vec<u32>>> {
    let mut stubs: Vec<u32> = (0..nodes as u32)
        .flat_map(|v| std::iter::repeat_n(v, degree))
        .collect();
    stubs.shuffle(rng);
    let mut adjacency: Vec<Vec<u32>> = vec![Vec::with_capacity(degree); nodes];
    let mut edges: HashSet<(u32, u32)> = HashSet::with_capacity(nodes * degree / 2);
    let mut rejected = 0usize;
    while stubs.len() >= 2 {
        let len = stubs.len();
        let i = rng.random_range(0..len);
        let mut j = rng.random_range(0..len - 1);
        if j >= i {
            j += 1;
        }
        let (a, b) = (stubs[i], stubs[j]);
        let key = (a.min(b), a.max(b));
        if a == b || edges.contains(&key) {
            rejected += 1;
            if rejected >= STUCK_PROBE {
                if !has_valid_pair(&stubs, &edges) {
                    return None;
                }
                rejected = 0;
            }
            continue;
        }
        rejected = 0;
        edges.insert(key);
        adjacency[a as usize].push(b);
        adjacency[b as usize].push(a);
        let (hi, lo) = (i.max(j), i.min(j));
        stubs.swap_remove(hi);
        stubs.swap_remove(lo);
    }
    for list in &mut adjacency {
        list.sort_unstable();
    }
    Some(adjacency)
}

fn has_valid_pair(stubs: &[u32], edges: &HashSet<(u32, u32)>) -> bool {
    let mut distinct: Vec<u32> = stubs.to_vec();
    distinct.sort_unstable();
    distinct.dedup();
    for (k, &a) in distinct.iter().enumerate() {
        for &b in &distinct[k + 1..] {
            if !edges.contains(&(a, b)) {
                return true;
            }
        }
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;
    use NodeState::*;

    #[test]
    fn k4_is_the_only_cubic_graph_on_four_nodes() {
        for seed in 0..20 {
            let g = Graph::random_regular(4, 3, seed).unwrap();
            g.check_invariants().unwrap();
            for i in 0..4 {
                let expected: Vec<u32> = (0..4).filter(|&j| j != i).collect();
                assert_eq!(g.neighbors(i as usize), expected.as_slice());
            }
        }
    }

    #[test]
    fn baseline_scale_graph_is_valid() {
        let g = Graph::random_regular(1000, 15, 1).unwrap();
        g.check_invariants().unwrap();
        assert_eq!(g.directed_edge_count(), 15_000);
        assert_eq!(g, Graph::random_regular(1000, 15, 1).unwrap());
    }

    #[test]
    fn odd_stub_count_rejected() {
        assert!(matches!(
            Graph::random_regular(5, 3, 0),
            Err(GraphError::OddStubCount { .. })
        ));
        assert!(matches!(
            Graph::random_regular(4, 4, 0),
            Err(GraphError::DegreeTooLarge { .. })
        ));
    }

    #[test]
    fn all_susceptible_pairs() {
        let g = Graph::random_regular(1000, 15, 2).unwrap();
        let c = g.count_pairs(&vec![Susceptible; 1000]).unwrap();
        assert_eq!(c, PairCounts { ss: 15_000, si: 0, ii: 0 });
        let c = g.count_pairs(&vec![Infected; 1000]).unwrap();
        assert_eq!(c, PairCounts { ss: 0, si: 0, ii: 15_000 });
    }

    #[test]
    fn k4_with_one_infected() {
        let g = Graph::random_regular(4, 3, 0).unwrap();
        let c = g
            .count_pairs(&[Infected, Susceptible, Susceptible, Susceptible])
            .unwrap();
        assert_eq!(c, PairCounts { ss: 6, si: 3, ii: 0 });
        assert!(g.count_pairs(&[Infected]).is_err());
    }

    #[test]
    fn edge_list_round_trip() {
        let g = Graph::random_regular(50, 4, 9).unwrap();
        let text = g.to_edge_list();
        assert!(text.starts_with("# 50 4 9\n"));
        let back = Graph::read_edge_list(text.as_bytes()).unwrap();
        assert_eq!(back, g);
        assert!(Graph::read_edge_list("# 3 2 0\n0 1\n1 1\n".as_bytes()).is_err());
    }
}
