//! Random network-routing instances: a random digraph whose edges are the
//! resources, origin–destination agents, and sampled simple paths as
//! bundles.

use std::collections::{HashSet, VecDeque};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{structural, Error, Result};
use crate::game::{AgentSpec, Bundle, CongestionGame, LossPolynomial, ResourceId};

/// Redraws of an agent's OD pair before generation gives up.
const OD_RETRY_BUDGET: usize = 1000;
/// Random DFS attempts per requested bundle.
const ATTEMPTS_PER_BUNDLE: usize = 10;

/// Directed graph without self-loops or parallel edges. Edge `e` is resource
/// `ResourceId(e)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DirectedGraph {
    nodes: usize,
    edges: Vec<(usize, usize)>,
    #[serde(skip)]
    out: Vec<Vec<(usize, usize)>>,
}

impl DirectedGraph {
    pub fn new(nodes: usize, edges: Vec<(usize, usize)>) -> Result<Self> {
        let mut out = vec![Vec::new(); nodes];
        let mut seen = HashSet::new();
        for (e, &(u, v)) in edges.iter().enumerate() {
            if u >= nodes || v >= nodes {
                return Err(structural(format!("edge ({u}, {v}) outside {nodes} nodes")));
            }
            if u == v {
                return Err(structural(format!("self-loop at node {u}")));
            }
            if !seen.insert((u, v)) {
                return Err(structural(format!("duplicate edge ({u}, {v})")));
            }
            out[u].push((v, e));
        }
        Ok(Self { nodes, edges, out })
    }

    pub fn nodes(&self) -> usize {
        self.nodes
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    /// Outgoing `(head, edge index)` pairs of `node`.
    pub fn out_edges(&self, node: usize) -> &[(usize, usize)] {
        &self.out[node]
    }

    /// Fewest-edge `s → t` path as edge indices.
    pub fn shortest_path(&self, od: OdPair) -> Option<Vec<usize>> {
        let mut via: Vec<Option<(usize, usize)>> = vec![None; self.nodes];
        let mut queue = VecDeque::from([od.source]);
        let mut seen = vec![false; self.nodes];
        seen[od.source] = true;
        while let Some(u) = queue.pop_front() {
            if u == od.target {
                let mut path = Vec::new();
                let mut node = u;
                while let Some((prev, e)) = via[node] {
                    path.push(e);
                    node = prev;
                }
                path.reverse();
                return Some(path);
            }
            for &(v, e) in &self.out[u] {
                if !seen[v] {
                    seen[v] = true;
                    via[v] = Some((u, e));
                    queue.push_back(v);
                }
            }
        }
        None
    }
}

/// Each ordered pair `(u, v)`, `u ≠ v`, becomes an edge independently with
/// probability `edge_prob`.
pub fn random_graph<R: Rng + ?Sized>(
    nodes: usize,
    edge_prob: f64,
    rng: &mut R,
) -> Result<DirectedGraph> {
    if nodes < 2 {
        return Err(Error::Config(format!("need at least 2 nodes, got {nodes}")));
    }
    if !(0.0..=1.0).contains(&edge_prob) {
        return Err(Error::Config(format!("edge probability {edge_prob} outside [0, 1]")));
    }
    let mut edges = Vec::new();
    for u in 0..nodes {
        for v in 0..nodes {
            if u != v && rng.gen_bool(edge_prob) {
                edges.push((u, v));
            }
        }
    }
    DirectedGraph::new(nodes, edges)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OdPair {
    pub source: usize,
    pub target: usize,
}

impl OdPair {
    pub fn new(source: usize, target: usize) -> Result<Self> {
        if source == target {
            return Err(structural("origin and destination must differ"));
        }
        Ok(Self { source, target })
    }
}

/// One randomized depth-first search from `s`, neighbours visited in random
/// order, nodes never revisited within the attempt, depth capped at
/// `max_len` edges.
fn random_dfs_path<R: Rng + ?Sized>(
    graph: &DirectedGraph,
    od: OdPair,
    max_len: usize,
    rng: &mut R,
) -> Option<Vec<usize>> {
    let mut visited = vec![false; graph.nodes];
    visited[od.source] = true;
    let order = |u: usize, rng: &mut R| {
        let mut next = graph.out[u].clone();
        next.shuffle(rng);
        next
    };
    // Stack of (node, remaining candidate edges); `path` holds edge indices.
    let mut stack = vec![(od.source, order(od.source, rng))];
    let mut path: Vec<usize> = Vec::new();
    while let Some((_, candidates)) = stack.last_mut() {
        match candidates.pop() {
            Some((v, e)) => {
                if visited[v] || path.len() >= max_len {
                    continue;
                }
                path.push(e);
                if v == od.target {
                    return Some(path);
                }
                visited[v] = true;
                let next = order(v, rng);
                stack.push((v, next));
            }
            None => {
                stack.pop();
                path.pop();
            }
        }
    }
    None
}

/// Up to `max_bundles` distinct simple `s → t` paths of at most
/// `max_path_len` edges, each as the bundle of its edges. `None` when no
/// such path exists.
pub fn sample_bundles<R: Rng + ?Sized>(
    graph: &DirectedGraph,
    od: OdPair,
    max_bundles: usize,
    max_path_len: usize,
    rng: &mut R,
) -> Result<Option<Vec<Bundle>>> {
    if max_bundles == 0 || max_path_len == 0 {
        return Err(Error::Config("max_bundles and max_path_len must be ≥ 1".into()));
    }
    if od.source >= graph.nodes || od.target >= graph.nodes {
        return Err(structural("OD pair outside the graph"));
    }
    let shortest = match graph.shortest_path(od) {
        Some(p) if p.len() <= max_path_len => p,
        _ => return Ok(None),
    };
    let mut found: Vec<Vec<usize>> = Vec::new();
    let mut seen: HashSet<Vec<usize>> = HashSet::new();
    for _ in 0..max_bundles * ATTEMPTS_PER_BUNDLE {
        if found.len() == max_bundles {
            break;
        }
        if let Some(path) = random_dfs_path(graph, od, max_path_len, rng) {
            let mut key = path.clone();
            key.sort_unstable();
            if seen.insert(key) {
                found.push(path);
            }
        }
    }
    if found.is_empty() {
        found.push(shortest);
    }
    let bundles = found
        .iter()
        .map(|p| Bundle::new(p.iter().copied().map(ResourceId)))
        .collect::<Result<Vec<_>>>()?;
    Ok(Some(bundles))
}

/// Generator parameters; the defaults are the reference experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RoutingParams {
    pub nodes: usize,
    pub edge_prob: f64,
    pub agents: usize,
    pub mass: f64,
    pub max_bundles: usize,
    pub max_path_len: usize,
    pub capacity: f64,
    pub coeff_range: [f64; 2],
}

impl Default for RoutingParams {
    fn default() -> Self {
        Self {
            nodes: 15,
            edge_prob: 0.5,
            agents: 10,
            mass: 20.0,
            max_bundles: 10,
            max_path_len: 10,
            capacity: 14.0,
            coeff_range: [0.0, 0.05],
        }
    }
}

impl RoutingParams {
    pub fn validate(&self) -> Result<()> {
        let [lo, hi] = self.coeff_range;
        if self.agents == 0 {
            return Err(Error::Config("need at least one agent".into()));
        }
        if !(self.mass > 0.0 && self.capacity > 0.0) {
            return Err(Error::Config("mass and capacity must be positive".into()));
        }
        if !(lo >= 0.0 && lo <= hi && hi.is_finite()) {
            return Err(Error::Config(format!("invalid coefficient range [{lo}, {hi}]")));
        }
        if self.max_bundles == 0 || self.max_path_len == 0 {
            return Err(Error::Config("max_bundles and max_path_len must be ≥ 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RoutingInstance {
    pub game: CongestionGame,
    pub graph: DirectedGraph,
    pub od_pairs: Vec<OdPair>,
}

pub fn build_routing_game<R: Rng + ?Sized>(
    params: &RoutingParams,
    rng: &mut R,
) -> Result<RoutingInstance> {
    params.validate()?;
    let graph = random_graph(params.nodes, params.edge_prob, rng)?;
    if graph.n_edges() == 0 {
        return Err(Error::Generation("random graph has no edges".into()));
    }
    let [lo, hi] = params.coeff_range;
    let losses = (0..graph.n_edges())
        .map(|_| {
            let a2 = rng.gen_range(lo..=hi);
            let a1 = rng.gen_range(lo..=hi);
            let a0 = rng.gen_range(lo..=hi);
            LossPolynomial::new(a2, a1, a0)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut agents = Vec::with_capacity(params.agents);
    let mut od_pairs = Vec::with_capacity(params.agents);
    for i in 0..params.agents {
        let mut placed = false;
        for _ in 0..OD_RETRY_BUDGET {
            let source = rng.gen_range(0..params.nodes);
            let target = rng.gen_range(0..params.nodes);
            if source == target {
                continue;
            }
            let od = OdPair { source, target };
            if let Some(bundles) =
                sample_bundles(&graph, od, params.max_bundles, params.max_path_len, rng)?
            {
                agents.push(AgentSpec::new(params.mass, bundles)?);
                od_pairs.push(od);
                placed = true;
                break;
            }
        }
        if !placed {
            return Err(Error::Generation(format!(
                "no connected OD pair found for agent {i} after {OD_RETRY_BUDGET} draws"
            )));
        }
    }

    let game = CongestionGame::new(vec![params.capacity; graph.n_edges()], losses, agents)?;
    Ok(RoutingInstance {
        game,
        graph,
        od_pairs,
    })
}

/// Generator RNG for a seed (stream 0 of the seed's ChaCha8 key).
pub fn instance_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn generate(params: &RoutingParams, seed: u64) -> Result<RoutingInstance> {
    build_routing_game(params, &mut instance_rng(seed))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn complete_and_empty_graphs() {
        let mut rng = instance_rng(1);
        assert_eq!(random_graph(3, 1.0, &mut rng).unwrap().n_edges(), 6);
        assert_eq!(random_graph(3, 0.0, &mut rng).unwrap().n_edges(), 0);
        assert!(random_graph(1, 0.5, &mut rng).is_err());
    }

    #[test]
    fn graph_rejects_loops_and_duplicates() {
        assert!(DirectedGraph::new(2, vec![(0, 0)]).is_err());
        assert!(DirectedGraph::new(2, vec![(0, 1), (0, 1)]).is_err());
        assert!(DirectedGraph::new(2, vec![(0, 2)]).is_err());
        assert!(OdPair::new(1, 1).is_err());
    }

    #[test]
    fn single_edge_gives_single_bundle() {
        let g = DirectedGraph::new(2, vec![(0, 1)]).unwrap();
        let od = OdPair::new(0, 1).unwrap();
        let b = sample_bundles(&g, od, 10, 10, &mut instance_rng(3)).unwrap().unwrap();
        assert_eq!(b, vec![Bundle::from_indices(&[0]).unwrap()]);
    }

    #[test]
    fn disconnected_pair_has_no_bundles() {
        let g = DirectedGraph::new(3, vec![(0, 1), (2, 1)]).unwrap();
        let od = OdPair::new(0, 2).unwrap();
        assert!(sample_bundles(&g, od, 5, 10, &mut instance_rng(3)).unwrap().is_none());
        // Reachable only through 2 edges.
        let g = DirectedGraph::new(3, vec![(0, 1), (1, 2)]).unwrap();
        let od = OdPair::new(0, 2).unwrap();
        assert!(sample_bundles(&g, od, 5, 1, &mut instance_rng(3)).unwrap().is_none());
        assert_eq!(
            sample_bundles(&g, od, 5, 2, &mut instance_rng(3)).unwrap().unwrap().len(),
            1
        );
    }

    #[test]
    fn tiny_routing_game() {
        let params = RoutingParams {
            nodes: 2,
            edge_prob: 1.0,
            agents: 1,
            ..RoutingParams::default()
        };
        let inst = generate(&params, 5).unwrap();
        assert_eq!(inst.game.n_agents(), 1);
        assert_eq!(inst.game.agents()[0].n_bundles(), 1);
        assert_eq!(inst.game.agents()[0].mass(), 20.0);
    }

    #[test]
    fn generation_fails_without_edges() {
        let params = RoutingParams {
            edge_prob: 0.0,
            ..RoutingParams::default()
        };
        assert!(matches!(generate(&params, 0), Err(Error::Generation(_))));
    }

    #[test]
    fn reference_parameters() {
        let p = RoutingParams::default();
        assert_eq!((p.nodes, p.agents, p.max_bundles), (15, 10, 10));
        assert_eq!((p.edge_prob, p.mass, p.capacity), (0.5, 20.0, 14.0));
        assert_eq!(p.coeff_range, [0.0, 0.05]);
    }
}
