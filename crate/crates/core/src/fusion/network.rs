use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use super::fuse_pair_reduced;
use crate::density::AugmentedBernoulli;
use crate::error::{Error, Result};
use crate::models::SensorId;
use crate::reduce::ReductionPolicy;

/// Network nodes are the sensors themselves.
pub type NodeId = SensorId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeightRule {
    #[default]
    Metropolis,
    Uniform,
}

/// Undirected communication graph with per-node consensus weights `ω^{i,j}`
/// over the closed neighborhood `𝒩^i` (node `i` included).
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkGraph {
    adjacency: BTreeMap<NodeId, BTreeSet<NodeId>>,
    weights: BTreeMap<NodeId, BTreeMap<NodeId, f64>>,
}

impl NetworkGraph {
    /// Graph over `nodes` with the given undirected edges; weights start as
    /// Metropolis weights.
    pub fn from_edges(
        nodes: impl IntoIterator<Item = NodeId>,
        edges: impl IntoIterator<Item = (NodeId, NodeId)>,
    ) -> Result<Self> {
        let mut adjacency: BTreeMap<NodeId, BTreeSet<NodeId>> =
            nodes.into_iter().map(|n| (n, BTreeSet::new())).collect();
        for (a, b) in edges {
            if a == b {
                continue;
            }
            for (x, y) in [(a, b), (b, a)] {
                adjacency
                    .get_mut(&x)
                    .ok_or_else(|| Error::InvalidParameter(format!("edge references unknown node {x}")))?
                    .insert(y);
            }
        }
        let mut graph = Self { adjacency, weights: BTreeMap::new() };
        graph.weights = metropolis_weights(&graph).weights;
        Ok(graph)
    }

    pub fn complete(nodes: impl IntoIterator<Item = NodeId>) -> Self {
        let nodes: Vec<NodeId> = nodes.into_iter().collect();
        let edges: Vec<_> =
            nodes.iter().enumerate().flat_map(|(i, &a)| nodes[i + 1..].iter().map(move |&b| (a, b))).collect();
        Self::from_edges(nodes, edges).expect("edges drawn from the node list")
    }

    /// Edge between every pair of positions closer than `radius`.
    pub fn geometric(positions: &[(NodeId, [f64; 2])], radius: f64) -> Self {
        let mut edges = Vec::new();
        for (i, (a, pa)) in positions.iter().enumerate() {
            for (b, pb) in &positions[i + 1..] {
                if (pa[0] - pb[0]).hypot(pa[1] - pb[1]) < radius {
                    edges.push((*a, *b));
                }
            }
        }
        Self::from_edges(positions.iter().map(|p| p.0), edges).expect("edges drawn from the node list")
    }

    pub fn with_rule(self, rule: WeightRule) -> Self {
        match rule {
            WeightRule::Metropolis => metropolis_weights(&self),
            WeightRule::Uniform => uniform_weights(&self),
        }
    }

    pub fn nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.adjacency.keys().copied()
    }

    pub fn len(&self) -> usize {
        self.adjacency.len()
    }

    pub fn is_empty(&self) -> bool {
        self.adjacency.is_empty()
    }

    pub fn degree(&self, node: NodeId) -> usize {
        self.adjacency.get(&node).map_or(0, BTreeSet::len)
    }

    pub fn neighbors(&self, node: NodeId) -> impl Iterator<Item = NodeId> + '_ {
        self.adjacency.get(&node).into_iter().flatten().copied()
    }

    /// `ω^{i,j}` for `j ∈ 𝒩^i`, ascending by `j`.
    pub fn weights(&self, node: NodeId) -> Option<&BTreeMap<NodeId, f64>> {
        self.weights.get(&node)
    }

    pub fn is_connected(&self) -> bool {
        let Some(start) = self.adjacency.keys().next().copied() else {
            return true;
        };
        let mut seen = BTreeSet::from([start]);
        let mut queue = VecDeque::from([start]);
        while let Some(n) = queue.pop_front() {
            for m in self.neighbors(n) {
                if seen.insert(m) {
                    queue.push_back(m);
                }
            }
        }
        seen.len() == self.adjacency.len()
    }
}

/// Metropolis weights: `1/(1 + max(deg i, deg j))` per edge, the remainder
/// on the node itself. The resulting matrix is symmetric and doubly
/// stochastic.
pub fn metropolis_weights(graph: &NetworkGraph) -> NetworkGraph {
    let mut weights = BTreeMap::new();
    for (&i, nbrs) in &graph.adjacency {
        let mut row = BTreeMap::new();
        let mut off = 0.0;
        for &j in nbrs {
            let w = 1.0 / (1.0 + graph.degree(i).max(graph.degree(j)) as f64);
            off += w;
            row.insert(j, w);
        }
        row.insert(i, 1.0 - off);
        weights.insert(i, row);
    }
    NetworkGraph { adjacency: graph.adjacency.clone(), weights }
}

/// Equal weight `1/|𝒩^i|` on every member of the closed neighborhood.
pub fn uniform_weights(graph: &NetworkGraph) -> NetworkGraph {
    let mut weights = BTreeMap::new();
    for (&i, nbrs) in &graph.adjacency {
        let w = 1.0 / (nbrs.len() + 1) as f64;
        let row = nbrs.iter().copied().chain([i]).map(|j| (j, w)).collect();
        weights.insert(i, row);
    }
    NetworkGraph { adjacency: graph.adjacency.clone(), weights }
}

/// GCI of several densities as a left fold of pairwise fusions.
///
/// Inputs are folded in the given order; fold step `k` fuses the running
/// result (weight `w_1+…+w_{k−1}`) with the `k`-th density (weight `w_k`).
/// Weights need not be normalized. With a reduction policy every
/// intermediate result is reduced.
pub fn fuse_weighted(
    inputs: &[(&AugmentedBernoulli, f64)],
    reduction: Option<&ReductionPolicy>,
) -> Result<AugmentedBernoulli> {
    let mut iter = inputs.iter().filter(|(_, w)| *w > 0.0);
    let (first, w0) = iter.next().ok_or_else(|| Error::InvalidParameter("nothing to fuse".into()))?;
    let mut acc = (*first).clone();
    let mut acc_weight = *w0;
    for &(d, w) in iter {
        let total = acc_weight + w;
        acc = fuse_pair_reduced(&acc, d, acc_weight / total, reduction)?;
        acc_weight = total;
    }
    Ok(acc)
}

/// `steps` synchronous consensus iterations.
///
/// In every iteration each node fuses the previous-iteration densities of
/// its closed neighborhood with weights `ω^{i,j}`, folding in ascending
/// node id, and reduces the result.
pub fn consensus(
    states: &BTreeMap<NodeId, AugmentedBernoulli>,
    graph: &NetworkGraph,
    steps: usize,
    reduction: Option<&ReductionPolicy>,
) -> Result<BTreeMap<NodeId, AugmentedBernoulli>> {
    if steps == 0 {
        return Err(Error::InvalidParameter("consensus needs at least one step".into()));
    }
    for node in graph.nodes() {
        if !states.contains_key(&node) {
            return Err(Error::InvalidParameter(format!("no density for node {node}")));
        }
    }
    if steps > 1 && !graph.is_connected() {
        log::warn!("consensus on a disconnected graph cannot reach the global fusion");
    }
    let mut current = states.clone();
    for _ in 0..steps {
        let mut next = BTreeMap::new();
        for node in graph.nodes() {
            let row =
                graph.weights(node).ok_or_else(|| Error::InvalidParameter(format!("no weights for node {node}")))?;
            let inputs: Vec<(&AugmentedBernoulli, f64)> = row.iter().map(|(j, &w)| (&current[j], w)).collect();
            let fused = if inputs.len() == 1 { current[&node].clone() } else { fuse_weighted(&inputs, reduction)? };
            next.insert(node, fused);
        }
        current = next;
    }
    Ok(current)
}
