// SPDX-License-Identifier: Apache-2.0

//! Kernighan–Lin clustering of a workload into crossbar-sized pieces.
//!
//! A cluster owns a set of home neurons. It holds every synapse that ends on
//! one of them, so its crossbar needs one row per distinct presynaptic source
//! (home or foreign) and one column per home neuron with incoming synapses.
//! A source whose targets live in several clusters is replicated as a row in
//! each of them.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::workload::{NeuronId, SnnGraph};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PartitionError {
    #[error("neuron {neuron} has fan-in {fan_in}, more than the {rows} crossbar rows")]
    FanInExceedsRows {
        neuron: NeuronId,
        fan_in: usize,
        rows: usize,
    },
    #[error("bipartition needs at least 2 neurons, got {0}")]
    TooFewNeurons(usize),
    #[error("invalid partition options: {0}")]
    InvalidOptions(String),
    #[error("invalid clustering: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PartitionOptions {
    pub balance_tolerance: f64,
    pub seed: u64,
    /// Independent KL runs per bisection; the lowest cut wins.
    pub restarts: usize,
}

impl Default for PartitionOptions {
    fn default() -> Self {
        Self {
            balance_tolerance: 0.1,
            seed: 0,
            restarts: 4,
        }
    }
}

impl PartitionOptions {
    pub fn validate(&self) -> Result<(), PartitionError> {
        if !(0.0..=1.0).contains(&self.balance_tolerance) {
            return Err(PartitionError::InvalidOptions(format!(
                "balance_tolerance {} must lie in [0, 1]",
                self.balance_tolerance
            )));
        }
        if self.restarts == 0 {
            return Err(PartitionError::InvalidOptions("restarts must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bipartition {
    pub a: Vec<NeuronId>,
    pub b: Vec<NeuronId>,
    pub cut_cost: u64,
    /// Cut of the seeded starting split that led to this result.
    pub initial_cut: u64,
}

/// Undirected weighted graph over local indices, stored densely.
struct WeightedGraph {
    n: usize,
    w: Vec<u64>,
}

impl WeightedGraph {
    /// Induced subgraph over `ids` (sorted ascending); weights sum both directions.
    fn induced(graph: &SnnGraph, ids: &[NeuronId]) -> Self {
        let index: BTreeMap<NeuronId, usize> =
            ids.iter().enumerate().map(|(k, &id)| (id, k)).collect();
        let n = ids.len();
        let mut w = vec![0u64; n * n];
        for s in &graph.synapses {
            if s.pre == s.post {
                continue;
            }
            if let (Some(&u), Some(&v)) = (index.get(&s.pre), index.get(&s.post)) {
                w[u * n + v] += s.activations;
                w[v * n + u] += s.activations;
            }
        }
        Self { n, w }
    }

    #[inline]
    fn weight(&self, u: usize, v: usize) -> i64 {
        self.w[u * self.n + v] as i64
    }

    fn cut(&self, side: &[bool]) -> u64 {
        let mut c = 0;
        for u in 0..self.n {
            for v in u + 1..self.n {
                if side[u] != side[v] {
                    c += self.w[u * self.n + v];
                }
            }
        }
        c
    }

    /// External minus internal weight for every vertex.
    fn d_values(&self, side: &[bool]) -> Vec<i64> {
        (0..self.n)
            .map(|u| {
                (0..self.n)
                    .filter(|&v| v != u)
                    .map(|v| {
                        let w = self.weight(u, v);
                        if side[u] != side[v] {
                            w
                        } else {
                            -w
                        }
                    })
                    .sum()
            })
            .collect()
    }

    /// One KL pass. Returns the applied gain (0 when nothing improved).
    fn kl_pass(&self, side: &mut [bool]) -> i64 {
        let n = self.n;
        let mut d = self.d_values(side);
        let mut locked = vec![false; n];
        let steps = side.iter().filter(|&&s| s).count().min(side.iter().filter(|&&s| !s).count());
        let mut swaps: Vec<(usize, usize, i64)> = Vec::with_capacity(steps);

        for _ in 0..steps {
            let by_d = |want: bool| {
                let mut v: Vec<usize> = (0..n).filter(|&u| !locked[u] && side[u] == want).collect();
                v.sort_by(|&x, &y| d[y].cmp(&d[x]).then(x.cmp(&y)));
                v
            };
            let (left, right) = (by_d(false), by_d(true));
            let mut best: Option<(i64, usize, usize)> = None;
            for &a in &left {
                if let Some((g, ..)) = best {
                    if d[a] + d[right[0]] < g {
                        break;
                    }
                }
                for &b in &right {
                    let bound = d[a] + d[b];
                    if let Some((g, ..)) = best {
                        if bound < g {
                            break;
                        }
                    }
                    let gain = bound - 2 * self.weight(a, b);
                    let (lo, hi) = (a.min(b), a.max(b));
                    let better = match best {
                        None => true,
                        Some((g, ba, bb)) => {
                            gain > g || (gain == g && (lo, hi) < (ba.min(bb), ba.max(bb)))
                        }
                    };
                    if better {
                        best = Some((gain, a, b));
                    }
                }
            }
            let (gain, a, b) = best.expect("both sides have unlocked vertices");
            locked[a] = true;
            locked[b] = true;
            swaps.push((a, b, gain));
            for x in 0..n {
                if locked[x] {
                    continue;
                }
                let (wa, wb) = (self.weight(x, a), self.weight(x, b));
                if side[x] == side[a] {
                    d[x] += 2 * wa - 2 * wb;
                } else {
                    d[x] += 2 * wb - 2 * wa;
                }
            }
        }

        let mut best_k = 0;
        let mut best_sum = 0;
        let mut sum = 0;
        for (k, &(_, _, g)) in swaps.iter().enumerate() {
            sum += g;
            if sum > best_sum {
                best_sum = sum;
                best_k = k + 1;
            }
        }
        for &(a, b, _) in &swaps[..best_k] {
            side[a] = !side[a];
            side[b] = !side[b];
        }
        best_sum
    }

    /// Greedy single-vertex moves with positive gain that respect the balance bound.
    fn single_moves(&self, side: &mut [bool], max_imbalance: f64) {
        loop {
            let d = self.d_values(side);
            let count_b = side.iter().filter(|&&s| s).count() as i64;
            let count_a = self.n as i64 - count_b;
            let mut best: Option<(i64, usize)> = None;
            for u in 0..self.n {
                let (na, nb) = if side[u] {
                    (count_a + 1, count_b - 1)
                } else {
                    (count_a - 1, count_b + 1)
                };
                if na == 0 || nb == 0 || ((na - nb).abs() as f64) > max_imbalance {
                    continue;
                }
                if d[u] > 0 && best.is_none_or(|(g, _)| d[u] > g) {
                    best = Some((d[u], u));
                }
            }
            match best {
                Some((_, u)) => side[u] = !side[u],
                None => return,
            }
        }
    }
}

pub(crate) fn mix_seed(seed: u64, salt: u64) -> u64 {
    let mut z = seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// KL on the subgraph induced by `ids` (sorted ascending). Returns the side flags.
fn bisect_ids(
    graph: &SnnGraph,
    ids: &[NeuronId],
    opts: &PartitionOptions,
    seed: u64,
) -> (Vec<bool>, u64, u64) {
    let g = WeightedGraph::induced(graph, ids);
    let n = ids.len();
    let max_imbalance = (opts.balance_tolerance * n as f64).max((n % 2) as f64);
    let mut best: Option<(Vec<bool>, u64, u64)> = None;
    for r in 0..opts.restarts {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(mix_seed(seed, r as u64)));
        let mut side = vec![false; n];
        for &u in &order[n / 2..] {
            side[u] = true;
        }
        let initial = g.cut(&side);
        while g.kl_pass(&mut side) > 0 {}
        g.single_moves(&mut side, max_imbalance);
        let cut = g.cut(&side);
        if best.as_ref().is_none_or(|(_, c, _)| cut < *c) {
            best = Some((side, cut, initial));
        }
    }
    best.expect("at least one restart")
}

/// Balanced min-cut bipartition of the whole graph.
pub fn kl_bipartition(
    graph: &SnnGraph,
    balance_tolerance: f64,
    seed: u64,
) -> Result<Bipartition, PartitionError> {
    let opts = PartitionOptions {
        balance_tolerance,
        seed,
        ..PartitionOptions::default()
    };
    kl_bipartition_with(graph, &opts)
}

pub fn kl_bipartition_with(
    graph: &SnnGraph,
    opts: &PartitionOptions,
) -> Result<Bipartition, PartitionError> {
    opts.validate()?;
    if graph.neurons.len() < 2 {
        return Err(PartitionError::TooFewNeurons(graph.neurons.len()));
    }
    let mut ids: Vec<NeuronId> = graph.neurons.iter().map(|n| n.id).collect();
    ids.sort_unstable();
    let (side, cut_cost, initial_cut) = bisect_ids(graph, &ids, opts, opts.seed);
    let (mut a, mut b) = (Vec::new(), Vec::new());
    for (k, &id) in ids.iter().enumerate() {
        if side[k] { b.push(id) } else { a.push(id) }
    }
    Ok(Bipartition {
        a,
        b,
        cut_cost,
        initial_cut,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSynapse {
    pub pre_index: usize,
    pub post_index: usize,
    pub activations: u64,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cluster {
    pub id: usize,
    /// Neurons whose home is this cluster.
    pub members: Vec<NeuronId>,
    pub pre_neurons: Vec<NeuronId>,
    pub post_neurons: Vec<NeuronId>,
    pub synapses: Vec<ClusterSynapse>,
}

impl Cluster {
    pub fn total_activations(&self) -> u64 {
        self.synapses.iter().map(|s| s.activations).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.synapses.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CutEdge {
    pub pre_cluster: usize,
    pub post_cluster: usize,
    pub activations: u64,
    pub pre: NeuronId,
    pub post: NeuronId,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Clustering {
    pub clusters: Vec<Cluster>,
    pub cut_edges: Vec<CutEdge>,
    pub cut_cost: u64,
    pub crossbar: (usize, usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterExport {
    pub id: usize,
    pub pre: Vec<NeuronId>,
    pub post: Vec<NeuronId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusteringExport {
    pub clusters: Vec<ClusterExport>,
    pub cut_cost: u64,
}

impl Clustering {
    pub fn len(&self) -> usize {
        self.clusters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clusters.is_empty()
    }

    /// Home cluster of every neuron.
    pub fn home(&self) -> BTreeMap<NeuronId, usize> {
        self.clusters
            .iter()
            .flat_map(|c| c.members.iter().map(move |&id| (id, c.id)))
            .collect()
    }

    /// Activations on synapses whose endpoints share a home cluster.
    pub fn internal_activations(&self) -> u64 {
        self.clusters.iter().map(|c| c.total_activations()).sum::<u64>() - self.cut_cost
    }

    /// Every synaptic activation, counted once at its source.
    pub fn total_activations(&self) -> u64 {
        self.clusters.iter().map(|c| c.total_activations()).sum()
    }

    pub fn export(&self) -> ClusteringExport {
        ClusteringExport {
            clusters: self
                .clusters
                .iter()
                .map(|c| ClusterExport {
                    id: c.id,
                    pre: c.pre_neurons.clone(),
                    post: c.post_neurons.clone(),
                })
                .collect(),
            cut_cost: self.cut_cost,
        }
    }

    /// Capacity, index, coverage and conservation checks against `graph`.
    pub fn validate(&self, graph: &SnnGraph) -> Result<(), PartitionError> {
        let bad = |m: String| Err(PartitionError::Invalid(m));
        let (rows, cols) = self.crossbar;
        let mut seen_members = BTreeSet::new();
        for (k, c) in self.clusters.iter().enumerate() {
            if c.id != k {
                return bad(format!("cluster at position {k} has id {}", c.id));
            }
            if c.pre_neurons.len() > rows || c.post_neurons.len() > cols {
                return bad(format!(
                    "cluster {k} needs {}x{} cells, crossbar is {rows}x{cols}",
                    c.pre_neurons.len(),
                    c.post_neurons.len()
                ));
            }
            for s in &c.synapses {
                if s.pre_index >= c.pre_neurons.len() || s.post_index >= c.post_neurons.len() {
                    return bad(format!("cluster {k} has an out-of-range synapse index"));
                }
            }
            for &m in &c.members {
                if !seen_members.insert(m) {
                    return bad(format!("neuron {m} has more than one home cluster"));
                }
            }
        }
        if seen_members.len() != graph.neurons.len() {
            return bad(format!(
                "{} of {} neurons have a home cluster",
                seen_members.len(),
                graph.neurons.len()
            ));
        }
        let placed: usize = self.clusters.iter().map(|c| c.synapses.len()).sum();
        if placed != graph.synapses.len() {
            return bad(format!(
                "{placed} of {} synapses placed in clusters",
                graph.synapses.len()
            ));
        }
        let cut_sum: u64 = self.cut_edges.iter().map(|e| e.activations).sum();
        if cut_sum != self.cut_cost {
            return bad(format!("cut_cost {} != sum of cut edges {cut_sum}", self.cut_cost));
        }
        if self.internal_activations() + self.cut_cost != graph.total_activations() {
            return bad("activation conservation violated".into());
        }
        Ok(())
    }
}

/// Crossbar footprint of a set of home neurons: (distinct sources, receiving members).
fn footprint(incoming: &BTreeMap<NeuronId, Vec<usize>>, graph: &SnnGraph, ids: &[NeuronId]) -> (usize, usize) {
    let mut sources = BTreeSet::new();
    let mut posts = 0;
    for id in ids {
        if let Some(syn) = incoming.get(id) {
            posts += 1;
            sources.extend(syn.iter().map(|&k| graph.synapses[k].pre));
        }
    }
    (sources.len(), posts)
}

/// Recursive KL bisection until every cluster fits a `rows × cols` crossbar.
pub fn partition_workload(
    graph: &SnnGraph,
    crossbar: (usize, usize),
    opts: &PartitionOptions,
) -> Result<Clustering, PartitionError> {
    opts.validate()?;
    let (rows, cols) = crossbar;
    if rows == 0 || cols == 0 {
        return Err(PartitionError::InvalidOptions(format!(
            "crossbar {rows}x{cols} has no cells"
        )));
    }
    let mut incoming: BTreeMap<NeuronId, Vec<usize>> = BTreeMap::new();
    for (k, s) in graph.synapses.iter().enumerate() {
        incoming.entry(s.post).or_default().push(k);
    }
    for (&neuron, syn) in &incoming {
        let fan_in = syn
            .iter()
            .map(|&k| graph.synapses[k].pre)
            .collect::<BTreeSet<_>>()
            .len();
        if fan_in > rows {
            return Err(PartitionError::FanInExceedsRows {
                neuron,
                fan_in,
                rows,
            });
        }
    }

    let mut all: Vec<NeuronId> = graph.neurons.iter().map(|n| n.id).collect();
    all.sort_unstable();
    let mut parts: Vec<Vec<NeuronId>> = Vec::new();
    let mut stack = vec![all];
    let mut bisections = 0u64;
    while let Some(ids) = stack.pop() {
        let (src, posts) = footprint(&incoming, graph, &ids);
        if (src <= rows && posts <= cols) || ids.len() < 2 {
            parts.push(ids);
            continue;
        }
        let (side, _, _) = bisect_ids(graph, &ids, opts, mix_seed(opts.seed, bisections));
        bisections += 1;
        let (mut a, mut b) = (Vec::new(), Vec::new());
        for (k, &id) in ids.iter().enumerate() {
            if side[k] { b.push(id) } else { a.push(id) }
        }
        // Pop order visits `a` first.
        stack.push(b);
        stack.push(a);
    }

    let home: BTreeMap<NeuronId, usize> = parts
        .iter()
        .enumerate()
        .flat_map(|(c, ids)| ids.iter().map(move |&id| (id, c)))
        .collect();
    let mut clusters = Vec::with_capacity(parts.len());
    let mut cut_edges = Vec::new();
    for (cid, members) in parts.into_iter().enumerate() {
        let post_neurons: Vec<NeuronId> = members
            .iter()
            .copied()
            .filter(|id| incoming.contains_key(id))
            .collect();
        let mut syn_ids: Vec<usize> = post_neurons
            .iter()
            .flat_map(|id| incoming[id].iter().copied())
            .collect();
        syn_ids.sort_unstable();
        let pre_neurons: Vec<NeuronId> = syn_ids
            .iter()
            .map(|&k| graph.synapses[k].pre)
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let pre_index: BTreeMap<NeuronId, usize> =
            pre_neurons.iter().enumerate().map(|(k, &id)| (id, k)).collect();
        let post_index: BTreeMap<NeuronId, usize> =
            post_neurons.iter().enumerate().map(|(k, &id)| (id, k)).collect();
        let synapses = syn_ids
            .iter()
            .map(|&k| {
                let s = &graph.synapses[k];
                if home[&s.pre] != cid {
                    cut_edges.push(CutEdge {
                        pre_cluster: home[&s.pre],
                        post_cluster: cid,
                        activations: s.activations,
                        pre: s.pre,
                        post: s.post,
                    });
                }
                ClusterSynapse {
                    pre_index: pre_index[&s.pre],
                    post_index: post_index[&s.post],
                    activations: s.activations,
                    weight: s.weight,
                }
            })
            .collect();
        clusters.push(Cluster {
            id: cid,
            members,
            pre_neurons,
            post_neurons,
            synapses,
        });
    }
    let cut_cost = cut_edges.iter().map(|e| e.activations).sum();
    Ok(Clustering {
        clusters,
        cut_edges,
        cut_cost,
        crossbar,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::workload::{Neuron, NeuronKind, Synapse};

    fn graph(n: u32, edges: &[(u32, u32, u64)]) -> SnnGraph {
        SnnGraph {
            neurons: (0..n)
                .map(|id| Neuron {
                    id,
                    kind: NeuronKind::Hidden,
                })
                .collect(),
            synapses: edges
                .iter()
                .map(|&(pre, post, activations)| Synapse {
                    pre,
                    post,
                    weight: 1.0,
                    activations,
                })
                .collect(),
        }
    }

    #[test]
    fn two_neurons_return_the_only_split() {
        let g = graph(2, &[(0, 1, 7)]);
        let p = kl_bipartition(&g, 0.1, 3).unwrap();
        assert_eq!((p.a.len(), p.b.len(), p.cut_cost), (1, 1, 7));
    }

    #[test]
    fn disconnected_cliques_cut_nothing() {
        let mut edges = Vec::new();
        for base in [0, 5] {
            for u in base..base + 5 {
                for v in base..base + 5 {
                    if u != v {
                        edges.push((u, v, 3));
                    }
                }
            }
        }
        for seed in 0..5 {
            let p = kl_bipartition(&graph(10, &edges), 0.1, seed).unwrap();
            assert_eq!(p.cut_cost, 0, "seed {seed}");
            assert!(p.cut_cost <= p.initial_cut);
        }
    }

    #[test]
    fn fitting_graph_is_one_cluster() {
        let g = graph(4, &[(0, 1, 2), (1, 2, 3), (2, 3, 4)]);
        let c = partition_workload(&g, (8, 8), &PartitionOptions::default()).unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!(c.cut_cost, 0);
        c.validate(&g).unwrap();
    }

    #[test]
    fn oversized_fan_in_names_neuron() {
        let g = graph(5, &[(0, 4, 1), (1, 4, 1), (2, 4, 1), (3, 4, 1)]);
        assert_eq!(
            partition_workload(&g, (3, 8), &PartitionOptions::default()).unwrap_err(),
            PartitionError::FanInExceedsRows {
                neuron: 4,
                fan_in: 4,
                rows: 3
            }
        );
    }

    #[test]
    fn export_shape() {
        let g = graph(3, &[(0, 1, 2), (1, 2, 3)]);
        let c = partition_workload(&g, (2, 1), &PartitionOptions::default()).unwrap();
        c.validate(&g).unwrap();
        let json = serde_json::to_value(c.export()).unwrap();
        assert!(json["clusters"][0]["pre"].is_array());
        assert_eq!(json["cut_cost"], c.cut_cost);
    }
}
