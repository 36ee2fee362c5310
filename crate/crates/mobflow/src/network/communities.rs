//! Girvan-Newman community detection with weighted edge betweenness.
//!
//! Shortest paths treat an edge of weight `w` as having length `1/w`: heavy
//! corridors are short. Betweenness is accumulated over all ordered node
//! pairs (the network is directed); the edge carrying the most shortest-path
//! traffic is removed, components are re-read, and the partition with the
//! highest weighted modularity along the removal sequence wins.
//!
//! Path-length ties are decided within a relative tolerance of 1e-9 so that
//! symmetric constructions count all their equal-cost paths; the brute-force
//! test oracle applies the same rule.

use super::{MobilityNetwork, NetworkError, Partition};

const TIE_TOL: f64 = 1e-9;

fn tol(d: f64) -> f64 {
    TIE_TOL * (1.0 + d.abs())
}

#[derive(Debug, Clone, PartialEq)]
struct HeapItem {
    dist: f64,
    node: usize,
}

impl Eq for HeapItem {}

impl Ord for HeapItem {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        // Min-heap on distance via reversed total order; ties on node id
        // keep the pop order deterministic.
        other
            .dist
            .total_cmp(&self.dist)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for HeapItem {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

/// Weighted edge betweenness for every directed edge, as a dense row-major
/// matrix aligned with the weight matrix (zero where there is no edge).
pub fn edge_betweenness(net: &MobilityNetwork) -> Vec<f64> {
    betweenness_of(net.weights(), net.n())
}

fn betweenness_of(w: &[f64], n: usize) -> Vec<f64> {
    let mut bc = vec![0.0; n * n];
    // Adjacency lists of (target, length).
    let adj: Vec<Vec<(usize, f64)>> = (0..n)
        .map(|i| {
            (0..n)
                .filter(|&j| j != i && w[i * n + j] > 0.0)
                .map(|j| (j, 1.0 / w[i * n + j]))
                .collect()
        })
        .collect();

    let mut dist = vec![0.0f64; n];
    let mut sigma = vec![0.0f64; n];
    let mut preds: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut settled = vec![false; n];
    let mut order: Vec<usize> = Vec::with_capacity(n);
    let mut delta = vec![0.0f64; n];

    for s in 0..n {
        dist.fill(f64::INFINITY);
        sigma.fill(0.0);
        settled.fill(false);
        delta.fill(0.0);
        for p in preds.iter_mut() {
            p.clear();
        }
        order.clear();

        dist[s] = 0.0;
        sigma[s] = 1.0;
        let mut heap = std::collections::BinaryHeap::new();
        heap.push(HeapItem { dist: 0.0, node: s });
        while let Some(HeapItem { node: u, .. }) = heap.pop() {
            if settled[u] {
                continue;
            }
            settled[u] = true;
            order.push(u);
            for &(v, len) in &adj[u] {
                let nd = dist[u] + len;
                if !dist[v].is_finite() || nd < dist[v] - tol(dist[v]) {
                    dist[v] = nd;
                    sigma[v] = sigma[u];
                    preds[v].clear();
                    preds[v].push(u);
                    heap.push(HeapItem { dist: nd, node: v });
                } else if (nd - dist[v]).abs() <= tol(dist[v]) {
                    sigma[v] += sigma[u];
                    preds[v].push(u);
                }
            }
        }

        // Dependency accumulation in reverse settle order.
        for &v in order.iter().rev() {
            for &u in &preds[v] {
                let c = sigma[u] / sigma[v] * (1.0 + delta[v]);
                bc[u * n + v] += c;
                delta[u] += c;
            }
        }
    }
    bc
}

/// Weighted directed modularity of a labeling.
pub fn modularity(net: &MobilityNetwork, labels: &[u32]) -> Result<f64, NetworkError> {
    let n = net.n();
    assert_eq!(labels.len(), n, "one label per node");
    let m = net.total_weight();
    if m == 0.0 {
        return Err(NetworkError::AllZero);
    }
    let sout = net.node_strength(super::StrengthMode::Out);
    let sin = net.node_strength(super::StrengthMode::In);
    let mut q = 0.0;
    for i in 0..n {
        for j in 0..n {
            if labels[i] == labels[j] {
                q += net.weight(i, j) / m - sout[i] * sin[j] / (m * m);
            }
        }
    }
    Ok(q)
}

#[derive(Debug, Clone)]
pub struct RemovalStep {
    pub sender: String,
    pub receiver: String,
    pub betweenness: f64,
    pub modularity_after: f64,
    pub communities_after: usize,
}

#[derive(Debug, Clone)]
pub struct GirvanNewmanResult {
    pub partition: Partition,
    pub modularity: f64,
    /// Every edge removal in order, with the modularity it produced.
    pub history: Vec<RemovalStep>,
}

/// Weakly connected components of a working weight matrix.
fn components(w: &[f64], n: usize) -> Vec<u32> {
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for i in 0..n {
        for j in 0..n {
            if w[i * n + j] > 0.0 {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
    }
    // Relabel roots to 0..k in first-appearance order.
    let mut label = vec![u32::MAX; n];
    let mut next = 0u32;
    let mut out = vec![0u32; n];
    for i in 0..n {
        let r = find(&mut parent, i);
        if label[r] == u32::MAX {
            label[r] = next;
            next += 1;
        }
        out[i] = label[r];
    }
    out
}

/// Full Girvan-Newman sweep; returns the best-modularity partition.
pub fn edge_betweenness_communities(
    net: &MobilityNetwork,
) -> Result<GirvanNewmanResult, NetworkError> {
    let n = net.n();
    if net.is_zero() || n == 0 {
        return Err(NetworkError::AllZero);
    }
    let mut work = net.weights().to_vec();

    let initial = components(&work, n);
    let mut best_labels = initial.clone();
    let mut best_q = modularity(net, &initial)?;
    let mut history = Vec::new();

    loop {
        let edges_left = work.iter().any(|&x| x > 0.0);
        if !edges_left {
            break;
        }
        let bc = betweenness_of(&work, n);
        // Highest betweenness among surviving edges; ties fall to the
        // lexicographically smallest (i, j).
        let mut target: Option<(usize, usize)> = None;
        let mut top = f64::NEG_INFINITY;
        for i in 0..n {
            for j in 0..n {
                if work[i * n + j] > 0.0 && bc[i * n + j] > top {
                    top = bc[i * n + j];
                    target = Some((i, j));
                }
            }
        }
        let (i, j) = target.expect("edges_left implies a target edge");
        work[i * n + j] = 0.0;
        let labels = components(&work, n);
        let q = modularity(net, &labels)?;
        history.push(RemovalStep {
            sender: net.nodes()[i].clone(),
            receiver: net.nodes()[j].clone(),
            betweenness: top,
            modularity_after: q,
            communities_after: labels.iter().copied().max().map(|x| x as usize + 1).unwrap_or(0),
        });
        if q > best_q {
            best_q = q;
            best_labels = labels;
        }
    }

    Ok(GirvanNewmanResult {
        partition: Partition::new(net.nodes().to_vec(), best_labels),
        modularity: best_q,
        history,
    })
}
