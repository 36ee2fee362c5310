//! Weighted directed mobility networks and their decompositions.

use std::collections::HashMap;

use thiserror::Error;

use crate::ingest::{FlowTable, FlowYear, Scope};

mod communities;
mod hits;
mod map_equation;
mod partition;
mod s_core;

pub use communities::{
    edge_betweenness, edge_betweenness_communities, modularity, GirvanNewmanResult, RemovalStep,
};
pub use hits::{hits_scores, HitsConfig, HitsScores};
pub use map_equation::{
    codelength, map_equation_communities, MapEquationResult, TELEPORTATION,
};
pub use partition::{congruence, score_partition, union_partition, Partition, ScoreCutoff};
pub use s_core::{s_core_decomposition, SCoreResult};

#[derive(Debug, Error)]
pub enum NetworkError {
    #[error("network construction requires an internal-scope flow table")]
    ExternalScope,
    #[error("flow table contains a self-flow at '{0}'")]
    SelfFlow(String),
    #[error("node '{0}' is not in the flow table universe")]
    UnknownNode(String),
    #[error("operation undefined on an all-zero network")]
    AllZero,
    #[error("score vectors must cover the same nodes")]
    NodeMismatch,
    #[error("quantile must lie in [0, 1], got {0}")]
    BadQuantile(f64),
    #[error("{0}")]
    Degenerate(String),
}

/// Which sums define node strength.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StrengthMode {
    /// Column sums: weight flowing into the node.
    In,
    /// Row sums: weight flowing out of the node.
    Out,
    /// In plus out.
    Total,
}

/// Time slice used to build a network from a flow table.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NetworkTime {
    /// Sum every entry of the table.
    Cumulative,
    /// Only entries of one year.
    Year(i32),
}

/// Weighted directed network over a fixed, sorted node list.
///
/// Weights sit in a dense row-major matrix; `w[i][j]` is the flow from node
/// `i` to node `j` and the diagonal is zero.
#[derive(Debug, Clone, PartialEq)]
pub struct MobilityNetwork {
    nodes: Vec<String>,
    index: HashMap<String, usize>,
    w: Vec<f64>,
}

impl MobilityNetwork {
    /// Empty network over `nodes` (sorted and deduplicated).
    pub fn new(mut nodes: Vec<String>) -> Self {
        nodes.sort();
        nodes.dedup();
        let index = nodes.iter().enumerate().map(|(i, n)| (n.clone(), i)).collect();
        let n = nodes.len();
        MobilityNetwork { nodes, index, w: vec![0.0; n * n] }
    }

    /// Build from an internal-scope flow table, either cumulatively or for a
    /// single year. Self-flows are rejected, not silently dropped: losing
    /// them would break flow conservation.
    pub fn from_flow_table(table: &FlowTable, time: NetworkTime) -> Result<Self, NetworkError> {
        if table.scope != Scope::Internal {
            return Err(NetworkError::ExternalScope);
        }
        let mut net = MobilityNetwork::new(table.universe.clone());
        for (year, sender, receiver, count) in table.entries() {
            let keep = match time {
                NetworkTime::Cumulative => true,
                NetworkTime::Year(y) => year == FlowYear::Year(y),
            };
            if !keep || count == 0.0 {
                continue;
            }
            if sender == receiver {
                return Err(NetworkError::SelfFlow(sender.to_string()));
            }
            let i = net.idx(sender)?;
            let j = net.idx(receiver)?;
            net.w[i * net.nodes.len() + j] += count;
        }
        Ok(net)
    }

    fn idx(&self, node: &str) -> Result<usize, NetworkError> {
        self.index
            .get(node)
            .copied()
            .ok_or_else(|| NetworkError::UnknownNode(node.to_string()))
    }

    pub fn n(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[String] {
        &self.nodes
    }

    pub fn node_index(&self, node: &str) -> Option<usize> {
        self.index.get(node).copied()
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.w[i * self.nodes.len() + j]
    }

    /// Set a directed weight. Diagonal writes and negative weights panic:
    /// both would corrupt every decomposition downstream.
    pub fn set_weight(&mut self, i: usize, j: usize, w: f64) {
        assert!(i != j, "self-weights are not representable");
        assert!(w >= 0.0 && w.is_finite(), "weights must be finite and non-negative");
        self.w[i * self.nodes.len() + j] = w;
    }

    pub fn weights(&self) -> &[f64] {
        &self.w
    }

    pub fn total_weight(&self) -> f64 {
        self.w.iter().sum()
    }

    pub fn is_zero(&self) -> bool {
        self.w.iter().all(|&x| x == 0.0)
    }

    /// Node strengths under `mode`.
    pub fn node_strength(&self, mode: StrengthMode) -> Vec<f64> {
        let n = self.nodes.len();
        let mut out = vec![0.0; n];
        for i in 0..n {
            for j in 0..n {
                let w = self.w[i * n + j];
                match mode {
                    StrengthMode::Out => out[i] += w,
                    StrengthMode::In => out[j] += w,
                    StrengthMode::Total => {
                        out[i] += w;
                        out[j] += w;
                    }
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::Level;

    fn table() -> FlowTable {
        let mut t = FlowTable::new(
            Scope::Internal,
            Level::Region,
            (2000, 2001),
            vec!["A".into(), "B".into(), "C".into()],
        );
        t.add(FlowYear::Year(2000), "A", "B", 2.0);
        t.add(FlowYear::Year(2001), "A", "B", 1.0);
        t.add(FlowYear::Year(2001), "B", "C", 5.0);
        t
    }

    #[test]
    fn cumulative_build_sums_years() {
        let net = MobilityNetwork::from_flow_table(&table(), NetworkTime::Cumulative).unwrap();
        let (a, b, c) = (0, 1, 2);
        assert_eq!(net.weight(a, b), 3.0);
        assert_eq!(net.weight(b, c), 5.0);
        assert_eq!(net.weight(b, a), 0.0);
    }

    #[test]
    fn single_year_build_slices() {
        let net = MobilityNetwork::from_flow_table(&table(), NetworkTime::Year(2000)).unwrap();
        assert_eq!(net.weight(0, 1), 2.0);
        assert_eq!(net.total_weight(), 2.0);
    }

    #[test]
    fn external_scope_is_rejected() {
        let t = FlowTable::new(Scope::All, Level::Region, (2000, 2001), vec!["A".into()]);
        assert!(matches!(
            MobilityNetwork::from_flow_table(&t, NetworkTime::Cumulative),
            Err(NetworkError::ExternalScope)
        ));
    }

    #[test]
    fn strengths_follow_the_mode() {
        let net = MobilityNetwork::from_flow_table(&table(), NetworkTime::Cumulative).unwrap();
        assert_eq!(net.node_strength(StrengthMode::Out), vec![3.0, 5.0, 0.0]);
        assert_eq!(net.node_strength(StrengthMode::In), vec![0.0, 3.0, 5.0]);
        assert_eq!(net.node_strength(StrengthMode::Total), vec![3.0, 8.0, 5.0]);
    }

    #[test]
    fn flow_totals_are_conserved_in_strengths() {
        let net = MobilityNetwork::from_flow_table(&table(), NetworkTime::Cumulative).unwrap();
        let total = table().total();
        assert_eq!(net.node_strength(StrengthMode::Out).iter().sum::<f64>(), total);
        assert_eq!(net.node_strength(StrengthMode::In).iter().sum::<f64>(), total);
    }
}
