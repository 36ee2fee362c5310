//! s-core decomposition of a weighted network.
//!
//! The s-core generalizes the k-core to weighted graphs: the core at
//! threshold `s` is what survives repeatedly deleting every node whose
//! strength on the *current* subnetwork is at or below `s`. Thresholds are
//! not free parameters; each one is the minimum strength found in the
//! previous core, so the decomposition is fully data-driven. Shell `k` holds
//! the nodes peeled off between thresholds `k-1` and `k`.

use super::{MobilityNetwork, StrengthMode};

#[derive(Debug, Clone)]
pub struct SCoreResult {
    pub mode: StrengthMode,
    /// Strictly increasing peel thresholds; `thresholds[k]` produced shell `k`.
    pub thresholds: Vec<f64>,
    /// Shell index per node, aligned with the network's node order.
    pub shell: Vec<usize>,
    pub nodes: Vec<String>,
}

impl SCoreResult {
    /// Nodes of the innermost (deepest surviving) core.
    pub fn innermost(&self) -> Vec<&str> {
        let top = self.shell.iter().copied().max().unwrap_or(0);
        self.nodes
            .iter()
            .zip(&self.shell)
            .filter(|(_, &s)| s == top)
            .map(|(n, _)| n.as_str())
            .collect()
    }
}

/// Strengths restricted to the surviving subnetwork.
fn strengths(net: &MobilityNetwork, alive: &[bool], mode: StrengthMode) -> Vec<f64> {
    let n = net.n();
    let mut out = vec![0.0; n];
    for i in 0..n {
        if !alive[i] {
            continue;
        }
        for j in 0..n {
            if i == j || !alive[j] {
                continue;
            }
            let w = net.weight(i, j);
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

/// Peel the network into s-shells.
///
/// Each phase fixes the threshold at the minimum surviving strength, then
/// removes nodes at or below it until the removal stabilizes (deletions can
/// drag other nodes under the same threshold). A zero network collapses to a
/// single shell at threshold 0.
pub fn s_core_decomposition(net: &MobilityNetwork, mode: StrengthMode) -> SCoreResult {
    let n = net.n();
    let mut alive = vec![true; n];
    let mut shell = vec![0usize; n];
    let mut thresholds = Vec::new();
    let mut remaining = n;
    let mut k = 0usize;

    while remaining > 0 {
        let s = strengths(net, &alive, mode);
        let threshold = (0..n)
            .filter(|&i| alive[i])
            .map(|i| s[i])
            .fold(f64::INFINITY, f64::min);
        thresholds.push(threshold);
        // Inner sweeps: removing a node can pull its neighbors below the
        // threshold, so iterate until no node at or below it remains.
        let mut s = s;
        loop {
            let doomed: Vec<usize> =
                (0..n).filter(|&i| alive[i] && s[i] <= threshold).collect();
            if doomed.is_empty() {
                break;
            }
            for i in doomed {
                alive[i] = false;
                shell[i] = k;
                remaining -= 1;
            }
            s = strengths(net, &alive, mode);
        }
        k += 1;
    }

    SCoreResult { mode, thresholds, shell, nodes: net.nodes().to_vec() }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn undirected(pairs: &[(usize, usize, f64)], n: usize) -> MobilityNetwork {
        let mut net = MobilityNetwork::new((0..n).map(|i| format!("N{i}")).collect());
        for &(i, j, w) in pairs {
            net.set_weight(i, j, w);
            net.set_weight(j, i, w);
        }
        net
    }

    #[test]
    fn chain_peels_into_two_shells() {
        // 0 -1- 1 -2- 2 (total strengths 1, 3, 2): threshold 1 removes node 0,
        // the surviving pair has strengths [2, 2] and leaves at threshold 2.
        let mut net = MobilityNetwork::new(vec!["a".into(), "b".into(), "c".into()]);
        net.set_weight(0, 1, 1.0);
        net.set_weight(1, 2, 2.0);
        let r = s_core_decomposition(&net, StrengthMode::Total);
        assert_eq!(r.thresholds, vec![1.0, 2.0]);
        assert_eq!(r.shell, vec![0, 1, 1]);
        assert_eq!(r.innermost(), vec!["b", "c"]);
    }

    #[test]
    fn zero_network_is_one_shell_at_zero() {
        let net = MobilityNetwork::new(vec!["a".into(), "b".into()]);
        let r = s_core_decomposition(&net, StrengthMode::Total);
        assert_eq!(r.thresholds, vec![0.0]);
        assert_eq!(r.shell, vec![0, 0]);
    }

    #[test]
    fn removal_cascades_within_one_threshold() {
        // Star: the hub is strong only because of its leaves. Removing the
        // leaves at the first threshold drags the hub under it too.
        let net = undirected(&[(0, 1, 1.0), (0, 2, 1.0), (0, 3, 1.0)], 4);
        let r = s_core_decomposition(&net, StrengthMode::Total);
        assert_eq!(r.thresholds, vec![2.0]);
        assert_eq!(r.shell, vec![0, 0, 0, 0], "everything belongs to the same shell");
    }

    #[test]
    fn thresholds_strictly_increase() {
        let net = undirected(
            &[(0, 1, 1.0), (1, 2, 2.0), (2, 3, 3.0), (3, 0, 4.0), (0, 2, 0.5), (1, 3, 2.5)],
            4,
        );
        for mode in [StrengthMode::In, StrengthMode::Out, StrengthMode::Total] {
            let r = s_core_decomposition(&net, mode);
            for pair in r.thresholds.windows(2) {
                assert!(pair[0] < pair[1], "thresholds must strictly increase: {:?}", r.thresholds);
            }
        }
    }

    #[test]
    fn directed_modes_differ() {
        let mut net = MobilityNetwork::new(vec!["a".into(), "b".into(), "c".into()]);
        net.set_weight(0, 1, 5.0);
        net.set_weight(1, 2, 5.0);
        net.set_weight(2, 1, 1.0);
        let r_in = s_core_decomposition(&net, StrengthMode::In);
        let r_out = s_core_decomposition(&net, StrengthMode::Out);
        assert_ne!(r_in.shell, r_out.shell);
    }
}
