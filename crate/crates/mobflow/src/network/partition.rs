//! Node partitions and score-based splits.
//!
//! A [`Partition`] assigns every node a group label. Binary partitions from
//! [`score_partition`] use label 1 for the high group and 0 for the low
//! group, so labels are comparable across partitions of the same node set
//! and [`congruence`] can count label agreement directly.

use super::NetworkError;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// A labeling of a fixed node set into groups.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    pub nodes: Vec<String>,
    pub labels: Vec<u32>,
}

impl Partition {
    pub fn new(nodes: Vec<String>, labels: Vec<u32>) -> Self {
        assert_eq!(nodes.len(), labels.len(), "one label per node");
        Partition { nodes, labels }
    }

    /// Number of distinct groups.
    pub fn n_groups(&self) -> usize {
        let mut seen: Vec<u32> = self.labels.clone();
        seen.sort_unstable();
        seen.dedup();
        seen.len()
    }

    /// Relabels groups in order of first appearance, starting from 0.
    pub fn canonical(&self) -> Partition {
        let mut remap: BTreeMap<u32, u32> = BTreeMap::new();
        let mut labels = Vec::with_capacity(self.labels.len());
        for &l in &self.labels {
            let next = remap.len() as u32;
            labels.push(*remap.entry(l).or_insert(next));
        }
        Partition { nodes: self.nodes.clone(), labels }
    }

    fn by_name(&self) -> BTreeMap<&str, u32> {
        self.nodes.iter().map(String::as_str).zip(self.labels.iter().copied()).collect()
    }
}

/// Rule deciding which scores fall in the high group.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreCutoff {
    /// High when the score reaches the given quantile of the score
    /// distribution (inclusive at the threshold).
    Quantile(f64),
    /// High when the score strictly exceeds the given value.
    Absolute(f64),
}

/// Splits nodes into a binary high (1) / low (0) partition by score.
pub fn score_partition(
    nodes: &[String],
    scores: &[f64],
    cutoff: ScoreCutoff,
) -> Result<Partition, NetworkError> {
    assert_eq!(nodes.len(), scores.len(), "one score per node");
    if nodes.is_empty() {
        return Err(NetworkError::Degenerate("empty node set".into()));
    }
    let high: Vec<bool> = match cutoff {
        ScoreCutoff::Quantile(q) => {
            if !(0.0..=1.0).contains(&q) || !q.is_finite() {
                return Err(NetworkError::BadQuantile(q));
            }
            let threshold = crate::stats::quantile_type7(scores, q);
            scores.iter().map(|&s| s >= threshold).collect()
        }
        ScoreCutoff::Absolute(c) => scores.iter().map(|&s| s > c).collect(),
    };
    let labels = high.iter().map(|&h| if h { 1 } else { 0 }).collect();
    Ok(Partition::new(nodes.to_vec(), labels))
}

/// Binary partition whose high group is the union of two high groups.
///
/// Both inputs must label the same node set; group 1 is treated as high.
pub fn union_partition(a: &Partition, b: &Partition) -> Result<Partition, NetworkError> {
    let bm = b.by_name();
    if a.nodes.len() != b.nodes.len() {
        return Err(NetworkError::NodeMismatch);
    }
    let mut nodes: Vec<String> = a.nodes.clone();
    nodes.sort();
    let am = a.by_name();
    let mut labels = Vec::with_capacity(nodes.len());
    for name in &nodes {
        let la = *am.get(name.as_str()).ok_or(NetworkError::NodeMismatch)?;
        let lb = *bm.get(name.as_str()).ok_or(NetworkError::NodeMismatch)?;
        labels.push(if la == 1 || lb == 1 { 1 } else { 0 });
    }
    Ok(Partition::new(nodes, labels))
}

/// Fraction of nodes carrying the same label in both partitions.
pub fn congruence(a: &Partition, b: &Partition) -> Result<f64, NetworkError> {
    if a.nodes.len() != b.nodes.len() || a.nodes.is_empty() {
        return Err(NetworkError::NodeMismatch);
    }
    let bm = b.by_name();
    let mut agree = 0usize;
    for (name, &la) in a.nodes.iter().zip(&a.labels) {
        let lb = *bm.get(name.as_str()).ok_or(NetworkError::NodeMismatch)?;
        if la == lb {
            agree += 1;
        }
    }
    Ok(agree as f64 / a.nodes.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("R{i}")).collect()
    }

    #[test]
    fn canonical_relabels_by_first_appearance() {
        let p = Partition::new(names(4), vec![7, 2, 7, 9]);
        assert_eq!(p.canonical().labels, vec![0, 1, 0, 2]);
        assert_eq!(p.n_groups(), 3);
    }

    #[test]
    fn quantile_split_is_inclusive_at_the_threshold() {
        // Median of [1,2,3] is exactly 2, which belongs to the high group.
        let p = score_partition(&names(3), &[1.0, 2.0, 3.0], ScoreCutoff::Quantile(0.5)).unwrap();
        assert_eq!(p.labels, vec![0, 1, 1]);
    }

    #[test]
    fn quantile_split_interpolates_between_order_statistics() {
        // Median of [1,2,3,4] is 2.5, so only 3 and 4 reach it.
        let p =
            score_partition(&names(4), &[1.0, 2.0, 3.0, 4.0], ScoreCutoff::Quantile(0.5)).unwrap();
        assert_eq!(p.labels, vec![0, 0, 1, 1]);
    }

    #[test]
    fn absolute_split_is_strict_at_the_cutoff() {
        let p =
            score_partition(&names(3), &[1.0, 2.0, 3.0], ScoreCutoff::Absolute(2.0)).unwrap();
        assert_eq!(p.labels, vec![0, 0, 1], "score equal to the cutoff stays low");
    }

    #[test]
    fn quantile_outside_unit_interval_is_rejected() {
        let err =
            score_partition(&names(2), &[1.0, 2.0], ScoreCutoff::Quantile(1.5)).unwrap_err();
        assert!(matches!(err, NetworkError::BadQuantile(q) if q == 1.5));
    }

    #[test]
    fn union_marks_high_when_either_side_is_high() {
        let a = Partition::new(names(3), vec![1, 0, 0]);
        let b = Partition::new(names(3), vec![0, 1, 0]);
        let u = union_partition(&a, &b).unwrap();
        assert_eq!(u.labels, vec![1, 1, 0]);
    }

    #[test]
    fn union_aligns_nodes_by_name_not_position() {
        let a = Partition::new(vec!["X".into(), "Y".into()], vec![1, 0]);
        let b = Partition::new(vec!["Y".into(), "X".into()], vec![1, 0]);
        let u = union_partition(&a, &b).unwrap();
        assert_eq!(u.nodes, vec!["X".to_string(), "Y".to_string()]);
        assert_eq!(u.labels, vec![1, 1]);
    }

    #[test]
    fn congruence_counts_label_agreement() {
        let a = Partition::new(names(4), vec![1, 1, 0, 0]);
        let b = Partition::new(names(4), vec![1, 0, 0, 0]);
        assert_eq!(congruence(&a, &b).unwrap(), 0.75);
        assert_eq!(congruence(&a, &a).unwrap(), 1.0);
    }

    #[test]
    fn congruence_rejects_mismatched_node_sets() {
        let a = Partition::new(names(3), vec![0, 0, 0]);
        let b = Partition::new(vec!["R0".into(), "R1".into(), "Q9".into()], vec![0, 0, 0]);
        assert!(matches!(congruence(&a, &b), Err(NetworkError::NodeMismatch)));
    }
}
