//! Two-sample permutation tests for location, scale, and their joint
//! rank-based aspect, with the max-style multi-aspect correction.
//!
//! All three statistics are evaluated on one shared stream of relabelings of
//! the pooled sample, which is what makes the correction
//! `corrected = max(raw, joint)` a valid combination: the joint p-value is
//! computed from exactly the same arrangements as the marginal ones.

use super::rank::mid_ranks;
use super::robust::{mad, median};
use super::{PValueMode, StatsError, TestResult};
use serde::{Deserialize, Serialize};

/// Which aspect of the two samples a partial test targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestKind {
    Location,
    Scale,
    Joint,
}

/// Multi-aspect test outcome with max-corrected marginal p-values.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NpcAnovaResult {
    pub location_statistic: f64,
    pub scale_statistic: f64,
    pub joint_statistic: f64,
    pub p_location_raw: f64,
    pub p_scale_raw: f64,
    pub p_joint: f64,
    pub p_location_corrected: f64,
    pub p_scale_corrected: f64,
    pub n_permutations: usize,
    pub seed: u64,
    pub mode: PValueMode,
    pub degenerate: bool,
}

const LOCATION: usize = 0;
const SCALE: usize = 1;
const JOINT: usize = 2;

struct PermOutcome {
    observed: [f64; 3],
    /// Arrangements whose statistic reaches the observed one, ties included.
    exceed: [usize; 3],
    total: usize,
    mode: PValueMode,
    degenerate: bool,
}

impl PermOutcome {
    fn p_value(&self, aspect: usize) -> f64 {
        if self.degenerate {
            return 1.0;
        }
        match self.mode {
            PValueMode::Exhaustive => self.exceed[aspect] as f64 / self.total as f64,
            PValueMode::MonteCarlo => {
                (1 + self.exceed[aspect]) as f64 / (1 + self.total) as f64
            }
        }
    }
}

/// All three aspect statistics for one assignment of the pooled sample.
///
/// `raw_ranks` are the mid-ranks of the pooled raw observations, which do not
/// change across relabelings. `g1`/`g2`/`devs` are scratch buffers.
fn three_statistics(
    pool: &[f64],
    raw_ranks: &[f64],
    in_g1: &[bool],
    g1: &mut Vec<f64>,
    g2: &mut Vec<f64>,
    devs: &mut Vec<f64>,
) -> [f64; 3] {
    g1.clear();
    g2.clear();
    for (i, &x) in pool.iter().enumerate() {
        if in_g1[i] {
            g1.push(x);
        } else {
            g2.push(x);
        }
    }
    let n1 = g1.len() as f64;
    let n2 = g2.len() as f64;
    let (m1, m2) = (median(g1), median(g2));
    let location = (m1 - m2) * (m1 - m2);
    let (s1, s2) = (mad(g1), mad(g2));
    let scale = (s1 - s2) * (s1 - s2);

    // Mann-Whitney U of group 1 from the pooled raw ranks.
    let r1: f64 = (0..pool.len()).filter(|&i| in_g1[i]).map(|i| raw_ranks[i]).sum();
    let u1 = r1 - n1 * (n1 + 1.0) / 2.0;
    let u2 = n1 * n2 - u1;

    // The same construction on squared deviations from each group's own
    // median; these depend on the relabeling, so ranks are recomputed.
    devs.clear();
    for (i, &x) in pool.iter().enumerate() {
        let m = if in_g1[i] { m1 } else { m2 };
        devs.push((x - m) * (x - m));
    }
    let dev_ranks = mid_ranks(devs);
    let d1: f64 = (0..pool.len()).filter(|&i| in_g1[i]).map(|i| dev_ranks[i]).sum();
    let v1 = d1 - n1 * (n1 + 1.0) / 2.0;
    let v2 = n1 * n2 - v1;

    let joint = u1.max(u2).max(v1.max(v2));
    [location, scale, joint]
}

/// Number of k-subsets of n, or None once it exceeds `cap`.
fn binomial_at_most(n: usize, k: usize, cap: usize) -> Option<usize> {
    let k = k.min(n - k);
    let mut c: u128 = 1;
    for i in 1..=k {
        c = c * (n - k + i) as u128 / i as u128;
        if c > cap as u128 {
            return None;
        }
    }
    Some(c as usize)
}

/// Visits every k-subset of {0..n} in lexicographic order.
fn for_each_combination(n: usize, k: usize, mut f: impl FnMut(&[usize])) {
    let mut c: Vec<usize> = (0..k).collect();
    loop {
        f(&c);
        let mut i = k;
        while i > 0 && c[i - 1] == i - 1 + n - k {
            i -= 1;
        }
        if i == 0 {
            return;
        }
        c[i - 1] += 1;
        for j in i..k {
            c[j] = c[j - 1] + 1;
        }
    }
}

fn run_permutations(
    g1: &[f64],
    g2: &[f64],
    b: usize,
    seed: u64,
) -> Result<PermOutcome, StatsError> {
    if g1.len() < 2 || g2.len() < 2 {
        return Err(StatsError::GroupTooSmall { needed: 2, got: g1.len().min(g2.len()) });
    }
    if b == 0 {
        return Err(StatsError::NoPermutations);
    }
    let n1 = g1.len();
    let n = n1 + g2.len();
    let pool: Vec<f64> = g1.iter().chain(g2.iter()).copied().collect();
    let raw_ranks = mid_ranks(&pool);

    let mut in_g1 = vec![false; n];
    in_g1[..n1].fill(true);
    let mut b1 = Vec::with_capacity(n1);
    let mut b2 = Vec::with_capacity(n - n1);
    let mut bd = Vec::with_capacity(n);
    let observed = three_statistics(&pool, &raw_ranks, &in_g1, &mut b1, &mut b2, &mut bd);

    if pool.iter().all(|&x| x == pool[0]) {
        let mode = match binomial_at_most(n, n1, b) {
            Some(_) => PValueMode::Exhaustive,
            None => PValueMode::MonteCarlo,
        };
        return Ok(PermOutcome {
            observed,
            exceed: [0; 3],
            total: 0,
            mode,
            degenerate: true,
        });
    }

    let mut exceed = [0usize; 3];
    let mut count_if_reaches = |stats: [f64; 3]| {
        for a in 0..3 {
            if stats[a] >= observed[a] {
                exceed[a] += 1;
            }
        }
    };

    let (total, mode) = match binomial_at_most(n, n1, b) {
        Some(total) => {
            for_each_combination(n, n1, |subset| {
                in_g1.fill(false);
                for &i in subset {
                    in_g1[i] = true;
                }
                let stats =
                    three_statistics(&pool, &raw_ranks, &in_g1, &mut b1, &mut b2, &mut bd);
                count_if_reaches(stats);
            });
            (total, PValueMode::Exhaustive)
        }
        None => {
            for replicate in 0..b {
                let mut rng = crate::rng::stream(seed, replicate as u64);
                let picks = rand::seq::index::sample(&mut rng, n, n1);
                in_g1.fill(false);
                for i in picks {
                    in_g1[i] = true;
                }
                let stats =
                    three_statistics(&pool, &raw_ranks, &in_g1, &mut b1, &mut b2, &mut bd);
                count_if_reaches(stats);
            }
            (b, PValueMode::MonteCarlo)
        }
    };

    Ok(PermOutcome { observed, exceed, total, mode, degenerate: false })
}

/// Permutation test of one aspect of the difference between two samples.
pub fn partial_perm_test(
    g1: &[f64],
    g2: &[f64],
    kind: TestKind,
    b: usize,
    seed: u64,
) -> Result<TestResult, StatsError> {
    let outcome = run_permutations(g1, g2, b, seed)?;
    let aspect = match kind {
        TestKind::Location => LOCATION,
        TestKind::Scale => SCALE,
        TestKind::Joint => JOINT,
    };
    Ok(TestResult {
        statistic: outcome.observed[aspect],
        p_value: outcome.p_value(aspect),
        n_permutations: outcome.total,
        seed,
        mode: outcome.mode,
        degenerate: outcome.degenerate,
    })
}

/// Location and scale tests with the joint-aspect max correction, all three
/// computed from one shared stream of relabelings.
pub fn npc_anova(
    g1: &[f64],
    g2: &[f64],
    b: usize,
    seed: u64,
) -> Result<NpcAnovaResult, StatsError> {
    let outcome = run_permutations(g1, g2, b, seed)?;
    let p_location_raw = outcome.p_value(LOCATION);
    let p_scale_raw = outcome.p_value(SCALE);
    let p_joint = outcome.p_value(JOINT);
    Ok(NpcAnovaResult {
        location_statistic: outcome.observed[LOCATION],
        scale_statistic: outcome.observed[SCALE],
        joint_statistic: outcome.observed[JOINT],
        p_location_raw,
        p_scale_raw,
        p_joint,
        p_location_corrected: p_location_raw.max(p_joint),
        p_scale_corrected: p_scale_raw.max(p_joint),
        n_permutations: outcome.total,
        seed,
        mode: outcome.mode,
        degenerate: outcome.degenerate,
    })
}
