//! HITS hub and authority scores by power iteration.
//!
//! Authorities are regions that attract flows from strong senders, hubs are
//! regions that send flows toward strong attractors: `authority ∝ Wᵀ·hub`,
//! `hub ∝ W·authority`, both Euclidean-normalized every step. The authority
//! vector converges to the dominant eigenvector of `WᵀW` and the hub vector
//! to that of `WWᵀ`, which is what the test oracle checks.

use super::{MobilityNetwork, NetworkError};

#[derive(Debug, Clone, Copy)]
pub struct HitsConfig {
    /// Max-norm change of both vectors that counts as converged.
    pub tolerance: f64,
    pub max_iter: usize,
}

impl Default for HitsConfig {
    fn default() -> Self {
        HitsConfig { tolerance: 1e-10, max_iter: 1000 }
    }
}

#[derive(Debug, Clone)]
pub struct HitsScores {
    pub hub: Vec<f64>,
    pub authority: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

pub fn hits_scores(net: &MobilityNetwork, cfg: &HitsConfig) -> Result<HitsScores, NetworkError> {
    if net.n() == 0 || net.is_zero() {
        return Err(NetworkError::AllZero);
    }
    let n = net.n();
    let w = net.weights();

    let mut hub = vec![1.0; n];
    let mut auth = vec![1.0; n];
    normalize(&mut hub)?;
    normalize(&mut auth)?;
    let mut new_hub = vec![0.0; n];
    let mut new_auth = vec![0.0; n];

    for iter in 1..=cfg.max_iter {
        // authority from the previous hubs
        for j in 0..n {
            let mut acc = 0.0;
            for i in 0..n {
                acc += w[i * n + j] * hub[i];
            }
            new_auth[j] = acc;
        }
        normalize(&mut new_auth)?;
        // hubs from the fresh authorities
        for i in 0..n {
            let mut acc = 0.0;
            for j in 0..n {
                acc += w[i * n + j] * new_auth[j];
            }
            new_hub[i] = acc;
        }
        normalize(&mut new_hub)?;

        let delta = max_abs_diff(&hub, &new_hub).max(max_abs_diff(&auth, &new_auth));
        hub.copy_from_slice(&new_hub);
        auth.copy_from_slice(&new_auth);
        if delta < cfg.tolerance {
            return Ok(HitsScores { hub, authority: auth, iterations: iter, converged: true });
        }
    }
    Ok(HitsScores { hub, authority: auth, iterations: cfg.max_iter, converged: false })
}

fn normalize(v: &mut [f64]) -> Result<(), NetworkError> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 || !norm.is_finite() {
        return Err(NetworkError::Degenerate("hub/authority mass vanished during iteration".into()));
    }
    for x in v.iter_mut() {
        *x /= norm;
    }
    Ok(())
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
