//! Principal component analysis of a regions-by-years matrix.

use super::StatsError;
use nalgebra::DMatrix;

#[derive(Debug, Clone)]
pub struct PcaResult {
    /// Columns are components, ordered by decreasing explained variance.
    pub loadings: DMatrix<f64>,
    /// Covariance eigenvalues, non-negative and non-increasing.
    pub eigenvalues: Vec<f64>,
    /// Eigenvalue shares of the total variance; they sum to 1.
    pub proportions: Vec<f64>,
    pub standardized: bool,
}

/// Column-centered (optionally column-standardized) PCA via the sample
/// covariance. Each loading column's sign is fixed so its largest-magnitude
/// entry is positive, earliest such entry deciding ties.
pub fn pca(data: &DMatrix<f64>, standardize: bool) -> Result<PcaResult, StatsError> {
    let (n, p) = data.shape();
    if n < 2 || p < 2 {
        return Err(StatsError::BadShape { rows: n, cols: p });
    }
    let mut centered = data.clone();
    for j in 0..p {
        let mean = centered.column(j).sum() / n as f64;
        for i in 0..n {
            centered[(i, j)] -= mean;
        }
        if standardize {
            let var = centered.column(j).norm_squared() / (n - 1) as f64;
            if var == 0.0 {
                return Err(StatsError::ZeroVariance { column: j });
            }
            let sd = var.sqrt();
            for i in 0..n {
                centered[(i, j)] /= sd;
            }
        }
    }
    let cov = centered.transpose() * &centered / (n - 1) as f64;
    if cov.trace() <= 0.0 {
        return Err(StatsError::Degenerate("total variance is zero".into()));
    }

    let eig = cov.symmetric_eigen();
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));

    let mut loadings = DMatrix::zeros(p, p);
    let mut eigenvalues = Vec::with_capacity(p);
    for (dst, &src) in order.iter().enumerate() {
        let mut col = eig.eigenvectors.column(src).clone_owned();
        let mut lead = 0;
        for i in 1..p {
            if col[i].abs() > col[lead].abs() {
                lead = i;
            }
        }
        if col[lead] < 0.0 {
            col.neg_mut();
        }
        loadings.set_column(dst, &col);
        eigenvalues.push(eig.eigenvalues[src].max(0.0));
    }
    let total: f64 = eigenvalues.iter().sum();
    let proportions = eigenvalues.iter().map(|&l| l / total).collect();
    Ok(PcaResult { loadings, eigenvalues, proportions, standardized: standardize })
}
