//! Penalized least-squares fitting of additive models.
//!
//! A model is a sum of terms: a global intercept, plain linear columns,
//! deviation-coded factors, curvature-penalized spline smooths (optionally
//! restricted to masked rows or split by group with a shared smoothing
//! parameter), and ridge-penalized random intercepts. Smoothing parameters
//! are either fixed or chosen by generalized cross-validation with
//! coordinate-wise grid sweeps.

use std::collections::{BTreeMap, BTreeSet};
use std::ops::Range;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::spline::SplineBasis;
use super::ModelError;

/// Convergence threshold for the relative GCV improvement between sweeps.
const GCV_REL_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Lambda {
    /// Choose the smoothing parameter by generalized cross-validation.
    Gcv,
    /// Use the given smoothing parameter as is.
    Fixed(f64),
}

#[derive(Debug, Clone)]
pub enum TermSpec {
    Intercept,
    Linear {
        name: String,
        values: Vec<f64>,
    },
    /// Fixed factor effects, deviation coded so they sum to zero and leave
    /// the intercept identified.
    Factor {
        name: String,
        levels: Vec<String>,
    },
    /// Spline smooth of one covariate, constrained to sum to zero over its
    /// active rows. `mask` restricts the term to a subset of rows.
    /// `drop_linear` additionally removes the linear direction, which keeps
    /// designs identifiable when the same covariate also enters through a
    /// combined smooth.
    Smooth {
        name: String,
        values: Vec<f64>,
        n_knots: usize,
        mask: Option<Vec<bool>>,
        drop_linear: bool,
        lambda: Lambda,
    },
    /// One sub-smooth per group label with a single shared smoothing
    /// parameter across groups.
    YearwiseSmooth {
        name: String,
        values: Vec<f64>,
        groups: Vec<String>,
        n_knots: usize,
        lambda: Lambda,
    },
    /// Ridge-penalized intercept per level.
    RandomIntercept {
        name: String,
        levels: Vec<String>,
        lambda: Lambda,
    },
}

impl TermSpec {
    pub fn name(&self) -> &str {
        match self {
            TermSpec::Intercept => "intercept",
            TermSpec::Linear { name, .. }
            | TermSpec::Factor { name, .. }
            | TermSpec::Smooth { name, .. }
            | TermSpec::YearwiseSmooth { name, .. }
            | TermSpec::RandomIntercept { name, .. } => name,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            TermSpec::Intercept => "intercept",
            TermSpec::Linear { .. } => "linear",
            TermSpec::Factor { .. } => "factor",
            TermSpec::Smooth { .. } => "smooth",
            TermSpec::YearwiseSmooth { .. } => "yearwise_smooth",
            TermSpec::RandomIntercept { .. } => "random_intercept",
        }
    }

    fn is_smooth(&self) -> bool {
        matches!(
            self,
            TermSpec::Smooth { .. } | TermSpec::YearwiseSmooth { .. }
        )
    }

    fn n_rows(&self) -> Option<usize> {
        match self {
            TermSpec::Intercept => None,
            TermSpec::Linear { values, .. } => Some(values.len()),
            TermSpec::Factor { levels, .. } => Some(levels.len()),
            TermSpec::Smooth { values, .. } => Some(values.len()),
            TermSpec::YearwiseSmooth { values, .. } => Some(values.len()),
            TermSpec::RandomIntercept { levels, .. } => Some(levels.len()),
        }
    }
}

#[derive(Debug, Clone)]
pub struct GamSpec {
    pub terms: Vec<TermSpec>,
}

#[derive(Debug, Clone)]
pub struct FitOptions {
    /// Grid of candidate smoothing parameters for GCV sweeps.
    pub lambda_grid: Vec<f64>,
    /// Maximum number of coordinate sweeps over the penalized terms.
    pub max_sweeps: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            lambda_grid: (-4..=8).map(|e| 10f64.powi(e)).collect(),
            max_sweeps: 10,
        }
    }
}

/// One evaluable piece of a smooth term: yearwise smooths have one section
/// per group, plain smooths exactly one.
struct Section {
    label: String,
    cols: Range<usize>,
    basis: SplineBasis,
    /// Transform from raw basis coefficients to constrained coefficients.
    z: DMatrix<f64>,
}

struct BuiltTerm {
    name: String,
    kind: &'static str,
    cols: Range<usize>,
    /// Block-local penalty, rescaled to unit Frobenius norm per sub-block.
    penalty: Option<DMatrix<f64>>,
    lambda: Lambda,
    sections: Vec<Section>,
    levels: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub x: f64,
    pub fit: f64,
    pub se: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TermReport {
    pub name: String,
    pub kind: String,
    pub lambda: Option<f64>,
    pub edf: f64,
    pub f_statistic: Option<f64>,
}

pub struct GamFit {
    pub coefficients: Vec<f64>,
    pub fitted: Vec<f64>,
    pub residuals: Vec<f64>,
    pub r_squared: f64,
    pub gcv: f64,
    pub edf: f64,
    pub sigma2: f64,
    pub terms: Vec<TermReport>,
    /// Per-level effects of factor and random-intercept terms.
    pub level_effects: BTreeMap<String, BTreeMap<String, f64>>,
    design: Design,
}

impl std::fmt::Debug for GamFit {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GamFit")
            .field("r_squared", &self.r_squared)
            .field("gcv", &self.gcv)
            .field("edf", &self.edf)
            .field("sigma2", &self.sigma2)
            .field("terms", &self.terms)
            .finish_non_exhaustive()
    }
}

struct Design {
    x: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
    vb: DMatrix<f64>,
    terms: Vec<BuiltTerm>,
    edf_terms: Vec<f64>,
    edf_total: f64,
    n: usize,
}

struct Solution {
    beta: DVector<f64>,
    chol: Cholesky<f64, Dyn>,
    edf_total: f64,
    edf_terms: Vec<f64>,
    gcv: f64,
}

struct Assembled {
    x: DMatrix<f64>,
    xtx: DMatrix<f64>,
    xty: DVector<f64>,
    yty: f64,
    n: usize,
    terms: Vec<BuiltTerm>,
}

/// Orthonormal basis of the null space of the constraint matrix `c`
/// (rows are constraints), via a Householder QR of its transpose. Returns
/// `None` when a constraint is zero or linearly dependent.
fn constraint_null_space(c: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let k = c.nrows();
    let nb = c.ncols();
    if k >= nb {
        return None;
    }
    let mut r = c.transpose();
    let mut q = DMatrix::identity(nb, nb);
    for j in 0..k {
        let mut v: Vec<f64> = (j..nb).map(|t| r[(t, j)]).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm < 1e-12 {
            return None;
        }
        let sign = if v[0] >= 0.0 { 1.0 } else { -1.0 };
        v[0] += sign * norm;
        let vn2: f64 = v.iter().map(|x| x * x).sum();
        for col in j..k {
            let dot: f64 = v.iter().zip(j..nb).map(|(vi, t)| vi * r[(t, col)]).sum();
            let alpha = 2.0 * dot / vn2;
            for (vi, t) in v.iter().zip(j..nb) {
                r[(t, col)] -= alpha * vi;
            }
        }
        for row in 0..nb {
            let dot: f64 = v.iter().zip(j..nb).map(|(vi, t)| vi * q[(row, t)]).sum();
            let alpha = 2.0 * dot / vn2;
            for (vi, t) in v.iter().zip(j..nb) {
                q[(row, t)] -= alpha * vi;
            }
        }
    }
    Some(q.columns(k, nb - k).clone_owned())
}

/// Unit-Frobenius rescale; leaves an all-zero matrix untouched.
fn unit_frobenius(m: DMatrix<f64>) -> DMatrix<f64> {
    let norm = m.norm();
    if norm > 0.0 {
        m / norm
    } else {
        m
    }
}

/// Builds the design block and constrained penalty for one spline section.
fn build_section(
    label: &str,
    values: &[f64],
    rows: &[usize],
    n: usize,
    n_knots: usize,
    drop_linear: bool,
) -> Result<(Section, DMatrix<f64>, DMatrix<f64>), ModelError> {
    let active: Vec<f64> = rows.iter().map(|&i| values[i]).collect();
    let basis = SplineBasis::from_quantiles(label, &active, n_knots)?;
    let nb = basis.n_basis();
    let mut full = DMatrix::zeros(n, nb);
    for &i in rows {
        for (c, v) in basis.eval_row(values[i]).into_iter().enumerate() {
            full[(i, c)] = v;
        }
    }
    let n_constraints = if drop_linear { 2 } else { 1 };
    let mut constraints = DMatrix::zeros(n_constraints, nb);
    for c in 0..nb {
        let mut sum = 0.0;
        let mut xsum = 0.0;
        for &i in rows {
            sum += full[(i, c)];
            xsum += values[i] * full[(i, c)];
        }
        constraints[(0, c)] = sum;
        if drop_linear {
            constraints[(1, c)] = xsum;
        }
    }
    let z = constraint_null_space(&constraints).ok_or_else(|| {
        ModelError::InvalidSmooth(format!("constraints for '{label}' are degenerate"))
    })?;
    // Rotating the constrained columns into the penalty eigenbasis makes the
    // penalty diagonal, so adding a large smoothing parameter only rescales
    // diagonal entries and cannot round away the data half of the normal
    // equations.
    let eig = unit_frobenius(z.transpose() * basis.penalty() * &z).symmetric_eigen();
    let z = z * &eig.eigenvectors;
    let block = &full * &z;
    let floor = 1e-12 * eig.eigenvalues.iter().copied().fold(0.0_f64, f64::max);
    let mut penalty = DMatrix::zeros(z.ncols(), z.ncols());
    for i in 0..penalty.nrows() {
        // Eigenvalues at rounding level are true null directions; keeping
        // them would ridge the unpenalized part in proportion to lambda.
        if eig.eigenvalues[i] > floor {
            penalty[(i, i)] = eig.eigenvalues[i];
        }
    }
    let section = Section {
        label: label.to_string(),
        cols: 0..0,
        basis,
        z,
    };
    Ok((section, block, penalty))
}

fn sorted_distinct(labels: &[String]) -> Vec<String> {
    labels
        .iter()
        .cloned()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect()
}

fn build_terms(spec: &GamSpec, n: usize) -> Result<Assembled, ModelError> {
    if spec.terms.is_empty() {
        return Err(ModelError::InvalidSmooth("model has no terms".to_string()));
    }
    let mut seen = BTreeSet::new();
    for t in &spec.terms {
        if !seen.insert(t.name().to_string()) {
            return Err(ModelError::InvalidSmooth(format!(
                "duplicate term name '{}'",
                t.name()
            )));
        }
        if let Some(rows) = t.n_rows() {
            if rows != n {
                return Err(ModelError::SizeMismatch {
                    design: rows,
                    response: n,
                });
            }
        }
    }

    let mut blocks: Vec<DMatrix<f64>> = Vec::new();
    let mut terms: Vec<BuiltTerm> = Vec::new();
    let mut offset = 0usize;
    for spec_term in &spec.terms {
        let name = spec_term.name().to_string();
        let (block, penalty, sections, levels) = match spec_term {
            TermSpec::Intercept => (DMatrix::from_element(n, 1, 1.0), None, vec![], vec![]),
            TermSpec::Linear { values, .. } => {
                if values.iter().any(|v| !v.is_finite()) {
                    return Err(ModelError::NonFinite(format!("values of term '{name}'")));
                }
                (DMatrix::from_column_slice(n, 1, values), None, vec![], vec![])
            }
            TermSpec::Factor { levels, .. } => {
                let distinct = sorted_distinct(levels);
                let cols = distinct.len().saturating_sub(1);
                let mut block = DMatrix::zeros(n, cols);
                for (i, lev) in levels.iter().enumerate() {
                    let idx = distinct.binary_search(lev).expect("level is present");
                    if idx < cols {
                        block[(i, idx)] = 1.0;
                    } else {
                        for j in 0..cols {
                            block[(i, j)] = -1.0;
                        }
                    }
                }
                (block, None, vec![], distinct)
            }
            TermSpec::Smooth {
                values,
                n_knots,
                mask,
                drop_linear,
                ..
            } => {
                let rows: Vec<usize> = match mask {
                    Some(m) => {
                        if m.len() != n {
                            return Err(ModelError::SizeMismatch {
                                design: m.len(),
                                response: n,
                            });
                        }
                        (0..n).filter(|&i| m[i]).collect()
                    }
                    None => (0..n).collect(),
                };
                let (mut section, block, penalty) =
                    build_section(&name, values, &rows, n, *n_knots, *drop_linear)?;
                section.cols = offset..offset + block.ncols();
                (block, Some(penalty), vec![section], vec![])
            }
            TermSpec::YearwiseSmooth {
                values,
                groups,
                n_knots,
                ..
            } => {
                let distinct = sorted_distinct(groups);
                let mut sub_blocks = Vec::new();
                let mut sections = Vec::new();
                let mut local = 0usize;
                for g in &distinct {
                    let rows: Vec<usize> = (0..n).filter(|&i| &groups[i] == g).collect();
                    let label = format!("{name}:{g}");
                    let (mut section, block, penalty) =
                        build_section(&label, values, &rows, n, *n_knots, false)?;
                    section.cols = offset + local..offset + local + block.ncols();
                    local += block.ncols();
                    sections.push(section);
                    sub_blocks.push((block, penalty));
                }
                let total: usize = sub_blocks.iter().map(|(b, _)| b.ncols()).sum();
                let mut block = DMatrix::zeros(n, total);
                let mut penalty = DMatrix::zeros(total, total);
                let mut at = 0usize;
                for (b, p) in sub_blocks {
                    let w = b.ncols();
                    block.view_range_mut(0..n, at..at + w).copy_from(&b);
                    penalty.view_range_mut(at..at + w, at..at + w).copy_from(&p);
                    at += w;
                }
                (block, Some(penalty), sections, distinct)
            }
            TermSpec::RandomIntercept { levels, .. } => {
                let distinct = sorted_distinct(levels);
                let l = distinct.len();
                let mut block = DMatrix::zeros(n, l);
                for (i, lev) in levels.iter().enumerate() {
                    let idx = distinct.binary_search(lev).expect("level is present");
                    block[(i, idx)] = 1.0;
                }
                let penalty = unit_frobenius(DMatrix::identity(l, l));
                (block, Some(penalty), vec![], distinct)
            }
        };
        let lambda = match spec_term {
            TermSpec::Smooth { lambda, .. }
            | TermSpec::YearwiseSmooth { lambda, .. }
            | TermSpec::RandomIntercept { lambda, .. } => *lambda,
            _ => Lambda::Fixed(0.0),
        };
        let width = block.ncols();
        terms.push(BuiltTerm {
            name,
            kind: spec_term.kind(),
            cols: offset..offset + width,
            penalty,
            lambda,
            sections,
            levels,
        });
        blocks.push(block);
        offset += width;
    }

    let p = offset;
    if p == 0 {
        return Err(ModelError::InvalidSmooth(
            "model has no estimable columns".to_string(),
        ));
    }
    let mut x = DMatrix::zeros(n, p);
    for (term, block) in terms.iter().zip(&blocks) {
        x.view_range_mut(0..n, term.cols.clone()).copy_from(block);
    }
    Ok(Assembled {
        xtx: x.tr_mul(&x),
        x,
        xty: DVector::zeros(p),
        yty: 0.0,
        n,
        terms,
    })
}

fn rank_deficiency_error(a: &DMatrix<f64>, terms: &[BuiltTerm]) -> ModelError {
    let eig = a.clone().symmetric_eigen();
    let mut min_idx = 0;
    for (i, ev) in eig.eigenvalues.iter().enumerate() {
        if *ev < eig.eigenvalues[min_idx] {
            min_idx = i;
        }
    }
    let v = eig.eigenvectors.column(min_idx);
    let loads: Vec<f64> = terms
        .iter()
        .map(|t| t.cols.clone().map(|j| v[j].abs()).fold(0.0, f64::max))
        .collect();
    let max_load = loads.iter().copied().fold(0.0, f64::max);
    let named: Vec<String> = terms
        .iter()
        .zip(&loads)
        .filter(|(_, &l)| l >= 0.1 * max_load && max_load > 0.0)
        .map(|(t, _)| t.name.clone())
        .collect();
    ModelError::RankDeficient { terms: named }
}

fn solve_at(asm: &Assembled, lambdas: &[f64]) -> Result<Solution, ModelError> {
    let mut a = asm.xtx.clone();
    for (term, &lam) in asm.terms.iter().zip(lambdas) {
        if let Some(p) = &term.penalty {
            if lam > 0.0 {
                let r = term.cols.clone();
                let mut view = a.view_range_mut(r.clone(), r);
                for i in 0..p.nrows() {
                    for j in 0..p.ncols() {
                        view[(i, j)] += lam * p[(i, j)];
                    }
                }
            }
        }
    }
    let chol = a
        .clone()
        .cholesky()
        .ok_or_else(|| rank_deficiency_error(&a, &asm.terms))?;
    let mut beta = chol.solve(&asm.xty);
    // Two steps of iterative refinement keep the solve accurate when large
    // smoothing parameters make the system badly conditioned.
    for _ in 0..2 {
        let residual = &asm.xty - &a * &beta;
        beta += chol.solve(&residual);
    }
    let m = chol.solve(&asm.xtx);
    let edf_terms: Vec<f64> = asm
        .terms
        .iter()
        .map(|t| t.cols.clone().map(|j| m[(j, j)]).sum())
        .collect();
    let edf_total: f64 = edf_terms.iter().sum();
    let rss = (asm.yty - 2.0 * beta.dot(&asm.xty) + beta.dot(&(&asm.xtx * &beta))).max(0.0);
    let denom = asm.n as f64 - edf_total;
    let gcv = if denom >= 1.0 {
        asm.n as f64 * rss / (denom * denom)
    } else {
        f64::INFINITY
    };
    Ok(Solution {
        beta,
        chol,
        edf_total,
        edf_terms,
        gcv,
    })
}

pub fn fit_pgam(spec: &GamSpec, y: &[f64], opts: &FitOptions) -> Result<GamFit, ModelError> {
    fit_pinned(spec, y, opts, &BTreeMap::new())
}

/// Fits with the named terms held at preset smoothing parameters and
/// excluded from the GCV sweep.
fn fit_pinned(
    spec: &GamSpec,
    y: &[f64],
    opts: &FitOptions,
    pins: &BTreeMap<String, f64>,
) -> Result<GamFit, ModelError> {
    let n = y.len();
    if n < 2 {
        return Err(ModelError::InvalidSmooth(format!(
            "need at least 2 observations, got {n}"
        )));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(ModelError::NonFinite("response".to_string()));
    }
    let mut asm = build_terms(spec, n)?;
    let yv = DVector::from_column_slice(y);
    asm.xty = asm.x.tr_mul(&yv);
    asm.yty = yv.dot(&yv);

    let mut lambdas: Vec<f64> = asm
        .terms
        .iter()
        .map(|t| match (t.penalty.is_some(), t.lambda) {
            (false, _) => 0.0,
            (true, _) if pins.contains_key(&t.name) => pins[&t.name],
            (true, Lambda::Fixed(v)) => v,
            (true, Lambda::Gcv) => 1.0,
        })
        .collect();
    let gcv_terms: Vec<usize> = asm
        .terms
        .iter()
        .enumerate()
        .filter(|(_, t)| {
            t.penalty.is_some() && t.lambda == Lambda::Gcv && !pins.contains_key(&t.name)
        })
        .map(|(i, _)| i)
        .collect();

    let mut sol = solve_at(&asm, &lambdas)?;
    if !gcv_terms.is_empty() {
        for _ in 0..opts.max_sweeps {
            let before = sol.gcv;
            for &ti in &gcv_terms {
                let mut best_gcv = sol.gcv;
                let mut best_lambda = lambdas[ti];
                let mut best_sol = None;
                for &cand in &opts.lambda_grid {
                    let mut trial = lambdas.clone();
                    trial[ti] = cand;
                    if let Ok(s) = solve_at(&asm, &trial) {
                        if s.gcv < best_gcv {
                            best_gcv = s.gcv;
                            best_lambda = cand;
                            best_sol = Some(s);
                        }
                    }
                }
                if let Some(s) = best_sol {
                    lambdas[ti] = best_lambda;
                    sol = s;
                }
            }
            let improved = before - sol.gcv;
            if !(improved > GCV_REL_TOL * before.abs().max(1.0)) {
                break;
            }
        }
    }

    let beta = sol.beta.clone();
    let fitted_v = &asm.x * &beta;
    let fitted: Vec<f64> = fitted_v.iter().copied().collect();
    let residuals: Vec<f64> = y.iter().zip(&fitted).map(|(a, b)| a - b).collect();
    let rss: f64 = residuals.iter().map(|r| r * r).sum();
    let mean = y.iter().sum::<f64>() / n as f64;
    let tss: f64 = y.iter().map(|v| (v - mean) * (v - mean)).sum();
    let r_squared = if tss > 0.0 { 1.0 - rss / tss } else { 0.0 };
    let denom = n as f64 - sol.edf_total;
    let sigma2 = if denom > 1e-8 { rss / denom } else { f64::INFINITY };

    let ainv = sol.chol.inverse();
    let vb = &ainv * &asm.xtx * &ainv * sigma2;

    let mut level_effects = BTreeMap::new();
    let mut reports = Vec::new();
    for (i, term) in asm.terms.iter().enumerate() {
        let lambda = if term.penalty.is_some() {
            Some(lambdas[i])
        } else {
            None
        };
        let f_statistic = if term.sections.is_empty() {
            None
        } else {
            let width = term.cols.len();
            let beta_block = beta.rows(term.cols.start, width);
            let contrib = asm.x.columns(term.cols.start, width) * beta_block;
            let edf = sol.edf_terms[i];
            if edf > 1e-8 {
                Some((contrib.norm_squared() / edf) / sigma2)
            } else {
                Some(0.0)
            }
        };
        reports.push(TermReport {
            name: term.name.clone(),
            kind: term.kind.to_string(),
            lambda,
            edf: sol.edf_terms[i],
            f_statistic,
        });
        match term.kind {
            "factor" => {
                let cols = term.cols.len();
                let mut effects = BTreeMap::new();
                let mut sum = 0.0;
                for (j, level) in term.levels.iter().take(cols).enumerate() {
                    let b = beta[term.cols.start + j];
                    effects.insert(level.clone(), b);
                    sum += b;
                }
                if let Some(last) = term.levels.last() {
                    if term.levels.len() > cols {
                        effects.insert(last.clone(), -sum);
                    }
                }
                level_effects.insert(term.name.clone(), effects);
            }
            "random_intercept" => {
                let effects: BTreeMap<String, f64> = term
                    .levels
                    .iter()
                    .enumerate()
                    .map(|(j, level)| (level.clone(), beta[term.cols.start + j]))
                    .collect();
                level_effects.insert(term.name.clone(), effects);
            }
            _ => {}
        }
    }

    Ok(GamFit {
        coefficients: beta.iter().copied().collect(),
        fitted,
        residuals,
        r_squared,
        gcv: sol.gcv,
        edf: sol.edf_total,
        sigma2,
        terms: reports,
        level_effects,
        design: Design {
            x: asm.x,
            chol: sol.chol,
            vb,
            terms: asm.terms,
            edf_terms: sol.edf_terms,
            edf_total: sol.edf_total,
            n,
        },
    })
}

impl GamFit {
    /// Evaluates one smooth section (by its label) at the given points,
    /// returning the centered fit with pointwise standard errors.
    pub fn term_curve(&self, label: &str, xs: &[f64]) -> Result<Vec<CurvePoint>, ModelError> {
        for term in &self.design.terms {
            for section in &term.sections {
                if section.label == label {
                    return Ok(self.section_curve(section, xs));
                }
            }
        }
        Err(ModelError::UnknownTerm(label.to_string()))
    }

    fn section_curve(&self, section: &Section, xs: &[f64]) -> Vec<CurvePoint> {
        let width = section.cols.len();
        let beta = DVector::from_iterator(
            width,
            section.cols.clone().map(|j| self.coefficients[j]),
        );
        let vb = self
            .design
            .vb
            .view_range(section.cols.clone(), section.cols.clone())
            .clone_owned();
        xs.iter()
            .map(|&x| {
                let raw = DVector::from_column_slice(&section.basis.eval_row(x));
                let row = section.z.tr_mul(&raw);
                let fit = row.dot(&beta);
                let var = row.dot(&(&vb * &row));
                CurvePoint {
                    x,
                    fit,
                    se: var.max(0.0).sqrt(),
                }
            })
            .collect()
    }

    /// Curves for every smooth section, each on an even grid over the
    /// section's own domain.
    pub fn smooth_curves(&self, points: usize) -> Vec<(String, Vec<CurvePoint>)> {
        let points = points.max(2);
        let mut out = Vec::new();
        for term in &self.design.terms {
            for section in &term.sections {
                let (lo, hi) = section.basis.domain();
                let xs: Vec<f64> = (0..points)
                    .map(|i| lo + (hi - lo) * i as f64 / (points - 1) as f64)
                    .collect();
                out.push((section.label.clone(), self.section_curve(section, &xs)));
            }
        }
        out
    }

    /// Refits with the smoothing parameters frozen at their selected values
    /// and returns the largest F-statistic among the given terms. Reusing
    /// the stored factorization keeps permutation replicates cheap.
    fn frozen_max_f(&self, y: &[f64], term_indices: &[usize]) -> f64 {
        let yv = DVector::from_column_slice(y);
        let xty = self.design.x.tr_mul(&yv);
        let beta = self.design.chol.solve(&xty);
        let fitted = &self.design.x * &beta;
        let rss = (yv - fitted).norm_squared();
        let denom = self.design.n as f64 - self.design.edf_total;
        let sigma2 = if denom > 1e-8 { rss / denom } else { f64::INFINITY };
        let mut best = f64::NEG_INFINITY;
        for &ti in term_indices {
            let term = &self.design.terms[ti];
            let width = term.cols.len();
            let contrib =
                self.design.x.columns(term.cols.start, width) * beta.rows(term.cols.start, width);
            let edf = self.design.edf_terms[ti];
            let f = if edf > 1e-8 {
                (contrib.norm_squared() / edf) / sigma2
            } else {
                0.0
            };
            best = best.max(f);
        }
        best
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PermFResult {
    pub f_observed: f64,
    pub p_value: f64,
    pub n_permutations: usize,
    pub seed: u64,
    pub added_terms: Vec<String>,
}

/// Smoothing parameter at which one term's effective dimension matches
/// `target`, holding the other terms at `base`. The effective dimension is
/// a function of the design and the smoothing parameters alone, so the
/// choice carries no information about the response.
fn lambda_for_edf(
    asm: &Assembled,
    ti: usize,
    base: &[f64],
    target: f64,
) -> Result<f64, ModelError> {
    let (mut lo, mut hi) = (1e-6_f64, 1e10_f64);
    for _ in 0..32 {
        let mid = (lo * hi).sqrt();
        let mut trial = base.to_vec();
        trial[ti] = mid;
        if solve_at(asm, &trial)?.edf_terms[ti] > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok((lo * hi).sqrt())
}

/// Permutation test for the joint contribution of the smooth terms present
/// in `extended` but not in `null`. Each added term is fit at a preset
/// effective dimension chosen from the design alone, so observed and
/// permuted responses face exactly the same flexibility. Replicate
/// responses are built as null fitted values plus permuted null residuals;
/// the extended model is refit with frozen smoothing parameters and the
/// maximum added-term F-statistic is compared against its observed value.
pub fn perm_f_test(
    null: &GamSpec,
    extended: &GamSpec,
    y: &[f64],
    b: usize,
    seed: u64,
    opts: &FitOptions,
) -> Result<PermFResult, ModelError> {
    if b == 0 {
        return Err(ModelError::NoPermutations);
    }
    let null_names: BTreeSet<&str> = null.terms.iter().map(|t| t.name()).collect();
    let extended_names: BTreeSet<&str> = extended.terms.iter().map(|t| t.name()).collect();
    if let Some(missing) = null_names.iter().find(|n| !extended_names.contains(*n)) {
        return Err(ModelError::NotNested(format!(
            "null term '{missing}' is absent from the extended model"
        )));
    }
    let added: Vec<&TermSpec> = extended
        .terms
        .iter()
        .filter(|t| !null_names.contains(t.name()))
        .collect();
    if added.is_empty() {
        return Err(ModelError::NotNested(
            "the extended model adds no terms".to_string(),
        ));
    }
    if let Some(bad) = added.iter().find(|t| !t.is_smooth()) {
        return Err(ModelError::NotNested(format!(
            "added term '{}' is not a smooth",
            bad.name()
        )));
    }

    let null_fit = fit_pgam(null, y, opts)?;

    // Selecting the added terms' smoothing parameters by GCV on the
    // observed response would grant flexibility exactly where that response
    // happens to look curved, inflating the observed statistic relative to
    // replicates refit under frozen smoothing parameters. Each added term
    // is pinned instead to the smoothing parameter whose effective
    // dimension is half the term's column count, a choice made from the
    // design alone.
    let n = y.len();
    let probe = build_terms(extended, n)?;
    let base: Vec<f64> = probe
        .terms
        .iter()
        .map(|t| match (t.penalty.is_some(), t.lambda) {
            (false, _) => 0.0,
            (true, Lambda::Fixed(v)) => v,
            (true, Lambda::Gcv) => 1.0,
        })
        .collect();
    let mut pins = BTreeMap::new();
    for (ti, term) in probe.terms.iter().enumerate() {
        if null_names.contains(term.name.as_str()) {
            continue;
        }
        let target = (term.cols.len() as f64 / 2.0).clamp(1.0, 6.0);
        pins.insert(term.name.clone(), lambda_for_edf(&probe, ti, &base, target)?);
    }
    let extended_fit = fit_pinned(extended, y, opts, &pins)?;
    let added_idx: Vec<usize> = extended_fit
        .design
        .terms
        .iter()
        .enumerate()
        .filter(|(_, t)| !null_names.contains(t.name.as_str()))
        .map(|(i, _)| i)
        .collect();
    let added_terms: Vec<String> = added_idx
        .iter()
        .map(|&i| extended_fit.design.terms[i].name.clone())
        .collect();

    let f_observed = extended_fit.frozen_max_f(y, &added_idx);
    let exceed: usize = (0..b)
        .into_par_iter()
        .map(|r| {
            let mut rng = crate::rng::stream(seed, r as u64);
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut rng);
            let y_b: Vec<f64> = (0..n)
                .map(|i| null_fit.fitted[i] + null_fit.residuals[order[i]])
                .collect();
            let f_b = extended_fit.frozen_max_f(&y_b, &added_idx);
            usize::from(f_b >= f_observed)
        })
        .sum();
    Ok(PermFResult {
        f_observed,
        p_value: (1 + exceed) as f64 / (1 + b) as f64,
        n_permutations: b,
        seed,
        added_terms,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn intercept() -> TermSpec {
        TermSpec::Intercept
    }

    fn smooth(name: &str, values: Vec<f64>, lambda: Lambda) -> TermSpec {
        TermSpec::Smooth {
            name: name.to_string(),
            values,
            n_knots: 10,
            mask: None,
            drop_linear: false,
            lambda,
        }
    }

    fn ols_line(x: &[f64], y: &[f64]) -> (f64, f64) {
        let n = x.len() as f64;
        let mx = x.iter().sum::<f64>() / n;
        let my = y.iter().sum::<f64>() / n;
        let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
        let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
        (sxy / sxx, my - sxy / sxx * mx)
    }

    #[test]
    fn intercept_only_model_recovers_the_mean() {
        let y = [1.0, 4.0, 2.5, 0.5];
        let spec = GamSpec {
            terms: vec![intercept()],
        };
        let fit = fit_pgam(&spec, &y, &FitOptions::default()).expect("fit succeeds");
        let mean = y.iter().sum::<f64>() / y.len() as f64;
        for f in &fit.fitted {
            assert!((f - mean).abs() < 1e-12, "fitted {f} is not the mean {mean}");
        }
        assert!((fit.edf - 1.0).abs() < 1e-10, "edf should be 1, got {}", fit.edf);
    }

    #[test]
    fn linear_term_matches_ordinary_least_squares() {
        let x: Vec<f64> = (0..30).map(|i| i as f64 / 3.0).collect();
        let y: Vec<f64> = x
            .iter()
            .enumerate()
            .map(|(i, &v)| 2.0 * v - 1.0 + if i % 2 == 0 { 0.3 } else { -0.3 })
            .collect();
        let spec = GamSpec {
            terms: vec![
                intercept(),
                TermSpec::Linear {
                    name: "x".to_string(),
                    values: x.clone(),
                },
            ],
        };
        let fit = fit_pgam(&spec, &y, &FitOptions::default()).expect("fit succeeds");
        let (slope, icept) = ols_line(&x, &y);
        assert!((fit.coefficients[0] - icept).abs() < 1e-10);
        assert!((fit.coefficients[1] - slope).abs() < 1e-10);
    }

    #[test]
    fn heavily_penalized_smooth_collapses_to_the_least_squares_line() {
        let x: Vec<f64> = (0..40).map(|i| i as f64 / 4.0).collect();
        let y: Vec<f64> = x.iter().map(|&v| (v * 0.9).sin() + 0.1 * v).collect();
        let spec = GamSpec {
            terms: vec![intercept(), smooth("s(x)", x.clone(), Lambda::Fixed(1e12))],
        };
        let fit = fit_pgam(&spec, &y, &FitOptions::default()).expect("fit succeeds");
        let (slope, icept) = ols_line(&x, &y);
        for (xi, f) in x.iter().zip(&fit.fitted) {
            let line = slope * xi + icept;
            assert!(
                (f - line).abs() < 1e-6,
                "heavy penalty should collapse to the line: fitted {f}, line {line}"
            );
        }
    }

    #[test]
    fn unpenalized_smooth_reproduces_a_cubic_exactly() {
        let x: Vec<f64> = (0..40).map(|i| i as f64 / 4.0).collect();
        let y: Vec<f64> = x.iter().map(|&v| v * v * v - 5.0 * v * v + 2.0).collect();
        let spec = GamSpec {
            terms: vec![intercept(), smooth("s(x)", x.clone(), Lambda::Fixed(0.0))],
        };
        let fit = fit_pgam(&spec, &y, &FitOptions::default()).expect("fit succeeds");
        for (f, t) in fit.fitted.iter().zip(&y) {
            assert!(
                (f - t).abs() < 1e-10,
                "unpenalized cubic should be exact: fitted {f}, true {t}"
            );
        }
    }

    #[test]
    fn gcv_smooth_tracks_a_sine_signal() {
        let mut rng = crate::rng::stream(7, 0);
        let x: Vec<f64> = (0..120).map(|i| i as f64 / 119.0 * 6.0).collect();
        let truth: Vec<f64> = x.iter().map(|&v| v.sin()).collect();
        let y: Vec<f64> = truth
            .iter()
            .map(|t| t + 0.1 * (rng.gen::<f64>() - 0.5))
            .collect();
        let spec = GamSpec {
            terms: vec![intercept(), smooth("s(x)", x.clone(), Lambda::Gcv)],
        };
        let fit = fit_pgam(&spec, &y, &FitOptions::default()).expect("fit succeeds");
        let mf = fit.fitted.iter().sum::<f64>() / x.len() as f64;
        let mt = truth.iter().sum::<f64>() / x.len() as f64;
        let num: f64 = fit
            .fitted
            .iter()
            .zip(&truth)
            .map(|(f, t)| (f - mf) * (t - mt))
            .sum();
        let df: f64 = fit.fitted.iter().map(|f| (f - mf) * (f - mf)).sum();
        let dt: f64 = truth.iter().map(|t| (t - mt) * (t - mt)).sum();
        let corr = num / (df * dt).sqrt();
        assert!(
            corr > 0.99,
            "fitted curve should track the signal, correlation {corr}"
        );
        let report = &fit.terms[1];
        assert!(report.lambda.is_some(), "GCV must record a chosen lambda");
        assert!(report.edf > 2.0, "a sine needs more than a line, edf {}", report.edf);
    }

    #[test]
    fn factor_term_uses_deviation_coding() {
        let levels: Vec<String> = ["a", "b", "a", "b", "a", "b"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let y = [1.0, 3.0, 1.2, 3.2, 0.8, 2.8];
        let spec = GamSpec {
            terms: vec![
                intercept(),
                TermSpec::Factor {
                    name: "grp".to_string(),
                    levels,
                },
            ],
        };
        let fit = fit_pgam(&spec, &y, &FitOptions::default()).expect("fit succeeds");
        let grand = y.iter().sum::<f64>() / y.len() as f64;
        assert!((fit.coefficients[0] - grand).abs() < 1e-10);
        let effects = &fit.level_effects["grp"];
        let sum: f64 = effects.values().sum();
        assert!(sum.abs() < 1e-10, "deviation effects must sum to zero, got {sum}");
        assert!((effects["a"] - (1.0 - grand)).abs() < 1e-10);
        assert!((effects["b"] - (3.0 - grand)).abs() < 1e-10);
    }

    #[test]
    fn random_intercept_shrinks_with_the_ridge_penalty() {
        let levels: Vec<String> = (0..20)
            .map(|i| if i < 10 { "g1" } else { "g2" }.to_string())
            .collect();
        let y: Vec<f64> = (0..20).map(|i| if i < 10 { 1.0 } else { -1.0 }).collect();
        let fit_at = |lam: f64| {
            let spec = GamSpec {
                terms: vec![
                    intercept(),
                    TermSpec::RandomIntercept {
                        name: "grp".to_string(),
                        levels: levels.clone(),
                        lambda: Lambda::Fixed(lam),
                    },
                ],
            };
            fit_pgam(&spec, &y, &FitOptions::default()).expect("fit succeeds")
        };
        let loose = fit_at(1e-8);
        let tight = fit_at(1e6);
        let spread = |fit: &GamFit| {
            let e = &fit.level_effects["grp"];
            (e["g1"] - e["g2"]).abs()
        };
        assert!((spread(&loose) - 2.0).abs() < 1e-3, "weak ridge should recover the gap");
        assert!(
            spread(&tight) < 1e-2,
            "strong ridge should shrink effects toward zero, got {}",
            spread(&tight)
        );
    }

    #[test]
    fn groupwise_smooth_fits_a_different_curve_per_group() {
        let mut xs = Vec::new();
        let mut groups = Vec::new();
        let mut y = Vec::new();
        for i in 0..60 {
            let x = i as f64 / 59.0 * 6.0;
            xs.push(x);
            groups.push("g1".to_string());
            y.push(x.sin());
        }
        for i in 0..60 {
            let x = i as f64 / 59.0 * 6.0;
            xs.push(x);
            groups.push("g2".to_string());
            y.push(x.cos() + 3.0);
        }
        let spec = GamSpec {
            terms: vec![
                intercept(),
                TermSpec::Factor {
                    name: "grp".to_string(),
                    levels: groups.clone(),
                },
                TermSpec::YearwiseSmooth {
                    name: "s(x)".to_string(),
                    values: xs,
                    groups,
                    n_knots: 10,
                    lambda: Lambda::Fixed(1e-6),
                },
            ],
        };
        let fit = fit_pgam(&spec, &y, &FitOptions::default()).expect("fit succeeds");
        for (f, t) in fit.fitted.iter().zip(&y) {
            assert!(
                (f - t).abs() < 0.02,
                "groupwise smooth should track both curves: fitted {f}, true {t}"
            );
        }
        assert_eq!(fit.terms[2].kind, "yearwise_smooth");
    }

    #[test]
    fn duplicate_term_names_are_rejected() {
        let spec = GamSpec {
            terms: vec![
                TermSpec::Linear {
                    name: "x".to_string(),
                    values: vec![1.0, 2.0, 3.0],
                },
                TermSpec::Linear {
                    name: "x".to_string(),
                    values: vec![3.0, 2.0, 1.0],
                },
            ],
        };
        let err = fit_pgam(&spec, &[1.0, 2.0, 3.0], &FitOptions::default()).unwrap_err();
        assert!(matches!(err, ModelError::InvalidSmooth(_)));
    }

    #[test]
    fn response_length_mismatch_is_rejected() {
        let spec = GamSpec {
            terms: vec![TermSpec::Linear {
                name: "x".to_string(),
                values: vec![1.0, 2.0, 3.0],
            }],
        };
        let err = fit_pgam(&spec, &[1.0, 2.0], &FitOptions::default()).unwrap_err();
        assert!(matches!(err, ModelError::SizeMismatch { .. }));
    }

    #[test]
    fn collinear_linear_terms_are_named_in_the_error() {
        let v: Vec<f64> = (0..10).map(|i| i as f64 - 4.5).collect();
        let spec = GamSpec {
            terms: vec![
                intercept(),
                TermSpec::Linear {
                    name: "a".to_string(),
                    values: v.clone(),
                },
                TermSpec::Linear {
                    name: "b".to_string(),
                    values: v.clone(),
                },
            ],
        };
        let y: Vec<f64> = v.iter().map(|x| x + 1.0).collect();
        let err = fit_pgam(&spec, &y, &FitOptions::default()).unwrap_err();
        match err {
            ModelError::RankDeficient { terms } => {
                assert!(terms.contains(&"a".to_string()), "missing 'a' in {terms:?}");
                assert!(terms.contains(&"b".to_string()), "missing 'b' in {terms:?}");
            }
            other => panic!("expected RankDeficient, got {other:?}"),
        }
    }

    #[test]
    fn smooth_curve_points_carry_positive_standard_errors() {
        let mut rng = crate::rng::stream(11, 0);
        let x: Vec<f64> = (0..80).map(|i| i as f64 / 10.0).collect();
        let y: Vec<f64> = x
            .iter()
            .map(|&v| (v * 0.8).sin() + 0.2 * (rng.gen::<f64>() - 0.5))
            .collect();
        let spec = GamSpec {
            terms: vec![intercept(), smooth("s(x)", x, Lambda::Gcv)],
        };
        let fit = fit_pgam(&spec, &y, &FitOptions::default()).expect("fit succeeds");
        let curves = fit.smooth_curves(25);
        assert_eq!(curves.len(), 1);
        let (label, points) = &curves[0];
        assert_eq!(label, "s(x)");
        assert_eq!(points.len(), 25);
        for p in points {
            assert!(p.fit.is_finite(), "curve fit must be finite at {}", p.x);
            assert!(p.se.is_finite() && p.se > 0.0, "se must be positive at {}", p.x);
        }
    }

    #[test]
    fn permutation_test_detects_a_strong_nonlinearity() {
        let x: Vec<f64> = (0..80).map(|i| i as f64 / 79.0).collect();
        let y: Vec<f64> = x.iter().map(|&v| (v * 12.0).sin()).collect();
        let null = GamSpec {
            terms: vec![intercept()],
        };
        let extended = GamSpec {
            terms: vec![intercept(), smooth("s(x)", x, Lambda::Gcv)],
        };
        let res =
            perm_f_test(&null, &extended, &y, 199, 5, &FitOptions::default()).expect("test runs");
        assert!(
            res.p_value <= 0.01,
            "a pure sine should be detected, p {}",
            res.p_value
        );
        assert_eq!(res.added_terms, vec!["s(x)".to_string()]);
    }

    #[test]
    fn permutation_test_keeps_pure_noise_at_a_moderate_p_value() {
        let mut rng = crate::rng::stream(23, 0);
        let x: Vec<f64> = (0..60).map(|i| i as f64 / 59.0).collect();
        let y: Vec<f64> = (0..60).map(|_| rng.gen::<f64>() - 0.5).collect();
        let null = GamSpec {
            terms: vec![intercept()],
        };
        let extended = GamSpec {
            terms: vec![intercept(), smooth("s(x)", x, Lambda::Gcv)],
        };
        let res =
            perm_f_test(&null, &extended, &y, 199, 6, &FitOptions::default()).expect("test runs");
        assert!(
            res.p_value > 0.05,
            "noise should not look like signal, p {}",
            res.p_value
        );
    }

    #[test]
    fn permutation_test_requires_nesting() {
        let x: Vec<f64> = (0..20).map(f64::from).collect();
        let null = GamSpec {
            terms: vec![
                intercept(),
                TermSpec::Linear {
                    name: "a".to_string(),
                    values: x.clone(),
                },
            ],
        };
        let extended = GamSpec {
            terms: vec![intercept(), smooth("s(x)", x.clone(), Lambda::Gcv)],
        };
        let y: Vec<f64> = x.iter().map(|v| v * 0.1).collect();
        let err = perm_f_test(&null, &extended, &y, 9, 1, &FitOptions::default()).unwrap_err();
        assert!(matches!(err, ModelError::NotNested(_)));
    }

    #[test]
    fn permutation_test_requires_added_smooth_terms() {
        let x: Vec<f64> = (0..20).map(f64::from).collect();
        let null = GamSpec {
            terms: vec![intercept()],
        };
        let same = null.clone();
        let y: Vec<f64> = x.iter().map(|v| v * 0.1).collect();
        let err = perm_f_test(&null, &same, &y, 9, 1, &FitOptions::default()).unwrap_err();
        assert!(matches!(err, ModelError::NotNested(_)));
        let linear_only = GamSpec {
            terms: vec![
                intercept(),
                TermSpec::Linear {
                    name: "a".to_string(),
                    values: x,
                },
            ],
        };
        let err = perm_f_test(&null, &linear_only, &y, 9, 1, &FitOptions::default()).unwrap_err();
        assert!(matches!(err, ModelError::NotNested(_)));
    }

    #[test]
    fn zero_permutations_is_an_error() {
        let null = GamSpec {
            terms: vec![intercept()],
        };
        let extended = GamSpec {
            terms: vec![
                intercept(),
                smooth("s(x)", (0..20).map(f64::from).collect(), Lambda::Gcv),
            ],
        };
        let y: Vec<f64> = (0..20).map(|i| i as f64).collect();
        let err = perm_f_test(&null, &extended, &y, 0, 1, &FitOptions::default()).unwrap_err();
        assert!(matches!(err, ModelError::NoPermutations));
    }

    #[test]
    fn affine_response_transformation_preserves_the_permutation_p_value() {
        let mut rng = crate::rng::stream(31, 0);
        let x: Vec<f64> = (0..50).map(|i| i as f64 / 49.0).collect();
        let y: Vec<f64> = x
            .iter()
            .map(|&v| (v * 7.0).sin() + 0.5 * (rng.gen::<f64>() - 0.5))
            .collect();
        let y2: Vec<f64> = y.iter().map(|v| -2.5 * v + 3.0).collect();
        let null = GamSpec {
            terms: vec![intercept()],
        };
        let extended = GamSpec {
            terms: vec![intercept(), smooth("s(x)", x, Lambda::Fixed(1e-2))],
        };
        let opts = FitOptions::default();
        let r1 = perm_f_test(&null, &extended, &y, 99, 9, &opts).expect("test runs");
        let r2 = perm_f_test(&null, &extended, &y2, 99, 9, &opts).expect("test runs");
        assert_eq!(
            r1.p_value, r2.p_value,
            "an affine response change must not move the p-value"
        );
        assert!(
            (r1.f_observed - r2.f_observed).abs() < 1e-9 * r1.f_observed.abs().max(1.0),
            "F is scale-free: {} vs {}",
            r1.f_observed,
            r2.f_observed
        );
    }

    #[test]
    fn masked_smooth_leaves_unmasked_rows_untouched() {
        let x: Vec<f64> = (0..40).map(|i| i as f64 / 4.0).collect();
        let mask: Vec<bool> = (0..40).map(|i| i < 20).collect();
        let spec = GamSpec {
            terms: vec![
                intercept(),
                TermSpec::Smooth {
                    name: "s(x)".to_string(),
                    values: x.clone(),
                    n_knots: 6,
                    mask: Some(mask),
                    drop_linear: false,
                    lambda: Lambda::Fixed(1e-4),
                },
            ],
        };
        let y: Vec<f64> = x.iter().map(|&v| v.sin()).collect();
        let fit = fit_pgam(&spec, &y, &FitOptions::default()).expect("fit succeeds");
        let intercept_hat = fit.coefficients[0];
        for i in 20..40 {
            assert!(
                (fit.fitted[i] - intercept_hat).abs() < 1e-10,
                "masked-out rows should see only the intercept"
            );
        }
    }
}
