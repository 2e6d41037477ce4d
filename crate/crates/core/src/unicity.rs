//! Haar checks and the strong-unicity constant.
//!
//! For a scalar certificate with `k = n + 1` distinct points `x_i`, signs
//! `sigma_i` and nonzero deviation, the optimum `f*` satisfies
//!
//! ```text
//! max_a ||f_a - h|| >= max_a ||f_a - f*|| + gamma ||f* - h||     for all h in H,
//! gamma = min_{||h|| = 1} max_i sigma_i h(x_i).
//! ```
//!
//! `1 / gamma` is the largest `||h||_inf` over the polytope
//! `P = {c : sigma_i (Bc)(x_i) <= 1}`, attained at a vertex; each vertex
//! solves the `n x n` system of all rows but one.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use nalgebra::{DMatrix, DVector};

use crate::linalg::lu_solve;
use crate::problem::{Basis, Coefficients, DomainGrid, ProblemError, SampledProblem};
use crate::report::{Check, Report};
use crate::uniform::UniformCertificate;

#[derive(Debug, Error)]
pub enum UnicityError {
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error("strong unicity needs a scalar codomain (d = 1)")]
    NotScalar,
    #[error("k must equal n+1 (k = {k}, n = {n})")]
    WrongSupportSize { k: usize, n: usize },
    #[error("certificate is degenerate (delta = 0)")]
    Degenerate,
    #[error("repeated point `{0}`")]
    RepeatedPoint(String),
    #[error("singular {n}-point subset omitting `{omitted}`: basis is not Haar on the certificate points")]
    Singular { n: usize, omitted: String },
    #[error("vertex omitting `{0}` violates the remaining constraint; certificate signs are inconsistent")]
    Unbounded(String),
}

type Result<T> = std::result::Result<T, UnicityError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnicityData {
    pub gamma: f64,
    pub sigma: Vec<f64>,
    pub points: Vec<String>,
    pub delta: f64,
    /// Vertices of `P` as coefficient vectors.
    pub vertices: Vec<Vec<f64>>,
}

/// Summary written by `check_strong_unicity`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnicitySummary {
    pub gamma: f64,
    pub vertices: Vec<Vec<f64>>,
    pub min_ratio: f64,
    pub trials: usize,
    pub seed: u64,
}

fn scalar_row(basis: &Basis, x: usize) -> Vec<f64> {
    (0..basis.n()).map(|j| basis.value(j, x)[0]).collect()
}

/// Collocation determinants on `n`-point subsets of `domain` (by label).
///
/// A subset passes when `|det| > 1e-10` times the product of its row norms.
pub fn haar_check(basis: &Basis, domain: &DomainGrid, subsets: &[Vec<String>]) -> Result<Report> {
    if basis.dim() != 1 {
        return Err(UnicityError::NotScalar);
    }
    let n = basis.n();
    let mut report = Report::new();
    for subset in subsets {
        if subset.len() != n {
            return Err(ProblemError::Dimension(format!(
                "subset has {} points, expected n = {n}",
                subset.len()
            ))
            .into());
        }
        let mut idx = Vec::with_capacity(n);
        for label in subset {
            let i = domain.index_of(label)?;
            if idx.contains(&i) {
                return Err(UnicityError::RepeatedPoint(label.clone()));
            }
            idx.push(i);
        }
        let rows: Vec<Vec<f64>> = idx.iter().map(|&x| scalar_row(basis, x)).collect();
        let m = DMatrix::from_fn(n, n, |r, c| rows[r][c]);
        let det = m.determinant().abs();
        let scale: f64 = rows
            .iter()
            .map(|r| r.iter().map(|v| v * v).sum::<f64>().sqrt())
            .product();
        let threshold = 1e-10 * scale;
        report.push(Check {
            name: format!("haar: |det| on {{{}}} = {det:.6e}", subset.join(", ")),
            residual: det,
            tolerance: threshold,
            passed: det > threshold,
        });
    }
    Ok(report)
}

/// `gamma` by vertex enumeration, with `||h||_inf` taken over `dense_grid`.
///
/// Every label of `dense_grid` must be a point of the problem's grid, since
/// the basis is only known there.
pub fn strong_unicity_gamma(
    problem: &SampledProblem,
    cert: &UniformCertificate,
    dense_grid: &DomainGrid,
) -> Result<UnicityData> {
    if problem.dim() != 1 {
        return Err(UnicityError::NotScalar);
    }
    let n = problem.n();
    let k = cert.pairs.len();
    if cert.degenerate || !(cert.delta > 0.0) {
        return Err(UnicityError::Degenerate);
    }
    if k != n + 1 {
        return Err(UnicityError::WrongSupportSize { k, n });
    }
    let sigma = cert
        .signs()
        .ok_or_else(|| ProblemError::Dimension("scalar certificate needs 1-dimensional directions".into()))?;
    let mut idx = Vec::with_capacity(k);
    for pair in &cert.pairs {
        let x = problem.domain.index_of(&pair.point)?;
        if idx.contains(&x) {
            return Err(UnicityError::RepeatedPoint(pair.point.clone()));
        }
        idx.push(x);
    }
    let dense: Vec<usize> = (0..dense_grid.len())
        .map(|i| problem.domain.index_of(dense_grid.label(i)))
        .collect::<std::result::Result<_, _>>()?;

    let basis = &problem.basis;
    let rows: Vec<Vec<f64>> = idx
        .iter()
        .zip(&sigma)
        .map(|(&x, s)| scalar_row(basis, x).iter().map(|v| s * v).collect())
        .collect();
    let mut vertices = Vec::with_capacity(k);
    let mut largest = 0.0_f64;
    for omit in 0..k {
        let kept: Vec<&Vec<f64>> = rows.iter().enumerate().filter(|(i, _)| *i != omit).map(|(_, r)| r).collect();
        let m = DMatrix::from_fn(n, n, |r, c| kept[r][c]);
        let c = lu_solve(&m, &DVector::from_element(n, 1.0), 1e-12).ok_or_else(|| UnicityError::Singular {
            n,
            omitted: cert.pairs[omit].point.clone(),
        })?;
        let c: Vec<f64> = c.iter().copied().collect();
        let slack: f64 = rows[omit].iter().zip(&c).map(|(a, b)| a * b).sum();
        if slack > 1.0 + 1e-9 {
            return Err(UnicityError::Unbounded(cert.pairs[omit].point.clone()));
        }
        let norm = dense
            .iter()
            .map(|&x| basis.evaluate(&c, x)[0].abs())
            .fold(0.0, f64::max);
        largest = largest.max(norm);
        vertices.push(c);
    }
    Ok(UnicityData {
        gamma: 1.0 / largest,
        sigma,
        points: cert.pairs.iter().map(|p| p.point.clone()).collect(),
        delta: cert.delta,
        vertices,
    })
}

fn sup_norm_of(problem: &SampledProblem, c: &[f64]) -> f64 {
    (0..problem.domain.len())
        .map(|x| problem.basis.evaluate(c, x)[0].abs())
        .fold(0.0, f64::max)
}

/// Tests the strong-unicity inequality for `trials` competitors
/// `h = f* + B d`, `d` uniform in `[-1, 1]^n` (rejected when
/// `||B d||_inf < 1e-8`).
///
/// Reports the worst slack (tolerance `1e-10`) and the smallest observed
/// ratio `(max ||f_a - h|| - max ||f_a - f*||) / ||f* - h||` against
/// `gamma - 1e-8`.
pub fn check_strong_unicity(
    problem: &SampledProblem,
    c: &Coefficients,
    data: &UnicityData,
    trials: usize,
    seed: u64,
) -> Result<(Report, UnicitySummary)> {
    problem.check_coefficients(c)?;
    let n = problem.n();
    let base = problem.uniform_deviation(c.as_slice());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst_slack = f64::INFINITY;
    let mut min_ratio = f64::INFINITY;
    let mut h = vec![0.0; n];
    for _ in 0..trials {
        let (d, dist) = loop {
            let d: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..=1.0)).collect();
            let dist = sup_norm_of(problem, &d);
            if dist >= 1e-8 {
                break (d, dist);
            }
        };
        for j in 0..n {
            h[j] = c.0[j] + d[j];
        }
        let dev = problem.uniform_deviation(&h);
        worst_slack = worst_slack.min(dev - base - data.gamma * dist);
        min_ratio = min_ratio.min((dev - base) / dist);
    }
    let mut report = Report::new();
    report.check(
        "strong unicity: inequality slack",
        if trials == 0 { 0.0 } else { (-worst_slack).max(0.0) },
        1e-10,
    );
    report.check(
        "strong unicity: min ratio >= gamma",
        if trials == 0 { 0.0 } else { (data.gamma - min_ratio).max(0.0) },
        1e-8,
    );
    Ok((
        report,
        UnicitySummary {
            gamma: data.gamma,
            vertices: data.vertices.clone(),
            min_ratio,
            trials,
            seed,
        },
    ))
}
