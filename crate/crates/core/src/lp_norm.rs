//! Weighted discrete `L^p` BSA, `1 <= p < inf`.
//!
//! The objective is `max_a ||F[a] - Bc||_{p,m}` with
//! `||f||_{p,m} = (sum_s m_s |f(s)|^p)^{1/p}`. A certificate consists of
//! parameters `a_i`, weights `lambda_i` and dual functions `g_i` in the unit
//! ball of `L^q` such that
//!
//! ```text
//! (i)   sum_s m_s (sum_i lambda_i g_i(s)) B_j(s) = 0                  for every j
//! (ii)  sum_s m_s g_i(s) r_{a_i}(s) = ||r_{a_i}||_p = max_a ||r_a||_p
//! ```
//!
//! Only scalar codomains (`d = 1`) are supported here.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::norm_inf;
use crate::lp::{solve_lp_with, LpError, LpOptions, LpProblem, LpStatus, RowSense};
use crate::minimax::{
    caratheodory, solve_minimax, ConvexOracle, MinimaxDiagnostics, MinimaxError, MinimaxInstance,
    MinimaxOptions,
};
use crate::problem::{Coefficients, MeasureGrid, ProblemError, SampledProblem};
use crate::report::{Check, Report};
use crate::uniform::{default_start, least_squares_start};

#[derive(Debug, Error)]
pub enum LpBsaError {
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Minimax(#[from] MinimaxError),
    #[error(transparent)]
    Lp(#[from] LpError),
    #[error("residual is identically zero; it has no norming functional")]
    ZeroResidual,
    #[error("inconsistent certificate: {0}")]
    Inconsistent(String),
}

type Result<T> = std::result::Result<T, LpBsaError>;

/// `(sum_s m_s |f(s)|^p)^{1/p}`.
pub fn lp_norm(f: &[f64], measure: &MeasureGrid) -> f64 {
    let p = measure.p();
    let w = measure.weights();
    if p == 1.0 {
        return f.iter().zip(w).map(|(v, m)| m * v.abs()).sum();
    }
    // Scale first so large or tiny tables do not overflow in |f|^p.
    let scale = norm_inf(f);
    if scale == 0.0 {
        return 0.0;
    }
    let s: f64 = f.iter().zip(w).map(|(v, m)| m * (v.abs() / scale).powf(p)).sum();
    scale * s.powf(1.0 / p)
}

/// `||g||_q` with `q = p / (p - 1)`; the sup norm when `p = 1`.
pub fn dual_norm(g: &[f64], measure: &MeasureGrid) -> f64 {
    let q = measure.q();
    if q.is_infinite() {
        return norm_inf(g);
    }
    let scale = norm_inf(g);
    if scale == 0.0 {
        return 0.0;
    }
    let s: f64 = g
        .iter()
        .zip(measure.weights())
        .map(|(v, m)| m * (v.abs() / scale).powf(q))
        .sum();
    scale * s.powf(1.0 / q)
}

/// `sum_s m_s g(s) f(s)`.
pub fn pairing(g: &[f64], f: &[f64], measure: &MeasureGrid) -> f64 {
    g.iter().zip(f).zip(measure.weights()).map(|((a, b), m)| m * a * b).sum()
}

/// An element of the unit ball of `L^q` tabulated on the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct DualFunction {
    pub g: Vec<f64>,
    pub q: f64,
}

impl DualFunction {
    pub fn norm(&self, measure: &MeasureGrid) -> f64 {
        dual_norm(&self.g, measure)
    }

    pub fn pair(&self, f: &[f64], measure: &MeasureGrid) -> f64 {
        pairing(&self.g, f, measure)
    }
}

/// The `g` attaining `sum_s m_s g(s) r(s) = ||r||_p` with `||g||_q = 1`:
/// `sign(r) |r|^{p-1} / ||r||_p^{p-1}`, and `sign(r)` (with `sign(0) = 0`)
/// when `p = 1`.
pub fn norming_functional(r: &[f64], measure: &MeasureGrid) -> Result<DualFunction> {
    let p = measure.p();
    let norm = lp_norm(r, measure);
    if norm == 0.0 {
        return Err(LpBsaError::ZeroResidual);
    }
    let sign = |v: f64| {
        if v > 0.0 {
            1.0
        } else if v < 0.0 {
            -1.0
        } else {
            0.0
        }
    };
    let g = if p == 1.0 {
        r.iter().map(|&v| sign(v)).collect()
    } else {
        r.iter()
            .map(|&v| sign(v) * (v.abs() / norm).powf(p - 1.0))
            .collect()
    };
    Ok(DualFunction { g, q: measure.q() })
}

fn measure_of(problem: &SampledProblem) -> Result<&MeasureGrid> {
    problem
        .measure
        .as_ref()
        .ok_or_else(|| ProblemError::Invalid("L^p problem needs a measure".into()).into())
}

fn require_scalar(problem: &SampledProblem) -> Result<()> {
    if problem.dim() != 1 {
        return Err(ProblemError::Invalid(format!(
            "L^p approximation supports codomain_dim = 1 only (got {})",
            problem.dim()
        ))
        .into());
    }
    Ok(())
}

/// Residual table `F[a] - Bc` over the grid (scalar codomain).
pub fn residual_table(problem: &SampledProblem, c: &[f64], a: usize) -> Vec<f64> {
    (0..problem.domain.len())
        .map(|x| problem.residual_at(c, a, x)[0])
        .collect()
}

/// `||F[a] - Bc||_{p,m}` for every parameter, in label order.
pub fn lp_deviations(problem: &SampledProblem, c: &[f64]) -> Vec<f64> {
    let measure = problem.measure.as_ref().expect("L^p objective needs a measure");
    (0..problem.params.len())
        .map(|a| lp_norm(&residual_table(problem, c, a), measure))
        .collect()
}

/// `max_a ||F[a] - Bc||_{p,m}`.
///
/// # Panics
///
/// If the problem has no measure.
pub fn max_lp_deviation(problem: &SampledProblem, c: &[f64]) -> f64 {
    lp_deviations(problem, c).into_iter().fold(0.0, f64::max)
}

/// `J(c, a) = ||F[a] - Bc||_{p,m}` over the parameters.
pub struct LpOracle<'p> {
    problem: &'p SampledProblem,
    measure: &'p MeasureGrid,
}

impl<'p> LpOracle<'p> {
    pub fn new(problem: &'p SampledProblem) -> Result<Self> {
        require_scalar(problem)?;
        Ok(Self {
            problem,
            measure: measure_of(problem)?,
        })
    }

    /// `(sum_s m_s g(s) B_j(s))_j`.
    fn project(&self, g: &[f64]) -> Vec<f64> {
        let w = self.measure.weights();
        (0..self.problem.n())
            .map(|j| {
                (0..g.len())
                    .map(|s| w[s] * g[s] * self.problem.basis.value(j, s)[0])
                    .sum()
            })
            .collect()
    }
}

impl ConvexOracle for LpOracle<'_> {
    fn dim(&self) -> usize {
        self.problem.n()
    }

    fn len(&self) -> usize {
        self.problem.params.len()
    }

    fn value(&self, u: &[f64], v: usize) -> f64 {
        lp_norm(&residual_table(self.problem, u, v), self.measure)
    }

    fn eval(&self, u: &[f64], v: usize) -> (f64, Vec<f64>) {
        let r = residual_table(self.problem, u, v);
        let norm = lp_norm(&r, self.measure);
        match norming_functional(&r, self.measure) {
            Ok(g) => (norm, self.project(&g.g).iter().map(|x| -x).collect()),
            Err(_) => (norm, vec![0.0; self.problem.n()]),
        }
    }

    fn hessian(&self, u: &[f64], v: usize) -> Option<DMatrix<f64>> {
        let n = self.problem.n();
        let p = self.measure.p();
        let r = residual_table(self.problem, u, v);
        let norm = lp_norm(&r, self.measure);
        if p == 1.0 || norm == 0.0 {
            return Some(DMatrix::zeros(n, n));
        }
        let g = norming_functional(&r, self.measure).ok()?.g;
        let w = self.measure.weights();
        let m = r.len();
        // d^2 J / dr_s dr_t = (p-1) [m_s |r_s|^{p-2} delta_st / J^{p-1} - m_s g_s m_t g_t / J].
        // |r_s| is clamped away from zero so p < 2 stays finite.
        let floor = 1e-8 * norm_inf(&r);
        let diag: Vec<f64> = (0..m)
            .map(|s| (p - 1.0) * w[s] * r[s].abs().max(floor).powf(p - 2.0) / norm.powf(p - 1.0))
            .collect();
        let mg: Vec<f64> = (0..m).map(|s| w[s] * g[s]).collect();
        let bmat = DMatrix::from_fn(m, n, |s, j| self.problem.basis.value(j, s)[0]);
        let mut h = DMatrix::zeros(n, n);
        for s in 0..m {
            for i in 0..n {
                for j in 0..n {
                    h[(i, j)] += diag[s] * bmat[(s, i)] * bmat[(s, j)];
                }
            }
        }
        let bg = bmat.transpose() * nalgebra::DVector::from_vec(mg);
        h -= (p - 1.0) / norm * &bg * bg.transpose();
        Some(h)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpCertificate {
    pub params: Vec<String>,
    pub lambdas: Vec<f64>,
    pub duals: Vec<DualFunction>,
    pub p: f64,
    pub value: f64,
}

/// Serialized form of [`LpCertificate`] with duals keyed by point label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpCertificateFile {
    pub params: Vec<String>,
    pub lambdas: Vec<f64>,
    pub duals: Vec<BTreeMap<String, f64>>,
    pub p: f64,
    pub value: f64,
}

impl LpCertificate {
    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn to_file(&self, problem: &SampledProblem) -> LpCertificateFile {
        LpCertificateFile {
            params: self.params.clone(),
            lambdas: self.lambdas.clone(),
            duals: self
                .duals
                .iter()
                .map(|d| {
                    d.g.iter()
                        .enumerate()
                        .map(|(s, v)| (problem.domain.label(s).to_string(), *v))
                        .collect()
                })
                .collect(),
            p: self.p,
            value: self.value,
        }
    }
}

impl LpCertificateFile {
    /// Resolves point labels against the problem's grid.
    pub fn resolve(&self, problem: &SampledProblem) -> std::result::Result<LpCertificate, ProblemError> {
        let measure = problem
            .measure
            .as_ref()
            .ok_or_else(|| ProblemError::Invalid("L^p certificate needs a problem with a measure".into()))?;
        if self.lambdas.len() != self.params.len() || self.duals.len() != self.params.len() {
            return Err(ProblemError::Dimension(format!(
                "certificate lists {} params, {} weights and {} duals",
                self.params.len(),
                self.lambdas.len(),
                self.duals.len()
            )));
        }
        let m = problem.domain.len();
        let mut duals = Vec::with_capacity(self.duals.len());
        for table in &self.duals {
            let mut g = vec![f64::NAN; m];
            for (label, v) in table {
                g[problem.domain.index_of(label)?] = *v;
            }
            if let Some(s) = g.iter().position(|v| v.is_nan()) {
                return Err(ProblemError::MissingEntry(format!(
                    "dual function has no value at point `{}`",
                    problem.domain.label(s)
                )));
            }
            duals.push(DualFunction { g, q: measure.q() });
        }
        for a in &self.params {
            problem.params.index_of(a)?;
        }
        Ok(LpCertificate {
            params: self.params.clone(),
            lambdas: self.lambdas.clone(),
            duals,
            p: self.p,
            value: self.value,
        })
    }
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub coefficients: Coefficients,
    pub value: f64,
    pub certificate: LpCertificate,
    pub diagnostics: MinimaxDiagnostics,
}

/// Solves `min_c max_a ||F[a] - Bc||_{p,m}` by cutting planes.
pub fn solve_lp_bsa(problem: &SampledProblem) -> Result<LpSolution> {
    let measure = measure_of(problem)?;
    let oracle = LpOracle::new(problem)?;
    let opts = MinimaxOptions {
        start: Some(default_start(least_squares_start(problem))),
        max_iter: if measure.p() < 1.2 { 2000 } else { 500 },
        ..Default::default()
    };
    let sol = solve_minimax(MinimaxInstance::Oracle(&oracle), &opts)?;
    let value = max_lp_deviation(problem, &sol.u);
    let certificate = lp_certificate_at(problem, &sol.u, value)?;
    Ok(LpSolution {
        coefficients: Coefficients(sol.u),
        value,
        certificate,
        diagnostics: sol.diagnostics,
    })
}

/// Builds a certificate at `c` for the certified value `value`.
///
/// Parameters within `1e-7 (1 + value)` of the maximum are candidates.
/// Their weights minimize `||sum_a lambda_a G_a||_inf`, `G_a` being the
/// projection of `g_a` on the basis. For `p > 1` each `g_a` is the unique
/// norming functional. For `p = 1` the values of `g_a` at (numerically) zero
/// residuals are free in `[-1, 1]` and chosen by the same LP.
pub fn lp_certificate_at(problem: &SampledProblem, c: &[f64], value: f64) -> Result<LpCertificate> {
    let measure = measure_of(problem)?;
    require_scalar(problem)?;
    let n = problem.n();
    let m = problem.domain.len();
    let p = measure.p();
    let w = measure.weights();
    let norms = lp_deviations(problem, c);
    let residuals: Vec<Vec<f64>> = (0..problem.params.len())
        .map(|a| residual_table(problem, c, a))
        .collect();
    let scale = 1.0
        + (0..problem.params.len())
            .flat_map(|a| (0..m).map(move |x| (a, x)))
            .map(|(a, x)| problem.family.value(a, x)[0].abs())
            .fold(0.0, f64::max);

    if value <= 1e-12 * scale {
        return Ok(LpCertificate {
            params: vec![problem.params.label(0).to_string()],
            lambdas: vec![1.0],
            duals: vec![DualFunction {
                g: vec![0.0; m],
                q: measure.q(),
            }],
            p,
            value,
        });
    }

    let band = 1e-7 * (1.0 + value);
    let candidates: Vec<usize> = (0..problem.params.len())
        .filter(|&a| norms[a] >= value - band)
        .collect();
    let zero_tol = 1e-8 * scale;
    let mut fixed: Vec<Vec<f64>> = Vec::new();
    let mut free: Vec<(usize, usize)> = Vec::new(); // (candidate index, point)
    for (k, &a) in candidates.iter().enumerate() {
        let r = &residuals[a];
        let g = if p == 1.0 {
            let mut g = vec![0.0; m];
            for s in 0..m {
                if r[s].abs() > zero_tol {
                    g[s] = r[s].signum();
                } else {
                    free.push((k, s));
                }
            }
            g
        } else {
            norming_functional(r, measure)?.g
        };
        fixed.push(g);
    }
    let basis = |j: usize, s: usize| problem.basis.value(j, s)[0];
    let project = |g: &[f64]| -> Vec<f64> {
        (0..n)
            .map(|j| (0..m).map(|s| w[s] * g[s] * basis(j, s)).sum())
            .collect()
    };
    let projected: Vec<Vec<f64>> = fixed.iter().map(|g| project(g)).collect();

    // Symmetric ties: equal weights on every maximal parameter already
    // annihilate the subspace, so keep them rather than a sparser vertex.
    if free.is_empty() && candidates.len() <= n + 1 {
        let kc = candidates.len() as f64;
        let size = projected.iter().flatten().fold(0.0_f64, |m, v| m.max(v.abs()));
        let residual = (0..n)
            .map(|j| projected.iter().map(|v| v[j] / kc).sum::<f64>().abs())
            .fold(0.0, f64::max);
        if residual <= 1e-12 * (1.0 + size) {
            return Ok(LpCertificate {
                params: candidates.iter().map(|&a| problem.params.label(a).to_string()).collect(),
                lambdas: vec![1.0 / kc; candidates.len()],
                duals: fixed.into_iter().map(|g| DualFunction { g, q: measure.q() }).collect(),
                p,
                value,
            });
        }
    }

    // Variables: lambda (K), w (free points), t.
    let kc = candidates.len();
    let nf = free.len();
    let nv = kc + nf + 1;
    let mut objective = vec![0.0; nv];
    objective[nv - 1] = 1.0;
    let mut lp = LpProblem::new(objective);
    for i in kc..kc + nf {
        lp.set_free(i);
    }
    let mut ones = vec![0.0; nv];
    ones[..kc].iter_mut().for_each(|v| *v = 1.0);
    lp.add_row(ones, RowSense::Eq, 1.0);
    for j in 0..n {
        let mut row = vec![0.0; nv];
        for k in 0..kc {
            row[k] = projected[k][j];
        }
        for (i, &(_, s)) in free.iter().enumerate() {
            row[kc + i] = w[s] * basis(j, s);
        }
        let mut neg: Vec<f64> = row.iter().map(|v| -v).collect();
        row[nv - 1] = -1.0;
        neg[nv - 1] = -1.0;
        lp.add_row(row, RowSense::Le, 0.0);
        lp.add_row(neg, RowSense::Le, 0.0);
    }
    for (i, &(k, _)) in free.iter().enumerate() {
        let mut up = vec![0.0; nv];
        up[kc + i] = 1.0;
        up[k] = -1.0;
        let mut down = vec![0.0; nv];
        down[kc + i] = -1.0;
        down[k] = -1.0;
        lp.add_row(up, RowSense::Le, 0.0);
        lp.add_row(down, RowSense::Le, 0.0);
    }
    let res = solve_lp_with(&lp, &LpOptions::default())?;
    if res.status != LpStatus::Optimal {
        return Err(LpBsaError::Inconsistent("certificate weight LP failed".into()));
    }
    let mut lambdas: Vec<f64> = res.x[..kc].iter().map(|v| v.max(0.0)).collect();
    let total: f64 = lambdas.iter().sum();
    lambdas.iter_mut().for_each(|l| *l /= total);
    let mut duals = fixed;
    for (i, &(k, s)) in free.iter().enumerate() {
        if res.x[k] > 0.0 {
            duals[k][s] = (res.x[kc + i] / res.x[k]).clamp(-1.0, 1.0);
        }
    }
    let projected: Vec<Vec<f64>> = duals.iter().map(|g| project(g)).collect();
    caratheodory(&mut lambdas, &projected, n);

    let mut cert = LpCertificate {
        params: Vec::new(),
        lambdas: Vec::new(),
        duals: Vec::new(),
        p,
        value,
    };
    let total: f64 = lambdas.iter().filter(|l| **l > 0.0).sum();
    for (k, &a) in candidates.iter().enumerate() {
        if lambdas[k] <= 0.0 {
            continue;
        }
        if norms[a] <= zero_tol {
            return Err(LpBsaError::Inconsistent(format!(
                "zero residual at support parameter `{}` with value {value:e}",
                problem.params.label(a)
            )));
        }
        cert.params.push(problem.params.label(a).to_string());
        cert.lambdas.push(lambdas[k] / total);
        cert.duals.push(DualFunction {
            g: duals[k].clone(),
            q: measure.q(),
        });
    }
    Ok(cert)
}

/// Checks conditions (i) and (ii) of an `L^p` certificate at `c`.
pub fn verify_lp_certificate(
    problem: &SampledProblem,
    c: &Coefficients,
    cert: &LpCertificate,
    tol: f64,
) -> Result<Report> {
    problem.check_coefficients(c)?;
    let measure = measure_of(problem)?;
    require_scalar(problem)?;
    let k = cert.params.len();
    let m = problem.domain.len();
    if cert.lambdas.len() != k || cert.duals.len() != k || cert.duals.iter().any(|d| d.g.len() != m) {
        return Err(ProblemError::Dimension("certificate tables do not match the grid".into()).into());
    }
    let index: Vec<usize> = cert
        .params
        .iter()
        .map(|a| problem.params.index_of(a))
        .collect::<std::result::Result<_, _>>()?;
    let c = c.as_slice();
    let n = problem.n();
    let mut report = Report::new();

    let sum: f64 = cert.lambdas.iter().sum();
    report.check("structure: weights sum to one", (sum - 1.0).abs(), 1e-12);
    report.push(Check::flag(
        "structure: weights in (0, 1]",
        k > 0 && cert.lambdas.iter().all(|&l| l > 0.0 && l <= 1.0),
    ));
    report.push(Check::flag("structure: k <= n + 1", k <= n + 1));
    report.check(
        "structure: exponent matches measure",
        (cert.p - measure.p()).abs(),
        0.0,
    );
    let excess = cert
        .duals
        .iter()
        .map(|d| dual_norm(&d.g, measure) - 1.0)
        .fold(0.0, f64::max);
    report.check("structure: ||g_i||_q <= 1", excess, tol);

    let w = measure.weights();
    let mut orth = 0.0_f64;
    for j in 0..n {
        let s: f64 = (0..m)
            .map(|s| {
                let mix: f64 = cert.lambdas.iter().zip(&cert.duals).map(|(l, d)| l * d.g[s]).sum();
                w[s] * mix * problem.basis.value(j, s)[0]
            })
            .sum();
        orth = orth.max(s.abs());
    }
    report.check("(i) annihilates the subspace", orth, tol);

    let norms = lp_deviations(problem, c);
    let max = norms.iter().cloned().fold(0.0, f64::max);
    let mut pair_err = 0.0_f64;
    let mut max_err = 0.0_f64;
    for (&a, d) in index.iter().zip(&cert.duals) {
        let r = residual_table(problem, c, a);
        pair_err = pair_err.max((pairing(&d.g, &r, measure) - norms[a]).abs());
        max_err = max_err.max((norms[a] - max).abs());
    }
    report.check("(ii) pairing equals norm", pair_err, tol);
    report.check("(ii) norm equals maximum", max_err, tol);
    report.check("(ii) certified value equals maximum", (cert.value - max).abs(), tol);
    Ok(report)
}
