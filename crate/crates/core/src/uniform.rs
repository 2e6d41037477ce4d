//! Uniform-norm BSA on the grid.
//!
//! For `d = 1` the problem `min_c max_{a,x} |F[a][x] - (Bc)(x)|` is one
//! epigraph LP over all `(a, x)` pairs. For Euclidean codomains it is solved
//! by cutting planes on `J(c, (a, x)) = ||F[a][x] - (Bc)(x)||_2`.
//!
//! A certificate is a list of support pairs `(a_i, x_i)` with weights
//! `lambda_i` and unit residual directions `u_i` such that
//!
//! ```text
//! (i')  sum_i lambda_i <u_i, B_j(x_i)> = 0          for every basis index j
//! (ii)  ||F[a_i][x_i] - (Bc*)(x_i)|| = delta = max_{a,x} ||F[a][x] - (Bc*)(x)||
//! ```

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{dot, lstsq, norm_inf};
use crate::lp_norm::max_lp_deviation;
use crate::minimax::{
    solve_minimax, AffineFamily, ConvexOracle, MinimaxDiagnostics, MinimaxError, MinimaxInstance,
    MinimaxOptions, SaddleCertificate, Start,
};
use crate::problem::{CodomainNorm, Coefficients, ProblemError, SampledProblem};
use crate::report::{Check, Report};
use nalgebra::{DMatrix, DVector};

#[derive(Debug, Error)]
pub enum UniformError {
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Minimax(#[from] MinimaxError),
    #[error("inconsistent certificate: {0}")]
    Inconsistent(String),
}

type Result<T> = std::result::Result<T, UniformError>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SupportPair {
    pub param: String,
    pub point: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniformCertificate {
    pub pairs: Vec<SupportPair>,
    pub lambdas: Vec<f64>,
    /// Unit residual directions; `[sigma_i]` when `d = 1`, zero vectors in the
    /// degenerate case.
    pub directions: Vec<Vec<f64>>,
    pub delta: f64,
    /// `delta == 0`: the approximant reproduces every family member.
    pub degenerate: bool,
}

impl UniformCertificate {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Signs `sigma_i` for scalar certificates.
    pub fn signs(&self) -> Option<Vec<f64>> {
        self.directions
            .iter()
            .map(|u| (u.len() == 1).then_some(u[0]))
            .collect()
    }
}

/// How the uniform problem is solved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Strategy {
    /// Epigraph LP for `d = 1`, cutting planes otherwise.
    #[default]
    Auto,
    /// Cutting planes regardless of `d`.
    CuttingPlane,
}

#[derive(Debug, Clone, Default)]
pub struct UniformOptions {
    pub strategy: Strategy,
    /// Passed to the minimax engine. In cutting-plane mode the start point
    /// and box are filled in from a least-squares fit when absent.
    pub minimax: MinimaxOptions,
}

#[derive(Debug, Clone)]
pub struct UniformSolution {
    pub coefficients: Coefficients,
    pub value: f64,
    pub certificate: UniformCertificate,
    /// The engine's certificate, indexed by `v = a * |X| + x`.
    pub saddle: SaddleCertificate,
    pub diagnostics: MinimaxDiagnostics,
}

/// `J(c, (a, x)) = ||F[a][x] - (Bc)(x)||` over `v = a * |X| + x`.
pub struct UniformOracle<'p> {
    problem: &'p SampledProblem,
}

impl<'p> UniformOracle<'p> {
    pub fn new(problem: &'p SampledProblem) -> Self {
        Self { problem }
    }

    fn split(&self, v: usize) -> (usize, usize) {
        let m = self.problem.domain.len();
        (v / m, v % m)
    }
}

impl ConvexOracle for UniformOracle<'_> {
    fn dim(&self) -> usize {
        self.problem.n()
    }

    fn len(&self) -> usize {
        self.problem.params.len() * self.problem.domain.len()
    }

    fn value(&self, u: &[f64], v: usize) -> f64 {
        let (a, x) = self.split(v);
        self.problem.residual_norm_at(u, a, x)
    }

    fn eval(&self, u: &[f64], v: usize) -> (f64, Vec<f64>) {
        let (a, x) = self.split(v);
        let r = self.problem.residual_at(u, a, x);
        let norm = self.problem.codomain_norm().norm(&r);
        let basis = &self.problem.basis;
        let grad = if norm > 0.0 {
            (0..basis.n())
                .map(|j| -dot(&r, basis.value(j, x)) / norm)
                .collect()
        } else {
            vec![0.0; basis.n()]
        };
        (norm, grad)
    }

    fn hessian(&self, u: &[f64], v: usize) -> Option<DMatrix<f64>> {
        let (a, x) = self.split(v);
        let n = self.problem.n();
        let r = self.problem.residual_at(u, a, x);
        let norm = self.problem.codomain_norm().norm(&r);
        if self.problem.dim() == 1 || norm == 0.0 {
            return Some(DMatrix::zeros(n, n));
        }
        // J = ||r||, r = f - B c:  H = B^T (I - w w^T) B / ||r||,  w = r / ||r||.
        let d = self.problem.dim();
        let b = DMatrix::from_fn(d, n, |k, j| self.problem.basis.value(j, x)[k]);
        let w = DVector::from_iterator(d, r.iter().map(|ri| ri / norm));
        let proj = DMatrix::identity(d, d) - &w * w.transpose();
        Some(b.transpose() * proj * b / norm)
    }
}

/// Least-squares coefficients over all `(a, x, k)` residual components.
pub fn least_squares_start(problem: &SampledProblem) -> Vec<f64> {
    let (na, m, d, n) = (problem.params.len(), problem.domain.len(), problem.dim(), problem.n());
    let rows = na * m * d;
    let mut a = DMatrix::zeros(rows, n);
    let mut b = DVector::zeros(rows);
    for ai in 0..na {
        for x in 0..m {
            for k in 0..d {
                let r = (ai * m + x) * d + k;
                b[r] = problem.family.value(ai, x)[k];
                for j in 0..n {
                    a[(r, j)] = problem.basis.value(j, x)[k];
                }
            }
        }
    }
    lstsq(&a, &b, 1e-12).iter().copied().collect()
}

/// Start point and box for cutting planes: least-squares fit
/// `+- max(10 ||c_ls||_inf, 1)`.
pub fn default_start(c_ls: Vec<f64>) -> Start {
    let half = (10.0 * norm_inf(&c_ls)).max(1.0);
    Start::centered(c_ls, half)
}

fn affine_family(problem: &SampledProblem) -> Result<AffineFamily> {
    let (na, m, n) = (problem.params.len(), problem.domain.len(), problem.n());
    let mut offsets = Vec::with_capacity(na * m);
    let mut slopes = Vec::with_capacity(na * m);
    for a in 0..na {
        for x in 0..m {
            offsets.push(problem.family.value(a, x)[0]);
            slopes.push((0..n).map(|j| -problem.basis.value(j, x)[0]).collect());
        }
    }
    Ok(AffineFamily::new(offsets, slopes, true)?)
}

/// Solves the uniform BSA problem on the grid.
pub fn solve_uniform_bsa(problem: &SampledProblem) -> Result<UniformSolution> {
    solve_uniform_bsa_with(problem, &UniformOptions::default())
}

pub fn solve_uniform_bsa_with(problem: &SampledProblem, opts: &UniformOptions) -> Result<UniformSolution> {
    let scalar = problem.dim() == 1;
    let sol = if scalar && opts.strategy == Strategy::Auto {
        let family = affine_family(problem)?;
        solve_minimax(MinimaxInstance::Affine(&family), &opts.minimax)?
    } else {
        let oracle = UniformOracle::new(problem);
        let mut mopts = opts.minimax.clone();
        if mopts.start.is_none() {
            mopts.start = Some(default_start(least_squares_start(problem)));
        }
        solve_minimax(MinimaxInstance::Oracle(&oracle), &mopts)?
    };
    let value = problem.uniform_deviation(&sol.u);
    let mut solution = UniformSolution {
        coefficients: Coefficients(sol.u),
        value,
        certificate: UniformCertificate {
            pairs: Vec::new(),
            lambdas: Vec::new(),
            directions: Vec::new(),
            delta: value,
            degenerate: false,
        },
        saddle: sol.certificate,
        diagnostics: sol.diagnostics,
    };
    solution.certificate = certificate_of(problem, &solution)?;
    Ok(solution)
}

/// Deviation below which the approximant is treated as interpolating the
/// whole family.
fn degenerate_threshold(problem: &SampledProblem) -> f64 {
    let mut scale = 0.0_f64;
    for a in 0..problem.params.len() {
        for x in 0..problem.domain.len() {
            scale = scale.max(norm_inf(problem.family.value(a, x)));
        }
    }
    1e-12 * (1.0 + scale)
}

/// Converts the engine's support atoms into a uniform certificate at the
/// solution's coefficients.
pub fn certificate_of(problem: &SampledProblem, solution: &UniformSolution) -> Result<UniformCertificate> {
    let c = solution.coefficients.as_slice();
    let m = problem.domain.len();
    let delta = solution.value;
    let atoms = &solution.saddle.atoms;
    if atoms.is_empty() {
        return Err(UniformError::Inconsistent("no support atoms".into()));
    }
    let pair = |v: usize| SupportPair {
        param: problem.params.label(v / m).to_string(),
        point: problem.domain.label(v % m).to_string(),
    };

    if delta <= degenerate_threshold(problem) {
        let heaviest = atoms
            .iter()
            .max_by(|a, b| a.weight.total_cmp(&b.weight))
            .expect("nonempty");
        return Ok(UniformCertificate {
            pairs: vec![pair(heaviest.v)],
            lambdas: vec![1.0],
            directions: vec![vec![0.0; problem.dim()]],
            delta,
            degenerate: true,
        });
    }

    let mut pairs = Vec::with_capacity(atoms.len());
    let mut directions = Vec::with_capacity(atoms.len());
    for atom in atoms {
        let (a, x) = (atom.v / m, atom.v % m);
        let r = problem.residual_at(c, a, x);
        let norm = problem.codomain_norm().norm(&r);
        if norm <= degenerate_threshold(problem) {
            return Err(UniformError::Inconsistent(format!(
                "zero residual at support pair ({}, {}) with delta {delta:e}",
                problem.params.label(a),
                problem.domain.label(x)
            )));
        }
        let dir = match problem.codomain_norm() {
            // The LP branch sign is authoritative; it agrees with the
            // residual sign whenever the residual is nonzero.
            CodomainNorm::Absolute => vec![if r[0] >= 0.0 { 1.0 } else { -1.0 }],
            CodomainNorm::Euclidean => r.iter().map(|ri| ri / norm).collect(),
        };
        pairs.push(pair(atom.v));
        directions.push(dir);
    }
    let total: f64 = atoms.iter().map(|a| a.weight).sum();
    Ok(UniformCertificate {
        pairs,
        lambdas: atoms.iter().map(|a| a.weight / total).collect(),
        directions,
        delta,
        degenerate: false,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UniformTolerance {
    /// Condition (i').
    pub orthogonality: f64,
    /// Condition (ii).
    pub deviation: f64,
}

impl Default for UniformTolerance {
    fn default() -> Self {
        Self {
            orthogonality: 1e-7,
            deviation: 1e-6,
        }
    }
}

impl UniformTolerance {
    pub fn both(tol: f64) -> Self {
        Self {
            orthogonality: tol,
            deviation: tol,
        }
    }
}

/// Checks conditions (i') and (ii) of a uniform certificate at `c`.
///
/// Label and dimension mismatches are errors; everything else is reported.
pub fn verify_uniform_certificate(
    problem: &SampledProblem,
    c: &Coefficients,
    cert: &UniformCertificate,
    tol: UniformTolerance,
) -> Result<Report> {
    problem.check_coefficients(c)?;
    let k = cert.pairs.len();
    if cert.lambdas.len() != k || cert.directions.len() != k {
        return Err(ProblemError::Dimension(format!(
            "certificate lists {k} pairs, {} weights and {} directions",
            cert.lambdas.len(),
            cert.directions.len()
        ))
        .into());
    }
    let d = problem.dim();
    let mut index = Vec::with_capacity(k);
    for (p, u) in cert.pairs.iter().zip(&cert.directions) {
        if u.len() != d {
            return Err(ProblemError::Dimension(format!(
                "direction has length {}, expected d = {d}",
                u.len()
            ))
            .into());
        }
        index.push((problem.params.index_of(&p.param)?, problem.domain.index_of(&p.point)?));
    }
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
    report.push(Check::flag("structure: delta >= 0", cert.delta >= 0.0));
    if !cert.degenerate {
        let worst = cert
            .directions
            .iter()
            .map(|u| (u.iter().map(|v| v * v).sum::<f64>().sqrt() - 1.0).abs())
            .fold(0.0, f64::max);
        report.check("structure: unit directions", worst, 1e-10);
    }

    let mut orth = 0.0_f64;
    for j in 0..n {
        let s: f64 = index
            .iter()
            .zip(&cert.lambdas)
            .zip(&cert.directions)
            .map(|((&(_, x), l), u)| l * dot(u, problem.basis.value(j, x)))
            .sum();
        orth = orth.max(s.abs());
    }
    report.check("(i') orthogonality", orth, tol.orthogonality);

    let mut support_dev = 0.0_f64;
    let mut direction_err = 0.0_f64;
    for (&(a, x), u) in index.iter().zip(&cert.directions) {
        let r = problem.residual_at(c, a, x);
        let norm = problem.codomain_norm().norm(&r);
        support_dev = support_dev.max((norm - cert.delta).abs());
        let err: f64 = r
            .iter()
            .zip(u)
            .map(|(ri, ui)| (cert.delta * ui - ri).powi(2))
            .sum::<f64>()
            .sqrt();
        direction_err = direction_err.max(err);
    }
    report.check("(ii) support deviation equals delta", support_dev, tol.deviation);
    report.check(
        "(ii) delta equals grid maximum",
        (cert.delta - problem.uniform_deviation(c)).abs(),
        tol.deviation,
    );
    if !cert.degenerate {
        report.check("(ii) directions match residuals", direction_err, tol.deviation);
    }
    Ok(report)
}

/// Objective for [`verify_bsa_by_definition`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Objective {
    /// `max_{a,x} ||F[a][x] - (Bc)(x)||`.
    Uniform,
    /// `max_a ||F[a] - Bc||_{p,m}` with the problem's measure.
    Lp,
}

impl Objective {
    pub fn value(&self, problem: &SampledProblem, c: &[f64]) -> f64 {
        match self {
            Objective::Uniform => problem.uniform_deviation(c),
            Objective::Lp => max_lp_deviation(problem, c),
        }
    }
}

/// Samples `trials` coefficient vectors uniformly in the ball of `radius`
/// around `c` and reports whether any beats `c` by more than `1e-12`.
pub fn verify_bsa_by_definition(
    problem: &SampledProblem,
    c: &Coefficients,
    objective: Objective,
    trials: usize,
    radius: f64,
    seed: u64,
) -> Result<Report> {
    problem.check_coefficients(c)?;
    if objective == Objective::Lp && problem.measure.is_none() {
        return Err(ProblemError::Invalid("L^p objective needs a measure".into()).into());
    }
    let base = objective.value(problem, c.as_slice());
    let n = problem.n();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0_f64;
    let mut beaten = 0usize;
    let mut probe = vec![0.0; n];
    for _ in 0..trials {
        let dir = loop {
            let z: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..=1.0)).collect();
            if dot(&z, &z) <= 1.0 {
                break z;
            }
        };
        for j in 0..n {
            probe[j] = c.0[j] + radius * dir[j];
        }
        let shortfall = base - objective.value(problem, &probe);
        if shortfall > 1e-12 {
            beaten += 1;
        }
        worst = worst.max(shortfall);
    }
    let mut report = Report::new();
    report.check(
        format!("definition: no competitor better ({beaten} of {trials} beat it)"),
        worst.max(0.0),
        1e-12,
    );
    Ok(report)
}
