//! Discrete minimax engine.
//!
//! Solves `min_u max_{v in V} J(u, v)` for a finite index set `V` and `J`
//! convex in `u`, and returns a saddle certificate: at most `n + 1` atoms
//! `(v_i, lambda_i)` with `lambda_i > 0`, `sum lambda_i = 1`, such that
//!
//! ```text
//! max_v J(u*, v)  <=  sum_i lambda_i J(u*, v_i)  <=  sum_i lambda_i J(u, v_i)   for all u.
//! ```
//!
//! The left inequality is checked with single-atom probes (the mixture value
//! is affine in the probe weights, so a vertex of the probe simplex attains
//! the maximum). The right inequality is checked through first-order
//! optimality of the convex function `u -> sum_i lambda_i J(u, v_i)`, which
//! makes the minimizer global on all of `R^n`.
//!
//! Two instance kinds are supported:
//!
//! - [`AffineFamily`]: `J(u, v) = alpha_v + beta_v . u`, optionally wrapped
//!   in an absolute value. Solved exactly by one epigraph LP.
//! - [`ConvexOracle`]: any convex `J` given by values and subgradients.
//!   Solved by Kelley's cutting-plane method in a bounding box, with a
//!   Newton step on the KKT system of the current support to reach full
//!   precision on smooth pieces.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{dot, lstsq, norm_inf};
use crate::lp::{solve_lp_with, LpError, LpOptions, LpProblem, LpStatus, RowSense};
use crate::report::{Check, Report};

#[derive(Debug, Error)]
pub enum MinimaxError {
    #[error("invalid minimax instance: {0}")]
    Invalid(String),
    #[error("objective is unbounded below")]
    Unbounded,
    #[error("cutting-plane iteration limit reached after {iterations} iterations (gap {gap:.3e})")]
    IterationLimit { iterations: usize, gap: f64 },
    #[error("solution stuck to the bounding box after {expansions} expansions")]
    BoxBoundary { expansions: usize },
    #[error("inconsistent dual weights: {0}")]
    InconsistentDuals(String),
    #[error(transparent)]
    Lp(#[from] LpError),
}

type Result<T> = std::result::Result<T, MinimaxError>;

/// A convex function family `J(., v)`, `v = 0..len()`, on `R^dim()`.
///
/// Implementations must be pure: repeated calls with equal arguments return
/// equal results.
pub trait ConvexOracle {
    fn dim(&self) -> usize;

    /// Number of elements of `V`.
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `J(u, v)` and one subgradient in `u`.
    fn eval(&self, u: &[f64], v: usize) -> (f64, Vec<f64>);

    fn value(&self, u: &[f64], v: usize) -> f64 {
        self.eval(u, v).0
    }

    /// Hessian of `J(., v)` at `u` where it exists. `None` falls back to
    /// central differences of subgradients.
    fn hessian(&self, _u: &[f64], _v: usize) -> Option<DMatrix<f64>> {
        None
    }
}

/// `J(u, v) = alpha_v + beta_v . u`, or its absolute value.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineFamily {
    dim: usize,
    offsets: Vec<f64>,
    slopes: Vec<Vec<f64>>,
    absolute: bool,
}

impl AffineFamily {
    pub fn new(offsets: Vec<f64>, slopes: Vec<Vec<f64>>, absolute: bool) -> Result<Self> {
        if offsets.is_empty() {
            return Err(MinimaxError::Invalid("V is empty".into()));
        }
        if offsets.len() != slopes.len() {
            return Err(MinimaxError::Invalid("offsets and slopes differ in length".into()));
        }
        let dim = slopes[0].len();
        if slopes.iter().any(|s| s.len() != dim) {
            return Err(MinimaxError::Invalid("slopes have inconsistent dimension".into()));
        }
        if offsets.iter().chain(slopes.iter().flatten()).any(|v| !v.is_finite()) {
            return Err(MinimaxError::Invalid("non-finite affine data".into()));
        }
        Ok(Self {
            dim,
            offsets,
            slopes,
            absolute,
        })
    }

    pub fn offsets(&self) -> &[f64] {
        &self.offsets
    }

    pub fn slopes(&self) -> &[Vec<f64>] {
        &self.slopes
    }

    pub fn is_absolute(&self) -> bool {
        self.absolute
    }

    /// The inner affine value `alpha_v + beta_v . u`.
    pub fn affine(&self, u: &[f64], v: usize) -> f64 {
        self.offsets[v] + dot(&self.slopes[v], u)
    }

    /// The linear pieces `(alpha, beta, v, sign)` of the epigraph.
    fn pieces(&self) -> Vec<(Piece, usize, f64)> {
        let mut out = Vec::with_capacity(self.offsets.len() * if self.absolute { 2 } else { 1 });
        for v in 0..self.offsets.len() {
            out.push((
                Piece {
                    offset: self.offsets[v],
                    slope: self.slopes[v].clone(),
                },
                v,
                1.0,
            ));
            if self.absolute {
                out.push((
                    Piece {
                        offset: -self.offsets[v],
                        slope: self.slopes[v].iter().map(|b| -b).collect(),
                    },
                    v,
                    -1.0,
                ));
            }
        }
        out
    }
}

impl ConvexOracle for AffineFamily {
    fn dim(&self) -> usize {
        self.dim
    }

    fn len(&self) -> usize {
        self.offsets.len()
    }

    fn eval(&self, u: &[f64], v: usize) -> (f64, Vec<f64>) {
        let a = self.affine(u, v);
        if self.absolute && a < 0.0 {
            (-a, self.slopes[v].iter().map(|b| -b).collect())
        } else {
            (a, self.slopes[v].clone())
        }
    }

    fn value(&self, u: &[f64], v: usize) -> f64 {
        let a = self.affine(u, v);
        if self.absolute {
            a.abs()
        } else {
            a
        }
    }

    fn hessian(&self, _u: &[f64], _v: usize) -> Option<DMatrix<f64>> {
        Some(DMatrix::zeros(self.dim, self.dim))
    }
}

/// A minimax instance in one of the two supported modes.
#[derive(Clone, Copy)]
pub enum MinimaxInstance<'a> {
    Affine(&'a AffineFamily),
    Oracle(&'a dyn ConvexOracle),
}

impl<'a> MinimaxInstance<'a> {
    pub fn oracle(&self) -> &'a dyn ConvexOracle {
        match *self {
            MinimaxInstance::Affine(a) => a,
            MinimaxInstance::Oracle(o) => o,
        }
    }

    pub fn dim(&self) -> usize {
        self.oracle().dim()
    }

    pub fn len(&self) -> usize {
        self.oracle().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `max_v J(u, v)` with the first maximizing index.
    pub fn max_value(&self, u: &[f64]) -> (f64, usize) {
        max_over(self.oracle(), u)
    }
}

fn max_over(oracle: &dyn ConvexOracle, u: &[f64]) -> (f64, usize) {
    let mut best = (f64::NEG_INFINITY, 0);
    for v in 0..oracle.len() {
        let j = oracle.value(u, v);
        if j > best.0 {
            best = (j, v);
        }
    }
    best
}

/// Initial point and bounding box for oracle mode.
#[derive(Debug, Clone, PartialEq)]
pub struct Start {
    pub point: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Start {
    /// Box `center +- half_width` in every coordinate.
    pub fn centered(center: Vec<f64>, half_width: f64) -> Self {
        Self {
            lower: center.iter().map(|c| c - half_width).collect(),
            upper: center.iter().map(|c| c + half_width).collect(),
            point: center,
        }
    }
}

#[derive(Debug, Clone)]
pub struct MinimaxOptions {
    /// Absolute gap between best value and model lower bound.
    pub gap_tol: f64,
    /// Cutting-plane iteration cap.
    pub max_iter: usize,
    /// Required in oracle mode.
    pub start: Option<Start>,
    pub max_box_expansions: usize,
    /// Newton refinement on the support's KKT system.
    pub polish: bool,
    pub lp: LpOptions,
}

impl Default for MinimaxOptions {
    fn default() -> Self {
        Self {
            gap_tol: 1e-9,
            max_iter: 500,
            start: None,
            max_box_expansions: 5,
            polish: true,
            lp: LpOptions::default(),
        }
    }
}

/// One atom of a saddle certificate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupportAtom {
    /// Index into `V`.
    pub v: usize,
    /// Branch of an absolute-value wrapped affine piece (`+1` or `-1`);
    /// always `+1` in oracle mode.
    pub sign: f64,
    pub weight: f64,
    /// Subgradient of `J(., v)` at the certified point, when the certificate
    /// relies on a specific element of the subdifferential.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subgradient: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaddleCertificate {
    pub atoms: Vec<SupportAtom>,
    pub value: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MinimaxDiagnostics {
    pub iterations: usize,
    pub lp_pivots: usize,
    pub lower_bound: f64,
    pub upper_bound: f64,
    pub box_expansions: usize,
    pub polish_attempts: usize,
    pub polish_accepted: usize,
    /// `||sum_i lambda_i g_i||_inf` of the returned certificate.
    pub stationarity: f64,
    /// `(lower, upper)` after each cutting-plane iteration. The lower bound
    /// restarts at `-inf` after a box expansion.
    #[serde(skip)]
    pub history: Vec<(f64, f64)>,
}

#[derive(Debug, Clone)]
pub struct MinimaxSolution {
    pub u: Vec<f64>,
    pub value: f64,
    pub certificate: SaddleCertificate,
    pub diagnostics: MinimaxDiagnostics,
}

/// Solves a minimax instance.
pub fn solve_minimax(inst: MinimaxInstance<'_>, opts: &MinimaxOptions) -> Result<MinimaxSolution> {
    if inst.is_empty() {
        return Err(MinimaxError::Invalid("V is empty".into()));
    }
    match inst {
        MinimaxInstance::Affine(family) => solve_affine(family, opts),
        MinimaxInstance::Oracle(oracle) => solve_oracle(oracle, opts),
    }
}

#[derive(Debug, Clone)]
struct Piece {
    offset: f64,
    slope: Vec<f64>,
}

struct Epigraph {
    t: f64,
    u: Vec<f64>,
    weights: Vec<f64>,
    pivots: usize,
}

/// Minimizes `max_k (alpha_k + beta_k . u)` over `R^n` or a box through the
/// LP dual of the epigraph problem
///
/// ```text
/// max  sum_k y_k alpha_k   s.t.  sum_k y_k = 1,  sum_k y_k beta_k = 0,  y >= 0
/// ```
///
/// (with box multipliers relaxing the second constraint when bounded). The
/// dual has only `n + 1` rows however many pieces there are; `(t, u)` are
/// read back from its multipliers and `y` gives the piece weights.
fn solve_epigraph(
    pieces: &[Piece],
    n: usize,
    bounds: Option<(&[f64], &[f64])>,
    lp: &LpOptions,
) -> Result<Epigraph> {
    let k = pieces.len();
    let extra = if bounds.is_some() { n } else { 0 };
    let mut objective = Vec::with_capacity(k + extra);
    for p in pieces {
        let shift = bounds.map_or(0.0, |(lo, _)| dot(&p.slope, lo));
        objective.push(-(p.offset + shift));
    }
    if let Some((lo, hi)) = bounds {
        objective.extend(lo.iter().zip(hi).map(|(l, h)| h - l));
    }
    let mut problem = LpProblem::new(objective);
    let mut ones = vec![1.0; k];
    ones.resize(k + extra, 0.0);
    problem.add_row(ones, RowSense::Eq, 1.0);
    for j in 0..n {
        let mut row: Vec<f64> = pieces.iter().map(|p| -p.slope[j]).collect();
        row.resize(k + extra, 0.0);
        if bounds.is_some() {
            row[k + j] = -1.0;
            problem.add_row(row, RowSense::Le, 0.0);
        } else {
            problem.add_row(row, RowSense::Eq, 0.0);
        }
    }
    let res = solve_lp_with(&problem, lp)?;
    match res.status {
        LpStatus::Optimal => {}
        LpStatus::Infeasible => return Err(MinimaxError::Unbounded),
        LpStatus::Unbounded => {
            return Err(MinimaxError::Invalid("epigraph dual is unbounded".into()))
        }
    }
    let t = -res.objective;
    let u = match bounds {
        Some((lo, hi)) => (0..n)
            .map(|j| (lo[j] - res.duals[1 + j]).clamp(lo[j], hi[j]))
            .collect(),
        None => (0..n).map(|j| -res.duals[1 + j]).collect(),
    };
    Ok(Epigraph {
        t,
        u,
        weights: res.x[..k].to_vec(),
        pivots: res.iterations,
    })
}

fn solve_affine(family: &AffineFamily, opts: &MinimaxOptions) -> Result<MinimaxSolution> {
    let n = family.dim;
    let tagged = family.pieces();
    let pieces: Vec<Piece> = tagged.iter().map(|(p, _, _)| p.clone()).collect();
    let epi = solve_epigraph(&pieces, n, None, &opts.lp)?;
    let (value, _) = max_over(family, &epi.u);
    let rows: Vec<(usize, f64)> = tagged.iter().map(|&(_, v, s)| (v, s)).collect();
    let grads: Vec<Vec<f64>> = pieces.iter().map(|p| p.slope.clone()).collect();
    let atoms = extract_support(&epi.weights, &rows, &grads, n)?;
    let stationarity = aggregate_gradient(&atoms, |a| signed_slope(family, a)).1;
    Ok(MinimaxSolution {
        u: epi.u,
        value,
        certificate: SaddleCertificate { atoms, value },
        diagnostics: MinimaxDiagnostics {
            iterations: 1,
            lp_pivots: epi.pivots,
            lower_bound: epi.t,
            upper_bound: value,
            stationarity,
            ..Default::default()
        },
    })
}

fn signed_slope(family: &AffineFamily, atom: &SupportAtom) -> Vec<f64> {
    family.slopes[atom.v].iter().map(|b| atom.sign * b).collect()
}

fn aggregate_gradient<F: Fn(&SupportAtom) -> Vec<f64>>(atoms: &[SupportAtom], grad: F) -> (Vec<f64>, f64) {
    let mut agg: Vec<f64> = Vec::new();
    for a in atoms {
        let g = grad(a);
        if agg.is_empty() {
            agg = vec![0.0; g.len()];
        }
        for (s, gi) in agg.iter_mut().zip(&g) {
            *s += a.weight * gi;
        }
    }
    let norm = norm_inf(&agg);
    (agg, norm)
}

/// Turns LP dual weights over rows into at most `n + 1` support atoms.
///
/// `rows[i] = (v, sign)` names the element of `V` (and branch) behind row
/// `i`; `gradients[i]` is that row's slope. Rows that name the same
/// `(v, sign)` are merged. If more than `n + 1` atoms remain, the convex
/// combination is reduced by Caratheodory steps that keep
/// `sum_i lambda_i gradient_i` and `sum_i lambda_i` unchanged.
pub fn extract_support(
    duals: &[f64],
    rows: &[(usize, f64)],
    gradients: &[Vec<f64>],
    n: usize,
) -> Result<Vec<SupportAtom>> {
    if duals.len() != rows.len() || duals.len() != gradients.len() {
        return Err(MinimaxError::InconsistentDuals(
            "duals, row map and gradients differ in length".into(),
        ));
    }
    let scale = duals.iter().fold(0.0_f64, |m, d| m.max(d.abs()));
    if let Some(d) = duals.iter().find(|&&d| d < -1e-8 * scale.max(1.0)) {
        return Err(MinimaxError::InconsistentDuals(format!("negative weight {d:e}")));
    }
    let total: f64 = duals.iter().filter(|&&d| d > 0.0).sum();
    if !(total > 0.0) {
        return Err(MinimaxError::InconsistentDuals("weights sum to zero".into()));
    }

    let mut keys: Vec<(usize, f64)> = Vec::new();
    let mut weights: Vec<f64> = Vec::new();
    let mut grads: Vec<Vec<f64>> = Vec::new();
    for (i, &d) in duals.iter().enumerate() {
        if d <= 0.0 {
            continue;
        }
        let w = d / total;
        match keys.iter().position(|k| *k == rows[i]) {
            Some(p) => {
                let old = weights[p];
                for (g, gi) in grads[p].iter_mut().zip(&gradients[i]) {
                    *g = (old * *g + w * gi) / (old + w);
                }
                weights[p] += w;
            }
            None => {
                keys.push(rows[i]);
                weights.push(w);
                grads.push(gradients[i].clone());
            }
        }
    }
    caratheodory(&mut weights, &grads, n);
    let sum: f64 = weights.iter().sum();
    let mut atoms: Vec<SupportAtom> = keys
        .into_iter()
        .zip(weights)
        .filter(|(_, w)| *w > 0.0)
        .map(|((v, sign), w)| SupportAtom {
            v,
            sign,
            weight: w / sum,
            subgradient: None,
        })
        .collect();
    atoms.sort_by(|a, b| a.v.cmp(&b.v).then(b.sign.total_cmp(&a.sign)));
    Ok(atoms)
}

/// Reduces a convex combination to at most `n + 1` positive weights while
/// preserving `sum_i w_i g_i` and `sum_i w_i`. Removed entries are set to 0.
pub(crate) fn caratheodory(weights: &mut [f64], grads: &[Vec<f64>], n: usize) {
    loop {
        let active: Vec<usize> = (0..weights.len()).filter(|&i| weights[i] > 0.0).collect();
        if active.len() <= n + 1 {
            return;
        }
        // Any n + 2 atoms are affinely dependent in R^n.
        let chosen = &active[..n + 2];
        let m = DMatrix::from_fn(n + 1, n + 2, |r, c| {
            if r < n {
                grads[chosen[c]][r]
            } else {
                1.0
            }
        });
        let svd = (m.transpose() * &m).symmetric_eigen();
        let (min_idx, _) = svd
            .eigenvalues
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .expect("nonempty");
        let mut z: Vec<f64> = svd.eigenvectors.column(min_idx).iter().copied().collect();
        // Project out the ones-direction error: sum z must vanish exactly.
        let mean = z.iter().sum::<f64>() / z.len() as f64;
        if mean.abs() > 1e-12 {
            for zi in &mut z {
                *zi -= mean;
            }
        }
        if z.iter().all(|&zi| zi <= 0.0) {
            z.iter_mut().for_each(|zi| *zi = -*zi);
        }
        let mut step = f64::INFINITY;
        let mut leave = 0;
        for (c, &zi) in z.iter().enumerate() {
            if zi > 1e-14 {
                let r = weights[chosen[c]] / zi;
                if r < step {
                    step = r;
                    leave = c;
                }
            }
        }
        if !step.is_finite() {
            // Degenerate null vector; drop the smallest weight outright.
            let (c, _) = chosen
                .iter()
                .enumerate()
                .min_by(|a, b| weights[*a.1].total_cmp(&weights[*b.1]))
                .expect("nonempty");
            weights[chosen[c]] = 0.0;
            continue;
        }
        for (c, &zi) in z.iter().enumerate() {
            let w = &mut weights[chosen[c]];
            *w = (*w - step * zi).max(0.0);
        }
        weights[chosen[leave]] = 0.0;
    }
}

#[derive(Debug, Clone)]
struct Cut {
    v: usize,
    point: Vec<f64>,
    value: f64,
    grad: Vec<f64>,
}

impl Cut {
    fn piece(&self) -> Piece {
        Piece {
            offset: self.value - dot(&self.grad, &self.point),
            slope: self.grad.clone(),
        }
    }

    fn at(&self, u: &[f64]) -> f64 {
        self.value + self.grad.iter().zip(u.iter().zip(&self.point)).map(|(g, (a, b))| g * (a - b)).sum::<f64>()
    }
}

fn make_cut(oracle: &dyn ConvexOracle, u: &[f64], v: usize) -> Cut {
    let (value, grad) = oracle.eval(u, v);
    Cut {
        v,
        point: u.to_vec(),
        value,
        grad,
    }
}

fn hessian_of(oracle: &dyn ConvexOracle, u: &[f64], v: usize) -> DMatrix<f64> {
    if let Some(h) = oracle.hessian(u, v) {
        return h;
    }
    let n = u.len();
    let mut h = DMatrix::zeros(n, n);
    let mut probe = u.to_vec();
    for i in 0..n {
        let step = 1e-6 * u[i].abs().max(1.0);
        probe[i] = u[i] + step;
        let gp = oracle.eval(&probe, v).1;
        probe[i] = u[i] - step;
        let gm = oracle.eval(&probe, v).1;
        probe[i] = u[i];
        for r in 0..n {
            h[(r, i)] = (gp[r] - gm[r]) / (2.0 * step);
        }
    }
    (&h + h.transpose()) * 0.5
}

/// Newton's method on the KKT system of `min_u max_{v in support} J(u, v)`:
///
/// ```text
/// sum_v lambda_v grad J_v(u) = 0,   J_v(u) = t  (v in support),   sum_v lambda_v = 1.
/// ```
///
/// Returns the refined `(u, lambda)` when the system is solved to full
/// precision.
fn newton_kkt(
    oracle: &dyn ConvexOracle,
    u0: &[f64],
    support: &[usize],
    lambda0: &[f64],
) -> Option<(Vec<f64>, Vec<f64>)> {
    let n = u0.len();
    let s = support.len();
    let size = n + s + 1;
    let mut u = u0.to_vec();
    let mut lambda = lambda0.to_vec();
    let mut t = support
        .iter()
        .zip(&lambda)
        .map(|(&v, l)| l * oracle.value(&u, v))
        .sum::<f64>();

    let residual = |u: &[f64], lambda: &[f64], t: f64| -> (DVector<f64>, Vec<(f64, Vec<f64>)>) {
        let evals: Vec<(f64, Vec<f64>)> = support.iter().map(|&v| oracle.eval(u, v)).collect();
        let mut f = DVector::zeros(size);
        for (k, (j, g)) in evals.iter().enumerate() {
            for r in 0..n {
                f[r] += lambda[k] * g[r];
            }
            f[n + k] = j - t;
        }
        f[n + s] = lambda.iter().sum::<f64>() - 1.0;
        (f, evals)
    };

    let (mut f, mut evals) = residual(&u, &lambda, t);
    let scale = 1.0 + t.abs() + evals.iter().map(|(_, g)| norm_inf(g)).fold(0.0, f64::max);
    for _ in 0..60 {
        let fnorm = f.amax();
        if fnorm <= 1e-14 * scale {
            return Some((u, lambda));
        }
        let mut jac = DMatrix::zeros(size, size);
        for (k, &v) in support.iter().enumerate() {
            let h = hessian_of(oracle, &u, v);
            for r in 0..n {
                for c in 0..n {
                    jac[(r, c)] += lambda[k] * h[(r, c)];
                }
                jac[(r, n + k)] = evals[k].1[r];
                jac[(n + k, r)] = evals[k].1[r];
            }
            jac[(n + k, n + s)] = -1.0;
            jac[(n + s, n + k)] = 1.0;
        }
        let step = lstsq(&jac, &(-&f), 1e-13);
        let mut alpha = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let nu: Vec<f64> = (0..n).map(|i| u[i] + alpha * step[i]).collect();
            let nl: Vec<f64> = (0..s).map(|k| lambda[k] + alpha * step[n + k]).collect();
            let nt = t + alpha * step[n + s];
            let (nf, ne) = residual(&nu, &nl, nt);
            if nf.amax() < (1.0 - 1e-4 * alpha) * fnorm || nf.amax() <= 1e-14 * scale {
                u = nu;
                lambda = nl;
                t = nt;
                f = nf;
                evals = ne;
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if !accepted {
            return (fnorm <= 1e-11 * scale).then_some((u, lambda));
        }
    }
    (f.amax() <= 1e-11 * scale).then_some((u, lambda))
}

/// Active-set refinement: repeatedly drops the most negative multiplier.
fn polish(
    oracle: &dyn ConvexOracle,
    u0: &[f64],
    support: &[usize],
    weights: &[f64],
) -> Option<Vec<f64>> {
    let mut support = support.to_vec();
    let mut weights = weights.to_vec();
    while !support.is_empty() {
        let (u, lambda) = newton_kkt(oracle, u0, &support, &weights)?;
        let (worst, &min_l) = lambda
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .expect("nonempty");
        if min_l >= -1e-12 {
            return Some(u);
        }
        support.remove(worst);
        weights.remove(worst);
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return None;
        }
        weights.iter_mut().for_each(|w| *w /= total);
    }
    None
}

fn solve_oracle(oracle: &dyn ConvexOracle, opts: &MinimaxOptions) -> Result<MinimaxSolution> {
    let n = oracle.dim();
    let start = opts
        .start
        .as_ref()
        .ok_or_else(|| MinimaxError::Invalid("oracle mode needs a start point and box".into()))?;
    if start.point.len() != n || start.lower.len() != n || start.upper.len() != n {
        return Err(MinimaxError::Invalid("start/box dimension mismatch".into()));
    }
    if (0..n).any(|j| !(start.lower[j] < start.upper[j])) {
        return Err(MinimaxError::Invalid("empty bounding box".into()));
    }
    let mut lo = start.lower.clone();
    let mut hi = start.upper.clone();
    let init: Vec<f64> = (0..n).map(|j| start.point[j].clamp(lo[j], hi[j])).collect();

    let mut diag = MinimaxDiagnostics::default();
    let mut cuts: Vec<Cut> = Vec::new();
    let (f0, v0) = max_over(oracle, &init);
    cuts.push(make_cut(oracle, &init, v0));
    let mut best_u = init;
    let mut best = f0;
    let mut lower = f64::NEG_INFINITY;
    let mut last_support: Vec<usize> = Vec::new();
    let mut last_weights: Vec<f64>;

    loop {
        if diag.iterations >= opts.max_iter {
            return Err(MinimaxError::IterationLimit {
                iterations: diag.iterations,
                gap: best - lower,
            });
        }
        diag.iterations += 1;
        let pieces: Vec<Piece> = cuts.iter().map(Cut::piece).collect();
        let master = solve_epigraph(&pieces, n, Some((&lo, &hi)), &opts.lp)?;
        diag.lp_pivots += master.pivots;
        lower = lower.max(master.t);
        last_weights = master.weights.clone();

        let (fk, vk) = max_over(oracle, &master.u);
        cuts.push(make_cut(oracle, &master.u, vk));
        if fk < best {
            best = fk;
            best_u = master.u.clone();
        }

        if opts.polish && best - lower > opts.gap_tol {
            let (support, weights) = support_of(&cuts, &master.weights);
            if support != last_support || diag.iterations % 10 == 0 {
                diag.polish_attempts += 1;
                if let Some(up) = polish(oracle, &best_u, &support, &weights) {
                    let inside = (0..n).all(|j| up[j] >= lo[j] && up[j] <= hi[j]);
                    if inside && up.iter().all(|x| x.is_finite()) {
                        let (fp, _) = max_over(oracle, &up);
                        let band = 1e-6 * (1.0 + fp.abs());
                        let mut near: Vec<(f64, usize)> = (0..oracle.len())
                            .map(|v| (oracle.value(&up, v), v))
                            .filter(|(j, _)| *j >= fp - band)
                            .collect();
                        near.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
                        near.truncate(2 * (n + 1));
                        for &(_, v) in &near {
                            cuts.push(make_cut(oracle, &up, v));
                        }
                        if fp < best {
                            best = fp;
                            best_u = up;
                            diag.polish_accepted += 1;
                        }
                    }
                }
                last_support = support;
            }
        }
        diag.history.push((lower, best));

        if best - lower <= opts.gap_tol {
            let width: f64 = (0..n).map(|j| hi[j] - lo[j]).fold(0.0, f64::max);
            let on_boundary = (0..n).any(|j| {
                best_u[j] - lo[j] <= 1e-9 * width || hi[j] - best_u[j] <= 1e-9 * width
            });
            if !on_boundary {
                break;
            }
            if diag.box_expansions >= opts.max_box_expansions {
                return Err(MinimaxError::BoxBoundary {
                    expansions: diag.box_expansions,
                });
            }
            diag.box_expansions += 1;
            for j in 0..n {
                let center = 0.5 * (lo[j] + hi[j]);
                let half = hi[j] - lo[j];
                lo[j] = center - half;
                hi[j] = center + half;
            }
            lower = f64::NEG_INFINITY;
        }
    }

    diag.lower_bound = lower;
    diag.upper_bound = best;
    let certificate = oracle_certificate(oracle, &best_u, best, &cuts, &last_weights, &opts.lp)?;
    diag.stationarity = certificate_stationarity(oracle, &best_u, &certificate);
    Ok(MinimaxSolution {
        u: best_u,
        value: best,
        certificate,
        diagnostics: diag,
    })
}

/// Aggregates master weights over cuts into weights over `V`.
fn support_of(cuts: &[Cut], weights: &[f64]) -> (Vec<usize>, Vec<f64>) {
    let mut support: Vec<usize> = Vec::new();
    let mut w: Vec<f64> = Vec::new();
    for (cut, &y) in cuts.iter().zip(weights) {
        if y <= 1e-12 {
            continue;
        }
        match support.iter().position(|&v| v == cut.v) {
            Some(p) => w[p] += y,
            None => {
                support.push(cut.v);
                w.push(y);
            }
        }
    }
    let total: f64 = w.iter().sum();
    if total > 0.0 {
        w.iter_mut().for_each(|x| *x /= total);
    }
    (support, w)
}

/// Weights `lambda` on the simplex minimizing `||sum_i lambda_i g_i||_inf`.
/// Returns the weights and the attained norm.
pub(crate) fn fit_weights(grads: &[Vec<f64>], lp: &LpOptions) -> Result<(Vec<f64>, f64)> {
    let k = grads.len();
    if k == 0 {
        return Err(MinimaxError::InconsistentDuals("no candidate atoms".into()));
    }
    let n = grads[0].len();
    let mut objective = vec![0.0; k];
    objective.push(1.0);
    let mut problem = LpProblem::new(objective);
    let mut ones = vec![1.0; k];
    ones.push(0.0);
    problem.add_row(ones, RowSense::Eq, 1.0);
    for j in 0..n {
        let mut plus: Vec<f64> = grads.iter().map(|g| g[j]).collect();
        plus.push(-1.0);
        let mut minus: Vec<f64> = grads.iter().map(|g| -g[j]).collect();
        minus.push(-1.0);
        problem.add_row(plus, RowSense::Le, 0.0);
        problem.add_row(minus, RowSense::Le, 0.0);
    }
    let res = solve_lp_with(&problem, lp)?;
    if res.status != LpStatus::Optimal {
        return Err(MinimaxError::InconsistentDuals("weight fit LP failed".into()));
    }
    let mut weights: Vec<f64> = res.x[..k].iter().map(|w| w.max(0.0)).collect();
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);
    let mut agg = vec![0.0; n];
    for (w, g) in weights.iter().zip(grads) {
        for (a, gi) in agg.iter_mut().zip(g) {
            *a += w * gi;
        }
    }
    Ok((weights, norm_inf(&agg)))
}

/// Builds the oracle-mode certificate at `u`.
///
/// Two candidates are formed and the one with the smaller aggregated
/// subgradient wins: (a) oracle subgradients at `u` over the near-maximal
/// elements of `V`, weighted by [`fit_weights`]; (b) the final master
/// weights over cuts that are tight at `u`, which matter where `J` has kinks
/// and the oracle's own subgradient choice does not balance.
fn oracle_certificate(
    oracle: &dyn ConvexOracle,
    u: &[f64],
    value: f64,
    cuts: &[Cut],
    master_weights: &[f64],
    lp: &LpOptions,
) -> Result<SaddleCertificate> {
    let n = oracle.dim();
    let band = 1e-7 * (1.0 + value.abs());

    let candidates: Vec<usize> = (0..oracle.len())
        .filter(|&v| oracle.value(u, v) >= value - band)
        .collect();
    let grads: Vec<Vec<f64>> = candidates.iter().map(|&v| oracle.eval(u, v).1).collect();
    let (mut weights, _) = fit_weights(&grads, lp)?;
    caratheodory(&mut weights, &grads, n);
    let pointwise: Vec<(usize, f64, Vec<f64>)> = candidates
        .iter()
        .zip(&weights)
        .zip(&grads)
        .filter(|((_, w), _)| **w > 0.0)
        .map(|((&v, &w), g)| (v, w, g.clone()))
        .collect();

    let mut from_cuts: Vec<(usize, f64, Vec<f64>)> = Vec::new();
    for (cut, &y) in cuts.iter().zip(master_weights) {
        if y <= 1e-12 || cut.at(u) < value - band || oracle.value(u, cut.v) < value - band {
            continue;
        }
        match from_cuts.iter().position(|(v, _, _)| *v == cut.v) {
            Some(p) => {
                let (_, w, g) = &mut from_cuts[p];
                for (gi, ci) in g.iter_mut().zip(&cut.grad) {
                    *gi = (*w * *gi + y * ci) / (*w + y);
                }
                *w += y;
            }
            None => from_cuts.push((cut.v, y, cut.grad.clone())),
        }
    }
    if !from_cuts.is_empty() {
        let mut w: Vec<f64> = from_cuts.iter().map(|c| c.1).collect();
        let total: f64 = w.iter().sum();
        w.iter_mut().for_each(|x| *x /= total);
        let g: Vec<Vec<f64>> = from_cuts.iter().map(|c| c.2.clone()).collect();
        caratheodory(&mut w, &g, n);
        from_cuts = from_cuts
            .into_iter()
            .zip(w)
            .filter(|(_, w)| *w > 0.0)
            .map(|((v, _, g), w)| (v, w, g))
            .collect();
    }

    let stationarity = |atoms: &[(usize, f64, Vec<f64>)]| {
        let total: f64 = atoms.iter().map(|a| a.1).sum();
        let mut agg = vec![0.0; n];
        for (_, w, g) in atoms {
            for (a, gi) in agg.iter_mut().zip(g) {
                *a += w / total * gi;
            }
        }
        norm_inf(&agg)
    };
    let chosen = if !from_cuts.is_empty() && stationarity(&from_cuts) < stationarity(&pointwise) {
        from_cuts
    } else {
        pointwise
    };
    let total: f64 = chosen.iter().map(|a| a.1).sum();
    let mut atoms: Vec<SupportAtom> = chosen
        .into_iter()
        .map(|(v, w, g)| SupportAtom {
            v,
            sign: 1.0,
            weight: w / total,
            subgradient: Some(g),
        })
        .collect();
    atoms.sort_by_key(|a| a.v);
    Ok(SaddleCertificate { atoms, value })
}

fn certificate_stationarity(oracle: &dyn ConvexOracle, u: &[f64], cert: &SaddleCertificate) -> f64 {
    aggregate_gradient(&cert.atoms, |a| {
        a.subgradient.clone().unwrap_or_else(|| oracle.eval(u, a.v).1)
    })
    .1
}

/// Checks a saddle certificate at `u`.
///
/// Conditions reported:
///
/// - `structure`: positive weights summing to one, `k <= n + 1`, valid indices.
/// - `(L)`: `max_v J(u, v) <= sum_i lambda_i J(u, v_i) + tol`.
/// - `(R)`: `||sum_i lambda_i g_i||_inf <= tol`, with `g_i = sign_i beta_{v_i}`
///   in affine mode, the stored subgradient when the atom carries one, and
///   the oracle's subgradient otherwise.
/// - `(R) branch` (affine absolute mode): each atom's sign selects the active
///   branch of `|alpha + beta . u|`.
/// - `(R) subgradient` (stored subgradients): the subgradient inequality
///   holds at `u +- h e_j`.
pub fn verify_saddle(
    inst: MinimaxInstance<'_>,
    u: &[f64],
    cert: &SaddleCertificate,
    tol: f64,
) -> Report {
    let mut report = Report::new();
    let oracle = inst.oracle();
    let n = oracle.dim();
    let k = cert.atoms.len();
    let indices_ok = u.len() == n && cert.atoms.iter().all(|a| a.v < oracle.len());
    report.push(Check::flag("structure: indices and dimension", indices_ok));
    if !indices_ok {
        return report;
    }
    let sum: f64 = cert.atoms.iter().map(|a| a.weight).sum();
    report.check("structure: weights sum to one", (sum - 1.0).abs(), 1e-12);
    report.push(Check::flag(
        "structure: weights positive",
        k > 0 && cert.atoms.iter().all(|a| a.weight > 0.0),
    ));
    report.push(Check::flag("structure: k <= n + 1", k <= n + 1));

    let (max_value, _) = max_over(oracle, u);
    let weighted: f64 = cert
        .atoms
        .iter()
        .map(|a| a.weight * oracle.value(u, a.v))
        .sum();
    report.check("(L) max over V <= weighted support value", (max_value - weighted).max(0.0), tol);

    let grad_of = |a: &SupportAtom| -> Vec<f64> {
        match (&inst, &a.subgradient) {
            (MinimaxInstance::Affine(fam), _) => signed_slope(fam, a),
            (_, Some(g)) => g.clone(),
            (_, None) => oracle.eval(u, a.v).1,
        }
    };
    let (_, stationarity) = aggregate_gradient(&cert.atoms, grad_of);
    report.check("(R) stationarity of weighted support", stationarity, tol);

    match inst {
        MinimaxInstance::Affine(fam) if fam.absolute => {
            let worst = cert
                .atoms
                .iter()
                .map(|a| (oracle.value(u, a.v) - a.sign * fam.affine(u, a.v)).abs())
                .fold(0.0, f64::max);
            report.check("(R) branch of absolute value", worst, tol);
        }
        MinimaxInstance::Oracle(_) => {
            let mut worst = 0.0_f64;
            for a in cert.atoms.iter() {
                let Some(g) = &a.subgradient else { continue };
                if g.len() != n {
                    worst = f64::INFINITY;
                    continue;
                }
                let base = oracle.value(u, a.v);
                let mut probe = u.to_vec();
                for j in 0..n {
                    let h = 1e-3 * (1.0 + u[j].abs());
                    for s in [h, -h] {
                        probe[j] = u[j] + s;
                        let gap = base + g[j] * s - oracle.value(&probe, a.v);
                        worst = worst.max(gap);
                    }
                    probe[j] = u[j];
                }
            }
            report.check("(R) subgradient inequality", worst.max(0.0), tol);
        }
        _ => {}
    }
    report
}
