//! The discretized problem model: domain grid `X`, parameter grid `A`,
//! tabulated family `F[a][x]`, tabulated basis `B[j][x]` and an optional
//! weighted measure on `X`.
//!
//! Compactness of `A` and `X` is realized as finiteness. Continuity of
//! `a -> f_a` has no meaning on a finite grid and is not checked.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Relative singular-value threshold below which the basis is rank deficient.
pub const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum ProblemError {
    #[error("cannot read problem file: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("duplicate label `{0}`")]
    DuplicateLabel(String),
    #[error("unknown label `{0}`")]
    UnknownLabel(String),
    #[error("missing table entry: {0}")]
    MissingEntry(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("basis rank < n (rank {rank}, n = {n})")]
    RankDeficient { rank: usize, n: usize },
    #[error("non-positive measure weight at `{0}`")]
    NonPositiveWeight(String),
    #[error("invalid problem: {0}")]
    Invalid(String),
}

type Result<T> = std::result::Result<T, ProblemError>;

fn index_labels<'a>(labels: impl Iterator<Item = &'a str>) -> Result<HashMap<String, usize>> {
    let mut index = HashMap::new();
    for (i, label) in labels.enumerate() {
        if index.insert(label.to_string(), i).is_some() {
            return Err(ProblemError::DuplicateLabel(label.to_string()));
        }
    }
    Ok(index)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub label: String,
    #[serde(default)]
    pub coords: Vec<f64>,
}

/// The finite domain `X`.
#[derive(Debug, Clone)]
pub struct DomainGrid {
    points: Vec<GridPoint>,
    interval: bool,
    index: HashMap<String, usize>,
}

impl DomainGrid {
    /// Builds a grid. With `interval` set, every point must carry exactly one
    /// coordinate and the coordinates must be strictly increasing.
    pub fn new(points: Vec<GridPoint>, interval: bool) -> Result<Self> {
        if points.is_empty() {
            return Err(ProblemError::Invalid("domain grid is empty".into()));
        }
        let index = index_labels(points.iter().map(|p| p.label.as_str()))?;
        for p in &points {
            if p.coords.iter().any(|c| !c.is_finite()) {
                return Err(ProblemError::NonFinite(format!("coords of `{}`", p.label)));
            }
        }
        if interval {
            for p in &points {
                if p.coords.len() != 1 {
                    return Err(ProblemError::Invalid(format!(
                        "interval grid point `{}` must have exactly one coordinate",
                        p.label
                    )));
                }
            }
            if points.windows(2).any(|w| w[1].coords[0] <= w[0].coords[0]) {
                return Err(ProblemError::Invalid(
                    "interval grid coordinates must be strictly increasing".into(),
                ));
            }
        }
        Ok(Self {
            points,
            interval,
            index,
        })
    }

    /// Uniform grid of `count` points on `[lo, hi]` labelled `x0, x1, ...`.
    pub fn interval(lo: f64, hi: f64, count: usize) -> Result<Self> {
        if count == 0 {
            return Err(ProblemError::Invalid("grid needs at least one point".into()));
        }
        let points = (0..count)
            .map(|i| {
                let t = if count == 1 {
                    lo
                } else {
                    lo + (hi - lo) * i as f64 / (count - 1) as f64
                };
                GridPoint {
                    label: format!("x{i}"),
                    coords: vec![t],
                }
            })
            .collect();
        Self::new(points, true)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn is_interval(&self) -> bool {
        self.interval
    }

    pub fn points(&self) -> &[GridPoint] {
        &self.points
    }

    pub fn label(&self, i: usize) -> &str {
        &self.points[i].label
    }

    pub fn coords(&self, i: usize) -> &[f64] {
        &self.points[i].coords
    }

    pub fn index_of(&self, label: &str) -> Result<usize> {
        self.index
            .get(label)
            .copied()
            .ok_or_else(|| ProblemError::UnknownLabel(label.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Parameter {
    pub label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coords: Option<Vec<f64>>,
}

/// The finite parameter set `A`.
#[derive(Debug, Clone)]
pub struct ParameterGrid {
    params: Vec<Parameter>,
    index: HashMap<String, usize>,
}

impl ParameterGrid {
    pub fn new(params: Vec<Parameter>) -> Result<Self> {
        if params.is_empty() {
            return Err(ProblemError::Invalid("parameter set (family) is empty".into()));
        }
        let index = index_labels(params.iter().map(|p| p.label.as_str()))?;
        Ok(Self { params, index })
    }

    pub fn from_labels<S: Into<String>>(labels: impl IntoIterator<Item = S>) -> Result<Self> {
        Self::new(
            labels
                .into_iter()
                .map(|l| Parameter {
                    label: l.into(),
                    coords: None,
                })
                .collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn params(&self) -> &[Parameter] {
        &self.params
    }

    pub fn label(&self, a: usize) -> &str {
        &self.params[a].label
    }

    pub fn index_of(&self, label: &str) -> Result<usize> {
        self.index
            .get(label)
            .copied()
            .ok_or_else(|| ProblemError::UnknownLabel(label.to_string()))
    }
}

/// Norm on the codomain `R^d`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CodomainNorm {
    /// `|y|`, only for `d = 1`.
    Absolute,
    Euclidean,
}

impl CodomainNorm {
    pub fn norm(&self, y: &[f64]) -> f64 {
        match self {
            CodomainNorm::Absolute => y[0].abs(),
            CodomainNorm::Euclidean => y.iter().map(|v| v * v).sum::<f64>().sqrt(),
        }
    }
}

/// Tabulated family `F[a][x] in R^d`, stored row-major as `[a][x][k]`.
#[derive(Debug, Clone)]
pub struct FunctionFamily {
    values: Vec<f64>,
    params: usize,
    points: usize,
    dim: usize,
    norm: CodomainNorm,
}

impl FunctionFamily {
    pub fn new(
        values: Vec<f64>,
        params: usize,
        points: usize,
        dim: usize,
        norm: CodomainNorm,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(ProblemError::Dimension("codomain dimension must be >= 1".into()));
        }
        if norm == CodomainNorm::Absolute && dim != 1 {
            return Err(ProblemError::Invalid(
                "absolute codomain norm requires codomain_dim = 1".into(),
            ));
        }
        if values.len() != params * points * dim {
            return Err(ProblemError::Dimension(format!(
                "family table has {} entries, expected {}",
                values.len(),
                params * points * dim
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(ProblemError::NonFinite("family table".into()));
        }
        Ok(Self {
            values,
            params,
            points,
            dim,
            norm,
        })
    }

    pub fn value(&self, a: usize, x: usize) -> &[f64] {
        let start = (a * self.points + x) * self.dim;
        &self.values[start..start + self.dim]
    }

    pub fn params(&self) -> usize {
        self.params
    }

    pub fn points(&self) -> usize {
        self.points
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn norm(&self) -> CodomainNorm {
        self.norm
    }
}

/// Tabulated basis `B[j][x] in R^d`, stored as `[j][x][k]`.
#[derive(Debug, Clone)]
pub struct Basis {
    values: Vec<f64>,
    n: usize,
    points: usize,
    dim: usize,
}

impl Basis {
    /// Builds a basis and checks it spans an `n`-dimensional space on the grid.
    pub fn new(values: Vec<f64>, n: usize, points: usize, dim: usize) -> Result<Self> {
        if n == 0 {
            return Err(ProblemError::Invalid("basis must have at least one function".into()));
        }
        if values.len() != n * points * dim {
            return Err(ProblemError::Dimension(format!(
                "basis table has {} entries, expected {}",
                values.len(),
                n * points * dim
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(ProblemError::NonFinite("basis table".into()));
        }
        let basis = Self {
            values,
            n,
            points,
            dim,
        };
        let rank = basis.rank();
        if rank < n {
            return Err(ProblemError::RankDeficient { rank, n });
        }
        Ok(basis)
    }

    /// Builds a scalar basis from closures evaluated at the grid coordinates.
    pub fn from_fns(grid: &DomainGrid, fns: &[&dyn Fn(&[f64]) -> f64]) -> Result<Self> {
        let mut values = Vec::with_capacity(fns.len() * grid.len());
        for f in fns {
            for i in 0..grid.len() {
                values.push(f(grid.coords(i)));
            }
        }
        Self::new(values, fns.len(), grid.len(), 1)
    }

    pub fn value(&self, j: usize, x: usize) -> &[f64] {
        let start = (j * self.points + x) * self.dim;
        &self.values[start..start + self.dim]
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn points(&self) -> usize {
        self.points
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Collocation matrix with one row per `(x, k)` and one column per basis
    /// function.
    pub fn matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.points * self.dim, self.n, |row, j| {
            self.values[j * self.points * self.dim + row]
        })
    }

    /// Numerical rank from the singular values of the collocation matrix.
    pub fn rank(&self) -> usize {
        let sv = self.matrix().singular_values();
        let largest = sv.iter().cloned().fold(0.0, f64::max);
        if largest == 0.0 {
            return 0;
        }
        sv.iter().filter(|&&s| s > RANK_TOL * largest).count()
    }

    /// `sum_j c_j B[j][x]`.
    pub fn evaluate(&self, c: &[f64], x: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for (j, &cj) in c.iter().enumerate() {
            for (o, b) in out.iter_mut().zip(self.value(j, x)) {
                *o += cj * b;
            }
        }
        out
    }

    /// Gram matrix `sum_x <B[i][x], B[j][x]>`.
    pub fn gram(&self) -> DMatrix<f64> {
        let m = self.matrix();
        m.transpose() * m
    }
}

/// Coefficient vector of an element of `H`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Coefficients(pub Vec<f64>);

impl Coefficients {
    pub fn new(c: Vec<f64>) -> Result<Self> {
        if c.iter().any(|v| !v.is_finite()) {
            return Err(ProblemError::NonFinite("coefficients".into()));
        }
        Ok(Self(c))
    }

    pub fn zeros(n: usize) -> Self {
        Self(vec![0.0; n])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Finite weighted point set `(S, m)` over the domain grid with exponent `p`.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasureGrid {
    weights: Vec<f64>,
    p: f64,
}

impl MeasureGrid {
    pub fn new(weights: Vec<f64>, p: f64) -> Result<Self> {
        if !(p.is_finite() && p >= 1.0) {
            return Err(ProblemError::Invalid(format!("exponent p = {p} must satisfy 1 <= p < inf")));
        }
        for (i, &w) in weights.iter().enumerate() {
            if !(w.is_finite() && w > 0.0) {
                return Err(ProblemError::NonPositiveWeight(format!("#{i}")));
            }
        }
        Ok(Self { weights, p })
    }

    pub fn uniform(points: usize, p: f64) -> Result<Self> {
        Self::new(vec![1.0; points], p)
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    /// Conjugate exponent, `inf` when `p = 1`.
    pub fn q(&self) -> f64 {
        if self.p == 1.0 {
            f64::INFINITY
        } else {
            self.p / (self.p - 1.0)
        }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

/// A fully validated discretized problem.
#[derive(Debug, Clone)]
pub struct SampledProblem {
    pub domain: DomainGrid,
    pub params: ParameterGrid,
    pub family: FunctionFamily,
    pub basis: Basis,
    pub measure: Option<MeasureGrid>,
}

impl SampledProblem {
    pub fn new(
        domain: DomainGrid,
        params: ParameterGrid,
        family: FunctionFamily,
        basis: Basis,
        measure: Option<MeasureGrid>,
    ) -> Result<Self> {
        if family.points() != domain.len() || basis.points() != domain.len() {
            return Err(ProblemError::Dimension(
                "family/basis tables do not match the domain grid".into(),
            ));
        }
        if family.params() != params.len() {
            return Err(ProblemError::Dimension(
                "family table does not match the parameter grid".into(),
            ));
        }
        if family.dim() != basis.dim() {
            return Err(ProblemError::Dimension(format!(
                "family codomain dimension {} differs from basis dimension {}",
                family.dim(),
                basis.dim()
            )));
        }
        if domain.len() < basis.n() + 1 {
            return Err(ProblemError::Invalid(format!(
                "domain has {} points, need at least n + 1 = {}",
                domain.len(),
                basis.n() + 1
            )));
        }
        if let Some(m) = &measure {
            if m.len() != domain.len() {
                return Err(ProblemError::Dimension(
                    "measure weights do not cover the domain grid".into(),
                ));
            }
        }
        Ok(Self {
            domain,
            params,
            family,
            basis,
            measure,
        })
    }

    /// Dimension `n` of the subspace.
    pub fn n(&self) -> usize {
        self.basis.n()
    }

    /// Codomain dimension `d`.
    pub fn dim(&self) -> usize {
        self.family.dim()
    }

    pub fn codomain_norm(&self) -> CodomainNorm {
        self.family.norm()
    }

    /// `F[a][x] - sum_j c_j B[j][x]` by index.
    pub fn residual_at(&self, c: &[f64], a: usize, x: usize) -> Vec<f64> {
        let mut r = self.family.value(a, x).to_vec();
        for (j, &cj) in c.iter().enumerate() {
            for (ri, b) in r.iter_mut().zip(self.basis.value(j, x)) {
                *ri -= cj * b;
            }
        }
        r
    }

    /// Codomain norm of the residual at `(a, x)`.
    pub fn residual_norm_at(&self, c: &[f64], a: usize, x: usize) -> f64 {
        self.codomain_norm().norm(&self.residual_at(c, a, x))
    }

    /// Residual by labels.
    pub fn residual(&self, c: &Coefficients, a: &str, x: &str) -> Result<Vec<f64>> {
        self.check_coefficients(c)?;
        let a = self.params.index_of(a)?;
        let x = self.domain.index_of(x)?;
        Ok(self.residual_at(c.as_slice(), a, x))
    }

    /// Value of the approximant at the labelled point.
    pub fn evaluate_approximant(&self, c: &Coefficients, x: &str) -> Result<Vec<f64>> {
        self.check_coefficients(c)?;
        let x = self.domain.index_of(x)?;
        Ok(self.basis.evaluate(c.as_slice(), x))
    }

    pub fn check_coefficients(&self, c: &Coefficients) -> Result<()> {
        if c.len() != self.n() {
            return Err(ProblemError::Dimension(format!(
                "coefficient vector has length {}, expected n = {}",
                c.len(),
                self.n()
            )));
        }
        if c.0.iter().any(|v| !v.is_finite()) {
            return Err(ProblemError::NonFinite("coefficients".into()));
        }
        Ok(())
    }

    /// `max_{a,x} ||F[a][x] - (Bc)(x)||`, scanned in label order.
    pub fn uniform_deviation(&self, c: &[f64]) -> f64 {
        let mut best = 0.0_f64;
        for a in 0..self.params.len() {
            for x in 0..self.domain.len() {
                best = best.max(self.residual_norm_at(c, a, x));
            }
        }
        best
    }

    /// Replaces the family by its convex hull sampled on a simplex lattice.
    pub fn hull(&self, resolution: usize) -> Result<Self> {
        let (params, family) = hull_family(&self.params, &self.family, resolution)?;
        Self::new(
            self.domain.clone(),
            params,
            family,
            self.basis.clone(),
            self.measure.clone(),
        )
    }

    pub fn to_file(&self) -> ProblemFile {
        let domain_points = self.domain.points().to_vec();
        let params = (0..self.params.len())
            .map(|a| self.params.label(a).to_string())
            .collect();
        let mut family = BTreeMap::new();
        for a in 0..self.params.len() {
            let row = (0..self.domain.len())
                .map(|x| {
                    (
                        self.domain.label(x).to_string(),
                        self.family.value(a, x).to_vec(),
                    )
                })
                .collect();
            family.insert(self.params.label(a).to_string(), row);
        }
        let basis = (0..self.n())
            .map(|j| {
                (0..self.domain.len())
                    .map(|x| {
                        (
                            self.domain.label(x).to_string(),
                            self.basis.value(j, x).to_vec(),
                        )
                    })
                    .collect()
            })
            .collect();
        let measure = self.measure.as_ref().map(|m| MeasureFile {
            weights: (0..self.domain.len())
                .map(|x| (self.domain.label(x).to_string(), m.weights()[x]))
                .collect(),
            p: m.p(),
        });
        ProblemFile {
            domain_points,
            interval: self.domain.is_interval(),
            params,
            codomain_dim: self.dim(),
            codomain_norm: Some(self.codomain_norm()),
            family,
            basis,
            measure,
        }
    }
}

/// On-disk problem schema.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProblemFile {
    pub domain_points: Vec<GridPoint>,
    #[serde(default)]
    pub interval: bool,
    pub params: Vec<String>,
    pub codomain_dim: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub codomain_norm: Option<CodomainNorm>,
    pub family: BTreeMap<String, BTreeMap<String, Vec<f64>>>,
    pub basis: Vec<BTreeMap<String, Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub measure: Option<MeasureFile>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MeasureFile {
    pub weights: BTreeMap<String, f64>,
    pub p: f64,
}

impl ProblemFile {
    /// Validates the file model into a problem.
    pub fn into_problem(self) -> Result<SampledProblem> {
        let domain = DomainGrid::new(self.domain_points, self.interval)?;
        let params = ParameterGrid::from_labels(self.params)?;
        let dim = self.codomain_dim;
        let norm = match self.codomain_norm {
            Some(n) => n,
            None if dim == 1 => CodomainNorm::Absolute,
            None => CodomainNorm::Euclidean,
        };

        for label in self.family.keys() {
            params.index_of(label)?;
        }
        let mut family = Vec::with_capacity(params.len() * domain.len() * dim);
        for a in 0..params.len() {
            let label = params.label(a);
            let row = self
                .family
                .get(label)
                .ok_or_else(|| ProblemError::MissingEntry(format!("family[{label}]")))?;
            family.extend(tabulate(row, &domain, dim, &format!("family[{label}]"))?);
        }
        let family = FunctionFamily::new(family, params.len(), domain.len(), dim, norm)?;

        let n = self.basis.len();
        let mut basis = Vec::with_capacity(n * domain.len() * dim);
        for (j, row) in self.basis.iter().enumerate() {
            basis.extend(tabulate(row, &domain, dim, &format!("basis[{j}]"))?);
        }
        let basis = Basis::new(basis, n, domain.len(), dim)?;

        let measure = match self.measure {
            None => None,
            Some(m) => {
                for label in m.weights.keys() {
                    domain.index_of(label)?;
                }
                let mut weights = Vec::with_capacity(domain.len());
                for x in 0..domain.len() {
                    let label = domain.label(x);
                    let w = *m
                        .weights
                        .get(label)
                        .ok_or_else(|| ProblemError::MissingEntry(format!("measure.weights[{label}]")))?;
                    if !(w.is_finite() && w > 0.0) {
                        return Err(ProblemError::NonPositiveWeight(label.to_string()));
                    }
                    weights.push(w);
                }
                Some(MeasureGrid::new(weights, m.p)?)
            }
        };

        SampledProblem::new(domain, params, family, basis, measure)
    }
}

fn tabulate(
    row: &BTreeMap<String, Vec<f64>>,
    domain: &DomainGrid,
    dim: usize,
    what: &str,
) -> Result<Vec<f64>> {
    for label in row.keys() {
        domain.index_of(label)?;
    }
    let mut out = Vec::with_capacity(domain.len() * dim);
    for x in 0..domain.len() {
        let label = domain.label(x);
        let v = row
            .get(label)
            .ok_or_else(|| ProblemError::MissingEntry(format!("{what}[{label}]")))?;
        if v.len() != dim {
            return Err(ProblemError::Dimension(format!(
                "{what}[{label}] has length {}, expected codomain_dim = {dim}",
                v.len()
            )));
        }
        out.extend_from_slice(v);
    }
    Ok(out)
}

/// Parses and validates a problem document.
pub fn parse_problem(text: &str) -> Result<SampledProblem> {
    let file: ProblemFile = serde_json::from_str(text).map_err(|e| ProblemError::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    file.into_problem()
}

/// Reads, parses and validates a problem file.
pub fn load_problem(path: impl AsRef<Path>) -> Result<SampledProblem> {
    let text = fs::read_to_string(path)?;
    parse_problem(&text)
}

/// All `alpha` with entries in `{0, 1/res, ..., 1}` summing to one, as integer
/// counts, in lexicographic order.
fn simplex_lattice(parts: usize, resolution: usize) -> Vec<Vec<usize>> {
    fn rec(parts: usize, left: usize, prefix: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if parts == 1 {
            prefix.push(left);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for k in (0..=left).rev() {
            prefix.push(k);
            rec(parts - 1, left - k, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    rec(parts, resolution, &mut Vec::new(), &mut out);
    out
}

/// Builds `g_alpha = sum_j alpha_j g_j` for every `alpha` on the uniform
/// simplex lattice of the given resolution.
///
/// Vertex members keep the labels of the original functions; interior
/// members are labelled `hull[k_1:...:k_l]/res` and carry `alpha` as their
/// parameter coordinates.
pub fn hull_family(
    params: &ParameterGrid,
    family: &FunctionFamily,
    resolution: usize,
) -> Result<(ParameterGrid, FunctionFamily)> {
    if resolution == 0 {
        return Err(ProblemError::Invalid("hull resolution must be >= 1".into()));
    }
    if family.params() != params.len() {
        return Err(ProblemError::Dimension(
            "family table does not match the parameter grid".into(),
        ));
    }
    let parts = params.len();
    let lattice = simplex_lattice(parts, resolution);
    let mut new_params = Vec::with_capacity(lattice.len());
    let mut values = Vec::with_capacity(lattice.len() * family.points() * family.dim());
    for counts in &lattice {
        let alpha: Vec<f64> = counts
            .iter()
            .map(|&k| k as f64 / resolution as f64)
            .collect();
        let label = match counts.iter().position(|&k| k == resolution) {
            Some(vertex) => params.label(vertex).to_string(),
            None => {
                let joined: Vec<String> = counts.iter().map(|k| k.to_string()).collect();
                format!("hull[{}]/{resolution}", joined.join(":"))
            }
        };
        for x in 0..family.points() {
            for k in 0..family.dim() {
                let v: f64 = alpha
                    .iter()
                    .enumerate()
                    .filter(|(_, &w)| w != 0.0)
                    .map(|(j, &w)| w * family.value(j, x)[k])
                    .sum();
                values.push(v);
            }
        }
        new_params.push(Parameter {
            label,
            coords: Some(alpha),
        });
    }
    let grid = ParameterGrid::new(new_params)?;
    let family = FunctionFamily::new(
        values,
        grid.len(),
        family.points(),
        family.dim(),
        family.norm(),
    )?;
    Ok((grid, family))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_problem(xs: &[f64], family: &[&dyn Fn(f64) -> f64], basis: &[&dyn Fn(f64) -> f64]) -> SampledProblem {
        let domain = DomainGrid::new(
            xs.iter()
                .enumerate()
                .map(|(i, &x)| GridPoint {
                    label: format!("x{i}"),
                    coords: vec![x],
                })
                .collect(),
            true,
        )
        .unwrap();
        let params = ParameterGrid::from_labels((0..family.len()).map(|a| format!("f{a}"))).unwrap();
        let fam: Vec<f64> = family.iter().flat_map(|f| xs.iter().map(move |&x| f(x))).collect();
        let fam = FunctionFamily::new(fam, family.len(), xs.len(), 1, CodomainNorm::Absolute).unwrap();
        let b: Vec<f64> = basis.iter().flat_map(|f| xs.iter().map(move |&x| f(x))).collect();
        let b = Basis::new(b, basis.len(), xs.len(), 1).unwrap();
        SampledProblem::new(domain, params, fam, b, None).unwrap()
    }

    #[test]
    fn minimal_problem_file_is_valid() {
        let text = r#"{
            "domain_points": [{"label": "p", "coords": [0.0]}, {"label": "q", "coords": [1.0]}],
            "interval": true,
            "params": ["a"],
            "codomain_dim": 1,
            "family": {"a": {"p": [1.0], "q": [2.0]}},
            "basis": [{"p": [1.0], "q": [1.0]}]
        }"#;
        let p = parse_problem(text).unwrap();
        assert_eq!(p.n(), 1);
        assert_eq!(p.dim(), 1);
        assert_eq!(p.domain.len(), 2);
    }

    #[test]
    fn duplicate_point_label_is_rejected() {
        let text = r#"{
            "domain_points": [{"label": "p"}, {"label": "p"}],
            "params": ["a"],
            "codomain_dim": 1,
            "family": {"a": {"p": [1.0]}},
            "basis": [{"p": [1.0]}]
        }"#;
        let err = parse_problem(text).unwrap_err();
        assert!(err.to_string().contains("duplicate label"), "{err}");
    }

    #[test]
    fn proportional_basis_rows_are_rank_deficient() {
        let text = r#"{
            "domain_points": [{"label": "p"}, {"label": "q"}, {"label": "r"}],
            "params": ["a"],
            "codomain_dim": 1,
            "family": {"a": {"p": [1.0], "q": [2.0], "r": [0.0]}},
            "basis": [{"p": [1.0], "q": [2.0], "r": [3.0]}, {"p": [-2.0], "q": [-4.0], "r": [-6.0]}]
        }"#;
        let err = parse_problem(text).unwrap_err();
        assert!(err.to_string().contains("basis rank < n"), "{err}");
    }

    #[test]
    fn parse_errors_carry_position() {
        let err = parse_problem("{\n  \"domain_points\": [,]\n}").unwrap_err();
        match err {
            ProblemError::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn missing_entries_and_bad_weights_are_rejected() {
        let missing = r#"{
            "domain_points": [{"label": "p"}, {"label": "q"}],
            "params": ["a"],
            "codomain_dim": 1,
            "family": {"a": {"p": [1.0]}},
            "basis": [{"p": [1.0], "q": [1.0]}]
        }"#;
        assert!(matches!(parse_problem(missing), Err(ProblemError::MissingEntry(_))));

        let weight = r#"{
            "domain_points": [{"label": "p"}, {"label": "q"}],
            "params": ["a"],
            "codomain_dim": 1,
            "family": {"a": {"p": [1.0], "q": [0.0]}},
            "basis": [{"p": [1.0], "q": [1.0]}],
            "measure": {"weights": {"p": 1.0, "q": 0.0}, "p": 2.0}
        }"#;
        assert!(matches!(parse_problem(weight), Err(ProblemError::NonPositiveWeight(_))));

        let empty = r#"{
            "domain_points": [{"label": "p"}, {"label": "q"}],
            "params": [],
            "codomain_dim": 1,
            "family": {},
            "basis": [{"p": [1.0], "q": [1.0]}]
        }"#;
        assert!(parse_problem(empty).is_err());
    }

    #[test]
    fn absolute_norm_requires_scalar_codomain() {
        let text = r#"{
            "domain_points": [{"label": "p"}, {"label": "q"}],
            "params": ["a"],
            "codomain_dim": 2,
            "codomain_norm": "absolute",
            "family": {"a": {"p": [1.0, 0.0], "q": [0.0, 1.0]}},
            "basis": [{"p": [1.0, 0.0], "q": [1.0, 0.0]}]
        }"#;
        assert!(parse_problem(text).is_err());
        let other = text.replace("\"absolute\"", "\"max\"");
        assert!(matches!(parse_problem(&other), Err(ProblemError::Parse { .. })));
    }

    #[test]
    fn evaluate_approximant_cases() {
        let p = scalar_problem(&[-1.0, 0.0, 1.0], &[&|x| x * x], &[&|_| 1.0, &|x| x]);
        let zero = Coefficients::zeros(2);
        assert_eq!(p.evaluate_approximant(&zero, "x1").unwrap(), vec![0.0]);
        let e1 = Coefficients(vec![1.0, 0.0]);
        assert_eq!(p.evaluate_approximant(&e1, "x0").unwrap(), vec![1.0]);
        let c = Coefficients(vec![1.0, 2.0]);
        let vals: Vec<f64> = ["x0", "x1", "x2"]
            .iter()
            .map(|l| p.evaluate_approximant(&c, l).unwrap()[0])
            .collect();
        assert_eq!(vals, vec![-1.0, 1.0, 3.0]);
        assert!(matches!(
            p.evaluate_approximant(&c, "nowhere"),
            Err(ProblemError::UnknownLabel(_))
        ));
    }

    #[test]
    fn residual_cases() {
        let p = scalar_problem(&[-1.0, 0.0, 1.0], &[&|x| x * x], &[&|_| 1.0, &|x| x]);
        let c = Coefficients(vec![0.5, 0.0]);
        assert_eq!(p.residual(&c, "f0", "x2").unwrap(), vec![0.5]);
        let exact = Coefficients(vec![1.0, 0.0]);
        assert_eq!(p.residual(&exact, "f0", "x2").unwrap(), vec![0.0]);
        assert!(p.residual(&c, "g", "x2").is_err());

        let domain = DomainGrid::new(
            vec![
                GridPoint { label: "s".into(), coords: vec![] },
                GridPoint { label: "t".into(), coords: vec![] },
            ],
            false,
        )
        .unwrap();
        let params = ParameterGrid::from_labels(["a"]).unwrap();
        let fam = FunctionFamily::new(vec![1.0, 0.0, 0.0, 1.0], 1, 2, 2, CodomainNorm::Euclidean).unwrap();
        let basis = Basis::new(vec![1.0, 0.0, 1.0, 0.0], 1, 2, 2).unwrap();
        let p2 = SampledProblem::new(domain, params, fam, basis, None).unwrap();
        assert_eq!(p2.residual(&Coefficients::zeros(1), "a", "s").unwrap(), vec![1.0, 0.0]);
    }

    #[test]
    fn hull_lattice_sizes() {
        let p = scalar_problem(&[0.0, 1.0, 2.0], &[&|x| x, &|x| -x], &[&|_| 1.0]);
        let (g, f) = hull_family(&p.params, &p.family, 1).unwrap();
        assert_eq!(g.len(), 2);
        assert_eq!(g.label(0), "f0");
        assert_eq!(g.label(1), "f1");
        assert_eq!(f.value(1, 2), &[-2.0]);

        let (g, f) = hull_family(&p.params, &p.family, 2).unwrap();
        assert_eq!(g.len(), 3);
        assert_eq!(f.value(0, 2), &[2.0]);
        assert_eq!(f.value(1, 2), &[0.0]);
        assert_eq!(f.value(2, 2), &[-2.0]);

        let p3 = scalar_problem(&[0.0, 1.0, 2.0], &[&|x| x, &|x| -x, &|_| 1.0], &[&|_| 1.0]);
        let (g, _) = hull_family(&p3.params, &p3.family, 2).unwrap();
        assert_eq!(g.len(), 6);
        for label in ["f0", "f1", "f2"] {
            assert!(g.index_of(label).is_ok());
        }
        assert!(hull_family(&p3.params, &p3.family, 0).is_err());
    }

    #[test]
    fn file_round_trip_preserves_problem() {
        let p = scalar_problem(&[-1.0, 0.0, 1.0], &[&|x| x * x, &|x| x], &[&|_| 1.0, &|x| x]);
        let text = serde_json::to_string(&p.to_file()).unwrap();
        let q = parse_problem(&text).unwrap();
        let c = [0.3, -0.2];
        for a in 0..2 {
            for x in 0..3 {
                assert_eq!(p.residual_at(&c, a, x), q.residual_at(&c, a, x));
            }
        }
    }
}
