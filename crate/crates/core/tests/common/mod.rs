#![allow(dead_code)]

use std::path::PathBuf;

use simapprox::{load_problem, SampledProblem};

pub fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data")
}

/// Every bundled instance as `(file stem, problem)`, sorted by name.
pub fn corpus() -> Vec<(String, SampledProblem)> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(data_dir())
        .expect("corpus directory")
        .map(|e| e.expect("dir entry").path())
        .filter(|p| p.extension().is_some_and(|e| e == "json"))
        .collect();
    paths.sort();
    paths
        .into_iter()
        .map(|p| {
            let name = p.file_stem().unwrap().to_string_lossy().into_owned();
            let problem = load_problem(&p).unwrap_or_else(|e| panic!("{name}: {e}"));
            (name, problem)
        })
        .collect()
}

pub fn instance(name: &str) -> SampledProblem {
    load_problem(data_dir().join(format!("{name}.json"))).unwrap()
}

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use simapprox::problem::{Basis, CodomainNorm, DomainGrid, FunctionFamily, MeasureGrid, ParameterGrid};

/// A scalar problem on an interval grid with a polynomial (Haar) basis of
/// dimension `n` and `params` smooth random functions.
pub fn random_problem(seed: u64, points: usize, params: usize, n: usize, measure_p: Option<f64>) -> SampledProblem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let domain = DomainGrid::interval(-1.0, 1.0, points).unwrap();
    let mut values = Vec::with_capacity(params * points);
    for _ in 0..params {
        let (a, b, c, w) = (
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(1.0..4.0),
        );
        for x in 0..points {
            let t = domain.coords(x)[0];
            values.push(a * (w * t).sin() + b * (c * t).exp() + c * t.abs());
        }
    }
    let family = FunctionFamily::new(values, params, points, 1, CodomainNorm::Absolute).unwrap();
    let basis_values: Vec<f64> = (0..n)
        .flat_map(|j| (0..points).map(move |x| (j, x)))
        .map(|(j, x)| domain.coords(x)[0].powi(j as i32))
        .collect();
    let basis = Basis::new(basis_values, n, points, 1).unwrap();
    let measure = measure_p.map(|p| {
        let w = (0..points).map(|_| rng.gen_range(0.5..1.5)).collect();
        MeasureGrid::new(w, p).unwrap()
    });
    let labels = (0..params).map(|a| format!("f{a}"));
    SampledProblem::new(domain, ParameterGrid::from_labels(labels).unwrap(), family, basis, measure).unwrap()
}
