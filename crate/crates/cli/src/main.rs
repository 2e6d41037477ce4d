//! `simapprox`: solve, verify and inspect best simultaneous approximation
//! problems.
//!
//! Exit codes: 0 success, 2 input error (I/O, parse, dimension mismatch),
//! 3 solver failure, 4 verification failure.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use simapprox::io::{to_json_string, CertificateFile, NormKind, SolutionFile};
use simapprox::lp_norm::{lp_deviations, LpBsaError};
use simapprox::uniform::{UniformError, UniformTolerance};
use simapprox::unicity::UnicityError;
use simapprox::{
    check_strong_unicity, load_problem, solve_lp_bsa, solve_uniform_bsa, strong_unicity_gamma,
    verify_bsa_by_definition, verify_lp_certificate, verify_uniform_certificate, Coefficients, Objective,
    ProblemError, Report, SampledProblem,
};

#[derive(Parser)]
#[command(name = "simapprox", version, about = "Best simultaneous approximation with verifiable certificates")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Norm {
    Uniform,
    Lp,
}

#[derive(Subcommand)]
enum Command {
    /// Solve a problem and write the solution with its certificate.
    Solve {
        problem: PathBuf,
        #[arg(long, value_enum, default_value = "uniform")]
        norm: Norm,
        /// Solution JSON output path.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write the residual CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Check a solution's certificate against a problem.
    Verify {
        problem: PathBuf,
        solution: PathBuf,
        /// Tolerance for every condition (defaults: 1e-7 orthogonality and
        /// 1e-6 deviation for uniform, 1e-6 for L^p).
        #[arg(long)]
        tol: Option<f64>,
        /// Random competitors for the by-definition check (0 disables it).
        #[arg(long, default_value_t = 0)]
        trials: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
    },
    /// Strong-unicity constant of a uniform solution, with a randomized check.
    Gamma {
        problem: PathBuf,
        /// Solution to use; solved from scratch when absent.
        #[arg(long)]
        solution: Option<PathBuf>,
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Replace the family by its sampled convex hull.
    Hull {
        problem: PathBuf,
        #[arg(long = "hull-resolution")]
        hull_resolution: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write per-residual data for plotting.
    Report {
        problem: PathBuf,
        solution: PathBuf,
        #[arg(long)]
        csv: PathBuf,
    },
}

enum Failure {
    Input(String),
    Solver(String),
    Verification(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Input(_) => 2,
            Failure::Solver(_) => 3,
            Failure::Verification(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Input(m) | Failure::Solver(m) | Failure::Verification(m) => m,
        }
    }
}

impl From<ProblemError> for Failure {
    fn from(e: ProblemError) -> Self {
        Failure::Input(e.to_string())
    }
}

impl From<UniformError> for Failure {
    fn from(e: UniformError) -> Self {
        match e {
            UniformError::Problem(p) => p.into(),
            other => Failure::Solver(other.to_string()),
        }
    }
}

impl From<LpBsaError> for Failure {
    fn from(e: LpBsaError) -> Self {
        match e {
            LpBsaError::Problem(p) => p.into(),
            other => Failure::Solver(other.to_string()),
        }
    }
}

impl From<UnicityError> for Failure {
    fn from(e: UnicityError) -> Self {
        match e {
            UnicityError::Problem(p) => p.into(),
            other => Failure::Solver(other.to_string()),
        }
    }
}

type Result<T> = std::result::Result<T, Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Solve { problem, norm, out, csv } => cmd_solve(&problem, norm, out.as_deref(), csv.as_deref()),
        Command::Verify {
            problem,
            solution,
            tol,
            trials,
            seed,
        } => cmd_verify(&problem, &solution, tol, trials, seed),
        Command::Gamma {
            problem,
            solution,
            trials,
            seed,
            out,
        } => cmd_gamma(&problem, solution.as_deref(), trials, seed, out.as_deref()),
        Command::Hull {
            problem,
            hull_resolution,
            out,
        } => cmd_hull(&problem, hull_resolution, out.as_deref()),
        Command::Report { problem, solution, csv } => cmd_report(&problem, &solution, &csv),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Failure::Input(format!("cannot write {}: {e}", path.display())))
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = to_json_string(value).map_err(|e| Failure::Input(e.to_string()))?;
    write_text(path, &text)
}

fn load_solution(path: &Path) -> Result<SolutionFile> {
    let text = fs::read_to_string(path).map_err(|e| Failure::Input(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| {
        Failure::Input(format!(
            "{}: parse error at line {}, column {}: {e}",
            path.display(),
            e.line(),
            e.column()
        ))
    })
}

fn cmd_solve(problem_path: &Path, norm: Norm, out: Option<&Path>, csv: Option<&Path>) -> Result<()> {
    let problem = load_problem(problem_path)?;
    let file = match norm {
        Norm::Uniform => SolutionFile::from_uniform(&solve_uniform_bsa(&problem)?),
        Norm::Lp => {
            if problem.measure.is_none() {
                return Err(Failure::Input("--norm lp needs a problem with a measure".into()));
            }
            SolutionFile::from_lp(&problem, &solve_lp_bsa(&problem)?)
        }
    };
    println!("value {:.6}, k={}", file.value, file.k);
    if let Some(path) = out {
        write_json(path, &file)?;
    }
    if let Some(path) = csv {
        write_csv(&problem, &file, path)?;
    }
    Ok(())
}

fn coefficients_of(problem: &SampledProblem, file: &SolutionFile) -> Result<Coefficients> {
    let c = Coefficients(file.coefficients.clone());
    problem.check_coefficients(&c)?;
    Ok(c)
}

fn cmd_verify(problem_path: &Path, solution_path: &Path, tol: Option<f64>, trials: usize, seed: u64) -> Result<()> {
    let problem = load_problem(problem_path)?;
    let file = load_solution(solution_path)?;
    let c = coefficients_of(&problem, &file)?;
    let (mut report, objective) = match (&file.norm, &file.certificate) {
        (NormKind::Uniform, CertificateFile::Uniform(cert)) => {
            let tol = tol.map_or_else(UniformTolerance::default, UniformTolerance::both);
            (verify_uniform_certificate(&problem, &c, cert, tol)?, Objective::Uniform)
        }
        (NormKind::Lp, CertificateFile::Lp(cert)) => {
            let cert = cert.resolve(&problem)?;
            (verify_lp_certificate(&problem, &c, &cert, tol.unwrap_or(1e-6))?, Objective::Lp)
        }
        _ => return Err(Failure::Input("certificate does not match the solution's norm".into())),
    };
    if trials > 0 {
        let radius = 0.05 * (1.0 + c.0.iter().fold(0.0_f64, |m, v| m.max(v.abs())));
        let def = verify_bsa_by_definition(&problem, &c, objective, trials, radius, seed)?;
        report.checks.extend(def.checks);
    }
    print!("{report}");
    finish(report)
}

fn finish(report: Report) -> Result<()> {
    if report.passed() {
        println!("all conditions pass");
        Ok(())
    } else {
        let names: Vec<&str> = report.failures().map(|c| c.name.as_str()).collect();
        Err(Failure::Verification(format!("failed: {}", names.join("; "))))
    }
}

fn cmd_gamma(
    problem_path: &Path,
    solution: Option<&Path>,
    trials: usize,
    seed: u64,
    out: Option<&Path>,
) -> Result<()> {
    let problem = load_problem(problem_path)?;
    let (c, cert) = match solution {
        Some(path) => {
            let file = load_solution(path)?;
            let c = coefficients_of(&problem, &file)?;
            match file.certificate {
                CertificateFile::Uniform(cert) => (c, cert),
                CertificateFile::Lp(_) => {
                    return Err(Failure::Input("strong unicity needs a uniform-norm solution".into()))
                }
            }
        }
        None => {
            let sol = solve_uniform_bsa(&problem)?;
            (sol.coefficients, sol.certificate)
        }
    };
    let data = strong_unicity_gamma(&problem, &cert, &problem.domain)?;
    let (report, summary) = check_strong_unicity(&problem, &c, &data, trials, seed)?;
    println!("gamma {:.6}, min ratio {:.6} over {trials} trials", summary.gamma, summary.min_ratio);
    if let Some(path) = out {
        write_json(path, &summary)?;
    }
    print!("{report}");
    finish(report)
}

fn cmd_hull(problem_path: &Path, resolution: usize, out: Option<&Path>) -> Result<()> {
    let problem = load_problem(problem_path)?;
    let hull = problem.hull(resolution)?;
    println!("hull: {} members from {} vertices", hull.params.len(), problem.params.len());
    if let Some(path) = out {
        write_json(path, &hull.to_file())?;
    }
    Ok(())
}

fn cmd_report(problem_path: &Path, solution_path: &Path, csv: &Path) -> Result<()> {
    let problem = load_problem(problem_path)?;
    let file = load_solution(solution_path)?;
    coefficients_of(&problem, &file)?;
    write_csv(&problem, &file, csv)
}

/// One row per `(param, point)` for uniform solutions and one row per
/// parameter (empty point) for `L^p` solutions.
fn write_csv(problem: &SampledProblem, file: &SolutionFile, path: &Path) -> Result<()> {
    let io_err = |e: csv::Error| Failure::Input(format!("cannot write {}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(io_err)?;
    w.write_record(["param", "point", "residual_norm", "is_support"]).map_err(io_err)?;
    let c = &file.coefficients;
    match &file.certificate {
        CertificateFile::Uniform(cert) => {
            for a in 0..problem.params.len() {
                for x in 0..problem.domain.len() {
                    let (pa, px) = (problem.params.label(a), problem.domain.label(x));
                    let support = cert.pairs.iter().any(|p| p.param == pa && p.point == px);
                    let r = problem.residual_norm_at(c, a, x);
                    w.write_record([pa, px, &format!("{r:.16e}"), if support { "1" } else { "0" }])
                        .map_err(io_err)?;
                }
            }
        }
        CertificateFile::Lp(cert) => {
            if problem.measure.is_none() {
                return Err(Failure::Input("L^p solution needs a problem with a measure".into()));
            }
            for (a, r) in lp_deviations(problem, c).iter().enumerate() {
                let pa = problem.params.label(a);
                let support = cert.params.iter().any(|p| p == pa);
                w.write_record([pa, "", &format!("{r:.16e}"), if support { "1" } else { "0" }])
                    .map_err(io_err)?;
            }
        }
    }
    w.flush().map_err(|e| Failure::Input(e.to_string()))
}
