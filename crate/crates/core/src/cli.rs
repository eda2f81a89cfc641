//! Command-line front end: problem files in, certificates and reports out.
//!
//! Exit codes: 0 success, 2 invalid input, 3 solver non-convergence,
//! 4 verification failure.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};

use crate::corpus::random_positive;
use crate::error::Error;
use crate::functionals::{ProblemSpec, SolveMode};
use crate::graph::{VertexFunction, WeightedGraph};
use crate::operators::LaplacianVariant;
use crate::solver::{solve_yamabe, SolveOptions};
use crate::verification::{certify, gradient_check, oracle_solve_small, CheckStatus, VerificationReport};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_NO_CONVERGENCE: i32 = 3;
pub const EXIT_VERIFY_FAILED: i32 = 4;

/// Relative agreement required when re-verification recomputes the
/// certificate's residual.
const REPRODUCE_RTOL: f64 = 1e-12;
const GRADCHECK_THRESHOLD: f64 = 1e-6;

#[derive(Parser, Debug)]
#[command(name = "yamabe", version, about = "Positive solutions of p-th Yamabe-type equations on weighted graphs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve a problem and write a certificate.
    Solve {
        problem: PathBuf,
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
        #[arg(long, default_value_t = 200_000)]
        max_iter: usize,
        #[arg(long, default_value_t = 4)]
        restarts: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Certificate path; the certificate goes to stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-check a certificate against its problem.
    Verify {
        problem: PathBuf,
        #[arg(long)]
        solution: PathBuf,
        /// Residual tolerance; defaults to the one recorded in the certificate.
        #[arg(long)]
        tol: Option<f64>,
    },
    /// Finite-difference check of the derivatives at a seeded positive point.
    Gradcheck {
        problem: PathBuf,
        #[arg(long, default_value_t = 1e-6)]
        step: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Enumerate solutions of a tiny instance by multi-start Newton.
    Oracle { problem: PathBuf },
}

#[derive(Deserialize, Debug)]
#[serde(deny_unknown_fields)]
struct ProblemFile {
    graph: GraphSection,
    exponents: Exponents,
    mode: SolveMode,
    #[serde(default)]
    variant: LaplacianVariant,
    #[serde(default)]
    lambda: Option<f64>,
}

#[derive(Deserialize, Debug)]
#[serde(deny_unknown_fields)]
struct GraphSection {
    vertices: Vec<VertexRecord>,
    #[serde(default)]
    edges: Vec<EdgeRecord>,
}

#[derive(Deserialize, Debug)]
#[serde(deny_unknown_fields)]
struct VertexRecord {
    id: String,
    mu: f64,
    h: f64,
    f: f64,
}

#[derive(Deserialize, Debug)]
#[serde(deny_unknown_fields)]
struct EdgeRecord {
    a: String,
    b: String,
    w: f64,
}

#[derive(Deserialize, Debug)]
#[serde(deny_unknown_fields)]
struct Exponents {
    p: f64,
    #[serde(default)]
    q: Option<f64>,
    alpha: f64,
}

/// A parsed, validated problem file.
pub struct Problem {
    pub graph: WeightedGraph,
    pub spec: ProblemSpec,
    /// λ in `mu_form`, λ̃ in `rescale`, 0 in `normalized`.
    pub lambda: f64,
    pub digest: String,
}

/// A real number emitted with 17 significant digits; NaN and infinities
/// are written as `null`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Real(pub f64);

impl Serialize for Real {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        if self.0.is_finite() {
            let n: serde_json::Number =
                format!("{:.16e}", self.0).parse().map_err(serde::ser::Error::custom)?;
            n.serialize(s)
        } else {
            s.serialize_none()
        }
    }
}

impl<'de> Deserialize<'de> for Real {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        // Parse the literal with the standard library so that the value is
        // correctly rounded.
        match Option::<serde_json::Number>::deserialize(d)? {
            None => Ok(Real(f64::NAN)),
            Some(n) => n.to_string().parse().map(Real).map_err(serde::de::Error::custom),
        }
    }
}

#[derive(Serialize, Deserialize, Debug, Clone, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct CheckRecord {
    pub name: String,
    pub status: CheckStatus,
    pub measured: Real,
    pub bound: Real,
    pub slack: Real,
}

#[derive(Serialize, Deserialize, Debug, Clone, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct Certificate {
    pub tool_version: String,
    pub input_digest: String,
    pub mode: SolveMode,
    pub variant: LaplacianVariant,
    pub tol: Real,
    pub solution: BTreeMap<String, Real>,
    pub lambda: Real,
    pub mu: Real,
    pub energy: Real,
    pub residual_max: Real,
    pub iterations: usize,
    pub restarts_used: usize,
    pub checks: Vec<CheckRecord>,
}

enum Failure {
    Invalid(String),
    NoConvergence(String),
    Verify(String),
}

impl Failure {
    fn code(&self) -> i32 {
        match self {
            Self::Invalid(_) => EXIT_INVALID,
            Self::NoConvergence(_) => EXIT_NO_CONVERGENCE,
            Self::Verify(_) => EXIT_VERIFY_FAILED,
        }
    }

    fn message(&self) -> &str {
        match self {
            Self::Invalid(m) | Self::NoConvergence(m) | Self::Verify(m) => m,
        }
    }
}

fn invalid(e: impl std::fmt::Display) -> Failure {
    Failure::Invalid(e.to_string())
}

fn solver_failure(e: Error) -> Failure {
    match e {
        Error::NoConvergence { .. } => Failure::NoConvergence(e.to_string()),
        e => invalid(e),
    }
}

/// Runs the command line `args` (including the program name) and returns
/// the process exit code.
pub fn run<I: IntoIterator<Item = OsString>>(args: I) -> i32 {
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INVALID } else { EXIT_OK };
        }
    };
    let outcome = match cli.command {
        Command::Solve { problem, tol, max_iter, restarts, seed, out } => {
            let opts = SolveOptions { tol, max_iter, restarts, seed, ..SolveOptions::default() };
            cmd_solve(&problem, &opts, out.as_deref())
        }
        Command::Verify { problem, solution, tol } => cmd_verify(&problem, &solution, tol),
        Command::Gradcheck { problem, step, seed } => cmd_gradcheck(&problem, step, seed),
        Command::Oracle { problem } => cmd_oracle(&problem),
    };
    match outcome {
        Ok(()) => EXIT_OK,
        Err(f) => {
            eprintln!("error: {}", f.message());
            f.code()
        }
    }
}

/// SHA-256 of the problem file re-serialized with sorted keys and no
/// insignificant whitespace.
pub fn canonical_digest(text: &str) -> Result<String, serde_json::Error> {
    let value: serde_json::Value = serde_json::from_str(text)?;
    let canonical = serde_json::to_vec(&value)?;
    Ok(hex::encode(Sha256::digest(&canonical)))
}

/// Parses and validates a problem file's contents.
pub fn parse_problem(text: &str) -> crate::Result<Problem> {
    let file: ProblemFile = serde_json::from_str(text)
        .map_err(|e| Error::InvalidProblem(format!("problem file: {e}")))?;
    let digest = canonical_digest(text).map_err(|e| Error::InvalidProblem(e.to_string()))?;
    let verts: Vec<(&str, f64)> = file.graph.vertices.iter().map(|v| (v.id.as_str(), v.mu)).collect();
    let edges: Vec<(&str, &str, f64)> =
        file.graph.edges.iter().map(|e| (e.a.as_str(), e.b.as_str(), e.w)).collect();
    let graph = WeightedGraph::build(&verts, &edges)?;
    let h: Vec<(&str, f64)> = file.graph.vertices.iter().map(|v| (v.id.as_str(), v.h)).collect();
    let f: Vec<(&str, f64)> = file.graph.vertices.iter().map(|v| (v.id.as_str(), v.f)).collect();
    let h = VertexFunction::from_pairs(&graph, &h)?;
    let f = VertexFunction::from_pairs(&graph, &f)?;
    let Exponents { p, q, alpha } = file.exponents;
    let q = match (file.mode, q) {
        (_, Some(q)) => q,
        (SolveMode::Normalized, None) => p,
        (mode, None) => {
            return Err(Error::InvalidProblem(format!("exponents.q is required in mode {mode}")))
        }
    };
    let spec = ProblemSpec::new(&graph, p, q, alpha, h, f, file.variant, file.mode)?;
    let lambda = match (file.mode, file.lambda) {
        (SolveMode::Normalized, _) => 0.0,
        (_, Some(l)) if l.is_finite() => l,
        (mode, _) => {
            return Err(Error::InvalidProblem(format!("a finite lambda is required in mode {mode}")))
        }
    };
    Ok(Problem { graph, spec, lambda, digest })
}

fn load_problem(path: &Path) -> Result<Problem, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| invalid(format!("cannot read {}: {e}", path.display())))?;
    parse_problem(&text).map_err(|e| invalid(format!("{}: {e}", path.display())))
}

/// Same text as the number's certificate encoding.
fn fmt_real(x: f64) -> String {
    serde_json::to_string(&Real(x)).expect("real serializes")
}

fn check_records(report: &VerificationReport) -> Vec<CheckRecord> {
    report
        .checks
        .iter()
        .map(|c| CheckRecord {
            name: c.name.clone(),
            status: c.status,
            measured: Real(c.measured),
            bound: Real(c.bound),
            slack: Real(c.slack),
        })
        .collect()
}

/// Serializes a certificate as pretty JSON with a trailing newline.
pub fn certificate_json(cert: &Certificate) -> String {
    let mut s = serde_json::to_string_pretty(cert).expect("certificate serializes");
    s.push('\n');
    s
}

fn cmd_solve(path: &Path, opts: &SolveOptions, out: Option<&Path>) -> Result<(), Failure> {
    let prob = load_problem(path)?;
    let (g, spec) = (&prob.graph, &prob.spec);
    let res = solve_yamabe(g, spec, prob.lambda, opts).map_err(solver_failure)?;
    let report = certify(g, spec, &res.u, res.lambda, res.mu, prob.lambda, opts.tol)
        .map_err(|e| Failure::Verify(e.to_string()))?;
    let cert = Certificate {
        tool_version: env!("CARGO_PKG_VERSION").into(),
        input_digest: prob.digest.clone(),
        mode: res.mode,
        variant: spec.variant(),
        tol: Real(opts.tol),
        solution: g.ids().iter().cloned().zip(res.u.as_slice().iter().map(|x| Real(*x))).collect(),
        lambda: Real(res.lambda),
        mu: Real(res.mu),
        energy: Real(res.energy),
        residual_max: Real(report.residual_max),
        iterations: res.iterations,
        restarts_used: res.restarts_used,
        checks: check_records(&report),
    };
    let json = certificate_json(&cert);
    let passed = report.passed();
    let summary = format!(
        "solve {} mode={} lambda={} mu={} energy={} residual_max={} iterations={} restarts_used={}",
        if passed { "ok" } else { "failed-checks" },
        res.mode,
        fmt_real(res.lambda),
        fmt_real(res.mu),
        fmt_real(res.energy),
        fmt_real(report.residual_max),
        res.iterations,
        res.restarts_used,
    );
    match out {
        Some(out) => {
            std::fs::write(out, &json)
                .map_err(|e| invalid(format!("cannot write {}: {e}", out.display())))?;
            println!("{summary}");
        }
        None => {
            print!("{json}");
            eprintln!("{summary}");
        }
    }
    if passed {
        Ok(())
    } else {
        let failed: Vec<&str> = report
            .checks
            .iter()
            .filter(|c| c.status == CheckStatus::Fail)
            .map(|c| c.name.as_str())
            .collect();
        Err(Failure::Verify(format!("failed checks: {}", failed.join(", "))))
    }
}

fn status_str(s: CheckStatus) -> &'static str {
    match s {
        CheckStatus::Pass => "pass",
        CheckStatus::Fail => "fail",
        CheckStatus::NotApplicable => "not_applicable",
    }
}

fn cmd_verify(path: &Path, solution: &Path, tol: Option<f64>) -> Result<(), Failure> {
    let prob = load_problem(path)?;
    let text = std::fs::read_to_string(solution)
        .map_err(|e| invalid(format!("cannot read {}: {e}", solution.display())))?;
    let cert: Certificate = serde_json::from_str(&text)
        .map_err(|e| invalid(format!("{}: certificate: {e}", solution.display())))?;
    let (g, spec) = (&prob.graph, &prob.spec);
    let mut problems = Vec::new();
    if cert.input_digest != prob.digest {
        problems.push("input_digest does not match the problem file".to_string());
    }
    if cert.mode != spec.mode() {
        problems.push(format!("mode {} does not match the problem's {}", cert.mode, spec.mode()));
    }
    if cert.variant != spec.variant() {
        problems.push(format!("variant {} does not match the problem's {}", cert.variant, spec.variant()));
    }
    let ids = g.ids();
    if cert.solution.len() != ids.len() || ids.iter().any(|id| !cert.solution.contains_key(id)) {
        return Err(invalid("certificate solution must assign exactly the problem's vertices"));
    }
    let values: Vec<f64> = ids.iter().map(|id| cert.solution[id].0).collect();
    let u = VertexFunction::new(values).map_err(invalid)?;
    let tol = tol.unwrap_or(cert.tol.0);
    if !(tol > 0.0 && tol.is_finite()) {
        return Err(invalid(format!("tolerance must be positive and finite, got {tol}")));
    }
    let report = certify(g, spec, &u, cert.lambda.0, cert.mu.0, prob.lambda, tol)
        .map_err(|e| Failure::Verify(e.to_string()))?;

    let mut out = String::new();
    for c in &report.checks {
        let recorded = cert.checks.iter().find(|r| r.name == c.name).map(|r| r.status);
        let _ = writeln!(
            out,
            "{:<28} {:<14} measured={} bound={} slack={}",
            c.name,
            status_str(c.status),
            fmt_real(c.measured),
            fmt_real(c.bound),
            fmt_real(c.slack)
        );
        match recorded {
            None => problems.push(format!("check {} missing from certificate", c.name)),
            Some(s) if s != c.status => problems.push(format!(
                "check {} recorded as {} but recomputed as {}",
                c.name,
                status_str(s),
                status_str(c.status)
            )),
            Some(_) => {}
        }
    }
    for r in &cert.checks {
        if report.check(&r.name).is_none() {
            problems.push(format!("unknown check {} in certificate", r.name));
        }
    }
    let recorded = cert.residual_max.0;
    let gap = (report.residual_max - recorded).abs();
    if !(gap <= REPRODUCE_RTOL * recorded.abs().max(1.0)) {
        problems.push(format!(
            "residual_max recomputed as {} but recorded as {}",
            fmt_real(report.residual_max),
            fmt_real(recorded)
        ));
    }
    for c in report.checks.iter().filter(|c| c.status == CheckStatus::Fail) {
        problems.push(format!("check {} failed", c.name));
    }
    let _ = writeln!(out, "residual_max={}", fmt_real(report.residual_max));
    if problems.is_empty() {
        let _ = writeln!(out, "verify ok");
        print!("{out}");
        Ok(())
    } else {
        for p in &problems {
            let _ = writeln!(out, "problem: {p}");
        }
        let _ = writeln!(out, "verify failed");
        print!("{out}");
        Err(Failure::Verify(format!("verification failed with {} problem(s)", problems.len())))
    }
}

fn cmd_gradcheck(path: &Path, step: f64, seed: u64) -> Result<(), Failure> {
    let prob = load_problem(path)?;
    let g = &prob.graph;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let u = random_positive(&mut rng, g, 0.5, 1.5);
    // Normalized problems carry no λ; the check then runs at λ = 1.
    let lambda = if prob.spec.mode() == SolveMode::Normalized { 1.0 } else { prob.lambda };
    let report = gradient_check(g, &prob.spec, &u, lambda, step, seed);
    if let Some(e) = &report.error {
        return Err(invalid(e));
    }
    let passed = report.passed(GRADCHECK_THRESHOLD);
    println!(
        "gradcheck {} directions={} max_rel_de={} max_rel_dg={} threshold={}",
        if passed { "ok" } else { "failed" },
        report.directions,
        fmt_real(report.max_rel_de),
        fmt_real(report.max_rel_dg),
        fmt_real(GRADCHECK_THRESHOLD)
    );
    if passed {
        Ok(())
    } else {
        Err(Failure::Verify(format!(
            "derivative discrepancy {} exceeds {}",
            fmt_real(report.max_discrepancy()),
            fmt_real(GRADCHECK_THRESHOLD)
        )))
    }
}

#[derive(Serialize)]
struct OracleRecord {
    u: BTreeMap<String, Real>,
    multiplier: Real,
}

fn cmd_oracle(path: &Path) -> Result<(), Failure> {
    let prob = load_problem(path)?;
    let g = &prob.graph;
    let sols = oracle_solve_small(g, &prob.spec, prob.lambda).map_err(invalid)?;
    let multiplier = if prob.spec.mode() == SolveMode::Normalized { "lambda" } else { "mu" };
    println!("oracle solutions={} multiplier={multiplier}", sols.len());
    for s in &sols {
        let rec = OracleRecord {
            u: g.ids().iter().cloned().zip(s.u.as_slice().iter().map(|x| Real(*x))).collect(),
            multiplier: Real(s.multiplier),
        };
        println!("{}", serde_json::to_string(&rec).expect("record serializes"));
    }
    Ok(())
}
