//! Independent certification of solutions: pointwise residuals, the norm
//! and energy bounds that hold on the constraint set, finite-difference
//! derivative checks, and a multi-start Newton oracle for tiny graphs.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::functionals::{
    check_nonneg, constraint_slice, energy_slice, f_moment, frechet_derivatives, h_moment,
    normalized_objective_slice, residual_into, residual_scale, retract_factor, ConstraintKind, ProblemSpec, SolveMode,
};
use crate::graph::{VertexFunction, WeightedGraph};
use crate::operators::{dirichlet_energy_slice, lp_norm, sobolev_norm};
use crate::solver::energy_lower_bound;

/// Relative slack granted to the bound checks for rounding.
pub const BOUND_RTOL: f64 = 1e-12;
/// A point counts as lying on M when `|G(u)|` is at most this.
pub const CONSTRAINT_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckStatus {
    Pass,
    Fail,
    NotApplicable,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundKind {
    Upper,
    Lower,
}

/// One named inequality: `slack = bound − measured` for upper bounds and
/// `measured − bound` for lower bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub status: CheckStatus,
    pub measured: f64,
    pub bound: f64,
    pub slack: f64,
}

impl Check {
    pub fn evaluate(name: &str, kind: BoundKind, measured: f64, bound: f64, rtol: f64) -> Self {
        let slack = match kind {
            BoundKind::Upper => bound - measured,
            BoundKind::Lower => measured - bound,
        };
        let ok = slack >= -rtol * bound.abs().max(1.0);
        Self {
            name: name.to_string(),
            status: if ok { CheckStatus::Pass } else { CheckStatus::Fail },
            measured,
            bound,
            slack,
        }
    }

    pub fn not_applicable(name: &str) -> Self {
        Self {
            name: name.to_string(),
            status: CheckStatus::NotApplicable,
            measured: f64::NAN,
            bound: f64::NAN,
            slack: f64::NAN,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerificationReport {
    pub checks: Vec<Check>,
    pub residual: VertexFunction,
    pub residual_max: f64,
}

impl VerificationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.status != CheckStatus::Fail)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

pub mod names {
    pub const LQ_POWER: &str = "lq_norm_q_power_bound";
    pub const LQ_ALPHA: &str = "lq_norm_alpha_power_bound";
    pub const F_MOMENT_NONNEG: &str = "f_moment_nonnegative";
    pub const F_MOMENT_HOLDER: &str = "f_moment_holder_bound";
    pub const ENERGY_LOWER: &str = "energy_lower_bound";
    pub const SOBOLEV: &str = "sobolev_norm_power_bound";
    pub const RESIDUAL: &str = "euler_lagrange_residual";
    pub const POSITIVITY: &str = "strict_positivity";
    pub const CONSTRAINT: &str = "constraint_membership";
    pub const RESCALE: &str = "rescaled_lambda_consistency";
}

/// Pointwise `r_i = −(Δ_p u)_i − λ f_i u_i^{α−1} + μ h_i u_i^{q−1}` and its
/// sup norm. Pass `mu = 1` to test the final equation.
pub fn residual(
    g: &WeightedGraph,
    prob: &ProblemSpec,
    u: &VertexFunction,
    lambda: f64,
    mu: f64,
) -> Result<(VertexFunction, f64)> {
    g.check_domain(u)?;
    check_nonneg(u.as_slice())?;
    let mut r = vec![0.0; g.len()];
    residual_into(g, prob, u.as_slice(), lambda, mu, prob.q() - 1.0, &mut r);
    let r = VertexFunction::from_vec_unchecked(r);
    let max = r.sup_norm();
    Ok((r, max))
}

/// Evaluates the norm, moment and energy bounds at `u`.
///
/// The bounds that presuppose membership in M are reported as not
/// applicable when h vanishes somewhere, when `u` is off M, or in
/// normalized mode. The residual in the report uses μ from the multiplier
/// formula (or λ's normalized-mode counterpart with μ = 1).
pub fn check_bounds(
    g: &WeightedGraph,
    prob: &ProblemSpec,
    u: &VertexFunction,
    lambda: f64,
    energy: f64,
) -> Result<VerificationReport> {
    g.check_domain(u)?;
    check_nonneg(u.as_slice())?;
    let us = u.as_slice();
    let (p, q, alpha) = (prob.p(), prob.q(), prob.alpha());
    let neg_h = prob.neg_h_min();
    let on_m = constraint_slice(g, prob, us).abs() <= CONSTRAINT_TOL;
    let m_checks = neg_h > 0.0 && on_m && prob.mode() != SolveMode::Normalized;
    let vol = g.volume();
    let f_max = prob.f_max();
    let nq = lp_norm(g, u, q)?;

    let mut checks = Vec::with_capacity(6);
    if m_checks {
        let cap = q / neg_h;
        checks.push(Check::evaluate(names::LQ_POWER, BoundKind::Upper, nq.powf(q), cap, BOUND_RTOL));
        checks.push(Check::evaluate(
            names::LQ_ALPHA,
            BoundKind::Upper,
            nq.powf(alpha),
            cap.powf(alpha / q),
            BOUND_RTOL,
        ));
    } else {
        checks.push(Check::not_applicable(names::LQ_POWER));
        checks.push(Check::not_applicable(names::LQ_ALPHA));
    }

    let fm = f_moment(g, prob, us, alpha);
    checks.push(Check::evaluate(names::F_MOMENT_NONNEG, BoundKind::Lower, fm, 0.0, BOUND_RTOL));
    let holder = f_max * vol.powf(1.0 - alpha / q) * nq.powf(alpha);
    checks.push(Check::evaluate(names::F_MOMENT_HOLDER, BoundKind::Upper, fm, holder, BOUND_RTOL));

    match energy_lower_bound(g, prob, lambda).filter(|_| m_checks) {
        Some(floor) => {
            checks.push(Check::evaluate(names::ENERGY_LOWER, BoundKind::Lower, energy, floor, BOUND_RTOL));
            let cap = q / neg_h;
            let bound = p * (1.0 + energy)
                + p * lambda.abs() * f_max / alpha * cap.powf(alpha / q) * vol.powf(1.0 - alpha / q)
                + cap.powf(p / q) * vol.powf(1.0 - p / q);
            let measured = sobolev_norm(g, u, p, prob.variant())?.powf(p);
            checks.push(Check::evaluate(names::SOBOLEV, BoundKind::Upper, measured, bound, BOUND_RTOL));
        }
        None => {
            checks.push(Check::not_applicable(names::ENERGY_LOWER));
            checks.push(Check::not_applicable(names::SOBOLEV));
        }
    }

    let mut r = vec![0.0; g.len()];
    if prob.mode() == SolveMode::Normalized {
        residual_into(g, prob, us, lambda, 1.0, q - 1.0, &mut r);
    } else {
        let d = dirichlet_energy_slice(g, us, p, prob.variant());
        let mu = (d - lambda * fm) / q;
        residual_into(g, prob, us, lambda, mu, q - 1.0, &mut r);
    }
    let residual = VertexFunction::from_vec_unchecked(r);
    let residual_max = residual.sup_norm();
    Ok(VerificationReport { checks, residual, residual_max })
}

/// Full certificate checks for a solution of the final equation.
///
/// `u`, `lambda` and `mu` are as reported by the solver; `lambda_input` is
/// the λ̃ a rescale-mode problem was posed with. The bound checks are
/// evaluated at the constrained point (û = μ^{−1/(q−p)} u in rescale mode),
/// the residual check on the final equation against
/// `tol · max(1, sup |λ f u^{α−1}|)`. The report's residual is that of the
/// final equation.
pub fn certify(
    g: &WeightedGraph,
    prob: &ProblemSpec,
    u: &VertexFunction,
    lambda: f64,
    mu: f64,
    lambda_input: f64,
    tol: f64,
) -> Result<VerificationReport> {
    g.check_domain(u)?;
    check_nonneg(u.as_slice())?;
    let (p, q, alpha) = (prob.p(), prob.q(), prob.alpha());
    let (inner, inner_lambda, final_mu) = match prob.mode() {
        SolveMode::MuForm => (u.clone(), lambda, mu),
        SolveMode::Rescale => {
            if !(mu > 0.0) {
                return Err(Error::NonPositiveMultiplier(mu));
            }
            (u.scaled(mu.powf(-1.0 / (q - p))), lambda_input, 1.0)
        }
        SolveMode::Normalized => (u.clone(), lambda, 1.0),
    };
    let us = inner.as_slice();
    let energy = match prob.mode() {
        SolveMode::Normalized => normalized_objective_slice(g, prob, us),
        _ => energy_slice(g, prob, us, inner_lambda),
    };
    let mut report = check_bounds(g, prob, &inner, inner_lambda, energy)?;

    let (residual, residual_max) = self::residual(g, prob, u, lambda, final_mu)?;
    let scale = residual_scale(prob, u.as_slice(), lambda);
    report
        .checks
        .push(Check::evaluate(names::RESIDUAL, BoundKind::Upper, residual_max, tol * scale, 0.0));

    let min = u.min();
    let mut pos = Check::evaluate(names::POSITIVITY, BoundKind::Lower, min, 0.0, 0.0);
    if !(min > 0.0) {
        pos.status = CheckStatus::Fail;
    }
    report.checks.push(pos);

    let gap = match prob.mode() {
        SolveMode::Normalized => f_moment(g, prob, us, alpha) / alpha - 1.0,
        _ => constraint_slice(g, prob, us),
    };
    report
        .checks
        .push(Check::evaluate(names::CONSTRAINT, BoundKind::Upper, gap.abs(), CONSTRAINT_TOL, 0.0));

    report.checks.push(if prob.mode() == SolveMode::Rescale {
        let expected = mu.powf((p - alpha) / (q - p)) * lambda_input;
        let rel = (lambda - expected).abs() / expected.abs().max(1.0);
        Check::evaluate(names::RESCALE, BoundKind::Upper, rel, 1e-12, 0.0)
    } else {
        Check::not_applicable(names::RESCALE)
    });

    report.residual = residual;
    report.residual_max = residual_max;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientReport {
    pub directions: usize,
    pub max_rel_de: f64,
    pub max_rel_dg: f64,
    /// Set when the preconditions fail; no directions are evaluated then.
    pub error: Option<String>,
}

impl GradientReport {
    pub fn max_discrepancy(&self) -> f64 {
        self.max_rel_de.max(self.max_rel_dg)
    }

    pub fn passed(&self, threshold: f64) -> bool {
        self.error.is_none() && self.max_discrepancy() <= threshold
    }
}

/// Compares `∫ DE·v dμ` and `∫ DG·v dμ` with centered differences of E and
/// G along every basis direction and 8 seeded random directions.
/// Discrepancies are relative to `max(1, |analytic|)`.
pub fn gradient_check(
    g: &WeightedGraph,
    prob: &ProblemSpec,
    u: &VertexFunction,
    lambda: f64,
    step: f64,
    seed: u64,
) -> GradientReport {
    let fail = |msg: String| GradientReport {
        directions: 0,
        max_rel_de: f64::NAN,
        max_rel_dg: f64::NAN,
        error: Some(msg),
    };
    if let Err(e) = g.check_domain(u) {
        return fail(e.to_string());
    }
    let min = u.min();
    if !(min > 0.0) {
        return fail(format!("u must be strictly positive, min is {min}"));
    }
    if !(step > 0.0 && step < min) {
        return fail(format!("step must lie in (0, min u) = (0, {min}), got {step}"));
    }
    let (de, dg) = match frechet_derivatives(g, prob, u, lambda) {
        Ok(d) => d,
        Err(e) => return fail(e.to_string()),
    };
    let n = g.len();
    let mut dirs: Vec<Vec<f64>> = (0..n)
        .map(|k| (0..n).map(|i| if i == k { 1.0 } else { 0.0 }).collect())
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..8 {
        dirs.push((0..n).map(|_| rng.random_range(-1.0..=1.0)).collect());
    }
    let us = u.as_slice();
    let (mut max_de, mut max_dg) = (0.0f64, 0.0f64);
    for v in &dirs {
        let plus: Vec<f64> = us.iter().zip(v).map(|(a, b)| a + step * b).collect();
        let minus: Vec<f64> = us.iter().zip(v).map(|(a, b)| a - step * b).collect();
        let fd_e = (energy_slice(g, prob, &plus, lambda) - energy_slice(g, prob, &minus, lambda))
            / (2.0 * step);
        let fd_g = (constraint_slice(g, prob, &plus) - constraint_slice(g, prob, &minus)) / (2.0 * step);
        let an_e = g.integrate_map(de.as_slice(), |i, x| x * v[i]);
        let an_g = g.integrate_map(dg.as_slice(), |i, x| x * v[i]);
        max_de = max_de.max((an_e - fd_e).abs() / an_e.abs().max(1.0));
        max_dg = max_dg.max((an_g - fd_g).abs() / an_g.abs().max(1.0));
    }
    GradientReport { directions: dirs.len(), max_rel_de: max_de, max_rel_dg: max_dg, error: None }
}

/// A stationary point found by the oracle. `multiplier` is μ for problems
/// posed on M and λ for normalized-mode problems.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleSolution {
    pub u: VertexFunction,
    pub multiplier: f64,
}

pub const ORACLE_MAX_VERTICES: usize = 4;
const ORACLE_STARTS: usize = 1000;
const ORACLE_TOL: f64 = 1e-12;
const ORACLE_DEDUP: f64 = 1e-8;
const ORACLE_MAX_NEWTON: usize = 100;

/// Finds positive solutions of the stationarity system by damped Newton
/// iteration from 1000 seeded starts, with `u = exp(w)` so that iterates
/// stay positive. For problems posed on M the unknowns are `(w, μ)` and the
/// equations `DE(u) + μ DG(u) = 0`, `G(u) = 0`; in normalized mode they are
/// `(w, λ)` with `−Δ_p u + h u^{p−1} − λ f u^{α−1} = 0`,
/// `(1/α) ∫ f u^α dμ = 1`. Distinct solutions are returned in discovery
/// order.
pub fn oracle_solve_small(
    g: &WeightedGraph,
    prob: &ProblemSpec,
    lambda: f64,
) -> Result<Vec<OracleSolution>> {
    let n = g.len();
    if n > ORACLE_MAX_VERTICES {
        return Err(Error::TooLarge(n));
    }
    let normalized = prob.mode() == SolveMode::Normalized;
    let system = |x: &[f64], out: &mut [f64]| {
        let u: Vec<f64> = x[..n].iter().map(|w| w.exp()).collect();
        let m = x[n];
        if normalized {
            residual_into(g, prob, &u, m, 1.0, prob.p() - 1.0, &mut out[..n]);
            out[n] = f_moment(g, prob, &u, prob.alpha()) / prob.alpha() - 1.0;
        } else {
            residual_into(g, prob, &u, lambda, m, prob.q() - 1.0, &mut out[..n]);
            out[n] = constraint_slice(g, prob, &u);
        }
    };
    let kind = if normalized { ConstraintKind::NF } else { ConstraintKind::MH };

    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut found: Vec<OracleSolution> = Vec::new();
    for _ in 0..ORACLE_STARTS {
        let mut u: Vec<f64> = (0..n)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                z.exp()
            })
            .collect();
        let t = retract_factor(g, prob, &u, kind)?;
        u.iter_mut().for_each(|x| *x *= t);
        let d = dirichlet_energy_slice(g, &u, prob.p(), prob.variant());
        let m0 = if normalized {
            (d + h_moment(g, prob, &u, prob.p())) / prob.alpha()
        } else {
            (d - lambda * f_moment(g, prob, &u, prob.alpha())) / prob.q()
        };
        let mut x: Vec<f64> = u.iter().map(|v| v.ln()).collect();
        x.push(m0);
        let Some(x) = damped_newton(&system, x) else { continue };
        let cand = OracleSolution {
            u: VertexFunction::from_vec_unchecked(x[..n].iter().map(|w| w.exp()).collect()),
            multiplier: x[n],
        };
        let dup = found.iter().any(|s| {
            s.u.sup_distance(&cand.u).max((s.multiplier - cand.multiplier).abs()) <= ORACLE_DEDUP
        });
        if !dup {
            found.push(cand);
        }
    }
    Ok(found)
}

fn sup(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m: f64, x| m.max(x.abs()))
}

/// Newton's method with a central-difference Jacobian and step halving on
/// the residual sup norm. Returns the root when `‖F‖∞ ≤ 1e−12·max(1, ‖x‖∞)`.
fn damped_newton(system: &dyn Fn(&[f64], &mut [f64]), mut x: Vec<f64>) -> Option<Vec<f64>> {
    let m = x.len();
    let mut fx = vec![0.0; m];
    system(&x, &mut fx);
    let mut fp = vec![0.0; m];
    let mut fm = vec![0.0; m];
    let mut trial = vec![0.0; m];
    for _ in 0..ORACLE_MAX_NEWTON {
        let norm = sup(&fx);
        if !norm.is_finite() {
            return None;
        }
        if norm <= ORACLE_TOL * sup(&x).max(1.0) {
            return Some(x);
        }
        let mut jac = DMatrix::<f64>::zeros(m, m);
        for k in 0..m {
            let h = 1e-6 * x[k].abs().max(1.0);
            let saved = x[k];
            x[k] = saved + h;
            system(&x, &mut fp);
            x[k] = saved - h;
            system(&x, &mut fm);
            x[k] = saved;
            for i in 0..m {
                jac[(i, k)] = (fp[i] - fm[i]) / (2.0 * h);
            }
        }
        let rhs = DVector::from_iterator(m, fx.iter().map(|v| -v));
        let delta = jac.lu().solve(&rhs)?;
        let mut s = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            for i in 0..m {
                trial[i] = x[i] + s * delta[i];
            }
            system(&trial, &mut fp);
            let tn = sup(&fp);
            if tn.is_finite() && tn < (1.0 - 1e-4 * s) * norm {
                accepted = true;
                break;
            }
            s *= 0.5;
        }
        if !accepted {
            return None;
        }
        std::mem::swap(&mut x, &mut trial);
        std::mem::swap(&mut fx, &mut fp);
    }
    (sup(&fx) <= ORACLE_TOL * sup(&x).max(1.0)).then_some(x)
}
