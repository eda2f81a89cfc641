//! Constrained minimization and the three solve modes.
//!
//! Iterates stay on the constraint set: each step moves against the
//! gradient of `E ∘ retract`, clamps at zero, and retracts radially. On the
//! constraint set that gradient is exactly the Euler–Lagrange residual
//! `r = −Δ_p u − λ f u^{α−1} + μ h u^{q−1}` with μ from the multiplier
//! formula, so the stopping test and the descent direction share one
//! vector. The step is `r_i / D_i` with `D_i` a positive estimate of the
//! Jacobian diagonal; it stays a descent direction and copes with the stiff
//! components that appear where `u_i` is tiny. Step lengths come from
//! Armijo backtracking. Once the predicted decrease
//! falls below the rounding floor of the objective, a step is accepted if
//! the objective does not rise above that floor and the residual shrinks.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::functionals::{
    f_moment, h_moment, residual_into, residual_scale, retract_factor, ConstraintKind,
    ProblemSpec, SolveMode,
};
use crate::graph::{VertexFunction, WeightedGraph};
use crate::operators::{
    dirichlet_energy_slice, laplacian_diagonal_into, p_laplacian_into, LaplacianVariant,
};
use crate::verification;

/// `x^e` for `x > 0`, and 0 at `x = 0` (where the term is dropped).
fn pow_or_zero(x: f64, e: f64) -> f64 {
    if x > 0.0 {
        x.powf(e)
    } else {
        0.0
    }
}

const RESTART_SIGMA: f64 = 0.5;
const MAX_BACKTRACKS: usize = 200;

#[derive(Debug, Clone, PartialEq)]
pub struct SolveOptions {
    /// Target for `max_i |r_i| / max(1, sup_i |λ f_i u_i^{α−1}|)`.
    pub tol: f64,
    /// Iteration budget per start.
    pub max_iter: usize,
    /// Perturbed starts tried after the unperturbed one.
    pub restarts: usize,
    pub seed: u64,
    pub armijo_c: f64,
    pub armijo_shrink: f64,
    pub initial_step: f64,
    /// Lower clamp applied before each retraction.
    pub positivity_floor: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 200_000,
            restarts: 4,
            seed: 0,
            armijo_c: 1e-4,
            armijo_shrink: 0.5,
            initial_step: 1.0,
            positivity_floor: 0.0,
        }
    }
}

impl SolveOptions {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidOptions(what.to_string()));
        if !(self.tol.is_finite() && self.tol > 0.0) {
            return bad("tol must be positive");
        }
        if self.max_iter == 0 {
            return bad("max_iter must be positive");
        }
        if !(self.armijo_c > 0.0 && self.armijo_c < 1.0) {
            return bad("armijo_c must lie in (0, 1)");
        }
        if !(self.armijo_shrink > 0.0 && self.armijo_shrink < 1.0) {
            return bad("armijo_shrink must lie in (0, 1)");
        }
        if !(self.initial_step.is_finite() && self.initial_step > 0.0) {
            return bad("initial_step must be positive");
        }
        if !(self.positivity_floor.is_finite() && self.positivity_floor >= 0.0) {
            return bad("positivity_floor must be nonnegative");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveResult {
    /// The solution of the final equation, strictly positive.
    pub u: VertexFunction,
    /// λ of the final equation.
    pub lambda: f64,
    /// Multiplier of the constrained problem; 1 in normalized mode.
    pub mu: f64,
    /// Objective value at the solution: E on M, or J on N_f.
    pub energy: f64,
    pub iterations: usize,
    pub residual_max: f64,
    pub mode: SolveMode,
    /// Index of the start that produced `u`; 0 is the unperturbed start.
    pub restarts_used: usize,
}

/// A point on M with its multiplier, from [`minimize_energy_on_m`].
#[derive(Debug, Clone, PartialEq)]
pub struct Minimizer {
    pub u_hat: VertexFunction,
    pub mu: f64,
    pub energy: f64,
    pub iterations: usize,
    pub residual_max: f64,
    pub start_index: usize,
}

#[derive(Debug, Clone, Copy)]
pub(crate) enum Objective {
    /// E with fixed λ on M; the multiplier is μ.
    Energy { lambda: f64 },
    /// J on N_f; the multiplier is λ.
    Normalized,
}

impl Objective {
    fn kind(self) -> ConstraintKind {
        match self {
            Self::Energy { .. } => ConstraintKind::MH,
            Self::Normalized => ConstraintKind::NF,
        }
    }
}

/// One evaluated point on the constraint set.
#[derive(Debug, Clone)]
pub(crate) struct Iterate {
    pub u: Vec<f64>,
    pub value: f64,
    /// Sum of the magnitudes of the objective's terms; sets the rounding floor.
    value_mag: f64,
    /// μ for the energy objective, λ for the normalized one.
    pub multiplier: f64,
    pub residual_max: f64,
    residual_sq: f64,
    /// Preconditioned descent direction `r_i / D_i`.
    direction: Vec<f64>,
    /// `∫ r·direction dμ`, the slope of the objective along the direction.
    slope: f64,
    pub scale: f64,
}

pub(crate) struct Descent<'a> {
    g: &'a WeightedGraph,
    prob: &'a ProblemSpec,
    objective: Objective,
    opts: &'a SolveOptions,
}

#[derive(Debug)]
pub(crate) enum Outcome {
    Converged { it: Iterate, iterations: usize },
    Failed { best_ratio: f64, iterations: usize },
}

impl<'a> Descent<'a> {
    pub(crate) fn new(
        g: &'a WeightedGraph,
        prob: &'a ProblemSpec,
        objective: Objective,
        opts: &'a SolveOptions,
    ) -> Self {
        Self { g, prob, objective, opts }
    }

    pub(crate) fn evaluate(&self, u: Vec<f64>) -> Iterate {
        let (g, prob) = (self.g, self.prob);
        let d = dirichlet_energy_slice(g, &u, prob.p(), prob.variant());
        let mut residual = vec![0.0; u.len()];
        let (value, value_mag, multiplier, lambda, mu, h_exp) = match self.objective {
            Objective::Energy { lambda } => {
                let fm = f_moment(g, prob, &u, prob.alpha());
                let mu = (d - lambda * fm) / prob.q();
                residual_into(g, prob, &u, lambda, mu, prob.q() - 1.0, &mut residual);
                let second = lambda / prob.alpha() * fm;
                (d / prob.p() - second, d / prob.p() + second.abs(), mu, lambda, mu, prob.q() - 1.0)
            }
            Objective::Normalized => {
                let hm = h_moment(g, prob, &u, prob.p());
                let lambda = (d + hm) / prob.alpha();
                residual_into(g, prob, &u, lambda, 1.0, prob.p() - 1.0, &mut residual);
                ((d + hm) / prob.p(), (d - hm) / prob.p(), lambda, lambda, 1.0, prob.p() - 1.0)
            }
        };
        let residual_max = residual.iter().fold(0.0, |m: f64, r| m.max(r.abs()));
        let residual_sq = g.integrate_map(&residual, |_, r| r * r);
        let scale = residual_scale(prob, &u, lambda);

        // Jacobi preconditioner: the reaction terms' derivatives blow up
        // where u_i is small and α < 2, which stalls plain gradient steps.
        let mut diag = vec![0.0; u.len()];
        laplacian_diagonal_into(g, &u, prob.p(), prob.variant(), &mut diag);
        let alpha = prob.alpha();
        for (i, dg) in diag.iter_mut().enumerate() {
            let x = u[i];
            let mut react = (mu * prob.h()[i] * h_exp).abs() * pow_or_zero(x, h_exp - 1.0);
            if alpha != 1.0 {
                react += (lambda * prob.f()[i] * (alpha - 1.0)).abs() * pow_or_zero(x, alpha - 2.0);
            }
            *dg += react;
        }
        // Guard against a vanishing diagonal with a vertex-local floor, so
        // one stiff vertex cannot freeze the others.
        let direction: Vec<f64> = (0..u.len())
            .map(|i| {
                let local: f64 = g.neighbors(i).map(|(_, w)| w).sum::<f64>() / g.mu()[i];
                let dg = diag[i].max(1e-8 * local);
                if dg.is_finite() {
                    residual[i] / dg
                } else {
                    0.0
                }
            })
            .collect();
        let slope = g.integrate_map(&residual, |i, r| r * direction[i]);
        Iterate {
            u,
            value,
            value_mag,
            multiplier,
            residual_max,
            residual_sq,
            direction,
            slope,
            scale,
        }
    }

    fn retracted(&self, mut u: Vec<f64>) -> Result<Vec<f64>> {
        let t = retract_factor(self.g, self.prob, &u, self.objective.kind())?;
        u.iter_mut().for_each(|x| *x *= t);
        Ok(u)
    }

    pub(crate) fn stationary(&self, it: &Iterate) -> bool {
        it.residual_max <= self.opts.tol * it.scale && it.u.iter().all(|x| *x > 0.0)
    }

    /// Armijo backtracking from `trial` along the preconditioned direction.
    /// Once the predicted decrease drops below the rounding floor of the
    /// objective, a step must instead keep the objective within that floor
    /// and shrink the residual.
    fn line_search(&self, it: &Iterate, mut trial: f64) -> Option<(Iterate, f64)> {
        let opts = self.opts;
        let noise = 8.0 * f64::EPSILON * it.value_mag.max(1.0);
        for _ in 0..MAX_BACKTRACKS {
            let cand: Vec<f64> = it
                .u
                .iter()
                .zip(&it.direction)
                .map(|(x, r)| (x - trial * r).max(opts.positivity_floor))
                .collect();
            let cand = match self.retracted(cand) {
                Ok(c) => c,
                // The step clamped everything that carries the constraint.
                Err(_) => {
                    trial *= opts.armijo_shrink;
                    continue;
                }
            };
            let new = self.evaluate(cand);
            let predicted = opts.armijo_c * trial * it.slope;
            let decrease = it.value - new.value;
            let ok = if predicted > noise {
                decrease >= predicted
            } else {
                decrease >= -noise && new.residual_sq < it.residual_sq
            };
            if new.value.is_finite() && ok {
                return Some((new, trial));
            }
            trial *= opts.armijo_shrink;
        }
        None
    }

    /// Runs one start. `accept` is consulted once the residual meets the
    /// tolerance and may demand further iterations.
    pub(crate) fn run(
        &self,
        u0: Vec<f64>,
        accept: &mut dyn FnMut(&Iterate) -> bool,
        observe: &mut dyn FnMut(&Iterate),
    ) -> Result<Outcome> {
        let opts = self.opts;
        let mut it = self.evaluate(self.retracted(u0)?);
        observe(&it);
        let mut step = opts.initial_step;
        let mut best_ratio = it.residual_max / it.scale;
        for k in 0..opts.max_iter {
            if self.stationary(&it) && accept(&it) {
                return Ok(Outcome::Converged { it, iterations: k });
            }
            // A collapsed step can strand the search; retry from the
            // initial step before giving up.
            let mut next = self.line_search(&it, step);
            if next.is_none() && step < opts.initial_step {
                next = self.line_search(&it, opts.initial_step);
            }
            match next {
                Some((new, trial)) => {
                    it = new;
                    observe(&it);
                    best_ratio = best_ratio.min(it.residual_max / it.scale);
                    step = (2.0 * trial).min(1e12 * opts.initial_step);
                }
                None => return Ok(Outcome::Failed { best_ratio, iterations: k + 1 }),
            }
        }
        if self.stationary(&it) && accept(&it) {
            return Ok(Outcome::Converged { it, iterations: opts.max_iter });
        }
        Ok(Outcome::Failed { best_ratio, iterations: opts.max_iter })
    }

    /// Starting points: the retracted constant 1, then log-normal
    /// perturbations of it drawn from the seeded generator.
    pub(crate) fn starts(&self) -> Vec<Vec<f64>> {
        let n = self.g.len();
        let mut rng = ChaCha8Rng::seed_from_u64(self.opts.seed);
        let mut out = vec![vec![1.0; n]];
        for _ in 0..self.opts.restarts {
            out.push(
                (0..n)
                    .map(|_| {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        (RESTART_SIGMA * z).exp()
                    })
                    .collect(),
            );
        }
        out
    }

    /// All starts; keeps the lowest-objective converged run, ties going to
    /// the earlier start.
    pub(crate) fn minimize(
        &self,
        accept: &mut dyn FnMut(&Iterate) -> bool,
    ) -> Result<(Iterate, usize, usize)> {
        let mut best: Option<(Iterate, usize, usize)> = None;
        let mut total = 0;
        let mut best_ratio = f64::INFINITY;
        for (index, u0) in self.starts().into_iter().enumerate() {
            match self.run(u0, accept, &mut |_| {})? {
                Outcome::Converged { it, iterations } => {
                    total += iterations;
                    if best.as_ref().is_none_or(|(b, _, _)| it.value < b.value) {
                        best = Some((it, iterations, index));
                    }
                }
                Outcome::Failed { best_ratio: r, iterations } => {
                    total += iterations;
                    best_ratio = best_ratio.min(r);
                }
            }
        }
        best.ok_or(Error::NoConvergence { iterations: total, residual: best_ratio })
    }
}

/// Minimizes E over M for fixed λ, returning a positive critical point and
/// its multiplier.
pub fn minimize_energy_on_m(
    g: &WeightedGraph,
    prob: &ProblemSpec,
    lambda: f64,
    opts: &SolveOptions,
) -> Result<Minimizer> {
    minimize_on_m_with(g, prob, lambda, opts, &mut |_| true)
}

fn minimize_on_m_with(
    g: &WeightedGraph,
    prob: &ProblemSpec,
    lambda: f64,
    opts: &SolveOptions,
    accept: &mut dyn FnMut(&Iterate) -> bool,
) -> Result<Minimizer> {
    opts.validate()?;
    if !lambda.is_finite() {
        return Err(Error::InvalidProblem(format!("lambda must be finite, got {lambda}")));
    }
    if !(prob.alpha() <= prob.p() && prob.p() <= prob.q()) {
        return Err(Error::InvalidProblem(
            "minimization on M needs 1 <= alpha <= p <= q".into(),
        ));
    }
    if prob.h().as_slice().iter().all(|x| *x >= 0.0) {
        return Err(Error::InfeasibleProblem("h is nowhere negative".into()));
    }
    let descent = Descent::new(g, prob, Objective::Energy { lambda }, opts);
    let (it, iterations, start_index) = descent.minimize(accept)?;
    Ok(Minimizer {
        mu: it.multiplier,
        energy: it.value,
        iterations,
        residual_max: it.residual_max,
        start_index,
        u_hat: VertexFunction::from_vec_unchecked(it.u),
    })
}

/// `u = μ^{1/(q−p)} û` and `λ = μ^{(p−α)/(q−p)} λ̃`.
pub fn rescale_solution(
    u_hat: &VertexFunction,
    mu: f64,
    lambda_tilde: f64,
    p: f64,
    q: f64,
    alpha: f64,
) -> Result<(VertexFunction, f64)> {
    if q == p {
        return Err(Error::DegenerateScaling);
    }
    if !(mu > 0.0) {
        return Err(Error::NonPositiveMultiplier(mu));
    }
    let s = 1.0 / (q - p);
    let factor = mu.powf(s);
    let lambda = mu.powf((p - alpha) * s) * lambda_tilde;
    Ok((u_hat.scaled(factor), lambda))
}

fn rescale_slice(u: &[f64], mu: f64, lambda_tilde: f64, prob: &ProblemSpec) -> (Vec<f64>, f64) {
    let s = 1.0 / (prob.q() - prob.p());
    let factor = mu.powf(s);
    (u.iter().map(|x| factor * x).collect(), mu.powf((prob.p() - prob.alpha()) * s) * lambda_tilde)
}

/// Solves the equation selected by `prob.mode()`.
///
/// `lambda_input` is λ in `mu_form`, λ̃ (negative) in `rescale`, and is
/// ignored in `normalized` mode.
pub fn solve_yamabe(
    g: &WeightedGraph,
    prob: &ProblemSpec,
    lambda_input: f64,
    opts: &SolveOptions,
) -> Result<SolveResult> {
    opts.validate()?;
    let final_residual = |u: &VertexFunction, lambda: f64, mu: f64| -> Result<f64> {
        Ok(verification::residual(g, prob, u, lambda, mu)?.1)
    };
    match prob.mode() {
        SolveMode::MuForm => {
            let m = minimize_energy_on_m(g, prob, lambda_input, opts)?;
            let residual_max = final_residual(&m.u_hat, lambda_input, m.mu)?;
            Ok(SolveResult {
                u: m.u_hat,
                lambda: lambda_input,
                mu: m.mu,
                energy: m.energy,
                iterations: m.iterations,
                residual_max,
                mode: SolveMode::MuForm,
                restarts_used: m.start_index,
            })
        }
        SolveMode::Rescale => {
            if !(lambda_input < 0.0) {
                return Err(Error::BadLambdaSign(lambda_input));
            }
            // The rescaled residual is μ^{(p−1)/(q−p)} times the inner one,
            // so the tolerance is checked on the final equation directly.
            let tol = opts.tol;
            let mut scratch = vec![0.0; g.len()];
            let mut accept = |it: &Iterate| {
                if !(it.multiplier > 0.0) {
                    return false;
                }
                let (u, lambda) = rescale_slice(&it.u, it.multiplier, lambda_input, prob);
                residual_into(g, prob, &u, lambda, 1.0, prob.q() - 1.0, &mut scratch);
                let rmax = scratch.iter().fold(0.0, |m: f64, r| m.max(r.abs()));
                rmax <= tol * residual_scale(prob, &u, lambda)
            };
            let m = minimize_on_m_with(g, prob, lambda_input, opts, &mut accept)?;
            let (u, lambda) =
                rescale_solution(&m.u_hat, m.mu, lambda_input, prob.p(), prob.q(), prob.alpha())?;
            let residual_max = final_residual(&u, lambda, 1.0)?;
            Ok(SolveResult {
                u,
                lambda,
                mu: m.mu,
                energy: m.energy,
                iterations: m.iterations,
                residual_max,
                mode: SolveMode::Rescale,
                restarts_used: m.start_index,
            })
        }
        SolveMode::Normalized => {
            let descent = Descent::new(g, prob, Objective::Normalized, opts);
            let (it, iterations, start_index) = descent.minimize(&mut |_| true)?;
            let lambda = it.multiplier;
            let u = VertexFunction::from_vec_unchecked(it.u);
            let residual_max = final_residual(&u, lambda, 1.0)?;
            Ok(SolveResult {
                u,
                lambda,
                mu: 1.0,
                energy: it.value,
                iterations,
                residual_max,
                mode: SolveMode::Normalized,
                restarts_used: start_index,
            })
        }
    }
}

/// Where a nonnegative function fails to be positive, an edge `i ~ j` with
/// `u_i <= 0 < u_j` at which `−(Δ_p u)_i < 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct PositivityWitness {
    pub vertex: usize,
    pub neighbor: usize,
    pub neg_laplacian: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PositivityReport {
    pub min: f64,
    pub witness: Option<PositivityWitness>,
}

impl PositivityReport {
    pub fn is_positive(&self) -> bool {
        self.min > 0.0
    }
}

/// Minimum value of `u` and, if `u` touches zero without vanishing, a
/// witness edge showing that `u` cannot minimize the constrained energy.
pub fn positivity_certificate(
    g: &WeightedGraph,
    u: &VertexFunction,
    p: f64,
    variant: LaplacianVariant,
) -> Result<PositivityReport> {
    crate::operators::check_exponent(p, variant)?;
    g.check_domain(u)?;
    let min = u.min();
    let u = u.as_slice();
    if min > 0.0 || u.iter().all(|x| *x == 0.0) {
        return Ok(PositivityReport { min, witness: None });
    }
    let mut lap = vec![0.0; g.len()];
    p_laplacian_into(g, u, p, variant, &mut lap);
    let witness = (0..g.len())
        .filter(|&i| u[i] <= 0.0 && -lap[i] < 0.0)
        .find_map(|i| {
            g.neighbors(i).find(|&(j, _)| u[j] > 0.0).map(|(j, _)| PositivityWitness {
                vertex: i,
                neighbor: j,
                neg_laplacian: -lap[i],
            })
        });
    Ok(PositivityReport { min, witness })
}

/// The residual of the final equation after rescaling, expressed through
/// the inner one: `μ^{(p−1)/(q−p)} (−Δ_p û + μ h û^{q−1} − λ̃ f û^{α−1})`.
pub fn rescaled_residual_prediction(
    g: &WeightedGraph,
    prob: &ProblemSpec,
    u_hat: &VertexFunction,
    mu: f64,
    lambda_tilde: f64,
) -> Result<VertexFunction> {
    let (inner, _) = verification::residual(g, prob, u_hat, lambda_tilde, mu)?;
    let factor = mu.powf((prob.p() - 1.0) / (prob.q() - prob.p()));
    Ok(inner.scaled(factor))
}

/// `E(u) ≥ −(|λ|/α) f_M (q/(−h)_m)^{α/q} Vol(G)^{1−α/q}` on M; `None` when
/// h vanishes somewhere.
pub fn energy_lower_bound(g: &WeightedGraph, prob: &ProblemSpec, lambda: f64) -> Option<f64> {
    let neg_h = prob.neg_h_min();
    if !(neg_h > 0.0) {
        return None;
    }
    let (q, alpha) = (prob.q(), prob.alpha());
    Some(
        -lambda.abs() / alpha
            * prob.f_max()
            * (q / neg_h).powf(alpha / q)
            * g.volume().powf(1.0 - alpha / q),
    )
}
