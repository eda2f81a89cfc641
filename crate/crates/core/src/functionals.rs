//! Energy, constraint, derivatives, multiplier and retractions for the
//! constrained minimization behind the solver.
//!
//! For `1 ≤ α ≤ p ≤ q` the solver minimizes
//! `E(u) = (1/p) ∫|∇u|^p dμ − (λ/α) ∫ f u^α dμ` over
//! `M = {u ≥ 0 : (1/q) ∫ h u^q dμ = −1}`. Critical points satisfy
//! `−Δ_p u − λ f u^{α−1} + μ h u^{q−1} = 0` with
//! `μ = (1/q) (∫|∇u|^p dμ − λ ∫ f u^α dμ)`.
//!
//! For `q = p` the normalized mode minimizes
//! `J(u) = (1/p) (∫|∇u|^p dμ + ∫ h u^p dμ)` over
//! `N_f = {u ≥ 0 : (1/α) ∫ f u^α dμ = 1}`; the multiplier is then λ itself.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{VertexFunction, WeightedGraph};
use crate::operators::{self, check_exponent, dirichlet_energy_slice, LaplacianVariant};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveMode {
    /// Solve `−Δ_p u + μ h u^{q−1} = λ f u^{α−1}` for given λ, unknown μ.
    MuForm,
    /// Solve `−Δ_p u + h u^{q−1} = λ f u^{α−1}` (q > p) by rescaling a
    /// `MuForm` solution computed with a negative λ̃.
    Rescale,
    /// Solve `−Δ_p u + h u^{p−1} = λ f u^{α−1}` (q = p) on the
    /// f-normalized constraint set.
    Normalized,
}

impl SolveMode {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::MuForm => "mu_form",
            Self::Rescale => "rescale",
            Self::Normalized => "normalized",
        }
    }
}

impl std::fmt::Display for SolveMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Constraint sets reachable by radial scaling.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConstraintKind {
    /// `(1/q) ∫ h u^q dμ = −1`.
    MH,
    /// `(1/α) ∫ f u^α dμ = 1`. Only used by the normalized mode.
    NF,
}

/// Exponents, coefficients, Laplacian variant and solve mode of one
/// equation on a fixed graph.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemSpec {
    pub(crate) p: f64,
    pub(crate) q: f64,
    pub(crate) alpha: f64,
    pub(crate) h: VertexFunction,
    pub(crate) f: VertexFunction,
    pub(crate) variant: LaplacianVariant,
    pub(crate) mode: SolveMode,
}

impl ProblemSpec {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        g: &WeightedGraph,
        p: f64,
        q: f64,
        alpha: f64,
        h: VertexFunction,
        f: VertexFunction,
        variant: LaplacianVariant,
        mode: SolveMode,
    ) -> Result<Self> {
        check_exponent(p, variant)?;
        if !(q.is_finite() && alpha.is_finite()) {
            return Err(Error::InvalidProblem("exponents must be finite".into()));
        }
        if alpha < 1.0 {
            return Err(Error::InvalidProblem(format!("alpha must be at least 1, got {alpha}")));
        }
        match mode {
            SolveMode::MuForm | SolveMode::Rescale => {
                if !(alpha <= p && p <= q) {
                    return Err(Error::InvalidProblem(format!(
                        "mode {mode} needs 1 <= alpha <= p <= q, got alpha={alpha}, p={p}, q={q}"
                    )));
                }
                if mode == SolveMode::Rescale && q == p {
                    return Err(Error::DegenerateScaling);
                }
            }
            SolveMode::Normalized => {
                if q != p {
                    return Err(Error::InvalidProblem(format!(
                        "normalized mode needs q = p, got p={p}, q={q}"
                    )));
                }
            }
        }
        g.check_domain(&h)?;
        g.check_domain(&f)?;
        if let Some(i) = h.as_slice().iter().position(|x| *x > 0.0) {
            return Err(Error::InvalidProblem(format!(
                "h must be <= 0, got h = {} at '{}'",
                h[i],
                g.ids()[i]
            )));
        }
        if h.as_slice().iter().all(|x| *x == 0.0) {
            return Err(Error::InvalidProblem("h must not vanish identically".into()));
        }
        if let Some(i) = f.as_slice().iter().position(|x| *x <= 0.0) {
            return Err(Error::InvalidProblem(format!(
                "f must be > 0, got f = {} at '{}'",
                f[i],
                g.ids()[i]
            )));
        }
        Ok(Self { p, q, alpha, h, f, variant, mode })
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn h(&self) -> &VertexFunction {
        &self.h
    }

    pub fn f(&self) -> &VertexFunction {
        &self.f
    }

    pub fn variant(&self) -> LaplacianVariant {
        self.variant
    }

    pub fn mode(&self) -> SolveMode {
        self.mode
    }

    /// Same problem with a different mode, revalidated.
    pub fn with_mode(&self, g: &WeightedGraph, mode: SolveMode) -> Result<Self> {
        Self::new(g, self.p, self.q, self.alpha, self.h.clone(), self.f.clone(), self.variant, mode)
    }

    /// `max_i f_i`.
    pub fn f_max(&self) -> f64 {
        self.f.max()
    }

    /// `min_i (−h_i)`; zero when h vanishes somewhere.
    pub fn neg_h_min(&self) -> f64 {
        -self.h.max()
    }
}

/// `u^{e}` for `u ≥ 0` with `0^0 = 1`. For the exponent `α − 1` this gives
/// 1 at `u = 0` when `α = 1` and 0 when `α > 1`.
#[inline]
pub(crate) fn pow_nonneg(u: f64, e: f64) -> f64 {
    if e == 0.0 {
        1.0
    } else if u == 0.0 {
        0.0
    } else {
        u.powf(e)
    }
}

pub(crate) fn check_nonneg(u: &[f64]) -> Result<()> {
    match u.iter().position(|x| *x < 0.0) {
        Some(index) => Err(Error::NegativeInput { index, value: u[index] }),
        None => Ok(()),
    }
}

fn prepare<'a>(g: &WeightedGraph, u: &'a VertexFunction) -> Result<&'a [f64]> {
    g.check_domain(u)?;
    check_nonneg(u.as_slice())?;
    Ok(u.as_slice())
}

/// `∫ f u^e dμ`.
pub(crate) fn f_moment(g: &WeightedGraph, prob: &ProblemSpec, u: &[f64], e: f64) -> f64 {
    g.integrate_map(u, |i, x| prob.f[i] * pow_nonneg(x, e))
}

/// `∫ h u^e dμ`.
pub(crate) fn h_moment(g: &WeightedGraph, prob: &ProblemSpec, u: &[f64], e: f64) -> f64 {
    g.integrate_map(u, |i, x| prob.h[i] * pow_nonneg(x, e))
}

pub(crate) fn energy_slice(g: &WeightedGraph, prob: &ProblemSpec, u: &[f64], lambda: f64) -> f64 {
    let d = dirichlet_energy_slice(g, u, prob.p, prob.variant);
    d / prob.p - lambda / prob.alpha * f_moment(g, prob, u, prob.alpha)
}

pub(crate) fn constraint_slice(g: &WeightedGraph, prob: &ProblemSpec, u: &[f64]) -> f64 {
    h_moment(g, prob, u, prob.q) / prob.q + 1.0
}

pub(crate) fn normalized_objective_slice(g: &WeightedGraph, prob: &ProblemSpec, u: &[f64]) -> f64 {
    let d = dirichlet_energy_slice(g, u, prob.p, prob.variant);
    (d + h_moment(g, prob, u, prob.p)) / prob.p
}

pub(crate) fn multiplier_slice(g: &WeightedGraph, prob: &ProblemSpec, u: &[f64], lambda: f64) -> f64 {
    let d = dirichlet_energy_slice(g, u, prob.p, prob.variant);
    (d - lambda * f_moment(g, prob, u, prob.alpha)) / prob.q
}

/// Pointwise `−Δ_p u − λ f u^{α−1} + μ h u^{h_exp}` into `out`.
pub(crate) fn residual_into(
    g: &WeightedGraph,
    prob: &ProblemSpec,
    u: &[f64],
    lambda: f64,
    mu: f64,
    h_exp: f64,
    out: &mut [f64],
) {
    operators::p_laplacian_into(g, u, prob.p, prob.variant, out);
    for (i, r) in out.iter_mut().enumerate() {
        let x = u[i];
        *r = -*r - lambda * prob.f[i] * pow_nonneg(x, prob.alpha - 1.0)
            + mu * prob.h[i] * pow_nonneg(x, h_exp);
    }
}

/// `max(1, sup_i |λ f_i u_i^{α−1}|)`, the scale residuals are measured
/// against.
pub(crate) fn residual_scale(prob: &ProblemSpec, u: &[f64], lambda: f64) -> f64 {
    u.iter()
        .enumerate()
        .map(|(i, x)| (lambda * prob.f[i] * pow_nonneg(*x, prob.alpha - 1.0)).abs())
        .fold(1.0, f64::max)
}

/// `E(u) = (1/p) ∫|∇u|^p dμ − (λ/α) ∫ f u^α dμ`.
pub fn energy(g: &WeightedGraph, prob: &ProblemSpec, u: &VertexFunction, lambda: f64) -> Result<f64> {
    Ok(energy_slice(g, prob, prepare(g, u)?, lambda))
}

/// `G(u) = (1/q) ∫ h u^q dμ + 1`; zero exactly on M.
pub fn constraint(g: &WeightedGraph, prob: &ProblemSpec, u: &VertexFunction) -> Result<f64> {
    Ok(constraint_slice(g, prob, prepare(g, u)?))
}

/// `J(u) = (1/p)(∫|∇u|^p dμ + ∫ h u^p dμ)`, the normalized-mode objective.
pub fn normalized_objective(g: &WeightedGraph, prob: &ProblemSpec, u: &VertexFunction) -> Result<f64> {
    Ok(normalized_objective_slice(g, prob, prepare(g, u)?))
}

/// The L²(μ) representatives of the derivatives of E and G:
/// `DE = −Δ_p u − λ f u^{α−1}` and `DG = h u^{q−1}`, so that the
/// directional derivative along v is `∫ DE·v dμ`.
pub fn frechet_derivatives(
    g: &WeightedGraph,
    prob: &ProblemSpec,
    u: &VertexFunction,
    lambda: f64,
) -> Result<(VertexFunction, VertexFunction)> {
    let u = prepare(g, u)?;
    let mut de = vec![0.0; g.len()];
    residual_into(g, prob, u, lambda, 0.0, prob.q - 1.0, &mut de);
    let dg = u.iter().enumerate().map(|(i, x)| prob.h[i] * pow_nonneg(*x, prob.q - 1.0)).collect();
    Ok((VertexFunction::from_vec_unchecked(de), VertexFunction::from_vec_unchecked(dg)))
}

/// `μ = (1/q)(∫|∇u|^p dμ − λ ∫ f u^α dμ)`.
pub fn multiplier(g: &WeightedGraph, prob: &ProblemSpec, u: &VertexFunction, lambda: f64) -> Result<f64> {
    Ok(multiplier_slice(g, prob, prepare(g, u)?, lambda))
}

/// `(∫|∇u|^p dμ + ∫ h u^p dμ)(∫ f u^α dμ)^{−p/α}`, invariant under
/// `u ↦ t u`. Its critical points solve `−Δ_p u + h u^{p−1} = λ f u^{α−1}`.
pub fn rayleigh_quotient(g: &WeightedGraph, prob: &ProblemSpec, u: &VertexFunction) -> Result<f64> {
    let u = prepare(g, u)?;
    if u.iter().all(|x| *x == 0.0) {
        return Err(Error::ZeroFunction);
    }
    let num = dirichlet_energy_slice(g, u, prob.p, prob.variant) + h_moment(g, prob, u, prob.p);
    let den = f_moment(g, prob, u, prob.alpha);
    Ok(num * den.powf(-prob.p / prob.alpha))
}

/// The scalar `t > 0` with `t·u` on the constraint set.
pub(crate) fn retract_factor(
    g: &WeightedGraph,
    prob: &ProblemSpec,
    u: &[f64],
    kind: ConstraintKind,
) -> Result<f64> {
    match kind {
        ConstraintKind::MH => {
            let s = h_moment(g, prob, u, prob.q);
            if !(s < 0.0) {
                return Err(Error::RetractInfeasible(
                    "u vanishes wherever h is negative".into(),
                ));
            }
            Ok((prob.q / -s).powf(1.0 / prob.q))
        }
        ConstraintKind::NF => {
            let s = f_moment(g, prob, u, prob.alpha);
            if !(s > 0.0) {
                return Err(Error::RetractInfeasible("u vanishes identically".into()));
            }
            Ok((prob.alpha / s).powf(1.0 / prob.alpha))
        }
    }
}

/// Radially rescales `u` onto the constraint set.
pub fn retract(
    g: &WeightedGraph,
    prob: &ProblemSpec,
    u: &VertexFunction,
    kind: ConstraintKind,
) -> Result<VertexFunction> {
    let u = prepare(g, u)?;
    let t = retract_factor(g, prob, u, kind)?;
    Ok(VertexFunction::from_vec_unchecked(u.iter().map(|x| t * x).collect()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{random_graph, random_positive, random_problem};
    use crate::operators::lp_norm;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use LaplacianVariant::{Edge, Gamma};

    fn k2() -> WeightedGraph {
        WeightedGraph::build(&[("a", 1.0), ("b", 1.0)], &[("a", "b", 1.0)]).unwrap()
    }

    fn vf(v: &[f64]) -> VertexFunction {
        VertexFunction::new(v.to_vec()).unwrap()
    }

    fn k2_problem(p: f64, q: f64, alpha: f64, mode: SolveMode) -> (WeightedGraph, ProblemSpec) {
        let g = k2();
        let prob = ProblemSpec::new(&g, p, q, alpha, vf(&[-1.0, -1.0]), vf(&[1.0, 1.0]), Edge, mode)
            .unwrap();
        (g, prob)
    }

    #[test]
    fn problem_validation() {
        let g = k2();
        let h = vf(&[-1.0, -1.0]);
        let f = vf(&[1.0, 1.0]);
        let mk = |p, q, a, mode, h: &VertexFunction, f: &VertexFunction| {
            ProblemSpec::new(&g, p, q, a, h.clone(), f.clone(), Edge, mode)
        };
        assert!(mk(2.0, 4.0, 2.0, SolveMode::MuForm, &h, &f).is_ok());
        assert!(mk(2.0, 4.0, 3.0, SolveMode::MuForm, &h, &f).is_err());
        assert!(mk(2.0, 1.5, 1.0, SolveMode::MuForm, &h, &f).is_err());
        assert!(matches!(
            mk(2.0, 2.0, 2.0, SolveMode::Rescale, &h, &f),
            Err(Error::DegenerateScaling)
        ));
        assert!(mk(2.0, 2.0, 5.0, SolveMode::Normalized, &h, &f).is_ok());
        assert!(mk(2.0, 3.0, 2.0, SolveMode::Normalized, &h, &f).is_err());
        assert!(mk(2.0, 2.0, 0.5, SolveMode::Normalized, &h, &f).is_err());
        assert!(mk(2.0, 4.0, 2.0, SolveMode::MuForm, &vf(&[0.0, 0.0]), &f).is_err());
        assert!(mk(2.0, 4.0, 2.0, SolveMode::MuForm, &vf(&[1.0, -1.0]), &f).is_err());
        assert!(mk(2.0, 4.0, 2.0, SolveMode::MuForm, &h, &vf(&[0.0, 1.0])).is_err());
        assert!(matches!(
            ProblemSpec::new(&g, 1.5, 1.5, 1.0, h.clone(), f.clone(), Gamma, SolveMode::Normalized),
            Err(Error::UnsupportedExponent(_))
        ));
    }

    #[test]
    fn energy_examples() {
        let (g, prob) = k2_problem(2.0, 2.0, 2.0, SolveMode::MuForm);
        assert_eq!(energy(&g, &prob, &vf(&[1.0, 1.0]), -2.0).unwrap(), 2.0);
        assert_eq!(energy(&g, &prob, &vf(&[0.0, 0.0]), -2.0).unwrap(), 0.0);
        assert_eq!(energy(&g, &prob, &vf(&[0.0, 1.0]), 0.0).unwrap(), 0.5);
        assert!(matches!(
            energy(&g, &prob, &vf(&[-1.0, 1.0]), 0.0),
            Err(Error::NegativeInput { index: 0, .. })
        ));
    }

    #[test]
    fn constraint_examples() {
        let (g, prob) = k2_problem(2.0, 4.0, 2.0, SolveMode::MuForm);
        let c = 2f64.powf(0.25);
        assert!(constraint(&g, &prob, &vf(&[c, c])).unwrap().abs() < 1e-15);
        assert_eq!(constraint(&g, &prob, &vf(&[0.0, 0.0])).unwrap(), 1.0);
        let (g, prob) = k2_problem(2.0, 2.0, 2.0, SolveMode::MuForm);
        assert_eq!(constraint(&g, &prob, &vf(&[1.0, 1.0])).unwrap(), 0.0);
    }

    #[test]
    fn derivative_examples() {
        let (g, prob) = k2_problem(2.0, 4.0, 2.0, SolveMode::MuForm);
        let (de, dg) = frechet_derivatives(&g, &prob, &vf(&[1.0, 1.0]), -1.0).unwrap();
        assert_eq!(de.as_slice(), &[1.0, 1.0]);
        assert_eq!(dg.as_slice(), &[-1.0, -1.0]);
        let (de, dg) = frechet_derivatives(&g, &prob, &vf(&[0.0, 0.0]), -1.0).unwrap();
        assert_eq!(de.as_slice(), &[0.0, 0.0]);
        assert_eq!(dg.as_slice(), &[0.0, 0.0]);
    }

    #[test]
    fn power_conventions_at_zero() {
        assert_eq!(pow_nonneg(0.0, 0.0), 1.0);
        assert_eq!(pow_nonneg(0.0, 0.5), 0.0);
        assert_eq!(pow_nonneg(4.0, 0.5), 2.0);
        // α = 1: the right-hand side is λ f even where u vanishes
        let (g, prob) = k2_problem(2.0, 2.0, 1.0, SolveMode::MuForm);
        let (de, _) = frechet_derivatives(&g, &prob, &vf(&[0.0, 0.0]), 2.0).unwrap();
        assert_eq!(de.as_slice(), &[-2.0, -2.0]);
    }

    #[test]
    fn multiplier_examples() {
        let (g, prob) = k2_problem(2.0, 4.0, 2.0, SolveMode::MuForm);
        let c = 2f64.powf(0.25);
        assert_relative_eq!(
            multiplier(&g, &prob, &vf(&[c, c]), -1.0).unwrap(),
            0.5 * 2f64.sqrt(),
            max_relative = 1e-15
        );
        assert_eq!(multiplier(&g, &prob, &vf(&[3.0, 3.0]), 0.0).unwrap(), 0.0);
    }

    #[test]
    fn multiplier_positive_for_negative_lambda() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let n = rng.random_range(2..=6);
            let (g, prob) = random_problem(&mut rng, n, (2.5, 3.0, 1.5), Edge, SolveMode::MuForm);
            let u = random_positive(&mut rng, &g, 0.1, 2.0);
            let u = retract(&g, &prob, &u, ConstraintKind::MH).unwrap();
            let lt = -rng.random_range(0.01..3.0);
            assert!(multiplier(&g, &prob, &u, lt).unwrap() > 0.0);
        }
    }

    #[test]
    fn rayleigh_examples() {
        let (g, prob) = k2_problem(2.0, 2.0, 2.0, SolveMode::Normalized);
        assert_eq!(rayleigh_quotient(&g, &prob, &vf(&[1.0, 1.0])).unwrap(), -1.0);
        assert!(matches!(
            rayleigh_quotient(&g, &prob, &vf(&[0.0, 0.0])),
            Err(Error::ZeroFunction)
        ));

        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..30 {
            let n = rng.random_range(2..=7);
            let alpha = rng.random_range(1.0..4.0);
            let (g, prob) = random_problem(&mut rng, n, (2.5, 2.5, alpha), Gamma, SolveMode::Normalized);
            let u = random_positive(&mut rng, &g, 0.1, 2.0);
            let a = rayleigh_quotient(&g, &prob, &u).unwrap();
            let b = rayleigh_quotient(&g, &prob, &u.scaled(7.3)).unwrap();
            assert!((a - b).abs() <= 1e-12 * a.abs());
            let on_nf = retract(&g, &prob, &u, ConstraintKind::NF).unwrap();
            let j = normalized_objective(&g, &prob, &on_nf).unwrap();
            let expected = prob.p * alpha.powf(-prob.p / alpha) * j;
            assert!((a - expected).abs() <= 1e-12 * a.abs().max(1.0));
        }
    }

    #[test]
    fn retract_examples() {
        let (g, prob) = k2_problem(2.0, 4.0, 2.0, SolveMode::MuForm);
        let r = retract(&g, &prob, &vf(&[1.0, 1.0]), ConstraintKind::MH).unwrap();
        let c = 2f64.powf(0.25);
        assert_relative_eq!(r[0], c, max_relative = 1e-15);
        assert_relative_eq!(r[1], c, max_relative = 1e-15);
        let again = retract(&g, &prob, &r, ConstraintKind::MH).unwrap();
        assert!(again.sup_distance(&r) <= 1e-14 * c);

        let g = k2();
        let prob = ProblemSpec::new(
            &g, 2.0, 2.0, 2.0, vf(&[-1.0, 0.0]), vf(&[1.0, 1.0]), Edge, SolveMode::MuForm,
        )
        .unwrap();
        assert!(matches!(
            retract(&g, &prob, &vf(&[0.0, 1.0]), ConstraintKind::MH),
            Err(Error::RetractInfeasible(_))
        ));
        assert!(matches!(
            retract(&g, &prob, &vf(&[0.0, 0.0]), ConstraintKind::NF),
            Err(Error::RetractInfeasible(_))
        ));
    }

    #[test]
    fn lemma_bounds_on_retracted_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..200 {
            let n = rng.random_range(2..=8);
            let (g, prob) = random_problem(&mut rng, n, (3.0, 4.0, 2.0), Edge, SolveMode::MuForm);
            let u = random_positive(&mut rng, &g, 0.0, 3.0);
            let u = retract(&g, &prob, &u, ConstraintKind::MH).unwrap();
            let (q, alpha) = (prob.q, prob.alpha);
            let cap = q / prob.neg_h_min();
            let nq = lp_norm(&g, &u, q).unwrap();
            assert!(cap - nq.powf(q) >= -1e-12 * cap);
            assert!(cap.powf(alpha / q) - nq.powf(alpha) >= -1e-12 * cap.powf(alpha / q));
            let fm = f_moment(&g, &prob, u.as_slice(), alpha);
            let holder = prob.f_max() * g.volume().powf(1.0 - alpha / q) * nq.powf(alpha);
            assert!(fm >= 0.0 && holder - fm >= -1e-12 * holder.max(1.0));
        }
    }

    fn central<F: Fn(&[f64]) -> f64>(fun: F, u: &[f64], v: &[f64], t: f64) -> f64 {
        let plus: Vec<f64> = u.iter().zip(v).map(|(a, b)| a + t * b).collect();
        let minus: Vec<f64> = u.iter().zip(v).map(|(a, b)| a - t * b).collect();
        (fun(&plus) - fun(&minus)) / (2.0 * t)
    }

    #[test]
    fn derivatives_match_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for k in 0..60 {
            let n = rng.random_range(2..=8);
            let variant = if k % 2 == 0 { Edge } else { Gamma };
            let p = [2.0, 2.5, 3.0][k % 3];
            let alpha = rng.random_range(1.0..=p);
            let q = p + rng.random_range(0.0..2.0);
            let (g, prob) = random_problem(&mut rng, n, (p, q, alpha), variant, SolveMode::MuForm);
            let u = random_positive(&mut rng, &g, 0.5, 2.0);
            let v: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let lambda = rng.random_range(-2.0..2.0);
            let (de, dg) = frechet_derivatives(&g, &prob, &u, lambda).unwrap();
            let pair_e = g.integrate_map(de.as_slice(), |i, x| x * v[i]);
            let pair_g = g.integrate_map(dg.as_slice(), |i, x| x * v[i]);
            let fd_e = central(|w| energy_slice(&g, &prob, w, lambda), u.as_slice(), &v, 1e-6);
            let fd_g = central(|w| constraint_slice(&g, &prob, w), u.as_slice(), &v, 1e-6);
            assert!((pair_e - fd_e).abs() <= 1e-6 * pair_e.abs().max(1.0), "{pair_e} vs {fd_e}");
            assert!((pair_g - fd_g).abs() <= 1e-6 * pair_g.abs().max(1.0), "{pair_g} vs {fd_g}");

            // pairing with u itself: ∫ DE·u = ∫|∇u|^p − λ ∫ f u^α = q μ
            let pair_u = g.integrate_map(de.as_slice(), |i, x| x * u[i]);
            let mu = multiplier(&g, &prob, &u, lambda).unwrap();
            assert!((pair_u - prob.q * mu).abs() <= 1e-10 * pair_u.abs().max(1.0));
        }
    }

    proptest! {
        #[test]
        fn retraction_is_radial_and_idempotent(
            seed in 0u64..1000,
            t in 0.05f64..20.0,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = rng.random_range(2..=8);
            let g = random_graph(&mut rng, n);
            let h = crate::corpus::random_h(&mut rng, &g);
            let f = crate::corpus::random_f(&mut rng, &g);
            let prob = ProblemSpec::new(&g, 2.0, 3.5, 1.5, h, f, Edge, SolveMode::MuForm).unwrap();
            let u = random_positive(&mut rng, &g, 0.0, 2.0);
            for kind in [ConstraintKind::MH, ConstraintKind::NF] {
                let r = retract(&g, &prob, &u, kind).unwrap();
                let rr = retract(&g, &prob, &r, kind).unwrap();
                let rt = retract(&g, &prob, &u.scaled(t), kind).unwrap();
                let s = r.sup_norm();
                prop_assert!(rr.sup_distance(&r) <= 1e-14 * s);
                prop_assert!(rt.sup_distance(&r) <= 1e-12 * s);
            }
            let r = retract(&g, &prob, &u, ConstraintKind::MH).unwrap();
            prop_assert!(constraint(&g, &prob, &r).unwrap().abs() <= 1e-14);
        }
    }
}
