//! Discrete p-Laplacians, vertex gradient norms, Dirichlet energy and norms.
//!
//! Two Laplacians are provided. The edge variant is
//! `(Δ_p u)_i = (1/μ_i) Σ_{j~i} ω_ij |u_j − u_i|^{p−2} (u_j − u_i)`.
//! The gamma variant is built from the carré du champ
//! `Γ(u,φ)_i = (1/(2μ_i)) Σ_{j~i} ω_ij (u_j − u_i)(φ_j − φ_i)` and
//! `|∇u|_i = sqrt(Γ(u,u)_i)`:
//! `(Δ_p u)_i = (1/(2μ_i)) Σ_{j~i} (|∇u|_j^{p−2} + |∇u|_i^{p−2}) ω_ij (u_j − u_i)`.
//! Both coincide with the combinatorial Laplacian at `p = 2`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{VertexFunction, WeightedGraph};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LaplacianVariant {
    #[default]
    Edge,
    Gamma,
}

impl std::fmt::Display for LaplacianVariant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Edge => "edge",
            Self::Gamma => "gamma",
        })
    }
}

impl std::str::FromStr for LaplacianVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "edge" => Ok(Self::Edge),
            "gamma" => Ok(Self::Gamma),
            other => Err(Error::InvalidProblem(format!("unknown variant '{other}'"))),
        }
    }
}

/// `|x|^{p−2} x`, evaluated as `sign(x) |x|^{p−1}` so that it is 0 at 0.
#[inline]
pub fn signed_pow(x: f64, p: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x.signum() * x.abs().powf(p - 1.0)
    }
}

pub(crate) fn check_exponent(p: f64, variant: LaplacianVariant) -> Result<()> {
    if !(p.is_finite() && p > 1.0) {
        return Err(Error::UnsupportedExponent(format!("p must exceed 1, got {p}")));
    }
    if variant == LaplacianVariant::Gamma && p < 2.0 {
        return Err(Error::UnsupportedExponent(format!(
            "the gamma Laplacian is singular for p < 2, got {p}"
        )));
    }
    Ok(())
}

/// `Γ(u,u)_i` for every vertex.
pub(crate) fn carre_du_champ(g: &WeightedGraph, u: &[f64]) -> Vec<f64> {
    (0..g.len())
        .map(|i| {
            let s: f64 = g
                .neighbors(i)
                .map(|(j, w)| {
                    let d = u[j] - u[i];
                    w * d * d
                })
                .sum();
            s / (2.0 * g.mu()[i])
        })
        .collect()
}

pub(crate) fn p_laplacian_into(
    g: &WeightedGraph,
    u: &[f64],
    p: f64,
    variant: LaplacianVariant,
    out: &mut [f64],
) {
    match variant {
        LaplacianVariant::Edge => {
            for (i, o) in out.iter_mut().enumerate() {
                let s: f64 = g.neighbors(i).map(|(j, w)| w * signed_pow(u[j] - u[i], p)).sum();
                *o = s / g.mu()[i];
            }
        }
        LaplacianVariant::Gamma => {
            // |∇u|^{p−2} = Γ^{(p−2)/2}; powf gives 1 at 0 for p = 2 and 0 for p > 2.
            let a: Vec<f64> =
                carre_du_champ(g, u).into_iter().map(|gam| gam.powf(0.5 * (p - 2.0))).collect();
            for (i, o) in out.iter_mut().enumerate() {
                let s: f64 = g.neighbors(i).map(|(j, w)| (a[j] + a[i]) * w * (u[j] - u[i])).sum();
                *o = s / (2.0 * g.mu()[i]);
            }
        }
    }
}

/// A positive proxy for `∂(−Δ_p u)_i/∂u_i`, used to precondition descent.
/// For the gamma variant the derivative of the weights `Γ^{(p−2)/2}` is
/// left out.
pub(crate) fn laplacian_diagonal_into(
    g: &WeightedGraph,
    u: &[f64],
    p: f64,
    variant: LaplacianVariant,
    out: &mut [f64],
) {
    match variant {
        LaplacianVariant::Edge => {
            // |d|^{p−2} is unbounded for p < 2; differences are floored.
            let floor = 1e-8 * u.iter().fold(0.0f64, |m, x| m.max(x.abs())).max(f64::MIN_POSITIVE);
            for (i, o) in out.iter_mut().enumerate() {
                let s: f64 =
                    g.neighbors(i).map(|(j, w)| w * (u[j] - u[i]).abs().max(floor).powf(p - 2.0)).sum();
                *o = (p - 1.0) * s / g.mu()[i];
            }
        }
        LaplacianVariant::Gamma => {
            let a: Vec<f64> =
                carre_du_champ(g, u).into_iter().map(|gam| gam.powf(0.5 * (p - 2.0))).collect();
            for (i, o) in out.iter_mut().enumerate() {
                let s: f64 = g.neighbors(i).map(|(j, w)| (a[j] + a[i]) * w).sum();
                *o = s / (2.0 * g.mu()[i]);
            }
        }
    }
}

pub(crate) fn dirichlet_energy_slice(
    g: &WeightedGraph,
    u: &[f64],
    p: f64,
    variant: LaplacianVariant,
) -> f64 {
    match variant {
        LaplacianVariant::Edge => {
            g.edges().iter().map(|&(i, j, w)| w * (u[j] - u[i]).abs().powf(p)).sum()
        }
        LaplacianVariant::Gamma => {
            let gam = carre_du_champ(g, u);
            g.integrate_map(&gam, |_, x| x.powf(0.5 * p))
        }
    }
}

/// The p-Laplacian of `u`.
pub fn p_laplacian(
    g: &WeightedGraph,
    u: &VertexFunction,
    p: f64,
    variant: LaplacianVariant,
) -> Result<VertexFunction> {
    check_exponent(p, variant)?;
    g.check_domain(u)?;
    let mut out = vec![0.0; g.len()];
    p_laplacian_into(g, u.as_slice(), p, variant, &mut out);
    Ok(VertexFunction::from_vec_unchecked(out))
}

/// Per-vertex gradient norm. The edge variant is
/// `((1/(2μ_i)) Σ_{j~i} ω_ij |u_j − u_i|^p)^{1/p}`; the gamma variant is
/// `sqrt(Γ(u,u)_i)` and ignores `p`.
pub fn gradient_norm(
    g: &WeightedGraph,
    u: &VertexFunction,
    p: f64,
    variant: LaplacianVariant,
) -> Result<VertexFunction> {
    g.check_domain(u)?;
    let u = u.as_slice();
    let out = match variant {
        LaplacianVariant::Edge => {
            if !(p.is_finite() && p > 1.0) {
                return Err(Error::UnsupportedExponent(format!("p must exceed 1, got {p}")));
            }
            (0..g.len())
                .map(|i| {
                    let s: f64 = g.neighbors(i).map(|(j, w)| w * (u[j] - u[i]).abs().powf(p)).sum();
                    (s / (2.0 * g.mu()[i])).powf(1.0 / p)
                })
                .collect()
        }
        LaplacianVariant::Gamma => carre_du_champ(g, u).into_iter().map(f64::sqrt).collect(),
    };
    Ok(VertexFunction::from_vec_unchecked(out))
}

/// `∫_V |∇u|^p dμ`. For the edge variant this is the edge sum
/// `Σ_{i~j} ω_ij |u_j − u_i|^p`.
pub fn dirichlet_energy(
    g: &WeightedGraph,
    u: &VertexFunction,
    p: f64,
    variant: LaplacianVariant,
) -> Result<f64> {
    if !(p.is_finite() && p > 1.0) {
        return Err(Error::UnsupportedExponent(format!("p must exceed 1, got {p}")));
    }
    g.check_domain(u)?;
    Ok(dirichlet_energy_slice(g, u.as_slice(), p, variant))
}

/// `(Σ_i μ_i |u_i|^r)^{1/r}`.
pub fn lp_norm(g: &WeightedGraph, u: &VertexFunction, r: f64) -> Result<f64> {
    if !(r.is_finite() && r >= 1.0) {
        return Err(Error::UnsupportedExponent(format!("norm exponent must be at least 1, got {r}")));
    }
    g.check_domain(u)?;
    Ok(g.integrate_map(u.as_slice(), |_, x| x.abs().powf(r)).powf(1.0 / r))
}

/// `(∫|∇u|^p dμ + ∫|u|^p dμ)^{1/p}`.
pub fn sobolev_norm(
    g: &WeightedGraph,
    u: &VertexFunction,
    p: f64,
    variant: LaplacianVariant,
) -> Result<f64> {
    let grad = dirichlet_energy(g, u, p, variant)?;
    let mass = g.integrate_map(u.as_slice(), |_, x| x.abs().powf(p));
    Ok((grad + mass).powf(1.0 / p))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::random_graph;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use LaplacianVariant::{Edge, Gamma};

    fn k2() -> WeightedGraph {
        WeightedGraph::build(&[("a", 1.0), ("b", 1.0)], &[("a", "b", 1.0)]).unwrap()
    }

    fn vf(v: &[f64]) -> VertexFunction {
        VertexFunction::new(v.to_vec()).unwrap()
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
    }

    #[test]
    fn laplacian_hand_values() {
        let g = k2();
        let u = vf(&[0.0, 1.0]);
        assert_eq!(p_laplacian(&g, &u, 3.0, Edge).unwrap().as_slice(), &[1.0, -1.0]);
        assert_eq!(p_laplacian(&g, &u, 2.0, Edge).unwrap().as_slice(), &[1.0, -1.0]);
        assert_eq!(p_laplacian(&g, &u, 2.0, Gamma).unwrap().as_slice(), &[1.0, -1.0]);
    }

    #[test]
    fn laplacian_of_constant_vanishes() {
        let g = random_graph(&mut ChaCha8Rng::seed_from_u64(3), 6);
        let u = VertexFunction::constant(&g, 2.5);
        for p in [1.3, 2.0, 3.7] {
            assert!(p_laplacian(&g, &u, p, Edge).unwrap().as_slice().iter().all(|x| *x == 0.0));
            assert!(gradient_norm(&g, &u, p, Edge).unwrap().as_slice().iter().all(|x| *x == 0.0));
        }
        for p in [2.0, 3.7] {
            assert!(p_laplacian(&g, &u, p, Gamma).unwrap().as_slice().iter().all(|x| *x == 0.0));
        }
        assert_eq!(dirichlet_energy(&g, &u, 3.0, Gamma).unwrap(), 0.0);
    }

    #[test]
    fn gamma_rejects_small_p() {
        let g = k2();
        let u = vf(&[0.0, 1.0]);
        assert!(matches!(p_laplacian(&g, &u, 1.5, Gamma), Err(Error::UnsupportedExponent(_))));
        assert!(matches!(p_laplacian(&g, &u, 1.0, Edge), Err(Error::UnsupportedExponent(_))));
        assert!(matches!(
            p_laplacian(&g, &vf(&[1.0]), 2.0, Edge),
            Err(Error::DomainMismatch { .. })
        ));
    }

    #[test]
    fn gradient_norm_hand_values() {
        let g = k2();
        let u = vf(&[0.0, 1.0]);
        let h = 0.5f64.sqrt();
        for x in gradient_norm(&g, &u, 2.0, Edge).unwrap().as_slice() {
            assert_relative_eq!(*x, h, max_relative = 1e-15);
        }
        for x in gradient_norm(&g, &u, 7.0, Gamma).unwrap().as_slice() {
            assert_relative_eq!(*x, h, max_relative = 1e-15);
        }
    }

    #[test]
    fn energy_and_norm_hand_values() {
        let g = k2();
        let u = vf(&[0.0, 1.0]);
        assert_eq!(dirichlet_energy(&g, &u, 3.0, Edge).unwrap(), 1.0);
        let vs: f64 = g.integrate(&gradient_norm(&g, &u, 3.0, Edge).unwrap()).unwrap();
        // vertex form: Σ μ_i |∇u|_i^3 = 2 · (1/2)
        let vertex_sum: f64 = gradient_norm(&g, &u, 3.0, Edge)
            .unwrap()
            .as_slice()
            .iter()
            .map(|x| x.powi(3))
            .sum();
        assert_relative_eq!(vertex_sum, 1.0, max_relative = 1e-15);
        assert!(vs > 0.0);
        assert_eq!(dirichlet_energy(&g, &vf(&[0.0, 2.0]), 2.0, Edge).unwrap(), 4.0);

        assert_eq!(lp_norm(&g, &u, 4.0).unwrap(), 1.0);
        assert_eq!(lp_norm(&g, &vf(&[0.0, 0.0]), 4.0).unwrap(), 0.0);
        assert_relative_eq!(lp_norm(&g, &vf(&[1.0, 1.0]), 2.0).unwrap(), 2f64.sqrt());
        assert!(lp_norm(&g, &u, 0.5).is_err());

        assert_eq!(sobolev_norm(&g, &vf(&[0.0, 0.0]), 2.0, Edge).unwrap(), 0.0);
        assert_relative_eq!(sobolev_norm(&g, &u, 2.0, Edge).unwrap(), 2f64.sqrt());
        assert_relative_eq!(sobolev_norm(&g, &vf(&[1.0, 1.0]), 2.0, Edge).unwrap(), 2f64.sqrt());
    }

    #[test]
    fn signed_pow_is_zero_at_zero() {
        assert_eq!(signed_pow(0.0, 1.5), 0.0);
        assert_eq!(signed_pow(-4.0, 1.5), -2.0);
        assert_eq!(signed_pow(4.0, 3.0), 16.0);
    }

    #[test]
    fn random_identities() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let n = rng.random_range(2..=8);
            let g = random_graph(&mut rng, n);
            let u: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
            let u = vf(&u);
            let p = rng.random_range(1.2..4.0);

            let lap = p_laplacian(&g, &u, p, Edge).unwrap();
            let scale: f64 = g.integrate_map(lap.as_slice(), |_, x| x.abs());
            assert!(g.integrate(&lap).unwrap().abs() <= 1e-12 * scale.max(1.0));

            let es = dirichlet_energy(&g, &u, p, Edge).unwrap();
            let vs = g.integrate_map(gradient_norm(&g, &u, p, Edge).unwrap().as_slice(), |_, x| {
                x.powf(p)
            });
            assert!(rel(es, vs) <= 1e-12);

            let pairing = g.integrate_map(lap.as_slice(), |i, x| -x * u[i]);
            assert!(rel(pairing, es) <= 1e-10);

            let t = rng.random_range(0.1..5.0);
            for variant in [Edge, Gamma] {
                let p = if variant == Gamma { p.max(2.0) } else { p };
                let a = p_laplacian(&g, &u.scaled(t), p, variant).unwrap();
                let b = p_laplacian(&g, &u, p, variant).unwrap();
                for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
                    let y = t.powf(p - 1.0) * y;
                    assert!((x - y).abs() <= 1e-12 * x.abs().max(y.abs()).max(1e-300));
                }
            }
        }
    }
}
