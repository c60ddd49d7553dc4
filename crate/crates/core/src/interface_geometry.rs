//! Geometry of the deformed interface `Γ_h = {x + h(x) n(x)}`: α, β, n_Γ,
//! H_Γ and their Fréchet derivatives, all evaluated on the surface grid.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::hanzawa::m0_from;
use crate::surface::{ReferenceSurface, M3, V3};

/// Interface geometry for one height field on the whole grid.
#[derive(Clone, Debug)]
pub struct InterfaceGeometry {
    pub h: Vec<f64>,
    pub grad_h: Vec<V3>,
    pub m0: Vec<M3>,
    /// `α = M₀ ∇_Σ h`
    pub alpha: Vec<V3>,
    /// `(∇_Σ α)_ij = (∇_Σ α_j)_i`
    pub grad_alpha: Vec<M3>,
    /// `β = 1/|n - α|`
    pub beta: Vec<f64>,
    pub n_gamma: Vec<V3>,
    pub h_gamma: Vec<f64>,
}

impl InterfaceGeometry {
    /// Refuses heights above `delta0 · ρ₀` or with `|det(I - hL)| < 1/2`.
    pub fn new(surface: &ReferenceSurface, h: &[f64], delta0: f64) -> Result<Self> {
        surface.check_shape(h.len())?;
        let limit = delta0 * surface.rho0;
        let sup = h.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if !(sup < limit) {
            return Err(Error::HeightTooLarge { sup, limit });
        }
        let grad_h = surface.grad_grid(h)?;
        let nodes = surface.nodes();
        let m0 = nodes
            .iter()
            .zip(h)
            .map(|(nd, &hv)| m0_from(hv, &nd.weingarten))
            .collect::<Result<Vec<_>>>()?;
        let alpha: Vec<V3> = m0.iter().zip(&grad_h).map(|(m, g)| m * g).collect();
        let grad_alpha = surface.grad_vec_grid(&alpha)?;
        let mut beta = Vec::with_capacity(h.len());
        let mut n_gamma = Vec::with_capacity(h.len());
        let mut h_gamma = Vec::with_capacity(h.len());
        for i in 0..h.len() {
            let n = nodes[i].frame.n;
            let d = n - alpha[i];
            let b = 1.0 / d.norm();
            beta.push(b);
            n_gamma.push(d * b);
            h_gamma.push(curvature_formula(&m0[i], &nodes[i].weingarten, &alpha[i], &grad_alpha[i], b));
        }
        Ok(InterfaceGeometry { h: h.to_vec(), grad_h, m0, alpha, grad_alpha, beta, n_gamma, h_gamma })
    }

    /// Tangent vectors `τ_i^Γ = (I - hL)τ_i + ∂_i h n` of Γ at every node.
    pub fn tangents(&self, surface: &ReferenceSurface) -> Vec<[V3; 2]> {
        let du = surface.grid.diff(&self.h, 0);
        let dv = surface.grid.diff(&self.h, 1);
        surface
            .nodes()
            .iter()
            .enumerate()
            .map(|(i, nd)| {
                let b = M3::identity() - nd.weingarten * self.h[i];
                [b * nd.frame.tau[0] + nd.frame.n * du[i], b * nd.frame.tau[1] + nd.frame.n * dv[i]]
            })
            .collect()
    }
}

/// `H_Γ = β tr(M₀(L + ∇α)) − β³ (M₀α)·∇α·α`.
pub fn curvature_formula(m0: &M3, l: &M3, alpha: &V3, grad_alpha: &M3, beta: f64) -> f64 {
    let e = (m0 * (l + grad_alpha)).trace();
    let f = (m0 * alpha).dot(&(grad_alpha * alpha));
    beta * e - beta.powi(3) * f
}

/// `DH_Γ[0]φ = (tr L² + Δ_Σ) φ` on the grid.
pub fn dh_gamma_zero(surface: &ReferenceSurface, phi: &[f64]) -> Result<Vec<f64>> {
    let lap = surface.laplace_beltrami_grid(phi)?;
    Ok(surface
        .nodes()
        .iter()
        .zip(phi)
        .zip(lap)
        .map(|((nd, &p), l)| (nd.weingarten * nd.weingarten).trace() * p + l)
        .collect())
}

/// First variations of the interface quantities in the direction φ.
#[derive(Clone, Debug)]
pub struct InterfaceVariation {
    /// `DM₀ φ = M₀ φ L M₀`
    pub dm0: Vec<M3>,
    /// `Dα φ = DM₀φ ∇_Σh + M₀ ∇_Σφ`
    pub dalpha: Vec<V3>,
    /// `∇_Σ(Dα φ)`
    pub grad_dalpha: Vec<M3>,
    /// `Dβ φ = β³ (n − α)·Dα`
    pub dbeta: Vec<f64>,
    /// `DH_Γ[h] φ = I₁ + I₂ − I₃ − I₄ − I₅`
    pub dh: Vec<f64>,
}

/// The five-term Fréchet derivative of `H_Γ` and its ingredients.
pub fn frechet_interface(surface: &ReferenceSurface, g: &InterfaceGeometry, phi: &[f64]) -> Result<InterfaceVariation> {
    surface.check_shape(phi.len())?;
    let grad_phi = surface.grad_grid(phi)?;
    let nodes = surface.nodes();
    let dm0: Vec<M3> = (0..phi.len())
        .map(|i| g.m0[i] * nodes[i].weingarten * g.m0[i] * phi[i])
        .collect();
    let dalpha: Vec<V3> = (0..phi.len())
        .map(|i| dm0[i] * g.grad_h[i] + g.m0[i] * grad_phi[i])
        .collect();
    let grad_dalpha = surface.grad_vec_grid(&dalpha)?;
    let (dbeta, dh): (Vec<f64>, Vec<f64>) = (0..phi.len())
        .into_par_iter()
        .map(|i| {
            let n = nodes[i].frame.n;
            let l = nodes[i].weingarten;
            let (m0, a, ga, b) = (g.m0[i], g.alpha[i], g.grad_alpha[i], g.beta[i]);
            let db = b.powi(3) * (n - a).dot(&dalpha[i]);
            let e = (m0 * (l + ga)).trace();
            let f = (m0 * a).dot(&(ga * a));
            let i1 = db * e;
            let i2 = b * ((dm0[i] * (l + ga)).trace() + (m0 * grad_dalpha[i]).trace());
            let i3 = 3.0 * b * b * db * f;
            let i4 = b.powi(3) * (dm0[i] * a + m0 * dalpha[i]).dot(&(ga * a));
            let i5 = b.powi(3) * (m0 * a).dot(&(grad_dalpha[i] * a + ga * dalpha[i]));
            (db, i1 + i2 - i3 - i4 - i5)
        })
        .unzip();
    Ok(InterfaceVariation { dm0, dalpha, grad_dalpha, dbeta, dh })
}

/// Independent oracle: parameterize Γ directly as `Ψ = Φ + h n`, then run
/// the generic finite-difference geometry pipeline on it.
/// Returns `(n_Γ, H_Γ)` per node.
pub fn curvature_oracle(surface: &ReferenceSurface, h: &[f64]) -> Result<Vec<(V3, f64)>> {
    surface.check_shape(h.len())?;
    let nodes = surface.nodes();
    let pts: Vec<V3> = nodes.iter().zip(h).map(|(nd, &hv)| nd.x + nd.frame.n * hv).collect();
    let orient: Vec<V3> = nodes.iter().map(|nd| nd.frame.n).collect();
    Ok(surface
        .fd_geometry(&pts, &orient)?
        .into_iter()
        .map(|g| (g.frame.n, g.mean_curvature))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_height_sphere() {
        let s = ReferenceSurface::sphere(1.0, 24, 48).unwrap();
        for &c in &[0.0, 0.05, 0.1, 0.2] {
            let h = vec![c; s.grid.len()];
            let g = InterfaceGeometry::new(&s, &h, 0.3).unwrap();
            for i in 0..h.len() {
                assert!(g.alpha[i].norm() < 1e-15);
                assert!((g.beta[i] - 1.0).abs() < 1e-15);
                assert!((g.h_gamma[i] + 2.0 / (1.0 + c)).abs() < 1e-12);
                assert!((g.n_gamma[i] - s.node(i).frame.n).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn normal_orthogonal_to_tangents() {
        let s = ReferenceSurface::sphere(1.0, 24, 48).unwrap();
        let h: Vec<f64> = s.nodes().iter().map(|n| 0.02 * n.x[2] + 0.01 * n.x[0] * n.x[1]).collect();
        let g = InterfaceGeometry::new(&s, &h, 0.3).unwrap();
        for (i, t) in g.tangents(&s).iter().enumerate() {
            assert!(g.n_gamma[i].dot(&t[0]).abs() < 1e-12);
            assert!(g.n_gamma[i].dot(&t[1]).abs() < 1e-12);
            let a2 = g.alpha[i].norm_squared();
            assert!((g.beta[i] - 1.0 / (1.0 + a2).sqrt()).abs() < 1e-12);
        }
    }
}
