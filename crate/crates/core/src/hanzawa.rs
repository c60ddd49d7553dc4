//! The Hanzawa diffeomorphism `Θ_h(x) = x + η(d(x)/ρ₀) h(Π(x)) n(Π(x))`,
//! its inverse, and the pullback coefficient fields M₀–M₄.

use std::sync::Arc;

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jet::{self, Jet};
use crate::surface::{ReferenceSurface, M3, V3};

/// `ψ(r) = exp(-1/r)` for `r > 0`, else 0.
fn psi(r: Jet) -> Jet {
    if r.v > 0.0 {
        (-r.recip()).exp()
    } else {
        Jet::cst(0.0)
    }
}

/// Smooth cut-off: 1 on `|t| <= 1/3`, 0 on `|t| >= 2/3`.
pub fn eta_jet(t: Jet) -> Jet {
    let tau = if t.v < 0.0 { -t } else { t };
    if tau.v <= 1.0 / 3.0 {
        Jet::cst(1.0)
    } else if tau.v >= 2.0 / 3.0 {
        Jet::cst(0.0)
    } else {
        let a = psi(2.0 / 3.0 - tau);
        let b = psi(tau - 1.0 / 3.0);
        a / (a + b)
    }
}

/// `max |η′|`, attained at `|t| = 1/2`. The fiber map `λ ↦ λ + η(λ/ρ₀) h`
/// is monotone, hence Θ_h injective, only while `sup|h| · 18 < ρ₀`.
pub const ETA_MAX_SLOPE: f64 = 18.0;

/// FD step of [`Hanzawa::reference`] on surfaces without closed-form
/// projection jets.
pub const REFERENCE_FD_STEP: f64 = 2.5e-4;

/// `(η, η′, η″)` at `t`.
pub fn cutoff_eta(t: f64) -> (f64, f64, f64) {
    let j = eta_jet(Jet::var(t, 0));
    (j.v, j.g[0], j.h[0][0])
}

/// A height function on the reference surface, evaluated at a surface point
/// `y` (as jets, so derivatives propagate through the projection).
pub trait HeightFn: Send + Sync {
    fn eval(&self, y: &[Jet; 3], t: f64) -> Jet;
    /// Time derivative `∂_t h`.
    fn dt(&self, y: &[Jet; 3], t: f64) -> Jet;
}

/// `h = c + rate·t`.
#[derive(Clone, Copy, Debug)]
pub struct ConstHeight {
    pub c: f64,
    pub rate: f64,
}

impl HeightFn for ConstHeight {
    fn eval(&self, _y: &[Jet; 3], t: f64) -> Jet {
        Jet::cst(self.c + self.rate * t)
    }
    fn dt(&self, _y: &[Jet; 3], _t: f64) -> Jet {
        Jet::cst(self.rate)
    }
}

/// Smooth random-looking height:
/// `h = c0 + c1·t + (a0 + a1·t) Σ_m w_m sin(k_m·(y - o) + φ_m)`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct WaveHeight {
    pub c0: f64,
    pub c1: f64,
    pub a0: f64,
    pub a1: f64,
    pub origin: [f64; 3],
    pub modes: Vec<([f64; 3], f64, f64)>,
}

impl WaveHeight {
    fn series(&self, y: &[Jet; 3]) -> Jet {
        let mut acc = Jet::cst(0.0);
        for (k, ph, w) in &self.modes {
            let arg = (y[0] - self.origin[0]) * k[0]
                + (y[1] - self.origin[1]) * k[1]
                + (y[2] - self.origin[2]) * k[2]
                + *ph;
            acc += arg.sin() * *w;
        }
        acc
    }

    /// Random smooth height with amplitude `amp` and `m` modes.
    pub fn random<R: rand::Rng>(rng: &mut R, origin: [f64; 3], c0: f64, amp: f64, m: usize, time_rates: bool) -> Self {
        let modes = (0..m)
            .map(|_| {
                let k = [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)];
                (k, rng.gen_range(0.0..std::f64::consts::TAU), rng.gen_range(-1.0..1.0) / m as f64)
            })
            .collect();
        let (c1, a1) = if time_rates {
            (rng.gen_range(-0.5..0.5) * amp.max(c0.abs()), rng.gen_range(-1.0..1.0) * amp)
        } else {
            (0.0, 0.0)
        };
        WaveHeight { c0, c1, a0: amp, a1, origin, modes }
    }
}

impl HeightFn for WaveHeight {
    fn eval(&self, y: &[Jet; 3], t: f64) -> Jet {
        self.series(y) * (self.a0 + self.a1 * t) + (self.c0 + self.c1 * t)
    }
    fn dt(&self, y: &[Jet; 3], _t: f64) -> Jet {
        self.series(y) * self.a1 + self.c1
    }
}

/// `h = ε·Y(y)` for a polynomial `Y` of the normalized position
/// `(y - o)/scale`; used for spherical-harmonic heights.
#[derive(Clone, Copy, Debug)]
pub struct HarmonicHeight {
    pub eps: f64,
    pub l: usize,
    pub origin: [f64; 3],
    pub scale: f64,
}

impl HarmonicHeight {
    /// Zonal-type polynomial of degree `l` that restricts to a spherical
    /// harmonic on the unit sphere.
    pub fn poly(l: usize, x: &[Jet; 3]) -> Jet {
        match l {
            0 => Jet::cst(1.0),
            1 => x[2],
            2 => x[0] * x[1] * 3.0 + x[2] * x[2] * 1.5 - 0.5 * jet::dot3(x, x),
            _ => x[2] * (x[2].sq() * 2.5 - jet::dot3(x, x) * 1.5) + x[0] * x[1] * x[2] * 4.0,
        }
    }
}

impl HeightFn for HarmonicHeight {
    fn eval(&self, y: &[Jet; 3], _t: f64) -> Jet {
        let x = [
            (y[0] - self.origin[0]) * (1.0 / self.scale),
            (y[1] - self.origin[1]) * (1.0 / self.scale),
            (y[2] - self.origin[2]) * (1.0 / self.scale),
        ];
        HarmonicHeight::poly(self.l, &x) * self.eps
    }
    fn dt(&self, _y: &[Jet; 3], _t: f64) -> Jet {
        Jet::cst(0.0)
    }
}

/// Linear combination `Σ c_i h_i`.
#[derive(Clone)]
pub struct HeightCombo(pub Vec<(f64, Arc<dyn HeightFn>)>);

impl HeightFn for HeightCombo {
    fn eval(&self, y: &[Jet; 3], t: f64) -> Jet {
        self.0.iter().fold(Jet::cst(0.0), |a, (c, h)| a + h.eval(y, t) * *c)
    }
    fn dt(&self, y: &[Jet; 3], t: f64) -> Jet {
        self.0.iter().fold(Jet::cst(0.0), |a, (c, h)| a + h.dt(y, t) * *c)
    }
}

/// `h + ε φ`.
pub fn perturbed(h: &Arc<dyn HeightFn>, phi: &Arc<dyn HeightFn>, eps: f64) -> Arc<dyn HeightFn> {
    Arc::new(HeightCombo(vec![(1.0, h.clone()), (eps, phi.clone())]))
}

/// Height samples on the surface grid, optionally with `∂_t h`.
#[derive(Clone, Debug)]
pub struct HeightField {
    pub surface: Arc<ReferenceSurface>,
    pub values: Vec<f64>,
    pub dt: Option<Vec<f64>>,
}

impl HeightField {
    pub fn new(surface: Arc<ReferenceSurface>, values: Vec<f64>, dt: Option<Vec<f64>>) -> Result<Self> {
        surface.check_shape(values.len())?;
        if let Some(d) = &dt {
            surface.check_shape(d.len())?;
        }
        Ok(HeightField { surface, values, dt })
    }

    pub fn zeros(surface: Arc<ReferenceSurface>) -> Self {
        let n = surface.grid.len();
        HeightField { surface, values: vec![0.0; n], dt: None }
    }

    pub fn from_fn(surface: Arc<ReferenceSurface>, h: &dyn HeightFn, t: f64) -> Self {
        let (values, dt) = surface
            .nodes()
            .iter()
            .map(|nd| {
                let y = jet::csts3(nd.x.into());
                (h.eval(&y, t).v, h.dt(&y, t).v)
            })
            .unzip();
        HeightField { surface, values, dt: Some(dt) }
    }

    pub fn sup(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Validity gate `sup|h| < δ₀ ρ₀`.
    pub fn check_gate(&self, delta0: f64) -> Result<()> {
        let limit = delta0 * self.surface.rho0;
        let sup = self.sup();
        if !(sup < limit) {
            return Err(Error::HeightTooLarge { sup, limit });
        }
        Ok(())
    }

    /// Bicubic interpolant usable as an ambient height function.
    pub fn interpolant(&self) -> Arc<dyn HeightFn> {
        Arc::new(GridHeight { field: self.clone() })
    }
}

/// Interpolated grid height, extended through the parameter map.
#[derive(Clone, Debug)]
pub struct GridHeight {
    pub field: HeightField,
}

impl HeightFn for GridHeight {
    fn eval(&self, y: &[Jet; 3], _t: f64) -> Jet {
        let s = self.field.surface.param_of_point(*y);
        self.field.surface.grid.interpolate(&self.field.values, s)
    }
    fn dt(&self, y: &[Jet; 3], _t: f64) -> Jet {
        match &self.field.dt {
            Some(d) => {
                let s = self.field.surface.param_of_point(*y);
                self.field.surface.grid.interpolate(d, s)
            }
            None => Jet::cst(0.0),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GateParams {
    pub delta0: f64,
    pub newton_tol: f64,
    pub newton_max_iter: usize,
}

impl Default for GateParams {
    fn default() -> Self {
        GateParams { delta0: 0.3, newton_tol: 1e-13, newton_max_iter: 50 }
    }
}

/// How spatial derivatives of the extended height and normal are formed.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum DerivMode {
    /// Jets through the closed-form projection.
    Analytic,
    /// Central differences of the projection with the given step.
    Fd { step: f64 },
}

/// Extended height `𝕙 = h∘Π` and extended normal `𝕟 = η(d/ρ₀) n∘Π` at a
/// point, with spatial derivatives up to second order.
#[derive(Clone, Copy, Debug)]
pub struct Extended {
    pub hh: Jet,
    pub nn: [Jet; 3],
    /// `∂_t 𝕙`
    pub hh_t: Jet,
    pub dist: f64,
}

impl Extended {
    fn zero(dist: f64) -> Self {
        Extended { hh: Jet::cst(0.0), nn: [Jet::cst(0.0); 3], hh_t: Jet::cst(0.0), dist }
    }

    /// `θ = 𝕙 𝕟` on jets.
    pub fn theta(&self) -> [Jet; 3] {
        jet::scale3(&self.nn, self.hh)
    }
}

/// Pullback coefficients and the intermediate quantities they are built
/// from, at one ambient point.
#[derive(Clone, Copy, Debug)]
pub struct PullbackCoeffs {
    pub ext: Extended,
    pub theta: [Jet; 3],
    /// `(∇θ)_ij = ∂_i θ_j`
    pub grad_theta: M3,
    /// `A = ∇Θ = I + ∇θ`
    pub a: M3,
    pub ainv: M3,
    /// `∂_k A⁻¹`
    pub d_ainv: [M3; 3],
    /// `∂_t θ`
    pub theta_t: V3,
    pub m1: M3,
    pub m2: V3,
    /// Row vector `∂_tθ (I - M₁)`
    pub m3: V3,
    pub m4: M3,
}

impl PullbackCoeffs {
    /// `∂_k A` from the second derivatives of θ.
    pub fn d_a(theta: &[Jet; 3]) -> [M3; 3] {
        let mut out = [M3::zeros(); 3];
        for (k, m) in out.iter_mut().enumerate() {
            for i in 0..3 {
                for j in 0..3 {
                    m[(i, j)] = theta[j].h[k][i];
                }
            }
        }
        out
    }
}

pub fn mat_of(m: [[f64; 3]; 3]) -> M3 {
    Matrix3::from_fn(|i, j| m[i][j])
}

/// The diffeomorphism for one height function at one time.
#[derive(Clone)]
pub struct Hanzawa {
    pub surface: Arc<ReferenceSurface>,
    pub height: Arc<dyn HeightFn>,
    pub t: f64,
    pub gate: GateParams,
    pub mode: DerivMode,
}

impl std::fmt::Debug for Hanzawa {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Hanzawa").field("t", &self.t).field("mode", &self.mode).finish()
    }
}

impl Hanzawa {
    /// Build the map; refuses heights that fail the validity gate on the
    /// surface grid.
    pub fn new(surface: Arc<ReferenceSurface>, height: Arc<dyn HeightFn>, t: f64, gate: GateParams) -> Result<Self> {
        let mode = match surface.kind {
            crate::surface::SurfaceKind::Sphere { .. } => DerivMode::Analytic,
            _ => DerivMode::Fd { step: 2e-3 },
        };
        let hz = Hanzawa { surface, height, t, gate, mode };
        HeightField::from_fn(hz.surface.clone(), hz.height.as_ref(), t).check_gate(gate.delta0)?;
        Ok(hz)
    }

    pub fn with_mode(mut self, mode: DerivMode) -> Self {
        if mode == DerivMode::Analytic && self.surface.project_jet(jet::csts3([1.0, 0.0, 0.0])).is_none() {
            return self;
        }
        self.mode = mode;
        self
    }

    /// The most accurate derivative path available for this surface:
    /// jets when the projection has a closed form, else a fine FD step.
    /// Used as the independent side of identity checks.
    pub fn reference(&self) -> Self {
        let mut h = self.clone();
        h.mode = if self.surface.project_jet(jet::csts3(self.surface.node(0).x.into())).is_some() {
            DerivMode::Analytic
        } else {
            DerivMode::Fd { step: REFERENCE_FD_STEP }
        };
        h
    }

    pub fn at_time(&self, t: f64) -> Result<Self> {
        let mut h = Hanzawa::new(self.surface.clone(), self.height.clone(), t, self.gate)?;
        h.mode = self.mode;
        Ok(h)
    }

    pub fn with_height(&self, height: Arc<dyn HeightFn>) -> Result<Self> {
        let mut h = Hanzawa::new(self.surface.clone(), height, self.t, self.gate)?;
        h.mode = self.mode;
        Ok(h)
    }

    /// `1 - sup|h|·max|η′|/ρ₀`; positive exactly when every normal fiber
    /// is mapped monotonically.
    pub fn fiber_margin(&self) -> f64 {
        let sup = HeightField::from_fn(self.surface.clone(), self.height.as_ref(), self.t).sup();
        1.0 - sup * ETA_MAX_SLOPE / self.surface.rho0
    }

    /// h at the surface point with parameter `s`.
    pub fn h_at(&self, s: [f64; 2]) -> f64 {
        self.height.eval(&jet::csts3(self.surface.point(s).into()), self.t).v
    }

    pub fn h_dt_at(&self, s: [f64; 2]) -> f64 {
        self.height.dt(&jet::csts3(self.surface.point(s).into()), self.t).v
    }

    fn ext_values(&self, x: V3) -> (f64, V3, f64, f64) {
        match self.surface.project(x) {
            Ok(p) => {
                let e = eta_jet(Jet::cst(p.dist / self.surface.rho0)).v;
                if e == 0.0 {
                    return (0.0, V3::zeros(), 0.0, p.dist);
                }
                let y = jet::csts3(p.point.into());
                (self.height.eval(&y, self.t).v, p.normal * e, self.height.dt(&y, self.t).v, p.dist)
            }
            Err(_) => (0.0, V3::zeros(), 0.0, f64::INFINITY),
        }
    }

    /// Extended height and normal with spatial derivatives.
    pub fn extended(&self, x: V3) -> Extended {
        match self.mode {
            DerivMode::Analytic => {
                let xj = Jet::vars(x.into());
                match self.surface.project_jet(xj) {
                    Some(p) if p.dist.v.abs() < self.surface.rho0 * (2.0 / 3.0) => {
                        let e = eta_jet(p.dist * (1.0 / self.surface.rho0));
                        let ext = Extended {
                            hh: self.height.eval(&p.point, self.t),
                            nn: jet::scale3(&p.normal, e),
                            hh_t: self.height.dt(&p.point, self.t),
                            dist: p.dist.v,
                        };
                        // grid heights have no jet on the polar axis
                        if ext.hh.is_finite() && ext.hh_t.is_finite() {
                            ext
                        } else {
                            self.extended_fd(x, 2e-3)
                        }
                    }
                    Some(p) => Extended::zero(p.dist.v),
                    None => self.extended_fd(x, 2e-3),
                }
            }
            DerivMode::Fd { step } => self.extended_fd(x, step),
        }
    }

    fn extended_fd(&self, x: V3, d: f64) -> Extended {
        let mut sh = [[[0.0; 3]; 3]; 3];
        let mut sn = [[[[0.0; 3]; 3]; 3]; 3];
        let mut st = [[[0.0; 3]; 3]; 3];
        let mut dist = 0.0;
        for a in 0..3 {
            for b in 0..3 {
                for c in 0..3 {
                    let off = V3::new(a as f64 - 1.0, b as f64 - 1.0, c as f64 - 1.0) * d;
                    let (h, n, ht, dd) = self.ext_values(x + off);
                    sh[a][b][c] = h;
                    st[a][b][c] = ht;
                    for i in 0..3 {
                        sn[i][a][b][c] = n[i];
                    }
                    if a == 1 && b == 1 && c == 1 {
                        dist = dd;
                    }
                }
            }
        }
        Extended {
            hh: jet::jet_from_stencil(&sh, d),
            nn: [
                jet::jet_from_stencil(&sn[0], d),
                jet::jet_from_stencil(&sn[1], d),
                jet::jet_from_stencil(&sn[2], d),
            ],
            hh_t: jet::jet_from_stencil(&st, d),
            dist,
        }
    }

    /// Θ on jets (value and derivatives of `x + θ(x)`).
    pub fn map_jet(&self, x: V3) -> [Jet; 3] {
        let th = self.extended(x).theta();
        let xs = Jet::vars(x.into());
        jet::add3(&xs, &th)
    }

    /// `θ_h(x)`
    pub fn theta_displacement(&self, x: V3) -> V3 {
        let (h, n, _, _) = self.ext_values(x);
        n * h
    }

    /// `Θ_h(x)`
    pub fn hanzawa_map(&self, x: V3) -> V3 {
        x + self.theta_displacement(x)
    }

    /// `Θ_h⁻¹(y)` by damped Newton along the normal fiber through `Π(y)`.
    pub fn hanzawa_inverse(&self, y: V3) -> Result<V3> {
        let p = match self.surface.project(y) {
            Ok(p) => p,
            Err(_) => return Ok(y),
        };
        let rho0 = self.surface.rho0;
        let hp = self.height.eval(&jet::csts3(p.point.into()), self.t).v;
        let mu = p.dist;
        let g = |lam: f64| -> (f64, f64) {
            let (e, de, _) = cutoff_eta(lam / rho0);
            (lam + e * hp - mu, 1.0 + de * hp / rho0)
        };
        let mut lam = mu - hp;
        let mut trace = Vec::new();
        for _ in 0..self.gate.newton_max_iter {
            let (r, dr) = g(lam);
            trace.push(r.abs());
            if r.abs() <= self.gate.newton_tol {
                return Ok(p.point + p.normal * lam);
            }
            let step = r / dr;
            let mut damp = 1.0;
            let mut next = lam - step;
            while g(next).0.abs() > r.abs() && damp > 1e-6 {
                damp *= 0.5;
                next = lam - damp * step;
            }
            lam = next;
        }
        let (r, _) = g(lam);
        if r.abs() <= 10.0 * self.gate.newton_tol {
            return Ok(p.point + p.normal * lam);
        }
        trace.push(r.abs());
        Err(Error::Newton { iters: self.gate.newton_max_iter, trace })
    }

    /// `∇θ` with `(∇θ)_ij = ∂_i θ_j`.
    pub fn grad_theta(&self, x: V3) -> M3 {
        mat_of(jet::grad_of(&self.extended(x).theta()))
    }

    /// M₁–M₄ and their ingredients at `x`.
    pub fn coeffs(&self, x: V3) -> Result<PullbackCoeffs> {
        let ext = self.extended(x);
        let theta = ext.theta();
        let grad_theta = mat_of(jet::grad_of(&theta));
        let a = M3::identity() + grad_theta;
        let ainv = a
            .try_inverse()
            .ok_or_else(|| Error::Geometry("∇Θ is singular".into()))?;
        let da = PullbackCoeffs::d_a(&theta);
        let d_ainv = [-ainv * da[0] * ainv, -ainv * da[1] * ainv, -ainv * da[2] * ainv];
        let mut m2 = V3::zeros();
        for k in 0..3 {
            for i in 0..3 {
                for j in 0..3 {
                    m2[k] += ainv[(i, j)] * d_ainv[j][(i, k)];
                }
            }
        }
        let theta_t = V3::new(ext.nn[0].v, ext.nn[1].v, ext.nn[2].v) * ext.hh_t.v;
        let m1 = ainv * grad_theta;
        let m3 = (theta_t.transpose() * (M3::identity() - m1)).transpose();
        let m4 = ainv.transpose() * ainv - M3::identity();
        Ok(PullbackCoeffs { ext, theta, grad_theta, a, ainv, d_ainv, theta_t, m1, m2, m3, m4 })
    }

    pub fn m1(&self, x: V3) -> Result<M3> {
        Ok(self.coeffs(x)?.m1)
    }
    pub fn m2(&self, x: V3) -> Result<V3> {
        Ok(self.coeffs(x)?.m2)
    }
    pub fn m3(&self, x: V3) -> Result<V3> {
        Ok(self.coeffs(x)?.m3)
    }
    pub fn m4(&self, x: V3) -> Result<M3> {
        Ok(self.coeffs(x)?.m4)
    }

    /// `M₀ = (I - h L)⁻¹` at the parameter `s`.
    pub fn m0(&self, s: [f64; 2]) -> Result<M3> {
        let l = self.surface.weingarten(s)?;
        m0_from(self.h_at(s), &l)
    }
}

/// `(I - hL)⁻¹` through the adjugate and determinant, gated on
/// `|det| >= 1/2`.
pub fn m0_from(h: f64, l: &M3) -> Result<M3> {
    let b = M3::identity() - l * h;
    let det = b.determinant();
    if det.abs() < 0.5 {
        return Err(Error::Gate(det));
    }
    Ok(adjugate(&b) / det)
}

pub fn adjugate(m: &M3) -> M3 {
    let c = |r0: usize, r1: usize, c0: usize, c1: usize| m[(r0, c0)] * m[(r1, c1)] - m[(r0, c1)] * m[(r1, c0)];
    Matrix3::new(
        c(1, 2, 1, 2),
        -c(0, 2, 1, 2),
        c(0, 1, 1, 2),
        -c(1, 2, 0, 2),
        c(0, 2, 0, 2),
        -c(0, 1, 0, 2),
        c(1, 2, 0, 1),
        -c(0, 2, 0, 1),
        c(0, 1, 0, 1),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::surface::rng;
    use rand::Rng;

    fn sphere() -> Arc<ReferenceSurface> {
        Arc::new(ReferenceSurface::sphere(1.0, 16, 32).unwrap())
    }

    fn konst(c: f64) -> Arc<dyn HeightFn> {
        Arc::new(ConstHeight { c, rate: 0.0 })
    }

    #[test]
    fn eta_plateaus() {
        assert_eq!(cutoff_eta(0.0).0, 1.0);
        assert_eq!(cutoff_eta(1.0).0, 0.0);
        assert!((cutoff_eta(0.5).0 - 0.5).abs() < 1e-15);
        assert!((cutoff_eta(-0.5).0 - 0.5).abs() < 1e-15);
        for i in 0..200 {
            let t = -1.0 + i as f64 / 100.0;
            let (v, d, _) = cutoff_eta(t);
            assert!((0.0..=1.0).contains(&v));
            let fd = (cutoff_eta(t + 1e-6).0 - cutoff_eta(t - 1e-6).0) / 2e-6;
            assert!((fd - d).abs() < 1e-5);
        }
    }

    #[test]
    fn map_examples() {
        let hz = Hanzawa::new(sphere(), konst(0.05), 0.0, GateParams::default()).unwrap();
        let y = hz.hanzawa_map(V3::new(1.0, 0.0, 0.0));
        assert!((y - V3::new(1.05, 0.0, 0.0)).norm() < 1e-15);
        let x = hz.hanzawa_inverse(V3::new(1.05, 0.0, 0.0)).unwrap();
        assert!((x - V3::new(1.0, 0.0, 0.0)).norm() < 1e-12);
        // d/rho0 = 0.8 lies beyond the cut-off support
        let far = V3::new(1.0 + 0.8 * 0.9, 0.0, 0.0);
        assert_eq!(hz.hanzawa_map(far), far);
        let z = Hanzawa::new(sphere(), konst(0.0), 0.0, GateParams::default()).unwrap();
        assert_eq!(z.hanzawa_map(V3::new(0.3, 1.0, 0.1)), V3::new(0.3, 1.0, 0.1));
    }

    #[test]
    fn gate_refuses_large_height() {
        let e = Hanzawa::new(sphere(), konst(0.3), 0.0, GateParams::default()).unwrap_err();
        assert!(matches!(e, Error::HeightTooLarge { .. }));
    }

    #[test]
    fn m0_concentric() {
        let hz = Hanzawa::new(sphere(), konst(0.1), 0.0, GateParams::default()).unwrap();
        let s = [0.8, 2.0];
        let n = hz.surface.normal(s);
        let nn = n * n.transpose();
        let want = nn + (M3::identity() - nn) / 1.1;
        assert!((hz.m0(s).unwrap() - want).norm() < 1e-14);
    }

    #[test]
    fn grad_theta_matches_differences() {
        let s = sphere();
        let mut r = rng(5);
        for _ in 0..100 {
            let h: Arc<dyn HeightFn> = Arc::new(WaveHeight::random(&mut r, [0.0; 3], 0.02, 0.05, 3, false));
            let hz = Hanzawa::new(s.clone(), h, 0.0, GateParams::default()).unwrap();
            let x = s.random_tube_point(&mut r, 0.9);
            let g = hz.grad_theta(x);
            let d = 1e-5;
            let mut fd = M3::zeros();
            for i in 0..3 {
                let mut e = V3::zeros();
                e[i] = d;
                let col = (hz.theta_displacement(x + e) - hz.theta_displacement(x - e)) / (2.0 * d);
                for j in 0..3 {
                    fd[(i, j)] = col[j];
                }
            }
            assert!((g - fd).norm() <= 1e-6 * g.norm().max(1e-3), "{g} vs {fd}");
        }
    }

    #[test]
    fn inverse_round_trip() {
        for surf in [
            sphere(),
            Arc::new(ReferenceSurface::torus(2.0, 0.5, 16, 32).unwrap()),
            Arc::new(ReferenceSurface::ellipsoid(1.2, 1.0, 0.9, 16, 32).unwrap()),
        ] {
            let mut r = rng(8);
            let c = surf.center.into();
            for _ in 0..200 {
                let amp = 0.04 * surf.rho0;
                let h: Arc<dyn HeightFn> = Arc::new(WaveHeight::random(&mut r, c, 0.0, amp, 3, false));
                let hz = Hanzawa::new(surf.clone(), h, 0.0, GateParams::default()).unwrap();
                let frac = r.gen_range(0.01..1.0);
                let x = surf.random_tube_point(&mut r, frac);
                let back = hz.hanzawa_inverse(hz.hanzawa_map(x)).unwrap();
                assert!((back - x).norm() <= 1e-9, "{:?} {} {}", surf.kind, (back - x).norm(), surf.project(x).unwrap().dist / surf.rho0);
            }
        }
    }
}
