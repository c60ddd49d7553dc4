//! The transformed two-phase MHD system on the fixed reference geometry:
//! linear parts L₁–L₅, nonlinear right-hand sides G₁–G₅, the surface terms
//! 𝒢₁–𝒢₃, the pullback identity checkers, and the Fréchet-derivative
//! catalogue with its central-difference verifier.
//!
//! Orientation: `(∇f)_ij = ∂_i f_j`; a row vector times `∇u` is written as
//! `(∇u)ᵀ v` on columns.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{
    sample_vector, JumpScalar, JumpVector, PullbackVector, SampledScalar, SampledVector, ScalarSample, Side, VecSample,
    VectorField,
};
use crate::hanzawa::{mat_of, DerivMode, GateParams, Hanzawa, HeightCombo, HeightField, HeightFn, PullbackCoeffs};
use crate::interface_geometry::{frechet_interface, InterfaceGeometry};
use crate::jet::{self, Jet};
use crate::surface::{ReferenceSurface, M3, V3};

/// Viscosities (`nu_plus` inside, `nu_minus` outside), magnetic
/// diffusivity and surface tension.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FluidParams {
    pub nu_plus: f64,
    pub nu_minus: f64,
    pub sigma: f64,
    pub kappa: f64,
}

impl Default for FluidParams {
    fn default() -> Self {
        FluidParams { nu_plus: 1.0, nu_minus: 0.5, sigma: 0.1, kappa: 1.0 }
    }
}

impl FluidParams {
    pub fn new(nu_plus: f64, nu_minus: f64, sigma: f64, kappa: f64) -> Result<Self> {
        let p = FluidParams { nu_plus, nu_minus, sigma, kappa };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("nu_plus", self.nu_plus), ("nu_minus", self.nu_minus), ("sigma", self.sigma), ("kappa", self.kappa)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Param(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }

    pub fn nu(&self, side: Side) -> f64 {
        match side {
            Side::Inner => self.nu_plus,
            Side::Outer => self.nu_minus,
        }
    }
}

/// `z = (ū, B̄, p̄, ϖ, h)` on the fixed geometry. Surface scalars (ϖ, h) are
/// functions of the surface point, extended through the projection.
#[derive(Clone)]
pub struct State {
    pub t: f64,
    pub u: JumpVector,
    pub b: Arc<dyn SampledVector>,
    pub p: JumpScalar,
    pub varpi: Arc<dyn HeightFn>,
    pub h: Arc<dyn HeightFn>,
}

/// `φ = (φ_u, φ_B, φ_p, φ_ϖ, φ_h)`.
#[derive(Clone)]
pub struct Direction {
    pub u: JumpVector,
    pub b: Arc<dyn SampledVector>,
    pub p: JumpScalar,
    pub varpi: Arc<dyn HeightFn>,
    pub h: Arc<dyn HeightFn>,
}

impl State {
    /// `z + ε φ`.
    pub fn perturbed(&self, phi: &Direction, eps: f64) -> State {
        State {
            t: self.t,
            u: self.u.combine(&phi.u, eps),
            b: crate::fields::combine_vector(&self.b, &phi.b, eps),
            p: self.p.combine(&phi.p, eps),
            varpi: Arc::new(HeightCombo(vec![(1.0, self.varpi.clone()), (eps, phi.varpi.clone())])),
            h: Arc::new(HeightCombo(vec![(1.0, self.h.clone()), (eps, phi.h.clone())])),
        }
    }
}

/// Offsets along ±n for one-sided traces.
pub const TRACE_OFFSETS: [f64; 2] = [1e-4, 5e-5];

/// One-sided trace `lim f(x0 ± δ n)` by Richardson extrapolation
/// `2 f(δ/2) − f(δ)`.
pub fn trace_vector(f: &dyn SampledVector, t: f64, x0: V3, n: V3, side: Side) -> VecSample {
    let sgn = if side == Side::Outer { 1.0 } else { -1.0 };
    let a = f.sample(t, x0 + n * (sgn * TRACE_OFFSETS[0]));
    let b = f.sample(t, x0 + n * (sgn * TRACE_OFFSETS[1]));
    b.axpy(1.0, &b).axpy(-1.0, &a)
}

pub fn trace_scalar(f: &dyn SampledScalar, t: f64, x0: V3, n: V3, side: Side) -> ScalarSample {
    let sgn = if side == Side::Outer { 1.0 } else { -1.0 };
    let a = f.sample(t, x0 + n * (sgn * TRACE_OFFSETS[0]));
    let b = f.sample(t, x0 + n * (sgn * TRACE_OFFSETS[1]));
    b.axpy(1.0, &b).axpy(-1.0, &a)
}

/// `⟦f⟧(Φ(s))`: outer (+n side) trace minus inner trace.
pub fn jump_vector(surface: &ReferenceSurface, f: &JumpVector, t: f64, s: [f64; 2]) -> Result<V3> {
    let x = surface.surface_point(s)?;
    let n = surface.normal(s);
    Ok(trace_vector(f.outer.as_ref(), t, x, n, Side::Outer).v - trace_vector(f.inner.as_ref(), t, x, n, Side::Inner).v)
}

pub fn jump_scalar(surface: &ReferenceSurface, f: &JumpScalar, t: f64, s: [f64; 2]) -> Result<f64> {
    let x = surface.surface_point(s)?;
    let n = surface.normal(s);
    Ok(trace_scalar(f.outer.as_ref(), t, x, n, Side::Outer).v - trace_scalar(f.inner.as_ref(), t, x, n, Side::Inner).v)
}

/// ϖ defined as `⟦p̄⟧` on Σ, which equals the jump of the physical pressure
/// across Γ at `Φ(s) + h n`.
pub struct JumpOfPressure {
    pub surface: Arc<ReferenceSurface>,
    pub p: JumpScalar,
}

impl HeightFn for JumpOfPressure {
    fn eval(&self, y: &[Jet; 3], t: f64) -> Jet {
        let yv = V3::from(jet::values3(y));
        match self.surface.project(yv) {
            Ok(pr) => {
                let o = trace_scalar(self.p.outer.as_ref(), t, pr.point, pr.normal, Side::Outer).v;
                let i = trace_scalar(self.p.inner.as_ref(), t, pr.point, pr.normal, Side::Inner).v;
                Jet::cst(o - i)
            }
            Err(_) => Jet::cst(0.0),
        }
    }
    fn dt(&self, _y: &[Jet; 3], _t: f64) -> Jet {
        Jet::cst(0.0)
    }
}

fn row_times(m: &M3, v: &V3) -> V3 {
    m.transpose() * v
}

fn contract(a: &M3, b: &M3) -> f64 {
    a.component_mul(b).sum()
}

/// Everything G₁–G₃ need at one ambient point. Also used for variations,
/// where the fields hold `φ` samples and the coefficients hold `DMᵢ φ_h`.
#[derive(Clone, Copy, Debug)]
pub struct Local {
    pub u: VecSample,
    pub b: VecSample,
    pub p: ScalarSample,
    pub m1: M3,
    pub m2: V3,
    pub m3: V3,
    pub m4: M3,
}

impl Local {
    pub fn axpy(&self, c: f64, o: &Local) -> Local {
        Local {
            u: self.u.axpy(c, &o.u),
            b: self.b.axpy(c, &o.b),
            p: self.p.axpy(c, &o.p),
            m1: self.m1 + o.m1 * c,
            m2: self.m2 + o.m2 * c,
            m3: self.m3 + o.m3 * c,
            m4: self.m4 + o.m4 * c,
        }
    }
}

/// A named right-hand-side term and whether it carries a factor that
/// vanishes at `h ≡ 0`.
#[derive(Clone, Copy, Debug)]
pub struct Term<T> {
    pub name: &'static str,
    pub h_factor: bool,
    pub value: T,
}

fn t<T>(name: &'static str, h_factor: bool, value: T) -> Term<T> {
    Term { name, h_factor, value }
}

pub fn sum_terms(ts: &[Term<V3>]) -> V3 {
    ts.iter().fold(V3::zeros(), |a, t| a + t.value)
}

/// The ten terms of G₁.
pub fn g1_terms(l: &Local, nu: f64) -> [Term<V3>; 10] {
    let (u, b) = (&l.u, &l.b);
    [
        t("-1/2 grad|B|^2", false, -(b.grad * b.v)),
        t("-u grad u", false, -row_times(&u.grad, &u.v)),
        t("B grad B", false, row_times(&b.grad, &b.v)),
        t("M3 grad u", true, row_times(&u.grad, &l.m3)),
        t("u M1 grad u", true, row_times(&(l.m1 * u.grad), &u.v)),
        t("-B M1 grad B", true, -row_times(&(l.m1 * b.grad), &b.v)),
        t("1/2 M1 grad|B|^2", true, l.m1 * (b.grad * b.v)),
        t("M1 grad p", true, l.m1 * l.p.grad),
        t("nu M4:hess u", true, V3::from_fn(|j, _| contract(&l.m4, &u.hess[j])) * nu),
        t("nu M2.grad u", true, row_times(&u.grad, &l.m2) * nu),
    ]
}

/// Product-rule derivative of [`g1_terms`]; `d` holds the direction samples
/// and the coefficient variations.
pub fn dg1_terms(l: &Local, d: &Local, nu: f64) -> [V3; 10] {
    let (u, b) = (&l.u, &l.b);
    let (du, db) = (&d.u, &d.b);
    [
        -(db.grad * b.v) - b.grad * db.v,
        -row_times(&du.grad, &u.v) - row_times(&u.grad, &du.v),
        row_times(&db.grad, &b.v) + row_times(&b.grad, &db.v),
        row_times(&du.grad, &l.m3) + row_times(&u.grad, &d.m3),
        row_times(&(d.m1 * u.grad + l.m1 * du.grad), &u.v) + row_times(&(l.m1 * u.grad), &du.v),
        -row_times(&(d.m1 * b.grad + l.m1 * db.grad), &b.v) - row_times(&(l.m1 * b.grad), &db.v),
        d.m1 * (b.grad * b.v) + l.m1 * (db.grad * b.v + b.grad * db.v),
        d.m1 * l.p.grad + l.m1 * d.p.grad,
        V3::from_fn(|j, _| contract(&d.m4, &u.hess[j]) + contract(&l.m4, &du.hess[j])) * nu,
        (row_times(&du.grad, &l.m2) + row_times(&u.grad, &d.m2)) * nu,
    ]
}

/// The seven terms of G₂.
pub fn g2_terms(l: &Local, sigma: f64) -> [Term<V3>; 7] {
    let (u, b) = (&l.u, &l.b);
    [
        t("-u grad B", false, -row_times(&b.grad, &u.v)),
        t("B grad u", false, row_times(&u.grad, &b.v)),
        t("u M1 grad B", true, row_times(&(l.m1 * b.grad), &u.v)),
        t("-B M1 grad u", true, -row_times(&(l.m1 * u.grad), &b.v)),
        t("M3 grad B", true, row_times(&b.grad, &l.m3)),
        t("sigma M4:hess B", true, V3::from_fn(|j, _| contract(&l.m4, &b.hess[j])) * sigma),
        t("sigma M2.grad B", true, row_times(&b.grad, &l.m2) * sigma),
    ]
}

pub fn dg2_terms(l: &Local, d: &Local, sigma: f64) -> [V3; 7] {
    let (u, b) = (&l.u, &l.b);
    let (du, db) = (&d.u, &d.b);
    [
        -row_times(&db.grad, &u.v) - row_times(&b.grad, &du.v),
        row_times(&du.grad, &b.v) + row_times(&u.grad, &db.v),
        row_times(&(d.m1 * b.grad + l.m1 * db.grad), &u.v) + row_times(&(l.m1 * b.grad), &du.v),
        -row_times(&(d.m1 * u.grad + l.m1 * du.grad), &b.v) - row_times(&(l.m1 * u.grad), &db.v),
        row_times(&db.grad, &l.m3) + row_times(&b.grad, &d.m3),
        V3::from_fn(|j, _| contract(&d.m4, &b.hess[j]) + contract(&l.m4, &db.hess[j])) * sigma,
        (row_times(&db.grad, &l.m2) + row_times(&b.grad, &d.m2)) * sigma,
    ]
}

/// `G₃ = tr(M₁ ∇ū)`, so that `div ū = G₃` is `(div u)∘Θ = 0`.
pub fn g3_value(l: &Local) -> f64 {
    (l.m1 * l.u.grad).trace()
}

pub fn dg3_value(l: &Local, d: &Local) -> f64 {
    (d.m1 * l.u.grad + l.m1 * d.u.grad).trace()
}

/// Variations of A⁻¹ and M₁–M₄ in the direction `ψ = φ_h 𝕟`.
#[derive(Clone, Copy, Debug)]
pub struct CoeffVariation {
    pub dainv: M3,
    pub dm1: M3,
    pub dm2: V3,
    pub dm3: V3,
    pub dm4: M3,
}

/// `DA⁻¹ = −A⁻¹ G A⁻¹` with `G = ∇ψ`; `DM₁ = A⁻¹ G A⁻¹`;
/// `DM₂` by the product rule on `Σ A⁻¹_ij (∂_j A⁻¹)_ik`;
/// `DM₃ = ∂_tψ A⁻¹ + ∂_tθ DA⁻¹`; `DM₄ = DA⁻ᵀ A⁻¹ + A⁻ᵀ DA⁻¹`.
pub fn coeff_variation(c: &PullbackCoeffs, psi: &[Jet; 3], psi_t: V3) -> CoeffVariation {
    let g = mat_of(jet::grad_of(psi));
    let ai = c.ainv;
    let dainv = -ai * g * ai;
    let dg = PullbackCoeffs::d_a(psi);
    let mut dm2 = V3::zeros();
    for j in 0..3 {
        let d_j_dainv = -c.d_ainv[j] * g * ai - ai * dg[j] * ai - ai * g * c.d_ainv[j];
        for k in 0..3 {
            for i in 0..3 {
                dm2[k] += dainv[(i, j)] * c.d_ainv[j][(i, k)] + ai[(i, j)] * d_j_dainv[(i, k)];
            }
        }
    }
    CoeffVariation {
        dainv,
        dm1: -dainv,
        dm2,
        dm3: row_times(&ai, &psi_t) + row_times(&dainv, &c.theta_t),
        dm4: dainv.transpose() * ai + ai.transpose() * dainv,
    }
}

/// Pointwise inputs of the surface terms at one node.
#[derive(Clone, Copy, Debug)]
pub struct SurfLocal {
    pub n: V3,
    pub proj: M3,
    pub alpha: V3,
    pub m1: M3,
    pub grad_in: M3,
    pub grad_out: M3,
    pub nu_in: f64,
    pub nu_out: f64,
}

impl SurfLocal {
    fn stress(&self, w_in: &M3, w_out: &M3) -> M3 {
        (w_out + w_out.transpose()) * self.nu_out - (w_in + w_in.transpose()) * self.nu_in
    }

    /// `S = ⟦ν(W + Wᵀ)⟧` with `W = (I − M₁)∇ū` and `T` likewise with `M₁∇ū`.
    pub fn s_t(&self) -> (M3, M3) {
        let a = M3::identity() - self.m1;
        (self.stress(&(a * self.grad_in), &(a * self.grad_out)), self.stress(&(self.m1 * self.grad_in), &(self.m1 * self.grad_out)))
    }

    /// Variations of S and T for `δM₁`, `δ∇ū_in`, `δ∇ū_out`.
    pub fn ds_dt(&self, dm1: &M3, dgi: &M3, dgo: &M3) -> (M3, M3) {
        let a = M3::identity() - self.m1;
        let dwi = -dm1 * self.grad_in + a * dgi;
        let dwo = -dm1 * self.grad_out + a * dgo;
        let dvi = dm1 * self.grad_in + self.m1 * dgi;
        let dvo = dm1 * self.grad_out + self.m1 * dgo;
        (self.stress(&dwi, &dwo), self.stress(&dvi, &dvo))
    }

    /// `𝒢₁ = −(Sα)·n − (Tn)·n`.
    pub fn cal_g1(&self) -> f64 {
        let (s, tt) = self.s_t();
        -(s * self.alpha).dot(&self.n) - (tt * self.n).dot(&self.n)
    }

    /// `𝒢₃ = −[P Sα + P Tn − ((S(n − α))·n) α]`.
    pub fn cal_g3(&self) -> V3 {
        let (s, tt) = self.s_t();
        -(self.proj * (s * self.alpha) + self.proj * (tt * self.n) - self.alpha * (s * (self.n - self.alpha)).dot(&self.n))
    }

    pub fn dcal_g1(&self, dalpha: &V3, dm1: &M3, dgi: &M3, dgo: &M3) -> f64 {
        let (s, _) = self.s_t();
        let (ds, dt) = self.ds_dt(dm1, dgi, dgo);
        -(ds * self.alpha + s * dalpha).dot(&self.n) - (dt * self.n).dot(&self.n)
    }

    pub fn dcal_g3(&self, dalpha: &V3, dm1: &M3, dgi: &M3, dgo: &M3) -> V3 {
        let (s, _) = self.s_t();
        let (ds, dt) = self.ds_dt(dm1, dgi, dgo);
        let na = self.n - self.alpha;
        let c = (s * na).dot(&self.n);
        let dc = (ds * na - s * dalpha).dot(&self.n);
        -(self.proj * (ds * self.alpha + s * dalpha) + self.proj * (dt * self.n) - dalpha * c - self.alpha * dc)
    }
}

/// Which operator of the catalogue.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum OpId {
    M0,
    M1,
    M2,
    M3,
    M4,
    Alpha,
    Beta,
    H,
    CalG1,
    CalG2,
    CalG3,
    G1,
    G2,
    G3,
    G4,
    G5,
}

impl OpId {
    pub const ALL: [OpId; 16] = [
        OpId::M0,
        OpId::M1,
        OpId::M2,
        OpId::M3,
        OpId::M4,
        OpId::Alpha,
        OpId::Beta,
        OpId::H,
        OpId::CalG1,
        OpId::CalG2,
        OpId::CalG3,
        OpId::G1,
        OpId::G2,
        OpId::G3,
        OpId::G4,
        OpId::G5,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            OpId::M0 => "DM0",
            OpId::M1 => "DM1",
            OpId::M2 => "DM2",
            OpId::M3 => "DM3",
            OpId::M4 => "DM4",
            OpId::Alpha => "Dalpha",
            OpId::Beta => "Dbeta",
            OpId::H => "DH_Gamma",
            OpId::CalG1 => "DcalG1",
            OpId::CalG2 => "DcalG2",
            OpId::CalG3 => "DcalG3",
            OpId::G1 => "DG1",
            OpId::G2 => "DG2",
            OpId::G3 => "DG3",
            OpId::G4 => "DG4",
            OpId::G5 => "DG5",
        }
    }

    /// Ambient operators are evaluated at points of Ω, the rest at grid nodes.
    pub fn ambient(&self) -> bool {
        matches!(self, OpId::M1 | OpId::M2 | OpId::M3 | OpId::M4 | OpId::G1 | OpId::G2 | OpId::G3)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Point {
    Ambient(V3),
    Node(usize),
}

/// Result of a central-difference ladder.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FrechetReport {
    pub op: OpId,
    pub eps: Vec<f64>,
    pub rel_err: Vec<f64>,
    /// Order between consecutive ladder points that lie above the noise
    /// floor; `None` if the difference quotient is exact to rounding.
    pub observed_order: Option<f64>,
    pub derivative_norm: f64,
}

impl FrechetReport {
    pub fn err_at(&self, eps: f64) -> Option<f64> {
        self.eps.iter().position(|e| (e - eps).abs() <= 1e-15).map(|i| self.rel_err[i])
    }
}

pub const DEFAULT_LADDER: [f64; 3] = [1e-2, 1e-3, 1e-4];

/// Residual of one pullback identity.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct IdentityResidual {
    pub residual: f64,
    /// Magnitude of the left-hand side, for relative reporting.
    pub scale: f64,
    /// Set when the FD path was used and the residual exceeds what its step
    /// should deliver.
    pub fd_warning: bool,
}

/// Derived surface data for one state: the map, the interface geometry on
/// the grid and `Δ_Σ h`.
pub struct SurfaceState {
    pub hz: Hanzawa,
    pub ig: InterfaceGeometry,
    pub h: Vec<f64>,
    pub h_t: Vec<f64>,
    pub lap_h: Vec<f64>,
}

/// Evaluation context: the fixed geometry, material constants, gate,
/// derivative mode and the auxiliary tangential field `b`.
#[derive(Clone)]
pub struct Transformed {
    pub surface: Arc<ReferenceSurface>,
    pub params: FluidParams,
    pub gate: GateParams,
    pub mode: Option<DerivMode>,
    pub aux_b: Option<Arc<dyn SampledVector>>,
}

impl Transformed {
    pub fn new(surface: Arc<ReferenceSurface>, params: FluidParams) -> Self {
        Transformed { surface, params, gate: GateParams::default(), mode: None, aux_b: None }
    }

    pub fn hanzawa(&self, h: &Arc<dyn HeightFn>, t: f64) -> Result<Hanzawa> {
        let hz = Hanzawa::new(self.surface.clone(), h.clone(), t, self.gate)?;
        Ok(match self.mode {
            Some(m) => hz.with_mode(m),
            None => hz,
        })
    }

    /// Side of Σ containing `x`; points on Σ are rejected for jump-aware
    /// inputs.
    pub fn side(&self, x: V3) -> Result<Side> {
        let d = match self.surface.project(x) {
            Ok(p) => p.dist,
            Err(Error::Projection { dist, .. }) => dist,
            Err(e) => return Err(e),
        };
        if d.abs() < 1e-10 {
            Err(Error::OnInterface)
        } else if d < 0.0 {
            Ok(Side::Inner)
        } else {
            Ok(Side::Outer)
        }
    }

    pub fn local(&self, z: &State, hz: &Hanzawa, x: V3) -> Result<(Side, Local, PullbackCoeffs)> {
        let side = self.side(x)?;
        let c = hz.coeffs(x)?;
        let l = Local {
            u: z.u.branch(side).sample(z.t, x),
            b: z.b.sample(z.t, x),
            p: z.p.branch(side).sample(z.t, x),
            m1: c.m1,
            m2: c.m2,
            m3: c.m3,
            m4: c.m4,
        };
        Ok((side, l, c))
    }

    pub fn g1_terms_at(&self, z: &State, x: V3) -> Result<[Term<V3>; 10]> {
        let hz = self.hanzawa(&z.h, z.t)?;
        let (side, l, _) = self.local(z, &hz, x)?;
        Ok(g1_terms(&l, self.params.nu(side)))
    }

    pub fn g2_terms_at(&self, z: &State, x: V3) -> Result<[Term<V3>; 7]> {
        let hz = self.hanzawa(&z.h, z.t)?;
        let (_, l, _) = self.local(z, &hz, x)?;
        Ok(g2_terms(&l, self.params.sigma))
    }

    pub fn g1(&self, z: &State, x: V3) -> Result<V3> {
        Ok(sum_terms(&self.g1_terms_at(z, x)?))
    }

    pub fn g2(&self, z: &State, x: V3) -> Result<V3> {
        Ok(sum_terms(&self.g2_terms_at(z, x)?))
    }

    pub fn g3(&self, z: &State, x: V3) -> Result<f64> {
        let hz = self.hanzawa(&z.h, z.t)?;
        Ok(g3_value(&self.local(z, &hz, x)?.1))
    }

    /// `L₁ = ∂_tū + ∇p̄ − ν^± Δū`.
    pub fn l1(&self, z: &State, x: V3) -> Result<V3> {
        let side = self.side(x)?;
        let u = z.u.branch(side).sample(z.t, x);
        let p = z.p.branch(side).sample(z.t, x);
        Ok(u.dt + p.grad - u.laplacian() * self.params.nu(side))
    }

    /// `L₂ = ∂_tB̄ − σ ΔB̄`.
    pub fn l2(&self, z: &State, x: V3) -> Result<V3> {
        let b = z.b.sample(z.t, x);
        Ok(b.dt - b.laplacian() * self.params.sigma)
    }

    /// `L₃ = div ū`.
    pub fn l3(&self, z: &State, x: V3) -> Result<f64> {
        let side = self.side(x)?;
        Ok(z.u.branch(side).sample(z.t, x).div())
    }

    pub fn surface_state(&self, z: &State) -> Result<SurfaceState> {
        let hz = self.hanzawa(&z.h, z.t)?;
        let hf = HeightField::from_fn(self.surface.clone(), z.h.as_ref(), z.t);
        let n = hf.values.len();
        let ig = InterfaceGeometry::new(&self.surface, &hf.values, self.gate.delta0)?;
        let lap_h = self.surface.laplace_beltrami_grid(&hf.values)?;
        Ok(SurfaceState { hz, ig, h_t: hf.dt.unwrap_or_else(|| vec![0.0; n]), h: hf.values, lap_h })
    }

    fn traces(&self, z: &State, i: usize) -> (VecSample, VecSample) {
        let nd = self.surface.node(i);
        let n = nd.frame.n;
        (
            trace_vector(z.u.inner.as_ref(), z.t, nd.x, n, Side::Inner),
            trace_vector(z.u.outer.as_ref(), z.t, nd.x, n, Side::Outer),
        )
    }

    fn surf_local(&self, z: &State, ss: &SurfaceState, i: usize) -> Result<SurfLocal> {
        let nd = self.surface.node(i);
        let (ti, to) = self.traces(z, i);
        Ok(SurfLocal {
            n: nd.frame.n,
            proj: nd.frame.projector(),
            alpha: ss.ig.alpha[i],
            m1: ss.hz.coeffs(nd.x)?.m1,
            grad_in: ti.grad,
            grad_out: to.grad,
            nu_in: self.params.nu_plus,
            nu_out: self.params.nu_minus,
        })
    }

    pub fn cal_g1(&self, z: &State, ss: &SurfaceState, i: usize) -> Result<f64> {
        Ok(self.surf_local(z, ss, i)?.cal_g1())
    }

    /// `𝒢₂ = κ (H_Γ[h] − H_Γ[0] − (tr L² + Δ_Σ) h)`, the remainder of the
    /// linearization of the mean curvature about Σ.
    pub fn cal_g2(&self, ss: &SurfaceState, i: usize) -> f64 {
        let l = self.surface.node(i).weingarten;
        self.params.kappa * (ss.ig.h_gamma[i] - l.trace() - (l * l).trace() * ss.h[i] - ss.lap_h[i])
    }

    pub fn cal_g3(&self, z: &State, ss: &SurfaceState, i: usize) -> Result<V3> {
        Ok(self.surf_local(z, ss, i)?.cal_g3())
    }

    /// `G₄ = (𝒢₁ + 𝒢₂ + κ tr L² h) n + 𝒢₃`.
    pub fn g4(&self, z: &State, ss: &SurfaceState, i: usize) -> Result<V3> {
        let sl = self.surf_local(z, ss, i)?;
        let l = self.surface.node(i).weingarten;
        let c = sl.cal_g1() + self.cal_g2(ss, i) + self.params.kappa * (l * l).trace() * ss.h[i];
        Ok(sl.n * c + sl.cal_g3())
    }

    /// Tangential part of the auxiliary field at node `i`.
    pub fn b_at(&self, t: f64, i: usize) -> V3 {
        let nd = self.surface.node(i);
        match &self.aux_b {
            Some(b) => nd.frame.projector() * b.sample(t, nd.x).v,
            None => V3::zeros(),
        }
    }

    /// The two terms of `G₅ = ((I − M₀)∇_Σh)·ū + (b − ū)·∇_Σh`; ū is the
    /// outer trace.
    pub fn g5_terms(&self, z: &State, ss: &SurfaceState, i: usize) -> [Term<f64>; 2] {
        let nd = self.surface.node(i);
        let u = trace_vector(z.u.outer.as_ref(), z.t, nd.x, nd.frame.n, Side::Outer).v;
        let gh = ss.ig.grad_h[i];
        let b = self.b_at(z.t, i);
        [
            t("(I-M0) grad h . u", true, ((M3::identity() - ss.ig.m0[i]) * gh).dot(&u)),
            t("(b-u) . grad h", true, (b - u).dot(&gh)),
        ]
    }

    pub fn g5(&self, z: &State, ss: &SurfaceState, i: usize) -> f64 {
        self.g5_terms(z, ss, i).iter().map(|t| t.value).sum()
    }

    /// `L₄ = ⟦−ν(∇ū + ∇ūᵀ)⟧ n + ϖ n − κ (Δ_Σ h) n`.
    pub fn l4(&self, z: &State, ss: &SurfaceState, i: usize) -> V3 {
        let nd = self.surface.node(i);
        let n = nd.frame.n;
        let (ti, to) = self.traces(z, i);
        let sym = |g: &M3| g + g.transpose();
        let jump = sym(&to.grad) * self.params.nu_minus - sym(&ti.grad) * self.params.nu_plus;
        let varpi = z.varpi.eval(&jet::csts3(nd.x.into()), z.t).v;
        -(jump * n) + n * (varpi - self.params.kappa * ss.lap_h[i])
    }

    /// `L₅ = ∂_t h − ū·n + b·∇_Σ h`.
    pub fn l5(&self, z: &State, ss: &SurfaceState, i: usize) -> f64 {
        let nd = self.surface.node(i);
        let u = trace_vector(z.u.outer.as_ref(), z.t, nd.x, nd.frame.n, Side::Outer).v;
        ss.h_t[i] - u.dot(&nd.frame.n) + self.b_at(z.t, i).dot(&ss.ig.grad_h[i])
    }

    /// `L_which` at an ambient point (1–3) or grid node (4–5), flattened.
    pub fn linear_residual(&self, z: &State, which: usize, point: Point) -> Result<Vec<f64>> {
        match (which, point) {
            (1, Point::Ambient(x)) => Ok(flat_v(&self.l1(z, x)?)),
            (2, Point::Ambient(x)) => Ok(flat_v(&self.l2(z, x)?)),
            (3, Point::Ambient(x)) => Ok(vec![self.l3(z, x)?]),
            (4, Point::Node(i)) => Ok(flat_v(&self.l4(z, &self.surface_state(z)?, i))),
            (5, Point::Node(i)) => Ok(vec![self.l5(z, &self.surface_state(z)?, i)]),
            (1..=5, _) => Err(Error::Param(format!("L{which} evaluated at the wrong kind of point"))),
            _ => Err(Error::Param(format!("no linear operator L{which}"))),
        }
    }

    /// Evaluate one catalogue operator, flattened.
    pub fn eval_op(&self, op: OpId, z: &State, point: Point) -> Result<Vec<f64>> {
        match (op.ambient(), point) {
            (true, Point::Ambient(x)) => {
                let hz = self.hanzawa(&z.h, z.t)?;
                let (side, l, c) = self.local(z, &hz, x)?;
                Ok(match op {
                    OpId::M1 => flat_m(&c.m1),
                    OpId::M2 => flat_v(&c.m2),
                    OpId::M3 => flat_v(&c.m3),
                    OpId::M4 => flat_m(&c.m4),
                    OpId::G1 => flat_v(&sum_terms(&g1_terms(&l, self.params.nu(side)))),
                    OpId::G2 => flat_v(&sum_terms(&g2_terms(&l, self.params.sigma))),
                    _ => vec![g3_value(&l)],
                })
            }
            (false, Point::Node(i)) => {
                self.surface.node(i);
                let ss = self.surface_state(z)?;
                Ok(match op {
                    OpId::M0 => flat_m(&ss.ig.m0[i]),
                    OpId::Alpha => flat_v(&ss.ig.alpha[i]),
                    OpId::Beta => vec![ss.ig.beta[i]],
                    OpId::H => vec![ss.ig.h_gamma[i]],
                    OpId::CalG1 => vec![self.cal_g1(z, &ss, i)?],
                    OpId::CalG2 => vec![self.cal_g2(&ss, i)],
                    OpId::CalG3 => flat_v(&self.cal_g3(z, &ss, i)?),
                    OpId::G4 => flat_v(&self.g4(z, &ss, i)?),
                    _ => vec![self.g5(z, &ss, i)],
                })
            }
            _ => Err(Error::Param(format!("{} is evaluated at {}", op.name(), if op.ambient() { "ambient points" } else { "grid nodes" }))),
        }
    }

    /// `θ`-type displacement `ψ = φ_h 𝕟` and its time derivative.
    fn psi(&self, hz: &Hanzawa, phi_h: &Arc<dyn HeightFn>, x: V3) -> ([Jet; 3], V3) {
        let hp = Hanzawa { height: phi_h.clone(), ..hz.clone() };
        let e = hp.extended(x);
        let nn = V3::new(e.nn[0].v, e.nn[1].v, e.nn[2].v);
        (e.theta(), nn * e.hh_t.v)
    }

    pub fn coeff_variation_at(&self, hz: &Hanzawa, phi_h: &Arc<dyn HeightFn>, x: V3) -> Result<(PullbackCoeffs, CoeffVariation)> {
        let c = hz.coeffs(x)?;
        let (psi, psi_t) = self.psi(hz, phi_h, x);
        Ok((c, coeff_variation(&c, &psi, psi_t)))
    }

    /// Closed-form Fréchet derivative `D op [z] φ` at `point`.
    pub fn frechet(&self, op: OpId, z: &State, phi: &Direction, point: Point) -> Result<Vec<f64>> {
        match (op.ambient(), point) {
            (true, Point::Ambient(x)) => {
                let hz = self.hanzawa(&z.h, z.t)?;
                let (side, l, _) = self.local(z, &hz, x)?;
                let (_, cv) = self.coeff_variation_at(&hz, &phi.h, x)?;
                let d = Local {
                    u: phi.u.branch(side).sample(z.t, x),
                    b: phi.b.sample(z.t, x),
                    p: phi.p.branch(side).sample(z.t, x),
                    m1: cv.dm1,
                    m2: cv.dm2,
                    m3: cv.dm3,
                    m4: cv.dm4,
                };
                Ok(match op {
                    OpId::M1 => flat_m(&cv.dm1),
                    OpId::M2 => flat_v(&cv.dm2),
                    OpId::M3 => flat_v(&cv.dm3),
                    OpId::M4 => flat_m(&cv.dm4),
                    OpId::G1 => flat_v(&dg1_terms(&l, &d, self.params.nu(side)).iter().sum()),
                    OpId::G2 => flat_v(&dg2_terms(&l, &d, self.params.sigma).iter().sum()),
                    _ => vec![dg3_value(&l, &d)],
                })
            }
            (false, Point::Node(i)) => {
                let ss = self.surface_state(z)?;
                let phi_vals = HeightField::from_fn(self.surface.clone(), phi.h.as_ref(), z.t).values;
                let var = frechet_interface(&self.surface, &ss.ig, &phi_vals)?;
                let nd = self.surface.node(i);
                let l = nd.weingarten;
                let kappa = self.params.kappa;
                let dcal_g2 = |i: usize| -> Result<f64> {
                    let lap = self.surface.laplace_beltrami_grid(&phi_vals)?;
                    Ok(kappa * (var.dh[i] - (l * l).trace() * phi_vals[i] - lap[i]))
                };
                let surf_var = || -> Result<(SurfLocal, M3, M3, M3)> {
                    let sl = self.surf_local(z, &ss, i)?;
                    let (_, cv) = self.coeff_variation_at(&ss.hz, &phi.h, nd.x)?;
                    let n = nd.frame.n;
                    let di = trace_vector(phi.u.inner.as_ref(), z.t, nd.x, n, Side::Inner).grad;
                    let dout = trace_vector(phi.u.outer.as_ref(), z.t, nd.x, n, Side::Outer).grad;
                    Ok((sl, cv.dm1, di, dout))
                };
                Ok(match op {
                    OpId::M0 => flat_m(&var.dm0[i]),
                    OpId::Alpha => flat_v(&var.dalpha[i]),
                    OpId::Beta => vec![var.dbeta[i]],
                    OpId::H => vec![var.dh[i]],
                    OpId::CalG1 => {
                        let (sl, dm1, di, dout) = surf_var()?;
                        vec![sl.dcal_g1(&var.dalpha[i], &dm1, &di, &dout)]
                    }
                    OpId::CalG2 => vec![dcal_g2(i)?],
                    OpId::CalG3 => {
                        let (sl, dm1, di, dout) = surf_var()?;
                        flat_v(&sl.dcal_g3(&var.dalpha[i], &dm1, &di, &dout))
                    }
                    OpId::G4 => {
                        let (sl, dm1, di, dout) = surf_var()?;
                        let c = sl.dcal_g1(&var.dalpha[i], &dm1, &di, &dout) + dcal_g2(i)? + kappa * (l * l).trace() * phi_vals[i];
                        flat_v(&(sl.n * c + sl.dcal_g3(&var.dalpha[i], &dm1, &di, &dout)))
                    }
                    _ => {
                        let n = nd.frame.n;
                        let u = trace_vector(z.u.outer.as_ref(), z.t, nd.x, n, Side::Outer).v;
                        let du = trace_vector(phi.u.outer.as_ref(), z.t, nd.x, n, Side::Outer).v;
                        let gphi = self.surface.grad_grid(&phi_vals)?[i];
                        let gh = ss.ig.grad_h[i];
                        let im0 = M3::identity() - ss.ig.m0[i];
                        let b = self.b_at(z.t, i);
                        vec![-(var.dm0[i] * gh).dot(&u) + (im0 * gphi).dot(&u) + (im0 * gh).dot(&du) - du.dot(&gh) + (b - u).dot(&gphi)]
                    }
                })
            }
            _ => Err(Error::Param(format!("{} evaluated at the wrong kind of point", op.name()))),
        }
    }

    /// Compare [`Transformed::frechet`] with `(F(z+εφ) − F(z−εφ))/(2ε)`
    /// over the ladder.
    pub fn frechet_check(&self, op: OpId, z: &State, phi: &Direction, point: Point, ladder: &[f64]) -> Result<FrechetReport> {
        let d = self.frechet(op, z, phi, point)?;
        let f0 = self.eval_op(op, z, point)?;
        let dn = inf_norm(&d);
        let fnorm = inf_norm(&f0);
        let scale = dn.max(1e-300);
        let mut rel_err = Vec::with_capacity(ladder.len());
        let mut floor = Vec::with_capacity(ladder.len());
        for &eps in ladder {
            let gate = |e: Error| Error::LadderGate { eps, reason: e.to_string() };
            let fp = self.eval_op(op, &z.perturbed(phi, eps), point).map_err(gate)?;
            let fm = self.eval_op(op, &z.perturbed(phi, -eps), point).map_err(gate)?;
            let err = fp
                .iter()
                .zip(&fm)
                .zip(&d)
                .map(|((a, b), c)| ((a - b) / (2.0 * eps) - c).abs())
                .fold(0.0f64, f64::max);
            rel_err.push(err / scale);
            floor.push(10.0 * f64::EPSILON * fnorm.max(dn) / (eps * scale));
        }
        let mut observed_order: Option<f64> = None;
        for k in 1..ladder.len() {
            if rel_err[k] > 10.0 * floor[k] && rel_err[k - 1] > 0.0 {
                let o = (rel_err[k - 1] / rel_err[k]).ln() / (ladder[k - 1] / ladder[k]).ln();
                observed_order = Some(observed_order.map_or(o, |m| m.min(o)));
            }
        }
        Ok(FrechetReport { op, eps: ladder.to_vec(), rel_err, observed_order, derivative_norm: dn })
    }
}

pub fn flat_m(m: &M3) -> Vec<f64> {
    (0..9).map(|k| m[(k / 3, k % 3)]).collect()
}

pub fn flat_v(v: &V3) -> Vec<f64> {
    vec![v[0], v[1], v[2]]
}

pub fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

fn warn(hz: &Hanzawa, r: &IdentityResidual) -> IdentityResidual {
    let fd_warning = match hz.mode {
        DerivMode::Fd { step } => r.residual > 1e3 * step * step * r.scale.max(1.0),
        DerivMode::Analytic => false,
    };
    IdentityResidual { fd_warning, ..*r }
}

/// `ū` sampled through the reference derivative path, so that on FD paths
/// the coefficients under test do not cancel against ū's own chain rule.
fn pullback(u: &Arc<dyn VectorField>, hz: &Hanzawa) -> PullbackVector {
    PullbackVector { field: u.clone(), hz: hz.reference() }
}

/// `|(∇u)∘Θ − (I − M₁)∇ū|`.
pub fn check_gradient_identity(u: &Arc<dyn VectorField>, hz: &Hanzawa, x: V3) -> Result<IdentityResidual> {
    let c = hz.coeffs(x)?;
    let lhs = sample_vector(u.as_ref(), hz.t, hz.hanzawa_map(x)).grad;
    let rhs = (M3::identity() - c.m1) * pullback(u, hz).sample(hz.t, x).grad;
    Ok(warn(hz, &IdentityResidual { residual: (lhs - rhs).abs().max(), scale: lhs.abs().max(), fd_warning: false }))
}

/// `|(div u)∘Θ − (div ū − tr(M₁∇ū))|`.
pub fn check_divergence_identity(u: &Arc<dyn VectorField>, hz: &Hanzawa, x: V3) -> Result<IdentityResidual> {
    let c = hz.coeffs(x)?;
    let lhs = sample_vector(u.as_ref(), hz.t, hz.hanzawa_map(x)).div();
    let ub = pullback(u, hz).sample(hz.t, x);
    let rhs = ub.div() - (c.m1 * ub.grad).trace();
    Ok(warn(hz, &IdentityResidual { residual: (lhs - rhs).abs(), scale: lhs.abs(), fd_warning: false }))
}

/// `|(Δu)∘Θ − (Δū + M₄:∇²ū + M₂·∇ū)|`.
pub fn check_laplacian_identity(u: &Arc<dyn VectorField>, hz: &Hanzawa, x: V3) -> Result<IdentityResidual> {
    let c = hz.coeffs(x)?;
    let lhs = sample_vector(u.as_ref(), hz.t, hz.hanzawa_map(x)).laplacian();
    let ub = pullback(u, hz).sample(hz.t, x);
    let rhs = ub.laplacian() + V3::from_fn(|j, _| contract(&c.m4, &ub.hess[j])) + row_times(&ub.grad, &c.m2);
    Ok(warn(hz, &IdentityResidual { residual: (lhs - rhs).abs().max(), scale: lhs.abs().max(), fd_warning: false }))
}

/// Step of the five-point time difference used for `∂_t ū`.
pub const TIME_STEP: f64 = 1e-3;

/// `|(∂_t u)∘Θ − (∂_t ū − M₃∇ū)|`, with `∂_t ū` from a fourth-order
/// central difference in time of `u(t, Θ_{h(t)}(x))`.
pub fn check_time_identity(u: &Arc<dyn VectorField>, hz: &Hanzawa, x: V3) -> Result<IdentityResidual> {
    let c = hz.coeffs(x)?;
    let y = hz.hanzawa_map(x);
    let lhs = V3::from(jet::values3(&u.dt(hz.t, &jet::csts3(y.into()))));
    let at = |dt: f64| -> V3 {
        let mut h = hz.clone();
        h.t = hz.t + dt;
        V3::from(jet::values3(&u.eval(h.t, &jet::csts3(h.hanzawa_map(x).into()))))
    };
    let d = TIME_STEP;
    let ubt = (at(-2.0 * d) - at(-d) * 8.0 + at(d) * 8.0 - at(2.0 * d)) / (12.0 * d);
    let ub = pullback(u, hz).sample(hz.t, x);
    let rhs = ubt - row_times(&ub.grad, &c.m3);
    Ok(warn(hz, &IdentityResidual { residual: (lhs - rhs).abs().max(), scale: lhs.abs().max(), fd_warning: false }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{direct_scalar, direct_vector, FnScalar, FnVector, TrigScalar, TrigVector};
    use crate::hanzawa::{ConstHeight, WaveHeight};
    use crate::surface::rng;
    use rand::Rng;

    fn sphere() -> Arc<ReferenceSurface> {
        Arc::new(ReferenceSurface::sphere(1.0, 16, 32).unwrap())
    }

    fn konst(c: f64) -> Arc<dyn HeightFn> {
        Arc::new(ConstHeight { c, rate: 0.0 })
    }

    #[test]
    fn jump_sign_and_examples() {
        let s = sphere();
        let one = direct_scalar(FnScalar::steady(|_| Jet::cst(1.0)));
        let three = direct_scalar(FnScalar::steady(|_| Jet::cst(3.0)));
        let j = JumpScalar { inner: one.clone(), outer: three };
        assert!((jump_scalar(&s, &j, 0.0, [0.7, 1.0]).unwrap() - 2.0).abs() < 1e-12);
        assert_eq!(jump_scalar(&s, &JumpScalar::single(one), 0.0, [0.7, 1.0]).unwrap(), 0.0);
        let x1 = direct_vector(FnVector::steady(|x| [x[0], Jet::cst(0.0), Jet::cst(0.0)]));
        let x2 = direct_vector(FnVector::steady(|x| [x[0] * 2.0, Jet::cst(0.0), Jet::cst(0.0)]));
        let jv = JumpVector { inner: x1, outer: x2 };
        let v = jump_vector(&s, &jv, 0.0, [std::f64::consts::FRAC_PI_2, 0.0]).unwrap();
        assert!((v[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn laplacian_identity_example() {
        let u = FnVector::steady(|x| [x[0].sq(), Jet::cst(0.0), Jet::cst(0.0)]);
        let hz = Hanzawa::new(sphere(), konst(0.05), 0.0, GateParams::default()).unwrap();
        let mut r = rng(1);
        for _ in 0..20 {
            let x = hz.surface.random_tube_point(&mut r, 0.9);
            assert!(check_laplacian_identity(&u, &hz, x).unwrap().residual <= 1e-8);
        }
    }

    #[test]
    fn identities_vanish_at_zero_height() {
        let mut r = rng(2);
        let hz = Hanzawa::new(sphere(), konst(0.0), 0.0, GateParams::default()).unwrap();
        for _ in 0..10 {
            let u: Arc<dyn VectorField> = Arc::new(TrigVector::random(&mut r, 1.0, 3));
            let x = hz.surface.random_tube_point(&mut r, 0.8);
            for f in [check_gradient_identity, check_divergence_identity, check_laplacian_identity, check_time_identity] {
                assert!(f(&u, &hz, x).unwrap().residual <= 1e-12);
            }
        }
    }

    #[test]
    fn concentric_g4() {
        let s = sphere();
        let ctx = Transformed::new(s.clone(), FluidParams { kappa: 2.0, ..Default::default() });
        let zero = direct_vector(FnVector::steady(|_| [Jet::cst(0.0); 3]));
        let z = State {
            t: 0.0,
            u: JumpVector::single(zero.clone()),
            b: zero,
            p: JumpScalar::single(direct_scalar(FnScalar::steady(|_| Jet::cst(0.0)))),
            varpi: konst(0.0),
            h: konst(0.1),
        };
        let ss = ctx.surface_state(&z).unwrap();
        let want = 2.0 * (-2.0 / 1.1 + 2.0 - 0.2);
        for i in [0, 37, 200] {
            assert!((ctx.cal_g2(&ss, i) - want).abs() < 1e-6, "{}", ctx.cal_g2(&ss, i));
            let g4 = ctx.g4(&z, &ss, i).unwrap();
            let n = s.node(i).frame.n;
            assert!((g4 - n * (want + 2.0 * 2.0 * 0.1)).norm() < 1e-6);
        }
    }

    #[test]
    fn g1_polarization_matches_product_rule() {
        let mut r = rng(3);
        let rs = |r: &mut rand_chacha::ChaCha8Rng| -> Local {
            let mut v = || VecSample {
                v: V3::from_fn(|_, _| r.gen_range(-1.0..1.0)),
                grad: M3::from_fn(|_, _| r.gen_range(-1.0..1.0)),
                hess: [M3::zeros(); 3].map(|_| M3::from_fn(|_, _| r.gen_range(-1.0..1.0))),
                dt: V3::zeros(),
            };
            let (u, b) = (v(), v());
            Local {
                u,
                b,
                p: ScalarSample { v: 0.3, grad: V3::from_fn(|_, _| r.gen_range(-1.0..1.0)), hess: M3::zeros(), dt: 0.0 },
                m1: M3::from_fn(|_, _| r.gen_range(-1.0..1.0)),
                m2: V3::from_fn(|_, _| r.gen_range(-1.0..1.0)),
                m3: V3::from_fn(|_, _| r.gen_range(-1.0..1.0)),
                m4: M3::from_fn(|_, _| r.gen_range(-1.0..1.0)),
            }
        };
        for _ in 0..20 {
            let (l, d) = (rs(&mut r), rs(&mut r));
            let cd = |e: f64| -> Vec<V3> {
                let p = g1_terms(&l.axpy(e, &d), 0.7);
                let m = g1_terms(&l.axpy(-e, &d), 0.7);
                p.iter().zip(&m).map(|(a, b)| (a.value - b.value) / (2.0 * e)).collect()
            };
            let (a, b) = (cd(1e-3), cd(2e-3));
            let dg = dg1_terms(&l, &d, 0.7);
            for k in 0..10 {
                let exact = (a[k] * 4.0 - b[k]) / 3.0;
                assert!((exact - dg[k]).norm() <= 1e-10 * (1.0 + dg[k].norm()), "term {k}");
            }
        }
    }

    #[test]
    fn dg1_ladder_sphere() {
        let s = sphere();
        let ctx = Transformed::new(s.clone(), FluidParams::default());
        let mut r = rng(11);
        let mk = |r: &mut rand_chacha::ChaCha8Rng, amp: f64| -> State {
            State {
                t: 0.2,
                u: JumpVector {
                    inner: direct_vector(Arc::new(TrigVector::random(r, 1.0, 3))),
                    outer: direct_vector(Arc::new(TrigVector::random(r, 1.0, 3))),
                },
                b: direct_vector(Arc::new(TrigVector::random(r, 1.0, 3))),
                p: JumpScalar::single(direct_scalar(Arc::new(TrigScalar::random(r, 1.0, 3)))),
                varpi: konst(0.0),
                h: Arc::new(WaveHeight::random(r, [0.0; 3], 0.01, amp, 3, true)),
            }
        };
        let z = mk(&mut r, 0.03);
        let phi = mk(&mut r, 0.5);
        let phi = Direction { u: phi.u, b: phi.b, p: phi.p, varpi: phi.varpi, h: phi.h };
        let x = s.random_tube_point(&mut r, 0.5);
        let rep = ctx.frechet_check(OpId::G1, &z, &phi, Point::Ambient(x), &DEFAULT_LADDER).unwrap();
        assert!(rep.err_at(1e-3).unwrap() < 1e-3, "{rep:?}");
        assert!(rep.observed_order.unwrap() > 1.9, "{rep:?}");
    }
}
