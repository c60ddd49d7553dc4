//! Ambient fields on Ω: closed-form evaluators on jets, pointwise samples
//! with first and second derivatives, pullbacks through Θ_h, and the
//! jump-aware two-branch variants.

use std::sync::Arc;

use rand::Rng;

use crate::hanzawa::Hanzawa;
use crate::jet::{self, Jet};
use crate::surface::{M3, V3};

/// Value, gradient `(∇u)_ij = ∂_i u_j`, Hessians `hess[j] = ∇²u_j` and
/// time derivative of a vector field at one point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VecSample {
    pub v: V3,
    pub grad: M3,
    pub hess: [M3; 3],
    pub dt: V3,
}

impl VecSample {
    pub fn zero() -> Self {
        VecSample { v: V3::zeros(), grad: M3::zeros(), hess: [M3::zeros(); 3], dt: V3::zeros() }
    }

    pub fn from_jets(u: &[Jet; 3], dt: V3) -> Self {
        let mut hess = [M3::zeros(); 3];
        for (j, hj) in hess.iter_mut().enumerate() {
            *hj = M3::from_fn(|a, b| u[j].h[a][b]);
        }
        VecSample {
            v: V3::from(jet::values3(u)),
            grad: M3::from_fn(|i, j| u[j].g[i]),
            hess,
            dt,
        }
    }

    pub fn axpy(&self, c: f64, o: &VecSample) -> VecSample {
        VecSample {
            v: self.v + o.v * c,
            grad: self.grad + o.grad * c,
            hess: [self.hess[0] + o.hess[0] * c, self.hess[1] + o.hess[1] * c, self.hess[2] + o.hess[2] * c],
            dt: self.dt + o.dt * c,
        }
    }

    pub fn laplacian(&self) -> V3 {
        V3::new(self.hess[0].trace(), self.hess[1].trace(), self.hess[2].trace())
    }

    pub fn div(&self) -> f64 {
        self.grad.trace()
    }
}

/// Scalar analogue of [`VecSample`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScalarSample {
    pub v: f64,
    pub grad: V3,
    pub hess: M3,
    pub dt: f64,
}

impl ScalarSample {
    pub fn zero() -> Self {
        ScalarSample { v: 0.0, grad: V3::zeros(), hess: M3::zeros(), dt: 0.0 }
    }

    pub fn from_jet(p: &Jet, dt: f64) -> Self {
        ScalarSample { v: p.v, grad: V3::from(p.g), hess: M3::from_fn(|a, b| p.h[a][b]), dt }
    }

    pub fn axpy(&self, c: f64, o: &ScalarSample) -> ScalarSample {
        ScalarSample { v: self.v + c * o.v, grad: self.grad + o.grad * c, hess: self.hess + o.hess * c, dt: self.dt + c * o.dt }
    }
}

/// Closed-form vector field evaluated on jets.
pub trait VectorField: Send + Sync {
    fn eval(&self, t: f64, x: &[Jet; 3]) -> [Jet; 3];
    fn dt(&self, t: f64, x: &[Jet; 3]) -> [Jet; 3];
}

/// Closed-form scalar field evaluated on jets.
pub trait ScalarField: Send + Sync {
    fn eval(&self, t: f64, x: &[Jet; 3]) -> Jet;
    fn dt(&self, t: f64, x: &[Jet; 3]) -> Jet;
}

/// Anything that can be sampled pointwise with derivatives.
pub trait SampledVector: Send + Sync {
    fn sample(&self, t: f64, x: V3) -> VecSample;
}

pub trait SampledScalar: Send + Sync {
    fn sample(&self, t: f64, x: V3) -> ScalarSample;
}

pub fn sample_vector(f: &dyn VectorField, t: f64, x: V3) -> VecSample {
    let xs = Jet::vars(x.into());
    let dt = f.dt(t, &jet::csts3(x.into()));
    VecSample::from_jets(&f.eval(t, &xs), V3::from(jet::values3(&dt)))
}

pub fn sample_scalar(f: &dyn ScalarField, t: f64, x: V3) -> ScalarSample {
    let xs = Jet::vars(x.into());
    ScalarSample::from_jet(&f.eval(t, &xs), f.dt(t, &jet::csts3(x.into())).v)
}

/// A closed-form field used directly (no pullback).
#[derive(Clone)]
pub struct Direct<F: ?Sized>(pub Arc<F>);

impl SampledVector for Direct<dyn VectorField> {
    fn sample(&self, t: f64, x: V3) -> VecSample {
        sample_vector(self.0.as_ref(), t, x)
    }
}

impl SampledScalar for Direct<dyn ScalarField> {
    fn sample(&self, t: f64, x: V3) -> ScalarSample {
        sample_scalar(self.0.as_ref(), t, x)
    }
}

pub fn direct_vector(f: Arc<dyn VectorField>) -> Arc<dyn SampledVector> {
    Arc::new(Direct(f))
}

pub fn direct_scalar(f: Arc<dyn ScalarField>) -> Arc<dyn SampledScalar> {
    Arc::new(Direct(f))
}

/// `ū = u∘Θ_h`, with `∂_t ū = (∂_t u)∘Θ + ∂_tθ (∇u)∘Θ`.
#[derive(Clone)]
pub struct PullbackVector {
    pub field: Arc<dyn VectorField>,
    pub hz: Hanzawa,
}

impl SampledVector for PullbackVector {
    fn sample(&self, t: f64, x: V3) -> VecSample {
        let mut hz = self.hz.clone();
        hz.t = t;
        let ext = hz.extended(x);
        let th = ext.theta();
        let y = jet::add3(&Jet::vars(x.into()), &th);
        let yv = jet::values3(&y);
        let u = self.field.eval(t, &y);
        let ut = jet::values3(&self.field.dt(t, &jet::csts3(yv)));
        let gu = self.field.eval(t, &Jet::vars(yv));
        let th_t = V3::new(ext.nn[0].v, ext.nn[1].v, ext.nn[2].v) * ext.hh_t.v;
        let grad_at = M3::from_fn(|i, j| gu[j].g[i]);
        let dt = V3::from(ut) + (th_t.transpose() * grad_at).transpose();
        VecSample::from_jets(&u, dt)
    }
}

#[derive(Clone)]
pub struct PullbackScalar {
    pub field: Arc<dyn ScalarField>,
    pub hz: Hanzawa,
}

impl SampledScalar for PullbackScalar {
    fn sample(&self, t: f64, x: V3) -> ScalarSample {
        let mut hz = self.hz.clone();
        hz.t = t;
        let ext = hz.extended(x);
        let y = jet::add3(&Jet::vars(x.into()), &ext.theta());
        let yv = jet::values3(&y);
        let p = self.field.eval(t, &y);
        let pt = self.field.dt(t, &jet::csts3(yv)).v;
        let gp = self.field.eval(t, &Jet::vars(yv));
        let th_t = V3::new(ext.nn[0].v, ext.nn[1].v, ext.nn[2].v) * ext.hh_t.v;
        ScalarSample::from_jet(&p, pt + th_t.dot(&V3::from(gp.g)))
    }
}

/// Linear combination of sampled vector fields.
#[derive(Clone)]
pub struct SumVector(pub Vec<(f64, Arc<dyn SampledVector>)>);

impl SampledVector for SumVector {
    fn sample(&self, t: f64, x: V3) -> VecSample {
        self.0.iter().fold(VecSample::zero(), |acc, (c, f)| acc.axpy(*c, &f.sample(t, x)))
    }
}

#[derive(Clone)]
pub struct SumScalar(pub Vec<(f64, Arc<dyn SampledScalar>)>);

impl SampledScalar for SumScalar {
    fn sample(&self, t: f64, x: V3) -> ScalarSample {
        self.0.iter().fold(ScalarSample::zero(), |acc, (c, f)| acc.axpy(*c, &f.sample(t, x)))
    }
}

pub fn combine_vector(a: &Arc<dyn SampledVector>, b: &Arc<dyn SampledVector>, eps: f64) -> Arc<dyn SampledVector> {
    Arc::new(SumVector(vec![(1.0, a.clone()), (eps, b.clone())]))
}

pub fn combine_scalar(a: &Arc<dyn SampledScalar>, b: &Arc<dyn SampledScalar>, eps: f64) -> Arc<dyn SampledScalar> {
    Arc::new(SumScalar(vec![(1.0, a.clone()), (eps, b.clone())]))
}

/// Which side of the reference surface a point lies on.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    /// `d < 0`, the bounded phase.
    Inner,
    /// `d > 0`, the `+n` side.
    Outer,
}

/// Jump-aware vector field with independent inner and outer branches.
#[derive(Clone)]
pub struct JumpVector {
    pub inner: Arc<dyn SampledVector>,
    pub outer: Arc<dyn SampledVector>,
}

impl JumpVector {
    pub fn single(f: Arc<dyn SampledVector>) -> Self {
        JumpVector { inner: f.clone(), outer: f }
    }

    pub fn branch(&self, side: Side) -> &Arc<dyn SampledVector> {
        match side {
            Side::Inner => &self.inner,
            Side::Outer => &self.outer,
        }
    }

    pub fn combine(&self, o: &JumpVector, eps: f64) -> JumpVector {
        JumpVector { inner: combine_vector(&self.inner, &o.inner, eps), outer: combine_vector(&self.outer, &o.outer, eps) }
    }
}

#[derive(Clone)]
pub struct JumpScalar {
    pub inner: Arc<dyn SampledScalar>,
    pub outer: Arc<dyn SampledScalar>,
}

impl JumpScalar {
    pub fn single(f: Arc<dyn SampledScalar>) -> Self {
        JumpScalar { inner: f.clone(), outer: f }
    }

    pub fn branch(&self, side: Side) -> &Arc<dyn SampledScalar> {
        match side {
            Side::Inner => &self.inner,
            Side::Outer => &self.outer,
        }
    }

    pub fn combine(&self, o: &JumpScalar, eps: f64) -> JumpScalar {
        JumpScalar { inner: combine_scalar(&self.inner, &o.inner, eps), outer: combine_scalar(&self.outer, &o.outer, eps) }
    }
}

type VecFn = dyn Fn(f64, &[Jet; 3]) -> [Jet; 3] + Send + Sync;
type ScalFn = dyn Fn(f64, &[Jet; 3]) -> Jet + Send + Sync;

/// Vector field from closures for the value and its time derivative.
pub struct FnVector {
    pub f: Box<VecFn>,
    pub ft: Box<VecFn>,
}

impl FnVector {
    pub fn new(
        f: impl Fn(f64, &[Jet; 3]) -> [Jet; 3] + Send + Sync + 'static,
        ft: impl Fn(f64, &[Jet; 3]) -> [Jet; 3] + Send + Sync + 'static,
    ) -> Arc<dyn VectorField> {
        Arc::new(FnVector { f: Box::new(f), ft: Box::new(ft) })
    }

    /// Time-independent field.
    pub fn steady(f: impl Fn(&[Jet; 3]) -> [Jet; 3] + Send + Sync + 'static) -> Arc<dyn VectorField> {
        Self::new(move |_, x| f(x), |_, _| [Jet::cst(0.0); 3])
    }
}

impl VectorField for FnVector {
    fn eval(&self, t: f64, x: &[Jet; 3]) -> [Jet; 3] {
        (self.f)(t, x)
    }
    fn dt(&self, t: f64, x: &[Jet; 3]) -> [Jet; 3] {
        (self.ft)(t, x)
    }
}

pub struct FnScalar {
    pub f: Box<ScalFn>,
    pub ft: Box<ScalFn>,
}

impl FnScalar {
    pub fn new(
        f: impl Fn(f64, &[Jet; 3]) -> Jet + Send + Sync + 'static,
        ft: impl Fn(f64, &[Jet; 3]) -> Jet + Send + Sync + 'static,
    ) -> Arc<dyn ScalarField> {
        Arc::new(FnScalar { f: Box::new(f), ft: Box::new(ft) })
    }

    pub fn steady(f: impl Fn(&[Jet; 3]) -> Jet + Send + Sync + 'static) -> Arc<dyn ScalarField> {
        Self::new(move |_, x| f(x), |_, _| Jet::cst(0.0))
    }
}

impl ScalarField for FnScalar {
    fn eval(&self, t: f64, x: &[Jet; 3]) -> Jet {
        (self.f)(t, x)
    }
    fn dt(&self, t: f64, x: &[Jet; 3]) -> Jet {
        (self.ft)(t, x)
    }
}

/// Random smooth trigonometric field
/// `u_j = Σ_m c_jm (1 + r_m t) sin(k_m·x + φ_m)`.
#[derive(Clone, Debug)]
pub struct TrigVector {
    pub modes: Vec<([f64; 3], f64, f64, [f64; 3])>,
}

impl TrigVector {
    pub fn random<R: Rng>(rng: &mut R, amp: f64, m: usize) -> Self {
        let modes = (0..m)
            .map(|_| {
                let k = [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)];
                let c = [rng.gen_range(-amp..amp), rng.gen_range(-amp..amp), rng.gen_range(-amp..amp)];
                (k, rng.gen_range(0.0..std::f64::consts::TAU), rng.gen_range(-1.0..1.0), c)
            })
            .collect();
        TrigVector { modes }
    }

    fn parts(&self, t: f64, x: &[Jet; 3], dt: bool) -> [Jet; 3] {
        let mut out = [Jet::cst(0.0); 3];
        for (k, ph, r, c) in &self.modes {
            let s = (x[0] * k[0] + x[1] * k[1] + x[2] * k[2] + *ph).sin();
            let tf = if dt { *r } else { 1.0 + r * t };
            for j in 0..3 {
                out[j] += s * (c[j] * tf);
            }
        }
        out
    }
}

impl VectorField for TrigVector {
    fn eval(&self, t: f64, x: &[Jet; 3]) -> [Jet; 3] {
        self.parts(t, x, false)
    }
    fn dt(&self, t: f64, x: &[Jet; 3]) -> [Jet; 3] {
        self.parts(t, x, true)
    }
}

/// Random smooth scalar `p = Σ_m c_m (1 + r_m t) cos(k_m·x + φ_m)`.
#[derive(Clone, Debug)]
pub struct TrigScalar {
    pub modes: Vec<([f64; 3], f64, f64, f64)>,
}

impl TrigScalar {
    pub fn random<R: Rng>(rng: &mut R, amp: f64, m: usize) -> Self {
        let modes = (0..m)
            .map(|_| {
                let k = [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)];
                (k, rng.gen_range(0.0..std::f64::consts::TAU), rng.gen_range(-1.0..1.0), rng.gen_range(-amp..amp))
            })
            .collect();
        TrigScalar { modes }
    }
}

impl ScalarField for TrigScalar {
    fn eval(&self, t: f64, x: &[Jet; 3]) -> Jet {
        self.modes.iter().fold(Jet::cst(0.0), |acc, (k, ph, r, c)| {
            acc + (x[0] * k[0] + x[1] * k[1] + x[2] * k[2] + *ph).cos() * (c * (1.0 + r * t))
        })
    }
    fn dt(&self, _t: f64, x: &[Jet; 3]) -> Jet {
        self.modes.iter().fold(Jet::cst(0.0), |acc, (k, ph, r, c)| {
            acc + (x[0] * k[0] + x[1] * k[1] + x[2] * k[2] + *ph).cos() * (c * r)
        })
    }
}

pub fn zero_vector() -> Arc<dyn VectorField> {
    FnVector::steady(|_| [Jet::cst(0.0); 3])
}

pub fn zero_scalar() -> Arc<dyn ScalarField> {
    FnScalar::steady(|_| Jet::cst(0.0))
}

/// Relative FD self-test of the analytic gradient at a point.
pub fn gradient_self_test(f: &dyn VectorField, t: f64, x: V3) -> f64 {
    let s = sample_vector(f, t, x);
    let d = 1e-6;
    let mut err = 0.0f64;
    for i in 0..3 {
        let mut e = V3::zeros();
        e[i] = d;
        let fp = V3::from(jet::values3(&f.eval(t, &jet::csts3((x + e).into()))));
        let fm = V3::from(jet::values3(&f.eval(t, &jet::csts3((x - e).into()))));
        let col = (fp - fm) / (2.0 * d);
        for j in 0..3 {
            err = err.max((col[j] - s.grad[(i, j)]).abs() / (1.0 + s.grad.abs().max()));
        }
    }
    err
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::surface::rng;

    #[test]
    fn trig_fields_pass_gradient_self_test() {
        let mut r = rng(2);
        for _ in 0..100 {
            let f = TrigVector::random(&mut r, 1.0, 4);
            let x = V3::new(r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0));
            assert!(gradient_self_test(&f, 0.3, x) < 1e-6);
        }
    }

    #[test]
    fn sums_are_linear() {
        let mut r = rng(4);
        let a: Arc<dyn SampledVector> = direct_vector(Arc::new(TrigVector::random(&mut r, 1.0, 3)));
        let b: Arc<dyn SampledVector> = direct_vector(Arc::new(TrigVector::random(&mut r, 1.0, 3)));
        let c = combine_vector(&a, &b, 0.25);
        let x = V3::new(0.1, 0.2, -0.3);
        let (sa, sb, sc) = (a.sample(0.5, x), b.sample(0.5, x), c.sample(0.5, x));
        assert!((sc.grad - sa.grad - sb.grad * 0.25).norm() < 1e-14);
        assert!((sc.hess[1] - sa.hess[1] - sb.hess[1] * 0.25).norm() < 1e-14);
    }
}
