//! Closed reference surfaces with frames, Weingarten tensor, grid calculus
//! and nearest-point projection.
//!
//! Conventions: the normal points outward, `L = -∇_Σ n` with
//! `(∇f)_ij = ∂_i f_j`, and the mean curvature is `H = tr L`, so the unit
//! sphere has `H = -2`.

use std::f64::consts::PI;
use std::ops::{Add, Mul, Sub};

use nalgebra::{Matrix2, Matrix3, Vector3};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jet::{self, Jet};

pub type V3 = Vector3<f64>;
pub type M3 = Matrix3<f64>;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SurfaceKind {
    Sphere { r: f64 },
    Ellipsoid { a: f64, b: f64, c: f64 },
    Torus { major: f64, minor: f64 },
}

impl SurfaceKind {
    /// Reach of the surface; `None` when only a sampled check is available.
    pub fn reach(&self) -> Option<f64> {
        match *self {
            SurfaceKind::Sphere { r } => Some(r),
            SurfaceKind::Torus { major, minor } => Some(minor.min(major - minor)),
            SurfaceKind::Ellipsoid { .. } => None,
        }
    }

    pub fn default_rho0(&self) -> f64 {
        match *self {
            SurfaceKind::Sphere { r } => 0.9 * r,
            SurfaceKind::Torus { major, minor } => 0.9 * minor.min(major - minor),
            SurfaceKind::Ellipsoid { a, b, c } => {
                let lo = a.min(b).min(c);
                let hi = a.max(b).max(c);
                0.9 * lo * lo / hi
            }
        }
    }

    fn has_poles(&self) -> bool {
        !matches!(self, SurfaceKind::Torus { .. })
    }
}

/// Structured parameter grid. For sphere and ellipsoid the first parameter
/// is the colatitude, cell-centered so that no node sits on a pole; the
/// second is the periodic longitude. The torus is periodic in both.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamGrid {
    pub nu: usize,
    pub nv: usize,
    pub poles: bool,
    pub du: f64,
    pub dv: f64,
    u0: f64,
}

impl ParamGrid {
    pub fn new(nu: usize, nv: usize, poles: bool) -> Result<ParamGrid> {
        if nu < 8 || nv < 8 {
            return Err(Error::Resolution { order: 4, needed: 8, got: nu.min(nv) });
        }
        if poles && nv % 2 != 0 {
            return Err(Error::Param(format!("longitude count {nv} must be even")));
        }
        let (du, u0) = if poles {
            (PI / nu as f64, 0.5 * PI / nu as f64)
        } else {
            (2.0 * PI / nu as f64, 0.0)
        };
        Ok(ParamGrid { nu, nv, poles, du, dv: 2.0 * PI / nv as f64, u0 })
    }

    pub fn len(&self) -> usize {
        self.nu * self.nv
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.nu, self.nv)
    }

    pub fn idx(&self, j: usize, k: usize) -> usize {
        j * self.nv + k
    }

    pub fn node(&self, j: usize, k: usize) -> [f64; 2] {
        [self.u0 + j as f64 * self.du, k as f64 * self.dv]
    }

    pub fn nodes(&self) -> Vec<[f64; 2]> {
        (0..self.nu)
            .flat_map(|j| (0..self.nv).map(move |k| (j, k)))
            .map(|(j, k)| self.node(j, k))
            .collect()
    }

    /// Index of the node at signed offsets from `(j, k)`, wrapping the
    /// periodic directions and reflecting through the poles.
    pub fn neighbor(&self, j: usize, k: usize, dj: isize, dk: isize) -> usize {
        let nu = self.nu as isize;
        let nv = self.nv as isize;
        let mut jj = j as isize + dj;
        let mut kk = k as isize + dk;
        if self.poles {
            if jj < 0 {
                jj = -1 - jj;
                kk += nv / 2;
            } else if jj >= nu {
                jj = 2 * nu - 1 - jj;
                kk += nv / 2;
            }
        } else {
            jj = jj.rem_euclid(nu);
        }
        kk = kk.rem_euclid(nv);
        (jj * nv + kk) as usize
    }

    /// Fourth-order centered derivative along parameter `dir` (0 = u, 1 = v).
    pub fn diff<T>(&self, f: &[T], dir: usize) -> Vec<T>
    where
        T: Copy + Add<Output = T> + Sub<Output = T> + Mul<f64, Output = T>,
    {
        assert_eq!(f.len(), self.len());
        let h = if dir == 0 { self.du } else { self.dv };
        let mut out = Vec::with_capacity(f.len());
        for j in 0..self.nu {
            for k in 0..self.nv {
                let at = |o: isize| {
                    let (dj, dk) = if dir == 0 { (o, 0) } else { (0, o) };
                    f[self.neighbor(j, k, dj, dk)]
                };
                let d = (at(-2) - at(2)) * (1.0 / 12.0) + (at(1) - at(-1)) * (8.0 / 12.0);
                out.push(d * (1.0 / h));
            }
        }
        out
    }

    /// Bicubic Lagrange interpolation of grid data at a (jet) parameter.
    pub fn interpolate(&self, f: &[f64], s: [Jet; 2]) -> Jet {
        let pu = (s[0] - self.u0) * (1.0 / self.du);
        let pv = s[1] * (1.0 / self.dv);
        let ju = pu.v.floor();
        let jv = pv.v.floor();
        let tu = pu - ju;
        let tv = pv - jv;
        let wu = lagrange4(tu);
        let wv = lagrange4(tv);
        let nu = self.nu as isize;
        let nv = self.nv as isize;
        let mut acc = Jet::cst(0.0);
        for (a, wa) in wu.iter().enumerate() {
            for (b, wb) in wv.iter().enumerate() {
                let j = ju as isize + a as isize - 1;
                let k = jv as isize + b as isize - 1;
                let (j0, k0) = (j.clamp(0, nu - 1), k.rem_euclid(nv));
                let idx = self.neighbor(j0 as usize, k0 as usize, j - j0, 0);
                acc += (*wa * *wb) * f[idx];
            }
        }
        acc
    }
}

fn lagrange4(t: Jet) -> [Jet; 4] {
    let tm = t + 1.0;
    let t1 = t - 1.0;
    let t2 = t - 2.0;
    [
        t * t1 * t2 * (-1.0 / 6.0),
        tm * t1 * t2 * 0.5,
        tm * t * t2 * (-0.5),
        tm * t * t1 * (1.0 / 6.0),
    ]
}

/// Tangent frame at a point of the surface.
#[derive(Clone, Copy, Debug)]
pub struct TangentFrame {
    pub tau: [V3; 2],
    pub dual: [V3; 2],
    pub n: V3,
}

impl TangentFrame {
    pub fn from_tangents(tau: [V3; 2], n: V3) -> Result<TangentFrame> {
        let g = Matrix2::new(
            tau[0].dot(&tau[0]),
            tau[0].dot(&tau[1]),
            tau[1].dot(&tau[0]),
            tau[1].dot(&tau[1]),
        );
        let sv = g.symmetric_eigenvalues();
        let (lo, hi) = (sv.min(), sv.max());
        if lo <= 1e-20 * hi || hi == 0.0 {
            return Err(Error::Geometry("tangent vectors are linearly dependent".into()));
        }
        let gi = g.try_inverse().ok_or_else(|| Error::Geometry("singular metric".into()))?;
        let dual = [
            tau[0] * gi[(0, 0)] + tau[1] * gi[(0, 1)],
            tau[0] * gi[(1, 0)] + tau[1] * gi[(1, 1)],
        ];
        Ok(TangentFrame { tau, dual, n })
    }

    /// Tangential projection `I - n⊗n`.
    pub fn projector(&self) -> M3 {
        M3::identity() - self.n * self.n.transpose()
    }

    /// Surface gradient from parameter derivatives of a scalar.
    pub fn grad(&self, du: f64, dv: f64) -> V3 {
        self.dual[0] * du + self.dual[1] * dv
    }

    /// Surface gradient matrix `(∇_Σ F)_ij = (∇_Σ F_j)_i` from parameter
    /// derivatives of a vector field.
    pub fn grad_vec(&self, du: &V3, dv: &V3) -> M3 {
        self.dual[0] * du.transpose() + self.dual[1] * dv.transpose()
    }
}

/// Geometry of one grid node.
#[derive(Clone, Copy, Debug)]
pub struct NodeGeom {
    pub s: [f64; 2],
    pub x: V3,
    pub frame: TangentFrame,
    pub weingarten: M3,
    pub mean_curvature: f64,
    pub area: f64,
}

/// Result of a nearest-point projection.
#[derive(Clone, Copy, Debug)]
pub struct Projection {
    pub s: [f64; 2],
    pub point: V3,
    pub normal: V3,
    pub dist: f64,
}

/// Jet-valued projection data for the closed-form kinds.
#[derive(Clone, Copy, Debug)]
pub struct ProjectionJet {
    pub point: [Jet; 3],
    pub normal: [Jet; 3],
    pub dist: Jet,
}

#[derive(Clone, Debug)]
pub struct ReferenceSurface {
    pub kind: SurfaceKind,
    pub center: V3,
    pub rho0: f64,
    pub grid: ParamGrid,
    nodes: Vec<NodeGeom>,
}

impl ReferenceSurface {
    pub fn new(kind: SurfaceKind, center: [f64; 3], rho0: Option<f64>, nu: usize, nv: usize) -> Result<Self> {
        match kind {
            SurfaceKind::Sphere { r } if r > 0.0 => {}
            SurfaceKind::Ellipsoid { a, b, c } if a > 0.0 && b > 0.0 && c > 0.0 => {}
            SurfaceKind::Torus { major, minor } if minor > 0.0 && major > minor => {}
            _ => return Err(Error::Param(format!("invalid shape parameters {kind:?}"))),
        }
        let rho0 = rho0.unwrap_or_else(|| kind.default_rho0());
        if rho0 <= 0.0 {
            return Err(Error::Param(format!("rho0 = {rho0} must be positive")));
        }
        if let Some(reach) = kind.reach() {
            if rho0 >= reach {
                return Err(Error::Param(format!("rho0 = {rho0} must be below the reach {reach}")));
            }
        }
        let grid = ParamGrid::new(nu, nv, kind.has_poles())?;
        let mut s = ReferenceSurface { kind, center: V3::from(center), rho0, grid, nodes: Vec::new() };
        s.nodes = s.grid.nodes().into_iter().map(|p| s.node_geometry(p)).collect::<Result<_>>()?;
        if kind.reach().is_none() {
            s.check_injectivity()?;
        }
        Ok(s)
    }

    pub fn sphere(r: f64, nu: usize, nv: usize) -> Result<Self> {
        Self::new(SurfaceKind::Sphere { r }, [0.0; 3], None, nu, nv)
    }

    pub fn torus(major: f64, minor: f64, nu: usize, nv: usize) -> Result<Self> {
        Self::new(SurfaceKind::Torus { major, minor }, [0.0; 3], None, nu, nv)
    }

    pub fn ellipsoid(a: f64, b: f64, c: f64, nu: usize, nv: usize) -> Result<Self> {
        Self::new(SurfaceKind::Ellipsoid { a, b, c }, [0.0; 3], None, nu, nv)
    }

    pub fn nodes(&self) -> &[NodeGeom] {
        &self.nodes
    }

    pub fn node(&self, i: usize) -> &NodeGeom {
        &self.nodes[i]
    }

    fn in_domain(&self, s: [f64; 2]) -> bool {
        !self.grid.poles || (0.0..=PI).contains(&s[0])
    }

    /// Parameterization Φ on jets.
    pub fn point_jet(&self, s: [Jet; 2]) -> [Jet; 3] {
        let c = self.center;
        let p = match self.kind {
            SurfaceKind::Sphere { r } => {
                let su = s[0].sin();
                [su * s[1].cos() * r, su * s[1].sin() * r, s[0].cos() * r]
            }
            SurfaceKind::Ellipsoid { a, b, c } => {
                let su = s[0].sin();
                [su * s[1].cos() * a, su * s[1].sin() * b, s[0].cos() * c]
            }
            SurfaceKind::Torus { major, minor } => {
                let w = s[0].cos() * minor + major;
                [w * s[1].cos(), w * s[1].sin(), s[0].sin() * minor]
            }
        };
        [p[0] + c[0], p[1] + c[1], p[2] + c[2]]
    }

    /// Outward unit normal as a function of the parameter, on jets.
    pub fn normal_jet(&self, s: [Jet; 2]) -> [Jet; 3] {
        match self.kind {
            SurfaceKind::Sphere { .. } => {
                let su = s[0].sin();
                [su * s[1].cos(), su * s[1].sin(), s[0].cos()]
            }
            SurfaceKind::Ellipsoid { a, b, c } => {
                let su = s[0].sin();
                let g = [su * s[1].cos() * (1.0 / a), su * s[1].sin() * (1.0 / b), s[0].cos() * (1.0 / c)];
                let inv = jet::norm3(&g).recip();
                jet::scale3(&g, inv)
            }
            SurfaceKind::Torus { .. } => {
                let cu = s[0].cos();
                [cu * s[1].cos(), cu * s[1].sin(), s[0].sin()]
            }
        }
    }

    /// Φ(s), refusing parameters outside a non-periodic domain.
    pub fn surface_point(&self, s: [f64; 2]) -> Result<V3> {
        if !self.in_domain(s) {
            return Err(Error::Domain(s));
        }
        Ok(self.point(s))
    }

    pub fn point(&self, s: [f64; 2]) -> V3 {
        V3::from(jet::values3(&self.point_jet([Jet::cst(s[0]), Jet::cst(s[1])])))
    }

    pub fn normal(&self, s: [f64; 2]) -> V3 {
        V3::from(jet::values3(&self.normal_jet([Jet::cst(s[0]), Jet::cst(s[1])])))
    }

    pub fn frame(&self, s: [f64; 2]) -> Result<TangentFrame> {
        let sj = [Jet::var(s[0], 0), Jet::var(s[1], 1)];
        let p = self.point_jet(sj);
        let tau = [
            V3::new(p[0].g[0], p[1].g[0], p[2].g[0]),
            V3::new(p[0].g[1], p[1].g[1], p[2].g[1]),
        ];
        TangentFrame::from_tangents(tau, self.normal(s))
    }

    /// Closed-form Weingarten tensor `L = -Σ_a τ^a ⊗ ∂_a n`.
    pub fn weingarten(&self, s: [f64; 2]) -> Result<M3> {
        let f = self.frame(s)?;
        let n = self.normal_jet([Jet::var(s[0], 0), Jet::var(s[1], 1)]);
        let dn = [
            V3::new(n[0].g[0], n[1].g[0], n[2].g[0]),
            V3::new(n[0].g[1], n[1].g[1], n[2].g[1]),
        ];
        Ok(-f.grad_vec(&dn[0], &dn[1]))
    }

    pub fn mean_curvature(&self, s: [f64; 2]) -> Result<f64> {
        Ok(self.weingarten(s)?.trace())
    }

    fn node_geometry(&self, s: [f64; 2]) -> Result<NodeGeom> {
        let frame = self.frame(s)?;
        let weingarten = self.weingarten(s)?;
        let g = frame.tau[0].cross(&frame.tau[1]).norm();
        Ok(NodeGeom {
            s,
            x: self.point(s),
            frame,
            weingarten,
            mean_curvature: weingarten.trace(),
            area: g * self.grid.du * self.grid.dv,
        })
    }

    /// Parameter of a point on (or near) the surface, on jets.
    pub fn param_of_point(&self, y: [Jet; 3]) -> [Jet; 2] {
        let q = [y[0] - self.center[0], y[1] - self.center[1], y[2] - self.center[2]];
        match self.kind {
            SurfaceKind::Sphere { .. } => {
                let r = jet::norm3(&q);
                [(q[2] / r).acos(), Jet::atan2(q[1], q[0])]
            }
            SurfaceKind::Ellipsoid { a, b, c } => {
                let w = [q[0] * (1.0 / a), q[1] * (1.0 / b), q[2] * (1.0 / c)];
                let r = jet::norm3(&w);
                [(w[2] / r).acos(), Jet::atan2(w[1], w[0])]
            }
            SurfaceKind::Torus { major, .. } => {
                let rho = (q[0].sq() + q[1].sq()).sqrt();
                [Jet::atan2(q[2], rho - major), Jet::atan2(q[1], q[0])]
            }
        }
    }

    /// Nearest-point projection with signed distance (positive outside).
    pub fn project(&self, x: V3) -> Result<Projection> {
        let q = x - self.center;
        let (s, dist) = match self.kind {
            SurfaceKind::Sphere { r } => {
                let rr = q.norm();
                if rr == 0.0 {
                    return Err(Error::Projection { dist: -r, rho0: self.rho0 });
                }
                ([(q[2] / rr).clamp(-1.0, 1.0).acos(), q[1].atan2(q[0])], rr - r)
            }
            SurfaceKind::Torus { major, minor } => {
                let rho = (q[0] * q[0] + q[1] * q[1]).sqrt();
                let w = (rho - major).hypot(q[2]);
                ([q[2].atan2(rho - major), q[1].atan2(q[0])], w - minor)
            }
            SurfaceKind::Ellipsoid { a, b, c } => {
                let (y, dist) = ellipsoid_closest(q, [a, b, c])?;
                let w = [y[0] / a, y[1] / b, y[2] / c];
                let rr = (w[0] * w[0] + w[1] * w[1] + w[2] * w[2]).sqrt();
                ([(w[2] / rr).clamp(-1.0, 1.0).acos(), w[1].atan2(w[0])], dist)
            }
        };
        if dist.abs() >= self.rho0 {
            return Err(Error::Projection { dist, rho0: self.rho0 });
        }
        let s = [s[0], s[1].rem_euclid(2.0 * PI)];
        let s = if self.grid.poles { s } else { [s[0].rem_euclid(2.0 * PI), s[1]] };
        Ok(Projection { s, point: self.point(s), normal: self.normal(s), dist })
    }

    /// Projection on jets for sphere and torus; `None` for the ellipsoid,
    /// whose projection is only available iteratively.
    /// Points where the projection is singular (sphere centre, torus axis)
    /// also give `None`.
    pub fn project_jet(&self, x: [Jet; 3]) -> Option<ProjectionJet> {
        let q = [x[0] - self.center[0], x[1] - self.center[1], x[2] - self.center[2]];
        let p = self.project_jet_raw(q, x)?;
        let finite = p.normal.iter().chain(p.point.iter()).chain(std::iter::once(&p.dist)).all(|j| j.is_finite());
        finite.then_some(p)
    }

    fn project_jet_raw(&self, q: [Jet; 3], x: [Jet; 3]) -> Option<ProjectionJet> {
        match self.kind {
            SurfaceKind::Sphere { r } => {
                let rr = jet::norm3(&q);
                let n = jet::scale3(&q, rr.recip());
                let point = [n[0] * r + self.center[0], n[1] * r + self.center[1], n[2] * r + self.center[2]];
                Some(ProjectionJet { point, normal: n, dist: rr - r })
            }
            SurfaceKind::Torus { major, minor } => {
                let rho = (q[0].sq() + q[1].sq()).sqrt();
                let w0 = rho - major;
                let w = (w0.sq() + q[2].sq()).sqrt();
                let cu = w0 / w;
                let n = [cu * q[0] / rho, cu * q[1] / rho, q[2] / w];
                let d = w - minor;
                let point = [x[0] - n[0] * d, x[1] - n[1] * d, x[2] - n[2] * d];
                Some(ProjectionJet { point, normal: n, dist: d })
            }
            SurfaceKind::Ellipsoid { .. } => None,
        }
    }

    /// Sample `x = Φ(s) + λ n(s)` and check the projection recovers `s`.
    fn check_injectivity(&self) -> Result<()> {
        for (i, nd) in self.nodes.iter().enumerate().step_by(7) {
            for &f in &[-0.95, -0.5, 0.5, 0.95] {
                let lam = f * self.rho0 * if i % 2 == 0 { 1.0 } else { 0.97 };
                let x = nd.x + nd.frame.n * lam;
                let p = self.project(x)?;
                if (p.point - nd.x).norm() > 1e-8 {
                    return Err(Error::Param(format!(
                        "rho0 = {} fails the injectivity check at node {i}",
                        self.rho0
                    )));
                }
            }
        }
        Ok(())
    }

    /// Random parameter, away from the poles for sphere/ellipsoid.
    pub fn random_param<R: Rng>(&self, rng: &mut R) -> [f64; 2] {
        if self.grid.poles {
            [rng.gen_range(0.15..PI - 0.15), rng.gen_range(0.0..2.0 * PI)]
        } else {
            [rng.gen_range(0.0..2.0 * PI), rng.gen_range(0.0..2.0 * PI)]
        }
    }

    /// Random point of the tube at normalized depth `|d|/ρ₀ <= frac`.
    pub fn random_tube_point<R: Rng>(&self, rng: &mut R, frac: f64) -> V3 {
        let s = self.random_param(rng);
        let lam = rng.gen_range(-frac..frac) * self.rho0;
        self.point(s) + self.normal(s) * lam
    }

    pub fn check_shape(&self, len: usize) -> Result<()> {
        if len != self.grid.len() {
            return Err(Error::Shape { expected: self.grid.shape(), got: (len, 1) });
        }
        Ok(())
    }

    /// Sample a function of the surface point on the grid.
    pub fn sample(&self, f: impl Fn(&NodeGeom) -> f64) -> SurfaceScalar {
        SurfaceScalar { shape: self.grid.shape(), values: self.nodes.iter().map(f).collect() }
    }

    /// Surface gradient of grid data at every node.
    pub fn grad_grid(&self, f: &[f64]) -> Result<Vec<V3>> {
        self.check_shape(f.len())?;
        let du = self.grid.diff(f, 0);
        let dv = self.grid.diff(f, 1);
        Ok(self.nodes.iter().enumerate().map(|(i, nd)| nd.frame.grad(du[i], dv[i])).collect())
    }

    /// Surface gradient matrices `(∇_Σ F)_ij = (∇_Σ F_j)_i` of grid vectors.
    pub fn grad_vec_grid(&self, f: &[V3]) -> Result<Vec<M3>> {
        self.check_shape(f.len())?;
        let du = self.grid.diff(f, 0);
        let dv = self.grid.diff(f, 1);
        Ok(self.nodes.iter().enumerate().map(|(i, nd)| nd.frame.grad_vec(&du[i], &dv[i])).collect())
    }

    /// Surface divergence `tr ∇_Σ F` of grid vectors.
    pub fn div_grid(&self, f: &[V3]) -> Result<Vec<f64>> {
        Ok(self.grad_vec_grid(f)?.iter().map(|m| m.trace()).collect())
    }

    /// Laplace–Beltrami operator `div_Σ ∇_Σ f` of grid data.
    pub fn laplace_beltrami_grid(&self, f: &[f64]) -> Result<Vec<f64>> {
        let g = self.grad_grid(f)?;
        self.div_grid(&g)
    }

    /// Surface gradient of a sampled scalar at one node.
    pub fn surface_grad(&self, f: &SurfaceScalar, node: usize) -> Result<V3> {
        self.check_scalar(f)?;
        Ok(self.grad_grid(&f.values)?[node])
    }

    /// Laplace–Beltrami of a sampled scalar at one node.
    pub fn laplace_beltrami(&self, f: &SurfaceScalar, node: usize) -> Result<f64> {
        self.check_scalar(f)?;
        Ok(self.laplace_beltrami_grid(&f.values)?[node])
    }

    pub fn check_scalar(&self, f: &SurfaceScalar) -> Result<()> {
        if f.shape != self.grid.shape() || f.values.len() != self.grid.len() {
            return Err(Error::Shape { expected: self.grid.shape(), got: f.shape });
        }
        Ok(())
    }

    /// Generic finite-difference geometry of an arbitrary parameterized
    /// surface given by grid points; normals are oriented along `orient`.
    pub fn fd_geometry(&self, points: &[V3], orient: &[V3]) -> Result<Vec<NodeGeom>> {
        self.check_shape(points.len())?;
        let du = self.grid.diff(points, 0);
        let dv = self.grid.diff(points, 1);
        let normals: Vec<V3> = (0..points.len())
            .map(|i| {
                let n = du[i].cross(&dv[i]).normalize();
                if n.dot(&orient[i]) < 0.0 {
                    -n
                } else {
                    n
                }
            })
            .collect();
        let ndu = self.grid.diff(&normals, 0);
        let ndv = self.grid.diff(&normals, 1);
        let nodes = self.grid.nodes();
        (0..points.len())
            .map(|i| {
                let frame = TangentFrame::from_tangents([du[i], dv[i]], normals[i])?;
                let weingarten = -frame.grad_vec(&ndu[i], &ndv[i]);
                Ok(NodeGeom {
                    s: nodes[i],
                    x: points[i],
                    frame,
                    weingarten,
                    mean_curvature: weingarten.trace(),
                    area: du[i].cross(&dv[i]).norm() * self.grid.du * self.grid.dv,
                })
            })
            .collect()
    }

    /// Finite-difference geometry of the reference surface itself.
    pub fn fd_self_geometry(&self) -> Result<Vec<NodeGeom>> {
        let pts: Vec<V3> = self.nodes.iter().map(|n| n.x).collect();
        let nrm: Vec<V3> = self.nodes.iter().map(|n| n.frame.n).collect();
        self.fd_geometry(&pts, &nrm)
    }
}

/// Scalar samples on a surface grid.
#[derive(Clone, Debug, PartialEq)]
pub struct SurfaceScalar {
    pub shape: (usize, usize),
    pub values: Vec<f64>,
}

/// Vector samples on a surface grid.
#[derive(Clone, Debug, PartialEq)]
pub struct SurfaceVector {
    pub shape: (usize, usize),
    pub values: Vec<V3>,
}

/// Closest point on the ellipsoid `Σ (y_i/a_i)² = 1` to `p` by safeguarded
/// Newton on the secular equation `Σ (a_i p_i / (a_i² + t))² = 1`.
fn ellipsoid_closest(p: V3, ax: [f64; 3]) -> Result<(V3, f64)> {
    let f = |t: f64| -> (f64, f64) {
        let mut v = -1.0;
        let mut d = 0.0;
        for i in 0..3 {
            let w = ax[i] * p[i] / (ax[i] * ax[i] + t);
            v += w * w;
            d += -2.0 * w * w / (ax[i] * ax[i] + t);
        }
        (v, d)
    };
    let amin = ax[0].min(ax[1]).min(ax[2]);
    let amax = ax[0].max(ax[1]).max(ax[2]);
    let mut lo = -amin * amin;
    let mut hi = amax * p.norm() + 1e-300;
    // radial scaling initial guess
    let rs = ((p[0] / ax[0]).powi(2) + (p[1] / ax[1]).powi(2) + (p[2] / ax[2]).powi(2)).sqrt();
    if rs == 0.0 {
        return Err(Error::Projection { dist: -amin, rho0: 0.0 });
    }
    let y0 = p / rs;
    let g0 = V3::new(y0[0] / (ax[0] * ax[0]), y0[1] / (ax[1] * ax[1]), y0[2] / (ax[2] * ax[2]));
    let mut t = (p - y0).dot(&g0.normalize()) / g0.norm();
    let mut trace = Vec::new();
    for it in 0..50 {
        let (v, d) = f(t);
        trace.push(v.abs());
        if v > 0.0 {
            lo = lo.max(t);
        } else {
            hi = hi.min(t);
        }
        if v.abs() < 1e-12 {
            let y = V3::new(
                ax[0] * ax[0] * p[0] / (ax[0] * ax[0] + t),
                ax[1] * ax[1] * p[1] / (ax[1] * ax[1] + t),
                ax[2] * ax[2] * p[2] / (ax[2] * ax[2] + t),
            );
            let dist = (p - y).norm() * t.signum();
            return Ok((y, dist));
        }
        let mut tn = t - v / d;
        if !(tn > lo && tn < hi) || !tn.is_finite() {
            tn = 0.5 * (lo + hi);
        }
        t = tn;
        let _ = it;
    }
    Err(Error::Newton { iters: 50, trace })
}

/// Draw a deterministic RNG stream from a seed.
pub fn rng(seed: u64) -> rand_chacha::ChaCha8Rng {
    use rand::SeedableRng;
    rand_chacha::ChaCha8Rng::seed_from_u64(seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn trivial_points() {
        let s = ReferenceSurface::sphere(1.0, 16, 32).unwrap();
        assert_abs_diff_eq!(s.point([PI / 2.0, 0.0]), V3::new(1.0, 0.0, 0.0), epsilon = 1e-15);
        let t = ReferenceSurface::torus(2.0, 0.5, 16, 32).unwrap();
        assert_abs_diff_eq!(t.point([0.0, 0.0]), V3::new(2.5, 0.0, 0.0), epsilon = 1e-15);
        assert!(s.surface_point([-0.1, 0.0]).is_err());
        assert!(t.surface_point([-0.1, 0.0]).is_ok());
    }

    #[test]
    fn degenerate_ellipsoid_is_sphere() {
        let e = ReferenceSurface::ellipsoid(1.0, 1.0, 1.0, 16, 32).unwrap();
        let s = ReferenceSurface::sphere(1.0, 16, 32).unwrap();
        let mut r = rng(3);
        for _ in 0..100 {
            let p = s.random_param(&mut r);
            assert!((e.point(p) - s.point(p)).norm() < 1e-14);
        }
    }

    #[test]
    fn projection_examples() {
        let s = ReferenceSurface::sphere(1.0, 16, 32).unwrap();
        let p = s.project(V3::new(1.2, 0.0, 0.0)).unwrap();
        assert_abs_diff_eq!(p.point, V3::new(1.0, 0.0, 0.0), epsilon = 1e-15);
        assert_abs_diff_eq!(p.dist, 0.2, epsilon = 1e-15);
        let p = s.project(V3::new(0.9, 0.0, 0.0)).unwrap();
        assert_abs_diff_eq!(p.dist, -0.1, epsilon = 1e-15);
        let t = ReferenceSurface::torus(2.0, 0.5, 16, 32).unwrap();
        let p = t.project(V3::new(2.7, 0.0, 0.0)).unwrap();
        assert_abs_diff_eq!(p.point, V3::new(2.5, 0.0, 0.0), epsilon = 1e-15);
        assert_abs_diff_eq!(p.dist, 0.2, epsilon = 1e-15);
        assert!(s.project(V3::new(2.5, 0.0, 0.0)).is_err());
    }

    #[test]
    fn ellipsoid_projection_round_trip() {
        let e = ReferenceSurface::ellipsoid(1.3, 1.0, 0.8, 16, 32).unwrap();
        let mut r = rng(11);
        for _ in 0..200 {
            let s = e.random_param(&mut r);
            let lam = r.gen_range(-0.9..0.9) * e.rho0;
            let x = e.point(s) + e.normal(s) * lam;
            let p = e.project(x).unwrap();
            assert!((p.point + p.normal * p.dist - x).norm() < 1e-10);
            assert!((p.dist - lam).abs() < 1e-10);
        }
    }

    #[test]
    fn weingarten_examples() {
        let s = ReferenceSurface::sphere(2.0, 16, 32).unwrap();
        let l = s.weingarten([0.7, 1.3]).unwrap();
        let n = s.normal([0.7, 1.3]);
        let p = M3::identity() - n * n.transpose();
        assert!((l + p * 0.5).norm() < 1e-14);
        let t = ReferenceSurface::torus(2.0, 0.5, 16, 32).unwrap();
        let l = t.weingarten([0.0, 0.0]).unwrap();
        let mut ev: Vec<f64> = l.symmetric_eigen().eigenvalues.iter().copied().collect();
        ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_abs_diff_eq!(ev[0], -2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(ev[1], -0.4, epsilon = 1e-12);
        assert_abs_diff_eq!(ev[2], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn grid_interpolation_reproduces_cubics() {
        let t = ReferenceSurface::torus(2.0, 0.5, 16, 16).unwrap();
        let f: Vec<f64> = t.grid.nodes().iter().map(|s| s[0].sin() * s[1].cos()).collect();
        let v = t.grid.interpolate(&f, [Jet::cst(0.33), Jet::cst(5.9)]).v;
        assert!((v - 0.33f64.sin() * 5.9f64.cos()).abs() < 1e-3);
    }
}
