//! Desk-scale dynamics: a backward-Euler solver for the magnetic heat
//! problem on a box, explicit transport of the height function, and a
//! contraction probe for the reduced `(B, h)` fixed-point map with the
//! velocity prescribed.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{PullbackVector, SampledVector, ScalarSample, VecSample, VectorField};
use crate::hanzawa::{GateParams, Hanzawa, HeightField};
use crate::interface_geometry::InterfaceGeometry;
use crate::jet;
use crate::operators::{g2_terms, sum_terms, Local};
use crate::surface::{ReferenceSurface, M3, V3};

/// Cube `[lo, lo + len]³` with `n³` nodes including the Dirichlet boundary.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxGrid {
    pub lo: [f64; 3],
    pub len: f64,
    pub n: usize,
}

impl BoxGrid {
    pub fn new(lo: [f64; 3], len: f64, n: usize) -> Result<Self> {
        if n < 8 {
            return Err(Error::Resolution { order: 2, needed: 8, got: n });
        }
        if !(len > 0.0 && len.is_finite()) {
            return Err(Error::Param(format!("box side {len} must be positive")));
        }
        Ok(BoxGrid { lo, len, n })
    }

    pub fn unit(n: usize) -> Result<Self> {
        BoxGrid::new([0.0; 3], 1.0, n)
    }

    pub fn dx(&self) -> f64 {
        self.len / (self.n - 1) as f64
    }

    pub fn len_nodes(&self) -> usize {
        self.n * self.n * self.n
    }

    pub fn idx(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.n + j) * self.n + k
    }

    pub fn ijk(&self, m: usize) -> [usize; 3] {
        [m / (self.n * self.n), (m / self.n) % self.n, m % self.n]
    }

    pub fn point(&self, m: usize) -> V3 {
        let [i, j, k] = self.ijk(m);
        let h = self.dx();
        V3::new(self.lo[0] + i as f64 * h, self.lo[1] + j as f64 * h, self.lo[2] + k as f64 * h)
    }

    pub fn is_boundary(&self, m: usize) -> bool {
        self.ijk(m).iter().any(|&a| a == 0 || a == self.n - 1)
    }

    /// Whether the closed tube around `surface` lies strictly inside.
    pub fn contains_tube(&self, surface: &ReferenceSurface) -> bool {
        let margin = surface.rho0;
        surface.nodes().iter().all(|nd| {
            (0..3).all(|a| {
                let lo = nd.x[a] - margin;
                let hi = nd.x[a] + margin;
                lo > self.lo[a] && hi < self.lo[a] + self.len
            })
        })
    }

    pub fn sample(&self, f: impl Fn(V3) -> V3 + Sync) -> Vec<V3> {
        (0..self.len_nodes()).into_par_iter().map(|m| f(self.point(m))).collect()
    }

    /// `(Σ dx³ |f|^q)^{1/q}` over all nodes.
    pub fn lq(&self, f: &[V3], q: f64) -> f64 {
        let w = self.dx().powi(3);
        (w * f.iter().map(|v| v.norm().powf(q)).sum::<f64>()).powf(1.0 / q)
    }

    pub fn sup(&self, f: &[V3]) -> f64 {
        f.iter().fold(0.0f64, |m, v| m.max(v.norm()))
    }

    /// Second-order central value, gradient and Hessian at an interior node.
    /// `grad[(i, j)] = ∂_i f_j`, `hess[j][(a, b)] = ∂_a∂_b f_j`.
    pub fn fd_sample(&self, f: &[V3], m: usize) -> VecSample {
        let [i, j, k] = self.ijk(m);
        let h = self.dx();
        let at = |di: isize, dj: isize, dk: isize| -> V3 {
            f[self.idx((i as isize + di) as usize, (j as isize + dj) as usize, (k as isize + dk) as usize)]
        };
        let unit = |a: usize| -> [isize; 3] {
            let mut e = [0; 3];
            e[a] = 1;
            e
        };
        let shift = |e: [isize; 3], s: isize| at(e[0] * s, e[1] * s, e[2] * s);
        let mut s = VecSample::zero();
        s.v = f[m];
        for a in 0..3 {
            let ea = unit(a);
            let d = (shift(ea, 1) - shift(ea, -1)) / (2.0 * h);
            for c in 0..3 {
                s.grad[(a, c)] = d[c];
            }
            let d2 = (shift(ea, 1) - f[m] * 2.0 + shift(ea, -1)) / (h * h);
            for c in 0..3 {
                s.hess[c][(a, a)] = d2[c];
            }
            for b in a + 1..3 {
                let eb = unit(b);
                let pp = at(ea[0] + eb[0], ea[1] + eb[1], ea[2] + eb[2]);
                let pm = at(ea[0] - eb[0], ea[1] - eb[1], ea[2] - eb[2]);
                let mp = at(-ea[0] + eb[0], -ea[1] + eb[1], -ea[2] + eb[2]);
                let mm = at(-ea[0] - eb[0], -ea[1] - eb[1], -ea[2] - eb[2]);
                let dab = (pp - pm - mp + mm) / (4.0 * h * h);
                for c in 0..3 {
                    s.hess[c][(a, b)] = dab[c];
                    s.hess[c][(b, a)] = dab[c];
                }
            }
        }
        s
    }
}

/// Backward-Euler settings for `∂_t B − σΔB = g₂`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParabolicConfig {
    pub sigma: f64,
    pub dt: f64,
    pub steps: usize,
    pub cg_tol: f64,
    pub cg_max_iter: usize,
}

impl ParabolicConfig {
    pub fn new(sigma: f64, dt: f64, steps: usize) -> Self {
        ParabolicConfig { sigma, dt, steps, cg_tol: 1e-10, cg_max_iter: 2000 }
    }

    fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0 && self.dt > 0.0 && self.cg_tol > 0.0) {
            return Err(Error::Param("sigma, dt and cg_tol must be positive".into()));
        }
        Ok(())
    }
}

/// Solution on every time level `t_k = k Δt`, `k = 0..=steps`.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<V3>>,
    pub cg_iters: Vec<usize>,
}

/// Source evaluated at `(time level, node)`.
pub type Source<'a> = &'a (dyn Fn(usize, usize) -> V3 + Sync);

const DOT_CHUNK: usize = 4096;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    let parts: Vec<f64> = a
        .par_chunks(DOT_CHUNK)
        .zip(b.par_chunks(DOT_CHUNK))
        .map(|(x, y)| x.iter().zip(y).map(|(p, q)| p * q).sum::<f64>())
        .collect();
    parts.iter().sum()
}

/// `(I − rΔ_h)x` on interior nodes (`r = σΔt/Δx²` folded in), identity on
/// the boundary, where every iterate stays zero.
fn apply(grid: &BoxGrid, r: f64, x: &[f64], y: &mut [f64]) {
    let n = grid.n;
    y.par_iter_mut().enumerate().for_each(|(m, ym)| {
        if grid.is_boundary(m) {
            *ym = x[m];
            return;
        }
        let nb = x[m - 1] + x[m + 1] + x[m - n] + x[m + n] + x[m - n * n] + x[m + n * n];
        *ym = (1.0 + 6.0 * r) * x[m] - r * nb;
    });
}

fn cg(grid: &BoxGrid, r: f64, rhs: &[f64], x: &mut [f64], tol: f64, max_iter: usize) -> Result<usize> {
    let nn = rhs.len();
    let mut ax = vec![0.0; nn];
    apply(grid, r, x, &mut ax);
    let mut res: Vec<f64> = rhs.iter().zip(&ax).map(|(b, a)| b - a).collect();
    let norm_b = dot(rhs, rhs).sqrt();
    if norm_b == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(0);
    }
    let mut p = res.clone();
    let mut rr = dot(&res, &res);
    let mut history = Vec::new();
    let mut ap = vec![0.0; nn];
    for it in 0..max_iter {
        let rel = rr.sqrt() / norm_b;
        history.push(rel);
        if rel <= tol {
            return Ok(it);
        }
        apply(grid, r, &p, &mut ap);
        let alpha = rr / dot(&p, &ap);
        x.par_iter_mut().zip(&p).for_each(|(xi, pi)| *xi += alpha * pi);
        res.par_iter_mut().zip(&ap).for_each(|(ri, ai)| *ri -= alpha * ai);
        let rr_new = dot(&res, &res);
        let beta = rr_new / rr;
        p.par_iter_mut().zip(&res).for_each(|(pi, ri)| *pi = ri + beta * *pi);
        rr = rr_new;
    }
    let keep = history.len().saturating_sub(10);
    Err(Error::Cg { iters: max_iter, residuals: history[keep..].to_vec() })
}

/// Backward Euler in time, 7-point Laplacian in space, homogeneous
/// Dirichlet data. `B0` must vanish on the boundary.
pub fn solve_parabolic(grid: &BoxGrid, b0: &[V3], g2: Option<Source>, cfg: &ParabolicConfig) -> Result<Trajectory> {
    cfg.validate()?;
    if b0.len() != grid.len_nodes() {
        return Err(Error::Shape { expected: (grid.len_nodes(), 3), got: (b0.len(), 3) });
    }
    let scale = grid.sup(b0).max(1.0);
    if (0..b0.len()).any(|m| grid.is_boundary(m) && b0[m].norm() > 1e-14 * scale) {
        return Err(Error::Param("initial field must vanish on the box boundary".into()));
    }
    let r = cfg.sigma * cfg.dt / (grid.dx() * grid.dx());
    let nn = grid.len_nodes();
    let mut states = vec![b0.to_vec()];
    let mut cg_iters = Vec::with_capacity(cfg.steps);
    for step in 1..=cfg.steps {
        let prev = states.last().expect("initial state present");
        let mut next = vec![V3::zeros(); nn];
        let mut worst = 0;
        for c in 0..3 {
            let rhs: Vec<f64> = (0..nn)
                .into_par_iter()
                .map(|m| {
                    if grid.is_boundary(m) {
                        0.0
                    } else {
                        prev[m][c] + g2.map_or(0.0, |g| cfg.dt * g(step, m)[c])
                    }
                })
                .collect();
            let mut x: Vec<f64> = prev.iter().map(|v| v[c]).collect();
            worst = worst.max(cg(grid, r, &rhs, &mut x, cfg.cg_tol, cfg.cg_max_iter)?);
            for m in 0..nn {
                next[m][c] = x[m];
            }
        }
        cg_iters.push(worst);
        states.push(next);
    }
    let times = (0..=cfg.steps).map(|k| k as f64 * cfg.dt).collect();
    Ok(Trajectory { times, states, cg_iters })
}

/// Discrete Dirichlet eigenvalue of `−Δ_h` for `∏ sin(π x_i)` on the unit
/// box.
pub fn discrete_eigenvalue(grid: &BoxGrid) -> f64 {
    let h = grid.dx();
    let per_axis = 4.0 / (h * h) * (std::f64::consts::PI * h / (2.0 * grid.len)).sin().powi(2);
    3.0 * per_axis
}

/// `∂_t h = ū·n − b·∇_Σh + ((I − M₀)∇_Σh)·ū + (b − ū)·∇_Σh` on the grid,
/// with `ū = u(x + h n)` at time `t`.
pub fn height_rhs(surface: &ReferenceSurface, h: &[f64], u: &dyn VectorField, b: &[V3], t: f64, delta0: f64) -> Result<Vec<f64>> {
    surface.check_shape(b.len())?;
    let ig = InterfaceGeometry::new(surface, h, delta0)?;
    let nodes = surface.nodes();
    Ok((0..h.len())
        .into_par_iter()
        .map(|i| {
            let nd = &nodes[i];
            let y = nd.x + nd.frame.n * h[i];
            let ub = V3::from(jet::values3(&u.eval(t, &jet::csts3(y.into()))));
            let gh = ig.grad_h[i];
            let bt = nd.frame.projector() * b[i];
            let g5 = ((M3::identity() - ig.m0[i]) * gh).dot(&ub) + (bt - ub).dot(&gh);
            ub.dot(&nd.frame.n) - bt.dot(&gh) + g5
        })
        .collect())
}

/// One Heun (RK2) step of the height equation. A gate failure at either
/// stage rejects the step.
pub fn step_height(
    surface: &ReferenceSurface,
    h: &[f64],
    u: &dyn VectorField,
    b: &[V3],
    t: f64,
    dt: f64,
    delta0: f64,
) -> Result<Vec<f64>> {
    let reject = |e: Error, at: f64| match e {
        Error::HeightTooLarge { .. } | Error::Gate(_) => Error::StepRejected { t: at, reason: e.to_string() },
        other => other,
    };
    let k1 = height_rhs(surface, h, u, b, t, delta0).map_err(|e| reject(e, t))?;
    let mid: Vec<f64> = h.iter().zip(&k1).map(|(a, k)| a + dt * k).collect();
    let k2 = height_rhs(surface, &mid, u, b, t + dt, delta0).map_err(|e| reject(e, t + dt))?;
    let out: Vec<f64> = h.iter().zip(k1.iter().zip(&k2)).map(|(a, (p, q))| a + 0.5 * dt * (p + q)).collect();
    InterfaceGeometry::new(surface, &out, delta0).map_err(|e| reject(e, t + dt))?;
    Ok(out)
}

/// Integrate the height equation over `steps` RK2 steps; returns every level.
pub fn evolve_height(
    surface: &ReferenceSurface,
    h0: &[f64],
    u: &dyn VectorField,
    b: &[V3],
    dt: f64,
    steps: usize,
    delta0: f64,
) -> Result<Vec<Vec<f64>>> {
    let mut out = vec![h0.to_vec()];
    for k in 0..steps {
        let next = step_height(surface, out.last().expect("nonempty"), u, b, k as f64 * dt, dt, delta0)?;
        out.push(next);
    }
    Ok(out)
}

/// Probe settings: box, horizon, smallness gates and the norm exponent.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvolutionConfig {
    pub box_n: usize,
    pub t_final: f64,
    pub steps: usize,
    pub sigma: f64,
    pub q: f64,
    pub max_iter: usize,
    pub tol: f64,
    pub gate: GateParams,
    pub cg_tol: f64,
}

impl Default for EvolutionConfig {
    fn default() -> Self {
        EvolutionConfig {
            box_n: 9,
            t_final: 0.05,
            steps: 8,
            sigma: 0.1,
            q: 2.0,
            max_iter: 8,
            tol: 1e-12,
            gate: GateParams::default(),
            cg_tol: 1e-10,
        }
    }
}

impl EvolutionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.t_final > 0.0 && self.sigma > 0.0 && self.q >= 1.0 && self.tol > 0.0) || self.steps == 0 || self.max_iter == 0 {
            return Err(Error::Param("evolution config needs T, sigma, tol > 0, q >= 1 and nonzero step/iteration counts".into()));
        }
        Ok(())
    }

    pub fn dt(&self) -> f64 {
        self.t_final / self.steps as f64
    }
}

/// One iterate `z = (B, h)` on all time levels.
#[derive(Clone, Debug)]
pub struct Iterate {
    pub b: Vec<Vec<V3>>,
    pub h: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FixedPointTrace {
    pub t_final: f64,
    /// `‖z⁽ᵏ⁺¹⁾ − z⁽ᵏ⁾‖` for `k = 0, 1, …`
    pub residuals: Vec<f64>,
    /// `residuals[k] / residuals[k−1]`, from the second iteration on.
    pub ratios: Vec<f64>,
    pub contraction: Option<f64>,
    pub below_one: bool,
    pub converged: bool,
    pub diverged: bool,
    #[serde(skip)]
    pub iterates: Vec<Iterate>,
}

/// Inputs of the reduced map: the box, the reference surface, the
/// prescribed velocity and the auxiliary tangential field `b` on Σ.
pub struct ProbeSetup {
    pub grid: BoxGrid,
    pub surface: Arc<ReferenceSurface>,
    pub u: Arc<dyn VectorField>,
    pub aux_b: Vec<V3>,
}

fn time_derivative(levels: &[Vec<f64>], dt: f64, k: usize) -> Vec<f64> {
    let n = levels.len();
    if n < 3 {
        return if n == 2 {
            levels[1].iter().zip(&levels[0]).map(|(a, b)| (a - b) / dt).collect()
        } else {
            vec![0.0; levels[0].len()]
        };
    }
    let f = |a: usize, b: usize, c: usize, w: [f64; 3]| -> Vec<f64> {
        (0..levels[0].len())
            .map(|i| (w[0] * levels[a][i] + w[1] * levels[b][i] + w[2] * levels[c][i]) / dt)
            .collect()
    };
    if k == 0 {
        f(0, 1, 2, [-1.5, 2.0, -0.5])
    } else if k == n - 1 {
        f(n - 3, n - 2, n - 1, [0.5, -2.0, 1.5])
    } else {
        f(k - 1, k, k + 1, [-0.5, 0.0, 0.5])
    }
}

impl ProbeSetup {
    fn check(&self, cfg: &EvolutionConfig) -> Result<()> {
        cfg.validate()?;
        self.surface.check_shape(self.aux_b.len())?;
        if !self.grid.contains_tube(&self.surface) {
            return Err(Error::Param("the tube around the surface must lie strictly inside the box".into()));
        }
        Ok(())
    }

    /// `G₂` at every node and level of an iterate.
    fn sources(&self, z: &Iterate, cfg: &EvolutionConfig) -> Result<Vec<Vec<V3>>> {
        let dt = cfg.dt();
        (0..z.b.len())
            .map(|k| {
                let t = k as f64 * dt;
                let hf = HeightField::new(self.surface.clone(), z.h[k].clone(), Some(time_derivative(&z.h, dt, k)))?;
                let hz = Hanzawa::new(self.surface.clone(), hf.interpolant(), t, cfg.gate)?;
                let ubar = PullbackVector { field: self.u.clone(), hz: hz.clone() };
                let b = &z.b[k];
                (0..self.grid.len_nodes())
                    .into_par_iter()
                    .map(|m| {
                        if self.grid.is_boundary(m) {
                            return Ok(V3::zeros());
                        }
                        let x = self.grid.point(m);
                        let c = hz.coeffs(x)?;
                        let l = Local {
                            u: ubar.sample(t, x),
                            b: self.grid.fd_sample(b, m),
                            p: ScalarSample::zero(),
                            m1: c.m1,
                            m2: c.m2,
                            m3: c.m3,
                            m4: c.m4,
                        };
                        Ok(sum_terms(&g2_terms(&l, cfg.sigma)))
                    })
                    .collect()
            })
            .collect()
    }

    /// `K(z)`: parabolic solve with sources from `z`, heights by the
    /// trapezoid rule on the height right-hand side of `z`.
    pub fn apply_map(&self, z: &Iterate, cfg: &EvolutionConfig) -> Result<Iterate> {
        let dt = cfg.dt();
        let src = self.sources(z, cfg)?;
        let pc = ParabolicConfig { cg_tol: cfg.cg_tol, ..ParabolicConfig::new(cfg.sigma, dt, cfg.steps) };
        let traj = solve_parabolic(&self.grid, &z.b[0], Some(&|k, m| src[k][m]), &pc)?;
        let rhs: Vec<Vec<f64>> = z
            .h
            .iter()
            .enumerate()
            .map(|(k, h)| height_rhs(&self.surface, h, self.u.as_ref(), &self.aux_b, k as f64 * dt, cfg.gate.delta0))
            .collect::<Result<_>>()?;
        let mut h = vec![z.h[0].clone()];
        for k in 0..cfg.steps {
            let prev = &h[k];
            let next: Vec<f64> = (0..prev.len()).map(|i| prev[i] + 0.5 * dt * (rhs[k][i] + rhs[k + 1][i])).collect();
            HeightField::new(self.surface.clone(), next.clone(), None)?
                .check_gate(cfg.gate.delta0)
                .map_err(|e| Error::StepRejected { t: (k + 1) as f64 * dt, reason: e.to_string() })?;
            h.push(next);
        }
        Ok(Iterate { b: traj.states, h })
    }

    /// `‖B‖_{L^q L^q}` plus the `C⁰C²` proxy `sup_t (|h| + |∇_Σh| + |Δ_Σh|)`.
    pub fn distance(&self, a: &Iterate, b: &Iterate, cfg: &EvolutionConfig) -> Result<f64> {
        let dt = cfg.dt();
        let nl = a.b.len();
        let mut bq = 0.0;
        for k in 0..nl {
            let w = if k == 0 || k == nl - 1 { 0.5 * dt } else { dt };
            let d: Vec<V3> = a.b[k].iter().zip(&b.b[k]).map(|(x, y)| x - y).collect();
            bq += w * self.grid.lq(&d, cfg.q).powf(cfg.q);
        }
        let mut hs = 0.0f64;
        for k in 0..nl {
            let d: Vec<f64> = a.h[k].iter().zip(&b.h[k]).map(|(x, y)| x - y).collect();
            let g = self.surface.grad_grid(&d)?;
            let l = self.surface.laplace_beltrami_grid(&d)?;
            let sup = |v: &mut dyn Iterator<Item = f64>| v.fold(0.0f64, |m, x| m.max(x.abs()));
            hs = hs.max(sup(&mut d.iter().copied()) + sup(&mut g.iter().map(|v| v.norm())) + sup(&mut l.iter().copied()));
        }
        Ok(bq.powf(1.0 / cfg.q) + hs)
    }
}

/// Iterate the reduced map from the constant-in-time extension of
/// `(B₀, h₀)` and record successive differences.
pub fn fixed_point_probe(setup: &ProbeSetup, b0: &[V3], h0: &[f64], cfg: &EvolutionConfig) -> Result<FixedPointTrace> {
    setup.check(cfg)?;
    setup.surface.check_shape(h0.len())?;
    let levels = cfg.steps + 1;
    let mut z = Iterate { b: vec![b0.to_vec(); levels], h: vec![h0.to_vec(); levels] };
    let mut residuals = Vec::new();
    let mut ratios: Vec<f64> = Vec::new();
    let mut iterates = vec![z.clone()];
    let (mut converged, mut diverged) = (false, false);
    let scale = setup.distance(&z, &Iterate { b: vec![vec![V3::zeros(); b0.len()]; levels], h: vec![vec![0.0; h0.len()]; levels] }, cfg)?;
    for _ in 0..cfg.max_iter {
        let next = setup.apply_map(&z, cfg)?;
        let d = setup.distance(&next, &z, cfg)?;
        if !d.is_finite() {
            return Err(Error::Param("fixed-point residual is not finite".into()));
        }
        if let Some(&prev) = residuals.last() {
            ratios.push(if prev > 0.0 { d / prev } else { 0.0 });
        }
        residuals.push(d);
        iterates.push(next.clone());
        z = next;
        if d <= cfg.tol * scale.max(1.0) {
            converged = true;
            break;
        }
        if ratios.len() >= 3 && ratios[ratios.len() - 3..].iter().all(|&r| r > 2.0) {
            diverged = true;
            break;
        }
    }
    let contraction = ratios.iter().copied().reduce(f64::max);
    Ok(FixedPointTrace {
        t_final: cfg.t_final,
        below_one: contraction.map_or(converged, |c| c < 1.0),
        contraction,
        residuals,
        ratios,
        converged,
        diverged,
        iterates,
    })
}

/// Sphere of radius 1/4 centred in the unit box, the standard probe domain.
pub fn probe_surface(nu: usize, nv: usize) -> Result<ReferenceSurface> {
    ReferenceSurface::new(crate::surface::SurfaceKind::Sphere { r: 0.25 }, [0.5; 3], None, nu, nv)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn bump(g: &BoxGrid) -> Vec<V3> {
        g.sample(|x| {
            let s = (PI * x[0]).sin() * (PI * x[1]).sin() * (PI * x[2]).sin();
            V3::new(s, -0.5 * s, 2.0 * s)
        })
    }

    #[test]
    fn zero_stays_zero() {
        let g = BoxGrid::unit(8).unwrap();
        let tr = solve_parabolic(&g, &vec![V3::zeros(); g.len_nodes()], None, &ParabolicConfig::new(1.0, 0.1, 3)).unwrap();
        assert!(tr.states.iter().all(|s| s.iter().all(|v| *v == V3::zeros())));
    }

    #[test]
    fn eigenfunction_decay() {
        let g = BoxGrid::unit(9).unwrap();
        let (dt, steps) = (1e-3, 20);
        let tr = solve_parabolic(&g, &bump(&g), None, &ParabolicConfig::new(1.0, dt, steps)).unwrap();
        let expect = (1.0 + discrete_eigenvalue(&g) * dt).powi(-(steps as i32));
        let amp = tr.states[steps][g.idx(4, 4, 4)][0];
        assert!((amp - expect).abs() < 1e-8, "{amp} vs {expect}");
        assert!(amp >= (-3.0 * PI * PI * steps as f64 * dt).exp());
    }

    #[test]
    fn radial_expansion() {
        let s = ReferenceSurface::sphere(1.0, 16, 32).unwrap();
        let u = crate::fields::FnVector::steady(|x: &[jet::Jet; 3]| *x);
        let b = vec![V3::new(0.3, -0.2, 0.1); s.grid.len()];
        let hs = evolve_height(&s, &vec![0.0; s.grid.len()], u.as_ref(), &b, 1e-3, 100, 0.3).unwrap();
        let exact = 0.1f64.exp() - 1.0;
        for v in &hs[100] {
            assert!(((v - exact) / exact).abs() < 1e-4);
        }
    }

    #[test]
    fn normal_speed_and_rest() {
        let s = ReferenceSurface::sphere(1.0, 16, 32).unwrap();
        let speed = crate::fields::FnVector::steady(|x: &[jet::Jet; 3]| {
            let r = jet::norm3(x);
            [x[0] * (0.2 / r), x[1] * (0.2 / r), x[2] * (0.2 / r)]
        });
        let b: Vec<V3> = s.nodes().iter().map(|nd| nd.frame.tau[0]).collect();
        let h0 = vec![0.05; s.grid.len()];
        let hs = evolve_height(&s, &h0, speed.as_ref(), &b, 1e-2, 10, 0.3).unwrap();
        for v in &hs[10] {
            assert!((v - 0.07).abs() < 1e-12);
        }
        let still = evolve_height(&s, &h0, crate::fields::zero_vector().as_ref(), &b, 1e-2, 5, 0.3).unwrap();
        assert!(still[5].iter().all(|v| (v - 0.05).abs() < 1e-15));
    }

    #[test]
    fn gate_rejects_step() {
        let s = ReferenceSurface::sphere(1.0, 16, 32).unwrap();
        let u = crate::fields::FnVector::steady(|x: &[jet::Jet; 3]| *x);
        let b = vec![V3::zeros(); s.grid.len()];
        let e = step_height(&s, &vec![0.25; s.grid.len()], u.as_ref(), &b, 0.0, 0.1, 0.3).unwrap_err();
        assert!(matches!(e, Error::StepRejected { .. }));
    }

    #[test]
    fn boundary_data_rejected() {
        let g = BoxGrid::unit(8).unwrap();
        let b = vec![V3::new(1.0, 0.0, 0.0); g.len_nodes()];
        assert!(solve_parabolic(&g, &b, None, &ParabolicConfig::new(1.0, 0.1, 1)).is_err());
    }
}
