//! Verification suites. Each suite runs one family of checks against an
//! independent oracle and returns one [`CheckRecord`] per check; the CLI
//! and the acceptance target share them.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;
use std::sync::{Arc, OnceLock};
use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::config::{FieldName, HeightName, RunConfig, ShapeName, VelocityName};
use crate::error::{Error, Result};
use crate::evolution::{self, BoxGrid, EvolutionConfig, ParabolicConfig, ProbeSetup};
use crate::fields::{
    direct_scalar, direct_vector, FnScalar, FnVector, JumpScalar, JumpVector, ScalarField, TrigScalar, TrigVector, VectorField,
};
use crate::hanzawa::{ConstHeight, DerivMode, Hanzawa, HarmonicHeight, HeightFn, WaveHeight};
use crate::interface_geometry::{dh_gamma_zero, InterfaceGeometry};
use crate::jet::{self, Jet};
use crate::norms::{self, Composite, NormSpec, SampledFunction};
use crate::operators::{
    check_divergence_identity, check_gradient_identity, check_laplacian_identity, check_time_identity, Direction, IdentityResidual,
    JumpOfPressure, OpId, Point, State, Transformed, DEFAULT_LADDER,
};
use crate::surface::{rng, ReferenceSurface, SurfaceKind, M3, V3};

/// One check: `pass` is `max_rel_err ≤ tolerance` plus the order rule.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckRecord {
    pub name: String,
    pub criterion: u8,
    pub paper_ref: String,
    pub n_points: usize,
    pub max_rel_err: f64,
    pub tolerance: f64,
    pub observed_order: Option<f64>,
    pub min_order: Option<f64>,
    pub pass: bool,
}

/// How an observed convergence order enters `pass`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum OrderRule {
    Ignore,
    /// The order must be measured and at least this value.
    AtLeast(f64),
    /// At least this value when measured; absent means the errors were
    /// already at rounding level.
    AtLeastIfMeasured(f64),
}

impl CheckRecord {
    pub fn evaluate(max_rel_err: f64, tolerance: f64, order: Option<f64>, rule: OrderRule) -> bool {
        let err_ok = max_rel_err <= tolerance;
        let order_ok = match rule {
            OrderRule::Ignore => true,
            OrderRule::AtLeast(m) => order.is_some_and(|o| o >= m),
            OrderRule::AtLeastIfMeasured(m) => order.map_or(true, |o| o >= m),
        };
        err_ok && order_ok
    }
}

impl fmt::Display for CheckRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let order = match (self.observed_order, self.min_order) {
            (Some(o), Some(m)) => format!(" order {o:.2} (min {m})"),
            (None, Some(m)) => format!(" order n/a (min {m})"),
            (Some(o), None) => format!(" order {o:.2}"),
            (None, None) => String::new(),
        };
        write!(
            f,
            "[{}] criterion {} {}: max_rel_err {:.3e} <= {:.1e}{} over {} points",
            if self.pass { "PASS" } else { "FAIL" },
            self.criterion,
            self.name,
            self.max_rel_err,
            self.tolerance,
            order,
            self.n_points
        )
    }
}

fn paper_refs() -> &'static BTreeMap<String, String> {
    static REFS: OnceLock<BTreeMap<String, String>> = OnceLock::new();
    REFS.get_or_init(|| serde_json::from_str(include_str!("paper_refs.json")).expect("paper_refs.json is valid"))
}

pub fn paper_ref(group: &str) -> String {
    paper_refs().get(group).cloned().unwrap_or_else(|| "invented — artifact plumbing".into())
}

/// Suites, in the order of the acceptance criteria.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    Geometry,
    Curvature,
    Linearization,
    Identities,
    Frechet,
    Degeneracy,
    Norms,
    Evolution,
    Reduction,
}

impl Suite {
    pub const ALL: [Suite; 9] = [
        Suite::Geometry,
        Suite::Curvature,
        Suite::Linearization,
        Suite::Identities,
        Suite::Frechet,
        Suite::Degeneracy,
        Suite::Norms,
        Suite::Evolution,
        Suite::Reduction,
    ];

    pub fn criterion(&self) -> u8 {
        Suite::ALL.iter().position(|s| s == self).expect("listed") as u8 + 1
    }

    pub fn name(&self) -> &'static str {
        match self {
            Suite::Geometry => "geometry",
            Suite::Curvature => "curvature",
            Suite::Linearization => "linearization",
            Suite::Identities => "identities",
            Suite::Frechet => "frechet",
            Suite::Degeneracy => "degeneracy",
            Suite::Norms => "norms",
            Suite::Evolution => "evolution",
            Suite::Reduction => "reduction",
        }
    }
}

impl FromStr for Suite {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Suite::ALL
            .iter()
            .copied()
            .find(|x| x.name() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::Config(format!("unknown suite {s:?}")))
    }
}

/// Parse `all` or a comma-separated suite list.
pub fn parse_suites(s: &str) -> Result<Vec<Suite>> {
    if s.eq_ignore_ascii_case("all") {
        return Ok(Suite::ALL.to_vec());
    }
    s.split(',').map(|x| x.trim().parse()).collect()
}

struct Recorder<'a> {
    cfg: &'a RunConfig,
    criterion: u8,
    out: Vec<CheckRecord>,
}

impl Recorder<'_> {
    #[allow(clippy::too_many_arguments)]
    fn push(&mut self, name: &str, group: &str, n_points: usize, err: f64, tol: f64, order: Option<f64>, rule: OrderRule) {
        let tolerance = self.cfg.verify.tol(name, tol);
        let min_order = match rule {
            OrderRule::Ignore => None,
            OrderRule::AtLeast(m) | OrderRule::AtLeastIfMeasured(m) => Some(m),
        };
        self.out.push(CheckRecord {
            name: name.to_string(),
            criterion: self.criterion,
            paper_ref: paper_ref(group),
            n_points,
            max_rel_err: err,
            tolerance,
            observed_order: order,
            min_order,
            pass: CheckRecord::evaluate(err, tolerance, order, rule),
        });
    }

    fn simple(&mut self, name: &str, group: &str, n_points: usize, err: f64, tol: f64) {
        self.push(name, group, n_points, err, tol, None, OrderRule::Ignore);
    }
}

/// Run one suite.
pub fn run_suite(suite: Suite, cfg: &RunConfig) -> Result<Vec<CheckRecord>> {
    cfg.validate()?;
    let mut r = Recorder { cfg, criterion: suite.criterion(), out: Vec::new() };
    match suite {
        Suite::Geometry => geometry(&mut r)?,
        Suite::Curvature => curvature(&mut r)?,
        Suite::Linearization => linearization(&mut r)?,
        Suite::Identities => identities(&mut r)?,
        Suite::Frechet => frechet(&mut r)?,
        Suite::Degeneracy => degeneracy(&mut r)?,
        Suite::Norms => norm_checks(&mut r)?,
        Suite::Evolution => evolution_checks(&mut r)?,
        Suite::Reduction => reduction(&mut r)?,
    }
    Ok(r.out)
}

pub fn run_suites(suites: &[Suite], cfg: &RunConfig) -> Result<Vec<CheckRecord>> {
    let mut out = Vec::new();
    for s in suites {
        out.extend(run_suite(*s, cfg)?);
    }
    Ok(out)
}

fn maxf(it: impl IntoIterator<Item = f64>) -> f64 {
    it.into_iter().fold(0.0f64, |m, x| if x.is_nan() || m.is_nan() { f64::NAN } else { m.max(x) })
}

/// Minimum order over consecutive refinement pairs whose finer error is
/// above `floor`; `None` if no pair qualifies.
pub fn refinement_order(errs: &[f64], floor: f64) -> Option<f64> {
    errs.windows(2)
        .filter(|w| w[1] > floor)
        .map(|w| (w[0] / w[1]).log2())
        .reduce(f64::min)
}

fn standard_surfaces(grid: [usize; 2]) -> Result<Vec<(&'static str, Arc<ReferenceSurface>)>> {
    let [nu, nv] = grid;
    Ok(vec![
        ("sphere", Arc::new(ReferenceSurface::sphere(1.0, nu, nv)?)),
        ("torus", Arc::new(ReferenceSurface::torus(2.0, 0.5, nu, nv)?)),
        ("ellipsoid", Arc::new(ReferenceSurface::ellipsoid(1.2, 1.0, 0.9, nu, nv)?)),
    ])
}

fn chosen_surfaces(cfg: &RunConfig) -> Result<Vec<(&'static str, Arc<ReferenceSurface>)>> {
    let Some(spec) = &cfg.surface else {
        return standard_surfaces(cfg.verify.grid);
    };
    let name = match spec.kind {
        ShapeName::Sphere => "sphere",
        ShapeName::Torus => "torus",
        ShapeName::Ellipsoid => "ellipsoid",
    };
    Ok(vec![(name, spec.build()?)])
}

fn torus_weingarten(major: f64, minor: f64, s: [f64; 2], tau: &[V3; 2]) -> M3 {
    let k1 = -1.0 / minor;
    let k2 = -s[0].cos() / (major + minor * s[0].cos());
    let t0 = tau[0].normalize();
    let t1 = tau[1].normalize();
    t0 * t0.transpose() * k1 + t1 * t1.transpose() * k2
}

fn geometry(r: &mut Recorder) -> Result<()> {
    let start = Instant::now();
    let [nu, nv] = r.cfg.verify.grid;
    let rad = 1.3;
    let sph = ReferenceSurface::sphere(rad, nu, nv)?;
    let e = maxf(sph.nodes().iter().map(|nd| (nd.weingarten + nd.frame.projector() / rad).norm() * rad));
    r.simple("sphere_weingarten_analytic", "geometry", sph.grid.len(), e, 1e-8);

    let (major, minor) = (2.0, 0.5);
    let tor = ReferenceSurface::torus(major, minor, nu, nv)?;
    let e = maxf(tor.nodes().iter().map(|nd| (nd.weingarten - torus_weingarten(major, minor, nd.s, &nd.frame.tau)).norm() * minor));
    r.simple("torus_weingarten_analytic", "geometry", tor.grid.len(), e, 1e-8);

    let mut e = maxf(sph.nodes().iter().map(|nd| (nd.mean_curvature + 2.0 / rad).abs() * rad / 2.0));
    e = e.max(maxf(tor.nodes().iter().map(|nd| {
        let h = -1.0 / minor - nd.s[0].cos() / (major + minor * nd.s[0].cos());
        (nd.mean_curvature - h).abs() * minor
    })));
    let ell = ReferenceSurface::ellipsoid(1.2, 1.0, 0.9, nu, nv)?;
    for s in [&sph, &tor, &ell] {
        e = e.max(maxf(s.nodes().iter().map(|nd| (nd.mean_curvature - nd.weingarten.trace()).abs())));
    }
    r.simple("mean_curvature_is_trace", "geometry", 3 * sph.grid.len(), e, 1e-8);

    let mut e = 0.0f64;
    for s in [&sph, &tor, &ell] {
        for nd in s.nodes() {
            let f = &nd.frame;
            for i in 0..2 {
                for j in 0..2 {
                    let kd = if i == j { 1.0 } else { 0.0 };
                    e = e.max((f.dual[i].dot(&f.tau[j]) - kd).abs());
                }
            }
            let p = f.tau[0] * f.dual[0].transpose() + f.tau[1] * f.dual[1].transpose();
            e = e.max((p - f.projector()).norm());
        }
    }
    r.simple("dual_frame_identity", "geometry", 3 * sph.grid.len(), e, 1e-10);

    let mut g = rng(r.cfg.verify.first_seed());
    let mut e = 0.0f64;
    let mut n = 0;
    for s in [&sph, &tor, &ell] {
        for _ in 0..200 {
            let p = s.random_param(&mut g);
            let lam = g.gen_range(-0.95..0.95) * s.rho0;
            let x = s.point(p) + s.normal(p) * lam;
            let pr = s.project(x)?;
            e = e.max((pr.point - s.point(p)).norm()).max((pr.dist - lam).abs()).max((pr.normal - s.normal(p)).norm());
            n += 1;
        }
    }
    r.simple("projection_round_trip", "projection", n, e, 1e-9);

    // FD geometry path: on sphere and torus the stencil is exact by
    // symmetry, so the order is measured on the ellipsoid.
    let mut errs = Vec::new();
    for k in 0..3 {
        let s = ReferenceSurface::ellipsoid(1.2, 1.0, 0.9, nu << k, nv << k)?;
        let fd = s.fd_self_geometry()?;
        let scale = maxf(s.nodes().iter().map(|nd| nd.weingarten.norm()));
        errs.push(maxf(s.nodes().iter().zip(&fd).map(|(a, b)| (a.weingarten - b.weingarten).norm())) / scale);
    }
    let order = refinement_order(&errs, 1e-13);
    r.push("weingarten_fd_order_ellipsoid", "geometry", 3, errs[2], 1e-3, order, OrderRule::AtLeastIfMeasured(1.8));

    let mut errs = Vec::new();
    for k in 0..3 {
        let s = ReferenceSurface::sphere(1.0, nu << k, nv << k)?;
        let f: Vec<f64> = s.nodes().iter().map(|nd| HarmonicHeight::poly(2, &jet::csts3(nd.x.into())).v).collect();
        let lap = s.laplace_beltrami_grid(&f)?;
        let scale = maxf(f.iter().map(|v| 6.0 * v.abs()));
        errs.push(maxf(lap.iter().zip(&f).map(|(l, v)| (l + 6.0 * v).abs())) / scale);
    }
    let order = refinement_order(&errs, 1e-13);
    r.push("laplace_beltrami_fd_order", "surface_calculus", 3, errs[2], 1e-3, order, OrderRule::AtLeastIfMeasured(1.8));

    r.simple("geometry_runtime_budget", "runtime", 1, start.elapsed().as_secs_f64() / 30.0, 1.0);
    Ok(())
}

fn curvature(r: &mut Recorder) -> Result<()> {
    let [nu, nv] = r.cfg.verify.grid;
    let rad = 1.0;
    let s = ReferenceSurface::sphere(rad, nu, nv)?;
    for c in [0.05, 0.1, 0.2] {
        let h = vec![c; s.grid.len()];
        let name = format!("concentric_sphere_c{c}");
        match InterfaceGeometry::new(&s, &h, r.cfg.gate.delta0) {
            Ok(ig) => {
                let exact = -2.0 / (rad + c);
                let e = maxf(ig.h_gamma.iter().map(|v| ((v - exact) / exact).abs()));
                r.simple(&name, "curvature", h.len(), e, 1e-9);
            }
            Err(Error::HeightTooLarge { .. }) | Err(Error::Gate(_)) => continue,
            Err(e) => return Err(e),
        }
    }
    Ok(())
}

fn sample_height(s: &ReferenceSurface, h: &dyn HeightFn) -> Vec<f64> {
    s.nodes().iter().map(|nd| h.eval(&jet::csts3(nd.x.into()), 0.0).v).collect()
}

fn linearization(r: &mut Recorder) -> Result<()> {
    let [nu, nv] = r.cfg.verify.grid;
    let eps = 1e-4;
    let mut g = rng(r.cfg.verify.first_seed() + 101);
    let surfaces = [
        ("sphere", ReferenceSurface::sphere(1.0, nu, nv)?),
        ("torus", ReferenceSurface::torus(2.0, 0.5, nu, nv)?),
    ];
    for (name, s) in &surfaces {
        let mut e = 0.0f64;
        for _ in 0..r.cfg.verify.linearization_draws {
            let phi = sample_height(s, &WaveHeight::random(&mut g, s.center.into(), 0.0, 1.0, 4, false));
            let plus: Vec<f64> = phi.iter().map(|v| eps * v).collect();
            let minus: Vec<f64> = phi.iter().map(|v| -eps * v).collect();
            let hp = InterfaceGeometry::new(s, &plus, r.cfg.gate.delta0)?.h_gamma;
            let hm = InterfaceGeometry::new(s, &minus, r.cfg.gate.delta0)?.h_gamma;
            let d = dh_gamma_zero(s, &phi)?;
            let scale = maxf(d.iter().map(|v| v.abs()));
            e = e.max(maxf((0..phi.len()).map(|i| ((hp[i] - hm[i]) / (2.0 * eps) - d[i]).abs())) / scale);
        }
        r.simple(&format!("dh_zero_central_difference_{name}"), "linearization", r.cfg.verify.linearization_draws, e, 1e-3);
    }

    let rad = 1.5;
    for l in 1..=3usize {
        let lambda = (2.0 - (l * (l + 1)) as f64) / (rad * rad);
        let mut errs = Vec::new();
        for k in 0..2 {
            let s = ReferenceSurface::sphere(rad, nu << k, nv << k)?;
            let y: Vec<f64> = s
                .nodes()
                .iter()
                .map(|nd| HarmonicHeight::poly(l, &jet::csts3((nd.x / rad).into())).v)
                .collect();
            let d = dh_gamma_zero(&s, &y)?;
            let scale = lambda.abs().max(1.0 / (rad * rad)) * maxf(y.iter().map(|v| v.abs()));
            errs.push(maxf(d.iter().zip(&y).map(|(a, b)| (a - lambda * b).abs())) / scale);
        }
        let order = refinement_order(&errs, 1e-12);
        r.push(&format!("dh_zero_harmonic_l{l}"), "linearization", 2, errs[1], 1e-3, order, OrderRule::AtLeastIfMeasured(1.8));
    }
    Ok(())
}

type IdentityFn = fn(&Arc<dyn VectorField>, &Hanzawa, V3) -> Result<IdentityResidual>;

const IDENTITIES: [(&str, IdentityFn); 4] = [
    ("gradient", check_gradient_identity),
    ("divergence", check_divergence_identity),
    ("laplacian", check_laplacian_identity),
    ("time", check_time_identity),
];

fn identities(r: &mut Recorder) -> Result<()> {
    let draws = r.cfg.verify.identity_draws;
    for (name, s) in chosen_surfaces(r.cfg)? {
        let mut g = rng(r.cfg.verify.first_seed() + 202);
        let sphere = matches!(s.kind, SurfaceKind::Sphere { .. });
        let steps: &[f64] = if sphere { &[0.0] } else { &[4e-3, 2e-3, 1e-3] };
        let mut sums = vec![[0.0f64; 4]; steps.len()];
        let mut worst = vec![[0.0f64; 4]; steps.len()];
        for _ in 0..draws {
            let h: Arc<dyn HeightFn> = Arc::new(WaveHeight::random(&mut g, s.center.into(), 0.0, 0.04 * s.rho0, 3, true));
            let u: Arc<dyn VectorField> = Arc::new(TrigVector::random(&mut g, 1.0, 3));
            let x = s.random_tube_point(&mut g, 0.9);
            for (k, &st) in steps.iter().enumerate() {
                let mode = if sphere { DerivMode::Analytic } else { DerivMode::Fd { step: st } };
                let hz = Hanzawa::new(s.clone(), h.clone(), 0.1, r.cfg.gate)?.with_mode(mode);
                for (j, (_, f)) in IDENTITIES.iter().enumerate() {
                    let res = f(&u, &hz, x)?;
                    sums[k][j] += res.residual;
                    worst[k][j] = worst[k][j].max(res.residual / res.scale.max(1.0));
                }
            }
        }
        for (j, (id, _)) in IDENTITIES.iter().enumerate() {
            if sphere {
                r.simple(&format!("identity_{id}_{name}_analytic"), "identities", draws, worst[0][j], 1e-8);
            } else {
                // residual ≤ C·step², with C fitted at the coarsest step
                let last = steps.len() - 1;
                let bound = worst[0][j] * (steps[last] / steps[0]).powf(1.8);
                let order = refinement_order(&sums.iter().map(|v| v[j]).collect::<Vec<_>>(), 0.0);
                r.push(&format!("identity_{id}_{name}_fd"), "identities", draws, worst[last][j], bound, order, OrderRule::AtLeast(1.8));
            }
        }
    }
    Ok(())
}

/// Random state with small height `amp` on `s`.
pub fn random_state<R: Rng>(g: &mut R, s: &ReferenceSurface, amp: f64) -> State {
    let vec_field = |g: &mut R| direct_vector(Arc::new(TrigVector::random(g, 1.0, 3)));
    let u = JumpVector { inner: vec_field(g), outer: vec_field(g) };
    let b = vec_field(g);
    let p = JumpScalar {
        inner: direct_scalar(Arc::new(TrigScalar::random(g, 1.0, 3))),
        outer: direct_scalar(Arc::new(TrigScalar::random(g, 1.0, 3))),
    };
    State {
        t: 0.2,
        u,
        b,
        p,
        varpi: Arc::new(ConstHeight { c: 0.0, rate: 0.0 }),
        h: Arc::new(WaveHeight::random(g, s.center.into(), 0.01 * s.rho0, amp, 3, true)),
    }
}

fn direction_of(z: State) -> Direction {
    Direction { u: z.u, b: z.b, p: z.p, varpi: z.varpi, h: z.h }
}

fn frechet(r: &mut Recorder) -> Result<()> {
    let start = Instant::now();
    let s = match &r.cfg.surface {
        Some(spec) => spec.build()?,
        None => {
            let [nu, nv] = r.cfg.verify.grid;
            Arc::new(ReferenceSurface::sphere(1.0, nu, nv)?)
        }
    };
    let mut ctx = Transformed::new(s.clone(), r.cfg.fluid);
    ctx.gate = r.cfg.gate;
    ctx.aux_b = Some(direct_vector(Arc::new(TrigVector::random(&mut rng(99), 1.0, 2))));
    let amp = 0.03 * s.rho0 / 0.9;
    let seeds = r.cfg.verify.seeds.clone();
    for op in OpId::ALL {
        let mut worst = 0.0f64;
        let mut order: Option<f64> = None;
        for &seed in &seeds {
            let mut g = rng(seed);
            let z = random_state(&mut g, &s, amp);
            let phi = direction_of(random_state(&mut g, &s, 0.5 * s.rho0 / 0.9));
            let pt = if op.ambient() {
                Point::Ambient(s.random_tube_point(&mut g, 0.6))
            } else {
                Point::Node(g.gen_range(0..s.grid.len()))
            };
            let rep = ctx.frechet_check(op, &z, &phi, pt, &DEFAULT_LADDER)?;
            worst = worst.max(rep.err_at(1e-3).unwrap_or(f64::NAN));
            if let Some(o) = rep.observed_order {
                order = Some(order.map_or(o, |m: f64| m.min(o)));
            }
        }
        r.push(&format!("frechet_{}", op.name()), "frechet", seeds.len(), worst, 1e-3, order, OrderRule::AtLeastIfMeasured(1.9));
    }
    r.simple("frechet_runtime_budget", "runtime", 1, start.elapsed().as_secs_f64() / 300.0, 1.0);
    Ok(())
}

fn flat_max(v: &[f64]) -> f64 {
    maxf(v.iter().map(|x| x.abs()))
}

fn degeneracy(r: &mut Recorder) -> Result<()> {
    let [nu, nv] = r.cfg.verify.grid;
    let surfaces = vec![
        Arc::new(ReferenceSurface::sphere(1.0, nu, nv)?),
        Arc::new(ReferenceSurface::torus(2.0, 0.5, nu, nv)?),
    ];
    let mut g = rng(r.cfg.verify.first_seed() + 303);
    let mut coeff = [0.0f64; 5];
    let (mut g1c, mut g2c, mut g3c, mut hterms) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    let mut n_amb = 0;
    let mut n_node = 0;
    for s in &surfaces {
        let mut ctx = Transformed::new(s.clone(), r.cfg.fluid);
        ctx.gate = r.cfg.gate;
        ctx.aux_b = Some(direct_vector(Arc::new(TrigVector::random(&mut g, 1.0, 2))));
        let mut z = random_state(&mut g, s, 0.0);
        z.h = Arc::new(ConstHeight { c: 0.0, rate: 0.0 });
        for _ in 0..20 {
            let x = s.random_tube_point(&mut g, 0.95);
            for (k, op) in [OpId::M1, OpId::M2, OpId::M3, OpId::M4].iter().enumerate() {
                coeff[k + 1] = coeff[k + 1].max(flat_max(&ctx.eval_op(*op, &z, Point::Ambient(x))?));
            }
            for t in ctx.g1_terms_at(&z, x)?.iter().chain(ctx.g2_terms_at(&z, x)?.iter()) {
                if t.h_factor {
                    hterms = hterms.max(t.value.abs().max());
                }
            }
            hterms = hterms.max(ctx.g3(&z, x)?.abs());
            n_amb += 1;
        }
        let ss = ctx.surface_state(&z)?;
        for i in 0..s.grid.len() {
            coeff[0] = coeff[0].max((ss.ig.m0[i] - M3::identity()).abs().max());
            g1c = g1c.max(ctx.cal_g1(&z, &ss, i)?.abs());
            g2c = g2c.max(ctx.cal_g2(&ss, i).abs());
            g3c = g3c.max(ctx.cal_g3(&z, &ss, i)?.abs().max());
            for t in ctx.g5_terms(&z, &ss, i) {
                hterms = hterms.max(t.value.abs());
            }
            hterms = hterms.max(ctx.g4(&z, &ss, i)?.abs().max());
            n_node += 1;
        }
    }
    for (k, name) in ["m0_minus_identity", "m1", "m2", "m3", "m4"].iter().enumerate() {
        let n = if k == 0 { n_node } else { n_amb };
        r.simple(&format!("zero_height_{name}"), "degeneracy", n, coeff[k], 1e-12);
    }
    r.simple("zero_height_cal_g1", "degeneracy", n_node, g1c, 1e-12);
    r.simple("zero_height_cal_g2", "degeneracy", n_node, g2c, 1e-12);
    r.simple("zero_height_cal_g3", "degeneracy", n_node, g3c, 1e-12);
    r.simple("zero_height_h_factor_terms", "degeneracy", n_amb + n_node, hterms, 1e-12);
    Ok(())
}

fn random_grid_fn<R: Rng>(g: &mut R, shape: &[usize]) -> Result<SampledFunction> {
    let d = shape.len();
    let modes: Vec<(Vec<f64>, f64, f64)> = (0..4)
        .map(|_| ((0..d).map(|_| g.gen_range(-4.0..4.0)).collect(), g.gen_range(0.0..6.3), g.gen_range(-1.0..1.0)))
        .collect();
    SampledFunction::from_fn(shape, &vec![0.0; d], &vec![1.0; d], &vec![false; d], |x| {
        modes.iter().map(|(k, p, a)| a * (k.iter().zip(x).map(|(k, x)| k * x).sum::<f64>() + p).sin()).sum()
    })
}

fn norm_checks(r: &mut Recorder) -> Result<()> {
    let line = |n: usize| SampledFunction::from_fn(&[n], &[0.0], &[1.0], &[false], |x| x[0]);
    let fine = norms::gagliardo_seminorm(&line(257)?, 0.5, 2.0)?;
    let coarse = norms::gagliardo_seminorm(&line(129)?, 0.5, 2.0)?;
    r.simple("gagliardo_linear_half", "norms", 257, (fine - 1.0).abs(), 0.01);
    let toward = (fine - 1.0).abs() < (coarse - 1.0).abs();
    let change = (fine - coarse).abs() / fine;
    r.simple("gagliardo_refinement", "norms", 257, if toward { change } else { f64::INFINITY }, 0.01);
    let quarter = norms::gagliardo_seminorm(&line(513)?, 0.25, 2.0)?;
    let exact = (8.0f64 / 15.0).sqrt();
    r.simple("gagliardo_linear_quarter", "norms", 513, (quarter - exact).abs() / exact, 0.01);

    let specs: Vec<NormSpec> = ["L:2", "L:3.5", "C:1", "C:2", "W:0.5:2", "W:1.25:3", "S1:2", "W6:2", "C1:2", "S5:3"]
        .iter()
        .map(|s| s.parse())
        .collect::<Result<_>>()?;
    let mut g = rng(r.cfg.verify.first_seed() + 404);
    let (mut hom, mut tri) = (0.0f64, 0.0f64);
    let pairs = r.cfg.verify.norm_pairs;
    for _ in 0..pairs {
        let f = random_grid_fn(&mut g, &[12, 12])?;
        let h = random_grid_fn(&mut g, &[12, 12])?;
        let lam: f64 = g.gen_range(-3.0..3.0);
        let sum = f.add(&h)?;
        for spec in &specs {
            let nf = norms::sobolev_norm(&f, spec)?;
            let nl = norms::sobolev_norm(&f.scaled(lam), spec)?;
            hom = hom.max((nl - lam.abs() * nf).abs() / (lam.abs() * nf).max(f64::MIN_POSITIVE));
            let ns = norms::sobolev_norm(&sum, spec)?;
            let nh = norms::sobolev_norm(&h, spec)?;
            tri = tri.max(ns - nf - nh);
        }
    }
    r.simple("norm_homogeneity", "norms", pairs * specs.len(), hom, 1e-12);
    r.simple("norm_triangle_inequality", "norms", pairs * specs.len(), tri.max(0.0), 1e-10);

    let mut viol = 0.0f64;
    let names = [Composite::W6, Composite::S5, Composite::C1, Composite::S1];
    for _ in 0..20 {
        let f = random_grid_fn(&mut g, &[17, 9])?;
        for name in names {
            let vals: Vec<f64> = [9, 13, 17]
                .iter()
                .map(|&m| norms::composite_norm_on(&f, name, 2.0, Some(m)).map(|c| c.value))
                .collect::<Result<_>>()?;
            for w in vals.windows(2) {
                viol = viol.max((w[0] - w[1]) / w[1]);
            }
        }
    }
    r.simple("composite_monotone_in_t", "norms", 20 * names.len(), viol.max(0.0), 1e-12);

    let one = SampledFunction::from_fn(&[16, 16], &[0.0; 2], &[1.0; 2], &[false; 2], |_| 1.0)?;
    let rough = random_grid_fn(&mut g, &[16, 16])?;
    let unit = norms::product_ratio(&one, &rough, 0.5, 0.5, 2.0)?.unwrap_or(f64::NAN);
    r.simple("product_unit_multiplier", "product", 1, (unit - 1.0).abs(), 1e-12);
    let mut stab = 0.0f64;
    let mut maxes = Vec::new();
    for n in [33, 65] {
        let p = norms::product_estimate_probe(&mut rng(r.cfg.verify.first_seed() + 505), &[n, n], 0.5, 0.5, 2.0, r.cfg.verify.probe_trials)?;
        stab = stab.max(p.max / p.median);
        maxes.push(p.max);
    }
    r.simple("product_probe_max_over_median", "product", 2 * r.cfg.verify.probe_trials, stab, 10.0);
    let drift = (maxes[1] / maxes[0]).max(maxes[0] / maxes[1]);
    r.simple("product_probe_refinement_drift", "product", 2, drift, 10.0);
    Ok(())
}

fn bump(grid: &BoxGrid, t: f64, w: [f64; 3]) -> Vec<V3> {
    grid.sample(|x| {
        let s = (-t).exp() * (PI * x[0]).sin() * (PI * x[1]).sin() * (PI * x[2]).sin();
        V3::new(w[0] * s, w[1] * s, w[2] * s)
    })
}

/// Prescribed velocity of the probe: a rotation about the box centre, a
/// mild expansion and two smooth modes.
pub fn probe_velocity() -> Arc<dyn VectorField> {
    FnVector::steady(|x: &[Jet; 3]| {
        let a = 0.3;
        [
            (x[1] - 0.5) * a + (x[2] * 3.0).sin() * 0.1,
            (x[0] - 0.5) * (-a),
            (x[2] - 0.5) * 0.2 + (x[0] * 2.0).cos() * 0.1,
        ]
    })
}

/// Standard probe inputs: `(setup, B₀, h₀)` with data of size `b_amp`,
/// `h_amp`.
pub fn probe_inputs(cfg: &EvolutionConfig, b_amp: f64, h_amp: f64) -> Result<(ProbeSetup, Vec<V3>, Vec<f64>)> {
    let s = Arc::new(evolution::probe_surface(16, 32)?);
    build_inputs(cfg, s, VelocityName::Probe, FieldName::Bump, b_amp, HeightName::Wave, h_amp)
}

/// Probe inputs from the `[initial]` table. `h_override` (e.g. read from
/// the height CSV) replaces the builtin `h0`.
pub fn evolve_inputs(cfg: &RunConfig, h_override: Option<Vec<f64>>) -> Result<(ProbeSetup, Vec<V3>, Vec<f64>)> {
    let s = match &cfg.surface {
        Some(spec) => spec.build()?,
        None => Arc::new(evolution::probe_surface(16, 32)?),
    };
    let init = &cfg.initial;
    let (setup, b0, mut h0) = build_inputs(&cfg.evolution, s, init.velocity, init.b0, init.b_amp, init.h0, init.h_amp)?;
    if let Some(h) = h_override {
        setup.surface.check_shape(h.len())?;
        h0 = h;
    }
    Ok((setup, b0, h0))
}

fn build_inputs(
    cfg: &EvolutionConfig,
    s: Arc<ReferenceSurface>,
    velocity: VelocityName,
    b: FieldName,
    b_amp: f64,
    h: HeightName,
    h_amp: f64,
) -> Result<(ProbeSetup, Vec<V3>, Vec<f64>)> {
    let grid = BoxGrid::unit(cfg.box_n)?;
    let aux_b = s.nodes().iter().map(|nd| nd.frame.projector() * V3::new(0.1, 0.2, -0.1)).collect();
    let b0 = match b {
        FieldName::Zero => vec![V3::zeros(); grid.len_nodes()],
        FieldName::Bump => bump(&grid, 0.0, [b_amp, b_amp, -b_amp]),
    };
    let c = s.center;
    let h0 = s
        .nodes()
        .iter()
        .map(|nd| match h {
            HeightName::Zero => 0.0,
            HeightName::Wave => h_amp * ((nd.x[0] - c[0]) * 8.0).sin(),
            HeightName::Harmonic => h_amp * HarmonicHeight::poly(2, &jet::csts3((nd.x - c).normalize().into())).v,
        })
        .collect();
    let u = match velocity {
        VelocityName::Probe => probe_velocity(),
        VelocityName::Zero => FnVector::steady(|_| [Jet::cst(0.0); 3]),
        VelocityName::Expansion => FnVector::steady(|x: &[Jet; 3]| [x[0] - 0.5, x[1] - 0.5, x[2] - 0.5]),
    };
    Ok((ProbeSetup { grid, surface: s, u, aux_b }, b0, h0))
}

fn evolution_checks(r: &mut Recorder) -> Result<()> {
    let sigma = 0.1;
    let (dt, steps) = (1e-4, 100);
    let w = [1.0, 2.0, -1.0];
    let mut errs = Vec::new();
    for n in [9, 17, 33] {
        let grid = BoxGrid::unit(n)?;
        let b0 = bump(&grid, 0.0, w);
        let factor = -1.0 + 3.0 * PI * PI * sigma;
        let src = |k: usize, m: usize| {
            let x = grid.point(m);
            let s = (-(k as f64) * dt).exp() * (PI * x[0]).sin() * (PI * x[1]).sin() * (PI * x[2]).sin();
            V3::new(w[0] * s, w[1] * s, w[2] * s) * factor
        };
        let tr = evolution::solve_parabolic(&grid, &b0, Some(&src), &ParabolicConfig::new(sigma, dt, steps))?;
        let exact = bump(&grid, steps as f64 * dt, w);
        let e: Vec<V3> = tr.states[steps].iter().zip(&exact).map(|(a, b)| a - b).collect();
        errs.push(grid.lq(&e, 2.0) / grid.lq(&exact, 2.0));
    }
    let order = refinement_order(&errs, 0.0);
    r.push("parabolic_mms_space_order", "parabolic", 3, errs[2], 1e-3, order, OrderRule::AtLeast(1.9));

    let grid = BoxGrid::unit(9)?;
    let (dte, ne) = (1e-3, 20);
    let tr = evolution::solve_parabolic(&grid, &bump(&grid, 0.0, [1.0, 0.0, 0.0]), None, &ParabolicConfig::new(1.0, dte, ne))?;
    let amp = tr.states[ne][grid.idx(4, 4, 4)][0];
    let expect = (1.0 + evolution::discrete_eigenvalue(&grid) * dte).powi(-(ne as i32));
    let cont = (-3.0 * PI * PI * ne as f64 * dte).exp();
    let e = if amp >= cont { ((amp - expect) / expect).abs() } else { f64::INFINITY };
    r.simple("parabolic_eigen_decay", "parabolic", 1, e, 1e-8);

    let mut g = rng(r.cfg.verify.first_seed() + 606);
    let b0: Vec<V3> = (0..grid.len_nodes())
        .map(|m| {
            if grid.is_boundary(m) {
                V3::zeros()
            } else {
                V3::new(g.gen_range(-1.0..1.0), g.gen_range(-1.0..1.0), g.gen_range(-1.0..1.0))
            }
        })
        .collect();
    let mut inc = 0.0f64;
    for dts in [1e-2, 1e-1, 1.0] {
        let tr = evolution::solve_parabolic(&grid, &b0, None, &ParabolicConfig::new(1.0, dts, 10))?;
        let sup = |v: &[V3]| v.iter().flat_map(|x| x.iter().copied()).fold(0.0f64, |m, c| m.max(c.abs()));
        for w in tr.states.windows(2) {
            inc = inc.max((sup(&w[1]) - sup(&w[0])) / sup(&b0));
        }
    }
    r.simple("parabolic_max_norm_nonincreasing", "parabolic", 30, inc.max(0.0), 1e-9);

    let s = ReferenceSurface::sphere(1.0, 16, 32)?;
    let n = s.grid.len();
    let delta0 = r.cfg.gate.delta0;
    let tang: Vec<V3> = s.nodes().iter().map(|nd| nd.frame.tau[0]).collect();
    let radial = |v: fn(Jet) -> Jet| {
        FnVector::steady(move |x: &[Jet; 3]| {
            let rr = jet::norm3(x);
            let f = v(rr) / rr;
            [x[0] * f, x[1] * f, x[2] * f]
        })
    };
    let speed = radial(|_| Jet::cst(0.2));
    let hs = evolution::evolve_height(&s, &vec![0.05; n], speed.as_ref(), &tang, 1e-2, 10, delta0)?;
    r.simple("height_normal_speed", "height", n, maxf(hs[10].iter().map(|v| (v - 0.07).abs())), 1e-12);
    let zero = FnVector::steady(|_| [Jet::cst(0.0); 3]);
    let hs = evolution::evolve_height(&s, &vec![0.05; n], zero.as_ref(), &tang, 1e-2, 10, delta0)?;
    r.simple("height_at_rest", "height", n, maxf(hs[10].iter().map(|v| (v - 0.05).abs())), 1e-14);
    let expand = FnVector::steady(|x: &[Jet; 3]| *x);
    let hs = evolution::evolve_height(&s, &vec![0.0; n], expand.as_ref(), &tang, 1e-3, 100, delta0)?;
    let exact = 0.1f64.exp() - 1.0;
    r.simple("height_radial_expansion", "height", n, maxf(hs[100].iter().map(|v| ((v - exact) / exact).abs())), 1e-4);
    let shaped = radial(|rr| rr.sq() * 0.3);
    let hs = evolution::evolve_height(&s, &vec![0.02; n], shaped.as_ref(), &tang, 1e-2, 20, delta0)?;
    let spread = maxf(hs.iter().map(|h| maxf(h.iter().copied()) - h.iter().copied().fold(f64::INFINITY, f64::min)));
    r.simple("height_uniform_preserved", "height", 21 * n, spread, 1e-12);

    let base = r.cfg.evolution;
    let (setup, _, _) = probe_inputs(&base, 0.0, 0.0)?;
    let zero_b = vec![V3::zeros(); setup.grid.len_nodes()];
    let zero_setup = ProbeSetup { u: FnVector::steady(|_| [Jet::cst(0.0); 3]), ..setup };
    let tr = evolution::fixed_point_probe(&zero_setup, &zero_b, &vec![0.0; zero_setup.surface.grid.len()], &base)?;
    let e = tr.residuals[0] + (tr.residuals.len() as f64 - 1.0) + if tr.converged { 0.0 } else { 1.0 };
    r.simple("fixed_point_zero_data", "fixed_point", 1, e, 1e-14);

    let (setup, b0, h0) = probe_inputs(&base, 1e-2, 5e-3)?;
    let horizons = [base.t_final, base.t_final / 2.0, base.t_final / 4.0];
    let mut ratios = Vec::new();
    let mut first_trace = None;
    for t in horizons {
        let cfg = EvolutionConfig { t_final: t, ..base };
        let tr = evolution::fixed_point_probe(&setup, &b0, &h0, &cfg)?;
        let c = tr.contraction.unwrap_or(if tr.converged { 0.0 } else { f64::INFINITY });
        r.simple(&format!("fixed_point_ratio_T{t}"), "fixed_point", tr.residuals.len(), c, 1.0);
        ratios.push(c);
        if first_trace.is_none() {
            first_trace = Some(tr);
        }
    }
    let trend = maxf(ratios.windows(2).map(|w| w[1] / w[0]));
    r.simple("fixed_point_ratio_decreasing_in_t", "fixed_point", ratios.len(), trend, 1.0);

    let again = evolution::fixed_point_probe(&setup, &b0, &h0, &base)?;
    let same = first_trace.is_some_and(|a| a.residuals.iter().map(|v| v.to_bits()).eq(again.residuals.iter().map(|v| v.to_bits())));
    r.simple("fixed_point_deterministic", "fixed_point", 2, if same { 0.0 } else { 1.0 }, 0.5);

    let (setup_big, big_b, h_small) = probe_inputs(&base, 10.0, 5e-3)?;
    let guard = evolution::fixed_point_probe(&setup_big, &big_b, &h_small, &base)?;
    r.simple("fixed_point_large_b_guard", "fixed_point", guard.residuals.len(), guard.contraction.unwrap_or(0.0), f64::MAX);

    let perturbed: Vec<f64> = setup
        .surface
        .nodes()
        .iter()
        .map(|nd| 0.01 * HarmonicHeight::poly(2, &jet::csts3(((nd.x - V3::repeat(0.5)) / 0.25).into())).v)
        .collect();
    let tripped = match evolution::fixed_point_probe(&setup, &b0, &perturbed, &base) {
        Ok(_) => 0.0,
        Err(Error::StepRejected { .. }) | Err(Error::HeightTooLarge { .. }) | Err(Error::Gate(_)) => 1.0,
        Err(e) => return Err(e),
    };
    r.simple("fixed_point_perturbed_start_gate", "fixed_point", 1, tripped, 0.5);
    Ok(())
}

type Family = (Arc<dyn VectorField>, Arc<dyn VectorField>, Arc<dyn ScalarField>);

/// Divergence-free analytic `(u, B, p)` families with amplitude `a`.
pub fn analytic_family(k: usize, a: f64) -> Family {
    match k % 3 {
        0 => {
            let uf = move |t: f64, x: &[Jet; 3]| -> [Jet; 3] {
                let e = (-0.5 * t).exp() * a;
                [(x[2].sin() + x[1].cos()) * e, (x[0].sin() + x[2].cos()) * e, (x[1].sin() + x[0].cos()) * e]
            };
            let bf = move |t: f64, x: &[Jet; 3]| -> [Jet; 3] {
                let c = 0.5 * a * (1.0 + t);
                [(x[1] * 2.0).sin() * c, (x[2] * 2.0).cos() * c, (x[0] * 2.0).sin() * c]
            };
            (
                FnVector::new(uf, move |t, x| uf(t, x).map(|v| v * -0.5)),
                FnVector::new(bf, move |t, x| bf(t, x).map(|v| v / (1.0 + t))),
                FnScalar::new(
                    move |t, x| x[0].cos() * x[1].sin() * ((-t).exp() * a),
                    move |t, x| x[0].cos() * x[1].sin() * (-(-t).exp() * a),
                ),
            )
        }
        1 => {
            let shape = move |x: &[Jet; 3]| -> [Jet; 3] {
                [x[0].sin() * x[1].cos() * x[2].cos() * a, -(x[0].cos() * x[1].sin() * x[2].cos()) * a, Jet::cst(0.0)]
            };
            let bshape = move |x: &[Jet; 3]| -> [Jet; 3] { [x[1] * x[2] * a, -(x[0] * x[2]) * a, x[0] * x[1] * a] };
            (
                FnVector::new(move |t, x| shape(x).map(|v| v * (1.0 + 0.5 * t)), move |_, x| shape(x).map(|v| v * 0.5)),
                FnVector::new(move |t, x| bshape(x).map(|v| v * (1.0 - t)), move |_, x| bshape(x).map(|v| -v)),
                FnScalar::new(
                    move |t, x| (x[0].sq() - x[1] * x[2]) * (a * (1.0 + t)),
                    move |_, x| (x[0].sq() - x[1] * x[2]) * a,
                ),
            )
        }
        _ => {
            let shape = move |x: &[Jet; 3]| -> [Jet; 3] { [x[1].sq() * a, x[2].sq() * a, x[0].sq() * a] };
            (
                FnVector::new(move |t, x| shape(x).map(|v| v * (1.0 + t * t)), move |t, x| shape(x).map(|v| v * (2.0 * t))),
                FnVector::steady(move |x| [x[2].sin() * (0.5 * a), x[0].sin() * (0.5 * a), x[1].sin() * (0.5 * a)]),
                FnScalar::steady(move |x| x[0] * x[1] * x[2] * a),
            )
        }
    }
}

fn levi(i: usize, j: usize, k: usize) -> f64 {
    match (i, j, k) {
        (0, 1, 2) | (1, 2, 0) | (2, 0, 1) => 1.0,
        (0, 2, 1) | (2, 1, 0) | (1, 0, 2) => -1.0,
        _ => 0.0,
    }
}

fn curl_of(f: &[Jet; 3]) -> V3 {
    V3::from_fn(|i, _| {
        let mut c = 0.0;
        for j in 0..3 {
            for k in 0..3 {
                c += levi(i, j, k) * f[k].g[j];
            }
        }
        c
    })
}

/// `∂_t u + (u·∇)u − (∇×B)×B + ∇p − νΔu` in curl form, straight from jets.
pub fn momentum_residual(u: &dyn VectorField, b: &dyn VectorField, p: &dyn ScalarField, nu: f64, t: f64, x: V3) -> V3 {
    let xs = Jet::vars(x.into());
    let (uj, bj, pj) = (u.eval(t, &xs), b.eval(t, &xs), p.eval(t, &xs));
    let ut = jet::values3(&u.dt(t, &jet::csts3(x.into())));
    let bv = V3::from(jet::values3(&bj));
    let lorentz = curl_of(&bj).cross(&bv);
    V3::from_fn(|i, _| {
        let adv: f64 = (0..3).map(|j| uj[j].v * uj[i].g[j]).sum();
        let lap: f64 = (0..3).map(|j| uj[i].h[j][j]).sum();
        ut[i] + adv - lorentz[i] + pj.g[i] - nu * lap
    })
}

/// `∂_t B − ∇×(u×B) + σ∇×∇×B`.
pub fn induction_residual(u: &dyn VectorField, b: &dyn VectorField, sigma: f64, t: f64, x: V3) -> V3 {
    let xs = Jet::vars(x.into());
    let (uj, bj) = (u.eval(t, &xs), b.eval(t, &xs));
    let bt = jet::values3(&b.dt(t, &jet::csts3(x.into())));
    let transport = curl_of(&jet::cross3(&uj, &bj));
    V3::from_fn(|i, _| {
        let mut cc = 0.0;
        for j in 0..3 {
            for k in 0..3 {
                for l in 0..3 {
                    for m in 0..3 {
                        cc += levi(i, j, k) * levi(k, l, m) * bj[m].h[j][l];
                    }
                }
            }
        }
        bt[i] - transport[i] + sigma * cc
    })
}

fn reduction(r: &mut Recorder) -> Result<()> {
    let [nu, nv] = r.cfg.verify.grid;
    let s = Arc::new(ReferenceSurface::sphere(1.0, nu, nv)?);
    let mut ctx = Transformed::new(s.clone(), r.cfg.fluid);
    ctx.gate = r.cfg.gate;
    let params = r.cfg.fluid;
    let mut g = rng(r.cfg.verify.first_seed() + 707);
    let mut points: Vec<V3> = Vec::new();
    while points.len() < 30 {
        let x = s.random_tube_point(&mut g, 0.95);
        if s.project(x).map_or(true, |p| p.dist.abs() > 1e-3) {
            points.push(x);
        }
    }
    points.extend([V3::new(0.05, 0.02, -0.03), V3::new(1.5, 0.3, -0.2), V3::new(-0.4, 1.6, 0.5)]);
    let (mut stress, mut kin, mut div) = (0.0f64, 0.0f64, 0.0f64);
    for k in 0..3 {
        let (ui, b, pi) = analytic_family(k, 1.0);
        let (uo, _, po) = analytic_family(k, 0.7);
        let pj = JumpScalar { inner: direct_scalar(pi.clone()), outer: direct_scalar(po.clone()) };
        let z = State {
            t: 0.3,
            u: JumpVector { inner: direct_vector(ui.clone()), outer: direct_vector(uo.clone()) },
            b: direct_vector(b.clone()),
            p: pj.clone(),
            varpi: Arc::new(JumpOfPressure { surface: s.clone(), p: pj }),
            h: Arc::new(ConstHeight { c: 0.0, rate: 0.0 }),
        };
        let (mut em, mut ei) = (0.0f64, 0.0f64);
        for &x in &points {
            let side = ctx.side(x)?;
            let (u, p) = if side == crate::fields::Side::Inner { (&ui, &pi) } else { (&uo, &po) };
            let rm = momentum_residual(u.as_ref(), b.as_ref(), p.as_ref(), params.nu(side), z.t, x);
            let lm = ctx.l1(&z, x)? - ctx.g1(&z, x)?;
            em = em.max((lm - rm).abs().max() / rm.abs().max().max(1.0));
            let rb = induction_residual(u.as_ref(), b.as_ref(), params.sigma, z.t, x);
            let lb = ctx.l2(&z, x)? - ctx.g2(&z, x)?;
            ei = ei.max((lb - rb).abs().max() / rb.abs().max().max(1.0));
            let rd = {
                let uj = u.eval(z.t, &Jet::vars(x.into()));
                (0..3).map(|j| uj[j].g[j]).sum::<f64>()
            };
            div = div.max((ctx.l3(&z, x)? - ctx.g3(&z, x)? - rd).abs());
        }
        r.simple(&format!("reduction_momentum_family{k}"), "reduction", points.len(), em, 1e-10);
        r.simple(&format!("reduction_induction_family{k}"), "reduction", points.len(), ei, 1e-10);

        let ss = ctx.surface_state(&z)?;
        for i in (0..s.grid.len()).step_by(7) {
            let nd = s.node(i);
            let xs = Jet::vars(nd.x.into());
            let stress_of = |u: &Arc<dyn VectorField>, p: &Arc<dyn ScalarField>, nu: f64| -> M3 {
                let uj = u.eval(z.t, &xs);
                let gm = M3::from_fn(|a, c| uj[c].g[a]);
                (gm + gm.transpose()) * nu - M3::identity() * p.eval(z.t, &xs).v
            };
            let jump = stress_of(&uo, &po, params.nu_minus) - stress_of(&ui, &pi, params.nu_plus);
            let orig = -(jump * nd.frame.n) - nd.frame.n * (params.kappa * nd.mean_curvature);
            let lhs = ctx.l4(&z, &ss, i) - ctx.g4(&z, &ss, i)? - nd.frame.n * (params.kappa * nd.mean_curvature);
            stress = stress.max((lhs - orig).abs().max() / orig.abs().max().max(1.0));
            let un = V3::from(jet::values3(&uo.eval(z.t, &jet::csts3(nd.x.into())))).dot(&nd.frame.n);
            kin = kin.max((ctx.l5(&z, &ss, i) - ctx.g5(&z, &ss, i) + un).abs());
        }
    }
    r.simple("reduction_divergence", "reduction", 3 * points.len(), div, 1e-10);
    r.simple("reduction_stress_balance", "stress", 3 * s.grid.len().div_ceil(7), stress, 1e-7);
    r.simple("reduction_kinematic", "reduction", 3 * s.grid.len().div_ceil(7), kin, 1e-7);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_rule() {
        assert!(CheckRecord::evaluate(1e-4, 1e-3, None, OrderRule::AtLeastIfMeasured(1.9)));
        assert!(!CheckRecord::evaluate(1e-4, 1e-3, None, OrderRule::AtLeast(1.9)));
        assert!(!CheckRecord::evaluate(f64::NAN, 1e-3, None, OrderRule::Ignore));
        assert!(!CheckRecord::evaluate(1e-4, 1e-3, Some(1.5), OrderRule::AtLeastIfMeasured(1.9)));
    }

    #[test]
    fn suites_parse_and_refs_resolve() {
        assert_eq!(parse_suites("all").unwrap().len(), 9);
        assert_eq!(parse_suites("identities, norms").unwrap(), vec![Suite::Identities, Suite::Norms]);
        assert!(parse_suites("bogus").is_err());
        for g in ["geometry", "frechet", "product", "reduction"] {
            assert!(!paper_ref(g).starts_with("invented"));
        }
    }

    #[test]
    fn refinement_order_skips_floor() {
        assert_eq!(refinement_order(&[4e-4, 1e-4, 1e-15], 1e-13), Some(2.0));
        assert_eq!(refinement_order(&[1e-15, 1e-16], 1e-13), None);
    }
}
