//! Function-space norms on sampled data: L^q, C^k, fractional W^{s,q}
//! through the Gagliardo seminorm, the composite time-space norms 𝒲ᵢ, 𝒮ᵢ,
//! 𝒞ᵢ, and an empirical probe of the product estimate.
//!
//! Intersections are normed by the sum convention over *distinct* terms:
//! every derivative that appears in some member is counted once, with the
//! measure (sup, L^q or Gagliardo) the member asks for.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::surface::ReferenceSurface;

/// Values on a tensor grid, row-major with the last axis fastest.
/// Non-periodic axes include both endpoints; periodic axes omit the right
/// one.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampledFunction {
    pub shape: Vec<usize>,
    pub lo: Vec<f64>,
    pub spacing: Vec<f64>,
    pub periodic: Vec<bool>,
    pub values: Vec<f64>,
}

impl SampledFunction {
    pub fn new(shape: Vec<usize>, lo: Vec<f64>, spacing: Vec<f64>, periodic: Vec<bool>, values: Vec<f64>) -> Result<Self> {
        let d = shape.len();
        if d == 0 || lo.len() != d || spacing.len() != d || periodic.len() != d {
            return Err(Error::Param("grid metadata must have one entry per axis".into()));
        }
        let n: usize = shape.iter().product();
        if values.len() != n {
            return Err(Error::Shape { expected: (n, 1), got: (values.len(), 1) });
        }
        if shape.iter().any(|&s| s < 2) || spacing.iter().any(|&h| !(h > 0.0 && h.is_finite())) {
            return Err(Error::Param("grid must be monotone with at least 2 nodes per axis".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Param("sampled values must be finite".into()));
        }
        Ok(SampledFunction { shape, lo, spacing, periodic, values })
    }

    /// Sample `f` on `[lo, hi]` per axis.
    pub fn from_fn(shape: &[usize], lo: &[f64], hi: &[f64], periodic: &[bool], f: impl Fn(&[f64]) -> f64) -> Result<Self> {
        let spacing: Vec<f64> = (0..shape.len())
            .map(|a| (hi[a] - lo[a]) / if periodic[a] { shape[a] as f64 } else { (shape[a] - 1) as f64 })
            .collect();
        let n: usize = shape.iter().product();
        let mut x = vec![0.0; shape.len()];
        let values = (0..n)
            .map(|i| {
                let mut r = i;
                for a in (0..shape.len()).rev() {
                    x[a] = lo[a] + (r % shape[a]) as f64 * spacing[a];
                    r /= shape[a];
                }
                f(&x)
            })
            .collect();
        SampledFunction::new(shape.to_vec(), lo.to_vec(), spacing, periodic.to_vec(), values)
    }

    pub fn dim(&self) -> usize {
        self.shape.len()
    }

    pub fn with_values(&self, values: Vec<f64>) -> Self {
        SampledFunction { values, ..self.clone() }
    }

    pub fn scaled(&self, c: f64) -> Self {
        self.with_values(self.values.iter().map(|v| v * c).collect())
    }

    pub fn add(&self, o: &SampledFunction) -> Result<Self> {
        self.check_same(o)?;
        Ok(self.with_values(self.values.iter().zip(&o.values).map(|(a, b)| a + b).collect()))
    }

    pub fn mul(&self, o: &SampledFunction) -> Result<Self> {
        self.check_same(o)?;
        Ok(self.with_values(self.values.iter().zip(&o.values).map(|(a, b)| a * b).collect()))
    }

    fn check_same(&self, o: &SampledFunction) -> Result<()> {
        if self.shape != o.shape {
            return Err(Error::Param(format!("grid mismatch {:?} vs {:?}", self.shape, o.shape)));
        }
        Ok(())
    }

    fn stride(&self, axis: usize) -> usize {
        self.shape[axis + 1..].iter().product()
    }

    pub fn coord(&self, axis: usize, k: usize) -> f64 {
        self.lo[axis] + k as f64 * self.spacing[axis]
    }

    /// Trapezoid weights along one axis (uniform on periodic axes).
    pub fn axis_weights(&self, axis: usize) -> Vec<f64> {
        let (n, h) = (self.shape[axis], self.spacing[axis]);
        (0..n)
            .map(|k| if !self.periodic[axis] && (k == 0 || k == n - 1) { 0.5 * h } else { h })
            .collect()
    }

    /// Restrict axis 0 to its first `m` nodes.
    pub fn truncate_axis0(&self, m: usize) -> Result<Self> {
        if m < 2 || m > self.shape[0] {
            return Err(Error::Param(format!("cannot keep {m} of {} nodes", self.shape[0])));
        }
        let st = self.stride(0);
        let mut shape = self.shape.clone();
        shape[0] = m;
        Ok(SampledFunction { shape, values: self.values[..m * st].to_vec(), ..self.clone() })
    }

    /// Fourth-order central derivative along `axis` (one-sided fourth-order
    /// stencils at non-periodic edges).
    pub fn derivative(&self, axis: usize) -> Result<Self> {
        let n = self.shape[axis];
        if n < 5 {
            return Err(Error::Resolution { order: 1, needed: 5, got: n });
        }
        let st = self.stride(axis);
        let h = self.spacing[axis];
        let per = self.periodic[axis];
        let mut out = vec![0.0; self.values.len()];
        for (i, o) in out.iter_mut().enumerate() {
            let k = (i / st) % n;
            let base = i - k * st;
            let at = |j: isize| -> f64 {
                let jj = if per { j.rem_euclid(n as isize) as usize } else { j as usize };
                self.values[base + jj * st]
            };
            let k = k as isize;
            let ni = n as isize;
            *o = if per || (k >= 2 && k <= ni - 3) {
                (at(k - 2) - 8.0 * at(k - 1) + 8.0 * at(k + 1) - at(k + 2)) / (12.0 * h)
            } else if k < 2 {
                let s = k;
                let c = one_sided(s as usize);
                (0..5).map(|m| c[m] * at(m as isize)).sum::<f64>() / h
            } else {
                let s = ni - 1 - k;
                let c = one_sided(s as usize);
                -(0..5).map(|m| c[m] * at(ni - 1 - m as isize)).sum::<f64>() / h
            };
        }
        Ok(self.with_values(out))
    }

    /// Mixed derivative `∂^α` with `alpha[a]` derivatives along axis `a`.
    pub fn partial(&self, alpha: &[usize]) -> Result<Self> {
        let mut f = self.clone();
        for (a, &k) in alpha.iter().enumerate() {
            for _ in 0..k {
                f = f.derivative(a)?;
            }
        }
        Ok(f)
    }
}

/// Fourth-order one-sided first-derivative weights at offset `s ∈ {0, 1}`
/// from the left edge, over nodes 0..5.
fn one_sided(s: usize) -> [f64; 5] {
    match s {
        0 => [-25.0 / 12.0, 4.0, -3.0, 4.0 / 3.0, -0.25],
        _ => [-0.25, -5.0 / 6.0, 1.5, -0.5, 1.0 / 12.0],
    }
}

pub fn sup_norm(f: &SampledFunction) -> f64 {
    f.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

fn full_weights(f: &SampledFunction) -> Vec<f64> {
    let ws: Vec<Vec<f64>> = (0..f.dim()).map(|a| f.axis_weights(a)).collect();
    (0..f.values.len())
        .map(|i| {
            let mut r = i;
            let mut w = 1.0;
            for a in (0..f.dim()).rev() {
                w *= ws[a][r % f.shape[a]];
                r /= f.shape[a];
            }
            w
        })
        .collect()
}

/// `(∫|f|^q)^{1/q}` by the trapezoid rule; `q = ∞` gives the sup norm.
pub fn lq_norm(f: &SampledFunction, q: f64) -> Result<f64> {
    if q.is_infinite() {
        return Ok(sup_norm(f));
    }
    check_q(q)?;
    let w = full_weights(f);
    Ok(f.values.iter().zip(&w).map(|(v, w)| w * v.abs().powf(q)).sum::<f64>().powf(1.0 / q))
}

fn check_q(q: f64) -> Result<()> {
    if !(q >= 1.0) {
        return Err(Error::Param(format!("q must be >= 1, got {q}")));
    }
    Ok(())
}

fn check_s(s: f64) -> Result<()> {
    if !(s > 0.0 && s < 1.0) {
        return Err(Error::Param(format!("fractional order must lie in (0,1), got {s}")));
    }
    Ok(())
}

/// Outer-loop chunk for the double sums; fixed so results do not depend on
/// the worker count.
const CHUNK: usize = 64;

/// Gagliardo seminorm in the variables `axes` (jointly, dimension
/// `axes.len()`), with L^q over the remaining axes:
/// `(∫_rest ∫∫ |f(x,r) − f(y,r)|^q / |x − y|^{n+sq})^{1/q}`.
/// Diagonal cells are skipped.
pub fn gagliardo_axes(f: &SampledFunction, axes: &[usize], s: f64, q: f64) -> Result<f64> {
    check_s(s)?;
    check_q(q)?;
    for &a in axes {
        if f.shape[a] < 8 {
            return Err(Error::Resolution { order: 0, needed: 8, got: f.shape[a] });
        }
    }
    let rest: Vec<usize> = (0..f.dim()).filter(|a| !axes.contains(a)).collect();
    let n_in: usize = axes.iter().map(|&a| f.shape[a]).product();
    let n_rest: usize = rest.iter().map(|&a| f.shape[a]).product();
    let wa: Vec<Vec<f64>> = (0..f.dim()).map(|a| f.axis_weights(a)).collect();
    let split = |k: usize, ax: &[usize]| -> Vec<usize> {
        let mut r = k;
        let mut idx = vec![0; ax.len()];
        for (j, &a) in ax.iter().enumerate().rev() {
            idx[j] = r % f.shape[a];
            r /= f.shape[a];
        }
        idx
    };
    let flat = |ii: &[usize], ri: &[usize]| -> usize {
        let mut full = vec![0; f.dim()];
        for (j, &a) in axes.iter().enumerate() {
            full[a] = ii[j];
        }
        for (j, &a) in rest.iter().enumerate() {
            full[a] = ri[j];
        }
        full.iter().enumerate().fold(0, |acc, (a, &k)| acc * f.shape[a] + k)
    };
    let in_idx: Vec<Vec<usize>> = (0..n_in).map(|k| split(k, axes)).collect();
    let rest_idx: Vec<Vec<usize>> = (0..n_rest).map(|k| split(k, &rest)).collect();
    let w_in: Vec<f64> = in_idx.iter().map(|ii| axes.iter().zip(ii).map(|(&a, &k)| wa[a][k]).product()).collect();
    let w_rest: Vec<f64> = rest_idx.iter().map(|ri| rest.iter().zip(ri).map(|(&a, &k)| wa[a][k]).product()).collect();
    // slab[k][r] = f at inner index k, rest index r
    let slab: Vec<Vec<f64>> = in_idx
        .iter()
        .map(|ii| rest_idx.iter().map(|ri| f.values[flat(ii, ri)]).collect())
        .collect();
    let expo = axes.len() as f64 + s * q;
    let dist = |a: &[usize], b: &[usize]| -> f64 {
        axes.iter()
            .enumerate()
            .map(|(j, &ax)| {
                let mut d = (a[j] as f64 - b[j] as f64).abs() * f.spacing[ax];
                if f.periodic[ax] {
                    d = d.min(f.shape[ax] as f64 * f.spacing[ax] - d);
                }
                d * d
            })
            .sum::<f64>()
            .sqrt()
    };
    let partial: Vec<f64> = (0..n_in)
        .collect::<Vec<_>>()
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut acc = 0.0;
            for &i in chunk {
                for j in 0..n_in {
                    if i == j {
                        continue;
                    }
                    let inner: f64 = (0..n_rest)
                        .map(|r| w_rest[r] * (slab[i][r] - slab[j][r]).abs().powf(q))
                        .sum();
                    acc += w_in[i] * w_in[j] * inner / dist(&in_idx[i], &in_idx[j]).powf(expo);
                }
            }
            acc
        })
        .collect();
    Ok(partial.iter().sum::<f64>().powf(1.0 / q))
}

/// Gagliardo seminorm over all axes.
pub fn gagliardo_seminorm(f: &SampledFunction, s: f64, q: f64) -> Result<f64> {
    let axes: Vec<usize> = (0..f.dim()).collect();
    gagliardo_axes(f, &axes, s, q)
}

/// Gagliardo seminorm of a surface scalar with chordal distance
/// `|Φ(s) − Φ(s′)|` and area-element weights.
pub fn surface_gagliardo(surface: &ReferenceSurface, values: &[f64], s: f64, q: f64) -> Result<f64> {
    check_s(s)?;
    check_q(q)?;
    surface.check_shape(values.len())?;
    let nodes = surface.nodes();
    let n = nodes.len();
    let expo = 2.0 + s * q;
    let idx: Vec<usize> = (0..n).collect();
    let partial: Vec<f64> = idx
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut acc = 0.0;
            for &i in chunk {
                for j in 0..n {
                    if i != j {
                        let d = (nodes[i].x - nodes[j].x).norm();
                        acc += nodes[i].area * nodes[j].area * (values[i] - values[j]).abs().powf(q) / d.powf(expo);
                    }
                }
            }
            acc
        })
        .collect();
    Ok(partial.iter().sum::<f64>().powf(1.0 / q))
}

fn multi_indices(dim: usize, order: usize) -> Vec<Vec<usize>> {
    if dim == 0 {
        return if order == 0 { vec![vec![]] } else { vec![] };
    }
    let mut out = Vec::new();
    for k in 0..=order {
        for mut rest in multi_indices(dim - 1, order - k) {
            rest.insert(0, k);
            out.push(rest);
        }
    }
    out
}

/// `Σ_{|α| ≤ k} sup|∂^α f|` over all axes.
pub fn ck_norm(f: &SampledFunction, k: usize) -> Result<f64> {
    let mut total = 0.0;
    for o in 0..=k {
        for a in multi_indices(f.dim(), o) {
            total += sup_norm(&f.partial(&a)?);
        }
    }
    Ok(total)
}

/// `‖f‖_{W^{s,q}} = Σ_{|α| ≤ ⌊s⌋} ‖∂^α f‖_q + Σ_{|α| = ⌊s⌋} |∂^α f|_{W^{s−⌊s⌋,q}}`
/// over all axes.
pub fn sobolev_norm_ws(f: &SampledFunction, s: f64, q: f64) -> Result<f64> {
    check_q(q)?;
    if s < 0.0 {
        return Err(Error::Param("negative orders are not evaluated".into()));
    }
    let k = s.floor() as usize;
    let frac = s - k as f64;
    let mut total = 0.0;
    for o in 0..=k {
        for a in multi_indices(f.dim(), o) {
            let d = f.partial(&a)?;
            total += lq_norm(&d, q)?;
            if o == k && frac > 1e-12 {
                total += gagliardo_seminorm(&d, frac, q)?;
            }
        }
    }
    Ok(total)
}

/// How one distinct term of a composite norm measures its derivative.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Measure {
    Sup,
    Lq,
    /// Gagliardo in time (axis 0) with L^q in space; fractional order in
    /// millionths so terms stay hashable.
    GagTime(u64),
    /// Gagliardo jointly in the space axes with L^q in time.
    GagSpace(u64),
}

/// `measure(∂_t^dt ∂_x^dx f)`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NormTerm {
    pub dt: usize,
    pub dx: Vec<usize>,
    pub measure: Measure,
}

fn frac_key(s: f64) -> u64 {
    (s * 1e6).round() as u64
}

/// Member spaces of the time-space catalogue.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Member {
    /// `W^{s,q}(0,T; L^q)`
    TimeW(f64),
    /// `W^{j,q}(0,T; W^{s,q})` (`j` time derivatives, each in `L^q W^{s,q}`)
    SpaceW { dt: usize, s: f64 },
    /// `L^q(0,T; Ẇ^{1,q})`
    SpaceHomogeneous1,
    /// `C^a(0,T; C^b)`
    C(usize, usize),
}

impl Member {
    fn terms(&self, space_dim: usize) -> Vec<NormTerm> {
        let zero = vec![0; space_dim];
        let mut out = Vec::new();
        match *self {
            Member::TimeW(s) => {
                let k = s.floor() as usize;
                let frac = s - k as f64;
                for j in 0..=k {
                    out.push(NormTerm { dt: j, dx: zero.clone(), measure: Measure::Lq });
                }
                if frac > 1e-12 {
                    out.push(NormTerm { dt: k, dx: zero, measure: Measure::GagTime(frac_key(frac)) });
                }
            }
            Member::SpaceW { dt, s } => {
                let k = s.floor() as usize;
                let frac = s - k as f64;
                for j in 0..=dt {
                    for o in 0..=k {
                        for a in multi_indices(space_dim, o) {
                            if o == k && frac > 1e-12 {
                                out.push(NormTerm { dt: j, dx: a.clone(), measure: Measure::GagSpace(frac_key(frac)) });
                            }
                            out.push(NormTerm { dt: j, dx: a, measure: Measure::Lq });
                        }
                    }
                }
            }
            Member::SpaceHomogeneous1 => {
                for a in multi_indices(space_dim, 1) {
                    out.push(NormTerm { dt: 0, dx: a, measure: Measure::Lq });
                }
            }
            Member::C(a, b) => {
                for j in 0..=a {
                    for o in 0..=b {
                        for al in multi_indices(space_dim, o) {
                            out.push(NormTerm { dt: j, dx: al, measure: Measure::Sup });
                        }
                    }
                }
            }
        }
        out
    }
}

/// Names in the composite catalogue.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Composite {
    W1,
    W2,
    W3,
    W4,
    W5,
    W6,
    S1,
    S2,
    S3,
    S4,
    S5,
    C0,
    C1,
    C2,
    C3,
    C4,
}

impl Composite {
    pub const ALL: [Composite; 16] = [
        Composite::W1,
        Composite::W2,
        Composite::W3,
        Composite::W4,
        Composite::W5,
        Composite::W6,
        Composite::S1,
        Composite::S2,
        Composite::S3,
        Composite::S4,
        Composite::S5,
        Composite::C0,
        Composite::C1,
        Composite::C2,
        Composite::C3,
        Composite::C4,
    ];

    /// Member spaces and the names of members that are not evaluated.
    pub fn members(&self, q: f64) -> (Vec<Member>, Vec<&'static str>) {
        use Member::*;
        let iq = 1.0 / q;
        match self {
            Composite::W1 | Composite::W2 => (vec![TimeW(1.0), SpaceW { dt: 0, s: 2.0 }], vec![]),
            Composite::W3 => (vec![SpaceHomogeneous1], vec![]),
            Composite::W4 | Composite::S4 => (vec![TimeW(0.5 - 0.5 * iq), SpaceW { dt: 0, s: 1.0 - iq }], vec![]),
            Composite::W5 => (
                vec![TimeW(2.0 - 0.5 * iq), SpaceW { dt: 1, s: 2.0 - iq }, SpaceW { dt: 0, s: 3.0 - iq }],
                vec![],
            ),
            Composite::W6 => (vec![TimeW(0.5), SpaceW { dt: 0, s: 1.0 }], vec![]),
            Composite::S1 | Composite::S2 => (vec![TimeW(0.0)], vec![]),
            Composite::S3 => (vec![SpaceW { dt: 0, s: 1.0 }], vec!["W^{1,q}(0,T; homogeneous W^{-1,q})"]),
            Composite::S5 => (vec![TimeW(1.0 - 0.5 * iq), SpaceW { dt: 0, s: 2.0 - iq }], vec![]),
            Composite::C0 => (vec![C(0, 0)], vec![]),
            Composite::C1 => (vec![C(0, 1), C(1, 0)], vec![]),
            Composite::C2 => (vec![C(0, 2), C(1, 1)], vec![]),
            Composite::C3 => (vec![C(0, 1)], vec![]),
            Composite::C4 => (vec![C(0, 2)], vec![]),
        }
    }
}

impl FromStr for Composite {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Composite::ALL
            .iter()
            .copied()
            .find(|c| format!("{c:?}").eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Param(format!("unknown composite norm {s:?}")))
    }
}

/// Distinct terms of an intersection of members, in a fixed order.
pub fn distinct_terms(members: &[Member], space_dim: usize) -> Vec<NormTerm> {
    members
        .iter()
        .flat_map(|m| m.terms(space_dim))
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect()
}

/// Value of one term; axis 0 of `f` is time, the rest are space. Derivatives
/// are taken on the full grid before the time axis is cut to `nt` nodes, so
/// norms over nested intervals are comparable.
pub fn term_value(f: &SampledFunction, term: &NormTerm, q: f64, nt: Option<usize>) -> Result<f64> {
    let mut alpha = vec![term.dt];
    alpha.extend(&term.dx);
    let mut d = f.partial(&alpha)?;
    if let Some(m) = nt {
        d = d.truncate_axis0(m)?;
    }
    match term.measure {
        Measure::Sup => Ok(sup_norm(&d)),
        Measure::Lq => lq_norm(&d, q),
        Measure::GagTime(k) => gagliardo_axes(&d, &[0], k as f64 * 1e-6, q),
        Measure::GagSpace(k) => {
            let sp: Vec<usize> = (1..d.dim()).collect();
            gagliardo_axes(&d, &sp, k as f64 * 1e-6, q)
        }
    }
}

/// Composite value and members left out of the evaluation.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CompositeValue {
    pub value: f64,
    pub omitted: Vec<String>,
}

pub fn composite_norm(f: &SampledFunction, name: Composite, q: f64) -> Result<CompositeValue> {
    composite_norm_on(f, name, q, None)
}

/// Composite norm on `[0, t_{nt−1}]` (all of axis 0 when `nt` is `None`).
pub fn composite_norm_on(f: &SampledFunction, name: Composite, q: f64, nt: Option<usize>) -> Result<CompositeValue> {
    check_q(q)?;
    if f.dim() < 2 {
        return Err(Error::Param("composite norms need a time axis and at least one space axis".into()));
    }
    let (members, omitted) = name.members(q);
    let mut value = 0.0;
    for t in distinct_terms(&members, f.dim() - 1) {
        value += term_value(f, &t, q, nt)?;
    }
    Ok(CompositeValue { value, omitted: omitted.into_iter().map(String::from).collect() })
}

/// Norm of a member intersection on a time-space grid.
pub fn members_norm(f: &SampledFunction, members: &[Member], q: f64) -> Result<f64> {
    let mut v = 0.0;
    for t in distinct_terms(members, f.dim() - 1) {
        v += term_value(f, &t, q, None)?;
    }
    Ok(v)
}

/// Parsed norm specification: `C:k`, `L:q`, `W:s:q` or `<composite>:q`
/// (e.g. `S1:6`, `C2`).
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum NormSpec {
    Ck(usize),
    Lq(f64),
    Wsq { s: f64, q: f64 },
    Composite { name: Composite, q: f64 },
}

impl FromStr for NormSpec {
    type Err = Error;
    fn from_str(text: &str) -> Result<Self> {
        let parts: Vec<&str> = text.trim().split(':').collect();
        let num = |s: &str| -> Result<f64> {
            if s.eq_ignore_ascii_case("inf") {
                return Ok(f64::INFINITY);
            }
            s.parse::<f64>().map_err(|_| Error::Param(format!("bad number {s:?} in norm spec {text:?}")))
        };
        let spec = match parts.as_slice() {
            ["C", k] => NormSpec::Ck(k.parse().map_err(|_| Error::Param(format!("bad order in {text:?}")))?),
            ["L", q] => NormSpec::Lq(num(q)?),
            ["W", s, q] => NormSpec::Wsq { s: num(s)?, q: num(q)? },
            [name, q] => NormSpec::Composite { name: name.parse()?, q: num(q)? },
            [name] => NormSpec::Composite { name: name.parse()?, q: 2.0 },
            _ => return Err(Error::Param(format!("unrecognized norm spec {text:?}"))),
        };
        spec.validate()?;
        Ok(spec)
    }
}

impl fmt::Display for NormSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NormSpec::Ck(k) => write!(f, "C:{k}"),
            NormSpec::Lq(q) => write!(f, "L:{q}"),
            NormSpec::Wsq { s, q } => write!(f, "W:{s}:{q}"),
            NormSpec::Composite { name, q } => write!(f, "{name:?}:{q}"),
        }
    }
}

impl NormSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            NormSpec::Ck(_) => Ok(()),
            NormSpec::Lq(q) => check_q(q),
            NormSpec::Wsq { s, q } => {
                check_q(q)?;
                if s < 0.0 || (s.fract() != 0.0 && !(s.fract() > 0.0 && s.fract() < 1.0)) {
                    return Err(Error::Param(format!("bad Sobolev order {s}")));
                }
                Ok(())
            }
            NormSpec::Composite { q, .. } => check_q(q),
        }
    }
}

/// Evaluate any norm spec; composite names treat axis 0 as time.
pub fn sobolev_norm(f: &SampledFunction, spec: &NormSpec) -> Result<f64> {
    match *spec {
        NormSpec::Ck(k) => ck_norm(f, k),
        NormSpec::Lq(q) => lq_norm(f, q),
        NormSpec::Wsq { s, q } => sobolev_norm_ws(f, s, q),
        NormSpec::Composite { name, q } => Ok(composite_norm(f, name, q)?.value),
    }
}

/// Outcome of the product-estimate probe.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ProductProbe {
    pub ratios: Vec<f64>,
    pub skipped: usize,
    pub max: f64,
    pub median: f64,
}

/// `‖fg‖ / (‖f‖_{C¹C ∩ CC¹} ‖g‖)` with `‖·‖ = W^{s,q}L^q ∩ L^qW^{r,q}`.
pub fn product_ratio(f: &SampledFunction, g: &SampledFunction, s: f64, r: f64, q: f64) -> Result<Option<f64>> {
    let gm = [Member::TimeW(s), Member::SpaceW { dt: 0, s: r }];
    let ng = members_norm(g, &gm, q)?;
    if ng == 0.0 {
        return Ok(None);
    }
    let nf = members_norm(f, &[Member::C(1, 0), Member::C(0, 1)], q)?;
    if nf == 0.0 {
        return Ok(None);
    }
    Ok(Some(members_norm(&f.mul(g)?, &gm, q)? / (nf * ng)))
}

/// Random smooth multipliers and rough factors on `[0,1] × [0,1]^d`.
pub fn product_estimate_probe<R: Rng>(
    rng: &mut R,
    shape: &[usize],
    s: f64,
    r: f64,
    q: f64,
    trials: usize,
) -> Result<ProductProbe> {
    let d = shape.len();
    let lo = vec![0.0; d];
    let hi = vec![1.0; d];
    let per = vec![false; d];
    let mut ratios = Vec::with_capacity(trials);
    let mut skipped = 0;
    for _ in 0..trials {
        let fk: Vec<(Vec<f64>, f64, f64)> = (0..3)
            .map(|_| ((0..d).map(|_| rng.gen_range(-3.0..3.0)).collect(), rng.gen_range(0.0..6.3), rng.gen_range(-1.0..1.0)))
            .collect();
        let c0 = rng.gen_range(-1.0..1.0);
        let f = SampledFunction::from_fn(shape, &lo, &hi, &per, |x| {
            c0 + fk.iter().map(|(k, p, a)| a * (k.iter().zip(x).map(|(k, x)| k * x).sum::<f64>() + p).sin()).sum::<f64>()
        })?;
        let gk: Vec<(Vec<f64>, f64, f64)> = (1..=12)
            .map(|m| {
                let k = (0..d).map(|_| rng.gen_range(-1.0..1.0) * 3.0 * m as f64).collect();
                (k, rng.gen_range(0.0..6.3), rng.gen_range(-1.0..1.0) / m as f64)
            })
            .collect();
        let g = SampledFunction::from_fn(shape, &lo, &hi, &per, |x| {
            gk.iter().map(|(k, p, a)| a * (k.iter().zip(x).map(|(k, x)| k * x).sum::<f64>() + p).sin()).sum::<f64>()
        })?;
        match product_ratio(&f, &g, s, r, q)? {
            Some(v) => ratios.push(v),
            None => skipped += 1,
        }
    }
    let mut sorted = ratios.clone();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let median = if sorted.is_empty() { 0.0 } else { sorted[sorted.len() / 2] };
    let max = sorted.last().copied().unwrap_or(0.0);
    Ok(ProductProbe { ratios, skipped, max, median })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn line(n: usize, f: impl Fn(f64) -> f64) -> SampledFunction {
        SampledFunction::from_fn(&[n], &[0.0], &[1.0], &[false], |x| f(x[0])).unwrap()
    }

    #[test]
    fn gagliardo_examples() {
        assert_eq!(gagliardo_seminorm(&line(65, |_| 2.0), 0.5, 2.0).unwrap(), 0.0);
        let v = gagliardo_seminorm(&line(257, |x| x), 0.5, 2.0).unwrap();
        assert!((v - 1.0).abs() < 0.01, "{v}");
        let coarse = gagliardo_seminorm(&line(129, |x| x), 0.5, 2.0).unwrap();
        assert!((v - coarse).abs() <= 0.01 * v && v > coarse);
        let w = gagliardo_seminorm(&line(513, |x| x), 0.25, 2.0).unwrap();
        assert!((w - (8.0f64 / 15.0).sqrt()).abs() < 0.01, "{w}");
        assert!(gagliardo_seminorm(&line(65, |x| x), 1.5, 2.0).is_err());
    }

    #[test]
    fn ck_examples() {
        assert!((ck_norm(&line(33, |_| 3.0), 3).unwrap() - 3.0).abs() < 1e-12);
        let f = SampledFunction::from_fn(&[256], &[0.0], &[2.0 * PI], &[true], |x| x[0].sin()).unwrap();
        assert!((ck_norm(&f, 1).unwrap() - 2.0).abs() < 1e-6);
    }

    #[test]
    fn unit_mass_s1() {
        let f = SampledFunction::from_fn(&[9, 9, 9, 9], &[0.0; 4], &[1.0; 4], &[false; 4], |_| 1.0).unwrap();
        let v = composite_norm(&f, Composite::S1, 6.0).unwrap().value;
        assert!((v - 1.0).abs() < 1e-12);
    }

    #[test]
    fn s3_flags_omission() {
        let f = SampledFunction::from_fn(&[9, 9], &[0.0; 2], &[1.0; 2], &[false; 2], |x| x[0] * x[1]).unwrap();
        assert_eq!(composite_norm(&f, Composite::S3, 2.0).unwrap().omitted.len(), 1);
    }

    #[test]
    fn spec_parsing() {
        assert_eq!("W:0.5:2".parse::<NormSpec>().unwrap(), NormSpec::Wsq { s: 0.5, q: 2.0 });
        assert_eq!("C:2".parse::<NormSpec>().unwrap(), NormSpec::Ck(2));
        assert_eq!("s1:6".parse::<NormSpec>().unwrap(), NormSpec::Composite { name: Composite::S1, q: 6.0 });
        assert!("L:0.5".parse::<NormSpec>().is_err());
        assert!("X:1".parse::<NormSpec>().is_err());
    }

    #[test]
    fn unit_multiplier_and_zero_factor() {
        let sh = [12, 12];
        let one = SampledFunction::from_fn(&sh, &[0.0; 2], &[1.0; 2], &[false; 2], |_| 1.0).unwrap();
        let g = SampledFunction::from_fn(&sh, &[0.0; 2], &[1.0; 2], &[false; 2], |x| (7.0 * x[0]).sin() * x[1]).unwrap();
        let r = product_ratio(&one, &g, 0.5, 0.5, 2.0).unwrap().unwrap();
        assert!((r - 1.0).abs() < 1e-12);
        assert!(product_ratio(&one, &one.scaled(0.0), 0.5, 0.5, 2.0).unwrap().is_none());
    }
}
