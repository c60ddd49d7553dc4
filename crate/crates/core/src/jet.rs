//! Second-order forward-mode jets in three variables.
//!
//! A [`Jet`] carries a value together with its gradient and Hessian with
//! respect to three seed variables. Composition follows the chain rule, so
//! evaluating a closed-form expression on jets yields exact first and second
//! derivatives.

use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Sub, SubAssign};

#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct Jet {
    pub v: f64,
    pub g: [f64; 3],
    pub h: [[f64; 3]; 3],
}

impl Jet {
    pub const fn cst(v: f64) -> Jet {
        Jet { v, g: [0.0; 3], h: [[0.0; 3]; 3] }
    }

    pub fn is_finite(&self) -> bool {
        self.v.is_finite() && self.g.iter().chain(self.h.iter().flatten()).all(|x| x.is_finite())
    }

    /// Seed variable number `i` with value `v`.
    pub fn var(v: f64, i: usize) -> Jet {
        let mut j = Jet::cst(v);
        j.g[i] = 1.0;
        j
    }

    /// Three seeded variables at the point `x`.
    pub fn vars(x: [f64; 3]) -> [Jet; 3] {
        [Jet::var(x[0], 0), Jet::var(x[1], 1), Jet::var(x[2], 2)]
    }

    /// Apply a scalar function with value `f0`, derivative `f1`, second
    /// derivative `f2` (all evaluated at `self.v`).
    #[inline]
    pub fn chain(self, f0: f64, f1: f64, f2: f64) -> Jet {
        let mut r = Jet::cst(f0);
        for i in 0..3 {
            r.g[i] = f1 * self.g[i];
            for k in 0..3 {
                r.h[i][k] = f1 * self.h[i][k] + f2 * self.g[i] * self.g[k];
            }
        }
        r
    }

    pub fn sqrt(self) -> Jet {
        let s = self.v.sqrt();
        self.chain(s, 0.5 / s, -0.25 / (s * self.v))
    }

    pub fn sin(self) -> Jet {
        let (s, c) = self.v.sin_cos();
        self.chain(s, c, -s)
    }

    pub fn cos(self) -> Jet {
        let (s, c) = self.v.sin_cos();
        self.chain(c, -s, -c)
    }

    pub fn exp(self) -> Jet {
        let e = self.v.exp();
        self.chain(e, e, e)
    }

    pub fn ln(self) -> Jet {
        self.chain(self.v.ln(), 1.0 / self.v, -1.0 / (self.v * self.v))
    }

    pub fn recip(self) -> Jet {
        let r = 1.0 / self.v;
        self.chain(r, -r * r, 2.0 * r * r * r)
    }

    pub fn powi(self, n: i32) -> Jet {
        let nf = n as f64;
        self.chain(
            self.v.powi(n),
            nf * self.v.powi(n - 1),
            nf * (nf - 1.0) * self.v.powi(n - 2),
        )
    }

    pub fn atan(self) -> Jet {
        let d = 1.0 + self.v * self.v;
        self.chain(self.v.atan(), 1.0 / d, -2.0 * self.v / (d * d))
    }

    pub fn acos(self) -> Jet {
        let w = 1.0 - self.v * self.v;
        let s = w.sqrt();
        self.chain(self.v.acos(), -1.0 / s, -self.v / (w * s))
    }

    /// Four-quadrant arctangent of `y / x`.
    pub fn atan2(y: Jet, x: Jet) -> Jet {
        let v = y.v.atan2(x.v);
        let mut r = if x.v.abs() >= y.v.abs() {
            (y / x).atan()
        } else {
            -(x / y).atan()
        };
        r.v = v;
        r
    }

    pub fn sq(self) -> Jet {
        self * self
    }
}

impl From<f64> for Jet {
    fn from(v: f64) -> Jet {
        Jet::cst(v)
    }
}

impl Add for Jet {
    type Output = Jet;
    #[inline]
    fn add(mut self, o: Jet) -> Jet {
        self.v += o.v;
        for i in 0..3 {
            self.g[i] += o.g[i];
            for k in 0..3 {
                self.h[i][k] += o.h[i][k];
            }
        }
        self
    }
}

impl Sub for Jet {
    type Output = Jet;
    #[inline]
    fn sub(self, o: Jet) -> Jet {
        self + (-o)
    }
}

impl Neg for Jet {
    type Output = Jet;
    #[inline]
    fn neg(self) -> Jet {
        self * -1.0
    }
}

impl Mul for Jet {
    type Output = Jet;
    #[inline]
    fn mul(self, o: Jet) -> Jet {
        let mut r = Jet::cst(self.v * o.v);
        for i in 0..3 {
            r.g[i] = self.v * o.g[i] + o.v * self.g[i];
            for k in 0..3 {
                r.h[i][k] = self.v * o.h[i][k]
                    + o.v * self.h[i][k]
                    + self.g[i] * o.g[k]
                    + o.g[i] * self.g[k];
            }
        }
        r
    }
}

impl Div for Jet {
    type Output = Jet;
    #[inline]
    fn div(self, o: Jet) -> Jet {
        self * o.recip()
    }
}

impl Add<f64> for Jet {
    type Output = Jet;
    fn add(mut self, o: f64) -> Jet {
        self.v += o;
        self
    }
}

impl Sub<f64> for Jet {
    type Output = Jet;
    fn sub(mut self, o: f64) -> Jet {
        self.v -= o;
        self
    }
}

impl Mul<f64> for Jet {
    type Output = Jet;
    #[inline]
    fn mul(mut self, o: f64) -> Jet {
        self.v *= o;
        for i in 0..3 {
            self.g[i] *= o;
            for k in 0..3 {
                self.h[i][k] *= o;
            }
        }
        self
    }
}

impl Div<f64> for Jet {
    type Output = Jet;
    fn div(self, o: f64) -> Jet {
        self * (1.0 / o)
    }
}

impl Add<Jet> for f64 {
    type Output = Jet;
    fn add(self, o: Jet) -> Jet {
        o + self
    }
}

impl Sub<Jet> for f64 {
    type Output = Jet;
    fn sub(self, o: Jet) -> Jet {
        (-o) + self
    }
}

impl Mul<Jet> for f64 {
    type Output = Jet;
    fn mul(self, o: Jet) -> Jet {
        o * self
    }
}

impl Div<Jet> for f64 {
    type Output = Jet;
    fn div(self, o: Jet) -> Jet {
        o.recip() * self
    }
}

impl AddAssign for Jet {
    fn add_assign(&mut self, o: Jet) {
        *self = *self + o;
    }
}

impl SubAssign for Jet {
    fn sub_assign(&mut self, o: Jet) {
        *self = *self - o;
    }
}

impl MulAssign<f64> for Jet {
    fn mul_assign(&mut self, o: f64) {
        *self = *self * o;
    }
}

pub fn dot3(a: &[Jet; 3], b: &[Jet; 3]) -> Jet {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub fn norm3(a: &[Jet; 3]) -> Jet {
    dot3(a, a).sqrt()
}

pub fn cross3(a: &[Jet; 3], b: &[Jet; 3]) -> [Jet; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

pub fn scale3(a: &[Jet; 3], s: Jet) -> [Jet; 3] {
    [a[0] * s, a[1] * s, a[2] * s]
}

pub fn add3(a: &[Jet; 3], b: &[Jet; 3]) -> [Jet; 3] {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

pub fn sub3(a: &[Jet; 3], b: &[Jet; 3]) -> [Jet; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub fn values3(a: &[Jet; 3]) -> [f64; 3] {
    [a[0].v, a[1].v, a[2].v]
}

pub fn csts3(x: [f64; 3]) -> [Jet; 3] {
    [Jet::cst(x[0]), Jet::cst(x[1]), Jet::cst(x[2])]
}

/// Gradient matrix of a vector of jets: `m[i][j] = ∂_i f_j`.
pub fn grad_of(f: &[Jet; 3]) -> [[f64; 3]; 3] {
    let mut m = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            m[i][j] = f[j].g[i];
        }
    }
    m
}

/// Build a jet from a value and finite-difference samples on the 27-point
/// box stencil `f(x + δ(a,b,c))`, `a,b,c ∈ {-1,0,1}` (index `a+1` etc.).
pub fn jet_from_stencil(s: &[[[f64; 3]; 3]; 3], delta: f64) -> Jet {
    let at = |o: [i32; 3]| s[(o[0] + 1) as usize][(o[1] + 1) as usize][(o[2] + 1) as usize];
    let mut j = Jet::cst(at([0, 0, 0]));
    let e = |i: usize, sgn: i32| {
        let mut o = [0; 3];
        o[i] = sgn;
        o
    };
    for i in 0..3 {
        j.g[i] = (at(e(i, 1)) - at(e(i, -1))) / (2.0 * delta);
        j.h[i][i] = (at(e(i, 1)) - 2.0 * at([0, 0, 0]) + at(e(i, -1))) / (delta * delta);
    }
    for i in 0..3 {
        for k in (i + 1)..3 {
            let mut pp = [0; 3];
            pp[i] = 1;
            pp[k] = 1;
            let mut mm = [0; 3];
            mm[i] = -1;
            mm[k] = -1;
            let mut pm = [0; 3];
            pm[i] = 1;
            pm[k] = -1;
            let mut mp = [0; 3];
            mp[i] = -1;
            mp[k] = 1;
            let d = (at(pp) - at(pm) - at(mp) + at(mm)) / (4.0 * delta * delta);
            j.h[i][k] = d;
            j.h[k][i] = d;
        }
    }
    j
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd_check(f: impl Fn([f64; 3]) -> f64, jf: impl Fn([Jet; 3]) -> Jet, x: [f64; 3]) {
        let j = jf(Jet::vars(x));
        let d = 1e-4;
        for i in 0..3 {
            let mut xp = x;
            let mut xm = x;
            xp[i] += d;
            xm[i] -= d;
            let g = (f(xp) - f(xm)) / (2.0 * d);
            assert!((g - j.g[i]).abs() < 1e-6 * (1.0 + g.abs()), "grad {i}: {g} vs {}", j.g[i]);
            for k in 0..3 {
                let gp = jf(Jet::vars(xp)).g[k];
                let gm = jf(Jet::vars(xm)).g[k];
                let hh = (gp - gm) / (2.0 * d);
                assert!((hh - j.h[i][k]).abs() < 1e-6 * (1.0 + hh.abs()));
            }
        }
    }

    #[test]
    fn chain_rule_matches_differences() {
        let x = [0.3, -0.7, 1.1];
        fd_check(
            |x| (x[0] * x[1]).sin() + x[2].exp() / (1.0 + x[0] * x[0]),
            |x| (x[0] * x[1]).sin() + x[2].exp() / (1.0 + x[0] * x[0]),
            x,
        );
        fd_check(
            |x| x[1].atan2(x[0]) + (x[0] * x[0] + x[2] * x[2]).sqrt(),
            |x| Jet::atan2(x[1], x[0]) + (x[0] * x[0] + x[2] * x[2]).sqrt(),
            x,
        );
        fd_check(
            |x| (0.2 * x[2]).acos() * x[0].cos() + (x[1] * x[1] + 2.0).ln() + x[0].powi(3),
            |x| (x[2] * 0.2).acos() * x[0].cos() + (x[1] * x[1] + 2.0).ln() + x[0].powi(3),
            x,
        );
    }

    #[test]
    fn atan2_branches_agree() {
        for &(y, x) in &[(0.3, 1.0), (1.0, 0.2), (-1.0, -0.1), (0.1, -1.0), (-0.5, 0.5)] {
            let a = Jet::atan2(Jet::var(y, 0), Jet::var(x, 1));
            let r2 = x * x + y * y;
            assert!((a.v - f64::atan2(y, x)).abs() < 1e-15);
            assert!((a.g[0] - x / r2).abs() < 1e-12);
            assert!((a.g[1] + y / r2).abs() < 1e-12);
        }
    }

    #[test]
    fn stencil_jet_of_quadratic_is_exact() {
        let f = |x: [f64; 3]| 1.0 + 2.0 * x[0] - x[1] * x[2] + 0.5 * x[0] * x[0];
        let x0 = [0.1, 0.2, 0.3];
        let d = 0.01;
        let mut s = [[[0.0; 3]; 3]; 3];
        for a in 0..3 {
            for b in 0..3 {
                for c in 0..3 {
                    s[a][b][c] = f([
                        x0[0] + d * (a as f64 - 1.0),
                        x0[1] + d * (b as f64 - 1.0),
                        x0[2] + d * (c as f64 - 1.0),
                    ]);
                }
            }
        }
        let j = jet_from_stencil(&s, d);
        assert!((j.g[0] - 2.1).abs() < 1e-10);
        assert!((j.h[1][2] + 1.0).abs() < 1e-10);
        assert!((j.h[0][0] - 1.0).abs() < 1e-10);
    }
}
