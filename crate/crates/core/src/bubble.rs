//! Exact solutions of the flat H-system: the inverse stereographic
//! projection, its Möbius images and rational multi-covers.

use nalgebra::{DMatrix, Matrix3};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{invalid, Error, Result};
use crate::field::{report_from, Field2D, ResidualReport, V3};
use crate::quad;

/// Inverse stereographic projection `(2x, 2y, r^2 - 1) / (1 + r^2)`.
pub fn omega(x: f64, y: f64) -> V3 {
    let d = 1.0 + x * x + y * y;
    V3::new(2.0 * x / d, 2.0 * y / d, (x * x + y * y - 1.0) / d)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OmegaJet {
    pub value: V3,
    pub dx: V3,
    pub dy: V3,
    /// `dx × dy`, equal to `-4 ω / (1 + r^2)^2`.
    pub cross: V3,
    /// `|∇ω|^2 = 8 / (1 + r^2)^2`
    pub grad_sq: f64,
}

pub fn omega_jet(x: f64, y: f64) -> OmegaJet {
    let d = 1.0 + x * x + y * y;
    let d2 = d * d;
    let dx = V3::new(2.0 * (1.0 + y * y - x * x), -4.0 * x * y, 4.0 * x) / d2;
    let dy = V3::new(-4.0 * x * y, 2.0 * (1.0 + x * x - y * y), 4.0 * y) / d2;
    OmegaJet { value: omega(x, y), dx, dy, cross: dx.cross(&dy), grad_sq: 8.0 / d2 }
}

/// A degree-one bubble `rot · ω(e^{-iθ}(z - a)/λ) + shift`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimpleBubble {
    pub a: [f64; 2],
    pub lambda: f64,
    pub theta: f64,
    pub rot: Matrix3<f64>,
    pub shift: V3,
}

impl SimpleBubble {
    pub fn identity() -> Self {
        Self::new([0.0, 0.0], 1.0)
    }

    pub fn new(a: [f64; 2], lambda: f64) -> Self {
        SimpleBubble { a, lambda, theta: 0.0, rot: Matrix3::identity(), shift: V3::zeros() }
    }

    pub fn with_shift(mut self, shift: V3) -> Self {
        self.shift = shift;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0) {
            return Err(invalid("lambda", "must be positive"));
        }
        let orth = (self.rot * self.rot.transpose() - Matrix3::identity()).abs().max();
        if orth > 1e-12 || (self.rot.determinant() - 1.0).abs() > 1e-12 {
            return Err(invalid("rot", "must be a rotation"));
        }
        Ok(())
    }

    /// Chart coordinate fed to ω.
    pub fn local(&self, x: f64, y: f64) -> (f64, f64) {
        let (c, s) = (self.theta.cos(), self.theta.sin());
        let (u, v) = ((x - self.a[0]) / self.lambda, (y - self.a[1]) / self.lambda);
        (c * u + s * v, -s * u + c * v)
    }

    /// Value and first derivatives in chart coordinates.
    pub fn jet(&self, x: f64, y: f64) -> (V3, V3, V3) {
        let (u, v) = self.local(x, y);
        let j = omega_jet(u, v);
        let (c, s) = (self.theta.cos() / self.lambda, self.theta.sin() / self.lambda);
        let dx = self.rot * (j.dx * c - j.dy * s);
        let dy = self.rot * (j.dx * s + j.dy * c);
        (self.rot * j.value + self.shift, dx, dy)
    }

    pub fn sample(&self, n: usize, half_width: f64) -> Field2D {
        Field2D::from_fn3(n, half_width, |x, y| eval_bubble(self, x, y))
    }
}

pub fn eval_bubble(b: &SimpleBubble, x: f64, y: f64) -> V3 {
    let (u, v) = b.local(x, y);
    b.rot * omega(u, v) + b.shift
}

/// Residual of `Δf = 2 f_x × f_y` with five-point Laplacian and central
/// first differences. The sign convention uses the analyst's Laplacian;
/// norms are unchanged under the opposite sign.
pub fn hbubble_residual(f: &Field2D) -> Result<ResidualReport> {
    f.require(3, 5)?;
    Ok(hbubble_residual_field(f).0)
}

pub fn hbubble_residual_field(f: &Field2D) -> (ResidualReport, Field2D) {
    report_from(f, |i, j| {
        let (fx, fy) = f.grad3(i, j);
        f.lap3(i, j) - 2.0 * fx.cross(&fy)
    })
}

/// `ω ∘ (P/Q)` for complex polynomials with coefficients listed from the
/// constant term up.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RationalMap {
    pub p: Vec<Complex64>,
    pub q: Vec<Complex64>,
}

fn trim(c: &[Complex64]) -> Vec<Complex64> {
    let mut v = c.to_vec();
    while v.len() > 1 && v.last().map_or(false, |z| z.norm() == 0.0) {
        v.pop();
    }
    v
}

fn horner(c: &[Complex64], z: Complex64) -> (Complex64, Complex64) {
    let mut p = Complex64::new(0.0, 0.0);
    let mut dp = Complex64::new(0.0, 0.0);
    for &a in c.iter().rev() {
        dp = dp * z + p;
        p = p * z + a;
    }
    (p, dp)
}

impl RationalMap {
    pub fn new(p: &[Complex64], q: &[Complex64]) -> Result<Self> {
        let r = RationalMap { p: trim(p), q: trim(q) };
        if r.q.iter().all(|z| z.norm() == 0.0) || r.p.iter().all(|z| z.norm() == 0.0) {
            return Err(invalid("q", "polynomials must be nonzero"));
        }
        if r.degree() < 1 {
            return Err(invalid("p", "degree must be at least one"));
        }
        let res = r.relative_resultant();
        if res < 1e-10 {
            return Err(Error::Reducible(res));
        }
        Ok(r)
    }

    /// Convenience constructor from real coefficients.
    pub fn real(p: &[f64], q: &[f64]) -> Result<Self> {
        let c = |v: &[f64]| v.iter().map(|&x| Complex64::new(x, 0.0)).collect::<Vec<_>>();
        Self::new(&c(p), &c(q))
    }

    pub fn degree(&self) -> usize {
        (self.p.len() - 1).max(self.q.len() - 1)
    }

    /// Sylvester resultant divided by `|P|^{deg Q} |Q|^{deg P}`.
    pub fn relative_resultant(&self) -> f64 {
        let (m, n) = (self.p.len() - 1, self.q.len() - 1);
        if m + n == 0 {
            return 1.0;
        }
        let size = m + n;
        let mut s = DMatrix::<Complex64>::zeros(size, size);
        for r in 0..n {
            for (k, &c) in self.p.iter().rev().enumerate() {
                s[(r, r + k)] = c;
            }
        }
        for r in 0..m {
            for (k, &c) in self.q.iter().rev().enumerate() {
                s[(n + r, r + k)] = c;
            }
        }
        let norm = |c: &[Complex64]| c.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        s.determinant().norm() / (norm(&self.p).powi(n as i32) * norm(&self.q).powi(m as i32))
    }

    pub fn eval(&self, x: f64, y: f64) -> V3 {
        let z = Complex64::new(x, y);
        let (p, _) = horner(&self.p, z);
        let (q, _) = horner(&self.q, z);
        let pq = p * q.conj();
        let d = p.norm_sqr() + q.norm_sqr();
        V3::new(2.0 * pq.re, 2.0 * pq.im, p.norm_sqr() - q.norm_sqr()) / d
    }

    /// `|∇(ω ∘ P/Q)|^2 = 8 |P'Q - Q'P|^2 / (|P|^2 + |Q|^2)^2`.
    pub fn energy_density(&self, x: f64, y: f64) -> f64 {
        let z = Complex64::new(x, y);
        let (p, dp) = horner(&self.p, z);
        let (q, dq) = horner(&self.q, z);
        let d = p.norm_sqr() + q.norm_sqr();
        8.0 * (dp * q - dq * p).norm_sqr() / (d * d)
    }

    pub fn sample(&self, n: usize, half_width: f64) -> Field2D {
        Field2D::from_fn3(n, half_width, |x, y| self.eval(x, y))
    }
}

/// Periodic trapezoid rule in the angle, doubled until it settles.
pub(crate) fn angular_integral(g: impl Fn(f64) -> f64, scale: f64) -> f64 {
    let mut m = 32usize;
    let trap = |m: usize| (0..m).map(|k| g(2.0 * PI * k as f64 / m as f64)).sum::<f64>() * 2.0 * PI / m as f64;
    let mut prev = trap(m);
    while m < 1 << 16 {
        m *= 2;
        let cur = trap(m);
        if (cur - prev).abs() <= 1e-14 * (scale + cur.abs()) {
            return cur;
        }
        prev = cur;
    }
    prev
}

/// Plane integral of a density by polar quadrature on the disk of radius
/// `radius` about `center`, with `s = ln(1 + r / scale)` as radial variable.
pub(crate) fn polar_integral_about(
    density: impl Fn(f64, f64) -> f64,
    center: (f64, f64),
    scale: f64,
    radius: f64,
    tol: f64,
) -> Result<f64> {
    quad::integrate(
        |s| {
            let r = scale * (s.exp() - 1.0);
            let ring = angular_integral(|t| density(center.0 + r * t.cos(), center.1 + r * t.sin()), 1.0);
            ring * r * scale * s.exp()
        },
        0.0,
        (1.0 + radius / scale).ln(),
        tol,
    )
}

pub(crate) fn polar_integral(density: impl Fn(f64, f64) -> f64, radius: f64, tol: f64) -> Result<f64> {
    polar_integral_about(density, (0.0, 0.0), 1.0, radius, tol)
}

/// A finite-energy map from the plane onto a sphere, seen through its
/// value and energy density.
pub trait SphereMap {
    fn value(&self, x: f64, y: f64) -> V3;
    /// `|∇u|^2`
    fn density(&self, x: f64, y: f64) -> f64;
    fn degree(&self) -> usize;
    /// Where the energy concentrates, and at what scale.
    fn focus(&self) -> ((f64, f64), f64);
}

impl SphereMap for SimpleBubble {
    fn value(&self, x: f64, y: f64) -> V3 {
        eval_bubble(self, x, y)
    }
    fn density(&self, x: f64, y: f64) -> f64 {
        let l2 = self.lambda * self.lambda;
        let d = l2 + (x - self.a[0]).powi(2) + (y - self.a[1]).powi(2);
        8.0 * l2 / (d * d)
    }
    fn degree(&self) -> usize {
        1
    }
    fn focus(&self) -> ((f64, f64), f64) {
        ((self.a[0], self.a[1]), self.lambda)
    }
}

impl SphereMap for RationalMap {
    fn value(&self, x: f64, y: f64) -> V3 {
        self.eval(x, y)
    }
    fn density(&self, x: f64, y: f64) -> f64 {
        self.energy_density(x, y)
    }
    fn degree(&self) -> usize {
        RationalMap::degree(self)
    }
    fn focus(&self) -> ((f64, f64), f64) {
        ((0.0, 0.0), 1.0)
    }
}

/// Dirichlet energy of `ω ∘ (P/Q)` over the plane. The disk of radius
/// `quad_radius` is integrated adaptively; the remaining tail is bounded by
/// `32π deg^2 / R^2`, which must fit within `tol`.
pub fn bubble_energy(r: &RationalMap, quad_radius: f64, tol: f64) -> Result<f64> {
    let res = r.relative_resultant();
    if res < 1e-10 {
        return Err(Error::Reducible(res));
    }
    let k = r.degree() as f64;
    let tail = 32.0 * PI * k * k / (quad_radius * quad_radius);
    if tail >= tol {
        return Err(Error::Quadrature { tol, achieved: tail });
    }
    polar_integral(|x, y| r.energy_density(x, y), quad_radius, tol - tail)
}

/// Radius at which the tail bound of [`bubble_energy`] uses half of `tol`.
pub fn energy_radius(degree: usize, tol: f64) -> f64 {
    (64.0 * PI * (degree * degree) as f64 / tol).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(7)
    }

    #[test]
    fn omega_fixed_points() {
        assert_eq!(omega(0.0, 0.0), V3::new(0.0, 0.0, -1.0));
        assert_eq!(omega(1.0, 0.0), V3::new(1.0, 0.0, 0.0));
    }

    #[test]
    fn omega_lands_on_unit_sphere() {
        let mut g = rng();
        for _ in 0..10_000 {
            let (x, y) = (g.gen_range(-50.0..50.0), g.gen_range(-50.0..50.0));
            assert!((omega(x, y).norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn jet_at_origin() {
        let j = omega_jet(0.0, 0.0);
        assert_eq!(j.dx.norm_squared(), 4.0);
        assert_eq!(j.dy.norm_squared(), 4.0);
        assert_eq!(j.grad_sq, 8.0);
        assert_eq!(j.dx.dot(&j.dy), 0.0);
    }

    #[test]
    fn cross_product_sign_follows_the_derivatives() {
        let j = omega_jet(0.0, 0.0);
        assert!((j.cross - V3::new(0.0, 0.0, 4.0)).norm() < 1e-15);
        let mut g = rng();
        for _ in 0..200 {
            let (x, y) = (g.gen_range(-3.0..3.0), g.gen_range(-3.0..3.0));
            let j = omega_jet(x, y);
            let d = 1.0 + x * x + y * y;
            assert!((j.cross + 4.0 * j.value / (d * d)).norm() < 1e-14);
        }
    }

    #[test]
    fn jet_matches_finite_differences() {
        let mut g = rng();
        let h = 1e-5;
        for _ in 0..200 {
            let (x, y) = (g.gen_range(-3.0..3.0), g.gen_range(-3.0..3.0));
            let j = omega_jet(x, y);
            let fx = (omega(x + h, y) - omega(x - h, y)) / (2.0 * h);
            let fy = (omega(x, y + h) - omega(x, y - h)) / (2.0 * h);
            assert!((j.dx - fx).norm() < 1e-8);
            assert!((j.dy - fy).norm() < 1e-8);
            assert!((j.cross - fx.cross(&fy)).norm() < 1e-8);
            assert!((j.grad_sq - fx.norm_squared() - fy.norm_squared()).abs() < 1e-8);
            for k in 0..3 {
                for l in 0..3 {
                    let lhs = j.dx[k] * j.dx[l] + j.dy[k] * j.dy[l];
                    let delta = if k == l { 1.0 } else { 0.0 };
                    let rhs = (delta - j.value[k] * j.value[l]) * j.grad_sq / 2.0;
                    assert!((lhs - rhs).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn bubble_shift_and_identity() {
        let b = SimpleBubble::identity();
        assert_eq!(eval_bubble(&b, 0.0, 0.0), V3::new(0.0, 0.0, -1.0));
        let s = b.clone().with_shift(V3::new(1.0, 2.0, 3.0));
        for &(x, y) in &[(0.3, -0.2), (4.0, 1.0)] {
            assert!((eval_bubble(&s, x, y) - eval_bubble(&b, x, y) - V3::new(1.0, 2.0, 3.0)).norm() < 1e-15);
        }
    }

    #[test]
    fn chart_rotation_is_a_rotation_about_the_pole() {
        let mut g = rng();
        for _ in 0..100 {
            let theta = g.gen_range(0.0..2.0 * PI);
            let mut b = SimpleBubble::new([0.3, -0.5], 0.7);
            b.theta = theta;
            let mut c = SimpleBubble::new([0.3, -0.5], 0.7);
            c.rot = *nalgebra::Rotation3::from_axis_angle(&V3::z_axis(), -theta).matrix();
            let (x, y) = (g.gen_range(-3.0..3.0), g.gen_range(-3.0..3.0));
            assert!((eval_bubble(&b, x, y) - eval_bubble(&c, x, y)).norm() < 1e-12);
        }
    }

    #[test]
    fn jet_chain_rule() {
        let mut b = SimpleBubble::new([0.4, 0.1], 0.3);
        b.theta = 1.1;
        b.rot = *nalgebra::Rotation3::from_euler_angles(0.2, -0.4, 0.9).matrix();
        let h = 1e-6;
        let (x, y) = (0.2, 0.5);
        let (_, dx, dy) = b.jet(x, y);
        let fx = (eval_bubble(&b, x + h, y) - eval_bubble(&b, x - h, y)) / (2.0 * h);
        let fy = (eval_bubble(&b, x, y + h) - eval_bubble(&b, x, y - h)) / (2.0 * h);
        assert!((dx - fx).norm() < 1e-6 && (dy - fy).norm() < 1e-6);
    }

    #[test]
    fn gradient_bound_constant_is_two_root_two() {
        let b = SimpleBubble::new([0.5, -1.0], 0.25);
        let mut c = 0.0f64;
        for i in 0..200 {
            for j in 0..200 {
                let (x, y) = (-4.0 + i as f64 * 0.04, -4.0 + j as f64 * 0.04);
                let (_, dx, dy) = b.jet(x, y);
                let g = (dx.norm_squared() + dy.norm_squared()).sqrt();
                let d2 = (x - 0.5).powi(2) + (y + 1.0).powi(2);
                c = c.max(g * (d2 + 0.0625) / 0.25);
            }
        }
        assert!((c - 2.0 * 2f64.sqrt()).abs() < 1e-9, "{c}");
    }

    #[test]
    fn residual_is_second_order() {
        let b = SimpleBubble::identity();
        let coarse = hbubble_residual(&b.sample(257, 4.0)).unwrap();
        let fine = hbubble_residual(&b.sample(513, 4.0)).unwrap();
        let ratio = coarse.residual.max / fine.residual.max;
        assert!((ratio - 4.0).abs() < 1.0, "ratio {ratio}");
    }

    #[test]
    fn constants_are_solutions() {
        let f = Field2D::from_fn3(9, 1.0, |_, _| V3::new(1.0, -2.0, 0.5));
        let r = hbubble_residual(&f).unwrap();
        assert_eq!(r.residual.max, 0.0);
        assert_eq!(r.conformal_dot.max, 0.0);
    }

    #[test]
    fn tiny_grids_are_rejected() {
        let f = Field2D::zeros(4, 1.0, 3);
        assert!(matches!(hbubble_residual(&f), Err(Error::GridTooSmall { .. })));
    }

    #[test]
    fn double_cover_solves_the_system() {
        let r = RationalMap::real(&[0.0, 0.0, 1.0], &[1.0]).unwrap();
        let coarse = hbubble_residual(&r.sample(257, 3.0)).unwrap();
        let fine = hbubble_residual(&r.sample(513, 3.0)).unwrap();
        let ratio = coarse.residual.max / fine.residual.max;
        assert!((ratio - 4.0).abs() < 1.0, "ratio {ratio}");
    }

    #[test]
    fn energy_is_quantized() {
        let tol = 1e-7;
        for (p, q, k) in [
            (vec![0.0, 1.0], vec![1.0], 1.0),
            (vec![0.0, 0.0, 1.0], vec![1.0], 2.0),
            (vec![1.0, 2.0], vec![-3.0, 1.0], 1.0),
        ] {
            let r = RationalMap::real(&p, &q).unwrap();
            let e = bubble_energy(&r, energy_radius(r.degree(), tol), tol).unwrap();
            assert!((e - 8.0 * PI * k).abs() < 1e-6, "{p:?}/{q:?}: {e}");
        }
    }

    #[test]
    fn rational_map_agrees_with_simple_bubble() {
        let r = RationalMap::real(&[0.0, 1.0], &[1.0]).unwrap();
        let b = SimpleBubble::identity();
        assert!((r.eval(0.7, -1.3) - eval_bubble(&b, 0.7, -1.3)).norm() < 1e-15);
        let j = omega_jet(0.7, -1.3);
        assert!((r.energy_density(0.7, -1.3) - j.grad_sq).abs() < 1e-14);
    }

    #[test]
    fn common_roots_are_rejected() {
        let e = RationalMap::real(&[-1.0, 1.0], &[-1.0, 0.0, 1.0]);
        assert!(matches!(e, Err(Error::Reducible(_))));
        assert!(RationalMap::real(&[1.0], &[1.0]).is_err());
    }

    #[test]
    fn small_radius_is_refused() {
        let r = RationalMap::real(&[0.0, 1.0], &[1.0]).unwrap();
        assert!(bubble_energy(&r, 10.0, 1e-6).is_err());
    }
}
