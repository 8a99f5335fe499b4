//! Bubbles corrected for the ambient curvature at second order in ε.

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use crate::bubble::{eval_bubble, polar_integral_about, SimpleBubble, SphereMap};
use crate::curvature::{metric_expansion, CurvatureData};
use crate::error::{Error, Result};
use crate::field::{Field2D, Norms, ResidualReport, V3};

/// The correction `ρ(ω̂)` for a sphere centred at `p` in normal coordinates:
///
/// `ρ^k = (1/6) Ric_kl w^l - (1/12) Scal w^k - (1/12) Ric(w, w) w^k
///        - (1/6) R_kmnl p^m p^n w^l - (1/3) R_kmnl w^m p^n w^l`.
///
/// With it the curvature terms of order ε² cancel in the H-system; for
/// constant curvature it reduces to `-(κ/3) w`, the radius change of a
/// geodesic sphere.
pub fn rho(c: &CurvatureData, p: &V3, w: &V3) -> Result<V3> {
    let norm = w.norm();
    if (norm - 1.0).abs() > 1e-8 {
        return Err(Error::NotUnit(norm));
    }
    Ok(rho_unchecked(c, p, w))
}

pub(crate) fn rho_unchecked(c: &CurvatureData, p: &V3, w: &V3) -> V3 {
    let mut ricww = 0.0;
    for m in 0..3 {
        for l in 0..3 {
            ricww += c.ric[m][l] * w[m] * w[l];
        }
    }
    let mut out = V3::zeros();
    for k in 0..3 {
        let mut s = -c.scal / 12.0 * w[k] - ricww / 12.0 * w[k];
        for l in 0..3 {
            s += c.ric[k][l] * w[l] / 6.0;
            for m in 0..3 {
                for n in 0..3 {
                    let r = c.riem[k][m][n][l];
                    s -= r * (p[m] * p[n] * w[l] / 6.0 + w[m] * p[n] * w[l] / 3.0);
                }
            }
        }
        out[k] = s;
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrectedBubble {
    pub base: SimpleBubble,
    pub curvature: CurvatureData,
    pub eps: f64,
    /// Centre of the base sphere; `ω̂ = base - center_mass` is a unit vector.
    pub center_mass: V3,
}

impl CorrectedBubble {
    pub fn new(base: SimpleBubble, curvature: CurvatureData, eps: f64) -> Self {
        let center_mass = base.shift;
        CorrectedBubble { base, curvature, eps, center_mass }
    }

    pub fn sample(&self, n: usize, half_width: f64) -> Field2D {
        Field2D::from_fn3(n, half_width, |x, y| eval_corrected(self, x, y))
    }
}

pub fn eval_corrected(b: &CorrectedBubble, x: f64, y: f64) -> V3 {
    let v = eval_bubble(&b.base, x, y);
    if b.eps == 0.0 {
        return v;
    }
    let w = v - b.center_mass;
    v + b.eps * b.eps * rho_unchecked(&b.curvature, &b.center_mass, &w)
}

fn conformality(
    f: &Field2D,
    i: usize,
    j: usize,
    metric: &Matrix3<f64>,
) -> (f64, f64) {
    let (fx, fy) = f.grad3(i, j);
    let gx = metric * fx;
    let gy = metric * fy;
    (fx.dot(&gy), fx.dot(&gx) - fy.dot(&gy))
}

/// Residual field and report for an interior operator plus metric
/// conformality defects.
fn residual_report(
    f: &Field2D,
    op: impl Fn(usize, usize) -> V3,
    metric: impl Fn(&V3) -> Matrix3<f64>,
) -> (ResidualReport, Field2D) {
    let n = f.n;
    let mut res = Field2D::zeros(n, f.half_width, 3);
    let (mut r, mut d, mut q) = (Vec::new(), Vec::new(), Vec::new());
    for j in 1..n - 1 {
        for i in 1..n - 1 {
            let v = op(i, j);
            res.set_v3(i, j, v);
            r.push(v.norm());
            let (a, b) = conformality(f, i, j, &metric(&f.v3(i, j)));
            d.push(a);
            q.push(b);
        }
    }
    let area = f.h() * f.h();
    let report = ResidualReport {
        residual: Norms::from_values(r, area),
        conformal_dot: Norms::from_values(d, area),
        conformal_diff: Norms::from_values(q, area),
        weighted_sup: None,
    };
    (report, res)
}

/// The H-system expanded to second order in ε:
///
/// `Δf_j - 2(f_x × f_y)_j + ε²[(2/3) R_imnj f^m f^n (f_x × f_y)^i
///  + (1/3) Ric_mn f^m f^n (f_x × f_y)_j + (1/3)(R_nmij + R_imnj) f^m <∇f^i, ∇f^n>]`.
///
/// Conformality is measured in the metric truncated at the same order.
pub fn expanded_residual(f: &Field2D, c: &CurvatureData, eps: f64) -> Result<ResidualReport> {
    f.require(3, 5)?;
    Ok(expanded_residual_field(f, c, eps).0)
}

pub fn expanded_residual_field(f: &Field2D, c: &CurvatureData, eps: f64) -> (ResidualReport, Field2D) {
    let e2 = eps * eps;
    let op = |i: usize, j: usize| {
        let u = f.v3(i, j);
        let (fx, fy) = f.grad3(i, j);
        let cr = fx.cross(&fy);
        let mut out = f.lap3(i, j) - 2.0 * cr;
        if e2 == 0.0 {
            return out;
        }
        let mut ricuu = 0.0;
        for m in 0..3 {
            for n in 0..3 {
                ricuu += c.ric[m][n] * u[m] * u[n];
            }
        }
        for jj in 0..3 {
            let mut s = ricuu * cr[jj] / 3.0;
            for ii in 0..3 {
                for m in 0..3 {
                    for n in 0..3 {
                        s += 2.0 / 3.0 * c.riem[ii][m][n][jj] * u[m] * u[n] * cr[ii];
                        let grad = fx[ii] * fx[n] + fy[ii] * fy[n];
                        s += (c.riem[n][m][ii][jj] + c.riem[ii][m][n][jj]) * u[m] * grad / 3.0;
                    }
                }
            }
            out[jj] += e2 * s;
        }
        out
    };
    let metric = |u: &V3| {
        let mut g = Matrix3::identity();
        for a in 0..3 {
            for b in 0..3 {
                for k in 0..3 {
                    for m in 0..3 {
                        g[(a, b)] += e2 * c.riem[a][k][m][b] * u[k] * u[m] / 3.0;
                    }
                }
            }
        }
        g
    };
    residual_report(f, op, metric)
}

/// Full normalized equation with cubic metric data:
/// `Δu + Γ^j_ik(u) <∇u^i, ∇u^k> - 2 √|g| g^ij (u_x × u_y)_i`, with
/// `g = g(εu)`. Conformality uses the same cubic metric.
pub fn main3_residual_field(f: &Field2D, c: &CurvatureData, eps: f64) -> (ResidualReport, Field2D) {
    let conn = c.connection();
    let op = |i: usize, j: usize| {
        let u = f.v3(i, j);
        let (fx, fy) = f.grad3(i, j);
        let cr = fx.cross(&fy);
        let mut out = f.lap3(i, j);
        if eps == 0.0 {
            return out - 2.0 * cr;
        }
        let gam = conn.gamma(&u, eps);
        let jet = metric_expansion(c, &(u * eps));
        out -= 2.0 * jet.sqrt_det * (jet.g_inv * cr);
        for jj in 0..3 {
            let mut s = 0.0;
            for ii in 0..3 {
                for k in 0..3 {
                    s += gam[jj][ii][k] * (fx[ii] * fx[k] + fy[ii] * fy[k]);
                }
            }
            out[jj] += s;
        }
        out
    };
    residual_report(f, op, |u| metric_expansion(c, &(u * eps)).g)
}

/// Which equation an order test measures.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Equation {
    Expanded,
    Main3,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrderSample {
    pub eps: f64,
    pub residual: f64,
    pub conformal: f64,
}

/// Residual of the (corrected or plain) bubble at each ε, with the ε = 0
/// residual on the same grid subtracted pointwise.
pub fn residual_order(
    base: &SimpleBubble,
    c: &CurvatureData,
    eps_list: &[f64],
    corrected: bool,
    equation: Equation,
    n: usize,
    half_width: f64,
) -> Vec<OrderSample> {
    let flat_field = base.sample(n, half_width);
    let run = |f: &Field2D, e: f64| match equation {
        Equation::Expanded => expanded_residual_field(f, c, e),
        Equation::Main3 => main3_residual_field(f, c, e),
    };
    let (_, floor) = run(&flat_field, 0.0);
    eps_list
        .iter()
        .map(|&e| {
            let f = if corrected {
                CorrectedBubble::new(base.clone(), c.clone(), e).sample(n, half_width)
            } else {
                flat_field.clone()
            };
            let (_, res) = run(&f, e);
            let diff = res.sub(&floor);
            let residual = diff.data.chunks(3).map(|v| (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()).fold(0.0, f64::max);
            OrderSample { eps: e, residual, conformal: conformal_defect(&f, c, e, equation, &flat_field) }
        })
        .collect()
}

/// Max over interior points of the metric conformality defects of `f`
/// minus the Euclidean defects of `floor`, pointwise.
fn conformal_defect(f: &Field2D, c: &CurvatureData, eps: f64, equation: Equation, floor: &Field2D) -> f64 {
    let e2 = eps * eps;
    let metric = |u: &V3| match equation {
        Equation::Main3 => metric_expansion(c, &(u * eps)).g,
        Equation::Expanded => {
            let mut g = Matrix3::identity();
            for a in 0..3 {
                for b in 0..3 {
                    for k in 0..3 {
                        for m in 0..3 {
                            g[(a, b)] += e2 * c.riem[a][k][m][b] * u[k] * u[m] / 3.0;
                        }
                    }
                }
            }
            g
        }
    };
    let mut worst = 0.0f64;
    for j in 1..f.n - 1 {
        for i in 1..f.n - 1 {
            let (a, b) = conformality(f, i, j, &metric(&f.v3(i, j)));
            let (a0, b0) = conformality(floor, i, j, &Matrix3::identity());
            worst = worst.max((a - a0).abs()).max((b - b0).abs());
        }
    }
    worst
}

/// Area-weighted mean of the image, weight `|∇u|^2 / 2`, by polar
/// quadrature out to a radius where the neglected tail is below `tol`.
pub fn center_of_mass(m: &impl SphereMap, tol: f64) -> Result<V3> {
    let (center, scale) = m.focus();
    let k = m.degree() as f64;
    let radius = scale * (64.0 * std::f64::consts::PI * k * k / tol).sqrt() + (center.0.hypot(center.1));
    let area = polar_integral_about(|x, y| m.density(x, y), center, scale, radius, tol)?;
    let mut out = V3::zeros();
    for c in 0..3 {
        out[c] = polar_integral_about(|x, y| m.density(x, y) * m.value(x, y)[c], center, scale, radius, tol)? / area;
    }
    Ok(out)
}
