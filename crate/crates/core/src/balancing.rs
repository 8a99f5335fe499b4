//! Sphere integrals behind the balancing condition: moments, the pushed
//! forward kernel fields and the force felt by a bubble at third order.
//!
//! The integrand paired with the tangential fields `Y^l` vanishes for every
//! curvature jet (those fields only reparametrize the sphere). The force
//! lives in the translation modes `e_l`: with `U = y + p`,
//!
//! `b_l = ∫ B_ilkmn U^m U^n (δ^ik - y^i y^k) - (1/6) Ric_mn,k U^m U^n U^k y_l
//!        - (1/3) R_ikml,n U^k U^m U^n y^i dv`,
//!
//! which is the chart integral of the third-order source of the normalized
//! H-system. It does not depend on `p`.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::curvature::{CurvatureData, T2, T3, T4};
use crate::error::{Error, Result};
use crate::field::V3;
use crate::quad::gauss_legendre;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SphereQuadrature {
    pub nodes: Vec<V3>,
    pub weights: Vec<f64>,
}

impl SphereQuadrature {
    /// Gauss-Legendre in `cos θ` times the trapezoid rule in `φ`; exact for
    /// polynomials of degree below `min(2 n_theta, n_phi)`.
    pub fn product(n_theta: usize, n_phi: usize) -> Self {
        let (x, w) = gauss_legendre(n_theta);
        let mut nodes = Vec::with_capacity(n_theta * n_phi);
        let mut weights = Vec::with_capacity(n_theta * n_phi);
        for (z, wz) in x.iter().zip(&w) {
            let s = (1.0 - z * z).sqrt();
            for k in 0..n_phi {
                let phi = 2.0 * PI * (k as f64 + 0.5) / n_phi as f64;
                nodes.push(V3::new(s * phi.cos(), s * phi.sin(), *z));
                weights.push(wz * 2.0 * PI / n_phi as f64);
            }
        }
        SphereQuadrature { nodes, weights }
    }

    /// Exact through degree 11.
    pub fn standard() -> Self {
        Self::product(8, 16)
    }

    pub fn integrate<T>(&self, zero: T, f: impl Fn(&V3) -> T) -> T
    where
        T: std::ops::Add<Output = T> + std::ops::Mul<f64, Output = T>,
    {
        self.nodes.iter().zip(&self.weights).fold(zero, |acc, (y, w)| acc + f(y) * *w)
    }
}

pub fn sphere_moments(q: &SphereQuadrature) -> (T2, T4) {
    let mut second = [[0.0; 3]; 3];
    let mut fourth = [[[[0.0; 3]; 3]; 3]; 3];
    for (y, w) in q.nodes.iter().zip(&q.weights) {
        for a in 0..3 {
            for b in 0..3 {
                second[a][b] += w * y[a] * y[b];
                for c in 0..3 {
                    for d in 0..3 {
                        fourth[a][b][c][d] += w * y[a] * y[b] * y[c] * y[d];
                    }
                }
            }
        }
    }
    (second, fourth)
}

fn delta(a: usize, b: usize) -> f64 {
    if a == b {
        1.0
    } else {
        0.0
    }
}

/// `∫ y^a y^b = (4π/3) δ^ab`.
pub fn exact_second(a: usize, b: usize) -> f64 {
    4.0 * PI / 3.0 * delta(a, b)
}

/// `∫ y^a y^b y^c y^d = (4π/15)(δ^ab δ^cd + δ^ac δ^bd + δ^ad δ^bc)`.
pub fn exact_fourth(a: usize, b: usize, c: usize, d: usize) -> f64 {
    4.0 * PI / 15.0 * (delta(a, b) * delta(c, d) + delta(a, c) * delta(b, d) + delta(a, d) * delta(b, c))
}

/// Images under `ω` of `ω_x`, `ω_y` and `x ω_x + y ω_y`.
pub fn kernel_fields(y: &V3) -> Result<[V3; 3]> {
    let n = y.norm();
    if (n - 1.0).abs() > 1e-10 {
        return Err(Error::NotUnit(n));
    }
    Ok([
        V3::new(1.0, 0.0, 0.0) + V3::new(-y[2], 0.0, y[0]) - y * y[0],
        V3::new(0.0, 1.0, 0.0) + V3::new(0.0, -y[2], y[1]) - y * y[1],
        V3::new(0.0, 0.0, 1.0) - y * y[2],
    ])
}

/// Translation-mode integrand at `y` for a sphere centred at `p`.
fn force_density(c: &CurvatureData, b: &crate::curvature::Connection, y: &V3, p: &V3) -> V3 {
    let u = y + p;
    let mut out = V3::zeros();
    let mut ric3 = 0.0;
    for m in 0..3 {
        for n in 0..3 {
            for k in 0..3 {
                ric3 += c.dric[m][n][k] * u[m] * u[n] * u[k];
            }
        }
    }
    for l in 0..3 {
        let mut s = -ric3 * y[l] / 6.0;
        for i in 0..3 {
            for k in 0..3 {
                let proj = delta(i, k) - y[i] * y[k];
                let mut r3 = 0.0;
                for m in 0..3 {
                    for n in 0..3 {
                        s += b.b[i][l][k][m][n] * u[m] * u[n] * proj;
                        r3 += c.driem[i][k][m][l][n] * u[m] * u[n];
                    }
                }
                s -= r3 * u[k] * y[i] / 3.0;
            }
        }
        out[l] = s;
    }
    out
}

/// The force for a sphere centred at `p`, by quadrature.
pub fn balancing_integral_shifted(c: &CurvatureData, q: &SphereQuadrature, p: &V3) -> V3 {
    let conn = c.connection();
    q.integrate(V3::zeros(), |y| force_density(c, &conn, y, p))
}

pub fn balancing_integral(c: &CurvatureData, q: &SphereQuadrature) -> V3 {
    balancing_integral_shifted(c, q, &V3::zeros())
}

/// The integrand pairing the third-order source with the tangential
/// fields, `(4R_kmij,n + 2R_imnj,k - R_imnk,j) y^m y^n (δ^ik - y^i y^k)(δ^jl - y^j y^l)`.
/// It integrates to zero for every curvature jet.
pub fn tangential_balancing_integral(c: &CurvatureData, q: &SphereQuadrature) -> V3 {
    let d = &c.driem;
    q.integrate(V3::zeros(), |y| {
        let mut out = V3::zeros();
        for l in 0..3 {
            let mut s = 0.0;
            for i in 0..3 {
                for j in 0..3 {
                    let pj = delta(j, l) - y[j] * y[l];
                    for k in 0..3 {
                        let pik = delta(i, k) - y[i] * y[k];
                        for m in 0..3 {
                            for n in 0..3 {
                                s += (4.0 * d[k][m][i][j][n] + 2.0 * d[i][m][n][j][k] - d[i][m][n][k][j])
                                    * y[m]
                                    * y[n]
                                    * pik
                                    * pj;
                            }
                        }
                    }
                }
            }
            out[l] = s;
        }
        out
    })
}

/// The force by contracting the integrand's coefficient tensors with the
/// exact second and fourth moments (odd moments vanish).
pub fn balancing_contraction(c: &CurvatureData) -> V3 {
    let b = c.connection().b;
    let mut out = V3::zeros();
    for l in 0..3 {
        let mut s = 0.0;
        for k in 0..3 {
            for m in 0..3 {
                for n in 0..3 {
                    s -= c.dric[m][n][k] * exact_fourth(m, n, k, l) / 6.0;
                    for i in 0..3 {
                        s += b[i][l][k][m][n] * (delta(i, k) * exact_second(m, n) - exact_fourth(i, k, m, n));
                        s -= c.driem[i][k][m][l][n] * exact_fourth(k, m, n, i) / 3.0;
                    }
                }
            }
        }
        out[l] = s;
    }
    out
}

/// Coefficients `(α, β)` with `b = α div Ric + β ∇Scal` for every jet,
/// found by contracting two probe jets whose (div, grad) pairs are
/// independent. On Bianchi data `b = c₀ div Ric` with `c₀ = α + 2β`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BalancingConstants {
    pub div_coeff: f64,
    pub grad_coeff: f64,
    pub c0: f64,
}

pub fn balancing_constants() -> BalancingConstants {
    let probe = |w: f64, v: f64| {
        let mut d: T3 = [[[0.0; 3]; 3]; 3];
        for m in 0..3 {
            for n in 0..3 {
                d[m][n][0] += w * delta(m, n);
                d[m][0][n] += v * delta(m, n);
                d[0][n][m] += v * delta(m, n);
            }
        }
        let c = CurvatureData::from_ricci([[0.0; 3]; 3], d, false).expect("probe jet is consistent");
        (c.div_ric()[0], c.dscal[0], balancing_contraction(&c)[0])
    };
    let (d1, g1, b1) = probe(1.0, 0.0);
    let (d2, g2, b2) = probe(0.0, 1.0);
    let det = d1 * g2 - d2 * g1;
    let div_coeff = (b1 * g2 - b2 * g1) / det;
    let grad_coeff = (d1 * b2 - d2 * b1) / det;
    BalancingConstants { div_coeff, grad_coeff, c0: div_coeff + 2.0 * grad_coeff }
}

/// `α Ric_ml,^m + β ∂_l Scal`, which on Bianchi data equals
/// `c₀ Ric_ml,^m = (c₀/2) ∂_l Scal`.
pub fn balancing_closed_form(c: &CurvatureData) -> V3 {
    let k = balancing_constants();
    let div = c.div_ric();
    V3::from_fn(|l, _| k.div_coeff * div[l] + k.grad_coeff * c.dscal[l])
}
