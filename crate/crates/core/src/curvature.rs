//! Curvature at a base point and the normal-coordinate expansions built
//! from it.
//!
//! Index convention: `riem[i][k][m][j]` is the tensor for which
//! `g_ij(y) = δ_ij + (1/3) R_ikmj y^k y^m + (1/6) R_ikmj,n y^k y^m y^n`.
//! Constant curvature κ reads `R_abcd = κ(δ_ac δ_bd - δ_ad δ_bc)`, and
//! `Ric_ml = Σ_k R_kmkl`, so the round 3-sphere has `Ric = 2κ g`.
//! The last index of `driem` and `dric` is the derivative direction.

use nalgebra::Matrix3;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::field::V3;

pub type T2 = [[f64; 3]; 3];
pub type T3 = [[[f64; 3]; 3]; 3];
pub type T4 = [[[[f64; 3]; 3]; 3]; 3];
pub type T5 = [[[[[f64; 3]; 3]; 3]; 3]; 3];

const Z3: T3 = [[[0.0; 3]; 3]; 3];
const Z4: T4 = [[[[0.0; 3]; 3]; 3]; 3];
const Z5: T5 = [[[[[0.0; 3]; 3]; 3]; 3]; 3];

fn delta(a: usize, b: usize) -> f64 {
    if a == b {
        1.0
    } else {
        0.0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvatureData {
    pub riem: T4,
    pub driem: T5,
    pub ric: T2,
    pub dric: T3,
    pub scal: f64,
    pub dscal: [f64; 3],
    /// False for synthetic data allowed to violate `div Ric = ½ ∇Scal`.
    pub bianchi: bool,
}

fn max_abs4(t: &T4) -> f64 {
    t.iter().flatten().flatten().flatten().fold(0.0f64, |m, v| m.max(v.abs()))
}

/// Largest violation of the algebraic Riemann symmetries.
pub fn riemann_symmetry_defect(r: &T4) -> f64 {
    let mut worst = 0.0f64;
    for a in 0..3 {
        for b in 0..3 {
            for c in 0..3 {
                for d in 0..3 {
                    let v = r[a][b][c][d];
                    worst = worst
                        .max((v + r[b][a][c][d]).abs())
                        .max((v + r[a][b][d][c]).abs())
                        .max((v - r[c][d][a][b]).abs())
                        .max((v + r[a][c][d][b] + r[a][d][b][c]).abs());
                }
            }
        }
    }
    worst
}

/// `Ric_ml = Σ_k R_kmkl`.
pub fn ricci_of(r: &T4) -> T2 {
    let mut ric = [[0.0; 3]; 3];
    for m in 0..3 {
        for l in 0..3 {
            ric[m][l] = (0..3).map(|k| r[k][m][k][l]).sum();
        }
    }
    ric
}

fn slice(d: &T5, e: usize) -> T4 {
    let mut out = Z4;
    for a in 0..3 {
        for b in 0..3 {
            for c in 0..3 {
                for f in 0..3 {
                    out[a][b][c][f] = d[a][b][c][f][e];
                }
            }
        }
    }
    out
}

/// `R_kmnl = (g_kn Ric_ml - g_kl Ric_mn + g_ml Ric_kn - g_mn Ric_kl)
///  + (Scal/2)(g_kl g_mn - g_kn g_ml)`, valid in dimension three.
pub fn riemann_from_ricci_3d(ric: &T2, scal: f64, g: &Matrix3<f64>) -> Result<T4> {
    let gi = g.try_inverse().ok_or_else(|| invalid("g", "singular metric"))?;
    let trace: f64 = (0..3).flat_map(|i| (0..3).map(move |j| (i, j))).map(|(i, j)| gi[(i, j)] * ric[i][j]).sum();
    if (trace - scal).abs() > 1e-10 * (1.0 + scal.abs()) {
        return Err(Error::TraceMismatch((trace - scal).abs()));
    }
    let mut r = Z4;
    for k in 0..3 {
        for m in 0..3 {
            for n in 0..3 {
                for l in 0..3 {
                    r[k][m][n][l] = g[(k, n)] * ric[m][l] - g[(k, l)] * ric[m][n] + g[(m, l)] * ric[k][n]
                        - g[(m, n)] * ric[k][l]
                        + 0.5 * scal * (g[(k, l)] * g[(m, n)] - g[(k, n)] * g[(m, l)]);
                }
            }
        }
    }
    Ok(r)
}

impl CurvatureData {
    pub fn flat() -> Self {
        CurvatureData { riem: Z4, driem: Z5, ric: [[0.0; 3]; 3], dric: Z3, scal: 0.0, dscal: [0.0; 3], bianchi: true }
    }

    /// Fill every trace from `riem` and `driem`, then validate.
    pub fn from_riemann(riem: T4, driem: T5, bianchi: bool) -> Result<Self> {
        let ric = ricci_of(&riem);
        let scal = (0..3).map(|m| ric[m][m]).sum();
        let mut dric = Z3;
        let mut dscal = [0.0; 3];
        for e in 0..3 {
            let re = ricci_of(&slice(&driem, e));
            for m in 0..3 {
                for l in 0..3 {
                    dric[m][l][e] = re[m][l];
                }
                dscal[e] += re[m][m];
            }
        }
        let c = CurvatureData { riem, driem, ric, dric, scal, dscal, bianchi };
        c.validate()?;
        Ok(c)
    }

    /// Build the full tensors from Ricci data in dimension three.
    pub fn from_ricci(ric: T2, dric: T3, bianchi: bool) -> Result<Self> {
        let g = Matrix3::identity();
        let scal = (0..3).map(|m| ric[m][m]).sum();
        let riem = riemann_from_ricci_3d(&ric, scal, &g)?;
        let mut driem = Z5;
        for e in 0..3 {
            let mut re = [[0.0; 3]; 3];
            for m in 0..3 {
                for l in 0..3 {
                    re[m][l] = dric[m][l][e];
                }
            }
            let ds = (0..3).map(|m| re[m][m]).sum();
            let r = riemann_from_ricci_3d(&re, ds, &g)?;
            for a in 0..3 {
                for b in 0..3 {
                    for c in 0..3 {
                        for d in 0..3 {
                            driem[a][b][c][d][e] = r[a][b][c][d];
                        }
                    }
                }
            }
        }
        Self::from_riemann(riem, driem, bianchi)
    }

    pub fn scale(&self) -> f64 {
        let d = self.driem.iter().flatten().flatten().flatten().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
        1.0 + max_abs4(&self.riem) + d
    }

    /// `Ric_ml,^m` for each `l`.
    pub fn div_ric(&self) -> [f64; 3] {
        let mut out = [0.0; 3];
        for (l, o) in out.iter_mut().enumerate() {
            *o = (0..3).map(|m| self.dric[m][l][m]).sum();
        }
        out
    }

    pub fn bianchi_defect(&self) -> f64 {
        let d = self.div_ric();
        (0..3).map(|l| (d[l] - 0.5 * self.dscal[l]).abs()).fold(0.0, f64::max)
    }

    /// Cyclic sum `R_ab[cd,e]`.
    pub fn second_bianchi_defect(&self) -> f64 {
        let r = &self.driem;
        let mut worst = 0.0f64;
        for a in 0..3 {
            for b in 0..3 {
                for c in 0..3 {
                    for d in 0..3 {
                        for e in 0..3 {
                            worst = worst.max((r[a][b][c][d][e] + r[a][b][d][e][c] + r[a][b][e][c][d]).abs());
                        }
                    }
                }
            }
        }
        worst
    }

    pub fn validate(&self) -> Result<()> {
        let tol = 1e-12 * self.scale();
        let sym = (0..3).map(|e| riemann_symmetry_defect(&slice(&self.driem, e))).fold(riemann_symmetry_defect(&self.riem), f64::max);
        if sym > tol {
            return Err(invalid("riem", format!("Riemann symmetries violated by {sym:.3e}")));
        }
        let ric = ricci_of(&self.riem);
        let mism = (0..3).flat_map(|m| (0..3).map(move |l| (m, l))).map(|(m, l)| (ric[m][l] - self.ric[m][l]).abs()).fold(0.0, f64::max);
        if mism > tol || ((0..3).map(|m| ric[m][m]).sum::<f64>() - self.scal).abs() > tol {
            return Err(Error::TraceMismatch(mism));
        }
        if self.bianchi && self.bianchi_defect() > tol {
            return Err(invalid("dric", format!("contracted Bianchi identity violated by {:.3e}", self.bianchi_defect())));
        }
        Ok(())
    }

    /// Push the data forward by an orthogonal matrix.
    pub fn rotated(&self, q: &Matrix3<f64>) -> Self {
        let mut riem = Z4;
        let mut driem = Z5;
        for a in 0..3 {
            for b in 0..3 {
                for c in 0..3 {
                    for d in 0..3 {
                        let mut s = 0.0;
                        for i in 0..3 {
                            for j in 0..3 {
                                for k in 0..3 {
                                    for l in 0..3 {
                                        s += q[(a, i)] * q[(b, j)] * q[(c, k)] * q[(d, l)] * self.riem[i][j][k][l];
                                    }
                                }
                            }
                        }
                        riem[a][b][c][d] = s;
                        for e in 0..3 {
                            let mut s = 0.0;
                            for i in 0..3 {
                                for j in 0..3 {
                                    for k in 0..3 {
                                        for l in 0..3 {
                                            let w = q[(a, i)] * q[(b, j)] * q[(c, k)] * q[(d, l)];
                                            if w == 0.0 {
                                                continue;
                                            }
                                            for f in 0..3 {
                                                s += w * q[(e, f)] * self.driem[i][j][k][l][f];
                                            }
                                        }
                                    }
                                }
                            }
                            driem[a][b][c][d][e] = s;
                        }
                    }
                }
            }
        }
        let mut out = Self::from_riemann(riem, driem, false).expect("rotation preserves symmetries");
        out.bianchi = self.bianchi;
        out
    }

    /// Coefficients of the Christoffel expansion.
    pub fn connection(&self) -> Connection {
        let (r, dr) = (&self.riem, &self.driem);
        let mut a = Z4;
        let mut b = Z5;
        for i in 0..3 {
            for j in 0..3 {
                for k in 0..3 {
                    for m in 0..3 {
                        a[i][j][k][m] = (r[k][m][i][j] + r[i][m][k][j]) / 3.0;
                        for n in 0..3 {
                            b[i][j][k][m][n] = (2.0 * dr[k][m][i][j][n] + 2.0 * dr[i][m][k][j][n] + dr[k][m][n][j][i]
                                + dr[i][m][n][j][k]
                                - dr[i][m][n][k][j])
                                / 12.0;
                        }
                    }
                }
            }
        }
        Connection { a, b }
    }
}

/// `A_ijkm` and `B_ijkmn` with `Γ^j_ik = A_ijkm y^m ε² + B_ijkmn y^m y^n ε³`.
#[derive(Clone, Debug)]
pub struct Connection {
    pub a: T4,
    pub b: T5,
}

impl Connection {
    /// `gamma[j][i][k] = Γ^j_ik`.
    pub fn gamma(&self, y: &V3, eps: f64) -> T3 {
        let (e2, e3) = (eps * eps, eps * eps * eps);
        let mut g = Z3;
        for i in 0..3 {
            for j in 0..3 {
                for k in 0..3 {
                    let mut s2 = 0.0;
                    let mut s3 = 0.0;
                    for m in 0..3 {
                        s2 += self.a[i][j][k][m] * y[m];
                        for n in 0..3 {
                            s3 += self.b[i][j][k][m][n] * y[m] * y[n];
                        }
                    }
                    g[j][i][k] = e2 * s2 + e3 * s3;
                }
            }
        }
        g
    }

    /// `∂Γ^j_ik / ∂y^a`, stored as `[a][j][i][k]`.
    pub fn gamma_derivative(&self, y: &V3, eps: f64) -> [T3; 3] {
        let (e2, e3) = (eps * eps, eps * eps * eps);
        let mut out = [Z3; 3];
        for a in 0..3 {
            for i in 0..3 {
                for j in 0..3 {
                    for k in 0..3 {
                        let mut s = e2 * self.a[i][j][k][a];
                        for n in 0..3 {
                            s += e3 * (self.b[i][j][k][a][n] + self.b[i][j][k][n][a]) * y[n];
                        }
                        out[a][j][i][k] = s;
                    }
                }
            }
        }
        out
    }
}

pub fn christoffel_expansion(c: &CurvatureData, y: &V3, eps: f64) -> T3 {
    c.connection().gamma(y, eps)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricJet {
    pub g: Matrix3<f64>,
    pub g_inv: Matrix3<f64>,
    pub sqrt_det: f64,
}

/// Metric, inverse and volume factor at `y` (any ε already absorbed into
/// `y`), each truncated after the cubic term.
pub fn metric_expansion(c: &CurvatureData, y: &V3) -> MetricJet {
    let mut q = Matrix3::zeros();
    let mut cub = Matrix3::zeros();
    for i in 0..3 {
        for j in 0..3 {
            for k in 0..3 {
                for m in 0..3 {
                    let ykm = y[k] * y[m];
                    q[(i, j)] += c.riem[i][k][m][j] * ykm;
                    for n in 0..3 {
                        cub[(i, j)] += c.driem[i][k][m][j][n] * ykm * y[n];
                    }
                }
            }
        }
    }
    let mut ric2 = 0.0;
    let mut ric3 = 0.0;
    for m in 0..3 {
        for n in 0..3 {
            ric2 += c.ric[m][n] * y[m] * y[n];
            for k in 0..3 {
                ric3 += c.dric[m][n][k] * y[m] * y[n] * y[k];
            }
        }
    }
    let id = Matrix3::identity();
    MetricJet {
        g: id + q / 3.0 + cub / 6.0,
        g_inv: id - q / 3.0 - cub / 6.0,
        sqrt_det: 1.0 - ric2 / 6.0 - ric3 / 12.0,
    }
}

/// `√|g| g^{-1}` at `y` and its derivatives in each direction of `y`.
pub(crate) fn volume_inverse_jet(c: &CurvatureData, y: &V3) -> (Matrix3<f64>, [Matrix3<f64>; 3]) {
    let jet = metric_expansion(c, y);
    let mut dq = [Matrix3::zeros(); 3];
    let mut dv = [0.0; 3];
    for a in 0..3 {
        for i in 0..3 {
            for j in 0..3 {
                let mut s = 0.0;
                for k in 0..3 {
                    s += (c.riem[i][a][k][j] + c.riem[i][k][a][j]) * y[k] / 3.0;
                    for m in 0..3 {
                        s += (c.driem[i][a][k][j][m] + c.driem[i][k][a][j][m] + c.driem[i][k][m][j][a]) * y[k] * y[m]
                            / 6.0;
                    }
                }
                dq[a][(i, j)] = -s;
            }
        }
        let mut s = 0.0;
        for m in 0..3 {
            s += (c.ric[a][m] + c.ric[m][a]) * y[m] / 6.0;
            for n in 0..3 {
                s += (c.dric[a][m][n] + c.dric[m][a][n] + c.dric[m][n][a]) * y[m] * y[n] / 12.0;
            }
        }
        dv[a] = -s;
    }
    let val = jet.g_inv * jet.sqrt_det;
    let der = [0, 1, 2].map(|a| dq[a] * jet.sqrt_det + jet.g_inv * dv[a]);
    (val, der)
}

/// Kind tag and coefficients of a test metric.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ModelKind {
    Flat,
    ConstantCurvature {
        kappa: f64,
    },
    /// Ricci tensor and scalar-curvature gradient prescribed freely; the
    /// rest of `dric` is filled in to honour the contracted Bianchi
    /// identity unless `synthetic` is set.
    QuadraticScal {
        #[serde(default)]
        ric: T2,
        dscal: [f64; 3],
        #[serde(default)]
        dric_extra: Option<T3>,
        #[serde(default)]
        synthetic: bool,
    },
    /// Coefficients of `g_ij - δ_ij` on `y^k y^m` and `y^k y^m y^n`.
    UserPolynomial {
        quadratic: T4,
        cubic: T5,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricModel {
    pub kind: ModelKind,
    pub base_point_curvature: CurvatureData,
}

impl MetricModel {
    pub fn from_json(text: &str) -> Result<Self> {
        let kind: ModelKind = serde_json::from_str(text).map_err(|e| invalid("metric", e.to_string()))?;
        make_model(kind)
    }

    /// Smallest eigenvalue of the expanded metric over the ball of radius `r`
    /// (sampled), which must stay positive.
    pub fn min_eigenvalue(&self, r: f64) -> f64 {
        let mut worst = f64::INFINITY;
        let steps = 12;
        for a in 0..=steps {
            for b in 0..2 * steps {
                let (t, p) = (std::f64::consts::PI * a as f64 / steps as f64, std::f64::consts::PI * b as f64 / steps as f64);
                for s in [0.25, 0.5, 0.75, 1.0] {
                    let y = V3::new(t.sin() * p.cos(), t.sin() * p.sin(), t.cos()) * (r * s);
                    let g = metric_expansion(&self.base_point_curvature, &y).g;
                    let e = g.symmetric_eigenvalues().min();
                    worst = worst.min(e);
                }
            }
        }
        worst
    }
}

/// Fill in `dric` so that its trace is `dscal` and its divergence is
/// `dscal / 2`, keeping whatever symmetric part `extra` carries beyond that.
pub fn compliant_dric(dscal: &[f64; 3], extra: &T3) -> T3 {
    let mut d = Z3;
    for m in 0..3 {
        for n in 0..3 {
            for k in 0..3 {
                d[m][n][k] = 0.5 * (extra[m][n][k] + extra[n][m][k]);
            }
        }
    }
    let trace: Vec<f64> = (0..3).map(|k| (0..3).map(|m| d[m][m][k]).sum()).collect();
    let div: Vec<f64> = (0..3).map(|l| (0..3).map(|m| d[m][l][m]).sum()).collect();
    let mut w = [0.0; 3];
    let mut v = [0.0; 3];
    for l in 0..3 {
        let t = dscal[l];
        v[l] = (t / 2.0 - 3.0 * div[l] + trace[l]) / 10.0;
        w[l] = t / 2.0 - div[l] - 4.0 * v[l];
    }
    for m in 0..3 {
        for n in 0..3 {
            for k in 0..3 {
                d[m][n][k] += delta(m, n) * w[k] + delta(m, k) * v[n] + delta(n, k) * v[m];
            }
        }
    }
    d
}

pub fn make_model(kind: ModelKind) -> Result<MetricModel> {
    let c = match &kind {
        ModelKind::Flat => CurvatureData::flat(),
        ModelKind::ConstantCurvature { kappa } => {
            if !kappa.is_finite() {
                return Err(invalid("kappa", "must be finite"));
            }
            let ric = [[2.0 * kappa, 0.0, 0.0], [0.0, 2.0 * kappa, 0.0], [0.0, 0.0, 2.0 * kappa]];
            CurvatureData::from_ricci(ric, Z3, true)?
        }
        ModelKind::QuadraticScal { ric, dscal, dric_extra, synthetic } => {
            for m in 0..3 {
                for n in 0..3 {
                    if (ric[m][n] - ric[n][m]).abs() > 1e-14 {
                        return Err(invalid("ric", "must be symmetric"));
                    }
                }
            }
            let extra = dric_extra.unwrap_or(Z3);
            let dric = if *synthetic {
                let mut d = compliant_dric(dscal, &Z3);
                for m in 0..3 {
                    for n in 0..3 {
                        for k in 0..3 {
                            d[m][n][k] += 0.5 * (extra[m][n][k] + extra[n][m][k]);
                        }
                    }
                }
                for k in 0..3 {
                    let t: f64 = (0..3).map(|m| d[m][m][k]).sum::<f64>() - dscal[k];
                    for m in 0..3 {
                        d[m][m][k] -= t / 3.0;
                    }
                }
                d
            } else {
                compliant_dric(dscal, &extra)
            };
            CurvatureData::from_ricci(*ric, dric, !synthetic)?
        }
        ModelKind::UserPolynomial { quadratic, cubic } => from_polynomial(quadratic, cubic)?,
    };
    Ok(MetricModel { kind, base_point_curvature: c })
}

fn from_polynomial(q: &T4, cu: &T5) -> Result<CurvatureData> {
    let d2 = |a: usize, d: usize, b: usize, c: usize| q[a][d][b][c] + q[a][d][c][b];
    let d3 = |a: usize, d: usize, b: usize, c: usize, e: usize| {
        let t = &cu[a][d];
        t[b][c][e] + t[b][e][c] + t[c][b][e] + t[c][e][b] + t[e][b][c] + t[e][c][b]
    };
    let mut riem = Z4;
    let mut driem = Z5;
    for a in 0..3 {
        for b in 0..3 {
            for c in 0..3 {
                for d in 0..3 {
                    riem[a][b][c][d] = 0.5 * (d2(a, d, b, c) + d2(b, c, a, d) - d2(a, c, b, d) - d2(b, d, a, c));
                    for e in 0..3 {
                        driem[a][b][c][d][e] =
                            0.5 * (d3(a, d, b, c, e) + d3(b, c, a, d, e) - d3(a, c, b, d, e) - d3(b, d, a, c, e));
                    }
                }
            }
        }
    }
    let c = CurvatureData::from_riemann(riem, driem, false).map_err(|e| invalid("quadratic", e.to_string()))?;
    // The table must be the normal-coordinate form of the curvature it encodes.
    let mut worst = 0.0f64;
    for i in 0..3 {
        for j in 0..3 {
            for k in 0..3 {
                for m in 0..3 {
                    let want = (c.riem[i][k][m][j] + c.riem[i][m][k][j]) / 6.0;
                    worst = worst.max((0.5 * d2(i, j, k, m) - want).abs());
                    for n in 0..3 {
                        let sym = [(k, m, n), (k, n, m), (m, k, n), (m, n, k), (n, k, m), (n, m, k)];
                        let want: f64 = sym.iter().map(|&(a, b, e)| c.driem[i][a][b][j][e]).sum::<f64>() / 36.0;
                        worst = worst.max((d3(i, j, k, m, n) / 6.0 - want).abs());
                    }
                }
            }
        }
    }
    if worst > 1e-10 * c.scale() {
        return Err(invalid("quadratic", format!("table is not in normal-coordinate form (defect {worst:.3e})")));
    }
    let mut out = c;
    out.bianchi = out.bianchi_defect() <= 1e-12 * out.scale();
    Ok(out)
}

/// Random data with all symmetries and the contracted Bianchi identity.
pub fn random_compliant(rng: &mut impl Rng, size: f64) -> CurvatureData {
    let mut ric = [[0.0; 3]; 3];
    for m in 0..3 {
        for n in m..3 {
            let v = rng.gen_range(-size..size);
            ric[m][n] = v;
            ric[n][m] = v;
        }
    }
    let dscal = [0, 1, 2].map(|_| rng.gen_range(-size..size));
    let mut extra = Z3;
    for m in 0..3 {
        for n in 0..3 {
            for k in 0..3 {
                extra[m][n][k] = rng.gen_range(-size..size);
            }
        }
    }
    make_model(ModelKind::QuadraticScal { ric, dscal, dric_extra: Some(extra), synthetic: false })
        .expect("constructed data is consistent")
        .base_point_curvature
}

/// Uniformly random rotation.
pub fn random_rotation(rng: &mut impl Rng) -> Matrix3<f64> {
    let axis = V3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
    let axis = nalgebra::Unit::new_normalize(axis + V3::new(1e-9, 0.0, 0.0));
    *nalgebra::Rotation3::from_axis_angle(&axis, rng.gen_range(0.0..std::f64::consts::TAU)).matrix()
}
