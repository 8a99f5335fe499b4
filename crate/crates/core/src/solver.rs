//! Damped Newton solver for the curvature-perturbed H-system on a chart,
//! and the drift experiment measuring the force on a corrected bubble.

use nalgebra::Matrix3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bubble::{omega_jet, SimpleBubble};
use crate::corrected::{main3_residual_field, CorrectedBubble};
use crate::curvature::{metric_expansion, volume_inverse_jet, CurvatureData, MetricModel};
use crate::error::{invalid, Error, Result};
use crate::estimates::{surface_diagnostics, SurfaceDiagnostics};
use crate::field::{Field2D, V3};
use crate::sparse;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Boundary {
    /// Boundary values frozen to the corrected bubble centred at the origin.
    #[default]
    CorrectedBubbleTrace,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveConfig {
    pub half_width: f64,
    pub grid_n: usize,
    pub eps: f64,
    pub metric: MetricModel,
    #[serde(default)]
    pub boundary: Boundary,
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    /// Largest Newton step fraction tried first.
    pub damping: f64,
}

impl SolveConfig {
    pub fn new(metric: MetricModel, eps: f64) -> Self {
        SolveConfig {
            half_width: 8.0,
            grid_n: 129,
            eps,
            metric,
            boundary: Boundary::CorrectedBubbleTrace,
            newton_tol: 1e-9,
            newton_max_iter: 20,
            damping: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid_n < 64 {
            return Err(Error::GridTooSmall { min: 64, got: self.grid_n });
        }
        if !(self.half_width > 0.0) {
            return Err(invalid("half_width", "must be positive"));
        }
        if !(self.eps >= 0.0) {
            return Err(invalid("eps", "must be non-negative"));
        }
        if !(self.newton_tol > 0.0) {
            return Err(invalid("newton_tol", "must be positive"));
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(invalid("damping", "must lie in (0, 1]"));
        }
        Ok(())
    }

    fn curvature(&self) -> &CurvatureData {
        &self.metric.base_point_curvature
    }

    /// The corrected bubble of unit scale at the origin.
    pub fn initial(&self) -> Field2D {
        CorrectedBubble::new(SimpleBubble::identity(), self.curvature().clone(), self.eps)
            .sample(self.grid_n, self.half_width)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveResult {
    pub field: Field2D,
    /// Discrete L2 norm of the residual before each step and at the end.
    pub residual_history: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    /// Largest metric conformality defect of the solution.
    pub conformality_defect: f64,
    pub center: V3,
    pub diagnostics: SurfaceDiagnostics,
}

/// Largest `|εu|` the cubic metric expansion is trusted with.
pub const EXPANSION_RADIUS: f64 = 0.5;

fn check_domain(f: &Field2D, eps: f64) -> Result<()> {
    let worst = f.data.chunks(3).map(|v| (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()).fold(0.0, f64::max);
    if eps * worst > EXPANSION_RADIUS {
        return Err(Error::ExpansionDomain(eps * worst));
    }
    Ok(())
}

/// Pointwise residual of the perturbed H-system, zero on the edge.
pub fn assemble_residual(f: &Field2D, cfg: &SolveConfig) -> Result<Field2D> {
    f.require(3, 5)?;
    check_domain(f, cfg.eps)?;
    Ok(main3_residual_field(f, cfg.curvature(), cfg.eps).1)
}

fn l2(r: &Field2D) -> f64 {
    (r.data.iter().map(|v| v * v).sum::<f64>() * r.h() * r.h()).sqrt()
}

fn unknown(n: usize, i: usize, j: usize) -> usize {
    3 * ((j - 1) * (n - 2) + (i - 1))
}

fn cross_with(a: usize, v: &V3, left: bool) -> V3 {
    let e = V3::from_fn(|k, _| if k == a { 1.0 } else { 0.0 });
    if left {
        e.cross(v)
    } else {
        v.cross(&e)
    }
}

/// Jacobian of the interior residual with respect to interior values.
fn jacobian(f: &Field2D, c: &CurvatureData, eps: f64) -> Vec<(usize, usize, f64)> {
    let n = f.n;
    let h = f.h();
    let conn = c.connection();
    let inv_h2 = 1.0 / (h * h);
    let half_h = 0.5 / h;
    let rows: Vec<Vec<(usize, usize, f64)>> = (1..n - 1)
        .into_par_iter()
        .map(|j| {
            let mut t = Vec::with_capacity((n - 2) * 45);
            for i in 1..n - 1 {
                let u = f.v3(i, j);
                let (ux, uy) = f.grad3(i, j);
                let cr = ux.cross(&uy);
                let row = unknown(n, i, j);
                // Derivatives with respect to u, u_x and u_y at this point.
                let mut d_u = Matrix3::<f64>::identity() * (-4.0 * inv_h2);
                let mut d_ux = Matrix3::<f64>::zeros();
                let mut d_uy = Matrix3::<f64>::zeros();
                let (m, dm) = if eps == 0.0 {
                    (Matrix3::identity(), [Matrix3::zeros(); 3])
                } else {
                    volume_inverse_jet(c, &(u * eps))
                };
                for a in 0..3 {
                    let col_x = -2.0 * (m * cross_with(a, &uy, true));
                    let col_y = -2.0 * (m * cross_with(a, &ux, false));
                    let col_u = -2.0 * eps * (dm[a] * cr);
                    for jj in 0..3 {
                        d_ux[(jj, a)] += col_x[jj];
                        d_uy[(jj, a)] += col_y[jj];
                        d_u[(jj, a)] += col_u[jj];
                    }
                }
                if eps != 0.0 {
                    let gam = conn.gamma(&u, eps);
                    let dgam = conn.gamma_derivative(&u, eps);
                    for jj in 0..3 {
                        for a in 0..3 {
                            let mut sx = 0.0;
                            let mut sy = 0.0;
                            let mut su = 0.0;
                            for k in 0..3 {
                                let sym = gam[jj][a][k] + gam[jj][k][a];
                                sx += sym * ux[k];
                                sy += sym * uy[k];
                                for i2 in 0..3 {
                                    su += dgam[a][jj][i2][k] * (ux[i2] * ux[k] + uy[i2] * uy[k]);
                                }
                            }
                            d_ux[(jj, a)] += sx;
                            d_uy[(jj, a)] += sy;
                            d_u[(jj, a)] += su;
                        }
                    }
                }
                let mut push = |ii: usize, jj2: usize, block: Matrix3<f64>| {
                    if ii == 0 || jj2 == 0 || ii == n - 1 || jj2 == n - 1 {
                        return;
                    }
                    let col = unknown(n, ii, jj2);
                    for r in 0..3 {
                        for s in 0..3 {
                            let v = block[(r, s)];
                            if v != 0.0 {
                                t.push((row + r, col + s, v));
                            }
                        }
                    }
                };
                let id = Matrix3::<f64>::identity() * inv_h2;
                push(i, j, d_u);
                push(i + 1, j, id + d_ux * half_h);
                push(i - 1, j, id - d_ux * half_h);
                push(i, j + 1, id + d_uy * half_h);
                push(i, j - 1, id - d_uy * half_h);
            }
            t
        })
        .collect();
    rows.into_iter().flatten().collect()
}

/// Image centre weighted by the conformal area density `|∇u|^2 / 2`.
pub fn discrete_center(f: &Field2D) -> V3 {
    let (mut num, mut den) = (V3::zeros(), 0.0);
    for j in 1..f.n - 1 {
        for i in 1..f.n - 1 {
            let (ux, uy) = f.grad3(i, j);
            let w = 0.5 * (ux.norm_squared() + uy.norm_squared());
            num += f.v3(i, j) * w;
            den += w;
        }
    }
    num / den
}

/// Damped Newton iteration with the edge values of `initial` frozen.
/// Steps are halved from `damping` down to `2^-10` until the residual
/// norm decreases; if none does, the run stops unconverged.
pub fn newton_solve(cfg: &SolveConfig, initial: &Field2D) -> Result<SolveResult> {
    cfg.validate()?;
    if initial.n != cfg.grid_n || (initial.half_width - cfg.half_width).abs() > 1e-12 {
        return Err(invalid("initial", "grid differs from the configuration"));
    }
    initial.require(3, 64)?;
    let c = cfg.curvature();
    let n = cfg.grid_n;
    let size = 3 * (n - 2) * (n - 2);
    let mut u = initial.clone();
    let mut res = assemble_residual(&u, cfg)?;
    let mut history = vec![l2(&res)];
    let mut converged = history[0] <= cfg.newton_tol;
    let mut iterations = 0;
    while !converged && iterations < cfg.newton_max_iter {
        let lu = sparse::factor(size, &jacobian(&u, c, cfg.eps))?;
        let mut rhs = vec![0.0; size];
        for j in 1..n - 1 {
            for i in 1..n - 1 {
                let k = unknown(n, i, j);
                rhs[k..k + 3].copy_from_slice(res.at(i, j));
            }
        }
        let delta = lu.solve(&rhs);
        if delta.iter().any(|v| !v.is_finite()) {
            return Err(Error::Newton("singular Jacobian".into()));
        }
        let current = *history.last().unwrap();
        let mut step = cfg.damping;
        let mut accepted = None;
        while step >= 1.0 / 1024.0 {
            let mut trial = u.clone();
            for j in 1..n - 1 {
                for i in 1..n - 1 {
                    let k = unknown(n, i, j);
                    let p = trial.at_mut(i, j);
                    for c in 0..3 {
                        p[c] -= step * delta[k + c];
                    }
                }
            }
            if let Ok(r) = assemble_residual(&trial, cfg) {
                let norm = l2(&r);
                if norm < current {
                    accepted = Some((trial, r, norm));
                    break;
                }
            }
            step *= 0.5;
        }
        iterations += 1;
        let Some((trial, r, norm)) = accepted else {
            break;
        };
        u = trial;
        res = r;
        history.push(norm);
        converged = norm <= cfg.newton_tol;
    }
    let (report, _) = main3_residual_field(&u, c, cfg.eps);
    let conformality_defect = report.conformal_dot.max.max(report.conformal_diff.max);
    let (diagnostics, _) = surface_diagnostics(&u, 1.0)?;
    Ok(SolveResult {
        center: discrete_center(&u),
        field: u,
        residual_history: history,
        converged,
        iterations,
        conformality_defect,
        diagnostics,
    })
}

/// Distance between two fields after removing, in the discrete L2 sense,
/// the bubble's dilation and translation directions `ω_x`, `ω_y`,
/// `x ω_x + y ω_y`. Reported as a max over grid points.
pub fn distance_modulo_kernel(a: &Field2D, b: &Field2D) -> f64 {
    let d = a.sub(b);
    let n = d.n;
    let basis: Vec<Field2D> = [0, 1, 2]
        .iter()
        .map(|&k| {
            Field2D::from_fn3(n, d.half_width, |x, y| {
                let j = omega_jet(x, y);
                match k {
                    0 => j.dx,
                    1 => j.dy,
                    _ => j.dx * x + j.dy * y,
                }
            })
        })
        .collect();
    let dot = |p: &Field2D, q: &Field2D| p.data.iter().zip(&q.data).map(|(x, y)| x * y).sum::<f64>();
    let gram = nalgebra::Matrix3::from_fn(|r, s| dot(&basis[r], &basis[s]));
    let rhs = V3::from_fn(|r, _| dot(&basis[r], &d));
    let coef = gram.lu().solve(&rhs).unwrap_or_else(V3::zeros);
    let mut rest = d.clone();
    for (k, b) in basis.iter().enumerate() {
        rest.data.iter_mut().zip(&b.data).for_each(|(r, v)| *r -= coef[k] * v);
    }
    rest.data.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

/// `∫ (R(ε) - R(0)) dz` over the chart for the corrected bubble, with
/// `R` the pointwise residual on an `n`-point grid.
fn raw_force(c: &CurvatureData, eps: f64, n: usize, half_width: f64) -> V3 {
    let b = CorrectedBubble::new(SimpleBubble::identity(), c.clone(), eps);
    let f = b.sample(n, half_width);
    let base = SimpleBubble::identity().sample(n, half_width);
    let (_, r) = main3_residual_field(&f, c, eps);
    let (_, r0) = main3_residual_field(&base, c, 0.0);
    let h2 = f.h() * f.h();
    let mut out = V3::zeros();
    for (a, b) in r.data.chunks(3).zip(r0.data.chunks(3)) {
        for k in 0..3 {
            out[k] += (a[k] - b[k]) * h2;
        }
    }
    out
}

/// Force on the corrected bubble: the residual paired with the ambient
/// translations, extrapolated to zero grid spacing from grids with
/// `n` and `2n - 1` points.
pub fn kernel_force(c: &CurvatureData, eps: f64, n: usize, half_width: f64) -> V3 {
    let coarse = raw_force(c, eps, n, half_width);
    let fine = raw_force(c, eps, 2 * n - 1, half_width);
    (fine * 4.0 - coarse) / 3.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DriftRow {
    pub eps: f64,
    pub center: V3,
    pub force: V3,
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DriftOutcome {
    pub rows: Vec<DriftRow>,
    /// Set when a solve failed; `rows` then holds the completed ε only.
    pub aborted: Option<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForceGrid {
    pub grid_n: usize,
    pub half_width: f64,
}

impl Default for ForceGrid {
    fn default() -> Self {
        ForceGrid { grid_n: 193, half_width: 12.0 }
    }
}

impl DriftOutcome {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("eps,center_x,center_y,center_z,force_1,force_2,force_3,residual,iterations\n");
        for r in &self.rows {
            s.push_str(&format!(
                "{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{}\n",
                r.eps, r.center.x, r.center.y, r.center.z, r.force.x, r.force.y, r.force.z, r.residual, r.iterations
            ));
        }
        s
    }
}

/// For each ε (strictly decreasing) solve from the corrected bubble and
/// record the solution's centre together with the force on the corrected
/// bubble. A failed solve ends the sweep.
pub fn drift_experiment(template: &SolveConfig, eps_list: &[f64], grid: ForceGrid) -> Result<DriftOutcome> {
    if eps_list.windows(2).any(|w| w[1] >= w[0]) {
        return Err(invalid("eps_list", "must be strictly decreasing"));
    }
    let mut rows = Vec::new();
    for &eps in eps_list {
        let cfg = SolveConfig { eps, ..template.clone() };
        let outcome = newton_solve(&cfg, &cfg.initial());
        let sol = match outcome {
            Ok(s) if s.converged => s,
            Ok(s) => {
                return Ok(DriftOutcome {
                    rows,
                    aborted: Some(format!("eps {eps}: no convergence, residual {:e}", s.residual_history.last().unwrap())),
                })
            }
            Err(e) => return Ok(DriftOutcome { rows, aborted: Some(format!("eps {eps}: {e}")) }),
        };
        rows.push(DriftRow {
            eps,
            center: sol.center,
            force: kernel_force(cfg.curvature(), eps, grid.grid_n, grid.half_width),
            residual: *sol.residual_history.last().unwrap(),
            iterations: sol.iterations,
            converged: true,
        });
    }
    Ok(DriftOutcome { rows, aborted: None })
}

/// Conformality defect of `f` in the cubic metric at scale ε.
pub fn metric_conformality(f: &Field2D, c: &CurvatureData, eps: f64) -> f64 {
    let mut worst = 0.0f64;
    for j in 1..f.n - 1 {
        for i in 1..f.n - 1 {
            let g = metric_expansion(c, &(f.v3(i, j) * eps)).g;
            let (fx, fy) = f.grad3(i, j);
            worst = worst.max(fx.dot(&(g * fy)).abs()).max((fx.dot(&(g * fx)) - fy.dot(&(g * fy))).abs());
        }
    }
    worst
}
