//! Green representation, Wente-type estimates, extrinsic diagnostics of
//! sampled surfaces and the interaction quantities between bubbles.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::bubble::{eval_bubble, SimpleBubble};
use crate::error::{invalid, Error, Result};
use crate::field::{Field2D, V3};
use crate::quad;
use crate::sparse;

// ---------------------------------------------------------------- Green

/// `1 - S(t)` with `S` the C³ smoothstep; equals 1 near 0 and 0 beyond 1.
fn cutoff(t: f64) -> f64 {
    if t >= 1.0 {
        return 0.0;
    }
    let t4 = t * t * t * t;
    1.0 - t4 * (35.0 - 84.0 * t + 70.0 * t * t - 20.0 * t * t * t)
}

fn catmull_rom(p: [f64; 4], t: f64) -> f64 {
    let t2 = t * t;
    0.5 * (2.0 * p[1] + (p[2] - p[0]) * t + (2.0 * p[0] - 5.0 * p[1] + 4.0 * p[2] - p[3]) * t2
        + (3.0 * (p[1] - p[2]) + p[3] - p[0]) * t2 * t)
}

/// Bicubic interpolation of component `c` at `(x, y)`; the caller keeps the
/// point two cells away from the grid edge.
fn interpolate(f: &Field2D, c: usize, x: f64, y: f64) -> f64 {
    let h = f.h();
    let (u, v) = ((x + f.half_width) / h, (y + f.half_width) / h);
    let (i, j) = (u.floor() as usize, v.floor() as usize);
    let (tu, tv) = (u - i as f64, v - j as f64);
    let row = |jj: usize| {
        catmull_rom(
            [f.at(i - 1, jj)[c], f.at(i, jj)[c], f.at(i + 1, jj)[c], f.at(i + 2, jj)[c]],
            tu,
        )
    };
    catmull_rom([row(j - 1), row(j), row(j + 1), row(j + 2)], tv)
}

/// `∇u(z0) = ∫ ∇_{z0} G(z0, z) f(z) dz` with `G = ln|z0 - z| / 2π`, so that
/// `Δu = f`. Returns `[∂x, ∂y]` per component of `f`.
///
/// The kernel is split by a smooth radial cutoff of width ten cells. Far
/// from `z0` the trapezoid rule on the grid is used. Near `z0` the `1/r`
/// singularity cancels the polar area element and the rest is integrated
/// on Gauss radii with a bicubic interpolant of `f`.
pub fn green_gradient_represent(f: &Field2D, z0: (f64, f64)) -> Result<Vec<[f64; 2]>> {
    if f.n < 16 {
        return Err(Error::GridTooSmall { min: 16, got: f.n });
    }
    let (n, h, l) = (f.n, f.h(), f.half_width);
    let width = 10.0 * h;
    let margin = width + 3.0 * h;
    if z0.0.abs() > l - margin || z0.1.abs() > l - margin {
        return Err(Error::NearBoundary);
    }
    // Decay like |z|^-2: the ring next to the edge, scaled by L^2, must not
    // dominate the bulk of the source.
    let mut ring = 0.0f64;
    let mut bulk = 0.0f64;
    for j in 1..n - 1 {
        for i in 1..n - 1 {
            let m = f.at(i, j).iter().map(|v| v * v).sum::<f64>().sqrt();
            bulk = bulk.max(m);
            if i == 1 || j == 1 || i == n - 2 || j == n - 2 {
                ring = ring.max(m);
            }
        }
    }
    if ring * l * l > 10.0 * bulk {
        return Err(Error::NoDecay(ring));
    }

    let dim = f.dim;
    let far: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|j| {
            let mut acc = vec![0.0; 2 * dim];
            let wy = if j == 0 || j == n - 1 { 0.5 } else { 1.0 };
            for i in 0..n {
                let wx = if i == 0 || i == n - 1 { 0.5 } else { 1.0 };
                let (x, y) = f.point(i, j);
                let (dx, dy) = (z0.0 - x, z0.1 - y);
                let r2 = dx * dx + dy * dy;
                if r2 == 0.0 {
                    continue;
                }
                let w = wx * wy * (1.0 - cutoff(r2.sqrt() / width)) / (2.0 * PI * r2);
                if w == 0.0 {
                    continue;
                }
                for (c, v) in f.at(i, j).iter().enumerate() {
                    acc[2 * c] += w * dx * v;
                    acc[2 * c + 1] += w * dy * v;
                }
            }
            acc
        })
        .reduce(|| vec![0.0; 2 * dim], |a, b| a.iter().zip(&b).map(|(p, q)| p + q).collect());

    let (gx, gw) = quad::gauss_legendre(40);
    let n_theta = 96;
    let mut near = vec![0.0; 2 * dim];
    for (xr, wr) in gx.iter().zip(&gw) {
        let rho = 0.5 * width * (xr + 1.0);
        let wr = 0.5 * width * wr * cutoff(rho / width);
        for k in 0..n_theta {
            let t = 2.0 * PI * k as f64 / n_theta as f64;
            let (ct, st) = (t.cos(), t.sin());
            let (x, y) = (z0.0 + rho * ct, z0.1 + rho * st);
            let w = -wr * (2.0 * PI / n_theta as f64) / (2.0 * PI);
            for c in 0..dim {
                let v = interpolate(f, c, x, y);
                near[2 * c] += w * ct * v;
                near[2 * c + 1] += w * st * v;
            }
        }
    }
    Ok((0..dim)
        .map(|c| [h * h * far[2 * c] + near[2 * c], h * h * far[2 * c + 1] + near[2 * c + 1]])
        .collect())
}

/// `∫ |∇G(z, z0)| / (1 + |z|^2) dz` and its ratio to `ln(2+|z0|)/(1+|z0|)`.
///
/// In polar coordinates about `z0` the angular integral is exact, leaving
/// `∫_0^∞ dρ / sqrt((1 + (ρ-a)^2)(1 + (ρ+a)^2))` with `a = |z0|`. The
/// half-line beyond `2a + 1` is mapped onto `(0, 1]` by `ρ = R/t`.
pub fn green_weight_bound(z0: (f64, f64)) -> Result<(f64, f64)> {
    let a = z0.0.hypot(z0.1);
    let g = |r: f64| 1.0 / ((1.0 + (r - a) * (r - a)) * (1.0 + (r + a) * (r + a))).sqrt();
    let big = 2.0 * a + 1.0;
    let tol = 1e-11;
    let mut lhs = quad::integrate(g, 0.0, a, tol)? + quad::integrate(g, a, big, tol)?;
    lhs += quad::integrate(|t| if t == 0.0 { 1.0 / big } else { g(big / t) * big / (t * t) }, 0.0, 1.0, tol)?;
    Ok((lhs, lhs * (1.0 + a) / (2.0 + a).ln()))
}

// ---------------------------------------------------------------- Wente

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WenteVariant {
    /// `‖u‖_∞ + ‖∇u‖_2 ≤ (1/π) ‖∇v‖_2^2`, zero boundary on the unit disk.
    DiskW1,
    /// `‖∇u‖_2 ≤ (2/π) ‖∇v‖_2^2` for the decaying solution on the plane.
    PlaneW2,
    /// `‖∇u‖_∞ ≤ C ‖∇v‖_∞ ‖∇v‖_2` with `Δu = v_x × v_y` on the plane.
    SupMll,
    /// `|∫ <u, v_x × v_y>| ≤ C ‖∇v‖_2 ‖∇u‖_2^2` on the unit disk.
    TrilinearW3,
}

impl WenteVariant {
    pub const ALL: [WenteVariant; 4] =
        [WenteVariant::DiskW1, WenteVariant::PlaneW2, WenteVariant::SupMll, WenteVariant::TrilinearW3];

    /// The constant the ratio is compared with, when one is known.
    pub fn bound(self) -> Option<f64> {
        match self {
            WenteVariant::DiskW1 => Some(1.0 / PI),
            WenteVariant::PlaneW2 => Some(2.0 / PI),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WenteReport {
    pub lhs: f64,
    pub rhs: f64,
    /// `lhs / rhs`, zero when both vanish.
    pub ratio: f64,
}

fn report(lhs: f64, rhs: f64) -> WenteReport {
    let ratio = if lhs == 0.0 { 0.0 } else { lhs / rhs };
    WenteReport { lhs, rhs, ratio }
}

/// `v_x × v_y` at every grid point, zero on the edge.
fn jacobian_cross(v: &Field2D) -> Field2D {
    let mut out = Field2D::zeros(v.n, v.half_width, 3);
    for j in 1..v.n - 1 {
        for i in 1..v.n - 1 {
            let (vx, vy) = v.grad3(i, j);
            out.set_v3(i, j, vx.cross(&vy));
        }
    }
    out
}

fn gradient_norms(v: &Field2D) -> (f64, f64) {
    let (mut sup, mut sq) = (0.0f64, 0.0);
    for j in 1..v.n - 1 {
        for i in 1..v.n - 1 {
            let (vx, vy) = v.grad3(i, j);
            let g2 = vx.norm_squared() + vy.norm_squared();
            sup = sup.max(g2.sqrt());
            sq += g2;
        }
    }
    (sup, (sq * v.h() * v.h()).sqrt())
}

/// Zero-boundary solution of `Δu = f` on the unit disk, five-point stencil,
/// grid points with `|z| < 1` as unknowns.
pub fn solve_disk_poisson(f: &Field2D) -> Result<Field2D> {
    if (f.half_width - 1.0).abs() > 1e-12 {
        return Err(invalid("half_width", "disk solves need the chart [-1, 1]^2"));
    }
    let n = f.n;
    let h = f.h();
    let mut index = vec![usize::MAX; n * n];
    let mut pts = Vec::new();
    for j in 0..n {
        for i in 0..n {
            let (x, y) = f.point(i, j);
            if x * x + y * y < 1.0 - 1e-12 {
                index[j * n + i] = pts.len();
                pts.push((i, j));
            }
        }
    }
    let inv = 1.0 / (h * h);
    let mut t = Vec::with_capacity(5 * pts.len());
    for (p, &(i, j)) in pts.iter().enumerate() {
        t.push((p, p, -4.0 * inv));
        for (a, b) in [(i + 1, j), (i - 1, j), (i, j + 1), (i, j - 1)] {
            let q = index[b * n + a];
            if q != usize::MAX {
                t.push((p, q, inv));
            }
        }
    }
    let lu = sparse::factor(pts.len(), &t)?;
    let rhs: Vec<Vec<f64>> =
        (0..f.dim).map(|c| pts.iter().map(|&(i, j)| f.at(i, j)[c]).collect()).collect();
    let sol = lu.solve_columns(&rhs);
    let mut u = Field2D::zeros(n, f.half_width, f.dim);
    for (c, col) in sol.iter().enumerate() {
        if col.iter().any(|v| !v.is_finite()) {
            return Err(Error::LinearSolve("non-finite disk solution".into()));
        }
        for (p, &(i, j)) in pts.iter().enumerate() {
            u.at_mut(i, j)[c] = col[p];
        }
    }
    Ok(u)
}

fn fft2(data: &mut [Complex64], m: usize, inverse: bool) {
    let mut planner = FftPlanner::new();
    let fft = if inverse { planner.plan_fft_inverse(m) } else { planner.plan_fft_forward(m) };
    for row in data.chunks_mut(m) {
        fft.process(row);
    }
    let mut col = vec![Complex64::new(0.0, 0.0); m];
    for i in 0..m {
        for j in 0..m {
            col[j] = data[j * m + i];
        }
        fft.process(&mut col);
        for j in 0..m {
            data[j * m + i] = col[j];
        }
    }
}

/// Mean of `ln|z|` over the square `[-1/2, 1/2]^2`.
const LOG_CELL_MEAN: f64 = 0.5 * (PI / 2.0 - 3.0 - std::f64::consts::LN_2);

/// `u = G * f` on the plane, `G = ln|z| / 2π`, for `f` vanishing off the
/// grid. The logarithm is averaged over the cell at the origin.
pub fn solve_plane_poisson(f: &Field2D) -> Field2D {
    let (n, h) = (f.n, f.h());
    let m = (2 * n).next_power_of_two();
    let kernel_at = |d: isize| if d < 0 { d + m as isize } else { d } as usize;
    let mut k = vec![Complex64::new(0.0, 0.0); m * m];
    for dj in -(n as isize - 1)..n as isize {
        for di in -(n as isize - 1)..n as isize {
            let g = if di == 0 && dj == 0 {
                (h.ln() + LOG_CELL_MEAN) / (2.0 * PI)
            } else {
                (h * (di as f64).hypot(dj as f64)).ln() / (2.0 * PI)
            };
            k[kernel_at(dj) * m + kernel_at(di)] = Complex64::new(g * h * h, 0.0);
        }
    }
    fft2(&mut k, m, false);
    let mut u = Field2D::zeros(n, f.half_width, f.dim);
    for c in 0..f.dim {
        let mut s = vec![Complex64::new(0.0, 0.0); m * m];
        for j in 0..n {
            for i in 0..n {
                s[j * m + i] = Complex64::new(f.at(i, j)[c], 0.0);
            }
        }
        fft2(&mut s, m, false);
        s.iter_mut().zip(&k).for_each(|(a, b)| *a *= b);
        fft2(&mut s, m, true);
        let scale = 1.0 / (m * m) as f64;
        for j in 0..n {
            for i in 0..n {
                u.at_mut(i, j)[c] = s[j * m + i].re * scale;
            }
        }
    }
    u
}

/// `-∫ <u, f>`, which equals `‖∇u‖_2^2` when `Δu = f` and `u` vanishes on
/// the boundary or decays at infinity.
fn dirichlet_from_source(u: &Field2D, f: &Field2D) -> f64 {
    let s: f64 = u.data.iter().zip(&f.data).map(|(a, b)| a * b).sum();
    (-s * u.h() * u.h()).max(0.0)
}

/// Evaluate one Wente-type inequality for `v` on the chart `[-1, 1]^2`.
/// Disk variants require `∇v` to vanish outside the unit disk.
pub fn wente_check(v: &Field2D, variant: WenteVariant) -> Result<WenteReport> {
    v.require(3, 17)?;
    if (v.half_width - 1.0).abs() > 1e-12 {
        return Err(invalid("half_width", "fields live on [-1, 1]^2"));
    }
    let (gsup, g2) = gradient_norms(v);
    if matches!(variant, WenteVariant::DiskW1 | WenteVariant::TrilinearW3) {
        for j in 1..v.n - 1 {
            for i in 1..v.n - 1 {
                let (x, y) = v.point(i, j);
                let (vx, vy) = v.grad3(i, j);
                if x * x + y * y >= 1.0 && vx.norm() + vy.norm() > 1e-10 * (1.0 + gsup) {
                    return Err(invalid("v", "gradient is not supported in the unit disk"));
                }
            }
        }
    }
    let cross = jacobian_cross(v);
    let mut source = cross.clone();
    source.data.iter_mut().for_each(|s| *s *= -2.0);
    Ok(match variant {
        WenteVariant::DiskW1 => {
            let u = solve_disk_poisson(&source)?;
            let sup = (0..u.n * u.n).map(|p| u.v3(p % u.n, p / u.n).norm()).fold(0.0, f64::max);
            report(sup + dirichlet_from_source(&u, &source).sqrt(), g2 * g2)
        }
        WenteVariant::PlaneW2 => {
            let u = solve_plane_poisson(&source);
            report(dirichlet_from_source(&u, &source).sqrt(), g2 * g2)
        }
        WenteVariant::SupMll => {
            let u = solve_plane_poisson(&cross);
            let (usup, _) = gradient_norms(&u);
            report(usup, gsup * g2)
        }
        WenteVariant::TrilinearW3 => {
            let u = solve_disk_poisson(&source)?;
            let pairing: f64 = u.data.iter().zip(&cross.data).map(|(a, b)| a * b).sum::<f64>() * v.h() * v.h();
            report(pairing.abs(), g2 * dirichlet_from_source(&u, &source))
        }
    })
}

/// Fixed-seed random fields on `[-1, 1]^2`: trigonometric polynomials of
/// degree `bandwidth` times a bump vanishing outside radius 0.9.
pub fn wente_corpus(count: usize, n: usize, bandwidth: i32, seed: u64) -> Vec<Field2D> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let modes: Vec<(f64, f64, [f64; 3], [f64; 3])> = (-bandwidth..=bandwidth)
                .flat_map(|a| (-bandwidth..=bandwidth).map(move |b| (a as f64, b as f64)))
                .map(|(a, b)| {
                    let damp = 1.0 / (1.0 + a * a + b * b);
                    let mut c = [0.0; 3];
                    let mut s = [0.0; 3];
                    for k in 0..3 {
                        c[k] = damp * rng.gen_range(-1.0..1.0);
                        s[k] = damp * rng.gen_range(-1.0..1.0);
                    }
                    (a, b, c, s)
                })
                .collect();
            Field2D::from_fn3(n, 1.0, |x, y| {
                let r2 = (x * x + y * y) / 0.81;
                if r2 >= 1.0 {
                    return V3::zeros();
                }
                let bump = (1.0 - r2).powi(3);
                let mut out = V3::zeros();
                for (a, b, c, s) in &modes {
                    let ph = PI * (a * x + b * y);
                    let (co, si) = (ph.cos(), ph.sin());
                    out += V3::new(c[0] * co + s[0] * si, c[1] * co + s[1] * si, c[2] * co + s[2] * si);
                }
                out * bump
            })
        })
        .collect()
}

// ---------------------------------------------------------------- geometry

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SurfaceDiagnostics {
    pub diameter: f64,
    /// Bound on how far the sampled diameter can sit below the surface's.
    pub diameter_error: f64,
    pub area: f64,
    pub mean_curvature: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InequalityReport {
    /// `δ sup|H| / 2`, at least one for closed surfaces.
    pub diameter_curvature: f64,
    /// `(2/π) sqrt(A) sqrt(∫H^2) / δ`, above one for closed surfaces.
    pub simon: f64,
    /// `δ H`, pinched between `1/K` and `K`.
    pub scaled_diameter: f64,
}

/// Eighth-order central differences at a point four cells from the edge.
pub(crate) fn grad8(f: &Field2D, i: usize, j: usize) -> (V3, V3) {
    const C: [f64; 4] = [4.0 / 5.0, -1.0 / 5.0, 4.0 / 105.0, -1.0 / 280.0];
    let (mut dx, mut dy) = (V3::zeros(), V3::zeros());
    for (k, c) in C.iter().enumerate() {
        let k = k + 1;
        dx += (f.v3(i + k, j) - f.v3(i - k, j)) * *c;
        dy += (f.v3(i, j + k) - f.v3(i, j - k)) * *c;
    }
    (dx / f.h(), dy / f.h())
}

fn sample_diameter(f: &Field2D) -> (f64, usize) {
    let n = f.n;
    let stride = n.div_ceil(72).max(1);
    let idx: Vec<usize> = (0..n).step_by(stride).chain(std::iter::once(n - 1)).collect();
    let pts: Vec<(usize, usize)> = idx.iter().flat_map(|&j| idx.iter().map(move |&i| (i, j))).collect();
    let vals: Vec<V3> = pts.iter().map(|&(i, j)| f.v3(i, j)).collect();
    let (best, p, q) = (0..vals.len())
        .into_par_iter()
        .map(|a| {
            let mut out = (0.0f64, a, a);
            for b in a + 1..vals.len() {
                let d = (vals[a] - vals[b]).norm_squared();
                if d > out.0 {
                    out = (d, a, b);
                }
            }
            out
        })
        .reduce(|| (0.0, 0, 0), |x, y| if y.0 > x.0 { y } else { x });
    // Alternate local searches around each endpoint on the full grid.
    let (mut a, mut b) = (pts[p], pts[q]);
    let mut d = best;
    loop {
        let mut moved = false;
        for side in 0..2 {
            let (fixed, moving) = if side == 0 { (b, a) } else { (a, b) };
            let anchor = f.v3(fixed.0, fixed.1);
            let mut cur = moving;
            for j in moving.1.saturating_sub(stride)..(moving.1 + stride + 1).min(n) {
                for i in moving.0.saturating_sub(stride)..(moving.0 + stride + 1).min(n) {
                    let e = (f.v3(i, j) - anchor).norm_squared();
                    if e > d {
                        d = e;
                        cur = (i, j);
                        moved = true;
                    }
                }
            }
            if side == 0 {
                a = cur;
            } else {
                b = cur;
            }
        }
        if !moved {
            break;
        }
    }
    (d.sqrt(), stride)
}

/// Extrinsic diameter, induced area and the associated inequalities for a
/// sampled surface with nominal mean curvature `h_nominal`.
///
/// The area integrates `|f_x × f_y|` with eighth-order differences and the
/// trapezoid rule, leaving out a four-cell rim. The diameter is searched
/// on a subsample and then refined on the full grid.
pub fn surface_diagnostics(f: &Field2D, h_nominal: f64) -> Result<(SurfaceDiagnostics, InequalityReport)> {
    f.require(3, 17)?;
    let n = f.n;
    let h = f.h();
    let rows: Vec<Result<(f64, f64)>> = (4..n - 4)
        .into_par_iter()
        .map(|j| {
            let (mut area, mut gmax) = (0.0, 0.0f64);
            for i in 4..n - 4 {
                let (fx, fy) = grad8(f, i, j);
                let c = fx.cross(&fy).norm();
                let scale = fx.norm() * fy.norm();
                if scale > 0.0 && c <= 1e-8 * scale || scale == 0.0 {
                    return Err(Error::Degenerate(format!("rank-deficient Jacobian at ({i}, {j})")));
                }
                area += c;
                gmax = gmax.max(fx.norm().max(fy.norm()));
            }
            Ok((area, gmax))
        })
        .collect();
    let (mut area, mut gmax) = (0.0, 0.0f64);
    for r in rows {
        let (a, g) = r?;
        area += a * h * h;
        gmax = gmax.max(g);
    }
    let (diameter, stride) = sample_diameter(f);
    let diag = SurfaceDiagnostics {
        diameter,
        diameter_error: h * gmax * if stride > 1 { stride as f64 * 2f64.sqrt() } else { 1.0 },
        area,
        mean_curvature: h_nominal,
    };
    let hh = h_nominal.abs();
    let ineq = InequalityReport {
        diameter_curvature: diameter * hh / 2.0,
        simon: 2.0 / PI * area.sqrt() * (hh * hh * area).sqrt() / diameter,
        scaled_diameter: diameter * hh,
    };
    Ok((diag, ineq))
}

/// `∫ |∇f|^2` with eighth-order differences, leaving out a four-cell rim.
pub fn dirichlet_energy(f: &Field2D) -> Result<f64> {
    f.require(3, 17)?;
    let n = f.n;
    let s: f64 = (4..n - 4)
        .into_par_iter()
        .map(|j| {
            (4..n - 4)
                .map(|i| {
                    let (fx, fy) = grad8(f, i, j);
                    fx.norm_squared() + fy.norm_squared()
                })
                .sum::<f64>()
        })
        .sum();
    Ok(s * f.h() * f.h())
}

// ---------------------------------------------------------------- bubbles

/// `sqrt(λ^2 + |a - x|^2)`
pub fn bubble_distance(center: [f64; 2], lambda: f64, x: [f64; 2]) -> f64 {
    (lambda * lambda + (center[0] - x[0]).powi(2) + (center[1] - x[1]).powi(2)).sqrt()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InteractionMatrix {
    pub centers: Vec<[f64; 2]>,
    pub scales: Vec<f64>,
    /// `t[i][j] = λ_j / (d_j(a_i)^2 + d_i(a_j)^2)`, zero on the diagonal.
    pub t: Vec<Vec<f64>>,
    pub t_max: f64,
}

impl InteractionMatrix {
    /// `d_i(a_j)/λ_j + d_j(a_i)/λ_i`, large for well separated bubbles.
    pub fn orthogonality(&self, i: usize, j: usize) -> f64 {
        let (ai, aj) = (self.centers[i], self.centers[j]);
        let (li, lj) = (self.scales[i], self.scales[j]);
        bubble_distance(ai, li, aj) / lj + bubble_distance(aj, lj, ai) / li
    }

    /// Smallest pairwise orthogonality value, infinite for fewer than two.
    pub fn min_orthogonality(&self) -> f64 {
        let k = self.scales.len();
        (0..k)
            .flat_map(|i| (i + 1..k).map(move |j| (i, j)))
            .map(|(i, j)| self.orthogonality(i, j))
            .fold(f64::INFINITY, f64::min)
    }
}

pub fn interaction_matrix(centers: &[[f64; 2]], scales: &[f64]) -> Result<InteractionMatrix> {
    if centers.len() != scales.len() {
        return Err(invalid("scales", "one scale per center"));
    }
    if let Some(s) = scales.iter().find(|s| !(**s > 0.0)) {
        return Err(invalid("scales", format!("must be positive, got {s}")));
    }
    let k = scales.len();
    let mut t = vec![vec![0.0; k]; k];
    let mut t_max = 0.0f64;
    for i in 0..k {
        for j in 0..k {
            if i != j {
                let dj = bubble_distance(centers[j], scales[j], centers[i]);
                let di = bubble_distance(centers[i], scales[i], centers[j]);
                t[i][j] = scales[j] / (dj * dj + di * di);
                t_max = t_max.max(t[i][j]);
            }
        }
    }
    Ok(InteractionMatrix { centers: centers.to_vec(), scales: scales.to_vec(), t, t_max })
}

/// `f` minus the sum of the ensemble's bubbles, sampled on `f`'s grid.
pub fn remainder(f: &Field2D, ensemble: &[SimpleBubble]) -> Field2D {
    let mut out = f.clone();
    for j in 0..f.n {
        for i in 0..f.n {
            let (x, y) = f.point(i, j);
            let s: V3 = ensemble.iter().map(|b| eval_bubble(b, x, y)).sum();
            let v = f.v3(i, j) - s;
            out.set_v3(i, j, v);
        }
    }
    out
}

/// `min(d_0, d_1, ..)` with `d_0(x) = sqrt(1 + |x|^2)` for the background.
pub fn distance_weight(ensemble: &[SimpleBubble], x: [f64; 2]) -> f64 {
    ensemble.iter().map(|b| bubble_distance(b.a, b.lambda, x)).fold(bubble_distance([0.0, 0.0], 1.0, x), f64::min)
}

/// `sup_x min_i d_i(x) |∇(f - Σ bubbles)(x)|` over interior grid points.
pub fn weighted_sup_defect(f: &Field2D, ensemble: &[SimpleBubble]) -> f64 {
    let r = remainder(f, ensemble);
    weighted_sup_of(&r, ensemble).0
}

/// Weighted sup of the remainder gradient and the lexicographically first
/// grid point attaining it.
pub(crate) fn weighted_sup_of(r: &Field2D, ensemble: &[SimpleBubble]) -> (f64, (usize, usize)) {
    let mut best = (0.0, (1, 1));
    for j in 1..r.n - 1 {
        for i in 1..r.n - 1 {
            let (x, y) = r.point(i, j);
            let (gx, gy) = r.grad3(i, j);
            let v = distance_weight(ensemble, [x, y]) * (gx.norm_squared() + gy.norm_squared()).sqrt();
            if v > best.0 {
                best = (v, (i, j));
            }
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bubble::omega_jet;

    #[test]
    fn cell_mean_of_log_matches_quadrature() {
        let (x, w) = quad::gauss_legendre(64);
        // Split each axis at 0 so the logarithmic point sits on a corner.
        let mut s = 0.0;
        for (a, wa) in x.iter().zip(&w) {
            for (b, wb) in x.iter().zip(&w) {
                let (u, v) = (0.25 * (a + 1.0), 0.25 * (b + 1.0));
                s += 4.0 * wa * wb / 16.0 * u.hypot(v).ln();
            }
        }
        assert!((s - LOG_CELL_MEAN).abs() < 1e-6, "{s}");
    }

    fn bubble_source(n: usize, l: f64) -> (Field2D, Field2D) {
        let u = Field2D::from_fn1(n, l, |x, y| 2.0 * x / (1.0 + x * x + y * y));
        let mut f = Field2D::zeros(n, l, 1);
        for j in 1..n - 1 {
            for i in 1..n - 1 {
                f.data[j * n + i] = u.lap1(i, j);
            }
        }
        (u, f)
    }

    #[test]
    fn green_recovers_the_bubble_gradient() {
        let (_, f) = bubble_source(201, 10.0);
        let g = green_gradient_represent(&f, (0.3, 0.7)).unwrap();
        let j = omega_jet(0.3, 0.7);
        let tol = (5e-3f64).max(10.0 * f.h() * f.h());
        assert!((g[0][0] - j.dx.x).abs() < tol, "{:?} vs {}", g[0], j.dx.x);
        assert!((g[0][1] - j.dy.x).abs() < tol, "{:?} vs {}", g[0], j.dy.x);
    }

    #[test]
    fn green_of_zero_is_zero() {
        let f = Field2D::zeros(41, 2.0, 3);
        let g = green_gradient_represent(&f, (0.1, -0.2)).unwrap();
        assert!(g.iter().all(|v| v[0] == 0.0 && v[1] == 0.0));
    }

    #[test]
    fn green_is_translation_covariant() {
        let n = 121;
        let bump = |x: f64, y: f64| {
            let r2 = x * x + y * y;
            if r2 < 1.0 { (1.0 - r2).powi(4) * (1.0 + x) } else { 0.0 }
        };
        let f = Field2D::from_fn1(n, 6.0, bump);
        let h = f.h();
        let shifted = Field2D::from_fn1(n, 6.0, |x, y| bump(x - 7.0 * h, y + 3.0 * h));
        let a = green_gradient_represent(&f, (0.25, 0.5)).unwrap();
        let b = green_gradient_represent(&shifted, (0.25 + 7.0 * h, 0.5 - 3.0 * h)).unwrap();
        assert!((a[0][0] - b[0][0]).abs() < 1e-10 && (a[0][1] - b[0][1]).abs() < 1e-10);
    }

    #[test]
    fn green_refuses_edges_and_slow_decay() {
        let (_, f) = bubble_source(101, 5.0);
        assert_eq!(green_gradient_represent(&f, (4.5, 0.0)), Err(Error::NearBoundary));
        let c = Field2D::from_fn1(101, 5.0, |_, _| 1.0);
        assert!(matches!(green_gradient_represent(&c, (0.0, 0.0)), Err(Error::NoDecay(_))));
    }

    #[test]
    fn weight_bound_is_uniform() {
        let (l0, r0) = green_weight_bound((0.0, 0.0)).unwrap();
        assert!((l0 - PI / 2.0).abs() < 1e-9);
        assert!(r0.is_finite());
        let ratios: Vec<f64> =
            [0.0, 1.0, 10.0, 100.0, 1000.0].iter().map(|&a| green_weight_bound((a, 0.0)).unwrap().1).collect();
        let (lo, hi) = ratios.iter().fold((f64::INFINITY, 0.0f64), |(l, h), &r| (l.min(r), h.max(r)));
        assert!(hi / lo <= 20.0, "{ratios:?}");
        assert!(green_weight_bound((100.0, 0.0)).unwrap().0 < green_weight_bound((1.0, 0.0)).unwrap().0);
    }

    #[test]
    fn weight_bound_agrees_with_direct_polar_quadrature() {
        let z0 = (1.5, -0.5);
        let direct = crate::bubble::polar_integral_about(
            |x, y| {
                let r = (x - z0.0).hypot(y - z0.1);
                1.0 / (2.0 * PI * r * (1.0 + x * x + y * y))
            },
            z0,
            1.0,
            1e6,
            1e-9,
        )
        .unwrap();
        let (lhs, _) = green_weight_bound(z0).unwrap();
        // The direct integral stops at radius 1e6, missing about 1e-6.
        assert!((lhs - direct).abs() < 1e-5, "{lhs} {direct}");
    }

    #[test]
    fn constant_fields_have_no_wente_content() {
        let v = Field2D::from_fn3(33, 1.0, |_, _| V3::new(1.0, -2.0, 0.5));
        for variant in WenteVariant::ALL {
            let r = wente_check(&v, variant).unwrap();
            assert_eq!((r.lhs, r.ratio), (0.0, 0.0));
        }
    }

    #[test]
    fn wente_constants_hold_on_a_small_corpus() {
        for v in wente_corpus(5, 97, 3, 11) {
            let d = wente_check(&v, WenteVariant::DiskW1).unwrap();
            let p = wente_check(&v, WenteVariant::PlaneW2).unwrap();
            assert!(d.ratio > 0.0 && d.ratio <= 1.0 / PI + 0.02, "{d:?}");
            assert!(p.ratio > 0.0 && p.ratio <= 2.0 / PI + 0.02, "{p:?}");
        }
    }

    #[test]
    fn plane_solver_matches_disk_solver_on_a_radial_source() {
        // Δu = f with f = 4(1 - 2 r^2)... choose u = (1 - r^2)^3 on the disk,
        // whose source integrates to zero, so both solutions agree.
        let u = |x: f64, y: f64| {
            let r2 = x * x + y * y;
            if r2 < 1.0 { (1.0 - r2).powi(3) } else { 0.0 }
        };
        let lap = |x: f64, y: f64| {
            let r2 = x * x + y * y;
            if r2 < 1.0 { -12.0 * (1.0 - r2).powi(2) + 24.0 * r2 * (1.0 - r2) } else { 0.0 }
        };
        let f = Field2D::from_fn1(129, 1.0, lap);
        let a = solve_disk_poisson(&f).unwrap();
        let b = solve_plane_poisson(&f);
        let k = 64 * 129 + 64;
        assert!((a.data[k] - u(0.0, 0.0)).abs() < 2e-3, "{}", a.data[k]);
        assert!((b.data[k] - u(0.0, 0.0)).abs() < 2e-3, "{}", b.data[k]);
    }

    #[test]
    fn disk_variants_need_disk_support() {
        let v = Field2D::from_fn3(33, 1.0, |x, y| V3::new(x, y, x * y));
        assert!(wente_check(&v, WenteVariant::DiskW1).is_err());
        assert!(wente_check(&v, WenteVariant::PlaneW2).is_ok());
    }

    #[test]
    fn round_sphere_is_the_equality_case() {
        let f = SimpleBubble::identity().sample(1601, 160.0);
        let (d, ineq) = surface_diagnostics(&f, 1.0).unwrap();
        assert!((d.diameter - 2.0).abs() < 1e-3, "{d:?}");
        assert!((d.area - 4.0 * PI).abs() < 1e-3, "{d:?}");
        assert!((ineq.diameter_curvature - 1.0).abs() < 1e-3);
        assert!((ineq.simon - 4.0).abs() < 1e-2, "{ineq:?}");
    }

    #[test]
    fn scaled_sphere_keeps_delta_h() {
        let base = SimpleBubble::identity().sample(201, 20.0);
        let mut half = base.clone();
        half.data.iter_mut().for_each(|v| *v *= 0.5);
        let (_, a) = surface_diagnostics(&base, 1.0).unwrap();
        let (_, b) = surface_diagnostics(&half, 2.0).unwrap();
        assert!((a.scaled_diameter - b.scaled_diameter).abs() < 1e-12);
    }

    #[test]
    fn bubble_energy_on_a_chart() {
        let f = SimpleBubble::identity().sample(1201, 60.0);
        let e = dirichlet_energy(&f).unwrap();
        // Energy outside radius R is 8π / (1 + R^2); the square keeps a bit more.
        assert!((e / (8.0 * PI) - 1.0).abs() < 5e-4, "{}", e / (8.0 * PI));
    }

    #[test]
    fn flat_maps_are_degenerate() {
        let f = Field2D::from_fn3(33, 1.0, |x, _| V3::new(x, 0.0, 0.0));
        assert!(matches!(surface_diagnostics(&f, 1.0), Err(Error::Degenerate(_))));
    }

    #[test]
    fn interaction_of_two_unit_bubbles() {
        let d = 3.0;
        let m = interaction_matrix(&[[0.0, 0.0], [d, 0.0]], &[1.0, 1.0]).unwrap();
        let want = 1.0 / (2.0 + 2.0 * d * d);
        assert!((m.t[0][1] - want).abs() < 1e-15 && (m.t[1][0] - want).abs() < 1e-15);
        assert_eq!(m.t[0][0], 0.0);
        assert!((m.t_max - want).abs() < 1e-15);
        assert!(interaction_matrix(&[[0.0, 0.0]], &[0.0]).is_err());
    }

    #[test]
    fn shrinking_or_separating_kills_interaction() {
        let small = interaction_matrix(&[[0.0, 0.0], [1.0, 0.0]], &[1.0, 1e-6]).unwrap();
        assert!(small.t[0][1] < 1e-5);
        let mut last = f64::INFINITY;
        let mut last_orth = 0.0;
        for k in 1..8 {
            let m = interaction_matrix(&[[0.0, 0.0], [0.0, 0.0]], &[1.0, 10f64.powi(-k)]).unwrap();
            assert!(m.min_orthogonality() > last_orth);
            assert!(m.t[0][1] < last);
            last = m.t[0][1];
            last_orth = m.min_orthogonality();
        }
    }

    #[test]
    fn exact_ensembles_have_no_defect() {
        let bs = [SimpleBubble::new([0.5, 0.0], 0.5), SimpleBubble::new([-1.0, 0.5], 0.2)];
        let f = Field2D::from_fn3(101, 3.0, |x, y| bs.iter().map(|b| eval_bubble(b, x, y)).sum());
        assert!(weighted_sup_defect(&f, &bs) < 1e-10);
    }

    #[test]
    fn lone_bubble_defect_is_order_one() {
        let f = SimpleBubble::identity().sample(201, 5.0);
        let d = weighted_sup_defect(&f, &[]);
        // sqrt(1 + r^2) |∇ω| peaks at the origin with value 2 sqrt 2.
        assert!((d - 2.0 * 2f64.sqrt()).abs() < 1e-2, "{d}");
    }

    #[test]
    fn noise_moves_the_defect_by_at_most_its_size() {
        let b = SimpleBubble::identity();
        let f = b.sample(101, 4.0);
        let eta = 1e-3;
        let noisy = Field2D::from_fn3(101, 4.0, |x, y| eval_bubble(&b, x, y) + V3::new(eta * x.sin(), 0.0, 0.0));
        let base = weighted_sup_defect(&f, &[b.clone()]);
        let moved = weighted_sup_defect(&noisy, &[b]);
        // min d_i ≤ d_0 ≤ sqrt(1 + 2 L^2) on the chart.
        assert!(moved <= base + eta * (1.0 + 32.0f64).sqrt() + 1e-12);
    }
}
