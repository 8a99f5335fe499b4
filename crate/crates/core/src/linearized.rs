//! The linearized H-system at the standard bubble: its frame
//! decomposition, the scalar reduction and its three-dimensional kernel.
//!
//! With the analyst's Laplacian the scalar operator is
//! `Δα + 8/(1+|x|^2)^2 α`; the kernel elements ψ₀, ψ₁, ψ₂ satisfy
//! `Δψ = -8/(1+|x|^2)^2 ψ`. Written with the positive (geometer's)
//! Laplacian this is the familiar `Δψ = 8/(1+|x|^2)^2 ψ`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bubble::SimpleBubble;
use crate::error::{Error, Result};
use crate::field::{Field2D, Norms, ResidualReport};
use crate::sparse;

fn potential(x: f64, y: f64) -> f64 {
    let d = 1.0 + x * x + y * y;
    8.0 / (d * d)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelElement {
    /// `(1 - |x|^2) / (1 + |x|^2)`, the dilation mode.
    Psi0,
    /// `x_1 / (1 + |x|^2)`
    Psi1,
    /// `x_2 / (1 + |x|^2)`
    Psi2,
}

impl KernelElement {
    pub const ALL: [KernelElement; 3] = [KernelElement::Psi0, KernelElement::Psi1, KernelElement::Psi2];

    pub fn eval(self, x: f64, y: f64) -> f64 {
        let d = 1.0 + x * x + y * y;
        match self {
            KernelElement::Psi0 => (1.0 - x * x - y * y) / d,
            KernelElement::Psi1 => x / d,
            KernelElement::Psi2 => y / d,
        }
    }

    pub fn sample(self, n: usize, half_width: f64) -> Field2D {
        Field2D::from_fn1(n, half_width, |x, y| self.eval(x, y))
    }
}

/// Interior residual of `Δα + 8/(1+|x|^2)^2 α`.
pub fn schroedinger_residual(alpha: &Field2D) -> Result<ResidualReport> {
    alpha.require(1, 5)?;
    let mut r = Vec::new();
    for j in 1..alpha.n - 1 {
        for i in 1..alpha.n - 1 {
            let (x, y) = alpha.point(i, j);
            r.push(alpha.lap1(i, j) + potential(x, y) * alpha.s(i, j));
        }
    }
    Ok(ResidualReport { residual: Norms::from_values(r, alpha.h() * alpha.h()), ..Default::default() })
}

/// Coefficients of `∇r` in the orthogonal frame `(ω_x, ω_y, ω_x × ω_y)`:
/// `r_x = a ω_x + b ω_y + c N`, `r_y = d ω_x + e ω_y + f N`.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameCoefficients {
    pub a: Field2D,
    pub b: Field2D,
    pub c: Field2D,
    pub d: Field2D,
    pub e: Field2D,
    pub f: Field2D,
}

/// Differences are central inside and one-sided on the edges.
pub fn frame_decompose(r: &Field2D, bubble: &SimpleBubble) -> Result<FrameCoefficients> {
    r.require(3, 3)?;
    let n = r.n;
    let mut out: Vec<Field2D> = (0..6).map(|_| Field2D::zeros(n, r.half_width, 1)).collect();
    for j in 0..n {
        for i in 0..n {
            let (x, y) = r.point(i, j);
            let (_, wx, wy) = bubble.jet(x, y);
            let nrm = wx.cross(&wy);
            let (sx, sy, sn) = (wx.norm_squared(), wy.norm_squared(), nrm.norm_squared());
            if sx.min(sy) < 1e-14 {
                return Err(Error::FrameDegenerate(i, j));
            }
            let (rx, ry) = r.grad3_any(i, j);
            let k = j * n + i;
            out[0].data[k] = rx.dot(&wx) / sx;
            out[1].data[k] = rx.dot(&wy) / sy;
            out[2].data[k] = rx.dot(&nrm) / sn;
            out[3].data[k] = ry.dot(&wx) / sx;
            out[4].data[k] = ry.dot(&wy) / sy;
            out[5].data[k] = ry.dot(&nrm) / sn;
        }
    }
    let mut it = out.into_iter();
    let mut next = || it.next().unwrap();
    Ok(FrameCoefficients { a: next(), b: next(), c: next(), d: next(), e: next(), f: next() })
}

impl FrameCoefficients {
    /// Largest gap between `∇r` and its rebuilt frame expansion.
    pub fn reconstruction_error(&self, r: &Field2D, bubble: &SimpleBubble) -> f64 {
        let mut worst = 0.0f64;
        for j in 0..r.n {
            for i in 0..r.n {
                let (x, y) = r.point(i, j);
                let (_, wx, wy) = bubble.jet(x, y);
                let nrm = wx.cross(&wy);
                let k = j * r.n + i;
                let rx = wx * self.a.data[k] + wy * self.b.data[k] + nrm * self.c.data[k];
                let ry = wx * self.d.data[k] + wy * self.e.data[k] + nrm * self.f.data[k];
                let (gx, gy) = r.grad3_any(i, j);
                worst = worst.max((rx - gx).norm()).max((ry - gy).norm());
            }
        }
        worst
    }
}

/// Defects of the frame relations satisfied by solutions of the linearized
/// system, measured away from the grid edge.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PlinReport {
    /// `Δr - 2(r_x × ω_y + ω_x × r_y)`
    pub linear_residual: f64,
    /// `e - a`
    pub e_minus_a: f64,
    /// `d + b`
    pub d_plus_b: f64,
    /// `Δa + |∇ω|^2 a`
    pub laplace_a: f64,
    /// `Δb + |∇ω|^2 b`
    pub laplace_b: f64,
    /// `c - (2/|∇ω|^2)(-a_x + b_y)`
    pub c_relation: f64,
    /// `f - (2/|∇ω|^2)(-b_x - a_y)`
    pub f_relation: f64,
}

impl PlinReport {
    pub fn worst(&self) -> f64 {
        [self.e_minus_a, self.d_plus_b, self.laplace_a, self.laplace_b, self.c_relation, self.f_relation]
            .into_iter()
            .fold(0.0, f64::max)
    }

    pub fn conformal_relations_hold(&self, tol: f64) -> bool {
        self.e_minus_a <= tol && self.d_plus_b <= tol
    }
}

/// Check the frame relations for a field `r`. With `tau` set, fields whose
/// linearized-system residual exceeds it are refused.
pub fn plin_check(r: &Field2D, bubble: &SimpleBubble, tau: Option<f64>) -> Result<PlinReport> {
    r.require(3, 7)?;
    let fc = frame_decompose(r, bubble)?;
    let n = r.n;
    let h = r.h();
    let mut rep = PlinReport::default();
    for j in 2..n - 2 {
        for i in 2..n - 2 {
            let (x, y) = r.point(i, j);
            let (_, wx, wy) = bubble.jet(x, y);
            let g2 = wx.norm_squared() + wy.norm_squared();
            let (rx, ry) = r.grad3(i, j);
            let lin = r.lap3(i, j) - 2.0 * (rx.cross(&wy) + wx.cross(&ry));
            rep.linear_residual = rep.linear_residual.max(lin.norm());
            let k = j * n + i;
            let at = |f: &Field2D, di: isize, dj: isize| f.s((i as isize + di) as usize, (j as isize + dj) as usize);
            let dx = |f: &Field2D| (at(f, 1, 0) - at(f, -1, 0)) / (2.0 * h);
            let dy = |f: &Field2D| (at(f, 0, 1) - at(f, 0, -1)) / (2.0 * h);
            rep.e_minus_a = rep.e_minus_a.max((fc.e.data[k] - fc.a.data[k]).abs());
            rep.d_plus_b = rep.d_plus_b.max((fc.d.data[k] + fc.b.data[k]).abs());
            rep.laplace_a = rep.laplace_a.max((fc.a.lap1(i, j) + g2 * fc.a.data[k]).abs());
            rep.laplace_b = rep.laplace_b.max((fc.b.lap1(i, j) + g2 * fc.b.data[k]).abs());
            let c = 2.0 / g2 * (-dx(&fc.a) + dy(&fc.b));
            let f = 2.0 / g2 * (-dx(&fc.b) - dy(&fc.a));
            rep.c_relation = rep.c_relation.max((fc.c.data[k] - c).abs());
            rep.f_relation = rep.f_relation.max((fc.f.data[k] - f).abs());
        }
    }
    if let Some(t) = tau {
        if rep.linear_residual > t {
            return Err(Error::NotLinearized(rep.linear_residual));
        }
    }
    Ok(rep)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelSpectrum {
    pub dimension: usize,
    /// Smallest singular values, ascending.
    pub singular_values: Vec<f64>,
    /// `singular_values[dimension] / singular_values[dimension - 1]`
    pub gap: f64,
    /// Relative distance of ψ₀, ψ₁, ψ₂ from the computed near-kernel, in
    /// the conformally weighted norm.
    pub subspace_errors: [f64; 3],
}

/// Grid points inside the disk and their unknown numbers.
struct DiskGrid {
    n: usize,
    h: f64,
    radius: f64,
    index: Vec<Option<usize>>,
    points: Vec<(usize, usize)>,
}

impl DiskGrid {
    fn new(radius: f64, n: usize) -> Self {
        let h = 2.0 * radius / (n - 1) as f64;
        let mut index = vec![None; n * n];
        let mut points = Vec::new();
        for j in 0..n {
            for i in 0..n {
                let (x, y) = (-radius + i as f64 * h, -radius + j as f64 * h);
                if x * x + y * y <= radius * radius {
                    index[j * n + i] = Some(points.len());
                    points.push((i, j));
                }
            }
        }
        DiskGrid { n, h, radius, index, points }
    }

    fn xy(&self, p: usize) -> (f64, f64) {
        let (i, j) = self.points[p];
        (-self.radius + i as f64 * self.h, -self.radius + j as f64 * self.h)
    }

    fn neighbour(&self, i: usize, j: usize, di: isize, dj: isize) -> Option<usize> {
        let (a, b) = (i as isize + di, j as isize + dj);
        if a < 0 || b < 0 || a >= self.n as isize || b >= self.n as isize {
            return None;
        }
        self.index[b as usize * self.n + a as usize]
    }
}

fn weight(x: f64, y: f64) -> f64 {
    let d = 1.0 + x * x + y * y;
    4.0 / (d * d)
}

/// `W^{-1/2} (Δ_h + 8/(1+r^2)^2) W^{-1/2}` on the disk, `W = 4/(1+r^2)^2`,
/// with missing neighbours dropped from the stencil (natural boundary).
fn weighted_operator(g: &DiskGrid) -> Vec<(usize, usize, f64)> {
    let inv_h2 = 1.0 / (g.h * g.h);
    let mut t = Vec::with_capacity(5 * g.points.len());
    for (p, &(i, j)) in g.points.iter().enumerate() {
        let (x, y) = g.xy(p);
        let sp = weight(x, y).sqrt();
        let mut diag = potential(x, y);
        for (di, dj) in [(1, 0), (-1, 0), (0, 1), (0, -1)] {
            if let Some(q) = g.neighbour(i, j, di, dj) {
                let (qx, qy) = g.xy(q);
                t.push((p, q, inv_h2 / (sp * weight(qx, qy).sqrt())));
                diag -= inv_h2;
            }
        }
        t.push((p, p, diag / (sp * sp)));
    }
    t
}

fn orthonormalize(cols: &mut [Vec<f64>]) {
    for k in 0..cols.len() {
        for _ in 0..2 {
            for m in 0..k {
                let d: f64 = cols[k].iter().zip(&cols[m]).map(|(a, b)| a * b).sum();
                let (head, tail) = cols.split_at_mut(k);
                for (a, b) in tail[0].iter_mut().zip(&head[m]) {
                    *a -= d * b;
                }
            }
        }
        let nrm = cols[k].iter().map(|a| a * a).sum::<f64>().sqrt();
        cols[k].iter_mut().for_each(|a| *a /= nrm);
    }
}

/// Smallest singular values of the discretized scalar operator on the disk
/// of radius `disc_radius`, by block inverse iteration with Rayleigh-Ritz.
///
/// The operator is conformally weighted so that it approximates
/// `Δ_{S^2} + 2` on the sphere, whose spectrum is `{2, 0, -4, -10, ...}`.
/// The natural boundary keeps ψ₀, which tends to -1 at infinity, resolved.
pub fn kernel_dimension(disc_radius: f64, grid_n: usize) -> Result<KernelSpectrum> {
    if grid_n < 64 {
        return Err(Error::GridTooSmall { min: 64, got: grid_n });
    }
    let g = DiskGrid::new(disc_radius, grid_n);
    let size = g.points.len();
    let t = weighted_operator(&g);
    let lu = sparse::factor(size, &t)?;
    let block = 10;
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut x: Vec<Vec<f64>> = (0..block).map(|_| (0..size).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
    orthonormalize(&mut x);
    let mut ritz = vec![0.0; block];
    let mut vecs = x.clone();
    for _ in 0..40 {
        x = lu.solve_columns(&x);
        orthonormalize(&mut x);
        let tx: Vec<Vec<f64>> = x.iter().map(|c| sparse::apply(size, &t, c)).collect();
        let hm = DMatrix::from_fn(block, block, |a, b| x[a].iter().zip(&tx[b]).map(|(p, q)| p * q).sum::<f64>());
        let eig = SymmetricEigen::new((&hm + hm.transpose()) * 0.5);
        let mut order: Vec<usize> = (0..block).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].abs().total_cmp(&eig.eigenvalues[b].abs()));
        let new_ritz: Vec<f64> = order.iter().map(|&k| eig.eigenvalues[k].abs()).collect();
        vecs = order
            .iter()
            .map(|&k| {
                let mut v = vec![0.0; size];
                for (a, col) in x.iter().enumerate() {
                    let c = eig.eigenvectors[(a, k)];
                    v.iter_mut().zip(col).for_each(|(o, p)| *o += c * p);
                }
                v
            })
            .collect();
        let settled = new_ritz.iter().zip(&ritz).take(6).all(|(a, b)| (a - b).abs() <= 1e-10 * (1.0 + a));
        ritz = new_ritz;
        x = vecs.clone();
        if settled {
            break;
        }
    }
    let candidates = 6;
    let (dimension, gap) = (1..candidates)
        .map(|d| (d, ritz[d] / ritz[d - 1].max(1e-300)))
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .unwrap();
    if gap < 10.0 {
        return Err(Error::NoSpectralGap);
    }
    let basis = &vecs[..dimension];
    let mut subspace_errors = [0.0; 3];
    for (slot, psi) in KernelElement::ALL.iter().enumerate() {
        let q: Vec<f64> = (0..size)
            .map(|p| {
                let (x, y) = g.xy(p);
                psi.eval(x, y) * weight(x, y).sqrt()
            })
            .collect();
        let mut rest = q.clone();
        for b in basis {
            let d: f64 = b.iter().zip(&q).map(|(a, c)| a * c).sum();
            rest.iter_mut().zip(b).for_each(|(r, v)| *r -= d * v);
        }
        let nq = q.iter().map(|a| a * a).sum::<f64>().sqrt();
        subspace_errors[slot] = rest.iter().map(|a| a * a).sum::<f64>().sqrt() / nq;
    }
    Ok(KernelSpectrum { dimension, singular_values: ritz, gap, subspace_errors })
}

/// Smallest `|μ|` with `L_k α = μ W α` for the Fourier mode `α(r) cos(kθ)`,
/// `L_k α = α'' + α'/r - k^2 α / r^2 + 8/(1+r^2)^2 α`, on `(0, radius)` with a
/// natural boundary at `radius`. For `k ≥ 2` this stays near 4, so no
/// decaying kernel element exists in those modes.
pub fn radial_mode_gap(k: usize, radius: f64, n: usize) -> f64 {
    let dr = radius / n as f64;
    let r = |i: usize| (i as f64 + 0.5) * dr;
    let face = |i: usize| i as f64 * dr;
    let kk = (k * k) as f64;
    // Symmetric form: multiply by r dr, then scale by (W r dr)^{-1/2}.
    let mass: Vec<f64> = (0..n).map(|i| weight(r(i), 0.0) * r(i) * dr).collect();
    let mut m = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        let mut diag = (potential(r(i), 0.0) - kk / (r(i) * r(i))) * r(i) * dr;
        if i + 1 < n {
            let c = face(i + 1) / dr;
            m[(i, i + 1)] = c;
            m[(i + 1, i)] = c;
            diag -= c;
        }
        if i > 0 {
            diag -= face(i) / dr;
        }
        m[(i, i)] = diag;
    }
    let s = DVector::from_iterator(n, mass.iter().map(|w| 1.0 / w.sqrt()));
    for i in 0..n {
        for j in 0..n {
            m[(i, j)] *= s[i] * s[j];
        }
    }
    SymmetricEigen::new(m).eigenvalues.iter().map(|v| v.abs()).fold(f64::INFINITY, f64::min)
}
