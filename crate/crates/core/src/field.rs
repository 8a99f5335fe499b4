//! Uniform grids on the square chart `[-L, L]^2`.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type V3 = Vector3<f64>;

/// Samples of a map from the square `[-L, L]^2` to `R^dim`.
///
/// Point `(i, j)` sits at `(-L + i h, -L + j h)` with `h = 2L / (n - 1)`.
/// Storage is x-fastest with the components of a point contiguous.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Field2D {
    pub n: usize,
    pub half_width: f64,
    pub dim: usize,
    pub data: Vec<f64>,
}

impl Field2D {
    pub fn zeros(n: usize, half_width: f64, dim: usize) -> Self {
        Field2D { n, half_width, dim, data: vec![0.0; n * n * dim] }
    }

    pub fn from_fn3(n: usize, half_width: f64, f: impl Fn(f64, f64) -> V3) -> Self {
        let mut out = Self::zeros(n, half_width, 3);
        let h = out.h();
        for j in 0..n {
            for i in 0..n {
                let v = f(-half_width + i as f64 * h, -half_width + j as f64 * h);
                let k = 3 * (j * n + i);
                out.data[k..k + 3].copy_from_slice(v.as_slice());
            }
        }
        out
    }

    pub fn from_fn1(n: usize, half_width: f64, f: impl Fn(f64, f64) -> f64) -> Self {
        let mut out = Self::zeros(n, half_width, 1);
        let h = out.h();
        for j in 0..n {
            for i in 0..n {
                out.data[j * n + i] = f(-half_width + i as f64 * h, -half_width + j as f64 * h);
            }
        }
        out
    }

    pub fn h(&self) -> f64 {
        2.0 * self.half_width / (self.n - 1) as f64
    }

    pub fn coord(&self, i: usize) -> f64 {
        -self.half_width + i as f64 * self.h()
    }

    pub fn point(&self, i: usize, j: usize) -> (f64, f64) {
        (self.coord(i), self.coord(j))
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> &[f64] {
        let k = self.dim * (j * self.n + i);
        &self.data[k..k + self.dim]
    }

    #[inline]
    pub fn at_mut(&mut self, i: usize, j: usize) -> &mut [f64] {
        let k = self.dim * (j * self.n + i);
        &mut self.data[k..k + self.dim]
    }

    #[inline]
    pub fn v3(&self, i: usize, j: usize) -> V3 {
        let s = self.at(i, j);
        V3::new(s[0], s[1], s[2])
    }

    #[inline]
    pub fn s(&self, i: usize, j: usize) -> f64 {
        self.data[j * self.n + i]
    }

    pub fn set_v3(&mut self, i: usize, j: usize, v: V3) {
        self.at_mut(i, j).copy_from_slice(v.as_slice());
    }

    pub fn require(&self, dim: usize, min_n: usize) -> Result<()> {
        if self.dim != dim {
            return Err(Error::WrongDimension { expected: dim, got: self.dim });
        }
        if self.n < min_n {
            return Err(Error::GridTooSmall { min: min_n, got: self.n });
        }
        Ok(())
    }

    /// Central differences at an interior point, one value per component.
    pub fn grad(&self, i: usize, j: usize) -> (Vec<f64>, Vec<f64>) {
        let inv = 0.5 / self.h();
        let (e, w, nn, s) = (self.at(i + 1, j), self.at(i - 1, j), self.at(i, j + 1), self.at(i, j - 1));
        let dx = (0..self.dim).map(|c| (e[c] - w[c]) * inv).collect();
        let dy = (0..self.dim).map(|c| (nn[c] - s[c]) * inv).collect();
        (dx, dy)
    }

    pub fn grad3(&self, i: usize, j: usize) -> (V3, V3) {
        let inv = 0.5 / self.h();
        (
            (self.v3(i + 1, j) - self.v3(i - 1, j)) * inv,
            (self.v3(i, j + 1) - self.v3(i, j - 1)) * inv,
        )
    }

    /// Second-order differences at any grid point, one-sided on the edges.
    pub fn grad3_any(&self, i: usize, j: usize) -> (V3, V3) {
        let h = self.h();
        let n = self.n;
        let d = |at: &dyn Fn(usize) -> V3, k: usize| {
            if k == 0 {
                (at(0) * -3.0 + at(1) * 4.0 - at(2)) / (2.0 * h)
            } else if k == n - 1 {
                (at(n - 1) * 3.0 - at(n - 2) * 4.0 + at(n - 3)) / (2.0 * h)
            } else {
                (at(k + 1) - at(k - 1)) / (2.0 * h)
            }
        };
        (d(&|k| self.v3(k, j), i), d(&|k| self.v3(i, k), j))
    }

    /// Five-point Laplacian at an interior point.
    pub fn lap3(&self, i: usize, j: usize) -> V3 {
        let h2 = self.h() * self.h();
        (self.v3(i + 1, j) + self.v3(i - 1, j) + self.v3(i, j + 1) + self.v3(i, j - 1) - 4.0 * self.v3(i, j)) / h2
    }

    pub fn lap1(&self, i: usize, j: usize) -> f64 {
        let h2 = self.h() * self.h();
        (self.s(i + 1, j) + self.s(i - 1, j) + self.s(i, j + 1) + self.s(i, j - 1) - 4.0 * self.s(i, j)) / h2
    }

    /// Pointwise difference `self - other` on the same grid.
    pub fn sub(&self, other: &Field2D) -> Field2D {
        assert_eq!((self.n, self.dim), (other.n, other.dim), "grids differ");
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect();
        Field2D { data, ..self.clone() }
    }

    /// Every `stride`-th point, keeping the chart.
    pub fn coarsen(&self, stride: usize) -> Field2D {
        assert!(stride >= 1 && (self.n - 1) % stride == 0, "stride must divide n - 1");
        let m = (self.n - 1) / stride + 1;
        let mut out = Field2D::zeros(m, self.half_width, self.dim);
        for j in 0..m {
            for i in 0..m {
                let src = self.at(i * stride, j * stride).to_vec();
                out.at_mut(i, j).copy_from_slice(&src);
            }
        }
        out
    }
}

/// Max and discrete L2 norm of a pointwise quantity over interior points.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Norms {
    pub max: f64,
    pub l2: f64,
}

impl Norms {
    pub fn from_values(values: impl IntoIterator<Item = f64>, cell_area: f64) -> Self {
        let (mut max, mut sq) = (0.0f64, 0.0);
        for v in values {
            max = max.max(v.abs());
            sq += v * v;
        }
        Norms { max, l2: (sq * cell_area).sqrt() }
    }
}

/// Named defect norms of a field against a model equation.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    pub residual: Norms,
    /// `<f_x, f_y>`
    pub conformal_dot: Norms,
    /// `|f_x|^2 - |f_y|^2`
    pub conformal_diff: Norms,
    /// Weighted sup remainder when a bubble ensemble is involved.
    pub weighted_sup: Option<f64>,
}

/// Interior residual field plus conformality defects, for vector fields.
pub(crate) fn report_from(
    f: &Field2D,
    residual: impl Fn(usize, usize) -> V3,
) -> (ResidualReport, Field2D) {
    let n = f.n;
    let mut res = Field2D::zeros(n, f.half_width, 3);
    let (mut r, mut d, mut q) = (Vec::new(), Vec::new(), Vec::new());
    for j in 1..n - 1 {
        for i in 1..n - 1 {
            let v = residual(i, j);
            res.set_v3(i, j, v);
            r.push(v.norm());
            let (fx, fy) = f.grad3(i, j);
            d.push(fx.dot(&fy));
            q.push(fx.norm_squared() - fy.norm_squared());
        }
    }
    let a = f.h() * f.h();
    let report = ResidualReport {
        residual: Norms::from_values(r, a),
        conformal_dot: Norms::from_values(d, a),
        conformal_diff: Norms::from_values(q, a),
        weighted_sup: None,
    };
    (report, res)
}
