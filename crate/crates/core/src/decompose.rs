//! Bubble extraction: repeatedly locate where the weighted gradient of the
//! remainder peaks, seed a bubble there and fit it by least squares.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, Matrix3, Rotation3};
use serde::{Deserialize, Serialize};

use crate::bubble::{eval_bubble, SimpleBubble};
use crate::error::{Error, Result};
use crate::estimates::{
    dirichlet_energy, interaction_matrix, remainder, weighted_sup_of, InteractionMatrix,
};
use crate::field::{Field2D, Norms, ResidualReport, V3};

/// `|∇ω|` at the centre of the standard bubble.
const PEAK_GRADIENT: f64 = 2.0 * std::f64::consts::SQRT_2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExtractionStep {
    pub step: usize,
    /// Grid point where the weighted remainder gradient peaked.
    pub argmax: (usize, usize),
    pub seed_center: [f64; 2],
    pub seed_lambda: f64,
    /// Weighted sup defect before this bubble was added.
    pub defect_before: f64,
    /// Root mean square misfit on the fitting disk.
    pub fit_rms: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BubbleEnsemble {
    pub bubbles: Vec<SimpleBubble>,
    /// Smallest recovered scale, zero for an empty ensemble.
    pub eps: f64,
    pub interactions: InteractionMatrix,
    pub provenance: Vec<ExtractionStep>,
}

impl BubbleEnsemble {
    pub fn new(bubbles: Vec<SimpleBubble>, provenance: Vec<ExtractionStep>) -> Result<Self> {
        let centers: Vec<[f64; 2]> = bubbles.iter().map(|b| b.a).collect();
        let scales: Vec<f64> = bubbles.iter().map(|b| b.lambda).collect();
        let interactions = interaction_matrix(&centers, &scales)?;
        let eps = scales.iter().copied().fold(f64::INFINITY, f64::min);
        Ok(BubbleEnsemble { bubbles, eps: if eps.is_finite() { eps } else { 0.0 }, interactions, provenance })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("ensembles serialize")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExtractOptions {
    pub defect_threshold: f64,
    pub max_bubbles: usize,
    /// Smallest admissible `d_i(a_j)/λ_j + d_j(a_i)/λ_i`; two is the value
    /// for a bubble counted twice.
    pub orthogonality_threshold: f64,
}

impl Default for ExtractOptions {
    fn default() -> Self {
        ExtractOptions { defect_threshold: 1e-3, max_bubbles: 8, orthogonality_threshold: 4.0 }
    }
}

/// Bubble parameters plus an affine background, packed for the fit:
/// centre (2), log scale, rotation increment (3), shift (3), slope (6).
struct Fit {
    base_rot: Matrix3<f64>,
}

impl Fit {
    fn bubble(&self, p: &DVector<f64>) -> SimpleBubble {
        let rot = self.base_rot * Rotation3::new(V3::new(p[3], p[4], p[5])).matrix();
        SimpleBubble { a: [p[0], p[1]], lambda: p[2].exp(), theta: 0.0, rot, shift: V3::new(p[6], p[7], p[8]) }
    }

    fn model(&self, p: &DVector<f64>, b: &SimpleBubble, x: f64, y: f64) -> V3 {
        let (dx, dy) = (x - p[0], y - p[1]);
        eval_bubble(b, x, y) + V3::new(p[9], p[10], p[11]) * dx + V3::new(p[12], p[13], p[14]) * dy
    }

    fn residuals(&self, p: &DVector<f64>, pts: &[(f64, f64, V3)]) -> DVector<f64> {
        let b = self.bubble(p);
        let mut r = DVector::zeros(3 * pts.len());
        for (k, (x, y, v)) in pts.iter().enumerate() {
            let d = self.model(p, &b, *x, *y) - v;
            r[3 * k] = d.x;
            r[3 * k + 1] = d.y;
            r[3 * k + 2] = d.z;
        }
        r
    }
}

/// Levenberg-Marquardt fit of a bubble to `target` on the disk of radius
/// `3λ` about the seed. Returns the bubble and the rms misfit.
fn fit_bubble(target: &Field2D, seed: &SimpleBubble) -> (SimpleBubble, f64) {
    let h = target.h();
    let mut bubble = seed.clone();
    let mut rms = f64::INFINITY;
    // Two passes: the second re-centres the fitting disk on the first fit.
    for _ in 0..2 {
        let radius = 3.0 * bubble.lambda;
        let span = (radius / h).ceil() as isize;
        let ci = ((bubble.a[0] + target.half_width) / h).round() as isize;
        let cj = ((bubble.a[1] + target.half_width) / h).round() as isize;
        let stride = ((2 * span + 1) as f64 / 64.0).ceil().max(1.0) as isize;
        let mut pts = Vec::new();
        let n = target.n as isize;
        let mut j = (cj - span).max(0);
        while j <= (cj + span).min(n - 1) {
            let mut i = (ci - span).max(0);
            while i <= (ci + span).min(n - 1) {
                let (x, y) = target.point(i as usize, j as usize);
                if (x - bubble.a[0]).hypot(y - bubble.a[1]) <= radius {
                    pts.push((x, y, target.v3(i as usize, j as usize)));
                }
                i += stride;
            }
            j += stride;
        }
        let fit = Fit { base_rot: bubble.rot };
        let mut p = DVector::zeros(15);
        p[0] = bubble.a[0];
        p[1] = bubble.a[1];
        p[2] = bubble.lambda.ln();
        p[6] = bubble.shift.x;
        p[7] = bubble.shift.y;
        p[8] = bubble.shift.z;
        let mut r = fit.residuals(&p, &pts);
        let mut cost = r.norm_squared();
        let mut mu = 1e-3;
        for _ in 0..200 {
            let mut jac = DMatrix::zeros(r.len(), 15);
            for c in 0..15 {
                let step = 1e-7 * if c < 2 { bubble.lambda } else { 1.0 };
                let mut pp = p.clone();
                pp[c] += step;
                let mut pm = p.clone();
                pm[c] -= step;
                let col = (fit.residuals(&pp, &pts) - fit.residuals(&pm, &pts)) / (2.0 * step);
                jac.set_column(c, &col);
            }
            let jtj = jac.transpose() * &jac;
            let jtr = jac.transpose() * &r;
            let mut accepted = false;
            for _ in 0..30 {
                let mut a = jtj.clone();
                for d in 0..15 {
                    a[(d, d)] += mu * (jtj[(d, d)] + 1e-12);
                }
                let Some(delta) = a.lu().solve(&(-&jtr)) else {
                    mu *= 10.0;
                    continue;
                };
                let trial = &p + &delta;
                let rt = fit.residuals(&trial, &pts);
                let ct = rt.norm_squared();
                if ct < cost {
                    let small = delta.norm() <= 1e-13 * (1.0 + p.norm());
                    p = trial;
                    r = rt;
                    cost = ct;
                    mu = (mu * 0.3).max(1e-12);
                    accepted = !small;
                    break;
                }
                mu *= 10.0;
            }
            if !accepted || cost < 1e-30 {
                break;
            }
        }
        bubble = fit.bubble(&p);
        rms = (cost / r.len().max(1) as f64).sqrt();
    }
    (bubble, rms)
}

/// Seed from the remainder's value and gradient at the peak: the centre
/// of the standard bubble maps to the south pole with `ω_x = 2 e_1`,
/// `ω_y = 2 e_2`, so the gradient fixes the rotation and the scale.
fn seed_bubble(r: &Field2D, at: (usize, usize)) -> SimpleBubble {
    let (x, y) = r.point(at.0, at.1);
    let (gx, gy) = r.grad3(at.0, at.1);
    let g = (gx.norm_squared() + gy.norm_squared()).sqrt();
    let e1 = gx.normalize();
    let e2 = (gy - e1 * e1.dot(&gy)).normalize();
    let rot = Matrix3::from_columns(&[e1, e2, e1.cross(&e2)]);
    let shift = r.v3(at.0, at.1) + rot * V3::new(0.0, 0.0, 1.0);
    SimpleBubble { a: [x, y], lambda: PEAK_GRADIENT / g, theta: 0.0, rot, shift }
}

fn gradient_report(r: &Field2D, defect: f64) -> ResidualReport {
    let mut g = Vec::new();
    for j in 1..r.n - 1 {
        for i in 1..r.n - 1 {
            let (gx, gy) = r.grad3(i, j);
            g.push((gx.norm_squared() + gy.norm_squared()).sqrt());
        }
    }
    ResidualReport { residual: Norms::from_values(g, r.h() * r.h()), weighted_sup: Some(defect), ..Default::default() }
}

/// Extract bubbles from `f` until the weighted sup defect falls below the
/// threshold. Each new bubble is seeded at the lexicographically first grid
/// point maximizing `min_i d_i(x) |∇(f - Σ fitted)(x)|`, with scale
/// `2√2 / |∇(f - Σ fitted)|` there, and all bubbles are then refitted in
/// turn against `f` minus the others.
pub fn extract_bubbles(f: &Field2D, opts: &ExtractOptions) -> Result<(BubbleEnsemble, ResidualReport)> {
    f.require(3, 16)?;
    let h = f.h();
    let mut bubbles: Vec<SimpleBubble> = Vec::new();
    let mut provenance = Vec::new();
    loop {
        let r = remainder(f, &bubbles);
        let (defect, at) = weighted_sup_of(&r, &bubbles);
        if defect < opts.defect_threshold {
            let ens = BubbleEnsemble::new(bubbles, provenance)?;
            let rep = gradient_report(&r, defect);
            return Ok((ens, rep));
        }
        if bubbles.len() >= opts.max_bubbles {
            return Err(Error::NoConvergence(opts.max_bubbles));
        }
        let seed = seed_bubble(&r, at);
        if seed.lambda < 2.0 * h {
            return Err(Error::BelowResolution(seed.lambda));
        }
        let (fitted, rms) = fit_bubble(&r, &seed);
        if fitted.lambda < 2.0 * h {
            return Err(Error::BelowResolution(fitted.lambda));
        }
        provenance.push(ExtractionStep {
            step: bubbles.len(),
            argmax: at,
            seed_center: seed.a,
            seed_lambda: seed.lambda,
            defect_before: defect,
            fit_rms: rms,
        });
        bubbles.push(fitted);
        for _ in 0..3 {
            for k in 0..bubbles.len() {
                let others: Vec<SimpleBubble> =
                    bubbles.iter().enumerate().filter(|(m, _)| *m != k).map(|(_, b)| b.clone()).collect();
                let target = remainder(f, &others);
                let (b, rms) = fit_bubble(&target, &bubbles[k]);
                bubbles[k] = b;
                provenance[k].fit_rms = rms;
            }
        }
        let ens = BubbleEnsemble::new(bubbles.clone(), vec![])?;
        for i in 0..bubbles.len() {
            for j in i + 1..bubbles.len() {
                let o = ens.interactions.orthogonality(i, j);
                if o < opts.orthogonality_threshold {
                    return Err(Error::Degenerate(format!(
                        "bubbles {i} and {j} are not separated (orthogonality {o:.3})"
                    )));
                }
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecompositionReport {
    /// Per bubble: sup distance and scaled gradient distance between the
    /// field and the ensemble on the annulus `λ ≤ |z - a| ≤ 3λ`.
    pub local_c0: Vec<f64>,
    pub local_c1: Vec<f64>,
    /// Smallest pairwise orthogonality value.
    pub orthogonality: f64,
    pub orthogonality_ok: bool,
    /// Weighted sup defect.
    pub weighted_sup: f64,
    /// `‖∇(f - Σ bubbles)‖_2`
    pub gradient_l2: f64,
}

/// Numeric proxies for local convergence to each bubble, separation,
/// weighted sup smallness and energy splitting.
pub fn check_decomposition(f: &Field2D, e: &BubbleEnsemble, orthogonality_threshold: f64) -> DecompositionReport {
    let r = remainder(f, &e.bubbles);
    let h = r.h();
    let (mut c0, mut c1) = (Vec::new(), Vec::new());
    for b in &e.bubbles {
        let (mut m0, mut m1) = (0.0f64, 0.0f64);
        for j in 1..r.n - 1 {
            for i in 1..r.n - 1 {
                let (x, y) = r.point(i, j);
                let d = (x - b.a[0]).hypot(y - b.a[1]);
                if d >= b.lambda && d <= 3.0 * b.lambda {
                    let (gx, gy) = r.grad3(i, j);
                    m0 = m0.max(r.v3(i, j).norm());
                    m1 = m1.max(b.lambda * (gx.norm_squared() + gy.norm_squared()).sqrt());
                }
            }
        }
        c0.push(m0);
        c1.push(m1);
    }
    let (defect, _) = weighted_sup_of(&r, &e.bubbles);
    let mut sq = 0.0;
    for j in 1..r.n - 1 {
        for i in 1..r.n - 1 {
            let (gx, gy) = r.grad3(i, j);
            sq += gx.norm_squared() + gy.norm_squared();
        }
    }
    let orth = e.interactions.min_orthogonality();
    DecompositionReport {
        local_c0: c0,
        local_c1: c1,
        orthogonality: orth,
        orthogonality_ok: orth >= orthogonality_threshold,
        weighted_sup: defect,
        gradient_l2: (sq * h * h).sqrt(),
    }
}

/// Largest weighted sup defect at which energy counting is meaningful.
pub const QUANTIZATION_DEFECT_LIMIT: f64 = 1e-2;

/// Dirichlet energy of `f` over `8π` times the number of bubbles; one for
/// an empty ensemble on a field without energy.
pub fn energy_quantization_check(e: &BubbleEnsemble, f: &Field2D) -> Result<f64> {
    let r = remainder(f, &e.bubbles);
    let (defect, _) = weighted_sup_of(&r, &e.bubbles);
    if defect > QUANTIZATION_DEFECT_LIMIT {
        return Err(Error::DefectTooLarge(defect));
    }
    let energy = dirichlet_energy(f)?;
    let quantum = 8.0 * PI * e.bubbles.len() as f64;
    if quantum == 0.0 {
        return Ok(if energy < 1e-12 { 1.0 } else { f64::INFINITY });
    }
    Ok(energy / quantum)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimates::weighted_sup_defect;

    fn tilted(a: [f64; 2], lambda: f64) -> SimpleBubble {
        let mut b = SimpleBubble::new(a, lambda);
        b.rot = *Rotation3::from_euler_angles(0.3, -0.2, 0.7).matrix();
        b.shift = V3::new(0.1, 0.0, -0.2);
        b
    }

    fn sum_field(bs: &[SimpleBubble], n: usize, l: f64) -> Field2D {
        Field2D::from_fn3(n, l, |x, y| bs.iter().map(|b| eval_bubble(b, x, y)).sum())
    }

    #[test]
    fn recovers_a_single_bubble() {
        let truth = tilted([0.31, -0.22], 0.8);
        let f = sum_field(&[truth.clone()], 161, 4.0);
        let (e, rep) = extract_bubbles(&f, &ExtractOptions::default()).unwrap();
        assert_eq!(e.bubbles.len(), 1);
        let b = &e.bubbles[0];
        assert!((b.a[0] - truth.a[0]).hypot(b.a[1] - truth.a[1]) < f.h());
        assert!((b.lambda / truth.lambda - 1.0).abs() < 0.02);
        assert!(rep.weighted_sup.unwrap() < 1e-6, "{rep:?}");
        assert_eq!(e.provenance.len(), 1);
    }

    #[test]
    fn recovers_two_bubbles_tallest_first() {
        let big = tilted([-0.5, 0.0], 1.0);
        let small = SimpleBubble::new([1.5, 0.0], 0.05);
        let f = sum_field(&[big.clone(), small.clone()], 801, 4.0);
        let (e, rep) = extract_bubbles(&f, &ExtractOptions::default()).unwrap();
        assert_eq!(e.bubbles.len(), 2, "{:?}", e.provenance);
        for (got, want) in e.bubbles.iter().zip([&small, &big]) {
            assert!((got.a[0] - want.a[0]).hypot(got.a[1] - want.a[1]) < f.h());
            assert!((got.lambda / want.lambda - 1.0).abs() < 0.02);
        }
        assert!(rep.weighted_sup.unwrap() < 1e-3);
        let d = check_decomposition(&f, &e, 4.0);
        assert!(d.local_c0.iter().chain(&d.local_c1).all(|&v| v < 1e-8), "{d:?}");
        assert!(d.gradient_l2 < 1e-8 && d.orthogonality_ok);
    }

    #[test]
    fn smooth_small_fields_have_no_bubbles() {
        let f = Field2D::from_fn3(65, 2.0, |x, y| V3::new(1e-5 * (x + y).sin(), 1e-5 * x * y, 0.3));
        let (e, rep) = extract_bubbles(&f, &ExtractOptions::default()).unwrap();
        assert!(e.bubbles.is_empty() && e.eps == 0.0);
        assert!(rep.weighted_sup.unwrap() < 1e-3);
    }

    #[test]
    fn extraction_is_idempotent() {
        let truth = tilted([0.0, 0.2], 0.6);
        let f = sum_field(&[truth], 161, 4.0);
        let (e, _) = extract_bubbles(&f, &ExtractOptions::default()).unwrap();
        let rest = remainder(&f, &e.bubbles);
        let (again, _) = extract_bubbles(&rest, &ExtractOptions::default()).unwrap();
        assert!(again.bubbles.is_empty());
    }

    #[test]
    fn unresolved_scales_are_refused() {
        let f = sum_field(&[SimpleBubble::new([0.0, 0.0], 0.01)], 81, 2.0);
        assert!(matches!(extract_bubbles(&f, &ExtractOptions::default()), Err(Error::BelowResolution(_))));
    }

    #[test]
    fn gradient_norm_of_a_known_remainder() {
        let b = SimpleBubble::identity();
        let eta = 0.01;
        let n = 401;
        let f = Field2D::from_fn3(n, 5.0, |x, y| eval_bubble(&b, x, y) + V3::new(eta * (-(x * x + y * y)).exp(), 0.0, 0.0));
        let e = BubbleEnsemble::new(vec![b], vec![]).unwrap();
        let d = check_decomposition(&f, &e, 4.0);
        let want = eta * PI.sqrt();
        assert!((d.gradient_l2 / want - 1.0).abs() < 0.02, "{} vs {want}", d.gradient_l2);
    }

    #[test]
    fn double_counting_is_flagged() {
        let b = SimpleBubble::identity();
        let f = b.sample(65, 4.0);
        let e = BubbleEnsemble::new(vec![b.clone(), b], vec![]).unwrap();
        let d = check_decomposition(&f, &e, 4.0);
        assert!((d.orthogonality - 2.0).abs() < 1e-12 && !d.orthogonality_ok);
    }

    #[test]
    fn energy_counts_bubbles() {
        let one = SimpleBubble::identity();
        let f = one.sample(1201, 60.0);
        let e = BubbleEnsemble::new(vec![one.clone()], vec![]).unwrap();
        let q = energy_quantization_check(&e, &f).unwrap();
        assert!((q - 1.0).abs() < 1e-3, "{q}");

        let bs = [SimpleBubble::new([-2.0, 0.0], 0.5), SimpleBubble::new([2.0, 0.0], 0.5)];
        let f = sum_field(&bs, 1201, 30.0);
        let e = BubbleEnsemble::new(bs.to_vec(), vec![]).unwrap();
        let q = energy_quantization_check(&e, &f).unwrap();
        assert!((q - 1.0).abs() < 1e-2, "{q}");

        let zero = Field2D::zeros(33, 1.0, 3);
        let empty = BubbleEnsemble::new(vec![], vec![]).unwrap();
        assert_eq!(energy_quantization_check(&empty, &zero).unwrap(), 1.0);
        assert!(matches!(energy_quantization_check(&empty, &f), Err(Error::DefectTooLarge(_))));
        assert!(weighted_sup_defect(&f, &e.bubbles) < 1e-10);
    }

    #[test]
    fn ensembles_round_trip_through_json() {
        let e = BubbleEnsemble::new(vec![tilted([0.1, 0.2], 0.3)], vec![]).unwrap();
        let back: BubbleEnsemble = serde_json::from_str(&e.to_json()).unwrap();
        assert_eq!(back.bubbles.len(), 1);
        assert!((back.bubbles[0].rot - e.bubbles[0].rot).abs().max() < 1e-15);
    }
}
