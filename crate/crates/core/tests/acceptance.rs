//! Acceptance run: one PASS/FAIL line per criterion, non-zero exit if any fail.

use std::f64::consts::PI;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use cmc_core::balancing::{
    balancing_closed_form, balancing_constants, balancing_integral, exact_fourth, exact_second, sphere_moments,
    SphereQuadrature,
};
use cmc_core::bubble::{bubble_energy, energy_radius, eval_bubble, RationalMap, SimpleBubble};
use cmc_core::corrected::{residual_order, Equation};
use cmc_core::curvature::{make_model, random_compliant, random_rotation, CurvatureData, ModelKind};
use cmc_core::decompose::{energy_quantization_check, extract_bubbles, ExtractOptions};
use cmc_core::estimates::{green_weight_bound, surface_diagnostics, wente_check, wente_corpus, WenteVariant};
use cmc_core::field::{Field2D, V3};
use cmc_core::linearized::kernel_dimension;
use cmc_core::solver::{drift_experiment, kernel_force, ForceGrid, SolveConfig};
use nalgebra::Rotation3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Relative error allowed on `8πk` for the quantized bubble energies.
const ENERGY_REL_TOL: f64 = 1e-5;
const ENERGY_BUDGET: Duration = Duration::from_secs(5);

/// Absolute error allowed on every second and fourth sphere moment.
const MOMENT_TOL: f64 = 1e-8;
const MOMENT_BUDGET: Duration = Duration::from_secs(1);

/// Halving ε should divide the uncorrected residual by 4 and the corrected
/// one by 8; the bands are relative.
const PLAIN_RATIO: f64 = 4.0;
const PLAIN_BAND: f64 = 0.25;
const CORRECTED_RATIO: f64 = 8.0;
const CORRECTED_BAND: f64 = 0.30;
const ORDER_GRID: usize = 256;
const ORDER_BUDGET: Duration = Duration::from_secs(60);

const KERNEL_RADIUS: f64 = 20.0;
const KERNEL_GRID: usize = 256;
const KERNEL_DIMENSION: usize = 3;
/// Fourth singular value over the third.
const KERNEL_GAP: f64 = 10.0;
/// Largest subspace distance of ψ₀, ψ₁, ψ₂ from the computed near-kernel.
const KERNEL_ANGLE: f64 = 5e-2;

const WENTE_FIELDS: usize = 50;
const WENTE_SEED: u64 = 2024;
/// Slack over the sharp constants `1/π` (disk) and `2/π` (plane), which
/// covers the discretization error of the finite-difference Jacobian.
const WENTE_SLACK: f64 = 0.02;

/// Largest spread of `lhs (1+|z0|) / ln(2+|z0|)` over the radii below.
const GREEN_SPREAD: f64 = 20.0;
const GREEN_RADII: [f64; 5] = [0.0, 1.0, 10.0, 100.0, 1000.0];
const GREEN_BUDGET: Duration = Duration::from_secs(10);

/// `δ sup|H|` of the round sphere is exactly 2.
const SPHERE_DELTA_H: f64 = 2.0;
const SPHERE_DELTA_H_TOL: f64 = 1e-3;
/// Simon's inequality on the round sphere has RHS/LHS = 4; this only asks
/// for clear slack and the value is printed.
const SIMON_MIN: f64 = 3.0;

/// Center error in grid cells, relative scale error and final weighted-sup
/// defect for the two-bubble recovery.
const CENTER_CELLS: f64 = 1.0;
const SCALE_REL: f64 = 0.02;
const DEFECT_MAX: f64 = 1e-3;
/// Total energy against `16π`, relative.
const TWO_BUBBLE_ENERGY_REL: f64 = 1e-2;

const BALANCING_MODELS: usize = 20;
const BALANCING_REL: f64 = 1e-6;
/// Anything below this multiple of the data scale counts as vanishing.
const BALANCING_ZERO: f64 = 1e-10;
const BALANCING_BUDGET: Duration = Duration::from_secs(5);

const DRIFT_EPS: [f64; 3] = [0.08, 0.04, 0.02];
const DRIFT_RATIO: f64 = 8.0;
const DRIFT_BAND: f64 = 0.30;
/// The dscal = 0 force must sit at least an order below the signal.
const DRIFT_ORDER_DROP: f64 = 0.1;
/// Measured force constant against the balancing constant `c₀`.
const DRIFT_C0_REL: f64 = 0.10;
const DRIFT_BUDGET: Duration = Duration::from_secs(600);

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn within(value: f64, target: f64, rel: f64) -> bool {
    (value / target - 1.0).abs() <= rel
}

fn c1_energy() -> Outcome {
    let start = Instant::now();
    let maps = [
        RationalMap::real(&[0.3, 1.0], &[1.0]).unwrap(),
        RationalMap::real(&[1.0, 0.0, 1.0], &[0.0, 2.0]).unwrap(),
        RationalMap::real(&[0.0, -1.0, 0.0, 1.0], &[0.5, 0.0, 1.0]).unwrap(),
    ];
    let mut worst = 0.0f64;
    let mut ok = true;
    for (k, r) in maps.iter().enumerate() {
        let k = k + 1;
        ok &= r.degree() == k;
        let target = 8.0 * PI * k as f64;
        let tol = 0.1 * ENERGY_REL_TOL * target;
        match bubble_energy(r, energy_radius(k, tol), tol) {
            Ok(e) => worst = worst.max((e / target - 1.0).abs()),
            Err(_) => ok = false,
        }
    }
    let t = start.elapsed();
    outcome(
        ok && worst <= ENERGY_REL_TOL && t < ENERGY_BUDGET,
        format!("worst relative error {worst:.2e} (tol {ENERGY_REL_TOL:.0e}), {:.2} s", t.as_secs_f64()),
    )
}

fn c2_moments() -> Outcome {
    let start = Instant::now();
    let (m2, m4) = sphere_moments(&SphereQuadrature::standard());
    let mut worst = 0.0f64;
    for a in 0..3 {
        for b in 0..3 {
            worst = worst.max((m2[a][b] - exact_second(a, b)).abs());
            for c in 0..3 {
                for d in 0..3 {
                    worst = worst.max((m4[a][b][c][d] - exact_fourth(a, b, c, d)).abs());
                }
            }
        }
    }
    let anchors = (m2[0][0] - 4.0 * PI / 3.0).abs().max((m4[0][0][1][1] - 4.0 * PI / 15.0).abs());
    let t = start.elapsed();
    outcome(
        worst <= MOMENT_TOL && anchors <= MOMENT_TOL && t < MOMENT_BUDGET,
        format!("worst moment error {worst:.2e}, 4π/3 and 4π/15 entries {anchors:.2e}, {:.3} s", t.as_secs_f64()),
    )
}

fn c3_order() -> Outcome {
    let start = Instant::now();
    let c = random_compliant(&mut ChaCha8Rng::seed_from_u64(3), 0.5);
    let base = SimpleBubble::identity().with_shift(V3::new(0.2, -0.1, 0.15));
    let eps = [0.08, 0.04];
    let plain = residual_order(&base, &c, &eps, false, Equation::Main3, ORDER_GRID, 3.0);
    let fixed = residual_order(&base, &c, &eps, true, Equation::Main3, ORDER_GRID, 3.0);
    let rp = plain[0].residual / plain[1].residual;
    let rc = fixed[0].residual / fixed[1].residual;
    let t = start.elapsed();
    outcome(
        within(rp, PLAIN_RATIO, PLAIN_BAND) && within(rc, CORRECTED_RATIO, CORRECTED_BAND) && t < ORDER_BUDGET,
        format!("uncorrected ratio {rp:.3}, corrected ratio {rc:.3}, {:.1} s", t.as_secs_f64()),
    )
}

fn c4_kernel() -> Outcome {
    match kernel_dimension(KERNEL_RADIUS, KERNEL_GRID) {
        Ok(s) => outcome(
            s.dimension == KERNEL_DIMENSION
                && s.gap >= KERNEL_GAP
                && s.subspace_errors.iter().all(|&e| e < KERNEL_ANGLE),
            format!("dimension {}, gap {:.1}, subspace errors {:.3?}", s.dimension, s.gap, s.subspace_errors),
        ),
        Err(e) => outcome(false, format!("error: {e}")),
    }
}

fn c5_wente() -> Outcome {
    let (mut disk, mut plane, mut violations) = (0.0f64, 0.0f64, 0);
    for v in wente_corpus(WENTE_FIELDS, 129, 3, WENTE_SEED) {
        let d = wente_check(&v, WenteVariant::DiskW1).map(|r| r.ratio).unwrap_or(f64::INFINITY);
        let p = wente_check(&v, WenteVariant::PlaneW2).map(|r| r.ratio).unwrap_or(f64::INFINITY);
        violations += usize::from(d > 1.0 / PI + WENTE_SLACK) + usize::from(p > 2.0 / PI + WENTE_SLACK);
        disk = disk.max(d);
        plane = plane.max(p);
    }
    outcome(
        violations == 0,
        format!(
            "max disk ratio {disk:.4} (bound {:.4}), max plane ratio {plane:.4} (bound {:.4}), {violations} violations",
            1.0 / PI + WENTE_SLACK,
            2.0 / PI + WENTE_SLACK
        ),
    )
}

fn c6_green() -> Outcome {
    let start = Instant::now();
    let ratios: Result<Vec<f64>, _> = GREEN_RADII.iter().map(|&a| green_weight_bound((a, 0.0)).map(|r| r.1)).collect();
    let t = start.elapsed();
    match ratios {
        Ok(r) => {
            let hi = r.iter().cloned().fold(f64::MIN, f64::max);
            let lo = r.iter().cloned().fold(f64::MAX, f64::min);
            outcome(
                lo > 0.0 && hi / lo <= GREEN_SPREAD && t < GREEN_BUDGET,
                format!("ratios {r:.3?}, spread {:.2}, {:.2} s", hi / lo, t.as_secs_f64()),
            )
        }
        Err(e) => outcome(false, format!("error: {e}")),
    }
}

fn c7_geometry() -> Outcome {
    let f = SimpleBubble::identity().sample(1601, 160.0);
    match surface_diagnostics(&f, 1.0) {
        Ok((d, ineq)) => {
            let dh = d.diameter * d.mean_curvature;
            outcome(
                (dh - SPHERE_DELTA_H).abs() <= SPHERE_DELTA_H_TOL && ineq.simon >= SIMON_MIN,
                format!("δ·sup|H| = {dh:.5}, Simon RHS/LHS = {:.3}", ineq.simon),
            )
        }
        Err(e) => outcome(false, format!("error: {e}")),
    }
}

fn c8_decomposition() -> Outcome {
    let mut big = SimpleBubble::new([-1.0, 0.0], 1.0);
    big.rot = *Rotation3::from_euler_angles(0.3, -0.2, 0.7).matrix();
    let small = SimpleBubble::new([1.5, 0.0], 0.05);
    let truth = [big, small];
    let f = Field2D::from_fn3(2401, 12.0, |x, y| truth.iter().map(|b| eval_bubble(b, x, y)).sum());
    let (e, rep) = match extract_bubbles(&f, &ExtractOptions::default()) {
        Ok(v) => v,
        Err(err) => return outcome(false, format!("extraction failed: {err}")),
    };
    if e.bubbles.len() != 2 {
        return outcome(false, format!("found {} bubbles", e.bubbles.len()));
    }
    let (mut center, mut scale) = (0.0f64, 0.0f64);
    for want in &truth {
        let got = e
            .bubbles
            .iter()
            .min_by(|a, b| {
                let da = (a.lambda / want.lambda).ln().abs();
                let db = (b.lambda / want.lambda).ln().abs();
                da.total_cmp(&db)
            })
            .unwrap();
        center = center.max((got.a[0] - want.a[0]).hypot(got.a[1] - want.a[1]) / f.h());
        scale = scale.max((got.lambda / want.lambda - 1.0).abs());
    }
    let defect = rep.weighted_sup.unwrap_or(f64::INFINITY);
    let energy = energy_quantization_check(&e, &f).map(|q| q * 16.0 * PI);
    let energy_err = energy.as_ref().map(|v| (v / (16.0 * PI) - 1.0).abs()).unwrap_or(f64::INFINITY);
    outcome(
        center <= CENTER_CELLS && scale <= SCALE_REL && defect < DEFECT_MAX && energy_err <= TWO_BUBBLE_ENERGY_REL,
        format!(
            "center error {center:.3} cells, scale error {scale:.2e}, defect {defect:.2e}, energy error {energy_err:.2e}"
        ),
    )
}

fn c9_balancing() -> Outcome {
    let start = Instant::now();
    let q = SphereQuadrature::standard();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let (mut closed_err, mut rot_err, mut smallest, mut balanced) = (0.0f64, 0.0f64, f64::MAX, 0.0f64);
    for _ in 0..BALANCING_MODELS {
        let c = random_compliant(&mut rng, 1.0);
        let b = balancing_integral(&c, &q);
        closed_err = closed_err.max((b - balancing_closed_form(&c)).norm() / b.norm());
        smallest = smallest.min(b.norm() / c.scale());
        let r = random_rotation(&mut rng);
        rot_err = rot_err.max((balancing_integral(&c.rotated(&r), &q) - r * b).norm() / b.norm());

        // Same Ricci tensor and trace-free jet, gradient of Scal removed.
        let mut extra = [[[0.0; 3]; 3]; 3];
        for v in extra.iter_mut().flatten().flatten() {
            *v = rng.gen_range(-1.0..1.0);
        }
        let flat_scal = ModelKind::QuadraticScal { ric: c.ric, dscal: [0.0; 3], dric_extra: Some(extra), synthetic: false };
        let z: CurvatureData = make_model(flat_scal).unwrap().base_point_curvature;
        balanced = balanced.max(balancing_integral(&z, &q).norm() / z.scale());
    }
    let t = start.elapsed();
    outcome(
        closed_err <= BALANCING_REL
            && rot_err <= BALANCING_REL
            && smallest > BALANCING_ZERO
            && balanced <= BALANCING_ZERO
            && t < BALANCING_BUDGET,
        format!(
            "closed-form error {closed_err:.2e}, rotation error {rot_err:.2e}, smallest |b| {smallest:.2e}, \
             dscal = 0 |b| {balanced:.2e}, {:.2} s",
            t.as_secs_f64()
        ),
    )
}

fn c10_drift() -> Outcome {
    let start = Instant::now();
    let scal = |d: f64| {
        make_model(ModelKind::QuadraticScal { ric: [[0.0; 3]; 3], dscal: [d, 0.0, 0.0], dric_extra: None, synthetic: false })
            .unwrap()
    };
    let metric = scal(1.0);
    let c = metric.base_point_curvature.clone();
    let cfg = SolveConfig { grid_n: 65, half_width: 6.0, ..SolveConfig::new(metric, 0.0) };
    let grid = ForceGrid::default();
    let out = match drift_experiment(&cfg, &DRIFT_EPS, grid) {
        Ok(o) if o.aborted.is_none() => o,
        Ok(o) => return outcome(false, format!("sweep aborted: {}", o.aborted.unwrap())),
        Err(e) => return outcome(false, format!("error: {e}")),
    };
    let ratios: Vec<f64> = out.rows.windows(2).map(|w| w[0].force.x / w[1].force.x).collect();
    let ratios_ok = ratios.iter().all(|&r| within(r, DRIFT_RATIO, DRIFT_BAND));

    let mut extra = [[[0.0; 3]; 3]; 3];
    extra[0][1][2] = 1.0;
    extra[1][2][0] = -0.5;
    extra[2][2][1] = 0.7;
    let ric = [[1.0, 0.2, 0.0], [0.2, -0.5, 0.1], [0.0, 0.1, 0.3]];
    let quiet = make_model(ModelKind::QuadraticScal { ric, dscal: [0.0; 3], dric_extra: Some(extra), synthetic: false })
        .unwrap()
        .base_point_curvature;
    let mut drop = 0.0f64;
    for r in &out.rows {
        let f = kernel_force(&quiet, r.eps, grid.grid_n, grid.half_width);
        drop = drop.max(f.norm() / r.force.norm());
    }

    let c0 = balancing_constants().c0;
    let mut c0_err = 0.0f64;
    for r in &out.rows {
        let measured = r.force.x / (r.eps.powi(3) * c.div_ric()[0]);
        c0_err = c0_err.max((measured / c0 - 1.0).abs());
    }
    let t = start.elapsed();
    outcome(
        ratios_ok && drop <= DRIFT_ORDER_DROP && c0_err <= DRIFT_C0_REL && t < DRIFT_BUDGET,
        format!(
            "ratios {ratios:.3?}, dscal = 0 force / signal ≤ {drop:.2e}, c₀ error {c0_err:.2e}, {:.1} s",
            t.as_secs_f64()
        ),
    )
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("bubble energy quantization", c1_energy),
        ("sphere moments", c2_moments),
        ("corrected-bubble order jump", c3_order),
        ("linearized kernel", c4_kernel),
        ("Wente constants", c5_wente),
        ("Green weight bound", c6_green),
        ("geometric inequalities", c7_geometry),
        ("decomposition recovery", c8_decomposition),
        ("balancing equivalence", c9_balancing),
        ("drift signal", c10_drift),
    ];
    let only: Option<usize> = std::env::var("CMC_ACCEPTANCE_ONLY").ok().and_then(|s| s.parse().ok());
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        if only.is_some_and(|k| k != i + 1) {
            continue;
        }
        let o = run();
        failed += usize::from(!o.pass);
        println!("{} {:>2} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, i + 1, o.detail);
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
