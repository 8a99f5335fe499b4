//! Named check suites for `cmc verify`.

use std::f64::consts::PI;

use clap::ValueEnum;
use cmc_core::balancing::{exact_fourth, exact_second, sphere_moments, SphereQuadrature};
use cmc_core::bubble::{hbubble_residual, omega_jet, SimpleBubble};
use cmc_core::corrected::{residual_order, Equation};
use cmc_core::curvature::{random_compliant, ricci_of, riemann_symmetry_defect, MetricModel};
use cmc_core::estimates::{green_gradient_represent, green_weight_bound, wente_check, wente_corpus, WenteVariant};
use cmc_core::field::{Field2D, V3};
use cmc_core::linearized::kernel_dimension;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::report::{Check, Report};

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Suite {
    Identities,
    Kernel,
    Wente,
    Green,
    Moments,
    CorrectedOrder,
}

impl Suite {
    pub fn name(self) -> &'static str {
        match self {
            Suite::Identities => "identities",
            Suite::Kernel => "kernel",
            Suite::Wente => "wente",
            Suite::Green => "green",
            Suite::Moments => "moments",
            Suite::CorrectedOrder => "corrected-order",
        }
    }
}

/// Seeds of the randomized suites; fixed so reports are reproducible.
pub const WENTE_SEED: u64 = 2024;
pub const CURVATURE_SEED: u64 = 3;

/// A report plus, for suites that produce one, a CSV table for `cmc plot`.
pub struct Outcome {
    pub report: Report,
    pub table: Option<String>,
}

pub fn run(suite: Suite, model: &MetricModel) -> Outcome {
    let (checks, table) = match suite {
        Suite::Identities => (identities(model), None),
        Suite::Kernel => kernel(),
        Suite::Wente => (wente(), None),
        Suite::Green => (green(), None),
        Suite::Moments => (moments(), None),
        Suite::CorrectedOrder => corrected_order(),
    };
    Outcome { report: Report::new(suite.name(), checks), table }
}

fn identities(model: &MetricModel) -> Vec<Check> {
    let c = &model.base_point_curvature;
    let tol = 1e-12 * c.scale();
    let ric = ricci_of(&c.riem);
    let ric_gap = (0..3).flat_map(|a| (0..3).map(move |b| (a, b))).map(|(a, b)| (ric[a][b] - c.ric[a][b]).abs()).fold(0.0, f64::max);
    let scal: f64 = (0..3).map(|a| c.ric[a][a]).sum();
    let mut checks = vec![
        Check::close("riemann symmetries", riemann_symmetry_defect(&c.riem), 0.0, tol),
        Check::close("ricci is the riemann trace", ric_gap, 0.0, tol),
        Check::close("scalar curvature is the ricci trace", scal, c.scal, tol),
        Check::close("second bianchi identity", c.second_bianchi_defect(), 0.0, tol),
    ];
    if c.bianchi {
        checks.push(Check::close("contracted bianchi identity", c.bianchi_defect(), 0.0, tol));
    }
    let b = SimpleBubble::new([0.1, -0.2], 0.8);
    match (hbubble_residual(&b.sample(129, 3.0)), hbubble_residual(&b.sample(257, 3.0))) {
        (Ok(coarse), Ok(fine)) => {
            checks.push(Check::relative("bubble residual halving ratio", coarse.residual.max / fine.residual.max, 4.0, 0.25))
        }
        _ => checks.push(Check::failed("bubble residual", "grid refused")),
    }
    checks
}

fn kernel() -> (Vec<Check>, Option<String>) {
    match kernel_dimension(20.0, 256) {
        Ok(s) => {
            let mut checks = vec![
                Check::close("near-kernel dimension", s.dimension as f64, 3.0, 0.0),
                Check::at_least("spectral gap", s.gap, 10.0),
            ];
            for (k, e) in s.subspace_errors.iter().enumerate() {
                checks.push(Check::at_most(&format!("psi{k} subspace distance"), *e, 5e-2));
            }
            let mut table = String::from("index,singular_value\n");
            for (i, v) in s.singular_values.iter().enumerate() {
                table.push_str(&format!("{},{:e}\n", i + 1, v));
            }
            (checks, Some(table))
        }
        Err(e) => (vec![Check::failed("kernel spectrum", &e.to_string())], None),
    }
}

fn wente() -> Vec<Check> {
    let mut worst = [0.0f64; 4];
    let mut errors = Vec::new();
    for v in wente_corpus(50, 129, 3, WENTE_SEED) {
        for (k, variant) in WenteVariant::ALL.iter().enumerate() {
            match wente_check(&v, *variant) {
                Ok(r) => worst[k] = worst[k].max(r.ratio),
                Err(e) => errors.push(e.to_string()),
            }
        }
    }
    let mut checks = vec![
        Check::at_most("disk Wente ratio (max over corpus)", worst[0], 1.0 / PI + 0.02),
        Check::at_most("plane Wente ratio (max over corpus)", worst[1], 2.0 / PI + 0.02),
        Check::info("sup gradient constant (max over corpus)", worst[2], 0.0),
        Check::info("trilinear constant (max over corpus)", worst[3], 0.0),
    ];
    if let Some(e) = errors.first() {
        checks.push(Check::failed("wente corpus", e));
    }
    checks
}

fn green() -> Vec<Check> {
    let mut checks = Vec::new();
    let mut ratios = Vec::new();
    for a in [0.0, 1.0, 10.0, 100.0, 1000.0] {
        match green_weight_bound((a, 0.0)) {
            Ok((lhs, ratio)) => {
                checks.push(Check::info(&format!("weight integral at |z0| = {a}"), lhs, 0.0));
                ratios.push(ratio);
            }
            Err(e) => checks.push(Check::failed("weight integral", &e.to_string())),
        }
    }
    if !ratios.is_empty() {
        let hi = ratios.iter().cloned().fold(f64::MIN, f64::max);
        let lo = ratios.iter().cloned().fold(f64::MAX, f64::min);
        checks.push(Check::at_most("weight bound spread", hi / lo, 20.0));
    }
    checks.push(Check::close("weight integral at the origin", green_weight_bound((0.0, 0.0)).map(|r| r.0).unwrap_or(f64::NAN), PI / 2.0, 1e-9));

    // ∇u from Δu for u = 2x/(1+|z|^2), a bubble component.
    let u = Field2D::from_fn1(201, 10.0, |x, y| 2.0 * x / (1.0 + x * x + y * y));
    let mut f = Field2D::zeros(u.n, u.half_width, 1);
    for j in 1..u.n - 1 {
        for i in 1..u.n - 1 {
            f.data[j * u.n + i] = u.lap1(i, j);
        }
    }
    let z0 = (0.3, 0.7);
    let tol = (5e-3f64).max(10.0 * f.h() * f.h());
    match green_gradient_represent(&f, z0) {
        Ok(g) => {
            let jet = omega_jet(z0.0, z0.1);
            checks.push(Check::close("green representation d/dx", g[0][0], jet.dx.x, tol));
            checks.push(Check::close("green representation d/dy", g[0][1], jet.dy.x, tol));
        }
        Err(e) => checks.push(Check::failed("green representation", &e.to_string())),
    }
    checks
}

fn moments() -> Vec<Check> {
    let (m2, m4) = sphere_moments(&SphereQuadrature::standard());
    let tol = 1e-8;
    let mut worst2 = 0.0f64;
    let mut worst4 = 0.0f64;
    for a in 0..3 {
        for b in 0..3 {
            worst2 = worst2.max((m2[a][b] - exact_second(a, b)).abs());
            for c in 0..3 {
                for d in 0..3 {
                    worst4 = worst4.max((m4[a][b][c][d] - exact_fourth(a, b, c, d)).abs());
                }
            }
        }
    }
    vec![
        Check::close("int y1 y1 = 4pi/3", m2[0][0], 4.0 * PI / 3.0, tol),
        Check::close("int y1 y1 y2 y2 = 4pi/15", m4[0][0][1][1], 4.0 * PI / 15.0, tol),
        Check::close("int y3^4 = 4pi/5", m4[2][2][2][2], 4.0 * PI / 5.0, tol),
        Check::close("second moments, all index patterns", worst2, 0.0, tol),
        Check::close("fourth moments, all index patterns", worst4, 0.0, tol),
    ]
}

pub const ORDER_EPS: [f64; 3] = [0.08, 0.04, 0.02];

fn corrected_order() -> (Vec<Check>, Option<String>) {
    let c = random_compliant(&mut ChaCha8Rng::seed_from_u64(CURVATURE_SEED), 0.5);
    let base = SimpleBubble::identity().with_shift(V3::new(0.2, -0.1, 0.15));
    let plain = residual_order(&base, &c, &ORDER_EPS, false, Equation::Main3, 256, 3.0);
    let fixed = residual_order(&base, &c, &ORDER_EPS, true, Equation::Main3, 256, 3.0);
    let checks = vec![
        Check::relative("uncorrected residual ratio eps/(eps/2)", plain[0].residual / plain[1].residual, 4.0, 0.25),
        Check::relative("corrected residual ratio eps/(eps/2)", fixed[0].residual / fixed[1].residual, 8.0, 0.30),
        Check::at_most("corrected below uncorrected at eps/4", fixed[2].residual, plain[2].residual),
    ];
    let mut table = String::from("eps,uncorrected,corrected\n");
    for (p, f) in plain.iter().zip(&fixed) {
        table.push_str(&format!("{:e},{:e},{:e}\n", p.eps, p.residual, f.residual));
    }
    (checks, Some(table))
}
