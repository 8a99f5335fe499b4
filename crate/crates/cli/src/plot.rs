//! Static SVG plots of result tables. Output depends only on the input.

use std::fmt::Write as _;
use std::path::Path;

use clap::ValueEnum;

use crate::report::{usage, Failure};

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Kind {
    Drift,
    ResidualOrder,
    KernelGap,
}

struct Table {
    header: Vec<String>,
    rows: Vec<Vec<f64>>,
}

impl Table {
    fn column(&self, name: &str) -> Result<Vec<f64>, Failure> {
        let k = self
            .header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| usage(format!("results: missing column `{name}`")))?;
        Ok(self.rows.iter().map(|r| r[k]).collect())
    }
}

fn read_table(path: &Path) -> Result<Table, Failure> {
    let mut rd = csv::Reader::from_path(path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    let header: Vec<String> = rd
        .headers()
        .map_err(|e| usage(format!("{}: {e}", path.display())))?
        .iter()
        .map(|s| s.trim().to_string())
        .collect();
    let mut rows = Vec::new();
    for (line, rec) in rd.records().enumerate() {
        let rec = rec.map_err(|e| usage(format!("{}: {e}", path.display())))?;
        let row = rec
            .iter()
            .map(|s| s.trim().parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| usage(format!("{}: row {}: {e}", path.display(), line + 1)))?;
        rows.push(row);
    }
    if rows.is_empty() || header.iter().all(|h| h.is_empty()) {
        return Err(usage(format!("{}: no results", path.display())));
    }
    Ok(Table { header, rows })
}

struct Series {
    label: String,
    points: Vec<(f64, f64)>,
    color: &'static str,
    /// Reference lines are dashed and unmarked.
    reference: bool,
}

const W: f64 = 640.0;
const H: f64 = 480.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;

struct Axis {
    lo: f64,
    hi: f64,
    log: bool,
}

impl Axis {
    fn fit(values: impl Iterator<Item = f64>, log: bool) -> Axis {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for v in values {
            let v = if log { v.log10() } else { v };
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if log {
            (lo, hi) = (lo.floor(), hi.ceil());
        }
        if hi - lo < 1e-12 {
            (lo, hi) = (lo - 1.0, hi + 1.0);
        }
        Axis { lo, hi, log }
    }

    fn unit(&self, v: f64) -> f64 {
        let v = if self.log { v.log10() } else { v };
        (v - self.lo) / (self.hi - self.lo)
    }

    fn ticks(&self) -> Vec<(f64, String)> {
        if self.log {
            (self.lo as i32..=self.hi as i32).map(|e| (10f64.powi(e), format!("1e{e}"))).collect()
        } else {
            (0..=4)
                .map(|k| {
                    let v = self.lo + (self.hi - self.lo) * k as f64 / 4.0;
                    (v, format!("{v:.3}"))
                })
                .collect()
        }
    }
}

fn svg(title: &str, xlabel: &str, ylabel: &str, series: &[Series], xlog: bool, ylog: bool) -> String {
    let usable = |p: &(f64, f64)| p.0.is_finite() && p.1.is_finite() && (!xlog || p.0 > 0.0) && (!ylog || p.1 > 0.0);
    let all: Vec<(f64, f64)> = series.iter().flat_map(|s| s.points.iter().copied()).filter(usable).collect();
    let xa = Axis::fit(all.iter().map(|p| p.0), xlog);
    let ya = Axis::fit(all.iter().map(|p| p.1), ylog);
    let (pw, ph) = (W - LEFT - RIGHT, H - TOP - BOTTOM);
    let sx = |x: f64| LEFT + xa.unit(x) * pw;
    let sy = |y: f64| TOP + (1.0 - ya.unit(y)) * ph;

    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#);
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="24" text-anchor="middle" font-family="sans-serif" font-size="16">{title}</text>"#, W / 2.0);
    let _ = writeln!(s, r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#);
    for (v, label) in xa.ticks() {
        let x = sx(v);
        let _ = writeln!(s, r#"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="black"/>"#, TOP + ph, TOP + ph + 5.0);
        let _ = writeln!(s, r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle" font-family="sans-serif" font-size="11">{label}</text>"#, TOP + ph + 18.0);
    }
    for (v, label) in ya.ticks() {
        let y = sy(v);
        let _ = writeln!(s, r#"<line x1="{:.2}" y1="{y:.2}" x2="{LEFT}" y2="{y:.2}" stroke="black"/>"#, LEFT - 5.0);
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="end" font-family="sans-serif" font-size="11">{label}</text>"#, LEFT - 8.0, y + 4.0);
    }
    let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="middle" font-family="sans-serif" font-size="13">{xlabel}</text>"#, LEFT + pw / 2.0, H - 15.0);
    let _ = writeln!(s, r#"<text x="18" y="{:.2}" text-anchor="middle" font-family="sans-serif" font-size="13" transform="rotate(-90 18 {:.2})">{ylabel}</text>"#, TOP + ph / 2.0, TOP + ph / 2.0);

    for (k, ser) in series.iter().enumerate() {
        let pts: Vec<(f64, f64)> = ser.points.iter().copied().filter(usable).map(|(x, y)| (sx(x), sy(y))).collect();
        if pts.is_empty() {
            continue;
        }
        let path: Vec<String> = pts.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
        let dash = if ser.reference { r#" stroke-dasharray="6 4""# } else { "" };
        let _ = writeln!(s, r#"<polyline points="{}" fill="none" stroke="{}" stroke-width="1.5"{dash}/>"#, path.join(" "), ser.color);
        if !ser.reference {
            for (x, y) in &pts {
                let _ = writeln!(s, r#"<circle cx="{x:.2}" cy="{y:.2}" r="3.5" fill="{}"/>"#, ser.color);
            }
        }
        let ly = TOP + 16.0 + 16.0 * k as f64;
        let lx = LEFT + 12.0;
        let _ = writeln!(s, r#"<line x1="{lx:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{}" stroke-width="1.5"{dash}/>"#, lx + 24.0, ser.color);
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="12">{}</text>"#, lx + 30.0, ly + 4.0, ser.label);
    }
    s.push_str("</svg>\n");
    s
}

/// `c x^p` through the given anchor, evaluated at each `x`.
fn power_line(xs: &[f64], anchor: (f64, f64), p: f64) -> Vec<(f64, f64)> {
    let c = anchor.1 / anchor.0.powf(p);
    xs.iter().map(|&x| (x, c * x.powf(p))).collect()
}

fn first_positive(xs: &[f64], ys: &[f64]) -> Result<(f64, f64), Failure> {
    xs.iter()
        .zip(ys)
        .find(|(x, y)| **x > 0.0 && **y > 0.0 && x.is_finite() && y.is_finite())
        .map(|(x, y)| (*x, *y))
        .ok_or_else(|| usage("results: no positive values to place on a log axis"))
}

fn render(t: &Table, kind: Kind) -> Result<String, Failure> {
    match kind {
        Kind::Drift => {
            let eps = t.column("eps")?;
            let force: Vec<f64> = t.column("force_1")?.iter().map(|v| v.abs()).collect();
            let anchor = first_positive(&eps, &force)?;
            let series = [
                Series { label: "|force_1|".into(), points: eps.iter().copied().zip(force.iter().copied()).collect(), color: "#1f77b4", reference: false },
                Series { label: "c eps^3".into(), points: power_line(&eps, anchor, 3.0), color: "#7f7f7f", reference: true },
            ];
            Ok(svg("Force on the corrected bubble", "eps", "force along grad Scal", &series, true, true))
        }
        Kind::ResidualOrder => {
            let eps = t.column("eps")?;
            let plain = t.column("uncorrected")?;
            let fixed = t.column("corrected")?;
            let a2 = first_positive(&eps, &plain)?;
            let a3 = first_positive(&eps, &fixed)?;
            let series = [
                Series { label: "uncorrected".into(), points: eps.iter().copied().zip(plain.iter().copied()).collect(), color: "#d62728", reference: false },
                Series { label: "corrected".into(), points: eps.iter().copied().zip(fixed.iter().copied()).collect(), color: "#1f77b4", reference: false },
                Series { label: "slope 2".into(), points: power_line(&eps, a2, 2.0), color: "#ff9896", reference: true },
                Series { label: "slope 3".into(), points: power_line(&eps, a3, 3.0), color: "#aec7e8", reference: true },
            ];
            Ok(svg("Residual order", "eps", "max residual", &series, true, true))
        }
        Kind::KernelGap => {
            let idx = t.column("index")?;
            let sv = t.column("singular_value")?;
            first_positive(&idx, &sv)?;
            let series = [Series { label: "singular values".into(), points: idx.iter().copied().zip(sv.iter().copied()).collect(), color: "#2ca02c", reference: false }];
            Ok(svg("Smallest singular values of the linearized operator", "index", "singular value", &series, false, true))
        }
    }
}

/// Render `results` as `kind` and write the SVG to `out`. Nothing is
/// written when the input is empty or does not fit the kind.
pub fn plot(results: &Path, kind: Kind, out: &Path) -> Result<(), Failure> {
    let table = read_table(results)?;
    let text = render(&table, kind)?;
    std::fs::write(out, text).map_err(|e| usage(format!("{}: {e}", out.display())))
}
