//! `cmc solve` and `cmc decompose`: configuration, snapshots and manifests.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use cmc_core::curvature::{make_model, ModelKind};
use cmc_core::decompose::{check_decomposition, extract_bubbles, BubbleEnsemble, DecompositionReport, ExtractOptions};
use cmc_core::error::Error;
use cmc_core::field::{Field2D, ResidualReport, V3};
use cmc_core::solver::{distance_modulo_kernel, drift_experiment, kernel_force, newton_solve, DriftOutcome, DriftRow, ForceGrid, SolveConfig};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::report::{usage, Failure};

/// The solve configuration file. Absent fields take the defaults below.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub metric: ModelKind,
    #[serde(default)]
    pub eps: f64,
    /// When present, run the drift sweep over these ε instead of one solve.
    #[serde(default)]
    pub eps_list: Option<Vec<f64>>,
    #[serde(default = "default_half_width")]
    pub half_width: f64,
    #[serde(default = "default_grid_n")]
    pub grid_n: usize,
    #[serde(default = "default_tol")]
    pub newton_tol: f64,
    #[serde(default = "default_max_iter")]
    pub newton_max_iter: usize,
    #[serde(default = "default_damping")]
    pub damping: f64,
    #[serde(default)]
    pub force_grid: ForceGrid,
    /// Recorded in the manifest; the solve itself draws no random numbers.
    #[serde(default)]
    pub seed: u64,
    /// Relative paths resolve against the config file's directory.
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

fn default_half_width() -> f64 {
    8.0
}
fn default_grid_n() -> usize {
    129
}
fn default_tol() -> f64 {
    1e-9
}
fn default_max_iter() -> usize {
    20
}
fn default_damping() -> f64 {
    1.0
}

/// Parse JSON, naming the offending key on failure.
pub fn parse_json<T: DeserializeOwned>(text: &str, what: &str) -> Result<T, Failure> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        if path == "." {
            usage(format!("{what}: {}", e.inner()))
        } else {
            usage(format!("{what}: key `{path}`: {}", e.inner()))
        }
    })
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn write(path: &Path, bytes: &[u8]) -> Result<(), Failure> {
    fs::write(path, bytes).map_err(|e| usage(format!("{}: {e}", path.display())))
}

#[derive(Serialize)]
pub struct RunManifest<'a> {
    pub command: String,
    pub config: &'a RunConfig,
    pub seed: u64,
    pub outputs: Vec<String>,
    pub versions: String,
    /// Seconds since the Unix epoch; not part of the reproducible output.
    pub timestamp: u64,
}

fn versions() -> String {
    format!("cmc-core {}, cmc {}", cmc_core::VERSION, env!("CARGO_PKG_VERSION"))
}

/// Layout of the JSON file next to a raw field snapshot.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sidecar {
    pub grid_n: usize,
    pub half_width: f64,
    pub components: usize,
    /// Always `x-fastest`: point `(i, j)` at index `j * grid_n + i`, its
    /// components contiguous.
    pub order: String,
}

pub const ORDER: &str = "x-fastest";

pub fn sidecar_path(bin: &Path) -> PathBuf {
    bin.with_extension("json")
}

pub fn write_snapshot(bin: &Path, f: &Field2D) -> Result<PathBuf, Failure> {
    let bytes: Vec<u8> = f.data.iter().flat_map(|v| v.to_le_bytes()).collect();
    write(bin, &bytes)?;
    let side = Sidecar { grid_n: f.n, half_width: f.half_width, components: f.dim, order: ORDER.into() };
    let path = sidecar_path(bin);
    write(&path, serde_json::to_string_pretty(&side).unwrap().as_bytes())?;
    Ok(path)
}

pub fn read_snapshot(bin: &Path) -> Result<Field2D, Failure> {
    let side: Sidecar = parse_json(&read(&sidecar_path(bin))?, "sidecar")?;
    if side.order != ORDER {
        return Err(usage(format!("sidecar: key `order`: unsupported order `{}`", side.order)));
    }
    if side.grid_n < 2 || side.components == 0 || !(side.half_width > 0.0) {
        return Err(usage("sidecar: grid_n, half_width and components must be positive"));
    }
    let bytes = fs::read(bin).map_err(|e| usage(format!("{}: {e}", bin.display())))?;
    let expected = side.grid_n * side.grid_n * side.components * 8;
    if bytes.len() != expected {
        return Err(usage(format!("{}: {} bytes, sidecar implies {expected}", bin.display(), bytes.len())));
    }
    let data = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    Ok(Field2D { n: side.grid_n, half_width: side.half_width, dim: side.components, data })
}

fn output_dir(config_path: &Path, cfg: &RunConfig) -> PathBuf {
    let base = config_path.parent().unwrap_or(Path::new("."));
    match &cfg.output_dir {
        Some(d) if d.is_absolute() => d.clone(),
        Some(d) => base.join(d),
        None => {
            let stem = config_path.file_stem().and_then(|s| s.to_str()).unwrap_or("run");
            base.join(format!("{stem}-out"))
        }
    }
}

#[derive(Serialize)]
struct SolveSummary {
    converged: bool,
    iterations: usize,
    residual_history: Vec<f64>,
    conformality_defect: f64,
    center: V3,
    diameter: f64,
    area: f64,
    /// Largest pointwise distance from the initial corrected bubble.
    distance_from_initial: f64,
    /// The same after removing the translation and dilation directions.
    distance_modulo_kernel: f64,
}

/// Runs the configured solve or sweep; returns the manifest text.
pub fn solve(config_path: &Path) -> Result<String, Failure> {
    let cfg: RunConfig = parse_json(&read(config_path)?, "config")?;
    let metric = make_model(cfg.metric.clone()).map_err(|e| usage(format!("config: key `metric`: {e}")))?;
    let template = SolveConfig {
        half_width: cfg.half_width,
        grid_n: cfg.grid_n,
        eps: cfg.eps,
        metric,
        boundary: Default::default(),
        newton_tol: cfg.newton_tol,
        newton_max_iter: cfg.newton_max_iter,
        damping: cfg.damping,
    };
    template.validate().map_err(|e| usage(format!("config: {e}")))?;
    if cfg.force_grid.grid_n < 5 || !(cfg.force_grid.half_width > 0.0) {
        return Err(usage("config: key `force_grid`: needs grid_n >= 5 and half_width > 0"));
    }
    let dir = output_dir(config_path, &cfg);
    fs::create_dir_all(&dir).map_err(|e| usage(format!("{}: {e}", dir.display())))?;

    let mut outputs = Vec::new();
    let mut failure = None;
    let command;
    if let Some(list) = &cfg.eps_list {
        command = "solve (drift sweep)".to_string();
        if list.is_empty() || list.iter().any(|e| !(*e > 0.0)) {
            return Err(usage("config: key `eps_list`: needs positive values"));
        }
        let out = drift_experiment(&template, list, cfg.force_grid).map_err(|e| usage(format!("config: {e}")))?;
        let path = dir.join("drift.csv");
        write(&path, out.to_csv().as_bytes())?;
        outputs.push(path);
        if let Some(why) = &out.aborted {
            failure = Some(format!("sweep aborted after {} rows: {why}", out.rows.len()));
        }
    } else {
        command = "solve".to_string();
        let initial = template.initial();
        let sol = match newton_solve(&template, &initial) {
            Ok(s) => s,
            Err(e @ (Error::ExpansionDomain(_) | Error::InvalidParameter { .. } | Error::GridTooSmall { .. })) => {
                return Err(usage(format!("config: {e}")))
            }
            Err(e) => return Err(Failure::Check(format!("solve failed: {e}"))),
        };
        let force = if cfg.eps > 0.0 {
            kernel_force(&template.metric.base_point_curvature, cfg.eps, cfg.force_grid.grid_n, cfg.force_grid.half_width)
        } else {
            V3::zeros()
        };
        let row = DriftRow {
            eps: cfg.eps,
            center: sol.center,
            force,
            residual: *sol.residual_history.last().unwrap_or(&f64::NAN),
            iterations: sol.iterations,
            converged: sol.converged,
        };
        let csv = DriftOutcome { rows: vec![row], aborted: None }.to_csv();
        let path = dir.join("solve.csv");
        write(&path, csv.as_bytes())?;
        outputs.push(path);
        let distance = sol.field.data.iter().zip(&initial.data).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let summary = SolveSummary {
            converged: sol.converged,
            iterations: sol.iterations,
            residual_history: sol.residual_history.clone(),
            conformality_defect: sol.conformality_defect,
            center: sol.center,
            diameter: sol.diagnostics.diameter,
            area: sol.diagnostics.area,
            distance_from_initial: distance,
            distance_modulo_kernel: distance_modulo_kernel(&sol.field, &initial),
        };
        let path = dir.join("summary.json");
        write(&path, serde_json::to_string_pretty(&summary).unwrap().as_bytes())?;
        outputs.push(path);
        let bin = dir.join("solution.bin");
        let side = write_snapshot(&bin, &sol.field)?;
        outputs.push(bin);
        outputs.push(side);
        if !sol.converged {
            failure = Some(format!("newton did not converge in {} iterations", sol.iterations));
        }
    }

    let manifest_path = dir.join("manifest.json");
    let manifest = RunManifest {
        command: format!("{command} {}", config_path.display()),
        config: &cfg,
        seed: cfg.seed,
        outputs: outputs.iter().map(|p| p.display().to_string()).collect(),
        versions: versions(),
        timestamp: SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
    };
    let text = serde_json::to_string_pretty(&manifest).unwrap();
    write(&manifest_path, text.as_bytes())?;
    match failure {
        Some(why) => Err(Failure::Check(why)),
        None => Ok(text),
    }
}

#[derive(Serialize)]
pub struct DecomposeOutput {
    pub ensemble: BubbleEnsemble,
    pub residual: ResidualReport,
    pub decomposition: DecompositionReport,
}

pub fn decompose(bin: &Path, opts: &ExtractOptions) -> Result<DecomposeOutput, Failure> {
    let f = read_snapshot(bin)?;
    if f.dim != 3 {
        return Err(usage(format!("sidecar: key `components`: expected 3, got {}", f.dim)));
    }
    match extract_bubbles(&f, opts) {
        Ok((ensemble, residual)) => {
            let decomposition = check_decomposition(&f, &ensemble, opts.orthogonality_threshold);
            Ok(DecomposeOutput { ensemble, residual, decomposition })
        }
        Err(e @ Error::GridTooSmall { .. }) => Err(usage(e.to_string())),
        Err(e) => Err(Failure::Check(format!("extraction failed: {e}"))),
    }
}
