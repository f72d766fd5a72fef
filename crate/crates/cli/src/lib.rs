//! Experiment harness behind the `alf` binary: batch execution, report
//! documents and their JSON encoding.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use alf_core::engine::{run_algorithm, Algorithm, EngineError, ExperimentConfig, InitPolicy, RunResult};
use alf_core::fit::{fit_scaling, FitError, FitFamily};
use alf_core::grid::{GridDims, TargetShape};
use alf_core::lightfield::{DiscountType, LightParams};
use alf_core::metrics::{estimate, estimate_group, MetricsReport, SCHEMA_VERSION};
use alf_core::policy::{LeaveMode, PolicyParams};
use alf_core::shapeio::{load_shape, prepare, ShapeError};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::Value;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Shape(#[from] ShapeError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Fit(#[from] FitError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl HarnessError {
    /// 2 for bad input, 1 for failures while running.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Usage(_) => 2,
            HarnessError::Shape(ShapeError::Io { .. }) => 1,
            HarnessError::Shape(_) => 2,
            HarnessError::Engine(EngineError::Config(_) | EngineError::NoRoom { .. }) => 2,
            _ => 1,
        }
    }
}

pub fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io { path: path.to_path_buf(), source }
}

/// `HxW`, or a single number for a square grid.
pub fn parse_dims(s: &str) -> Result<GridDims, String> {
    let (h, w) = match s.split_once(['x', 'X']) {
        Some((h, w)) => (h, w),
        None => (s, s),
    };
    let h: u32 = h.trim().parse().map_err(|_| format!("bad height in {s:?}"))?;
    let w: u32 = w.trim().parse().map_err(|_| format!("bad width in {s:?}"))?;
    GridDims::new(h, w).map_err(|e| e.to_string())
}

/// A shape prepared for one grid size.
#[derive(Debug, Clone)]
pub struct Instance {
    pub name: String,
    pub shape: Arc<TargetShape>,
    /// Cells removed to make the rescaled image connected.
    pub dropped: usize,
}

pub fn load_instance(path: &Path, dims: Option<GridDims>) -> Result<Instance, HarnessError> {
    let doc = load_shape(path, None)?;
    let connected = prepare(&doc, dims.unwrap_or(doc.dims()))?;
    Ok(Instance { name: doc.name, shape: Arc::new(connected.shape), dropped: connected.dropped })
}

/// Everything that configures a single run except the shape and the seed.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunParams {
    pub algo: Algorithm,
    pub intensity: f64,
    pub beta: f64,
    pub ftype: u8,
    pub wthresh: f64,
    pub gamma: f64,
    pub leave_mode: LeaveMode,
    /// `None` uses `50 * max(H, W)`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_iters: Option<u64>,
    pub init: InitPolicy,
    /// Agent workers per run.
    pub workers: usize,
    #[serde(skip)]
    pub trace: bool,
    #[serde(skip)]
    pub watchdog: Duration,
}

impl Default for RunParams {
    fn default() -> Self {
        Self {
            algo: Algorithm::Alf,
            intensity: 1000.0,
            beta: 1.0,
            ftype: 6,
            wthresh: 0.15,
            gamma: 0.2,
            leave_mode: LeaveMode::Pseudocode,
            max_iters: None,
            init: InitPolicy::Random,
            workers: 1,
            trace: false,
            watchdog: Duration::from_secs(60),
        }
    }
}

impl RunParams {
    pub fn policy(&self) -> Result<PolicyParams<f64>, HarnessError> {
        let discount = DiscountType::new(self.ftype).map_err(|e| HarnessError::Usage(e.to_string()))?;
        let light =
            LightParams::new(self.intensity, self.beta, discount).map_err(|e| HarnessError::Usage(e.to_string()))?;
        PolicyParams::new(self.wthresh, self.gamma, self.leave_mode, light)
            .map_err(|e| HarnessError::Usage(e.to_string()))
    }

    pub fn config(&self, shape: &Arc<TargetShape>, seed: u64) -> Result<ExperimentConfig<f64>, HarnessError> {
        let mut config = ExperimentConfig::new(shape.clone(), self.policy()?);
        config.seed = seed;
        config.init = self.init;
        config.workers = self.workers;
        config.capture_trace = self.trace;
        config.watchdog = self.watchdog;
        if let Some(k) = self.max_iters {
            config.max_iters = k;
        }
        config.validate()?;
        Ok(config)
    }

    pub fn max_iters_for(&self, dims: GridDims) -> u64 {
        self.max_iters.unwrap_or_else(|| alf_core::engine::default_max_iters(dims))
    }

    /// Copy with the iteration cap filled in for `dims`.
    pub fn resolved(&self, dims: GridDims) -> Self {
        Self { max_iters: Some(self.max_iters_for(dims)), ..self.clone() }
    }
}

pub fn seed_list(first: u64, repeats: usize) -> Vec<u64> {
    (0..repeats as u64).map(|i| first + i).collect()
}

/// Runs every seed on a pool of `threads` threads. Results keep seed order.
pub fn run_batch(
    params: &RunParams,
    shape: &Arc<TargetShape>,
    seeds: &[u64],
    threads: usize,
) -> Result<Vec<RunResult>, HarnessError> {
    let configs = seeds.iter().map(|&s| params.config(shape, s)).collect::<Result<Vec<_>, _>>()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| HarnessError::Usage(e.to_string()))?;
    let algo = params.algo;
    let results = pool.install(|| {
        configs.par_iter().map(|c| run_algorithm(c, algo)).collect::<Result<Vec<_>, EngineError>>()
    })?;
    Ok(results)
}

/// Run-level pool size when each run itself uses `agent_workers` threads.
pub fn pool_threads(workers: usize, agent_workers: usize) -> usize {
    (workers / agent_workers.max(1)).max(1)
}

#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub seed: u64,
    pub completed: bool,
    pub iterations: u64,
    pub final_quality: f64,
    pub wall_seconds: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bound_violated: Option<bool>,
}

impl RunSummary {
    pub fn new(seed: u64, r: &RunResult) -> Self {
        Self {
            seed,
            completed: r.completed,
            iterations: r.iterations,
            final_quality: r.final_quality,
            wall_seconds: r.wall_seconds,
            bound_violated: r.optd.as_ref().map(|b| b.bound_violated),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RunDocument {
    pub schema_version: &'static str,
    pub kind: &'static str,
    pub shape: String,
    pub dims: String,
    pub agents: usize,
    pub seed: u64,
    pub params: RunParams,
    pub result: RunResult,
}

pub fn run_document(instance: &Instance, params: &RunParams, seed: u64) -> Result<RunDocument, HarnessError> {
    let config = params.config(&instance.shape, seed)?;
    let result = run_algorithm(&config, params.algo)?;
    Ok(RunDocument {
        schema_version: SCHEMA_VERSION,
        kind: "run",
        shape: instance.name.clone(),
        dims: instance.shape.dims().to_string(),
        agents: instance.shape.len(),
        seed,
        params: params.resolved(instance.shape.dims()),
        result,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchDocument {
    pub schema_version: &'static str,
    pub kind: &'static str,
    pub shape: String,
    pub dims: String,
    pub agents: usize,
    pub params: RunParams,
    pub runs: Vec<RunSummary>,
    pub report: MetricsReport,
    pub bound_violations: usize,
}

pub fn bench(
    instance: &Instance,
    params: &RunParams,
    seeds: &[u64],
    threads: usize,
) -> Result<BenchDocument, HarnessError> {
    if seeds.is_empty() {
        return Err(HarnessError::Usage("at least one repeat is required".into()));
    }
    let results = run_batch(params, &instance.shape, seeds, threads)?;
    let dims = instance.shape.dims();
    let report = estimate(&results, instance.shape.len(), params.max_iters_for(dims));
    Ok(BenchDocument {
        schema_version: SCHEMA_VERSION,
        kind: "bench",
        shape: instance.name.clone(),
        dims: dims.to_string(),
        agents: instance.shape.len(),
        params: params.resolved(dims),
        bound_violations: count_violations(&results),
        runs: seeds.iter().zip(&results).map(|(&s, r)| RunSummary::new(s, r)).collect(),
        report,
    })
}

fn count_violations(results: &[RunResult]) -> usize {
    results.iter().filter(|r| r.optd.as_ref().is_some_and(|b| b.bound_violated)).count()
}

#[derive(Debug, Clone, Serialize)]
pub struct CompareEntry {
    pub shape: String,
    pub dims: String,
    pub agents: usize,
    pub alf: MetricsReport,
    pub optd: MetricsReport,
    /// `t_alf / t_optd`; absent when either side never completed.
    pub r_hat: Option<f64>,
    pub optd_bound_violations: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct CompareDocument {
    pub schema_version: &'static str,
    pub kind: &'static str,
    pub params: RunParams,
    pub seeds: Vec<u64>,
    pub entries: Vec<CompareEntry>,
    pub r_hat_mean: Option<f64>,
    pub r_hat_max: Option<f64>,
    /// Ratio of the size-normalized group estimates.
    pub r_hat_group: Option<f64>,
}

impl CompareDocument {
    pub fn all_ok(&self) -> bool {
        self.entries
            .iter()
            .all(|e| e.alf.successes > 0 && e.optd.successes == e.optd.runs && e.optd_bound_violations == 0)
    }
}

/// ALF and the baseline from the same initial placements.
pub fn compare(
    instances: &[Instance],
    params: &RunParams,
    seeds: &[u64],
    threads: usize,
) -> Result<CompareDocument, HarnessError> {
    let mut entries = Vec::with_capacity(instances.len());
    let alf_params = RunParams { algo: Algorithm::Alf, ..params.clone() };
    let optd_params = RunParams { algo: Algorithm::Optd, ..params.clone() };
    for inst in instances {
        let a = bench(inst, &alf_params, seeds, threads)?;
        let o = bench(inst, &optd_params, seeds, threads)?;
        let r_hat = ratio(a.report.t_hat, o.report.t_hat);
        entries.push(CompareEntry {
            shape: inst.name.clone(),
            dims: a.dims,
            agents: a.agents,
            optd_bound_violations: o.bound_violations,
            alf: a.report,
            optd: o.report,
            r_hat,
        });
    }
    let ratios: Vec<f64> = entries.iter().filter_map(|e| e.r_hat).collect();
    let r_hat_group = if entries.is_empty() {
        None
    } else {
        let alf: Vec<MetricsReport> = entries.iter().map(|e| e.alf.clone()).collect();
        let optd: Vec<MetricsReport> = entries.iter().map(|e| e.optd.clone()).collect();
        ratio(estimate_group(&alf).t_hat, estimate_group(&optd).t_hat)
    };
    Ok(CompareDocument {
        schema_version: SCHEMA_VERSION,
        kind: "compare",
        params: params.clone(),
        seeds: seeds.to_vec(),
        r_hat_mean: alf_core::metrics::mean(&ratios),
        r_hat_max: ratios.iter().copied().reduce(f64::max),
        r_hat_group,
        entries,
    })
}

fn ratio(a: Option<f64>, b: Option<f64>) -> Option<f64> {
    match (a, b) {
        (Some(a), Some(b)) if b > 0.0 => Some(a / b),
        _ => None,
    }
}

/// Parameter axes of a sweep; every combination is one table row.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub wthresh: Vec<f64>,
    pub gamma: Vec<f64>,
    pub leave_mode: Vec<LeaveMode>,
    pub ftype: Vec<u8>,
}

impl SweepSpec {
    /// Single-valued axes taken from `base`.
    pub fn from_base(base: &RunParams) -> Self {
        Self { wthresh: vec![base.wthresh], gamma: vec![base.gamma], leave_mode: vec![base.leave_mode], ftype: vec![base.ftype] }
    }

    pub fn cells(&self, base: &RunParams) -> Result<Vec<RunParams>, HarnessError> {
        if self.wthresh.is_empty() || self.gamma.is_empty() || self.leave_mode.is_empty() || self.ftype.is_empty() {
            return Err(HarnessError::Usage("sweep axes must not be empty".into()));
        }
        let mut out = Vec::new();
        for &wthresh in &self.wthresh {
            for &gamma in &self.gamma {
                for &leave_mode in &self.leave_mode {
                    for &ftype in &self.ftype {
                        out.push(RunParams { wthresh, gamma, leave_mode, ftype, ..base.clone() });
                    }
                }
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub wthresh: f64,
    pub gamma: f64,
    pub leave_mode: LeaveMode,
    pub ftype: u8,
    pub report: MetricsReport,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepDocument {
    pub schema_version: &'static str,
    pub kind: &'static str,
    pub shape: String,
    pub dims: String,
    pub agents: usize,
    pub seeds: Vec<u64>,
    pub rows: Vec<SweepRow>,
}

pub fn sweep(
    instance: &Instance,
    base: &RunParams,
    spec: &SweepSpec,
    seeds: &[u64],
    threads: usize,
) -> Result<SweepDocument, HarnessError> {
    let mut rows = Vec::new();
    for p in spec.cells(base)? {
        let doc = bench(instance, &p, seeds, threads)?;
        rows.push(SweepRow { wthresh: p.wthresh, gamma: p.gamma, leave_mode: p.leave_mode, ftype: p.ftype, report: doc.report });
    }
    Ok(SweepDocument {
        schema_version: SCHEMA_VERSION,
        kind: "sweep",
        shape: instance.name.clone(),
        dims: instance.shape.dims().to_string(),
        agents: instance.shape.len(),
        seeds: seeds.to_vec(),
        rows,
    })
}

fn csv_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// One header row plus one row per sweep cell. Timing columns are left out
/// when `timing` is false.
pub fn sweep_csv(doc: &SweepDocument, timing: bool) -> String {
    let mut out = String::from("wthresh,gamma,leave_mode,ftype,runs,success_rate,rho_hat,t_hat,sigma_rho,sigma_t");
    if timing {
        out.push_str(",tau_hat,sigma_tau");
    }
    out.push('\n');
    for r in &doc.rows {
        let m = &r.report;
        let mode = if r.leave_mode == LeaveMode::Prose { "prose" } else { "pseudocode" };
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}",
            r.wthresh,
            r.gamma,
            mode,
            r.ftype,
            m.runs,
            m.success_rate,
            m.rho_hat,
            csv_opt(m.t_hat),
            m.sigma_rho,
            csv_opt(m.sigma_t)
        ));
        if timing {
            out.push_str(&format!(",{},{}", csv_opt(m.tau_hat), csv_opt(m.sigma_tau)));
        }
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, Serialize)]
pub struct ScalePoint {
    pub dims: String,
    pub agents: usize,
    pub report: MetricsReport,
}

#[derive(Debug, Clone, Serialize)]
pub struct ScaleFit {
    pub family: FitFamily,
    /// `t` or `tau`.
    pub quantity: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub coefficients: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r_squared: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ScaleDocument {
    pub schema_version: &'static str,
    pub kind: &'static str,
    pub shape: String,
    pub params: RunParams,
    pub seeds: Vec<u64>,
    pub points: Vec<ScalePoint>,
    pub fits: Vec<ScaleFit>,
}

impl ScaleDocument {
    pub fn fit(&self, family: FitFamily, quantity: &str) -> Option<&ScaleFit> {
        self.fits.iter().find(|f| f.family == family && f.quantity == quantity)
    }

    pub fn t_hat(&self, agents: usize) -> Option<f64> {
        self.points.iter().find(|p| p.agents == agents).and_then(|p| p.report.t_hat)
    }
}

fn fit_entry(points: &[(f64, f64)], family: FitFamily, quantity: &'static str) -> ScaleFit {
    match fit_scaling(points, family) {
        Ok(f) => ScaleFit {
            family,
            quantity,
            coefficients: Some(f.coefficients),
            r_squared: Some(f.r_squared),
            error: None,
        },
        Err(e) => ScaleFit { family, quantity, coefficients: None, r_squared: None, error: Some(e.to_string()) },
    }
}

/// Benchmarks `path` at each square size and fits `t` (and `tau` when
/// `timing`) against the agent count.
pub fn scale(
    path: &Path,
    sizes: &[GridDims],
    families: &[FitFamily],
    params: &RunParams,
    seeds: &[u64],
    threads: usize,
    timing: bool,
) -> Result<ScaleDocument, HarnessError> {
    let mut points = Vec::with_capacity(sizes.len());
    let mut name = String::new();
    for &dims in sizes {
        let inst = load_instance(path, Some(dims))?;
        let doc = bench(&inst, params, seeds, threads)?;
        name = inst.name;
        points.push(ScalePoint { dims: doc.dims, agents: doc.agents, report: doc.report });
    }
    let series = |pick: fn(&MetricsReport) -> Option<f64>| -> Vec<(f64, f64)> {
        points.iter().filter_map(|p| pick(&p.report).map(|y| (p.agents as f64, y))).collect()
    };
    let mut fits = Vec::new();
    let t = series(|r| r.t_hat);
    let tau = series(|r| r.tau_hat);
    for &family in families {
        fits.push(fit_entry(&t, family, "t"));
        if timing {
            fits.push(fit_entry(&tau, family, "tau"));
        }
    }
    Ok(ScaleDocument {
        schema_version: SCHEMA_VERSION,
        kind: "scale",
        shape: name,
        params: params.clone(),
        seeds: seeds.to_vec(),
        points,
        fits,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct ShapeSummary {
    pub schema_version: &'static str,
    pub kind: &'static str,
    pub name: String,
    pub source_dims: String,
    pub dims: String,
    pub cells: usize,
    pub dropped: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct RenderSummary {
    pub schema_version: &'static str,
    pub kind: &'static str,
    pub shape: String,
    pub dims: String,
    pub frames: usize,
    pub completed: bool,
    pub iterations: u64,
    pub out_dir: String,
}

const TIMING_KEYS: [&str; 3] = ["wall_seconds", "tau_hat", "sigma_tau"];

/// Drops wall-clock fields so that documents compare byte for byte.
pub fn strip_timing(value: &mut Value) {
    match value {
        Value::Object(map) => {
            for k in TIMING_KEYS {
                map.remove(k);
            }
            map.values_mut().for_each(strip_timing);
        }
        Value::Array(items) => items.iter_mut().for_each(strip_timing),
        _ => {}
    }
}

pub fn to_json<T: Serialize>(doc: &T, timing: bool) -> String {
    let mut value = serde_json::to_value(doc).expect("report documents serialize");
    if !timing {
        strip_timing(&mut value);
    }
    let mut text = serde_json::to_string_pretty(&value).expect("values serialize");
    text.push('\n');
    text
}

pub fn write_output(text: &str, out: Option<&Path>) -> Result<(), HarnessError> {
    match out {
        Some(path) => fs::write(path, text).map_err(io_err(path)),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}
