use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use alf_cli::*;
use alf_core::engine::{run_algorithm, Algorithm, InitPolicy};
use alf_core::fit::FitFamily;
use alf_core::grid::{CellSet, GridDims};
use alf_core::lightfield::{full_field, LightParams};
use alf_core::metrics::SCHEMA_VERSION;
use alf_core::policy::LeaveMode;
use alf_core::render::{field_matrix, render_frames, FrameFormat};
use alf_core::shapeio::{encode, load_shape, prepare, ShapeDocument, ShapeEncoding, ShapeFormat};
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "alf", version, about = "Swarm shape-assembly experiments with artificial light fields")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// One experiment; prints the run result as JSON.
    Run(RunArgs),
    /// Repeated seeds on one shape; prints the batch estimates.
    Bench(BenchArgs),
    /// ALF against the distance-optimal baseline on the same placements.
    Compare(CompareArgs),
    /// Grid of parameter combinations, one table row each.
    Sweep(SweepArgs),
    /// One shape at several sizes, with growth-curve fits.
    Scale(ScaleArgs),
    /// Writes one frame per iteration of a run.
    Render(RenderArgs),
    /// Loads, rescales and validates a shape file.
    Shape(ShapeArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum AlgoArg {
    Alf,
    Optd,
}

#[derive(Clone, Copy, ValueEnum)]
enum LeaveArg {
    Pseudocode,
    Prose,
}

impl From<LeaveArg> for LeaveMode {
    fn from(v: LeaveArg) -> Self {
        match v {
            LeaveArg::Pseudocode => LeaveMode::Pseudocode,
            LeaveArg::Prose => LeaveMode::Prose,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum InitArg {
    Random,
    Specific,
}

#[derive(Clone, Copy, ValueEnum)]
enum FrameArg {
    Ascii,
    Ppm,
}

#[derive(Clone, Copy, ValueEnum)]
enum EncodingArg {
    Ascii,
    PbmPlain,
    PbmRaw,
}

#[derive(Clone, Copy, ValueEnum)]
enum InputFormatArg {
    Pbm,
    Ascii,
}

#[derive(Clone, Copy, ValueEnum)]
enum FamilyArg {
    Linear,
    Log,
    Cubic,
    N2logn,
}

impl From<FamilyArg> for FitFamily {
    fn from(v: FamilyArg) -> Self {
        match v {
            FamilyArg::Linear => FitFamily::Linear,
            FamilyArg::Log => FitFamily::Log,
            FamilyArg::Cubic => FitFamily::Cubic,
            FamilyArg::N2logn => FitFamily::N2logn,
        }
    }
}

/// Light-field and policy parameters.
#[derive(Args, Clone)]
struct ModelArgs {
    /// Source intensity L.
    #[arg(long = "L", default_value_t = 1000.0)]
    intensity: f64,
    /// Discount coefficient.
    #[arg(long, default_value_t = 1.0)]
    beta: f64,
    /// Discount function type, 1 to 9.
    #[arg(long, default_value_t = 6)]
    ftype: u8,
    /// Outside-ratio threshold for in-shape agents.
    #[arg(long, default_value_t = 0.15)]
    wthresh: f64,
    /// Exploration rate.
    #[arg(long, default_value_t = 0.2)]
    gamma: f64,
    #[arg(long, value_enum, default_value_t = LeaveArg::Pseudocode)]
    leave_mode: LeaveArg,
    /// Iteration cap; defaults to 50 * max(H, W).
    #[arg(long)]
    max_iters: Option<u64>,
    #[arg(long, value_enum, default_value_t = InitArg::Random)]
    init: InitArg,
    /// Per-iteration watchdog in seconds.
    #[arg(long, default_value_t = 60.0)]
    watchdog: f64,
}

impl ModelArgs {
    fn params(&self, algo: AlgoArg, workers: usize) -> Result<RunParams, HarnessError> {
        if !(self.watchdog > 0.0) || !self.watchdog.is_finite() {
            return Err(HarnessError::Usage("--watchdog must be positive".into()));
        }
        Ok(RunParams {
            algo: match algo {
                AlgoArg::Alf => Algorithm::Alf,
                AlgoArg::Optd => Algorithm::Optd,
            },
            intensity: self.intensity,
            beta: self.beta,
            ftype: self.ftype,
            wthresh: self.wthresh,
            gamma: self.gamma,
            leave_mode: self.leave_mode.into(),
            max_iters: self.max_iters,
            init: match self.init {
                InitArg::Random => InitPolicy::Random,
                InitArg::Specific => InitPolicy::Specific,
            },
            workers,
            trace: false,
            watchdog: Duration::from_secs_f64(self.watchdog),
        })
    }
}

#[derive(Args)]
struct OutputArgs {
    /// Write JSON here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Leave out wall-clock fields so output is reproducible byte for byte.
    #[arg(long)]
    omit_timing: bool,
}

#[derive(Args)]
struct ShapeSel {
    /// ASCII (.txt) or PBM (.pbm) shape file.
    #[arg(long)]
    shape: PathBuf,
    /// Grid size as HxW; defaults to the file's own size.
    #[arg(long, value_parser = parse_dims)]
    dims: Option<GridDims>,
}

#[derive(Args)]
struct BatchArgs {
    /// First seed; repeats use consecutive seeds.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 50)]
    repeats: usize,
    /// Total threads across concurrent runs.
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// Agent workers inside each run.
    #[arg(long, default_value_t = 1)]
    agent_workers: usize,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    sel: ShapeSel,
    #[arg(long, value_enum, default_value_t = AlgoArg::Alf)]
    algo: AlgoArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Agent workers; 1 is sequential and deterministic.
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// Include every iteration's positions.
    #[arg(long)]
    trace: bool,
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    sel: ShapeSel,
    #[arg(long, value_enum, default_value_t = AlgoArg::Alf)]
    algo: AlgoArg,
    #[command(flatten)]
    batch: BatchArgs,
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct CompareArgs {
    /// Shape files; repeat the flag or list several.
    #[arg(long, required = true, num_args = 1..)]
    shape: Vec<PathBuf>,
    /// Grid sizes; every shape is run at each.
    #[arg(long, num_args = 1.., value_parser = parse_dims)]
    dims: Vec<GridDims>,
    #[command(flatten)]
    batch: BatchArgs,
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    sel: ShapeSel,
    #[command(flatten)]
    batch: BatchArgs,
    #[arg(long, value_delimiter = ',')]
    wthresh_values: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    gamma_values: Vec<f64>,
    #[arg(long, value_delimiter = ',', value_enum)]
    leave_modes: Vec<LeaveArg>,
    #[arg(long, value_delimiter = ',')]
    ftypes: Vec<u8>,
    /// Also write the table as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct ScaleArgs {
    #[arg(long)]
    shape: PathBuf,
    /// Square grid sizes, e.g. 15,30,45,60.
    #[arg(long, value_delimiter = ',', required = true)]
    sizes: Vec<u32>,
    #[arg(long, value_delimiter = ',', value_enum)]
    families: Vec<FamilyArg>,
    #[arg(long, value_enum, default_value_t = AlgoArg::Alf)]
    algo: AlgoArg,
    #[command(flatten)]
    batch: BatchArgs,
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct RenderArgs {
    #[command(flatten)]
    sel: ShapeSel,
    #[arg(long, value_enum, default_value_t = AlgoArg::Alf)]
    algo: AlgoArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// Frame directory.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = FrameArg::Ascii)]
    format: FrameArg,
    /// Pixels per cell for PPM frames.
    #[arg(long, default_value_t = 8)]
    scale: usize,
    /// Also dump the blue and red light fields of every frame.
    #[arg(long)]
    fields: bool,
    #[command(flatten)]
    model: ModelArgs,
}

#[derive(Args)]
struct ShapeArgs {
    #[command(flatten)]
    sel: ShapeSel,
    /// Input format; guessed from the extension when absent.
    #[arg(long, value_enum)]
    format: Option<InputFormatArg>,
    /// Write the prepared shape here.
    #[arg(long)]
    save: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = EncodingArg::Ascii)]
    encoding: EncodingArg,
    #[command(flatten)]
    output: OutputArgs,
}

/// A JSON text plus whether the experiment counts as a success.
struct Outcome {
    json: String,
    ok: bool,
}

fn batch_seeds(batch: &BatchArgs) -> Result<Vec<u64>, HarnessError> {
    if batch.repeats == 0 {
        return Err(HarnessError::Usage("--repeats must be at least 1".into()));
    }
    Ok(seed_list(batch.seed, batch.repeats))
}

fn cmd_run(a: &RunArgs) -> Result<Outcome, HarnessError> {
    let inst = load_instance(&a.sel.shape, a.sel.dims)?;
    let mut params = a.model.params(a.algo, a.workers)?;
    params.trace = a.trace;
    let doc = run_document(&inst, &params, a.seed)?;
    Ok(Outcome { ok: doc.result.completed, json: to_json(&doc, !a.output.omit_timing) })
}

fn cmd_bench(a: &BenchArgs) -> Result<Outcome, HarnessError> {
    let inst = load_instance(&a.sel.shape, a.sel.dims)?;
    let params = a.model.params(a.algo, a.batch.agent_workers)?;
    let seeds = batch_seeds(&a.batch)?;
    let doc = bench(&inst, &params, &seeds, pool_threads(a.batch.workers, a.batch.agent_workers))?;
    Ok(Outcome { ok: doc.report.successes > 0 && doc.bound_violations == 0, json: to_json(&doc, !a.output.omit_timing) })
}

fn cmd_compare(a: &CompareArgs) -> Result<Outcome, HarnessError> {
    let dims: Vec<Option<GridDims>> = if a.dims.is_empty() { vec![None] } else { a.dims.iter().copied().map(Some).collect() };
    let mut instances = Vec::new();
    for &d in &dims {
        for path in &a.shape {
            instances.push(load_instance(path, d)?);
        }
    }
    let params = a.model.params(AlgoArg::Alf, a.batch.agent_workers)?;
    let seeds = batch_seeds(&a.batch)?;
    let doc = compare(&instances, &params, &seeds, pool_threads(a.batch.workers, a.batch.agent_workers))?;
    Ok(Outcome { ok: doc.all_ok(), json: to_json(&doc, !a.output.omit_timing) })
}

fn cmd_sweep(a: &SweepArgs) -> Result<Outcome, HarnessError> {
    let inst = load_instance(&a.sel.shape, a.sel.dims)?;
    let base = a.model.params(AlgoArg::Alf, a.batch.agent_workers)?;
    let mut spec = SweepSpec::from_base(&base);
    if !a.wthresh_values.is_empty() {
        spec.wthresh = a.wthresh_values.clone();
    }
    if !a.gamma_values.is_empty() {
        spec.gamma = a.gamma_values.clone();
    }
    if !a.leave_modes.is_empty() {
        spec.leave_mode = a.leave_modes.iter().map(|&m| m.into()).collect();
    }
    if !a.ftypes.is_empty() {
        spec.ftype = a.ftypes.clone();
    }
    let seeds = batch_seeds(&a.batch)?;
    let doc = sweep(&inst, &base, &spec, &seeds, pool_threads(a.batch.workers, a.batch.agent_workers))?;
    let timing = !a.output.omit_timing;
    if let Some(path) = &a.csv {
        fs::write(path, sweep_csv(&doc, timing)).map_err(io_err(path))?;
    }
    Ok(Outcome { ok: doc.rows.iter().any(|r| r.report.successes > 0), json: to_json(&doc, timing) })
}

fn cmd_scale(a: &ScaleArgs) -> Result<Outcome, HarnessError> {
    let sizes = a
        .sizes
        .iter()
        .map(|&s| GridDims::new(s, s).map_err(|e| HarnessError::Usage(e.to_string())))
        .collect::<Result<Vec<_>, _>>()?;
    let families: Vec<FitFamily> =
        if a.families.is_empty() { FitFamily::ALL.to_vec() } else { a.families.iter().map(|&f| f.into()).collect() };
    let params = a.model.params(a.algo, a.batch.agent_workers)?;
    let seeds = batch_seeds(&a.batch)?;
    let timing = !a.output.omit_timing;
    let threads = pool_threads(a.batch.workers, a.batch.agent_workers);
    let doc = scale(&a.shape, &sizes, &families, &params, &seeds, threads, timing)?;
    let ok = doc.points.iter().all(|p| p.report.successes > 0) && doc.fits.iter().all(|f| f.error.is_none());
    Ok(Outcome { ok, json: to_json(&doc, timing) })
}

fn cmd_render(a: &RenderArgs) -> Result<Outcome, HarnessError> {
    let inst = load_instance(&a.sel.shape, a.sel.dims)?;
    let mut params = a.model.params(a.algo, a.workers)?;
    params.trace = true;
    let config = params.config(&inst.shape, a.seed)?;
    let result = run_algorithm(&config, params.algo)?;
    let trace = result.trace.as_deref().unwrap_or_default();
    let format = match a.format {
        FrameArg::Ascii => FrameFormat::Ascii,
        FrameArg::Ppm => FrameFormat::Ppm,
    };
    let frames = render_frames(trace, &inst.shape, &a.out, format, a.scale)
        .map_err(|e| HarnessError::Usage(e.to_string()))?;
    if a.fields {
        write_fields(trace, &inst.shape, &params, &a.out)?;
    }
    let summary = RenderSummary {
        schema_version: SCHEMA_VERSION,
        kind: "render",
        shape: inst.name,
        dims: inst.shape.dims().to_string(),
        frames: frames.len(),
        completed: result.completed,
        iterations: result.iterations,
        out_dir: a.out.display().to_string(),
    };
    Ok(Outcome { ok: result.completed, json: to_json(&summary, true) })
}

fn write_fields(
    trace: &[Vec<alf_core::grid::GridPos>],
    shape: &alf_core::grid::TargetShape,
    params: &RunParams,
    dir: &Path,
) -> Result<(), HarnessError> {
    let light: LightParams<f64> = params.policy()?.light;
    for (t, positions) in trace.iter().enumerate() {
        let occupied = CellSet::from_distinct(shape.dims(), positions.iter().copied())
            .map_err(|e| HarnessError::Usage(e.to_string()))?;
        let field = full_field(shape, &occupied, &light);
        for (red, tag) in [(false, "blue"), (true, "red")] {
            let path = dir.join(format!("field_{tag}_{t:05}.txt"));
            fs::write(&path, field_matrix(&field, red)).map_err(io_err(&path))?;
        }
    }
    Ok(())
}

fn cmd_shape(a: &ShapeArgs) -> Result<Outcome, HarnessError> {
    let format = a.format.map(|f| match f {
        InputFormatArg::Pbm => ShapeFormat::Pbm,
        InputFormatArg::Ascii => ShapeFormat::Ascii,
    });
    let doc = load_shape(&a.sel.shape, format)?;
    let dims = a.sel.dims.unwrap_or(doc.dims());
    let connected = prepare(&doc, dims)?;
    if let Some(path) = &a.save {
        let out = ShapeDocument::new(doc.name.clone(), dims, connected.shape.cell_set().mask().to_vec())?;
        let encoding = match a.encoding {
            EncodingArg::Ascii => ShapeEncoding::Ascii,
            EncodingArg::PbmPlain => ShapeEncoding::PbmPlain,
            EncodingArg::PbmRaw => ShapeEncoding::PbmRaw,
        };
        fs::write(path, encode(&out, encoding)).map_err(io_err(path))?;
    }
    let summary = ShapeSummary {
        schema_version: SCHEMA_VERSION,
        kind: "shape",
        name: doc.name.clone(),
        source_dims: doc.dims().to_string(),
        dims: dims.to_string(),
        cells: connected.shape.len(),
        dropped: connected.dropped,
    };
    Ok(Outcome { ok: true, json: to_json(&summary, !a.output.omit_timing) })
}

fn output_of(command: &Command) -> Option<&Path> {
    match command {
        Command::Run(a) => a.output.out.as_deref(),
        Command::Bench(a) => a.output.out.as_deref(),
        Command::Compare(a) => a.output.out.as_deref(),
        Command::Sweep(a) => a.output.out.as_deref(),
        Command::Scale(a) => a.output.out.as_deref(),
        Command::Shape(a) => a.output.out.as_deref(),
        Command::Render(_) => None,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let outcome = match &cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Bench(a) => cmd_bench(a),
        Command::Compare(a) => cmd_compare(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Scale(a) => cmd_scale(a),
        Command::Render(a) => cmd_render(a),
        Command::Shape(a) => cmd_shape(a),
    };
    let result = outcome.and_then(|o| write_output(&o.json, output_of(&cli.command)).map(|()| o.ok));
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("alf: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
