//! Runs one self-assembly experiment end to end.
//!
//! Each iteration: take the coordinator's snapshot, compute the light
//! sources once, let every agent rank its candidates and negotiate locks,
//! then close the barrier. With one worker the agents act in id order and the
//! whole run is reproducible from the seed. With more workers the agents are
//! spread over a thread pool and only the coordinator's atomic operations
//! order them.

use std::sync::mpsc;
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::coordinator::{Coordinator, CoordinatorError, Pulse};
use crate::grid::{AgentId, GridDims, GridPos, ModelError, SystemState, TargetShape};
use crate::lightfield::LightSources;
use crate::optd;
use crate::policy::{build_queue_from_sources, decide, outside_ratio, PolicyParams};
use crate::scalar::Scalar;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("protocol error: {0}")]
    Protocol(#[from] CoordinatorError),
    #[error("watchdog: iteration {iteration} exceeded {budget:?}")]
    Watchdog { iteration: u64, budget: Duration },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("not enough free cells for {agents} agents on a {dims} grid")]
    NoRoom { agents: usize, dims: GridDims },
    #[error("agent worker died: {0}")]
    WorkerLost(String),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitPolicy {
    #[default]
    Random,
    Specific,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    #[default]
    Alf,
    Optd,
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig<T = f64> {
    pub shape: Arc<TargetShape>,
    pub policy: PolicyParams<T>,
    pub init: InitPolicy,
    pub seed: u64,
    /// Iteration cap `K`.
    pub max_iters: u64,
    /// Agent workers; 1 runs agents sequentially and deterministically.
    pub workers: usize,
    pub capture_trace: bool,
    /// Wall-time budget for a single iteration.
    pub watchdog: Duration,
}

/// `50 * max(H, W)`.
pub fn default_max_iters(dims: GridDims) -> u64 {
    50 * u64::from(dims.height.max(dims.width))
}

impl<T: Scalar> ExperimentConfig<T> {
    pub fn new(shape: Arc<TargetShape>, policy: PolicyParams<T>) -> Self {
        let max_iters = default_max_iters(shape.dims());
        Self {
            shape,
            policy,
            init: InitPolicy::Random,
            seed: 0,
            max_iters,
            workers: 1,
            capture_trace: false,
            watchdog: Duration::from_secs(60),
        }
    }

    pub fn dims(&self) -> GridDims {
        self.shape.dims()
    }

    pub fn validate(&self) -> Result<(), EngineError> {
        if self.max_iters == 0 {
            return Err(EngineError::Config("max_iters must be at least 1".into()));
        }
        if self.workers == 0 {
            return Err(EngineError::Config("workers must be at least 1".into()));
        }
        Ok(())
    }
}

/// Extra bookkeeping for the distance-optimal baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptdBound {
    pub d_max: u64,
    /// `|A| + d_max - 1`.
    pub bound: u64,
    pub bound_violated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub completed: bool,
    /// Iterations executed; the completion time `T` when `completed`.
    pub iterations: u64,
    pub wall_seconds: f64,
    /// `|C_final| / |S|`.
    pub final_quality: f64,
    pub workers: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub optd: Option<OptdBound>,
    /// Positions per iteration, `trace[0]` being the initial placement.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub trace: Option<Vec<Vec<GridPos>>>,
}

pub fn quality(shape: &TargetShape, positions: &[GridPos]) -> f64 {
    positions.iter().filter(|&&p| shape.contains(p)).count() as f64 / shape.len() as f64
}

fn init_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn agent_rng(seed: u64, agent: AgentId) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(u64::from(agent.0));
    rng
}

/// N agents on distinct cells drawn uniformly from the whole grid.
pub fn init_random(shape: &TargetShape, seed: u64) -> Result<SystemState, EngineError> {
    let dims = shape.dims();
    let n = shape.len();
    if n > dims.cell_count() {
        return Err(EngineError::NoRoom { agents: n, dims });
    }
    let mut rng = init_rng(seed);
    let cells = index::sample(&mut rng, dims.cell_count(), n);
    let positions = cells.into_iter().map(|i| dims.pos_at(i)).collect();
    Ok(SystemState::for_shape(shape, positions)?)
}

/// Packs agents from the bottom-left corner: bottom row first, left to right,
/// then the row above, skipping target cells. The seed only permutes which
/// agent gets which cell.
pub fn init_specific(shape: &TargetShape, seed: u64) -> Result<SystemState, EngineError> {
    let dims = shape.dims();
    let n = shape.len();
    let mut cells: Vec<GridPos> = (1..=dims.height)
        .rev()
        .flat_map(|row| (1..=dims.width).map(move |col| GridPos::new(row, col)))
        .filter(|&p| !shape.contains(p))
        .take(n)
        .collect();
    if cells.len() < n {
        return Err(EngineError::NoRoom { agents: n, dims });
    }
    cells.shuffle(&mut init_rng(seed));
    Ok(SystemState::for_shape(shape, cells)?)
}

pub fn initial_state<T: Scalar>(config: &ExperimentConfig<T>) -> Result<SystemState, EngineError> {
    match config.init {
        InitPolicy::Random => init_random(&config.shape, config.seed),
        InitPolicy::Specific => init_specific(&config.shape, config.seed),
    }
}

/// Runs the selected algorithm from the configured initial placement.
pub fn run_algorithm<T: Scalar>(
    config: &ExperimentConfig<T>,
    algorithm: Algorithm,
) -> Result<RunResult, EngineError> {
    match algorithm {
        Algorithm::Alf => run(config),
        Algorithm::Optd => {
            config.validate()?;
            let state = initial_state(config)?;
            let mut result = optd::solve(&state, &config.shape)?;
            if !config.capture_trace {
                result.trace = None;
            }
            Ok(result)
        }
    }
}

pub fn run<T: Scalar>(config: &ExperimentConfig<T>) -> Result<RunResult, EngineError> {
    let state = initial_state(config)?;
    run_from(config, state)
}

pub fn run_from<T: Scalar>(
    config: &ExperimentConfig<T>,
    initial: SystemState,
) -> Result<RunResult, EngineError> {
    run_observed(config, initial, |_| Ok(()))
}

/// As [`run_from`], calling `observer` at every iteration boundary
/// (including `t = 0`) with the coordinator between iterations.
pub fn run_observed<T, F>(
    config: &ExperimentConfig<T>,
    initial: SystemState,
    observer: F,
) -> Result<RunResult, EngineError>
where
    T: Scalar,
    F: FnMut(&Coordinator) -> Result<(), EngineError>,
{
    config.validate()?;
    if initial.dims() != config.dims() {
        return Err(ModelError::DimsMismatch { state: initial.dims(), shape: config.dims() }.into());
    }
    if config.workers == 1 {
        Sequential::new(config, &initial).drive(config, initial, observer)
    } else {
        Parallel::spawn(config, &initial).drive(config, initial, observer)
    }
}

/// One iteration's shared, read-only inputs.
struct IterationView {
    sources: LightSources,
    outside_ratio: f64,
}

impl IterationView {
    fn new(shape: &TargetShape, coord: &Coordinator) -> Self {
        let sources = LightSources::new(shape, &coord.snapshot());
        let outside_ratio = outside_ratio(&sources, shape);
        Self { sources, outside_ratio }
    }
}

/// Queue, decide, leave: the agent half of one iteration.
fn act<T: Scalar>(
    agent: AgentId,
    pos: GridPos,
    view: &IterationView,
    shape: &TargetShape,
    policy: &PolicyParams<T>,
    coord: &Coordinator,
    rng: &mut ChaCha8Rng,
) -> Result<GridPos, CoordinatorError> {
    let queue = build_queue_from_sources(pos, shape, &view.sources, view.outside_ratio, policy);
    let decision = decide(&queue, agent, pos, policy.gamma, coord, rng)?;
    if decision.acquired {
        coord.leave(agent, pos)?;
    }
    Ok(decision.next)
}

trait Executor {
    fn coordinator(&self) -> &Coordinator;

    /// Every agent acts once; returns the `NewPos` reports.
    fn iterate(&mut self, iteration: u64) -> Result<Vec<(AgentId, GridPos)>, EngineError>;

    fn drive<T, F>(
        &mut self,
        config: &ExperimentConfig<T>,
        initial: SystemState,
        mut observer: F,
    ) -> Result<RunResult, EngineError>
    where
        T: Scalar,
        F: FnMut(&Coordinator) -> Result<(), EngineError>,
        Self: Sized,
    {
        let start = Instant::now();
        let mut trace = config.capture_trace.then(|| vec![initial.positions().to_vec()]);
        observer(self.coordinator())?;
        let mut pulse = self.coordinator().pulse();
        let mut iterations = 0;
        while pulse == Pulse::Work && iterations < config.max_iters {
            let began = Instant::now();
            let reports = self.iterate(iterations)?;
            pulse = self.coordinator().complete_step(&reports)?;
            iterations += 1;
            if began.elapsed() > config.watchdog {
                return Err(EngineError::Watchdog { iteration: iterations, budget: config.watchdog });
            }
            observer(self.coordinator())?;
            if let Some(trace) = trace.as_mut() {
                trace.push(self.coordinator().positions());
            }
        }
        let wall_seconds = start.elapsed().as_secs_f64();
        let positions = self.coordinator().positions();
        Ok(RunResult {
            completed: pulse == Pulse::Stop,
            iterations,
            wall_seconds,
            final_quality: quality(&config.shape, &positions),
            workers: config.workers,
            optd: None,
            trace,
        })
    }
}

struct Sequential<T> {
    coord: Coordinator,
    shape: Arc<TargetShape>,
    policy: PolicyParams<T>,
    rngs: Vec<ChaCha8Rng>,
}

impl<T: Scalar> Sequential<T> {
    fn new(config: &ExperimentConfig<T>, initial: &SystemState) -> Self {
        Self {
            coord: Coordinator::new(config.shape.clone(), initial.positions().to_vec())
                .expect("validated state"),
            shape: config.shape.clone(),
            policy: config.policy.clone(),
            rngs: initial.agents().map(|(a, _)| agent_rng(config.seed, a)).collect(),
        }
    }
}

impl<T: Scalar> Executor for Sequential<T> {
    fn coordinator(&self) -> &Coordinator {
        &self.coord
    }

    fn iterate(&mut self, _iteration: u64) -> Result<Vec<(AgentId, GridPos)>, EngineError> {
        let view = IterationView::new(&self.shape, &self.coord);
        let positions = self.coord.positions();
        let mut reports = Vec::with_capacity(positions.len());
        for (slot, (&pos, rng)) in positions.iter().zip(self.rngs.iter_mut()).enumerate() {
            let agent = AgentId::from_slot(slot);
            let next = act(agent, pos, &view, &self.shape, &self.policy, &self.coord, rng)?;
            reports.push((agent, next));
        }
        Ok(reports)
    }
}

type WorkerReply = Result<Vec<(AgentId, GridPos)>, CoordinatorError>;

/// Persistent agent workers. Worker `w` owns the agents whose slot is
/// congruent to `w` modulo the worker count, along with their rng streams.
struct Parallel {
    coord: Arc<Coordinator>,
    shape: Arc<TargetShape>,
    jobs: Vec<mpsc::Sender<Arc<IterationView>>>,
    replies: mpsc::Receiver<WorkerReply>,
    watchdog: Duration,
}

impl Parallel {
    fn spawn<T: Scalar>(config: &ExperimentConfig<T>, initial: &SystemState) -> Self {
        let coord = Arc::new(
            Coordinator::new(config.shape.clone(), initial.positions().to_vec())
                .expect("validated state"),
        );
        let (reply_tx, replies) = mpsc::channel();
        let workers = config.workers.min(initial.len().max(1));
        let mut jobs = Vec::with_capacity(workers);
        for w in 0..workers {
            let (job_tx, job_rx) = mpsc::channel::<Arc<IterationView>>();
            jobs.push(job_tx);
            let mut agents: Vec<(AgentId, GridPos, ChaCha8Rng)> = initial
                .agents()
                .filter(|(a, _)| a.slot() % workers == w)
                .map(|(a, p)| (a, p, agent_rng(config.seed, a)))
                .collect();
            let coord = coord.clone();
            let shape = config.shape.clone();
            let policy = config.policy.clone();
            let reply_tx = reply_tx.clone();
            thread::spawn(move || {
                while let Ok(view) = job_rx.recv() {
                    let mut reports = Vec::with_capacity(agents.len());
                    let mut outcome = Ok(());
                    for (agent, pos, rng) in agents.iter_mut() {
                        match act(*agent, *pos, &view, &shape, &policy, &coord, rng) {
                            Ok(next) => {
                                *pos = next;
                                reports.push((*agent, next));
                            }
                            Err(e) => {
                                outcome = Err(e);
                                break;
                            }
                        }
                    }
                    if reply_tx.send(outcome.map(|_| reports)).is_err() {
                        break;
                    }
                }
            });
        }
        Self { coord, shape: config.shape.clone(), jobs, replies, watchdog: config.watchdog }
    }
}

impl Executor for Parallel {
    fn coordinator(&self) -> &Coordinator {
        &self.coord
    }

    fn iterate(&mut self, iteration: u64) -> Result<Vec<(AgentId, GridPos)>, EngineError> {
        let view = Arc::new(IterationView::new(&self.shape, &self.coord));
        for job in &self.jobs {
            job.send(view.clone()).map_err(|e| EngineError::WorkerLost(e.to_string()))?;
        }
        let deadline = Instant::now() + self.watchdog;
        let mut reports = Vec::with_capacity(self.coord.agent_count());
        for _ in 0..self.jobs.len() {
            let wait = deadline.saturating_duration_since(Instant::now());
            match self.replies.recv_timeout(wait) {
                Ok(reply) => reports.extend(reply?),
                Err(mpsc::RecvTimeoutError::Timeout) => {
                    return Err(EngineError::Watchdog { iteration: iteration + 1, budget: self.watchdog })
                }
                Err(e) => return Err(EngineError::WorkerLost(e.to_string())),
            }
        }
        Ok(reports)
    }
}
