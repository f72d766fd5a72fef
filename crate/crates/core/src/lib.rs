//! Artificial-light-field swarm self-assembly on a 2-D grid.
//!
//! Agents on an `H x W` grid fill a connected target shape. Every iteration
//! each agent reads two light intensities around it: blue, emitted by
//! unoccupied target cells, and red, emitted by agents still outside the
//! shape. It ranks its 3x3 neighbourhood by those intensities and tries to
//! lock the best free cell through a shared coordinator.
//!
//! The crate also contains a centralized baseline (`optd`: Hungarian
//! assignment plus a step scheduler), shape file I/O, batch estimators,
//! scaling fits and frame rendering.
//!
//! Field computations are generic over [`Scalar`]; `f64` is the default,
//! `f32` works for speed, and [`Exact`] gives exact rational arithmetic.

pub mod coordinator;
pub mod engine;
pub mod fit;
pub mod grid;
pub mod lightfield;
pub mod metrics;
pub mod optd;
pub mod policy;
pub mod render;
pub mod scalar;
pub mod shapeio;

pub use coordinator::{Coordinator, CoordinatorError, LockOutcome, LockService, LockTable, Message, Pulse};
pub use engine::{
    run, run_algorithm, run_from, run_observed, Algorithm, EngineError, ExperimentConfig, InitPolicy, OptdBound,
    RunResult,
};
pub use fit::{fit_scaling, Fit, FitError, FitFamily};
pub use grid::{AgentId, CellSet, GridDims, GridPos, Metric, ModelError, SystemState, TargetShape};
pub use lightfield::{DiscountType, FieldGrid, FieldValue, LightParams, LightSources, LocalField};
pub use metrics::{estimate, estimate_group, MetricsReport, SCHEMA_VERSION};
pub use policy::{CandidateQueue, Decision, LeaveMode, PolicyParams, SortRule};
pub use scalar::Scalar;
pub use shapeio::{ShapeDocument, ShapeError, ShapeFormat};

/// Exact rational scalar.
pub type Exact = num_rational::BigRational;

pub type LightParams32 = LightParams<f32>;
pub type LightParams64 = LightParams<f64>;
pub type ExactLightParams = LightParams<Exact>;

pub type LocalField32 = LocalField<f32>;
pub type LocalField64 = LocalField<f64>;
pub type ExactLocalField = LocalField<Exact>;

pub type FieldGrid64 = FieldGrid<f64>;
pub type ExactFieldGrid = FieldGrid<Exact>;

pub type PolicyParams32 = PolicyParams<f32>;
pub type PolicyParams64 = PolicyParams<f64>;

pub type ExperimentConfig32 = ExperimentConfig<f32>;
pub type ExperimentConfig64 = ExperimentConfig<f64>;

pub type Fit64 = Fit<f64>;
