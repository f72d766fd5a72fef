//! Per-agent behaviour: ranking the candidate cells, then walking that ranking
//! against the coordinator's locks.

use std::cmp::Ordering;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::coordinator::{CoordinatorError, LockOutcome, LockService};
use crate::grid::{neighborhood9, AgentId, CellSet, GridPos, TargetShape};
use crate::lightfield::{local_field_from_sources, FieldValue, LightParams, LightSources};
use crate::scalar::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PolicyError {
    #[error("threshold W must lie in [0, 1], got {0}")]
    BadThreshold(f64),
    #[error("exploration rate must lie in [0, 1], got {0}")]
    BadGamma(f64),
}

/// Whether an agent already inside the shape may step onto a non-target
/// cell, given that leaving is switched on.
///
/// `Pseudocode` follows the queue-construction listing literally, which with
/// the flag set keeps in-shape agents on target cells. `Prose` follows the
/// parameter's description and lets them step out.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LeaveMode {
    #[default]
    Pseudocode,
    Prose,
}

impl LeaveMode {
    pub fn admits_leaving(self) -> bool {
        matches!(self, LeaveMode::Prose)
    }
}

impl std::str::FromStr for LeaveMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "pseudocode" => Ok(LeaveMode::Pseudocode),
            "prose" => Ok(LeaveMode::Prose),
            other => Err(format!("unknown leave mode {other:?} (expected pseudocode|prose)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyParams<T = f64> {
    /// Switch point for in-shape agents, compared against the outside ratio.
    pub w_threshold: f64,
    /// Exploration rate.
    pub gamma: f64,
    pub leave_mode: LeaveMode,
    pub light: LightParams<T>,
}

impl<T: Scalar> PolicyParams<T> {
    pub fn new(
        w_threshold: f64,
        gamma: f64,
        leave_mode: LeaveMode,
        light: LightParams<T>,
    ) -> Result<Self, PolicyError> {
        if !(0.0..=1.0).contains(&w_threshold) {
            return Err(PolicyError::BadThreshold(w_threshold));
        }
        if !(0.0..=1.0).contains(&gamma) {
            return Err(PolicyError::BadGamma(gamma));
        }
        Ok(Self { w_threshold, gamma, leave_mode, light })
    }
}

impl<T: Scalar> Default for PolicyParams<T> {
    /// `W = 0.15`, `gamma = 0.2`, pseudocode leave mode, default light.
    fn default() -> Self {
        Self { w_threshold: 0.15, gamma: 0.2, leave_mode: LeaveMode::Pseudocode, light: LightParams::default() }
    }
}

/// Which key ordering ranks the candidates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SortRule {
    /// Agents outside the shape.
    BlueDesc,
    /// In-shape agents while many agents are still outside.
    BlueDescRedAsc,
    /// In-shape agents near completion.
    RedAsc,
}

impl SortRule {
    pub fn select(in_shape: bool, outside_ratio: f64, w_threshold: f64) -> Self {
        match (in_shape, outside_ratio > w_threshold) {
            (false, _) => SortRule::BlueDesc,
            (true, true) => SortRule::BlueDescRedAsc,
            (true, false) => SortRule::RedAsc,
        }
    }

    /// `Less` when `a` ranks ahead of `b`.
    pub fn compare<T: Scalar>(self, a: &FieldValue<T>, b: &FieldValue<T>) -> Ordering {
        let blue_desc = || b.blue.partial_cmp(&a.blue).unwrap_or(Ordering::Equal);
        let red_asc = || a.red.partial_cmp(&b.red).unwrap_or(Ordering::Equal);
        match self {
            SortRule::BlueDesc => blue_desc(),
            SortRule::BlueDescRedAsc => blue_desc().then_with(red_asc),
            SortRule::RedAsc => red_asc(),
        }
    }
}

/// `|occupied \ S| / |S|`.
pub fn outside_ratio(sources: &LightSources, shape: &TargetShape) -> f64 {
    sources.red.len() as f64 / shape.len() as f64
}

/// Ranked next positions, best first. Always contains the current cell.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CandidateQueue {
    cells: Vec<GridPos>,
}

impl CandidateQueue {
    /// Wraps an explicit ranking (mostly for tests and replay).
    pub fn from_cells(cells: Vec<GridPos>) -> Self {
        Self { cells }
    }

    pub fn cells(&self) -> &[GridPos] {
        &self.cells
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn head(&self) -> Option<GridPos> {
        self.cells.first().copied()
    }
}

pub fn build_queue<T: Scalar>(
    pos: GridPos,
    shape: &TargetShape,
    occupied: &CellSet,
    params: &PolicyParams<T>,
) -> CandidateQueue {
    let sources = LightSources::new(shape, occupied);
    let ratio = outside_ratio(&sources, shape);
    build_queue_from_sources(pos, shape, &sources, ratio, params)
}

/// As [`build_queue`], with sources and outside ratio computed once per
/// iteration by the caller.
pub fn build_queue_from_sources<T: Scalar>(
    pos: GridPos,
    shape: &TargetShape,
    sources: &LightSources,
    outside_ratio: f64,
    params: &PolicyParams<T>,
) -> CandidateQueue {
    let in_shape = shape.contains(pos);
    let rule = SortRule::select(in_shape, outside_ratio, params.w_threshold);
    let admits = |p: GridPos| {
        p == pos || !in_shape || shape.contains(p) || params.leave_mode.admits_leaving()
    };
    let field = local_field_from_sources(pos, shape, sources, &params.light);
    let mut ranked: Vec<(GridPos, FieldValue<T>)> =
        field.entries.into_iter().filter(|(p, _)| admits(*p)).collect();
    // entries arrive row-major; the stable sort keeps that order among equal keys
    ranked.sort_by(|(pa, a), (pb, b)| {
        rule.compare(a, b).then_with(|| (*pa == pos).cmp(&(*pb == pos)))
    });
    debug_assert!(ranked.iter().any(|(p, _)| *p == pos));
    debug_assert!(ranked.iter().all(|(p, _)| neighborhood9(pos, shape.dims()).contains(p)));
    CandidateQueue { cells: ranked.into_iter().map(|(p, _)| p).collect() }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Decision {
    pub next: GridPos,
    /// True iff `next` was newly locked for the agent.
    pub acquired: bool,
}

/// Walks the queue head first until a lock is granted.
///
/// Reaching the current cell costs one uniform draw: below `gamma` the agent
/// skips it and keeps looking, otherwise it stays. The agent's own lock is
/// never touched here.
pub fn decide<L, R>(
    queue: &CandidateQueue,
    agent: AgentId,
    current: GridPos,
    gamma: f64,
    locks: &L,
    rng: &mut R,
) -> Result<Decision, CoordinatorError>
where
    L: LockService + ?Sized,
    R: Rng + ?Sized,
{
    for &cell in queue.cells() {
        if cell == current {
            if rng.gen::<f64>() < gamma {
                continue;
            }
            break;
        }
        if locks.try_lock(agent, cell)? == LockOutcome::Succ {
            return Ok(Decision { next: cell, acquired: true });
        }
    }
    Ok(Decision { next: current, acquired: false })
}
