//! The lightweight coordinator: per-cell mutexes, the agent message protocol,
//! and the iteration barrier.
//!
//! Every cell is an exclusive resource. `try_lock` and `leave` are lock-free
//! compare-and-swap operations on the owner table and may be called from any
//! number of agent workers at once. Iteration boundaries (`snapshot`,
//! `complete_step`) are driven by a single caller.

use std::sync::atomic::{AtomicBool, AtomicU32, AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{chebyshev, AgentId, CellSet, GridDims, GridPos, ModelError, TargetShape};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CoordinatorError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("unknown agent {0}")]
    UnknownAgent(AgentId),
    #[error("{agent} released {pos} which it does not own")]
    NotOwner { agent: AgentId, pos: GridPos },
    #[error("{0} sent a leave signal without holding a new cell")]
    LeaveWithoutAcquire(AgentId),
    #[error("{0} sent two leave signals in one iteration")]
    DoubleLeave(AgentId),
    #[error("{0} requested a second cell in one iteration")]
    SecondAcquire(AgentId),
    #[error("barrier violation: {0} did not report a new position")]
    MissingReport(AgentId),
    #[error("barrier violation: {0} reported twice")]
    DuplicateReport(AgentId),
    #[error("{agent} reported {reported}, expected {expected}")]
    WrongReport { agent: AgentId, reported: GridPos, expected: GridPos },
    #[error("{agent} acquired {granted} but never released its old cell")]
    MissingLeave { agent: AgentId, granted: GridPos },
    #[error("invariant violated at t={time}: {detail}")]
    Invariant { time: u64, detail: String },
    #[error("message {0} is not accepted by the coordinator")]
    UnexpectedMessage(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Pulse {
    Work,
    Stop,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum LockOutcome {
    Succ,
    Fail,
}

/// Agent <-> coordinator message vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub enum Message {
    InitPos { agent: AgentId, pos: GridPos },
    Pulse(Pulse),
    Poss(Arc<CellSet>),
    PrefPosReq { agent: AgentId, pos: GridPos },
    PrefPosRes(LockOutcome),
    LeaveSig { agent: AgentId },
    NewPos { agent: AgentId, pos: GridPos },
}

impl Message {
    fn kind(&self) -> &'static str {
        match self {
            Message::InitPos { .. } => "INIT_POS",
            Message::Pulse(_) => "PULSE",
            Message::Poss(_) => "POSS",
            Message::PrefPosReq { .. } => "PREF_POS_REQ",
            Message::PrefPosRes(_) => "PREF_POS_RES",
            Message::LeaveSig { .. } => "LEAVE_SIG",
            Message::NewPos { .. } => "NEW_POS",
        }
    }
}

/// Anything an agent can ask to lock a cell for it.
pub trait LockService {
    fn try_lock(&self, agent: AgentId, pos: GridPos) -> Result<LockOutcome, CoordinatorError>;
}

const UNOWNED: u32 = 0;

/// Owner per cell; `0` means free, otherwise the agent id.
#[derive(Debug)]
pub struct LockTable {
    dims: GridDims,
    owner: Vec<AtomicU32>,
}

impl LockTable {
    pub fn new(dims: GridDims) -> Self {
        Self { dims, owner: (0..dims.cell_count()).map(|_| AtomicU32::new(UNOWNED)).collect() }
    }

    pub fn dims(&self) -> GridDims {
        self.dims
    }

    /// Non-blocking acquire: succeeds iff the cell is free.
    pub fn try_lock(&self, agent: AgentId, pos: GridPos) -> LockOutcome {
        match self.owner[self.dims.index(pos)].compare_exchange(
            UNOWNED,
            agent.0,
            Ordering::AcqRel,
            Ordering::Acquire,
        ) {
            Ok(_) => LockOutcome::Succ,
            Err(_) => LockOutcome::Fail,
        }
    }

    /// Releases `pos` iff `agent` owns it.
    pub fn unlock(&self, agent: AgentId, pos: GridPos) -> Result<(), CoordinatorError> {
        self.owner[self.dims.index(pos)]
            .compare_exchange(agent.0, UNOWNED, Ordering::AcqRel, Ordering::Acquire)
            .map(|_| ())
            .map_err(|_| CoordinatorError::NotOwner { agent, pos })
    }

    pub fn owner(&self, pos: GridPos) -> Option<AgentId> {
        match self.owner[self.dims.index(pos)].load(Ordering::Acquire) {
            UNOWNED => None,
            id => Some(AgentId(id)),
        }
    }

    /// All owned cells, row-major.
    pub fn owned(&self) -> Vec<(GridPos, AgentId)> {
        self.owner
            .iter()
            .enumerate()
            .filter_map(|(i, o)| match o.load(Ordering::Acquire) {
                UNOWNED => None,
                id => Some((self.dims.pos_at(i), AgentId(id))),
            })
            .collect()
    }
}

#[derive(Debug)]
struct Boundary {
    positions: Vec<GridPos>,
    snapshot: Arc<CellSet>,
    pending_reports: Vec<(AgentId, GridPos)>,
}

/// In-process coordinator shared by all agent workers of one run.
#[derive(Debug)]
pub struct Coordinator {
    shape: Arc<TargetShape>,
    locks: LockTable,
    /// Row-major index of each agent's cell at the current time.
    current: Vec<AtomicU32>,
    /// Cell index + 1 granted to each agent this iteration, or 0.
    granted: Vec<AtomicU32>,
    left: Vec<AtomicBool>,
    time: AtomicU64,
    boundary: Mutex<Boundary>,
}

impl Coordinator {
    /// Receives the initial positions and locks every one of them.
    pub fn new(shape: Arc<TargetShape>, positions: Vec<GridPos>) -> Result<Self, CoordinatorError> {
        let dims = shape.dims();
        if positions.len() != shape.len() {
            return Err(ModelError::CountMismatch { agents: positions.len(), cells: shape.len() }.into());
        }
        let snapshot = CellSet::from_distinct(dims, positions.iter().copied())?;
        let locks = LockTable::new(dims);
        for (slot, &pos) in positions.iter().enumerate() {
            let outcome = locks.try_lock(AgentId::from_slot(slot), pos);
            debug_assert_eq!(outcome, LockOutcome::Succ);
        }
        let n = positions.len();
        Ok(Self {
            current: positions.iter().map(|&p| AtomicU32::new(dims.index(p) as u32)).collect(),
            granted: (0..n).map(|_| AtomicU32::new(0)).collect(),
            left: (0..n).map(|_| AtomicBool::new(false)).collect(),
            time: AtomicU64::new(0),
            boundary: Mutex::new(Boundary {
                positions,
                snapshot: Arc::new(snapshot),
                pending_reports: Vec::with_capacity(n),
            }),
            shape,
            locks,
        })
    }

    /// Builds a coordinator from `InitPos` messages.
    pub fn from_messages(
        shape: Arc<TargetShape>,
        messages: impl IntoIterator<Item = Message>,
    ) -> Result<Self, CoordinatorError> {
        let mut positions = vec![None; shape.len()];
        for msg in messages {
            match msg {
                Message::InitPos { agent, pos } => {
                    let slot = positions
                        .get_mut(agent.slot())
                        .ok_or(CoordinatorError::UnknownAgent(agent))?;
                    if slot.replace(pos).is_some() {
                        return Err(CoordinatorError::DuplicateReport(agent));
                    }
                }
                other => return Err(CoordinatorError::UnexpectedMessage(other.kind())),
            }
        }
        let positions = positions
            .into_iter()
            .enumerate()
            .map(|(slot, p)| p.ok_or(CoordinatorError::MissingReport(AgentId::from_slot(slot))))
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(shape, positions)
    }

    pub fn shape(&self) -> &TargetShape {
        &self.shape
    }

    pub fn agent_count(&self) -> usize {
        self.current.len()
    }

    pub fn time(&self) -> u64 {
        self.time.load(Ordering::Acquire)
    }

    pub fn locks(&self) -> &LockTable {
        &self.locks
    }

    /// `img(p_t)` as an immutable snapshot.
    pub fn snapshot(&self) -> Arc<CellSet> {
        self.boundary.lock().unwrap().snapshot.clone()
    }

    /// `p_t`, indexed by agent slot.
    pub fn positions(&self) -> Vec<GridPos> {
        self.boundary.lock().unwrap().positions.clone()
    }

    /// The pulse to broadcast before the next iteration.
    pub fn pulse(&self) -> Pulse {
        let snapshot = self.snapshot();
        if self.shape.cells().iter().all(|&g| snapshot.contains(g)) {
            Pulse::Stop
        } else {
            Pulse::Work
        }
    }

    fn check_agent(&self, agent: AgentId) -> Result<usize, CoordinatorError> {
        let slot = (agent.0 as usize).wrapping_sub(1);
        if slot < self.current.len() {
            Ok(slot)
        } else {
            Err(CoordinatorError::UnknownAgent(agent))
        }
    }

    /// Non-blocking lock request for `agent`'s next cell.
    pub fn try_lock(&self, agent: AgentId, pos: GridPos) -> Result<LockOutcome, CoordinatorError> {
        let slot = self.check_agent(agent)?;
        let dims = self.shape.dims();
        if !dims.contains(pos) {
            return Err(ModelError::OutOfBounds { pos, dims }.into());
        }
        if self.granted[slot].load(Ordering::Acquire) != 0 {
            return Err(CoordinatorError::SecondAcquire(agent));
        }
        let outcome = self.locks.try_lock(agent, pos);
        if outcome == LockOutcome::Succ {
            self.granted[slot].store(dims.index(pos) as u32 + 1, Ordering::Release);
        }
        Ok(outcome)
    }

    /// Releases `agent`'s old cell after it acquired a new one. The freed cell
    /// is immediately available to other agents.
    pub fn leave(&self, agent: AgentId, old_pos: GridPos) -> Result<(), CoordinatorError> {
        let slot = self.check_agent(agent)?;
        let dims = self.shape.dims();
        if !dims.contains(old_pos)
            || self.current[slot].load(Ordering::Acquire) as usize != dims.index(old_pos)
        {
            return Err(CoordinatorError::NotOwner { agent, pos: old_pos });
        }
        if self.granted[slot].load(Ordering::Acquire) == 0 {
            return Err(CoordinatorError::LeaveWithoutAcquire(agent));
        }
        if self.left[slot].swap(true, Ordering::AcqRel) {
            return Err(CoordinatorError::DoubleLeave(agent));
        }
        self.locks.unlock(agent, old_pos)
    }

    /// Message-level entry point. `PrefPosReq` is answered with `PrefPosRes`;
    /// the last `NewPos` of an iteration closes the barrier and yields the
    /// next `Pulse`.
    pub fn handle(&self, msg: Message) -> Result<Option<Message>, CoordinatorError> {
        match msg {
            Message::PrefPosReq { agent, pos } => {
                Ok(Some(Message::PrefPosRes(self.try_lock(agent, pos)?)))
            }
            Message::LeaveSig { agent } => {
                let slot = self.check_agent(agent)?;
                let old = self.shape.dims().pos_at(self.current[slot].load(Ordering::Acquire) as usize);
                self.leave(agent, old)?;
                Ok(None)
            }
            Message::NewPos { agent, pos } => {
                self.check_agent(agent)?;
                let reports = {
                    let mut b = self.boundary.lock().unwrap();
                    b.pending_reports.push((agent, pos));
                    if b.pending_reports.len() < self.agent_count() {
                        return Ok(None);
                    }
                    std::mem::take(&mut b.pending_reports)
                };
                Ok(Some(Message::Pulse(self.complete_step(&reports)?)))
            }
            other => Err(CoordinatorError::UnexpectedMessage(other.kind())),
        }
    }

    /// Closes the iteration: records `p_{t+1}`, checks every boundary
    /// invariant, advances time, and returns `Stop` once the shape is formed.
    pub fn complete_step(&self, reports: &[(AgentId, GridPos)]) -> Result<Pulse, CoordinatorError> {
        let n = self.agent_count();
        let dims = self.shape.dims();
        let time = self.time();
        let mut next: Vec<Option<GridPos>> = vec![None; n];
        for &(agent, pos) in reports {
            let slot = self.check_agent(agent)?;
            if next[slot].replace(pos).is_some() {
                return Err(CoordinatorError::DuplicateReport(agent));
            }
        }
        let mut b = self.boundary.lock().unwrap();
        let mut new_positions = Vec::with_capacity(n);
        for (slot, reported) in next.into_iter().enumerate() {
            let agent = AgentId::from_slot(slot);
            let reported = reported.ok_or(CoordinatorError::MissingReport(agent))?;
            let old = b.positions[slot];
            let granted = self.granted[slot].load(Ordering::Acquire);
            let expected = if granted == 0 { old } else { dims.pos_at(granted as usize - 1) };
            if reported != expected {
                return Err(CoordinatorError::WrongReport { agent, reported, expected });
            }
            if granted != 0 && !self.left[slot].load(Ordering::Acquire) {
                return Err(CoordinatorError::MissingLeave { agent, granted: expected });
            }
            if chebyshev(old, reported) > 1 {
                return Err(CoordinatorError::Invariant {
                    time,
                    detail: format!("{agent} jumped from {old} to {reported}"),
                });
            }
            if self.locks.owner(reported) != Some(agent) {
                return Err(CoordinatorError::Invariant {
                    time,
                    detail: format!("{agent} at {reported} does not own its lock"),
                });
            }
            new_positions.push(reported);
        }
        let snapshot = CellSet::from_distinct(dims, new_positions.iter().copied()).map_err(|e| {
            CoordinatorError::Invariant { time, detail: format!("injectivity: {e}") }
        })?;
        let owned = self.locks.owned().len();
        if owned != n {
            return Err(CoordinatorError::Invariant {
                time,
                detail: format!("{owned} cells locked for {n} agents"),
            });
        }
        for (slot, &pos) in new_positions.iter().enumerate() {
            self.current[slot].store(dims.index(pos) as u32, Ordering::Release);
            self.granted[slot].store(0, Ordering::Release);
            self.left[slot].store(false, Ordering::Release);
        }
        b.positions = new_positions;
        b.snapshot = Arc::new(snapshot);
        drop(b);
        self.time.fetch_add(1, Ordering::AcqRel);
        Ok(self.pulse())
    }
}

impl LockService for Coordinator {
    fn try_lock(&self, agent: AgentId, pos: GridPos) -> Result<LockOutcome, CoordinatorError> {
        Coordinator::try_lock(self, agent, pos)
    }
}
