//! Centralized distance-optimal baseline.
//!
//! 1. Shortest-path length between every agent and every target cell. On an
//!    obstacle-free 8-connected grid this is the Chebyshev distance.
//! 2. Minimum-total-cost agent/target matching (Hungarian method).
//! 3. A synchronous step scheduler: every agent steps greedily along a
//!    shortest path to its target; blocked agents exchange targets with the
//!    agent in their way when that does not lengthen the pair's remaining
//!    work.
//!
//! The scheduler is a stand-in for path-vertex ordering, so the
//! `|A| + d_max - 1` iteration bound is checked and reported per run rather
//! than guaranteed.

use std::time::Instant;

use num_traits::{Bounded, Signed};
use thiserror::Error;

use crate::engine::{quality, EngineError, OptdBound, RunResult};
use crate::grid::{chebyshev, neighbors8, GridDims, GridPos, SystemState, TargetShape};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum OptdError {
    #[error("cost matrix must be square and non-empty ({rows} rows, row {bad} has {cols} columns)")]
    NotSquare { rows: usize, bad: usize, cols: usize },
    #[error("cost matrix entry ({row},{col}) is negative or not finite")]
    BadEntry { row: usize, col: usize },
    #[error("{agents} agents for {targets} targets")]
    CountMismatch { agents: usize, targets: usize },
}

/// Square cost matrix, rows = agents, columns = targets.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix<C = i64> {
    n: usize,
    data: Vec<C>,
}

impl<C: Copy + PartialOrd + Signed> CostMatrix<C> {
    pub fn from_rows(rows: Vec<Vec<C>>) -> Result<Self, OptdError> {
        let n = rows.len();
        let mut data = Vec::with_capacity(n * n);
        for (r, row) in rows.into_iter().enumerate() {
            if row.len() != n || n == 0 {
                return Err(OptdError::NotSquare { rows: n, bad: r, cols: row.len() });
            }
            for (c, v) in row.into_iter().enumerate() {
                // NaN fails the comparison
                if !(v >= C::zero()) {
                    return Err(OptdError::BadEntry { row: r, col: c });
                }
                data.push(v);
            }
        }
        if n == 0 {
            return Err(OptdError::NotSquare { rows: 0, bad: 0, cols: 0 });
        }
        Ok(Self { n, data })
    }
}

impl<C: Copy> CostMatrix<C> {
    pub fn size(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> C {
        self.data[row * self.n + col]
    }

    pub fn row(&self, row: usize) -> &[C] {
        &self.data[row * self.n..(row + 1) * self.n]
    }
}

/// Chebyshev distance from each agent's position to each target cell.
/// Columns follow the shape's row-major cell order.
pub fn cost_matrix(state: &SystemState, shape: &TargetShape) -> Result<CostMatrix<i64>, OptdError> {
    if state.len() != shape.len() {
        return Err(OptdError::CountMismatch { agents: state.len(), targets: shape.len() });
    }
    let n = state.len();
    let mut data = Vec::with_capacity(n * n);
    for &p in state.positions() {
        data.extend(shape.cells().iter().map(|&g| i64::from(chebyshev(p, g))));
    }
    Ok(CostMatrix { n, data })
}

/// A perfect matching of rows to columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Assignment<C = i64> {
    /// Column assigned to each row.
    pub column_of: Vec<usize>,
    pub total_cost: C,
    /// Largest single assigned cost.
    pub max_cost: C,
}

/// Minimum-cost perfect matching, O(n^3).
///
/// Shortest augmenting paths with row and column potentials. Rows are
/// inserted in index order and the first column reaching the minimum slack is
/// taken, so the result is deterministic.
pub fn hungarian<C>(costs: &CostMatrix<C>) -> Assignment<C>
where
    C: Copy + PartialOrd + Signed + Bounded,
{
    let n = costs.size();
    let inf = C::max_value();
    // 1-based with a virtual column 0, as is conventional for this method
    let mut u = vec![C::zero(); n + 1];
    let mut v = vec![C::zero(); n + 1];
    let mut row_of = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        row_of[0] = i;
        let mut j0 = 0;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = row_of[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = costs.get(i0 - 1, j - 1) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[row_of[j]] = u[row_of[j]] + delta;
                    v[j] = v[j] - delta;
                } else {
                    minv[j] = minv[j] - delta;
                }
            }
            j0 = j1;
            if row_of[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            row_of[j0] = row_of[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut column_of = vec![0; n];
    for j in 1..=n {
        column_of[row_of[j] - 1] = j - 1;
    }
    let mut total_cost = C::zero();
    let mut max_cost = C::zero();
    for (r, &c) in column_of.iter().enumerate() {
        let cost = costs.get(r, c);
        total_cost = total_cost + cost;
        if cost > max_cost {
            max_cost = cost;
        }
    }
    Assignment { column_of, total_cost, max_cost }
}

/// Each agent's assigned target cell.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TargetAssignment {
    /// Indexed by agent slot.
    pub target_of: Vec<GridPos>,
    pub total_cost: i64,
    pub d_max: i64,
}

pub fn assign(state: &SystemState, shape: &TargetShape) -> Result<TargetAssignment, OptdError> {
    let costs = cost_matrix(state, shape)?;
    let a = hungarian(&costs);
    Ok(TargetAssignment {
        target_of: a.column_of.iter().map(|&c| shape.cells()[c]).collect(),
        total_cost: a.total_cost,
        d_max: a.max_cost,
    })
}

/// Distance-reducing neighbours of `from` toward `goal`: the diagonal or
/// straight step first, then the rest in scan order.
fn reducing_steps(from: GridPos, goal: GridPos, dims: GridDims) -> Vec<GridPos> {
    let d = chebyshev(from, goal);
    if d == 0 {
        return Vec::new();
    }
    let direct = GridPos::new(step_toward(from.row, goal.row), step_toward(from.col, goal.col));
    let mut steps = vec![direct];
    steps.extend(
        neighbors8(from, dims)
            .into_iter()
            .filter(|&n| n != direct && chebyshev(n, goal) + 1 == d),
    );
    steps
}

fn step_toward(from: u32, to: u32) -> u32 {
    match from.cmp(&to) {
        std::cmp::Ordering::Less => from + 1,
        std::cmp::Ordering::Greater => from - 1,
        std::cmp::Ordering::Equal => from,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Validity {
    Unknown,
    Visiting,
    Valid,
    Invalid,
}

struct Scheduler {
    dims: GridDims,
    pos: Vec<GridPos>,
    goal: Vec<GridPos>,
    occupant: Vec<Option<usize>>,
}

impl Scheduler {
    fn remaining(&self, agent: usize) -> u32 {
        chebyshev(self.pos[agent], self.goal[agent])
    }

    fn finished(&self, agent: usize) -> bool {
        self.pos[agent] == self.goal[agent]
    }

    fn occupant(&self, cell: GridPos) -> Option<usize> {
        self.occupant[self.dims.index(cell)]
    }

    /// Exchanges targets when neither the pair's total nor its larger
    /// remaining distance grows.
    fn try_swap(&mut self, x: usize, y: usize) -> bool {
        let (dx, dy) = (self.remaining(x), self.remaining(y));
        let nx = chebyshev(self.pos[x], self.goal[y]);
        let ny = chebyshev(self.pos[y], self.goal[x]);
        if nx + ny <= dx + dy && nx.max(ny) <= dx.max(dy) {
            self.goal.swap(x, y);
            true
        } else {
            false
        }
    }

    /// Resolves blocked agents by target exchange. Returns whether any
    /// exchange happened.
    fn swap_phase(&mut self) -> bool {
        let n = self.pos.len();
        let mut any = false;
        // each pass only hands targets further along a blocked path, so n
        // passes suffice
        for _ in 0..n.max(1) {
            let mut changed = false;
            for x in 0..n {
                if self.finished(x) {
                    continue;
                }
                let steps = reducing_steps(self.pos[x], self.goal[x], self.dims);
                if steps.iter().any(|&c| self.occupant(c).is_none()) {
                    continue;
                }
                for &c in &steps {
                    let y = self.occupant(c).expect("all steps occupied");
                    let head_on = !self.finished(y)
                        && reducing_steps(self.pos[y], self.goal[y], self.dims).contains(&self.pos[x]);
                    if (self.finished(y) || head_on) && self.try_swap(x, y) {
                        changed = true;
                        break;
                    }
                }
            }
            any |= changed;
            if !changed {
                break;
            }
        }
        any
    }

    /// Claims one cell per unfinished agent, keeps the claims whose chain of
    /// vacating occupants ends in a free cell, and applies them at once.
    /// Returns the number of agents moved.
    fn move_phase(&mut self) -> usize {
        let n = self.pos.len();
        let mut claimed = vec![false; self.dims.cell_count()];
        let mut claim: Vec<Option<GridPos>> = vec![None; n];
        for x in 0..n {
            if self.finished(x) {
                continue;
            }
            for c in reducing_steps(self.pos[x], self.goal[x], self.dims) {
                let idx = self.dims.index(c);
                if claimed[idx] {
                    continue;
                }
                match self.occupant[idx] {
                    Some(y) if self.finished(y) => continue,
                    _ => {
                        claimed[idx] = true;
                        claim[x] = Some(c);
                        break;
                    }
                }
            }
        }
        let mut validity = vec![Validity::Unknown; n];
        for x in 0..n {
            self.resolve(x, &claim, &mut validity);
        }
        let movers: Vec<usize> = (0..n).filter(|&x| validity[x] == Validity::Valid).collect();
        for &x in &movers {
            self.occupant[self.dims.index(self.pos[x])] = None;
        }
        for &x in &movers {
            let to = claim[x].expect("valid movers have claims");
            self.pos[x] = to;
            self.occupant[self.dims.index(to)] = Some(x);
        }
        movers.len()
    }

    fn resolve(&self, start: usize, claim: &[Option<GridPos>], validity: &mut [Validity]) {
        // follow the chain iteratively: start -> occupant of its claim -> ...
        let mut chain = Vec::new();
        let mut x = start;
        let verdict = loop {
            match validity[x] {
                Validity::Valid => break Validity::Valid,
                Validity::Invalid => break Validity::Invalid,
                // cycle: rotations are not allowed
                Validity::Visiting => break Validity::Invalid,
                Validity::Unknown => {}
            }
            let Some(target) = claim[x] else {
                break Validity::Invalid;
            };
            validity[x] = Validity::Visiting;
            chain.push(x);
            match self.occupant(target) {
                None => break Validity::Valid,
                Some(y) => x = y,
            }
        };
        for a in chain {
            validity[a] = verdict;
        }
        if validity[start] == Validity::Unknown {
            validity[start] = verdict;
        }
    }
}

/// Runs the step scheduler from `state` with the given targets.
pub fn schedule(state: &SystemState, assignment: &TargetAssignment, shape: &TargetShape) -> RunResult {
    let dims = state.dims();
    let n = state.len();
    let mut occupant = vec![None; dims.cell_count()];
    for (slot, &p) in state.positions().iter().enumerate() {
        occupant[dims.index(p)] = Some(slot);
    }
    let mut s = Scheduler {
        dims,
        pos: state.positions().to_vec(),
        goal: assignment.target_of.clone(),
        occupant,
    };
    let d_max = assignment.d_max.max(0) as u64;
    let bound = (n as u64 + d_max).saturating_sub(1);
    let hard_cap = 4 * (bound + 1) + 16;
    let mut trace = vec![s.pos.clone()];
    let mut iterations = 0u64;
    let mut stalled = false;
    while (0..n).any(|a| !s.finished(a)) {
        if iterations >= hard_cap {
            stalled = true;
            break;
        }
        let swapped = s.swap_phase();
        if (0..n).all(|a| s.finished(a)) {
            break;
        }
        let moved = s.move_phase();
        if moved == 0 && !swapped {
            stalled = true;
            break;
        }
        iterations += 1;
        trace.push(s.pos.clone());
    }
    let completed = !stalled;
    RunResult {
        completed,
        iterations,
        wall_seconds: 0.0,
        final_quality: quality(shape, &s.pos),
        workers: 1,
        optd: Some(OptdBound { d_max, bound, bound_violated: !completed || iterations > bound }),
        trace: Some(trace),
    }
}

/// Cost matrix, assignment and schedule, timed together.
pub fn solve(state: &SystemState, shape: &TargetShape) -> Result<RunResult, EngineError> {
    let start = Instant::now();
    let assignment = assign(state, shape).map_err(|e| EngineError::Config(e.to_string()))?;
    let mut result = schedule(state, &assignment, shape);
    result.wall_seconds = start.elapsed().as_secs_f64();
    Ok(result)
}
