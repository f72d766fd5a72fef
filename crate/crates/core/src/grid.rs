//! Grid geometry, target shapes, system state and the state partitions.
//!
//! Positions are 1-based `(row, col)` pairs everywhere in the public API.
//! Dense per-cell storage uses the row-major index from [`GridDims::index`].

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ModelError {
    #[error("grid dimensions must be at least 1x1, got {height}x{width}")]
    EmptyGrid { height: u32, width: u32 },
    #[error("position {pos} is outside a {dims} grid")]
    OutOfBounds { pos: GridPos, dims: GridDims },
    #[error("target shape has no cells")]
    EmptyShape,
    #[error("target shape is not 8-connected ({components} components)")]
    Disconnected { components: usize },
    #[error("two agents share cell {0}")]
    DuplicatePosition(GridPos),
    #[error("{agents} agents cannot fill a shape of {cells} cells")]
    CountMismatch { agents: usize, cells: usize },
    #[error("dimension mismatch: state is {state}, shape is {shape}")]
    DimsMismatch { state: GridDims, shape: GridDims },
}

/// Environment bounds: `height` rows by `width` columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GridDims {
    pub height: u32,
    pub width: u32,
}

impl GridDims {
    pub fn new(height: u32, width: u32) -> Result<Self, ModelError> {
        if height == 0 || width == 0 {
            return Err(ModelError::EmptyGrid { height, width });
        }
        Ok(Self { height, width })
    }

    pub fn cell_count(&self) -> usize {
        self.height as usize * self.width as usize
    }

    pub fn contains(&self, pos: GridPos) -> bool {
        (1..=self.height).contains(&pos.row) && (1..=self.width).contains(&pos.col)
    }

    /// Row-major dense index of an in-bounds position.
    #[inline]
    pub fn index(&self, pos: GridPos) -> usize {
        debug_assert!(self.contains(pos), "{pos} outside {self}");
        (pos.row as usize - 1) * self.width as usize + (pos.col as usize - 1)
    }

    #[inline]
    pub fn pos_at(&self, index: usize) -> GridPos {
        let w = self.width as usize;
        GridPos::new((index / w) as u32 + 1, (index % w) as u32 + 1)
    }

    /// All cells in row-major order.
    pub fn cells(&self) -> impl Iterator<Item = GridPos> + '_ {
        (0..self.cell_count()).map(|i| self.pos_at(i))
    }
}

impl fmt::Display for GridDims {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.height, self.width)
    }
}

/// A grid cell, 1-based. Ordering is row-major.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GridPos {
    pub row: u32,
    pub col: u32,
}

impl GridPos {
    pub const fn new(row: u32, col: u32) -> Self {
        Self { row, col }
    }

    fn offset(self, dr: i64, dc: i64) -> Option<Self> {
        let row = self.row as i64 + dr;
        let col = self.col as i64 + dc;
        (row >= 1 && col >= 1).then(|| GridPos::new(row as u32, col as u32))
    }
}

impl fmt::Display for GridPos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.row, self.col)
    }
}

/// Moore-neighbourhood offsets in row-major scan order: NW, N, NE, W, E, SW, S, SE.
pub const NEIGHBOR_OFFSETS: [(i64, i64); 8] =
    [(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)];

/// In-bounds Moore neighbours of `pos`, in [`NEIGHBOR_OFFSETS`] order.
pub fn neighbors8(pos: GridPos, dims: GridDims) -> Vec<GridPos> {
    NEIGHBOR_OFFSETS
        .iter()
        .filter_map(|&(dr, dc)| pos.offset(dr, dc))
        .filter(|p| dims.contains(*p))
        .collect()
}

/// `pos` and its in-bounds neighbours, all in row-major order (`pos` sits
/// between W and E).
pub fn neighborhood9(pos: GridPos, dims: GridDims) -> Vec<GridPos> {
    let mut cells = Vec::with_capacity(9);
    for dr in -1..=1 {
        for dc in -1..=1 {
            if let Some(p) = pos.offset(dr, dc).filter(|p| dims.contains(*p)) {
                cells.push(p);
            }
        }
    }
    cells
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Manhattan,
    Euclidean,
    Chebyshev,
}

pub fn chebyshev(a: GridPos, b: GridPos) -> u32 {
    a.row.abs_diff(b.row).max(a.col.abs_diff(b.col))
}

pub fn manhattan(a: GridPos, b: GridPos) -> u32 {
    a.row.abs_diff(b.row) + a.col.abs_diff(b.col)
}

/// Squared Euclidean distance; integral on the grid.
pub fn euclidean_sq(a: GridPos, b: GridPos) -> u64 {
    let dr = a.row.abs_diff(b.row) as u64;
    let dc = a.col.abs_diff(b.col) as u64;
    dr * dr + dc * dc
}

pub fn distance<T: Scalar>(metric: Metric, a: GridPos, b: GridPos) -> T {
    match metric {
        Metric::Manhattan => T::from_u64(manhattan(a, b) as u64),
        Metric::Chebyshev => T::from_u64(chebyshev(a, b) as u64),
        Metric::Euclidean => T::from_u64(euclidean_sq(a, b)).sqrt(),
    }
}

/// Agent identity, `1..=N`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AgentId(pub u32);

impl AgentId {
    /// Zero-based slot for dense per-agent arrays.
    #[inline]
    pub fn slot(self) -> usize {
        self.0 as usize - 1
    }

    #[inline]
    pub fn from_slot(slot: usize) -> Self {
        AgentId(slot as u32 + 1)
    }
}

impl fmt::Display for AgentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "a{}", self.0)
    }
}

/// Membership bitmap plus the sorted member list of a cell set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CellSet {
    dims: GridDims,
    mask: Vec<bool>,
    cells: Vec<GridPos>,
}

impl CellSet {
    pub fn empty(dims: GridDims) -> Self {
        Self { dims, mask: vec![false; dims.cell_count()], cells: Vec::new() }
    }

    /// Builds the set, rejecting out-of-bounds cells and duplicates.
    pub fn from_distinct(
        dims: GridDims,
        cells: impl IntoIterator<Item = GridPos>,
    ) -> Result<Self, ModelError> {
        let mut mask = vec![false; dims.cell_count()];
        let mut count = 0;
        for pos in cells {
            if !dims.contains(pos) {
                return Err(ModelError::OutOfBounds { pos, dims });
            }
            let idx = dims.index(pos);
            if mask[idx] {
                return Err(ModelError::DuplicatePosition(pos));
            }
            mask[idx] = true;
            count += 1;
        }
        Ok(Self::from_mask_unchecked(dims, mask, count))
    }

    pub fn from_mask(dims: GridDims, mask: Vec<bool>) -> Self {
        assert_eq!(mask.len(), dims.cell_count());
        let count = mask.iter().filter(|&&m| m).count();
        Self::from_mask_unchecked(dims, mask, count)
    }

    fn from_mask_unchecked(dims: GridDims, mask: Vec<bool>, count: usize) -> Self {
        let mut cells = Vec::with_capacity(count);
        cells.extend(mask.iter().enumerate().filter(|(_, &m)| m).map(|(i, _)| dims.pos_at(i)));
        Self { dims, mask, cells }
    }

    #[inline]
    pub fn contains(&self, pos: GridPos) -> bool {
        self.dims.contains(pos) && self.mask[self.dims.index(pos)]
    }

    /// Members in row-major order.
    pub fn cells(&self) -> &[GridPos] {
        &self.cells
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn dims(&self) -> GridDims {
        self.dims
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn to_set(&self) -> BTreeSet<GridPos> {
        self.cells.iter().copied().collect()
    }
}

/// Number of 8-connected components of the cells marked in `mask`.
pub fn count_components(dims: GridDims, mask: &[bool]) -> usize {
    component_labels(dims, mask).1
}

/// Labels each marked cell with its 8-connected component (in order of the
/// component's first row-major cell). Unmarked cells get `usize::MAX`.
pub fn component_labels(dims: GridDims, mask: &[bool]) -> (Vec<usize>, usize) {
    let mut label = vec![usize::MAX; mask.len()];
    let mut next = 0;
    let mut stack = Vec::new();
    for start in 0..mask.len() {
        if !mask[start] || label[start] != usize::MAX {
            continue;
        }
        label[start] = next;
        stack.push(start);
        while let Some(i) = stack.pop() {
            for n in neighbors8(dims.pos_at(i), dims) {
                let j = dims.index(n);
                if mask[j] && label[j] == usize::MAX {
                    label[j] = next;
                    stack.push(j);
                }
            }
        }
        next += 1;
    }
    (label, next)
}

/// The connected set of target cells `S`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TargetShape {
    cells: CellSet,
}

impl TargetShape {
    pub fn new(dims: GridDims, cells: impl IntoIterator<Item = GridPos>) -> Result<Self, ModelError> {
        let set: BTreeSet<GridPos> = cells.into_iter().collect();
        Self::from_cell_set(CellSet::from_distinct(dims, set)?)
    }

    pub fn from_mask(dims: GridDims, mask: Vec<bool>) -> Result<Self, ModelError> {
        Self::from_cell_set(CellSet::from_mask(dims, mask))
    }

    fn from_cell_set(cells: CellSet) -> Result<Self, ModelError> {
        if cells.is_empty() {
            return Err(ModelError::EmptyShape);
        }
        let components = count_components(cells.dims(), cells.mask());
        if components != 1 {
            return Err(ModelError::Disconnected { components });
        }
        Ok(Self { cells })
    }

    pub fn dims(&self) -> GridDims {
        self.cells.dims()
    }

    #[inline]
    pub fn contains(&self, pos: GridPos) -> bool {
        self.cells.contains(pos)
    }

    /// Target cells in row-major order.
    pub fn cells(&self) -> &[GridPos] {
        self.cells.cells()
    }

    pub fn cell_set(&self) -> &CellSet {
        &self.cells
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// The injective map `p_t` from agents to cells, at time `time`.
///
/// Agent `a` lives at `positions[a.slot()]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SystemState {
    dims: GridDims,
    positions: Vec<GridPos>,
    pub time: u64,
}

impl SystemState {
    pub fn new(dims: GridDims, positions: Vec<GridPos>) -> Result<Self, ModelError> {
        CellSet::from_distinct(dims, positions.iter().copied())?;
        Ok(Self { dims, positions, time: 0 })
    }

    /// Constructs a state whose agent count must match the shape.
    pub fn for_shape(shape: &TargetShape, positions: Vec<GridPos>) -> Result<Self, ModelError> {
        if positions.len() != shape.len() {
            return Err(ModelError::CountMismatch { agents: positions.len(), cells: shape.len() });
        }
        Self::new(shape.dims(), positions)
    }

    pub fn dims(&self) -> GridDims {
        self.dims
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn position(&self, agent: AgentId) -> GridPos {
        self.positions[agent.slot()]
    }

    pub fn positions(&self) -> &[GridPos] {
        &self.positions
    }

    pub fn agents(&self) -> impl Iterator<Item = (AgentId, GridPos)> + '_ {
        self.positions.iter().enumerate().map(|(i, &p)| (AgentId::from_slot(i), p))
    }

    /// `img(p_t)`.
    pub fn occupancy(&self) -> CellSet {
        CellSet::from_distinct(self.dims, self.positions.iter().copied())
            .expect("state invariant: positions are distinct and in bounds")
    }
}

/// `I_t`, `O_t`, `C_t` and `U_t` for a state against a shape.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    pub inside: Vec<AgentId>,
    pub outside: Vec<AgentId>,
    pub occupied_targets: Vec<GridPos>,
    pub unoccupied_targets: Vec<GridPos>,
}

pub fn partition(state: &SystemState, shape: &TargetShape) -> Partition {
    debug_assert_eq!(state.dims(), shape.dims());
    let (inside, outside): (Vec<_>, Vec<_>) =
        state.agents().partition(|&(_, p)| shape.contains(p));
    let occupancy = state.occupancy();
    let (occupied_targets, unoccupied_targets) =
        shape.cells().iter().partition(|&&g| occupancy.contains(g));
    Partition {
        inside: inside.into_iter().map(|(a, _)| a).collect(),
        outside: outside.into_iter().map(|(a, _)| a).collect(),
        occupied_targets,
        unoccupied_targets,
    }
}

/// True iff every target cell is occupied.
pub fn is_target_state(state: &SystemState, shape: &TargetShape) -> bool {
    state.positions().iter().filter(|&&p| shape.contains(p)).count() == shape.len()
}
