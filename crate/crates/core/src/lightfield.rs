//! The artificial light field.
//!
//! Every unoccupied target cell emits blue light and every agent standing
//! outside the shape emits red light. The intensity seen at a cell is the sum
//! of the discounted contributions of all sources of that colour, with
//! sources visited in row-major order so that results are reproducible to the
//! last bit.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{
    chebyshev, euclidean_sq, manhattan, neighborhood9, CellSet, GridDims, GridPos, Metric,
    TargetShape,
};
use crate::scalar::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LightError {
    #[error("discount type must be in 1..=9, got {0}")]
    BadType(u8),
    #[error("light intensity must be positive")]
    NonPositiveIntensity,
    #[error("discount coefficient must be positive")]
    NonPositiveBeta,
}

/// How intensity falls off with distance.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decay {
    /// `L - beta * d`
    Linear,
    /// `L / (1 + beta * d)`
    Inverse,
    /// `L / (1 + beta * d^2)`
    SquaredInverse,
}

/// One of the nine discount functions: decay family x distance metric.
///
/// Types 1-3 are linear, 4-6 inverse, 7-9 squared-inverse; within each
/// family the metric cycles Manhattan, Euclidean, Chebyshev.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct DiscountType(u8);

impl DiscountType {
    pub const ALL: [DiscountType; 9] = [
        DiscountType(1),
        DiscountType(2),
        DiscountType(3),
        DiscountType(4),
        DiscountType(5),
        DiscountType(6),
        DiscountType(7),
        DiscountType(8),
        DiscountType(9),
    ];

    pub fn new(code: u8) -> Result<Self, LightError> {
        if (1..=9).contains(&code) {
            Ok(Self(code))
        } else {
            Err(LightError::BadType(code))
        }
    }

    pub fn code(self) -> u8 {
        self.0
    }

    pub fn decay(self) -> Decay {
        match (self.0 - 1) / 3 {
            0 => Decay::Linear,
            1 => Decay::Inverse,
            _ => Decay::SquaredInverse,
        }
    }

    pub fn metric(self) -> Metric {
        match (self.0 - 1) % 3 {
            0 => Metric::Manhattan,
            1 => Metric::Euclidean,
            _ => Metric::Chebyshev,
        }
    }
}

impl Default for DiscountType {
    fn default() -> Self {
        Self(6)
    }
}

impl TryFrom<u8> for DiscountType {
    type Error = LightError;

    fn try_from(code: u8) -> Result<Self, LightError> {
        Self::new(code)
    }
}

impl From<DiscountType> for u8 {
    fn from(t: DiscountType) -> u8 {
        t.0
    }
}

/// Source intensity `L`, discount coefficient `beta`, and the discount type.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LightParams<T = f64> {
    pub intensity: T,
    pub beta: T,
    pub discount: DiscountType,
}

impl<T: Scalar> LightParams<T> {
    pub fn new(intensity: T, beta: T, discount: DiscountType) -> Result<Self, LightError> {
        if intensity <= T::zero() {
            return Err(LightError::NonPositiveIntensity);
        }
        if beta <= T::zero() {
            return Err(LightError::NonPositiveBeta);
        }
        Ok(Self { intensity, beta, discount })
    }
}

impl<T: Scalar> Default for LightParams<T> {
    /// `L = 1000`, `beta = 1`, type 6.
    fn default() -> Self {
        Self { intensity: T::from_u64(1000), beta: T::one(), discount: DiscountType::default() }
    }
}

/// Intensity at `g` of a unit source at `source`. Linear types can go
/// negative at long range; that value is returned as is.
pub fn discount<T: Scalar>(params: &LightParams<T>, g: GridPos, source: GridPos) -> T {
    let metric = params.discount.metric();
    let l = params.intensity.clone();
    let beta = params.beta.clone();
    match params.discount.decay() {
        Decay::Linear => l - beta * crate::grid::distance::<T>(metric, g, source),
        Decay::Inverse => l / (T::one() + beta * crate::grid::distance::<T>(metric, g, source)),
        Decay::SquaredInverse => {
            let d2 = match metric {
                Metric::Manhattan => (manhattan(g, source) as u64).pow(2),
                Metric::Euclidean => euclidean_sq(g, source),
                Metric::Chebyshev => (chebyshev(g, source) as u64).pow(2),
            };
            l / (T::one() + beta * T::from_u64(d2))
        }
    }
}

/// Sum of discounted contributions at `g`, sources taken in slice order.
pub fn intensity_at<T: Scalar>(params: &LightParams<T>, g: GridPos, sources: &[GridPos]) -> T {
    sources.iter().fold(T::zero(), |acc, &s| acc + discount(params, g, s))
}

/// Light sources for one snapshot: blue = `U_t`, red = positions of `O_t`.
/// Both lists are row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LightSources {
    pub blue: Vec<GridPos>,
    pub red: Vec<GridPos>,
}

impl LightSources {
    pub fn new(shape: &TargetShape, occupied: &CellSet) -> Self {
        let blue = shape.cells().iter().copied().filter(|&g| !occupied.contains(g)).collect();
        let red = occupied.cells().iter().copied().filter(|&g| !shape.contains(g)).collect();
        Self { blue, red }
    }
}

/// Blue and (for in-shape agents) red intensity at one candidate cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldValue<T = f64> {
    pub blue: T,
    pub red: Option<T>,
}

/// The field restricted to an agent's current cell and its neighbours.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalField<T = f64> {
    /// Candidate cells in row-major order.
    pub entries: Vec<(GridPos, FieldValue<T>)>,
}

impl<T> LocalField<T> {
    pub fn get(&self, pos: GridPos) -> Option<&FieldValue<T>> {
        self.entries.iter().find(|(p, _)| *p == pos).map(|(_, v)| v)
    }
}

pub fn local_field<T: Scalar>(
    pos: GridPos,
    shape: &TargetShape,
    occupied: &CellSet,
    params: &LightParams<T>,
) -> LocalField<T> {
    local_field_from_sources(pos, shape, &LightSources::new(shape, occupied), params)
}

/// As [`local_field`], reusing sources computed once per iteration.
pub fn local_field_from_sources<T: Scalar>(
    pos: GridPos,
    shape: &TargetShape,
    sources: &LightSources,
    params: &LightParams<T>,
) -> LocalField<T> {
    let with_red = shape.contains(pos);
    let entries = neighborhood9(pos, shape.dims())
        .into_iter()
        .map(|p| {
            let blue = intensity_at(params, p, &sources.blue);
            let red = with_red.then(|| intensity_at(params, p, &sources.red));
            (p, FieldValue { blue, red })
        })
        .collect();
    LocalField { entries }
}

/// Blue and red intensity over the whole grid.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldGrid<T = f64> {
    pub dims: GridDims,
    pub blue: Vec<T>,
    pub red: Vec<T>,
}

impl<T: Clone> FieldGrid<T> {
    pub fn blue_at(&self, pos: GridPos) -> T {
        self.blue[self.dims.index(pos)].clone()
    }

    pub fn red_at(&self, pos: GridPos) -> T {
        self.red[self.dims.index(pos)].clone()
    }
}

/// Evaluates the field at every cell.
///
/// Accumulates source by source over the whole grid rather than cell by
/// cell; each cell still sees its sources in row-major order, so the values
/// match [`local_field`] exactly.
pub fn full_field<T: Scalar>(
    shape: &TargetShape,
    occupied: &CellSet,
    params: &LightParams<T>,
) -> FieldGrid<T> {
    let sources = LightSources::new(shape, occupied);
    full_field_from_sources(shape.dims(), &sources, params)
}

pub fn full_field_from_sources<T: Scalar>(
    dims: GridDims,
    sources: &LightSources,
    params: &LightParams<T>,
) -> FieldGrid<T> {
    let accumulate = |list: &[GridPos]| {
        let mut acc = vec![T::zero(); dims.cell_count()];
        for &s in list {
            for (i, slot) in acc.iter_mut().enumerate() {
                let v = std::mem::replace(slot, T::zero());
                *slot = v + discount(params, dims.pos_at(i), s);
            }
        }
        acc
    };
    FieldGrid { dims, blue: accumulate(&sources.blue), red: accumulate(&sources.red) }
}
