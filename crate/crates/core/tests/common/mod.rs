#![allow(dead_code)]

use std::path::PathBuf;

use alf_core::grid::{neighbors8, GridDims, GridPos, TargetShape};
use rand::seq::SliceRandom;
use rand::Rng;

pub fn shapes_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../shapes")
}

/// Grows a random 8-connected shape of `size` cells from a random seed cell.
pub fn random_shape<R: Rng>(rng: &mut R, dims: GridDims, size: usize) -> TargetShape {
    assert!(size >= 1 && size <= dims.cell_count());
    let start = GridPos::new(rng.gen_range(1..=dims.height), rng.gen_range(1..=dims.width));
    let mut cells = vec![start];
    while cells.len() < size {
        let from = *cells.choose(rng).unwrap();
        let options: Vec<GridPos> = neighbors8(from, dims).into_iter().filter(|n| !cells.contains(n)).collect();
        if let Some(&next) = options.choose(rng) {
            cells.push(next);
        }
    }
    TargetShape::new(dims, cells).unwrap()
}

/// `n` distinct uniformly chosen cells.
pub fn random_positions<R: Rng>(rng: &mut R, dims: GridDims, n: usize) -> Vec<GridPos> {
    let mut all: Vec<GridPos> = dims.cells().collect();
    all.shuffle(rng);
    all.truncate(n);
    all
}

pub fn random_dims<R: Rng>(rng: &mut R, max: u32) -> GridDims {
    GridDims::new(rng.gen_range(1..=max), rng.gen_range(1..=max)).unwrap()
}
