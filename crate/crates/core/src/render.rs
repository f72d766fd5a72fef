//! Frame output for recorded traces.
//!
//! ASCII frames: `#` agent on a target cell, `o` agent off the shape,
//! `+` unoccupied target cell, `.` empty background.
//!
//! PPM frames (binary P6, one pixel per cell times `scale`): red agents off
//! the shape, green agents on it, blue unoccupied targets, white background.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::grid::{GridPos, TargetShape};
use crate::lightfield::FieldGrid;
use crate::scalar::Scalar;

pub const OFF_SHAPE_AGENT: [u8; 3] = [255, 0, 0];
pub const ON_SHAPE_AGENT: [u8; 3] = [0, 255, 0];
pub const OPEN_TARGET: [u8; 3] = [0, 0, 255];
pub const BACKGROUND: [u8; 3] = [255, 255, 255];

#[derive(Debug, Error)]
pub enum RenderError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("scale must be at least 1")]
    ZeroScale,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FrameFormat {
    Ascii,
    Ppm,
}

impl FrameFormat {
    pub fn extension(self) -> &'static str {
        match self {
            FrameFormat::Ascii => "txt",
            FrameFormat::Ppm => "ppm",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Cell {
    AgentOn,
    AgentOff,
    OpenTarget,
    Empty,
}

fn classify(shape: &TargetShape, positions: &[GridPos]) -> Vec<Cell> {
    let dims = shape.dims();
    let mut cells: Vec<Cell> = dims
        .cells()
        .map(|p| if shape.contains(p) { Cell::OpenTarget } else { Cell::Empty })
        .collect();
    for &p in positions {
        let i = dims.index(p);
        cells[i] = if cells[i] == Cell::OpenTarget { Cell::AgentOn } else { Cell::AgentOff };
    }
    cells
}

pub fn ascii_frame(shape: &TargetShape, positions: &[GridPos]) -> String {
    let w = shape.dims().width as usize;
    let cells = classify(shape, positions);
    let mut out = String::with_capacity(cells.len() + cells.len() / w);
    for row in cells.chunks(w) {
        out.extend(row.iter().map(|c| match c {
            Cell::AgentOn => '#',
            Cell::AgentOff => 'o',
            Cell::OpenTarget => '+',
            Cell::Empty => '.',
        }));
        out.push('\n');
    }
    out
}

pub fn ppm_frame(shape: &TargetShape, positions: &[GridPos], scale: usize) -> Vec<u8> {
    let dims = shape.dims();
    let (w, h) = (dims.width as usize, dims.height as usize);
    let cells = classify(shape, positions);
    let mut out = format!("P6\n{} {}\n255\n", w * scale, h * scale).into_bytes();
    for row in cells.chunks(w) {
        let mut line = Vec::with_capacity(w * scale * 3);
        for c in row {
            let rgb = match c {
                Cell::AgentOn => ON_SHAPE_AGENT,
                Cell::AgentOff => OFF_SHAPE_AGENT,
                Cell::OpenTarget => OPEN_TARGET,
                Cell::Empty => BACKGROUND,
            };
            for _ in 0..scale {
                line.extend_from_slice(&rgb);
            }
        }
        for _ in 0..scale {
            out.extend_from_slice(&line);
        }
    }
    out
}

/// Writes `frame_NNNNN.<ext>` for every entry of `trace` and returns the paths.
pub fn render_frames(
    trace: &[Vec<GridPos>],
    shape: &TargetShape,
    out_dir: &Path,
    format: FrameFormat,
    scale: usize,
) -> Result<Vec<PathBuf>, RenderError> {
    if scale == 0 {
        return Err(RenderError::ZeroScale);
    }
    fs::create_dir_all(out_dir).map_err(|source| RenderError::Io { path: out_dir.to_path_buf(), source })?;
    let mut paths = Vec::with_capacity(trace.len());
    for (t, positions) in trace.iter().enumerate() {
        let path = out_dir.join(format!("frame_{t:05}.{}", format.extension()));
        let bytes = match format {
            FrameFormat::Ascii => ascii_frame(shape, positions).into_bytes(),
            FrameFormat::Ppm => ppm_frame(shape, positions, scale),
        };
        fs::write(&path, bytes).map_err(|source| RenderError::Io { path: path.clone(), source })?;
        paths.push(path);
    }
    Ok(paths)
}

/// One light channel as whitespace-separated rows.
pub fn field_matrix<T: Scalar>(field: &FieldGrid<T>, red: bool) -> String {
    let values = if red { &field.red } else { &field.blue };
    let w = field.dims.width as usize;
    let mut out = String::new();
    for row in values.chunks(w) {
        for (i, v) in row.iter().enumerate() {
            if i > 0 {
                out.push(' ');
            }
            let _ = write!(out, "{:.6}", v.to_f64());
        }
        out.push('\n');
    }
    out
}
