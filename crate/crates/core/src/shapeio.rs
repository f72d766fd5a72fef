//! Shape files: Netpbm bitmaps (P1 plain, P4 raw) and ASCII grids.
//!
//! A black PBM pixel (bit 1) and an ASCII `#` are target cells. Images are
//! rescaled to the environment by block majority and reduced to their
//! largest 8-connected component before they become a [`TargetShape`].

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use thiserror::Error;

use crate::grid::{component_labels, GridDims, ModelError, TargetShape};

#[derive(Debug, Error)]
pub enum ShapeError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("line {line}, byte {byte}: {message}")]
    Parse { line: usize, byte: usize, message: String },
    #[error("empty shape")]
    Empty,
    #[error("target grid must be at least 4x4, got {0}")]
    TooSmall(GridDims),
    #[error("unknown shape format {0:?} (expected pbm or ascii)")]
    UnknownFormat(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Format used when reading. PBM input may be either variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShapeFormat {
    Pbm,
    Ascii,
}

impl ShapeFormat {
    /// `.pbm` files are PBM, anything else is treated as ASCII.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("pbm") => ShapeFormat::Pbm,
            _ => ShapeFormat::Ascii,
        }
    }
}

impl FromStr for ShapeFormat {
    type Err = ShapeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "pbm" => Ok(ShapeFormat::Pbm),
            "ascii" | "txt" => Ok(ShapeFormat::Ascii),
            other => Err(ShapeError::UnknownFormat(other.to_string())),
        }
    }
}

/// Output encodings.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShapeEncoding {
    Ascii,
    PbmPlain,
    PbmRaw,
}

/// A binary image, `true` = target pixel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShapeDocument {
    pub name: String,
    dims: GridDims,
    pixels: Vec<bool>,
    /// Variant the document was read from, reused by [`save_shape`].
    encoding: ShapeEncoding,
}

impl ShapeDocument {
    pub fn new(name: impl Into<String>, dims: GridDims, pixels: Vec<bool>) -> Result<Self, ShapeError> {
        assert_eq!(pixels.len(), dims.cell_count(), "pixel buffer does not match dims");
        if !pixels.iter().any(|&p| p) {
            return Err(ShapeError::Empty);
        }
        Ok(Self { name: name.into(), dims, pixels, encoding: ShapeEncoding::Ascii })
    }

    pub fn dims(&self) -> GridDims {
        self.dims
    }

    /// Row-major pixels.
    pub fn pixels(&self) -> &[bool] {
        &self.pixels
    }

    /// 0-based pixel lookup.
    pub fn pixel(&self, row: usize, col: usize) -> bool {
        self.pixels[row * self.dims.width as usize + col]
    }

    pub fn target_count(&self) -> usize {
        self.pixels.iter().filter(|&&p| p).count()
    }

    pub fn encoding(&self) -> ShapeEncoding {
        self.encoding
    }

    fn with_encoding(mut self, encoding: ShapeEncoding) -> Self {
        self.encoding = encoding;
        self
    }
}

fn parse_err(line: usize, byte: usize, message: impl Into<String>) -> ShapeError {
    ShapeError::Parse { line, byte, message: message.into() }
}

fn dims_or_err(height: usize, width: usize, line: usize, byte: usize) -> Result<GridDims, ShapeError> {
    let h = u32::try_from(height).map_err(|_| parse_err(line, byte, "image too tall"))?;
    let w = u32::try_from(width).map_err(|_| parse_err(line, byte, "image too wide"))?;
    GridDims::new(h, w).map_err(|_| parse_err(line, byte, format!("invalid size {width}x{height}")))
}

/// Rows of `#` and `.`; the trailing newline is optional and `\r\n` is accepted.
pub fn parse_ascii(text: &str, name: &str) -> Result<ShapeDocument, ShapeError> {
    let mut pixels = Vec::new();
    let mut width = None;
    let mut height = 0;
    let mut offset = 0;
    for (i, raw) in text.split_inclusive('\n').enumerate() {
        let line_no = i + 1;
        let line = raw.trim_end_matches('\n').trim_end_matches('\r');
        let line_start = offset;
        offset += raw.len();
        if line.is_empty() {
            // only a final blank line is tolerated
            if offset == text.len() {
                continue;
            }
            return Err(parse_err(line_no, line_start, "blank line inside grid"));
        }
        for (j, ch) in line.char_indices() {
            match ch {
                '#' => pixels.push(true),
                '.' => pixels.push(false),
                other => {
                    return Err(parse_err(line_no, line_start + j, format!("unexpected character {other:?}")))
                }
            }
        }
        let len = line.chars().count();
        match width {
            None => width = Some(len),
            Some(w) if w != len => {
                return Err(parse_err(line_no, line_start, format!("row has {len} cells, expected {w}")))
            }
            _ => {}
        }
        height += 1;
    }
    let Some(width) = width else {
        return Err(parse_err(1, 0, "no rows"));
    };
    let dims = dims_or_err(height, width, height, text.len())?;
    ShapeDocument::new(name, dims, pixels).map(|d| d.with_encoding(ShapeEncoding::Ascii))
}

/// Byte cursor over a PBM file tracking 1-based line numbers.
struct Cursor<'a> {
    bytes: &'a [u8],
    at: usize,
    line: usize,
}

impl<'a> Cursor<'a> {
    fn err(&self, message: impl Into<String>) -> ShapeError {
        parse_err(self.line, self.at, message)
    }

    fn peek(&self) -> Option<u8> {
        self.bytes.get(self.at).copied()
    }

    fn bump(&mut self) -> Option<u8> {
        let b = self.peek()?;
        self.at += 1;
        if b == b'\n' {
            self.line += 1;
        }
        Some(b)
    }

    /// Whitespace and `#` comments.
    fn skip_space(&mut self) {
        while let Some(b) = self.peek() {
            if b == b'#' {
                while let Some(c) = self.bump() {
                    if c == b'\n' {
                        break;
                    }
                }
            } else if b.is_ascii_whitespace() {
                self.bump();
            } else {
                break;
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<usize, ShapeError> {
        self.skip_space();
        let start = self.at;
        while matches!(self.peek(), Some(b'0'..=b'9')) {
            self.bump();
        }
        if start == self.at {
            return Err(self.err(format!("expected {what}")));
        }
        std::str::from_utf8(&self.bytes[start..self.at])
            .expect("ascii digits")
            .parse()
            .map_err(|_| parse_err(self.line, start, format!("{what} out of range")))
    }
}

/// PBM in either the plain (P1) or raw (P4) variant.
pub fn parse_pbm(bytes: &[u8], name: &str) -> Result<ShapeDocument, ShapeError> {
    let mut cur = Cursor { bytes, at: 0, line: 1 };
    let raw = match bytes.get(..2) {
        Some(b"P1") => false,
        Some(b"P4") => true,
        _ => return Err(cur.err("missing P1/P4 magic number")),
    };
    cur.at = 2;
    let width = cur.number("width")?;
    let height = cur.number("height")?;
    let dims = dims_or_err(height, width, cur.line, cur.at)?;
    let mut pixels = Vec::with_capacity(dims.cell_count());
    if raw {
        match cur.bump() {
            Some(b) if b.is_ascii_whitespace() => {}
            _ => return Err(cur.err("expected a single whitespace byte before raster")),
        }
        let stride = width.div_ceil(8);
        let need = stride * height;
        let data = &bytes[cur.at..];
        if data.len() < need {
            return Err(parse_err(
                cur.line,
                bytes.len(),
                format!("raster truncated: {} of {need} bytes", data.len()),
            ));
        }
        for row in data[..need].chunks(stride) {
            pixels.extend((0..width).map(|c| row[c / 8] & (0x80 >> (c % 8)) != 0));
        }
    } else {
        while pixels.len() < dims.cell_count() {
            cur.skip_space();
            match cur.bump() {
                Some(b'1') => pixels.push(true),
                Some(b'0') => pixels.push(false),
                Some(other) => {
                    cur.at -= 1;
                    return Err(cur.err(format!("unexpected byte {:?} in raster", other as char)));
                }
                None => {
                    return Err(cur.err(format!(
                        "raster truncated: {} of {} pixels",
                        pixels.len(),
                        dims.cell_count()
                    )))
                }
            }
        }
    }
    let encoding = if raw { ShapeEncoding::PbmRaw } else { ShapeEncoding::PbmPlain };
    ShapeDocument::new(name, dims, pixels).map(|d| d.with_encoding(encoding))
}

pub fn load_shape(path: &Path, format: Option<ShapeFormat>) -> Result<ShapeDocument, ShapeError> {
    let bytes = fs::read(path).map_err(|source| ShapeError::Io { path: path.display().to_string(), source })?;
    let name = path.file_stem().and_then(|s| s.to_str()).unwrap_or("shape");
    match format.unwrap_or_else(|| ShapeFormat::from_path(path)) {
        ShapeFormat::Pbm => parse_pbm(&bytes, name),
        ShapeFormat::Ascii => {
            let text = std::str::from_utf8(&bytes)
                .map_err(|e| parse_err(1, e.valid_up_to(), "file is not valid UTF-8"))?;
            parse_ascii(text, name)
        }
    }
}

pub fn write_ascii(doc: &ShapeDocument) -> String {
    let w = doc.dims.width as usize;
    let mut out = String::with_capacity(doc.pixels.len() + doc.dims.height as usize);
    for row in doc.pixels.chunks(w) {
        out.extend(row.iter().map(|&p| if p { '#' } else { '.' }));
        out.push('\n');
    }
    out
}

pub fn write_pbm_plain(doc: &ShapeDocument) -> Vec<u8> {
    let w = doc.dims.width as usize;
    let mut out = format!("P1\n{} {}\n", doc.dims.width, doc.dims.height).into_bytes();
    for row in doc.pixels.chunks(w) {
        // plain PBM lines should stay under 70 characters
        for (i, chunk) in row.chunks(34).enumerate() {
            if i > 0 {
                out.push(b'\n');
            }
            let line: Vec<&str> = chunk.iter().map(|&p| if p { "1" } else { "0" }).collect();
            out.extend_from_slice(line.join(" ").as_bytes());
        }
        out.push(b'\n');
    }
    out
}

pub fn write_pbm_raw(doc: &ShapeDocument) -> Vec<u8> {
    let w = doc.dims.width as usize;
    let mut out = format!("P4\n{} {}\n", doc.dims.width, doc.dims.height).into_bytes();
    for row in doc.pixels.chunks(w) {
        let mut bytes = vec![0u8; w.div_ceil(8)];
        for (c, &p) in row.iter().enumerate() {
            if p {
                bytes[c / 8] |= 0x80 >> (c % 8);
            }
        }
        out.extend_from_slice(&bytes);
    }
    out
}

pub fn encode(doc: &ShapeDocument, encoding: ShapeEncoding) -> Vec<u8> {
    match encoding {
        ShapeEncoding::Ascii => write_ascii(doc).into_bytes(),
        ShapeEncoding::PbmPlain => write_pbm_plain(doc),
        ShapeEncoding::PbmRaw => write_pbm_raw(doc),
    }
}

/// Writes `doc` in the encoding it was read from.
pub fn save_shape(doc: &ShapeDocument, path: &Path) -> Result<(), ShapeError> {
    fs::write(path, encode(doc, doc.encoding))
        .map_err(|source| ShapeError::Io { path: path.display().to_string(), source })
}

/// Source index range covered by output index `i` of `out` cells over `src`.
/// Ranges tile the source when shrinking and repeat a single pixel when
/// growing (nearest neighbour).
pub fn block_range(i: usize, out: usize, src: usize) -> (usize, usize) {
    let lo = i * src / out;
    let hi = ((i + 1) * src / out).max(lo + 1);
    (lo, hi)
}

/// Block-majority resampling: an output cell is a target when at least half
/// of its source block is.
pub fn rescale(doc: &ShapeDocument, target: GridDims) -> Result<Vec<bool>, ShapeError> {
    if target.height < 4 || target.width < 4 {
        return Err(ShapeError::TooSmall(target));
    }
    let (sh, sw) = (doc.dims.height as usize, doc.dims.width as usize);
    let (th, tw) = (target.height as usize, target.width as usize);
    let mut out = Vec::with_capacity(th * tw);
    for r in 0..th {
        let (r0, r1) = block_range(r, th, sh);
        for c in 0..tw {
            let (c0, c1) = block_range(c, tw, sw);
            let mut black = 0;
            for sr in r0..r1 {
                black += doc.pixels[sr * sw + c0..sr * sw + c1].iter().filter(|&&p| p).count();
            }
            let area = (r1 - r0) * (c1 - c0);
            out.push(2 * black >= area);
        }
    }
    Ok(out)
}

/// Largest component of a mask together with the number of cells dropped.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Connected {
    pub shape: TargetShape,
    pub dropped: usize,
}

impl fmt::Display for Connected {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} cells on {}, {} dropped", self.shape.len(), self.shape.dims(), self.dropped)
    }
}

/// Keeps the largest 8-connected component. Equal sizes resolve to the
/// component whose first cell comes first in row-major order.
pub fn connectify(dims: GridDims, mask: &[bool]) -> Result<Connected, ShapeError> {
    let (labels, count) = component_labels(dims, mask);
    if count == 0 {
        return Err(ShapeError::Empty);
    }
    let mut sizes = vec![0usize; count];
    for &l in labels.iter().filter(|&&l| l != usize::MAX) {
        sizes[l] += 1;
    }
    // labels are numbered by first row-major cell, so the first maximum wins
    let best = (0..count).fold(0, |best, l| if sizes[l] > sizes[best] { l } else { best });
    let kept: Vec<bool> = labels.iter().map(|&l| l == best).collect();
    let total: usize = sizes.iter().sum();
    Ok(Connected { shape: TargetShape::from_mask(dims, kept)?, dropped: total - sizes[best] })
}

/// Rescale then connectify.
pub fn prepare(doc: &ShapeDocument, target: GridDims) -> Result<Connected, ShapeError> {
    let mask = rescale(doc, target)?;
    connectify(target, &mask)
}
