//! Binary greyscale (P5) image grids.

use std::io::{self, Write};

use vae_lab::Tensor;

use crate::error::{CliError, CliResult};

/// Black separator between cells, in pixels.
pub const GUTTER: usize = 2;

/// Square cells laid out row-major; trailing cells past the supplied images
/// are black padding, so `rows * cols` always equals `cells.len()`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageGrid {
    pub rows: usize,
    pub cols: usize,
    pub side: usize,
    pub cells: Vec<Vec<f64>>,
}

/// Smallest near-square layout holding `n` cells: `cols = ceil(√n)`,
/// `rows = ceil(n / cols)`.
pub fn grid_shape(n: usize) -> (usize, usize) {
    if n == 0 {
        return (0, 0);
    }
    let mut cols = (n as f64).sqrt() as usize;
    while cols * cols < n {
        cols += 1;
    }
    (n.div_ceil(cols), cols)
}

impl ImageGrid {
    /// Builds a grid from the rows of `images`; each row must be a square
    /// image.
    pub fn from_rows(images: &Tensor) -> CliResult<Self> {
        let pixels = images.cols();
        let side = (pixels as f64).sqrt().round() as usize;
        if side * side != pixels {
            return Err(CliError::Data(format!(
                "cannot lay out {pixels}-pixel images as square cells"
            )));
        }
        let (rows, cols) = grid_shape(images.rows());
        let mut cells: Vec<Vec<f64>> = (0..images.rows()).map(|r| images.row(r).to_vec()).collect();
        cells.resize(rows * cols, vec![0.0; pixels]);
        Ok(ImageGrid {
            rows,
            cols,
            side,
            cells,
        })
    }

    pub fn width(&self) -> usize {
        span(self.cols, self.side)
    }

    pub fn height(&self) -> usize {
        span(self.rows, self.side)
    }

    /// Row-major greyscale bytes, `round(v * 255)` with `v` clamped to `[0, 1]`.
    pub fn raster(&self) -> Vec<u8> {
        let (w, h) = (self.width(), self.height());
        let mut out = vec![0u8; w * h];
        let pitch = self.side + GUTTER;
        for (k, cell) in self.cells.iter().enumerate() {
            let (top, left) = ((k / self.cols) * pitch, (k % self.cols) * pitch);
            for r in 0..self.side {
                for c in 0..self.side {
                    out[(top + r) * w + left + c] = to_byte(cell[r * self.side + c]);
                }
            }
        }
        out
    }

    pub fn write_pgm<W: Write>(&self, mut w: W) -> io::Result<()> {
        write!(w, "P5\n{} {}\n255\n", self.width(), self.height())?;
        w.write_all(&self.raster())
    }
}

fn span(cells: usize, side: usize) -> usize {
    if cells == 0 {
        0
    } else {
        cells * side + (cells - 1) * GUTTER
    }
}

pub fn to_byte(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Parses a P5 file with maxval 255. Returns `(width, height, pixels)`.
pub fn read_pgm(bytes: &[u8]) -> CliResult<(usize, usize, Vec<u8>)> {
    let bad = |m: &str| CliError::Data(format!("malformed PGM: {m}"));
    let mut fields = Vec::new();
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(bad("truncated header"));
        }
        fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| bad("header"))?);
    }
    if fields[0] != "P5" || fields[3] != "255" {
        return Err(bad("expected P5 with maxval 255"));
    }
    let w: usize = fields[1].parse().map_err(|_| bad("width"))?;
    let h: usize = fields[2].parse().map_err(|_| bad("height"))?;
    let data = &bytes[pos + 1..];
    if data.len() != w * h {
        return Err(bad("pixel count does not match dimensions"));
    }
    Ok((w, h, data.to_vec()))
}
