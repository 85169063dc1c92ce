//! Tiles, sides, edge references and canonical edge strips.
//!
//! Coordinates follow the screen convention: row 0 is the top. Rotations
//! are counterclockwise quarter turns. Rotating a piece by one turn moves
//! its right side to the top, so a side `s` ends up at `s - turns (mod 4)`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{NormalizedImage, RawImage};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Top = 0,
    Right = 1,
    Bottom = 2,
    Left = 3,
}

impl Side {
    pub const ALL: [Side; 4] = [Side::Top, Side::Right, Side::Bottom, Side::Left];

    pub fn from_index(i: usize) -> Side {
        Side::ALL[i % 4]
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn opposite(self) -> Side {
        Side::from_index(self.index() + 2)
    }

    /// Where this side ends up after rotating its piece by `turns` CCW.
    pub fn after_turns(self, turns: u8) -> Side {
        Side::from_index(self.index() + 4 - (turns as usize % 4))
    }

    /// CCW turns that bring this side to `target`.
    pub fn turns_to(self, target: Side) -> u8 {
        ((self.index() + 4 - target.index()) % 4) as u8
    }

    /// Grid offset `(drow, dcol)` of the neighbor across this side.
    pub fn offset(self) -> (i32, i32) {
        match self {
            Side::Top => (-1, 0),
            Side::Right => (0, 1),
            Side::Bottom => (1, 0),
            Side::Left => (0, -1),
        }
    }
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Side::Top => "top",
            Side::Right => "right",
            Side::Bottom => "bottom",
            Side::Left => "left",
        };
        f.write_str(s)
    }
}

/// One side of one piece. Dense index is `piece * 4 + side`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct EdgeRef {
    pub piece: usize,
    pub side: Side,
}

impl EdgeRef {
    pub fn new(piece: usize, side: Side) -> Self {
        EdgeRef { piece, side }
    }

    pub fn index(self) -> usize {
        self.piece * 4 + self.side.index()
    }

    pub fn from_index(i: usize) -> Self {
        EdgeRef {
            piece: i / 4,
            side: Side::from_index(i % 4),
        }
    }
}

impl fmt::Display for EdgeRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.piece, self.side)
    }
}

/// Source coordinate `(row, col)` for position `(row, col)` of a square
/// `k`-wide grid rotated by `turns` CCW.
#[inline]
pub fn rotated_source(k: usize, turns: u8, row: usize, col: usize) -> (usize, usize) {
    match turns % 4 {
        0 => (row, col),
        1 => (col, k - 1 - row),
        2 => (k - 1 - row, k - 1 - col),
        _ => (k - 1 - col, row),
    }
}

/// Rotates an interleaved `k × k × channels` square by `turns` CCW.
pub fn rotate_square<T: Copy>(data: &[T], k: usize, channels: usize, turns: u8) -> Vec<T> {
    debug_assert_eq!(data.len(), k * k * channels);
    let mut out = Vec::with_capacity(data.len());
    for row in 0..k {
        for col in 0..k {
            let (sr, sc) = rotated_source(k, turns, row, col);
            let base = (sr * k + sc) * channels;
            out.extend_from_slice(&data[base..base + channels]);
        }
    }
    out
}

/// A square tile of normalized YUV values, interleaved row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Piece {
    pub id: usize,
    k: usize,
    data: Vec<f64>,
}

impl Piece {
    pub fn new(id: usize, k: usize, data: Vec<f64>) -> Result<Self> {
        if k == 0 || data.len() != k * k * 3 {
            return Err(Error::invalid(format!(
                "piece {id}: expected {} values for k={k}, got {}",
                k * k * 3,
                data.len()
            )));
        }
        Ok(Piece { id, k, data })
    }

    pub fn size(&self) -> usize {
        self.k
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn at(&self, row: usize, col: usize, channel: usize) -> f64 {
        self.data[(row * self.k + col) * 3 + channel]
    }

    pub fn rotated(&self, turns: u8) -> Piece {
        Piece {
            id: self.id,
            k: self.k,
            data: rotate_square(&self.data, self.k, 3, turns),
        }
    }

    /// The `depth` columns next to `side`, read with the piece rotated so
    /// that `side` faces right. Layout is `[column][row][channel]`, with the
    /// abutting column last.
    pub fn edge_strip(&self, side: Side, depth: usize) -> Result<Vec<f64>> {
        if depth == 0 || depth > self.k {
            return Err(Error::invalid(format!(
                "strip depth {depth} outside 1..={}",
                self.k
            )));
        }
        let k = self.k;
        let turns = side.turns_to(Side::Right);
        let mut out = Vec::with_capacity(depth * k * 3);
        for col in (k - depth)..k {
            for row in 0..k {
                let (sr, sc) = rotated_source(k, turns, row, col);
                let base = (sr * k + sc) * 3;
                out.extend_from_slice(&self.data[base..base + 3]);
            }
        }
        Ok(out)
    }

    /// Column `offset` counted inward from `side` (0 = abutting), read
    /// top-to-bottom with `side` facing right. `k × 3` values.
    pub(crate) fn column_from(&self, side: Side, offset: usize) -> Vec<f64> {
        let k = self.k;
        let turns = side.turns_to(Side::Right);
        let col = k - 1 - offset;
        let mut out = Vec::with_capacity(k * 3);
        for row in 0..k {
            let (sr, sc) = rotated_source(k, turns, row, col);
            let base = (sr * k + sc) * 3;
            out.extend_from_slice(&self.data[base..base + 3]);
        }
        out
    }
}

/// Output of tiling one image: pieces in row-major order with `id == index`.
#[derive(Debug, Clone)]
pub struct TileCut {
    pub k: usize,
    pub rows: usize,
    pub cols: usize,
    pub pieces: Vec<Piece>,
    /// `(row, col)` of each piece, indexed by id.
    pub cells: Vec<(usize, usize)>,
    /// 8-bit RGB tiles matching `pieces`, when cut from a raw image.
    pub rgb: Option<Vec<Vec<u8>>>,
    pub stats: [crate::raster::ChannelStats; 3],
}

fn grid_dims(width: usize, height: usize, k: usize) -> Result<(usize, usize)> {
    if k == 0 || k > width || k > height {
        return Err(Error::invalid(format!(
            "tile size {k} does not fit a {width}x{height} image"
        )));
    }
    Ok((height / k, width / k))
}

/// Tiles the top-left `rows·k × cols·k` region; right and bottom remainders
/// are cropped.
pub fn cut_tiles(img: &NormalizedImage, k: usize) -> Result<TileCut> {
    let (rows, cols) = grid_dims(img.width, img.height, k)?;
    let mut pieces = Vec::with_capacity(rows * cols);
    let mut cells = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            let mut data = Vec::with_capacity(k * k * 3);
            for y in r * k..(r + 1) * k {
                let start = (y * img.width + c * k) * 3;
                data.extend_from_slice(&img.data[start..start + k * 3]);
            }
            pieces.push(Piece::new(pieces.len(), k, data)?);
            cells.push((r, c));
        }
    }
    Ok(TileCut {
        k,
        rows,
        cols,
        pieces,
        cells,
        rgb: None,
        stats: img.stats,
    })
}

pub fn cut_rgb_tiles(img: &RawImage, k: usize) -> Result<Vec<Vec<u8>>> {
    let (rows, cols) = grid_dims(img.width(), img.height(), k)?;
    let px = img.pixels();
    let mut tiles = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            let mut data = Vec::with_capacity(k * k * 3);
            for y in r * k..(r + 1) * k {
                let start = (y * img.width() + c * k) * 3;
                data.extend_from_slice(&px[start..start + k * 3]);
            }
            tiles.push(data);
        }
    }
    Ok(tiles)
}

/// Normalizes and tiles a raw image, keeping the RGB tiles for output.
pub fn cut_image(img: &RawImage, k: usize) -> Result<TileCut> {
    let norm = crate::raster::to_normalized_yuv(img)?;
    let mut cut = cut_tiles(&norm, k)?;
    cut.rgb = Some(cut_rgb_tiles(img, k)?);
    Ok(cut)
}
