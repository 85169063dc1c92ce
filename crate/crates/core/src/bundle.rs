//! Shuffled (and optionally rotated) puzzles with ground-truth bookkeeping,
//! plus the on-disk bundle directory format.
//!
//! A bundle directory holds `piece_NNNN.png` (8-bit RGB, already rotated)
//! and `bundle.json`. The manifest stores the per-channel normalization
//! statistics of the source image so loaded pieces reproduce the in-memory
//! normalized values bit for bit. Ground truth lives under its own
//! `ground_truth` key and may be absent.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::piece::{rotate_square, EdgeRef, Piece, Side, TileCut};
use crate::raster::{normalize_rgb, ChannelStats, RawImage};
use crate::rng::SeededRng;

pub const MANIFEST_NAME: &str = "bundle.json";
pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PuzzleMode {
    /// Known orientation and dimensions.
    Type1,
    /// Unknown orientation and dimensions.
    Type2,
}

impl std::str::FromStr for PuzzleMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "type1" | "1" => Ok(PuzzleMode::Type1),
            "type2" | "2" => Ok(PuzzleMode::Type2),
            other => Err(Error::invalid(format!("unknown mode {other:?}"))),
        }
    }
}

/// Original placement of one piece.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TruthCell {
    pub row: usize,
    pub col: usize,
    /// CCW quarter turns applied to the piece when the bundle was made.
    pub turns: u8,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroundTruth {
    pub rows: usize,
    pub cols: usize,
    /// Indexed by piece id.
    pub cells: Vec<TruthCell>,
}

/// Unordered pair of edges, stored with the smaller dense index first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct EdgePair(pub EdgeRef, pub EdgeRef);

impl EdgePair {
    pub fn new(a: EdgeRef, b: EdgeRef) -> Self {
        if a.index() <= b.index() {
            EdgePair(a, b)
        } else {
            EdgePair(b, a)
        }
    }
}

impl GroundTruth {
    pub fn validate(&self, piece_count: usize) -> Result<()> {
        if self.cells.len() != piece_count || self.rows * self.cols != piece_count {
            return Err(Error::invalid(format!(
                "ground truth covers {} cells of a {}x{} grid for {piece_count} pieces",
                self.cells.len(),
                self.rows,
                self.cols
            )));
        }
        let mut seen = vec![false; piece_count];
        for c in &self.cells {
            if c.row >= self.rows || c.col >= self.cols || c.turns > 3 {
                return Err(Error::invalid("ground-truth cell out of range"));
            }
            let i = c.row * self.cols + c.col;
            if std::mem::replace(&mut seen[i], true) {
                return Err(Error::invalid("ground truth is not a bijection"));
            }
        }
        Ok(())
    }

    /// Piece id at each original cell, row-major.
    pub fn grid(&self) -> Vec<usize> {
        let mut grid = vec![0; self.rows * self.cols];
        for (id, c) in self.cells.iter().enumerate() {
            grid[c.row * self.cols + c.col] = id;
        }
        grid
    }

    /// Stored side of `piece` that faced `original` in the source image.
    pub fn stored_side(&self, piece: usize, original: Side) -> Side {
        original.after_turns(self.cells[piece].turns)
    }

    pub fn adjacency_count(&self) -> usize {
        self.rows * self.cols.saturating_sub(1) + self.rows.saturating_sub(1) * self.cols
    }

    /// Every true abutment as an unordered edge pair.
    pub fn adjacent_pairs(&self) -> BTreeSet<EdgePair> {
        let grid = self.grid();
        let mut out = BTreeSet::new();
        for r in 0..self.rows {
            for c in 0..self.cols {
                let p = grid[r * self.cols + c];
                if c + 1 < self.cols {
                    let q = grid[r * self.cols + c + 1];
                    out.insert(EdgePair::new(
                        EdgeRef::new(p, self.stored_side(p, Side::Right)),
                        EdgeRef::new(q, self.stored_side(q, Side::Left)),
                    ));
                }
                if r + 1 < self.rows {
                    let q = grid[(r + 1) * self.cols + c];
                    out.insert(EdgePair::new(
                        EdgeRef::new(p, self.stored_side(p, Side::Bottom)),
                        EdgeRef::new(q, self.stored_side(q, Side::Top)),
                    ));
                }
            }
        }
        out
    }

    /// True partner of every edge (dense edge index), `None` on the border.
    pub fn partners(&self) -> Vec<Option<EdgeRef>> {
        let mut out = vec![None; self.cells.len() * 4];
        for EdgePair(a, b) in self.adjacent_pairs() {
            out[a.index()] = Some(b);
            out[b.index()] = Some(a);
        }
        out
    }

    pub fn is_adjacent(&self, a: EdgeRef, b: EdgeRef) -> bool {
        if a.piece == b.piece {
            return false;
        }
        let ca = self.cells[a.piece];
        let cb = self.cells[b.piece];
        // Sides as they faced in the original image.
        let oa = a.side.after_turns(4 - ca.turns % 4);
        let ob = b.side.after_turns(4 - cb.turns % 4);
        if oa.opposite() != ob {
            return false;
        }
        let (dr, dc) = oa.offset();
        ca.row as i64 + dr as i64 == cb.row as i64 && ca.col as i64 + dc as i64 == cb.col as i64
    }
}

#[derive(Debug, Clone)]
pub struct PuzzleBundle {
    pub mode: PuzzleMode,
    pub tile_size: usize,
    pub seed: u64,
    /// Shuffled; `pieces[i].id == i`.
    pub pieces: Vec<Piece>,
    /// 8-bit RGB tiles matching `pieces` (same rotation), when available.
    pub rgb: Option<Vec<Vec<u8>>>,
    /// Grid dimensions, exposed only for Type1 puzzles.
    pub dims: Option<(usize, usize)>,
    pub stats: [ChannelStats; 3],
    pub ground_truth: Option<GroundTruth>,
}

/// Shuffles the tiles with the seeded generator; in Type2 mode each piece is
/// also rotated by a random number of quarter turns.
pub fn make_bundle(cut: &TileCut, mode: PuzzleMode, seed: u64) -> Result<PuzzleBundle> {
    let n = cut.pieces.len();
    if n == 0 || n != cut.rows * cut.cols || cut.cells.len() != n {
        return Err(Error::invalid("tile cut is inconsistent"));
    }
    let mut rng = SeededRng::new(seed);
    let mut order: Vec<usize> = (0..n).collect();
    rng.shuffle(&mut order);
    let turns: Vec<u8> = match mode {
        PuzzleMode::Type1 => vec![0; n],
        PuzzleMode::Type2 => (0..n).map(|_| rng.below(4) as u8).collect(),
    };

    let k = cut.k;
    let mut pieces = Vec::with_capacity(n);
    let mut cells = Vec::with_capacity(n);
    let mut rgb = cut.rgb.as_ref().map(|_| Vec::with_capacity(n));
    for (id, (&src, &t)) in order.iter().zip(&turns).enumerate() {
        let original = &cut.pieces[src];
        let data = rotate_square(original.data(), k, 3, t);
        pieces.push(Piece::new(id, k, data)?);
        let (row, col) = cut.cells[src];
        cells.push(TruthCell { row, col, turns: t });
        if let (Some(out), Some(tiles)) = (rgb.as_mut(), cut.rgb.as_ref()) {
            out.push(rotate_square(&tiles[src], k, 3, t));
        }
    }
    Ok(PuzzleBundle {
        mode,
        tile_size: k,
        seed,
        pieces,
        rgb,
        dims: (mode == PuzzleMode::Type1).then_some((cut.rows, cut.cols)),
        stats: cut.stats,
        ground_truth: Some(GroundTruth {
            rows: cut.rows,
            cols: cut.cols,
            cells,
        }),
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Dims {
    pub rows: usize,
    pub cols: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TruthEntry {
    pub piece: usize,
    pub row: usize,
    pub col: usize,
    /// Counterclockwise, one of 0, 90, 180, 270.
    pub rotation: u16,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TruthSection {
    pub rows: usize,
    pub cols: usize,
    pub cells: Vec<TruthEntry>,
}

/// `bundle.json` contents.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BundleManifest {
    pub version: u32,
    pub mode: PuzzleMode,
    pub tile_size: usize,
    pub piece_count: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dims: Option<Dims>,
    pub seed: u64,
    pub normalization: [ChannelStats; 3],
    pub pieces: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ground_truth: Option<TruthSection>,
}

pub fn piece_file_name(id: usize) -> String {
    format!("piece_{id:04}.png")
}

impl BundleManifest {
    /// Parses and structurally validates a manifest.
    pub fn from_json(bytes: &[u8]) -> Result<Self> {
        let m: BundleManifest = serde_json::from_slice(bytes)?;
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != MANIFEST_VERSION {
            return Err(Error::format(format!(
                "unsupported bundle version {}",
                self.version
            )));
        }
        if self.tile_size == 0 || self.piece_count == 0 {
            return Err(Error::format("empty bundle"));
        }
        if self.pieces.len() != self.piece_count {
            return Err(Error::format("piece list does not match piece_count"));
        }
        for (i, name) in self.pieces.iter().enumerate() {
            if *name != piece_file_name(i) {
                return Err(Error::format(format!("unexpected piece file name {name:?}")));
            }
        }
        for s in &self.normalization {
            if !s.mean.is_finite() || !s.std.is_finite() || s.std < 0.0 {
                return Err(Error::format("invalid normalization statistics"));
            }
        }
        match (self.mode, &self.dims) {
            (PuzzleMode::Type2, Some(_)) => {
                return Err(Error::format("type2 bundles must not expose dims"))
            }
            (_, Some(d)) if d.rows.checked_mul(d.cols) != Some(self.piece_count) => {
                return Err(Error::format("dims do not match piece count"))
            }
            _ => {}
        }
        if let Some(gt) = self.truth()? {
            gt.validate(self.piece_count)
                .map_err(|e| Error::format(e.to_string()))?;
            if self.mode == PuzzleMode::Type1 && gt.cells.iter().any(|c| c.turns != 0) {
                return Err(Error::format("type1 ground truth has rotated pieces"));
            }
        }
        Ok(())
    }

    pub fn truth(&self) -> Result<Option<GroundTruth>> {
        let Some(t) = &self.ground_truth else {
            return Ok(None);
        };
        if t.cells.len() != self.piece_count {
            return Err(Error::format("ground truth does not cover every piece"));
        }
        let mut cells = vec![None; t.cells.len()];
        for e in &t.cells {
            if e.rotation % 90 != 0 || e.rotation >= 360 {
                return Err(Error::format(format!("bad rotation {}", e.rotation)));
            }
            let slot = cells
                .get_mut(e.piece)
                .ok_or_else(|| Error::format("ground-truth piece id out of range"))?;
            if slot.is_some() {
                return Err(Error::format("duplicate ground-truth entry"));
            }
            *slot = Some(TruthCell {
                row: e.row,
                col: e.col,
                turns: (e.rotation / 90) as u8,
            });
        }
        Ok(Some(GroundTruth {
            rows: t.rows,
            cols: t.cols,
            cells: cells.into_iter().map(|c| c.expect("filled")).collect(),
        }))
    }
}

impl PuzzleBundle {
    pub fn from_image(img: &RawImage, k: usize, mode: PuzzleMode, seed: u64) -> Result<Self> {
        let cut = crate::piece::cut_image(img, k)?;
        make_bundle(&cut, mode, seed)
    }

    pub fn len(&self) -> usize {
        self.pieces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pieces.is_empty()
    }

    /// Copy with the ground truth removed, as handed to a solver.
    pub fn without_truth(&self) -> Self {
        PuzzleBundle {
            ground_truth: None,
            ..self.clone()
        }
    }

    pub fn manifest(&self) -> BundleManifest {
        BundleManifest {
            version: MANIFEST_VERSION,
            mode: self.mode,
            tile_size: self.tile_size,
            piece_count: self.pieces.len(),
            dims: self.dims.map(|(rows, cols)| Dims { rows, cols }),
            seed: self.seed,
            normalization: self.stats,
            pieces: (0..self.pieces.len()).map(piece_file_name).collect(),
            ground_truth: self.ground_truth.as_ref().map(|gt| TruthSection {
                rows: gt.rows,
                cols: gt.cols,
                cells: gt
                    .cells
                    .iter()
                    .enumerate()
                    .map(|(piece, c)| TruthEntry {
                        piece,
                        row: c.row,
                        col: c.col,
                        rotation: c.turns as u16 * 90,
                    })
                    .collect(),
            }),
        }
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        let rgb = self
            .rgb
            .as_ref()
            .ok_or_else(|| Error::invalid("bundle has no RGB tiles to write"))?;
        fs::create_dir_all(dir)?;
        let k = self.tile_size;
        for (id, tile) in rgb.iter().enumerate() {
            RawImage::new(k, k, tile.clone())?.save_png(dir.join(piece_file_name(id)))?;
        }
        let json = serde_json::to_vec_pretty(&self.manifest())?;
        fs::write(dir.join(MANIFEST_NAME), json)?;
        Ok(())
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let manifest = BundleManifest::from_json(&fs::read(dir.join(MANIFEST_NAME))?)?;
        let k = manifest.tile_size;
        let mut pieces = Vec::with_capacity(manifest.piece_count);
        let mut rgb = Vec::with_capacity(manifest.piece_count);
        for (id, name) in manifest.pieces.iter().enumerate() {
            let img = RawImage::open(dir.join(name))?;
            if img.width() != k || img.height() != k {
                return Err(Error::format(format!("{name} is not {k}x{k}")));
            }
            pieces.push(Piece::new(id, k, normalize_rgb(img.pixels(), &manifest.normalization))?);
            rgb.push(img.pixels().to_vec());
        }
        Ok(PuzzleBundle {
            mode: manifest.mode,
            tile_size: k,
            seed: manifest.seed,
            pieces,
            rgb: Some(rgb),
            dims: manifest.dims.as_ref().map(|d| (d.rows, d.cols)),
            stats: manifest.normalization,
            ground_truth: manifest.truth()?,
        })
    }
}
