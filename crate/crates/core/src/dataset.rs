//! Balanced edge-pair training sets built by informed undersampling.
//!
//! For every edge the most- and second-most-compatible candidates are
//! looked up. A correct first choice yields a positive (anchor, first) and a
//! hard negative (anchor, second); a wrong first choice yields only the
//! negative (anchor, first). Negatives are then dropped at random until
//! both classes have the same size.

use std::collections::HashSet;
use std::io::{Read, Write};

use rayon::prelude::*;

use crate::bundle::{EdgePair, PuzzleBundle};
use crate::compat::CompatibilityMatrix;
use crate::error::{Error, Result};
use crate::piece::{EdgeRef, Piece};
use crate::rng::SeededRng;

/// Tile size the classifier input is defined for.
pub const FEATURE_TILE: usize = 28;
/// Two columns on each side of the seam, 28 rows, 3 channels.
pub const FEATURE_LEN: usize = FEATURE_TILE * 4 * 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Provenance {
    pub image: usize,
    pub anchor: EdgeRef,
    pub other: EdgeRef,
    /// 1 when `other` is the anchor's most compatible edge, 2 for the runner-up.
    pub rank: u8,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EdgePairSample {
    pub features: Vec<f32>,
    pub label: bool,
    pub provenance: Option<Provenance>,
}

/// Classifier input for `a` facing right and `b` abutting it: a's second
/// column, a's abutting column, b's abutting column, b's second column. Each
/// column is 28 rows top-to-bottom times Y, U, V.
pub fn extract_features(a: EdgeRef, b: EdgeRef, pieces: &[Piece]) -> Result<Vec<f64>> {
    if a.piece == b.piece {
        return Err(Error::invalid(format!("edges {a} and {b} belong to the same piece")));
    }
    let pa = pieces
        .get(a.piece)
        .ok_or_else(|| Error::invalid(format!("no piece {}", a.piece)))?;
    let pb = pieces
        .get(b.piece)
        .ok_or_else(|| Error::invalid(format!("no piece {}", b.piece)))?;
    for p in [pa, pb] {
        if p.size() != FEATURE_TILE {
            return Err(Error::UnsupportedTileSize(p.size()));
        }
    }
    let reversed_rows = |col: Vec<f64>| -> Vec<f64> { col.chunks_exact(3).rev().flatten().copied().collect() };
    let mut out = Vec::with_capacity(FEATURE_LEN);
    out.extend(pa.column_from(a.side, 1));
    out.extend(pa.column_from(a.side, 0));
    out.extend(reversed_rows(pb.column_from(b.side, 0)));
    out.extend(reversed_rows(pb.column_from(b.side, 1)));
    debug_assert_eq!(out.len(), FEATURE_LEN);
    Ok(out)
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    pub samples: Vec<EdgePairSample>,
}

impl Dataset {
    pub fn new(samples: Vec<EdgePairSample>) -> Self {
        Dataset { samples }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn positives(&self) -> usize {
        self.samples.iter().filter(|s| s.label).count()
    }

    pub fn negatives(&self) -> usize {
        self.len() - self.positives()
    }

    pub fn is_balanced(&self) -> bool {
        self.positives() == self.negatives()
    }

    pub fn feature_len(&self) -> Option<usize> {
        self.samples.first().map(|s| s.features.len())
    }
}

/// Unbalanced informed-undersampling candidates for one bundle, with
/// duplicate unordered pairs kept once (first anchor wins).
pub fn informed_samples(bundle: &PuzzleBundle, image: usize) -> Result<Vec<EdgePairSample>> {
    let gt = bundle
        .ground_truth
        .as_ref()
        .ok_or_else(|| Error::invalid("dataset building needs ground truth"))?;
    let matrix = CompatibilityMatrix::build(&bundle.pieces, bundle.mode, crate::compat::Metric::L2)?;
    informed_samples_with(bundle, &matrix, image, |a, b| gt.is_adjacent(a, b))
}

fn informed_samples_with(
    bundle: &PuzzleBundle,
    matrix: &CompatibilityMatrix,
    image: usize,
    adjacent: impl Fn(EdgeRef, EdgeRef) -> bool,
) -> Result<Vec<EdgePairSample>> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    let mut emit = |anchor: EdgeRef, other: EdgeRef, rank: u8, label: bool| -> Result<()> {
        if seen.insert(EdgePair::new(anchor, other)) {
            let features = extract_features(anchor, other, &bundle.pieces)?;
            out.push(EdgePairSample {
                features: features.into_iter().map(|v| v as f32).collect(),
                label,
                provenance: Some(Provenance {
                    image,
                    anchor,
                    other,
                    rank,
                }),
            });
        }
        Ok(())
    };
    for a in (0..matrix.edge_count()).map(EdgeRef::from_index) {
        let Some(first) = matrix.best(a) else { continue };
        if adjacent(a, first) {
            emit(a, first, 1, true)?;
            if let Some(second) = matrix.second_best(a) {
                emit(a, second, 2, false)?;
            }
        } else {
            emit(a, first, 1, false)?;
        }
    }
    Ok(out)
}

/// Randomly drops majority-class samples until both classes match; the
/// surviving samples keep their original order.
pub fn balance(samples: Vec<EdgePairSample>, seed: u64) -> Vec<EdgePairSample> {
    let pos: Vec<usize> = (0..samples.len()).filter(|&i| samples[i].label).collect();
    let neg: Vec<usize> = (0..samples.len()).filter(|&i| !samples[i].label).collect();
    let (mut majority, keep) = if neg.len() >= pos.len() {
        (neg, pos.len())
    } else {
        (pos, neg.len())
    };
    let mut rng = SeededRng::new(seed);
    rng.shuffle(&mut majority);
    let mut drop = vec![false; samples.len()];
    for &i in &majority[keep..] {
        drop[i] = true;
    }
    samples
        .into_iter()
        .zip(drop)
        .filter_map(|(s, d)| (!d).then_some(s))
        .collect()
}

/// Builds a balanced dataset from bundles with ground truth. Provenance
/// image ids are positions in `corpus`.
pub fn build_dataset(corpus: &[PuzzleBundle], seed: u64) -> Result<Dataset> {
    build_dataset_indexed(corpus.iter().enumerate(), seed)
}

/// As [`build_dataset`], with caller-chosen image ids.
pub fn build_dataset_indexed<'a>(
    corpus: impl IntoIterator<Item = (usize, &'a PuzzleBundle)>,
    seed: u64,
) -> Result<Dataset> {
    let corpus: Vec<(usize, &PuzzleBundle)> = corpus.into_iter().collect();
    if corpus.is_empty() {
        return Err(Error::invalid("empty corpus"));
    }
    let per_image: Vec<Vec<EdgePairSample>> = corpus
        .par_iter()
        .map(|&(id, b)| informed_samples(b, id))
        .collect::<Result<_>>()?;
    let merged = per_image.into_iter().flatten().collect();
    Ok(Dataset::new(balance(merged, seed)))
}

/// Splits image indices `0..count` into (train, validation) with roughly
/// `val_fraction` held out, never empty on either side when `count >= 2`.
pub fn split_images(count: usize, val_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut ids: Vec<usize> = (0..count).collect();
    SeededRng::new(seed).shuffle(&mut ids);
    let mut n_val = (count as f64 * val_fraction).round() as usize;
    if count >= 2 {
        n_val = n_val.clamp(1, count - 1);
    } else {
        n_val = 0;
    }
    let mut val = ids[..n_val].to_vec();
    let mut train = ids[n_val..].to_vec();
    val.sort_unstable();
    train.sort_unstable();
    (train, val)
}

pub const DATASET_MAGIC: &[u8; 4] = b"DNNB";
pub const DATASET_VERSION: u32 = 1;

impl Dataset {
    /// Header: magic `DNNB`, version u32, sample count u64, feature length
    /// u32; then per sample the features as f32 and one label byte (1 =
    /// match). Little-endian throughout.
    pub fn write_binary(&self, mut w: impl Write) -> Result<()> {
        let len = self.feature_len().unwrap_or(FEATURE_LEN);
        if self.samples.iter().any(|s| s.features.len() != len) {
            return Err(Error::invalid("samples have differing feature lengths"));
        }
        w.write_all(DATASET_MAGIC)?;
        w.write_all(&DATASET_VERSION.to_le_bytes())?;
        w.write_all(&(self.samples.len() as u64).to_le_bytes())?;
        w.write_all(&(len as u32).to_le_bytes())?;
        let mut buf = Vec::with_capacity(len * 4 + 1);
        for s in &self.samples {
            buf.clear();
            for v in &s.features {
                buf.extend_from_slice(&v.to_le_bytes());
            }
            buf.push(s.label as u8);
            w.write_all(&buf)?;
        }
        Ok(())
    }

    pub fn read_binary(mut r: impl Read) -> Result<Self> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        Dataset::decode(&bytes)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 20 || &bytes[..4] != DATASET_MAGIC {
            return Err(Error::format("not a dataset file"));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
        if version != DATASET_VERSION {
            return Err(Error::format(format!("unsupported dataset version {version}")));
        }
        let count = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes"));
        let len = u32::from_le_bytes(bytes[16..20].try_into().expect("4 bytes")) as usize;
        if len == 0 {
            return Err(Error::format("zero feature length"));
        }
        let record = len * 4 + 1;
        let body = &bytes[20..];
        if (record as u64).checked_mul(count) != Some(body.len() as u64) {
            return Err(Error::format("dataset length does not match header"));
        }
        let mut samples = Vec::with_capacity(count as usize);
        for chunk in body.chunks_exact(record) {
            let features: Vec<f32> = chunk[..len * 4]
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
                .collect();
            if features.iter().any(|v| !v.is_finite()) {
                return Err(Error::format("non-finite feature value"));
            }
            let label = match chunk[len * 4] {
                0 => false,
                1 => true,
                other => return Err(Error::format(format!("bad label byte {other}"))),
            };
            samples.push(EdgePairSample {
                features,
                label,
                provenance: None,
            });
        }
        Ok(Dataset { samples })
    }

    /// Inspection export: provenance columns (empty when unknown), label,
    /// then one column per feature.
    pub fn write_csv(&self, mut w: impl Write) -> Result<()> {
        let len = self.feature_len().unwrap_or(FEATURE_LEN);
        write!(w, "image,anchor_piece,anchor_side,other_piece,other_side,rank,label")?;
        for i in 0..len {
            write!(w, ",f{i}")?;
        }
        writeln!(w)?;
        for s in &self.samples {
            match &s.provenance {
                Some(p) => write!(
                    w,
                    "{},{},{},{},{},{}",
                    p.image, p.anchor.piece, p.anchor.side, p.other.piece, p.other.side, p.rank
                )?,
                None => write!(w, ",,,,,")?,
            }
            write!(w, ",{}", s.label as u8)?;
            for v in &s.features {
                write!(w, ",{v}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}
