//! Pairwise edge compatibility.
//!
//! Every score is a dissimilarity between edge `a` placed facing right and
//! edge `b` placed facing left, abutting it. Lower is more compatible; the
//! best-buddy test and all rankings compare with `<=` on dissimilarity.
//! Ties resolve to the lowest dense edge index, i.e. lowest piece id, then
//! side order top, right, bottom, left.

use std::io::Write;

use rayon::prelude::*;

use crate::bundle::{EdgePair, PuzzleMode};
use crate::error::{Error, Result};
use crate::piece::{EdgeRef, Piece, Side};

/// Edge dissimilarity function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Metric {
    /// Root of summed squared differences over the abutting columns.
    L2,
    /// `(Σ |Δ|^p)^(q/p)` over the same entries.
    Lpq { p: f64, q: f64 },
}

impl Metric {
    /// Commonly used `(Lp)^q` setting for jigsaw compatibility.
    pub const POMERANZ: Metric = Metric::Lpq { p: 0.3, q: 1.0 / 16.0 };

    fn validate(self) -> Result<()> {
        if let Metric::Lpq { p, q } = self {
            if !(p > 0.0 && q > 0.0 && p.is_finite() && q.is_finite()) {
                return Err(Error::invalid(format!("(Lp)^q needs p, q > 0, got p={p}, q={q}")));
            }
        }
        Ok(())
    }

    #[inline]
    fn score(self, right_facing: &[f64], left_facing: &[f64]) -> f64 {
        match self {
            Metric::L2 => right_facing
                .iter()
                .zip(left_facing)
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt(),
            Metric::Lpq { p, q } => right_facing
                .iter()
                .zip(left_facing)
                .map(|(x, y)| (x - y).abs().powf(p))
                .sum::<f64>()
                .powf(q / p),
        }
    }
}

/// Abutting column of `edge` read top-to-bottom with the edge facing left.
fn left_facing_column(piece: &Piece, side: Side) -> Vec<f64> {
    // Facing left is a half turn from facing right, which reverses rows.
    let right = piece.column_from(side, 0);
    right.chunks_exact(3).rev().flatten().copied().collect()
}

fn check_pair<'a>(a: EdgeRef, b: EdgeRef, pieces: &'a [Piece]) -> Result<(&'a Piece, &'a Piece)> {
    if a.piece == b.piece {
        return Err(Error::invalid(format!("edges {a} and {b} belong to the same piece")));
    }
    let pa = pieces
        .get(a.piece)
        .ok_or_else(|| Error::invalid(format!("no piece {}", a.piece)))?;
    let pb = pieces
        .get(b.piece)
        .ok_or_else(|| Error::invalid(format!("no piece {}", b.piece)))?;
    if pa.size() != pb.size() {
        return Err(Error::invalid("pieces differ in size"));
    }
    Ok((pa, pb))
}

pub fn dissimilarity(a: EdgeRef, b: EdgeRef, pieces: &[Piece]) -> Result<f64> {
    dissimilarity_with(a, b, pieces, Metric::L2)
}

pub fn dissimilarity_lpq(a: EdgeRef, b: EdgeRef, pieces: &[Piece], p: f64, q: f64) -> Result<f64> {
    dissimilarity_with(a, b, pieces, Metric::Lpq { p, q })
}

pub fn dissimilarity_with(a: EdgeRef, b: EdgeRef, pieces: &[Piece], metric: Metric) -> Result<f64> {
    metric.validate()?;
    let (pa, pb) = check_pair(a, b, pieces)?;
    let ra = pa.column_from(a.side, 0);
    let lb = left_facing_column(pb, b.side);
    Ok(metric.score(&ra, &lb))
}

/// Dense dissimilarity table over all ordered edge pairs of a puzzle.
#[derive(Debug, Clone)]
pub struct CompatibilityMatrix {
    pieces: usize,
    mode: PuzzleMode,
    metric: Metric,
    /// `edges × edges`, row-major; `+inf` for same-piece pairs.
    scores: Vec<f64>,
    best: Vec<Option<EdgeRef>>,
    second_best: Vec<Option<EdgeRef>>,
}

pub fn build_matrix(pieces: &[Piece], mode: PuzzleMode) -> Result<CompatibilityMatrix> {
    CompatibilityMatrix::build(pieces, mode, Metric::L2)
}

impl CompatibilityMatrix {
    pub fn build(pieces: &[Piece], mode: PuzzleMode, metric: Metric) -> Result<Self> {
        metric.validate()?;
        if pieces.len() < 2 {
            return Err(Error::invalid("compatibility needs at least two pieces"));
        }
        let k = pieces[0].size();
        if pieces.iter().any(|p| p.size() != k) {
            return Err(Error::invalid("pieces differ in size"));
        }
        for (i, p) in pieces.iter().enumerate() {
            if p.id != i {
                return Err(Error::invalid(format!("piece at index {i} has id {}", p.id)));
            }
        }
        let n = pieces.len();
        let edges = n * 4;
        let right: Vec<Vec<f64>> = (0..edges)
            .map(|e| {
                let r = EdgeRef::from_index(e);
                pieces[r.piece].column_from(r.side, 0)
            })
            .collect();
        let left: Vec<Vec<f64>> = (0..edges)
            .map(|e| {
                let r = EdgeRef::from_index(e);
                left_facing_column(&pieces[r.piece], r.side)
            })
            .collect();

        // Upper triangle per row, mirrored afterwards so the table is exactly
        // symmetric.
        let rows: Vec<Vec<f64>> = (0..edges)
            .into_par_iter()
            .map(|a| {
                (a + 1..edges)
                    .map(|b| {
                        if a / 4 == b / 4 {
                            f64::INFINITY
                        } else {
                            metric.score(&right[a], &left[b])
                        }
                    })
                    .collect()
            })
            .collect();
        let mut scores = vec![f64::INFINITY; edges * edges];
        for (a, row) in rows.into_iter().enumerate() {
            for (off, s) in row.into_iter().enumerate() {
                let b = a + 1 + off;
                scores[a * edges + b] = s;
                scores[b * edges + a] = s;
            }
        }

        let mut m = CompatibilityMatrix {
            pieces: n,
            mode,
            metric,
            scores,
            best: vec![None; edges],
            second_best: vec![None; edges],
        };
        let ranked: Vec<(Option<EdgeRef>, Option<EdgeRef>)> = (0..edges)
            .into_par_iter()
            .map(|a| m.top_two(EdgeRef::from_index(a)))
            .collect();
        for (a, (b1, b2)) in ranked.into_iter().enumerate() {
            m.best[a] = b1;
            m.second_best[a] = b2;
        }
        Ok(m)
    }

    fn top_two(&self, a: EdgeRef) -> (Option<EdgeRef>, Option<EdgeRef>) {
        let mut first: Option<(f64, EdgeRef)> = None;
        let mut second: Option<(f64, EdgeRef)> = None;
        for b in self.candidates(a) {
            let s = self.score(a, b);
            match first {
                Some((fs, _)) if s >= fs => match second {
                    Some((ss, _)) if s >= ss => {}
                    _ => second = Some((s, b)),
                },
                _ => {
                    second = first;
                    first = Some((s, b));
                }
            }
        }
        (first.map(|x| x.1), second.map(|x| x.1))
    }

    pub fn piece_count(&self) -> usize {
        self.pieces
    }

    pub fn edge_count(&self) -> usize {
        self.pieces * 4
    }

    pub fn mode(&self) -> PuzzleMode {
        self.mode
    }

    pub fn metric(&self) -> Metric {
        self.metric
    }

    pub fn admissible(&self, a: EdgeRef, b: EdgeRef) -> bool {
        a.piece != b.piece
            && a.piece < self.pieces
            && b.piece < self.pieces
            && (self.mode == PuzzleMode::Type2 || b.side == a.side.opposite())
    }

    /// Admissible partner edges of `a` in dense index order.
    pub fn candidates(&self, a: EdgeRef) -> impl Iterator<Item = EdgeRef> + '_ {
        (0..self.edge_count())
            .map(EdgeRef::from_index)
            .filter(move |&b| self.admissible(a, b))
    }

    /// Dissimilarity with `a` facing right and `b` abutting it from the
    /// right. Defined for every cross-piece pair regardless of mode.
    #[inline]
    pub fn score(&self, a: EdgeRef, b: EdgeRef) -> f64 {
        self.scores[a.index() * self.edge_count() + b.index()]
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn best(&self, a: EdgeRef) -> Option<EdgeRef> {
        self.best[a.index()]
    }

    pub fn second_best(&self, a: EdgeRef) -> Option<EdgeRef> {
        self.second_best[a.index()]
    }

    pub fn are_best_buddies(&self, a: EdgeRef, b: EdgeRef) -> bool {
        self.best(a) == Some(b) && self.best(b) == Some(a)
    }

    /// All mutual most-compatible pairs, each once.
    pub fn best_buddy_pairs(&self) -> Vec<EdgePair> {
        (0..self.edge_count())
            .map(EdgeRef::from_index)
            .filter_map(|a| {
                let b = self.best(a)?;
                (a.index() < b.index() && self.best(b) == Some(a)).then(|| EdgePair::new(a, b))
            })
            .collect()
    }

    pub fn dissimilarity_ratio(&self, a: EdgeRef) -> Result<f64> {
        let (Some(b1), Some(b2)) = (self.best(a), self.second_best(a)) else {
            return Err(Error::NoSecondBest(a.to_string()));
        };
        let s1 = self.score(a, b1);
        let s2 = self.score(a, b2);
        if s2 == 0.0 {
            return Ok(0.0);
        }
        Ok(s1 / s2)
    }

    pub const DUMP_MAGIC: &'static [u8; 4] = b"DNNM";
    pub const DUMP_VERSION: u32 = 1;

    /// Debug dump: magic, version (u32), edge count (u64), then the
    /// row-major score table as f64, all little-endian. Inadmissible
    /// entries are written as `+inf`.
    pub fn write_dump(&self, mut w: impl Write) -> Result<()> {
        let edges = self.edge_count();
        w.write_all(Self::DUMP_MAGIC)?;
        w.write_all(&Self::DUMP_VERSION.to_le_bytes())?;
        w.write_all(&(edges as u64).to_le_bytes())?;
        for a in 0..edges {
            for b in 0..edges {
                let (ea, eb) = (EdgeRef::from_index(a), EdgeRef::from_index(b));
                let s = if self.admissible(ea, eb) {
                    self.scores[a * edges + b]
                } else {
                    f64::INFINITY
                };
                w.write_all(&s.to_le_bytes())?;
            }
        }
        Ok(())
    }
}

/// Parses a matrix dump into `(edge_count, scores)`.
pub fn read_matrix_dump(bytes: &[u8]) -> Result<(usize, Vec<f64>)> {
    if bytes.len() < 16 || &bytes[..4] != CompatibilityMatrix::DUMP_MAGIC {
        return Err(Error::format("not a matrix dump"));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
    if version != CompatibilityMatrix::DUMP_VERSION {
        return Err(Error::format(format!("unsupported dump version {version}")));
    }
    let edges = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes"));
    let body = &bytes[16..];
    let expected = edges
        .checked_mul(edges)
        .and_then(|n| n.checked_mul(8))
        .filter(|&n| n == body.len() as u64)
        .ok_or_else(|| Error::format("dump length does not match edge count"))?;
    debug_assert_eq!(expected as usize, body.len());
    if edges % 4 != 0 {
        return Err(Error::format("edge count is not a multiple of 4"));
    }
    let scores = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    Ok((edges as usize, scores))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bundle::make_bundle;
    use crate::piece::cut_image;
    use crate::raster::RawImage;
    use proptest::prelude::*;

    fn piece_from(id: usize, k: usize, f: impl Fn(usize, usize, usize) -> f64) -> Piece {
        let mut data = Vec::new();
        for r in 0..k {
            for c in 0..k {
                for ch in 0..3 {
                    data.push(f(r, c, ch));
                }
            }
        }
        Piece::new(id, k, data).unwrap()
    }

    fn random_pieces(n: usize, k: usize, seed: u64) -> Vec<Piece> {
        let mut rng = crate::rng::SeededRng::new(seed);
        (0..n)
            .map(|id| {
                let data = (0..k * k * 3).map(|_| rng.normal()).collect();
                Piece::new(id, k, data).unwrap()
            })
            .collect()
    }

    #[test]
    fn identical_columns_score_zero() {
        let a = piece_from(0, 3, |r, _, ch| (r * 3 + ch) as f64);
        let b = piece_from(1, 3, |r, _, ch| (r * 3 + ch) as f64);
        let pieces = [a, b];
        let d = dissimilarity(EdgeRef::new(0, Side::Right), EdgeRef::new(1, Side::Left), &pieces);
        assert_eq!(d.unwrap(), 0.0);
    }

    #[test]
    fn unit_difference_on_k2_is_sqrt6() {
        let a = piece_from(0, 2, |_, _, _| 1.0);
        let b = piece_from(1, 2, |_, _, _| 0.0);
        let pieces = [a, b];
        let d = dissimilarity(EdgeRef::new(0, Side::Right), EdgeRef::new(1, Side::Left), &pieces)
            .unwrap();
        assert!((d - 6f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn matches_direct_column_formula() {
        // Right column of a against left column of b, row by row.
        let pieces = random_pieces(2, 5, 1);
        let mut sum = 0.0;
        for k in 0..5 {
            for ch in 0..3 {
                let d = pieces[0].at(k, 4, ch) - pieces[1].at(k, 0, ch);
                sum += d * d;
            }
        }
        let d = dissimilarity(EdgeRef::new(0, Side::Right), EdgeRef::new(1, Side::Left), &pieces)
            .unwrap();
        assert!((d - sum.sqrt()).abs() < 1e-12);
        // Bottom of a over top of b.
        let mut sum = 0.0;
        for k in 0..5 {
            for ch in 0..3 {
                let d = pieces[0].at(4, k, ch) - pieces[1].at(0, k, ch);
                sum += d * d;
            }
        }
        let d = dissimilarity(EdgeRef::new(0, Side::Bottom), EdgeRef::new(1, Side::Top), &pieces)
            .unwrap();
        assert!((d - sum.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn same_piece_is_rejected() {
        let pieces = random_pieces(2, 3, 2);
        assert!(dissimilarity(EdgeRef::new(0, Side::Right), EdgeRef::new(0, Side::Left), &pieces)
            .is_err());
    }

    #[test]
    fn lpq_cases() {
        let pieces = random_pieces(3, 4, 3);
        let (a, b) = (EdgeRef::new(0, Side::Top), EdgeRef::new(2, Side::Left));
        let l2 = dissimilarity(a, b, &pieces).unwrap();
        assert!((dissimilarity_lpq(a, b, &pieces, 2.0, 1.0).unwrap() - l2).abs() < 1e-12);
        assert!(dissimilarity_lpq(a, b, &pieces, 0.0, 1.0).is_err());
        assert!(dissimilarity_lpq(a, b, &pieces, 1.0, -1.0).is_err());

        let zero = piece_from(0, 2, |_, _, _| 0.0);
        let bumped = piece_from(1, 2, |r, c, ch| if r == 0 && c == 0 && ch == 1 { 3.0 } else { 0.0 });
        let pieces = [zero.clone(), bumped];
        let d = dissimilarity_lpq(EdgeRef::new(0, Side::Right), EdgeRef::new(1, Side::Left), &pieces, 1.0, 1.0)
            .unwrap();
        assert!((d - 3.0).abs() < 1e-12);
        let pieces = [zero.clone(), Piece::new(1, 2, zero.data().to_vec()).unwrap()];
        for (p, q) in [(0.3, 1.0 / 16.0), (1.0, 2.0), (2.0, 0.5)] {
            let d = dissimilarity_lpq(EdgeRef::new(0, Side::Right), EdgeRef::new(1, Side::Left), &pieces, p, q)
                .unwrap();
            assert_eq!(d, 0.0);
        }
    }

    #[test]
    fn two_pieces_type2_has_32_scores() {
        let pieces = random_pieces(2, 4, 4);
        let m = build_matrix(&pieces, PuzzleMode::Type2).unwrap();
        let count: usize = (0..8)
            .map(|a| m.candidates(EdgeRef::from_index(a)).count())
            .sum();
        assert_eq!(count, 32);
        let m1 = build_matrix(&pieces, PuzzleMode::Type1).unwrap();
        let count: usize = (0..8)
            .map(|a| m1.candidates(EdgeRef::from_index(a)).count())
            .sum();
        assert_eq!(count, 8);
        assert!(build_matrix(&pieces[..1], PuzzleMode::Type1).is_err());
    }

    #[test]
    fn constant_image_ties_break_to_lowest_index() {
        let pieces: Vec<Piece> = (0..3).map(|i| piece_from(i, 4, |_, _, _| 0.0)).collect();
        let m = build_matrix(&pieces, PuzzleMode::Type2).unwrap();
        assert!(m.scores().iter().all(|&s| s == 0.0 || s.is_infinite()));
        assert_eq!(m.best(EdgeRef::new(0, Side::Left)), Some(EdgeRef::new(1, Side::Top)));
        assert_eq!(m.second_best(EdgeRef::new(0, Side::Left)), Some(EdgeRef::new(1, Side::Right)));
        assert_eq!(m.best(EdgeRef::new(1, Side::Top)), Some(EdgeRef::new(0, Side::Top)));
        let m1 = build_matrix(&pieces, PuzzleMode::Type1).unwrap();
        assert_eq!(m1.best(EdgeRef::new(2, Side::Right)), Some(EdgeRef::new(0, Side::Left)));
        assert_eq!(m1.second_best(EdgeRef::new(2, Side::Right)), Some(EdgeRef::new(1, Side::Left)));
    }

    #[test]
    fn best_and_second_best_are_minimal() {
        let pieces = random_pieces(6, 4, 5);
        for mode in [PuzzleMode::Type1, PuzzleMode::Type2] {
            let m = build_matrix(&pieces, mode).unwrap();
            for a in (0..24).map(EdgeRef::from_index) {
                let b1 = m.best(a).unwrap();
                let b2 = m.second_best(a).unwrap();
                assert_ne!(b1, b2);
                assert_ne!(b1.piece, a.piece);
                assert_ne!(b2.piece, a.piece);
                assert!(m.score(a, b1) <= m.score(a, b2));
                for e in m.candidates(a) {
                    if e != b1 && e != b2 {
                        assert!(m.score(a, b2) <= m.score(a, e));
                    }
                }
            }
        }
    }

    #[test]
    fn matrix_agrees_with_direct_dissimilarity() {
        let pieces = random_pieces(4, 5, 6);
        let m = build_matrix(&pieces, PuzzleMode::Type2).unwrap();
        for a in (0..16).map(EdgeRef::from_index) {
            for b in m.candidates(a) {
                let d = dissimilarity(a, b, &pieces).unwrap();
                assert!((m.score(a, b) - d).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn two_adjacent_pieces_are_best_buddies() {
        let img = RawImage::from_fn(56, 28, |x, y| [(x * 4) as u8, (y * 9) as u8, 40]).unwrap();
        let b = make_bundle(&cut_image(&img, 28).unwrap(), PuzzleMode::Type1, 0).unwrap();
        let m = build_matrix(&b.pieces, PuzzleMode::Type1).unwrap();
        let gt = b.ground_truth.unwrap();
        let left = gt.grid()[0];
        let right = gt.grid()[1];
        assert!(m.are_best_buddies(EdgeRef::new(left, Side::Right), EdgeRef::new(right, Side::Left)));
    }

    #[test]
    fn mutuality_is_required() {
        let pieces = random_pieces(5, 3, 8);
        let m = build_matrix(&pieces, PuzzleMode::Type2).unwrap();
        for a in (0..20).map(EdgeRef::from_index) {
            let b = m.best(a).unwrap();
            assert_eq!(m.are_best_buddies(a, b), m.best(b) == Some(a));
            assert_eq!(m.are_best_buddies(a, b), m.are_best_buddies(b, a));
        }
        // At least one one-sided preference exists on random data.
        assert!((0..20)
            .map(EdgeRef::from_index)
            .any(|a| !m.are_best_buddies(a, m.best(a).unwrap())));
    }

    #[test]
    fn ratio_rules() {
        let pieces = random_pieces(4, 4, 9);
        let m = build_matrix(&pieces, PuzzleMode::Type2).unwrap();
        for a in (0..16).map(EdgeRef::from_index) {
            let r = m.dissimilarity_ratio(a).unwrap();
            let expect = m.score(a, m.best(a).unwrap()) / m.score(a, m.second_best(a).unwrap());
            assert_eq!(r, expect);
            assert!((0.0..=1.0).contains(&r));
        }
        let flat: Vec<Piece> = (0..3).map(|i| piece_from(i, 2, |_, _, _| 0.0)).collect();
        let m = build_matrix(&flat, PuzzleMode::Type2).unwrap();
        assert_eq!(m.dissimilarity_ratio(EdgeRef::new(0, Side::Top)).unwrap(), 0.0);
        // Two pieces in Type1 give each edge exactly one candidate.
        let m = build_matrix(&flat[..2], PuzzleMode::Type1).unwrap();
        assert!(matches!(
            m.dissimilarity_ratio(EdgeRef::new(0, Side::Top)),
            Err(Error::NoSecondBest(_))
        ));
    }

    #[test]
    fn ratio_of_hand_values() {
        // Three K=1 pieces: values chosen so best = 2, second = 4.
        let make = |id, v: f64| Piece::new(id, 1, vec![v, 0.0, 0.0]).unwrap();
        let pieces = [make(0, 0.0), make(1, 2.0), make(2, 4.0)];
        let m = build_matrix(&pieces, PuzzleMode::Type1).unwrap();
        let a = EdgeRef::new(0, Side::Right);
        assert_eq!(m.score(a, m.best(a).unwrap()), 2.0);
        assert_eq!(m.score(a, m.second_best(a).unwrap()), 4.0);
        assert_eq!(m.dissimilarity_ratio(a).unwrap(), 0.5);
        let pieces = [make(0, 0.0), make(1, 0.0), make(2, 4.0)];
        let m = build_matrix(&pieces, PuzzleMode::Type1).unwrap();
        assert_eq!(m.dissimilarity_ratio(a).unwrap(), 0.0);
    }

    #[test]
    fn dump_roundtrip() {
        let pieces = random_pieces(3, 3, 10);
        let m = build_matrix(&pieces, PuzzleMode::Type1).unwrap();
        let mut bytes = Vec::new();
        m.write_dump(&mut bytes).unwrap();
        let (edges, scores) = read_matrix_dump(&bytes).unwrap();
        assert_eq!(edges, 12);
        let a = EdgeRef::new(0, Side::Right);
        let b = EdgeRef::new(2, Side::Left);
        assert_eq!(scores[a.index() * 12 + b.index()], m.score(a, b));
        assert!(scores[a.index() * 12 + EdgeRef::new(2, Side::Top).index()].is_infinite());
        assert!(read_matrix_dump(&bytes[..bytes.len() - 1]).is_err());
        assert!(read_matrix_dump(b"XXXX").is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn scores_are_symmetric_and_nonnegative(seed in 0u64..1000) {
            let pieces = random_pieces(4, 3, seed);
            let m = build_matrix(&pieces, PuzzleMode::Type2).unwrap();
            for a in (0..16).map(EdgeRef::from_index) {
                for b in m.candidates(a) {
                    prop_assert!(m.score(a, b) >= 0.0);
                    prop_assert!((m.score(a, b) - m.score(b, a)).abs() < 1e-9);
                    let direct = dissimilarity(b, a, &pieces).unwrap();
                    prop_assert!((m.score(a, b) - direct).abs() < 1e-9);
                }
            }
        }
    }
}
