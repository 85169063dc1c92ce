//! Reconstruction scoring, rendering and run reports.

use std::collections::BTreeMap;
use std::time::Instant;

use rayon::prelude::*;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::buddies::{compute_dnn_buddies, metric_precision, DnnBuddyMap, MetricStats};
use crate::bundle::{GroundTruth, PuzzleBundle};
use crate::compat::build_matrix;
use crate::error::{Error, Result};
use crate::ga::{solve, Chromosome, GaConfig, GenerationStats, Phase, Placement, SolveResult, SolverContext};
use crate::nn::Network;
use crate::piece::rotate_square;
use crate::raster::RawImage;

pub const REPORT_VERSION: u32 = 1;

/// Fraction of true adjacencies reproduced by the solution. Rotating the
/// whole solution does not change the score.
pub fn neighbor_accuracy(ch: &Chromosome, truth: &GroundTruth) -> Result<f64> {
    if ch.cells.len() != truth.cells.len() {
        return Err(Error::ShapeMismatch {
            expected: vec![truth.cells.len()],
            found: vec![ch.cells.len()],
        });
    }
    Ok(neighbor_accuracy_unchecked(ch, truth))
}

/// A single-piece puzzle scores 1.0.
pub(crate) fn neighbor_accuracy_unchecked(ch: &Chromosome, truth: &GroundTruth) -> f64 {
    if truth.adjacency_count() == 0 {
        return 1.0;
    }
    let truth_pairs = truth.adjacent_pairs();
    let hits = ch.relation_set().intersection(&truth_pairs).count();
    hits as f64 / truth.adjacency_count() as f64
}

pub fn is_perfect(ch: &Chromosome, truth: &GroundTruth) -> bool {
    ch.cells.len() == truth.cells.len() && ch.relation_set() == truth.adjacent_pairs()
}

/// Recall ceiling on an `rows × cols` grid for a metric that proposes a
/// spanning set of `rows·cols − 1` pairs, over four times the adjacency count.
pub fn recall_bound(rows: usize, cols: usize) -> f64 {
    let spanning = (rows * cols) as f64 - 1.0;
    let adjacencies = rows * cols.saturating_sub(1) + rows.saturating_sub(1) * cols;
    spanning / (4.0 * adjacencies as f64)
}

/// Assembles a solution from RGB tiles.
pub fn render(ch: &Chromosome, tiles: &[Vec<u8>], k: usize) -> Result<RawImage> {
    let (w, h) = (ch.cols * k, ch.rows * k);
    let mut px = vec![0u8; w * h * 3];
    for r in 0..ch.rows {
        for c in 0..ch.cols {
            let p = ch.at(r, c);
            let tile = tiles
                .get(p.piece)
                .ok_or_else(|| Error::invalid(format!("no tile for piece {}", p.piece)))?;
            if tile.len() != k * k * 3 {
                return Err(Error::ShapeMismatch {
                    expected: vec![k * k * 3],
                    found: vec![tile.len()],
                });
            }
            let shown = rotate_square(tile, k, 3, p.turns);
            for y in 0..k {
                let dst = ((r * k + y) * w + c * k) * 3;
                px[dst..dst + k * 3].copy_from_slice(&shown[y * k * 3..(y + 1) * k * 3]);
            }
        }
    }
    RawImage::new(w, h, px)
}

/// Source image rebuilt from a bundle's ground truth, when it has one.
pub fn render_truth(bundle: &PuzzleBundle) -> Result<Option<RawImage>> {
    let (Some(gt), Some(tiles)) = (bundle.ground_truth.as_ref(), bundle.rgb.as_ref()) else {
        return Ok(None);
    };
    let ch = Chromosome {
        rows: gt.rows,
        cols: gt.cols,
        cells: crate::ga::truth_placements(gt),
        fitness: 0.0,
    };
    render(&ch, tiles, bundle.tile_size).map(Some)
}

/// Two images next to each other, separated by a white gap.
pub fn side_by_side(left: &RawImage, right: &RawImage, gap: usize) -> RawImage {
    let w = left.width() + gap + right.width();
    let h = left.height().max(right.height());
    RawImage::from_fn(w, h, |x, y| {
        if x < left.width() {
            if y < left.height() { left.pixel(x, y) } else { [0; 3] }
        } else if x < left.width() + gap {
            [255; 3]
        } else {
            let rx = x - left.width() - gap;
            if y < right.height() { right.pixel(rx, y) } else { [0; 3] }
        }
    })
    .expect("nonzero dimensions")
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct PlacedPiece {
    pub row: usize,
    pub col: usize,
    pub piece: usize,
    /// Degrees CCW.
    pub rotation: u16,
}

#[derive(Debug, Clone, Serialize)]
pub struct Solution {
    pub rows: usize,
    pub cols: usize,
    pub fitness: f64,
    pub cells: Vec<PlacedPiece>,
}

impl Solution {
    pub fn from_chromosome(ch: &Chromosome) -> Self {
        let cells = (0..ch.rows)
            .flat_map(|row| (0..ch.cols).map(move |col| (row, col)))
            .map(|(row, col)| {
                let p = ch.at(row, col);
                PlacedPiece {
                    row,
                    col,
                    piece: p.piece,
                    rotation: p.turns as u16 * 90,
                }
            })
            .collect();
        Solution {
            rows: ch.rows,
            cols: ch.cols,
            fitness: ch.fitness,
            cells,
        }
    }
}

fn phase_name(p: Phase) -> &'static str {
    match p {
        Phase::Start => "start",
        Phase::Common => "common",
        Phase::DnnBuddy => "dnn_buddy",
        Phase::BestBuddy => "best_buddy",
        Phase::MostCompatible => "most_compatible",
        Phase::Random => "random",
    }
}

const PHASES: [Phase; Phase::COUNT] = [
    Phase::Start,
    Phase::Common,
    Phase::DnnBuddy,
    Phase::BestBuddy,
    Phase::MostCompatible,
    Phase::Random,
];

#[derive(Debug, Clone, Serialize)]
pub struct PuzzleRun {
    pub name: String,
    pub pieces: usize,
    pub seed: u64,
    pub use_dnn: bool,
    pub fitness: f64,
    pub rows: usize,
    pub cols: usize,
    pub neighbor_accuracy: Option<f64>,
    pub perfect: Option<bool>,
    /// Fitness of the ground-truth arrangement, for comparison.
    pub truth_fitness: Option<f64>,
    pub phase_counts: BTreeMap<&'static str, usize>,
    pub dnn_buddies: Option<usize>,
    pub dnn_metric: Option<MetricStats>,
    pub best_buddy_metric: Option<MetricStats>,
    /// Recall ceiling for the true grid, when known.
    pub recall_bound: Option<f64>,
    pub runtime_s: f64,
    pub config: GaConfig,
}

/// Matrix, optional DNN-buddies and GA for one bundle.
pub fn solve_bundle(
    name: &str,
    bundle: &PuzzleBundle,
    net: Option<&Network>,
    cfg: &GaConfig,
) -> Result<(SolveResult, PuzzleRun)> {
    if bundle.len() == 1 {
        return Ok(solve_single(name, bundle, cfg));
    }
    let start = Instant::now();
    let matrix = build_matrix(&bundle.pieces, bundle.mode)?;
    let dnn: Option<DnnBuddyMap> = match (net, cfg.use_dnn) {
        (Some(n), true) => Some(compute_dnn_buddies(&matrix, n, &bundle.pieces)?),
        _ => None,
    };
    let ctx = SolverContext::for_bundle(bundle, &matrix, dnn.as_ref())?;
    let truth = bundle.ground_truth.as_ref();
    let result = solve(&ctx, cfg, truth)?;
    let run = PuzzleRun {
        name: name.to_string(),
        pieces: bundle.len(),
        seed: cfg.seed,
        use_dnn: dnn.is_some(),
        fitness: result.best.fitness,
        rows: result.best.rows,
        cols: result.best.cols,
        neighbor_accuracy: truth.map(|t| neighbor_accuracy_unchecked(&result.best, t)),
        perfect: truth.map(|t| is_perfect(&result.best, t)),
        truth_fitness: truth.map(|t| Chromosome::from_truth(t, &matrix).fitness),
        phase_counts: PHASES
            .iter()
            .map(|&p| (phase_name(p), result.phase_counts[p.index()]))
            .collect(),
        dnn_buddies: dnn.as_ref().map(|d| d.len()),
        dnn_metric: match (&dnn, truth) {
            (Some(d), Some(t)) => Some(metric_precision(&d.pairs(), t)),
            _ => None,
        },
        best_buddy_metric: truth.map(|t| metric_precision(&matrix.best_buddy_pairs(), t)),
        recall_bound: truth.map(|t| recall_bound(t.rows, t.cols)),
        runtime_s: start.elapsed().as_secs_f64(),
        config: cfg.clone(),
    };
    Ok((result, run))
}

/// One piece needs no matrix: it is placed as stored.
fn solve_single(name: &str, bundle: &PuzzleBundle, cfg: &GaConfig) -> (SolveResult, PuzzleRun) {
    let best = Chromosome {
        rows: 1,
        cols: 1,
        cells: vec![Placement { piece: 0, turns: 0 }],
        fitness: 0.0,
    };
    let truth = bundle.ground_truth.as_ref();
    let stats = (0..=cfg.generations)
        .map(|generation| GenerationStats {
            generation,
            best_fitness: 0.0,
            mean_fitness: 0.0,
            best_accuracy: truth.map(|_| 1.0),
        })
        .collect();
    let run = PuzzleRun {
        name: name.to_string(),
        pieces: 1,
        seed: cfg.seed,
        use_dnn: false,
        fitness: 0.0,
        rows: 1,
        cols: 1,
        neighbor_accuracy: truth.map(|_| 1.0),
        perfect: truth.map(|_| true),
        truth_fitness: truth.map(|_| 0.0),
        phase_counts: PHASES.iter().map(|&p| (phase_name(p), 0)).collect(),
        dnn_buddies: None,
        dnn_metric: None,
        best_buddy_metric: None,
        recall_bound: None,
        runtime_s: 0.0,
        config: cfg.clone(),
    };
    let result = SolveResult {
        best,
        stats,
        phase_counts: [0; Phase::COUNT],
    };
    (result, run)
}

#[derive(Debug, Clone, Serialize)]
pub struct AblationRow {
    pub name: String,
    pub without_dnn: f64,
    pub with_dnn: f64,
    pub delta: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchmarkReport {
    pub version: u32,
    pub config: GaConfig,
    pub runs: Vec<PuzzleRun>,
    pub ablation: Vec<AblationRow>,
    pub mean_without_dnn: f64,
    pub mean_with_dnn: f64,
    pub perfect_without_dnn: usize,
    pub perfect_with_dnn: usize,
}

impl BenchmarkReport {
    pub fn to_json(&self) -> Result<Vec<u8>> {
        let mut v = serde_json::to_vec_pretty(self)?;
        v.push(b'\n');
        Ok(v)
    }

    pub fn summary(&self) -> String {
        let mut s = String::new();
        s.push_str("puzzle\twithout_dnn\twith_dnn\tdelta\n");
        for r in &self.ablation {
            s.push_str(&format!("{}\t{:.4}\t{:.4}\t{:+.4}\n", r.name, r.without_dnn, r.with_dnn, r.delta));
        }
        s.push_str(&format!(
            "mean\t{:.4}\t{:.4}\t{:+.4}\n",
            self.mean_without_dnn,
            self.mean_with_dnn,
            self.mean_with_dnn - self.mean_without_dnn
        ));
        s.push_str(&format!(
            "perfect\t{}\t{}\n",
            self.perfect_without_dnn, self.perfect_with_dnn
        ));
        s
    }
}

/// Solves every bundle twice with the same seed, with and without the
/// learned buddies. Bundles must carry ground truth.
pub fn benchmark(
    bundles: &[(String, PuzzleBundle)],
    net: &Network,
    cfg: &GaConfig,
) -> Result<BenchmarkReport> {
    if bundles.is_empty() {
        return Err(Error::invalid("benchmark needs at least one puzzle"));
    }
    if let Some((name, _)) = bundles.iter().find(|(_, b)| b.ground_truth.is_none()) {
        return Err(Error::invalid(format!("{name} has no ground truth")));
    }
    let off = GaConfig { use_dnn: false, ..cfg.clone() };
    let on = GaConfig { use_dnn: true, ..cfg.clone() };
    let paired: Vec<(PuzzleRun, PuzzleRun)> = bundles
        .par_iter()
        .map(|(name, b)| {
            let (_, r0) = solve_bundle(name, b, None, &off)?;
            let (_, r1) = solve_bundle(name, b, Some(net), &on)?;
            Ok((r0, r1))
        })
        .collect::<Result<_>>()?;
    let mut runs = Vec::with_capacity(bundles.len() * 2);
    let mut ablation = Vec::with_capacity(bundles.len());
    for (r0, r1) in paired {
        let name = r0.name.clone();
        let (a0, a1) = (r0.neighbor_accuracy.unwrap_or(0.0), r1.neighbor_accuracy.unwrap_or(0.0));
        ablation.push(AblationRow {
            name,
            without_dnn: a0,
            with_dnn: a1,
            delta: a1 - a0,
        });
        runs.push(r0);
        runs.push(r1);
    }
    let n = ablation.len() as f64;
    // Runs alternate off, on.
    let count = |arm: usize| runs.iter().skip(arm).step_by(2).filter(|r| r.perfect == Some(true)).count();
    Ok(BenchmarkReport {
        version: REPORT_VERSION,
        config: cfg.clone(),
        mean_without_dnn: ablation.iter().map(|r| r.without_dnn).sum::<f64>() / n,
        mean_with_dnn: ablation.iter().map(|r| r.with_dnn).sum::<f64>() / n,
        perfect_without_dnn: count(0),
        perfect_with_dnn: count(1),
        runs,
        ablation,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bundle::PuzzleMode;
    use crate::compat::build_matrix;
    use crate::synth;

    fn gt_and_matrix(mode: PuzzleMode) -> (PuzzleBundle, crate::compat::CompatibilityMatrix) {
        let b = PuzzleBundle::from_image(&synth::landscape(112, 84, 5), 28, mode, 3).unwrap();
        let m = build_matrix(&b.pieces, mode).unwrap();
        (b, m)
    }

    #[test]
    fn truth_scores_one_and_renders_original() {
        for mode in [PuzzleMode::Type1, PuzzleMode::Type2] {
            let img = synth::landscape(112, 84, 5);
            let b = PuzzleBundle::from_image(&img, 28, mode, 3).unwrap();
            let m = build_matrix(&b.pieces, mode).unwrap();
            let gt = b.ground_truth.as_ref().unwrap();
            let ch = Chromosome::from_truth(gt, &m);
            assert_eq!(neighbor_accuracy(&ch, gt).unwrap(), 1.0);
            assert!(is_perfect(&ch, gt));
            assert_eq!(render(&ch, b.rgb.as_ref().unwrap(), 28).unwrap(), img);
        }
    }

    /// Rotates a grid of placements by one CCW quarter turn as a whole.
    fn rotate_solution(ch: &Chromosome, m: &crate::compat::CompatibilityMatrix) -> Chromosome {
        let (rows, cols) = (ch.cols, ch.rows);
        let mut cells = Vec::with_capacity(ch.cells.len());
        for r in 0..rows {
            for c in 0..cols {
                let p = ch.at(c, ch.cols - 1 - r);
                cells.push(Placement { piece: p.piece, turns: (p.turns + 1) % 4 });
            }
        }
        Chromosome::new(rows, cols, cells, m)
    }

    #[test]
    fn global_rotation_is_free() {
        let (b, m) = gt_and_matrix(PuzzleMode::Type2);
        let gt = b.ground_truth.as_ref().unwrap();
        let mut ch = Chromosome::from_truth(gt, &m);
        for _ in 0..4 {
            ch = rotate_solution(&ch, &m);
            assert_eq!(neighbor_accuracy(&ch, gt).unwrap(), 1.0);
            assert!((ch.fitness - Chromosome::from_truth(gt, &m).fitness).abs() < 1e-9);
        }
    }

    #[test]
    fn one_swap_loses_exactly_the_touched_adjacencies() {
        let (b, m) = gt_and_matrix(PuzzleMode::Type1);
        let gt = b.ground_truth.as_ref().unwrap();
        let mut ch = Chromosome::from_truth(gt, &m);
        // 3x4 grid: swap the two corner pieces of the top row.
        ch.cells.swap(0, 3);
        let ch = Chromosome::new(ch.rows, ch.cols, ch.cells, &m);
        // Each corner has 2 adjacencies.
        assert!((neighbor_accuracy(&ch, gt).unwrap() - 13.0 / 17.0).abs() < 1e-12);
        assert!(!is_perfect(&ch, gt));
    }

    #[test]
    fn swapped_one_by_two_scores_zero() {
        let b = PuzzleBundle::from_image(&synth::landscape(56, 28, 1), 28, PuzzleMode::Type1, 0).unwrap();
        let m = build_matrix(&b.pieces, b.mode).unwrap();
        let gt = b.ground_truth.as_ref().unwrap();
        let truth = Chromosome::from_truth(gt, &m);
        let mut swapped = truth.cells.clone();
        swapped.reverse();
        let swapped = Chromosome::new(1, 2, swapped, &m);
        assert_eq!(neighbor_accuracy(&truth, gt).unwrap(), 1.0);
        assert_eq!(neighbor_accuracy(&swapped, gt).unwrap(), 0.0);
        // Brute force: the one true pair is left piece's right edge to right piece's left edge.
        let left = gt.grid()[0];
        let right = gt.grid()[1];
        let (a, c) = swapped.relations()[0];
        assert_ne!((a.piece, c.piece), (left, right));
    }

    #[test]
    fn single_piece_benchmark_is_trivially_perfect() {
        let bundles: Vec<(String, PuzzleBundle)> = (0..3)
            .map(|i| {
                let b = PuzzleBundle::from_image(&synth::landscape(28, 28, i), 28, PuzzleMode::Type2, i).unwrap();
                (format!("one{i}"), b)
            })
            .collect();
        let cfg = GaConfig { population: 4, elites: 1, generations: 2, ..GaConfig::default() };
        let r = benchmark(&bundles, &Network::dnn_buddies(0), &cfg).unwrap();
        assert_eq!((r.mean_without_dnn, r.mean_with_dnn), (1.0, 1.0));
        assert_eq!((r.perfect_without_dnn, r.perfect_with_dnn), (3, 3));
    }

    #[test]
    fn mismatched_sizes_are_rejected() {
        let (b, m) = gt_and_matrix(PuzzleMode::Type1);
        let gt = b.ground_truth.as_ref().unwrap();
        let ch = Chromosome::new(1, 1, vec![Placement { piece: 0, turns: 0 }], &m);
        assert!(neighbor_accuracy(&ch, gt).is_err());
    }

    #[test]
    fn recall_bound_values() {
        assert!((recall_bound(12, 17) - 203.0 / 1516.0).abs() < 1e-15);
        assert!((recall_bound(2, 2) - 3.0 / 16.0).abs() < 1e-15);
    }

    #[test]
    fn sha256_known_vector() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn side_by_side_pads() {
        let a = RawImage::from_fn(2, 3, |_, _| [1, 2, 3]).unwrap();
        let b = RawImage::from_fn(1, 1, |_, _| [9, 9, 9]).unwrap();
        let s = side_by_side(&a, &b, 1);
        assert_eq!((s.width(), s.height()), (4, 3));
        assert_eq!(s.pixel(2, 0), [255; 3]);
        assert_eq!(s.pixel(3, 0), [9; 3]);
        assert_eq!(s.pixel(3, 2), [0; 3]);
    }

    #[test]
    fn benchmark_is_deterministic() {
        let bundles: Vec<(String, PuzzleBundle)> = (0..2)
            .map(|i| {
                let b = PuzzleBundle::from_image(&synth::ramps(84, 56, i), 28, PuzzleMode::Type1, i).unwrap();
                (format!("p{i}"), b)
            })
            .collect();
        let net = Network::dnn_buddies(0);
        let cfg = GaConfig { population: 20, generations: 5, ..GaConfig::default() };
        let table = |r: &BenchmarkReport| serde_json::to_string(&r.ablation).unwrap();
        let r = benchmark(&bundles, &net, &cfg).unwrap();
        assert_eq!(table(&r), table(&benchmark(&bundles, &net, &cfg).unwrap()));
        assert_eq!(r.ablation.len(), 2);
        assert_eq!(r.runs.len(), 4);
        assert!(r.summary().contains("mean"));
    }
}
