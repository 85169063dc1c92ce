//! The learned estimation metric: an edge's most compatible candidate,
//! kept only when the classifier accepts the pair.

use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::Serialize;

use crate::bundle::{EdgePair, GroundTruth};
use crate::compat::CompatibilityMatrix;
use crate::dataset::{extract_features, FEATURE_TILE};
use crate::error::{Error, Result};
use crate::nn::Network;
use crate::piece::{EdgeRef, Piece};

pub const DEFAULT_THRESHOLD: f64 = 0.5;

/// Directed map from each edge to at most one partner.
#[derive(Debug, Clone, PartialEq)]
pub struct DnnBuddyMap {
    partners: Vec<Option<EdgeRef>>,
    pub threshold: f64,
}

impl DnnBuddyMap {
    pub fn empty(edge_count: usize) -> Self {
        DnnBuddyMap {
            partners: vec![None; edge_count],
            threshold: DEFAULT_THRESHOLD,
        }
    }

    pub fn from_partners(partners: Vec<Option<EdgeRef>>, threshold: f64) -> Self {
        DnnBuddyMap { partners, threshold }
    }

    pub fn partner(&self, a: EdgeRef) -> Option<EdgeRef> {
        self.partners.get(a.index()).copied().flatten()
    }

    /// Number of edges with a buddy.
    pub fn len(&self) -> usize {
        self.partners.iter().filter(|p| p.is_some()).count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn edge_count(&self) -> usize {
        self.partners.len()
    }

    pub fn directed(&self) -> impl Iterator<Item = (EdgeRef, EdgeRef)> + '_ {
        self.partners
            .iter()
            .enumerate()
            .filter_map(|(i, p)| p.map(|b| (EdgeRef::from_index(i), b)))
    }

    /// Undirected buddy pairs (either direction suffices), each once.
    pub fn pairs(&self) -> BTreeSet<EdgePair> {
        self.directed().map(|(a, b)| EdgePair::new(a, b)).collect()
    }

    pub fn mutual_pairs(&self) -> BTreeSet<EdgePair> {
        self.directed()
            .filter(|&(a, b)| self.partner(b) == Some(a))
            .map(|(a, b)| EdgePair::new(a, b))
            .collect()
    }

    /// True when `a` and `b` are buddies in either direction.
    pub fn links(&self, a: EdgeRef, b: EdgeRef) -> bool {
        self.partner(a) == Some(b) || self.partner(b) == Some(a)
    }
}

pub fn compute_dnn_buddies(
    matrix: &CompatibilityMatrix,
    net: &Network,
    pieces: &[Piece],
) -> Result<DnnBuddyMap> {
    compute_dnn_buddies_with(matrix, net, pieces, DEFAULT_THRESHOLD)
}

/// Keeps `best(a)` as a's buddy when the classifier's match probability
/// exceeds `threshold`.
pub fn compute_dnn_buddies_with(
    matrix: &CompatibilityMatrix,
    net: &Network,
    pieces: &[Piece],
    threshold: f64,
) -> Result<DnnBuddyMap> {
    if let Some(p) = pieces.iter().find(|p| p.size() != FEATURE_TILE) {
        return Err(Error::UnsupportedTileSize(p.size()));
    }
    if pieces.len() != matrix.piece_count() {
        return Err(Error::invalid("matrix and pieces disagree on piece count"));
    }
    let partners = (0..matrix.edge_count())
        .into_par_iter()
        .map(|i| {
            let a = EdgeRef::from_index(i);
            let Some(b) = matrix.best(a) else {
                return Ok(None);
            };
            let (_, p_match) = net.forward(&extract_features(a, b, pieces)?)?;
            Ok((p_match > threshold).then_some(b))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DnnBuddyMap { partners, threshold })
}

/// Every edge paired with its most compatible candidate, as undirected pairs.
pub fn most_compatible_pairs(matrix: &CompatibilityMatrix) -> BTreeSet<EdgePair> {
    (0..matrix.edge_count())
        .map(EdgeRef::from_index)
        .filter_map(|a| matrix.best(a).map(|b| EdgePair::new(a, b)))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MetricStats {
    pub proposed: usize,
    pub correct: usize,
    /// Absent when nothing was proposed.
    pub precision: Option<f64>,
    /// Correct pairs over `pieces - 1`, the number a spanning assignment needs.
    pub recall_spanning: f64,
    /// Correct pairs over all true adjacencies.
    pub recall_all: f64,
}

pub fn metric_precision<'a>(
    pairs: impl IntoIterator<Item = &'a EdgePair>,
    truth: &GroundTruth,
) -> MetricStats {
    let unique: BTreeSet<EdgePair> = pairs.into_iter().copied().collect();
    let correct = unique
        .iter()
        .filter(|EdgePair(a, b)| truth.is_adjacent(*a, *b))
        .count();
    let spanning = truth.cells.len().saturating_sub(1);
    let all = truth.adjacency_count();
    let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    MetricStats {
        proposed: unique.len(),
        correct,
        precision: (!unique.is_empty()).then(|| correct as f64 / unique.len() as f64),
        recall_spanning: ratio(correct, spanning),
        recall_all: ratio(correct, all),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bundle::{PuzzleBundle, PuzzleMode};
    use crate::compat::build_matrix;
    use crate::nn::{InitRule, DNN_BUDDIES_SHAPE};
    use crate::synth;

    /// Network whose output bias makes it always prefer one class.
    fn constant_net(prefer_match: bool) -> Network {
        let mut net = Network::new(&DNN_BUDDIES_SHAPE, InitRule::Zeros, 0).unwrap();
        let n = net.parameter_count();
        // Output biases are the last two parameters.
        net.set_parameter(n - 2, if prefer_match { -5.0 } else { 5.0 });
        net.set_parameter(n - 1, if prefer_match { 5.0 } else { -5.0 });
        net
    }

    fn bundle() -> PuzzleBundle {
        PuzzleBundle::from_image(&synth::landscape(112, 84, 3), 28, PuzzleMode::Type1, 2).unwrap()
    }

    #[test]
    fn rejecting_network_gives_empty_map() {
        let b = bundle();
        let m = build_matrix(&b.pieces, b.mode).unwrap();
        let map = compute_dnn_buddies(&m, &constant_net(false), &b.pieces).unwrap();
        assert!(map.is_empty());
        assert!(metric_precision(&map.pairs(), b.ground_truth.as_ref().unwrap())
            .precision
            .is_none());
    }

    #[test]
    fn accepting_network_collapses_to_most_compatible() {
        let b = bundle();
        let m = build_matrix(&b.pieces, b.mode).unwrap();
        let map = compute_dnn_buddies(&m, &constant_net(true), &b.pieces).unwrap();
        assert_eq!(map.len(), 4 * b.len());
        for (a, p) in map.directed() {
            assert_eq!(m.best(a), Some(p));
        }
        assert_eq!(map.pairs(), most_compatible_pairs(&m));
        assert!(map.mutual_pairs().is_subset(&map.pairs()));
        let bb: BTreeSet<EdgePair> = m.best_buddy_pairs().into_iter().collect();
        assert_eq!(map.mutual_pairs(), bb);
    }

    #[test]
    fn every_buddy_is_most_compatible_for_random_network() {
        let b = bundle();
        let m = build_matrix(&b.pieces, b.mode).unwrap();
        for seed in 0..3 {
            let map = compute_dnn_buddies(&m, &Network::dnn_buddies(seed), &b.pieces).unwrap();
            for (a, p) in map.directed() {
                let best = m.score(a, p);
                assert!(m.candidates(a).all(|e| best <= m.score(a, e)));
            }
        }
    }

    #[test]
    fn wrong_tile_size_is_rejected() {
        let b = PuzzleBundle::from_image(&synth::landscape(64, 64, 1), 16, PuzzleMode::Type1, 0).unwrap();
        let m = build_matrix(&b.pieces, b.mode).unwrap();
        assert!(matches!(
            compute_dnn_buddies(&m, &Network::dnn_buddies(0), &b.pieces),
            Err(Error::UnsupportedTileSize(16))
        ));
    }

    #[test]
    fn precision_of_ground_truth_is_one() {
        let b = bundle();
        let gt = b.ground_truth.as_ref().unwrap();
        let all = gt.adjacent_pairs();
        let s = metric_precision(&all, gt);
        assert_eq!(s.precision, Some(1.0));
        assert_eq!(s.recall_all, 1.0);
        assert_eq!(s.proposed, gt.adjacency_count());
        assert!((s.recall_spanning - 17.0 / 11.0).abs() < 1e-12);
        let half: Vec<EdgePair> = all.iter().copied().take(5).collect();
        let s = metric_precision(&half, gt);
        assert_eq!(s.precision, Some(1.0));
        assert_eq!(s.correct, 5);
    }

    #[test]
    fn precision_counts_wrong_pairs() {
        let b = bundle();
        let gt = b.ground_truth.as_ref().unwrap();
        let good = *gt.adjacent_pairs().iter().next().unwrap();
        let bad = EdgePair::new(good.0, EdgeRef::new(good.1.piece, good.1.side.opposite()));
        let s = metric_precision(&[good, bad, bad], gt);
        assert_eq!(s.proposed, 2);
        assert_eq!(s.precision, Some(0.5));
    }
}
