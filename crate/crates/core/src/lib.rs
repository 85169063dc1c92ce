//! Square jigsaw puzzle toolkit.
//!
//! The pipeline runs from images to solved puzzles:
//!
//! 1. [`raster`] and [`piece`] convert images to z-scored YUV and cut them
//!    into square tiles; [`bundle`] shuffles (and, for Type2 puzzles,
//!    rotates) the tiles and records the ground truth.
//! 2. [`compat`] scores every ordered edge pair and answers most-compatible
//!    and best-buddy queries.
//! 3. [`dataset`] builds a balanced training set of hard edge pairs and
//!    [`nn`] trains a small fully connected classifier on it.
//! 4. [`buddies`] keeps each edge's most compatible candidate only when the
//!    classifier accepts it; [`ga`] consumes those pairs in crossover.
//! 5. [`eval`] scores reconstructions and assembles reports.

pub mod buddies;
pub mod bundle;
pub mod compat;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod ga;
pub mod nn;
pub mod piece;
pub mod raster;
pub mod rng;
pub mod synth;

pub use buddies::{compute_dnn_buddies, metric_precision, DnnBuddyMap, MetricStats};
pub use bundle::{make_bundle, EdgePair, GroundTruth, PuzzleBundle, PuzzleMode};
pub use compat::{build_matrix, dissimilarity, dissimilarity_lpq, CompatibilityMatrix, Metric};
pub use dataset::{build_dataset, extract_features, Dataset, EdgePairSample};
pub use error::{Error, Result};
pub use eval::{neighbor_accuracy, recall_bound};
pub use ga::{crossover, fitness, solve, Chromosome, GaConfig, SolverContext};
pub use nn::{gradient_check, train, Network, TrainConfig};
pub use piece::{cut_tiles, EdgeRef, Piece, Side};
pub use raster::{to_normalized_yuv, NormalizedImage, RawImage};
