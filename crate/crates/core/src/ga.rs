//! Genetic-algorithm solver with kernel-growing crossover.
//!
//! A child is grown one piece at a time from a random start piece. At each
//! step every open boundary slot is examined and the first phase that
//! applies anywhere wins:
//!
//! 1. a relation both parents agree on,
//! 2. a DNN-buddy relation present in either parent,
//! 3. a best-buddy relation present in either parent,
//! 4. the most compatible unused piece edge (lowest score on the boundary),
//! 5. a random unused piece.
//!
//! Within phases 1-3 and 5, slots next to the most recently placed piece are
//! preferred, then lowest `(row, col)`. Growth is confined to bounding boxes
//! that fit a feasible frame: `rows × cols` for Type1, any factor pair of
//! the piece count for Type2.

use std::collections::{BTreeSet, HashMap};
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::buddies::DnnBuddyMap;
use crate::bundle::{EdgePair, GroundTruth, PuzzleBundle, PuzzleMode};
use crate::compat::CompatibilityMatrix;
use crate::error::{Error, Result};
use crate::piece::{EdgeRef, Side};
use crate::rng::SeededRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Placement {
    pub piece: usize,
    /// CCW quarter turns applied to the stored piece.
    pub turns: u8,
}

impl Placement {
    /// Stored side of the piece that shows at `displayed`.
    pub fn stored_side(self, displayed: Side) -> Side {
        displayed.after_turns(4 - self.turns % 4)
    }

    pub fn edge(self, displayed: Side) -> EdgeRef {
        EdgeRef::new(self.piece, self.stored_side(displayed))
    }
}

/// A complete placement on a `rows × cols` grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Chromosome {
    pub rows: usize,
    pub cols: usize,
    /// Row-major.
    pub cells: Vec<Placement>,
    pub fitness: f64,
}

impl Chromosome {
    pub fn new(rows: usize, cols: usize, cells: Vec<Placement>, matrix: &CompatibilityMatrix) -> Self {
        let mut c = Chromosome {
            rows,
            cols,
            cells,
            fitness: 0.0,
        };
        c.fitness = fitness(&c, matrix);
        c
    }

    /// Ground-truth arrangement of a bundle (rotations undone).
    pub fn from_truth(truth: &GroundTruth, matrix: &CompatibilityMatrix) -> Self {
        Chromosome::new(truth.rows, truth.cols, truth_placements(truth), matrix)
    }

    pub fn at(&self, row: usize, col: usize) -> Placement {
        self.cells[row * self.cols + col]
    }

    /// Every adjacency as `(a, b)`: `a` abuts `b` with `a` on the left or top.
    pub fn relations(&self) -> Vec<(EdgeRef, EdgeRef)> {
        let mut out = Vec::with_capacity(self.rows * self.cols * 2);
        for r in 0..self.rows {
            for c in 0..self.cols {
                let here = self.at(r, c);
                if c + 1 < self.cols {
                    out.push((here.edge(Side::Right), self.at(r, c + 1).edge(Side::Left)));
                }
                if r + 1 < self.rows {
                    out.push((here.edge(Side::Bottom), self.at(r + 1, c).edge(Side::Top)));
                }
            }
        }
        out
    }

    pub fn relation_set(&self) -> BTreeSet<EdgePair> {
        self.relations().into_iter().map(|(a, b)| EdgePair::new(a, b)).collect()
    }

    /// Partner of every edge (dense index) in this arrangement.
    pub fn partners(&self, edge_count: usize) -> Vec<Option<EdgeRef>> {
        let mut out = vec![None; edge_count];
        for (a, b) in self.relations() {
            out[a.index()] = Some(b);
            out[b.index()] = Some(a);
        }
        out
    }

    /// Complete bijection over `pieces` ids with legal rotations.
    pub fn is_valid(&self, pieces: usize, mode: PuzzleMode) -> bool {
        if self.rows * self.cols != pieces || self.cells.len() != pieces {
            return false;
        }
        let mut seen = vec![false; pieces];
        for p in &self.cells {
            if p.piece >= pieces || std::mem::replace(&mut seen[p.piece], true) {
                return false;
            }
            if p.turns > 3 || (mode == PuzzleMode::Type1 && p.turns != 0) {
                return false;
            }
        }
        true
    }
}

/// Row-major placements that restore the source image.
pub fn truth_placements(truth: &GroundTruth) -> Vec<Placement> {
    truth
        .grid()
        .into_iter()
        .map(|piece| Placement {
            piece,
            turns: (4 - truth.cells[piece].turns) % 4,
        })
        .collect()
}

/// Sum of dissimilarities over all abutting edges; lower is better.
pub fn fitness(ch: &Chromosome, matrix: &CompatibilityMatrix) -> f64 {
    ch.relations().into_iter().map(|(a, b)| matrix.score(a, b)).sum()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct GaConfig {
    pub population: usize,
    pub generations: usize,
    pub elites: usize,
    pub seed: u64,
    /// Phase 2 of crossover.
    pub use_dnn: bool,
    /// Phase 3 of crossover.
    pub use_best_buddies: bool,
}

impl Default for GaConfig {
    fn default() -> Self {
        GaConfig {
            population: 300,
            generations: 100,
            elites: 4,
            seed: 0,
            use_dnn: true,
            use_best_buddies: true,
        }
    }
}

impl GaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.population < 2 {
            return Err(Error::invalid("population must be at least 2"));
        }
        if self.elites >= self.population {
            return Err(Error::invalid("elites must be fewer than the population"));
        }
        if self.generations == 0 {
            return Err(Error::invalid("need at least one generation"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Start,
    Common,
    DnnBuddy,
    BestBuddy,
    MostCompatible,
    Random,
}

impl Phase {
    pub const COUNT: usize = 6;

    pub fn index(self) -> usize {
        self as usize
    }
}

/// One placement made during crossover, in kernel coordinates relative to
/// the start piece.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GrowthStep {
    pub slot: (i32, i32),
    pub placement: Placement,
    pub phase: Phase,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CrossoverLog {
    pub steps: Vec<GrowthStep>,
}

impl CrossoverLog {
    pub fn phase_counts(&self) -> [usize; Phase::COUNT] {
        let mut c = [0; Phase::COUNT];
        for s in &self.steps {
            c[s.phase.index()] += 1;
        }
        c
    }
}

/// Immutable per-puzzle data shared by all crossovers.
pub struct SolverContext<'a> {
    pub matrix: &'a CompatibilityMatrix,
    pub mode: PuzzleMode,
    /// Feasible `(rows, cols)` frames.
    pub frames: Vec<(usize, usize)>,
    best_buddy: Vec<Option<EdgeRef>>,
    dnn: Option<&'a DnnBuddyMap>,
    /// Admissible candidates per edge, most compatible first.
    ranking: Vec<Vec<u32>>,
}

fn factor_frames(n: usize) -> Vec<(usize, usize)> {
    (1..=n).filter(|h| n % h == 0).map(|h| (h, n / h)).collect()
}

impl<'a> SolverContext<'a> {
    /// `dims` is required for Type1 and ignored for Type2.
    pub fn new(
        matrix: &'a CompatibilityMatrix,
        dims: Option<(usize, usize)>,
        dnn: Option<&'a DnnBuddyMap>,
    ) -> Result<Self> {
        let n = matrix.piece_count();
        let mode = matrix.mode();
        let frames = match mode {
            PuzzleMode::Type1 => {
                let (r, c) = dims.ok_or_else(|| Error::invalid("type1 solving needs dimensions"))?;
                if r * c != n {
                    return Err(Error::invalid(format!("{r}x{c} frame for {n} pieces")));
                }
                vec![(r, c)]
            }
            PuzzleMode::Type2 => factor_frames(n),
        };
        if let Some(d) = dnn {
            if d.edge_count() != matrix.edge_count() {
                return Err(Error::invalid("buddy map and matrix disagree on edge count"));
            }
        }
        let best_buddy = (0..matrix.edge_count())
            .map(EdgeRef::from_index)
            .map(|a| matrix.best(a).filter(|&b| matrix.best(b) == Some(a)))
            .collect();
        let ranking = (0..matrix.edge_count())
            .into_par_iter()
            .map(|i| {
                let a = EdgeRef::from_index(i);
                let mut c: Vec<u32> = matrix.candidates(a).map(|b| b.index() as u32).collect();
                c.sort_by(|&x, &y| {
                    let sx = matrix.score(a, EdgeRef::from_index(x as usize));
                    let sy = matrix.score(a, EdgeRef::from_index(y as usize));
                    sx.total_cmp(&sy).then(x.cmp(&y))
                });
                c
            })
            .collect();
        Ok(SolverContext {
            matrix,
            mode,
            frames,
            best_buddy,
            dnn,
            ranking,
        })
    }

    pub fn for_bundle(
        bundle: &PuzzleBundle,
        matrix: &'a CompatibilityMatrix,
        dnn: Option<&'a DnnBuddyMap>,
    ) -> Result<Self> {
        if bundle.len() != matrix.piece_count() || bundle.mode != matrix.mode() {
            return Err(Error::invalid("matrix was not built for this bundle"));
        }
        SolverContext::new(matrix, bundle.dims, dnn)
    }

    pub fn piece_count(&self) -> usize {
        self.matrix.piece_count()
    }

    pub fn random_chromosome(&self, rng: &mut SeededRng) -> Chromosome {
        let n = self.piece_count();
        let (rows, cols) = self.frames[rng.below(self.frames.len())];
        let mut order: Vec<usize> = (0..n).collect();
        rng.shuffle(&mut order);
        let cells = order
            .into_iter()
            .map(|piece| Placement {
                piece,
                turns: match self.mode {
                    PuzzleMode::Type1 => 0,
                    PuzzleMode::Type2 => rng.below(4) as u8,
                },
            })
            .collect();
        Chromosome::new(rows, cols, cells, self.matrix)
    }

    fn fits(&self, h: usize, w: usize) -> bool {
        self.frames.iter().any(|&(fr, fc)| h <= fr && w <= fc)
    }
}

#[derive(Clone, Copy)]
struct Bounds {
    min_r: i32,
    max_r: i32,
    min_c: i32,
    max_c: i32,
}

impl Bounds {
    fn with(self, (r, c): (i32, i32)) -> Bounds {
        Bounds {
            min_r: self.min_r.min(r),
            max_r: self.max_r.max(r),
            min_c: self.min_c.min(c),
            max_c: self.max_c.max(c),
        }
    }

    fn dims(self) -> (usize, usize) {
        ((self.max_r - self.min_r + 1) as usize, (self.max_c - self.min_c + 1) as usize)
    }
}

struct Kernel<'c, 'a> {
    ctx: &'c SolverContext<'a>,
    grid: HashMap<(i32, i32), Placement>,
    used: Vec<bool>,
    open: BTreeSet<(i32, i32)>,
    bounds: Bounds,
    last: (i32, i32),
    /// Per edge, position in its ranking before which every candidate's
    /// piece is already used.
    cursor: Vec<usize>,
}

/// Candidate placement at a slot.
#[derive(Clone, Copy)]
struct Proposal {
    slot: (i32, i32),
    placement: Placement,
}

impl<'c, 'a> Kernel<'c, 'a> {
    fn new(ctx: &'c SolverContext<'a>) -> Self {
        Kernel {
            ctx,
            grid: HashMap::new(),
            used: vec![false; ctx.piece_count()],
            open: BTreeSet::new(),
            bounds: Bounds {
                min_r: 0,
                max_r: 0,
                min_c: 0,
                max_c: 0,
            },
            last: (0, 0),
            cursor: vec![0; ctx.matrix.edge_count()],
        }
    }

    fn place(&mut self, slot: (i32, i32), p: Placement) {
        debug_assert!(!self.used[p.piece]);
        self.used[p.piece] = true;
        self.grid.insert(slot, p);
        self.open.remove(&slot);
        self.bounds = if self.grid.len() == 1 {
            Bounds {
                min_r: slot.0,
                max_r: slot.0,
                min_c: slot.1,
                max_c: slot.1,
            }
        } else {
            self.bounds.with(slot)
        };
        self.last = slot;
        for s in Side::ALL {
            let (dr, dc) = s.offset();
            let n = (slot.0 + dr, slot.1 + dc);
            if !self.grid.contains_key(&n) {
                self.open.insert(n);
            }
        }
    }

    /// Open slots that keep the kernel inside a feasible frame, in
    /// preference order.
    fn slots(&self) -> Vec<(i32, i32)> {
        let near: Vec<(i32, i32)> = Side::ALL
            .iter()
            .map(|s| {
                let (dr, dc) = s.offset();
                (self.last.0 + dr, self.last.1 + dc)
            })
            .collect();
        let mut out: Vec<(i32, i32)> = self
            .open
            .iter()
            .copied()
            .filter(|&s| {
                let (h, w) = self.bounds.with(s).dims();
                self.ctx.fits(h, w)
            })
            .collect();
        // Stable: adjacent-to-last first, each group in (row, col) order.
        out.sort_by_key(|s| !near.contains(s));
        out
    }

    /// Placed neighbors of a slot: the neighbor's edge facing the slot and
    /// the direction from the slot to that neighbor.
    fn neighbor_edges(&self, slot: (i32, i32)) -> impl Iterator<Item = (EdgeRef, Side)> + '_ {
        Side::ALL.into_iter().filter_map(move |d| {
            let (dr, dc) = d.offset();
            let p = self.grid.get(&(slot.0 + dr, slot.1 + dc))?;
            Some((p.edge(d.opposite()), d))
        })
    }

    /// Placement that puts stored edge `e` facing direction `d` at `slot`.
    fn orient(&self, slot: (i32, i32), e: EdgeRef, d: Side) -> Option<Proposal> {
        if self.used[e.piece] {
            return None;
        }
        let turns = e.side.turns_to(d);
        if self.ctx.mode == PuzzleMode::Type1 && turns != 0 {
            return None;
        }
        Some(Proposal {
            slot,
            placement: Placement { piece: e.piece, turns },
        })
    }

    fn first_unused_candidate(&mut self, edge: EdgeRef) -> Option<EdgeRef> {
        let ranked = &self.ctx.ranking[edge.index()];
        let cur = &mut self.cursor[edge.index()];
        while *cur < ranked.len() && self.used[ranked[*cur] as usize / 4] {
            *cur += 1;
        }
        ranked.get(*cur).map(|&i| EdgeRef::from_index(i as usize))
    }
}

/// Crossover of two parents; see the module docs for the phase order.
pub fn crossover(
    parent1: &Chromosome,
    parent2: &Chromosome,
    ctx: &SolverContext<'_>,
    cfg: &GaConfig,
    rng: &mut SeededRng,
) -> (Chromosome, CrossoverLog) {
    let start = rng.below(ctx.piece_count());
    crossover_from(parent1, parent2, ctx, cfg, start, rng)
}

/// Crossover growing from a given start piece, placed with its orientation
/// in `parent1`.
pub fn crossover_from(
    parent1: &Chromosome,
    parent2: &Chromosome,
    ctx: &SolverContext<'_>,
    cfg: &GaConfig,
    start: usize,
    rng: &mut SeededRng,
) -> (Chromosome, CrossoverLog) {
    let n = ctx.piece_count();
    let edges = ctx.matrix.edge_count();
    let partners1 = parent1.partners(edges);
    let partners2 = parent2.partners(edges);
    let start_turns = parent1
        .cells
        .iter()
        .find(|p| p.piece == start)
        .map(|p| p.turns)
        .unwrap_or(0);

    let mut kernel = Kernel::new(ctx);
    let mut log = CrossoverLog::default();
    let first = Placement {
        piece: start,
        turns: start_turns,
    };
    kernel.place((0, 0), first);
    log.steps.push(GrowthStep {
        slot: (0, 0),
        placement: first,
        phase: Phase::Start,
    });

    while kernel.grid.len() < n {
        let slots = kernel.slots();
        debug_assert!(!slots.is_empty(), "growth stalled");
        let (proposal, phase) = next_placement(&mut kernel, &slots, &partners1, &partners2, cfg, rng);
        kernel.place(proposal.slot, proposal.placement);
        log.steps.push(GrowthStep {
            slot: proposal.slot,
            placement: proposal.placement,
            phase,
        });
    }

    let (rows, cols) = kernel.bounds.dims();
    let mut cells = vec![first; n];
    for (&(r, c), &p) in &kernel.grid {
        let rr = (r - kernel.bounds.min_r) as usize;
        let cc = (c - kernel.bounds.min_c) as usize;
        cells[rr * cols + cc] = p;
    }
    (Chromosome::new(rows, cols, cells, ctx.matrix), log)
}

fn next_placement(
    kernel: &mut Kernel<'_, '_>,
    slots: &[(i32, i32)],
    partners1: &[Option<EdgeRef>],
    partners2: &[Option<EdgeRef>],
    cfg: &GaConfig,
    rng: &mut SeededRng,
) -> (Proposal, Phase) {
    // Phase 1: both parents agree.
    for &slot in slots {
        for (e, d) in kernel.neighbor_edges(slot) {
            if let (Some(a), Some(b)) = (partners1[e.index()], partners2[e.index()]) {
                if a == b {
                    if let Some(p) = kernel.orient(slot, a, d) {
                        return (p, Phase::Common);
                    }
                }
            }
        }
    }
    // Phase 2: DNN-buddy relation in either parent.
    if let (true, Some(dnn)) = (cfg.use_dnn, kernel.ctx.dnn) {
        for &slot in slots {
            for (e, d) in kernel.neighbor_edges(slot) {
                for cand in [partners1[e.index()], partners2[e.index()]].into_iter().flatten() {
                    if dnn.links(e, cand) {
                        if let Some(p) = kernel.orient(slot, cand, d) {
                            return (p, Phase::DnnBuddy);
                        }
                    }
                }
            }
        }
    }
    // Phase 3: best-buddy relation in either parent.
    if cfg.use_best_buddies {
        for &slot in slots {
            for (e, d) in kernel.neighbor_edges(slot) {
                for cand in [partners1[e.index()], partners2[e.index()]].into_iter().flatten() {
                    if kernel.ctx.best_buddy[e.index()] == Some(cand) {
                        if let Some(p) = kernel.orient(slot, cand, d) {
                            return (p, Phase::BestBuddy);
                        }
                    }
                }
            }
        }
    }
    // Phase 4: globally lowest-scoring unused candidate on the boundary.
    let mut best: Option<(f64, Proposal)> = None;
    for &slot in slots {
        let neighbors: Vec<(EdgeRef, Side)> = kernel.neighbor_edges(slot).collect();
        for (e, d) in neighbors {
            if let Some(cand) = kernel.first_unused_candidate(e) {
                if let Some(p) = kernel.orient(slot, cand, d) {
                    let s = kernel.ctx.matrix.score(e, cand);
                    if best.as_ref().is_none_or(|(bs, _)| s < *bs) {
                        best = Some((s, p));
                    }
                }
            }
        }
    }
    if let Some((_, p)) = best {
        return (p, Phase::MostCompatible);
    }
    // Phase 5: random unused piece at the preferred slot.
    let free: Vec<usize> = (0..kernel.used.len()).filter(|&i| !kernel.used[i]).collect();
    let piece = free[rng.below(free.len())];
    let turns = match kernel.ctx.mode {
        PuzzleMode::Type1 => 0,
        PuzzleMode::Type2 => rng.below(4) as u8,
    };
    (
        Proposal {
            slot: slots[0],
            placement: Placement { piece, turns },
        },
        Phase::Random,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GenerationStats {
    pub generation: usize,
    pub best_fitness: f64,
    pub mean_fitness: f64,
    /// Neighbor accuracy of the generation's best, when ground truth is known.
    pub best_accuracy: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub best: Chromosome,
    pub stats: Vec<GenerationStats>,
    /// Crossover placements per [`Phase`], summed over the run.
    pub phase_counts: [usize; Phase::COUNT],
}

pub fn write_stats_csv(stats: &[GenerationStats], mut w: impl Write) -> Result<()> {
    writeln!(w, "generation,best_fitness,mean_fitness,neighbor_accuracy")?;
    for s in stats {
        let acc = s.best_accuracy.map(|a| a.to_string()).unwrap_or_default();
        writeln!(w, "{},{},{},{}", s.generation, s.best_fitness, s.mean_fitness, acc)?;
    }
    Ok(())
}

/// Selection weights by inverted rank: the best of `n` gets weight `n`, the
/// worst weight 1.
fn rank_order(pop: &[Chromosome]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..pop.len()).collect();
    idx.sort_by(|&a, &b| pop[a].fitness.total_cmp(&pop[b].fitness).then(a.cmp(&b)));
    idx
}

fn roulette(order: &[usize], rng: &mut SeededRng) -> usize {
    let n = order.len();
    let total = n * (n + 1) / 2;
    let mut ticket = rng.below(total);
    for (rank, &i) in order.iter().enumerate() {
        let w = n - rank;
        if ticket < w {
            return i;
        }
        ticket -= w;
    }
    unreachable!("ticket below total weight")
}

/// Generational GA. Returns the best chromosome seen in any generation.
pub fn solve(
    ctx: &SolverContext<'_>,
    cfg: &GaConfig,
    truth: Option<&GroundTruth>,
) -> Result<SolveResult> {
    cfg.validate()?;
    let n = ctx.piece_count();
    let mut rng = SeededRng::new(cfg.seed);
    let mut pop: Vec<Chromosome> = (0..cfg.population).map(|_| ctx.random_chromosome(&mut rng)).collect();
    let mut stats = Vec::with_capacity(cfg.generations + 1);
    let mut phase_counts = [0; Phase::COUNT];
    let mut best = pop[rank_order(&pop)[0]].clone();

    let record = |gen: usize, pop: &[Chromosome], order: &[usize]| -> GenerationStats {
        let top = &pop[order[0]];
        GenerationStats {
            generation: gen,
            best_fitness: top.fitness,
            mean_fitness: pop.iter().map(|c| c.fitness).sum::<f64>() / pop.len() as f64,
            best_accuracy: truth.map(|t| crate::eval::neighbor_accuracy_unchecked(top, t)),
        }
    };

    let mut order = rank_order(&pop);
    stats.push(record(0, &pop, &order));
    for generation in 1..=cfg.generations {
        let mut next: Vec<Chromosome> = order[..cfg.elites].iter().map(|&i| pop[i].clone()).collect();
        let pairs: Vec<(usize, usize, u64)> = (cfg.elites..cfg.population)
            .map(|slot| {
                let a = roulette(&order, &mut rng);
                let mut b = roulette(&order, &mut rng);
                for _ in 0..8 {
                    if b != a {
                        break;
                    }
                    b = roulette(&order, &mut rng);
                }
                (a, b, (generation as u64) << 32 | slot as u64)
            })
            .collect();
        let children: Vec<(Chromosome, CrossoverLog)> = pairs
            .par_iter()
            .map(|&(a, b, stream)| {
                let mut child_rng = SeededRng::with_stream(cfg.seed, stream);
                crossover(&pop[a], &pop[b], ctx, cfg, &mut child_rng)
            })
            .collect();
        for (child, log) in children {
            for (acc, c) in phase_counts.iter_mut().zip(log.phase_counts()) {
                *acc += c;
            }
            next.push(child);
        }
        assert!(
            next.iter().all(|c| c.is_valid(n, ctx.mode)),
            "generation {generation} produced an invalid chromosome"
        );
        pop = next;
        order = rank_order(&pop);
        if pop[order[0]].fitness < best.fitness {
            best = pop[order[0]].clone();
        }
        stats.push(record(generation, &pop, &order));
    }
    Ok(SolveResult {
        best,
        stats,
        phase_counts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compat::build_matrix;
    use crate::synth;

    fn bundle(w: usize, h: usize, mode: PuzzleMode, seed: u64) -> PuzzleBundle {
        PuzzleBundle::from_image(&synth::ramps(w, h, seed), 28, mode, seed).unwrap()
    }

    /// Rotates every placed piece and sums raw pixel seam distances.
    fn brute_force_fitness(ch: &Chromosome, pieces: &[crate::piece::Piece]) -> f64 {
        let k = pieces[0].size();
        let shown: Vec<_> = ch.cells.iter().map(|p| pieces[p.piece].rotated(p.turns)).collect();
        let at = |r: usize, c: usize| &shown[r * ch.cols + c];
        let mut total = 0.0;
        for r in 0..ch.rows {
            for c in 0..ch.cols {
                if c + 1 < ch.cols {
                    let (p, q) = (at(r, c), at(r, c + 1));
                    let mut s = 0.0;
                    for row in 0..k {
                        for chn in 0..3 {
                            s += (p.at(row, k - 1, chn) - q.at(row, 0, chn)).powi(2);
                        }
                    }
                    total += s.sqrt();
                }
                if r + 1 < ch.rows {
                    let (p, q) = (at(r, c), at(r + 1, c));
                    let mut s = 0.0;
                    for col in 0..k {
                        for chn in 0..3 {
                            s += (p.at(k - 1, col, chn) - q.at(0, col, chn)).powi(2);
                        }
                    }
                    total += s.sqrt();
                }
            }
        }
        total
    }

    #[test]
    fn frames_are_factor_pairs() {
        assert_eq!(factor_frames(6), vec![(1, 6), (2, 3), (3, 2), (6, 1)]);
        assert_eq!(factor_frames(1), vec![(1, 1)]);
    }

    #[test]
    fn placement_edge_mapping() {
        let p = Placement { piece: 3, turns: 1 };
        // After one CCW turn the stored right side shows on top.
        assert_eq!(p.stored_side(Side::Top), Side::Right);
        assert_eq!(p.edge(Side::Left), EdgeRef::new(3, Side::Top));
    }

    #[test]
    fn ground_truth_relations_are_true_adjacencies() {
        for mode in [PuzzleMode::Type1, PuzzleMode::Type2] {
            let b = bundle(112, 84, mode, 4);
            let m = build_matrix(&b.pieces, mode).unwrap();
            let gt = b.ground_truth.as_ref().unwrap();
            let truth = Chromosome::from_truth(gt, &m);
            assert!(truth.is_valid(b.len(), mode));
            assert_eq!(truth.relations().len(), 3 * 3 + 2 * 4);
            assert_eq!(truth.relation_set(), gt.adjacent_pairs());
        }
    }

    #[test]
    fn constant_image_truth_has_zero_fitness() {
        let img = crate::raster::RawImage::from_fn(84, 56, |_, _| [50, 60, 70]).unwrap();
        let b = PuzzleBundle::from_image(&img, 28, PuzzleMode::Type1, 0).unwrap();
        let m = build_matrix(&b.pieces, b.mode).unwrap();
        assert_eq!(Chromosome::from_truth(b.ground_truth.as_ref().unwrap(), &m).fitness, 0.0);
    }

    #[test]
    fn one_by_two_fitness_is_the_single_pair() {
        let b = bundle(56, 28, PuzzleMode::Type1, 1);
        let m = build_matrix(&b.pieces, b.mode).unwrap();
        let cells = vec![Placement { piece: 1, turns: 0 }, Placement { piece: 0, turns: 0 }];
        let ch = Chromosome::new(1, 2, cells, &m);
        let d = crate::compat::dissimilarity(
            EdgeRef::new(1, Side::Right),
            EdgeRef::new(0, Side::Left),
            &b.pieces,
        )
        .unwrap();
        assert!((ch.fitness - d).abs() < 1e-12);
    }

    #[test]
    fn fitness_matches_resummation() {
        for mode in [PuzzleMode::Type1, PuzzleMode::Type2] {
            let b = bundle(140, 84, mode, 2);
            let m = build_matrix(&b.pieces, mode).unwrap();
            let ctx = SolverContext::for_bundle(&b, &m, None).unwrap();
            let mut rng = SeededRng::new(3);
            for _ in 0..20 {
                let ch = ctx.random_chromosome(&mut rng);
                assert!((ch.fitness - brute_force_fitness(&ch, &b.pieces)).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn identical_parents_reproduce() {
        for mode in [PuzzleMode::Type1, PuzzleMode::Type2] {
            let b = bundle(140, 112, mode, 5);
            let m = build_matrix(&b.pieces, mode).unwrap();
            let ctx = SolverContext::for_bundle(&b, &m, None).unwrap();
            let mut rng = SeededRng::new(1);
            let cfg = GaConfig::default();
            for _ in 0..5 {
                let parent = ctx.random_chromosome(&mut rng);
                let (child, log) = crossover(&parent, &parent, &ctx, &cfg, &mut rng);
                assert_eq!(child.cells, parent.cells);
                assert_eq!((child.rows, child.cols), (parent.rows, parent.cols));
                let counts = log.phase_counts();
                assert_eq!(counts[Phase::Common.index()], b.len() - 1);
            }
        }
    }

    #[test]
    fn shared_relation_survives_crossover() {
        // 2x2: parents agree only on "piece A left of piece B".
        let b = bundle(56, 56, PuzzleMode::Type1, 7);
        let m = build_matrix(&b.pieces, b.mode).unwrap();
        let ctx = SolverContext::for_bundle(&b, &m, None).unwrap();
        let pl = |piece| Placement { piece, turns: 0 };
        let p1 = Chromosome::new(2, 2, vec![pl(0), pl(1), pl(2), pl(3)], &m);
        let p2 = Chromosome::new(2, 2, vec![pl(3), pl(2), pl(0), pl(1)], &m);
        let shared: BTreeSet<_> = p1.relation_set().intersection(&p2.relation_set()).copied().collect();
        assert_eq!(shared.len(), 1);
        let cfg = GaConfig { use_best_buddies: false, ..GaConfig::default() };
        for start in [0, 1] {
            let (child, log) = crossover_from(&p1, &p2, &ctx, &cfg, start, &mut SeededRng::new(start as u64));
            assert!(child.relation_set().is_superset(&shared));
            assert_eq!(log.steps[1].phase, Phase::Common);
        }
    }

    #[test]
    fn vacuous_buddy_phases_change_nothing() {
        let b = bundle(140, 112, PuzzleMode::Type1, 6);
        let m = build_matrix(&b.pieces, b.mode).unwrap();
        let empty = DnnBuddyMap::empty(m.edge_count());
        let with = SolverContext::for_bundle(&b, &m, Some(&empty)).unwrap();
        let without = SolverContext::for_bundle(&b, &m, None).unwrap();
        let cfg = GaConfig { use_best_buddies: false, ..GaConfig::default() };
        let mut rng = SeededRng::new(2);
        let p1 = with.random_chromosome(&mut rng);
        let p2 = with.random_chromosome(&mut rng);
        let a = crossover(&p1, &p2, &with, &cfg, &mut SeededRng::new(9));
        let b2 = crossover(&p1, &p2, &without, &GaConfig { use_dnn: false, ..cfg.clone() }, &mut SeededRng::new(9));
        assert_eq!(a.0, b2.0);
        assert_eq!(a.1, b2.1);
    }

    /// Independent replay of a crossover log: at every step, recompute
    /// whether a common relation was available on any valid slot.
    fn common_available(
        placed: &HashMap<(i32, i32), Placement>,
        ctx: &SolverContext<'_>,
        p1: &[Option<EdgeRef>],
        p2: &[Option<EdgeRef>],
    ) -> bool {
        let used: BTreeSet<usize> = placed.values().map(|p| p.piece).collect();
        let rs: Vec<i32> = placed.keys().map(|k| k.0).collect();
        let cs: Vec<i32> = placed.keys().map(|k| k.1).collect();
        for (&(r, c), _) in placed {
            for s in Side::ALL {
                let (dr, dc) = s.offset();
                let slot = (r + dr, c + dc);
                if placed.contains_key(&slot) {
                    continue;
                }
                let h = (rs.iter().copied().chain([slot.0]).max().unwrap()
                    - rs.iter().copied().chain([slot.0]).min().unwrap()
                    + 1) as usize;
                let w = (cs.iter().copied().chain([slot.1]).max().unwrap()
                    - cs.iter().copied().chain([slot.1]).min().unwrap()
                    + 1) as usize;
                if !ctx.frames.iter().any(|&(fr, fc)| h <= fr && w <= fc) {
                    continue;
                }
                for d in Side::ALL {
                    let (dr, dc) = d.offset();
                    let Some(nb) = placed.get(&(slot.0 + dr, slot.1 + dc)) else { continue };
                    let e = nb.edge(d.opposite());
                    if let (Some(a), Some(b)) = (p1[e.index()], p2[e.index()]) {
                        let legal = ctx.mode == PuzzleMode::Type2 || a.side == d;
                        if a == b && !used.contains(&a.piece) && legal {
                            return true;
                        }
                    }
                }
            }
        }
        false
    }

    #[test]
    fn phase_precedence_holds_in_replay() {
        for mode in [PuzzleMode::Type1, PuzzleMode::Type2] {
            let b = bundle(168, 112, mode, 8);
            let m = build_matrix(&b.pieces, mode).unwrap();
            let ctx = SolverContext::for_bundle(&b, &m, None).unwrap();
            let mut rng = SeededRng::new(4);
            let cfg = GaConfig::default();
            // Parents that share some structure: one random, one a child.
            let a = ctx.random_chromosome(&mut rng);
            let c = ctx.random_chromosome(&mut rng);
            let (bb, _) = crossover(&a, &c, &ctx, &cfg, &mut rng);
            let pa = a.partners(m.edge_count());
            let pb = bb.partners(m.edge_count());
            let (child, log) = crossover(&a, &bb, &ctx, &cfg, &mut rng);
            assert!(child.is_valid(b.len(), mode));
            let mut placed = HashMap::new();
            for step in &log.steps {
                if step.phase > Phase::Common {
                    assert!(!common_available(&placed, &ctx, &pa, &pb), "{step:?}");
                }
                placed.insert(step.slot, step.placement);
            }
        }
    }

    #[test]
    fn solves_tiny_puzzles_and_keeps_invariants() {
        for mode in [PuzzleMode::Type1, PuzzleMode::Type2] {
            let b = bundle(56, 56, mode, 3);
            let m = build_matrix(&b.pieces, mode).unwrap();
            let ctx = SolverContext::for_bundle(&b, &m, None).unwrap();
            let cfg = GaConfig { population: 30, generations: 20, ..GaConfig::default() };
            let gt = b.ground_truth.as_ref().unwrap();
            let r = solve(&ctx, &cfg, Some(gt)).unwrap();
            assert_eq!(crate::eval::neighbor_accuracy(&r.best, gt).unwrap(), 1.0);
            for w in r.stats.windows(2) {
                assert!(w[1].best_fitness <= w[0].best_fitness);
            }
            let again = solve(&ctx, &cfg, Some(gt)).unwrap();
            assert_eq!(again.best, r.best);
        }
    }

    #[test]
    fn population_of_two_stays_valid() {
        let b = bundle(84, 84, PuzzleMode::Type2, 1);
        let m = build_matrix(&b.pieces, b.mode).unwrap();
        let ctx = SolverContext::for_bundle(&b, &m, None).unwrap();
        let cfg = GaConfig { population: 2, elites: 1, generations: 10, ..GaConfig::default() };
        let r = solve(&ctx, &cfg, None).unwrap();
        assert!(r.best.is_valid(9, PuzzleMode::Type2));
        assert!(GaConfig { population: 2, elites: 2, ..GaConfig::default() }.validate().is_err());
        assert!(GaConfig { population: 1, elites: 0, ..GaConfig::default() }.validate().is_err());
    }

    #[test]
    fn roulette_prefers_better_ranks() {
        let mut rng = SeededRng::new(0);
        let order = vec![2, 0, 1];
        let mut counts = [0usize; 3];
        for _ in 0..6000 {
            counts[roulette(&order, &mut rng)] += 1;
        }
        // Weights 3:2:1 for pieces 2, 0, 1.
        assert!(counts[2] > counts[0] && counts[0] > counts[1]);
        assert!((counts[2] as f64 / 6000.0 - 0.5).abs() < 0.03);
    }
}
