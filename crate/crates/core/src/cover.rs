//! Packing as exact cover, solved with Algorithm X over dancing links.
//!
//! Columns are the box voxels (row-major, x fastest) followed by one
//! "use piece i" column per piece. Each row is one in-bounds placement of
//! one piece.

use std::collections::{HashMap, HashSet};
use std::sync::{Arc, Mutex, OnceLock};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::voxel::{canonical_with_rotation, normalize, rotate, BoxDims, Coord, Rotation, Shape};

/// Default per-candidate search budget, in visited nodes.
pub const DEFAULT_NODE_BUDGET: u64 = 5_000_000;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CoverError {
    #[error("piece volumes sum to {pieces} but the box holds {box_volume} voxels")]
    VolumeMismatch { pieces: usize, box_volume: usize },
    #[error("no pieces given")]
    NoPieces,
    #[error("node budget must be positive")]
    ZeroBudget,
}

/// One way of putting a piece in the box: the piece is rotated, normalized,
/// then translated by `offset`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Placement {
    pub piece_index: usize,
    pub rotation: usize,
    pub offset: Coord,
    pub cells: Vec<Coord>,
}

impl Placement {
    /// Recompute the cells of `piece` under `rotation` and `offset`.
    pub fn realize(piece: &Shape, rotation: usize, offset: Coord) -> Option<Vec<Coord>> {
        let r = Rotation::from_index(rotation).ok()?;
        Some(normalize(&rotate(piece, &r)).translate(offset).into_cells())
    }
}

/// Orientation-and-offset template shared by every piece with the same
/// canonical shape.
#[derive(Clone, Debug, PartialEq, Eq)]
struct RawPlacement {
    rotation: usize,
    offset: Coord,
    cells: Vec<Coord>,
}

type CacheKey = (Shape, BoxDims);

/// Placements per (canonical shape, box). Shared across threads.
#[derive(Default)]
pub struct PlacementCache {
    map: Mutex<HashMap<CacheKey, Arc<Vec<RawPlacement>>>>,
}

impl PlacementCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn global() -> &'static PlacementCache {
        static CACHE: OnceLock<PlacementCache> = OnceLock::new();
        CACHE.get_or_init(PlacementCache::new)
    }

    pub fn len(&self) -> usize {
        self.map.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn get_or_compute(&self, canon: &Shape, dims: BoxDims) -> Arc<Vec<RawPlacement>> {
        let key = (canon.clone(), dims);
        if let Some(hit) = self.map.lock().unwrap().get(&key) {
            return Arc::clone(hit);
        }
        let computed = Arc::new(raw_placements(canon, dims));
        let mut map = self.map.lock().unwrap();
        Arc::clone(map.entry(key).or_insert(computed))
    }

    /// All distinct in-bounds placements of `s`, with rotation indices
    /// expressed relative to `s` itself (not its canonical form).
    pub fn placements(&self, s: &Shape, dims: BoxDims) -> Vec<Placement> {
        let (canon, to_canon) = canonical_with_rotation(s);
        let raw = self.get_or_compute(&canon, dims);
        raw.iter()
            .map(|p| {
                let r = Rotation::from_index(p.rotation).expect("cached rotation");
                Placement {
                    piece_index: 0,
                    rotation: r.after(&to_canon).index(),
                    offset: p.offset,
                    cells: p.cells.clone(),
                }
            })
            .collect()
    }
}

fn raw_placements(s: &Shape, dims: BoxDims) -> Vec<RawPlacement> {
    let mut seen: HashSet<Vec<Coord>> = HashSet::new();
    let mut out = Vec::new();
    for r in Rotation::all() {
        let img = normalize(&rotate(s, r));
        let [ex, ey, ez] = img.extents();
        if ex > dims.a || ey > dims.b || ez > dims.c {
            continue;
        }
        for oz in 0..=(dims.c - ez) {
            for oy in 0..=(dims.b - ey) {
                for ox in 0..=(dims.a - ex) {
                    let offset = Coord::new(ox, oy, oz);
                    let cells = img.translate(offset).into_cells();
                    if seen.insert(cells.clone()) {
                        out.push(RawPlacement {
                            rotation: r.index(),
                            offset,
                            cells,
                        });
                    }
                }
            }
        }
    }
    out
}

/// Exhaustive, duplicate-free (by cell set) placements, memoized by
/// canonical shape and box. `piece_index` is left at 0.
pub fn enumerate_placements(s: &Shape, dims: BoxDims) -> Vec<Placement> {
    PlacementCache::global().placements(s, dims)
}

/// Same as [`enumerate_placements`] without touching any cache.
pub fn enumerate_placements_uncached(s: &Shape, dims: BoxDims) -> Vec<Placement> {
    PlacementCache::new().placements(s, dims)
}

#[derive(Clone, Debug)]
pub struct CoverInstance {
    pub dims: BoxDims,
    pub pieces: Vec<Shape>,
    pub rows: Vec<Placement>,
    /// Number of rows per piece, indexed by piece.
    pub placement_counts: Vec<usize>,
}

impl CoverInstance {
    pub fn voxel_columns(&self) -> usize {
        self.dims.volume()
    }

    pub fn column_count(&self) -> usize {
        self.dims.volume() + self.pieces.len()
    }

    /// Column indices covered by a row: its voxels, then its piece column.
    pub fn row_columns(&self, row: &Placement) -> Vec<usize> {
        let mut cols: Vec<usize> = row.cells.iter().map(|&c| self.dims.index(c)).collect();
        cols.push(self.dims.volume() + row.piece_index);
        cols
    }
}

pub fn build_cover_instance(pieces: &[Shape], dims: BoxDims) -> Result<CoverInstance, CoverError> {
    build_cover_instance_with(pieces, dims, PlacementCache::global())
}

pub fn build_cover_instance_with(
    pieces: &[Shape],
    dims: BoxDims,
    cache: &PlacementCache,
) -> Result<CoverInstance, CoverError> {
    if pieces.is_empty() {
        return Err(CoverError::NoPieces);
    }
    let total: usize = pieces.iter().map(Shape::len).sum();
    if total != dims.volume() {
        return Err(CoverError::VolumeMismatch {
            pieces: total,
            box_volume: dims.volume(),
        });
    }
    let mut rows = Vec::new();
    let mut placement_counts = Vec::with_capacity(pieces.len());
    for (i, p) in pieces.iter().enumerate() {
        let ps = cache.placements(p, dims);
        placement_counts.push(ps.len());
        rows.extend(ps.into_iter().map(|mut pl| {
            pl.piece_index = i;
            pl
        }));
    }
    Ok(CoverInstance {
        dims,
        pieces: pieces.to_vec(),
        rows,
        placement_counts,
    })
}

/// Index of the smallest count, lowest index on ties.
pub fn argmin_anchor(counts: &[usize]) -> Option<usize> {
    counts
        .iter()
        .enumerate()
        .min_by_key(|&(i, &c)| (c, i))
        .map(|(i, _)| i)
}

/// The piece with the fewest placements.
pub fn select_anchor(ci: &CoverInstance) -> Option<usize> {
    argmin_anchor(&ci.placement_counts)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveStatus {
    Solved,
    Unsat,
    BudgetExhausted,
}

#[derive(Clone, Debug)]
pub struct SolveResult {
    pub status: SolveStatus,
    pub solution: Vec<Placement>,
    /// Row selections made during search (summed over the anchored attempt
    /// and the unanchored retry, if one happened).
    pub visited_nodes: u64,
    pub anchored: bool,
}

/// Solve with anchoring; on an anchored unsat verdict retry once without it.
pub fn solve(ci: &CoverInstance, node_budget: u64) -> Result<SolveResult, CoverError> {
    if node_budget == 0 {
        return Err(CoverError::ZeroBudget);
    }
    let anchored = solve_with(ci, node_budget, select_anchor(ci));
    if anchored.status != SolveStatus::Unsat {
        return Ok(anchored);
    }
    let remaining = node_budget.saturating_sub(anchored.visited_nodes).max(1);
    let mut plain = solve_with(ci, remaining, None);
    plain.visited_nodes += anchored.visited_nodes;
    Ok(plain)
}

/// One search pass. With `anchor = Some(p)`, rows of piece `p` that do not
/// cover the origin voxel are dropped.
pub fn solve_with(ci: &CoverInstance, node_budget: u64, anchor: Option<usize>) -> SolveResult {
    let origin = Coord::ORIGIN;
    let kept: Vec<usize> = (0..ci.rows.len())
        .filter(|&r| {
            let row = &ci.rows[r];
            match anchor {
                Some(p) if row.piece_index == p => row.cells.contains(&origin),
                _ => true,
            }
        })
        .collect();
    let matrix: Vec<Vec<usize>> = kept.iter().map(|&r| ci.row_columns(&ci.rows[r])).collect();
    let mut dlx = Dlx::new(ci.column_count(), &matrix);
    let outcome = dlx.search(node_budget);
    let visited_nodes = dlx.visited_nodes();
    match outcome {
        SearchOutcome::Solved(rows) => {
            let mut solution: Vec<Placement> = rows.iter().map(|&r| ci.rows[kept[r]].clone()).collect();
            solution.sort_by_key(|p| p.piece_index);
            assert!(
                verify_cover(ci.dims, ci.pieces.len(), &solution),
                "search produced an invalid cover"
            );
            SolveResult {
                status: SolveStatus::Solved,
                solution,
                visited_nodes,
                anchored: anchor.is_some(),
            }
        }
        SearchOutcome::Unsat => SolveResult {
            status: SolveStatus::Unsat,
            solution: Vec::new(),
            visited_nodes,
            anchored: anchor.is_some(),
        },
        SearchOutcome::BudgetExhausted => SolveResult {
            status: SolveStatus::BudgetExhausted,
            solution: Vec::new(),
            visited_nodes,
            anchored: anchor.is_some(),
        },
    }
}

/// Independent check that placements tile the box exactly, each piece once.
pub fn verify_cover(dims: BoxDims, piece_count: usize, solution: &[Placement]) -> bool {
    let mut used = vec![false; piece_count];
    let mut filled = vec![false; dims.volume()];
    for p in solution {
        if p.piece_index >= piece_count || used[p.piece_index] {
            return false;
        }
        used[p.piece_index] = true;
        for &c in &p.cells {
            if !dims.contains(c) {
                return false;
            }
            let i = dims.index(c);
            if filled[i] {
                return false;
            }
            filled[i] = true;
        }
    }
    used.iter().all(|&u| u) && filled.iter().all(|&f| f)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SearchOutcome {
    /// Indices into the row list the matrix was built from.
    Solved(Vec<usize>),
    Unsat,
    BudgetExhausted,
}

/// Sparse 0/1 matrix in the dancing-links layout.
///
/// Node 0 is the root, nodes `1..=n` are column headers, the rest are
/// entries. Column header order is column index order and cover/uncover
/// restore links in place, so header traversal always runs in ascending
/// column index.
pub struct Dlx {
    left: Vec<usize>,
    right: Vec<usize>,
    up: Vec<usize>,
    down: Vec<usize>,
    column: Vec<usize>,
    row: Vec<usize>,
    size: Vec<usize>,
    visited: u64,
}

impl Dlx {
    pub fn new(columns: usize, rows: &[Vec<usize>]) -> Self {
        let headers = columns + 1;
        let entries: usize = rows.iter().map(Vec::len).sum();
        let total = headers + entries;
        let mut d = Dlx {
            left: Vec::with_capacity(total),
            right: Vec::with_capacity(total),
            up: Vec::with_capacity(total),
            down: Vec::with_capacity(total),
            column: Vec::with_capacity(total),
            row: Vec::with_capacity(total),
            size: vec![0; headers],
            visited: 0,
        };
        for h in 0..headers {
            d.left.push(if h == 0 { columns } else { h - 1 });
            d.right.push(if h == columns { 0 } else { h + 1 });
            d.up.push(h);
            d.down.push(h);
            d.column.push(h);
            d.row.push(usize::MAX);
        }
        for (r, cols) in rows.iter().enumerate() {
            let first = d.left.len();
            for (k, &c) in cols.iter().enumerate() {
                assert!(c < columns, "column {c} out of range");
                let node = d.left.len();
                let head = c + 1;
                let last = d.up[head];
                d.up.push(last);
                d.down.push(head);
                d.down[last] = node;
                d.up[head] = node;
                d.column.push(head);
                d.row.push(r);
                d.size[head] += 1;
                d.left.push(if k == 0 { node } else { node - 1 });
                d.right.push(first);
                if k > 0 {
                    d.right[node - 1] = node;
                    d.left[first] = node;
                }
            }
        }
        d
    }

    pub fn visited_nodes(&self) -> u64 {
        self.visited
    }

    /// Remaining row count of an active column.
    pub fn column_size(&self, column: usize) -> usize {
        self.size[column + 1]
    }

    /// Active column with the fewest remaining rows; lowest index on ties.
    pub fn choose_column(&self) -> Option<usize> {
        let mut best: Option<usize> = None;
        let mut c = self.right[0];
        while c != 0 {
            if best.is_none_or(|b| self.size[c] < self.size[b]) {
                best = Some(c);
                if self.size[c] == 0 {
                    break;
                }
            }
            c = self.right[c];
        }
        best.map(|h| h - 1)
    }

    fn cover(&mut self, c: usize) {
        let (l, r) = (self.left[c], self.right[c]);
        self.right[l] = r;
        self.left[r] = l;
        let mut i = self.down[c];
        while i != c {
            let mut j = self.right[i];
            while j != i {
                let (u, d) = (self.up[j], self.down[j]);
                self.down[u] = d;
                self.up[d] = u;
                self.size[self.column[j]] -= 1;
                j = self.right[j];
            }
            i = self.down[i];
        }
    }

    fn uncover(&mut self, c: usize) {
        let mut i = self.up[c];
        while i != c {
            let mut j = self.left[i];
            while j != i {
                let (u, d) = (self.up[j], self.down[j]);
                self.size[self.column[j]] += 1;
                self.down[u] = j;
                self.up[d] = j;
                j = self.left[j];
            }
            i = self.up[i];
        }
        let (l, r) = (self.left[c], self.right[c]);
        self.right[l] = c;
        self.left[r] = c;
    }

    /// First solution in search order. `visited_nodes` counts row selections.
    pub fn search(&mut self, budget: u64) -> SearchOutcome {
        let mut partial = Vec::new();
        match self.recurse(&mut partial, budget) {
            Some(true) => SearchOutcome::Solved(partial),
            Some(false) => SearchOutcome::Unsat,
            None => SearchOutcome::BudgetExhausted,
        }
    }

    // Some(found) on completion, None when the budget ran out. The matrix is
    // left in its covered state on success.
    fn recurse(&mut self, partial: &mut Vec<usize>, budget: u64) -> Option<bool> {
        let Some(col) = self.choose_column() else {
            return Some(true);
        };
        let c = col + 1;
        if self.size[c] == 0 {
            return Some(false);
        }
        self.cover(c);
        let mut r = self.down[c];
        while r != c {
            if self.visited >= budget {
                self.uncover(c);
                return None;
            }
            self.visited += 1;
            partial.push(self.row[r]);
            let mut j = self.right[r];
            while j != r {
                self.cover(self.column[j]);
                j = self.right[j];
            }
            match self.recurse(partial, budget) {
                Some(true) => return Some(true),
                outcome => {
                    let mut j = self.left[r];
                    while j != r {
                        self.uncover(self.column[j]);
                        j = self.left[j];
                    }
                    partial.pop();
                    if outcome.is_none() {
                        self.uncover(c);
                        return None;
                    }
                }
            }
            r = self.down[r];
        }
        self.uncover(c);
        Some(false)
    }
}
