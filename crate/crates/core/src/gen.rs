//! Sample–verify puzzle generation.
//!
//! A candidate partition is sampled according to the difficulty mode, then
//! passes through a fixed chain of checks: structural rules, exact-cover
//! solvability, no isolated piece, optional linear assembly, and (hard mode
//! only) a minimum search-effort threshold. Accepted puzzles are
//! de-duplicated by signature and written one directory per puzzle.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::assembly::{
    exhaustive_linear_order, extract_linear_assembly, has_isolated_piece, simulate_insertion, AssemblyStep,
    RemovalMode,
};
use crate::cover::{build_cover_instance, solve, verify_cover, SolveStatus, DEFAULT_NODE_BUDGET};
use crate::palette;
use crate::puzzle::{
    Difficulty, GenStats, PieceSpec, PuzzleInstance, SolutionEntry, MANIFEST_FILE, SCHEMA_VERSION,
};
use crate::render::{self, ViewKind, Voxel};
use crate::voxel::{
    canonical_form, cells_connected, cells_have_full_2x3_face, has_full_2x3_face, is_connected,
    puzzle_signature, BoxDims, Coord, Shape, Signature,
};

/// Directory (inside the dataset) holding one marker file per reserved
/// signature.
pub const SIGNATURE_DIR: &str = ".signatures";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenConfig {
    #[serde(rename = "box")]
    pub dims: BoxDims,
    pub mode: Difficulty,
    /// Descending minimum piece sizes, tried in order.
    pub min_piece_stages: Vec<usize>,
    pub max_piece_cells: usize,
    pub max_pieces: usize,
    pub attempts_per_stage: usize,
    pub hard_min_visited_nodes: u64,
    pub require_linear_assembly: bool,
    pub removal_mode: RemovalMode,
    pub node_budget: u64,
    pub rng_seed: u64,
}

impl GenConfig {
    pub fn new(dims: BoxDims, mode: Difficulty, rng_seed: u64) -> Self {
        GenConfig {
            dims,
            mode,
            min_piece_stages: vec![4, 3],
            max_piece_cells: match mode {
                Difficulty::Easy => 8,
                _ => 6,
            },
            max_pieces: 12,
            attempts_per_stage: 400,
            hard_min_visited_nodes: 500,
            require_linear_assembly: false,
            removal_mode: RemovalMode::FullSlide,
            node_budget: DEFAULT_NODE_BUDGET,
            rng_seed,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.min_piece_stages.is_empty() {
            return Err("min_piece_stages is empty".into());
        }
        if self.min_piece_stages.windows(2).any(|w| w[0] < w[1]) {
            return Err("min_piece_stages must be descending".into());
        }
        let top = self.min_piece_stages[0];
        if top == 0 || self.max_piece_cells < top {
            return Err(format!(
                "max_piece_cells {} must be at least the largest min_piece {top}",
                self.max_piece_cells
            ));
        }
        if self.attempts_per_stage == 0 {
            return Err("attempts_per_stage must be positive".into());
        }
        if self.max_pieces == 0 {
            return Err("max_pieces must be positive".into());
        }
        if self.node_budget == 0 {
            return Err("node_budget must be positive".into());
        }
        Ok(())
    }

    /// Smallest size any stage admits; used when re-verifying stored puzzles.
    pub fn loosest_min_piece(&self) -> usize {
        *self.min_piece_stages.iter().min().unwrap_or(&1)
    }

    fn bounds(&self, min_piece: usize) -> SizeBounds {
        SizeBounds {
            min: min_piece,
            max: self.max_piece_cells,
            max_pieces: self.max_pieces,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SizeBounds {
    pub min: usize,
    pub max: usize,
    pub max_pieces: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Rejection {
    SamplingFailed,
    DuplicateShapes,
    Structure,
    Unsat,
    BudgetExhausted,
    IsolatedPiece,
    NoLinearAssembly,
    BelowDifficulty,
}

impl Rejection {
    pub fn as_str(self) -> &'static str {
        match self {
            Rejection::SamplingFailed => "sampling-failed",
            Rejection::DuplicateShapes => "duplicate-shapes",
            Rejection::Structure => "structure",
            Rejection::Unsat => "unsat",
            Rejection::BudgetExhausted => "budget-exhausted",
            Rejection::IsolatedPiece => "isolated-piece",
            Rejection::NoLinearAssembly => "no-linear-assembly",
            Rejection::BelowDifficulty => "below-difficulty",
        }
    }
}

pub type RejectionCounts = BTreeMap<Rejection, u64>;

// ---------------------------------------------------------------------------
// Samplers

/// Cuboid extents `(p, q, r)` with `p <= q <= r` that satisfy the easy-shape
/// rule (two equal extents), size bounds, fit in the box and have no full
/// 2×3 face.
pub fn admissible_cuboids(dims: BoxDims, bounds: SizeBounds) -> Vec<[i32; 3]> {
    let [ea, eb, ec] = dims.sorted_extents();
    let mut out = Vec::new();
    for p in 1..=ea {
        for q in p..=eb {
            for r in q..=ec {
                let vol = (p * q * r) as usize;
                if is_easy_cuboid([p, q, r])
                    && (bounds.min..=bounds.max).contains(&vol)
                    && !has_full_2x3_face(&Shape::cuboid(p, q, r).unwrap())
                {
                    out.push([p, q, r]);
                }
            }
        }
    }
    out
}

/// At least two extents are equal.
pub fn is_easy_cuboid([p, q, r]: [i32; 3]) -> bool {
    p == q || q == r || p == r
}

const EASY_RESTARTS: usize = 64;

pub fn sample_easy(dims: BoxDims, bounds: SizeBounds, rng: &mut impl Rng) -> Option<Vec<Shape>> {
    let kinds = admissible_cuboids(dims, bounds);
    let smallest = kinds.iter().map(|k| (k[0] * k[1] * k[2]) as usize).min()?;
    'restart: for _ in 0..EASY_RESTARTS {
        let mut remaining = dims.volume();
        let mut pieces = Vec::new();
        while remaining > 0 {
            if pieces.len() == bounds.max_pieces {
                continue 'restart;
            }
            let fitting: Vec<&[i32; 3]> = kinds
                .iter()
                .filter(|k| {
                    let v = (k[0] * k[1] * k[2]) as usize;
                    v <= remaining && (v == remaining || remaining - v >= smallest)
                })
                .collect();
            let Some(&&[p, q, r]) = fitting.choose(rng) else {
                continue 'restart;
            };
            remaining -= (p * q * r) as usize;
            pieces.push(Shape::cuboid(p, q, r).unwrap());
        }
        return Some(pieces);
    }
    None
}

/// Seeded round-robin growth. With `planar`, each piece is confined to one
/// randomly chosen axis-aligned plane through its seed.
fn grow_partition(dims: BoxDims, bounds: SizeBounds, planar: bool, rng: &mut impl Rng) -> Option<Vec<Shape>> {
    let volume = dims.volume();
    let lo = volume.div_ceil(bounds.max).max(1);
    let hi = (volume / bounds.min.max(1)).min(bounds.max_pieces);
    if lo > hi {
        return None;
    }
    let k = rng.random_range(lo..=hi);
    let mut all: Vec<usize> = (0..volume).collect();
    all.shuffle(rng);
    let seeds = &all[..k];

    let mut owner: Vec<Option<usize>> = vec![None; volume];
    let mut pieces: Vec<Vec<Coord>> = Vec::with_capacity(k);
    let mut planes: Vec<Option<(usize, i32)>> = Vec::with_capacity(k);
    for (i, &s) in seeds.iter().enumerate() {
        owner[s] = Some(i);
        let c = dims.coord(s);
        pieces.push(vec![c]);
        planes.push(planar.then(|| {
            let axis = rng.random_range(0..3);
            (axis, c.axis(axis))
        }));
    }
    let mut unassigned = volume - k;
    loop {
        let mut grew = false;
        for i in 0..k {
            if pieces[i].len() >= bounds.max {
                continue;
            }
            let mut frontier: Vec<Coord> = pieces[i]
                .iter()
                .flat_map(|c| c.neighbors())
                .filter(|n| dims.contains(*n) && owner[dims.index(*n)].is_none())
                .filter(|n| planes[i].is_none_or(|(axis, v)| n.axis(axis) == v))
                .collect();
            frontier.sort_unstable();
            frontier.dedup();
            frontier.retain(|n| {
                let mut grown = pieces[i].clone();
                grown.push(*n);
                !cells_have_full_2x3_face(&grown)
            });
            if let Some(&n) = frontier.choose(rng) {
                owner[dims.index(n)] = Some(i);
                pieces[i].push(n);
                unassigned -= 1;
                grew = true;
            }
        }
        if unassigned == 0 || !grew {
            break;
        }
    }
    if unassigned > 0 {
        return None;
    }
    Some(pieces.into_iter().map(|p| Shape::new(p).unwrap()).collect())
}

pub fn sample_mid(dims: BoxDims, bounds: SizeBounds, rng: &mut impl Rng) -> Option<Vec<Shape>> {
    grow_partition(dims, bounds, true, rng)
}

/// Free growth followed by uniqueness repair. Returns the partition plus
/// whether repair was needed.
pub fn sample_hard(dims: BoxDims, bounds: SizeBounds, rng: &mut impl Rng) -> Result<Vec<Shape>, Rejection> {
    let partition = grow_partition(dims, bounds, false, rng).ok_or(Rejection::SamplingFailed)?;
    repair_uniqueness(&partition, bounds, rng).ok_or(Rejection::DuplicateShapes)
}

pub fn all_distinct(pieces: &[Shape]) -> bool {
    let mut seen = HashSet::new();
    pieces.iter().all(|p| seen.insert(canonical_form(p)))
}

fn piece_ok(cells: &[Coord], bounds: SizeBounds) -> bool {
    (bounds.min..=bounds.max).contains(&cells.len())
        && cells_connected(cells)
        && !cells_have_full_2x3_face(cells)
}

/// Moves single boundary voxels between face-adjacent pieces until every
/// canonical form is distinct, or gives up after `3 * pieces` transfers.
pub fn repair_uniqueness(partition: &[Shape], bounds: SizeBounds, rng: &mut impl Rng) -> Option<Vec<Shape>> {
    let mut pieces: Vec<Vec<Coord>> = partition.iter().map(|s| s.cells().to_vec()).collect();
    let budget = 3 * pieces.len();
    let as_shapes = |pieces: &[Vec<Coord>]| -> Vec<Shape> {
        pieces
            .iter()
            .map(|p| Shape::new(p.iter().copied()).unwrap())
            .collect()
    };
    for _ in 0..=budget {
        let shapes = as_shapes(&pieces);
        let canon: Vec<Shape> = shapes.iter().map(canonical_form).collect();
        let mut first_seen: HashMap<&Shape, usize> = HashMap::new();
        let mut dup = None;
        for (i, c) in canon.iter().enumerate() {
            if first_seen.insert(c, i).is_some() {
                dup = Some(i);
                break;
            }
        }
        let Some(target) = dup else {
            return Some(shapes);
        };
        let owner: HashMap<Coord, usize> = pieces
            .iter()
            .enumerate()
            .flat_map(|(i, p)| p.iter().map(move |&c| (c, i)))
            .collect();
        // Candidate transfers touching the duplicate piece, either direction.
        let mut moves: Vec<(usize, Coord, usize)> = Vec::new();
        for (i, p) in pieces.iter().enumerate() {
            for &c in p {
                for n in c.neighbors() {
                    if let Some(&j) = owner.get(&n) {
                        if j != i && (i == target || j == target) {
                            moves.push((i, c, j));
                        }
                    }
                }
            }
        }
        moves.sort_unstable();
        moves.dedup();
        moves.shuffle(rng);
        let applied = moves.into_iter().find(|&(donor, cell, recipient)| {
            let rest: Vec<Coord> = pieces[donor].iter().copied().filter(|&c| c != cell).collect();
            let mut grown = pieces[recipient].clone();
            grown.push(cell);
            piece_ok(&rest, bounds) && piece_ok(&grown, bounds)
        });
        let (donor, cell, recipient) = applied?;
        pieces[donor].retain(|&c| c != cell);
        pieces[recipient].push(cell);
    }
    None
}

// ---------------------------------------------------------------------------
// Validation

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidityReport {
    pub volume_ok: bool,
    pub connected_ok: bool,
    pub size_ok: bool,
    pub face_rule_ok: bool,
    pub piece_count_ok: bool,
}

impl ValidityReport {
    pub fn is_valid(&self) -> bool {
        self.volume_ok && self.connected_ok && self.size_ok && self.face_rule_ok && self.piece_count_ok
    }
}

pub fn validate_partition(pieces: &[Shape], dims: BoxDims, bounds: SizeBounds) -> ValidityReport {
    let volume: usize = pieces.iter().map(Shape::len).sum();
    ValidityReport {
        volume_ok: !pieces.is_empty() && volume == dims.volume(),
        connected_ok: pieces.iter().all(is_connected),
        size_ok: pieces
            .iter()
            .all(|p| (bounds.min..=bounds.max).contains(&p.len())),
        face_rule_ok: !pieces.iter().any(has_full_2x3_face),
        piece_count_ok: pieces.len() <= bounds.max_pieces,
    }
}

// ---------------------------------------------------------------------------
// Staged generation

#[derive(Clone, Debug)]
pub struct GenFailure {
    pub attempts: u64,
    pub rejections: RejectionCounts,
}

#[derive(Clone, Debug)]
pub struct Generated {
    pub instance: PuzzleInstance,
    pub rejections: RejectionCounts,
}

type Checked = (Vec<Shape>, Vec<SolutionEntry>, Vec<AssemblyStep>, u64);

/// Runs the check chain on one sampled candidate.
fn check_candidate(cfg: &GenConfig, bounds: SizeBounds, sampled: Vec<Shape>) -> Result<Checked, Rejection> {
    // Pieces are stored in canonical orientation.
    let pieces: Vec<Shape> = sampled.iter().map(canonical_form).collect();
    if cfg.mode == Difficulty::Hard && !all_distinct(&pieces) {
        return Err(Rejection::DuplicateShapes);
    }
    if !validate_partition(&pieces, cfg.dims, bounds).is_valid() {
        return Err(Rejection::Structure);
    }
    let ci = build_cover_instance(&pieces, cfg.dims).map_err(|_| Rejection::Structure)?;
    let res = solve(&ci, cfg.node_budget).expect("positive budget");
    match res.status {
        SolveStatus::Solved => {}
        SolveStatus::Unsat => return Err(Rejection::Unsat),
        SolveStatus::BudgetExhausted => return Err(Rejection::BudgetExhausted),
    }
    let placed: Vec<Vec<Coord>> = res.solution.iter().map(|p| p.cells.clone()).collect();
    if has_isolated_piece(&placed) {
        return Err(Rejection::IsolatedPiece);
    }
    let mut order = Vec::new();
    if cfg.require_linear_assembly {
        match extract_linear_assembly(&placed, cfg.dims, cfg.removal_mode) {
            Ok(plan) => order = plan.order,
            Err(_) => {
                if cfg.dims.volume() <= 12
                    && exhaustive_linear_order(&placed, cfg.dims, cfg.removal_mode).is_some()
                {
                    log::warn!("greedy disassembly failed where an exhaustive search succeeded; rejecting");
                }
                return Err(Rejection::NoLinearAssembly);
            }
        }
    }
    if cfg.mode == Difficulty::Hard && res.visited_nodes < cfg.hard_min_visited_nodes {
        return Err(Rejection::BelowDifficulty);
    }
    let solution = res
        .solution
        .iter()
        .map(|p| SolutionEntry {
            piece: p.piece_index,
            rotation_index: p.rotation,
            offset: p.offset,
        })
        .collect();
    Ok((pieces, solution, order, res.visited_nodes))
}

pub fn sample_for_mode(
    cfg: &GenConfig,
    bounds: SizeBounds,
    rng: &mut impl Rng,
) -> Result<Vec<Shape>, Rejection> {
    match cfg.mode {
        Difficulty::Easy => sample_easy(cfg.dims, bounds, rng).ok_or(Rejection::SamplingFailed),
        Difficulty::Mid => sample_mid(cfg.dims, bounds, rng).ok_or(Rejection::SamplingFailed),
        Difficulty::Hard => sample_hard(cfg.dims, bounds, rng),
    }
}

/// Tries each min-piece stage in turn; the first candidate passing the whole
/// chain wins.
pub fn generate_one_staged(cfg: &GenConfig, rng: &mut impl Rng) -> Result<Generated, GenFailure> {
    let mut rejections = RejectionCounts::new();
    let mut attempts = 0u64;
    for &min_piece in &cfg.min_piece_stages {
        let bounds = cfg.bounds(min_piece);
        for _ in 0..cfg.attempts_per_stage {
            attempts += 1;
            let outcome =
                sample_for_mode(cfg, bounds, rng).and_then(|sampled| check_candidate(cfg, bounds, sampled));
            match outcome {
                Ok((pieces, solution, assembly_order, visited_nodes)) => {
                    let signature = puzzle_signature(&pieces).expect("non-empty");
                    let minimal_steps = pieces.len();
                    let pieces = pieces
                        .into_iter()
                        .enumerate()
                        .map(|(i, cells)| PieceSpec {
                            color: palette::PALETTE[i].name.to_string(),
                            cells,
                        })
                        .collect();
                    let instance = PuzzleInstance {
                        schema_version: SCHEMA_VERSION,
                        dims: cfg.dims,
                        difficulty: cfg.mode,
                        pieces,
                        solution,
                        assembly_order,
                        minimal_steps,
                        signature,
                        stats: GenStats {
                            visited_nodes,
                            attempts,
                        },
                    };
                    return Ok(Generated { instance, rejections });
                }
                Err(r) => *rejections.entry(r).or_default() += 1,
            }
        }
    }
    Err(GenFailure { attempts, rejections })
}

// ---------------------------------------------------------------------------
// Independent re-verification

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub structure: ValidityReport,
    pub stored_solution_valid: bool,
    pub solver_agrees: bool,
    pub no_isolated_piece: bool,
    /// `None` when linear assembly is not required.
    pub linear_assembly: Option<bool>,
    /// `None` outside hard mode.
    pub difficulty: Option<bool>,
    pub signature_matches: bool,
    pub minimal_steps_matches: bool,
    pub distinct_shapes: Option<bool>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.structure.is_valid()
            && self.stored_solution_valid
            && self.solver_agrees
            && self.no_isolated_piece
            && self.linear_assembly.unwrap_or(true)
            && self.difficulty.unwrap_or(true)
            && self.signature_matches
            && self.minimal_steps_matches
            && self.distinct_shapes.unwrap_or(true)
    }
}

/// Re-checks a stored puzzle from scratch, trusting none of its derived
/// fields: the stored solution is re-realized and checked as a tiling, the
/// solver is re-run, and an assembly order is replayed as insertions.
pub fn verify_instance(inst: &PuzzleInstance, cfg: &GenConfig) -> VerifyReport {
    let pieces = inst.shapes();
    let bounds = cfg.bounds(cfg.loosest_min_piece());
    let structure = validate_partition(&pieces, inst.dims, bounds);
    let placements = inst.solution_placements();
    let stored_solution_valid = placements
        .as_ref()
        .is_some_and(|p| verify_cover(inst.dims, pieces.len(), p));
    let solved = build_cover_instance(&pieces, inst.dims)
        .ok()
        .and_then(|ci| solve(&ci, cfg.node_budget).ok());
    let solver_agrees = solved.as_ref().is_some_and(|r| r.status == SolveStatus::Solved);
    let placed: Vec<Vec<Coord>> = placements
        .map(|p| p.into_iter().map(|p| p.cells).collect())
        .unwrap_or_default();
    let no_isolated_piece = !placed.is_empty() && !has_isolated_piece(&placed);
    let linear_assembly = cfg.require_linear_assembly.then(|| {
        inst.assembly_order.len() == pieces.len()
            && simulate_insertion(
                &placed,
                &crate::assembly::AssemblyPlan {
                    order: inst.assembly_order.clone(),
                    mode: cfg.removal_mode,
                },
                inst.dims,
            )
    });
    let difficulty = (inst.difficulty == Difficulty::Hard).then(|| {
        solved
            .as_ref()
            .is_some_and(|r| r.visited_nodes >= cfg.hard_min_visited_nodes)
    });
    let signature_matches = puzzle_signature(&pieces).is_ok_and(|s| s == inst.signature);
    VerifyReport {
        structure,
        stored_solution_valid,
        solver_agrees,
        no_isolated_piece,
        linear_assembly,
        difficulty,
        signature_matches,
        minimal_steps_matches: inst.minimal_steps == pieces.len(),
        distinct_shapes: (inst.difficulty == Difficulty::Hard).then(|| all_distinct(&pieces)),
    }
}

// ---------------------------------------------------------------------------
// Persistence and batch generation

/// Claims `sig` by creating its marker file exclusively. Returns `false`
/// when another writer already holds it.
pub fn reserve_signature(dataset: &Path, sig: &Signature) -> io::Result<bool> {
    let dir = dataset.join(SIGNATURE_DIR);
    fs::create_dir_all(&dir)?;
    match fs::OpenOptions::new()
        .write(true)
        .create_new(true)
        .open(dir.join(sig.as_str()))
    {
        Ok(_) => Ok(true),
        Err(e) if e.kind() == io::ErrorKind::AlreadyExists => Ok(false),
        Err(e) => Err(e),
    }
}

pub fn reserved_signatures(dataset: &Path) -> io::Result<HashSet<String>> {
    let dir = dataset.join(SIGNATURE_DIR);
    if !dir.is_dir() {
        return Ok(HashSet::new());
    }
    let mut out = HashSet::new();
    for e in fs::read_dir(dir)? {
        out.insert(e?.file_name().to_string_lossy().into_owned());
    }
    Ok(out)
}

pub fn puzzle_id(inst: &PuzzleInstance) -> String {
    format!(
        "{}-{}-{}",
        inst.dims,
        inst.difficulty,
        &inst.signature.as_str()[..12]
    )
}

pub fn solution_voxels(inst: &PuzzleInstance) -> Vec<Voxel> {
    let Some(cells) = inst.solved_cells() else {
        return Vec::new();
    };
    cells
        .into_iter()
        .enumerate()
        .flat_map(|(i, cells)| {
            let rgb = palette::lookup(&inst.pieces[i].color).map_or([128; 3], |p| p.rgb);
            cells.into_iter().map(move |at| Voxel { at, rgb })
        })
        .collect()
}

/// Writes a file through a temporary sibling and a rename.
fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)
}

/// Manifest plus renders of the assembled box (three views) and each piece.
pub fn save_puzzle(dataset: &Path, inst: &PuzzleInstance) -> io::Result<PathBuf> {
    let dir = dataset.join(puzzle_id(inst));
    fs::create_dir_all(&dir)?;
    let voxels = solution_voxels(inst);
    for kind in ViewKind::ALL {
        let png = render::encode_png(&render::render(kind, inst.dims, &voxels));
        write_atomic(&dir.join(format!("assembled_{}.png", kind.name())), &png)?;
    }
    for (i, p) in inst.pieces.iter().enumerate() {
        let rgb = palette::lookup(&p.color).map_or([128; 3], |e| e.rgb);
        let ext = p.cells.extents();
        let dims = BoxDims::new(ext[0], ext[1], ext[2]).expect("non-empty piece");
        let vox: Vec<Voxel> = p.cells.cells().iter().map(|&at| Voxel { at, rgb }).collect();
        let png = render::encode_png(&render::render_iso(dims, &vox, false));
        write_atomic(&dir.join(format!("piece_{i}_{}.png", p.color)), &png)?;
    }
    let json = serde_json::to_vec_pretty(inst).expect("manifest serializes");
    write_atomic(&dir.join(MANIFEST_FILE), &json)?;
    Ok(dir)
}

#[derive(Clone, Debug)]
pub struct BatchSpec {
    pub sizes: Vec<BoxDims>,
    pub modes: Vec<Difficulty>,
    pub per_cell_target: usize,
    /// Template; `dims`, `mode` and `rng_seed` are overridden per call.
    pub template: GenConfig,
    pub out_dir: PathBuf,
    pub workers: usize,
    /// Calls per cell are capped at `per_cell_target * max_call_factor`.
    pub max_call_factor: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellSummary {
    #[serde(rename = "box")]
    pub dims: Option<BoxDims>,
    pub mode: Option<Difficulty>,
    pub calls: u64,
    pub accepted: u64,
    /// Candidates whose signature was already in the dataset before this run.
    pub already_present: u64,
    /// Candidates duplicating a puzzle accepted earlier in this run.
    pub duplicates: u64,
    pub generation_failures: u64,
    pub io_errors: u64,
    pub rejections: BTreeMap<String, u64>,
    pub accepted_ids: Vec<String>,
}

impl CellSummary {
    pub fn satisfied(&self) -> u64 {
        self.accepted + self.already_present
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchSummary {
    pub target: usize,
    pub cells: Vec<CellSummary>,
}

impl BatchSummary {
    pub fn accepted(&self) -> u64 {
        self.cells.iter().map(|c| c.accepted).sum()
    }

    pub fn targets_met(&self) -> bool {
        self.cells.iter().all(|c| c.satisfied() >= self.target as u64)
    }
}

/// Deterministic per-call seed.
pub fn call_seed(base: u64, dims: BoxDims, mode: Difficulty, call: u64) -> u64 {
    let mut h = base ^ 0x9E37_79B9_7F4A_7C15;
    for v in [dims.a as u64, dims.b as u64, dims.c as u64, mode as u64, call] {
        h = splitmix(h ^ v);
    }
    h
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn generate_call(
    template: &GenConfig,
    dims: BoxDims,
    mode: Difficulty,
    call: u64,
) -> (GenConfig, Result<Generated, GenFailure>) {
    let mut cfg = template.clone();
    cfg.dims = dims;
    cfg.mode = mode;
    cfg.rng_seed = call_seed(template.rng_seed, dims, mode, call);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let out = generate_one_staged(&cfg, &mut rng);
    (cfg, out)
}

/// For each (box, mode) cell: generate candidates with per-call seeds,
/// reserve signatures, persist new puzzles. A cell stops once
/// `accepted + already_present` reaches the target, so re-running a
/// finished batch walks the same candidates and adds nothing.
pub fn generate_batch(spec: &BatchSpec) -> io::Result<BatchSummary> {
    fs::create_dir_all(&spec.out_dir)?;
    let preexisting = reserved_signatures(&spec.out_dir)?;
    let workers = spec.workers.max(1);
    let max_calls = (spec.per_cell_target * spec.max_call_factor.max(1)) as u64;
    let mut summary = BatchSummary {
        target: spec.per_cell_target,
        cells: Vec::new(),
    };
    for &dims in &spec.sizes {
        for &mode in &spec.modes {
            let mut cell = CellSummary {
                dims: Some(dims),
                mode: Some(mode),
                ..Default::default()
            };
            let mut next_call = 0u64;
            while cell.satisfied() < spec.per_cell_target as u64 && next_call < max_calls {
                let wave: Vec<u64> = (next_call..(next_call + workers as u64).min(max_calls)).collect();
                next_call += wave.len() as u64;
                let results: Vec<(GenConfig, Result<Generated, GenFailure>)> = if workers == 1 {
                    wave.iter()
                        .map(|&t| generate_call(&spec.template, dims, mode, t))
                        .collect()
                } else {
                    std::thread::scope(|s| {
                        let handles: Vec<_> = wave
                            .iter()
                            .map(|&t| s.spawn(move || generate_call(&spec.template, dims, mode, t)))
                            .collect();
                        handles
                            .into_iter()
                            .map(|h| h.join().expect("generator thread"))
                            .collect()
                    })
                };
                for (_, result) in results {
                    if cell.satisfied() >= spec.per_cell_target as u64 {
                        break;
                    }
                    cell.calls += 1;
                    let generated = match result {
                        Ok(g) => g,
                        Err(f) => {
                            cell.generation_failures += 1;
                            merge(&mut cell.rejections, &f.rejections);
                            continue;
                        }
                    };
                    merge(&mut cell.rejections, &generated.rejections);
                    let inst = generated.instance;
                    if !reserve_signature(&spec.out_dir, &inst.signature)? {
                        if preexisting.contains(inst.signature.as_str()) {
                            cell.already_present += 1;
                        } else {
                            cell.duplicates += 1;
                        }
                        continue;
                    }
                    let saved = save_puzzle(&spec.out_dir, &inst).or_else(|e| {
                        log::warn!("retrying save of {}: {e}", puzzle_id(&inst));
                        save_puzzle(&spec.out_dir, &inst)
                    });
                    match saved {
                        Ok(_) => {
                            cell.accepted += 1;
                            cell.accepted_ids.push(puzzle_id(&inst));
                        }
                        Err(e) => {
                            log::error!("failed to save {}: {e}", puzzle_id(&inst));
                            cell.io_errors += 1;
                        }
                    }
                }
            }
            summary.cells.push(cell);
        }
    }
    Ok(summary)
}

fn merge(into: &mut BTreeMap<String, u64>, from: &RejectionCounts) {
    for (r, n) in from {
        *into.entry(r.as_str().to_string()).or_default() += n;
    }
}
