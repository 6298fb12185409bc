//! Linear (translation-only) disassembly and the isolated-piece check.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::voxel::{BoxDims, Coord};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Direction {
    PosX,
    NegX,
    PosY,
    NegY,
    PosZ,
    NegZ,
}

impl Direction {
    /// Scan order used by greedy extraction.
    pub const ALL: [Direction; 6] = [
        Direction::PosX,
        Direction::NegX,
        Direction::PosY,
        Direction::NegY,
        Direction::PosZ,
        Direction::NegZ,
    ];

    pub fn step(self) -> Coord {
        match self {
            Direction::PosX => Coord::new(1, 0, 0),
            Direction::NegX => Coord::new(-1, 0, 0),
            Direction::PosY => Coord::new(0, 1, 0),
            Direction::NegY => Coord::new(0, -1, 0),
            Direction::PosZ => Coord::new(0, 0, 1),
            Direction::NegZ => Coord::new(0, 0, -1),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Direction::PosX => "+x",
            Direction::NegX => "-x",
            Direction::PosY => "+y",
            Direction::NegY => "-y",
            Direction::PosZ => "+z",
            Direction::NegZ => "-z",
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Direction {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Direction::ALL
            .into_iter()
            .find(|d| d.as_str() == s)
            .ok_or_else(|| format!("unknown direction {s:?}"))
    }
}

impl Serialize for Direction {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for Direction {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// How far a piece is pushed when testing removability.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RemovalMode {
    /// A single unit translation must be collision-free.
    OneStep,
    /// Every unit translation until the piece is fully outside the box must
    /// be collision-free.
    #[default]
    FullSlide,
}

impl FromStr for RemovalMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "one-step" => Ok(RemovalMode::OneStep),
            "full-slide" => Ok(RemovalMode::FullSlide),
            _ => Err(format!("unknown removability mode {s:?}")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssemblyStep {
    pub piece: usize,
    pub direction: Direction,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AssemblyPlan {
    /// Insertion order: the reverse of the removal sequence. Each piece is
    /// inserted by sliding it in opposite to `direction`.
    pub order: Vec<AssemblyStep>,
    pub mode: RemovalMode,
}

impl AssemblyPlan {
    pub fn removal_sequence(&self) -> impl Iterator<Item = &AssemblyStep> {
        self.order.iter().rev()
    }
}

/// Cells outside the box are free space.
pub fn removable(
    piece: &[Coord],
    others: &HashSet<Coord>,
    dir: Direction,
    dims: BoxDims,
    mode: RemovalMode,
) -> bool {
    let step = dir.step();
    let mut k = 1;
    loop {
        let by = Coord::new(step.x * k, step.y * k, step.z * k);
        let mut any_inside = false;
        for c in piece {
            let moved = c.offset(by);
            if others.contains(&moved) {
                return false;
            }
            any_inside |= dims.contains(moved);
        }
        if mode == RemovalMode::OneStep || !any_inside {
            return true;
        }
        k += 1;
    }
}

/// Some piece has no face contact with any other piece. A lone piece is
/// never isolated.
pub fn has_isolated_piece(placed: &[Vec<Coord>]) -> bool {
    if placed.len() < 2 {
        return false;
    }
    let owner: std::collections::HashMap<Coord, usize> = placed
        .iter()
        .enumerate()
        .flat_map(|(i, cells)| cells.iter().map(move |&c| (c, i)))
        .collect();
    placed.iter().enumerate().any(|(i, cells)| {
        !cells
            .iter()
            .any(|c| c.neighbors().any(|n| owner.get(&n).is_some_and(|&j| j != i)))
    })
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StuckAt {
    /// Pieces still in the box when no removal was possible.
    pub remaining: Vec<usize>,
}

/// Greedy disassembly: repeatedly remove the first removable piece in
/// ascending index, trying directions in [`Direction::ALL`] order.
pub fn extract_linear_assembly(
    placed: &[Vec<Coord>],
    dims: BoxDims,
    mode: RemovalMode,
) -> Result<AssemblyPlan, StuckAt> {
    let mut remaining: Vec<usize> = (0..placed.len()).collect();
    let mut removal = Vec::with_capacity(placed.len());
    while !remaining.is_empty() {
        let mut found = None;
        'scan: for (pos, &i) in remaining.iter().enumerate() {
            let others: HashSet<Coord> = remaining
                .iter()
                .filter(|&&j| j != i)
                .flat_map(|&j| placed[j].iter().copied())
                .collect();
            for dir in Direction::ALL {
                if removable(&placed[i], &others, dir, dims, mode) {
                    found = Some((
                        pos,
                        AssemblyStep {
                            piece: i,
                            direction: dir,
                        },
                    ));
                    break 'scan;
                }
            }
        }
        match found {
            Some((pos, step)) => {
                remaining.remove(pos);
                removal.push(step);
            }
            None => return Err(StuckAt { remaining }),
        }
    }
    removal.reverse();
    Ok(AssemblyPlan { order: removal, mode })
}

/// Searches every removal order (bitmask DFS with memoised dead states).
/// Only meant for small piece counts; used to cross-check the greedy pass.
pub fn exhaustive_linear_order(
    placed: &[Vec<Coord>],
    dims: BoxDims,
    mode: RemovalMode,
) -> Option<AssemblyPlan> {
    let n = placed.len();
    assert!(n < 64, "too many pieces for exhaustive search");
    let full: u64 = if n == 0 { 0 } else { u64::MAX >> (64 - n) };
    let mut dead: HashSet<u64> = HashSet::new();
    let mut removal = Vec::with_capacity(n);

    fn dfs(
        mask: u64,
        placed: &[Vec<Coord>],
        dims: BoxDims,
        mode: RemovalMode,
        dead: &mut HashSet<u64>,
        removal: &mut Vec<AssemblyStep>,
    ) -> bool {
        if mask == 0 {
            return true;
        }
        if dead.contains(&mask) {
            return false;
        }
        for i in (0..placed.len()).filter(|i| mask >> i & 1 == 1) {
            let others: HashSet<Coord> = (0..placed.len())
                .filter(|&j| j != i && mask >> j & 1 == 1)
                .flat_map(|j| placed[j].iter().copied())
                .collect();
            for dir in Direction::ALL {
                if removable(&placed[i], &others, dir, dims, mode) {
                    removal.push(AssemblyStep {
                        piece: i,
                        direction: dir,
                    });
                    if dfs(mask & !(1 << i), placed, dims, mode, dead, removal) {
                        return true;
                    }
                    removal.pop();
                    break;
                }
            }
        }
        dead.insert(mask);
        false
    }

    if !dfs(full, placed, dims, mode, &mut dead, &mut removal) {
        return None;
    }
    removal.reverse();
    Some(AssemblyPlan { order: removal, mode })
}

/// Replays a plan as insertions into an empty box: each piece starts fully
/// outside along its direction and slides in (or takes its single final
/// step, in one-step mode). Returns whether every intermediate position is
/// collision-free and the final occupancy equals the union of all pieces.
pub fn simulate_insertion(placed: &[Vec<Coord>], plan: &AssemblyPlan, dims: BoxDims) -> bool {
    let mut occupied: HashSet<Coord> = HashSet::new();
    let mut seen = vec![false; placed.len()];
    for step in &plan.order {
        let Some(cells) = placed.get(step.piece) else {
            return false;
        };
        if std::mem::replace(&mut seen[step.piece], true) {
            return false;
        }
        let d = step.direction.step();
        let max_k = match plan.mode {
            RemovalMode::OneStep => 1,
            RemovalMode::FullSlide => dims.a.max(dims.b).max(dims.c) + 1,
        };
        for k in (0..=max_k).rev() {
            let by = Coord::new(d.x * k, d.y * k, d.z * k);
            if cells.iter().any(|c| occupied.contains(&c.offset(by))) {
                return false;
            }
        }
        occupied.extend(cells.iter().copied());
    }
    let total: usize = placed.iter().map(Vec::len).sum();
    seen.iter().all(|&s| s) && occupied.len() == total
}
