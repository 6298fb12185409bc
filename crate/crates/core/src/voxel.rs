//! Voxel geometry on the integer lattice.
//!
//! Shapes are finite sets of unit cubes. The proper rotation group of the
//! cube (24 elements) acts on them; reflections are never applied, so a
//! chiral piece and its mirror image are different shapes.

use std::collections::{BTreeSet, HashSet, VecDeque};
use std::fmt;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum VoxelError {
    #[error("shape has no cells")]
    EmptyShape,
    #[error("piece list is empty")]
    NoPieces,
    #[error("rotation index {0} out of range (expected 0..24)")]
    BadRotation(usize),
    #[error("box dimensions must be positive, got {0}x{1}x{2}")]
    BadBox(i64, i64, i64),
    #[error("cannot parse box dimensions from {0:?}")]
    BoxSyntax(String),
}

/// A voxel position. Ordering is lexicographic on `(x, y, z)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(from = "[i32; 3]", into = "[i32; 3]")]
pub struct Coord {
    pub x: i32,
    pub y: i32,
    pub z: i32,
}

impl Coord {
    pub const ORIGIN: Coord = Coord { x: 0, y: 0, z: 0 };

    pub const fn new(x: i32, y: i32, z: i32) -> Self {
        Coord { x, y, z }
    }

    pub fn offset(self, other: Coord) -> Coord {
        Coord::new(self.x + other.x, self.y + other.y, self.z + other.z)
    }

    /// The six face neighbours.
    pub fn neighbors(self) -> impl Iterator<Item = Coord> {
        const STEPS: [(i32, i32, i32); 6] = [
            (1, 0, 0),
            (-1, 0, 0),
            (0, 1, 0),
            (0, -1, 0),
            (0, 0, 1),
            (0, 0, -1),
        ];
        STEPS
            .into_iter()
            .map(move |(dx, dy, dz)| Coord::new(self.x + dx, self.y + dy, self.z + dz))
    }

    pub fn axis(self, axis: usize) -> i32 {
        match axis {
            0 => self.x,
            1 => self.y,
            _ => self.z,
        }
    }
}

impl From<[i32; 3]> for Coord {
    fn from([x, y, z]: [i32; 3]) -> Self {
        Coord { x, y, z }
    }
}

impl From<Coord> for [i32; 3] {
    fn from(c: Coord) -> Self {
        [c.x, c.y, c.z]
    }
}

impl fmt::Display for Coord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{},{})", self.x, self.y, self.z)
    }
}

/// Box extents in voxels along x, y and z.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "[i64; 3]", into = "[i64; 3]")]
pub struct BoxDims {
    pub a: i32,
    pub b: i32,
    pub c: i32,
}

impl BoxDims {
    pub fn new(a: i32, b: i32, c: i32) -> Result<Self, VoxelError> {
        if a < 1 || b < 1 || c < 1 {
            return Err(VoxelError::BadBox(a as i64, b as i64, c as i64));
        }
        Ok(BoxDims { a, b, c })
    }

    pub fn volume(&self) -> usize {
        (self.a * self.b * self.c) as usize
    }

    pub fn extent(&self, axis: usize) -> i32 {
        match axis {
            0 => self.a,
            1 => self.b,
            _ => self.c,
        }
    }

    pub fn contains(&self, p: Coord) -> bool {
        (0..self.a).contains(&p.x) && (0..self.b).contains(&p.y) && (0..self.c).contains(&p.z)
    }

    /// Row-major voxel index (x fastest).
    pub fn index(&self, p: Coord) -> usize {
        (p.x + self.a * (p.y + self.b * p.z)) as usize
    }

    pub fn coord(&self, idx: usize) -> Coord {
        let idx = idx as i32;
        Coord::new(idx % self.a, (idx / self.a) % self.b, idx / (self.a * self.b))
    }

    pub fn cells(&self) -> impl Iterator<Item = Coord> + '_ {
        (0..self.volume()).map(|i| self.coord(i))
    }

    pub fn sorted_extents(&self) -> [i32; 3] {
        let mut e = [self.a, self.b, self.c];
        e.sort_unstable();
        e
    }
}

impl TryFrom<[i64; 3]> for BoxDims {
    type Error = VoxelError;
    fn try_from([a, b, c]: [i64; 3]) -> Result<Self, Self::Error> {
        let fits = |v: i64| (1..=i32::MAX as i64).contains(&v);
        if !(fits(a) && fits(b) && fits(c)) {
            return Err(VoxelError::BadBox(a, b, c));
        }
        BoxDims::new(a as i32, b as i32, c as i32)
    }
}

impl From<BoxDims> for [i64; 3] {
    fn from(d: BoxDims) -> Self {
        [d.a as i64, d.b as i64, d.c as i64]
    }
}

impl std::str::FromStr for BoxDims {
    type Err = VoxelError;

    /// Parses `AxBxC`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<i32> = s
            .split(['x', 'X'])
            .map(|p| p.trim().parse::<i32>())
            .collect::<Result<_, _>>()
            .map_err(|_| VoxelError::BoxSyntax(s.to_string()))?;
        match parts.as_slice() {
            [a, b, c] => BoxDims::new(*a, *b, *c),
            _ => Err(VoxelError::BoxSyntax(s.to_string())),
        }
    }
}

impl fmt::Display for BoxDims {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}", self.a, self.b, self.c)
    }
}

/// A non-empty set of voxels, stored sorted and duplicate-free.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<Coord>", into = "Vec<Coord>")]
pub struct Shape {
    cells: Vec<Coord>,
}

impl Shape {
    pub fn new(cells: impl IntoIterator<Item = Coord>) -> Result<Self, VoxelError> {
        let mut cells: Vec<Coord> = cells.into_iter().collect();
        cells.sort_unstable();
        cells.dedup();
        if cells.is_empty() {
            return Err(VoxelError::EmptyShape);
        }
        Ok(Shape { cells })
    }

    pub fn from_triples(triples: &[(i32, i32, i32)]) -> Result<Self, VoxelError> {
        Shape::new(triples.iter().map(|&(x, y, z)| Coord::new(x, y, z)))
    }

    /// Axis-aligned solid block with the given extents, anchored at the origin.
    pub fn cuboid(dx: i32, dy: i32, dz: i32) -> Result<Self, VoxelError> {
        let mut cells = Vec::new();
        for x in 0..dx {
            for y in 0..dy {
                for z in 0..dz {
                    cells.push(Coord::new(x, y, z));
                }
            }
        }
        Shape::new(cells)
    }

    pub fn cells(&self) -> &[Coord] {
        &self.cells
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn contains(&self, c: &Coord) -> bool {
        self.cells.binary_search(c).is_ok()
    }

    pub fn min_corner(&self) -> Coord {
        let mut m = self.cells[0];
        for c in &self.cells[1..] {
            m.x = m.x.min(c.x);
            m.y = m.y.min(c.y);
            m.z = m.z.min(c.z);
        }
        m
    }

    pub fn max_corner(&self) -> Coord {
        let mut m = self.cells[0];
        for c in &self.cells[1..] {
            m.x = m.x.max(c.x);
            m.y = m.y.max(c.y);
            m.z = m.z.max(c.z);
        }
        m
    }

    /// Bounding box size along each axis.
    pub fn extents(&self) -> [i32; 3] {
        let lo = self.min_corner();
        let hi = self.max_corner();
        [hi.x - lo.x + 1, hi.y - lo.y + 1, hi.z - lo.z + 1]
    }

    pub fn translate(&self, by: Coord) -> Shape {
        // Translation preserves order, no re-sort needed.
        Shape {
            cells: self.cells.iter().map(|c| c.offset(by)).collect(),
        }
    }

    pub fn into_cells(self) -> Vec<Coord> {
        self.cells
    }
}

impl TryFrom<Vec<Coord>> for Shape {
    type Error = VoxelError;
    fn try_from(v: Vec<Coord>) -> Result<Self, Self::Error> {
        Shape::new(v)
    }
}

impl From<Shape> for Vec<Coord> {
    fn from(s: Shape) -> Self {
        s.cells
    }
}

/// One of the 24 proper rotations of the cube.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Rotation {
    index: usize,
    matrix: [[i32; 3]; 3],
}

const IDENTITY: [[i32; 3]; 3] = [[1, 0, 0], [0, 1, 0], [0, 0, 1]];
// Quarter turns (counter-clockwise looking down the positive axis).
const QUARTER_X: [[i32; 3]; 3] = [[1, 0, 0], [0, 0, -1], [0, 1, 0]];
const QUARTER_Y: [[i32; 3]; 3] = [[0, 0, 1], [0, 1, 0], [-1, 0, 0]];
const QUARTER_Z: [[i32; 3]; 3] = [[0, -1, 0], [1, 0, 0], [0, 0, 1]];

fn mat_mul(a: &[[i32; 3]; 3], b: &[[i32; 3]; 3]) -> [[i32; 3]; 3] {
    let mut out = [[0; 3]; 3];
    for (i, row) in out.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = (0..3).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    out
}

/// Fixed enumeration: identity first, then breadth-first closure where each
/// frontier matrix `m` is extended by `g * m` for `g` in (quarter-x,
/// quarter-y, quarter-z), new matrices appended in discovery order.
fn rotation_table() -> &'static [Rotation; 24] {
    static TABLE: OnceLock<[Rotation; 24]> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut found = vec![IDENTITY];
        let mut queue = VecDeque::from([IDENTITY]);
        while let Some(m) = queue.pop_front() {
            for g in [QUARTER_X, QUARTER_Y, QUARTER_Z] {
                let next = mat_mul(&g, &m);
                if !found.contains(&next) {
                    found.push(next);
                    queue.push_back(next);
                }
            }
        }
        assert_eq!(found.len(), 24);
        std::array::from_fn(|i| Rotation {
            index: i,
            matrix: found[i],
        })
    })
}

impl Rotation {
    pub const COUNT: usize = 24;

    pub fn all() -> &'static [Rotation; 24] {
        rotation_table()
    }

    pub fn identity() -> Rotation {
        rotation_table()[0]
    }

    pub fn from_index(index: usize) -> Result<Rotation, VoxelError> {
        rotation_table()
            .get(index)
            .copied()
            .ok_or(VoxelError::BadRotation(index))
    }

    pub fn index(&self) -> usize {
        self.index
    }

    pub fn matrix(&self) -> [[i32; 3]; 3] {
        self.matrix
    }

    pub fn apply(&self, c: Coord) -> Coord {
        let m = &self.matrix;
        Coord::new(
            m[0][0] * c.x + m[0][1] * c.y + m[0][2] * c.z,
            m[1][0] * c.x + m[1][1] * c.y + m[1][2] * c.z,
            m[2][0] * c.x + m[2][1] * c.y + m[2][2] * c.z,
        )
    }

    /// `self ∘ first`: apply `first`, then `self`.
    pub fn after(&self, first: &Rotation) -> Rotation {
        let m = mat_mul(&self.matrix, &first.matrix);
        *rotation_table()
            .iter()
            .find(|r| r.matrix == m)
            .expect("rotation group is closed")
    }

    pub fn inverse(&self) -> Rotation {
        let m = self.matrix;
        let t = [
            [m[0][0], m[1][0], m[2][0]],
            [m[0][1], m[1][1], m[2][1]],
            [m[0][2], m[1][2], m[2][2]],
        ];
        *rotation_table()
            .iter()
            .find(|r| r.matrix == t)
            .expect("rotation group is closed")
    }

    pub fn determinant(&self) -> i32 {
        let m = &self.matrix;
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    }
}

/// Translate so the minimum coordinate along each axis is zero.
pub fn normalize(s: &Shape) -> Shape {
    let lo = s.min_corner();
    s.translate(Coord::new(-lo.x, -lo.y, -lo.z))
}

/// Apply `r` to every cell. The result is not normalized.
pub fn rotate(s: &Shape, r: &Rotation) -> Shape {
    let mut cells: Vec<Coord> = s.cells.iter().map(|&c| r.apply(c)).collect();
    cells.sort_unstable();
    Shape { cells }
}

/// Canonical representative plus the lowest rotation index that produces it,
/// so that `normalize(rotate(s, r)) == canonical`.
pub fn canonical_with_rotation(s: &Shape) -> (Shape, Rotation) {
    let mut best: Option<(Shape, Rotation)> = None;
    for r in Rotation::all() {
        let img = normalize(&rotate(s, r));
        match &best {
            Some((b, _)) if img.cells >= b.cells => {}
            _ => best = Some((img, *r)),
        }
    }
    best.expect("24 rotations")
}

/// Lexicographically smallest sorted cell list among the normalized images
/// of `s` under all 24 rotations.
pub fn canonical_form(s: &Shape) -> Shape {
    canonical_with_rotation(s).0
}

/// 6-connectivity of the cell set.
pub fn is_connected(s: &Shape) -> bool {
    cells_connected(s.cells())
}

pub(crate) fn cells_connected(cells: &[Coord]) -> bool {
    if cells.is_empty() {
        return false;
    }
    let set: HashSet<Coord> = cells.iter().copied().collect();
    let mut seen = HashSet::with_capacity(set.len());
    let mut stack = vec![cells[0]];
    seen.insert(cells[0]);
    while let Some(c) = stack.pop() {
        for n in c.neighbors() {
            if set.contains(&n) && seen.insert(n) {
                stack.push(n);
            }
        }
    }
    seen.len() == set.len()
}

/// True iff some axis-aligned planar slice contains a completely filled
/// 2×3 or 3×2 rectangle.
pub fn has_full_2x3_face(s: &Shape) -> bool {
    cells_have_full_2x3_face(s.cells())
}

pub(crate) fn cells_have_full_2x3_face(cells: &[Coord]) -> bool {
    if cells.len() < 6 {
        return false;
    }
    let set: HashSet<Coord> = cells.iter().copied().collect();
    for fixed in 0..3 {
        let (u, v) = match fixed {
            0 => (1, 2),
            1 => (0, 2),
            _ => (0, 1),
        };
        // Every full window has some cell as its minimum corner, so only
        // windows anchored at existing cells need checking.
        for &corner in cells {
            for (du, dv) in [(2, 3), (3, 2)] {
                let full = (0..du).all(|i| {
                    (0..dv).all(|j| {
                        let mut p = [corner.x, corner.y, corner.z];
                        p[u] += i;
                        p[v] += j;
                        set.contains(&Coord::from(p))
                    })
                });
                if full {
                    return true;
                }
            }
        }
    }
    false
}

/// Hex digest identifying a multiset of shapes up to rotation of each member.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Signature(String);

impl Signature {
    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn from_hex(s: &str) -> Option<Signature> {
        let ok = s.len() == 64
            && s.bytes()
                .all(|b| b.is_ascii_digit() || (b'a'..=b'f').contains(&b));
        ok.then(|| Signature(s.to_string()))
    }
}

impl fmt::Display for Signature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Text hashed by [`puzzle_signature`]: canonical shapes sorted ascending,
/// each written as `x,y,z` triples joined by `;`, shapes joined by `|`.
pub fn signature_preimage(pieces: &[Shape]) -> Result<String, VoxelError> {
    if pieces.is_empty() {
        return Err(VoxelError::NoPieces);
    }
    let mut canon: Vec<Shape> = pieces.iter().map(canonical_form).collect();
    canon.sort();
    let text = canon
        .iter()
        .map(|s| {
            s.cells()
                .iter()
                .map(|c| format!("{},{},{}", c.x, c.y, c.z))
                .collect::<Vec<_>>()
                .join(";")
        })
        .collect::<Vec<_>>()
        .join("|");
    Ok(text)
}

/// SHA-256 over [`signature_preimage`], lowercase hex.
pub fn puzzle_signature(pieces: &[Shape]) -> Result<Signature, VoxelError> {
    let text = signature_preimage(pieces)?;
    Ok(Signature(hex::encode(Sha256::digest(text.as_bytes()))))
}

/// All distinct canonical shapes of exactly `n` cells, grown cell by cell.
pub fn enumerate_polycubes(n: usize) -> Vec<Shape> {
    let mut level: BTreeSet<Shape> = BTreeSet::new();
    if n == 0 {
        return Vec::new();
    }
    level.insert(Shape::new([Coord::ORIGIN]).unwrap());
    for _ in 1..n {
        let mut next = BTreeSet::new();
        for s in &level {
            for c in s.cells() {
                for nb in c.neighbors() {
                    if s.contains(&nb) {
                        continue;
                    }
                    let grown = Shape::new(s.cells().iter().copied().chain([nb])).unwrap();
                    next.insert(canonical_form(&grown));
                }
            }
        }
        level = next;
    }
    level.into_iter().collect()
}
