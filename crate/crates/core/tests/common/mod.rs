#![allow(dead_code)]

use std::collections::HashSet;

use forge_core::voxel::{BoxDims, Coord, Shape};
use rand::seq::IndexedRandom;
use rand::Rng;

/// All 24 proper rotations as signed permutation matrices, built without
/// the library's generator walk.
pub fn rotation_matrices() -> Vec<[[i32; 3]; 3]> {
    let perms = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
    let mut out = Vec::new();
    for p in perms {
        for signs in 0..8 {
            let mut m = [[0; 3]; 3];
            for (row, &col) in p.iter().enumerate() {
                m[row][col] = if signs >> row & 1 == 1 { -1 } else { 1 };
            }
            if det(&m) == 1 {
                out.push(m);
            }
        }
    }
    out
}

pub fn det(m: &[[i32; 3]; 3]) -> i32 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

pub fn apply(m: &[[i32; 3]; 3], c: Coord) -> Coord {
    let v = [c.x, c.y, c.z];
    let r: Vec<i32> = (0..3).map(|i| (0..3).map(|j| m[i][j] * v[j]).sum()).collect();
    Coord::new(r[0], r[1], r[2])
}

pub fn normalized(cells: &[Coord]) -> Vec<Coord> {
    let mx = cells.iter().map(|c| c.x).min().unwrap();
    let my = cells.iter().map(|c| c.y).min().unwrap();
    let mz = cells.iter().map(|c| c.z).min().unwrap();
    let mut v: Vec<Coord> = cells
        .iter()
        .map(|c| Coord::new(c.x - mx, c.y - my, c.z - mz))
        .collect();
    v.sort();
    v.dedup();
    v
}

/// Distinct normalized orientations of a cell set.
pub fn orientations(cells: &[Coord]) -> Vec<Vec<Coord>> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for m in rotation_matrices() {
        let o = normalized(&cells.iter().map(|&c| apply(&m, c)).collect::<Vec<_>>());
        if seen.insert(o.clone()) {
            out.push(o);
        }
    }
    out
}

/// Random connected polycube of `n` cells grown inside a cube of side `n`.
pub fn random_polycube(n: usize, rng: &mut impl Rng) -> Shape {
    let mut cells = vec![Coord::ORIGIN];
    let mut set: HashSet<Coord> = cells.iter().copied().collect();
    while cells.len() < n {
        let base = *cells.choose(rng).unwrap();
        let nb: Vec<Coord> = base.neighbors().filter(|c| !set.contains(c)).collect();
        if let Some(&c) = nb.choose(rng) {
            set.insert(c);
            cells.push(c);
        }
    }
    Shape::new(cells).unwrap()
}

/// Random partition of `dims` into connected pieces by multi-seed growth
/// (no size constraints); always succeeds.
pub fn random_partition(dims: BoxDims, pieces: usize, rng: &mut impl Rng) -> Vec<Shape> {
    let all: Vec<Coord> = dims.cells().collect();
    let mut owner: Vec<Option<usize>> = vec![None; all.len()];
    let seeds: Vec<usize> = rand::seq::index::sample(rng, all.len(), pieces).into_vec();
    for (i, &s) in seeds.iter().enumerate() {
        owner[s] = Some(i);
    }
    while owner.iter().any(Option::is_none) {
        let frontier: Vec<(usize, usize)> = (0..all.len())
            .filter(|&i| owner[i].is_none())
            .filter_map(|i| {
                all[i]
                    .neighbors()
                    .filter(|n| dims.contains(*n))
                    .find_map(|n| owner[dims.index(n)])
                    .map(|p| (i, p))
            })
            .collect();
        let &(i, p) = frontier.choose(rng).unwrap();
        owner[i] = Some(p);
    }
    (0..pieces)
        .map(|p| Shape::new((0..all.len()).filter(|&i| owner[i] == Some(p)).map(|i| all[i])).unwrap())
        .collect()
}

/// Plain backtracking: fill the first empty cell (x fastest) with the
/// scan-minimal cell of some unused piece orientation.
pub fn naive_solvable(pieces: &[Shape], dims: BoxDims) -> bool {
    let orients: Vec<Vec<Vec<Coord>>> = pieces.iter().map(|p| orientations(p.cells())).collect();
    let mut grid = vec![false; dims.volume()];
    let mut used = vec![false; pieces.len()];
    fn key(c: &Coord) -> (i32, i32, i32) {
        (c.z, c.y, c.x)
    }
    fn go(dims: BoxDims, orients: &[Vec<Vec<Coord>>], grid: &mut [bool], used: &mut [bool]) -> bool {
        let Some(first) = grid.iter().position(|f| !f) else {
            return used.iter().all(|&u| u);
        };
        let target = dims.coord(first);
        for p in 0..orients.len() {
            if used[p] {
                continue;
            }
            for o in &orients[p] {
                let lead = *o.iter().min_by_key(|c| key(c)).unwrap();
                let shift = Coord::new(target.x - lead.x, target.y - lead.y, target.z - lead.z);
                let cells: Vec<Coord> = o.iter().map(|c| c.offset(shift)).collect();
                if cells.iter().all(|&c| dims.contains(c) && !grid[dims.index(c)]) {
                    for &c in &cells {
                        grid[dims.index(c)] = true;
                    }
                    used[p] = true;
                    if go(dims, orients, grid, used) {
                        return true;
                    }
                    used[p] = false;
                    for &c in &cells {
                        grid[dims.index(c)] = false;
                    }
                }
            }
        }
        false
    }
    go(dims, &orients, &mut grid, &mut used)
}

pub fn small_boxes() -> Vec<BoxDims> {
    let mut out = Vec::new();
    for a in 1..=4 {
        for b in 1..=4 {
            for c in 1..=4 {
                let v = a * b * c;
                if (4..=12).contains(&v) {
                    out.push(BoxDims::new(a, b, c).unwrap());
                }
            }
        }
    }
    out
}
