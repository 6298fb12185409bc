mod common;

use std::collections::HashSet;

use forge_core::assembly::{
    exhaustive_linear_order, extract_linear_assembly, removable, simulate_insertion, Direction, RemovalMode,
};
use forge_core::voxel::{BoxDims, Coord};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::random_partition;

/// Removability by sweeping the piece one unit at a time until it is
/// entirely outside the box.
fn sweep_oracle(
    piece: &[Coord],
    others: &HashSet<Coord>,
    d: Direction,
    dims: BoxDims,
    mode: RemovalMode,
) -> bool {
    let s = d.step();
    let limit = match mode {
        RemovalMode::OneStep => 1,
        RemovalMode::FullSlide => 2 * (dims.a + dims.b + dims.c),
    };
    (1..=limit).all(|k| {
        piece
            .iter()
            .all(|c| !others.contains(&Coord::new(c.x + s.x * k, c.y + s.y * k, c.z + s.z * k)))
    })
}

#[test]
fn c_hook_blocks_lateral_slides() {
    // A C-shaped hook in a 3x1x3 box wraps a 1-cell core at (1,0,1) on
    // three sides; the open side is +x.
    let dims = BoxDims::new(3, 1, 3).unwrap();
    let hook: HashSet<Coord> = [
        (0, 0, 0),
        (1, 0, 0),
        (2, 0, 0),
        (0, 0, 1),
        (0, 0, 2),
        (1, 0, 2),
        (2, 0, 2),
    ]
    .into_iter()
    .map(|(x, y, z)| Coord::new(x, y, z))
    .collect();
    let core = [Coord::new(1, 0, 1)];
    let free: Vec<Direction> = Direction::ALL
        .into_iter()
        .filter(|&d| removable(&core, &hook, d, dims, RemovalMode::FullSlide))
        .collect();
    assert_eq!(free, vec![Direction::PosX, Direction::PosY, Direction::NegY]);
    for d in Direction::ALL {
        for mode in [RemovalMode::OneStep, RemovalMode::FullSlide] {
            assert_eq!(
                removable(&core, &hook, d, dims, mode),
                sweep_oracle(&core, &hook, d, dims, mode)
            );
        }
    }
}

#[test]
fn removability_matches_sweep_and_full_slide_implies_one_step() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..300 {
        let dims = BoxDims::new(
            rng.random_range(1..=4),
            rng.random_range(1..=4),
            rng.random_range(2..=4),
        )
        .unwrap();
        let k = rng.random_range(2..=dims.volume().min(6));
        let parts = random_partition(dims, k, &mut rng);
        let i = rng.random_range(0..k);
        let piece: Vec<Coord> = parts[i].cells().to_vec();
        let others: HashSet<Coord> = parts
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != i)
            .filter(|_| rng.random_bool(0.7))
            .flat_map(|(_, p)| p.cells().to_vec())
            .collect();
        for d in Direction::ALL {
            let full = removable(&piece, &others, d, dims, RemovalMode::FullSlide);
            let one = removable(&piece, &others, d, dims, RemovalMode::OneStep);
            assert_eq!(
                full,
                sweep_oracle(&piece, &others, d, dims, RemovalMode::FullSlide)
            );
            assert_eq!(one, sweep_oracle(&piece, &others, d, dims, RemovalMode::OneStep));
            assert!(!full || one);
        }
    }
}

#[test]
fn extracted_plans_replay_and_agree_with_exhaustive_search() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut linear = 0;
    for _ in 0..200 {
        let dims = BoxDims::new(
            rng.random_range(2..=3),
            rng.random_range(2..=4),
            rng.random_range(3..=4),
        )
        .unwrap();
        let k = rng.random_range(3..=8);
        let placed: Vec<Vec<Coord>> = random_partition(dims, k, &mut rng)
            .into_iter()
            .map(|s| s.cells().to_vec())
            .collect();
        for mode in [RemovalMode::FullSlide, RemovalMode::OneStep] {
            let greedy = extract_linear_assembly(&placed, dims, mode);
            let exhaustive = exhaustive_linear_order(&placed, dims, mode);
            // Removing a piece never blocks another, so greedy is complete.
            assert_eq!(greedy.is_ok(), exhaustive.is_some());
            if let Ok(plan) = &greedy {
                assert!(simulate_insertion(&placed, plan, dims));
                linear += 1;
            }
            if let Some(plan) = &exhaustive {
                assert!(simulate_insertion(&placed, plan, dims));
            }
        }
    }
    assert!(linear > 0);
}

#[test]
fn caged_core_has_no_linear_assembly() {
    let dims = BoxDims::new(3, 3, 3).unwrap();
    let core = Coord::new(1, 1, 1);
    let shell: Vec<Coord> = dims.cells().filter(|&c| c != core).collect();
    let placed = vec![shell, vec![core]];
    for mode in [RemovalMode::FullSlide, RemovalMode::OneStep] {
        let stuck = extract_linear_assembly(&placed, dims, mode).unwrap_err();
        assert_eq!(stuck.remaining, vec![0, 1]);
        assert!(exhaustive_linear_order(&placed, dims, mode).is_none());
    }
}
