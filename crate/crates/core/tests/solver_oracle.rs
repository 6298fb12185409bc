mod common;

use std::time::Instant;

use forge_core::cover::{build_cover_instance, solve, verify_cover, SolveStatus, DEFAULT_NODE_BUDGET};
use forge_core::voxel::Shape;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{naive_solvable, random_partition, random_polycube, small_boxes};

#[test]
fn dlx_agrees_with_naive_backtracking() {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let boxes = small_boxes();
    let (mut sat, mut unsat) = (0, 0);
    for case in 0..100 {
        let dims = boxes[rng.random_range(0..boxes.len())];
        let v = dims.volume();
        let pieces: Vec<Shape> = if case % 2 == 0 {
            let k = rng.random_range(2..=(v / 2).clamp(2, 4));
            random_partition(dims, k, &mut rng)
        } else {
            let mut left = v;
            let mut ps = Vec::new();
            while left > 0 {
                let n = rng.random_range(1..=left.min(5));
                ps.push(random_polycube(n, &mut rng));
                left -= n;
            }
            ps
        };
        let oracle = naive_solvable(&pieces, dims);
        let ci = build_cover_instance(&pieces, dims).unwrap();
        let res = solve(&ci, DEFAULT_NODE_BUDGET).unwrap();
        assert_ne!(res.status, SolveStatus::BudgetExhausted);
        let dlx = res.status == SolveStatus::Solved;
        assert_eq!(dlx, oracle, "case {case}: box {dims}, pieces {pieces:?}");
        if dlx {
            assert!(verify_cover(dims, pieces.len(), &res.solution));
            sat += 1;
        } else {
            unsat += 1;
        }
    }
    assert!(
        sat > 0 && unsat > 0,
        "want both verdicts, got {sat} sat / {unsat} unsat"
    );
    assert!(started.elapsed().as_secs() < 60);
}
