use forge_core::eval::metrics::{
    avg_steps_solved, dist2opt, norm_dist, normalized_overhead, overhead, Outcome,
};
use forge_core::eval::select::{best_of_k, FirstSample, Sample, VerifiedSelector};

fn solved(steps: u32, minimal_steps: u32) -> Outcome {
    Outcome {
        solved: true,
        steps,
        minimal_steps,
        ..Default::default()
    }
}

#[test]
fn worked_examples() {
    assert_eq!(avg_steps_solved(&[solved(6, 3)]), Some(6.0));
    assert_eq!(overhead(5, 3), 2);
    assert_eq!(dist2opt(&[solved(5, 3)]), Some(2.0));
    assert_eq!(normalized_overhead(15, 10), 0.5);
    assert_eq!(norm_dist(&[solved(15, 10)]), Some(0.5));
    assert_eq!(normalized_overhead(4, 3), 1.0 / 3.0);
    assert_eq!(norm_dist(&[solved(4, 3)]), Some(1.0 / 3.0));
}

#[test]
fn selection_examples() {
    let s = |b: bool| Sample { solved: b, steps: 3 };
    let one = vec![vec![s(false), s(true), s(false), s(false)]];
    let r = best_of_k(&one, 4, &VerifiedSelector).unwrap();
    assert_eq!((r.pass_at_k, r.avg_at_k, r.selected), (1.0, 0.25, 1.0));
    let same = vec![vec![s(true); 4], vec![s(false); 4]];
    let r = best_of_k(&same, 4, &VerifiedSelector).unwrap();
    assert_eq!(r.pass_at_k, r.avg_at_k);
    let first = best_of_k(&one, 4, &FirstSample).unwrap();
    let p1 = best_of_k(&one, 1, &VerifiedSelector).unwrap();
    assert_eq!(first.selected, p1.pass_at_k);
    assert_eq!(p1.avg_at_k, p1.pass_at_k);
}
