use chunked_ode::linalg::{
    power_of_two_partitions, solve_dense_oracle, solve_pcr_with_stats, BatchedChunkVector,
    BlockBidiagonalSystem, LinearSolver,
};
use ndarray::{Array3, Array4};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_system(
    n_chunk: usize,
    n_batch: usize,
    n_size: usize,
    seed: u64,
) -> (BlockBidiagonalSystem, BatchedChunkVector) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut diag = Array4::from_shape_fn((n_chunk, n_batch, n_size, n_size), |_| {
        rng.gen_range(-1.0..1.0)
    });
    for k in 0..n_chunk {
        for b in 0..n_batch {
            for i in 0..n_size {
                diag[[k, b, i, i]] += 2.0 * n_size as f64 + 1.0;
            }
        }
    }
    let offdiag = Array4::from_shape_fn((n_chunk - 1, n_batch, n_size, n_size), |_| {
        rng.gen_range(-1.0..1.0)
    });
    let rhs = Array3::from_shape_fn((n_chunk, n_batch, n_size), |_| rng.gen_range(-1.0..1.0));
    (
        BlockBidiagonalSystem::new(diag, offdiag).unwrap(),
        rhs.into(),
    )
}

fn rel_diff(a: &BatchedChunkVector, b: &BatchedChunkVector) -> f64 {
    let diff = (a.data() - b.data())
        .iter()
        .fold(0.0_f64, |m, v| m.max(v.abs()));
    diff / b.max_abs().max(f64::MIN_POSITIVE)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn all_solvers_agree_with_dense(n_chunk in 1usize..=33, n_batch in 1usize..=3, n_size in 1usize..=5, seed in any::<u64>(), n_switch in 0usize..=6) {
        let (sys, rhs) = random_system(n_chunk, n_batch, n_size, seed);
        let dense = solve_dense_oracle(&sys, &rhs).unwrap();
        for solver in [LinearSolver::Thomas, LinearSolver::Pcr, LinearSolver::Hybrid { n_switch }] {
            let x = solver.solve(&sys, &rhs).unwrap();
            prop_assert!(rel_diff(&x, &dense) <= 1e-9, "{solver:?} n_chunk={n_chunk}");
        }
    }
}

#[test]
fn pcr_sweeps_equal_sum_of_exponents() {
    for n_chunk in 1..=33usize {
        let (sys, rhs) = random_system(n_chunk, 2, 2, n_chunk as u64);
        let (_, stats) = solve_pcr_with_stats(&sys, &rhs).unwrap();
        let expected: usize = power_of_two_partitions(n_chunk)
            .iter()
            .map(|p| p.trailing_zeros() as usize)
            .sum();
        assert_eq!(stats.sweeps, expected, "n_chunk = {n_chunk}");
    }
    assert_eq!(power_of_two_partitions(7), vec![4, 2, 1]);
}
