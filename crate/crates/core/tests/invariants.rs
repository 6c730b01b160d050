use proptest::prelude::*;

use psrkit::derive::pomdp_to_psr;
use psrkit::examples::{random_markov, random_pomdp};
use psrkit::sequence::enumerate_sequences;
use psrkit::sysdyn::build_matrix;
use psrkit::DynamicalModel;

/// Alphabet sizes used by the sweeps. Depth-4 matrices over nine steps run
/// to tens of millions of entries, so (3, 3) is swept at depth 3 only.
const SMALL_ALPHABETS: [(usize, usize); 5] = [(1, 2), (2, 1), (2, 2), (2, 3), (3, 2)];

fn max_deviation(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn predict_all_matches_predict<M: DynamicalModel>(m: &M, depth: usize) {
    let tests = enumerate_sequences(m.alphabet(), depth, false);
    let all = m.predict_all(depth);
    for (t, p) in tests.iter().zip(&all) {
        assert!((m.predict_raw(t) - p).abs() < 1e-12, "{}", m.alphabet().render(t));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn pomdp_rank_bounded_by_states(k in 1usize..=6, alpha in 0usize..5, seed in any::<u64>()) {
        let (na, no) = SMALL_ALPHABETS[alpha];
        let m = random_pomdp(k, na, no, seed);
        for d in 1..=3 {
            prop_assert!(build_matrix(&m, d, d).numerical_rank() <= k);
        }
    }

    #[test]
    fn markov_rank_bounded_by_suffixes(n in 1usize..=2, seed in any::<u64>()) {
        let m = random_markov(n, 2, 2, seed);
        let bound = 4usize.pow(n as u32);
        for d in 1..=4 {
            prop_assert!(build_matrix(&m, d, d).numerical_rank() <= bound);
        }
    }

    #[test]
    fn psr_rank_bounded_by_core_tests(k in 1usize..=5, seed in any::<u64>()) {
        let psr = pomdp_to_psr(&random_pomdp(k, 2, 2, seed), None).unwrap();
        let rank = build_matrix(&psr, 3, 3).numerical_rank();
        prop_assert!(rank <= psr.num_core_tests());
    }

    #[test]
    fn rank_monotone_in_both_depths(k in 2usize..=5, seed in any::<u64>()) {
        let m = random_pomdp(k, 2, 2, seed);
        let mut grid = [[0usize; 4]; 4];
        for (h, row) in grid.iter_mut().enumerate() {
            for (t, cell) in row.iter_mut().enumerate() {
                *cell = build_matrix(&m, h + 1, t + 1).numerical_rank();
            }
        }
        for h in 0..4 {
            for t in 0..4 {
                if h + 1 < 4 {
                    prop_assert!(grid[h][t] <= grid[h + 1][t]);
                }
                if t + 1 < 4 {
                    prop_assert!(grid[h][t] <= grid[h][t + 1]);
                }
            }
        }
    }

    #[test]
    fn batched_predictions_agree(k in 1usize..=5, seed in any::<u64>()) {
        let m = random_pomdp(k, 2, 2, seed);
        predict_all_matches_predict(&m, 4);
        predict_all_matches_predict(&random_markov(2, 2, 2, seed), 4);
        predict_all_matches_predict(&pomdp_to_psr(&m, None).unwrap(), 4);
    }

    #[test]
    fn matrix_rows_are_conditional_predictions(k in 1usize..=4, seed in any::<u64>()) {
        let m = random_pomdp(k, 2, 2, seed);
        let d = build_matrix(&m, 2, 2);
        for (i, h) in d.row_histories().iter().enumerate() {
            let mut c = m.clone();
            let p = c.replay(h).unwrap();
            prop_assert!((p - d.history_probs()[i]).abs() < 1e-12);
            let row: Vec<f64> = d.entries().row(i).iter().copied().collect();
            prop_assert!(max_deviation(&row, &c.predict_all(2)) < 1e-15);
        }
    }
}

#[test]
fn validity_on_random_pomdps() {
    for seed in 0..50u64 {
        let (na, no) = SMALL_ALPHABETS[seed as usize % SMALL_ALPHABETS.len()];
        let k = 1 + seed as usize % 6;
        let m = random_pomdp(k, na, no, seed);
        let report = build_matrix(&m, 4, 4).check_validity();
        assert!(report.is_valid(), "seed {seed}: {}", report.violations[0]);
        let wide = random_pomdp(k, 3, 3, seed);
        assert!(build_matrix(&wide, 3, 3).check_validity().is_valid(), "seed {seed}, 3x3");
    }
}

#[test]
fn validity_on_random_markov_models() {
    for seed in 0..50u64 {
        let (na, no) = SMALL_ALPHABETS[seed as usize % SMALL_ALPHABETS.len()];
        let n = 1 + seed as usize % 2;
        let m = random_markov(n, na, no, seed);
        let report = build_matrix(&m, 4, 4).check_validity();
        assert!(report.is_valid(), "seed {seed}: {}", report.violations[0]);
    }
}

#[test]
fn validity_on_derived_psrs() {
    for seed in 0..10u64 {
        let psr = pomdp_to_psr(&random_pomdp(4, 2, 2, seed), None).unwrap();
        assert!(build_matrix(&psr, 4, 4).check_validity().is_valid(), "seed {seed}");
    }
}
