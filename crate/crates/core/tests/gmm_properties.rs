use mantra_core::gmm::{bic, fit_em, posteriors, select_model, FitOptions};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn draws(seed: u64, n: usize, parts: &[(f64, f64, f64)]) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let mut u: f64 = rng.random();
            let mut pick = parts.len() - 1;
            for (i, p) in parts.iter().enumerate() {
                if u < p.0 {
                    pick = i;
                    break;
                }
                u -= p.0;
            }
            Normal::new(parts[pick].1, parts[pick].2)
                .unwrap()
                .sample(&mut rng)
        })
        .collect()
}

#[test]
fn em_log_likelihood_never_decreases() {
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.random_range(30..300);
        let parts: Vec<(f64, f64, f64)> = (0..3)
            .map(|_| {
                (
                    1.0 / 3.0,
                    rng.random_range(-2.0..2.0),
                    rng.random_range(0.05..1.5),
                )
            })
            .collect();
        let xs = draws(seed, n, &parts);
        for k in 2..=4 {
            let m = fit_em(&xs, k, &FitOptions::default()).unwrap();
            for (i, w) in m.trace.windows(2).enumerate() {
                assert!(
                    w[1] - w[0] >= -1e-9,
                    "seed {seed}, k {k}, step {i}: {} -> {}",
                    w[0],
                    w[1]
                );
            }
            assert!((m.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(m.means.windows(2).all(|p| p[0] <= p[1]));
        }
    }
}

#[test]
fn bic_prefers_one_component_on_unimodal_draws() {
    let hits = (0..20u64)
        .filter(|&s| {
            select_model(
                &draws(100 + s, 1000, &[(1.0, 1.0, 0.2)]),
                3,
                &FitOptions::default(),
            )
            .unwrap()
            .k() == 1
        })
        .count();
    assert!(hits >= 19, "K=1 in {hits}/20");
}

#[test]
fn bic_finds_two_components_on_the_bimodal_generator() {
    let parts = [(0.7, 0.3, 0.05), (0.3, 2.0, 0.3)];
    let hits = (0..20u64)
        .filter(|&s| {
            select_model(&draws(200 + s, 2000, &parts), 3, &FitOptions::default())
                .unwrap()
                .k()
                == 2
        })
        .count();
    assert!(hits >= 19, "K=2 in {hits}/20");
}

#[test]
fn selected_model_has_the_lowest_bic() {
    let xs = draws(5, 500, &[(0.5, 0.0, 0.3), (0.5, 3.0, 0.3)]);
    let sel = select_model(&xs, 4, &FitOptions::default()).unwrap();
    let best = sel.bics.iter().cloned().fold(f64::INFINITY, f64::min);
    assert_eq!(sel.bics[sel.k() - 1], best);
    assert_eq!(bic(&sel.model, xs.len()), best);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn shifting_the_data_shifts_the_means(seed in 0u64..1000, shift in -50.0f64..50.0) {
        let xs = draws(seed, 200, &[(0.6, 0.0, 0.4), (0.4, 2.5, 0.4)]);
        let moved: Vec<f64> = xs.iter().map(|x| x + shift).collect();
        let a = fit_em(&xs, 2, &FitOptions::default()).unwrap();
        let b = fit_em(&moved, 2, &FitOptions::default()).unwrap();
        for j in 0..2 {
            prop_assert!((b.means[j] - a.means[j] - shift).abs() < 1e-6);
            prop_assert!((b.weights[j] - a.weights[j]).abs() < 1e-6);
            prop_assert!((b.variances[j] - a.variances[j]).abs() < 1e-6);
        }
    }

    #[test]
    fn posterior_rows_sum_to_one(seed in 0u64..1000, k in 1usize..4) {
        let xs = draws(seed, 120, &[(0.5, 0.0, 1.0), (0.5, 4.0, 1.0)]);
        let m = fit_em(&xs, k, &FitOptions::default()).unwrap();
        for row in posteriors(&m, &xs).rows() {
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            prop_assert!(row.iter().all(|p| (0.0..=1.0).contains(p)));
        }
    }
}
