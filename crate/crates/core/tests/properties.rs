use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand_distr::{Distribution, StandardNormal};
use ssar_core::asura::{
    asura_sample_split, iteration_cap, potential, sampling_distribution, AsuraConfig, AsuraState,
};
use ssar_core::baselines::{inclusion_probabilities, leverage_sample, uniform_sample, LeverageConfig};
use ssar_core::instances::{mask_to_signs, packing_distance, signs_to_mask};
use ssar_core::io::{read_matrix_csv, write_matrix_csv};
use ssar_core::linalg::{
    leverage_scores, reduced_rank, reduced_rank_by_inverse, thin_svd, DEFAULT_RANK_TOL,
};
use ssar_core::regression::{ridge_to_ssal, weighted_lsq, LabelOracle};
use ssar_core::rng::seeded_rng;
use ssar_core::verify::{check_hard_lemmas, check_mass_identity, corrupt_trace, Corruption};
use ssar_core::{Dataset, Matrix};

fn gaussian(rows: usize, cols: usize, seed: u64) -> Matrix {
    let mut rng = seeded_rng(seed);
    let entries = (0..rows * cols).map(|_| StandardNormal.sample(&mut rng)).collect();
    Matrix::from_row_major(rows, cols, entries).unwrap()
}

fn split_dataset(n1: usize, n2: usize, d: usize, seed: u64) -> Dataset {
    let y2: Vec<f64> = gaussian(n2, 1, seed ^ 0xABCD).to_row_major();
    Dataset::new(gaussian(n1, d, seed), gaussian(n2, d, seed + 1), y2).unwrap()
}

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn initial_potential_is_gamma_trace_over_d(d in 1usize..7, gamma in 0.01f64..0.25, seed in any::<u64>()) {
        let g = gaussian(d, d, seed);
        let m = Matrix::from_dmatrix(g.as_dmatrix() * g.as_dmatrix().transpose()).unwrap();
        let state = AsuraState::initial(d, gamma);
        let phi = potential(Some(&m), &state).unwrap();
        prop_assert!(rel_close(phi, gamma / d as f64 * m.as_dmatrix().trace(), 1e-12));
        prop_assert!(rel_close(potential(None, &state).unwrap(), gamma, 1e-12));
    }

    #[test]
    fn initial_distribution_is_leverage_over_rank(n in 3usize..40, d in 1usize..6, seed in any::<u64>()) {
        prop_assume!(n >= d);
        let svd = thin_svd(&gaussian(n, d, seed), DEFAULT_RANK_TOL).unwrap();
        let r = svd.rank();
        let p = sampling_distribution(&svd, &AsuraState::initial(r, 0.2)).unwrap();
        let lev = leverage_scores(&svd);
        prop_assert!(rel_close(p.iter().sum::<f64>(), 1.0, 1e-12));
        for (pi, li) in p.iter().zip(&lev) {
            prop_assert!(*pi >= 0.0);
            prop_assert!((pi - li / r as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn sampler_run_satisfies_trace_invariants(
        n1 in 4usize..30, n2 in 1usize..6, d in 1usize..5, c0 in 2.0f64..4.0, seed in any::<u64>()
    ) {
        let ds = split_dataset(n1, n2, d, seed);
        let svd = thin_svd(&ds.stacked(), DEFAULT_RANK_TOL).unwrap();
        let cfg = AsuraConfig::new(0.25).with_c0(c0).with_seed(seed).with_assert_lemmas(true);
        let (sample, trace) = asura_sample_split(&svd, n1, &cfg).unwrap();
        let m = sample.len();
        let coefs = sample.coefficients.as_ref().unwrap();
        prop_assert_eq!(sample.weights.len(), m);
        prop_assert_eq!(coefs.len(), m);
        prop_assert_eq!(trace.iterations(), m);
        prop_assert!(m <= iteration_cap(svd.rank(), cfg.gamma()));
        prop_assert!(sample.weights.iter().all(|&w| w > 0.0 && w.is_finite()));
        prop_assert!(sample.indices.iter().all(|&i| i < ds.n_rows()));
        // weights and coefficients are the raw values scaled by 1 / mid
        let mid = trace.final_state.mid;
        for (rec, (w, a)) in trace.records.iter().zip(sample.weights.iter().zip(coefs)) {
            prop_assert!(rel_close(*w, rec.weight_raw / mid, 1e-12));
            prop_assert!(rel_close(*a, rec.coefficient_raw(cfg.gamma()) / mid, 1e-12));
        }
        for report in check_hard_lemmas(&trace).unwrap() {
            prop_assert!(report.passed(), "{} failed", report.lemma_id);
        }
        prop_assert!(check_mass_identity(std::slice::from_ref(&trace)).unwrap().passed());
    }

    #[test]
    fn every_corruption_trips_its_check(seed in any::<u64>(), which in 0usize..6) {
        let ds = split_dataset(12, 3, 3, seed);
        let svd = thin_svd(&ds.stacked(), DEFAULT_RANK_TOL).unwrap();
        let cfg = AsuraConfig::new(0.25).with_seed(seed).with_assert_lemmas(true);
        let (_, trace) = asura_sample_split(&svd, 12, &cfg).unwrap();
        let c = Corruption::ALL[which];
        let bad = corrupt_trace(&trace, c).unwrap();
        let reports = check_hard_lemmas(&bad).unwrap();
        let hit = reports.iter().find(|r| r.lemma_id == c.target()).unwrap();
        prop_assert!(!hit.passed(), "{:?} not detected", c);
    }

    #[test]
    fn reduced_rank_forms_agree(n1 in 3usize..30, n2 in 3usize..10, d in 1usize..5, seed in any::<u64>()) {
        let ds = split_dataset(n1, n2, d, seed);
        let a = reduced_rank(&ds, DEFAULT_RANK_TOL).unwrap();
        let b = reduced_rank_by_inverse(&ds).unwrap();
        prop_assert!((a - b).abs() < 1e-8);
        prop_assert!(a >= -1e-12 && a <= d as f64 + 1e-9);
    }

    #[test]
    fn ridge_stacked_loss_adds_penalty(n in 2usize..30, d in 1usize..6, lambda in 0.0f64..20.0, seed in any::<u64>()) {
        let x1 = gaussian(n, d, seed);
        let y1 = gaussian(n, 1, seed + 7).to_row_major();
        let beta = gaussian(d, 1, seed + 9).to_row_major();
        let ds = ridge_to_ssal(&x1, lambda).unwrap();
        let resid = x1.mul_vec(&beta).unwrap().iter().zip(&y1).map(|(p, y)| (p - y).powi(2)).sum::<f64>();
        let penalty = lambda * beta.iter().map(|b| b * b).sum::<f64>();
        prop_assert!(rel_close(ds.stacked_loss(&beta, &y1).unwrap(), resid + penalty, 1e-10));
    }

    #[test]
    fn weighted_lsq_solves_normal_equations(m in 1usize..25, d in 1usize..6, seed in any::<u64>(), scale in 0.1f64..10.0) {
        let x = gaussian(m, d, seed);
        let y = gaussian(m, 1, seed + 1).to_row_major();
        let w: Vec<f64> = gaussian(m, 1, seed + 2).to_row_major().iter().map(|v| v.abs() + 0.1).collect();
        let beta = weighted_lsq(&x, &w, &y).unwrap();
        let xm = x.as_dmatrix();
        let wd = DMatrix::from_diagonal(&DVector::from_vec(w.clone()));
        let lhs = xm.transpose() * &wd * xm * DVector::from_vec(beta.clone());
        let rhs = xm.transpose() * &wd * DVector::from_vec(y.clone());
        prop_assert!((lhs - &rhs).norm() <= 1e-8 * rhs.norm().max(1.0));
        let w2: Vec<f64> = w.iter().map(|v| v * scale).collect();
        let beta2 = weighted_lsq(&x, &w2, &y).unwrap();
        for (a, b) in beta.iter().zip(&beta2) {
            prop_assert!((a - b).abs() <= 1e-8 * a.abs().max(1.0));
        }
    }

    #[test]
    fn leverage_probabilities_are_clamped_and_weights_inverse(n in 2usize..40, d in 1usize..5, seed in any::<u64>()) {
        prop_assume!(n >= d);
        let svd = thin_svd(&gaussian(n, d, seed), DEFAULT_RANK_TOL).unwrap();
        let cfg = LeverageConfig::new(0.5).with_seed(seed);
        let probs = inclusion_probabilities(&svd, cfg.target_size(svd.rank()));
        prop_assert!(probs.iter().all(|&p| (0.0..=1.0).contains(&p)));
        let s = leverage_sample(&svd, &cfg).unwrap();
        for (&i, &w) in s.indices.iter().zip(&s.weights) {
            prop_assert!(rel_close(w, 1.0 / probs[i], 1e-12));
        }
        for (i, &p) in probs.iter().enumerate() {
            if p >= 1.0 {
                prop_assert!(s.indices.contains(&i));
            }
        }
    }

    #[test]
    fn uniform_weights_are_n_over_m(n in 1usize..50, m in 1usize..80, seed in any::<u64>()) {
        let s = uniform_sample(n, m, seed).unwrap();
        prop_assert_eq!(s.len(), m);
        prop_assert!(s.indices.iter().all(|&i| i < n));
        prop_assert!(s.weights.iter().all(|&w| rel_close(w, n as f64 / m as f64, 1e-15)));
    }

    #[test]
    fn oracle_bills_distinct_unlabeled_rows(requests in proptest::collection::vec(0usize..15, 0..60)) {
        let ds = split_dataset(10, 5, 2, 3);
        let hidden: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let mut oracle = LabelOracle::new(&ds, &hidden).unwrap();
        for &r in &requests {
            oracle.label(r).unwrap();
        }
        let distinct: std::collections::BTreeSet<usize> = requests.iter().copied().filter(|&r| r < 10).collect();
        prop_assert_eq!(oracle.query_count(), distinct.len());
        prop_assert_eq!(oracle.iteration_queries(), requests.iter().filter(|&&r| r < 10).count());
    }

    #[test]
    fn sign_masks_round_trip(d in 1usize..=20, raw in any::<u32>(), other in any::<u32>()) {
        let mask = raw & ((1u64 << d) - 1) as u32;
        let signs = mask_to_signs(mask, d);
        prop_assert_eq!(signs.len(), d);
        prop_assert_eq!(signs_to_mask(&signs).unwrap(), mask);
        let b = other & ((1u64 << d) - 1) as u32;
        let sb = mask_to_signs(b, d);
        let sq: f64 = signs.iter().zip(&sb).map(|(x, y)| ((x - y) as f64).powi(2)).sum();
        prop_assert!((packing_distance(mask, b) - sq).abs() < 1e-12);
    }

    #[test]
    fn matrix_csv_round_trip_is_exact(rows in 1usize..8, cols in 1usize..5, seed in any::<u64>()) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        let m = Matrix::from_dmatrix(gaussian(rows, cols, seed).as_dmatrix() * 1e3f64.powi((seed % 7) as i32 - 3)).unwrap();
        write_matrix_csv(&path, &m).unwrap();
        prop_assert_eq!(read_matrix_csv(&path, cols).unwrap(), m);
    }
}
