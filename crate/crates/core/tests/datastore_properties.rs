use deepo_core::datastore::{covariance_param, DataSet, DataStore};
use deepo_core::kernels::{singular_values, spectral_radius};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

fn gaussian_vec(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.sample(StandardNormal))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn incremental_matches_batch(seed in any::<u64>(), n in 1usize..=5, m in 1usize..=3, steps in 1usize..=60) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let first = DataSet::from_matrices(
            &gaussian(&mut rng, m, 1),
            &gaussian(&mut rng, n, 1),
            &gaussian(&mut rng, n, 1),
        ).unwrap();
        let mut store = DataStore::new(first).unwrap();
        for _ in 0..steps {
            let x = gaussian_vec(&mut rng, n) * 3.0;
            let u = gaussian_vec(&mut rng, m);
            let xn = gaussian_vec(&mut rng, n);
            store.append_sample(&x, &u, &xn).unwrap();
        }
        let batch = covariance_param(store.data()).unwrap();
        let inc = store.cov();
        prop_assert_eq!(inc.len(), batch.len());
        let scale = batch.phi().amax().max(1.0);
        prop_assert!((inc.phi() - batch.phi()).amax() <= 1e-10 * scale);
        prop_assert!((inc.xbar1() - batch.xbar1()).amax() <= 1e-10 * batch.xbar1().amax().max(1.0));
        prop_assert_eq!(inc.phi(), &inc.phi().transpose());
    }

    #[test]
    fn phi_blocks_match_definitions(seed in any::<u64>(), n in 1usize..=5, m in 1usize..=3, t in 1usize..=20) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ds = DataSet::from_matrices(
            &gaussian(&mut rng, m, t),
            &gaussian(&mut rng, n, t),
            &gaussian(&mut rng, n, t),
        ).unwrap();
        let cp = covariance_param(&ds).unwrap();
        let d = ds.build_d();
        let ubar0 = ds.u0() * d.transpose() / t as f64;
        let xbar0 = ds.x0() * d.transpose() / t as f64;
        prop_assert!((cp.ubar0() - ubar0).amax() <= 1e-12);
        prop_assert!((cp.xbar0() - xbar0).amax() <= 1e-12);
        // Gram structure: Φ ⪰ 0.
        let lam = cp.phi().clone().symmetric_eigenvalues().min();
        prop_assert!(lam >= -1e-12 * cp.phi().amax().max(1.0));
    }

    /// Any time-invariant linear feedback leaves 𝒟 with rank exactly n.
    #[test]
    fn fixed_feedback_data_has_rank_n(seed in any::<u64>(), n in 1usize..=5, m in 1usize..=3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = gaussian(&mut rng, n, n);
        let a = &a * (0.9 / spectral_radius(&a).max(1e-9));
        let b = gaussian(&mut rng, n, m);
        let k = gaussian(&mut rng, m, n) * 0.1;
        let t = 3 * (n + m);
        let mut ds = DataSet::new(n, m);
        let mut x = gaussian_vec(&mut rng, n);
        for _ in 0..t {
            let u = &k * &x;
            let xn = &a * &x + &b * &u + gaussian_vec(&mut rng, n);
            ds.push(&x, &u, &xn).unwrap();
            x = xn;
        }
        prop_assert_eq!(ds.rank(), n);
        let sv = singular_values(&ds.build_d());
        for &s in sv.iter().skip(n) {
            prop_assert!(s <= 1e-8 * sv[0]);
        }
    }
}

#[test]
fn sigma_min_decays_under_rank_deficient_columns() {
    let (n, m) = (4, 2);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let t1 = 10;
    let base = DataSet::from_matrices(
        &gaussian(&mut rng, m, t1),
        &gaussian(&mut rng, n, t1),
        &gaussian(&mut rng, n, t1),
    )
    .unwrap();
    let k = gaussian(&mut rng, m, n);
    let mut store = DataStore::new(base).unwrap();
    assert!(store.cov().is_full_rank());

    let mut readings = Vec::new();
    let mut appended = 0;
    for target in [10, 100, 1000] {
        while appended < target {
            let x = gaussian_vec(&mut rng, n);
            let u = &k * &x;
            store.append_sample(&x, &u, &x).unwrap();
            appended += 1;
        }
        readings.push(store.cov().sigma_min());
    }
    assert!(
        readings[0] > readings[1] && readings[1] > readings[2],
        "{readings:?}"
    );
    assert!(readings[2] < 0.05 * readings[0], "{readings:?}");
}

#[test]
fn sigma_min_decreases_stepwise_with_vanishing_states() {
    let (n, m) = (3, 1);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let base = DataSet::from_matrices(
        &gaussian(&mut rng, m, 8),
        &gaussian(&mut rng, n, 8),
        &gaussian(&mut rng, n, 8),
    )
    .unwrap();
    let k = gaussian(&mut rng, m, n);
    let mut store = DataStore::new(base).unwrap();
    let mut x = gaussian_vec(&mut rng, n);
    let mut prev = f64::INFINITY;
    let mut early = 0.0;
    for step in 0..200 {
        let u = &k * &x;
        let xn = &x * 0.5;
        store.append_sample(&x, &u, &xn).unwrap();
        let now = store.cov().sigma_min();
        // the first few samples still carry non-negligible states
        if step == 20 {
            early = now;
        }
        if step > 20 {
            assert!(now <= prev, "step {step}: {now} > {prev}");
        }
        prev = now;
        x = xn;
    }
    assert!(prev < 0.2 * early, "{prev} vs {early}");
}
