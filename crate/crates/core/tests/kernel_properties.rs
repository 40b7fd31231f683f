use deepo_core::kernels::{
    min_eigenvalue_symmetric, min_singular_value, modified_dare_residual, pseudoinverse,
    solve_discrete_lyapunov, solve_modified_dare, spectral_radius, svd,
};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = DMatrix<f64>> {
    prop::collection::vec(-1.0..1.0f64, rows * cols)
        .prop_map(move |v| DMatrix::from_row_slice(rows, cols, &v))
}

/// Random matrix rescaled to a chosen spectral radius below one.
fn stable_matrix(n: usize) -> impl Strategy<Value = DMatrix<f64>> {
    (matrix(n, n), 0.0..0.95f64).prop_map(|(a, target)| {
        let rho = spectral_radius(&a);
        if rho < 1e-12 {
            a
        } else {
            a * (target / rho)
        }
    })
}

fn spd(n: usize) -> impl Strategy<Value = DMatrix<f64>> {
    matrix(n, n).prop_map(move |l| &l * l.transpose() + DMatrix::identity(n, n) * 0.1)
}

fn psd(n: usize) -> impl Strategy<Value = DMatrix<f64>> {
    matrix(n, n).prop_map(|l| &l * l.transpose())
}

/// Structure-preserving doubling for `X = AᵀXA − AᵀXB(R + BᵀXB)⁻¹BᵀXA + Q`.
/// After k steps the iterate equals 2^k steps of value iteration.
fn dare_by_doubling(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
) -> DMatrix<f64> {
    let n = a.nrows();
    let eye = DMatrix::<f64>::identity(n, n);
    let mut ak = a.clone();
    let mut gk = b * r.clone().try_inverse().unwrap() * b.transpose();
    let mut hk = q.clone();
    for _ in 0..200 {
        let w = (&eye + &gk * &hk).try_inverse().unwrap();
        let a_next = &ak * &w * &ak;
        let g_next = &gk + &ak * &w * &gk * ak.transpose();
        let h_next = &hk + ak.transpose() * &hk * &w * &ak;
        let delta = (&h_next - &hk).amax();
        ak = a_next;
        gk = (&g_next + g_next.transpose()) * 0.5;
        hk = (&h_next + h_next.transpose()) * 0.5;
        if delta <= 1e-15 * hk.amax().max(1.0) {
            break;
        }
    }
    hk
}

fn lyapunov_residual(a: &DMatrix<f64>, w: &DMatrix<f64>, sigma: &DMatrix<f64>) -> f64 {
    (sigma - w - a * sigma * a.transpose()).norm()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn lyapunov_fixed_point_and_psd(
        (a, w) in (1usize..=5).prop_flat_map(|n| (stable_matrix(n), psd(n)))
    ) {
        let sigma = solve_discrete_lyapunov(&a, &w).unwrap();
        let res = lyapunov_residual(&a, &w, &sigma);
        prop_assert!(res <= 1e-10 * sigma.norm().max(1.0), "residual {res}");
        prop_assert_eq!(&sigma, &sigma.transpose());
        let lam = min_eigenvalue_symmetric(&sigma).unwrap();
        prop_assert!(lam >= -1e-10 * sigma.norm().max(1.0), "min eigenvalue {lam}");
    }

    #[test]
    fn dare_matches_doubling_oracle(
        (a, b, q, r) in (1usize..=4, 1usize..=3).prop_flat_map(|(n, m)| {
            (matrix(n, n), matrix(n, m), spd(n), spd(m))
        }),
        beta in prop_oneof![Just(1.0), 0.8..1.0f64],
    ) {
        // Random Gaussian pairs are controllable with probability one; skip
        // the measure-zero near-uncontrollable draws that make the oracle
        // itself ill-conditioned.
        let n = a.nrows();
        let mut ctrb = DMatrix::<f64>::zeros(n, n * b.ncols());
        let mut blk = b.clone();
        for i in 0..n {
            ctrb.columns_mut(i * b.ncols(), b.ncols()).copy_from(&blk);
            blk = &a * blk;
        }
        let sv = ctrb.singular_values();
        prop_assume!(sv.min() > 1e-3 * sv.max());

        let h = solve_modified_dare(&a, &b, &q, &r, beta).unwrap();
        let oracle = dare_by_doubling(&(&a / beta), &(&b / beta), &(&q / (beta * beta)), &(&r / (beta * beta)));
        let err = (&h - &oracle).amax();
        prop_assert!(err <= 1e-8 * oracle.amax().max(1.0), "error {err}");
        let res = modified_dare_residual(&a, &b, &q, &r, beta, &h).unwrap();
        prop_assert!(res <= 1e-9 * h.norm().max(1.0), "residual {res}");
        prop_assert!(min_eigenvalue_symmetric(&h).unwrap() >= -1e-9);
    }

    #[test]
    fn dare_scaling_identity(
        (a, b, q, r) in (1usize..=4, 1usize..=2).prop_flat_map(|(n, m)| {
            (stable_matrix(n), matrix(n, m), spd(n), spd(m))
        }),
        beta in 0.6..1.0f64,
    ) {
        let direct = solve_modified_dare(&a, &b, &q, &r, beta).unwrap();
        let scaled = solve_modified_dare(
            &(&a / beta), &(&b / beta), &(&q / (beta * beta)), &(&r / (beta * beta)), 1.0,
        ).unwrap();
        let err = (&direct - &scaled).amax();
        prop_assert!(err <= 1e-8 * direct.amax().max(1.0), "error {err}");
    }

    #[test]
    fn pseudoinverse_penrose_conditions(
        (base, rank_cut) in (1usize..=6, 1usize..=6).prop_flat_map(|(r, c)| (matrix(r, c), 0usize..=6))
    ) {
        // Zero trailing singular values to exercise rank-deficient inputs.
        let svd = base.clone().svd(true, true);
        let mut s = svd.singular_values.clone();
        for i in 0..s.len() {
            if i >= rank_cut {
                s[i] = 0.0;
            }
        }
        let u = svd.u.unwrap();
        let vt = svd.v_t.unwrap();
        let m = &u * DMatrix::from_diagonal(&s) * &vt;

        let p = pseudoinverse(&m);
        let scale = m.norm().max(1.0);
        let mpm = &m * &p * &m;
        let pmp = &p * &m * &p;
        let mp = &m * &p;
        let pm = &p * &m;
        let e1 = (&mpm - &m).norm();
        let e2 = (&pmp - &p).norm();
        let e3 = (&mp - mp.transpose()).norm();
        let e4 = (&pm - pm.transpose()).norm();
        prop_assert!(e1 <= 1e-10 * scale, "m p m = m: {e1}, sv {s}");
        prop_assert!(e2 <= 1e-10 * p.norm().max(1.0), "p m p = p: {e2}, sv {s}");
        prop_assert!(e3 <= 1e-10, "m p symmetric: {e3}, sv {s}");
        prop_assert!(e4 <= 1e-10, "p m symmetric: {e4}, sv {s}");
    }

    #[test]
    fn jacobi_svd_reconstructs(
        m in (1usize..=7, 1usize..=7).prop_flat_map(|(r, c)| matrix(r, c))
    ) {
        let f = svd(&m);
        let k = m.nrows().min(m.ncols());
        prop_assert_eq!(f.sigma.len(), k);
        let recon = &f.u * DMatrix::from_diagonal(&f.sigma) * f.v.transpose();
        prop_assert!((&recon - &m).norm() <= 1e-13 * m.norm().max(1.0));
        prop_assert!((f.v.transpose() * &f.v - DMatrix::identity(k, k)).norm() <= 1e-12);
        for w in f.sigma.as_slice().windows(2) {
            prop_assert!(w[0] >= w[1]);
        }
    }

    #[test]
    fn symmetric_min_eigenvalue_agrees_with_svd_on_psd(
        (l, shift) in ((1usize..=6).prop_flat_map(|n| matrix(n, n)), -2.0..2.0f64)
    ) {
        let n = l.nrows();
        let g = &l * l.transpose();
        // Singular values of a PSD matrix are its eigenvalues.
        let lam_min = min_singular_value(&g);
        let got = min_eigenvalue_symmetric(&(&g - DMatrix::identity(n, n) * shift)).unwrap();
        prop_assert!((got - (lam_min - shift)).abs() <= 1e-12 * g.norm().max(1.0));
    }
}
