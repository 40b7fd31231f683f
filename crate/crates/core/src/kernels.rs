//! Dense small-matrix primitives: discrete Lyapunov and β-modified Riccati
//! solvers, pseudoinverse, and the spectral quantities used by the
//! stability and excitation checks.
//!
//! Everything here is a pure function of its arguments.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Closed loops with spectral radius at or above `1 - STABILITY_MARGIN` are
/// rejected by the Lyapunov solver.
pub const STABILITY_MARGIN: f64 = 1e-9;

/// Iteration cap for the Riccati fixed-point recursion.
pub const DARE_MAX_ITER: usize = 100_000;

/// Relative residual tolerance for the modified DARE.
pub const DARE_TOL: f64 = 1e-9;

const DARE_POLISH_TOL: f64 = 1e-14;
const DARE_NEWTON_STEPS: usize = 30;

/// Relative tolerance below which a singular value counts as zero.
pub const RANK_REL_TOL: f64 = 1e-8;

/// Absolute floor for the rank threshold.
pub const RANK_ABS_FLOOR: f64 = 1e-12;

const SYMMETRY_TOL: f64 = 1e-12;

pub(crate) fn check_square(m: &DMatrix<f64>, name: &str) -> Result<usize> {
    if m.nrows() != m.ncols() || m.nrows() == 0 {
        return Err(Error::dim(format!(
            "{name} must be square and non-empty, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(m.nrows())
}

pub(crate) fn check_shape(m: &DMatrix<f64>, rows: usize, cols: usize, name: &str) -> Result<()> {
    if m.nrows() != rows || m.ncols() != cols {
        return Err(Error::dim(format!(
            "{name} must be {rows}x{cols}, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(())
}

pub(crate) fn check_finite(m: &DMatrix<f64>, name: &str) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "{name} has non-finite entries"
        )))
    }
}

/// `(m + mᵀ) / 2`.
pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Largest eigenvalue modulus.
pub fn spectral_radius(a: &DMatrix<f64>) -> f64 {
    if a.nrows() == 1 {
        return a[(0, 0)].abs();
    }
    a.complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

/// Solves `Σ = w + a Σ aᵀ` for a Schur-stable `a`.
///
/// Uses the vectorized form `(I - a⊗a) vec(Σ) = vec(w)`, which is exact up
/// to the LU solve and fine for the state dimensions handled here (n ≲ 20).
pub fn solve_discrete_lyapunov(a_cl: &DMatrix<f64>, w: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = check_square(a_cl, "a_cl")?;
    check_shape(w, n, n, "w")?;
    check_finite(a_cl, "a_cl")?;
    check_finite(w, "w")?;

    let rho = spectral_radius(a_cl);
    if !(rho < 1.0 - STABILITY_MARGIN) {
        return Err(Error::Unstable {
            spectral_radius: rho,
        });
    }

    let lhs = DMatrix::<f64>::identity(n * n, n * n) - a_cl.kronecker(a_cl);
    let rhs = DVector::from_column_slice(w.as_slice());
    let vec_sigma = lhs.lu().solve(&rhs).ok_or(Error::Unstable {
        spectral_radius: rho,
    })?;
    let sigma = DMatrix::from_column_slice(n, n, vec_sigma.as_slice());
    Ok(symmetrize(&sigma))
}

/// Right-hand side of the Riccati recursion before the `1/β²` scaling:
/// `aᵀHa − aᵀHb(r + bᵀHb)⁻¹bᵀHa + q`.
fn riccati_map(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    h: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let hb = h * b;
    let s = r + b.transpose() * &hb;
    let bha = hb.transpose() * a;
    let s_inv_bha = solve_spd(&s, &bha)?;
    Ok(a.transpose() * h * a - bha.transpose() * s_inv_bha + q)
}

/// Solves `s x = rhs` for symmetric positive definite `s`.
pub(crate) fn solve_spd(s: &DMatrix<f64>, rhs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    match s.clone().cholesky() {
        Some(chol) => Ok(chol.solve(rhs)),
        None => Err(Error::NotPD {
            min_eigenvalue: symmetrize(s).symmetric_eigenvalues().min(),
        }),
    }
}

/// Residual `‖aᵀHa − β²H − aᵀHb(r + bᵀHb)⁻¹bᵀHa + q‖_F` of the modified DARE.
pub fn modified_dare_residual(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    beta: f64,
    h: &DMatrix<f64>,
) -> Result<f64> {
    Ok((riccati_map(a, b, q, r, h)? - h * (beta * beta)).norm())
}

/// Solves the β-modified discrete algebraic Riccati equation
///
/// ```text
/// aᵀHa − β²H − aᵀHb(r + bᵀHb)⁻¹bᵀHa + q = 0
/// ```
///
/// by value iteration `H ← (aᵀHa − aᵀHb(r + bᵀHb)⁻¹bᵀHa + q) / β²` from
/// `H = 0`. With `β = 1` this is the ordinary DARE. Convergence requires
/// the pair `(a/β, b)` to be stabilizable.
pub fn solve_modified_dare(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    beta: f64,
) -> Result<DMatrix<f64>> {
    let n = check_square(a, "a")?;
    if b.nrows() != n || b.ncols() == 0 {
        return Err(Error::dim(format!(
            "b must have {n} rows and at least one column, got {}x{}",
            b.nrows(),
            b.ncols()
        )));
    }
    let m = b.ncols();
    check_shape(q, n, n, "q")?;
    check_shape(r, m, m, "r")?;
    for (mat, name) in [(a, "a"), (b, "b"), (q, "q"), (r, "r")] {
        check_finite(mat, name)?;
    }
    if !(beta > 0.0 && beta <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "beta must lie in (0, 1], got {beta}"
        )));
    }

    let beta2 = beta * beta;
    let mut h = DMatrix::<f64>::zeros(n, n);
    let mut residual = f64::INFINITY;
    for iter in 1..=DARE_MAX_ITER {
        let mapped = riccati_map(a, b, q, r, &h)?;
        residual = (&mapped - &h * beta2).norm();
        if !residual.is_finite() {
            return Err(Error::NoConvergence {
                iterations: iter,
                residual,
            });
        }
        if residual <= DARE_TOL * h.norm().max(1.0) {
            return Ok(newton_polish(a, b, q, r, beta, h, residual));
        }
        h = symmetrize(&(mapped / beta2));
    }
    Err(Error::NoConvergence {
        iterations: DARE_MAX_ITER,
        residual,
    })
}

/// Hewer iterations on the β-scaled problem. Value iteration contracts
/// slowly when the optimal loop is close to the β margin, so a small
/// residual does not yet mean a small error; a few Newton steps do.
fn newton_polish(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    beta: f64,
    start: DMatrix<f64>,
    start_residual: f64,
) -> DMatrix<f64> {
    let a_s = a / beta;
    let b_s = b / beta;
    let q_s = q / (beta * beta);
    let r_s = r / (beta * beta);
    let mut best = (start_residual, start.clone());
    let mut h = start;
    for _ in 0..DARE_NEWTON_STEPS {
        let Ok(k) = riccati_gain(&a_s, &b_s, &r_s, &h) else {
            break;
        };
        let a_cl = &a_s + &b_s * &k;
        let w = &q_s + k.transpose() * &r_s * &k;
        let Ok(next) = solve_discrete_lyapunov(&a_cl.transpose(), &w) else {
            break;
        };
        let step = (&next - &h).norm();
        h = next;
        let Ok(res) = modified_dare_residual(a, b, q, r, beta, &h) else {
            break;
        };
        if res < best.0 {
            best = (res, h.clone());
        }
        if step <= DARE_POLISH_TOL * h.norm().max(1.0) {
            break;
        }
    }
    best.1
}

/// Riccati gain under the `u = Kx` convention:
/// `K = −(r + bᵀHb)⁻¹bᵀHa`.
pub fn riccati_gain(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    r: &DMatrix<f64>,
    h: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let hb = h * b;
    let s = r + b.transpose() * &hb;
    Ok(-solve_spd(&s, &(hb.transpose() * a))?)
}

/// Thin singular value decomposition `m = U·diag(σ)·Vᵀ` with
/// `k = min(rows, cols)` columns in `U` and `V`, singular values descending.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: DMatrix<f64>,
    pub sigma: DVector<f64>,
    pub v: DMatrix<f64>,
}

const JACOBI_MAX_SWEEPS: usize = 80;

/// One-sided (Hestenes) Jacobi SVD.
///
/// Orthogonalizes the columns of the tall orientation of `m` by plane
/// rotations; column norms are the singular values. Small singular values
/// come out with high relative accuracy, and exact rank deficiency is
/// handled without special cases.
pub fn svd(m: &DMatrix<f64>) -> Svd {
    let transposed = m.nrows() < m.ncols();
    let mut w = if transposed { m.transpose() } else { m.clone() };
    let (rows, cols) = w.shape();
    let mut v = DMatrix::<f64>::identity(cols, cols);
    let tol = f64::EPSILON * rows.max(1) as f64;

    for _ in 0..JACOBI_MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..cols {
            for q in (p + 1)..cols {
                let (mut alpha, mut beta, mut gamma) = (0.0, 0.0, 0.0);
                for i in 0..rows {
                    let (wp, wq) = (w[(i, p)], w[(i, q)]);
                    alpha += wp * wp;
                    beta += wq * wq;
                    gamma += wp * wq;
                }
                if gamma == 0.0 || gamma.abs() <= tol * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for i in 0..rows {
                    let (wp, wq) = (w[(i, p)], w[(i, q)]);
                    w[(i, p)] = c * wp - s * wq;
                    w[(i, q)] = s * wp + c * wq;
                }
                for i in 0..cols {
                    let (vp, vq) = (v[(i, p)], v[(i, q)]);
                    v[(i, p)] = c * vp - s * vq;
                    v[(i, q)] = s * vp + c * vq;
                }
            }
        }
        if !rotated {
            break;
        }
    }

    let mut order: Vec<usize> = (0..cols).collect();
    let norms: Vec<f64> = (0..cols).map(|j| w.column(j).norm()).collect();
    order.sort_by(|&i, &j| norms[j].total_cmp(&norms[i]));

    let mut u = DMatrix::<f64>::zeros(rows, cols);
    let mut v_sorted = DMatrix::<f64>::zeros(cols, cols);
    let mut sigma = DVector::<f64>::zeros(cols);
    for (dst, &src) in order.iter().enumerate() {
        sigma[dst] = norms[src];
        if norms[src] > 0.0 {
            u.set_column(dst, &(w.column(src) / norms[src]));
        }
        v_sorted.set_column(dst, &v.column(src));
    }

    if transposed {
        Svd {
            u: v_sorted,
            sigma,
            v: u,
        }
    } else {
        Svd {
            u,
            sigma,
            v: v_sorted,
        }
    }
}

/// Singular values in descending order.
pub fn singular_values(m: &DMatrix<f64>) -> DVector<f64> {
    if m.is_empty() {
        return DVector::zeros(0);
    }
    svd(m).sigma
}

/// Smallest of the `min(rows, cols)` singular values.
pub fn min_singular_value(m: &DMatrix<f64>) -> f64 {
    singular_values(m)
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// Threshold below which a singular value is treated as zero.
pub fn rank_threshold(sigma_max: f64) -> f64 {
    (RANK_REL_TOL * sigma_max).max(RANK_ABS_FLOOR)
}

/// Number of singular values above [`rank_threshold`].
pub fn numerical_rank(m: &DMatrix<f64>) -> usize {
    let sv = singular_values(m);
    let Some(&sigma_max) = sv.iter().next() else {
        return 0;
    };
    let tol = rank_threshold(sigma_max);
    sv.iter().filter(|&&s| s > tol).count()
}

/// Moore–Penrose pseudoinverse. Singular values below
/// `max(rows, cols)·ε·σ_max` are treated as zero.
pub fn pseudoinverse(m: &DMatrix<f64>) -> DMatrix<f64> {
    if m.is_empty() {
        return DMatrix::zeros(m.ncols(), m.nrows());
    }
    let Svd { u, sigma, v } = svd(m);
    let sigma_max = sigma.iter().copied().fold(0.0, f64::max);
    let tol = m.nrows().max(m.ncols()) as f64 * f64::EPSILON * sigma_max;
    let mut pinv = DMatrix::<f64>::zeros(m.ncols(), m.nrows());
    for (j, &s) in sigma.iter().enumerate() {
        if s > tol {
            pinv += v.column(j) * (u.column(j).transpose() / s);
        }
    }
    pinv
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue_symmetric(m: &DMatrix<f64>) -> Result<f64> {
    check_square(m, "m")?;
    let asymmetry = (m - m.transpose()).amax();
    if asymmetry > SYMMETRY_TOL * m.amax().max(1.0) {
        return Err(Error::NotSymmetric { asymmetry });
    }
    Ok(symmetrize(m).symmetric_eigenvalues().min())
}

/// Smallest and largest eigenvalue of a symmetric matrix.
pub fn eigen_extremes_symmetric(m: &DMatrix<f64>) -> Result<(f64, f64)> {
    check_square(m, "m")?;
    let asymmetry = (m - m.transpose()).amax();
    if asymmetry > SYMMETRY_TOL * m.amax().max(1.0) {
        return Err(Error::NotSymmetric { asymmetry });
    }
    let eig = symmetrize(m).symmetric_eigenvalues();
    Ok((eig.min(), eig.max()))
}
