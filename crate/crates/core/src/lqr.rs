//! LQR cost, least-squares identification, certainty-equivalence gain and
//! the covariance-parametrized cost with its data-only gradient.
//!
//! Gains follow `u = Kx` throughout, so the closed loop is `A + BK`.

use nalgebra::DMatrix;

use crate::datastore::{CovParam, DataSet};
use crate::error::{Error, Result};
use crate::kernels::{
    check_shape, check_square, min_eigenvalue_symmetric, numerical_rank, pseudoinverse,
    riccati_gain, solve_discrete_lyapunov, solve_modified_dare, spectral_radius, STABILITY_MARGIN,
};

/// Tolerance on `‖X̄₀V − Iₙ‖_F` accepted by [`cost_v`].
pub const FEASIBILITY_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct CostWeights {
    q: DMatrix<f64>,
    r: DMatrix<f64>,
}

impl CostWeights {
    /// Both weights must be symmetric positive definite.
    pub fn new(q: DMatrix<f64>, r: DMatrix<f64>) -> Result<Self> {
        check_square(&q, "Q")?;
        check_square(&r, "R")?;
        for m in [&q, &r] {
            let lam = min_eigenvalue_symmetric(m)?;
            if lam.is_nan() || lam <= 0.0 {
                return Err(Error::NotPD {
                    min_eigenvalue: lam,
                });
            }
        }
        Ok(Self { q, r })
    }

    pub fn identity(n: usize, m: usize) -> Self {
        Self {
            q: DMatrix::identity(n, n),
            r: DMatrix::identity(m, m),
        }
    }

    pub fn q(&self) -> &DMatrix<f64> {
        &self.q
    }

    pub fn r(&self) -> &DMatrix<f64> {
        &self.r
    }

    pub fn state_dim(&self) -> usize {
        self.q.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.r.nrows()
    }

    /// `Q + KᵀRK`.
    pub fn stage_weight(&self, k: &DMatrix<f64>) -> DMatrix<f64> {
        &self.q + k.transpose() * &self.r * k
    }
}

fn check_gain_shapes(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    k: &DMatrix<f64>,
    w: &CostWeights,
) -> Result<()> {
    let n = check_square(a, "A")?;
    let m = w.input_dim();
    check_shape(b, n, m, "B")?;
    check_shape(k, m, n, "K")?;
    check_shape(w.q(), n, n, "Q")
}

/// `tr((Q + KᵀRK)Σ_K)` where `Σ_K = I + (A+BK)Σ_K(A+BK)ᵀ`.
pub fn closed_loop_cost(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    k: &DMatrix<f64>,
    w: &CostWeights,
) -> Result<f64> {
    check_gain_shapes(a, b, k, w)?;
    let a_cl = a + b * k;
    let n = a.nrows();
    let sigma = solve_discrete_lyapunov(&a_cl, &DMatrix::identity(n, n))?;
    Ok((w.stage_weight(k) * sigma).trace())
}

/// Least-squares estimate `[B̂ Â] = X₁𝒟†`, returned as `(Â, B̂)`.
pub fn ls_identify(ds: &DataSet) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let (n, m) = (ds.state_dim(), ds.input_dim());
    let d = ds.build_d();
    let rank = if ds.is_empty() { 0 } else { numerical_rank(&d) };
    if rank < n + m {
        return Err(Error::RankDeficient {
            rank,
            required: n + m,
        });
    }
    let ba = ds.x1() * pseudoinverse(&d);
    let b_hat = ba.columns(0, m).into_owned();
    let a_hat = ba.columns(m, n).into_owned();
    Ok((a_hat, b_hat))
}

/// Certainty-equivalence LQR gain for the identified pair.
pub fn ce_lqr_gain(
    a_hat: &DMatrix<f64>,
    b_hat: &DMatrix<f64>,
    w: &CostWeights,
) -> Result<DMatrix<f64>> {
    let h = solve_modified_dare(a_hat, b_hat, w.q(), w.r(), 1.0)?;
    let k = riccati_gain(a_hat, b_hat, w.r(), &h)?;
    let rho = spectral_radius(&(a_hat + b_hat * &k));
    if rho >= 1.0 - STABILITY_MARGIN {
        return Err(Error::Unstable {
            spectral_radius: rho,
        });
    }
    Ok(k)
}

/// Cost of a parametrization `V` with the two Lyapunov solutions it needs.
#[derive(Debug, Clone)]
pub struct VCost {
    pub cost: f64,
    /// `Σ_V = I + X̄₁VΣ_VVᵀX̄₁ᵀ`
    pub sigma_v: DMatrix<f64>,
    /// `P_V = Q + VᵀŪ₀ᵀRŪ₀V + VᵀX̄₁ᵀP_VX̄₁V`
    pub p_v: DMatrix<f64>,
}

pub fn feasibility_residual(v: &DMatrix<f64>, cp: &CovParam) -> f64 {
    let n = cp.state_dim();
    (cp.xbar0() * v - DMatrix::<f64>::identity(n, n)).norm()
}

fn check_v(v: &DMatrix<f64>, cp: &CovParam, w: &CostWeights) -> Result<()> {
    let (n, m) = (cp.state_dim(), cp.input_dim());
    check_shape(v, n + m, n, "V")?;
    check_shape(w.q(), n, n, "Q")?;
    check_shape(w.r(), m, m, "R")?;
    let residual = feasibility_residual(v, cp);
    if !(residual <= FEASIBILITY_TOL) {
        return Err(Error::Infeasible { residual });
    }
    Ok(())
}

pub fn cost_v(v: &DMatrix<f64>, cp: &CovParam, w: &CostWeights) -> Result<VCost> {
    check_v(v, cp, w)?;
    let n = cp.state_dim();
    let k = cp.ubar0() * v;
    let a_cl = cp.xbar1() * v;
    let stage = w.stage_weight(&k);
    let sigma_v = solve_discrete_lyapunov(&a_cl, &DMatrix::identity(n, n))?;
    let p_v = solve_discrete_lyapunov(&a_cl.transpose(), &stage)?;
    let cost = (&stage * &sigma_v).trace();
    Ok(VCost { cost, sigma_v, p_v })
}

/// `∇C = 2(Ū₀ᵀRŪ₀ + X̄₁ᵀP_VX̄₁)VΣ_V`, reusing `Σ_V` and `P_V` from [`cost_v`].
pub fn gradient_from(v: &DMatrix<f64>, cp: &CovParam, w: &CostWeights, c: &VCost) -> DMatrix<f64> {
    let ubar0 = cp.ubar0();
    let xbar1 = cp.xbar1();
    let curvature = ubar0.transpose() * w.r() * &ubar0 + xbar1.transpose() * &c.p_v * xbar1;
    curvature * v * &c.sigma_v * 2.0
}

pub fn deepo_gradient(v: &DMatrix<f64>, cp: &CovParam, w: &CostWeights) -> Result<DMatrix<f64>> {
    let c = cost_v(v, cp, w)?;
    Ok(gradient_from(v, cp, w, &c))
}

/// Orthogonal projection onto the kernel of `X̄₀`: `(I − X̄₀†X̄₀)g`.
pub fn project_gradient(g: &DMatrix<f64>, xbar0: &DMatrix<f64>) -> DMatrix<f64> {
    let pinv = pseudoinverse(xbar0);
    g - &pinv * (xbar0 * g)
}

/// `V = Φ⁻¹[K; Iₙ]`, solved rather than inverted.
pub fn reparametrize(k: &DMatrix<f64>, cp: &CovParam) -> Result<DMatrix<f64>> {
    let (n, m) = (cp.state_dim(), cp.input_dim());
    check_shape(k, m, n, "K")?;
    let mut rhs = DMatrix::<f64>::zeros(n + m, n);
    rhs.rows_mut(0, m).copy_from(k);
    rhs.rows_mut(m, n).fill_with_identity();
    cp.phi()
        .clone()
        .lu()
        .solve(&rhs)
        .filter(|v| v.iter().all(|x| x.is_finite()))
        .ok_or_else(|| Error::PhiSingular {
            sigma_min: cp.sigma_min(),
        })
}

/// One correction `V ← V − X̄₀†(X̄₀V − Iₙ)` to cancel constraint drift.
pub fn reproject(v: &DMatrix<f64>, xbar0: &DMatrix<f64>) -> DMatrix<f64> {
    let n = xbar0.nrows();
    let drift = xbar0 * v - DMatrix::<f64>::identity(n, n);
    v - pseudoinverse(xbar0) * drift
}

/// Gain together with its parametrization and cost on the current data.
#[derive(Debug, Clone)]
pub struct PolicyState {
    pub k: DMatrix<f64>,
    pub v: DMatrix<f64>,
    pub sigma_v: DMatrix<f64>,
    pub p_v: DMatrix<f64>,
    pub cost: f64,
}

impl PolicyState {
    pub fn evaluate(k: &DMatrix<f64>, cp: &CovParam, w: &CostWeights) -> Result<Self> {
        let v = reparametrize(k, cp)?;
        let c = cost_v(&v, cp, w)?;
        Ok(Self {
            k: k.clone(),
            v,
            sigma_v: c.sigma_v,
            p_v: c.p_v,
            cost: c.cost,
        })
    }

    pub fn gradient(&self, cp: &CovParam, w: &CostWeights) -> DMatrix<f64> {
        let c = VCost {
            cost: self.cost,
            sigma_v: self.sigma_v.clone(),
            p_v: self.p_v.clone(),
        };
        gradient_from(&self.v, cp, w, &c)
    }
}
