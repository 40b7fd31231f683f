//! Baseline DeePO: additive probing noise and one projected gradient step
//! on the covariance parametrization per collected sample.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::datastore::{CovParam, DataSet, DataStore};
use crate::error::{Error, Result};
use crate::harness::{self, Action, Control, Learner, PlantModel, RunOutput, Update};
use crate::kernels::check_shape;
use crate::lqr::{
    feasibility_residual, project_gradient, reparametrize, reproject, CostWeights, PolicyState,
};

/// `Φ` is treated as singular below this minimum singular value.
pub const PHI_SINGULAR_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeepoConfig {
    pub eta: f64,
    /// Probing-noise standard deviation; zero disables probing.
    pub sigma_e: f64,
    pub horizon: usize,
    #[serde(default)]
    pub seed: u64,
}

impl Default for DeepoConfig {
    fn default() -> Self {
        Self {
            eta: 1e-4,
            sigma_e: 0.1,
            horizon: 100,
            seed: 0,
        }
    }
}

impl DeepoConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(Error::Config(format!(
                "eta must be positive, got {}",
                self.eta
            )));
        }
        if !(self.sigma_e >= 0.0 && self.sigma_e.is_finite()) {
            return Err(Error::Config(format!(
                "sigma_e must be non-negative, got {}",
                self.sigma_e
            )));
        }
        if self.horizon == 0 {
            return Err(Error::Config("horizon must be at least 1".into()));
        }
        Ok(())
    }
}

/// Diagnostics of one gain update.
#[derive(Debug, Clone)]
pub struct UpdateReport {
    pub k_next: DMatrix<f64>,
    /// `C(V)` at the re-parametrized current gain.
    pub cost: f64,
    pub sigma_min: f64,
    /// `‖X̄₀V − Iₙ‖` right after `V = Φ⁻¹[K; Iₙ]`.
    pub feasibility: f64,
    /// `‖Ū₀V − K‖` right after `V = Φ⁻¹[K; Iₙ]`.
    pub reconstruction: f64,
    /// The data-implied closed loop `X̄₁V` was not Schur, so the cost and
    /// its gradient are undefined and the gain was kept.
    pub held: bool,
}

/// Gradient update on an already-appended `Φ`:
/// `V = Φ⁻¹[K; Iₙ]`, `V′ = V − ηΠ∇C`, `K′ = Ū₀V′`.
///
/// Short noisy datasets can make `X̄₁V` unstable even when the true loop is
/// stable; such steps keep `K` and set [`UpdateReport::held`].
pub fn deepo_update(
    k: &DMatrix<f64>,
    cp: &CovParam,
    w: &CostWeights,
    eta: f64,
) -> Result<UpdateReport> {
    let sigma_min = cp.sigma_min();
    if !(sigma_min >= PHI_SINGULAR_TOL) {
        return Err(Error::PhiSingular { sigma_min });
    }
    let ubar0 = cp.ubar0();
    let xbar0 = cp.xbar0();
    let state = match PolicyState::evaluate(k, cp, w) {
        Ok(s) => s,
        Err(Error::Unstable { .. }) => {
            let v = reparametrize(k, cp)?;
            return Ok(UpdateReport {
                k_next: k.clone(),
                cost: f64::INFINITY,
                sigma_min,
                feasibility: feasibility_residual(&v, cp),
                reconstruction: (&ubar0 * &v - k).norm(),
                held: true,
            });
        }
        Err(e) => return Err(e),
    };
    let feasibility = feasibility_residual(&state.v, cp);
    let reconstruction = (&ubar0 * &state.v - k).norm();
    let step = project_gradient(&state.gradient(cp, w), &xbar0) * eta;
    let v_next = reproject(&(&state.v - step), &xbar0);
    Ok(UpdateReport {
        k_next: ubar0 * v_next,
        cost: state.cost,
        sigma_min,
        feasibility,
        reconstruction,
        held: false,
    })
}

/// Online DeePO with probing noise `e ~ N(0, σ_e²I)`.
#[derive(Debug, Clone)]
pub struct DeepoLearner {
    store: DataStore,
    k: DMatrix<f64>,
    weights: CostWeights,
    cfg: DeepoConfig,
    rng: ChaCha20Rng,
    last: Option<UpdateReport>,
}

impl DeepoLearner {
    pub fn new(
        ds0: DataSet,
        k0: DMatrix<f64>,
        weights: CostWeights,
        cfg: DeepoConfig,
    ) -> Result<Self> {
        cfg.validate()?;
        check_shape(&k0, ds0.input_dim(), ds0.state_dim(), "K0")?;
        check_shape(weights.q(), ds0.state_dim(), ds0.state_dim(), "Q")?;
        check_shape(weights.r(), ds0.input_dim(), ds0.input_dim(), "R")?;
        ds0.check_rank()?;
        let rng = harness::stream_rng(cfg.seed, harness::stream::PROBE);
        Ok(Self {
            store: DataStore::new(ds0)?,
            k: k0,
            weights,
            cfg,
            rng,
            last: None,
        })
    }

    pub fn last_update(&self) -> Option<&UpdateReport> {
        self.last.as_ref()
    }

    pub fn store(&self) -> &DataStore {
        &self.store
    }
}

impl Learner for DeepoLearner {
    fn gain(&self) -> &DMatrix<f64> {
        &self.k
    }

    fn sigma_min(&self) -> f64 {
        self.store.cov().sigma_min()
    }

    fn data(&self) -> &DataSet {
        self.store.data()
    }

    fn act(&mut self, x: &DVector<f64>) -> Result<Action> {
        let mut u = &self.k * x;
        let control = if self.cfg.sigma_e > 0.0 {
            for ui in u.iter_mut() {
                let e: f64 = self.rng.sample(StandardNormal);
                *ui += self.cfg.sigma_e * e;
            }
            Control::Probe
        } else {
            Control::Plain
        };
        Ok(Action { u, v: 1.0, control })
    }

    fn held(&self) -> bool {
        self.last.as_ref().is_some_and(|r| r.held)
    }

    fn observe(
        &mut self,
        x: &DVector<f64>,
        u: &DVector<f64>,
        x_next: &DVector<f64>,
    ) -> Result<Update> {
        self.store.append_sample(x, u, x_next)?;
        let report = deepo_update(&self.k, self.store.cov(), &self.weights, self.cfg.eta)?;
        self.k = report.k_next.clone();
        self.last = Some(report);
        Ok(Update::Update)
    }
}

/// Runs DeePO on `plant` from `x = 0` for `cfg.horizon` steps.
pub fn run_deepo(
    plant: &PlantModel,
    ds0: DataSet,
    k0: DMatrix<f64>,
    weights: CostWeights,
    cfg: DeepoConfig,
) -> Result<RunOutput> {
    let (horizon, seed) = (cfg.horizon, cfg.seed);
    let mut learner = DeepoLearner::new(ds0, k0, weights.clone(), cfg)?;
    harness::simulate(plant, &mut learner, &weights, horizon, None, seed)
}
