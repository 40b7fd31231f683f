//! Perturbation-free DeePO: gated updates, multiplicative gain scaling
//! over a certified interval, and the β-decay certificate behind it.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::datastore::{DataSet, DataStore};
use crate::deepo::deepo_update;
use crate::error::{Error, Result};
use crate::harness::{self, Action, Control, Learner, PlantModel, RunOutput, Update};
use crate::kernels::{
    check_shape, eigen_extremes_symmetric, min_eigenvalue_symmetric, singular_values,
    solve_modified_dare,
};
use crate::lqr::{ls_identify, CostWeights};

/// Absolute bisection tolerance on the interval endpoints.
pub const INTERVAL_TOL: f64 = 1e-6;
const INITIAL_PROBE: f64 = 1e-3;
/// Certified gains closer than this (Frobenius) are reused.
pub const CERT_REUSE_TOL: f64 = 1e-9;
const BOUND_REL_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PfdeepoConfig {
    pub gamma: f64,
    pub delta: f64,
    pub eta: f64,
    pub beta: f64,
    pub v_cap_lo: f64,
    pub v_cap_hi: f64,
    pub horizon: usize,
    #[serde(default)]
    pub seed: u64,
}

impl Default for PfdeepoConfig {
    fn default() -> Self {
        Self {
            gamma: 0.1,
            delta: 0.1,
            eta: 1e-4,
            beta: 0.98,
            v_cap_lo: 0.5,
            v_cap_hi: 1.5,
            horizon: 100,
            seed: 0,
        }
    }
}

impl PfdeepoConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must be positive, got {v}")))
            }
        };
        positive("gamma", self.gamma)?;
        positive("delta", self.delta)?;
        positive("eta", self.eta)?;
        positive("v_cap_lo", self.v_cap_lo)?;
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(Error::Config(format!(
                "beta must lie in (0, 1), got {}",
                self.beta
            )));
        }
        if !(self.v_cap_lo < 1.0 && 1.0 < self.v_cap_hi && self.v_cap_hi.is_finite()) {
            return Err(Error::Config(format!(
                "caps must satisfy v_cap_lo < 1 < v_cap_hi, got [{}, {}]",
                self.v_cap_lo, self.v_cap_hi
            )));
        }
        if self.horizon == 0 {
            return Err(Error::Config("horizon must be at least 1".into()));
        }
        Ok(())
    }
}

/// Certified scaling interval for a fixed gain.
#[derive(Debug, Clone)]
pub struct StabilityCertificate {
    /// Modified-DARE solution for `(Â, B̂, Q, R, β)`.
    pub h: DMatrix<f64>,
    pub beta: f64,
    pub v_lo: f64,
    pub v_hi: f64,
    /// Caps the endpoint search was clamped to.
    pub caps: (f64, f64),
    pub h_min: f64,
    pub h_max: f64,
    pub k: DMatrix<f64>,
    pub a_hat: DMatrix<f64>,
    pub b_hat: DMatrix<f64>,
}

impl StabilityCertificate {
    pub fn lo_capped(&self) -> bool {
        self.v_lo <= self.caps.0
    }

    pub fn hi_capped(&self) -> bool {
        self.v_hi >= self.caps.1
    }
}

/// `M(v) = Q − Kᵀ((v−1)²B̂ᵀHB̂ + (1−2v)R)K`.
pub fn interval_matrix(
    k: &DMatrix<f64>,
    b_hat: &DMatrix<f64>,
    h: &DMatrix<f64>,
    w: &CostWeights,
    v: f64,
) -> DMatrix<f64> {
    let bhb = b_hat.transpose() * h * b_hat;
    let inner = bhb * (v - 1.0).powi(2) + w.r() * (1.0 - 2.0 * v);
    let m = w.q() - k.transpose() * inner * k;
    (&m + m.transpose()) * 0.5
}

pub fn interval_margin(
    k: &DMatrix<f64>,
    b_hat: &DMatrix<f64>,
    h: &DMatrix<f64>,
    w: &CostWeights,
    v: f64,
) -> Result<f64> {
    min_eigenvalue_symmetric(&interval_matrix(k, b_hat, h, w, v))
}

/// Walks from 1 toward `cap` (`dir = ±1`), doubling the step until `M(v)`
/// loses semidefiniteness, then bisects the last bracket.
fn search_endpoint(feasible: &dyn Fn(f64) -> Result<bool>, dir: f64, cap: f64) -> Result<f64> {
    let mut inside = 1.0;
    let mut dist = INITIAL_PROBE;
    let outside = loop {
        let probe = 1.0 + dir * dist;
        if (probe - cap) * dir >= 0.0 {
            if feasible(cap)? {
                return Ok(cap);
            }
            break cap;
        }
        if !feasible(probe)? {
            break probe;
        }
        inside = probe;
        dist *= 2.0;
    };
    let (mut good, mut bad) = (inside, outside);
    while (bad - good).abs() > INTERVAL_TOL {
        let mid = 0.5 * (good + bad);
        if feasible(mid)? {
            good = mid;
        } else {
            bad = mid;
        }
    }
    Ok(good)
}

/// Largest interval around 1 on which `M(v) ⪰ 0`, clamped to `caps`.
pub fn stability_interval(
    k: &DMatrix<f64>,
    a_hat: &DMatrix<f64>,
    b_hat: &DMatrix<f64>,
    w: &CostWeights,
    beta: f64,
    caps: (f64, f64),
) -> Result<StabilityCertificate> {
    let (cap_lo, cap_hi) = caps;
    if !(cap_lo.is_finite() && cap_hi.is_finite() && cap_lo < 1.0 && 1.0 < cap_hi) {
        return Err(Error::InvalidArgument(format!(
            "caps must be finite with lo < 1 < hi, got [{cap_lo}, {cap_hi}]"
        )));
    }
    let n = a_hat.nrows();
    check_shape(k, b_hat.ncols(), n, "K")?;
    let h = solve_modified_dare(a_hat, b_hat, w.q(), w.r(), beta)?;
    let at_one = interval_margin(k, b_hat, &h, w, 1.0)?;
    if !(at_one > 0.0) {
        return Err(Error::NotPD {
            min_eigenvalue: at_one,
        });
    }
    let feasible = |v: f64| -> Result<bool> { Ok(interval_margin(k, b_hat, &h, w, v)? >= 0.0) };
    // The search never steps past a cap, so its result is already clamped.
    let v_hi = search_endpoint(&feasible, 1.0, cap_hi)?;
    let v_lo = search_endpoint(&feasible, -1.0, cap_lo)?;
    let (h_min, h_max) = eigen_extremes_symmetric(&h)?;
    Ok(StabilityCertificate {
        v_lo,
        v_hi,
        caps,
        h,
        beta,
        h_min,
        h_max,
        k: k.clone(),
        a_hat: a_hat.clone(),
        b_hat: b_hat.clone(),
    })
}

/// Outcome of simulating `x_{k+1} = (Â + v_kB̂K)x_k` against the certificate.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundReport {
    pub steps: usize,
    /// Steps with `‖x_k‖ > βᵏ√(h_max/h_min)‖x₀‖(1 + 1e−9)`.
    pub bound_violations: usize,
    /// Steps with `V(x_{k+1}) > β²V(x_k)` beyond the same relative slack.
    pub decrement_violations: usize,
    /// Largest `‖x_k‖ / (βᵏ√(h_max/h_min)‖x₀‖)` seen.
    pub worst_ratio: f64,
}

impl BoundReport {
    pub fn holds(&self) -> bool {
        self.bound_violations == 0 && self.decrement_violations == 0
    }
}

pub fn verify_exponential_bound(
    a_hat: &DMatrix<f64>,
    b_hat: &DMatrix<f64>,
    k: &DMatrix<f64>,
    cert: &StabilityCertificate,
    x0: &DVector<f64>,
    v_seq: &[f64],
    steps: usize,
) -> Result<BoundReport> {
    let n = a_hat.nrows();
    check_shape(b_hat, n, k.nrows(), "B̂")?;
    check_shape(k, b_hat.ncols(), n, "K")?;
    check_shape(&cert.h, n, n, "H")?;
    if x0.len() != n {
        return Err(Error::dim(format!(
            "x0 has length {}, expected {n}",
            x0.len()
        )));
    }
    if v_seq.len() < steps {
        return Err(Error::dim(format!(
            "v sequence has {} entries, {steps} steps requested",
            v_seq.len()
        )));
    }
    let beta2 = cert.beta * cert.beta;
    let scale = (cert.h_max / cert.h_min).sqrt() * x0.norm();
    let lyap = |x: &DVector<f64>| (x.transpose() * &cert.h * x)[(0, 0)];
    let bk = b_hat * k;
    let mut report = BoundReport {
        steps,
        bound_violations: 0,
        decrement_violations: 0,
        worst_ratio: 0.0,
    };
    let mut x = x0.clone();
    let mut bound = scale;
    #[allow(clippy::needless_range_loop)]
    for step in 0..=steps {
        if bound > 0.0 {
            report.worst_ratio = report.worst_ratio.max(x.norm() / bound);
        }
        if x.norm() > bound * (1.0 + BOUND_REL_TOL) {
            report.bound_violations += 1;
        }
        if step == steps {
            break;
        }
        let next = (a_hat + &bk * v_seq[step]) * &x;
        if lyap(&next) > beta2 * lyap(&x) * (1.0 + BOUND_REL_TOL) {
            report.decrement_violations += 1;
        }
        x = next;
        bound *= cert.beta;
    }
    Ok(report)
}

/// Online PFDeePO.
#[derive(Debug, Clone)]
pub struct PfdeepoLearner {
    store: DataStore,
    k: DMatrix<f64>,
    dk: DMatrix<f64>,
    weights: CostWeights,
    cfg: PfdeepoConfig,
    rng: ChaCha20Rng,
    cert: Option<StabilityCertificate>,
    refreshes: usize,
    held: bool,
}

impl PfdeepoLearner {
    pub fn new(
        ds0: DataSet,
        k0: DMatrix<f64>,
        weights: CostWeights,
        cfg: PfdeepoConfig,
    ) -> Result<Self> {
        cfg.validate()?;
        let (n, m) = (ds0.state_dim(), ds0.input_dim());
        check_shape(&k0, m, n, "K0")?;
        check_shape(weights.q(), n, n, "Q")?;
        check_shape(weights.r(), m, m, "R")?;
        ds0.check_rank()?;
        let rng = harness::stream_rng(cfg.seed, harness::stream::SCALE);
        Ok(Self {
            store: DataStore::new(ds0)?,
            dk: DMatrix::from_element(m, n, cfg.delta + 1.0),
            k: k0,
            weights,
            cfg,
            rng,
            cert: None,
            refreshes: 0,
            held: false,
        })
    }

    pub fn delta_k(&self) -> &DMatrix<f64> {
        &self.dk
    }

    pub fn certificate(&self) -> Option<&StabilityCertificate> {
        self.cert.as_ref()
    }

    /// Number of times the certificate was (re)computed.
    pub fn refreshes(&self) -> usize {
        self.refreshes
    }

    fn certify(&mut self) -> Result<&StabilityCertificate> {
        let stale = match &self.cert {
            Some(c) => (&c.k - &self.k).norm() > CERT_REUSE_TOL,
            None => true,
        };
        if stale {
            let (a_hat, b_hat) = ls_identify(self.store.data())?;
            let cert = stability_interval(
                &self.k,
                &a_hat,
                &b_hat,
                &self.weights,
                self.cfg.beta,
                (self.cfg.v_cap_lo, self.cfg.v_cap_hi),
            )?;
            self.cert = Some(cert);
            self.refreshes += 1;
        }
        Ok(self.cert.as_ref().expect("certificate just set"))
    }
}

fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    singular_values(m).iter().copied().fold(0.0, f64::max)
}

impl Learner for PfdeepoLearner {
    fn gain(&self) -> &DMatrix<f64> {
        &self.k
    }

    fn sigma_min(&self) -> f64 {
        self.store.cov().sigma_min()
    }

    fn data(&self) -> &DataSet {
        self.store.data()
    }

    fn dk_norm(&self) -> f64 {
        spectral_norm(&self.dk)
    }

    fn certified(&self) -> bool {
        self.cert.is_some()
    }

    fn held(&self) -> bool {
        self.held
    }

    fn act(&mut self, x: &DVector<f64>) -> Result<Action> {
        if self.dk_norm() > self.cfg.delta || x.norm() <= self.cfg.gamma {
            return Ok(Action {
                u: &self.k * x,
                v: 1.0,
                control: Control::Plain,
            });
        }
        let (lo, hi) = {
            let c = self.certify()?;
            (c.v_lo, c.v_hi)
        };
        let v = self.rng.random_range(lo..=hi);
        Ok(Action {
            u: &self.k * x * v,
            v,
            control: Control::Scaled,
        })
    }

    fn observe(
        &mut self,
        x: &DVector<f64>,
        u: &DVector<f64>,
        x_next: &DVector<f64>,
    ) -> Result<Update> {
        self.held = false;
        if x.norm() <= self.cfg.gamma {
            self.dk.fill(0.0);
            return Ok(Update::Freeze);
        }
        self.store.append_sample(x, u, x_next)?;
        let report = deepo_update(&self.k, self.store.cov(), &self.weights, self.cfg.eta)?;
        self.held = report.held;
        self.dk = &report.k_next - &self.k;
        self.k = report.k_next;
        Ok(Update::Update)
    }
}

pub fn run_pfdeepo(
    plant: &PlantModel,
    ds0: DataSet,
    k0: DMatrix<f64>,
    weights: CostWeights,
    cfg: PfdeepoConfig,
) -> Result<RunOutput> {
    let (horizon, seed) = (cfg.horizon, cfg.seed);
    let mut learner = PfdeepoLearner::new(ds0, k0, weights.clone(), cfg)?;
    harness::simulate(plant, &mut learner, &weights, horizon, None, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::{generate_offline, reference_plant, Branch};
    use crate::kernels::riccati_gain;
    use approx::assert_relative_eq;

    fn scalar(v: f64) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, v)
    }

    fn golden() -> f64 {
        (1.0 + 5f64.sqrt()) / 2.0
    }

    #[test]
    fn config_validation() {
        assert!(PfdeepoConfig::default().validate().is_ok());
        for bad in [
            PfdeepoConfig {
                gamma: 0.0,
                ..Default::default()
            },
            PfdeepoConfig {
                beta: 1.0,
                ..Default::default()
            },
            PfdeepoConfig {
                v_cap_lo: 0.0,
                ..Default::default()
            },
            PfdeepoConfig {
                v_cap_hi: 1.0,
                ..Default::default()
            },
            PfdeepoConfig {
                horizon: 0,
                ..Default::default()
            },
        ] {
            assert!(matches!(bad.validate(), Err(Error::Config(_))), "{bad:?}");
        }
    }

    #[test]
    fn zero_gain_returns_caps() {
        let w = CostWeights::identity(2, 1);
        let a = DMatrix::from_row_slice(2, 2, &[0.5, 0.1, 0.0, 0.3]);
        let b = DMatrix::from_row_slice(2, 1, &[1.0, 0.5]);
        let c = stability_interval(&DMatrix::zeros(1, 2), &a, &b, &w, 0.9, (0.5, 1.5)).unwrap();
        assert_eq!((c.v_lo, c.v_hi), (0.5, 1.5));
        assert!(c.lo_capped() && c.hi_capped());
    }

    #[test]
    fn golden_ratio_interval() {
        let one = scalar(1.0);
        let w = CostWeights::identity(1, 1);
        let k = scalar(-1.0 / golden());
        let c = stability_interval(&k, &one, &one, &w, 1.0, (-10.0, 10.0)).unwrap();
        assert_relative_eq!(c.h[(0, 0)], golden(), epsilon = 1e-9);
        assert!((c.v_lo - 0.0).abs() <= 2e-6, "{}", c.v_lo);
        assert!((c.v_hi - (1.0 + 5f64.sqrt())).abs() <= 2e-6, "{}", c.v_hi);
        assert!(!c.lo_capped() && !c.hi_capped());
    }

    #[test]
    fn bad_caps_and_inputs_are_rejected() {
        let one = scalar(1.0);
        let w = CostWeights::identity(1, 1);
        for caps in [
            (1.0, 2.0),
            (0.5, 1.0),
            (f64::NEG_INFINITY, 2.0),
            (0.5, f64::NAN),
        ] {
            assert!(stability_interval(&one, &one, &one, &w, 0.9, caps).is_err());
        }
        let nan_gain = scalar(f64::NAN);
        assert!(stability_interval(&nan_gain, &one, &one, &w, 0.9, (0.5, 1.5)).is_err());
    }

    #[test]
    fn interval_always_contains_one() {
        let plant = reference_plant(0.0);
        let w = CostWeights::identity(4, 2);
        let h = solve_modified_dare(&plant.a, &plant.b, w.q(), w.r(), 1.0).unwrap();
        let k = riccati_gain(&plant.a, &plant.b, w.r(), &h).unwrap();
        for scale in [0.0, 0.5, 1.0, 3.0, 10.0] {
            let c = stability_interval(&(&k * scale), &plant.a, &plant.b, &w, 0.98, (0.01, 100.0))
                .unwrap();
            assert!(
                c.v_lo < 1.0 && 1.0 < c.v_hi,
                "{scale}: {} {}",
                c.v_lo,
                c.v_hi
            );
        }
    }

    #[test]
    fn nominal_loop_satisfies_bound() {
        let one = scalar(1.0);
        let w = CostWeights::identity(1, 1);
        let h = solve_modified_dare(&one, &one, w.q(), w.r(), 0.9).unwrap();
        let k = riccati_gain(&one, &one, w.r(), &h).unwrap();
        let c = stability_interval(&k, &one, &one, &w, 0.9, (0.5, 1.5)).unwrap();
        let x0 = DVector::from_element(1, 1.0);
        let r = verify_exponential_bound(&one, &one, &k, &c, &x0, &[1.0; 50], 50).unwrap();
        assert!(r.holds(), "{r:?}");
    }

    #[test]
    fn scaling_beyond_sharp_endpoint_breaks_decrement() {
        // β = 1 so the gain is the Riccati gain of H and M(v) is the exact decrement.
        let one = scalar(1.0);
        let w = CostWeights::identity(1, 1);
        let k = scalar(-1.0 / golden());
        let c = stability_interval(&k, &one, &one, &w, 1.0, (-10.0, 10.0)).unwrap();
        let v_out = c.v_hi + 0.05;
        assert!(interval_margin(&k, &one, &c.h, &w, v_out).unwrap() < 0.0);
        let x0 = DVector::from_element(1, 1.0);
        let r = verify_exponential_bound(&one, &one, &k, &c, &x0, &[v_out], 1).unwrap();
        assert!(r.decrement_violations > 0, "{r:?}");
    }

    #[test]
    fn verifier_rejects_bad_shapes() {
        let one = scalar(1.0);
        let w = CostWeights::identity(1, 1);
        let c = stability_interval(&scalar(-0.5), &one, &one, &w, 0.9, (0.5, 1.5)).unwrap();
        let x0 = DVector::from_element(2, 1.0);
        assert!(matches!(
            verify_exponential_bound(&one, &one, &scalar(-0.5), &c, &x0, &[1.0], 1),
            Err(Error::Dimension(_))
        ));
    }

    fn learner(seed: u64) -> (PfdeepoLearner, PlantModel) {
        let plant = reference_plant(0.01);
        let ds0 = generate_offline(&plant, 8, 0.01, seed).unwrap();
        let cfg = PfdeepoConfig {
            seed,
            ..Default::default()
        };
        let l = PfdeepoLearner::new(ds0, DMatrix::zeros(2, 4), CostWeights::identity(4, 2), cfg)
            .unwrap();
        (l, plant)
    }

    #[test]
    fn first_step_is_plain_even_far_from_equilibrium() {
        let (mut l, _) = learner(1);
        assert_eq!(l.delta_k(), &DMatrix::from_element(2, 4, 1.1));
        let x = DVector::from_element(4, 3.0);
        let act = l.act(&x).unwrap();
        assert_eq!(act.control, Control::Plain);
        assert_eq!(act.v, 1.0);
        assert!(!l.certified());
    }

    #[test]
    fn small_state_freezes_gain_and_data() {
        let (mut l, _) = learner(2);
        let x = DVector::from_element(4, 0.01);
        let k_before = l.gain().clone();
        let len = l.data().len();
        let act = l.act(&x).unwrap();
        assert_eq!(act.control, Control::Plain);
        let upd = l.observe(&x, &act.u, &x).unwrap();
        assert_eq!(upd, Update::Freeze);
        assert_eq!(l.gain(), &k_before);
        assert_eq!(l.data().len(), len);
    }

    #[test]
    fn converged_gain_draws_uniform_scalings() {
        let (mut l, _) = learner(3);
        l.dk.fill(0.0);
        let x = DVector::from_element(4, 1.0);
        let vs: Vec<f64> = (0..1000).map(|_| l.act(&x).unwrap().v).collect();
        assert_eq!(l.refreshes(), 1);
        let c = l.certificate().unwrap();
        let (lo, hi) = (c.v_lo, c.v_hi);
        assert!(vs.iter().all(|&v| lo <= v && v <= hi));
        let mean = vs.iter().sum::<f64>() / vs.len() as f64;
        let se = (hi - lo) / (12.0f64 * vs.len() as f64).sqrt();
        assert!((mean - 0.5 * (lo + hi)).abs() <= 3.0 * se, "mean {mean}");
        let act = l.act(&x).unwrap();
        assert_eq!(act.control, Control::Scaled);
        assert!((&act.u - l.gain() * &x * act.v).amax() == 0.0);
    }

    #[test]
    fn trace_branches_are_exclusive_and_freeze_is_exact() {
        let (_, plant) = learner(0);
        let ds0 = generate_offline(&plant, 8, 0.01, 6).unwrap();
        let cfg = PfdeepoConfig {
            seed: 6,
            ..Default::default()
        };
        let out = run_pfdeepo(
            &plant,
            ds0,
            DMatrix::zeros(2, 4),
            CostWeights::identity(4, 2),
            cfg,
        )
        .unwrap();
        let recs = &out.trace.records;
        assert_eq!(recs.len(), 101);
        for pair in recs.windows(2) {
            let (r, next) = (&pair[0], &pair[1]);
            let Branch::Step { control, update } = r.branch else {
                panic!("non-terminal row {} has no branch", r.k);
            };
            let small = r.x.iter().map(|v| v * v).sum::<f64>().sqrt() <= 0.1;
            assert_eq!(update == Update::Freeze, small);
            if small {
                assert_eq!(r.gain, next.gain);
            }
            if control == Control::Plain {
                assert_eq!(r.v, 1.0);
            }
        }
        assert_eq!(recs[100].branch, Branch::Terminal);
    }
}
