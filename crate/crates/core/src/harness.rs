//! Plant simulator, offline data generation, experiment configuration and
//! trace output (CSV and SVG).
//!
//! Every random quantity comes from ChaCha20 seeded with the experiment seed
//! and a per-component stream id (see [`stream`]), so a run is a pure
//! function of its configuration.

use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::datastore::DataSet;
use crate::deepo::{DeepoConfig, DeepoLearner};
use crate::error::{Error, Result};
use crate::kernels::check_shape;
use crate::lqr::CostWeights;
use crate::pfdeepo::{PfdeepoConfig, PfdeepoLearner};

/// ChaCha20 stream ids, one per random component.
pub mod stream {
    /// Offline excitation and noise. Retry `r ≥ 1` uses `OFFLINE_RETRY | r`.
    pub const OFFLINE: u64 = 1;
    pub const OFFLINE_RETRY: u64 = 1 << 32;
    pub const PROCESS: u64 = 2;
    pub const PROBE: u64 = 3;
    pub const SCALE: u64 = 4;
    pub const DISTURBANCE: u64 = 5;
}

/// Offline generation attempts beyond the first.
pub const OFFLINE_RETRIES: u64 = 10;

pub fn stream_rng(seed: u64, stream: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn normal_vec(rng: &mut impl Rng, len: usize, std: f64) -> DVector<f64> {
    DVector::from_fn(len, |_, _| std * rng.sample::<f64, _>(StandardNormal))
}

/// Ground-truth plant `x⁺ = Ax + Bu + ω`, `ω ~ N(0, σ_w²I)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantModel {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub sigma_w: f64,
}

impl PlantModel {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, sigma_w: f64) -> Result<Self> {
        let n = a.nrows();
        check_shape(&a, n, n, "A")?;
        if b.nrows() != n || b.ncols() == 0 {
            return Err(Error::dim(format!(
                "B must be {n}xm with m ≥ 1, got {}x{}",
                b.nrows(),
                b.ncols()
            )));
        }
        if !(sigma_w >= 0.0 && sigma_w.is_finite()) {
            return Err(Error::Config(format!(
                "sigma_w must be a finite non-negative number, got {sigma_w}"
            )));
        }
        Ok(Self { a, b, sigma_w })
    }

    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.b.ncols()
    }
}

pub const REFERENCE_A: [[f64; 4]; 4] = [
    [-0.13, 0.14, -0.29, 0.28],
    [0.48, 0.09, 0.41, 0.30],
    [-0.01, 0.04, 0.17, 0.43],
    [0.14, 0.31, -0.29, -0.10],
];

pub const REFERENCE_B: [[f64; 2]; 4] = [[1.63, 0.93], [0.26, 1.79], [1.46, 1.18], [0.77, 0.11]];

fn rows_to_matrix<const C: usize>(rows: &[[f64; C]]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), C, |i, j| rows[i][j])
}

/// The 4-state, 2-input benchmark plant (open-loop stable, ρ(A) ≈ 0.45).
pub fn reference_plant(sigma_w: f64) -> PlantModel {
    PlantModel {
        a: rows_to_matrix(&REFERENCE_A),
        b: rows_to_matrix(&REFERENCE_B),
        sigma_w,
    }
}

pub fn plant_step(
    p: &PlantModel,
    x: &DVector<f64>,
    u: &DVector<f64>,
    rng: &mut impl Rng,
) -> Result<DVector<f64>> {
    if x.len() != p.state_dim() || u.len() != p.input_dim() {
        return Err(Error::dim(format!(
            "plant expects x ∈ R^{} and u ∈ R^{}, got {} and {}",
            p.state_dim(),
            p.input_dim(),
            x.len(),
            u.len()
        )));
    }
    let w = normal_vec(rng, x.len(), p.sigma_w);
    Ok(&p.a * x + &p.b * u + w)
}

/// Open-loop trajectory from `x = 0` with inputs `N(0, σ_u²I)`, regenerated
/// on a fresh stream while `rank(𝒟) < n + m`.
pub fn generate_offline(p: &PlantModel, t: usize, sigma_u: f64, seed: u64) -> Result<DataSet> {
    let (n, m) = (p.state_dim(), p.input_dim());
    if t < n + m {
        return Err(Error::RankDeficient {
            rank: t,
            required: n + m,
        });
    }
    let mut rank = 0;
    for attempt in 0..=OFFLINE_RETRIES {
        let id = if attempt == 0 {
            stream::OFFLINE
        } else {
            stream::OFFLINE_RETRY | attempt
        };
        let mut rng = stream_rng(seed, id);
        let mut ds = DataSet::new(n, m);
        let mut x = DVector::zeros(n);
        for _ in 0..t {
            let u = normal_vec(&mut rng, m, sigma_u);
            let xn = plant_step(p, &x, &u, &mut rng)?;
            ds.push(&x, &u, &xn)?;
            x = xn;
        }
        rank = ds.rank();
        if rank == n + m {
            return Ok(ds);
        }
    }
    Err(Error::RankDeficient {
        rank,
        required: n + m,
    })
}

/// How the input of a step was formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Control {
    /// `u = Kx`
    Plain,
    /// `u = Kx + e`
    Probe,
    /// `u = vKx`
    Scaled,
}

/// Whether the step's sample entered the dataset and moved the gain.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Update {
    Update,
    Freeze,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    Step { control: Control, update: Update },
    Terminal,
}

impl Branch {
    pub fn tag(&self) -> &'static str {
        let Branch::Step { control, update } = self else {
            return "terminal";
        };
        match (control, update) {
            (Control::Plain, Update::Update) => "plain-update",
            (Control::Plain, Update::Freeze) => "plain-freeze",
            (Control::Probe, Update::Update) => "probe-update",
            (Control::Probe, Update::Freeze) => "probe-freeze",
            (Control::Scaled, Update::Update) => "scaled-update",
            (Control::Scaled, Update::Freeze) => "scaled-freeze",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Self> {
        if tag == "terminal" {
            return Some(Branch::Terminal);
        }
        let (c, u) = tag.split_once('-')?;
        let control = match c {
            "plain" => Control::Plain,
            "probe" => Control::Probe,
            "scaled" => Control::Scaled,
            _ => return None,
        };
        let update = match u {
            "update" => Update::Update,
            "freeze" => Update::Freeze,
            _ => return None,
        };
        Some(Branch::Step { control, update })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Action {
    pub u: DVector<f64>,
    /// Multiplicative scaling applied to `Kx` (1 when unscaled).
    pub v: f64,
    pub control: Control,
}

/// An online learner driven one sample at a time.
pub trait Learner {
    fn gain(&self) -> &DMatrix<f64>;
    fn sigma_min(&self) -> f64;
    fn data(&self) -> &DataSet;
    fn act(&mut self, x: &DVector<f64>) -> Result<Action>;
    fn observe(
        &mut self,
        x: &DVector<f64>,
        u: &DVector<f64>,
        x_next: &DVector<f64>,
    ) -> Result<Update>;

    fn dk_norm(&self) -> f64 {
        0.0
    }

    fn certified(&self) -> bool {
        false
    }

    /// The last update kept the gain because the data-implied loop was unstable.
    fn held(&self) -> bool {
        false
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub k: usize,
    pub x: Vec<f64>,
    pub u: Vec<f64>,
    /// Gain in force at step `k`, row-major.
    pub gain: Vec<f64>,
    /// `σ_min(Φ)` before the step's sample is appended.
    pub sigma_min: f64,
    /// `xᵀQx + uᵀRu`
    pub cost: f64,
    pub branch: Branch,
    pub v: f64,
    pub dk_norm: f64,
    pub certified: bool,
    pub held: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceLog {
    pub label: String,
    pub n: usize,
    pub m: usize,
    pub records: Vec<TraceRecord>,
}

impl TraceLog {
    pub fn horizon(&self) -> usize {
        self.records.len().saturating_sub(1)
    }

    pub fn state_norms(&self) -> Vec<f64> {
        self.records
            .iter()
            .map(|r| r.x.iter().map(|v| v * v).sum::<f64>().sqrt())
            .collect()
    }

    pub fn sigma_mins(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.sigma_min).collect()
    }

    pub fn final_gain(&self) -> Option<DMatrix<f64>> {
        self.records
            .last()
            .map(|r| DMatrix::from_row_slice(self.m, self.n, &r.gain))
    }
}

/// State kick `x ← x + d`, `d` uniform on `[−magnitude, magnitude]ⁿ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Disturbance {
    pub time: usize,
    pub magnitude: f64,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub trace: TraceLog,
    /// Dataset at the end of the run (offline samples included).
    pub data: DataSet,
}

fn quadratic(x: &DVector<f64>, m: &DMatrix<f64>) -> f64 {
    (x.transpose() * m * x)[(0, 0)]
}

/// Closes the loop between `plant` and `learner` from `x = 0`.
pub fn simulate(
    plant: &PlantModel,
    learner: &mut dyn Learner,
    weights: &CostWeights,
    horizon: usize,
    disturbance: Option<Disturbance>,
    seed: u64,
) -> Result<RunOutput> {
    let (n, m) = (plant.state_dim(), plant.input_dim());
    check_shape(weights.q(), n, n, "Q")?;
    check_shape(weights.r(), m, m, "R")?;
    let mut noise = stream_rng(seed, stream::PROCESS);
    let mut kick = stream_rng(seed, stream::DISTURBANCE);
    let gain_row_major = |k: &DMatrix<f64>| k.transpose().as_slice().to_vec();
    let mut records = Vec::with_capacity(horizon + 1);
    let mut x = DVector::<f64>::zeros(n);
    for k in 0..horizon {
        if let Some(d) = disturbance.filter(|d| d.time == k) {
            for xi in x.iter_mut() {
                *xi += kick.random_range(-d.magnitude..=d.magnitude);
            }
        }
        let sigma_min = learner.sigma_min();
        let dk_norm = learner.dk_norm();
        let gain = gain_row_major(learner.gain());
        let act = learner.act(&x)?;
        let x_next = plant_step(plant, &x, &act.u, &mut noise)?;
        let update = learner.observe(&x, &act.u, &x_next)?;
        records.push(TraceRecord {
            k,
            x: x.as_slice().to_vec(),
            u: act.u.as_slice().to_vec(),
            gain,
            sigma_min,
            cost: quadratic(&x, weights.q()) + quadratic(&act.u, weights.r()),
            branch: Branch::Step {
                control: act.control,
                update,
            },
            v: act.v,
            dk_norm,
            certified: learner.certified(),
            held: learner.held(),
        });
        x = x_next;
    }
    records.push(TraceRecord {
        k: horizon,
        x: x.as_slice().to_vec(),
        u: vec![0.0; m],
        gain: gain_row_major(learner.gain()),
        sigma_min: learner.sigma_min(),
        cost: quadratic(&x, weights.q()),
        branch: Branch::Terminal,
        v: 1.0,
        dk_norm: learner.dk_norm(),
        certified: learner.certified(),
        held: false,
    });
    Ok(RunOutput {
        trace: TraceLog {
            label: String::new(),
            n,
            m,
            records,
        },
        data: learner.data().clone(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    Deepo,
    DeepoNoprobe,
    Pfdeepo,
}

impl Algorithm {
    pub const ALL: [Algorithm; 3] = [
        Algorithm::Deepo,
        Algorithm::DeepoNoprobe,
        Algorithm::Pfdeepo,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Algorithm::Deepo => "deepo",
            Algorithm::DeepoNoprobe => "deepo-noprobe",
            Algorithm::Pfdeepo => "pfdeepo",
        }
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown algorithm '{s}' (expected deepo, deepo-noprobe or pfdeepo)"
                ))
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantConfig {
    pub a: Vec<Vec<f64>>,
    pub b: Vec<Vec<f64>>,
    pub sigma_w: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightsConfig {
    pub q: Vec<Vec<f64>>,
    pub r: Vec<Vec<f64>>,
}

/// JSON experiment description; matrices are row-major nested arrays.
/// The top-level `seed` drives every component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub plant: PlantConfig,
    pub weights: WeightsConfig,
    pub offline_samples: usize,
    pub sigma_u: f64,
    pub algorithm: Algorithm,
    pub deepo: DeepoConfig,
    pub pfdeepo: PfdeepoConfig,
    pub disturbance_time: Option<usize>,
    pub disturbance_magnitude: f64,
    pub seed: u64,
}

fn nested(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn from_nested(rows: &[Vec<f64>], name: &str) -> Result<DMatrix<f64>> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if r == 0 || c == 0 || rows.iter().any(|row| row.len() != c) {
        return Err(Error::Config(format!(
            "{name} must be a non-empty rectangular array"
        )));
    }
    if rows.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Config(format!("{name} has non-finite entries")));
    }
    Ok(DMatrix::from_fn(r, c, |i, j| rows[i][j]))
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let plant = reference_plant(0.01);
        Self {
            plant: PlantConfig {
                a: nested(&plant.a),
                b: nested(&plant.b),
                sigma_w: plant.sigma_w,
            },
            weights: WeightsConfig {
                q: nested(&DMatrix::identity(4, 4)),
                r: nested(&DMatrix::identity(2, 2)),
            },
            offline_samples: 8,
            sigma_u: 0.01,
            algorithm: Algorithm::Pfdeepo,
            deepo: DeepoConfig::default(),
            pfdeepo: PfdeepoConfig::default(),
            disturbance_time: Some(15),
            disturbance_magnitude: 4.0,
            seed: 0,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|source| Error::Json {
            path: "<config>".into(),
            source,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: Self = serde_json::from_str(&text).map_err(|source| Error::Json {
            path: path.to_path_buf(),
            source,
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn plant(&self) -> Result<PlantModel> {
        PlantModel::new(
            from_nested(&self.plant.a, "plant.a")?,
            from_nested(&self.plant.b, "plant.b")?,
            self.plant.sigma_w,
        )
    }

    pub fn weights(&self) -> Result<CostWeights> {
        CostWeights::new(
            from_nested(&self.weights.q, "weights.q")?,
            from_nested(&self.weights.r, "weights.r")?,
        )
    }

    pub fn deepo_config(&self, algorithm: Algorithm) -> DeepoConfig {
        let mut cfg = self.deepo.clone();
        cfg.seed = self.seed;
        if algorithm == Algorithm::DeepoNoprobe {
            cfg.sigma_e = 0.0;
        }
        cfg
    }

    pub fn pfdeepo_config(&self) -> PfdeepoConfig {
        PfdeepoConfig {
            seed: self.seed,
            ..self.pfdeepo.clone()
        }
    }

    pub fn horizon(&self, algorithm: Algorithm) -> usize {
        match algorithm {
            Algorithm::Pfdeepo => self.pfdeepo.horizon,
            _ => self.deepo.horizon,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let plant = self.plant()?;
        let w = self.weights()?;
        let (n, m) = (plant.state_dim(), plant.input_dim());
        if w.state_dim() != n || w.input_dim() != m {
            return Err(Error::Config(format!(
                "weights are {}x{} / {}x{} but the plant has n = {n}, m = {m}",
                w.state_dim(),
                w.state_dim(),
                w.input_dim(),
                w.input_dim()
            )));
        }
        if self.offline_samples < n + m {
            return Err(Error::Config(format!(
                "offline_samples = {} is below n + m = {}",
                self.offline_samples,
                n + m
            )));
        }
        if !(self.sigma_u >= 0.0 && self.sigma_u.is_finite()) {
            return Err(Error::Config(format!(
                "sigma_u must be non-negative, got {}",
                self.sigma_u
            )));
        }
        if !(self.disturbance_magnitude >= 0.0 && self.disturbance_magnitude.is_finite()) {
            return Err(Error::Config(format!(
                "disturbance_magnitude must be non-negative, got {}",
                self.disturbance_magnitude
            )));
        }
        self.deepo_config(Algorithm::Deepo).validate()?;
        self.pfdeepo_config().validate()
    }

    fn disturbance(&self) -> Option<Disturbance> {
        self.disturbance_time.map(|time| Disturbance {
            time,
            magnitude: self.disturbance_magnitude,
        })
    }
}

pub fn generate_offline_for(cfg: &ExperimentConfig) -> Result<DataSet> {
    generate_offline(&cfg.plant()?, cfg.offline_samples, cfg.sigma_u, cfg.seed)
}

/// Offline data, then the configured algorithm from `x = 0`, `K₀ = 0`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunOutput> {
    run_algorithm(cfg, cfg.algorithm)
}

pub fn run_algorithm(cfg: &ExperimentConfig, algorithm: Algorithm) -> Result<RunOutput> {
    cfg.validate()?;
    let plant = cfg.plant()?;
    let w = cfg.weights()?;
    let ds0 = generate_offline_for(cfg)?;
    let k0 = DMatrix::zeros(plant.input_dim(), plant.state_dim());
    let horizon = cfg.horizon(algorithm);
    let mut out = match algorithm {
        Algorithm::Deepo | Algorithm::DeepoNoprobe => {
            let mut l = DeepoLearner::new(ds0, k0, w.clone(), cfg.deepo_config(algorithm))?;
            simulate(&plant, &mut l, &w, horizon, cfg.disturbance(), cfg.seed)?
        }
        Algorithm::Pfdeepo => {
            let mut l = PfdeepoLearner::new(ds0, k0, w.clone(), cfg.pfdeepo_config())?;
            simulate(&plant, &mut l, &w, horizon, cfg.disturbance(), cfg.seed)?
        }
    };
    out.trace.label = algorithm.name().to_string();
    Ok(out)
}

/// Decimal rendering with nine significant digits.
pub fn format_sig9(v: f64) -> String {
    if !v.is_finite() {
        return v.to_string();
    }
    if v == 0.0 {
        return "0".to_string();
    }
    let exp = v.abs().log10().floor() as i32;
    let decimals = (8 - exp).max(0) as usize;
    let mut s = format!("{v:.decimals$}");
    if s.contains('.') {
        s.truncate(s.trim_end_matches('0').trim_end_matches('.').len());
    }
    if s == "-0" {
        s = "0".to_string();
    }
    s
}

pub fn csv_header(n: usize, m: usize) -> Vec<String> {
    let mut h = vec!["Time".to_string()];
    h.extend((1..=n).map(|i| format!("x{i}")));
    h.extend((1..=m).map(|i| format!("u{i}")));
    h.extend(["minsvd", "cost", "branch", "v"].map(String::from));
    h
}

pub fn write_trace_csv<W: Write>(trace: &TraceLog, out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    let wrap = |e: csv::Error| Error::Csv {
        path: "<trace>".into(),
        source: e,
    };
    w.write_record(csv_header(trace.n, trace.m)).map_err(wrap)?;
    for r in &trace.records {
        let mut row = vec![r.k.to_string()];
        row.extend(r.x.iter().chain(&r.u).map(|&v| format_sig9(v)));
        row.push(format_sig9(r.sigma_min));
        row.push(format_sig9(r.cost));
        row.push(r.branch.tag().to_string());
        row.push(format_sig9(r.v));
        w.write_record(&row).map_err(wrap)?;
    }
    w.flush().map_err(|e| Error::io("<trace>", e))
}

pub fn trace_csv_string(trace: &TraceLog) -> String {
    let mut buf = Vec::new();
    write_trace_csv(trace, &mut buf).expect("writing to memory");
    String::from_utf8(buf).expect("CSV is UTF-8")
}

pub fn emit_csv(trace: &TraceLog, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, trace_csv_string(trace)).map_err(|e| Error::io(path, e))
}

/// One parsed CSV row.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvRow {
    pub k: usize,
    pub x: Vec<f64>,
    pub u: Vec<f64>,
    pub minsvd: f64,
    pub cost: f64,
    pub branch: Branch,
    pub v: f64,
}

/// Reads a trace CSV back; `n` and `m` are inferred from the header.
pub fn read_trace_csv<R: Read>(input: R) -> Result<Vec<CsvRow>> {
    let mut lines = BufReader::new(input).lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::CsvFormat("empty file".into()))?
        .map_err(|e| Error::io("<trace>", e))?;
    let cols: Vec<&str> = header.split(',').collect();
    let n = cols.iter().filter(|c| c.starts_with('x')).count();
    let m = cols.iter().filter(|c| c.starts_with('u')).count();
    if cols != csv_header(n, m) {
        return Err(Error::CsvFormat(format!("unexpected header '{header}'")));
    }
    let num = |s: &str| {
        s.parse::<f64>()
            .map_err(|_| Error::CsvFormat(format!("not a number: '{s}'")))
    };
    let mut rows = Vec::new();
    for line in lines {
        let line = line.map_err(|e| Error::io("<trace>", e))?;
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != cols.len() {
            return Err(Error::CsvFormat(format!(
                "row has {} fields, expected {}",
                f.len(),
                cols.len()
            )));
        }
        rows.push(CsvRow {
            k: f[0]
                .parse()
                .map_err(|_| Error::CsvFormat(format!("bad step index '{}'", f[0])))?,
            x: f[1..=n].iter().map(|s| num(s)).collect::<Result<_>>()?,
            u: f[n + 1..=n + m]
                .iter()
                .map(|s| num(s))
                .collect::<Result<_>>()?,
            minsvd: num(f[n + m + 1])?,
            cost: num(f[n + m + 2])?,
            branch: Branch::from_tag(f[n + m + 3])
                .ok_or_else(|| Error::CsvFormat(format!("unknown branch '{}'", f[n + m + 3])))?,
            v: num(f[n + m + 4])?,
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Quantity {
    States,
    Minsvd,
    Cost,
}

impl Quantity {
    pub fn label(&self) -> &'static str {
        match self {
            Quantity::States => "states",
            Quantity::Minsvd => "minsvd",
            Quantity::Cost => "cost",
        }
    }
}

const PALETTE: [&str; 8] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
];

struct Series {
    name: String,
    points: Vec<(f64, f64)>,
}

fn collect_series(traces: &[TraceLog], quantity: Quantity, window: Option<usize>) -> Vec<Series> {
    let keep = |k: usize| window.is_none_or(|w| k <= w);
    let mut out = Vec::new();
    for t in traces {
        let prefix = if t.label.is_empty() {
            String::new()
        } else {
            format!("{} ", t.label)
        };
        match quantity {
            Quantity::States => {
                for i in 0..t.n {
                    out.push(Series {
                        name: format!("{prefix}x{}", i + 1),
                        points: t
                            .records
                            .iter()
                            .filter(|r| keep(r.k))
                            .map(|r| (r.k as f64, r.x[i]))
                            .collect(),
                    });
                }
            }
            Quantity::Minsvd | Quantity::Cost => out.push(Series {
                name: format!("{prefix}{}", quantity.label()).trim().to_string(),
                points: t
                    .records
                    .iter()
                    .filter(|r| keep(r.k))
                    .map(|r| {
                        let y = if quantity == Quantity::Minsvd {
                            r.sigma_min
                        } else {
                            r.cost
                        };
                        (r.k as f64, y)
                    })
                    .collect(),
            }),
        }
    }
    out
}

/// Self-contained SVG line chart; `minsvd` uses a log₁₀ axis.
pub fn render_svg(
    traces: &[TraceLog],
    quantity: Quantity,
    window: Option<usize>,
) -> Result<String> {
    if traces.is_empty() {
        return Err(Error::InvalidArgument("no traces to plot".into()));
    }
    let log_y = quantity == Quantity::Minsvd;
    let mut series = collect_series(traces, quantity, window);
    if log_y {
        for s in &mut series {
            s.points.retain(|p| p.1 > 0.0);
            for p in &mut s.points {
                p.1 = p.1.log10();
            }
        }
    }
    let pts = || {
        series
            .iter()
            .flat_map(|s| s.points.iter())
            .filter(|p| p.1.is_finite())
    };
    let (mut x0, mut x1) = pts().fold((f64::INFINITY, f64::NEG_INFINITY), |a, p| {
        (a.0.min(p.0), a.1.max(p.0))
    });
    let (mut y0, mut y1) = pts().fold((f64::INFINITY, f64::NEG_INFINITY), |a, p| {
        (a.0.min(p.1), a.1.max(p.1))
    });
    if !x0.is_finite() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    if x1 <= x0 {
        x1 = x0 + 1.0;
    }
    if y1 <= y0 {
        y0 -= 0.5;
        y1 += 0.5;
    }
    let pad = 0.05 * (y1 - y0);
    let (y0, y1) = (y0 - pad, y1 + pad);

    let (width, height) = (800.0, 480.0);
    let (left, right, top, bottom) = (80.0, 180.0, 20.0, 60.0);
    let pw = width - left - right;
    let ph = height - top - bottom;
    let sx = |x: f64| left + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| top + (y1 - y) / (y1 - y0) * ph;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    );
    for i in 0..=5 {
        let fx = x0 + (x1 - x0) * i as f64 / 5.0;
        let fy = y0 + (y1 - y0) * i as f64 / 5.0;
        let ylabel = if log_y {
            format!("1e{fy:.1}")
        } else {
            format!("{fy:.3}")
        };
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{:.0}</text>"#,
            sx(fx),
            top + ph + 18.0,
            fx
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{ylabel}</text>"#,
            left - 6.0,
            sy(fy) + 4.0
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">Time [k]</text>"#,
        left + pw / 2.0,
        height - 15.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="20" y="{:.1}" text-anchor="middle" transform="rotate(-90 20 {:.1})">{}</text>"#,
        top + ph / 2.0,
        top + ph / 2.0,
        quantity.label()
    );
    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let path: Vec<String> = s
            .points
            .iter()
            .filter(|p| p.1.is_finite())
            .map(|p| format!("{:.2},{:.2}", sx(p.0), sy(p.1)))
            .collect();
        let _ = writeln!(
            svg,
            r#"<polyline class="series" fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
            path.join(" ")
        );
        let ly = top + 14.0 + 16.0 * i as f64;
        let lx = left + pw + 12.0;
        let _ = writeln!(
            svg,
            r#"<line x1="{lx}" y1="{:.1}" x2="{}" y2="{:.1}" stroke="{color}" stroke-width="2"/><text x="{}" y="{:.1}">{}</text>"#,
            ly - 4.0,
            lx + 20.0,
            ly - 4.0,
            lx + 26.0,
            ly,
            s.name
        );
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

pub fn emit_plot(traces: &[TraceLog], quantity: Quantity, path: impl AsRef<Path>) -> Result<()> {
    emit_plot_window(traces, quantity, None, path)
}

pub fn emit_plot_window(
    traces: &[TraceLog],
    quantity: Quantity,
    window: Option<usize>,
    path: impl AsRef<Path>,
) -> Result<()> {
    let svg = render_svg(traces, quantity, window)?;
    let path = path.as_ref();
    fs::write(path, svg).map_err(|e| Error::io(path, e))
}

/// Window of the state plot, matching the short horizon of the state figure.
pub const STATE_PLOT_WINDOW: usize = 25;

/// Runs all three algorithms and writes `<alg>.csv`, `states.svg` and
/// `minsvd.svg` into `dir`.
pub fn compare(cfg: &ExperimentConfig, dir: impl AsRef<Path>) -> Result<Vec<TraceLog>> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut traces = Vec::new();
    for alg in Algorithm::ALL {
        let out = run_algorithm(cfg, alg)?;
        emit_csv(&out.trace, dir.join(format!("{}.csv", alg.name())))?;
        traces.push(out.trace);
    }
    let state_traces: Vec<TraceLog> = traces
        .iter()
        .filter(|t| t.label != Algorithm::DeepoNoprobe.name())
        .cloned()
        .collect();
    emit_plot_window(
        &state_traces,
        Quantity::States,
        Some(STATE_PLOT_WINDOW),
        dir.join("states.svg"),
    )?;
    emit_plot(&traces, Quantity::Minsvd, dir.join("minsvd.svg"))?;
    Ok(traces)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::deepo::run_deepo;

    #[test]
    fn plant_step_examples() {
        let p = PlantModel::new(DMatrix::identity(3, 3), DMatrix::zeros(3, 1), 0.0).unwrap();
        let x = DVector::from_vec(vec![1.0, -2.0, 3.0]);
        let mut rng = stream_rng(0, stream::PROCESS);
        assert_eq!(plant_step(&p, &x, &DVector::zeros(1), &mut rng).unwrap(), x);

        let p = reference_plant(0.0);
        let e1 = DVector::from_vec(vec![1.0, 0.0, 0.0, 0.0]);
        let next = plant_step(&p, &e1, &DVector::zeros(2), &mut rng).unwrap();
        assert_eq!(next, p.a.column(0).into_owned());

        assert!(matches!(
            plant_step(&p, &DVector::zeros(3), &DVector::zeros(2), &mut rng),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn noise_is_reproducible() {
        let p = reference_plant(0.5);
        let x = DVector::zeros(4);
        let u = DVector::zeros(2);
        let run = || {
            let mut rng = stream_rng(42, stream::PROCESS);
            (0..5)
                .map(|_| plant_step(&p, &x, &u, &mut rng).unwrap())
                .collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn offline_generation() {
        let p = reference_plant(0.01);
        let ds = generate_offline(&p, 8, 0.01, 0).unwrap();
        assert_eq!(ds.len(), 8);
        assert_eq!(ds.rank(), 6);
        assert_eq!(ds.x0().column(0).amax(), 0.0);
        assert!(matches!(
            generate_offline(&p, 5, 0.01, 0),
            Err(Error::RankDeficient { required: 6, .. })
        ));
        assert!(matches!(
            generate_offline(&reference_plant(0.0), 8, 0.0, 0),
            Err(Error::RankDeficient { rank: 0, .. })
        ));
    }

    #[test]
    fn reference_plant_is_open_loop_stable() {
        let rho = crate::kernels::spectral_radius(&reference_plant(0.0).a);
        assert!((rho - 0.454).abs() < 1e-3, "{rho}");
    }

    #[test]
    fn sig9_formatting() {
        assert_eq!(format_sig9(0.0), "0");
        assert_eq!(format_sig9(-0.0), "0");
        assert_eq!(format_sig9(1.0), "1");
        assert_eq!(format_sig9(1.0 / 3.0), "0.333333333");
        assert_eq!(format_sig9(-123456.789012), "-123456.789");
        assert_eq!(format_sig9(1.5e-7), "0.00000015");
        assert_eq!(format_sig9(123456789012.0), "123456789012");
        assert!(!format_sig9(2.0f64.powi(-40)).contains('e'));
    }

    #[test]
    fn branch_tags_round_trip() {
        for control in [Control::Plain, Control::Probe, Control::Scaled] {
            for update in [Update::Update, Update::Freeze] {
                let b = Branch::Step { control, update };
                assert_eq!(Branch::from_tag(b.tag()), Some(b));
            }
        }
        assert_eq!(Branch::from_tag("terminal"), Some(Branch::Terminal));
        assert_eq!(Branch::from_tag("plain"), None);
    }

    fn short_run(horizon: usize, seed: u64) -> TraceLog {
        let p = reference_plant(0.01);
        let ds0 = generate_offline(&p, 8, 0.01, seed).unwrap();
        let cfg = DeepoConfig {
            horizon: horizon.max(1),
            seed,
            ..DeepoConfig::default()
        };
        let w = CostWeights::identity(4, 2);
        let mut l = DeepoLearner::new(ds0, DMatrix::zeros(2, 4), w.clone(), cfg).unwrap();
        simulate(&p, &mut l, &w, horizon, None, seed).unwrap().trace
    }

    #[test]
    fn zero_horizon_trace_has_one_row() {
        let t = short_run(0, 1);
        assert_eq!(t.records.len(), 1);
        assert_eq!(t.records[0].branch, Branch::Terminal);
        let csv = trace_csv_string(&t);
        assert_eq!(csv.lines().count(), 2);
        assert!(csv.starts_with("Time,x1,x2,x3,x4,u1,u2,minsvd,cost,branch,v\n"));
        assert!(!csv.contains('\r'));
    }

    #[test]
    fn run_deepo_is_deterministic_and_grows_data() {
        let p = reference_plant(0.01);
        let ds0 = generate_offline(&p, 8, 0.01, 2).unwrap();
        let cfg = DeepoConfig {
            horizon: 30,
            seed: 2,
            ..DeepoConfig::default()
        };
        let w = CostWeights::identity(4, 2);
        let a = run_deepo(
            &p,
            ds0.clone(),
            DMatrix::zeros(2, 4),
            w.clone(),
            cfg.clone(),
        )
        .unwrap();
        let b = run_deepo(&p, ds0, DMatrix::zeros(2, 4), w, cfg).unwrap();
        assert_eq!(a.trace, b.trace);
        assert_eq!(a.data.len(), 38);
        assert_eq!(a.trace.records.len(), 31);
    }

    #[test]
    fn csv_round_trip_and_cost_accounting() {
        let t = short_run(40, 3);
        let w = CostWeights::identity(4, 2);
        for r in &t.records {
            let x = DVector::from_column_slice(&r.x);
            let u = DVector::from_column_slice(&r.u);
            let cost = quadratic(&x, w.q()) + quadratic(&u, w.r());
            assert!((cost - r.cost).abs() <= 1e-9 * cost.max(1.0));
        }
        let csv = trace_csv_string(&t);
        let rows = read_trace_csv(csv.as_bytes()).unwrap();
        assert_eq!(rows.len(), t.records.len());
        // Nine significant digits: at most half a unit in the ninth digit.
        let close = |a: f64, b: f64| (a - b).abs() <= 5e-9 * b.abs() + f64::MIN_POSITIVE;
        for (row, rec) in rows.iter().zip(&t.records) {
            assert_eq!(row.k, rec.k);
            assert_eq!(row.branch, rec.branch);
            for (a, b) in row.x.iter().chain(&row.u).zip(rec.x.iter().chain(&rec.u)) {
                assert!(close(*a, *b), "{a} vs {b}");
            }
            assert!(close(row.minsvd, rec.sigma_min));
            assert!(close(row.cost, rec.cost));
            assert!(close(row.v, rec.v));
        }
    }

    #[test]
    fn disturbance_lands_in_trace_and_dataset() {
        let cfg = ExperimentConfig {
            algorithm: Algorithm::Deepo,
            deepo: DeepoConfig {
                horizon: 20,
                ..DeepoConfig::default()
            },
            seed: 7,
            ..ExperimentConfig::default()
        };
        let out = run_experiment(&cfg).unwrap();
        let kicked = &out.trace.records[15].x;
        assert!(kicked.iter().map(|v| v.abs()).fold(0.0, f64::max) > 0.5);
        assert!(kicked.iter().all(|v| v.abs() <= 4.0 + 1.0));
        // Offline samples come first, so online step k is dataset column 8 + k.
        let col = out.data.x0().column(8 + 15).into_owned();
        assert_eq!(col.as_slice(), kicked.as_slice());
    }

    #[test]
    fn config_json_round_trip_and_validation() {
        let cfg = ExperimentConfig::default();
        let back = ExperimentConfig::from_json(&cfg.to_json()).unwrap();
        assert_eq!(back, cfg);
        assert!(cfg.validate().is_ok());

        let mut bad = cfg.clone();
        bad.offline_samples = 5;
        assert!(matches!(bad.validate(), Err(Error::Config(_))));
        let mut bad = cfg.clone();
        bad.plant.b[1].pop();
        assert!(bad.validate().is_err());
        let text = cfg.to_json().replace("\"sigma_u\"", "\"sigma_uu\"");
        assert!(ExperimentConfig::from_json(&text).is_err());
        assert_eq!(
            "deepo-noprobe".parse::<Algorithm>().unwrap(),
            Algorithm::DeepoNoprobe
        );
        assert!("lqr".parse::<Algorithm>().is_err());
    }

    #[test]
    fn plots() {
        let t = {
            let mut t = short_run(30, 4);
            t.label = "deepo".into();
            t
        };
        let svg = render_svg(std::slice::from_ref(&t), Quantity::States, None).unwrap();
        assert_eq!(svg.matches("class=\"series\"").count(), 4);
        assert!(svg.contains("Time [k]") && svg.contains(">states<"));
        let three = vec![t.clone(), t.clone(), t];
        let svg = render_svg(&three, Quantity::Minsvd, None).unwrap();
        assert_eq!(svg.matches("class=\"series\"").count(), 3);
        assert!(svg.contains(">minsvd<"));
        assert!(matches!(
            render_svg(&[], Quantity::Cost, None),
            Err(Error::InvalidArgument(_))
        ));
    }
}
