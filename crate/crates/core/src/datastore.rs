//! Input/state data, excitation checks and the sample-covariance
//! parametrization `Φ = 𝒟𝒟ᵀ/t`, `X̄₁ = X₁𝒟ᵀ/t` with `𝒟 = [U₀; X₀]`.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DMatrixView, DVector, DVectorView};

use crate::error::{Error, Result};
use crate::kernels::{min_singular_value, numerical_rank, rank_threshold, singular_values};

/// Growing triplet `(U₀, X₀, X₁)`: column `k` of `X₁` is the observed
/// successor of `(X₀[:, k], U₀[:, k])`. Samples need not be consecutive.
///
/// Stored column-major so appending a sample is a plain `extend`.
#[derive(Debug, Clone, PartialEq)]
pub struct DataSet {
    n: usize,
    m: usize,
    u0: Vec<f64>,
    x0: Vec<f64>,
    x1: Vec<f64>,
}

impl DataSet {
    pub fn new(state_dim: usize, input_dim: usize) -> Self {
        Self {
            n: state_dim,
            m: input_dim,
            u0: Vec::new(),
            x0: Vec::new(),
            x1: Vec::new(),
        }
    }

    pub fn from_matrices(u0: &DMatrix<f64>, x0: &DMatrix<f64>, x1: &DMatrix<f64>) -> Result<Self> {
        let t = u0.ncols();
        if x0.ncols() != t || x1.ncols() != t {
            return Err(Error::dim(format!(
                "U0, X0, X1 must share a column count, got {}, {}, {}",
                t,
                x0.ncols(),
                x1.ncols()
            )));
        }
        if x0.nrows() != x1.nrows() {
            return Err(Error::dim(format!(
                "X0 has {} rows but X1 has {}",
                x0.nrows(),
                x1.nrows()
            )));
        }
        Ok(Self {
            n: x0.nrows(),
            m: u0.nrows(),
            u0: u0.as_slice().to_vec(),
            x0: x0.as_slice().to_vec(),
            x1: x1.as_slice().to_vec(),
        })
    }

    pub fn state_dim(&self) -> usize {
        self.n
    }

    pub fn input_dim(&self) -> usize {
        self.m
    }

    /// Number of samples `t`.
    pub fn len(&self) -> usize {
        self.x0.len().checked_div(self.n).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn u0(&self) -> DMatrixView<'_, f64> {
        DMatrixView::from_slice(&self.u0, self.m, self.len())
    }

    pub fn x0(&self) -> DMatrixView<'_, f64> {
        DMatrixView::from_slice(&self.x0, self.n, self.len())
    }

    pub fn x1(&self) -> DMatrixView<'_, f64> {
        DMatrixView::from_slice(&self.x1, self.n, self.len())
    }

    /// `(x_k, u_k, x_{k+1})` of sample `k`.
    pub fn sample(
        &self,
        k: usize,
    ) -> (
        DVectorView<'_, f64>,
        DVectorView<'_, f64>,
        DVectorView<'_, f64>,
    ) {
        let (n, m) = (self.n, self.m);
        (
            DVectorView::from_slice(&self.x0[k * n..(k + 1) * n], n),
            DVectorView::from_slice(&self.u0[k * m..(k + 1) * m], m),
            DVectorView::from_slice(&self.x1[k * n..(k + 1) * n], n),
        )
    }

    pub fn push(
        &mut self,
        x: &DVector<f64>,
        u: &DVector<f64>,
        x_next: &DVector<f64>,
    ) -> Result<()> {
        self.check_sample(x, u, x_next)?;
        self.x0.extend_from_slice(x.as_slice());
        self.u0.extend_from_slice(u.as_slice());
        self.x1.extend_from_slice(x_next.as_slice());
        Ok(())
    }

    fn check_sample(
        &self,
        x: &DVector<f64>,
        u: &DVector<f64>,
        x_next: &DVector<f64>,
    ) -> Result<()> {
        if x.len() != self.n || x_next.len() != self.n || u.len() != self.m {
            return Err(Error::dim(format!(
                "sample dimensions (x {}, u {}, x_next {}) do not match n = {}, m = {}",
                x.len(),
                u.len(),
                x_next.len(),
                self.n,
                self.m
            )));
        }
        Ok(())
    }

    /// `𝒟 = [U₀; X₀]`, inputs on top.
    pub fn build_d(&self) -> DMatrix<f64> {
        let t = self.len();
        let mut d = DMatrix::zeros(self.m + self.n, t);
        d.rows_mut(0, self.m).copy_from(&self.u0());
        d.rows_mut(self.m, self.n).copy_from(&self.x0());
        d
    }

    /// Numerical rank of `𝒟`.
    pub fn rank(&self) -> usize {
        if self.is_empty() {
            return 0;
        }
        numerical_rank(&self.build_d())
    }

    /// Errors unless `rank(𝒟) = n + m`.
    pub fn check_rank(&self) -> Result<()> {
        let required = self.n + self.m;
        let rank = self.rank();
        if rank < required {
            return Err(Error::RankDeficient { rank, required });
        }
        Ok(())
    }

    /// CSV with header `k,u1..um,x1..xn,x1next..xnnext`, one row per sample.
    /// Values use the shortest representation that round-trips exactly.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(out);
        let mut header = vec!["k".to_string()];
        header.extend((1..=self.m).map(|i| format!("u{i}")));
        header.extend((1..=self.n).map(|i| format!("x{i}")));
        header.extend((1..=self.n).map(|i| format!("x{i}next")));
        w.write_record(&header).map_err(csv_format)?;
        for k in 0..self.len() {
            let (x, u, xn) = self.sample(k);
            let mut row = vec![k.to_string()];
            row.extend(u.iter().map(|v| v.to_string()));
            row.extend(x.iter().map(|v| v.to_string()));
            row.extend(xn.iter().map(|v| v.to_string()));
            w.write_record(&row).map_err(csv_format)?;
        }
        w.flush()
            .map_err(|e| Error::CsvFormat(format!("flush failed: {e}")))?;
        Ok(())
    }

    /// Parses the format written by [`DataSet::write_csv`]; dimensions are
    /// inferred from the header. The `k` column is not required to be
    /// consecutive.
    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_reader(input);
        let header = r.headers().map_err(csv_format)?.clone();
        let names: Vec<&str> = header.iter().collect();
        if names.first() != Some(&"k") {
            return Err(Error::CsvFormat("first column must be `k`".into()));
        }
        let m = names.iter().filter(|h| is_indexed(h, "u", "")).count();
        let n = names.iter().filter(|h| is_indexed(h, "x", "")).count();
        let mut expected = vec!["k".to_string()];
        expected.extend((1..=m).map(|i| format!("u{i}")));
        expected.extend((1..=n).map(|i| format!("x{i}")));
        expected.extend((1..=n).map(|i| format!("x{i}next")));
        if names != expected.iter().map(String::as_str).collect::<Vec<_>>() {
            return Err(Error::CsvFormat(format!(
                "unexpected header {:?}, expected {:?}",
                names, expected
            )));
        }
        let mut ds = DataSet::new(n, m);
        for (line, record) in r.records().enumerate() {
            let record = record.map_err(csv_format)?;
            let vals = record
                .iter()
                .skip(1)
                .map(|s| {
                    s.trim().parse::<f64>().map_err(|e| {
                        Error::CsvFormat(format!("row {}: bad number {s:?}: {e}", line + 1))
                    })
                })
                .collect::<Result<Vec<f64>>>()?;
            if vals.len() != m + 2 * n {
                return Err(Error::CsvFormat(format!(
                    "row {} has {} values, expected {}",
                    line + 1,
                    vals.len(),
                    m + 2 * n
                )));
            }
            let u = DVector::from_column_slice(&vals[..m]);
            let x = DVector::from_column_slice(&vals[m..m + n]);
            let xn = DVector::from_column_slice(&vals[m + n..]);
            ds.push(&x, &u, &xn)?;
        }
        Ok(ds)
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(file))
    }

    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv(std::io::BufReader::new(file))
    }
}

fn is_indexed(name: &str, prefix: &str, suffix: &str) -> bool {
    name.strip_prefix(prefix)
        .and_then(|rest| rest.strip_suffix(suffix))
        .is_some_and(|digits| !digits.is_empty() && digits.bytes().all(|b| b.is_ascii_digit()))
}

fn csv_format(e: csv::Error) -> Error {
    Error::CsvFormat(e.to_string())
}

/// Block-Hankel matrix of depth `l` of the `m × t` signal `u`: block row `i`
/// holds `u_i, …, u_{i+t−l}`.
pub fn build_hankel(u: &DMatrix<f64>, l: usize) -> Result<DMatrix<f64>> {
    let (m, t) = u.shape();
    if l == 0 || t < l {
        return Err(Error::dim(format!(
            "Hankel depth {l} needs 1 ≤ l ≤ t, signal has t = {t}"
        )));
    }
    let cols = t - l + 1;
    let mut h = DMatrix::zeros(m * l, cols);
    for i in 0..l {
        h.view_mut((i * m, 0), (m, cols))
            .copy_from(&u.columns(i, cols));
    }
    Ok(h)
}

/// Whether `u` is persistently exciting of order `l`, i.e. its depth-`l`
/// Hankel matrix has full row rank `m·l`.
pub fn is_persistently_exciting(u: &DMatrix<f64>, l: usize) -> Result<bool> {
    let h = build_hankel(u, l)?;
    Ok(numerical_rank(&h) == h.nrows())
}

/// Sample-covariance parametrization.
///
/// `phi` is `(n+m)×(n+m)`: its top `m` rows are `Ū₀ = U₀𝒟ᵀ/t`, the bottom
/// `n` rows are `X̄₀ = X₀𝒟ᵀ/t`. `xbar1` is `X₁𝒟ᵀ/t`.
#[derive(Debug, Clone, PartialEq)]
pub struct CovParam {
    phi: DMatrix<f64>,
    xbar1: DMatrix<f64>,
    t: usize,
    n: usize,
    m: usize,
}

impl CovParam {
    pub fn from_dataset(ds: &DataSet) -> Result<Self> {
        let t = ds.len();
        if t == 0 {
            return Err(Error::dim("covariance parametrization needs t ≥ 1"));
        }
        let d = ds.build_d();
        let scale = 1.0 / t as f64;
        let phi = crate::kernels::symmetrize(&(&d * d.transpose() * scale));
        let xbar1 = ds.x1() * d.transpose() * scale;
        Ok(Self {
            phi,
            xbar1,
            t,
            n: ds.state_dim(),
            m: ds.input_dim(),
        })
    }

    /// Rank-one update `Φ ← (tΦ + ddᵀ)/(t+1)`, `X̄₁ ← (tX̄₁ + x⁺dᵀ)/(t+1)`
    /// with `d = [u; x]`.
    pub fn append(
        &mut self,
        x: &DVector<f64>,
        u: &DVector<f64>,
        x_next: &DVector<f64>,
    ) -> Result<()> {
        if x.len() != self.n || x_next.len() != self.n || u.len() != self.m {
            return Err(Error::dim(format!(
                "sample dimensions (x {}, u {}, x_next {}) do not match n = {}, m = {}",
                x.len(),
                u.len(),
                x_next.len(),
                self.n,
                self.m
            )));
        }
        let mut d = DVector::zeros(self.m + self.n);
        d.rows_mut(0, self.m).copy_from(u);
        d.rows_mut(self.m, self.n).copy_from(x);
        let t = self.t as f64;
        let inv = 1.0 / (t + 1.0);
        let mut phi = &self.phi * t;
        phi.ger(1.0, &d, &d, 1.0);
        self.phi = crate::kernels::symmetrize(&(phi * inv));
        let mut xbar1 = &self.xbar1 * t;
        xbar1.ger(1.0, x_next, &d, 1.0);
        self.xbar1 = xbar1 * inv;
        self.t += 1;
        Ok(())
    }

    pub fn phi(&self) -> &DMatrix<f64> {
        &self.phi
    }

    pub fn xbar1(&self) -> &DMatrix<f64> {
        &self.xbar1
    }

    /// `Ū₀`, the top `m` rows of `Φ`.
    pub fn ubar0(&self) -> DMatrix<f64> {
        self.phi.rows(0, self.m).into_owned()
    }

    /// `X̄₀`, the bottom `n` rows of `Φ`.
    pub fn xbar0(&self) -> DMatrix<f64> {
        self.phi.rows(self.m, self.n).into_owned()
    }

    pub fn len(&self) -> usize {
        self.t
    }

    pub fn is_empty(&self) -> bool {
        self.t == 0
    }

    pub fn state_dim(&self) -> usize {
        self.n
    }

    pub fn input_dim(&self) -> usize {
        self.m
    }

    pub fn sigma_min(&self) -> f64 {
        min_singular_value(&self.phi)
    }

    /// Whether `Φ` is numerically full rank.
    pub fn is_full_rank(&self) -> bool {
        let sv = singular_values(&self.phi);
        let sigma_max = sv.iter().copied().fold(0.0, f64::max);
        sv.iter().all(|&s| s > rank_threshold(sigma_max))
    }
}

/// `covariance_param` in functional form.
pub fn covariance_param(ds: &DataSet) -> Result<CovParam> {
    CovParam::from_dataset(ds)
}

/// Dataset together with its running covariance parametrization; the two
/// are always updated in lockstep.
#[derive(Debug, Clone)]
pub struct DataStore {
    data: DataSet,
    cov: CovParam,
}

impl DataStore {
    pub fn new(data: DataSet) -> Result<Self> {
        let cov = CovParam::from_dataset(&data)?;
        Ok(Self { data, cov })
    }

    pub fn data(&self) -> &DataSet {
        &self.data
    }

    pub fn cov(&self) -> &CovParam {
        &self.cov
    }

    pub fn append_sample(
        &mut self,
        x: &DVector<f64>,
        u: &DVector<f64>,
        x_next: &DVector<f64>,
    ) -> Result<()> {
        self.data.check_sample(x, u, x_next)?;
        self.cov.append(x, u, x_next)?;
        self.data.push(x, u, x_next)
    }

    pub fn into_parts(self) -> (DataSet, CovParam) {
        (self.data, self.cov)
    }
}

/// Value-semantics form of [`DataStore::append_sample`].
pub fn append_sample(
    cp: &CovParam,
    ds: &DataSet,
    x: &DVector<f64>,
    u: &DVector<f64>,
    x_next: &DVector<f64>,
) -> Result<(CovParam, DataSet)> {
    let mut store = DataStore {
        data: ds.clone(),
        cov: cp.clone(),
    };
    store.append_sample(x, u, x_next)?;
    let (data, cov) = store.into_parts();
    Ok((cov, data))
}
