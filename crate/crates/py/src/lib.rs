//! Python bindings for `mimo-switch`, importable as `mimoswitch`.
//!
//! Complex entries cross the boundary as Python `complex`, matrices as lists of rows,
//! permutations as 1-based source lists (`source_of[j]` feeds station `j + 1`).

use mimo_switch::combinatorics::{self, CondensedSet};
use mimo_switch::montecarlo::{self, Selection, SweepConfig, SweepResult};
use mimo_switch::oracle;
use mimo_switch::relay::{self, ChannelRealization, RelayDesign, SchemeConfig, SystemParams};
use mimo_switch::{scheduling, streams, Error, C64};
use nalgebra::DMatrix;
use pyo3::exceptions::{PyArithmeticError, PyValueError};
use pyo3::prelude::*;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::InfeasiblePower(_) | Error::SingularChannel(_) | Error::DegenerateChannelStream { .. } => {
            PyArithmeticError::new_err(e.to_string())
        }
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn to_rows(m: &DMatrix<C64>) -> Vec<Vec<C64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

fn from_rows(rows: Vec<Vec<C64>>) -> PyResult<DMatrix<C64>> {
    let n = rows.len();
    if n == 0 || rows.iter().any(|r| r.len() != n) {
        return Err(PyValueError::new_err("matrix must be square and non-empty"));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

fn scheme(spec: &str, seed: u64) -> PyResult<SchemeConfig> {
    Ok(spec.parse::<SchemeConfig>().map_err(py_err)?.with_seed(seed))
}

fn noise(snr_db: Option<f64>, sigma_sq: Option<f64>, sigma_r_sq: Option<f64>) -> PyResult<(f64, f64)> {
    match (snr_db, sigma_sq, sigma_r_sq) {
        (Some(snr), None, None) => Ok(montecarlo::snr_to_noise(snr)),
        (None, Some(s), r) => Ok((s, r.unwrap_or(s))),
        (None, None, None) => Ok(montecarlo::snr_to_noise(10.0)),
        _ => Err(PyValueError::new_err("give either snr_db or sigma_sq/sigma_r_sq")),
    }
}

/// A switch pattern on `n` stations.
#[pyclass(name = "Permutation", frozen, eq)]
#[derive(Clone, PartialEq)]
struct PyPermutation(combinatorics::Permutation);

#[pymethods]
impl PyPermutation {
    #[new]
    fn new(source_of: Vec<usize>) -> PyResult<Self> {
        combinatorics::Permutation::from_one_based(&source_of)
            .map(Self)
            .map_err(py_err)
    }

    #[getter]
    fn n(&self) -> usize {
        self.0.n()
    }

    #[getter]
    fn source_of(&self) -> Vec<usize> {
        self.0.to_one_based()
    }

    fn matrix(&self) -> Vec<Vec<u8>> {
        self.0.matrix()
    }

    /// Cycles as 1-based station lists.
    fn cycles(&self) -> Vec<Vec<usize>> {
        self.0.cycles().into_iter().map(|c| c.into_iter().map(|j| j + 1).collect()).collect()
    }

    fn is_derangement(&self) -> bool {
        self.0.is_derangement()
    }

    fn is_pairwise(&self) -> bool {
        combinatorics::is_pairwise(&self.0)
    }

    fn __repr__(&self) -> String {
        format!("Permutation({:?})", self.0.to_one_based())
    }
}

fn perms(v: Vec<combinatorics::Permutation>) -> Vec<PyPermutation> {
    v.into_iter().map(PyPermutation).collect()
}

fn set_members(s: &CondensedSet) -> Vec<PyPermutation> {
    perms(s.members().to_vec())
}

#[pyfunction]
fn subfactorial(n: u32) -> u128 {
    combinatorics::subfactorial(n)
}

#[pyfunction]
fn derangements(n: usize) -> PyResult<Vec<PyPermutation>> {
    combinatorics::enumerate_derangements(n).map(perms).map_err(py_err)
}

/// Condensed derangement sets, each a list of `n - 1` permutations.
#[pyfunction]
fn condensed_sets(n: usize) -> PyResult<Vec<Vec<PyPermutation>>> {
    let sets = combinatorics::enumerate_condensed_sets(n).map_err(py_err)?;
    Ok(sets.iter().map(set_members).collect())
}

/// Uplink and downlink channel matrices.
#[pyclass(name = "Channel", frozen)]
#[derive(Clone)]
struct PyChannel(ChannelRealization);

#[pymethods]
impl PyChannel {
    /// `h_d` defaults to the transpose of `h_u`.
    #[new]
    #[pyo3(signature = (h_u, h_d=None, condition_bound=relay::DEFAULT_CONDITION_BOUND))]
    fn new(h_u: Vec<Vec<C64>>, h_d: Option<Vec<Vec<C64>>>, condition_bound: f64) -> PyResult<Self> {
        let h_u = from_rows(h_u)?;
        let ch = match h_d {
            Some(h_d) => ChannelRealization::new(h_u, from_rows(h_d)?, condition_bound),
            None => ChannelRealization::reciprocal(h_u, condition_bound),
        };
        ch.map(Self).map_err(py_err)
    }

    #[staticmethod]
    fn identity(n: usize) -> Self {
        Self(ChannelRealization::identity(n))
    }

    /// Rayleigh draw from the channel stream of `seed`.
    #[staticmethod]
    #[pyo3(signature = (n, seed, reciprocal=true, condition_bound=relay::DEFAULT_CONDITION_BOUND))]
    fn rayleigh(n: usize, seed: u64, reciprocal: bool, condition_bound: f64) -> PyResult<Self> {
        let mut rng = streams::substream(seed, &[streams::TAG_CHANNEL]);
        montecarlo::draw_channel(n, &mut rng, reciprocal, condition_bound)
            .map(|d| Self(d.channel))
            .map_err(py_err)
    }

    #[getter]
    fn n(&self) -> usize {
        self.0.n()
    }

    #[getter]
    fn h_u(&self) -> Vec<Vec<C64>> {
        to_rows(self.0.h_u())
    }

    #[getter]
    fn h_d(&self) -> Vec<Vec<C64>> {
        to_rows(self.0.h_d())
    }
}

/// Solved relay beamformer for one permutation.
#[pyclass(name = "Design", frozen)]
struct PyDesign {
    inner: RelayDesign,
    params: SystemParams,
}

#[pymethods]
impl PyDesign {
    #[getter]
    fn sigma_e_sq(&self) -> f64 {
        self.inner.sigma_e_sq
    }

    /// Per-station rate in bits per channel use.
    #[getter]
    fn rate(&self) -> f64 {
        self.inner.rate()
    }

    #[getter]
    fn a(&self) -> Vec<C64> {
        self.inner.a.clone()
    }

    #[getter]
    fn b(&self) -> Vec<C64> {
        self.inner.b.clone()
    }

    #[getter]
    fn g(&self) -> Vec<Vec<C64>> {
        to_rows(&self.inner.g)
    }

    #[getter]
    fn achieved_power(&self) -> f64 {
        self.inner.achieved_power
    }

    #[getter]
    fn permutation(&self) -> PyPermutation {
        PyPermutation(self.inner.permutation.clone())
    }

    fn reconstruction_error(&self, channel: &PyChannel) -> f64 {
        self.inner.reconstruction_error(&channel.0)
    }

    /// Symbol-level check; returns `(passed, per-station SINR, failure descriptions)`.
    #[pyo3(signature = (channel, symbols=200_000, tolerance=0.05, seed=1))]
    fn verify(&self, channel: &PyChannel, symbols: usize, tolerance: f64, seed: u64) -> (bool, Vec<f64>, Vec<String>) {
        let mut rng = streams::substream(seed, &[streams::TAG_SYMBOLS]);
        let r = oracle::verify_design(&self.inner, &channel.0, &self.params, symbols, tolerance, &mut rng);
        let failures = r.failures.iter().map(|f| f.to_string()).collect();
        (r.passed(), r.trace.sinr, failures)
    }

    fn __repr__(&self) -> String {
        format!(
            "Design(permutation={:?}, sigma_e_sq={}, rate={})",
            self.inner.permutation.to_one_based(),
            self.inner.sigma_e_sq,
            self.inner.rate()
        )
    }
}

/// Designs the relay for `perm` under `scheme` (e.g. `"nc-random-phase:L=10:M=8"`).
/// Noise comes from `snr_db`, or from explicit `sigma_sq` / `sigma_r_sq`.
#[pyfunction]
#[pyo3(signature = (channel, perm, scheme="basic-real", snr_db=None, sigma_sq=None, sigma_r_sq=None, p=1.0, seed=0))]
#[allow(clippy::too_many_arguments)]
fn design(
    py: Python<'_>,
    channel: &PyChannel,
    perm: &PyPermutation,
    scheme: &str,
    snr_db: Option<f64>,
    sigma_sq: Option<f64>,
    sigma_r_sq: Option<f64>,
    p: f64,
    seed: u64,
) -> PyResult<PyDesign> {
    let (s, r) = noise(snr_db, sigma_sq, sigma_r_sq)?;
    let params = SystemParams::new(p, s, r).map_err(py_err)?;
    let cfg = self::scheme(scheme, seed)?;
    let inner = py
        .allow_threads(|| relay::design(&channel.0, &perm.0, &params, &cfg))
        .map_err(py_err)?;
    Ok(PyDesign { inner, params })
}

#[pyfunction]
fn effective_rate(sigma_e_sq: f64) -> f64 {
    relay::effective_rate(sigma_e_sq)
}

#[pyfunction]
fn fair_throughput(rates: Vec<f64>) -> PyResult<f64> {
    scheduling::fair_throughput(&rates).map_err(py_err)
}

#[pyfunction]
#[pyo3(signature = (rates, c=1.0))]
fn fair_weights(rates: Vec<f64>, c: f64) -> PyResult<Vec<f64>> {
    scheduling::fair_weights(&rates, c).map_err(py_err)
}

/// Monte Carlo sweep output.
#[pyclass(name = "SweepResult", frozen)]
struct PySweepResult(SweepResult);

#[pymethods]
impl PySweepResult {
    fn labels(&self) -> Vec<String> {
        self.0.labels()
    }

    /// `(snr_db, mean throughput)` points of one curve.
    fn curve(&self, label: &str) -> PyResult<Vec<(f64, f64)>> {
        let c = self.0.curve(label);
        if c.is_empty() {
            return Err(PyValueError::new_err(format!("no curve labelled {label:?}")));
        }
        Ok(c)
    }

    /// Rows of `(snr_db, label, mean, std_err, realizations, failures)`.
    fn rows(&self) -> Vec<(f64, String, f64, f64, usize, usize)> {
        self.0
            .cells
            .iter()
            .map(|c| (c.snr_db, c.label(), c.mean, c.std_err, c.realizations, c.failures))
            .collect()
    }

    /// CSV text as written by the command line `sweep`.
    fn to_csv(&self) -> PyResult<String> {
        let mut buf = Vec::new();
        montecarlo::write_csv(&self.0, &[], &mut buf).map_err(py_err)?;
        String::from_utf8(buf).map_err(|e| PyValueError::new_err(e.to_string()))
    }
}

/// Throughput sweep. With `perm` the curve is that permutation's rate; otherwise
/// every condensed set (or `sample_sets` of them) is evaluated under fair switching.
#[pyfunction]
#[pyo3(signature = (n, snr_db, schemes, realizations=1000, perm=None, sample_sets=None, reciprocal=true, p=1.0, seed=1))]
#[allow(clippy::too_many_arguments)]
fn sweep(
    py: Python<'_>,
    n: usize,
    snr_db: Vec<f64>,
    schemes: Vec<String>,
    realizations: usize,
    perm: Option<PyPermutation>,
    sample_sets: Option<usize>,
    reciprocal: bool,
    p: f64,
    seed: u64,
) -> PyResult<PySweepResult> {
    let schemes = schemes
        .iter()
        .map(|s| s.parse::<SchemeConfig>().map_err(py_err))
        .collect::<PyResult<Vec<_>>>()?;
    let selection = match (perm, sample_sets) {
        (Some(perm), None) => Selection::Single(perm.0),
        (None, k) => {
            let sets = combinatorics::enumerate_condensed_sets(n).map_err(py_err)?;
            let k = k.unwrap_or(sets.len());
            Selection::Condensed(montecarlo::sample_sets(&sets, k, seed).map_err(py_err)?)
        }
        (Some(_), Some(_)) => return Err(PyValueError::new_err("perm and sample_sets are exclusive")),
    };
    let mut cfg = SweepConfig::new(n, selection, schemes);
    cfg.snr_points_db = snr_db;
    cfg.num_realizations = realizations;
    cfg.reciprocal = reciprocal;
    cfg.relay_power = p;
    cfg.rng_seed = seed;
    py.allow_threads(|| montecarlo::run_sweep(&cfg))
        .map(PySweepResult)
        .map_err(py_err)
}

/// Gain in dB of `other` over `base`: how much less SNR `other` needs to reach the
/// throughput `base` has at `ref_snr` dB (or the explicit throughput `reference`).
#[pyfunction]
#[pyo3(signature = (base, other, ref_snr=10.0, reference=None))]
fn db_gain(base: Vec<(f64, f64)>, other: Vec<(f64, f64)>, ref_snr: f64, reference: Option<f64>) -> PyResult<f64> {
    let level = match reference {
        Some(t) => t,
        None => montecarlo::interpolate(&base, ref_snr).map_err(py_err)?,
    };
    montecarlo::db_gain(&base, &other, level).map_err(py_err)
}

#[pymodule]
fn mimoswitch(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyPermutation>()?;
    m.add_class::<PyChannel>()?;
    m.add_class::<PyDesign>()?;
    m.add_class::<PySweepResult>()?;
    m.add_function(wrap_pyfunction!(subfactorial, m)?)?;
    m.add_function(wrap_pyfunction!(derangements, m)?)?;
    m.add_function(wrap_pyfunction!(condensed_sets, m)?)?;
    m.add_function(wrap_pyfunction!(design, m)?)?;
    m.add_function(wrap_pyfunction!(effective_rate, m)?)?;
    m.add_function(wrap_pyfunction!(fair_throughput, m)?)?;
    m.add_function(wrap_pyfunction!(fair_weights, m)?)?;
    m.add_function(wrap_pyfunction!(sweep, m)?)?;
    m.add_function(wrap_pyfunction!(db_gain, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
