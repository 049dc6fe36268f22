//! Python bindings. Structured results come back as plain dicts and lists.

use muxclock_core::aes::{self, block_from_slice, Block};
use muxclock_core::attack::{self, duplication, search, AttackParams, OverlapParams};
use muxclock_core::clock::{self, FrequencySet as CoreSet};
use muxclock_core::format;
use muxclock_core::presets;
use muxclock_core::synth::{self, PlaintextMode, TraceConfig, TraceSet as CoreTraceSet};
use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyBytes;
use serde::Serialize;

fn err(e: muxclock_core::Error) -> PyErr {
    match e {
        muxclock_core::Error::Io(io) => PyIOError::new_err(io.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn block(bytes: &[u8]) -> PyResult<Block> {
    block_from_slice(bytes).map_err(err)
}

/// Serializable value as a Python object, via JSON.
fn to_py<'py>(py: Python<'py>, value: &impl Serialize) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

#[pyclass(name = "FrequencySet", module = "muxclock", from_py_object)]
#[derive(Clone)]
struct FrequencySet {
    inner: CoreSet,
}

#[pymethods]
impl FrequencySet {
    #[new]
    #[pyo3(signature = (label, base_hz, fundamentals, duty_cycle = 0.5))]
    fn new(label: String, base_hz: f64, fundamentals: [f64; 4], duty_cycle: f64) -> PyResult<Self> {
        let inner = CoreSet::with_duty(label, base_hz, fundamentals, duty_cycle).map_err(err)?;
        Ok(FrequencySet { inner })
    }

    /// All four sources at the base clock.
    #[staticmethod]
    fn fixed(base_hz: f64) -> Self {
        FrequencySet {
            inner: CoreSet::fixed(base_hz),
        }
    }

    #[getter]
    fn label(&self) -> String {
        self.inner.label.clone()
    }

    #[getter]
    fn base_hz(&self) -> f64 {
        self.inner.base_hz
    }

    #[getter]
    fn fundamentals(&self) -> [f64; 4] {
        self.inner.fundamentals
    }

    #[getter]
    fn duty_cycle(&self) -> f64 {
        self.inner.duty_cycle
    }

    /// Per-source probability of a rising edge in one base cycle.
    fn edge_probabilities(&self) -> [f64; 4] {
        clock::source_edge_probabilities(&self.inner)
    }

    fn __repr__(&self) -> String {
        let f = self.inner.fundamentals.map(|v| v / 1e6);
        format!(
            "FrequencySet({:?}, base={} MHz, fundamentals={:?} MHz)",
            self.inner.label,
            self.inner.base_hz / 1e6,
            f
        )
    }
}

#[pyclass(name = "TraceSet", module = "muxclock")]
struct TraceSet {
    inner: CoreTraceSet,
}

#[pymethods]
impl TraceSet {
    fn __len__(&self) -> usize {
        self.inner.len()
    }

    #[getter]
    fn core_count(&self) -> u8 {
        self.inner.core_count()
    }

    #[getter]
    fn sample_period_s(&self) -> f64 {
        self.inner.sample_period_s()
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed
    }

    #[getter]
    fn frequency_set(&self) -> FrequencySet {
        FrequencySet {
            inner: self.inner.fs.clone(),
        }
    }

    fn failed_fraction(&self) -> f64 {
        self.inner.failed_fraction()
    }

    fn samples(&self, index: usize) -> PyResult<Vec<f32>> {
        self.trace(index).map(|t| t.samples.clone())
    }

    fn plaintext<'py>(&self, py: Python<'py>, index: usize) -> PyResult<Bound<'py, PyBytes>> {
        Ok(PyBytes::new(py, &self.trace(index)?.plaintext))
    }

    fn ciphertext<'py>(&self, py: Python<'py>, index: usize) -> PyResult<Bound<'py, PyBytes>> {
        Ok(PyBytes::new(py, &self.trace(index)?.ciphertext))
    }

    fn failed(&self, index: usize) -> PyResult<bool> {
        self.trace(index).map(|t| t.failed)
    }

    /// Round edge times of each core for one trace, in seconds.
    fn round_edges(&self, index: usize) -> PyResult<Vec<Vec<f64>>> {
        self.trace(index).map(|t| t.clock_meta.round_edges_s.clone())
    }

    fn write(&self, path: &str) -> PyResult<()> {
        format::write_trace_set(&self.inner, path).map_err(err)
    }

    fn to_bytes<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyBytes>> {
        Ok(PyBytes::new(py, &format::to_bytes(&self.inner).map_err(err)?))
    }

    #[staticmethod]
    fn read(path: &str) -> PyResult<Self> {
        Ok(TraceSet {
            inner: format::read_trace_set(path).map_err(err)?,
        })
    }

    #[staticmethod]
    fn from_bytes(data: &[u8]) -> PyResult<Self> {
        Ok(TraceSet {
            inner: format::from_bytes(data).map_err(err)?,
        })
    }
}

impl TraceSet {
    fn trace(&self, index: usize) -> PyResult<&synth::PowerTrace> {
        self.inner
            .traces
            .get(index)
            .ok_or_else(|| pyo3::exceptions::PyIndexError::new_err("trace index out of range"))
    }
}

fn trace_config(oversampling: u32, noise_sigma: f64, capture_cycles: Option<u32>) -> TraceConfig {
    let mut cfg = TraceConfig {
        oversampling,
        noise_sigma,
        ..TraceConfig::default()
    };
    if let Some(c) = capture_cycles {
        cfg.capture_cycles = c;
    }
    cfg
}

#[pyfunction]
fn paper_sets() -> Vec<FrequencySet> {
    presets::paper_sets()
        .into_iter()
        .map(|inner| FrequencySet { inner })
        .collect()
}

#[pyfunction]
fn permutation_count(n_missing: u32) -> PyResult<u32> {
    clock::permutation_count(n_missing).map_err(err)
}

#[pyfunction]
fn completion_time_count(n_freqs: u64, rounds: u64) -> PyResult<u128> {
    clock::completion_time_count(n_freqs, rounds).map_err(err)
}

#[pyfunction]
fn rising_edge_probability(t_i: f64, t_b: f64) -> PyResult<f64> {
    clock::rising_edge_probability(t_i, t_b).map_err(err)
}

/// P(exactly k sources rise in a base cycle), k = 0..4.
#[pyfunction]
fn edge_count_distribution(p: [f64; 4]) -> PyResult<[f64; 5]> {
    clock::edge_count_distribution(p).map(|d| d.p).map_err(err)
}

/// Mux output over `n_base_cycles`: dict with `edges`, `source_per_cycle`,
/// `periods` and `unique_periods` under the reference binning.
#[pyfunction]
fn simulate_mux_clock<'py>(
    py: Python<'py>,
    fs: &FrequencySet,
    n_base_cycles: usize,
    seed: u64,
) -> PyResult<Bound<'py, PyAny>> {
    let w = clock::simulate_mux_clock(&fs.inner, n_base_cycles, seed).map_err(err)?;
    let periods = clock::extract_periods(&w).unwrap_or_default();
    let hist = clock::period_histogram(&periods, clock::reference_bin_width(&fs.inner)).map_err(err)?;
    to_py(
        py,
        &serde_json::json!({
            "edges": w.edges,
            "source_per_cycle": w.source_per_cycle,
            "periods": periods,
            "unique_periods": hist.unique_bins,
        }),
    )
}

#[pyfunction]
#[pyo3(signature = (fs, rounds = 10, n_encryptions = 10_000, seed = 0))]
fn overhead_and_error<'py>(
    py: Python<'py>,
    fs: &FrequencySet,
    rounds: usize,
    n_encryptions: usize,
    seed: u64,
) -> PyResult<Bound<'py, PyAny>> {
    let r = clock::overhead_and_error(&fs.inner, rounds, n_encryptions, seed).map_err(err)?;
    to_py(py, &r)
}

/// Round states (11 blocks) and ciphertext of one AES-128 encryption.
#[pyfunction]
fn encrypt_with_states<'py>(
    py: Python<'py>,
    key: &[u8],
    plaintext: &[u8],
) -> PyResult<(Vec<Bound<'py, PyBytes>>, Bound<'py, PyBytes>)> {
    let rt = aes::encrypt_with_states(key, plaintext).map_err(err)?;
    let states = rt.states.iter().map(|s| PyBytes::new(py, s)).collect();
    Ok((states, PyBytes::new(py, &rt.ciphertext)))
}

#[pyfunction]
fn hamming_distance(a: u8, b: u8) -> u32 {
    aes::hamming_distance(a, b)
}

#[pyfunction]
fn last_round_hypothesis(ciphertext: &[u8], byte_pos: usize, key_guess: u16) -> PyResult<u32> {
    aes::last_round_hypothesis(&block(ciphertext)?, byte_pos, key_guess).map_err(err)
}

#[pyfunction]
fn pearson(x: Vec<f64>, y: Vec<f64>) -> PyResult<f64> {
    attack::pearson(&x, &y).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (fs, key, n, noise_sigma = 0.0, oversampling = 8, seed = 0, fixed_plaintext = false, capture_cycles = None))]
#[allow(clippy::too_many_arguments)]
fn generate_set(
    fs: &FrequencySet,
    key: &[u8],
    n: usize,
    noise_sigma: f64,
    oversampling: u32,
    seed: u64,
    fixed_plaintext: bool,
    capture_cycles: Option<u32>,
) -> PyResult<TraceSet> {
    let mode = if fixed_plaintext {
        PlaintextMode::Fixed
    } else {
        PlaintextMode::Random
    };
    let cfg = trace_config(oversampling, noise_sigma, capture_cycles);
    let inner = synth::generate_set(&fs.inner, &block(key)?, n, mode, &cfg, seed).map_err(err)?;
    Ok(TraceSet { inner })
}

#[pyfunction]
#[pyo3(signature = (fs1, fs2, key1, key2, n, noise_sigma = 0.0, oversampling = 8, seed = 0))]
#[allow(clippy::too_many_arguments)]
fn generate_dual_set(
    fs1: &FrequencySet,
    fs2: &FrequencySet,
    key1: &[u8],
    key2: &[u8],
    n: usize,
    noise_sigma: f64,
    oversampling: u32,
    seed: u64,
) -> PyResult<TraceSet> {
    let cfg = trace_config(oversampling, noise_sigma, None);
    let inner = synth::generate_dual_set(
        &fs1.inner,
        &fs2.inner,
        &block(key1)?,
        &block(key2)?,
        n,
        PlaintextMode::Random,
        &cfg,
        seed,
    )
    .map_err(err)?;
    Ok(TraceSet { inner })
}

/// Filter, align and attack. With a key the minimum trace count is searched
/// and ranks are reported; without one the whole set is attacked once.
#[pyfunction]
#[pyo3(signature = (traces, key = None, no_sync = false, step = 250))]
fn attack_traces<'py>(
    py: Python<'py>,
    traces: &TraceSet,
    key: Option<&[u8]>,
    no_sync: bool,
    step: usize,
) -> PyResult<Bound<'py, PyAny>> {
    let ts = &traces.inner;
    let params = AttackParams {
        step,
        no_sync,
        ..AttackParams::for_oversampling(ts.config.oversampling)
    };
    let key = key.map(block).transpose()?;
    let report = match &key {
        Some(k) => Some(attack::min_traces_search(ts, k, &params).map_err(err)?),
        None => None,
    };
    let prep = search::prepare(ts, &params);
    let cpa = attack::cpa_attack(&prep.matrix, prep.window, key.as_ref()).map_err(err)?;
    to_py(
        py,
        &serde_json::json!({
            "report": report,
            "cpa": cpa,
            "kept_traces": prep.matrix.n_rows(),
            "removal": prep.removal,
        }),
    )
}

/// Averaged spectrum: `(bin_low_hz, magnitude)` lists.
#[pyfunction]
#[pyo3(signature = (traces, bin_hz = None))]
fn fft_spectrum(traces: &TraceSet, bin_hz: Option<f64>) -> PyResult<(Vec<f64>, Vec<f64>)> {
    let sp = attack::fft_spectrum(&traces.inner, bin_hz).map_err(err)?;
    let freqs = (0..sp.magnitudes.len()).map(|k| sp.bin_low_hz(k)).collect();
    Ok((freqs, sp.magnitudes))
}

#[pyfunction]
#[pyo3(signature = (fs1, n_traces, fs2 = None))]
fn peak_permutation_bound(fs1: &FrequencySet, n_traces: u32, fs2: Option<&FrequencySet>) -> PyResult<(usize, String)> {
    let b = duplication::peak_permutation_bound(&fs1.inner, fs2.map(|f| &f.inner), n_traces).map_err(err)?;
    Ok((b.per_trace_candidates, b.total.to_string()))
}

#[pyfunction]
fn overlap_exploit<'py>(py: Python<'py>, traces: &TraceSet) -> PyResult<Bound<'py, PyAny>> {
    let params = OverlapParams::for_oversampling(traces.inner.config.oversampling);
    let r = attack::overlap_exploit(&traces.inner, &params).map_err(err)?;
    to_py(py, &r)
}

#[pymodule]
fn muxclock(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<FrequencySet>()?;
    m.add_class::<TraceSet>()?;
    m.add_function(wrap_pyfunction!(paper_sets, m)?)?;
    m.add_function(wrap_pyfunction!(permutation_count, m)?)?;
    m.add_function(wrap_pyfunction!(completion_time_count, m)?)?;
    m.add_function(wrap_pyfunction!(rising_edge_probability, m)?)?;
    m.add_function(wrap_pyfunction!(edge_count_distribution, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_mux_clock, m)?)?;
    m.add_function(wrap_pyfunction!(overhead_and_error, m)?)?;
    m.add_function(wrap_pyfunction!(encrypt_with_states, m)?)?;
    m.add_function(wrap_pyfunction!(hamming_distance, m)?)?;
    m.add_function(wrap_pyfunction!(last_round_hypothesis, m)?)?;
    m.add_function(wrap_pyfunction!(pearson, m)?)?;
    m.add_function(wrap_pyfunction!(generate_set, m)?)?;
    m.add_function(wrap_pyfunction!(generate_dual_set, m)?)?;
    m.add_function(wrap_pyfunction!(attack_traces, m)?)?;
    m.add_function(wrap_pyfunction!(fft_spectrum, m)?)?;
    m.add_function(wrap_pyfunction!(peak_permutation_bound, m)?)?;
    m.add_function(wrap_pyfunction!(overlap_exploit, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
