//! Synthetic power traces.
//!
//! Each output edge of the mux clock that clocks an AES round deposits a pulse
//! whose height is `alpha` times the Hamming distance between the state before
//! and after that round. Pulses are sampled synchronously with the base clock
//! (`oversampling` samples per base period), starting at the trigger, over a
//! capture window of `capture_cycles` base periods. White Gaussian noise is
//! added per sample.
//!
//! An encryption whose clock produced any period shorter than the error
//! threshold is marked failed and returns a random ciphertext.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::aes::{encrypt_with_schedule, expand_key, Block, KeySchedule, ROUNDS};
use crate::clock::{
    random_trigger, run_edges, ClockPhases, FrequencySet, DEFAULT_CYCLE_CAP,
    DEFAULT_ERROR_FRACTION,
};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng_from_seed};

const STREAM_TRACE: u64 = 1;
const STREAM_PLAINTEXT: u64 = 2;
const STREAM_CLOCK: u64 = 3;
const STREAM_CLOCK2: u64 = 4;
const STREAM_NOISE: u64 = 5;
const STREAM_FAILED: u64 = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PulseShape {
    Triangular,
    Rectangular,
    RaisedCosine,
}

impl PulseShape {
    fn value(self, dt: f64, half_width: f64) -> f64 {
        let x = dt.abs() / half_width;
        // Sample times carry rounding error; a sample on the pulse boundary
        // gets nothing.
        if x >= 1.0 - 1e-9 {
            return 0.0;
        }
        match self {
            PulseShape::Triangular => 1.0 - x,
            PulseShape::Rectangular => 1.0,
            PulseShape::RaisedCosine => 0.5 * (1.0 + (std::f64::consts::PI * x).cos()),
        }
    }

    pub fn code(self) -> u8 {
        match self {
            PulseShape::Triangular => 0,
            PulseShape::Rectangular => 1,
            PulseShape::RaisedCosine => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(PulseShape::Triangular),
            1 => Some(PulseShape::Rectangular),
            2 => Some(PulseShape::RaisedCosine),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TraceConfig {
    /// Samples per base period.
    pub oversampling: u32,
    pub noise_sigma: f64,
    /// Power units per flipped state bit.
    pub alpha: f64,
    pub pulse: PulseShape,
    /// Pulse half-width as a fraction of the base period.
    pub pulse_half_width: f64,
    /// Capture window length in base periods.
    pub capture_cycles: u32,
    /// Encryption-error threshold as a fraction of the base period.
    pub error_fraction: f64,
    /// Pulse height for output edges that do not clock a round (before the
    /// first or after the last round). Zero leaves them out.
    pub idle_edge_amplitude: f64,
    /// Start each encryption on a random base edge of the free-running clock.
    /// When false every trace starts with all sources rising at the trigger.
    pub random_trigger: bool,
}

impl Default for TraceConfig {
    fn default() -> Self {
        TraceConfig {
            oversampling: 8,
            noise_sigma: 0.0,
            alpha: 1.0,
            pulse: PulseShape::Triangular,
            pulse_half_width: 0.125,
            capture_cycles: 48,
            error_fraction: DEFAULT_ERROR_FRACTION,
            idle_edge_amplitude: 0.0,
            random_trigger: true,
        }
    }
}

impl TraceConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.to_string()));
        if self.oversampling < 2 {
            return bad("oversampling must be at least 2");
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return bad("noise_sigma must be a non-negative number");
        }
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return bad("alpha must be positive");
        }
        if !(self.pulse_half_width > 0.0 && self.pulse_half_width.is_finite()) {
            return bad("pulse_half_width must be positive");
        }
        if self.capture_cycles == 0 {
            return bad("capture_cycles must be at least 1");
        }
        if !(self.error_fraction > 0.0) {
            return bad("error_fraction must be positive");
        }
        if !(self.idle_edge_amplitude >= 0.0) {
            return bad("idle_edge_amplitude must be non-negative");
        }
        Ok(())
    }

    pub fn samples_per_trace(&self) -> usize {
        self.capture_cycles as usize * self.oversampling as usize
    }
}

/// Ground truth kept alongside each trace.
#[derive(Debug, Clone, PartialEq)]
pub struct ClockMeta {
    /// Times of the ten round edges for each core, seconds after the trigger.
    pub round_edges_s: Vec<Vec<f64>>,
    /// Ciphertext of the dummy core, when there is one.
    pub ciphertext2: Option<Block>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PowerTrace {
    pub samples: Vec<f32>,
    pub sample_period_s: f64,
    pub plaintext: Block,
    pub ciphertext: Block,
    pub failed: bool,
    pub core_count: u8,
    pub clock_meta: ClockMeta,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlaintextMode {
    Random,
    Fixed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceSet {
    pub traces: Vec<PowerTrace>,
    pub key: Block,
    pub key2: Option<Block>,
    pub fs: FrequencySet,
    pub fs2: Option<FrequencySet>,
    pub config: TraceConfig,
    pub seed: u64,
}

impl TraceSet {
    pub fn core_count(&self) -> u8 {
        if self.key2.is_some() {
            2
        } else {
            1
        }
    }

    pub fn sample_period_s(&self) -> f64 {
        self.fs.base_period() / self.config.oversampling as f64
    }

    pub fn failed_fraction(&self) -> f64 {
        if self.traces.is_empty() {
            return 0.0;
        }
        self.traces.iter().filter(|t| t.failed).count() as f64 / self.traces.len() as f64
    }

    pub fn len(&self) -> usize {
        self.traces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.traces.is_empty()
    }

    /// Same metadata, subset of traces.
    pub fn with_traces(&self, traces: Vec<PowerTrace>) -> TraceSet {
        TraceSet {
            traces,
            key: self.key,
            key2: self.key2,
            fs: self.fs.clone(),
            fs2: self.fs2.clone(),
            config: self.config,
            seed: self.seed,
        }
    }
}

/// Noiseless rendering of one core.
#[derive(Debug, Clone)]
pub struct CoreRender {
    pub samples: Vec<f64>,
    pub round_edges: Vec<f64>,
    pub failed: bool,
    pub ciphertext: Block,
}

/// How a core's clock relates to the trigger.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TriggerAlignment {
    /// Trigger coincides with a base edge (the core the capture is keyed to).
    BaseEdge,
    /// Trigger falls anywhere inside a base cycle.
    Free,
}

/// Renders one core without noise. The sampling grid is set by
/// `sample_base_hz`, the capture reference clock.
pub fn render_core(
    fs: &FrequencySet,
    schedule: &KeySchedule,
    pt: &Block,
    cfg: &TraceConfig,
    sample_base_hz: f64,
    alignment: TriggerAlignment,
    clock_seed: u64,
) -> Result<CoreRender> {
    let mut rng = rng_from_seed(clock_seed);
    let phases = if cfg.random_trigger {
        match alignment {
            TriggerAlignment::BaseEdge => random_trigger(fs, &mut rng),
            TriggerAlignment::Free => {
                let tau = rng.random_range(0.0..crate::clock::TRIGGER_SPAN_CYCLES as f64)
                    * fs.base_period();
                ClockPhases::at_time(fs, tau)
            }
        }
    } else {
        ClockPhases::aligned()
    };
    let sample_period = 1.0 / (sample_base_hz * cfg.oversampling as f64);
    let n = cfg.samples_per_trace();
    let window = n as f64 * sample_period;
    let horizon = if cfg.idle_edge_amplitude > 0.0 { window } else { 0.0 };
    let edges = run_edges(fs, &phases, &mut rng, ROUNDS, horizon, DEFAULT_CYCLE_CAP)?;
    let round_edges = edges[..ROUNDS].to_vec();

    let trace = encrypt_with_schedule(schedule, pt);
    let threshold = cfg.error_fraction * fs.base_period();
    let failed = round_edges.windows(2).any(|w| w[1] - w[0] < threshold);
    let ciphertext = if failed {
        let mut frng = rng_from_seed(derive_seed(clock_seed, STREAM_FAILED, 0));
        let mut ct = [0u8; 16];
        frng.fill(&mut ct);
        ct
    } else {
        trace.ciphertext
    };

    let half_width = cfg.pulse_half_width / sample_base_hz;
    let mut samples = vec![0.0f64; n];
    let round_end = round_edges[ROUNDS - 1];
    for (k, &edge) in edges.iter().enumerate() {
        let amplitude = if k < ROUNDS {
            cfg.alpha * trace.round_distance(k + 1) as f64
        } else if edge > round_end {
            cfg.idle_edge_amplitude
        } else {
            0.0
        };
        if amplitude == 0.0 {
            continue;
        }
        deposit(&mut samples, sample_period, edge, half_width, amplitude, cfg.pulse);
    }
    Ok(CoreRender {
        samples,
        round_edges,
        failed,
        ciphertext,
    })
}

fn deposit(
    samples: &mut [f64],
    sample_period: f64,
    centre: f64,
    half_width: f64,
    amplitude: f64,
    shape: PulseShape,
) {
    let lo = ((centre - half_width) / sample_period).floor().max(0.0) as usize;
    let hi = ((centre + half_width) / sample_period).ceil();
    if hi < 0.0 {
        return;
    }
    let hi = (hi as usize).min(samples.len().saturating_sub(1));
    for (j, s) in samples.iter_mut().enumerate().take(hi + 1).skip(lo) {
        let dt = j as f64 * sample_period - centre;
        *s += amplitude * shape.value(dt, half_width);
    }
}

fn add_noise(samples: &mut [f64], sigma: f64, seed: u64) {
    if sigma == 0.0 {
        return;
    }
    let mut rng = rng_from_seed(seed);
    let normal = Normal::new(0.0, sigma).expect("sigma validated non-negative");
    for s in samples.iter_mut() {
        *s += normal.sample(&mut rng);
    }
}

pub fn generate_trace(
    fs: &FrequencySet,
    key: &Block,
    pt: &Block,
    cfg: &TraceConfig,
    seed: u64,
) -> Result<PowerTrace> {
    fs.validate()?;
    cfg.validate()?;
    let schedule = expand_key(key)?;
    single_trace(fs, &schedule, pt, cfg, seed)
}

fn single_trace(
    fs: &FrequencySet,
    schedule: &KeySchedule,
    pt: &Block,
    cfg: &TraceConfig,
    seed: u64,
) -> Result<PowerTrace> {
    let mut core = render_core(
        fs,
        schedule,
        pt,
        cfg,
        fs.base_hz,
        TriggerAlignment::BaseEdge,
        derive_seed(seed, STREAM_CLOCK, 0),
    )?;
    add_noise(&mut core.samples, cfg.noise_sigma, derive_seed(seed, STREAM_NOISE, 0));
    Ok(PowerTrace {
        samples: core.samples.iter().map(|&v| v as f32).collect(),
        sample_period_s: fs.base_period() / cfg.oversampling as f64,
        plaintext: *pt,
        ciphertext: core.ciphertext,
        failed: core.failed,
        core_count: 1,
        clock_meta: ClockMeta {
            round_edges_s: vec![core.round_edges],
            ciphertext2: None,
        },
    })
}

/// The two noiseless constituents of a dual-core trace, as rendered by
/// [`generate_dual_trace`] for the same arguments.
#[allow(clippy::too_many_arguments)]
pub fn dual_components(
    fs1: &FrequencySet,
    fs2: &FrequencySet,
    key1: &Block,
    key2: &Block,
    pt: &Block,
    cfg: &TraceConfig,
    seed: u64,
) -> Result<(CoreRender, CoreRender)> {
    fs1.validate()?;
    fs2.validate()?;
    cfg.validate()?;
    if fs1.base_hz == fs2.base_hz {
        return Err(Error::InvalidArgument(
            "the two cores need different base frequencies".into(),
        ));
    }
    let s1 = expand_key(key1)?;
    let s2 = expand_key(key2)?;
    dual_components_with(fs1, fs2, &s1, &s2, pt, cfg, seed)
}

#[allow(clippy::too_many_arguments)]
fn dual_components_with(
    fs1: &FrequencySet,
    fs2: &FrequencySet,
    s1: &KeySchedule,
    s2: &KeySchedule,
    pt: &Block,
    cfg: &TraceConfig,
    seed: u64,
) -> Result<(CoreRender, CoreRender)> {
    let c1 = render_core(
        fs1,
        s1,
        pt,
        cfg,
        fs1.base_hz,
        TriggerAlignment::BaseEdge,
        derive_seed(seed, STREAM_CLOCK, 0),
    )?;
    let c2 = render_core(
        fs2,
        s2,
        pt,
        cfg,
        fs1.base_hz,
        TriggerAlignment::Free,
        derive_seed(seed, STREAM_CLOCK2, 0),
    )?;
    Ok((c1, c2))
}

/// Two cores on independent clocks, same plaintext, different keys, summed.
/// The sampling grid follows core 1, whose ciphertext is the one exposed.
#[allow(clippy::too_many_arguments)]
pub fn generate_dual_trace(
    fs1: &FrequencySet,
    fs2: &FrequencySet,
    key1: &Block,
    key2: &Block,
    pt: &Block,
    cfg: &TraceConfig,
    seed: u64,
) -> Result<PowerTrace> {
    let (c1, c2) = dual_components(fs1, fs2, key1, key2, pt, cfg, seed)?;
    Ok(assemble_dual(fs1, pt, cfg, seed, c1, c2))
}

fn assemble_dual(
    fs1: &FrequencySet,
    pt: &Block,
    cfg: &TraceConfig,
    seed: u64,
    c1: CoreRender,
    c2: CoreRender,
) -> PowerTrace {
    let mut samples: Vec<f64> = c1.samples.iter().zip(&c2.samples).map(|(a, b)| a + b).collect();
    add_noise(&mut samples, cfg.noise_sigma, derive_seed(seed, STREAM_NOISE, 0));
    PowerTrace {
        samples: samples.iter().map(|&v| v as f32).collect(),
        sample_period_s: fs1.base_period() / cfg.oversampling as f64,
        plaintext: *pt,
        ciphertext: c1.ciphertext,
        failed: c1.failed,
        core_count: 2,
        clock_meta: ClockMeta {
            round_edges_s: vec![c1.round_edges, c2.round_edges],
            ciphertext2: Some(c2.ciphertext),
        },
    }
}

fn plaintext_for(mode: PlaintextMode, seed: u64, index: u64) -> Block {
    let stream_index = match mode {
        PlaintextMode::Random => index,
        PlaintextMode::Fixed => u64::MAX,
    };
    let mut rng = rng_from_seed(derive_seed(seed, STREAM_PLAINTEXT, stream_index));
    let mut pt = [0u8; 16];
    rng.fill(&mut pt);
    pt
}

pub fn generate_set(
    fs: &FrequencySet,
    key: &Block,
    n: usize,
    mode: PlaintextMode,
    cfg: &TraceConfig,
    seed: u64,
) -> Result<TraceSet> {
    if n == 0 {
        return Err(Error::InvalidArgument("trace count must be at least 1".into()));
    }
    fs.validate()?;
    cfg.validate()?;
    let schedule = expand_key(key)?;
    let traces = (0..n as u64)
        .map(|i| {
            let pt = plaintext_for(mode, seed, i);
            single_trace(fs, &schedule, &pt, cfg, derive_seed(seed, STREAM_TRACE, i))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TraceSet {
        traces,
        key: *key,
        key2: None,
        fs: fs.clone(),
        fs2: None,
        config: *cfg,
        seed,
    })
}

#[allow(clippy::too_many_arguments)]
pub fn generate_dual_set(
    fs1: &FrequencySet,
    fs2: &FrequencySet,
    key1: &Block,
    key2: &Block,
    n: usize,
    mode: PlaintextMode,
    cfg: &TraceConfig,
    seed: u64,
) -> Result<TraceSet> {
    if n == 0 {
        return Err(Error::InvalidArgument("trace count must be at least 1".into()));
    }
    fs1.validate()?;
    fs2.validate()?;
    cfg.validate()?;
    if fs1.base_hz == fs2.base_hz {
        return Err(Error::InvalidArgument(
            "the two cores need different base frequencies".into(),
        ));
    }
    let s1 = expand_key(key1)?;
    let s2 = expand_key(key2)?;
    let traces = (0..n as u64)
        .map(|i| {
            let pt = plaintext_for(mode, seed, i);
            let ts = derive_seed(seed, STREAM_TRACE, i);
            let (c1, c2) = dual_components_with(fs1, fs2, &s1, &s2, &pt, cfg, ts)?;
            Ok(assemble_dual(fs1, &pt, cfg, ts, c1, c2))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TraceSet {
        traces,
        key: *key1,
        key2: Some(*key2),
        fs: fs1.clone(),
        fs2: Some(fs2.clone()),
        config: *cfg,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aes::encrypt_with_states;
    use crate::presets;

    const KEY: Block = [
        0x2b, 0x7e, 0x15, 0x16, 0x28, 0xae, 0xd2, 0xa6, 0xab, 0xf7, 0x15, 0x88, 0x09, 0xcf, 0x4f,
        0x3c,
    ];

    fn quiet() -> TraceConfig {
        TraceConfig::default()
    }

    #[test]
    fn fixed_clock_peaks_are_exact() {
        let fs = FrequencySet::fixed(10e6);
        let pt = [7u8; 16];
        let t = generate_trace(&fs, &KEY, &pt, &quiet(), 3).unwrap();
        let states = encrypt_with_states(&KEY, &pt).unwrap();
        let o = quiet().oversampling as usize;
        for k in 1..=10 {
            assert_eq!(t.samples[k * o], states.round_distance(k) as f32);
        }
        let nonzero = t.samples.iter().filter(|&&v| v != 0.0).count();
        // Half-width of one sample at 8x: only the centre sample is hit.
        assert_eq!(nonzero, 10);
        assert!(!t.failed);
        assert_eq!(t.ciphertext, states.ciphertext);
    }

    #[test]
    fn deterministic() {
        let fs = presets::paper_sets().remove(0);
        let cfg = TraceConfig {
            noise_sigma: 1.0,
            ..quiet()
        };
        let a = generate_trace(&fs, &KEY, &[1; 16], &cfg, 99).unwrap();
        let b = generate_trace(&fs, &KEY, &[1; 16], &cfg, 99).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_low_oversampling() {
        let cfg = TraceConfig {
            oversampling: 1,
            ..quiet()
        };
        assert!(generate_trace(&FrequencySet::fixed(1e7), &KEY, &[0; 16], &cfg, 1).is_err());
        let cfg = TraceConfig {
            noise_sigma: -1.0,
            ..quiet()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn dual_rejects_equal_bases() {
        let fs = FrequencySet::fixed(10e6);
        assert!(generate_dual_trace(&fs, &fs, &KEY, &KEY, &[0; 16], &quiet(), 1).is_err());
    }

    #[test]
    fn dual_exposes_core_one_ciphertext() {
        let fs1 = FrequencySet::fixed(10e6);
        let fs2 = FrequencySet::fixed(9e6);
        let k2 = [0x55u8; 16];
        let pt = [3u8; 16];
        let t = generate_dual_trace(&fs1, &fs2, &KEY, &k2, &pt, &quiet(), 5).unwrap();
        assert_eq!(t.ciphertext, encrypt_with_states(&KEY, &pt).unwrap().ciphertext);
        assert_eq!(
            t.clock_meta.ciphertext2,
            Some(encrypt_with_states(&k2, &pt).unwrap().ciphertext)
        );
        assert_eq!(t.core_count, 2);
    }

    #[test]
    fn fixed_plaintext_mode_repeats_plaintext() {
        let fs = FrequencySet::fixed(10e6);
        let set = generate_set(&fs, &KEY, 5, PlaintextMode::Fixed, &quiet(), 1).unwrap();
        assert!(set.traces.iter().all(|t| t.plaintext == set.traces[0].plaintext));
        let set = generate_set(&fs, &KEY, 5, PlaintextMode::Random, &quiet(), 1).unwrap();
        assert_ne!(set.traces[0].plaintext, set.traces[1].plaintext);
        assert!(generate_set(&fs, &KEY, 0, PlaintextMode::Random, &quiet(), 1).is_err());
    }

    #[test]
    fn pulse_shapes() {
        assert_eq!(PulseShape::Triangular.value(0.5, 1.0), 0.5);
        assert_eq!(PulseShape::Rectangular.value(0.5, 1.0), 1.0);
        assert!((PulseShape::RaisedCosine.value(0.5, 1.0) - 0.5).abs() < 1e-12);
        for s in [PulseShape::Triangular, PulseShape::Rectangular, PulseShape::RaisedCosine] {
            assert_eq!(s.value(1.0, 1.0), 0.0);
            assert_eq!(PulseShape::from_code(s.code()), Some(s));
        }
    }
}
