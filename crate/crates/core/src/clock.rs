//! The randomized mux clock.
//!
//! Four free-running square waves (the fundamentals) feed a 4:1 multiplexer.
//! On every rising edge of a stable base clock the select lines are redrawn
//! uniformly at random and held for the whole base cycle. The mux output simply
//! follows the level of the selected source, so its rising edges are
//!
//! * the selected source's own rising edges inside the cycle, and
//! * a switch edge at the base edge itself whenever the output was low just
//!   before the switch and the newly selected source is high.
//!
//! Missing edges (slow sources spanning a whole base cycle), double edges (fast
//! sources) and switch-induced edges all follow from that rule; none of them is
//! special-cased.
//!
//! Besides the waveform simulator, this module holds the closed-form model of
//! the clock: per-source edge probabilities, the distribution of the number of
//! sources rising in one base cycle, the permutation table and the
//! completion-time count.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng_from_seed, SimRng};

/// Output edges closer than this are treated as one edge.
pub const EDGE_EPS_S: f64 = 1e-12;

/// Encryptions start on a base edge drawn from this many cycles of a clock
/// that has been running since t = 0 with all phases aligned.
pub const TRIGGER_SPAN_CYCLES: u64 = 1 << 16;

/// Default encryption-error threshold as a fraction of the base period.
pub const DEFAULT_ERROR_FRACTION: f64 = 0.25;

/// Base cycles after which a run that has not produced enough edges counts as
/// stalled.
pub const DEFAULT_CYCLE_CAP: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "FlatFrequencySet", into = "FlatFrequencySet")]
pub struct FrequencySet {
    pub label: String,
    pub base_hz: f64,
    pub fundamentals: [f64; 4],
    pub duty_cycle: f64,
}

/// Key-value form used in config files: `label`, `base_hz`, `f1`..`f4`,
/// `duty_cycle`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlatFrequencySet {
    pub label: String,
    pub base_hz: f64,
    pub f1: f64,
    pub f2: f64,
    pub f3: f64,
    pub f4: f64,
    #[serde(default = "default_duty")]
    pub duty_cycle: f64,
}

fn default_duty() -> f64 {
    0.5
}

impl TryFrom<FlatFrequencySet> for FrequencySet {
    type Error = Error;

    fn try_from(f: FlatFrequencySet) -> Result<Self> {
        FrequencySet::with_duty(f.label, f.base_hz, [f.f1, f.f2, f.f3, f.f4], f.duty_cycle)
    }
}

impl From<FrequencySet> for FlatFrequencySet {
    fn from(fs: FrequencySet) -> Self {
        let [f1, f2, f3, f4] = fs.fundamentals;
        FlatFrequencySet {
            label: fs.label,
            base_hz: fs.base_hz,
            f1,
            f2,
            f3,
            f4,
            duty_cycle: fs.duty_cycle,
        }
    }
}

impl FrequencySet {
    pub fn new(label: impl Into<String>, base_hz: f64, fundamentals: [f64; 4]) -> Result<Self> {
        Self::with_duty(label, base_hz, fundamentals, 0.5)
    }

    pub fn with_duty(
        label: impl Into<String>,
        base_hz: f64,
        fundamentals: [f64; 4],
        duty_cycle: f64,
    ) -> Result<Self> {
        let fs = FrequencySet {
            label: label.into(),
            base_hz,
            fundamentals,
            duty_cycle,
        };
        fs.validate()?;
        Ok(fs)
    }

    /// Unrandomized reference: all four sources equal to the base clock.
    pub fn fixed(base_hz: f64) -> Self {
        FrequencySet {
            label: "Fixed clock".to_string(),
            base_hz,
            fundamentals: [base_hz; 4],
            duty_cycle: 0.5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidFrequencySet(msg));
        if !(self.base_hz.is_finite() && self.base_hz > 0.0) {
            return bad(format!("base_hz must be positive, got {}", self.base_hz));
        }
        for (i, f) in self.fundamentals.iter().enumerate() {
            if !(f.is_finite() && *f > 0.0) {
                return bad(format!("f{} must be positive, got {f}", i + 1));
            }
        }
        if !(self.duty_cycle > 0.0 && self.duty_cycle < 1.0) {
            return bad(format!(
                "duty_cycle must lie strictly between 0 and 1, got {}",
                self.duty_cycle
            ));
        }
        Ok(())
    }

    pub fn base_period(&self) -> f64 {
        1.0 / self.base_hz
    }

    pub fn periods(&self) -> [f64; 4] {
        self.fundamentals.map(|f| 1.0 / f)
    }

    pub fn max_fundamental(&self) -> f64 {
        self.fundamentals.iter().cloned().fold(f64::MIN, f64::max)
    }

    pub fn min_fundamental(&self) -> f64 {
        self.fundamentals.iter().cloned().fold(f64::MAX, f64::min)
    }

    /// True when every source equals the base clock.
    pub fn is_fixed(&self) -> bool {
        self.fundamentals.iter().all(|&f| f == self.base_hz)
    }
}

/// Phase state of the free-running clocks relative to an observer's time
/// origin: the first base edge at or after t = 0 and one rising edge of each
/// source.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClockPhases {
    pub base_offset_s: f64,
    pub source_offsets_s: [f64; 4],
}

impl ClockPhases {
    pub fn aligned() -> Self {
        ClockPhases {
            base_offset_s: 0.0,
            source_offsets_s: [0.0; 4],
        }
    }

    /// Phases seen from absolute time `tau_s` of clocks that were all aligned
    /// at absolute time zero.
    pub fn at_time(fs: &FrequencySet, tau_s: f64) -> Self {
        let wrap = |period: f64| {
            let r = (-tau_s).rem_euclid(period);
            if r < EDGE_EPS_S || period - r < EDGE_EPS_S {
                0.0
            } else {
                r
            }
        };
        ClockPhases {
            base_offset_s: wrap(fs.base_period()),
            source_offsets_s: fs.periods().map(wrap),
        }
    }
}

/// Level/edge arithmetic for one frequency set and phase state.
#[derive(Debug, Clone)]
struct MuxEngine {
    base: f64,
    offset: f64,
    periods: [f64; 4],
    high: [f64; 4],
    phase: [f64; 4],
}

impl MuxEngine {
    fn new(fs: &FrequencySet, phases: &ClockPhases) -> Self {
        let periods = fs.periods();
        MuxEngine {
            base: fs.base_period(),
            offset: phases.base_offset_s,
            periods,
            high: periods.map(|p| p * fs.duty_cycle),
            phase: phases.source_offsets_s,
        }
    }

    fn cycle_start(&self, cycle: i64) -> f64 {
        self.offset + cycle as f64 * self.base
    }

    /// Position of `t` inside source `i`'s period, snapped to 0 at edges.
    fn frac(&self, i: usize, t: f64) -> f64 {
        let p = self.periods[i];
        let f = (t - self.phase[i]).rem_euclid(p);
        if f < EDGE_EPS_S || p - f < EDGE_EPS_S {
            0.0
        } else {
            f
        }
    }

    fn level_at(&self, i: usize, t: f64) -> bool {
        self.frac(i, t) < self.high[i]
    }

    fn level_before(&self, i: usize, t: f64) -> bool {
        let f = self.frac(i, t);
        f > 0.0 && f <= self.high[i] + EDGE_EPS_S
    }

    /// Rising edges of source `i` in `[from, to)`.
    fn source_edges(&self, i: usize, from: f64, to: f64, mut visit: impl FnMut(f64)) {
        let p = self.periods[i];
        let ph = self.phase[i];
        let mut k = ((from - ph) / p).floor();
        while ph + k * p < from - EDGE_EPS_S {
            k += 1.0;
        }
        while ph + (k - 1.0) * p >= from - EDGE_EPS_S {
            k -= 1.0;
        }
        loop {
            let e = ph + k * p;
            if e >= to - EDGE_EPS_S {
                break;
            }
            visit(e);
            k += 1.0;
        }
    }

    /// Runs one base cycle. Output edges are handed to `push`; the return
    /// value is the number of the selected source's own rising edges in
    /// `[start, start + base)`.
    fn run_cycle(
        &self,
        cycle: i64,
        selected: usize,
        previous: Option<usize>,
        mut push: impl FnMut(f64),
    ) -> u8 {
        let start = self.cycle_start(cycle);
        let was_low = match previous {
            None => true,
            Some(p) => !self.level_before(p, start),
        };
        if was_low && self.level_at(selected, start) {
            push(start);
        }
        let mut own = 0u8;
        self.source_edges(selected, start, start + self.base, |e| {
            own = own.saturating_add(1);
            if e > start + EDGE_EPS_S {
                push(e);
            }
        });
        own
    }
}

fn push_merged(edges: &mut Vec<f64>, t: f64) {
    match edges.last() {
        Some(&last) if t - last < EDGE_EPS_S => {}
        _ => edges.push(t),
    }
}

/// Simulated mux output over a whole number of base cycles.
#[derive(Debug, Clone, PartialEq)]
pub struct OutputWaveform {
    /// Rising-edge timestamps in seconds, strictly increasing.
    pub edges: Vec<f64>,
    /// Selected source (0..4) for each base cycle.
    pub source_per_cycle: Vec<u8>,
    /// Rising edges of the selected source inside each base cycle.
    pub source_edges_per_cycle: Vec<u8>,
    pub n_base_cycles: usize,
    pub base_period_s: f64,
}

impl OutputWaveform {
    pub fn duration(&self) -> f64 {
        self.n_base_cycles as f64 * self.base_period_s
    }
}

/// Simulates the mux clock with all sources rising at t = 0.
pub fn simulate_mux_clock(fs: &FrequencySet, n_base_cycles: usize, seed: u64) -> Result<OutputWaveform> {
    simulate_mux_clock_with_phases(fs, n_base_cycles, seed, &ClockPhases::aligned())
}

/// Simulates the mux clock from t = 0 with the given phase state. The output
/// is taken to be low before the first base edge.
pub fn simulate_mux_clock_with_phases(
    fs: &FrequencySet,
    n_base_cycles: usize,
    seed: u64,
    phases: &ClockPhases,
) -> Result<OutputWaveform> {
    fs.validate()?;
    if n_base_cycles == 0 {
        return Err(Error::InvalidArgument("n_base_cycles must be at least 1".into()));
    }
    let engine = MuxEngine::new(fs, phases);
    let mut rng = rng_from_seed(seed);
    let mut edges = Vec::with_capacity(n_base_cycles * 2);
    let mut source_per_cycle = Vec::with_capacity(n_base_cycles);
    let mut source_edges_per_cycle = Vec::with_capacity(n_base_cycles);
    let end = n_base_cycles as f64 * engine.base + engine.offset;
    let mut previous = None;
    for cycle in 0..n_base_cycles {
        let selected = rng.random_range(0..4usize);
        let own = engine.run_cycle(cycle as i64, selected, previous, |t| {
            if t >= 0.0 && t <= end {
                push_merged(&mut edges, t)
            }
        });
        source_per_cycle.push(selected as u8);
        source_edges_per_cycle.push(own);
        previous = Some(selected);
    }
    Ok(OutputWaveform {
        edges,
        source_per_cycle,
        source_edges_per_cycle,
        n_base_cycles,
        base_period_s: engine.base,
    })
}

/// Output edges of one encryption run.
///
/// The observer's time origin is the trigger. The clocks have been running
/// before it, so the selection of the cycle containing the trigger (and of
/// the one before) is random. Returns every output edge in `(0, end]`, where
/// `end` is the later of `horizon_s` and the `min_edges`-th edge.
pub fn run_edges(
    fs: &FrequencySet,
    phases: &ClockPhases,
    rng: &mut SimRng,
    min_edges: usize,
    horizon_s: f64,
    max_cycles: usize,
) -> Result<Vec<f64>> {
    let engine = MuxEngine::new(fs, phases);
    let mut edges = Vec::with_capacity(min_edges + 8);
    let mut previous = Some(rng.random_range(0..4usize));
    let mut cycle: i64 = -1;
    loop {
        let start = engine.cycle_start(cycle);
        if edges.len() >= min_edges && start > horizon_s {
            break;
        }
        if cycle >= max_cycles as i64 {
            return Err(Error::StalledClock {
                edges: edges.len(),
                wanted: min_edges,
                cycles: max_cycles,
            });
        }
        let selected = rng.random_range(0..4usize);
        engine.run_cycle(cycle, selected, previous, |t| {
            if t > EDGE_EPS_S {
                push_merged(&mut edges, t);
            }
        });
        previous = Some(selected);
        cycle += 1;
    }
    // Cycles run whole, so trim edges past the requested end.
    let end = horizon_s.max(edges.get(min_edges.saturating_sub(1)).copied().unwrap_or(0.0));
    edges.retain(|&t| t <= end + EDGE_EPS_S);
    Ok(edges)
}

/// Phase state for an encryption triggered on a random base edge.
pub fn random_trigger(fs: &FrequencySet, rng: &mut SimRng) -> ClockPhases {
    let m = rng.random_range(0..TRIGGER_SPAN_CYCLES);
    ClockPhases::at_time(fs, m as f64 * fs.base_period())
}

/// Successive differences of the edge timestamps; `None` with fewer than two
/// edges.
pub fn extract_periods(w: &OutputWaveform) -> Option<Vec<f64>> {
    periods_of(&w.edges)
}

pub fn periods_of(edges: &[f64]) -> Option<Vec<f64>> {
    if edges.len() < 2 {
        return None;
    }
    Some(edges.windows(2).map(|p| p[1] - p[0]).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PeriodHistogram {
    pub bin_width_s: f64,
    pub bins: BTreeMap<u64, u64>,
    pub total_periods: u64,
    pub unique_bins: usize,
}

impl PeriodHistogram {
    /// CSV with one row per nonempty bin: `bin_index,period_low_s,count`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("bin_index,period_low_s,count\n");
        for (&bin, &count) in &self.bins {
            out.push_str(&format!(
                "{bin},{:.6e},{count}\n",
                bin as f64 * self.bin_width_s
            ));
        }
        out
    }

    /// Most frequent bin and its count.
    pub fn mode(&self) -> Option<(u64, u64)> {
        self.bins
            .iter()
            .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
            .map(|(&b, &c)| (b, c))
    }
}

/// Reference bin width for unique-period counts: one thousandth of the base
/// period.
pub fn reference_bin_width(fs: &FrequencySet) -> f64 {
    fs.base_period() / 1000.0
}

pub fn period_histogram(periods: &[f64], bin_width_s: f64) -> Result<PeriodHistogram> {
    if !(bin_width_s > 0.0 && bin_width_s.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "bin width must be positive, got {bin_width_s}"
        )));
    }
    let mut bins = BTreeMap::new();
    for &p in periods {
        *bins.entry((p / bin_width_s).floor() as u64).or_insert(0u64) += 1;
    }
    Ok(PeriodHistogram {
        bin_width_s,
        unique_bins: bins.len(),
        total_periods: periods.len() as u64,
        bins,
    })
}

fn check_periods(t_i: f64, t_b: f64) -> Result<()> {
    if !(t_i > 0.0 && t_b > 0.0 && t_i.is_finite() && t_b.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "periods must be positive, got T_i={t_i}, T_b={t_b}"
        )));
    }
    Ok(())
}

/// Probability that a source of period `t_i` rises at least once in a base
/// cycle of period `t_b`.
pub fn rising_edge_probability(t_i: f64, t_b: f64) -> Result<f64> {
    check_periods(t_i, t_b)?;
    Ok(if t_i >= t_b { t_b / t_i } else { 1.0 })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DoubleEdge {
    pub probability: f64,
    /// Set when the raw value `(T_b - T_i) / T_i` exceeded 1.
    pub clamped: bool,
}

/// Probability that a source contributes a second rising edge in one base
/// cycle.
pub fn double_edge_probability(t_i: f64, t_b: f64) -> Result<DoubleEdge> {
    check_periods(t_i, t_b)?;
    if t_i > t_b {
        return Ok(DoubleEdge {
            probability: 0.0,
            clamped: false,
        });
    }
    let raw = (t_b - t_i) / t_i;
    Ok(DoubleEdge {
        probability: raw.min(1.0),
        clamped: raw > 1.0,
    })
}

/// Probabilities of exactly 0..=4 sources rising in the same base cycle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EdgeCountDistribution {
    pub p: [f64; 5],
}

impl EdgeCountDistribution {
    pub fn total_variation(&self, other: &[f64; 5]) -> f64 {
        0.5 * self.p.iter().zip(other).map(|(a, b)| (a - b).abs()).sum::<f64>()
    }

    pub fn mean(&self) -> f64 {
        self.p.iter().enumerate().map(|(k, p)| k as f64 * p).sum()
    }
}

/// Expansion over the four independent edge events, written out term by term.
pub fn edge_count_distribution(p: [f64; 4]) -> Result<EdgeCountDistribution> {
    if let Some(bad) = p.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::InvalidArgument(format!(
            "probability {bad} outside [0, 1]"
        )));
    }
    let [p1, p2, p3, p4] = p;
    let (q1, q2, q3, q4) = (1.0 - p1, 1.0 - p2, 1.0 - p3, 1.0 - p4);
    let zero = q1 * q2 * q3 * q4;
    let one = p1 * q2 * q3 * q4 + p2 * q1 * q3 * q4 + p3 * q1 * q2 * q4 + p4 * q1 * q2 * q3;
    let two = p1 * p2 * q3 * q4
        + p1 * p3 * q2 * q4
        + p1 * p4 * q2 * q3
        + p2 * p3 * q1 * q4
        + p2 * p4 * q1 * q3
        + p3 * p4 * q1 * q2;
    let three = p2 * p3 * p4 * q1 + p1 * p3 * p4 * q2 + p1 * p2 * p4 * q3 + p1 * p2 * p3 * q4;
    let four = p1 * p2 * p3 * p4;
    Ok(EdgeCountDistribution {
        p: [zero, one, two, three, four],
    })
}

/// Per-source edge probabilities for a frequency set.
pub fn source_edge_probabilities(fs: &FrequencySet) -> [f64; 4] {
    let t_b = fs.base_period();
    // Periods are validated positive, so this cannot fail.
    fs.periods()
        .map(|t_i| rising_edge_probability(t_i, t_b).unwrap_or(0.0))
}

/// Empirical counterpart of [`edge_count_distribution`]: over `n_cycles` base
/// cycles of freely running sources, how many cycles saw exactly k sources
/// rise.
pub fn joint_edge_counts(fs: &FrequencySet, phases: &ClockPhases, n_cycles: usize) -> [u64; 5] {
    let engine = MuxEngine::new(fs, phases);
    let mut counts = [0u64; 5];
    for cycle in 0..n_cycles as i64 {
        let start = engine.cycle_start(cycle);
        let rising = (0..4)
            .filter(|&i| {
                let mut any = false;
                engine.source_edges(i, start, start + engine.base, |_| any = true);
                any
            })
            .count();
        counts[rising] += 1;
    }
    counts
}

/// Base-cycle successor permutations when `n_missing` of the four sources
/// have no rising edge in the current cycle.
pub fn permutation_count(n_missing: u32) -> Result<u32> {
    match n_missing {
        0 => Ok(16),
        1..=4 => Ok(4 * ((4 - n_missing) + 4) - 4 * n_missing),
        _ => Err(Error::InvalidArgument(format!(
            "n_missing must be in 0..=4, got {n_missing}"
        ))),
    }
}

/// Number of distinct completion times of `rounds` rounds drawn from
/// `n_freqs` frequencies: multisets of size `rounds`, i.e.
/// C(rounds + n_freqs - 1, rounds).
pub fn completion_time_count(n_freqs: u64, rounds: u64) -> Result<u128> {
    if n_freqs == 0 || rounds == 0 {
        return Err(Error::InvalidArgument(
            "n_freqs and rounds must both be at least 1".into(),
        ));
    }
    let n = rounds
        .checked_add(n_freqs - 1)
        .ok_or(Error::Overflow("completion_time_count"))? as u128;
    let k = (rounds as u128).min(n - rounds as u128);
    let mut acc: u128 = 1;
    for i in 1..=k {
        // acc = C(n - k + i - 1, i - 1) is exact, and so is the next term.
        acc = acc
            .checked_mul(n - k + i)
            .ok_or(Error::Overflow("completion_time_count"))?
            / i;
    }
    Ok(acc)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OverheadReport {
    pub mean_overhead: f64,
    pub worst_overhead: f64,
    pub max_delay_s: f64,
    pub error_risk: f64,
    pub error_threshold_s: f64,
    pub rounds: usize,
    pub n_encryptions: usize,
}

/// Runs `n_encryptions` independent encryptions of `rounds` rounds and
/// compares completion times against `rounds` base periods.
pub fn overhead_and_error(
    fs: &FrequencySet,
    rounds: usize,
    n_encryptions: usize,
    seed: u64,
) -> Result<OverheadReport> {
    overhead_and_error_with(fs, rounds, n_encryptions, seed, DEFAULT_ERROR_FRACTION)
}

pub fn overhead_and_error_with(
    fs: &FrequencySet,
    rounds: usize,
    n_encryptions: usize,
    seed: u64,
    error_fraction: f64,
) -> Result<OverheadReport> {
    fs.validate()?;
    if rounds == 0 || n_encryptions == 0 {
        return Err(Error::InvalidArgument(
            "rounds and n_encryptions must both be at least 1".into(),
        ));
    }
    if !(error_fraction > 0.0) {
        return Err(Error::InvalidArgument("error threshold must be positive".into()));
    }
    let t_b = fs.base_period();
    let threshold = error_fraction * t_b;
    let reference = rounds as f64 * t_b;
    let mut sum = 0.0;
    let mut worst: f64 = 0.0;
    let mut short = 0u64;
    let mut periods = 0u64;
    for run in 0..n_encryptions {
        let mut rng = rng_from_seed(derive_seed(seed, 0x0BE5, run as u64));
        let phases = random_trigger(fs, &mut rng);
        let edges = run_edges(fs, &phases, &mut rng, rounds, 0.0, DEFAULT_CYCLE_CAP)?;
        let done = edges[rounds - 1];
        sum += done;
        worst = worst.max(done);
        for w in edges[..rounds].windows(2) {
            periods += 1;
            if w[1] - w[0] < threshold {
                short += 1;
            }
        }
    }
    Ok(OverheadReport {
        mean_overhead: sum / n_encryptions as f64 / reference - 1.0,
        worst_overhead: worst / reference - 1.0,
        max_delay_s: worst,
        error_risk: if periods == 0 {
            0.0
        } else {
            short as f64 / periods as f64
        },
        error_threshold_s: threshold,
        rounds,
        n_encryptions,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn previous_work() -> FrequencySet {
        FrequencySet::new("Previous work", 10e6, [11.9713e6, 7.7315e6, 9.2778e6, 12.6515e6]).unwrap()
    }

    #[test]
    fn rejects_bad_sets() {
        assert!(FrequencySet::new("x", 0.0, [1.0; 4]).is_err());
        assert!(FrequencySet::new("x", 1.0, [1.0, 1.0, -1.0, 1.0]).is_err());
        assert!(FrequencySet::with_duty("x", 1.0, [1.0; 4], 1.0).is_err());
        assert!(FrequencySet::with_duty("x", 1.0, [1.0; 4], 0.0).is_err());
    }

    #[test]
    fn flat_form_round_trips() {
        let fs = previous_work();
        let json = serde_json::to_string(&fs).unwrap();
        assert!(json.contains("\"f3\":9277800.0"));
        let back: FrequencySet = serde_json::from_str(&json).unwrap();
        assert_eq!(back, fs);
        let bad = json.replace("\"f3\"", "\"f5\"");
        assert!(serde_json::from_str::<FrequencySet>(&bad).is_err());
    }

    #[test]
    fn identical_sources_give_base_clock() {
        let fs = FrequencySet::fixed(10e6);
        let w = simulate_mux_clock(&fs, 200, 3).unwrap();
        assert_eq!(w.edges.len(), 200);
        for p in extract_periods(&w).unwrap() {
            assert!((p - 1e-7).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_cycles_rejected() {
        assert!(simulate_mux_clock(&previous_work(), 0, 1).is_err());
    }

    #[test]
    fn slow_source_can_miss_a_cycle() {
        // A lone 3 MHz source has no edge in most 10 MHz cycles.
        let fs = FrequencySet::new("slow", 10e6, [3e6; 4]).unwrap();
        let w = simulate_mux_clock(&fs, 300, 1).unwrap();
        assert!(w.source_edges_per_cycle.iter().any(|&n| n == 0));
        let periods = extract_periods(&w).unwrap();
        assert!(periods.iter().any(|&p| p > 1e-7));
    }

    #[test]
    fn fast_source_gives_double_edges() {
        let fs = FrequencySet::new("fast", 10e6, [25e6; 4]).unwrap();
        let w = simulate_mux_clock(&fs, 100, 1).unwrap();
        assert!(w.source_edges_per_cycle.iter().any(|&n| n >= 2));
    }

    #[test]
    fn switch_creates_edge_on_base_edge() {
        // Two identical sources, half a period apart: switching from one in
        // its low half to one in its high half rises on the base edge.
        let fs = FrequencySet::new("sw", 10e6, [5e6; 4]).unwrap();
        let phases = ClockPhases {
            base_offset_s: 0.0,
            source_offsets_s: [0.0, 1e-7, 0.0, 1e-7],
        };
        let w = simulate_mux_clock_with_phases(&fs, 400, 9, &phases).unwrap();
        let on_base = w
            .edges
            .iter()
            .filter(|&&t| {
                let c = (t / 1e-7).round();
                c > 0.0 && (t - c * 1e-7).abs() < 1e-12
            })
            .count();
        assert!(on_base > 0);
    }

    #[test]
    fn waveform_invariants() {
        let fs = previous_work();
        let w = simulate_mux_clock(&fs, 5000, 11).unwrap();
        assert_eq!(w.source_per_cycle.len(), w.n_base_cycles);
        assert!(w.edges.windows(2).all(|p| p[1] - p[0] >= EDGE_EPS_S));
        assert!(w.edges.iter().all(|&t| t >= 0.0 && t <= w.duration()));
        let periods = extract_periods(&w).unwrap();
        let total: f64 = periods.iter().sum();
        let span = w.edges.last().unwrap() - w.edges[0];
        assert!((total - span).abs() <= 1e-9 * span);
    }

    #[test]
    fn deterministic_for_seed() {
        let fs = previous_work();
        assert_eq!(
            simulate_mux_clock(&fs, 1000, 5).unwrap(),
            simulate_mux_clock(&fs, 1000, 5).unwrap()
        );
        assert_ne!(
            simulate_mux_clock(&fs, 1000, 5).unwrap().edges,
            simulate_mux_clock(&fs, 1000, 6).unwrap().edges
        );
    }

    #[test]
    fn periods_from_edges() {
        assert_eq!(periods_of(&[0.0, 1.0, 3.0]).unwrap(), vec![1.0, 2.0]);
        assert!(periods_of(&[1.0]).is_none());
    }

    #[test]
    fn histogram_basics() {
        let h = period_histogram(&[1.0, 1.0, 2.0], 0.5).unwrap();
        assert_eq!(h.unique_bins, 2);
        assert_eq!(h.total_periods, 3);
        assert_eq!(h.bins.values().sum::<u64>(), 3);
        let e = period_histogram(&[], 0.5).unwrap();
        assert_eq!((e.unique_bins, e.total_periods), (0, 0));
        assert!(period_histogram(&[1.0], 0.0).is_err());
        assert!(period_histogram(&[1.0], -1.0).is_err());
        assert_eq!(h.to_csv(), "bin_index,period_low_s,count\n2,1.000000e0,2\n4,2.000000e0,1\n");
    }

    #[test]
    fn edge_probability_cases() {
        assert_eq!(rising_edge_probability(2.0, 1.0).unwrap(), 0.5);
        assert_eq!(rising_edge_probability(1.0, 1.0).unwrap(), 1.0);
        assert_eq!(rising_edge_probability(0.5, 1.0).unwrap(), 1.0);
        assert!(rising_edge_probability(0.0, 1.0).is_err());
        assert!(rising_edge_probability(1.0, -1.0).is_err());
    }

    #[test]
    fn double_edge_cases() {
        assert_eq!(double_edge_probability(1.0, 1.0).unwrap().probability, 0.0);
        let d = double_edge_probability(0.8, 1.0).unwrap();
        assert!((d.probability - 0.25).abs() < 1e-15 && !d.clamped);
        assert_eq!(double_edge_probability(2.0, 1.0).unwrap().probability, 0.0);
        let c = double_edge_probability(0.25, 1.0).unwrap();
        assert_eq!(c.probability, 1.0);
        assert!(c.clamped);
        assert!(double_edge_probability(1.0, 0.0).is_err());
    }

    #[test]
    fn distribution_edge_cases() {
        assert_eq!(edge_count_distribution([1.0; 4]).unwrap().p, [0.0, 0.0, 0.0, 0.0, 1.0]);
        assert_eq!(edge_count_distribution([0.0; 4]).unwrap().p, [1.0, 0.0, 0.0, 0.0, 0.0]);
        let half = edge_count_distribution([0.5; 4]).unwrap();
        let expect = [1.0, 4.0, 6.0, 4.0, 1.0].map(|v| v / 16.0);
        for k in 0..5 {
            assert!((half.p[k] - expect[k]).abs() < 1e-15);
        }
        assert!(edge_count_distribution([0.5, 1.1, 0.0, 0.0]).is_err());
        assert!(edge_count_distribution([-0.1, 0.5, 0.0, 0.0]).is_err());
    }

    #[test]
    fn permutation_table() {
        let got: Vec<u32> = (0..=4).map(|n| permutation_count(n).unwrap()).collect();
        assert_eq!(got, vec![16, 24, 16, 8, 0]);
        assert!(permutation_count(5).is_err());
    }

    #[test]
    fn completion_times() {
        assert_eq!(completion_time_count(1, 10).unwrap(), 1);
        assert_eq!(completion_time_count(4, 10).unwrap(), 286);
        assert_eq!(completion_time_count(2, 2).unwrap(), 3);
        assert!(completion_time_count(0, 3).is_err());
        assert!(matches!(
            completion_time_count(u64::MAX, 40),
            Err(Error::Overflow(_))
        ));
        assert!(completion_time_count(200, 60).is_err());
    }

    #[test]
    fn fixed_clock_has_no_overhead() {
        let r = overhead_and_error(&FrequencySet::fixed(10e6), 10, 200, 1).unwrap();
        assert!(r.mean_overhead.abs() < 1e-9);
        assert!(r.worst_overhead.abs() < 1e-9);
        assert_eq!(r.error_risk, 0.0);
        assert!(r.worst_overhead >= r.mean_overhead);
    }

    #[test]
    fn fast_source_raises_error_risk() {
        let fs = FrequencySet::new("hot", 10e6, [45e6, 9e6, 11e6, 10e6]).unwrap();
        let r = overhead_and_error(&fs, 10, 500, 1).unwrap();
        assert!(r.error_risk > 0.0);
        assert!(r.worst_overhead >= r.mean_overhead);
    }

    #[test]
    fn run_edges_reports_stall() {
        let fs = FrequencySet::new("dead slow", 10e6, [1e3; 4]).unwrap();
        let mut rng = rng_from_seed(1);
        let phases = ClockPhases::at_time(&fs, 3.3e-5);
        let err = run_edges(&fs, &phases, &mut rng, 10, 0.0, 50).unwrap_err();
        assert!(matches!(err, Error::StalledClock { .. }));
    }
}
