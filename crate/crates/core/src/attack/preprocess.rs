//! Trace filtering and round alignment.

use serde::{Deserialize, Serialize};

use super::peaks::{local_maxima, separate, PeakParams};
use crate::aes::{Block, ROUNDS};
use crate::synth::TraceSet;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterParams {
    pub peaks: PeakParams,
    /// Number of round peaks a usable trace must show.
    pub rounds: usize,
    /// Narrowest accepted distance between consecutive round peaks, in
    /// samples. Shorter periods are not resolved by the sampling rate.
    pub min_period_samples: usize,
}

impl FilterParams {
    pub fn for_oversampling(oversampling: u32) -> Self {
        FilterParams {
            peaks: PeakParams::for_oversampling(oversampling),
            rounds: ROUNDS,
            min_period_samples: (oversampling as usize / 2).max(2),
        }
    }
}

impl Default for FilterParams {
    fn default() -> Self {
        Self::for_oversampling(8)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RemovalReason {
    Failed,
    MissedWindow,
    TooClose,
    Undersampled,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct RemovalCounts {
    pub failed: usize,
    pub missed_window: usize,
    pub too_close: usize,
    pub undersampled: usize,
    pub unalignable: usize,
}

impl RemovalCounts {
    /// Traces removed for measurement reasons; failed encryptions excluded.
    pub fn removed(&self) -> usize {
        self.missed_window + self.too_close + self.undersampled + self.unalignable
    }
}

/// Outcome of [`filter_traces`]. Samples stay in the source set; only
/// indices and detected peaks are kept.
#[derive(Debug, Clone)]
pub struct Filtered {
    pub total: usize,
    pub kept_indices: Vec<usize>,
    /// Detected peaks of each kept trace.
    pub peaks: Vec<Vec<usize>>,
    pub counts: RemovalCounts,
}

impl Filtered {
    pub fn removed_fraction(&self) -> f64 {
        fraction(self.counts.removed(), self.total)
    }

    pub fn failed_fraction(&self) -> f64 {
        fraction(self.counts.failed, self.total)
    }

    /// Copy of the kept traces as a set of their own.
    pub fn kept_set(&self, ts: &TraceSet) -> TraceSet {
        ts.with_traces(
            self.kept_indices
                .iter()
                .map(|&i| ts.traces[i].clone())
                .collect(),
        )
    }
}

fn fraction(k: usize, n: usize) -> f64 {
    if n == 0 {
        0.0
    } else {
        k as f64 / n as f64
    }
}

/// Classifies one trace. Returns its peaks when usable.
pub fn screen_trace(samples: &[f32], params: &FilterParams) -> Result<Vec<usize>, RemovalReason> {
    let raw = local_maxima(samples, params.peaks.k_sigma);
    let peaks = separate(samples, &raw, params.peaks.min_separation);
    if peaks.len() < params.rounds {
        return Err(RemovalReason::MissedWindow);
    }
    if raw.len() != peaks.len() {
        return Err(RemovalReason::TooClose);
    }
    let narrowest = peaks[..params.rounds]
        .windows(2)
        .map(|w| w[1] - w[0])
        .min()
        .unwrap_or(usize::MAX);
    if narrowest < params.min_period_samples {
        return Err(RemovalReason::Undersampled);
    }
    Ok(peaks)
}

/// Drops failed encryptions, traces without a full set of round peaks,
/// traces whose peaks crowd together and traces with under-sampled periods.
/// Kept traces stay in their original order.
pub fn filter_traces(ts: &TraceSet, params: &FilterParams) -> Filtered {
    let mut out = Filtered {
        total: ts.len(),
        kept_indices: Vec::new(),
        peaks: Vec::new(),
        counts: RemovalCounts::default(),
    };
    for (i, tr) in ts.traces.iter().enumerate() {
        if tr.failed {
            out.counts.failed += 1;
            continue;
        }
        match screen_trace(&tr.samples, params) {
            Ok(p) => {
                out.kept_indices.push(i);
                out.peaks.push(p);
            }
            Err(RemovalReason::MissedWindow) => out.counts.missed_window += 1,
            Err(RemovalReason::TooClose) => out.counts.too_close += 1,
            Err(RemovalReason::Undersampled) => out.counts.undersampled += 1,
            Err(RemovalReason::Failed) => unreachable!(),
        }
    }
    out
}

/// Traces cut to a common window around one round peak.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AlignedMatrix {
    /// Row-major, `n_cols` samples per row.
    pub data: Vec<f32>,
    pub n_cols: usize,
    /// Column holding the aligned round peak.
    pub round_anchor: usize,
    /// Index of each row's trace in the source set, strictly increasing.
    pub kept_indices: Vec<usize>,
    /// Sample index of the aligned peak in each source trace.
    pub peak_positions: Vec<usize>,
    pub ciphertexts: Vec<Block>,
}

impl AlignedMatrix {
    pub fn n_rows(&self) -> usize {
        self.kept_indices.len()
    }

    pub fn row(&self, r: usize) -> &[f32] {
        &self.data[r * self.n_cols..(r + 1) * self.n_cols]
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        (0..self.n_rows())
            .map(|r| self.data[r * self.n_cols + c] as f64)
            .collect()
    }

    /// Rows `start..end` as a matrix of their own.
    pub fn slice_rows(&self, start: usize, end: usize) -> AlignedMatrix {
        AlignedMatrix {
            data: self.data[start * self.n_cols..end * self.n_cols].to_vec(),
            n_cols: self.n_cols,
            round_anchor: self.round_anchor,
            kept_indices: self.kept_indices[start..end].to_vec(),
            peak_positions: self.peak_positions[start..end].to_vec(),
            ciphertexts: self.ciphertexts[start..end].to_vec(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyncParams {
    /// Round whose peak is aligned, 1-based.
    pub round: usize,
    /// Samples kept before and after the aligned peak.
    pub before: usize,
    pub after: usize,
}

impl SyncParams {
    pub fn for_oversampling(oversampling: u32) -> Self {
        SyncParams {
            round: ROUNDS,
            before: oversampling as usize,
            after: oversampling as usize,
        }
    }
}

impl Default for SyncParams {
    fn default() -> Self {
        Self::for_oversampling(8)
    }
}

/// Shifts every kept trace so its `round`-th peak lands on the anchor
/// column. Traces whose window would leave the capture are dropped and
/// counted as unalignable in `filtered`.
pub fn synchronize(ts: &TraceSet, filtered: &mut Filtered, params: &SyncParams) -> AlignedMatrix {
    let n_cols = params.before + params.after + 1;
    let mut am = AlignedMatrix {
        data: Vec::with_capacity(filtered.kept_indices.len() * n_cols),
        n_cols,
        round_anchor: params.before,
        kept_indices: Vec::new(),
        peak_positions: Vec::new(),
        ciphertexts: Vec::new(),
    };
    let mut kept = Vec::new();
    let mut peaks_kept = Vec::new();
    for (&i, peaks) in filtered.kept_indices.iter().zip(&filtered.peaks) {
        let samples = &ts.traces[i].samples;
        let Some(&p) = params.round.checked_sub(1).and_then(|r| peaks.get(r)) else {
            filtered.counts.unalignable += 1;
            continue;
        };
        if p < params.before || p + params.after >= samples.len() {
            filtered.counts.unalignable += 1;
            continue;
        }
        am.data
            .extend_from_slice(&samples[p - params.before..=p + params.after]);
        am.kept_indices.push(i);
        am.peak_positions.push(p);
        am.ciphertexts.push(ts.traces[i].ciphertext);
        kept.push(i);
        peaks_kept.push(peaks.clone());
    }
    filtered.kept_indices = kept;
    filtered.peaks = peaks_kept;
    am
}

/// The kept traces as they were captured, full length and unshifted.
/// The anchor is where the round peak sits for an unrandomized clock.
pub fn unaligned(ts: &TraceSet, kept_indices: &[usize], round: usize) -> AlignedMatrix {
    let n_cols = kept_indices
        .iter()
        .map(|&i| ts.traces[i].samples.len())
        .min()
        .unwrap_or(0);
    let nominal = round * ts.config.oversampling as usize;
    let mut data = Vec::with_capacity(kept_indices.len() * n_cols);
    for &i in kept_indices {
        data.extend_from_slice(&ts.traces[i].samples[..n_cols]);
    }
    AlignedMatrix {
        data,
        n_cols,
        round_anchor: nominal.min(n_cols.saturating_sub(1)),
        kept_indices: kept_indices.to_vec(),
        peak_positions: vec![nominal; kept_indices.len()],
        ciphertexts: kept_indices.iter().map(|&i| ts.traces[i].ciphertext).collect(),
    }
}

/// Largest lag of the aligned peak behind its unrandomized position, in
/// samples.
pub fn max_delay_samples(am: &AlignedMatrix, round: usize, oversampling: u32) -> usize {
    let nominal = round * oversampling as usize;
    am.peak_positions
        .iter()
        .map(|&p| p.saturating_sub(nominal))
        .max()
        .unwrap_or(0)
}
