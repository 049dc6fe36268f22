//! Brute-force cost of locating the last round peak in duplicated-core
//! traces, and the help that coinciding peaks of the two cores give.

use num_bigint::BigUint;
use serde::{Deserialize, Serialize};

use super::peaks::{detect_peaks, PeakParams};
use crate::clock::FrequencySet;
use crate::error::{Error, Result};
use crate::synth::TraceSet;

pub const MIN_CANDIDATES: usize = 2;
pub const MAX_CANDIDATES: usize = 11;

#[derive(Debug, Clone, PartialEq)]
pub struct PermutationBound {
    pub per_trace_candidates: usize,
    /// `per_trace_candidates ^ n_traces`.
    pub total: BigUint,
}

/// Plausible positions of the last round peak per trace, from the spread of
/// the fundamentals of one or both cores: `ceil(f_max / f_min) + 1`, clamped
/// to `2..=11`.
pub fn candidates_per_trace(fs1: &FrequencySet, fs2: Option<&FrequencySet>) -> usize {
    let all = fs1
        .fundamentals
        .iter()
        .chain(fs2.into_iter().flat_map(|f| f.fundamentals.iter()));
    let (lo, hi) = all.fold((f64::INFINITY, 0.0f64), |(lo, hi), &f| (lo.min(f), hi.max(f)));
    let ratio = hi / lo;
    // Ratios that are whole numbers up to rounding noise are not bumped.
    let steps = (ratio - 1e-9).ceil().max(1.0) as usize;
    (steps + 1).clamp(MIN_CANDIDATES, MAX_CANDIDATES)
}

pub fn peak_permutation_bound(
    fs1: &FrequencySet,
    fs2: Option<&FrequencySet>,
    n_traces: u32,
) -> Result<PermutationBound> {
    if n_traces == 0 {
        return Err(Error::InvalidArgument("n_traces must be at least 1".into()));
    }
    let c = candidates_per_trace(fs1, fs2);
    Ok(PermutationBound {
        per_trace_candidates: c,
        total: BigUint::from(c).pow(n_traces),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OverlapParams {
    pub peaks: PeakParams,
    /// A peak taller than this multiple of the trace's median peak height
    /// is taken as two coinciding edges.
    pub height_factor: f64,
    /// Candidates per trace; derived from the frequency sets when `None`.
    pub candidates: Option<usize>,
    /// Candidates left when a coincidence peak borders the candidate region.
    pub reduced_candidates: usize,
}

impl OverlapParams {
    pub fn for_oversampling(oversampling: u32) -> Self {
        OverlapParams {
            peaks: PeakParams::for_oversampling(oversampling),
            height_factor: 1.5,
            candidates: None,
            reduced_candidates: 2,
        }
    }
}

impl Default for OverlapParams {
    fn default() -> Self {
        Self::for_oversampling(8)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OverlapReport {
    pub n_traces: usize,
    /// Traces with at least one coincidence peak.
    pub overlap_fraction: f64,
    /// Traces whose first peak is a coincidence peak.
    pub first_round_overlap_fraction: f64,
    /// Traces with a coincidence peak bordering the candidate region.
    pub flanking_fraction: f64,
    pub candidates: usize,
    pub mean_reduced_candidates: f64,
    /// Chance of guessing the last peak of one trace, without and with the
    /// coincidence information.
    pub success_before: f64,
    pub success_after: f64,
}

/// Per-trace analysis used by [`overlap_exploit`].
#[derive(Debug, Clone, PartialEq)]
pub struct TraceOverlap {
    pub peaks: Vec<usize>,
    pub overlaps: Vec<usize>,
    pub first_is_overlap: bool,
    pub flanks_candidates: bool,
    pub reduced_candidates: usize,
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        0.0
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

pub fn trace_overlap(samples: &[f32], params: &OverlapParams, candidates: usize) -> TraceOverlap {
    let peaks = detect_peaks(samples, &params.peaks);
    let mut heights: Vec<f64> = peaks.iter().map(|&p| samples[p] as f64).collect();
    let cut = params.height_factor * median(&mut heights);
    let overlaps: Vec<usize> = peaks
        .iter()
        .enumerate()
        .filter(|&(_, &p)| samples[p] as f64 > cut)
        .map(|(i, _)| i)
        .collect();
    // The last peak lies among the final `candidates` peaks; an overlap in
    // that region or right before it pins the alignment of both cores.
    let region_start = peaks.len().saturating_sub(candidates + 1);
    let flanks = !peaks.is_empty() && overlaps.iter().any(|&i| i >= region_start);
    TraceOverlap {
        first_is_overlap: overlaps.first() == Some(&0),
        flanks_candidates: flanks,
        reduced_candidates: if flanks {
            candidates.min(params.reduced_candidates)
        } else {
            candidates
        },
        overlaps: overlaps.iter().map(|&i| peaks[i]).collect(),
        peaks,
    }
}

pub fn overlap_exploit(ts: &TraceSet, params: &OverlapParams) -> Result<OverlapReport> {
    if ts.core_count() != 2 {
        return Err(Error::InvalidArgument(
            "overlap analysis needs a dual-core trace set".into(),
        ));
    }
    if ts.is_empty() {
        return Err(Error::Empty("trace set"));
    }
    let candidates = params
        .candidates
        .unwrap_or_else(|| candidates_per_trace(&ts.fs, ts.fs2.as_ref()))
        .max(1);
    let (mut any, mut first, mut flank) = (0usize, 0usize, 0usize);
    let (mut reduced_sum, mut success_sum) = (0.0, 0.0);
    for tr in &ts.traces {
        let o = trace_overlap(&tr.samples, params, candidates);
        any += !o.overlaps.is_empty() as usize;
        first += o.first_is_overlap as usize;
        flank += o.flanks_candidates as usize;
        reduced_sum += o.reduced_candidates as f64;
        success_sum += 1.0 / o.reduced_candidates as f64;
    }
    let n = ts.len() as f64;
    Ok(OverlapReport {
        n_traces: ts.len(),
        overlap_fraction: any as f64 / n,
        first_round_overlap_fraction: first as f64 / n,
        flanking_fraction: flank as f64 / n,
        candidates,
        mean_reduced_candidates: reduced_sum / n,
        success_before: 1.0 / candidates as f64,
        success_after: success_sum / n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(f: [f64; 4]) -> FrequencySet {
        FrequencySet::new("t", 10e6, f.map(|v| v * 1e6)).unwrap()
    }

    #[test]
    fn candidate_formula() {
        assert_eq!(candidates_per_trace(&set([10.0; 4]), None), 2);
        assert_eq!(candidates_per_trace(&set([1.0, 20.0, 5.0, 5.0]), None), 11);
        assert_eq!(candidates_per_trace(&set([4.0, 12.0, 8.0, 8.0]), None), 4);
        assert_eq!(
            candidates_per_trace(&set([4.0, 12.0, 8.0, 8.0]), Some(&set([2.0, 5.0, 5.0, 5.0]))),
            7
        );
    }

    #[test]
    fn total_is_exact_power() {
        let b = peak_permutation_bound(&set([5.0, 10.0, 10.0, 10.0]), None, 40).unwrap();
        assert_eq!(b.per_trace_candidates, 3);
        assert_eq!(b.total, BigUint::from(3u32).pow(40));
        assert!(peak_permutation_bound(&set([5.0; 4]), None, 0).is_err());
    }

    #[test]
    fn flanking_overlap_reduces_candidates() {
        let mut s = vec![0.0f32; 200];
        for i in 0..10 {
            s[10 + 15 * i] = 10.0;
        }
        let p = OverlapParams::default();
        let o = trace_overlap(&s, &p, 5);
        assert!(o.overlaps.is_empty());
        assert_eq!(o.reduced_candidates, 5);
        s[10 + 15 * 4] = 20.0;
        let o = trace_overlap(&s, &p, 5);
        assert_eq!(o.overlaps, vec![70]);
        assert!(o.flanks_candidates);
        assert_eq!(o.reduced_candidates, 2);
        s[10 + 15 * 4] = 10.0;
        s[10] = 20.0;
        let o = trace_overlap(&s, &p, 5);
        assert!(o.first_is_overlap && !o.flanks_candidates);
    }
}
