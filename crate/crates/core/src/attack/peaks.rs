use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PeakParams {
    /// Threshold is `mean + k_sigma * std` of the trace.
    pub k_sigma: f64,
    /// Minimum distance in samples between two accepted peaks.
    pub min_separation: usize,
}

impl PeakParams {
    pub fn for_oversampling(oversampling: u32) -> Self {
        PeakParams {
            k_sigma: 3.0,
            min_separation: (oversampling as usize / 4).max(1),
        }
    }
}

impl Default for PeakParams {
    fn default() -> Self {
        Self::for_oversampling(8)
    }
}

/// `mean + k * std` over the samples (population standard deviation).
pub fn peak_threshold(samples: &[f32], k_sigma: f64) -> f64 {
    if samples.is_empty() {
        return f64::INFINITY;
    }
    let n = samples.len() as f64;
    let mean = samples.iter().map(|&v| v as f64).sum::<f64>() / n;
    let var = samples
        .iter()
        .map(|&v| {
            let d = v as f64 - mean;
            d * d
        })
        .sum::<f64>()
        / n;
    mean + k_sigma * var.sqrt()
}

/// Every local maximum above the threshold, ascending. On a plateau the
/// last sample is reported.
pub fn local_maxima(samples: &[f32], k_sigma: f64) -> Vec<usize> {
    let thr = peak_threshold(samples, k_sigma);
    let n = samples.len();
    (0..n)
        .filter(|&i| {
            let v = samples[i] as f64;
            v > thr
                && (i == 0 || samples[i] >= samples[i - 1])
                && (i + 1 == n || samples[i] > samples[i + 1])
        })
        .collect()
}

/// Greedy separation: candidates are accepted tallest first and any
/// candidate closer than `min_separation` to an accepted one is dropped.
pub fn separate(samples: &[f32], candidates: &[usize], min_separation: usize) -> Vec<usize> {
    let mut order = candidates.to_vec();
    order.sort_by(|&a, &b| samples[b].total_cmp(&samples[a]).then(a.cmp(&b)));
    let mut accepted = std::collections::BTreeSet::new();
    for i in order {
        let lo = i.saturating_sub(min_separation.saturating_sub(1));
        let clash = accepted
            .range(lo..i + min_separation)
            .next()
            .is_some();
        if !clash {
            accepted.insert(i);
        }
    }
    accepted.into_iter().collect()
}

/// Sample indices of the detected peaks, ascending.
pub fn detect_peaks(samples: &[f32], params: &PeakParams) -> Vec<usize> {
    let raw = local_maxima(samples, params.k_sigma);
    separate(samples, &raw, params.min_separation)
}
