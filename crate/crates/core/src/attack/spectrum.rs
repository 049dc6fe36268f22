//! Averaged magnitude spectra of trace sets.
//!
//! Each trace is zero-padded to the next power of two of the longest trace
//! and transformed. Magnitudes are one-sided and unitary: for a real trace
//! `x` of padded length `n`, bin `k` holds `|X_k| / sqrt(n)`, doubled in
//! power for bins other than DC and Nyquist, so that the squared magnitudes
//! sum to the trace energy `sum x^2`. Spectra are averaged in power across
//! traces and coarser bins are formed by summing power, which keeps that
//! identity for the averaged spectrum.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::synth::TraceSet;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectrumHistogram {
    pub bin_hz: f64,
    pub sample_rate_hz: f64,
    pub fft_len: usize,
    pub n_traces: usize,
    pub magnitudes: Vec<f64>,
}

impl SpectrumHistogram {
    pub fn bin_low_hz(&self, k: usize) -> f64 {
        k as f64 * self.bin_hz
    }

    pub fn bin_of(&self, hz: f64) -> usize {
        ((hz / self.bin_hz).round() as usize).min(self.magnitudes.len().saturating_sub(1))
    }

    /// Sum of squared magnitudes; equals the mean trace energy.
    pub fn energy(&self) -> f64 {
        self.magnitudes.iter().map(|m| m * m).sum()
    }

    /// Largest bin other than DC; the lowest such bin on ties.
    pub fn dominant_bin(&self) -> Option<usize> {
        let m = &self.magnitudes;
        (1..m.len()).reduce(|best, k| if m[k] > m[best] { k } else { best })
    }

    /// Bins (excluding DC) that exceed both neighbours, tallest first.
    pub fn local_peaks(&self) -> Vec<usize> {
        let m = &self.magnitudes;
        let mut p: Vec<usize> = (1..m.len().saturating_sub(1))
            .filter(|&k| m[k] > m[k - 1] && m[k] >= m[k + 1])
            .collect();
        p.sort_by(|&a, &b| m[b].total_cmp(&m[a]).then(a.cmp(&b)));
        p
    }

    pub fn top_peaks(&self, n: usize) -> Vec<usize> {
        let mut p = self.local_peaks();
        p.truncate(n);
        p
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("bin_low_hz,magnitude\n");
        for (k, m) in self.magnitudes.iter().enumerate() {
            out.push_str(&format!("{:.3},{:.9e}\n", self.bin_low_hz(k), m));
        }
        out
    }
}

fn fold(buf: &[Complex<f64>], n: usize) -> Vec<f64> {
    let half = n / 2;
    (0..=half)
        .map(|k| {
            let p = buf[k].norm_sqr() / n as f64;
            if k == 0 || (n % 2 == 0 && k == half) {
                p
            } else {
                2.0 * p
            }
        })
        .collect()
}

/// Averaged spectrum of the traces, binned at `bin_hz` (rounded to a whole
/// number of native bins) or at the native resolution when `None`.
pub fn fft_spectrum(ts: &TraceSet, bin_hz: Option<f64>) -> Result<SpectrumHistogram> {
    let signals: Vec<&[f32]> = ts.traces.iter().map(|t| t.samples.as_slice()).collect();
    spectrum_of(&signals, 1.0 / ts.sample_period_s(), bin_hz)
}

pub fn spectrum_of(
    signals: &[&[f32]],
    sample_rate_hz: f64,
    bin_hz: Option<f64>,
) -> Result<SpectrumHistogram> {
    if signals.is_empty() {
        return Err(Error::Empty("trace set"));
    }
    if let Some(b) = bin_hz {
        if !(b > 0.0 && b.is_finite()) {
            return Err(Error::InvalidArgument(format!("bin width must be positive, got {b}")));
        }
    }
    let longest = signals.iter().map(|s| s.len()).max().unwrap_or(0).max(1);
    let n = longest.next_power_of_two();
    let native = sample_rate_hz / n as f64;

    let mut planner = FftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(n);
    let mut acc = vec![0.0f64; n / 2 + 1];
    let mut buf = vec![Complex::new(0.0, 0.0); n];
    for s in signals {
        for (slot, x) in buf.iter_mut().zip(s.iter().map(|&v| v as f64).chain(std::iter::repeat(0.0))) {
            *slot = Complex::new(x, 0.0);
        }
        fft.process(&mut buf);
        for (a, p) in acc.iter_mut().zip(fold(&buf, n)) {
            *a += p;
        }
    }
    let count = signals.len() as f64;
    acc.iter_mut().for_each(|a| *a /= count);

    let group = bin_hz.map_or(1, |b| ((b / native).round() as usize).max(1));
    let magnitudes = acc
        .chunks(group)
        .map(|c| c.iter().sum::<f64>().sqrt())
        .collect();
    Ok(SpectrumHistogram {
        bin_hz: native * group as f64,
        sample_rate_hz,
        fft_len: n,
        n_traces: signals.len(),
        magnitudes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sinusoid_has_one_dominant_bin() {
        let rate = 1000.0;
        let f = 125.0;
        let x: Vec<f32> = (0..256)
            .map(|i| (2.0 * std::f64::consts::PI * f * i as f64 / rate).sin() as f32)
            .collect();
        let sp = spectrum_of(&[&x], rate, None).unwrap();
        let k = sp.dominant_bin().unwrap();
        assert!((sp.bin_low_hz(k) - f).abs() <= sp.bin_hz);
    }

    #[test]
    fn parseval_with_padding_and_grouping() {
        let a: Vec<f32> = (0..100).map(|i| ((i * 37 % 11) as f32) - 5.0).collect();
        let b: Vec<f32> = (0..77).map(|i| ((i * 13 % 7) as f32) * 0.5).collect();
        let energy = |s: &[f32]| s.iter().map(|&v| (v as f64).powi(2)).sum::<f64>();
        let want = (energy(&a) + energy(&b)) / 2.0;
        for bin in [None, Some(30.0), Some(1000.0)] {
            let sp = spectrum_of(&[&a, &b], 1000.0, bin).unwrap();
            assert!((sp.energy() - want).abs() / want < 1e-9, "{bin:?}");
        }
    }

    #[test]
    fn rejects_bad_input() {
        assert!(spectrum_of(&[], 1.0, None).is_err());
        assert!(spectrum_of(&[&[1.0f32]], 1.0, Some(0.0)).is_err());
    }
}
