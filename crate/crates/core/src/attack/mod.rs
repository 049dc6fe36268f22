//! Attack side: trace filtering and alignment, last-round CPA, the
//! minimum-traces search, spectra, and the duplicated-core bounds.

pub mod cpa;
pub mod duplication;
pub mod peaks;
pub mod preprocess;
pub mod search;
pub mod spectrum;

pub use cpa::{cpa_attack, pearson, CpaResult};
pub use duplication::{overlap_exploit, peak_permutation_bound, OverlapParams, OverlapReport};
pub use peaks::{detect_peaks, PeakParams};
pub use preprocess::{filter_traces, synchronize, AlignedMatrix, FilterParams, Filtered, SyncParams};
pub use search::{min_traces_search, AttackParams, AttackReport};
pub use spectrum::{fft_spectrum, SpectrumHistogram};
