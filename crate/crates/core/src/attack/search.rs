//! Minimum number of traces needed to break the key.

use serde::{Deserialize, Serialize};

use super::cpa::breaks_key;
use super::preprocess::{
    filter_traces, max_delay_samples, synchronize, unaligned, AlignedMatrix, FilterParams,
    RemovalCounts, SyncParams,
};
use crate::aes::Block;
use crate::error::{Error, Result};
use crate::synth::TraceSet;

pub const DEFAULT_STEP: usize = 250;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttackParams {
    pub filter: FilterParams,
    pub sync: SyncParams,
    /// Columns on each side of the anchor included in the CPA window.
    pub half_window: usize,
    /// Grid resolution of the trace count.
    pub step: usize,
    /// Skip peak alignment and correlate over the whole capture.
    pub no_sync: bool,
}

impl AttackParams {
    pub fn for_oversampling(oversampling: u32) -> Self {
        AttackParams {
            filter: FilterParams::for_oversampling(oversampling),
            sync: SyncParams::for_oversampling(oversampling),
            half_window: 1,
            step: DEFAULT_STEP,
            no_sync: false,
        }
    }
}

impl Default for AttackParams {
    fn default() -> Self {
        Self::for_oversampling(8)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AttackReport {
    /// `None` when no segment of any size on the grid broke the key.
    pub min_traces: Option<usize>,
    pub n_traces: usize,
    pub kept_traces: usize,
    pub removed_fraction: f64,
    pub failed_fraction: f64,
    pub removal: RemovalCounts,
    pub max_delay_samples: usize,
    pub max_delay_s: f64,
    pub step: usize,
    pub synchronized: bool,
    pub window: (usize, usize),
    pub notes: Vec<String>,
}

impl AttackReport {
    pub fn broken(&self) -> bool {
        self.min_traces.is_some()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain data serializes")
    }

    pub fn to_csv(&self) -> String {
        let mt = self
            .min_traces
            .map_or_else(|| "not broken".to_string(), |n| n.to_string());
        format!(
            "min_traces,n_traces,kept_traces,failed_fraction,removed_fraction,max_delay_samples,max_delay_s,synchronized\n\
             {mt},{},{},{:.6},{:.6},{},{:.6e},{}\n",
            self.n_traces,
            self.kept_traces,
            self.failed_fraction,
            self.removed_fraction,
            self.max_delay_samples,
            self.max_delay_s,
            self.synchronized
        )
    }
}

/// Filtered and, unless `no_sync`, aligned traces ready for CPA, together
/// with the CPA window and the bookkeeping for the report.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub matrix: AlignedMatrix,
    pub window: (usize, usize),
    pub removal: RemovalCounts,
    pub total: usize,
}

pub fn prepare(ts: &TraceSet, params: &AttackParams) -> Prepared {
    if params.no_sync {
        let kept: Vec<usize> = (0..ts.len()).filter(|&i| !ts.traces[i].failed).collect();
        let removal = RemovalCounts {
            failed: ts.len() - kept.len(),
            ..RemovalCounts::default()
        };
        let matrix = unaligned(ts, &kept, params.sync.round);
        let window = (0, matrix.n_cols.saturating_sub(1));
        return Prepared {
            matrix,
            window,
            removal,
            total: ts.len(),
        };
    }
    let mut filtered = filter_traces(ts, &params.filter);
    let matrix = synchronize(ts, &mut filtered, &params.sync);
    let a = matrix.round_anchor;
    let window = (
        a.saturating_sub(params.half_window),
        (a + params.half_window).min(matrix.n_cols - 1),
    );
    Prepared {
        matrix,
        window,
        removal: filtered.counts,
        total: ts.len(),
    }
}

/// Smallest grid size N such that some contiguous, non-overlapping segment
/// of N kept traces breaks all 16 bytes.
pub fn min_traces_over(
    am: &AlignedMatrix,
    window: (usize, usize),
    true_key: &Block,
    step: usize,
) -> Result<Option<usize>> {
    if step == 0 {
        return Err(Error::InvalidArgument("step must be positive".into()));
    }
    let k = am.n_rows();
    let mut n = step;
    while n <= k {
        for s in 0..k / n {
            let seg = am.slice_rows(s * n, (s + 1) * n);
            if n >= 2 && breaks_key(&seg, window, true_key)? {
                return Ok(Some(n));
            }
        }
        n += step;
    }
    Ok(None)
}

/// Filter, synchronize and search the minimum trace count on the grid.
pub fn min_traces_search(
    ts: &TraceSet,
    true_key: &Block,
    params: &AttackParams,
) -> Result<AttackReport> {
    let prep = prepare(ts, params);
    let mut notes = Vec::new();
    let min_traces = if prep.matrix.n_rows() < 2 {
        notes.push("fewer than 2 traces survived preprocessing".to_string());
        None
    } else {
        min_traces_over(&prep.matrix, prep.window, true_key, params.step)?
    };
    if params.no_sync {
        notes.push("synchronization skipped; window spans the full capture".to_string());
    }
    let over = ts.config.oversampling;
    let delay = if params.no_sync {
        0
    } else {
        max_delay_samples(&prep.matrix, params.sync.round, over)
    };
    let total = prep.total;
    let frac = |k: usize| if total == 0 { 0.0 } else { k as f64 / total as f64 };
    Ok(AttackReport {
        min_traces,
        n_traces: total,
        kept_traces: prep.matrix.n_rows(),
        removed_fraction: frac(prep.removal.removed()),
        failed_fraction: frac(prep.removal.failed),
        removal: prep.removal,
        max_delay_samples: delay,
        max_delay_s: delay as f64 * ts.sample_period_s(),
        step: params.step,
        synchronized: !params.no_sync,
        window: prep.window,
        notes,
    })
}
