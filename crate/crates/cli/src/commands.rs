//! The five subcommands. Each writes its files under the output directory
//! and returns what it wrote for the caller to summarize.

use std::cmp::Ordering;
use std::path::{Path, PathBuf};

use muxclock_core::aes::{to_hex, Block};
use muxclock_core::attack::preprocess::max_delay_samples;
use muxclock_core::attack::search::{prepare, AttackReport};
use muxclock_core::attack::{cpa_attack, fft_spectrum, min_traces_search, AttackParams, CpaResult};
use muxclock_core::clock::{
    edge_count_distribution, extract_periods, overhead_and_error_with, period_histogram,
    reference_bin_width, simulate_mux_clock, source_edge_probabilities, FrequencySet,
    OverheadReport,
};
use muxclock_core::format::{from_bytes, to_bytes};
use muxclock_core::rng::derive_seed;
use muxclock_core::synth::{generate_dual_set, generate_set, PlaintextMode, TraceSet};
use serde::Serialize;

use crate::config::{sha256_hex, ExperimentConfig};
use crate::output::{csv_field, slug, write, Header};
use crate::CliError;

const STREAM_SIMULATE: u64 = 0x51;
const STREAM_OVERHEAD: u64 = 0x52;
const STREAM_GEN: u64 = 0x53;
const ROUNDS: usize = 10;
const TOP_PEAKS: usize = 10;

/// Command-line values that override the configuration file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub step: Option<usize>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut ExperimentConfig) -> Result<(), CliError> {
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(o) = &self.out {
            cfg.out = o.clone();
        }
        if let Some(s) = self.step {
            cfg.attack.step = Some(s);
        }
        cfg.validate().map_err(CliError::Usage)
    }
}

fn require_sets(cfg: &ExperimentConfig, at_least: usize) -> Result<Vec<FrequencySet>, CliError> {
    let sets = cfg.frequency_sets();
    if sets.len() < at_least {
        return Err(CliError::Usage(format!(
            "need at least {at_least} frequency set(s), config lists {}",
            sets.len()
        )));
    }
    Ok(sets)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulateRow {
    pub label: String,
    pub n_edges: usize,
    pub unique_periods: usize,
    pub edge_probabilities: [f64; 4],
    /// Expected number of sources rising per base cycle.
    pub mean_rising_sources: f64,
    pub mean_overhead: f64,
    pub worst_overhead: f64,
    pub max_delay_s: f64,
    pub error_risk: f64,
    pub histogram_file: String,
}

fn overhead(cfg: &ExperimentConfig, fs: &FrequencySet, s: usize) -> Result<OverheadReport, CliError> {
    Ok(overhead_and_error_with(
        fs,
        ROUNDS,
        cfg.overhead_encryptions,
        derive_seed(cfg.seed, STREAM_OVERHEAD, s as u64),
        cfg.trace.error_fraction,
    )?)
}

fn simulate_one(cfg: &ExperimentConfig, fs: &FrequencySet, s: usize) -> Result<(SimulateRow, String), CliError> {
    let w = simulate_mux_clock(fs, cfg.n_base_cycles, derive_seed(cfg.seed, STREAM_SIMULATE, s as u64))?;
    let periods = extract_periods(&w).unwrap_or_default();
    let hist = period_histogram(&periods, reference_bin_width(fs))?;
    let p = source_edge_probabilities(fs);
    let dist = edge_count_distribution(p)?;
    let oh = overhead(cfg, fs, s)?;
    let row = SimulateRow {
        label: fs.label.clone(),
        n_edges: w.edges.len(),
        unique_periods: hist.unique_bins,
        edge_probabilities: p,
        mean_rising_sources: dist.mean(),
        mean_overhead: oh.mean_overhead,
        worst_overhead: oh.worst_overhead,
        max_delay_s: oh.max_delay_s,
        error_risk: oh.error_risk,
        histogram_file: format!("{:02}-{}_periods.csv", s, slug(&fs.label)),
    };
    Ok((row, hist.to_csv()))
}

/// Clock statistics, period histograms and overheads for every set.
pub fn simulate(cfg: &ExperimentConfig) -> Result<Vec<SimulateRow>, CliError> {
    let sets = require_sets(cfg, 1)?;
    let header = Header::new(cfg.digest(), cfg.seed);
    let mut rows = Vec::new();
    for (s, fs) in sets.iter().enumerate() {
        let (row, hist) = simulate_one(cfg, fs, s)?;
        write(&cfg.out, &row.histogram_file, &header.csv(&hist))?;
        rows.push(row);
    }
    let mut csv = String::from(
        "label,n_edges,unique_periods,p1,p2,p3,p4,mean_rising_sources,mean_overhead,worst_overhead,max_delay_s,error_risk\n",
    );
    for r in &rows {
        let [p1, p2, p3, p4] = r.edge_probabilities;
        csv.push_str(&format!(
            "{},{},{},{p1:.6},{p2:.6},{p3:.6},{p4:.6},{:.6},{:.6},{:.6},{:.6e},{:.6}\n",
            csv_field(&r.label),
            r.n_edges,
            r.unique_periods,
            r.mean_rising_sources,
            r.mean_overhead,
            r.worst_overhead,
            r.max_delay_s,
            r.error_risk
        ));
    }
    write(&cfg.out, "simulate.csv", &header.csv(&csv))?;
    write(&cfg.out, "simulate.json", &header.json(serde_json::json!({ "sets": rows })))?;
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GenEntry {
    pub label: String,
    pub file: String,
    pub n_traces: usize,
    pub core_count: u8,
    pub failed_fraction: f64,
    pub sha256: String,
}

fn generate(cfg: &ExperimentConfig, fs: &FrequencySet, s: usize) -> Result<TraceSet, CliError> {
    let seed = derive_seed(cfg.seed, STREAM_GEN, s as u64);
    let key = cfg.key_block();
    let ts = match cfg.key2_block().filter(|_| cfg.core_count == 2) {
        Some(key2) => generate_dual_set(
            fs,
            &cfg.second_core(fs),
            &key,
            &key2,
            cfg.n_traces,
            PlaintextMode::Random,
            &cfg.trace,
            seed,
        )?,
        None => generate_set(fs, &key, cfg.n_traces, PlaintextMode::Random, &cfg.trace, seed)?,
    };
    Ok(ts)
}

/// One trace file per set.
pub fn gen(cfg: &ExperimentConfig) -> Result<Vec<GenEntry>, CliError> {
    let sets = require_sets(cfg, 1)?;
    let header = Header::new(cfg.digest(), cfg.seed);
    let mut entries = Vec::new();
    for (s, fs) in sets.iter().enumerate() {
        let ts = generate(cfg, fs, s)?;
        let bytes = to_bytes(&ts)?;
        let file = format!("{:02}-{}.trc", s, slug(&fs.label));
        std::fs::create_dir_all(&cfg.out)
            .map_err(|e| CliError::Data(format!("cannot create {}: {e}", cfg.out.display())))?;
        let path = cfg.out.join(&file);
        std::fs::write(&path, &bytes)
            .map_err(|e| CliError::Data(format!("cannot write {}: {e}", path.display())))?;
        entries.push(GenEntry {
            label: fs.label.clone(),
            file,
            n_traces: ts.len(),
            core_count: ts.core_count(),
            failed_fraction: ts.failed_fraction(),
            sha256: sha256_hex(&bytes),
        });
    }
    write(&cfg.out, "gen.json", &header.json(serde_json::json!({ "files": entries })))?;
    Ok(entries)
}

#[derive(Debug, Clone, Default)]
pub struct AttackOptions {
    /// True key; enables ranks and the minimum-trace search.
    pub evaluate: Option<Block>,
    pub no_sync: bool,
    pub step: Option<usize>,
    pub out: Option<PathBuf>,
    /// Thresholds from a config file; otherwise derived from the trace file.
    pub config: Option<ExperimentConfig>,
}

#[derive(Debug, Clone, Serialize)]
pub struct AttackOutcome {
    pub report: AttackReport,
    pub cpa: CpaResult,
    #[serde(skip)]
    pub files: Vec<PathBuf>,
}

pub fn read_input(path: &Path) -> Result<(TraceSet, String), CliError> {
    let bytes = std::fs::read(path)
        .map_err(|e| CliError::Data(format!("cannot read {}: {e}", path.display())))?;
    let ts = from_bytes(&bytes).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    Ok((ts, sha256_hex(&bytes)))
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "traces".into())
}

fn attack_params(ts: &TraceSet, opts: &AttackOptions) -> Result<AttackParams, CliError> {
    let mut p = match &opts.config {
        Some(c) => c.attack.params(ts.config.oversampling),
        None => AttackParams::for_oversampling(ts.config.oversampling),
    };
    if let Some(s) = opts.step {
        if s == 0 {
            return Err(CliError::Usage("--step must be at least 1".into()));
        }
        p.step = s;
    }
    p.no_sync = opts.no_sync;
    Ok(p)
}

/// Report for a run without a known key: a single attack on every kept
/// trace, no trace-count search.
fn unevaluated_report(ts: &TraceSet, params: &AttackParams) -> Result<(AttackReport, CpaResult), CliError> {
    let prep = prepare(ts, params);
    if prep.matrix.n_rows() < 2 {
        return Err(CliError::Data("fewer than 2 traces survived preprocessing".into()));
    }
    let cpa = cpa_attack(&prep.matrix, prep.window, None)?;
    let total = prep.total as f64;
    let delay = if params.no_sync {
        0
    } else {
        max_delay_samples(&prep.matrix, params.sync.round, ts.config.oversampling)
    };
    let report = AttackReport {
        min_traces: None,
        n_traces: prep.total,
        kept_traces: prep.matrix.n_rows(),
        removed_fraction: prep.removal.removed() as f64 / total,
        failed_fraction: prep.removal.failed as f64 / total,
        removal: prep.removal,
        max_delay_samples: delay,
        max_delay_s: delay as f64 * ts.sample_period_s(),
        step: params.step,
        synchronized: !params.no_sync,
        window: prep.window,
        notes: vec!["no key given; minimum trace count not evaluated".into()],
    };
    Ok((report, cpa))
}

pub fn attack_set(ts: &TraceSet, key: Option<&Block>, params: &AttackParams) -> Result<(AttackReport, CpaResult), CliError> {
    match key {
        Some(k) => {
            let report = min_traces_search(ts, k, params)?;
            let prep = prepare(ts, params);
            if prep.matrix.n_rows() < 2 {
                return Err(CliError::Data("fewer than 2 traces survived preprocessing".into()));
            }
            let cpa = cpa_attack(&prep.matrix, prep.window, Some(k))?;
            Ok((report, cpa))
        }
        None => unevaluated_report(ts, params),
    }
}

/// Filter, align, attack and search for the minimum trace count.
pub fn attack(path: &Path, opts: &AttackOptions) -> Result<AttackOutcome, CliError> {
    let (ts, input_digest) = read_input(path)?;
    let params = attack_params(&ts, opts)?;
    let (report, cpa) = attack_set(&ts, opts.evaluate.as_ref(), &params)?;
    let settings = serde_json::json!({
        "attack": params,
        "evaluate": opts.evaluate.map(|k| to_hex(&k)),
    });
    let mut header = Header::new(sha256_hex(settings.to_string().as_bytes()), ts.seed);
    header.input_sha256 = Some(input_digest);
    let dir = out_dir(opts.out.as_deref(), opts.config.as_ref());
    let name = stem(path);
    let mut outcome = AttackOutcome {
        report,
        cpa,
        files: Vec::new(),
    };
    outcome.files.push(write(&dir, &format!("{name}_attack.json"), &header.json(&outcome))?);
    outcome.files.push(write(&dir, &format!("{name}_attack.csv"), &header.csv(&outcome.report.to_csv()))?);
    outcome.files.push(write(&dir, &format!("{name}_cpa.csv"), &header.csv(&outcome.cpa.to_csv()))?);
    Ok(outcome)
}

fn out_dir(out: Option<&Path>, cfg: Option<&ExperimentConfig>) -> PathBuf {
    out.map(Path::to_path_buf)
        .or_else(|| cfg.map(|c| c.out.clone()))
        .unwrap_or_else(|| PathBuf::from("out"))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectrumPeak {
    pub bin_low_hz: f64,
    pub magnitude: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectrumSummary {
    pub bin_hz: f64,
    pub sample_rate_hz: f64,
    pub fft_len: usize,
    pub n_traces: usize,
    pub core_count: u8,
    pub dominant_hz: Option<f64>,
    pub top_peaks: Vec<SpectrumPeak>,
    #[serde(skip)]
    pub files: Vec<PathBuf>,
}

/// Averaged magnitude spectrum of a trace file.
pub fn fft(path: &Path, bin_hz: Option<f64>, out: Option<&Path>) -> Result<SpectrumSummary, CliError> {
    if let Some(b) = bin_hz {
        if !(b > 0.0 && b.is_finite()) {
            return Err(CliError::Usage(format!("--bin must be a positive frequency, got {b}")));
        }
    }
    let (ts, input_digest) = read_input(path)?;
    let sp = fft_spectrum(&ts, bin_hz)?;
    let mut header = Header::new(
        sha256_hex(serde_json::json!({ "bin_hz": bin_hz }).to_string().as_bytes()),
        ts.seed,
    );
    header.input_sha256 = Some(input_digest);
    let mut summary = SpectrumSummary {
        bin_hz: sp.bin_hz,
        sample_rate_hz: sp.sample_rate_hz,
        fft_len: sp.fft_len,
        n_traces: sp.n_traces,
        core_count: ts.core_count(),
        dominant_hz: sp.dominant_bin().map(|k| sp.bin_low_hz(k)),
        top_peaks: sp
            .top_peaks(TOP_PEAKS)
            .into_iter()
            .map(|k| SpectrumPeak {
                bin_low_hz: sp.bin_low_hz(k),
                magnitude: sp.magnitudes[k],
            })
            .collect(),
        files: Vec::new(),
    };
    let dir = out_dir(out, None);
    let name = stem(path);
    summary.files.push(write(&dir, &format!("{name}_spectrum.csv"), &header.csv(&sp.to_csv()))?);
    summary.files.push(write(&dir, &format!("{name}_spectrum.json"), &header.json(&summary))?);
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompareRow {
    pub label: String,
    /// `None` when the key was not broken at this trace count.
    pub min_traces: Option<usize>,
    pub n_traces: usize,
    pub kept_traces: usize,
    pub removed_fraction: f64,
    pub failed_fraction: f64,
    pub max_delay_samples: usize,
    pub mean_overhead: f64,
    pub worst_overhead: f64,
    pub error_risk: f64,
    pub n_edges: usize,
    pub unique_periods: usize,
}

/// Strongest first: more traces needed (unbroken counts as most), then
/// lower mean overhead, then label.
pub fn rank_order(a: &CompareRow, b: &CompareRow) -> Ordering {
    let need = |r: &CompareRow| r.min_traces.unwrap_or(usize::MAX);
    need(b)
        .cmp(&need(a))
        .then(a.mean_overhead.total_cmp(&b.mean_overhead))
        .then_with(|| a.label.cmp(&b.label))
}

/// Simulates, generates and attacks every set, then ranks them.
pub fn compare(cfg: &ExperimentConfig) -> Result<Vec<CompareRow>, CliError> {
    let sets = require_sets(cfg, 2)?;
    let header = Header::new(cfg.digest(), cfg.seed);
    let params = cfg.attack_params();
    let key = cfg.key_block();
    let mut rows = Vec::new();
    for (s, fs) in sets.iter().enumerate() {
        let (sim, _) = simulate_one(cfg, fs, s)?;
        let ts = generate(cfg, fs, s)?;
        let report = min_traces_search(&ts, &key, &params)?;
        rows.push(CompareRow {
            label: fs.label.clone(),
            min_traces: report.min_traces,
            n_traces: report.n_traces,
            kept_traces: report.kept_traces,
            removed_fraction: report.removed_fraction,
            failed_fraction: report.failed_fraction,
            max_delay_samples: report.max_delay_samples,
            mean_overhead: sim.mean_overhead,
            worst_overhead: sim.worst_overhead,
            error_risk: sim.error_risk,
            n_edges: sim.n_edges,
            unique_periods: sim.unique_periods,
        });
    }
    rows.sort_by(rank_order);
    write(&cfg.out, "compare.csv", &header.csv(&compare_csv(&rows)))?;
    write(&cfg.out, "compare.json", &header.json(serde_json::json!({ "ranking": rows })))?;
    Ok(rows)
}

pub fn compare_csv(rows: &[CompareRow]) -> String {
    let mut csv = String::from(
        "rank,label,min_traces,n_traces,kept_traces,removed_fraction,failed_fraction,max_delay_samples,mean_overhead,worst_overhead,error_risk,n_edges,unique_periods\n",
    );
    for (i, r) in rows.iter().enumerate() {
        csv.push_str(&format!(
            "{},{},{},{},{},{:.6},{:.6},{},{:.6},{:.6},{:.6},{},{}\n",
            i + 1,
            csv_field(&r.label),
            r.min_traces.map_or("not broken".to_string(), |n| n.to_string()),
            r.n_traces,
            r.kept_traces,
            r.removed_fraction,
            r.failed_fraction,
            r.max_delay_samples,
            r.mean_overhead,
            r.worst_overhead,
            r.error_risk,
            r.n_edges,
            r.unique_periods
        ));
    }
    csv
}
