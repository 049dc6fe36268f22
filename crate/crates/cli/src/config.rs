//! Experiment configuration files (TOML, unknown keys rejected).
//!
//! ```toml
//! seed = 7
//! n_base_cycles = 32000
//! n_traces = 30000
//! core_count = 1
//! key = "2b7e151628aed2a6abf7158809cf4f3c"
//! presets = true            # include the seven built-in sets
//! out = "out"
//!
//! [trace]                   # oversampling, noise_sigma, alpha, error_fraction, ...
//! noise_sigma = 2.0
//!
//! [attack]                  # k_sigma, min_separation, min_period_samples, half_window, step
//! step = 250
//!
//! [[sets]]
//! label = "custom"
//! base_hz = 10e6
//! f1 = 11e6
//! f2 = 12e6
//! f3 = 13e6
//! f4 = 4e6
//! ```

use std::path::{Path, PathBuf};

use muxclock_core::aes::{parse_hex_block, Block};
use muxclock_core::attack::search::DEFAULT_STEP;
use muxclock_core::attack::AttackParams;
use muxclock_core::clock::FrequencySet;
use muxclock_core::presets::paper_sets;
use muxclock_core::synth::TraceConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

pub const DEFAULT_KEY: &str = "2b7e151628aed2a6abf7158809cf4f3c";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_cycles")]
    pub n_base_cycles: usize,
    #[serde(default = "default_traces")]
    pub n_traces: usize,
    #[serde(default = "default_cores")]
    pub core_count: u8,
    #[serde(default = "default_key")]
    pub key: String,
    /// Key of the dummy core; required when `core_count = 2`.
    #[serde(default)]
    pub key2: Option<String>,
    /// Base clock of the dummy core. Defaults to 1.1 times the set's base.
    #[serde(default)]
    pub second_base_hz: Option<f64>,
    #[serde(default)]
    pub presets: bool,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    /// Encryptions simulated for the overhead and error-risk figures.
    #[serde(default = "default_encryptions")]
    pub overhead_encryptions: usize,
    #[serde(default)]
    pub trace: TraceConfig,
    #[serde(default)]
    pub attack: AttackSection,
    #[serde(default)]
    pub sets: Vec<FrequencySet>,
}

/// Attack thresholds. Unset values follow the oversampling.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackSection {
    pub k_sigma: Option<f64>,
    pub min_separation: Option<usize>,
    pub min_period_samples: Option<usize>,
    pub half_window: Option<usize>,
    pub step: Option<usize>,
}

fn default_cycles() -> usize {
    32_000
}
fn default_traces() -> usize {
    30_000
}
fn default_cores() -> u8 {
    1
}
fn default_key() -> String {
    DEFAULT_KEY.to_string()
}
fn default_out() -> PathBuf {
    PathBuf::from("out")
}
fn default_encryptions() -> usize {
    10_000
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 0,
            n_base_cycles: default_cycles(),
            n_traces: default_traces(),
            core_count: default_cores(),
            key: default_key(),
            key2: None,
            second_base_hz: None,
            presets: false,
            out: default_out(),
            overhead_encryptions: default_encryptions(),
            trace: TraceConfig::default(),
            attack: AttackSection::default(),
            sets: Vec::new(),
        }
    }
}

impl AttackSection {
    pub fn params(&self, oversampling: u32) -> AttackParams {
        let mut p = AttackParams::for_oversampling(oversampling);
        if let Some(k) = self.k_sigma {
            p.filter.peaks.k_sigma = k;
        }
        if let Some(s) = self.min_separation {
            p.filter.peaks.min_separation = s;
        }
        if let Some(m) = self.min_period_samples {
            p.filter.min_period_samples = m;
        }
        if let Some(h) = self.half_window {
            p.half_window = h;
        }
        p.step = self.step.unwrap_or(DEFAULT_STEP);
        p
    }


    fn validate(&self) -> Result<(), String> {
        if let Some(k) = self.k_sigma {
            if !k.is_finite() {
                return Err("attack.k_sigma must be finite".into());
            }
        }
        if self.min_separation == Some(0) {
            return Err("attack.min_separation must be at least 1".into());
        }
        if self.step == Some(0) {
            return Err("attack.step must be at least 1".into());
        }
        Ok(())
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| CliError::Usage(format!("config: {e}")))?;
        cfg.validate().map_err(|m| CliError::Usage(format!("config: {m}")))?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.n_base_cycles < 2 {
            return Err("n_base_cycles must be at least 2".into());
        }
        if self.n_traces == 0 {
            return Err("n_traces must be at least 1".into());
        }
        if self.overhead_encryptions == 0 {
            return Err("overhead_encryptions must be at least 1".into());
        }
        parse_key(&self.key, "key")?;
        match (self.core_count, &self.key2) {
            (1, _) => {}
            (2, Some(k2)) => {
                parse_key(k2, "key2")?;
            }
            (2, None) => return Err("core_count = 2 requires key2".into()),
            (n, _) => return Err(format!("core_count must be 1 or 2, got {n}")),
        }
        if let Some(b) = self.second_base_hz {
            if !(b.is_finite() && b > 0.0) {
                return Err("second_base_hz must be positive".into());
            }
        }
        self.trace.validate().map_err(|e| format!("trace: {e}"))?;
        self.attack.validate()?;
        for fs in self.frequency_sets() {
            if self.core_count == 2 && self.second_core(&fs).base_hz == fs.base_hz {
                return Err(format!("set {:?}: both cores share a base frequency", fs.label));
            }
        }
        Ok(())
    }

    /// Built-in sets (when enabled) followed by the listed ones.
    pub fn frequency_sets(&self) -> Vec<FrequencySet> {
        let mut all = if self.presets { paper_sets() } else { Vec::new() };
        all.extend(self.sets.iter().cloned());
        all
    }

    pub fn key_block(&self) -> Block {
        parse_key(&self.key, "key").expect("validated")
    }

    pub fn key2_block(&self) -> Option<Block> {
        self.key2.as_deref().map(|k| parse_key(k, "key2").expect("validated"))
    }

    /// Clock of the dummy core paired with `fs`.
    pub fn second_core(&self, fs: &FrequencySet) -> FrequencySet {
        FrequencySet {
            label: format!("{} (second core)", fs.label),
            base_hz: self.second_base_hz.unwrap_or(fs.base_hz * 1.1),
            fundamentals: fs.fundamentals,
            duty_cycle: fs.duty_cycle,
        }
    }

    pub fn attack_params(&self) -> AttackParams {
        self.attack.params(self.trace.oversampling)
    }

    /// SHA-256 of the resolved configuration, output directory excluded.
    pub fn digest(&self) -> String {
        let mut v = serde_json::to_value(self).expect("serializable");
        v.as_object_mut().expect("struct").remove("out");
        sha256_hex(v.to_string().as_bytes())
    }
}

pub fn parse_key(text: &str, what: &str) -> Result<Block, String> {
    parse_hex_block(text).map_err(|e| format!("{what}: {e}"))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}
