//! Report files. Every file starts with a header naming the tool version,
//! the configuration digest and the seed; CSV files carry it as `#` lines.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;

use crate::CliError;

pub const TOOL: &str = "muxclock";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Header {
    pub tool: &'static str,
    pub version: &'static str,
    pub config_sha256: String,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub input_sha256: Option<String>,
}

impl Header {
    pub fn new(config_sha256: String, seed: u64) -> Self {
        Header {
            tool: TOOL,
            version: VERSION,
            config_sha256,
            seed,
            input_sha256: None,
        }
    }

    pub fn csv(&self, body: &str) -> String {
        let mut out = format!(
            "# tool: {} {}\n# config_sha256: {}\n# seed: {}\n",
            self.tool, self.version, self.config_sha256, self.seed
        );
        if let Some(i) = &self.input_sha256 {
            out.push_str(&format!("# input_sha256: {i}\n"));
        }
        out.push_str(body);
        out
    }

    pub fn json(&self, body: impl Serialize) -> String {
        let mut v = serde_json::json!({ "header": self });
        let body = serde_json::to_value(body).expect("serializable report");
        match body {
            Value::Object(map) => v.as_object_mut().unwrap().extend(map),
            other => {
                v["body"] = other;
            }
        }
        let mut s = serde_json::to_string_pretty(&v).expect("serializable report");
        s.push('\n');
        s
    }
}

pub fn write(dir: &Path, name: &str, content: &str) -> Result<PathBuf, CliError> {
    fs::create_dir_all(dir)
        .map_err(|e| CliError::Data(format!("cannot create {}: {e}", dir.display())))?;
    let path = dir.join(name);
    fs::write(&path, content)
        .map_err(|e| CliError::Data(format!("cannot write {}: {e}", path.display())))?;
    Ok(path)
}

/// File-name friendly form of a set label.
pub fn slug(label: &str) -> String {
    let mut s = String::new();
    for c in label.chars() {
        if c.is_ascii_alphanumeric() {
            s.push(c.to_ascii_lowercase());
        } else if !s.ends_with('-') {
            s.push('-');
        }
    }
    let s = s.trim_matches('-').to_string();
    if s.is_empty() {
        "set".into()
    } else {
        s
    }
}

pub fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}
