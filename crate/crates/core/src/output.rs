//! Number formatting and provenance envelopes for files written by the tools.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Full-precision scientific notation (17 significant digits), stable across runs.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Description of the run that produced a file: the tool version plus the
/// complete configuration, with no timestamps or host information.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool: String,
    pub version: String,
    pub config: serde_json::Value,
}

impl Provenance {
    pub fn new(config: serde_json::Value) -> Self {
        Self { tool: "subdiff".into(), version: env!("CARGO_PKG_VERSION").into(), config }
    }

    /// `# `-prefixed header lines for CSV outputs.
    pub fn csv_comment(&self) -> String {
        let body = serde_json::to_string(self).expect("provenance serializes");
        format!("# {} {}\n# provenance: {body}\n", self.tool, self.version)
    }
}

/// Versioned JSON document: `{"format": ..., "provenance": ..., "data": ...}`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Envelope<T> {
    pub format: String,
    pub provenance: Option<Provenance>,
    pub data: T,
}

impl<T: Serialize> Envelope<T> {
    pub fn new(kind: &str, provenance: Option<Provenance>, data: T) -> Self {
        Self { format: format_tag(kind), provenance, data }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

pub fn format_tag(kind: &str) -> String {
    format!("subdiff/{kind}/v1")
}

/// Parses an envelope and checks its format tag.
pub fn read_envelope<T: for<'de> Deserialize<'de>>(text: &str, kind: &str) -> Result<Envelope<T>> {
    let env: Envelope<T> = serde_json::from_str(text)?;
    let want = format_tag(kind);
    if env.format != want {
        return Err(Error::data(format!("expected a '{want}' document, found '{}'", env.format)));
    }
    Ok(env)
}
