//! JSON run manifests and reports.

use std::collections::BTreeSet;
use std::path::Path;

use dpfe_core::metrics::{BoundEstimates, PrivacyReport};
use dpfe_core::pipeline::EpochTrace;
use dpfe_core::Warning;
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::{write_text, Result};

#[derive(Debug, Clone, Serialize)]
pub struct Seeds {
    pub base: u64,
    pub data: u64,
    pub split: u64,
    pub train: u64,
    pub sweep: u64,
}

impl Seeds {
    pub fn of(config: &RunConfig) -> Self {
        Seeds {
            base: config.seed,
            data: config.seed,
            split: config.seed,
            train: config.train.seed,
            sweep: config.sweep.seed,
        }
    }
}

/// Written by every command: the fully resolved configuration and the files
/// it read and wrote.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest<'a> {
    pub command: &'a str,
    pub version: &'a str,
    pub config: &'a RunConfig,
    pub seeds: Seeds,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct EvalReport {
    pub accuracy: f64,
    pub privacy: PrivacyReport,
    pub bounds: Option<BoundEstimates>,
}

#[derive(Debug, Clone, Serialize)]
pub struct StageReport {
    pub stage: String,
    pub trace: Vec<EpochTrace>,
    pub test: Option<EvalReport>,
    pub warnings: Vec<String>,
}

/// Distinct warning messages in sorted order, with probability clamps
/// from every step folded into one total.
pub fn summarize_warnings(warnings: &[Warning]) -> Vec<String> {
    let clamped: usize = warnings
        .iter()
        .map(|w| match w {
            Warning::ProbabilityClamped { count } => *count,
            _ => 0,
        })
        .sum();
    let mut out: BTreeSet<String> = warnings
        .iter()
        .filter(|w| !matches!(w, Warning::ProbabilityClamped { .. }))
        .map(ToString::to_string)
        .collect();
    if clamped > 0 {
        out.insert(Warning::ProbabilityClamped { count: clamped }.to_string());
    }
    out.into_iter().collect()
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("report serializes");
    text.push('\n');
    write_text(path, &text)
}
