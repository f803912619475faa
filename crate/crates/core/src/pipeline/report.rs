use std::collections::BTreeMap;
use std::fs;

use serde::{Deserialize, Serialize};

use super::workspace::{Workspace, STAGES};
use super::{PipelineError, RunConfig};

pub const REPORT_SCHEMA: u32 = 1;

/// Outcome of one stage in one invocation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageStatus {
    pub stage: String,
    /// False when the stage was up to date and skipped.
    pub ran: bool,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageEntry {
    pub stage: String,
    pub config_hash: String,
    pub summary: serde_json::Value,
}

/// `report.json`: the summaries of every completed stage, in pipeline
/// order. Holds no timings or absolute paths, so identical runs produce
/// identical bytes; timings go to `timings.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub config_hash: String,
    pub seed: u64,
    pub stages: Vec<StageEntry>,
}

impl RunReport {
    pub fn summary(&self, stage: &str) -> Option<&serde_json::Value> {
        self.stages.iter().find(|s| s.stage == stage).map(|s| &s.summary)
    }
}

/// Rebuilds `report.json` from the stage manifests and writes the timings
/// of this invocation to `timings.json`.
pub fn write_report(ws: &Workspace, cfg: &RunConfig, statuses: &[StageStatus]) -> Result<RunReport, PipelineError> {
    let stages = STAGES
        .iter()
        .filter_map(|(stage, _)| ws.read_manifest(stage))
        .map(|m| StageEntry {
            stage: m.stage,
            config_hash: m.config_hash,
            summary: m.summary,
        })
        .collect();
    let report = RunReport {
        schema_version: REPORT_SCHEMA,
        config_hash: cfg.hash(),
        seed: cfg.seed,
        stages,
    };
    let p = ws.path("report.json");
    let text = serde_json::to_string_pretty(&report).expect("report serializes");
    fs::write(&p, text + "\n").map_err(|e| PipelineError::io(&p, e))?;

    let timings: BTreeMap<&str, &StageStatus> = statuses.iter().map(|s| (s.stage.as_str(), s)).collect();
    let p = ws.path("timings.json");
    let text = serde_json::to_string_pretty(&timings).expect("timings serialize");
    fs::write(&p, text + "\n").map_err(|e| PipelineError::io(&p, e))?;
    Ok(report)
}
