//! Run records: what ran, what it measured, what it wrote.

use crate::config::RunConfig;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Outcome of an acceptance criterion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    /// Evaluated and met.
    Pass,
    /// Evaluated and not met.
    Fail,
    /// Not evaluated by this pipeline.
    Skip,
}

impl Status {
    /// Upper-case label.
    pub fn label(self) -> &'static str {
        match self {
            Status::Pass => "PASS",
            Status::Fail => "FAIL",
            Status::Skip => "SKIP",
        }
    }
}

/// One acceptance criterion's verdict with its measurements.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionOutcome {
    /// `AC1` to `AC8`.
    pub id: String,
    /// Verdict.
    pub status: Status,
    /// Named measured quantities.
    pub measured: BTreeMap<String, f64>,
    /// Human-readable summary of the limits and of any failure.
    pub detail: String,
    /// Wall-clock seconds.
    pub seconds: f64,
}

impl CriterionOutcome {
    /// A criterion not evaluated by the current pipeline.
    pub fn skipped(id: &str) -> Self {
        CriterionOutcome {
            id: id.to_string(),
            status: Status::Skip,
            measured: BTreeMap::new(),
            detail: "not evaluated by this pipeline".into(),
            seconds: 0.0,
        }
    }

    /// One-line summary.
    pub fn line(&self) -> String {
        format!("{} {} ({:.1} s): {}", self.id, self.status.label(), self.seconds, self.detail)
    }
}

/// Measurements of one pipeline stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    /// Stage name.
    pub name: String,
    /// Named residuals and diagnostics.
    pub residuals: BTreeMap<String, f64>,
    /// Hard invariants of the stage held.
    pub ok: bool,
    /// Wall-clock seconds.
    pub seconds: f64,
}

/// Everything a run did.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    /// The configuration, after overrides.
    pub config: RunConfig,
    /// Name of the seeded generator.
    pub generator: String,
    /// Stages in execution order.
    pub stages: Vec<StageRecord>,
    /// Every acceptance criterion, evaluated or skipped.
    pub acceptance: Vec<CriterionOutcome>,
    /// Files written, relative to the output directory.
    pub artifacts: Vec<String>,
}

/// Identifiers of the acceptance criteria.
pub const CRITERIA: [&str; 8] = ["AC1", "AC2", "AC3", "AC4", "AC5", "AC6", "AC7", "AC8"];

impl RunRecord {
    /// An empty record with every criterion skipped.
    pub fn new(config: RunConfig) -> Self {
        RunRecord {
            config,
            generator: "ChaCha8".into(),
            stages: Vec::new(),
            acceptance: CRITERIA.iter().map(|id| CriterionOutcome::skipped(id)).collect(),
            artifacts: Vec::new(),
        }
    }

    /// Stores a criterion outcome in place of its entry.
    pub fn set_criterion(&mut self, outcome: CriterionOutcome) {
        if let Some(slot) = self.acceptance.iter_mut().find(|c| c.id == outcome.id) {
            *slot = outcome;
        }
    }

    /// True if any stage invariant or evaluated criterion failed.
    pub fn failed(&self) -> bool {
        self.stages.iter().any(|s| !s.ok) || self.acceptance.iter().any(|c| c.status == Status::Fail)
    }
}
