//! End-to-end run: extraction, condition grouping, then one optimization
//! per concurrent condition group. Also hosts the what-if analyses that
//! re-solve a finished run under modified inputs.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{build_gateway, RunConfig};
use crate::domain::{
    AsrRecord, ConcurrentConditionGroup, ConditionGroup, DecisionChange, DecisionMatrix,
    DecisionSet, QaCatalog, QaWeights, QualityAttribute, Requirement, ScoreReport,
};
use crate::error::Error;
use crate::extraction::{extract_asrs, ExtractionBatch, ExtractionConfig};
use crate::gateway::{Gateway, GatewayStats};
use crate::grouping::{
    compute_qa_weights, form_ccgs, group_conditions, ClusteringConfig, ConditionCluster,
};
use crate::io::{load_matrix, load_requirements, read_text};
use crate::optimizer::{
    score, solve, trace, OptimizationProblem, OptimizerError, TieBreak, TraceabilityReport,
};
use crate::report;
use crate::sensitivity::{
    air_set_histogram, find_air_sets, AirScan, RemovalOrder, SensitivityError,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Step {
    Extraction,
    ConditionGrouping,
    ConcurrentGroups,
    Optimization,
}

impl std::fmt::Display for Step {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Step::Extraction => "ASR extraction",
            Step::ConditionGrouping => "condition grouping",
            Step::ConcurrentGroups => "concurrent condition groups",
            Step::Optimization => "optimization",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FailedAt {
    pub step: Step,
    pub message: String,
}

/// Weights, decisions, scores and traceability for one CCG.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CcgResult {
    pub ccg: ConcurrentConditionGroup,
    pub weights: QaWeights,
    pub decisions: DecisionSet,
    pub scores: ScoreReport,
    pub trace: TraceabilityReport,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PipelineResult {
    pub extraction: Option<ExtractionBatch>,
    pub clusters: Vec<ConditionCluster>,
    pub cgs: Vec<ConditionGroup>,
    pub ccgs: Vec<ConcurrentConditionGroup>,
    pub matrix: DecisionMatrix,
    pub tie_break: TieBreak,
    pub results: Vec<CcgResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failed_at: Option<FailedAt>,
    /// Call counts of the run that produced this result. Kept out of the
    /// result file so reruns from a warm cache produce identical bytes.
    #[serde(skip)]
    pub gateway_stats: GatewayStats,
}

impl PipelineResult {
    fn empty(matrix: &DecisionMatrix, tie_break: TieBreak) -> Self {
        PipelineResult {
            extraction: None,
            clusters: Vec::new(),
            cgs: Vec::new(),
            ccgs: Vec::new(),
            matrix: matrix.clone(),
            tie_break,
            results: Vec::new(),
            failed_at: None,
            gateway_stats: GatewayStats::default(),
        }
    }

    pub fn records(&self) -> &[AsrRecord] {
        self.extraction
            .as_ref()
            .map(|e| e.records.as_slice())
            .unwrap_or_default()
    }

    pub fn ccg_result(&self, ccg_id: usize) -> Option<&CcgResult> {
        self.results.iter().find(|r| r.ccg.ccg_id == ccg_id)
    }

    /// The catalog the run used, rebuilt from the definitions it recorded.
    pub fn catalog(&self) -> QaCatalog {
        let mut catalog = QaCatalog::default();
        if let Some(extraction) = &self.extraction {
            for def in &extraction.qa_catalog {
                catalog.extend_with(def.clone());
            }
        }
        catalog
    }

    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("result serializes");
        text.push('\n');
        text
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

/// A run that stopped part-way, with everything computed before the
/// failing step.
#[derive(Debug, Error)]
#[error("{step} failed: {source}")]
pub struct PipelineFailure {
    pub step: Step,
    pub partial: PipelineResult,
    #[source]
    pub source: Error,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PipelineOptions {
    pub extraction: ExtractionConfig,
    pub clustering: ClusteringConfig,
    pub tie_break: TieBreak,
}

impl From<&RunConfig> for PipelineOptions {
    fn from(config: &RunConfig) -> Self {
        PipelineOptions {
            extraction: config.extraction.clone(),
            clustering: config.clustering.clone(),
            tie_break: config.optimizer.tie_break,
        }
    }
}

/// Weights, decisions, scores and trace for `ccg`. Every matrix column gets
/// a weight entry, zero when no in-scope ASR implies it.
pub fn solve_ccg(
    ccg: &ConcurrentConditionGroup,
    cgs: &[ConditionGroup],
    records: &[AsrRecord],
    matrix: &DecisionMatrix,
    catalog: &QaCatalog,
) -> Result<CcgResult, OptimizerError> {
    let weights = compute_qa_weights(ccg, cgs, records, catalog);
    let problem = OptimizationProblem::new(matrix.clone(), weights);
    let decisions = solve(&problem)?;
    let scores = score(matrix, &decisions, &problem.weights)?;
    let trace = trace(matrix, &decisions, &problem.weights, records, ccg, cgs);
    Ok(CcgResult {
        ccg: ccg.clone(),
        weights: problem.weights,
        decisions,
        scores,
        trace,
    })
}

pub fn run_pipeline_with(
    requirements: &[Requirement],
    matrix: &DecisionMatrix,
    catalog: &QaCatalog,
    gateway: &Gateway,
    options: &PipelineOptions,
) -> Result<PipelineResult, Box<PipelineFailure>> {
    let mut result = PipelineResult::empty(matrix, options.tie_break);
    let fail = |step, mut partial: PipelineResult, source: Error| {
        partial.failed_at = Some(FailedAt {
            step,
            message: source.to_string(),
        });
        partial.gateway_stats = gateway.stats();
        Box::new(PipelineFailure {
            step,
            partial,
            source,
        })
    };

    log::info!("extracting ASRs from {} requirements", requirements.len());
    let batch = match extract_asrs(requirements, catalog, gateway, &options.extraction) {
        Ok(b) => b,
        Err(e) => return Err(fail(Step::Extraction, result, e.into())),
    };
    log::info!("{} ASRs found", batch.asrs().count());
    result.extraction = Some(batch);

    let grouping = match group_conditions(result.records(), gateway, &options.clustering) {
        Ok(g) => g,
        Err(e) => return Err(fail(Step::ConditionGrouping, result, e.into())),
    };
    log::info!(
        "{} condition groups in {} clusters",
        grouping.cgs.len(),
        grouping.clusters.len()
    );
    result.clusters = grouping.clusters;
    result.cgs = grouping.cgs;

    result.ccgs = match form_ccgs(&result.cgs, gateway) {
        Ok(c) => c,
        Err(e) => return Err(fail(Step::ConcurrentGroups, result, e.into())),
    };
    log::info!("{} concurrent condition groups", result.ccgs.len());

    for ccg in &result.ccgs {
        match solve_ccg(ccg, &result.cgs, result.records(), matrix, catalog) {
            Ok(r) => result.results.push(r),
            Err(e) => return Err(fail(Step::Optimization, result, e.into())),
        }
    }
    result.gateway_stats = gateway.stats();
    Ok(result)
}

/// Loads the configured inputs, builds the gateway and runs every step.
pub fn run_pipeline(config: &RunConfig) -> Result<PipelineResult, Error> {
    let requirements = load_requirements(config.requirements_path()?)?;
    let matrix = load_matrix(config.matrix_path()?)?;
    let gateway = build_gateway(config)?;
    run_pipeline_with(
        &requirements,
        &matrix,
        QaCatalog::builtin(),
        &gateway,
        &PipelineOptions::from(config),
    )
    .map_err(Error::Pipeline)
}

pub const RESULT_FILE: &str = "result.json";
pub const REPORT_FILE: &str = "report.txt";
pub const STATS_FILE: &str = "stats.json";

fn write_file(path: &Path, text: &str) -> Result<(), Error> {
    fs::write(path, text).map_err(|source| Error::Output {
        path: path.display().to_string(),
        source,
    })
}

/// Writes `result.json`, `report.txt` and `stats.json` into `dir`.
pub fn write_outputs(result: &PipelineResult, dir: &Path) -> Result<(), Error> {
    fs::create_dir_all(dir).map_err(|source| Error::Output {
        path: dir.display().to_string(),
        source,
    })?;
    write_file(&dir.join(RESULT_FILE), &result.to_json())?;
    write_file(&dir.join(REPORT_FILE), &report::render_report(result))?;
    let mut stats = serde_json::to_string_pretty(&result.gateway_stats).expect("stats serialize");
    stats.push('\n');
    write_file(&dir.join(STATS_FILE), &stats)
}

pub fn load_result(path: &Path) -> Result<PipelineResult, Error> {
    let text = read_text(path)?;
    PipelineResult::from_json(&text).map_err(|e| Error::Result {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum WhatIf {
    RemoveAsr { ids: Vec<String> },
    ScaleQa { qa: String, factor: f64 },
    AirScan { order: RemovalOrder },
}

impl std::fmt::Display for WhatIf {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            WhatIf::RemoveAsr { ids } => write!(f, "remove ASRs {}", ids.join(", ")),
            WhatIf::ScaleQa { qa, factor } => write!(f, "scale {qa} weight by {factor}"),
            WhatIf::AirScan { order } => write!(f, "AIR scan ({order:?} removal order)"),
        }
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum WhatIfError {
    #[error("unknown ASR id {0:?}")]
    UnknownAsrId(String),
    #[error("unknown quality attribute {0:?}")]
    UnknownQa(String),
    #[error("no concurrent condition group {0}")]
    UnknownCcg(usize),
    #[error("scale factor {0} must be finite and non-negative")]
    InvalidFactor(f64),
    #[error("the result is incomplete (failed at {0}); rerun the pipeline first")]
    IncompleteResult(String),
    #[error(transparent)]
    Optimizer(#[from] OptimizerError),
    #[error(transparent)]
    Sensitivity(#[from] SensitivityError),
}

/// Weights and decisions after a modification, diffed against the run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WhatIfDiff {
    pub weights: QaWeights,
    pub decisions: DecisionSet,
    pub changes: Vec<DecisionChange>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WhatIfOutcome {
    pub ccg_id: usize,
    pub baseline_weights: QaWeights,
    pub baseline: DecisionSet,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diff: Option<WhatIfDiff>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub air_scan: Option<AirScan>,
    /// AIR set size to count.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub histogram: BTreeMap<usize, usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WhatIfReport {
    pub analysis: WhatIf,
    pub outcomes: Vec<WhatIfOutcome>,
}

/// Runs `analysis` on one CCG of `result`, or on all of them.
pub fn run_whatif(
    result: &PipelineResult,
    ccg_id: Option<usize>,
    analysis: &WhatIf,
) -> Result<WhatIfReport, WhatIfError> {
    if let Some(failed) = &result.failed_at {
        return Err(WhatIfError::IncompleteResult(failed.step.to_string()));
    }
    let catalog = result.catalog();
    let records = result.records();
    let targets: Vec<&CcgResult> = match ccg_id {
        Some(id) => vec![result.ccg_result(id).ok_or(WhatIfError::UnknownCcg(id))?],
        None => result.results.iter().collect(),
    };

    // Validate arguments once, before touching any CCG.
    let scaled_qa = match analysis {
        WhatIf::RemoveAsr { ids } => {
            let asr_ids: HashSet<&str> = records
                .iter()
                .filter(|r| r.is_asr)
                .map(|r| r.requirement_id.as_str())
                .collect();
            if let Some(bad) = ids.iter().find(|id| !asr_ids.contains(id.as_str())) {
                return Err(WhatIfError::UnknownAsrId(bad.clone()));
            }
            None
        }
        WhatIf::ScaleQa { qa, factor } => {
            if !factor.is_finite() || *factor < 0.0 {
                return Err(WhatIfError::InvalidFactor(*factor));
            }
            Some(
                catalog
                    .resolve(qa)
                    .map_err(|_| WhatIfError::UnknownQa(qa.clone()))?,
            )
        }
        WhatIf::AirScan { .. } => None,
    };

    let mut outcomes = Vec::with_capacity(targets.len());
    for base in targets {
        let mut outcome = WhatIfOutcome {
            ccg_id: base.ccg.ccg_id,
            baseline_weights: base.weights.clone(),
            baseline: base.decisions.clone(),
            diff: None,
            air_scan: None,
            histogram: BTreeMap::new(),
        };
        match analysis {
            WhatIf::RemoveAsr { ids } => {
                let kept: Vec<AsrRecord> = records
                    .iter()
                    .filter(|r| !ids.contains(&r.requirement_id))
                    .cloned()
                    .collect();
                let weights = compute_qa_weights(&base.ccg, &result.cgs, &kept, &catalog);
                outcome.diff = Some(diff_against(base, &result.matrix, weights)?);
            }
            WhatIf::ScaleQa { factor, .. } => {
                let qa: &QualityAttribute = scaled_qa.as_ref().expect("resolved above");
                let mut weights = base.weights.clone();
                let scaled = (f64::from(weights.get(qa)) * factor).round() as u32;
                weights.set(qa.clone(), scaled);
                outcome.diff = Some(diff_against(base, &result.matrix, weights)?);
            }
            WhatIf::AirScan { order } => {
                let scan = find_air_sets(
                    records,
                    &result.cgs,
                    &base.ccg,
                    &result.matrix,
                    &catalog,
                    *order,
                )?;
                outcome.histogram = air_set_histogram(&scan.air_sets);
                outcome.air_scan = Some(scan);
            }
        }
        outcomes.push(outcome);
    }
    Ok(WhatIfReport {
        analysis: analysis.clone(),
        outcomes,
    })
}

fn diff_against(
    base: &CcgResult,
    matrix: &DecisionMatrix,
    weights: QaWeights,
) -> Result<WhatIfDiff, OptimizerError> {
    let problem = OptimizationProblem::new(matrix.clone(), weights);
    let decisions = solve(&problem)?;
    Ok(WhatIfDiff {
        changes: base.decisions.changed_groups(&decisions),
        weights: problem.weights,
        decisions,
    })
}
