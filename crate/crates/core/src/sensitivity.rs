use std::collections::{BTreeMap, HashSet};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{
    AirSet, AsrRecord, ConcurrentConditionGroup, ConditionGroup, DecisionMatrix, DecisionSet,
    QaCatalog, QaWeights, QualityAttribute,
};
use crate::gateway::duration_secs;
use crate::grouping::{ccg_scope, compute_qa_weights};
use crate::optimizer::{solve, OptimizationProblem, OptimizerError};

pub const DEFAULT_DEVIATIONS: [f64; 9] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9];

/// Per-call latency that reproduces the published scalability estimates.
pub const LATENCY_FAST: Duration = Duration::from_millis(100);
/// One second per call, the figure quoted alongside those estimates.
pub const LATENCY_SLOW: Duration = Duration::from_secs(1);

#[derive(Debug, Clone, Error, PartialEq)]
pub enum SensitivityError {
    #[error("deviation {0} outside (0, 1]")]
    InvalidDeviation(f64),
    #[error("no deviations given")]
    NoDeviations,
    #[error("no in-scope ASR implies {0}")]
    NoAsrsForQa(String),
    #[error("invalid estimate input: {0}")]
    InvalidEstimate(String),
    #[error(transparent)]
    Optimizer(#[from] OptimizerError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QaSensitivity {
    pub qa: QualityAttribute,
    pub weight: u32,
    pub change_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityReport {
    pub deviations: Vec<f64>,
    /// One entry per attribute with a positive weight, in catalog order.
    pub entries: Vec<QaSensitivity>,
    /// Most sensitive first; equal counts keep catalog order.
    pub ranking: Vec<QualityAttribute>,
}

impl SensitivityReport {
    pub fn change_count(&self, qa: &QualityAttribute) -> Option<usize> {
        self.entries
            .iter()
            .find(|e| &e.qa == qa)
            .map(|e| e.change_count)
    }
}

fn scaled(weight: u32, factor: f64) -> u32 {
    (f64::from(weight) * factor).round().max(0.0) as u32
}

fn changed_count(baseline: &DecisionSet, other: &DecisionSet) -> usize {
    baseline.changed_groups(other).len()
}

/// Scales each weighted attribute down and up by every deviation and counts
/// the decision groups whose chosen choice moves away from the baseline.
pub fn qa_sensitivity(
    matrix: &DecisionMatrix,
    weights: &QaWeights,
    deviations: &[f64],
) -> Result<SensitivityReport, SensitivityError> {
    if deviations.is_empty() {
        return Err(SensitivityError::NoDeviations);
    }
    if let Some(&bad) = deviations.iter().find(|&&d| !(d > 0.0 && d <= 1.0)) {
        return Err(SensitivityError::InvalidDeviation(bad));
    }
    let problem = OptimizationProblem::new(matrix.clone(), weights.clone());
    let baseline = solve(&problem)?;
    let mut entries = Vec::new();
    for (qa, weight) in problem.weights.nonzero() {
        let mut change_count = 0;
        for &d in deviations {
            for factor in [1.0 - d, 1.0 + d] {
                let mut perturbed = problem.clone();
                perturbed.weights.set(qa.clone(), scaled(weight, factor));
                change_count += changed_count(&baseline, &solve(&perturbed)?);
            }
        }
        entries.push(QaSensitivity {
            qa,
            weight,
            change_count,
        });
    }
    let mut ranked: Vec<&QaSensitivity> = entries.iter().collect();
    ranked.sort_by_key(|e| std::cmp::Reverse(e.change_count));
    let ranking = ranked.into_iter().map(|e| e.qa.clone()).collect();
    Ok(SensitivityReport {
        deviations: deviations.to_vec(),
        entries,
        ranking,
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RemovalOrder {
    /// Original requirement order.
    #[default]
    InputOrder,
    /// ASRs implying the fewest attributes first, so those most specific to
    /// the sensitive attribute go first; ties keep input order.
    BySensitiveQa,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AirScan {
    pub sensitive_qa: QualityAttribute,
    pub removal_order: RemovalOrder,
    pub removal_sequence: Vec<String>,
    pub baseline: DecisionSet,
    pub air_sets: Vec<AirSet>,
    pub sensitivity: SensitivityReport,
}

/// Number of AIR sets of each size.
pub fn air_set_histogram(air_sets: &[AirSet]) -> BTreeMap<usize, usize> {
    let mut hist = BTreeMap::new();
    for set in air_sets {
        *hist.entry(set.size()).or_insert(0) += 1;
    }
    hist
}

fn weights_for(
    records: &[AsrRecord],
    removed: &HashSet<String>,
    cgs: &[ConditionGroup],
    ccg: &ConcurrentConditionGroup,
    catalog: &QaCatalog,
) -> QaWeights {
    let kept: Vec<AsrRecord> = records
        .iter()
        .filter(|r| !removed.contains(&r.requirement_id))
        .cloned()
        .collect();
    compute_qa_weights(ccg, cgs, &kept, catalog)
}

/// Removes the in-scope ASRs implying `qa` one by one, cumulatively,
/// re-solving after each removal. Each time a decision changes, the ASRs
/// removed since the previous change form an AIR set.
#[allow(clippy::too_many_arguments)]
pub fn find_air_sets_for_qa(
    records: &[AsrRecord],
    cgs: &[ConditionGroup],
    ccg: &ConcurrentConditionGroup,
    matrix: &DecisionMatrix,
    catalog: &QaCatalog,
    qa: &QualityAttribute,
    order: RemovalOrder,
) -> Result<(Vec<String>, Vec<AirSet>), SensitivityError> {
    let scope = ccg_scope(ccg, cgs);
    let mut candidates: Vec<&AsrRecord> = records
        .iter()
        .filter(|r| r.is_asr && r.implies(qa) && scope.contains(r.requirement_id.as_str()))
        .collect();
    if candidates.is_empty() {
        return Err(SensitivityError::NoAsrsForQa(qa.to_string()));
    }
    if order == RemovalOrder::BySensitiveQa {
        candidates.sort_by_key(|r| r.qas.len());
    }
    let sequence: Vec<String> = candidates
        .iter()
        .map(|r| r.requirement_id.clone())
        .collect();

    let mut removed = HashSet::new();
    let mut previous = solve(&OptimizationProblem::new(
        matrix.clone(),
        weights_for(records, &removed, cgs, ccg, catalog),
    ))?;
    let mut pending = Vec::new();
    let mut air_sets = Vec::new();
    for id in &sequence {
        removed.insert(id.clone());
        pending.push(id.clone());
        let current = solve(&OptimizationProblem::new(
            matrix.clone(),
            weights_for(records, &removed, cgs, ccg, catalog),
        ))?;
        if changed_count(&previous, &current) > 0 {
            air_sets.push(AirSet {
                removed_asr_ids: std::mem::take(&mut pending),
                sensitive_qa: qa.clone(),
                before: previous,
                after: current.clone(),
            });
        }
        previous = current;
    }
    Ok((sequence, air_sets))
}

/// Picks the most sensitive attribute of `ccg` and scans removals of the
/// ASRs implying it.
pub fn find_air_sets(
    records: &[AsrRecord],
    cgs: &[ConditionGroup],
    ccg: &ConcurrentConditionGroup,
    matrix: &DecisionMatrix,
    catalog: &QaCatalog,
    order: RemovalOrder,
) -> Result<AirScan, SensitivityError> {
    let weights = compute_qa_weights(ccg, cgs, records, catalog);
    let baseline = solve(&OptimizationProblem::new(matrix.clone(), weights.clone()))?;
    let sensitivity = qa_sensitivity(matrix, &weights, &DEFAULT_DEVIATIONS)?;
    let sensitive_qa = sensitivity
        .ranking
        .first()
        .cloned()
        .ok_or_else(|| SensitivityError::NoAsrsForQa("any attribute".into()))?;
    let (removal_sequence, air_sets) =
        find_air_sets_for_qa(records, cgs, ccg, matrix, catalog, &sensitive_qa, order)?;
    Ok(AirScan {
        sensitive_qa,
        removal_order: order,
        removal_sequence,
        baseline,
        air_sets,
        sensitivity,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuntimeEstimate {
    pub n: u64,
    pub worst_iterations: u64,
    pub best_iterations: u64,
    #[serde(with = "duration_secs")]
    pub per_call_latency: Duration,
    #[serde(with = "duration_secs")]
    pub worst_time: Duration,
    #[serde(with = "duration_secs")]
    pub best_time: Duration,
}

/// Pairwise comparisons needed when every requirement is a conditional ASR
/// with a distinct condition: `n(n-1)/2`.
pub fn worst_iterations(n: u64) -> u64 {
    n * n.saturating_sub(1) / 2
}

pub fn estimate_runtime(
    n: u64,
    asr_ratio: f64,
    conditional_ratio: f64,
    per_call_latency: Duration,
) -> Result<RuntimeEstimate, SensitivityError> {
    if n == 0 {
        return Err(SensitivityError::InvalidEstimate(
            "n must be at least 1".into(),
        ));
    }
    for (name, r) in [
        ("asr_ratio", asr_ratio),
        ("conditional_ratio", conditional_ratio),
    ] {
        if !(r > 0.0 && r <= 1.0) {
            return Err(SensitivityError::InvalidEstimate(format!(
                "{name} {r} outside (0, 1]"
            )));
        }
    }
    let worst = worst_iterations(n);
    let scale = asr_ratio * conditional_ratio;
    let worst_time = per_call_latency.mul_f64(worst as f64);
    Ok(RuntimeEstimate {
        n,
        worst_iterations: worst,
        best_iterations: (worst as f64 * scale).round() as u64,
        per_call_latency,
        worst_time,
        best_time: worst_time.mul_f64(scale),
    })
}
