//! Step 3: choose one option per decision group to maximize the weighted
//! satisfaction score.
//!
//! The objective is `Σ_j W_j · Σ_i M_ij · x_i` with exactly one `x_i = 1` per
//! group. Groups share no variables, so the optimum is the per-group argmax
//! of `Σ_j M_ij · W_j`. Ties keep the first-listed choice and report the
//! whole tie set.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{
    validate_matrix, AsrRecord, Choice, ConcurrentConditionGroup, ConditionGroup, DecisionMatrix,
    DecisionSet, GroupDecision, QaScore, QaWeights, QualityAttribute, ScoreReport,
};
use crate::grouping::ccg_scope;

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum OptimizerError {
    #[error("invalid problem: {0}")]
    InvalidProblem(String),
    #[error("decision for group {group:?} names {choice:?}, which the matrix does not contain")]
    ChoiceNotInMatrix { group: String, choice: String },
}

/// How ties are presented. The chosen choice is always the first-listed
/// member of the tie set; `ReportAll` asks reports to show every member.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TieBreak {
    #[default]
    FirstListed,
    ReportAll,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OptimizationProblem {
    pub matrix: DecisionMatrix,
    pub weights: QaWeights,
    #[serde(default)]
    pub tie_break: TieBreak,
}

impl OptimizationProblem {
    /// Builds a problem, giving every matrix column without a weight an
    /// explicit zero.
    pub fn new(matrix: DecisionMatrix, mut weights: QaWeights) -> Self {
        for qa in matrix.qa_columns() {
            if !weights.weights.contains_key(&qa) {
                weights.set(qa, 0);
            }
        }
        OptimizationProblem {
            matrix,
            weights,
            tie_break: TieBreak::FirstListed,
        }
    }

    pub fn validate(&self) -> Result<(), OptimizerError> {
        let violations = validate_matrix(&self.matrix);
        if !violations.is_empty() {
            let listed: Vec<String> = violations.iter().map(ToString::to_string).collect();
            return Err(OptimizerError::InvalidProblem(listed.join("; ")));
        }
        let uncovered: Vec<String> = self
            .matrix
            .qa_columns()
            .into_iter()
            .filter(|qa| !self.weights.weights.contains_key(qa))
            .map(|qa| qa.to_string())
            .collect();
        if !uncovered.is_empty() {
            return Err(OptimizerError::InvalidProblem(format!(
                "no weight for matrix column(s) {}",
                uncovered.join(", ")
            )));
        }
        Ok(())
    }
}

/// `Σ_j impact_j · W_j` for one choice.
pub fn choice_value(choice: &Choice, weights: &QaWeights) -> i64 {
    choice
        .impacts
        .iter()
        .map(|(qa, &impact)| i64::from(impact) * i64::from(weights.get(qa)))
        .sum()
}

pub fn solve(problem: &OptimizationProblem) -> Result<DecisionSet, OptimizerError> {
    problem.validate()?;
    let decisions: Vec<GroupDecision> = problem
        .matrix
        .groups
        .iter()
        .map(|group| {
            let values: Vec<i64> = group
                .choices
                .iter()
                .map(|c| choice_value(c, &problem.weights))
                .collect();
            let best = *values.iter().max().expect("validated groups are non-empty");
            let tie_set: Vec<String> = group
                .choices
                .iter()
                .zip(&values)
                .filter(|(_, &v)| v == best)
                .map(|(c, _)| c.name.clone())
                .collect();
            GroupDecision {
                group: group.name.clone(),
                chosen_choice: tie_set[0].clone(),
                tie_set,
                value: best,
            }
        })
        .collect();
    let objective_value = decisions.iter().map(|d| d.value).sum();
    Ok(DecisionSet {
        decisions,
        objective_value,
    })
}

/// Builds a decision set from explicit `(group, choice)` picks, for scoring
/// a selection that did not come from [`solve`]. Tie sets hold only the
/// pick itself.
pub fn decisions_from_picks(
    matrix: &DecisionMatrix,
    weights: &QaWeights,
    picks: &[(&str, &str)],
) -> Result<DecisionSet, OptimizerError> {
    let mut decisions = Vec::with_capacity(picks.len());
    for &(group_name, choice_name) in picks {
        let choice = matrix
            .group(group_name)
            .and_then(|g| g.choice(choice_name))
            .ok_or_else(|| OptimizerError::ChoiceNotInMatrix {
                group: group_name.to_string(),
                choice: choice_name.to_string(),
            })?;
        decisions.push(GroupDecision {
            group: group_name.to_string(),
            chosen_choice: choice_name.to_string(),
            tie_set: vec![choice_name.to_string()],
            value: choice_value(choice, weights),
        });
    }
    let objective_value = decisions.iter().map(|d| d.value).sum();
    Ok(DecisionSet {
        decisions,
        objective_value,
    })
}

/// Raw and weighted satisfaction per attribute for the chosen choices. Rows
/// cover the weighted attributes plus every matrix column, in catalog order.
pub fn score(
    matrix: &DecisionMatrix,
    decisions: &DecisionSet,
    weights: &QaWeights,
) -> Result<ScoreReport, OptimizerError> {
    let mut chosen: Vec<&Choice> = Vec::with_capacity(decisions.decisions.len());
    for d in &decisions.decisions {
        let choice = matrix
            .group(&d.group)
            .and_then(|g| g.choice(&d.chosen_choice))
            .ok_or_else(|| OptimizerError::ChoiceNotInMatrix {
                group: d.group.clone(),
                choice: d.chosen_choice.clone(),
            })?;
        chosen.push(choice);
    }
    let qas: BTreeSet<QualityAttribute> = weights
        .qas()
        .into_iter()
        .chain(matrix.qa_columns())
        .collect();
    let entries = crate::domain::sort_qas(qas.iter())
        .into_iter()
        .map(|qa| {
            let raw_score: i64 = chosen.iter().map(|c| i64::from(c.impact(&qa))).sum();
            let weight = weights.get(&qa);
            QaScore {
                weighted_score: raw_score * i64::from(weight),
                qa,
                weight,
                raw_score,
            }
        })
        .collect();
    Ok(ScoreReport { entries })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QaSupport {
    pub qa: QualityAttribute,
    pub weight: u32,
    pub asr_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChoiceTrace {
    pub group: String,
    pub choice: String,
    pub support: Vec<QaSupport>,
}

/// Links each chosen choice to the weighted attributes it improves and the
/// ASRs behind them, plus the inverse index from ASR to choices.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceabilityReport {
    pub choices: Vec<ChoiceTrace>,
    pub asr_influence: BTreeMap<String, Vec<String>>,
}

impl TraceabilityReport {
    pub fn choice(&self, name: &str) -> Option<&ChoiceTrace> {
        self.choices.iter().find(|c| c.choice == name)
    }

    pub fn influenced_by(&self, asr_id: &str) -> &[String] {
        self.asr_influence
            .get(asr_id)
            .map(Vec::as_slice)
            .unwrap_or_default()
    }
}

pub fn trace(
    matrix: &DecisionMatrix,
    decisions: &DecisionSet,
    weights: &QaWeights,
    records: &[AsrRecord],
    ccg: &ConcurrentConditionGroup,
    cgs: &[ConditionGroup],
) -> TraceabilityReport {
    let scope = ccg_scope(ccg, cgs);
    let in_scope: Vec<&AsrRecord> = records
        .iter()
        .filter(|r| r.is_asr && scope.contains(r.requirement_id.as_str()))
        .collect();
    let mut report = TraceabilityReport::default();
    for d in &decisions.decisions {
        let Some(choice) = matrix
            .group(&d.group)
            .and_then(|g| g.choice(&d.chosen_choice))
        else {
            continue;
        };
        let mut support = Vec::new();
        for (qa, &impact) in &choice.impacts {
            let weight = weights.get(qa);
            if impact <= 0 || weight == 0 {
                continue;
            }
            let asr_ids: Vec<String> = in_scope
                .iter()
                .filter(|r| r.implies(qa))
                .map(|r| r.requirement_id.clone())
                .collect();
            for id in &asr_ids {
                let influenced = report.asr_influence.entry(id.clone()).or_default();
                if !influenced.contains(&choice.name) {
                    influenced.push(choice.name.clone());
                }
            }
            support.push(QaSupport {
                qa: qa.clone(),
                weight,
                asr_ids,
            });
        }
        support.sort_by(|a, b| a.qa.catalog_rank().cmp(&b.qa.catalog_rank()));
        report.choices.push(ChoiceTrace {
            group: d.group.clone(),
            choice: choice.name.clone(),
            support,
        });
    }
    report
}
