//! Shared fixtures and the brute-force oracle used by the integration tests.
#![allow(dead_code)]

use std::path::PathBuf;

use archsel_core::config::load_fixture;
use archsel_core::domain::{
    Choice, DecisionGroup, DecisionMatrix, QaCatalog, QaWeights, QualityAttribute, Requirement,
};
use archsel_core::gateway::{Gateway, MockFixture};
use archsel_core::io::{load_matrix, load_requirements};
use archsel_core::pipeline::{run_pipeline_with, PipelineOptions, PipelineResult};
use rand::Rng;

pub fn data(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("data")
        .join(name)
}

pub fn ums_requirements() -> Vec<Requirement> {
    load_requirements(&data("ums_requirements.json")).unwrap()
}

pub fn ums_matrix() -> DecisionMatrix {
    load_matrix(&data("ums_matrix.csv")).unwrap()
}

pub fn case_matrix() -> DecisionMatrix {
    load_matrix(&data("case_matrix.csv")).unwrap()
}

pub fn ums_fixture() -> MockFixture {
    load_fixture(&data("ums_mock.json")).unwrap()
}

pub fn run_ums(gateway: &Gateway) -> PipelineResult {
    run_pipeline_with(
        &ums_requirements(),
        &ums_matrix(),
        QaCatalog::builtin(),
        gateway,
        &PipelineOptions::default(),
    )
    .unwrap()
}

pub fn qa(code: &str) -> QualityAttribute {
    QualityAttribute::new(code).unwrap()
}

pub fn weights(pairs: &[(&str, u32)]) -> QaWeights {
    QaWeights::from_pairs(pairs.iter().map(|&(c, w)| (qa(c), w)))
}

/// Optimum found by enumerating every full selection.
#[derive(Debug)]
pub struct OracleOptimum {
    pub objective: i64,
    /// Per group, the choices that occur in at least one optimal selection.
    pub optimal_choices: Vec<Vec<String>>,
    pub selections: u64,
}

/// Enumerates all one-choice-per-group selections, scoring each with
/// `Σ_j W_j · Score_j` where `Score_j` sums the selected impacts in column
/// `j`. Deliberately shares no code with the solver.
pub fn oracle(matrix: &DecisionMatrix, weights: &QaWeights) -> OracleOptimum {
    let columns: Vec<QualityAttribute> = matrix.qa_columns();
    let rows: Vec<Vec<Vec<i64>>> = matrix
        .groups
        .iter()
        .map(|g| {
            g.choices
                .iter()
                .map(|c| columns.iter().map(|q| i64::from(c.impact(q))).collect())
                .collect()
        })
        .collect();
    let w: Vec<i64> = columns.iter().map(|q| i64::from(weights.get(q))).collect();

    struct State {
        best: Option<i64>,
        masks: Vec<u64>,
        count: u64,
    }
    fn walk(
        rows: &[Vec<Vec<i64>>],
        w: &[i64],
        depth: usize,
        scores: &mut Vec<i64>,
        picked: &mut Vec<usize>,
        st: &mut State,
    ) {
        if depth == rows.len() {
            st.count += 1;
            let objective: i64 = scores.iter().zip(w).map(|(s, w)| s * w).sum();
            match st.best {
                Some(b) if objective < b => {}
                Some(b) if objective == b => {
                    for (g, &c) in picked.iter().enumerate() {
                        st.masks[g] |= 1 << c;
                    }
                }
                _ => {
                    st.best = Some(objective);
                    for (g, &c) in picked.iter().enumerate() {
                        st.masks[g] = 1 << c;
                    }
                }
            }
            return;
        }
        for (c, impacts) in rows[depth].iter().enumerate() {
            for (s, i) in scores.iter_mut().zip(impacts) {
                *s += i;
            }
            picked.push(c);
            walk(rows, w, depth + 1, scores, picked, st);
            picked.pop();
            for (s, i) in scores.iter_mut().zip(impacts) {
                *s -= i;
            }
        }
    }

    let mut st = State {
        best: None,
        masks: vec![0; rows.len()],
        count: 0,
    };
    walk(
        &rows,
        &w,
        0,
        &mut vec![0; columns.len()],
        &mut Vec::new(),
        &mut st,
    );
    let optimal_choices = matrix
        .groups
        .iter()
        .zip(&st.masks)
        .map(|(g, mask)| {
            g.choices
                .iter()
                .enumerate()
                .filter(|(i, _)| mask & (1 << i) != 0)
                .map(|(_, c)| c.name.clone())
                .collect()
        })
        .collect();
    OracleOptimum {
        objective: st.best.unwrap_or(0),
        optimal_choices,
        selections: st.count,
    }
}

/// A random valid matrix: 1..=max_groups groups of 2..=max_choices choices,
/// impacts in {-1, 0, 1} over `columns`.
pub fn random_matrix<R: Rng>(
    rng: &mut R,
    max_groups: usize,
    max_choices: usize,
    columns: &[QualityAttribute],
) -> DecisionMatrix {
    let groups = rng.random_range(1..=max_groups);
    DecisionMatrix {
        groups: (0..groups)
            .map(|g| DecisionGroup {
                name: format!("G{g}"),
                choices: (0..rng.random_range(2..=max_choices))
                    .map(|c| {
                        Choice::new(
                            &format!("G{g}C{c}"),
                            columns
                                .iter()
                                .map(|q| (q.clone(), rng.random_range(-1..=1))),
                        )
                    })
                    .collect(),
            })
            .collect(),
    }
}

pub fn random_weights<R: Rng>(rng: &mut R, columns: &[QualityAttribute], max: u32) -> QaWeights {
    QaWeights::from_pairs(
        columns
            .iter()
            .map(|q| (q.clone(), rng.random_range(0..=max))),
    )
}

fn choice(name: &str, impacts: &[(&str, i32)]) -> Choice {
    Choice::new(name, impacts.iter().map(|&(c, v)| (qa(c), v)))
}

/// Group `G` picks `A` while any ASR supports PE and falls back to the
/// first-listed `B` once none does. SE cannot move it. Group `H` never moves.
pub fn air_matrix() -> DecisionMatrix {
    DecisionMatrix {
        groups: vec![
            DecisionGroup {
                name: "G".into(),
                choices: vec![
                    choice("B", &[("PE", 0), ("SE", 1)]),
                    choice("A", &[("PE", 1), ("SE", 1)]),
                ],
            },
            DecisionGroup {
                name: "H".into(),
                choices: vec![
                    choice("X", &[("PE", 1), ("SE", 1)]),
                    choice("Y", &[("PE", 0), ("SE", 0)]),
                ],
            },
        ],
    }
}

/// One PE ASR and one SE ASR under the same condition: removing the PE ASR
/// alone flips group `G`.
pub fn single_air_fixture() -> (Vec<Requirement>, DecisionMatrix, MockFixture) {
    let reqs = vec![
        Requirement::new("R1", "The system shall answer queries within 1 second.").unwrap(),
        Requirement::new("R2", "The system shall encrypt stored records.").unwrap(),
    ];
    let fixture: MockFixture = serde_json::from_value(serde_json::json!({
        "requirements": {
            "R1": {"is_asr": true, "qas": ["Performance Efficiency"], "condition": "at all times"},
            "R2": {"is_asr": true, "qas": ["Security"], "condition": "at all times"}
        }
    }))
    .unwrap();
    (reqs, air_matrix(), fixture)
}
