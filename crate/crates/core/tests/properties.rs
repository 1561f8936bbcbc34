mod support;

use std::collections::BTreeSet;
use std::path::Path;

use archsel_core::domain::{
    AsrRecord, Choice, ConcurrentConditionGroup, ConditionGroup, DecisionGroup, DecisionMatrix,
    QaCatalog, QaWeights, QualityAttribute, Requirement,
};
use archsel_core::gateway::{Gateway, MockFixture, MockRequirement};
use archsel_core::grouping::compute_qa_weights;
use archsel_core::io::{matrix_to_csv, parse_matrix};
use archsel_core::optimizer::{solve, OptimizationProblem};
use archsel_core::pipeline::{run_pipeline_with, PipelineOptions, PipelineResult};
use proptest::prelude::*;
use support::*;

const CODES: [&str; 8] = ["PE", "CO", "IC", "RE", "SE", "MA", "FL", "CE"];
const CONDITIONS: [&str; 3] = ["at all times", "during peak load", "after a crash"];

fn columns() -> Vec<QualityAttribute> {
    CODES.iter().map(|c| qa(c)).collect()
}

fn arb_matrix() -> impl Strategy<Value = DecisionMatrix> {
    let choice = prop::collection::vec(-1i32..=1, CODES.len());
    let group = prop::collection::vec(choice, 2..=5);
    prop::collection::vec(group, 1..=8).prop_map(|groups| DecisionMatrix {
        groups: groups
            .into_iter()
            .enumerate()
            .map(|(g, choices)| DecisionGroup {
                name: format!("Group {g}"),
                choices: choices
                    .into_iter()
                    .enumerate()
                    .map(|(c, impacts)| {
                        Choice::new(
                            &format!("Choice {g}.{c}"),
                            columns().into_iter().zip(impacts),
                        )
                    })
                    .collect(),
            })
            .collect(),
    })
}

fn arb_weights() -> impl Strategy<Value = QaWeights> {
    prop::collection::vec(0u32..=10, CODES.len())
        .prop_map(|ws| QaWeights::from_pairs(columns().into_iter().zip(ws)))
}

/// ASR records with random attribute sets, each in one of three groups.
fn arb_records() -> impl Strategy<Value = (Vec<AsrRecord>, Vec<usize>)> {
    prop::collection::vec(
        (prop::collection::btree_set(0usize..8, 1..=3), 0usize..3),
        1..=12,
    )
    .prop_map(|items| {
        let records = items
            .iter()
            .enumerate()
            .map(|(i, (qas, _))| {
                AsrRecord::asr(
                    format!("R{}", i + 1),
                    qas.iter().map(|&q| qa(CODES[q])),
                    None,
                )
                .unwrap()
            })
            .collect();
        (records, items.iter().map(|(_, g)| *g).collect())
    })
}

fn groups_for(records: &[AsrRecord], assignment: &[usize]) -> Vec<ConditionGroup> {
    (0..3)
        .map(|g| ConditionGroup {
            cg_id: g + 1,
            nominal_condition: CONDITIONS[g].into(),
            asr_ids: records
                .iter()
                .zip(assignment)
                .filter(|(_, &a)| a == g)
                .map(|(r, _)| r.requirement_id.clone())
                .collect(),
        })
        .collect()
}

fn arb_fixture() -> impl Strategy<Value = (Vec<Requirement>, MockFixture)> {
    let item = (
        any::<bool>(),
        prop::collection::btree_set(0usize..8, 1..=3),
        0usize..3,
    );
    prop::collection::vec(item, 1..=8).prop_map(|items| {
        let mut fixture = MockFixture::default();
        let mut reqs = Vec::new();
        for (i, (is_asr, qas, cond)) in items.into_iter().enumerate() {
            // At least one ASR, so every run reaches the solver.
            let is_asr = is_asr || i == 0;
            let id = format!("R{}", i + 1);
            reqs.push(Requirement::new(&id, format!("Requirement number {i}.")).unwrap());
            fixture.requirements.insert(
                id,
                MockRequirement {
                    is_asr,
                    qas: if is_asr {
                        qas.iter().map(|&q| CODES[q].to_string()).collect()
                    } else {
                        vec![]
                    },
                    condition: is_asr.then(|| CONDITIONS[cond].to_string()),
                },
            );
        }
        (reqs, fixture)
    })
}

fn run(reqs: &[Requirement], fixture: &MockFixture) -> PipelineResult {
    run_pipeline_with(
        reqs,
        &ums_matrix(),
        QaCatalog::builtin(),
        &Gateway::mock(fixture.clone()),
        &PipelineOptions::default(),
    )
    .expect("mock run succeeds")
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn solver_matches_enumeration(m in arb_matrix(), w in arb_weights()) {
        let d = solve(&OptimizationProblem::new(m.clone(), w.clone())).unwrap();
        let o = oracle(&m, &w);
        prop_assert_eq!(d.objective_value, o.objective);
        for (dec, allowed) in d.decisions.iter().zip(&o.optimal_choices) {
            prop_assert!(allowed.contains(&dec.chosen_choice));
        }
    }

    #[test]
    fn removing_asrs_never_raises_a_weight(
        (records, assignment) in arb_records(),
        drop_mask in prop::collection::vec(any::<bool>(), 12),
    ) {
        let cgs = groups_for(&records, &assignment);
        let catalog = QaCatalog::builtin();
        let kept: Vec<AsrRecord> = records
            .iter()
            .zip(&drop_mask)
            .filter(|(_, &drop)| !drop)
            .map(|(r, _)| r.clone())
            .collect();
        for cg_ids in [BTreeSet::from([1, 3]), BTreeSet::from([2, 3]), BTreeSet::from([1, 2, 3])] {
            let ccg = ConcurrentConditionGroup { ccg_id: 1, cg_ids };
            let full = compute_qa_weights(&ccg, &cgs, &records, catalog);
            let reduced = compute_qa_weights(&ccg, &cgs, &kept, catalog);
            for q in catalog.codes() {
                prop_assert!(reduced.get(q) <= full.get(q), "{}", q);
            }
        }
    }

    #[test]
    fn scaling_all_weights_keeps_the_argmax(
        m in arb_matrix(),
        w in arb_weights(),
        k in 1u32..=20,
    ) {
        let base = solve(&OptimizationProblem::new(m.clone(), w.clone())).unwrap();
        let scaled = QaWeights::from_pairs(w.weights.iter().map(|(q, &v)| (q.clone(), v * k)));
        let after = solve(&OptimizationProblem::new(m, scaled)).unwrap();
        prop_assert_eq!(after.objective_value, base.objective_value * i64::from(k));
        for (a, b) in base.decisions.iter().zip(&after.decisions) {
            prop_assert_eq!(&a.chosen_choice, &b.chosen_choice);
            prop_assert_eq!(&a.tie_set, &b.tie_set);
        }
    }

    #[test]
    fn mock_runs_are_deterministic((reqs, fixture) in arb_fixture()) {
        let a = run(&reqs, &fixture);
        let b = run(&reqs, &fixture);
        prop_assert!(!a.results.is_empty());
        prop_assert_eq!(a.to_json(), b.to_json());
    }

    #[test]
    fn results_round_trip((reqs, fixture) in arb_fixture()) {
        let r = run(&reqs, &fixture);
        let json = r.to_json();
        let back = PipelineResult::from_json(&json).unwrap();
        prop_assert_eq!(back.to_json(), json);
        prop_assert_eq!(
            archsel_core::report::render_report(&back),
            archsel_core::report::render_report(&r)
        );
    }

    #[test]
    fn matrices_round_trip(m in arb_matrix()) {
        let csv = matrix_to_csv(&m);
        prop_assert_eq!(&parse_matrix(Path::new("m.csv"), &csv).unwrap(), &m);
        let json = serde_json::to_string(&m).unwrap();
        prop_assert_eq!(&parse_matrix(Path::new("m.json"), &json).unwrap(), &m);
    }

    #[test]
    fn decisions_and_weights_round_trip(m in arb_matrix(), w in arb_weights()) {
        let d = solve(&OptimizationProblem::new(m, w.clone())).unwrap();
        let back: archsel_core::domain::DecisionSet =
            serde_json::from_str(&serde_json::to_string(&d).unwrap()).unwrap();
        prop_assert_eq!(back, d);
        let wb: QaWeights = serde_json::from_str(&serde_json::to_string(&w).unwrap()).unwrap();
        prop_assert_eq!(wb, w);
    }
}
