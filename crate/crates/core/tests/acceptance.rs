//! End-to-end acceptance checks. Each criterion prints one PASS or FAIL
//! line; the test fails if any criterion does.

mod support;

use std::collections::{BTreeMap, BTreeSet};
use std::time::{Duration, Instant};

use archsel_core::domain::{
    AsrRecord, ConcurrentConditionGroup, ConditionGroup, QaCatalog, QaWeights, QualityAttribute,
};
use archsel_core::gateway::{ConcurrencyAnswer, Gateway, MockFixture};
use archsel_core::grouping::{compute_qa_weights, form_ccgs, group_conditions, ClusteringConfig};
use archsel_core::optimizer::{
    choice_value, decisions_from_picks, score, solve, OptimizationProblem,
};
use archsel_core::pipeline::{PipelineResult, WhatIf};
use archsel_core::sensitivity::{air_set_histogram, estimate_runtime, find_air_sets, RemovalOrder};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use support::*;

type Outcome = Result<String, String>;
type Criterion = (u32, &'static str, fn() -> Outcome);

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        let holds: bool = $cond;
        if !holds {
            return Err(format!($($msg)+));
        }
    };
}

fn chosen(d: &archsel_core::domain::DecisionSet) -> Vec<&str> {
    d.decisions
        .iter()
        .map(|x| x.chosen_choice.as_str())
        .collect()
}

fn criterion_1() -> Outcome {
    let started = Instant::now();
    let r = run_ums(&Gateway::mock(ums_fixture()));
    let elapsed = started.elapsed();

    let asrs: Vec<&str> = r
        .records()
        .iter()
        .filter(|a| a.is_asr)
        .map(|a| a.requirement_id.as_str())
        .collect();
    ensure!(
        asrs == ["R1", "R2", "R3", "R6", "R7", "R9"],
        "ASRs {asrs:?}"
    );
    ensure!(r.ccgs.len() == 2, "{} CCGs", r.ccgs.len());
    let (c1, c2) = (&r.results[0], &r.results[1]);
    ensure!(
        c1.weights.nonzero() == weights(&[("PE", 1), ("SE", 1)]).nonzero(),
        "CCG1 weights {:?}",
        c1.weights.nonzero()
    );
    ensure!(
        c2.weights.nonzero() == weights(&[("RE", 4), ("IC", 2)]).nonzero(),
        "CCG2 weights {:?}",
        c2.weights.nonzero()
    );

    let ccg1_reference = [
        "Microservices",
        "Always-on",
        "API-Call",
        "Hot-Hot",
        "NoSQL",
        "Proactive",
        "Real-time",
    ];
    ensure!(
        chosen(&c1.decisions) == ccg1_reference,
        "CCG1 {:?}",
        chosen(&c1.decisions)
    );

    let ccg2_reference = [
        "P2P",
        "Offline First",
        "Message-Based",
        "Hot-Hot",
        "NoSQL",
        "Proactive",
        "Batch Processing",
    ];
    let got = chosen(&c2.decisions);
    let agree: Vec<&str> = r
        .matrix
        .groups
        .iter()
        .zip(got.iter().zip(ccg2_reference))
        .filter(|(_, (a, b))| *a == b)
        .map(|(g, _)| g.name.as_str())
        .collect();
    ensure!(
        agree
            == [
                "Deployment",
                "Communication",
                "Data Replication",
                "DBMS",
                "Data Synch"
            ],
        "CCG2 agrees on {agree:?}"
    );

    let o = oracle(&r.matrix, &c2.weights);
    ensure!(
        o.objective == c2.decisions.objective_value,
        "oracle {} vs {}",
        o.objective,
        c2.decisions.objective_value
    );
    let caching = &o.optimal_choices[1];
    ensure!(
        caching.contains(&"Always-on".into()) && caching.contains(&"Offline First".into()),
        "caching optima {caching:?}"
    );
    let sec = c2.decisions.decision("Security").unwrap();
    let proactive = r
        .matrix
        .group("Security")
        .unwrap()
        .choice("Proactive")
        .unwrap();
    ensure!(
        o.optimal_choices[5] == ["Reactive"],
        "security optima {:?}",
        o.optimal_choices[5]
    );
    ensure!(
        sec.value == 2 && choice_value(proactive, &c2.weights) == 0,
        "security values"
    );
    ensure!(elapsed < Duration::from_secs(1), "took {elapsed:?}");
    Ok(format!(
        "6 ASRs, 2 CCGs, CCG1 7/7, CCG2 5/7 (caching tie; Reactive 2 vs Proactive 0), {:.0} ms",
        elapsed.as_secs_f64() * 1e3
    ))
}

fn criterion_2() -> Outcome {
    let r = run_ums(&Gateway::mock(ums_fixture()));
    let (c1, c2) = (&r.results[0], &r.results[1]);
    let pe = c1.scores.get(&qa("PE")).unwrap().weighted_score;
    let se = c1.scores.get(&qa("SE")).unwrap().weighted_score;
    ensure!((pe, se) == (4, 3), "CCG1 PE {pe}, SE {se}");
    let re = c2.scores.get(&qa("RE")).unwrap();
    ensure!(
        (re.raw_score, re.weighted_score) == (6, 24),
        "CCG2 RE {re:?}"
    );

    // The attribute row is scored on the reference column.
    let reference = decisions_from_picks(
        &r.matrix,
        &c2.weights,
        &[
            ("Deployment", "P2P"),
            ("Data Caching", "Offline First"),
            ("Communication", "Message-Based"),
            ("Data Replication", "Hot-Hot"),
            ("DBMS", "NoSQL"),
            ("Security", "Proactive"),
            ("Data Synch", "Batch Processing"),
        ],
    )
    .map_err(|e| e.to_string())?;
    let s = score(&r.matrix, &reference, &c2.weights).map_err(|e| e.to_string())?;
    let ic = s.get(&qa("IC")).unwrap();
    ensure!(
        (ic.raw_score, ic.weighted_score) == (2, 4),
        "CCG2 IC {ic:?}"
    );
    Ok("PE 4, SE 3; RE raw 6 weighted 24; IC raw 2 weighted 4".into())
}

fn criterion_3() -> Outcome {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let columns: Vec<QualityAttribute> = QaCatalog::builtin().codes().cloned().collect();
    let mut passed = 0;
    for case in 0..1000 {
        let m = random_matrix(&mut rng, 8, 5, &columns);
        let w = random_weights(&mut rng, &columns, 10);
        let d =
            solve(&OptimizationProblem::new(m.clone(), w.clone())).map_err(|e| e.to_string())?;
        let o = oracle(&m, &w);
        ensure!(
            d.objective_value == o.objective,
            "case {case}: {} vs {}",
            d.objective_value,
            o.objective
        );
        for (group, dec) in m.groups.iter().zip(&d.decisions) {
            let best = group
                .choices
                .iter()
                .map(|c| choice_value(c, &w))
                .max()
                .unwrap();
            let got = choice_value(group.choice(&dec.chosen_choice).unwrap(), &w);
            ensure!(
                got == best,
                "case {case}: {} not at group max",
                dec.chosen_choice
            );
        }
        passed += 1;
    }
    let elapsed = started.elapsed();
    ensure!(elapsed < Duration::from_secs(10), "took {elapsed:?}");
    Ok(format!(
        "{passed}/1000 match enumeration in {:.2} s",
        elapsed.as_secs_f64()
    ))
}

fn thirty_conditions(clusters: usize) -> (Vec<AsrRecord>, Gateway) {
    let mut embeddings = BTreeMap::new();
    let records = (0..30)
        .map(|i| {
            let cond = format!("while subsystem {i} is degraded");
            let mut v = vec![0.0; 4];
            v[i % clusters] = 1.0;
            v[3] = 0.01 * i as f64;
            embeddings.insert(cond.clone(), v);
            AsrRecord::asr(format!("R{i}"), [qa("RE")], Some(&cond)).unwrap()
        })
        .collect();
    let gw = Gateway::mock(MockFixture {
        embeddings,
        ..Default::default()
    });
    (records, gw)
}

fn criterion_4() -> Outcome {
    let mut counts = Vec::new();
    for clusters in [1, 3] {
        let (records, gw) = thirty_conditions(clusters);
        let out = group_conditions(&records, &gw, &ClusteringConfig::default())
            .map_err(|e| e.to_string())?;
        ensure!(
            out.clusters.len() == clusters,
            "{} clusters",
            out.clusters.len()
        );
        ensure!(out.cgs.len() == 30, "{} groups", out.cgs.len());
        counts.push(gw.stats().completion_calls);
    }
    ensure!(counts == [435, 135], "calls {counts:?}");
    Ok("435 calls in one cluster, 135 in three".into())
}

fn criterion_5() -> Outcome {
    let reference = [
        (100, 4_950, 10.0, 8.0 * 60.0),
        (1000, 499_500, 18.0 * 60.0, 14.0 * 3600.0),
        (2000, 1_999_000, 3600.0, 55.0 * 3600.0),
        (5000, 12_497_500, 8.0 * 3600.0, 14.0 * 86400.0),
    ];
    let mut worst_dev: f64 = 0.0;
    for (n, iterations, best, worst) in reference {
        let e = estimate_runtime(n, 0.15, 0.15, Duration::from_millis(100))
            .map_err(|e| e.to_string())?;
        ensure!(
            e.worst_iterations == iterations,
            "n={n}: {} iterations",
            e.worst_iterations
        );
        for (got, want) in [(e.best_time, best), (e.worst_time, worst)] {
            let dev = (got.as_secs_f64() - want).abs() / want;
            ensure!(dev <= 0.25, "n={n}: {got:?} vs {want} s");
            worst_dev = worst_dev.max(dev);
        }
    }
    Ok(format!(
        "iterations exact, times within {:.1}%",
        worst_dev * 100.0
    ))
}

fn criterion_6() -> Outcome {
    let names = ["NC", "DR", "UAC"];
    let cgs: Vec<ConditionGroup> = names
        .iter()
        .enumerate()
        .map(|(i, n)| ConditionGroup {
            cg_id: i + 1,
            nominal_condition: n.to_string(),
            asr_ids: vec![format!("R{i}")],
        })
        .collect();
    let gw = Gateway::mock(MockFixture {
        concurrency_answers: vec![ConcurrencyAnswer {
            conditions: names.iter().map(|s| s.to_string()).collect(),
            answer: "(1, 3) (2, 3)".into(),
        }],
        ..Default::default()
    });
    let ccgs = form_ccgs(&cgs, &gw).map_err(|e| e.to_string())?;
    let sets: Vec<BTreeSet<usize>> = ccgs.into_iter().map(|c| c.cg_ids).collect();
    ensure!(
        sets == [BTreeSet::from([1, 3]), BTreeSet::from([2, 3])],
        "got {sets:?}"
    );
    Ok("{1,3} and {2,3}".into())
}

fn air_case(records: &[AsrRecord]) -> Result<archsel_core::sensitivity::AirScan, String> {
    let cgs = vec![ConditionGroup {
        cg_id: 1,
        nominal_condition: "at all times".into(),
        asr_ids: records.iter().map(|r| r.requirement_id.clone()).collect(),
    }];
    let ccg = ConcurrentConditionGroup {
        ccg_id: 1,
        cg_ids: BTreeSet::from([1]),
    };
    find_air_sets(
        records,
        &cgs,
        &ccg,
        &air_matrix(),
        QaCatalog::builtin(),
        RemovalOrder::InputOrder,
    )
    .map_err(|e| e.to_string())
}

fn oracle_picks(w: &QaWeights) -> Vec<String> {
    // First-listed optimum per group.
    let m = air_matrix();
    let o = oracle(&m, w);
    m.groups
        .iter()
        .zip(&o.optimal_choices)
        .map(|(g, opt)| {
            g.choices
                .iter()
                .find(|c| opt.contains(&c.name))
                .unwrap()
                .name
                .clone()
        })
        .collect()
}

fn criterion_7() -> Outcome {
    let asr = |id: &str, code: &str| AsrRecord::asr(id, [qa(code)], Some("at all times")).unwrap();

    let single = air_case(&[asr("R1", "PE"), asr("R2", "SE")])?;
    ensure!(
        single.air_sets.len() == 1,
        "{} AIR sets",
        single.air_sets.len()
    );
    let set = &single.air_sets[0];
    ensure!(
        set.removed_asr_ids == ["R1"],
        "removed {:?}",
        set.removed_asr_ids
    );
    ensure!(
        set.changes().len() == 1,
        "{} groups changed",
        set.changes().len()
    );
    let before = oracle_picks(&weights(&[("PE", 1), ("SE", 1)]));
    let after = oracle_picks(&weights(&[("PE", 0), ("SE", 1)]));
    ensure!(
        chosen(&set.before) == before && chosen(&set.after) == after,
        "diff disagrees with oracle"
    );
    ensure!(
        air_set_histogram(&single.air_sets) == BTreeMap::from([(1, 1)]),
        "histogram"
    );

    let triple = air_case(&[
        asr("R1", "PE"),
        asr("R2", "PE"),
        asr("R3", "PE"),
        asr("R4", "SE"),
    ])?;
    let sizes: Vec<usize> = triple.air_sets.iter().map(|s| s.size()).collect();
    ensure!(sizes == [3], "sizes {sizes:?}");
    Ok("one size-1 set matching the oracle diff; one size-3 set".into())
}

fn criterion_8() -> Outcome {
    const CASES: usize = 200;
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let catalog = QaCatalog::builtin();
    let columns: Vec<QualityAttribute> = catalog.codes().cloned().collect();

    for case in 0..CASES {
        // Weight monotonicity under removal.
        let records: Vec<AsrRecord> = (0..rng.random_range(1..=10))
            .map(|i| {
                let mut qas: Vec<QualityAttribute> = columns
                    .iter()
                    .filter(|_| rng.random_bool(0.3))
                    .cloned()
                    .collect();
                qas.push(columns[rng.random_range(0..columns.len())].clone());
                AsrRecord::asr(format!("R{i}"), qas, Some("c")).unwrap()
            })
            .collect();
        let cgs = vec![ConditionGroup {
            cg_id: 1,
            nominal_condition: "c".into(),
            asr_ids: records.iter().map(|r| r.requirement_id.clone()).collect(),
        }];
        let ccg = ConcurrentConditionGroup {
            ccg_id: 1,
            cg_ids: BTreeSet::from([1]),
        };
        let kept: Vec<AsrRecord> = records
            .iter()
            .filter(|_| rng.random_bool(0.5))
            .cloned()
            .collect();
        let full = compute_qa_weights(&ccg, &cgs, &records, catalog);
        let reduced = compute_qa_weights(&ccg, &cgs, &kept, catalog);
        ensure!(
            columns.iter().all(|q| reduced.get(q) <= full.get(q)),
            "monotonicity, case {case}"
        );

        // Argmax invariance under positive scaling.
        let m = random_matrix(&mut rng, 8, 5, &columns);
        let w = random_weights(&mut rng, &columns, 10);
        let k = rng.random_range(1..=20u32);
        let scaled = QaWeights::from_pairs(w.weights.iter().map(|(q, v)| (q.clone(), v * k)));
        let a = solve(&OptimizationProblem::new(m.clone(), w)).map_err(|e| e.to_string())?;
        let b = solve(&OptimizationProblem::new(m.clone(), scaled)).map_err(|e| e.to_string())?;
        ensure!(chosen(&a) == chosen(&b), "scaling, case {case}");

        // Serialization round trips.
        let json = serde_json::to_string(&a).unwrap();
        ensure!(
            serde_json::from_str::<archsel_core::domain::DecisionSet>(&json).unwrap() == a,
            "decision serde, case {case}"
        );
        let csv = archsel_core::io::matrix_to_csv(&m);
        ensure!(
            archsel_core::io::parse_matrix(std::path::Path::new("m.csv"), &csv)
                .map_err(|e| e.to_string())?
                == m,
            "matrix serde, case {case}"
        );
    }

    // Determinism and result round trips over randomized mock fixtures.
    let conditions = ["at all times", "during peak load", "after a crash"];
    for case in 0..CASES {
        let n = rng.random_range(1..=6);
        let mut fixture = ums_fixture();
        fixture.requirements.clear();
        let reqs: Vec<_> = (0..n)
            .map(|i| {
                let id = format!("Q{i}");
                let is_asr = i == 0 || rng.random_bool(0.6);
                fixture.requirements.insert(
                    id.clone(),
                    archsel_core::gateway::MockRequirement {
                        is_asr,
                        qas: if is_asr {
                            vec![["PE", "RE", "SE", "IC"][rng.random_range(0..4)].into()]
                        } else {
                            vec![]
                        },
                        condition: is_asr.then(|| conditions[rng.random_range(0..3)].into()),
                    },
                );
                archsel_core::domain::Requirement::new(&id, format!("Requirement {i}.")).unwrap()
            })
            .collect();
        let run = || {
            archsel_core::pipeline::run_pipeline_with(
                &reqs,
                &ums_matrix(),
                catalog,
                &Gateway::mock(fixture.clone()),
                &Default::default(),
            )
            .map_err(|e| e.to_string())
        };
        let (first, second) = (run()?, run()?);
        ensure!(
            first.to_json() == second.to_json(),
            "determinism, case {case}"
        );
        let back = PipelineResult::from_json(&first.to_json()).map_err(|e| e.to_string())?;
        ensure!(
            back.to_json() == first.to_json(),
            "result serde, case {case}"
        );
        let whatif = archsel_core::pipeline::run_whatif(
            &back,
            None,
            &WhatIf::ScaleQa {
                qa: "PE".into(),
                factor: 1.0,
            },
        )
        .map_err(|e| e.to_string())?;
        ensure!(
            whatif
                .outcomes
                .iter()
                .all(|o| o.diff.as_ref().unwrap().changes.is_empty()),
            "identity scaling, case {case}"
        );
    }
    Ok(format!(
        "{CASES} cases each: monotonicity, scaling, determinism, round trips"
    ))
}

fn criterion_9() -> Outcome {
    let m = case_matrix();
    ensure!(
        m.groups.len() == 7 && m.choice_count() == 17,
        "matrix shape"
    );
    let codes = ["PE", "CO", "IC", "RE", "SE", "MA", "FL", "CE"];
    let counts: [[u32; 8]; 3] = [
        [8, 7, 15, 13, 9, 16, 4, 2],
        [32, 4, 36, 6, 1, 42, 7, 3],
        [143, 71, 201, 99, 54, 245, 82, 9],
    ];
    for c in counts {
        let pairs: Vec<(&str, u32)> = codes.iter().copied().zip(c).collect();
        let problem = OptimizationProblem::new(m.clone(), weights(&pairs));
        problem.validate().map_err(|e| e.to_string())?;
        solve(&problem).map_err(|e| e.to_string())?;
    }
    Ok("case matrix loads and solves for three projects' counts (no outcome asserted)".into())
}

#[test]
fn acceptance_criteria() {
    let criteria: [Criterion; 9] = [
        (1, "end-to-end example", criterion_1),
        (2, "score reproduction", criterion_2),
        (3, "optimizer oracle equivalence", criterion_3),
        (4, "equivalence-check call accounting", criterion_4),
        (5, "runtime estimator", criterion_5),
        (6, "concurrent group formation", criterion_6),
        (7, "AIR detection", criterion_7),
        (8, "property suites", criterion_8),
        (9, "eight-attribute matrix accepted", criterion_9),
    ];
    let mut failed = Vec::new();
    for (n, name, check) in criteria {
        match check() {
            Ok(detail) => println!("PASS criterion {n}: {name}: {detail}"),
            Err(why) => {
                println!("FAIL criterion {n}: {name}: {why}");
                failed.push(n);
            }
        }
    }
    assert!(failed.is_empty(), "failed criteria {failed:?}");
}
