//! Plain-text rendering of runs, what-if analyses and runtime estimates.
//! Rendering is a pure function of its input, so a result file re-renders
//! to the same report.

use std::collections::BTreeSet;
use std::fmt::Write;
use std::time::Duration;

use crate::domain::{sort_qas, DecisionSet, QaCatalog, QaWeights, QualityAttribute};
use crate::optimizer::TieBreak;
use crate::pipeline::{PipelineResult, WhatIf, WhatIfOutcome, WhatIfReport};
use crate::sensitivity::{AirScan, RuntimeEstimate};

/// Renders rows as a boxed ASCII table.
pub fn table(headers: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = headers.iter().map(|h| h.chars().count()).collect();
    for row in rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let rule: String = widths
        .iter()
        .map(|w| format!("+{}", "-".repeat(w + 2)))
        .collect::<String>()
        + "+\n";
    let line = |cells: &mut dyn Iterator<Item = &str>| {
        let mut out = String::new();
        for (cell, w) in cells.zip(&widths) {
            let pad = w - cell.chars().count();
            let _ = write!(out, "| {cell}{} ", " ".repeat(pad));
        }
        out + "|\n"
    };
    let mut out = rule.clone();
    out += &line(&mut headers.iter().copied());
    out += &rule;
    for row in rows {
        out += &line(&mut row.iter().map(String::as_str));
    }
    if !rows.is_empty() {
        out += &rule;
    }
    out
}

/// `1234567` as `1,234,567`.
pub fn thousands(n: u64) -> String {
    let digits = n.to_string();
    let mut out = String::new();
    for (i, c) in digits.chars().enumerate() {
        if i > 0 && (digits.len() - i).is_multiple_of(3) {
            out.push(',');
        }
        out.push(c);
    }
    out
}

pub fn format_duration(d: Duration) -> String {
    let s = d.as_secs_f64();
    if s < 60.0 {
        format!("{s:.1} s")
    } else if s < 3600.0 {
        format!("{:.1} min", s / 60.0)
    } else if s < 100.0 * 3600.0 {
        format!("{:.1} h", s / 3600.0)
    } else {
        format!("{:.1} days", s / 86400.0)
    }
}

fn qa_name(catalog: &QaCatalog, qa: &QualityAttribute) -> String {
    catalog
        .definition(qa)
        .map(|d| format!("{} ({})", d.name, qa))
        .unwrap_or_else(|| qa.to_string())
}

fn decision_cell(decisions: &DecisionSet, group: &str, tie_break: TieBreak) -> String {
    match decisions.decision(group) {
        None => "-".into(),
        Some(d) if d.tie_set.len() > 1 => match tie_break {
            TieBreak::FirstListed => format!("{} *", d.chosen_choice),
            TieBreak::ReportAll => d.tie_set.join(" / "),
        },
        Some(d) => d.chosen_choice.clone(),
    }
}

fn weights_line(weights: &QaWeights) -> String {
    let parts: Vec<String> = weights
        .nonzero()
        .into_iter()
        .map(|(qa, w)| format!("{qa} {w}"))
        .collect();
    if parts.is_empty() {
        "(none)".into()
    } else {
        parts.join(", ")
    }
}

pub fn render_report(result: &PipelineResult) -> String {
    let catalog = result.catalog();
    let mut out = String::new();
    if let Some(failed) = &result.failed_at {
        let _ = writeln!(
            out,
            "RUN INCOMPLETE: stopped at {}: {}\n",
            failed.step, failed.message
        );
    }

    if let Some(extraction) = &result.extraction {
        let asrs: Vec<&str> = extraction
            .asrs()
            .map(|r| r.requirement_id.as_str())
            .collect();
        let _ = writeln!(out, "Requirements: {}", extraction.requirements.len());
        let _ = writeln!(out, "ASRs: {} ({})\n", asrs.len(), asrs.join(", "));
        let rows: Vec<Vec<String>> = extraction
            .asrs()
            .map(|r| {
                vec![
                    r.requirement_id.clone(),
                    sort_qas(r.qas.iter())
                        .iter()
                        .map(ToString::to_string)
                        .collect::<Vec<_>>()
                        .join(", "),
                    r.condition_text().to_string(),
                ]
            })
            .collect();
        out += "Architecturally significant requirements\n";
        out += &table(&["ID", "QAs", "Condition"], &rows);
        out += "\n";
    }

    if !result.cgs.is_empty() {
        let rows: Vec<Vec<String>> = result
            .cgs
            .iter()
            .map(|g| {
                vec![
                    format!("CG{}", g.cg_id),
                    g.nominal_condition.clone(),
                    g.asr_ids.join(", "),
                ]
            })
            .collect();
        out += "Condition groups\n";
        out += &table(&["CG", "Nominal condition", "ASRs"], &rows);
        out += "\n";
    }

    if !result.ccgs.is_empty() {
        out += "Concurrent condition groups\n";
        for ccg in &result.ccgs {
            let cgs: Vec<String> = ccg.cg_ids.iter().map(|id| format!("CG{id}")).collect();
            let _ = writeln!(out, "  CCG{}: {}", ccg.ccg_id, cgs.join(", "));
        }
        out += "\n";
    }

    if result.results.is_empty() {
        return out;
    }
    let ccg_headers: Vec<String> = result
        .results
        .iter()
        .map(|r| format!("CCG{}", r.ccg.ccg_id))
        .collect();

    // Attributes worth a row: matrix columns plus anything weighted.
    let shown: BTreeSet<QualityAttribute> = result
        .matrix
        .qa_columns()
        .into_iter()
        .chain(
            result
                .results
                .iter()
                .flat_map(|r| r.weights.nonzero().into_iter().map(|(qa, _)| qa)),
        )
        .collect();
    let shown = sort_qas(shown.iter());

    let mut headers = vec!["Quality attribute"];
    headers.extend(ccg_headers.iter().map(String::as_str));
    let rows: Vec<Vec<String>> = shown
        .iter()
        .map(|qa| {
            let mut row = vec![qa_name(&catalog, qa)];
            row.extend(result.results.iter().map(|r| r.weights.get(qa).to_string()));
            row
        })
        .collect();
    out += "Attribute weights (ASR counts)\n";
    out += &table(&headers, &rows);
    out += "\n";

    let mut headers = vec!["Choice Group"];
    headers.extend(ccg_headers.iter().map(String::as_str));
    let rows: Vec<Vec<String>> = result
        .matrix
        .groups
        .iter()
        .map(|g| {
            let mut row = vec![g.name.clone()];
            row.extend(
                result
                    .results
                    .iter()
                    .map(|r| decision_cell(&r.decisions, &g.name, result.tie_break)),
            );
            row
        })
        .collect();
    out += "Choices\n";
    out += &table(&headers, &rows);
    let mut ties = Vec::new();
    for r in &result.results {
        for d in r.decisions.decisions.iter().filter(|d| d.tie_set.len() > 1) {
            ties.push(format!(
                "  CCG{} {}: {}",
                r.ccg.ccg_id,
                d.group,
                d.tie_set.join(", ")
            ));
        }
    }
    if !ties.is_empty() {
        out += "* tied; the first-listed choice is selected. Tie sets:\n";
        out += &ties.join("\n");
        out += "\n";
    }
    let objectives: Vec<String> = result
        .results
        .iter()
        .map(|r| format!("CCG{} {}", r.ccg.ccg_id, r.decisions.objective_value))
        .collect();
    let _ = writeln!(out, "Objective: {}\n", objectives.join(", "));

    let mut headers = vec!["Quality attribute"];
    headers.extend(ccg_headers.iter().map(String::as_str));
    let rows: Vec<Vec<String>> = shown
        .iter()
        .map(|qa| {
            let mut row = vec![qa_name(&catalog, qa)];
            row.extend(result.results.iter().map(|r| match r.scores.get(qa) {
                Some(s) => format!("{} (raw {})", s.weighted_score, s.raw_score),
                None => "0 (raw 0)".into(),
            }));
            row
        })
        .collect();
    out += "Satisfaction scores (weighted, raw in parentheses)\n";
    out += &table(&headers, &rows);
    out += "\n";

    out += "Traceability\n";
    for r in &result.results {
        let _ = writeln!(out, "  CCG{}", r.ccg.ccg_id);
        for c in &r.trace.choices {
            if c.support.is_empty() {
                let _ = writeln!(out, "    {} / {}: no weighted support", c.group, c.choice);
                continue;
            }
            let parts: Vec<String> = c
                .support
                .iter()
                .map(|s| format!("{} (weight {}): {}", s.qa, s.weight, s.asr_ids.join(", ")))
                .collect();
            let _ = writeln!(out, "    {} / {}: {}", c.group, c.choice, parts.join("; "));
        }
        for (asr, choices) in &r.trace.asr_influence {
            let _ = writeln!(out, "    {asr} -> {}", choices.join(", "));
        }
    }
    out
}

fn render_air_scan(out: &mut String, scan: &AirScan) {
    let counts: Vec<String> = scan
        .sensitivity
        .ranking
        .iter()
        .map(|qa| format!("{qa} {}", scan.sensitivity.change_count(qa).unwrap_or(0)))
        .collect();
    let _ = writeln!(
        out,
        "  Decision changes under weight deviations: {}",
        counts.join(", ")
    );
    let _ = writeln!(out, "  Most sensitive attribute: {}", scan.sensitive_qa);
    let _ = writeln!(
        out,
        "  Removal order ({}): {}",
        match scan.removal_order {
            crate::sensitivity::RemovalOrder::InputOrder => "input order",
            crate::sensitivity::RemovalOrder::BySensitiveQa => "fewest attributes first",
        },
        scan.removal_sequence.join(", ")
    );
    if scan.air_sets.is_empty() {
        out.push_str("  No AIR sets: no removal changed a decision.\n");
    }
    for (i, set) in scan.air_sets.iter().enumerate() {
        let _ = writeln!(
            out,
            "  AIR set {} (size {}): {}",
            i + 1,
            set.size(),
            set.removed_asr_ids.join(", ")
        );
        for c in set.changes() {
            let _ = writeln!(out, "    {}: {} -> {}", c.group, c.before, c.after);
        }
    }
}

fn render_outcome(out: &mut String, outcome: &WhatIfOutcome) {
    let _ = writeln!(out, "CCG{}", outcome.ccg_id);
    if let Some(diff) = &outcome.diff {
        let _ = writeln!(
            out,
            "  Weights before: {}",
            weights_line(&outcome.baseline_weights)
        );
        let _ = writeln!(out, "  Weights after:  {}", weights_line(&diff.weights));
        let _ = writeln!(
            out,
            "  Objective: {} -> {}",
            outcome.baseline.objective_value, diff.decisions.objective_value
        );
        if diff.changes.is_empty() {
            out.push_str("  No decision changes.\n");
        }
        for c in &diff.changes {
            let _ = writeln!(out, "  {}: {} -> {}", c.group, c.before, c.after);
        }
    }
    if let Some(scan) = &outcome.air_scan {
        render_air_scan(out, scan);
        let hist: Vec<String> = outcome
            .histogram
            .iter()
            .map(|(size, count)| format!("size {size}: {count}"))
            .collect();
        if !hist.is_empty() {
            let _ = writeln!(out, "  AIR set sizes: {}", hist.join(", "));
        }
    }
}

pub fn render_whatif(report: &WhatIfReport) -> String {
    let mut out = format!("What-if: {}\n", report.analysis);
    if let WhatIf::AirScan { .. } = report.analysis {
        out.push_str("AIR sets are ASRs whose cumulative removal changed a decision.\n");
    }
    for outcome in &report.outcomes {
        out.push('\n');
        render_outcome(&mut out, outcome);
    }
    out
}

pub fn render_estimates(estimates: &[RuntimeEstimate]) -> String {
    let rows: Vec<Vec<String>> = estimates
        .iter()
        .map(|e| {
            vec![
                thousands(e.n),
                thousands(e.worst_iterations),
                thousands(e.best_iterations),
                format_duration(e.best_time),
                format_duration(e.worst_time),
            ]
        })
        .collect();
    let latency = estimates
        .first()
        .map(|e| format!("{:.3} s", e.per_call_latency.as_secs_f64()))
        .unwrap_or_default();
    format!(
        "Condition-grouping cost at {latency} per LLM call\n{}",
        table(
            &[
                "Requirements",
                "Iterations (worst)",
                "Iterations (best)",
                "Best case",
                "Worst case"
            ],
            &rows
        )
    )
}
