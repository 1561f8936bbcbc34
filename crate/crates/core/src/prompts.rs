//! Prompt templates for the three LLM-backed steps, plus the inverse
//! parsers the mock backend uses to read them back.

use regex::Regex;
use std::sync::OnceLock;

use crate::domain::{QaCatalog, Requirement};

/// Marker phrases that identify each prompt.
pub const EXTRACTION_MARKER: &str = "Whether it is architecturally significant";
pub const EQUIVALENCE_MARKER: &str = "mean the same thing";
pub const CONCURRENCY_MARKER: &str = "can be true simultaneously";

const REQUIREMENTS_HEADER: &str = "Requirements:";
const CONDITIONS_HEADER: &str = "Conditions:";
const EQUIVALENCE_LEAD: &str = "If the following conditions ";

/// Which of the three prompts a completion prompt is.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PromptKind {
    Extraction,
    Equivalence,
    Concurrency,
}

pub fn classify(prompt: &str) -> Option<PromptKind> {
    if prompt.contains(CONCURRENCY_MARKER) {
        Some(PromptKind::Concurrency)
    } else if prompt.contains(EQUIVALENCE_MARKER) {
        Some(PromptKind::Equivalence)
    } else if prompt.contains(EXTRACTION_MARKER) {
        Some(PromptKind::Extraction)
    } else {
        None
    }
}

fn one_line(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Requirement-parsing prompt over one chunk of requirements.
pub fn extraction_prompt(chunk: &[Requirement], catalog: &QaCatalog) -> String {
    let mut out = String::new();
    out.push_str(
        "I have provided a set of software requirements. \
         I want you to extract the following information:\n",
    );
    out.push_str(&format!(
        "- {EXTRACTION_MARKER}. A requirement is architecturally significant if it satisfies \
         both of these conditions: 1) It explicitly states a key decision regarding high-level \
         software architecture. 2) It specifies one or more quality attributes regarding \
         software architecture:\n"
    ));
    for def in catalog.definitions() {
        out.push_str(&format!(
            "  - {} ({}): {}\n",
            def.name,
            def.code,
            one_line(&def.description)
        ));
    }
    out.push_str("- Find the QAs mentioned in the list above.\n");
    out.push_str("- The condition that should be true when the QAs are expected.\n\n");
    out.push_str(REQUIREMENTS_HEADER);
    out.push('\n');
    for (i, req) in chunk.iter().enumerate() {
        out.push_str(&format!(
            "{}. [{}] {}\n",
            i + 1,
            req.id,
            one_line(&req.text)
        ));
    }
    out.push_str(
        "\nRespond with only a JSON array containing one object per requirement, in the order \
         given, shaped as {\"id\": \"<requirement id>\", \"is_asr\": true or false, \"qas\": \
         [\"<quality attribute name>\", ...], \"condition\": \"<condition text>\" or null}. \
         Use the quality attribute names from the list above. For requirements that are not \
         architecturally significant use an empty \"qas\" list and a null condition. If an \
         architecturally significant requirement states no condition, use null.",
    );
    out
}

/// Pairwise equivalence prompt; answer is `True` or `False`.
pub fn equivalence_prompt(cond_a: &str, cond_b: &str) -> String {
    let list = serde_json::to_string(&[one_line(cond_a), one_line(cond_b)])
        .expect("string list serializes");
    format!(
        "{EQUIVALENCE_LEAD}{list} {EQUIVALENCE_MARKER}, one can infer another or be considered \
         a subset of another, return 'True.' Otherwise, return 'False.' \
         Answer with the single word True or False."
    )
}

/// Concurrency prompt over numbered nominal conditions.
pub fn concurrency_prompt<S: AsRef<str>>(conditions: &[S]) -> String {
    let mut out = format!(
        "Organize the provided set of conditions into groups where conditions in the same group \
         {CONCURRENCY_MARKER}. Once grouped, simply return the IDs of the conditions in each \
         group enclosed in parentheses, for example (1, 2) (3).\n\n{CONDITIONS_HEADER}\n"
    );
    for (i, cond) in conditions.iter().enumerate() {
        out.push_str(&format!("{}) {}\n", i + 1, one_line(cond.as_ref())));
    }
    out
}

/// Requirement ids listed in an extraction prompt, in order.
pub fn requirement_ids_in(prompt: &str) -> Vec<String> {
    static LINE: OnceLock<Regex> = OnceLock::new();
    let re = LINE.get_or_init(|| Regex::new(r"^\d+\. \[(.+?)\] ").expect("valid regex"));
    let Some((_, body)) = prompt.split_once(REQUIREMENTS_HEADER) else {
        return Vec::new();
    };
    body.lines()
        .filter_map(|l| re.captures(l).map(|c| c[1].to_string()))
        .collect()
}

/// The two conditions of an equivalence prompt.
pub fn conditions_in_equivalence(prompt: &str) -> Option<(String, String)> {
    let start = prompt.find(EQUIVALENCE_LEAD)? + EQUIVALENCE_LEAD.len();
    let mut stream =
        serde_json::Deserializer::from_str(&prompt[start..]).into_iter::<Vec<String>>();
    let list = stream.next()?.ok()?;
    match <[String; 2]>::try_from(list) {
        Ok([a, b]) => Some((a, b)),
        Err(_) => None,
    }
}

/// The numbered conditions of a concurrency prompt, in order.
pub fn conditions_in_concurrency(prompt: &str) -> Vec<String> {
    static LINE: OnceLock<Regex> = OnceLock::new();
    let re = LINE.get_or_init(|| Regex::new(r"^(\d+)\) (.*)$").expect("valid regex"));
    let Some((_, body)) = prompt.split_once(CONDITIONS_HEADER) else {
        return Vec::new();
    };
    body.lines()
        .filter_map(|l| re.captures(l).map(|c| c[2].trim().to_string()))
        .collect()
}
