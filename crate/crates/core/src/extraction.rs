//! Step 1: classify requirements as ASRs and extract implied quality
//! attributes and conditions.

use std::collections::{BTreeSet, HashMap, HashSet};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::domain::{AsrRecord, QaCatalog, QaDefinition, Requirement};
use crate::gateway::{extract_json, Gateway, GatewayError, ResponseFormat};
use crate::prompts;

#[derive(Debug, Error)]
pub enum ExtractionError {
    #[error("no requirements to extract from")]
    EmptyInput,
    #[error("requirement chunk is empty")]
    EmptyChunk,
    #[error("chunk of {size} requirements exceeds the limit of {max}")]
    ChunkTooLarge { size: usize, max: usize },
    #[error("unparseable extraction response: {0}")]
    UnparseableResponse(String),
    #[error("response mentions unexpected requirement ids: {0:?}")]
    IdMismatch(Vec<String>),
    #[error("requirement {requirement}: unknown quality attribute label {label:?}")]
    UnknownQaLabel { requirement: String, label: String },
    #[error("chunk {chunk} (requirements {first}..{last}): {source}")]
    Gateway {
        chunk: usize,
        first: String,
        last: String,
        #[source]
        source: GatewayError,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExtractionConfig {
    pub chunk_size: usize,
    /// Unknown QA labels fail the run instead of being dropped.
    pub strict: bool,
}

impl Default for ExtractionConfig {
    fn default() -> Self {
        ExtractionConfig {
            chunk_size: 20,
            strict: false,
        }
    }
}

/// Requirements with their aligned classification records.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractionBatch {
    pub requirements: Vec<Requirement>,
    pub records: Vec<AsrRecord>,
    pub qa_catalog: Vec<QaDefinition>,
}

impl ExtractionBatch {
    pub fn asrs(&self) -> impl Iterator<Item = &AsrRecord> {
        self.records.iter().filter(|r| r.is_asr)
    }

    pub fn record(&self, id: &str) -> Option<&AsrRecord> {
        self.records.iter().find(|r| r.requirement_id == id)
    }
}

pub fn build_prompt1(
    chunk: &[Requirement],
    catalog: &QaCatalog,
    max_chunk: usize,
) -> Result<String, ExtractionError> {
    if chunk.is_empty() {
        return Err(ExtractionError::EmptyChunk);
    }
    if chunk.len() > max_chunk {
        return Err(ExtractionError::ChunkTooLarge {
            size: chunk.len(),
            max: max_chunk,
        });
    }
    Ok(prompts::extraction_prompt(chunk, catalog))
}

fn as_bool(v: &Value) -> Option<bool> {
    match v {
        Value::Bool(b) => Some(*b),
        Value::String(s) => match s.trim().to_ascii_lowercase().as_str() {
            "true" | "yes" | "y" => Some(true),
            "false" | "no" | "n" => Some(false),
            _ => None,
        },
        _ => None,
    }
}

fn qa_labels(v: Option<&Value>) -> Vec<String> {
    match v {
        Some(Value::Array(items)) => items
            .iter()
            .filter_map(|i| i.as_str().map(str::to_string))
            .collect(),
        Some(Value::String(s)) => s
            .split([',', ';'])
            .map(|p| p.trim().to_string())
            .filter(|p| !p.is_empty())
            .collect(),
        _ => Vec::new(),
    }
}

fn condition_of(v: Option<&Value>) -> Option<String> {
    let text = v?.as_str()?.trim();
    let placeholder = ["", "n/a", "na", "none", "null"].contains(&text.to_lowercase().as_str());
    (!placeholder).then(|| text.to_string())
}

fn id_of(v: &Value) -> Option<String> {
    match v.get("id")? {
        Value::String(s) => Some(s.trim().to_string()),
        Value::Number(n) => Some(n.to_string()),
        _ => None,
    }
}

/// Locates the record array: either the top-level value or the first array
/// field of a wrapping object.
fn record_items(value: Value) -> Option<Vec<Value>> {
    match value {
        Value::Array(items) => Some(items),
        Value::Object(map) => {
            if map.contains_key("id") {
                return Some(vec![Value::Object(map)]);
            }
            map.into_iter().find_map(|(_, v)| match v {
                Value::Array(items) => Some(items),
                _ => None,
            })
        }
        _ => None,
    }
}

/// Parses an extraction answer into one record per expected id, in
/// `expected_ids` order.
pub fn parse_prompt1_response(
    response: &str,
    expected_ids: &[&str],
    catalog: &QaCatalog,
    strict: bool,
) -> Result<Vec<AsrRecord>, ExtractionError> {
    let value =
        extract_json(response).map_err(|e| ExtractionError::UnparseableResponse(e.to_string()))?;
    let items = record_items(value).ok_or_else(|| {
        ExtractionError::UnparseableResponse("no array of requirement objects".into())
    })?;

    let expected: HashSet<&str> = expected_ids.iter().copied().collect();
    let mut by_id: HashMap<String, Value> = HashMap::new();
    let mut unexpected = Vec::new();
    for item in items {
        let Some(id) = id_of(&item) else {
            return Err(ExtractionError::UnparseableResponse(format!(
                "entry without an id: {item}"
            )));
        };
        if !expected.contains(id.as_str()) {
            unexpected.push(id);
            continue;
        }
        if by_id.contains_key(&id) {
            log::warn!("requirement {id} appears twice in the response; keeping the first");
            continue;
        }
        by_id.insert(id, item);
    }
    if !unexpected.is_empty() {
        return Err(ExtractionError::IdMismatch(unexpected));
    }

    let mut records = Vec::with_capacity(expected_ids.len());
    for &id in expected_ids {
        let Some(item) = by_id.get(id) else {
            log::warn!("requirement {id} missing from the response; treating as non-ASR");
            records.push(AsrRecord::non_asr(id));
            continue;
        };
        let is_asr = item
            .get("is_asr")
            .or_else(|| item.get("architecturally_significant"))
            .and_then(as_bool)
            .unwrap_or(false);
        if !is_asr {
            records.push(AsrRecord::non_asr(id));
            continue;
        }
        let mut qas = BTreeSet::new();
        for label in qa_labels(item.get("qas")) {
            match catalog.resolve(&label) {
                Ok(qa) => {
                    qas.insert(qa);
                }
                Err(_) if strict => {
                    return Err(ExtractionError::UnknownQaLabel {
                        requirement: id.to_string(),
                        label,
                    })
                }
                Err(_) => log::warn!("requirement {id}: dropping unknown QA label {label:?}"),
            }
        }
        let condition = condition_of(item.get("condition"));
        match AsrRecord::asr(id, qas, condition.as_deref()) {
            Some(rec) => records.push(rec),
            None => {
                log::warn!("requirement {id} marked ASR without a known QA; demoted to non-ASR");
                records.push(AsrRecord::non_asr(id));
            }
        }
    }
    Ok(records)
}

/// Runs the extraction prompt over `requirements` in chunks and returns the
/// records in input order.
pub fn extract_asrs(
    requirements: &[Requirement],
    catalog: &QaCatalog,
    gateway: &Gateway,
    config: &ExtractionConfig,
) -> Result<ExtractionBatch, ExtractionError> {
    if requirements.is_empty() {
        return Err(ExtractionError::EmptyInput);
    }
    let chunk_size = config.chunk_size.max(1);
    let chunks: Vec<(usize, &[Requirement])> =
        requirements.chunks(chunk_size).enumerate().collect();
    let results = gateway.map_bounded(&chunks, |&(index, chunk)| {
        let prompt = build_prompt1(chunk, catalog, chunk_size)?;
        let request = gateway.completion_request(prompt, ResponseFormat::StructuredJson);
        let ids: Vec<&str> = chunk.iter().map(|r| r.id.as_str()).collect();
        let check = |text: &str| {
            parse_prompt1_response(text, &ids, catalog, config.strict)
                .map(|_| ())
                .map_err(|e| e.to_string())
        };
        let text = gateway
            .complete_checked(&request, &check)
            .map_err(|source| ExtractionError::Gateway {
                chunk: index + 1,
                first: chunk[0].id.clone(),
                last: chunk[chunk.len() - 1].id.clone(),
                source,
            })?;
        parse_prompt1_response(&text, &ids, catalog, config.strict)
    });

    let mut records = Vec::with_capacity(requirements.len());
    for result in results {
        records.extend(result?);
    }
    Ok(ExtractionBatch {
        requirements: requirements.to_vec(),
        records,
        qa_catalog: catalog.definitions().to_vec(),
    })
}
