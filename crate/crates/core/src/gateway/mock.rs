//! Deterministic offline backend driven by a fixture file.
//!
//! The mock reads the prompt the way a model would: it recognises which of
//! the three prompts it was sent and answers from the fixture. Unmapped
//! requirements come back as non-ASR, unmapped condition pairs as `False`,
//! and conditions without a concurrency entry as singleton groups.
//! Embeddings come from the fixture when listed, otherwise from a hash of
//! the text, so equal strings always embed identically.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};

use super::{GatewayError, LlmBackend};
use crate::prompts::{self, PromptKind};

fn default_dim() -> usize {
    64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MockRequirement {
    pub is_asr: bool,
    #[serde(default)]
    pub qas: Vec<String>,
    #[serde(default)]
    pub condition: Option<String>,
}

/// A canned concurrency answer for an exact list of conditions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConcurrencyAnswer {
    pub conditions: Vec<String>,
    pub answer: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MockFixture {
    /// Extraction answers keyed by requirement id.
    #[serde(default)]
    pub requirements: BTreeMap<String, MockRequirement>,
    /// Sets of mutually equivalent conditions.
    #[serde(default)]
    pub equivalence_classes: Vec<Vec<String>>,
    #[serde(default)]
    pub equivalent_pairs: Vec<[String; 2]>,
    /// Sets of conditions that can hold together.
    #[serde(default)]
    pub concurrent_sets: Vec<Vec<String>>,
    /// Verbatim concurrency answers; take precedence over `concurrent_sets`.
    #[serde(default)]
    pub concurrency_answers: Vec<ConcurrencyAnswer>,
    #[serde(default)]
    pub embeddings: BTreeMap<String, Vec<f64>>,
    /// Dimension of hash-derived embeddings.
    #[serde(default = "default_dim")]
    pub embedding_dim: usize,
}

impl Default for MockFixture {
    fn default() -> Self {
        MockFixture {
            requirements: BTreeMap::new(),
            equivalence_classes: Vec::new(),
            equivalent_pairs: Vec::new(),
            concurrent_sets: Vec::new(),
            concurrency_answers: Vec::new(),
            embeddings: BTreeMap::new(),
            embedding_dim: default_dim(),
        }
    }
}

fn norm(text: &str) -> String {
    text.split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

/// Deterministic pseudo-random unit-range vector for `text`.
pub fn hash_embedding(text: &str, dim: usize) -> Vec<f64> {
    (0..dim)
        .map(|i| {
            let digest = Sha256::digest(format!("{i}\u{1f}{text}").as_bytes());
            let mut bytes = [0u8; 8];
            bytes.copy_from_slice(&digest[..8]);
            let x = u64::from_le_bytes(bytes) as f64 / u64::MAX as f64;
            2.0 * x - 1.0
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct MockBackend {
    fixture: MockFixture,
}

impl MockBackend {
    pub fn new(fixture: MockFixture) -> Self {
        MockBackend { fixture }
    }

    pub fn fixture(&self) -> &MockFixture {
        &self.fixture
    }

    fn extraction_answer(&self, prompt: &str) -> String {
        let items: Vec<_> = prompts::requirement_ids_in(prompt)
            .into_iter()
            .map(|id| match self.fixture.requirements.get(&id) {
                Some(r) => json!({
                    "id": id,
                    "is_asr": r.is_asr,
                    "qas": r.qas,
                    "condition": r.condition,
                }),
                None => json!({"id": id, "is_asr": false, "qas": [], "condition": null}),
            })
            .collect();
        serde_json::to_string_pretty(&items).expect("json serializes")
    }

    pub fn equivalent(&self, a: &str, b: &str) -> bool {
        let (a, b) = (norm(a), norm(b));
        if a == b {
            return true;
        }
        let in_class = self.fixture.equivalence_classes.iter().any(|class| {
            let members: Vec<String> = class.iter().map(|c| norm(c)).collect();
            members.contains(&a) && members.contains(&b)
        });
        in_class
            || self.fixture.equivalent_pairs.iter().any(|[x, y]| {
                let (x, y) = (norm(x), norm(y));
                (x == a && y == b) || (x == b && y == a)
            })
    }

    fn concurrency_answer(&self, prompt: &str) -> String {
        let conditions = prompts::conditions_in_concurrency(prompt);
        let normalized: Vec<String> = conditions.iter().map(|c| norm(c)).collect();
        if let Some(canned) = self
            .fixture
            .concurrency_answers
            .iter()
            .find(|a| a.conditions.iter().map(|c| norm(c)).collect::<Vec<_>>() == normalized)
        {
            return canned.answer.clone();
        }
        let mut groups: Vec<Vec<usize>> = Vec::new();
        let mut covered = vec![false; normalized.len()];
        for set in &self.fixture.concurrent_sets {
            let members: Vec<String> = set.iter().map(|c| norm(c)).collect();
            let ids: Vec<usize> = normalized
                .iter()
                .enumerate()
                .filter(|(_, c)| members.contains(c))
                .map(|(i, _)| i)
                .collect();
            if ids.is_empty() || groups.contains(&ids) {
                continue;
            }
            for &i in &ids {
                covered[i] = true;
            }
            groups.push(ids);
        }
        for (i, c) in covered.iter().enumerate() {
            if !c {
                groups.push(vec![i]);
            }
        }
        groups
            .iter()
            .map(|g| {
                let ids: Vec<String> = g.iter().map(|i| (i + 1).to_string()).collect();
                format!("({})", ids.join(", "))
            })
            .collect::<Vec<_>>()
            .join(" ")
    }

    fn embedding_for(&self, text: &str) -> Vec<f64> {
        if let Some(v) = self.fixture.embeddings.get(text) {
            return v.clone();
        }
        let key = norm(text);
        self.fixture
            .embeddings
            .iter()
            .find(|(k, _)| norm(k) == key)
            .map(|(_, v)| v.clone())
            .unwrap_or_else(|| hash_embedding(&key, self.fixture.embedding_dim))
    }
}

impl LlmBackend for MockBackend {
    fn complete(
        &self,
        _model: &str,
        prompt: &str,
        _temperature: f64,
    ) -> Result<String, GatewayError> {
        match prompts::classify(prompt) {
            Some(PromptKind::Extraction) => Ok(self.extraction_answer(prompt)),
            Some(PromptKind::Equivalence) => {
                let (a, b) = prompts::conditions_in_equivalence(prompt).ok_or_else(|| {
                    GatewayError::InvalidRequest("equivalence prompt without two conditions".into())
                })?;
                Ok(if self.equivalent(&a, &b) {
                    "True"
                } else {
                    "False"
                }
                .to_string())
            }
            Some(PromptKind::Concurrency) => Ok(self.concurrency_answer(prompt)),
            None => Err(GatewayError::InvalidRequest(
                "mock backend does not recognise this prompt".into(),
            )),
        }
    }

    fn embed(&self, _model: &str, texts: &[String]) -> Result<Vec<Vec<f64>>, GatewayError> {
        Ok(texts.iter().map(|t| self.embedding_for(t)).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{QaCatalog, Requirement};

    fn fixture() -> MockFixture {
        serde_json::from_value(json!({
            "requirements": {
                "R1": {"is_asr": true, "qas": ["Performance Efficiency"],
                       "condition": "under normal operating conditions"}
            },
            "equivalence_classes": [["during a disaster", "in case of a disaster"]],
            "equivalent_pairs": [["A", "B"]],
            "concurrent_sets": [["NC", "UAC"], ["DR", "UAC"]],
            "embeddings": {"x": [1.0, 0.0]}
        }))
        .unwrap()
    }

    #[test]
    fn answers_extraction_prompts() {
        let m = MockBackend::new(fixture());
        let reqs = vec![
            Requirement::new("R1", "a").unwrap(),
            Requirement::new("R4", "b").unwrap(),
        ];
        let p = prompts::extraction_prompt(&reqs, QaCatalog::builtin());
        let v: serde_json::Value =
            serde_json::from_str(&m.complete("m", &p, 0.0).unwrap()).unwrap();
        assert_eq!(v[0]["is_asr"], true);
        assert_eq!(v[0]["condition"], "under normal operating conditions");
        assert_eq!(v[1]["id"], "R4");
        assert_eq!(v[1]["is_asr"], false);
    }

    #[test]
    fn answers_equivalence_prompts() {
        let m = MockBackend::new(fixture());
        let ask = |a: &str, b: &str| {
            m.complete("m", &prompts::equivalence_prompt(a, b), 0.0)
                .unwrap()
        };
        assert_eq!(ask("During a disaster", "in case of a disaster"), "True");
        assert_eq!(ask("b", "a"), "True");
        assert_eq!(ask("normal", "failure"), "False");
    }

    #[test]
    fn answers_concurrency_prompts() {
        let m = MockBackend::new(fixture());
        let ask = |c: &[&str]| {
            m.complete("m", &prompts::concurrency_prompt(c), 0.0)
                .unwrap()
        };
        assert_eq!(ask(&["NC", "DR", "UAC"]), "(1, 3) (2, 3)");
        assert_eq!(ask(&["NC", "Other"]), "(1) (2)");

        let mut f = fixture();
        f.concurrency_answers.push(ConcurrencyAnswer {
            conditions: vec!["NC".into(), "Other".into()],
            answer: "(1, 2)".into(),
        });
        let m = MockBackend::new(f);
        assert_eq!(
            m.complete("m", &prompts::concurrency_prompt(&["nc", "other"]), 0.0)
                .unwrap(),
            "(1, 2)"
        );
    }

    #[test]
    fn embeddings_are_deterministic() {
        let m = MockBackend::new(fixture());
        let v = m
            .embed("m", &["a".into(), "a".into(), "x".into(), "b".into()])
            .unwrap();
        assert_eq!(v[0], v[1]);
        assert_eq!(v[2], vec![1.0, 0.0]);
        assert_ne!(v[0], v[3]);
        assert_eq!(v[0].len(), 64);
        assert!(v[0].iter().all(|x| (-1.0..=1.0).contains(x)));
    }

    #[test]
    fn unknown_prompt_is_an_error() {
        let m = MockBackend::new(MockFixture::default());
        assert!(m.complete("m", "what is the weather", 0.0).is_err());
    }
}
