//! Core data model shared by every pipeline step.
//!
//! Everything here is plain data: requirements and their classification,
//! the quality-attribute catalog, condition groups, the decision matrix and
//! the solver's outputs. Values are immutable once built and `Send + Sync`.

use std::borrow::Cow;
use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::sync::OnceLock;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Condition assigned to an ASR that states none.
pub const DEFAULT_CONDITION: &str = "under any circumstances";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DomainError {
    #[error("unknown quality attribute label {0:?}")]
    UnknownQaLabel(String),
    #[error("invalid quality attribute code {0:?}")]
    InvalidQaCode(String),
    #[error("invalid requirement: {0}")]
    InvalidRequirement(String),
}

/// A quality attribute, identified by its short code (`PE`, `RE`, ...).
///
/// The eight built-in attributes are available as associated constants.
/// Catalogs loaded from configuration may introduce further codes.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct QualityAttribute(Cow<'static, str>);

impl QualityAttribute {
    pub const PE: QualityAttribute = QualityAttribute(Cow::Borrowed("PE"));
    pub const CO: QualityAttribute = QualityAttribute(Cow::Borrowed("CO"));
    pub const IC: QualityAttribute = QualityAttribute(Cow::Borrowed("IC"));
    pub const RE: QualityAttribute = QualityAttribute(Cow::Borrowed("RE"));
    pub const SE: QualityAttribute = QualityAttribute(Cow::Borrowed("SE"));
    pub const MA: QualityAttribute = QualityAttribute(Cow::Borrowed("MA"));
    pub const FL: QualityAttribute = QualityAttribute(Cow::Borrowed("FL"));
    pub const CE: QualityAttribute = QualityAttribute(Cow::Borrowed("CE"));

    /// The built-in attributes in catalog order.
    pub const BUILTIN: [QualityAttribute; 8] = [
        Self::PE,
        Self::CO,
        Self::IC,
        Self::RE,
        Self::SE,
        Self::MA,
        Self::FL,
        Self::CE,
    ];

    /// Builds an attribute from a code. Codes are upper-cased ASCII
    /// alphanumerics (plus `_`), 1 to 16 characters.
    pub fn new(code: &str) -> Result<Self, DomainError> {
        let code = code.trim().to_ascii_uppercase();
        let ok = !code.is_empty()
            && code.len() <= 16
            && code.chars().all(|c| c.is_ascii_alphanumeric() || c == '_');
        if !ok {
            return Err(DomainError::InvalidQaCode(code));
        }
        if let Some(builtin) = Self::BUILTIN.iter().find(|qa| qa.code() == code) {
            return Ok(builtin.clone());
        }
        Ok(QualityAttribute(Cow::Owned(code)))
    }

    pub fn code(&self) -> &str {
        &self.0
    }

    /// Sort key that places built-in attributes in catalog order and any
    /// extension codes after them alphabetically.
    pub fn catalog_rank(&self) -> (usize, &str) {
        let pos = Self::BUILTIN
            .iter()
            .position(|qa| qa == self)
            .unwrap_or(Self::BUILTIN.len());
        (pos, self.code())
    }
}

impl fmt::Display for QualityAttribute {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl fmt::Debug for QualityAttribute {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl Serialize for QualityAttribute {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.code())
    }
}

impl<'de> Deserialize<'de> for QualityAttribute {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let raw = String::deserialize(d)?;
        QualityAttribute::new(&raw).map_err(serde::de::Error::custom)
    }
}

/// Sorts attributes into catalog order.
pub fn sort_qas<'a, I>(qas: I) -> Vec<QualityAttribute>
where
    I: IntoIterator<Item = &'a QualityAttribute>,
{
    let mut out: Vec<QualityAttribute> = qas.into_iter().cloned().collect();
    out.sort_by(|a, b| a.catalog_rank().cmp(&b.catalog_rank()));
    out.dedup();
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QaDefinition {
    pub code: QualityAttribute,
    pub name: String,
    pub description: String,
}

/// Ordered set of quality attributes plus the label synonyms used to map
/// free-form LLM output back onto catalog codes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QaCatalog {
    definitions: Vec<QaDefinition>,
    synonyms: BTreeMap<String, QualityAttribute>,
}

const BUILTIN_DEFINITIONS: [(&str, &str, &str); 8] = [
    (
        "PE",
        "Performance Efficiency",
        "Relates to the performance relative to the resources used under stated conditions. \
         Sub-characteristics include time behavior, resource utilization, and capacity.",
    ),
    (
        "CO",
        "Compatibility",
        "Assesses software's ability to co-exist with independent software in a common \
         environment sharing resources. It includes interoperability, co-existence, and compliance.",
    ),
    (
        "IC",
        "Interaction Capability",
        "Measures how easy and satisfying the software is. It covers appropriateness \
         recognizability, learnability, operability, user error protection, user interface \
         aesthetics, and accessibility.",
    ),
    (
        "RE",
        "Reliability",
        "Measures the software's capacity to maintain its performance level under stated \
         conditions for a stated period. It includes maturity, fault tolerance, and recoverability.",
    ),
    (
        "SE",
        "Security",
        "Covers the software's ability to protect information and data, ensuring confidentiality, \
         integrity, non-repudiation, accountability, and authenticity.",
    ),
    (
        "MA",
        "Maintainability",
        "Measures how easy it is to modify the software. It includes modularity, reusability, \
         analyzability, modifiability, and testability.",
    ),
    (
        "FL",
        "Flexibility",
        "Measures the ease with which the software can be transferred from one environment to \
         another. It includes adaptability, installability, replaceability, and flexibility compliance.",
    ),
    (
        "CE",
        "Cost Efficiency",
        "Emphasizes minimizing financial resources in software development, maintenance, and \
         operation to stay within budget.",
    ),
];

// Labels LLMs commonly emit for catalog attributes.
const BUILTIN_SYNONYMS: [(&str, &str); 12] = [
    ("performance", "PE"),
    ("efficiency", "PE"),
    ("usability", "IC"),
    ("interaction", "IC"),
    ("interoperability", "CO"),
    ("availability", "RE"),
    ("fault tolerance", "RE"),
    ("portability", "FL"),
    ("modifiability", "MA"),
    ("cost", "CE"),
    ("cost-efficiency", "CE"),
    ("performance-efficiency", "PE"),
];

fn label_key(label: &str) -> String {
    label
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

impl Default for QaCatalog {
    fn default() -> Self {
        let definitions = BUILTIN_DEFINITIONS
            .iter()
            .zip(QualityAttribute::BUILTIN.iter())
            .map(|((_, name, description), code)| QaDefinition {
                code: code.clone(),
                name: (*name).to_string(),
                description: description.split_whitespace().collect::<Vec<_>>().join(" "),
            })
            .collect();
        let synonyms = BUILTIN_SYNONYMS
            .iter()
            .map(|(label, code)| {
                let qa = QualityAttribute::new(code).expect("builtin code");
                (label_key(label), qa)
            })
            .collect();
        QaCatalog {
            definitions,
            synonyms,
        }
    }
}

impl QaCatalog {
    /// Default catalog, shared.
    pub fn builtin() -> &'static QaCatalog {
        static CATALOG: OnceLock<QaCatalog> = OnceLock::new();
        CATALOG.get_or_init(QaCatalog::default)
    }

    pub fn definitions(&self) -> &[QaDefinition] {
        &self.definitions
    }

    pub fn codes(&self) -> impl Iterator<Item = &QualityAttribute> {
        self.definitions.iter().map(|d| &d.code)
    }

    pub fn len(&self) -> usize {
        self.definitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.definitions.is_empty()
    }

    pub fn definition(&self, qa: &QualityAttribute) -> Option<&QaDefinition> {
        self.definitions.iter().find(|d| &d.code == qa)
    }

    /// Appends an attribute to the catalog. Re-adding an existing code
    /// replaces its name and description.
    pub fn extend_with(&mut self, definition: QaDefinition) {
        match self
            .definitions
            .iter_mut()
            .find(|d| d.code == definition.code)
        {
            Some(existing) => *existing = definition,
            None => self.definitions.push(definition),
        }
    }

    /// Registers an extra label for a catalog attribute.
    pub fn add_synonym(&mut self, label: &str, qa: QualityAttribute) -> Result<(), DomainError> {
        if self.definition(&qa).is_none() {
            return Err(DomainError::UnknownQaLabel(qa.code().to_string()));
        }
        self.synonyms.insert(label_key(label), qa);
        Ok(())
    }

    /// Case-insensitive lookup by code, display name or synonym.
    pub fn resolve(&self, label: &str) -> Result<QualityAttribute, DomainError> {
        let key = label_key(label);
        if key.is_empty() {
            return Err(DomainError::UnknownQaLabel(label.to_string()));
        }
        let by_code_or_name = self
            .definitions
            .iter()
            .find(|d| d.code.code().eq_ignore_ascii_case(&key) || label_key(&d.name) == key);
        if let Some(def) = by_code_or_name {
            return Ok(def.code.clone());
        }
        // "Performance Efficiency (PE)" style labels.
        if let Some(inner) = key
            .rsplit_once('(')
            .and_then(|(_, rest)| rest.strip_suffix(')'))
        {
            if let Ok(qa) = self.resolve(inner) {
                return Ok(qa);
            }
        }
        self.synonyms
            .get(&key)
            .filter(|qa| self.definition(qa).is_some())
            .cloned()
            .ok_or_else(|| DomainError::UnknownQaLabel(label.to_string()))
    }
}

/// Resolves a label against the built-in catalog.
pub fn qa_from_label(label: &str) -> Result<QualityAttribute, DomainError> {
    QaCatalog::builtin().resolve(label)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Requirement {
    pub id: String,
    pub text: String,
}

impl Requirement {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Result<Self, DomainError> {
        let req = Requirement {
            id: id.into(),
            text: text.into(),
        };
        req.validate()?;
        Ok(req)
    }

    pub fn validate(&self) -> Result<(), DomainError> {
        if self.id.trim().is_empty() {
            return Err(DomainError::InvalidRequirement("empty id".into()));
        }
        if self.text.trim().is_empty() {
            return Err(DomainError::InvalidRequirement(format!(
                "requirement {} has empty text",
                self.id
            )));
        }
        Ok(())
    }
}

/// A requirement's classification: ASR flag, implied attributes and the
/// condition under which it holds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AsrRecord {
    pub requirement_id: String,
    pub is_asr: bool,
    pub qas: BTreeSet<QualityAttribute>,
    pub condition: Option<String>,
}

impl AsrRecord {
    /// An ASR record. A missing or blank condition becomes
    /// [`DEFAULT_CONDITION`]. Returns `None` when `qas` is empty, since an
    /// ASR must imply at least one attribute.
    pub fn asr(
        requirement_id: impl Into<String>,
        qas: impl IntoIterator<Item = QualityAttribute>,
        condition: Option<&str>,
    ) -> Option<Self> {
        let qas: BTreeSet<_> = qas.into_iter().collect();
        if qas.is_empty() {
            return None;
        }
        let condition = condition
            .map(str::trim)
            .filter(|c| !c.is_empty())
            .unwrap_or(DEFAULT_CONDITION)
            .to_string();
        Some(AsrRecord {
            requirement_id: requirement_id.into(),
            is_asr: true,
            qas,
            condition: Some(condition),
        })
    }

    pub fn non_asr(requirement_id: impl Into<String>) -> Self {
        AsrRecord {
            requirement_id: requirement_id.into(),
            is_asr: false,
            qas: BTreeSet::new(),
            condition: None,
        }
    }

    /// Condition text of an ASR; empty for non-ASR records.
    pub fn condition_text(&self) -> &str {
        self.condition.as_deref().unwrap_or("")
    }

    pub fn implies(&self, qa: &QualityAttribute) -> bool {
        self.is_asr && self.qas.contains(qa)
    }

    pub fn is_consistent(&self) -> bool {
        if self.is_asr {
            !self.qas.is_empty()
                && self
                    .condition
                    .as_deref()
                    .is_some_and(|c| !c.trim().is_empty())
        } else {
            self.qas.is_empty()
        }
    }
}

/// ASRs whose conditions were judged equivalent to one nominal condition.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConditionGroup {
    pub cg_id: usize,
    pub nominal_condition: String,
    pub asr_ids: Vec<String>,
}

/// Condition groups that can hold at the same time.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConcurrentConditionGroup {
    pub ccg_id: usize,
    pub cg_ids: BTreeSet<usize>,
}

/// Per-attribute integer weights: the number of in-scope ASRs implying
/// each attribute. Absent entries read as zero.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct QaWeights {
    pub weights: BTreeMap<QualityAttribute, u32>,
}

impl QaWeights {
    pub fn get(&self, qa: &QualityAttribute) -> u32 {
        self.weights.get(qa).copied().unwrap_or(0)
    }

    pub fn set(&mut self, qa: QualityAttribute, weight: u32) {
        self.weights.insert(qa, weight);
    }

    pub fn from_pairs<I: IntoIterator<Item = (QualityAttribute, u32)>>(pairs: I) -> Self {
        QaWeights {
            weights: pairs.into_iter().collect(),
        }
    }

    /// Attributes with an explicit entry, in catalog order.
    pub fn qas(&self) -> Vec<QualityAttribute> {
        sort_qas(self.weights.keys())
    }

    /// Entries with a positive weight, in catalog order.
    pub fn nonzero(&self) -> Vec<(QualityAttribute, u32)> {
        self.qas()
            .into_iter()
            .map(|qa| {
                let w = self.get(&qa);
                (qa, w)
            })
            .filter(|(_, w)| *w > 0)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Choice {
    pub name: String,
    #[serde(default)]
    pub impacts: BTreeMap<QualityAttribute, i32>,
}

impl Choice {
    pub fn new<I: IntoIterator<Item = (QualityAttribute, i32)>>(name: &str, impacts: I) -> Self {
        Choice {
            name: name.to_string(),
            impacts: impacts.into_iter().collect(),
        }
    }

    /// Impact on `qa`; missing cells are neutral.
    pub fn impact(&self, qa: &QualityAttribute) -> i32 {
        self.impacts.get(qa).copied().unwrap_or(0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecisionGroup {
    pub name: String,
    pub choices: Vec<Choice>,
}

impl DecisionGroup {
    pub fn choice(&self, name: &str) -> Option<&Choice> {
        self.choices.iter().find(|c| c.name == name)
    }
}

/// Decision groups, each with mutually exclusive choices carrying a
/// -1/0/+1 impact per quality attribute.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecisionMatrix {
    pub groups: Vec<DecisionGroup>,
}

impl DecisionMatrix {
    pub fn group(&self, name: &str) -> Option<&DecisionGroup> {
        self.groups.iter().find(|g| g.name == name)
    }

    pub fn choice_count(&self) -> usize {
        self.groups.iter().map(|g| g.choices.len()).sum()
    }

    /// Attributes referenced by at least one cell, in catalog order.
    pub fn qa_columns(&self) -> Vec<QualityAttribute> {
        sort_qas(
            self.groups
                .iter()
                .flat_map(|g| g.choices.iter())
                .flat_map(|c| c.impacts.keys()),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MatrixViolation {
    EmptyMatrix,
    EmptyName {
        group: String,
    },
    DuplicateGroup {
        group: String,
    },
    GroupTooSmall {
        group: String,
        choices: usize,
    },
    DuplicateChoice {
        group: String,
        choice: String,
    },
    ImpactOutOfRange {
        group: String,
        choice: String,
        qa: QualityAttribute,
        value: i32,
    },
}

impl fmt::Display for MatrixViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MatrixViolation::EmptyMatrix => write!(f, "matrix has no decision groups"),
            MatrixViolation::EmptyName { group } => {
                write!(f, "group {group:?}: empty group or choice name")
            }
            MatrixViolation::DuplicateGroup { group } => write!(f, "duplicate group {group:?}"),
            MatrixViolation::GroupTooSmall { group, choices } => {
                write!(
                    f,
                    "group {group:?} has {choices} choice(s), needs at least 2"
                )
            }
            MatrixViolation::DuplicateChoice { group, choice } => {
                write!(f, "group {group:?}: duplicate choice {choice:?}")
            }
            MatrixViolation::ImpactOutOfRange {
                group,
                choice,
                qa,
                value,
            } => write!(
                f,
                "group {group:?}, choice {choice:?}, {qa}: impact {value} not in {{-1, 0, 1}}"
            ),
        }
    }
}

/// Lists every structural problem in `matrix`; an empty list means valid.
pub fn validate_matrix(matrix: &DecisionMatrix) -> Vec<MatrixViolation> {
    let mut violations = Vec::new();
    if matrix.groups.is_empty() {
        violations.push(MatrixViolation::EmptyMatrix);
    }
    let mut seen_groups = HashSet::new();
    for group in &matrix.groups {
        if group.name.trim().is_empty() || group.choices.iter().any(|c| c.name.trim().is_empty()) {
            violations.push(MatrixViolation::EmptyName {
                group: group.name.clone(),
            });
        }
        if !seen_groups.insert(group.name.as_str()) {
            violations.push(MatrixViolation::DuplicateGroup {
                group: group.name.clone(),
            });
        }
        if group.choices.len() < 2 {
            violations.push(MatrixViolation::GroupTooSmall {
                group: group.name.clone(),
                choices: group.choices.len(),
            });
        }
        let mut seen_choices = HashSet::new();
        for choice in &group.choices {
            if !seen_choices.insert(choice.name.as_str()) {
                violations.push(MatrixViolation::DuplicateChoice {
                    group: group.name.clone(),
                    choice: choice.name.clone(),
                });
            }
            for (qa, &value) in &choice.impacts {
                if !(-1..=1).contains(&value) {
                    violations.push(MatrixViolation::ImpactOutOfRange {
                        group: group.name.clone(),
                        choice: choice.name.clone(),
                        qa: qa.clone(),
                        value,
                    });
                }
            }
        }
    }
    violations
}

/// Outcome for one decision group.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupDecision {
    pub group: String,
    pub chosen_choice: String,
    /// Every choice attaining the group's best value, in matrix order.
    pub tie_set: Vec<String>,
    /// Weighted value of the chosen choice.
    pub value: i64,
}

/// One chosen choice per decision group and the maximized objective.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecisionSet {
    pub decisions: Vec<GroupDecision>,
    pub objective_value: i64,
}

impl DecisionSet {
    pub fn chosen(&self, group: &str) -> Option<&str> {
        self.decisions
            .iter()
            .find(|d| d.group == group)
            .map(|d| d.chosen_choice.as_str())
    }

    pub fn decision(&self, group: &str) -> Option<&GroupDecision> {
        self.decisions.iter().find(|d| d.group == group)
    }

    /// Groups whose chosen choice differs between `self` and `other`.
    pub fn changed_groups(&self, other: &DecisionSet) -> Vec<DecisionChange> {
        self.decisions
            .iter()
            .filter_map(|d| {
                let after = other.chosen(&d.group)?;
                (after != d.chosen_choice).then(|| DecisionChange {
                    group: d.group.clone(),
                    before: d.chosen_choice.clone(),
                    after: after.to_string(),
                })
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecisionChange {
    pub group: String,
    pub before: String,
    pub after: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QaScore {
    pub qa: QualityAttribute,
    pub weight: u32,
    pub raw_score: i64,
    pub weighted_score: i64,
}

/// Satisfaction per attribute: raw column sums over the chosen choices and
/// the same sums multiplied by the attribute weight.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub entries: Vec<QaScore>,
}

impl ScoreReport {
    pub fn get(&self, qa: &QualityAttribute) -> Option<&QaScore> {
        self.entries.iter().find(|e| &e.qa == qa)
    }

    pub fn total_weighted(&self) -> i64 {
        self.entries.iter().map(|e| e.weighted_score).sum()
    }
}

/// ASRs whose cumulative removal changed at least one decision.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AirSet {
    pub removed_asr_ids: Vec<String>,
    pub sensitive_qa: QualityAttribute,
    pub before: DecisionSet,
    pub after: DecisionSet,
}

impl AirSet {
    pub fn size(&self) -> usize {
        self.removed_asr_ids.len()
    }

    pub fn changes(&self) -> Vec<DecisionChange> {
        self.before.changed_groups(&self.after)
    }
}
