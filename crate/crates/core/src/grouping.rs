//! Step 2: group ASRs by condition.
//!
//! Distinct condition strings are embedded and clustered agglomeratively so
//! that the quadratic equivalence pass only runs inside each cluster. Within
//! a cluster, ASRs are scanned in input order: each condition is compared
//! with the nominal condition of every existing group and joins the first
//! equivalent one, otherwise it opens a new group. Condition groups that can
//! hold together are then collected into concurrent condition groups, and
//! each of those gets its own attribute weights.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{AsrRecord, ConcurrentConditionGroup, ConditionGroup, QaCatalog, QaWeights};
use crate::gateway::{EmbeddingVector, Gateway, GatewayError, ResponseFormat};
use crate::prompts;

#[derive(Debug, Error)]
pub enum GroupingError {
    #[error("no ASR records to group")]
    NoAsrs,
    #[error("no condition groups")]
    NoConditionGroups,
    #[error("invalid clustering configuration: {0}")]
    InvalidConfig(String),
    #[error("unparseable LLM answer: {0}")]
    UnparseableResponse(String),
    #[error("answer references condition {id}, but only {max} were given")]
    UnknownCgId { id: usize, max: usize },
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Linkage {
    Average,
    Complete,
    Single,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceMetric {
    Cosine,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClusteringConfig {
    pub linkage: Linkage,
    pub distance: DistanceMetric,
    /// Clusters merge while their linkage distance is at most this value.
    pub merge_threshold: f64,
}

impl Default for ClusteringConfig {
    fn default() -> Self {
        ClusteringConfig {
            linkage: Linkage::Average,
            distance: DistanceMetric::Cosine,
            merge_threshold: 0.3,
        }
    }
}

impl ClusteringConfig {
    pub fn validate(&self) -> Result<(), GroupingError> {
        if !(self.merge_threshold > 0.0 && self.merge_threshold < 2.0) {
            return Err(GroupingError::InvalidConfig(format!(
                "merge_threshold {} outside (0, 2)",
                self.merge_threshold
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConditionCluster {
    pub cluster_id: usize,
    pub asr_ids: Vec<String>,
}

/// Agglomerative clustering of `vectors`. Returns clusters of indices,
/// each sorted ascending, ordered by their smallest index. Equal linkage
/// distances merge the lowest index pair first.
pub fn agglomerate(vectors: &[EmbeddingVector], config: &ClusteringConfig) -> Vec<Vec<usize>> {
    let n = vectors.len();
    let mut dist = vec![vec![0.0f64; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let d = match config.distance {
                DistanceMetric::Cosine => vectors[i].cosine_distance(&vectors[j]),
            };
            dist[i][j] = d;
            dist[j][i] = d;
        }
    }
    let mut members: Vec<Option<Vec<usize>>> = (0..n).map(|i| Some(vec![i])).collect();
    loop {
        let mut best: Option<(f64, usize, usize)> = None;
        for a in 0..n {
            if members[a].is_none() {
                continue;
            }
            for b in a + 1..n {
                if members[b].is_none() {
                    continue;
                }
                if best.is_none_or(|(d, _, _)| dist[a][b] < d) {
                    best = Some((dist[a][b], a, b));
                }
            }
        }
        let Some((d, a, b)) = best else { break };
        if d > config.merge_threshold {
            break;
        }
        let moved = members[b].take().expect("active cluster");
        let size_a = members[a].as_ref().expect("active cluster").len() as f64;
        let size_b = moved.len() as f64;
        for k in 0..n {
            if k == a || members[k].is_none() {
                continue;
            }
            let merged = match config.linkage {
                Linkage::Single => dist[a][k].min(dist[b][k]),
                Linkage::Complete => dist[a][k].max(dist[b][k]),
                Linkage::Average => (size_a * dist[a][k] + size_b * dist[b][k]) / (size_a + size_b),
            };
            dist[a][k] = merged;
            dist[k][a] = merged;
        }
        let target = members[a].as_mut().expect("active cluster");
        target.extend(moved);
        target.sort_unstable();
    }
    members.into_iter().flatten().collect()
}

/// Clusters the ASRs among `records` by the embeddings of their condition
/// strings. Each distinct string is embedded once.
pub fn cluster_conditions(
    records: &[AsrRecord],
    gateway: &Gateway,
    config: &ClusteringConfig,
) -> Result<Vec<ConditionCluster>, GroupingError> {
    config.validate()?;
    let asrs: Vec<&AsrRecord> = records.iter().filter(|r| r.is_asr).collect();
    if asrs.is_empty() {
        return Err(GroupingError::NoAsrs);
    }
    let mut distinct: Vec<String> = Vec::new();
    let mut index_of: HashMap<&str, usize> = HashMap::new();
    for rec in &asrs {
        let cond = rec.condition_text();
        if !index_of.contains_key(cond) {
            index_of.insert(cond, distinct.len());
            distinct.push(cond.to_string());
        }
    }
    let vectors = gateway.embed(&distinct)?;
    let clusters = agglomerate(&vectors, config);
    let mut cluster_of = vec![0usize; distinct.len()];
    for (c, members) in clusters.iter().enumerate() {
        for &m in members {
            cluster_of[m] = c;
        }
    }
    let mut out: Vec<ConditionCluster> = (0..clusters.len())
        .map(|c| ConditionCluster {
            cluster_id: c + 1,
            asr_ids: Vec::new(),
        })
        .collect();
    for rec in &asrs {
        let c = cluster_of[index_of[rec.condition_text()]];
        out[c].asr_ids.push(rec.requirement_id.clone());
    }
    Ok(out)
}

/// Reads a `True`/`False` answer. Quotes and trailing punctuation around
/// the leading word are ignored.
pub fn parse_equivalence_answer(text: &str) -> Option<bool> {
    let word = text.split_whitespace().next()?;
    let word = word.trim_matches(|c: char| !c.is_ascii_alphabetic());
    if word.eq_ignore_ascii_case("true") {
        Some(true)
    } else if word.eq_ignore_ascii_case("false") {
        Some(false)
    } else {
        None
    }
}

/// Asks whether two conditions mean the same thing. Byte-identical
/// conditions are equivalent without a call.
pub fn logic_equiv(cond_a: &str, cond_b: &str, gateway: &Gateway) -> Result<bool, GroupingError> {
    if cond_a.trim().is_empty() || cond_b.trim().is_empty() {
        return Err(GroupingError::UnparseableResponse(
            "cannot compare an empty condition".into(),
        ));
    }
    if cond_a == cond_b {
        return Ok(true);
    }
    let request = gateway.completion_request(
        prompts::equivalence_prompt(cond_a, cond_b),
        ResponseFormat::Raw,
    );
    let check = |text: &str| {
        parse_equivalence_answer(text)
            .map(|_| ())
            .ok_or_else(|| format!("expected True or False, got {:?}", text.trim()))
    };
    match gateway.complete_checked(&request, &check) {
        Ok(text) => Ok(parse_equivalence_answer(&text).expect("checked answer")),
        Err(GatewayError::MalformedAfterRetries { reason, .. }) => {
            Err(GroupingError::UnparseableResponse(reason))
        }
        Err(e) => Err(e.into()),
    }
}

/// Groups `records` (one cluster, in input order) into condition groups:
/// each ASR joins the first group whose nominal condition is equivalent to
/// its own, or opens a new group. Group ids are numbered from 1.
pub fn form_condition_groups(
    records: &[&AsrRecord],
    gateway: &Gateway,
) -> Result<Vec<ConditionGroup>, GroupingError> {
    let mut groups: Vec<ConditionGroup> = Vec::new();
    for asr in records {
        let cond = asr.condition_text();
        let mut found = false;
        for group in groups.iter_mut() {
            if logic_equiv(cond, &group.nominal_condition, gateway)? {
                group.asr_ids.push(asr.requirement_id.clone());
                found = true;
                break;
            }
        }
        if !found {
            groups.push(ConditionGroup {
                cg_id: groups.len() + 1,
                nominal_condition: cond.to_string(),
                asr_ids: vec![asr.requirement_id.clone()],
            });
        }
    }
    Ok(groups)
}

/// Parses parenthesized id tuples such as `(1, 3) (2, 3)`. Ids are
/// 1-based positions in the prompt's condition list; duplicate tuples are
/// dropped.
pub fn parse_ccg_response(text: &str, n: usize) -> Result<Vec<BTreeSet<usize>>, GroupingError> {
    static TUPLE: OnceLock<Regex> = OnceLock::new();
    static NUMBER: OnceLock<Regex> = OnceLock::new();
    let tuple = TUPLE.get_or_init(|| Regex::new(r"\(([^()]*)\)").expect("valid regex"));
    let number = NUMBER.get_or_init(|| Regex::new(r"\d+").expect("valid regex"));
    let mut out: Vec<BTreeSet<usize>> = Vec::new();
    let mut saw_tuple = false;
    for cap in tuple.captures_iter(text) {
        let ids: BTreeSet<usize> = number
            .find_iter(&cap[1])
            .map(|m| m.as_str().parse::<usize>().unwrap_or(usize::MAX))
            .collect();
        if ids.is_empty() {
            continue;
        }
        saw_tuple = true;
        if let Some(&bad) = ids.iter().find(|&&id| id == 0 || id > n) {
            return Err(GroupingError::UnknownCgId { id: bad, max: n });
        }
        if !out.contains(&ids) {
            out.push(ids);
        }
    }
    if !saw_tuple {
        return Err(GroupingError::UnparseableResponse(format!(
            "no parenthesized id groups in {:?}",
            text.trim()
        )));
    }
    Ok(out)
}

/// Collects condition groups that can hold together. Every group ends up in
/// at least one result; groups the answer leaves out become singletons.
pub fn form_ccgs(
    cgs: &[ConditionGroup],
    gateway: &Gateway,
) -> Result<Vec<ConcurrentConditionGroup>, GroupingError> {
    match cgs {
        [] => return Err(GroupingError::NoConditionGroups),
        [only] => {
            return Ok(vec![ConcurrentConditionGroup {
                ccg_id: 1,
                cg_ids: BTreeSet::from([only.cg_id]),
            }])
        }
        _ => {}
    }
    let nominals: Vec<&str> = cgs.iter().map(|g| g.nominal_condition.as_str()).collect();
    let request =
        gateway.completion_request(prompts::concurrency_prompt(&nominals), ResponseFormat::Raw);
    let n = cgs.len();
    let check = |text: &str| match parse_ccg_response(text, n) {
        Err(GroupingError::UnparseableResponse(reason)) => Err(reason),
        _ => Ok(()),
    };
    let text = match gateway.complete_checked(&request, &check) {
        Ok(text) => text,
        Err(GatewayError::MalformedAfterRetries { reason, .. }) => {
            return Err(GroupingError::UnparseableResponse(reason))
        }
        Err(e) => return Err(e.into()),
    };
    let tuples = parse_ccg_response(&text, n)?;

    let mut sets: Vec<BTreeSet<usize>> = tuples
        .into_iter()
        .map(|t| t.into_iter().map(|pos| cgs[pos - 1].cg_id).collect())
        .collect();
    let covered: HashSet<usize> = sets.iter().flatten().copied().collect();
    for cg in cgs {
        if !covered.contains(&cg.cg_id) {
            log::warn!(
                "condition group {} ({:?}) missing from the concurrency answer; \
                 adding it as its own group",
                cg.cg_id,
                cg.nominal_condition
            );
            sets.push(BTreeSet::from([cg.cg_id]));
        }
    }
    Ok(sets
        .into_iter()
        .enumerate()
        .map(|(i, cg_ids)| ConcurrentConditionGroup {
            ccg_id: i + 1,
            cg_ids,
        })
        .collect())
}

/// ASR ids in the scope of `ccg`.
pub fn ccg_scope<'a>(
    ccg: &ConcurrentConditionGroup,
    cgs: &'a [ConditionGroup],
) -> BTreeSet<&'a str> {
    cgs.iter()
        .filter(|g| ccg.cg_ids.contains(&g.cg_id))
        .flat_map(|g| g.asr_ids.iter().map(String::as_str))
        .collect()
}

/// Weight of each attribute: the number of distinct in-scope ASRs implying
/// it. Every catalog attribute gets an entry.
pub fn compute_qa_weights(
    ccg: &ConcurrentConditionGroup,
    cgs: &[ConditionGroup],
    records: &[AsrRecord],
    catalog: &QaCatalog,
) -> QaWeights {
    let scope = ccg_scope(ccg, cgs);
    let mut weights = QaWeights::from_pairs(catalog.codes().map(|qa| (qa.clone(), 0)));
    let mut counted: HashSet<&str> = HashSet::new();
    for rec in records {
        if !rec.is_asr || !scope.contains(rec.requirement_id.as_str()) {
            continue;
        }
        if !counted.insert(rec.requirement_id.as_str()) {
            continue;
        }
        for qa in &rec.qas {
            let w = weights.get(qa);
            weights.set(qa.clone(), w + 1);
        }
    }
    weights
}

/// Clusters plus the condition groups found in them.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupingOutcome {
    pub clusters: Vec<ConditionCluster>,
    pub cgs: Vec<ConditionGroup>,
}

/// Clusters the ASRs and runs the group formation inside every cluster
/// (clusters in parallel), numbering the groups globally in cluster order.
pub fn group_conditions(
    records: &[AsrRecord],
    gateway: &Gateway,
    config: &ClusteringConfig,
) -> Result<GroupingOutcome, GroupingError> {
    let clusters = cluster_conditions(records, gateway, config)?;
    let by_id: HashMap<&str, &AsrRecord> = records
        .iter()
        .filter(|r| r.is_asr)
        .map(|r| (r.requirement_id.as_str(), r))
        .collect();
    let per_cluster = gateway.map_bounded(&clusters, |cluster| {
        let members: Vec<&AsrRecord> = cluster
            .asr_ids
            .iter()
            .map(|id| by_id[id.as_str()])
            .collect();
        form_condition_groups(&members, gateway)
    });
    let mut cgs = Vec::new();
    for groups in per_cluster {
        for mut g in groups? {
            g.cg_id = cgs.len() + 1;
            cgs.push(g);
        }
    }
    Ok(GroupingOutcome { clusters, cgs })
}
