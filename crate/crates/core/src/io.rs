//! Requirement and decision-matrix file formats.
//!
//! Requirements: a JSON array of `{"id", "text"}` objects or a CSV file
//! with `id` and `text` columns. Matrices: CSV with `group`, `choice` and
//! one column per attribute code (blank cells are 0), or the keyed
//! TOML/JSON layout mirroring [`DecisionMatrix`].

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde_json::Value;
use thiserror::Error;

use crate::domain::{
    validate_matrix, Choice, DecisionGroup, DecisionMatrix, MatrixViolation, QaCatalog,
    QualityAttribute, Requirement,
};

#[derive(Debug, Error)]
pub enum InputError {
    #[error("file not found: {}", .0.display())]
    FileNotFound(PathBuf),
    #[error("cannot read {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: {position}: {message}", path.display())]
    MalformedInput {
        path: PathBuf,
        position: String,
        message: String,
    },
    #[error("{}: {position}: duplicate requirement id {id:?}", path.display())]
    DuplicateId {
        path: PathBuf,
        id: String,
        position: String,
    },
    #[error("{}: invalid matrix: {}", path.display(), join_violations(.violations))]
    InvalidMatrix {
        path: PathBuf,
        violations: Vec<MatrixViolation>,
    },
}

fn join_violations(violations: &[MatrixViolation]) -> String {
    violations
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}

fn malformed(path: &Path, position: impl Into<String>, message: impl Into<String>) -> InputError {
    InputError::MalformedInput {
        path: path.to_path_buf(),
        position: position.into(),
        message: message.into(),
    }
}

/// Reads a whole file, distinguishing a missing file from other failures.
pub fn read_text(path: &Path) -> Result<String, InputError> {
    fs::read_to_string(path).map_err(|source| {
        if source.kind() == std::io::ErrorKind::NotFound {
            InputError::FileNotFound(path.to_path_buf())
        } else {
            InputError::Io {
                path: path.to_path_buf(),
                source,
            }
        }
    })
}

fn extension(path: &Path) -> String {
    path.extension()
        .and_then(|e| e.to_str())
        .unwrap_or_default()
        .to_ascii_lowercase()
}

pub fn load_requirements(path: &Path) -> Result<Vec<Requirement>, InputError> {
    let text = read_text(path)?;
    parse_requirements(path, &text)
}

/// Parses requirement text; `path` only decides the format and labels
/// errors. Files that are neither `.json` nor `.csv` are sniffed.
pub fn parse_requirements(path: &Path, text: &str) -> Result<Vec<Requirement>, InputError> {
    if text.trim().is_empty() {
        return Err(malformed(path, "line 1", "empty file"));
    }
    let is_json = match extension(path).as_str() {
        "json" => true,
        "csv" => false,
        _ => text.trim_start().starts_with('['),
    };
    let parsed = if is_json {
        requirements_from_json(path, text)?
    } else {
        requirements_from_csv(path, text)?
    };
    if parsed.is_empty() {
        return Err(malformed(path, "line 1", "no requirements"));
    }
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(parsed.len());
    for (position, req) in parsed {
        if let Err(e) = req.validate() {
            return Err(malformed(path, position, e.to_string()));
        }
        if !seen.insert(req.id.clone()) {
            return Err(InputError::DuplicateId {
                path: path.to_path_buf(),
                id: req.id,
                position,
            });
        }
        out.push(req);
    }
    Ok(out)
}

fn requirements_from_json(
    path: &Path,
    text: &str,
) -> Result<Vec<(String, Requirement)>, InputError> {
    let value: Value = serde_json::from_str(text).map_err(|e| {
        malformed(
            path,
            format!("line {}, column {}", e.line(), e.column()),
            e.to_string(),
        )
    })?;
    let Value::Array(items) = value else {
        return Err(malformed(
            path,
            "line 1",
            "expected a JSON array of requirements",
        ));
    };
    items
        .into_iter()
        .enumerate()
        .map(|(i, item)| {
            let position = format!("record {}", i + 1);
            let id = match item.get("id") {
                Some(Value::String(s)) => s.trim().to_string(),
                Some(Value::Number(n)) => n.to_string(),
                _ => return Err(malformed(path, position, "missing string field \"id\"")),
            };
            let Some(Value::String(text)) = item.get("text") else {
                return Err(malformed(path, position, "missing string field \"text\""));
            };
            let req = Requirement {
                id,
                text: text.trim().to_string(),
            };
            Ok((position, req))
        })
        .collect()
}

fn requirements_from_csv(
    path: &Path,
    text: &str,
) -> Result<Vec<(String, Requirement)>, InputError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| malformed(path, "line 1", e.to_string()))?
        .clone();
    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h.eq_ignore_ascii_case(name))
            .ok_or_else(|| malformed(path, "line 1", format!("missing column {name:?}")))
    };
    let (id_col, text_col) = (column("id")?, column("text")?);
    let mut out = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            malformed(path, format!("line {line}"), e.to_string())
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let req = Requirement {
            id: record.get(id_col).unwrap_or_default().to_string(),
            text: record.get(text_col).unwrap_or_default().to_string(),
        };
        out.push((format!("line {line}"), req));
    }
    Ok(out)
}

pub fn load_matrix(path: &Path) -> Result<DecisionMatrix, InputError> {
    let text = read_text(path)?;
    parse_matrix(path, &text)
}

/// Parses and validates a matrix. `.toml` and `.json` use the keyed
/// layout; anything else is read as CSV.
pub fn parse_matrix(path: &Path, text: &str) -> Result<DecisionMatrix, InputError> {
    if text.trim().is_empty() {
        return Err(malformed(path, "line 1", "empty file"));
    }
    let matrix = match extension(path).as_str() {
        "toml" => toml::from_str::<DecisionMatrix>(text).map_err(|e| {
            let position = e
                .span()
                .map(|s| format!("line {}", text[..s.start].lines().count().max(1)))
                .unwrap_or_else(|| "line 1".into());
            malformed(path, position, e.message().to_string())
        })?,
        "json" => serde_json::from_str::<DecisionMatrix>(text).map_err(|e| {
            malformed(
                path,
                format!("line {}, column {}", e.line(), e.column()),
                e.to_string(),
            )
        })?,
        _ => matrix_from_csv(path, text)?,
    };
    let violations = validate_matrix(&matrix);
    if !violations.is_empty() {
        return Err(InputError::InvalidMatrix {
            path: path.to_path_buf(),
            violations,
        });
    }
    Ok(matrix)
}

fn header_qa(label: &str) -> Result<QualityAttribute, String> {
    QaCatalog::builtin()
        .resolve(label)
        .or_else(|_| QualityAttribute::new(label))
        .map_err(|e| e.to_string())
}

fn parse_cell(cell: &str) -> Result<i32, String> {
    let cell = cell.trim().replace('\u{2212}', "-");
    if cell.is_empty() {
        return Ok(0);
    }
    cell.strip_prefix('+')
        .unwrap_or(&cell)
        .parse::<i32>()
        .map_err(|_| format!("impact {cell:?} is not an integer"))
}

fn matrix_from_csv(path: &Path, text: &str) -> Result<DecisionMatrix, InputError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| malformed(path, "line 1", e.to_string()))?
        .clone();
    if headers.len() < 3
        || !headers[0].eq_ignore_ascii_case("group")
        || !headers[1].eq_ignore_ascii_case("choice")
    {
        return Err(malformed(
            path,
            "line 1",
            "header must be group,choice followed by attribute codes",
        ));
    }
    let mut qas = Vec::new();
    for (i, label) in headers.iter().enumerate().skip(2) {
        let qa = header_qa(label)
            .map_err(|m| malformed(path, format!("line 1, column {}", i + 1), m))?;
        if qas.contains(&qa) {
            return Err(malformed(
                path,
                format!("line 1, column {}", i + 1),
                format!("duplicate attribute column {qa}"),
            ));
        }
        qas.push(qa);
    }
    let mut matrix = DecisionMatrix::default();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            malformed(path, format!("line {line}"), e.to_string())
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.iter().all(str::is_empty) {
            continue;
        }
        let group_name = record.get(0).unwrap_or_default();
        let choice_name = record.get(1).unwrap_or_default();
        let mut impacts = Vec::with_capacity(qas.len());
        for (k, qa) in qas.iter().enumerate() {
            let value = parse_cell(record.get(k + 2).unwrap_or_default())
                .map_err(|m| malformed(path, format!("line {line}, column {}", k + 3), m))?;
            impacts.push((qa.clone(), value));
        }
        let choice = Choice::new(choice_name, impacts);
        match matrix.groups.iter_mut().find(|g| g.name == group_name) {
            Some(group) => group.choices.push(choice),
            None => matrix.groups.push(DecisionGroup {
                name: group_name.to_string(),
                choices: vec![choice],
            }),
        }
    }
    Ok(matrix)
}

/// Renders a matrix as CSV in the layout [`load_matrix`] reads.
pub fn matrix_to_csv(matrix: &DecisionMatrix) -> String {
    let columns = matrix.qa_columns();
    let mut writer = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["group".to_string(), "choice".to_string()];
    header.extend(columns.iter().map(|qa| qa.to_string()));
    writer.write_record(&header).expect("in-memory write");
    for group in &matrix.groups {
        for choice in &group.choices {
            let mut row = vec![group.name.clone(), choice.name.clone()];
            row.extend(columns.iter().map(|qa| choice.impact(qa).to_string()));
            writer.write_record(&row).expect("in-memory write");
        }
    }
    String::from_utf8(writer.into_inner().expect("in-memory flush")).expect("utf-8 csv")
}
