use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// One enrollment/test pair. Ids are paths relative to the audio root.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Trial {
    pub is_target: bool,
    pub enroll_id: String,
    pub test_id: String,
}

impl Trial {
    pub fn new(is_target: bool, enroll_id: impl Into<String>, test_id: impl Into<String>) -> Self {
        Self {
            is_target,
            enroll_id: enroll_id.into(),
            test_id: test_id.into(),
        }
    }
}

#[derive(Debug, Error)]
pub enum TrialError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: expected `<0|1> <enroll> <test>`, got {got:?}")]
    Malformed { line: usize, got: String },
    #[error("line {line}: unknown label {label:?} (expected 0 or 1)")]
    UnknownLabel { line: usize, label: String },
    #[error("trial list is empty")]
    Empty,
}

/// Parses the three-column format `<label> <enroll> <test>`, label 1 = target.
/// Blank lines and lines starting with `#` are skipped.
pub fn parse_trials_str(text: &str) -> Result<Vec<Trial>, TrialError> {
    let mut trials = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.trim();
        if content.is_empty() || content.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = content.split_whitespace().collect();
        let [label, enroll, test] = fields[..] else {
            return Err(TrialError::Malformed {
                line,
                got: content.to_string(),
            });
        };
        let is_target = match label {
            "1" => true,
            "0" => false,
            other => {
                return Err(TrialError::UnknownLabel {
                    line,
                    label: other.to_string(),
                })
            }
        };
        trials.push(Trial::new(is_target, enroll, test));
    }
    if trials.is_empty() {
        return Err(TrialError::Empty);
    }
    Ok(trials)
}

pub fn parse_trials(path: &Path) -> Result<Vec<Trial>, TrialError> {
    let text = std::fs::read_to_string(path).map_err(|source| TrialError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_trials_str(&text)
}

pub fn format_trials(trials: &[Trial]) -> String {
    let mut out = String::new();
    for t in trials {
        let _ = writeln!(
            out,
            "{} {} {}",
            u8::from(t.is_target),
            t.enroll_id,
            t.test_id
        );
    }
    out
}

pub fn write_trials(path: &Path, trials: &[Trial]) -> Result<(), TrialError> {
    std::fs::write(path, format_trials(trials)).map_err(|source| TrialError::Io {
        path: path.to_path_buf(),
        source,
    })
}
