//! Expression-neutrality quality scores.
//!
//! The neutral-class confidence of a trained classifier is the component
//! quality; the integer score is `round_half_up(100 * confidence)`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use thiserror::Error;

use crate::codec::{combine, FeatureRecord};
use crate::learners::{predict_confidence, LearnerError, TrainedClassifier};

#[derive(Debug, Error)]
pub enum ScoreError {
    #[error("sample {sample_id}: {source}")]
    Predict {
        sample_id: String,
        #[source]
        source: LearnerError,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("scores line {line}: {message}")]
    Parse { line: usize, message: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct NeutralityQuality {
    pub sample_id: String,
    pub confidence: f64,
    pub quality: u8,
}

impl NeutralityQuality {
    pub fn from_confidence(sample_id: impl Into<String>, confidence: f64) -> Self {
        Self {
            sample_id: sample_id.into(),
            confidence,
            quality: quality_score(confidence),
        }
    }
}

pub fn quality_score(confidence: f64) -> u8 {
    (100.0 * confidence.clamp(0.0, 1.0) + 0.5).floor() as u8
}

/// Scores records in input order. Work is spread over the rayon pool.
pub fn score_samples(
    model: &TrainedClassifier,
    records: &[FeatureRecord],
) -> Result<Vec<NeutralityQuality>, ScoreError> {
    records
        .par_iter()
        .map(|r| {
            let x = combine(r, model.scheme());
            predict_confidence(model, &x)
                .map(|c| NeutralityQuality::from_confidence(r.sample_id(), c.value()))
                .map_err(|source| ScoreError::Predict {
                    sample_id: r.sample_id().to_string(),
                    source,
                })
        })
        .collect()
}

/// Formats `x` with nine significant digits in positional notation.
pub fn format_significant(x: f64, digits: usize) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{:.*}", digits.saturating_sub(1), x);
    }
    let exponent = x.abs().log10().floor() as i64;
    let decimals = (digits as i64 - 1 - exponent).max(0) as usize;
    let text = format!("{x:.decimals$}");
    // Rounding can carry into a new leading digit (0.99999999996 -> 1.000000000).
    let reparsed: f64 = text.parse().unwrap_or(x);
    if reparsed != 0.0 && reparsed.abs().log10().floor() as i64 > exponent && decimals > 0 {
        return format!("{x:.prec$}", prec = decimals - 1);
    }
    text
}

pub const SCORES_HEADER: &str = "sample_id,confidence,quality";

pub fn format_scores(scores: &[NeutralityQuality]) -> String {
    let mut out = String::from(SCORES_HEADER);
    out.push('\n');
    for s in scores {
        writeln!(out, "{},{},{}", s.sample_id, format_significant(s.confidence, 9), s.quality).unwrap();
    }
    out
}

pub fn write_scores(path: impl AsRef<Path>, scores: &[NeutralityQuality]) -> Result<(), ScoreError> {
    let path = path.as_ref();
    fs::write(path, format_scores(scores)).map_err(|source| ScoreError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn parse_scores(text: &str) -> Result<Vec<NeutralityQuality>, ScoreError> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.trim() == SCORES_HEADER => {}
        _ => {
            return Err(ScoreError::Parse {
                line: 1,
                message: format!("expected header {SCORES_HEADER:?}"),
            })
        }
    }
    let mut out = Vec::new();
    for (idx, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let err = |message: String| ScoreError::Parse { line: idx + 1, message };
        let fields: Vec<&str> = line.split(',').collect();
        let [id, conf, quality] = fields[..] else {
            return Err(err(format!("expected 3 fields, found {}", fields.len())));
        };
        let confidence: f64 = conf.parse().map_err(|_| err(format!("bad confidence {conf:?}")))?;
        if !(0.0..=1.0).contains(&confidence) {
            return Err(err(format!("confidence {confidence} outside [0, 1]")));
        }
        let quality: u8 = quality.parse().map_err(|_| err(format!("bad quality {quality:?}")))?;
        out.push(NeutralityQuality {
            sample_id: id.to_string(),
            confidence,
            quality,
        });
    }
    Ok(out)
}

pub fn read_scores(path: impl AsRef<Path>) -> Result<Vec<NeutralityQuality>, ScoreError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| ScoreError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_scores(&text)
}
