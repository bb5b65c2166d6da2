use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    NonDegenerate,
    Degenerate,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::NonDegenerate => "non_degenerate",
            Label::Degenerate => "degenerate",
        }
    }

    /// Class index used by the classifier.
    pub fn index(self) -> usize {
        match self {
            Label::NonDegenerate => super::model::NON_DEGENERATE,
            Label::Degenerate => super::model::DEGENERATE,
        }
    }

    pub fn from_index(i: usize) -> Self {
        if i == super::model::DEGENERATE {
            Label::Degenerate
        } else {
            Label::NonDegenerate
        }
    }
}

impl std::str::FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "degenerate" => Ok(Label::Degenerate),
            "non_degenerate" => Ok(Label::NonDegenerate),
            other => Err(Error::Usage(format!("unknown label '{other}'"))),
        }
    }
}

/// Default cut on the variance-to-mean ratio.
pub const R_THRESHOLD: f64 = 1.0;

/// Variance-to-mean ratio of raw importance weights (population variance).
pub fn r_value(weights: &[f64]) -> Result<f64> {
    if weights.is_empty() {
        return Err(Error::Domain("labeling needs at least one weight".into()));
    }
    let n = weights.len() as f64;
    let mean = weights.iter().sum::<f64>() / n;
    if !(mean > 0.0) || !mean.is_finite() {
        return Err(Error::Domain("weight mean must be positive".into()));
    }
    let var = weights.iter().map(|w| (w - mean) * (w - mean)).sum::<f64>() / n;
    Ok(var / mean)
}

/// `(R, label)` with degenerate iff `R > r_threshold`.
pub fn label_sample_with(weights: &[f64], r_threshold: f64) -> Result<(f64, Label)> {
    let r = r_value(weights)?;
    let label = if r > r_threshold {
        Label::Degenerate
    } else {
        Label::NonDegenerate
    };
    Ok((r, label))
}

pub fn label_sample(weights: &[f64]) -> Result<(f64, Label)> {
    label_sample_with(weights, R_THRESHOLD)
}
