//! NLI labels and per-label probability triples.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Tolerance for a probability triple to count as normalized.
pub const PROB_SUM_TOLERANCE: f64 = 1e-6;

/// One of the three NLI classes.
///
/// The derived ordering (`Entailment < Neutral < Contradiction`) is the
/// tie-breaking order used everywhere a label has to be picked among equals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Entailment,
    Neutral,
    Contradiction,
}

impl Label {
    pub const ALL: [Label; 3] = [Label::Entailment, Label::Neutral, Label::Contradiction];

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Entailment => "entailment",
            Label::Neutral => "neutral",
            Label::Contradiction => "contradiction",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown label {0:?} (expected entailment, neutral or contradiction)")]
pub struct ParseLabelError(pub String);

impl FromStr for Label {
    type Err = ParseLabelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "entailment" => Ok(Label::Entailment),
            "neutral" => Ok(Label::Neutral),
            "contradiction" => Ok(Label::Contradiction),
            other => Err(ParseLabelError(other.to_string())),
        }
    }
}

/// Label probabilities as written in checkpoint logs and scorer responses:
/// `{"entailment": p, "neutral": p, "contradiction": p}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbTriple {
    pub entailment: f64,
    pub neutral: f64,
    pub contradiction: f64,
}

impl ProbTriple {
    pub fn new(entailment: f64, neutral: f64, contradiction: f64) -> Self {
        Self {
            entailment,
            neutral,
            contradiction,
        }
    }

    /// `p` on `gold`; the remaining mass split 60/40 over the other two
    /// labels in label order.
    pub fn with_gold(gold: Label, p: f64) -> Self {
        let rest = 1.0 - p;
        let mut t = [0.0; 3];
        t[gold.index()] = p;
        let others: Vec<usize> = (0..3).filter(|&i| i != gold.index()).collect();
        t[others[0]] = rest * 0.6;
        t[others[1]] = rest - rest * 0.6;
        Self::new(t[0], t[1], t[2])
    }

    pub fn get(&self, label: Label) -> f64 {
        match label {
            Label::Entailment => self.entailment,
            Label::Neutral => self.neutral,
            Label::Contradiction => self.contradiction,
        }
    }

    pub fn sum(&self) -> f64 {
        self.entailment + self.neutral + self.contradiction
    }

    /// Each entry finite and in `[0, 1]`, and the sum within
    /// [`PROB_SUM_TOLERANCE`] of one. Nothing is renormalized.
    pub fn is_normalized(&self) -> bool {
        let in_range = Label::ALL.iter().all(|&l| {
            let p = self.get(l);
            p.is_finite() && (0.0..=1.0).contains(&p)
        });
        in_range && (self.sum() - 1.0).abs() <= PROB_SUM_TOLERANCE
    }

    /// Most probable label; exact ties go to the earlier label.
    pub fn argmax(&self) -> Label {
        let mut best = Label::Entailment;
        for label in [Label::Neutral, Label::Contradiction] {
            if self.get(label) > self.get(best) {
                best = label;
            }
        }
        best
    }
}
