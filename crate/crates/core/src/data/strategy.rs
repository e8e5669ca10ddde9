//! Input transformations applied to each pair before encoding.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::snli::NliExample;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InputStrategy {
    #[default]
    Original,
    InvertPremises,
    DoublePremises,
    DoubleHypothesis,
    #[serde(rename = "differentiate")]
    DifferentiateInputs,
}

impl InputStrategy {
    pub const ALL: [InputStrategy; 5] = [
        InputStrategy::Original,
        InputStrategy::InvertPremises,
        InputStrategy::DoublePremises,
        InputStrategy::DoubleHypothesis,
        InputStrategy::DifferentiateInputs,
    ];

    pub fn name(self) -> &'static str {
        match self {
            InputStrategy::Original => "original",
            InputStrategy::InvertPremises => "invert-premises",
            InputStrategy::DoublePremises => "double-premises",
            InputStrategy::DoubleHypothesis => "double-hypothesis",
            InputStrategy::DifferentiateInputs => "differentiate",
        }
    }
}

impl fmt::Display for InputStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for InputStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| {
                let names: Vec<_> = Self::ALL.iter().map(|s| s.name()).collect();
                Error::Argument(format!("unknown strategy {s:?}; expected one of {}", names.join(", ")))
            })
    }
}

/// Removes every word the two sentences share (case-insensitive), keeping order.
///
/// If either side would become empty, both sides are returned unchanged.
pub fn differentiate_inputs(premise: &[String], hypothesis: &[String]) -> (Vec<String>, Vec<String>) {
    let norm = |ts: &[String]| -> HashSet<String> { ts.iter().map(|t| t.to_lowercase()).collect() };
    let p_set = norm(premise);
    let h_set = norm(hypothesis);
    let shared: HashSet<&String> = p_set.intersection(&h_set).collect();
    let keep = |ts: &[String]| -> Vec<String> {
        ts.iter().filter(|t| !shared.contains(&t.to_lowercase())).cloned().collect()
    };
    let (p, h) = (keep(premise), keep(hypothesis));
    if p.is_empty() || h.is_empty() {
        (premise.to_vec(), hypothesis.to_vec())
    } else {
        (p, h)
    }
}

pub fn apply_input_strategy(ex: &NliExample, strategy: InputStrategy) -> NliExample {
    let mut out = ex.clone();
    match strategy {
        InputStrategy::Original => {}
        InputStrategy::InvertPremises => out.premise.reverse(),
        InputStrategy::DoublePremises => out.premise.extend_from_slice(&ex.premise),
        InputStrategy::DoubleHypothesis => out.hypothesis.extend_from_slice(&ex.hypothesis),
        InputStrategy::DifferentiateInputs => {
            let (p, h) = differentiate_inputs(&ex.premise, &ex.hypothesis);
            out.premise = p;
            out.hypothesis = h;
        }
    }
    out
}
