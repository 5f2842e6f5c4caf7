//! Plain-language renderings of counterfactual results.
//!
//! Rejections become "if X had instead been ..." change lists; approvals
//! become per-feature tolerances. Both carry the same statements in a JSON
//! form that external tools can plot.

use serde::{Deserialize, Serialize};

use crate::data::FeatureSpec;
use crate::error::{Error, Result};
use crate::generator::{CfMode, CounterfactualResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExplanationKind {
    Negative,
    Positive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Increase,
    Decrease,
    Tolerance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Statement {
    pub feature: String,
    pub current: f64,
    pub counterfactual: f64,
    pub direction: Direction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Explanation {
    pub kind: ExplanationKind,
    /// Changed features, largest change relative to MAD first.
    pub statements: Vec<Statement>,
    /// Model score at the counterfactual.
    pub score: f64,
    pub valid: bool,
}

impl Explanation {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// An explanation together with its text form.
#[derive(Debug, Clone, PartialEq)]
pub struct Rendered {
    pub explanation: Explanation,
    pub text: String,
}

/// `1234567.891` with 2 decimals and prefix `$` → `$1,234,567.89`.
pub fn format_value(value: f64, spec: &FeatureSpec) -> String {
    let decimals = spec.display.decimals as usize;
    let text = format!("{:.*}", decimals, value.abs());
    let (int_part, frac_part) = match text.split_once('.') {
        Some((i, f)) => (i, Some(f)),
        None => (text.as_str(), None),
    };
    let mut grouped = String::new();
    for (k, ch) in int_part.chars().enumerate() {
        if k > 0 && (int_part.len() - k) % 3 == 0 {
            grouped.push(',');
        }
        grouped.push(ch);
    }
    // a value that rounds to zero prints without a sign
    let negative = value < 0.0 && text.chars().any(|c| c.is_ascii_digit() && c != '0');
    let mut out = String::new();
    if negative {
        out.push('-');
    }
    out.push_str(&spec.display.prefix);
    out.push_str(&grouped);
    if let Some(f) = frac_part {
        out.push('.');
        out.push_str(f);
    }
    out
}

fn capitalize(s: &str) -> String {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) => c.to_uppercase().chain(chars).collect(),
        None => String::new(),
    }
}

/// Indices of the changed mutable features, largest `|delta| / MAD` first
/// (ties by feature order).
fn changed_order(result: &CounterfactualResult, specs: &[FeatureSpec]) -> Result<Vec<usize>> {
    if result.deltas.len() != specs.len() || result.x_cf.len() != specs.len() {
        return Err(Error::DimensionMismatch {
            expected: specs.len(),
            actual: result.deltas.len(),
        });
    }
    let mut idx: Vec<usize> = (0..specs.len())
        .filter(|&j| specs[j].mutable && result.deltas[j].abs() > specs[j].change_threshold())
        .collect();
    idx.sort_by(|&a, &b| {
        let ra = result.deltas[a].abs() / specs[a].mad;
        let rb = result.deltas[b].abs() / specs[b].mad;
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    Ok(idx)
}

fn statements(
    result: &CounterfactualResult,
    specs: &[FeatureSpec],
    order: &[usize],
    positive: bool,
) -> Vec<Statement> {
    order
        .iter()
        .map(|&j| Statement {
            feature: specs[j].name.clone(),
            current: result.x_original[j],
            counterfactual: result.x_cf[j],
            direction: if positive {
                Direction::Tolerance
            } else if result.deltas[j] > 0.0 {
                Direction::Increase
            } else {
                Direction::Decrease
            },
        })
        .collect()
}

fn join_and(parts: &[String]) -> String {
    parts.join(" and ")
}

/// Change list for a rejected application.
pub fn render_negative(result: &CounterfactualResult, specs: &[FeatureSpec]) -> Result<Rendered> {
    if result.mode == CfMode::Positive {
        return Err(Error::Precondition(
            "render_negative needs a negative result".into(),
        ));
    }
    let order = changed_order(result, specs)?;
    let explanation = Explanation {
        kind: ExplanationKind::Negative,
        statements: statements(result, specs, &order, false),
        score: result.y_achieved,
        valid: result.valid,
    };
    if order.is_empty() {
        let text = if result.valid {
            "No change needed: the application is already at the boundary.".to_string()
        } else {
            format!(
                "No counterfactual found within budget: no change reached the target score {:.3}.",
                result.y_target
            )
        };
        return Ok(Rendered { explanation, text });
    }

    let because: Vec<String> = order
        .iter()
        .map(|&j| {
            format!(
                "{} is {}",
                specs[j].first_label(),
                format_value(result.x_original[j], &specs[j])
            )
        })
        .collect();
    let changes: Vec<String> = order
        .iter()
        .enumerate()
        .map(|(k, &j)| {
            let verb = if k == 0 {
                "had instead been"
            } else {
                "had been"
            };
            format!(
                "{} {verb} {}",
                specs[j].later_label(),
                format_value(result.x_cf[j], &specs[j])
            )
        })
        .collect();
    let reason = format!(
        "Your application was denied because {}.",
        join_and(&because)
    );
    let text = if result.valid {
        format!(
            "{reason} If {} and all other values remained constant, your application would have been approved.",
            join_and(&changes)
        )
    } else {
        format!(
            "No counterfactual found within budget. {reason} The closest candidate found: if {} and all other values remained constant, the score would have been {:.3} against a target of {:.3}.",
            join_and(&changes),
            result.y_achieved,
            result.y_target
        )
    };
    Ok(Rendered { explanation, text })
}

/// Per-feature tolerances for an accepted application.
pub fn render_positive(result: &CounterfactualResult, specs: &[FeatureSpec]) -> Result<Rendered> {
    if result.mode == CfMode::Negative {
        return Err(Error::Precondition(
            "render_positive needs a positive result".into(),
        ));
    }
    let order = changed_order(result, specs)?;
    let explanation = Explanation {
        kind: ExplanationKind::Positive,
        statements: statements(result, specs, &order, true),
        score: result.y_achieved,
        valid: result.valid,
    };
    if order.is_empty() {
        let text = if result.valid {
            "No margin: application is at the decision boundary.".to_string()
        } else {
            "No counterfactual found within budget: no change reached the decision boundary."
                .to_string()
        };
        return Ok(Rendered { explanation, text });
    }
    let mut lines = Vec::with_capacity(order.len() + 1);
    if result.valid {
        lines.push(format!(
            "Your application was approved (score {:.3}). How much was it accepted by:",
            result.y_original
        ));
    } else {
        lines.push(format!(
            "No counterfactual found within budget. The closest candidate found reached a score of {:.3} against a target of {:.3}:",
            result.y_achieved, result.y_target
        ));
    }
    for &j in &order {
        lines.push(format!(
            "- {} may move from {} to {} before approval is at risk, all else constant.",
            capitalize(specs[j].first_label()),
            format_value(result.x_original[j], &specs[j]),
            format_value(result.x_cf[j], &specs[j])
        ));
    }
    Ok(Rendered {
        explanation,
        text: lines.join("\n"),
    })
}

/// Picks the renderer matching the result's mode.
pub fn render(result: &CounterfactualResult, specs: &[FeatureSpec]) -> Result<Rendered> {
    match result.mode {
        CfMode::Positive => render_positive(result, specs),
        CfMode::Negative => render_negative(result, specs),
        CfMode::Target if result.y_target > result.y_original => render_negative(result, specs),
        CfMode::Target => render_positive(result, specs),
    }
}
