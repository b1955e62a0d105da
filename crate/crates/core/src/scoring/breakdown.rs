//! Scorecards shown to users after a proposal, and their text layout.
//!
//! Component scores are kept unrounded in [`RewardBreakdown`]. Rendering
//! rounds each component half away from zero, and the printed total is the sum
//! of the printed components so the arithmetic line always checks out.

use std::fmt::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::task::Task;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreItem {
    pub label: String,
    /// `None` renders as an `Empty` slot.
    pub score: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub details: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChecklistEntry {
    pub satisfied: bool,
    pub label: String,
    pub score: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    /// First line of a Mediation scorecard: the proposed flight row.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub heading: Option<String>,
    pub items: Vec<ScoreItem>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub checklist: Vec<ChecklistEntry>,
    pub total: f64,
}

impl RewardBreakdown {
    /// Builds a breakdown whose total is the in-order sum of its components.
    pub fn new(heading: Option<String>, items: Vec<ScoreItem>, checklist: Vec<ChecklistEntry>) -> Self {
        let total = component_sum(&items, &checklist);
        RewardBreakdown {
            heading,
            items,
            checklist,
            total,
        }
    }

    /// Rounded components in display order, `Empty` items counting as 0.
    pub fn display_terms(&self) -> Vec<i64> {
        self.items
            .iter()
            .map(|i| i.score.map_or(0, round_half_away))
            .chain(self.checklist.iter().map(|c| round_half_away(c.score)))
            .collect()
    }

    pub fn display_total(&self) -> i64 {
        self.display_terms().iter().sum()
    }
}

/// Items then checklist entries, accumulated left to right.
pub fn component_sum(items: &[ScoreItem], checklist: &[ChecklistEntry]) -> f64 {
    let acc = items
        .iter()
        .fold(0.0, |acc, i| acc + i.score.unwrap_or(0.0));
    checklist.iter().fold(acc, |acc, c| acc + c.score)
}

pub fn round_half_away(x: f64) -> i64 {
    // f64::round already rounds half away from zero.
    x.round() as i64
}

fn signed(n: i64) -> String {
    if n < 0 {
        n.to_string()
    } else {
        format!("+{n}")
    }
}

pub const MEETINGS_LABEL: &str = "Try not to skip important meetings";
pub const PRICE_LABEL: &str = "Get a good deal on the flight price";
pub const CLOSENESS_LABEL: &str = "Have everyone arrive around the same time";

/// Text scorecard for `task`. Optimization proposals carry no scorecard, so
/// that task renders only the total line.
pub fn render_feedback(breakdown: &RewardBreakdown, task: Task) -> String {
    match task {
        Task::Planning => render_planning(breakdown),
        Task::Mediation => render_mediation(breakdown),
        Task::Optimization => format!("Total score: {}", breakdown.display_total()),
    }
}

fn render_planning(b: &RewardBreakdown) -> String {
    let mut out = String::from("Proposal Score:");
    for (n, item) in b.items.iter().enumerate() {
        match item.score {
            Some(score) => {
                write!(out, "\n{}) (score: {}) {}", n + 1, round_half_away(score), item.label).unwrap();
                for d in &item.details {
                    write!(out, "\n{d}").unwrap();
                }
            }
            None => write!(out, "\n{}) Empty", n + 1).unwrap(),
        }
    }
    out.push_str("\n\nOverall Checklist:");
    for c in &b.checklist {
        write!(
            out,
            "\n{} (score: {}) {}",
            if c.satisfied { "YES" } else { "NO" },
            round_half_away(c.score),
            c.label
        )
        .unwrap();
    }
    let terms: String = b.display_terms().into_iter().map(signed).collect();
    write!(out, "\nTOTAL SCORE: {terms}={}", b.display_total()).unwrap();
    out
}

fn render_mediation(b: &RewardBreakdown) -> String {
    let mut lines: Vec<String> = Vec::new();
    if let Some(h) = &b.heading {
        lines.push(h.clone());
    }
    let conflicts: Vec<&String> = b.items.iter().flat_map(|i| i.details.iter()).collect();
    if !conflicts.is_empty() {
        lines.push("Conflicting meetings:".into());
        for c in conflicts {
            lines.push("importance | times".into());
            lines.push(c.clone());
        }
    }
    lines.push("Score:".into());
    for item in &b.items {
        lines.push(format!(
            "- ({}) {}",
            item.score.map_or(0, round_half_away),
            item.label
        ));
    }
    lines.push(format!("Total score: {}", b.display_total()));
    lines.join("\n")
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("scorecard line {line}: {message}")]
pub struct FeedbackParseError {
    pub line: usize,
    pub message: String,
}

fn perr(line: usize, message: impl Into<String>) -> FeedbackParseError {
    FeedbackParseError {
        line: line + 1,
        message: message.into(),
    }
}

/// Inverse of [`render_feedback`]. Scores come back as the rounded integers
/// that were printed; the printed total is checked against the terms.
pub fn parse_feedback(text: &str, task: Task) -> Result<RewardBreakdown, FeedbackParseError> {
    match task {
        Task::Planning => parse_planning(text),
        Task::Mediation => parse_mediation(text),
        Task::Optimization => {
            let n = text
                .trim()
                .strip_prefix("Total score: ")
                .and_then(|s| s.parse::<i64>().ok())
                .ok_or_else(|| perr(0, "expected 'Total score: n'"))?;
            Ok(RewardBreakdown::new(
                None,
                vec![ScoreItem {
                    label: "total".into(),
                    score: Some(n as f64),
                    details: vec![],
                }],
                vec![],
            ))
        }
    }
}

fn parse_score_paren(s: &str, prefix: &str, line: usize) -> Result<(i64, String), FeedbackParseError> {
    let rest = s
        .strip_prefix(prefix)
        .ok_or_else(|| perr(line, format!("expected '{prefix}'")))?;
    let close = rest.find(')').ok_or_else(|| perr(line, "unclosed score"))?;
    let n = rest[..close]
        .trim()
        .parse::<i64>()
        .map_err(|_| perr(line, "score is not an integer"))?;
    let label = rest[close + 1..].strip_prefix(' ').unwrap_or(&rest[close + 1..]);
    Ok((n, label.to_string()))
}

/// `"3) ..."` -> `Some(("3", "..."))`
fn numbered(line: &str) -> Option<&str> {
    let digits = line.bytes().take_while(u8::is_ascii_digit).count();
    if digits == 0 {
        return None;
    }
    line[digits..].strip_prefix(") ")
}

fn parse_planning(text: &str) -> Result<RewardBreakdown, FeedbackParseError> {
    let lines: Vec<&str> = text.lines().collect();
    if lines.first() != Some(&"Proposal Score:") {
        return Err(perr(0, "expected 'Proposal Score:'"));
    }
    let mut items: Vec<ScoreItem> = Vec::new();
    let mut i = 1;
    while i < lines.len() && !lines[i].is_empty() {
        let line = lines[i];
        let rest = numbered(line).ok_or_else(|| perr(i, "expected a numbered item"))?;
        if rest == "Empty" {
            items.push(ScoreItem {
                label: String::new(),
                score: None,
                details: vec![],
            });
        } else {
            let (n, label) = parse_score_paren(rest, "(score:", i)?;
            items.push(ScoreItem {
                label,
                score: Some(n as f64),
                details: vec![],
            });
        }
        i += 1;
        while i < lines.len() && !lines[i].is_empty() && numbered(lines[i]).is_none() {
            items
                .last_mut()
                .expect("item pushed above")
                .details
                .push(lines[i].to_string());
            i += 1;
        }
    }
    i += 1;
    if lines.get(i) != Some(&"Overall Checklist:") {
        return Err(perr(i, "expected 'Overall Checklist:'"));
    }
    i += 1;
    let mut checklist = Vec::new();
    while i < lines.len() && !lines[i].starts_with("TOTAL SCORE: ") {
        let line = lines[i];
        let (satisfied, rest) = if let Some(r) = line.strip_prefix("YES ") {
            (true, r)
        } else if let Some(r) = line.strip_prefix("NO ") {
            (false, r)
        } else {
            return Err(perr(i, "expected a YES/NO checklist entry"));
        };
        let (n, label) = parse_score_paren(rest, "(score:", i)?;
        checklist.push(ChecklistEntry {
            satisfied,
            label,
            score: n as f64,
        });
        i += 1;
    }
    let total_line = lines.get(i).ok_or_else(|| perr(i, "missing TOTAL SCORE line"))?;
    let breakdown = RewardBreakdown::new(None, items, checklist);
    let expected: String = breakdown.display_terms().into_iter().map(signed).collect();
    let expected = format!("TOTAL SCORE: {expected}={}", breakdown.display_total());
    if *total_line != expected {
        return Err(perr(i, format!("total line does not match terms, expected '{expected}'")));
    }
    if i + 1 != lines.len() {
        return Err(perr(i + 1, "trailing text after TOTAL SCORE"));
    }
    Ok(breakdown)
}

fn parse_mediation(text: &str) -> Result<RewardBreakdown, FeedbackParseError> {
    let lines: Vec<&str> = text.lines().collect();
    let mut i = 0;
    let mut heading = None;
    if let Some(first) = lines.first() {
        if *first != "Conflicting meetings:" && *first != "Score:" {
            heading = Some(first.to_string());
            i = 1;
        }
    }
    let mut conflicts = Vec::new();
    if lines.get(i) == Some(&"Conflicting meetings:") {
        i += 1;
        while lines.get(i) == Some(&"importance | times") {
            let row = lines.get(i + 1).ok_or_else(|| perr(i + 1, "missing meeting row"))?;
            conflicts.push(row.to_string());
            i += 2;
        }
    }
    if lines.get(i) != Some(&"Score:") {
        return Err(perr(i, "expected 'Score:'"));
    }
    i += 1;
    let mut items = Vec::new();
    while let Some(line) = lines.get(i) {
        if line.starts_with("Total score: ") {
            break;
        }
        let (n, label) = parse_score_paren(line, "- (", i)?;
        items.push(ScoreItem {
            label,
            score: Some(n as f64),
            details: vec![],
        });
        i += 1;
    }
    if let Some(first) = items.first_mut() {
        first.details = conflicts;
    } else if !conflicts.is_empty() {
        return Err(perr(i, "conflicting meetings without score lines"));
    }
    let breakdown = RewardBreakdown::new(heading, items, vec![]);
    let total = lines
        .get(i)
        .and_then(|l| l.strip_prefix("Total score: "))
        .and_then(|s| s.parse::<i64>().ok())
        .ok_or_else(|| perr(i, "expected 'Total score: n'"))?;
    if total != breakdown.display_total() {
        return Err(perr(i, "total does not match score lines"));
    }
    if i + 1 != lines.len() {
        return Err(perr(i + 1, "trailing text after total"));
    }
    Ok(breakdown)
}
