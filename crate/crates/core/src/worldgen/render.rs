//! Text observations in the layouts used by the prompts: CSV for the
//! reviewer table, pipe tables for flights and calendars, a plain list of
//! travel preferences and a dict-per-line site database.

use std::fmt::Write;

use super::planning::{format_number, FeatureValue, Site};
use super::{AgentView, EventView, World};
use crate::task::Role;

/// Renders what `role` observes at the start of an episode. Returns an empty
/// string for roles outside the task's roster.
pub fn render_observation(world: &World, role: Role) -> String {
    match AgentView::of(world, role) {
        Some(view) => render_view(&view),
        None => String::new(),
    }
}

pub fn render_view(view: &AgentView) -> String {
    let mut out = String::new();
    match view {
        AgentView::Optimization {
            reviewers,
            papers,
            cells,
            ..
        } => {
            out.push_str("Reviewer Paper Similarity Scores:\n");
            out.push(',');
            out.push_str(&papers.join(","));
            for (name, row) in reviewers.iter().zip(cells) {
                out.push('\n');
                out.push_str(name);
                for cell in row {
                    out.push(',');
                    if let Some(v) = cell {
                        write!(out, "{v}").unwrap();
                    }
                }
            }
        }
        AgentView::PlanningUser { preferences, .. } => {
            out.push_str("Travel Preferences:");
            for p in preferences {
                out.push('\n');
                out.push_str(p);
            }
        }
        AgentView::PlanningAssistant { sites, .. } => {
            out.push_str("Database:");
            for site in sites {
                out.push('\n');
                out.push_str(&site_record(site));
            }
        }
        AgentView::MediationUser {
            flights,
            private_calendar,
            shared_calendar,
            ..
        } => {
            out.push_str("Flights:\nid | carrier | price | times");
            for f in flights {
                write!(out, "\n{}", f.row()).unwrap();
            }
            out.push_str("\nPrivate calendar:");
            calendar(&mut out, private_calendar, true);
            out.push_str("\nShared calendar (visible to assistant):");
            calendar(&mut out, shared_calendar, true);
        }
        AgentView::MediationAssistant { users } => {
            for (i, user) in users.iter().enumerate() {
                if i > 0 {
                    out.push('\n');
                }
                write!(out, "User {i} Information\nFlights:\nid | carrier | price | times").unwrap();
                for f in &user.flights {
                    write!(out, "\n{}", f.row()).unwrap();
                }
                out.push_str("\nCalendar:");
                calendar(&mut out, &user.calendar, false);
            }
        }
    }
    out
}

fn calendar(out: &mut String, events: &[EventView], with_importance: bool) {
    if with_importance {
        out.push_str("\nid | importance | times");
    } else {
        out.push_str("\nid | times");
    }
    for e in events {
        match (with_importance, e.importance) {
            (true, Some(imp)) => write!(out, "\n{} | ({imp}) | {}", e.id, e.times).unwrap(),
            _ => write!(out, "\n{} | {}", e.id, e.times).unwrap(),
        }
    }
}

/// Python-literal string quoting: single quotes unless the text contains one.
fn py_str(s: &str) -> String {
    if s.contains('\'') && !s.contains('"') {
        format!("\"{s}\"")
    } else {
        format!("'{}'", s.replace('\'', "\\'"))
    }
}

fn py_value(v: &FeatureValue) -> String {
    match v {
        FeatureValue::Bool(b) => if *b { "True" } else { "False" }.to_string(),
        FeatureValue::Rating(r) => format_number(*r),
        FeatureValue::Text(t) => py_str(t),
    }
}

/// One site as a dict literal with sorted keys.
pub fn site_record(site: &Site) -> String {
    let features: Vec<String> = site
        .features
        .iter()
        .map(|(f, v)| format!("{}: {}", py_str(f.name()), py_value(v)))
        .collect();
    format!(
        "{{'est_price': {}, 'etype': {}, 'features': {{{}}}, 'loc': [{}, {}], 'name': {}}}",
        site.price,
        py_str(site.category.name()),
        features.join(", "),
        site.location[0],
        site.location[1],
        py_str(&site.name)
    )
}
