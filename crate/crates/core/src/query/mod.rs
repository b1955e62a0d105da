//! The Planning assistant's `Search(...)` tool.
//!
//! A small DSL over the site database:
//!
//! ```text
//! Search(fields=[name, price], filters=[category == restaurant, price <= 40],
//!        text_query=live music, sort_by=[distance_to(Mad Seoul), price], limit=3)
//! ```
//!
//! Filters may only use `name`, `category` and `price`. Everything else goes
//! through `text_query`, which is matched deterministically against feature
//! names, feature values and category synonyms (see [`exec`]).

mod exec;
mod parse;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use exec::{execute, run_query};
pub use parse::parse_query;

use crate::worldgen::planning::format_number;

/// Fields a filter may reference.
pub const FILTERABLE: [&str; 3] = ["name", "category", "price"];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Comparator {
    #[serde(rename = "==")]
    Eq,
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = ">=")]
    Ge,
    #[serde(rename = "<")]
    Lt,
    #[serde(rename = ">")]
    Gt,
}

impl Comparator {
    pub fn symbol(self) -> &'static str {
        match self {
            Comparator::Eq => "==",
            Comparator::Le => "<=",
            Comparator::Ge => ">=",
            Comparator::Lt => "<",
            Comparator::Gt => ">",
        }
    }

    pub fn holds<T: PartialOrd>(self, lhs: &T, rhs: &T) -> bool {
        match self {
            Comparator::Eq => lhs == rhs,
            Comparator::Le => lhs <= rhs,
            Comparator::Ge => lhs >= rhs,
            Comparator::Lt => lhs < rhs,
            Comparator::Gt => lhs > rhs,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FilterField {
    Name,
    Category,
    Price,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Filter {
    pub field: FilterField,
    pub op: Comparator,
    pub value: String,
}

/// One bracket element of `filters=[...]`: a disjunction of conjunctions.
/// A plain `category == park` is `[[that filter]]`.
pub type FilterGroup = Vec<Vec<Filter>>;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SortKey {
    Field(String),
    DistanceTo(String),
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Query {
    pub fields: Vec<String>,
    /// All groups must hold.
    pub filters: Vec<FilterGroup>,
    pub text_query: Option<String>,
    pub sort_by: Vec<SortKey>,
    pub limit: Option<usize>,
}

impl Query {
    /// The `distance_to` anchor, if any sort key names one.
    pub fn anchor(&self) -> Option<&str> {
        self.sort_by.iter().find_map(|k| match k {
            SortKey::DistanceTo(site) => Some(site.as_str()),
            SortKey::Field(_) => None,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum QueryError {
    #[error("You cannot filter by {field}. Try searching with a text query instead.")]
    NotFilterable { field: String },
    #[error("Syntax error at position {position}: {message}")]
    Syntax { position: usize, message: String },
    #[error("Unknown field '{0}'.")]
    UnknownField(String),
    #[error("You cannot sort by {0}.")]
    NotSortable(String),
    #[error("Unknown site '{0}' in distance_to.")]
    UnknownAnchor(String),
    #[error("Only one distance_to anchor is supported per query.")]
    MultipleAnchors,
    #[error("The distance field needs a distance_to(...) sort key.")]
    DistanceWithoutAnchor,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResultTable {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl ResultTable {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

pub const NO_RESULTS: &str = "Search Results: No results";

/// `Search Results (N):`, the `|`-joined header, then one line per row.
pub fn render_results(table: &ResultTable) -> String {
    if table.is_empty() {
        return NO_RESULTS.to_string();
    }
    let mut out = format!("Search Results ({}):\n{}", table.len(), table.columns.join("|"));
    for row in &table.rows {
        out.push('\n');
        out.push_str(&row.join("|"));
    }
    out
}

/// Inverse of [`render_results`]. Returns `None` for text that is not a
/// result listing.
pub fn parse_results(text: &str) -> Option<ResultTable> {
    let text = text.trim_end_matches('\n');
    if text == NO_RESULTS {
        return Some(ResultTable {
            columns: vec![],
            rows: vec![],
        });
    }
    let mut lines = text.split('\n');
    let n: usize = lines
        .next()?
        .strip_prefix("Search Results (")?
        .strip_suffix("):")?
        .parse()
        .ok()?;
    let columns: Vec<String> = lines.next()?.split('|').map(str::to_string).collect();
    let rows: Vec<Vec<String>> = lines
        .map(|l| l.split('|').map(str::to_string).collect())
        .collect();
    (rows.len() == n && rows.iter().all(|r| r.len() == columns.len())).then_some(ResultTable { columns, rows })
}

/// Distances are shown in miles with exactly one decimal.
pub fn format_distance(miles: f64) -> String {
    format!("{:.1}", crate::scoring::itinerary::display_miles(miles))
}

pub(crate) fn format_price(price: u32) -> String {
    format_number(f64::from(price))
}
