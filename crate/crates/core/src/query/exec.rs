//! Query evaluation over a Planning site database.
//!
//! Text queries are matched by keyword. The query is lower-cased and split
//! into words, then the longest known phrase is taken greedily at each
//! position: feature names and their synonyms, categories and their
//! synonyms, and categorical feature values. A feature term matches any site
//! that lists the feature, whatever its value, so the value can be read off
//! a requested column. Stop words are skipped. Any other word matches no
//! site. All terms must match.

use std::collections::BTreeMap;
use std::collections::BTreeSet;

use once_cell::sync::Lazy;
use serde::Deserialize;

use super::{
    format_distance, format_price, parse_query, render_results, Filter, FilterField, Query,
    QueryError, ResultTable, SortKey,
};
use crate::worldgen::planning::{
    Category, Feature, FeatureValue, PlanningWorld, Site, ALCOHOL_TYPES, AMBIENCES, CUISINES,
};

const STOP_WORDS: &[&str] = &[
    "a", "an", "and", "any", "are", "at", "for", "in", "is", "of", "on", "or", "place", "places", "some",
    "somewhere", "spot", "spots", "that", "the", "to", "with",
];

/// Longest phrase, in words, looked up in the term table.
const MAX_PHRASE: usize = 4;

#[derive(Deserialize)]
struct SynonymFile {
    features: BTreeMap<String, String>,
    categories: BTreeMap<String, Vec<String>>,
}

#[derive(Clone, Debug, PartialEq)]
enum Term {
    Feature(Feature),
    Category(BTreeSet<Category>),
    Value(Feature, String),
    Unknown(String),
}

static TERMS: Lazy<BTreeMap<String, Term>> = Lazy::new(|| {
    let file: SynonymFile =
        serde_json::from_str(include_str!("../../data/synonyms.json")).expect("valid synonyms.json");
    let mut terms = BTreeMap::new();
    for (feature, values) in [
        (Feature::Cuisine, CUISINES),
        (Feature::Ambience, AMBIENCES),
        (Feature::AlcoholType, ALCOHOL_TYPES),
    ] {
        for v in values {
            terms.insert(v.to_string(), Term::Value(feature, v.to_string()));
        }
    }
    for (phrase, categories) in &file.categories {
        let set = categories
            .iter()
            .map(|c| Category::from_name(c).unwrap_or_else(|| panic!("synonyms.json: unknown category {c}")))
            .collect();
        terms.insert(phrase.clone(), Term::Category(set));
    }
    for c in Category::ALL {
        terms.insert(c.name().to_string(), Term::Category(BTreeSet::from([c])));
    }
    for (phrase, feature) in &file.features {
        let f = Feature::from_name(feature).unwrap_or_else(|| panic!("synonyms.json: unknown feature {feature}"));
        terms.insert(phrase.clone(), Term::Feature(f));
    }
    for f in Feature::ALL {
        terms.insert(f.name().to_string(), Term::Feature(f));
    }
    terms
});

fn text_terms(text: &str) -> Vec<Term> {
    let cleaned: String = text
        .to_lowercase()
        .chars()
        .map(|c| if c.is_alphanumeric() || c == '-' || c == '\'' { c } else { ' ' })
        .collect();
    let words: Vec<&str> = cleaned.split_whitespace().collect();
    let mut terms = Vec::new();
    let mut i = 0;
    while i < words.len() {
        let hit = (1..=MAX_PHRASE.min(words.len() - i))
            .rev()
            .find_map(|n| TERMS.get(&words[i..i + n].join(" ")).map(|t| (n, t.clone())));
        match hit {
            Some((n, term)) => {
                terms.push(term);
                i += n;
            }
            None => {
                if !STOP_WORDS.contains(&words[i]) {
                    terms.push(Term::Unknown(words[i].to_string()));
                }
                i += 1;
            }
        }
    }
    terms
}

fn term_matches(term: &Term, site: &Site) -> bool {
    match term {
        Term::Feature(f) => site.features.contains_key(f),
        Term::Category(set) => set.contains(&site.category),
        Term::Value(f, v) => matches!(site.features.get(f), Some(FeatureValue::Text(t)) if t.eq_ignore_ascii_case(v)),
        Term::Unknown(_) => false,
    }
}

fn filter_matches(filter: &Filter, site: &Site) -> bool {
    match filter.field {
        FilterField::Name => site.name.eq_ignore_ascii_case(&filter.value),
        FilterField::Category => site.category.name().eq_ignore_ascii_case(&filter.value),
        FilterField::Price => {
            let rhs: f64 = filter.value.parse().expect("validated at parse time");
            filter.op.holds(&f64::from(site.price), &rhs)
        }
    }
}

/// True when the site passes every filter group of the query.
pub(crate) fn passes_filters(query: &Query, site: &Site) -> bool {
    query
        .filters
        .iter()
        .all(|group| group.iter().any(|conj| conj.iter().all(|f| filter_matches(f, site))))
}

fn cell(site: &Site, column: &str, distance: Option<f64>) -> String {
    match column {
        "name" => site.name.clone(),
        "category" => site.category.name().to_string(),
        "price" => format_price(site.price),
        "info" => site.info(),
        "distance" => distance.map(format_distance).unwrap_or_default(),
        feature => Feature::from_name(feature)
            .and_then(|f| site.features.get(&f))
            .map_or_else(|| "N/A".to_string(), |v| v.to_string()),
    }
}

pub fn execute(query: &Query, world: &PlanningWorld) -> Result<ResultTable, QueryError> {
    let anchor = query
        .anchor()
        .map(|name| world.site_index(name).ok_or_else(|| QueryError::UnknownAnchor(name.to_string())))
        .transpose()?;

    let mut columns = query.fields.clone();
    if let Some(a) = anchor {
        if !columns.iter().any(|c| c == "distance") {
            columns.push(format!("distance_to({})", world.sites[a].name));
        }
    }

    let terms = query.text_query.as_deref().map(text_terms).unwrap_or_default();
    let mut hits: Vec<usize> = (0..world.sites.len())
        .filter(|&i| {
            let site = &world.sites[i];
            passes_filters(query, site) && terms.iter().all(|t| term_matches(t, site))
        })
        .collect();

    if !query.sort_by.is_empty() {
        let dist = |i: usize| anchor.map_or(0.0, |a| world.distance(a, i));
        hits.sort_by(|&a, &b| {
            let (sa, sb) = (&world.sites[a], &world.sites[b]);
            query
                .sort_by
                .iter()
                .map(|key| match key {
                    SortKey::DistanceTo(_) => dist(a).total_cmp(&dist(b)),
                    SortKey::Field(f) => match f.as_str() {
                        "price" => sa.price.cmp(&sb.price),
                        "category" => sa.category.name().cmp(sb.category.name()),
                        _ => sa.name.to_lowercase().cmp(&sb.name.to_lowercase()),
                    },
                })
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
                .then_with(|| sa.name.cmp(&sb.name))
        });
    }
    if let Some(limit) = query.limit {
        hits.truncate(limit);
    }

    let rows = hits
        .into_iter()
        .map(|i| {
            let distance = anchor.map(|a| world.distance(a, i));
            let site = &world.sites[i];
            columns
                .iter()
                .map(|c| {
                    if c.starts_with("distance_to(") {
                        cell(site, "distance", distance)
                    } else {
                        cell(site, c, distance)
                    }
                })
                .collect()
        })
        .collect();
    Ok(ResultTable { columns, rows })
}

/// Parses, executes and renders a query. Errors come back as the text an
/// agent would see in place of results.
pub fn run_query(text: &str, world: &PlanningWorld) -> String {
    match parse_query(text).and_then(|q| execute(&q, world)) {
        Ok(table) => render_results(&table),
        Err(e) => e.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::query::Comparator;

    #[test]
    fn phrases_win_over_words() {
        assert_eq!(text_terms("good for kids"), vec![Term::Feature(Feature::GoodForKids)]);
        assert_eq!(text_terms("Kid-Friendly parks"), vec![
            Term::Feature(Feature::GoodForKids),
            Term::Category(BTreeSet::from([Category::Park]))
        ]);
        assert_eq!(text_terms("a place with korean food").len(), 2);
        assert_eq!(text_terms("concert"), vec![Term::Unknown("concert".into())]);
    }

    #[test]
    fn comparator_symbols_round_trip() {
        for op in [Comparator::Eq, Comparator::Le, Comparator::Ge, Comparator::Lt, Comparator::Gt] {
            let json = serde_json::to_string(&op).unwrap();
            assert_eq!(json, format!("\"{}\"", op.symbol()));
        }
    }
}
