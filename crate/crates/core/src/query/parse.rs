//! Parser for the `Search(...)` surface syntax.
//!
//! Values are split on top-level commas while respecting brackets and quotes.
//! A quote only opens at the start of a token, so bare names such as
//! `Saul's` survive unquoted. `text_query` may be bare and may even contain
//! commas: a comma only ends an argument when it is followed by `key=`.

use super::{Comparator, Filter, FilterField, FilterGroup, Query, QueryError, SortKey, FILTERABLE};
use crate::worldgen::planning::Feature;

const KEYS: [&str; 5] = ["fields", "filters", "text_query", "sort_by", "limit"];

/// Columns that are not site features.
const BASE_COLUMNS: [&str; 5] = ["name", "category", "price", "info", "distance"];

fn syntax(position: usize, message: impl Into<String>) -> QueryError {
    QueryError::Syntax {
        position,
        message: message.into(),
    }
}

fn is_quote(c: char) -> bool {
    c == '"' || c == '\''
}

fn opens_token(prev: Option<char>) -> bool {
    matches!(prev, None | Some('[' | '(' | ',' | '=')) || prev.is_some_and(char::is_whitespace)
}

fn closes_token(next: Option<char>) -> bool {
    matches!(next, None | Some(']' | ')' | ',')) || next.is_some_and(char::is_whitespace)
}

/// Splits `s` on commas outside brackets and quotes. Each piece carries its
/// byte offset within `s`.
fn split_top(s: &str, base: usize) -> Result<Vec<(usize, &str)>, QueryError> {
    let chars: Vec<(usize, char)> = s.char_indices().collect();
    let mut pieces = Vec::new();
    let mut depth: i32 = 0;
    let mut quote: Option<char> = None;
    let mut start = 0;
    for (n, &(i, c)) in chars.iter().enumerate() {
        let prev = n.checked_sub(1).map(|p| chars[p].1);
        let next = chars.get(n + 1).map(|x| x.1);
        match quote {
            Some(q) if c == q && closes_token(next) => quote = None,
            Some(_) => {}
            None if is_quote(c) && opens_token(prev) => quote = Some(c),
            None => match c {
                '[' | '(' => depth += 1,
                ']' | ')' => {
                    depth -= 1;
                    if depth < 0 {
                        return Err(syntax(base + i, format!("unbalanced '{c}'")));
                    }
                }
                ',' if depth == 0 => {
                    pieces.push((base + start, &s[start..i]));
                    start = i + 1;
                }
                _ => {}
            },
        }
    }
    if let Some(q) = quote {
        return Err(syntax(base + s.len(), format!("unterminated {q} quote")));
    }
    if depth != 0 {
        return Err(syntax(base + s.len(), "unclosed bracket"));
    }
    pieces.push((base + start, &s[start..]));
    Ok(pieces)
}

fn strip_quotes(s: &str) -> &str {
    let s = s.trim();
    let mut chars = s.chars();
    match (chars.next(), chars.next_back()) {
        (Some(a), Some(b)) if s.len() >= 2 && a == b && is_quote(a) => &s[1..s.len() - 1],
        _ => s,
    }
}

/// Splits a key's value into list items. A bare value is a one-item list.
fn list_items(value: &str, base: usize) -> Result<Vec<(usize, &str)>, QueryError> {
    let lead = value.len() - value.trim_start().len();
    let trimmed = value.trim();
    let (inner, offset) = match trimmed.strip_prefix('[') {
        Some(rest) => match rest.strip_suffix(']') {
            Some(inner) => (inner, base + lead + 1),
            None => return Err(syntax(base + lead, "list is missing its closing ']'")),
        },
        None => (trimmed, base + lead),
    };
    if inner.trim().is_empty() {
        return Ok(vec![]);
    }
    Ok(split_top(inner, offset)?
        .into_iter()
        .map(|(pos, item)| (pos + (item.len() - item.trim_start().len()), item.trim()))
        .filter(|(_, item)| !item.is_empty())
        .collect())
}

/// The key at the start of an argument, if it is `ident =`.
fn leading_key(arg: &str) -> Option<(&str, &str)> {
    let (key, rest) = arg.split_once('=')?;
    let key = key.trim();
    if rest.starts_with('=') || key.is_empty() {
        return None;
    }
    key.chars()
        .all(|c| c.is_ascii_alphanumeric() || c == '_')
        .then_some((key, rest))
}

/// Splits on an upper-case connective surrounded by spaces. Lower-case
/// `and` is left alone so names like `Harper and Rye` stay whole.
fn split_connective<'a>(s: &'a str, keyword: &str) -> Vec<&'a str> {
    s.split(&format!(" {keyword} ")).collect()
}

fn parse_atom(atom: &str, position: usize) -> Result<Filter, QueryError> {
    const OPS: [(&str, Comparator); 6] = [
        ("==", Comparator::Eq),
        ("<=", Comparator::Le),
        (">=", Comparator::Ge),
        ("<", Comparator::Lt),
        (">", Comparator::Gt),
        ("=", Comparator::Eq),
    ];
    let found = OPS
        .iter()
        .filter_map(|(sym, op)| atom.find(sym).map(|i| (i, *sym, *op)))
        .min_by_key(|(i, sym, _)| (*i, std::cmp::Reverse(sym.len())));
    let (field, value, op) = match found {
        Some((i, sym, op)) => (atom[..i].trim(), Some(atom[i + sym.len()..].trim()), op),
        None => (atom.trim(), None, Comparator::Eq),
    };
    let field_name = strip_quotes(field);
    let field_kind = match field_name.to_ascii_lowercase().as_str() {
        "name" => FilterField::Name,
        "category" => FilterField::Category,
        "price" => FilterField::Price,
        _ => {
            return Err(QueryError::NotFilterable {
                field: field_name.to_string(),
            })
        }
    };
    let value = value
        .filter(|v| !v.is_empty())
        .ok_or_else(|| syntax(position, format!("filter on {field_name} needs a comparison such as {field_name} == value")))?;
    let value = strip_quotes(value);
    match field_kind {
        FilterField::Price => {
            let number = value.trim_start_matches('$');
            if number.parse::<f64>().map_or(true, |x| !x.is_finite()) {
                return Err(syntax(position, format!("price must be compared with a number, got '{value}'")));
            }
            Ok(Filter {
                field: field_kind,
                op,
                value: number.to_string(),
            })
        }
        _ if op != Comparator::Eq => Err(syntax(
            position,
            format!("{field_name} only supports ==, got {}", op.symbol()),
        )),
        _ => Ok(Filter {
            field: field_kind,
            op,
            value: value.to_string(),
        }),
    }
}

fn parse_filter_group(item: &str, position: usize) -> Result<FilterGroup, QueryError> {
    split_connective(item, "OR")
        .into_iter()
        .map(|alt| {
            split_connective(alt, "AND")
                .into_iter()
                .map(|atom| parse_atom(atom, position))
                .collect()
        })
        .collect()
}

fn parse_field(item: &str) -> Result<String, QueryError> {
    let name = strip_quotes(item).to_ascii_lowercase();
    if BASE_COLUMNS.contains(&name.as_str()) || Feature::from_name(&name).is_some() {
        Ok(name)
    } else {
        Err(QueryError::UnknownField(strip_quotes(item).to_string()))
    }
}

fn parse_sort_key(item: &str, position: usize) -> Result<SortKey, QueryError> {
    let lower = item.to_ascii_lowercase();
    if lower.starts_with("distance_to") {
        let site = item["distance_to".len()..]
            .trim()
            .strip_prefix('(')
            .and_then(|s| s.strip_suffix(')'))
            .ok_or_else(|| syntax(position, "distance_to needs a site name in parentheses"))?;
        let site = strip_quotes(site);
        if site.is_empty() {
            return Err(syntax(position, "distance_to needs a site name"));
        }
        return Ok(SortKey::DistanceTo(site.to_string()));
    }
    let field = strip_quotes(item).to_ascii_lowercase();
    if FILTERABLE.contains(&field.as_str()) {
        Ok(SortKey::Field(field))
    } else {
        Err(QueryError::NotSortable(strip_quotes(item).to_string()))
    }
}

pub fn parse_query(text: &str) -> Result<Query, QueryError> {
    let lead = text.len() - text.trim_start().len();
    let trimmed = text.trim();
    let (trimmed, lead) = match trimmed.strip_prefix("[tool]") {
        Some(rest) => (rest.trim_start(), lead + trimmed.len() - rest.trim_start().len()),
        None => (trimmed, lead),
    };
    let after_name = trimmed
        .get(..6)
        .filter(|w| w.eq_ignore_ascii_case("search"))
        .map(|_| &trimmed[6..])
        .ok_or_else(|| syntax(lead, "expected Search(...)"))?;
    let body_start = lead + 6 + (after_name.len() - after_name.trim_start().len());
    let body = after_name
        .trim_start()
        .strip_prefix('(')
        .ok_or_else(|| syntax(body_start, "expected '(' after Search"))?;
    let body = body
        .strip_suffix(')')
        .ok_or_else(|| syntax(lead + trimmed.len(), "expected ')' at the end of the query"))?;
    let base = body_start + 1;

    // Re-join pieces that do not start a new `key=` argument.
    let mut args: Vec<(usize, usize)> = Vec::new();
    for (pos, piece) in split_top(body, base)? {
        let starts_key = leading_key(piece).is_some_and(|(k, _)| KEYS.contains(&k.to_ascii_lowercase().as_str()));
        match args.last_mut() {
            Some(last) if !starts_key => last.1 = pos - base + piece.len(),
            _ => args.push((pos, pos - base + piece.len())),
        }
    }

    let mut query = Query::default();
    let mut seen: Vec<String> = Vec::new();
    for (pos, end) in args {
        let arg = &body[pos - base..end];
        if arg.trim().is_empty() {
            if body.trim().is_empty() {
                break;
            }
            return Err(syntax(pos, "empty argument"));
        }
        let (key, value) = leading_key(arg).ok_or_else(|| syntax(pos, format!("expected key=value, got '{}'", arg.trim())))?;
        let key = key.to_ascii_lowercase();
        if seen.contains(&key) {
            return Err(syntax(pos, format!("{key} given more than once")));
        }
        let value_pos = pos + arg.len() - value.len();
        match key.as_str() {
            "fields" => {
                query.fields = list_items(value, value_pos)?
                    .into_iter()
                    .map(|(_, f)| parse_field(f))
                    .collect::<Result<_, _>>()?;
            }
            "filters" => {
                query.filters = list_items(value, value_pos)?
                    .into_iter()
                    .map(|(p, item)| parse_filter_group(item, p))
                    .collect::<Result<_, _>>()?;
            }
            "text_query" => {
                let t = strip_quotes(value).trim();
                query.text_query = (!t.is_empty()).then(|| t.to_string());
            }
            "sort_by" => {
                query.sort_by = list_items(value, value_pos)?
                    .into_iter()
                    .map(|(p, item)| parse_sort_key(item, p))
                    .collect::<Result<_, _>>()?;
            }
            "limit" => {
                let n: usize = strip_quotes(value)
                    .parse()
                    .map_err(|_| syntax(value_pos, format!("limit must be a positive integer, got '{}'", value.trim())))?;
                if n == 0 {
                    return Err(syntax(value_pos, "limit must be a positive integer, got 0"));
                }
                query.limit = Some(n);
            }
            other => return Err(syntax(pos, format!("unknown argument '{other}'"))),
        }
        seen.push(key);
    }

    if query.fields.is_empty() {
        query.fields.push("name".into());
    }
    let mut anchors = query.sort_by.iter().filter_map(|k| match k {
        SortKey::DistanceTo(s) => Some(s.to_ascii_lowercase()),
        SortKey::Field(_) => None,
    });
    if let Some(first) = anchors.next() {
        if anchors.any(|a| a != first) {
            return Err(QueryError::MultipleAnchors);
        }
    } else if query.fields.iter().any(|f| f == "distance") {
        return Err(QueryError::DistanceWithoutAnchor);
    }
    Ok(query)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bare_apostrophes_are_not_quotes() {
        let q = parse_query("Search(fields=[name], sort_by=[distance_to(Saul's)])").unwrap();
        assert_eq!(q.sort_by, vec![SortKey::DistanceTo("Saul's".into())]);
        let q = parse_query("Search(fields=[name], sort_by=[distance_to('Saul's')])").unwrap();
        assert_eq!(q.sort_by, vec![SortKey::DistanceTo("Saul's".into())]);
    }

    #[test]
    fn bare_text_query_may_contain_commas() {
        let q = parse_query("Search(fields=[name], text_query=vegan, kid friendly, limit=2)").unwrap();
        assert_eq!(q.text_query.as_deref(), Some("vegan, kid friendly"));
        assert_eq!(q.limit, Some(2));
    }

    #[test]
    fn or_and_fold_into_groups() {
        let q = parse_query("Search(fields=[name], filters=[category == park OR category == cafe AND price < 10])")
            .unwrap();
        assert_eq!(q.filters.len(), 1);
        assert_eq!(q.filters[0].len(), 2);
        assert_eq!(q.filters[0][1].len(), 2);
    }

    #[test]
    fn syntax_errors_carry_positions() {
        match parse_query("Search(fields=[name], limit=0)") {
            Err(QueryError::Syntax { position, .. }) => assert_eq!(position, 28),
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            parse_query("Search(fields=[name"),
            Err(QueryError::Syntax { .. })
        ));
        assert!(matches!(parse_query("Find(fields=[name])"), Err(QueryError::Syntax { position: 0, .. })));
    }
}
