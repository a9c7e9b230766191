//! Canonical SQL text for exact-match comparison.
//!
//! Keywords are uppercased, identifiers lowercased, whitespace normalised. SELECT
//! lists and AND-only WHERE conjunctions are sorted so that they compare as
//! multisets; everything else compares in order. Parenthesised subqueries are
//! canonicalised recursively.

use super::lexer::{lex, TokenKind};
use super::SqlError;

const RESERVED: &[&str] = &[
    "SELECT", "FROM", "WHERE", "GROUP", "BY", "HAVING", "ORDER", "LIMIT", "JOIN", "ON", "AS",
    "AND", "OR", "NOT", "IN", "EXISTS", "BETWEEN", "LIKE", "UNION", "INTERSECT", "EXCEPT",
    "DISTINCT", "COUNT", "SUM", "AVG", "MIN", "MAX", "ASC", "DESC", "IS", "NULL", "INNER",
    "LEFT", "RIGHT", "OUTER", "CROSS", "ALL", "CASE", "WHEN", "THEN", "ELSE", "END", "OFFSET",
];

fn normalize(sql: &str) -> Result<Vec<String>, SqlError> {
    let mut out: Vec<String> = lex(sql)?
        .into_iter()
        .map(|t| match t.kind {
            TokenKind::Word => {
                let up = t.text.to_ascii_uppercase();
                if RESERVED.contains(&up.as_str()) {
                    up
                } else {
                    t.text.to_lowercase()
                }
            }
            TokenKind::Str => format!("'{}'", t.text),
            _ => t.text,
        })
        .collect();
    while out.last().is_some_and(|t| t == ";") {
        out.pop();
    }
    Ok(out)
}

/// Index of the `)` matching the `(` at `open`, or the end of input.
fn matching(toks: &[String], open: usize) -> usize {
    let mut depth = 0usize;
    for (i, t) in toks.iter().enumerate().skip(open) {
        match t.as_str() {
            "(" => depth += 1,
            ")" => {
                depth -= 1;
                if depth == 0 {
                    return i;
                }
            }
            _ => {}
        }
    }
    toks.len()
}

/// Positions of depth-0 tokens satisfying `pred`.
fn top_level(toks: &[String], mut pred: impl FnMut(&[String], usize) -> bool) -> Vec<usize> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < toks.len() {
        if toks[i] == "(" {
            i = matching(toks, i) + 1;
            continue;
        }
        if pred(toks, i) {
            out.push(i);
        }
        i += 1;
    }
    out
}

fn render(toks: &[String]) -> String {
    let mut parts = Vec::new();
    let mut i = 0;
    while i < toks.len() {
        if toks[i] == "(" {
            let close = matching(toks, i);
            let inner = &toks[i + 1..close.min(toks.len())];
            let body = if inner.first().is_some_and(|t| t == "SELECT") {
                canon_query(inner)
            } else {
                render(inner)
            };
            parts.push(format!("( {body} )"));
            i = close + 1;
            continue;
        }
        parts.push(toks[i].clone());
        i += 1;
    }
    parts.join(" ")
}

fn split_at(toks: &[String], cuts: &[usize]) -> Vec<Vec<String>> {
    let mut out = Vec::new();
    let mut start = 0;
    for &c in cuts {
        out.push(toks[start..c].to_vec());
        start = c + 1;
    }
    out.push(toks[start..].to_vec());
    out
}

fn canon_query(toks: &[String]) -> String {
    let ops = top_level(toks, |t, i| matches!(t[i].as_str(), "UNION" | "INTERSECT" | "EXCEPT"));
    if ops.is_empty() {
        return canon_select(toks);
    }
    let mut out = String::new();
    let mut start = 0;
    for &op in &ops {
        out.push_str(&canon_select(&toks[start..op]));
        out.push(' ');
        out.push_str(&toks[op]);
        out.push(' ');
        start = op + 1;
        if toks.get(start).is_some_and(|t| t == "ALL") {
            out.push_str("ALL ");
            start += 1;
        }
    }
    out.push_str(&canon_select(&toks[start..]));
    out
}

fn clause_head(toks: &[String], i: usize) -> Option<usize> {
    let next_by = toks.get(i + 1).is_some_and(|t| t == "BY");
    match toks[i].as_str() {
        "SELECT" | "FROM" | "WHERE" | "HAVING" | "LIMIT" => Some(1),
        "GROUP" | "ORDER" if next_by => Some(2),
        _ => None,
    }
}

fn canon_select(toks: &[String]) -> String {
    let heads = top_level(toks, |t, i| clause_head(t, i).is_some());
    let mut clauses: Vec<String> = Vec::new();
    if heads.first().is_none_or(|&h| h > 0) {
        let end = heads.first().copied().unwrap_or(toks.len());
        clauses.push(render(&toks[..end]));
    }
    for (n, &h) in heads.iter().enumerate() {
        let width = clause_head(toks, h).unwrap_or(1);
        let head = toks[h..h + width].join(" ");
        let end = heads.get(n + 1).copied().unwrap_or(toks.len());
        let body = &toks[h + width..end];
        let text = match head.as_str() {
            "SELECT" => canon_select_list(body),
            "WHERE" => canon_conjunction(body),
            _ => render(body),
        };
        clauses.push(if text.is_empty() { head } else { format!("{head} {text}") });
    }
    clauses.join(" ")
}

fn canon_select_list(body: &[String]) -> String {
    let (prefix, body) = match body.first().map(String::as_str) {
        Some("DISTINCT") => ("DISTINCT ", &body[1..]),
        _ => ("", body),
    };
    let commas = top_level(body, |t, i| t[i] == ",");
    let mut items: Vec<String> = split_at(body, &commas).iter().map(|x| render(x)).collect();
    items.sort();
    format!("{prefix}{}", items.join(" , "))
}

fn canon_conjunction(body: &[String]) -> String {
    if !top_level(body, |t, i| t[i] == "OR").is_empty() {
        return render(body);
    }
    let mut pending_between = false;
    let ands = top_level(body, |t, i| match t[i].as_str() {
        "BETWEEN" => {
            pending_between = true;
            false
        }
        "AND" if pending_between => {
            pending_between = false;
            false
        }
        "AND" => true,
        _ => false,
    });
    let mut items: Vec<String> = split_at(body, &ands).iter().map(|x| render(x)).collect();
    items.sort();
    items.join(" AND ")
}

/// Canonical text of `sql`; equal canonical texts are an exact match.
pub fn canonical_sql(sql: &str) -> Result<String, SqlError> {
    if sql.trim().is_empty() {
        return Err(SqlError::Empty);
    }
    Ok(canon_query(&normalize(sql)?))
}

/// Exact match with the lexical failure surfaced.
pub fn exact_match_checked(pred: &str, gold: &str) -> Result<bool, SqlError> {
    Ok(canonical_sql(pred)? == canonical_sql(gold)?)
}

/// Exact match; SQL that fails to lex never matches.
pub fn exact_match(pred: &str, gold: &str) -> bool {
    match exact_match_checked(pred, gold) {
        Ok(m) => m,
        Err(e) => {
            log::debug!("exact match on unlexable SQL counts as a miss: {e}");
            false
        }
    }
}
