use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::keywords::{keywords_of_tokens, KeywordSet};
use super::lexer::{lex, Token, TokenKind};
use super::SqlError;
use crate::corpus::Schema;

pub const COL: &str = "COL";
pub const TAB: &str = "TAB";
pub const VAL: &str = "VAL";

/// SQL with schema identifiers replaced by `TAB`/`COL` and literals by `VAL`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SqlSkeleton {
    tokens: Vec<String>,
    #[serde(skip)]
    keywords: KeywordSet,
}

impl SqlSkeleton {
    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn keywords(&self) -> KeywordSet {
        self.keywords
    }

    /// Parse a rendered skeleton back (placeholders are plain words to the lexer).
    pub fn parse(text: &str) -> Result<Self, SqlError> {
        let toks = lex(text)?;
        Ok(SqlSkeleton {
            keywords: keywords_of_tokens(&toks),
            tokens: toks.iter().map(render_plain).collect(),
        })
    }

    pub fn placeholders(&self) -> impl Iterator<Item = (usize, &str)> {
        self.tokens
            .iter()
            .enumerate()
            .filter(|(_, t)| matches!(t.as_str(), COL | TAB | VAL))
            .map(|(i, t)| (i, t.as_str()))
    }
}

impl fmt::Display for SqlSkeleton {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.tokens.join(" "))
    }
}

fn render_plain(t: &Token) -> String {
    match t.kind {
        TokenKind::Word => t.text.to_ascii_uppercase(),
        TokenKind::Str => format!("'{}'", t.text),
        _ => t.text.clone(),
    }
}

fn is_table_position(tokens: &[Token], i: usize) -> bool {
    let after_from = i > 0 && (tokens[i - 1].is_word("FROM") || tokens[i - 1].is_word("JOIN"));
    let qualifies = tokens.get(i + 1).is_some_and(|n| n.is_punct("."));
    after_from || qualifies
}

/// Abstract `sql` against `schema`: table names become `TAB`, column names `COL`,
/// string and numeric literals `VAL`; everything else is kept (words uppercased).
/// A name that is both a table and a column reads as `TAB` after `FROM`/`JOIN` or
/// before a `.`, and as `COL` elsewhere.
pub fn skeletonize(sql: &str, schema: &Schema) -> Result<SqlSkeleton, SqlError> {
    let toks = lex(sql)?;
    let tokens = toks
        .iter()
        .enumerate()
        .map(|(i, t)| match t.kind {
            TokenKind::Str | TokenKind::Number => VAL.to_string(),
            TokenKind::Word => {
                let table = schema.table_index(&t.text).is_some();
                let column = schema.is_column(&t.text);
                match (table, column) {
                    (true, false) => TAB.to_string(),
                    (false, true) => COL.to_string(),
                    (true, true) if is_table_position(&toks, i) => TAB.to_string(),
                    (true, true) => COL.to_string(),
                    (false, false) => t.text.to_ascii_uppercase(),
                }
            }
            _ => t.text.clone(),
        })
        .collect();
    Ok(SqlSkeleton {
        tokens,
        keywords: keywords_of_tokens(&toks),
    })
}

/// Tables of `schema` named anywhere in `sql` (lowercase). Unlexable SQL yields none.
pub fn referenced_tables(sql: &str, schema: &Schema) -> BTreeSet<String> {
    let Ok(toks) = lex(sql) else {
        return BTreeSet::new();
    };
    toks.iter()
        .filter(|t| t.kind == TokenKind::Word)
        .filter_map(|t| schema.table_index(&t.text).map(|i| schema.tables[i].clone()))
        .collect()
}
