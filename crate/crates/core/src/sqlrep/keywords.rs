//! The SQL keyword vocabulary Φ.

use std::fmt;

use super::lexer::{lex, Token, TokenKind};
use super::SqlError;

macro_rules! keywords {
    ($($variant:ident => $text:literal),* $(,)?) => {
        /// A member of the fixed keyword vocabulary. Discriminants are vocabulary indices.
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
        pub enum Keyword { $($variant),* }

        impl Keyword {
            /// The vocabulary in index order.
            pub const ALL: &'static [Keyword] = &[$(Keyword::$variant),*];

            pub fn as_str(self) -> &'static str {
                match self { $(Keyword::$variant => $text),* }
            }
        }
    };
}

keywords! {
    Select => "SELECT", From => "FROM", Where => "WHERE", GroupBy => "GROUP BY",
    Having => "HAVING", OrderBy => "ORDER BY", Limit => "LIMIT", Join => "JOIN",
    On => "ON", As => "AS", And => "AND", Or => "OR", Not => "NOT", In => "IN",
    Exists => "EXISTS", Between => "BETWEEN", Like => "LIKE", Union => "UNION",
    Intersect => "INTERSECT", Except => "EXCEPT", Distinct => "DISTINCT",
    Count => "COUNT", Sum => "SUM", Avg => "AVG", Min => "MIN", Max => "MAX",
    Asc => "ASC", Desc => "DESC", Eq => "=", Ne => "!=", Lt => "<", Gt => ">",
    Le => "<=", Ge => ">=",
}

impl Keyword {
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Keyword> {
        Self::ALL.get(i).copied()
    }

    fn single_word(upper: &str) -> Option<Keyword> {
        Self::ALL
            .iter()
            .copied()
            .find(|k| k.as_str() == upper && !k.as_str().contains(' '))
    }

    fn operator(op: &str) -> Option<Keyword> {
        match op {
            "=" => Some(Keyword::Eq),
            "!=" => Some(Keyword::Ne),
            "<" => Some(Keyword::Lt),
            ">" => Some(Keyword::Gt),
            "<=" => Some(Keyword::Le),
            ">=" => Some(Keyword::Ge),
            _ => None,
        }
    }
}

impl fmt::Display for Keyword {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Set of keywords, stored as a bitmask over vocabulary indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct KeywordSet(u64);

impl KeywordSet {
    pub fn insert(&mut self, k: Keyword) {
        self.0 |= 1 << k.index();
    }

    pub fn contains(&self, k: Keyword) -> bool {
        self.0 & (1 << k.index()) != 0
    }

    pub fn len(&self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(&self) -> bool {
        self.0 == 0
    }

    pub fn bits(&self) -> u64 {
        self.0
    }

    pub fn iter(&self) -> impl Iterator<Item = Keyword> + '_ {
        Keyword::ALL.iter().copied().filter(|k| self.contains(*k))
    }
}

impl FromIterator<Keyword> for KeywordSet {
    fn from_iter<I: IntoIterator<Item = Keyword>>(iter: I) -> Self {
        let mut s = KeywordSet::default();
        for k in iter {
            s.insert(k);
        }
        s
    }
}

pub(crate) fn keywords_of_tokens(tokens: &[Token]) -> KeywordSet {
    let mut set = KeywordSet::default();
    let mut i = 0;
    while i < tokens.len() {
        let t = &tokens[i];
        match t.kind {
            TokenKind::Word => {
                let upper = t.text.to_ascii_uppercase();
                let next_by = tokens.get(i + 1).is_some_and(|n| n.is_word("BY"));
                if upper == "GROUP" && next_by {
                    set.insert(Keyword::GroupBy);
                    i += 2;
                    continue;
                }
                if upper == "ORDER" && next_by {
                    set.insert(Keyword::OrderBy);
                    i += 2;
                    continue;
                }
                if let Some(k) = Keyword::single_word(&upper) {
                    set.insert(k);
                }
            }
            TokenKind::Op => {
                if let Some(k) = Keyword::operator(&t.text) {
                    set.insert(k);
                }
            }
            _ => {}
        }
        i += 1;
    }
    set
}

/// The members of Φ present in `sql`, case-insensitive; `GROUP BY` and `ORDER BY`
/// match only as units.
pub fn extract_keywords(sql: &str) -> Result<KeywordSet, SqlError> {
    if sql.trim().is_empty() {
        return Err(SqlError::Empty);
    }
    Ok(keywords_of_tokens(&lex(sql)?))
}
