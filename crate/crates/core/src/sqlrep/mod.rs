//! SQL representations: lexing, the keyword vocabulary Φ, the schema vocabulary Ψ,
//! hash vectors, skeletons and canonical exact match.

mod canonical;
mod hash;
mod keywords;
mod lexer;
mod skeleton;

use thiserror::Error;

pub use canonical::{canonical_sql, exact_match, exact_match_checked};
pub use hash::{
    keyword_hash, name_tokens, schema_hash, schema_tokens, struct_hash, HashVector,
    SchemaHashSource, SchemaVocab, SchemaVocabSnapshot, VocabTag,
};
pub use keywords::{extract_keywords, Keyword, KeywordSet};
pub use lexer::{lex, Token, TokenKind};
pub use skeleton::{referenced_tables, skeletonize, SqlSkeleton, COL, TAB, VAL};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SqlError {
    #[error("lexical error at byte {pos}: {message}")]
    Lex { pos: usize, message: String },
    #[error("empty SQL")]
    Empty,
}
