use super::SqlError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TokenKind {
    /// Identifiers, keywords and placeholders.
    Word,
    Number,
    /// String literal; `text` holds the content without quotes.
    Str,
    /// Comparison and arithmetic operators (`<>` is normalised to `!=`).
    Op,
    /// `( ) , . ; *`
    Punct,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub kind: TokenKind,
    pub text: String,
    /// Byte offset in the source.
    pub pos: usize,
}

impl Token {
    pub fn is_word(&self, upper: &str) -> bool {
        self.kind == TokenKind::Word && self.text.eq_ignore_ascii_case(upper)
    }

    pub fn is_punct(&self, p: &str) -> bool {
        self.kind == TokenKind::Punct && self.text == p
    }
}

/// Split SQL text into tokens. Fails on unterminated strings and characters that
/// cannot start any token.
pub fn lex(sql: &str) -> Result<Vec<Token>, SqlError> {
    let bytes = sql.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        if c == b'\'' || c == b'"' {
            let close = bytes[i + 1..]
                .iter()
                .position(|&d| d == c)
                .ok_or(SqlError::Lex {
                    pos: start,
                    message: "unterminated string literal".into(),
                })?;
            out.push(Token {
                kind: TokenKind::Str,
                text: sql[i + 1..i + 1 + close].to_string(),
                pos: start,
            });
            i += close + 2;
            continue;
        }
        if c == b'`' {
            let close = bytes[i + 1..]
                .iter()
                .position(|&d| d == b'`')
                .ok_or(SqlError::Lex {
                    pos: start,
                    message: "unterminated quoted identifier".into(),
                })?;
            out.push(Token {
                kind: TokenKind::Word,
                text: sql[i + 1..i + 1 + close].to_string(),
                pos: start,
            });
            i += close + 2;
            continue;
        }
        if c.is_ascii_digit() {
            while i < bytes.len() && bytes[i].is_ascii_digit() {
                i += 1;
            }
            if i + 1 < bytes.len() && bytes[i] == b'.' && bytes[i + 1].is_ascii_digit() {
                i += 1;
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    i += 1;
                }
            }
            // `1st`, `2020a`: digits glued to letters read as an identifier.
            if i < bytes.len() && (bytes[i].is_ascii_alphabetic() || bytes[i] == b'_') {
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                out.push(Token {
                    kind: TokenKind::Word,
                    text: sql[start..i].to_string(),
                    pos: start,
                });
            } else {
                out.push(Token {
                    kind: TokenKind::Number,
                    text: sql[start..i].to_string(),
                    pos: start,
                });
            }
            continue;
        }
        if c.is_ascii_alphabetic() || c == b'_' || c >= 0x80 {
            while i < bytes.len()
                && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_' || bytes[i] >= 0x80)
            {
                i += 1;
            }
            out.push(Token {
                kind: TokenKind::Word,
                text: sql[start..i].to_string(),
                pos: start,
            });
            continue;
        }
        let two = if i + 1 < bytes.len() {
            &sql[i..i + 2]
        } else {
            ""
        };
        let (kind, text, len) = match two {
            "!=" | "<>" => (TokenKind::Op, "!=", 2),
            "<=" => (TokenKind::Op, "<=", 2),
            ">=" => (TokenKind::Op, ">=", 2),
            _ => match c {
                b'=' => (TokenKind::Op, "=", 1),
                b'<' => (TokenKind::Op, "<", 1),
                b'>' => (TokenKind::Op, ">", 1),
                b'+' => (TokenKind::Op, "+", 1),
                b'-' => (TokenKind::Op, "-", 1),
                b'/' => (TokenKind::Op, "/", 1),
                b'%' => (TokenKind::Op, "%", 1),
                b'(' => (TokenKind::Punct, "(", 1),
                b')' => (TokenKind::Punct, ")", 1),
                b',' => (TokenKind::Punct, ",", 1),
                b'.' => (TokenKind::Punct, ".", 1),
                b';' => (TokenKind::Punct, ";", 1),
                b'*' => (TokenKind::Punct, "*", 1),
                _ => {
                    return Err(SqlError::Lex {
                        pos: start,
                        message: format!("unexpected character `{}`", c as char),
                    })
                }
            },
        };
        out.push(Token {
            kind,
            text: text.to_string(),
            pos: start,
        });
        i += len;
    }
    Ok(out)
}
