//! Tokenizer shared by the expression language and the schema DSL.

use chrono::NaiveDate;

#[derive(Debug, Clone, PartialEq)]
pub enum Tok {
    Ident(String),
    Number(f64),
    Str(String),
    Date(NaiveDate),
    LParen,
    RParen,
    LBrace,
    RBrace,
    Comma,
    Colon,
    Dot,
    DashDash,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    Plus,
    Minus,
    Star,
    Slash,
    Eof,
}

impl Tok {
    pub fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("`{s}`"),
            Tok::Number(x) => format!("number {x}"),
            Tok::Str(_) => "string literal".to_string(),
            Tok::Date(d) => format!("date @{d}"),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
            Tok::LBrace => "`{`".into(),
            Tok::RBrace => "`}`".into(),
            Tok::Comma => "`,`".into(),
            Tok::Colon => "`:`".into(),
            Tok::Dot => "`.`".into(),
            Tok::DashDash => "`--`".into(),
            Tok::Eq => "`=`".into(),
            Tok::Ne => "`!=`".into(),
            Tok::Lt => "`<`".into(),
            Tok::Le => "`<=`".into(),
            Tok::Gt => "`>`".into(),
            Tok::Ge => "`>=`".into(),
            Tok::Plus => "`+`".into(),
            Tok::Minus => "`-`".into(),
            Tok::Star => "`*`".into(),
            Tok::Slash => "`/`".into(),
            Tok::Eof => "end of input".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Token {
    pub tok: Tok,
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LexError {
    pub offset: usize,
    pub message: String,
}

/// Splits `text` into tokens. `#` starts a comment running to end of line.
/// The last token is always `Eof`.
pub fn tokenize(text: &str) -> Result<Vec<Token>, LexError> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        let start = i;
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        if c == b'#' {
            while i < bytes.len() && bytes[i] != b'\n' {
                i += 1;
            }
            continue;
        }
        let tok = if c.is_ascii_alphabetic() || c == b'_' {
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            Tok::Ident(text[start..i].to_string())
        } else if c.is_ascii_digit() {
            while i < bytes.len() && bytes[i].is_ascii_digit() {
                i += 1;
            }
            if i + 1 < bytes.len() && bytes[i] == b'.' && bytes[i + 1].is_ascii_digit() {
                i += 1;
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    i += 1;
                }
            }
            let value = text[start..i].parse::<f64>().map_err(|e| LexError {
                offset: start,
                message: format!("bad number: {e}"),
            })?;
            Tok::Number(value)
        } else if c == b'"' || c == b'\'' {
            let (s, next) = lex_string(text, i)?;
            i = next;
            Tok::Str(s)
        } else if c == b'@' {
            i += 1;
            while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'-') {
                i += 1;
            }
            let raw = &text[start + 1..i];
            let date = parse_iso_date(raw).ok_or_else(|| LexError {
                offset: start,
                message: format!("bad date literal `@{raw}` (expected @YYYY-MM-DD)"),
            })?;
            Tok::Date(date)
        } else {
            let two = if i + 1 < bytes.len() { Some(bytes[i + 1]) } else { None };
            let (tok, width) = match (c, two) {
                (b'-', Some(b'-')) => (Tok::DashDash, 2),
                (b'!', Some(b'=')) => (Tok::Ne, 2),
                (b'<', Some(b'=')) => (Tok::Le, 2),
                (b'>', Some(b'=')) => (Tok::Ge, 2),
                (b'(', _) => (Tok::LParen, 1),
                (b')', _) => (Tok::RParen, 1),
                (b'{', _) => (Tok::LBrace, 1),
                (b'}', _) => (Tok::RBrace, 1),
                (b',', _) => (Tok::Comma, 1),
                (b':', _) => (Tok::Colon, 1),
                (b'.', _) => (Tok::Dot, 1),
                (b'=', _) => (Tok::Eq, 1),
                (b'<', _) => (Tok::Lt, 1),
                (b'>', _) => (Tok::Gt, 1),
                (b'+', _) => (Tok::Plus, 1),
                (b'-', _) => (Tok::Minus, 1),
                (b'*', _) => (Tok::Star, 1),
                (b'/', _) => (Tok::Slash, 1),
                _ => {
                    let ch = text[i..].chars().next().unwrap_or('?');
                    return Err(LexError {
                        offset: i,
                        message: format!("unexpected character `{ch}`"),
                    });
                }
            };
            i += width;
            tok
        };
        out.push(Token { tok, start, end: i });
    }
    out.push(Token {
        tok: Tok::Eof,
        start: text.len(),
        end: text.len(),
    });
    Ok(out)
}

fn lex_string(text: &str, open: usize) -> Result<(String, usize), LexError> {
    let quote = text.as_bytes()[open] as char;
    let mut out = String::new();
    let mut chars = text[open + 1..].char_indices();
    while let Some((off, ch)) = chars.next() {
        match ch {
            '\\' => match chars.next() {
                Some((_, 'n')) => out.push('\n'),
                Some((_, 't')) => out.push('\t'),
                Some((_, c @ ('\\' | '"' | '\''))) => out.push(c),
                Some((_, c)) => {
                    return Err(LexError {
                        offset: open + 1 + off,
                        message: format!("unknown escape `\\{c}`"),
                    })
                }
                None => break,
            },
            c if c == quote => return Ok((out, open + 1 + off + 1)),
            c => out.push(c),
        }
    }
    Err(LexError {
        offset: open,
        message: "unterminated string literal".to_string(),
    })
}

/// Strict `YYYY-MM-DD`.
pub fn parse_iso_date(raw: &str) -> Option<NaiveDate> {
    let b = raw.as_bytes();
    if b.len() != 10 || b[4] != b'-' || b[7] != b'-' {
        return None;
    }
    if !raw
        .char_indices()
        .all(|(i, c)| i == 4 || i == 7 || c.is_ascii_digit())
    {
        return None;
    }
    NaiveDate::parse_from_str(raw, "%Y-%m-%d").ok()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kinds(text: &str) -> Vec<Tok> {
        tokenize(text).unwrap().into_iter().map(|t| t.tok).collect()
    }

    #[test]
    fn cardinality_tokens() {
        assert_eq!(
            kinds("(1,N) -- (0,1)"),
            vec![
                Tok::LParen,
                Tok::Number(1.0),
                Tok::Comma,
                Tok::Ident("N".into()),
                Tok::RParen,
                Tok::DashDash,
                Tok::LParen,
                Tok::Number(0.0),
                Tok::Comma,
                Tok::Number(1.0),
                Tok::RParen,
                Tok::Eof
            ]
        );
    }

    #[test]
    fn comments_and_dates() {
        assert_eq!(
            kinds("x # trailing\n>= @2019-06-30"),
            vec![
                Tok::Ident("x".into()),
                Tok::Ge,
                Tok::Date(NaiveDate::from_ymd_opt(2019, 6, 30).unwrap()),
                Tok::Eof
            ]
        );
    }

    #[test]
    fn strings_escape() {
        assert_eq!(kinds(r#""a\"b""#), vec![Tok::Str("a\"b".into()), Tok::Eof]);
        assert!(tokenize("'open").is_err());
    }

    #[test]
    fn iso_dates_are_strict() {
        assert!(parse_iso_date("2016-11-01").is_some());
        assert!(parse_iso_date("11/1/16").is_none());
        assert!(parse_iso_date("2016-1-05").is_none());
        assert!(parse_iso_date("2016-02-30").is_none());
    }
}
