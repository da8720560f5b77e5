use super::FrontendError;
use crate::types::U256;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Tok {
    Ident(String),
    Number(U256),
    /// A string literal; only recognised so it can be rejected by name.
    Str,
    Punct(&'static str),
    Eof,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub tok: Tok,
    pub line: u32,
    pub col: u32,
}

// Longest first so that `<=` wins over `<`.
const PUNCTS: &[&str] = &[
    "=>", "==", "!=", "<=", ">=", "&&", "||", "+=", "-=", "*=", "/=", "%=", "++", "--", "**", "<<", ">>", "{", "}",
    "(", ")", "[", "]", ";", ",", "=", "+", "-", "*", "/", "%", "<", ">", "!", ".", "?", ":", "&", "|", "^", "~",
];

pub fn tokenize(src: &str) -> Result<Vec<Token>, FrontendError> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1u32, 1u32);

    macro_rules! bump {
        () => {{
            if chars[i] == '\n' {
                line += 1;
                col = 1;
            } else {
                col += 1;
            }
            i += 1;
        }};
    }

    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            bump!();
            continue;
        }
        if c == '/' && chars.get(i + 1) == Some(&'/') {
            while i < chars.len() && chars[i] != '\n' {
                bump!();
            }
            continue;
        }
        if c == '/' && chars.get(i + 1) == Some(&'*') {
            let (sl, sc) = (line, col);
            bump!();
            bump!();
            loop {
                if i >= chars.len() {
                    return Err(FrontendError::Syntax { line: sl, col: sc, msg: "unterminated block comment".into() });
                }
                if chars[i] == '*' && chars.get(i + 1) == Some(&'/') {
                    bump!();
                    bump!();
                    break;
                }
                bump!();
            }
            continue;
        }

        let (tl, tc) = (line, col);
        if c.is_ascii_alphabetic() || c == '_' || c == '$' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_' || chars[i] == '$') {
                bump!();
            }
            let word: String = chars[start..i].iter().collect();
            out.push(Token { tok: Tok::Ident(word), line: tl, col: tc });
            continue;
        }
        if c.is_ascii_digit() {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                bump!();
            }
            let text: String = chars[start..i].iter().filter(|c| **c != '_').collect();
            let parsed = if let Some(hex) = text.strip_prefix("0x").or_else(|| text.strip_prefix("0X")) {
                U256::from_str_radix(hex, 16)
            } else {
                U256::from_str_radix(&text, 10)
            };
            let value = parsed.map_err(|_| FrontendError::Syntax {
                line: tl,
                col: tc,
                msg: format!("invalid number literal `{text}`"),
            })?;
            out.push(Token { tok: Tok::Number(value), line: tl, col: tc });
            continue;
        }
        if c == '"' || c == '\'' {
            bump!();
            while i < chars.len() && chars[i] != c && chars[i] != '\n' {
                bump!();
            }
            if i < chars.len() && chars[i] == c {
                bump!();
            }
            out.push(Token { tok: Tok::Str, line: tl, col: tc });
            continue;
        }
        let rest: String = chars[i..chars.len().min(i + 2)].iter().collect();
        match PUNCTS.iter().find(|p| rest.starts_with(**p)) {
            Some(p) => {
                for _ in 0..p.len() {
                    bump!();
                }
                out.push(Token { tok: Tok::Punct(p), line: tl, col: tc });
            }
            None => {
                return Err(FrontendError::Syntax { line: tl, col: tc, msg: format!("unexpected character `{c}`") })
            }
        }
    }
    out.push(Token { tok: Tok::Eof, line, col });
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokens_carry_positions() {
        let toks = tokenize("a\n  b += 0x10; // c\n/* x\n y */ d").unwrap();
        let summary: Vec<_> = toks.iter().map(|t| (t.tok.clone(), t.line, t.col)).collect();
        assert_eq!(
            summary,
            vec![
                (Tok::Ident("a".into()), 1, 1),
                (Tok::Ident("b".into()), 2, 3),
                (Tok::Punct("+="), 2, 5),
                (Tok::Number(U256::from(16u8)), 2, 8),
                (Tok::Punct(";"), 2, 12),
                (Tok::Ident("d".into()), 4, 7),
                (Tok::Eof, 4, 8),
            ]
        );
    }

    #[test]
    fn rejects_stray_characters() {
        let err = tokenize("a @ b").unwrap_err();
        assert!(matches!(err, FrontendError::Syntax { line: 1, col: 3, .. }));
    }
}
