//! Minimal s-expression reader for solver responses.

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SExpr {
    Atom(String),
    Str(String),
    List(Vec<SExpr>),
}

impl SExpr {
    pub fn as_atom(&self) -> Option<&str> {
        match self {
            SExpr::Atom(a) => Some(a),
            _ => None,
        }
    }
}

/// Parses every top-level expression in `text`.
pub fn parse_all(text: &str) -> Result<Vec<SExpr>, String> {
    let chars: Vec<char> = text.chars().collect();
    let mut pos = 0;
    let mut out = Vec::new();
    loop {
        skip_ws(&chars, &mut pos);
        if pos >= chars.len() {
            return Ok(out);
        }
        out.push(parse_one(&chars, &mut pos)?);
    }
}

fn skip_ws(c: &[char], pos: &mut usize) {
    while *pos < c.len() {
        if c[*pos].is_whitespace() {
            *pos += 1;
        } else if c[*pos] == ';' {
            while *pos < c.len() && c[*pos] != '\n' {
                *pos += 1;
            }
        } else {
            break;
        }
    }
}

fn parse_one(c: &[char], pos: &mut usize) -> Result<SExpr, String> {
    skip_ws(c, pos);
    let Some(&ch) = c.get(*pos) else { return Err("unexpected end of input".into()) };
    match ch {
        '(' => {
            *pos += 1;
            let mut items = Vec::new();
            loop {
                skip_ws(c, pos);
                match c.get(*pos) {
                    None => return Err("unbalanced parenthesis".into()),
                    Some(')') => {
                        *pos += 1;
                        return Ok(SExpr::List(items));
                    }
                    Some(_) => items.push(parse_one(c, pos)?),
                }
            }
        }
        ')' => Err("unexpected `)`".into()),
        '"' => {
            *pos += 1;
            let mut s = String::new();
            loop {
                match c.get(*pos) {
                    None => return Err("unterminated string".into()),
                    Some('"') if c.get(*pos + 1) == Some(&'"') => {
                        s.push('"');
                        *pos += 2;
                    }
                    Some('"') => {
                        *pos += 1;
                        return Ok(SExpr::Str(s));
                    }
                    Some(x) => {
                        s.push(*x);
                        *pos += 1;
                    }
                }
            }
        }
        '|' => {
            let start = *pos;
            *pos += 1;
            while *pos < c.len() && c[*pos] != '|' {
                *pos += 1;
            }
            if *pos >= c.len() {
                return Err("unterminated quoted symbol".into());
            }
            *pos += 1;
            Ok(SExpr::Atom(c[start..*pos].iter().collect()))
        }
        _ => {
            let start = *pos;
            while *pos < c.len() && !c[*pos].is_whitespace() && c[*pos] != '(' && c[*pos] != ')' {
                *pos += 1;
            }
            Ok(SExpr::Atom(c[start..*pos].iter().collect()))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nested_lists_and_quoted_symbols() {
        let e = parse_all("sat\n((|a b| #x0f) ((f (_ bv3 8)) true))").unwrap();
        assert_eq!(e.len(), 2);
        assert_eq!(e[0], SExpr::Atom("sat".into()));
        let SExpr::List(pairs) = &e[1] else { panic!() };
        assert_eq!(pairs.len(), 2);
        assert_eq!(pairs[0], SExpr::List(vec![SExpr::Atom("|a b|".into()), SExpr::Atom("#x0f".into())]));
    }

    #[test]
    fn strings_and_errors() {
        let e = parse_all("(error \"line 1: \"\"x\"\"\")").unwrap();
        assert_eq!(e[0], SExpr::List(vec![SExpr::Atom("error".into()), SExpr::Str("line 1: \"x\"".into())]));
        assert!(parse_all("((a)").is_err());
        assert!(parse_all(")").is_err());
    }
}
