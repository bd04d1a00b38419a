use crate::fixed::Fixed4;

use super::ParseError;

#[derive(Debug, Clone, PartialEq)]
pub enum Tok {
    Ident(String),
    Str(String),
    Int(i64),
    Dec(Fixed4),
    LParen,
    RParen,
    LBrace,
    RBrace,
    LBracket,
    RBracket,
    Comma,
    Semi,
    Dot,
    PathSep,
    At,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    And,
    Or,
    Not,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Pos {
    pub line: usize,
    pub col: usize,
}

#[derive(Debug, Clone)]
pub struct Token {
    pub tok: Tok,
    pub pos: Pos,
}

pub fn tokenize(src: &str) -> Result<Vec<Token>, ParseError> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);

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
        let pos = Pos { line, col };
        let syntax = |msg: String| ParseError::Syntax { line: pos.line, col: pos.col, message: msg };
        let peek = chars.get(i + 1).copied();

        if c.is_whitespace() {
            bump!();
            continue;
        }
        if c == '/' && peek == Some('/') {
            while i < chars.len() && chars[i] != '\n' {
                bump!();
            }
            continue;
        }

        let two = |a: char, b: char| c == a && peek == Some(b);
        let simple = match c {
            '(' => Some(Tok::LParen),
            ')' => Some(Tok::RParen),
            '{' => Some(Tok::LBrace),
            '}' => Some(Tok::RBrace),
            '[' => Some(Tok::LBracket),
            ']' => Some(Tok::RBracket),
            ',' => Some(Tok::Comma),
            ';' => Some(Tok::Semi),
            '.' => Some(Tok::Dot),
            '@' => Some(Tok::At),
            _ => None,
        };
        if let Some(tok) = simple {
            out.push(Token { tok, pos });
            bump!();
            continue;
        }
        let double = if two(':', ':') {
            Some(Tok::PathSep)
        } else if two('=', '=') {
            Some(Tok::Eq)
        } else if two('!', '=') {
            Some(Tok::Ne)
        } else if two('<', '=') {
            Some(Tok::Le)
        } else if two('>', '=') {
            Some(Tok::Ge)
        } else if two('&', '&') {
            Some(Tok::And)
        } else if two('|', '|') {
            Some(Tok::Or)
        } else {
            None
        };
        if let Some(tok) = double {
            out.push(Token { tok, pos });
            bump!();
            bump!();
            continue;
        }
        match c {
            '<' | '>' | '!' => {
                let tok = match c {
                    '<' => Tok::Lt,
                    '>' => Tok::Gt,
                    _ => Tok::Not,
                };
                out.push(Token { tok, pos });
                bump!();
            }
            '"' => {
                bump!();
                let mut s = String::new();
                loop {
                    match chars.get(i) {
                        None => return Err(syntax("unterminated string".into())),
                        Some('"') => {
                            bump!();
                            break;
                        }
                        Some('\\') => {
                            bump!();
                            let esc = match chars.get(i) {
                                Some('"') => '"',
                                Some('\\') => '\\',
                                Some('n') => '\n',
                                Some('t') => '\t',
                                _ => return Err(syntax("invalid escape".into())),
                            };
                            s.push(esc);
                            bump!();
                        }
                        Some(&ch) => {
                            s.push(ch);
                            bump!();
                        }
                    }
                }
                out.push(Token { tok: Tok::Str(s), pos });
            }
            c if c.is_ascii_digit() || (c == '-' && peek.is_some_and(|p| p.is_ascii_digit())) => {
                let start = i;
                bump!();
                while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                    bump!();
                }
                let text: String = chars[start..i].iter().collect();
                let tok = if text.contains('.') {
                    Tok::Dec(text.parse().map_err(|e: crate::fixed::DecimalError| syntax(e.to_string()))?)
                } else {
                    Tok::Int(text.parse().map_err(|_| syntax(format!("integer out of range `{text}`")))?)
                };
                out.push(Token { tok, pos });
            }
            c if c.is_alphabetic() || c == '_' => {
                let start = i;
                while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_') {
                    bump!();
                }
                out.push(Token { tok: Tok::Ident(chars[start..i].iter().collect()), pos });
            }
            other => return Err(syntax(format!("unexpected character `{other}`"))),
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokens_and_positions() {
        let toks = tokenize("forbid (\n  x < -3 && y >= 0.8\n);").unwrap();
        assert_eq!(toks[0].tok, Tok::Ident("forbid".into()));
        assert_eq!(toks[2].pos, Pos { line: 2, col: 3 });
        assert!(toks.iter().any(|t| t.tok == Tok::Int(-3)));
        assert!(toks.iter().any(|t| t.tok == Tok::Dec(Fixed4::from_raw(8000))));
        assert!(toks.iter().any(|t| t.tok == Tok::Ge));
    }

    #[test]
    fn comments_and_strings() {
        let toks = tokenize("// hi\n\"a\\\"b\" ").unwrap();
        assert_eq!(toks.len(), 1);
        assert_eq!(toks[0].tok, Tok::Str("a\"b".into()));
        assert!(tokenize("\"open").is_err());
        assert!(tokenize("#").is_err());
    }
}
