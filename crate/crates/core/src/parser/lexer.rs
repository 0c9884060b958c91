use super::{ParseDiagnostic, SourceSpan};

#[derive(Clone, Debug, PartialEq)]
pub(crate) enum Tok {
    Ident(String),
    Number(f64),
    Punct(&'static str),
    Eof,
}

#[derive(Clone, Debug)]
pub(crate) struct Token {
    pub tok: Tok,
    pub span: SourceSpan,
}

const PUNCT: [&str; 17] = ["<=", ">=", "==", "=", "<", ">", ":", ";", ",", "{", "}", "(", ")", "+", "-", "*", "/"];

pub(crate) fn tokenize(source: &str) -> Result<Vec<Token>, ParseDiagnostic> {
    let chars: Vec<char> = source.chars().collect();
    let mut tokens = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);
    // Last real character seen, for placing the end-of-file span.
    let mut last = SourceSpan::new(1, 1, 1);

    while i < chars.len() {
        let c = chars[i];
        if c == '\n' {
            i += 1;
            line += 1;
            col = 1;
            continue;
        }
        if c.is_whitespace() {
            i += 1;
            col += 1;
            continue;
        }
        if c == '#' {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
            }
            continue;
        }

        let start_col = col;
        if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            let text: String = chars[start..i].iter().collect();
            col += i - start;
            let span = SourceSpan::new(line, start_col, i - start);
            last = span;
            tokens.push(Token { tok: Tok::Ident(text), span });
            continue;
        }
        if c.is_ascii_digit() || (c == '.' && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit())) {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                i += 1;
            }
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let mut j = i + 1;
                if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                    j += 1;
                }
                if j < chars.len() && chars[j].is_ascii_digit() {
                    i = j;
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let text: String = chars[start..i].iter().collect();
            col += i - start;
            let span = SourceSpan::new(line, start_col, i - start);
            last = span;
            match text.parse::<f64>() {
                Ok(v) if v.is_finite() => tokens.push(Token { tok: Tok::Number(v), span }),
                _ => return Err(ParseDiagnostic::error(span, "SYNTAX", format!("malformed number `{text}`"))),
            }
            continue;
        }

        let rest: String = chars[i..chars.len().min(i + 2)].iter().collect();
        match PUNCT.iter().find(|p| rest.starts_with(**p)) {
            Some(p) => {
                let len = p.len();
                let span = SourceSpan::new(line, start_col, len);
                last = span;
                tokens.push(Token { tok: Tok::Punct(p), span });
                i += len;
                col += len;
            }
            None => {
                return Err(ParseDiagnostic::error(
                    SourceSpan::new(line, start_col, 1),
                    "SYNTAX",
                    format!("unexpected character `{c}`"),
                ))
            }
        }
    }
    tokens.push(Token { tok: Tok::Eof, span: last });
    Ok(tokens)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_with_exponents() {
        let toks = tokenize("1e-7 2.5 3E+2 .5").unwrap();
        let nums: Vec<f64> = toks
            .iter()
            .filter_map(|t| match t.tok {
                Tok::Number(v) => Some(v),
                _ => None,
            })
            .collect();
        assert_eq!(nums, vec![1e-7, 2.5, 300.0, 0.5]);
    }

    #[test]
    fn spans_track_lines_and_columns() {
        let toks = tokenize("system s\n  # comment\n  attr a = 1").unwrap();
        let a = toks.iter().find(|t| t.tok == Tok::Ident("attr".into())).unwrap();
        assert_eq!((a.span.line, a.span.column, a.span.length), (3, 3, 4));
    }

    #[test]
    fn stray_character_is_syntax_error() {
        let err = tokenize("system s @").unwrap_err();
        assert_eq!(err.code, "SYNTAX");
        assert_eq!(err.span.column, 10);
    }
}
