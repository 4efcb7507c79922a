//! Lexer for the supported PowerShell subset.
//!
//! Lexing is total: every input produces a lexeme stream, and characters that
//! cannot start any token become [`LexemeKind::Unknown`]. Spans are byte
//! offsets into the source; the gaps between lexemes contain only whitespace
//! and backtick line continuations.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        debug_assert!(start <= end);
        Span { start, end }
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start == self.end
    }

    pub fn contains(&self, other: Span) -> bool {
        self.start <= other.start && other.end <= self.end
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LexemeKind {
    Word,
    /// `-Name`; also used for dash operators such as `-eq`, which the parser
    /// disambiguates by context.
    Parameter,
    Variable,
    /// Single- or double-quoted, quotes included.
    StringLiteral,
    Number,
    Operator,
    Pipe,
    Semicolon,
    OpenParen,
    CloseParen,
    OpenBrace,
    CloseBrace,
    OpenBracket,
    CloseBracket,
    /// Member access `.` (only when directly attached to an expression) or a
    /// standalone dot-source operator.
    Dot,
    Comment,
    Newline,
    Unknown,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Lexeme<'a> {
    pub kind: LexemeKind,
    pub text: &'a str,
    pub span: Span,
}

/// Splits `source` into lexemes.
pub fn lex(source: &str) -> Vec<Lexeme<'_>> {
    Lexer::new(source).collect()
}

pub struct Lexer<'a> {
    src: &'a str,
    pos: usize,
    prev: Option<(LexemeKind, usize)>,
}

impl<'a> Lexer<'a> {
    pub fn new(src: &'a str) -> Self {
        Lexer {
            src,
            pos: 0,
            prev: None,
        }
    }

    fn rest(&self) -> &'a str {
        &self.src[self.pos..]
    }

    fn peek(&self) -> Option<char> {
        self.rest().chars().next()
    }

    fn peek_at(&self, offset: usize) -> Option<char> {
        self.rest().chars().nth(offset)
    }

    fn skip_trivia(&mut self) {
        loop {
            let rest = self.rest();
            let mut chars = rest.chars();
            match chars.next() {
                Some('\r') if !rest.starts_with("\r\n") => self.pos += 1,
                Some(c) if c != '\n' && c != '\r' && c.is_whitespace() => self.pos += c.len_utf8(),
                Some('`') if rest[1..].starts_with('\n') => self.pos += 2,
                Some('`') if rest[1..].starts_with("\r\n") => self.pos += 3,
                _ => return,
            }
        }
    }

    fn attached_to_previous(&self) -> Option<LexemeKind> {
        match self.prev {
            Some((kind, end)) if end == self.pos => Some(kind),
            _ => None,
        }
    }

    fn scan_line_comment(&self) -> usize {
        let rest = self.rest();
        let mut end = rest.find('\n').unwrap_or(rest.len());
        if rest[..end].ends_with('\r') {
            end -= 1;
        }
        end
    }

    fn scan_block_comment(&self) -> usize {
        let rest = self.rest();
        match rest[2..].find("#>") {
            Some(i) => i + 4,
            None => rest.len(),
        }
    }

    fn scan_single_quoted(&self) -> usize {
        let bytes = self.rest().as_bytes();
        let mut i = 1;
        while i < bytes.len() {
            if bytes[i] == b'\'' {
                if bytes.get(i + 1) == Some(&b'\'') {
                    i += 2;
                    continue;
                }
                return i + 1;
            }
            i += 1;
        }
        bytes.len()
    }

    fn scan_double_quoted(&self) -> usize {
        let rest = self.rest();
        let mut chars = rest.char_indices().skip(1).peekable();
        while let Some((i, c)) = chars.next() {
            match c {
                '`' => {
                    chars.next();
                }
                '"' => {
                    if matches!(chars.peek(), Some((_, '"'))) {
                        chars.next();
                        continue;
                    }
                    return i + 1;
                }
                _ => {}
            }
        }
        rest.len()
    }

    fn scan_variable_name(&self, from: usize) -> usize {
        let rest = self.rest();
        let tail = &rest[from..];
        let mut chars = tail.char_indices().peekable();
        match chars.peek() {
            Some((_, '{')) => {
                return match tail.find('}') {
                    Some(i) => from + i + 1,
                    None => rest.len(),
                };
            }
            Some((_, '?' | '^' | '$')) => return from + 1,
            _ => {}
        }
        let mut end = 0;
        while let Some((i, c)) = chars.next() {
            if is_ident_char(c) {
                end = i + c.len_utf8();
            } else if c == ':' && end > 0 {
                // scope qualifier such as $env:TEMP
                match chars.peek() {
                    Some((_, n)) if is_ident_char(*n) => end = i + 1,
                    _ => break,
                }
            } else {
                break;
            }
        }
        from + end
    }

    /// Generic bare run: words, parameters, numbers. Brackets may appear
    /// inside a run as long as they stay balanced, which keeps defanged
    /// URLs like `http[:]//host` in one piece.
    fn scan_run(&self) -> usize {
        let rest = self.rest();
        let mut depth = 0usize;
        let mut chars = rest.char_indices();
        while let Some((i, c)) = chars.next() {
            match c {
                '`' => {
                    if chars.next().is_none() {
                        return rest.len();
                    }
                }
                '[' => depth += 1,
                ']' if depth > 0 => depth -= 1,
                ']' => return i,
                c if is_run_delimiter(c) => return i,
                _ => {}
            }
        }
        rest.len()
    }

    fn next_kind_and_len(&self) -> (LexemeKind, usize) {
        use LexemeKind::*;
        let rest = self.rest();
        let c = self.peek().expect("called at end of input");
        let next = self.peek_at(1);
        match c {
            '\n' => (Newline, 1),
            '\r' => (Newline, 2),
            '#' => (Comment, self.scan_line_comment()),
            '<' if next == Some('#') => (Comment, self.scan_block_comment()),
            '\'' => (StringLiteral, self.scan_single_quoted()),
            '"' => (StringLiteral, self.scan_double_quoted()),
            '$' => match next {
                Some('(') | None => (Operator, 1),
                Some(n) if n == '{' || n == '?' || n == '^' || n == '$' || is_ident_char(n) => {
                    (Variable, self.scan_variable_name(1))
                }
                _ => (Operator, 1),
            },
            '@' => match next {
                Some(n) if is_ident_char(n) => (Variable, self.scan_variable_name(1)),
                _ => (Operator, 1),
            },
            '|' if next == Some('|') => (Operator, 2),
            '|' => (Pipe, 1),
            ';' => (Semicolon, 1),
            '(' => (OpenParen, 1),
            ')' => (CloseParen, 1),
            '{' => (OpenBrace, 1),
            '}' => (CloseBrace, 1),
            '[' => (OpenBracket, 1),
            ']' => (CloseBracket, 1),
            ',' => (Operator, 1),
            '=' | '!' if next == Some('=') => (Operator, 2),
            '=' | '!' => (Operator, 1),
            '>' if next == Some('>') => (Operator, 2),
            '>' | '<' => (Operator, 1),
            '&' if next == Some('&') => (Operator, 2),
            '&' => (Operator, 1),
            ':' if next == Some(':') => (Operator, 2),
            '+' => match next {
                Some('+') | Some('=') => (Operator, 2),
                Some(d) if d.is_ascii_digit() => self.classify_run(),
                _ => (Operator, 1),
            },
            '-' => match next {
                Some('-') | Some('=') => (Operator, 2),
                Some(n) if n.is_alphabetic() || n == '_' || n == '?' => (Parameter, self.scan_run()),
                Some(d) if d.is_ascii_digit() || d == '.' => self.classify_run(),
                _ => (Operator, 1),
            },
            '*' | '/' | '%' => match next {
                Some('=') => (Operator, 2),
                None => (Operator, 1),
                Some(n) if n.is_whitespace() || n.is_ascii_digit() || n == '(' || n == '$' => (Operator, 1),
                Some(n) if is_run_delimiter(n) => (Operator, 1),
                _ => (Word, self.scan_run()),
            },
            '.' => {
                let attached = matches!(
                    self.attached_to_previous(),
                    Some(CloseParen | CloseBracket | Variable | StringLiteral | CloseBrace)
                );
                match next {
                    Some(n) if attached && (n.is_alphabetic() || n == '_') => (Dot, 1),
                    None => (Dot, 1),
                    Some(n) if n.is_whitespace() => (Dot, 1),
                    _ => self.classify_run(),
                }
            }
            c if c == '\u{FFFD}' || c.is_control() => (Unknown, c.len_utf8()),
            _ => {
                debug_assert!(!rest.is_empty());
                self.classify_run()
            }
        }
    }

    fn classify_run(&self) -> (LexemeKind, usize) {
        let len = self.scan_run().max(self.peek().map_or(1, char::len_utf8));
        let text = &self.rest()[..len];
        let kind = if is_number(text) {
            LexemeKind::Number
        } else {
            LexemeKind::Word
        };
        (kind, len)
    }
}

impl<'a> Iterator for Lexer<'a> {
    type Item = Lexeme<'a>;

    fn next(&mut self) -> Option<Lexeme<'a>> {
        self.skip_trivia();
        if self.pos >= self.src.len() {
            return None;
        }
        let (kind, len) = self.next_kind_and_len();
        let start = self.pos;
        let mut end = start + len;
        // keep slicing on char boundaries whatever the scanner reported
        while !self.src.is_char_boundary(end) {
            end += 1;
        }
        self.pos = end;
        self.prev = Some((kind, end));
        Some(Lexeme {
            kind,
            text: &self.src[start..end],
            span: Span::new(start, end),
        })
    }
}

pub(crate) fn is_ident_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_'
}

fn is_run_delimiter(c: char) -> bool {
    c.is_whitespace()
        || c.is_control()
        || matches!(
            c,
            ';' | '|' | '(' | ')' | '{' | '}' | ',' | '\'' | '"' | '>' | '&' | '\u{FFFD}'
        )
}

/// Integer, decimal, exponent and hex literals with optional size multiplier
/// (`10kb`) or type suffix.
pub(crate) fn is_number(text: &str) -> bool {
    let lower = text.to_ascii_lowercase();
    let body = lower
        .strip_prefix('-')
        .or_else(|| lower.strip_prefix('+'))
        .unwrap_or(&lower);
    let body = ["kb", "mb", "gb", "tb", "pb"]
        .iter()
        .find_map(|m| body.strip_suffix(m))
        .unwrap_or(body);
    let body = body
        .strip_suffix(['l', 'd', 'u', 'y'])
        .filter(|b| !b.is_empty())
        .unwrap_or(body);
    if let Some(hex) = body.strip_prefix("0x") {
        return !hex.is_empty() && hex.chars().all(|c| c.is_ascii_hexdigit());
    }
    let (mantissa, exponent) = match body.split_once('e') {
        Some((m, e)) => (m, Some(e)),
        None => (body, None),
    };
    let mantissa_ok = match mantissa.split_once('.') {
        Some((int, frac)) => {
            (!int.is_empty() || !frac.is_empty())
                && int.chars().all(|c| c.is_ascii_digit())
                && frac.chars().all(|c| c.is_ascii_digit())
        }
        None => !mantissa.is_empty() && mantissa.chars().all(|c| c.is_ascii_digit()),
    };
    let exponent_ok = exponent.is_none_or(|e| {
        let digits = e.strip_prefix(['+', '-']).unwrap_or(e);
        !digits.is_empty() && digits.chars().all(|c| c.is_ascii_digit())
    });
    mantissa_ok && exponent_ok
}

#[cfg(test)]
mod tests {
    use super::*;
    use LexemeKind::*;

    fn kinds(src: &str) -> Vec<(LexemeKind, &str)> {
        lex(src).into_iter().map(|l| (l.kind, l.text)).collect()
    }

    #[test]
    fn empty_input() {
        assert!(lex("").is_empty());
        assert!(lex("   \t ").is_empty());
    }

    #[test]
    fn ping_command() {
        assert_eq!(
            kinds("ping -c 4"),
            vec![(Word, "ping"), (Parameter, "-c"), (Number, "4")]
        );
    }

    #[test]
    fn semicolon_inside_string_is_not_a_separator() {
        assert_eq!(kinds("IEX 'a;b'"), vec![(Word, "IEX"), (StringLiteral, "'a;b'")]);
    }

    #[test]
    fn string_escapes() {
        assert_eq!(kinds("'it''s'"), vec![(StringLiteral, "'it''s'")]);
        assert_eq!(kinds(r#""a`"b" x"#), vec![(StringLiteral, r#""a`"b""#), (Word, "x")]);
        assert_eq!(kinds("'open"), vec![(StringLiteral, "'open")]);
    }

    #[test]
    fn comments_are_retained() {
        assert_eq!(
            kinds("a # note\r\n<# block\n #> b"),
            vec![
                (Word, "a"),
                (Comment, "# note"),
                (Newline, "\r\n"),
                (Comment, "<# block\n #>"),
                (Word, "b")
            ]
        );
    }

    #[test]
    fn member_access_after_paren() {
        assert_eq!(
            kinds("(New-Object Net.WebClient).DownloadString('u')"),
            vec![
                (OpenParen, "("),
                (Word, "New-Object"),
                (Word, "Net.WebClient"),
                (CloseParen, ")"),
                (Dot, "."),
                (Word, "DownloadString"),
                (OpenParen, "("),
                (StringLiteral, "'u'"),
                (CloseParen, ")"),
            ]
        );
    }

    #[test]
    fn defanged_url_stays_one_word() {
        assert_eq!(
            kinds("MsiMake http[:]//117.187.136.141[:]13405/0CFA042F.Png"),
            vec![
                (Word, "MsiMake"),
                (Word, "http[:]//117.187.136.141[:]13405/0CFA042F.Png")
            ]
        );
    }

    #[test]
    fn type_literal_and_static_call() {
        assert_eq!(
            kinds("[Convert]::FromBase64String($s)"),
            vec![
                (OpenBracket, "["),
                (Word, "Convert"),
                (CloseBracket, "]"),
                (Operator, "::"),
                (Word, "FromBase64String"),
                (OpenParen, "("),
                (Variable, "$s"),
                (CloseParen, ")"),
            ]
        );
    }

    #[test]
    fn variables() {
        assert_eq!(
            kinds("$env:TEMP $_ ${odd name} $x.Length @args"),
            vec![
                (Variable, "$env:TEMP"),
                (Variable, "$_"),
                (Variable, "${odd name}"),
                (Variable, "$x"),
                (Dot, "."),
                (Word, "Length"),
                (Variable, "@args"),
            ]
        );
    }

    #[test]
    fn operators_and_numbers() {
        assert_eq!(
            kinds("$i += -1; $a = 0x1F * 2kb"),
            vec![
                (Variable, "$i"),
                (Operator, "+="),
                (Number, "-1"),
                (Semicolon, ";"),
                (Variable, "$a"),
                (Operator, "="),
                (Number, "0x1F"),
                (Operator, "*"),
                (Number, "2kb"),
            ]
        );
        assert_eq!(
            kinds("Get-ChildItem *.log"),
            vec![(Word, "Get-ChildItem"), (Word, "*.log")]
        );
    }

    #[test]
    fn dot_sourcing_and_relative_paths() {
        assert_eq!(kinds(". .\\setup.ps1"), vec![(Dot, "."), (Word, ".\\setup.ps1")]);
    }

    #[test]
    fn backtick_escapes_and_continuations() {
        assert_eq!(kinds("I`E`X x"), vec![(Word, "I`E`X"), (Word, "x")]);
        assert_eq!(kinds("a `\n b"), vec![(Word, "a"), (Word, "b")]);
    }

    #[test]
    fn replacement_and_control_chars_are_unknown() {
        assert_eq!(
            kinds("a \u{FFFD} \u{1}"),
            vec![(Word, "a"), (Unknown, "\u{FFFD}"), (Unknown, "\u{1}")]
        );
    }

    #[test]
    fn number_shapes() {
        for n in ["4", "64", "1.5", "0xff", "10MB", "1e3", "-2", "3l"] {
            assert!(is_number(n), "{n}");
        }
        for n in ["uc.edu", "117.187.136.141", "0x", "1e", ".", "-", "kb", "0CFA042F.Png"] {
            assert!(!is_number(n), "{n}");
        }
    }
}
