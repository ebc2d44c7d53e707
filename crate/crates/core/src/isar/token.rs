//! Lossless tokenizer for Isabelle/Isar theory text.

use serde::{Deserialize, Serialize};

use crate::SourceRange;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TokenClass {
    CommandKeyword,
    InnerKeyword,
    Identifier,
    Symbol,
    StringLiteral,
    Cartouche,
    Comment,
    Whitespace,
    Unknown,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub class: TokenClass,
    pub text: String,
    pub range: SourceRange,
    /// Byte offset of the token in the input.
    pub offset: usize,
}

impl Token {
    pub fn is_trivia(&self) -> bool {
        matches!(self.class, TokenClass::Whitespace | TokenClass::Comment)
    }

    pub fn is_command(&self, word: &str) -> bool {
        self.class == TokenClass::CommandKeyword && self.text == word
    }

    /// Whether a comment, string literal or cartouche token has its closing
    /// delimiter. Always true for other classes.
    pub fn is_terminated(&self) -> bool {
        match self.class {
            TokenClass::Comment => comment_depth_after(&self.text) == 0,
            TokenClass::StringLiteral => string_is_closed(&self.text),
            TokenClass::Cartouche => cartouche_depth_after(&self.text) == 0,
            _ => true,
        }
    }
}

/// Outer-syntax commands. Only a structural subset matters to the checks;
/// the rest is here for highlighting.
pub const COMMAND_KEYWORDS: &[&str] = &[
    "theory", "begin", "end", "lemma", "theorem", "corollary", "proposition",
    "schematic_goal", "proof", "qed", "by", "apply", "apply_end", "done", "oops", "sorry",
    "next", "have", "show", "hence", "thus", "assume", "presume", "fix", "obtain", "from",
    "with", "then", "using", "unfolding", "note", "also", "finally", "moreover", "ultimately",
    "case", "let", "define", "definition", "fun", "function", "primrec", "datatype",
    "codatatype", "type_synonym", "typedecl", "consts", "abbreviation", "inductive",
    "inductive_set", "locale", "context", "class", "instantiation", "interpretation",
    "interpret", "termination", "chapter", "section", "subsection", "subsubsection",
    "paragraph", "text", "txt", "value", "term", "thm", "typ", "find_theorems", "declare",
    "lemmas", "notepad", "print_theorems", "export_code", "ML",
];

pub const INNER_KEYWORDS: &[&str] = &[
    "imports", "keywords", "abbrevs", "where", "and", "is", "for", "if", "shows", "assumes",
    "fixes", "obtains", "defines", "includes", "in", "at", "overloaded", "binder", "infix",
    "infixl", "infixr", "structure", "arbitrary", "rule", "of", "OF", "THEN", "where",
];

fn comment_depth_after(text: &str) -> i64 {
    let bytes = text.as_bytes();
    let mut depth = 0i64;
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i..].starts_with(b"(*") {
            depth += 1;
            i += 2;
        } else if bytes[i..].starts_with(b"*)") {
            depth -= 1;
            i += 2;
            if depth == 0 {
                return 0;
            }
        } else {
            i += 1;
        }
    }
    depth
}

fn string_is_closed(text: &str) -> bool {
    let mut chars = text.chars();
    let Some(quote) = chars.next() else {
        return false;
    };
    let mut escaped = false;
    let mut closed = false;
    for c in chars {
        if closed {
            return false;
        }
        if escaped {
            escaped = false;
        } else if c == '\\' {
            escaped = true;
        } else if c == quote {
            closed = true;
        }
    }
    closed
}

const OPEN_SYMBOL: &str = "\\<open>";
const CLOSE_SYMBOL: &str = "\\<close>";

fn cartouche_depth_after(text: &str) -> i64 {
    let mut depth = 0i64;
    let mut rest = text;
    while let Some(c) = rest.chars().next() {
        if c == '‹' || rest.starts_with(OPEN_SYMBOL) {
            depth += 1;
        } else if c == '›' || rest.starts_with(CLOSE_SYMBOL) {
            depth -= 1;
            if depth == 0 {
                return 0;
            }
        }
        let step = if rest.starts_with(OPEN_SYMBOL) {
            OPEN_SYMBOL.len()
        } else if rest.starts_with(CLOSE_SYMBOL) {
            CLOSE_SYMBOL.len()
        } else {
            c.len_utf8()
        };
        rest = &rest[step..];
    }
    depth
}

fn is_bracket(c: char) -> bool {
    matches!(c, '(' | ')' | '[' | ']' | '{' | '}')
}

fn is_operator(c: char) -> bool {
    matches!(
        c,
        '!' | '#' | '$' | '%' | '&' | '*' | '+' | '-' | '/' | '<' | '=' | '>' | '?' | '@' | '^'
            | '|' | '~' | ':' | ',' | ';' | '.'
    )
}

fn is_letter(c: char) -> bool {
    c.is_alphabetic()
}

fn is_ident_rest(c: char) -> bool {
    c.is_alphanumeric() || c == '_' || c == '\''
}

struct Lexer<'a> {
    text: &'a str,
    pos: usize,
    line: u32,
    column: u32,
    tokens: Vec<Token>,
}

impl<'a> Lexer<'a> {
    fn rest(&self) -> &'a str {
        &self.text[self.pos..]
    }

    fn peek(&self) -> Option<char> {
        self.rest().chars().next()
    }

    fn peek2(&self) -> Option<char> {
        self.rest().chars().nth(1)
    }

    /// Scans forward over `n_bytes` bytes, tracking line/column.
    fn advance_to(&mut self, end: usize) -> (u32, u32) {
        for c in self.text[self.pos..end].chars() {
            if c == '\n' {
                self.line += 1;
                self.column = 0;
            } else {
                self.column += 1;
            }
        }
        self.pos = end;
        (self.line, self.column)
    }

    fn emit(&mut self, class: TokenClass, end: usize) {
        let start = self.pos;
        let (line, column) = (self.line, self.column);
        let (end_line, end_column) = self.advance_to(end);
        self.tokens.push(Token {
            class,
            text: self.text[start..end].to_owned(),
            range: SourceRange::new(line, column, end_line, end_column),
            offset: start,
        });
    }

    /// End of a `\<name>` symbol starting at the cursor, if well-formed.
    fn symbol_end(&self) -> Option<usize> {
        let rest = self.rest();
        let body = rest.strip_prefix("\\<")?;
        let mut len = 0;
        for c in body.chars() {
            if c == '>' {
                return (len > 0).then_some(self.pos + 2 + len + 1);
            }
            if !(c.is_ascii_alphanumeric() || c == '_' || c == '^') {
                return None;
            }
            len += c.len_utf8();
        }
        None
    }

    fn comment_end(&self) -> usize {
        let bytes = self.text.as_bytes();
        let mut depth = 0usize;
        let mut i = self.pos;
        while i < bytes.len() {
            if bytes[i..].starts_with(b"(*") {
                depth += 1;
                i += 2;
            } else if bytes[i..].starts_with(b"*)") {
                depth -= 1;
                i += 2;
                if depth == 0 {
                    return i;
                }
            } else {
                i += 1;
            }
        }
        self.text.len()
    }

    fn string_end(&self, quote: char) -> usize {
        let mut chars = self.rest().char_indices().skip(1);
        while let Some((i, c)) = chars.next() {
            if c == '\\' {
                chars.next();
            } else if c == quote {
                return self.pos + i + c.len_utf8();
            }
        }
        self.text.len()
    }

    fn cartouche_end(&self) -> usize {
        let mut depth = 0usize;
        let mut i = self.pos;
        while i < self.text.len() {
            let rest = &self.text[i..];
            let c = rest.chars().next().unwrap();
            if rest.starts_with(OPEN_SYMBOL) {
                depth += 1;
                i += OPEN_SYMBOL.len();
            } else if rest.starts_with(CLOSE_SYMBOL) {
                depth -= 1;
                i += CLOSE_SYMBOL.len();
                if depth == 0 {
                    return i;
                }
            } else {
                if c == '‹' {
                    depth += 1;
                } else if c == '›' {
                    depth -= 1;
                    if depth == 0 {
                        return i + c.len_utf8();
                    }
                }
                i += c.len_utf8();
            }
        }
        self.text.len()
    }

    fn run_end(&self, pred: impl Fn(char) -> bool) -> usize {
        self.rest()
            .char_indices()
            .find(|&(_, c)| !pred(c))
            .map_or(self.text.len(), |(i, _)| self.pos + i)
    }

    fn identifier_end(&self) -> usize {
        let mut end = self.run_end(is_ident_rest);
        // Qualified names: `HOL.conjI`.
        while self.text[end..].starts_with('.')
            && self.text[end + 1..].chars().next().is_some_and(is_letter)
        {
            let tail = &self.text[end + 1..];
            let len = tail
                .char_indices()
                .find(|&(_, c)| !is_ident_rest(c))
                .map_or(tail.len(), |(i, _)| i);
            end += 1 + len;
        }
        end
    }

    fn next_token(&mut self) {
        let c = self.peek().expect("not at end");
        let next = self.peek2();
        if c.is_whitespace() {
            let end = self.run_end(char::is_whitespace);
            self.emit(TokenClass::Whitespace, end);
        } else if c == '(' && next == Some('*') {
            let end = self.comment_end();
            self.emit(TokenClass::Comment, end);
        } else if c == '"' || c == '`' {
            let end = self.string_end(c);
            self.emit(TokenClass::StringLiteral, end);
        } else if c == '‹' || self.rest().starts_with(OPEN_SYMBOL) {
            let end = self.cartouche_end();
            self.emit(TokenClass::Cartouche, end);
        } else if c == '\\' {
            match self.symbol_end() {
                Some(end) => self.emit(TokenClass::Symbol, end),
                None => self.emit(TokenClass::Unknown, self.pos + 1),
            }
        } else if is_letter(c) || c == '_' || c.is_ascii_digit() {
            let end = if c.is_ascii_digit() {
                self.run_end(|c| c.is_ascii_digit())
            } else {
                self.identifier_end()
            };
            let word = &self.text[self.pos..end];
            let class = if COMMAND_KEYWORDS.contains(&word) {
                TokenClass::CommandKeyword
            } else if INNER_KEYWORDS.contains(&word) {
                TokenClass::InnerKeyword
            } else {
                TokenClass::Identifier
            };
            self.emit(class, end);
        } else if is_bracket(c) {
            self.emit(TokenClass::Symbol, self.pos + 1);
        } else if is_operator(c) {
            // Keep `(*` out of operator runs so a comment opener is never swallowed.
            let mut end = self.pos;
            for (i, ch) in self.rest().char_indices() {
                if !is_operator(ch) {
                    break;
                }
                end = self.pos + i + ch.len_utf8();
            }
            self.emit(TokenClass::Symbol, end);
        } else if c.is_control() {
            self.emit(TokenClass::Unknown, self.pos + c.len_utf8());
        } else {
            // Any other printable character (∧, ⟶, ∀, ...).
            self.emit(TokenClass::Symbol, self.pos + c.len_utf8());
        }
    }
}

/// Splits `text` into tokens whose concatenation is exactly `text`.
pub fn tokenize(text: &str) -> Vec<Token> {
    let mut lexer = Lexer {
        text,
        pos: 0,
        line: 1,
        column: 0,
        tokens: Vec::new(),
    };
    while lexer.pos < text.len() {
        lexer.next_token();
    }
    lexer.tokens
}

#[cfg(test)]
mod tests {
    use super::*;

    fn classes(text: &str) -> Vec<(TokenClass, String)> {
        tokenize(text)
            .into_iter()
            .map(|t| (t.class, t.text))
            .collect()
    }

    #[test]
    fn lemma_statement() {
        assert_eq!(
            classes("lemma \"A ∧ B\""),
            [
                (TokenClass::CommandKeyword, "lemma".into()),
                (TokenClass::Whitespace, " ".into()),
                (TokenClass::StringLiteral, "\"A ∧ B\"".into()),
            ]
        );
    }

    #[test]
    fn nested_comment_is_one_token() {
        let toks = tokenize("(* a (* b *) c *)");
        assert_eq!(toks.len(), 1);
        assert_eq!(toks[0].class, TokenClass::Comment);
        assert!(toks[0].is_terminated());
    }

    #[test]
    fn empty_input() {
        assert!(tokenize("").is_empty());
    }

    #[test]
    fn unterminated_comment_runs_to_end() {
        let toks = tokenize("lemma (* open (* inner *) still open");
        let last = toks.last().unwrap();
        assert_eq!(last.class, TokenClass::Comment);
        assert!(!last.is_terminated());
        assert_eq!(last.text, "(* open (* inner *) still open");
    }

    #[test]
    fn strings_and_cartouches() {
        let toks = tokenize("\"a \\\" b\" ‹x ‹y› z› \\<open>q\\<close> `alt`");
        let kinds: Vec<_> = toks
            .iter()
            .filter(|t| !t.is_trivia())
            .map(|t| (t.class, t.is_terminated()))
            .collect();
        assert_eq!(
            kinds,
            [
                (TokenClass::StringLiteral, true),
                (TokenClass::Cartouche, true),
                (TokenClass::Cartouche, true),
                (TokenClass::StringLiteral, true),
            ]
        );
        assert!(!tokenize("\"never closed").last().unwrap().is_terminated());
        assert!(!tokenize("‹a ‹b›").last().unwrap().is_terminated());
    }

    #[test]
    fn symbols_identifiers_keywords() {
        let toks: Vec<_> = classes("apply (rule conjI) HOL.conjE x' \\<and> ==> 42 ∀")
            .into_iter()
            .filter(|(c, _)| *c != TokenClass::Whitespace)
            .collect();
        assert_eq!(
            toks,
            [
                (TokenClass::CommandKeyword, "apply".into()),
                (TokenClass::Symbol, "(".into()),
                (TokenClass::InnerKeyword, "rule".into()),
                (TokenClass::Identifier, "conjI".into()),
                (TokenClass::Symbol, ")".into()),
                (TokenClass::Identifier, "HOL.conjE".into()),
                (TokenClass::Identifier, "x'".into()),
                (TokenClass::Symbol, "\\<and>".into()),
                (TokenClass::Symbol, "==>".into()),
                (TokenClass::Identifier, "42".into()),
                (TokenClass::Symbol, "∀".into()),
            ]
        );
    }

    #[test]
    fn stray_backslash_and_controls_are_unknown() {
        let toks = tokenize("\\x\u{7}");
        assert_eq!(toks[0].class, TokenClass::Unknown);
        assert_eq!(toks[2].class, TokenClass::Unknown);
    }

    #[test]
    fn ranges_track_lines_and_chars() {
        let toks = tokenize("ab\n  ∧c");
        let c = toks.last().unwrap();
        assert_eq!(c.text, "c");
        assert_eq!(c.range, SourceRange::new(2, 3, 2, 4));
        assert_eq!(c.offset, "ab\n  ∧".len());
    }

    #[test]
    fn operator_run_stops_before_comment() {
        let toks = classes("=(* c *)");
        assert_eq!(toks[0], (TokenClass::Symbol, "=".into()));
        assert_eq!(toks[1].0, TokenClass::Comment);
    }
}
