//! Source metrics used to bucket reference designs into Easy / Medium /
//! Difficult.

use serde::{Deserialize, Serialize};

use super::Complexity;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComplexityThresholds {
    /// Non-blank lines at or above which a design is at least Medium.
    pub medium_loc: usize,
    /// Non-blank lines strictly above which a design is Difficult.
    pub difficult_loc: usize,
    /// Loop nesting depth at which the LOC class is promoted by one.
    pub promote_depth: usize,
}

impl Default for ComplexityThresholds {
    fn default() -> Self {
        Self {
            medium_loc: 40,
            difficult_loc: 100,
            promote_depth: 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SourceMetrics {
    pub non_blank_loc: usize,
    pub max_loop_depth: usize,
}

pub fn tag_complexity(source: &str, thresholds: &ComplexityThresholds) -> Complexity {
    let m = source_metrics(source);
    let base = if m.non_blank_loc > thresholds.difficult_loc {
        Complexity::Difficult
    } else if m.non_blank_loc >= thresholds.medium_loc {
        Complexity::Medium
    } else {
        Complexity::Easy
    };
    if m.max_loop_depth >= thresholds.promote_depth {
        match base {
            Complexity::Easy => Complexity::Medium,
            _ => Complexity::Difficult,
        }
    } else {
        base
    }
}

pub fn source_metrics(source: &str) -> SourceMetrics {
    let non_blank_loc = source.lines().filter(|l| !l.trim().is_empty()).count();
    let tokens = tokenize(source);
    let mut walker = Walker { toks: &tokens, pos: 0, max: 0, nesting: 0 };
    walker.top_level();
    SourceMetrics {
        non_blank_loc,
        max_loop_depth: walker.max,
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Word(String),
    Punct(char),
}

/// Identifiers and the punctuation the loop walker cares about. Comments,
/// literals and preprocessor lines are dropped.
fn tokenize(source: &str) -> Vec<Tok> {
    let chars: Vec<char> = source.chars().collect();
    let mut toks = Vec::new();
    let mut i = 0;
    let mut line_start = true;
    while i < chars.len() {
        let c = chars[i];
        if c == '\n' {
            line_start = true;
            i += 1;
            continue;
        }
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        if line_start && c == '#' {
            // preprocessor directive, honoring backslash continuations
            while i < chars.len() && chars[i] != '\n' {
                if chars[i] == '\\' && chars.get(i + 1) == Some(&'\n') {
                    i += 1;
                }
                i += 1;
            }
            continue;
        }
        line_start = false;
        if c == '/' && chars.get(i + 1) == Some(&'/') {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
            }
            continue;
        }
        if c == '/' && chars.get(i + 1) == Some(&'*') {
            i += 2;
            while i < chars.len() && !(chars[i] == '*' && chars.get(i + 1) == Some(&'/')) {
                i += 1;
            }
            i += 2;
            continue;
        }
        if c == '"' || c == '\'' {
            i += 1;
            while i < chars.len() && chars[i] != c && chars[i] != '\n' {
                if chars[i] == '\\' {
                    i += 1;
                }
                i += 1;
            }
            i += 1;
            continue;
        }
        if c.is_alphanumeric() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            toks.push(Tok::Word(chars[start..i].iter().collect()));
            continue;
        }
        if matches!(c, '(' | ')' | '{' | '}' | ';') {
            toks.push(Tok::Punct(c));
        }
        i += 1;
    }
    toks
}

const MAX_NESTING: usize = 256;

struct Walker<'a> {
    toks: &'a [Tok],
    pos: usize,
    max: usize,
    nesting: usize,
}

impl Walker<'_> {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos)
    }

    fn peek_word(&self) -> Option<&str> {
        match self.peek() {
            Some(Tok::Word(w)) => Some(w),
            _ => None,
        }
    }

    fn is_punct(&self, c: char) -> bool {
        self.peek() == Some(&Tok::Punct(c))
    }

    fn skip_balanced(&mut self, open: char, close: char) {
        let mut level = 0usize;
        while let Some(t) = self.peek().cloned() {
            self.pos += 1;
            if t == Tok::Punct(open) {
                level += 1;
            } else if t == Tok::Punct(close) {
                level = level.saturating_sub(1);
                if level == 0 {
                    return;
                }
            }
        }
    }

    fn top_level(&mut self) {
        while let Some(t) = self.peek().cloned() {
            match t {
                Tok::Punct('{') => self.block(0),
                Tok::Punct('(') => self.skip_balanced('(', ')'),
                _ => self.pos += 1,
            }
        }
    }

    fn block(&mut self, depth: usize) {
        if self.nesting >= MAX_NESTING {
            self.skip_balanced('{', '}');
            return;
        }
        self.nesting += 1;
        self.pos += 1; // '{'
        loop {
            match self.peek() {
                None => break,
                Some(Tok::Punct('}')) => {
                    self.pos += 1;
                    break;
                }
                _ => self.statement(depth),
            }
        }
        self.nesting -= 1;
    }

    fn loop_body(&mut self, depth: usize) {
        self.max = self.max.max(depth + 1);
        self.statement(depth + 1);
    }

    fn statement(&mut self, depth: usize) {
        if self.nesting >= MAX_NESTING {
            self.pos += 1;
            return;
        }
        self.nesting += 1;
        match self.peek() {
            None | Some(Tok::Punct('}')) => {}
            Some(Tok::Punct('{')) => self.block(depth),
            Some(Tok::Punct(';')) => self.pos += 1,
            Some(Tok::Word(w)) if w == "for" || w == "while" => {
                self.pos += 1;
                if self.is_punct('(') {
                    self.skip_balanced('(', ')');
                }
                self.loop_body(depth);
            }
            Some(Tok::Word(w)) if w == "do" => {
                self.pos += 1;
                self.loop_body(depth);
                if self.peek_word() == Some("while") {
                    self.pos += 1;
                    if self.is_punct('(') {
                        self.skip_balanced('(', ')');
                    }
                    if self.is_punct(';') {
                        self.pos += 1;
                    }
                }
            }
            Some(Tok::Word(w)) if w == "if" || w == "switch" => {
                self.pos += 1;
                if self.is_punct('(') {
                    self.skip_balanced('(', ')');
                }
                self.statement(depth);
                if self.peek_word() == Some("else") {
                    self.pos += 1;
                    self.statement(depth);
                }
            }
            Some(Tok::Word(w)) if w == "else" => {
                self.pos += 1;
                self.statement(depth);
            }
            Some(_) => self.expression_statement(),
        }
        self.nesting -= 1;
    }

    fn expression_statement(&mut self) {
        let mut first = true;
        while let Some(t) = self.peek() {
            match t {
                Tok::Punct(';') => {
                    self.pos += 1;
                    return;
                }
                Tok::Punct('}') => return,
                Tok::Punct('(') => self.skip_balanced('(', ')'),
                Tok::Punct('{') => self.skip_balanced('{', '}'),
                Tok::Word(w)
                    if !first && matches!(w.as_str(), "for" | "while" | "do" | "if" | "switch") =>
                {
                    return
                }
                _ => self.pos += 1,
            }
            first = false;
        }
    }
}
