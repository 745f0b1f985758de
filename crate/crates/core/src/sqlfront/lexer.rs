use crate::error::{Error, Pos, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum Tok {
    /// Unquoted word, lowercased.
    Word(String),
    /// `"quoted"` identifier, case preserved.
    Quoted(String),
    Integer(i64),
    Float(f64),
    Str(String),
    /// `$$ ... $$` body, verbatim.
    Dollar(String),
    Sym(&'static str),
    Eof,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Token {
    pub tok: Tok,
    pub pos: Pos,
}

const SYMBOLS: &[&str] = &[
    "<>", "<=", ">=", "==", "!=", "(", ")", ",", ".", "*", "+", "-", "/", "%", "=", "<", ">", ";",
];

struct Lexer<'a> {
    src: &'a str,
    /// Byte offset into `src`.
    at: usize,
    line: usize,
    col: usize,
}

impl<'a> Lexer<'a> {
    fn pos(&self) -> Pos {
        Pos {
            line: self.line,
            col: self.col,
        }
    }

    fn rest(&self) -> &'a str {
        &self.src[self.at..]
    }

    fn peek(&self) -> Option<char> {
        self.rest().chars().next()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek()?;
        self.at += c.len_utf8();
        if c == '\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }

    fn bump_n(&mut self, n: usize) {
        for _ in 0..n {
            self.bump();
        }
    }

    fn skip_trivia(&mut self) {
        loop {
            match self.peek() {
                Some(c) if c.is_whitespace() => {
                    self.bump();
                }
                Some('-') if self.rest().starts_with("--") => {
                    while let Some(c) = self.bump() {
                        if c == '\n' {
                            break;
                        }
                    }
                }
                _ => return,
            }
        }
    }

    fn err(&self, pos: Pos, msg: impl Into<String>) -> Error {
        Error::Syntax {
            msg: msg.into(),
            pos,
        }
    }

    fn next_token(&mut self) -> Result<Token> {
        self.skip_trivia();
        let pos = self.pos();
        let Some(c) = self.peek() else {
            return Ok(Token { tok: Tok::Eof, pos });
        };
        let tok = if self.rest().starts_with("$$") {
            self.bump_n(2);
            let Some(end) = self.rest().find("$$") else {
                return Err(self.err(pos, "unterminated $$ string"));
            };
            let body = self.rest()[..end].to_string();
            let nchars = body.chars().count();
            self.bump_n(nchars + 2);
            Tok::Dollar(body)
        } else if c == '\'' {
            self.bump();
            let mut s = String::new();
            loop {
                match self.bump() {
                    None => return Err(self.err(pos, "unterminated string literal")),
                    Some('\'') if self.peek() == Some('\'') => {
                        self.bump();
                        s.push('\'');
                    }
                    Some('\'') => break,
                    Some(ch) => s.push(ch),
                }
            }
            Tok::Str(s)
        } else if c == '"' {
            self.bump();
            let mut s = String::new();
            loop {
                match self.bump() {
                    None => return Err(self.err(pos, "unterminated quoted identifier")),
                    Some('"') if self.peek() == Some('"') => {
                        self.bump();
                        s.push('"');
                    }
                    Some('"') => break,
                    Some(ch) => s.push(ch),
                }
            }
            if s.is_empty() {
                return Err(self.err(pos, "empty quoted identifier"));
            }
            Tok::Quoted(s)
        } else if c.is_ascii_digit()
            || (c == '.' && self.rest()[1..].starts_with(|d: char| d.is_ascii_digit()))
        {
            self.number(pos)?
        } else if c.is_alphabetic() || c == '_' {
            let mut s = String::new();
            while let Some(ch) = self.peek() {
                if ch.is_alphanumeric() || ch == '_' {
                    s.push(ch);
                    self.bump();
                } else {
                    break;
                }
            }
            Tok::Word(s.to_lowercase())
        } else if let Some(sym) = SYMBOLS.iter().find(|s| self.rest().starts_with(**s)) {
            self.bump_n(sym.len());
            Tok::Sym(sym)
        } else {
            return Err(self.err(pos, format!("unexpected character '{c}'")));
        };
        Ok(Token { tok, pos })
    }

    fn number(&mut self, pos: Pos) -> Result<Tok> {
        let start = self.at;
        let mut is_float = false;
        while matches!(self.peek(), Some(d) if d.is_ascii_digit()) {
            self.bump();
        }
        if self.peek() == Some('.') {
            is_float = true;
            self.bump();
            while matches!(self.peek(), Some(d) if d.is_ascii_digit()) {
                self.bump();
            }
        }
        if matches!(self.peek(), Some('e' | 'E')) {
            let r = &self.rest()[1..];
            let digits_follow = r.starts_with(|d: char| d.is_ascii_digit())
                || ((r.starts_with('+') || r.starts_with('-'))
                    && r[1..].starts_with(|d: char| d.is_ascii_digit()));
            if digits_follow {
                is_float = true;
                self.bump();
                if matches!(self.peek(), Some('+' | '-')) {
                    self.bump();
                }
                while matches!(self.peek(), Some(d) if d.is_ascii_digit()) {
                    self.bump();
                }
            }
        }
        let text = &self.src[start..self.at];
        if is_float {
            text.parse()
                .map(Tok::Float)
                .map_err(|_| self.err(pos, format!("bad number '{text}'")))
        } else {
            text.parse()
                .map(Tok::Integer)
                .map_err(|_| self.err(pos, format!("integer '{text}' out of range")))
        }
    }
}

/// Splits SQL text into tokens, ending with [`Tok::Eof`].
pub fn tokenize(src: &str) -> Result<Vec<Token>> {
    let mut lx = Lexer {
        src,
        at: 0,
        line: 1,
        col: 1,
    };
    let mut out = Vec::new();
    loop {
        let t = lx.next_token()?;
        let eof = t.tok == Tok::Eof;
        out.push(t);
        if eof {
            return Ok(out);
        }
    }
}
