//! A small parser for Python literal syntax with value equality.
//!
//! Accepts numbers, strings, `True`/`False`/`None` (and the JSON spellings
//! `true`/`false`/`null`), lists, tuples, sets, dicts and `set()`. A bare
//! comma-separated sequence parses as a tuple, which is how call argument
//! lists are compared.

use std::fmt;

#[derive(Debug, Clone)]
pub enum Literal {
    Int(i128),
    Float(f64),
    Str(String),
    Bool(bool),
    None,
    List(Vec<Literal>),
    Tuple(Vec<Literal>),
    Set(Vec<Literal>),
    Dict(Vec<(Literal, Literal)>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LiteralError {
    pub offset: usize,
    pub message: String,
}

impl fmt::Display for LiteralError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} at byte {}", self.message, self.offset)
    }
}

impl std::error::Error for LiteralError {}

impl PartialEq for Literal {
    /// Python-style value equality: `1 == 1.0`, sets and dicts are
    /// order-free, lists and tuples are distinct. Booleans do not equal
    /// integers.
    fn eq(&self, other: &Self) -> bool {
        use Literal::*;
        match (self, other) {
            (Int(a), Int(b)) => a == b,
            (Float(a), Float(b)) => a == b,
            (Int(a), Float(b)) | (Float(b), Int(a)) => (*a as f64) == *b,
            (Str(a), Str(b)) => a == b,
            (Bool(a), Bool(b)) => a == b,
            (None, None) => true,
            (List(a), List(b)) | (Tuple(a), Tuple(b)) => a == b,
            (Set(a), Set(b)) => a.iter().all(|x| b.contains(x)) && b.iter().all(|x| a.contains(x)),
            (Dict(a), Dict(b)) => {
                a.len() == b.len()
                    && a.iter()
                        .all(|(k, v)| b.iter().any(|(k2, v2)| k == k2 && v == v2))
            }
            _ => false,
        }
    }
}

pub fn parse_literal(text: &str) -> Result<Literal, LiteralError> {
    let mut p = Parser {
        src: text.as_bytes(),
        text,
        pos: 0,
    };
    p.skip_ws();
    let first = p.value()?;
    p.skip_ws();
    let value = if p.peek() == Some(b',') {
        let mut items = vec![first];
        while p.eat(b',') {
            p.skip_ws();
            if p.at_end() {
                break;
            }
            items.push(p.value()?);
            p.skip_ws();
        }
        Literal::Tuple(items)
    } else {
        first
    };
    p.skip_ws();
    if !p.at_end() {
        return Err(p.error("trailing characters"));
    }
    Ok(value)
}

struct Parser<'a> {
    src: &'a [u8],
    text: &'a str,
    pos: usize,
}

impl<'a> Parser<'a> {
    fn error(&self, message: &str) -> LiteralError {
        LiteralError {
            offset: self.pos,
            message: message.to_string(),
        }
    }

    fn peek(&self) -> Option<u8> {
        self.src.get(self.pos).copied()
    }

    fn at_end(&self) -> bool {
        self.pos >= self.src.len()
    }

    fn eat(&mut self, c: u8) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn skip_ws(&mut self) {
        while matches!(self.peek(), Some(b' ' | b'\t' | b'\n' | b'\r')) {
            self.pos += 1;
        }
    }

    fn value(&mut self) -> Result<Literal, LiteralError> {
        self.skip_ws();
        match self.peek() {
            None => Err(self.error("unexpected end of input")),
            Some(b'[') => {
                self.pos += 1;
                Ok(Literal::List(self.sequence(b']')?.0))
            }
            Some(b'(') => {
                self.pos += 1;
                let (items, trailing_comma) = self.sequence(b')')?;
                if items.len() == 1 && !trailing_comma {
                    Ok(items.into_iter().next().unwrap())
                } else {
                    Ok(Literal::Tuple(items))
                }
            }
            Some(b'{') => {
                self.pos += 1;
                self.brace()
            }
            Some(b'\'' | b'"') => self.string(),
            Some(b'-' | b'+' | b'0'..=b'9' | b'.') => self.number(),
            Some(c) if c.is_ascii_alphabetic() || c == b'_' => self.word(),
            Some(_) => Err(self.error("unexpected character")),
        }
    }

    /// Items up to `close`; also reports whether a trailing comma was seen.
    fn sequence(&mut self, close: u8) -> Result<(Vec<Literal>, bool), LiteralError> {
        let mut items = Vec::new();
        let mut trailing_comma = false;
        loop {
            self.skip_ws();
            if self.eat(close) {
                return Ok((items, trailing_comma));
            }
            items.push(self.value()?);
            self.skip_ws();
            trailing_comma = self.eat(b',');
            if !trailing_comma {
                self.skip_ws();
                if self.eat(close) {
                    return Ok((items, false));
                }
                return Err(self.error("expected `,` or closing bracket"));
            }
        }
    }

    fn brace(&mut self) -> Result<Literal, LiteralError> {
        self.skip_ws();
        if self.eat(b'}') {
            return Ok(Literal::Dict(Vec::new()));
        }
        let first = self.value()?;
        self.skip_ws();
        if self.eat(b':') {
            let mut entries = vec![(first, self.value()?)];
            loop {
                self.skip_ws();
                if self.eat(b'}') {
                    return Ok(Literal::Dict(entries));
                }
                if !self.eat(b',') {
                    return Err(self.error("expected `,` or `}` in dict"));
                }
                self.skip_ws();
                if self.eat(b'}') {
                    return Ok(Literal::Dict(entries));
                }
                let key = self.value()?;
                self.skip_ws();
                if !self.eat(b':') {
                    return Err(self.error("expected `:` in dict"));
                }
                entries.push((key, self.value()?));
            }
        }
        let mut items = vec![first];
        loop {
            self.skip_ws();
            if self.eat(b'}') {
                return Ok(Literal::Set(items));
            }
            if !self.eat(b',') {
                return Err(self.error("expected `,` or `}` in set"));
            }
            self.skip_ws();
            if self.eat(b'}') {
                return Ok(Literal::Set(items));
            }
            items.push(self.value()?);
        }
    }

    fn string(&mut self) -> Result<Literal, LiteralError> {
        let quote = self.src[self.pos];
        self.pos += 1;
        let mut out = String::new();
        loop {
            let rest = &self.text[self.pos..];
            let mut chars = rest.chars();
            let c = chars
                .next()
                .ok_or_else(|| self.error("unterminated string"))?;
            self.pos += c.len_utf8();
            match c {
                c if c as u32 == quote as u32 => return Ok(Literal::Str(out)),
                '\\' => {
                    let e = self.text[self.pos..]
                        .chars()
                        .next()
                        .ok_or_else(|| self.error("dangling escape"))?;
                    self.pos += e.len_utf8();
                    let unescaped = match e {
                        'n' => '\n',
                        't' => '\t',
                        'r' => '\r',
                        '0' => '\0',
                        '\\' => '\\',
                        '\'' => '\'',
                        '"' => '"',
                        other => {
                            out.push('\\');
                            other
                        }
                    };
                    out.push(unescaped);
                }
                c => out.push(c),
            }
        }
    }

    fn number(&mut self) -> Result<Literal, LiteralError> {
        let start = self.pos;
        if matches!(self.peek(), Some(b'-' | b'+')) {
            self.pos += 1;
            self.skip_ws();
        }
        let digits_start = self.pos;
        while matches!(self.peek(), Some(b'0'..=b'9' | b'.' | b'e' | b'E' | b'_'))
            || (matches!(self.peek(), Some(b'-' | b'+'))
                && matches!(self.src.get(self.pos - 1), Some(b'e' | b'E')))
        {
            self.pos += 1;
        }
        if self.pos == digits_start {
            // `-inf` and friends
            if let Ok(Literal::Float(f)) = self.word() {
                let negative = self.src[start] == b'-';
                return Ok(Literal::Float(if negative { -f } else { f }));
            }
            return Err(self.error("expected digits"));
        }
        let sign = if self.src[start] == b'-' { "-" } else { "" };
        let body: String = self.text[digits_start..self.pos]
            .chars()
            .filter(|&c| c != '_')
            .collect();
        let text = format!("{sign}{body}");
        if body.contains(['.', 'e', 'E']) {
            text.parse::<f64>()
                .map(Literal::Float)
                .map_err(|_| self.error("invalid float"))
        } else {
            text.parse::<i128>()
                .map(Literal::Int)
                .map_err(|_| self.error("invalid integer"))
        }
    }

    fn word(&mut self) -> Result<Literal, LiteralError> {
        let start = self.pos;
        while matches!(self.peek(), Some(c) if c.is_ascii_alphanumeric() || c == b'_') {
            self.pos += 1;
        }
        match &self.text[start..self.pos] {
            "True" | "true" => Ok(Literal::Bool(true)),
            "False" | "false" => Ok(Literal::Bool(false)),
            "None" | "null" => Ok(Literal::None),
            "inf" => Ok(Literal::Float(f64::INFINITY)),
            "nan" => Ok(Literal::Float(f64::NAN)),
            "set" => {
                self.skip_ws();
                if self.eat(b'(') {
                    self.skip_ws();
                    if self.eat(b')') {
                        return Ok(Literal::Set(Vec::new()));
                    }
                }
                Err(self.error("only `set()` is supported"))
            }
            _ => {
                self.pos = start;
                Err(self.error("not a literal"))
            }
        }
    }
}
