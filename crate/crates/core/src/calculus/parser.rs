use std::fmt;
use std::rc::Rc;

use thiserror::Error;

use super::ast::{Clause, Comp, HandlerDef, Val};

#[derive(Debug, Clone, PartialEq, Error)]
#[error("{line}:{col}: expected {}, found {found}", expected.join(" or "))]
pub struct ParseError {
    pub line: usize,
    pub col: usize,
    pub expected: Vec<String>,
    pub found: String,
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Int(i64),
    Str(String),
    Arrow,
    LeftArrow,
    LParen,
    RParen,
    LBrace,
    RBrace,
    Comma,
    Eof,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Ident(s) => write!(f, "`{s}`"),
            Tok::Int(i) => write!(f, "`{i}`"),
            Tok::Str(s) => write!(f, "{s:?}"),
            Tok::Arrow => f.write_str("`->`"),
            Tok::LeftArrow => f.write_str("`<-`"),
            Tok::LParen => f.write_str("`(`"),
            Tok::RParen => f.write_str("`)`"),
            Tok::LBrace => f.write_str("`{`"),
            Tok::RBrace => f.write_str("`}`"),
            Tok::Comma => f.write_str("`,`"),
            Tok::Eof => f.write_str("end of input"),
        }
    }
}

const KEYWORDS: [&str; 11] = [
    "return", "do", "in", "if", "then", "else", "with", "handle", "handler", "true", "false",
];

struct Spanned {
    tok: Tok,
    line: usize,
    col: usize,
}

struct Lexer {
    chars: Vec<char>,
    i: usize,
    line: usize,
    col: usize,
}

impl Lexer {
    fn peek(&self, ahead: usize) -> Option<char> {
        self.chars.get(self.i + ahead).copied()
    }

    fn advance(&mut self) {
        if self.chars[self.i] == '\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        self.i += 1;
    }

    fn err(&self, expected: &str, found: String) -> ParseError {
        ParseError {
            line: self.line,
            col: self.col,
            expected: vec![expected.to_owned()],
            found,
        }
    }

    fn string(&mut self) -> Result<Tok, ParseError> {
        let (l0, c0) = (self.line, self.col);
        self.advance();
        let mut s = String::new();
        loop {
            match self.peek(0) {
                None => {
                    return Err(ParseError {
                        line: l0,
                        col: c0,
                        expected: vec!["closing `\"`".into()],
                        found: "end of input".into(),
                    })
                }
                Some('"') => {
                    self.advance();
                    return Ok(Tok::Str(s));
                }
                Some('\\') => {
                    s.push(match self.peek(1) {
                        Some('n') => '\n',
                        Some('t') => '\t',
                        Some('"') => '"',
                        Some('\\') => '\\',
                        other => return Err(self.err("an escape sequence", format!("{other:?}"))),
                    });
                    self.advance();
                    self.advance();
                }
                Some(_) => {
                    s.push(self.chars[self.i]);
                    self.advance();
                }
            }
        }
    }

    fn token(&mut self) -> Result<Tok, ParseError> {
        let c = self.chars[self.i];
        let next = self.peek(1);
        if c.is_alphabetic() || c == '_' {
            let start = self.i;
            while self
                .peek(0)
                .is_some_and(|ch| ch.is_alphanumeric() || ch == '_' || ch == '\'')
            {
                self.advance();
            }
            return Ok(Tok::Ident(self.chars[start..self.i].iter().collect()));
        }
        if c.is_ascii_digit() || (c == '-' && next.is_some_and(|n| n.is_ascii_digit())) {
            let (start, l0, c0) = (self.i, self.line, self.col);
            self.advance();
            while self.peek(0).is_some_and(|ch| ch.is_ascii_digit()) {
                self.advance();
            }
            let text: String = self.chars[start..self.i].iter().collect();
            return text.parse().map(Tok::Int).map_err(|_| ParseError {
                line: l0,
                col: c0,
                expected: vec!["an integer literal".into()],
                found: text,
            });
        }
        if c == '"' {
            return self.string();
        }
        let (tok, len) = match (c, next) {
            ('-', Some('>')) => (Tok::Arrow, 2),
            ('<', Some('-')) => (Tok::LeftArrow, 2),
            ('(', _) => (Tok::LParen, 1),
            (')', _) => (Tok::RParen, 1),
            ('{', _) => (Tok::LBrace, 1),
            ('}', _) => (Tok::RBrace, 1),
            (',', _) => (Tok::Comma, 1),
            _ => return Err(self.err("a token", format!("`{c}`"))),
        };
        for _ in 0..len {
            self.advance();
        }
        Ok(tok)
    }
}

fn lex(src: &str) -> Result<Vec<Spanned>, ParseError> {
    let mut lx = Lexer {
        chars: src.chars().collect(),
        i: 0,
        line: 1,
        col: 1,
    };
    let mut out = vec![];
    while let Some(c) = lx.peek(0) {
        if c.is_whitespace() {
            lx.advance();
        } else if c == '#' {
            while lx.peek(0).is_some_and(|ch| ch != '\n') {
                lx.advance();
            }
        } else {
            let (line, col) = (lx.line, lx.col);
            let tok = lx.token()?;
            out.push(Spanned { tok, line, col });
        }
    }
    out.push(Spanned {
        tok: Tok::Eof,
        line: lx.line,
        col: lx.col,
    });
    Ok(out)
}

struct Parser {
    toks: Vec<Spanned>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn fail<T>(&self, expected: &[&str]) -> Result<T, ParseError> {
        let t = &self.toks[self.pos];
        Err(ParseError {
            line: t.line,
            col: t.col,
            expected: expected.iter().map(|s| s.to_string()).collect(),
            found: t.tok.to_string(),
        })
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].tok.clone();
        if t != Tok::Eof {
            self.pos += 1;
        }
        t
    }

    fn expect(&mut self, tok: Tok, name: &str) -> Result<(), ParseError> {
        if *self.peek() == tok {
            self.bump();
            Ok(())
        } else {
            self.fail(&[name])
        }
    }

    fn keyword(&mut self, kw: &str) -> Result<(), ParseError> {
        match self.peek() {
            Tok::Ident(s) if s == kw => {
                self.bump();
                Ok(())
            }
            _ => self.fail(&[&format!("`{kw}`")]),
        }
    }

    fn ident(&mut self) -> Result<String, ParseError> {
        match self.peek() {
            Tok::Ident(s) if !KEYWORDS.contains(&s.as_str()) => {
                let s = s.clone();
                self.bump();
                Ok(s)
            }
            _ => self.fail(&["an identifier"]),
        }
    }

    fn value(&mut self) -> Result<Val, ParseError> {
        let v = match self.peek() {
            Tok::Ident(s) if s == "true" => Val::True,
            Tok::Ident(s) if s == "false" => Val::False,
            Tok::Ident(s) if !KEYWORDS.contains(&s.as_str()) => Val::Var(s.clone()),
            Tok::Int(i) => Val::Int(*i),
            Tok::Str(s) => Val::Str(s.clone()),
            _ => return self.fail(&["a value"]),
        };
        self.bump();
        Ok(v)
    }

    fn comp(&mut self) -> Result<Comp, ParseError> {
        let kw = match self.peek() {
            Tok::Ident(s) => s.clone(),
            Tok::LParen => {
                self.bump();
                let c = self.comp()?;
                self.expect(Tok::RParen, "`)`")?;
                return Ok(c);
            }
            _ => return self.fail(&["a computation"]),
        };
        match kw.as_str() {
            "return" => {
                self.bump();
                Ok(Comp::Return(self.value()?))
            }
            "do" => {
                self.bump();
                let x = self.ident()?;
                self.expect(Tok::LeftArrow, "`<-`")?;
                let c1 = self.comp()?;
                self.keyword("in")?;
                let c2 = self.comp()?;
                Ok(Comp::let_(x, c1, c2))
            }
            "if" => {
                self.bump();
                let v = self.value()?;
                self.keyword("then")?;
                let t = self.comp()?;
                self.keyword("else")?;
                let e = self.comp()?;
                Ok(Comp::if_(v, t, e))
            }
            "with" => {
                self.bump();
                let h = self.handler()?;
                self.keyword("handle")?;
                let c = self.comp()?;
                Ok(Comp::With(Rc::new(h), Box::new(c)))
            }
            k if KEYWORDS.contains(&k) => self.fail(&["a computation"]),
            _ => {
                let op = self.ident()?;
                self.expect(Tok::LParen, "`(`")?;
                let v = self.value()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(Comp::Op(op, v))
            }
        }
    }

    fn handler(&mut self) -> Result<HandlerDef, ParseError> {
        self.keyword("handler")?;
        self.expect(Tok::LBrace, "`{`")?;
        let mut clauses: Vec<Clause> = vec![];
        loop {
            let (line, col) = (self.toks[self.pos].line, self.toks[self.pos].col);
            let op = self.ident()?;
            if clauses.iter().any(|c| c.op == op) {
                return Err(ParseError {
                    line,
                    col,
                    expected: vec!["a distinct operation name".into()],
                    found: format!("duplicate clause `{op}`"),
                });
            }
            self.expect(Tok::LParen, "`(`")?;
            let param = self.ident()?;
            let resume = if *self.peek() == Tok::Comma {
                self.bump();
                Some(self.ident()?)
            } else {
                None
            };
            self.expect(Tok::RParen, "`)`")?;
            self.expect(Tok::Arrow, "`->`")?;
            let body = self.comp()?;
            clauses.push(Clause {
                op,
                param,
                resume,
                body,
            });
            match self.peek() {
                Tok::Comma => {
                    self.bump();
                }
                Tok::RBrace => {
                    self.bump();
                    break;
                }
                _ => return self.fail(&["`,`", "`}`"]),
            }
        }
        Ok(HandlerDef { clauses })
    }
}

pub fn parse_program(text: &str) -> Result<Comp, ParseError> {
    let mut p = Parser {
        toks: lex(text)?,
        pos: 0,
    };
    let c = p.comp()?;
    if *p.peek() != Tok::Eof {
        return p.fail(&["end of input"]);
    }
    Ok(c)
}
