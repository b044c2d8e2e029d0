//! Recursive-descent parser for the symbol language.
//!
//! ```text
//! expr    := term (("+" | "-") term)*
//! term    := unary (("*" | "/") unary)*
//! unary   := "-" unary | "+" unary | power
//! power   := primary ("^" exponent)?
//! exponent:= ["-"] integer | "(" ["-"] integer ")"
//! primary := number | variable | func "(" expr ")" | "(" expr ")"
//! ```
//!
//! `^` binds tighter than unary minus, so `-x^2` is `-(x^2)`.

use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use super::expr::{Expr, Func, Var};
use super::SymbolError;

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    End,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Num(v) => alloc::format!("number {v}"),
            Tok::Ident(s) => alloc::format!("identifier '{s}'"),
            Tok::Plus => "'+'".into(),
            Tok::Minus => "'-'".into(),
            Tok::Star => "'*'".into(),
            Tok::Slash => "'/'".into(),
            Tok::Caret => "'^'".into(),
            Tok::LParen => "'('".into(),
            Tok::RParen => "')'".into(),
            Tok::End => "end of input".into(),
        }
    }
}

struct Lexer<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Lexer<'a> {
    fn next_token(&mut self) -> Result<(Tok, usize), SymbolError> {
        let bytes = self.src.as_bytes();
        while self.pos < bytes.len() && bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        let start = self.pos;
        let Some(&c) = bytes.get(self.pos) else {
            return Ok((Tok::End, start));
        };
        let single = match c {
            b'+' => Some(Tok::Plus),
            b'-' => Some(Tok::Minus),
            b'*' => Some(Tok::Star),
            b'/' => Some(Tok::Slash),
            b'^' => Some(Tok::Caret),
            b'(' => Some(Tok::LParen),
            b')' => Some(Tok::RParen),
            _ => None,
        };
        if let Some(tok) = single {
            self.pos += 1;
            return Ok((tok, start));
        }
        if c.is_ascii_digit() || c == b'.' {
            let mut end = self.pos;
            while end < bytes.len() && (bytes[end].is_ascii_digit() || bytes[end] == b'.') {
                end += 1;
            }
            if end < bytes.len() && (bytes[end] == b'e' || bytes[end] == b'E') {
                let mut k = end + 1;
                if k < bytes.len() && (bytes[k] == b'+' || bytes[k] == b'-') {
                    k += 1;
                }
                if k < bytes.len() && bytes[k].is_ascii_digit() {
                    while k < bytes.len() && bytes[k].is_ascii_digit() {
                        k += 1;
                    }
                    end = k;
                }
            }
            let text = &self.src[start..end];
            self.pos = end;
            return match text.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok((Tok::Num(v), start)),
                _ => Err(SymbolError::Syntax {
                    offset: start,
                    expected: vec!["finite number"],
                    found: text.to_string(),
                }),
            };
        }
        if c.is_ascii_alphabetic() || c == b'_' {
            let mut end = self.pos;
            while end < bytes.len() && (bytes[end].is_ascii_alphanumeric() || bytes[end] == b'_') {
                end += 1;
            }
            self.pos = end;
            return Ok((Tok::Ident(self.src[start..end].to_string()), start));
        }
        let ch = self.src[start..].chars().next().unwrap_or('?');
        Err(SymbolError::Syntax {
            offset: start,
            expected: vec!["number", "identifier", "operator", "'('"],
            found: ch.to_string(),
        })
    }
}

struct Parser<'a> {
    lexer: Lexer<'a>,
    tok: Tok,
    at: usize,
    dim: usize,
}

pub(crate) fn parse(text: &str, dim: usize) -> Result<Expr, SymbolError> {
    if dim == 0 {
        return Err(SymbolError::ZeroDimension);
    }
    let mut lexer = Lexer { src: text, pos: 0 };
    let (tok, at) = lexer.next_token()?;
    let mut p = Parser { lexer, tok, at, dim };
    let e = p.expr()?;
    if p.tok != Tok::End {
        return Err(p.unexpected(vec!["operator", "end of input"]));
    }
    Ok(e)
}

impl Parser<'_> {
    fn bump(&mut self) -> Result<(), SymbolError> {
        let (tok, at) = self.lexer.next_token()?;
        self.tok = tok;
        self.at = at;
        Ok(())
    }

    fn unexpected(&self, expected: Vec<&'static str>) -> SymbolError {
        SymbolError::Syntax { offset: self.at, expected, found: self.tok.describe() }
    }

    fn expect(&mut self, tok: Tok, name: &'static str) -> Result<(), SymbolError> {
        if self.tok == tok {
            self.bump()
        } else {
            Err(self.unexpected(vec![name]))
        }
    }

    fn expr(&mut self) -> Result<Expr, SymbolError> {
        let mut lhs = self.term()?;
        loop {
            match self.tok {
                Tok::Plus => {
                    self.bump()?;
                    lhs = Expr::add(lhs, self.term()?);
                }
                Tok::Minus => {
                    self.bump()?;
                    lhs = Expr::sub(lhs, self.term()?);
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<Expr, SymbolError> {
        let mut lhs = self.unary()?;
        loop {
            match self.tok {
                Tok::Star => {
                    self.bump()?;
                    lhs = Expr::mul(lhs, self.unary()?);
                }
                Tok::Slash => {
                    self.bump()?;
                    lhs = Expr::div(lhs, self.unary()?);
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn unary(&mut self) -> Result<Expr, SymbolError> {
        match self.tok {
            Tok::Minus => {
                self.bump()?;
                Ok(Expr::neg(self.unary()?))
            }
            Tok::Plus => {
                self.bump()?;
                self.unary()
            }
            _ => self.power(),
        }
    }

    fn power(&mut self) -> Result<Expr, SymbolError> {
        let base = self.primary()?;
        if self.tok != Tok::Caret {
            return Ok(base);
        }
        self.bump()?;
        let n = self.exponent()?;
        Ok(Expr::pow(base, n))
    }

    fn exponent(&mut self) -> Result<i32, SymbolError> {
        let parenthesized = self.tok == Tok::LParen;
        if parenthesized {
            self.bump()?;
        }
        let negative = self.tok == Tok::Minus;
        if negative {
            self.bump()?;
        }
        let n = match self.tok {
            Tok::Num(v) if libm::trunc(v) == v && libm::fabs(v) <= 1.0e6 => v as i32,
            _ => return Err(self.unexpected(vec!["integer exponent"])),
        };
        self.bump()?;
        if parenthesized {
            self.expect(Tok::RParen, "')'")?;
        }
        Ok(if negative { -n } else { n })
    }

    fn primary(&mut self) -> Result<Expr, SymbolError> {
        match self.tok.clone() {
            Tok::Num(v) => {
                self.bump()?;
                Ok(Expr::constant(v))
            }
            Tok::LParen => {
                self.bump()?;
                let e = self.expr()?;
                self.expect(Tok::RParen, "')'")?;
                Ok(e)
            }
            Tok::Ident(name) => {
                let at = self.at;
                self.bump()?;
                if let Some(f) = Func::from_name(&name) {
                    self.expect(Tok::LParen, "'('")?;
                    let arg = self.expr()?;
                    self.expect(Tok::RParen, "')'")?;
                    return Ok(Expr::call(f, arg));
                }
                self.variable(&name, at).map(Expr::var)
            }
            _ => Err(self.unexpected(vec!["number", "variable", "function", "'('"])),
        }
    }

    fn variable(&self, name: &str, offset: usize) -> Result<Var, SymbolError> {
        if name == "t" {
            return Ok(Var::T);
        }
        if self.dim == 1 {
            match name {
                "x" => return Ok(Var::X(0)),
                "xi" => return Ok(Var::Xi(0)),
                _ => {}
            }
        }
        let (make, digits): (fn(usize) -> Var, &str) = if let Some(d) = name.strip_prefix("xi") {
            (Var::Xi, d)
        } else if let Some(d) = name.strip_prefix('x') {
            (Var::X, d)
        } else {
            return Err(SymbolError::UnknownIdentifier { name: name.to_string(), offset });
        };
        if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
            return Err(SymbolError::UnknownIdentifier { name: name.to_string(), offset });
        }
        let index: usize = digits
            .parse()
            .map_err(|_| SymbolError::UnknownIdentifier { name: name.to_string(), offset })?;
        if index == 0 || index > self.dim {
            return Err(SymbolError::DimensionMismatch {
                name: name.to_string(),
                index,
                dim: self.dim,
                offset,
            });
        }
        Ok(make(index - 1))
    }
}
