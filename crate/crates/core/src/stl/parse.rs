//! Text form of formulas.
//!
//! ```text
//! expr    := conj ('||' conj)*
//! conj    := until ('&&' until)*
//! until   := unary ('U' window unary)*
//! unary   := '!' unary | ('G' | 'F') window unary | '(' expr ')' | 'true' | 'false' | atom
//! atom    := 'abs' '(' name ')' cmp number | linear cmp number
//! linear  := ['-'] term (('+' | '-') ['-'] term)*
//! term    := number ['*' name] | name
//! window  := '[' number ',' number ']'          (numbers may be 'inf')
//! ```

use std::fmt::Write as _;

use super::formula::{Comparison, Functional, Predicate, SpecAst};
use crate::error::{Error, Result};

const RESERVED: [&str; 7] = ["U", "G", "F", "abs", "true", "false", "inf"];

/// Coordinate names of a signal, in storage order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SignalSchema {
    names: Vec<String>,
}

impl SignalSchema {
    pub fn new<S: Into<String>>(names: impl IntoIterator<Item = S>) -> Result<Self> {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        if names.is_empty() {
            return Err(Error::invalid("schema", "no coordinate names"));
        }
        for (i, n) in names.iter().enumerate() {
            let valid = n.chars().next().is_some_and(|c| c.is_ascii_alphabetic() || c == '_')
                && n.chars().all(|c| c.is_ascii_alphanumeric() || c == '_');
            if !valid || RESERVED.contains(&n.as_str()) {
                return Err(Error::invalid("schema", format!("unusable coordinate name {n:?}")));
            }
            if names[..i].contains(n) {
                return Err(Error::invalid("schema", format!("duplicate coordinate name {n:?}")));
            }
        }
        Ok(Self { names })
    }

    /// `x0, x1, …`.
    pub fn indexed(dim: usize) -> Self {
        Self {
            names: (0..dim).map(|i| format!("x{i}")).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.names.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Ident(String),
    Num(f64),
    LParen,
    RParen,
    LBrack,
    RBrack,
    Comma,
    Bang,
    AndAnd,
    OrOr,
    Cmp(Comparison),
    Plus,
    Minus,
    Star,
    Eof,
}

fn parse_err(position: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        position,
        message: message.into(),
    }
}

fn lex(text: &str) -> Result<Vec<(usize, Tok)>> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        let start = i;
        let two = |s: &[u8]| bytes[i..].starts_with(s);
        let tok = match c {
            b' ' | b'\t' | b'\n' | b'\r' => {
                i += 1;
                continue;
            }
            b'(' => Tok::LParen,
            b')' => Tok::RParen,
            b'[' => Tok::LBrack,
            b']' => Tok::RBrack,
            b',' => Tok::Comma,
            b'+' => Tok::Plus,
            b'-' => Tok::Minus,
            b'*' => Tok::Star,
            b'!' => Tok::Bang,
            b'&' if two(b"&&") => {
                i += 1;
                Tok::AndAnd
            }
            b'|' if two(b"||") => {
                i += 1;
                Tok::OrOr
            }
            b'>' | b'<' => {
                let eq = bytes.get(i + 1) == Some(&b'=');
                if eq {
                    i += 1;
                }
                Tok::Cmp(match (c, eq) {
                    (b'>', true) => Comparison::Ge,
                    (b'>', false) => Comparison::Gt,
                    (_, true) => Comparison::Le,
                    _ => Comparison::Lt,
                })
            }
            b'0'..=b'9' | b'.' => {
                let mut j = i;
                while j < bytes.len() && (bytes[j].is_ascii_digit() || bytes[j] == b'.') {
                    j += 1;
                }
                if j < bytes.len() && (bytes[j] == b'e' || bytes[j] == b'E') {
                    let mut k = j + 1;
                    if k < bytes.len() && (bytes[k] == b'+' || bytes[k] == b'-') {
                        k += 1;
                    }
                    if k < bytes.len() && bytes[k].is_ascii_digit() {
                        while k < bytes.len() && bytes[k].is_ascii_digit() {
                            k += 1;
                        }
                        j = k;
                    }
                }
                let lit = &text[i..j];
                let v: f64 = lit.parse().map_err(|_| parse_err(start, format!("bad number {lit:?}")))?;
                i = j;
                out.push((start, Tok::Num(v)));
                continue;
            }
            c if c.is_ascii_alphabetic() || c == b'_' => {
                let mut j = i;
                while j < bytes.len() && (bytes[j].is_ascii_alphanumeric() || bytes[j] == b'_') {
                    j += 1;
                }
                let word = &text[i..j];
                i = j;
                out.push((start, if word == "inf" { Tok::Num(f64::INFINITY) } else { Tok::Ident(word.to_string()) }));
                continue;
            }
            _ => return Err(parse_err(start, format!("unexpected character {:?}", text[i..].chars().next().unwrap()))),
        };
        i += 1;
        out.push((start, tok));
    }
    out.push((text.len(), Tok::Eof));
    Ok(out)
}

struct Parser<'a> {
    toks: Vec<(usize, Tok)>,
    pos: usize,
    schema: &'a SignalSchema,
}

impl Parser<'_> {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].1
    }

    fn at(&self) -> usize {
        self.toks[self.pos].0
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].1.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn expect(&mut self, want: Tok, what: &str) -> Result<()> {
        if *self.peek() == want {
            self.bump();
            Ok(())
        } else {
            Err(parse_err(self.at(), format!("expected {what}, found {:?}", self.peek())))
        }
    }

    fn is_ident(&self, word: &str) -> bool {
        matches!(self.peek(), Tok::Ident(w) if w == word)
    }

    fn expr(&mut self) -> Result<SpecAst> {
        let mut lhs = self.conj()?;
        while *self.peek() == Tok::OrOr {
            self.bump();
            lhs = lhs.or(self.conj()?);
        }
        Ok(lhs)
    }

    fn conj(&mut self) -> Result<SpecAst> {
        let mut lhs = self.until()?;
        while *self.peek() == Tok::AndAnd {
            self.bump();
            lhs = lhs.and(self.until()?);
        }
        Ok(lhs)
    }

    fn until(&mut self) -> Result<SpecAst> {
        let mut lhs = self.unary()?;
        while self.is_ident("U") {
            self.bump();
            let (a, b) = self.window()?;
            let rhs = self.unary()?;
            lhs = lhs.until(rhs, a, b).expect("window checked");
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<SpecAst> {
        match self.peek().clone() {
            Tok::Bang => {
                self.bump();
                Ok(self.unary()?.not())
            }
            Tok::LParen => {
                self.bump();
                let inner = self.expr()?;
                self.expect(Tok::RParen, "')'")?;
                Ok(inner)
            }
            Tok::Ident(w) if w == "G" || w == "F" => {
                self.bump();
                let (a, b) = self.window()?;
                let body = self.unary()?;
                Ok(if w == "G" { body.always(a, b) } else { body.eventually(a, b) }.expect("window checked"))
            }
            Tok::Ident(w) if w == "true" => {
                self.bump();
                Ok(SpecAst::True)
            }
            Tok::Ident(w) if w == "false" => {
                self.bump();
                Ok(SpecAst::True.not())
            }
            _ => self.atom(),
        }
    }

    fn window(&mut self) -> Result<(f64, f64)> {
        let at = self.at();
        self.expect(Tok::LBrack, "'['")?;
        let a = self.number()?;
        self.expect(Tok::Comma, "','")?;
        let b = self.number()?;
        self.expect(Tok::RBrack, "']'")?;
        if !(a >= 0.0 && a.is_finite() && a <= b) {
            return Err(parse_err(at, format!("time window needs 0 <= a <= b, got [{a}, {b}]")));
        }
        Ok((a, b))
    }

    fn number(&mut self) -> Result<f64> {
        let negative = *self.peek() == Tok::Minus;
        if negative {
            self.bump();
        }
        match self.bump() {
            Tok::Num(v) => Ok(if negative { -v } else { v }),
            other => {
                self.pos -= 1;
                Err(parse_err(self.at(), format!("expected number, found {other:?}")))
            }
        }
    }

    fn name(&mut self) -> Result<usize> {
        let at = self.at();
        match self.bump() {
            Tok::Ident(n) => self
                .schema
                .index_of(&n)
                .ok_or_else(|| parse_err(at, format!("unknown coordinate {n:?}"))),
            other => Err(parse_err(at, format!("expected coordinate name, found {other:?}"))),
        }
    }

    fn atom(&mut self) -> Result<SpecAst> {
        let functional = if self.is_ident("abs") {
            self.bump();
            self.expect(Tok::LParen, "'('")?;
            let index = self.name()?;
            self.expect(Tok::RParen, "')'")?;
            Functional::AbsCoordinate { index }
        } else {
            self.linear()?
        };
        let at = self.at();
        let comparison = match self.bump() {
            Tok::Cmp(c) => c,
            other => return Err(parse_err(at, format!("expected comparison, found {other:?}"))),
        };
        let threshold = self.number()?;
        Ok(SpecAst::Atom(Predicate::new(functional, comparison, threshold)))
    }

    fn linear(&mut self) -> Result<Functional> {
        let mut coeffs = vec![0.0; self.schema.dim()];
        let mut offset = 0.0;
        let mut sign = 1.0;
        loop {
            if *self.peek() == Tok::Minus {
                self.bump();
                sign = -sign;
            }
            match self.peek().clone() {
                Tok::Num(v) => {
                    self.bump();
                    if *self.peek() == Tok::Star {
                        self.bump();
                        let i = self.name()?;
                        coeffs[i] += sign * v;
                    } else {
                        offset += sign * v;
                    }
                }
                Tok::Ident(_) => {
                    let i = self.name()?;
                    coeffs[i] += sign;
                }
                other => return Err(parse_err(self.at(), format!("expected atom, found {other:?}"))),
            }
            match self.peek() {
                Tok::Plus => sign = 1.0,
                Tok::Minus => sign = -1.0,
                _ => break,
            }
            self.bump();
        }
        Ok(Functional::Affine { coeffs, offset })
    }
}

/// Parses `text` with coordinate names bound by `schema`.
pub fn parse_spec(text: &str, schema: &SignalSchema) -> Result<SpecAst> {
    let mut p = Parser {
        toks: lex(text)?,
        pos: 0,
        schema,
    };
    let ast = p.expr()?;
    if *p.peek() != Tok::Eof {
        return Err(parse_err(p.at(), format!("trailing input {:?}", p.peek())));
    }
    Ok(ast)
}

/// Fully parenthesized text that parses back to the same tree.
pub fn print_spec(ast: &SpecAst, schema: &SignalSchema) -> Result<String> {
    let mut out = String::new();
    write_node(ast, schema, &mut out)?;
    Ok(out)
}

fn write_node(ast: &SpecAst, schema: &SignalSchema, out: &mut String) -> Result<()> {
    match ast {
        SpecAst::True => out.push_str("true"),
        SpecAst::Atom(p) => {
            ast.validate(schema.dim())?;
            match &p.functional {
                Functional::AbsCoordinate { index } => {
                    let _ = write!(out, "abs({})", schema.names[*index]);
                }
                Functional::Affine { coeffs, offset } => {
                    let mut terms = Vec::new();
                    for (i, &c) in coeffs.iter().enumerate() {
                        if c == 1.0 {
                            terms.push(schema.names[i].clone());
                        } else if c != 0.0 {
                            terms.push(format!("{}*{}", num(c), schema.names[i]));
                        }
                    }
                    if *offset != 0.0 || terms.is_empty() {
                        terms.push(num(*offset));
                    }
                    out.push_str(&terms.join(" + "));
                }
            }
            let _ = write!(out, " {} {}", p.comparison.symbol(), num(p.threshold));
        }
        SpecAst::Not(x) => {
            out.push_str("!(");
            write_node(x, schema, out)?;
            out.push(')');
        }
        SpecAst::And(l, r) | SpecAst::Or(l, r) => {
            out.push('(');
            write_node(l, schema, out)?;
            out.push_str(if matches!(ast, SpecAst::And(..)) { ") && (" } else { ") || (" });
            write_node(r, schema, out)?;
            out.push(')');
        }
        SpecAst::Until { lhs, rhs, a, b } => {
            out.push('(');
            write_node(lhs, schema, out)?;
            let _ = write!(out, ") U[{},{}] (", num(*a), num(*b));
            write_node(rhs, schema, out)?;
            out.push(')');
        }
    }
    Ok(())
}

fn num(v: f64) -> String {
    if v == f64::INFINITY {
        "inf".into()
    } else if v == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        format!("{v}")
    }
}
