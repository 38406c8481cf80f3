//! Text format for schemas.
//!
//! ```text
//! % comment to end of line
//! base s(id, name).
//! fd s: {1} -> 2.
//! func f1/0 writes b3 type 'auto_trans'.
//! call v3: {1} -> 2 using avg.
//! view v3(name, avg, time).
//! dep t2 -> b3.
//! p(W,Z) :- s(W,X), t(X,Y,Z), Y=2, not u(W), X<Z.
//! ```
//!
//! Predicates and attribute names start with a lowercase letter, variables
//! with an uppercase letter. Constants are integers or single-quoted strings
//! (`\'` and `\\` escape). Keywords are only keywords when not followed by
//! `(`, so `fd(X) :- ...` is an ordinary rule.

use alloc::collections::BTreeSet;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use alloc::{format, vec};
use core::fmt;

use crate::ir::*;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SyntaxError {
    pub span: SourceSpan,
    pub expected: Vec<String>,
    pub found: String,
}

impl fmt::Display for SyntaxError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "syntax error at {}: expected ", self.span)?;
        match self.expected.as_slice() {
            [one] => write!(f, "{one}")?,
            many => {
                f.write_str("one of ")?;
                for (i, e) in many.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    f.write_str(e)?;
                }
            }
        }
        write!(f, ", found {}", self.found)
    }
}

impl core::error::Error for SyntaxError {}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Var(String),
    Int(i64),
    Str(String),
    LParen,
    RParen,
    LBrace,
    RBrace,
    Comma,
    Dot,
    Colon,
    Turnstile,
    Arrow,
    Slash,
    Eq,
    Cmp(CmpOp),
    Eof,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("identifier `{s}`"),
            Tok::Var(s) => format!("variable `{s}`"),
            Tok::Int(v) => format!("integer `{v}`"),
            Tok::Str(s) => format!("string {}", Constant::Str(s.clone())),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
            Tok::LBrace => "`{`".into(),
            Tok::RBrace => "`}`".into(),
            Tok::Comma => "`,`".into(),
            Tok::Dot => "`.`".into(),
            Tok::Colon => "`:`".into(),
            Tok::Turnstile => "`:-`".into(),
            Tok::Arrow => "`->`".into(),
            Tok::Slash => "`/`".into(),
            Tok::Eq => "`=`".into(),
            Tok::Cmp(op) => format!("`{}`", op.symbol()),
            Tok::Eof => "end of input".into(),
        }
    }
}

struct Token {
    tok: Tok,
    span: SourceSpan,
}

struct Lexer<'a> {
    chars: core::iter::Peekable<core::str::Chars<'a>>,
    line: u32,
    column: u32,
}

impl<'a> Lexer<'a> {
    fn new(text: &'a str) -> Self {
        Lexer {
            chars: text.chars().peekable(),
            line: 1,
            column: 1,
        }
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.chars.next()?;
        if c == '\n' {
            self.line += 1;
            self.column = 1;
        } else {
            self.column += 1;
        }
        Some(c)
    }

    fn err(&self, line: u32, column: u32, length: u32, expected: &[&str], found: String) -> SyntaxError {
        SyntaxError {
            span: SourceSpan { line, column, length },
            expected: expected.iter().map(|s| s.to_string()).collect(),
            found,
        }
    }

    fn tokens(mut self) -> Result<Vec<Token>, SyntaxError> {
        let mut out = Vec::new();
        loop {
            while let Some(&c) = self.chars.peek() {
                if c.is_whitespace() {
                    self.bump();
                } else if c == '%' {
                    while let Some(&c) = self.chars.peek() {
                        if c == '\n' {
                            break;
                        }
                        self.bump();
                    }
                } else {
                    break;
                }
            }
            let (line, column) = (self.line, self.column);
            let Some(c) = self.bump() else {
                out.push(Token {
                    tok: Tok::Eof,
                    span: SourceSpan { line, column, length: 0 },
                });
                return Ok(out);
            };
            let mut len = 1u32;
            let tok = match c {
                '(' => Tok::LParen,
                ')' => Tok::RParen,
                '{' => Tok::LBrace,
                '}' => Tok::RBrace,
                ',' => Tok::Comma,
                '.' => Tok::Dot,
                '/' => Tok::Slash,
                '=' => Tok::Eq,
                ':' => {
                    if self.chars.peek() == Some(&'-') {
                        self.bump();
                        len = 2;
                        Tok::Turnstile
                    } else {
                        Tok::Colon
                    }
                }
                '<' => match self.chars.peek() {
                    Some('=') => {
                        self.bump();
                        len = 2;
                        Tok::Cmp(CmpOp::Le)
                    }
                    Some('>') => {
                        self.bump();
                        len = 2;
                        Tok::Cmp(CmpOp::Ne)
                    }
                    _ => Tok::Cmp(CmpOp::Lt),
                },
                '>' => {
                    if self.chars.peek() == Some(&'=') {
                        self.bump();
                        len = 2;
                        Tok::Cmp(CmpOp::Ge)
                    } else {
                        Tok::Cmp(CmpOp::Gt)
                    }
                }
                '!' => {
                    if self.chars.peek() == Some(&'=') {
                        self.bump();
                        len = 2;
                        Tok::Cmp(CmpOp::Ne)
                    } else {
                        return Err(self.err(line, column, 1, &["`!=`"], "`!`".into()));
                    }
                }
                '-' => match self.chars.peek() {
                    Some('>') => {
                        self.bump();
                        len = 2;
                        Tok::Arrow
                    }
                    Some(d) if d.is_ascii_digit() => {
                        let (v, n) = self.number(line, column, true)?;
                        len = n + 1;
                        Tok::Int(v)
                    }
                    _ => {
                        return Err(self.err(line, column, 1, &["`->`", "integer"], "`-`".into()));
                    }
                },
                '\'' => {
                    let mut s = String::new();
                    loop {
                        match self.bump() {
                            None => {
                                return Err(self.err(
                                    line,
                                    column,
                                    len,
                                    &["closing `'`"],
                                    "end of input".into(),
                                ))
                            }
                            Some('\'') => {
                                len += 1;
                                break;
                            }
                            Some('\\') => {
                                len += 2;
                                match self.bump() {
                                    Some('\'') => s.push('\''),
                                    Some('\\') => s.push('\\'),
                                    Some('n') => s.push('\n'),
                                    other => {
                                        return Err(self.err(
                                            line,
                                            column,
                                            len,
                                            &["`\\'`", "`\\\\`", "`\\n`"],
                                            match other {
                                                Some(c) => format!("`\\{c}`"),
                                                None => "end of input".into(),
                                            },
                                        ))
                                    }
                                }
                            }
                            Some(c) => {
                                len += 1;
                                s.push(c)
                            }
                        }
                    }
                    Tok::Str(s)
                }
                c if c.is_ascii_digit() => {
                    let mut digits = String::from(c);
                    while let Some(&d) = self.chars.peek() {
                        if !d.is_ascii_digit() {
                            break;
                        }
                        digits.push(d);
                        self.bump();
                    }
                    len = digits.len() as u32;
                    match digits.parse() {
                        Ok(v) => Tok::Int(v),
                        Err(_) => {
                            return Err(self.err(line, column, len, &["integer in range"], format!("`{digits}`")))
                        }
                    }
                }
                c if c.is_ascii_alphabetic() => {
                    let mut s = String::from(c);
                    while let Some(&d) = self.chars.peek() {
                        if !(d.is_ascii_alphanumeric() || d == '_') {
                            break;
                        }
                        s.push(d);
                        self.bump();
                    }
                    len = s.len() as u32;
                    if c.is_ascii_uppercase() {
                        Tok::Var(s)
                    } else {
                        Tok::Ident(s)
                    }
                }
                other => {
                    return Err(self.err(line, column, 1, &["token"], format!("`{other}`")));
                }
            };
            out.push(Token {
                tok,
                span: SourceSpan { line, column, length: len },
            });
        }
    }

    fn number(&mut self, line: u32, column: u32, negative: bool) -> Result<(i64, u32), SyntaxError> {
        let mut digits = String::new();
        if negative {
            digits.push('-');
        }
        while let Some(&d) = self.chars.peek() {
            if !d.is_ascii_digit() {
                break;
            }
            digits.push(d);
            self.bump();
        }
        let n = (digits.len() - usize::from(negative)) as u32;
        digits
            .parse()
            .map(|v| (v, n))
            .map_err(|_| self.err(line, column, n + 1, &["integer in range"], format!("`{digits}`")))
    }
}

const KEYWORDS: [&str; 6] = ["base", "view", "fd", "func", "call", "dep"];

struct Parser {
    toks: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn peek2(&self) -> &Tok {
        &self.toks[(self.pos + 1).min(self.toks.len() - 1)].tok
    }

    fn span(&self) -> SourceSpan {
        self.toks[self.pos].span
    }

    fn advance(&mut self) -> &Token {
        let t = &self.toks[self.pos];
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn error(&self, expected: &[&str]) -> SyntaxError {
        SyntaxError {
            span: self.span(),
            expected: expected.iter().map(|s| s.to_string()).collect(),
            found: self.peek().describe(),
        }
    }

    fn expect(&mut self, tok: Tok, name: &str) -> Result<SourceSpan, SyntaxError> {
        if *self.peek() == tok {
            Ok(self.advance().span)
        } else {
            Err(self.error(&[name]))
        }
    }

    fn ident(&mut self) -> Result<String, SyntaxError> {
        match self.peek().clone() {
            Tok::Ident(s) => {
                self.advance();
                Ok(s)
            }
            _ => Err(self.error(&["identifier"])),
        }
    }

    fn keyword(&mut self, kw: &str) -> Result<(), SyntaxError> {
        match self.peek() {
            Tok::Ident(s) if s == kw => {
                self.advance();
                Ok(())
            }
            _ => Err(self.error(&[&format!("`{kw}`")])),
        }
    }

    fn int(&mut self) -> Result<i64, SyntaxError> {
        match *self.peek() {
            Tok::Int(v) => {
                self.advance();
                Ok(v)
            }
            _ => Err(self.error(&["integer"])),
        }
    }

    fn column(&mut self) -> Result<usize, SyntaxError> {
        let span = self.span();
        let v = self.int()?;
        usize::try_from(v).map_err(|_| SyntaxError {
            span,
            expected: vec!["non-negative integer".into()],
            found: format!("`{v}`"),
        })
    }

    /// Closes a statement and returns its span starting at `start`.
    fn finish(&mut self, start: SourceSpan) -> Result<SourceSpan, SyntaxError> {
        let end = self.expect(Tok::Dot, "`.`")?;
        let length = if end.line == start.line {
            end.column + end.length - start.column
        } else {
            start.length
        };
        Ok(SourceSpan { length, ..start })
    }

    fn program(&mut self) -> Result<Program, SyntaxError> {
        let mut p = Program::default();
        loop {
            match self.peek().clone() {
                Tok::Eof => return Ok(p),
                Tok::Ident(kw) if KEYWORDS.contains(&kw.as_str()) && *self.peek2() != Tok::LParen => {
                    self.declaration(&kw, &mut p)?
                }
                Tok::Ident(_) => {
                    let r = self.rule()?;
                    p.rules.push(r);
                }
                _ => return Err(self.error(&["declaration", "rule"])),
            }
        }
    }

    fn names(&mut self) -> Result<Vec<String>, SyntaxError> {
        self.expect(Tok::LParen, "`(`")?;
        let mut out = Vec::new();
        loop {
            match self.peek().clone() {
                Tok::Ident(s) | Tok::Var(s) => {
                    self.advance();
                    out.push(s);
                }
                _ => return Err(self.error(&["attribute name"])),
            }
            match self.peek() {
                Tok::Comma => {
                    self.advance();
                }
                Tok::RParen => {
                    self.advance();
                    return Ok(out);
                }
                _ => return Err(self.error(&["`,`", "`)`"])),
            }
        }
    }

    fn set(&mut self) -> Result<BTreeSet<usize>, SyntaxError> {
        self.expect(Tok::LBrace, "`{`")?;
        let mut out = BTreeSet::new();
        if *self.peek() == Tok::RBrace {
            self.advance();
            return Ok(out);
        }
        loop {
            out.insert(self.column()?);
            match self.peek() {
                Tok::Comma => {
                    self.advance();
                }
                Tok::RBrace => {
                    self.advance();
                    return Ok(out);
                }
                _ => return Err(self.error(&["`,`", "`}`"])),
            }
        }
    }

    fn declaration(&mut self, kw: &str, p: &mut Program) -> Result<(), SyntaxError> {
        let start = self.advance().span;
        match kw {
            "base" | "view" => {
                let name = self.ident()?;
                let attributes = self.names()?;
                let span = Some(self.finish(start)?);
                if kw == "base" {
                    p.base_decls.push(BaseDecl { name, attributes, span });
                } else {
                    p.view_decls.push(ViewDecl { name, attributes, span });
                }
            }
            "fd" => {
                let predicate = self.ident()?;
                self.expect(Tok::Colon, "`:`")?;
                let lhs = self.set()?;
                self.expect(Tok::Arrow, "`->`")?;
                let rhs = self.column()?;
                let span = Some(self.finish(start)?);
                p.fd_decls.push(FdDecl { predicate, lhs, rhs, span });
            }
            "func" => {
                let name = self.ident()?;
                let mut arity = None;
                let mut writes = Vec::new();
                let mut ftype = None;
                if *self.peek() == Tok::Slash {
                    self.advance();
                    arity = Some(self.column()?);
                }
                if matches!(self.peek(), Tok::Ident(s) if s == "writes") {
                    self.advance();
                    writes.push(self.ident()?);
                    while *self.peek() == Tok::Comma {
                        self.advance();
                        writes.push(self.ident()?);
                    }
                }
                if matches!(self.peek(), Tok::Ident(s) if s == "type") {
                    self.advance();
                    match self.peek().clone() {
                        Tok::Str(s) => {
                            self.advance();
                            ftype = Some(s);
                        }
                        _ => return Err(self.error(&["string"])),
                    }
                }
                if arity.is_none() && writes.is_empty() && ftype.is_none() {
                    return Err(self.error(&["`/`", "`writes`", "`type`"]));
                }
                let span = Some(self.finish(start)?);
                p.func_decls.push(FuncDecl {
                    name,
                    arity,
                    writes,
                    ftype,
                    span,
                });
            }
            "call" => {
                let view = self.ident()?;
                self.expect(Tok::Colon, "`:`")?;
                let inputs = self.set()?;
                self.expect(Tok::Arrow, "`->`")?;
                let output = self.column()?;
                self.keyword("using")?;
                let function = self.ident()?;
                let span = Some(self.finish(start)?);
                p.call_decls.push(CallDecl {
                    view,
                    inputs,
                    output,
                    function,
                    span,
                });
            }
            "dep" => {
                let from = self.ident()?;
                self.expect(Tok::Arrow, "`->`")?;
                let to = self.ident()?;
                let span = Some(self.finish(start)?);
                p.dep_decls.push(DepDecl { from, to, span });
            }
            _ => unreachable!("not a keyword: {kw}"),
        }
        Ok(())
    }

    fn atom(&mut self) -> Result<Atom, SyntaxError> {
        let predicate = self.ident()?;
        self.expect(Tok::LParen, "`(`")?;
        let mut args = Vec::new();
        loop {
            args.push(self.term()?);
            match self.peek() {
                Tok::Comma => {
                    self.advance();
                }
                Tok::RParen => {
                    self.advance();
                    break;
                }
                _ => return Err(self.error(&["`,`", "`)`"])),
            }
        }
        Ok(Atom {
            predicate,
            args,
            negated: false,
        })
    }

    fn term(&mut self) -> Result<Term, SyntaxError> {
        match self.peek().clone() {
            Tok::Var(v) => {
                self.advance();
                Ok(Term::Var(v))
            }
            Tok::Int(_) | Tok::Str(_) => Ok(Term::Const(self.constant()?)),
            _ => Err(self.error(&["variable", "constant"])),
        }
    }

    fn constant(&mut self) -> Result<Constant, SyntaxError> {
        match self.peek().clone() {
            Tok::Int(v) => {
                self.advance();
                Ok(Constant::Int(v))
            }
            Tok::Str(s) => {
                self.advance();
                Ok(Constant::Str(s))
            }
            _ => Err(self.error(&["constant"])),
        }
    }

    fn rule(&mut self) -> Result<Rule, SyntaxError> {
        let start = self.span();
        let head = self.atom()?;
        self.expect(Tok::Turnstile, "`:-`")?;
        let mut body = Vec::new();
        let mut conditions = Vec::new();
        loop {
            match self.peek().clone() {
                Tok::Ident(s) if s == "not" && *self.peek2() != Tok::LParen => {
                    self.advance();
                    body.push(self.atom()?.negate());
                }
                Tok::Ident(_) => body.push(self.atom()?),
                Tok::Var(left) => {
                    self.advance();
                    match self.peek().clone() {
                        Tok::Eq => {
                            self.advance();
                            match self.peek().clone() {
                                Tok::Var(right) => {
                                    self.advance();
                                    conditions.push(Condition::VarEq(left, right));
                                }
                                Tok::Int(_) | Tok::Str(_) => {
                                    conditions.push(Condition::ConstEq(left, self.constant()?));
                                }
                                _ => return Err(self.error(&["variable", "constant"])),
                            }
                        }
                        Tok::Cmp(op) => {
                            self.advance();
                            let right = self.term()?;
                            conditions.push(Condition::Opaque { left, op, right });
                        }
                        _ => return Err(self.error(&["`=`", "comparison"])),
                    }
                }
                _ => return Err(self.error(&["atom", "`not`", "condition"])),
            }
            match self.peek() {
                Tok::Comma => {
                    self.advance();
                }
                Tok::Dot => break,
                _ => return Err(self.error(&["`,`", "`.`"])),
            }
        }
        let span = Some(self.finish(start)?);
        Ok(Rule {
            head,
            body,
            conditions,
            span,
        })
    }
}

/// Parses a complete schema. Any deviation from the grammar is an error;
/// partial results are never returned.
pub fn parse_program(text: &str) -> Result<Program, SyntaxError> {
    let toks = Lexer::new(text).tokens()?;
    Parser { toks, pos: 0 }.program()
}

fn set_text(s: &BTreeSet<usize>) -> String {
    let items: Vec<String> = s.iter().map(|c| c.to_string()).collect();
    format!("{{{}}}", items.join(","))
}

/// Renders a program in canonical form: declarations grouped by kind, then
/// one rule per line, body atoms before conditions.
pub fn render_program(program: &Program) -> String {
    let mut out = String::new();
    for d in &program.base_decls {
        out += &format!("base {}({}).\n", d.name, d.attributes.join(","));
    }
    for d in &program.view_decls {
        out += &format!("view {}({}).\n", d.name, d.attributes.join(","));
    }
    for d in &program.fd_decls {
        out += &format!("fd {}: {} -> {}.\n", d.predicate, set_text(&d.lhs), d.rhs);
    }
    for d in &program.func_decls {
        out += &format!("func {}", d.name);
        if let Some(n) = d.arity {
            out += &format!("/{n}");
        }
        if !d.writes.is_empty() {
            out += &format!(" writes {}", d.writes.join(","));
        }
        if let Some(t) = &d.ftype {
            out += &format!(" type {}", Constant::Str(t.clone()));
        }
        out += ".\n";
    }
    for d in &program.call_decls {
        out += &format!(
            "call {}: {} -> {} using {}.\n",
            d.view,
            set_text(&d.inputs),
            d.output,
            d.function
        );
    }
    for d in &program.dep_decls {
        out += &format!("dep {} -> {}.\n", d.from, d.to);
    }
    for r in &program.rules {
        out += &r.to_string();
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn example_rule() {
        let p = parse_program("p(W,Z) :- s(W,X), t(X,Y,Z), Y=2.").unwrap();
        assert_eq!(p.rules.len(), 1);
        let r = &p.rules[0];
        assert_eq!(r.head, Atom::with_vars("p", &["W", "Z"]));
        assert_eq!(
            r.body,
            vec![Atom::with_vars("s", &["W", "X"]), Atom::with_vars("t", &["X", "Y", "Z"])]
        );
        assert_eq!(r.conditions, vec![Condition::const_eq("Y", 2)]);
        assert_eq!(r.span, Some(SourceSpan { line: 1, column: 1, length: 32 }));
        assert_eq!(render_program(&p), "p(W,Z) :- s(W,X), t(X,Y,Z), Y=2.\n");
    }

    #[test]
    fn empty_input() {
        assert!(parse_program("").unwrap().is_empty());
        assert!(parse_program("  % only a comment\n").unwrap().is_empty());
        assert_eq!(render_program(&Program::default()), "");
    }

    #[test]
    fn fd_declaration() {
        let p = parse_program("fd t: {1,2} -> 3.").unwrap();
        assert_eq!(p.fd_decls.len(), 1);
        let d = &p.fd_decls[0];
        assert_eq!(d.predicate, "t");
        assert_eq!(d.lhs, [1, 2].into_iter().collect());
        assert_eq!(d.rhs, 3);
        let p = parse_program("fd q: {} -> 1.").unwrap();
        assert!(p.fd_decls[0].lhs.is_empty());
    }

    #[test]
    fn all_declaration_kinds() {
        let src = "base b3(time_log).\nview v3(name,avg,time).\nfd b3: {} -> 1.\nfunc f1/0 writes b3 type 'auto_trans'.\ncall v3: {1} -> 2 using avg.\ndep t2 -> b3.\nv3(X,Y,Z) :- v2(X,W), not b3(X), Y=W, Z='now', X<>W.\n";
        let p = parse_program(src).unwrap();
        assert_eq!(p.func_decls[0].arity, Some(0));
        assert_eq!(p.func_decls[0].writes, vec![String::from("b3")]);
        assert_eq!(p.func_decls[0].ftype.as_deref(), Some("auto_trans"));
        assert_eq!(p.call_decls[0].function, "avg");
        assert_eq!(p.dep_decls[0].from, "t2");
        assert!(p.rules[0].body[1].negated);
        let text = render_program(&p);
        assert_eq!(text, src.replace("X<>W", "X!=W"));
        assert_eq!(parse_program(&text).unwrap().without_spans(), p.without_spans());
    }

    #[test]
    fn keywords_as_predicates() {
        let p = parse_program("fd(X) :- base(X), not(X), not not(X).").unwrap();
        assert_eq!(p.rules[0].head.predicate, "fd");
        assert_eq!(p.rules[0].body[1].predicate, "not");
        assert!(!p.rules[0].body[1].negated);
        assert!(p.rules[0].body[2].negated);
    }

    #[test]
    fn constants_and_escapes() {
        let p = parse_program("p(X,'it\\'s',-3) :- q(X).").unwrap();
        assert_eq!(p.rules[0].head.args[1], Term::Const(Constant::str("it's")));
        assert_eq!(p.rules[0].head.args[2], Term::Const(Constant::Int(-3)));
        let again = parse_program(&render_program(&p)).unwrap();
        assert_eq!(again.without_spans(), p.without_spans());
    }

    #[test]
    fn rejects_malformed_input() {
        for bad in [
            "p(X) :- q(X)",
            "p(X) q(X).",
            "p() :- q(X).",
            "fd t: {1,} -> 2.",
            "fd t: 1 -> 2.",
            "func f.",
            "P(X) :- q(X).",
            "p(X) :- q(X), 2 = X.",
            "p(X) :- q(X), X = y.",
            "base b().",
            "p(X) :- q(X), 'open.",
            "p(X) :- q(X) & r(X).",
        ] {
            assert!(parse_program(bad).is_err(), "accepted {bad:?}");
        }
    }

    #[test]
    fn error_positions() {
        let e = parse_program("base s(a).\np(X) :- s(X) r(X).").unwrap_err();
        assert_eq!((e.span.line, e.span.column), (2, 14));
        assert_eq!(e.expected, vec![String::from("`,`"), String::from("`.`")]);
    }
}
