//! Surface syntax: facts `pred(c1, c2).`, rules `head :- body1, body2.`,
//! queries `?- goal1, goal2.`, `%` line comments. Constants are lowercase
//! tokens or quoted strings; variables start with an uppercase letter or
//! underscore, `_` alone being a wildcard.

use super::{Atom, BodyAtom, DatalogProgram, Fact, LogicError, Rule, Term};

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Ident(String),
    Var(String),
    Quoted(String),
    LParen,
    RParen,
    Comma,
    Dot,
    Implies, // :-
    Eq,
    QueryMark, // ?-
}

struct Lexer<'a> {
    src: &'a [u8],
    pos: usize,
    line: usize,
    column: usize,
}

type Spanned = (Token, usize, usize);

impl<'a> Lexer<'a> {
    fn new(src: &'a str) -> Self {
        Lexer {
            src: src.as_bytes(),
            pos: 0,
            line: 1,
            column: 1,
        }
    }

    fn error(&self, message: impl Into<String>) -> LogicError {
        LogicError::Syntax {
            line: self.line,
            column: self.column,
            message: message.into(),
        }
    }

    fn bump(&mut self) -> Option<u8> {
        let c = self.src.get(self.pos).copied()?;
        self.pos += 1;
        if c == b'\n' {
            self.line += 1;
            self.column = 1;
        } else {
            self.column += 1;
        }
        Some(c)
    }

    fn peek(&self) -> Option<u8> {
        self.src.get(self.pos).copied()
    }

    fn tokenize(mut self) -> Result<Vec<Spanned>, LogicError> {
        let mut out = Vec::new();
        while let Some(c) = self.peek() {
            let (line, column) = (self.line, self.column);
            match c {
                b' ' | b'\t' | b'\r' | b'\n' => {
                    self.bump();
                }
                b'%' => {
                    while let Some(c) = self.peek() {
                        if c == b'\n' {
                            break;
                        }
                        self.bump();
                    }
                }
                b'(' => {
                    self.bump();
                    out.push((Token::LParen, line, column));
                }
                b')' => {
                    self.bump();
                    out.push((Token::RParen, line, column));
                }
                b',' => {
                    self.bump();
                    out.push((Token::Comma, line, column));
                }
                b'.' => {
                    self.bump();
                    out.push((Token::Dot, line, column));
                }
                b'=' => {
                    self.bump();
                    out.push((Token::Eq, line, column));
                }
                b':' => {
                    self.bump();
                    if self.peek() == Some(b'-') {
                        self.bump();
                        out.push((Token::Implies, line, column));
                    } else {
                        return Err(self.error("expected `:-`"));
                    }
                }
                b'?' => {
                    self.bump();
                    if self.peek() == Some(b'-') {
                        self.bump();
                        out.push((Token::QueryMark, line, column));
                    } else {
                        return Err(self.error("expected `?-`"));
                    }
                }
                b'"' => {
                    self.bump();
                    let mut text = String::new();
                    loop {
                        match self.bump() {
                            None => return Err(self.error("unterminated string")),
                            Some(b'"') => break,
                            Some(b'\\') => match self.bump() {
                                Some(b'"') => text.push('"'),
                                Some(b'\\') => text.push('\\'),
                                Some(b'n') => text.push('\n'),
                                _ => return Err(self.error("bad escape in string")),
                            },
                            Some(c) => text.push(c as char),
                        }
                    }
                    out.push((Token::Quoted(text), line, column));
                }
                c if c.is_ascii_alphabetic() || c == b'_' => {
                    let start = self.pos;
                    while let Some(c) = self.peek() {
                        if c.is_ascii_alphanumeric() || c == b'_' {
                            self.bump();
                        } else {
                            break;
                        }
                    }
                    let text = std::str::from_utf8(&self.src[start..self.pos])
                        .expect("ascii idents")
                        .to_string();
                    let token = if c.is_ascii_uppercase() || c == b'_' {
                        Token::Var(text)
                    } else {
                        Token::Ident(text)
                    };
                    out.push((token, line, column));
                }
                other => {
                    return Err(self.error(format!("unexpected character `{}`", other as char)))
                }
            }
        }
        Ok(out)
    }
}

struct Parser {
    tokens: Vec<Spanned>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos).map(|(t, _, _)| t)
    }

    fn location(&self) -> (usize, usize) {
        self.tokens
            .get(self.pos)
            .or_else(|| self.tokens.last())
            .map(|(_, l, c)| (*l, *c))
            .unwrap_or((1, 1))
    }

    fn error(&self, message: impl Into<String>) -> LogicError {
        let (line, column) = self.location();
        LogicError::Syntax {
            line,
            column,
            message: message.into(),
        }
    }

    fn bump(&mut self) -> Option<Token> {
        let t = self.tokens.get(self.pos).map(|(t, _, _)| t.clone());
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn expect(&mut self, want: Token, what: &str) -> Result<(), LogicError> {
        match self.bump() {
            Some(t) if t == want => Ok(()),
            _ => Err(self.error(format!("expected {what}"))),
        }
    }

    fn term(&mut self) -> Result<Term, LogicError> {
        match self.bump() {
            Some(Token::Ident(s)) => Ok(Term::Constant(s)),
            Some(Token::Quoted(s)) => Ok(Term::Constant(s)),
            Some(Token::Var(s)) => Ok(Term::Variable(s)),
            _ => Err(self.error("expected a term")),
        }
    }

    /// An atom `pred(args)` / bare `pred`, or an equality `t = t`.
    fn body_atom(&mut self) -> Result<BodyAtom, LogicError> {
        // Equality starts with a term followed by `=`.
        match self.peek() {
            Some(Token::Var(_)) | Some(Token::Quoted(_)) => {
                let left = self.term()?;
                self.expect(Token::Eq, "`=`")?;
                let right = self.term()?;
                return Ok(BodyAtom::Eq(left, right));
            }
            _ => {}
        }
        let name = match self.bump() {
            Some(Token::Ident(s)) => s,
            _ => return Err(self.error("expected a predicate name")),
        };
        if self.peek() == Some(&Token::Eq) {
            self.bump();
            let right = self.term()?;
            return Ok(BodyAtom::Eq(Term::Constant(name), right));
        }
        let mut args = Vec::new();
        if self.peek() == Some(&Token::LParen) {
            self.bump();
            loop {
                args.push(self.term()?);
                match self.bump() {
                    Some(Token::Comma) => continue,
                    Some(Token::RParen) => break,
                    _ => return Err(self.error("expected `,` or `)`")),
                }
            }
        }
        Ok(BodyAtom::Pred(Atom::new(name, args)))
    }

    fn head_atom(&mut self) -> Result<Atom, LogicError> {
        match self.body_atom()? {
            BodyAtom::Pred(a) => Ok(a),
            BodyAtom::Eq(_, _) => Err(self.error("equality cannot head a clause")),
        }
    }

    fn body(&mut self) -> Result<Vec<BodyAtom>, LogicError> {
        let mut atoms = vec![self.body_atom()?];
        while self.peek() == Some(&Token::Comma) {
            self.bump();
            atoms.push(self.body_atom()?);
        }
        self.expect(Token::Dot, "`.`")?;
        Ok(atoms)
    }
}

fn ground_fact(atom: Atom) -> Result<Fact, LogicError> {
    let mut args = Vec::with_capacity(atom.args.len());
    for t in &atom.args {
        match t {
            Term::Constant(c) => args.push(c.clone()),
            Term::Variable(_) => return Err(LogicError::NonGroundFact(atom.to_string())),
        }
    }
    Ok(Fact::new(atom.predicate, args))
}

/// Parses a program (facts and rules) and validates it against the fragment.
pub fn parse_program(source_text: &str) -> Result<DatalogProgram, LogicError> {
    let tokens = Lexer::new(source_text).tokenize()?;
    let mut parser = Parser { tokens, pos: 0 };
    let mut facts = Vec::new();
    let mut rules = Vec::new();
    while parser.peek().is_some() {
        if parser.peek() == Some(&Token::QueryMark) {
            return Err(parser.error("queries are not part of a program; use parse_query"));
        }
        let head = parser.head_atom()?;
        match parser.bump() {
            Some(Token::Dot) => facts.push(ground_fact(head)?),
            Some(Token::Implies) => {
                let body = parser.body()?;
                rules.push(Rule { head, body });
            }
            _ => return Err(parser.error("expected `.` or `:-`")),
        }
    }
    DatalogProgram::new(facts, rules)
}

/// Parses a query: `?- goal1, goal2.` (the `?-` prefix is optional).
pub fn parse_query(source_text: &str) -> Result<Vec<BodyAtom>, LogicError> {
    let tokens = Lexer::new(source_text).tokenize()?;
    let mut parser = Parser { tokens, pos: 0 };
    if parser.peek() == Some(&Token::QueryMark) {
        parser.bump();
    }
    let goals = parser.body()?;
    if parser.peek().is_some() {
        return Err(parser.error("trailing input after query"));
    }
    Ok(goals)
}
