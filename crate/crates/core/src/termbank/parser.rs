//! Parser for the clause normal form input format.
//!
//! The accepted grammar is a strict subset of TPTP CNF:
//!
//! ```text
//! file    := { form }
//! form    := "cnf(" name "," role "," clause ")."
//! role    := "axiom" | "hypothesis" | "negated_conjecture"
//! clause  := "$false" | literal { "|" literal }
//! literal := [ "~" ] atom
//! atom    := term [ ("=" | "!=") term ]
//! term    := ident [ "(" term { "," term } ")" ] | variable
//! ```
//!
//! Identifiers start with a lowercase letter; variables start with an
//! uppercase letter. `%` starts a comment that runs to the end of the line.
//! `=` is an ordinary binary predicate with infix syntax; `a != b` is
//! shorthand for the negated equality literal.

use super::{Clause, Literal, Origin, Problem, Role, SymbolId, TermBank, TermError, TermId};

#[derive(Debug, Clone, thiserror::Error, PartialEq, Eq)]
pub enum ParseError {
    #[error("{line}:{col}: unexpected character '{found}'")]
    UnexpectedChar { line: u32, col: u32, found: char },
    #[error("{line}:{col}: expected {expected}, found {found}")]
    Unexpected { line: u32, col: u32, expected: String, found: String },
    #[error("{line}:{col}: unknown role '{role}' (expected axiom, hypothesis or negated_conjecture)")]
    UnknownRole { line: u32, col: u32, role: String },
    #[error("{line}:{col}: variable '{name}' cannot take arguments")]
    VariableWithArgs { line: u32, col: u32, name: String },
    #[error("{line}:{col}: {source}")]
    Term {
        line: u32,
        col: u32,
        #[source]
        source: TermError,
    },
    #[error("{line}:{col}: $false must be the entire clause")]
    FalseNotAlone { line: u32, col: u32 },
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Ident(String),
    Var(String),
    LParen,
    RParen,
    Comma,
    Pipe,
    Tilde,
    Eq,
    Neq,
    Dot,
    False,
    Eof,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("'{s}'"),
            Tok::Var(s) => format!("variable '{s}'"),
            Tok::LParen => "'('".into(),
            Tok::RParen => "')'".into(),
            Tok::Comma => "','".into(),
            Tok::Pipe => "'|'".into(),
            Tok::Tilde => "'~'".into(),
            Tok::Eq => "'='".into(),
            Tok::Neq => "'!='".into(),
            Tok::Dot => "'.'".into(),
            Tok::False => "'$false'".into(),
            Tok::Eof => "end of input".into(),
        }
    }
}

struct Lexer<'a> {
    src: &'a [u8],
    pos: usize,
    line: u32,
    col: u32,
}

struct Spanned {
    tok: Tok,
    line: u32,
    col: u32,
}

impl<'a> Lexer<'a> {
    fn new(src: &'a str) -> Self {
        Lexer { src: src.as_bytes(), pos: 0, line: 1, col: 1 }
    }

    fn bump(&mut self) -> Option<u8> {
        let b = *self.src.get(self.pos)?;
        self.pos += 1;
        if b == b'\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(b)
    }

    fn peek(&self) -> Option<u8> {
        self.src.get(self.pos).copied()
    }

    fn skip_trivia(&mut self) {
        loop {
            match self.peek() {
                Some(b) if (b as char).is_ascii_whitespace() => {
                    self.bump();
                }
                Some(b'%') => {
                    while let Some(b) = self.peek() {
                        if b == b'\n' {
                            break;
                        }
                        self.bump();
                    }
                }
                _ => break,
            }
        }
    }

    fn next_token(&mut self) -> Result<Spanned, ParseError> {
        self.skip_trivia();
        let (line, col) = (self.line, self.col);
        let Some(b) = self.peek() else {
            return Ok(Spanned { tok: Tok::Eof, line, col });
        };
        let tok = match b {
            b'(' => {
                self.bump();
                Tok::LParen
            }
            b')' => {
                self.bump();
                Tok::RParen
            }
            b',' => {
                self.bump();
                Tok::Comma
            }
            b'|' => {
                self.bump();
                Tok::Pipe
            }
            b'~' => {
                self.bump();
                Tok::Tilde
            }
            b'=' => {
                self.bump();
                Tok::Eq
            }
            b'.' => {
                self.bump();
                Tok::Dot
            }
            b'!' => {
                self.bump();
                if self.peek() == Some(b'=') {
                    self.bump();
                    Tok::Neq
                } else {
                    return Err(ParseError::UnexpectedChar { line, col, found: '!' });
                }
            }
            b'$' => {
                self.bump();
                let word = self.take_word();
                if word == "false" {
                    Tok::False
                } else {
                    return Err(ParseError::UnexpectedChar { line, col, found: '$' });
                }
            }
            b if (b as char).is_ascii_lowercase() => Tok::Ident(self.take_word()),
            b if (b as char).is_ascii_uppercase() => Tok::Var(self.take_word()),
            other => {
                return Err(ParseError::UnexpectedChar { line, col, found: other as char });
            }
        };
        Ok(Spanned { tok, line, col })
    }

    fn take_word(&mut self) -> String {
        let start = self.pos;
        while let Some(b) = self.peek() {
            if (b as char).is_ascii_alphanumeric() || b == b'_' {
                self.bump();
            } else {
                break;
            }
        }
        String::from_utf8_lossy(&self.src[start..self.pos]).into_owned()
    }
}

/// Term as parsed, before predicate/function namespaces are decided.
struct RawTerm {
    name: String,
    is_var: bool,
    args: Vec<RawTerm>,
    line: u32,
    col: u32,
}

struct RawLiteral {
    positive: bool,
    /// Either a plain atom or the two sides of an equality.
    body: RawAtom,
}

enum RawAtom {
    Plain(RawTerm),
    Equality(RawTerm, RawTerm),
}

struct Parser<'a> {
    lexer: Lexer<'a>,
    lookahead: Spanned,
}

impl<'a> Parser<'a> {
    fn new(src: &'a str) -> Result<Self, ParseError> {
        let mut lexer = Lexer::new(src);
        let lookahead = lexer.next_token()?;
        Ok(Parser { lexer, lookahead })
    }

    fn advance(&mut self) -> Result<Spanned, ParseError> {
        let next = self.lexer.next_token()?;
        Ok(std::mem::replace(&mut self.lookahead, next))
    }

    fn expect(&mut self, want: Tok) -> Result<Spanned, ParseError> {
        if self.lookahead.tok == want {
            self.advance()
        } else {
            Err(self.unexpected(&want.describe()))
        }
    }

    fn unexpected(&self, expected: &str) -> ParseError {
        ParseError::Unexpected {
            line: self.lookahead.line,
            col: self.lookahead.col,
            expected: expected.to_string(),
            found: self.lookahead.tok.describe(),
        }
    }

    fn at_eof(&self) -> bool {
        self.lookahead.tok == Tok::Eof
    }

    fn parse_form(&mut self) -> Result<(String, Role, Vec<RawLiteral>), ParseError> {
        let ident = self.advance()?;
        match &ident.tok {
            Tok::Ident(s) if s == "cnf" => {}
            other => {
                return Err(ParseError::Unexpected {
                    line: ident.line,
                    col: ident.col,
                    expected: "'cnf'".into(),
                    found: other.describe(),
                })
            }
        }
        self.expect(Tok::LParen)?;
        let name = match self.advance()? {
            Spanned { tok: Tok::Ident(s), .. } => s,
            Spanned { tok: Tok::Var(s), .. } => s,
            other => {
                return Err(ParseError::Unexpected {
                    line: other.line,
                    col: other.col,
                    expected: "clause name".into(),
                    found: other.tok.describe(),
                })
            }
        };
        self.expect(Tok::Comma)?;
        let role_tok = self.advance()?;
        let role = match &role_tok.tok {
            Tok::Ident(s) => match s.as_str() {
                "axiom" => Role::Axiom,
                "hypothesis" => Role::Hypothesis,
                "negated_conjecture" => Role::NegatedConjecture,
                other => {
                    return Err(ParseError::UnknownRole {
                        line: role_tok.line,
                        col: role_tok.col,
                        role: other.to_string(),
                    })
                }
            },
            other => {
                return Err(ParseError::Unexpected {
                    line: role_tok.line,
                    col: role_tok.col,
                    expected: "role".into(),
                    found: other.describe(),
                })
            }
        };
        self.expect(Tok::Comma)?;
        let literals = self.parse_clause_body()?;
        self.expect(Tok::RParen)?;
        self.expect(Tok::Dot)?;
        Ok((name, role, literals))
    }

    fn parse_clause_body(&mut self) -> Result<Vec<RawLiteral>, ParseError> {
        if self.lookahead.tok == Tok::False {
            let span = self.advance()?;
            if self.lookahead.tok == Tok::Pipe {
                return Err(ParseError::FalseNotAlone { line: span.line, col: span.col });
            }
            return Ok(Vec::new());
        }
        let mut literals = vec![self.parse_literal()?];
        while self.lookahead.tok == Tok::Pipe {
            self.advance()?;
            literals.push(self.parse_literal()?);
        }
        Ok(literals)
    }

    fn parse_literal(&mut self) -> Result<RawLiteral, ParseError> {
        let mut positive = true;
        if self.lookahead.tok == Tok::Tilde {
            self.advance()?;
            positive = false;
        }
        let left = self.parse_term()?;
        match self.lookahead.tok {
            Tok::Eq => {
                self.advance()?;
                let right = self.parse_term()?;
                Ok(RawLiteral { positive, body: RawAtom::Equality(left, right) })
            }
            Tok::Neq => {
                self.advance()?;
                let right = self.parse_term()?;
                Ok(RawLiteral { positive: !positive, body: RawAtom::Equality(left, right) })
            }
            _ => Ok(RawLiteral { positive, body: RawAtom::Plain(left) }),
        }
    }

    fn parse_term(&mut self) -> Result<RawTerm, ParseError> {
        let head = self.advance()?;
        let (name, is_var) = match head.tok {
            Tok::Ident(s) => (s, false),
            Tok::Var(s) => (s, true),
            other => {
                return Err(ParseError::Unexpected {
                    line: head.line,
                    col: head.col,
                    expected: "term".into(),
                    found: other.describe(),
                })
            }
        };
        let mut args = Vec::new();
        if self.lookahead.tok == Tok::LParen {
            if is_var {
                return Err(ParseError::VariableWithArgs { line: head.line, col: head.col, name });
            }
            self.advance()?;
            args.push(self.parse_term()?);
            while self.lookahead.tok == Tok::Comma {
                self.advance()?;
                args.push(self.parse_term()?);
            }
            self.expect(Tok::RParen)?;
        }
        Ok(RawTerm { name, is_var, args, line: head.line, col: head.col })
    }
}

fn lower_term(raw: &RawTerm, bank: &mut TermBank) -> Result<TermId, ParseError> {
    if raw.is_var {
        let v = bank.variable(&raw.name);
        return Ok(bank.var_term(v));
    }
    let head = register(raw, bank, false)?;
    let args = lower_args(raw, bank)?;
    bank.intern(head, &args).map_err(|source| ParseError::Term { line: raw.line, col: raw.col, source })
}

fn lower_args(raw: &RawTerm, bank: &mut TermBank) -> Result<Vec<TermId>, ParseError> {
    raw.args.iter().map(|a| lower_term(a, bank)).collect()
}

fn register(raw: &RawTerm, bank: &mut TermBank, as_predicate: bool) -> Result<SymbolId, ParseError> {
    let result = if as_predicate {
        bank.predicate(&raw.name, raw.args.len())
    } else {
        bank.function(&raw.name, raw.args.len())
    };
    result.map_err(|source| ParseError::Term { line: raw.line, col: raw.col, source })
}

fn lower_literal(raw: &RawLiteral, bank: &mut TermBank) -> Result<Literal, ParseError> {
    match &raw.body {
        RawAtom::Plain(atom) => {
            let head = register(atom, bank, true)?;
            let args = lower_args(atom, bank)?;
            let t = bank
                .intern(head, &args)
                .map_err(|source| ParseError::Term { line: atom.line, col: atom.col, source })?;
            Ok(Literal::new(raw.positive, t))
        }
        RawAtom::Equality(l, r) => {
            let eq = bank.predicate("=", 2).expect("equality arity is fixed");
            let lt = lower_term(l, bank)?;
            let rt = lower_term(r, bank)?;
            let t = bank
                .intern(eq, &[lt, rt])
                .map_err(|source| ParseError::Term { line: l.line, col: l.col, source })?;
            Ok(Literal::new(raw.positive, t))
        }
    }
}

/// Parse a whole problem file. Clauses keep their source order; conjecture
/// clauses are the ones with role `negated_conjecture`.
pub fn parse_problem(src: &str, name: &str, bank: &mut TermBank) -> Result<Problem, ParseError> {
    let mut parser = Parser::new(src)?;
    let mut axioms = Vec::new();
    let mut conjecture = Vec::new();
    while !parser.at_eof() {
        let (_name, role, raw_literals) = parser.parse_form()?;
        let mut literals = Vec::with_capacity(raw_literals.len());
        for raw in &raw_literals {
            literals.push(lower_literal(raw, bank)?);
        }
        let clause = bank.new_clause(literals, Origin::Input { role });
        match role {
            Role::NegatedConjecture => conjecture.push(clause),
            _ => axioms.push(clause),
        }
    }
    Ok(Problem { name: name.to_string(), axioms, conjecture })
}

/// Parse a bare clause body (`p(X) | ~q(X)` or `$false`) as written by
/// [`TermBank::print_clause`].
pub fn parse_clause_body(src: &str, role: Role, bank: &mut TermBank) -> Result<Clause, ParseError> {
    let mut parser = Parser::new(src)?;
    let raw_literals = parser.parse_clause_body()?;
    if !parser.at_eof() {
        return Err(parser.unexpected("end of clause"));
    }
    let mut literals = Vec::with_capacity(raw_literals.len());
    for raw in &raw_literals {
        literals.push(lower_literal(raw, bank)?);
    }
    Ok(bank.new_clause(literals, Origin::Input { role }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::termbank::clause_stats;

    #[test]
    fn parses_roles_and_splits_conjecture() {
        let src = "\
% a tiny problem
cnf(ax1, axiom, p(a)).
cnf(ax2, hypothesis, ~p(X) | q(f(X))).
cnf(goal, negated_conjecture, ~q(f(a))).
";
        let mut bank = TermBank::new();
        let problem = parse_problem(src, "tiny", &mut bank).unwrap();
        assert_eq!(problem.axioms.len(), 2);
        assert_eq!(problem.conjecture.len(), 1);
        assert_eq!(bank.print_clause(&problem.axioms[1]), "~p(X0) | q(f(X0))");
    }

    #[test]
    fn print_parse_round_trip() {
        let src = "cnf(c, axiom, ~p(Y, g(Y)) | r(Z) | p(c1, Z)).";
        let mut bank = TermBank::new();
        let problem = parse_problem(src, "t", &mut bank).unwrap();
        let printed = bank.print_clause(&problem.axioms[0]);
        let reparsed = parse_clause_body(&printed, Role::Axiom, &mut bank).unwrap();
        assert_eq!(reparsed.literals, problem.axioms[0].literals);
    }

    #[test]
    fn equality_round_trip() {
        let mut bank = TermBank::new();
        let clause = parse_clause_body("f(X) = X | a != b", Role::Axiom, &mut bank).unwrap();
        assert_eq!(bank.print_clause(&clause), "f(X0) = X0 | a != b");
        let stats = clause_stats(&clause);
        assert_eq!((stats.positive, stats.negative), (1, 1));
    }

    #[test]
    fn negated_equality_forms_agree() {
        let mut bank = TermBank::new();
        let c1 = parse_clause_body("a != b", Role::Axiom, &mut bank).unwrap();
        let c2 = parse_clause_body("~ a = b", Role::Axiom, &mut bank).unwrap();
        assert_eq!(c1.literals, c2.literals);
    }

    #[test]
    fn false_parses_to_empty_clause() {
        let mut bank = TermBank::new();
        let clause = parse_clause_body("$false", Role::NegatedConjecture, &mut bank).unwrap();
        assert!(clause.is_empty());
    }

    #[test]
    fn error_carries_position() {
        let mut bank = TermBank::new();
        let err = parse_problem("cnf(c, axiom,\n  p(a) & q).", "t", &mut bank).unwrap_err();
        match err {
            ParseError::UnexpectedChar { line, col, found } => {
                assert_eq!((line, col, found), (2, 8, '&'));
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn arity_conflict_in_source() {
        let mut bank = TermBank::new();
        let err = parse_problem("cnf(c1, axiom, p(f(a,b))).\ncnf(c2, axiom, p(f(a))).", "t", &mut bank).unwrap_err();
        match err {
            ParseError::Term { line, source: TermError::ArityConflict { name, expected, found }, .. } => {
                assert_eq!(line, 2);
                assert_eq!(name, "f");
                assert_eq!((expected, found), (2, 1));
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn unknown_role_rejected() {
        let mut bank = TermBank::new();
        let err = parse_problem("cnf(c, conjecture, p).", "t", &mut bank).unwrap_err();
        assert!(matches!(err, ParseError::UnknownRole { .. }));
    }

    #[test]
    fn variable_cannot_take_args() {
        let mut bank = TermBank::new();
        let err = parse_clause_body("p(X(a))", Role::Axiom, &mut bank).unwrap_err();
        assert!(matches!(err, ParseError::VariableWithArgs { .. }));
    }

    #[test]
    fn predicate_and_function_namespaces_are_separate() {
        let mut bank = TermBank::new();
        let clause = parse_clause_body("p(p(a))", Role::Axiom, &mut bank).unwrap();
        let outer = bank.head(clause.literals[0].atom);
        let inner = bank.head(bank.args(clause.literals[0].atom)[0]);
        assert_ne!(outer, inner);
        assert_eq!(bank.symbol(outer).kind, super::super::SymbolKind::Predicate);
        assert_eq!(bank.symbol(inner).kind, super::super::SymbolKind::Function);
    }
}
