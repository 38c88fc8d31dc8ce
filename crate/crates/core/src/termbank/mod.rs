//! Hash-consed terms, literals, clauses and problems.
//!
//! All terms live in a [`TermBank`]. Structurally equal terms are interned to
//! the same dense [`TermId`], so structural equality of terms is an integer
//! comparison and downstream consumers (embedding caches, duplicate checks)
//! can key on ids. The bank is append-only: nothing is ever removed, and ids
//! stay valid for the lifetime of the bank.

mod parser;

pub use parser::{parse_clause_body, parse_problem, ParseError};

use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::fmt;

/// What a symbol is. The kind is fixed at registration time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SymbolKind {
    Function,
    Predicate,
    Variable,
    Skolem,
}

/// Dense handle into the bank's symbol table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SymbolId(u32);

impl SymbolId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Clone)]
pub struct Symbol {
    pub name: String,
    pub kind: SymbolKind,
    pub arity: usize,
}

/// Dense handle to an interned term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TermId(u32);

impl TermId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

struct TermData {
    head: SymbolId,
    args: Vec<TermId>,
    /// Total number of symbol occurrences in the term tree.
    size: u64,
    /// Depth of the tree; a leaf has depth 1.
    depth: u32,
    has_vars: bool,
}

/// One literal of a clause: a possibly negated predicate atom.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Literal {
    pub positive: bool,
    pub atom: TermId,
}

impl Literal {
    pub fn new(positive: bool, atom: TermId) -> Self {
        Literal { positive, atom }
    }

    pub fn negated(self) -> Self {
        Literal { positive: !self.positive, atom: self.atom }
    }
}

/// Role of an input clause in the source problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Role {
    Axiom,
    Hypothesis,
    NegatedConjecture,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Role::Axiom => "axiom",
            Role::Hypothesis => "hypothesis",
            Role::NegatedConjecture => "negated_conjecture",
        };
        f.write_str(s)
    }
}

/// Inference rule that produced a derived clause.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Rule {
    Resolution,
    Factoring,
}

/// Where a clause came from: the input problem or an inference.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Origin {
    Input { role: Role },
    Derived { rule: Rule, parents: Vec<u64> },
}

/// A clause: a disjunction of literals with a run-unique id.
///
/// Variables are stored canonically renamed (`X0`, `X1`, ... in left-to-right
/// first-occurrence order), so two alpha-equivalent clauses built the same way
/// have identical literal vectors.
#[derive(Debug, Clone)]
pub struct Clause {
    pub id: u64,
    pub literals: Vec<Literal>,
    pub origin: Origin,
    /// Number of distinct variables (canonical `X0` .. `X{num_vars-1}`).
    pub num_vars: usize,
}

impl Clause {
    pub fn is_empty(&self) -> bool {
        self.literals.is_empty()
    }

    pub fn len(&self) -> usize {
        self.literals.len()
    }
}

/// Simple per-clause counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClauseStats {
    pub length: usize,
    pub positive: usize,
    pub negative: usize,
}

/// Length, positive-literal and negative-literal counts of a clause.
pub fn clause_stats(clause: &Clause) -> ClauseStats {
    let positive = clause.literals.iter().filter(|l| l.positive).count();
    ClauseStats {
        length: clause.literals.len(),
        positive,
        negative: clause.literals.len() - positive,
    }
}

/// A parsed problem: axioms plus the (already negated) conjecture clauses.
#[derive(Debug, Clone)]
pub struct Problem {
    pub name: String,
    pub axioms: Vec<Clause>,
    pub conjecture: Vec<Clause>,
}

impl Problem {
    pub fn clauses(&self) -> impl Iterator<Item = &Clause> {
        self.axioms.iter().chain(self.conjecture.iter())
    }
}

#[derive(Debug, Clone, thiserror::Error, PartialEq, Eq)]
pub enum TermError {
    #[error("symbol '{name}' used with arity {found} but registered with arity {expected}")]
    ArityConflict { name: String, expected: usize, found: usize },
    #[error("symbol '{name}' registered as {expected:?} but used as {found:?}")]
    KindConflict { name: String, expected: SymbolKind, found: SymbolKind },
    #[error("literal atom must have a predicate head, found {kind:?} '{name}'")]
    NotAPredicate { name: String, kind: SymbolKind },
}

/// Namespace a symbol is registered in. Functions and Skolem symbols share
/// the term namespace; predicates and variables each get their own.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum Space {
    Term,
    Predicate,
    Variable,
}

/// Append-only store of symbols, interned terms and a clause-id counter.
pub struct TermBank {
    symbols: Vec<Symbol>,
    symbol_ids: HashMap<(Space, String), SymbolId>,
    terms: Vec<TermData>,
    term_ids: HashMap<(SymbolId, Vec<TermId>), TermId>,
    next_clause_id: u64,
    skolem_prefixes: Vec<String>,
}

impl Default for TermBank {
    fn default() -> Self {
        Self::new()
    }
}

impl TermBank {
    pub fn new() -> Self {
        Self::with_skolem_prefixes(&["esk", "sk"])
    }

    /// A bank that treats term symbols starting with one of `prefixes` as
    /// Skolem symbols.
    pub fn with_skolem_prefixes(prefixes: &[&str]) -> Self {
        TermBank {
            symbols: Vec::new(),
            symbol_ids: HashMap::new(),
            terms: Vec::new(),
            term_ids: HashMap::new(),
            next_clause_id: 0,
            skolem_prefixes: prefixes.iter().map(|p| p.to_string()).collect(),
        }
    }

    fn register(&mut self, space: Space, name: &str, kind: SymbolKind, arity: usize) -> Result<SymbolId, TermError> {
        if let Some(&id) = self.symbol_ids.get(&(space, name.to_string())) {
            let sym = &self.symbols[id.index()];
            if sym.arity != arity {
                return Err(TermError::ArityConflict {
                    name: name.to_string(),
                    expected: sym.arity,
                    found: arity,
                });
            }
            return Ok(id);
        }
        let id = SymbolId(self.symbols.len() as u32);
        self.symbols.push(Symbol { name: name.to_string(), kind, arity });
        self.symbol_ids.insert((space, name.to_string()), id);
        Ok(id)
    }

    /// Register (or look up) a predicate symbol.
    pub fn predicate(&mut self, name: &str, arity: usize) -> Result<SymbolId, TermError> {
        self.register(Space::Predicate, name, SymbolKind::Predicate, arity)
    }

    /// Register (or look up) a function symbol. Names matching a configured
    /// Skolem prefix are recorded with [`SymbolKind::Skolem`].
    pub fn function(&mut self, name: &str, arity: usize) -> Result<SymbolId, TermError> {
        let kind = if self.skolem_prefixes.iter().any(|p| name.starts_with(p.as_str())) {
            SymbolKind::Skolem
        } else {
            SymbolKind::Function
        };
        self.register(Space::Term, name, kind, arity)
    }

    /// Register (or look up) a variable. Variables always have arity 0.
    pub fn variable(&mut self, name: &str) -> SymbolId {
        self.register(Space::Variable, name, SymbolKind::Variable, 0)
            .expect("variable arity is always 0")
    }

    /// The canonical variable `X{index}` used by clause normalisation.
    pub fn canonical_variable(&mut self, index: usize) -> SymbolId {
        self.variable(&format!("X{index}"))
    }

    pub fn symbol(&self, id: SymbolId) -> &Symbol {
        &self.symbols[id.index()]
    }

    pub fn symbol_count(&self) -> usize {
        self.symbols.len()
    }

    /// Intern `head(args...)`, returning the id shared by all structurally
    /// equal terms of this bank.
    pub fn intern(&mut self, head: SymbolId, args: &[TermId]) -> Result<TermId, TermError> {
        let sym = &self.symbols[head.index()];
        if sym.arity != args.len() {
            return Err(TermError::ArityConflict {
                name: sym.name.clone(),
                expected: sym.arity,
                found: args.len(),
            });
        }
        let key = (head, args.to_vec());
        if let Some(&id) = self.term_ids.get(&key) {
            return Ok(id);
        }
        let mut size = 1u64;
        let mut depth = 1u32;
        let mut has_vars = sym.kind == SymbolKind::Variable;
        for &a in args {
            let data = &self.terms[a.index()];
            size += data.size;
            depth = depth.max(1 + data.depth);
            has_vars |= data.has_vars;
        }
        let id = TermId(self.terms.len() as u32);
        self.terms.push(TermData { head, args: args.to_vec(), size, depth, has_vars });
        self.term_ids.insert(key, id);
        Ok(id)
    }

    /// Intern a variable occurrence.
    pub fn var_term(&mut self, var: SymbolId) -> TermId {
        debug_assert_eq!(self.symbols[var.index()].kind, SymbolKind::Variable);
        self.intern(var, &[]).expect("variables have arity 0")
    }

    pub fn head(&self, t: TermId) -> SymbolId {
        self.terms[t.index()].head
    }

    pub fn args(&self, t: TermId) -> &[TermId] {
        &self.terms[t.index()].args
    }

    /// Total number of symbol occurrences in the term tree.
    pub fn term_size(&self, t: TermId) -> u64 {
        self.terms[t.index()].size
    }

    /// Depth of the term tree; leaves have depth 1.
    pub fn term_depth(&self, t: TermId) -> u32 {
        self.terms[t.index()].depth
    }

    pub fn has_vars(&self, t: TermId) -> bool {
        self.terms[t.index()].has_vars
    }

    pub fn is_variable(&self, t: TermId) -> bool {
        self.symbols[self.terms[t.index()].head.index()].kind == SymbolKind::Variable
    }

    pub fn term_count(&self) -> usize {
        self.terms.len()
    }

    /// Build a clause from literals. Variables are renamed to the canonical
    /// `X0, X1, ...` scheme in left-to-right first-occurrence order and the
    /// clause receives the next monotonically increasing id.
    pub fn new_clause(&mut self, literals: Vec<Literal>, origin: Origin) -> Clause {
        let (literals, num_vars) = self.canonicalize(literals);
        let id = self.next_clause_id;
        self.next_clause_id += 1;
        Clause { id, literals, origin, num_vars }
    }

    fn canonicalize(&mut self, literals: Vec<Literal>) -> (Vec<Literal>, usize) {
        let mut mapping: HashMap<SymbolId, SymbolId> = HashMap::new();
        let mut order: Vec<SymbolId> = Vec::new();
        for lit in &literals {
            self.collect_vars(lit.atom, &mut mapping, &mut order);
        }
        let mut identity = true;
        mapping.clear();
        for (i, &v) in order.iter().enumerate() {
            let canon = self.canonical_variable(i);
            identity &= canon == v;
            mapping.insert(v, canon);
        }
        if identity {
            return (literals, order.len());
        }
        let mut memo: HashMap<TermId, TermId> = HashMap::new();
        let renamed = literals
            .into_iter()
            .map(|lit| Literal { positive: lit.positive, atom: self.rename(lit.atom, &mapping, &mut memo) })
            .collect();
        (renamed, order.len())
    }

    fn collect_vars(&self, t: TermId, seen: &mut HashMap<SymbolId, SymbolId>, order: &mut Vec<SymbolId>) {
        if !self.terms[t.index()].has_vars {
            return;
        }
        let head = self.terms[t.index()].head;
        if self.symbols[head.index()].kind == SymbolKind::Variable {
            if seen.insert(head, head).is_none() {
                order.push(head);
            }
            return;
        }
        for i in 0..self.terms[t.index()].args.len() {
            let a = self.terms[t.index()].args[i];
            self.collect_vars(a, seen, order);
        }
    }

    fn rename(&mut self, t: TermId, mapping: &HashMap<SymbolId, SymbolId>, memo: &mut HashMap<TermId, TermId>) -> TermId {
        if !self.terms[t.index()].has_vars {
            return t;
        }
        if let Some(&r) = memo.get(&t) {
            return r;
        }
        let head = self.terms[t.index()].head;
        let result = if self.symbols[head.index()].kind == SymbolKind::Variable {
            let target = *mapping.get(&head).unwrap_or(&head);
            self.var_term(target)
        } else {
            let args: Vec<TermId> = self.terms[t.index()].args.clone();
            let new_args: Vec<TermId> = args.iter().map(|&a| self.rename(a, mapping, memo)).collect();
            self.intern(head, &new_args).expect("arity preserved by renaming")
        };
        memo.insert(t, result);
        result
    }

    pub fn print_term(&self, t: TermId) -> String {
        let mut out = String::new();
        self.write_term(t, &mut out);
        out
    }

    fn write_term(&self, t: TermId, out: &mut String) {
        let data = &self.terms[t.index()];
        out.push_str(&self.symbols[data.head.index()].name);
        if !data.args.is_empty() {
            out.push('(');
            for (i, &a) in data.args.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                self.write_term(a, out);
            }
            out.push(')');
        }
    }

    pub fn print_literal(&self, lit: &Literal) -> String {
        let data = &self.terms[lit.atom.index()];
        let head = &self.symbols[data.head.index()];
        if head.name == "=" && data.args.len() == 2 {
            let op = if lit.positive { "=" } else { "!=" };
            return format!("{} {} {}", self.print_term(data.args[0]), op, self.print_term(data.args[1]));
        }
        if lit.positive {
            self.print_term(lit.atom)
        } else {
            format!("~{}", self.print_term(lit.atom))
        }
    }

    /// Canonical text of a clause body: literals joined by `|`, or `$false`
    /// for the empty clause.
    pub fn print_clause(&self, clause: &Clause) -> String {
        if clause.literals.is_empty() {
            return "$false".to_string();
        }
        clause
            .literals
            .iter()
            .map(|l| self.print_literal(l))
            .collect::<Vec<_>>()
            .join(" | ")
    }

    /// Full problem listing in the input format; clause names are synthesised
    /// from roles and positions.
    pub fn print_problem(&self, problem: &Problem) -> String {
        let mut out = String::new();
        for (i, c) in problem.axioms.iter().enumerate() {
            let role = match c.origin {
                Origin::Input { role } => role,
                _ => Role::Axiom,
            };
            out.push_str(&format!("cnf(a{i}, {role}, {}).\n", self.print_clause(c)));
        }
        for (i, c) in problem.conjecture.iter().enumerate() {
            out.push_str(&format!("cnf(g{i}, negated_conjecture, {}).\n", self.print_clause(c)));
        }
        out
    }
}
