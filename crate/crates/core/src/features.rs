//! Handcrafted clause features: term-walk, symbol-statistic and length
//! descriptors, plus the indexed/hashed feature spaces that turn them into
//! sparse numeric vectors.
//!
//! A clause is described by
//! * **vertical walks**: top-down symbol paths of length 3 starting at the
//!   polarity-tagged predicate, padded with a blank token when the term is
//!   shallower;
//! * **horizontal cuts**: at every applied symbol `f(s_1,..,s_n)`, the tuple
//!   of `f` with the top symbols of its arguments;
//! * **symbol statistics**: occurrence count and maximal depth per symbol
//!   (the root predicate sits at depth 1);
//! * **length statistics**: literal count, positive count, negative count.
//!
//! Variables are collapsed to one token `*`, Skolem symbols to one token per
//! arity (`*sk2`, ...). A final vector has two halves of equal size: the
//! clause's own features and the features of the problem's conjecture.

use crate::hashing::{sdbm, HashConfig};
use crate::prover::TrainingExample;
use crate::termbank::{Clause, SymbolId, SymbolKind, TermBank, TermId};
use indexmap::IndexMap;
use std::collections::HashMap;
use std::sync::Arc;

/// Collapsed symbol name. Cheap to clone; compared by content.
pub type Token = Arc<str>;

const VAR_TOKEN: &str = "*";
const BLANK_TOKEN: &str = "*_";

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FeatureKey {
    /// Root-anchored downward path `(predicate, arg, arg-of-arg)`; the
    /// predicate carries the literal's polarity.
    Vertical { positive: bool, path: [Token; 3] },
    /// A symbol applied to the top symbols of its arguments.
    Horizontal { head: Token, args: Box<[Token]> },
    /// Occurrences of one symbol (predicates included, variables as `*`).
    SymbolCount(Token),
    /// Maximal depth at which one symbol occurs; the root is depth 1.
    SymbolDepth(Token),
    /// Number of literals.
    Length,
    /// Number of positive literals.
    PosCount,
    /// Number of negative literals.
    NegCount,
    /// A key counted on the conjecture side of the vector.
    ConjectureSide(Box<FeatureKey>),
}

impl FeatureKey {
    /// Max-type keys merge by maximum; everything else merges by sum.
    pub fn is_max_type(&self) -> bool {
        match self {
            FeatureKey::SymbolDepth(_) => true,
            FeatureKey::ConjectureSide(inner) => inner.is_max_type(),
            _ => false,
        }
    }

    /// Canonical serialization; the unique string fed to the hash. Fields
    /// are `|`-separated with `\`-escaping inside fields.
    pub fn serialize(&self) -> String {
        let mut out = String::new();
        self.serialize_into(&mut out);
        out
    }

    fn serialize_into(&self, out: &mut String) {
        fn field(out: &mut String, s: &str) {
            for ch in s.chars() {
                if ch == '\\' || ch == '|' {
                    out.push('\\');
                }
                out.push(ch);
            }
        }
        match self {
            FeatureKey::Vertical { positive, path } => {
                out.push('v');
                out.push('|');
                out.push(if *positive { '+' } else { '-' });
                for part in path {
                    out.push('|');
                    field(out, part);
                }
            }
            FeatureKey::Horizontal { head, args } => {
                out.push('h');
                out.push('|');
                field(out, head);
                for arg in args.iter() {
                    out.push('|');
                    field(out, arg);
                }
            }
            FeatureKey::SymbolCount(sym) => {
                out.push('c');
                out.push('|');
                field(out, sym);
            }
            FeatureKey::SymbolDepth(sym) => {
                out.push('d');
                out.push('|');
                field(out, sym);
            }
            FeatureKey::Length => out.push_str("l|len"),
            FeatureKey::PosCount => out.push_str("l|pos"),
            FeatureKey::NegCount => out.push_str("l|neg"),
            FeatureKey::ConjectureSide(inner) => {
                out.push('g');
                out.push('|');
                inner.serialize_into(out);
            }
        }
    }

    /// Parse a canonical serialization back into a key.
    pub fn parse(s: &str) -> Result<FeatureKey, KeyParseError> {
        if let Some(rest) = s.strip_prefix("g|") {
            return Ok(FeatureKey::ConjectureSide(Box::new(FeatureKey::parse(rest)?)));
        }
        let fields = split_fields(s);
        let bad = || KeyParseError { text: s.to_string() };
        match fields.first().map(String::as_str) {
            Some("v") => {
                if fields.len() != 5 {
                    return Err(bad());
                }
                let positive = match fields[1].as_str() {
                    "+" => true,
                    "-" => false,
                    _ => return Err(bad()),
                };
                let path = [
                    Token::from(fields[2].as_str()),
                    Token::from(fields[3].as_str()),
                    Token::from(fields[4].as_str()),
                ];
                Ok(FeatureKey::Vertical { positive, path })
            }
            Some("h") => {
                if fields.len() < 3 {
                    return Err(bad());
                }
                Ok(FeatureKey::Horizontal {
                    head: Token::from(fields[1].as_str()),
                    args: fields[2..].iter().map(|f| Token::from(f.as_str())).collect(),
                })
            }
            Some("c") if fields.len() == 2 => Ok(FeatureKey::SymbolCount(Token::from(fields[1].as_str()))),
            Some("d") if fields.len() == 2 => Ok(FeatureKey::SymbolDepth(Token::from(fields[1].as_str()))),
            Some("l") if fields.len() == 2 => match fields[1].as_str() {
                "len" => Ok(FeatureKey::Length),
                "pos" => Ok(FeatureKey::PosCount),
                "neg" => Ok(FeatureKey::NegCount),
                _ => Err(bad()),
            },
            _ => Err(bad()),
        }
    }
}

fn split_fields(s: &str) -> Vec<String> {
    let mut fields = vec![String::new()];
    let mut chars = s.chars();
    while let Some(ch) = chars.next() {
        match ch {
            '\\' => {
                if let Some(next) = chars.next() {
                    fields.last_mut().unwrap().push(next);
                }
            }
            '|' => fields.push(String::new()),
            _ => fields.last_mut().unwrap().push(ch),
        }
    }
    fields
}

#[derive(Debug, Clone, thiserror::Error, PartialEq, Eq)]
#[error("cannot parse feature key '{text}'")]
pub struct KeyParseError {
    pub text: String,
}

/// A multiset of features. Count-type values accumulate by sum, max-type
/// values (symbol depth) by maximum. Iteration order is first-seen.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FeatureBag {
    entries: IndexMap<FeatureKey, u64>,
}

impl FeatureBag {
    pub fn new() -> Self {
        FeatureBag::default()
    }

    pub fn add(&mut self, key: FeatureKey, value: u64) {
        match self.entries.entry(key) {
            indexmap::map::Entry::Occupied(mut e) => {
                if e.key().is_max_type() {
                    let v = e.get_mut();
                    *v = (*v).max(value);
                } else {
                    *e.get_mut() += value;
                }
            }
            indexmap::map::Entry::Vacant(e) => {
                e.insert(value);
            }
        }
    }

    /// Fold another bag in, applying the per-kind merge rule.
    pub fn merge(&mut self, other: &FeatureBag) {
        for (key, &value) in &other.entries {
            self.add(key.clone(), value);
        }
    }

    pub fn get(&self, key: &FeatureKey) -> u64 {
        self.entries.get(key).copied().unwrap_or(0)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&FeatureKey, u64)> {
        self.entries.iter().map(|(k, &v)| (k, v))
    }

    /// Total of all count-type values (used by conservation checks).
    pub fn count_total(&self, filter: impl Fn(&FeatureKey) -> bool) -> u64 {
        self.entries
            .iter()
            .filter(|(k, _)| filter(k))
            .map(|(_, &v)| v)
            .sum()
    }
}

/// Extracts feature bags; holds a symbol-token cache so repeated extraction
/// against the same bank is cheap.
#[derive(Debug, Default)]
pub struct Featurizer {
    tokens: HashMap<SymbolId, Token>,
    skolem_tokens: HashMap<usize, Token>,
    var_token: Option<Token>,
    blank_token: Option<Token>,
}

impl Featurizer {
    pub fn new() -> Self {
        Featurizer::default()
    }

    fn blank(&mut self) -> Token {
        self.blank_token.get_or_insert_with(|| Token::from(BLANK_TOKEN)).clone()
    }

    fn token(&mut self, bank: &TermBank, sym: SymbolId) -> Token {
        let info = bank.symbol(sym);
        match info.kind {
            SymbolKind::Variable => self
                .var_token
                .get_or_insert_with(|| Token::from(VAR_TOKEN))
                .clone(),
            SymbolKind::Skolem => self
                .skolem_tokens
                .entry(info.arity)
                .or_insert_with(|| Token::from(format!("*sk{}", info.arity).as_str()))
                .clone(),
            SymbolKind::Function | SymbolKind::Predicate => self
                .tokens
                .entry(sym)
                .or_insert_with(|| Token::from(info.name.as_str()))
                .clone(),
        }
    }

    fn top_token(&mut self, bank: &TermBank, t: TermId) -> Token {
        self.token(bank, bank.head(t))
    }

    /// Features of one clause (the lower half of a vector).
    pub fn clause_bag(&mut self, bank: &TermBank, clause: &Clause) -> FeatureBag {
        let mut bag = FeatureBag::new();
        for lit in &clause.literals {
            let head = self.top_token(bank, lit.atom);
            let args = bank.args(lit.atom);
            // Vertical walks, padded with the blank token when the literal
            // is shallower than three levels.
            if args.is_empty() {
                let blank = self.blank();
                bag.add(
                    FeatureKey::Vertical {
                        positive: lit.positive,
                        path: [head.clone(), blank.clone(), blank],
                    },
                    1,
                );
            } else {
                for &arg in args {
                    let mid = self.top_token(bank, arg);
                    let grandchildren = if bank.is_variable(arg) { &[][..] } else { bank.args(arg) };
                    if grandchildren.is_empty() {
                        bag.add(
                            FeatureKey::Vertical {
                                positive: lit.positive,
                                path: [head.clone(), mid, self.blank()],
                            },
                            1,
                        );
                    } else {
                        for &g in grandchildren {
                            bag.add(
                                FeatureKey::Vertical {
                                    positive: lit.positive,
                                    path: [head.clone(), mid.clone(), self.top_token(bank, g)],
                                },
                                1,
                            );
                        }
                    }
                }
            }
            // Symbol statistics and horizontal cuts, by iterative depth-first
            // walk (derived terms can be very deep).
            let mut stack: Vec<(TermId, u64)> = vec![(lit.atom, 1)];
            while let Some((t, depth)) = stack.pop() {
                let tok = self.top_token(bank, t);
                bag.add(FeatureKey::SymbolCount(tok.clone()), 1);
                bag.add(FeatureKey::SymbolDepth(tok.clone()), depth);
                if bank.is_variable(t) {
                    continue;
                }
                let args = bank.args(t);
                if args.is_empty() {
                    continue;
                }
                let arg_tokens: Box<[Token]> = args.iter().map(|&a| self.top_token(bank, a)).collect();
                bag.add(FeatureKey::Horizontal { head: tok, args: arg_tokens }, 1);
                for &a in args.iter().rev() {
                    stack.push((a, depth + 1));
                }
            }
        }
        // The three length keys are always part of a clause's description,
        // even when their value is zero; zero values are dropped only at
        // vectorization time.
        let stats = crate::termbank::clause_stats(clause);
        bag.add(FeatureKey::Length, stats.length as u64);
        bag.add(FeatureKey::PosCount, stats.positive as u64);
        bag.add(FeatureKey::NegCount, stats.negative as u64);
        bag
    }

    /// Merged features of a conjecture (the upper half of a vector):
    /// per-clause bags summed, except max-type keys where the maximum wins.
    pub fn conjecture_bag(&mut self, bank: &TermBank, conjecture: &[Clause]) -> FeatureBag {
        let mut bag = FeatureBag::new();
        for clause in conjecture {
            let one = self.clause_bag(bank, clause);
            bag.merge(&one);
        }
        bag
    }
}

/// One-off extraction helpers.
pub fn extract_clause_features(bank: &TermBank, clause: &Clause) -> FeatureBag {
    Featurizer::new().clause_bag(bank, clause)
}

pub fn extract_conjecture_features(bank: &TermBank, conjecture: &[Clause]) -> FeatureBag {
    Featurizer::new().conjecture_bag(bank, conjecture)
}

/// A sparse vector over `0..dimension`; indices sorted, values nonzero.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub dimension: usize,
    pub entries: Vec<(u32, u64)>,
}

impl FeatureVector {
    pub fn get(&self, index: u32) -> u64 {
        match self.entries.binary_search_by_key(&index, |&(i, _)| i) {
            Ok(pos) => self.entries[pos].1,
            Err(_) => 0,
        }
    }
}

#[derive(Debug, Clone, thiserror::Error, PartialEq, Eq)]
pub enum SpaceError {
    #[error("cannot build a feature space from zero examples")]
    NoExamples,
}

/// Frozen enumeration of feature keys in first-seen order, with one reserved
/// overflow slot for keys met after freezing.
#[derive(Debug, Clone, Default)]
pub struct IndexedSpace {
    keys: IndexMap<FeatureKey, u32>,
}

impl IndexedSpace {
    /// Per-side dimension: one slot per known key plus the overflow slot.
    pub fn side_dimension(&self) -> usize {
        self.keys.len() + 1
    }

    pub fn key_count(&self) -> usize {
        self.keys.len()
    }

    pub fn overflow_index(&self) -> u32 {
        self.keys.len() as u32
    }

    pub fn index_of(&self, key: &FeatureKey) -> u32 {
        self.keys.get(key).copied().unwrap_or(self.keys.len() as u32)
    }

    /// Keys in index order.
    pub fn keys(&self) -> impl Iterator<Item = (&FeatureKey, u32)> {
        self.keys.iter().map(|(k, &i)| (k, i))
    }

    fn observe(&mut self, key: &FeatureKey) {
        if !self.keys.contains_key(key) {
            let next = self.keys.len() as u32;
            self.keys.insert(key.clone(), next);
        }
    }

    pub fn from_keys(keys: impl IntoIterator<Item = FeatureKey>) -> Self {
        let mut space = IndexedSpace::default();
        for key in keys {
            space.observe(&key);
        }
        space
    }
}

/// How feature keys are numbered.
#[derive(Debug, Clone)]
pub enum FeatureSpace {
    Indexed(IndexedSpace),
    Hashed(HashConfig),
}

impl FeatureSpace {
    pub fn hashed(cfg: HashConfig) -> Self {
        FeatureSpace::Hashed(cfg)
    }

    /// Size of one half of a feature vector.
    pub fn side_dimension(&self) -> usize {
        match self {
            FeatureSpace::Indexed(s) => s.side_dimension(),
            FeatureSpace::Hashed(cfg) => cfg.base as usize,
        }
    }

    /// Full vector dimension: clause half plus conjecture half.
    pub fn dimension(&self) -> usize {
        2 * self.side_dimension()
    }

    fn clause_index(&self, key: &FeatureKey) -> u32 {
        match self {
            FeatureSpace::Indexed(s) => s.index_of(key),
            FeatureSpace::Hashed(cfg) => (sdbm(key.serialize().as_bytes()) % cfg.base as u64) as u32,
        }
    }

    fn conjecture_index(&self, key: &FeatureKey) -> u32 {
        let side = self.side_dimension() as u32;
        match self {
            FeatureSpace::Indexed(s) => side + s.index_of(key),
            FeatureSpace::Hashed(cfg) => {
                let wrapped = FeatureKey::ConjectureSide(Box::new(key.clone()));
                side + (sdbm(wrapped.serialize().as_bytes()) % cfg.base as u64) as u32
            }
        }
    }

    /// Build the `(clause, conjecture)` vector. Distinct keys that share an
    /// index (hash collisions, overflow) have their values summed.
    pub fn vectorize(&self, clause: &FeatureBag, conjecture: &FeatureBag) -> FeatureVector {
        let mut acc: std::collections::BTreeMap<u32, u64> = std::collections::BTreeMap::new();
        for (key, value) in clause.iter() {
            *acc.entry(self.clause_index(key)).or_insert(0) += value;
        }
        for (key, value) in conjecture.iter() {
            *acc.entry(self.conjecture_index(key)).or_insert(0) += value;
        }
        FeatureVector {
            dimension: self.dimension(),
            entries: acc.into_iter().filter(|&(_, v)| v != 0).collect(),
        }
    }
}

/// Enumerate every key occurring in the examples (clause first, then its
/// conjecture), in first-seen order, and freeze the numbering.
pub fn build_space(bank: &TermBank, examples: &[TrainingExample]) -> Result<IndexedSpace, SpaceError> {
    if examples.is_empty() {
        return Err(SpaceError::NoExamples);
    }
    let mut featurizer = Featurizer::new();
    let mut space = IndexedSpace::default();
    let mut seen_conjectures: HashMap<usize, ()> = HashMap::new();
    for example in examples {
        let clause_bag = featurizer.clause_bag(bank, &example.clause);
        for (key, _) in clause_bag.iter() {
            space.observe(key);
        }
        let conj_ptr = Arc::as_ptr(&example.conjecture) as *const u8 as usize;
        if seen_conjectures.insert(conj_ptr, ()).is_none() {
            let conj_bag = featurizer.conjecture_bag(bank, &example.conjecture);
            for (key, _) in conj_bag.iter() {
                space.observe(key);
            }
        }
    }
    Ok(space)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::termbank::{parse_clause_body, Role};

    fn clause(bank: &mut TermBank, text: &str) -> Clause {
        parse_clause_body(text, Role::Axiom, bank).unwrap()
    }

    fn bag(bank: &mut TermBank, text: &str) -> FeatureBag {
        let c = clause(bank, text);
        extract_clause_features(bank, &c)
    }

    fn verticals(bag: &FeatureBag) -> Vec<(bool, [String; 3], u64)> {
        bag.iter()
            .filter_map(|(k, v)| match k {
                FeatureKey::Vertical { positive, path } => Some((
                    *positive,
                    [path[0].to_string(), path[1].to_string(), path[2].to_string()],
                    v,
                )),
                _ => None,
            })
            .collect()
    }

    fn horizontals(bag: &FeatureBag) -> Vec<(String, Vec<String>, u64)> {
        bag.iter()
            .filter_map(|(k, v)| match k {
                FeatureKey::Horizontal { head, args } => Some((
                    head.to_string(),
                    args.iter().map(|a| a.to_string()).collect(),
                    v,
                )),
                _ => None,
            })
            .collect()
    }

    fn count_key(name: &str) -> FeatureKey {
        FeatureKey::SymbolCount(Token::from(name))
    }

    fn depth_key(name: &str) -> FeatureKey {
        FeatureKey::SymbolDepth(Token::from(name))
    }

    #[test]
    fn verticals_of_binary_application() {
        let mut bank = TermBank::new();
        let b = bag(&mut bank, "p(f(a, b))");
        let vs = verticals(&b);
        assert_eq!(
            vs,
            vec![
                (true, ["p".into(), "f".into(), "a".into()], 1),
                (true, ["p".into(), "f".into(), "b".into()], 1),
            ]
        );
    }

    #[test]
    fn horizontals_of_binary_application() {
        let mut bank = TermBank::new();
        let b = bag(&mut bank, "p(f(a, b))");
        let hs = horizontals(&b);
        assert_eq!(
            hs,
            vec![
                ("p".to_string(), vec!["f".to_string()], 1),
                ("f".to_string(), vec!["a".to_string(), "b".to_string()], 1),
            ]
        );
    }

    #[test]
    fn shallow_walks_are_padded() {
        let mut bank = TermBank::new();
        let b = bag(&mut bank, "p(a)");
        assert_eq!(verticals(&b), vec![(true, ["p".into(), "a".into(), "*_".into()], 1)]);

        let b = bag(&mut bank, "q");
        assert_eq!(verticals(&b), vec![(true, ["q".into(), "*_".into(), "*_".into()], 1)]);
    }

    #[test]
    fn deep_walks_are_truncated_to_three() {
        let mut bank = TermBank::new();
        let b = bag(&mut bank, "p(f(g(c)))");
        assert_eq!(verticals(&b), vec![(true, ["p".into(), "f".into(), "g".into()], 1)]);
    }

    #[test]
    fn polarity_distinguishes_walk_heads() {
        let mut bank = TermBank::new();
        let b = bag(&mut bank, "p(a) | ~p(a)");
        let vs = verticals(&b);
        assert_eq!(vs.len(), 2);
        assert!(vs[0].0);
        assert!(!vs[1].0);
        assert_eq!(vs[0].1, vs[1].1);
    }

    #[test]
    fn variables_collapse_to_star() {
        let mut bank = TermBank::new();
        let b = bag(&mut bank, "p(V1) | ~q(V2)");
        assert_eq!(b.get(&FeatureKey::Length), 2);
        assert_eq!(b.get(&FeatureKey::PosCount), 1);
        assert_eq!(b.get(&FeatureKey::NegCount), 1);
        assert_eq!(b.get(&count_key("p")), 1);
        assert_eq!(b.get(&count_key("q")), 1);
        assert_eq!(b.get(&count_key("*")), 2);
    }

    #[test]
    fn symbol_counts_conserve_occurrences() {
        let mut bank = TermBank::new();
        // Occurrences: p, f, a, b, q, g, X, X, f, c -> 10.
        let b = bag(&mut bank, "p(f(a, b)) | ~q(g(V1), f(V1, c))");
        let total = b.count_total(|k| matches!(k, FeatureKey::SymbolCount(_)));
        assert_eq!(total, 10);
    }

    #[test]
    fn depth_counts_from_root() {
        let mut bank = TermBank::new();
        let b = bag(&mut bank, "p(f(a))");
        assert_eq!(b.get(&depth_key("p")), 1);
        assert_eq!(b.get(&depth_key("f")), 2);
        assert_eq!(b.get(&depth_key("a")), 3);
    }

    #[test]
    fn depth_takes_maximum_over_occurrences() {
        let mut bank = TermBank::new();
        let b = bag(&mut bank, "p(a, f(a))");
        assert_eq!(b.get(&count_key("a")), 2);
        assert_eq!(b.get(&depth_key("a")), 3);
    }

    #[test]
    fn skolems_collapse_per_arity() {
        let mut bank = TermBank::new();
        let b = bag(&mut bank, "p(esk1_0(a), esk2_0(b), esk3_0)");
        assert_eq!(b.get(&count_key("*sk1")), 2);
        assert_eq!(b.get(&count_key("*sk0")), 1);
        assert_eq!(b.get(&count_key("esk1_0")), 0);
    }

    #[test]
    fn literal_order_does_not_change_the_bag() {
        let mut bank = TermBank::new();
        let b1 = bag(&mut bank, "p(f(a, b)) | ~q(c)");
        let b2 = bag(&mut bank, "~q(c) | p(f(a, b))");
        assert_eq!(b1, b2);
    }

    #[test]
    fn variable_renaming_does_not_change_the_bag() {
        let mut bank = TermBank::new();
        let b1 = bag(&mut bank, "p(V1, V2) | q(V2)");
        let b2 = bag(&mut bank, "p(V7, V3) | q(V3)");
        assert_eq!(b1, b2);
    }

    #[test]
    fn binary_application_space_has_fifteen_keys() {
        // p(f(a,b)): 2 verticals + 2 horizontals + 4 symbol counts +
        // 4 symbol depths + 3 length features.
        let mut bank = TermBank::new();
        let b = bag(&mut bank, "p(f(a, b))");
        assert_eq!(b.len(), 15);
        let space = IndexedSpace::from_keys(b.iter().map(|(k, _)| k.clone()));
        assert_eq!(space.key_count(), 15);
        assert_eq!(space.side_dimension(), 16);
    }

    #[test]
    fn space_indices_are_first_seen_and_stable() {
        let mut bank = TermBank::new();
        let b = bag(&mut bank, "p(f(a, b))");
        let keys: Vec<FeatureKey> = b.iter().map(|(k, _)| k.clone()).collect();
        let s1 = IndexedSpace::from_keys(keys.iter().cloned());
        let s2 = IndexedSpace::from_keys(keys.iter().cloned());
        for key in &keys {
            assert_eq!(s1.index_of(key), s2.index_of(key));
        }
        let first = &keys[0];
        assert_eq!(s1.index_of(first), 0);
    }

    #[test]
    fn unseen_keys_go_to_overflow() {
        let mut bank = TermBank::new();
        let b = bag(&mut bank, "p(a)");
        let space = IndexedSpace::from_keys(b.iter().map(|(k, _)| k.clone()));
        let overflow = space.overflow_index();
        // The length keys are shared with the space; everything else in this
        // clause is unseen and must be summed onto the overflow slot.
        let unseen = bag(&mut bank, "r(s(t(u)))");
        let expected: u64 = unseen
            .iter()
            .filter(|(k, _)| space.index_of(k) == overflow)
            .map(|(_, v)| v)
            .sum();
        assert!(expected > 0);
        let fs = FeatureSpace::Indexed(space);
        let v = fs.vectorize(&unseen, &FeatureBag::new());
        assert_eq!(v.get(overflow), expected);
        assert_eq!(v.get(fs.clause_index(&FeatureKey::Length)), 1);
    }

    #[test]
    fn conjecture_side_sums_counts_and_maxes_depths() {
        let mut bank = TermBank::new();
        let c1 = clause(&mut bank, "p(a)");
        let c2 = clause(&mut bank, "p(a)");
        let conj = extract_conjecture_features(&bank, &[c1.clone(), c2]);
        assert_eq!(conj.get(&count_key("p")), 2);
        assert_eq!(conj.get(&depth_key("p")), 1);
        assert_eq!(conj.get(&FeatureKey::Length), 2);

        let clause_bag = extract_clause_features(&bank, &c1);
        let space = IndexedSpace::from_keys(clause_bag.iter().map(|(k, _)| k.clone()));
        let side = space.side_dimension() as u32;
        let fs = FeatureSpace::Indexed(space);
        let v = fs.vectorize(&clause_bag, &conj);
        assert_eq!(v.dimension, 2 * side as usize);
        // The clause and conjecture halves use the same key numbering.
        for (key, value) in clause_bag.iter() {
            let idx = match &fs {
                FeatureSpace::Indexed(s) => s.index_of(key),
                _ => unreachable!(),
            };
            assert_eq!(v.get(idx), value);
            assert_eq!(v.get(side + idx), conj.get(key));
        }
    }

    #[test]
    fn empty_conjecture_leaves_upper_half_zero() {
        let mut bank = TermBank::new();
        let b = bag(&mut bank, "p(f(a, b))");
        let space = IndexedSpace::from_keys(b.iter().map(|(k, _)| k.clone()));
        let side = space.side_dimension() as u32;
        let v = FeatureSpace::Indexed(space).vectorize(&b, &FeatureBag::new());
        assert!(v.entries.iter().all(|&(i, _)| i < side));
    }

    #[test]
    fn vectorize_is_pure() {
        let mut bank = TermBank::new();
        let b = bag(&mut bank, "p(f(a, b)) | ~q(V1)");
        let space = FeatureSpace::Indexed(IndexedSpace::from_keys(b.iter().map(|(k, _)| k.clone())));
        assert_eq!(space.vectorize(&b, &b), space.vectorize(&b, &b));
    }

    #[test]
    fn hashed_vector_has_double_base_dimension() {
        let mut bank = TermBank::new();
        let b = bag(&mut bank, "p(f(a, b)) | ~q(V1)");
        let cfg = HashConfig::new(32).unwrap();
        let fs = FeatureSpace::hashed(cfg);
        let v = fs.vectorize(&b, &b);
        assert_eq!(v.dimension, 64);
        // Clause keys land in the lower half, conjecture keys in the upper.
        let lower: u64 = v.entries.iter().filter(|&&(i, _)| i < 32).map(|&(_, v)| v).sum();
        let upper: u64 = v.entries.iter().filter(|&&(i, _)| i >= 32).map(|&(_, v)| v).sum();
        let total: u64 = b.iter().map(|(_, v)| v).sum();
        // Collisions sum values, so the per-half totals are conserved.
        assert_eq!(lower, total);
        assert_eq!(upper, total);
    }

    #[test]
    fn serialization_round_trips() {
        let mut bank = TermBank::new();
        let b = bag(&mut bank, "p(f(a, b)) | ~q(g(V1), esk1_0(c)) | r");
        for (key, _) in b.iter() {
            let s = key.serialize();
            assert_eq!(FeatureKey::parse(&s).as_ref(), Ok(key), "round trip of {s}");
        }
        let wrapped = FeatureKey::ConjectureSide(Box::new(FeatureKey::Length));
        assert_eq!(wrapped.serialize(), "g|l|len");
        assert_eq!(FeatureKey::parse("g|l|len"), Ok(wrapped));
    }

    #[test]
    fn serialization_escapes_separators() {
        let key = FeatureKey::SymbolCount(Token::from("a|b\\c"));
        let s = key.serialize();
        assert_eq!(s, "c|a\\|b\\\\c");
        assert_eq!(FeatureKey::parse(&s), Ok(key));
    }

    #[test]
    fn serializations_are_unique_within_a_space() {
        let mut bank = TermBank::new();
        let b = bag(&mut bank, "p(f(a, b)) | ~q(g(V1), f(V1, c)) | r(esk1_0(a))");
        let mut seen = std::collections::HashSet::new();
        for (key, _) in b.iter() {
            assert!(seen.insert(key.serialize()));
        }
    }

    #[test]
    fn build_space_covers_clause_and_conjecture_keys() {
        use crate::prover::{parse_records, ExampleRecord};
        let mut bank = TermBank::new();
        let records = vec![
            ExampleRecord {
                problem: "t".into(),
                label: "positive".into(),
                clause: "p(f(a, b))".into(),
                conjecture: vec!["~r(c)".into()],
            },
            ExampleRecord {
                problem: "t".into(),
                label: "negative".into(),
                clause: "q(a)".into(),
                conjecture: vec!["~r(c)".into()],
            },
        ];
        let examples = parse_records(&records, &mut bank).unwrap();
        let space = build_space(&bank, &examples).unwrap();
        // Keys from both example clauses and from the conjecture are present.
        assert_eq!(space.index_of(&count_key("p")), space.index_of(&count_key("p")));
        assert!(space.index_of(&count_key("r")) < space.overflow_index());
        assert!(space.index_of(&count_key("q")) < space.overflow_index());
        assert!(matches!(build_space(&bank, &[]), Err(SpaceError::NoExamples)));
    }
}
