//! First-order unification and matching over interned terms.

use crate::termbank::{SymbolId, TermBank, TermId};
use std::collections::HashMap;

/// A substitution from variable symbols to terms. Bindings may chain
/// (`X -> Y`, `Y -> f(a)`); lookups dereference until a non-variable or an
/// unbound variable is reached.
#[derive(Debug, Default, Clone)]
pub struct Subst {
    map: HashMap<SymbolId, TermId>,
}

impl Subst {
    pub fn new() -> Self {
        Subst::default()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn bind(&mut self, var: SymbolId, term: TermId) {
        self.map.insert(var, term);
    }

    fn deref(&self, bank: &TermBank, mut t: TermId) -> TermId {
        while bank.is_variable(t) {
            match self.map.get(&bank.head(t)) {
                Some(&next) if next != t => t = next,
                _ => break,
            }
        }
        t
    }

    fn occurs(&self, bank: &TermBank, var: SymbolId, t: TermId) -> bool {
        let t = self.deref(bank, t);
        if bank.is_variable(t) {
            return bank.head(t) == var;
        }
        if !bank.has_vars(t) {
            return false;
        }
        bank.args(t).iter().any(|&a| self.occurs(bank, var, a))
    }

    /// Extend the substitution to a most general unifier of `a` and `b`.
    /// On failure the substitution is left in an unspecified state; callers
    /// discard it.
    pub fn unify(&mut self, bank: &TermBank, a: TermId, b: TermId) -> bool {
        let a = self.deref(bank, a);
        let b = self.deref(bank, b);
        if a == b {
            return true;
        }
        if bank.is_variable(a) {
            let v = bank.head(a);
            if self.occurs(bank, v, b) {
                return false;
            }
            self.bind(v, b);
            return true;
        }
        if bank.is_variable(b) {
            return self.unify(bank, b, a);
        }
        if bank.head(a) != bank.head(b) {
            return false;
        }
        let n = bank.args(a).len();
        for i in 0..n {
            let (ai, bi) = (bank.args(a)[i], bank.args(b)[i]);
            if !self.unify(bank, ai, bi) {
                return false;
            }
        }
        true
    }

    /// Apply the substitution, rebuilding (and interning) the instantiated
    /// term. Unbound variables stay as they are.
    pub fn apply(&self, bank: &mut TermBank, t: TermId) -> TermId {
        let mut memo = HashMap::new();
        self.apply_memo(bank, t, &mut memo)
    }

    fn apply_memo(&self, bank: &mut TermBank, t: TermId, memo: &mut HashMap<TermId, TermId>) -> TermId {
        if !bank.has_vars(t) {
            return t;
        }
        if let Some(&r) = memo.get(&t) {
            return r;
        }
        let d = self.deref(bank, t);
        let result = if bank.is_variable(d) {
            d
        } else {
            let args: Vec<TermId> = bank.args(d).to_vec();
            let new_args: Vec<TermId> = args.iter().map(|&a| self.apply_memo(bank, a, memo)).collect();
            bank.intern(bank.head(d), &new_args).expect("substitution preserves arity")
        };
        memo.insert(t, result);
        result
    }
}

/// One-way matching: find bindings for variables of `pattern` so that the
/// instantiated pattern equals `target`. Variables of `target` are treated
/// as constants. `trail` records new bindings so callers can backtrack.
pub fn match_term(
    bank: &TermBank,
    pattern: TermId,
    target: TermId,
    bindings: &mut HashMap<SymbolId, TermId>,
    trail: &mut Vec<SymbolId>,
) -> bool {
    if bank.is_variable(pattern) {
        let v = bank.head(pattern);
        return match bindings.get(&v) {
            Some(&bound) => bound == target,
            None => {
                bindings.insert(v, target);
                trail.push(v);
                true
            }
        };
    }
    if pattern == target && !bank.has_vars(pattern) {
        return true;
    }
    if bank.head(pattern) != bank.head(target) {
        return false;
    }
    let n = bank.args(pattern).len();
    for i in 0..n {
        let (pi, ti) = (bank.args(pattern)[i], bank.args(target)[i]);
        if !match_term(bank, pi, ti, bindings, trail) {
            return false;
        }
    }
    true
}

/// Undo bindings added after `mark`.
pub fn undo_trail(bindings: &mut HashMap<SymbolId, TermId>, trail: &mut Vec<SymbolId>, mark: usize) {
    while trail.len() > mark {
        let v = trail.pop().expect("trail length checked");
        bindings.remove(&v);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::termbank::Role;

    fn atom(bank: &mut TermBank, text: &str) -> TermId {
        let clause = crate::termbank::parse_clause_body(text, Role::Axiom, bank).unwrap();
        clause.literals[0].atom
    }

    /// Parse both atoms from one clause body, so that variable names shared
    /// between the two literals stay shared and distinct names stay distinct
    /// (clauses are canonically renamed per clause).
    fn atom_pair(bank: &mut TermBank, text: &str) -> (TermId, TermId) {
        let clause = crate::termbank::parse_clause_body(text, Role::Axiom, bank).unwrap();
        (clause.literals[0].atom, clause.literals[1].atom)
    }

    #[test]
    fn unifies_and_applies() {
        let mut bank = TermBank::new();
        let (a, b) = atom_pair(&mut bank, "p(V1, f(a)) | p(g(b), V2)");
        let mut subst = Subst::new();
        assert!(subst.unify(&bank, a, b));
        let ra = subst.apply(&mut bank, a);
        let rb = subst.apply(&mut bank, b);
        assert_eq!(ra, rb);
        assert_eq!(bank.print_term(ra), "p(g(b),f(a))");
    }

    #[test]
    fn occurs_check_rejects_cyclic_binding() {
        let mut bank = TermBank::new();
        let (a, b) = atom_pair(&mut bank, "p(V1, V1) | p(V2, f(V2))");
        let mut subst = Subst::new();
        assert!(!subst.unify(&bank, a, b));
    }

    #[test]
    fn head_clash_fails() {
        let mut bank = TermBank::new();
        let a = atom(&mut bank, "p(f(a))");
        let b = atom(&mut bank, "p(g(a))");
        let mut subst = Subst::new();
        assert!(!subst.unify(&bank, a, b));
    }

    #[test]
    fn chained_bindings_deref() {
        let mut bank = TermBank::new();
        let (a, b) = atom_pair(&mut bank, "p(V1, V2, V2) | p(V2, V3, f(c))");
        let mut subst = Subst::new();
        assert!(subst.unify(&bank, a, b));
        let ra = subst.apply(&mut bank, a);
        let rb = subst.apply(&mut bank, b);
        assert_eq!(ra, rb);
        assert!(!bank.has_vars(ra));
    }

    #[test]
    fn matching_is_one_way() {
        let mut bank = TermBank::new();
        let pattern = atom(&mut bank, "p(V1)");
        let target = atom(&mut bank, "p(f(V2))");
        let mut bindings = HashMap::new();
        let mut trail = Vec::new();
        assert!(match_term(&bank, pattern, target, &mut bindings, &mut trail));
        // The reverse direction must fail: f(V2) does not match the constant-like V1.
        let mut bindings = HashMap::new();
        let mut trail = Vec::new();
        assert!(!match_term(&bank, target, pattern, &mut bindings, &mut trail));
    }

    #[test]
    fn match_trail_undo() {
        let mut bank = TermBank::new();
        let pattern = atom(&mut bank, "p(V1, V1)");
        let t1 = atom(&mut bank, "p(a, b)");
        let t2 = atom(&mut bank, "p(a, a)");
        let mut bindings = HashMap::new();
        let mut trail = Vec::new();
        assert!(!match_term(&bank, pattern, t1, &mut bindings, &mut trail));
        undo_trail(&mut bindings, &mut trail, 0);
        assert!(bindings.is_empty());
        assert!(match_term(&bank, pattern, t2, &mut bindings, &mut trail));
    }
}
