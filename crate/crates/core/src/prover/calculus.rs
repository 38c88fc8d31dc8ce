//! The inference rules: binary resolution and positive factoring, plus the
//! clause-level redundancy checks (duplicate-literal merging, tautology
//! detection, subsumption).

use super::unify::{match_term, undo_trail, Subst};
use crate::termbank::{Clause, Literal, Origin, Rule, TermBank, TermId};
use std::collections::HashMap;

/// Remove repeated literals, keeping first occurrences in order.
pub fn merge_duplicate_literals(literals: Vec<Literal>) -> Vec<Literal> {
    let mut seen = Vec::with_capacity(literals.len());
    let mut out = Vec::with_capacity(literals.len());
    for lit in literals {
        if !seen.contains(&lit) {
            seen.push(lit);
            out.push(lit);
        }
    }
    out
}

/// A clause containing both `a` and `~a` is a tautology.
pub fn is_tautology(literals: &[Literal]) -> bool {
    for (i, a) in literals.iter().enumerate() {
        for b in &literals[i + 1..] {
            if a.atom == b.atom && a.positive != b.positive {
                return true;
            }
        }
    }
    false
}

/// Literals of `clause` with its variables shifted to `X{offset}, ...` so
/// that they are disjoint from any clause using fewer than `offset`
/// canonical variables.
pub fn rename_apart(bank: &mut TermBank, clause: &Clause, offset: usize) -> Vec<Literal> {
    if clause.num_vars == 0 || offset == 0 {
        return clause.literals.clone();
    }
    let mut subst = Subst::new();
    for i in 0..clause.num_vars {
        let from = bank.canonical_variable(i);
        let to = bank.canonical_variable(offset + i);
        let to_term = bank.var_term(to);
        subst.bind(from, to_term);
    }
    clause
        .literals
        .iter()
        .map(|lit| Literal::new(lit.positive, subst.apply(bank, lit.atom)))
        .collect()
}

fn build(bank: &mut TermBank, literals: Vec<Literal>, rule: Rule, parents: Vec<u64>) -> Option<Clause> {
    let literals = merge_duplicate_literals(literals);
    if is_tautology(&literals) {
        return None;
    }
    Some(bank.new_clause(literals, Origin::Derived { rule, parents }))
}

/// All binary resolvents between `given` and `partner`. The partner's
/// variables are renamed apart first; results are canonically renamed,
/// duplicate literals are merged and tautologies are dropped.
pub fn binary_resolvents(bank: &mut TermBank, given: &Clause, partner: &Clause) -> Vec<Clause> {
    let partner_literals = rename_apart(bank, partner, given.num_vars);
    let mut out = Vec::new();
    for (i, glit) in given.literals.iter().enumerate() {
        for (j, plit) in partner_literals.iter().enumerate() {
            if glit.positive == plit.positive || bank.head(glit.atom) != bank.head(plit.atom) {
                continue;
            }
            let mut subst = Subst::new();
            if !subst.unify(bank, glit.atom, plit.atom) {
                continue;
            }
            let mut literals = Vec::with_capacity(given.len() + partner.len() - 2);
            for (k, lit) in given.literals.iter().enumerate() {
                if k != i {
                    literals.push(Literal::new(lit.positive, subst.apply(bank, lit.atom)));
                }
            }
            for (k, lit) in partner_literals.iter().enumerate() {
                if k != j {
                    literals.push(Literal::new(lit.positive, subst.apply(bank, lit.atom)));
                }
            }
            if let Some(clause) = build(bank, literals, Rule::Resolution, vec![given.id, partner.id]) {
                out.push(clause);
            }
        }
    }
    out
}

/// All positive factors of `given`: for each unifiable pair of positive
/// literals, the instance of the clause with the second occurrence removed.
pub fn factors(bank: &mut TermBank, given: &Clause) -> Vec<Clause> {
    let mut out = Vec::new();
    for i in 0..given.len() {
        if !given.literals[i].positive {
            continue;
        }
        for j in i + 1..given.len() {
            if !given.literals[j].positive {
                continue;
            }
            let (a, b) = (given.literals[i].atom, given.literals[j].atom);
            if bank.head(a) != bank.head(b) {
                continue;
            }
            let mut subst = Subst::new();
            if !subst.unify(bank, a, b) {
                continue;
            }
            let literals: Vec<Literal> = given
                .literals
                .iter()
                .enumerate()
                .filter(|(k, _)| *k != j)
                .map(|(_, lit)| Literal::new(lit.positive, subst.apply(bank, lit.atom)))
                .collect();
            if let Some(clause) = build(bank, literals, Rule::Factoring, vec![given.id]) {
                out.push(clause);
            }
        }
    }
    out
}

/// Every inference with `given` against one `partner`: binary resolvents
/// plus the factors of `given`.
pub fn resolvents(bank: &mut TermBank, given: &Clause, partner: &Clause) -> Vec<Clause> {
    let mut out = binary_resolvents(bank, given, partner);
    out.extend(factors(bank, given));
    out
}

/// Does `subsumer` subsume `clause`? True when `subsumer` maps injectively
/// into `clause` under a single substitution of the subsumer's variables
/// (multiset subsumption, which requires `|subsumer| <= |clause|`).
pub fn subsumes(bank: &TermBank, subsumer: &Clause, clause: &Clause) -> bool {
    if subsumer.len() > clause.len() || subsumer.is_empty() {
        return subsumer.is_empty();
    }
    // Ground unit clause: membership test on interned ids.
    if subsumer.num_vars == 0 {
        return subsumer.literals.iter().all(|lit| clause.literals.contains(lit));
    }
    let mut bindings = HashMap::new();
    let mut trail = Vec::new();
    let mut used = vec![false; clause.len()];
    subsume_literals(bank, &subsumer.literals, 0, &clause.literals, &mut used, &mut bindings, &mut trail)
}

fn subsume_literals(
    bank: &TermBank,
    pattern: &[Literal],
    index: usize,
    target: &[Literal],
    used: &mut [bool],
    bindings: &mut HashMap<crate::termbank::SymbolId, TermId>,
    trail: &mut Vec<crate::termbank::SymbolId>,
) -> bool {
    if index == pattern.len() {
        return true;
    }
    let plit = pattern[index];
    for (k, tlit) in target.iter().enumerate() {
        if used[k] || tlit.positive != plit.positive || bank.head(tlit.atom) != bank.head(plit.atom) {
            continue;
        }
        let mark = trail.len();
        if match_term(bank, plit.atom, tlit.atom, bindings, trail) {
            used[k] = true;
            if subsume_literals(bank, pattern, index + 1, target, used, bindings, trail) {
                return true;
            }
            used[k] = false;
        }
        undo_trail(bindings, trail, mark);
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::termbank::{parse_clause_body, Role};

    fn clause(bank: &mut TermBank, text: &str) -> Clause {
        parse_clause_body(text, Role::Axiom, bank).unwrap()
    }

    fn printed(bank: &TermBank, clauses: &[Clause]) -> Vec<String> {
        clauses.iter().map(|c| bank.print_clause(c)).collect()
    }

    #[test]
    fn resolves_complementary_literals() {
        let mut bank = TermBank::new();
        let g = clause(&mut bank, "p(V1) | q(V1)");
        let p = clause(&mut bank, "~p(f(a))");
        let rs = binary_resolvents(&mut bank, &g, &p);
        assert_eq!(printed(&bank, &rs), vec!["q(f(a))"]);
    }

    #[test]
    fn resolution_renames_apart() {
        let mut bank = TermBank::new();
        let g = clause(&mut bank, "~p(V1) | p(f(V1))");
        let rs = binary_resolvents(&mut bank, &g.clone(), &g);
        assert_eq!(printed(&bank, &rs), vec!["p(f(f(X0))) | ~p(X0)", "~p(X0) | p(f(f(X0)))"]);
    }

    #[test]
    fn derives_empty_clause() {
        let mut bank = TermBank::new();
        let g = clause(&mut bank, "p(a)");
        let p = clause(&mut bank, "~p(V1)");
        let rs = binary_resolvents(&mut bank, &g, &p);
        assert_eq!(rs.len(), 1);
        assert!(rs[0].is_empty());
        assert_eq!(rs[0].origin, Origin::Derived { rule: Rule::Resolution, parents: vec![g.id, p.id] });
    }

    #[test]
    fn tautologies_are_dropped() {
        let mut bank = TermBank::new();
        let g = clause(&mut bank, "p | q");
        let p = clause(&mut bank, "~p | ~q");
        let rs = binary_resolvents(&mut bank, &g, &p);
        assert!(rs.is_empty(), "both resolvents are tautologies: {:?}", printed(&bank, &rs));
    }

    #[test]
    fn duplicate_literals_merge() {
        let mut bank = TermBank::new();
        let g = clause(&mut bank, "p(a) | q(b)");
        let p = clause(&mut bank, "~q(b) | p(a)");
        let rs = binary_resolvents(&mut bank, &g, &p);
        assert_eq!(printed(&bank, &rs), vec!["p(a)"]);
    }

    #[test]
    fn positive_factor_collapses_unifiable_pair() {
        let mut bank = TermBank::new();
        let g = clause(&mut bank, "p(V1) | p(a)");
        let fs = factors(&mut bank, &g);
        assert_eq!(printed(&bank, &fs), vec!["p(a)"]);
    }

    #[test]
    fn negative_literals_are_not_factored() {
        let mut bank = TermBank::new();
        let g = clause(&mut bank, "~p(V1) | ~p(a)");
        let fs = factors(&mut bank, &g);
        assert!(fs.is_empty());
    }

    #[test]
    fn resolvents_includes_factors_of_given() {
        let mut bank = TermBank::new();
        let g = clause(&mut bank, "p(V1) | p(a)");
        let p = clause(&mut bank, "~p(b)");
        let rs = resolvents(&mut bank, &g, &p);
        // One binary resolvent (on the first literal) and one factor.
        assert_eq!(printed(&bank, &rs), vec!["p(a)", "p(a)"]);
        assert_eq!(rs[0].origin, Origin::Derived { rule: Rule::Resolution, parents: vec![g.id, p.id] });
        assert_eq!(rs[1].origin, Origin::Derived { rule: Rule::Factoring, parents: vec![g.id] });
    }

    #[test]
    fn subsumption_general_to_specific() {
        let mut bank = TermBank::new();
        let d = clause(&mut bank, "p(V1)");
        let c = clause(&mut bank, "p(f(a)) | q(b)");
        assert!(subsumes(&bank, &d, &c));
        assert!(!subsumes(&bank, &c, &d));
    }

    #[test]
    fn subsumption_needs_consistent_bindings() {
        let mut bank = TermBank::new();
        let d = clause(&mut bank, "p(V1) | q(V1)");
        let c1 = clause(&mut bank, "p(a) | q(a) | r");
        let c2 = clause(&mut bank, "p(a) | q(b)");
        assert!(subsumes(&bank, &d, &c1));
        assert!(!subsumes(&bank, &d, &c2));
    }

    #[test]
    fn subsumption_is_multiset_like() {
        let mut bank = TermBank::new();
        let d = clause(&mut bank, "p(V1) | p(V2)");
        let c = clause(&mut bank, "p(a)");
        // |D| > |C|, so D must not subsume C.
        assert!(!subsumes(&bank, &d, &c));
    }

    #[test]
    fn ground_unit_subsumption_uses_identity() {
        let mut bank = TermBank::new();
        let d = clause(&mut bank, "p(f(a))");
        let c = clause(&mut bank, "q(b) | p(f(a))");
        assert!(subsumes(&bank, &d, &c));
    }

    #[test]
    fn empty_clause_subsumes_everything() {
        let mut bank = TermBank::new();
        let d = bank.new_clause(vec![], Origin::Input { role: Role::Axiom });
        let c = clause(&mut bank, "p(a)");
        assert!(subsumes(&bank, &d, &c));
    }
}
