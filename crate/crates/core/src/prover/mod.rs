//! Given-clause saturation with weighted clause-selection queues.
//!
//! A [`Strategy`] is a list of `(frequency, weight function)` queues. The
//! prover selects given clauses round-robin: a queue with frequency `f`
//! contributes `f` consecutive selections per cycle, each time yielding its
//! lightest clause (ties broken by clause id, i.e. first-in-first-out).
//! Every kept clause is evaluated by every queue's weight function exactly
//! once, when it is inserted.

pub mod calculus;
pub mod unify;

use crate::termbank::{Clause, Literal, Origin, Problem, SymbolId, TermBank};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeSet, BinaryHeap, HashMap, HashSet};
use std::sync::Arc;
use std::time::Instant;

#[derive(Debug, Clone, thiserror::Error)]
pub enum EvalError {
    #[error("model produced a non-finite weight for clause {clause}")]
    NonFinite { clause: u64 },
    #[error("model produced a negative weight {weight} for clause {clause}")]
    Negative { clause: u64, weight: f64 },
}

#[derive(Debug, Clone, thiserror::Error, PartialEq, Eq)]
pub enum StrategyError {
    #[error("a strategy needs at least one queue")]
    Empty,
    #[error("queue frequency must be at least 1")]
    ZeroFrequency,
    #[error("cannot parse strategy component '{0}': expected '<freq>*<name>'")]
    BadComponent(String),
    #[error("unknown weight function '{0}' (expected 'symcount' or 'fifo')")]
    UnknownWeight(String),
}

#[derive(Debug, Clone, thiserror::Error)]
pub enum ExtractError {
    #[error("training examples require a proof, but the run ended with status {status:?}")]
    NotProved { status: RunStatus },
}

/// Per-run clause evaluator. Implementations may carry caches; a fresh
/// evaluator is created for every proof attempt.
pub trait ClauseEvaluator {
    /// Called once before the search starts, with the parsed problem.
    fn begin_problem(&mut self, problem: &Problem, bank: &TermBank);
    /// Weight of a clause; smaller is better. Must be finite and >= 0.
    fn weight(&mut self, clause: &Clause, bank: &TermBank) -> Result<f64, EvalError>;
}

/// A trained model that can rate clauses. Implemented by the linear, tree
/// and neural models; shared between runs behind an `Arc`.
pub trait WeightModel: Send + Sync {
    fn model_name(&self) -> &str;
    fn evaluator(&self) -> Box<dyn ClauseEvaluator>;
}

/// Weight function attached to one selection queue.
#[derive(Clone)]
pub enum WeightFunction {
    /// Number of symbol occurrences in the clause.
    SymbolCount,
    /// Constant weight; with the id tie-break this selects oldest-first.
    Fifo,
    Model(Arc<dyn WeightModel>),
}

impl std::fmt::Debug for WeightFunction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            WeightFunction::SymbolCount => write!(f, "symcount"),
            WeightFunction::Fifo => write!(f, "fifo"),
            WeightFunction::Model(m) => write!(f, "model:{}", m.model_name()),
        }
    }
}

impl WeightFunction {
    fn evaluator(&self) -> Box<dyn ClauseEvaluator> {
        match self {
            WeightFunction::SymbolCount => Box::new(SymbolCountEval),
            WeightFunction::Fifo => Box::new(FifoEval),
            WeightFunction::Model(m) => m.evaluator(),
        }
    }
}

struct SymbolCountEval;

impl ClauseEvaluator for SymbolCountEval {
    fn begin_problem(&mut self, _problem: &Problem, _bank: &TermBank) {}
    fn weight(&mut self, clause: &Clause, bank: &TermBank) -> Result<f64, EvalError> {
        let total: u64 = clause.literals.iter().map(|l| bank.term_size(l.atom)).sum();
        Ok(total as f64)
    }
}

struct FifoEval;

impl ClauseEvaluator for FifoEval {
    fn begin_problem(&mut self, _problem: &Problem, _bank: &TermBank) {}
    fn weight(&mut self, _clause: &Clause, _bank: &TermBank) -> Result<f64, EvalError> {
        Ok(0.0)
    }
}

/// An ordered list of selection queues with round-robin frequencies.
#[derive(Debug, Clone)]
pub struct Strategy {
    pub queues: Vec<(u32, WeightFunction)>,
}

impl Strategy {
    pub fn new(queues: Vec<(u32, WeightFunction)>) -> Result<Self, StrategyError> {
        if queues.is_empty() {
            return Err(StrategyError::Empty);
        }
        if queues.iter().any(|(f, _)| *f == 0) {
            return Err(StrategyError::ZeroFrequency);
        }
        Ok(Strategy { queues })
    }

    /// The default baseline: `(4*symcount, 1*fifo)`.
    pub fn baseline() -> Self {
        Strategy {
            queues: vec![(4, WeightFunction::SymbolCount), (1, WeightFunction::Fifo)],
        }
    }

    pub fn describe(&self) -> String {
        self.queues
            .iter()
            .map(|(f, w)| format!("{f}*{w:?}"))
            .collect::<Vec<_>>()
            .join(",")
    }

    /// Parse a textual spec like `4*symcount,1*fifo`.
    pub fn parse(spec: &str) -> Result<Self, StrategyError> {
        let mut queues = Vec::new();
        for part in spec.split(',') {
            let part = part.trim();
            if part.is_empty() {
                continue;
            }
            let (freq, name) = part
                .split_once('*')
                .ok_or_else(|| StrategyError::BadComponent(part.to_string()))?;
            let freq: u32 = freq
                .trim()
                .parse()
                .map_err(|_| StrategyError::BadComponent(part.to_string()))?;
            let weight = match name.trim() {
                "symcount" => WeightFunction::SymbolCount,
                "fifo" => WeightFunction::Fifo,
                other => return Err(StrategyError::UnknownWeight(other.to_string())),
            };
            queues.push((freq, weight));
        }
        Strategy::new(queues)
    }
}

/// How a model is joined with a base strategy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CombineMode {
    /// The model queue replaces the base strategy entirely: `(1*M)`.
    Solo,
    /// The model queue is added with frequency equal to the sum of the base
    /// frequencies: `((sum f_i)*M, f_1*W_1, ..., f_k*W_k)`.
    Coop,
}

/// Build the combined strategy for `model` on top of `base`.
pub fn combine_strategies(base: &Strategy, model: Arc<dyn WeightModel>, mode: CombineMode) -> Strategy {
    match mode {
        CombineMode::Solo => Strategy {
            queues: vec![(1, WeightFunction::Model(model))],
        },
        CombineMode::Coop => {
            let total: u32 = base.queues.iter().map(|(f, _)| *f).sum();
            let mut queues = Vec::with_capacity(base.queues.len() + 1);
            queues.push((total, WeightFunction::Model(model)));
            queues.extend(base.queues.iter().cloned());
            Strategy { queues }
        }
    }
}

/// Step and wall-clock budgets for one proof attempt.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Limits {
    pub max_processed: u64,
    pub max_generated: u64,
    pub max_seconds: Option<f64>,
}

impl Default for Limits {
    fn default() -> Self {
        Limits { max_processed: 20_000, max_generated: u64::MAX, max_seconds: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum RunStatus {
    /// The empty clause was derived.
    Proved,
    /// The unprocessed set ran dry without deriving the empty clause.
    Saturated,
    /// A step or time limit was hit first.
    ResourceOut,
}

/// Outcome of one proof attempt.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    pub problem: String,
    pub status: RunStatus,
    pub processed_count: u64,
    pub generated_count: u64,
    /// Ids of clauses in the proof DAG (inputs through the empty clause).
    pub proof_clauses: BTreeSet<u64>,
    pub wall_seconds: f64,
    /// Selected given clauses, in selection order.
    pub given_ids: Vec<u64>,
}

/// A labelled training example: one processed clause plus the conjecture of
/// the problem it came from.
#[derive(Debug, Clone)]
pub struct TrainingExample {
    pub clause: Clause,
    pub conjecture: Arc<Vec<Clause>>,
    pub positive: bool,
    pub problem: String,
}

/// Serialised form of a training example (one JSON object per line).
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct ExampleRecord {
    pub problem: String,
    pub label: String,
    pub clause: String,
    pub conjecture: Vec<String>,
}

impl TrainingExample {
    pub fn to_record(&self, bank: &TermBank) -> ExampleRecord {
        ExampleRecord {
            problem: self.problem.clone(),
            label: if self.positive { "positive" } else { "negative" }.to_string(),
            clause: bank.print_clause(&self.clause),
            conjecture: self.conjecture.iter().map(|c| bank.print_clause(c)).collect(),
        }
    }
}

/// Parse serialised examples back into bank-backed training examples.
/// Conjecture clause lists are shared between examples with identical text.
pub fn parse_records(
    records: &[ExampleRecord],
    bank: &mut TermBank,
) -> Result<Vec<TrainingExample>, crate::termbank::ParseError> {
    use crate::termbank::{parse_clause_body, Role};
    let mut conj_cache: HashMap<Vec<String>, Arc<Vec<Clause>>> = HashMap::new();
    let mut out = Vec::with_capacity(records.len());
    for record in records {
        let clause = parse_clause_body(&record.clause, Role::Axiom, bank)?;
        let conjecture = match conj_cache.get(&record.conjecture) {
            Some(shared) => Arc::clone(shared),
            None => {
                let mut clauses = Vec::with_capacity(record.conjecture.len());
                for text in &record.conjecture {
                    clauses.push(parse_clause_body(text, Role::NegatedConjecture, bank)?);
                }
                let shared = Arc::new(clauses);
                conj_cache.insert(record.conjecture.clone(), Arc::clone(&shared));
                shared
            }
        };
        out.push(TrainingExample {
            clause,
            conjecture,
            positive: record.label == "positive",
            problem: record.problem.clone(),
        });
    }
    Ok(out)
}

/// Cyclic scheduler: queue `i` yields `freqs[i]` consecutive selections per
/// cycle; queues reported unavailable are skipped.
#[derive(Debug, Clone)]
pub struct RoundRobin {
    freqs: Vec<u32>,
    current: usize,
    used: u32,
}

impl RoundRobin {
    pub fn new(freqs: Vec<u32>) -> Self {
        debug_assert!(!freqs.is_empty() && freqs.iter().all(|&f| f > 0));
        RoundRobin { freqs, current: 0, used: 0 }
    }

    /// Next queue to draw from, or `None` if no queue is available.
    pub fn next_available(&mut self, mut available: impl FnMut(usize) -> bool) -> Option<usize> {
        let k = self.freqs.len();
        let mut skipped = 0;
        loop {
            if self.used >= self.freqs[self.current] {
                self.current = (self.current + 1) % k;
                self.used = 0;
                continue;
            }
            if available(self.current) {
                self.used += 1;
                return Some(self.current);
            }
            self.current = (self.current + 1) % k;
            self.used = 0;
            skipped += 1;
            if skipped >= k {
                return None;
            }
        }
    }
}

/// Min-heap entry ordered by (weight, clause id).
#[derive(Debug, PartialEq)]
struct QEntry {
    weight: f64,
    id: u64,
}

impl Eq for QEntry {}

impl PartialOrd for QEntry {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for QEntry {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        // Reversed: BinaryHeap is a max-heap, we want the smallest on top.
        other
            .weight
            .total_cmp(&self.weight)
            .then_with(|| other.id.cmp(&self.id))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ClauseState {
    Unprocessed,
    Processed,
    /// Discarded: duplicate, subsumed, tautology, or simplified away.
    Gone,
}

enum Inserted {
    Kept,
    Discarded,
    EmptyClause(u64),
}

/// The saturation engine for a single problem.
pub struct Saturation {
    bank: TermBank,
    clauses: Vec<Clause>,
    states: Vec<ClauseState>,
    queues: Vec<BinaryHeap<QEntry>>,
    evaluators: Vec<Box<dyn ClauseEvaluator>>,
    schedule: RoundRobin,
    processed: Vec<u64>,
    /// (polarity, predicate) of each processed clause's first literal ->
    /// candidate subsumers.
    subsume_index: HashMap<(bool, SymbolId), Vec<u64>>,
    /// Sorted literal keys per processed clause, for the subset prefilter.
    processed_keys: HashMap<u64, Box<[(bool, SymbolId)]>>,
    dedup: HashSet<Box<[Literal]>>,
    limits: Limits,
    processed_count: u64,
    generated_count: u64,
    given: Vec<u64>,
    empty_clause: Option<u64>,
    conjecture: Arc<Vec<Clause>>,
    problem_name: String,
}

impl Saturation {
    /// Set up a run. The problem's clauses must have been created by `bank`
    /// with ids `0..n` (i.e. use a fresh bank per proof attempt).
    pub fn new(bank: TermBank, problem: &Problem, strategy: &Strategy, limits: Limits) -> Result<Self, StrategyError> {
        if strategy.queues.is_empty() {
            return Err(StrategyError::Empty);
        }
        let mut evaluators: Vec<Box<dyn ClauseEvaluator>> = Vec::with_capacity(strategy.queues.len());
        for (_, w) in &strategy.queues {
            let mut e = w.evaluator();
            e.begin_problem(problem, &bank);
            evaluators.push(e);
        }
        let freqs: Vec<u32> = strategy.queues.iter().map(|(f, _)| *f).collect();
        let inputs: Vec<Clause> = problem.clauses().cloned().collect();
        debug_assert!(inputs.iter().enumerate().all(|(i, c)| c.id == i as u64));
        let mut sat = Saturation {
            bank,
            clauses: Vec::new(),
            states: Vec::new(),
            queues: (0..freqs.len()).map(|_| BinaryHeap::new()).collect(),
            evaluators,
            schedule: RoundRobin::new(freqs),
            processed: Vec::new(),
            subsume_index: HashMap::new(),
            processed_keys: HashMap::new(),
            dedup: HashSet::new(),
            limits,
            processed_count: 0,
            generated_count: 0,
            given: Vec::new(),
            empty_clause: None,
            conjecture: Arc::new(problem.conjecture.clone()),
            problem_name: problem.name.clone(),
        };
        for clause in inputs {
            if let Inserted::EmptyClause(id) = sat.insert(clause).expect("builtin evaluators cannot fail") {
                sat.empty_clause = Some(id);
            }
        }
        Ok(sat)
    }

    pub fn bank(&self) -> &TermBank {
        &self.bank
    }

    pub fn clause(&self, id: u64) -> &Clause {
        &self.clauses[id as usize]
    }

    fn literal_keys(&self, clause: &Clause) -> Box<[(bool, SymbolId)]> {
        let mut keys: Vec<(bool, SymbolId)> = clause
            .literals
            .iter()
            .map(|l| (l.positive, self.bank.head(l.atom)))
            .collect();
        keys.sort_unstable();
        keys.into_boxed_slice()
    }

    fn keys_subset(sub: &[(bool, SymbolId)], sup: &[(bool, SymbolId)]) -> bool {
        let mut i = 0;
        for key in sup {
            if i == sub.len() {
                return true;
            }
            if sub[i] == *key {
                i += 1;
            }
        }
        i == sub.len()
    }

    /// Is `clause` subsumed by some processed clause?
    fn forward_subsumed(&self, clause: &Clause) -> bool {
        if self.processed.is_empty() {
            return false;
        }
        let ckeys = self.literal_keys(clause);
        let mut candidates: Vec<u64> = Vec::new();
        let mut last = None;
        for key in ckeys.iter() {
            if last == Some(*key) {
                continue;
            }
            last = Some(*key);
            if let Some(bucket) = self.subsume_index.get(key) {
                candidates.extend_from_slice(bucket);
            }
        }
        candidates.sort_unstable();
        candidates.dedup();
        for id in candidates {
            let d = &self.clauses[id as usize];
            if self.states[id as usize] != ClauseState::Processed || d.len() > clause.len() {
                continue;
            }
            let dkeys = &self.processed_keys[&id];
            if Self::keys_subset(dkeys, &ckeys) && calculus::subsumes(&self.bank, d, clause) {
                return true;
            }
        }
        false
    }

    /// Store a clause and, if it survives the redundancy checks, weigh it on
    /// every queue and add it to the unprocessed set.
    fn insert(&mut self, clause: Clause) -> Result<Inserted, EvalError> {
        debug_assert_eq!(clause.id as usize, self.clauses.len(), "clause ids must be dense");
        let id = clause.id;
        if clause.is_empty() {
            self.states.push(ClauseState::Processed);
            self.clauses.push(clause);
            return Ok(Inserted::EmptyClause(id));
        }
        if calculus::is_tautology(&clause.literals)
            || self.dedup.contains(clause.literals.as_slice())
            || self.forward_subsumed(&clause)
        {
            self.states.push(ClauseState::Gone);
            self.clauses.push(clause);
            return Ok(Inserted::Discarded);
        }
        for (q, evaluator) in self.evaluators.iter_mut().enumerate() {
            let weight = evaluator.weight(&clause, &self.bank)?;
            if !weight.is_finite() {
                return Err(EvalError::NonFinite { clause: id });
            }
            if weight < 0.0 {
                return Err(EvalError::Negative { clause: id, weight });
            }
            self.queues[q].push(QEntry { weight, id });
        }
        self.dedup.insert(clause.literals.clone().into_boxed_slice());
        self.states.push(ClauseState::Unprocessed);
        self.clauses.push(clause);
        Ok(Inserted::Kept)
    }

    /// Drop dead entries from the top of queue `q`; true if a live clause
    /// remains.
    fn settle_queue(&mut self, q: usize) -> bool {
        while let Some(top) = self.queues[q].peek() {
            if self.states[top.id as usize] == ClauseState::Unprocessed {
                return true;
            }
            self.queues[q].pop();
        }
        false
    }

    /// Run the saturation loop to completion.
    pub fn run(&mut self) -> Result<RunReport, EvalError> {
        let start = Instant::now();
        let status = self.run_inner(start)?;
        let proof_clauses = match self.empty_clause {
            Some(id) => self.ancestors(id),
            None => BTreeSet::new(),
        };
        Ok(RunReport {
            problem: self.problem_name.clone(),
            status,
            processed_count: self.processed_count,
            generated_count: self.generated_count,
            proof_clauses,
            wall_seconds: start.elapsed().as_secs_f64(),
            given_ids: self.given.clone(),
        })
    }

    fn run_inner(&mut self, start: Instant) -> Result<RunStatus, EvalError> {
        if self.empty_clause.is_some() {
            return Ok(RunStatus::Proved);
        }
        loop {
            if self.processed_count >= self.limits.max_processed
                || self.generated_count >= self.limits.max_generated
            {
                return Ok(RunStatus::ResourceOut);
            }
            if let Some(max) = self.limits.max_seconds {
                if start.elapsed().as_secs_f64() >= max {
                    return Ok(RunStatus::ResourceOut);
                }
            }
            // Borrow dance: settle_queue needs &mut self, so probe queues first.
            let live: Vec<bool> = (0..self.queues.len()).map(|q| self.settle_queue(q)).collect();
            let Some(q) = self.schedule.next_available(|i| live[i]) else {
                return Ok(RunStatus::Saturated);
            };
            let given = self.queues[q].pop().expect("settled queue has a top").id;
            debug_assert_eq!(self.states[given as usize], ClauseState::Unprocessed);
            // Forward simplification against the processed set as it is now;
            // clauses simplified away are dropped without being processed.
            let given_clause = self.clauses[given as usize].clone();
            if self.forward_subsumed(&given_clause) {
                self.states[given as usize] = ClauseState::Gone;
                continue;
            }
            self.states[given as usize] = ClauseState::Processed;
            let keys = self.literal_keys(&given_clause);
            if let Some(first) = keys.first() {
                self.subsume_index.entry(*first).or_default().push(given);
            }
            self.processed_keys.insert(given, keys);
            self.processed.push(given);
            self.processed_count += 1;
            self.given.push(given);

            let partners = self.processed.clone();
            let mut inferred: Vec<Clause> = calculus::factors(&mut self.bank, &given_clause);
            for partner_id in partners {
                let partner = self.clauses[partner_id as usize].clone();
                inferred.extend(calculus::binary_resolvents(&mut self.bank, &given_clause, &partner));
                for clause in inferred.drain(..) {
                    self.generated_count += 1;
                    if let Inserted::EmptyClause(id) = self.insert(clause)? {
                        self.empty_clause = Some(id);
                        return Ok(RunStatus::Proved);
                    }
                    if self.generated_count >= self.limits.max_generated {
                        return Ok(RunStatus::ResourceOut);
                    }
                }
            }
        }
    }

    fn ancestors(&self, id: u64) -> BTreeSet<u64> {
        let mut seen = BTreeSet::new();
        let mut stack = vec![id];
        while let Some(c) = stack.pop() {
            if !seen.insert(c) {
                continue;
            }
            if let Origin::Derived { parents, .. } = &self.clauses[c as usize].origin {
                stack.extend(parents.iter().copied());
            }
        }
        seen
    }

    /// Re-run every recorded inference in the proof DAG and check that each
    /// derived clause is reproduced literally (clauses are stored canonically
    /// renamed, so replay results can be compared by literal vectors).
    pub fn replay_proof(&mut self, report: &RunReport) -> Result<(), String> {
        if report.status != RunStatus::Proved {
            return Err("nothing to replay: run did not prove".into());
        }
        for &id in &report.proof_clauses {
            let clause = self.clauses[id as usize].clone();
            match clause.origin.clone() {
                Origin::Input { .. } => {}
                Origin::Derived { rule, parents } => {
                    let produced = match rule {
                        crate::termbank::Rule::Resolution => {
                            let g = self.clauses[parents[0] as usize].clone();
                            let p = self.clauses[parents[1] as usize].clone();
                            calculus::binary_resolvents(&mut self.bank, &g, &p)
                        }
                        crate::termbank::Rule::Factoring => {
                            let g = self.clauses[parents[0] as usize].clone();
                            calculus::factors(&mut self.bank, &g)
                        }
                    };
                    if !produced.iter().any(|c| c.literals == clause.literals) {
                        return Err(format!(
                            "clause {id} ({}) not reproduced from parents {parents:?}",
                            self.bank.print_clause(&clause)
                        ));
                    }
                }
            }
        }
        Ok(())
    }

    /// Label every selected given clause: positive if it ended up in the
    /// proof DAG, negative otherwise.
    pub fn extract_examples(&self, report: &RunReport) -> Result<Vec<TrainingExample>, ExtractError> {
        if report.status != RunStatus::Proved {
            return Err(ExtractError::NotProved { status: report.status });
        }
        Ok(report
            .given_ids
            .iter()
            .map(|&id| TrainingExample {
                clause: self.clauses[id as usize].clone(),
                conjecture: Arc::clone(&self.conjecture),
                positive: report.proof_clauses.contains(&id),
                problem: self.problem_name.clone(),
            })
            .collect())
    }
}

/// One-shot convenience: run `problem` to completion.
pub fn saturate(
    bank: TermBank,
    problem: &Problem,
    strategy: &Strategy,
    limits: Limits,
) -> Result<(RunReport, Saturation), SaturateError> {
    let mut sat = Saturation::new(bank, problem, strategy, limits)?;
    let report = sat.run()?;
    Ok((report, sat))
}

#[derive(Debug, thiserror::Error)]
pub enum SaturateError {
    #[error(transparent)]
    Strategy(#[from] StrategyError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::termbank::parse_problem;

    fn run_problem(src: &str, strategy: &Strategy, limits: Limits) -> (RunReport, Saturation) {
        let mut bank = TermBank::new();
        let problem = parse_problem(src, "test", &mut bank).unwrap();
        saturate(bank, &problem, strategy, limits).unwrap()
    }

    #[test]
    fn proves_direct_contradiction() {
        let (report, _) = run_problem(
            "cnf(a, axiom, p).\ncnf(g, negated_conjecture, ~p).",
            &Strategy::baseline(),
            Limits::default(),
        );
        assert_eq!(report.status, RunStatus::Proved);
        assert_eq!(report.proof_clauses.len(), 3);
        assert!(report.processed_count <= 2);
    }

    #[test]
    fn proves_chain() {
        let (report, sat) = run_problem(
            "cnf(a1, axiom, p(c1)).\n\
             cnf(a2, axiom, ~p(V1) | q(f(V1))).\n\
             cnf(g, negated_conjecture, ~q(f(c1))).",
            &Strategy::baseline(),
            Limits::default(),
        );
        assert_eq!(report.status, RunStatus::Proved);
        // Inputs are part of the recorded proof.
        assert!(report.proof_clauses.contains(&0));
        assert!(report.proof_clauses.contains(&2));
        let empty = report.proof_clauses.iter().max().unwrap();
        assert!(sat.clause(*empty).is_empty());
    }

    #[test]
    fn saturates_when_nothing_interacts() {
        let (report, _) = run_problem(
            "cnf(a1, axiom, p(c1)).\ncnf(a2, axiom, q(c2)).",
            &Strategy::baseline(),
            Limits::default(),
        );
        assert_eq!(report.status, RunStatus::Saturated);
        assert_eq!(report.processed_count, 2);
    }

    #[test]
    fn resource_out_on_growth() {
        let (report, _) = run_problem(
            "cnf(a1, axiom, p(c1)).\n\
             cnf(a2, axiom, ~p(V1) | p(f(V1))).\n\
             cnf(g, negated_conjecture, ~q(c1)).",
            &Strategy::baseline(),
            Limits { max_processed: 5, max_generated: u64::MAX, max_seconds: None },
        );
        assert_eq!(report.status, RunStatus::ResourceOut);
        assert_eq!(report.processed_count, 5);
    }

    #[test]
    fn generated_limit_stops_run() {
        let (report, _) = run_problem(
            "cnf(a1, axiom, p(c1)).\n\
             cnf(a2, axiom, ~p(V1) | p(f(V1))).\n\
             cnf(g, negated_conjecture, ~q(c1)).",
            &Strategy::baseline(),
            Limits { max_processed: u64::MAX, max_generated: 3, max_seconds: None },
        );
        assert_eq!(report.status, RunStatus::ResourceOut);
        assert!(report.generated_count <= 3);
    }

    #[test]
    fn empty_input_clause_is_instant_proof() {
        let (report, _) = run_problem(
            "cnf(g, negated_conjecture, $false).",
            &Strategy::baseline(),
            Limits::default(),
        );
        assert_eq!(report.status, RunStatus::Proved);
        assert_eq!(report.processed_count, 0);
    }

    #[test]
    fn fifo_selects_in_input_order() {
        let strategy = Strategy::new(vec![(1, WeightFunction::Fifo)]).unwrap();
        let (report, _) = run_problem(
            "cnf(a1, axiom, p(f(f(f(c1))))).\n\
             cnf(a2, axiom, q(c1)).\n\
             cnf(a3, axiom, r(c1)).",
            &strategy,
            Limits::default(),
        );
        assert_eq!(report.given_ids, vec![0, 1, 2]);
    }

    #[test]
    fn symbol_count_prefers_light_clauses() {
        let strategy = Strategy::new(vec![(1, WeightFunction::SymbolCount)]).unwrap();
        let (report, _) = run_problem(
            "cnf(a1, axiom, p(f(f(f(c1))))).\n\
             cnf(a2, axiom, q(c1)).\n\
             cnf(a3, axiom, r(c1)).",
            &strategy,
            Limits::default(),
        );
        assert_eq!(report.given_ids, vec![1, 2, 0]);
    }

    #[test]
    fn duplicates_are_inserted_once() {
        // Both axioms resolve with the rule to the same q(c1); the duplicate
        // must be discarded, so only one q(c1) is ever selected.
        let (report, sat) = run_problem(
            "cnf(a1, axiom, p(c1)).\n\
             cnf(a2, axiom, p(c1) | p(c1)).\n\
             cnf(a3, axiom, ~p(V1) | q(V1)).\n\
             cnf(g, negated_conjecture, ~r(c1)).",
            &Strategy::baseline(),
            Limits::default(),
        );
        assert_eq!(report.status, RunStatus::Saturated);
        let q_count = report
            .given_ids
            .iter()
            .filter(|&&id| sat.bank().print_clause(sat.clause(id)) == "q(c1)")
            .count();
        assert_eq!(q_count, 1);
    }

    #[test]
    fn subsumed_clauses_are_not_selected() {
        // p(V1) subsumes p(c1); with fifo the unit variable clause is
        // processed first, so p(c1) must be simplified away.
        let strategy = Strategy::new(vec![(1, WeightFunction::Fifo)]).unwrap();
        let (report, sat) = run_problem(
            "cnf(a1, axiom, p(V1)).\n\
             cnf(a2, axiom, p(c1)).\n\
             cnf(g, negated_conjecture, ~q(c1)).",
            &strategy,
            Limits::default(),
        );
        assert_eq!(report.status, RunStatus::Saturated);
        let texts: Vec<String> = report
            .given_ids
            .iter()
            .map(|&id| sat.bank().print_clause(sat.clause(id)))
            .collect();
        assert!(!texts.contains(&"p(c1)".to_string()), "given: {texts:?}");
    }

    #[test]
    fn deterministic_reports() {
        let src = "cnf(a1, axiom, p(c1)).\n\
                   cnf(a2, axiom, ~p(V1) | q(f(V1))).\n\
                   cnf(a3, axiom, ~q(V1) | r(V1)).\n\
                   cnf(g, negated_conjecture, ~r(f(c1))).";
        let (r1, _) = run_problem(src, &Strategy::baseline(), Limits::default());
        let (r2, _) = run_problem(src, &Strategy::baseline(), Limits::default());
        assert_eq!(r1.status, r2.status);
        assert_eq!(r1.processed_count, r2.processed_count);
        assert_eq!(r1.generated_count, r2.generated_count);
        assert_eq!(r1.proof_clauses, r2.proof_clauses);
        assert_eq!(r1.given_ids, r2.given_ids);
    }

    #[test]
    fn proof_replays() {
        let src = "cnf(a1, axiom, p(c1)).\n\
                   cnf(a2, axiom, ~p(V1) | q(f(V1)) | q(f(c1))).\n\
                   cnf(a3, axiom, ~q(V1) | r(V1)).\n\
                   cnf(g, negated_conjecture, ~r(f(c1))).";
        let (report, mut sat) = run_problem(src, &Strategy::baseline(), Limits::default());
        assert_eq!(report.status, RunStatus::Proved);
        sat.replay_proof(&report).unwrap();
    }

    #[test]
    fn examples_partition_given_clauses() {
        let src = "cnf(a1, axiom, p(c1)).\n\
                   cnf(a2, axiom, ~p(V1) | q(f(V1))).\n\
                   cnf(a3, axiom, s(c2)).\n\
                   cnf(g, negated_conjecture, ~q(f(c1))).";
        let (report, sat) = run_problem(src, &Strategy::baseline(), Limits::default());
        assert_eq!(report.status, RunStatus::Proved);
        let examples = sat.extract_examples(&report).unwrap();
        assert_eq!(examples.len(), report.given_ids.len());
        for (example, id) in examples.iter().zip(&report.given_ids) {
            assert_eq!(example.positive, report.proof_clauses.contains(id));
            assert_eq!(example.conjecture.len(), 1);
        }
        assert!(examples.iter().any(|e| e.positive));
        assert!(examples.iter().any(|e| !e.positive));
    }

    #[test]
    fn extract_requires_proof() {
        let (report, sat) = run_problem(
            "cnf(a1, axiom, p(c1)).",
            &Strategy::baseline(),
            Limits::default(),
        );
        assert!(matches!(
            sat.extract_examples(&report),
            Err(ExtractError::NotProved { status: RunStatus::Saturated })
        ));
    }

    #[test]
    fn round_robin_pattern() {
        let mut rr = RoundRobin::new(vec![2, 1]);
        let picks: Vec<usize> = (0..6).map(|_| rr.next_available(|_| true).unwrap()).collect();
        assert_eq!(picks, vec![0, 0, 1, 0, 0, 1]);
    }

    #[test]
    fn round_robin_skips_unavailable() {
        let mut rr = RoundRobin::new(vec![2, 1]);
        let picks: Vec<usize> = (0..4).map(|_| rr.next_available(|q| q == 1).unwrap()).collect();
        assert_eq!(picks, vec![1, 1, 1, 1]);
        assert_eq!(rr.next_available(|_| false), None);
    }

    #[test]
    fn strategy_parsing() {
        let s = Strategy::parse("4*symcount,1*fifo").unwrap();
        assert_eq!(s.describe(), "4*symcount,1*fifo");
        assert!(matches!(Strategy::parse(""), Err(StrategyError::Empty)));
        assert!(matches!(Strategy::parse("0*fifo"), Err(StrategyError::ZeroFrequency)));
        assert!(matches!(Strategy::parse("2*nope"), Err(StrategyError::UnknownWeight(_))));
        assert!(matches!(Strategy::parse("fifo"), Err(StrategyError::BadComponent(_))));
    }

    struct ConstModel(f64);

    impl WeightModel for ConstModel {
        fn model_name(&self) -> &str {
            "const"
        }
        fn evaluator(&self) -> Box<dyn ClauseEvaluator> {
            struct E(f64);
            impl ClauseEvaluator for E {
                fn begin_problem(&mut self, _p: &Problem, _b: &TermBank) {}
                fn weight(&mut self, _c: &Clause, _b: &TermBank) -> Result<f64, EvalError> {
                    Ok(self.0)
                }
            }
            Box::new(E(self.0))
        }
    }

    #[test]
    fn combine_solo_replaces_queues() {
        let base = Strategy::baseline();
        let model: Arc<dyn WeightModel> = Arc::new(ConstModel(1.0));
        let solo = combine_strategies(&base, model, CombineMode::Solo);
        assert_eq!(solo.queues.len(), 1);
        assert_eq!(solo.queues[0].0, 1);
        assert!(matches!(solo.queues[0].1, WeightFunction::Model(_)));
    }

    #[test]
    fn combine_coop_prepends_model_queue() {
        let base = Strategy::baseline(); // frequencies 4 and 1
        let model: Arc<dyn WeightModel> = Arc::new(ConstModel(1.0));
        let coop = combine_strategies(&base, model, CombineMode::Coop);
        let freqs: Vec<u32> = coop.queues.iter().map(|(f, _)| *f).collect();
        assert_eq!(freqs, vec![5, 4, 1]);
        assert!(matches!(coop.queues[0].1, WeightFunction::Model(_)));
        assert!(matches!(coop.queues[1].1, WeightFunction::SymbolCount));
        assert!(matches!(coop.queues[2].1, WeightFunction::Fifo));
    }

    #[test]
    fn combine_coop_single_queue_base() {
        let base = Strategy::new(vec![(5, WeightFunction::SymbolCount)]).unwrap();
        let model: Arc<dyn WeightModel> = Arc::new(ConstModel(1.0));
        let coop = combine_strategies(&base, model, CombineMode::Coop);
        let freqs: Vec<u32> = coop.queues.iter().map(|(f, _)| *f).collect();
        assert_eq!(freqs, vec![5, 5]);
    }

    /// Counts evaluator calls to check the evaluate-once-per-queue contract.
    struct CountingModel(std::sync::Arc<std::sync::atomic::AtomicU64>);

    impl WeightModel for CountingModel {
        fn model_name(&self) -> &str {
            "counting"
        }
        fn evaluator(&self) -> Box<dyn ClauseEvaluator> {
            struct E(std::sync::Arc<std::sync::atomic::AtomicU64>);
            impl ClauseEvaluator for E {
                fn begin_problem(&mut self, _p: &Problem, _b: &TermBank) {}
                fn weight(&mut self, _c: &Clause, _b: &TermBank) -> Result<f64, EvalError> {
                    self.0.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                    Ok(1.0)
                }
            }
            Box::new(E(std::sync::Arc::clone(&self.0)))
        }
    }

    #[test]
    fn each_kept_clause_evaluated_once_per_queue() {
        let counter = std::sync::Arc::new(std::sync::atomic::AtomicU64::new(0));
        let model: Arc<dyn WeightModel> = Arc::new(CountingModel(std::sync::Arc::clone(&counter)));
        let strategy = Strategy::new(vec![
            (1, WeightFunction::Model(Arc::clone(&model))),
            (1, WeightFunction::Model(model)),
        ])
        .unwrap();
        let src = "cnf(a1, axiom, p(c1)).\n\
                   cnf(a2, axiom, ~p(V1) | q(f(V1))).\n\
                   cnf(g, negated_conjecture, ~q(f(c1))).";
        let mut bank = TermBank::new();
        let problem = parse_problem(src, "test", &mut bank).unwrap();
        let mut sat = Saturation::new(bank, &problem, &strategy, Limits::default()).unwrap();
        let report = sat.run().unwrap();
        assert_eq!(report.status, RunStatus::Proved);
        // Kept clauses: 3 inputs + kept resolvents. The empty clause and any
        // discarded clause are never evaluated.
        let kept = (0..sat.clauses.len())
            .filter(|&i| {
                sat.states[i] != ClauseState::Gone && !sat.clauses[i].is_empty()
            })
            .count() as u64;
        assert_eq!(counter.load(std::sync::atomic::Ordering::Relaxed), 2 * kept);
    }

    #[test]
    fn example_records_round_trip() {
        let src = "cnf(a1, axiom, p(c1)).\n\
                   cnf(a2, axiom, ~p(V1) | q(f(V1))).\n\
                   cnf(g, negated_conjecture, ~q(f(c1))).";
        let (report, sat) = run_problem(src, &Strategy::baseline(), Limits::default());
        let examples = sat.extract_examples(&report).unwrap();
        let records: Vec<ExampleRecord> = examples.iter().map(|e| e.to_record(sat.bank())).collect();
        let mut bank = TermBank::new();
        let parsed = parse_records(&records, &mut bank).unwrap();
        assert_eq!(parsed.len(), examples.len());
        for (p, r) in parsed.iter().zip(&records) {
            assert_eq!(bank.print_clause(&p.clause), r.clause);
            assert_eq!(p.positive, r.label == "positive");
        }
        // Shared conjecture lists are parsed once.
        assert!(Arc::ptr_eq(&parsed[0].conjecture, &parsed[1].conjecture));
    }
}
