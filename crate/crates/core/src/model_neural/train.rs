//! Seeded minibatch training for the recursive clause evaluator.
//!
//! Batches are grouped by conjecture so each batch computes its conjecture
//! summary once, the loss is a class-weighted mean negative log-likelihood
//! over the two softmax classes, and plain gradient descent runs for a
//! fixed number of epochs. The tape-based forward pass here reproduces the
//! inference path bit for bit (tested below), so a trained model behaves in
//! search exactly as it did during training.

use super::autodiff::{NodeId, Tape};
use super::{
    count_symbols, vocabulary, EmbeddingCache, LstmLayout, NeuralConfig, NeuralMeta, NeuralModel,
    Nonlinearity,
};
use crate::prover::TrainingExample;
use crate::termbank::{Clause, Literal, SymbolKind, TermBank, TermId};
use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::{BTreeMap, HashMap, HashSet};
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NeuralTrainError {
    #[error("cannot train on zero examples")]
    Empty,
    #[error("all training examples carry the {0} label")]
    SingleLabel(&'static str),
    #[error("training diverged at epoch {epoch}: loss {loss}")]
    Diverged { epoch: u32, loss: f64 },
    #[error(transparent)]
    Config(#[from] super::ConfigError),
}

/// Tape-side twin of the inference embedding functions, with per-tape
/// memoization over interned ids.
struct TapeForward<'m> {
    model: &'m NeuralModel,
    terms: HashMap<TermId, NodeId>,
    literals: HashMap<(bool, TermId), NodeId>,
    clauses: HashMap<Box<[Literal]>, NodeId>,
}

impl<'m> TapeForward<'m> {
    fn new(model: &'m NeuralModel) -> Self {
        TapeForward {
            model,
            terms: HashMap::new(),
            literals: HashMap::new(),
            clauses: HashMap::new(),
        }
    }

    fn nonlin(&self, tape: &mut Tape, x: NodeId) -> NodeId {
        match self.model.config.nonlinearity {
            Nonlinearity::Relu6 => tape.relu6(x),
            Nonlinearity::Tanh => tape.tanh(x),
        }
    }

    fn term(&mut self, tape: &mut Tape, bank: &TermBank, t: TermId) -> NodeId {
        if let Some(&hit) = self.terms.get(&t) {
            return hit;
        }
        let layout = &self.model.layout;
        let n = layout.n;
        let sym = bank.symbol(bank.head(t));
        let node = if sym.kind == SymbolKind::Variable {
            tape.param(layout.var, n)
        } else {
            let args: Vec<NodeId> =
                bank.args(t).to_vec().iter().map(|&a| self.term(tape, bank, a)).collect();
            match self.model.resolve_block(sym) {
                None => tape.zeros(n),
                Some(off) => {
                    if sym.arity == 0 {
                        tape.param(off, n)
                    } else {
                        let input = tape.concat(&args);
                        let pre = tape.affine(off, off + sym.arity * n * n, n, input);
                        self.nonlin(tape, pre)
                    }
                }
            }
        };
        self.terms.insert(t, node);
        node
    }

    fn literal(&mut self, tape: &mut Tape, bank: &TermBank, lit: Literal) -> NodeId {
        let atom = self.term(tape, bank, lit.atom);
        if lit.positive {
            return atom;
        }
        if let Some(&hit) = self.literals.get(&(false, lit.atom)) {
            return hit;
        }
        let layout = &self.model.layout;
        let pre = tape.affine(layout.neg_w, layout.neg_b, layout.n, atom);
        let node = self.nonlin(tape, pre);
        self.literals.insert((false, lit.atom), node);
        node
    }

    fn lstm(&self, tape: &mut Tape, l: &LstmLayout, inputs: &[NodeId]) -> NodeId {
        let hidden = l.hidden;
        let mut h = tape.zeros(hidden);
        let mut c = tape.zeros(hidden);
        for &x in inputs {
            let hx = tape.concat(&[h, x]);
            let pre = tape.affine(l.w, l.b, 4 * hidden, hx);
            let i_pre = tape.slice(pre, 0, hidden);
            let f_pre = tape.slice(pre, hidden, hidden);
            let o_pre = tape.slice(pre, 2 * hidden, hidden);
            let g_pre = tape.slice(pre, 3 * hidden, hidden);
            let i = tape.sigmoid(i_pre);
            let f = tape.sigmoid(f_pre);
            let o = tape.sigmoid(o_pre);
            let g = tape.tanh(g_pre);
            let fc = tape.mul(f, c);
            let ig = tape.mul(i, g);
            c = tape.add(fc, ig);
            let tc = tape.tanh(c);
            h = tape.mul(o, tc);
        }
        tape.affine(l.pw, l.pb, l.out, h)
    }

    fn clause(&mut self, tape: &mut Tape, bank: &TermBank, clause: &Clause) -> NodeId {
        let key: Box<[Literal]> = clause.literals.clone().into_boxed_slice();
        if let Some(&hit) = self.clauses.get(&key) {
            return hit;
        }
        let lits: Vec<NodeId> =
            clause.literals.iter().map(|&l| self.literal(tape, bank, l)).collect();
        let node = self.lstm(tape, &self.model.layout.cl, &lits);
        self.clauses.insert(key, node);
        node
    }

    fn conjecture(&mut self, tape: &mut Tape, bank: &TermBank, clauses: &[Clause]) -> NodeId {
        let embedded: Vec<NodeId> =
            clauses.iter().map(|c| self.clause(tape, bank, c)).collect();
        self.lstm(tape, &self.model.layout.conj, &embedded)
    }

    fn fin(&self, tape: &mut Tape, clause: NodeId, summary: NodeId) -> NodeId {
        let l = &self.model.layout;
        let input = tape.concat(&[clause, summary]);
        let pre1 = tape.affine(l.fin_w1, l.fin_b1, l.n + l.m, input);
        let h1 = tape.relu(pre1);
        let pre2 = tape.affine(l.fin_w2, l.fin_b2, l.half, h1);
        let h2 = tape.relu(pre2);
        tape.affine(l.fin_w3, l.fin_b3, 2, h2)
    }
}

/// Weighted-mean NLL node for one batch: positives weigh `pos_weight`,
/// negatives 1, normalized so the batch weights sum to one.
fn batch_loss_node(
    tape: &mut Tape,
    model: &NeuralModel,
    bank: &TermBank,
    batch: &[&TrainingExample],
    pos_weight: f64,
) -> NodeId {
    let mut fwd = TapeForward::new(model);
    let mut summaries: HashMap<*const Vec<Clause>, NodeId> = HashMap::new();
    let total_w: f64 =
        batch.iter().map(|e| if e.positive { pos_weight } else { 1.0 }).sum();
    let mut losses = Vec::with_capacity(batch.len());
    for e in batch {
        let key = Arc::as_ptr(&e.conjecture);
        let summary = match summaries.get(&key) {
            Some(&s) => s,
            None => {
                let s = fwd.conjecture(tape, bank, &e.conjecture);
                summaries.insert(key, s);
                s
            }
        };
        let cv = fwd.clause(tape, bank, &e.clause);
        let logits = fwd.fin(tape, cv, summary);
        let target = usize::from(e.positive);
        let w = (if e.positive { pos_weight } else { 1.0 }) / total_w;
        losses.push(tape.nll2(logits, target, w));
    }
    tape.sum(&losses)
}

/// Loss, parameter gradient and rectifier kink margin for one batch at the
/// model's current parameters. Exposed for derivative verification.
pub fn loss_and_gradient(
    model: &NeuralModel,
    bank: &TermBank,
    batch: &[&TrainingExample],
    pos_weight: f64,
) -> (f64, Vec<f64>, f64) {
    let mut tape = Tape::new(&model.params);
    let loss = batch_loss_node(&mut tape, model, bank, batch, pos_weight);
    let mut grad = vec![0.0; model.params.len()];
    tape.backward(loss, &mut grad);
    (tape.scalar(loss), grad, tape.kink_margin())
}

/// Forward-only batch loss at explicitly given parameters (finite
/// differencing hook).
pub fn loss_at(
    model: &NeuralModel,
    params: &[f64],
    bank: &TermBank,
    batch: &[&TrainingExample],
    pos_weight: f64,
) -> f64 {
    assert_eq!(params.len(), model.params.len());
    let mut tape = Tape::new(params);
    let loss = batch_loss_node(&mut tape, model, bank, batch, pos_weight);
    tape.scalar(loss)
}

/// Examples grouped by problem (batches never span two conjectures),
/// problems in name order, example order preserved within a problem.
pub(crate) fn group_batches(examples: &[TrainingExample], batch_size: usize) -> Vec<Vec<usize>> {
    let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, e) in examples.iter().enumerate() {
        groups.entry(&e.problem).or_default().push(i);
    }
    let mut batches = Vec::new();
    for idxs in groups.values() {
        for chunk in idxs.chunks(batch_size) {
            batches.push(chunk.to_vec());
        }
    }
    batches
}

/// Weighted-mean NLL over the full training set, via the cached inference
/// path (one summary per distinct conjecture).
fn full_loss(
    model: &NeuralModel,
    bank: &TermBank,
    examples: &[TrainingExample],
    pos_weight: f64,
) -> f64 {
    let mut cache = EmbeddingCache::new();
    let mut summaries: HashMap<*const Vec<Clause>, Vec<f64>> = HashMap::new();
    let mut total = 0.0;
    let mut total_w = 0.0;
    for e in examples {
        let key = Arc::as_ptr(&e.conjecture);
        let summary = summaries
            .entry(key)
            .or_insert_with(|| model.conjecture_summary(bank, &e.conjecture, &mut cache));
        let cv = model.embed_clause(bank, &e.clause, &mut cache);
        let (x0, x1) = model.fin(&cv, summary);
        let hi = x0.max(x1);
        let lse = hi + ((x0 - hi).exp() + (x1 - hi).exp()).ln();
        let picked = if e.positive { x1 } else { x0 };
        let w = if e.positive { pos_weight } else { 1.0 };
        total += w * (lse - picked);
        total_w += w;
    }
    total / total_w
}

pub fn train_neural(
    bank: &TermBank,
    examples: &[TrainingExample],
    config: &NeuralConfig,
    seed: u64,
) -> Result<NeuralModel, NeuralTrainError> {
    config.validate()?;
    if examples.is_empty() {
        return Err(NeuralTrainError::Empty);
    }
    let n_pos = examples.iter().filter(|e| e.positive).count();
    if n_pos == 0 {
        return Err(NeuralTrainError::SingleLabel("negative"));
    }
    if n_pos == examples.len() {
        return Err(NeuralTrainError::SingleLabel("positive"));
    }
    let pos_weight = config
        .positive_class_weight
        .unwrap_or((examples.len() - n_pos) as f64 / n_pos as f64);
    // Vocabulary over the example clauses plus each distinct conjecture.
    let mut clause_refs: Vec<&Clause> = examples.iter().map(|e| &e.clause).collect();
    let mut seen: HashSet<*const Vec<Clause>> = HashSet::new();
    for e in examples {
        if seen.insert(Arc::as_ptr(&e.conjecture)) {
            clause_refs.extend(e.conjecture.iter());
        }
    }
    let counts = count_symbols(bank, &clause_refs);
    let vocab = vocabulary(&counts, config.rare_threshold);
    let mut model = NeuralModel::init(*config, &vocab, seed)?;
    let batches = group_batches(examples, config.batch_size);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut epoch_losses = Vec::with_capacity(config.epochs as usize);
    for epoch in 0..config.epochs {
        let mut order: Vec<usize> = (0..batches.len()).collect();
        order.shuffle(&mut rng);
        for &bi in &order {
            let batch: Vec<&TrainingExample> =
                batches[bi].iter().map(|&i| &examples[i]).collect();
            let (loss, grad) = {
                let mut tape = Tape::new(&model.params);
                let loss = batch_loss_node(&mut tape, &model, bank, &batch, pos_weight);
                let mut grad = vec![0.0; model.params.len()];
                tape.backward(loss, &mut grad);
                (tape.scalar(loss), grad)
            };
            if !loss.is_finite() {
                return Err(NeuralTrainError::Diverged { epoch, loss });
            }
            for (p, g) in model.params.iter_mut().zip(&grad) {
                *p -= config.learning_rate * g;
            }
        }
        let loss = full_loss(&model, bank, examples, pos_weight);
        if !loss.is_finite() {
            return Err(NeuralTrainError::Diverged { epoch, loss });
        }
        epoch_losses.push(loss);
    }
    // Training-set rates through the final parameters.
    let mut cache = EmbeddingCache::new();
    let mut summaries: HashMap<*const Vec<Clause>, Vec<f64>> = HashMap::new();
    let (mut tp, mut fn_, mut tn, mut fp) = (0u64, 0u64, 0u64, 0u64);
    for e in examples {
        let key = Arc::as_ptr(&e.conjecture);
        summaries
            .entry(key)
            .or_insert_with(|| model.conjecture_summary(bank, &e.conjecture, &mut cache));
        let cv = model.embed_clause(bank, &e.clause, &mut cache);
        let (x0, x1) = model.fin(&cv, &summaries[&key]);
        let predicted_positive = x0 < x1;
        match (e.positive, predicted_positive) {
            (true, true) => tp += 1,
            (true, false) => fn_ += 1,
            (false, false) => tn += 1,
            (false, true) => fp += 1,
        }
    }
    let ratio = |hit: u64, miss: u64| (hit + miss > 0).then(|| hit as f64 / (hit + miss) as f64);
    model.meta = NeuralMeta { epoch_losses, tpr: ratio(tp, fn_), tnr: ratio(tn, fp) };
    Ok(model)
}

fn is_equality(bank: &TermBank, atom: TermId) -> bool {
    let sym = bank.symbol(bank.head(atom));
    sym.kind == SymbolKind::Predicate && sym.arity == 2 && (sym.name == "eq" || sym.name == "=")
}

fn transform_clause(bank: &mut TermBank, clause: &Clause, rng: &mut ChaCha8Rng) -> Clause {
    let mut literals = clause.literals.clone();
    for lit in &mut literals {
        if is_equality(bank, lit.atom) && rng.gen_bool(0.5) {
            let head = bank.head(lit.atom);
            let args = bank.args(lit.atom).to_vec();
            let swapped = bank.intern(head, &[args[1], args[0]]).expect("arity unchanged");
            lit.atom = swapped;
        }
    }
    literals.shuffle(rng);
    bank.new_clause(literals, clause.origin.clone())
}

fn sorted_literals(clause: &Clause) -> Vec<Literal> {
    let mut lits = clause.literals.clone();
    lits.sort_by_key(|l| (l.positive, l.atom));
    lits
}

/// Randomized data augmentation: shuffle conjecture clause order, literal
/// order within every clause, and the argument order of equality atoms
/// (each one swapped with probability one half). Afterwards any negative
/// example that became structurally equal (up to literal order) to a
/// positive of the same problem is dropped.
pub fn augment_examples(
    bank: &mut TermBank,
    examples: &[TrainingExample],
    seed: u64,
) -> Vec<TrainingExample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut conjectures: HashMap<*const Vec<Clause>, Arc<Vec<Clause>>> = HashMap::new();
    let mut out: Vec<TrainingExample> = Vec::with_capacity(examples.len());
    for e in examples {
        let key = Arc::as_ptr(&e.conjecture);
        let conjecture = match conjectures.get(&key) {
            Some(shared) => Arc::clone(shared),
            None => {
                let mut clauses: Vec<Clause> =
                    e.conjecture.iter().map(|c| transform_clause(bank, c, &mut rng)).collect();
                clauses.shuffle(&mut rng);
                let shared = Arc::new(clauses);
                conjectures.insert(key, Arc::clone(&shared));
                shared
            }
        };
        out.push(TrainingExample {
            clause: transform_clause(bank, &e.clause, &mut rng),
            conjecture,
            positive: e.positive,
            problem: e.problem.clone(),
        });
    }
    let positives: HashSet<(String, Vec<Literal>)> = out
        .iter()
        .filter(|e| e.positive)
        .map(|e| (e.problem.clone(), sorted_literals(&e.clause)))
        .collect();
    out.retain(|e| {
        e.positive || !positives.contains(&(e.problem.clone(), sorted_literals(&e.clause)))
    });
    out
}
