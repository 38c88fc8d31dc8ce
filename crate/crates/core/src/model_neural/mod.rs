//! Recursive neural clause evaluation.
//!
//! Terms embed bottom-up: every symbol owns a parameter block (a learned
//! vector for arity 0, an affine map over concatenated argument embeddings
//! plus a clipped rectifier otherwise), all variables share one vector, and
//! infrequent symbols share a fallback block per (kind, arity). Literal
//! negation is a learned unary block. A recurrent combiner folds literal
//! embeddings into a clause vector, a second one folds the conjecture's
//! clause vectors into a fixed summary, and a three-layer classifier maps
//! [clause ⧺ summary] to two scores (x0, x1): the clause is judged useful
//! iff x0 < x1. Interned-term sharing makes embeddings cacheable during
//! search; the cache is transparent (bit-identical results) because
//! parameters are frozen while proving.

mod autodiff;
mod train;

pub use autodiff::{NodeId, Tape};
pub use train::{augment_examples, loss_and_gradient, loss_at, train_neural, NeuralTrainError};

use crate::model_linear::{
    expect_line, field_text, opt_to_text, parse_field, parse_opt_field, ModelFileError,
};
use crate::prover::{ClauseEvaluator, EvalError, WeightModel};
use crate::termbank::{Clause, Literal, Problem, Symbol, SymbolKind, TermBank, TermId};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;
use thiserror::Error;

/// Nonlinearity applied by symbol blocks (the classifier always uses the
/// plain rectifier between its linear layers).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Nonlinearity {
    /// min(max(0, x), 6)
    Relu6,
    Tanh,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NeuralConfig {
    /// Embedding dimension.
    pub n: usize,
    /// Conjecture-summary dimension; must not exceed `n`.
    pub m: usize,
    /// Symbols seen fewer times than this share a fallback block.
    pub rare_threshold: u64,
    pub nonlinearity: Nonlinearity,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub epochs: u32,
    /// Loss weight on positive examples; None = #negatives / #positives.
    pub positive_class_weight: Option<f64>,
    /// Rank clauses by predicted probability instead of the two-level
    /// 1.0/10.0 weighting. Off by default; kept for A/B comparisons.
    pub order_by_probability: bool,
}

impl Default for NeuralConfig {
    fn default() -> Self {
        NeuralConfig {
            n: 64,
            m: 16,
            rare_threshold: 10,
            nonlinearity: Nonlinearity::Relu6,
            batch_size: 128,
            learning_rate: 1e-3,
            epochs: 50,
            positive_class_weight: None,
            order_by_probability: false,
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ConfigError {
    #[error("embedding dims need n >= 2, m >= 1, m <= n (got n={n}, m={m})")]
    BadDims { n: usize, m: usize },
    #[error("batch size must be at least 1")]
    BadBatch,
}

impl NeuralConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.n < 2 || self.m < 1 || self.m > self.n {
            return Err(ConfigError::BadDims { n: self.n, m: self.m });
        }
        if self.batch_size == 0 {
            return Err(ConfigError::BadBatch);
        }
        Ok(())
    }
}

/// Which parameter block a symbol resolves to.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum BlockName {
    Named(String),
    /// All Skolem symbols of one arity share a block: their invented names
    /// never recur across problems, so per-name parameters cannot train.
    Skolem,
    /// Shared block for symbols below the rarity threshold.
    Rare,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct BlockKey {
    pub predicate: bool,
    pub arity: usize,
    pub name: BlockName,
}

impl BlockKey {
    /// The counting/lookup key for a symbol; None for variables, which
    /// share the dedicated variable vector instead.
    pub fn for_symbol(sym: &Symbol) -> Option<BlockKey> {
        match sym.kind {
            SymbolKind::Variable => None,
            SymbolKind::Skolem => {
                Some(BlockKey { predicate: false, arity: sym.arity, name: BlockName::Skolem })
            }
            SymbolKind::Function => Some(BlockKey {
                predicate: false,
                arity: sym.arity,
                name: BlockName::Named(sym.name.clone()),
            }),
            SymbolKind::Predicate => Some(BlockKey {
                predicate: true,
                arity: sym.arity,
                name: BlockName::Named(sym.name.clone()),
            }),
        }
    }

    fn rare_of(&self) -> BlockKey {
        BlockKey { predicate: self.predicate, arity: self.arity, name: BlockName::Rare }
    }
}

fn block_param_len(n: usize, arity: usize) -> usize {
    if arity == 0 {
        n
    } else {
        arity * n * n + n
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct LstmLayout {
    /// Gate matrix, 4·hidden × (hidden + input), row-major; gate order
    /// input, forget, output, candidate.
    pub w: usize,
    pub b: usize,
    /// Output projection out × hidden.
    pub pw: usize,
    pub pb: usize,
    pub hidden: usize,
    pub out: usize,
}

/// Offsets of every component inside the flat parameter vector. A pure
/// function of (config dims, block key set), so files only need to store
/// those.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Layout {
    pub n: usize,
    pub m: usize,
    pub blocks: BTreeMap<BlockKey, usize>,
    pub var: usize,
    pub neg_w: usize,
    pub neg_b: usize,
    pub cl: LstmLayout,
    pub conj: LstmLayout,
    pub fin_w1: usize,
    pub fin_b1: usize,
    pub fin_w2: usize,
    pub fin_b2: usize,
    pub fin_w3: usize,
    pub fin_b3: usize,
    pub half: usize,
    pub total: usize,
}

impl Layout {
    pub fn build(n: usize, m: usize, keys: &BTreeSet<BlockKey>) -> Layout {
        let mut at = 0usize;
        let mut take = |len: usize| {
            let off = at;
            at += len;
            off
        };
        let mut blocks = BTreeMap::new();
        for key in keys {
            let off = take(block_param_len(n, key.arity));
            blocks.insert(key.clone(), off);
        }
        let var = take(n);
        let neg_w = take(n * n);
        let neg_b = take(n);
        let mut lstm = |input: usize, hidden: usize, out: usize| LstmLayout {
            w: take(4 * hidden * (hidden + input)),
            b: take(4 * hidden),
            pw: take(out * hidden),
            pb: take(out),
            hidden,
            out,
        };
        let cl = lstm(n, n, n);
        let conj = lstm(n, n, m);
        let half = n / 2;
        let fin_w1 = take((n + m) * (n + m));
        let fin_b1 = take(n + m);
        let fin_w2 = take(half * (n + m));
        let fin_b2 = take(half);
        let fin_w3 = take(2 * half);
        let fin_b3 = take(2);
        Layout {
            n,
            m,
            blocks,
            var,
            neg_w,
            neg_b,
            cl,
            conj,
            fin_w1,
            fin_b1,
            fin_w2,
            fin_b2,
            fin_w3,
            fin_b3,
            half,
            total: at,
        }
    }
}

/// Per-proof-attempt memo of term, literal and clause embeddings, keyed by
/// interned ids so structurally equal objects share one entry. Discarded
/// between problems; parameters never change mid-search, so entries stay
/// bitwise-identical to recomputation.
#[derive(Debug, Default)]
pub struct EmbeddingCache {
    terms: HashMap<TermId, Arc<Vec<f64>>>,
    literals: HashMap<(bool, TermId), Arc<Vec<f64>>>,
    clauses: HashMap<Box<[Literal]>, Arc<Vec<f64>>>,
    pub summary: Option<Vec<f64>>,
    /// Symbol/negation block applications performed so far; cache hits
    /// perform none.
    pub block_applications: u64,
}

impl EmbeddingCache {
    pub fn new() -> Self {
        EmbeddingCache::default()
    }

    pub fn clear(&mut self) {
        self.terms.clear();
        self.literals.clear();
        self.clauses.clear();
        self.summary = None;
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct NeuralMeta {
    /// Full-data loss after each training epoch.
    pub epoch_losses: Vec<f64>,
    pub tpr: Option<f64>,
    pub tnr: Option<f64>,
}

pub struct NeuralModel {
    pub config: NeuralConfig,
    pub(crate) layout: Layout,
    pub params: Vec<f64>,
    pub meta: NeuralMeta,
}

impl NeuralModel {
    /// Fresh model with uniform [-1/sqrt(n), 1/sqrt(n)] parameters.
    pub fn init(
        config: NeuralConfig,
        vocabulary: &BTreeSet<BlockKey>,
        seed: u64,
    ) -> Result<NeuralModel, ConfigError> {
        config.validate()?;
        let layout = Layout::build(config.n, config.m, vocabulary);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bound = 1.0 / (config.n as f64).sqrt();
        let params = (0..layout.total).map(|_| rng.gen_range(-bound..bound)).collect();
        Ok(NeuralModel { config, layout, params, meta: NeuralMeta::default() })
    }

    pub fn block_keys(&self) -> impl Iterator<Item = &BlockKey> {
        self.layout.blocks.keys()
    }

    pub fn param_count(&self) -> usize {
        self.layout.total
    }

    fn nonlin(&self, v: &mut [f64]) {
        match self.config.nonlinearity {
            Nonlinearity::Relu6 => {
                for x in v {
                    *x = x.clamp(0.0, 6.0);
                }
            }
            Nonlinearity::Tanh => {
                for x in v {
                    *x = x.tanh();
                }
            }
        }
    }

    /// Same accumulation order as the training tape, so both paths agree
    /// bit for bit.
    fn affine_vec(&self, w: usize, b: usize, rows: usize, x: &[f64]) -> Vec<f64> {
        let cols = x.len();
        let mut y = Vec::with_capacity(rows);
        for i in 0..rows {
            let mut acc = self.params[b + i];
            let row = &self.params[w + i * cols..w + (i + 1) * cols];
            for (wij, xj) in row.iter().zip(x) {
                acc += wij * xj;
            }
            y.push(acc);
        }
        y
    }

    /// Block offset for a non-variable symbol: its own block, else the
    /// shared rare block of the same signature, else None (embeds to zero).
    pub(crate) fn resolve_block(&self, sym: &Symbol) -> Option<usize> {
        let key = BlockKey::for_symbol(sym)?;
        if let Some(&off) = self.layout.blocks.get(&key) {
            return Some(off);
        }
        self.layout.blocks.get(&key.rare_of()).copied()
    }

    pub fn embed_term(
        &self,
        bank: &TermBank,
        t: TermId,
        cache: &mut EmbeddingCache,
    ) -> Arc<Vec<f64>> {
        if let Some(hit) = cache.terms.get(&t) {
            return Arc::clone(hit);
        }
        let n = self.layout.n;
        let head = bank.head(t);
        let sym = bank.symbol(head);
        let value = if sym.kind == SymbolKind::Variable {
            cache.block_applications += 1;
            self.params[self.layout.var..self.layout.var + n].to_vec()
        } else {
            let args: Vec<Arc<Vec<f64>>> =
                bank.args(t).to_vec().iter().map(|&a| self.embed_term(bank, a, cache)).collect();
            match self.resolve_block(sym) {
                None => vec![0.0; n],
                Some(off) => {
                    cache.block_applications += 1;
                    if sym.arity == 0 {
                        self.params[off..off + n].to_vec()
                    } else {
                        let mut input = Vec::with_capacity(sym.arity * n);
                        for a in &args {
                            input.extend_from_slice(a);
                        }
                        let mut out = self.affine_vec(off, off + sym.arity * n * n, n, &input);
                        self.nonlin(&mut out);
                        out
                    }
                }
            }
        };
        let value = Arc::new(value);
        cache.terms.insert(t, Arc::clone(&value));
        value
    }

    /// Memo-free recomputation; used to check cache transparency.
    pub fn embed_term_fresh(&self, bank: &TermBank, t: TermId) -> Vec<f64> {
        let n = self.layout.n;
        let head = bank.head(t);
        let sym = bank.symbol(head);
        if sym.kind == SymbolKind::Variable {
            return self.params[self.layout.var..self.layout.var + n].to_vec();
        }
        let args: Vec<Vec<f64>> =
            bank.args(t).to_vec().iter().map(|&a| self.embed_term_fresh(bank, a)).collect();
        match self.resolve_block(sym) {
            None => vec![0.0; n],
            Some(off) => {
                if sym.arity == 0 {
                    self.params[off..off + n].to_vec()
                } else {
                    let mut input = Vec::with_capacity(sym.arity * n);
                    for a in &args {
                        input.extend_from_slice(a);
                    }
                    let mut out = self.affine_vec(off, off + sym.arity * n * n, n, &input);
                    self.nonlin(&mut out);
                    out
                }
            }
        }
    }

    pub fn embed_literal(
        &self,
        bank: &TermBank,
        lit: Literal,
        cache: &mut EmbeddingCache,
    ) -> Arc<Vec<f64>> {
        let atom = self.embed_term(bank, lit.atom, cache);
        if lit.positive {
            return atom;
        }
        if let Some(hit) = cache.literals.get(&(false, lit.atom)) {
            return Arc::clone(hit);
        }
        cache.block_applications += 1;
        let mut out = self.affine_vec(self.layout.neg_w, self.layout.neg_b, self.layout.n, &atom);
        self.nonlin(&mut out);
        let out = Arc::new(out);
        cache.literals.insert((false, lit.atom), Arc::clone(&out));
        out
    }

    pub fn embed_literal_fresh(&self, bank: &TermBank, lit: Literal) -> Vec<f64> {
        let atom = self.embed_term_fresh(bank, lit.atom);
        if lit.positive {
            return atom;
        }
        let mut out = self.affine_vec(self.layout.neg_w, self.layout.neg_b, self.layout.n, &atom);
        self.nonlin(&mut out);
        out
    }

    fn lstm(&self, l: &LstmLayout, inputs: &[&[f64]]) -> Vec<f64> {
        let hidden = l.hidden;
        let mut h = vec![0.0; hidden];
        let mut c = vec![0.0; hidden];
        for x in inputs {
            let mut hx = Vec::with_capacity(hidden + x.len());
            hx.extend_from_slice(&h);
            hx.extend_from_slice(x);
            let pre = self.affine_vec(l.w, l.b, 4 * hidden, &hx);
            for k in 0..hidden {
                let i = autodiff::sigmoid(pre[k]);
                let f = autodiff::sigmoid(pre[hidden + k]);
                let o = autodiff::sigmoid(pre[2 * hidden + k]);
                let g = pre[3 * hidden + k].tanh();
                c[k] = f * c[k] + i * g;
                h[k] = o * c[k].tanh();
            }
        }
        self.affine_vec(l.pw, l.pb, l.out, &h)
    }

    pub fn embed_clause(
        &self,
        bank: &TermBank,
        clause: &Clause,
        cache: &mut EmbeddingCache,
    ) -> Arc<Vec<f64>> {
        let key: Box<[Literal]> = clause.literals.clone().into_boxed_slice();
        if let Some(hit) = cache.clauses.get(&key) {
            return Arc::clone(hit);
        }
        let lits: Vec<Arc<Vec<f64>>> =
            clause.literals.iter().map(|&l| self.embed_literal(bank, l, cache)).collect();
        let refs: Vec<&[f64]> = lits.iter().map(|a| a.as_slice()).collect();
        let out = Arc::new(self.lstm(&self.layout.cl, &refs));
        cache.clauses.insert(key, Arc::clone(&out));
        out
    }

    pub fn embed_clause_fresh(&self, bank: &TermBank, clause: &Clause) -> Vec<f64> {
        let lits: Vec<Vec<f64>> =
            clause.literals.iter().map(|&l| self.embed_literal_fresh(bank, l)).collect();
        let refs: Vec<&[f64]> = lits.iter().map(|v| v.as_slice()).collect();
        self.lstm(&self.layout.cl, &refs)
    }

    /// Fold the conjecture clauses (in stored order) into the fixed-size
    /// summary; also remembered in the cache for the rest of the attempt.
    pub fn conjecture_summary(
        &self,
        bank: &TermBank,
        clauses: &[Clause],
        cache: &mut EmbeddingCache,
    ) -> Vec<f64> {
        let embedded: Vec<Arc<Vec<f64>>> =
            clauses.iter().map(|c| self.embed_clause(bank, c, cache)).collect();
        let refs: Vec<&[f64]> = embedded.iter().map(|a| a.as_slice()).collect();
        let out = self.lstm(&self.layout.conj, &refs);
        cache.summary = Some(out.clone());
        out
    }

    /// Classifier scores for a clause embedding joined with the summary.
    pub fn fin(&self, clause_vec: &[f64], summary: &[f64]) -> (f64, f64) {
        let l = &self.layout;
        let mut input = Vec::with_capacity(l.n + l.m);
        input.extend_from_slice(clause_vec);
        input.extend_from_slice(summary);
        let mut h1 = self.affine_vec(l.fin_w1, l.fin_b1, l.n + l.m, &input);
        for x in &mut h1 {
            *x = x.max(0.0);
        }
        let mut h2 = self.affine_vec(l.fin_w2, l.fin_b2, l.half, &h1);
        for x in &mut h2 {
            *x = x.max(0.0);
        }
        let out = self.affine_vec(l.fin_w3, l.fin_b3, 2, &h2);
        (out[0], out[1])
    }

    pub fn score(
        &self,
        bank: &TermBank,
        clause: &Clause,
        summary: &[f64],
        cache: &mut EmbeddingCache,
    ) -> Result<(f64, f64), EvalError> {
        let cv = self.embed_clause(bank, clause, cache);
        let (x0, x1) = self.fin(&cv, summary);
        if !x0.is_finite() || !x1.is_finite() {
            return Err(EvalError::NonFinite { clause: clause.id });
        }
        Ok((x0, x1))
    }

    /// Probability the clause is useful; for reporting, never for ranking.
    pub fn probability(x0: f64, x1: f64) -> f64 {
        autodiff::sigmoid(x1 - x0)
    }

    /// 1.0 iff x0 < x1 (strict), else 10.0.
    pub fn weight_from(x0: f64, x1: f64) -> f64 {
        if x0 < x1 {
            1.0
        } else {
            10.0
        }
    }

    pub fn into_weight_model(self) -> Arc<dyn WeightModel> {
        Arc::new(SharedNeural(Arc::new(self)))
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str("neural-model v1\n");
        out.push_str(&format!("n {}\n", self.config.n));
        out.push_str(&format!("m {}\n", self.config.m));
        out.push_str(&format!("rare-threshold {}\n", self.config.rare_threshold));
        let nl = match self.config.nonlinearity {
            Nonlinearity::Relu6 => "relu6",
            Nonlinearity::Tanh => "tanh",
        };
        out.push_str(&format!("nonlinearity {nl}\n"));
        out.push_str(&format!("order-by-probability {}\n", u8::from(self.config.order_by_probability)));
        out.push_str(&format!("batch-size {}\n", self.config.batch_size));
        out.push_str(&format!("learning-rate {}\n", self.config.learning_rate));
        out.push_str(&format!("epochs {}\n", self.config.epochs));
        out.push_str(&format!(
            "positive-class-weight {}\n",
            opt_to_text(self.config.positive_class_weight)
        ));
        out.push_str(&format!("tpr {}\n", opt_to_text(self.meta.tpr)));
        out.push_str(&format!("tnr {}\n", opt_to_text(self.meta.tnr)));
        out.push_str(&format!("epoch-losses {}", self.meta.epoch_losses.len()));
        for loss in &self.meta.epoch_losses {
            out.push_str(&format!(" {loss}"));
        }
        out.push('\n');
        out.push_str(&format!("blocks {}\n", self.layout.blocks.len()));
        for key in self.layout.blocks.keys() {
            let kind = if key.predicate { "p" } else { "f" };
            match &key.name {
                BlockName::Named(name) => {
                    out.push_str(&format!("block {kind} {} named {name}\n", key.arity))
                }
                BlockName::Skolem => out.push_str(&format!("block {kind} {} skolem\n", key.arity)),
                BlockName::Rare => out.push_str(&format!("block {kind} {} rare\n", key.arity)),
            }
        }
        out.push_str(&format!("params {}\n", self.params.len()));
        for p in &self.params {
            out.push_str(&format!("{p}\n"));
        }
        out.push_str("end\n");
        out
    }

    pub fn from_text(text: &str) -> Result<NeuralModel, ModelFileError> {
        let mut lines = text.lines().enumerate();
        expect_line(&mut lines, "neural-model v1")?;
        let n: usize = parse_field(&mut lines, "n")?;
        let m: usize = parse_field(&mut lines, "m")?;
        let rare_threshold: u64 = parse_field(&mut lines, "rare-threshold")?;
        let nonlinearity = match field_text(&mut lines, "nonlinearity")? {
            "relu6" => Nonlinearity::Relu6,
            "tanh" => Nonlinearity::Tanh,
            other => {
                return Err(ModelFileError::Inconsistent { what: format!("nonlinearity {other}") })
            }
        };
        let order_by_probability = parse_field::<u8>(&mut lines, "order-by-probability")? != 0;
        let batch_size: usize = parse_field(&mut lines, "batch-size")?;
        let learning_rate: f64 = parse_field(&mut lines, "learning-rate")?;
        let epochs: u32 = parse_field(&mut lines, "epochs")?;
        let positive_class_weight = parse_opt_field(&mut lines, "positive-class-weight")?;
        let tpr = parse_opt_field(&mut lines, "tpr")?;
        let tnr = parse_opt_field(&mut lines, "tnr")?;
        let losses_text = field_text(&mut lines, "epoch-losses")?;
        let mut parts = losses_text.split_whitespace();
        let loss_count: usize = parts
            .next()
            .and_then(|w| w.parse().ok())
            .ok_or_else(|| ModelFileError::Inconsistent { what: "epoch-losses header".into() })?;
        let epoch_losses: Vec<f64> =
            parts.map(|w| w.parse()).collect::<Result<_, _>>().map_err(|_| {
                ModelFileError::Inconsistent { what: "epoch-losses values".into() }
            })?;
        if epoch_losses.len() != loss_count {
            return Err(ModelFileError::Inconsistent { what: "epoch-losses count".into() });
        }
        let block_count: usize = parse_field(&mut lines, "blocks")?;
        let mut keys = BTreeSet::new();
        for _ in 0..block_count {
            let (lineno, line) = lines.next().ok_or(ModelFileError::Truncated)?;
            let bad = || ModelFileError::bad(lineno, line);
            let rest = line.strip_prefix("block ").ok_or_else(bad)?;
            let mut fields = rest.splitn(4, ' ');
            let predicate = match fields.next() {
                Some("p") => true,
                Some("f") => false,
                _ => return Err(bad()),
            };
            let arity: usize = fields.next().ok_or_else(bad)?.parse().map_err(|_| bad())?;
            let name = match fields.next() {
                Some("named") => BlockName::Named(fields.next().ok_or_else(bad)?.to_string()),
                Some("skolem") => BlockName::Skolem,
                Some("rare") => BlockName::Rare,
                _ => return Err(bad()),
            };
            keys.insert(BlockKey { predicate, arity, name });
        }
        if keys.len() != block_count {
            return Err(ModelFileError::Inconsistent { what: "duplicate blocks".into() });
        }
        let param_count: usize = parse_field(&mut lines, "params")?;
        let mut params = Vec::with_capacity(param_count);
        for _ in 0..param_count {
            let (lineno, line) = lines.next().ok_or(ModelFileError::Truncated)?;
            params.push(line.trim().parse().map_err(|_| ModelFileError::bad(lineno, line))?);
        }
        expect_line(&mut lines, "end")?;
        let config = NeuralConfig {
            n,
            m,
            rare_threshold,
            nonlinearity,
            batch_size,
            learning_rate,
            epochs,
            positive_class_weight,
            order_by_probability,
        };
        config.validate().map_err(|e| ModelFileError::Inconsistent { what: e.to_string() })?;
        let layout = Layout::build(n, m, &keys);
        if layout.total != params.len() {
            return Err(ModelFileError::Inconsistent {
                what: format!("expected {} parameters, file has {}", layout.total, params.len()),
            });
        }
        Ok(NeuralModel {
            config,
            layout,
            params,
            meta: NeuralMeta { epoch_losses, tpr, tnr },
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), ModelFileError> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        f.write_all(self.to_text().as_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<NeuralModel, ModelFileError> {
        let mut text = String::new();
        std::io::BufReader::new(std::fs::File::open(path)?).read_to_string(&mut text)?;
        NeuralModel::from_text(&text)
    }
}

/// Counts of symbol occurrences over a set of clauses, grouped by block
/// counting key (Skolems already collapsed per arity).
pub fn count_symbols(bank: &TermBank, clauses: &[&Clause]) -> BTreeMap<BlockKey, u64> {
    let mut counts = BTreeMap::new();
    fn walk(bank: &TermBank, t: TermId, counts: &mut BTreeMap<BlockKey, u64>) {
        let sym = bank.symbol(bank.head(t));
        if let Some(key) = BlockKey::for_symbol(sym) {
            *counts.entry(key).or_insert(0) += 1;
        }
        for &a in bank.args(t) {
            walk(bank, a, counts);
        }
    }
    for clause in clauses {
        for lit in &clause.literals {
            walk(bank, lit.atom, &mut counts);
        }
    }
    counts
}

/// Block keys for a model: symbols at or above the threshold keep their own
/// block, the rest are folded into one rare block per (kind, arity).
pub fn vocabulary(counts: &BTreeMap<BlockKey, u64>, rare_threshold: u64) -> BTreeSet<BlockKey> {
    let mut keys = BTreeSet::new();
    for (key, &count) in counts {
        if count >= rare_threshold {
            keys.insert(key.clone());
        } else {
            keys.insert(key.rare_of());
        }
    }
    keys
}

struct SharedNeural(Arc<NeuralModel>);

impl WeightModel for SharedNeural {
    fn model_name(&self) -> &str {
        "neural"
    }

    fn evaluator(&self) -> Box<dyn ClauseEvaluator> {
        Box::new(NeuralEvaluator {
            model: Arc::clone(&self.0),
            cache: EmbeddingCache::new(),
            summary: Vec::new(),
        })
    }
}

struct NeuralEvaluator {
    model: Arc<NeuralModel>,
    cache: EmbeddingCache,
    summary: Vec<f64>,
}

impl ClauseEvaluator for NeuralEvaluator {
    fn begin_problem(&mut self, problem: &Problem, bank: &TermBank) {
        self.cache = EmbeddingCache::new();
        self.summary = self.model.conjecture_summary(bank, &problem.conjecture, &mut self.cache);
    }

    fn weight(&mut self, clause: &Clause, bank: &TermBank) -> Result<f64, EvalError> {
        let (x0, x1) = self.model.score(bank, clause, &self.summary, &mut self.cache)?;
        if self.model.config.order_by_probability {
            // Lower weight = preferred: invert the probability.
            Ok(1.0 - NeuralModel::probability(x0, x1))
        } else {
            Ok(NeuralModel::weight_from(x0, x1))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::termbank::{parse_clause_body, Origin, Role};

    fn model_for(bank: &TermBank, clauses: &[&Clause], n: usize, m: usize) -> NeuralModel {
        let counts = count_symbols(bank, clauses);
        let vocab = vocabulary(&counts, 1);
        let config = NeuralConfig { n, m, ..Default::default() };
        NeuralModel::init(config, &vocab, 42).unwrap()
    }

    fn input(bank: &mut TermBank, text: &str) -> Clause {
        parse_clause_body(text, Role::Axiom, bank).unwrap()
    }

    #[test]
    fn config_validation_rejects_bad_dims() {
        let bad = NeuralConfig { n: 4, m: 8, ..Default::default() };
        assert_eq!(bad.validate(), Err(ConfigError::BadDims { n: 4, m: 8 }));
        let ok = NeuralConfig { n: 8, m: 8, ..Default::default() };
        assert!(ok.validate().is_ok());
    }

    #[test]
    fn init_is_seed_deterministic_and_bounded() {
        let vocab = BTreeSet::new();
        let config = NeuralConfig { n: 8, m: 4, ..Default::default() };
        let a = NeuralModel::init(config, &vocab, 7).unwrap();
        let b = NeuralModel::init(config, &vocab, 7).unwrap();
        let c = NeuralModel::init(config, &vocab, 8).unwrap();
        assert_eq!(a.params, b.params);
        assert_ne!(a.params, c.params);
        let bound = 1.0 / (8f64).sqrt();
        assert!(a.params.iter().all(|p| p.abs() <= bound));
    }

    #[test]
    fn empty_clause_embeds_to_projection_of_zero_state() {
        let mut bank = TermBank::new();
        let clause = bank.new_clause(vec![], Origin::Input { role: Role::Axiom });
        let model = model_for(&bank, &[], 8, 4);
        let mut cache = EmbeddingCache::new();
        let v = model.embed_clause(&bank, &clause, &mut cache);
        let pb = model.layout.cl.pb;
        assert_eq!(v.as_slice(), &model.params[pb..pb + 8]);
    }

    #[test]
    fn empty_conjecture_summary_is_projection_of_zero_state() {
        let bank = TermBank::new();
        let model = model_for(&bank, &[], 8, 4);
        let mut cache = EmbeddingCache::new();
        let s = model.conjecture_summary(&bank, &[], &mut cache);
        let pb = model.layout.conj.pb;
        assert_eq!(s.as_slice(), &model.params[pb..pb + 4]);
        assert_eq!(cache.summary, Some(s));
    }

    #[test]
    fn all_variables_share_one_embedding() {
        let mut bank = TermBank::new();
        let x0 = bank.canonical_variable(0);
        let x5 = bank.canonical_variable(5);
        let tx0 = bank.var_term(x0);
        let tx5 = bank.var_term(x5);
        let model = model_for(&bank, &[], 8, 4);
        let mut cache = EmbeddingCache::new();
        let a = model.embed_term(&bank, tx0, &mut cache);
        let b = model.embed_term(&bank, tx5, &mut cache);
        assert_eq!(a.as_slice(), b.as_slice());
    }

    #[test]
    fn cached_reembedding_applies_no_blocks() {
        let mut bank = TermBank::new();
        let clause = input(&mut bank, "p(f(a,b))");
        let inner = bank.args(clause.literals[0].atom)[0];
        let model = model_for(&bank, &[&clause], 8, 4);
        let mut cache = EmbeddingCache::new();
        let first = model.embed_term(&bank, inner, &mut cache);
        // a, b, then f itself.
        assert_eq!(cache.block_applications, 3);
        let second = model.embed_term(&bank, inner, &mut cache);
        assert_eq!(cache.block_applications, 3);
        assert_eq!(first.as_slice(), second.as_slice());
        // A new parent over a cached child costs exactly one application.
        let g = bank.function("g", 1).unwrap();
        let wrapped = bank.intern(g, &[inner]).unwrap();
        // g needs a block; rebuild the vocabulary including it.
        let p = bank.predicate("p", 1).unwrap();
        let wrapped_atom = bank.intern(p, &[wrapped]).unwrap();
        let gc = bank.new_clause(
            vec![Literal::new(true, wrapped_atom)],
            Origin::Input { role: Role::Axiom },
        );
        let model2 = model_for(&bank, &[&clause, &gc], 8, 4);
        let mut cache2 = EmbeddingCache::new();
        model2.embed_term(&bank, inner, &mut cache2);
        let before = cache2.block_applications;
        model2.embed_term(&bank, wrapped, &mut cache2);
        assert_eq!(cache2.block_applications, before + 1);
    }

    #[test]
    fn cache_is_transparent() {
        let mut bank = TermBank::new();
        let clauses = [
            input(&mut bank, "p(f(a,b)) | ~q(g(a))"),
            input(&mut bank, "~p(f(b,a)) | q(X)"),
            input(&mut bank, "r(f(f(a,a),g(b)))"),
        ];
        let refs: Vec<&Clause> = clauses.iter().collect();
        let model = model_for(&bank, &refs, 8, 4);
        let mut cache = EmbeddingCache::new();
        for clause in &clauses {
            let cached = model.embed_clause(&bank, clause, &mut cache);
            let fresh = model.embed_clause_fresh(&bank, clause);
            assert_eq!(cached.as_slice(), fresh.as_slice());
            // Second pass through a warm cache: still identical.
            let again = model.embed_clause(&bank, clause, &mut cache);
            assert_eq!(again.as_slice(), fresh.as_slice());
        }
    }

    #[test]
    fn weight_uses_strict_inequality() {
        assert_eq!(NeuralModel::weight_from(0.0, 0.0), 10.0);
        assert_eq!(NeuralModel::probability(0.0, 0.0), 0.5);
        assert_eq!(NeuralModel::weight_from(0.3, 0.31), 1.0);
        assert_eq!(NeuralModel::weight_from(0.31, 0.3), 10.0);
        // weight == 1.0 exactly when p > 0.5.
        for (x0, x1) in [(0.0, 1.0), (1.0, 0.0), (-2.0, -2.0), (5.0, -5.0)] {
            let w = NeuralModel::weight_from(x0, x1);
            let p = NeuralModel::probability(x0, x1);
            assert_eq!(w == 1.0, p > 0.5, "x0={x0} x1={x1}");
        }
    }

    #[test]
    fn unseen_signature_embeds_to_zero_vector() {
        let mut bank = TermBank::new();
        let clause = input(&mut bank, "p(a)");
        // Vocabulary built from nothing: p and a have no blocks.
        let model = model_for(&bank, &[], 8, 4);
        let mut cache = EmbeddingCache::new();
        let v = model.embed_term(&bank, clause.literals[0].atom, &mut cache);
        assert_eq!(v.as_slice(), &[0.0; 8]);
        assert_eq!(cache.block_applications, 0);
    }

    #[test]
    fn rare_symbols_share_a_block() {
        let mut bank = TermBank::new();
        let pa = input(&mut bank, "p(a)");
        let qa = input(&mut bank, "q(a)");
        let counts = count_symbols(&bank, &[&pa, &qa]);
        // Threshold above every count: p and q collapse to the same rare
        // block, so the two atoms embed identically.
        let vocab = vocabulary(&counts, 100);
        assert!(vocab
            .iter()
            .all(|k| matches!(k.name, BlockName::Rare)));
        let config = NeuralConfig { n: 8, m: 4, ..Default::default() };
        let model = NeuralModel::init(config, &vocab, 3).unwrap();
        let mut cache = EmbeddingCache::new();
        let a = model.embed_term(&bank, pa.literals[0].atom, &mut cache);
        let b = model.embed_term(&bank, qa.literals[0].atom, &mut cache);
        assert_eq!(a.as_slice(), b.as_slice());
    }

    #[test]
    fn skolems_collapse_per_arity() {
        let mut bank = TermBank::new();
        let c1 = input(&mut bank, "p(sk1(a))");
        let c2 = input(&mut bank, "p(sk2(a))");
        let counts = count_symbols(&bank, &[&c1, &c2]);
        let skolem_keys: Vec<_> = counts
            .keys()
            .filter(|k| k.name == BlockName::Skolem)
            .collect();
        assert_eq!(skolem_keys.len(), 1);
        let model = {
            let vocab = vocabulary(&counts, 1);
            NeuralModel::init(NeuralConfig { n: 8, m: 4, ..Default::default() }, &vocab, 5).unwrap()
        };
        let mut cache = EmbeddingCache::new();
        let a = model.embed_term(&bank, c1.literals[0].atom, &mut cache);
        let b = model.embed_term(&bank, c2.literals[0].atom, &mut cache);
        assert_eq!(a.as_slice(), b.as_slice());
    }

    #[test]
    fn non_finite_activation_is_an_error() {
        let mut bank = TermBank::new();
        let clause = input(&mut bank, "p(a)");
        let mut model = model_for(&bank, &[&clause], 8, 4);
        let at = model.layout.fin_b3;
        model.params[at] = f64::NAN;
        let mut cache = EmbeddingCache::new();
        let summary = model.conjecture_summary(&bank, &[], &mut cache);
        let err = model.score(&bank, &clause, &summary, &mut cache).unwrap_err();
        assert!(matches!(err, EvalError::NonFinite { .. }));
    }

    #[test]
    fn model_file_round_trips_bitwise() {
        let mut bank = TermBank::new();
        let clauses = [input(&mut bank, "p(f(a,b)) | ~q(a)"), input(&mut bank, "q(sk1(X))")];
        let refs: Vec<&Clause> = clauses.iter().collect();
        let mut model = model_for(&bank, &refs, 8, 4);
        model.meta.epoch_losses = vec![0.7, 0.5];
        model.meta.tpr = Some(0.9);
        let text = model.to_text();
        let back = NeuralModel::from_text(&text).unwrap();
        assert_eq!(back.params, model.params);
        assert_eq!(back.config, model.config);
        assert_eq!(back.meta, model.meta);
        assert_eq!(back.layout, model.layout);
        let mut c1 = EmbeddingCache::new();
        let mut c2 = EmbeddingCache::new();
        let s1 = model.conjecture_summary(&bank, std::slice::from_ref(&clauses[1]), &mut c1);
        let s2 = back.conjecture_summary(&bank, std::slice::from_ref(&clauses[1]), &mut c2);
        assert_eq!(s1, s2);
        assert_eq!(
            model.score(&bank, &clauses[0], &s1, &mut c1).unwrap(),
            back.score(&bank, &clauses[0], &s2, &mut c2).unwrap()
        );
    }

    #[test]
    fn order_by_probability_variant_returns_inverted_probability() {
        let mut bank = TermBank::new();
        let clause = input(&mut bank, "p(a)");
        let mut model = model_for(&bank, &[&clause], 8, 4);
        model.config.order_by_probability = true;
        let shared = model.into_weight_model();
        let mut eval = shared.evaluator();
        let problem =
            Problem { name: "t".into(), axioms: vec![clause.clone()], conjecture: vec![] };
        eval.begin_problem(&problem, &bank);
        let w = eval.weight(&clause, &bank).unwrap();
        assert!(w > 0.0 && w < 1.0, "inverted probability, got {w}");
    }
}
