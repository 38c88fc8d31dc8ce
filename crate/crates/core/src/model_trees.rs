//! Gradient-boosted decision trees over sparse feature vectors.
//!
//! Boosting is Newton-style on the logistic loss: each round fits a
//! depth-limited regression tree to the per-example gradient/curvature at
//! the current ensemble margin, with positive examples' contributions scaled
//! to rebalance the classes. Splits are exact greedy over the feature values
//! present in a node; absent features are routed by a per-node default
//! direction, itself chosen by gain.

use crate::features::{FeatureBag, FeatureSpace, FeatureVector, Featurizer};
use crate::model_linear::{
    classification_rates, expect_line, opt_to_text, parse_field, parse_opt_field, read_space,
    write_space, ModelFileError, TrainError,
};
use crate::prover::{ClauseEvaluator, EvalError, WeightModel};
use crate::termbank::{Clause, Problem, TermBank};
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default, rename_all = "camelCase")]
pub struct TreeParams {
    pub num_trees: u32,
    pub max_depth: u32,
    pub learning_rate: f64,
    /// L2 regularization on leaf values.
    pub lambda: f64,
    /// Minimum gain required to split.
    pub gamma: f64,
    /// Multiplier on positive examples' gradient/curvature;
    /// None = #negatives / #positives.
    pub positive_scale: Option<f64>,
}

impl Default for TreeParams {
    fn default() -> Self {
        TreeParams {
            num_trees: 200,
            max_depth: 9,
            learning_rate: 0.3,
            lambda: 1.0,
            gamma: 0.0,
            positive_scale: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Leaf {
        value: f64,
    },
    Split {
        feature: u32,
        threshold: f64,
        /// Where examples without this feature go.
        default_left: bool,
        left: u32,
        right: u32,
    },
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    /// Leaf value reached by `v`; absent features follow the node default.
    pub fn eval(&self, v: &FeatureVector) -> f64 {
        let mut at = 0usize;
        loop {
            match &self.nodes[at] {
                Node::Leaf { value } => return *value,
                Node::Split { feature, threshold, default_left, left, right } => {
                    let go_left = match lookup(v, *feature) {
                        Some(x) => (x as f64) < *threshold,
                        None => *default_left,
                    };
                    at = if go_left { *left as usize } else { *right as usize };
                }
            }
        }
    }

    pub fn split_count(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Split { .. })).count()
    }
}

fn lookup(v: &FeatureVector, feature: u32) -> Option<u64> {
    match v.entries.binary_search_by_key(&feature, |&(i, _)| i) {
        Ok(pos) => Some(v.entries[pos].1),
        Err(_) => None,
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TreeMeta {
    /// Rates on the training data at the 0.5 probability threshold.
    pub tpr: Option<f64>,
    pub tnr: Option<f64>,
    pub positive_scale: f64,
}

#[derive(Debug, Clone)]
pub struct TreeEnsemble {
    pub space: FeatureSpace,
    pub trees: Vec<Tree>,
    pub meta: TreeMeta,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl TreeEnsemble {
    /// Sum of leaf values across trees (the raw additive margin).
    pub fn margin(&self, v: &FeatureVector) -> f64 {
        self.trees.iter().map(|t| t.eval(v)).sum()
    }

    /// Probability that `v` is a positive example.
    pub fn probability(&self, v: &FeatureVector) -> f64 {
        sigmoid(self.margin(v))
    }

    /// Positive iff probability >= 0.5 (inclusive).
    pub fn classify(&self, v: &FeatureVector) -> bool {
        self.probability(v) >= 0.5
    }

    pub fn weight_of(&self, v: &FeatureVector) -> f64 {
        if self.classify(v) {
            1.0
        } else {
            10.0
        }
    }

    pub fn total_nodes(&self) -> usize {
        self.trees.iter().map(|t| t.nodes.len()).sum()
    }

    pub fn total_splits(&self) -> usize {
        self.trees.iter().map(|t| t.split_count()).sum()
    }

    /// Decision-node counts per feature index, descending, ties by index.
    pub fn feature_usage(&self) -> Vec<(u32, u64)> {
        let mut counts: std::collections::BTreeMap<u32, u64> = std::collections::BTreeMap::new();
        for tree in &self.trees {
            for node in &tree.nodes {
                if let Node::Split { feature, .. } = node {
                    *counts.entry(*feature).or_insert(0) += 1;
                }
            }
        }
        let mut usage: Vec<(u32, u64)> = counts.into_iter().collect();
        usage.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        usage
    }

    /// Usage with feature indices described through the space: indexed
    /// spaces recover the key text (conjecture-side keys get the wrapper
    /// prefix), hashed spaces can only name the bucket.
    pub fn feature_usage_named(&self) -> Vec<(String, u64)> {
        let side = self.space.side_dimension() as u32;
        self.feature_usage()
            .into_iter()
            .map(|(index, count)| {
                let name = match &self.space {
                    FeatureSpace::Indexed(s) => {
                        let (half, conj) = if index < side { (index, false) } else { (index - side, true) };
                        let text = s
                            .keys()
                            .find(|&(_, i)| i == half)
                            .map(|(k, _)| k.serialize())
                            .unwrap_or_else(|| "<overflow>".to_string());
                        if conj {
                            format!("g|{text}")
                        } else {
                            text
                        }
                    }
                    FeatureSpace::Hashed(_) => format!("bucket#{index}"),
                };
                (name, count)
            })
            .collect()
    }

    pub fn into_weight_model(self) -> Arc<dyn WeightModel> {
        Arc::new(SharedTrees(Arc::new(self)))
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str("tree-model v1\n");
        out.push_str(&format!("trees {}\n", self.trees.len()));
        out.push_str(&format!("tpr {}\n", opt_to_text(self.meta.tpr)));
        out.push_str(&format!("tnr {}\n", opt_to_text(self.meta.tnr)));
        out.push_str(&format!("scale {}\n", self.meta.positive_scale));
        write_space(&mut out, &self.space);
        for tree in &self.trees {
            out.push_str("tree\n");
            write_node(&mut out, tree, 0);
        }
        out.push_str("end\n");
        out
    }

    pub fn from_text(text: &str) -> Result<TreeEnsemble, ModelFileError> {
        let mut lines = text.lines().enumerate();
        expect_line(&mut lines, "tree-model v1")?;
        let count: usize = parse_field(&mut lines, "trees")?;
        let tpr = parse_opt_field(&mut lines, "tpr")?;
        let tnr = parse_opt_field(&mut lines, "tnr")?;
        let positive_scale: f64 = parse_field(&mut lines, "scale")?;
        let space = read_space(&mut lines)?;
        let dim = space.dimension() as u32;
        let mut trees = Vec::with_capacity(count);
        for _ in 0..count {
            expect_line(&mut lines, "tree")?;
            let mut nodes = Vec::new();
            read_node(&mut lines, &mut nodes, dim)?;
            trees.push(Tree { nodes });
        }
        expect_line(&mut lines, "end")?;
        Ok(TreeEnsemble { space, trees, meta: TreeMeta { tpr, tnr, positive_scale } })
    }

    pub fn save(&self, path: &Path) -> Result<(), ModelFileError> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        f.write_all(self.to_text().as_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<TreeEnsemble, ModelFileError> {
        let mut text = String::new();
        std::io::BufReader::new(std::fs::File::open(path)?).read_to_string(&mut text)?;
        TreeEnsemble::from_text(&text)
    }
}

/// Preorder: a split line is followed by its left then right subtree.
fn write_node(out: &mut String, tree: &Tree, at: usize) {
    match &tree.nodes[at] {
        Node::Leaf { value } => out.push_str(&format!("l {value}\n")),
        Node::Split { feature, threshold, default_left, left, right } => {
            out.push_str(&format!(
                "s {feature} {threshold} {}\n",
                if *default_left { "L" } else { "R" }
            ));
            write_node(out, tree, *left as usize);
            write_node(out, tree, *right as usize);
        }
    }
}

type Lines<'a> = std::iter::Enumerate<std::str::Lines<'a>>;

fn read_node(lines: &mut Lines, nodes: &mut Vec<Node>, dim: u32) -> Result<u32, ModelFileError> {
    let (lineno, line) = lines.next().ok_or(ModelFileError::Truncated)?;
    let bad = || ModelFileError::Parse { line: lineno + 1, text: line.to_string() };
    let mut parts = line.split_whitespace();
    match parts.next() {
        Some("l") => {
            let value: f64 = parts.next().ok_or_else(bad)?.parse().map_err(|_| bad())?;
            let at = nodes.len() as u32;
            nodes.push(Node::Leaf { value });
            Ok(at)
        }
        Some("s") => {
            let feature: u32 = parts.next().ok_or_else(bad)?.parse().map_err(|_| bad())?;
            if feature >= dim {
                return Err(bad());
            }
            let threshold: f64 = parts.next().ok_or_else(bad)?.parse().map_err(|_| bad())?;
            let default_left = match parts.next() {
                Some("L") => true,
                Some("R") => false,
                _ => return Err(bad()),
            };
            let at = nodes.len() as u32;
            nodes.push(Node::Split { feature, threshold, default_left, left: 0, right: 0 });
            let left = read_node(lines, nodes, dim)?;
            let right = read_node(lines, nodes, dim)?;
            match &mut nodes[at as usize] {
                Node::Split { left: l, right: r, .. } => {
                    *l = left;
                    *r = right;
                }
                Node::Leaf { .. } => unreachable!(),
            }
            Ok(at)
        }
        _ => Err(bad()),
    }
}

/// Minimum gain improvement for one split candidate to beat another; keeps
/// the greedy argmax deterministic under floating-point summation noise.
const GAIN_EPS: f64 = 1e-12;

struct Grower<'a> {
    data: &'a [(FeatureVector, bool)],
    grad: &'a [f64],
    hess: &'a [f64],
    params: &'a TreeParams,
}

struct SplitChoice {
    feature: u32,
    threshold: f64,
    default_left: bool,
    gain: f64,
}

impl<'a> Grower<'a> {
    fn grow(&self, nodes: &mut Vec<Node>, idxs: &[usize], depth: u32) -> u32 {
        let g: f64 = idxs.iter().map(|&i| self.grad[i]).sum();
        let h: f64 = idxs.iter().map(|&i| self.hess[i]).sum();
        let make_leaf = |nodes: &mut Vec<Node>| {
            let at = nodes.len() as u32;
            let value = -g / (h + self.params.lambda) * self.params.learning_rate;
            nodes.push(Node::Leaf { value });
            at
        };
        if depth >= self.params.max_depth || idxs.len() < 2 {
            return make_leaf(nodes);
        }
        let Some(choice) = self.best_split(idxs, g, h) else {
            return make_leaf(nodes);
        };
        let mut left_idxs = Vec::new();
        let mut right_idxs = Vec::new();
        for &i in idxs {
            let go_left = match lookup(&self.data[i].0, choice.feature) {
                Some(x) => (x as f64) < choice.threshold,
                None => choice.default_left,
            };
            if go_left {
                left_idxs.push(i);
            } else {
                right_idxs.push(i);
            }
        }
        debug_assert!(!left_idxs.is_empty() && !right_idxs.is_empty());
        let at = nodes.len() as u32;
        nodes.push(Node::Split {
            feature: choice.feature,
            threshold: choice.threshold,
            default_left: choice.default_left,
            left: 0,
            right: 0,
        });
        let left = self.grow(nodes, &left_idxs, depth + 1);
        let right = self.grow(nodes, &right_idxs, depth + 1);
        match &mut nodes[at as usize] {
            Node::Split { left: l, right: r, .. } => {
                *l = left;
                *r = right;
            }
            Node::Leaf { .. } => unreachable!(),
        }
        at
    }

    /// Exact greedy search over the features present in this node.
    /// Candidate thresholds per feature: the smallest present value (all
    /// present examples go right, separating them from absent ones) and the
    /// midpoints between consecutive distinct values. Both default
    /// directions are tried. A later candidate replaces the incumbent only
    /// when its gain is larger by more than `GAIN_EPS`, so mathematical
    /// ties resolve to the earliest candidate (features ascending,
    /// thresholds ascending, default-left first) no matter how summation
    /// rounding falls.
    fn best_split(&self, idxs: &[usize], g_total: f64, h_total: f64) -> Option<SplitChoice> {
        let lambda = self.params.lambda;
        let parent = g_total * g_total / (h_total + lambda);
        let mut by_feature: std::collections::BTreeMap<u32, Vec<(u64, usize)>> =
            std::collections::BTreeMap::new();
        for &i in idxs {
            for &(f, value) in &self.data[i].0.entries {
                by_feature.entry(f).or_default().push((value, i));
            }
        }
        let mut best: Option<SplitChoice> = None;
        for (feature, mut present) in by_feature {
            present.sort_unstable();
            let g_present: f64 = present.iter().map(|&(_, i)| self.grad[i]).sum();
            let h_present: f64 = present.iter().map(|&(_, i)| self.hess[i]).sum();
            let g_miss = g_total - g_present;
            let h_miss = h_total - h_present;
            let any_missing = present.len() < idxs.len();
            // Walk the distinct-value boundaries left to right, keeping
            // prefix sums of the present examples.
            let mut gl_present = 0.0;
            let mut hl_present = 0.0;
            let mut nl_present = 0usize;
            let mut at = 0usize;
            while at < present.len() {
                let value = present[at].0;
                let threshold = if at == 0 {
                    value as f64
                } else {
                    (present[at - 1].0 as f64 + value as f64) / 2.0
                };
                for &default_left in &[true, false] {
                    if default_left && !any_missing && at == 0 {
                        continue; // empty left child
                    }
                    if at == 0 && !default_left {
                        continue; // everything right: not a split
                    }
                    let (gl, hl, left_n) = if default_left {
                        (gl_present + g_miss, hl_present + h_miss, nl_present + (idxs.len() - present.len()))
                    } else {
                        (gl_present, hl_present, nl_present)
                    };
                    if left_n == 0 || left_n == idxs.len() {
                        continue;
                    }
                    let gr = g_total - gl;
                    let hr = h_total - hl;
                    let gain =
                        0.5 * (gl * gl / (hl + lambda) + gr * gr / (hr + lambda) - parent)
                            - self.params.gamma;
                    if gain > best.as_ref().map_or(0.0, |b| b.gain) + GAIN_EPS {
                        best = Some(SplitChoice { feature, threshold, default_left, gain });
                    }
                }
                // Consume the whole group of equal values.
                while at < present.len() && present[at].0 == value {
                    let i = present[at].1;
                    gl_present += self.grad[i];
                    hl_present += self.hess[i];
                    nl_present += 1;
                    at += 1;
                }
            }
        }
        best
    }
}

/// Weighted logistic training loss of an ensemble (the boosting objective).
pub fn ensemble_loss(
    ensemble: &TreeEnsemble,
    data: &[(FeatureVector, bool)],
    positive_scale: f64,
) -> f64 {
    data.iter()
        .map(|(v, positive)| {
            let margin = ensemble.margin(v);
            let y = if *positive { 1.0 } else { -1.0 };
            let scale = if *positive { positive_scale } else { 1.0 };
            // softplus(-y * margin)
            scale * ((-y * margin).max(0.0) + (-(y * margin).abs()).exp().ln_1p())
        })
        .sum()
}

/// Per-example gradient and curvature of the scaled logistic loss at the
/// given margins. Exposed for derivative verification.
pub fn gradient_at(
    margins: &[f64],
    data: &[(FeatureVector, bool)],
    positive_scale: f64,
) -> (Vec<f64>, Vec<f64>) {
    let mut grad = Vec::with_capacity(data.len());
    let mut hess = Vec::with_capacity(data.len());
    for ((_, positive), &margin) in data.iter().zip(margins) {
        let p = sigmoid(margin);
        let y = if *positive { 1.0 } else { 0.0 };
        let scale = if *positive { positive_scale } else { 1.0 };
        grad.push(scale * (p - y));
        hess.push(scale * p * (1.0 - p));
    }
    (grad, hess)
}

pub fn train_trees(
    space: FeatureSpace,
    data: &[(FeatureVector, bool)],
    params: &TreeParams,
) -> Result<TreeEnsemble, TrainError> {
    if data.is_empty() {
        return Err(TrainError::Empty);
    }
    let expected = space.dimension();
    for (v, _) in data {
        if v.dimension != expected {
            return Err(TrainError::DimensionMismatch { expected, found: v.dimension });
        }
    }
    let n_pos = data.iter().filter(|(_, p)| *p).count();
    if n_pos == 0 {
        return Err(TrainError::SingleLabel("negative"));
    }
    if n_pos == data.len() {
        return Err(TrainError::SingleLabel("positive"));
    }
    let positive_scale = params
        .positive_scale
        .unwrap_or((data.len() - n_pos) as f64 / n_pos as f64);
    let mut margins = vec![0.0; data.len()];
    let mut trees = Vec::new();
    for _ in 0..params.num_trees {
        let (grad, hess) = gradient_at(&margins, data, positive_scale);
        if grad.iter().map(|g| g.abs()).sum::<f64>() < 1e-12 {
            break;
        }
        let grower = Grower { data, grad: &grad, hess: &hess, params };
        let mut nodes = Vec::new();
        let idxs: Vec<usize> = (0..data.len()).collect();
        grower.grow(&mut nodes, &idxs, 0);
        let tree = Tree { nodes };
        for (margin, (v, _)) in margins.iter_mut().zip(data) {
            *margin += tree.eval(v);
        }
        trees.push(tree);
    }
    let ensemble = TreeEnsemble {
        space,
        trees,
        meta: TreeMeta { tpr: None, tnr: None, positive_scale },
    };
    let (tpr, tnr) = classification_rates(|v| ensemble.classify(v), data);
    Ok(TreeEnsemble {
        meta: TreeMeta { tpr, tnr, positive_scale },
        ..ensemble
    })
}

struct SharedTrees(Arc<TreeEnsemble>);

impl WeightModel for SharedTrees {
    fn model_name(&self) -> &str {
        "trees"
    }

    fn evaluator(&self) -> Box<dyn ClauseEvaluator> {
        Box::new(TreeEvaluator {
            model: Arc::clone(&self.0),
            featurizer: Featurizer::new(),
            conjecture: FeatureBag::new(),
        })
    }
}

struct TreeEvaluator {
    model: Arc<TreeEnsemble>,
    featurizer: Featurizer,
    conjecture: FeatureBag,
}

impl ClauseEvaluator for TreeEvaluator {
    fn begin_problem(&mut self, problem: &Problem, bank: &TermBank) {
        self.conjecture = self.featurizer.conjecture_bag(bank, &problem.conjecture);
    }

    fn weight(&mut self, clause: &Clause, bank: &TermBank) -> Result<f64, EvalError> {
        let bag = self.featurizer.clause_bag(bank, clause);
        let v = self.model.space.vectorize(&bag, &self.conjecture);
        Ok(self.model.weight_of(&v))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{FeatureKey, IndexedSpace, Token};

    fn toy_space(n: u32) -> FeatureSpace {
        FeatureSpace::Indexed(IndexedSpace::from_keys(
            (0..n.saturating_sub(1)).map(|i| FeatureKey::SymbolCount(Token::from(format!("s{i}").as_str()))),
        ))
    }

    fn vector(space: &FeatureSpace, entries: &[(u32, u64)]) -> FeatureVector {
        FeatureVector { dimension: space.dimension(), entries: entries.to_vec() }
    }

    #[test]
    fn separating_feature_is_found_in_round_one() {
        let space = toy_space(4);
        let mut data = Vec::new();
        for i in 0..8u64 {
            // Feature 1 separates perfectly; feature 0 is noise.
            data.push((vector(&space, &[(0, 1 + i % 3), (1, 5)]), true));
            data.push((vector(&space, &[(0, 1 + (i + 1) % 3)]), false));
        }
        let params = TreeParams { num_trees: 3, max_depth: 3, ..Default::default() };
        let model = train_trees(space, &data, &params).unwrap();
        match &model.trees[0].nodes[0] {
            Node::Split { feature, .. } => assert_eq!(*feature, 1),
            Node::Leaf { .. } => panic!("round-1 tree did not split"),
        }
        for (v, positive) in &data {
            assert_eq!(model.classify(v), *positive);
        }
        assert_eq!(model.meta.tpr, Some(1.0));
        assert_eq!(model.meta.tnr, Some(1.0));
    }

    /// Single leaf, 1 positive + 3 negatives, all margins start at 0 so
    /// p = 1/2 everywhere: G = -s/2 + 3/2, H = s/4 + 3/4.
    #[test]
    fn single_leaf_closed_form_balanced_scale() {
        // s = #neg/#pos = 3 makes G = 0, so the leaf is 0 and p stays 1/2.
        let space = toy_space(2);
        let data = vec![
            (vector(&space, &[(0, 1)]), true),
            (vector(&space, &[(0, 2)]), false),
            (vector(&space, &[(0, 3)]), false),
            (vector(&space, &[(0, 4)]), false),
        ];
        let params = TreeParams { num_trees: 1, max_depth: 0, ..Default::default() };
        let model = train_trees(space, &data, &params).unwrap();
        assert_eq!(model.trees.len(), 1);
        assert_eq!(model.trees[0].nodes, vec![Node::Leaf { value: 0.0 }]);
        let v = vector(&model.space, &[]);
        assert_eq!(model.probability(&v), 0.5);
    }

    #[test]
    fn single_leaf_closed_form_unit_scale() {
        // s = 1: G = 1, H = 1, leaf = -1/(1+1) * 0.3 = -0.15.
        let space = toy_space(2);
        let data = vec![
            (vector(&space, &[(0, 1)]), true),
            (vector(&space, &[(0, 2)]), false),
            (vector(&space, &[(0, 3)]), false),
            (vector(&space, &[(0, 4)]), false),
        ];
        let params = TreeParams {
            num_trees: 1,
            max_depth: 0,
            positive_scale: Some(1.0),
            ..Default::default()
        };
        let model = train_trees(space, &data, &params).unwrap();
        match model.trees[0].nodes[0] {
            Node::Leaf { value } => assert!((value - (-0.15)).abs() < 1e-15),
            _ => panic!("expected a leaf"),
        }
        let v = vector(&model.space, &[]);
        assert!((model.probability(&v) - sigmoid(-0.15)).abs() < 1e-15);
    }

    #[test]
    fn empty_ensemble_is_neutral() {
        let model = TreeEnsemble {
            space: toy_space(2),
            trees: vec![],
            meta: TreeMeta::default(),
        };
        let v = vector(&model.space, &[(0, 3)]);
        assert_eq!(model.probability(&v), 0.5);
        // Probability >= 0.5 is classified positive (inclusive threshold).
        assert_eq!(model.weight_of(&v), 1.0);
    }

    #[test]
    fn hand_traced_single_split() {
        let space = toy_space(8);
        let tree = Tree {
            nodes: vec![
                Node::Split { feature: 3, threshold: 1.5, default_left: true, left: 1, right: 2 },
                Node::Leaf { value: 2.0 },
                Node::Leaf { value: -2.0 },
            ],
        };
        let model = TreeEnsemble { space, trees: vec![tree], meta: TreeMeta::default() };
        let low = vector(&model.space, &[(3, 1)]);
        let high = vector(&model.space, &[(3, 2)]);
        let missing = vector(&model.space, &[]);
        assert!((model.probability(&low) - sigmoid(2.0)).abs() < 1e-15);
        assert!((model.probability(&low) - 0.8807970779778823).abs() < 1e-12);
        assert!((model.probability(&high) - sigmoid(-2.0)).abs() < 1e-15);
        // Absent feature follows the default direction.
        assert_eq!(model.probability(&missing), model.probability(&low));
        assert_eq!(model.weight_of(&low), 1.0);
        assert_eq!(model.weight_of(&high), 10.0);
    }

    #[test]
    fn two_identical_trees_add_margins() {
        let space = toy_space(2);
        let tree = Tree { nodes: vec![Node::Leaf { value: 1.0 }] };
        let model = TreeEnsemble {
            space,
            trees: vec![tree.clone(), tree],
            meta: TreeMeta::default(),
        };
        let v = vector(&model.space, &[]);
        assert!((model.probability(&v) - sigmoid(2.0)).abs() < 1e-15);
    }

    #[test]
    fn training_loss_is_monotone_per_round() {
        let space = toy_space(5);
        let mut data = Vec::new();
        for i in 0..24u64 {
            let positive = i % 3 == 0;
            let mut entries = vec![(0, 1 + i % 4)];
            if i % 2 == 0 {
                entries.push((2, 1 + (i / 2) % 3));
            }
            if positive {
                entries.push((3, 1 + i % 2));
            }
            data.push((vector(&space, &entries), positive));
        }
        let mut last = f64::INFINITY;
        for rounds in [0u32, 1, 2, 4, 8, 16] {
            let params = TreeParams { num_trees: rounds, max_depth: 3, ..Default::default() };
            let model = train_trees(space.clone(), &data, &params).unwrap();
            let loss = ensemble_loss(&model, &data, model.meta.positive_scale);
            assert!(loss <= last + 1e-9, "loss rose to {loss} after {rounds} rounds");
            last = loss;
        }
    }

    #[test]
    fn absent_features_route_by_learned_default() {
        let space = toy_space(3);
        // Feature 1 present only on negatives: positives must go down the
        // missing branch.
        let mut data = Vec::new();
        for i in 0..6u64 {
            data.push((vector(&space, &[(0, 1 + i)]), true));
            data.push((vector(&space, &[(0, 1 + i), (1, 2)]), false));
        }
        let params = TreeParams { num_trees: 2, max_depth: 2, ..Default::default() };
        let model = train_trees(space, &data, &params).unwrap();
        for (v, positive) in &data {
            assert_eq!(model.classify(v), *positive);
        }
        let unseen = vector(&model.space, &[(0, 100)]);
        assert!(model.classify(&unseen));
    }

    #[test]
    fn feature_usage_counts_split_nodes() {
        let space = toy_space(9);
        let tree = Tree {
            nodes: vec![
                Node::Split { feature: 7, threshold: 1.0, default_left: true, left: 1, right: 2 },
                Node::Split { feature: 7, threshold: 3.0, default_left: false, left: 3, right: 4 },
                Node::Leaf { value: 0.1 },
                Node::Leaf { value: 0.2 },
                Node::Leaf { value: 0.3 },
            ],
        };
        let model = TreeEnsemble { space: toy_space(9), trees: vec![tree], meta: TreeMeta::default() };
        assert_eq!(model.feature_usage(), vec![(7, 2)]);
        let _ = space;
        let empty = TreeEnsemble {
            space: toy_space(2),
            trees: vec![Tree { nodes: vec![Node::Leaf { value: 0.0 }] }],
            meta: TreeMeta::default(),
        };
        assert!(empty.feature_usage().is_empty());
    }

    #[test]
    fn training_is_deterministic() {
        let space = toy_space(4);
        let data: Vec<(FeatureVector, bool)> = (0..20u64)
            .map(|i| (vector(&space, &[(0, 1 + i % 5), (2, 1 + i % 2)]), i % 4 == 0))
            .collect();
        let params = TreeParams { num_trees: 10, max_depth: 4, ..Default::default() };
        let a = train_trees(space.clone(), &data, &params).unwrap();
        let b = train_trees(space, &data, &params).unwrap();
        assert_eq!(a.trees, b.trees);
    }

    #[test]
    fn model_file_round_trips() {
        let space = toy_space(4);
        let data: Vec<(FeatureVector, bool)> = (0..20u64)
            .map(|i| (vector(&space, &[(0, 1 + i % 5), (2, 1 + i % 2)]), i % 4 == 0))
            .collect();
        let params = TreeParams { num_trees: 8, max_depth: 4, ..Default::default() };
        let model = train_trees(space, &data, &params).unwrap();
        let back = TreeEnsemble::from_text(&model.to_text()).unwrap();
        assert_eq!(back.trees, model.trees);
        assert_eq!(back.meta, model.meta);
        for (v, _) in &data {
            assert_eq!(model.margin(v), back.margin(v));
        }
    }

    #[test]
    fn rejects_degenerate_input() {
        let space = toy_space(2);
        assert!(matches!(
            train_trees(space.clone(), &[], &TreeParams::default()),
            Err(TrainError::Empty)
        ));
        let one_label = vec![(vector(&space, &[(0, 1)]), true)];
        assert!(matches!(
            train_trees(space, &one_label, &TreeParams::default()),
            Err(TrainError::SingleLabel(_))
        ));
    }

    /// Brute-force root split: enumerate every (feature, threshold, default)
    /// candidate and compute partition sums directly.
    fn oracle_root_split(
        data: &[(FeatureVector, bool)],
        grad: &[f64],
        hess: &[f64],
        params: &TreeParams,
    ) -> Option<(u32, f64, bool, f64)> {
        let dim = data[0].0.dimension as u32;
        let g_total: f64 = grad.iter().sum();
        let h_total: f64 = hess.iter().sum();
        let parent = g_total * g_total / (h_total + params.lambda);
        let mut best: Option<(u32, f64, bool, f64)> = None;
        for feature in 0..dim {
            let mut values: Vec<u64> =
                data.iter().filter_map(|(v, _)| lookup(v, feature)).collect();
            values.sort_unstable();
            values.dedup();
            if values.is_empty() {
                continue;
            }
            let mut thresholds = vec![values[0] as f64];
            for w in values.windows(2) {
                thresholds.push((w[0] as f64 + w[1] as f64) / 2.0);
            }
            for &threshold in &thresholds {
                for &default_left in &[true, false] {
                    let mut gl = 0.0;
                    let mut hl = 0.0;
                    let mut nl = 0usize;
                    for (i, (v, _)) in data.iter().enumerate() {
                        let left = match lookup(v, feature) {
                            Some(x) => (x as f64) < threshold,
                            None => default_left,
                        };
                        if left {
                            gl += grad[i];
                            hl += hess[i];
                            nl += 1;
                        }
                    }
                    if nl == 0 || nl == data.len() {
                        continue;
                    }
                    let gr = g_total - gl;
                    let hr = h_total - hl;
                    let gain = 0.5
                        * (gl * gl / (hl + params.lambda) + gr * gr / (hr + params.lambda) - parent)
                        - params.gamma;
                    if gain > best.map_or(0.0, |b| b.3) + GAIN_EPS {
                        best = Some((feature, threshold, default_left, gain));
                    }
                }
            }
        }
        best
    }

    #[test]
    fn root_split_matches_exhaustive_search() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let params = TreeParams { max_depth: 1, ..Default::default() };
        for _ in 0..60 {
            let dim_side = rng.gen_range(2..5u32);
            let space = toy_space(dim_side);
            let n = rng.gen_range(2..=16usize);
            let data: Vec<(FeatureVector, bool)> = (0..n)
                .map(|_| {
                    let mut entries = Vec::new();
                    for f in 0..space.dimension() as u32 {
                        if rng.gen_bool(0.6) {
                            entries.push((f, rng.gen_range(1..6u64)));
                        }
                    }
                    (vector(&space, &entries), rng.gen_bool(0.4))
                })
                .collect();
            let margins: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let (grad, hess) = gradient_at(&margins, &data, 2.0);
            let grower = Grower { data: &data, grad: &grad, hess: &hess, params: &params };
            let idxs: Vec<usize> = (0..n).collect();
            let g: f64 = grad.iter().sum();
            let h: f64 = hess.iter().sum();
            let ours = grower.best_split(&idxs, g, h);
            let oracle = oracle_root_split(&data, &grad, &hess, &params);
            match (ours, oracle) {
                (None, None) => {}
                (Some(a), Some(b)) => {
                    assert_eq!(
                        (a.feature, a.threshold, a.default_left),
                        (b.0, b.1, b.2),
                        "gains: ours {} oracle {}",
                        a.gain,
                        b.3
                    );
                    assert!((a.gain - b.3).abs() < 1e-9);
                }
                (a, b) => panic!(
                    "split disagreement: ours {:?} oracle {:?}",
                    a.map(|s| (s.feature, s.threshold, s.default_left, s.gain)),
                    b
                ),
            }
        }
    }
}
