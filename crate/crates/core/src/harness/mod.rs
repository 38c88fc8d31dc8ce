//! Experiment orchestration and metrics.
//!
//! Ties the other modules together: runs a strategy over a corpus of
//! problems (in parallel, one problem per worker), extracts labelled
//! training examples from the proofs, trains guidance models, evaluates the
//! solo/cooperative combinations, and reduces the run reports to the
//! standard tables — solved/unique counts against a baseline, greedy
//! contribution ordering, per-problem processed/generated ratios, and
//! hash-base sweeps.

pub mod corpus;

pub use corpus::{generate_corpus, load_corpus, write_corpus, CorpusProblem, CorpusSpec};

use crate::features::{FeatureBag, FeatureSpace, FeatureVector, Featurizer, IndexedSpace};
use crate::hashing::{collision_report, CollisionReport, HashConfig};
use crate::model_linear::{boost_balance, LinearParams};
use crate::model_neural::{train_neural, NeuralConfig};
use crate::model_trees::{train_trees, TreeParams};
use crate::prover::{
    combine_strategies, parse_records, saturate, CombineMode, ExampleRecord, Limits, RunReport,
    RunStatus, Strategy, TrainingExample, WeightModel,
};
use crate::termbank::{parse_problem, TermBank};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;
use std::sync::Arc;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Parse(#[from] crate::termbank::ParseError),
    #[error(transparent)]
    Strategy(#[from] crate::prover::StrategyError),
    #[error(transparent)]
    Train(#[from] crate::model_linear::TrainError),
    #[error(transparent)]
    Neural(#[from] crate::model_neural::NeuralTrainError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Base(#[from] crate::hashing::BaseError),
    #[error(transparent)]
    ModelFile(#[from] crate::model_linear::ModelFileError),
    #[error("serialization: {0}")]
    Json(#[from] serde_json::Error),
}

// ---------------------------------------------------------------------------
// Corpus runs

/// All outcomes of running one strategy over a corpus. `errors` holds
/// problems that failed to parse or evaluate; they do not abort the run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorpusRun {
    pub reports: Vec<RunReport>,
    pub errors: Vec<(String, String)>,
}

fn split_outcomes(
    results: Vec<Result<RunReport, (String, String)>>,
) -> (Vec<RunReport>, Vec<(String, String)>) {
    let mut reports = Vec::new();
    let mut errors = Vec::new();
    for r in results {
        match r {
            Ok(report) => reports.push(report),
            Err(e) => errors.push(e),
        }
    }
    (reports, errors)
}

/// Run each problem independently (in parallel) and collect reports in
/// corpus order.
pub fn run_corpus(problems: &[CorpusProblem], strategy: &Strategy, limits: Limits) -> CorpusRun {
    let results: Vec<_> = problems
        .par_iter()
        .map(|p| {
            let mut bank = TermBank::new();
            let parsed = parse_problem(&p.source, &p.name, &mut bank)
                .map_err(|e| (p.name.clone(), e.to_string()))?;
            match saturate(bank, &parsed, strategy, limits) {
                Ok((report, _)) => Ok(report),
                Err(e) => Err((p.name.clone(), e.to_string())),
            }
        })
        .collect();
    let (reports, errors) = split_outcomes(results);
    CorpusRun { reports, errors }
}

/// A corpus run that also extracts labelled given-clause examples from every
/// proof, serialized so they can cross thread and bank boundaries.
#[derive(Debug, Clone)]
pub struct ExtractRun {
    pub run: CorpusRun,
    pub records: Vec<ExampleRecord>,
}

pub fn run_and_extract(
    problems: &[CorpusProblem],
    strategy: &Strategy,
    limits: Limits,
) -> ExtractRun {
    let results: Vec<_> = problems
        .par_iter()
        .map(|p| {
            let mut bank = TermBank::new();
            let parsed = parse_problem(&p.source, &p.name, &mut bank)
                .map_err(|e| (p.name.clone(), e.to_string()))?;
            match saturate(bank, &parsed, strategy, limits) {
                Ok((report, sat)) => {
                    let mut records = Vec::new();
                    if report.status == RunStatus::Proved {
                        if let Ok(examples) = sat.extract_examples(&report) {
                            records.extend(examples.iter().map(|e| e.to_record(sat.bank())));
                        }
                    }
                    Ok((report, records))
                }
                Err(e) => Err((p.name.clone(), e.to_string())),
            }
        })
        .collect();
    let mut reports = Vec::new();
    let mut errors = Vec::new();
    let mut records = Vec::new();
    for r in results {
        match r {
            Ok((report, recs)) => {
                reports.push(report);
                records.extend(recs);
            }
            Err(e) => errors.push(e),
        }
    }
    ExtractRun { run: CorpusRun { reports, errors }, records }
}

// ---------------------------------------------------------------------------
// Metrics

#[derive(Debug, Clone, thiserror::Error)]
pub enum MetricsError {
    #[error("no methods to compare")]
    Empty,
    #[error("baseline method '{0}' is not among the compared methods")]
    MissingBaseline(String),
    #[error("method '{method}' ran a different problem set than '{reference}'")]
    MismatchedCorpora { method: String, reference: String },
}

/// Mean and population standard deviation of per-problem ratios.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatioStat {
    pub mean: f64,
    pub sd: f64,
    pub count: usize,
}

fn ratio_stat(ratios: &[f64]) -> Option<RatioStat> {
    if ratios.is_empty() {
        return None;
    }
    let n = ratios.len() as f64;
    let mean = ratios.iter().sum::<f64>() / n;
    let var = ratios.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / n;
    Some(RatioStat { mean, sd: var.sqrt(), count: ratios.len() })
}

/// One row of the summary table for a single method.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Metrics {
    pub method: String,
    /// Training-set classification rates, when the method carries a model.
    pub tpr: Option<f64>,
    pub tnr: Option<f64>,
    pub solved: usize,
    /// Solved by this method and no other compared method.
    pub unique: usize,
    /// Solved here, unsolved by the baseline.
    pub plus_vs_baseline: usize,
    /// Solved by the baseline, unsolved here.
    pub minus_vs_baseline: usize,
    pub asrpa: Option<RatioStat>,
    pub nsrga: Option<RatioStat>,
}

/// Names of the problems a run proved.
pub fn solved_set(reports: &[RunReport]) -> BTreeSet<String> {
    reports
        .iter()
        .filter(|r| r.status == RunStatus::Proved)
        .map(|r| r.problem.clone())
        .collect()
}

fn check_same_corpora(methods: &[(&str, &[RunReport])]) -> Result<(), MetricsError> {
    let (ref_name, ref_reports) = match methods.first() {
        Some(m) => m,
        None => return Err(MetricsError::Empty),
    };
    let reference: BTreeSet<&str> = ref_reports.iter().map(|r| r.problem.as_str()).collect();
    for (name, reports) in &methods[1..] {
        let set: BTreeSet<&str> = reports.iter().map(|r| r.problem.as_str()).collect();
        if set != reference || reports.len() != ref_reports.len() {
            return Err(MetricsError::MismatchedCorpora {
                method: name.to_string(),
                reference: ref_name.to_string(),
            });
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SolvedRow {
    pub method: String,
    pub solved: usize,
    pub unique: usize,
    pub plus_vs_baseline: usize,
    pub minus_vs_baseline: usize,
}

/// Solved/unique counts and the +/− split against the named baseline.
/// All methods must have run the same problems.
pub fn solved_stats(
    methods: &[(&str, &[RunReport])],
    baseline: &str,
) -> Result<Vec<SolvedRow>, MetricsError> {
    check_same_corpora(methods)?;
    let sets: Vec<(&str, BTreeSet<String>)> =
        methods.iter().map(|(n, r)| (*n, solved_set(r))).collect();
    let base = sets
        .iter()
        .find(|(n, _)| *n == baseline)
        .map(|(_, s)| s.clone())
        .ok_or_else(|| MetricsError::MissingBaseline(baseline.to_string()))?;
    let rows = sets
        .iter()
        .map(|(name, set)| {
            let unique = set
                .iter()
                .filter(|p| {
                    sets.iter().all(|(other, s)| other == name || !s.contains(*p))
                })
                .count();
            SolvedRow {
                method: name.to_string(),
                solved: set.len(),
                unique,
                plus_vs_baseline: set.difference(&base).count(),
                minus_vs_baseline: base.difference(set).count(),
            }
        })
        .collect();
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GreedyRow {
    pub method: String,
    pub addition: usize,
    pub running_total: usize,
}

/// Order methods by greedy marginal contribution to the union of solved
/// problems. Every method appears once; ties go to the smaller method name.
pub fn greedy_sequence(sets: &[(String, BTreeSet<String>)]) -> Vec<GreedyRow> {
    let mut remaining: Vec<&(String, BTreeSet<String>)> = sets.iter().collect();
    let mut covered: BTreeSet<&String> = BTreeSet::new();
    let mut rows = Vec::with_capacity(sets.len());
    while !remaining.is_empty() {
        let (pos, _) = remaining
            .iter()
            .enumerate()
            .map(|(i, (name, set))| {
                let addition = set.iter().filter(|p| !covered.contains(p)).count();
                (i, (addition, name))
            })
            .max_by(|(_, (a1, n1)), (_, (a2, n2))| a1.cmp(a2).then(n2.cmp(n1)))
            .map(|(i, (a, _))| (i, a))
            .expect("nonempty");
        let (name, set) = remaining.remove(pos);
        let addition = set.iter().filter(|p| !covered.contains(p)).count();
        covered.extend(set.iter());
        rows.push(GreedyRow {
            method: name.clone(),
            addition,
            running_total: covered.len(),
        });
    }
    rows
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RatioRow {
    pub method: String,
    pub asrpa: Option<RatioStat>,
    pub nsrga: Option<RatioStat>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RatioTable {
    pub rows: Vec<RatioRow>,
    /// Problems every compared method proved.
    pub solved_eligible: usize,
    /// Problems where every compared method ran out of resources.
    pub timeout_eligible: usize,
    pub warnings: Vec<String>,
}

/// Per-problem processed (ASRPA) and generated (NSRGA) ratios against the
/// baseline, averaged over the respective eligible sets. Problems where the
/// baseline count is zero are excluded with a warning; an empty eligible set
/// leaves the statistic undefined rather than zero.
pub fn asrpa_nsrga(
    methods: &[(&str, &[RunReport])],
    baseline: &str,
) -> Result<RatioTable, MetricsError> {
    check_same_corpora(methods)?;
    let base_reports = methods
        .iter()
        .find(|(n, _)| *n == baseline)
        .map(|(_, r)| *r)
        .ok_or_else(|| MetricsError::MissingBaseline(baseline.to_string()))?;
    let base_by_problem: HashMap<&str, &RunReport> =
        base_reports.iter().map(|r| (r.problem.as_str(), r)).collect();

    fn status_of(reports: &[RunReport]) -> HashMap<&str, RunStatus> {
        reports.iter().map(|r| (r.problem.as_str(), r.status)).collect()
    }
    let by_method: Vec<(&str, HashMap<&str, &RunReport>)> = methods
        .iter()
        .map(|(n, r)| (*n, r.iter().map(|x| (x.problem.as_str(), x)).collect()))
        .collect();

    let all_status: Vec<HashMap<&str, RunStatus>> =
        methods.iter().map(|(_, r)| status_of(r)).collect();
    let eligible = |want: RunStatus| -> Vec<&str> {
        base_reports
            .iter()
            .map(|r| r.problem.as_str())
            .filter(|p| all_status.iter().all(|m| m.get(p) == Some(&want)))
            .collect()
    };
    let solved_eligible = eligible(RunStatus::Proved);
    let timeout_eligible = eligible(RunStatus::ResourceOut);

    let mut warnings = Vec::new();
    let mut rows = Vec::with_capacity(methods.len());
    for (name, reports) in &by_method {
        let mut asrpa = Vec::new();
        for p in &solved_eligible {
            let b = base_by_problem[p].processed_count;
            if b == 0 {
                warnings.push(format!(
                    "{p}: baseline processed 0 clauses; excluded from ASRPA"
                ));
                continue;
            }
            asrpa.push(reports[p].processed_count as f64 / b as f64);
        }
        let mut nsrga = Vec::new();
        for p in &timeout_eligible {
            let b = base_by_problem[p].generated_count;
            if b == 0 {
                warnings.push(format!(
                    "{p}: baseline generated 0 clauses; excluded from NSRGA"
                ));
                continue;
            }
            nsrga.push(reports[p].generated_count as f64 / b as f64);
        }
        rows.push(RatioRow {
            method: name.to_string(),
            asrpa: ratio_stat(&asrpa),
            nsrga: ratio_stat(&nsrga),
        });
    }
    warnings.sort();
    warnings.dedup();
    Ok(RatioTable {
        rows,
        solved_eligible: solved_eligible.len(),
        timeout_eligible: timeout_eligible.len(),
        warnings,
    })
}

// ---------------------------------------------------------------------------
// Feature pipeline

/// Feature bags for a batch of examples; conjecture bags are computed once
/// per distinct conjecture and shared.
pub struct BaggedExamples {
    pub clause_bags: Vec<FeatureBag>,
    pub conjecture_bags: Vec<Arc<FeatureBag>>,
    pub labels: Vec<bool>,
}

pub fn bag_examples(bank: &TermBank, examples: &[TrainingExample]) -> BaggedExamples {
    let mut featurizer = Featurizer::new();
    let mut conj_cache: HashMap<usize, Arc<FeatureBag>> = HashMap::new();
    let mut clause_bags = Vec::with_capacity(examples.len());
    let mut conjecture_bags = Vec::with_capacity(examples.len());
    let mut labels = Vec::with_capacity(examples.len());
    for e in examples {
        clause_bags.push(featurizer.clause_bag(bank, &e.clause));
        let key = Arc::as_ptr(&e.conjecture) as usize;
        let bag = conj_cache
            .entry(key)
            .or_insert_with(|| Arc::new(featurizer.conjecture_bag(bank, &e.conjecture)))
            .clone();
        conjecture_bags.push(bag);
        labels.push(e.positive);
    }
    BaggedExamples { clause_bags, conjecture_bags, labels }
}

/// Enumerate every feature key seen in the bags, in first-seen order.
pub fn indexed_space_from_bags(bags: &BaggedExamples) -> IndexedSpace {
    let mut seen_conj: BTreeSet<usize> = BTreeSet::new();
    let mut keys = Vec::new();
    for (i, clause_bag) in bags.clause_bags.iter().enumerate() {
        keys.extend(clause_bag.iter().map(|(k, _)| k.clone()));
        let ptr = Arc::as_ptr(&bags.conjecture_bags[i]) as usize;
        if seen_conj.insert(ptr) {
            keys.extend(bags.conjecture_bags[i].iter().map(|(k, _)| k.clone()));
        }
    }
    IndexedSpace::from_keys(keys)
}

pub fn vectorize_bags(space: &FeatureSpace, bags: &BaggedExamples) -> Vec<(FeatureVector, bool)> {
    bags.clause_bags
        .iter()
        .zip(&bags.conjecture_bags)
        .zip(&bags.labels)
        .map(|((c, conj), &label)| (space.vectorize(c, conj), label))
        .collect()
}

// ---------------------------------------------------------------------------
// Model training glue

/// Which learner to train, with its hyperparameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum ModelSpec {
    Linear {
        #[serde(default)]
        params: LinearParams,
    },
    Trees {
        #[serde(default)]
        params: TreeParams,
    },
    Neural {
        #[serde(default)]
        config: NeuralConfig,
    },
}

impl ModelSpec {
    pub fn label(&self) -> &'static str {
        match self {
            ModelSpec::Linear { .. } => "linear",
            ModelSpec::Trees { .. } => "trees",
            ModelSpec::Neural { .. } => "neural",
        }
    }
}

/// A trained model with its training-set rates, ready to plug into a
/// strategy.
pub struct TrainedModel {
    pub label: String,
    pub tpr: Option<f64>,
    pub tnr: Option<f64>,
    pub model: Arc<dyn WeightModel>,
}

/// Train one model spec. Vector models consume `space`/`data`; the neural
/// model reads the term-level `examples` directly.
pub fn train_model(
    spec: &ModelSpec,
    space: &FeatureSpace,
    data: &[(FeatureVector, bool)],
    bank: &TermBank,
    examples: &[TrainingExample],
    seed: u64,
) -> Result<TrainedModel, HarnessError> {
    match spec {
        ModelSpec::Linear { params } => {
            let model = boost_balance(space.clone(), data, params)?;
            Ok(TrainedModel {
                label: "linear".into(),
                tpr: model.meta.tpr,
                tnr: model.meta.tnr,
                model: model.into_weight_model(),
            })
        }
        ModelSpec::Trees { params } => {
            let model = train_trees(space.clone(), data, params)?;
            Ok(TrainedModel {
                label: "trees".into(),
                tpr: model.meta.tpr,
                tnr: model.meta.tnr,
                model: model.into_weight_model(),
            })
        }
        ModelSpec::Neural { config } => {
            let model = train_neural(bank, examples, config, seed)?;
            Ok(TrainedModel {
                label: "neural".into(),
                tpr: model.meta.tpr,
                tnr: model.meta.tnr,
                model: model.into_weight_model(),
            })
        }
    }
}

// ---------------------------------------------------------------------------
// Hash sweep

/// Corpus evaluation settings for sweep cells that also run the prover.
pub struct AtpEval<'a> {
    pub problems: &'a [CorpusProblem],
    pub baseline: &'a Strategy,
    pub limits: Limits,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepCell {
    /// None = unhashed (indexed) feature space.
    pub base: Option<u32>,
    pub model: String,
    pub dimension: usize,
    pub tpr: Option<f64>,
    pub tnr: Option<f64>,
    pub solo_solved: Option<usize>,
    pub coop_solved: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HashSweep {
    /// Distinct feature keys in the training data.
    pub indexed_features: usize,
    /// One report per requested base, in the given order.
    pub collisions: Vec<CollisionReport>,
    pub cells: Vec<SweepCell>,
}

/// Train (and optionally evaluate) models across hash bases plus the
/// unhashed space.
pub fn hash_sweep(
    bank: &TermBank,
    examples: &[TrainingExample],
    bases: &[u32],
    linear: Option<&LinearParams>,
    trees: Option<&TreeParams>,
    atp: Option<&AtpEval<'_>>,
) -> Result<HashSweep, HarnessError> {
    let bags = bag_examples(bank, examples);
    let indexed = indexed_space_from_bags(&bags);
    let configs = bases
        .iter()
        .map(|&base| HashConfig::new(base))
        .collect::<Result<Vec<_>, _>>()?;
    let collisions: Vec<CollisionReport> =
        configs.iter().map(|&cfg| collision_report(&indexed, cfg)).collect();

    let mut spaces: Vec<(Option<u32>, FeatureSpace)> = configs
        .iter()
        .map(|&cfg| (Some(cfg.base), FeatureSpace::Hashed(cfg)))
        .collect();
    spaces.push((None, FeatureSpace::Indexed(indexed.clone())));

    let mut cells = Vec::new();
    for (base, space) in &spaces {
        let data = vectorize_bags(space, &bags);
        let mut trained: Vec<(String, TrainedModel)> = Vec::new();
        if let Some(params) = linear {
            let m = train_model(
                &ModelSpec::Linear { params: *params },
                space,
                &data,
                bank,
                examples,
                0,
            )?;
            trained.push(("linear".into(), m));
        }
        if let Some(params) = trees {
            let m = train_model(
                &ModelSpec::Trees { params: *params },
                space,
                &data,
                bank,
                examples,
                0,
            )?;
            trained.push(("trees".into(), m));
        }
        for (name, model) in trained {
            let (mut solo_solved, mut coop_solved) = (None, None);
            if let Some(eval) = atp {
                let solo =
                    combine_strategies(eval.baseline, model.model.clone(), CombineMode::Solo);
                let coop =
                    combine_strategies(eval.baseline, model.model.clone(), CombineMode::Coop);
                solo_solved =
                    Some(solved_set(&run_corpus(eval.problems, &solo, eval.limits).reports).len());
                coop_solved =
                    Some(solved_set(&run_corpus(eval.problems, &coop, eval.limits).reports).len());
            }
            cells.push(SweepCell {
                base: *base,
                model: name,
                dimension: space.dimension(),
                tpr: model.tpr,
                tnr: model.tnr,
                solo_solved,
                coop_solved,
            });
        }
    }
    Ok(HashSweep { indexed_features: indexed.key_count(), collisions, cells })
}

// ---------------------------------------------------------------------------
// Experiment driver

/// Everything needed to reproduce one experiment: corpus location, baseline
/// strategy, models to train, budgets, sweep bases, output directory, seed.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default)]
pub struct ExperimentPlan {
    pub corpus_dir: PathBuf,
    pub baseline: String,
    pub models: Vec<ModelSpec>,
    pub limits: Limits,
    /// Bases for the hash sweep stage; empty skips the sweep.
    pub hash_bases: Vec<u32>,
    /// Hash base for the feature space the models train on; 0 = indexed.
    pub training_hash_base: u32,
    pub out_dir: PathBuf,
    pub seed: u64,
}

impl Default for ExperimentPlan {
    fn default() -> Self {
        ExperimentPlan {
            corpus_dir: PathBuf::from("corpus"),
            baseline: "4*symcount,1*fifo".into(),
            models: vec![ModelSpec::Trees { params: TreeParams::default() }],
            limits: Limits { max_processed: 2_000, max_generated: 20_000, max_seconds: None },
            hash_bases: Vec::new(),
            training_hash_base: 0,
            out_dir: PathBuf::from("runs"),
            seed: 1,
        }
    }
}

/// Summary of one full experiment.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentOutcome {
    pub metrics: Vec<Metrics>,
    pub greedy: Vec<GreedyRow>,
    pub ratios: RatioTable,
    pub sweep: Option<HashSweep>,
    pub example_count: usize,
    pub errors: Vec<(String, String)>,
}

/// Run the whole pipeline described by a plan and write reports into its
/// output directory. `log` receives one line per completed stage.
pub fn run_experiment(
    plan: &ExperimentPlan,
    mut log: impl FnMut(&str),
) -> Result<ExperimentOutcome, HarnessError> {
    let problems = load_corpus(&plan.corpus_dir)?;
    let baseline = Strategy::parse(&plan.baseline)?;
    log(&format!("loaded {} problems from {}", problems.len(), plan.corpus_dir.display()));

    let extract = run_and_extract(&problems, &baseline, plan.limits);
    let mut errors = extract.run.errors.clone();
    log(&format!(
        "baseline solved {} problems, extracted {} examples",
        solved_set(&extract.run.reports).len(),
        extract.records.len()
    ));

    fs::create_dir_all(&plan.out_dir)?;
    let mut jsonl = String::new();
    for record in &extract.records {
        jsonl.push_str(&serde_json::to_string(record)?);
        jsonl.push('\n');
    }
    fs::write(plan.out_dir.join("examples.jsonl"), jsonl)?;

    let mut bank = TermBank::new();
    let examples = parse_records(&extract.records, &mut bank)?;
    let bags = bag_examples(&bank, &examples);
    let indexed = indexed_space_from_bags(&bags);
    let space = if plan.training_hash_base == 0 {
        FeatureSpace::Indexed(indexed.clone())
    } else {
        FeatureSpace::Hashed(HashConfig::new(plan.training_hash_base)?)
    };
    let data = vectorize_bags(&space, &bags);
    log(&format!(
        "feature space: {} keys over {} examples, vector dimension {}",
        indexed.key_count(),
        data.len(),
        space.dimension()
    ));

    // (method name, per-problem reports, training tpr, training tnr)
    type MethodRuns = Vec<(String, Vec<RunReport>, Option<f64>, Option<f64>)>;
    let mut runs: MethodRuns = vec![("baseline".into(), extract.run.reports, None, None)];
    for spec in &plan.models {
        let trained = train_model(spec, &space, &data, &bank, &examples, plan.seed)?;
        log(&format!(
            "trained {}: tpr {:?} tnr {:?}",
            trained.label, trained.tpr, trained.tnr
        ));
        for (mode, tag) in [(CombineMode::Solo, "solo"), (CombineMode::Coop, "coop")] {
            let strategy = combine_strategies(&baseline, trained.model.clone(), mode);
            let run = run_corpus(&problems, &strategy, plan.limits);
            log(&format!(
                "{}-{tag} solved {}",
                trained.label,
                solved_set(&run.reports).len()
            ));
            errors.extend(run.errors.clone());
            runs.push((
                format!("{}-{tag}", trained.label),
                run.reports,
                trained.tpr,
                trained.tnr,
            ));
        }
    }

    let method_refs: Vec<(&str, &[RunReport])> =
        runs.iter().map(|(n, r, _, _)| (n.as_str(), r.as_slice())).collect();
    let stats = solved_stats(&method_refs, "baseline")?;
    let ratios = asrpa_nsrga(&method_refs, "baseline")?;
    let sets: Vec<(String, BTreeSet<String>)> =
        runs.iter().map(|(n, r, _, _)| (n.clone(), solved_set(r))).collect();
    let greedy = greedy_sequence(&sets);

    let metrics: Vec<Metrics> = stats
        .iter()
        .zip(&ratios.rows)
        .zip(&runs)
        .map(|((row, ratio), (_, _, tpr, tnr))| Metrics {
            method: row.method.clone(),
            tpr: *tpr,
            tnr: *tnr,
            solved: row.solved,
            unique: row.unique,
            plus_vs_baseline: row.plus_vs_baseline,
            minus_vs_baseline: row.minus_vs_baseline,
            asrpa: ratio.asrpa,
            nsrga: ratio.nsrga,
        })
        .collect();

    let sweep = if plan.hash_bases.is_empty() {
        None
    } else {
        let atp = AtpEval { problems: &problems, baseline: &baseline, limits: plan.limits };
        let sweep = hash_sweep(
            &bank,
            &examples,
            &plan.hash_bases,
            Some(&LinearParams::default()),
            Some(&TreeParams::default()),
            Some(&atp),
        )?;
        log(&format!("hash sweep over {} bases done", plan.hash_bases.len()));
        Some(sweep)
    };

    for (name, reports, _, _) in &runs {
        fs::write(
            plan.out_dir.join(format!("run-{name}.json")),
            serde_json::to_string_pretty(reports)?,
        )?;
    }
    let outcome = ExperimentOutcome {
        metrics,
        greedy,
        ratios,
        sweep,
        example_count: extract.records.len(),
        errors,
    };
    fs::write(
        plan.out_dir.join("metrics.json"),
        serde_json::to_string_pretty(&outcome)?,
    )?;
    fs::write(plan.out_dir.join("summary.txt"), render_outcome(&outcome))?;
    log(&format!("reports written to {}", plan.out_dir.display()));
    Ok(outcome)
}

// ---------------------------------------------------------------------------
// Rendering

fn fmt_rate(r: Option<f64>) -> String {
    match r {
        Some(v) => format!("{:6.2}%", v * 100.0),
        None => "     --".into(),
    }
}

fn fmt_ratio(r: Option<RatioStat>) -> String {
    match r {
        Some(s) => format!("{:.2} ± {:.2}", s.mean, s.sd),
        None => "undefined".into(),
    }
}

pub fn render_outcome(outcome: &ExperimentOutcome) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<16} {:>7} {:>7} {:>6} {:>6} {:>4} {:>4}  {:<13} nsrga",
        "method", "tpr", "tnr", "solved", "unique", "S+", "S-", "asrpa"
    );
    for m in &outcome.metrics {
        let _ = writeln!(
            out,
            "{:<16} {} {} {:>6} {:>6} {:>4} {:>4}  {:<13} {}",
            m.method,
            fmt_rate(m.tpr),
            fmt_rate(m.tnr),
            m.solved,
            m.unique,
            m.plus_vs_baseline,
            m.minus_vs_baseline,
            fmt_ratio(m.asrpa),
            fmt_ratio(m.nsrga),
        );
    }
    let _ = writeln!(
        out,
        "\neligible problems: {} all-solved, {} all-timeout",
        outcome.ratios.solved_eligible, outcome.ratios.timeout_eligible
    );
    for w in &outcome.ratios.warnings {
        let _ = writeln!(out, "warning: {w}");
    }
    let _ = writeln!(out, "\ngreedy contribution order:");
    for row in &outcome.greedy {
        let _ = writeln!(
            out,
            "  {:<16} +{:<5} total {}",
            row.method, row.addition, row.running_total
        );
    }
    if let Some(sweep) = &outcome.sweep {
        out.push('\n');
        out.push_str(&render_sweep(sweep));
    }
    let _ = writeln!(out, "\nexamples: {}", outcome.example_count);
    if !outcome.errors.is_empty() {
        let _ = writeln!(out, "errors: {}", outcome.errors.len());
        for (problem, err) in &outcome.errors {
            let _ = writeln!(out, "  {problem}: {err}");
        }
    }
    out
}

pub fn render_sweep(sweep: &HashSweep) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "hash sweep ({} indexed features):", sweep.indexed_features);
    let _ = writeln!(
        out,
        "{:>8} {:<8} {:>9} {:>7} {:>7} {:>6} {:>6}",
        "base", "model", "dim", "tpr", "tnr", "solo", "coop"
    );
    for cell in &sweep.cells {
        let base = match cell.base {
            Some(b) => b.to_string(),
            None => "off".into(),
        };
        let count = |c: Option<usize>| match c {
            Some(n) => n.to_string(),
            None => "--".into(),
        };
        let _ = writeln!(
            out,
            "{:>8} {:<8} {:>9} {} {} {:>6} {:>6}",
            base,
            cell.model,
            cell.dimension,
            fmt_rate(cell.tpr),
            fmt_rate(cell.tnr),
            count(cell.solo_solved),
            count(cell.coop_solved),
        );
    }
    let _ = writeln!(out, "collisions by base:");
    for c in &sweep.collisions {
        let _ = writeln!(
            out,
            "  base {:>6}: {} of {} features share a bucket",
            c.base, c.colliding_features, c.total_features
        );
    }
    out
}
