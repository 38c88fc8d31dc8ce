//! Command-line front end: run single problems, extract training data,
//! train models, and drive corpus-level experiments.

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use clauselab::features::{FeatureSpace, FeatureVector};
use clauselab::harness::{
    self, bag_examples, generate_corpus, hash_sweep, indexed_space_from_bags, load_corpus,
    render_sweep, run_experiment, vectorize_bags, write_corpus, AtpEval, CorpusSpec,
    ExperimentPlan,
};
use clauselab::hashing::HashConfig;
use clauselab::model_linear::{boost_balance, LinearModel, LinearParams};
use clauselab::model_neural::{train_neural, NeuralConfig, NeuralModel};
use clauselab::model_trees::{train_trees, TreeEnsemble, TreeParams};
use clauselab::prover::{
    combine_strategies, parse_records, saturate, CombineMode, ExampleRecord, Limits, RunStatus,
    Strategy, TrainingExample, WeightModel,
};
use clauselab::termbank::{parse_problem, TermBank};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

#[derive(Parser)]
#[command(name = "clauselab", about = "Learned clause selection laboratory", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Solo,
    Coop,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelType {
    Linear,
    Trees,
    Neural,
}

#[derive(Subcommand)]
enum Command {
    /// Run one problem and print the outcome.
    Solve {
        /// Path to a CNF problem file.
        problem: PathBuf,
        /// Queue spec like "4*symcount,1*fifo".
        #[arg(long, default_value = "4*symcount,1*fifo")]
        strategy: String,
        /// Trained model file to combine with the strategy.
        #[arg(long)]
        model: Option<PathBuf>,
        /// How the model joins the strategy.
        #[arg(long, value_enum, default_value = "coop")]
        mode: Mode,
        #[arg(long, default_value_t = 20_000)]
        max_processed: u64,
        #[arg(long, default_value_t = u64::MAX)]
        max_generated: u64,
        /// Wall-clock budget in seconds.
        #[arg(long)]
        timeout: Option<f64>,
        /// Write the full run report as JSON.
        #[arg(long)]
        report: Option<PathBuf>,
        /// Write labelled given-clause examples (JSON lines), proofs only.
        #[arg(long)]
        examples: Option<PathBuf>,
    },
    /// Turn example records into sparse feature vectors.
    Extract {
        /// Example records, one JSON object per line.
        #[arg(long)]
        examples: PathBuf,
        /// Output path for `<label> <index>:<value> ...` lines.
        #[arg(long)]
        out: PathBuf,
        /// Sidecar path mapping vector index to feature key.
        #[arg(long)]
        map: Option<PathBuf>,
        /// Feature hashing base; 0 keeps the indexed space.
        #[arg(long, default_value_t = 0)]
        hash_base: u32,
    },
    /// Train a model on example records.
    Train {
        #[arg(long)]
        examples: PathBuf,
        #[arg(long, value_enum)]
        model_type: ModelType,
        #[arg(long)]
        out: PathBuf,
        /// Feature hashing base; 0 keeps the indexed space.
        #[arg(long, default_value_t = 0)]
        hash_base: u32,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Run the full experiment described by a plan.
    Bench {
        /// Plan file (JSON); missing fields take defaults.
        #[arg(long)]
        plan: Option<PathBuf>,
        /// Corpus directory (overrides the plan).
        #[arg(long)]
        corpus: Option<PathBuf>,
        /// Output directory (overrides the plan).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Hash base for model training (overrides the plan; 0 = indexed).
        #[arg(long)]
        hash_base: Option<u32>,
    },
    /// Train models across hash bases and report the table.
    HashSweep {
        #[arg(long)]
        examples: PathBuf,
        /// Comma-separated bases, e.g. 1024,2048,4096.
        #[arg(long, value_delimiter = ',')]
        bases: Vec<u32>,
        /// Corpus to also run solo/coop evaluations on.
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long, default_value = "4*symcount,1*fifo")]
        strategy: String,
        #[arg(long, default_value_t = 2_000)]
        max_processed: u64,
        #[arg(long, default_value_t = 20_000)]
        max_generated: u64,
        /// Write the table as JSON in addition to printing it.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write the bundled benchmark corpus to a directory.
    GenCorpus {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

fn read_examples(path: &Path) -> Result<Vec<ExampleRecord>> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading examples from {}", path.display()))?;
    let mut records = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: ExampleRecord = serde_json::from_str(line)
            .with_context(|| format!("{}:{}", path.display(), i + 1))?;
        records.push(record);
    }
    if records.is_empty() {
        bail!("{} contains no examples", path.display());
    }
    Ok(records)
}

/// Load a model file, dispatching on its first line.
fn load_model(path: &Path) -> Result<Arc<dyn WeightModel>> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading model from {}", path.display()))?;
    let header = text.lines().next().unwrap_or_default();
    let model: Arc<dyn WeightModel> = match header {
        "linear-model v1" => LinearModel::from_text(&text)?.into_weight_model(),
        "tree-model v1" => TreeEnsemble::from_text(&text)?.into_weight_model(),
        "neural-model v1" => NeuralModel::from_text(&text)?.into_weight_model(),
        other => bail!("{}: unknown model header '{other}'", path.display()),
    };
    Ok(model)
}

type Vectorized = (TermBank, Vec<TrainingExample>, FeatureSpace, Vec<(FeatureVector, bool)>);

/// Bags, space and vectors for a set of records; the space honours
/// `hash_base` (0 = indexed).
fn vectorized(records: &[ExampleRecord], hash_base: u32) -> Result<Vectorized> {
    let mut bank = TermBank::new();
    let examples = parse_records(records, &mut bank)?;
    let bags = bag_examples(&bank, &examples);
    let indexed = indexed_space_from_bags(&bags);
    let space = if hash_base == 0 {
        FeatureSpace::Indexed(indexed)
    } else {
        FeatureSpace::Hashed(HashConfig::new(hash_base)?)
    };
    let data = vectorize_bags(&space, &bags);
    Ok((bank, examples, space, data))
}

#[allow(clippy::too_many_arguments)]
fn cmd_solve(
    problem: PathBuf,
    strategy: String,
    model: Option<PathBuf>,
    mode: Mode,
    max_processed: u64,
    max_generated: u64,
    timeout: Option<f64>,
    report_path: Option<PathBuf>,
    examples_path: Option<PathBuf>,
) -> Result<()> {
    let source = fs::read_to_string(&problem)
        .with_context(|| format!("reading {}", problem.display()))?;
    let name = problem
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("problem")
        .to_string();
    let mut bank = TermBank::new();
    let parsed = parse_problem(&source, &name, &mut bank)?;

    let mut strat = Strategy::parse(&strategy)?;
    if let Some(path) = model {
        let loaded = load_model(&path)?;
        let mode = match mode {
            Mode::Solo => CombineMode::Solo,
            Mode::Coop => CombineMode::Coop,
        };
        strat = combine_strategies(&strat, loaded, mode);
    }
    let limits = Limits { max_processed, max_generated, max_seconds: timeout };
    let (report, sat) = saturate(bank, &parsed, &strat, limits)?;
    println!(
        "{name}: {:?} after processing {} and generating {} clauses ({:.3}s)",
        report.status, report.processed_count, report.generated_count, report.wall_seconds
    );
    if let Some(path) = report_path {
        fs::write(&path, serde_json::to_string_pretty(&report)?)?;
    }
    if let Some(path) = examples_path {
        if report.status == RunStatus::Proved {
            let examples = sat.extract_examples(&report)?;
            let mut out = String::new();
            for e in &examples {
                out.push_str(&serde_json::to_string(&e.to_record(sat.bank()))?);
                out.push('\n');
            }
            fs::write(&path, out)?;
            println!("wrote {} examples to {}", examples.len(), path.display());
        } else {
            println!("no proof, so no examples were written");
        }
    }
    Ok(())
}

fn cmd_extract(examples: PathBuf, out: PathBuf, map: Option<PathBuf>, hash_base: u32) -> Result<()> {
    let records = read_examples(&examples)?;
    let (_, _, space, data) = vectorized(&records, hash_base)?;
    let mut lines = String::new();
    for (vector, positive) in &data {
        let label = if *positive { "+1" } else { "-1" };
        lines.push_str(label);
        for (index, value) in &vector.entries {
            lines.push_str(&format!(" {index}:{value}"));
        }
        lines.push('\n');
    }
    fs::write(&out, lines)?;
    println!("wrote {} vectors of dimension {} to {}", data.len(), space.dimension(), out.display());

    if let Some(map_path) = map {
        let mut text = String::new();
        match &space {
            FeatureSpace::Indexed(indexed) => {
                let side = indexed.side_dimension() as u32;
                for (key, index) in indexed.keys() {
                    text.push_str(&format!("{index}\t{}\n", key.serialize()));
                    text.push_str(&format!("{}\tg|{}\n", side + index, key.serialize()));
                }
                text.push_str(&format!("{}\t<overflow>\n", indexed.overflow_index()));
                text.push_str(&format!("{}\tg|<overflow>\n", side + indexed.overflow_index()));
            }
            FeatureSpace::Hashed(cfg) => {
                // Many keys share a bucket; list every observed key under
                // the index it hashes to.
                let mut bank = TermBank::new();
                let parsed = parse_records(&records, &mut bank)?;
                let bags = bag_examples(&bank, &parsed);
                let indexed = indexed_space_from_bags(&bags);
                let side = cfg.base;
                for (key, _) in indexed.keys() {
                    let bucket = clauselab::hashing::hash_key(key, *cfg);
                    text.push_str(&format!("{bucket}\t{}\n", key.serialize()));
                    let conj = clauselab::features::FeatureKey::ConjectureSide(Box::new(key.clone()));
                    let conj_bucket = side + clauselab::hashing::hash_key(&conj, *cfg);
                    text.push_str(&format!("{conj_bucket}\tg|{}\n", key.serialize()));
                }
            }
        }
        fs::write(&map_path, text)?;
        println!("wrote index map to {}", map_path.display());
    }
    Ok(())
}

fn cmd_train(
    examples: PathBuf,
    model_type: ModelType,
    out: PathBuf,
    hash_base: u32,
    seed: u64,
) -> Result<()> {
    let records = read_examples(&examples)?;
    let (bank, parsed, space, data) = vectorized(&records, hash_base)?;
    let (tpr, tnr) = match model_type {
        ModelType::Linear => {
            let model = boost_balance(space, &data, &LinearParams::default())?;
            let rates = (model.meta.tpr, model.meta.tnr);
            model.save(&out)?;
            rates
        }
        ModelType::Trees => {
            let model = train_trees(space, &data, &TreeParams::default())?;
            let rates = (model.meta.tpr, model.meta.tnr);
            model.save(&out)?;
            rates
        }
        ModelType::Neural => {
            let model = train_neural(&bank, &parsed, &NeuralConfig::default(), seed)?;
            let rates = (model.meta.tpr, model.meta.tnr);
            model.save(&out)?;
            rates
        }
    };
    println!(
        "trained on {} examples: tpr {} tnr {}",
        data.len(),
        tpr.map_or("--".into(), |r| format!("{:.2}%", r * 100.0)),
        tnr.map_or("--".into(), |r| format!("{:.2}%", r * 100.0)),
    );
    println!("model written to {}", out.display());
    Ok(())
}

fn cmd_bench(
    plan_path: Option<PathBuf>,
    corpus: Option<PathBuf>,
    out: Option<PathBuf>,
    hash_base: Option<u32>,
) -> Result<()> {
    let mut plan: ExperimentPlan = match plan_path {
        Some(path) => serde_json::from_str(
            &fs::read_to_string(&path)
                .with_context(|| format!("reading plan from {}", path.display()))?,
        )?,
        None => ExperimentPlan::default(),
    };
    if let Some(dir) = corpus {
        plan.corpus_dir = dir;
    }
    if let Some(dir) = out {
        plan.out_dir = dir;
    }
    if let Some(base) = hash_base {
        plan.training_hash_base = base;
    }
    let outcome = run_experiment(&plan, |line| println!("{line}"))?;
    print!("{}", harness::render_outcome(&outcome));
    if !outcome.errors.is_empty() {
        bail!("{} problems failed to run", outcome.errors.len());
    }
    Ok(())
}

fn cmd_hash_sweep(
    examples: PathBuf,
    bases: Vec<u32>,
    corpus: Option<PathBuf>,
    strategy: String,
    max_processed: u64,
    max_generated: u64,
    out: Option<PathBuf>,
) -> Result<()> {
    if bases.is_empty() {
        bail!("no bases given");
    }
    let records = read_examples(&examples)?;
    let mut bank = TermBank::new();
    let parsed = parse_records(&records, &mut bank)?;

    let problems = match &corpus {
        Some(dir) => Some(load_corpus(dir)?),
        None => None,
    };
    let baseline = Strategy::parse(&strategy)?;
    let limits = Limits { max_processed, max_generated, max_seconds: None };
    let atp = problems.as_ref().map(|problems| AtpEval {
        problems,
        baseline: &baseline,
        limits,
    });
    let sweep = hash_sweep(
        &bank,
        &parsed,
        &bases,
        Some(&LinearParams::default()),
        Some(&TreeParams::default()),
        atp.as_ref(),
    )?;
    print!("{}", render_sweep(&sweep));
    if let Some(path) = out {
        fs::write(&path, serde_json::to_string_pretty(&sweep)?)?;
        println!("table written to {}", path.display());
    }
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Solve {
            problem,
            strategy,
            model,
            mode,
            max_processed,
            max_generated,
            timeout,
            report,
            examples,
        } => cmd_solve(
            problem,
            strategy,
            model,
            mode,
            max_processed,
            max_generated,
            timeout,
            report,
            examples,
        ),
        Command::Extract { examples, out, map, hash_base } => {
            cmd_extract(examples, out, map, hash_base)
        }
        Command::Train { examples, model_type, out, hash_base, seed } => {
            cmd_train(examples, model_type, out, hash_base, seed)
        }
        Command::Bench { plan, corpus, out, hash_base } => {
            cmd_bench(plan, corpus, out, hash_base)
        }
        Command::HashSweep {
            examples,
            bases,
            corpus,
            strategy,
            max_processed,
            max_generated,
            out,
        } => cmd_hash_sweep(examples, bases, corpus, strategy, max_processed, max_generated, out),
        Command::GenCorpus { out, seed } => {
            let spec = CorpusSpec { seed, ..Default::default() };
            let problems = generate_corpus(&spec);
            write_corpus(&out, &problems)?;
            println!("wrote {} problems to {}", problems.len(), out.display());
            Ok(())
        }
    }
}
